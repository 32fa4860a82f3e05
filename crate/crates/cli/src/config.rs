//! Experiment configuration: a TOML file, optionally patched with dotted
//! `key=value` overrides, resolved into core objects.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use heteroclinic::{
    exponential_gap, gaussian_gap, make_class1, make_class2, well_profile, CoefficientField,
    CrossSection, CylinderGrid, Potential, Seed, SolveConfig, StepRule,
};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::output;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
#[value(rename_all = "kebab-case")]
pub enum ExperimentKind {
    Validate,
    Minimize,
    CompareLevels,
    SweepEps,
    Beta,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::Validate => "validate",
            Self::Minimize => "minimize",
            Self::CompareLevels => "compare-levels",
            Self::SweepEps => "sweep-eps",
            Self::Beta => "beta",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Optional; when present it must match the subcommand.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ExperimentKind>,
    #[serde(default)]
    pub potential: PotentialSpec,
    pub coefficient: CoefficientSpec,
    pub grid: GridSpec,
    #[serde(default)]
    pub solve: SolveSpec,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default)]
    pub beta: BetaSpec,
    #[serde(default)]
    pub checks: CheckSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_tau() -> f64 {
    0.1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSpec {
    /// Only `ginzburg_landau` is built in: `V(t) = scale (t² - 1)²`.
    #[serde(default = "default_potential")]
    pub name: String,
    #[serde(default = "one")]
    pub scale: f64,
    /// Samples used by `validate`.
    #[serde(default = "default_samples")]
    pub samples: usize,
}

fn default_potential() -> String {
    "ginzburg_landau".into()
}

fn default_samples() -> usize {
    2001
}

fn one() -> f64 {
    1.0
}

impl Default for PotentialSpec {
    fn default() -> Self {
        Self {
            name: default_potential(),
            scale: 1.0,
            samples: default_samples(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapKind {
    /// `amplitude exp(-(x / width)²)`
    Gaussian,
    /// `amplitude exp(-sqrt(1 + x²) / width)`
    Exponential,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case", deny_unknown_fields)]
pub enum CoefficientSpec {
    Constant {
        value: f64,
    },
    /// `a + b cos(2πx)`.
    Cosine {
        a: f64,
        b: f64,
    },
    /// `a + b cos(2πx) - gap(x)`.
    Class1 {
        a: f64,
        b: f64,
        gap: GapKind,
        amplitude: f64,
        width: f64,
    },
    /// Profile `a_inf - depth exp(-(x / width)²)` evaluated at `εx`.
    Class2 {
        a_inf: f64,
        depth: f64,
        width: f64,
        #[serde(default = "one")]
        epsilon: f64,
        #[serde(default)]
        eps_list: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub half_length: i64,
    pub h_x: f64,
    #[serde(default = "default_extents")]
    pub extents: Vec<f64>,
    #[serde(default = "default_nodes")]
    pub nodes: Vec<usize>,
}

fn default_extents() -> Vec<f64> {
    vec![1.0]
}

fn default_nodes() -> Vec<usize> {
    vec![3]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRuleSpec {
    BacktrackingArmijo,
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SeedSpec {
    Phi {
        #[serde(default)]
        j: i64,
    },
    /// The `u` column of a field CSV on the same grid; relative paths are
    /// taken from the config file's directory.
    Field { path: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolveSpec {
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    pub energy_stall_tolerance: f64,
    pub step_rule: StepRuleSpec,
    /// Step multiplier for `step_rule = "fixed"`.
    pub step: f64,
    pub history: usize,
    pub seed: SeedSpec,
}

impl Default for SolveSpec {
    fn default() -> Self {
        let d = SolveConfig::default();
        Self {
            max_iterations: d.max_iterations,
            gradient_tolerance: d.gradient_tolerance,
            energy_stall_tolerance: d.energy_stall_tolerance,
            step_rule: StepRuleSpec::BacktrackingArmijo,
            step: 1.0,
            history: d.history,
            seed: SeedSpec::Phi { j: 0 },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BetaSpec {
    pub max_iterations: usize,
    pub relative_tolerance: f64,
    pub stall_window: usize,
}

impl Default for BetaSpec {
    fn default() -> Self {
        let d = heteroclinic::BetaConfig::default();
        Self {
            max_iterations: d.max_iterations,
            relative_tolerance: d.relative_tolerance,
            stall_window: d.stall_window,
        }
    }
}

/// Tolerances of the inequalities asserted by the runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CheckSpec {
    /// Relative distance to `(4/3) sqrt(2A) |D|` for constant-coefficient levels.
    pub closed_form_rel_tol: f64,
    pub equipartition_tol: f64,
    /// Lower bound for the Class 1 cross-evaluation gap.
    pub min_gap: f64,
}

impl Default for CheckSpec {
    fn default() -> Self {
        Self {
            closed_form_rel_tol: 0.005,
            equipartition_tol: 0.01,
            min_gap: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub fields: bool,
    pub gzip: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            fields: true,
            gzip: false,
        }
    }
}

/// Reads `path`, applies `overrides` (`a.b.c=value`) and validates.
pub fn load(path: &Path, overrides: &[String]) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut cfg = parse(&text, overrides)?;
    if let SeedSpec::Field { path: seed } = &mut cfg.solve.seed {
        if seed.is_relative() {
            if let Some(dir) = path.parent() {
                *seed = dir.join(&*seed);
            }
        }
    }
    Ok(cfg)
}

pub fn parse(text: &str, overrides: &[String]) -> Result<ExperimentConfig, CliError> {
    let cfg: ExperimentConfig =
        toml::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
    let cfg = if overrides.is_empty() {
        cfg
    } else {
        // overrides act on the fully defaulted config, so every key is present
        let mut value = toml::Value::try_from(&cfg)
            .map_err(|e| CliError::Config(format!("cannot serialize config: {e}")))?;
        for o in overrides {
            apply_override(&mut value, o)?;
        }
        value
            .try_into()
            .map_err(|e| CliError::Config(format!("invalid config after overrides: {e}")))?
    };
    cfg.validate()?;
    Ok(cfg)
}

fn apply_override(root: &mut toml::Value, spec: &str) -> Result<(), CliError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override `{spec}` is not key=value")))?;
    let key = key.trim();
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let table = node.as_table_mut().ok_or_else(|| {
            CliError::Config(format!(
                "override key `{key}`: `{}` is not a table",
                parts[..i].join(".")
            ))
        })?;
        node = table
            .get_mut(*part)
            .ok_or_else(|| CliError::Config(format!("unknown override key `{key}`")))?;
    }
    *node = parse_value(raw.trim());
    Ok(())
}

/// A TOML literal if it parses as one, otherwise a bare string.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        if self.solve.max_iterations < 1 {
            return Err(CliError::Config(
                "solve.max_iterations must be at least 1".into(),
            ));
        }
        self.solve_config_unseeded()?
            .validate()
            .map_err(|e| CliError::Config(format!("solve: {e}")))?;
        self.build_grid()?;
        self.build_potential()?;
        self.build_coefficient()?;
        if !(self.tau > 0.0) {
            return Err(CliError::Config(format!(
                "tau must be positive, got {}",
                self.tau
            )));
        }
        if let CoefficientSpec::Class2 { eps_list, .. } = &self.coefficient {
            if eps_list.windows(2).any(|w| !(w[0] > w[1])) || eps_list.iter().any(|e| !(*e > 0.0)) {
                return Err(CliError::Config(
                    "coefficient.eps_list must be positive and strictly descending".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn build_grid(&self) -> Result<Arc<CylinderGrid>, CliError> {
        let g = &self.grid;
        let cross = CrossSection::new(g.extents.clone(), g.nodes.clone())
            .map_err(|e| CliError::Config(format!("grid: {e}")))?;
        let grid = CylinderGrid::new(g.half_length, g.h_x, cross)
            .map_err(|e| CliError::Config(format!("grid: {e}")))?;
        Ok(Arc::new(grid))
    }

    pub fn build_potential(&self) -> Result<Potential, CliError> {
        let p = &self.potential;
        if p.name != "ginzburg_landau" {
            return Err(CliError::Config(format!(
                "potential.name: unknown potential `{}` (known: ginzburg_landau)",
                p.name
            )));
        }
        if !(p.scale.is_finite() && p.scale > 0.0) {
            return Err(CliError::Config(format!(
                "potential.scale must be positive, got {}",
                p.scale
            )));
        }
        if p.scale == 1.0 {
            return Ok(Potential::ginzburg_landau());
        }
        let s = p.scale;
        Ok(Potential::new(
            format!("ginzburg_landau(scale={s})"),
            move |t| s * (t * t - 1.0).powi(2),
            move |t| 4.0 * s * t * (t * t - 1.0),
        ))
    }

    pub fn build_coefficient(&self) -> Result<CoefficientField, CliError> {
        let cross = CrossSection::new(self.grid.extents.clone(), self.grid.nodes.clone())
            .map_err(|e| CliError::Config(format!("grid: {e}")))?;
        let field = match &self.coefficient {
            CoefficientSpec::Constant { value } => CoefficientField::constant(*value),
            CoefficientSpec::Cosine { a, b } => CoefficientField::cosine(*a, *b),
            CoefficientSpec::Class1 {
                a,
                b,
                gap,
                amplitude,
                width,
            } => {
                if !(*width > 0.0) {
                    return Err(CliError::Config(format!(
                        "coefficient.width must be positive, got {width}"
                    )));
                }
                let ap = CoefficientField::cosine(*a, *b).map_err(coefficient_error)?;
                match gap {
                    GapKind::Gaussian => make_class1(&ap, gaussian_gap(*amplitude, *width), &cross),
                    GapKind::Exponential => {
                        make_class1(&ap, exponential_gap(*amplitude, 1.0 / width), &cross)
                    }
                }
            }
            CoefficientSpec::Class2 {
                a_inf,
                depth,
                width,
                epsilon,
                ..
            } => {
                if !(*width > 0.0) {
                    return Err(CliError::Config(format!(
                        "coefficient.width must be positive, got {width}"
                    )));
                }
                make_class2(well_profile(*a_inf, *depth, *width), *epsilon, &cross)
            }
        };
        field.map_err(coefficient_error)
    }

    pub fn eps_list(&self) -> &[f64] {
        match &self.coefficient {
            CoefficientSpec::Class2 { eps_list, .. } => eps_list,
            _ => &[],
        }
    }

    fn solve_config_unseeded(&self) -> Result<SolveConfig, CliError> {
        let s = &self.solve;
        Ok(SolveConfig {
            max_iterations: s.max_iterations,
            gradient_tolerance: s.gradient_tolerance,
            energy_stall_tolerance: s.energy_stall_tolerance,
            step_rule: match s.step_rule {
                StepRuleSpec::BacktrackingArmijo => StepRule::BacktrackingArmijo,
                StepRuleSpec::Fixed => StepRule::Fixed { step: s.step },
            },
            history: s.history,
            seed: Seed::Phi(0),
        })
    }

    /// Solver settings with the seed resolved on `grid`.
    pub fn solve_config(&self, grid: &Arc<CylinderGrid>) -> Result<SolveConfig, CliError> {
        let mut cfg = self.solve_config_unseeded()?;
        cfg.seed = match &self.solve.seed {
            SeedSpec::Phi { j } => Seed::Phi(*j),
            SeedSpec::Field { path } => Seed::Field(output::read_field(path, grid)?),
        };
        Ok(cfg)
    }

    pub fn beta_config(&self) -> heteroclinic::BetaConfig {
        heteroclinic::BetaConfig {
            max_iterations: self.beta.max_iterations,
            relative_tolerance: self.beta.relative_tolerance,
            stall_window: self.beta.stall_window,
        }
    }
}

fn coefficient_error(e: heteroclinic::Error) -> CliError {
    CliError::Config(format!("coefficient: {e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[coefficient]
class = "constant"
value = 0.5

[grid]
half_length = 5
h_x = 0.1
"#;

    #[test]
    fn defaults_fill_the_config() {
        let cfg = parse(MINIMAL, &[]).unwrap();
        assert_eq!(cfg.solve, SolveSpec::default());
        assert_eq!(cfg.grid.nodes, vec![3]);
        assert_eq!(cfg.tau, 0.1);
        assert_eq!(cfg.potential.name, "ginzburg_landau");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = format!("{MINIMAL}\n[solve]\nmax_iteration = 3\n");
        let err = parse(&text, &[]).unwrap_err().to_string();
        assert!(err.contains("max_iteration"), "{err}");
    }

    #[test]
    fn overrides_patch_nested_keys() {
        let cfg = parse(
            MINIMAL,
            &[
                "grid.h_x=0.05".into(),
                "tau=0.2".into(),
                "solve.seed.j=-1".into(),
            ],
        )
        .unwrap();
        assert_eq!(cfg.grid.h_x, 0.05);
        assert_eq!(cfg.tau, 0.2);
        assert_eq!(cfg.solve.seed, SeedSpec::Phi { j: -1 });
        let cfg = parse(MINIMAL, &["output.dir=results/run 1".into()]).unwrap();
        assert_eq!(cfg.output.dir, PathBuf::from("results/run 1"));
    }

    #[test]
    fn bad_overrides_are_config_errors() {
        for o in ["grid.hx=0.05", "nokey=1", "grid.h_x", "tau.x=1"] {
            assert!(
                matches!(parse(MINIMAL, &[o.into()]), Err(CliError::Config(_))),
                "{o}"
            );
        }
    }

    #[test]
    fn grid_constraints_are_checked_at_parse_time() {
        assert!(parse(MINIMAL, &["grid.h_x=0.3".into()]).is_err());
        assert!(parse(MINIMAL, &["solve.max_iterations=0".into()]).is_err());
        assert!(parse(MINIMAL, &["grid.half_length=2.5".into()]).is_err());
    }

    #[test]
    fn class2_list_must_descend() {
        let text = r#"
[coefficient]
class = "class2"
a_inf = 2.0
depth = 1.0
width = 1.0
eps_list = [0.1, 0.5]

[grid]
half_length = 5
h_x = 0.1
"#;
        assert!(parse(text, &[]).is_err());
        let cfg = parse(text, &["coefficient.eps_list=[1.0, 0.5]".into()]).unwrap();
        assert_eq!(cfg.eps_list(), &[1.0, 0.5]);
    }
}
