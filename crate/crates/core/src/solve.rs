//! Minimization of the discrete renormalized energy with clamped ends
//! (`u = 1` on `x = -T`, `u = -1` on `x = T`) and estimation of the
//! minimization levels for the different coefficient classes.

use std::sync::Arc;

use serde::Serialize;

use crate::energy::{pde_residual, EnergyBreakdown, Functional};
use crate::error::{Error, Result};
use crate::gamma::{clip, seed_phi, tail_norms, GammaCheck, TailProfile};
use crate::grid::{CylinderGrid, Field, GridFunction};
use crate::model::{sample_on_grid, ClassTag, CoefficientField, Potential};
use crate::optimize::{self, BoxConstraints, DescentSettings, Objective};

pub use crate::optimize::{StepRule, StopReason};

/// Initial field for a minimization.
#[derive(Debug, Clone, PartialEq)]
pub enum Seed {
    /// The affine seed with its transition on slab `(j, j + 1)`.
    Phi(i64),
    /// A user field on the solve grid; clipped and clamped before use.
    Field(Field),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    pub max_iterations: usize,
    /// Max-norm of the projected gradient of the discrete energy.
    pub gradient_tolerance: f64,
    /// Relative energy change per iteration treated as a stall.
    pub energy_stall_tolerance: f64,
    pub step_rule: StepRule,
    /// Number of stored correction pairs; 0 is plain projected descent.
    pub history: usize,
    pub seed: Seed,
}

impl Default for SolveConfig {
    fn default() -> Self {
        Self {
            max_iterations: 20_000,
            gradient_tolerance: 1e-9,
            energy_stall_tolerance: 1e-15,
            step_rule: StepRule::BacktrackingArmijo,
            history: 10,
            seed: Seed::Phi(0),
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gradient_tolerance > 0.0 && self.energy_stall_tolerance > 0.0) {
            return Err(Error::InvalidParameter(
                "solver tolerances must be positive".into(),
            ));
        }
        if let StepRule::Fixed { step } = self.step_rule {
            if !(step > 0.0 && step.is_finite()) {
                return Err(Error::InvalidParameter(format!(
                    "fixed step must be positive, got {step}"
                )));
            }
        }
        Ok(())
    }

    fn settings(&self) -> DescentSettings {
        DescentSettings {
            memory: self.history,
            max_iterations: self.max_iterations,
            gradient_tolerance: self.gradient_tolerance,
            stall_tolerance: self.energy_stall_tolerance,
            step_rule: self.step_rule,
            ..DescentSettings::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub energy: f64,
    pub gradient_norm: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    #[serde(skip)]
    pub minimizer: Field,
    /// Discrete `J` at the minimizer: an upper bound for the level.
    pub theta_estimate: f64,
    pub seed_energy: f64,
    pub breakdown: EnergyBreakdown,
    pub iterations: usize,
    pub projected_gradient_norm: f64,
    pub residual_max: f64,
    pub residual_l2: f64,
    pub tails: Vec<TailProfile>,
    pub equipartition_ratio: f64,
    /// `x` where the cross-sectional mean of the minimizer changes sign.
    pub zero_crossing: Option<f64>,
    pub zero_crossing_slab: Option<i64>,
    pub gamma: GammaCheck,
    pub converged: bool,
    pub stop: StopReason,
    pub energy_monotone: bool,
    #[serde(skip)]
    pub trace: Vec<TraceEntry>,
}

impl SolveReport {
    /// Whether the left tail norms are nondecreasing and the right tail
    /// norms nonincreasing in `k`, up to `slack`.
    pub fn tails_monotone(&self, slack: f64) -> bool {
        self.tails.windows(2).all(|w| {
            w[1].left_norm + slack >= w[0].left_norm && w[1].right_norm <= w[0].right_norm + slack
        })
    }
}

struct EnergyObjective<'a> {
    functional: Functional<'a>,
}

impl Objective for EnergyObjective<'_> {
    fn value(&mut self, x: &[f64]) -> f64 {
        self.functional.value(x)
    }

    fn value_and_gradient(&mut self, x: &[f64], grad: &mut [f64]) -> f64 {
        self.functional.value_and_gradient(x, true, grad)
    }

    fn change(&mut self, x: &[f64], y: &[f64]) -> f64 {
        self.functional.change(x, y)
    }
}

fn clamp_ends(grid: &CylinderGrid, values: &mut [f64]) {
    let nc = grid.cross_count();
    let n = values.len();
    values[..nc].fill(1.0);
    values[n - nc..].fill(-1.0);
}

fn seed_field(seed: &Seed, grid: &Arc<CylinderGrid>) -> Result<Field> {
    let mut f = match seed {
        Seed::Phi(j) => seed_phi(*j, grid)?,
        Seed::Field(f) => {
            if **f.grid() != **grid {
                return Err(Error::GridMismatch);
            }
            clip(f)
        }
    };
    clamp_ends(grid, f.values_mut());
    Ok(f)
}

fn zero_crossing(u: &Field) -> Option<f64> {
    let grid = u.grid();
    let nc = grid.cross_count();
    let w = grid.cross_weights();
    let measure: f64 = w.iter().sum();
    let mean = |i: usize| -> f64 {
        u.values()[i * nc..(i + 1) * nc]
            .iter()
            .zip(w)
            .map(|(v, w)| v * w)
            .sum::<f64>()
            / measure
    };
    let x = grid.x();
    let mut prev = mean(0);
    for i in 1..grid.axial_count() {
        let cur = mean(i);
        if prev > 0.0 && cur <= 0.0 {
            let s = prev / (prev - cur);
            return Some(x[i - 1] + s * (x[i] - x[i - 1]));
        }
        prev = cur;
    }
    None
}

/// Minimizes the discrete energy for the sampled coefficient `a`.
pub fn minimize_sampled(a: &GridFunction, v: &Potential, cfg: &SolveConfig) -> Result<SolveReport> {
    cfg.validate()?;
    let grid = a.grid().clone();
    let seed = seed_field(&cfg.seed, &grid)?;
    let functional = Functional::lagrangian(&grid, a.values(), v);
    let seed_energy = functional.value(seed.values());
    if !seed_energy.is_finite() {
        return Err(Error::NonFiniteSeed);
    }

    let nc = grid.cross_count();
    let n = grid.len();
    let mut fixed = vec![false; n];
    fixed[..nc].fill(true);
    fixed[n - nc..].fill(true);
    let metric = functional.axial_metric();
    let bounds = BoxConstraints {
        lower: -1.0,
        upper: 1.0,
        fixed: &fixed,
        metric: &metric,
    };
    let mut objective = EnergyObjective { functional };
    let out = optimize::minimize_box(&mut objective, seed.into_values(), &bounds, &cfg.settings());

    let breakdown = objective.functional.breakdown(&out.x);
    let minimizer = Field::new(grid.clone(), out.x)?;
    let residual = pde_residual(&minimizer, a, v)?;
    let trace: Vec<TraceEntry> = out
        .trace
        .iter()
        .map(|(iteration, energy, gradient_norm)| TraceEntry {
            iteration: *iteration,
            energy: *energy,
            gradient_norm: *gradient_norm,
        })
        .collect();
    let energy_monotone = trace.windows(2).all(|w| w[1].energy <= w[0].energy);
    let zc = zero_crossing(&minimizer);
    Ok(SolveReport {
        theta_estimate: breakdown.total,
        seed_energy,
        equipartition_ratio: breakdown.equipartition_ratio(),
        breakdown,
        iterations: out.iterations,
        projected_gradient_norm: out.projected_gradient_norm,
        residual_max: residual.max_norm,
        residual_l2: residual.l2_norm,
        tails: tail_norms(&minimizer),
        zero_crossing: zc,
        zero_crossing_slab: zc.map(|x| x.floor() as i64),
        gamma: GammaCheck::evaluate(&minimizer, 1e-6),
        converged: out.stop == StopReason::GradientTolerance,
        stop: out.stop,
        energy_monotone,
        trace,
        minimizer,
    })
}

/// Minimizes the energy for coefficient `a` (sampled as `A(εx, y)`) over
/// clipped fields with clamped ends.
pub fn minimize(
    a: &CoefficientField,
    v: &Potential,
    grid: &Arc<CylinderGrid>,
    cfg: &SolveConfig,
) -> Result<SolveReport> {
    minimize_sampled(&sample_on_grid(a, grid), v, cfg)
}

/// One named minimization problem of a level table.
#[derive(Debug, Clone)]
pub struct LevelProblem {
    pub label: String,
    pub coefficient: CoefficientField,
}

impl LevelProblem {
    pub fn new(label: impl Into<String>, coefficient: CoefficientField) -> Self {
        Self {
            label: label.into(),
            coefficient,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelRow {
    pub label: String,
    pub theta: f64,
    pub converged: bool,
    pub iterations: usize,
    pub projected_gradient_norm: f64,
    pub zero_crossing: Option<f64>,
    #[serde(skip)]
    pub report: SolveReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelTable {
    pub rows: Vec<LevelRow>,
}

impl LevelTable {
    pub fn get(&self, label: &str) -> Option<&LevelRow> {
        self.rows.iter().find(|r| r.label == label)
    }

    pub fn all_converged(&self) -> bool {
        self.rows.iter().all(|r| r.converged)
    }
}

fn level_row(label: &str, report: SolveReport) -> LevelRow {
    LevelRow {
        label: label.into(),
        theta: report.theta_estimate,
        converged: report.converged,
        iterations: report.iterations,
        projected_gradient_norm: report.projected_gradient_norm,
        zero_crossing: report.zero_crossing,
        report,
    }
}

/// Minimizes every problem on the same grid, potential, solver settings and
/// seed policy, so the levels are comparable.
pub fn estimate_levels(
    problems: &[LevelProblem],
    v: &Potential,
    grid: &Arc<CylinderGrid>,
    cfg: &SolveConfig,
) -> Result<LevelTable> {
    if let Seed::Field(f) = &cfg.seed {
        if **f.grid() != **grid {
            return Err(Error::GridMismatch);
        }
    }
    let rows = problems
        .iter()
        .map(|p| Ok(level_row(&p.label, minimize(&p.coefficient, v, grid, cfg)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(LevelTable { rows })
}

/// Energy of `u` for another sampled coefficient.
fn energy_with(u: &Field, a: &GridFunction, v: &Potential) -> f64 {
    Functional::lagrangian(u.grid(), a.values(), v).value(u.values())
}

/// `Σ w (A_hi - A_lo) V(u)`: the exact difference `J_hi(u) - J_lo(u)`.
fn weighted_gap(u: &Field, lo: &GridFunction, hi: &GridFunction, v: &Potential) -> f64 {
    u.grid()
        .node_weights()
        .iter()
        .zip(u.values())
        .zip(lo.values().iter().zip(hi.values()))
        .map(|((w, u), (lo, hi))| w * (hi - lo) * v.eval(*u))
        .sum()
}

/// Levels for a Class 1 field and its periodic companion, with the
/// cross-evaluations of each minimizer in the other functional.
#[derive(Debug, Clone, Serialize)]
pub struct Class1Comparison {
    pub levels: LevelTable,
    /// `Θ*` for `A`.
    pub theta: f64,
    /// `Θ_p*` for `A_p`.
    pub theta_periodic: f64,
    /// `J_A(U_p*)`.
    pub j_a_of_periodic_minimizer: f64,
    /// `J_{A_p}(U_p*)` (equals `theta_periodic`).
    pub j_ap_of_periodic_minimizer: f64,
    /// `J_A(U*)`.
    pub j_a_of_minimizer: f64,
    /// `J_{A_p}(U*)`.
    pub j_ap_of_minimizer: f64,
    /// `∫ (A_p - A) V(U_p*)`.
    pub gap: f64,
    /// Which seed produced `theta`: the configured seed or `U_p*`.
    pub theta_seed: String,
    pub level_inequality: bool,
    pub cross_bound: bool,
    pub monotonicity_exact: bool,
}

/// Estimates `Θ*(A) < Θ_p*(A_p)` for a Class 1 field.
///
/// `Θ*` is taken as the better of the run from the configured seed and the
/// run warm-started from the periodic minimizer, so it never exceeds
/// `J_A(U_p*)`.
pub fn compare_class1(
    a: &CoefficientField,
    v: &Potential,
    grid: &Arc<CylinderGrid>,
    cfg: &SolveConfig,
) -> Result<Class1Comparison> {
    if a.tag() != ClassTag::Class1 {
        return Err(Error::InvalidCoefficient("expected a Class 1 field".into()));
    }
    let ap = a.companion().expect("Class 1 carries A_p");
    let a_s = sample_on_grid(a, grid);
    let ap_s = sample_on_grid(ap, grid);

    let periodic = minimize_sampled(&ap_s, v, cfg)?;
    let from_seed = minimize_sampled(&a_s, v, cfg)?;
    let warm_cfg = SolveConfig {
        seed: Seed::Field(periodic.minimizer.clone()),
        ..cfg.clone()
    };
    let from_periodic = minimize_sampled(&a_s, v, &warm_cfg)?;
    let (best, theta_seed) = if from_periodic.theta_estimate < from_seed.theta_estimate {
        (from_periodic, "periodic_minimizer")
    } else {
        (from_seed, "configured")
    };

    let up = &periodic.minimizer;
    let u = &best.minimizer;
    let j_a_up = energy_with(up, &a_s, v);
    let j_ap_up = energy_with(up, &ap_s, v);
    let j_a_u = energy_with(u, &a_s, v);
    let j_ap_u = energy_with(u, &ap_s, v);
    let gap = weighted_gap(up, &a_s, &ap_s, v);
    let theta = best.theta_estimate;
    let theta_periodic = periodic.theta_estimate;
    Ok(Class1Comparison {
        theta,
        theta_periodic,
        j_a_of_periodic_minimizer: j_a_up,
        j_ap_of_periodic_minimizer: j_ap_up,
        j_a_of_minimizer: j_a_u,
        j_ap_of_minimizer: j_ap_u,
        gap,
        theta_seed: theta_seed.into(),
        level_inequality: theta < theta_periodic,
        cross_bound: j_a_up < j_ap_up,
        monotonicity_exact: j_a_up <= j_ap_up && j_a_u <= j_ap_u,
        levels: LevelTable {
            rows: vec![level_row("theta_p", periodic), level_row("theta", best)],
        },
    })
}

/// `Θ_ε`, `Θ₀` and `Θ_∞` for a Class 2 field at its current `ε`.
#[derive(Debug, Clone, Serialize)]
pub struct Class2Comparison {
    pub levels: LevelTable,
    pub epsilon: f64,
    pub theta_eps: f64,
    pub theta_zero: f64,
    pub theta_inf: f64,
    /// `J_ε(W₀)` with `W₀` the frozen-coefficient minimizer.
    pub j_eps_w0: f64,
    pub zero_below_inf: bool,
    pub eps_bounded_by_w0: bool,
    pub eps_below_inf: bool,
}

pub fn compare_class2(
    a: &CoefficientField,
    v: &Potential,
    grid: &Arc<CylinderGrid>,
    cfg: &SolveConfig,
) -> Result<Class2Comparison> {
    let refs = class2_references(a, v, grid, cfg)?;
    let a_s = sample_on_grid(a, grid);
    let j_eps_w0 = energy_with(&refs.zero.minimizer, &a_s, v);
    let (report, _) = warm_solve(&a_s, v, cfg, &refs.zero.minimizer, None)?;
    let theta_eps = report.theta_estimate;
    let (theta_zero, theta_inf) = (refs.zero.theta_estimate, refs.inf.theta_estimate);
    Ok(Class2Comparison {
        epsilon: a.epsilon(),
        theta_eps,
        theta_zero,
        theta_inf,
        j_eps_w0,
        zero_below_inf: theta_zero < theta_inf,
        eps_bounded_by_w0: theta_eps <= j_eps_w0,
        eps_below_inf: theta_eps < theta_inf,
        levels: LevelTable {
            rows: vec![
                level_row("theta_eps", report),
                level_row("theta_zero", refs.zero),
                level_row("theta_inf", refs.inf),
            ],
        },
    })
}

struct Class2References {
    zero: SolveReport,
    inf: SolveReport,
}

fn class2_references(
    a: &CoefficientField,
    v: &Potential,
    grid: &Arc<CylinderGrid>,
    cfg: &SolveConfig,
) -> Result<Class2References> {
    if a.tag() != ClassTag::Class2 {
        return Err(Error::InvalidCoefficient("expected a Class 2 field".into()));
    }
    let a_inf = a.a_infinity().expect("Class 2 carries A_inf");
    let zero = minimize(&a.with_epsilon(0.0)?, v, grid, cfg)?;
    let inf = minimize(&CoefficientField::constant(a_inf)?, v, grid, cfg)?;
    Ok(Class2References { zero, inf })
}

/// Solves from whichever of `w0` and `previous` has the lower energy for
/// `a`, so the result never exceeds the energy of either.
fn warm_solve(
    a: &GridFunction,
    v: &Potential,
    cfg: &SolveConfig,
    w0: &Field,
    previous: Option<&Field>,
) -> Result<(SolveReport, &'static str)> {
    let e_w0 = energy_with(w0, a, v);
    let (seed, label) = match previous {
        Some(p) if energy_with(p, a, v) <= e_w0 => (p.clone(), "previous"),
        _ => (w0.clone(), "w0"),
    };
    let cfg = SolveConfig {
        seed: Seed::Field(seed),
        ..cfg.clone()
    };
    Ok((minimize_sampled(a, v, &cfg)?, label))
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub epsilon: f64,
    pub theta: f64,
    /// `J_ε(W₀)`.
    pub j_eps_w0: f64,
    pub converged: bool,
    pub iterations: usize,
    pub projected_gradient_norm: f64,
    /// Seed actually used: `previous` (continuation) or `w0`.
    pub seed: String,
    pub below_theta_inf: bool,
    pub bounded_by_w0: bool,
    pub zero_crossing: Option<f64>,
    #[serde(skip)]
    pub report: SolveReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
    pub theta_zero: f64,
    pub theta_inf: f64,
    pub theta_zero_converged: bool,
    pub theta_inf_converged: bool,
    /// Largest listed `ε` with `Θ_ε < Θ_∞`.
    pub eps0_proxy: Option<f64>,
    #[serde(skip)]
    pub w0: Field,
    #[serde(skip)]
    pub zero_report: SolveReport,
    #[serde(skip)]
    pub inf_report: SolveReport,
}

impl SweepTable {
    pub fn all_converged(&self) -> bool {
        self.theta_zero_converged
            && self.theta_inf_converged
            && self.rows.iter().all(|r| r.converged)
    }
}

/// ε-continuation for a Class 2 field over a descending list, with `Θ₀`
/// and `Θ_∞` reference rows.
pub fn sweep_epsilon(
    a: &CoefficientField,
    v: &Potential,
    grid: &Arc<CylinderGrid>,
    cfg: &SolveConfig,
    eps_list: &[f64],
) -> Result<SweepTable> {
    if eps_list.windows(2).any(|w| !(w[0] > w[1])) {
        return Err(Error::InvalidParameter(
            "eps_list must be strictly descending".into(),
        ));
    }
    let refs = class2_references(a, v, grid, cfg)?;
    let w0 = refs.zero.minimizer.clone();
    let theta_inf = refs.inf.theta_estimate;

    let mut rows: Vec<SweepRow> = Vec::with_capacity(eps_list.len());
    for &eps in eps_list {
        let a_eps = sample_on_grid(&a.with_epsilon(eps)?, grid);
        let j_eps_w0 = energy_with(&w0, &a_eps, v);
        let previous = rows.last().map(|r| &r.report.minimizer);
        let (report, seed) = warm_solve(&a_eps, v, cfg, &w0, previous)?;
        rows.push(SweepRow {
            epsilon: eps,
            theta: report.theta_estimate,
            j_eps_w0,
            converged: report.converged,
            iterations: report.iterations,
            projected_gradient_norm: report.projected_gradient_norm,
            seed: seed.into(),
            below_theta_inf: report.theta_estimate < theta_inf,
            bounded_by_w0: report.theta_estimate <= j_eps_w0,
            zero_crossing: report.zero_crossing,
            report,
        });
    }
    let eps0_proxy = rows
        .iter()
        .filter(|r| r.below_theta_inf)
        .map(|r| r.epsilon)
        .fold(None, |m: Option<f64>, e| Some(m.map_or(e, |m| m.max(e))));
    Ok(SweepTable {
        rows,
        theta_zero: refs.zero.theta_estimate,
        theta_inf,
        theta_zero_converged: refs.zero.converged,
        theta_inf_converged: refs.inf.converged,
        eps0_proxy,
        w0,
        zero_report: refs.zero,
        inf_report: refs.inf,
    })
}
