//! The five experiments. Each writes its artifacts, then returns the result
//! payload, the asserted inequalities and whether every inner solve converged.

use std::sync::Arc;

use heteroclinic::{
    compare_class1, compare_class2, compute_beta, minimize_sampled, pde_residual, sample_on_grid,
    sweep_epsilon, validate_coefficient, validate_potential, ClassTag, CoefficientField,
    CylinderGrid, GridFunction, Potential, SolveConfig, SolveReport,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{CoefficientSpec, ExperimentConfig, ExperimentKind};
use crate::error::CliError;
use crate::output::Sink;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Assertion {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Assertion {
    fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

pub struct Outcome {
    pub result: Value,
    pub assertions: Vec<Assertion>,
    pub converged: bool,
}

struct Ctx<'a> {
    cfg: &'a ExperimentConfig,
    grid: Arc<CylinderGrid>,
    v: Potential,
    a: CoefficientField,
    sink: &'a mut Sink,
}

pub fn run(
    kind: ExperimentKind,
    cfg: &ExperimentConfig,
    sink: &mut Sink,
) -> Result<Outcome, CliError> {
    let mut ctx = Ctx {
        cfg,
        grid: cfg.build_grid()?,
        v: cfg.build_potential()?,
        a: cfg.build_coefficient()?,
        sink,
    };
    match kind {
        ExperimentKind::Validate => validate(&mut ctx),
        ExperimentKind::Minimize => minimize(&mut ctx),
        ExperimentKind::CompareLevels => compare_levels(&mut ctx),
        ExperimentKind::SweepEps => sweep(&mut ctx),
        ExperimentKind::Beta => beta(&mut ctx),
    }
}

fn to_value<T: Serialize>(t: &T) -> Value {
    serde_json::to_value(t).expect("report types serialize")
}

/// `(4/3) sqrt(2 A s) |D|` for `V = s (t² - 1)²`.
fn closed_form_level(cfg: &ExperimentConfig, grid: &CylinderGrid, a: f64) -> f64 {
    4.0 / 3.0 * (2.0 * a * cfg.potential.scale).sqrt() * grid.cross().measure()
}

fn closed_form_check(name: &str, theta: f64, exact: f64, tol: f64) -> Assertion {
    let rel = (theta - exact).abs() / exact;
    Assertion::new(
        name,
        rel <= tol,
        format!("theta = {theta}, closed form = {exact}, relative error = {rel:e} (tol {tol:e})"),
    )
}

/// Field and trace dumps of one solve.
fn dump(
    ctx: &mut Ctx<'_>,
    tag: &str,
    report: &SolveReport,
    a: &GridFunction,
) -> Result<(), CliError> {
    if !ctx.cfg.output.fields {
        return Ok(());
    }
    let residual = pde_residual(&report.minimizer, a, &ctx.v)?.residual;
    ctx.sink
        .field(&format!("field_{tag}.csv"), &report.minimizer, &residual, a)?;
    ctx.sink.trace(&format!("trace_{tag}.csv"), &report.trace)
}

/// Invariants every solve report must satisfy.
fn report_checks(tag: &str, r: &SolveReport, cfg: &SolveConfig, out: &mut Vec<Assertion>) {
    out.push(Assertion::new(
        &format!("{tag}.energy_monotone"),
        r.energy_monotone,
        format!("seed energy {} -> {}", r.seed_energy, r.theta_estimate),
    ));
    let nc = r.minimizer.grid().cross_count();
    let vals = r.minimizer.values();
    let clamped =
        vals[..nc].iter().all(|v| *v == 1.0) && vals[vals.len() - nc..].iter().all(|v| *v == -1.0);
    out.push(Assertion::new(
        &format!("{tag}.bounds_and_clamps"),
        r.minimizer.is_within_bounds() && clamped,
        "values in [-1, 1], u = 1 on x = -T and u = -1 on x = T",
    ));
    if r.converged {
        let w_min = r
            .minimizer
            .grid()
            .node_weights()
            .iter()
            .cloned()
            .fold(f64::INFINITY, f64::min);
        let bound = 10.0 * cfg.gradient_tolerance / w_min;
        out.push(Assertion::new(
            &format!("{tag}.residual_bound"),
            r.residual_max <= bound,
            format!("max residual {:e} <= {bound:e}", r.residual_max),
        ));
    }
}

fn validate(ctx: &mut Ctx<'_>) -> Result<Outcome, CliError> {
    let potential = validate_potential(&ctx.v, ctx.cfg.potential.samples)
        .map_err(|e| CliError::Config(format!("potential.samples: {e}")))?;
    let coefficient = validate_coefficient(&ctx.a, &ctx.grid);
    let mut assertions = Vec::new();
    for (scope, report) in [("potential", &potential), ("coefficient", &coefficient)] {
        for c in &report.checks {
            assertions.push(Assertion::new(
                &format!("{scope}.{}", c.name),
                c.passed,
                c.description.clone(),
            ));
        }
    }
    Ok(Outcome {
        result: json!({
            "potential": to_value(&potential),
            "coefficient": to_value(&coefficient),
            "a0": ctx.a.a0(),
            "a_infinity": ctx.a.a_infinity(),
            "class": to_value(&ctx.a.tag()),
        }),
        assertions,
        converged: true,
    })
}

fn minimize(ctx: &mut Ctx<'_>) -> Result<Outcome, CliError> {
    let solve_cfg = ctx.cfg.solve_config(&ctx.grid)?;
    let a = sample_on_grid(&ctx.a, &ctx.grid);
    let report = minimize_sampled(&a, &ctx.v, &solve_cfg)?;
    dump(ctx, "u", &report, &a)?;

    let mut assertions = Vec::new();
    report_checks("u", &report, &solve_cfg, &mut assertions);
    let mut result = to_value(&report);
    if let CoefficientSpec::Constant { value } = ctx.cfg.coefficient {
        let exact = closed_form_level(ctx.cfg, &ctx.grid, value);
        let checks = &ctx.cfg.checks;
        assertions.push(closed_form_check(
            "closed_form_level",
            report.theta_estimate,
            exact,
            checks.closed_form_rel_tol,
        ));
        let eq = report.equipartition_ratio;
        assertions.push(Assertion::new(
            "equipartition",
            (eq - 1.0).abs() <= checks.equipartition_tol,
            format!(
                "dirichlet/potential = {eq} (tol {:e})",
                checks.equipartition_tol
            ),
        ));
        let deviation = report.zero_crossing.map(|c| {
            let k = (2.0 * value * ctx.cfg.potential.scale).sqrt();
            let x = ctx.grid.x();
            let nc = ctx.grid.cross_count();
            report
                .minimizer
                .values()
                .iter()
                .enumerate()
                .map(|(idx, u)| (u + (k * (x[idx / nc] - c)).tanh()).abs())
                .fold(0.0, f64::max)
        });
        result["closed_form_level"] = json!(exact);
        result["tanh_profile_max_deviation"] = json!(deviation);
    }
    Ok(Outcome {
        result,
        assertions,
        converged: report.converged,
    })
}

fn compare_levels(ctx: &mut Ctx<'_>) -> Result<Outcome, CliError> {
    let solve_cfg = ctx.cfg.solve_config(&ctx.grid)?;
    let checks = ctx.cfg.checks.clone();
    let mut assertions = Vec::new();
    match ctx.a.tag() {
        ClassTag::Class1 => {
            let c = compare_class1(&ctx.a, &ctx.v, &ctx.grid, &solve_cfg)?;
            let a_s = sample_on_grid(&ctx.a, &ctx.grid);
            let ap_s = sample_on_grid(ctx.a.companion().expect("class 1"), &ctx.grid);
            for (row, a) in c.levels.rows.iter().zip([&ap_s, &a_s]) {
                report_checks(&row.label, &row.report, &solve_cfg, &mut assertions);
                dump(ctx, &row.label, &row.report, a)?;
            }
            assertions.push(Assertion::new(
                "level_inequality",
                c.level_inequality,
                format!("theta = {} < theta_p = {}", c.theta, c.theta_periodic),
            ));
            assertions.push(Assertion::new(
                "cross_bound",
                c.cross_bound,
                format!(
                    "J_A(U_p) = {} < J_Ap(U_p) = {}",
                    c.j_a_of_periodic_minimizer, c.j_ap_of_periodic_minimizer
                ),
            ));
            assertions.push(Assertion::new(
                "monotonicity_exact",
                c.monotonicity_exact,
                "J_A(U) <= J_Ap(U) at both minimizers",
            ));
            assertions.push(Assertion::new(
                "gap",
                c.gap > checks.min_gap,
                format!("gap = {:e} > {:e}", c.gap, checks.min_gap),
            ));
            Ok(Outcome {
                converged: c.levels.all_converged(),
                result: to_value(&c),
                assertions,
            })
        }
        ClassTag::Class2 => {
            let c = compare_class2(&ctx.a, &ctx.v, &ctx.grid, &solve_cfg)?;
            let samples = [
                sample_on_grid(&ctx.a, &ctx.grid),
                sample_on_grid(&ctx.a.with_epsilon(0.0)?, &ctx.grid),
                sample_on_grid(
                    &CoefficientField::constant(ctx.a.a_infinity().expect("class 2"))?,
                    &ctx.grid,
                ),
            ];
            for (row, a) in c.levels.rows.iter().zip(&samples) {
                report_checks(&row.label, &row.report, &solve_cfg, &mut assertions);
                dump(ctx, &row.label, &row.report, a)?;
            }
            class2_reference_checks(ctx, c.theta_zero, c.theta_inf, &mut assertions);
            assertions.push(Assertion::new(
                "eps_bounded_by_w0",
                c.eps_bounded_by_w0,
                format!("theta_eps = {} <= J_eps(W0) = {}", c.theta_eps, c.j_eps_w0),
            ));
            Ok(Outcome {
                converged: c.levels.all_converged(),
                result: to_value(&c),
                assertions,
            })
        }
        ClassTag::Periodic => Err(CliError::Config(
            "compare-levels needs a class1 or class2 coefficient".into(),
        )),
    }
}

fn class2_reference_checks(
    ctx: &Ctx<'_>,
    theta_zero: f64,
    theta_inf: f64,
    out: &mut Vec<Assertion>,
) {
    let tol = ctx.cfg.checks.closed_form_rel_tol;
    out.push(Assertion::new(
        "zero_below_inf",
        theta_zero < theta_inf,
        format!("theta_0 = {theta_zero} < theta_inf = {theta_inf}"),
    ));
    let zero = closed_form_level(ctx.cfg, &ctx.grid, ctx.a.a0());
    out.push(closed_form_check(
        "theta_zero_closed_form",
        theta_zero,
        zero,
        tol,
    ));
    let inf = closed_form_level(ctx.cfg, &ctx.grid, ctx.a.a_infinity().expect("class 2"));
    out.push(closed_form_check(
        "theta_inf_closed_form",
        theta_inf,
        inf,
        tol,
    ));
}

fn sweep(ctx: &mut Ctx<'_>) -> Result<Outcome, CliError> {
    if ctx.a.tag() != ClassTag::Class2 {
        return Err(CliError::Config(
            "sweep-eps needs a class2 coefficient".into(),
        ));
    }
    let eps_list = ctx.cfg.eps_list().to_vec();
    if eps_list.is_empty() {
        return Err(CliError::Config(
            "sweep-eps needs a nonempty coefficient.eps_list".into(),
        ));
    }
    let solve_cfg = ctx.cfg.solve_config(&ctx.grid)?;
    let table = sweep_epsilon(&ctx.a, &ctx.v, &ctx.grid, &solve_cfg, &eps_list)?;

    let mut assertions = Vec::new();
    let zero_a = sample_on_grid(&ctx.a.with_epsilon(0.0)?, &ctx.grid);
    let inf_a = sample_on_grid(
        &CoefficientField::constant(ctx.a.a_infinity().expect("class 2"))?,
        &ctx.grid,
    );
    report_checks(
        "theta_zero",
        &table.zero_report,
        &solve_cfg,
        &mut assertions,
    );
    report_checks("theta_inf", &table.inf_report, &solve_cfg, &mut assertions);
    dump(ctx, "theta_zero", &table.zero_report, &zero_a)?;
    dump(ctx, "theta_inf", &table.inf_report, &inf_a)?;
    for (i, row) in table.rows.iter().enumerate() {
        let tag = format!("eps{i}");
        report_checks(&tag, &row.report, &solve_cfg, &mut assertions);
        let a = sample_on_grid(&ctx.a.with_epsilon(row.epsilon)?, &ctx.grid);
        dump(ctx, &tag, &row.report, &a)?;
        assertions.push(Assertion::new(
            &format!("{tag}.bounded_by_w0"),
            row.bounded_by_w0,
            format!(
                "eps = {}: theta = {} <= J_eps(W0) = {}",
                row.epsilon, row.theta, row.j_eps_w0
            ),
        ));
    }
    class2_reference_checks(ctx, table.theta_zero, table.theta_inf, &mut assertions);

    let excess: Vec<f64> = table
        .rows
        .iter()
        .map(|r| r.j_eps_w0 - table.theta_zero)
        .collect();
    assertions.push(Assertion::new(
        "w0_excess_decreasing",
        excess.windows(2).all(|w| w[1] < w[0]),
        format!("J_eps(W0) - theta_0 along the list: {excess:?}"),
    ));
    // rows with theta_eps < theta_inf must form a nonempty tail of the list
    let below: Vec<bool> = table.rows.iter().map(|r| r.below_theta_inf).collect();
    let first = below.iter().position(|b| *b);
    let tail = first.is_some_and(|f| below[f..].iter().all(|b| *b));
    assertions.push(Assertion::new(
        "eps0_exists",
        tail,
        format!(
            "eps0 proxy = {:?}; below theta_inf per row: {below:?}",
            table.eps0_proxy
        ),
    ));

    let mut result = to_value(&table);
    result["theta_zero_closed_form"] = json!(closed_form_level(ctx.cfg, &ctx.grid, ctx.a.a0()));
    result["theta_inf_closed_form"] = json!(closed_form_level(
        ctx.cfg,
        &ctx.grid,
        ctx.a.a_infinity().expect("class 2")
    ));
    Ok(Outcome {
        converged: table.all_converged(),
        result,
        assertions,
    })
}

fn beta(ctx: &mut Ctx<'_>) -> Result<Outcome, CliError> {
    if ctx.grid.half_length() != 1 {
        return Err(CliError::Config(format!(
            "beta runs on (-1, 1) x D: grid.half_length must be 1, got {}",
            ctx.grid.half_length()
        )));
    }
    let tau = ctx.cfg.tau;
    let r =
        compute_beta(tau, &ctx.v, ctx.a.a0(), &ctx.grid, &ctx.cfg.beta_config()).map_err(|e| {
            match e {
                heteroclinic::Error::InvalidParameter(m) => CliError::Config(m),
                e => e.into(),
            }
        })?;
    if ctx.cfg.output.fields {
        if let Some(u) = &r.minimizer {
            // residual of the two-slab Euler-Lagrange equation, halved: -Δu + V'(u)/2
            let half = GridFunction::constant(ctx.grid.clone(), 0.5);
            let residual = pde_residual(u, &half, &ctx.v)?.residual;
            ctx.sink.field("field_beta.csv", u, &residual, &half)?;
        }
    }
    let slack = 1e-12;
    let assertions = vec![
        Assertion::new(
            "beta_positive",
            r.beta > 0.0,
            format!("beta = {:e}", r.beta),
        ),
        Assertion::new(
            "left_constraint",
            r.left_norm >= 0.5 * tau * (1.0 - slack),
            format!("|u - 1| on (-1, 0) = {} >= {}", r.left_norm, 0.5 * tau),
        ),
        Assertion::new(
            "right_constraint",
            r.right_norm <= 2.0 * tau * (1.0 + slack),
            format!("|u - 1| on (0, 1) = {} <= {}", r.right_norm, 2.0 * tau),
        ),
    ];
    Ok(Outcome {
        converged: r.converged,
        result: to_value(&r),
        assertions,
    })
}
