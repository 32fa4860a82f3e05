//! Box-constrained limited-memory quasi-Newton descent.
//!
//! Directions come from the two-loop recursion on the variables that are
//! not held at a bound, with a user-supplied initial metric; every trial point is
//! projected onto the box and accepted only under a sufficient-decrease
//! condition, so the objective never increases. With `memory = 0` this is
//! plain preconditioned projected gradient descent.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

/// Smooth objective with gradient.
pub trait Objective {
    fn value(&mut self, x: &[f64]) -> f64;
    /// Writes the gradient into `grad` and returns the value.
    fn value_and_gradient(&mut self, x: &[f64], grad: &mut [f64]) -> f64;
    /// `value(y) - value(x)`; override when it can be formed more
    /// accurately than by subtracting the two values.
    fn change(&mut self, x: &[f64], y: &[f64]) -> f64 {
        self.value(y) - self.value(x)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    /// Take the full (scaled) step; an energy increase aborts the run.
    Fixed { step: f64 },
    /// Backtrack from the unit step until the Armijo condition holds.
    BacktrackingArmijo,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DescentSettings {
    pub memory: usize,
    pub max_iterations: usize,
    /// Tolerance on the max-norm of the projected gradient.
    pub gradient_tolerance: f64,
    /// Relative energy change regarded as no progress.
    pub stall_tolerance: f64,
    pub stall_window: usize,
    pub step_rule: StepRule,
    pub armijo: f64,
    pub max_backtracks: usize,
}

impl Default for DescentSettings {
    fn default() -> Self {
        Self {
            memory: 10,
            max_iterations: 20_000,
            gradient_tolerance: 1e-9,
            stall_tolerance: 1e-15,
            stall_window: 50,
            step_rule: StepRule::BacktrackingArmijo,
            armijo: 1e-4,
            max_backtracks: 50,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    EnergyStall,
    IterationLimit,
    LineSearchFailed,
    Diverged,
}

#[derive(Debug, Clone)]
pub struct DescentOutcome {
    pub x: Vec<f64>,
    pub value: f64,
    pub iterations: usize,
    pub projected_gradient_norm: f64,
    pub stop: StopReason,
    /// `(iteration, value, projected gradient norm)`, starting at iteration 0.
    pub trace: Vec<(usize, f64, f64)>,
}

impl DescentOutcome {
    pub fn converged(&self) -> bool {
        self.stop == StopReason::GradientTolerance
    }
}

/// Initial inverse-Hessian model. `apply` overwrites `v` with `H₀ v`
/// restricted to the coordinates where `active` is false; the active
/// entries of `v` are zero on entry and must stay zero.
pub trait Metric {
    fn apply(&self, active: &[bool], v: &mut [f64]);
}

/// Diagonal `H₀`.
impl Metric for [f64] {
    fn apply(&self, _active: &[bool], v: &mut [f64]) {
        for (v, m) in v.iter_mut().zip(self) {
            *v *= m;
        }
    }
}

impl Metric for Vec<f64> {
    fn apply(&self, active: &[bool], v: &mut [f64]) {
        self.as_slice().apply(active, v)
    }
}

/// `H₀ = M⁻¹` for a matrix `M` made of independent symmetric tridiagonal
/// chains: chain `c` holds the coordinates `c, c + stride, c + 2 stride, ...`.
/// Active coordinates are removed from `M` (their couplings dropped).
#[derive(Debug, Clone)]
pub struct TridiagonalChains {
    pub stride: usize,
    /// Diagonal of `M`, one entry per coordinate.
    pub diag: Vec<f64>,
    /// `off[i]` couples coordinate `i` to `i + stride`.
    pub off: Vec<f64>,
}

impl Metric for TridiagonalChains {
    fn apply(&self, active: &[bool], v: &mut [f64]) {
        let n = v.len();
        let stride = self.stride;
        let mut c_prime = vec![0.0; n / stride + 1];
        for c in 0..stride {
            // Thomas algorithm; an active coordinate splits the chain
            let mut prev: Option<usize> = None;
            let mut k = 0;
            let mut i = c;
            while i < n {
                if active[i] {
                    prev = None;
                } else {
                    let (b, d) = match prev {
                        Some(p) => {
                            let a = self.off[p];
                            let denom = self.diag[i] - a * c_prime[k - 1];
                            (denom, (v[i] - a * v[p]) / denom)
                        }
                        None => (self.diag[i], v[i] / self.diag[i]),
                    };
                    let next = i + stride;
                    c_prime[k] = if next < n { self.off[i] / b } else { 0.0 };
                    v[i] = d;
                    prev = Some(i);
                }
                k += 1;
                i += stride;
            }
            // back substitution
            let mut i = c + (k - 1) * stride;
            let mut k = k - 1;
            let mut after: Option<usize> = None;
            loop {
                if active[i] {
                    after = None;
                } else {
                    if let Some(q) = after {
                        v[i] -= c_prime[k] * v[q];
                    }
                    after = Some(i);
                }
                if k == 0 {
                    break;
                }
                k -= 1;
                i -= stride;
            }
        }
    }
}

/// Box `[lower, upper]` with some coordinates frozen at their initial value.
pub struct BoxConstraints<'a> {
    pub lower: f64,
    pub upper: f64,
    pub fixed: &'a [bool],
    pub metric: &'a dyn Metric,
}

impl BoxConstraints<'_> {
    #[inline]
    fn project(&self, i: usize, v: f64) -> f64 {
        if self.fixed[i] {
            v
        } else {
            v.clamp(self.lower, self.upper)
        }
    }

    fn is_active(&self, i: usize, x: f64, g: f64) -> bool {
        self.fixed[i] || (x <= self.lower && g > 0.0) || (x >= self.upper && g < 0.0)
    }

    fn projected_gradient_norm(&self, x: &[f64], g: &[f64]) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..x.len() {
            if !self.fixed[i] {
                let p = (x[i] - g[i]).clamp(self.lower, self.upper) - x[i];
                m = m.max(p.abs());
            }
        }
        m
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

struct Pair {
    s: Vec<f64>,
    y: Vec<f64>,
    rho: f64,
}

/// Minimizes `objective` over the box starting from `x0` (which is
/// projected first).
pub fn minimize_box(
    objective: &mut impl Objective,
    x0: Vec<f64>,
    bounds: &BoxConstraints<'_>,
    settings: &DescentSettings,
) -> DescentOutcome {
    let n = x0.len();
    let mut x: Vec<f64> = x0
        .iter()
        .enumerate()
        .map(|(i, v)| bounds.project(i, *v))
        .collect();
    let mut g = vec![0.0; n];
    let mut f = objective.value_and_gradient(&x, &mut g);
    let mut pg = bounds.projected_gradient_norm(&x, &g);
    let mut trace = vec![(0, f, pg)];
    let mut pairs: VecDeque<Pair> = VecDeque::with_capacity(settings.memory);

    let mut d = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut g_trial = vec![0.0; n];
    let mut alphas = vec![0.0; settings.memory];
    let mut stall = 0;
    let mut iterations = 0;

    let stop = loop {
        if !f.is_finite() {
            break StopReason::Diverged;
        }
        if pg <= settings.gradient_tolerance {
            break StopReason::GradientTolerance;
        }
        if iterations >= settings.max_iterations {
            break StopReason::IterationLimit;
        }

        // quasi-Newton direction first; on failure drop the memory and
        // retry along the preconditioned gradient
        let mut use_memory = !pairs.is_empty();
        let accepted = loop {
            compute_direction(&x, &g, bounds, &pairs, use_memory, &mut alphas, &mut d);
            let change = if dot(&g, &d) < 0.0 {
                line_search(
                    objective, &x, &g, &d, use_memory, bounds, settings, &mut trial,
                )
            } else {
                None
            };
            if change.is_some() || !use_memory {
                break change;
            }
            pairs.clear();
            use_memory = false;
        };

        let Some(change) = accepted else {
            break match settings.step_rule {
                StepRule::Fixed { .. } => StopReason::Diverged,
                StepRule::BacktrackingArmijo => StopReason::LineSearchFailed,
            };
        };

        // the value is carried as a running sum of accurate changes, so it
        // never increases even where plain evaluations jitter by an ulp
        objective.value_and_gradient(&trial, &mut g_trial);
        let f_new = f + change;
        iterations += 1;
        if settings.memory > 0 {
            let s: Vec<f64> = trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            let y: Vec<f64> = g_trial.iter().zip(&g).map(|(a, b)| a - b).collect();
            let sy = dot(&s, &y);
            if sy > 1e-12 * dot(&y, &y).sqrt() * dot(&s, &s).sqrt() && sy > 0.0 {
                if pairs.len() == settings.memory {
                    pairs.pop_front();
                }
                pairs.push_back(Pair {
                    s,
                    y,
                    rho: 1.0 / sy,
                });
            }
        }
        let rel = (f - f_new).abs() / f.abs().max(1.0);
        std::mem::swap(&mut x, &mut trial);
        std::mem::swap(&mut g, &mut g_trial);
        f = f_new;
        pg = bounds.projected_gradient_norm(&x, &g);
        trace.push((iterations, f, pg));
        if rel <= settings.stall_tolerance {
            stall += 1;
            if stall >= settings.stall_window && pg > settings.gradient_tolerance {
                break StopReason::EnergyStall;
            }
        } else {
            stall = 0;
        }
    };

    DescentOutcome {
        x,
        value: f,
        iterations,
        projected_gradient_norm: pg,
        stop,
        trace,
    }
}

/// Backtracking along the projected path `P(x + t d)`. On success `trial`
/// holds the accepted point and the accurate energy change is returned.
#[allow(clippy::too_many_arguments)]
fn line_search(
    objective: &mut impl Objective,
    x: &[f64],
    g: &[f64],
    d: &[f64],
    quasi_newton: bool,
    bounds: &BoxConstraints<'_>,
    settings: &DescentSettings,
    trial: &mut [f64],
) -> Option<f64> {
    let n = x.len();
    let mut step = if quasi_newton {
        1.0
    } else {
        // first-order step: bound the largest move
        let dmax = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        (0.1 / dmax).min(1.0)
    };
    let fixed = matches!(settings.step_rule, StepRule::Fixed { .. });
    if let StepRule::Fixed { step: s } = settings.step_rule {
        step *= s;
    }
    for _ in 0..=settings.max_backtracks {
        for i in 0..n {
            trial[i] = bounds.project(i, x[i] + step * d[i]);
        }
        if trial == x {
            // the step has fallen below the resolution of the iterate
            return None;
        }
        let decrease: f64 = (0..n).map(|i| g[i] * (trial[i] - x[i])).sum();
        let change = objective.change(x, trial);
        let bound = if fixed {
            0.0
        } else {
            settings.armijo * decrease.min(0.0)
        };
        if change.is_finite() && change <= bound {
            return Some(change);
        }
        if fixed {
            return None;
        }
        step *= 0.5;
    }
    None
}

fn compute_direction(
    x: &[f64],
    g: &[f64],
    bounds: &BoxConstraints<'_>,
    pairs: &VecDeque<Pair>,
    use_memory: bool,
    alphas: &mut [f64],
    d: &mut [f64],
) {
    let n = x.len();
    let active: Vec<bool> = (0..n).map(|i| bounds.is_active(i, x[i], g[i])).collect();
    for i in 0..n {
        d[i] = if active[i] { 0.0 } else { g[i] };
    }
    if use_memory {
        for (k, p) in pairs.iter().enumerate().rev() {
            let a = p.rho * masked_dot(&active, &p.s, d);
            alphas[k] = a;
            for i in 0..n {
                if !active[i] {
                    d[i] -= a * p.y[i];
                }
            }
        }
        let last = pairs.back().expect("non-empty");
        let mut hy: Vec<f64> = (0..n)
            .map(|i| if active[i] { 0.0 } else { last.y[i] })
            .collect();
        bounds.metric.apply(&active, &mut hy);
        let ydy = masked_dot(&active, &last.y, &hy);
        let gamma = (1.0 / last.rho) / ydy;
        bounds.metric.apply(&active, d);
        for v in d.iter_mut() {
            *v *= gamma;
        }
        for (k, p) in pairs.iter().enumerate() {
            let b = p.rho * masked_dot(&active, &p.y, d);
            for i in 0..n {
                if !active[i] {
                    d[i] += (alphas[k] - b) * p.s[i];
                }
            }
        }
    } else {
        bounds.metric.apply(&active, d);
    }
    for i in 0..n {
        d[i] = if active[i] { 0.0 } else { -d[i] };
    }
}

fn masked_dot(active: &[bool], a: &[f64], b: &[f64]) -> f64 {
    (0..a.len())
        .filter(|i| !active[*i])
        .map(|i| a[i] * b[i])
        .sum()
}
