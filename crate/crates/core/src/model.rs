//! Double-well potentials `V` and coefficient fields `A(x, y)`, with
//! sampling-based certification of the structural hypotheses.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{CrossSection, CylinderGrid, GridFunction};

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
type FieldFn = Arc<dyn Fn(f64, &[f64]) -> f64 + Send + Sync>;

/// A double-well potential with wells at `t = -1` and `t = 1`.
#[derive(Clone)]
pub struct Potential {
    name: String,
    eval: ScalarFn,
    deriv: ScalarFn,
    /// `V(t) - V(s)` without cancellation, when a factored form is known.
    difference: Option<Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>>,
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Potential")
            .field("name", &self.name)
            .finish()
    }
}

impl Potential {
    pub fn new(
        name: impl Into<String>,
        eval: impl Fn(f64) -> f64 + Send + Sync + 'static,
        deriv: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            name: name.into(),
            eval: Arc::new(eval),
            deriv: Arc::new(deriv),
            difference: None,
        }
    }

    /// `V(t) = (t² - 1)²`.
    pub fn ginzburg_landau() -> Self {
        let mut v = Self::new(
            "ginzburg_landau",
            |t| {
                let s = t * t - 1.0;
                s * s
            },
            |t| 4.0 * t * (t * t - 1.0),
        );
        v.difference = Some(Arc::new(|s, t| (t - s) * (t + s) * (t * t + s * s - 2.0)));
        v
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    #[inline]
    pub fn eval(&self, t: f64) -> f64 {
        (self.eval)(t)
    }

    #[inline]
    pub fn deriv(&self, t: f64) -> f64 {
        (self.deriv)(t)
    }

    /// `V(t) - V(s)`, accurate relative to the difference for GL.
    #[inline]
    pub fn difference(&self, s: f64, t: f64) -> f64 {
        match &self.difference {
            Some(d) => d(s, t),
            None => self.eval(t) - self.eval(s),
        }
    }

    pub fn wells(&self) -> (f64, f64) {
        (-1.0, 1.0)
    }
}

/// Point at which a hypothesis check failed, and the offending value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Witness {
    pub point: Vec<f64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub description: String,
    pub passed: bool,
    pub witness: Option<Witness>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

impl HypothesisCheck {
    fn new(name: &str, description: &str, witness: Option<Witness>) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            passed: witness.is_none(),
            witness,
            detail: None,
        }
    }

    fn with_detail(mut self, detail: String) -> Self {
        self.detail = Some(detail);
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct CertificationReport {
    pub checks: Vec<HypothesisCheck>,
}

impl CertificationReport {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn get(&self, name: &str) -> Option<&HypothesisCheck> {
        self.checks.iter().find(|c| c.name == name)
    }
}

/// Sample points on `[-3, 3]`: an odd-sized uniform grid (so `t = 0` is
/// included) plus the wells.
fn potential_samples(sample_count: usize) -> Vec<f64> {
    let m = sample_count.max(2).div_ceil(2);
    let mut t: Vec<f64> = (0..=2 * m)
        .map(|i| 3.0 * (i as f64 - m as f64) / m as f64)
        .collect();
    t.push(-1.0);
    t.push(1.0);
    t
}

const WELL_TOL: f64 = 1e-14;
const FD_STEP: f64 = 1e-5;
const FD_REL_TOL: f64 = 1e-6;

/// Certifies C¹ consistency of `V'`, nonnegativity with zeros at the wells,
/// and strict positivity away from the wells, by dense sampling on `[-3, 3]`.
pub fn validate_potential(v: &Potential, sample_count: usize) -> Result<CertificationReport> {
    if sample_count < 100 {
        return Err(Error::InvalidParameter(format!(
            "sample_count must be at least 100, got {sample_count}"
        )));
    }
    let samples = potential_samples(sample_count);

    let mut worst_fd: Option<Witness> = None;
    let mut worst_fd_err = 0.0;
    for &t in samples.iter().filter(|t| t.abs() <= 2.0) {
        let d = v.deriv(t);
        let fd = (v.eval(t + FD_STEP) - v.eval(t - FD_STEP)) / (2.0 * FD_STEP);
        let err = (d - fd).abs() / d.abs().max(1.0);
        if !(err <= FD_REL_TOL) && !(err <= worst_fd_err) {
            worst_fd_err = err;
            worst_fd = Some(Witness {
                point: vec![t],
                value: d - fd,
            });
        }
    }
    let v1 = HypothesisCheck::new(
        "V1",
        "V' agrees with a centered finite difference of V on [-2, 2]",
        worst_fd,
    );

    let mut v2_witness = [-1.0, 1.0]
        .iter()
        .map(|&t| (t, v.eval(t)))
        .find(|(_, val)| !(val.abs() <= WELL_TOL))
        .map(|(t, value)| Witness {
            point: vec![t],
            value,
        });
    if v2_witness.is_none() {
        v2_witness = samples
            .iter()
            .map(|&t| (t, v.eval(t)))
            .filter(|(_, val)| !(*val >= 0.0))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .map(|(t, value)| Witness {
                point: vec![t],
                value,
            });
    }
    let v2 = HypothesisCheck::new("V2", "V(-1) = V(1) = 0 and V >= 0", v2_witness);

    let v3_witness = samples
        .iter()
        .filter(|t| (*t - 1.0).abs() > 1e-12 && (*t + 1.0).abs() > 1e-12)
        .map(|&t| (t, v.eval(t)))
        .filter(|(_, val)| !(*val > 0.0))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .map(|(t, value)| Witness {
            point: vec![t],
            value,
        });
    let v3 = HypothesisCheck::new("V3", "V(t) > 0 for t away from the wells", v3_witness);

    Ok(CertificationReport {
        checks: vec![v1, v2, v3],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassTag {
    /// 1-periodic in `x` (constants included).
    Periodic,
    /// `A < A_p` with `A - A_p -> 0` at infinity.
    Class1,
    /// Strict minimum on the plane `x = 0`, evaluated as `A(εx, y)`.
    Class2,
}

/// A coefficient field `A(x, y) >= A0 > 0`.
#[derive(Clone)]
pub struct CoefficientField {
    name: String,
    tag: ClassTag,
    base: FieldFn,
    companion: Option<Box<CoefficientField>>,
    /// `A_p - A`, kept separately so strictness survives rounding where the
    /// gap drops below the resolution of `A_p`.
    gap: Option<FieldFn>,
    a0: f64,
    a_infinity: Option<f64>,
    epsilon: f64,
}

impl fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoefficientField")
            .field("name", &self.name)
            .field("tag", &self.tag)
            .field("a0", &self.a0)
            .field("a_infinity", &self.a_infinity)
            .field("epsilon", &self.epsilon)
            .field("companion", &self.companion)
            .finish()
    }
}

/// Axial sampling window and step used when certifying field constructors.
const SAMPLE_HALF_WIDTH: f64 = 16.0;
const SAMPLES_PER_UNIT: usize = 64;
const FAR_X: f64 = 1.0e4;

fn axial_samples() -> impl Iterator<Item = f64> {
    let n = (SAMPLE_HALF_WIDTH as usize) * SAMPLES_PER_UNIT;
    (0..=2 * n).map(move |i| (i as f64 - n as f64) / SAMPLES_PER_UNIT as f64)
}

/// A few points per axis across the cross-section, boundaries included.
fn cross_samples(cross: &CrossSection) -> Vec<Vec<f64>> {
    const PER_AXIS: usize = 5;
    let axis = |a: usize| -> Vec<f64> {
        (0..PER_AXIS)
            .map(|j| cross.extents()[a] * j as f64 / (PER_AXIS - 1) as f64)
            .collect()
    };
    match cross.dim() {
        1 => axis(0).into_iter().map(|y| vec![y]).collect(),
        _ => {
            let (ys, zs) = (axis(0), axis(1));
            ys.iter()
                .flat_map(|y| zs.iter().map(move |z| vec![*y, *z]))
                .collect()
        }
    }
}

impl CoefficientField {
    pub fn constant(value: f64) -> Result<Self> {
        if !(value.is_finite() && value > 0.0) {
            return Err(Error::InvalidCoefficient(format!(
                "constant coefficient must be positive, got {value}"
            )));
        }
        Ok(Self {
            name: format!("constant({value})"),
            tag: ClassTag::Periodic,
            base: Arc::new(move |_, _| value),
            companion: None,
            gap: None,
            a0: value,
            a_infinity: None,
            epsilon: 1.0,
        })
    }

    /// `A_p(x) = a + b cos(2πx)`.
    pub fn cosine(a: f64, b: f64) -> Result<Self> {
        let a0 = a - b.abs();
        if !(a0.is_finite() && a0 > 0.0) {
            return Err(Error::InvalidCoefficient(format!(
                "a + b cos(2πx) needs a - |b| > 0, got a = {a}, b = {b}"
            )));
        }
        Ok(Self {
            name: format!("cosine(a={a}, b={b})"),
            tag: ClassTag::Periodic,
            base: Arc::new(move |x, _| a + b * (2.0 * std::f64::consts::PI * x).cos()),
            companion: None,
            gap: None,
            a0,
            a_infinity: None,
            epsilon: 1.0,
        })
    }

    /// A user-supplied 1-periodic field. Periodicity and positivity are
    /// checked by sampling over `cross`.
    pub fn periodic(
        name: impl Into<String>,
        f: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
        cross: &CrossSection,
    ) -> Result<Self> {
        let ys = cross_samples(cross);
        let mut a0 = f64::INFINITY;
        for x in axial_samples().filter(|x| (0.0..1.0).contains(x)) {
            for y in &ys {
                let v = f(x, y);
                let shifted = f(x + 1.0, y);
                if (v - shifted).abs() > 1e-12 * v.abs().max(1.0) {
                    return Err(Error::InvalidCoefficient(format!(
                        "field is not 1-periodic at x = {x}: {v} vs {shifted}"
                    )));
                }
                a0 = a0.min(v);
            }
        }
        if !(a0.is_finite() && a0 > 0.0) {
            return Err(Error::InvalidCoefficient(format!(
                "periodic field must be positive, sampled infimum {a0}"
            )));
        }
        Ok(Self {
            name: name.into(),
            tag: ClassTag::Periodic,
            base: Arc::new(f),
            companion: None,
            gap: None,
            a0,
            a_infinity: None,
            epsilon: 1.0,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn tag(&self) -> ClassTag {
        self.tag
    }

    /// Infimum `A0` (sampled where not known in closed form).
    pub fn a0(&self) -> f64 {
        self.a0
    }

    /// Limit value at infinity (Class 2 only).
    pub fn a_infinity(&self) -> Option<f64> {
        self.a_infinity
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Periodic companion `A_p` (Class 1 only).
    pub fn companion(&self) -> Option<&CoefficientField> {
        self.companion.as_deref()
    }

    /// `A_p - A` at `(x, y)` in the scaled variable (Class 1 only).
    pub fn gap(&self, x: f64, y: &[f64]) -> Option<f64> {
        self.gap.as_ref().map(|g| g(self.epsilon * x, y))
    }

    /// Same Class 2 profile evaluated with a different scaling.
    pub fn with_epsilon(&self, epsilon: f64) -> Result<Self> {
        if self.tag != ClassTag::Class2 {
            return Err(Error::InvalidCoefficient(
                "only Class 2 fields carry an epsilon scaling".into(),
            ));
        }
        check_epsilon(epsilon)?;
        let mut out = self.clone();
        out.epsilon = epsilon;
        Ok(out)
    }

    /// `A(εx, y)`; `ε = 1` outside Class 2.
    #[inline]
    pub fn eval(&self, x: f64, y: &[f64]) -> f64 {
        (self.base)(self.epsilon * x, y)
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::InvalidCoefficient(format!(
            "epsilon must be a nonnegative finite number, got {epsilon}"
        )));
    }
    Ok(())
}

/// Gaussian gap `amplitude * exp(-(x / width)²)`.
pub fn gaussian_gap(amplitude: f64, width: f64) -> impl Fn(f64, &[f64]) -> f64 + Send + Sync {
    move |x, _| amplitude * (-(x / width).powi(2)).exp()
}

/// Exponentially decaying gap `amplitude * exp(-rate * sqrt(1 + x²))`.
pub fn exponential_gap(amplitude: f64, rate: f64) -> impl Fn(f64, &[f64]) -> f64 + Send + Sync {
    move |x, _| amplitude * (-rate * (1.0 + x * x).sqrt()).exp()
}

/// Radial well `a_inf - depth * exp(-(x / width)²)`, minimal on `x = 0`.
pub fn well_profile(
    a_inf: f64,
    depth: f64,
    width: f64,
) -> impl Fn(f64, &[f64]) -> f64 + Send + Sync {
    move |x, _| a_inf - depth * (-(x / width).powi(2)).exp()
}

/// Golden-section search for the minimum value of `f` on `[lo, hi]`.
fn golden_min(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut a = hi - r * (hi - lo);
    let mut b = lo + r * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..80 {
        if fa < fb {
            hi = b;
            b = a;
            fb = fa;
            a = hi - r * (hi - lo);
            fa = f(a);
        } else {
            lo = a;
            a = b;
            fa = fb;
            b = lo + r * (hi - lo);
            fb = f(b);
        }
    }
    fa.min(fb)
}

/// Class 1 field `A = A_p - gap`, with `gap > 0` decaying at infinity.
pub fn make_class1(
    periodic: &CoefficientField,
    gap: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    cross: &CrossSection,
) -> Result<CoefficientField> {
    if periodic.tag != ClassTag::Periodic {
        return Err(Error::InvalidCoefficient(
            "Class 1 companion must be periodic".into(),
        ));
    }
    let gap: FieldFn = Arc::new(gap);
    let ys = cross_samples(cross);
    let mut inf_a = f64::INFINITY;
    let mut argmin = (0.0, 0usize);
    let mut sup_gap: f64 = 0.0;
    let mut far_gap: f64 = 0.0;
    for x in axial_samples() {
        for y in &ys {
            let g = gap(x, y);
            if !(g > 0.0) {
                return Err(Error::InvalidCoefficient(format!(
                    "gap must be strictly positive (A < A_p), got {g} at x = {x}, y = {y:?}"
                )));
            }
            sup_gap = sup_gap.max(g);
            if x.abs() == SAMPLE_HALF_WIDTH {
                far_gap = far_gap.max(g);
            }
            let v = periodic.eval(x, y) - g;
            if v < inf_a {
                inf_a = v;
                argmin = (x, ys.iter().position(|q| q == y).unwrap_or(0));
            }
        }
    }
    let y_min = &ys[argmin.1];
    let refined = golden_min(
        |x| periodic.eval(x, y_min) - gap(x, y_min),
        argmin.0 - 1.0 / SAMPLES_PER_UNIT as f64,
        argmin.0 + 1.0 / SAMPLES_PER_UNIT as f64,
    );
    inf_a = inf_a.min(refined);
    if !(far_gap <= 1e-3 * sup_gap) {
        return Err(Error::InvalidCoefficient(format!(
            "gap does not decay: {far_gap} at |x| = {SAMPLE_HALF_WIDTH} vs sup {sup_gap}"
        )));
    }
    let a0 = inf_a.min(periodic.a0);
    if !(a0 > 0.0) {
        return Err(Error::InvalidCoefficient(format!(
            "A = A_p - gap must stay positive, sampled infimum {a0}"
        )));
    }
    let ap = periodic.base.clone();
    let gap_fn = gap.clone();
    Ok(CoefficientField {
        name: format!("class1({} - gap)", periodic.name),
        tag: ClassTag::Class1,
        base: Arc::new(move |x, y| ap(x, y) - gap_fn(x, y)),
        companion: Some(Box::new(periodic.clone())),
        gap: Some(gap),
        a0,
        a_infinity: None,
        epsilon: 1.0,
    })
}

/// Class 2 field evaluated as `profile(εx, y)`.
///
/// The profile must attain its strict global minimum on `x = 0`, uniformly
/// in `y`, and have a strictly larger finite limit at infinity.
pub fn make_class2(
    profile: impl Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    epsilon: f64,
    cross: &CrossSection,
) -> Result<CoefficientField> {
    check_epsilon(epsilon)?;
    let ys = cross_samples(cross);
    let on_plane: Vec<f64> = ys.iter().map(|y| profile(0.0, y)).collect();
    let a0 = on_plane.iter().copied().fold(f64::INFINITY, f64::min);
    if !(a0.is_finite() && a0 > 0.0) {
        return Err(Error::InvalidCoefficient(format!(
            "profile must be positive on x = 0, got {a0}"
        )));
    }
    if let Some(v) = on_plane.iter().find(|v| (**v - a0).abs() > 1e-12 * a0) {
        return Err(Error::InvalidCoefficient(format!(
            "profile must be constant on x = 0 (A(0, y) = A0), found {v} vs {a0}"
        )));
    }
    for x in axial_samples().filter(|x| *x != 0.0) {
        for y in &ys {
            let v = profile(x, y);
            if !(v > a0) {
                return Err(Error::InvalidCoefficient(format!(
                    "minimum of the profile is not (strictly) on x = 0: A({x}, {y:?}) = {v} <= A(0, y) = {a0}"
                )));
            }
        }
    }
    let a_inf = ys
        .iter()
        .flat_map(|y| [profile(-FAR_X, y), profile(FAR_X, y)])
        .fold(f64::INFINITY, f64::min);
    if !(a_inf.is_finite() && a_inf > a0) {
        return Err(Error::InvalidCoefficient(format!(
            "limit at infinity must be finite and exceed A0 = {a0}, got {a_inf}"
        )));
    }
    Ok(CoefficientField {
        name: "class2".into(),
        tag: ClassTag::Class2,
        base: Arc::new(profile),
        companion: None,
        gap: None,
        a0,
        a_infinity: Some(a_inf),
        epsilon,
    })
}

/// Nodewise `A(εx, y)` on the grid.
pub fn sample_on_grid(a: &CoefficientField, grid: &Arc<CylinderGrid>) -> GridFunction {
    GridFunction::from_fn(grid.clone(), |x, y| a.eval(x, y))
}

/// Checks the class hypotheses of `a` at the nodes of `grid`.
pub fn validate_coefficient(a: &CoefficientField, grid: &Arc<CylinderGrid>) -> CertificationReport {
    let mut checks = Vec::new();
    let sampled = sample_on_grid(a, grid);
    let x = grid.x();
    let nc = grid.cross_count();
    let node = |idx: usize| -> Vec<f64> {
        let mut p = vec![x[idx / nc]];
        p.extend_from_slice(grid.y(idx % nc));
        p
    };

    let a0 = a.a0();
    let positivity = sampled
        .values()
        .iter()
        .enumerate()
        .filter(|(_, v)| !(**v >= a0 - 1e-12 * a0 && a0 > 0.0))
        .min_by(|p, q| p.1.total_cmp(q.1))
        .map(|(i, v)| Witness {
            point: node(i),
            value: *v,
        });
    checks.push(HypothesisCheck::new(
        "A_positive",
        "A(x, y) >= A0 > 0",
        positivity,
    ));

    match a.tag() {
        ClassTag::Periodic => {
            let w = sampled.values().iter().enumerate().find_map(|(i, v)| {
                let p = node(i);
                let shifted = a.eval(p[0] + 1.0, &p[1..]);
                ((v - shifted).abs() > 1e-12 * v.abs().max(1.0)).then(|| Witness {
                    point: p,
                    value: shifted - v,
                })
            });
            checks.push(HypothesisCheck::new("periodic", "A(x + 1, y) = A(x, y)", w));
        }
        ClassTag::Class1 => {
            debug_assert!(a.companion().is_some(), "Class 1 fields carry A_p");
            let gaps: Vec<f64> = (0..grid.len())
                .map(|i| {
                    let p = node(i);
                    a.gap(p[0], &p[1..]).unwrap_or(0.0)
                })
                .collect();
            let w = gaps
                .iter()
                .enumerate()
                .find(|(_, g)| !(**g > 0.0))
                .map(|(i, g)| Witness {
                    point: node(i),
                    value: -g,
                });
            let gap_max = gaps.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            checks.push(
                HypothesisCheck::new("A2", "A(x, y) < A_p(x, y) strictly", w)
                    .with_detail(format!("max (A_p - A) = {gap_max:e}")),
            );
            // (A1) proxy: the far-ring deviation shrinks between |x| = T/2 and |x| = T
            let ring = |r: f64| -> f64 {
                (0..nc)
                    .flat_map(|c| {
                        let y = grid.y(c);
                        [-r, r].map(|xr| a.gap(xr, y).unwrap_or(0.0).abs())
                    })
                    .fold(0.0, f64::max)
            };
            let t = grid.half_length() as f64;
            let (inner, outer) = (ring(0.5 * t), ring(t));
            let w = (outer > inner).then(|| Witness {
                point: vec![t],
                value: outer,
            });
            checks.push(
                HypothesisCheck::new("A1", "|A - A_p| decreases toward the far ring", w)
                    .with_detail(format!(
                        "|A - A_p| at |x| = T/2: {inner:e}, at |x| = T: {outer:e}"
                    )),
            );
        }
        ClassTag::Class2 => {
            let w = (0..nc).find_map(|c| {
                let v = a.eval(0.0, grid.y(c));
                ((v - a0).abs() > 1e-12 * a0).then(|| Witness {
                    point: [0.0].into_iter().chain(grid.y(c).iter().copied()).collect(),
                    value: v,
                })
            });
            checks.push(HypothesisCheck::new("A3_plane", "A(0, y) = A0", w));
            let a_inf = a.a_infinity().unwrap_or(f64::NAN);
            let t = grid.half_length() as f64;
            let far_min = (0..nc)
                .flat_map(|c| [-t, t].map(|xr| a.eval(xr, grid.y(c))))
                .fold(f64::INFINITY, f64::min);
            let delta = a_inf - far_min;
            let w = (!(a0 < a_inf && delta < a_inf - a0)).then(|| Witness {
                point: vec![t],
                value: far_min,
            });
            checks.push(
                HypothesisCheck::new(
                    "A3_limit",
                    "A0 < A_inf and the far ring approaches A_inf",
                    w,
                )
                .with_detail(format!("A0 = {a0}, A_inf = {a_inf}, delta(T) = {delta:e}")),
            );
        }
    }
    CertificationReport { checks }
}
