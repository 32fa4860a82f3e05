//! Tools for the admissible class of fields tending to `+1` on the left and
//! `-1` on the right: the affine seed, clipping, integer translations, slab
//! tail norms, normalization shifts and the gluing construction.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{self, CylinderGrid, Field};
use std::sync::Arc;

/// `L²(Ω₁)` distances of the translate `P_k U` to the two wells.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailProfile {
    pub k: i64,
    /// `‖P_k U - 1‖`.
    pub left_norm: f64,
    /// `‖P_k U + 1‖`.
    pub right_norm: f64,
    /// `sup |U - 1|` over the slab nodes.
    pub sup_left: f64,
    /// `sup |U + 1|` over the slab nodes.
    pub sup_right: f64,
}

/// The seed `Φ`: `1` for `x <= j`, `2j + 1 - 2x` on `(j, j + 1]`, `-1` beyond.
pub fn seed_phi(j: i64, grid: &Arc<CylinderGrid>) -> Result<Field> {
    if grid.slab_nodes(j).is_err() {
        return Err(Error::InvalidParameter(format!(
            "transition slab ({j}, {}) lies outside [-{t}, {t}]",
            j + 1,
            t = grid.half_length()
        )));
    }
    let first = grid.plane_of(j).expect("checked");
    let npu = grid.nodes_per_unit();
    let nc = grid.cross_count();
    let mut values = Vec::with_capacity(grid.len());
    for i in 0..grid.axial_count() {
        let v = if i <= first {
            1.0
        } else if i <= first + npu {
            // 2j + 1 - 2x with x = j + m / npu, evaluated exactly on the lattice
            let m = (i - first) as f64;
            1.0 - 2.0 * m / npu as f64
        } else {
            -1.0
        };
        values.extend(std::iter::repeat_n(v, nc));
    }
    Field::new(grid.clone(), values)
}

/// Nodewise clamp to `[-1, 1]`.
pub fn clip(u: &Field) -> Field {
    u.map(|v| v.clamp(-1.0, 1.0))
}

/// `P_k U(x, y) = U(x + k, y)`. Slabs vacated by the shift take the tail
/// value of their end: `+1` on the left, `-1` on the right.
pub fn translate(u: &Field, k: i64) -> Result<Field> {
    let grid = u.grid();
    let t = grid.half_length();
    if k.abs() >= 2 * t {
        return Err(Error::InvalidParameter(format!(
            "shift {k} must satisfy |k| < 2T = {}",
            2 * t
        )));
    }
    let nc = grid.cross_count();
    let nx = grid.axial_count() as i64;
    let shift = k * grid.nodes_per_unit() as i64;
    let mut values = Vec::with_capacity(grid.len());
    for i in 0..nx {
        let src = i + shift;
        if src < 0 {
            values.extend(std::iter::repeat_n(1.0, nc));
        } else if src >= nx {
            values.extend(std::iter::repeat_n(-1.0, nc));
        } else {
            let s = src as usize * nc;
            values.extend_from_slice(&u.values()[s..s + nc]);
        }
    }
    Field::new(grid.clone(), values)
}

/// Tail norms of every slab of the grid, in increasing `k`.
pub fn tail_norms(u: &Field) -> Vec<TailProfile> {
    let grid = u.grid();
    let minus = u.map(|v| (v - 1.0).powi(2));
    let plus = u.map(|v| (v + 1.0).powi(2));
    let nc = grid.cross_count();
    grid.slab_range()
        .map(|k| {
            let nodes = grid.slab_nodes(k).expect("in range");
            let span = &u.values()[nodes.start() * nc..(nodes.end() + 1) * nc];
            TailProfile {
                k,
                left_norm: grid::slab_integral(&minus, k)
                    .expect("in range")
                    .max(0.0)
                    .sqrt(),
                right_norm: grid::slab_integral(&plus, k)
                    .expect("in range")
                    .max(0.0)
                    .sqrt(),
                sup_left: span.iter().fold(0.0, |m, v| m.max((v - 1.0).abs())),
                sup_right: span.iter().fold(0.0, |m, v| m.max((v + 1.0).abs())),
            }
        })
        .collect()
}

/// Slab indices at which the field leaves the `+1` well and enters the
/// `-1` well at level `tau`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct NormalizationShifts {
    /// First slab with `‖P_k U - 1‖ >= τ`; all slabs to its left are closer.
    pub k1: i64,
    /// Last slab with `‖P_k U + 1‖ >= τ`; all slabs to its right are closer.
    pub k2: i64,
}

pub fn normalization_shifts(u: &Field, tau: f64) -> Result<NormalizationShifts> {
    let measure = u.grid().cross().measure();
    if !(tau > 0.0 && tau < measure.sqrt()) {
        return Err(Error::InvalidParameter(format!(
            "tau must lie in (0, {}), got {tau}",
            measure.sqrt()
        )));
    }
    let tails = tail_norms(u);
    let k1 = tails.iter().find(|p| p.left_norm >= tau).map(|p| p.k);
    let k2 = tails
        .iter()
        .rev()
        .find(|p| p.right_norm >= tau)
        .map(|p| p.k);
    match (k1, k2) {
        (Some(k1), Some(k2)) => Ok(NormalizationShifts { k1, k2 }),
        (None, _) => Err(Error::NoCrossing(format!(
            "every slab stays within {tau} of +1"
        ))),
        (_, None) => Err(Error::NoCrossing(format!(
            "every slab stays within {tau} of -1"
        ))),
    }
}

/// `Z(x, y) = 1` for `x <= j`, `(j + 1 - x) + (x - j) U` on `(j, j + 1]`,
/// `U` beyond.
pub fn glue(u: &Field, j: i64) -> Result<Field> {
    let grid = u.grid();
    if grid.slab_nodes(j).is_err() {
        return Err(Error::InvalidParameter(format!(
            "gluing slab ({j}, {}) lies outside the grid",
            j + 1
        )));
    }
    let first = grid.plane_of(j).expect("checked");
    let npu = grid.nodes_per_unit();
    let nc = grid.cross_count();
    let mut values = u.values().to_vec();
    values[..(first + 1) * nc].fill(1.0);
    for m in 1..npu {
        let s = m as f64 / npu as f64;
        let i = first + m;
        for v in &mut values[i * nc..(i + 1) * nc] {
            *v = (1.0 - s) + s * *v;
        }
    }
    Field::new(grid.clone(), values)
}

/// Truncated-grid proxy for membership in the admissible class: the first
/// and last slab must be within `tolerance` of `+1` and `-1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GammaCheck {
    pub left_end_norm: f64,
    pub right_end_norm: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl GammaCheck {
    pub fn evaluate(u: &Field, tolerance: f64) -> Self {
        let tails = tail_norms(u);
        let left_end_norm = tails.first().map_or(0.0, |p| p.left_norm);
        let right_end_norm = tails.last().map_or(0.0, |p| p.right_norm);
        Self {
            left_end_norm,
            right_end_norm,
            tolerance,
            passed: left_end_norm <= tolerance && right_end_norm <= tolerance,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::CrossSection;
    use proptest::prelude::*;

    fn grid(t: i64, h: f64) -> Arc<CylinderGrid> {
        Arc::new(CylinderGrid::new(t, h, CrossSection::interval(1.0, 3).unwrap()).unwrap())
    }

    #[test]
    fn seed_values() {
        let g = grid(3, 0.25);
        let phi = seed_phi(0, &g).unwrap();
        let at = |x: f64| phi.at(g.x().iter().position(|v| *v == x).unwrap(), 1);
        assert_eq!(at(0.0), 1.0);
        assert_eq!(at(0.5), 0.0);
        assert_eq!(at(1.0), -1.0);
        assert_eq!(at(-3.0), 1.0);
        assert_eq!(at(3.0), -1.0);
        assert!(seed_phi(3, &g).is_err());
        assert!(seed_phi(-3, &g).is_ok());
    }

    #[test]
    fn seed_tails() {
        let g = grid(4, 0.01);
        let tails = tail_norms(&seed_phi(0, &g).unwrap());
        for p in &tails {
            if p.k <= -1 {
                assert_eq!(p.left_norm, 0.0);
            }
            if p.k >= 1 {
                assert_eq!(p.right_norm, 0.0);
            }
        }
        let slab0 = tails.iter().find(|p| p.k == 0).unwrap();
        // ∫_0^1 (2x)² dx = 4/3; trapezoid error h²/3 for this quadratic
        assert!((slab0.left_norm.powi(2) - 4.0 / 3.0).abs() < 1e-4);
        assert!((slab0.right_norm.powi(2) - 4.0 / 3.0).abs() < 1e-4);
    }

    #[test]
    fn clip_examples() {
        let g = grid(1, 0.5);
        let mut vals = vec![0.2; g.len()];
        vals[0] = 1.5;
        vals[1] = -3.0;
        let u = Field::new(g.clone(), vals).unwrap();
        let c = clip(&u);
        assert_eq!(&c.values()[..3], &[1.0, -1.0, 0.2]);
        assert_eq!(clip(&c), c);
    }

    #[test]
    fn translation() {
        let g = grid(5, 0.1);
        let phi = seed_phi(0, &g).unwrap();
        assert_eq!(translate(&phi, 0).unwrap(), phi);
        // P_3 Φ_0(x) = Φ_0(x + 3) = Φ_{-3}(x)
        assert_eq!(translate(&phi, 3).unwrap(), seed_phi(-3, &g).unwrap());
        assert_eq!(translate(&phi, -3).unwrap(), seed_phi(3, &g).unwrap());
        assert!(translate(&phi, 10).is_err());
        let u = Field::from_fn(g.clone(), |x, _| (x * 0.3).tanh());
        let back = translate(&translate(&u, 1).unwrap(), -1).unwrap();
        let n = g.nodes_per_unit() * g.cross_count();
        assert_eq!(&back.values()[n..], &u.values()[n..]);
    }

    #[test]
    fn shifts_of_seed() {
        let g = grid(5, 0.05);
        let phi = seed_phi(0, &g).unwrap();
        assert_eq!(
            normalization_shifts(&phi, 0.5).unwrap(),
            NormalizationShifts { k1: 0, k2: 0 }
        );
        let moved = translate(&phi, 2).unwrap();
        assert_eq!(
            normalization_shifts(&moved, 0.5).unwrap(),
            NormalizationShifts { k1: -2, k2: -2 }
        );
        let one = Field::constant(g.clone(), 1.0);
        assert!(matches!(
            normalization_shifts(&one, 0.5),
            Err(Error::NoCrossing(_))
        ));
        assert!(normalization_shifts(&phi, 1.0).is_err());
    }

    #[test]
    fn glue_examples() {
        let g = grid(4, 0.1);
        let one = Field::constant(g.clone(), 1.0);
        assert_eq!(glue(&one, 0).unwrap(), one);
        let u = Field::from_fn(g.clone(), |x, _| -(x - 1.7).tanh());
        let z = glue(&u, -1).unwrap();
        let i_half = g.x().iter().position(|x| (x + 0.5).abs() < 1e-12).unwrap();
        assert!((z.at(i_half, 0) - (0.5 + 0.5 * u.at(i_half, 0))).abs() < 1e-15);
        for (i, x) in g.x().iter().enumerate() {
            for c in 0..g.cross_count() {
                if *x <= -1.0 {
                    assert_eq!(z.at(i, c), 1.0);
                } else if *x >= 0.0 {
                    assert_eq!(z.at(i, c).to_bits(), u.at(i, c).to_bits());
                }
            }
        }
    }

    #[test]
    fn seed_passes_gamma_proxy() {
        let g = grid(4, 0.1);
        assert!(GammaCheck::evaluate(&seed_phi(0, &g).unwrap(), 0.0).passed);
        assert!(!GammaCheck::evaluate(&Field::constant(g.clone(), 1.0), 1e-3).passed);
    }

    proptest! {
        #[test]
        fn clip_never_moves_away_from_wells(vals in proptest::collection::vec(-3.0f64..3.0, 27)) {
            let g = grid(1, 0.25);
            let u = Field::new(g, vals).unwrap();
            let c = clip(&u);
            for (a, b) in u.values().iter().zip(c.values()) {
                prop_assert!((b - 1.0).abs() <= (a - 1.0).abs());
                prop_assert!((b + 1.0).abs() <= (a + 1.0).abs());
            }
        }

        #[test]
        fn tail_norms_bounded(vals in proptest::collection::vec(-1.0f64..=1.0, 3 * 17)) {
            let g = grid(2, 0.25);
            let mut u = Field::new(g.clone(), vals).unwrap();
            let nc = g.cross_count();
            let n = u.values().len();
            u.values_mut()[..nc].fill(1.0);
            u.values_mut()[n - nc..].fill(-1.0);
            let cap = 2.0 * g.cross().measure().sqrt() * (1.0 + 1e-12);
            for p in tail_norms(&u) {
                prop_assert!(p.left_norm >= 0.0 && p.left_norm <= cap);
                prop_assert!(p.right_norm >= 0.0 && p.right_norm <= cap);
            }
        }

        #[test]
        fn shifts_are_translation_covariant(center in -1.0f64..1.0, s in -2i64..=2) {
            let g = grid(8, 0.05);
            let u = Field::from_fn(g.clone(), |x, _| -((x - center) * 2.0).tanh());
            let base = normalization_shifts(&u, 0.3).unwrap();
            let moved = normalization_shifts(&translate(&u, s).unwrap(), 0.3).unwrap();
            prop_assert_eq!(moved.k1, base.k1 - s);
            prop_assert_eq!(moved.k2, base.k2 - s);
        }
    }
}
