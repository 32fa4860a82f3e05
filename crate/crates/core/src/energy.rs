//! Discrete renormalized energy, its exact gradient, the PDE residual and
//! the constrained two-slab functional behind the energy quantum `β(τ)`.
//!
//! The Dirichlet part is integrated edge by edge: every grid edge of length
//! `h` contributes `½ h ((u_q - u_p) / h)²` times the trapezoid weight of its
//! transverse directions. Potential terms use nodal trapezoid weights. With
//! this pairing the gradient of the discrete energy is exactly the weighted
//! residual `w ⊙ (-Δ_h u + A V'(u))` with ghost-reflected lateral boundaries.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{self, CylinderGrid, Field, GridFunction};
use crate::model::Potential;
use crate::optimize::TridiagonalChains;

/// Slab energies `I_k` and their sum `J`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnergyBreakdown {
    /// Index of the first slab in `per_slab`.
    pub first_slab: i64,
    pub per_slab: Vec<f64>,
    pub total: f64,
    pub dirichlet_part: f64,
    pub potential_part: f64,
}

impl EnergyBreakdown {
    pub fn slab(&self, k: i64) -> Option<f64> {
        let idx = usize::try_from(k - self.first_slab).ok()?;
        self.per_slab.get(idx).copied()
    }

    /// `dirichlet_part / potential_part`; equals 1 at minimizers of
    /// constant-coefficient problems.
    pub fn equipartition_ratio(&self) -> f64 {
        self.dirichlet_part / self.potential_part
    }
}

enum Coefficient<'a> {
    Sampled(&'a [f64]),
    Unit,
}

/// A discretized functional `Σ_edges c (Δu)² + Σ_nodes w A V(u)` on a grid.
pub(crate) struct Functional<'a> {
    grid: &'a CylinderGrid,
    coeff: Coefficient<'a>,
    potential: &'a Potential,
    /// `(p, q, c)`: edge between flat nodes `p`, `q` contributing `c (u_q - u_p)²`.
    edges: Vec<(usize, usize, f64)>,
    /// Number of axial edges at the front of `edges`, grouped by axial index.
    axial_edges_per_plane: usize,
    cross_edges_per_plane: usize,
    weights: Vec<f64>,
}

impl<'a> Functional<'a> {
    /// `gradient_factor` is ½ for the Lagrangian `½|∇u|² + A V(u)` and 1 for
    /// the unweighted `|∇u|² + V(u)`.
    fn build(
        grid: &'a CylinderGrid,
        coeff: Coefficient<'a>,
        potential: &'a Potential,
        gradient_factor: f64,
    ) -> Self {
        let nx = grid.axial_count();
        let nc = grid.cross_count();
        let hx = grid.h_x();
        let cross_edges: Vec<(usize, usize, f64)> = grid
            .cross_edges()
            .into_iter()
            .map(|(p, q, axis)| {
                let h = grid.cross().spacing(axis);
                (
                    p,
                    q,
                    gradient_factor * grid.cross_edge_weight(p, axis) / (h * h),
                )
            })
            .collect();
        let mut edges = Vec::with_capacity((nx - 1) * nc + nx * cross_edges.len());
        for i in 0..nx - 1 {
            for (c, wc) in grid.cross_weights().iter().enumerate() {
                edges.push((
                    grid.index(i, c),
                    grid.index(i + 1, c),
                    gradient_factor * wc / hx,
                ));
            }
        }
        for (i, wx) in grid.axial_weights().iter().enumerate() {
            for (p, q, w) in &cross_edges {
                edges.push((grid.index(i, *p), grid.index(i, *q), w * wx));
            }
        }
        Self {
            grid,
            coeff,
            potential,
            edges,
            axial_edges_per_plane: nc,
            cross_edges_per_plane: cross_edges.len(),
            weights: grid.node_weights(),
        }
    }

    pub(crate) fn lagrangian(
        grid: &'a CylinderGrid,
        a: &'a [f64],
        potential: &'a Potential,
    ) -> Self {
        Self::build(grid, Coefficient::Sampled(a), potential, 0.5)
    }

    fn unweighted(grid: &'a CylinderGrid, potential: &'a Potential) -> Self {
        Self::build(grid, Coefficient::Unit, potential, 1.0)
    }

    #[inline]
    fn coeff_at(&self, idx: usize) -> f64 {
        match self.coeff {
            Coefficient::Sampled(a) => a[idx],
            Coefficient::Unit => 1.0,
        }
    }

    pub(crate) fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Axial part of the Hessian plus the well curvature `8 A w`: a
    /// preconditioner that removes the `1/h²` stiffness of the axial chains.
    pub(crate) fn axial_metric(&self) -> TridiagonalChains {
        let n = self.weights.len();
        let nc = self.axial_edges_per_plane;
        let mut diag: Vec<f64> = (0..n)
            .map(|idx| 8.0 * self.weights[idx] * self.coeff_at(idx))
            .collect();
        let mut off = vec![0.0; n];
        for (p, q, c) in &self.edges[..n - nc] {
            diag[*p] += 2.0 * c;
            diag[*q] += 2.0 * c;
            off[*p] = -2.0 * c;
        }
        TridiagonalChains {
            stride: nc,
            diag,
            off,
        }
    }

    pub(crate) fn breakdown(&self, u: &[f64]) -> EnergyBreakdown {
        let grid = self.grid;
        let nx = grid.axial_count();
        let nc = grid.cross_count();
        let (axial, cross) = self.edges.split_at((nx - 1) * self.axial_edges_per_plane);

        let edge_sum = |chunk: &[(usize, usize, f64)]| -> f64 {
            chunk
                .iter()
                .map(|(p, q, c)| {
                    let d = u[*q] - u[*p];
                    c * d * d
                })
                .sum()
        };
        let axial_plane: Vec<f64> = axial
            .chunks(self.axial_edges_per_plane)
            .map(edge_sum)
            .collect();
        let cross_plane: Vec<f64> = if self.cross_edges_per_plane == 0 {
            vec![0.0; nx]
        } else {
            cross
                .chunks(self.cross_edges_per_plane)
                .map(edge_sum)
                .collect()
        };
        let potential_plane: Vec<f64> = (0..nx)
            .map(|i| {
                (0..nc)
                    .map(|c| {
                        let idx = i * nc + c;
                        grid.cross_weights()[c] * self.coeff_at(idx) * self.potential.eval(u[idx])
                    })
                    .sum()
            })
            .collect();

        let hx = grid.h_x();
        let wx_full = grid.axial_weights();
        let mut per_slab = Vec::with_capacity(grid.slab_count());
        for k in grid.slab_range() {
            let nodes = grid.slab_nodes(k).expect("slab in range");
            let (first, last) = (*nodes.start(), *nodes.end());
            let mut acc = axial_plane[first..last].iter().fold(0.0, |a, v| a + v);
            for i in nodes {
                let wx = if i == first || i == last {
                    0.5 * hx
                } else {
                    hx
                };
                // cross edges carry the full axial weight of their plane
                acc += wx / wx_full[i] * cross_plane[i] + wx * potential_plane[i];
            }
            per_slab.push(acc);
        }
        let dirichlet_part = compensated_sum(axial_plane.iter().chain(&cross_plane).copied());
        let potential_part =
            compensated_sum(potential_plane.iter().zip(wx_full).map(|(p, w)| p * w));
        EnergyBreakdown {
            first_slab: -grid.half_length(),
            total: compensated_sum(per_slab.iter().copied()),
            per_slab,
            dirichlet_part,
            potential_part,
        }
    }

    pub(crate) fn value(&self, u: &[f64]) -> f64 {
        let edges = self.edges.iter().map(|(p, q, c)| {
            let d = u[*q] - u[*p];
            c * d * d
        });
        let nodes = self
            .weights
            .iter()
            .enumerate()
            .map(|(idx, w)| w * self.coeff_at(idx) * self.potential.eval(u[idx]));
        compensated_sum(edges.chain(nodes))
    }

    /// `value(v) - value(u)` summed term by term, so that changes far below
    /// the rounding level of the total are still resolved.
    pub(crate) fn change(&self, u: &[f64], v: &[f64]) -> f64 {
        let edges = self.edges.iter().map(|(p, q, c)| {
            let ds = (v[*q] - u[*q]) - (v[*p] - u[*p]);
            c * ds * ((v[*q] - v[*p]) + (u[*q] - u[*p]))
        });
        let nodes = self
            .weights
            .iter()
            .enumerate()
            .map(|(idx, w)| w * self.coeff_at(idx) * self.potential.difference(u[idx], v[idx]));
        compensated_sum(edges.chain(nodes))
    }

    /// Exact gradient of [`Self::value`]. With `clamp_ends` the entries on
    /// the two axial end planes are zeroed.
    pub(crate) fn gradient(&self, u: &[f64], clamp_ends: bool, out: &mut [f64]) {
        for (idx, (o, w)) in out.iter_mut().zip(&self.weights).enumerate() {
            *o = w * self.coeff_at(idx) * self.potential.deriv(u[idx]);
        }
        for (p, q, c) in &self.edges {
            let d = 2.0 * c * (u[*q] - u[*p]);
            out[*p] -= d;
            out[*q] += d;
        }
        if clamp_ends {
            let nc = self.grid.cross_count();
            let n = out.len();
            out[..nc].fill(0.0);
            out[n - nc..].fill(0.0);
        }
    }

    pub(crate) fn value_and_gradient(&self, u: &[f64], clamp_ends: bool, out: &mut [f64]) -> f64 {
        self.gradient(u, clamp_ends, out);
        self.value(u)
    }
}

/// Neumaier summation: the energy is compared across iterates whose
/// differences approach the rounding level of a plain sum.
pub(crate) fn compensated_sum(terms: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for t in terms {
        let s = sum + t;
        if sum.abs() >= t.abs() {
            comp += (sum - s) + t;
        } else {
            comp += (t - s) + sum;
        }
        sum = s;
    }
    sum + comp
}

fn check_shapes(u: &Field, a: &GridFunction) -> Result<()> {
    u.check_grid(a)?;
    if !u.is_finite() {
        return Err(Error::InvalidParameter(
            "field has non-finite values".into(),
        ));
    }
    Ok(())
}

/// Nodewise Lagrangian density `½|∇U|² + A V(U)` using [`grid::gradient_sq`].
pub fn lagrangian(u: &Field, a: &GridFunction, v: &Potential) -> Result<GridFunction> {
    check_shapes(u, a)?;
    let g2 = grid::gradient_sq(u);
    let values = g2
        .values()
        .iter()
        .zip(u.values())
        .zip(a.values())
        .map(|((g, u), a)| 0.5 * g + a * v.eval(*u))
        .collect();
    GridFunction::new(u.grid().clone(), values)
}

/// Slab energies and total renormalized energy `J` of `u` for the sampled
/// coefficient `a`. Passing `A_p`, `A(ε·)` or a constant sampling gives the
/// comparison functionals.
pub fn total_energy(u: &Field, a: &GridFunction, v: &Potential) -> Result<EnergyBreakdown> {
    check_shapes(u, a)?;
    Ok(Functional::lagrangian(u.grid(), a.values(), v).breakdown(u.values()))
}

/// Gradient of the discrete `J` with respect to the nodal values, zero on
/// the clamped end planes.
pub fn energy_gradient(u: &Field, a: &GridFunction, v: &Potential) -> Result<GridFunction> {
    check_shapes(u, a)?;
    let mut out = vec![0.0; u.grid().len()];
    Functional::lagrangian(u.grid(), a.values(), v).gradient(u.values(), true, &mut out);
    GridFunction::new(u.grid().clone(), out)
}

/// Interior residual `-Δ_h U + A V'(U)` and its norms.
#[derive(Debug, Clone)]
pub struct ResidualReport {
    /// `NaN` on the axial end planes.
    pub residual: GridFunction,
    pub max_norm: f64,
    /// Trapezoid-weighted `L²` norm over the interior planes.
    pub l2_norm: f64,
}

pub fn pde_residual(u: &Field, a: &GridFunction, v: &Potential) -> Result<ResidualReport> {
    check_shapes(u, a)?;
    let grid = u.grid();
    let nc = grid.cross_count();
    let mut r = grid::laplacian(u).into_values();
    let mut max_norm: f64 = 0.0;
    let mut l2 = 0.0;
    let weights = grid.node_weights();
    for idx in nc..grid.len() - nc {
        let val = -r[idx] + a.values()[idx] * v.deriv(u.values()[idx]);
        r[idx] = val;
        max_norm = max_norm.max(val.abs());
        l2 += weights[idx] * val * val;
    }
    Ok(ResidualReport {
        residual: GridFunction::new(grid.clone(), r)?,
        max_norm,
        l2_norm: l2.sqrt(),
    })
}

/// `∫_{-1}^{1} ∫_D |∇u|² + V(u)` on a grid spanning `x in [-1, 1]`.
pub fn beta_functional(u: &Field, v: &Potential) -> Result<f64> {
    check_two_slab_grid(u.grid())?;
    Ok(Functional::unweighted(u.grid(), v).value(u.values()))
}

fn check_two_slab_grid(grid: &CylinderGrid) -> Result<()> {
    if grid.half_length() != 1 {
        return Err(Error::InvalidGrid(format!(
            "the two-slab functional lives on (-1, 1) x D, got T = {}",
            grid.half_length()
        )));
    }
    Ok(())
}

/// Solver settings for [`compute_beta`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct BetaConfig {
    pub max_iterations: usize,
    /// Stop once the relative energy decrease stays below this for
    /// [`BetaConfig::stall_window`] iterations.
    pub relative_tolerance: f64,
    pub stall_window: usize,
}

impl Default for BetaConfig {
    fn default() -> Self {
        Self {
            max_iterations: 50_000,
            relative_tolerance: 1e-13,
            stall_window: 20,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BetaResult {
    pub tau: f64,
    /// `min{1, A0}`.
    pub tilde_a0: f64,
    /// Smallest value of the two-slab functional found over the constraint set.
    pub infimum: f64,
    /// `tilde_a0 * infimum`.
    pub beta: f64,
    /// `‖u - 1‖` on `(-1, 0) x D` and `(0, 1) x D` at the returned field.
    pub left_norm: f64,
    pub right_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(skip)]
    pub minimizer: Option<Field>,
}

fn distance_to_one(grid: &CylinderGrid, u: &[f64], k: i64) -> f64 {
    let nodes = grid.slab_nodes(k).expect("two-slab grid");
    let (first, last) = (*nodes.start(), *nodes.end());
    let nc = grid.cross_count();
    let hx = grid.h_x();
    let mut acc = 0.0;
    for i in nodes {
        let wx = if i == first || i == last {
            0.5 * hx
        } else {
            hx
        };
        let plane: Vec<f64> = u[i * nc..(i + 1) * nc]
            .iter()
            .map(|v| (v - 1.0).powi(2))
            .collect();
        acc += wx * grid::plane_integral(grid, &plane);
    }
    acc.sqrt()
}

/// Maps `u` into `{‖u-1‖_left >= τ/2} ∩ {‖u-1‖_right <= 2τ}` by alternating
/// radial projections around the constant 1 on each half.
fn project_two_slab(grid: &CylinderGrid, u: &mut [f64], tau: f64) {
    let nc = grid.cross_count();
    let mid = grid.plane_of(0).expect("x = 0 is a grid plane");
    let (lo, hi) = (0.5 * tau, 2.0 * tau);
    for _ in 0..200 {
        let left = distance_to_one(grid, u, -1);
        if left < lo {
            let span = &mut u[..(mid + 1) * nc];
            if left == 0.0 {
                let s = lo / grid.cross().measure().sqrt();
                span.iter_mut().for_each(|v| *v = 1.0 - s);
            } else {
                let s = lo / left * (1.0 + 1e-12);
                span.iter_mut().for_each(|v| *v = 1.0 + (*v - 1.0) * s);
            }
        }
        let right = distance_to_one(grid, u, 0);
        if right > hi {
            let s = hi / right * (1.0 - 1e-12);
            u[mid * nc..]
                .iter_mut()
                .for_each(|v| *v = 1.0 + (*v - 1.0) * s);
        }
        if distance_to_one(grid, u, -1) >= lo && distance_to_one(grid, u, 0) <= hi {
            return;
        }
    }
}

/// `β(τ) = min{1, A0} · inf I_{*,τ}` over the discrete constraint set, by
/// projected spectral gradient descent from the feasible constant field
/// `1 - τ / (2 √|D|)`. The returned value is the energy of a feasible
/// field, hence an upper bound for the discrete infimum.
pub fn compute_beta(
    tau: f64,
    v: &Potential,
    a0: f64,
    grid2: &std::sync::Arc<CylinderGrid>,
    cfg: &BetaConfig,
) -> Result<BetaResult> {
    check_two_slab_grid(grid2)?;
    let measure = grid2.cross().measure();
    if !(tau > 0.0 && tau < measure.sqrt()) {
        return Err(Error::InvalidParameter(format!(
            "tau must lie in (0, sqrt|Omega_1|) = (0, {}), got {tau}",
            measure.sqrt()
        )));
    }
    if !(a0 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "A0 must be positive, got {a0}"
        )));
    }
    let f = Functional::unweighted(grid2, v);
    let n = grid2.len();
    let w = f.weights().to_vec();

    let mut u = vec![1.0 - tau / (2.0 * measure.sqrt()); n];
    project_two_slab(grid2, &mut u, tau);
    let mut g = vec![0.0; n];
    let mut energy = f.value_and_gradient(&u, false, &mut g);

    let h_min = (0..grid2.cross().dim())
        .map(|a| grid2.cross().spacing(a))
        .fold(grid2.h_x(), f64::min);
    let mut alpha = h_min * h_min / 8.0;
    let mut trial = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut stall = 0;
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iterations {
        iterations += 1;
        let mut accepted = false;
        let mut step = alpha;
        for _ in 0..60 {
            for i in 0..n {
                trial[i] = u[i] - step * g[i] / w[i];
            }
            project_two_slab(grid2, &mut trial, tau);
            let decrease: f64 = (0..n).map(|i| g[i] * (trial[i] - u[i])).sum();
            let e_new = f.value(&trial);
            if e_new <= energy + 1e-4 * decrease.min(0.0) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            converged = true;
            break;
        }
        let e_new = f.value_and_gradient(&trial, false, &mut g_new);
        // Barzilai-Borwein step in the weighted metric
        let (mut sds, mut sy) = (0.0, 0.0);
        for i in 0..n {
            let s = trial[i] - u[i];
            sds += w[i] * s * s;
            sy += s * (g_new[i] - g[i]);
        }
        alpha = if sy > 0.0 {
            (sds / sy).clamp(1e-12, 1e6)
        } else {
            step * 2.0
        };
        let rel = (energy - e_new).abs() / energy.abs().max(f64::MIN_POSITIVE);
        std::mem::swap(&mut u, &mut trial);
        std::mem::swap(&mut g, &mut g_new);
        energy = e_new;
        if rel <= cfg.relative_tolerance {
            stall += 1;
            if stall >= cfg.stall_window {
                converged = true;
                break;
            }
        } else {
            stall = 0;
        }
    }
    let tilde_a0 = a0.min(1.0);
    Ok(BetaResult {
        tau,
        tilde_a0,
        infimum: energy,
        beta: tilde_a0 * energy,
        left_norm: distance_to_one(grid2, &u, -1),
        right_norm: distance_to_one(grid2, &u, 0),
        iterations,
        converged,
        minimizer: Some(Field::new(grid2.clone(), u)?),
    })
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::gamma::seed_phi;
    use crate::grid::{laplacian, CrossSection};
    use crate::model::{sample_on_grid, CoefficientField};

    fn grid1d(t: i64, h: f64, n: usize) -> Arc<CylinderGrid> {
        Arc::new(CylinderGrid::new(t, h, CrossSection::interval(1.0, n).unwrap()).unwrap())
    }

    #[test]
    fn wells_have_zero_energy() {
        let g = grid1d(3, 0.1, 5);
        let v = Potential::ginzburg_landau();
        let a = GridFunction::constant(g.clone(), 1.3);
        for c in [1.0, -1.0] {
            let u = Field::constant(g.clone(), c);
            assert!(lagrangian(&u, &a, &v)
                .unwrap()
                .values()
                .iter()
                .all(|x| *x == 0.0));
            let e = total_energy(&u, &a, &v).unwrap();
            assert_eq!(e.total, 0.0);
            let grad = energy_gradient(&u, &a, &v).unwrap();
            assert!(grad.values().iter().all(|x| *x == 0.0));
        }
        let zero = Field::constant(g.clone(), 0.0);
        let one = GridFunction::constant(g.clone(), 1.0);
        assert!(lagrangian(&zero, &one, &v)
            .unwrap()
            .values()
            .iter()
            .all(|x| *x == 1.0));
    }

    #[test]
    fn lagrangian_of_seed_vanishes_off_transition() {
        let g = grid1d(3, 0.1, 3);
        let v = Potential::ginzburg_landau();
        let a = GridFunction::constant(g.clone(), 1.0);
        let phi = seed_phi(0, &g).unwrap();
        let l = lagrangian(&phi, &a, &v).unwrap();
        for (i, x) in g.x().iter().enumerate() {
            if *x < -1e-12 || *x > 1.0 + 1e-12 {
                for c in 0..g.cross_count() {
                    assert_eq!(l.at(i, c), 0.0, "x = {x}");
                }
            }
        }
    }

    #[test]
    fn seed_energy_converges_to_closed_form() {
        let v = Potential::ginzburg_landau();
        let mut errors = Vec::new();
        for h in [0.1, 0.05, 0.025] {
            let g = grid1d(3, h, 3);
            let a = GridFunction::constant(g.clone(), 1.0);
            let e = total_energy(&seed_phi(0, &g).unwrap(), &a, &v).unwrap();
            for k in g.slab_range().filter(|k| *k != 0) {
                assert_eq!(e.slab(k).unwrap(), 0.0);
            }
            assert!((e.dirichlet_part - 2.0).abs() < 1e-12);
            errors.push((e.slab(0).unwrap() - 38.0 / 15.0).abs());
        }
        // the potential integrand has vanishing slope at both faces, so the
        // trapezoid error is fourth order: Richardson ratio ≈ 16
        for w in errors.windows(2) {
            assert!((w[0] / w[1] - 16.0).abs() < 0.5, "{errors:?}");
        }
    }

    #[test]
    fn change_resolves_steps_below_the_rounding_of_the_total() {
        let g = Arc::new(
            CylinderGrid::new(
                2,
                0.25,
                CrossSection::rectangle([1.0, 0.5], [4, 3]).unwrap(),
            )
            .unwrap(),
        );
        let v = Potential::ginzburg_landau();
        let a = sample_on_grid(&CoefficientField::cosine(2.0, 1.0).unwrap(), &g);
        let f = Functional::lagrangian(&g, a.values(), &v);
        // dyadic data, so every perturbed field below is exact
        let u = Field::from_fn(g.clone(), |x, y| {
            (57.6 * (0.7 * x + y[0] - 0.4 * y[1]).sin()).round() / 64.0
        });
        let phi: Vec<f64> = (0..g.len())
            .map(|i| ((i * 7919) % 13) as f64 / 16.0 - 0.375)
            .collect();
        let moved = |s: f64| -> Vec<f64> {
            u.values()
                .iter()
                .zip(&phi)
                .map(|(u, p)| u + s * p)
                .collect()
        };

        let big = moved(0.125);
        let plain = f.value(&big) - f.value(u.values());
        assert!((f.change(u.values(), &big) - plain).abs() <= 1e-12 * plain.abs());

        // at s = 2^-30 the change is ~1e-9 of the total; Richardson removes
        // the quadratic term and what is left must be the linear model
        let mut grad = vec![0.0; g.len()];
        f.gradient(u.values(), false, &mut grad);
        let slope: f64 = grad.iter().zip(&phi).map(|(g, p)| g * p).sum();
        let s = 2f64.powi(-30);
        let linear =
            2.0 * f.change(u.values(), &moved(s)) - 0.5 * f.change(u.values(), &moved(2.0 * s));
        assert!(
            (linear - s * slope).abs() <= 1e-8 * (s * slope).abs(),
            "{linear} vs {}",
            s * slope
        );
    }

    #[test]
    fn breakdown_is_consistent() {
        let g = Arc::new(
            CylinderGrid::new(
                2,
                0.25,
                CrossSection::rectangle([1.0, 0.5], [4, 3]).unwrap(),
            )
            .unwrap(),
        );
        let v = Potential::ginzburg_landau();
        let u = Field::from_fn(g.clone(), |x, y| (0.7 * x + y[0] - 0.4 * y[1]).sin());
        let a = GridFunction::from_fn(g.clone(), |x, _| 1.5 + 0.5 * x.cos());
        let e = total_energy(&u, &a, &v).unwrap();
        let sum: f64 = e.per_slab.iter().sum();
        assert!((e.total - sum).abs() <= 1e-12 * e.total);
        assert!((e.total - e.dirichlet_part - e.potential_part).abs() <= 1e-12 * e.total);
        let f = Functional::lagrangian(&g, a.values(), &v);
        assert!((f.value(u.values()) - e.total).abs() <= 1e-12 * e.total);
    }

    #[test]
    fn gradient_is_weighted_residual() {
        for cross in [
            CrossSection::interval(1.0, 6).unwrap(),
            CrossSection::rectangle([1.0, 2.0], [4, 5]).unwrap(),
        ] {
            let g = Arc::new(CylinderGrid::new(1, 0.125, cross).unwrap());
            let v = Potential::ginzburg_landau();
            let u = Field::from_fn(g.clone(), |x, y| {
                0.9 * (1.3 * x + y[0]).cos() * (0.2 + y.last().unwrap()).sin()
            });
            let a = GridFunction::from_fn(g.clone(), |x, y| 1.0 + 0.3 * (x * y[0]).sin().abs());
            let grad = energy_gradient(&u, &a, &v).unwrap();
            let lap = laplacian(&u);
            let w = g.node_weights();
            let nc = g.cross_count();
            for (idx, w) in w.iter().enumerate().take(g.len() - nc).skip(nc) {
                let r = -lap.values()[idx] + a.values()[idx] * v.deriv(u.values()[idx]);
                assert!((grad.values()[idx] - w * r).abs() < 1e-12 * (1.0 + (w * r).abs()));
            }
            assert!(grad.values()[..nc].iter().all(|x| *x == 0.0));
        }
    }

    #[test]
    fn constant_residuals() {
        let g = grid1d(2, 0.25, 4);
        let v = Potential::ginzburg_landau();
        let a = GridFunction::constant(g.clone(), 1.0);
        let r = pde_residual(&Field::constant(g.clone(), 0.0), &a, &v).unwrap();
        assert_eq!(r.max_norm, 0.0);
        let r = pde_residual(&Field::constant(g.clone(), 0.5), &a, &v).unwrap();
        assert!((r.max_norm - 1.5).abs() < 1e-15);
        let nc = g.cross_count();
        assert!(r.residual.values()[nc..g.len() - nc]
            .iter()
            .all(|x| (*x + 1.5).abs() < 1e-15));
        assert!(r.residual.values()[0].is_nan());
        let phi = seed_phi(0, &g).unwrap();
        assert!(pde_residual(&phi, &a, &v).unwrap().max_norm > 0.1);
    }

    #[test]
    fn beta_rejects_bad_tau() {
        let g = grid1d(1, 0.1, 5);
        let v = Potential::ginzburg_landau();
        let cfg = BetaConfig::default();
        assert!(compute_beta(0.0, &v, 1.0, &g, &cfg).is_err());
        assert!(compute_beta(1.0, &v, 1.0, &g, &cfg).is_err());
        assert!(compute_beta(0.1, &v, 1.0, &grid1d(2, 0.1, 5), &cfg).is_err());
    }

    #[test]
    fn one_is_infeasible_and_projection_restores() {
        let g = grid1d(1, 0.1, 5);
        let mut u = vec![1.0; g.len()];
        assert_eq!(distance_to_one(&g, &u, -1), 0.0);
        project_two_slab(&g, &mut u, 0.1);
        assert!(distance_to_one(&g, &u, -1) >= 0.05);
        assert!(distance_to_one(&g, &u, 0) <= 0.2);
        let mut far = vec![-1.0; g.len()];
        project_two_slab(&g, &mut far, 0.1);
        assert!(distance_to_one(&g, &far, -1) >= 0.05);
        assert!(distance_to_one(&g, &far, 0) <= 0.2 * (1.0 + 1e-9));
    }

    #[test]
    fn beta_is_positive_with_tilde_a0() {
        let g = grid1d(1, 0.1, 6);
        let v = Potential::ginzburg_landau();
        let r = compute_beta(0.1, &v, 0.5, &g, &BetaConfig::default()).unwrap();
        assert!(r.infimum > 0.0);
        assert_eq!(r.tilde_a0, 0.5);
        assert_eq!(r.beta, 0.5 * r.infimum);
        assert!(r.left_norm >= 0.05 && r.right_norm <= 0.2);
        let seed = 1.0 - 0.05;
        let seed_energy = 2.0 * (seed * seed - 1.0f64).powi(2);
        assert!(r.infimum <= seed_energy);
    }
}
