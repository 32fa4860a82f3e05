//! Tensor grids on the truncated cylinder `(-T, T) x D` and the finite
//! difference / quadrature operators used by the energy.
//!
//! Nodes are stored axial-major: the flat index of axial node `i` and cross
//! node `c` is `i * cross_count + c`. Cross nodes of a two-dimensional
//! section are stored with the last axis fastest.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rectangular cross-section `D = (0, L_1) x ... x (0, L_d)` with `d` in {1, 2}.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSection {
    extents: Vec<f64>,
    nodes: Vec<usize>,
}

impl CrossSection {
    pub fn new(extents: Vec<f64>, nodes: Vec<usize>) -> Result<Self> {
        if extents.is_empty() || extents.len() > 2 {
            return Err(Error::InvalidGrid(format!(
                "cross-section dimension must be 1 or 2, got {}",
                extents.len()
            )));
        }
        if extents.len() != nodes.len() {
            return Err(Error::InvalidGrid(
                "cross-section needs one node count per extent".into(),
            ));
        }
        if let Some(e) = extents.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            return Err(Error::InvalidGrid(format!(
                "cross-section extents must be positive, got {e}"
            )));
        }
        if let Some(n) = nodes.iter().find(|n| **n < 3) {
            return Err(Error::InvalidGrid(format!(
                "cross-section needs at least 3 nodes per axis, got {n}"
            )));
        }
        Ok(Self { extents, nodes })
    }

    /// Interval `(0, extent)` sampled with `nodes` points.
    pub fn interval(extent: f64, nodes: usize) -> Result<Self> {
        Self::new(vec![extent], vec![nodes])
    }

    pub fn rectangle(extents: [f64; 2], nodes: [usize; 2]) -> Result<Self> {
        Self::new(extents.to_vec(), nodes.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.extents.len()
    }

    pub fn extents(&self) -> &[f64] {
        &self.extents
    }

    pub fn nodes(&self) -> &[usize] {
        &self.nodes
    }

    /// Lebesgue measure `|D|`.
    pub fn measure(&self) -> f64 {
        self.extents.iter().product()
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.extents[axis] / (self.nodes[axis] - 1) as f64
    }

    /// Number of nodes in one cross-sectional plane.
    pub fn count(&self) -> usize {
        self.nodes.iter().product()
    }

    fn axis_coords(&self, axis: usize) -> Vec<f64> {
        let n = self.nodes[axis];
        let last = (n - 1) as f64;
        (0..n)
            .map(|j| self.extents[axis] * (j as f64) / last)
            .collect()
    }

    fn axis_weights(&self, axis: usize) -> Vec<f64> {
        trapezoid_weights(self.nodes[axis], self.spacing(axis))
    }
}

fn trapezoid_weights(n: usize, h: f64) -> Vec<f64> {
    let mut w = vec![h; n];
    w[0] = 0.5 * h;
    w[n - 1] = 0.5 * h;
    w
}

/// Truncated cylinder `[-T, T] x D` with unit slabs aligned to grid lines.
#[derive(Debug, Clone, PartialEq)]
pub struct CylinderGrid {
    half_length: i64,
    nodes_per_unit: usize,
    cross: CrossSection,
    x: Vec<f64>,
    /// Cross coordinates per cross node, `dim` entries each.
    y: Vec<Vec<f64>>,
    axial_weights: Vec<f64>,
    cross_weights: Vec<f64>,
}

impl CylinderGrid {
    /// Builds the grid for `x in [-T, T]` with axial spacing `h_x`.
    ///
    /// `1 / h_x` must be a positive integer so that every slab face `x = k`
    /// is a grid plane.
    pub fn new(half_length: i64, h_x: f64, cross: CrossSection) -> Result<Self> {
        if half_length < 1 {
            return Err(Error::InvalidGrid(format!(
                "truncation half-length T must be a positive integer, got {half_length}"
            )));
        }
        if !(h_x.is_finite() && h_x > 0.0 && h_x <= 1.0) {
            return Err(Error::InvalidGrid(format!(
                "axial spacing h_x must lie in (0, 1], got {h_x}"
            )));
        }
        let inv = 1.0 / h_x;
        let nodes_per_unit = inv.round();
        if (inv - nodes_per_unit).abs() > 1e-9 * nodes_per_unit {
            return Err(Error::InvalidGrid(format!(
                "1/h_x must be a positive integer so slab faces lie on grid lines (h_x = {h_x}, 1/h_x = {inv})"
            )));
        }
        let nodes_per_unit = nodes_per_unit as usize;
        Ok(Self::from_parts(half_length, nodes_per_unit, cross))
    }

    fn from_parts(half_length: i64, nodes_per_unit: usize, cross: CrossSection) -> Self {
        let npu = nodes_per_unit as f64;
        let n_axial = 2 * half_length as usize * nodes_per_unit + 1;
        let offset = (half_length as usize * nodes_per_unit) as f64;
        let x = (0..n_axial).map(|i| (i as f64 - offset) / npu).collect();
        let axial_weights = trapezoid_weights(n_axial, 1.0 / npu);

        let axes: Vec<Vec<f64>> = (0..cross.dim()).map(|a| cross.axis_coords(a)).collect();
        let axis_w: Vec<Vec<f64>> = (0..cross.dim()).map(|a| cross.axis_weights(a)).collect();
        let mut y = Vec::with_capacity(cross.count());
        let mut cross_weights = Vec::with_capacity(cross.count());
        match cross.dim() {
            1 => {
                for (j, yj) in axes[0].iter().enumerate() {
                    y.push(vec![*yj]);
                    cross_weights.push(axis_w[0][j]);
                }
            }
            _ => {
                for (j, yj) in axes[0].iter().enumerate() {
                    for (l, zl) in axes[1].iter().enumerate() {
                        y.push(vec![*yj, *zl]);
                        cross_weights.push(axis_w[0][j] * axis_w[1][l]);
                    }
                }
            }
        }
        Self {
            half_length,
            nodes_per_unit,
            cross,
            x,
            y,
            axial_weights,
            cross_weights,
        }
    }

    /// `T`.
    pub fn half_length(&self) -> i64 {
        self.half_length
    }

    pub fn h_x(&self) -> f64 {
        1.0 / self.nodes_per_unit as f64
    }

    pub fn nodes_per_unit(&self) -> usize {
        self.nodes_per_unit
    }

    pub fn cross(&self) -> &CrossSection {
        &self.cross
    }

    pub fn axial_count(&self) -> usize {
        self.x.len()
    }

    pub fn cross_count(&self) -> usize {
        self.y.len()
    }

    pub fn len(&self) -> usize {
        self.axial_count() * self.cross_count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn x(&self) -> &[f64] {
        &self.x
    }

    /// Coordinates of cross node `c`.
    pub fn y(&self, c: usize) -> &[f64] {
        &self.y[c]
    }

    #[inline]
    pub fn index(&self, i: usize, c: usize) -> usize {
        i * self.y.len() + c
    }

    /// Slab indices `k` with `Omega_k = (k, k+1) x D` inside the grid: `[-T, T)`.
    pub fn slab_range(&self) -> std::ops::Range<i64> {
        -self.half_length..self.half_length
    }

    pub fn slab_count(&self) -> usize {
        2 * self.half_length as usize
    }

    /// Axial node index of the plane `x = k`.
    pub fn plane_of(&self, k: i64) -> Option<usize> {
        if k < -self.half_length || k > self.half_length {
            return None;
        }
        Some(((k + self.half_length) as usize) * self.nodes_per_unit)
    }

    /// Axial node range `[first, last]` (inclusive) covering slab `k`.
    pub fn slab_nodes(&self, k: i64) -> Result<std::ops::RangeInclusive<usize>> {
        if !self.slab_range().contains(&k) {
            return Err(Error::SlabOutOfRange {
                k,
                min: -self.half_length,
                max: self.half_length,
            });
        }
        let first = self.plane_of(k).expect("checked range");
        Ok(first..=first + self.nodes_per_unit)
    }

    /// Trapezoid weights along `x` over the whole truncated interval.
    pub fn axial_weights(&self) -> &[f64] {
        &self.axial_weights
    }

    /// Product trapezoid weights over the cross-section.
    pub fn cross_weights(&self) -> &[f64] {
        &self.cross_weights
    }

    /// Full nodal quadrature weights (axial x cross).
    pub fn node_weights(&self) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.len());
        for wx in &self.axial_weights {
            w.extend(self.cross_weights.iter().map(|wc| wx * wc));
        }
        w
    }

    /// Index of the neighbour of cross node `c` along `axis`, with even
    /// reflection across the boundary.
    #[inline]
    fn cross_neighbour(&self, c: usize, axis: usize, forward: bool) -> usize {
        let nodes = self.cross.nodes();
        let (stride, pos, n) = match (self.cross.dim(), axis) {
            (1, _) => (1, c, nodes[0]),
            (_, 0) => (nodes[1], c / nodes[1], nodes[0]),
            _ => (1, c % nodes[1], nodes[1]),
        };
        let target = if forward {
            if pos + 1 == n {
                pos - 1
            } else {
                pos + 1
            }
        } else if pos == 0 {
            1
        } else {
            pos - 1
        };
        c - pos * stride + target * stride
    }

    /// The cross-sectional edges as `(c, c_next, axis)` triples.
    pub(crate) fn cross_edges(&self) -> Vec<(usize, usize, usize)> {
        let nodes = self.cross.nodes();
        let mut edges = Vec::new();
        match self.cross.dim() {
            1 => {
                for j in 0..nodes[0] - 1 {
                    edges.push((j, j + 1, 0));
                }
            }
            _ => {
                for j in 0..nodes[0] {
                    for l in 0..nodes[1] {
                        let c = j * nodes[1] + l;
                        if j + 1 < nodes[0] {
                            edges.push((c, c + nodes[1], 0));
                        }
                        if l + 1 < nodes[1] {
                            edges.push((c, c + 1, 1));
                        }
                    }
                }
            }
        }
        edges
    }

    /// Weight of a cross edge along `axis` starting at `c`: its length times
    /// the trapezoid weight of the transverse cross axis (if any).
    pub(crate) fn cross_edge_weight(&self, c: usize, axis: usize) -> f64 {
        let nodes = self.cross.nodes();
        match self.cross.dim() {
            1 => self.cross.spacing(0),
            _ => {
                let (pos, n, other) = if axis == 0 {
                    (c % nodes[1], nodes[1], 1)
                } else {
                    (c / nodes[1], nodes[0], 0)
                };
                let h_other = self.cross.spacing(other);
                let w_other = if pos == 0 || pos + 1 == n {
                    0.5 * h_other
                } else {
                    h_other
                };
                self.cross.spacing(axis) * w_other
            }
        }
    }
}

/// Scalar nodal values on a [`CylinderGrid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Arc<CylinderGrid>,
    values: Vec<f64>,
}

/// A candidate solution. Admissible fields take values in `[-1, 1]`; use
/// [`crate::gamma::clip`] to enforce that.
pub type Field = GridFunction;

impl GridFunction {
    pub fn new(grid: Arc<CylinderGrid>, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch {
                expected: grid.len(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn constant(grid: Arc<CylinderGrid>, value: f64) -> Self {
        let values = vec![value; grid.len()];
        Self { grid, values }
    }

    /// Evaluates `f(x, y)` at every node.
    pub fn from_fn(grid: Arc<CylinderGrid>, f: impl Fn(f64, &[f64]) -> f64) -> Self {
        let mut values = Vec::with_capacity(grid.len());
        for x in grid.x() {
            for c in 0..grid.cross_count() {
                values.push(f(*x, grid.y(c)));
            }
        }
        Self { grid, values }
    }

    pub fn grid(&self) -> &Arc<CylinderGrid> {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn at(&self, i: usize, c: usize) -> f64 {
        self.values[self.grid.index(i, c)]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|v| f(*v)).collect(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Whether every value lies in `[-1, 1]`.
    pub fn is_within_bounds(&self) -> bool {
        self.values.iter().all(|v| (-1.0..=1.0).contains(v))
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub(crate) fn check_grid(&self, other: &GridFunction) -> Result<()> {
        if Arc::ptr_eq(&self.grid, &other.grid) || *self.grid == *other.grid {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }
}

/// Nodewise `|grad U|^2`.
///
/// Centered differences in the interior, one-sided second-order differences
/// on the axial end planes, and even ghost reflection across the lateral
/// boundary (so the normal derivative there vanishes).
pub fn gradient_sq(u: &GridFunction) -> GridFunction {
    let grid = u.grid();
    let nx = grid.axial_count();
    let nc = grid.cross_count();
    let hx = grid.h_x();
    let v = u.values();
    let dim = grid.cross().dim();
    let mut out = vec![0.0; grid.len()];
    for i in 0..nx {
        for c in 0..nc {
            // one-sided stencils written in differences so constants give 0
            let ux = if i == 0 {
                let u0 = v[grid.index(0, c)];
                (4.0 * (v[grid.index(1, c)] - u0) - (v[grid.index(2, c)] - u0)) / (2.0 * hx)
            } else if i + 1 == nx {
                let un = v[grid.index(i, c)];
                (4.0 * (un - v[grid.index(i - 1, c)]) - (un - v[grid.index(i - 2, c)])) / (2.0 * hx)
            } else {
                (v[grid.index(i + 1, c)] - v[grid.index(i - 1, c)]) / (2.0 * hx)
            };
            let mut g2 = ux * ux;
            for axis in 0..dim {
                let hy = grid.cross().spacing(axis);
                let fwd = grid.cross_neighbour(c, axis, true);
                let bwd = grid.cross_neighbour(c, axis, false);
                // reflected neighbours coincide on the boundary, giving zero
                let uy = (v[grid.index(i, fwd)] - v[grid.index(i, bwd)]) / (2.0 * hy);
                g2 += uy * uy;
            }
            out[grid.index(i, c)] = g2;
        }
    }
    GridFunction {
        grid: grid.clone(),
        values: out,
    }
}

/// Second-order Laplacian (3-point per axis) with lateral ghost reflection.
///
/// Axial end planes are not evaluated and carry `NaN`.
pub fn laplacian(u: &GridFunction) -> GridFunction {
    let grid = u.grid();
    let mut out = vec![f64::NAN; grid.len()];
    laplacian_into(grid, u.values(), &mut out);
    GridFunction {
        grid: grid.clone(),
        values: out,
    }
}

/// Writes the discrete Laplacian of `v` into `out` on interior axial planes.
/// End-plane entries of `out` are left untouched.
pub(crate) fn laplacian_into(grid: &CylinderGrid, v: &[f64], out: &mut [f64]) {
    let nx = grid.axial_count();
    let nc = grid.cross_count();
    let ihx2 = 1.0 / (grid.h_x() * grid.h_x());
    let dim = grid.cross().dim();
    let ihy2: Vec<f64> = (0..dim)
        .map(|a| {
            let h = grid.cross().spacing(a);
            1.0 / (h * h)
        })
        .collect();
    let nbrs: Vec<[(usize, usize); 2]> = (0..nc)
        .map(|c| {
            let mut n = [(c, c); 2];
            for (axis, slot) in n.iter_mut().enumerate().take(dim) {
                *slot = (
                    grid.cross_neighbour(c, axis, false),
                    grid.cross_neighbour(c, axis, true),
                );
            }
            n
        })
        .collect();
    for i in 1..nx - 1 {
        let row = i * nc;
        for c in 0..nc {
            let center = v[row + c];
            let mut lap = (v[row + nc + c] - 2.0 * center + v[row - nc + c]) * ihx2;
            for axis in 0..dim {
                let (b, f) = nbrs[c][axis];
                lap += (v[row + f] - 2.0 * center + v[row + b]) * ihy2[axis];
            }
            out[row + c] = lap;
        }
    }
}

/// Composite trapezoidal integral of `f` over the slab `Omega_k`.
///
/// Face planes carry half weight, so summing over all slabs reproduces
/// [`integral`].
pub fn slab_integral(f: &GridFunction, k: i64) -> Result<f64> {
    let grid = f.grid();
    let range = grid.slab_nodes(k)?;
    let (first, last) = (*range.start(), *range.end());
    let hx = grid.h_x();
    let mut acc = 0.0;
    for i in range {
        let wx = if i == first || i == last {
            0.5 * hx
        } else {
            hx
        };
        acc += wx
            * plane_integral(
                grid,
                &f.values()[i * grid.cross_count()..][..grid.cross_count()],
            );
    }
    Ok(acc)
}

/// Composite trapezoidal integral of `f` over the whole truncated domain.
pub fn integral(f: &GridFunction) -> f64 {
    let grid = f.grid();
    let nc = grid.cross_count();
    grid.axial_weights()
        .iter()
        .enumerate()
        .map(|(i, wx)| wx * plane_integral(grid, &f.values()[i * nc..][..nc]))
        .sum()
}

pub(crate) fn plane_integral(grid: &CylinderGrid, plane: &[f64]) -> f64 {
    plane
        .iter()
        .zip(grid.cross_weights())
        .map(|(v, w)| v * w)
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_cross(n: usize) -> CrossSection {
        CrossSection::interval(1.0, n).unwrap()
    }

    #[test]
    fn small_grid_coordinates() {
        let g = CylinderGrid::new(1, 0.5, unit_cross(3)).unwrap();
        assert_eq!(g.x(), &[-1.0, -0.5, 0.0, 0.5, 1.0]);
        assert_eq!(g.slab_count(), 2);
        assert_eq!(g.slab_range(), -1..1);
        assert_eq!(g.len(), 15);
    }

    #[test]
    fn ten_unit_grid() {
        let g = CylinderGrid::new(10, 0.1, unit_cross(3)).unwrap();
        assert_eq!(g.axial_count(), 201);
        assert_eq!(g.slab_count(), 20);
        assert_eq!(g.x()[100], 0.0);
        assert_eq!(g.x()[0], -10.0);
        assert_eq!(g.x()[200], 10.0);
    }

    #[test]
    fn rejects_non_dividing_spacing() {
        let err = CylinderGrid::new(10, 0.3, unit_cross(3)).unwrap_err();
        assert!(err.to_string().contains("1/h_x must be a positive integer"));
    }

    #[test]
    fn rejects_bad_cross_sections() {
        assert!(CrossSection::interval(1.0, 2).is_err());
        assert!(CrossSection::interval(0.0, 5).is_err());
        assert!(CrossSection::new(vec![1.0; 3], vec![3; 3]).is_err());
        assert!(CylinderGrid::new(0, 0.5, unit_cross(3)).is_err());
    }

    #[test]
    fn construction_is_bit_reproducible() {
        let a = CylinderGrid::new(7, 1.0 / 30.0, unit_cross(5)).unwrap();
        let b = CylinderGrid::new(7, 1.0 / 30.0, unit_cross(5)).unwrap();
        let bits = |g: &CylinderGrid| g.x().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
        assert_eq!(a, b);
    }

    #[test]
    fn slab_faces_are_grid_planes() {
        let g = CylinderGrid::new(3, 0.125, unit_cross(3)).unwrap();
        for k in -3..=3 {
            let i = g.plane_of(k).unwrap();
            assert_eq!(g.x()[i], k as f64);
        }
        assert!(g.slab_nodes(3).is_err());
        assert!(g.slab_nodes(-4).is_err());
    }

    #[test]
    fn two_dimensional_cross_weights_sum_to_measure() {
        let cross = CrossSection::rectangle([2.0, 0.5], [5, 7]).unwrap();
        let g = CylinderGrid::new(1, 0.25, cross).unwrap();
        let total: f64 = g.cross_weights().iter().sum();
        assert!((total - 1.0).abs() < 1e-14);
        assert_eq!(g.y(8), &[0.5, 1.0 / 12.0]);
    }

    #[test]
    fn gradient_of_constant_and_linear() {
        let g = Arc::new(CylinderGrid::new(2, 0.25, unit_cross(5)).unwrap());
        let c = GridFunction::constant(g.clone(), 0.3);
        assert!(gradient_sq(&c).values().iter().all(|v| *v == 0.0));
        let lin = GridFunction::from_fn(g.clone(), |x, _| x);
        let g2 = gradient_sq(&lin);
        for v in g2.values() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn laplacian_exact_on_quadratics() {
        let g = Arc::new(CylinderGrid::new(2, 0.25, unit_cross(5)).unwrap());
        let q = GridFunction::from_fn(g.clone(), |x, _| x * x);
        let lap = laplacian(&q);
        for i in 1..g.axial_count() - 1 {
            for c in 0..g.cross_count() {
                assert!((lap.at(i, c) - 2.0).abs() < 1e-11);
            }
        }
        assert!(lap.at(0, 0).is_nan());
        let c = GridFunction::constant(g.clone(), -0.7);
        let lap = laplacian(&c);
        assert!(lap.values()[g.cross_count()..g.len() - g.cross_count()]
            .iter()
            .all(|v| *v == 0.0));
    }

    #[test]
    fn lateral_neumann_zero_normal_derivative() {
        use std::f64::consts::PI;
        let g = Arc::new(CylinderGrid::new(1, 0.5, unit_cross(9)).unwrap());
        let u = GridFunction::from_fn(g.clone(), |_, y| (PI * y[0]).cos());
        let g2 = gradient_sq(&u);
        // at y = 0 and y = 1 only the normal derivative could contribute
        assert_eq!(g2.at(2, 0), 0.0);
        assert_eq!(g2.at(2, 8), 0.0);
    }

    #[test]
    fn neumann_ghost_matches_even_extension() {
        // A field symmetric about y = 0 evaluated on a doubled cross-section
        // must give the same interior stencil values as the ghost version.
        let half =
            Arc::new(CylinderGrid::new(1, 0.25, CrossSection::interval(1.0, 5).unwrap()).unwrap());
        let full =
            Arc::new(CylinderGrid::new(1, 0.25, CrossSection::interval(2.0, 9).unwrap()).unwrap());
        let f = |x: f64, y: f64| (x * 1.3).sin() * (1.0 + y * y * (2.0 - y) * (2.0 - y));
        let uh = GridFunction::from_fn(half.clone(), |x, y| f(x, y[0]));
        // full section (0, 2) is the even extension of (0, 1) reflected at y = 1
        let uf = GridFunction::from_fn(full.clone(), |x, y| f(x, y[0]));
        let lh = laplacian(&uh);
        let lf = laplacian(&uf);
        for i in 1..half.axial_count() - 1 {
            for c in 0..5 {
                assert!((lh.at(i, c) - lf.at(i, c)).abs() < 1e-12, "i={i} c={c}");
            }
        }
    }

    #[test]
    fn unit_slab_integrals() {
        let g = Arc::new(CylinderGrid::new(2, 0.1, unit_cross(4)).unwrap());
        let one = GridFunction::constant(g.clone(), 1.0);
        for k in g.slab_range() {
            assert!((slab_integral(&one, k).unwrap() - 1.0).abs() < 1e-14);
        }
        let x = GridFunction::from_fn(g.clone(), |x, _| x);
        assert!((slab_integral(&x, 0).unwrap() - 0.5).abs() < 1e-14);
        assert!(slab_integral(&one, 2).is_err());
    }
}
