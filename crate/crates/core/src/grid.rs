//! Periodic lattice on the 1- or 2-torus, coefficient sampling and the cell cover.
//!
//! Nodes are numbered with axis 0 varying fastest, so in 2-D the node at
//! lattice position `(i, j)` has index `i + N * j`.

use std::f64::consts::PI;

use nalgebra::Matrix2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    dim: usize,
    extent: f64,
    resolution: usize,
}

impl Grid {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn extent(&self) -> f64 {
        self.extent
    }

    /// Nodes per axis.
    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn spacing(&self) -> f64 {
        self.extent / self.resolution as f64
    }

    pub fn node_count(&self) -> usize {
        self.resolution.pow(self.dim as u32)
    }

    /// Lebesgue measure `h^d` carried by one node.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(self.dim as i32)
    }

    pub fn volume(&self) -> f64 {
        self.extent.powi(self.dim as i32)
    }

    pub fn lattice_index(&self, node: usize) -> [usize; 2] {
        let n = self.resolution;
        if self.dim == 1 {
            [node, 0]
        } else {
            [node % n, node / n]
        }
    }

    pub fn node_at(&self, index: [usize; 2]) -> usize {
        let n = self.resolution;
        if self.dim == 1 {
            index[0] % n
        } else {
            index[0] % n + n * (index[1] % n)
        }
    }

    /// Coordinates `x_i = i h`; the unused second axis is 0 in 1-D.
    pub fn coords(&self, node: usize) -> [f64; 2] {
        let h = self.spacing();
        let [i, j] = self.lattice_index(node);
        [i as f64 * h, j as f64 * h]
    }

    /// Neighbor of `node` shifted by `delta` lattice steps along `axis`, with wrap-around.
    pub fn shift(&self, node: usize, axis: usize, delta: isize) -> usize {
        let n = self.resolution as isize;
        let mut idx = self.lattice_index(node);
        let moved = (idx[axis] as isize + delta).rem_euclid(n);
        idx[axis] = moved as usize;
        self.node_at(idx)
    }

    fn axis_gap(&self, a: f64, b: f64) -> f64 {
        let d = (a - b).rem_euclid(self.extent);
        d.min(self.extent - d)
    }

    /// Periodic Euclidean distance between two points of the torus.
    pub fn point_distance(&self, a: [f64; 2], b: [f64; 2]) -> f64 {
        let mut s = 0.0;
        for axis in 0..self.dim {
            let g = self.axis_gap(a[axis], b[axis]);
            s += g * g;
        }
        s.sqrt()
    }

    pub fn distance(&self, a: usize, b: usize) -> f64 {
        self.point_distance(self.coords(a), self.coords(b))
    }

    /// Nodes within `radius` of `center`; `closed` selects `<=` over `<`.
    pub fn nodes_within(&self, center: [f64; 2], radius: f64, closed: bool) -> Vec<usize> {
        let tol = 1e-12 * self.extent;
        (0..self.node_count())
            .filter(|&i| {
                let d = self.point_distance(self.coords(i), center);
                if closed {
                    d <= radius + tol
                } else {
                    d < radius - tol
                }
            })
            .collect()
    }

    /// Measure of the closed ball `B(x, R)` as counted on the grid (node count times `h^d`).
    pub fn ball_measure(&self, radius: f64) -> f64 {
        self.nodes_within([0.0, 0.0], radius, true).len() as f64 * self.cell_volume()
    }

    /// Points per wavelength at frequency `mu`: `N * 2 pi / (mu L)`.
    pub fn points_per_wavelength(&self, mu: f64) -> f64 {
        if mu <= 0.0 {
            return f64::INFINITY;
        }
        self.resolution as f64 * 2.0 * PI / (mu * self.extent)
    }
}

pub fn build_torus(dim: usize, extent: f64, resolution: usize) -> Result<Grid> {
    if !(1..=2).contains(&dim) {
        return Err(Error::UnsupportedDimension(dim));
    }
    if !(extent > 0.0) || !extent.is_finite() {
        return Err(invalid("extent", format!("must be positive, got {extent}")));
    }
    if resolution < 4 {
        return Err(invalid("resolution", format!("need at least 4 nodes per axis, got {resolution}")));
    }
    Ok(Grid { dim, extent, resolution })
}

/// Symmetric 2x2 metric `g` stored as `(g11, g12, g22)`. In 1-D only `g11` is used.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Metric {
    pub const IDENTITY: Metric = Metric { xx: 1.0, xy: 0.0, yy: 1.0 };

    pub fn scaled(s: f64) -> Self {
        Metric { xx: s, xy: 0.0, yy: s }
    }

    pub fn min_eigenvalue(&self, dim: usize) -> f64 {
        if dim == 1 {
            return self.xx;
        }
        let m = Matrix2::new(self.xx, self.xy, self.xy, self.yy);
        m.symmetric_eigenvalues().min()
    }

    fn entries(&self, dim: usize) -> Vec<f64> {
        if dim == 1 {
            vec![self.xx]
        } else {
            vec![self.xx, self.xy, self.yy]
        }
    }
}

impl Default for Metric {
    fn default() -> Self {
        Metric::IDENTITY
    }
}

/// How the coefficients `kappa` and `g` are produced on the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
pub enum CoefficientSpec {
    Constant {
        kappa: f64,
        #[serde(default)]
        metric: Metric,
    },
    /// `kappa = mean + amplitude * avg_a sin(2 pi f x_a / L)`,
    /// `g = (metric_mean + metric_amplitude * avg_a cos(2 pi f x_a / L)) Id`
    /// plus an off-diagonal `metric_shear * cos(2 pi f (x_0 + x_1) / L)` in 2-D.
    SmoothPeriodic {
        kappa_mean: f64,
        kappa_amplitude: f64,
        #[serde(default = "one_u32")]
        frequency: u32,
        #[serde(default = "one_f64")]
        metric_mean: f64,
        #[serde(default)]
        metric_amplitude: f64,
        #[serde(default)]
        metric_shear: f64,
    },
    /// Piecewise-linear `kappa` along axis 0 through `(x, value)` knots spanning `[0, L]`;
    /// `g = metric_scale Id`.
    PiecewiseLinear {
        knots: Vec<[f64; 2]>,
        #[serde(default = "one_f64")]
        metric_scale: f64,
    },
    /// Random trigonometric polynomials: `kappa` in `[base - amplitude, base + amplitude]`,
    /// diagonal of `g` in `1 +- amplitude / 2`, off-diagonal bounded by `shear`.
    RandomSmooth {
        seed: u64,
        #[serde(default = "three_usize")]
        modes: usize,
        kappa_base: f64,
        amplitude: f64,
        #[serde(default)]
        shear: f64,
    },
}

fn one_u32() -> u32 {
    1
}
fn one_f64() -> f64 {
    1.0
}
fn three_usize() -> usize {
    3
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientField {
    pub kappa: Vec<f64>,
    pub metric: Vec<Metric>,
    /// Ellipticity certificate `a`: `kappa >= a` and `g >= a Id` at every node.
    pub ellipticity_lower: f64,
    /// Largest adjacent-node difference quotient over `kappa` and every entry of `g`.
    pub lipschitz_bound: f64,
}

impl CoefficientField {
    /// Validates a raw field against `grid` and computes its `(a, A)` certificates.
    pub fn from_samples(grid: &Grid, kappa: Vec<f64>, metric: Vec<Metric>) -> Result<Self> {
        let n = grid.node_count();
        if kappa.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: kappa.len() });
        }
        if metric.len() != n {
            return Err(Error::LengthMismatch { expected: n, got: metric.len() });
        }
        let (a, worst) = ellipticity(grid, &kappa, &metric);
        if !(a > 0.0) {
            return Err(Error::EllipticityViolated { node: worst, value: a });
        }
        let lipschitz = lipschitz_quotient(grid, &kappa, &metric);
        Ok(CoefficientField { kappa, metric, ellipticity_lower: a, lipschitz_bound: lipschitz })
    }

    pub fn kappa_max(&self) -> f64 {
        self.kappa.iter().cloned().fold(f64::MIN, f64::max)
    }

    pub fn kappa_min(&self) -> f64 {
        self.kappa.iter().cloned().fold(f64::MAX, f64::min)
    }

    /// Recomputes `(a, A)` from the stored samples.
    pub fn rescan(&self, grid: &Grid) -> (f64, f64) {
        let (a, _) = ellipticity(grid, &self.kappa, &self.metric);
        (a, lipschitz_quotient(grid, &self.kappa, &self.metric))
    }
}

fn ellipticity(grid: &Grid, kappa: &[f64], metric: &[Metric]) -> (f64, usize) {
    let mut best = f64::INFINITY;
    let mut worst_node = 0;
    for (i, (k, g)) in kappa.iter().zip(metric).enumerate() {
        let v = k.min(g.min_eigenvalue(grid.dim()));
        if v < best || v.is_nan() {
            best = v;
            worst_node = i;
        }
    }
    (best, worst_node)
}

fn lipschitz_quotient(grid: &Grid, kappa: &[f64], metric: &[Metric]) -> f64 {
    let h = grid.spacing();
    let mut q: f64 = 0.0;
    for node in 0..grid.node_count() {
        for axis in 0..grid.dim() {
            let next = grid.shift(node, axis, 1);
            q = q.max((kappa[next] - kappa[node]).abs() / h);
            let (ea, eb) = (metric[node].entries(grid.dim()), metric[next].entries(grid.dim()));
            for (x, y) in ea.iter().zip(&eb) {
                q = q.max((y - x).abs() / h);
            }
        }
    }
    q
}

pub fn sample_coefficients(spec: &CoefficientSpec, grid: &Grid) -> Result<CoefficientField> {
    let n = grid.node_count();
    let l = grid.extent();
    let dim = grid.dim();
    let (kappa, metric): (Vec<f64>, Vec<Metric>) = match spec {
        CoefficientSpec::Constant { kappa, metric } => (vec![*kappa; n], vec![*metric; n]),
        CoefficientSpec::SmoothPeriodic {
            kappa_mean,
            kappa_amplitude,
            frequency,
            metric_mean,
            metric_amplitude,
            metric_shear,
        } => {
            let w = 2.0 * PI * *frequency as f64 / l;
            (0..n)
                .map(|i| {
                    let x = grid.coords(i);
                    let s = (0..dim).map(|a| (w * x[a]).sin()).sum::<f64>() / dim as f64;
                    let c = (0..dim).map(|a| (w * x[a]).cos()).sum::<f64>() / dim as f64;
                    let diag = metric_mean + metric_amplitude * c;
                    let xy = if dim == 2 { metric_shear * (w * (x[0] + x[1])).cos() } else { 0.0 };
                    (kappa_mean + kappa_amplitude * s, Metric { xx: diag, xy, yy: diag })
                })
                .unzip()
        }
        CoefficientSpec::PiecewiseLinear { knots, metric_scale } => {
            let profile = PeriodicProfile::new(knots, l)?;
            (0..n)
                .map(|i| (profile.eval(grid.coords(i)[0]), Metric::scaled(*metric_scale)))
                .unzip()
        }
        CoefficientSpec::RandomSmooth { seed, modes, kappa_base, amplitude, shear } => {
            if *modes == 0 {
                return Err(invalid("modes", "need at least one Fourier mode"));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(*seed);
            let kap = TrigField::random(&mut rng, dim, *modes, l);
            let gxx = TrigField::random(&mut rng, dim, *modes, l);
            let gyy = TrigField::random(&mut rng, dim, *modes, l);
            let gxy = TrigField::random(&mut rng, dim, *modes, l);
            (0..n)
                .map(|i| {
                    let x = grid.coords(i);
                    let xx = 1.0 + 0.5 * amplitude * gxx.eval(x);
                    let (xy, yy) = if dim == 2 {
                        (shear * gxy.eval(x), 1.0 + 0.5 * amplitude * gyy.eval(x))
                    } else {
                        (0.0, xx)
                    };
                    (kappa_base + amplitude * kap.eval(x), Metric { xx, xy, yy })
                })
                .unzip()
        }
    };
    CoefficientField::from_samples(grid, kappa, metric)
}

struct PeriodicProfile {
    knots: Vec<[f64; 2]>,
}

impl PeriodicProfile {
    fn new(knots: &[[f64; 2]], extent: f64) -> Result<Self> {
        if knots.len() < 2 {
            return Err(invalid("knots", "need at least two knots"));
        }
        if knots.windows(2).any(|w| !(w[1][0] > w[0][0])) {
            return Err(invalid("knots", "knot positions must be strictly increasing"));
        }
        let tol = 1e-12 * extent;
        let (first, last) = (knots[0], knots[knots.len() - 1]);
        if first[0].abs() > tol || (last[0] - extent).abs() > tol {
            return Err(Error::NonPeriodic(format!(
                "knots must span [0, {extent}], got [{}, {}]",
                first[0], last[0]
            )));
        }
        if (first[1] - last[1]).abs() > 1e-12 * first[1].abs().max(1.0) {
            return Err(Error::NonPeriodic(format!(
                "value at 0 ({}) differs from value at L ({})",
                first[1], last[1]
            )));
        }
        Ok(PeriodicProfile { knots: knots.to_vec() })
    }

    fn eval(&self, x: f64) -> f64 {
        let k = &self.knots;
        for w in k.windows(2) {
            if x >= w[0][0] && x <= w[1][0] {
                let t = (x - w[0][0]) / (w[1][0] - w[0][0]);
                return w[0][1] + t * (w[1][1] - w[0][1]);
            }
        }
        k[k.len() - 1][1]
    }
}

/// Sum of random Fourier modes, normalized so that `|f| <= 1`.
struct TrigField {
    terms: Vec<([f64; 2], f64, f64)>,
}

impl TrigField {
    fn random(rng: &mut impl Rng, dim: usize, modes: usize, extent: f64) -> Self {
        let w = 2.0 * PI / extent;
        let mut terms = Vec::new();
        for m in 1..=modes {
            let k0 = m as f64 * w;
            let k1 = if dim == 2 { rng.random_range(-(m as i64)..=m as i64) as f64 * w } else { 0.0 };
            let decay = 1.0 / (m * m) as f64;
            let a = rng.random_range(-1.0..1.0) * decay;
            let b = rng.random_range(-1.0..1.0) * decay;
            terms.push(([k0, k1], a, b));
        }
        let total: f64 = terms.iter().map(|(_, a, b)| a.abs() + b.abs()).sum();
        if total > 0.0 {
            for t in &mut terms {
                t.1 /= total;
                t.2 /= total;
            }
        }
        TrigField { terms }
    }

    fn eval(&self, x: [f64; 2]) -> f64 {
        self.terms
            .iter()
            .map(|(k, a, b)| {
                let phase = k[0] * x[0] + k[1] * x[1];
                a * phase.cos() + b * phase.sin()
            })
            .sum()
    }
}

/// A lattice cell `B(p, R)` together with its space-time regions
/// `K_p = [-T1, T1] x B(p, R)` and `Omega_p = (-T2, T2) x B(p, 2R)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Cell {
    pub lattice: [usize; 2],
    pub center: [f64; 2],
    pub inner_radius: f64,
    pub t1: f64,
    pub t2: f64,
}

impl Cell {
    pub fn outer_radius(&self) -> f64 {
        2.0 * self.inner_radius
    }

    /// Nodes of the closed inner ball.
    pub fn inner_nodes(&self, grid: &Grid) -> Vec<usize> {
        grid.nodes_within(self.center, self.inner_radius, true)
    }

    /// Nodes of the open outer ball `B(p, 2R)`.
    pub fn outer_nodes(&self, grid: &Grid) -> Vec<usize> {
        grid.nodes_within(self.center, self.outer_radius(), false)
    }
}

/// Cells centered on the lattice `pitch * Z^d`, with an exhaustive check that the
/// inner balls cover every node.
pub fn cell_cover(grid: &Grid, pitch: f64, radius: f64, t1: f64, t2: f64) -> Result<Vec<Cell>> {
    if !(radius > 0.0) {
        return Err(invalid("radius", format!("must be positive, got {radius}")));
    }
    if !(t1 > 0.0 && t1 < t2) {
        return Err(invalid("t1", format!("need 0 < T1 < T2, got T1 = {t1}, T2 = {t2}")));
    }
    if !(pitch > 0.0) {
        return Err(invalid("pitch", format!("must be positive, got {pitch}")));
    }
    let l = grid.extent();
    let per_axis = (l / pitch).round();
    if per_axis < 1.0 || (per_axis * pitch - l).abs() > 1e-9 * l {
        return Err(invalid("pitch", format!("{pitch} does not divide the extent {l}")));
    }
    let per_axis = per_axis as usize;
    let second = if grid.dim() == 2 { per_axis } else { 1 };
    let mut cells = Vec::with_capacity(per_axis * second);
    for j in 0..second {
        for i in 0..per_axis {
            let center = [i as f64 * pitch, if grid.dim() == 2 { j as f64 * pitch } else { 0.0 }];
            cells.push(Cell { lattice: [i, j], center, inner_radius: radius, t1, t2 });
        }
    }
    let tol = 1e-12 * l;
    for node in 0..grid.node_count() {
        let x = grid.coords(node);
        if !cells.iter().any(|c| grid.point_distance(x, c.center) <= radius + tol) {
            return Err(Error::CoverFails { radius, node });
        }
    }
    Ok(cells)
}
