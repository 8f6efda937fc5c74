//! Discrete divergence-form Laplacian `-Delta = -(1/kappa) sum_ij d_i g^ij kappa d_j`,
//! its weighted eigendecomposition and functional calculus.
//!
//! The operator is stored as `A = W^{-1} K` where `W = diag(kappa h^d)` is the discrete
//! measure `kappa dx` and `K` is the symmetric stiffness matrix of the discrete energy
//!
//! ```text
//! u^T K u = sum_faces h^d c_face (delta u / h)^2 + 2 sum_nodes h^d c12 (D0_x u)(D0_y u)
//! ```
//!
//! with `c = g kappa` averaged arithmetically onto faces and `D0` the centered difference.
//! Every face flux enters `K` symmetrically, so `A` is self-adjoint in `<., .>_kappa`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;

use crate::error::{Error, Result};
use crate::grid::{CoefficientField, Grid};
use crate::rng::gaussian_vector;

pub const DEFAULT_DENSE_CAP: usize = 4096;

/// Row-compressed symmetric matrix.
#[derive(Debug, Clone)]
pub struct SparseMatrix {
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseMatrix {
    fn from_entries(n: usize, entries: BTreeMap<(usize, usize), f64>) -> Self {
        let mut rows = vec![Vec::new(); n];
        for ((i, j), v) in entries {
            if v != 0.0 {
                rows[i].push((j, v));
            }
        }
        SparseMatrix { rows }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    pub fn mul(&self, u: &[f64]) -> Vec<f64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(j, v)| v * u[j]).sum())
            .collect()
    }

    pub fn row(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, v) in row {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Largest absolute row sum, an upper bound on the spectral norm.
    pub fn norm_inf(&self) -> f64 {
        self.rows
            .iter()
            .map(|r| r.iter().map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone)]
pub struct EllipticOperator {
    grid: Grid,
    stiffness: SparseMatrix,
    weight: Vec<f64>,
    /// `(a, A)` inherited from the coefficient field.
    pub certificates: (f64, f64),
}

impl EllipticOperator {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn stiffness(&self) -> &SparseMatrix {
        &self.stiffness
    }

    /// `A u = W^{-1} K u`, the discrete `-Delta`.
    pub fn apply(&self, u: &[f64]) -> Vec<f64> {
        self.stiffness
            .mul(u)
            .into_iter()
            .zip(&self.weight)
            .map(|(ku, w)| ku / w)
            .collect()
    }

    /// Dirichlet form `<A u, u>_kappa = u^T K u`.
    pub fn energy(&self, u: &[f64]) -> f64 {
        dot(&self.stiffness.mul(u), u)
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        weighted_inner(&self.weight, u, v)
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.inner(u, u).sqrt()
    }

    /// Upper bound on the operator norm of `A` (row sums of `W^{-1} K`).
    pub fn norm_bound(&self) -> f64 {
        (0..self.stiffness.dim())
            .map(|i| self.stiffness.row(i).iter().map(|(_, v)| v.abs()).sum::<f64>() / self.weight[i])
            .fold(0.0, f64::max)
    }
}

pub(crate) fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub(crate) fn weighted_inner(w: &[f64], u: &[f64], v: &[f64]) -> f64 {
    w.iter().zip(u).zip(v).map(|((w, a), b)| w * a * b).sum()
}

pub fn assemble(grid: &Grid, coeffs: &CoefficientField) -> Result<EllipticOperator> {
    let n = grid.node_count();
    if coeffs.kappa.len() != n {
        return Err(Error::LengthMismatch { expected: n, got: coeffs.kappa.len() });
    }
    let h = grid.spacing();
    let dim = grid.dim();
    let vol = grid.cell_volume();
    let face_scale = vol / (h * h);
    let mut entries: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut add = |i: usize, j: usize, v: f64| *entries.entry((i, j)).or_insert(0.0) += v;

    for node in 0..n {
        for axis in 0..dim {
            let next = grid.shift(node, axis, 1);
            let (gi, gj) = (&coeffs.metric[node], &coeffs.metric[next]);
            let (ci, cj) = if axis == 0 { (gi.xx, gj.xx) } else { (gi.yy, gj.yy) };
            let c = 0.5 * (ci * coeffs.kappa[node] + cj * coeffs.kappa[next]) * face_scale;
            add(node, node, c);
            add(next, next, c);
            add(node, next, -c);
            add(next, node, -c);
        }
        if dim == 2 {
            let c12 = coeffs.metric[node].xy * coeffs.kappa[node];
            if c12 != 0.0 {
                // h^d c12 (a b^T + b a^T), a and b the centered-difference rows at `node`
                let s = 1.0 / (2.0 * h);
                let a = [(grid.shift(node, 0, 1), s), (grid.shift(node, 0, -1), -s)];
                let b = [(grid.shift(node, 1, 1), s), (grid.shift(node, 1, -1), -s)];
                for &(ia, va) in &a {
                    for &(ib, vb) in &b {
                        let v = vol * c12 * va * vb;
                        add(ia, ib, v);
                        add(ib, ia, v);
                    }
                }
            }
        }
    }

    let weight = coeffs.kappa.iter().map(|k| k * vol).collect();
    Ok(EllipticOperator {
        grid: grid.clone(),
        stiffness: SparseMatrix::from_entries(n, entries),
        weight,
        certificates: (coeffs.ellipticity_lower, coeffs.lipschitz_bound),
    })
}

/// Full `kappa`-orthonormal eigensystem of `-Delta`, eigenvalues ascending.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    grid: Grid,
    eigenvalues: Vec<f64>,
    frequencies: Vec<f64>,
    /// Column `k` is `e_k`.
    vectors: DMatrix<f64>,
    weight: Vec<f64>,
}

pub fn eigendecompose(op: &EllipticOperator) -> Result<SpectralDecomposition> {
    eigendecompose_with_cap(op, DEFAULT_DENSE_CAP)
}

pub fn eigendecompose_with_cap(op: &EllipticOperator, cap: usize) -> Result<SpectralDecomposition> {
    let n = op.grid.node_count();
    if n > cap {
        return Err(Error::SizeCap { nodes: n, cap });
    }
    let inv_sqrt: Vec<f64> = op.weight.iter().map(|w| 1.0 / w.sqrt()).collect();
    let mut s = op.stiffness.to_dense();
    for j in 0..n {
        for i in 0..n {
            s[(i, j)] *= inv_sqrt[i] * inv_sqrt[j];
        }
    }
    let s = (&s + s.transpose()) * 0.5;
    let scale = op.norm_bound().max(f64::MIN_POSITIVE);
    let eig = SymmetricEigen::new(s);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let mut eigenvalues = Vec::with_capacity(n);
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        let mut lam2 = eig.eigenvalues[k];
        if lam2 < -1e-10 * scale {
            return Err(Error::NotSemidefinite(lam2));
        }
        // rounding noise around the kernel, either sign
        if lam2 < 1e-12 * scale {
            lam2 = 0.0;
        }
        eigenvalues.push(lam2);
        for i in 0..n {
            vectors[(i, col)] = eig.eigenvectors[(i, k)] * inv_sqrt[i];
        }
    }
    let frequencies = eigenvalues.iter().map(|l| l.sqrt()).collect();
    Ok(SpectralDecomposition {
        grid: op.grid.clone(),
        eigenvalues,
        frequencies,
        vectors,
        weight: op.weight.clone(),
    })
}

/// Relative slack when deciding `lambda_k <= mu`, so that cutoffs placed exactly on a
/// discrete frequency keep that mode regardless of rounding.
const CUTOFF_SLACK: f64 = 1e-12;

impl SpectralDecomposition {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Eigenvalues `lambda_k^2` of `-Delta`.
    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    /// Frequencies `lambda_k`.
    pub fn frequencies(&self) -> &[f64] {
        &self.frequencies
    }

    pub fn weight(&self) -> &[f64] {
        &self.weight
    }

    pub fn vectors(&self) -> &DMatrix<f64> {
        &self.vectors
    }

    pub fn lambda_max(&self) -> f64 {
        *self.frequencies.last().unwrap_or(&0.0)
    }

    pub fn mode(&self, k: usize) -> Vec<f64> {
        self.vectors.column(k).iter().cloned().collect()
    }

    /// Number of modes with `lambda_k <= mu`; they form a prefix of the basis.
    pub fn retained(&self, mu: f64) -> usize {
        let cut = mu + CUTOFF_SLACK * mu.abs().max(1.0);
        self.frequencies.partition_point(|&l| l <= cut)
    }

    pub fn inner(&self, u: &[f64], v: &[f64]) -> f64 {
        weighted_inner(&self.weight, u, v)
    }

    pub fn norm(&self, u: &[f64]) -> f64 {
        self.inner(u, u).sqrt()
    }

    /// Total `kappa`-measure of the torus.
    pub fn total_measure(&self) -> f64 {
        self.weight.iter().sum()
    }

    /// Spectral coefficients `<u, e_k>_kappa`.
    pub fn coefficients(&self, u: &[f64]) -> DVector<f64> {
        let wu = DVector::from_iterator(u.len(), u.iter().zip(&self.weight).map(|(a, w)| a * w));
        self.vectors.tr_mul(&wu)
    }

    /// Coefficients on the first `m` modes only.
    pub fn coefficients_prefix(&self, u: &[f64], m: usize) -> DVector<f64> {
        let wu = DVector::from_iterator(u.len(), u.iter().zip(&self.weight).map(|(a, w)| a * w));
        self.vectors.columns(0, m).tr_mul(&wu)
    }

    /// `sum_k c_k e_k` over the first `c.len()` modes.
    pub fn synthesize(&self, c: &DVector<f64>) -> Vec<f64> {
        let m = c.len();
        (self.vectors.columns(0, m) * c).iter().cloned().collect()
    }

    /// `phi(sqrt(-Delta)) u`.
    pub fn apply_function(&self, phi: impl Fn(f64) -> f64, u: &[f64]) -> Vec<f64> {
        let mut c = self.coefficients(u);
        for (k, ck) in c.iter_mut().enumerate() {
            *ck *= phi(self.frequencies[k]);
        }
        self.synthesize(&c)
    }

    /// Spectral projector `Pi_mu u`.
    pub fn project(&self, mu: f64, u: &[f64]) -> Vec<f64> {
        let m = self.retained(mu);
        let c = self.coefficients_prefix(u, m);
        self.synthesize(&c)
    }

    /// Rows `(k, lambda_k^2, lambda_k)` for the eigenvalue dump.
    pub fn eigen_rows(&self) -> impl Iterator<Item = (usize, f64, f64)> + '_ {
        self.eigenvalues
            .iter()
            .zip(&self.frequencies)
            .enumerate()
            .map(|(k, (l2, l))| (k, *l2, *l))
    }
}

/// Named spectral multipliers `phi(lambda)` used by experiments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpectralFunction {
    Constant(f64),
    Indicator { mu: f64 },
    /// `sinh(lambda t) / lambda`, continued by `t` at `lambda = 0`.
    SinhOverLambda { t: f64 },
    Cosh { t: f64 },
    /// `exp(-t lambda^2)`.
    Heat { t: f64 },
}

impl SpectralFunction {
    pub fn eval(&self, lambda: f64) -> f64 {
        match *self {
            SpectralFunction::Constant(c) => c,
            SpectralFunction::Indicator { mu } => {
                if lambda <= mu + CUTOFF_SLACK * mu.abs().max(1.0) {
                    1.0
                } else {
                    0.0
                }
            }
            SpectralFunction::SinhOverLambda { t } => sinh_over(lambda, t),
            SpectralFunction::Cosh { t } => (lambda * t).cosh(),
            SpectralFunction::Heat { t } => (-t * lambda * lambda).exp(),
        }
    }
}

/// `sinh(lambda t) / lambda` with the removable singularity at 0 filled in.
pub fn sinh_over(lambda: f64, t: f64) -> f64 {
    let x = lambda * t;
    if x.abs() < 1e-5 {
        t * (1.0 + x * x / 6.0)
    } else {
        x.sinh() / lambda
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundReport {
    pub trials: usize,
    /// Largest `||phi Pi_mu u|| / ||u||` observed.
    pub worst_ratio: f64,
    /// `max |phi(lambda_k)|` over retained discrete frequencies.
    pub sup_retained: f64,
    /// `sup |phi|` over a fine sampling of `[0, mu]` together with the retained frequencies.
    pub sup_interval: f64,
    /// `worst_ratio / sup_retained` (0 when both vanish); never exceeds 1 up to rounding.
    pub normalized: f64,
}

impl BoundReport {
    pub fn holds(&self, tol: f64) -> bool {
        self.normalized <= 1.0 + tol
    }
}

/// Checks `||phi(sqrt(-Delta)) Pi_mu u|| <= sup_[0,mu] |phi| ||u||` on random `u`.
pub fn verify_bound(
    dec: &SpectralDecomposition,
    phi: impl Fn(f64) -> f64,
    mu: f64,
    trials: usize,
    rng: &mut impl Rng,
) -> Result<BoundReport> {
    if trials == 0 {
        return Err(crate::error::invalid("trials", "need at least one trial"));
    }
    let m = dec.retained(mu);
    let sup_retained = dec.frequencies[..m].iter().map(|&l| phi(l).abs()).fold(0.0, f64::max);
    let samples = 2000;
    let sup_interval = (0..=samples)
        .map(|i| phi(mu * i as f64 / samples as f64).abs())
        .fold(sup_retained, f64::max);
    let mut worst: f64 = 0.0;
    let n = dec.grid.node_count();
    for _ in 0..trials {
        let u = gaussian_vector(rng, n);
        let mut c = dec.coefficients_prefix(&u, m);
        for (k, ck) in c.iter_mut().enumerate() {
            *ck *= phi(dec.frequencies[k]);
        }
        let out = dec.synthesize(&c);
        let r = dec.norm(&out) / dec.norm(&u);
        worst = worst.max(r);
    }
    let normalized = if sup_retained > 0.0 { worst / sup_retained } else if worst == 0.0 { 0.0 } else { f64::INFINITY };
    Ok(BoundReport { trials, worst_ratio: worst, sup_retained, sup_interval, normalized })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_torus, sample_coefficients, CoefficientSpec, Metric};
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn constant_op(dim: usize, l: f64, n: usize) -> EllipticOperator {
        let g = build_torus(dim, l, n).unwrap();
        let f = sample_coefficients(&CoefficientSpec::Constant { kappa: 1.0, metric: Metric::IDENTITY }, &g).unwrap();
        assemble(&g, &f).unwrap()
    }

    #[test]
    fn constant_1d_is_the_three_point_stencil() {
        let op = constant_op(1, 2.0 * PI, 16);
        let h = op.grid().spacing();
        let mut u = vec![0.0; 16];
        u[3] = 1.0;
        let au = op.apply(&u);
        let mut expected = vec![0.0; 16];
        expected[2] = -1.0 / (h * h);
        expected[3] = 2.0 / (h * h);
        expected[4] = -1.0 / (h * h);
        for (a, b) in au.iter().zip(&expected) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn constants_are_in_the_kernel() {
        let g = build_torus(2, 1.0, 8).unwrap();
        let spec = CoefficientSpec::RandomSmooth { seed: 7, modes: 3, kappa_base: 2.0, amplitude: 0.8, shear: 0.2 };
        let f = sample_coefficients(&spec, &g).unwrap();
        let op = assemble(&g, &f).unwrap();
        let au = op.apply(&vec![3.5; g.node_count()]);
        assert!(au.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn eigenvalues_match_closed_form_dft() {
        let n = 64;
        let op = constant_op(1, 2.0 * PI, n);
        let dec = eigendecompose(&op).unwrap();
        let h = op.grid().spacing();
        let mut expected: Vec<f64> = (0..n)
            .map(|k| (2.0 / h).powi(2) * (k as f64 * PI / n as f64).sin().powi(2))
            .collect();
        expected.sort_by(f64::total_cmp);
        for (got, want) in dec.eigenvalues().iter().zip(&expected) {
            assert!((got - want).abs() <= 1e-10 * want.max(1.0), "{got} vs {want}");
        }
        assert_eq!(dec.eigenvalues()[0], 0.0);
    }

    #[test]
    fn second_order_convergence_to_continuum_frequencies() {
        // lambda_k -> k on the 2 pi torus; the error must shrink by ~4 per halving of h.
        let errs: Vec<f64> = [64, 128, 256]
            .iter()
            .map(|&n| {
                let dec = eigendecompose(&constant_op(1, 2.0 * PI, n)).unwrap();
                // modes 5 and 6 are the k = 3 pair
                (dec.frequencies()[5] - 3.0).abs()
            })
            .collect();
        for w in errs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((ratio - 4.0).abs() < 0.05, "ratio {ratio}");
        }
    }

    #[test]
    fn eigenvectors_are_kappa_orthonormal() {
        let g = build_torus(1, 1.0, 48).unwrap();
        let spec = CoefficientSpec::RandomSmooth { seed: 3, modes: 4, kappa_base: 1.5, amplitude: 0.7, shear: 0.0 };
        let op = assemble(&g, &sample_coefficients(&spec, &g).unwrap()).unwrap();
        let dec = eigendecompose(&op).unwrap();
        let n = g.node_count();
        let mut total = 0.0;
        for j in 0..n {
            for k in 0..n {
                let ip = dec.inner(&dec.mode(j), &dec.mode(k));
                total += (ip - if j == k { 1.0 } else { 0.0 }).abs();
            }
        }
        assert!(total < 1e-8, "orthonormality defect {total}");
        let scale = op.norm_bound();
        for k in 0..n {
            let e = dec.mode(k);
            let ae = op.apply(&e);
            let res = ae.iter().zip(&e).map(|(a, b)| (a - dec.eigenvalues()[k] * b).powi(2)).sum::<f64>().sqrt();
            let en = e.iter().map(|x| x * x).sum::<f64>().sqrt();
            assert!(res <= 1e-8 * scale * en);
        }
    }

    #[test]
    fn size_cap_is_enforced() {
        let op = constant_op(2, 1.0, 8);
        assert_eq!(eigendecompose_with_cap(&op, 32).unwrap_err(), Error::SizeCap { nodes: 64, cap: 32 });
    }

    #[test]
    fn functional_calculus_examples() {
        let op = constant_op(1, 2.0 * PI, 32);
        let dec = eigendecompose(&op).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = gaussian_vector(&mut rng, 32);
        let same = dec.apply_function(|_| 1.0, &u);
        for (a, b) in same.iter().zip(&u) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
        let p1 = dec.project(4.0, &u);
        let p2 = dec.project(4.0, &p1);
        for (a, b) in p1.iter().zip(&p2) {
            assert_relative_eq!(a, b, epsilon = 1e-12);
        }
        let k = 9;
        let e = dec.mode(k);
        let t = 0.01;
        let out = dec.apply_function(|l| SpectralFunction::Heat { t }.eval(l), &e);
        let factor = (-t * dec.eigenvalues()[k]).exp();
        for (a, b) in out.iter().zip(&e) {
            assert_relative_eq!(*a, factor * b, epsilon = 1e-12);
        }
    }

    #[test]
    fn bound_is_attained_on_top_retained_mode() {
        let op = constant_op(1, 2.0 * PI, 64);
        let dec = eigendecompose(&op).unwrap();
        let mu = 5.0;
        let phi = |l: f64| SpectralFunction::SinhOverLambda { t: 0.8 }.eval(l);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let rep = verify_bound(&dec, phi, mu, 50, &mut rng).unwrap();
        assert!(rep.holds(1e-10));
        assert!(rep.sup_retained <= rep.sup_interval);
        let top = dec.retained(mu) - 1;
        let e = dec.mode(top);
        let out = dec.apply_function(|l| phi(l) * SpectralFunction::Indicator { mu }.eval(l), &e);
        assert_relative_eq!(dec.norm(&out), rep.sup_retained, max_relative = 1e-10);

        let c = -2.5;
        let rep = verify_bound(&dec, |_| c, mu, 10, &mut rng).unwrap();
        assert!(rep.worst_ratio <= c.abs() * (1.0 + 1e-12));
        let inside = dec.project(mu, &gaussian_vector(&mut rng, 64));
        let out = dec.apply_function(|_| c, &inside);
        assert_relative_eq!(dec.norm(&out) / dec.norm(&inside), c.abs(), max_relative = 1e-12);

        let rep = verify_bound(&dec, |l| (l * 0.3).cosh(), 0.0, 10, &mut rng).unwrap();
        assert_eq!(dec.retained(0.0), 1);
        assert!(rep.worst_ratio <= 1.0 + 1e-12);
    }

    #[test]
    fn sinh_over_lambda_limit() {
        assert_eq!(sinh_over(0.0, 0.7), 0.7);
        assert_relative_eq!(sinh_over(1e-7, 0.7), 0.7, max_relative = 1e-12);
        assert_relative_eq!(sinh_over(2.0, 0.7), (1.4f64).sinh() / 2.0, max_relative = 1e-14);
    }
}
