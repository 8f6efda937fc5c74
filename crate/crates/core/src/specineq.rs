//! Spectral-inequality constants on `ran Pi_mu` and their exponential fit in `mu`.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::fit::fit_line;
use crate::grid::Cell;
use crate::operator::SpectralDecomposition;
use crate::rng::gaussian_vector;
use crate::sets::ObservationSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    L2,
    LinfSum,
}

impl Variant {
    pub fn name(&self) -> &'static str {
        match self {
            Variant::L2 => "L2",
            Variant::LinfSum => "LinfSum",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralConstantSample {
    pub mu: f64,
    pub variant: Variant,
    /// `L2`: best `C` in `||u|| <= C ||u||_{L^2(omega)}`, `+inf` when `omega` does not
    /// observe `ran Pi_mu`. `LinfSum`: certified lower bound on
    /// `sup ||u||^2 / sum_p sup_{omega cap B(p,R)} |u|^2`.
    pub constant: f64,
    /// Dimension of `ran Pi_mu`.
    pub retained: usize,
    /// Extremal (or best found) `u`, unit `kappa`-norm.
    pub witness: Option<Vec<f64>>,
    /// `L2`: smallest eigenvalue of the observation matrix. `LinfSum`: best ratio per start.
    pub diagnostics: Vec<f64>,
}

impl SpectralConstantSample {
    pub fn is_finite(&self) -> bool {
        self.constant.is_finite()
    }
}

/// Rows `sqrt(w_x) e_k(x)` for `x` in `omega`, `k < m`, padded with zero rows to at least
/// `m` rows. Its Gram matrix is the observation matrix.
fn observation_factor(dec: &SpectralDecomposition, set: &ObservationSet, m: usize) -> DMatrix<f64> {
    let v = dec.vectors();
    let w = dec.weight();
    let nodes = set.nodes();
    let mut rows = DMatrix::zeros(nodes.len().max(m), m);
    for (r, &x) in nodes.iter().enumerate() {
        let s = w[x].sqrt();
        for k in 0..m {
            rows[(r, k)] = s * v[(x, k)];
        }
    }
    rows
}

/// `M[j, k] = <1_omega e_j, e_k>_kappa` on the first `m` modes.
pub fn observation_matrix(dec: &SpectralDecomposition, set: &ObservationSet, m: usize) -> DMatrix<f64> {
    let rows = observation_factor(dec, set, m);
    let mat = rows.tr_mul(&rows);
    (&mat + mat.transpose()) * 0.5
}

/// Relative size of the smallest singular value of the observation factor below which
/// the constant is reported as infinite.
const INFINITE_THRESHOLD: f64 = 1e-13;

/// `C = lambda_min(M)^(-1/2)`. The smallest eigenvalue is taken as the squared smallest
/// singular value of the factor `sqrt(W) V` restricted to `omega`, which resolves it far
/// below the rounding floor of an eigensolve of `M` itself.
pub fn spectral_constant_l2(dec: &SpectralDecomposition, set: &ObservationSet, mu: f64) -> Result<SpectralConstantSample> {
    let m = dec.retained(mu);
    if m == 0 {
        return Err(Error::EmptySubspace(mu));
    }
    let factor = observation_factor(dec, set, m);
    let svd = factor.svd(false, true);
    let v_t = svd.v_t.as_ref().expect("right singular vectors requested");
    let (imin, smin) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |best, (i, &s)| if s < best.1 { (i, s) } else { best });
    let smax = svd.singular_values.max();
    let c: DVector<f64> = v_t.row(imin).transpose();
    let witness = dec.synthesize(&(c.clone() / c.norm()));
    let constant = if smin <= INFINITE_THRESHOLD * smax { f64::INFINITY } else { 1.0 / smin };
    Ok(SpectralConstantSample {
        mu,
        variant: Variant::L2,
        constant,
        retained: m,
        witness: Some(witness),
        diagnostics: vec![smin * smin],
    })
}

/// `||u|| / ||u||_{L^2(omega)}` for one vector.
pub fn observation_ratio(dec: &SpectralDecomposition, set: &ObservationSet, u: &[f64]) -> f64 {
    let w = dec.weight();
    let observed: f64 = set.nodes().iter().map(|&x| w[x] * u[x] * u[x]).sum();
    dec.norm(u) / observed.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AscentOptions {
    /// Exponents for the `l_q` smoothing of `max |u|^2`, applied in order.
    pub exponents: &'static [f64],
    pub iterations_per_exponent: usize,
}

impl Default for AscentOptions {
    fn default() -> Self {
        AscentOptions { exponents: &[2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 128.0], iterations_per_exponent: 60 }
    }
}

struct SupSum {
    /// Rows of `e_k` on the union of observed cell nodes.
    basis: DMatrix<f64>,
    /// Per cell, indices into the rows of `basis`.
    groups: Vec<Vec<usize>>,
}

impl SupSum {
    fn exact(&self, u: &DVector<f64>) -> f64 {
        self.groups.iter().map(|g| g.iter().map(|&r| u[r] * u[r]).fold(0.0, f64::max)).sum()
    }

    /// `sum_p (sum_{x in F_p} u_x^{2q})^{1/q}` and its gradient in mode coordinates.
    fn smoothed(&self, c: &DVector<f64>, q: f64) -> (f64, DVector<f64>) {
        let u = &self.basis * c;
        let mut gu = DVector::zeros(u.len());
        let mut total = 0.0;
        for g in &self.groups {
            let top = g.iter().map(|&r| u[r] * u[r]).fold(0.0, f64::max);
            if top == 0.0 {
                continue;
            }
            let s: f64 = g.iter().map(|&r| (u[r] * u[r] / top).powf(q)).sum();
            total += top * s.powf(1.0 / q);
            let outer = s.powf(1.0 / q - 1.0);
            for &r in g {
                gu[r] += outer * (u[r] * u[r] / top).powf(q - 1.0) * 2.0 * u[r];
            }
        }
        (total, self.basis.tr_mul(&gu))
    }
}

/// Lower bound on the sup-sum constant by Riemannian descent of an `l_q`-smoothed
/// denominator on the unit sphere of `ran Pi_mu`, with `q` continued upward. Starts: the
/// `L2` witness, the lowest mode, and `restarts` Gaussian vectors. Every iterate is
/// scored with the exact (non-smooth) ratio, so the reported value is attained.
pub fn spectral_constant_linf(
    dec: &SpectralDecomposition,
    set: &ObservationSet,
    mu: f64,
    cells: &[Cell],
    restarts: usize,
    options: AscentOptions,
    rng: &mut impl Rng,
) -> Result<SpectralConstantSample> {
    let m = dec.retained(mu);
    if m == 0 {
        return Err(Error::EmptySubspace(mu));
    }
    let grid = dec.grid();
    let mut union: Vec<usize> = Vec::new();
    let mut index = vec![usize::MAX; grid.node_count()];
    let mut groups = Vec::new();
    for cell in cells {
        let g: Vec<usize> = cell
            .inner_nodes(grid)
            .into_iter()
            .filter(|&x| set.contains(x))
            .map(|x| {
                if index[x] == usize::MAX {
                    index[x] = union.len();
                    union.push(x);
                }
                index[x]
            })
            .collect();
        if !g.is_empty() {
            groups.push(g);
        }
    }
    if groups.is_empty() {
        return Err(Error::EmptySet);
    }
    let v = dec.vectors();
    let basis = DMatrix::from_fn(union.len(), m, |r, k| v[(union[r], k)]);
    let problem = SupSum { basis, groups };

    let mut starts: Vec<DVector<f64>> = Vec::new();
    let l2 = spectral_constant_l2(dec, set, mu)?;
    starts.push(dec.coefficients_prefix(l2.witness.as_ref().unwrap(), m));
    let mut lowest = DVector::zeros(m);
    lowest[0] = 1.0;
    starts.push(lowest);
    for _ in 0..restarts {
        starts.push(DVector::from_vec(gaussian_vector(rng, m)));
    }

    let mut best_ratio = 0.0;
    let mut best_c = starts[0].clone();
    let mut per_start = Vec::with_capacity(starts.len());
    for start in starts {
        let (ratio, c) = descend(&problem, start, options);
        per_start.push(ratio);
        if ratio > best_ratio {
            best_ratio = ratio;
            best_c = c;
        }
    }
    Ok(SpectralConstantSample {
        mu,
        variant: Variant::LinfSum,
        constant: best_ratio,
        retained: m,
        witness: Some(dec.synthesize(&best_c)),
        diagnostics: per_start,
    })
}

fn descend(problem: &SupSum, start: DVector<f64>, options: AscentOptions) -> (f64, DVector<f64>) {
    let mut c = start.normalize();
    let score = |c: &DVector<f64>| {
        let d = problem.exact(&(&problem.basis * c));
        if d > 0.0 {
            1.0 / d
        } else {
            0.0
        }
    };
    let mut best = (score(&c), c.clone());
    for &q in options.exponents {
        let mut step = 0.5;
        let (mut f, mut g) = problem.smoothed(&c, q);
        for _ in 0..options.iterations_per_exponent {
            let tangent = &g - &c * c.dot(&g);
            let gnorm = tangent.norm();
            if gnorm < 1e-14 * f.max(1e-300) {
                break;
            }
            let dir = tangent / gnorm;
            // Armijo backtracking along the geodesic-free retraction
            let mut accepted = false;
            while step > 1e-12 {
                let trial = (&c - &dir * step).normalize();
                let (ft, gt) = problem.smoothed(&trial, q);
                if ft < f - 1e-4 * step * gnorm {
                    c = trial;
                    f = ft;
                    g = gt;
                    accepted = true;
                    step *= 1.5;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
            let s = score(&c);
            if s > best.0 {
                best = (s, c.clone());
            }
        }
    }
    best
}

/// Bounds relating the two variants for the same `omega`, cells and `mu`:
/// `(min w / multiplicity) C_L2^2 <= C_sup <= max_p W_p C_L2^2`, where `w` are node weights,
/// `multiplicity` is the largest number of cells sharing an observed node and `W_p` is
/// the `kappa`-measure of `omega cap B(p, R)`.
pub fn cross_check_bounds(dec: &SpectralDecomposition, set: &ObservationSet, cells: &[Cell], c_l2: f64) -> (f64, f64) {
    let grid = dec.grid();
    let w = dec.weight();
    let mut mult = vec![0usize; grid.node_count()];
    let mut heaviest: f64 = 0.0;
    for cell in cells {
        let f: Vec<usize> = cell.inner_nodes(grid).into_iter().filter(|&x| set.contains(x)).collect();
        heaviest = heaviest.max(f.iter().map(|&x| w[x]).sum());
        for x in f {
            mult[x] += 1;
        }
    }
    let multiplicity = *mult.iter().max().unwrap_or(&1) as f64;
    let wmin = set.nodes().iter().map(|&x| w[x]).fold(f64::INFINITY, f64::min);
    let c2 = c_l2 * c_l2;
    (wmin / multiplicity.max(1.0) * c2, heaviest * c2)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExponentialFit {
    pub log_c0: f64,
    pub slope: f64,
    pub r_squared: f64,
    pub held_out_mu: f64,
    /// `(predicted - actual) / actual` at the held-out `mu`.
    pub held_out_gap: f64,
    /// `max C(mu) / (C0 e^{slope mu})` over the fitted samples.
    pub envelope: f64,
    pub used: usize,
    pub excluded: usize,
}

impl ExponentialFit {
    pub fn predict(&self, mu: f64) -> f64 {
        (self.log_c0 + self.slope * mu).exp()
    }
}

/// Affine fit of `log C` against `mu` on all finite samples but the one with the
/// largest `mu`, which is held out.
pub fn fit_exponential(samples: &[SpectralConstantSample]) -> Result<ExponentialFit> {
    let mut finite: Vec<(f64, f64)> =
        samples.iter().filter(|s| s.constant.is_finite() && s.constant > 0.0).map(|s| (s.mu, s.constant)).collect();
    let excluded = samples.len() - finite.len();
    finite.sort_by(|a, b| a.0.total_cmp(&b.0));
    if finite.len() < 4 {
        return Err(invalid("samples", format!("need at least 4 finite samples, got {}", finite.len())));
    }
    if finite.windows(2).any(|w| w[0].0 == w[1].0) {
        return Err(invalid("samples", "frequencies must be distinct"));
    }
    let (train, last) = finite.split_at(finite.len() - 1);
    let x: Vec<f64> = train.iter().map(|p| p.0).collect();
    let y: Vec<f64> = train.iter().map(|p| p.1.ln()).collect();
    let line = fit_line(&x, &y)?;
    let envelope = train.iter().map(|p| p.1 / (line.predict(p.0)).exp()).fold(0.0, f64::max);
    let (mu_last, actual) = last[0];
    let predicted = line.predict(mu_last).exp();
    Ok(ExponentialFit {
        log_c0: line.intercept,
        slope: line.slope,
        r_squared: line.r_squared,
        held_out_mu: mu_last,
        held_out_gap: (predicted - actual) / actual,
        envelope,
        used: finite.len(),
        excluded,
    })
}
