//! Harmonic extension `v_mu(t) = sum_{lambda_k <= mu} sinh(lambda_k t) / lambda_k <u, e_k> e_k`,
//! sup norms of its space-time gradient on cell regions, the propagation exponent fit and
//! the gradient-sum (Sobolev-type) bound.
//!
//! Time is never discretized in the dynamics: every slice is synthesized from the
//! analytic per-mode factors, and `d/dt` uses `cosh`. Spatial gradients are centered
//! differences in Euclidean coordinates.

use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::fit::{fit_line, LineFit};
use crate::grid::{Cell, Grid};
use crate::operator::{sinh_over, weighted_inner, EllipticOperator, SpectralDecomposition};
use crate::rng::gaussian_vector;
use crate::sets::ObservationSet;

#[derive(Debug, Clone)]
pub struct ExtensionField {
    grid: Grid,
    mu: f64,
    times: Vec<f64>,
    /// `v_mu(t_i, .)`.
    values: Vec<Vec<f64>>,
    /// `d/dt v_mu(t_i, .)`.
    time_derivative: Vec<Vec<f64>>,
    /// `|grad_{t,x} v_mu|^2` per slice and node.
    grad_sq: Vec<Vec<f64>>,
    coefficients: Vec<f64>,
    frequencies: Vec<f64>,
}

pub fn extend(dec: &SpectralDecomposition, u: &[f64], mu: f64, t2: f64, steps: usize) -> Result<ExtensionField> {
    if u.len() != dec.grid().node_count() {
        return Err(Error::LengthMismatch { expected: dec.grid().node_count(), got: u.len() });
    }
    if mu > dec.lambda_max() * (1.0 + 1e-12) {
        return Err(Error::CutoffAboveSpectrum { mu, max: dec.lambda_max() });
    }
    if !(mu >= 0.0) {
        return Err(invalid("mu", format!("must be nonnegative, got {mu}")));
    }
    if steps < 2 {
        return Err(invalid("steps", format!("need at least 2 time steps, got {steps}")));
    }
    if !(t2 > 0.0) {
        return Err(invalid("t2", format!("must be positive, got {t2}")));
    }
    let m = dec.retained(mu);
    let c = dec.coefficients_prefix(u, m);
    let freqs = &dec.frequencies()[..m];
    let times: Vec<f64> = (0..=2 * steps).map(|i| t2 * (i as f64 - steps as f64) / steps as f64).collect();
    let grid = dec.grid().clone();
    let mut values = Vec::with_capacity(times.len());
    let mut time_derivative = Vec::with_capacity(times.len());
    let mut grad_sq = Vec::with_capacity(times.len());
    for &t in &times {
        let mut cv = c.clone();
        let mut cd = c.clone();
        for k in 0..m {
            cv[k] *= sinh_over(freqs[k], t);
            cd[k] *= (freqs[k] * t).cosh();
        }
        let v = dec.synthesize(&cv);
        let dt = dec.synthesize(&cd);
        grad_sq.push(gradient_sq(&grid, &v, &dt));
        values.push(v);
        time_derivative.push(dt);
    }
    Ok(ExtensionField {
        grid,
        mu,
        times,
        values,
        time_derivative,
        grad_sq,
        coefficients: c.iter().cloned().collect(),
        frequencies: freqs.to_vec(),
    })
}

/// Centered spatial difference of `v` along every axis.
pub fn centered_gradient(grid: &Grid, v: &[f64]) -> Vec<[f64; 2]> {
    let h2 = 2.0 * grid.spacing();
    (0..grid.node_count())
        .map(|i| {
            let mut g = [0.0; 2];
            for (a, ga) in g.iter_mut().enumerate().take(grid.dim()) {
                *ga = (v[grid.shift(i, a, 1)] - v[grid.shift(i, a, -1)]) / h2;
            }
            g
        })
        .collect()
}

fn gradient_sq(grid: &Grid, v: &[f64], dt: &[f64]) -> Vec<f64> {
    centered_gradient(grid, v)
        .iter()
        .zip(dt)
        .map(|(g, d)| d * d + g[0] * g[0] + g[1] * g[1])
        .collect()
}

impl ExtensionField {
    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn t2(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn value(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    pub fn time_derivative(&self, i: usize) -> &[f64] {
        &self.time_derivative[i]
    }

    pub fn gradient_sq(&self, i: usize) -> &[f64] {
        &self.grad_sq[i]
    }

    /// Index of the slice `t = 0`.
    pub fn zero_index(&self) -> usize {
        self.times.len() / 2
    }

    /// Retained coefficients `<u, e_k>` and their frequencies.
    pub fn spectrum(&self) -> (&[f64], &[f64]) {
        (&self.coefficients, &self.frequencies)
    }

    /// Analytic `d^2/dt^2 v_mu(t_i)` in mode space, `lambda sinh(lambda t) <u, e_k>`.
    pub fn second_time_derivative(&self, dec: &SpectralDecomposition, i: usize) -> Vec<f64> {
        let t = self.times[i];
        let c = nalgebra::DVector::from_iterator(
            self.coefficients.len(),
            self.coefficients.iter().zip(&self.frequencies).map(|(c, l)| c * l * (l * t).sinh()),
        );
        dec.synthesize(&c)
    }

    /// Largest `|grad_{t,x} v|` over slices with `|t| <= t_max` and the given nodes.
    pub fn sup_over(&self, t_max: f64, nodes: &[usize]) -> SupValue {
        if nodes.is_empty() {
            return SupValue { value: 0.0, empty: true };
        }
        let tol = 1e-12 * self.t2();
        let mut best: f64 = 0.0;
        for (i, &t) in self.times.iter().enumerate() {
            if t.abs() <= t_max + tol {
                for &x in nodes {
                    best = best.max(self.grad_sq[i][x]);
                }
            }
        }
        SupValue { value: best.sqrt(), empty: false }
    }

    pub fn sup_gradient(&self, region: &Region<'_>) -> SupValue {
        match region {
            Region::K(cell) => self.sup_over(cell.t1, &cell.inner_nodes(&self.grid)),
            Region::E(cell, set) => {
                let nodes: Vec<usize> =
                    cell.inner_nodes(&self.grid).into_iter().filter(|&x| set.contains(x)).collect();
                self.sup_over(0.0, &nodes)
            }
            // a continuous integrand has the same sup on the open slab as on its closure
            Region::Omega(cell) => self.sup_over(cell.t2, &cell.outer_nodes(&self.grid)),
        }
    }

    pub fn region_sup(&self, index: usize, cell: &Cell, set: &ObservationSet) -> RegionSup {
        let e = self.sup_gradient(&Region::E(cell, set));
        RegionSup {
            cell: index,
            mu: self.mu,
            sup_e: e.value,
            sup_k: self.sup_gradient(&Region::K(cell)).value,
            sup_omega: self.sup_gradient(&Region::Omega(cell)).value,
            e_empty: e.empty,
        }
    }
}

/// `K = [-T1, T1] x closed B(p, R)`, `E = {0} x (omega cap B(p, R))`,
/// `Omega = (-T2, T2) x B(p, 2R)`.
#[derive(Debug, Clone, Copy)]
pub enum Region<'a> {
    K(&'a Cell),
    E(&'a Cell, &'a ObservationSet),
    Omega(&'a Cell),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SupValue {
    pub value: f64,
    pub empty: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionSup {
    pub cell: usize,
    pub mu: f64,
    pub sup_e: f64,
    pub sup_k: f64,
    pub sup_omega: f64,
    pub e_empty: bool,
}

impl RegionSup {
    fn usable(&self) -> bool {
        self.sup_e > 0.0 && self.sup_k > 0.0 && self.sup_omega > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationSample {
    pub sups: RegionSup,
    /// `||Pi_mu u||_{L^2(B(p, R); kappa)}`.
    pub l2_ball: f64,
    /// `||Pi_mu u||_{L^2(omega cap B(p, R); kappa)}`.
    pub l2_observed: f64,
}

/// One sample per cell for a single `u` and `mu`. Uses `T2` of the first cell.
pub fn propagation_samples(
    dec: &SpectralDecomposition,
    set: &ObservationSet,
    cells: &[Cell],
    u: &[f64],
    mu: f64,
    steps: usize,
) -> Result<Vec<PropagationSample>> {
    let first = cells.first().ok_or_else(|| invalid("cells", "need at least one cell"))?;
    let field = extend(dec, u, mu, first.t2, steps)?;
    let grid = dec.grid();
    let pu = field.time_derivative(field.zero_index());
    let w = dec.weight();
    Ok(cells
        .iter()
        .enumerate()
        .map(|(p, cell)| {
            let ball = cell.inner_nodes(grid);
            let l2 = |keep: &dyn Fn(usize) -> bool| -> f64 {
                ball.iter().filter(|&&x| keep(x)).map(|&x| w[x] * pu[x] * pu[x]).sum::<f64>().sqrt()
            };
            PropagationSample {
                sups: field.region_sup(p, cell, set),
                l2_ball: l2(&|_| true),
                l2_observed: l2(&|x| set.contains(x)),
            }
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlphaFit {
    pub alpha: f64,
    /// Envelope constant: `log C` is the largest training residual.
    pub log_c: f64,
    /// Intercept of the plain least-squares fit.
    pub log_c_ls: f64,
    pub r_squared: f64,
    pub used: usize,
    pub excluded: usize,
    pub slack: f64,
    /// Fraction of all usable samples violating `supK <= (1 + slack) C supE^a supO^(1-a)`.
    pub violation_fraction: f64,
    /// Same on the odd-indexed samples, which do not enter the envelope.
    pub heldout_violation_fraction: f64,
}

impl AlphaFit {
    pub fn bound(&self, sup_e: f64, sup_omega: f64) -> f64 {
        self.log_c.exp() * sup_e.powf(self.alpha) * sup_omega.powf(1.0 - self.alpha)
    }

    pub fn satisfied_fraction(&self) -> f64 {
        1.0 - self.violation_fraction
    }
}

const ALPHA_FLOOR: f64 = 1e-9;

/// Regresses `log supK - log supO` on `log supE - log supO`. The slope (clamped to
/// `(0, 1)`) is `alpha`; `log C` is the envelope of residuals over even-indexed samples.
pub fn estimate_alpha(samples: &[RegionSup], slack: f64) -> Result<AlphaFit> {
    let usable: Vec<&RegionSup> = samples.iter().filter(|s| s.usable()).collect();
    let excluded = samples.len() - usable.len();
    if usable.len() < 10 {
        return Err(invalid("samples", format!("need at least 10 usable samples, got {}", usable.len())));
    }
    let x: Vec<f64> = usable.iter().map(|s| (s.sup_e / s.sup_omega).ln()).collect();
    let y: Vec<f64> = usable.iter().map(|s| (s.sup_k / s.sup_omega).ln()).collect();
    let fit = fit_line(&x, &y)?;
    let alpha = fit.slope.clamp(ALPHA_FLOOR, 1.0 - ALPHA_FLOOR);
    let residual: Vec<f64> = x.iter().zip(&y).map(|(a, b)| b - alpha * a).collect();
    let log_c = residual.iter().step_by(2).cloned().fold(f64::NEG_INFINITY, f64::max);
    let tol = (1.0 + slack).ln();
    let violates = |r: &f64| *r > log_c + tol;
    let all = residual.iter().filter(|r| violates(r)).count();
    let odd: Vec<f64> = residual.iter().skip(1).step_by(2).cloned().collect();
    let held = odd.iter().filter(|r| violates(r)).count();
    Ok(AlphaFit {
        alpha,
        log_c,
        log_c_ls: fit.intercept,
        r_squared: fit.r_squared,
        used: usable.len(),
        excluded,
        slack,
        violation_fraction: all as f64 / usable.len() as f64,
        heldout_violation_fraction: if odd.is_empty() { 0.0 } else { held as f64 / odd.len() as f64 },
    })
}

/// Per-cell exponents, for diagnostics. Cells with too few samples are skipped.
pub fn alpha_by_cell(samples: &[RegionSup], slack: f64) -> Vec<(usize, AlphaFit)> {
    let mut cells: Vec<usize> = samples.iter().map(|s| s.cell).collect();
    cells.sort_unstable();
    cells.dedup();
    cells
        .into_iter()
        .filter_map(|p| {
            let own: Vec<RegionSup> = samples.iter().filter(|s| s.cell == p).cloned().collect();
            estimate_alpha(&own, slack).ok().map(|f| (p, f))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct YoungCheck {
    pub d: f64,
    pub holds: usize,
    pub total: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainReport {
    pub alpha: f64,
    /// Envelope of `log ||u||_B - (1 - a) log supO - a log ||u||_{E cap B}` over even samples.
    pub log_c: f64,
    pub used: usize,
    pub excluded: usize,
    pub violation_fraction: f64,
    pub young: Vec<YoungCheck>,
}

/// Checks `||u||_{B(p,R)} <= C supO^(1-a) ||u||^a_{E cap B(p,R)}` with `a` from the
/// gradient fit, then the split
/// `||u||^2_B <= C^2 e^{-D mu} supO^2 + C^2 e^{D mu (1-a)/a} ||u||^2_{E cap B}`
/// for each `D` in `ds`.
pub fn chain_check(samples: &[PropagationSample], alpha: f64, slack: f64, ds: &[f64]) -> Result<ChainReport> {
    let usable: Vec<&PropagationSample> =
        samples.iter().filter(|s| s.l2_observed > 0.0 && s.l2_ball > 0.0 && s.sups.sup_omega > 0.0).collect();
    if usable.len() < 2 {
        return Err(invalid("samples", "need at least two samples with a non-empty observed part"));
    }
    let residual: Vec<f64> = usable
        .iter()
        .map(|s| s.l2_ball.ln() - (1.0 - alpha) * s.sups.sup_omega.ln() - alpha * s.l2_observed.ln())
        .collect();
    let log_c = residual.iter().step_by(2).cloned().fold(f64::NEG_INFINITY, f64::max);
    let tol = (1.0 + slack).ln();
    let violations = residual.iter().filter(|&&r| r > log_c + tol).count();
    let c2 = (2.0 * (log_c + tol)).exp();
    let young = ds
        .iter()
        .map(|&d| {
            let holds = usable
                .iter()
                .filter(|s| {
                    let mu = s.sups.mu;
                    let rhs = c2 * (-d * mu).exp() * s.sups.sup_omega.powi(2)
                        + c2 * (d * mu * (1.0 - alpha) / alpha).exp() * s.l2_observed.powi(2);
                    s.l2_ball.powi(2) <= rhs
                })
                .count();
            YoungCheck { d, holds, total: usable.len() }
        })
        .collect();
    Ok(ChainReport {
        alpha,
        log_c,
        used: usable.len(),
        excluded: samples.len() - usable.len(),
        violation_fraction: violations as f64 / usable.len() as f64,
        young,
    })
}

/// `sum_p sup^2 |grad_{t,x} v_mu|` over `[-T2, T2] x B(p, 2R)`.
pub fn sobolev_lhs(field: &ExtensionField, grid: &Grid, cells: &[Cell]) -> f64 {
    cells
        .iter()
        .map(|c| field.sup_over(field.t2(), &c.outer_nodes(grid)).value.powi(2))
        .sum()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SobolevFit {
    /// `(mu, max over trials of LHS^(1/2))`.
    pub points: Vec<(f64, f64)>,
    pub fit: LineFit,
    /// Envelope `log C` over the fitted points.
    pub log_c: f64,
    pub slope: f64,
    pub held_out_mu: f64,
    /// `LHS^(1/2) / (C e^{K mu})` at the held-out `mu`.
    pub held_out_ratio: f64,
    /// `mu` values where the grid has fewer than 8 points per wavelength.
    pub under_resolved: Vec<f64>,
}

/// Fits `log LHS^(1/2)` affinely in `mu` on all but the largest `mu`, which is held out.
/// The same `trials` random unit vectors are reused for every `mu`.
pub fn sobolev_bound_check(
    dec: &SpectralDecomposition,
    mus: &[f64],
    trials: usize,
    steps: usize,
    cells: &[Cell],
    rng: &mut impl Rng,
) -> Result<SobolevFit> {
    if trials == 0 {
        return Err(invalid("trials", "need at least one trial"));
    }
    if mus.len() < 3 || mus.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(invalid("mus", "need at least three strictly increasing values"));
    }
    let first = cells.first().ok_or_else(|| invalid("cells", "need at least one cell"))?;
    let grid = dec.grid();
    let us: Vec<Vec<f64>> = (0..trials)
        .map(|_| {
            let u = gaussian_vector(rng, grid.node_count());
            let n = dec.norm(&u);
            u.into_iter().map(|v| v / n).collect()
        })
        .collect();
    let mut points = Vec::with_capacity(mus.len());
    for &mu in mus {
        let mut best: f64 = 0.0;
        for u in &us {
            let field = extend(dec, u, mu, first.t2, steps)?;
            best = best.max(sobolev_lhs(&field, grid, cells).sqrt());
        }
        points.push((mu, best));
    }
    let (train, last) = points.split_at(points.len() - 1);
    let x: Vec<f64> = train.iter().map(|p| p.0).collect();
    let y: Vec<f64> = train.iter().map(|p| p.1.ln()).collect();
    let fit = fit_line(&x, &y)?;
    let log_c = x
        .iter()
        .zip(&y)
        .map(|(a, b)| b - fit.slope * a)
        .fold(f64::NEG_INFINITY, f64::max);
    let (held_out_mu, actual) = last[0];
    let held_out_ratio = actual / (log_c + fit.slope * held_out_mu).exp();
    let under_resolved = mus.iter().cloned().filter(|&mu| grid.points_per_wavelength(mu) < 8.0).collect();
    Ok(SobolevFit { points, fit, log_c, slope: fit.slope, held_out_mu, held_out_ratio, under_resolved })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyReport {
    pub mu: f64,
    pub tau: f64,
    pub norm_sq: f64,
    /// Trapezoid rule in time of `||d_t v(t)||^2_kappa`.
    pub time_derivative: f64,
    /// Trapezoid rule of `cosh^2(mu t) ||u||^2`, a pointwise majorant of the above.
    pub cosh_majorant: f64,
    /// Trapezoid rule of `(-Delta v(t), v(t))_kappa`.
    pub dirichlet: f64,
    /// Trapezoid rule of `sinh^2(mu t) ||u||^2`.
    pub sinh_majorant: f64,
    /// `2 tau e^{2 tau mu} ||u||^2`, which dominates both trapezoid majorants.
    pub exponential_majorant: f64,
    /// Trapezoid rule of `||grad_x v(t)||^2_kappa` with centered differences.
    pub gradient: f64,
    /// Constant with `||grad_x v||^2 <= C (-Delta v, v)` for every `v` (1-D only).
    pub gradient_constant: Option<f64>,
}

impl EnergyReport {
    pub fn holds(&self) -> bool {
        let rel = 1.0 + 1e-12;
        self.time_derivative <= self.cosh_majorant * rel
            && self.cosh_majorant <= self.exponential_majorant * rel
            && self.dirichlet <= self.sinh_majorant * rel
            && self.sinh_majorant <= self.exponential_majorant * rel
            && self.gradient_constant.is_none_or(|c| self.gradient <= c * self.dirichlet * rel + 1e-300)
    }
}

fn trapezoid(times: &[f64], f: impl Fn(usize) -> f64) -> f64 {
    times.windows(2).enumerate().map(|(i, w)| 0.5 * (w[1] - w[0]) * (f(i) + f(i + 1))).sum()
}

/// Time-integrated energy bounds on `(-tau, tau)`, with `tau` the field's `T2`.
pub fn energy_identities(op: &EllipticOperator, field: &ExtensionField, u: &[f64]) -> EnergyReport {
    let grid = op.grid();
    let w = op.weight();
    let times = field.times();
    let tau = field.t2();
    let mu = field.mu();
    let norm_sq = weighted_inner(w, u, u);
    let time_derivative = trapezoid(times, |i| weighted_inner(w, field.time_derivative(i), field.time_derivative(i)));
    let cosh_majorant = trapezoid(times, |i| (mu * times[i]).cosh().powi(2) * norm_sq);
    let dirichlet = trapezoid(times, |i| op.energy(field.value(i)));
    let sinh_majorant = trapezoid(times, |i| (mu * times[i]).sinh().powi(2) * norm_sq);
    let gradient = trapezoid(times, |i| {
        centered_gradient(grid, field.value(i))
            .iter()
            .zip(w)
            .map(|(g, wi)| wi * (g[0] * g[0] + g[1] * g[1]))
            .sum()
    });
    EnergyReport {
        mu,
        tau,
        norm_sq,
        time_derivative,
        cosh_majorant,
        dirichlet,
        sinh_majorant,
        exponential_majorant: 2.0 * tau * (2.0 * tau * mu).exp() * norm_sq,
        gradient,
        gradient_constant: gradient_constant_1d(op),
    }
}

/// `((v_{i+1} - v_{i-1}) / 2h)^2 <= (D_+^2 + D_-^2) / 2`, so the centered-difference
/// gradient energy is at most `max_faces mean(kappa) h^d / (h^2 |K_{i,i+1}|)` times `v^T K v`.
fn gradient_constant_1d(op: &EllipticOperator) -> Option<f64> {
    let grid = op.grid();
    if grid.dim() != 1 {
        return None;
    }
    let h = grid.spacing();
    let w = op.weight();
    let k = op.stiffness();
    let mut worst: f64 = 0.0;
    for i in 0..grid.node_count() {
        let j = grid.shift(i, 0, 1);
        let coupling = -k.row(i).iter().find(|(c, _)| *c == j).map_or(0.0, |e| e.1);
        if coupling <= 0.0 {
            return None;
        }
        worst = worst.max(0.5 * (w[i] + w[j]) / (h * h * coupling));
    }
    Some(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_torus, cell_cover, sample_coefficients, CoefficientSpec, Metric};
    use crate::operator::{assemble, eigendecompose};
    use crate::sets::{generate_set, SetShape};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn laplacian_1d(n: usize) -> (EllipticOperator, SpectralDecomposition) {
        let g = build_torus(1, 2.0 * PI, n).unwrap();
        let c = sample_coefficients(&CoefficientSpec::Constant { kappa: 1.0, metric: Metric::IDENTITY }, &g).unwrap();
        let op = assemble(&g, &c).unwrap();
        let dec = eigendecompose(&op).unwrap();
        (op, dec)
    }

    #[test]
    fn single_mode_and_constant_mode() {
        let (_, dec) = laplacian_1d(32);
        let k = 3;
        let e = dec.mode(k);
        let lam = dec.frequencies()[k];
        let f = extend(&dec, &e, 5.0, 1.0, 4).unwrap();
        for (i, &t) in f.times().iter().enumerate() {
            let s = sinh_over(lam, t);
            for x in 0..32 {
                assert!((f.value(i)[x] - s * e[x]).abs() < 1e-12);
            }
        }
        let u = vec![0.7; 32];
        let f = extend(&dec, &u, 0.5, 1.0, 4).unwrap();
        for (i, &t) in f.times().iter().enumerate() {
            for x in 0..32 {
                assert!((f.value(i)[x] - t * 0.7).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn odd_in_time_and_zero_slice() {
        let (_, dec) = laplacian_1d(32);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let u = gaussian_vector(&mut rng, 32);
        let f = extend(&dec, &u, 6.0, 1.0, 5).unwrap();
        let z = f.zero_index();
        assert_eq!(f.times()[z], 0.0);
        assert!(f.value(z).iter().all(|v| v.abs() < 1e-14));
        let pu = dec.project(6.0, &u);
        for x in 0..32 {
            assert!((f.time_derivative(z)[x] - pu[x]).abs() < 1e-10);
        }
        let n = f.times().len();
        for i in 0..n {
            for x in 0..32 {
                assert!((f.value(i)[x] + f.value(n - 1 - i)[x]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn augmented_equation_per_mode() {
        let g = build_torus(2, 1.0, 8).unwrap();
        let spec = CoefficientSpec::RandomSmooth { seed: 4, modes: 2, kappa_base: 1.0, amplitude: 0.3, shear: 0.2 };
        let op = assemble(&g, &sample_coefficients(&spec, &g).unwrap()).unwrap();
        let dec = eigendecompose(&op).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let u = gaussian_vector(&mut rng, 64);
        let mu = 0.5 * dec.lambda_max();
        let f = extend(&dec, &u, mu, 0.3, 3).unwrap();
        for i in 0..f.times().len() {
            let lhs = f.second_time_derivative(&dec, i);
            let rhs = op.apply(f.value(i));
            let scale = dec.norm(&rhs).max(1e-300);
            let diff: Vec<f64> = lhs.iter().zip(&rhs).map(|(a, b)| a - b).collect();
            assert!(dec.norm(&diff) <= 1e-10 * scale.max(dec.norm(&lhs)) + 1e-14);
        }
    }

    #[test]
    fn cutoff_above_spectrum_is_flagged() {
        let (_, dec) = laplacian_1d(16);
        let u = vec![1.0; 16];
        assert!(matches!(extend(&dec, &u, 100.0, 1.0, 4), Err(Error::CutoffAboveSpectrum { .. })));
        assert!(extend(&dec, &u, 1.0, 1.0, 1).is_err());
    }

    #[test]
    fn nested_regions_and_zero_field() {
        let (_, dec) = laplacian_1d(64);
        let g = dec.grid().clone();
        let set = generate_set(&SetShape::RandomDensity { density: 0.3, radius: 0.5, seed: 1 }.into(), &g).unwrap();
        let cells = cell_cover(&g, PI / 2.0, PI / 4.0, 0.5, 1.0).unwrap();
        let zero = extend(&dec, &vec![0.0; 64], 5.0, 1.0, 4).unwrap();
        for (p, c) in cells.iter().enumerate() {
            let s = zero.region_sup(p, c, &set);
            assert_eq!((s.sup_e, s.sup_k, s.sup_omega), (0.0, 0.0, 0.0));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let u = gaussian_vector(&mut rng, 64);
        let f = extend(&dec, &u, 8.0, 1.0, 6).unwrap();
        for (p, c) in cells.iter().enumerate() {
            let s = f.region_sup(p, c, &set);
            assert!(s.e_empty || s.sup_e <= s.sup_k);
            assert!(s.sup_k <= s.sup_omega);
        }
    }

    #[test]
    fn synthetic_power_law_recovers_alpha() {
        let samples: Vec<RegionSup> = (0..40)
            .map(|i| {
                let e = 0.01 + i as f64 * 0.05;
                let o = 3.0 + (i % 7) as f64;
                RegionSup { cell: i % 4, mu: 5.0, sup_e: e, sup_k: 2.0 * e.sqrt() * o.sqrt(), sup_omega: o, e_empty: false }
            })
            .collect();
        let fit = estimate_alpha(&samples, 1e-9).unwrap();
        assert!((fit.alpha - 0.5).abs() < 1e-6);
        assert!((fit.log_c - 2f64.ln()).abs() < 1e-9);
        assert_eq!(fit.violation_fraction, 0.0);
    }

    #[test]
    fn unidentifiable_alpha_is_an_error() {
        let samples: Vec<RegionSup> = (0..12)
            .map(|i| RegionSup { cell: 0, mu: 1.0, sup_e: 2.0, sup_k: 1.0 + i as f64 * 0.01, sup_omega: 2.0, e_empty: false })
            .collect();
        assert!(matches!(estimate_alpha(&samples, 0.0), Err(Error::Degenerate(_))));
        let mut with_zero = samples.clone();
        with_zero[0].sup_e = 0.0;
        assert!(estimate_alpha(&with_zero[..10], 0.0).is_err());
    }

    /// `|grad|^2 = cosh^2(lt) a^2 cos^2(kx) + (sinh(lt)/l)^2 (sin(kh)/h)^2 a^2 sin^2(kx)`
    /// for `u = a cos(kx)`; the sup over each slab sits at `|t| = T2`.
    #[test]
    fn single_mode_sobolev_closed_form() {
        let n = 64;
        let (_, dec) = laplacian_1d(n);
        let g = dec.grid().clone();
        let h = g.spacing();
        let k = 3.0;
        let a = 1.0 / PI.sqrt();
        let u: Vec<f64> = (0..n).map(|i| a * (k * g.coords(i)[0]).cos()).collect();
        let lam = 2.0 * (k * h / 2.0).sin() / h;
        let t2 = 0.8;
        let cells = cell_cover(&g, PI / 2.0, PI / 4.0, 0.4, t2).unwrap();
        let f = extend(&dec, &u, 3.5, t2, 8).unwrap();
        let lhs = sobolev_lhs(&f, &g, &cells);
        let ch = (lam * t2).cosh();
        let sh = sinh_over(lam, t2) * (k * h).sin() / h;
        let expected: f64 = cells
            .iter()
            .map(|c| {
                c.outer_nodes(&g)
                    .iter()
                    .map(|&i| {
                        let x = k * g.coords(i)[0];
                        a * a * (ch * ch * x.cos().powi(2) + sh * sh * x.sin().powi(2))
                    })
                    .fold(0.0, f64::max)
            })
            .sum();
        assert!((lhs - expected).abs() <= 1e-8 * expected);
    }

    #[test]
    fn constant_mode_sobolev_and_longer_slab() {
        let (_, dec) = laplacian_1d(64);
        let g = dec.grid().clone();
        let cells = cell_cover(&g, PI, PI / 2.0, 0.5, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let u = gaussian_vector(&mut rng, 64);
        let mean = u.iter().sum::<f64>() / 64.0;
        let f = extend(&dec, &u, 0.5, 1.0, 4).unwrap();
        let lhs = sobolev_lhs(&f, &g, &cells);
        assert!((lhs - cells.len() as f64 * mean * mean).abs() < 1e-12);
        let short = sobolev_lhs(&extend(&dec, &u, 6.0, 1.0, 8).unwrap(), &g, &cells);
        let long = sobolev_lhs(&extend(&dec, &u, 6.0, 2.0, 16).unwrap(), &g, &cells);
        assert!(long >= short);
    }

    #[test]
    fn energy_bounds_hold() {
        let (op, dec) = laplacian_1d(64);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = gaussian_vector(&mut rng, 64);
        for mu in [2.0, 6.0, 12.0] {
            let f = extend(&dec, &u, mu, 0.7, 20).unwrap();
            let rep = energy_identities(&op, &f, &u);
            assert!(rep.holds(), "{rep:?}");
            assert!((rep.gradient_constant.unwrap() - 1.0).abs() < 1e-12);
        }
    }
}
