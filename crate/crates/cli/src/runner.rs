//! Experiment pipelines and run records.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use spectrolab::control::{
    hum_control, impulsive_control, lebeau_robbiano_control, observability_constant, observability_gramian,
    verify_obster, HumOptions, ImpulseOptions, ImpulseSchedule, LrOptions, ObservationSchedule, RetentionPolicy,
    SlabSchedule, TimeIntegration, TimeSet,
};
use spectrolab::extension::{estimate_alpha, propagation_samples, sobolev_bound_check, RegionSup};
use spectrolab::grid::{cell_cover, Cell, Grid};
use spectrolab::rng::gaussian_vector;
use spectrolab::sets::{generate_set, hausdorff_content, verify_density, ObservationSet, SetKind};
use spectrolab::specineq::{
    fit_exponential, spectral_constant_l2, spectral_constant_linf, AscentOptions, SpectralConstantSample,
};
use spectrolab::{assemble, eigendecompose, sample_coefficients, CoefficientSpec, SpectralDecomposition};

use crate::config::{ConfigError, ExperimentConfig, ExperimentKind, ResolutionPolicy, VariantConfig};
use crate::report::{emit_report, num, Assertion, Plot, PlotStyle, Report, Table};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Library(#[from] spectrolab::Error),
    #[error("cannot write output: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssertionRecord {
    pub name: String,
    pub passed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub experiment: String,
    pub config_hash: String,
    pub timestamp: String,
    pub versions: Vec<(String, String)>,
    pub seed: u64,
    pub run_dir: PathBuf,
    /// Paths relative to `run_dir`.
    pub files: Vec<String>,
    pub assertions: Vec<AssertionRecord>,
    pub passed: bool,
}

impl RunRecord {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }
}

pub const RECORD_FILE: &str = "run.toml";

/// Runs the configured pipeline into `base/<experiment>-<hash prefix>`.
pub fn run_experiment(config: &ExperimentConfig, base: &Path, strict: bool) -> Result<RunRecord, RunError> {
    config.validate()?;
    let hash = config.hash();
    let run_dir = base.join(format!("{}-{}", config.experiment.name(), &hash[..12]));
    let report = build_report(config, strict)?;
    std::fs::create_dir_all(&run_dir)?;
    let config_path = run_dir.join("config.toml");
    std::fs::write(&config_path, config.to_toml())?;
    let mut files = vec![config_path];
    files.extend(emit_report(&report, &run_dir)?);
    let mut names: Vec<String> =
        files.iter().map(|p| p.strip_prefix(&run_dir).unwrap_or(p).display().to_string()).collect();
    names.push(RECORD_FILE.to_string());
    let record = RunRecord {
        experiment: config.experiment.name().to_string(),
        config_hash: hash,
        timestamp: chrono::Utc::now().to_rfc3339(),
        versions: vec![
            ("spectrolab".into(), spectrolab_version()),
            ("spectrolab-cli".into(), env!("CARGO_PKG_VERSION").into()),
        ],
        seed: config.seed,
        run_dir: run_dir.clone(),
        files: names,
        assertions: report.assertions.iter().map(|a| AssertionRecord { name: a.name.clone(), passed: a.passed }).collect(),
        passed: report.passed(),
    };
    std::fs::write(run_dir.join(RECORD_FILE), toml::to_string(&record).expect("record serializes"))?;
    Ok(record)
}

fn spectrolab_version() -> String {
    // the workspace shares one version
    env!("CARGO_PKG_VERSION").to_string()
}

/// Runs the pipeline without touching the filesystem.
pub fn build_report(config: &ExperimentConfig, strict: bool) -> Result<Report, RunError> {
    let mut report = Report::default();
    let grid = config.grid()?;
    check_resolution(config, &grid, strict, &mut report)?;
    report.notes.push(("experiment".into(), config.experiment.name().into()));
    report.notes.push(("seed".into(), config.seed.to_string()));
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    match config.experiment {
        ExperimentKind::Sets => run_sets(config, &grid, &mut report)?,
        kind => {
            let dec = decompose(config, &grid)?;
            match kind {
                ExperimentKind::Spectrum => run_spectrum(config, &dec, &mut report),
                ExperimentKind::Specineq => run_specineq(config, &dec, &mut rng, &mut report)?,
                ExperimentKind::Propagation => run_propagation(config, &dec, &mut rng, &mut report)?,
                ExperimentKind::Sobolev => run_sobolev(config, &dec, &mut rng, &mut report)?,
                ExperimentKind::ControlHum => run_hum(config, &dec, &mut rng, &mut report)?,
                ExperimentKind::ControlLr => run_lr(config, &dec, &mut rng, &mut report)?,
                ExperimentKind::ControlImpulsive => run_impulsive(config, &dec, &mut rng, &mut report)?,
                ExperimentKind::Obster => run_obster(config, &dec, &mut rng, &mut report)?,
                ExperimentKind::Sets => unreachable!(),
            }
        }
    }
    Ok(report)
}

fn check_resolution(config: &ExperimentConfig, grid: &Grid, strict: bool, report: &mut Report) -> Result<(), RunError> {
    let Some(mu) = config.max_frequency() else { return Ok(()) };
    if mu <= 0.0 {
        return Ok(());
    }
    let ppw = grid.points_per_wavelength(mu);
    if ppw < 8.0 {
        let message = format!("{ppw:.2} points per wavelength at frequency {mu} (fewer than 8)");
        if strict || config.resolution_policy == ResolutionPolicy::Fail {
            return Err(ConfigError::Invalid { field: "domain.resolution".into(), message }.into());
        }
        report.warnings.push(message);
    }
    Ok(())
}

fn decompose(config: &ExperimentConfig, grid: &Grid) -> Result<SpectralDecomposition, RunError> {
    let coeffs = sample_coefficients(&config.coefficients, grid)?;
    Ok(eigendecompose(&assemble(grid, &coeffs)?)?)
}

fn observation_set(config: &ExperimentConfig, grid: &Grid) -> Result<ObservationSet, RunError> {
    let spec = config.set.as_ref().ok_or_else(|| ConfigError::Invalid { field: "set".into(), message: "missing".into() })?;
    Ok(generate_set(spec, grid)?)
}

fn cells(config: &ExperimentConfig, grid: &Grid) -> Result<Vec<Cell>, RunError> {
    let c = config.parameters.cells.as_ref().ok_or_else(|| ConfigError::Invalid {
        field: "parameters.cells".into(),
        message: "missing".into(),
    })?;
    Ok(cell_cover(grid, c.pitch, c.radius, c.t1, c.t2)?)
}

fn mu_grid(config: &ExperimentConfig) -> Vec<f64> {
    config.parameters.mu.clone().unwrap_or_default()
}

/// Closed-form eigenvalues of the periodic stencil for constant coefficients with a
/// diagonal metric, sorted.
fn closed_form_spectrum(config: &ExperimentConfig, grid: &Grid) -> Option<Vec<f64>> {
    let CoefficientSpec::Constant { metric, .. } = &config.coefficients else { return None };
    if metric.xy != 0.0 {
        return None;
    }
    let n = grid.resolution();
    let h = grid.spacing();
    let s: Vec<f64> =
        (0..n).map(|k| (4.0 / (h * h)) * (std::f64::consts::PI * k as f64 / n as f64).sin().powi(2)).collect();
    let mut out: Vec<f64> = if grid.dim() == 1 {
        s.iter().map(|v| metric.xx * v).collect()
    } else {
        s.iter().flat_map(|a| s.iter().map(move |b| metric.xx * a + metric.yy * b)).collect()
    };
    out.sort_by(f64::total_cmp);
    Some(out)
}

fn run_spectrum(config: &ExperimentConfig, dec: &SpectralDecomposition, report: &mut Report) {
    let exact = closed_form_spectrum(config, dec.grid());
    let mut table = Table::new("eigenvalues", &["index", "eigenvalue", "frequency", "closed_form", "rel_error"]);
    let mut worst: f64 = 0.0;
    for (k, (&l2, &l)) in dec.eigenvalues().iter().zip(dec.frequencies()).enumerate() {
        let (cf, err) = match &exact {
            Some(e) => {
                let err = if e[k] == 0.0 { l2.abs() } else { (l2 - e[k]).abs() / e[k] };
                worst = worst.max(err);
                (num(e[k]), num(err))
            }
            None => (String::new(), String::new()),
        };
        table.push(vec![k.to_string(), num(l2), num(l), cf, err]);
    }
    report.notes.push(("modes".into(), dec.len().to_string()));
    if exact.is_some() {
        report.assertions.push(Assertion::new(
            "closed-form spectrum",
            worst <= 1e-10,
            format!("max relative error {worst:e}"),
        ));
    }
    report.plots.push(Plot {
        name: "eigenvalues".into(),
        title: "Spectrum".into(),
        x_label: "index".into(),
        y_label: "eigenvalue".into(),
        log_y: false,
        style: PlotStyle::Line,
        points: dec.eigenvalues().iter().enumerate().map(|(k, &v)| (k as f64, v)).collect(),
    });
    report.tables.push(table);
}

fn run_specineq(
    config: &ExperimentConfig,
    dec: &SpectralDecomposition,
    rng: &mut ChaCha8Rng,
    report: &mut Report,
) -> Result<(), RunError> {
    let set = observation_set(config, dec.grid())?;
    let p = &config.parameters;
    let variant = p.variant.unwrap_or_default();
    let mut samples: Vec<SpectralConstantSample> = Vec::new();
    for mu in mu_grid(config) {
        let s = match variant {
            VariantConfig::L2 => spectral_constant_l2(dec, &set, mu)?,
            VariantConfig::LinfSum => {
                let cells = cells(config, dec.grid())?;
                spectral_constant_linf(dec, &set, mu, &cells, p.restarts.unwrap_or(4), AscentOptions::default(), rng)?
            }
        };
        samples.push(s);
    }
    let mut table = Table::new("constants", &["mu", "variant", "constant", "retained"]);
    for s in &samples {
        table.push(vec![num(s.mu), s.variant.name().into(), num(s.constant), s.retained.to_string()]);
    }
    report.tables.push(table);
    if variant == VariantConfig::L2 {
        let monotone = samples.windows(2).all(|w| w[0].mu > w[1].mu || w[0].constant <= w[1].constant);
        report.assertions.push(Assertion::new("monotone in mu", monotone, format!("{} frequencies", samples.len())));
    }
    let min_r2 = p.min_r_squared.unwrap_or(0.95);
    match fit_exponential(&samples) {
        Ok(fit) => {
            let mut t = Table::new(
                "fit",
                &["log_c0", "slope", "r_squared", "held_out_mu", "held_out_gap", "envelope", "used", "excluded"],
            );
            t.push(vec![
                num(fit.log_c0),
                num(fit.slope),
                num(fit.r_squared),
                num(fit.held_out_mu),
                num(fit.held_out_gap),
                num(fit.envelope),
                fit.used.to_string(),
                fit.excluded.to_string(),
            ]);
            report.tables.push(t);
            report.assertions.push(Assertion::new(
                "log-affine growth",
                fit.r_squared >= min_r2,
                format!("R^2 {:.5} (need {min_r2}), slope {:.5}", fit.r_squared, fit.slope),
            ));
        }
        Err(e) => report.assertions.push(Assertion::new("log-affine growth", false, e.to_string())),
    }
    report.plots.push(Plot {
        name: "constants".into(),
        title: "Spectral constant".into(),
        x_label: "mu".into(),
        y_label: "C(mu)".into(),
        log_y: true,
        style: PlotStyle::Line,
        points: samples.iter().map(|s| (s.mu, s.constant)).collect(),
    });
    Ok(())
}

fn run_propagation(
    config: &ExperimentConfig,
    dec: &SpectralDecomposition,
    rng: &mut ChaCha8Rng,
    report: &mut Report,
) -> Result<(), RunError> {
    let set = observation_set(config, dec.grid())?;
    let cells = cells(config, dec.grid())?;
    let p = &config.parameters;
    let trials = p.trials.unwrap_or(20);
    let steps = p.steps.unwrap_or(20);
    let n = dec.grid().node_count();
    let mut table =
        Table::new("region_sups", &["trial", "mu", "cell", "sup_e", "sup_k", "sup_omega", "e_empty"]);
    let mut sups: Vec<RegionSup> = Vec::new();
    for trial in 0..trials {
        let u = gaussian_vector(rng, n);
        for mu in mu_grid(config) {
            for s in propagation_samples(dec, &set, &cells, &u, mu, steps)? {
                let r = s.sups;
                table.push(vec![
                    trial.to_string(),
                    num(r.mu),
                    r.cell.to_string(),
                    num(r.sup_e),
                    num(r.sup_k),
                    num(r.sup_omega),
                    r.e_empty.to_string(),
                ]);
                sups.push(r);
            }
        }
    }
    report.tables.push(table);
    match estimate_alpha(&sups, p.slack.unwrap_or(0.0)) {
        Ok(fit) => {
            let mut t = Table::new(
                "alpha_fit",
                &[
                    "alpha",
                    "log_c",
                    "log_c_ls",
                    "r_squared",
                    "used",
                    "excluded",
                    "slack",
                    "violation_fraction",
                    "heldout_violation_fraction",
                ],
            );
            t.push(vec![
                num(fit.alpha),
                num(fit.log_c),
                num(fit.log_c_ls),
                num(fit.r_squared),
                fit.used.to_string(),
                fit.excluded.to_string(),
                num(fit.slack),
                num(fit.violation_fraction),
                num(fit.heldout_violation_fraction),
            ]);
            report.tables.push(t);
            report.assertions.push(Assertion::new(
                "alpha in (0.02, 0.98)",
                fit.alpha > 0.02 && fit.alpha < 0.98,
                format!("alpha {:.5}", fit.alpha),
            ));
            report.assertions.push(Assertion::new(
                "fitted inequality holds on 95% of samples",
                fit.satisfied_fraction() >= 0.95,
                format!("{:.2}% of {}", 100.0 * fit.satisfied_fraction(), fit.used),
            ));
        }
        Err(e) => report.assertions.push(Assertion::new("alpha fit", false, e.to_string())),
    }
    report.plots.push(Plot {
        name: "alpha".into(),
        title: "Propagation samples".into(),
        x_label: "log(supE / supOmega)".into(),
        y_label: "log(supK / supOmega)".into(),
        log_y: false,
        style: PlotStyle::Scatter,
        points: sups
            .iter()
            .filter(|s| s.sup_e > 0.0 && s.sup_k > 0.0 && s.sup_omega > 0.0)
            .map(|s| ((s.sup_e / s.sup_omega).ln(), (s.sup_k / s.sup_omega).ln()))
            .collect(),
    });
    Ok(())
}

fn run_sobolev(
    config: &ExperimentConfig,
    dec: &SpectralDecomposition,
    rng: &mut ChaCha8Rng,
    report: &mut Report,
) -> Result<(), RunError> {
    let cells = cells(config, dec.grid())?;
    let p = &config.parameters;
    let fit = sobolev_bound_check(dec, &mu_grid(config), p.trials.unwrap_or(8), p.steps.unwrap_or(16), &cells, rng)?;
    let mut t = Table::new("sobolev", &["mu", "lhs_sqrt"]);
    for &(mu, v) in &fit.points {
        t.push(vec![num(mu), num(v)]);
    }
    report.tables.push(t);
    let mut t = Table::new("sobolev_fit", &["log_c", "slope", "r_squared", "held_out_mu", "held_out_ratio"]);
    t.push(vec![num(fit.log_c), num(fit.slope), num(fit.fit.r_squared), num(fit.held_out_mu), num(fit.held_out_ratio)]);
    report.tables.push(t);
    for mu in &fit.under_resolved {
        report.warnings.push(format!("frequency {mu} has fewer than 8 points per wavelength"));
    }
    let min_r2 = p.min_r_squared.unwrap_or(0.9);
    report.assertions.push(Assertion::new(
        "log-affine growth",
        fit.fit.r_squared >= min_r2,
        format!("R^2 {:.5} (need {min_r2}), slope {:.5}", fit.fit.r_squared, fit.slope),
    ));
    report.plots.push(Plot {
        name: "sobolev".into(),
        title: "Gradient sup bound".into(),
        x_label: "mu".into(),
        y_label: "LHS^(1/2)".into(),
        log_y: true,
        style: PlotStyle::Line,
        points: fit.points.clone(),
    });
    Ok(())
}

fn retention(config: &ExperimentConfig) -> RetentionPolicy {
    match config.parameters.max_frequency {
        Some(mu) => RetentionPolicy::up_to(mu),
        None => RetentionPolicy::default(),
    }
}

fn run_hum(
    config: &ExperimentConfig,
    dec: &SpectralDecomposition,
    rng: &mut ChaCha8Rng,
    report: &mut Report,
) -> Result<(), RunError> {
    let set = observation_set(config, dec.grid())?;
    let p = &config.parameters;
    let t = p.t.unwrap_or(1.0);
    let intervals = p.time_set.clone().unwrap_or_default().into_iter().map(|[a, b]| (a, b)).collect();
    let f = TimeSet::new(intervals, p.quadrature_nodes.unwrap_or(32))?;
    let n = dec.grid().node_count();
    let u0 = gaussian_vector(rng, n);
    let tolerance = p.tolerance.unwrap_or(1e-6);
    let opts = HumOptions {
        integration: TimeIntegration::Trapezoid,
        retention: retention(config),
        epsilon: p.epsilon,
        tolerance,
    };
    let r = hum_control(dec, &set, &f, &u0, &vec![0.0; n], t, opts)?;
    let g = observability_gramian(dec, &set, &f.reflect(t)?, r.retained, TimeIntegration::Trapezoid)?;
    let c_obs = observability_constant(dec, &g, t)?.constant;
    let bound = c_obs * dec.coefficients_prefix(&u0, r.retained).norm_squared();

    let mut s = Table::new(
        "hum_summary",
        &["retained", "cost", "dual_value", "epsilon", "terminal_residual", "predicted_residual", "leakage", "c_obs", "cost_bound"],
    );
    s.push(vec![
        r.retained.to_string(),
        num(r.cost),
        num(r.dual_value),
        num(r.epsilon),
        num(r.terminal_residual),
        num(r.predicted_residual),
        num(r.leakage),
        num(c_obs),
        num(bound),
    ]);
    report.tables.push(s);
    let mut c = Table::new("control", &["time", "weight", "control_norm"]);
    for ((time, w), f) in r.times.iter().zip(&r.weights).zip(&r.control) {
        c.push(vec![num(*time), num(*w), num(dec.norm(f))]);
    }
    report.tables.push(c);
    report.tables.push(state_table("terminal", dec.grid(), &r.terminal_state));
    report.assertions.push(Assertion::new(
        "terminal residual",
        r.terminal_residual <= tolerance,
        format!("{:e} (tolerance {tolerance:e})", r.terminal_residual),
    ));
    report.assertions.push(Assertion::new(
        "cost within observability bound",
        r.cost <= bound,
        format!("cost {:e}, bound {bound:e}", r.cost),
    ));
    report.plots.push(Plot {
        name: "control".into(),
        title: "Control norm".into(),
        x_label: "t".into(),
        y_label: "||f(t)||".into(),
        log_y: true,
        style: PlotStyle::Scatter,
        points: r.times.iter().zip(&r.control).map(|(&t, f)| (t, dec.norm(f))).collect(),
    });
    Ok(())
}

fn state_table(name: &str, grid: &Grid, u: &[f64]) -> Table {
    let mut t = Table::new(name, &["node", "x", "y", "value"]);
    for (i, v) in u.iter().enumerate() {
        let [x, y] = grid.coords(i);
        t.push(vec![i.to_string(), num(x), num(y), num(*v)]);
    }
    t
}

fn run_lr(
    config: &ExperimentConfig,
    dec: &SpectralDecomposition,
    rng: &mut ChaCha8Rng,
    report: &mut Report,
) -> Result<(), RunError> {
    let set = observation_set(config, dec.grid())?;
    let p = &config.parameters;
    let slabs = p.slabs.as_ref().expect("validated");
    let schedule = SlabSchedule::geometric(p.t.unwrap_or(1.0), slabs.count, slabs.ratio)?;
    let u0 = gaussian_vector(rng, dec.grid().node_count());
    let tolerance = p.tolerance.unwrap_or(1e-6);
    let r = lebeau_robbiano_control(dec, &set, &u0, &schedule, LrOptions { mu0: slabs.mu0, epsilon: p.epsilon, tolerance })?;
    let mut t = Table::new(
        "slabs",
        &["slab", "start", "switch", "end", "mu", "retained", "state_norm", "projected_norm", "cost", "residual"],
    );
    for (j, s) in r.slabs.iter().enumerate() {
        t.push(vec![
            j.to_string(),
            num(s.start),
            num(s.switch),
            num(s.end),
            num(s.mu),
            s.retained.to_string(),
            num(s.state_norm),
            num(s.projected_norm),
            num(s.cost),
            num(s.residual),
        ]);
    }
    report.tables.push(t);
    let mut s = Table::new("lr_summary", &["final_norm", "total_cost", "reached", "exhausted"]);
    s.push(vec![num(r.final_norm), num(r.total_cost), r.reached.to_string(), r.exhausted.to_string()]);
    report.tables.push(s);
    report.assertions.push(Assertion::new(
        "state driven below tolerance",
        r.reached,
        format!("final norm {:e} (tolerance {tolerance:e}){}", r.final_norm, if r.exhausted { ", spectrum exhausted" } else { "" }),
    ));
    report.plots.push(Plot {
        name: "cost_vs_mu".into(),
        title: "Slab cost".into(),
        x_label: "mu".into(),
        y_label: "cost".into(),
        log_y: true,
        style: PlotStyle::Line,
        points: r.slabs.iter().map(|s| (s.mu, s.cost)).collect(),
    });
    Ok(())
}

fn run_impulsive(
    config: &ExperimentConfig,
    dec: &SpectralDecomposition,
    rng: &mut ChaCha8Rng,
    report: &mut Report,
) -> Result<(), RunError> {
    let set = observation_set(config, dec.grid())?;
    let p = &config.parameters;
    let t = p.t.unwrap_or(1.0);
    let sc = p.schedule.as_ref().expect("validated");
    let schedule = ImpulseSchedule::geometric(sc.start.unwrap_or(0.0), t, sc.tau, sc.count, sc.d)?;
    let n = dec.grid().node_count();
    let u0 = gaussian_vector(rng, n);
    let tolerance = p.tolerance.unwrap_or(1e-6);
    let opts = ImpulseOptions { retention: retention(config), epsilon: p.epsilon, tolerance };
    let r = impulsive_control(dec, &set, &schedule, &u0, &vec![0.0; n], t, opts)?;
    let mut t_imp = Table::new("impulses", &["index", "time", "weight", "norm"]);
    for (j, ((time, w), f)) in r.times.iter().zip(&r.weights).zip(&r.control).enumerate() {
        t_imp.push(vec![(j + 1).to_string(), num(*time), num(*w), num(dec.norm(f))]);
    }
    report.tables.push(t_imp);
    let mut s = Table::new("impulsive_summary", &["retained", "cost", "linear_cost", "terminal_residual", "leakage"]);
    s.push(vec![
        r.retained.to_string(),
        num(r.cost),
        num(r.linear_cost.unwrap_or(0.0)),
        num(r.terminal_residual),
        num(r.leakage),
    ]);
    report.tables.push(s);
    report.tables.push(state_table("terminal", dec.grid(), &r.terminal_state));
    report.assertions.push(Assertion::new(
        "terminal residual",
        r.terminal_residual <= tolerance,
        format!("{:e} (tolerance {tolerance:e})", r.terminal_residual),
    ));
    Ok(())
}

fn run_obster(
    config: &ExperimentConfig,
    dec: &SpectralDecomposition,
    rng: &mut ChaCha8Rng,
    report: &mut Report,
) -> Result<(), RunError> {
    let set = observation_set(config, dec.grid())?;
    let p = &config.parameters;
    let t = p.t.unwrap_or(1.0);
    let sc = p.schedule.as_ref().expect("validated");
    let schedule = ObservationSchedule::geometric(sc.start.unwrap_or(0.8 * t), sc.tau, sc.count)?;
    let r = verify_obster(dec, &set, &schedule, sc.d, t, p.trials.unwrap_or(50), rng)?;
    let mut table = Table::new("obster", &["trial", "ratio"]);
    for (i, q) in r.ratios.iter().enumerate() {
        table.push(vec![i.to_string(), num(*q)]);
    }
    report.tables.push(table);
    let mut s = Table::new("obster_summary", &["constant", "stability", "skipped"]);
    s.push(vec![num(r.constant), num(r.stability), r.skipped.to_string()]);
    report.tables.push(s);
    let max_stability = p.max_stability.unwrap_or(10.0);
    report.assertions.push(Assertion::new(
        "empirical constant stable",
        r.stability <= max_stability,
        format!("max/min {:.4} (limit {max_stability})", r.stability),
    ));
    Ok(())
}

fn run_sets(config: &ExperimentConfig, grid: &Grid, report: &mut Report) -> Result<(), RunError> {
    let set = observation_set(config, grid)?;
    let mut nodes = Table::new("set_nodes", &["node", "x", "y", "member"]);
    for i in 0..grid.node_count() {
        let [x, y] = grid.coords(i);
        nodes.push(vec![i.to_string(), num(x), num(y), (set.contains(i) as u8).to_string()]);
    }
    report.tables.push(nodes);
    let kind = match set.kind {
        SetKind::Density => "density",
        SetKind::Content => "content",
    };
    let mut s = Table::new("set_summary", &["nodes", "measure", "kind", "window", "delta", "content_dim"]);
    s.push(vec![
        set.len().to_string(),
        num(set.measure(grid)),
        kind.into(),
        num(set.window),
        num(set.delta),
        set.content_dim.map(num).unwrap_or_default(),
    ]);
    report.tables.push(s);
    if set.kind == SetKind::Density {
        let d = verify_density(&set, grid, set.window, set.delta);
        report.assertions.push(Assertion::new(
            "density hypothesis",
            d.passes,
            format!("min window measure {:e} at node {}, delta {:e}", d.min_measure, d.argmin, d.delta),
        ));
    }
    let order = config.parameters.content_order.or(set.content_dim);
    if let Some(order) = order {
        let est = hausdorff_content(&set, grid, order, set.window.max(grid.spacing()))?;
        let mut t = Table::new("content", &["order", "max_radius", "upper_bound", "lower_bound"]);
        t.push(vec![num(est.order), num(est.max_radius), num(est.upper_bound), num(est.lower_bound)]);
        report.tables.push(t);
        report.assertions.push(Assertion::new(
            "content bounds ordered",
            est.lower_bound > 0.0 && est.lower_bound <= est.upper_bound,
            format!("[{:e}, {:e}]", est.lower_bound, est.upper_bound),
        ));
    }
    Ok(())
}
