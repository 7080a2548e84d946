//! Subcommand bodies. Each builds what it needs from the resolved config,
//! writes its artifacts through [`RunOutput`], and finishes with the sidecar.

use std::path::Path;

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use qelab::dictionary::{defects, max_of, TestDictionary, TestFunction};
use qelab::ensembles::{expected_mass_check, task_rng, write_samples_csv, Ensemble, RandomSection};
use qelab::equilibrium::{
    calibrate_kappa, compare_routes, envelope_oracle, equilibrium_measure, is_decreasing, Envelope,
    EquilibriumMeasure,
};
use qelab::hilb::write_complex_matrix_csv;
use qelab::onbstats::{ergodic_property_experiment, orbit_integral_check, szego_traces, toeplitz};
use qelab::qe::{integrate_density, qe_experiment};
use qelab::zeros::{empirical_zero_measure, poincare_lelong_check, sample_stream, zero_convergence_experiment};
use qelab::{
    bernstein_markov_ratio, build_measure, build_weight, gram, log_bergman_potential, orthonormalize, GridKind,
    GridSpec, PotentialGrid, SupportMeasure, WeightedSpace,
};

use crate::config::{ExperimentConfig, LimitSource};
use crate::error::CliError;
use crate::output::RunOutput;

const PER_SAMPLE_STREAMS: &str = "sample k at degree N uses stream (N << 32) | k";
const PER_DRAW_STREAMS: &str = "draw k uses stream k";
const NO_STREAMS: &str = "no random draws";

/// Points at which the expected-mass check is evaluated.
const MASS_POINTS: usize = 10;
/// Stream reserved for choosing those points.
const POINT_STREAM: u64 = u64::MAX;

struct Setup {
    label: String,
    weight: std::sync::Arc<qelab::Weight>,
    measure: SupportMeasure,
}

fn setup(cfg: &ExperimentConfig) -> Result<Setup, CliError> {
    let weight = build_weight(cfg.model.weight.as_ref().expect("resolved config has a weight"))?;
    let measure = build_measure(cfg.model.measure.as_ref().expect("resolved config has a measure"))?;
    Ok(Setup {
        label: cfg.model.label.clone().unwrap_or_default(),
        weight: std::sync::Arc::new(weight),
        measure,
    })
}

fn spaces(cfg: &ExperimentConfig, s: &Setup) -> Result<Vec<WeightedSpace>, CliError> {
    cfg.degrees
        .iter()
        .map(|n| WeightedSpace::build(*n, &s.weight, &s.measure).map_err(CliError::from))
        .collect()
}

fn envelope(cfg: &ExperimentConfig, s: &Setup) -> Result<Envelope, CliError> {
    Ok(envelope_oracle(&s.weight, &s.measure.kind(), &cfg.grid, &cfg.envelope)?)
}

fn measure(cfg: &ExperimentConfig, env: &Envelope, out: &mut RunOutput) -> Result<EquilibriumMeasure, CliError> {
    let kappa = calibrate_kappa(&cfg.grid, &cfg.envelope)?;
    out.conventions.kappa = Some(kappa);
    Ok(equilibrium_measure(env, kappa, cfg.tolerances.coincidence)?)
}

/// The measure that normalized traces converge to.
enum Limit<'a> {
    Support(&'a SupportMeasure),
    Grid(EquilibriumMeasure),
}

impl Limit<'_> {
    fn pair<F: Fn(Complex64) -> f64>(&self, f: F) -> f64 {
        match self {
            Limit::Support(m) => m.integrate(f),
            Limit::Grid(mu) => mu.pair(f),
        }
    }
}

fn limit<'a>(cfg: &ExperimentConfig, s: &'a Setup, out: &mut RunOutput) -> Result<Limit<'a>, CliError> {
    Ok(match cfg.model.limit {
        LimitSource::Support => Limit::Support(&s.measure),
        LimitSource::Envelope => Limit::Grid(measure(cfg, &envelope(cfg, s)?, out)?),
    })
}

fn symbol(dict: &TestDictionary, name: &str) -> Result<TestFunction, CliError> {
    dict.functions.iter().find(|f| f.name == name).cloned().ok_or_else(|| {
        CliError::Schema(format!("symbol `{name}` is not in the dictionary; known: {}", dict.names().join(", ")))
    })
}

fn mass_points(seed: u64, radius: f64) -> Vec<Complex64> {
    let mut rng = task_rng(seed, POINT_STREAM);
    (0..MASS_POINTS)
        .map(|_| Complex64::from_polar(radius * rng.random::<f64>().sqrt(), 2.0 * std::f64::consts::PI * rng.random::<f64>()))
        .collect()
}

#[derive(Serialize)]
struct GramRow {
    model: String,
    degree: usize,
    dim: usize,
    scaled_condition: f64,
    orthonormality_error: f64,
}

pub fn gram_cmd(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<&'static str, CliError> {
    let s = setup(cfg)?;
    let mut rows = Vec::new();
    for &n in &cfg.degrees {
        let g = gram(n, &s.weight, &s.measure)?;
        write_complex_matrix_csv(g.matrix(), out.path(&format!("gram_N{n}.csv")))?;
        let space = orthonormalize(g)?;
        space.write_matrix_csv(out.path(&format!("onb_N{n}.csv")), true)?;
        rows.push(GramRow {
            model: s.label.clone(),
            degree: n,
            dim: space.dim(),
            scaled_condition: space.condition(),
            orthonormality_error: space.orthonormality_error(),
        });
    }
    out.write_jsonl("gram.jsonl", &rows)?;
    Ok(NO_STREAMS)
}

#[derive(Serialize)]
struct BergmanRow {
    model: String,
    degree: usize,
    bernstein_markov_ratio: f64,
}

pub fn bergman_cmd(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<&'static str, CliError> {
    let s = setup(cfg)?;
    let mut rows = Vec::new();
    for space in spaces(cfg, &s)? {
        let n = space.degree();
        log_bergman_potential(&space, &cfg.grid)?.write_csv(out.path(&format!("log_bergman_N{n}.csv")))?;
        rows.push(BergmanRow {
            model: s.label.clone(),
            degree: n,
            bernstein_markov_ratio: bernstein_markov_ratio(&space, &s.measure)?,
        });
    }
    out.write_jsonl("bergman.jsonl", &rows)?;
    Ok(NO_STREAMS)
}

#[derive(Serialize)]
struct EnvelopeSummary {
    model: String,
    sweeps: usize,
    residual: f64,
    far_field_closure: bool,
    closure_radius: f64,
    coincidence_tol: f64,
    coincidence_radius: f64,
    obstacle_violation: f64,
    subharmonicity_defect: f64,
}

#[derive(Serialize)]
struct RouteRow {
    model: String,
    degree: usize,
    region_radius: f64,
    sup_error: f64,
}

pub fn envelope_cmd(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<&'static str, CliError> {
    let s = setup(cfg)?;
    let env = envelope(cfg, &s)?;
    env.potential.write_csv(out.path("envelope.csv"))?;
    let tol = cfg.tolerances.coincidence.unwrap_or_else(|| env.default_coincidence_tol());
    let mask = env.coincidence_mask(tol);
    PotentialGrid {
        spec: cfg.grid,
        values: mask.iter().map(|m| if *m { 1.0 } else { 0.0 }).collect(),
        kind: GridKind::Mask,
    }
    .write_csv(out.path("coincidence.csv"))?;
    out.write_json(
        "envelope.json",
        &EnvelopeSummary {
            model: s.label.clone(),
            sweeps: env.sweeps,
            residual: env.residual,
            far_field_closure: env.far_field_closure,
            closure_radius: env.closure_radius,
            coincidence_tol: tol,
            coincidence_radius: env.coincidence_radius(tol),
            obstacle_violation: env.obstacle_violation(),
            subharmonicity_defect: env.subharmonicity_defect(),
        },
    )?;
    let sp = spaces(cfg, &s)?;
    let refs: Vec<&WeightedSpace> = sp.iter().collect();
    let radius = 0.8 * cfg.grid.inscribed_radius();
    let center = cfg.grid.center();
    let rows: Vec<RouteRow> = compare_routes(&refs, &env, |z| (z - center).norm() <= radius)?
        .into_iter()
        .map(|r| RouteRow { model: s.label.clone(), degree: r.degree, region_radius: radius, sup_error: r.sup_error })
        .collect();
    out.write_jsonl("routes.jsonl", &rows)?;
    Ok(NO_STREAMS)
}

#[derive(Serialize)]
struct MeasureSummary {
    model: String,
    raw_mass: f64,
    total_mass: f64,
    off_mask_mass: f64,
}

#[derive(Serialize)]
struct DosRow {
    model: String,
    degree: usize,
    max_defect: f64,
    functions: Vec<String>,
    defects: Vec<f64>,
}

pub fn measure_cmd(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<&'static str, CliError> {
    let s = setup(cfg)?;
    let env = envelope(cfg, &s)?;
    let mu = measure(cfg, &env, out)?;
    mu.density.write_csv(out.path("density.csv"))?;
    out.write_json(
        "measure.json",
        &MeasureSummary {
            model: s.label.clone(),
            raw_mass: mu.raw_mass,
            total_mass: mu.total_mass(),
            off_mask_mass: mu.off_mask_mass,
        },
    )?;
    let dict = TestDictionary::build(&cfg.dictionary)?;
    let target: Vec<f64> = dict.functions.iter().map(|f| mu.pair(|z| f.eval(z))).collect();
    let mut rows = Vec::new();
    for space in spaces(cfg, &s)? {
        let d = space.dim() as f64;
        let dos: Vec<f64> = dict.functions.iter().map(|f| integrate_density(&space, &s.measure, f) / d).collect();
        let def = defects(&dos, &target);
        rows.push(DosRow {
            model: s.label.clone(),
            degree: space.degree(),
            max_defect: max_of(&def),
            functions: dict.names(),
            defects: def,
        });
    }
    out.write_jsonl("density_of_states.jsonl", &rows)?;
    Ok(NO_STREAMS)
}

pub fn sample_cmd(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<&'static str, CliError> {
    let s = setup(cfg)?;
    let kind = cfg.ensemble.kind;
    let seed = cfg.ensemble.seed;
    let points = mass_points(seed, 0.8 * cfg.grid.inscribed_radius());
    let mut reports = Vec::new();
    for space in spaces(cfg, &s)? {
        let n = space.degree();
        let samples: Vec<RandomSection> = (0..cfg.ensemble.n_samples as u64)
            .map(|k| RandomSection::draw(&space, kind, seed, sample_stream(n, k)))
            .collect();
        write_samples_csv(&samples, out.path(&format!("samples_N{n}.csv")))?;
        let mut r = expected_mass_check(&space, &points, cfg.ensemble.n_samples, kind, seed);
        r.rows.iter_mut().for_each(|row| row.flagged = row.z_score.abs() > cfg.tolerances.mass_sigma);
        reports.push(r);
    }
    out.write_jsonl("expected_mass.jsonl", &reports)?;
    Ok(PER_SAMPLE_STREAMS)
}

#[derive(Serialize)]
struct ZeroSummaryRow {
    model: String,
    degree: usize,
    n_samples: usize,
    master_seed: u64,
    mean_defect: f64,
    max_defect: f64,
    mean_degree_drop: f64,
}

pub fn zeros_cmd(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<&'static str, CliError> {
    let s = setup(cfg)?;
    out.conventions.ensemble = Ensemble::Gaussian.name().into();
    let env = envelope(cfg, &s)?;
    let mu = measure(cfg, &env, out)?;
    let dict = TestDictionary::build(&cfg.dictionary)?;
    let sp = spaces(cfg, &s)?;
    let refs: Vec<&WeightedSpace> = sp.iter().collect();
    let rows = zero_convergence_experiment(&s.label, &refs, cfg.ensemble.n_samples, cfg.ensemble.seed, &dict, &mu)?;
    for space in &sp {
        let n = space.degree();
        let first = RandomSection::draw(space, Ensemble::Gaussian, cfg.ensemble.seed, sample_stream(n, 0));
        empirical_zero_measure(space, &first, Some(&cfg.grid))?.write_csv(out.path(&format!("zeros_N{n}_sample0.csv")))?;
        let kappa = out.conventions.kappa.expect("set by measure()");
        let lelong = poincare_lelong_check(space, &first, &cfg.grid, kappa, &dict, cfg.tolerances.cluster)?;
        out.write_jsonl(&format!("lelong_N{n}_sample0.jsonl"), &lelong)?;
    }
    let summary: Vec<ZeroSummaryRow> = rows
        .iter()
        .map(|r| ZeroSummaryRow {
            model: r.model.clone(),
            degree: r.degree,
            n_samples: r.n_samples,
            master_seed: r.master_seed,
            mean_defect: r.mean_defect,
            max_defect: r.max_defect,
            mean_degree_drop: r.mean_degree_drop,
        })
        .collect();
    out.write_csv("zeros.csv", &summary)?;
    out.write_jsonl("zeros.jsonl", &rows)?;
    Ok(PER_SAMPLE_STREAMS)
}

pub fn qe_cmd(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<&'static str, CliError> {
    let s = setup(cfg)?;
    out.conventions.ensemble = Ensemble::Spherical.name().into();
    let env = envelope(cfg, &s)?;
    let mu = measure(cfg, &env, out)?;
    let dict = TestDictionary::build(&cfg.dictionary)?;
    let sp = spaces(cfg, &s)?;
    let pairs: Vec<(&WeightedSpace, &SupportMeasure)> = sp.iter().map(|x| (x, &s.measure)).collect();
    let g = &cfg.grid;
    let l1_grid = GridSpec { nx: cfg.qe.l1_points, ny: cfg.qe.l1_points, ..*g };
    let rows = qe_experiment(&s.label, &pairs, &dict, &mu, &env, &l1_grid, cfg.ensemble.n_samples, cfg.ensemble.seed)?;
    out.write_csv("qe.csv", &rows)?;
    out.write_jsonl("qe.jsonl", &rows)?;
    Ok(PER_SAMPLE_STREAMS)
}

pub fn onb_cmd(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<&'static str, CliError> {
    let s = setup(cfg)?;
    out.conventions.ensemble = "haar unitary on the orthonormal basis".into();
    let mu = limit(cfg, &s, out)?;
    let dict = TestDictionary::build(&cfg.dictionary)?;
    let g = symbol(&dict, &cfg.onb.symbol)?;
    let tau = mu.pair(|z| g.eval(z));
    let tau_sq = mu.pair(|z| g.eval(z).powi(2));
    let sp = spaces(cfg, &s)?;
    let pairs: Vec<(&WeightedSpace, &SupportMeasure)> = sp.iter().map(|x| (x, &s.measure)).collect();
    let rows = ergodic_property_experiment(
        &s.label,
        &pairs,
        &g.name,
        |z| g.eval(z),
        tau,
        tau_sq,
        cfg.onb.draws,
        cfg.ensemble.seed,
        cfg.onb.eps,
    )?;
    out.write_csv("onb.csv", &rows)?;
    Ok(PER_SAMPLE_STREAMS)
}

#[derive(Serialize)]
struct SzegoOut {
    model: String,
    degree: usize,
    symbol: String,
    trace: f64,
    trace_sq: f64,
    tau: f64,
    tau_sq: f64,
    error: f64,
    error_sq: f64,
}

pub fn szego_cmd(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<&'static str, CliError> {
    let s = setup(cfg)?;
    let mu = limit(cfg, &s, out)?;
    let dict = TestDictionary::build(&cfg.dictionary)?;
    let symbols: Vec<TestFunction> = cfg.szego.symbols.iter().map(|n| symbol(&dict, n)).collect::<Result<_, _>>()?;
    let sp = spaces(cfg, &s)?;
    let mut rows = Vec::new();
    for g in &symbols {
        let tau = mu.pair(|z| g.eval(z));
        let tau_sq = mu.pair(|z| g.eval(z).powi(2));
        for space in &sp {
            let r = szego_traces(&toeplitz(space, &s.measure, &g.name, |z| g.eval(z)), tau, tau_sq);
            rows.push(SzegoOut {
                model: s.label.clone(),
                degree: r.degree,
                symbol: r.symbol,
                trace: r.trace,
                trace_sq: r.trace_sq,
                tau: r.tau,
                tau_sq: r.tau_sq,
                error: r.error,
                error_sq: r.error_sq,
            });
        }
    }
    out.write_csv("szego.csv", &rows)?;
    Ok(NO_STREAMS)
}

#[derive(Serialize)]
struct OrbitOut {
    lambda: Vec<f64>,
    closed_form: f64,
    mc_mean: f64,
    stderr: f64,
    relative_error: f64,
    n_samples: usize,
    master_seed: u64,
}

pub fn orbit_cmd(cfg: &ExperimentConfig, out: &mut RunOutput) -> Result<&'static str, CliError> {
    out.conventions.ensemble = "haar unitary".into();
    let r = orbit_integral_check(&cfg.orbit.spectrum, cfg.orbit.draws, cfg.ensemble.seed)?;
    out.write_json(
        "orbit.json",
        &OrbitOut {
            relative_error: r.relative_error(),
            lambda: r.lambda,
            closed_form: r.closed_form,
            mc_mean: r.mc_mean,
            stderr: r.stderr,
            n_samples: r.n_samples,
            master_seed: r.master_seed,
        },
    )?;
    Ok(PER_DRAW_STREAMS)
}

/// Values below this are rounding and count as zero in the trend check.
const ROUNDING_FLOOR: f64 = 1e-12;

/// Sources aggregated by `report`: file, label column, metric columns.
const REPORT_SOURCES: [(&str, Option<&str>, &[&str]); 4] = [
    ("qe.csv", None, &["mean_defect", "mean_l1", "control_defect"]),
    ("zeros.csv", None, &["max_defect"]),
    ("szego.csv", Some("symbol"), &["error", "error_sq"]),
    ("onb.csv", Some("symbol"), &["mean_y_over_d", "cesaro"]),
];

#[derive(Serialize)]
struct SummaryRow {
    source: String,
    model: String,
    degree: usize,
    label: String,
    metric: String,
    value: f64,
    /// Whether the metric is decreasing over the degrees seen so far.
    decreasing: bool,
}

pub fn report_cmd(cfg: &ExperimentConfig, dir: &Path, out: &mut RunOutput) -> Result<&'static str, CliError> {
    out.conventions.ensemble = "as recorded by each source".into();
    let mut rows: Vec<SummaryRow> = Vec::new();
    for (file, label_col, metrics) in REPORT_SOURCES {
        let path = dir.join(file);
        if !path.exists() {
            continue;
        }
        let mut rd = csv::Reader::from_path(&path)?;
        let headers = rd.headers()?.clone();
        let col = |name: &str| {
            headers.iter().position(|h| h == name).ok_or_else(|| CliError::Output(format!("{file}: missing column `{name}`")))
        };
        let (i_model, i_degree) = (col("model")?, col("degree")?);
        let i_label = label_col.map(col).transpose()?;
        let i_metrics: Vec<usize> = metrics.iter().map(|m| col(m)).collect::<Result<_, _>>()?;
        let mut records = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let num = |i: usize| rec[i].parse::<f64>().map_err(|_| CliError::Output(format!("{file}: bad number `{}`", &rec[i])));
            let degree = rec[i_degree].parse::<usize>().map_err(|_| CliError::Output(format!("{file}: bad degree")))?;
            let label = i_label.map(|i| rec[i].to_string()).unwrap_or_default();
            for (m, i) in metrics.iter().zip(&i_metrics) {
                records.push((rec[i_model].to_string(), degree, label.clone(), m.to_string(), num(*i)?));
            }
        }
        records.sort_by(|a, b| (&a.0, &a.2, &a.3, a.1).cmp(&(&b.0, &b.2, &b.3, b.1)));
        let mut history: Vec<f64> = Vec::new();
        let mut key: Option<(String, String, String)> = None;
        for (model, degree, label, metric, value) in records {
            let k = (model.clone(), label.clone(), metric.clone());
            if key.as_ref() != Some(&k) {
                history.clear();
                key = Some(k);
            }
            history.push(value.max(ROUNDING_FLOOR));
            rows.push(SummaryRow {
                source: file.trim_end_matches(".csv").to_string(),
                model,
                degree,
                label,
                metric,
                value,
                decreasing: is_decreasing(&history, cfg.tolerances.decrease_jitter),
            });
        }
    }
    if rows.is_empty() {
        return Err(CliError::Output(format!("no experiment outputs found in {}", dir.display())));
    }
    out.write_csv("summary.csv", &rows)?;
    Ok(NO_STREAMS)
}
