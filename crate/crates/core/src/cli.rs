//! Command implementations behind the `acv` binary.

use std::collections::hash_map::DefaultHasher;
use std::fmt::Write as _;
use std::fs;
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::io::{self, ForwardKind, IoError, ProblemKind, RunConfig};
use crate::metrics::{fit_linear_rate, fit_rate_slope, primal_objective, ConvergenceRecord, GapBox, RecordOptions};
use crate::problems::{
    build_forward_operator, build_fused_elastic_net, build_imaging, lipschitz_ratio_scale, observe, synthetic_image,
    ForwardModel, FusedElasticNetSpec, ImagingSpec, ProblemError, SyntheticRegression,
};
use crate::solver::tuning::{tune_cv, GridSpec, TuneResult};
use crate::solver::{self, run, run_with, strongest_acv, Algorithm, ParamSchedule, SaddleProblem, SolverError, SolverState, ValidationReport, Variant};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Io(#[from] IoError),
    #[error(transparent)]
    Problem(#[from] ProblemError),
    #[error("schedule validation failed: {0}")]
    Validation(String),
    #[error("{algorithm} diverged at iteration {k}")]
    Diverged { algorithm: String, k: usize },
    #[error("{0}")]
    Solver(String),
}

impl CliError {
    /// 0 success, 1 divergence, 2 validation failure, 3 usage/config/io.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Diverged { .. } => 1,
            CliError::Validation(_) => 2,
            _ => 3,
        }
    }

    fn from_solver(algorithm: &str, e: SolverError) -> Self {
        match e {
            SolverError::Diverged { k, .. } => CliError::Diverged {
                algorithm: algorithm.to_string(),
                k,
            },
            SolverError::TuningFailed(msg) => CliError::Diverged {
                algorithm: format!("{algorithm} ({msg})"),
                k: 0,
            },
            other => CliError::Solver(format!("{algorithm}: {other}")),
        }
    }
}

/// A problem together with its starting point.
#[derive(Debug, Clone)]
pub struct Instance {
    pub problem: SaddleProblem,
    pub init: SolverState,
}

pub fn build_instance(cfg: &RunConfig) -> Result<Instance, CliError> {
    let problem = match cfg.problem {
        ProblemKind::FusedElasticNet => {
            let (mut w, mut b) = match &cfg.data {
                Some(path) => {
                    let data = io::read_libsvm(path)?;
                    let data = if cfg.rescale_columns { io::rescale_columns(&data) } else { data };
                    (data.features, data.labels)
                }
                None => {
                    let gen = SyntheticRegression {
                        sparsity: cfg.sparsity,
                        noise: cfg.noise,
                        column_decay: cfg.column_decay,
                        ..SyntheticRegression::new(cfg.n, cfg.d, cfg.seed)
                    };
                    let (w, b, _) = gen.generate();
                    (w, b)
                }
            };
            let mut spec = FusedElasticNetSpec {
                lambda1: cfg.lambda1,
                lambda2: cfg.lambda2,
                lambda3: cfg.lambda3,
                beta: cfg.beta,
                smoothed: cfg.smoothed(),
                pair_fraction: cfg.pair_fraction,
                ..FusedElasticNetSpec::new(w.clone(), b.clone())
            };
            if let Some(ratio) = cfg.lipschitz_ratio {
                let opnorm = spec.pair_operator()?.norm_upper_bound(solver::OPNORM_SEED);
                let c = lipschitz_ratio_scale(&w, opnorm, ratio);
                w.scale(c);
                b.iter_mut().for_each(|v| *v *= c);
                spec.w = w;
                spec.b = b;
            }
            build_fused_elastic_net(&spec)?
        }
        ProblemKind::Imaging => {
            let (h, wd) = (cfg.height, cfg.width);
            let image = match &cfg.image {
                Some(path) => io::read_image(path, h, wd)?,
                None => synthetic_image(h, wd, cfg.seed),
            };
            let forward = match cfg.forward {
                ForwardKind::Mask => ForwardModel::Mask {
                    keep_fraction: cfg.keep_fraction,
                    seed: cfg.seed,
                },
                ForwardKind::Blur => ForwardModel::Blur {
                    half_width: cfg.blur_half_width,
                    radial: cfg.blur_radial,
                },
                ForwardKind::Projection => ForwardModel::Projection {
                    rows: if cfg.projection_rows == 0 { 2 * h * wd } else { cfg.projection_rows },
                    gain: cfg.projection_gain,
                    seed: cfg.seed,
                },
            };
            let m = build_forward_operator(h, wd, &forward)?;
            let observed = observe(&m, &image, cfg.noise, cfg.seed.wrapping_add(1));
            build_imaging(&ImagingSpec {
                height: h,
                width: wd,
                observed,
                forward,
                lambda1: cfg.lambda1,
                mu_g: cfg.mu_g,
                rho1: cfg.rho1,
            })?
        }
    };
    let init = SolverState::new(vec![cfg.init_value; problem.primal_dim()], vec![0.0; problem.dual_dim()]);
    Ok(Instance { problem, init })
}

/// Schedule for `algorithm` with the configured overrides; `cv-tuned` runs
/// its grid search first.
pub fn schedule_for(
    cfg: &RunConfig,
    inst: &Instance,
    algorithm: Algorithm,
    variant: Variant,
) -> Result<(ParamSchedule, Option<TuneResult>), CliError> {
    let (schedule, tuned) = if algorithm == Algorithm::CvTuned {
        let t = tune_cv(&inst.problem, &cfg.tune_grid, &inst.init, cfg.max_iters)
            .map_err(|e| CliError::from_solver(algorithm.name(), e))?;
        (t.schedule(), Some(t))
    } else {
        let s = algorithm
            .schedule_with(&inst.problem, variant)
            .map_err(|e| CliError::Validation(format!("{algorithm}: {e}")))?;
        (s, None)
    };
    Ok((schedule.with_overrides(cfg.steps), tuned))
}

fn validation_error(algorithm: Algorithm, report: &ValidationReport) -> CliError {
    let (name, v) = report.first_failure().expect("failed report has a violation");
    CliError::Validation(format!(
        "{algorithm}: constraint '{name}' violated at k={} (excess {:.3e})",
        v.k, v.excess
    ))
}

/// Long-run solution used as the gap reference.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub objective: f64,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub algorithm: Algorithm,
    pub iterations: usize,
}

fn cache_path(dir: &Path, key: &str) -> PathBuf {
    let mut h = DefaultHasher::new();
    key.hash(&mut h);
    dir.join(format!("{:016x}.ref", h.finish()))
}

fn encode_reference(key: &str, r: &Reference) -> String {
    let bits = |v: &[f64]| v.iter().map(|x| format!("{:016x}", x.to_bits())).collect::<Vec<_>>().join(" ");
    let mut s = String::new();
    for line in key.lines() {
        writeln!(s, "# {line}").unwrap();
    }
    writeln!(s, "{}", r.algorithm).unwrap();
    writeln!(s, "{:016x}", r.objective.to_bits()).unwrap();
    writeln!(s, "{}", bits(&r.x)).unwrap();
    writeln!(s, "{}", bits(&r.y)).unwrap();
    s
}

fn decode_reference(key: &str, text: &str, iterations: usize) -> Option<Reference> {
    let header: String = text
        .lines()
        .take_while(|l| l.starts_with("# "))
        .map(|l| format!("{}\n", &l[2..]))
        .collect();
    if header != key {
        return None;
    }
    let mut body = text.lines().skip_while(|l| l.starts_with("# "));
    let parse = |l: &str| -> Option<Vec<f64>> {
        l.split_whitespace()
            .map(|t| u64::from_str_radix(t, 16).ok().map(f64::from_bits))
            .collect()
    };
    let algorithm: Algorithm = body.next()?.parse().ok()?;
    let objective = *parse(body.next()?)?.first()?;
    let x = parse(body.next().unwrap_or(""))?;
    let y = parse(body.next().unwrap_or(""))?;
    Some(Reference {
        objective,
        x,
        y,
        algorithm,
        iterations,
    })
}

// Lowest objective with the averages where it occurred.
type BestPoint = (f64, Vec<f64>, Vec<f64>);

/// Runs the strongest applicable ACV schedule, the Condat-Vu book steps and
/// the tuned Condat-Vu steps for `reference_iters_multiplier * max_iters`
/// iterations each and keeps the lowest objective seen by any of them.
/// Results are cached under `cache_dir` when given.
pub fn compute_reference(cfg: &RunConfig, inst: &Instance, cache_dir: Option<&Path>) -> Result<Reference, CliError> {
    let iterations = cfg.max_iters.max(1) * cfg.reference_iters_multiplier;
    let key = format!("{}reference-iterations={iterations}\n", cfg.problem_key());
    let problem = &inst.problem;
    if let Some(dir) = cache_dir {
        if let Ok(text) = fs::read_to_string(cache_path(dir, &key)) {
            if let Some(r) = decode_reference(&key, &text, iterations) {
                if r.x.len() == problem.primal_dim() && r.y.len() == problem.dual_dim() {
                    return Ok(r);
                }
            }
        }
    }
    let mut suite = vec![strongest_acv(problem)];
    if let Ok(s) = Algorithm::CvBook.schedule(problem) {
        suite.push((Algorithm::CvBook, s));
    }
    match tune_cv(problem, &cfg.tune_grid, &inst.init, cfg.max_iters) {
        Ok(t) => suite.push((Algorithm::CvTuned, t.schedule())),
        Err(e) => log::warn!("reference suite without cv-tuned: {e}"),
    }
    let start = (primal_objective(problem, &inst.init.v), inst.init.v.clone(), inst.init.w.clone());
    let runs: Vec<Option<BestPoint>> = std::thread::scope(|scope| {
        let handles: Vec<_> = suite
            .iter()
            .map(|(algorithm, schedule)| {
                let start = start.clone();
                scope.spawn(move || {
                    let mut best = start;
                    let out = run_with(problem, schedule, inst.init.clone(), iterations, |s| {
                        let f = primal_objective(problem, &s.v);
                        if f < best.0 {
                            best = (f, s.v.clone(), s.w.clone());
                        }
                    });
                    if let Err(e) = out {
                        log::warn!("reference run {algorithm} stopped early: {e}");
                    }
                    best.0.is_finite().then_some(best)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().ok().flatten()).collect()
    });
    let (winner, (objective, x, y)) = suite
        .iter()
        .map(|(a, _)| *a)
        .zip(runs)
        .filter_map(|(a, r)| r.map(|r| (a, r)))
        .min_by(|a, b| a.1 .0.total_cmp(&b.1 .0))
        .ok_or_else(|| CliError::Solver("no reference run produced a finite objective".into()))?;
    log::info!("reference objective {objective:e} from {winner}");
    let reference = Reference {
        objective,
        x,
        y,
        algorithm: winner,
        iterations,
    };
    if let Some(dir) = cache_dir {
        let path = cache_path(dir, &key);
        let written = fs::create_dir_all(dir).and_then(|_| fs::write(&path, encode_reference(&key, &reference)));
        if let Err(e) = written {
            log::warn!("could not cache reference at {}: {e}", path.display());
        }
    }
    Ok(reference)
}

fn record_options(cfg: &RunConfig, inst: &Instance, reference: &Reference) -> RecordOptions {
    let gap_box = cfg
        .pd_gap
        .then(|| GapBox::around_reference(&reference.x, &reference.y, &inst.init.x, &inst.init.y));
    RecordOptions {
        log_every: cfg.log_every,
        reference_objective: Some(reference.objective),
        gap_box,
        pd_gap_probes: cfg.pd_gap_probes,
        seed: cfg.seed,
        record_time: cfg.record_time,
    }
}

/// Per-algorithm line of a comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub label: String,
    pub final_gap: Option<f64>,
    pub iterations_to_threshold: Option<usize>,
    pub rate_slope: Option<f64>,
    pub contraction: Option<f64>,
    pub wall_time_s: f64,
    pub error: Option<String>,
}

/// Comparison table; thresholds and fit windows are shared by every row.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchSummary {
    pub threshold: f64,
    pub slope_window: (usize, usize),
    pub contraction_window: (usize, usize),
    pub rows: Vec<SummaryRow>,
}

impl BenchSummary {
    pub fn new(threshold: f64, max_iters: usize) -> Self {
        let hi = max_iters.max(1);
        BenchSummary {
            threshold,
            slope_window: ((hi / 10).max(1), hi),
            contraction_window: (hi.saturating_sub(100).max(1), hi),
            rows: Vec::new(),
        }
    }

    pub fn add(&mut self, label: &str, outcome: &Result<ConvergenceRecord, CliError>) {
        let row = match outcome {
            Ok(rec) => SummaryRow {
                label: label.to_string(),
                final_gap: rec.last().and_then(|r| rec.best_gap_at(r.k)),
                iterations_to_threshold: rec.iterations_to(self.threshold),
                rate_slope: fit_rate_slope(rec, self.slope_window.0, self.slope_window.1).ok(),
                contraction: fit_linear_rate(rec, self.contraction_window.0, self.contraction_window.1).ok(),
                wall_time_s: rec.last().map_or(0.0, |r| r.wall_time_s),
                error: None,
            },
            Err(e) => SummaryRow {
                label: label.to_string(),
                final_gap: None,
                iterations_to_threshold: None,
                rate_slope: None,
                contraction: None,
                wall_time_s: 0.0,
                error: Some(e.to_string()),
            },
        };
        self.rows.push(row);
    }

    pub fn render(&self) -> String {
        let opt = |v: Option<f64>, prec: usize| v.map_or("-".to_string(), |x| format!("{x:.prec$e}"));
        let mut s = String::new();
        writeln!(
            s,
            "{:<16} {:>12} {:>14} {:>10} {:>12} {:>10}",
            "algorithm",
            "final_gap",
            format!("iters<={:.0e}", self.threshold),
            "slope",
            "contraction",
            "time_s"
        )
        .unwrap();
        for r in &self.rows {
            if let Some(e) = &r.error {
                writeln!(s, "{:<16} FAILED: {e}", r.label).unwrap();
                continue;
            }
            writeln!(
                s,
                "{:<16} {:>12} {:>14} {:>10} {:>12} {:>10.3}",
                r.label,
                opt(r.final_gap, 3),
                r.iterations_to_threshold.map_or("not reached".to_string(), |k| k.to_string()),
                r.rate_slope.map_or("-".to_string(), |v| format!("{v:.3}")),
                r.contraction.map_or("-".to_string(), |v| format!("{v:.6}")),
                r.wall_time_s
            )
            .unwrap();
        }
        s
    }
}

/// Builds, validates and runs one algorithm against `reference`.
fn run_algorithm(
    cfg: &RunConfig,
    inst: &Instance,
    algorithm: Algorithm,
    reference: &Reference,
) -> Result<ConvergenceRecord, CliError> {
    let (schedule, _) = schedule_for(cfg, inst, algorithm, Variant::Shipped)?;
    if algorithm != Algorithm::CvTuned || !cfg.steps.is_empty() {
        let report = algorithm.validate(&inst.problem, &schedule, cfg.max_iters);
        if !report.passed() {
            return Err(validation_error(algorithm, &report));
        }
    }
    let options = record_options(cfg, inst, reference);
    run(&inst.problem, &schedule, inst.init.clone(), cfg.max_iters, &options)
        .map(|out| out.record)
        .map_err(|e| CliError::from_solver(algorithm.name(), e))
}

fn cache_dir(output: &Path) -> PathBuf {
    output.join("reference-cache")
}

/// Single run: CSV at `<output>/<algorithm>.csv` and a one-line summary.
pub fn cmd_solve(config: &Path, output: Option<&Path>) -> Result<String, CliError> {
    let mut cfg = io::read_config(config)?;
    if let Some(o) = output {
        cfg.output = o.to_path_buf();
    }
    let inst = build_instance(&cfg)?;
    let reference = compute_reference(&cfg, &inst, Some(&cache_dir(&cfg.output)))?;
    let record = run_algorithm(&cfg, &inst, cfg.algorithm, &reference)?;
    let path = cfg.output.join(format!("{}.csv", cfg.algorithm));
    io::write_convergence_csv(&record, &path)?;
    let last = record.last();
    Ok(format!(
        "algorithm={} iterations={} objective={} best_gap={} time_s={:.3} csv={}",
        cfg.algorithm,
        cfg.max_iters,
        last.map_or("-".into(), |r| format!("{:.10e}", r.objective)),
        last.and_then(|r| record.best_gap_at(r.k)).map_or("-".into(), |g| format!("{g:.3e}")),
        last.map_or(0.0, |r| r.wall_time_s),
        path.display()
    ))
}

/// CSV file names for `algorithms`; repeats get `-2`, `-3`, ... suffixes.
pub fn output_labels(algorithms: &[Algorithm]) -> Vec<String> {
    let mut seen: Vec<Algorithm> = Vec::new();
    algorithms
        .iter()
        .map(|a| {
            let n = seen.iter().filter(|s| *s == a).count();
            seen.push(*a);
            if n == 0 {
                a.name().to_string()
            } else {
                format!("{}-{}", a.name(), n + 1)
            }
        })
        .collect()
}

pub fn parse_algorithms(list: &str) -> Result<Vec<Algorithm>, CliError> {
    let algos: Vec<Algorithm> = list
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<Algorithm>().map_err(|e| CliError::Usage(e.to_string())))
        .collect::<Result<_, _>>()?;
    if algos.is_empty() {
        return Err(CliError::Usage("empty algorithm list".into()));
    }
    Ok(algos)
}

/// Outcome of a comparison: the table plus the first failure, if any.
pub struct CompareOutcome {
    pub summary: BenchSummary,
    pub failure: Option<CliError>,
}

/// Runs every algorithm concurrently from the same start against a shared
/// reference and writes one CSV per algorithm.
pub fn cmd_compare(config: &Path, algorithms: &[Algorithm]) -> Result<CompareOutcome, CliError> {
    if algorithms.is_empty() {
        return Err(CliError::Usage("empty algorithm list".into()));
    }
    let cfg = io::read_config(config)?;
    compare_with_config(&cfg, algorithms)
}

pub fn compare_with_config(cfg: &RunConfig, algorithms: &[Algorithm]) -> Result<CompareOutcome, CliError> {
    let inst = build_instance(cfg)?;
    let reference = compute_reference(cfg, &inst, Some(&cache_dir(&cfg.output)))?;
    let labels = output_labels(algorithms);
    let outcomes: Vec<Result<ConvergenceRecord, CliError>> = std::thread::scope(|scope| {
        let handles: Vec<_> = algorithms
            .iter()
            .map(|&a| {
                let (inst, reference) = (&inst, &reference);
                scope.spawn(move || run_algorithm(cfg, inst, a, reference))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| Err(CliError::Solver("run panicked".into()))))
            .collect()
    });
    let mut summary = BenchSummary::new(cfg.gap_threshold, cfg.max_iters);
    let mut failure = None;
    for (label, outcome) in labels.iter().zip(outcomes) {
        let outcome = match outcome {
            Ok(rec) => io::write_convergence_csv(&rec, &cfg.output.join(format!("{label}.csv")))
                .map(|_| rec)
                .map_err(CliError::from),
            Err(e) => Err(e),
        };
        summary.add(label, &outcome);
        if let Err(e) = outcome {
            log::error!("{label}: {e}");
            failure.get_or_insert(e);
        }
    }
    Ok(CompareOutcome { summary, failure })
}

/// Grid search over Condat-Vu steps; returns the candidate table.
pub fn cmd_tune_cv(config: &Path, grid: &str) -> Result<String, CliError> {
    let cfg = io::read_config(config)?;
    let grid: GridSpec = grid.parse().map_err(|e: crate::solver::tuning::GridParseError| CliError::Usage(e.to_string()))?;
    let inst = build_instance(&cfg)?;
    let result = tune_cv(&inst.problem, &grid, &inst.init, cfg.max_iters)
        .map_err(|e| CliError::from_solver("cv-tuned", e))?;
    let mut s = String::new();
    writeln!(s, "{:>12} {:>14} {:>14} {:>18}", "multiplier", "gamma", "tau", "best_objective").unwrap();
    for c in &result.candidates {
        writeln!(
            s,
            "{:>12.3e} {:>14.6e} {:>14.6e} {:>18}",
            c.multiplier,
            c.params.gamma,
            c.params.tau,
            c.best_objective.map_or("diverged".to_string(), |v| format!("{v:.10e}"))
        )
        .unwrap();
    }
    writeln!(
        s,
        "selected multiplier={:e} gamma={:e} tau={:e} (base step {:e})",
        result.best.multiplier, result.best.params.gamma, result.best.params.tau, result.base_step
    )
    .unwrap();
    Ok(s)
}

/// Prints the constraint sweep of the configured algorithm's schedule.
pub fn cmd_validate(config: &Path, horizon: usize, paper_literal: bool) -> Result<(String, bool), CliError> {
    let cfg = io::read_config(config)?;
    validate_with_config(&cfg, horizon, paper_literal)
}

pub fn validate_with_config(cfg: &RunConfig, horizon: usize, paper_literal: bool) -> Result<(String, bool), CliError> {
    let inst = build_instance(cfg)?;
    let variant = if paper_literal { Variant::PaperLiteral } else { Variant::Shipped };
    let (schedule, _) = schedule_for(cfg, &inst, cfg.algorithm, variant)?;
    let report = cfg.algorithm.validate(&inst.problem, &schedule, horizon);
    let p = &inst.problem;
    let mut s = String::new();
    writeln!(
        s,
        "{} ({}) L={:.6e} |A|={:.6e} mu_g={:.6e} mu_f*={:.6e} horizon={horizon}",
        cfg.algorithm,
        report.regime,
        p.lipschitz,
        p.opnorm_a,
        p.mu_g,
        p.mu_fstar
    )
    .unwrap();
    if let Some(t0) = schedule.warmup_t0() {
        writeln!(s, "warm-up length T0={t0}").unwrap();
    }
    for line in report.summary_lines() {
        writeln!(s, "{line}").unwrap();
    }
    Ok((s, report.passed()))
}
