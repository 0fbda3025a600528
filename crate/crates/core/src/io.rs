//! Datasets in LibSVM format, column rescaling, run configuration and the
//! convergence CSV.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::linops::DenseMatrix;
use crate::metrics::{ConvergenceRecord, RecordRow};
use crate::solver::tuning::GridSpec;
use crate::solver::{Algorithm, StepOverrides};

/// Exact header of convergence logs.
pub const CSV_HEADER: &str = "k,wall_time_s,objective,gap_ref,pd_gap,iterate_norm";

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{source_name}:{line}: {msg}")]
    Parse {
        source_name: String,
        line: usize,
        msg: String,
    },
    #[error("{0}: no rows")]
    NoRows(String),
    #[error("unknown config keys: {}", .0.join(", "))]
    UnknownKeys(Vec<String>),
    #[error("config key '{key}': {msg}")]
    InvalidValue { key: String, msg: String },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Dense features with regression labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub features: DenseMatrix,
    pub labels: Vec<f64>,
    pub feature_names: Option<Vec<String>>,
    pub source: String,
}

pub fn read_libsvm(path: &Path) -> Result<Dataset, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_libsvm(&text, &path.display().to_string())
}

/// Parses `<label> <index>:<value> ...` lines with 1-based indices.
pub fn parse_libsvm(text: &str, source_name: &str) -> Result<Dataset, IoError> {
    let perr = |line: usize, msg: String| IoError::Parse {
        source_name: source_name.to_string(),
        line,
        msg,
    };
    let mut labels = Vec::new();
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::new();
    let mut d = 0;
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let mut tokens = line.split_whitespace();
        let label_tok = tokens.next().unwrap_or_default();
        let label: f64 = label_tok
            .parse()
            .map_err(|_| perr(ln + 1, format!("bad label '{label_tok}'")))?;
        let mut entries = Vec::new();
        for tok in tokens {
            let (i, v) = tok
                .split_once(':')
                .ok_or_else(|| perr(ln + 1, format!("expected index:value, got '{tok}'")))?;
            let i: usize = i
                .parse()
                .ok()
                .filter(|i| *i >= 1)
                .ok_or_else(|| perr(ln + 1, format!("bad index in '{tok}'")))?;
            let v: f64 = v
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| perr(ln + 1, format!("bad value in '{tok}'")))?;
            d = d.max(i);
            entries.push((i - 1, v));
        }
        if !label.is_finite() {
            return Err(perr(ln + 1, format!("bad label '{label_tok}'")));
        }
        labels.push(label);
        rows.push(entries);
    }
    if rows.is_empty() || d == 0 {
        return Err(IoError::NoRows(source_name.to_string()));
    }
    let mut features = DenseMatrix::zeros(rows.len(), d);
    for (r, entries) in rows.iter().enumerate() {
        for &(c, v) in entries {
            features.set(r, c, v);
        }
    }
    Ok(Dataset {
        features,
        labels,
        feature_names: None,
        source: source_name.to_string(),
    })
}

/// Writes non-zero entries with shortest round-trip formatting.
pub fn write_libsvm(dataset: &Dataset, path: &Path) -> Result<(), IoError> {
    let mut out = String::new();
    for (r, label) in dataset.labels.iter().enumerate() {
        write!(out, "{label}").unwrap();
        for (c, v) in dataset.features.row(r).iter().enumerate() {
            if *v != 0.0 {
                write!(out, " {}:{v}", c + 1).unwrap();
            }
        }
        out.push('\n');
    }
    write_creating_dirs(path, &out)
}

/// Divides every column by its largest absolute entry; zero columns are kept.
pub fn rescale_columns(dataset: &Dataset) -> Dataset {
    let mut out = dataset.clone();
    let w = &mut out.features;
    for c in 0..w.cols() {
        let m = (0..w.rows()).fold(0.0_f64, |m, r| m.max(w.get(r, c).abs()));
        if m > 0.0 {
            for r in 0..w.rows() {
                w.set(r, c, w.get(r, c) / m);
            }
        }
    }
    out
}

fn write_creating_dirs(path: &Path, contents: &str) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    fs::write(path, contents).map_err(io_err(path))
}

fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_num).unwrap_or_default()
}

pub fn convergence_csv(record: &ConvergenceRecord) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in record.rows() {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.k,
            fmt_num(r.wall_time_s),
            fmt_num(r.objective),
            fmt_opt(r.gap_ref),
            fmt_opt(r.pd_gap),
            fmt_num(r.iterate_norm)
        )
        .unwrap();
    }
    out
}

pub fn write_convergence_csv(record: &ConvergenceRecord, path: &Path) -> Result<(), IoError> {
    write_creating_dirs(path, &convergence_csv(record))
}

pub fn read_convergence_csv(path: &Path) -> Result<ConvergenceRecord, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    parse_convergence_csv(&text, &path.display().to_string())
}

pub fn parse_convergence_csv(text: &str, source_name: &str) -> Result<ConvergenceRecord, IoError> {
    let perr = |line: usize, msg: String| IoError::Parse {
        source_name: source_name.to_string(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, h)) if h.trim_end() == CSV_HEADER => {}
        _ => return Err(perr(1, format!("expected header '{CSV_HEADER}'"))),
    }
    let mut record = ConvergenceRecord::new();
    for (ln, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(perr(ln + 1, format!("expected 6 fields, got {}", f.len())));
        }
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| perr(ln + 1, format!("bad number '{s}'")));
        let opt = |s: &str| if s.trim().is_empty() { Ok(None) } else { num(s).map(Some) };
        let k = f[0]
            .trim()
            .parse::<usize>()
            .map_err(|_| perr(ln + 1, format!("bad iteration '{}'", f[0])))?;
        if record.last().is_some_and(|r| r.k >= k) {
            return Err(perr(ln + 1, "iterations must increase".into()));
        }
        record.push(RecordRow {
            k,
            wall_time_s: num(f[1])?,
            objective: num(f[2])?,
            gap_ref: opt(f[3])?,
            pd_gap: opt(f[4])?,
            iterate_norm: num(f[5])?,
        });
    }
    Ok(record)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProblemKind {
    FusedElasticNet,
    Imaging,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ForwardKind {
    Mask,
    Blur,
    Projection,
}

/// Flat `key = value` run configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub algorithm: Algorithm,
    pub max_iters: usize,
    pub seed: u64,
    pub output: PathBuf,
    pub log_every: usize,
    pub reference_iters_multiplier: usize,
    pub record_time: bool,
    pub pd_gap: bool,
    pub pd_gap_probes: usize,
    pub init_value: f64,
    pub gap_threshold: f64,
    pub tune_grid: GridSpec,
    pub steps: StepOverrides,

    // fused elastic net
    pub data: Option<PathBuf>,
    pub n: usize,
    pub d: usize,
    pub noise: f64,
    pub sparsity: f64,
    pub column_decay: f64,
    pub lipschitz_ratio: Option<f64>,
    pub lambda1: f64,
    pub lambda2: f64,
    /// `inf` selects the non-smoothed problem.
    pub lambda3: f64,
    pub beta: f64,
    pub pair_fraction: f64,
    pub rescale_columns: bool,

    // imaging
    pub height: usize,
    pub width: usize,
    pub forward: ForwardKind,
    pub keep_fraction: f64,
    pub blur_half_width: usize,
    pub blur_radial: bool,
    pub projection_rows: usize,
    pub projection_gain: f64,
    pub mu_g: f64,
    pub rho1: f64,
    pub image: Option<PathBuf>,
}

/// Every recognised key.
pub const CONFIG_KEYS: &[&str] = &[
    "problem",
    "algorithm",
    "max_iters",
    "seed",
    "output",
    "log_every",
    "reference_iters_multiplier",
    "record_time",
    "pd_gap",
    "pd_gap_probes",
    "init_value",
    "gap_threshold",
    "tune_grid",
    "step_gamma",
    "step_tau",
    "step_alpha",
    "step_theta",
    "data",
    "n",
    "d",
    "noise",
    "sparsity",
    "column_decay",
    "lipschitz_ratio",
    "lambda1",
    "lambda2",
    "lambda3",
    "beta",
    "pair_fraction",
    "rescale_columns",
    "height",
    "width",
    "forward",
    "keep_fraction",
    "blur_half_width",
    "blur_radial",
    "projection_rows",
    "projection_gain",
    "mu_g",
    "rho1",
    "image",
];

/// Splits `key = value` lines, dropping `#` comments.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>, IoError> {
    let mut map = BTreeMap::new();
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or_default().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| IoError::Parse {
            source_name: "config".into(),
            line: ln + 1,
            msg: format!("expected key = value, got '{line}'"),
        })?;
        let key = k.trim().to_string();
        if map.insert(key.clone(), v.trim().to_string()).is_some() {
            return Err(IoError::Parse {
                source_name: "config".into(),
                line: ln + 1,
                msg: format!("duplicate key '{key}'"),
            });
        }
    }
    Ok(map)
}

struct Fields<'a>(&'a BTreeMap<String, String>);

impl Fields<'_> {
    fn raw(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }

    fn get<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, IoError>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e: T::Err| IoError::InvalidValue {
                key: key.into(),
                msg: format!("'{v}': {e}"),
            }),
        }
    }

    fn opt<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>, IoError>
    where
        T::Err: std::fmt::Display,
    {
        match self.raw(key) {
            None => Ok(None),
            Some(v) => v.parse().map(Some).map_err(|e: T::Err| IoError::InvalidValue {
                key: key.into(),
                msg: format!("'{v}': {e}"),
            }),
        }
    }

    fn f64(&self, key: &str, default: f64) -> Result<f64, IoError> {
        match self.raw(key) {
            None => Ok(default),
            Some(v) => match v.to_ascii_lowercase().as_str() {
                "inf" | "infinity" => Ok(f64::INFINITY),
                _ => v.parse::<f64>().map_err(|e| IoError::InvalidValue {
                    key: key.into(),
                    msg: format!("'{v}': {e}"),
                }),
            },
        }
    }

    fn opt_f64(&self, key: &str) -> Result<Option<f64>, IoError> {
        self.raw(key).map(|_| self.f64(key, 0.0)).transpose()
    }
}

fn bad(key: &str, msg: impl Into<String>) -> IoError {
    IoError::InvalidValue {
        key: key.into(),
        msg: msg.into(),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, IoError> {
        let map = parse_key_values(text)?;
        let unknown: Vec<String> = map.keys().filter(|k| !CONFIG_KEYS.contains(&k.as_str())).cloned().collect();
        if !unknown.is_empty() {
            return Err(IoError::UnknownKeys(unknown));
        }
        let f = Fields(&map);

        let problem = match f.raw("problem").unwrap_or("fused-elastic-net") {
            "fused-elastic-net" => ProblemKind::FusedElasticNet,
            "imaging" => ProblemKind::Imaging,
            other => return Err(bad("problem", format!("'{other}' (expected fused-elastic-net or imaging)"))),
        };
        let forward = match f.raw("forward").unwrap_or("mask") {
            "mask" => ForwardKind::Mask,
            "blur" => ForwardKind::Blur,
            "projection" => ForwardKind::Projection,
            other => return Err(bad("forward", format!("'{other}' (expected mask, blur or projection)"))),
        };
        let algorithm: Algorithm = f.get("algorithm", Algorithm::AcvGeneral)?;
        let max_iters: usize = f.get("max_iters", 1000)?;
        let log_every: usize = f.get("log_every", if max_iters <= 10_000 { 1 } else { 10 })?;
        if log_every == 0 {
            return Err(bad("log_every", "must be at least 1"));
        }
        let rho1_default = if problem == ProblemKind::Imaging && forward == ForwardKind::Blur {
            100.0
        } else {
            1.0
        };

        let cfg = RunConfig {
            problem,
            algorithm,
            max_iters,
            seed: f.get("seed", 0)?,
            output: f.get("output", PathBuf::from("out"))?,
            log_every,
            reference_iters_multiplier: f.get("reference_iters_multiplier", 10)?,
            record_time: f.get("record_time", true)?,
            pd_gap: f.get("pd_gap", false)?,
            pd_gap_probes: f.get("pd_gap_probes", 8)?,
            init_value: f.f64("init_value", 0.0)?,
            gap_threshold: f.f64("gap_threshold", 1e-6)?,
            tune_grid: f.get("tune_grid", GridSpec::Primal)?,
            steps: StepOverrides {
                gamma: f.opt_f64("step_gamma")?,
                tau: f.opt_f64("step_tau")?,
                alpha: f.opt_f64("step_alpha")?,
                theta: f.opt_f64("step_theta")?,
            },
            data: f.opt("data")?,
            n: f.get("n", 200)?,
            d: f.get("d", 100)?,
            noise: f.f64("noise", 0.01)?,
            sparsity: f.f64("sparsity", 0.1)?,
            column_decay: f.f64("column_decay", 1.0)?,
            lipschitz_ratio: f.opt_f64("lipschitz_ratio")?,
            lambda1: f.f64("lambda1", 0.1)?,
            lambda2: f.f64("lambda2", 0.1)?,
            lambda3: f.f64("lambda3", f64::INFINITY)?,
            beta: f.f64("beta", 0.5)?,
            pair_fraction: f.f64("pair_fraction", 0.1)?,
            rescale_columns: f.get("rescale_columns", true)?,
            height: f.get("height", 32)?,
            width: f.get("width", 32)?,
            forward,
            keep_fraction: f.f64("keep_fraction", 0.25)?,
            blur_half_width: f.get("blur_half_width", 1)?,
            blur_radial: f.get("blur_radial", false)?,
            projection_rows: f.get("projection_rows", 0)?,
            projection_gain: f.f64("projection_gain", 1.0)?,
            mu_g: f.f64("mu_g", 0.0)?,
            rho1: f.f64("rho1", rho1_default)?,
            image: f.opt("image")?,
        };
        cfg.check()?;
        Ok(cfg)
    }

    fn check(&self) -> Result<(), IoError> {
        let positive = [
            ("gap_threshold", self.gap_threshold),
            ("rho1", self.rho1),
            ("keep_fraction", self.keep_fraction),
            ("pair_fraction", self.pair_fraction),
            ("lambda3", self.lambda3),
        ];
        for (k, v) in positive {
            if v.is_nan() || v <= 0.0 {
                return Err(bad(k, format!("must be positive, got {v}")));
            }
        }
        for (k, v) in [
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("mu_g", self.mu_g),
            ("noise", self.noise),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(bad(k, format!("must be finite and non-negative, got {v}")));
            }
        }
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(bad("beta", format!("must lie in [0, 1], got {}", self.beta)));
        }
        if self.keep_fraction > 1.0 || self.pair_fraction > 1.0 {
            return Err(bad("keep_fraction", "fractions must not exceed 1"));
        }
        if self.reference_iters_multiplier == 0 {
            return Err(bad("reference_iters_multiplier", "must be at least 1"));
        }
        Ok(())
    }

    pub fn smoothed(&self) -> bool {
        self.lambda3.is_finite()
    }

    /// Canonical text of every key that affects the problem instance.
    pub fn problem_key(&self) -> String {
        let mut s = String::new();
        let p = |s: &mut String, k: &str, v: &dyn std::fmt::Debug| {
            writeln!(s, "{k}={v:?}").unwrap();
        };
        p(&mut s, "problem", &self.problem);
        p(&mut s, "seed", &self.seed);
        p(&mut s, "init_value", &self.init_value.to_bits());
        match self.problem {
            ProblemKind::FusedElasticNet => {
                p(&mut s, "data", &self.data);
                p(&mut s, "n", &self.n);
                p(&mut s, "d", &self.d);
                for (k, v) in [
                    ("noise", self.noise),
                    ("sparsity", self.sparsity),
                    ("column_decay", self.column_decay),
                    ("lambda1", self.lambda1),
                    ("lambda2", self.lambda2),
                    ("lambda3", self.lambda3),
                    ("beta", self.beta),
                    ("pair_fraction", self.pair_fraction),
                ] {
                    p(&mut s, k, &v.to_bits());
                }
                p(&mut s, "lipschitz_ratio", &self.lipschitz_ratio.map(f64::to_bits));
                p(&mut s, "rescale_columns", &self.rescale_columns);
            }
            ProblemKind::Imaging => {
                p(&mut s, "height", &self.height);
                p(&mut s, "width", &self.width);
                p(&mut s, "forward", &self.forward);
                p(&mut s, "image", &self.image);
                p(&mut s, "blur_half_width", &self.blur_half_width);
                p(&mut s, "blur_radial", &self.blur_radial);
                p(&mut s, "projection_rows", &self.projection_rows);
                for (k, v) in [
                    ("noise", self.noise),
                    ("keep_fraction", self.keep_fraction),
                    ("projection_gain", self.projection_gain),
                    ("lambda1", self.lambda1),
                    ("mu_g", self.mu_g),
                    ("rho1", self.rho1),
                ] {
                    p(&mut s, k, &v.to_bits());
                }
            }
        }
        s
    }
}

pub fn read_config(path: &Path) -> Result<RunConfig, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    RunConfig::parse(&text)
}

/// Whitespace-separated pixel values, row-major.
pub fn read_image(path: &Path, height: usize, width: usize) -> Result<Vec<f64>, IoError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let name = path.display().to_string();
    let mut px = Vec::with_capacity(height * width);
    for (ln, line) in text.lines().enumerate() {
        for tok in line.split_whitespace() {
            let v = tok.parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| IoError::Parse {
                source_name: name.clone(),
                line: ln + 1,
                msg: format!("bad pixel '{tok}'"),
            })?;
            px.push(v);
        }
    }
    if px.len() != height * width {
        return Err(IoError::Parse {
            source_name: name,
            line: 0,
            msg: format!("expected {} pixels, found {}", height * width, px.len()),
        });
    }
    Ok(px)
}
