//! Experiment runner behind the `wavobs` binary: configuration, the four
//! table-producing commands and CSV output.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use wavobs_core::exec::{self, Execution};
use wavobs_core::hum::{self, exact_example};
use wavobs_core::observability::{self, reference_frequency};
use wavobs_core::{assemble, Filter, Formulation, Pipeline, Tolerances};

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

const DEFAULT_T: f64 = 8.0;
const DEFAULT_GAMMA: f64 = 0.8;
const DEFAULT_FILTER_POINTS: usize = 101;
const EXACT_SAMPLES: usize = 800;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{failed} row(s) failed; see the error column of {file}")]
    Numerical { failed: usize, file: String },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numerical { .. } => EXIT_NUMERICAL,
            _ => EXIT_USAGE,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Spectrum,
    Constants,
    Control,
    Filters,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Constants => "constants",
            Command::Control => "control",
            Command::Filters => "filters",
        }
    }
}

/// Keys accepted at the top level of the config file and in each
/// command section; section values win.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Section {
    #[serde(rename = "N")]
    pub n: Option<Vec<usize>>,
    #[serde(rename = "T")]
    pub t: Option<f64>,
    pub gamma: Option<f64>,
    pub pipelines: Option<Vec<String>>,
    pub filters: Option<Vec<String>>,
    pub samples_per_degree: Option<usize>,
    pub points: Option<usize>,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ToleranceOverrides {
    pub newton_step: Option<f64>,
    pub newton_max_iter: Option<usize>,
    pub solve_residual: Option<f64>,
    pub singular_pivot: Option<f64>,
    pub energy_ridge: Option<f64>,
    pub gramian_negative: Option<f64>,
    pub control_residual: Option<f64>,
    pub cg_max_iter: Option<usize>,
}

impl ToleranceOverrides {
    pub fn apply(&self) -> Tolerances {
        let mut t = Tolerances::default();
        macro_rules! set {
            ($($f:ident),*) => { $( if let Some(v) = self.$f { t.$f = v; } )* };
        }
        set!(
            newton_step,
            newton_max_iter,
            solve_residual,
            singular_pivot,
            energy_ridge,
            gramian_negative,
            control_residual,
            cg_max_iter
        );
        t
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    #[serde(rename = "N")]
    pub n: Option<Vec<usize>>,
    #[serde(rename = "T")]
    pub t: Option<f64>,
    pub gamma: Option<f64>,
    pub pipelines: Option<Vec<String>>,
    pub filters: Option<Vec<String>>,
    pub samples_per_degree: Option<usize>,
    pub points: Option<usize>,
    pub spectrum: Option<Section>,
    pub constants: Option<Section>,
    pub control: Option<Section>,
    #[serde(rename = "filter_table")]
    pub filter_table: Option<Section>,
    pub tolerances: Option<ToleranceOverrides>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<ConfigFile, CliError> {
        let text = fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })?;
        ConfigFile::parse(&text)
    }

    pub fn parse(text: &str) -> Result<ConfigFile, CliError> {
        toml::from_str(text).map_err(|e| usage(format!("bad config: {e}")))
    }

    fn section(&self, command: Command) -> Option<&Section> {
        match command {
            Command::Spectrum => self.spectrum.as_ref(),
            Command::Constants => self.constants.as_ref(),
            Command::Control => self.control.as_ref(),
            Command::Filters => self.filter_table.as_ref(),
        }
    }
}

/// Command-line values; each one overrides the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub workers: Option<usize>,
    pub n: Option<Vec<usize>>,
    pub t: Option<f64>,
    pub gamma: Option<f64>,
    pub filters: Vec<String>,
    pub pipelines: Vec<String>,
}

/// Fully resolved settings for one command. Output location and worker
/// count do not affect results and are left out of the hash.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: Command,
    #[serde(rename = "N")]
    pub n: Vec<usize>,
    #[serde(rename = "T")]
    pub t: f64,
    pub gamma: f64,
    pub pipelines: Vec<String>,
    pub filters: Vec<String>,
    pub samples_per_degree: usize,
    pub points: usize,
    pub tolerances: ToleranceOverrides,
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub workers: Option<usize>,
}

fn default_n(command: Command) -> Vec<usize> {
    match command {
        Command::Spectrum => vec![40],
        Command::Constants => vec![16, 32, 64],
        Command::Control => vec![32, 64, 128],
        Command::Filters => vec![],
    }
}

fn default_pipelines(command: Command) -> Vec<String> {
    let list: &[&str] = match command {
        Command::Constants => &[
            "classical",
            "truncated",
            "filter:cesaro",
            "filter:lanczos",
            "filter:raised-cosine",
            "filter:sharpened-raised-cosine",
            "filter:vandeven:4",
            "filter:exponential:4",
            "mixed",
            "nitsche-sym",
            "nitsche-sym:drop",
            "nitsche-nonsym:1",
            "nitsche-nonsym:1:drop",
        ],
        Command::Control => &["classical", "mixed", "nitsche-sym:1", "nitsche-nonsym:1"],
        _ => &[],
    };
    list.iter().map(|s| s.to_string()).collect()
}

fn default_filters() -> Vec<String> {
    ["cesaro", "lanczos", "raised-cosine", "sharpened-raised-cosine", "vandeven:4", "exponential:4"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

impl RunConfig {
    pub fn resolve(command: Command, file: &ConfigFile, flags: &Overrides) -> Result<RunConfig, CliError> {
        let empty = Section::default();
        let sec = file.section(command).unwrap_or(&empty);
        let n = flags
            .n
            .clone()
            .or_else(|| sec.n.clone())
            .or_else(|| file.n.clone())
            .unwrap_or_else(|| default_n(command));
        let t = flags.t.or(sec.t).or(file.t).unwrap_or(DEFAULT_T);
        let gamma = flags.gamma.or(sec.gamma).or(file.gamma).unwrap_or(DEFAULT_GAMMA);
        let filters = if !flags.filters.is_empty() {
            flags.filters.clone()
        } else {
            sec.filters.clone().or_else(|| file.filters.clone()).unwrap_or_default()
        };
        let mut pipelines = if !flags.pipelines.is_empty() {
            flags.pipelines.clone()
        } else if !flags.filters.is_empty() {
            Vec::new()
        } else {
            sec.pipelines
                .clone()
                .or_else(|| file.pipelines.clone())
                .unwrap_or_else(|| default_pipelines(command))
        };
        let filters = match command {
            Command::Filters if filters.is_empty() => default_filters(),
            Command::Filters => filters,
            _ => {
                // filters on a sweep become filtered-observation pipelines
                pipelines.extend(filters.iter().map(|f| format!("filter:{f}")));
                Vec::new()
            }
        };
        let cfg = RunConfig {
            command,
            n,
            t,
            gamma,
            pipelines,
            filters,
            samples_per_degree: sec
                .samples_per_degree
                .or(file.samples_per_degree)
                .unwrap_or(hum::SAMPLES_PER_DEGREE),
            points: sec.points.or(file.points).unwrap_or(DEFAULT_FILTER_POINTS),
            tolerances: file.tolerances.clone().unwrap_or_default(),
            out: flags.out.clone().or_else(|| file.out.clone()).unwrap_or_else(|| PathBuf::from(".")),
            workers: flags.workers.or(file.workers),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.command != Command::Filters {
            if self.n.is_empty() {
                return Err(usage("the N list is empty"));
            }
            if self.n.windows(2).any(|p| p[0] >= p[1]) {
                return Err(usage(format!("the N list must be strictly ascending, got {:?}", self.n)));
            }
            if let Some(&n) = self.n.iter().find(|&&n| n < wavobs_core::assembly::MIN_DEGREE) {
                return Err(usage(format!("N must be >= 4, got {n}")));
            }
        }
        if !(self.t > 0.0) || !self.t.is_finite() {
            return Err(usage(format!("T must be finite and > 0, got {}", self.t)));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(usage(format!("gamma must be finite and > 0, got {}", self.gamma)));
        }
        if matches!(self.command, Command::Constants | Command::Control) && self.pipelines.is_empty() {
            return Err(usage("no pipelines selected"));
        }
        if self.samples_per_degree == 0 || self.samples_per_degree % 2 == 1 {
            return Err(usage("samples_per_degree must be even and > 0"));
        }
        if self.points < 2 {
            return Err(usage("points must be >= 2"));
        }
        if self.workers == Some(0) {
            return Err(usage("workers must be >= 1"));
        }
        self.parsed_pipelines()?;
        self.parsed_filters()?;
        Ok(())
    }

    pub fn parsed_pipelines(&self) -> Result<Vec<Pipeline>, CliError> {
        self.pipelines
            .iter()
            .map(|p| Pipeline::parse_with_gamma(p, Some(self.gamma)).map_err(|e| usage(e.to_string())))
            .collect()
    }

    pub fn parsed_filters(&self) -> Result<Vec<Filter>, CliError> {
        self.filters
            .iter()
            .map(|f| f.parse::<Filter>().map_err(|e| usage(e.to_string())))
            .collect()
    }

    pub fn tolerances(&self) -> Tolerances {
        self.tolerances.apply()
    }

    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serialises");
        Sha256::digest(canonical.as_bytes()).iter().fold(String::new(), |mut s, b| {
            let _ = write!(s, "{b:02x}");
            s
        })
    }

    fn metadata_line(&self) -> String {
        let t = self.tolerances();
        format!(
            "# wavobs {} config_sha256={} tolerances=newton_step:{:e};solve_residual:{:e};singular_pivot:{:e};energy_ridge:{:e};gramian_negative:{:e};control_residual:{:e};cg_max_iter:{}",
            self.command.name(),
            self.hash(),
            t.newton_step,
            t.solve_residual,
            t.singular_pivot,
            t.energy_ridge,
            t.gramian_negative,
            t.control_residual,
            t.cg_max_iter,
        )
    }
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// A CSV table held in memory until every row is known.
#[derive(Debug, Clone)]
pub struct Table {
    pub name: &'static str,
    pub header: &'static str,
    pub rows: Vec<String>,
}

impl Table {
    fn render(&self, meta: &str) -> String {
        let mut s = String::with_capacity(64 * (self.rows.len() + 2));
        s.push_str(meta);
        s.push('\n');
        s.push_str(self.header);
        s.push('\n');
        for r in &self.rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub tables: Vec<Table>,
    pub failed_rows: usize,
}

fn csv_text(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn execution(cfg: &RunConfig) -> Execution {
    match cfg.workers {
        Some(1) => Execution::Sequential,
        _ => Execution::default(),
    }
}

pub fn cmd_spectrum(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let reports = exec::map(execution(cfg), &cfg.n, |&n| {
        assemble(Formulation::Classical, n).and_then(|s| observability::spectrum(&s))
    });
    let mut rows = Vec::new();
    let mut failed = 0;
    for (&n, rep) in cfg.n.iter().zip(reports) {
        match rep {
            Ok(rep) => {
                for k in 1..=rep.lambdas.len() {
                    rows.push(format!(
                        "{n},{k},{},{},{},{}",
                        num(rep.lambdas[k - 1].sqrt()),
                        num(reference_frequency(k)),
                        num(rep.sqrt_gaps[k - 1]),
                        num(rep.deltas[k - 1]),
                    ));
                }
            }
            Err(e) => {
                failed += 1;
                eprintln!("spectrum N={n}: {e}");
            }
        }
    }
    Ok(Outcome {
        tables: vec![Table { name: "spectrum.csv", header: "N,k,sqrt_lambda,k_pi,gap,delta", rows }],
        failed_rows: failed,
    })
}

fn jobs(cfg: &RunConfig) -> Result<Vec<(usize, Pipeline, usize)>, CliError> {
    let pipelines = cfg.parsed_pipelines()?;
    Ok(pipelines
        .into_iter()
        .enumerate()
        .flat_map(|(i, p)| cfg.n.iter().map(move |&n| (i, p, n)))
        .collect())
}

pub fn cmd_constants(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let tol = cfg.tolerances();
    let mut jobs = jobs(cfg)?;
    jobs.sort_by_key(|&(i, _, n)| (i, n));
    let results = exec::map(execution(cfg), &jobs, |(_, p, n)| p.constants(*n, cfg.t, &tol));
    let mut rows = Vec::with_capacity(jobs.len());
    let mut failed = 0;
    for ((_, p, n), r) in jobs.iter().zip(results) {
        let name = csv_text(&p.to_string());
        rows.push(match r {
            Ok(g) => format!(
                "{name},{n},{},{},{},{},",
                num(cfg.t),
                num(g.lower),
                num(g.upper),
                num(g.check_residual)
            ),
            Err(e) => {
                failed += 1;
                format!("{name},{n},{},,,,{}", num(cfg.t), csv_text(&e.to_string()))
            }
        });
    }
    Ok(Outcome {
        tables: vec![Table {
            name: "constants.csv",
            header: "pipeline,N,T,c_NT,C_NT,gramian_check_residual,error",
            rows,
        }],
        failed_rows: failed,
    })
}

pub fn cmd_control(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let tol = cfg.tolerances();
    let exact = exact_example();
    if cfg.t != exact.t_final {
        return Err(usage(format!("the control benchmark is defined for T = {}, got {}", exact.t_final, cfg.t)));
    }
    let problem = exact.problem();
    let mut jobs = jobs(cfg)?;
    jobs.sort_by_key(|&(i, _, n)| (i, n));
    let results = exec::map(execution(cfg), &jobs, |(_, p, n)| {
        let (prep, g, r) = p.control(*n, &problem, cfg.samples_per_degree * n, &tol)?;
        let e = hum::error_norms(&r, &prep.system, &exact)?;
        Ok::<_, wavobs_core::Error>((g, r, e))
    });

    let v_norm = (2.0f64 / 3.0).sqrt();
    let u1_norm = (8.0f64 / 3.0).sqrt() / 4.0;
    let mut controls = Vec::new();
    let mut errors = Vec::new();
    let mut failed = 0;
    for j in 0..=EXACT_SAMPLES {
        let t = cfg.t * j as f64 / EXACT_SAMPLES as f64;
        controls.push(format!("exact,0,{},{}", num(t), num(exact.v(t))));
    }
    for ((_, p, n), res) in jobs.iter().zip(results) {
        let name = csv_text(&p.to_string());
        match res {
            Ok((g, r, e)) => {
                for (t, v) in r.times.iter().zip(&r.values) {
                    controls.push(format!("{name},{n},{},{}", num(*t), num(*v)));
                }
                errors.push(format!(
                    "{name},{n},{},{},{},{},{},{},{},{},{},",
                    num(e.e_u0),
                    num(e.e_u1),
                    num(e.e_v),
                    num(e.e_u1 / u1_norm),
                    num(e.e_v / v_norm),
                    num(g.lower),
                    r.solver,
                    num(r.residual),
                    num(r.optimality_gap),
                ));
            }
            Err(e) => {
                failed += 1;
                errors.push(format!("{name},{n},,,,,,,,,,{}", csv_text(&e.to_string())));
            }
        }
    }
    Ok(Outcome {
        tables: vec![
            Table { name: "controls.csv", header: "pipeline,N,t,vN", rows: controls },
            Table {
                name: "errors.csv",
                header: "pipeline,N,e_u0,e_u1,e_v,e_u1_rel,e_v_rel,c_NT,solver,residual,optimality_gap,error",
                rows: errors,
            },
        ],
        failed_rows: failed,
    })
}

pub fn cmd_filters(cfg: &RunConfig) -> Result<Outcome, CliError> {
    let filters = cfg.parsed_filters()?;
    let mut rows = Vec::new();
    let mut failed = 0;
    for f in &filters {
        let name = csv_text(&f.to_string());
        for i in 0..cfg.points {
            let eta = i as f64 / (cfg.points - 1) as f64;
            match f.sigma(eta) {
                Ok(s) => rows.push(format!("{name},{},{}", num(eta), num(s))),
                Err(e) => {
                    failed += 1;
                    eprintln!("{name} at {eta}: {e}");
                }
            }
        }
    }
    Ok(Outcome {
        tables: vec![Table { name: "filters.csv", header: "filter,eta,sigma", rows }],
        failed_rows: failed,
    })
}

pub fn run_command(cfg: &RunConfig) -> Result<Outcome, CliError> {
    match cfg.command {
        Command::Spectrum => cmd_spectrum(cfg),
        Command::Constants => cmd_constants(cfg),
        Command::Control => cmd_control(cfg),
        Command::Filters => cmd_filters(cfg),
    }
}

/// Write every table under `cfg.out` and return the paths written.
pub fn write_outcome(cfg: &RunConfig, outcome: &Outcome) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(&cfg.out).map_err(|source| CliError::Io { path: cfg.out.clone(), source })?;
    let meta = cfg.metadata_line();
    let mut paths = Vec::new();
    for t in &outcome.tables {
        let path = cfg.out.join(t.name);
        fs::write(&path, t.render(&meta)).map_err(|source| CliError::Io { path: path.clone(), source })?;
        paths.push(path);
    }
    Ok(paths)
}

/// Run, write, and turn failed rows into an error after the files exist.
pub fn execute(cfg: &RunConfig) -> Result<Vec<PathBuf>, CliError> {
    let outcome = run_with_workers(cfg)?;
    let paths = write_outcome(cfg, &outcome)?;
    if outcome.failed_rows > 0 {
        let file = outcome.tables.last().map(|t| t.name).unwrap_or_default();
        return Err(CliError::Numerical { failed: outcome.failed_rows, file: file.into() });
    }
    Ok(paths)
}

#[cfg(feature = "parallel")]
fn run_with_workers(cfg: &RunConfig) -> Result<Outcome, CliError> {
    match cfg.workers {
        Some(k) if k > 1 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| usage(format!("cannot start {k} workers: {e}")))?;
            pool.install(|| run_command(cfg))
        }
        _ => run_command(cfg),
    }
}

#[cfg(not(feature = "parallel"))]
fn run_with_workers(cfg: &RunConfig) -> Result<Outcome, CliError> {
    run_command(cfg)
}
