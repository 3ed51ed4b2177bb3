//! Configuration, snapshots, output files and the experiment driver.
//!
//! Configs are TOML documents with the sections `[grid]`, `[initial_data]`,
//! `[scheme]`, `[experiment]` and `[tolerances]` plus the top-level keys
//! `seed` and `output_dir`. Every key is optional except the experiment
//! parameters the chosen experiment needs.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::functionals::DiagnosticsRow;
use crate::grid::{Field, GridSpec, SpectralPlan};
use crate::ops::WeightOrder;
use crate::solver::{evolve, perturbation, InitialData, SchemeKind, StepScheme};
use crate::verification::{
    apriori_grad_estimate, apriori_report, conservation_report, contraction_experiment,
    contraction_report, energy_decomposition_audit, energy_report, h_defect_decay, halving_schemes,
    identity_suite, lemma_bound_suite, mollifier_grid, mollifier_report, mollifier_smallness,
    AuditReport, BalanceTolerances, ConservationTolerances, SampleFamily, Trajectory,
};
use crate::{GridError, SolverError, VerifyError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    At { line: usize, message: String },
    #[error("{0}")]
    Invalid(String),
}

impl ConfigError {
    fn at(line: Option<usize>, message: String) -> Self {
        match line {
            Some(line) => ConfigError::At { line, message },
            None => ConfigError::Invalid(message),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(rename = "L", default = "default_l")]
    pub half_width: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig {
            n: default_n(),
            half_width: default_l(),
        }
    }
}

fn default_n() -> usize {
    32
}
fn default_l() -> f64 {
    8.0
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeConfig {
    #[serde(default = "default_kind")]
    pub kind: SchemeKind,
    #[serde(default = "default_cfl")]
    pub cfl_safety: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_dt: Option<f64>,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            kind: default_kind(),
            cfl_safety: default_cfl(),
            max_dt: None,
        }
    }
}

fn default_kind() -> SchemeKind {
    SchemeKind::ExplicitRk2
}
fn default_cfl() -> f64 {
    0.25
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Simulate,
    Identities,
    EnergyAudit,
    Stability,
    Apriori,
    Mollifier,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Simulate => "simulate",
            ExperimentKind::Identities => "identities",
            ExperimentKind::EnergyAudit => "energy_audit",
            ExperimentKind::Stability => "stability",
            ExperimentKind::Apriori => "apriori",
            ExperimentKind::Mollifier => "mollifier",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ExperimentKind>,
    #[serde(rename = "T", default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_list: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_list: Option<Vec<f64>>,
    #[serde(default = "default_k0")]
    pub k0: f64,
    #[serde(default = "one")]
    pub sample_every: usize,
    /// Step halvings in refinement studies.
    #[serde(default = "two")]
    pub halvings: usize,
    /// Random band-limited samples in the identity suite.
    #[serde(default = "ten")]
    pub samples: usize,
    /// Rerun the identity suite on the doubled grid.
    #[serde(default = "yes")]
    pub refine: bool,
    /// Trials per family for the inequality suite; 0 skips it.
    #[serde(default)]
    pub lemma_trials: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            kind: None,
            t_end: None,
            eps_list: None,
            delta_list: None,
            k0: default_k0(),
            sample_every: 1,
            halvings: 2,
            samples: 10,
            refine: true,
            lemma_trials: 0,
        }
    }
}

fn default_k0() -> f64 {
    5.0
}
fn one() -> usize {
    1
}
fn two() -> usize {
    2
}
fn ten() -> usize {
    10
}
fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default = "conservation_defaults")]
    pub conservation: ConservationTolerances,
    #[serde(default = "balance_defaults")]
    pub balance: BalanceTolerances,
}

fn conservation_defaults() -> ConservationTolerances {
    ConservationTolerances::default()
}
fn balance_defaults() -> BalanceTolerances {
    BalanceTolerances::default()
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            conservation: conservation_defaults(),
            balance: balance_defaults(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub initial_data: InitialData,
    #[serde(default)]
    pub scheme: SchemeConfig,
    #[serde(default)]
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            grid: GridConfig::default(),
            initial_data: InitialData::default(),
            scheme: SchemeConfig::default(),
            experiment: ExperimentConfig::default(),
            seed: 0,
            output_dir: default_out(),
            tolerances: Tolerances::default(),
        }
    }
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub enum Experiment {
    Simulate { t_end: f64, sample_every: usize },
    Identities { samples: usize, refine: bool, lemma_trials: usize },
    EnergyAudit { t_end: f64, eps: f64, halvings: usize },
    Stability { t_end: f64, eps_list: Vec<f64> },
    Apriori { t_end: f64, k: WeightOrder, halvings: usize },
    Mollifier { t_end: f64, k0: WeightOrder, deltas: Vec<f64> },
}

/// 1-based line of the first byte of `span`.
fn line_of_offset(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// Line of `key = ...` inside `[section]`, or of the section header when
/// the key is absent.
fn line_of_key(text: &str, section: &str, key: &str) -> Option<usize> {
    let mut current = String::new();
    let mut header = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            current = name.trim().to_string();
            if current == section {
                header = Some(i + 1);
            }
            continue;
        }
        if current == section {
            if let Some((k, _)) = line.split_once('=') {
                if k.trim().trim_matches('"') == key {
                    return Some(i + 1);
                }
            }
        }
    }
    header
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> Result<SimConfig, ConfigError> {
    let config: SimConfig = toml::from_str(text).map_err(|e| {
        let line = e.span().map(|s| line_of_offset(text, s.start));
        ConfigError::at(line, e.message().to_string())
    })?;
    config.validate(Some(text))?;
    Ok(config)
}

impl SimConfig {
    pub fn grid_spec(&self) -> Result<GridSpec, GridError> {
        GridSpec::new(self.grid.n, self.grid.half_width)
    }

    pub fn step_scheme(&self) -> Result<StepScheme, SolverError> {
        let mut s = StepScheme::new(self.scheme.kind, self.scheme.cfl_safety)?;
        s.max_dt = self.scheme.max_dt;
        s.undershoot_tol = self.tolerances.conservation.undershoot;
        Ok(s)
    }

    /// Checks every field; `text` supplies line numbers.
    pub fn validate(&self, text: Option<&str>) -> Result<(), ConfigError> {
        let line = |section: &str, key: &str| text.and_then(|t| line_of_key(t, section, key));
        if let Err(e) = self.grid_spec() {
            let key = if matches!(e, GridError::BadHalfWidth(_)) { "L" } else { "n" };
            return Err(ConfigError::at(line("grid", key), e.to_string()));
        }
        if let Err(e) = self.step_scheme() {
            return Err(ConfigError::at(line("scheme", "cfl_safety"), e.to_string()));
        }
        if let Some(dt) = self.scheme.max_dt {
            if !(dt > 0.0) {
                return Err(ConfigError::at(line("scheme", "max_dt"), format!("max_dt must be positive (got {dt})")));
            }
        }
        if self.experiment.kind.is_some() {
            self.experiment_with(text)?;
        }
        Ok(())
    }

    /// Non-fatal notes about the config.
    pub fn warnings(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.experiment.k0 < 5.0 {
            out.push(format!("k0 = {} is below 5, outside the range the estimates cover", self.experiment.k0));
        }
        if self.experiment.kind == Some(ExperimentKind::Apriori) && self.experiment.k0 <= 18.0 / 5.0 {
            out.push(format!("k = {} does not exceed 18/5; the estimate is computed anyway", self.experiment.k0));
        }
        out
    }

    /// Sets the experiment kind, rejecting a conflicting declared kind.
    pub fn with_kind(mut self, kind: ExperimentKind) -> Result<Self, ConfigError> {
        if let Some(k) = self.experiment.kind {
            if k != kind {
                return Err(ConfigError::Invalid(format!(
                    "config declares experiment `{}` but `{}` was requested",
                    k.name(),
                    kind.name()
                )));
            }
        }
        self.experiment.kind = Some(kind);
        self.experiment_with(None)?;
        Ok(self)
    }

    /// The experiment the config describes, with all parameters resolved.
    pub fn experiment(&self) -> Result<Experiment, ConfigError> {
        self.experiment_with(None)
    }

    fn experiment_with(&self, text: Option<&str>) -> Result<Experiment, ConfigError> {
        let e = &self.experiment;
        let kind = e.kind.unwrap_or(ExperimentKind::Simulate);
        let line = |key: &str| text.and_then(|t| line_of_key(t, "experiment", key));
        let missing = |key: &str| {
            ConfigError::at(
                line(key),
                format!("experiment `{}` requires `{key}`", kind.name()),
            )
        };
        let t_end = || -> Result<f64, ConfigError> {
            let t = e.t_end.ok_or_else(|| missing("T"))?;
            if !(t > 0.0 && t.is_finite()) {
                return Err(ConfigError::at(line("T"), format!("T must be positive (got {t})")));
            }
            Ok(t)
        };
        let order = |k: f64| {
            WeightOrder::new(k).map_err(|err| ConfigError::at(line("k0"), err.to_string()))
        };
        let decreasing = |key: &str, list: &[f64], allow_zero: bool| -> Result<(), ConfigError> {
            let bad_value = list.iter().any(|x| !(x.is_finite() && (*x > 0.0 || allow_zero && *x == 0.0)));
            if list.is_empty() || bad_value || list.windows(2).any(|p| p[1] >= p[0]) {
                return Err(ConfigError::at(
                    line(key),
                    format!("`{key}` must be a non-empty, strictly decreasing list of admissible values"),
                ));
            }
            Ok(())
        };
        Ok(match kind {
            ExperimentKind::Simulate => Experiment::Simulate {
                t_end: t_end()?,
                sample_every: e.sample_every.max(1),
            },
            ExperimentKind::Identities => {
                if e.samples == 0 {
                    return Err(ConfigError::at(line("samples"), "identity suite needs at least one sample".into()));
                }
                if e.lemma_trials != 0 && e.lemma_trials < 30 {
                    return Err(ConfigError::at(line("lemma_trials"), "lemma_trials must be 0 or at least 30".into()));
                }
                Experiment::Identities {
                    samples: e.samples,
                    refine: e.refine,
                    lemma_trials: e.lemma_trials,
                }
            }
            ExperimentKind::EnergyAudit => {
                let eps = match &e.eps_list {
                    Some(list) => {
                        decreasing("eps_list", list, false)?;
                        list[0]
                    }
                    None => 1e-3,
                };
                Experiment::EnergyAudit {
                    t_end: t_end()?,
                    eps,
                    halvings: e.halvings,
                }
            }
            ExperimentKind::Stability => {
                let list = e.eps_list.clone().ok_or_else(|| missing("eps_list"))?;
                decreasing("eps_list", &list, true)?;
                Experiment::Stability {
                    t_end: t_end()?,
                    eps_list: list,
                }
            }
            ExperimentKind::Apriori => Experiment::Apriori {
                t_end: t_end()?,
                k: order(e.k0)?,
                halvings: e.halvings,
            },
            ExperimentKind::Mollifier => {
                let list = e.delta_list.clone().ok_or_else(|| missing("delta_list"))?;
                decreasing("delta_list", &list, false)?;
                Experiment::Mollifier {
                    t_end: t_end()?,
                    k0: order(e.k0)?,
                    deltas: list,
                }
            }
        })
    }
}

/// Magic bytes of the snapshot format.
pub const SNAPSHOT_MAGIC: [u8; 4] = *b"LCF1";
const HEADER_LEN: usize = 4 + 4 + 8 + 8;

#[derive(Debug, Error)]
pub enum SnapshotError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad magic {0:?}, expected LCF1")]
    BadMagic([u8; 4]),
    #[error("truncated snapshot: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("snapshot has {extra} trailing bytes")]
    Trailing { extra: usize },
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error("snapshot grid (n = {found_n}, L = {found_l}) does not match the config (n = {n}, L = {l})")]
    Mismatch { n: usize, l: f64, found_n: usize, found_l: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub time: f64,
    pub field: Field,
}

/// Little-endian LCF1 encoding: magic, `u32 n`, `f64 L`, `f64 t`, then the
/// `n^3` values in grid order.
pub fn encode_snapshot(field: &Field, time: f64) -> Vec<u8> {
    let g = field.grid();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * g.len());
    out.extend_from_slice(&SNAPSHOT_MAGIC);
    out.extend_from_slice(&(g.n() as u32).to_le_bytes());
    out.extend_from_slice(&g.half_width().to_le_bytes());
    out.extend_from_slice(&time.to_le_bytes());
    for v in field.values() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_snapshot(bytes: &[u8]) -> Result<Snapshot, SnapshotError> {
    if bytes.len() < HEADER_LEN {
        if bytes.len() >= 4 && bytes[..4] != SNAPSHOT_MAGIC {
            return Err(SnapshotError::BadMagic(bytes[..4].try_into().expect("4 bytes")));
        }
        return Err(SnapshotError::Truncated {
            expected: HEADER_LEN,
            found: bytes.len(),
        });
    }
    let magic: [u8; 4] = bytes[..4].try_into().expect("4 bytes");
    if magic != SNAPSHOT_MAGIC {
        return Err(SnapshotError::BadMagic(magic));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().expect("4 bytes")) as usize;
    let l = f64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes"));
    let time = f64::from_le_bytes(bytes[16..24].try_into().expect("8 bytes"));
    let grid = GridSpec::new(n, l)?;
    let expected = HEADER_LEN + 8 * grid.len();
    if bytes.len() < expected {
        return Err(SnapshotError::Truncated {
            expected,
            found: bytes.len(),
        });
    }
    if bytes.len() > expected {
        return Err(SnapshotError::Trailing {
            extra: bytes.len() - expected,
        });
    }
    let values = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok(Snapshot {
        time,
        field: Field::from_values(grid, values)?,
    })
}

pub fn write_snapshot(path: &Path, field: &Field, time: f64) -> Result<(), SnapshotError> {
    write_atomic(path, &encode_snapshot(field, time))?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot, SnapshotError> {
    decode_snapshot(&fs::read(path)?)
}

/// Reads a snapshot and checks it lives on `grid`.
pub fn read_snapshot_on(path: &Path, grid: &GridSpec) -> Result<Snapshot, SnapshotError> {
    let s = read_snapshot(path)?;
    let g = s.field.grid();
    if g.n() != grid.n() || g.half_width() != grid.half_width() {
        return Err(SnapshotError::Mismatch {
            n: grid.n(),
            l: grid.half_width(),
            found_n: g.n(),
            found_l: g.half_width(),
        });
    }
    Ok(s)
}

/// Writes through a temporary file in the same directory and renames it
/// into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path
        .file_name()
        .ok_or_else(|| std::io::Error::new(std::io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = dir.join(format!(".{}.tmp", name.to_string_lossy()));
    {
        let mut file = fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    fs::rename(&tmp, path)
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Snapshot(#[from] SnapshotError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
}

impl From<SolverError> for RunError {
    fn from(e: SolverError) -> Self {
        RunError::Verify(e.into())
    }
}

impl From<GridError> for RunError {
    fn from(e: GridError) -> Self {
        RunError::Verify(e.into())
    }
}

impl RunError {
    /// 2 for a diverged run, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Verify(VerifyError::Solver(
                SolverError::NonFinite { .. } | SolverError::Undershoot { .. } | SolverError::StepUnderflow { .. },
            )) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub report: AuditReport,
    /// Files written, in order.
    pub files: Vec<PathBuf>,
}

impl RunOutcome {
    /// 0 when every audit case passed, 3 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.report.passed() {
            0
        } else {
            3
        }
    }
}

/// Exit status of a finished run.
pub fn exit_code(result: &Result<RunOutcome, RunError>) -> i32 {
    match result {
        Ok(o) => o.exit_code(),
        Err(e) => e.exit_code(),
    }
}

struct Outputs {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self, RunError> {
        fs::create_dir_all(dir).map_err(|source| RunError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        Ok(Outputs {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), RunError> {
        let path = self.dir.join(name);
        write_atomic(&path, bytes).map_err(|source| RunError::Io {
            path: path.clone(),
            source,
        })?;
        self.files.push(path);
        Ok(())
    }
}

fn csv(header: &str, rows: impl IntoIterator<Item = String>) -> String {
    let mut out = String::from(header);
    out.push('\n');
    for r in rows {
        out.push_str(&r);
        out.push('\n');
    }
    out
}

fn sci(values: &[f64]) -> String {
    values.iter().map(|v| format!("{v:.16e}")).collect::<Vec<_>>().join(",")
}

/// Runs the configured experiment and writes its outputs to
/// `config.output_dir`.
pub fn run(config: &SimConfig) -> Result<RunOutcome, RunError> {
    let start = Instant::now();
    config.validate(None)?;
    let experiment = config.experiment()?;
    let grid = config.grid_spec()?;
    let scheme = config.step_scheme()?;
    let plan = SpectralPlan::new(grid)?;
    let f0 = config.initial_data.build(grid, config.seed);
    let mut out = Outputs::new(&config.output_dir)?;
    let tol = &config.tolerances;
    let report = match &experiment {
        Experiment::Simulate { t_end, sample_every } => {
            let k0 = WeightOrder::new(config.experiment.k0).map_err(VerifyError::from)?;
            let mut rows = Vec::new();
            let mut worst = f64::INFINITY;
            let last = evolve(&plan, f0, *t_end, &scheme, |s| {
                worst = worst.min(s.undershoot_ratio());
                if s.step_count % sample_every == 0 || s.time >= *t_end {
                    rows.push(DiagnosticsRow::compute(&plan, &s.f, s.time, k0)?);
                }
                Ok(())
            })?;
            out.write(
                "diagnostics.csv",
                csv(DiagnosticsRow::HEADER, rows.iter().map(|r| r.to_csv())).as_bytes(),
            )?;
            out.write("final.lcf", &encode_snapshot(&last.f, last.time))?;
            conservation_report(&grid, &rows, worst, &tol.conservation)?
        }
        Experiment::Identities {
            samples,
            refine,
            lemma_trials,
        } => {
            let mut fields: Vec<Field> = (0..*samples as u64)
                .map(|i| {
                    InitialData::BandLimited { amplitude: 0.3, max_mode: 4 }.build(grid, config.seed.wrapping_add(i))
                })
                .collect();
            fields.push(InitialData::Anisotropic { temperatures: [1.6, 1.4, 1.2] }.build(grid, 0));
            fields.push(InitialData::TwoBump { shift: 1.5, temperature: 1.0 }.build(grid, 0));
            let fine = if *refine {
                Some(SpectralPlan::new(GridSpec::new(2 * grid.n(), grid.half_width())?)?)
            } else {
                None
            };
            let mut report = identity_suite(&plan, &fields, fine.as_ref())?;
            if *lemma_trials > 0 {
                for family in SampleFamily::ALL {
                    let r = lemma_bound_suite(&plan, family, *lemma_trials, config.seed)?;
                    for mut c in r.cases {
                        c.id = format!("{}/{}", family.name(), c.id);
                        report.push(c);
                    }
                }
            }
            report
        }
        Experiment::EnergyAudit { t_end, eps, halvings } => {
            let g0 = f0.axpy(*eps, &perturbation(grid, config.seed, 4));
            let schemes = halving_schemes(&plan, &f0, *t_end, &scheme, *halvings)?;
            let audits = schemes
                .iter()
                .map(|s| energy_decomposition_audit(&plan, f0.clone(), g0.clone(), *t_end, s))
                .collect::<Result<Vec<_>, _>>()?;
            out.write("ledger.csv", audits[0].ledger.to_csv().as_bytes())?;
            energy_report(&grid, &audits, &tol.balance)
        }
        Experiment::Stability { t_end, eps_list } => {
            let r = contraction_experiment(&plan, &f0, eps_list, *t_end, &scheme, config.seed)?;
            let rows = r
                .eps
                .iter()
                .zip(&r.histories)
                .flat_map(|(e, h)| h.iter().map(move |(t, m)| sci(&[*e, *t, *m])));
            out.write("contraction.csv", csv("eps,t,m_diff_norm", rows).as_bytes())?;
            contraction_report(&grid, &r)
        }
        Experiment::Apriori { t_end, k, halvings } => {
            let schemes = halving_schemes(&plan, &f0, *t_end, &scheme, *halvings)?;
            let audits = schemes
                .iter()
                .map(|s| apriori_grad_estimate(&plan, f0.clone(), *t_end, *k, s))
                .collect::<Result<Vec<_>, _>>()?;
            out.write("ledger.csv", audits[0].to_csv().as_bytes())?;
            apriori_report(&grid, &audits, &tol.balance)
        }
        Experiment::Mollifier { t_end, k0, deltas } => {
            let smallest = deltas.last().copied().expect("validated non-empty");
            let fine = mollifier_grid(&grid, smallest)?;
            let traj = Trajectory::record(&plan, f0, *t_end, &scheme)?.resample(fine)?;
            let table = mollifier_smallness(&traj, *k0, deltas)?;
            let defect = h_defect_decay(&traj, deltas)?;
            let rows = table
                .rows
                .iter()
                .zip(&defect.rows)
                .map(|(r, d)| sci(&[r.delta, r.error_sup, r.bound_sup, d.integral]));
            out.write(
                "mollifier.csv",
                csv("delta,error_sup,bound_sup,defect_integral", rows).as_bytes(),
            )?;
            mollifier_report(&fine, &table, &defect)
        }
    };
    out.write("audit.json", report.to_json().as_bytes())?;
    let manifest = manifest(config, &report, &out.files, start.elapsed().as_secs_f64());
    out.write("manifest.json", manifest.as_bytes())?;
    Ok(RunOutcome {
        report,
        files: out.files,
    })
}

fn manifest(config: &SimConfig, report: &AuditReport, files: &[PathBuf], wall: f64) -> String {
    let timestamp = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let outputs: Vec<String> = files
        .iter()
        .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
        .collect();
    let value = serde_json::json!({
        "config": config,
        "versions": { "landau-spectral": env!("CARGO_PKG_VERSION") },
        "seed": config.seed,
        "threads": rayon::current_num_threads(),
        "wall_time_s": wall,
        "timestamp": timestamp,
        "passed": report.passed(),
        "outputs": outputs,
    });
    let mut s = serde_json::to_string_pretty(&value).expect("manifest is plain data");
    let _ = writeln!(s);
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c, SimConfig::default());
        assert_eq!(c.grid.n, 32);
        assert_eq!(c.grid.half_width, 8.0);
        assert_eq!(c.scheme.cfl_safety, 0.25);
        assert_eq!(c.experiment.k0, 5.0);
        assert_eq!(c.seed, 0);
    }

    #[test]
    fn odd_n_reports_its_line() {
        let err = parse_config("seed = 1\n\n[grid]\nn = 17\n").unwrap_err();
        assert_eq!(
            err,
            ConfigError::At {
                line: 4,
                message: "n must be even (got 17)".into()
            }
        );
        assert!(err.to_string().contains("n must be even"));
    }

    #[test]
    fn unknown_key_and_type_mismatch_report_lines() {
        let err = parse_config("[grid]\nn = 16\nwidth = 3.0\n").unwrap_err();
        assert!(matches!(err, ConfigError::At { line: 3, .. }), "{err}");
        let err = parse_config("[scheme]\n\ncfl_safety = \"big\"\n").unwrap_err();
        assert!(matches!(err, ConfigError::At { line: 3, .. }), "{err}");
    }

    #[test]
    fn missing_required_parameter_is_reported() {
        let err = parse_config("[experiment]\nkind = \"stability\"\nT = 0.25\n").unwrap_err();
        assert!(matches!(err, ConfigError::At { line: 1, .. }), "{err}");
        assert!(err.to_string().contains("eps_list"));
        let err = SimConfig::default().with_kind(ExperimentKind::Apriori).unwrap_err();
        assert!(err.to_string().contains("`T`"));
    }

    #[test]
    fn stability_config_resolves_to_contraction_call() {
        let c = parse_config("[experiment]\nkind = \"stability\"\nT = 0.25\neps_list = [1e-3, 5e-4]\n").unwrap();
        assert_eq!(
            c.experiment().unwrap(),
            Experiment::Stability {
                t_end: 0.25,
                eps_list: vec![1e-3, 5e-4]
            }
        );
        assert!(c.clone().with_kind(ExperimentKind::Stability).is_ok());
        assert!(c.with_kind(ExperimentKind::Simulate).is_err());
    }

    #[test]
    fn tolerance_overrides_and_initial_data_parse() {
        let text = "[initial_data]\nkind = \"two_bump\"\nshift = 2.0\n\n[tolerances.conservation]\nmass = 1e-9\n";
        let c = parse_config(text).unwrap();
        assert_eq!(c.tolerances.conservation.mass, 1e-9);
        assert_eq!(c.tolerances.conservation.momentum, 1e-8);
        assert_eq!(c.initial_data, InitialData::TwoBump { shift: 2.0, temperature: 1.0 });
        assert!(parse_config("[tolerances.conservation]\nmas = 1.0\n").is_err());
    }

    #[test]
    fn low_k0_warns() {
        let c = parse_config("[experiment]\nk0 = 3.0\n").unwrap();
        assert_eq!(c.warnings().len(), 1);
    }

    #[test]
    fn snapshot_round_trips_bitwise() {
        let g = GridSpec::new(8, 3.0).unwrap();
        let f = Field::from_fn(g, |v| v[0].sin() * (-v[1] * v[1]).exp() + 1e-300 * v[2]);
        let bytes = encode_snapshot(&f, 0.125);
        assert_eq!(&bytes[..4], b"LCF1");
        assert_eq!(bytes.len(), 24 + 8 * 512);
        let s = decode_snapshot(&bytes).unwrap();
        assert_eq!(s.time, 0.125);
        let a: Vec<u64> = s.field.values().iter().map(|x| x.to_bits()).collect();
        let b: Vec<u64> = f.values().iter().map(|x| x.to_bits()).collect();
        assert_eq!(a, b);
        assert_eq!(encode_snapshot(&s.field, s.time), bytes);
    }

    #[test]
    fn snapshot_header_is_little_endian() {
        let g = GridSpec::new(8, 2.0).unwrap();
        let bytes = encode_snapshot(&Field::zeros(g), 1.0);
        assert_eq!(&bytes[4..8], &[8, 0, 0, 0]);
        assert_eq!(&bytes[8..16], &2.0f64.to_le_bytes());
        assert_eq!(&bytes[16..24], &[0, 0, 0, 0, 0, 0, 0xf0, 0x3f]);
    }

    #[test]
    fn corrupted_snapshots_give_typed_errors() {
        let g = GridSpec::new(8, 2.0).unwrap();
        let mut bytes = encode_snapshot(&Field::zeros(g), 0.0);
        assert!(matches!(
            decode_snapshot(&bytes[..100]),
            Err(SnapshotError::Truncated { found: 100, .. })
        ));
        bytes.push(0);
        assert!(matches!(decode_snapshot(&bytes), Err(SnapshotError::Trailing { extra: 1 })));
        bytes[0] = b'X';
        assert!(matches!(decode_snapshot(&bytes), Err(SnapshotError::BadMagic(_))));
        bytes[0] = b'L';
        bytes[4] = 7;
        assert!(matches!(decode_snapshot(&bytes), Err(SnapshotError::Grid(GridError::OddSize(7)))));
    }

    #[test]
    fn line_lookup_tracks_sections() {
        let t = "n = 1\n[grid]\nL = 2\n n = 4\n[scheme]\nn = 5\n";
        assert_eq!(line_of_key(t, "grid", "n"), Some(4));
        assert_eq!(line_of_key(t, "grid", "x"), Some(2));
        assert_eq!(line_of_key(t, "experiment", "T"), None);
    }
}
