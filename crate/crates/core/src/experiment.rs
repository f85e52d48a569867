//! Suite orchestration: runs evolution experiments and density estimates
//! across a range of variable counts, assembles the K constancy table, and
//! writes CSV plus a JSON manifest.
//!
//! The CSV schema is fixed:
//! `v,metric,protocol,G1,G2,G2prime,D1,D2,D2prime,K1,K2,K2prime,evolutions,min_hits,seed`
//! with absent values left empty. One row is written per (v, protocol).
//! Density values measured for a v are also copied onto that v's two-phase
//! row, where the K columns live: K1 = G1·√D1, K2 = G2·√D2, K2′ = G2·√D2′,
//! all using the two-phase medians.
//!
//! Determinism: every job's seed is derived from the master seed and v, and
//! every component below the suite is reproducible for a fixed seed
//! regardless of worker count, so a rerun with the same spec and master seed
//! produces a byte-identical CSV.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::density::{
    estimate_conditional_density, estimate_d1, estimate_d2, working_length_distribution,
    DensityConfig, DensityEstimate, DEFAULT_SAMPLE_BUDGET,
};
use crate::derive_seed;
use crate::evolution::{EvolutionConfig, Protocol, RunConfig, RunSummary};
use crate::fitness::Metric;

pub const CSV_HEADER: &str =
    "v,metric,protocol,G1,G2,G2prime,D1,D2,D2prime,K1,K2,K2prime,evolutions,min_hits,seed";

/// Per-v seed streams, hashed from `derive_seed(master, v)`. The two-phase
/// run uses the per-v seed directly; everything else gets a tagged stream.
const SINGLE_METRIC_STREAM: u64 = 0x10001;
const WORKING_DIST_STREAM: u64 = 0x10002;
const D1_STREAM: u64 = 0x10003;
const D2_STREAM: u64 = 0x10004;
const D2PRIME_STREAM: u64 = 0x10005;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProtocolKind {
    TwoPhase,
    SingleMetric,
    DensityD1,
    DensityD2,
    DensityD2Prime,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 5] = [
        ProtocolKind::TwoPhase,
        ProtocolKind::SingleMetric,
        ProtocolKind::DensityD1,
        ProtocolKind::DensityD2,
        ProtocolKind::DensityD2Prime,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolKind::TwoPhase => "two-phase",
            ProtocolKind::SingleMetric => "single-metric",
            ProtocolKind::DensityD1 => "density-d1",
            ProtocolKind::DensityD2 => "density-d2",
            ProtocolKind::DensityD2Prime => "density-d2prime",
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ProtocolKind {
    type Err = String;

    fn from_str(s: &str) -> Result<ProtocolKind, String> {
        match s {
            "two-phase" => Ok(ProtocolKind::TwoPhase),
            "single-metric" => Ok(ProtocolKind::SingleMetric),
            "density-d1" => Ok(ProtocolKind::DensityD1),
            "density-d2" => Ok(ProtocolKind::DensityD2),
            "density-d2prime" => Ok(ProtocolKind::DensityD2Prime),
            other => Err(format!("unknown protocol {other:?}")),
        }
    }
}

fn parse_metric(s: &str) -> Result<Metric, String> {
    match s {
        "f1" => Ok(Metric::F1),
        "f2" => Ok(Metric::F2),
        "f3" => Ok(Metric::F3),
        other => Err(format!("unknown metric {other:?}")),
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SpecError {
    #[error("v range {0}..={1} is empty or starts below 1")]
    BadVRange(usize, usize),
    #[error("evolutions must be at least 1")]
    ZeroEvolutions,
    #[error("no protocols selected")]
    NoProtocols,
    #[error("min_hits must be at least 1")]
    ZeroMinHits,
    #[error("n_working must be at least 30")]
    SmallNWorking,
    #[error(transparent)]
    Evolution(#[from] crate::evolution::ConfigError),
}

#[derive(Debug, thiserror::Error)]
pub enum SuiteError {
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
    #[error("manifest serialization failed: {0}")]
    Json(#[from] serde_json::Error),
}

/// Everything run_suite needs; serialized whole into the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub v_start: usize,
    pub v_end: usize,
    /// Goal metric for phase 2 and the single-metric protocol.
    pub metric: Metric,
    pub protocols: Vec<ProtocolKind>,
    pub evolutions: usize,
    /// Explicit min_hits for every density estimate; None applies the
    /// desk rule (100 for D1 and D2' at v=2, 30 everywhere else).
    pub min_hits: Option<u64>,
    pub master_seed: u64,
    pub population_size: usize,
    pub tournament_size: usize,
    pub mutation_probability: f64,
    pub steady_state_generations: u64,
    pub max_generations: u64,
    /// Working programs collected for the length distribution.
    pub n_working: usize,
    /// Fixed-point blending passes for the length distribution.
    pub blend_iterations: usize,
    pub sample_budget: u64,
    pub out_dir: PathBuf,
}

impl ExperimentSpec {
    /// Desk-scale defaults: minutes, not table replication.
    ///
    /// The density-d2 and density-d2prime protocols are not in the default
    /// set because their hit rates make them tens-of-minutes jobs even at
    /// v=2; select them explicitly when wanted.
    pub fn desk(out_dir: PathBuf) -> ExperimentSpec {
        ExperimentSpec {
            v_start: 2,
            v_end: 4,
            metric: Metric::F2,
            protocols: vec![
                ProtocolKind::TwoPhase,
                ProtocolKind::SingleMetric,
                ProtocolKind::DensityD1,
            ],
            evolutions: 30,
            min_hits: None,
            master_seed: 42,
            population_size: 1000,
            tournament_size: 7,
            mutation_probability: 0.2,
            steady_state_generations: 10,
            max_generations: 20_000,
            n_working: 30,
            blend_iterations: 1,
            sample_budget: DEFAULT_SAMPLE_BUDGET,
            out_dir,
        }
    }

    /// Full-table profile: v = 2..10, 100 evolutions, min_hits 100, all
    /// protocols. Runtime is measured in days of CPU time, dominated by the
    /// D2 estimates at large v; this exists for completeness, not for desks.
    pub fn paper(out_dir: PathBuf) -> ExperimentSpec {
        let mut spec = ExperimentSpec::desk(out_dir);
        spec.v_end = 10;
        spec.protocols = ProtocolKind::ALL.to_vec();
        spec.evolutions = 100;
        spec.min_hits = Some(100);
        spec.n_working = 100;
        spec
    }

    /// Desk min_hits rule: 100 where a hit is cheap enough to ask for the
    /// paper's precision, 30 where it is not.
    pub fn desk_min_hits(kind: ProtocolKind, v: usize) -> u64 {
        match kind {
            ProtocolKind::DensityD1 | ProtocolKind::DensityD2Prime if v == 2 => 100,
            _ => 30,
        }
    }

    pub fn min_hits_for(&self, kind: ProtocolKind, v: usize) -> u64 {
        self.min_hits
            .unwrap_or_else(|| ExperimentSpec::desk_min_hits(kind, v))
    }

    pub fn validate(&self) -> Result<(), SpecError> {
        if self.v_start < 1 || self.v_start > self.v_end {
            return Err(SpecError::BadVRange(self.v_start, self.v_end));
        }
        if self.evolutions == 0 {
            return Err(SpecError::ZeroEvolutions);
        }
        if self.protocols.is_empty() {
            return Err(SpecError::NoProtocols);
        }
        if self.min_hits == Some(0) {
            return Err(SpecError::ZeroMinHits);
        }
        if self.wants_density() && self.n_working < 30 {
            return Err(SpecError::SmallNWorking);
        }
        self.evolution_config(self.v_start, 0).validate()?;
        Ok(())
    }

    fn wants_density(&self) -> bool {
        self.protocols.iter().any(|k| {
            matches!(
                k,
                ProtocolKind::DensityD1 | ProtocolKind::DensityD2 | ProtocolKind::DensityD2Prime
            )
        })
    }

    /// Protocols in canonical order, deduplicated.
    pub fn normalized_protocols(&self) -> Vec<ProtocolKind> {
        let mut kinds: Vec<ProtocolKind> = self.protocols.clone();
        kinds.sort();
        kinds.dedup();
        kinds
    }

    pub fn evolution_config(&self, v: usize, seed: u64) -> EvolutionConfig {
        EvolutionConfig {
            v,
            population_size: self.population_size,
            tournament_size: self.tournament_size,
            mutation_probability: self.mutation_probability,
            steady_state_generations: self.steady_state_generations,
            second_metric: self.metric,
            max_generations: self.max_generations,
            max_depth: crate::program::MAX_DEPTH,
            seed,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum KError {
    #[error("density must be positive, got {0}")]
    NonPositiveDensity(f64),
    #[error("median generations must be non-negative, got {0}")]
    NegativeG(f64),
}

/// K = G·√D, the near-constant combination of search time and density.
pub fn compute_k(g: f64, d: f64) -> Result<f64, KError> {
    if !(d > 0.0) {
        return Err(KError::NonPositiveDensity(d));
    }
    if !(g >= 0.0) {
        return Err(KError::NegativeG(g));
    }
    Ok(g * d.sqrt())
}

/// One CSV row. Option fields print as empty cells.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub v: usize,
    pub metric: Metric,
    pub protocol: ProtocolKind,
    pub g1: Option<f64>,
    pub g2: Option<f64>,
    pub g2prime: Option<f64>,
    pub d1: Option<f64>,
    pub d2: Option<f64>,
    pub d2prime: Option<f64>,
    pub k1: Option<f64>,
    pub k2: Option<f64>,
    pub k2prime: Option<f64>,
    pub evolutions: Option<usize>,
    pub min_hits: Option<u64>,
    pub seed: u64,
}

impl TableRow {
    fn empty(v: usize, metric: Metric, protocol: ProtocolKind, seed: u64) -> TableRow {
        TableRow {
            v,
            metric,
            protocol,
            g1: None,
            g2: None,
            g2prime: None,
            d1: None,
            d2: None,
            d2prime: None,
            k1: None,
            k2: None,
            k2prime: None,
            evolutions: None,
            min_hits: None,
            seed,
        }
    }

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.v,
            self.metric.name(),
            self.protocol,
            fmt_g(self.g1),
            fmt_g(self.g2),
            fmt_g(self.g2prime),
            fmt_d(self.d1),
            fmt_d(self.d2),
            fmt_d(self.d2prime),
            fmt_k(self.k1),
            fmt_k(self.k2),
            fmt_k(self.k2prime),
            self.evolutions.map(|e| e.to_string()).unwrap_or_default(),
            self.min_hits.map(|m| m.to_string()).unwrap_or_default(),
            self.seed,
        )
    }

    pub fn parse_csv_line(line: &str) -> Result<TableRow, String> {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 15 {
            return Err(format!("expected 15 fields, got {}", fields.len()));
        }
        fn opt_f64(s: &str) -> Result<Option<f64>, String> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse().map(Some).map_err(|e| format!("bad number {s:?}: {e}"))
            }
        }
        Ok(TableRow {
            v: fields[0].parse().map_err(|e| format!("bad v: {e}"))?,
            metric: parse_metric(fields[1])?,
            protocol: fields[2].parse()?,
            g1: opt_f64(fields[3])?,
            g2: opt_f64(fields[4])?,
            g2prime: opt_f64(fields[5])?,
            d1: opt_f64(fields[6])?,
            d2: opt_f64(fields[7])?,
            d2prime: opt_f64(fields[8])?,
            k1: opt_f64(fields[9])?,
            k2: opt_f64(fields[10])?,
            k2prime: opt_f64(fields[11])?,
            evolutions: if fields[12].is_empty() {
                None
            } else {
                Some(fields[12].parse().map_err(|e| format!("bad evolutions: {e}"))?)
            },
            min_hits: if fields[13].is_empty() {
                None
            } else {
                Some(fields[13].parse().map_err(|e| format!("bad min_hits: {e}"))?)
            },
            seed: fields[14].parse().map_err(|e| format!("bad seed: {e}"))?,
        })
    }
}

/// Medians print under plain Display, so 62.5 stays "62.5" and 62 has no
/// trailing ".0", matching how half-integer medians are usually quoted.
fn fmt_g(x: Option<f64>) -> String {
    x.map(|g| format!("{g}")).unwrap_or_default()
}

/// Densities print with 4 significant digits of scientific notation.
fn fmt_d(x: Option<f64>) -> String {
    x.map(|d| format!("{d:.3e}")).unwrap_or_default()
}

fn fmt_k(x: Option<f64>) -> String {
    x.map(|k| format!("{k:.4}")).unwrap_or_default()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct JobRecord {
    pub v: usize,
    pub job: String,
    pub seed: u64,
    pub status: String,
    /// Wall-clock seconds; informational only and excluded from any
    /// determinism comparison.
    pub elapsed_secs: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub version: String,
    pub spec: ExperimentSpec,
    pub csv: String,
    pub jobs: Vec<JobRecord>,
}

#[derive(Debug)]
pub struct SuiteOutput {
    pub rows: Vec<TableRow>,
    pub manifest: Manifest,
    pub csv_path: PathBuf,
    pub manifest_path: PathBuf,
}

struct JobCtx {
    jobs: Vec<JobRecord>,
}

impl JobCtx {
    fn record<T>(
        &mut self,
        v: usize,
        job: &str,
        seed: u64,
        work: impl FnOnce() -> Result<T, String>,
    ) -> Option<T> {
        let start = Instant::now();
        let result = work();
        let status = match &result {
            Ok(_) => "ok".to_string(),
            Err(e) => format!("error: {e}"),
        };
        self.jobs.push(JobRecord {
            v,
            job: job.to_string(),
            seed,
            status,
            elapsed_secs: start.elapsed().as_secs_f64(),
        });
        result.ok()
    }
}

fn run_protocol(spec: &ExperimentSpec, v: usize, protocol: Protocol, master: u64) -> RunSummary {
    let run = RunConfig {
        evolution: spec.evolution_config(v, 0),
        protocol,
        evolutions: spec.evolutions,
        master_seed: master,
    };
    crate::evolution::run_experiment(&run)
}

fn density_config(spec: &ExperimentSpec, kind: ProtocolKind, v: usize, seed: u64) -> DensityConfig {
    DensityConfig {
        v,
        min_hits: spec.min_hits_for(kind, v),
        sample_budget: spec.sample_budget,
        seed,
    }
}

/// Executes the suite: for each v, the selected protocols run in canonical
/// order with seeds derived from the master seed, and the v's rows are
/// appended to the CSV and flushed before the next v starts. Job failures
/// (for instance a density budget abort) are recorded in the manifest and
/// leave their cells empty rather than aborting the suite.
pub fn run_suite(spec: &ExperimentSpec) -> Result<SuiteOutput, SuiteError> {
    spec.validate()?;
    fs::create_dir_all(&spec.out_dir)?;
    let csv_path = spec.out_dir.join("table.csv");
    let manifest_path = spec.out_dir.join("manifest.json");
    let kinds = spec.normalized_protocols();

    let mut csv = fs::File::create(&csv_path)?;
    writeln!(csv, "{CSV_HEADER}")?;

    let mut ctx = JobCtx { jobs: Vec::new() };
    let mut all_rows = Vec::new();

    for v in spec.v_start..=spec.v_end {
        let s_v = derive_seed(spec.master_seed, v as u64);
        let mut two_phase_row: Option<TableRow> = None;
        let mut other_rows: Vec<TableRow> = Vec::new();
        let mut d_values: [Option<&DensityEstimate>; 3] = [None, None, None];
        let mut estimates: Vec<(ProtocolKind, DensityEstimate, u64)> = Vec::new();

        for &kind in &kinds {
            match kind {
                ProtocolKind::TwoPhase => {
                    let summary = ctx
                        .record(v, kind.as_str(), s_v, || {
                            Ok::<_, String>(run_protocol(spec, v, Protocol::TwoPhase, s_v))
                        })
                        .expect("two-phase runs do not fail");
                    let mut row = TableRow::empty(v, spec.metric, kind, s_v);
                    row.g1 = summary.g1;
                    row.g2 = Some(summary.g2);
                    row.evolutions = Some(spec.evolutions);
                    two_phase_row = Some(row);
                }
                ProtocolKind::SingleMetric => {
                    let seed = derive_seed(s_v, SINGLE_METRIC_STREAM);
                    let summary = ctx
                        .record(v, kind.as_str(), seed, || {
                            Ok::<_, String>(run_protocol(spec, v, Protocol::SingleMetric, seed))
                        })
                        .expect("single-metric runs do not fail");
                    let mut row = TableRow::empty(v, spec.metric, kind, seed);
                    row.g2prime = Some(summary.g2);
                    row.evolutions = Some(spec.evolutions);
                    other_rows.push(row);
                }
                ProtocolKind::DensityD1 | ProtocolKind::DensityD2 | ProtocolKind::DensityD2Prime => {
                    estimates.extend(run_density_job(spec, &mut ctx, v, s_v, kind));
                }
            }
        }

        for (kind, est, seed) in &estimates {
            let mut row = TableRow::empty(v, spec.metric, *kind, *seed);
            row.min_hits = Some(spec.min_hits_for(*kind, v));
            match kind {
                ProtocolKind::DensityD1 => row.d1 = Some(est.density),
                ProtocolKind::DensityD2 => row.d2 = Some(est.density),
                ProtocolKind::DensityD2Prime => row.d2prime = Some(est.density),
                _ => unreachable!(),
            }
            other_rows.push(row);
        }
        for (kind, est, _) in &estimates {
            let slot = match kind {
                ProtocolKind::DensityD1 => 0,
                ProtocolKind::DensityD2 => 1,
                _ => 2,
            };
            d_values[slot] = Some(est);
        }

        if let Some(row) = &mut two_phase_row {
            row.d1 = d_values[0].map(|e| e.density);
            row.d2 = d_values[1].map(|e| e.density);
            row.d2prime = d_values[2].map(|e| e.density);
            if let (Some(g1), Some(d1)) = (row.g1, row.d1) {
                row.k1 = compute_k(g1, d1).ok();
            }
            if let (Some(g2), Some(d2)) = (row.g2, row.d2) {
                row.k2 = compute_k(g2, d2).ok();
            }
            if let (Some(g2), Some(d2p)) = (row.g2, row.d2prime) {
                row.k2prime = compute_k(g2, d2p).ok();
            }
        }

        let mut v_rows: Vec<TableRow> = two_phase_row.into_iter().chain(other_rows).collect();
        v_rows.sort_by_key(|r| r.protocol);
        for row in &v_rows {
            writeln!(csv, "{}", row.to_csv_line())?;
        }
        csv.flush()?;
        all_rows.extend(v_rows);

        // Rewritten after every v so a long suite can be inspected midway.
        write_manifest(&manifest_path, spec, &ctx.jobs)?;
    }

    let manifest = write_manifest(&manifest_path, spec, &ctx.jobs)?;
    Ok(SuiteOutput {
        rows: all_rows,
        manifest,
        csv_path,
        manifest_path,
    })
}

fn run_density_job(
    spec: &ExperimentSpec,
    ctx: &mut JobCtx,
    v: usize,
    s_v: u64,
    kind: ProtocolKind,
) -> Option<(ProtocolKind, DensityEstimate, u64)> {
    let dist_seed = derive_seed(s_v, WORKING_DIST_STREAM);
    let ecfg = {
        let mut c = spec.evolution_config(v, dist_seed);
        c.seed = dist_seed;
        c
    };
    // The working length distribution is deterministic in (spec, v), so
    // rebuilding it per density job repeats work but cannot disagree.
    let dist = ctx.record(v, &format!("working-dist for {kind}"), dist_seed, || {
        working_length_distribution(&ecfg, spec.n_working, spec.blend_iterations)
            .map_err(|e| e.to_string())
    })?;
    let (stream, run): (u64, fn(_, _) -> _) = match kind {
        ProtocolKind::DensityD1 => (D1_STREAM, estimate_d1),
        ProtocolKind::DensityD2 => (D2_STREAM, estimate_d2),
        ProtocolKind::DensityD2Prime => (D2PRIME_STREAM, estimate_conditional_density),
        _ => unreachable!(),
    };
    let seed = derive_seed(s_v, stream);
    let dcfg = density_config(spec, kind, v, seed);
    let est = ctx.record(v, kind.as_str(), seed, || {
        run(&dist, &dcfg).map_err(|e: crate::density::DensityError| e.to_string())
    })?;
    Some((kind, est, seed))
}

fn write_manifest(
    path: &Path,
    spec: &ExperimentSpec,
    jobs: &[JobRecord],
) -> Result<Manifest, SuiteError> {
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION").to_string(),
        spec: spec.clone(),
        csv: "table.csv".to_string(),
        jobs: jobs.to_vec(),
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(path, json)?;
    Ok(manifest)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditFinding {
    pub line: usize,
    pub message: String,
}

/// Recomputes every K cell from its G and D cells. The tolerance covers the
/// 4-significant-digit rounding of printed densities plus the 4-decimal
/// rounding of printed K.
pub fn audit_rows(rows: &[(usize, TableRow)]) -> Vec<AuditFinding> {
    let mut findings = Vec::new();
    let mut check = |line: usize, name: &str, k: Option<f64>, g: Option<f64>, d: Option<f64>| {
        let Some(k) = k else { return };
        let (Some(g), Some(d)) = (g, d) else {
            findings.push(AuditFinding {
                line,
                message: format!("{name} present but its G or D column is empty"),
            });
            return;
        };
        match compute_k(g, d) {
            Ok(expect) => {
                let tol = 1e-4 + 1e-3 * expect.abs();
                if (k - expect).abs() > tol {
                    findings.push(AuditFinding {
                        line,
                        message: format!("{name} = {k} but G·√D = {expect:.6}"),
                    });
                }
            }
            Err(e) => findings.push(AuditFinding {
                line,
                message: format!("{name}: {e}"),
            }),
        }
    };
    for (line, row) in rows {
        check(*line, "K1", row.k1, row.g1, row.d1);
        check(*line, "K2", row.k2, row.g2, row.d2);
        check(*line, "K2prime", row.k2prime, row.g2, row.d2prime);
    }
    findings
}

/// Parses CSV text and audits it. Parse failures are hard errors; audit
/// findings are returned for the caller to report.
pub fn audit_csv_text(text: &str) -> Result<(Vec<TableRow>, Vec<AuditFinding>), String> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header == CSV_HEADER => {}
        Some((_, header)) => return Err(format!("unexpected header {header:?}")),
        None => return Err("empty file".to_string()),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.is_empty() {
            continue;
        }
        let row = TableRow::parse_csv_line(line).map_err(|e| format!("line {}: {e}", i + 1))?;
        rows.push((i + 1, row));
    }
    let findings = audit_rows(&rows);
    Ok((rows.into_iter().map(|(_, r)| r).collect(), findings))
}
