//! Command-line interface.
//!
//! Subcommands: `evolve` (one evolution with per-generation records), `run`
//! (one run of many evolutions), `density` (one density estimate), `suite`
//! (the full table), `audit` (recompute K columns of an existing CSV).
//!
//! Exit codes: 0 success, 1 usage error, 2 runtime failure.

use std::fs;
use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::density::{
    estimate_conditional_density, estimate_d1, estimate_d2, working_length_distribution,
    DensityConfig,
};
use crate::evolution::{
    run_evolution_observed, run_single_metric_observed, EvolutionConfig, Protocol, RunConfig,
};
use crate::experiment::{
    audit_csv_text, run_suite, ExperimentSpec, ProtocolKind, TableRow, CSV_HEADER,
};
use crate::fitness::Metric;

/// Environment variable naming the default output directory for `suite`.
pub const OUT_DIR_ENV: &str = "SORTEVO_OUT_DIR";

#[derive(Parser, Debug)]
#[command(
    name = "sortevo",
    version,
    about = "Evolves tree programs that sort, and measures how rare working ones are"
)]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Run one evolution, emitting a JSON record per generation.
    Evolve(EvolveArgs),
    /// Run many evolutions and report median generation counts.
    Run(RunArgs),
    /// Estimate one working-program density.
    Density(DensityArgs),
    /// Run experiments and density estimates across a range of v.
    Suite(SuiteArgs),
    /// Check the K columns of a previously written CSV.
    Audit(AuditArgs),
}

#[derive(Args, Debug, Clone)]
struct EvoOpts {
    /// Number of writable variables.
    #[arg(long, default_value_t = 2)]
    vars: usize,
    #[arg(long, default_value_t = 1000)]
    population: usize,
    #[arg(long, default_value_t = 7)]
    tournament: usize,
    #[arg(long, default_value_t = 0.2)]
    mutation_prob: f64,
    /// Uncounted f1 generations between the two phases.
    #[arg(long, default_value_t = 10)]
    steady_gens: u64,
    /// Per-phase generation cap.
    #[arg(long, default_value_t = 20_000)]
    max_generations: u64,
    #[arg(long, default_value_t = 42)]
    seed: u64,
}

impl EvoOpts {
    fn config(&self, metric: Metric) -> EvolutionConfig {
        EvolutionConfig {
            v: self.vars,
            population_size: self.population,
            tournament_size: self.tournament,
            mutation_probability: self.mutation_prob,
            steady_state_generations: self.steady_gens,
            second_metric: metric,
            max_generations: self.max_generations,
            max_depth: crate::program::MAX_DEPTH,
            seed: self.seed,
        }
    }
}

#[derive(Args, Debug)]
struct EvolveArgs {
    #[command(flatten)]
    evo: EvoOpts,
    /// Goal metric (f2 or f3).
    #[arg(long, default_value = "f2", value_parser = parse_goal_metric)]
    metric: Metric,
    #[arg(long, default_value = "two-phase", value_parser = parse_run_protocol)]
    protocol: Protocol,
    /// Write output here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[command(flatten)]
    evo: EvoOpts,
    #[arg(long, default_value = "f2", value_parser = parse_goal_metric)]
    metric: Metric,
    #[arg(long, default_value = "two-phase", value_parser = parse_run_protocol)]
    protocol: Protocol,
    #[arg(long, default_value_t = 30)]
    evolutions: usize,
    #[arg(long, default_value = "json")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct DensityArgs {
    #[command(flatten)]
    evo: EvoOpts,
    /// Which density: d1, d2 or d2prime.
    #[arg(long, default_value = "d1", value_parser = parse_density_kind)]
    protocol: ProtocolKind,
    /// Goal metric, used only by the evolutions behind the length
    /// distribution.
    #[arg(long, default_value = "f2", value_parser = parse_goal_metric)]
    metric: Metric,
    /// Stop once this many hits have been seen (default: desk rule).
    #[arg(long)]
    min_hits: Option<u64>,
    /// Working programs collected for the length distribution.
    #[arg(long, default_value_t = 30)]
    n_working: usize,
    /// Fixed-point blending passes for the length distribution.
    #[arg(long, default_value_t = 1)]
    iterations: usize,
    #[arg(long, default_value_t = crate::density::DEFAULT_SAMPLE_BUDGET)]
    sample_budget: u64,
    #[arg(long, default_value = "json")]
    format: Format,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SuiteArgs {
    /// Baseline settings; individual flags override.
    #[arg(long, default_value = "desk")]
    profile: Profile,
    /// JSON spec file to start from instead of the profile.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Inclusive range such as 2..4, or a single value.
    #[arg(long)]
    vars: Option<String>,
    #[arg(long, value_parser = parse_goal_metric)]
    metric: Option<Metric>,
    /// Protocols to run (repeatable); `all` selects every protocol.
    #[arg(long = "protocol")]
    protocols: Vec<String>,
    #[arg(long)]
    evolutions: Option<usize>,
    #[arg(long)]
    min_hits: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    population: Option<usize>,
    #[arg(long)]
    tournament: Option<usize>,
    #[arg(long)]
    mutation_prob: Option<f64>,
    #[arg(long)]
    steady_gens: Option<u64>,
    #[arg(long)]
    max_generations: Option<u64>,
    #[arg(long)]
    n_working: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    sample_budget: Option<u64>,
    /// Output directory (default: $SORTEVO_OUT_DIR or ./sortevo-out).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AuditArgs {
    /// CSV file written by `suite` or `run --format csv`.
    csv: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Profile {
    Desk,
    Paper,
}

fn parse_goal_metric(s: &str) -> Result<Metric, String> {
    match s {
        "f2" => Ok(Metric::F2),
        "f3" => Ok(Metric::F3),
        "f1" => Err("f1 is the phase-1 metric; the goal metric is f2 or f3".to_string()),
        other => Err(format!("unknown metric {other:?}")),
    }
}

fn parse_run_protocol(s: &str) -> Result<Protocol, String> {
    match s {
        "two-phase" => Ok(Protocol::TwoPhase),
        "single-metric" => Ok(Protocol::SingleMetric),
        other => Err(format!(
            "unknown protocol {other:?} (expected two-phase or single-metric)"
        )),
    }
}

fn parse_density_kind(s: &str) -> Result<ProtocolKind, String> {
    match s {
        "d1" | "density-d1" => Ok(ProtocolKind::DensityD1),
        "d2" | "density-d2" => Ok(ProtocolKind::DensityD2),
        "d2prime" | "density-d2prime" => Ok(ProtocolKind::DensityD2Prime),
        other => Err(format!(
            "unknown density {other:?} (expected d1, d2 or d2prime)"
        )),
    }
}

fn parse_suite_protocol(s: &str) -> Result<Vec<ProtocolKind>, String> {
    if s == "all" {
        return Ok(ProtocolKind::ALL.to_vec());
    }
    s.parse().map(|k| vec![k])
}

/// Parses `A..B` (inclusive) or a bare integer.
fn parse_vars_range(s: &str) -> Result<(usize, usize), String> {
    let parse_one = |t: &str| {
        t.parse::<usize>()
            .map_err(|_| format!("bad variable count {t:?}"))
    };
    if let Some((a, b)) = s.split_once("..=").or_else(|| s.split_once("..")) {
        Ok((parse_one(a)?, parse_one(b)?))
    } else {
        let v = parse_one(s)?;
        Ok((v, v))
    }
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl CliError {
    fn usage(e: impl std::fmt::Display) -> CliError {
        CliError::Usage(e.to_string())
    }

    fn runtime(e: impl std::fmt::Display) -> CliError {
        CliError::Runtime(e.to_string())
    }
}

/// Entry point used by the binary: parses std::env args, runs, and maps the
/// outcome onto the exit-code contract.
pub fn main_entry() -> i32 {
    let args = std::env::args_os();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests land here too; those print to
            // stdout and exit 0, while real parse errors are usage errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let mut stdout = std::io::stdout();
    match execute(cli, &mut stdout) {
        Ok(()) => 0,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            1
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            2
        }
    }
}

/// Test entry: parses the given arguments and writes output to `out`.
pub fn run_from<I, S>(args: I, out: &mut dyn Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(CliError::usage)?;
    execute(cli, out)
}

fn execute(cli: Cli, out: &mut dyn Write) -> Result<(), CliError> {
    match cli.workers {
        Some(n) if n > 0 => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(CliError::runtime)?;
            pool.install(|| dispatch(cli.command, out))
        }
        Some(_) => Err(CliError::Usage("--workers must be at least 1".to_string())),
        None => dispatch(cli.command, out),
    }
}

fn dispatch(cmd: Cmd, out: &mut dyn Write) -> Result<(), CliError> {
    match cmd {
        Cmd::Evolve(args) => evolve(args, out),
        Cmd::Run(args) => run(args, out),
        Cmd::Density(args) => density(args, out),
        Cmd::Suite(args) => suite(args, out),
        Cmd::Audit(args) => audit(args, out),
    }
}

/// Routes output to --out when given, otherwise to the caller's writer.
fn sink<'a>(
    path: &Option<PathBuf>,
    out: &'a mut dyn Write,
) -> Result<Box<dyn Write + 'a>, CliError> {
    match path {
        Some(p) => {
            let file = fs::File::create(p)
                .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", p.display())))?;
            Ok(Box::new(file))
        }
        None => Ok(Box::new(out)),
    }
}

fn io_err(e: std::io::Error) -> CliError {
    CliError::runtime(format!("write failed: {e}"))
}

fn evolve(args: EvolveArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = args.evo.config(args.metric);
    cfg.validate().map_err(CliError::usage)?;
    let mut w = sink(&args.out, out)?;
    let mut emit = |record: crate::evolution::GenerationRecord| {
        let line = serde_json::to_string(&record).expect("records serialize");
        let _ = writeln!(w, "{line}");
    };
    let result = match args.protocol {
        Protocol::TwoPhase => run_evolution_observed(&cfg, &mut emit),
        Protocol::SingleMetric => run_single_metric_observed(&cfg, &mut emit),
    };
    let line = serde_json::to_string(&result).expect("results serialize");
    writeln!(w, "{line}").map_err(io_err)?;
    Ok(())
}

fn run(args: RunArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let cfg = args.evo.config(args.metric);
    cfg.validate().map_err(CliError::usage)?;
    let run_cfg = RunConfig {
        master_seed: cfg.seed,
        evolution: cfg,
        protocol: args.protocol,
        evolutions: args.evolutions,
    };
    if run_cfg.evolutions == 0 {
        return Err(CliError::Usage("--evolutions must be at least 1".to_string()));
    }
    let summary = crate::evolution::run_experiment(&run_cfg);
    let mut w = sink(&args.out, out)?;
    match args.format {
        Format::Json => {
            let text = serde_json::to_string_pretty(&summary).expect("summaries serialize");
            writeln!(w, "{text}").map_err(io_err)?;
        }
        Format::Csv => {
            let kind = match args.protocol {
                Protocol::TwoPhase => ProtocolKind::TwoPhase,
                Protocol::SingleMetric => ProtocolKind::SingleMetric,
            };
            let mut row = TableRow {
                v: args.evo.vars,
                metric: args.metric,
                protocol: kind,
                g1: None,
                g2: None,
                g2prime: None,
                d1: None,
                d2: None,
                d2prime: None,
                k1: None,
                k2: None,
                k2prime: None,
                evolutions: Some(args.evolutions),
                min_hits: None,
                seed: args.evo.seed,
            };
            match args.protocol {
                Protocol::TwoPhase => {
                    row.g1 = summary.g1;
                    row.g2 = Some(summary.g2);
                }
                Protocol::SingleMetric => row.g2prime = Some(summary.g2),
            }
            writeln!(w, "{CSV_HEADER}").map_err(io_err)?;
            writeln!(w, "{}", row.to_csv_line()).map_err(io_err)?;
        }
    }
    Ok(())
}

fn density(args: DensityArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if args.min_hits == Some(0) {
        return Err(CliError::Usage("--min-hits must be at least 1".to_string()));
    }
    let ecfg = args.evo.config(args.metric);
    ecfg.validate().map_err(CliError::usage)?;
    if args.n_working < 30 {
        return Err(CliError::Usage(
            "--n-working must be at least 30".to_string(),
        ));
    }
    let dist = working_length_distribution(&ecfg, args.n_working, args.iterations)
        .map_err(CliError::runtime)?;
    let dcfg = DensityConfig {
        v: args.evo.vars,
        min_hits: args
            .min_hits
            .unwrap_or_else(|| ExperimentSpec::desk_min_hits(args.protocol, args.evo.vars)),
        sample_budget: args.sample_budget,
        seed: crate::derive_seed(args.evo.seed, 0xE5),
    };
    let estimate = match args.protocol {
        ProtocolKind::DensityD1 => estimate_d1(&dist, &dcfg),
        ProtocolKind::DensityD2 => estimate_d2(&dist, &dcfg),
        ProtocolKind::DensityD2Prime => estimate_conditional_density(&dist, &dcfg),
        _ => unreachable!("parser only admits density kinds"),
    }
    .map_err(CliError::runtime)?;
    let mut w = sink(&args.out, out)?;
    match args.format {
        Format::Json => {
            let text = serde_json::to_string_pretty(&estimate).expect("estimates serialize");
            writeln!(w, "{text}").map_err(io_err)?;
        }
        Format::Csv => {
            let mut row = TableRow {
                v: args.evo.vars,
                metric: args.metric,
                protocol: args.protocol,
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
                min_hits: Some(dcfg.min_hits),
                seed: args.evo.seed,
            };
            match args.protocol {
                ProtocolKind::DensityD1 => row.d1 = Some(estimate.density),
                ProtocolKind::DensityD2 => row.d2 = Some(estimate.density),
                ProtocolKind::DensityD2Prime => row.d2prime = Some(estimate.density),
                _ => unreachable!(),
            }
            writeln!(w, "{CSV_HEADER}").map_err(io_err)?;
            writeln!(w, "{}", row.to_csv_line()).map_err(io_err)?;
        }
    }
    Ok(())
}

fn default_out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("sortevo-out"))
}

fn build_suite_spec(args: &SuiteArgs) -> Result<ExperimentSpec, CliError> {
    let out_dir = args.out.clone().unwrap_or_else(default_out_dir);
    let mut spec = match &args.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| {
                CliError::usage(format!("cannot read {}: {e}", path.display()))
            })?;
            let mut spec: ExperimentSpec = serde_json::from_str(&text)
                .map_err(|e| CliError::usage(format!("bad config file: {e}")))?;
            if args.out.is_some() {
                spec.out_dir = out_dir;
            }
            spec
        }
        None => match args.profile {
            Profile::Desk => ExperimentSpec::desk(out_dir),
            Profile::Paper => ExperimentSpec::paper(out_dir),
        },
    };
    if let Some(range) = &args.vars {
        let (a, b) = parse_vars_range(range).map_err(CliError::Usage)?;
        spec.v_start = a;
        spec.v_end = b;
    }
    if !args.protocols.is_empty() {
        let mut kinds = Vec::new();
        for p in &args.protocols {
            kinds.extend(parse_suite_protocol(p).map_err(CliError::Usage)?);
        }
        spec.protocols = kinds;
    }
    if let Some(m) = args.metric {
        spec.metric = m;
    }
    if let Some(e) = args.evolutions {
        spec.evolutions = e;
    }
    if args.min_hits.is_some() {
        spec.min_hits = args.min_hits;
    }
    if let Some(s) = args.seed {
        spec.master_seed = s;
    }
    if let Some(p) = args.population {
        spec.population_size = p;
    }
    if let Some(t) = args.tournament {
        spec.tournament_size = t;
    }
    if let Some(m) = args.mutation_prob {
        spec.mutation_probability = m;
    }
    if let Some(s) = args.steady_gens {
        spec.steady_state_generations = s;
    }
    if let Some(m) = args.max_generations {
        spec.max_generations = m;
    }
    if let Some(n) = args.n_working {
        spec.n_working = n;
    }
    if let Some(i) = args.iterations {
        spec.blend_iterations = i;
    }
    if let Some(b) = args.sample_budget {
        spec.sample_budget = b;
    }
    spec.validate().map_err(CliError::usage)?;
    Ok(spec)
}

fn suite(args: SuiteArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let spec = build_suite_spec(&args)?;
    let result = run_suite(&spec).map_err(CliError::runtime)?;
    for job in &result.manifest.jobs {
        writeln!(
            out,
            "v={} {}: {} ({:.1}s)",
            job.v, job.job, job.status, job.elapsed_secs
        )
        .map_err(io_err)?;
    }
    writeln!(out, "wrote {}", result.csv_path.display()).map_err(io_err)?;
    writeln!(out, "wrote {}", result.manifest_path.display()).map_err(io_err)?;
    Ok(())
}

fn audit(args: AuditArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let text = fs::read_to_string(&args.csv)
        .map_err(|e| CliError::runtime(format!("cannot read {}: {e}", args.csv.display())))?;
    let (rows, findings) = audit_csv_text(&text).map_err(CliError::Runtime)?;
    if findings.is_empty() {
        writeln!(out, "{} rows, all K columns consistent", rows.len()).map_err(io_err)?;
        Ok(())
    } else {
        for f in &findings {
            writeln!(out, "line {}: {}", f.line, f.message).map_err(io_err)?;
        }
        Err(CliError::Runtime(format!(
            "{} inconsistent K cells in {}",
            findings.len(),
            args.csv.display()
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    fn parse(args: &[&str]) -> Result<Cli, clap::Error> {
        Cli::try_parse_from(args)
    }

    #[test]
    fn suite_flags_build_the_expected_spec() {
        let cli = parse(&[
            "sortevo",
            "suite",
            "--vars",
            "2..10",
            "--metric",
            "f2",
            "--protocol",
            "two-phase",
            "--evolutions",
            "100",
            "--seed",
            "42",
        ])
        .unwrap();
        let Cmd::Suite(args) = cli.command else {
            panic!("expected suite")
        };
        let spec = build_suite_spec(&args).unwrap();
        assert_eq!((spec.v_start, spec.v_end), (2, 10));
        assert_eq!(spec.metric, Metric::F2);
        assert_eq!(spec.protocols, vec![ProtocolKind::TwoPhase]);
        assert_eq!(spec.evolutions, 100);
        assert_eq!(spec.master_seed, 42);
    }

    #[test]
    fn unknown_metric_is_a_usage_error() {
        let err = parse(&["sortevo", "run", "--metric", "f4"]).unwrap_err();
        assert!(err.to_string().contains("unknown metric"), "{err}");
        let err = parse(&["sortevo", "run", "--metric", "f1"]).unwrap_err();
        assert!(err.to_string().contains("f2 or f3"), "{err}");
    }

    #[test]
    fn zero_min_hits_is_rejected() {
        let cli = parse(&["sortevo", "suite", "--min-hits", "0"]).unwrap();
        let Cmd::Suite(args) = cli.command else {
            panic!("expected suite")
        };
        match build_suite_spec(&args) {
            Err(CliError::Usage(msg)) => assert!(msg.contains("min_hits"), "{msg}"),
            other => panic!("expected usage error, got {other:?}"),
        }
    }

    #[test]
    fn vars_range_forms() {
        assert_eq!(parse_vars_range("2..4").unwrap(), (2, 4));
        assert_eq!(parse_vars_range("2..=4").unwrap(), (2, 4));
        assert_eq!(parse_vars_range("3").unwrap(), (3, 3));
        assert!(parse_vars_range("a..b").is_err());
        assert!(parse_vars_range("").is_err());

        let cli = parse(&["sortevo", "suite", "--vars", "5..2"]).unwrap();
        let Cmd::Suite(args) = cli.command else {
            panic!("expected suite")
        };
        assert!(matches!(build_suite_spec(&args), Err(CliError::Usage(_))));
    }

    #[test]
    fn protocol_all_expands() {
        let cli = parse(&["sortevo", "suite", "--protocol", "all"]).unwrap();
        let Cmd::Suite(args) = cli.command else {
            panic!("expected suite")
        };
        let spec = build_suite_spec(&args).unwrap();
        assert_eq!(spec.protocols.len(), 5);
    }

    #[test]
    fn paper_profile_scales_up() {
        let cli = parse(&["sortevo", "suite", "--profile", "paper"]).unwrap();
        let Cmd::Suite(args) = cli.command else {
            panic!("expected suite")
        };
        let spec = build_suite_spec(&args).unwrap();
        assert_eq!((spec.v_start, spec.v_end), (2, 10));
        assert_eq!(spec.evolutions, 100);
        assert_eq!(spec.min_hits, Some(100));
        assert_eq!(spec.protocols.len(), 5);
    }

    #[test]
    fn config_file_loads_and_flags_override() {
        let dir = tempdir().unwrap();
        let mut spec = ExperimentSpec::desk(dir.path().join("out"));
        spec.evolutions = 7;
        let path = dir.path().join("spec.json");
        fs::write(&path, serde_json::to_string(&spec).unwrap()).unwrap();

        let path_str = path.to_str().unwrap();
        let cli = parse(&["sortevo", "suite", "--config", path_str, "--seed", "9"]).unwrap();
        let Cmd::Suite(args) = cli.command else {
            panic!("expected suite")
        };
        let built = build_suite_spec(&args).unwrap();
        assert_eq!(built.evolutions, 7);
        assert_eq!(built.master_seed, 9);
        assert_eq!(built.out_dir, dir.path().join("out"));
    }

    #[test]
    fn run_csv_output_parses_back() {
        let mut buf = Vec::new();
        run_from(
            [
                "sortevo",
                "run",
                "--vars",
                "2",
                "--population",
                "40",
                "--max-generations",
                "2",
                "--evolutions",
                "2",
                "--seed",
                "5",
                "--format",
                "csv",
            ],
            &mut buf,
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), CSV_HEADER);
        let row = TableRow::parse_csv_line(lines.next().unwrap()).unwrap();
        assert_eq!(row.v, 2);
        assert_eq!(row.evolutions, Some(2));
        assert!(row.g1.is_some() && row.g2.is_some());
    }

    #[test]
    fn evolve_emits_generation_records_then_a_result() {
        let mut buf = Vec::new();
        run_from(
            [
                "sortevo",
                "evolve",
                "--vars",
                "2",
                "--population",
                "40",
                "--max-generations",
                "2",
                "--seed",
                "5",
            ],
            &mut buf,
        )
        .unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert!(lines.len() >= 2);
        for line in &lines[..lines.len() - 1] {
            let record: serde_json::Value = serde_json::from_str(line).unwrap();
            assert!(record.get("phase").is_some());
            assert!(record.get("best").is_some());
        }
        let result: serde_json::Value = serde_json::from_str(lines.last().unwrap()).unwrap();
        assert!(result.get("capped").is_some());
    }

    #[test]
    fn audit_reports_runtime_failure_on_bad_k() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("t.csv");
        fs::write(
            &path,
            format!("{CSV_HEADER}\n2,f2,two-phase,62.5,62,,1.107e-3,,,9.9,,,30,,1\n"),
        )
        .unwrap();
        let mut buf = Vec::new();
        let err = run_from(["sortevo", "audit", path.to_str().unwrap()], &mut buf).unwrap_err();
        match err {
            CliError::Runtime(msg) => assert!(msg.contains("inconsistent"), "{msg}"),
            other => panic!("expected runtime error, got {other:?}"),
        }
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("K1"));
    }

    #[test]
    fn audit_missing_file_is_a_runtime_error() {
        let mut buf = Vec::new();
        let err = run_from(["sortevo", "audit", "/no/such/file.csv"], &mut buf).unwrap_err();
        assert!(matches!(err, CliError::Runtime(_)));
    }

    #[test]
    fn tiny_suite_runs_end_to_end() {
        let dir = tempdir().unwrap();
        let out_arg = dir.path().join("o");
        let mut buf = Vec::new();
        run_from(
            [
                "sortevo",
                "suite",
                "--vars",
                "2",
                "--protocol",
                "two-phase",
                "--population",
                "40",
                "--max-generations",
                "2",
                "--evolutions",
                "2",
                "--out",
                out_arg.to_str().unwrap(),
                "--workers",
                "2",
            ],
            &mut buf,
        )
        .unwrap();
        assert!(out_arg.join("table.csv").exists());
        assert!(out_arg.join("manifest.json").exists());
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("wrote"), "{text}");

        let mut buf = Vec::new();
        run_from(
            [
                "sortevo",
                "audit",
                out_arg.join("table.csv").to_str().unwrap(),
            ],
            &mut buf,
        )
        .unwrap();
    }

    #[test]
    fn out_dir_env_is_the_default_sink() {
        // Read-only check of the fallback rule; the env var itself is
        // process-global so tests do not set it.
        if std::env::var_os(OUT_DIR_ENV).is_none() {
            assert_eq!(default_out_dir(), PathBuf::from("sortevo-out"));
        }
    }
}
