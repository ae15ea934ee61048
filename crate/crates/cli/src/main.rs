mod config;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use rational_mis::analysis::oracle::{exact_small_oracle, to_f64, Rational};
use rational_mis::analysis::{
    emit, paired_deviation_test, run_batch, termination_curve, TrialSummary,
};
use rational_mis::deviations::{DeviationKind, DeviationSpec};
use rational_mis::engine::{rank_bits_for, DEFAULT_RANK_BITS_C};
use rational_mis::signing::SignatureBackend;
use rational_mis::{Error, Graph, GraphFamily, NodeId, Protocol, Result, RunConfig, Variant};
use serde::Serialize;

use config::{ConfigFile, DeviationTable, Format, OutputSection, Payoffs};

#[derive(Parser)]
#[command(
    name = "rational-mis",
    version,
    about = "Simulate and analyse rational MIS protocols"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute runs and write one record per run.
    Run(Common),
    /// Execute runs and write an aggregate summary.
    Trials {
        #[command(flatten)]
        common: Common,
        /// With --format csv, write the per-node table instead of the summary row.
        #[arg(long)]
        per_node: bool,
    },
    /// Paired honest-vs-deviant comparison for one deviation or the whole catalog.
    Deviate {
        #[command(flatten)]
        common: Common,
        /// Test every catalog deviation applicable to the protocol at this node.
        #[arg(long, value_name = "NODE")]
        catalog: Option<u32>,
    },
    /// Iteration counts across graph sizes.
    Curve {
        #[command(flatten)]
        common: Common,
        /// Family without size, e.g. `cycle` or `erdos_renyi:8/n`.
        #[arg(long)]
        family: String,
        /// Comma-separated sizes.
        #[arg(long, value_delimiter = ',', required = true)]
        sizes: Vec<usize>,
    },
    /// Exact values for graphs with at most three nodes.
    Oracle(Common),
    /// Check a configuration and graph without running anything.
    Validate(Common),
}

#[derive(Args, Clone, Default)]
struct Common {
    /// TOML config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Graph family (`path:N`, `cycle:N`, `complete:N`, `star:N`, `edgeless:N`,
    /// `random_regular:D:N`, `erdos_renyi:P:N` or `erdos_renyi:K/n:N`) or an edge-list file.
    #[arg(long)]
    graph: Option<String>,
    /// `rps` or `rank` [default: rps]
    #[arg(long)]
    protocol: Option<Protocol>,
    /// `full` or `honest` strategy implementation [default: full]
    #[arg(long, value_parser = parse_variant)]
    variant: Option<Variant>,
    /// `ideal` or `ed25519` signatures for the rank protocol [default: ideal]
    #[arg(long)]
    signatures: Option<SignatureBackend>,
    /// First seed; run k uses seed + k. Random graphs are sampled with this seed [default: 0]
    #[arg(long, env = "RMIS_SEED")]
    seed: Option<u64>,
    /// Number of runs [default: 1 for run, 1000 otherwise]
    #[arg(long)]
    trials: Option<u64>,
    /// Worker threads [default: all cores]
    #[arg(long, env = "RMIS_JOBS")]
    jobs: Option<usize>,
    /// Round limit [default: 60*ceil(log2 n)*3^(2*max_degree) for rps, 60*ceil(log2 n) for rank]
    #[arg(long)]
    round_cap: Option<u64>,
    /// Rank length multiplier c in L = ceil(c*log2 n) [default: 3]
    #[arg(long)]
    rank_bits_c: Option<f64>,
    /// Rank length L; overrides --rank-bits-c
    #[arg(long)]
    rank_bits: Option<u32>,
    /// Payoff for joining: one value, or one per node separated by commas [default: 1]
    #[arg(long)]
    v: Option<Payoffs>,
    /// Deviation, e.g. `node=0,strategy=silent,activation=3`
    #[arg(long)]
    deviate: Option<DeviationSpec>,
    /// `json-lines` or `csv` [default: json-lines]
    #[arg(long)]
    format: Option<Format>,
    /// Include per-round actions in run records
    #[arg(long)]
    trace: bool,
    /// Output file [default: stdout]
    #[arg(long)]
    output: Option<PathBuf>,
    /// Print the resolved configuration as TOML and exit.
    #[arg(long)]
    dump_config: bool,
}

fn parse_variant(s: &str) -> std::result::Result<Variant, String> {
    match s {
        "full" => Ok(Variant::Full),
        "honest" => Ok(Variant::Honest),
        _ => Err(format!("unknown variant {s:?} (full or honest)")),
    }
}

impl Common {
    fn as_config(&self) -> ConfigFile {
        ConfigFile {
            graph: self.graph.clone(),
            protocol: self.protocol,
            variant: self.variant,
            signatures: self.signatures,
            seed: self.seed,
            trials: self.trials,
            jobs: self.jobs,
            round_cap: self.round_cap,
            rank_bits_c: self.rank_bits_c,
            rank_bits: self.rank_bits,
            v: self.v.clone(),
            deviation: self.deviate.as_ref().map(DeviationTable::from_spec),
            output: OutputSection {
                format: self.format.unwrap_or_default(),
                trace: self.trace,
                path: self.output.clone(),
            },
        }
    }

    fn resolve(&self) -> Result<ConfigFile> {
        let base = match &self.config {
            Some(p) => ConfigFile::load(p)?,
            None => ConfigFile::default(),
        };
        Ok(base.overlay(self.as_config()))
    }
}

/// Everything a subcommand needs, resolved from file and flags.
struct Setup {
    file: ConfigFile,
    graph: Graph,
    run: RunConfig,
    seed: u64,
}

fn load_graph(spec: &str, seed: u64) -> Result<Graph> {
    let family = spec.parse::<GraphFamily>();
    if family.is_err() && Path::new(spec).is_file() {
        let text = std::fs::read_to_string(spec)
            .map_err(|e| Error::Config(format!("cannot read {spec}: {e}")))?;
        return Graph::load_edge_list(&text).map_err(|e| match e {
            Error::Format { line, msg } => Error::Config(format!("{spec}:{line}: {msg}")),
            other => other,
        });
    }
    family?.build(seed)
}

fn setup(common: &Common) -> Result<Setup> {
    let file = common.resolve()?;
    let seed = file.seed.unwrap_or(0);
    let spec = file
        .graph
        .as_deref()
        .ok_or_else(|| Error::Config("no graph given (--graph or `graph` in the config)".into()))?;
    let graph = load_graph(spec, seed)?;
    let protocol = file.protocol.unwrap_or(Protocol::Rps);
    let c = file.rank_bits_c.unwrap_or(DEFAULT_RANK_BITS_C);
    if protocol == Protocol::Rank && file.rank_bits.is_none() && c <= 2.0 {
        eprintln!("warning: rank-bits-c = {c} <= 2; rank collisions are no longer negligible (need c > 2)");
    }
    let mut run = RunConfig::new(Arc::new(graph.clone()), protocol);
    run.variant = file.variant.unwrap_or_default();
    run.signatures = file.signatures.unwrap_or_default();
    run.master_seed = seed;
    run.round_cap = file.round_cap;
    run.rank_bits = Some(
        file.rank_bits
            .unwrap_or_else(|| rank_bits_for(graph.n(), c)),
    );
    run.payoffs = file.v.as_ref().map(|v| v.resolve(graph.n())).transpose()?;
    run.deviations = file.deviation_spec()?.into_iter().collect();
    run.record_trace = file.output.trace;
    if let Some(jobs) = file.jobs {
        // Fails only if a pool already exists, which cannot happen here.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build_global();
    }
    Ok(Setup {
        file,
        graph,
        run,
        seed,
    })
}

fn writer(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).map_err(|e| {
            Error::Config(format!("cannot create {}: {e}", p.display()))
        })?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn cmd_run(common: &Common) -> Result<()> {
    let s = setup(common)?;
    let trials = s.file.trials.unwrap_or(1);
    let records = run_batch(&s.run, trials, s.seed)?;
    let out = writer(s.file.output.path.as_deref())?;
    match s.file.output.format {
        Format::JsonLines => emit::write_json_lines(out, &records)?,
        Format::Csv => emit::runs_csv(out, &records)?,
    }
    let valid = records.iter().filter(|r| r.is_valid_mis(&s.graph)).count();
    let mut line = format!("runs={} valid_mis={valid}", records.len());
    if !s.run.deviations.is_empty() {
        let detected = records
            .iter()
            .filter(|r| r.deviations.iter().any(|d| d.detected))
            .count();
        let fired = records
            .iter()
            .filter(|r| r.deviations.iter().any(|d| d.fired_rounds > 0))
            .count();
        line.push_str(&format!(" fired_runs={fired} detected_runs={detected}"));
    }
    eprintln!("{line}");
    Ok(())
}

fn cmd_trials(common: &Common, per_node: bool) -> Result<()> {
    let s = setup(common)?;
    let records = run_batch(&s.run, s.file.trials.unwrap_or(1000), s.seed)?;
    let summary = TrialSummary::from_records(&s.graph, &records);
    let out = writer(s.file.output.path.as_deref())?;
    match (s.file.output.format, per_node) {
        (Format::JsonLines, _) => emit::write_json_lines(out, [&summary]),
        (Format::Csv, false) => emit::summary_csv(out, &summary),
        (Format::Csv, true) => emit::per_node_csv(out, &summary),
    }
}

#[derive(Serialize)]
struct Verdict<'a> {
    #[serde(flatten)]
    comparison: &'a rational_mis::analysis::PairedComparison,
    not_profitable: bool,
}

fn cmd_deviate(common: &Common, catalog: Option<u32>) -> Result<()> {
    let mut s = setup(common)?;
    let specs: Vec<DeviationSpec> = match catalog {
        Some(node) => DeviationKind::catalog(s.run.protocol)
            .into_iter()
            .map(|k| DeviationSpec::new(NodeId(node), k))
            .collect(),
        None => std::mem::take(&mut s.run.deviations),
    };
    if specs.is_empty() {
        return Err(Error::Config(
            "deviate needs --deviate or --catalog NODE".into(),
        ));
    }
    s.run.deviations.clear();
    let trials = s.file.trials.unwrap_or(1000);
    let results = specs
        .iter()
        .map(|spec| paired_deviation_test(&s.run, spec, trials, s.seed))
        .collect::<Result<Vec<_>>>()?;
    for r in &results {
        eprintln!(
            "{}: honest {:.4} deviant {:.4} ± {:.4} -> {}",
            r.deviation,
            r.honest_mean,
            r.deviant_mean,
            r.std_err,
            if r.is_not_profitable() {
                "not profitable"
            } else {
                "PROFITABLE"
            }
        );
    }
    let out = writer(s.file.output.path.as_deref())?;
    match s.file.output.format {
        Format::JsonLines => emit::write_json_lines(
            out,
            results.iter().map(|c| Verdict {
                comparison: c,
                not_profitable: c.is_not_profitable(),
            }),
        ),
        Format::Csv => emit::paired_csv(out, &results),
    }
}

fn cmd_curve(common: &Common, family: &str, sizes: &[usize]) -> Result<()> {
    let mut common = common.clone();
    // The graph is rebuilt per size; a placeholder keeps `setup` happy.
    let first = sizes
        .first()
        .ok_or_else(|| Error::Config("--sizes is empty".into()))?;
    common.graph = Some(format!("{family}:{first}"));
    let s = setup(&common)?;
    let kind = format!("{family}:{first}").parse::<GraphFamily>()?.kind;
    let c = s.file.rank_bits_c.unwrap_or(DEFAULT_RANK_BITS_C);
    let points = termination_curve(
        &kind,
        sizes,
        s.run.protocol,
        s.file.trials.unwrap_or(1000),
        s.seed,
        c,
    )?;
    let out = writer(s.file.output.path.as_deref())?;
    match s.file.output.format {
        Format::JsonLines => emit::write_json_lines(out, &points),
        Format::Csv => emit::curve_csv(out, &points),
    }
}

fn cmd_oracle(common: &Common) -> Result<()> {
    let s = setup(common)?;
    let bits = s.run.effective_rank_bits();
    let o = exact_small_oracle(
        &s.graph,
        s.run.protocol,
        s.run.deviations.first(),
        bits,
        s.run.payoffs.as_deref(),
    )?;
    let mut out = writer(s.file.output.path.as_deref())?;
    let io = |e: io::Error| Error::Config(format!("output failed: {e}"));
    if s.file.output.format == Format::JsonLines && s.file.output.path.is_some() {
        return emit::write_json_lines(out, [&o]);
    }
    let show = |qs: &[Rational]| {
        qs.iter()
            .map(|q| format!("{q} ({:.6})", to_f64(q)))
            .collect::<Vec<_>>()
            .join(", ")
    };
    if s.run.protocol == Protocol::Rank {
        writeln!(out, "rank_bits: {bits}").map_err(io)?;
    }
    writeln!(out, "inclusion: {}", show(&o.inclusion)).map_err(io)?;
    writeln!(
        out,
        "expected_iterations: {}",
        show(std::slice::from_ref(&o.expected_iterations))
    )
    .map_err(io)?;
    writeln!(
        out,
        "first_iteration_join: {}",
        show(&o.first_iteration_join)
    )
    .map_err(io)?;
    writeln!(out, "expected_utility: {}", show(&o.expected_utility)).map_err(io)?;
    out.flush().map_err(io)
}

fn cmd_validate(common: &Common) -> Result<()> {
    let s = setup(common)?;
    s.run.validate()?;
    s.graph.validate()?;
    println!(
        "ok: n={} edges={} max_degree={} protocol={} rank_bits={} round_cap={} deviations={}",
        s.graph.n(),
        s.graph.edge_count(),
        s.graph.max_degree(),
        s.run.protocol,
        s.run.effective_rank_bits(),
        s.run.effective_round_cap(),
        s.run.deviations.len()
    );
    Ok(())
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::EngineFault(_) | Error::Contract(_) | Error::Signing(_) => 3,
        Error::Parameter(_) | Error::Format { .. } | Error::Config(_) | Error::Unsupported(_) => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let common = match &cli.command {
        Command::Run(c) | Command::Oracle(c) | Command::Validate(c) => c,
        Command::Trials { common, .. }
        | Command::Deviate { common, .. }
        | Command::Curve { common, .. } => common,
    };
    if common.dump_config {
        return match common.resolve() {
            Ok(c) => {
                print!("{}", c.to_toml());
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(exit_code(&e))
            }
        };
    }
    let result = match &cli.command {
        Command::Run(c) => cmd_run(c),
        Command::Trials { common, per_node } => cmd_trials(common, *per_node),
        Command::Deviate { common, catalog } => cmd_deviate(common, *catalog),
        Command::Curve {
            common,
            family,
            sizes,
        } => cmd_curve(common, family, sizes),
        Command::Oracle(c) => cmd_oracle(c),
        Command::Validate(c) => cmd_validate(c),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
