use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use ssdkg::engine::{AnalyzeRequest, EvalOptions};
use ssdkg::{Ablation, BackendChoice, Engine, ServiceConfig};
use ssdkg_core::literature::ExtractionBatch;
use ssdkg_core::reasoning::{Perturbation, QueryKind, Scope};
use ssdkg_core::synth::fleet::{generate_fleet, FleetSpec};

#[derive(Parser)]
#[command(name = "ssdkg", version, about = "Knowledge-graph grounded analysis of SSD fleet telemetry")]
struct Cli {
    /// Workspace directory holding every store.
    #[arg(long, global = true, env = "SSDKG_DATA_DIR", default_value = "ssdkg-data")]
    data_dir: PathBuf,
    #[arg(long, global = true, value_enum, default_value_t = BackendArg::Template)]
    backend: BackendArg,
    /// Answer without retrieved literature.
    #[arg(long, global = true)]
    no_litkg: bool,
    /// Give the backend raw daily values instead of the data graph summary.
    #[arg(long, global = true)]
    raw_logs: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum BackendArg {
    Template,
    Remote,
}

#[derive(Subcommand)]
enum Command {
    /// Literature graph: build a collection version, validate batches, rebuild the merge.
    #[command(subcommand)]
    Litkg(LitkgCommand),
    /// Concept proposals against the shared taxonomy.
    #[command(subcommand)]
    Taxonomy(TaxonomyCommand),
    /// Load daily telemetry CSV (and optional failure labels) into the workspace.
    Ingest {
        telemetry: PathBuf,
        /// CSV with disk_id,failure_date.
        #[arg(long)]
        labels: Option<PathBuf>,
    },
    /// Emit window frames for stored telemetry.
    Frames(DriveFilter),
    /// Build, gate and persist per-window data graphs from stored frames.
    Materialize(DriveFilter),
    /// Ask a descriptive, predictive, prescriptive or what-if question.
    Query(QueryArgs),
    /// Predictive run over every kept window, scored against the failure labels.
    Eval {
        /// JSON object mapping window tag to reference answer text.
        #[arg(long)]
        references: Option<PathBuf>,
        /// Directory for metrics.json, metrics.txt and per_window.csv.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        question: Option<String>,
    },
    /// Re-execute audited answers and compare them with the stored text.
    Replay {
        /// Window tag or cohort key; every key when omitted.
        #[arg(long)]
        key: Option<String>,
        #[arg(long)]
        seq: Option<u64>,
    },
    /// Run the HTTP JSON API.
    Serve {
        #[arg(long, default_value = ssdkg::config::DEFAULT_LISTEN)]
        listen: SocketAddr,
        /// Seconds between background follow-up runs; 0 disables them.
        #[arg(long, default_value_t = ssdkg::config::FOLLOWUP_INTERVAL_SECS)]
        followup_interval: u64,
    },
    /// Write a seeded synthetic fleet (telemetry.csv, failures.csv).
    SynthFleet {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        drives: usize,
    },
}

#[derive(Subcommand)]
enum LitkgCommand {
    Build {
        #[arg(long, default_value = "default")]
        collection: String,
        #[arg(required = true)]
        batches: Vec<PathBuf>,
    },
    Validate {
        #[arg(long, default_value = "default")]
        collection: String,
        #[arg(required = true)]
        batches: Vec<PathBuf>,
    },
    Merge,
}

#[derive(Subcommand)]
enum TaxonomyCommand {
    Propose {
        #[arg(long)]
        name: String,
        #[arg(long)]
        definition: String,
        #[arg(long)]
        parent: String,
        #[arg(long, default_value = "operator")]
        source: String,
    },
    Approve {
        id: String,
    },
    List,
}

#[derive(Args)]
struct DriveFilter {
    /// Limit to these drives; all stored drives otherwise.
    #[arg(long = "drive")]
    drives: Vec<String>,
}

impl DriveFilter {
    fn set(&self) -> Option<BTreeSet<String>> {
        (!self.drives.is_empty()).then(|| self.drives.iter().cloned().collect())
    }
}

#[derive(Args)]
struct QueryArgs {
    #[arg(long, value_parser = parse_kind)]
    kind: QueryKind,
    #[arg(long)]
    question: String,
    /// A single window tag, e.g. D0001/2024-03-01..2024-03-30.
    #[arg(long, conflicts_with_all = ["cohort", "all"])]
    window: Option<String>,
    /// Several window tags analyzed together.
    #[arg(long, num_args = 1..)]
    cohort: Vec<String>,
    /// Every kept window as one cohort.
    #[arg(long)]
    all: bool,
    /// factor=delta or factor=delta:unit, e.g. Temperature=-5:°C.
    #[arg(long = "perturb", value_parser = parse_perturbation)]
    perturbations: Vec<Perturbation>,
    /// Print the full result as JSON instead of the answer text.
    #[arg(long)]
    json: bool,
}

fn parse_kind(s: &str) -> Result<QueryKind, String> {
    s.parse::<QueryKind>().map_err(|e| e.to_string())
}

fn parse_perturbation(s: &str) -> Result<Perturbation, String> {
    let (factor, rest) = s.split_once('=').ok_or("expected factor=delta[:unit]")?;
    let (delta, unit) = match rest.split_once(':') {
        Some((d, u)) => (d, Some(u.to_string())),
        None => (rest, None),
    };
    let delta: f64 = delta.trim().parse().map_err(|e| format!("bad delta `{delta}`: {e}"))?;
    Ok(Perturbation { factor: factor.trim().to_string(), delta, unit })
}

/// A closed pipe (`| head`) ends output quietly.
fn print_json<T: serde::Serialize>(v: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(v)?;
    match writeln!(std::io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn read_batches(paths: &[PathBuf]) -> Result<Vec<ExtractionBatch>> {
    paths
        .iter()
        .map(|p| {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ExtractionBatch::from_json(&text).with_context(|| format!("parsing {}", p.display()))
        })
        .collect()
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let p = dir.join(name);
    fs::write(&p, contents).with_context(|| format!("writing {}", p.display()))
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let mut config = ServiceConfig::new(&cli.data_dir);
    config.backend = match cli.backend {
        BackendArg::Template => BackendChoice::Template,
        BackendArg::Remote => BackendChoice::Remote,
    };
    config.ablation = Ablation { no_litkg: cli.no_litkg, raw_logs: cli.raw_logs };

    if let Command::SynthFleet { out, seed, drives } = &cli.command {
        let fleet = generate_fleet(&FleetSpec { seed: *seed, drives: *drives, ..FleetSpec::default() });
        fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
        write_file(out, "telemetry.csv", &fleet.telemetry_csv())?;
        write_file(out, "failures.csv", &fleet.failures_csv())?;
        println!("wrote {} drives ({} planted failures) to {}", fleet.series.len(), fleet.planted().len(), out.display());
        return Ok(());
    }
    if let Command::Serve { listen, followup_interval } = &cli.command {
        config.listen = *listen;
        config.followup_interval_secs = *followup_interval;
    }
    let engine = Engine::open(config).context("opening workspace")?;

    match cli.command {
        Command::Litkg(LitkgCommand::Build { collection, batches }) => {
            print_json(&engine.build_literature(&read_batches(&batches)?, &collection)?)?;
        }
        Command::Litkg(LitkgCommand::Validate { collection, batches }) => {
            for out in engine.validate_batches(&read_batches(&batches)?, &collection)? {
                println!("accepted {} / rejected {}", out.report.accepted.len(), out.report.rejected.len());
                for r in &out.report.rejected {
                    println!("  {} {}: {}", r.claim.id, r.reason.as_str(), r.detail);
                }
                for w in &out.warnings {
                    println!("  warning: {w}");
                }
            }
        }
        Command::Litkg(LitkgCommand::Merge) => {
            let g = engine.merge_literature()?;
            println!("global literature graph: {} nodes, {} edges", g.node_count(), g.edge_count());
        }
        Command::Taxonomy(TaxonomyCommand::Propose { name, definition, parent, source }) => {
            print_json(&engine.propose_concept(&name, &definition, &parent, &source)?)?;
        }
        Command::Taxonomy(TaxonomyCommand::Approve { id }) => {
            println!("taxonomy version {}", engine.approve_concept(&id)?);
        }
        Command::Taxonomy(TaxonomyCommand::List) => print_json(&engine.list_proposals()?)?,
        Command::Ingest { telemetry, labels } => {
            let csv = fs::read_to_string(&telemetry).with_context(|| format!("reading {}", telemetry.display()))?;
            let report = engine.ingest_telemetry(&csv)?;
            println!("ingested {} rows for {} drives", report.rows, report.drives.len());
            for w in &report.warnings {
                println!("  warning: {w}");
            }
            if let Some(l) = labels {
                let csv = fs::read_to_string(&l).with_context(|| format!("reading {}", l.display()))?;
                println!("stored {} failure labels", engine.load_failure_labels(&csv)?);
            }
        }
        Command::Frames(f) => {
            let windows = engine.emit_frames(f.set().as_ref())?;
            println!("emitted frames for {} windows", windows.len());
        }
        Command::Materialize(f) => {
            let windows = engine.materialize(f.set().as_ref())?;
            for w in &windows {
                println!("{:<8} {} coverage={:.3} weight={}", format!("{:?}", w.state).to_lowercase(), w.tag, w.coverage,
                    w.weight.map(|x| format!("{x:.3}")).unwrap_or_else(|| "-".into()));
            }
        }
        Command::Query(q) => {
            let scope = if let Some(w) = q.window {
                Scope::Window(w)
            } else if q.all {
                Scope::Cohort(engine.kept_windows()?)
            } else if !q.cohort.is_empty() {
                Scope::Cohort(q.cohort)
            } else {
                bail!("give --window, --cohort or --all");
            };
            let res = engine.analyze(AnalyzeRequest {
                kind: q.kind,
                question: q.question,
                scope,
                perturbations: q.perturbations,
            })?;
            if q.json {
                print_json(&res)?;
            } else {
                print!("{}", res.response.text);
                if !res.response.text.ends_with('\n') {
                    println!();
                }
                println!("[audit {} | backend {} | {} evidence items]", res.record_id, res.response.backend, res.evidence.len());
            }
        }
        Command::Eval { references, out, question } => {
            let references: BTreeMap<String, String> = match references {
                Some(p) => serde_json::from_str(&fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?)
                    .with_context(|| format!("parsing {}", p.display()))?,
                None => BTreeMap::new(),
            };
            let run = engine.evaluate(&EvalOptions { question, references, windows: None })?;
            print!("{}", run.report.to_table());
            println!("variant: {}; dropped by coverage gating: {}", run.variant, run.dropped.len());
            if let Some(dir) = out {
                fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
                write_file(&dir, "metrics.json", &run.report.to_json())?;
                write_file(&dir, "metrics.txt", &run.report.to_table())?;
                write_file(&dir, "per_window.csv", &run.report.to_csv()?)?;
            }
        }
        Command::Replay { key, seq } => {
            let keys = match key {
                Some(k) => vec![k],
                None => engine.audit().keys()?,
            };
            let mut differing = 0;
            for k in keys {
                for rec in engine.audit_records(&k)? {
                    if seq.is_some_and(|s| s != rec.sequence) {
                        continue;
                    }
                    let r = ssdkg::engine::replay_record(&rec)?;
                    let how = if r.reexecuted { "re-executed" } else { "stored" };
                    println!("{} {} ({how})", r.record_id, if r.identical { "identical" } else { "DIFFERS" });
                    differing += usize::from(!r.identical);
                }
            }
            if differing > 0 {
                bail!("{differing} replayed answers differ from the audit trail");
            }
        }
        Command::Serve { .. } => {
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(ssdkg::server::serve(Arc::new(engine)))?;
        }
        Command::SynthFleet { .. } => unreachable!("handled before opening the workspace"),
    }
    Ok(())
}
