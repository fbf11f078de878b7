//! `psafety`: simulate, monitor, ingest, review, build and query risk graphs,
//! and serve live sessions.
//!
//! Exit status: 0 success, 1 usage error, 2 bad input data, 3 runtime failure.

use std::fs;
use std::io::{self, Write};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use proactive_safety::config::ScenarioConfig;
use proactive_safety::graph::RiskGraph;
use proactive_safety::ingest::{self, review, Corpus, Extraction, Gazetteers};
use proactive_safety::monitor::{scan, write_alarms_csv, Severity};
use proactive_safety::query::{run_query, Query, Traversal};
use proactive_safety::scenario::{
    read_telemetry_csv, resolve_charts, run_samples, write_telemetry_csv,
};
use proactive_safety::{svg, Error};

#[derive(Debug, Parser)]
#[command(
    name = "psafety",
    version,
    about = "CSTR fault simulation, SPC monitoring and risk-graph queries"
)]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario and write telemetry CSV.
    Simulate(SimulateArgs),
    /// Scan telemetry with the configured control charts and write alarms CSV.
    Detect(DetectArgs),
    /// Parse a document corpus into candidate triples awaiting review.
    Ingest(IngestArgs),
    /// Apply a decision file to candidate triples.
    Review(ReviewArgs),
    /// Build a risk graph from reviewed candidates or a corpus plus decisions.
    BuildGraph(BuildArgs),
    /// Keyword query against a risk graph.
    Query(QueryArgs),
    /// Serve the session API.
    Serve(ServeArgs),
    /// Write SVG control charts and a telemetry chart.
    ExportChart(ChartArgs),
    /// Convert a graph file to GraphML or JSON.
    ExportGraph(ExportGraphArgs),
}

#[derive(Debug, Args)]
struct SimulateArgs {
    /// Scenario TOML.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    duration: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Add the feed_temp column.
    #[arg(long)]
    include_feed: bool,
}

#[derive(Debug, Args)]
struct DetectArgs {
    #[arg(long)]
    telemetry: PathBuf,
    /// Scenario TOML providing charts and the calibration run; the reference
    /// scenario when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write one SVG per chart into this directory.
    #[arg(long)]
    svg_dir: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct IngestArgs {
    #[arg(long)]
    corpus: PathBuf,
    /// Candidates JSON.
    #[arg(long)]
    out: PathBuf,
    /// Write an all-accept decision file to edit.
    #[arg(long)]
    template: Option<PathBuf>,
    /// Directory of gazetteer lists overriding the built-in ones.
    #[arg(long)]
    gazetteers: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ReviewArgs {
    #[arg(long)]
    candidates: PathBuf,
    #[arg(long)]
    decisions: PathBuf,
    /// Reviewed candidates JSON.
    #[arg(long)]
    out: PathBuf,
    /// Audit trail JSON.
    #[arg(long)]
    audit: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct BuildArgs {
    /// Reviewed candidates JSON.
    #[arg(long, conflicts_with = "corpus", required_unless_present = "corpus")]
    candidates: Option<PathBuf>,
    /// Corpus directory, ingested and reviewed in one go.
    #[arg(long)]
    corpus: Option<PathBuf>,
    /// Decision file for `--corpus`.
    #[arg(long, requires = "corpus")]
    review: Option<PathBuf>,
    #[arg(long, requires = "corpus")]
    gazetteers: Option<PathBuf>,
    /// Graph file.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Direction {
    Upstream,
    Downstream,
    Both,
}

#[derive(Debug, Args)]
struct QueryArgs {
    #[arg(long)]
    graph: PathBuf,
    /// Keyword phrase; repeat for several. All must match unless `--any`.
    #[arg(short, long = "keyword", required = true)]
    keywords: Vec<String>,
    #[arg(long, default_value_t = 4)]
    depth: usize,
    #[arg(long, value_enum, default_value = "both")]
    direction: Direction,
    #[arg(long)]
    any: bool,
    #[arg(long)]
    json: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ServeArgs {
    /// Default scenario for new sessions; the reference scenario when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    graph: Option<PathBuf>,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Pacing of the default scenario; 0 runs as fast as possible.
    #[arg(long)]
    ticks_per_second: Option<f64>,
}

#[derive(Debug, Args)]
struct ChartArgs {
    #[arg(long)]
    telemetry: PathBuf,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GraphFormat {
    Graphml,
    Json,
    Tsv,
}

#[derive(Debug, Args)]
struct ExportGraphArgs {
    #[arg(long)]
    graph: PathBuf,
    #[arg(long, value_enum)]
    format: GraphFormat,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure with its exit status.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::Domain(_)
            | Error::InvalidArgument(_)
            | Error::Config(_)
            | Error::Parse { .. }
            | Error::UnknownIds(_)
            | Error::Graph(_)
            | Error::Csv(_)
            | Error::Toml(_)
            | Error::Json(_) => 2,
            Error::Io(io) if io.kind() == io::ErrorKind::NotFound => 2,
            _ => 3,
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Error::Io(e).into()
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e).into()
    }
}

fn data_error(message: impl Into<String>) -> Failure {
    Failure {
        code: 2,
        message: message.into(),
    }
}

fn with_path(path: &Path) -> impl FnOnce(io::Error) -> Failure + '_ {
    move |e| {
        let code = if e.kind() == io::ErrorKind::NotFound {
            2
        } else {
            3
        };
        Failure {
            code,
            message: format!("{}: {e}", path.display()),
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(with_path(path))
}

fn write_output(path: Option<&Path>, bytes: &[u8]) -> Result<(), Failure> {
    match path {
        Some(p) => fs::write(p, bytes).map_err(with_path(p)),
        None => {
            io::stdout().write_all(bytes)?;
            Ok(())
        }
    }
}

fn load_config(path: Option<&Path>) -> Result<ScenarioConfig, Failure> {
    match path {
        Some(p) => ScenarioConfig::from_toml_str(&read(p)?)
            .map_err(|e| data_error(format!("{}: {e}", p.display()))),
        None => Ok(ScenarioConfig::reference()),
    }
}

fn load_graph(path: &Path) -> Result<RiskGraph, Failure> {
    RiskGraph::from_text(&read(path)?).map_err(|e| Failure::from(e).prefixed(path))
}

impl Failure {
    fn prefixed(mut self, path: &Path) -> Self {
        self.message = format!("{}: {}", path.display(), self.message);
        self
    }
}

fn gazetteers(dir: Option<&Path>) -> Result<Gazetteers, Failure> {
    Ok(match dir {
        Some(d) => Gazetteers::load_dir(d)?,
        None => Gazetteers::builtin(),
    })
}

fn read_samples(path: &Path) -> Result<Vec<proactive_safety::monitor::Sample>, Failure> {
    let text = read(path)?;
    if text.trim().is_empty() {
        log::warn!("{}: empty telemetry file", path.display());
        return Ok(Vec::new());
    }
    Ok(read_telemetry_csv(
        text.as_bytes(),
        &path.display().to_string(),
    )?)
}

fn simulate(a: SimulateArgs) -> Result<(), Failure> {
    let mut cfg = load_config(Some(&a.config))?;
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(d) = a.duration {
        cfg.duration = d;
    }
    let samples = run_samples(&cfg)?;
    let mut buf = Vec::new();
    write_telemetry_csv(&samples, &mut buf, a.include_feed)?;
    write_output(a.out.as_deref(), &buf)
}

fn detect(a: DetectArgs) -> Result<(), Failure> {
    let cfg = load_config(a.config.as_deref())?;
    let samples = read_samples(&a.telemetry)?;
    let charts = resolve_charts(&cfg)?;
    if !samples.is_empty() {
        for c in &charts {
            if samples.iter().all(|s| s.value(c.channel).is_none()) {
                log::warn!(
                    "telemetry has no {} column; its charts are idle",
                    c.channel.as_str()
                );
            }
        }
    }
    let events = scan(&samples, &charts)?;
    let mut buf = Vec::new();
    write_alarms_csv(&events, &mut buf)?;
    write_output(a.out.as_deref(), &buf)?;
    let first = events.iter().find(|e| e.severity == Severity::Alarm);
    eprintln!(
        "{} events, first alarm: {}",
        events.len(),
        first
            .map(|e| format!("t={} {} {}", e.t, e.channel.as_str(), e.chart.as_str()))
            .unwrap_or_else(|| "none".into())
    );
    if let Some(dir) = a.svg_dir {
        write_charts(&dir, &samples, &charts)?;
    }
    Ok(())
}

fn write_charts(
    dir: &Path,
    samples: &[proactive_safety::monitor::Sample],
    charts: &[proactive_safety::monitor::ChartConfig],
) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(with_path(dir))?;
    for c in charts {
        let name = format!(
            "{}_{}_{}.svg",
            c.channel.as_str(),
            c.kind.as_str(),
            c.window
        );
        let p = dir.join(name);
        fs::write(&p, svg::control_chart(samples, c)?).map_err(with_path(&p))?;
    }
    let p = dir.join("telemetry.svg");
    fs::write(&p, svg::telemetry_chart(samples)).map_err(with_path(&p))?;
    Ok(())
}

fn export_chart(a: ChartArgs) -> Result<(), Failure> {
    let cfg = load_config(a.config.as_deref())?;
    let samples = read_samples(&a.telemetry)?;
    write_charts(&a.out_dir, &samples, &resolve_charts(&cfg)?)
}

fn ingest_corpus(dir: &Path, gaz: &Gazetteers) -> Result<Extraction, Failure> {
    let corpus = Corpus::load(dir, gaz)?;
    if corpus.documents.is_empty() {
        return Err(data_error(format!(
            "{}: no HAZOP, log or inspection CSV files",
            dir.display()
        )));
    }
    Ok(corpus.extract(gaz))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(with_path(path))
}

fn read_extraction(path: &Path) -> Result<Extraction, Failure> {
    serde_json::from_str(&read(path)?).map_err(|e| data_error(format!("{}: {e}", path.display())))
}

fn ingest_cmd(a: IngestArgs) -> Result<(), Failure> {
    let gaz = gazetteers(a.gazetteers.as_deref())?;
    let x = ingest_corpus(&a.corpus, &gaz)?;
    write_json(&a.out, &x)?;
    if let Some(t) = a.template {
        fs::write(&t, review::review_template(&x.triples)).map_err(with_path(&t))?;
    }
    eprintln!(
        "{} entity mentions, {} candidate triples (pending review)",
        x.entities.len(),
        x.triples.len()
    );
    Ok(())
}

fn apply_decisions(x: &mut Extraction, path: &Path) -> Result<Vec<ingest::AuditEntry>, Failure> {
    let decisions = ingest::parse_review(&read(path)?, &path.display().to_string())?;
    Ok(ingest::apply_review(&mut x.triples, &decisions)?)
}

fn review_cmd(a: ReviewArgs) -> Result<(), Failure> {
    let mut x = read_extraction(&a.candidates)?;
    let audit = apply_decisions(&mut x, &a.decisions)?;
    write_json(&a.out, &x)?;
    if let Some(p) = a.audit {
        write_json(&p, &audit)?;
    }
    let pending = x
        .triples
        .iter()
        .filter(|t| t.status == ingest::CandidateStatus::Pending)
        .count();
    eprintln!(
        "{} decisions applied, {pending} candidates still pending",
        audit.len()
    );
    Ok(())
}

fn build_cmd(a: BuildArgs) -> Result<(), Failure> {
    let x = match (&a.candidates, &a.corpus) {
        (Some(c), _) => read_extraction(c)?,
        (None, Some(dir)) => {
            let gaz = gazetteers(a.gazetteers.as_deref())?;
            let mut x = ingest_corpus(dir, &gaz)?;
            if let Some(r) = &a.review {
                apply_decisions(&mut x, r)?;
            }
            x
        }
        (None, None) => unreachable!("clap requires one of --candidates, --corpus"),
    };
    let g = review::build_graph(&x)?;
    g.save(&a.out)?;
    let report = g.validate();
    if !report.is_sound() {
        log::warn!("graph validation: {report:?}");
    }
    let st = g.stats();
    eprintln!(
        "{} nodes, {} triples -> {}",
        g.node_count(),
        g.triple_count(),
        a.out.display()
    );
    log::debug!("{st:?}");
    Ok(())
}

fn query_cmd(a: QueryArgs) -> Result<(), Failure> {
    let g = load_graph(&a.graph)?;
    let direction = match a.direction {
        Direction::Upstream => Traversal::Upstream,
        Direction::Downstream => Traversal::Downstream,
        Direction::Both => Traversal::Both,
    };
    let q = Query::new(&a.keywords)?
        .with_depth(a.depth)
        .with_direction(direction)
        .with_match_any(a.any);
    let r = run_query(&g, &q)?;
    let text = if a.json {
        let mut s = serde_json::to_string_pretty(&r)?;
        s.push('\n');
        s
    } else {
        r.to_text()
    };
    write_output(a.out.as_deref(), text.as_bytes())
}

fn export_graph(a: ExportGraphArgs) -> Result<(), Failure> {
    let g = load_graph(&a.graph)?;
    let bytes = match a.format {
        GraphFormat::Tsv => g.to_text().into_bytes(),
        GraphFormat::Graphml => {
            let mut buf = Vec::new();
            g.write_graphml(&mut buf)?;
            buf
        }
        GraphFormat::Json => {
            let doc = serde_json::json!({
                "nodes": g.nodes().collect::<Vec<_>>(),
                "triples": g.triples().collect::<Vec<_>>(),
            });
            let mut s = serde_json::to_string_pretty(&doc)?;
            s.push('\n');
            s.into_bytes()
        }
    };
    write_output(a.out.as_deref(), &bytes)
}

fn serve_cmd(a: ServeArgs) -> Result<(), Failure> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(tps) = a.ticks_per_second {
        if !(tps.is_finite() && tps >= 0.0) {
            return Err(Failure {
                code: 1,
                message: "--ticks-per-second must be >= 0".into(),
            });
        }
        cfg.pacing.ticks_per_second = tps;
    }
    let graph = a.graph.as_deref().map(load_graph).transpose()?;
    let addr: SocketAddr = format!("{}:{}", a.host, a.port)
        .parse()
        .map_err(|e| Failure {
            code: 1,
            message: format!("bad address {}:{}: {e}", a.host, a.port),
        })?;
    let state = proactive_safety_server::AppState::new(cfg, graph);
    let rt = tokio::runtime::Runtime::new()?;
    rt.block_on(proactive_safety_server::serve(addr, state))
        .map_err(|e| Failure {
            code: 3,
            message: e.to_string(),
        })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Detect(a) => detect(a),
        Command::Ingest(a) => ingest_cmd(a),
        Command::Review(a) => review_cmd(a),
        Command::BuildGraph(a) => build_cmd(a),
        Command::Query(a) => query_cmd(a),
        Command::Serve(a) => serve_cmd(a),
        Command::ExportChart(a) => export_chart(a),
        Command::ExportGraph(a) => export_graph(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
