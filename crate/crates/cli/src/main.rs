//! `sweeper`: ask questions offline, dump view grids, replay transcripts
//! and run the HTTP service.
//!
//! Exit codes: 0 success, 1 pipeline error, 2 usage error.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sweeper_core::assets::{compute_aabb, export_glb, export_obj};
use sweeper_core::backends::{BackendConfig, ENV_BACKEND_URL, ENV_MOCK};
use sweeper_core::renderer::render_grid;
use sweeper_core::session::{
    create_session, replay_transcript, Cell, ModelSource, SessionData, SessionError, SessionOptions, TableRow,
    TRANSCRIPT_FILE,
};
use sweeper_core::viewgrid::build_view_grid;
use sweeper_core::{fixtures, session};

#[derive(Parser)]
#[command(name = "sweeper", version, about = "Question-conditioned view selection and answering over 3D models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Answer questions about 1 to 4 models and print the table rows.
    Ask(AskArgs),
    /// Render the 42-view grid of a model: PNGs, depth PNGs and grid.json.
    Render {
        #[arg(long)]
        model: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Re-run a recorded transcript and compare every output.
    Replay {
        #[arg(long)]
        transcript: PathBuf,
        /// Directory that relative model paths in the transcript resolve against.
        #[arg(long)]
        base: Option<PathBuf>,
    },
    /// Write a built-in scene (desk:N, counting:N, cube, sphere) as OBJ or GLB.
    Fixture {
        #[arg(long)]
        name: String,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Args)]
struct AskArgs {
    /// Mesh paths (.obj, .glb) or fixture:<name>.
    #[arg(long, num_args = 1.., required = true)]
    models: Vec<String>,
    /// Repeat for follow-up questions; each adds a row.
    #[arg(long, required = true)]
    question: Vec<String>,
    #[arg(long, env = ENV_MOCK, action = clap::ArgAction::SetTrue, value_parser = clap::builder::BoolishValueParser::new())]
    mock: bool,
    /// Base URL of a server implementing the backend protocol.
    #[arg(long, env = ENV_BACKEND_URL)]
    backend: Option<String>,
    /// Write the selection traces of every row as JSON.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Write the backend transcript (JSON lines).
    #[arg(long)]
    transcript: Option<PathBuf>,
    /// Keep the session directory under this store.
    #[arg(long)]
    store: Option<PathBuf>,
}

enum Failure {
    Usage(String),
    Pipeline(String),
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Pipeline(e.to_string())
    }
}

impl From<SessionError> for Failure {
    fn from(e: SessionError) -> Self {
        match e {
            SessionError::TooManyModels(_) | SessionError::NoModels | SessionError::EmptyQuestion => {
                Failure::Usage(e.to_string())
            }
            other => Failure::Pipeline(other.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Ask(args) => ask(args),
        Command::Render { model, out } => render(&model, &out),
        Command::Serve { config } => serve(config.as_deref()),
        Command::Replay { transcript, base } => replay(&transcript, base.as_deref()),
        Command::Fixture { name, out } => fixture(&name, &out),
    };
    match result {
        Ok(code) => code,
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Pipeline(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
    }
}

/// Plain rows, one field per line, so output reads well through a screen
/// reader and diffs cleanly.
fn print_row(row: &TableRow, data: &SessionData) {
    println!("Question: {}", row.question);
    for (cell, m) in row.cells.iter().zip(&data.models) {
        println!("{}: {}", m.label, cell.display());
    }
    if data.comparison_enabled() {
        let show = |v: &Option<String>| v.clone().unwrap_or_else(|| "not available".into());
        println!("Similarities: {}", show(&row.similarities));
        println!("Differences: {}", show(&row.differences));
    }
}

fn ask(args: AskArgs) -> Result<ExitCode, Failure> {
    let backend = match (&args.mock, &args.backend) {
        (true, _) => BackendConfig::Mock,
        (false, Some(url)) => BackendConfig::remote(url),
        (false, None) => {
            return Err(Failure::Usage(format!("no backend: pass --mock or --backend URL (or set {ENV_MOCK} / {ENV_BACKEND_URL})")))
        }
    };
    backend.validate().map_err(|e| Failure::Usage(format!("--backend: {e}")))?;
    let sources: Vec<ModelSource> = args.models.iter().map(|m| ModelSource::parse(m)).collect();
    let scratch = tempfile::tempdir()?;
    let store = args.store.clone().unwrap_or_else(|| scratch.path().to_path_buf());
    // Mock runs are reproducible down to the session id.
    let options = if backend.is_mock() { SessionOptions::frozen(0) } else { SessionOptions::now() };
    let mut options = options.with_store(store);
    options.save_views = args.store.is_some();

    let mut s = create_session(&sources, &backend, options)?;
    let mut failed = false;
    for (k, q) in args.question.iter().enumerate() {
        let row = s.ask(q)?.clone();
        if k > 0 {
            println!();
        }
        print_row(&row, &s.data);
        failed |= row.cells.iter().any(|c| matches!(c, Cell::Error { .. }));
    }
    if let Some(path) = &args.trace {
        let text = serde_json::to_string_pretty(&s.data.traces).expect("traces serialize");
        fs::write(path, text + "\n")?;
    }
    if let Some(path) = &args.transcript {
        let dir = s.dir().expect("session has a store");
        fs::copy(dir.join(TRANSCRIPT_FILE), path)?;
    }
    if let (Some(_), Some(dir)) = (&args.store, s.dir()) {
        eprintln!("session stored in {}", dir.display());
    }
    Ok(if failed { ExitCode::from(1) } else { ExitCode::SUCCESS })
}

fn render(model: &str, out: &Path) -> Result<ExitCode, Failure> {
    let mesh = ModelSource::parse(model).load()?;
    let aabb = compute_aabb(&mesh).map_err(|e| Failure::Pipeline(e.to_string()))?;
    let grid = build_view_grid(&aabb).map_err(|e| Failure::Pipeline(e.to_string()))?;
    fs::create_dir_all(out)?;
    for v in render_grid(&mesh, &grid.poses) {
        v.save_png(&out.join(format!("view-{:02}.png", v.index))).map_err(|e| Failure::Pipeline(e.to_string()))?;
        v.save_depth_png(&out.join(format!("depth-{:02}.png", v.index))).map_err(|e| Failure::Pipeline(e.to_string()))?;
    }
    fs::write(out.join("grid.json"), grid.to_json())?;
    println!("{} views of {} written to {}", grid.poses.len(), mesh.id(), out.display());
    Ok(ExitCode::SUCCESS)
}

fn serve(config: Option<&Path>) -> Result<ExitCode, Failure> {
    let _ = tracing_subscriber::fmt()
        .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .try_init();
    let config = sweeper_service::ServiceConfig::load(config).map_err(Failure::Usage)?;
    let runtime = tokio::runtime::Runtime::new()?;
    runtime.block_on(sweeper_service::serve(config))?;
    Ok(ExitCode::SUCCESS)
}

fn replay(transcript: &Path, base: Option<&Path>) -> Result<ExitCode, Failure> {
    let text = fs::read_to_string(transcript).map_err(|e| Failure::Usage(format!("--transcript {}: {e}", transcript.display())))?;
    let base = base.map(Path::to_path_buf).or_else(|| transcript.parent().map(Path::to_path_buf));
    let report = replay_transcript(&text, base.as_deref())?;
    if report.identical() {
        println!("identical: {} rows, {} exchanges", report.rows, report.exchanges);
        Ok(ExitCode::SUCCESS)
    } else {
        println!("differs: {} rows, {} exchanges", report.rows, report.exchanges);
        for m in &report.mismatches {
            println!("  {m}");
        }
        Ok(ExitCode::from(1))
    }
}

fn fixture(name: &str, out: &Path) -> Result<ExitCode, Failure> {
    let mesh = fixtures::by_name(name).ok_or_else(|| Failure::Usage(format!("--name: unknown fixture {name}")))?;
    let ext = out.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("obj") => fs::write(out, export_obj(&mesh))?,
        Some("glb") => fs::write(out, export_glb(&mesh))?,
        _ => return Err(Failure::Usage(format!("--out: expected a .obj or .glb path, got {}", out.display()))),
    }
    println!("{} ({} triangles, digest {}) written to {}", name, mesh.triangles().len(), session::mesh_digest(&mesh), out.display());
    Ok(ExitCode::SUCCESS)
}
