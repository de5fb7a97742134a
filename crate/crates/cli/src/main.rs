use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use lens_core::conventions::profile_repository_with;
use lens_core::explain::{BackendConfig, BackendKind, Engine};
use lens_core::index::{scan_repository, ScanOptions};
use lens_core::ingest::{build_timeline, parse_session_log, AgentSession, DirSnapshot};
use lens_service::{ServeError, ServiceConfig};
use serde_json::{json, Value};

/// Explain what an AI coding agent changed, and why.
#[derive(Parser)]
#[command(name = "lens", version)]
struct Cli {
    /// Indent JSON output for people.
    #[arg(long, global = true, env = "LENS_PRETTY")]
    pretty: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Backend {
    Template,
    Remote,
}

impl From<Backend> for BackendKind {
    fn from(b: Backend) -> Self {
        match b {
            Backend::Template => BackendKind::Template,
            Backend::Remote => BackendKind::Remote,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Index a repository and print its snapshot id.
    Index {
        #[arg(long, env = "LENS_REPO")]
        repo: PathBuf,
        /// Write the index document here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Extra ignore globs on top of .lensignore.
        #[arg(long = "ignore")]
        ignore: Vec<String>,
    },
    /// Print the per-file modification timeline of a session.
    Ingest {
        #[arg(long, env = "LENS_SESSION")]
        session: PathBuf,
        /// Repository after the session; defaults to the log's repo_root.
        #[arg(long, env = "LENS_REPO")]
        repo: Option<PathBuf>,
    },
    /// Print a Level 1 or Level 2 explanation.
    Explain {
        #[arg(long, env = "LENS_SESSION")]
        session: PathBuf,
        #[arg(long, env = "LENS_REPO")]
        repo: Option<PathBuf>,
        #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u8).range(1..=2))]
        level: u8,
        /// Order index of the change to explain at level 2.
        #[arg(long, required_if_eq("level", "2"))]
        change: Option<usize>,
        #[arg(long, env = "LENS_BACKEND")]
        backend: Option<Backend>,
        /// Backend configuration file (TOML).
        #[arg(long, env = "LENS_CONFIG")]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the HTTP API until interrupted.
    Serve {
        #[arg(long, env = "LENS_CONFIG")]
        config: Option<PathBuf>,
        #[arg(long, env = "LENS_PORT")]
        port: Option<u16>,
        #[arg(long, env = "LENS_STORE_DIR")]
        store_dir: Option<PathBuf>,
        #[arg(long, env = "LENS_BACKEND")]
        backend: Option<Backend>,
    },
}

/// A failure with its exit code: 1 usage, 2 io, 3 bad data.
struct Failure {
    exit: u8,
    code: String,
    message: String,
}

impl Failure {
    fn new(exit: u8, code: &str, message: impl Into<String>) -> Self {
        Failure {
            exit,
            code: code.into(),
            message: message.into(),
        }
    }
}

impl From<lens_core::Error> for Failure {
    fn from(e: lens_core::Error) -> Self {
        let exit = if matches!(e, lens_core::Error::Io { .. }) {
            2
        } else {
            3
        };
        Failure::new(exit, e.code(), e.to_string())
    }
}

impl From<ServeError> for Failure {
    fn from(e: ServeError) -> Self {
        match e {
            ServeError::Core(core) => core.into(),
            ServeError::Bind { .. } | ServeError::Server(_) => {
                Failure::new(2, "io_error", e.to_string())
            }
            ServeError::Store(_) => Failure::new(2, "store_error", e.to_string()),
        }
    }
}

fn io_failure(path: &Path, e: std::io::Error) -> Failure {
    Failure::from(lens_core::Error::io(path, e))
}

fn render(value: &Value, pretty: bool) -> String {
    if pretty {
        serde_json::to_string_pretty(value)
    } else {
        serde_json::to_string(value)
    }
    .expect("json values serialize")
}

fn emit(value: &Value, pretty: bool, out: Option<&Path>) -> Result<(), Failure> {
    let text = render(value, pretty);
    match out {
        Some(path) => std::fs::write(path, text + "\n").map_err(|e| io_failure(path, e)),
        None => {
            println!("{}", text);
            Ok(())
        }
    }
}

fn load_session(path: &Path, repo: Option<PathBuf>) -> Result<(AgentSession, PathBuf), Failure> {
    let raw = std::fs::read(path).map_err(|e| io_failure(path, e))?;
    let session = parse_session_log(&raw)?;
    let repo = repo.unwrap_or_else(|| session.repo_root.clone());
    Ok((session, repo))
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("documents serialize")
}

fn run(cli: Cli) -> Result<(), Failure> {
    let pretty = cli.pretty;
    match cli.command {
        Command::Index { repo, out, ignore } => {
            let options = ScanOptions {
                ignore,
                ..ScanOptions::default()
            };
            let index = scan_repository(&repo, &options)?;
            match out {
                Some(path) => {
                    std::fs::write(&path, index.to_json()).map_err(|e| io_failure(&path, e))?;
                    let summary = json!({
                        "snapshot_id": index.snapshot_id(),
                        "artifacts": index.artifacts().len(),
                        "symbols": index.symbols().len(),
                        "out": path,
                    });
                    emit(&summary, pretty, None)
                }
                None => emit(&to_value(index.document()), pretty, None),
            }
        }
        Command::Ingest { session, repo } => {
            let (session, repo) = load_session(&session, repo)?;
            let timeline = build_timeline(&session, &DirSnapshot::new(&repo))?;
            emit(&to_value(&timeline), pretty, None)
        }
        Command::Explain {
            session,
            repo,
            level,
            change,
            backend,
            config,
            out,
        } => {
            let mut backend_config = match &config {
                Some(path) => {
                    let text = std::fs::read_to_string(path).map_err(|e| io_failure(path, e))?;
                    toml::from_str::<BackendConfig>(&text).map_err(|e| {
                        Failure::new(3, "validation_error", format!("{}: {}", path.display(), e))
                    })?
                }
                None => BackendConfig::default(),
            };
            if let Some(b) = backend {
                backend_config.backend = b.into();
            }
            let (session, repo) = load_session(&session, repo)?;
            let index = scan_repository(&repo, &ScanOptions::default())?;
            let timeline = build_timeline(&session, &DirSnapshot::new(&repo))?;
            let engine = Engine::new(
                backend_config.build()?,
                lens_core::explain::EngineConfig {
                    budget: backend_config.budget,
                    max_repairs: backend_config.max_repairs,
                    ..Default::default()
                },
            );
            let doc = if level == 1 {
                let doc = engine
                    .level1(&session.task_prompt, &timeline, &index, &mut |_| {})
                    .map_err(lens_core::Error::from)?;
                to_value(&doc)
            } else {
                let i = change.expect("clap requires --change at level 2");
                let modification = timeline.get(i).ok_or_else(|| {
                    lens_core::Error::Range(format!(
                        "change {} out of range, session has {}",
                        i,
                        timeline.len()
                    ))
                })?;
                let profile = profile_repository_with(&index, &engine.config().conventions);
                to_value(&engine.level2(&session.task_prompt, modification, &index, &profile)?)
            };
            emit(&doc, pretty, out.as_deref())
        }
        Command::Serve {
            config,
            port,
            store_dir,
            backend,
        } => {
            let mut config = ServiceConfig::load(config.as_deref())
                .map_err(|e| Failure::new(3, "config_error", e.to_string()))?;
            if let Some(p) = port {
                config.port = p;
            }
            if let Some(d) = store_dir {
                config.store_dir = d;
            }
            if let Some(b) = backend {
                config.backend.backend = b.into();
            }
            serve(config, pretty)
        }
    }
}

async fn shutdown_signal() {
    let ctrl_c = async {
        let _ = tokio::signal::ctrl_c().await;
    };
    #[cfg(unix)]
    let term = async {
        match tokio::signal::unix::signal(tokio::signal::unix::SignalKind::terminate()) {
            Ok(mut s) => {
                s.recv().await;
            }
            Err(_) => std::future::pending().await,
        }
    };
    #[cfg(not(unix))]
    let term = std::future::pending::<()>();
    tokio::select! {
        _ = ctrl_c => {},
        _ = term => {},
    }
}

fn serve(config: ServiceConfig, pretty: bool) -> Result<(), Failure> {
    let runtime =
        tokio::runtime::Runtime::new().map_err(|e| Failure::new(2, "io_error", e.to_string()))?;
    runtime.block_on(async {
        let listener = lens_service::bind(&config).await?;
        let registry = lens_service::open_registry(&config)?;
        let addr = listener
            .local_addr()
            .map_err(|e| Failure::new(2, "io_error", e.to_string()))?;
        emit(
            &json!({"listening": addr.to_string(), "store_dir": config.store_dir}),
            pretty,
            None,
        )?;
        lens_service::serve(listener, registry, shutdown_signal()).await?;
        Ok(())
    })
}

fn main() -> ExitCode {
    let filter = tracing_subscriber::EnvFilter::try_from_env("LENS_LOG")
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("off"));
    tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            // --help and --version
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let failure =
                json!({"error": {"code": "usage_error", "message": e.to_string().trim_end()}});
            eprintln!("{}", failure);
            return ExitCode::from(1);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!(
                "{}",
                json!({"error": {"code": f.code, "message": f.message}})
            );
            ExitCode::from(f.exit)
        }
    }
}
