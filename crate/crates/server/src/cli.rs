//! Command-line interface. `serve` runs the service; the other commands are
//! thin HTTP clients of a running server.
//!
//! Exit codes: 0 success, 1 other failure, 2 validation error, 3 storage
//! failure, 4 server unreachable. On failure one line is printed to stderr:
//! `error code=<code> status=<http status or 0> message=<json string>`.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use mindexam_core::time::{Clock, SystemClock};
use mindexam_core::{FileStore, Gateway, SessionEngine, TraceStore};
use reqwest::{Method, StatusCode};
use serde_json::Value;

use crate::api::{self, AppState};
use crate::config::ServerConfig;

pub const EXIT_OTHER: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_STORAGE: i32 = 3;
pub const EXIT_NETWORK: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "mindexam",
    version,
    about = "Proctored open-book exams with traced AI use"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, clap::Args)]
pub struct ClientArgs {
    /// Server base URL.
    #[arg(long, env = "MINDEXAM_SERVER", default_value = "http://127.0.0.1:8080")]
    pub server: String,
    /// Instructor bearer token.
    #[arg(long, env = "MINDEXAM_TOKEN", hide_env_values = true)]
    pub token: String,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        config: PathBuf,
        /// Overrides the configured bind address's port.
        #[arg(long)]
        port: Option<u16>,
        /// Overrides the configured data directory.
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Validate and register an exam from a JSON or TOML file.
    CreateExam {
        file: PathBuf,
        #[command(flatten)]
        client: ClientArgs,
    },
    /// Issue secure links for an exam's enrolled students.
    IssueLinks {
        exam_id: String,
        #[command(flatten)]
        client: ClientArgs,
    },
    /// Download a session's trace document.
    ExportTrace {
        session_id: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        client: ClientArgs,
    },
    /// Download an exam's score report as TSV.
    ScoreReport {
        exam_id: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        client: ClientArgs,
    },
}

/// A failed command, printed as one line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub exit: i32,
    pub code: String,
    pub status: u16,
    pub message: String,
}

impl Failure {
    fn new(exit: i32, code: &str, status: u16, message: impl Into<String>) -> Self {
        Self {
            exit,
            code: code.to_owned(),
            status,
            message: message.into(),
        }
    }

    pub fn line(&self) -> String {
        format!(
            "error code={} status={} message={}",
            self.code,
            self.status,
            Value::String(self.message.clone())
        )
    }

    /// From an error response of the API.
    fn from_response(status: StatusCode, body: &str) -> Self {
        let parsed: Option<Value> = serde_json::from_str(body).ok();
        let err = parsed.as_ref().and_then(|v| v.get("error"));
        let code = err
            .and_then(|e| e.get("code"))
            .and_then(Value::as_str)
            .unwrap_or("http_error")
            .to_owned();
        let mut message = err
            .and_then(|e| e.get("message"))
            .and_then(Value::as_str)
            .map(str::to_owned)
            .unwrap_or_else(|| body.trim().to_owned());
        if let Some(details) = err.and_then(|e| e.get("details")) {
            message = format!("{message} {details}");
        }
        let exit = match status.as_u16() {
            422 => EXIT_VALIDATION,
            500..=599 => EXIT_STORAGE,
            _ => EXIT_OTHER,
        };
        Self {
            exit,
            code,
            status: status.as_u16(),
            message,
        }
    }
}

/// Runs a parsed command, returning the process exit code.
pub async fn run(cli: Cli) -> i32 {
    let result = match cli.command {
        Command::Serve {
            config,
            port,
            data_dir,
        } => serve(&config, port, data_dir).await,
        Command::CreateExam { file, client } => create_exam(&client, &file).await,
        Command::IssueLinks { exam_id, client } => {
            let path = format!("/exams/{exam_id}/links");
            request(
                &client,
                Method::POST,
                &path,
                Some(("application/json", b"{}".to_vec())),
            )
            .await
            .and_then(|body| print_output(&body, None))
        }
        Command::ExportTrace {
            session_id,
            out,
            client,
        } => {
            let path = format!("/sessions/{session_id}/trace?format=ndjson");
            match request(&client, Method::GET, &path, None).await {
                Ok(body) => print_output(&body, out.as_deref()),
                Err(e) => Err(e),
            }
        }
        Command::ScoreReport {
            exam_id,
            out,
            client,
        } => {
            let path = format!("/exams/{exam_id}/analytics?format=tsv");
            match request(&client, Method::GET, &path, None).await {
                Ok(body) => print_output(&body, out.as_deref()),
                Err(e) => Err(e),
            }
        }
    };
    match result {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("{}", f.line());
            f.exit
        }
    }
}

fn print_output(body: &[u8], out: Option<&Path>) -> Result<(), Failure> {
    match out {
        Some(path) => std::fs::write(path, body).map_err(|e| {
            Failure::new(
                EXIT_STORAGE,
                "write_failed",
                0,
                format!("{}: {e}", path.display()),
            )
        }),
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(body)
                .and_then(|_| {
                    if body.ends_with(b"\n") {
                        Ok(())
                    } else {
                        stdout.write_all(b"\n")
                    }
                })
                .map_err(|e| Failure::new(EXIT_OTHER, "write_failed", 0, e.to_string()))
        }
    }
}

async fn request(
    client: &ClientArgs,
    method: Method,
    path: &str,
    body: Option<(&str, Vec<u8>)>,
) -> Result<Vec<u8>, Failure> {
    let url = format!("{}{}", client.server.trim_end_matches('/'), path);
    let mut req = reqwest::Client::new()
        .request(method, &url)
        .bearer_auth(&client.token);
    if let Some((content_type, bytes)) = body {
        req = req
            .header(reqwest::header::CONTENT_TYPE, content_type)
            .body(bytes);
    }
    let resp = req
        .send()
        .await
        .map_err(|e| Failure::new(EXIT_NETWORK, "unreachable", 0, format!("{url}: {e}")))?;
    let status = resp.status();
    let bytes = resp
        .bytes()
        .await
        .map_err(|e| Failure::new(EXIT_NETWORK, "unreachable", 0, format!("{url}: {e}")))?;
    if status.is_success() {
        Ok(bytes.to_vec())
    } else {
        Err(Failure::from_response(
            status,
            &String::from_utf8_lossy(&bytes),
        ))
    }
}

/// Reads an exam file; `.toml` files are converted to the JSON document form.
pub fn read_exam_file(file: &Path) -> Result<Value, Failure> {
    let text = std::fs::read_to_string(file).map_err(|e| {
        Failure::new(
            EXIT_OTHER,
            "read_failed",
            0,
            format!("{}: {e}", file.display()),
        )
    })?;
    let is_toml = file
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("toml"));
    if is_toml {
        let v: toml::Value = toml::from_str(&text).map_err(|e| {
            Failure::new(
                EXIT_VALIDATION,
                "invalid_file",
                0,
                format!("{}: {e}", file.display()),
            )
        })?;
        serde_json::to_value(v)
            .map_err(|e| Failure::new(EXIT_VALIDATION, "invalid_file", 0, e.to_string()))
    } else {
        serde_json::from_str(&text).map_err(|e| {
            Failure::new(
                EXIT_VALIDATION,
                "invalid_file",
                0,
                format!("{}: {e}", file.display()),
            )
        })
    }
}

async fn create_exam(client: &ClientArgs, file: &Path) -> Result<(), Failure> {
    let doc = read_exam_file(file)?;
    let body = serde_json::to_vec(&doc)
        .map_err(|e| Failure::new(EXIT_OTHER, "invalid_file", 0, e.to_string()))?;
    let resp = request(
        client,
        Method::POST,
        "/exams",
        Some(("application/json", body)),
    )
    .await?;
    print_output(&resp, None)
}

/// Builds the application state for a config and store.
pub fn build_state(
    cfg: &ServerConfig,
    store: Arc<dyn TraceStore>,
    clock: Arc<dyn Clock>,
) -> Result<Arc<AppState>, mindexam_core::SessionError> {
    let providers = cfg.providers(|var| std::env::var(var).ok());
    let engine = SessionEngine::new(store, Gateway::new(cfg.gateway()), providers)?;
    Ok(Arc::new(AppState::new(
        Arc::new(engine),
        clock,
        cfg.instructor_tokens(),
        cfg.base_url.clone(),
    )?))
}

async fn serve(config: &Path, port: Option<u16>, data_dir: Option<PathBuf>) -> Result<(), Failure> {
    let mut cfg = ServerConfig::load(config)
        .map_err(|e| Failure::new(EXIT_VALIDATION, "invalid_config", 0, e.to_string()))?;
    if let Some(dir) = data_dir {
        cfg.data_dir = dir;
    }
    let mut bind = cfg.bind.clone();
    if let Some(port) = port {
        let host = bind
            .rsplit_once(':')
            .map(|(h, _)| h.to_owned())
            .unwrap_or(bind.clone());
        bind = format!("{host}:{port}");
    }
    let store = FileStore::open(&cfg.data_dir)
        .map_err(|e| Failure::new(EXIT_STORAGE, "storage_failure", 0, e.to_string()))?;
    let state = build_state(&cfg, Arc::new(store), Arc::new(SystemClock))
        .map_err(|e| Failure::new(EXIT_STORAGE, e.code(), 0, e.to_string()))?;
    let listener = tokio::net::TcpListener::bind(&bind)
        .await
        .map_err(|e| Failure::new(EXIT_NETWORK, "bind_failed", 0, format!("{bind}: {e}")))?;
    tracing::info!(%bind, data_dir = %cfg.data_dir.display(), "listening");
    axum::serve(listener, api::router(state))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
        .map_err(|e| Failure::new(EXIT_OTHER, "serve_failed", 0, e.to_string()))
}
