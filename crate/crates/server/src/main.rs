use clap::Parser;
use mindexam::cli::{run, Cli};

#[tokio::main]
async fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| "mindexam=info".into()),
        )
        .with_writer(std::io::stderr)
        .init();
    let code = run(Cli::parse()).await;
    std::process::exit(code);
}
