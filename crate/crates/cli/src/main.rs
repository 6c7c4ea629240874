use clap::Parser;
use tracing_subscriber::EnvFilter;

fn main() {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_env("UALA_LOG").unwrap_or_else(|_| EnvFilter::new("warn")))
        .with_writer(std::io::stderr)
        .init();
    let cli = uala_cli::Cli::parse();
    if let Err(err) = uala_cli::run(cli) {
        eprintln!("error: {err:#}");
        std::process::exit(uala_cli::exit_code(&err));
    }
}
