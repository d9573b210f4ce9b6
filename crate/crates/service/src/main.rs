use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::{Context, Result};
use bandit_design_service::{router, store::JobStore};
use clap::Parser;

/// Serves design-optimization jobs over HTTP.
#[derive(Parser)]
#[command(name = "bandit-design-service", version, about)]
struct Args {
    #[arg(long, default_value_t = 8080, env = "BANDIT_DESIGN_PORT")]
    port: u16,
    /// Address to bind. The service has no authentication; keep it local.
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Directory for job records.
    #[arg(
        long,
        default_value = "bandit-design-data",
        env = "BANDIT_DESIGN_DATA_DIR"
    )]
    data_dir: PathBuf,
}

#[tokio::main]
async fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let args = Args::parse();
    let store = Arc::new(JobStore::open(&args.data_dir)?);
    let addr: SocketAddr = format!("{}:{}", args.host, args.port)
        .parse()
        .context("parsing --host/--port")?;
    let listener = tokio::net::TcpListener::bind(addr)
        .await
        .with_context(|| format!("binding {addr}"))?;
    log::info!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(store)).await?;
    Ok(())
}
