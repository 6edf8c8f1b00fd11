use std::path::PathBuf;
use std::sync::atomic::AtomicUsize;
use std::sync::Arc;

use anyhow::Context;
use clap::Parser;
use keyauth_server::{http, KeyAuthService, ServerConfig};
use tracing_subscriber::EnvFilter;

/// KeyAuth public-key authentication daemon.
#[derive(Debug, Parser)]
#[command(name = "keyauthd", version)]
struct Args {
    /// TOML configuration file; KEYAUTH_* environment variables override it.
    #[arg(long, short, env = "KEYAUTH_CONFIG")]
    config: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
        .with_writer(std::io::stderr)
        .init();

    let args = Args::parse();
    let config = ServerConfig::load(args.config.as_deref()).context("loading configuration")?;
    let listen = config.listen_address;
    let service = tokio::task::spawn_blocking(move || KeyAuthService::open(config))
        .await?
        .context("starting service")?;
    tracing::info!(
        fingerprint = %service.server_fingerprint(),
        data_dir = %service.config().data_dir.display(),
        registration = ?service.config().registration_mode,
        "server key loaded"
    );

    let listener = tokio::net::TcpListener::bind(listen)
        .await
        .with_context(|| format!("binding {listen}"))?;
    tracing::info!(address = %listener.local_addr()?, "keyauthd listening");

    let shutdown = async {
        let _ = tokio::signal::ctrl_c().await;
        tracing::info!("shutting down");
    };
    http::serve(Arc::new(service), listener, Arc::new(AtomicUsize::new(0)), shutdown).await?;
    Ok(())
}
