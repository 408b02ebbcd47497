use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use chrono::Utc;
use clap::{Parser, Subcommand};
use labelforge_api::auth::{create_account, AccountError};
use labelforge_api::store::{Store, StoreError};
use labelforge_api::{App, ServiceConfig};
use labelforge_core::Role;
use tracing_subscriber::EnvFilter;

/// Self-hosted data labeling for text classification.
#[derive(Debug, Parser)]
#[command(name = "labelforge", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the HTTP service. LABELFORGE_* variables override these flags.
    Serve {
        #[arg(long)]
        port: Option<u16>,
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Create an admin account and print its generated password. Run while
    /// the service is stopped.
    CreateAdmin {
        #[arg(long)]
        username: String,
        #[arg(long)]
        data_dir: Option<PathBuf>,
    },
    /// Print the version.
    Version,
}

fn config(port: Option<u16>, data_dir: Option<PathBuf>) -> anyhow::Result<ServiceConfig> {
    let mut config = ServiceConfig::default();
    if let Some(port) = port {
        config.port = port;
    }
    if let Some(dir) = data_dir {
        config.data_dir = dir;
    }
    let mut errors = config.apply_env(|k| std::env::var(k).ok()).err().unwrap_or_default();
    if let Err(more) = config.validate() {
        errors.extend(more);
    }
    if !errors.is_empty() {
        bail!("invalid configuration:\n  {}", errors.join("\n  "));
    }
    Ok(config)
}

fn create_admin(username: &str, data_dir: Option<PathBuf>) -> anyhow::Result<()> {
    let config = config(None, data_dir)?;
    let store = Store::open(&config.data_dir)
        .with_context(|| format!("opening {} (is the service running?)", config.data_dir.display()))?;
    match create_account(&store, username, Role::Admin, Utc::now()) {
        Ok((coder, password)) => {
            println!("created admin {} ({})", coder.username, coder.id);
            println!("password: {password}");
            Ok(())
        }
        Err(AccountError::Store(StoreError::UsernameTaken(name))) => bail!("username {name:?} is taken"),
        Err(e) => Err(e.into()),
    }
}

async fn serve(port: Option<u16>, data_dir: Option<PathBuf>) -> anyhow::Result<()> {
    let config = config(port, data_dir)?;
    let app = App::open(config.clone()).with_context(|| format!("opening {}", config.data_dir.display()))?;
    labelforge_api::serve(app).await.context("serving")
}

#[tokio::main]
async fn main() -> ExitCode {
    tracing_subscriber::fmt()
        .with_env_filter(EnvFilter::try_from_default_env().unwrap_or_else(|_| EnvFilter::new("info")))
        .with_writer(std::io::stderr)
        .init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Serve { port, data_dir } => serve(port, data_dir).await,
        Command::CreateAdmin { username, data_dir } => create_admin(&username, data_dir),
        Command::Version => {
            println!("labelforge {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
