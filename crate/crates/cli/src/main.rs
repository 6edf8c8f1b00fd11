use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use keyauth_agent::{
    keygen, Agent, AgentConfig, AgentError, AutoApprove, TerminalApprover, TerminalPassphrase,
};
use keyauth_core::crypto::DEFAULT_BITS;
use keyauth_core::{ChallengeId, Identifier, Nonce};

/// Passwordless sign-in with a single key pair.
#[derive(Parser)]
#[command(name = "keyauth", version)]
struct Cli {
    /// Agent config file (default: <config dir>/keyauth/agent.toml if present).
    #[arg(long, global = true, env = "KEYAUTH_CONFIG")]
    config: Option<PathBuf>,
    /// Sealed key file to use instead of the configured one.
    #[arg(long, global = true)]
    keystore: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate and seal a new key pair; prints its fingerprint.
    Keygen {
        #[arg(long, default_value_t = DEFAULT_BITS)]
        bits: u32,
        /// Replace an existing key file.
        #[arg(long)]
        force: bool,
        /// Accept passphrases shorter than 8 characters.
        #[arg(long)]
        allow_weak_passphrase: bool,
    },
    /// Register the public key with a KeyAuth server.
    Register {
        #[arg(long)]
        server: Option<String>,
        #[arg(long)]
        user: Identifier,
        #[arg(long, env = "KEYAUTH_REG_TOKEN")]
        reg_token: Option<String>,
    },
    /// Sign in to a service; prints the assertion token.
    Login {
        #[arg(long)]
        server: Option<String>,
        #[arg(long)]
        user: Identifier,
        #[arg(long)]
        service: Identifier,
        /// Do not ask for approval.
        #[arg(long)]
        yes: bool,
    },
    /// Answer a challenge displayed by a relying party.
    Respond {
        #[arg(long)]
        server: Option<String>,
        #[arg(long)]
        challenge: ChallengeId,
        #[arg(long)]
        nonce: Nonce,
        #[arg(long)]
        service: Identifier,
        #[arg(long)]
        user: Identifier,
        #[arg(long)]
        yes: bool,
    },
}

fn server_url(flag: Option<String>, config: &AgentConfig) -> Result<String, AgentError> {
    flag.or_else(|| config.default_server_url.clone())
        .ok_or_else(|| AgentError::Input("no server given; pass --server or set KEYAUTH_SERVER".into()))
}

fn agent(url: &str, config: &AgentConfig, yes: bool) -> Result<Agent<'static>, AgentError> {
    if yes || config.auto_approve {
        Agent::connect(url, &config.keystore_path, TerminalPassphrase, AutoApprove)
    } else {
        Agent::connect(url, &config.keystore_path, TerminalPassphrase, TerminalApprover)
    }
}

fn run(cli: Cli) -> Result<(), AgentError> {
    let mut config = AgentConfig::load(cli.config.as_deref()).map_err(|e| AgentError::Input(e.to_string()))?;
    if let Some(path) = cli.keystore {
        config.keystore_path = path;
    }
    match cli.command {
        Command::Keygen { bits, force, allow_weak_passphrase } => {
            let fp = keygen(&config.keystore_path, bits, &mut TerminalPassphrase, force, allow_weak_passphrase)?;
            println!("{fp}");
        }
        Command::Register { server, user, reg_token } => {
            let url = server_url(server, &config)?;
            let mut agent = agent(&url, &config, true)?;
            let result = agent.register(&user, reg_token)?;
            println!("registered {} {}", result.user_id, result.fingerprint);
        }
        Command::Login { server, user, service, yes } => {
            let url = server_url(server, &config)?;
            let mut agent = agent(&url, &config, yes)?;
            println!("{}", agent.login(&user, &service)?);
        }
        Command::Respond { server, challenge, nonce, service, user, yes } => {
            let url = server_url(server, &config)?;
            let mut agent = agent(&url, &config, yes)?;
            agent.respond(&challenge, &nonce, &service, &user)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    // Usage errors must not share exit code 2 with a declined sign-in.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(keyauth_agent::exit::LOCAL) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("keyauth: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
