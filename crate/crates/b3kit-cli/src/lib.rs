//! Command implementations behind the `b3kit` binary.
//!
//! Commands are pure functions of `(config, master seed)`: outputs land in a
//! directory content-addressed by the effective config hash, reruns with the
//! same inputs produce byte-identical artifacts, and every command writes a
//! `summary.json` describing what it did.

pub mod commands;
pub mod config;
pub mod pipeline;

use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

/// Process exit codes.
pub const EXIT_SUCCESS: i32 = 0;
pub const EXIT_PROPERTY_FAILURE: i32 = 1;
pub const EXIT_CONFIG_ERROR: i32 = 2;
pub const EXIT_RUNTIME_ERROR: i32 = 3;

/// A command failure carrying the process exit code.
#[derive(Debug)]
pub struct CliError {
    pub exit_code: i32,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl std::fmt::Display) -> Self {
        Self {
            exit_code: EXIT_CONFIG_ERROR,
            message: message.to_string(),
        }
    }

    pub fn runtime(message: impl std::fmt::Display) -> Self {
        Self {
            exit_code: EXIT_RUNTIME_ERROR,
            message: message.to_string(),
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.message)
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Shared command inputs after resolving config, seed override and paths.
#[derive(Debug, Clone)]
pub struct CommandContext {
    pub config: RunConfig,
    pub master_seed: u64,
    /// Content-addressed output directory `<base>/<config hash>`.
    pub out_dir: PathBuf,
    pub jobs: usize,
}

impl CommandContext {
    /// Resolves the effective configuration. Seed precedence: `--seed` flag,
    /// then the `B3KIT_SEED` environment variable, then `scene.seed`.
    pub fn resolve(
        config_path: Option<&Path>,
        out_override: Option<&Path>,
        seed_flag: Option<u64>,
        jobs: usize,
    ) -> CliResult<Self> {
        let mut config = match config_path {
            Some(path) => RunConfig::load(path).map_err(CliError::config)?,
            None => RunConfig::default(),
        };
        let env_seed = match std::env::var("B3KIT_SEED") {
            Ok(text) => Some(
                text.parse::<u64>()
                    .map_err(|_| CliError::config(format!("B3KIT_SEED `{text}` is not a u64")))?,
            ),
            Err(_) => None,
        };
        if let Some(seed) = seed_flag.or(env_seed) {
            config.scene.seed = seed;
        }
        config.validate().map_err(CliError::config)?;
        let master_seed = config.scene.seed;
        let base = out_override
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from(&config.output.dir));
        let out_dir = base.join(config.hash_hex());
        Ok(Self {
            config,
            master_seed,
            out_dir,
            jobs: jobs.max(1),
        })
    }

    pub fn ensure_out_dir(&self) -> CliResult<()> {
        std::fs::create_dir_all(&self.out_dir)
            .map_err(|e| CliError::runtime(format!("cannot create {}: {e}", self.out_dir.display())))
    }

    pub fn write_artifact(&self, name: &str, contents: &str) -> CliResult<PathBuf> {
        let path = self.out_dir.join(name);
        std::fs::write(&path, contents)
            .map_err(|e| CliError::runtime(format!("cannot write {}: {e}", path.display())))?;
        Ok(path)
    }
}

/// Wall-clock record of one command invocation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub command: String,
    pub config_hash: String,
    pub master_seed: u64,
    pub exit_status: i32,
    pub artifacts: Vec<String>,
    pub duration_seconds: f64,
}

impl RunSummary {
    pub fn write(
        ctx: &CommandContext,
        command: &str,
        exit_status: i32,
        artifacts: &[PathBuf],
        started: Instant,
    ) -> CliResult<PathBuf> {
        let summary = Self {
            command: command.to_string(),
            config_hash: ctx.config.hash_hex(),
            master_seed: ctx.master_seed,
            exit_status,
            artifacts: artifacts
                .iter()
                .map(|p| p.display().to_string())
                .collect(),
            duration_seconds: started.elapsed().as_secs_f64(),
        };
        let json = serde_json::to_string_pretty(&summary)
            .map_err(|e| CliError::runtime(format!("summary encode: {e}")))?;
        ctx.write_artifact("summary.json", &json)
    }
}
