//! Command-line entry point.
//!
//! Every command resolves its settings as flag > `--config` file > default,
//! echoes the resolved settings to stdout as TOML and stores them beside its
//! outputs. Existing outputs are never overwritten without `--force`.

mod eval;
mod prepare;
mod train;

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::IoContext;
use crate::{Error, Result};

pub use eval::{FidArgs, FidSettings, PlotArgs, PlotSettings};
pub use prepare::{PrepareArgs, PrepareSettings};
pub use train::{TrainArgs, TranslateArgs, TranslateSettings};

#[derive(Debug, Parser)]
#[command(name = "cyclegan-sn", version, about = "Unpaired cartoon-to-photo translation")]
pub struct Cli {
    /// Raise log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Curate videos or photos into train/val splits with manifests.
    Prepare(PrepareArgs),
    /// Train the translation model.
    Train(TrainArgs),
    /// Translate cartoon images with a trained checkpoint.
    Translate(TranslateArgs),
    /// Score generated images against reference sets.
    Fid(FidArgs),
    /// Plot the FID curve recorded in a training log.
    PlotFid(PlotArgs),
}

/// Runs one parsed command.
pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Prepare(a) => prepare::run(a),
        Command::Train(a) => train::run_train(a),
        Command::Translate(a) => train::run_translate(a),
        Command::Fid(a) => eval::run_fid(a),
        Command::PlotFid(a) => eval::run_plot(a),
    }
}

/// Fails when `path` is a file or a non-empty directory, unless `force`.
pub(crate) fn guard_output(path: &Path, force: bool) -> Result<()> {
    if force || !path.exists() {
        return Ok(());
    }
    let occupied = if path.is_dir() {
        std::fs::read_dir(path).at(path)?.next().is_some()
    } else {
        true
    };
    if occupied {
        return Err(Error::OutputExists(path.to_path_buf()));
    }
    Ok(())
}

/// Loads a TOML settings file, or the defaults when none is given.
pub(crate) fn load_settings<T: DeserializeOwned + Default>(path: Option<&PathBuf>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).at(p)?;
            toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
    }
}

/// Prints the resolved settings and, when `dest` is given, writes them there.
pub(crate) fn record_settings<T: Serialize>(settings: &T, dest: Option<&Path>) -> Result<()> {
    let text = toml::to_string_pretty(settings).map_err(|e| Error::Config(e.to_string()))?;
    println!("# resolved configuration\n{text}");
    if let Some(dest) = dest {
        if let Some(dir) = dest.parent() {
            std::fs::create_dir_all(dir).at(dir)?;
        }
        std::fs::write(dest, text).at(dest)?;
    }
    Ok(())
}

/// Overwrites `slot` when the flag was given.
pub(crate) fn set<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}
