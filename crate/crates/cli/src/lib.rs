//! `atnb` command line: saliency generation, faithfulness metrics, ROC
//! statistics, calibration, plot export, the reader-study server and an
//! end-to-end demo.

pub mod commands;
pub mod config;
pub mod output;
pub mod server;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::Parser;

pub use config::RunConfig;
pub use output::UsageError;

#[derive(Debug, Parser)]
#[command(
    name = "atnb",
    version,
    about = "Attention saliency maps for vision transformers and their evaluation"
)]
pub struct Cli {
    /// Seed for every random choice (model init, masks, bootstrap, allocation).
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,

    /// JSON run configuration; omitted fields keep their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Directory receiving results and artifacts.
    #[arg(long, global = true, default_value = "atnb-out")]
    pub out_dir: PathBuf,

    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,

    #[command(subcommand)]
    pub command: commands::Command,
}

/// Exit code for bad invocations.
pub const EXIT_USAGE: i32 = 2;
/// Exit code for failures while running.
pub const EXIT_FAILURE: i32 = 1;

/// Parse `argv` (including the program name), execute, and return the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { 0 };
        }
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("ATNB_LOG", "warn"))
        .try_init();
    let result = match cli.jobs {
        Some(0) => Err(UsageError::new("--jobs must be at least 1").into()),
        Some(n) => match rayon::ThreadPoolBuilder::new().num_threads(n).build() {
            Ok(pool) => pool.install(|| commands::execute(&cli)),
            Err(e) => Err(e.into()),
        },
        None => commands::execute(&cli),
    };
    match result {
        Ok(()) => 0,
        Err(e) if e.downcast_ref::<UsageError>().is_some() => {
            eprintln!("error: {e:#}");
            EXIT_USAGE
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_FAILURE
        }
    }
}
