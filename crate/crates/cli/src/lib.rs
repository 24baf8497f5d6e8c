//! Command-line front end for pathlink.
//!
//! Exit codes: 0 on success, 1 when a verification fails or a run aborts,
//! 2 for usage errors (bad flags, bad config, unreadable inputs).

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

mod commands;
mod manifest;

pub use manifest::Manifest;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "pathlink", version, about = "Shortest-path link prediction toolkit")]
pub struct Cli {
    /// Worker threads for BFS, evaluation scoring and ablation cells (default: all cores)
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// More log output on stderr; repeat for debug level
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

/// Where the graph comes from when no config file is used.
#[derive(Debug, Clone, Args)]
pub struct GraphArgs {
    /// Edge list, one `u v` pair per line
    #[arg(long, value_name = "FILE")]
    pub edges: Option<PathBuf>,
    /// Node feature CSV, one row per node
    #[arg(long, value_name = "FILE")]
    pub features: Option<PathBuf>,
}

/// Config file plus flag overrides; flags win over the file.
#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Config file of `key = value` lines
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Master seed for every random stream
    #[arg(long)]
    pub seed: Option<u64>,
    /// Test negatives file (one block shared, several blocks per positive)
    #[arg(long, value_name = "FILE")]
    pub negatives: Option<PathBuf>,
    /// Directory for cached path indices
    #[arg(long, value_name = "DIR")]
    pub path_cache: Option<PathBuf>,
    /// BFS sources: all, links or auto
    #[arg(long)]
    pub sources: Option<String>,
    /// Scorer: pure_gnn, ncn, sp4lp, ablate_seq_only or ablate_len_only
    #[arg(long)]
    pub scorer: Option<String>,
    /// Maximum training epochs
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Parameter precision: f32 or f64
    #[arg(long)]
    pub dtype: Option<String>,
    /// Any config key as KEY=VALUE; repeatable, applied last
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build and cache the shortest-path index, then print its statistics
    Preprocess {
        #[command(flatten)]
        graph: GraphArgs,
        /// Prepare the split views of this experiment config instead of the raw graph
        #[arg(long, value_name = "FILE", conflicts_with = "edges")]
        config: Option<PathBuf>,
        /// Directory for cached path indices
        #[arg(long, value_name = "DIR", default_value = ".pathlink-cache")]
        path_cache: PathBuf,
        /// BFS sources: all, links or auto
        #[arg(long, default_value = "all")]
        sources: String,
        /// Extra `u v` pairs whose endpoints become sources under `links`
        #[arg(long, value_name = "FILE")]
        pairs: Option<PathBuf>,
        /// Also write index_stats.csv and a manifest here
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// WL colours and automorphism orbit tables (orbits need at most 10 nodes)
    Symmetry {
        #[command(flatten)]
        graph: GraphArgs,
        /// Require automorphisms to preserve feature rows as well
        #[arg(long)]
        feature_aware: bool,
        /// Write wl_colors.csv, node_orbits.csv, link_orbits.csv and a manifest here
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Score pairs with CN, AA, RA, SP or Katz, or rank a split with them
    Heuristic {
        #[command(flatten)]
        graph: GraphArgs,
        /// Heuristic name, comma-separated list, or `all`
        #[arg(long, default_value = "all")]
        name: String,
        /// Pairs to score, one `u v` per line (default: every node pair)
        #[arg(long, value_name = "FILE")]
        pairs: Option<PathBuf>,
        /// Katz damping factor
        #[arg(long, default_value_t = pathlink::heuristics::DEFAULT_KATZ_BETA)]
        katz_beta: f64,
        /// Longest walk counted by Katz
        #[arg(long, default_value_t = pathlink::heuristics::DEFAULT_KATZ_MAX_LENGTH)]
        katz_max_length: usize,
        /// Rank the test split of this experiment config instead of scoring pairs
        #[arg(long, value_name = "FILE", conflicts_with_all = ["edges", "pairs"])]
        config: Option<PathBuf>,
        /// Seed for the split when ranking (overrides the config)
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: CSV on stdout)
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
    /// Train a link scorer and evaluate it on the test split
    Train(RunArgs),
    /// Re-evaluate a saved checkpoint on the test split
    Eval {
        /// Checkpoint written by `train`
        #[arg(long, value_name = "FILE")]
        checkpoint: PathBuf,
        #[command(flatten)]
        run: EvalArgs,
    },
    /// Train the full model and both ablations on identical splits and seeds
    Ablate {
        #[command(flatten)]
        run: RunArgs,
        /// Seeds to run (default: the config seed)
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
        /// Scorers to compare
        #[arg(long, value_delimiter = ',', default_value = "sp4lp,ablate_seq_only,ablate_len_only")]
        variants: Vec<String>,
    },
    /// Run the built-in counterexample battery
    Expressivity {
        /// Replace the injective sum with a mean (the sum claims should then fail)
        #[arg(long)]
        mutate_phi_mean: bool,
        #[command(flatten)]
        graph: GraphArgs,
        /// Seed for parameter draws and random graphs
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Write expressivity.csv and a manifest here
        #[arg(long, value_name = "DIR")]
        out: Option<PathBuf>,
    },
}

/// `eval` takes the run flags but its config defaults to the checkpoint's.
#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Config file overriding the one stored in the checkpoint
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub graph: GraphArgs,
    /// Master seed (selects the split)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Test negatives file
    #[arg(long, value_name = "FILE")]
    pub negatives: Option<PathBuf>,
    /// Directory for cached path indices
    #[arg(long, value_name = "DIR")]
    pub path_cache: Option<PathBuf>,
    /// Any config key as KEY=VALUE; repeatable
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    /// Output directory
    #[arg(long, value_name = "DIR")]
    pub out: PathBuf,
}

/// A failed check, as opposed to a crash or a usage error.
#[derive(Debug)]
pub struct VerificationFailed(pub String);

impl std::fmt::Display for VerificationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for VerificationFailed {}

/// A problem with the invocation itself.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn exit_code(err: &anyhow::Error) -> i32 {
    use pathlink::Error as E;
    if err.downcast_ref::<UsageError>().is_some() {
        return EXIT_USAGE;
    }
    if err.downcast_ref::<VerificationFailed>().is_some() {
        return EXIT_VERIFY;
    }
    match err.downcast_ref::<E>() {
        Some(E::Config(_) | E::Parse { .. } | E::Argument(_) | E::NodeId(_) | E::Io(_) | E::TooLarge { .. }) => {
            EXIT_USAGE
        }
        Some(_) => EXIT_VERIFY,
        None if err.downcast_ref::<std::io::Error>().is_some() => EXIT_USAGE,
        None => EXIT_VERIFY,
    }
}

/// Parses `args` (program name first), runs the subcommand and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .try_init();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            log::warn!("could not size the thread pool: {e}");
        }
    }
    match commands::dispatch(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e:#}");
            exit_code(&e)
        }
    }
}
