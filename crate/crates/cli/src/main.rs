//! `qtkit` command-line entry point.
//!
//! Exit codes: 0 on success, 1 on usage errors, 2 on data errors.

mod commands;

use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use qtkit::rng::DEFAULT_SEED;

#[derive(Debug, Parser)]
#[command(name = "qtkit", version, about = "JPEG quantization-table forensics toolkit")]
pub struct Cli {
    #[command(flatten)]
    pub global: Global,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Global {
    /// Master seed for every randomized step.
    #[arg(long, global = true, env = "QTKIT_SEED", default_value_t = DEFAULT_SEED)]
    pub seed: u64,
    /// Worker threads (0 = one per core). Output bytes never depend on it.
    #[arg(long, global = true, env = "QTKIT_THREADS", default_value_t = 0)]
    pub threads: usize,
    /// Rendering of reports on standard output.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
    /// Print progress details on standard error.
    #[arg(short, long, global = true)]
    pub verbose: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Text,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Quantization tables: render, estimate, fingerprint.
    #[command(subcommand)]
    Qt(QtCommand),
    /// Build and inspect quantization-table banks.
    #[command(subcommand)]
    Bank(BankCommand),
    /// Materialize one evaluation condition (orig, std or real).
    Recompress(RecompressArgs),
    /// Error level analysis maps (16-bit PGM).
    Ela(ElaArgs),
    /// Double-quantization localization maps (16-bit PGM).
    Dq(DqArgs),
    /// Score prediction maps against masks.
    Eval(EvalArgs),
    /// Factorial result table from several metric files.
    Report(ReportArgs),
    /// Synthetic test data.
    #[command(subcommand, hide = true)]
    Fixtures(FixturesCommand),
}

#[derive(Debug, Subcommand)]
pub enum QtCommand {
    /// Every table defined in a JPEG file.
    Show { file: std::path::PathBuf },
    /// Standard table at a quality factor.
    Gen {
        #[arg(long, short)]
        quality: i64,
        /// Chrominance instead of luminance.
        #[arg(long)]
        chroma: bool,
    },
    /// Closest standard quality of a file's luminance table.
    Estimate { file: std::path::PathBuf },
    /// Fingerprint of a file's luminance table.
    Fingerprint { file: std::path::PathBuf },
}

#[derive(Debug, Subcommand)]
pub enum BankCommand {
    /// Scan a directory of JPEGs into a bank file.
    Build {
        #[arg(long = "in")]
        input: std::path::PathBuf,
        #[arg(long)]
        out: std::path::PathBuf,
        /// Only scan the top level.
        #[arg(long)]
        no_recursive: bool,
        /// Value order written to the bank file.
        #[arg(long, default_value = "natural")]
        order: String,
    },
    /// Distinct tables and occurrence totals.
    Stats {
        bank: std::path::PathBuf,
        #[arg(long, default_value = "natural")]
        order: String,
    },
    /// Tables ranked by frequency.
    Pareto {
        bank: std::path::PathBuf,
        #[arg(long, default_value = "natural")]
        order: String,
        /// Ranks shown in the text chart.
        #[arg(long, default_value_t = 25)]
        limit: usize,
        /// Also write the ranking CSV here.
        #[arg(long)]
        out: Option<std::path::PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct RecompressArgs {
    #[arg(long = "in")]
    pub input: std::path::PathBuf,
    #[arg(long)]
    pub out: std::path::PathBuf,
    /// orig, std or real.
    #[arg(long)]
    pub condition: String,
    /// Inclusive quality range for std, `LOW:HIGH`.
    #[arg(long, default_value = "30:100")]
    pub qf_range: String,
    /// Bank file for real.
    #[arg(long)]
    pub bank: Option<std::path::PathBuf>,
    /// uniform or frequency.
    #[arg(long, default_value = "uniform")]
    pub weighting: String,
    /// 420 or 444.
    #[arg(long, default_value = "420")]
    pub subsampling: String,
}

#[derive(Debug, Args)]
pub struct ElaArgs {
    /// A JPEG file or a directory of images.
    #[arg(long = "in")]
    pub input: std::path::PathBuf,
    /// Output PGM (file input) or directory (directory input).
    #[arg(long)]
    pub out: std::path::PathBuf,
    /// Resave quality.
    #[arg(long, default_value_t = i64::from(qtkit::forensics::DEFAULT_RESAVE_QUALITY))]
    pub quality: i64,
}

#[derive(Debug, Args)]
pub struct DqArgs {
    /// A JPEG file or a directory of images.
    #[arg(long = "in")]
    pub input: std::path::PathBuf,
    /// Output PGM (file input) or directory (directory input).
    #[arg(long)]
    pub out: std::path::PathBuf,
    /// Box filter radius over the block grid.
    #[arg(long, default_value_t = qtkit::forensics::DqParams::default().smoothing_radius)]
    pub smoothing: usize,
    /// Block-score CSV for a single input file.
    #[arg(long)]
    pub blocks_csv: Option<std::path::PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub pred: std::path::PathBuf,
    #[arg(long, required_unless_present = "unaltered", conflicts_with = "unaltered")]
    pub gt: Option<std::path::PathBuf>,
    /// Score authentic images: every positive pixel is a false positive.
    #[arg(long)]
    pub unaltered: bool,
    #[arg(long, default_value_t = qtkit::eval::DEFAULT_TAU)]
    pub tau: f64,
    #[arg(long, default_value = "Orig.")]
    pub condition: String,
    /// Per-image metrics CSV.
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// CSV with columns model,training,dataset,condition,metrics.
    #[arg(long)]
    pub runs: std::path::PathBuf,
    /// f1, iou or fpr.
    #[arg(long, default_value = "f1")]
    pub metric: String,
    /// Table CSV.
    #[arg(long)]
    pub out: Option<std::path::PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum FixturesCommand {
    /// Desk-scale corpus: bank/, tampered/, masks/, unaltered/.
    Gen {
        #[arg(long)]
        out: std::path::PathBuf,
        #[arg(long, default_value_t = 120)]
        bank_files: usize,
        #[arg(long, default_value_t = 24)]
        bank_tables: usize,
        #[arg(long, default_value_t = 12)]
        tampered: usize,
        #[arg(long, default_value_t = 8)]
        unaltered: usize,
        #[arg(long, default_value_t = 256)]
        width: u32,
        #[arg(long, default_value_t = 192)]
        height: u32,
    },
    /// Small JPEGs carrying exactly `k` distinct tables.
    Tables {
        #[arg(long)]
        out: std::path::PathBuf,
        #[arg(short)]
        k: usize,
        #[arg(long, default_value_t = 0)]
        files: usize,
    },
}

/// Bad flags or flag combinations.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let threads = cli.global.threads;
    match qtkit::par::with_threads(threads, || commands::run(&cli)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
