use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod error;
mod settings;

#[derive(Parser, Debug)]
#[command(name = "clustseg", version, about = "Clustering-as-attention toolkit: EM clustering, superpixels, flop benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Cluster the points of a CSV file with EM.
    Cluster(ClusterArgs),
    /// Segment an image into superpixels.
    Superpixel(SuperpixelArgs),
    /// Flop counts and wall times of the attention variants.
    Bench(BenchArgs),
    /// Run a small random decoder on a synthetic pyramid and trace it.
    DemoDecoder(DemoArgs),
}

#[derive(Args, Debug)]
pub struct ClusterArgs {
    /// Points, one per line, comma-separated. Lines starting with `#` are skipped.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    /// `paper_sum` or `weighted_mean`.
    #[arg(long)]
    pub mode: Option<String>,
    /// `soft` (softmax memberships) or `hard` (nearest-center Lloyd steps).
    #[arg(long)]
    pub assign: Option<String>,
    #[arg(long)]
    pub t_max: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output CSV: point_index,hard_label,p_0..p_{K-1}.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// key=value file supplying defaults for the options above.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SuperpixelArgs {
    /// PPM (P3/P6) or PNG image.
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub t: Option<usize>,
    #[arg(long)]
    pub color_weight: Option<f64>,
    #[arg(long)]
    pub position_weight: Option<f64>,
    #[arg(long)]
    pub min_region_frac: Option<f64>,
    /// Pass pixel features through a seeded random feed-forward block.
    #[arg(long)]
    pub use_ffn: bool,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Ground-truth label PGM; enables ASA.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    /// Fail unless ASA can be computed.
    #[arg(long)]
    pub asa: bool,
    #[arg(long)]
    pub out_labels: Option<PathBuf>,
    /// Boundary overlay, PPM or PNG by extension.
    #[arg(long)]
    pub out_overlay: Option<PathBuf>,
    /// Also run SLIC on the same image and print a second metrics line.
    #[arg(long)]
    pub baseline_slic: bool,
    /// SLIC compactness, defaults to the position weight.
    #[arg(long)]
    pub slic_compactness: Option<f64>,
    #[arg(long)]
    pub slic_iters: Option<usize>,
    #[arg(long)]
    pub out_slic_labels: Option<PathBuf>,
    #[arg(long)]
    pub out_slic_overlay: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct BenchArgs {
    /// Comma-separated sizes, each `N` (an N×N map) or `HxW`.
    #[arg(long)]
    pub hw_list: Option<String>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    #[arg(long)]
    pub t_list: Option<String>,
    /// Any of vanilla, recurrent, stacked_unshared, cluster_softmax, hard.
    #[arg(long)]
    pub variant_list: Option<String>,
    /// Timed runs per record after one warm-up; 0 skips timing.
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// JSON array of records; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DemoArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub t: Option<usize>,
    #[arg(long)]
    pub d: Option<usize>,
    #[arg(long)]
    pub heads: Option<usize>,
    /// Side of the finest pyramid level; each coarser level halves it.
    #[arg(long)]
    pub size: Option<usize>,
    /// Use all-zero attention and MLP weights.
    #[arg(long)]
    pub zero_weights: bool,
    /// Trace JSON; printed to stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Cluster(a) => commands::cluster::run(a),
        Command::Superpixel(a) => commands::superpixel::run(a),
        Command::Bench(a) => commands::bench::run(a),
        Command::DemoDecoder(a) => commands::demo::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
