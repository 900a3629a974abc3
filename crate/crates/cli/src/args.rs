use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "episcope", version, about = "Plan, simulate and aggregate few-shot benchmark evaluations")]
pub struct Cli {
    /// TOML file whose keys mirror long flags. Flags on the command line win.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Closed-form estimator variance for one design
    Variance(VarianceArgs),
    /// Inverse problems: episode counts, trade-off tables, cheapest designs
    #[command(subcommand)]
    Plan(PlanCommand),
    /// Monte Carlo check of the closed-form variance
    Simulate(SimulateArgs),
    /// Sample episode files and aggregate per-episode results
    #[command(subcommand)]
    Episodes(EpisodesCommand),
    /// Fréchet distance between two feature files
    Fid(FidArgs),
    /// Norm-corrected blends of latents with Gaussian noise
    Blend(BlendArgs),
}

#[derive(Debug, Clone, Copy, Args)]
pub struct PriorArgs {
    /// Mean per-episode accuracy, in [0, 1]
    #[arg(long = "a", value_parser = probability)]
    pub a: f64,
    /// Standard deviation of per-episode accuracy
    #[arg(long, value_parser = non_negative)]
    pub sigma: f64,
}

#[derive(Debug, Args)]
pub struct VarianceArgs {
    #[command(flatten)]
    pub prior: PriorArgs,
    /// Number of episodes
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub kp: u64,
    /// Queries per episode, summed over classes
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub kq: u64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Subcommand)]
pub enum PlanCommand {
    /// Minimum episode count for a target variance or 95% half-width
    Episodes(PlanEpisodesArgs),
    /// Cheapest (Kp, Kq) under a linear cost model
    Cost(PlanCostArgs),
    /// Variance grid over Kp × Kq as CSV
    Table(PlanTableArgs),
}

#[derive(Debug, Args)]
#[command(group = clap::ArgGroup::new("target").required(true).args(["target_var", "target_ci"]))]
pub struct PlanEpisodesArgs {
    #[command(flatten)]
    pub prior: PriorArgs,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub kq: u64,
    /// Target estimator variance
    #[arg(long, value_parser = positive)]
    pub target_var: Option<f64>,
    /// Target 95% half-width (accuracy fraction, e.g. 0.0051)
    #[arg(long, value_parser = open_unit)]
    pub target_ci: Option<f64>,
}

#[derive(Debug, Args)]
pub struct PlanCostArgs {
    #[command(flatten)]
    pub prior: PriorArgs,
    /// Cost of specializing and evaluating one episode
    #[arg(long, value_parser = non_negative)]
    pub cost_episode: f64,
    /// Cost of one query evaluation
    #[arg(long, value_parser = non_negative)]
    pub cost_query: f64,
    #[arg(long, value_parser = positive)]
    pub target_var: f64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub kq_max: u64,
}

#[derive(Debug, Args)]
pub struct PlanTableArgs {
    #[command(flatten)]
    pub prior: PriorArgs,
    /// Comma-separated episode counts
    #[arg(long, value_delimiter = ',', required = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub kp_list: Vec<u64>,
    /// Comma-separated query counts
    #[arg(long, value_delimiter = ',', required = true, value_parser = clap::value_parser!(u64).range(1..))]
    pub kq_list: Vec<u64>,
    /// Output CSV path; stdout when omitted
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub prior: PriorArgs,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub kp: u64,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    pub kq: u64,
    /// Independent replications of the full evaluation
    #[arg(long, value_parser = clap::value_parser!(u64).range(2..))]
    pub reps: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Subcommand)]
pub enum EpisodesCommand {
    /// Sample N-way K-shot episodes into a JSON Lines file
    Sample(SampleArgs),
    /// Mean accuracy and Student-t 95% interval from a results CSV
    Aggregate(AggregateArgs),
}

#[derive(Debug, Args)]
pub struct SampleArgs {
    /// JSON object mapping class name to example IDs
    #[arg(long, value_name = "FILE")]
    pub index: PathBuf,
    #[arg(long, value_parser = positive_usize)]
    pub ways: usize,
    #[arg(long, value_parser = positive_usize)]
    pub shots: usize,
    /// Queries per class, or `all` for every remaining example
    #[arg(long, value_parser = query_count)]
    pub queries: episcope::episode_protocol::QueryCount,
    #[arg(long, value_parser = positive_usize)]
    pub count: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output path; stdout when omitted
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct AggregateArgs {
    /// CSV with header `episode_id,correct,total`
    #[arg(long, value_name = "FILE")]
    pub results: PathBuf,
    /// Also report the accuracy prior for planning
    #[arg(long)]
    pub prior: bool,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct FidArgs {
    /// First feature file (CSV or FSFE binary)
    #[arg(long = "a", value_name = "FILE")]
    pub a: PathBuf,
    /// Second feature file (CSV or FSFE binary)
    #[arg(long = "b", value_name = "FILE")]
    pub b: PathBuf,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VectorFormat {
    Csv,
    Fsfe,
}

#[derive(Debug, Args)]
pub struct BlendArgs {
    /// Latent file, one latent per row (CSV or FSFE binary)
    #[arg(long, value_name = "FILE")]
    pub latents: PathBuf,
    #[arg(long, value_parser = probability)]
    pub alpha: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Number of blended outputs
    #[arg(long, default_value_t = 1, value_parser = positive_usize)]
    pub count: usize,
    /// Output path; stdout when omitted
    #[arg(long, value_name = "FILE")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = VectorFormat::Csv)]
    pub format: VectorFormat,
    /// JSON array of {index, values}; overrides --format
    #[arg(long)]
    pub json: bool,
}

fn parse_f64(s: &str) -> Result<f64, String> {
    let v: f64 = s.trim().parse().map_err(|_| format!("{s:?} is not a number"))?;
    if !v.is_finite() {
        return Err(format!("{s:?} is not finite"));
    }
    Ok(v)
}

fn probability(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if !(0.0..=1.0).contains(&v) {
        return Err(format!("{v} is outside [0, 1]"));
    }
    Ok(v)
}

fn open_unit(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if !(v > 0.0 && v < 1.0) {
        return Err(format!("{v} is outside (0, 1)"));
    }
    Ok(v)
}

fn non_negative(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v < 0.0 {
        return Err(format!("{v} is negative"));
    }
    Ok(v)
}

fn positive(s: &str) -> Result<f64, String> {
    let v = parse_f64(s)?;
    if v <= 0.0 {
        return Err(format!("{v} must be positive"));
    }
    Ok(v)
}

fn positive_usize(s: &str) -> Result<usize, String> {
    match s.trim().parse::<usize>() {
        Ok(n) if n > 0 => Ok(n),
        _ => Err(format!("{s:?} is not a positive integer")),
    }
}

fn query_count(s: &str) -> Result<episcope::episode_protocol::QueryCount, String> {
    s.parse().map_err(|e: episcope::Error| e.to_string())
}
