use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "dotanneal", version, about = "Optimal-transport annealing on mean-field Ising and Potts chains")]
pub struct Cli {
    /// Directory for output files written without an explicit --output.
    #[arg(long, global = true, env = "DOTANNEAL_OUTPUT_DIR", default_value = ".")]
    pub output_dir: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Action of the heating curve with its bound (JSON).
    Action(ActionArgs),
    /// Run the layered annealer exactly or by sampling (JSON or CSV).
    Anneal(AnnealArgs),
    /// Run a numerical verification suite; exits 1 if any check fails.
    Verify(VerifyArgs),
    /// Tabulate the magnetization landscape (CSV).
    Landscape(LandscapeArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Model {
    Ising,
    Potts,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum)]
    pub model: Model,
    /// Number of sites.
    #[arg(long)]
    pub n: usize,
    /// Number of Potts colors.
    #[arg(long, default_value_t = 3)]
    pub q: usize,
    /// Target inverse temperature.
    #[arg(long)]
    pub beta: f64,
}

impl ModelArgs {
    pub fn validate(&self) -> CliResult<()> {
        if self.n == 0 {
            return Err(CliError("--n must be at least 1".into()));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return Err(CliError(format!("--beta {} must be finite and >= 0", self.beta)));
        }
        if self.model == Model::Potts {
            if self.q < 2 {
                return Err(CliError(format!("--q {} must be at least 2", self.q)));
            }
            if self.n < self.q {
                return Err(CliError(format!("--n {} must be at least --q {}", self.n, self.q)));
            }
        }
        Ok(())
    }
}

pub fn check_eps(eps: f64) -> CliResult<()> {
    if eps > 0.0 && eps < 1.0 {
        Ok(())
    } else {
        Err(CliError(format!("--eps {eps} must lie in (0, 1)")))
    }
}

pub fn check_grid(grid: usize) -> CliResult<()> {
    if grid >= 3 && grid % 2 == 1 {
        Ok(())
    } else {
        Err(CliError(format!("--grid {grid} must be odd and at least 3")))
    }
}

#[derive(Debug, Clone, Args)]
pub struct ActionArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Simpson nodes on [0, 1].
    #[arg(long, default_value_t = 201)]
    pub grid: usize,
    /// Accuracy that fixes the Potts starting temperature.
    #[arg(long, default_value_t = 0.5)]
    pub eps: f64,
    /// Potts starting inverse temperature; defaults to n ln q + ln(6/eps).
    #[arg(long)]
    pub beta_start: Option<f64>,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Sample,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Space {
    /// Full space for Ising when n <= 12, sorted magnetizations otherwise and for Potts.
    Auto,
    Full,
    Projected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum HorizonRule {
    /// T = 2A/eps from the computed action.
    Action,
    /// Ising only: T = 2 n^5 beta^2 / eps, N = ceil(48 n^5 beta^3 / eps^2).
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

#[derive(Debug, Clone, Args)]
pub struct AnnealArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0.3)]
    pub eps: f64,
    #[arg(long, value_enum, default_value_t = Mode::Exact)]
    pub mode: Mode,
    #[arg(long, value_enum, default_value_t = Space::Auto)]
    pub space: Space,
    /// Horizon T; overrides --horizon-rule.
    #[arg(long)]
    pub horizon: Option<f64>,
    /// Layer count N; defaults to the stability rule for the chosen horizon.
    #[arg(long)]
    pub layers: Option<usize>,
    #[arg(long, value_enum, default_value_t = HorizonRule::Action)]
    pub horizon_rule: HorizonRule,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 10_000)]
    pub replicates: usize,
    /// Cap on the Poisson jump count per layer.
    #[arg(long)]
    pub max_jumps: Option<u64>,
    #[arg(long, default_value_t = 201)]
    pub grid: usize,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    pub format: Format,
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Suite {
    MetricAxioms,
    Duality,
    TransportInequalities,
    Girsanov,
    Symmetry,
    Landscape,
    GreedyFlux,
    All,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    #[arg(value_enum)]
    pub suite: Suite,
    /// Model for the symmetry suite.
    #[arg(long, value_enum, default_value_t = Model::Ising)]
    pub model: Model,
    /// Sites for the symmetry suite.
    #[arg(long, default_value_t = 6)]
    pub n: usize,
    #[arg(long, default_value_t = 3)]
    pub q: usize,
    /// Seed of the random instances.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Random instances per randomized check.
    #[arg(long, default_value_t = 100)]
    pub instances: usize,
    /// Optional JSON report (timings are printed, not written).
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Slice {
    /// Potts: the points (n - (q-1)k, k, ..., k).
    Diagonal,
    /// Potts: every sorted magnetization vector.
    Sorted,
}

#[derive(Debug, Clone, Args)]
pub struct LandscapeArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    /// Ising: fold m and -m together.
    #[arg(long)]
    pub folded: bool,
    #[arg(long, value_enum, default_value_t = Slice::Diagonal)]
    pub slice: Slice,
    #[arg(long)]
    pub output: Option<PathBuf>,
}
