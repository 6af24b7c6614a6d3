//! Flags, the flat TOML config file, and their merge. Flags win over the file,
//! the file wins over the defaults.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use mrp_core::{MrpConfig, PriceScale, PsiMode};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "mrp",
    version,
    about = "Mean-reverting portfolio design and backtesting"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a cointegrated market; write prices CSV and a beta JSON sidecar.
    Generate(Opts),
    /// Estimate lag moments on the training rows and solve for the portfolio.
    Design(Opts),
    /// Trade given spread weights over rolling windows.
    Backtest(Opts),
    /// Design and trade every window, with single-spread baselines.
    Experiment(Opts),
}

impl Command {
    pub fn opts(&self) -> &Opts {
        match self {
            Command::Generate(o)
            | Command::Design(o)
            | Command::Backtest(o)
            | Command::Experiment(o) => o,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PriceArg {
    Raw,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum PsiArg {
    Spectral,
    Frobenius,
}

/// Every key of the config file. Unknown keys are rejected.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub input: Option<PathBuf>,
    pub beta: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub prices: Option<PriceArg>,
    pub p: Option<usize>,
    pub nu: Option<f64>,
    pub psi: Option<PsiArg>,
    pub tin: Option<usize>,
    pub tout: Option<usize>,
    pub windows: Option<usize>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub parallel_windows: Option<bool>,
    pub assets: Option<usize>,
    pub rank: Option<usize>,
    pub samples: Option<usize>,
    pub hedge_sd: Option<f64>,
    pub max_iter: Option<usize>,
    pub starts: Option<usize>,
    pub mrp_only: Option<bool>,
}

#[derive(Debug, Clone, Default, Args)]
pub struct Opts {
    /// Flat TOML file with the same keys as the long flags (underscores for dashes).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Price CSV: a header of asset names, one row per period. Without it the
    /// market is simulated from the generator flags.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Beta JSON sidecar from `generate`; its rows are the spread hedge vectors.
    /// Without it every CSV column is treated as a spread.
    #[arg(long)]
    pub beta: Option<PathBuf>,
    /// Design JSON whose `w` is traded by `backtest`.
    #[arg(long)]
    pub weights: Option<PathBuf>,
    /// Whether the CSV holds raw prices (logged on load) or log-prices [default: log].
    #[arg(long, value_enum)]
    pub prices: Option<PriceArg>,
    /// Lag order of the portmanteau objective [default: 3].
    #[arg(long)]
    pub p: Option<usize>,
    /// Variance level [default: mean single-spread variance of the training rows].
    #[arg(long)]
    pub nu: Option<f64>,
    /// Majorization constant [default: spectral].
    #[arg(long, value_enum)]
    pub psi: Option<PsiArg>,
    /// Training rows per window [default: 264; `design` uses all rows].
    #[arg(long)]
    pub tin: Option<usize>,
    /// Trading rows per window [default: 132].
    #[arg(long)]
    pub tout: Option<usize>,
    /// Number of rolling windows [default: 2].
    #[arg(long)]
    pub windows: Option<usize>,
    /// Generator seed [default: 0].
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory [default: current directory].
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Evaluate windows on separate threads; outputs are unchanged.
    #[arg(long)]
    pub parallel_windows: bool,
    /// Simulated asset count [default: 6].
    #[arg(long)]
    pub assets: Option<usize>,
    /// Simulated cointegration rank [default: 5].
    #[arg(long)]
    pub rank: Option<usize>,
    /// Simulated sample length [default: 528].
    #[arg(long)]
    pub samples: Option<usize>,
    /// Noise sd added to the true hedge of a simulated market [default: 0].
    #[arg(long)]
    pub hedge_sd: Option<f64>,
    /// MM iteration cap [default: 1000].
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Number of MM starting points [default: all].
    #[arg(long)]
    pub starts: Option<usize>,
    /// Trade only the designed portfolio, no single-spread baselines.
    #[arg(long)]
    pub mrp_only: bool,
}

/// Fully resolved settings. Everything that can change an output is hashed;
/// the output directory and threading are not.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub command: &'static str,
    pub input: Option<PathBuf>,
    pub beta: Option<PathBuf>,
    pub weights: Option<PathBuf>,
    pub prices: PriceArg,
    pub p: usize,
    pub nu: Option<f64>,
    pub psi: PsiArg,
    pub tin: Option<usize>,
    pub tout: usize,
    pub windows: usize,
    pub seed: u64,
    pub assets: usize,
    pub rank: usize,
    pub samples: usize,
    pub hedge_sd: f64,
    pub max_iter: usize,
    pub starts: Option<usize>,
    pub mrp_only: bool,
    #[serde(skip)]
    pub out: PathBuf,
    #[serde(skip)]
    pub parallel_windows: bool,
}

pub fn load_file(path: &Path) -> Result<FileConfig, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
    toml::from_str(&text)
        .map_err(|e| CliError::usage(format!("bad config {}: {e}", path.display())))
}

impl RunConfig {
    pub fn resolve(command: &'static str, opts: &Opts) -> Result<Self, CliError> {
        let file = match &opts.config {
            Some(path) => load_file(path)?,
            None => FileConfig::default(),
        };
        let o = opts.clone();
        let cfg = Self {
            command,
            input: o.input.or(file.input),
            beta: o.beta.or(file.beta),
            weights: o.weights.or(file.weights),
            prices: o.prices.or(file.prices).unwrap_or(PriceArg::Log),
            p: o.p.or(file.p).unwrap_or(3),
            nu: o.nu.or(file.nu),
            psi: o.psi.or(file.psi).unwrap_or(PsiArg::Spectral),
            tin: o.tin.or(file.tin),
            tout: o.tout.or(file.tout).unwrap_or(132),
            windows: o.windows.or(file.windows).unwrap_or(2),
            seed: o.seed.or(file.seed).unwrap_or(0),
            assets: o.assets.or(file.assets).unwrap_or(6),
            rank: o.rank.or(file.rank).unwrap_or(5),
            samples: o.samples.or(file.samples).unwrap_or(528),
            hedge_sd: o.hedge_sd.or(file.hedge_sd).unwrap_or(0.0),
            max_iter: o.max_iter.or(file.max_iter).unwrap_or(1000),
            starts: o.starts.or(file.starts),
            mrp_only: o.mrp_only || file.mrp_only.unwrap_or(false),
            out: o.out.or(file.out).unwrap_or_else(|| PathBuf::from(".")),
            parallel_windows: o.parallel_windows || file.parallel_windows.unwrap_or(false),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        if self.p == 0 {
            return Err(CliError::usage("--p must be at least 1"));
        }
        if let Some(nu) = self.nu {
            if !(nu > 0.0 && nu.is_finite()) {
                return Err(CliError::usage(format!("--nu {nu} must be positive")));
            }
        }
        if !(self.hedge_sd >= 0.0 && self.hedge_sd.is_finite()) {
            return Err(CliError::usage("--hedge-sd must be non-negative"));
        }
        if self.starts == Some(0) || self.max_iter == 0 {
            return Err(CliError::usage("--starts and --max-iter must be positive"));
        }
        Ok(())
    }

    pub fn scale(&self) -> PriceScale {
        match self.prices {
            PriceArg::Raw => PriceScale::Raw,
            PriceArg::Log => PriceScale::Log,
        }
    }

    /// Solver settings; `nu` is a placeholder set per training segment.
    pub fn mrp(&self) -> MrpConfig<f64> {
        let mut cfg = MrpConfig::new(self.p, self.nu.unwrap_or(1.0));
        cfg.psi_mode = match self.psi {
            PsiArg::Spectral => PsiMode::Spectral,
            PsiArg::Frobenius => PsiMode::Frobenius,
        };
        cfg.max_iter = self.max_iter;
        cfg.starts = self.starts;
        cfg
    }

    /// `sha256:` digest of the canonical JSON of this config.
    pub fn hash(&self) -> String {
        let canon = serde_json::to_vec(self).expect("config serializes");
        let digest = Sha256::digest(&canon);
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        format!("sha256:{hex}")
    }
}
