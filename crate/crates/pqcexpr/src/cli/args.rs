use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use pqcexpr::pipeline::{ModelKind, Subset};

/// Inclusive integer range written `A..B`, `A..=B` or `A`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Span(pub usize, pub usize);

impl FromStr for Span {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let num = |t: &str| t.trim().parse::<usize>().map_err(|_| format!("`{t}` is not a non-negative integer"));
        let (a, b) = match s.split_once("..") {
            Some((a, b)) => (num(a)?, num(b.strip_prefix('=').unwrap_or(b))?),
            None => {
                let v = num(s)?;
                (v, v)
            }
        };
        if a > b {
            return Err(format!("range `{s}` is empty"));
        }
        Ok(Span(a, b))
    }
}

impl fmt::Display for Span {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}..{}", self.0, self.1)
    }
}

#[derive(Parser, Debug)]
#[command(name = "pqcexpr", version, about = "Expressibility of parameterized quantum circuits from their gate composition")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub common: Common,
}

/// Flags shared by every subcommand. Each can also be set through a
/// `PQCEXPR_*` environment variable.
#[derive(Args, Debug)]
pub struct Common {
    /// Circuit catalog (TOML); the built-in 19 templates when omitted
    #[arg(long, global = true, env = "PQCEXPR_CATALOG")]
    pub catalog: Option<PathBuf>,
    /// Qubit counts, `A..B` inclusive or a single value
    #[arg(long, global = true, env = "PQCEXPR_QUBITS")]
    pub qubits: Option<Span>,
    /// Layer counts, `A..B` inclusive or a single value
    #[arg(long, global = true, env = "PQCEXPR_LAYERS")]
    pub layers: Option<Span>,
    /// Largest layer count admitted into the grid
    #[arg(long, global = true, env = "PQCEXPR_MAX_LAYERS", default_value_t = 5)]
    pub max_layers: usize,
    /// Fidelity pairs per repetition (S)
    #[arg(long, global = true, env = "PQCEXPR_SAMPLES", default_value_t = 20_000)]
    pub samples: usize,
    /// Histogram bins (B)
    #[arg(long, global = true, env = "PQCEXPR_BINS", default_value_t = 75)]
    pub bins: usize,
    /// Independent repetitions (R)
    #[arg(long, global = true, env = "PQCEXPR_REPS", default_value_t = 10)]
    pub reps: usize,
    /// Master seed for sampling and the train/test split
    #[arg(long, global = true, env = "PQCEXPR_SEED", default_value_t = 0)]
    pub seed: u64,
    /// Worker threads; all available cores when omitted
    #[arg(long, global = true, env = "PQCEXPR_THREADS")]
    pub threads: Option<usize>,
    /// Output file (dataset) or directory (train, explain, report)
    #[arg(long, global = true, env = "PQCEXPR_OUT")]
    pub out: Option<PathBuf>,
    /// Keep finished rows of an existing dataset file
    #[arg(long, global = true, env = "PQCEXPR_RESUME")]
    pub resume: bool,
    /// Drop instances with more than 2^n parameters
    #[arg(long, global = true, env = "PQCEXPR_PARAM_CAP")]
    pub param_cap: bool,
    /// Share of the dataset held out for testing
    #[arg(long, global = true, env = "PQCEXPR_TEST_FRACTION", default_value_t = 0.1)]
    pub test_fraction: f64,
    /// Restrict `train` to one model
    #[arg(long, global = true, env = "PQCEXPR_MODEL", value_enum)]
    pub model: Option<ModelKind>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Gate and parameter counts of the catalog templates
    Catalog {
        /// One line per template: id and description
        #[arg(long)]
        list: bool,
        /// Only the totals over all templates
        #[arg(long)]
        aggregate: bool,
        /// Only this template
        #[arg(long)]
        template: Option<u32>,
    },
    /// Gate list of one instance before and after decomposition
    Decompose {
        #[arg(long)]
        template: u32,
    },
    /// Estimate the KL expressibility of one instance
    Expr {
        #[arg(long, required_unless_present = "probe")]
        template: Option<u32>,
        /// Use a parameterless single-qubit circuit instead of a template
        #[arg(long)]
        probe: bool,
        /// Print JSON instead of key=value lines
        #[arg(long)]
        json: bool,
    },
    /// Estimate every grid instance and write the dataset CSV
    Dataset,
    /// Fit the GBT and LASSO models on a dataset
    Train {
        #[arg(long, default_value = "dataset.csv")]
        data: PathBuf,
        #[command(flatten)]
        gbt: GbtArgs,
        /// LASSO cross-validation folds
        #[arg(long, default_value_t = 5)]
        folds: usize,
        /// Number of penalties in the LASSO grid
        #[arg(long, default_value_t = 30)]
        lambdas: usize,
    },
    /// TreeSHAP attributions of a trained GBT model
    Explain {
        #[arg(long, default_value = "dataset.csv")]
        data: PathBuf,
        #[arg(long, default_value = "models/gbt.model")]
        model_file: PathBuf,
        /// Which dataset rows to explain
        #[arg(long, value_enum, default_value_t = Subset::All)]
        subset: Subset,
        /// Print the largest local-accuracy residual and fail above 1e-9
        #[arg(long)]
        check: bool,
    },
    /// Correlation table, expressibility histograms and SHAP importance
    Report {
        #[arg(long, default_value = "dataset.csv")]
        data: PathBuf,
        /// Trained GBT model for the importance table
        #[arg(long)]
        model_file: Option<PathBuf>,
        /// Width of the KL histogram bins
        #[arg(long, default_value_t = 0.05)]
        bin_width: f64,
        #[arg(long, value_enum, default_value_t = Subset::All)]
        subset: Subset,
    },
}

#[derive(Args, Debug)]
pub struct GbtArgs {
    /// Boosting rounds
    #[arg(long, default_value_t = 200)]
    pub rounds: usize,
    #[arg(long, default_value_t = 0.1)]
    pub learning_rate: f64,
    #[arg(long, default_value_t = 31)]
    pub max_leaves: usize,
    #[arg(long, default_value_t = 5)]
    pub min_samples_leaf: usize,
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn spans() {
        assert_eq!("2..8".parse::<Span>(), Ok(Span(2, 8)));
        assert_eq!("2..=8".parse::<Span>(), Ok(Span(2, 8)));
        assert_eq!("4".parse::<Span>(), Ok(Span(4, 4)));
        assert!("8..2".parse::<Span>().is_err());
        assert!("x".parse::<Span>().is_err());
    }

    #[test]
    fn command_definition_is_consistent() {
        Cli::command().debug_assert();
    }
}
