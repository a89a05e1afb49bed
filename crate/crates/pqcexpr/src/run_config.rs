//! The settings of one tool invocation, echoed into every file it writes.
//!
//! Output files start with two comment lines:
//!
//! ```text
//! # pqcexpr 0.1.0
//! # config {"command":"dataset","catalog":"<builtin>",...}
//! ```

use pqcexpr_core::dataset::GridFilter;
use pqcexpr_core::learn::GbtParams;
use pqcexpr_core::SamplingConfig;
use serde::{Deserialize, Serialize};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

const VERSION_PREFIX: &str = "# pqcexpr ";
const CONFIG_PREFIX: &str = "# config ";

/// Catalog name recorded when the compiled-in catalog is used.
pub const BUILTIN_CATALOG: &str = "<builtin>";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: String,
    pub catalog: String,
    pub qubits: [usize; 2],
    pub layers: [usize; 2],
    pub max_layers: usize,
    pub param_cap: bool,
    pub samples: usize,
    pub bins: usize,
    pub reps: usize,
    pub seed: u64,
    pub threads: usize,
    pub test_fraction: f64,
    pub gbt: GbtParams,
    pub lasso_folds: usize,
    pub lasso_grid: usize,
    pub inputs: Vec<String>,
    pub output: String,
}

impl Default for RunConfig {
    fn default() -> Self {
        let sampling = SamplingConfig::default();
        let filter = GridFilter::default();
        RunConfig {
            command: String::new(),
            catalog: BUILTIN_CATALOG.into(),
            qubits: [*filter.qubits.start(), *filter.qubits.end()],
            layers: [*filter.layers.start(), *filter.layers.end()],
            max_layers: filter.max_layers,
            param_cap: filter.param_cap,
            samples: sampling.n_pairs,
            bins: sampling.n_bins,
            reps: sampling.n_repetitions,
            seed: sampling.master_seed,
            threads: 1,
            test_fraction: 0.1,
            gbt: GbtParams::default(),
            lasso_folds: 5,
            lasso_grid: 30,
            inputs: Vec::new(),
            output: String::new(),
        }
    }
}

impl RunConfig {
    pub fn sampling(&self) -> SamplingConfig {
        SamplingConfig { n_pairs: self.samples, n_bins: self.bins, n_repetitions: self.reps, master_seed: self.seed }
    }

    pub fn filter(&self) -> GridFilter {
        GridFilter {
            qubits: self.qubits[0]..=self.qubits[1],
            layers: self.layers[0]..=self.layers[1],
            max_layers: self.max_layers,
            param_cap: self.param_cap,
        }
    }

    /// The two comment lines that open every output file.
    pub fn header(&self) -> String {
        let json = serde_json::to_string(self).expect("config serializes");
        format!("{VERSION_PREFIX}{TOOL_VERSION}\n{CONFIG_PREFIX}{json}\n")
    }

    /// Finds the config line among leading `#` comment lines.
    pub fn from_header(text: &str) -> Option<Result<RunConfig, serde_json::Error>> {
        text.lines()
            .take_while(|l| l.starts_with('#'))
            .find_map(|l| l.strip_prefix(CONFIG_PREFIX))
            .map(serde_json::from_str)
    }
}
