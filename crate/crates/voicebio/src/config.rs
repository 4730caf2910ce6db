//! Resolved run configuration: one struct that every artifact embeds, plus
//! deterministic sub-seed derivation so a single top-level seed drives the
//! whole pipeline.

use serde::{Deserialize, Serialize};

use crate::dsp::F0Config;
use crate::model::Hyper;
use crate::selection::SelectionConfig;
use crate::synth::splitmix64;

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Named consumers of derived seeds; each gets an independent stream from
/// the run seed.
#[derive(Debug, Clone, Copy)]
pub enum SeedDomain {
    Selection,
    Split,
    GridSearch,
    Synth,
}

impl SeedDomain {
    fn tag(self) -> u64 {
        match self {
            SeedDomain::Selection => 1,
            SeedDomain::Split => 2,
            SeedDomain::GridSearch => 3,
            SeedDomain::Synth => 4,
        }
    }
}

pub fn derive_seed(run_seed: u64, domain: SeedDomain) -> u64 {
    run_seed ^ splitmix64(domain.tag())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PipelineConfig {
    pub f0: F0Config,
    pub selection: SelectionConfig,
    pub hyper: Hyper,
    pub test_ratio: f64,
    pub seed: u64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            f0: F0Config::default(),
            selection: SelectionConfig::default(),
            hyper: Hyper::default(),
            test_ratio: 0.35,
            seed: 0,
        }
    }
}

impl PipelineConfig {
    /// Apply the run seed, rederiving the selection sub-seed from it.
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self.selection.seed = derive_seed(seed, SeedDomain::Selection);
        self
    }
}
