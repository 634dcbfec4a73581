//! Character interaction networks from literary prose and from reader surveys.
//!
//! The crate covers the whole analysis path:
//!
//! - [`corpus`]: story segmentation into sentence or paragraph units and
//!   alias-aware character mention counting.
//! - [`extraction`]: co-occurrence events and the computer-detected network.
//! - [`survey`]: Task 1 / Task 2 reader responses, per-respondent networks,
//!   equal-weight ("democracy") normalization, averaging, scaling to a pattern.
//! - [`netops`]: outlier link deletion, threshold binarization, descriptive
//!   metrics, Pearson correlation and its QAP permutation test.
//! - [`stats`]: logistic regression fitted by IRLS.
//! - [`climax`]: narrative-time importance curves and shape classification.
//!
//! Networks are undirected, loop-free and non-negative; see [`WeightedNetwork`].

pub mod climax;
pub mod corpus;
pub mod extraction;
pub mod netops;
mod network;
pub mod stats;
pub mod survey;

use std::fmt;

pub use network::{NetworkError, Pair, WeightedNetwork};

/// Non-fatal condition reported alongside a result.
#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// Every input network had zero total weight; nothing was rescaled.
    AllZeroNetworks,
    /// Network at this position had zero total weight and was passed through.
    ZeroNetworkSkipped(usize),
    /// Fewer than two positive links, so mean and deviation are undefined.
    TooFewLinks(usize),
    /// Respondent contributed no entries and was left out.
    EmptyRespondent(String),
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::AllZeroNetworks => write!(f, "all networks have zero total weight; left unchanged"),
            Warning::ZeroNetworkSkipped(i) => write!(f, "network #{i} has zero total weight; left unchanged"),
            Warning::TooFewLinks(n) => write!(f, "only {n} positive link(s); correction skipped"),
            Warning::EmptyRespondent(id) => write!(f, "respondent {id} has no entries; excluded"),
        }
    }
}
