//! Network cleaning, binarization, descriptive metrics and correlation.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::network::{NetworkError, WeightedNetwork};
use crate::Warning;

/// Default cutoff for binarization: with a 10-point maximum, reaching 11
/// takes at least two respondents.
pub const DEFAULT_THRESHOLD: f64 = 11.0;

/// Smallest permutation count accepted by [`permutation_significance`].
pub const MIN_PERMUTATIONS: usize = 100;

/// Published whole-population correlations of each survey task's network
/// with the computer network: (task, paragraph units, sentence units).
/// They rest on respondent data that is not available, so they are for
/// display next to new results, not for checking against.
pub const REFERENCE_CORRELATIONS: [(&str, f64, f64); 2] = [("task1", 0.84, 0.91), ("task2", 0.70, 0.58)];

#[derive(Debug, Error, PartialEq)]
pub enum NetopsError {
    #[error("metrics need at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("networks have different node sets")]
    NodeSetMismatch,
    #[error("correlation undefined: both weight vectors are constant")]
    BothConstant,
    #[error("correlation undefined: fewer than 2 pairs to compare")]
    TooFewPairs,
    #[error("non-finite value while computing correlation")]
    NumericalFailure,
    #[error("need at least {MIN_PERMUTATIONS} permutations, got {0}")]
    TooFewPermutations(usize),
    #[error("threshold must be a non-negative number, got {0}")]
    InvalidThreshold(f64),
    #[error("sigma multiplier must be positive, got {0}")]
    InvalidSigma(f64),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

/// Presence/absence graph over a fixed node list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryNetwork {
    nodes: Vec<String>,
    /// Index pairs `(i, j)` with `i < j`.
    edges: BTreeSet<(usize, usize)>,
}

impl BinaryNetwork {
    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn has_edge(&self, a: &str, b: &str) -> bool {
        let pos = |n: &str| self.nodes.iter().position(|x| x == n);
        match (pos(a), pos(b)) {
            (Some(i), Some(j)) if i != j => self.edges.contains(&(i.min(j), i.max(j))),
            _ => false,
        }
    }

    pub fn edge_names(&self) -> impl Iterator<Item = (&str, &str)> + '_ {
        self.edges
            .iter()
            .map(|(i, j)| (self.nodes[*i].as_str(), self.nodes[*j].as_str()))
    }

    /// Weighted view with weight 1 on every edge.
    pub fn to_weighted(&self, provenance: &str) -> WeightedNetwork {
        let mut net = WeightedNetwork::new(self.nodes.iter().cloned(), provenance)
            .expect("nodes came from a valid network");
        for (i, j) in &self.edges {
            net.set_weight_at(*i, *j, 1.0);
        }
        net
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NetworkMetrics {
    pub n_nodes: usize,
    pub n_edges: usize,
    /// `n_edges / (n (n - 1))`, the convention of the reference table.
    pub density: f64,
    /// `2 n_edges / n`.
    pub average_degree: f64,
}

impl NetworkMetrics {
    fn new(n_nodes: usize, n_edges: usize) -> Result<Self, NetopsError> {
        if n_nodes < 2 {
            return Err(NetopsError::TooFewNodes(n_nodes));
        }
        let n = n_nodes as f64;
        let m = n_edges as f64;
        Ok(NetworkMetrics {
            n_nodes,
            n_edges,
            density: m / (n * (n - 1.0)),
            average_degree: 2.0 * m / n,
        })
    }

    /// Conventional undirected density, `2 n_edges / (n (n - 1))`.
    pub fn undirected_density(&self) -> f64 {
        2.0 * self.density
    }
}

pub enum MetricsInput<'a> {
    Weighted(&'a WeightedNetwork),
    Binary(&'a BinaryNetwork),
}

impl<'a> From<&'a WeightedNetwork> for MetricsInput<'a> {
    fn from(n: &'a WeightedNetwork) -> Self {
        MetricsInput::Weighted(n)
    }
}

impl<'a> From<&'a BinaryNetwork> for MetricsInput<'a> {
    fn from(n: &'a BinaryNetwork) -> Self {
        MetricsInput::Binary(n)
    }
}

/// Node count, edge count, density and average degree. A weighted link
/// counts as an edge iff its weight is positive.
pub fn graph_metrics<'a>(net: impl Into<MetricsInput<'a>>) -> Result<NetworkMetrics, NetopsError> {
    match net.into() {
        MetricsInput::Weighted(w) => NetworkMetrics::new(w.n_nodes(), w.n_edges()),
        MetricsInput::Binary(b) => NetworkMetrics::new(b.nodes.len(), b.n_edges()),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Correction {
    pub network: WeightedNetwork,
    /// Mean of the positive link weights; `None` when fewer than two links.
    pub mean: Option<f64>,
    /// Population standard deviation of the positive link weights.
    pub std_dev: Option<f64>,
    pub deleted: Vec<(String, String, f64)>,
    pub warnings: Vec<Warning>,
}

/// Deletes links whose weight lies more than `k` standard deviations from
/// the mean, in either direction.
///
/// Mean and population deviation are taken once over the positive links of
/// the input. A deviation within rounding of `k * sigma` counts as equal and
/// the link is kept.
pub fn sigma_correct(net: &WeightedNetwork, k: f64) -> Result<Correction, NetopsError> {
    if k.is_nan() || k <= 0.0 {
        return Err(NetopsError::InvalidSigma(k));
    }
    let weights: Vec<f64> = net.edges().map(|(_, _, w)| w).collect();
    if weights.len() < 2 {
        let warning = Warning::TooFewLinks(weights.len());
        log::warn!("{warning}");
        return Ok(Correction {
            network: net.clone(),
            mean: None,
            std_dev: None,
            deleted: Vec::new(),
            warnings: vec![warning],
        });
    }
    let count = weights.len() as f64;
    let mean = weights.iter().sum::<f64>() / count;
    let var = weights.iter().map(|w| (w - mean).powi(2)).sum::<f64>() / count;
    let sd = var.sqrt();
    let limit = k * sd;
    let slack = 1e-12 * limit.max(mean.abs()).max(1.0);
    let mut out = net.clone();
    let mut deleted = Vec::new();
    if sd > 0.0 && limit.is_finite() {
        let doomed: Vec<(usize, usize, f64)> = net
            .pair_indices()
            .map(|(i, j)| (i, j, net.weight_at(i, j)))
            .filter(|(_, _, w)| *w > 0.0 && (w - mean).abs() - limit > slack)
            .collect();
        for (i, j, w) in doomed {
            out.set_weight_at(i, j, 0.0);
            deleted.push((net.nodes()[i].clone(), net.nodes()[j].clone(), w));
        }
    }
    Ok(Correction {
        network: out,
        mean: Some(mean),
        std_dev: Some(sd),
        deleted,
        warnings: Vec::new(),
    })
}

/// Keeps links with positive weight at or above `t`.
pub fn threshold_binarize(net: &WeightedNetwork, t: f64) -> Result<BinaryNetwork, NetopsError> {
    if t.is_nan() || t < 0.0 {
        return Err(NetopsError::InvalidThreshold(t));
    }
    let edges = net
        .pair_indices()
        .filter(|(i, j)| {
            let w = net.weight_at(*i, *j);
            w > 0.0 && w >= t
        })
        .collect();
    Ok(BinaryNetwork {
        nodes: net.nodes().to_vec(),
        edges,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorrelationOptions {
    /// Include pairs that are zero in both networks. On by default.
    pub include_zero_pairs: bool,
}

impl Default for CorrelationOptions {
    fn default() -> Self {
        CorrelationOptions {
            include_zero_pairs: true,
        }
    }
}

fn pearson(x: &[f64], y: &[f64]) -> Result<f64, NetopsError> {
    if x.len() < 2 {
        return Err(NetopsError::TooFewPairs);
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    let x_const = x.iter().all(|v| *v == x[0]);
    let y_const = y.iter().all(|v| *v == y[0]);
    match (x_const, y_const) {
        (true, true) => return Err(NetopsError::BothConstant),
        // Zero covariance with a non-constant partner.
        (true, false) | (false, true) => return Ok(0.0),
        _ => {}
    }
    let r = sxy / (sxx.sqrt() * syy.sqrt());
    if !r.is_finite() {
        return Err(NetopsError::NumericalFailure);
    }
    Ok(r.clamp(-1.0, 1.0))
}

/// Flattened weights of `a` and of `b` (aligned to `a`'s node order).
fn paired_vectors(
    a: &WeightedNetwork,
    b: &WeightedNetwork,
    opts: CorrelationOptions,
) -> Result<(Vec<f64>, Vec<f64>), NetopsError> {
    if !a.same_node_set(b) {
        return Err(NetopsError::NodeSetMismatch);
    }
    let b = b.reordered(a.nodes())?;
    let (x, y): (Vec<f64>, Vec<f64>) = a
        .weight_vector()
        .iter()
        .zip(b.weight_vector())
        .filter(|(p, q)| opts.include_zero_pairs || **p != 0.0 || **q != 0.0)
        .map(|(p, q)| (*p, *q))
        .unzip();
    if x.iter().chain(&y).any(|v| !v.is_finite()) {
        return Err(NetopsError::NumericalFailure);
    }
    Ok((x, y))
}

/// Pearson coefficient between two networks' weights over all node pairs.
///
/// Node sets must match; `b` is aligned to `a` by name. If exactly one side
/// is constant the covariance is zero and 0 is returned.
pub fn pearson_correlation(a: &WeightedNetwork, b: &WeightedNetwork) -> Result<f64, NetopsError> {
    pearson_correlation_with(a, b, CorrelationOptions::default())
}

pub fn pearson_correlation_with(
    a: &WeightedNetwork,
    b: &WeightedNetwork,
    opts: CorrelationOptions,
) -> Result<f64, NetopsError> {
    let (x, y) = paired_vectors(a, b, opts)?;
    pearson(&x, &y)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Significance {
    pub observed: f64,
    pub p_value: f64,
    pub permutations: usize,
    pub seed: u64,
}

/// QAP permutation test of the correlation between `a` and `b`.
///
/// Each permutation relabels `b`'s nodes at random, keeping its structure,
/// and the p-value is the fraction of permuted |r| at least the observed |r|.
/// Permutation `i` draws from its own ChaCha stream, so the result depends
/// only on `seed`, not on thread count.
pub fn permutation_significance(
    a: &WeightedNetwork,
    b: &WeightedNetwork,
    n_perm: usize,
    seed: u64,
    opts: CorrelationOptions,
) -> Result<Significance, NetopsError> {
    if n_perm < MIN_PERMUTATIONS {
        return Err(NetopsError::TooFewPermutations(n_perm));
    }
    let observed = pearson_correlation_with(a, b, opts)?;
    let b = b.reordered(a.nodes())?;
    let n = a.n_nodes();
    let x = a.weight_vector();
    let target = observed.abs() - 1e-12;
    let hits: usize = (0..n_perm)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng);
            let (xs, ys): (Vec<f64>, Vec<f64>) = a
                .pair_indices()
                .zip(x)
                .map(|((p, q), xv)| (*xv, b.weight_at(perm[p], perm[q])))
                .filter(|(p, q)| opts.include_zero_pairs || *p != 0.0 || *q != 0.0)
                .unzip();
            match pearson(&xs, &ys) {
                Ok(r) if r.abs() >= target => 1,
                _ => 0,
            }
        })
        .sum();
    Ok(Significance {
        observed,
        p_value: hits as f64 / n_perm as f64,
        permutations: n_perm,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::Rng;

    fn with_weights(ws: &[f64]) -> WeightedNetwork {
        let mut n = 2;
        while n * (n - 1) / 2 < ws.len() {
            n += 1;
        }
        let names: Vec<String> = (0..n).map(|i| format!("N{i:02}")).collect();
        let mut net = WeightedNetwork::new(names, "t").unwrap();
        let pairs: Vec<_> = net.pair_indices().collect();
        for ((i, j), w) in pairs.into_iter().zip(ws) {
            net.set_weight_at(i, j, *w);
        }
        net
    }

    fn random_net(n: usize, rng: &mut impl Rng) -> WeightedNetwork {
        let names: Vec<String> = (0..n).map(|i| format!("N{i:02}")).collect();
        let mut net = WeightedNetwork::new(names, "rand").unwrap();
        for (i, j) in net.pair_indices().collect::<Vec<_>>() {
            if rng.random_bool(0.4) {
                net.set_weight_at(i, j, rng.random_range(1..=10) as f64);
            }
        }
        net
    }

    #[test]
    fn table_one_metrics() {
        for (m, density, degree) in [
            (16, 0.1025641, 2.4615385),
            (21, 0.1346154, 3.2307692),
            (24, 0.1538462, 3.6923077),
        ] {
            let metrics = NetworkMetrics::new(13, m).unwrap();
            assert_abs_diff_eq!(metrics.density, density, epsilon = 1e-6);
            assert_abs_diff_eq!(metrics.average_degree, degree, epsilon = 1e-6);
        }
        assert_eq!(NetworkMetrics::new(1, 0).unwrap_err(), NetopsError::TooFewNodes(1));
    }

    #[test]
    fn weighted_and_binary_metrics_agree() {
        let net = with_weights(&[1.0, 0.0, 12.0, 0.0, 5.0, 0.5]);
        let bin = threshold_binarize(&net, 0.0).unwrap();
        assert_eq!(graph_metrics(&net).unwrap(), graph_metrics(&bin).unwrap());
        assert_eq!(graph_metrics(&net).unwrap().n_edges, 4);
    }

    #[test]
    fn sigma_golden_case() {
        let net = with_weights(&[1.0, 1.0, 1.0, 1.0, 9.0]);
        let c = sigma_correct(&net, 2.0).unwrap();
        assert_abs_diff_eq!(c.mean.unwrap(), 2.6, epsilon = 1e-12);
        assert_abs_diff_eq!(c.std_dev.unwrap(), 3.2, epsilon = 1e-12);
        assert!(c.deleted.is_empty(), "|9 - 2.6| = 6.4 = 2 sigma is kept");
        let c = sigma_correct(&net, 1.9).unwrap();
        assert_eq!(c.deleted.len(), 1);
        assert_eq!(c.deleted[0].2, 9.0);
        assert_eq!(c.network.n_edges(), 4);
    }

    #[test]
    fn sigma_degenerate_cases() {
        let flat = with_weights(&[3.0, 3.0, 3.0]);
        assert!(sigma_correct(&flat, 2.0).unwrap().deleted.is_empty());
        let net = with_weights(&[1.0, 1.0, 1.0, 50.0]);
        assert_eq!(sigma_correct(&net, f64::INFINITY).unwrap().network, net);
        let lonely = with_weights(&[0.0, 4.0, 0.0]);
        let c = sigma_correct(&lonely, 2.0).unwrap();
        assert_eq!(c.warnings, vec![Warning::TooFewLinks(1)]);
        assert_eq!(c.network, lonely);
        assert!(sigma_correct(&net, 0.0).is_err());
    }

    #[test]
    fn sigma_is_two_sided() {
        // Many strong links and one faint one: the faint link is the outlier.
        let net = with_weights(&[10.0, 10.0, 10.0, 10.0, 10.0, 10.0, 10.0, 10.0, 10.0, 0.1]);
        let c = sigma_correct(&net, 2.0).unwrap();
        assert_eq!(c.deleted.len(), 1);
        assert_eq!(c.deleted[0].2, 0.1);
    }

    #[test]
    fn threshold_fixture() {
        let net = with_weights(&[12.0, 11.0, 10.0]);
        let bin = threshold_binarize(&net, DEFAULT_THRESHOLD).unwrap();
        assert_eq!(bin.n_edges(), 2);
        assert!(bin.has_edge("N00", "N01"));
        assert!(bin.has_edge("N02", "N00"));
        assert!(!bin.has_edge("N01", "N02"));
        let all = threshold_binarize(&with_weights(&[0.0, 0.2, 3.0]), 0.0).unwrap();
        assert_eq!(all.n_edges(), 2);
        let again = threshold_binarize(&bin.to_weighted("bin"), 1.0).unwrap();
        assert_eq!(again, bin);
        assert!(threshold_binarize(&net, -1.0).is_err());
    }

    #[test]
    fn pearson_basics() {
        let n = with_weights(&[1.0, 0.0, 5.0, 2.0, 0.0, 7.0]);
        assert_abs_diff_eq!(pearson_correlation(&n, &n).unwrap(), 1.0, epsilon = 1e-12);
        let affine = n.map_weights(|w| 2.5 * w + 3.0);
        assert_abs_diff_eq!(pearson_correlation(&n, &affine).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn pearson_negative_on_three_pairs() {
        // x = (1, 2, 3), y = 4 - x = (3, 2, 1): deviations are exact negatives.
        let a = with_weights(&[1.0, 2.0, 3.0]);
        let b = with_weights(&[3.0, 2.0, 1.0]);
        assert_abs_diff_eq!(pearson_correlation(&a, &b).unwrap(), -1.0, epsilon = 1e-12);
        let c = with_weights(&[0.0, 1.0, 5.0]);
        let d = with_weights(&[2.0, 0.0, 4.0]);
        // mx = 2, my = 2; dx = (-2, -1, 3), dy = (0, -2, 2)
        // sxy = 0 + 2 + 6 = 8; sxx = 14; syy = 8; r = 8 / sqrt(112)
        let expected = 8.0 / 112f64.sqrt();
        assert_abs_diff_eq!(pearson_correlation(&c, &d).unwrap(), expected, epsilon = 1e-12);
    }

    #[test]
    fn pearson_errors() {
        let zero = with_weights(&[0.0, 0.0, 0.0]);
        assert_eq!(pearson_correlation(&zero, &zero).unwrap_err(), NetopsError::BothConstant);
        let n = with_weights(&[0.0, 1.0, 0.0]);
        assert_eq!(pearson_correlation(&zero, &n).unwrap(), 0.0);
        let other = WeightedNetwork::new(["x", "y", "z"], "").unwrap();
        assert_eq!(pearson_correlation(&n, &other).unwrap_err(), NetopsError::NodeSetMismatch);
        let pair = with_weights(&[1.0]);
        assert_eq!(pearson_correlation(&pair, &pair).unwrap_err(), NetopsError::TooFewPairs);
    }

    #[test]
    fn excluding_joint_zeros_changes_the_sample() {
        let a = with_weights(&[1.0, 0.0, 2.0, 0.0, 0.0, 3.0]);
        let b = with_weights(&[2.0, 0.0, 1.0, 0.0, 0.0, 3.0]);
        let with = pearson_correlation(&a, &b).unwrap();
        let without = pearson_correlation_with(&a, &b, CorrelationOptions { include_zero_pairs: false })
            .unwrap();
        assert_abs_diff_eq!(without, 0.5, epsilon = 1e-12);
        assert!(with > without);
    }

    #[test]
    fn qap_identical_networks_significant_and_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let net = random_net(10, &mut rng);
        let s = permutation_significance(&net, &net, 1000, 42, CorrelationOptions::default()).unwrap();
        assert_abs_diff_eq!(s.observed, 1.0, epsilon = 1e-12);
        assert!(s.p_value <= 0.05, "p = {}", s.p_value);
        let again = permutation_significance(&net, &net, 1000, 42, CorrelationOptions::default()).unwrap();
        assert_eq!(s, again);
    }

    #[test]
    fn qap_independent_networks_have_central_median_p() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let mut ps: Vec<f64> = (0..50)
            .map(|t| {
                let a = random_net(10, &mut rng);
                let b = random_net(10, &mut rng);
                permutation_significance(&a, &b, 400, t, CorrelationOptions::default())
                    .unwrap()
                    .p_value
            })
            .collect();
        ps.sort_by(f64::total_cmp);
        let median = (ps[24] + ps[25]) / 2.0;
        assert!((0.3..=0.7).contains(&median), "median p = {median}");
    }

    #[test]
    fn qap_rejects_few_permutations() {
        let n = with_weights(&[1.0, 2.0, 3.0]);
        assert_eq!(
            permutation_significance(&n, &n, 0, 1, CorrelationOptions::default()).unwrap_err(),
            NetopsError::TooFewPermutations(0)
        );
    }

    #[test]
    fn qap_independent_of_thread_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random_net(8, &mut rng);
        let b = random_net(8, &mut rng);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| permutation_significance(&a, &b, 500, 9, CorrelationOptions::default()))
                .unwrap()
        };
        assert_eq!(run(1), run(4));
    }
}
