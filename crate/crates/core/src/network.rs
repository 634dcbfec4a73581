use std::collections::HashMap;
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NetworkError {
    #[error("duplicate node name `{0}`")]
    DuplicateNode(String),
    #[error("invalid node name {0:?}: must be non-empty and free of tabs and newlines")]
    InvalidNodeName(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("self-loop on `{0}` is not allowed")]
    SelfLoop(String),
    #[error("weight {weight} for ({a}, {b}) must be finite and non-negative")]
    InvalidWeight { a: String, b: String, weight: f64 },
    #[error("node sets differ")]
    NodeSetMismatch,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

/// Unordered pair of distinct character names, stored lexicographically.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Pair {
    a: String,
    b: String,
}

impl Pair {
    pub fn new(x: impl Into<String>, y: impl Into<String>) -> Result<Self, NetworkError> {
        let (x, y) = (x.into(), y.into());
        match x.cmp(&y) {
            std::cmp::Ordering::Less => Ok(Pair { a: x, b: y }),
            std::cmp::Ordering::Greater => Ok(Pair { a: y, b: x }),
            std::cmp::Ordering::Equal => Err(NetworkError::SelfLoop(x)),
        }
    }

    pub fn first(&self) -> &str {
        &self.a
    }

    pub fn second(&self) -> &str {
        &self.b
    }
}

impl fmt::Display for Pair {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.a, self.b)
    }
}

pub(crate) fn valid_name(name: &str) -> bool {
    !name.trim().is_empty() && !name.contains(['\t', '\n', '\r'])
}

/// Undirected, loop-free, non-negative weighted graph over a fixed node list.
///
/// Weights live in a dense upper triangle indexed by node position, so a
/// missing link and a zero weight are the same thing.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightedNetwork {
    nodes: Vec<String>,
    index: HashMap<String, usize>,
    weights: Vec<f64>,
    provenance: String,
}

impl WeightedNetwork {
    pub fn new<S: Into<String>>(
        nodes: impl IntoIterator<Item = S>,
        provenance: impl Into<String>,
    ) -> Result<Self, NetworkError> {
        let nodes: Vec<String> = nodes.into_iter().map(Into::into).collect();
        let mut index = HashMap::with_capacity(nodes.len());
        for (i, name) in nodes.iter().enumerate() {
            if !valid_name(name) {
                return Err(NetworkError::InvalidNodeName(name.clone()));
            }
            if index.insert(name.clone(), i).is_some() {
                return Err(NetworkError::DuplicateNode(name.clone()));
            }
        }
        let n = nodes.len();
        let provenance = provenance.into().replace(['\t', '\n', '\r'], " ");
        Ok(WeightedNetwork {
            nodes,
            index,
            weights: vec![0.0; n * n.saturating_sub(1) / 2],
            provenance,
        })
    }

    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    /// Number of unordered node pairs, n(n-1)/2.
    pub fn n_pairs(&self) -> usize {
        self.weights.len()
    }

    pub fn provenance(&self) -> &str {
        &self.provenance
    }

    pub fn with_provenance(mut self, provenance: impl Into<String>) -> Self {
        self.provenance = provenance.into().replace(['\t', '\n', '\r'], " ");
        self
    }

    pub fn node_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    fn slot(&self, i: usize, j: usize) -> usize {
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        let n = self.nodes.len();
        i * (2 * n - i - 1) / 2 + (j - i - 1)
    }

    fn indices(&self, a: &str, b: &str) -> Result<(usize, usize), NetworkError> {
        let i = self
            .node_index(a)
            .ok_or_else(|| NetworkError::UnknownNode(a.to_string()))?;
        let j = self
            .node_index(b)
            .ok_or_else(|| NetworkError::UnknownNode(b.to_string()))?;
        if i == j {
            return Err(NetworkError::SelfLoop(a.to_string()));
        }
        Ok((i, j))
    }

    /// Weight between two named nodes; 0 for an absent link.
    pub fn weight(&self, a: &str, b: &str) -> Result<f64, NetworkError> {
        let (i, j) = self.indices(a, b)?;
        Ok(self.weights[self.slot(i, j)])
    }

    /// Weight by node position. Panics if `i == j` or either is out of range.
    pub fn weight_at(&self, i: usize, j: usize) -> f64 {
        assert!(i != j, "no self-loops");
        self.weights[self.slot(i, j)]
    }

    pub fn set_weight(&mut self, a: &str, b: &str, weight: f64) -> Result<(), NetworkError> {
        let (i, j) = self.indices(a, b)?;
        check_weight(a, b, weight)?;
        let slot = self.slot(i, j);
        self.weights[slot] = weight;
        Ok(())
    }

    pub fn add_weight(&mut self, a: &str, b: &str, weight: f64) -> Result<(), NetworkError> {
        let (i, j) = self.indices(a, b)?;
        let slot = self.slot(i, j);
        let updated = self.weights[slot] + weight;
        check_weight(a, b, updated)?;
        self.weights[slot] = updated;
        Ok(())
    }

    pub(crate) fn set_weight_at(&mut self, i: usize, j: usize, weight: f64) {
        debug_assert!(weight.is_finite() && weight >= 0.0);
        let slot = self.slot(i, j);
        self.weights[slot] = weight;
    }

    /// All unordered index pairs `(i, j)`, `i < j`, in the fixed flattening order.
    pub fn pair_indices(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        let n = self.nodes.len();
        (0..n).flat_map(move |i| (i + 1..n).map(move |j| (i, j)))
    }

    /// Weights over all unordered pairs (zeros included) in [`Self::pair_indices`] order.
    pub fn weight_vector(&self) -> &[f64] {
        &self.weights
    }

    /// Links with positive weight as `(a, b, weight)` in node order.
    pub fn edges(&self) -> impl Iterator<Item = (&str, &str, f64)> + '_ {
        self.pair_indices()
            .zip(self.weights.iter())
            .filter(|(_, w)| **w > 0.0)
            .map(|((i, j), w)| (self.nodes[i].as_str(), self.nodes[j].as_str(), *w))
    }

    pub fn n_edges(&self) -> usize {
        self.weights.iter().filter(|w| **w > 0.0).count()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn max_weight(&self) -> f64 {
        self.weights.iter().copied().fold(0.0, f64::max)
    }

    /// Applies `f` to every pair weight, zeros included.
    ///
    /// Panics if `f` produces a negative or non-finite weight.
    pub fn map_weights(&self, f: impl Fn(f64) -> f64) -> Self {
        let mut out = self.clone();
        for w in &mut out.weights {
            let v = f(*w);
            assert!(v.is_finite() && v >= 0.0, "mapped weight {v} out of range");
            *w = v;
        }
        out
    }

    pub fn scaled(&self, factor: f64) -> Self {
        self.map_weights(|w| w * factor)
    }

    pub fn same_node_set(&self, other: &WeightedNetwork) -> bool {
        self.nodes.len() == other.nodes.len()
            && self.nodes.iter().all(|n| other.index.contains_key(n))
    }

    /// Re-expresses this network over `order`, which must be a permutation of its nodes.
    pub fn reordered<S: AsRef<str>>(&self, order: &[S]) -> Result<Self, NetworkError> {
        if order.len() != self.nodes.len() {
            return Err(NetworkError::NodeSetMismatch);
        }
        let mut map = Vec::with_capacity(order.len());
        for name in order {
            map.push(
                self.node_index(name.as_ref())
                    .ok_or(NetworkError::NodeSetMismatch)?,
            );
        }
        let mut out = WeightedNetwork::new(order.iter().map(|s| s.as_ref()), self.provenance.clone())?;
        for (i, j) in out.pair_indices().collect::<Vec<_>>() {
            let w = self.weight_at(map[i], map[j]);
            out.set_weight_at(i, j, w);
        }
        Ok(out)
    }

    /// Tab-separated edge list with a header and explicit node declarations.
    ///
    /// ```text
    /// #charnet-edgelist<TAB>nodes=3<TAB>provenance=demo
    /// #node<TAB>A
    /// #node<TAB>B
    /// #node<TAB>C
    /// A<TAB>B<TAB>2
    /// ```
    ///
    /// Weights use the shortest decimal form that parses back to the same
    /// `f64`, so writing then reading is bit-exact.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "#charnet-edgelist\tnodes={}\tprovenance={}",
            self.nodes.len(),
            self.provenance
        );
        for node in &self.nodes {
            let _ = writeln!(out, "#node\t{node}");
        }
        for (a, b, w) in self.edges() {
            let _ = writeln!(out, "{a}\t{b}\t{w}");
        }
        out
    }

    pub fn from_edge_list(text: &str) -> Result<Self, NetworkError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let (_, header) = lines.next().ok_or(NetworkError::Parse {
            line: 1,
            message: "empty input".into(),
        })?;
        let (n_nodes, provenance) = parse_header(header, "#charnet-edgelist")?;
        let n_nodes: usize = n_nodes
            .ok_or_else(|| parse_err(1, "header lacks nodes=<count>"))?
            .parse()
            .map_err(|_| parse_err(1, "nodes=<count> is not an integer"))?;
        let mut nodes = Vec::with_capacity(n_nodes);
        let mut edges = Vec::new();
        for (line, raw) in lines {
            if raw.is_empty() {
                continue;
            }
            if let Some(name) = raw.strip_prefix("#node\t") {
                if !edges.is_empty() {
                    return Err(parse_err(line, "node declaration after edges"));
                }
                nodes.push(name.to_string());
                continue;
            }
            if raw.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = raw.split('\t').collect();
            if fields.len() != 3 {
                return Err(parse_err(line, "expected `a<TAB>b<TAB>weight`"));
            }
            let w: f64 = fields[2]
                .parse()
                .map_err(|_| parse_err(line, &format!("bad weight `{}`", fields[2])))?;
            edges.push((line, fields[0], fields[1], w));
        }
        if nodes.len() != n_nodes {
            return Err(parse_err(
                1,
                &format!("header declares {n_nodes} nodes, found {}", nodes.len()),
            ));
        }
        let mut net =
            WeightedNetwork::new(nodes, provenance).map_err(|e| parse_err(1, &e.to_string()))?;
        for (line, a, b, w) in edges {
            if net.weight(a, b).map_err(|e| parse_err(line, &e.to_string()))? != 0.0 {
                return Err(parse_err(line, &format!("duplicate edge ({a}, {b})")));
            }
            net.set_weight(a, b, w)
                .map_err(|e| parse_err(line, &e.to_string()))?;
        }
        Ok(net)
    }

    /// Full symmetric matrix, rows and columns in node order, zero diagonal.
    pub fn to_matrix(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "#charnet-matrix\tprovenance={}", self.provenance);
        for node in &self.nodes {
            out.push('\t');
            out.push_str(node);
        }
        out.push('\n');
        let n = self.nodes.len();
        for i in 0..n {
            out.push_str(&self.nodes[i]);
            for j in 0..n {
                let w = if i == j { 0.0 } else { self.weight_at(i, j) };
                let _ = write!(out, "\t{w}");
            }
            out.push('\n');
        }
        out
    }

    pub fn from_matrix(text: &str) -> Result<Self, NetworkError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l))
            .filter(|(_, l)| !l.is_empty());
        let (_, header) = lines
            .next()
            .ok_or_else(|| parse_err(1, "empty input"))?;
        let (_, provenance) = parse_header(header, "#charnet-matrix")?;
        let (col_line, cols) = lines
            .next()
            .ok_or_else(|| parse_err(2, "missing column header"))?;
        let names: Vec<&str> = cols
            .strip_prefix('\t')
            .ok_or_else(|| parse_err(col_line, "column header must start with a tab"))?
            .split('\t')
            .collect();
        let n = names.len();
        let mut net = WeightedNetwork::new(names.iter().copied(), provenance)
            .map_err(|e| parse_err(col_line, &e.to_string()))?;
        let mut rows = vec![vec![0.0f64; n]; n];
        let mut seen = 0;
        for (line, raw) in lines {
            let fields: Vec<&str> = raw.split('\t').collect();
            if seen >= n {
                return Err(parse_err(line, "more rows than columns"));
            }
            if fields.len() != n + 1 || fields[0] != names[seen] {
                return Err(parse_err(
                    line,
                    &format!("row must be `{}` followed by {n} values", names[seen]),
                ));
            }
            for (j, f) in fields[1..].iter().enumerate() {
                rows[seen][j] = f
                    .parse()
                    .map_err(|_| parse_err(line, &format!("bad value `{f}`")))?;
            }
            seen += 1;
        }
        if seen != n {
            return Err(parse_err(col_line, &format!("expected {n} rows, found {seen}")));
        }
        for i in 0..n {
            if rows[i][i] != 0.0 {
                return Err(parse_err(col_line + 1 + i, "diagonal must be 0"));
            }
            for j in i + 1..n {
                if rows[i][j].to_bits() != rows[j][i].to_bits() {
                    return Err(parse_err(
                        col_line + 1 + j,
                        &format!("matrix not symmetric at ({}, {})", names[i], names[j]),
                    ));
                }
                net.set_weight(names[i], names[j], rows[i][j])
                    .map_err(|e| parse_err(col_line + 1 + i, &e.to_string()))?;
            }
        }
        Ok(net)
    }
}

fn check_weight(a: &str, b: &str, weight: f64) -> Result<(), NetworkError> {
    if weight.is_finite() && weight >= 0.0 {
        Ok(())
    } else {
        Err(NetworkError::InvalidWeight {
            a: a.to_string(),
            b: b.to_string(),
            weight,
        })
    }
}

fn parse_err(line: usize, message: &str) -> NetworkError {
    NetworkError::Parse {
        line,
        message: message.to_string(),
    }
}

/// Splits `magic<TAB>key=value...`, returning `nodes` and `provenance` values.
fn parse_header<'a>(
    header: &'a str,
    magic: &str,
) -> Result<(Option<&'a str>, &'a str), NetworkError> {
    let mut fields = header.split('\t');
    if fields.next() != Some(magic) {
        return Err(parse_err(1, &format!("expected `{magic}` header")));
    }
    let mut nodes = None;
    let mut provenance = "";
    for field in fields {
        match field.split_once('=') {
            Some(("nodes", v)) => nodes = Some(v),
            Some(("provenance", v)) => provenance = v,
            _ => return Err(parse_err(1, &format!("unrecognized header field `{field}`"))),
        }
    }
    Ok((nodes, provenance))
}
