//! Reader responses: validation, per-respondent networks, normalization.
//!
//! Task 1 is a time-ordered list of noticed interactions, each rated 1 to 10;
//! a pair may be entered repeatedly and its weight is the sum. Task 2 is a
//! lower-triangular matrix over all pairs rated 0 to 10, blank meaning 0.

mod format;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::CharacterRegistry;
use crate::extraction::{EventSource, InteractionEvent};
use crate::network::{valid_name, NetworkError, Pair, WeightedNetwork};
use crate::Warning;

pub use format::{
    ProfileRecord, Respondent, RespondentRecord, ResponseBundle, ResponseSet, Task1EntryRecord,
    Task2CellRecord, BUNDLE_FORMAT, BUNDLE_VERSION,
};

pub const TASK1_MIN: f64 = 1.0;
pub const TASK2_MIN: f64 = 0.0;
/// Upper bound of both scales; also the default pattern maximum.
pub const SCALE_MAX: f64 = 10.0;

#[derive(Debug, Error, PartialEq)]
pub enum SurveyError {
    #[error("respondent {respondent}, entry {entry}: unknown character `{name}`")]
    UnknownCharacter {
        respondent: String,
        entry: usize,
        name: String,
    },
    #[error("respondent {respondent}, entry {entry}: a character cannot interact with itself")]
    SelfPair { respondent: String, entry: usize },
    #[error("respondent {respondent}, entry {entry}: importance {value} outside [1, 10]")]
    ImportanceOutOfRange {
        respondent: String,
        entry: usize,
        value: f64,
    },
    #[error("respondent {respondent}, entry {entry}: entry_order must strictly increase")]
    EntryOrder { respondent: String, entry: usize },
    #[error("respondent {respondent}, cell {entry}: value {value} outside [0, 10]")]
    CellOutOfRange {
        respondent: String,
        entry: usize,
        value: f64,
    },
    #[error("respondent {respondent}, cell {entry}: pair {pair} given twice")]
    DuplicateCell {
        respondent: String,
        entry: usize,
        pair: String,
    },
    #[error("respondent {respondent}: story `{found}` does not match `{expected}`")]
    StoryMismatch {
        respondent: String,
        expected: String,
        found: String,
    },
    #[error("invalid respondent id {0:?}")]
    InvalidRespondentId(String),
    #[error("respondent {0} appears more than once")]
    DuplicateRespondent(String),
    #[error("profile {field}: {message}")]
    InvalidProfile { field: &'static str, message: String },
    #[error("no networks given")]
    NoNetworks,
    #[error("networks have different node sets")]
    NodeSetMismatch,
    #[error("network has no positive weight; no scaling factor exists")]
    AllZero,
    #[error("pattern maximum must be positive and finite, got {0}")]
    InvalidPattern(f64),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("response document: {0}")]
    Format(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
}

impl SurveyError {
    /// Location of the offending value inside a submitted payload, when there is one.
    pub fn field_path(&self) -> Option<String> {
        match self {
            SurveyError::UnknownCharacter { entry, .. }
            | SurveyError::SelfPair { entry, .. }
            | SurveyError::DuplicateCell { entry, .. } => Some(format!("[{entry}]")),
            SurveyError::ImportanceOutOfRange { entry, .. } => Some(format!("[{entry}].importance")),
            SurveyError::EntryOrder { entry, .. } => Some(format!("[{entry}].entry_order")),
            SurveyError::CellOutOfRange { entry, .. } => Some(format!("[{entry}].value")),
            SurveyError::InvalidProfile { field, .. } => Some(field.to_string()),
            _ => None,
        }
    }
}

/// Opaque respondent identity (a session token, never an address).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct RespondentId(String);

impl RespondentId {
    pub fn new(id: impl Into<String>) -> Result<Self, SurveyError> {
        let id = id.into();
        if valid_name(&id) && !id.contains(char::is_whitespace) {
            Ok(RespondentId(id))
        } else {
            Err(SurveyError::InvalidRespondentId(id))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for RespondentId {
    type Error = SurveyError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        RespondentId::new(value)
    }
}

impl From<RespondentId> for String {
    fn from(id: RespondentId) -> String {
        id.0
    }
}

impl fmt::Display for RespondentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task1Entry {
    pub pair: Pair,
    pub importance: f64,
    pub entry_order: u32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task1Response {
    pub respondent_id: RespondentId,
    pub story_id: String,
    pub entries: Vec<Task1Entry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Task2Response {
    pub respondent_id: RespondentId,
    pub story_id: String,
    /// Absent pairs are 0.
    pub cells: BTreeMap<Pair, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Female,
    Male,
    NonBinary,
    Undisclosed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EducationLevel {
    Secondary,
    Undergraduate,
    Postgraduate,
    Doctoral,
}

impl EducationLevel {
    pub fn ordinal(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcademicBackground {
    ArtsHumanities,
    SocialScience,
    ScienceMedical,
    Other,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RespondentProfile {
    pub respondent_id: RespondentId,
    pub gender: Gender,
    pub age: u16,
    pub education_level: EducationLevel,
    pub academic_background: AcademicBackground,
    pub contact_email: Option<String>,
}

fn check_pair(
    pair: &Pair,
    registry: Option<&CharacterRegistry>,
    respondent: &RespondentId,
    entry: usize,
) -> Result<(), SurveyError> {
    if let Some(reg) = registry {
        for name in [pair.first(), pair.second()] {
            if !reg.contains(name) {
                return Err(SurveyError::UnknownCharacter {
                    respondent: respondent.to_string(),
                    entry,
                    name: name.to_string(),
                });
            }
        }
    }
    Ok(())
}

fn check_story(
    story_id: &str,
    registry: Option<&CharacterRegistry>,
    respondent: &RespondentId,
) -> Result<(), SurveyError> {
    match registry {
        Some(reg) if reg.story_id() != story_id => Err(SurveyError::StoryMismatch {
            respondent: respondent.to_string(),
            expected: reg.story_id().to_string(),
            found: story_id.to_string(),
        }),
        _ => Ok(()),
    }
}

impl Task1Response {
    /// Range and order checks; character membership too when a registry is given.
    pub fn validate(&self, registry: Option<&CharacterRegistry>) -> Result<(), SurveyError> {
        check_story(&self.story_id, registry, &self.respondent_id)?;
        let mut last: Option<u32> = None;
        for (i, e) in self.entries.iter().enumerate() {
            check_pair(&e.pair, registry, &self.respondent_id, i)?;
            if !(TASK1_MIN..=SCALE_MAX).contains(&e.importance) {
                return Err(SurveyError::ImportanceOutOfRange {
                    respondent: self.respondent_id.to_string(),
                    entry: i,
                    value: e.importance,
                });
            }
            if last.is_some_and(|l| e.entry_order <= l) {
                return Err(SurveyError::EntryOrder {
                    respondent: self.respondent_id.to_string(),
                    entry: i,
                });
            }
            last = Some(e.entry_order);
        }
        Ok(())
    }

    /// Entries as interaction events positioned by entry order.
    pub fn events(&self) -> Vec<InteractionEvent> {
        self.entries
            .iter()
            .map(|e| InteractionEvent {
                pair: e.pair.clone(),
                weight: e.importance,
                position: e.entry_order as usize,
                source: EventSource::Task1,
            })
            .collect()
    }
}

impl Task2Response {
    pub fn validate(&self, registry: Option<&CharacterRegistry>) -> Result<(), SurveyError> {
        check_story(&self.story_id, registry, &self.respondent_id)?;
        for (i, (pair, v)) in self.cells.iter().enumerate() {
            check_pair(pair, registry, &self.respondent_id, i)?;
            if !(TASK2_MIN..=SCALE_MAX).contains(v) {
                return Err(SurveyError::CellOutOfRange {
                    respondent: self.respondent_id.to_string(),
                    entry: i,
                    value: *v,
                });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub enum Response<'a> {
    Task1(&'a Task1Response),
    Task2(&'a Task2Response),
}

/// One respondent's network over the full registry.
///
/// Task 1 weights are sums of entry importances and may exceed 10; Task 2
/// weights are the matrix cells.
pub fn respondent_network(
    response: Response<'_>,
    registry: &CharacterRegistry,
) -> Result<WeightedNetwork, SurveyError> {
    match response {
        Response::Task1(r) => {
            r.validate(Some(registry))?;
            let mut net = WeightedNetwork::new(
                registry.names(),
                format!("task1/{}", r.respondent_id),
            )?;
            for e in &r.entries {
                net.add_weight(e.pair.first(), e.pair.second(), e.importance)?;
            }
            Ok(net)
        }
        Response::Task2(r) => {
            r.validate(Some(registry))?;
            let mut net = WeightedNetwork::new(
                registry.names(),
                format!("task2/{}", r.respondent_id),
            )?;
            for (pair, v) in &r.cells {
                net.set_weight(pair.first(), pair.second(), *v)?;
            }
            Ok(net)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Democracy {
    pub networks: Vec<WeightedNetwork>,
    /// Multiplier applied to each input; 1 for skipped all-zero networks.
    pub factors: Vec<f64>,
    /// Common total weight after rescaling.
    pub target_total: f64,
    pub warnings: Vec<Warning>,
}

/// Rescales every respondent's network to the mean total weight.
///
/// Each respondent then contributes equally to later averages. Networks with
/// zero total pass through unchanged and do not enter the mean.
pub fn democracy_normalize(networks: &[WeightedNetwork]) -> Result<Democracy, SurveyError> {
    let first = networks.first().ok_or(SurveyError::NoNetworks)?;
    if networks.iter().any(|n| !n.same_node_set(first)) {
        return Err(SurveyError::NodeSetMismatch);
    }
    let totals: Vec<f64> = networks.iter().map(WeightedNetwork::total_weight).collect();
    let positive: Vec<f64> = totals.iter().copied().filter(|t| *t > 0.0).collect();
    let mut warnings = Vec::new();
    if positive.is_empty() {
        log::warn!("{}", Warning::AllZeroNetworks);
        warnings.push(Warning::AllZeroNetworks);
        return Ok(Democracy {
            networks: networks.to_vec(),
            factors: vec![1.0; networks.len()],
            target_total: 0.0,
            warnings,
        });
    }
    let target = positive.iter().sum::<f64>() / positive.len() as f64;
    let mut out = Vec::with_capacity(networks.len());
    let mut factors = Vec::with_capacity(networks.len());
    for (i, (net, total)) in networks.iter().zip(&totals).enumerate() {
        if *total > 0.0 {
            let factor = target / total;
            factors.push(factor);
            out.push(net.scaled(factor));
        } else {
            log::warn!("{}", Warning::ZeroNetworkSkipped(i));
            warnings.push(Warning::ZeroNetworkSkipped(i));
            factors.push(1.0);
            out.push(net.clone());
        }
    }
    Ok(Democracy {
        networks: out,
        factors,
        target_total: target,
        warnings,
    })
}

/// Per-pair arithmetic mean, in the first network's node order.
pub fn average_network(networks: &[WeightedNetwork]) -> Result<WeightedNetwork, SurveyError> {
    let first = networks.first().ok_or(SurveyError::NoNetworks)?;
    let mut sums = vec![0.0f64; first.n_pairs()];
    for net in networks {
        if !net.same_node_set(first) {
            return Err(SurveyError::NodeSetMismatch);
        }
        let aligned = net.reordered(first.nodes())?;
        for (s, w) in sums.iter_mut().zip(aligned.weight_vector()) {
            *s += w;
        }
    }
    let k = networks.len() as f64;
    let mut out = WeightedNetwork::new(
        first.nodes().iter().cloned(),
        format!("{}/mean-of-{}", first.provenance(), networks.len()),
    )?;
    let pairs: Vec<_> = out.pair_indices().collect();
    for ((i, j), s) in pairs.into_iter().zip(sums) {
        out.set_weight_at(i, j, s / k);
    }
    Ok(out)
}

/// Linear rescaling so the strongest link equals `pattern_max`.
pub fn scale_to_pattern(
    net: &WeightedNetwork,
    pattern_max: f64,
) -> Result<WeightedNetwork, SurveyError> {
    if !(pattern_max.is_finite() && pattern_max > 0.0) {
        return Err(SurveyError::InvalidPattern(pattern_max));
    }
    let max = net.max_weight();
    if max <= 0.0 {
        return Err(SurveyError::AllZero);
    }
    // w / max is exactly 1 at the maximum, so the result hits pattern_max exactly.
    Ok(net.map_weights(|w| w / max * pattern_max))
}
