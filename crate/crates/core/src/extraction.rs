//! Computer-detected interaction network from per-unit co-occurrence.
//!
//! Two characters interact in a unit when both are mentioned there. The
//! importance of that interaction is the product of their mention
//! frequencies, plus one when `plus_one` is set. A link's weight is the sum
//! of its per-unit importances.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{count_mentions, CharacterRegistry, MentionCounts, TextUnit};
use crate::network::{NetworkError, Pair, WeightedNetwork};

#[derive(Debug, Error, PartialEq)]
pub enum ExtractionError {
    #[error("registry has no characters; nothing to extract")]
    EmptyRegistry,
    #[error(transparent)]
    Network(#[from] NetworkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EventSource {
    Computer,
    Task1,
}

impl EventSource {
    fn as_str(self) -> &'static str {
        match self {
            EventSource::Computer => "computer",
            EventSource::Task1 => "task1",
        }
    }
}

/// One time-ordered interaction observation.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionEvent {
    pub pair: Pair,
    pub weight: f64,
    /// Unit index for the computer arm, entry order for Task 1.
    pub position: usize,
    pub source: EventSource,
}

/// Interactions within one unit, one per co-mentioned pair, in pair order.
pub fn unit_interactions(counts: &MentionCounts, plus_one: bool) -> Vec<InteractionEvent> {
    let present: Vec<(&String, u32)> = counts
        .counts
        .iter()
        .filter(|(_, f)| **f > 0)
        .map(|(k, f)| (k, *f))
        .collect();
    let mut events = Vec::new();
    for (i, (a, fa)) in present.iter().enumerate() {
        for (b, fb) in &present[i + 1..] {
            let product = f64::from(*fa) * f64::from(*fb);
            events.push(InteractionEvent {
                // BTreeMap keys are sorted and distinct, so (a, b) is canonical.
                pair: Pair::new(a.as_str(), b.as_str()).expect("distinct keys"),
                weight: if plus_one { product + 1.0 } else { product },
                position: counts.unit_index,
                source: EventSource::Computer,
            });
        }
    }
    events
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub network: WeightedNetwork,
    /// Events in unit order.
    pub events: Vec<InteractionEvent>,
}

/// Builds the co-occurrence network over every registry character.
///
/// Units are scanned in parallel; events come back in unit order and the
/// network is the pairwise sum of event weights.
pub fn extract_network(
    units: &[TextUnit],
    registry: &CharacterRegistry,
    plus_one: bool,
) -> Result<Extraction, ExtractionError> {
    if registry.is_empty() {
        return Err(ExtractionError::EmptyRegistry);
    }
    let kind = units.first().map_or("none".to_string(), |u| u.kind.to_string());
    let rule = if plus_one { "product+1" } else { "product" };
    let mut network = WeightedNetwork::new(registry.names(), format!("computer/{kind}/{rule}"))?;
    let per_unit: Vec<Vec<InteractionEvent>> = units
        .par_iter()
        .map(|u| unit_interactions(&count_mentions(u, registry), plus_one))
        .collect();
    let events: Vec<InteractionEvent> = per_unit.into_iter().flatten().collect();
    for e in &events {
        network.add_weight(e.pair.first(), e.pair.second(), e.weight)?;
    }
    Ok(Extraction { network, events })
}

/// Tab-separated event stream: header, then `position, a, b, weight, source`.
pub fn events_to_tsv(events: &[InteractionEvent]) -> String {
    let mut out = String::from("#charnet-events\tposition\ta\tb\tweight\tsource\n");
    for e in events {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}",
            e.position,
            e.pair.first(),
            e.pair.second(),
            e.weight,
            e.source.as_str()
        );
    }
    out
}

pub fn events_from_tsv(text: &str) -> Result<Vec<InteractionEvent>, NetworkError> {
    let err = |line: usize, message: String| NetworkError::Parse { line, message };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
    match lines.next() {
        Some((_, h)) if h.starts_with("#charnet-events") => {}
        _ => return Err(err(1, "expected `#charnet-events` header".into())),
    }
    let mut events = Vec::new();
    for (line, raw) in lines.filter(|(_, l)| !l.is_empty()) {
        let f: Vec<&str> = raw.split('\t').collect();
        if f.len() != 5 {
            return Err(err(line, "expected 5 tab-separated fields".into()));
        }
        let position = f[0]
            .parse()
            .map_err(|_| err(line, format!("bad position `{}`", f[0])))?;
        let weight: f64 = f[3]
            .parse()
            .map_err(|_| err(line, format!("bad weight `{}`", f[3])))?;
        if !(weight.is_finite() && weight > 0.0) {
            return Err(err(line, format!("weight {weight} must be positive")));
        }
        let source = match f[4] {
            "computer" => EventSource::Computer,
            "task1" => EventSource::Task1,
            other => return Err(err(line, format!("unknown source `{other}`"))),
        };
        let pair = Pair::new(f[1], f[2]).map_err(|e| err(line, e.to_string()))?;
        events.push(InteractionEvent {
            pair,
            weight,
            position,
            source,
        });
    }
    Ok(events)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{segment_paragraphs, UnitKind};
    use std::collections::BTreeMap;

    fn counts(index: usize, pairs: &[(&str, u32)]) -> MentionCounts {
        MentionCounts {
            unit_index: index,
            counts: pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect::<BTreeMap<_, _>>(),
        }
    }

    #[test]
    fn plus_one_on_single_mentions() {
        let ev = unit_interactions(&counts(3, &[("A", 1), ("B", 1)]), true);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].pair, Pair::new("A", "B").unwrap());
        assert_eq!(ev[0].weight, 2.0);
        assert_eq!(ev[0].position, 3);
    }

    #[test]
    fn product_without_plus_one() {
        let ev = unit_interactions(&counts(0, &[("A", 2), ("B", 3)]), false);
        assert_eq!(ev[0].weight, 6.0);
    }

    #[test]
    fn lone_character_emits_nothing() {
        assert!(unit_interactions(&counts(0, &[("A", 4)]), true).is_empty());
        assert!(unit_interactions(&counts(0, &[("A", 4), ("B", 0)]), true).is_empty());
    }

    #[test]
    fn three_characters_give_three_pairs() {
        let ev = unit_interactions(&counts(0, &[("C", 1), ("A", 2), ("B", 3)]), true);
        let got: Vec<(String, f64)> = ev.iter().map(|e| (e.pair.to_string(), e.weight)).collect();
        assert_eq!(
            got,
            vec![("(A, B)".into(), 7.0), ("(A, C)".into(), 3.0), ("(B, C)".into(), 4.0)]
        );
    }

    fn registry() -> CharacterRegistry {
        CharacterRegistry::new("s", [("Ann", vec!["Annie"]), ("Bob", vec![]), ("Cy", vec![])])
            .unwrap()
    }

    #[test]
    fn sums_over_units() {
        let units = segment_paragraphs("Ann and Bob.\n\nBob with Annie.\n\nCy alone.");
        let x = extract_network(&units, &registry(), true).unwrap();
        assert_eq!(x.network.weight("Ann", "Bob").unwrap(), 4.0);
        assert_eq!(x.network.weight("Ann", "Cy").unwrap(), 0.0);
        assert_eq!(x.network.nodes(), ["Ann", "Bob", "Cy"]);
        assert_eq!(x.events.iter().map(|e| e.position).collect::<Vec<_>>(), [0, 1]);
        assert_eq!(x.network.provenance(), "computer/paragraph/product+1");
    }

    #[test]
    fn no_cooccurrence_gives_zero_network() {
        let units = segment_paragraphs("Ann.\n\nBob.\n\nCy.");
        let x = extract_network(&units, &registry(), true).unwrap();
        assert_eq!(x.network.total_weight(), 0.0);
        assert!(x.events.is_empty());
        assert_eq!(x.network.n_nodes(), 3);
    }

    #[test]
    fn empty_registry_is_an_error() {
        let empty: Vec<(&str, Vec<&str>)> = vec![];
        let reg = CharacterRegistry::new("s", empty).unwrap();
        assert_eq!(
            extract_network(&[], &reg, true).unwrap_err(),
            ExtractionError::EmptyRegistry
        );
    }

    #[test]
    fn permuting_units_keeps_weights() {
        let mut units = segment_paragraphs("Ann Bob Bob.\n\nCy Ann.\n\nBob Cy Cy Ann.");
        let a = extract_network(&units, &registry(), true).unwrap();
        units.reverse();
        let b = extract_network(&units, &registry(), true).unwrap();
        assert_eq!(a.network, b.network);
        assert_ne!(a.events, b.events);
    }

    #[test]
    fn events_tsv_round_trip() {
        let units = segment_paragraphs("Ann Bob Bob.\n\nCy Ann.");
        let x = extract_network(&units, &registry(), false).unwrap();
        let text = events_to_tsv(&x.events);
        assert_eq!(events_from_tsv(&text).unwrap(), x.events);
        assert!(events_from_tsv("#charnet-events\n1\tA\tA\t2\tcomputer\n").is_err());
        assert_eq!(units[0].kind, UnitKind::Paragraph);
    }
}
