//! Climax curves: summed interaction importance over consecutive parts of
//! narrative time, for the computer arm (word-balanced unit blocks) and the
//! human arm (blocks of Task 1 entries).

use std::collections::HashMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::corpus::TextUnit;
use crate::extraction::InteractionEvent;
use crate::survey::Task1Response;
use crate::Warning;

pub const DEFAULT_PARTS: usize = 4;
const ROUNDING_SLACK: f64 = 1e-12;

pub const DEFAULT_SHAPE_TOLERANCE: f64 = 0.05;

#[derive(Debug, Error, PartialEq)]
pub enum ClimaxError {
    #[error("need at least one part")]
    NoParts,
    #[error("{parts} parts requested but only {units} units available")]
    TooManyParts { parts: usize, units: usize },
    #[error("event at position {0} refers to no unit")]
    UnknownPosition(usize),
    #[error("no respondent has any entries")]
    NoEntries,
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CurveSource {
    Computer,
    Human,
}

impl fmt::Display for CurveSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CurveSource::Computer => "computer",
            CurveSource::Human => "human",
        })
    }
}

impl FromStr for CurveSource {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "computer" => Ok(CurveSource::Computer),
            "human" => Ok(CurveSource::Human),
            other => Err(format!("unknown curve source `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClimaxCurve {
    pub source: CurveSource,
    /// Raw importance per part.
    pub sums: Vec<f64>,
    /// Sums to 1 unless everything is zero.
    pub normalized: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClimaxShape {
    Climax,
    AntiClimax,
    Flat,
    Other,
}

impl fmt::Display for ClimaxShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ClimaxShape::Climax => "climax",
            ClimaxShape::AntiClimax => "anti_climax",
            ClimaxShape::Flat => "flat",
            ClimaxShape::Other => "other",
        })
    }
}

fn normalize(sums: &[f64]) -> Vec<f64> {
    let total: f64 = sums.iter().sum();
    if total > 0.0 {
        sums.iter().map(|s| s / total).collect()
    } else {
        vec![0.0; sums.len()]
    }
}

/// Part index for each unit, in the order given.
///
/// A part is closed as soon as its word count reaches the remaining words
/// divided by the remaining parts. Units are never split, every part gets at
/// least one unit, and the last part takes whatever is left.
pub fn partition_units(units: &[TextUnit], n_parts: usize) -> Result<Vec<usize>, ClimaxError> {
    if n_parts == 0 {
        return Err(ClimaxError::NoParts);
    }
    if n_parts > units.len() {
        return Err(ClimaxError::TooManyParts {
            parts: n_parts,
            units: units.len(),
        });
    }
    let mut remaining: usize = units.iter().map(|u| u.word_count).sum();
    let mut part = 0;
    let mut acc = 0;
    let mut budget = remaining as f64 / n_parts as f64;
    let mut out = Vec::with_capacity(units.len());
    for (i, u) in units.iter().enumerate() {
        out.push(part);
        acc += u.word_count;
        let parts_after = n_parts - part - 1;
        if parts_after == 0 {
            continue;
        }
        let units_after = units.len() - i - 1;
        if acc as f64 >= budget || units_after == parts_after {
            remaining -= acc;
            acc = 0;
            part += 1;
            budget = remaining as f64 / parts_after as f64;
        }
    }
    Ok(out)
}

/// Each event's weight accrues to the part holding its unit.
pub fn computer_climax(
    units: &[TextUnit],
    events: &[InteractionEvent],
    n_parts: usize,
) -> Result<ClimaxCurve, ClimaxError> {
    let parts = partition_units(units, n_parts)?;
    let by_index: HashMap<usize, usize> = units.iter().map(|u| u.index).zip(parts).collect();
    let mut sums = vec![0.0; n_parts];
    for e in events {
        let part = by_index
            .get(&e.position)
            .ok_or(ClimaxError::UnknownPosition(e.position))?;
        sums[*part] += e.weight;
    }
    Ok(ClimaxCurve {
        source: CurveSource::Computer,
        normalized: normalize(&sums),
        sums,
    })
}

/// Block sizes for `len` items in `n_parts` contiguous blocks; the remainder
/// goes to the earliest blocks, so short inputs leave trailing blocks empty.
pub fn block_sizes(len: usize, n_parts: usize) -> Vec<usize> {
    let base = len / n_parts;
    let extra = len % n_parts;
    (0..n_parts).map(|k| base + usize::from(k < extra)).collect()
}

/// Per-respondent block sums in entry order.
fn respondent_sums(response: &Task1Response, n_parts: usize) -> Vec<f64> {
    let mut entries: Vec<_> = response.entries.iter().collect();
    entries.sort_by_key(|e| e.entry_order);
    let mut sums = Vec::with_capacity(n_parts);
    let mut rest = entries.as_slice();
    for size in block_sizes(entries.len(), n_parts) {
        let (block, tail) = rest.split_at(size);
        sums.push(block.iter().map(|e| e.importance).sum());
        rest = tail;
    }
    sums
}

#[derive(Debug, Clone, PartialEq)]
pub struct HumanClimax {
    /// `sums` are raw totals over respondents; `normalized` is the mean of
    /// per-respondent normalized curves.
    pub curve: ClimaxCurve,
    pub respondents: usize,
    pub warnings: Vec<Warning>,
}

pub fn human_climax(
    responses: &[Task1Response],
    n_parts: usize,
) -> Result<HumanClimax, ClimaxError> {
    if n_parts == 0 {
        return Err(ClimaxError::NoParts);
    }
    let warnings: Vec<Warning> = responses
        .iter()
        .filter(|r| r.entries.is_empty())
        .map(|r| Warning::EmptyRespondent(r.respondent_id.to_string()))
        .collect();
    let per: Vec<Vec<f64>> = responses
        .par_iter()
        .filter(|r| !r.entries.is_empty())
        .map(|r| respondent_sums(r, n_parts))
        .collect();
    if per.is_empty() {
        return Err(ClimaxError::NoEntries);
    }
    let mut sums = vec![0.0; n_parts];
    let mut normalized = vec![0.0; n_parts];
    for s in &per {
        for (k, v) in normalize(s).into_iter().enumerate() {
            normalized[k] += v;
            sums[k] += s[k];
        }
    }
    let k = per.len() as f64;
    normalized.iter_mut().for_each(|v| *v /= k);
    Ok(HumanClimax {
        curve: ClimaxCurve {
            source: CurveSource::Human,
            sums,
            normalized,
        },
        respondents: per.len(),
        warnings,
    })
}

/// Shape of a normalized curve.
///
/// Flat when the spread is within `tol`. Climax when the first maximum comes
/// after the opening part, nothing after it rises by more than `tol`, and it
/// stands more than `tol` above the mean of the two endpoints. Anti-climax
/// when no step rises by more than `tol` and the curve ends more than `tol`
/// below where it started.
pub fn classify_shape(normalized: &[f64], tol: f64) -> ClimaxShape {
    if normalized.is_empty() {
        return ClimaxShape::Flat;
    }
    let tol = tol + ROUNDING_SLACK;
    let max = normalized.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = normalized.iter().copied().fold(f64::INFINITY, f64::min);
    if max - min <= tol {
        return ClimaxShape::Flat;
    }
    let first = normalized[0];
    let last = normalized[normalized.len() - 1];
    let peak = normalized
        .iter()
        .position(|v| max - *v <= ROUNDING_SLACK)
        .unwrap_or(0);
    let no_rise = |s: &[f64]| s.windows(2).all(|w| w[1] - w[0] <= tol);
    if peak > 0 && no_rise(&normalized[peak..]) && max - (first + last) / 2.0 > tol {
        return ClimaxShape::Climax;
    }
    if no_rise(normalized) && first - last > tol {
        return ClimaxShape::AntiClimax;
    }
    ClimaxShape::Other
}

impl ClimaxCurve {
    pub fn n_parts(&self) -> usize {
        self.sums.len()
    }

    pub fn shape(&self, tol: f64) -> ClimaxShape {
        classify_shape(&self.normalized, tol)
    }

    /// `#charnet-climax` header, column line, then `part, sum, normalized`.
    pub fn to_tsv(&self) -> String {
        let mut out = format!("#charnet-climax\tsource={}\npart\tsum\tnormalized\n", self.source);
        for (k, (s, n)) in self.sums.iter().zip(&self.normalized).enumerate() {
            let _ = writeln!(out, "{}\t{}\t{}", k + 1, s, n);
        }
        out
    }

    pub fn from_tsv(text: &str) -> Result<Self, ClimaxError> {
        let err = |line: usize, message: String| ClimaxError::Parse { line, message };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let source = match lines.next() {
            Some((_, h)) => h
                .strip_prefix("#charnet-climax\tsource=")
                .ok_or_else(|| err(1, "expected `#charnet-climax` header".into()))?
                .parse()
                .map_err(|m| err(1, m))?,
            None => return Err(err(1, "empty input".into())),
        };
        match lines.next() {
            Some((_, "part\tsum\tnormalized")) => {}
            _ => return Err(err(2, "expected column line `part\tsum\tnormalized`".into())),
        }
        let mut sums = Vec::new();
        let mut normalized = Vec::new();
        for (line, raw) in lines.filter(|(_, l)| !l.is_empty()) {
            let f: Vec<&str> = raw.split('\t').collect();
            if f.len() != 3 {
                return Err(err(line, "expected 3 tab-separated fields".into()));
            }
            if f[0].parse::<usize>().ok() != Some(sums.len() + 1) {
                return Err(err(line, format!("expected part {}", sums.len() + 1)));
            }
            let num = |s: &str| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite() && *v >= 0.0)
                    .ok_or_else(|| err(line, format!("bad value `{s}`")))
            };
            sums.push(num(f[1])?);
            normalized.push(num(f[2])?);
        }
        Ok(ClimaxCurve {
            source,
            sums,
            normalized,
        })
    }

    /// Bar chart of the normalized curve as a standalone SVG document.
    pub fn to_svg(&self, title: &str) -> String {
        const W: f64 = 480.0;
        const H: f64 = 300.0;
        const PAD: f64 = 40.0;
        let n = self.normalized.len().max(1) as f64;
        let top = self.normalized.iter().copied().fold(0.0, f64::max).max(1e-12);
        let slot = (W - 2.0 * PAD) / n;
        let mut out = String::new();
        let _ = writeln!(
            out,
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{W}\" height=\"{H}\" viewBox=\"0 0 {W} {H}\">"
        );
        let _ = writeln!(
            out,
            "<text x=\"{}\" y=\"20\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"14\">{}</text>",
            W / 2.0,
            escape_xml(title)
        );
        let _ = writeln!(
            out,
            "<line x1=\"{PAD}\" y1=\"{0}\" x2=\"{1}\" y2=\"{0}\" stroke=\"black\"/>",
            H - PAD,
            W - PAD
        );
        let mut points = Vec::new();
        for (k, v) in self.normalized.iter().enumerate() {
            let h = v / top * (H - 2.0 * PAD - 10.0);
            let x = PAD + k as f64 * slot;
            let _ = writeln!(
                out,
                "<rect x=\"{:.2}\" y=\"{:.2}\" width=\"{:.2}\" height=\"{:.2}\" fill=\"#8aa\"/>",
                x + slot * 0.15,
                H - PAD - h,
                slot * 0.7,
                h
            );
            let _ = writeln!(
                out,
                "<text x=\"{:.2}\" y=\"{:.2}\" text-anchor=\"middle\" font-family=\"sans-serif\" font-size=\"11\">{}: {:.3}</text>",
                x + slot / 2.0,
                H - PAD + 16.0,
                k + 1,
                v
            );
            points.push(format!("{:.2},{:.2}", x + slot / 2.0, H - PAD - h));
        }
        let _ = writeln!(
            out,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"#c33\" stroke-width=\"2\"/>",
            points.join(" ")
        );
        out.push_str("</svg>\n");
        out
    }
}

fn escape_xml(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{segment_paragraphs, UnitKind};
    use crate::extraction::EventSource;
    use crate::survey::{RespondentId, Task1Entry};
    use crate::Pair;
    use proptest::prelude::*;

    fn unit(index: usize, words: usize) -> TextUnit {
        let text = vec!["w"; words].join(" ");
        TextUnit {
            index,
            kind: UnitKind::Paragraph,
            word_count: words,
            text,
            char_offset: 0,
        }
    }

    fn event(position: usize, weight: f64) -> InteractionEvent {
        InteractionEvent {
            pair: Pair::new("A", "B").unwrap(),
            weight,
            position,
            source: EventSource::Computer,
        }
    }

    fn response(id: &str, importances: &[f64]) -> Task1Response {
        Task1Response {
            respondent_id: RespondentId::new(id).unwrap(),
            story_id: "s".into(),
            entries: importances
                .iter()
                .enumerate()
                .map(|(i, w)| Task1Entry {
                    pair: Pair::new("A", "B").unwrap(),
                    importance: *w,
                    entry_order: i as u32,
                })
                .collect(),
        }
    }

    #[test]
    fn uniform_units_uniform_curve() {
        let units: Vec<_> = (0..4).map(|i| unit(i, 10)).collect();
        let events: Vec<_> = (0..4).map(|i| event(i, 3.0)).collect();
        let c = computer_climax(&units, &events, 4).unwrap();
        assert_eq!(c.sums, [3.0; 4]);
        assert_eq!(c.normalized, [0.25; 4]);
        assert_eq!(c.shape(DEFAULT_SHAPE_TOLERANCE), ClimaxShape::Flat);
    }

    #[test]
    fn everything_in_first_unit() {
        let units: Vec<_> = (0..8).map(|i| unit(i, 5)).collect();
        let c = computer_climax(&units, &[event(0, 2.0), event(0, 5.0)], 4).unwrap();
        assert_eq!(c.normalized, [1.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn partition_balances_words() {
        let units: Vec<_> = [30, 10, 10, 10, 20, 20, 40].iter().enumerate().map(|(i, w)| unit(i, *w)).collect();
        // Budgets 35, 100/3, 30: the third part closes early to leave a unit for the fourth.
        assert_eq!(partition_units(&units, 4).unwrap(), [0, 0, 1, 1, 1, 2, 3]);
        assert_eq!(partition_units(&units, 1).unwrap(), [0; 7]);
        assert_eq!(partition_units(&units, 7).unwrap(), [0, 1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn every_part_gets_a_unit() {
        let units = [unit(0, 100), unit(1, 0), unit(2, 0), unit(3, 0)];
        assert_eq!(partition_units(&units, 4).unwrap(), [0, 1, 2, 3]);
        let units = [unit(0, 1), unit(1, 1), unit(2, 1), unit(3, 100)];
        assert_eq!(partition_units(&units, 2).unwrap(), [0, 0, 0, 1]);
    }

    #[test]
    fn partition_errors() {
        let units: Vec<_> = (0..3).map(|i| unit(i, 5)).collect();
        assert_eq!(partition_units(&units, 0).unwrap_err(), ClimaxError::NoParts);
        assert_eq!(
            partition_units(&units, 4).unwrap_err(),
            ClimaxError::TooManyParts { parts: 4, units: 3 }
        );
        assert_eq!(
            computer_climax(&units, &[event(9, 1.0)], 2).unwrap_err(),
            ClimaxError::UnknownPosition(9)
        );
    }

    #[test]
    fn human_equal_entries() {
        let h = human_climax(&[response("r1", &[1.0, 1.0, 1.0, 1.0])], 4).unwrap();
        assert_eq!(h.curve.normalized, [0.25; 4]);
    }

    #[test]
    fn human_heavy_last_entry() {
        let h = human_climax(&[response("r1", &[1.0, 1.0, 1.0, 7.0])], 4).unwrap();
        assert_eq!(h.curve.normalized, [0.1, 0.1, 0.1, 0.7]);
    }

    #[test]
    fn human_mean_of_respondent_curves() {
        // r1: blocks [2+2, 4, 8, 4] = [4,4,8,4] -> /20; r2: [1,1,1,1] -> /4
        let r1 = response("r1", &[2.0, 2.0, 4.0, 8.0, 4.0]);
        let r2 = response("r2", &[1.0, 1.0, 1.0, 1.0]);
        let h = human_climax(&[r1, r2], 4).unwrap();
        let expect = [
            (4.0 / 20.0 + 0.25) / 2.0,
            (4.0 / 20.0 + 0.25) / 2.0,
            (8.0 / 20.0 + 0.25) / 2.0,
            (4.0 / 20.0 + 0.25) / 2.0,
        ];
        for (g, e) in h.curve.normalized.iter().zip(expect) {
            assert!((g - e).abs() < 1e-15);
        }
        assert_eq!(h.curve.sums, [5.0, 5.0, 9.0, 5.0]);
    }

    #[test]
    fn human_ordering_and_short_responses() {
        let mut r = response("r1", &[3.0, 1.0]);
        r.entries.reverse();
        let h = human_climax(&[r], 4).unwrap();
        assert_eq!(h.curve.sums, [3.0, 1.0, 0.0, 0.0]);
        assert_eq!(block_sizes(7, 4), [2, 2, 2, 1]);
    }

    #[test]
    fn empty_respondents_are_excluded() {
        let h = human_climax(&[response("r1", &[]), response("r2", &[2.0])], 2).unwrap();
        assert_eq!(h.respondents, 1);
        assert_eq!(h.warnings, [Warning::EmptyRespondent("r1".into())]);
        assert_eq!(human_climax(&[response("r1", &[])], 2).unwrap_err(), ClimaxError::NoEntries);
    }

    #[test]
    fn shape_examples() {
        let tol = DEFAULT_SHAPE_TOLERANCE;
        assert_eq!(classify_shape(&[0.25, 0.25, 0.25, 0.25], tol), ClimaxShape::Flat);
        assert_eq!(classify_shape(&[0.4, 0.3, 0.2, 0.1], tol), ClimaxShape::AntiClimax);
        assert_eq!(classify_shape(&[0.1, 0.2, 0.5, 0.2], tol), ClimaxShape::Climax);
        assert_eq!(classify_shape(&[0.1, 0.2, 0.3, 0.4], tol), ClimaxShape::Climax);
        assert_eq!(classify_shape(&[0.4, 0.1, 0.1, 0.4], tol), ClimaxShape::Other);
        assert_eq!(classify_shape(&[0.3, 0.1, 0.5, 0.1], tol), ClimaxShape::Climax);
        assert_eq!(classify_shape(&[0.2, 0.5, 0.1, 0.2], tol), ClimaxShape::Other);
    }

    #[test]
    fn tsv_round_trip_and_svg() {
        let units = segment_paragraphs("a b\n\nc\n\nd e f\n\ng");
        let c = computer_climax(&units, &[event(1, 2.0), event(2, 0.1), event(3, 7.0)], 3).unwrap();
        assert_eq!(ClimaxCurve::from_tsv(&c.to_tsv()).unwrap(), c);
        assert!(ClimaxCurve::from_tsv("#charnet-climax\tsource=x\n").is_err());
        let svg = c.to_svg("a < b");
        assert!(svg.starts_with("<svg") && svg.ends_with("</svg>\n"));
        assert!(svg.contains("a &lt; b"));
    }

    fn corpus() -> impl Strategy<Value = (Vec<usize>, Vec<(usize, u32)>, usize)> {
        (1usize..40).prop_flat_map(|n| {
            (
                prop::collection::vec(0usize..50, n),
                prop::collection::vec((0..n, 1u32..100), 0..80),
                1..=n,
            )
        })
    }

    proptest! {
        #[test]
        fn parts_conserve_weight((words, evs, parts) in corpus()) {
            let units: Vec<_> = words.iter().enumerate().map(|(i, w)| unit(i, *w)).collect();
            let events: Vec<_> = evs.iter().map(|(p, w)| event(*p, f64::from(*w))).collect();
            let c = computer_climax(&units, &events, parts).unwrap();
            let total: f64 = events.iter().map(|e| e.weight).sum();
            prop_assert_eq!(c.sums.iter().sum::<f64>(), total);
            let assignment = partition_units(&units, parts).unwrap();
            prop_assert_eq!(assignment[0], 0);
            prop_assert_eq!(*assignment.last().unwrap(), parts - 1);
            prop_assert!(assignment.windows(2).all(|w| w[1] == w[0] || w[1] == w[0] + 1));
        }

        #[test]
        fn scaling_weights_keeps_shape((words, evs, parts) in corpus(), c in 0.001f64..1000.0) {
            let units: Vec<_> = words.iter().enumerate().map(|(i, w)| unit(i, *w)).collect();
            let events: Vec<_> = evs.iter().map(|(p, w)| event(*p, f64::from(*w))).collect();
            let scaled: Vec<_> = evs.iter().map(|(p, w)| event(*p, f64::from(*w) * c)).collect();
            let a = computer_climax(&units, &events, parts).unwrap();
            let b = computer_climax(&units, &scaled, parts).unwrap();
            for (x, y) in a.normalized.iter().zip(&b.normalized) {
                prop_assert!((x - y).abs() < 1e-12);
            }
            prop_assert_eq!(a.shape(DEFAULT_SHAPE_TOLERANCE), b.shape(DEFAULT_SHAPE_TOLERANCE));
        }

        #[test]
        fn human_curve_is_a_distribution(ws in prop::collection::vec(prop::collection::vec(1u8..=10, 1..30), 1..6)) {
            let rs: Vec<_> = ws.iter().enumerate()
                .map(|(i, w)| response(&format!("r{i}"), &w.iter().map(|v| f64::from(*v)).collect::<Vec<_>>()))
                .collect();
            let h = human_climax(&rs, 4).unwrap();
            prop_assert!((h.curve.normalized.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            let total: f64 = ws.iter().flatten().map(|v| f64::from(*v)).sum();
            prop_assert_eq!(h.curve.sums.iter().sum::<f64>(), total);
        }
    }
}
