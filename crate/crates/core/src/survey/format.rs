//! Response import/export.
//!
//! Two interchangeable encodings of a [`ResponseSet`]:
//!
//! * a JSON bundle ([`ResponseBundle`]), which is also what the collector
//!   service exports;
//! * a tab-separated line format, one record per line:
//!
//! ```text
//! #charnet-responses	story=teacher
//! task1	r1
//! task1	r1	0	George Willard	Kate Swift	7
//! task2	r1
//! task2	r1	George Willard	Kate Swift	4
//! profile	r1	female	34	undergraduate	science_medical
//! ```
//!
//! A two-field `task1`/`task2` line declares that the respondent completed
//! the task, so an all-blank Task 2 survives a round trip.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{
    AcademicBackground, EducationLevel, Gender, RespondentId, RespondentProfile, SurveyError,
    Task1Entry, Task1Response, Task2Response,
};
use crate::corpus::CharacterRegistry;
use crate::network::Pair;

pub const BUNDLE_FORMAT: &str = "charnet-responses";
pub const BUNDLE_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResponseBundle {
    pub format: String,
    pub version: u32,
    pub story_id: String,
    pub respondents: Vec<RespondentRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RespondentRecord {
    pub respondent_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task1: Option<Vec<Task1EntryRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task2: Option<Vec<Task2CellRecord>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<ProfileRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Task1EntryRecord {
    pub a: String,
    pub b: String,
    pub importance: f64,
    pub entry_order: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Task2CellRecord {
    pub a: String,
    pub b: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileRecord {
    pub gender: Gender,
    pub age: u16,
    pub education_level: EducationLevel,
    pub academic_background: AcademicBackground,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub contact_email: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Respondent {
    pub id: RespondentId,
    pub task1: Option<Task1Response>,
    pub task2: Option<Task2Response>,
    pub profile: Option<RespondentProfile>,
}

/// All responses collected for one story.
#[derive(Debug, Clone, PartialEq)]
pub struct ResponseSet {
    pub story_id: String,
    pub respondents: Vec<Respondent>,
}

fn pair_of(a: &str, b: &str, respondent: &RespondentId, entry: usize) -> Result<Pair, SurveyError> {
    Pair::new(a, b).map_err(|_| SurveyError::SelfPair {
        respondent: respondent.to_string(),
        entry,
    })
}

impl Task1Response {
    pub fn from_records(
        respondent_id: RespondentId,
        story_id: &str,
        records: &[Task1EntryRecord],
        registry: Option<&CharacterRegistry>,
    ) -> Result<Self, SurveyError> {
        let entries = records
            .iter()
            .enumerate()
            .map(|(i, r)| {
                Ok(Task1Entry {
                    pair: pair_of(&r.a, &r.b, &respondent_id, i)?,
                    importance: r.importance,
                    entry_order: r.entry_order,
                })
            })
            .collect::<Result<Vec<_>, SurveyError>>()?;
        let response = Task1Response {
            respondent_id,
            story_id: story_id.to_string(),
            entries,
        };
        response.validate(registry)?;
        Ok(response)
    }

    pub fn to_records(&self) -> Vec<Task1EntryRecord> {
        self.entries
            .iter()
            .map(|e| Task1EntryRecord {
                a: e.pair.first().to_string(),
                b: e.pair.second().to_string(),
                importance: e.importance,
                entry_order: e.entry_order,
            })
            .collect()
    }
}

impl Task2Response {
    pub fn from_records(
        respondent_id: RespondentId,
        story_id: &str,
        records: &[Task2CellRecord],
        registry: Option<&CharacterRegistry>,
    ) -> Result<Self, SurveyError> {
        let mut cells = BTreeMap::new();
        for (i, r) in records.iter().enumerate() {
            let pair = pair_of(&r.a, &r.b, &respondent_id, i)?;
            if let Some(reg) = registry {
                for name in [&r.a, &r.b] {
                    if !reg.contains(name) {
                        return Err(SurveyError::UnknownCharacter {
                            respondent: respondent_id.to_string(),
                            entry: i,
                            name: name.clone(),
                        });
                    }
                }
            }
            if !(super::TASK2_MIN..=super::SCALE_MAX).contains(&r.value) {
                return Err(SurveyError::CellOutOfRange {
                    respondent: respondent_id.to_string(),
                    entry: i,
                    value: r.value,
                });
            }
            let label = pair.to_string();
            if cells.insert(pair, r.value).is_some() {
                return Err(SurveyError::DuplicateCell {
                    respondent: respondent_id.to_string(),
                    entry: i,
                    pair: label,
                });
            }
        }
        cells.retain(|_, v| *v != 0.0);
        let response = Task2Response {
            respondent_id,
            story_id: story_id.to_string(),
            cells,
        };
        response.validate(registry)?;
        Ok(response)
    }

    /// Non-zero cells only; blanks are implied.
    pub fn to_records(&self) -> Vec<Task2CellRecord> {
        self.cells
            .iter()
            .filter(|(_, v)| **v != 0.0)
            .map(|(p, v)| Task2CellRecord {
                a: p.first().to_string(),
                b: p.second().to_string(),
                value: *v,
            })
            .collect()
    }
}

impl RespondentProfile {
    pub fn from_record(
        respondent_id: RespondentId,
        record: &ProfileRecord,
    ) -> Result<Self, SurveyError> {
        if !(1..=130).contains(&record.age) {
            return Err(SurveyError::InvalidProfile {
                field: "age",
                message: format!("{} outside 1..=130", record.age),
            });
        }
        if let Some(email) = &record.contact_email {
            let ok = email.contains('@') && !email.contains(char::is_whitespace);
            if !ok {
                return Err(SurveyError::InvalidProfile {
                    field: "contact_email",
                    message: format!("{email:?} is not an address"),
                });
            }
        }
        Ok(RespondentProfile {
            respondent_id,
            gender: record.gender,
            age: record.age,
            education_level: record.education_level,
            academic_background: record.academic_background,
            contact_email: record.contact_email.clone(),
        })
    }

    pub fn to_record(&self) -> ProfileRecord {
        ProfileRecord {
            gender: self.gender,
            age: self.age,
            education_level: self.education_level,
            academic_background: self.academic_background,
            contact_email: self.contact_email.clone(),
        }
    }
}

impl ResponseSet {
    pub fn from_bundle(
        bundle: &ResponseBundle,
        registry: Option<&CharacterRegistry>,
    ) -> Result<Self, SurveyError> {
        if bundle.format != BUNDLE_FORMAT || bundle.version != BUNDLE_VERSION {
            return Err(SurveyError::Format(format!(
                "expected format `{BUNDLE_FORMAT}` version {BUNDLE_VERSION}, got `{}` version {}",
                bundle.format, bundle.version
            )));
        }
        let story = bundle.story_id.as_str();
        let mut respondents: Vec<Respondent> = Vec::with_capacity(bundle.respondents.len());
        for rec in &bundle.respondents {
            let id = RespondentId::new(rec.respondent_id.clone())?;
            if respondents.iter().any(|r| r.id == id) {
                return Err(SurveyError::DuplicateRespondent(id.to_string()));
            }
            let task1 = rec
                .task1
                .as_ref()
                .map(|es| Task1Response::from_records(id.clone(), story, es, registry))
                .transpose()?;
            let task2 = rec
                .task2
                .as_ref()
                .map(|cs| Task2Response::from_records(id.clone(), story, cs, registry))
                .transpose()?;
            let profile = rec
                .profile
                .as_ref()
                .map(|p| RespondentProfile::from_record(id.clone(), p))
                .transpose()?;
            respondents.push(Respondent {
                id,
                task1,
                task2,
                profile,
            });
        }
        let set = ResponseSet {
            story_id: bundle.story_id.clone(),
            respondents,
        };
        if let Some(reg) = registry {
            if reg.story_id() != set.story_id {
                return Err(SurveyError::StoryMismatch {
                    respondent: "*".into(),
                    expected: reg.story_id().to_string(),
                    found: set.story_id.clone(),
                });
            }
        }
        Ok(set)
    }

    pub fn to_bundle(&self) -> ResponseBundle {
        ResponseBundle {
            format: BUNDLE_FORMAT.to_string(),
            version: BUNDLE_VERSION,
            story_id: self.story_id.clone(),
            respondents: self
                .respondents
                .iter()
                .map(|r| RespondentRecord {
                    respondent_id: r.id.to_string(),
                    task1: r.task1.as_ref().map(Task1Response::to_records),
                    task2: r.task2.as_ref().map(Task2Response::to_records),
                    profile: r.profile.as_ref().map(RespondentProfile::to_record),
                })
                .collect(),
        }
    }

    pub fn from_json(text: &str, registry: Option<&CharacterRegistry>) -> Result<Self, SurveyError> {
        let bundle: ResponseBundle =
            serde_json::from_str(text).map_err(|e| SurveyError::Format(e.to_string()))?;
        Self::from_bundle(&bundle, registry)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_bundle()).expect("bundle serializes");
        s.push('\n');
        s
    }

    pub fn from_lines(text: &str, registry: Option<&CharacterRegistry>) -> Result<Self, SurveyError> {
        let err = |line: usize, message: String| SurveyError::Parse { line, message };
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l));
        let story_id = match lines.next() {
            Some((_, h)) => h
                .strip_prefix("#charnet-responses\tstory=")
                .filter(|s| !s.is_empty())
                .ok_or_else(|| err(1, "expected `#charnet-responses<TAB>story=<id>` header".into()))?
                .to_string(),
            None => return Err(err(1, "empty input".into())),
        };
        let mut records: Vec<RespondentRecord> = Vec::new();
        let mut line_of: Vec<usize> = Vec::new();
        for (line, raw) in lines {
            if raw.is_empty() || raw.starts_with('#') {
                continue;
            }
            let f: Vec<&str> = raw.split('\t').collect();
            if f.len() < 2 {
                return Err(err(line, "expected `<record>\\t<respondent>...`".into()));
            }
            let pos = match records.iter().position(|r| r.respondent_id == f[1]) {
                Some(p) => p,
                None => {
                    records.push(RespondentRecord {
                        respondent_id: f[1].to_string(),
                        task1: None,
                        task2: None,
                        profile: None,
                    });
                    line_of.push(line);
                    records.len() - 1
                }
            };
            let rec = &mut records[pos];
            let num = |s: &str, what: &str| -> Result<f64, SurveyError> {
                s.parse().map_err(|_| err(line, format!("bad {what} `{s}`")))
            };
            match (f[0], f.len()) {
                ("task1", 2) => {
                    rec.task1.get_or_insert_with(Vec::new);
                }
                ("task1", 6) => {
                    let entry_order = f[2]
                        .parse()
                        .map_err(|_| err(line, format!("bad entry order `{}`", f[2])))?;
                    rec.task1.get_or_insert_with(Vec::new).push(Task1EntryRecord {
                        a: f[3].to_string(),
                        b: f[4].to_string(),
                        importance: num(f[5], "importance")?,
                        entry_order,
                    });
                }
                ("task2", 2) => {
                    rec.task2.get_or_insert_with(Vec::new);
                }
                ("task2", 5) => rec.task2.get_or_insert_with(Vec::new).push(Task2CellRecord {
                    a: f[2].to_string(),
                    b: f[3].to_string(),
                    value: num(f[4], "value")?,
                }),
                ("profile", 6 | 7) => {
                    if rec.profile.is_some() {
                        return Err(err(line, "profile given twice".into()));
                    }
                    rec.profile = Some(ProfileRecord {
                        gender: enum_field(f[2]).map_err(|m| err(line, m))?,
                        age: f[3]
                            .parse()
                            .map_err(|_| err(line, format!("bad age `{}`", f[3])))?,
                        education_level: enum_field(f[4]).map_err(|m| err(line, m))?,
                        academic_background: enum_field(f[5]).map_err(|m| err(line, m))?,
                        contact_email: f.get(6).map(|s| s.to_string()),
                    });
                }
                (kind, n) => {
                    return Err(err(line, format!("unrecognized `{kind}` record with {n} fields")))
                }
            }
        }
        let bundle = ResponseBundle {
            format: BUNDLE_FORMAT.into(),
            version: BUNDLE_VERSION,
            story_id,
            respondents: records,
        };
        // Re-run validation per respondent so failures point at a line.
        for (rec, line) in bundle.respondents.iter().zip(&line_of) {
            let single = ResponseBundle {
                respondents: vec![rec.clone()],
                ..bundle.clone()
            };
            Self::from_bundle(&single, registry).map_err(|e| match e {
                SurveyError::Parse { .. } => e,
                other => err(*line, other.to_string()),
            })?;
        }
        Self::from_bundle(&bundle, registry)
    }

    pub fn to_lines(&self) -> String {
        let mut out = format!("#charnet-responses\tstory={}\n", self.story_id);
        for r in &self.respondents {
            if let Some(t1) = &r.task1 {
                let _ = writeln!(out, "task1\t{}", r.id);
                for e in &t1.entries {
                    let _ = writeln!(
                        out,
                        "task1\t{}\t{}\t{}\t{}\t{}",
                        r.id,
                        e.entry_order,
                        e.pair.first(),
                        e.pair.second(),
                        e.importance
                    );
                }
            }
            if let Some(t2) = &r.task2 {
                let _ = writeln!(out, "task2\t{}", r.id);
                for c in t2.to_records() {
                    let _ = writeln!(out, "task2\t{}\t{}\t{}\t{}", r.id, c.a, c.b, c.value);
                }
            }
            if let Some(p) = &r.profile {
                let _ = write!(
                    out,
                    "profile\t{}\t{}\t{}\t{}\t{}",
                    r.id,
                    enum_name(&p.gender),
                    p.age,
                    enum_name(&p.education_level),
                    enum_name(&p.academic_background)
                );
                if let Some(email) = &p.contact_email {
                    let _ = write!(out, "\t{email}");
                }
                out.push('\n');
            }
        }
        out
    }

    /// Reads either encoding, chosen by the first non-blank character.
    pub fn load(path: &Path, registry: Option<&CharacterRegistry>) -> Result<Self, SurveyError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SurveyError::Format(format!("{}: {e}", path.display())))?;
        if text.trim_start().starts_with('{') {
            Self::from_json(&text, registry)
        } else {
            Self::from_lines(&text, registry)
        }
    }

    pub fn task1_responses(&self) -> impl Iterator<Item = &Task1Response> {
        self.respondents.iter().filter_map(|r| r.task1.as_ref())
    }

    pub fn task2_responses(&self) -> impl Iterator<Item = &Task2Response> {
        self.respondents.iter().filter_map(|r| r.task2.as_ref())
    }

    /// Copy with every contact address removed.
    pub fn without_contacts(&self) -> Self {
        let mut out = self.clone();
        for r in &mut out.respondents {
            if let Some(p) = &mut r.profile {
                p.contact_email = None;
            }
        }
        out
    }
}

fn enum_field<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string()))
        .map_err(|_| format!("unrecognized value `{s}`"))
}

fn enum_name<T: Serialize>(v: &T) -> String {
    match serde_json::to_value(v) {
        Ok(serde_json::Value::String(s)) => s,
        _ => unreachable!("unit enums serialize as strings"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn registry() -> CharacterRegistry {
        let chars: [(&str, Vec<&str>); 3] =
            [("Kate Swift", vec![]), ("George Willard", vec![]), ("Helen White", vec![])];
        CharacterRegistry::new("teacher", chars).unwrap()
    }

    const LINES: &str = "#charnet-responses\tstory=teacher
task1\tr1
task1\tr1\t0\tGeorge Willard\tKate Swift\t7
task1\tr1\t1\tGeorge Willard\tKate Swift\t2.5
task2\tr1
task2\tr1\tGeorge Willard\tHelen White\t4
profile\tr1\tfemale\t34\tundergraduate\tscience_medical\tr1@example.org
task2\tr2
";

    #[test]
    fn line_format_parses() {
        let set = ResponseSet::from_lines(LINES, Some(&registry())).unwrap();
        assert_eq!(set.respondents.len(), 2);
        let r1 = &set.respondents[0];
        assert_eq!(r1.task1.as_ref().unwrap().entries.len(), 2);
        assert_eq!(r1.task2.as_ref().unwrap().cells.len(), 1);
        let p = r1.profile.as_ref().unwrap();
        assert_eq!(p.academic_background, AcademicBackground::ScienceMedical);
        assert_eq!(p.contact_email.as_deref(), Some("r1@example.org"));
        let r2 = &set.respondents[1];
        assert!(r2.task1.is_none());
        assert!(r2.task2.as_ref().unwrap().cells.is_empty());
        assert_eq!(set.to_lines(), LINES);
    }

    #[test]
    fn json_and_lines_agree() {
        let set = ResponseSet::from_lines(LINES, Some(&registry())).unwrap();
        let back = ResponseSet::from_json(&set.to_json(), Some(&registry())).unwrap();
        assert_eq!(back, set);
        assert!(set.to_json().contains("\"format\": \"charnet-responses\""));
    }

    #[test]
    fn line_errors_point_at_lines() {
        let bad = LINES.replace("\t2.5\n", "\t12\n");
        match ResponseSet::from_lines(&bad, Some(&registry())).unwrap_err() {
            SurveyError::Parse { line, message } => {
                assert_eq!(line, 2);
                assert!(message.contains("importance 12"), "{message}");
            }
            other => panic!("{other:?}"),
        }
        let bad = LINES.replace("\t34\t", "\tforty\t");
        assert!(matches!(
            ResponseSet::from_lines(&bad, None),
            Err(SurveyError::Parse { line: 7, .. })
        ));
        assert!(matches!(
            ResponseSet::from_lines("task1\tr1\n", None),
            Err(SurveyError::Parse { line: 1, .. })
        ));
        let unknown = LINES.replace("Helen White", "Elmer Cowley");
        assert!(ResponseSet::from_lines(&unknown, Some(&registry())).is_err());
        assert!(ResponseSet::from_lines(&unknown, None).is_ok());
    }

    #[test]
    fn bundle_rejects_wrong_version_and_duplicates() {
        let mut bundle = ResponseSet::from_lines(LINES, None).unwrap().to_bundle();
        bundle.version = 2;
        assert!(matches!(ResponseSet::from_bundle(&bundle, None), Err(SurveyError::Format(_))));
        bundle.version = 1;
        bundle.respondents[1].respondent_id = "r1".into();
        assert!(matches!(
            ResponseSet::from_bundle(&bundle, None),
            Err(SurveyError::DuplicateRespondent(_))
        ));
        assert!(ResponseSet::from_json("{\"format\": 1}", None).is_err());
    }

    #[test]
    fn duplicate_and_overflowing_cells_rejected() {
        let id = RespondentId::new("r").unwrap();
        let cell = |a: &str, b: &str, v| Task2CellRecord { a: a.into(), b: b.into(), value: v };
        let dup = [cell("Kate Swift", "George Willard", 3.0), cell("George Willard", "Kate Swift", 4.0)];
        assert!(matches!(
            Task2Response::from_records(id.clone(), "teacher", &dup, None),
            Err(SurveyError::DuplicateCell { entry: 1, .. })
        ));
        let over = [cell("Kate Swift", "George Willard", 11.0)];
        let e = Task2Response::from_records(id, "teacher", &over, None).unwrap_err();
        assert_eq!(e.field_path().as_deref(), Some("[0].value"));
    }

    #[test]
    fn contacts_can_be_stripped() {
        let set = ResponseSet::from_lines(LINES, None).unwrap().without_contacts();
        assert!(!set.to_json().contains("example.org"));
        assert!(!set.to_lines().contains("example.org"));
    }

    proptest! {
        #[test]
        fn encodings_round_trip(
            task1 in prop::collection::vec((0usize..3, 1usize..3, 1u8..=10, 0u8..4), 0..8),
            task2 in prop::collection::btree_map((0usize..3, 1usize..3), 0u8..=20, 0..3),
        ) {
            let names = ["Kate Swift", "George Willard", "Helen White"];
            let entries: Vec<Task1EntryRecord> = task1.iter().enumerate().map(|(i, (a, d, w, q))| {
                Task1EntryRecord {
                    a: names[*a].into(),
                    b: names[(a + d) % 3].into(),
                    importance: f64::from(*w) - f64::from(*q) * 0.25 * f64::from(*w > 1 && *w < 10),
                    entry_order: 3 * i as u32,
                }
            }).collect();
            let mut seen = std::collections::BTreeSet::new();
            let cells: Vec<Task2CellRecord> = task2.iter().filter_map(|((a, d), v)| {
                let pair = Pair::new(names[*a], names[(a + d) % 3]).unwrap();
                seen.insert(pair.clone()).then(|| Task2CellRecord {
                    a: pair.first().into(), b: pair.second().into(), value: f64::from(*v) / 2.0,
                })
            }).collect();
            let bundle = ResponseBundle {
                format: BUNDLE_FORMAT.into(),
                version: BUNDLE_VERSION,
                story_id: "teacher".into(),
                respondents: vec![RespondentRecord {
                    respondent_id: "tok".into(),
                    task1: Some(entries),
                    task2: Some(cells),
                    profile: None,
                }],
            };
            let set = ResponseSet::from_bundle(&bundle, Some(&registry())).unwrap();
            prop_assert_eq!(&ResponseSet::from_lines(&set.to_lines(), Some(&registry())).unwrap(), &set);
            prop_assert_eq!(&ResponseSet::from_json(&set.to_json(), Some(&registry())).unwrap(), &set);
        }
    }
}
