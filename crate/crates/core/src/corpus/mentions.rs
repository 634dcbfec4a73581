use std::collections::BTreeMap;

use super::{CharacterRegistry, TextUnit};

/// Per-unit character frequencies; characters with no mention are absent.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MentionCounts {
    pub unit_index: usize,
    pub counts: BTreeMap<String, u32>,
}

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

/// Counts whole-word, case-sensitive alias occurrences in one unit.
///
/// Matching starts only at word starts and tries aliases longest first, so
/// "George Willard" is consumed before "George" can match inside it. A match
/// must end at a non-word character, which lets "Helen's" count for "Helen".
/// After a match the scan resumes at the next whitespace: at most one mention
/// begins in any whitespace-delimited token.
pub fn count_mentions(unit: &TextUnit, registry: &CharacterRegistry) -> MentionCounts {
    let text = unit.text.as_str();
    let chars = registry.characters();
    let mut counts: BTreeMap<String, u32> = BTreeMap::new();
    let mut pos = 0;
    let mut prev: Option<char> = None;
    while let Some(c) = text[pos..].chars().next() {
        if is_word_char(c) && !prev.is_some_and(is_word_char) {
            let rest = &text[pos..];
            let hit = registry.match_order().iter().find(|(alias, _)| {
                rest.starts_with(alias.as_str())
                    && !rest[alias.len()..].chars().next().is_some_and(is_word_char)
            });
            if let Some((alias, idx)) = hit {
                *counts.entry(chars[*idx].name.clone()).or_insert(0) += 1;
                pos += alias.len();
                prev = alias.chars().next_back();
                while let Some(c) = text[pos..].chars().next() {
                    if c.is_whitespace() {
                        break;
                    }
                    pos += c.len_utf8();
                    prev = Some(c);
                }
                continue;
            }
        }
        prev = Some(c);
        pos += c.len_utf8();
    }
    MentionCounts {
        unit_index: unit.index,
        counts,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::UnitKind;
    use proptest::prelude::*;

    fn unit(text: &str) -> TextUnit {
        TextUnit {
            index: 7,
            kind: UnitKind::Sentence,
            text: text.into(),
            word_count: text.split_whitespace().count(),
            char_offset: 0,
        }
    }

    fn registry() -> CharacterRegistry {
        CharacterRegistry::new(
            "s",
            [("George Willard", vec!["George"]), ("Helen White", vec!["Helen"])],
        )
        .unwrap()
    }

    fn counts(pairs: &[(&str, u32)]) -> BTreeMap<String, u32> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn one_occurrence_each() {
        let m = count_mentions(&unit("George met Helen."), &registry());
        assert_eq!(m.counts, counts(&[("George Willard", 1), ("Helen White", 1)]));
        assert_eq!(m.unit_index, 7);
    }

    #[test]
    fn repeated_alias() {
        let m = count_mentions(&unit("George, George!"), &registry());
        assert_eq!(m.counts, counts(&[("George Willard", 2)]));
    }

    #[test]
    fn longest_alias_wins() {
        let m = count_mentions(&unit("George Willard saw George."), &registry());
        assert_eq!(m.counts, counts(&[("George Willard", 2)]));
    }

    #[test]
    fn whole_word_case_sensitive_and_possessive() {
        let reg = CharacterRegistry::new("s", [("Will Henderson", vec!["Will"])]).unwrap();
        let m = count_mentions(&unit("I will go. Willow trees. Will's hat. WILL. Will."), &reg);
        assert_eq!(m.counts, counts(&[("Will Henderson", 2)]));
        let m = count_mentions(&unit("Helen\u{2019}s coat and Helen's hat"), &registry());
        assert_eq!(m.counts, counts(&[("Helen White", 2)]));
    }

    #[test]
    fn no_mentions_gives_empty_map() {
        assert!(count_mentions(&unit("nobody here"), &registry()).counts.is_empty());
    }

    /// Independent oracle: scan every token start, try every alias, keep the
    /// longest whole-word match, then jump past the token.
    fn brute_force(text: &str, reg: &CharacterRegistry) -> BTreeMap<String, u32> {
        let mut out = BTreeMap::new();
        let bytes: Vec<(usize, char)> = text.char_indices().collect();
        let mut k = 0;
        while k < bytes.len() {
            let (pos, c) = bytes[k];
            let word_start = c.is_alphanumeric() && (k == 0 || !bytes[k - 1].1.is_alphanumeric());
            let mut best: Option<(usize, &str)> = None;
            if word_start {
                for ch in reg.characters() {
                    for alias in &ch.aliases {
                        let end = pos + alias.len();
                        let fits = text.get(pos..end) == Some(alias.as_str())
                            && text[end..].chars().next().is_none_or(|c| !c.is_alphanumeric());
                        let longer = best.is_none_or(|(l, _)| alias.chars().count() > l);
                        if fits && longer {
                            best = Some((alias.chars().count(), ch.name.as_str()));
                        }
                    }
                }
            }
            match best {
                Some((len, name)) => {
                    *out.entry(name.to_string()).or_insert(0) += 1;
                    k += len;
                    while k < bytes.len() && !bytes[k].1.is_whitespace() {
                        k += 1;
                    }
                }
                None => k += 1,
            }
        }
        out
    }

    #[test]
    fn matches_brute_force_on_nested_aliases() {
        let reg = CharacterRegistry::new(
            "s",
            [
                ("George Willard", vec!["George", "Willard"]),
                ("Tom Willard", vec!["Tom"]),
                ("Elizabeth Willard", vec!["Elizabeth", "Mrs. Willard"]),
            ],
        )
        .unwrap();
        let text = "George Willard and Tom Willard met Mrs. Willard; Willard, George's father Tom.";
        let m = count_mentions(&unit(text), &reg);
        assert_eq!(m.counts, brute_force(text, &reg));
        assert_eq!(
            m.counts,
            counts(&[("George Willard", 3), ("Tom Willard", 2), ("Elizabeth Willard", 1)])
        );
    }

    proptest! {
        #[test]
        fn agrees_with_brute_force_and_token_bound(
            words in prop::collection::vec(
                prop_oneof!["[a-z]{1,5}", Just("Ann".to_string()), Just("Ann Lee".to_string()),
                    Just("Lee".to_string()), Just("Bo".to_string()), Just("Bob's".to_string()),
                    Just("AnnBo".to_string()), Just("Ann,Bo".to_string())],
                0..30),
            index in 0usize..1000,
        ) {
            let reg = CharacterRegistry::new(
                "s", [("Ann Lee", vec!["Ann"]), ("Lee", vec![]), ("Bo", vec!["Bob"])],
            ).unwrap();
            let text = words.join(" ");
            let mut u = unit(&text);
            let m = count_mentions(&u, &reg);
            prop_assert_eq!(&m.counts, &brute_force(&text, &reg));
            for f in m.counts.values() {
                prop_assert!(*f >= 1);
                prop_assert!(*f as usize <= text.split_whitespace().count());
            }
            u.index = index;
            prop_assert_eq!(count_mentions(&u, &reg).counts, m.counts);
        }
    }
}
