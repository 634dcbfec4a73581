use std::collections::HashMap;
use std::path::Path;

use serde::Deserialize;
use thiserror::Error;

use crate::network::valid_name;

#[derive(Debug, Error, PartialEq)]
pub enum RegistryError {
    #[error("character #{index}: canonical name is empty or contains tabs/newlines")]
    InvalidName { index: usize },
    #[error("character `{0}` is declared twice")]
    DuplicateCharacter(String),
    #[error("character `{character}`: alias {alias:?} is empty or does not start with a letter or digit")]
    InvalidAlias { character: String, alias: String },
    #[error("alias `{alias}` is shared by `{first}` and `{second}`")]
    AmbiguousAlias {
        alias: String,
        first: String,
        second: String,
    },
    #[error("story_id must be non-empty")]
    MissingStoryId,
    #[error("registry document: {0}")]
    Format(String),
    #[error("{path}: {message}")]
    Io { path: String, message: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Character {
    pub name: String,
    /// Surface forms, always including `name` itself.
    pub aliases: Vec<String>,
}

/// Canonical characters of one story with the aliases that identify them.
///
/// The on-disk form is TOML:
///
/// ```toml
/// story_id = "teacher"
///
/// [[characters]]
/// name = "George Willard"
/// aliases = ["George", "Willard"]
/// ```
///
/// The canonical name is always an alias, listed or not.
#[derive(Debug, Clone, PartialEq)]
pub struct CharacterRegistry {
    story_id: String,
    characters: Vec<Character>,
    /// (alias, character index), longest alias first.
    match_order: Vec<(String, usize)>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RegistryDoc {
    story_id: String,
    #[serde(default)]
    characters: Vec<CharacterDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CharacterDoc {
    name: String,
    #[serde(default)]
    aliases: Vec<String>,
}

impl CharacterRegistry {
    pub fn new<N, A, I>(story_id: impl Into<String>, characters: I) -> Result<Self, RegistryError>
    where
        N: Into<String>,
        A: IntoIterator,
        A::Item: Into<String>,
        I: IntoIterator<Item = (N, A)>,
    {
        let story_id = story_id.into();
        if story_id.trim().is_empty() {
            return Err(RegistryError::MissingStoryId);
        }
        let mut out: Vec<Character> = Vec::new();
        let mut owner: HashMap<String, usize> = HashMap::new();
        for (index, (name, aliases)) in characters.into_iter().enumerate() {
            let name: String = name.into();
            if !valid_name(&name) || name != name.trim() {
                return Err(RegistryError::InvalidName { index });
            }
            if out.iter().any(|c| c.name == name) {
                return Err(RegistryError::DuplicateCharacter(name));
            }
            let mut list = vec![name.clone()];
            for alias in aliases {
                let alias: String = alias.into();
                let alias = alias.trim().to_string();
                if !alias.chars().next().is_some_and(char::is_alphanumeric) {
                    return Err(RegistryError::InvalidAlias {
                        character: name,
                        alias,
                    });
                }
                if !list.contains(&alias) {
                    list.push(alias);
                }
            }
            for alias in &list {
                if let Some(&prev) = owner.get(alias) {
                    return Err(RegistryError::AmbiguousAlias {
                        alias: alias.clone(),
                        first: out[prev].name.clone(),
                        second: name,
                    });
                }
                owner.insert(alias.clone(), index);
            }
            out.push(Character {
                name,
                aliases: list,
            });
        }
        let mut match_order: Vec<(String, usize)> = owner.into_iter().collect();
        match_order.sort_by(|a, b| {
            b.0.chars()
                .count()
                .cmp(&a.0.chars().count())
                .then_with(|| a.0.cmp(&b.0))
        });
        Ok(CharacterRegistry {
            story_id,
            characters: out,
            match_order,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self, RegistryError> {
        let doc: RegistryDoc =
            toml::from_str(text).map_err(|e| RegistryError::Format(e.to_string()))?;
        Self::new(
            doc.story_id,
            doc.characters.into_iter().map(|c| (c.name, c.aliases)),
        )
    }

    pub fn load(path: &Path) -> Result<Self, RegistryError> {
        let text = std::fs::read_to_string(path).map_err(|e| RegistryError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_toml_str(&text)
    }

    pub fn story_id(&self) -> &str {
        &self.story_id
    }

    pub fn characters(&self) -> &[Character] {
        &self.characters
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.characters.iter().map(|c| c.name.as_str())
    }

    pub fn len(&self) -> usize {
        self.characters.len()
    }

    pub fn is_empty(&self) -> bool {
        self.characters.is_empty()
    }

    pub fn contains(&self, name: &str) -> bool {
        self.characters.iter().any(|c| c.name == name)
    }

    pub(crate) fn match_order(&self) -> &[(String, usize)] {
        &self.match_order
    }
}
