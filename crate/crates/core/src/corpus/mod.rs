//! Story ingestion: segmentation into units and character mention counting.

mod mentions;
mod registry;
mod segment;

pub use mentions::{count_mentions, MentionCounts};
pub use registry::{Character, CharacterRegistry, RegistryError};
pub use segment::{
    segment, segment_paragraphs, segment_sentences, SentenceSplitter, TextUnit, UnitKind,
    DEFAULT_ABBREVIATIONS,
};
