use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Match, MatchSet};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MatchFile {
    source_dims: [u32; 2],
    target_dims: [u32; 2],
    matches: Vec<Match>,
}

/// Parses the match-file JSON and bounds-checks every entry.
pub fn parse_match_json(text: &str) -> Result<MatchSet> {
    let file: MatchFile = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    MatchSet::new(
        (file.source_dims[0], file.source_dims[1]),
        (file.target_dims[0], file.target_dims[1]),
        file.matches,
    )
}

/// Serializes a match set. Floats use the shortest representation that
/// parses back to the identical `f64`.
pub fn to_match_json(ms: &MatchSet) -> String {
    let file = MatchFile {
        source_dims: [ms.source_dims.0, ms.source_dims.1],
        target_dims: [ms.target_dims.0, ms.target_dims.1],
        matches: ms.matches.clone(),
    };
    serde_json::to_string_pretty(&file).expect("match set serializes")
}

pub fn load_match_file(path: impl AsRef<Path>) -> Result<MatchSet> {
    let text = std::fs::read_to_string(path)?;
    parse_match_json(&text)
}

pub fn save_match_file(ms: &MatchSet, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, to_match_json(ms))?;
    Ok(())
}
