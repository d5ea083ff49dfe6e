use std::collections::HashSet;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::sync::Arc;

use super::{IdMaps, Interaction, InteractionDataset};
use crate::error::{Error, Result};

/// Field separator of an interaction log.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Delimiter {
    Csv,
    Tsv,
    /// `::`, as in the MovieLens `.dat` dumps.
    DoubleColon,
}

impl Delimiter {
    /// Guesses from the file extension: `.tsv`/`.txt` are tab separated,
    /// `.dat` uses `::`, anything else is comma separated.
    pub fn from_path(path: &Path) -> Self {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("tsv") | Some("txt") => Delimiter::Tsv,
            Some("dat") => Delimiter::DoubleColon,
            _ => Delimiter::Csv,
        }
    }

    fn split<'a>(&self, line: &'a str) -> Vec<&'a str> {
        match self {
            Delimiter::Csv => line.split(',').map(str::trim).collect(),
            Delimiter::Tsv => line.split('\t').map(str::trim).collect(),
            Delimiter::DoubleColon => line.split("::").map(str::trim).collect(),
        }
    }
}

impl std::str::FromStr for Delimiter {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Delimiter::Csv),
            "tsv" => Ok(Delimiter::Tsv),
            "dat" | "::" => Ok(Delimiter::DoubleColon),
            other => Err(Error::InvalidArgument(format!("unknown format {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Inferred from the extension when `None`.
    pub delimiter: Option<Delimiter>,
    /// Rows whose rating is below this value are dropped.
    pub threshold: Option<f64>,
    /// `None` detects a header by looking for non-numeric rating/timestamp
    /// fields or a first field starting with "user".
    pub has_header: Option<bool>,
}

/// Reads `user, item[, rating][, timestamp]` rows into a de-duplicated dataset.
///
/// Ids are re-indexed densely in order of first appearance. For repeated
/// `(user, item)` pairs the first row wins.
pub fn load_interactions(path: &Path, opts: &LoadOptions) -> Result<InteractionDataset> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let delimiter = opts.delimiter.unwrap_or_else(|| Delimiter::from_path(path));
    let reader = BufReader::new(file);

    let mut ids = IdMaps::default();
    let mut seen = HashSet::new();
    let mut interactions = Vec::new();

    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        let line_no = lineno + 1;
        let trimmed = line.trim_end_matches('\r');
        if trimmed.trim().is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let fields = delimiter.split(trimmed);
        if lineno == 0 {
            let header = opts.has_header.unwrap_or_else(|| looks_like_header(&fields));
            if header {
                continue;
            }
        }
        let malformed = |message: String| Error::MalformedRow {
            path: path.to_path_buf(),
            line: line_no,
            message,
        };
        if fields.len() < 2 || fields.len() > 4 {
            return Err(malformed(format!(
                "expected 2 to 4 columns, found {}",
                fields.len()
            )));
        }
        let (user, item) = (fields[0], fields[1]);
        if user.is_empty() || item.is_empty() {
            return Err(malformed("empty user or item id".into()));
        }
        let rating = match fields.get(2) {
            Some(r) => Some(
                r.parse::<f64>()
                    .map_err(|_| malformed(format!("rating {r:?} is not a number")))?,
            ),
            None => None,
        };
        let timestamp = match fields.get(3) {
            Some(t) => Some(
                t.parse::<i64>()
                    .map_err(|_| malformed(format!("timestamp {t:?} is not an integer")))?,
            ),
            None => None,
        };
        if let Some(threshold) = opts.threshold {
            match rating {
                Some(r) if r < threshold => continue,
                Some(_) => {}
                None => return Err(malformed("threshold given but row has no rating".into())),
            }
        }
        let u = ids.users.intern(user);
        let i = ids.items.intern(item);
        if seen.insert((u, i)) {
            interactions.push(Interaction {
                user: u,
                item: i,
                timestamp,
            });
        }
    }

    if interactions.is_empty() {
        return Err(Error::EmptyDataset);
    }
    InteractionDataset::new(Arc::new(ids), interactions)
}

fn looks_like_header(fields: &[&str]) -> bool {
    if fields
        .first()
        .is_some_and(|f| f.to_ascii_lowercase().starts_with("user"))
    {
        return true;
    }
    let rating_bad = fields.get(2).is_some_and(|r| r.parse::<f64>().is_err());
    let ts_bad = fields.get(3).is_some_and(|t| t.parse::<i64>().is_err());
    rating_bad || ts_bad
}
