//! Measured bitstrings and the sample file shared by the emulator, the
//! classical sampler and externally produced (hardware) runs.
//!
//! ```text
//! # ddpp-samples v1 n=4 n_meas=3 seed=42 schedule=9f2c...
//! 1010
//! 0100
//! 1001
//! ```
//!
//! The first character of each line is atom 0.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::nodeset::NodeSet;

pub const SAMPLE_FILE_VERSION: u32 = 1;
const MAGIC: &str = "ddpp-samples";

#[derive(Debug, thiserror::Error)]
pub enum SampleFileError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("sample file version {found} is not supported (expected {expected})")]
    SchemaVersionMismatch { found: u32, expected: u32 },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
#[error("sample pool is empty")]
pub struct EmptyPool;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SamplePool {
    n: usize,
    samples: Vec<NodeSet>,
    /// Seed that produced the pool, when known.
    pub seed: Option<u64>,
    /// Identifies the source: a pulse-schedule hash, `classical`, or `external`.
    pub source: String,
}

impl SamplePool {
    pub fn new(n: usize, samples: Vec<NodeSet>, seed: Option<u64>, source: impl Into<String>) -> Self {
        assert!(samples.iter().all(|s| s.len() == n), "sample length differs from n={n}");
        SamplePool { n, samples, seed, source: source.into() }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn samples(&self) -> &[NodeSet] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// The first `k` samples, keeping the metadata.
    pub fn prefix(&self, k: usize) -> SamplePool {
        SamplePool { samples: self.samples[..k.min(self.len())].to_vec(), ..self.clone() }
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("# {MAGIC} v{SAMPLE_FILE_VERSION} n={} n_meas={}", self.n, self.len());
        if let Some(seed) = self.seed {
            let _ = write!(out, " seed={seed}");
        }
        let _ = writeln!(out, " schedule={}", self.source);
        for s in &self.samples {
            out.push_str(&s.to_bitstring());
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self, SampleFileError> {
        let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
        let (_, header) = lines.next().ok_or(SampleFileError::Parse { line: 1, message: "empty file".into() })?;
        let header = parse_header(header, MAGIC, SAMPLE_FILE_VERSION)?;
        let n = header.usize_field("n")?;
        let n_meas = header.usize_field("n_meas")?;
        let seed = match header.get("seed") {
            Some(v) => Some(v.parse().map_err(|_| header.bad("seed"))?),
            None => None,
        };
        let source = header.get("schedule").unwrap_or("external").to_string();
        let samples = parse_bitstrings(lines, n)?;
        if samples.len() != n_meas {
            return Err(SampleFileError::Parse {
                line: 1,
                message: format!("header says n_meas={n_meas} but {} samples follow", samples.len()),
            });
        }
        Ok(SamplePool { n, samples, seed, source })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SampleFileError> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SampleFileError> {
        Self::from_text(&fs::read_to_string(path)?)
    }
}

pub fn mean_hamming_weight(pool: &SamplePool) -> Result<f64, EmptyPool> {
    if pool.is_empty() {
        return Err(EmptyPool);
    }
    let total: usize = pool.samples.iter().map(NodeSet::weight).sum();
    Ok(total as f64 / pool.len() as f64)
}

pub(crate) struct Header<'a> {
    fields: Vec<(&'a str, &'a str)>,
}

impl<'a> Header<'a> {
    pub(crate) fn get(&self, key: &str) -> Option<&'a str> {
        self.fields.iter().find(|(k, _)| *k == key).map(|&(_, v)| v)
    }

    fn bad(&self, key: &str) -> SampleFileError {
        SampleFileError::Parse { line: 1, message: format!("bad or missing header field `{key}`") }
    }

    pub(crate) fn usize_field(&self, key: &str) -> Result<usize, SampleFileError> {
        self.get(key).and_then(|v| v.parse().ok()).ok_or_else(|| self.bad(key))
    }
}

pub(crate) fn parse_header<'a>(line: &'a str, magic: &str, version: u32) -> Result<Header<'a>, SampleFileError> {
    let bad = |message: String| SampleFileError::Parse { line: 1, message };
    let mut words = line.strip_prefix('#').ok_or_else(|| bad("missing `#` header line".into()))?.split_whitespace();
    if words.next() != Some(magic) {
        return Err(bad(format!("expected `{magic}` header")));
    }
    let found = words
        .next()
        .and_then(|v| v.strip_prefix('v'))
        .and_then(|v| v.parse::<u32>().ok())
        .ok_or_else(|| bad("missing version".into()))?;
    if found != version {
        return Err(SampleFileError::SchemaVersionMismatch { found, expected: version });
    }
    let fields = words
        .map(|w| w.split_once('=').ok_or_else(|| bad(format!("malformed header field `{w}`"))))
        .collect::<Result<_, _>>()?;
    Ok(Header { fields })
}

pub(crate) fn parse_bitstrings<'a>(
    lines: impl Iterator<Item = (usize, &'a str)>,
    n: usize,
) -> Result<Vec<NodeSet>, SampleFileError> {
    let mut out = Vec::new();
    for (line, text) in lines {
        if text.is_empty() || text.starts_with('#') {
            continue;
        }
        let set =
            NodeSet::parse_with_len(text, n).map_err(|e| SampleFileError::Parse { line, message: e.to_string() })?;
        out.push(set);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pool(strings: &[&str]) -> SamplePool {
        let n = strings[0].len();
        SamplePool::new(n, strings.iter().map(|s| s.parse().unwrap()).collect(), Some(42), "classical")
    }

    #[test]
    fn mean_weights() {
        assert_eq!(mean_hamming_weight(&pool(&["000"])), Ok(0.0));
        assert_eq!(mean_hamming_weight(&pool(&["101", "010"])), Ok(1.5));
        assert_eq!(mean_hamming_weight(&pool(&["111"; 7])), Ok(3.0));
        assert_eq!(mean_hamming_weight(&SamplePool::new(3, vec![], None, "x")), Err(EmptyPool));
    }

    #[test]
    fn file_round_trip() {
        let p = pool(&["1010", "0100", "1001"]);
        let text = p.to_text();
        assert!(text.starts_with("# ddpp-samples v1 n=4 n_meas=3 seed=42 schedule=classical\n1010\n"));
        assert_eq!(SamplePool::from_text(&text).unwrap(), p);
    }

    #[test]
    fn external_files_without_seed() {
        let p = SamplePool::from_text("# ddpp-samples v1 n=2 n_meas=2\n10\n01\n").unwrap();
        assert_eq!(p.seed, None);
        assert_eq!(p.source, "external");
    }

    #[test]
    fn malformed_files() {
        let cases = [
            ("", "empty"),
            ("1010\n", "header"),
            ("# ddpp-samples v1 n=2 n_meas=1\n1x\n", "line 2"),
            ("# ddpp-samples v1 n=2 n_meas=1\n101\n", "line 2"),
            ("# ddpp-samples v1 n=2 n_meas=2\n10\n", "n_meas=2"),
        ];
        for (text, needle) in cases {
            let err = SamplePool::from_text(text).unwrap_err().to_string();
            assert!(err.contains(needle), "{text:?} -> {err}");
        }
        assert!(matches!(
            SamplePool::from_text("# ddpp-samples v2 n=1 n_meas=0\n"),
            Err(SampleFileError::SchemaVersionMismatch { found: 2, .. })
        ));
    }
}
