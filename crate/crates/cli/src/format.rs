//! The line-oriented text container shared by every file kind:
//!
//! ```text
//! bbrl-<kind> v1
//! key=value
//! [section]
//! key=value
//! ```
//!
//! Blank lines and lines starting with `#` are ignored. Files may be
//! gzip-compressed; reading detects the gzip magic bytes.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Section {
    pub name: String,
    pub entries: Vec<(String, String)>,
}

impl Section {
    pub fn new(name: impl Into<String>) -> Self {
        Section {
            name: name.into(),
            entries: Vec::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.entries.push((key.to_string(), value.to_string()));
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn require(&self, key: &str) -> Result<&str> {
        self.get(key).ok_or_else(|| {
            if self.name.is_empty() {
                anyhow!("missing field '{key}'")
            } else {
                anyhow!("missing field '{key}' in [{}]", self.name)
            }
        })
    }

    pub fn parse<T>(&self, key: &str) -> Result<T>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|e| anyhow!("field '{key}': cannot parse {raw:?}: {e}"))
    }

    pub fn parse_list<T>(&self, key: &str) -> Result<Vec<T>>
    where
        T: FromStr,
        T::Err: std::fmt::Display,
    {
        self.require(key)?
            .split_whitespace()
            .map(|v| {
                v.parse()
                    .map_err(|e| anyhow!("field '{key}': cannot parse {v:?}: {e}"))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub kind: String,
    pub header: Section,
    pub sections: Vec<Section>,
}

impl Document {
    pub fn new(kind: &str) -> Self {
        Document {
            kind: kind.to_string(),
            header: Section::default(),
            sections: Vec::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: impl ToString) {
        self.header.set(key, value);
    }

    pub fn render(&self) -> String {
        let mut out = format!("bbrl-{} v{FORMAT_VERSION}\n", self.kind);
        for (k, v) in &self.header.entries {
            out.push_str(&format!("{k}={v}\n"));
        }
        for s in &self.sections {
            out.push_str(&format!("[{}]\n", s.name));
            for (k, v) in &s.entries {
                out.push_str(&format!("{k}={v}\n"));
            }
        }
        out
    }

    /// Parses `text`, requiring a `bbrl-<kind>` header of the supported version.
    pub fn parse(text: &str, kind: &str) -> Result<Document> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
            .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'));
        let (_, first) = lines.next().ok_or_else(|| anyhow!("empty file"))?;
        let (found_kind, version) = first
            .strip_prefix("bbrl-")
            .and_then(|rest| rest.split_once(" v"))
            .ok_or_else(|| anyhow!("not a bbrl file (header {first:?})"))?;
        if found_kind != kind {
            bail!("expected a {kind} file, found a {found_kind} file");
        }
        let version: u32 = version
            .trim()
            .parse()
            .map_err(|_| anyhow!("malformed version in header {first:?}"))?;
        if version != FORMAT_VERSION {
            bail!("unsupported {kind} file version {version} (this build reads version {FORMAT_VERSION})");
        }
        let mut doc = Document::new(kind);
        let mut current: Option<Section> = None;
        for (no, line) in lines {
            let line = line.trim();
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                if let Some(s) = current.take() {
                    doc.sections.push(s);
                }
                current = Some(Section::new(name));
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {no}: expected key=value, got {line:?}"))?;
            let target = current.as_mut().unwrap_or(&mut doc.header);
            target
                .entries
                .push((k.trim().to_string(), v.trim().to_string()));
        }
        if let Some(s) = current {
            doc.sections.push(s);
        }
        Ok(doc)
    }
}

/// Joins values with single spaces.
pub fn join<T: ToString>(values: impl IntoIterator<Item = T>) -> String {
    values
        .into_iter()
        .map(|v| v.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

const GZIP_MAGIC: [u8; 2] = [0x1f, 0x8b];

/// Reads a file as UTF-8, transparently decompressing gzip.
pub fn read_text(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut text = String::new();
    if bytes.starts_with(&GZIP_MAGIC) {
        GzDecoder::new(&bytes[..])
            .read_to_string(&mut text)
            .with_context(|| format!("cannot decompress {}", path.display()))?;
    } else {
        text = String::from_utf8(bytes)
            .with_context(|| format!("{} is not valid UTF-8", path.display()))?;
    }
    Ok(text)
}

/// Writes `text` atomically (temporary file + rename), gzip-compressed if asked.
pub fn write_text(path: &Path, text: &str, compress: bool) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)
        .with_context(|| format!("cannot create a temporary file in {}", dir.display()))?;
    if compress {
        let mut enc = GzEncoder::new(tmp.as_file_mut(), Compression::default());
        enc.write_all(text.as_bytes())?;
        enc.finish()?;
    } else {
        tmp.write_all(text.as_bytes())?;
    }
    tmp.flush()?;
    tmp.persist(path)
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(())
}
