//! Zip container I/O for GTFS archives, with deterministic output: entries
//! are written with the zip-epoch timestamp so identical inputs produce
//! byte-identical archives.

use std::collections::BTreeMap;
use std::io::{Cursor, Read, Write};

use zip::write::SimpleFileOptions;
use zip::CompressionMethod;

#[derive(Debug, thiserror::Error)]
pub enum ZipError {
    #[error("zip: {0}")]
    Container(#[from] zip::result::ZipError),
    #[error("zip entry {name}: {source}")]
    Entry {
        name: String,
        #[source]
        source: std::io::Error,
    },
}

/// An in-memory zip archive with all entries decompressed.
#[derive(Debug, Default)]
pub struct ZipArchive {
    entries: BTreeMap<String, Vec<u8>>,
}

impl ZipArchive {
    pub fn read(bytes: &[u8]) -> Result<Self, ZipError> {
        let mut zip = zip::ZipArchive::new(Cursor::new(bytes))?;
        let mut entries = BTreeMap::new();
        for i in 0..zip.len() {
            let mut file = zip.by_index(i)?;
            if file.is_dir() {
                continue;
            }
            let name = file.name().to_string();
            let mut data = Vec::with_capacity(file.size() as usize);
            file.read_to_end(&mut data)
                .map_err(|source| ZipError::Entry { name: name.clone(), source })?;
            entries.insert(name, data);
        }
        Ok(Self { entries })
    }

    pub fn by_name(&self, name: &str) -> Option<&[u8]> {
        self.entries.get(name).map(Vec::as_slice)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Streaming zip writer. Entries are written in `add` order.
pub struct ZipWriter {
    inner: zip::ZipWriter<Cursor<Vec<u8>>>,
}

impl Default for ZipWriter {
    fn default() -> Self {
        Self::new()
    }
}

impl ZipWriter {
    pub fn new() -> Self {
        Self { inner: zip::ZipWriter::new(Cursor::new(Vec::new())) }
    }

    fn options(method: CompressionMethod) -> SimpleFileOptions {
        SimpleFileOptions::default()
            .compression_method(method)
            .last_modified_time(zip::DateTime::default())
    }

    /// Adds an entry without compression.
    pub fn add(&mut self, name: &str, data: &[u8]) {
        self.inner
            .start_file(name, Self::options(CompressionMethod::Stored))
            .expect("in-memory zip write");
        self.inner.write_all(data).expect("in-memory zip write");
    }

    /// Adds an entry compressed with deflate.
    pub fn add_deflated(&mut self, name: &str, data: &[u8]) {
        self.inner
            .start_file(name, Self::options(CompressionMethod::Deflated))
            .expect("in-memory zip write");
        self.inner.write_all(data).expect("in-memory zip write");
    }

    pub fn finish(self) -> Vec<u8> {
        self.inner.finish().expect("in-memory zip finish").into_inner()
    }
}
