//! Binary artifact containers.
//!
//! Every container starts with an ASCII magic (NUL padded), a `u16` format
//! version, a kind-specific little-endian body, and ends with a CRC32 of all
//! preceding bytes. Files are written atomically (temp file + rename).
//!
//! Each artifact may carry a `<file>.meta` TOML sidecar holding the tool
//! version and the fully resolved configuration that produced it.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::micronet::SampleBatch;

pub const FORMAT_VERSION: u16 = 1;
pub const DATA_MAGIC: &[u8] = b"GSO-DATA\0";
pub const TOOL_NAME: &str = "gso";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Default)]
pub(crate) struct ByteWriter {
    buf: Vec<u8>,
}

impl ByteWriter {
    pub(crate) fn new(magic: &[u8]) -> Self {
        let mut w = Self { buf: Vec::new() };
        w.buf.extend_from_slice(magic);
        w.u16(FORMAT_VERSION);
        w
    }

    pub(crate) fn u8(&mut self, v: u8) {
        self.buf.push(v);
    }

    pub(crate) fn u16(&mut self, v: u16) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub(crate) fn u32(&mut self, v: u32) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub(crate) fn u64(&mut self, v: u64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub(crate) fn f32s(&mut self, vs: &[f64]) {
        for v in vs {
            self.buf.extend_from_slice(&(*v as f32).to_le_bytes());
        }
    }

    pub(crate) fn f64(&mut self, v: f64) {
        self.buf.extend_from_slice(&v.to_le_bytes());
    }

    pub(crate) fn f64s(&mut self, vs: &[f64]) {
        for v in vs {
            self.f64(*v);
        }
    }

    pub(crate) fn finish(mut self) -> Vec<u8> {
        let crc = crc32fast::hash(&self.buf);
        self.buf.extend_from_slice(&crc.to_le_bytes());
        self.buf
    }
}

pub(crate) struct ByteReader<'a> {
    buf: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> ByteReader<'a> {
    /// Checks magic, version and CRC, returning a reader positioned after the
    /// version field and bounded before the checksum.
    pub(crate) fn open(path: &'a Path, bytes: &'a [u8], magic: &[u8]) -> Result<Self> {
        let fail = |reason: String| Error::Format {
            path: path.to_path_buf(),
            reason,
        };
        if bytes.len() < magic.len() || &bytes[..magic.len()] != magic {
            return Err(fail(format!(
                "bad magic (expected {:?})",
                String::from_utf8_lossy(magic).trim_end_matches('\0')
            )));
        }
        if bytes.len() < magic.len() + 2 + 4 {
            return Err(fail("file is truncated".into()));
        }
        let version = u16::from_le_bytes([bytes[magic.len()], bytes[magic.len() + 1]]);
        if version != FORMAT_VERSION {
            return Err(fail(format!(
                "unsupported format version {version} (this build reads {FORMAT_VERSION})"
            )));
        }
        let body_end = bytes.len() - 4;
        let stored = u32::from_le_bytes(bytes[body_end..].try_into().unwrap());
        let actual = crc32fast::hash(&bytes[..body_end]);
        if stored != actual {
            return Err(fail(format!(
                "checksum mismatch (stored {stored:08x}, computed {actual:08x}); file is corrupt or truncated"
            )));
        }
        Ok(Self {
            buf: &bytes[..body_end],
            pos: magic.len() + 2,
            path,
        })
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(self.error("unexpected end of data"));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    pub(crate) fn error(&self, reason: impl Into<String>) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            reason: reason.into(),
        }
    }

    pub(crate) fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    /// Guards a length read from the file before allocating for it.
    fn check_count(&self, count: usize, width: usize) -> Result<()> {
        match count.checked_mul(width) {
            Some(bytes) if bytes <= self.buf.len() - self.pos => Ok(()),
            _ => Err(self.error(format!("declared length {count} exceeds the file size"))),
        }
    }

    pub(crate) fn f32s(&mut self, count: usize) -> Result<Vec<f64>> {
        self.check_count(count, 4)?;
        let raw = self.take(count * 4)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect())
    }

    pub(crate) fn f64s(&mut self, count: usize) -> Result<Vec<f64>> {
        self.check_count(count, 8)?;
        let raw = self.take(count * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub(crate) fn u32s(&mut self, count: usize) -> Result<Vec<u32>> {
        self.check_count(count, 4)?;
        let raw = self.take(count * 4)?;
        Ok(raw
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }

    pub(crate) fn finish(self) -> Result<()> {
        if self.pos != self.buf.len() {
            return Err(self.error(format!(
                "{} trailing bytes after payload",
                self.buf.len() - self.pos
            )));
        }
        Ok(())
    }
}

pub fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

/// Writes `bytes` to a sibling temp file and renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(format!(".tmp{}", std::process::id()));
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn meta_path(path: &Path) -> PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".meta");
    PathBuf::from(p)
}

/// Writes the `<path>.meta` sidecar: tool identity, artifact kind, plus any
/// extra tables (fit metadata, resolved configuration).
pub fn write_meta(path: &Path, artifact: &str, extra: toml::Table) -> Result<()> {
    let mut table = toml::Table::new();
    table.insert("tool".into(), TOOL_NAME.into());
    table.insert("tool_version".into(), TOOL_VERSION.into());
    table.insert("artifact".into(), artifact.into());
    table.extend(extra);
    let text = toml::to_string(&table).map_err(|e| Error::config(format!("cannot encode metadata: {e}")))?;
    write_atomic(&meta_path(path), text.as_bytes())
}

pub fn read_meta(path: &Path) -> Result<toml::Table> {
    let mp = meta_path(path);
    let text = fs::read_to_string(&mp).map_err(|e| Error::io(&mp, e))?;
    text.parse::<toml::Table>().map_err(|e| Error::Format {
        path: mp,
        reason: format!("unreadable metadata: {e}"),
    })
}

/// Encodes a batch in the dataset container. Values are stored as `f32`.
pub fn encode_dataset(batch: &SampleBatch) -> Result<Vec<u8>> {
    let n = u32::try_from(batch.len()).map_err(|_| Error::data("too many rows for the dataset container"))?;
    let dim = u32::try_from(batch.dim()).map_err(|_| Error::data("too many columns for the dataset container"))?;
    let mut w = ByteWriter::new(DATA_MAGIC);
    w.u32(n);
    w.u32(dim);
    w.u8(batch.labels().is_some() as u8);
    w.f32s(batch.inputs().as_slice());
    if let Some(labels) = batch.labels() {
        for &l in labels {
            w.u32(u32::try_from(l).map_err(|_| Error::data("label does not fit in u32"))?);
        }
    }
    Ok(w.finish())
}

pub fn decode_dataset(path: &Path, bytes: &[u8]) -> Result<SampleBatch> {
    let mut r = ByteReader::open(path, bytes, DATA_MAGIC)?;
    let n = r.u32()? as usize;
    let dim = r.u32()? as usize;
    let has_labels = match r.u8()? {
        0 => false,
        1 => true,
        other => return Err(r.error(format!("invalid has_labels flag {other}"))),
    };
    let values = r.f32s(n * dim)?;
    let labels = if has_labels {
        Some(r.u32s(n)?.into_iter().map(|l| l as usize).collect())
    } else {
        None
    };
    r.finish()?;
    let inputs = Matrix::from_vec(n, dim, values)?;
    SampleBatch::new(inputs, labels).map_err(|e| Error::Validation {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn save_dataset(batch: &SampleBatch, path: &Path) -> Result<()> {
    write_atomic(path, &encode_dataset(batch)?)
}

pub fn load_dataset(path: &Path) -> Result<SampleBatch> {
    decode_dataset(path, &read_file(path)?)
}

/// CSV export: one row per sample, feature columns `x0..`, then `label` when present.
pub fn dataset_to_csv(batch: &SampleBatch) -> String {
    let mut out = String::new();
    let header: Vec<String> = (0..batch.dim()).map(|j| format!("x{j}")).collect();
    out.push_str(&header.join(","));
    if batch.labels().is_some() {
        out.push_str(",label");
    }
    out.push('\n');
    for i in 0..batch.len() {
        let row: Vec<String> = batch.input(i).iter().map(|v| format!("{v}")).collect();
        out.push_str(&row.join(","));
        if let Some(l) = batch.labels() {
            out.push_str(&format!(",{}", l[i]));
        }
        out.push('\n');
    }
    out
}

/// CSV import, the inverse of [`dataset_to_csv`]. A trailing `label` column
/// marks labeled data.
pub fn dataset_from_csv(text: &str) -> Result<SampleBatch> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines
        .next()
        .ok_or_else(|| Error::data("empty CSV"))?
        .split(',')
        .map(str::trim)
        .collect();
    let labeled = header.last() == Some(&"label");
    let dim = header.len() - labeled as usize;
    let mut values = Vec::new();
    let mut labels = Vec::new();
    for (ln, line) in lines.enumerate() {
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != header.len() {
            return Err(Error::data(format!("CSV row {} has {} fields, expected {}", ln + 1, fields.len(), header.len())));
        }
        for f in &fields[..dim] {
            values.push(f.parse::<f64>().map_err(|e| Error::data(format!("CSV row {}: {e}", ln + 1)))?);
        }
        if labeled {
            labels.push(fields[dim].parse::<usize>().map_err(|e| Error::data(format!("CSV row {}: {e}", ln + 1)))?);
        }
    }
    let n = values.len() / dim.max(1);
    SampleBatch::new(Matrix::from_vec(n, dim, values)?, labeled.then_some(labels))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn batch() -> SampleBatch {
        let m = Matrix::from_rows(&[[1.5, -2.0], [0.25, 3.0], [0.0, 1.0]]).unwrap();
        SampleBatch::new(m, Some(vec![0, 1, 1])).unwrap()
    }

    #[test]
    fn dataset_round_trip_is_lossless() {
        let b = batch();
        let bytes = encode_dataset(&b).unwrap();
        assert_eq!(decode_dataset(Path::new("x"), &bytes).unwrap(), b);
    }

    #[test]
    fn corrupted_and_truncated_files_are_format_errors() {
        let mut bytes = encode_dataset(&batch()).unwrap();
        let truncated = &bytes[..bytes.len() - 7];
        assert!(matches!(decode_dataset(Path::new("t"), truncated), Err(Error::Format { .. })));
        bytes[20] ^= 0xff;
        assert!(matches!(decode_dataset(Path::new("c"), &bytes), Err(Error::Format { .. })));
        assert!(matches!(decode_dataset(Path::new("e"), &[]), Err(Error::Format { .. })));
    }

    #[test]
    fn version_bump_is_rejected() {
        let mut bytes = encode_dataset(&batch()).unwrap();
        bytes[DATA_MAGIC.len()] = 2;
        let err = decode_dataset(Path::new("v"), &bytes).unwrap_err();
        assert!(err.to_string().contains("version"));
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn csv_round_trip() {
        let b = batch();
        assert_eq!(dataset_from_csv(&dataset_to_csv(&b)).unwrap(), b);
    }
}
