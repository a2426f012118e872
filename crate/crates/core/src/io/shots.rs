//! Shot-record export and import: a CSV form (one row per shot) and a
//! binary manifest that also carries the synthesis metadata.
//!
//! CSV columns: `label,i1,q1,...,iD,qD`, with an empty label field for
//! unlabeled records.
//!
//! Manifest layout (little-endian): magic `QSM1`, `u16` version, `u32`
//! metadata length, metadata JSON (tones, integration window, noise width,
//! seed), `u32` tone count, `u64` record count, then per record an `i64`
//! label (`-1` for none) and `2 × tones` `f64` quadratures.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::readout::{IQRecord, ToneSet};

const MAGIC: &[u8; 4] = b"QSM1";
const VERSION: u16 = 1;
/// Upper bound on records accepted from an untrusted manifest.
const MAX_RECORDS: u64 = 50_000_000;

/// A labeled shot set together with how it was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShotManifest {
    pub tones: ToneSet,
    /// Gaussian noise width used at synthesis.
    pub sigma: f64,
    /// RNG seed used at synthesis.
    pub seed: u64,
    #[serde(skip)]
    pub records: Vec<IQRecord>,
}

/// Write records as CSV.
pub fn write_csv<W: Write>(records: &[IQRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let tones = records.first().map_or(0, IQRecord::tone_count);
    let mut header = vec!["label".to_string()];
    for d in 1..=tones {
        header.push(format!("i{d}"));
        header.push(format!("q{d}"));
    }
    w.write_record(&header).map_err(csv_err)?;
    for rec in records {
        let mut row = vec![rec.true_label.map_or(String::new(), |l| l.to_string())];
        for v in &rec.values {
            row.push(format!("{v}"));
        }
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Read records from CSV produced by [`write_csv`].
pub fn read_csv<R: Read>(reader: R) -> Result<Vec<IQRecord>> {
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(reader);
    let mut records = Vec::new();
    let mut width: Option<usize> = None;
    for row in r.records() {
        let row = row.map_err(csv_err)?;
        if row.len() < 3 || row.len() % 2 == 0 {
            return Err(Error::Parse(format!(
                "shot row needs a label plus I/Q pairs, got {} fields",
                row.len()
            )));
        }
        let label_field = row.get(0).unwrap_or("").trim();
        let true_label = if label_field.is_empty() {
            None
        } else {
            Some(label_field.parse::<usize>().map_err(|_| {
                Error::Parse(format!("bad state label '{label_field}'"))
            })?)
        };
        let mut values = Vec::with_capacity(row.len() - 1);
        for field in row.iter().skip(1) {
            let v: f64 = field
                .trim()
                .parse()
                .map_err(|_| Error::Parse(format!("bad quadrature value '{field}'")))?;
            if !v.is_finite() {
                return Err(Error::Parse("non-finite quadrature value".into()));
            }
            values.push(v);
        }
        if let Some(w) = width {
            if values.len() != w {
                return Err(Error::Parse(format!(
                    "inconsistent row width: {} after {w}",
                    values.len()
                )));
            }
        } else {
            width = Some(values.len());
        }
        records.push(IQRecord { values, true_label });
    }
    Ok(records)
}

fn csv_err(e: csv::Error) -> Error {
    Error::Parse(e.to_string())
}

/// Encode a manifest to bytes.
pub fn write_manifest(manifest: &ShotManifest) -> Result<Vec<u8>> {
    let tone_count = manifest.tones.tone_count();
    for rec in &manifest.records {
        if rec.values.len() != 2 * tone_count {
            return Err(Error::InvalidInput(format!(
                "record width {} does not match {} tones",
                rec.values.len(),
                tone_count
            )));
        }
    }
    let meta = serde_json::to_vec(manifest).map_err(|e| Error::Parse(e.to_string()))?;
    let mut out = Vec::with_capacity(
        16 + meta.len() + manifest.records.len() * (8 + 16 * tone_count),
    );
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&u32::try_from(meta.len()).map_err(|_| {
        Error::InvalidInput("metadata too large".into())
    })?.to_le_bytes());
    out.extend_from_slice(&meta);
    out.extend_from_slice(&u32::try_from(tone_count).unwrap().to_le_bytes());
    out.extend_from_slice(&(manifest.records.len() as u64).to_le_bytes());
    for rec in &manifest.records {
        let label: i64 = rec.true_label.map_or(-1, |l| l as i64);
        out.extend_from_slice(&label.to_le_bytes());
        for v in &rec.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.data.len())
            .ok_or_else(|| Error::Parse("manifest truncated".into()))?;
        let slice = &self.data[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn i64(&mut self) -> Result<i64> {
        Ok(i64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

/// Decode a manifest from (untrusted) bytes.
pub fn read_manifest(data: &[u8]) -> Result<ShotManifest> {
    let mut cur = Cursor { data, pos: 0 };
    if cur.take(4)? != MAGIC {
        return Err(Error::Parse("not a shot manifest (bad magic)".into()));
    }
    let version = cur.u16()?;
    if version != VERSION {
        return Err(Error::Parse(format!(
            "unsupported manifest version {version}"
        )));
    }
    let meta_len = cur.u32()? as usize;
    let meta = cur.take(meta_len)?;
    let mut manifest: ShotManifest =
        serde_json::from_slice(meta).map_err(|e| Error::Parse(e.to_string()))?;
    manifest.tones.validate()?;
    let tone_count = cur.u32()? as usize;
    if tone_count != manifest.tones.tone_count() {
        return Err(Error::Parse(format!(
            "tone count {tone_count} disagrees with metadata {}",
            manifest.tones.tone_count()
        )));
    }
    let n_records = cur.u64()?;
    if n_records > MAX_RECORDS {
        return Err(Error::Parse(format!("record count {n_records} exceeds cap")));
    }
    let record_bytes = 8usize + 16 * tone_count;
    let remaining = data.len() - cur.pos;
    if (n_records as usize).checked_mul(record_bytes) != Some(remaining) {
        return Err(Error::Parse(format!(
            "manifest payload is {remaining} bytes; {n_records} records need {}",
            n_records as usize * record_bytes
        )));
    }
    let mut records = Vec::with_capacity(n_records as usize);
    for _ in 0..n_records {
        let raw_label = cur.i64()?;
        let true_label = if raw_label < 0 {
            None
        } else {
            Some(raw_label as usize)
        };
        let mut values = Vec::with_capacity(2 * tone_count);
        for _ in 0..2 * tone_count {
            let v = cur.f64()?;
            if !v.is_finite() {
                return Err(Error::Parse("non-finite quadrature in manifest".into()));
            }
            values.push(v);
        }
        records.push(IQRecord { values, true_label });
    }
    manifest.records = records;
    Ok(manifest)
}
