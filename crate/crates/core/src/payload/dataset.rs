//! Labeled payload datasets: CSV and binary forms, class resampling.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use ndarray::Array2;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{FlowKey, LabelId, LabelTable, LabeledPayload, Payload};
use crate::codec::{Reader, Writer};
use crate::error::{invalid, Error, Result};
use crate::PAYLOAD_LEN;

const BIN_MAGIC: &[u8; 7] = b"ODXUPB1";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PayloadDataset {
    pub rows: Vec<LabeledPayload>,
    pub labels: LabelTable,
}

impl PayloadDataset {
    pub fn new(rows: Vec<LabeledPayload>, labels: LabelTable) -> Self {
        PayloadDataset { rows, labels }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn label_ids(&self) -> Vec<LabelId> {
        self.rows.iter().map(|r| r.label).collect()
    }

    pub fn class_counts(&self) -> BTreeMap<LabelId, usize> {
        let mut m = BTreeMap::new();
        for r in &self.rows {
            *m.entry(r.label).or_insert(0) += 1;
        }
        m
    }

    pub fn subset(&self, idx: &[usize]) -> PayloadDataset {
        PayloadDataset {
            rows: idx.iter().map(|&i| self.rows[i].clone()).collect(),
            labels: self.labels.clone(),
        }
    }

    /// Normalized features, one row per payload.
    pub fn features(&self) -> Array2<f64> {
        let mut m = Array2::zeros((self.rows.len(), PAYLOAD_LEN));
        for (mut dst, r) in m.rows_mut().into_iter().zip(&self.rows) {
            for (d, &b) in dst.iter_mut().zip(r.bytes.as_bytes().iter()) {
                *d = b as f64 / 255.0;
            }
        }
        m
    }

    /// SHA-256 over label names and bytes in row order; independent of how
    /// the label table happens to be numbered.
    pub fn digest(&self) -> String {
        let mut h = Sha256::new();
        for r in &self.rows {
            let name = self.labels.name(r.label).unwrap_or("");
            h.update((name.len() as u32).to_le_bytes());
            h.update(name.as_bytes());
            h.update(r.bytes.as_bytes());
        }
        hex::encode(h.finalize())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header: Vec<String> = (0..PAYLOAD_LEN).map(|i| format!("b{i}")).collect();
        header.push("label".into());
        w.write_record(&header)?;
        let mut rec: Vec<String> = Vec::with_capacity(PAYLOAD_LEN + 1);
        for r in &self.rows {
            rec.clear();
            rec.extend(r.bytes.as_bytes().iter().map(|b| b.to_string()));
            rec.push(self.label_name(r.label)?.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(input);
        let header = rd.headers()?.clone();
        if header.len() != PAYLOAD_LEN + 1 || &header[PAYLOAD_LEN] != "label" {
            return Err(Error::Format(format!(
                "payload csv needs b0..b{} plus label, got {} columns",
                PAYLOAD_LEN - 1,
                header.len()
            )));
        }
        let mut ds = PayloadDataset::default();
        for (line, rec) in rd.records().enumerate() {
            let rec = rec?;
            let mut bytes = Payload::zeroed();
            for (i, field) in rec.iter().take(PAYLOAD_LEN).enumerate() {
                bytes.as_bytes_mut()[i] = field.trim().parse::<u8>().map_err(|e| {
                    Error::Format(format!("row {line}, column b{i}: {e}"))
                })?;
            }
            let label = ds.labels.intern(&rec[PAYLOAD_LEN]);
            ds.rows.push(LabeledPayload {
                bytes,
                label,
                flow: FlowKey::default(),
            });
        }
        Ok(ds)
    }

    /// Binary form: magic, u32 row count, rows of 1500 bytes + u16 label id,
    /// then a u32-counted table of u32-length-prefixed UTF-8 label names.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::new(BIN_MAGIC);
        w.u32(self.rows.len() as u32);
        for r in &self.rows {
            self.label_name(r.label)?;
            w.bytes(r.bytes.as_bytes());
            w.u16(r.label.0);
        }
        w.u32(self.labels.len() as u32);
        for n in self.labels.names() {
            w.blob(n.as_bytes());
        }
        Ok(w.finish())
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader::open(buf, BIN_MAGIC)?;
        let n = r.u32()? as usize;
        let mut rows = Vec::with_capacity(n.min(1 << 20));
        for _ in 0..n {
            let bytes = Payload::from_slice(r.bytes(PAYLOAD_LEN)?);
            let label = LabelId(r.u16()?);
            rows.push(LabeledPayload {
                bytes,
                label,
                flow: FlowKey::default(),
            });
        }
        let k = r.u32()? as usize;
        let mut labels = LabelTable::new();
        for _ in 0..k {
            let name = std::str::from_utf8(r.blob()?)
                .map_err(|e| Error::Format(format!("label name: {e}")))?;
            labels.intern(name);
        }
        r.finish()?;
        if labels.len() != k {
            return Err(Error::Format("duplicate label names in table".into()));
        }
        if let Some(bad) = rows.iter().find(|row| row.label.0 as usize >= k) {
            return Err(Error::Format(format!("label id {} outside table", bad.label.0)));
        }
        Ok(PayloadDataset { rows, labels })
    }

    /// Loads either form, chosen by the file's leading bytes.
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let buf = std::fs::read(path)?;
        if buf.starts_with(BIN_MAGIC) {
            Self::from_bytes(&buf)
        } else {
            Self::read_csv(&buf[..])
        }
    }

    /// Writes binary when the extension is `.bin`, CSV otherwise.
    pub fn save(&self, path: &std::path::Path) -> Result<()> {
        if path.extension().is_some_and(|e| e == "bin") {
            std::fs::write(path, self.to_bytes()?)?;
        } else {
            self.write_csv(std::io::BufWriter::new(std::fs::File::create(path)?))?;
        }
        Ok(())
    }

    fn label_name(&self, id: LabelId) -> Result<&str> {
        self.labels
            .name(id)
            .ok_or_else(|| Error::InvalidInput(format!("label id {} has no name", id.0)))
    }
}

/// Per-class count multipliers keyed by label name. Classes absent from the
/// plan keep multiplier 1.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ResamplePlan {
    pub rates: BTreeMap<String, f64>,
}

impl ResamplePlan {
    pub fn with(mut self, class: &str, multiplier: f64) -> Self {
        self.rates.insert(class.to_string(), multiplier);
        self
    }
}

/// A class of n rows with multiplier m ends with round(n·m) rows: m < 1
/// draws without replacement, m > 1 keeps every original and appends
/// uniform draws with replacement.
pub fn resample(data: &PayloadDataset, plan: &ResamplePlan, seed: u64) -> Result<PayloadDataset> {
    let mut rates: BTreeMap<LabelId, f64> = BTreeMap::new();
    for (name, &m) in &plan.rates {
        if !(m > 0.0 && m.is_finite()) {
            return invalid(format!("multiplier for {name:?} must be positive, got {m}"));
        }
        let id = data
            .labels
            .id(name)
            .ok_or_else(|| Error::InvalidInput(format!("resample plan names unknown class {name:?}")))?;
        rates.insert(id, m);
    }
    let mut by_class: BTreeMap<LabelId, Vec<usize>> = BTreeMap::new();
    for (i, r) in data.rows.iter().enumerate() {
        by_class.entry(r.label).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut keep = Vec::new();
    let mut extra = Vec::new();
    for (id, members) in &by_class {
        let m = rates.get(id).copied().unwrap_or(1.0);
        let n = members.len();
        let target = (n as f64 * m).round() as usize;
        if target == 0 {
            return invalid(format!(
                "multiplier {m} would remove every row of class {:?}",
                data.labels.name(*id).unwrap_or("?")
            ));
        }
        if target <= n {
            let mut picked: Vec<usize> =
                sample(&mut rng, n, target).into_iter().map(|j| members[j]).collect();
            picked.sort_unstable();
            keep.extend(picked);
        } else {
            keep.extend_from_slice(members);
            extra.extend((0..target - n).map(|_| members[rng.gen_range(0..n)]));
        }
    }
    keep.sort_unstable();
    keep.extend(extra);
    Ok(data.subset(&keep))
}
