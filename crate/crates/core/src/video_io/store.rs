//! Write-once patch datasets: `patches.bin` holds concatenated patch tensors,
//! `patches.csv` indexes them and `store.json` records the tensor layout.

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{bytes_per_sample, Patch, PatchGeometry, PatchOrigin, PatchPairing, Role};
use crate::error::{Error, IoContext, Result};

pub const BLOB_FILE: &str = "patches.bin";
pub const INDEX_FILE: &str = "patches.csv";
pub const META_FILE: &str = "store.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreMeta {
    pub geometry: PatchGeometry,
    pub bit_depth: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct IndexRow {
    pairing_id: String,
    role: String,
    sequence_id: String,
    frame_offset: usize,
    x: usize,
    y: usize,
    byte_offset: u64,
}

pub struct PatchStoreWriter {
    dir: PathBuf,
    meta: StoreMeta,
    blob: BufWriter<fs::File>,
    index: csv::Writer<fs::File>,
    offset: u64,
}

impl PatchStoreWriter {
    pub fn create(dir: &Path, meta: StoreMeta) -> Result<Self> {
        fs::create_dir_all(dir).at(dir)?;
        let blob_path = dir.join(BLOB_FILE);
        let blob = BufWriter::new(fs::File::create(&blob_path).at(&blob_path)?);
        let index = csv::Writer::from_path(dir.join(INDEX_FILE))?;
        Ok(PatchStoreWriter {
            dir: dir.to_path_buf(),
            meta,
            blob,
            index,
            offset: 0,
        })
    }

    fn push_patch(&mut self, pairing_id: &str, role: Role, patch: &Patch) -> Result<()> {
        if patch.geometry != self.meta.geometry || patch.bit_depth != self.meta.bit_depth {
            return Err(Error::Geometry(format!(
                "patch of pairing `{pairing_id}` does not match the store layout"
            )));
        }
        self.index.serialize(IndexRow {
            pairing_id: pairing_id.to_string(),
            role: role.as_str().to_string(),
            sequence_id: patch.origin.sequence_id.clone(),
            frame_offset: patch.origin.frame_offset,
            x: patch.origin.x,
            y: patch.origin.y,
            byte_offset: self.offset,
        })?;
        let path = self.dir.join(BLOB_FILE);
        if bytes_per_sample(self.meta.bit_depth) == 1 {
            let bytes: Vec<u8> = patch.data.iter().map(|&v| v as u8).collect();
            self.blob.write_all(&bytes).at(&path)?;
            self.offset += bytes.len() as u64;
        } else {
            for v in &patch.data {
                self.blob.write_all(&v.to_le_bytes()).at(&path)?;
            }
            self.offset += 2 * patch.data.len() as u64;
        }
        Ok(())
    }

    /// Appends the reference, transcoded and (if present) source crops.
    pub fn push(&mut self, pairing: &PatchPairing) -> Result<()> {
        self.push_patch(&pairing.id, Role::Reference, &pairing.ref_patch)?;
        self.push_patch(&pairing.id, Role::Transcoded, &pairing.dist_patch)?;
        if let Some(src) = &pairing.src_patch {
            self.push_patch(&pairing.id, Role::Source, src)?;
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        let blob_path = self.dir.join(BLOB_FILE);
        self.blob.flush().at(&blob_path)?;
        self.index.flush().at(self.dir.join(INDEX_FILE))?;
        let meta_path = self.dir.join(META_FILE);
        fs::write(&meta_path, serde_json::to_vec_pretty(&self.meta)?).at(&meta_path)
    }
}

/// A loaded patch store.
pub struct PatchStore {
    pub meta: StoreMeta,
    blob: Vec<u8>,
    rows: BTreeMap<String, Vec<IndexRow>>,
    order: Vec<String>,
}

impl PatchStore {
    pub fn open(dir: &Path) -> Result<Self> {
        let meta_path = dir.join(META_FILE);
        let meta: StoreMeta = serde_json::from_slice(&fs::read(&meta_path).at(&meta_path)?)?;
        let blob_path = dir.join(BLOB_FILE);
        let blob = fs::read(&blob_path).at(&blob_path)?;
        let mut rows: BTreeMap<String, Vec<IndexRow>> = BTreeMap::new();
        let mut order = Vec::new();
        for row in csv::Reader::from_path(dir.join(INDEX_FILE))?.deserialize() {
            let row: IndexRow = row?;
            if !rows.contains_key(&row.pairing_id) {
                order.push(row.pairing_id.clone());
            }
            rows.entry(row.pairing_id.clone()).or_default().push(row);
        }
        Ok(PatchStore {
            meta,
            blob,
            rows,
            order,
        })
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// Pairing ids in insertion order.
    pub fn ids(&self) -> &[String] {
        &self.order
    }

    fn read_patch(&self, row: &IndexRow) -> Result<Patch> {
        let n = self.meta.geometry.len();
        let bps = bytes_per_sample(self.meta.bit_depth);
        let start = row.byte_offset as usize;
        let end = start + n * bps;
        if end > self.blob.len() {
            return Err(Error::InvalidInput(format!(
                "patch of `{}` runs past the end of the blob",
                row.pairing_id
            )));
        }
        let bytes = &self.blob[start..end];
        let data = if bps == 1 {
            bytes.iter().map(|&b| b as u16).collect()
        } else {
            bytes
                .chunks_exact(2)
                .map(|c| u16::from_le_bytes([c[0], c[1]]))
                .collect()
        };
        Ok(Patch {
            data,
            origin: PatchOrigin {
                sequence_id: row.sequence_id.clone(),
                frame_offset: row.frame_offset,
                x: row.x,
                y: row.y,
            },
            geometry: self.meta.geometry,
            bit_depth: self.meta.bit_depth,
        })
    }

    pub fn pairing(&self, id: &str) -> Result<PatchPairing> {
        let rows = self
            .rows
            .get(id)
            .ok_or_else(|| Error::InvalidInput(format!("pairing `{id}` is not in the store")))?;
        let find = |role: Role| rows.iter().find(|r| r.role == role.as_str());
        let missing = |role: Role| Error::InvalidInput(format!("pairing `{id}` lacks a {role} patch"));
        Ok(PatchPairing {
            id: id.to_string(),
            ref_patch: self.read_patch(find(Role::Reference).ok_or_else(|| missing(Role::Reference))?)?,
            dist_patch: self.read_patch(find(Role::Transcoded).ok_or_else(|| missing(Role::Transcoded))?)?,
            src_patch: find(Role::Source).map(|r| self.read_patch(r)).transpose()?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn patch(seq: &str, seed: u16, g: PatchGeometry, bit_depth: u32) -> Patch {
        let max = (1u32 << bit_depth) as u16 - 1;
        Patch {
            data: (0..g.len() as u16).map(|i| (i.wrapping_mul(31).wrapping_add(seed)) % max).collect(),
            origin: PatchOrigin { sequence_id: seq.into(), frame_offset: 1, x: 2, y: 3 },
            geometry: g,
            bit_depth,
        }
    }

    #[test]
    fn store_round_trip() {
        for bit_depth in [8, 10] {
            let dir = tempfile::tempdir().unwrap();
            let g = PatchGeometry::new(2, 3, 4);
            let meta = StoreMeta { geometry: g, bit_depth };
            let a = PatchPairing {
                id: "d0@1_3_2".into(),
                ref_patch: patch("r0", 1, g, bit_depth),
                dist_patch: patch("d0", 2, g, bit_depth),
                src_patch: None,
            };
            let b = PatchPairing {
                id: "d1@1_3_2".into(),
                ref_patch: patch("r0", 3, g, bit_depth),
                dist_patch: patch("d1", 4, g, bit_depth),
                src_patch: Some(patch("s0", 5, g, bit_depth)),
            };
            let mut w = PatchStoreWriter::create(dir.path(), meta).unwrap();
            w.push(&a).unwrap();
            w.push(&b).unwrap();
            w.finish().unwrap();

            let store = PatchStore::open(dir.path()).unwrap();
            assert_eq!(store.ids(), &["d0@1_3_2".to_string(), "d1@1_3_2".to_string()]);
            assert_eq!(store.pairing("d0@1_3_2").unwrap(), a);
            assert_eq!(store.pairing("d1@1_3_2").unwrap(), b);
            assert!(store.pairing("nope").is_err());

            let header = fs::read_to_string(dir.path().join(INDEX_FILE)).unwrap();
            assert!(header.starts_with("pairing_id,role,sequence_id,frame_offset,x,y,byte_offset\n"));
        }
    }
}
