//! Binary parameter checkpoints.
//!
//! Layout: the ASCII line `D2NNCKPT v1\n`, a u32 entry count, then per
//! entry its name length, name bytes, rank, and dims (all u32 LE), then
//! every entry's values as f32 LE in manifest order, then a CRC-32 of all
//! preceding bytes.

use std::path::Path;

use crate::autograd::{ParamStore, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8] = b"D2NNCKPT v1\n";
const MAGIC_PREFIX: &[u8] = b"D2NNCKPT ";

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Checkpoint {
    pub entries: Vec<CheckpointEntry>,
}

fn integrity(msg: impl Into<String>) -> Error {
    Error::Integrity(msg.into())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &dyn Fn() -> String) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(integrity(format!("truncated while reading {}", what()))),
        }
    }

    fn u32(&mut self, what: &dyn Fn() -> String) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().expect("four bytes")))
    }
}

fn to_u32(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::Contract(format!("{what} {n} does not fit in 32 bits")))
}

impl Checkpoint {
    pub fn from_store(store: &ParamStore) -> Self {
        Checkpoint {
            entries: store
                .iter()
                .map(|(_, p)| CheckpointEntry {
                    name: p.name.clone(),
                    shape: p.value.shape().to_vec(),
                    values: p.value.data().iter().map(|v| *v as f32).collect(),
                })
                .collect(),
        }
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        let mut out = MAGIC.to_vec();
        out.extend(to_u32(self.entries.len(), "entry count")?.to_le_bytes());
        for e in &self.entries {
            out.extend(to_u32(e.name.len(), "name length")?.to_le_bytes());
            out.extend(e.name.as_bytes());
            out.extend(to_u32(e.shape.len(), "rank")?.to_le_bytes());
            for d in &e.shape {
                out.extend(to_u32(*d, "dimension")?.to_le_bytes());
            }
            if e.shape.iter().product::<usize>() != e.values.len() {
                return Err(Error::Contract(format!("entry {} values do not match its shape", e.name)));
            }
        }
        for e in &self.entries {
            for v in &e.values {
                out.extend(v.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out);
        out.extend(crc.to_le_bytes());
        Ok(out)
    }

    /// Parses and verifies a checkpoint. Nothing is returned unless the
    /// whole file checks out.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            if bytes.starts_with(MAGIC_PREFIX) {
                let line = bytes.split(|b| *b == b'\n').next().unwrap_or_default();
                return Err(integrity(format!(
                    "unsupported checkpoint version {:?}",
                    String::from_utf8_lossy(line)
                )));
            }
            return Err(integrity("not a checkpoint: bad header"));
        }
        if bytes.len() < MAGIC.len() + 8 {
            return Err(integrity("truncated checkpoint"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 4);
        let stored = u32::from_le_bytes(tail.try_into().expect("four bytes"));
        let actual = crc32fast::hash(body);

        let mut r = Reader { bytes: body, pos: MAGIC.len() };
        let count = r.u32(&|| "entry count".into())? as usize;
        // Each manifest entry takes at least eight bytes.
        if count > body.len() / 8 {
            return Err(integrity(format!("entry count {count} exceeds file size")));
        }
        let mut manifest = Vec::with_capacity(count);
        for i in 0..count {
            let at = || format!("manifest entry {i}");
            let len = r.u32(&at)? as usize;
            let name = std::str::from_utf8(r.take(len, &at)?)
                .map_err(|_| integrity(format!("manifest entry {i}: name is not UTF-8")))?
                .to_string();
            let named = |s: &str| format!("entry {name:?}: {s}");
            let rank = r.u32(&|| named("rank"))? as usize;
            if rank > 8 {
                return Err(integrity(named(&format!("rank {rank} too large"))));
            }
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32(&|| named("dims"))? as usize);
            }
            manifest.push((name, shape));
        }
        let mut entries = Vec::with_capacity(count);
        for (name, shape) in manifest {
            let what = || format!("values of entry {name:?}");
            let numel = shape
                .iter()
                .try_fold(1usize, |a, d| a.checked_mul(*d))
                .and_then(|n| n.checked_mul(4).map(|b| (n, b)));
            let Some((numel, nbytes)) = numel else {
                return Err(integrity(format!("entry {name:?}: shape {shape:?} overflows")));
            };
            let raw = r.take(nbytes, &what)?;
            let values: Vec<f32> = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("four bytes")))
                .collect();
            debug_assert_eq!(values.len(), numel);
            entries.push(CheckpointEntry { name, shape, values });
        }
        if r.pos != body.len() {
            return Err(integrity(format!("{} unexpected trailing bytes", body.len() - r.pos)));
        }
        if stored != actual {
            return Err(integrity(format!(
                "checksum mismatch: stored {stored:08x}, computed {actual:08x}"
            )));
        }
        Ok(Checkpoint { entries })
    }

    /// Copies values into `store`. Every parameter must appear with the
    /// same name, order, and shape; otherwise nothing is written.
    pub fn apply_to(&self, store: &mut ParamStore) -> Result<()> {
        if self.entries.len() != store.len() {
            return Err(Error::Config(format!(
                "checkpoint holds {} parameters, model has {}",
                self.entries.len(),
                store.len()
            )));
        }
        for (e, (_, p)) in self.entries.iter().zip(store.iter()) {
            if e.name != p.name || e.shape != p.value.shape() {
                return Err(Error::Config(format!(
                    "checkpoint entry {} {:?} does not match model parameter {} {:?}",
                    e.name,
                    e.shape,
                    p.name,
                    p.value.shape()
                )));
            }
        }
        let ids: Vec<_> = store.ids().collect();
        for (e, id) in self.entries.iter().zip(ids) {
            let data: Vec<f64> = e.values.iter().map(|v| *v as f64).collect();
            store.get_mut(id).value = Tensor::new(e.shape.clone(), data)?;
        }
        Ok(())
    }
}

pub fn save_checkpoint(store: &ParamStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = Checkpoint::from_store(store).encode()?;
    // Write beside the target, then rename, so a crash never leaves a
    // half-written checkpoint in place of the last good one.
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::decode(&bytes)
}
