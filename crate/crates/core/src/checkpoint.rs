//! Self-describing binary model files.
//!
//! Layout: the magic bytes `DSRLCKPT`, a `u32` version, a section table
//! (count, then name and byte length per section), the section payloads in
//! table order, and a trailing SHA-256 digest of everything before it. All
//! numbers are little-endian; floats keep their full 64-bit pattern.

use std::io::{Read, Write};

use sha2::{Digest, Sha256};

use crate::autodiff::{AdamState, Tensor};
use crate::codec::{ByteReader, ByteWriter};
use crate::config::ModelConfig;
use crate::error::{Error, Result};
use crate::model::SrlModel;
use crate::vocab::{PretrainedTable, Vocabulary};

const MAGIC: &[u8; 8] = b"DSRLCKPT";
pub const FORMAT_VERSION: u32 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub model: SrlModel,
    pub adam: Option<AdamState>,
    /// Best development F1 seen during training, and the epoch it came from.
    pub best_f1: f64,
    pub best_epoch: usize,
}

impl Checkpoint {
    pub fn new(model: SrlModel) -> Self {
        Checkpoint {
            model,
            adam: None,
            best_f1: 0.0,
            best_epoch: 0,
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut sections: Vec<(&str, Vec<u8>)> = Vec::new();
        sections.push(("config", self.model.config.to_text().into_bytes()));

        let mut w = ByteWriter::default();
        self.model.vocab.encode(&mut w);
        sections.push(("vocab", w.buf));

        let mut w = ByteWriter::default();
        self.model.pretrained.encode(&mut w);
        sections.push(("pretrained", w.buf));

        let mut w = ByteWriter::default();
        w.usize(self.model.params.len());
        for (_, name, t) in self.model.params.iter() {
            w.str(name);
            w.usize(t.shape().len());
            for &d in t.shape() {
                w.usize(d);
            }
            w.f64s(t.values());
        }
        sections.push(("params", w.buf));

        if let Some(adam) = &self.adam {
            let mut w = ByteWriter::default();
            w.u64(adam.step_count);
            for v in [adam.learning_rate, adam.beta1, adam.beta2, adam.epsilon] {
                w.f64(v);
            }
            w.usize(adam.first_moment.len());
            for (m, v) in adam.first_moment.iter().zip(&adam.second_moment) {
                w.f64s(m);
                w.f64s(v);
            }
            sections.push(("adam", w.buf));
        }

        let mut w = ByteWriter::default();
        w.f64(self.best_f1);
        w.usize(self.best_epoch);
        sections.push(("meta", w.buf));

        let mut out = ByteWriter::default();
        out.buf.extend_from_slice(MAGIC);
        out.u32(FORMAT_VERSION);
        out.u32(sections.len() as u32);
        for (name, payload) in &sections {
            out.str(name);
            out.usize(payload.len());
        }
        for (_, payload) in &sections {
            out.buf.extend_from_slice(payload);
        }
        let digest = Sha256::digest(&out.buf);
        out.buf.extend_from_slice(&digest);
        out.buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 + DIGEST_LEN {
            return Err(Error::Checkpoint("file is truncated".into()));
        }
        if &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::Checkpoint("not a model file".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
        let mut r = ByteReader::new(&body[MAGIC.len()..]);
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version}, expected {FORMAT_VERSION}"
            )));
        }
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Checkpoint(
                "checksum mismatch (file is corrupt or truncated)".into(),
            ));
        }

        let count = r.u32()? as usize;
        let mut table = Vec::with_capacity(count.min(16));
        for _ in 0..count {
            table.push((r.str()?, r.usize()?));
        }
        let mut config = None;
        let mut vocab = None;
        let mut pretrained = None;
        let mut params = None;
        let mut adam = None;
        let mut meta = None;
        for (name, len) in table {
            let payload = r.take(len)?;
            let mut s = ByteReader::new(payload);
            match name.as_str() {
                "config" => {
                    let text =
                        std::str::from_utf8(payload).map_err(|_| Error::Checkpoint("config is not UTF-8".into()))?;
                    config = Some(ModelConfig::from_text(text)?);
                    continue;
                }
                "vocab" => vocab = Some(Vocabulary::decode(&mut s)?),
                "pretrained" => pretrained = Some(PretrainedTable::decode(&mut s)?),
                "params" => params = Some(decode_params(&mut s)?),
                "adam" => adam = Some(decode_adam(&mut s)?),
                "meta" => meta = Some((s.f64()?, s.usize()?)),
                other => return Err(Error::Checkpoint(format!("unknown section {other:?}"))),
            }
            if !s.is_done() {
                return Err(Error::Checkpoint(format!("trailing bytes in section {name:?}")));
            }
        }
        if !r.is_done() {
            return Err(Error::Checkpoint("trailing bytes after sections".into()));
        }
        let missing = |what: &str| Error::Checkpoint(format!("missing section {what:?}"));
        let model = SrlModel::from_parts(
            config.ok_or_else(|| missing("config"))?,
            vocab.ok_or_else(|| missing("vocab"))?,
            pretrained.ok_or_else(|| missing("pretrained"))?,
            params.ok_or_else(|| missing("params"))?,
        )?;
        let (best_f1, best_epoch) = meta.ok_or_else(|| missing("meta"))?;
        Ok(Checkpoint {
            model,
            adam,
            best_f1,
            best_epoch,
        })
    }

    pub fn save<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(&self.to_bytes())?;
        out.flush()?;
        Ok(())
    }

    pub fn load<R: Read>(mut input: R) -> Result<Self> {
        let mut bytes = Vec::new();
        input.read_to_end(&mut bytes)?;
        Checkpoint::from_bytes(&bytes)
    }
}

fn decode_params(r: &mut ByteReader) -> Result<Vec<(String, Tensor)>> {
    let n = r.usize()?;
    let mut out = Vec::new();
    for _ in 0..n {
        let name = r.str()?;
        let rank = r.usize()?;
        let shape = (0..rank).map(|_| r.usize()).collect::<Result<Vec<_>>>()?;
        let values = r.f64s()?;
        let tensor = Tensor::new(&shape, values).map_err(|e| Error::Checkpoint(format!("parameter {name}: {e}")))?;
        out.push((name, tensor));
    }
    Ok(out)
}

fn decode_adam(r: &mut ByteReader) -> Result<AdamState> {
    let step_count = r.u64()?;
    let learning_rate = r.f64()?;
    let beta1 = r.f64()?;
    let beta2 = r.f64()?;
    let epsilon = r.f64()?;
    let n = r.usize()?;
    let mut first_moment = Vec::new();
    let mut second_moment = Vec::new();
    for _ in 0..n {
        first_moment.push(r.f64s()?);
        second_moment.push(r.f64s()?);
    }
    Ok(AdamState {
        step_count,
        learning_rate,
        beta1,
        beta2,
        epsilon,
        first_moment,
        second_moment,
    })
}
