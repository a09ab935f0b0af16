//! Binary checkpoint container.
//!
//! All integers and floats are little-endian.
//!
//! ```text
//! magic            8 bytes, one per architecture
//! n_entries        u32
//!   key_len u16, key utf-8, tag u8 (0 = u64, 1 = f64), value 8 bytes
//! n_params         u32
//!   name_len u16, name utf-8, rank u8, extents u64 x rank, values f64 x len
//! checksum         u64, FNV-1a over every preceding byte
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::baselines::{BaselineConfig, BiLstmBaseline, LstmBaseline};
use crate::error::{Error, Result};
use crate::model::{AnyModel, Architecture, Channel, ConvBlock, StressNet, StressNetConfig, Surrogate};
use crate::params::ParamStore;
use crate::pipeline::NormalizationStats;
use crate::rng::Fnv1a;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ConfigValue {
    U64(u64),
    F64(f64),
}

/// Container contents before they are interpreted as a model.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCheckpoint {
    pub architecture: Architecture,
    pub entries: BTreeMap<String, ConfigValue>,
    pub params: ParamStore,
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptCheckpoint(msg.into())
}

impl RawCheckpoint {
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(self.architecture.magic());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (key, value) in &self.entries {
            out.extend_from_slice(&(key.len() as u16).to_le_bytes());
            out.extend_from_slice(key.as_bytes());
            match value {
                ConfigValue::U64(v) => {
                    out.push(0);
                    out.extend_from_slice(&v.to_le_bytes());
                }
                ConfigValue::F64(v) => {
                    out.push(1);
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in self.params.iter() {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.rank() as u8);
            for &e in t.shape() {
                out.extend_from_slice(&(e as u64).to_le_bytes());
            }
            for &v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut h = Fnv1a::new();
        h.update(&out);
        out.extend_from_slice(&h.finish().to_le_bytes());
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 16 {
            return Err(corrupt("file too short"));
        }
        let (body, tail) = bytes.split_at(bytes.len() - 8);
        let mut h = Fnv1a::new();
        h.update(body);
        if h.finish().to_le_bytes() != tail {
            return Err(corrupt("checksum mismatch (truncated or modified file)"));
        }
        let architecture = Architecture::from_magic(&body[..8])
            .ok_or_else(|| corrupt("unknown magic"))?;
        let mut r = Reader { bytes: body, pos: 8 };
        let mut entries = BTreeMap::new();
        for _ in 0..r.u32()? {
            let key = r.string()?;
            let value = match r.u8()? {
                0 => ConfigValue::U64(r.u64()?),
                1 => ConfigValue::F64(f64::from_le_bytes(r.array()?)),
                tag => return Err(corrupt(format!("unknown value tag {tag}"))),
            };
            entries.insert(key, value);
        }
        let mut params = ParamStore::new();
        for _ in 0..r.u32()? {
            let name = r.string()?;
            let rank = r.u8()? as usize;
            let shape = (0..rank)
                .map(|_| r.u64().map(|e| e as usize))
                .collect::<Result<Vec<_>>>()?;
            let len = shape
                .iter()
                .try_fold(1usize, |acc, &e| acc.checked_mul(e))
                .filter(|&n| n.checked_mul(8).is_some_and(|b| b <= body.len()))
                .ok_or_else(|| corrupt(format!("parameter {name} has impossible shape {shape:?}")))?;
            let data = (0..len)
                .map(|_| r.array().map(f64::from_le_bytes))
                .collect::<Result<Vec<_>>>()?;
            let t = Tensor::from_vec(&shape, data).map_err(|e| corrupt(e.to_string()))?;
            params.insert(name, t).map_err(|e| corrupt(e.to_string()))?;
        }
        if r.pos != body.len() {
            return Err(corrupt("trailing bytes after parameters"));
        }
        Ok(RawCheckpoint {
            architecture,
            entries,
            params,
        })
    }

    fn get_u64(&self, key: &str) -> Result<u64> {
        match self.entries.get(key) {
            Some(ConfigValue::U64(v)) => Ok(*v),
            Some(_) => Err(corrupt(format!("entry {key} is not an integer"))),
            None => Err(corrupt(format!("missing entry {key}"))),
        }
    }

    fn get_usize(&self, key: &str) -> Result<usize> {
        usize::try_from(self.get_u64(key)?).map_err(|_| corrupt(format!("entry {key} overflows")))
    }

    fn get_f64(&self, key: &str) -> Result<f64> {
        match self.entries.get(key) {
            Some(ConfigValue::F64(v)) => Ok(*v),
            Some(_) => Err(corrupt(format!("entry {key} is not a float"))),
            None => Err(corrupt(format!("missing entry {key}"))),
        }
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl Reader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| corrupt("unexpected end of data"))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    fn string(&mut self) -> Result<String> {
        let n = u16::from_le_bytes(self.array()?) as usize;
        String::from_utf8(self.take(n)?.to_vec()).map_err(|_| corrupt("name is not UTF-8"))
    }
}

/// A model together with the normalization bounds it was trained under.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub model: AnyModel,
    pub stats: NormalizationStats,
}

impl Checkpoint {
    pub fn to_raw(&self) -> RawCheckpoint {
        use ConfigValue::{F64, U64};
        let mut e = BTreeMap::new();
        e.insert("channel".to_string(), U64(self.model.channel().code()));
        e.insert("norm.x_min".to_string(), F64(self.stats.x_min));
        e.insert("norm.x_max".to_string(), F64(self.stats.x_max));
        match &self.model {
            AnyModel::StressNet(m) => {
                let c = m.config();
                e.insert("delta_t".into(), U64(c.delta_t as u64));
                e.insert("feature_dim".into(), U64(c.feature_dim as u64));
                e.insert("hidden".into(), U64(c.hidden as u64));
                e.insert("frame_rows".into(), U64(c.frame_rows as u64));
                e.insert("frame_cols".into(), U64(c.frame_cols as u64));
                e.insert("conv_blocks".into(), U64(c.conv_blocks.len() as u64));
                for (i, b) in c.conv_blocks.iter().enumerate() {
                    e.insert(format!("conv{i}.kernel"), U64(b.kernel as u64));
                    e.insert(format!("conv{i}.pool"), U64(b.pool as u64));
                }
            }
            AnyModel::Lstm(m) => insert_baseline(&mut e, m.config()),
            AnyModel::BiLstm(m) => insert_baseline(&mut e, m.config()),
        }
        RawCheckpoint {
            architecture: self.model.architecture(),
            entries: e,
            params: self.model.params().clone(),
        }
    }

    pub fn from_raw(raw: RawCheckpoint) -> Result<Self> {
        let channel = Channel::from_code(raw.get_u64("channel")?)?;
        let stats = NormalizationStats::new(raw.get_f64("norm.x_min")?, raw.get_f64("norm.x_max")?)
            .map_err(|e| corrupt(e.to_string()))?;
        let model = match raw.architecture {
            Architecture::StressNet => {
                let n = raw.get_usize("conv_blocks")?;
                let conv_blocks = (0..n)
                    .map(|i| {
                        Ok(ConvBlock {
                            kernel: raw.get_usize(&format!("conv{i}.kernel"))?,
                            pool: raw.get_usize(&format!("conv{i}.pool"))?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                let config = StressNetConfig {
                    delta_t: raw.get_usize("delta_t")?,
                    feature_dim: raw.get_usize("feature_dim")?,
                    conv_blocks,
                    hidden: raw.get_usize("hidden")?,
                    frame_rows: raw.get_usize("frame_rows")?,
                    frame_cols: raw.get_usize("frame_cols")?,
                };
                StressNet::from_params(config, channel, raw.params)?.into()
            }
            Architecture::Lstm => {
                LstmBaseline::from_params(baseline_config(&raw)?, channel, raw.params)?.into()
            }
            Architecture::BiLstm => {
                BiLstmBaseline::from_params(baseline_config(&raw)?, channel, raw.params)?.into()
            }
        };
        Ok(Checkpoint { model, stats })
    }

    pub fn encode(&self) -> Vec<u8> {
        self.to_raw().encode()
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        Self::from_raw(RawCheckpoint::decode(bytes)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.encode()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&fs::read(path).map_err(|e| Error::io(path, e))?)
    }
}

fn insert_baseline(e: &mut BTreeMap<String, ConfigValue>, c: &BaselineConfig) {
    e.insert("delta_t".into(), ConfigValue::U64(c.delta_t as u64));
    e.insert("hidden".into(), ConfigValue::U64(c.hidden as u64));
    e.insert("feature_dim".into(), ConfigValue::U64(c.feature_dim as u64));
}

fn baseline_config(raw: &RawCheckpoint) -> Result<BaselineConfig> {
    Ok(BaselineConfig {
        delta_t: raw.get_usize("delta_t")?,
        hidden: raw.get_usize("hidden")?,
        feature_dim: raw.get_usize("feature_dim")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> StressNetConfig {
        StressNetConfig {
            delta_t: 3,
            feature_dim: 4,
            hidden: 3,
            frame_rows: 6,
            frame_cols: 4,
            conv_blocks: vec![ConvBlock { kernel: 3, pool: 2 }],
        }
    }

    fn stats() -> NormalizationStats {
        NormalizationStats::new(-1.5, 2.5e7).unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let models: Vec<AnyModel> = vec![
            StressNet::new(toy(), Channel::Yy, 4).unwrap().into(),
            LstmBaseline::new(BaselineConfig::desk(), Channel::Xx, 4).unwrap().into(),
            BiLstmBaseline::new(BaselineConfig::desk(), Channel::Xx, 4).unwrap().into(),
        ];
        for model in models {
            let ck = Checkpoint { model, stats: stats() };
            let bytes = ck.encode();
            let back = Checkpoint::decode(&bytes).unwrap();
            assert_eq!(back.encode(), bytes);
            assert_eq!(back.stats, ck.stats);
            assert_eq!(back.model.architecture(), ck.model.architecture());
            assert_eq!(back.model.channel(), ck.model.channel());
            assert_eq!(back.model.params(), ck.model.params());
        }
    }

    #[test]
    fn truncated_and_modified_files_rejected() {
        let model = StressNet::new(toy(), Channel::Yy, 4).unwrap().into();
        let bytes = Checkpoint { model, stats: stats() }.encode();
        for cut in [0, 7, 8, 40, bytes.len() - 1] {
            assert!(matches!(
                Checkpoint::decode(&bytes[..cut]),
                Err(Error::CorruptCheckpoint(_))
            ));
        }
        let mut flipped = bytes.clone();
        flipped[30] ^= 1;
        assert!(matches!(Checkpoint::decode(&flipped), Err(Error::CorruptCheckpoint(_))));
        let mut magic = bytes;
        magic[..8].copy_from_slice(b"NOTACKPT");
        assert!(matches!(Checkpoint::decode(&magic), Err(Error::CorruptCheckpoint(_))));
    }

    #[test]
    fn loading_into_other_window_length_fails() {
        let cfg = StressNetConfig { delta_t: 10, ..toy() };
        let model = StressNet::new(cfg.clone(), Channel::Yy, 1).unwrap().into();
        let bytes = Checkpoint { model, stats: stats() }.encode();
        let raw = RawCheckpoint::decode(&bytes).unwrap();
        let other = StressNetConfig { delta_t: 5, ..cfg };
        assert!(matches!(
            StressNet::from_params(other, Channel::Yy, raw.params),
            Err(Error::ShapeMismatch(_))
        ));
    }
}
