//! On-disk dataset: per-simulation directories with CSV stress series and PGM
//! damage frames, plus a binary cache of downsampled frames.
//!
//! Layout of `sim_####/`:
//! - `meta.json`: seed, failure step, initial cracks, generator config
//! - `stress.csv`: `t,sigma_xx,sigma_yy`, one row per step, `t` from 1
//! - `damage/frame_0000.pgm`: initial cracks; `frame_####.pgm` for `####` in
//!   `1..=T` is the damage after that step

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::Channel;
use crate::pipeline::{
    downsample_frame, NormalizationStats, PreparedSim, FRAME_COLS, FRAME_ROWS,
};
use crate::rng::Fnv1a;
use crate::sim::{DamageFrame, InitialCrack, SimConfig, SimulationRecord};

pub const CACHE_MAGIC: &[u8; 8] = b"SNDS0001";
const CACHE_DIR: &str = "cache";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimMeta {
    pub seed: u64,
    pub failure_step: Option<usize>,
    pub steps: usize,
    pub initial_cracks: Vec<InitialCrack>,
    pub config: SimConfig,
}

pub fn sim_dir_name(index: usize) -> String {
    format!("sim_{index:04}")
}

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn create_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

/// Binary PGM, damaged pixels 255.
pub fn encode_pgm(frame: &DamageFrame) -> Vec<u8> {
    let mut out = format!("P5\n{} {}\n255\n", frame.cols(), frame.rows()).into_bytes();
    out.extend(frame.to_bools().into_iter().map(|b| if b { 255u8 } else { 0 }));
    out
}

pub fn decode_pgm(bytes: &[u8]) -> Result<DamageFrame> {
    // Header: magic, width, height, maxval separated by whitespace (comments
    // are not produced by the writer and not accepted here), then one byte.
    let mut fields = Vec::with_capacity(4);
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Data("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    if fields[0] != "P5" {
        return Err(Error::Data(format!("unsupported PGM magic {:?}", fields[0])));
    }
    let parse = |s: &str| {
        s.parse::<usize>()
            .map_err(|_| Error::Data(format!("bad PGM header field {s:?}")))
    };
    let (cols, rows, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
    if maxval != 255 {
        return Err(Error::Data(format!("PGM maxval {maxval}, expected 255")));
    }
    let pixels = bytes
        .get(pos..)
        .filter(|p| p.len() == rows * cols)
        .ok_or_else(|| Error::Data("PGM pixel data has the wrong length".into()))?;
    let cells: Vec<bool> = pixels.iter().map(|&p| p >= 128).collect();
    DamageFrame::from_bools(rows, cols, &cells)
}

fn stress_csv(record: &SimulationRecord) -> String {
    let mut s = String::from("t,sigma_xx,sigma_yy\n");
    for (t, (xx, yy)) in record.stress_xx.iter().zip(&record.stress_yy).enumerate() {
        s.push_str(&format!("{},{xx},{yy}\n", t + 1));
    }
    s
}

fn parse_stress_csv(text: &str, path: &Path) -> Result<(Vec<f64>, Vec<f64>)> {
    let bad = |line: usize, why: &str| {
        Error::Data(format!("{}:{}: {why}", path.display(), line + 1))
    };
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some("t,sigma_xx,sigma_yy") {
        return Err(bad(0, "expected header t,sigma_xx,sigma_yy"));
    }
    let (mut xx, mut yy) = (Vec::new(), Vec::new());
    for (i, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let cols: Vec<&str> = line.trim().split(',').collect();
        if cols.len() != 3 {
            return Err(bad(i + 1, "expected 3 columns"));
        }
        let t: usize = cols[0].parse().map_err(|_| bad(i + 1, "bad step index"))?;
        if t != xx.len() + 1 {
            return Err(bad(i + 1, "steps must run 1, 2, 3, ..."));
        }
        let val = |s: &str| -> Result<f64> {
            let v: f64 = s.parse().map_err(|_| bad(i + 1, "bad stress value"))?;
            if v.is_finite() {
                Ok(v)
            } else {
                Err(bad(i + 1, "non-finite stress value"))
            }
        };
        xx.push(val(cols[1])?);
        yy.push(val(cols[2])?);
    }
    Ok((xx, yy))
}

/// Writes every record plus a `dataset.json` index under `dir`.
pub fn write_dataset(dir: &Path, cfg: &SimConfig, records: &[SimulationRecord]) -> Result<()> {
    create_dir(dir)?;
    records
        .par_iter()
        .enumerate()
        .try_for_each(|(i, r)| write_record(&dir.join(sim_dir_name(i)), cfg, r))?;
    let index = serde_json::json!({ "n_sims": records.len(), "config": cfg });
    write_bytes(&dir.join("dataset.json"), serde_json::to_string_pretty(&index)?.as_bytes())
}

pub fn write_record(dir: &Path, cfg: &SimConfig, record: &SimulationRecord) -> Result<()> {
    let damage = dir.join("damage");
    create_dir(&damage)?;
    let meta = SimMeta {
        seed: record.seed,
        failure_step: record.failure_step,
        steps: record.len(),
        initial_cracks: record.initial_cracks.clone(),
        config: cfg.clone(),
    };
    write_bytes(&dir.join("meta.json"), serde_json::to_string_pretty(&meta)?.as_bytes())?;
    write_bytes(&dir.join("stress.csv"), stress_csv(record).as_bytes())?;
    for (k, frame) in std::iter::once(&record.initial_frame)
        .chain(&record.frames)
        .enumerate()
    {
        let path = damage.join(format!("frame_{k:04}.pgm"));
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        w.write_all(&encode_pgm(frame))
            .and_then(|_| w.flush())
            .map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

/// Sorted `sim_####` directories under `dir`.
pub fn list_sims(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut sims = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|e| Error::io(dir, e))?;
        let name = entry.file_name().to_string_lossy().into_owned();
        if name.starts_with("sim_") && entry.path().is_dir() {
            sims.push(entry.path());
        }
    }
    sims.sort();
    if sims.is_empty() {
        return Err(Error::Data(format!("no sim_#### directories in {}", dir.display())));
    }
    Ok(sims)
}

fn read_meta(dir: &Path) -> Result<SimMeta> {
    let path = dir.join("meta.json");
    serde_json::from_slice(&read_bytes(&path)?)
        .map_err(|e| Error::Data(format!("{}: {e}", path.display())))
}

fn read_stress(dir: &Path, steps: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    let path = dir.join("stress.csv");
    let text = String::from_utf8(read_bytes(&path)?)
        .map_err(|_| Error::Data(format!("{} is not UTF-8", path.display())))?;
    let (xx, yy) = parse_stress_csv(&text, &path)?;
    if xx.len() != steps {
        return Err(Error::Data(format!(
            "{} has {} rows, meta.json says {steps}",
            path.display(),
            xx.len()
        )));
    }
    Ok((xx, yy))
}

fn read_frame(dir: &Path, k: usize) -> Result<DamageFrame> {
    let path = dir.join("damage").join(format!("frame_{k:04}.pgm"));
    decode_pgm(&read_bytes(&path)?).map_err(|e| match e {
        Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Reads one full-resolution record back.
pub fn read_record(dir: &Path) -> Result<SimulationRecord> {
    let meta = read_meta(dir)?;
    let (stress_xx, stress_yy) = read_stress(dir, meta.steps)?;
    let initial_frame = read_frame(dir, 0)?;
    let frames = (1..=meta.steps)
        .map(|k| read_frame(dir, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(SimulationRecord {
        seed: meta.seed,
        initial_frame,
        initial_cracks: meta.initial_cracks,
        frames,
        stress_xx,
        stress_yy,
        failure_step: meta.failure_step,
    })
}

pub fn read_dataset(dir: &Path) -> Result<Vec<SimulationRecord>> {
    list_sims(dir)?.par_iter().map(|d| read_record(d)).collect()
}

/// A record reduced to model resolution: 24x16 frames and both raw channels.
#[derive(Debug, Clone, PartialEq)]
pub struct CoarseSim {
    pub id: usize,
    pub seed: u64,
    pub failure_step: Option<usize>,
    pub frames: Vec<DamageFrame>,
    pub stress_xx: Vec<f64>,
    pub stress_yy: Vec<f64>,
}

impl CoarseSim {
    pub fn from_record(id: usize, record: &SimulationRecord) -> Result<Self> {
        Ok(CoarseSim {
            id,
            seed: record.seed,
            failure_step: record.failure_step,
            frames: record
                .frames
                .iter()
                .map(downsample_frame)
                .collect::<Result<Vec<_>>>()?,
            stress_xx: record.stress_xx.clone(),
            stress_yy: record.stress_yy.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn stress(&self, channel: Channel) -> &[f64] {
        match channel {
            Channel::Xx => &self.stress_xx,
            Channel::Yy => &self.stress_yy,
        }
    }

    pub fn prepare(&self, channel: Channel, stats: &NormalizationStats) -> Result<PreparedSim> {
        PreparedSim::new(
            self.id,
            self.seed,
            self.frames.clone(),
            self.stress(channel).to_vec(),
            stats,
        )
    }
}

pub fn encode_cache(frames: &[DamageFrame]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + frames.len() * FRAME_ROWS * FRAME_COLS);
    out.extend_from_slice(CACHE_MAGIC);
    for f in frames {
        out.extend(f.to_bools().into_iter().map(u8::from));
    }
    out
}

pub fn decode_cache(bytes: &[u8], expected_frames: usize) -> Result<Vec<DamageFrame>> {
    let frame_len = FRAME_ROWS * FRAME_COLS;
    if bytes.len() < 8 || &bytes[..8] != CACHE_MAGIC {
        return Err(Error::Data("cache file has the wrong magic".into()));
    }
    let body = &bytes[8..];
    if body.len() != expected_frames * frame_len {
        return Err(Error::Data(format!(
            "cache holds {} bytes, expected {expected_frames} frames",
            body.len()
        )));
    }
    body.chunks(frame_len)
        .map(|chunk| {
            if chunk.iter().any(|&b| b > 1) {
                return Err(Error::Data("cache byte outside {0, 1}".into()));
            }
            let cells: Vec<bool> = chunk.iter().map(|&b| b == 1).collect();
            DamageFrame::from_bools(FRAME_ROWS, FRAME_COLS, &cells)
        })
        .collect()
}

/// Hash of every simulation's `meta.json` and `stress.csv`. Frames are a
/// deterministic function of seed and config, both of which live in the meta.
pub fn dataset_hash(dir: &Path) -> Result<u64> {
    let mut h = Fnv1a::new();
    for sim in list_sims(dir)? {
        h.update(sim.file_name().unwrap_or_default().as_encoded_bytes());
        h.update(&read_bytes(&sim.join("meta.json"))?);
        h.update(&read_bytes(&sim.join("stress.csv"))?);
    }
    Ok(h.finish())
}

/// Loads a dataset at model resolution, reusing or filling the frame cache at
/// `dir/cache/<hash>/`.
pub fn load_coarse(dir: &Path) -> Result<Vec<CoarseSim>> {
    let cache = dir.join(CACHE_DIR).join(format!("{:016x}", dataset_hash(dir)?));
    create_dir(&cache)?;
    list_sims(dir)?
        .par_iter()
        .enumerate()
        .map(|(id, sim)| {
            let meta = read_meta(sim)?;
            let (stress_xx, stress_yy) = read_stress(sim, meta.steps)?;
            let name = sim.file_name().unwrap_or_default().to_string_lossy().into_owned();
            let cache_path = cache.join(format!("{name}.bin"));
            let frames = match fs::read(&cache_path) {
                Ok(bytes) => decode_cache(&bytes, meta.steps)?,
                Err(_) => {
                    let frames = (1..=meta.steps)
                        .map(|k| read_frame(sim, k).and_then(|f| downsample_frame(&f)))
                        .collect::<Result<Vec<_>>>()?;
                    write_bytes(&cache_path, &encode_cache(&frames))?;
                    frames
                }
            };
            Ok(CoarseSim {
                id,
                seed: meta.seed,
                failure_step: meta.failure_step,
                frames,
                stress_xx,
                stress_yy,
            })
        })
        .collect()
}
