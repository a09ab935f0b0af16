//! Toy brittle-fracture generator.
//!
//! A 2 m x 3 m plate is rasterized at 128 x 192 square pixels and loaded in
//! uniaxial tension along its long (row) axis. Twenty 13-pixel cracks are
//! seeded, one in each of 20 randomly chosen cells of the 6 x 4 grid of
//! 32 x 32-pixel cells, at 0, 60 or 120 degrees from horizontal.
//!
//! Each step the applied stress ramps up; a crack tip advances one pixel when
//! its stress intensity `K = s_app * sqrt(pi * a) * cos^2(phi)`, perturbed by
//! noise, exceeds the toughness `K_c`. Tips turn gradually toward the
//! horizontal, occasionally kink sideways, and stop when they leave the plate
//! or run into another crack. A coalescence merges the two cracks' lengths and
//! sheds a random 10-30% of the load, which then recovers geometrically. The
//! reported maximum stress is the applied stress times a tip-concentration
//! factor `1 + 2 sqrt(a_max / rho)` with multiplicative noise. Once a
//! connected crack spans the plate horizontally, a band around it spalls,
//! damage freezes and the stress decays by a constant factor per step,
//! without noise.
//!
//! Everything is driven by [`SplitMix64`], so a seed fully determines a record.

use std::collections::VecDeque;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SplitMix64;

/// Steps treated as the initial loading ramp when counting fluctuations.
pub const RAMP_STEPS: usize = 20;

const FLUCTUATION_WARMUP: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub width_m: f64,
    pub length_m: f64,
    pub rows: usize,
    pub cols: usize,
    pub cell_px: usize,
    pub n_initial_cracks: usize,
    pub crack_length_m: f64,
    pub orientations_deg: Vec<f64>,
    pub steps: usize,
    /// Fracture toughness `K_c` in Pa * sqrt(m).
    pub toughness: f64,
    /// Applied-stress ramp in Pa per step.
    pub load_rate: f64,
    /// Tip radius `rho` in pixels.
    pub tip_radius_px: f64,
    /// Half-width of the innovation driving the multiplicative stress
    /// fluctuation, a damped second-order oscillation per channel.
    pub fluctuation: f64,
    /// Oscillation period of the fluctuation, in steps.
    pub fluctuation_period: f64,
    /// Per-step damping of the fluctuation, in (0, 1).
    pub fluctuation_damping: f64,
    /// Half-width of the multiplicative noise on `K`.
    pub growth_noise: f64,
    pub kink_probability: f64,
    /// Maximum rotation toward horizontal per growth step, degrees.
    pub turn_deg: f64,
    /// Load retained after a coalescence is drawn from this range.
    pub coalescence_retained: (f64, f64),
    /// Fraction of shed load recovered per step.
    pub load_recovery: f64,
    /// Transverse (xx) stress relative to the load-axis (yy) stress.
    pub transverse_ratio: f64,
    /// Per-step stress factor after failure.
    pub post_failure_decay: f64,
    /// Half-width of the spalled band marked around the failed crack, pixels.
    pub spall_radius_px: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            width_m: 2.0,
            length_m: 3.0,
            rows: 192,
            cols: 128,
            cell_px: 32,
            n_initial_cracks: 20,
            crack_length_m: 0.20,
            orientations_deg: vec![0.0, 60.0, 120.0],
            steps: 228,
            toughness: 5.0e6,
            load_rate: 1.0e5,
            tip_radius_px: 1.0,
            fluctuation: 0.01,
            fluctuation_period: 10.0,
            fluctuation_damping: 0.97,
            growth_noise: 0.1,
            kink_probability: 0.2,
            turn_deg: 10.0,
            coalescence_retained: (0.7, 0.9),
            load_recovery: 0.05,
            transverse_ratio: 0.3,
            post_failure_decay: 0.95,
            spall_radius_px: 8,
        }
    }
}

impl SimConfig {
    pub fn pixel_m(&self) -> f64 {
        self.width_m / self.cols as f64
    }

    /// Seeded crack length in pixels.
    pub fn crack_length_px(&self) -> usize {
        (self.crack_length_m / self.pixel_m()).round() as usize
    }

    pub fn cell_grid(&self) -> (usize, usize) {
        (self.rows / self.cell_px, self.cols / self.cell_px)
    }

    pub fn validate(&self) -> Result<()> {
        let pitch_rows = self.length_m / self.rows as f64;
        if (pitch_rows - self.pixel_m()).abs() > 1e-12 {
            return Err(Error::InvalidArgument(format!(
                "pixels are not square: {} m vs {} m",
                pitch_rows,
                self.pixel_m()
            )));
        }
        if self.cell_px == 0 || self.rows % self.cell_px != 0 || self.cols % self.cell_px != 0 {
            return Err(Error::InvalidArgument("cells must tile the grid".into()));
        }
        let (cr, cc) = self.cell_grid();
        if self.n_initial_cracks > cr * cc {
            return Err(Error::InvalidArgument(format!(
                "{} cracks for {} cells",
                self.n_initial_cracks,
                cr * cc
            )));
        }
        let len = self.crack_length_px();
        if len == 0 || len + 2 > self.cell_px {
            return Err(Error::InvalidArgument(format!(
                "crack of {len} px does not fit a {} px cell",
                self.cell_px
            )));
        }
        if self.orientations_deg.is_empty() || self.steps == 0 || self.load_rate <= 0.0 {
            return Err(Error::InvalidArgument("empty orientations, steps or load".into()));
        }
        if !(self.fluctuation >= 0.0 && self.fluctuation < 1.0)
            || !(self.fluctuation_period >= 2.0)
            || !(self.fluctuation_damping > 0.0 && self.fluctuation_damping < 1.0)
        {
            return Err(Error::InvalidArgument("fluctuation parameters".into()));
        }
        if !(self.toughness >= 0.0) || self.tip_radius_px <= 0.0 {
            return Err(Error::InvalidArgument("toughness and tip radius".into()));
        }
        Ok(())
    }
}

/// Binary crack mask, bit-packed row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DamageFrame {
    rows: usize,
    cols: usize,
    words: Vec<u64>,
}

impl DamageFrame {
    pub fn new(rows: usize, cols: usize) -> Self {
        DamageFrame {
            rows,
            cols,
            words: vec![0; (rows * cols).div_ceil(64)],
        }
    }

    pub fn from_bools(rows: usize, cols: usize, cells: &[bool]) -> Result<Self> {
        if cells.len() != rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{} cells for a {rows}x{cols} frame",
                cells.len()
            )));
        }
        let mut f = Self::new(rows, cols);
        for (i, &v) in cells.iter().enumerate() {
            if v {
                f.words[i / 64] |= 1 << (i % 64);
            }
        }
        Ok(f)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        let i = r * self.cols + c;
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, r: usize, c: usize) {
        let i = r * self.cols + c;
        self.words[i / 64] |= 1 << (i % 64);
    }

    pub fn count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Every damaged pixel of `other` is damaged here.
    pub fn contains(&self, other: &DamageFrame) -> bool {
        self.rows == other.rows
            && self.cols == other.cols
            && self.words.iter().zip(&other.words).all(|(a, b)| b & !a == 0)
    }

    pub fn to_bools(&self) -> Vec<bool> {
        (0..self.rows * self.cols)
            .map(|i| self.words[i / 64] >> (i % 64) & 1 == 1)
            .collect()
    }

    /// Whether an 8-connected damaged path joins the first and last columns.
    pub fn spans_horizontally(&self) -> bool {
        let last = self.cols - 1;
        let seen = self.reachable_from_column(0);
        (0..self.rows).any(|r| seen[r * self.cols + last])
    }

    /// Damaged pixels 8-connected to a damaged pixel in column `col`, row-major.
    pub fn reachable_from_column(&self, col: usize) -> Vec<bool> {
        let (rows, cols) = (self.rows, self.cols);
        let mut seen = vec![false; rows * cols];
        let mut queue = VecDeque::new();
        for r in 0..rows {
            if self.get(r, col) {
                seen[r * cols + col] = true;
                queue.push_back((r, col));
            }
        }
        while let Some((r, c)) = queue.pop_front() {
            for dr in -1i64..=1 {
                for dc in -1i64..=1 {
                    let (nr, nc) = (r as i64 + dr, c as i64 + dc);
                    if nr < 0 || nc < 0 || nr >= rows as i64 || nc >= cols as i64 {
                        continue;
                    }
                    let (nr, nc) = (nr as usize, nc as usize);
                    if !seen[nr * cols + nc] && self.get(nr, nc) {
                        seen[nr * cols + nc] = true;
                        queue.push_back((nr, nc));
                    }
                }
            }
        }
        seen
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitialCrack {
    pub center_row: usize,
    pub center_col: usize,
    pub orientation_deg: f64,
    pub pixels: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationRecord {
    pub seed: u64,
    pub initial_frame: DamageFrame,
    pub initial_cracks: Vec<InitialCrack>,
    /// Frame `k` is the damage after step `k + 1`.
    pub frames: Vec<DamageFrame>,
    pub stress_xx: Vec<f64>,
    pub stress_yy: Vec<f64>,
    /// 1-based step at which a spanning crack first appears.
    pub failure_step: Option<usize>,
}

impl SimulationRecord {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn stress(&self, channel: crate::model::Channel) -> &[f64] {
        match channel {
            crate::model::Channel::Xx => &self.stress_xx,
            crate::model::Channel::Yy => &self.stress_yy,
        }
    }
}

#[derive(Debug, Clone)]
struct Tip {
    row: f64,
    col: f64,
    /// Direction of travel, radians from +col toward -row.
    angle: f64,
    px: (i64, i64),
    active: bool,
}

#[derive(Debug, Clone)]
struct Crack {
    tips: [Tip; 2],
    length_px: f64,
}

/// Running state of one simulation.
#[derive(Debug, Clone)]
pub struct SimState {
    cfg: SimConfig,
    rng: SplitMix64,
    frame: DamageFrame,
    /// Crack id + 1 of the pixel's first owner; 0 = intact.
    owner: Vec<u16>,
    cracks: Vec<Crack>,
    /// Union-find over crack ids for coalesced lengths.
    parent: Vec<usize>,
    load_factor: f64,
    step: usize,
    failure_step: Option<usize>,
    /// Stress at failure, `[xx, yy]`, before fluctuation.
    failure_base: [f64; 2],
    /// Last two fluctuation values per channel, `[xx, yy]`.
    wave: [[f64; 2]; 2],
    initial: Vec<InitialCrack>,
}

fn rotate_toward_horizontal(angle: f64, max_turn: f64) -> f64 {
    let target = if angle.cos() >= 0.0 {
        0.0
    } else {
        std::f64::consts::PI
    };
    // Signed shortest difference in (-pi, pi].
    let mut diff = target - angle;
    while diff > std::f64::consts::PI {
        diff -= 2.0 * std::f64::consts::PI;
    }
    while diff <= -std::f64::consts::PI {
        diff += 2.0 * std::f64::consts::PI;
    }
    angle + diff.clamp(-max_turn, max_turn)
}

/// Pixels on the 8-connected Bresenham line from `a` to `b`, excluding `a`.
fn line_pixels(a: (i64, i64), b: (i64, i64)) -> Vec<(i64, i64)> {
    let (mut r, mut c) = a;
    let dr = (b.0 - a.0).abs();
    let dc = (b.1 - a.1).abs();
    let sr = if b.0 > a.0 { 1 } else { -1 };
    let sc = if b.1 > a.1 { 1 } else { -1 };
    let mut err = dc - dr;
    let mut out = Vec::new();
    while (r, c) != b {
        let e2 = 2 * err;
        if e2 > -dr {
            err -= dr;
            c += sc;
        }
        if e2 < dc {
            err += dc;
            r += sr;
        }
        out.push((r, c));
    }
    out
}

impl SimState {
    /// Seeds the initial cracks; the returned state is at step 0.
    pub fn seed_cracks(cfg: &SimConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let mut rng = SplitMix64::derived(seed, "fracture-sim");
        let (cr, cc) = cfg.cell_grid();
        let mut cells: Vec<usize> = (0..cr * cc).collect();
        rng.shuffle(&mut cells);
        cells.truncate(cfg.n_initial_cracks);

        let len = cfg.crack_length_px();
        let half = (len - 1) as f64 / 2.0;
        // Keep the whole crack (plus one pixel) inside its cell.
        let margin = half.ceil() as usize + 1;
        let mut state = SimState {
            frame: DamageFrame::new(cfg.rows, cfg.cols),
            owner: vec![0; cfg.rows * cfg.cols],
            cracks: Vec::with_capacity(cells.len()),
            parent: (0..cells.len()).collect(),
            load_factor: 1.0,
            step: 0,
            failure_step: None,
            failure_base: [0.0; 2],
            wave: [[0.0; 2]; 2],
            initial: Vec::new(),
            cfg: cfg.clone(),
            rng,
        };
        let mut initial = Vec::with_capacity(cells.len());
        for (id, &cell) in cells.iter().enumerate() {
            let (ci, cj) = (cell / cc, cell % cc);
            let span = cfg.cell_px - 2 * margin;
            let r0 = ci * cfg.cell_px + margin + state.rng.below(span);
            let c0 = cj * cfg.cell_px + margin + state.rng.below(span);
            let deg = cfg.orientations_deg[state.rng.below(cfg.orientations_deg.len())];
            let theta = deg.to_radians();
            let (ur, uc) = (-theta.sin(), theta.cos());
            let mut pixels = 0;
            let mut prev: Option<(i64, i64)> = None;
            let mut ends = [(0.0, 0.0, (0i64, 0i64)); 2];
            for k in 0..len {
                let s = k as f64 - half;
                let (fr, fc) = (r0 as f64 + s * ur, c0 as f64 + s * uc);
                let p = (fr.round() as i64, fc.round() as i64);
                // Rounding can repeat a pixel; bridge any gap to stay 8-connected.
                let path = match prev {
                    Some(q) if q == p => Vec::new(),
                    Some(q) => line_pixels(q, p),
                    None => vec![p],
                };
                for q in path {
                    if state.mark(q, id) {
                        pixels += 1;
                    }
                }
                if k == 0 {
                    ends[0] = (fr, fc, p);
                }
                if k == len - 1 {
                    ends[1] = (fr, fc, p);
                }
                prev = Some(p);
            }
            let tip = |(row, col, px): (f64, f64, (i64, i64)), angle: f64| Tip {
                row,
                col,
                angle,
                px,
                active: true,
            };
            state.cracks.push(Crack {
                tips: [
                    tip(ends[0], theta + std::f64::consts::PI),
                    tip(ends[1], theta),
                ],
                length_px: len as f64,
            });
            initial.push(InitialCrack {
                center_row: r0,
                center_col: c0,
                orientation_deg: deg,
                pixels,
            });
        }
        state.initial = initial;
        // Start the fluctuation from its stationary regime.
        for _ in 0..FLUCTUATION_WARMUP {
            state.fluctuation();
        }
        Ok(state)
    }

    fn mark(&mut self, p: (i64, i64), id: usize) -> bool {
        let (r, c) = (p.0 as usize, p.1 as usize);
        let idx = r * self.cfg.cols + c;
        if self.owner[idx] != 0 {
            return false;
        }
        self.owner[idx] = id as u16 + 1;
        self.frame.set(r, c);
        true
    }

    fn root(&mut self, mut i: usize) -> usize {
        while self.parent[i] != i {
            self.parent[i] = self.parent[self.parent[i]];
            i = self.parent[i];
        }
        i
    }

    /// Total length of the coalesced crack containing `id`.
    fn merged_length(&mut self, id: usize) -> f64 {
        let root = self.root(id);
        let mut total = 0.0;
        for j in 0..self.cracks.len() {
            if self.root(j) == root {
                total += self.cracks[j].length_px;
            }
        }
        total
    }

    pub fn frame(&self) -> &DamageFrame {
        &self.frame
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn failure_step(&self) -> Option<usize> {
        self.failure_step
    }

    pub fn initial_cracks(&self) -> &[InitialCrack] {
        &self.initial
    }

    fn in_bounds(&self, p: (i64, i64)) -> bool {
        p.0 >= 0 && p.1 >= 0 && p.0 < self.cfg.rows as i64 && p.1 < self.cfg.cols as i64
    }

    fn grow_tip(&mut self, id: usize, which: usize) {
        let max_turn = self.cfg.turn_deg.to_radians();
        let kink = if self.rng.bernoulli(self.cfg.kink_probability) {
            if self.rng.bernoulli(0.5) {
                1.0
            } else {
                -1.0
            }
        } else {
            0.0
        };
        let tip = &mut self.cracks[id].tips[which];
        tip.angle = rotate_toward_horizontal(tip.angle, max_turn);
        let (ur, uc) = (-tip.angle.sin(), tip.angle.cos());
        // Perpendicular kink: rotate the direction by 90 degrees.
        tip.row += ur + kink * uc;
        tip.col += uc - kink * ur;
        let target = (tip.row.round() as i64, tip.col.round() as i64);
        let from = tip.px;
        let mut advanced = false;
        for p in line_pixels(from, target) {
            if !self.in_bounds(p) {
                self.cracks[id].tips[which].active = false;
                break;
            }
            let idx = p.0 as usize * self.cfg.cols + p.1 as usize;
            let other = self.owner[idx];
            if other != 0 && other as usize - 1 != id {
                let j = other as usize - 1;
                let (ri, rj) = (self.root(id), self.root(j));
                if ri != rj {
                    self.parent[ri] = rj;
                }
                let (lo, hi) = self.cfg.coalescence_retained;
                self.load_factor *= self.rng.uniform(lo, hi);
                self.cracks[id].tips[which].active = false;
                break;
            }
            self.mark(p, id);
            self.cracks[id].tips[which].px = p;
            advanced = true;
        }
        if advanced {
            self.cracks[id].length_px += 1.0;
        }
    }

    /// Marks every pixel within `spall_radius_px` (Chebyshev) of the
    /// crack clusters that join the first and last columns.
    fn spall(&mut self) {
        let (rows, cols) = (self.cfg.rows, self.cfg.cols);
        let from_left = self.frame.reachable_from_column(0);
        let from_right = self.frame.reachable_from_column(cols - 1);
        let rad = self.cfg.spall_radius_px as i64;
        let mut spalled = self.frame.clone();
        for r in 0..rows {
            for c in 0..cols {
                if !(from_left[r * cols + c] && from_right[r * cols + c]) {
                    continue;
                }
                for nr in (r as i64 - rad).max(0)..=(r as i64 + rad).min(rows as i64 - 1) {
                    for nc in (c as i64 - rad).max(0)..=(c as i64 + rad).min(cols as i64 - 1) {
                        spalled.set(nr as usize, nc as usize);
                    }
                }
            }
        }
        self.frame = spalled;
    }

    /// Multiplicative fluctuation factors `(xx, yy)` for this step.
    fn fluctuation(&mut self) -> (f64, f64) {
        let r = self.cfg.fluctuation_damping;
        let w = 2.0 * std::f64::consts::PI / self.cfg.fluctuation_period;
        let (a1, a2) = (2.0 * r * w.cos(), -r * r);
        let mut out = [0.0; 2];
        for (ch, o) in out.iter_mut().enumerate() {
            let [prev, prev2] = self.wave[ch];
            let kick = self.cfg.fluctuation * self.rng.uniform(-1.0, 1.0);
            let next = a1 * prev + a2 * prev2 + kick;
            self.wave[ch] = [next, prev];
            *o = 1.0 + next.max(-0.5);
        }
        (out[0], out[1])
    }

    /// Advances one step; returns `(sigma_xx, sigma_yy)` in Pa.
    /// The applied load starts from zero at step 1.
    pub fn step(&mut self) -> (f64, f64) {
        self.step += 1;
        let t = (self.step - 1) as f64;
        if self.failure_step.is_some() {
            for b in &mut self.failure_base {
                *b *= self.cfg.post_failure_decay;
            }
            return (self.failure_base[0], self.failure_base[1]);
        }
        self.load_factor += (1.0 - self.load_factor) * self.cfg.load_recovery;
        let applied = self.cfg.load_rate * t * self.load_factor;
        let pitch = self.cfg.pixel_m();
        for id in 0..self.cracks.len() {
            for which in 0..2 {
                if !self.cracks[id].tips[which].active {
                    continue;
                }
                let a = self.merged_length(id) / 2.0 * pitch;
                let cos = self.cracks[id].tips[which].angle.cos();
                let k = applied * (std::f64::consts::PI * a).sqrt() * cos * cos;
                let noisy = k * (1.0 + self.cfg.growth_noise * self.rng.uniform(-1.0, 1.0));
                if noisy > self.cfg.toughness {
                    self.grow_tip(id, which);
                }
            }
        }
        let a_max = (0..self.cracks.len())
            .map(|i| self.merged_length(i) / 2.0)
            .fold(0.0, f64::max);
        let concentration = 1.0 + 2.0 * (a_max / self.cfg.tip_radius_px).sqrt();
        let transverse = 1.0 + (a_max / self.cfg.tip_radius_px).sqrt();
        let base = [
            applied * self.cfg.transverse_ratio * transverse,
            applied * concentration,
        ];
        let (nx, ny) = self.fluctuation();
        let out = (base[0] * nx, base[1] * ny);
        if self.frame.spans_horizontally() {
            self.failure_step = Some(self.step);
            self.failure_base = [out.0, out.1];
            self.spall();
        }
        out
    }
}

/// Runs one full simulation.
pub fn simulate(cfg: &SimConfig, seed: u64) -> Result<SimulationRecord> {
    let mut state = SimState::seed_cracks(cfg, seed)?;
    let initial_frame = state.frame.clone();
    let initial_cracks = state.initial.clone();
    let mut frames = Vec::with_capacity(cfg.steps);
    let mut stress_xx = Vec::with_capacity(cfg.steps);
    let mut stress_yy = Vec::with_capacity(cfg.steps);
    for _ in 0..cfg.steps {
        let (sx, sy) = state.step();
        frames.push(state.frame.clone());
        stress_xx.push(sx);
        stress_yy.push(sy);
    }
    Ok(SimulationRecord {
        seed,
        initial_frame,
        initial_cracks,
        frames,
        stress_xx,
        stress_yy,
        failure_step: state.failure_step,
    })
}

/// `n_sims` records with seeds `base_seed + index`, generated in parallel.
pub fn generate_dataset(cfg: &SimConfig, n_sims: usize, base_seed: u64) -> Result<Vec<SimulationRecord>> {
    if n_sims == 0 {
        return Err(Error::InvalidArgument("n_sims must be at least 1".into()));
    }
    cfg.validate()?;
    (0..n_sims as u64)
        .into_par_iter()
        .map(|i| simulate(cfg, base_seed.wrapping_add(i)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn geometry_constants() {
        let c = SimConfig::default();
        c.validate().unwrap();
        assert_eq!(c.cell_grid(), (6, 4));
        assert_eq!(c.pixel_m(), 0.015625);
        assert_eq!(c.crack_length_px(), 13);
    }

    #[test]
    fn line_is_connected() {
        let l = line_pixels((0, 0), (3, -5));
        assert_eq!(*l.last().unwrap(), (3, -5));
        let mut prev = (0, 0);
        for p in l {
            assert!((p.0 - prev.0).abs() <= 1 && (p.1 - prev.1).abs() <= 1);
            prev = p;
        }
    }

    #[test]
    fn rotation_reaches_horizontal() {
        let mut a = 120f64.to_radians();
        for _ in 0..10 {
            a = rotate_toward_horizontal(a, 10f64.to_radians());
        }
        assert!((a - std::f64::consts::PI).abs() < 1e-12);
        let b = rotate_toward_horizontal(-0.05, 1.0);
        assert_eq!(b, 0.0);
    }

    #[test]
    fn frame_ops() {
        let mut f = DamageFrame::new(3, 70);
        f.set(2, 69);
        assert!(f.get(2, 69) && !f.get(0, 0));
        assert_eq!(f.count(), 1);
        let mut g = f.clone();
        g.set(0, 0);
        assert!(g.contains(&f) && !f.contains(&g));
        let back = DamageFrame::from_bools(3, 70, &g.to_bools()).unwrap();
        assert_eq!(back, g);
        let mut row = DamageFrame::new(3, 5);
        for c in 0..5 {
            row.set(if c % 2 == 0 { 0 } else { 1 }, c);
        }
        assert!(row.spans_horizontally());
        let mut gap = DamageFrame::new(3, 5);
        for c in [0, 1, 3, 4] {
            gap.set(1, c);
        }
        assert!(!gap.spans_horizontally());
    }

    #[test]
    fn seeding_is_deterministic() {
        let c = SimConfig::default();
        let a = SimState::seed_cracks(&c, 42).unwrap();
        let b = SimState::seed_cracks(&c, 42).unwrap();
        assert_eq!(a.frame(), b.frame());
        assert_eq!(a.initial.len(), 20);
    }

    #[test]
    fn zero_sims_rejected() {
        assert!(generate_dataset(&SimConfig::default(), 0, 1).is_err());
    }
}
