//! Collaborative SVRG case study: multinomial logistic regression where
//! the host runs the stochastic inner loop and the NDAs periodically
//! summarize the whole dataset into the variance-correction term.
//!
//! Three execution plans share one numerical recipe:
//! * host-only — the host also performs the summarization, charged reads
//!   of the full dataset plus compute cycles;
//! * serialized — NDAs summarize between epochs while the host waits;
//! * delayed — summarization overlaps the inner loop; the correction pair
//!   (s, g) consumed in epoch k was snapshotted at epoch k-1.
//!
//! The summarization itself is two GEMV macro passes (z = A·s per class,
//! then g = Aᵀ·r per class) with host reductions and rank-replication
//! writes between them. All summarization arithmetic follows the engine's
//! documented lane order, so every variant produces bit-identical
//! correction terms.

use crate::addressing::{Color, MappingConfig, PhysicalAddress, Region};
use crate::dram::Cycle;
use crate::nda::runtime::{
    rank_blocks_of_srow, split_gemv, GemvPartials, HMat, RVec,
};
use crate::nda::Opcode;
use crate::rng::CounterRng;
use crate::sim::{BulkTransfer, Core};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SvrgVariant {
    HostOnly,
    Serialized,
    Delayed,
}

impl SvrgVariant {
    pub fn as_str(self) -> &'static str {
        match self {
            SvrgVariant::HostOnly => "host_only",
            SvrgVariant::Serialized => "serialized",
            SvrgVariant::Delayed => "delayed",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SvrgConfig {
    pub n_samples: u64,
    pub n_features: u64,
    pub n_classes: u64,
    pub lambda: f64,
    pub momentum: f64,
    /// None: small grid search on the serialized recurrence picks it.
    pub lr: Option<f64>,
    /// Inner iterations per outer loop.
    pub epoch_len: u64,
    pub outer_iters: u64,
    pub variant: SvrgVariant,
    /// Loss blow-up bound relative to the initial loss.
    pub blowup: f64,
    /// Host compute throughput for the cost model (FLOPs per cycle).
    pub host_flops_per_cycle: f64,
}

impl Default for SvrgConfig {
    fn default() -> Self {
        SvrgConfig {
            n_samples: 512,
            n_features: 64,
            n_classes: 4,
            lambda: 1e-3,
            momentum: 0.9,
            lr: None,
            epoch_len: 512,
            outer_iters: 16,
            variant: SvrgVariant::Serialized,
            blowup: 1e4,
            host_flops_per_cycle: 8.0,
        }
    }
}

impl SvrgConfig {
    pub fn set_key(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "n" => self.n_samples = v.parse().map_err(|e| format!("{e}"))?,
            "d" => self.n_features = v.parse().map_err(|e| format!("{e}"))?,
            "classes" => self.n_classes = v.parse().map_err(|e| format!("{e}"))?,
            "lambda" => self.lambda = v.parse().map_err(|e| format!("{e}"))?,
            "momentum" => self.momentum = v.parse().map_err(|e| format!("{e}"))?,
            "lr" => {
                self.lr = if v == "auto" {
                    None
                } else {
                    Some(v.parse().map_err(|e| format!("{e}"))?)
                }
            }
            "epoch" => self.epoch_len = v.parse().map_err(|e| format!("{e}"))?,
            "outer" => self.outer_iters = v.parse().map_err(|e| format!("{e}"))?,
            "variant" => {
                self.variant = match v {
                    "host_only" | "host-only" => SvrgVariant::HostOnly,
                    "serialized" => SvrgVariant::Serialized,
                    "delayed" => SvrgVariant::Delayed,
                    other => return Err(format!("unknown variant {other}")),
                }
            }
            other => return Err(format!("unknown svrg key {other}")),
        }
        Ok(())
    }

    pub fn dpad(&self) -> u64 {
        self.n_features.div_ceil(16) * 16
    }

    pub fn npad(&self) -> u64 {
        self.n_samples.div_ceil(16) * 16
    }

    pub fn weights(&self) -> usize {
        (self.n_classes * self.dpad()) as usize
    }
}

/// Synthetic multinomial-logistic dataset, deterministic for a seed.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub n: usize,
    pub d: usize,
    pub dpad: usize,
    pub k: usize,
    /// Row-major n × dpad, zero-padded features.
    pub x: Vec<f32>,
    pub y: Vec<usize>,
}

pub fn generate_dataset(cfg: &SvrgConfig, seed: u64) -> Dataset {
    let (n, d, k) = (
        cfg.n_samples as usize,
        cfg.n_features as usize,
        cfg.n_classes as usize,
    );
    let dpad = cfg.dpad() as usize;
    let mut rng = CounterRng::new(CounterRng::derive(seed, 0xda7a));
    let scale = 1.0 / (d as f64).sqrt();
    let mut w_true = vec![0.0f64; k * d];
    for w in w_true.iter_mut() {
        *w = rng.normal();
    }
    let mut x = vec![0.0f32; n * dpad];
    let mut y = vec![0usize; n];
    for i in 0..n {
        for j in 0..d {
            x[i * dpad + j] = (rng.normal() * scale) as f32;
        }
        let mut logits = vec![0.0f64; k];
        for (c, l) in logits.iter_mut().enumerate() {
            for j in 0..d {
                *l += w_true[c * d + j] * x[i * dpad + j] as f64 * 3.0;
            }
        }
        let p = softmax(&logits);
        let u = rng.next_f64();
        let mut acc = 0.0;
        let mut label = k - 1;
        for (c, pc) in p.iter().enumerate() {
            acc += pc;
            if u < acc {
                label = c;
                break;
            }
        }
        y[i] = label;
    }
    Dataset {
        n,
        d,
        dpad,
        k,
        x,
        y,
    }
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Regularized mean cross-entropy in f64; `w` is k × dpad flattened.
pub fn loss(data: &Dataset, w: &[f64], lambda: f64) -> f64 {
    let mut total = 0.0;
    for i in 0..data.n {
        let logits = row_logits(data, w, i);
        let p = softmax(&logits);
        total += -(p[data.y[i]].max(1e-300)).ln();
    }
    let reg: f64 = w.iter().map(|v| v * v).sum::<f64>() * lambda / 2.0;
    total / data.n as f64 + reg
}

fn row_logits(data: &Dataset, w: &[f64], i: usize) -> Vec<f64> {
    let mut logits = vec![0.0f64; data.k];
    for (c, l) in logits.iter_mut().enumerate() {
        let wrow = &w[c * data.dpad..(c + 1) * data.dpad];
        let xrow = &data.x[i * data.dpad..(i + 1) * data.dpad];
        for j in 0..data.d {
            *l += wrow[j] * xrow[j] as f64;
        }
    }
    logits
}

/// Exact f64 full gradient (oracle-side helper and grid search).
pub fn full_gradient(data: &Dataset, w: &[f64], lambda: f64) -> Vec<f64> {
    let mut g = vec![0.0f64; w.len()];
    for i in 0..data.n {
        let p = softmax(&row_logits(data, w, i));
        for c in 0..data.k {
            let r = (p[c] - if data.y[i] == c { 1.0 } else { 0.0 }) / data.n as f64;
            for j in 0..data.d {
                g[c * data.dpad + j] += r * data.x[i * data.dpad + j] as f64;
            }
        }
    }
    for (gv, wv) in g.iter_mut().zip(w.iter()) {
        *gv += lambda * wv;
    }
    g
}

/// One stochastic inner update, shared by the simulated drivers and the
/// pure recurrence used for learning-rate selection.
#[allow(clippy::too_many_arguments)]
pub fn inner_update(
    data: &Dataset,
    w: &mut [f64],
    v: &mut [f64],
    s: &[f64],
    g: &[f64],
    i: usize,
    lr: f64,
    momentum: f64,
    lambda: f64,
) {
    let pw = softmax(&row_logits(data, w, i));
    let ps = softmax(&row_logits(data, s, i));
    let dpad = data.dpad;
    for c in 0..data.k {
        let yv = if data.y[i] == c { 1.0 } else { 0.0 };
        let rw = pw[c] - yv;
        let rs = ps[c] - yv;
        for j in 0..data.d {
            let a = data.x[i * dpad + j] as f64;
            let idx = c * dpad + j;
            let dir = rw * a + lambda * w[idx] - (rs * a + lambda * s[idx]) + g[idx];
            v[idx] = momentum * v[idx] - lr * dir;
        }
        // Padded columns only carry the correction-term drift, which is
        // zero there; skip them.
    }
    for idx in 0..w.len() {
        if idx % dpad < data.d {
            w[idx] += v[idx];
        }
    }
}

/// Summarization arithmetic exactly as the NDA pipeline computes it:
/// per-class GEMV lane partials in f32 over rank-local blocks in ascending
/// order, chip-major f64 reductions, residuals written back as f32, then
/// the transposed pass. Identical across execution plans by construction.
pub fn summarize_numeric(
    map: &MappingConfig,
    data: &Dataset,
    layout: &SvrgLayout,
    s: &[f64],
    lambda: f64,
) -> Vec<f64> {
    let k = data.k;
    let dpad = data.dpad;
    let npad = layout.npad;
    let s32: Vec<f32> = s.iter().map(|v| *v as f32).collect();
    // Pass 1: z[c][i] = sum_j A[i][j] * s32[c][j], engine lane order.
    let mut z = vec![0.0f64; k * data.n];
    for c in 0..k {
        for (t, tile) in layout.a_tiles.iter().enumerate() {
            let rows = tile.rows;
            for rank in &layout.ranks {
                let locals = &tile.local_blocks[rank];
                for r in 0..rows {
                    let mut lanes = [0.0f32; 16];
                    for b in &locals[r] {
                        // b = (row-relative element base, 16-slot run)
                        for slot in 0..16usize {
                            let j = b + slot;
                            let a = data.x[(t * layout.rows_per_tile + r) * dpad + j];
                            lanes[slot] = a.mul_add(s32[c * dpad + j], lanes[slot]);
                        }
                    }
                    let zi = t * layout.rows_per_tile + r;
                    for slot in lanes.iter() {
                        z[c * data.n + zi] += *slot as f64;
                    }
                }
            }
        }
    }
    // Host residuals, stored back as f32.
    let mut r32 = vec![0.0f32; k * npad];
    for i in 0..data.n {
        let logits: Vec<f64> = (0..k).map(|c| z[c * data.n + i]).collect();
        let p = softmax(&logits);
        for c in 0..k {
            let yv = if data.y[i] == c { 1.0 } else { 0.0 };
            r32[c * npad + i] = ((p[c] - yv) / data.n as f64) as f32;
        }
    }
    // Pass 2: G[c][j] = sum_i AT[j][i] * r32[c][i], same lane order over
    // the transposed layout.
    let mut gout = vec![0.0f64; k * dpad];
    for c in 0..k {
        for (t, tile) in layout.at_tiles.iter().enumerate() {
            let rows = tile.rows;
            for rank in &layout.ranks {
                let locals = &tile.local_blocks[rank];
                for r in 0..rows {
                    let mut lanes = [0.0f32; 16];
                    for b in &locals[r] {
                        for slot in 0..16usize {
                            let i = b + slot;
                            let j = t * layout.at_rows_per_tile + r;
                            let a = if i < data.n && j < data.d {
                                data.x[i * dpad + j]
                            } else {
                                0.0
                            };
                            lanes[slot] = a.mul_add(r32[c * npad + i], lanes[slot]);
                        }
                    }
                    let j = t * layout.at_rows_per_tile + r;
                    if j < dpad {
                        for slot in lanes.iter() {
                            gout[c * dpad + j] += *slot as f64;
                        }
                    }
                }
            }
        }
    }
    for idx in 0..gout.len() {
        if idx % dpad < data.d {
            gout[idx] += lambda * s[idx];
        }
    }
    gout
}

/// Block partition of the A and AT storage, precomputed so the numeric
/// mirror and reductions agree with the engine's walks.
pub struct SvrgLayout {
    pub ranks: Vec<(u8, u8)>,
    pub rows_per_tile: usize,
    pub at_rows_per_tile: usize,
    pub npad: usize,
    pub a_tiles: Vec<TileLayout>,
    pub at_tiles: Vec<TileLayout>,
}

/// For each rank: per tile-row list of row-relative element bases of its
/// local 16-element runs.
pub struct TileLayout {
    pub rows: usize,
    pub local_blocks: std::collections::HashMap<(u8, u8), Vec<Vec<usize>>>,
}

fn tile_layout(
    map: &MappingConfig,
    mat: &HMat,
    t: u64,
    ranks: &[(u8, u8)],
) -> TileLayout {
    let rows = mat.tile_rows(t) as usize;
    let cols = mat.cols as usize;
    let srow_base = mat.alloc.system_rows[t as usize];
    let per_rank = rank_blocks_of_srow(map, srow_base);
    let mut local_blocks = std::collections::HashMap::new();
    for rank in ranks {
        let mut rowsv: Vec<Vec<usize>> = vec![Vec::new(); rows];
        if let Some(blocks) = per_rank.get(rank) {
            for p in blocks {
                let elem = ((p - srow_base) / 4) as usize;
                let (r, j) = (elem / cols, elem % cols);
                if r < rows {
                    rowsv[r].push(j);
                }
            }
        }
        local_blocks.insert(*rank, rowsv);
    }
    TileLayout { rows, local_blocks }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub outer: u64,
    pub cycle: Cycle,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvrgOutcome {
    pub variant: String,
    pub lr: f64,
    pub curve: Vec<CurvePoint>,
    pub final_loss: f64,
    pub diverged: bool,
    pub staleness_ok: bool,
    pub done_cycle: Option<Cycle>,
}

/// Learning-rate grid search on the pure serialized recurrence (f64
/// correction terms). Returns (chosen lr, final loss).
pub fn grid_search_lr(cfg: &SvrgConfig, data: &Dataset) -> (f64, f64) {
    let grid = [0.5, 0.25, 0.1, 0.05, 0.025];
    let mut best = (grid[0], f64::INFINITY);
    for &lr in &grid {
        let l = math_final_loss(cfg, data, lr);
        if l.is_finite() && l < best.1 {
            best = (lr, l);
        }
    }
    best
}

fn math_final_loss(cfg: &SvrgConfig, data: &Dataset, lr: f64) -> f64 {
    let nw = cfg.weights();
    let mut w = vec![0.0f64; nw];
    let mut v = vec![0.0f64; nw];
    let mut rng = CounterRng::new(CounterRng::derive(1, 0x5a3b));
    for _ in 0..cfg.outer_iters {
        let s = w.clone();
        let g = full_gradient(data, &s, cfg.lambda);
        for _ in 0..cfg.epoch_len {
            let i = rng.gen_range(data.n as u64) as usize;
            inner_update(data, &mut w, &mut v, &s, &g, i, lr, cfg.momentum, cfg.lambda);
        }
        let l = loss(data, &w, cfg.lambda);
        if !l.is_finite() || l > cfg.blowup {
            return f64::INFINITY;
        }
    }
    loss(data, &w, cfg.lambda)
}

// --- Simulated driver ---------------------------------------------------

struct Mats {
    a: HMat,
    at: HMat,
    s_rep: Vec<RVec>,
    r_rep: Vec<RVec>,
    zpart: Vec<GemvPartials>,
    gpart: Vec<GemvPartials>,
    layout: SvrgLayout,
}

enum SumStage {
    WriteSnapshot(BulkTransfer),
    Pass1(u64),
    ReadZ(BulkTransfer),
    WriteR(BulkTransfer),
    Pass2(u64),
    ReadG(BulkTransfer),
    HostRead {
        bulk: BulkTransfer,
        compute_done: Cycle,
    },
}

struct SumWork {
    stage: SumStage,
    snapshot: Vec<f64>,
    version: u64,
    result: Option<Vec<f64>>,
}

enum InnerPhase {
    Idle,
    Reads(BulkTransfer),
    Compute { until: Cycle },
}

enum TopState {
    Boot,
    Running,
    Finished,
}

pub struct SvrgDriver {
    cfg: SvrgConfig,
    pub data: Dataset,
    map: Arc<MappingConfig>,
    mats: Mats,
    lr: f64,
    w: Vec<f64>,
    v: Vec<f64>,
    s: Vec<f64>,
    g: Vec<f64>,
    g_version: u64,
    outer: u64,
    inner_iter: u64,
    inner_phase: InnerPhase,
    inner_active: bool,
    sum: Option<SumWork>,
    pending: Option<(Vec<f64>, Vec<f64>, u64)>,
    sample_rng: CounterRng,
    state: TopState,
    staleness_ok: bool,
    diverged: bool,
    initial_loss: f64,
    curve: Vec<CurvePoint>,
    done_cycle: Option<Cycle>,
    outcome: Option<SvrgOutcome>,
}

impl SvrgDriver {
    pub fn new(cfg: SvrgConfig, core: &mut Core) -> SvrgDriver {
        let map = core.map.clone();
        let data = generate_dataset(&cfg, core.cfg.seed);
        let lr = cfg
            .lr
            .unwrap_or_else(|| grid_search_lr(&cfg, &data).0);
        let mats = Self::allocate(&cfg, &data, &map, core);
        let nw = cfg.weights();
        let w = vec![0.0f64; nw];
        let initial_loss = loss(&data, &w, cfg.lambda);
        let mut d = SvrgDriver {
            sample_rng: CounterRng::new(CounterRng::derive(1, 0x5a3b)),
            v: vec![0.0; nw],
            s: vec![0.0; nw],
            g: vec![0.0; nw],
            g_version: 0,
            outer: 0,
            inner_iter: 0,
            inner_phase: InnerPhase::Idle,
            inner_active: false,
            sum: None,
            pending: None,
            state: TopState::Boot,
            staleness_ok: true,
            diverged: false,
            curve: Vec::new(),
            done_cycle: None,
            outcome: None,
            initial_loss,
            cfg,
            data,
            map,
            mats,
            lr,
            w,
        };
        d.curve.push(CurvePoint {
            outer: 0,
            cycle: 0,
            loss: initial_loss,
        });
        d
    }

    fn allocate(cfg: &SvrgConfig, data: &Dataset, map: &MappingConfig, core: &mut Core) -> Mats {
        let color = map.color_of(PhysicalAddress(0)).expect("color 0");
        let mut region = Region::for_color(map, Color(color.0));
        let srow = map.system_row_bytes();
        let dpad = cfg.dpad();
        let npad = cfg.npad();
        let srow_elems = srow / 4;
        let rows_per_tile = (srow_elems / dpad).min(2048);
        let a_tiles_n = cfg.n_samples.div_ceil(rows_per_tile);
        let at_rows_per_tile = (srow_elems / npad).min(2048);
        let at_tiles_n = cfg.n_features.div_ceil(at_rows_per_tile);
        let a = HMat {
            alloc: region.allocate(a_tiles_n * srow).expect("A fits"),
            rows: cfg.n_samples,
            cols: dpad,
            rows_per_tile,
        };
        let at = HMat {
            alloc: region.allocate(at_tiles_n * srow).expect("AT fits"),
            rows: cfg.n_features,
            cols: npad,
            rows_per_tile: at_rows_per_tile,
        };
        let k = cfg.n_classes as usize;
        let mut s_rep = Vec::new();
        let mut r_rep = Vec::new();
        let mut zpart = Vec::new();
        let mut gpart = Vec::new();
        for _ in 0..k {
            s_rep.push(RVec {
                alloc: region.allocate(srow).expect("s fits"),
                len: dpad,
            });
            r_rep.push(RVec {
                alloc: region.allocate(srow).expect("r fits"),
                len: npad,
            });
            zpart.push(GemvPartials {
                tiles: (0..a_tiles_n)
                    .map(|t| RVec {
                        alloc: region.allocate(srow).expect("zpart fits"),
                        len: a.tile_rows(t) * 16,
                    })
                    .collect(),
            });
            gpart.push(GemvPartials {
                tiles: (0..at_tiles_n)
                    .map(|t| RVec {
                        alloc: region.allocate(srow).expect("gpart fits"),
                        len: at.tile_rows(t) * 16,
                    })
                    .collect(),
            });
        }
        // Initial data placement (outside the measured run).
        let rows: Vec<Vec<f32>> = (0..data.n)
            .map(|i| data.x[i * data.dpad..(i + 1) * data.dpad].to_vec())
            .collect();
        a.store(&mut core.mem, &rows);
        let trows: Vec<Vec<f32>> = (0..data.d)
            .map(|j| {
                (0..npad as usize)
                    .map(|i| {
                        if i < data.n {
                            data.x[i * data.dpad + j]
                        } else {
                            0.0
                        }
                    })
                    .collect()
            })
            .collect();
        at.store(&mut core.mem, &trows);

        let ranks = crate::nda::runtime::all_ranks(map);
        let layout = SvrgLayout {
            rows_per_tile: rows_per_tile as usize,
            at_rows_per_tile: at_rows_per_tile as usize,
            npad: npad as usize,
            a_tiles: (0..a_tiles_n).map(|t| tile_layout(map, &a, t, &ranks)).collect(),
            at_tiles: (0..at_tiles_n)
                .map(|t| tile_layout(map, &at, t, &ranks))
                .collect(),
            ranks,
        };
        Mats {
            a,
            at,
            s_rep,
            r_rep,
            zpart,
            gpart,
            layout,
        }
    }

    pub fn outcome(&self) -> Option<&SvrgOutcome> {
        self.outcome.as_ref()
    }

    pub fn finished(&self) -> bool {
        matches!(self.state, TopState::Finished)
    }

    fn start_summarize(&mut self, now: Cycle) {
        let snapshot = self.w.clone();
        let version = self.outer;
        let stage = if self.cfg.variant == SvrgVariant::HostOnly {
            // Host summarization: stream the dataset, then compute.
            let mut reads = Vec::new();
            for t in 0..self.mats.a.tiles() {
                let srow_base = self.mats.a.alloc.system_rows[t as usize];
                let blocks =
                    (self.mats.a.tile_rows(t) * self.mats.a.cols * 4).div_ceil(64);
                for b in 0..blocks {
                    reads.push(srow_base + b * 64);
                }
            }
            let flops = 4.0 * self.data.n as f64 * self.data.d as f64 * self.data.k as f64;
            let compute = (flops / self.cfg.host_flops_per_cycle) as u64;
            SumStage::HostRead {
                bulk: BulkTransfer::reads(reads),
                compute_done: now + compute,
            }
        } else {
            let s32: Vec<f32> = snapshot.iter().map(|v| *v as f32).collect();
            let dpad = self.cfg.dpad() as usize;
            let mut writes = Vec::new();
            for (c, rv) in self.mats.s_rep.iter().enumerate() {
                let vals = &s32[c * dpad..(c + 1) * dpad];
                for rank in &self.mats.layout.ranks {
                    let paddrs = rv.rank_paddrs(&self.map, *rank);
                    for (b, chunk) in vals.chunks(16).enumerate() {
                        let mut blk = [0.0f32; 16];
                        blk[..chunk.len()].copy_from_slice(chunk);
                        writes.push((paddrs[b], blk));
                    }
                }
            }
            SumStage::WriteSnapshot(BulkTransfer::writes(writes))
        };
        self.sum = Some(SumWork {
            stage,
            snapshot,
            version,
            result: None,
        });
    }

    fn advance_summarize(&mut self, core: &mut Core, now: Cycle) {
        let mut work = match self.sum.take() {
            Some(w) => w,
            None => return,
        };
        let mut again = true;
        while again {
            again = false;
            match &mut work.stage {
                SumStage::WriteSnapshot(bulk) => {
                    if bulk.step(core, now) {
                        // Pass 1: z partials per class.
                        let mut instrs = Vec::new();
                        for c in 0..self.data.k {
                            instrs.extend(
                                split_gemv(
                                    &self.map,
                                    &self.mats.a,
                                    &self.mats.s_rep[c],
                                    &self.mats.zpart[c],
                                )
                                .expect("gemv splits"),
                            );
                        }
                        let t = core.launch_macro(instrs, now).expect("launch pass 1");
                        work.stage = SumStage::Pass1(t);
                    }
                }
                SumStage::Pass1(t) => {
                    if core.ticket_done(*t) {
                        let mut reads = Vec::new();
                        for c in 0..self.data.k {
                            for (ti, tile) in self.mats.zpart[c].tiles.iter().enumerate() {
                                let m = self.mats.a.tile_rows(ti as u64) as usize;
                                for rank in &self.mats.layout.ranks {
                                    let paddrs = tile.rank_paddrs(&self.map, *rank);
                                    reads.extend_from_slice(&paddrs[..m]);
                                }
                            }
                        }
                        work.stage = SumStage::ReadZ(BulkTransfer::reads(reads));
                        again = true;
                    }
                }
                SumStage::ReadZ(bulk) => {
                    if bulk.step(core, now) {
                        // Reduce z, compute residuals, replicate them.
                        let r32 = self.reduce_z_to_residuals(core);
                        let npad = self.cfg.npad() as usize;
                        let mut writes = Vec::new();
                        for (c, rv) in self.mats.r_rep.iter().enumerate() {
                            let vals = &r32[c * npad..(c + 1) * npad];
                            for rank in &self.mats.layout.ranks {
                                let paddrs = rv.rank_paddrs(&self.map, *rank);
                                for (b, chunk) in vals.chunks(16).enumerate() {
                                    let mut blk = [0.0f32; 16];
                                    blk[..chunk.len()].copy_from_slice(chunk);
                                    writes.push((paddrs[b], blk));
                                }
                            }
                        }
                        work.stage = SumStage::WriteR(BulkTransfer::writes(writes));
                        again = true;
                    }
                }
                SumStage::WriteR(bulk) => {
                    if bulk.step(core, now) {
                        let mut instrs = Vec::new();
                        for c in 0..self.data.k {
                            instrs.extend(
                                split_gemv(
                                    &self.map,
                                    &self.mats.at,
                                    &self.mats.r_rep[c],
                                    &self.mats.gpart[c],
                                )
                                .expect("gemv splits"),
                            );
                        }
                        let t = core.launch_macro(instrs, now).expect("launch pass 2");
                        work.stage = SumStage::Pass2(t);
                    }
                }
                SumStage::Pass2(t) => {
                    if core.ticket_done(*t) {
                        let mut reads = Vec::new();
                        for c in 0..self.data.k {
                            for (ti, tile) in self.mats.gpart[c].tiles.iter().enumerate() {
                                let m = self.mats.at.tile_rows(ti as u64) as usize;
                                for rank in &self.mats.layout.ranks {
                                    let paddrs = tile.rank_paddrs(&self.map, *rank);
                                    reads.extend_from_slice(&paddrs[..m]);
                                }
                            }
                        }
                        work.stage = SumStage::ReadG(BulkTransfer::reads(reads));
                        again = true;
                    }
                }
                SumStage::ReadG(bulk) => {
                    if bulk.step(core, now) {
                        work.result = Some(self.reduce_g(core, &work.snapshot));
                    }
                }
                SumStage::HostRead { bulk, compute_done } => {
                    let reads_done = bulk.step(core, now);
                    if reads_done && now >= *compute_done {
                        // Same lane arithmetic as the NDA path, executed by
                        // the host.
                        work.result = Some(summarize_numeric(
                            &self.map,
                            &self.data,
                            &self.mats.layout,
                            &work.snapshot,
                            self.cfg.lambda,
                        ));
                    }
                }
            }
        }
        self.sum = Some(work);
    }

    /// f64 reduction of pass-1 partials straight from memory, then
    /// residual computation (p - y)/n as f32.
    fn reduce_z_to_residuals(&self, core: &Core) -> Vec<f32> {
        let npad = self.cfg.npad() as usize;
        let k = self.data.k;
        let mut z = vec![0.0f64; k * self.data.n];
        for c in 0..k {
            let mut row0 = 0usize;
            for (ti, tile) in self.mats.zpart[c].tiles.iter().enumerate() {
                let m = self.mats.a.tile_rows(ti as u64) as usize;
                let y = crate::nda::runtime::reduce_gemv_tile(&self.map, &core.mem, tile, m);
                for (r, v) in y.iter().enumerate() {
                    z[c * self.data.n + row0 + r] = *v;
                }
                row0 += m;
            }
        }
        let mut r32 = vec![0.0f32; k * npad];
        for i in 0..self.data.n {
            let logits: Vec<f64> = (0..k).map(|c| z[c * self.data.n + i]).collect();
            let p = softmax(&logits);
            for c in 0..k {
                let yv = if self.data.y[i] == c { 1.0 } else { 0.0 };
                r32[c * npad + i] = ((p[c] - yv) / self.data.n as f64) as f32;
            }
        }
        r32
    }

    fn reduce_g(&self, core: &Core, snapshot: &[f64]) -> Vec<f64> {
        let dpad = self.cfg.dpad() as usize;
        let k = self.data.k;
        let mut g = vec![0.0f64; k * dpad];
        for c in 0..k {
            let mut row0 = 0usize;
            for (ti, tile) in self.mats.gpart[c].tiles.iter().enumerate() {
                let m = self.mats.at.tile_rows(ti as u64) as usize;
                let y = crate::nda::runtime::reduce_gemv_tile(&self.map, &core.mem, tile, m);
                for (r, v) in y.iter().enumerate() {
                    g[c * dpad + row0 + r] = *v;
                }
                row0 += m;
            }
        }
        for idx in 0..g.len() {
            if idx % dpad < self.data.d {
                g[idx] += self.cfg.lambda * snapshot[idx];
            }
        }
        g
    }

    fn advance_inner(&mut self, core: &mut Core, now: Cycle) {
        if !self.inner_active {
            return;
        }
        loop {
            match &mut self.inner_phase {
                InnerPhase::Idle => {
                    if self.inner_iter >= self.cfg.epoch_len {
                        return;
                    }
                    let i = self.sample_rng.gen_range(self.data.n as u64) as usize;
                    let blocks = (self.cfg.dpad() / 16) as usize;
                    let mut reads = Vec::with_capacity(blocks);
                    for b in 0..blocks {
                        reads.push(self.mats.a.paddr_of(i as u64, b as u64 * 16).0);
                    }
                    // The update itself is computed now (values are fixed);
                    // timing charges the reads plus fixed compute.
                    inner_update(
                        &self.data,
                        &mut self.w,
                        &mut self.v,
                        &self.s,
                        &self.g,
                        i,
                        self.lr,
                        self.cfg.momentum,
                        self.cfg.lambda,
                    );
                    self.inner_phase = InnerPhase::Reads(BulkTransfer::reads(reads));
                }
                InnerPhase::Reads(bulk) => {
                    if !bulk.step(core, now) {
                        return;
                    }
                    let flops = 4.0 * self.data.d as f64 * self.data.k as f64;
                    let compute = (flops / self.cfg.host_flops_per_cycle).ceil() as u64;
                    self.inner_phase = InnerPhase::Compute {
                        until: now + compute,
                    };
                }
                InnerPhase::Compute { until } => {
                    if now < *until {
                        return;
                    }
                    self.inner_iter += 1;
                    self.inner_phase = InnerPhase::Idle;
                    if self.inner_iter >= self.cfg.epoch_len {
                        return;
                    }
                }
            }
        }
    }

    fn epoch_done(&self) -> bool {
        self.inner_iter >= self.cfg.epoch_len && matches!(self.inner_phase, InnerPhase::Idle)
    }

    fn record_boundary(&mut self, now: Cycle) {
        let l = loss(&self.data, &self.w, self.cfg.lambda);
        self.curve.push(CurvePoint {
            outer: self.outer,
            cycle: now,
            loss: l,
        });
        if !l.is_finite() || l > self.cfg.blowup * self.initial_loss.max(1.0) {
            self.diverged = true;
        }
    }

    fn finish(&mut self, now: Cycle) {
        self.state = TopState::Finished;
        self.done_cycle = Some(now);
        self.outcome = Some(SvrgOutcome {
            variant: self.cfg.variant.as_str().to_string(),
            lr: self.lr,
            curve: self.curve.clone(),
            final_loss: loss(&self.data, &self.w, self.cfg.lambda),
            diverged: self.diverged,
            staleness_ok: self.staleness_ok,
            done_cycle: self.done_cycle,
        });
    }

    pub fn step(&mut self, core: &mut Core, now: Cycle) {
        match self.state {
            TopState::Finished => {}
            TopState::Boot => {
                if self.sum.is_none() {
                    self.start_summarize(now);
                }
                self.advance_summarize(core, now);
                let done = self.sum.as_ref().is_some_and(|s| s.result.is_some());
                if done {
                    let work = self.sum.take().unwrap();
                    self.s = work.snapshot;
                    self.g = work.result.unwrap();
                    self.g_version = work.version;
                    self.outer = 1;
                    self.inner_iter = 0;
                    self.inner_active = true;
                    self.state = TopState::Running;
                    if self.cfg.variant == SvrgVariant::Delayed {
                        // Next epoch's correction term computes in parallel.
                        self.start_summarize(now);
                    }
                }
            }
            TopState::Running => {
                self.advance_summarize(core, now);
                self.advance_inner(core, now);
                if !self.epoch_done() {
                    return;
                }
                match self.cfg.variant {
                    SvrgVariant::Serialized | SvrgVariant::HostOnly => {
                        if self.sum.is_none() {
                            // Epoch ended: record and either stop or
                            // summarize the fresh snapshot.
                            self.record_boundary(now);
                            if self.outer >= self.cfg.outer_iters || self.diverged {
                                self.finish(now);
                                return;
                            }
                            self.start_summarize(now);
                        } else if self.sum.as_ref().is_some_and(|s| s.result.is_some()) {
                            let work = self.sum.take().unwrap();
                            debug_assert_eq!(work.version, self.outer);
                            self.s = work.snapshot;
                            self.g = work.result.unwrap();
                            self.g_version = work.version;
                            self.outer += 1;
                            self.inner_iter = 0;
                        }
                    }
                    SvrgVariant::Delayed => {
                        let sum_done = self.sum.as_ref().is_some_and(|s| s.result.is_some());
                        if !sum_done {
                            return; // host waits at the boundary
                        }
                        self.record_boundary(now);
                        if self.outer >= self.cfg.outer_iters || self.diverged {
                            self.finish(now);
                            return;
                        }
                        let work = self.sum.take().unwrap();
                        // Exchange: epoch k+1 consumes the pair snapshotted
                        // at the start of epoch k.
                        self.staleness_ok &= work.version == self.outer;
                        self.s = work.snapshot;
                        self.g = work.result.unwrap();
                        self.g_version = work.version;
                        self.outer += 1;
                        self.inner_iter = 0;
                        self.start_summarize(now);
                    }
                }
            }
        }
    }
}
