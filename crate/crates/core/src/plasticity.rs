//! Hybrid learning on the feedforward tables:
//!
//! ```text
//! Δw_ij = η1·STDP(Δt_ij) + η2·e_ij − η2·λ·w_ij,   then clipped to [w_min, w_max]
//! ```
//!
//! `e_ij` is the supervised error pushed through the surrogate
//! `1 / (1 + β·|v − V_th|)`. Lateral weights are never touched.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lif::{LifParams, SpikeRecord, SynapseTable};
use crate::network::{infer, infer_for_learning, DecisionTrace, InferMode, LearningTrace, NetworkTopology};
use crate::raster::{CoherenceRaster, PhaseRaster, WrapCountRaster};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StdpParams {
    pub a_plus: f64,
    pub a_minus: f64,
    /// Seconds.
    pub tau_plus: f64,
    /// Seconds.
    pub tau_minus: f64,
    /// Pairing window in steps.
    pub window: u32,
}

impl Default for StdpParams {
    fn default() -> Self {
        StdpParams { a_plus: 0.01, a_minus: 0.012, tau_plus: 20e-3, tau_minus: 20e-3, window: 60 }
    }
}

impl StdpParams {
    pub fn validate(&self, dt: f64) -> Result<()> {
        let all = [self.a_plus, self.a_minus, self.tau_plus, self.tau_minus];
        if all.iter().any(|v| !(v.is_finite() && *v > 0.0)) || self.window == 0 {
            return Err(Error::params("STDP amplitudes, time constants and window must be positive"));
        }
        if (self.window as f64) * dt < 3.0 * self.tau_plus.max(self.tau_minus) {
            return Err(Error::params(format!(
                "STDP window of {} steps is shorter than three time constants",
                self.window
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearnParams {
    pub eta1: f64,
    pub eta2: f64,
    pub beta: f64,
    pub lambda: f64,
    /// Total epochs; training resumes from the topology's epoch counter.
    pub epochs: u32,
    /// Scenes per update.
    pub batch: usize,
    /// `[w_min, w_max]`.
    pub weight_clip: [f64; 2],
    pub rng_seed: u64,
    pub stdp: StdpParams,
}

impl Default for LearnParams {
    fn default() -> Self {
        LearnParams {
            eta1: 1e-3,
            eta2: 1e-2,
            beta: 1.0,
            lambda: 1e-4,
            epochs: 50,
            batch: 4,
            weight_clip: [-1.0, 1.0],
            rng_seed: 0,
            stdp: StdpParams::default(),
        }
    }
}

impl LearnParams {
    pub fn validate(&self, dt: f64) -> Result<()> {
        if !(self.eta1 >= 0.0 && self.eta2 >= 0.0 && self.lambda >= 0.0) {
            return Err(Error::params("eta1, eta2 and lambda must be non-negative"));
        }
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(Error::params("beta must be positive"));
        }
        if !(self.weight_clip[0] < self.weight_clip[1]) {
            return Err(Error::params("weight_clip needs w_min < w_max"));
        }
        if self.batch == 0 {
            return Err(Error::params("batch must be at least 1"));
        }
        self.stdp.validate(dt)
    }
}

/// STDP kernel for `delta_t = t_post − t_pre` steps. Zero at 0 and outside the window.
pub fn stdp_kernel(delta_t: i64, p: &StdpParams, dt: f64) -> f64 {
    if delta_t == 0 || delta_t.unsigned_abs() > p.window as u64 {
        0.0
    } else if delta_t > 0 {
        p.a_plus * (-(delta_t as f64) * dt / p.tau_plus).exp()
    } else {
        -p.a_minus * ((delta_t as f64) * dt / p.tau_minus).exp()
    }
}

/// `1 / (1 + β·|v − V_th|)`.
#[inline]
pub fn surrogate(v: f64, v_threshold: f64, beta: f64) -> f64 {
    1.0 / (1.0 + beta * (v - v_threshold).abs())
}

pub fn surrogate_factor(v: f64, p: &LearnParams, lif: &LifParams) -> f64 {
    surrogate(v, lif.v_threshold, p.beta)
}

/// `ĝ` for one synapse from a post-neuron membrane history (`membrane[t]` is
/// the pre-reset value at step `t`) and the pre-neuron spike times. Sums up to
/// and including the post neuron's first spike.
pub fn surrogate_gradient(membrane: &[f64], pre_spikes: &[u32], first_spike: Option<u32>, v_threshold: f64, beta: f64) -> f64 {
    let end = first_spike.map_or(membrane.len(), |f| (f as usize + 1).min(membrane.len()));
    pre_spikes
        .iter()
        .map(|&t| t as usize + 1)
        .filter(|&t| t < end)
        .map(|t| surrogate(membrane[t], v_threshold, beta))
        .sum()
}

/// Per processing→decision synapse error term.
///
/// For each wrong pixel the target-`k` neuron's synapses get `+|Δk|·ĝ` and
/// the wrongly winning neuron's synapses get `−|Δk|·ĝ`. Undecided pixels have
/// no winner and only push the target. Targets outside `k_values` push nothing.
pub fn supervised_error(
    k_target: &WrapCountRaster,
    trace: &DecisionTrace,
    learning: Option<&LearningTrace>,
    topology: &NetworkTopology,
) -> Result<Vec<f64>> {
    let learning = learning.ok_or(Error::TraceIncomplete("decision membrane history"))?;
    let table = &topology.proc_dec;
    if learning.eligibility.len() != table.len() {
        return Err(Error::TraceIncomplete("eligibility for every processing→decision synapse"));
    }
    if k_target.dims() != topology.dims || trace.pixels.len() != topology.dims.len() {
        return Err(Error::raster("supervised_error: dimension mismatch"));
    }
    let dp = &topology.params.decision;
    let kk = dp.k();
    let mut e = vec![0.0; table.len()];
    for (px, (d, &target)) in trace.pixels.iter().zip(k_target.values()).enumerate() {
        let delta = (target - d.k).unsigned_abs() as f64;
        if delta == 0.0 {
            continue;
        }
        let mut push = |choice: usize, sign: f64| {
            for &s in table.fan_in(px * kk + choice) {
                e[s as usize] += sign * delta * learning.eligibility[s as usize];
            }
        };
        if let Some(c) = dp.index_of(target) {
            push(c, 1.0);
        }
        if d.decided {
            if let Some(c) = dp.index_of(d.k) {
                push(c, -1.0);
            }
        }
    }
    Ok(e)
}

/// Nearest-neighbour STDP sum per synapse: every post spike pairs with the
/// closest pre spike (the earlier one on ties) inside the window.
///
/// Timing is taken at the synapse, so `Δt = t_post − (t_pre + 1)`: a pre
/// spike whose one-step-delayed arrival coincides with the post spike
/// pairs at `Δt = 0`.
pub fn stdp_deltas(
    table: &SynapseTable,
    pre_times: &[Vec<u32>],
    post_times: &[Vec<u32>],
    p: &StdpParams,
    dt: f64,
) -> Vec<f64> {
    let mut out = vec![0.0; table.len()];
    for (post, posts) in post_times.iter().enumerate() {
        if posts.is_empty() {
            continue;
        }
        for &s in table.fan_in(post) {
            let pres = &pre_times[table.pre(s as usize)];
            if pres.is_empty() {
                continue;
            }
            let mut acc = 0.0;
            for &tp in posts {
                let i = pres.partition_point(|&t| t < tp);
                let before = i.checked_sub(1).map(|j| tp - 1 - pres[j]);
                let after = pres.get(i).map(|&t| t + 1 - tp);
                let dt_pair = match (before, after) {
                    (Some(b), Some(a)) if a < b => -(a as i64),
                    (Some(b), _) => b as i64,
                    (None, Some(a)) => -(a as i64),
                    (None, None) => continue,
                };
                acc += stdp_kernel(dt_pair, p, dt);
            }
            out[s as usize] = acc;
        }
    }
    out
}

/// STDP sums for both feedforward tables.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct WeightDeltas {
    pub enc_proc: Vec<f64>,
    pub proc_dec: Vec<f64>,
}

impl WeightDeltas {
    pub fn zeros(t: &NetworkTopology) -> Self {
        WeightDeltas { enc_proc: vec![0.0; t.enc_proc.len()], proc_dec: vec![0.0; t.proc_dec.len()] }
    }

    fn add(&mut self, other: &WeightDeltas) {
        add_into(&mut self.enc_proc, &other.enc_proc);
        add_into(&mut self.proc_dec, &other.proc_dec);
    }

    fn scale(&mut self, f: f64) {
        self.enc_proc.iter_mut().chain(self.proc_dec.iter_mut()).for_each(|x| *x *= f);
    }
}

fn add_into(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

/// Spike times per neuron for the three layers of a network record.
fn layer_times(record: &SpikeRecord, t: &NetworkTopology) -> [Vec<Vec<u32>>; 3] {
    let [ne, np, nd] = t.layer_sizes();
    let mut out = [vec![Vec::new(); ne], vec![Vec::new(); np], vec![Vec::new(); nd]];
    for ev in &record.events {
        let id = ev.neuron as usize;
        let (layer, i) = if id < ne {
            (0, id)
        } else if id < ne + np {
            (1, id - ne)
        } else {
            (2, id - ne - np)
        };
        out[layer][i].push(ev.t);
    }
    out
}

/// STDP sums of one network run.
pub fn run_stdp(record: &SpikeRecord, topology: &NetworkTopology, p: &StdpParams) -> WeightDeltas {
    let [enc, proc, dec] = layer_times(record, topology);
    let dt = topology.params.encoding.rate.dt;
    WeightDeltas {
        enc_proc: stdp_deltas(&topology.enc_proc, &enc, &proc, p, dt),
        proc_dec: stdp_deltas(&topology.proc_dec, &proc, &dec, p, dt),
    }
}

/// Applies one update to the feedforward tables. `e` is indexed like `proc_dec`.
pub fn apply_update(topology: &mut NetworkTopology, stdp: &WeightDeltas, e: &[f64], p: &LearnParams) -> Result<()> {
    if stdp.enc_proc.len() != topology.enc_proc.len()
        || stdp.proc_dec.len() != topology.proc_dec.len()
        || e.len() != topology.proc_dec.len()
    {
        return Err(Error::params("apply_update: delta vectors do not match the feedforward tables"));
    }
    let [lo, hi] = p.weight_clip;
    let update = |w: &mut f64, s: f64, e: f64| {
        let dw = p.eta1 * s + p.eta2 * e - p.eta2 * p.lambda * *w;
        *w = (*w + dw).clamp(lo, hi);
    };
    for (w, &s) in topology.enc_proc.weights_mut().iter_mut().zip(&stdp.enc_proc) {
        update(w, s, 0.0);
    }
    for ((w, &s), &e) in topology.proc_dec.weights_mut().iter_mut().zip(&stdp.proc_dec).zip(e) {
        update(w, s, e);
    }
    Ok(())
}

/// One supervised example.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingScene {
    pub wrapped: PhaseRaster,
    pub coherence: CoherenceRaster,
    pub truth: WrapCountRaster,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: u32,
    /// `Σ (k − k_true)² + λ·½‖w‖²` over the dataset with the end-of-epoch weights.
    pub energy: f64,
    pub accuracy: f64,
    pub total_spikes: u64,
    pub weight_norm: f64,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub epochs: Vec<EpochRecord>,
}

impl TrainingTrace {
    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "epoch,energy,accuracy,total_spikes,weight_norm")?;
        for r in &self.epochs {
            writeln!(out, "{},{},{},{},{}", r.epoch, r.energy, r.accuracy, r.total_spikes, r.weight_norm)?;
        }
        Ok(())
    }

    pub fn energies(&self) -> Vec<f64> {
        self.epochs.iter().map(|r| r.energy).collect()
    }
}

struct SceneResult {
    deltas: WeightDeltas,
    error: Vec<f64>,
}

fn process_scene(scene: &TrainingScene, top: &NetworkTopology, p: &LearnParams) -> Result<SceneResult> {
    let inf = infer_for_learning(&scene.wrapped, &scene.coherence, top, p.beta)?;
    let error = supervised_error(&scene.truth, &inf.trace, inf.learning.as_ref(), top)?;
    let deltas = if p.eta1 > 0.0 { run_stdp(&inf.record, top, &p.stdp) } else { WeightDeltas::zeros(top) };
    Ok(SceneResult { deltas, error })
}

/// Squared k error, correct pixels and spikes of the whole dataset.
fn evaluate(dataset: &[TrainingScene], top: &NetworkTopology) -> Result<(u64, usize, u64)> {
    let per_scene: Vec<Result<(u64, usize, u64)>> = dataset
        .par_iter()
        .map(|scene| {
            let inf = infer(&scene.wrapped, &scene.coherence, top, InferMode::OneShot)?;
            let (sq, correct) = score(&inf.k, &scene.truth);
            Ok((sq, correct, inf.record.total_spikes()))
        })
        .collect();
    per_scene.into_iter().try_fold((0, 0, 0), |(a, b, c), r| {
        let (x, y, z) = r?;
        Ok((a + x, b + y, c + z))
    })
}

fn score(k: &WrapCountRaster, truth: &WrapCountRaster) -> (u64, usize) {
    let (mut sq, mut correct) = (0u64, 0usize);
    for (&a, &b) in k.values().iter().zip(truth.values()) {
        let d = (a - b) as i64;
        sq += (d * d) as u64;
        correct += (d == 0) as usize;
    }
    (sq, correct)
}

fn validate_dataset(dataset: &[TrainingScene], top: &NetworkTopology) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::InvalidDataset("dataset is empty".into()));
    }
    for (i, s) in dataset.iter().enumerate() {
        if s.wrapped.dims() != top.dims || s.coherence.dims() != top.dims || s.truth.dims() != top.dims {
            return Err(Error::InvalidDataset(format!(
                "scene {i} is {}x{} but the network is {}x{}",
                s.wrapped.width(),
                s.wrapped.height(),
                top.dims.width,
                top.dims.height
            )));
        }
    }
    Ok(())
}

/// Scene order of an epoch; depends only on the seed and the epoch number.
pub fn epoch_order(len: usize, seed: u64, epoch: u32) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch as u64);
    let mut order: Vec<usize> = (0..len).collect();
    order.shuffle(&mut rng);
    order
}

pub fn train(
    dataset: &[TrainingScene],
    topology: &NetworkTopology,
    p: &LearnParams,
) -> Result<(NetworkTopology, TrainingTrace)> {
    train_with(dataset, topology, p, |_, _| Ok(()))
}

/// [`train`] with a callback after every epoch, e.g. for checkpoints.
/// Continues from `topology.trained_epochs` up to `p.epochs`.
pub fn train_with(
    dataset: &[TrainingScene],
    topology: &NetworkTopology,
    p: &LearnParams,
    mut on_epoch: impl FnMut(&NetworkTopology, &EpochRecord) -> Result<()>,
) -> Result<(NetworkTopology, TrainingTrace)> {
    p.validate(topology.params.encoding.rate.dt)?;
    validate_dataset(dataset, topology)?;
    let mut top = topology.clone();
    let mut trace = TrainingTrace::default();
    let pixels = top.dims.len() * dataset.len();
    for epoch in top.trained_epochs + 1..=p.epochs {
        let order = epoch_order(dataset.len(), p.rng_seed, epoch);
        for chunk in order.chunks(p.batch) {
            let results: Vec<Result<SceneResult>> =
                chunk.par_iter().map(|&i| process_scene(&dataset[i], &top, p)).collect();
            let mut deltas = WeightDeltas::zeros(&top);
            let mut e = vec![0.0; top.proc_dec.len()];
            for r in results {
                let r = r?;
                deltas.add(&r.deltas);
                add_into(&mut e, &r.error);
            }
            // batch mean, so the step size does not depend on the batch size
            let inv = 1.0 / chunk.len() as f64;
            deltas.scale(inv);
            e.iter_mut().for_each(|x| *x *= inv);
            apply_update(&mut top, &deltas, &e, p)?;
        }
        top.trained_epochs = epoch;
        // The energy is a function of the weights, so it is measured once
        // the epoch's updates are in rather than along the way.
        let (sq, correct, spikes) = evaluate(dataset, &top)?;
        let norm_sq = top.learnable_norm_sq();
        let rec = EpochRecord {
            epoch,
            energy: sq as f64 + p.lambda * 0.5 * norm_sq,
            accuracy: correct as f64 / pixels as f64,
            total_spikes: spikes,
            weight_norm: norm_sq.sqrt(),
        };
        if !rec.energy.is_finite() {
            return Err(Error::Numerical { step: 0, detail: format!("energy diverged in epoch {epoch}") });
        }
        trace.epochs.push(rec);
        on_epoch(&top, &rec)?;
    }
    Ok((top, trace))
}
