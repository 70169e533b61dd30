//! Fixed-step leaky integrate-and-fire engine.
//!
//! Membrane update for a non-refractory neuron (explicit Euler):
//!
//! ```text
//! v ← v + (dt/τ_m)·(−v + I_syn + I_ext),   I_syn = Σ_j w_ij·[j fired at t−1]
//! ```
//!
//! A neuron with `v ≥ V_th` after the update fires, is reset to `v_reset` and
//! sits out the next `refractory_steps` steps clamped at `v_reset`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::encoding::SpikeTrain;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LifParams {
    /// Membrane time constant in seconds.
    pub tau_m: f64,
    pub v_threshold: f64,
    pub v_reset: f64,
    pub refractory_steps: u32,
    /// Seconds per step.
    pub dt: f64,
}

impl Default for LifParams {
    fn default() -> Self {
        LifParams { tau_m: 10e-3, v_threshold: 1.0, v_reset: 0.0, refractory_steps: 2, dt: 1e-3 }
    }
}

impl LifParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau_m > 0.0 && self.dt > 0.0 && self.dt <= self.tau_m) {
            return Err(Error::params(format!(
                "LIF needs 0 < dt <= tau_m (dt = {}, tau_m = {})",
                self.dt, self.tau_m
            )));
        }
        if !(self.v_threshold > self.v_reset) || !self.v_threshold.is_finite() || !self.v_reset.is_finite() {
            return Err(Error::params("LIF needs finite v_threshold > v_reset"));
        }
        Ok(())
    }

    #[inline]
    pub fn leak(&self) -> f64 {
        self.dt / self.tau_m
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeuronPopulation {
    pub v: Vec<f64>,
    pub refractory_remaining: Vec<u32>,
    pub spike_count: Vec<u64>,
}

impl NeuronPopulation {
    pub fn new(size: usize, p: &LifParams) -> Self {
        NeuronPopulation {
            v: vec![p.v_reset; size],
            refractory_remaining: vec![0; size],
            spike_count: vec![0; size],
        }
    }

    pub fn size(&self) -> usize {
        self.v.len()
    }

    pub fn reset(&mut self, p: &LifParams) {
        self.v.fill(p.v_reset);
        self.refractory_remaining.fill(0);
        self.spike_count.fill(0);
    }
}

/// Advances every neuron by one step and returns the fired set in ascending order.
///
/// `input_current` is `I_ext`, `incoming` is the weighted spike sum `I_syn`.
pub fn step(
    pop: &mut NeuronPopulation,
    p: &LifParams,
    input_current: &[f64],
    incoming: &[f64],
) -> Result<Vec<usize>> {
    step_traced(pop, p, input_current, incoming, None, 0)
}

/// [`step`] that also records each neuron's pre-reset membrane value into
/// `membrane` and tags errors with `step_index`.
pub fn step_traced(
    pop: &mut NeuronPopulation,
    p: &LifParams,
    input_current: &[f64],
    incoming: &[f64],
    mut membrane: Option<&mut [f64]>,
    step_index: u32,
) -> Result<Vec<usize>> {
    let n = pop.size();
    if input_current.len() != n || incoming.len() != n {
        return Err(Error::params(format!(
            "step: population has {n} neurons but inputs have {} and {}",
            input_current.len(),
            incoming.len()
        )));
    }
    if let Some(i) = (0..n).find(|&i| !(input_current[i].is_finite() && incoming[i].is_finite())) {
        return Err(Error::Numerical {
            step: step_index,
            detail: format!("neuron {i} received current {} + {}", input_current[i], incoming[i]),
        });
    }
    let leak = p.leak();
    let mut fired = Vec::new();
    for i in 0..n {
        if pop.refractory_remaining[i] > 0 {
            pop.refractory_remaining[i] -= 1;
            pop.v[i] = p.v_reset;
            if let Some(m) = membrane.as_deref_mut() {
                m[i] = p.v_reset;
            }
            continue;
        }
        let v = pop.v[i] + leak * (-pop.v[i] + incoming[i] + input_current[i]);
        if let Some(m) = membrane.as_deref_mut() {
            m[i] = v;
        }
        if v >= p.v_threshold {
            fired.push(i);
            pop.v[i] = p.v_reset;
            pop.refractory_remaining[i] = p.refractory_steps;
            pop.spike_count[i] += 1;
        } else {
            pop.v[i] = v;
        }
    }
    Ok(fired)
}

/// Sparse synapses from a `n_pre` population onto a `n_post` population,
/// stored as CSR by presynaptic neuron with a fan-in index alongside.
///
/// Synapse ids are positions in `(pre, post)`-sorted order and stay stable
/// for the lifetime of the table.
#[derive(Clone, Debug, PartialEq)]
pub struct SynapseTable {
    n_pre: usize,
    n_post: usize,
    offsets: Vec<usize>,
    sources: Vec<u32>,
    targets: Vec<u32>,
    weights: Vec<f64>,
    in_offsets: Vec<usize>,
    in_synapses: Vec<u32>,
}

impl SynapseTable {
    pub fn from_entries(n_pre: usize, n_post: usize, mut entries: Vec<(usize, usize, f64)>) -> Result<Self> {
        if n_pre > u32::MAX as usize || n_post > u32::MAX as usize || entries.len() > u32::MAX as usize {
            return Err(Error::params("synapse table too large for 32-bit indices"));
        }
        entries.sort_by_key(|&(pre, post, _)| (pre, post));
        for w in entries.windows(2) {
            if (w[0].0, w[0].1) == (w[1].0, w[1].1) {
                return Err(Error::params(format!("duplicate synapse {} -> {}", w[0].0, w[0].1)));
            }
        }
        if let Some(&(pre, post, w)) =
            entries.iter().find(|&&(pre, post, w)| pre >= n_pre || post >= n_post || !w.is_finite())
        {
            return Err(Error::params(format!("invalid synapse {pre} -> {post} (w = {w})")));
        }

        let mut offsets = vec![0usize; n_pre + 1];
        for &(pre, _, _) in &entries {
            offsets[pre + 1] += 1;
        }
        for i in 0..n_pre {
            offsets[i + 1] += offsets[i];
        }
        let sources: Vec<u32> = entries.iter().map(|e| e.0 as u32).collect();
        let targets: Vec<u32> = entries.iter().map(|e| e.1 as u32).collect();
        let weights: Vec<f64> = entries.iter().map(|e| e.2).collect();

        let mut in_offsets = vec![0usize; n_post + 1];
        for &t in &targets {
            in_offsets[t as usize + 1] += 1;
        }
        for i in 0..n_post {
            in_offsets[i + 1] += in_offsets[i];
        }
        let mut fill = in_offsets.clone();
        let mut in_synapses = vec![0u32; targets.len()];
        for (syn, &t) in targets.iter().enumerate() {
            in_synapses[fill[t as usize]] = syn as u32;
            fill[t as usize] += 1;
        }
        Ok(SynapseTable { n_pre, n_post, offsets, sources, targets, weights, in_offsets, in_synapses })
    }

    pub fn empty(n_pre: usize, n_post: usize) -> Self {
        Self::from_entries(n_pre, n_post, Vec::new()).expect("empty table is valid")
    }

    pub fn n_pre(&self) -> usize {
        self.n_pre
    }

    pub fn n_post(&self) -> usize {
        self.n_post
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Synapse ids leaving `pre`.
    #[inline]
    pub fn fan_out(&self, pre: usize) -> std::ops::Range<usize> {
        self.offsets[pre]..self.offsets[pre + 1]
    }

    /// Synapse ids arriving at `post`.
    #[inline]
    pub fn fan_in(&self, post: usize) -> &[u32] {
        &self.in_synapses[self.in_offsets[post]..self.in_offsets[post + 1]]
    }

    #[inline]
    pub fn pre(&self, syn: usize) -> usize {
        self.sources[syn] as usize
    }

    #[inline]
    pub fn post(&self, syn: usize) -> usize {
        self.targets[syn] as usize
    }

    #[inline]
    pub fn weight(&self, syn: usize) -> f64 {
        self.weights[syn]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    /// Weight of `pre → post`, if present.
    pub fn find(&self, pre: usize, post: usize) -> Option<usize> {
        let range = self.fan_out(pre);
        self.targets[range.clone()].binary_search(&(post as u32)).ok().map(|i| range.start + i)
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.len()).map(move |s| (self.pre(s), self.post(s), self.weights[s]))
    }

    /// Adds the weights of every synapse leaving a fired neuron into `out`
    /// (indexed by post neuron) and returns the number of propagated events.
    pub fn accumulate(&self, fired: &[usize], out: &mut [f64]) -> u64 {
        let mut events = 0u64;
        for &pre in fired {
            for s in self.fan_out(pre) {
                out[self.targets[s] as usize] += self.weights[s];
            }
            events += (self.offsets[pre + 1] - self.offsets[pre]) as u64;
        }
        events
    }

    pub fn mean_fan_in(&self) -> f64 {
        if self.n_post == 0 {
            0.0
        } else {
            self.len() as f64 / self.n_post as f64
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpikeEvent {
    pub t: u32,
    pub neuron: u32,
}

/// All spikes of a run, ordered by `(t, neuron)`.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct SpikeRecord {
    pub n_neurons: usize,
    pub t_sim: u32,
    pub dt: f64,
    pub events: Vec<SpikeEvent>,
    /// Population spike total per step.
    pub per_step: Vec<u32>,
    /// Spike-synapse propagations actually performed.
    pub synaptic_events: u64,
}

impl SpikeRecord {
    pub fn new(n_neurons: usize, t_sim: u32, dt: f64) -> Self {
        SpikeRecord { n_neurons, t_sim, dt, events: Vec::new(), per_step: vec![0; t_sim as usize], synaptic_events: 0 }
    }

    /// Records spikes of neurons `offset + i` for each `i` in `fired`.
    pub fn push(&mut self, t: u32, offset: usize, fired: &[usize]) {
        self.events.extend(fired.iter().map(|&i| SpikeEvent { t, neuron: (offset + i) as u32 }));
        self.per_step[t as usize] += fired.len() as u32;
    }

    /// Restores `(t, neuron)` order after out-of-order pushes.
    pub fn sort(&mut self) {
        self.events.sort_unstable();
    }

    pub fn total_spikes(&self) -> u64 {
        self.events.len() as u64
    }

    pub fn spikes_per_neuron(&self) -> Vec<u64> {
        let mut c = vec![0u64; self.n_neurons];
        for e in &self.events {
            c[e.neuron as usize] += 1;
        }
        c
    }

    pub fn trains(&self) -> Vec<SpikeTrain> {
        let mut times = vec![Vec::new(); self.n_neurons];
        for e in &self.events {
            times[e.neuron as usize].push(e.t);
        }
        times.into_iter().enumerate().map(|(i, t)| SpikeTrain::new(i, t)).collect()
    }

    pub fn write_csv(&self, mut out: impl Write) -> Result<()> {
        writeln!(out, "neuron_id,timestep")?;
        for e in &self.events {
            writeln!(out, "{},{}", e.neuron, e.t)?;
        }
        Ok(())
    }

    pub fn summary(&self) -> ActivitySummary {
        let s = activity_stats(self);
        ActivitySummary {
            total_spikes: self.total_spikes(),
            mean_rate_hz: s.mean_rate_hz,
            spikes_per_neuron: s.spikes_per_neuron,
            active_fraction: s.active_fraction,
        }
    }
}

/// Iterates `step` for `t_sim` steps over one recurrent population with a
/// one-step synaptic delay. `input_schedule(t, buf)` fills `I_ext` for step `t`.
pub fn run(
    pop: &mut NeuronPopulation,
    p: &LifParams,
    t_sim: u32,
    mut input_schedule: impl FnMut(u32, &mut [f64]),
    synapses: &SynapseTable,
) -> Result<SpikeRecord> {
    p.validate()?;
    let n = pop.size();
    if synapses.n_pre() != n || synapses.n_post() != n {
        return Err(Error::params("run: synapse table does not match the population"));
    }
    let mut record = SpikeRecord::new(n, t_sim, p.dt);
    let mut ext = vec![0.0; n];
    let mut syn = vec![0.0; n];
    let mut last: Vec<usize> = Vec::new();
    for t in 0..t_sim {
        ext.fill(0.0);
        input_schedule(t, &mut ext);
        syn.fill(0.0);
        record.synaptic_events += synapses.accumulate(&last, &mut syn);
        last = step_traced(pop, p, &ext, &syn, None, t)?;
        record.push(t, 0, &last);
    }
    Ok(record)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivityStats {
    pub mean_rate_hz: f64,
    pub spikes_per_neuron: f64,
    pub active_fraction: f64,
}

/// JSON summary written next to a record's CSV dump.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActivitySummary {
    pub total_spikes: u64,
    pub mean_rate_hz: f64,
    pub spikes_per_neuron: f64,
    pub active_fraction: f64,
}

pub fn activity_stats(record: &SpikeRecord) -> ActivityStats {
    let n = record.n_neurons;
    if n == 0 || record.t_sim == 0 {
        return ActivityStats { mean_rate_hz: 0.0, spikes_per_neuron: 0.0, active_fraction: 0.0 };
    }
    let total = record.total_spikes() as f64;
    let active = record.spikes_per_neuron().iter().filter(|&&c| c > 0).count();
    ActivityStats {
        mean_rate_hz: total / (n as f64 * record.t_sim as f64 * record.dt),
        spikes_per_neuron: total / n as f64,
        active_fraction: active as f64 / n as f64,
    }
}
