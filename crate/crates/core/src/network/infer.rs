use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{DecisionRule, NetworkTopology, Traversal};
use crate::encoding::encode_scene;
use crate::error::{Error, Result};
use crate::lif::{step, step_traced, NeuronPopulation, SpikeRecord};
use crate::plasticity::surrogate;
use crate::raster::{CoherenceRaster, PhaseKind, PhaseRaster, WrapCountRaster, TWO_PI};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InferMode {
    #[default]
    OneShot,
    Propagating,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PixelDecision {
    pub x: usize,
    pub y: usize,
    pub k: i32,
    /// Step of the winning spike; `None` without a decision.
    pub latency_steps: Option<u32>,
    pub decided: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTrace {
    pub mode: InferMode,
    /// Set when the topology has never been trained.
    pub untrained: bool,
    pub pixels: Vec<PixelDecision>,
}

impl DecisionTrace {
    /// One JSON object per pixel, raster order.
    pub fn write_jsonl(&self, mut out: impl Write) -> Result<()> {
        for p in &self.pixels {
            serde_json::to_writer(&mut out, p).map_err(|e| Error::Io(e.into()))?;
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Learning-side artefacts of a one-shot pass.
#[derive(Clone, Debug, PartialEq)]
pub struct LearningTrace {
    /// First spike step of every decision neuron.
    pub first_spike: Vec<Option<u32>>,
    /// `ĝ` per processing→decision synapse: surrogate factor of the post
    /// membrane summed over steps where the pre neuron spiked one step
    /// earlier, up to and including the post neuron's first spike.
    pub eligibility: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Inference {
    pub k: WrapCountRaster,
    pub record: SpikeRecord,
    pub trace: DecisionTrace,
    pub learning: Option<LearningTrace>,
}

fn check_inputs(wrapped: &PhaseRaster, coherence: &CoherenceRaster, top: &NetworkTopology) -> Result<()> {
    if wrapped.kind() != PhaseKind::Wrapped {
        return Err(Error::raster("inference expects a wrapped phase raster"));
    }
    if wrapped.dims() != top.dims || coherence.dims() != top.dims {
        return Err(Error::raster(format!(
            "scene is {}x{} but the topology is {}x{}",
            wrapped.width(),
            wrapped.height(),
            top.dims.width,
            top.dims.height
        )));
    }
    Ok(())
}

pub fn infer(
    wrapped: &PhaseRaster,
    coherence: &CoherenceRaster,
    topology: &NetworkTopology,
    mode: InferMode,
) -> Result<Inference> {
    check_inputs(wrapped, coherence, topology)?;
    match mode {
        InferMode::OneShot => one_shot(wrapped, coherence, topology, None),
        InferMode::Propagating => propagating(wrapped, coherence, topology),
    }
}

/// One-shot inference that also keeps the surrogate eligibilities needed by
/// the supervised update, with surrogate sharpness `beta`.
pub fn infer_for_learning(
    wrapped: &PhaseRaster,
    coherence: &CoherenceRaster,
    topology: &NetworkTopology,
    beta: f64,
) -> Result<Inference> {
    check_inputs(wrapped, coherence, topology)?;
    one_shot(wrapped, coherence, topology, Some(beta))
}

/// Winner among the choices of one pixel. Ties go to the smallest `|k|`, then the smaller `k`.
fn pick(rule: DecisionRule, k_values: &[i32], first: &[Option<u32>], count: &[u32]) -> Option<(usize, u32)> {
    let order = |c: usize| (k_values[c].abs(), k_values[c]);
    let mut best: Option<usize> = None;
    for c in 0..k_values.len() {
        let better = match (rule, best) {
            (_, None) => first[c].is_some(),
            (DecisionRule::FirstSpike, Some(b)) => match (first[c], first[b]) {
                (Some(tc), Some(tb)) => tc < tb || (tc == tb && order(c) < order(b)),
                _ => false,
            },
            (DecisionRule::SpikeCount, Some(b)) => {
                count[c] > count[b] || (count[c] == count[b] && count[c] > 0 && order(c) < order(b))
            }
        };
        if better {
            best = Some(c);
        }
    }
    best.map(|c| (c, first[c].expect("winner has spiked")))
}

fn pixel_decision(top: &NetworkTopology, px: usize, winner: Option<(usize, u32)>) -> PixelDecision {
    let (x, y) = top.dims.coords(px);
    let kv = &top.params.decision.k_values;
    match winner {
        Some((c, t)) => PixelDecision { x, y, k: kv[c], latency_steps: Some(t), decided: true },
        None => PixelDecision { x, y, k: 0, latency_steps: None, decided: false },
    }
}

fn finish(top: &NetworkTopology, mode: InferMode, pixels: Vec<PixelDecision>, mut record: SpikeRecord, learning: Option<LearningTrace>) -> Result<Inference> {
    record.sort();
    let k = WrapCountRaster::new(top.dims.width, top.dims.height, pixels.iter().map(|p| p.k).collect())?;
    Ok(Inference { k, record, trace: DecisionTrace { mode, untrained: top.trained_epochs == 0, pixels }, learning })
}

fn one_shot(
    wrapped: &PhaseRaster,
    coherence: &CoherenceRaster,
    top: &NetworkTopology,
    beta: Option<f64>,
) -> Result<Inference> {
    let p = &top.params;
    let encoded = encode_scene(wrapped, coherence, &p.encoding)?;
    let lateral = top.gated_lateral(coherence)?;
    let by_step = encoded.spikes_by_step();
    let n = top.dims.len();
    let kk = top.k();
    let t_sim = p.t_sim();
    let window = p.decision.decision_window.min(t_sim);
    let (proc_off, dec_off) = (top.encoding_size(), top.encoding_size() + n);

    let mut proc = NeuronPopulation::new(n, &p.processing);
    let mut dec = NeuronPopulation::new(kk * n, &p.decision_lif);
    let mut record = SpikeRecord::new(top.neuron_count(), t_sim, p.encoding.rate.dt);
    let zeros_p = vec![0.0; n];
    let zeros_d = vec![0.0; kk * n];
    let mut proc_in = vec![0.0; n];
    let mut dec_in = vec![0.0; kk * n];
    let mut membrane = vec![0.0; if beta.is_some() { kk * n } else { 0 }];
    let mut eligibility = vec![0.0; if beta.is_some() { top.proc_dec.len() } else { 0 }];

    let mut first: Vec<Option<u32>> = vec![None; kk * n];
    let mut first_in_window: Vec<Option<u32>> = vec![None; kk * n];
    let mut count_in_window = vec![0u32; kk * n];
    let mut prev_enc: Vec<usize> = Vec::new();
    let mut prev_proc: Vec<usize> = Vec::new();

    for t in 0..t_sim {
        proc_in.fill(0.0);
        dec_in.fill(0.0);
        record.synaptic_events += top.enc_proc.accumulate(&prev_enc, &mut proc_in);
        record.synaptic_events += lateral.accumulate(&prev_proc, &mut proc_in);
        record.synaptic_events += top.proc_dec.accumulate(&prev_proc, &mut dec_in);

        let fired_p = step_traced(&mut proc, &p.processing, &zeros_p, &proc_in, None, t)?;
        let mem = beta.map(|_| membrane.as_mut_slice());
        let fired_d = step_traced(&mut dec, &p.decision_lif, &zeros_d, &dec_in, mem, t)?;

        for &i in &fired_d {
            first[i].get_or_insert(t);
            if t < window {
                first_in_window[i].get_or_insert(t);
                count_in_window[i] += 1;
            }
        }
        if let Some(beta) = beta {
            let vth = p.decision_lif.v_threshold;
            for &j in &prev_proc {
                for s in top.proc_dec.fan_out(j) {
                    let i = top.proc_dec.post(s);
                    if first[i].is_none_or(|f| f == t) {
                        eligibility[s] += surrogate(membrane[i], vth, beta);
                    }
                }
            }
        }

        let enc_fired: Vec<usize> = by_step[t as usize].iter().map(|&c| c as usize).collect();
        record.push(t, 0, &enc_fired);
        record.push(t, proc_off, &fired_p);
        record.push(t, dec_off, &fired_d);
        prev_enc = enc_fired;
        prev_proc = fired_p;
    }

    let pixels = (0..n)
        .map(|px| {
            let r = px * kk..(px + 1) * kk;
            let w = pick(p.decision.rule, &p.decision.k_values, &first_in_window[r.clone()], &count_in_window[r]);
            pixel_decision(top, px, w)
        })
        .collect();
    let learning = beta.map(|_| LearningTrace { first_spike: first, eligibility });
    finish(top, InferMode::OneShot, pixels, record, learning)
}

fn traversal_order(top: &NetworkTopology, coherence: &CoherenceRaster) -> Vec<usize> {
    let g = coherence.values();
    let seed = (0..g.len()).fold(0, |best, i| if g[i] > g[best] { i } else { best });
    let mut rest: Vec<usize> = (0..g.len()).filter(|&i| i != seed).collect();
    if top.params.decision.traversal == Traversal::CoherenceDescending {
        rest.sort_by(|&a, &b| g[b].total_cmp(&g[a]).then(a.cmp(&b)));
    }
    std::iter::once(seed).chain(rest).collect()
}

fn propagating(wrapped: &PhaseRaster, coherence: &CoherenceRaster, top: &NetworkTopology) -> Result<Inference> {
    let p = &top.params;
    let encoded = encode_scene(wrapped, coherence, &p.encoding)?;
    let lateral = top.gated_lateral(coherence)?;
    let by_step = encoded.spikes_by_step();
    let n = top.dims.len();
    let kk = top.k();
    let t_sim = p.t_sim();
    let window = p.decision.decision_window.min(t_sim);
    let (proc_off, dec_off) = (top.encoding_size(), top.encoding_size() + n);
    let mut record = SpikeRecord::new(top.neuron_count(), t_sim, p.encoding.rate.dt);

    // encoding and processing layers run once for the whole scene
    let mut proc = NeuronPopulation::new(n, &p.processing);
    let zeros_p = vec![0.0; n];
    let mut proc_in = vec![0.0; n];
    let mut proc_spikes: Vec<Vec<usize>> = Vec::with_capacity(t_sim as usize);
    let mut prev_enc: Vec<usize> = Vec::new();
    let mut prev_proc: Vec<usize> = Vec::new();
    for t in 0..t_sim {
        proc_in.fill(0.0);
        record.synaptic_events += top.enc_proc.accumulate(&prev_enc, &mut proc_in);
        record.synaptic_events += lateral.accumulate(&prev_proc, &mut proc_in);
        let fired = step_traced(&mut proc, &p.processing, &zeros_p, &proc_in, None, t)?;
        let enc_fired: Vec<usize> = by_step[t as usize].iter().map(|&c| c as usize).collect();
        record.push(t, 0, &enc_fired);
        record.push(t, proc_off, &fired);
        prev_enc = enc_fired;
        prev_proc = fired.clone();
        proc_spikes.push(fired);
    }
    let mut proc_fired = vec![false; n * t_sim as usize];
    for (t, fired) in proc_spikes.iter().enumerate() {
        for &j in fired {
            proc_fired[t * n + j] = true;
        }
    }

    let phi = wrapped.values();
    let d = top.dims;
    let vth = p.decision_lif.v_threshold;
    let mut out: Vec<Option<PixelDecision>> = vec![None; n];
    let order = traversal_order(top, coherence);
    let zero = p.decision.zero_index();
    let (sx, sy) = d.coords(order[0]);
    out[order[0]] = Some(PixelDecision { x: sx, y: sy, k: 0, latency_steps: Some(0), decided: true });

    let mut pop = NeuronPopulation::new(kk, &p.decision_lif);
    let mut bias = vec![0.0; kk];
    let mut syn = vec![0.0; kk];
    for &px in &order[1..] {
        let (x, y) = d.coords(px);
        let mut votes = vec![0u32; kk];
        for ny in y.saturating_sub(1)..=(y + 1).min(d.height - 1) {
            for nx in x.saturating_sub(1)..=(x + 1).min(d.width - 1) {
                let q = d.index(nx, ny);
                if let Some(dq) = out[q].filter(|_| q != px) {
                    let cand = ((phi[q] + TWO_PI * dq.k as f64 - phi[px]) / TWO_PI).round() as i32;
                    if let Some(c) = p.decision.index_of(cand) {
                        votes[c] += 1;
                    }
                }
            }
        }
        for c in 0..kk {
            bias[c] = (p.decision.w_prop * vth * votes[c] as f64).min(p.decision.w_prop_max * vth);
        }

        pop.reset(&p.decision_lif);
        let mut first = vec![None; kk];
        let mut count = vec![0u32; kk];
        for t in 0..t_sim {
            syn.fill(0.0);
            if t > 0 {
                let base = (t as usize - 1) * n;
                for c in 0..kk {
                    for &s in top.proc_dec.fan_in(px * kk + c) {
                        let s = s as usize;
                        if proc_fired[base + top.proc_dec.pre(s)] {
                            syn[c] += top.proc_dec.weight(s);
                            record.synaptic_events += 1;
                        }
                    }
                }
            }
            let fired = step(&mut pop, &p.decision_lif, &bias, &syn).map_err(|e| match e {
                Error::Numerical { detail, .. } => Error::Numerical { step: t, detail },
                other => other,
            })?;
            for &c in &fired {
                if t < window {
                    first[c].get_or_insert(t);
                    count[c] += 1;
                }
            }
            record.push(t, dec_off + px * kk, &fired);
        }
        let w = pick(p.decision.rule, &p.decision.k_values, &first, &count);
        out[px] = Some(pixel_decision(top, px, w));
    }
    debug_assert!(zero < kk);
    let pixels = out.into_iter().map(|p| p.expect("every pixel visited")).collect();
    finish(top, InferMode::Propagating, pixels, record, None)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionHistogram {
    /// Pixels per output `k` (undecided pixels count under 0).
    pub counts: BTreeMap<i32, usize>,
    pub no_decision: usize,
    /// Mean winner latency over decided pixels.
    pub mean_latency_steps: Option<f64>,
}

pub fn decision_histogram(trace: &DecisionTrace) -> DecisionHistogram {
    let mut counts = BTreeMap::new();
    let mut no_decision = 0;
    let (mut lat_sum, mut lat_n) = (0u64, 0u64);
    for p in &trace.pixels {
        *counts.entry(p.k).or_insert(0) += 1;
        match (p.decided, p.latency_steps) {
            (true, Some(t)) => {
                lat_sum += t as u64;
                lat_n += 1;
            }
            _ => no_decision += !p.decided as usize,
        }
    }
    DecisionHistogram {
        counts,
        no_decision,
        mean_latency_steps: (lat_n > 0).then(|| lat_sum as f64 / lat_n as f64),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{build_network, NetworkParams};

    fn flat(w: usize, h: usize) -> (PhaseRaster, CoherenceRaster) {
        (
            PhaseRaster::constant(w, h, 0.0, PhaseKind::Wrapped).unwrap(),
            CoherenceRaster::uniform(w, h, 1.0).unwrap(),
        )
    }

    #[test]
    fn tie_break_prefers_small_magnitude_then_negative() {
        let kv = [-2, -1, 0, 1, 2];
        let f = [None, Some(5), None, Some(5), None];
        assert_eq!(pick(DecisionRule::FirstSpike, &kv, &f, &[0; 5]), Some((1, 5)));
        let f = [Some(5), Some(5), Some(5), Some(5), Some(5)];
        assert_eq!(pick(DecisionRule::FirstSpike, &kv, &f, &[0; 5]), Some((2, 5)));
        let f = [Some(3), Some(5), Some(5), None, None];
        assert_eq!(pick(DecisionRule::FirstSpike, &kv, &f, &[0; 5]), Some((0, 3)));
        assert_eq!(pick(DecisionRule::FirstSpike, &kv, &[None; 5], &[0; 5]), None);
        let f = [Some(9), Some(2), None, Some(4), None];
        assert_eq!(pick(DecisionRule::SpikeCount, &kv, &f, &[3, 2, 0, 3, 0]), Some((3, 4)));
    }

    #[test]
    fn flat_scene_decides_zero() {
        let top = build_network(8, 8, &NetworkParams::default(), 5).unwrap();
        let (w, g) = flat(8, 8);
        for mode in [InferMode::OneShot, InferMode::Propagating] {
            let r = infer(&w, &g, &top, mode).unwrap();
            assert!(r.k.values().iter().all(|&k| k == 0));
            assert!(r.trace.untrained);
            let h = decision_histogram(&r.trace);
            assert_eq!(h.counts[&0], 64);
        }
        // with an active processing layer the k = 0 neuron wins outright away from the border
        let w = PhaseRaster::new(8, 8, vec![3.0; 64], PhaseKind::Wrapped).unwrap();
        let r = infer(&w, &g, &top, InferMode::OneShot).unwrap();
        for p in &r.trace.pixels {
            assert_eq!(p.k, 0);
            if (1..7).contains(&p.x) && (1..7).contains(&p.y) {
                assert!(p.decided);
            }
        }
    }

    #[test]
    fn absurd_threshold_means_no_decision() {
        let mut p = NetworkParams::default();
        p.decision_lif.v_threshold = 1e9;
        let top = build_network(5, 4, &p, 0).unwrap();
        let (w, g) = flat(5, 4);
        let r = infer(&w, &g, &top, InferMode::OneShot).unwrap();
        let h = decision_histogram(&r.trace);
        assert_eq!(h.no_decision, 20);
        assert_eq!(h.counts[&0], 20);
        assert_eq!(h.mean_latency_steps, None);
    }

    #[test]
    fn histogram_latency() {
        let trace = DecisionTrace {
            mode: InferMode::OneShot,
            untrained: false,
            pixels: vec![
                PixelDecision { x: 0, y: 0, k: 1, latency_steps: Some(12), decided: true },
                PixelDecision { x: 1, y: 0, k: 0, latency_steps: None, decided: false },
            ],
        };
        let h = decision_histogram(&trace);
        assert_eq!(h.mean_latency_steps, Some(12.0));
        assert_eq!(h.no_decision, 1);
        assert_eq!(h.counts.values().sum::<usize>(), 2);
        let mut buf = Vec::new();
        trace.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert!(text.starts_with(r#"{"x":0,"y":0,"k":1,"latency_steps":12,"decided":true}"#));
    }

    #[test]
    fn dimension_mismatch() {
        let top = build_network(4, 4, &NetworkParams::default(), 0).unwrap();
        let (w, g) = flat(4, 5);
        assert!(matches!(infer(&w, &g, &top, InferMode::OneShot), Err(Error::InvalidRaster(_))));
    }

    #[test]
    fn record_counts_are_consistent() {
        let top = build_network(6, 6, &NetworkParams::default(), 2).unwrap();
        let w = PhaseRaster::from_fn(6, 6, PhaseKind::Wrapped, |x, y| ((x + 2 * y) as f64 * 0.7).sin() * 3.0).unwrap();
        let g = CoherenceRaster::uniform(6, 6, 0.8).unwrap();
        let r = infer_for_learning(&w, &g, &top, 1.0).unwrap();
        assert!(r.record.events.windows(2).all(|e| e[0] <= e[1]));
        assert_eq!(r.record.per_step.iter().map(|&c| c as u64).sum::<u64>(), r.record.total_spikes());
        let l = r.learning.unwrap();
        assert_eq!(l.eligibility.len(), top.proc_dec.len());
        assert!(l.eligibility.iter().all(|&g| g >= 0.0 && g.is_finite()));
        let again = infer_for_learning(&w, &g, &top, 1.0).unwrap();
        assert_eq!(again.record, r.record);
    }

    #[test]
    fn vertical_flip_equivariance() {
        let (wd, ht) = (7, 6);
        let top = build_network(wd, ht, &NetworkParams::default(), 11).unwrap();
        let phase = |x: usize, y: usize| (x as f64 * 0.9 - y as f64 * 0.4).sin() * 3.1;
        let gam = |x: usize, y: usize| 0.3 + 0.7 * (((x * 5 + y * 3) % 7) as f64 / 6.0);
        let w = PhaseRaster::from_fn(wd, ht, PhaseKind::Wrapped, phase).unwrap();
        let g = CoherenceRaster::new(wd, ht, (0..wd * ht).map(|i| gam(i % wd, i / wd)).collect()).unwrap();
        let wf = PhaseRaster::from_fn(wd, ht, PhaseKind::Wrapped, |x, y| phase(x, ht - 1 - y)).unwrap();
        let gf = CoherenceRaster::new(wd, ht, (0..wd * ht).map(|i| gam(i % wd, ht - 1 - i / wd)).collect()).unwrap();
        let perm: Vec<usize> = (0..wd * ht).map(|i| (ht - 1 - i / wd) * wd + i % wd).collect();
        let flipped_top = top.remap_pixels(&perm).unwrap();

        let a = infer(&w, &g, &top, InferMode::OneShot).unwrap();
        let b = infer(&wf, &gf, &flipped_top, InferMode::OneShot).unwrap();
        for i in 0..wd * ht {
            assert_eq!(a.k.values()[i], b.k.values()[perm[i]]);
        }
        assert_eq!(a.record.total_spikes(), b.record.total_spikes());
    }

    #[test]
    fn propagation_dominates_without_evidence() {
        // silence the encoders; the centre pixel sees four visited neighbours
        // that all vote for k = 1
        let mut top = build_network(3, 3, &NetworkParams::default(), 0).unwrap();
        top.enc_proc.weights_mut().fill(0.0);
        let mut v = vec![3.0; 9];
        v[4] = -3.0;
        v[5] = -3.0;
        v[6] = -3.0;
        v[7] = -3.0;
        v[8] = -3.0;
        let w = PhaseRaster::new(3, 3, v, PhaseKind::Wrapped).unwrap();
        let mut gv = vec![0.9; 9];
        gv[0] = 1.0;
        let g = CoherenceRaster::new(3, 3, gv).unwrap();
        let r = infer(&w, &g, &top, InferMode::Propagating).unwrap();
        assert_eq!(r.k.values()[0], 0);
        assert_eq!(r.k.values()[4], 1);
        assert!(r.trace.pixels[4].decided);

        // mirrored construction: neighbours at -3, centre at +3 gives k* = -1
        let v: Vec<f64> = (0..9).map(|i| if i < 4 { -3.0 } else { 3.0 }).collect();
        let w = PhaseRaster::new(3, 3, v, PhaseKind::Wrapped).unwrap();
        let r = infer(&w, &g, &top, InferMode::Propagating).unwrap();
        assert_eq!(r.k.values()[4], -1);
    }
}
