//! Spike encoders for wrapped phase (rate code), phase gradient (latency
//! code) and coherence (population code).
//!
//! Every encoder is a pure function of its inputs, parameters and seed. Times
//! are integer steps on the shared simulation clock.

use std::io::Write;
use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{wrap_diff, CoherenceRaster, Dims, PhaseKind, PhaseRaster};

/// Spike times of one neuron, strictly increasing, all `< T_sim`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SpikeTrain {
    pub neuron_id: usize,
    pub times: Vec<u32>,
}

impl SpikeTrain {
    pub fn new(neuron_id: usize, times: Vec<u32>) -> Self {
        debug_assert!(times.windows(2).all(|w| w[0] < w[1]));
        SpikeTrain { neuron_id, times }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RateMode {
    #[default]
    Deterministic,
    Poisson,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RateParams {
    /// Maximum firing rate in Hz.
    pub r_max: f64,
    /// Seconds per step.
    pub dt: f64,
    /// Simulation length in steps.
    pub t_sim: u32,
    pub mode: RateMode,
    pub rng_seed: u64,
}

impl Default for RateParams {
    fn default() -> Self {
        RateParams { r_max: 100.0, dt: 1e-3, t_sim: 100, mode: RateMode::Deterministic, rng_seed: 0 }
    }
}

impl RateParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_max >= 0.0 && self.dt > 0.0 && self.r_max * self.dt <= 1.0) {
            return Err(Error::params(format!(
                "rate code needs r_max >= 0, dt > 0 and r_max*dt <= 1 (got {} Hz, {} s)",
                self.r_max, self.dt
            )));
        }
        if self.t_sim < 1 {
            return Err(Error::params("T_sim must be at least one step"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TemporalParams {
    pub t_ref: u32,
    pub delta_t: u32,
    /// Gradient normaliser `|∇φ_w|_max` in radians.
    pub grad_max: f64,
}

impl Default for TemporalParams {
    fn default() -> Self {
        TemporalParams { t_ref: 50, delta_t: 40, grad_max: std::f64::consts::PI }
    }
}

impl TemporalParams {
    pub fn validate(&self, t_sim: u32) -> Result<()> {
        if self.delta_t > self.t_ref || self.t_ref + self.delta_t >= t_sim {
            return Err(Error::params(format!(
                "latency code window [{}, {}] must lie inside [0, {t_sim})",
                self.t_ref as i64 - self.delta_t as i64,
                self.t_ref + self.delta_t
            )));
        }
        if !(self.grad_max > 0.0 && self.grad_max.is_finite()) {
            return Err(Error::params("grad_max must be positive"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PopulationParams {
    pub n_total: usize,
    /// Rate of each active population member in Hz.
    pub active_rate: f64,
}

impl Default for PopulationParams {
    fn default() -> Self {
        PopulationParams { n_total: 10, active_rate: 100.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GradientMaps {
    /// One x-gradient map (3MN channels).
    #[default]
    X,
    /// x- and y-gradient maps (4MN channels).
    XY,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    X,
    Y,
}

#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EncodingParams {
    pub rate: RateParams,
    pub temporal: TemporalParams,
    pub population: PopulationParams,
    pub gradient_maps: GradientMaps,
}

impl EncodingParams {
    pub fn validate(&self) -> Result<()> {
        self.rate.validate()?;
        self.temporal.validate(self.rate.t_sim)?;
        if self.population.n_total < 1 {
            return Err(Error::params("population needs at least one neuron"));
        }
        let a = self.population.active_rate;
        if !(a >= 0.0 && a * self.rate.dt <= 1.0) {
            return Err(Error::params("population active_rate must satisfy 0 <= rate*dt <= 1"));
        }
        Ok(())
    }

    pub fn map_count(&self) -> usize {
        match self.gradient_maps {
            GradientMaps::X => 3,
            GradientMaps::XY => 4,
        }
    }
}

/// Forward wrapped difference `W(φ[i+1] − φ[i])` along `axis`; the last
/// column (x) or row (y) is zero.
pub fn wrapped_gradient(wrapped: &PhaseRaster, axis: Axis) -> Result<Vec<f64>> {
    if wrapped.kind() != PhaseKind::Wrapped {
        return Err(Error::raster("wrapped_gradient expects a wrapped raster"));
    }
    let d = wrapped.dims();
    let mut out = vec![0.0; d.len()];
    for y in 0..d.height {
        for x in 0..d.width {
            let next = match axis {
                Axis::X if x + 1 < d.width => Some((x + 1, y)),
                Axis::Y if y + 1 < d.height => Some((x, y + 1)),
                _ => None,
            };
            if let Some((nx, ny)) = next {
                out[d.index(x, y)] = wrap_diff(wrapped.get(nx, ny) - wrapped.get(x, y));
            }
        }
    }
    Ok(out)
}

/// Target rate `r_max · |φ_w + π| / 2π` in Hz.
#[inline]
pub fn phase_rate(phi: f64, r_max: f64) -> f64 {
    r_max * (phi + std::f64::consts::PI).abs() / (2.0 * std::f64::consts::PI)
}

/// Regular train at `rate_hz`: spikes at `floor(n / (rate·dt))` for `n = 1, 2, …`.
pub fn regular_train(neuron_id: usize, rate_hz: f64, dt: f64, t_sim: u32) -> SpikeTrain {
    let per_step = rate_hz * dt;
    let mut times = Vec::new();
    if per_step > 0.0 {
        let period = 1.0 / per_step;
        let mut n = 1u64;
        loop {
            // tolerance keeps exact multiples (e.g. 3/0.1) from rounding down a step
            let t = (n as f64 * period + 1e-9).floor();
            if t >= t_sim as f64 {
                break;
            }
            let t = t as u32;
            if times.last() != Some(&t) {
                times.push(t);
            }
            n += 1;
        }
    }
    SpikeTrain::new(neuron_id, times)
}

/// Bernoulli(rate·dt) per step, seeded per neuron so trains are independent of encoding order.
pub fn poisson_train(neuron_id: usize, rate_hz: f64, dt: f64, t_sim: u32, seed: u64, stream: u64) -> SpikeTrain {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    let p = (rate_hz * dt).clamp(0.0, 1.0);
    let times = (0..t_sim).filter(|_| rng.random_bool(p)).collect();
    SpikeTrain::new(neuron_id, times)
}

fn rate_train(id: usize, rate_hz: f64, p: &RateParams, stream: u64) -> SpikeTrain {
    match p.mode {
        RateMode::Deterministic => regular_train(id, rate_hz, p.dt, p.t_sim),
        RateMode::Poisson => poisson_train(id, rate_hz, p.dt, p.t_sim, p.rng_seed, stream),
    }
}

/// One rate-coded train per pixel; `neuron_id` is the pixel index.
pub fn encode_rate(wrapped: &PhaseRaster, p: &RateParams) -> Result<Vec<SpikeTrain>> {
    p.validate()?;
    Ok(wrapped
        .values()
        .iter()
        .enumerate()
        .map(|(i, &phi)| rate_train(i, phase_rate(phi, p.r_max), p, i as u64))
        .collect())
}

/// Latency step for gradient `g`: `round(t_ref − Δt · g / g_max)` with `g` clamped to `±g_max`.
pub fn latency_step(g: f64, p: &TemporalParams) -> u32 {
    let g = g.clamp(-p.grad_max, p.grad_max);
    let t = (p.t_ref as f64 - p.delta_t as f64 * g / p.grad_max).round();
    t.max(0.0) as u32
}

/// Inverse of [`latency_step`] on the quantisation grid.
pub fn decode_latency(t: u32, p: &TemporalParams) -> f64 {
    (p.t_ref as f64 - t as f64) * p.grad_max / p.delta_t as f64
}

/// Exactly one spike per pixel.
pub fn encode_temporal(gradient: &[f64], p: &TemporalParams) -> Vec<SpikeTrain> {
    gradient.iter().enumerate().map(|(i, &g)| SpikeTrain::new(i, vec![latency_step(g, p)])).collect()
}

/// `floor(N_total · γ)`, with a 1e-9 guard against products like 0.29·100 landing just below an integer.
pub fn active_count(gamma: f64, n_total: usize) -> usize {
    ((n_total as f64 * gamma + 1e-9).floor() as usize).min(n_total)
}

/// `N_total` trains per pixel, pixel-major: neuron `pixel · N_total + j`.
/// The first `N_active` members fire at `active_rate`, the rest stay silent.
pub fn encode_population(
    coherence: &CoherenceRaster,
    pop: &PopulationParams,
    rate: &RateParams,
) -> Result<Vec<Vec<SpikeTrain>>> {
    rate.validate()?;
    if pop.n_total < 1 {
        return Err(Error::params("population needs at least one neuron"));
    }
    Ok(coherence
        .values()
        .iter()
        .enumerate()
        .map(|(px, &g)| {
            let active = active_count(g, pop.n_total);
            (0..pop.n_total)
                .map(|j| {
                    let id = px * pop.n_total + j;
                    let r = if j < active { pop.active_rate } else { 0.0 };
                    rate_train(id, r, rate, (1 << 40) + id as u64)
                })
                .collect()
        })
        .collect())
}

/// Encoded scene in channel-major layout.
///
/// Channel `c` of pixel `p` is neuron `c · MN + p` where `c` is 0 for phase,
/// 1 for the x-gradient, 2 for the coherence summary and, with
/// [`GradientMaps::XY`], 3 for the y-gradient. The coherence summary neuron
/// fires regularly at `active_rate · N_active / N_total`; the full population
/// is kept in `population`.
#[derive(Clone, Debug, PartialEq)]
pub struct EncodedScene {
    pub dims: Dims,
    pub t_sim: u32,
    pub channels: Vec<SpikeTrain>,
    pub population: Vec<Vec<SpikeTrain>>,
}

pub const PHASE_MAP: usize = 0;
pub const GRADIENT_MAP: usize = 1;
pub const COHERENCE_MAP: usize = 2;
pub const GRADIENT_Y_MAP: usize = 3;

impl EncodedScene {
    pub fn map_count(&self) -> usize {
        self.channels.len() / self.dims.len()
    }

    pub fn map_range(&self, map: usize) -> Range<usize> {
        let n = self.dims.len();
        map * n..(map + 1) * n
    }

    #[inline]
    pub fn channel_id(&self, map: usize, pixel: usize) -> usize {
        map * self.dims.len() + pixel
    }

    pub fn total_spikes(&self) -> usize {
        self.channels.iter().map(SpikeTrain::len).sum()
    }

    pub fn population_spikes(&self) -> usize {
        self.population.iter().flatten().map(SpikeTrain::len).sum()
    }

    /// Channel ids firing at each step, ascending within a step.
    pub fn spikes_by_step(&self) -> Vec<Vec<u32>> {
        let mut steps = vec![Vec::new(); self.t_sim as usize];
        for train in &self.channels {
            for &t in &train.times {
                steps[t as usize].push(train.neuron_id as u32);
            }
        }
        steps
    }
}

pub fn encode_scene(wrapped: &PhaseRaster, coherence: &CoherenceRaster, p: &EncodingParams) -> Result<EncodedScene> {
    p.validate()?;
    if wrapped.dims() != coherence.dims() {
        return Err(Error::raster("encode_scene: phase and coherence dimensions differ"));
    }
    let dims = wrapped.dims();
    let n = dims.len();
    let relabel = |map: usize, trains: Vec<SpikeTrain>| {
        trains.into_iter().map(move |t| SpikeTrain { neuron_id: map * n + t.neuron_id, times: t.times })
    };

    let mut channels = Vec::with_capacity(p.map_count() * n);
    channels.extend(relabel(PHASE_MAP, encode_rate(wrapped, &p.rate)?));
    let gx = wrapped_gradient(wrapped, Axis::X)?;
    channels.extend(relabel(GRADIENT_MAP, encode_temporal(&gx, &p.temporal)));

    let population = encode_population(coherence, &p.population, &p.rate)?;
    let summary: Vec<SpikeTrain> = coherence
        .values()
        .iter()
        .enumerate()
        .map(|(px, &g)| {
            let frac = active_count(g, p.population.n_total) as f64 / p.population.n_total as f64;
            rate_train(px, p.population.active_rate * frac, &p.rate, (2 << 40) + px as u64)
        })
        .collect();
    channels.extend(relabel(COHERENCE_MAP, summary));

    if p.gradient_maps == GradientMaps::XY {
        let gy = wrapped_gradient(wrapped, Axis::Y)?;
        channels.extend(relabel(GRADIENT_Y_MAP, encode_temporal(&gy, &p.temporal)));
    }
    Ok(EncodedScene { dims, t_sim: p.rate.t_sim, channels, population })
}

/// `neuron_id,timestep` rows in train order.
pub fn write_spike_csv<'a>(trains: impl IntoIterator<Item = &'a SpikeTrain>, mut out: impl Write) -> Result<()> {
    writeln!(out, "neuron_id,timestep")?;
    for tr in trains {
        for t in &tr.times {
            writeln!(out, "{},{}", tr.neuron_id, t)?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{synthesize_scene, SceneShape, SceneSpec};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::PI;

    fn single(phi: f64) -> PhaseRaster {
        PhaseRaster::constant(2, 2, phi, PhaseKind::Wrapped).unwrap()
    }

    #[test]
    fn gradient_of_constant_is_zero() {
        let g = wrapped_gradient(&single(1.0), Axis::X).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn gradient_wraps_large_jump() {
        let w = PhaseRaster::new(2, 2, vec![3.0, -3.0, 0.0, 0.0], PhaseKind::Wrapped).unwrap();
        let g = wrapped_gradient(&w, Axis::X).unwrap();
        assert_abs_diff_eq!(g[0], -6.0 + 2.0 * PI, epsilon = 1e-15);
        assert_abs_diff_eq!(g[0], 0.28319, epsilon = 1e-5);
        assert_eq!(g[1], 0.0);
        let gy = wrapped_gradient(&w, Axis::Y).unwrap();
        assert_abs_diff_eq!(gy[1], 3.0, epsilon = 1e-15);
        assert_eq!(gy[2], 0.0);
    }

    #[test]
    fn gradient_matches_true_difference_on_smooth_scene() {
        let spec = SceneSpec { shape: SceneShape::GaussianBump, amplitude: 9.0, width: 40, height: 30, ..Default::default() };
        let s = synthesize_scene(&spec).unwrap();
        let g = wrapped_gradient(&s.wrapped, Axis::X).unwrap();
        let d = s.absolute.dims();
        let mut checked = 0;
        for y in 0..d.height {
            for x in 0..d.width - 1 {
                let true_d = s.absolute.get(x + 1, y) - s.absolute.get(x, y);
                if true_d.abs() < PI {
                    assert_abs_diff_eq!(g[d.index(x, y)], true_d, epsilon = 1e-9);
                    checked += 1;
                }
            }
        }
        assert!(checked > 1000);
    }

    #[test]
    fn rate_extremes() {
        let p = RateParams::default();
        let t = encode_rate(&single(-PI + 1e-15), &p).unwrap();
        assert!(t.iter().all(|t| t.times.len() <= 1));
        assert_eq!(phase_rate(-PI, 100.0), 0.0);
        assert!(regular_train(0, 0.0, 1e-3, 100).is_empty());
        assert_eq!(phase_rate(PI, 100.0), 100.0);
        let full = encode_rate(&single(PI), &p).unwrap();
        assert_eq!(full[0].times, (1..10).map(|n| n * 10).collect::<Vec<u32>>());
    }

    #[test]
    fn rate_at_half_pi() {
        assert_abs_diff_eq!(phase_rate(PI / 2.0, 100.0), 75.0, epsilon = 1e-12);
        let t = encode_rate(&single(PI / 2.0), &RateParams::default()).unwrap();
        // oracle: enumerate n while floor(n / 0.075) < 100
        let mut expect = 0;
        let mut n = 1.0;
        while (n / 0.075f64).floor() < 100.0 {
            expect += 1;
            n += 1.0;
        }
        assert_eq!(t[0].len(), expect);
        assert!((7..=8).contains(&t[0].len()));
    }

    #[test]
    fn rate_rejects_bad_params() {
        let p = RateParams { r_max: 2000.0, ..Default::default() };
        assert!(encode_rate(&single(0.0), &p).is_err());
        let p = RateParams { t_sim: 0, ..Default::default() };
        assert!(p.validate().is_err());
    }

    #[test]
    fn poisson_is_seeded() {
        let p = RateParams { mode: RateMode::Poisson, rng_seed: 5, ..Default::default() };
        let a = encode_rate(&single(1.0), &p).unwrap();
        assert_eq!(a, encode_rate(&single(1.0), &p).unwrap());
        // per-neuron streams differ
        assert_ne!(a[0].times, a[1].times);
    }

    #[test]
    fn temporal_examples() {
        let p = TemporalParams::default();
        assert_eq!(latency_step(0.0, &p), 50);
        assert_eq!(latency_step(PI, &p), 10);
        assert_eq!(latency_step(-PI / 2.0, &p), 70);
        assert_eq!(latency_step(100.0, &p), 10);
        assert_eq!(latency_step(-100.0, &p), 90);
        let trains = encode_temporal(&[0.0, 1.0, -1.0], &p);
        assert!(trains.iter().all(|t| t.len() == 1));
    }

    #[test]
    fn temporal_window_validation() {
        let p = TemporalParams { t_ref: 30, delta_t: 40, ..Default::default() };
        assert!(p.validate(100).is_err());
        assert!(TemporalParams::default().validate(90).is_err());
        assert!(TemporalParams::default().validate(91).is_ok());
    }

    #[test]
    fn population_counts() {
        assert_eq!(active_count(0.0, 10), 0);
        assert_eq!(active_count(1.0, 10), 10);
        assert_eq!(active_count(0.73, 10), 7);
        let c = CoherenceRaster::new(2, 2, vec![0.0, 1.0, 0.73, 0.5]).unwrap();
        let pops = encode_population(&c, &PopulationParams::default(), &RateParams::default()).unwrap();
        let active: Vec<usize> = pops.iter().map(|p| p.iter().filter(|t| !t.is_empty()).count()).collect();
        assert_eq!(active, vec![0, 10, 7, 5]);
        // active members are the first ones
        assert!(pops[2][..7].iter().all(|t| !t.is_empty()));
        assert!(pops[2][7..].iter().all(|t| t.is_empty()));
        assert_eq!(pops[3][0].neuron_id, 30);
    }

    #[test]
    fn scene_layout_and_zero_scene() {
        let w = PhaseRaster::constant(4, 4, 0.0, PhaseKind::Wrapped).unwrap();
        let c = CoherenceRaster::uniform(4, 4, 1.0).unwrap();
        let p = EncodingParams::default();
        let e = encode_scene(&w, &c, &p).unwrap();
        assert_eq!(e.channels.len(), 48);
        assert_eq!(e.map_count(), 3);
        for (i, t) in e.channels.iter().enumerate() {
            assert_eq!(t.neuron_id, i);
        }
        let half = regular_train(0, 50.0, 1e-3, 100).times;
        for px in 0..16 {
            assert_eq!(e.channels[e.channel_id(PHASE_MAP, px)].times, half);
            assert_eq!(e.channels[e.channel_id(GRADIENT_MAP, px)].times, vec![50]);
            assert_eq!(e.channels[e.channel_id(COHERENCE_MAP, px)].times, regular_train(0, 100.0, 1e-3, 100).times);
        }
        assert_eq!(e, encode_scene(&w, &c, &p).unwrap());
        let xy = encode_scene(&w, &c, &EncodingParams { gradient_maps: GradientMaps::XY, ..p }).unwrap();
        assert_eq!(xy.channels.len(), 64);
    }

    #[test]
    fn scene_dimension_mismatch() {
        let w = PhaseRaster::constant(4, 4, 0.0, PhaseKind::Wrapped).unwrap();
        let c = CoherenceRaster::uniform(4, 3, 1.0).unwrap();
        assert!(matches!(encode_scene(&w, &c, &EncodingParams::default()), Err(Error::InvalidRaster(_))));
    }

    #[test]
    fn spike_csv() {
        let mut buf = Vec::new();
        write_spike_csv(&[SpikeTrain::new(3, vec![1, 4])], &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "neuron_id,timestep\n3,1\n3,4\n");
    }

    proptest! {
        #[test]
        fn rate_is_affine_in_phase(a in -PI..PI, b in -PI..PI) {
            let d = phase_rate(a, 100.0) - phase_rate(b, 100.0);
            prop_assert!((d - 100.0 * ((a + PI).abs() - (b + PI).abs()) / (2.0 * PI)).abs() < 1e-12);
        }

        #[test]
        fn latency_is_monotone_and_injective(g1 in -PI..PI, g2 in -PI..PI) {
            let p = TemporalParams::default();
            let (t1, t2) = (latency_step(g1, &p), latency_step(g2, &p));
            if g1 < g2 { prop_assert!(t1 >= t2); }
            if (g1 - g2).abs() >= p.grad_max / p.delta_t as f64 * 1.000001 { prop_assert_ne!(t1, t2); }
        }

        #[test]
        fn population_monotone_in_coherence(g1 in 0.0f64..=1.0, g2 in 0.0f64..=1.0, n in 1usize..50) {
            if g1 <= g2 { prop_assert!(active_count(g1, n) <= active_count(g2, n)); }
        }

        #[test]
        fn scene_spikes_monotone_in_coherence(g1 in 0.0f64..=1.0, g2 in 0.0f64..=1.0, phi in -3.0f64..3.0) {
            let (lo, hi) = if g1 <= g2 { (g1, g2) } else { (g2, g1) };
            let w = PhaseRaster::constant(3, 3, phi, PhaseKind::Wrapped).unwrap();
            let p = EncodingParams::default();
            let a = encode_scene(&w, &CoherenceRaster::uniform(3, 3, lo).unwrap(), &p).unwrap();
            let b = encode_scene(&w, &CoherenceRaster::uniform(3, 3, hi).unwrap(), &p).unwrap();
            prop_assert!(a.total_spikes() <= b.total_spikes());
            prop_assert!(a.population_spikes() <= b.population_spikes());
        }

        #[test]
        fn scene_spikes_monotone_in_phase(p1 in -3.1f64..3.1, p2 in -3.1f64..3.1) {
            let (lo, hi) = if p1 <= p2 { (p1, p2) } else { (p2, p1) };
            let c = CoherenceRaster::uniform(3, 3, 0.5).unwrap();
            let p = EncodingParams::default();
            let a = encode_scene(&PhaseRaster::constant(3, 3, lo, PhaseKind::Wrapped).unwrap(), &c, &p).unwrap();
            let b = encode_scene(&PhaseRaster::constant(3, 3, hi, PhaseKind::Wrapped).unwrap(), &c, &p).unwrap();
            prop_assert!(a.total_spikes() <= b.total_spikes());
        }

        #[test]
        fn deterministic_count_within_one(phi in -PI..PI, t_sim in 1u32..400, r_max in 1.0f64..1000.0) {
            let p = RateParams { r_max, t_sim, ..Default::default() };
            let t = encode_rate(&single(phi), &p).unwrap();
            let expect = phase_rate(phi, r_max) * p.dt * t_sim as f64;
            prop_assert!((t[0].len() as f64 - expect).abs() <= 1.0);
            prop_assert!(t[0].times.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(t[0].times.iter().all(|&s| s < t_sim));
        }
    }
}
