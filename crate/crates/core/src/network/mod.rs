//! Three-layer unwrapping network: encoding sources → LIF processing layer
//! with coherence-gated lateral connections → K-way LIF decision layer.
//!
//! Neuron numbering in a [`SpikeRecord`](crate::lif::SpikeRecord) of a run:
//! encoders `[0, cMN)` in channel-major order, processing `[cMN, (c+1)MN)`,
//! decision `(c+1)MN + pixel·K + choice`.

mod infer;
mod snut;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::encoding::{EncodingParams, GradientMaps, COHERENCE_MAP, GRADIENT_MAP, GRADIENT_Y_MAP, PHASE_MAP};
use crate::error::{Error, Result};
use crate::lif::{LifParams, SynapseTable};
use crate::raster::{CoherenceRaster, Dims};

pub use infer::{
    decision_histogram, infer, infer_for_learning, DecisionHistogram, DecisionTrace, Inference, InferMode,
    LearningTrace, PixelDecision,
};
pub use snut::{decode_topology, encode_topology, read_topology, write_topology};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoherenceGate {
    /// `h = sqrt(γ_i·γ_j)`.
    #[default]
    GeometricMean,
    /// `h = min(γ_i, γ_j)`.
    Min,
}

impl CoherenceGate {
    #[inline]
    pub fn apply(self, gi: f64, gj: f64) -> f64 {
        match self {
            CoherenceGate::GeometricMean => (gi * gj).sqrt(),
            CoherenceGate::Min => gi.min(gj),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LateralParams {
    pub w0: f64,
    /// Kernel width in pixels.
    pub sigma: f64,
    /// Euclidean cutoff in pixels.
    pub cutoff_radius: f64,
    pub h_mode: CoherenceGate,
}

impl Default for LateralParams {
    fn default() -> Self {
        LateralParams { w0: 0.1, sigma: 1.0, cutoff_radius: 3.0, h_mode: CoherenceGate::GeometricMean }
    }
}

impl LateralParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::params("lateral sigma must be positive"));
        }
        if !(self.cutoff_radius >= 1.0 && self.cutoff_radius.is_finite()) {
            return Err(Error::params("lateral cutoff_radius must be at least 1"));
        }
        if !self.w0.is_finite() {
            return Err(Error::params("lateral w0 must be finite"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionRule {
    /// Earliest first spike inside the decision window wins.
    #[default]
    FirstSpike,
    /// Most spikes inside the decision window wins.
    SpikeCount,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Traversal {
    #[default]
    Raster,
    CoherenceDescending,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecisionParams {
    /// Candidate wrap counts, strictly increasing, containing 0.
    pub k_values: Vec<i32>,
    /// Steps during which decision spikes count.
    pub decision_window: u32,
    pub rule: DecisionRule,
    /// Chebyshev radius of processing neurons feeding each decision neuron.
    pub radius: usize,
    /// Propagation bias per agreeing neighbour, in units of the decision threshold.
    pub w_prop: f64,
    /// Bias saturation, in units of the decision threshold.
    pub w_prop_max: f64,
    pub traversal: Traversal,
}

impl Default for DecisionParams {
    fn default() -> Self {
        DecisionParams {
            k_values: vec![-2, -1, 0, 1, 2],
            decision_window: 100,
            rule: DecisionRule::FirstSpike,
            radius: 1,
            w_prop: 0.5,
            w_prop_max: 2.0,
            traversal: Traversal::Raster,
        }
    }
}

impl DecisionParams {
    pub fn k(&self) -> usize {
        self.k_values.len()
    }

    pub fn validate(&self, cutoff_radius: f64) -> Result<()> {
        if self.k_values.is_empty() || !self.k_values.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::params("k_values must be non-empty and strictly increasing"));
        }
        if !self.k_values.contains(&0) {
            return Err(Error::params("k_values must contain 0"));
        }
        if self.decision_window < 1 {
            return Err(Error::params("decision_window must be at least one step"));
        }
        if (self.radius as f64) > cutoff_radius {
            return Err(Error::params("decision radius must lie inside the lateral cutoff"));
        }
        if !(self.w_prop >= 0.0 && self.w_prop_max >= 0.0 && self.w_prop.is_finite() && self.w_prop_max.is_finite()) {
            return Err(Error::params("propagation gains must be finite and non-negative"));
        }
        Ok(())
    }

    /// Index of `k` in `k_values`.
    pub fn index_of(&self, k: i32) -> Option<usize> {
        self.k_values.binary_search(&k).ok()
    }

    pub fn zero_index(&self) -> usize {
        self.index_of(0).expect("validated k_values contain 0")
    }
}

/// Initial weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitParams {
    /// Upper bound of the uniform draw before fan-in normalisation, and a cap
    /// on every normalised weight.
    pub w_init_max: f64,
    /// Total encoder→processing weight per processing neuron.
    pub i_target: f64,
    /// Fractions of `i_target` given to the phase, gradient and coherence maps.
    pub phase_share: f64,
    pub gradient_share: f64,
    pub coherence_share: f64,
    /// Chebyshev radius of each processing neuron's receptive field.
    pub receptive_radius: usize,
    /// Processing→decision weights of the `k = 0` neuron.
    pub zero_own: f64,
    pub zero_neighbor: f64,
    /// Upper bound of the uniform draw for every other decision neuron.
    pub other_max: f64,
}

impl Default for InitParams {
    fn default() -> Self {
        InitParams {
            w_init_max: 1.0,
            i_target: 3.7,
            phase_share: 0.7,
            gradient_share: 0.1,
            coherence_share: 0.2,
            receptive_radius: 1,
            zero_own: 0.6,
            zero_neighbor: 0.3,
            other_max: 0.1,
        }
    }
}

impl InitParams {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.w_init_max,
            self.i_target,
            self.phase_share,
            self.gradient_share,
            self.coherence_share,
            self.zero_own,
            self.zero_neighbor,
            self.other_max,
        ];
        if all.iter().any(|v| !(v.is_finite() && *v >= 0.0)) || self.w_init_max == 0.0 {
            return Err(Error::params("initialisation values must be finite and non-negative"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkParams {
    pub encoding: EncodingParams,
    pub processing: LifParams,
    pub decision_lif: LifParams,
    pub lateral: LateralParams,
    pub decision: DecisionParams,
    pub init: InitParams,
    /// Upper bound on `M·N·K`.
    pub max_decision_neurons: usize,
}

impl Default for NetworkParams {
    fn default() -> Self {
        NetworkParams {
            encoding: EncodingParams::default(),
            processing: LifParams { v_threshold: 0.2, ..LifParams::default() },
            // slow integrator so evidence accumulates over the whole window
            decision_lif: LifParams { tau_m: 0.1, v_threshold: 0.15, ..LifParams::default() },
            lateral: LateralParams::default(),
            decision: DecisionParams::default(),
            init: InitParams::default(),
            max_decision_neurons: 1 << 24,
        }
    }
}

impl NetworkParams {
    pub fn validate(&self) -> Result<()> {
        self.encoding.validate()?;
        self.processing.validate()?;
        self.decision_lif.validate()?;
        self.lateral.validate()?;
        self.decision.validate(self.lateral.cutoff_radius)?;
        self.init.validate()?;
        if self.processing.dt != self.encoding.rate.dt || self.decision_lif.dt != self.encoding.rate.dt {
            return Err(Error::params("encoder and LIF layers must share dt"));
        }
        Ok(())
    }

    pub fn t_sim(&self) -> u32 {
        self.encoding.rate.t_sim
    }
}

/// Layer sizes and weight tables of one network instance.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkTopology {
    pub dims: Dims,
    pub params: NetworkParams,
    /// Encoder channel → processing neuron.
    pub enc_proc: SynapseTable,
    /// Processing → decision, decision neuron `pixel·K + choice`.
    pub proc_dec: SynapseTable,
    /// Lateral kernel at unit coherence; scaled by `h(γ_i, γ_j)` per scene.
    pub lateral: SynapseTable,
    pub trained_epochs: u32,
    pub rng_seed: u64,
}

impl NetworkTopology {
    pub fn map_count(&self) -> usize {
        self.params.encoding.map_count()
    }

    pub fn k(&self) -> usize {
        self.params.decision.k()
    }

    pub fn encoding_size(&self) -> usize {
        self.map_count() * self.dims.len()
    }

    pub fn processing_size(&self) -> usize {
        self.dims.len()
    }

    pub fn decision_size(&self) -> usize {
        self.k() * self.dims.len()
    }

    pub fn layer_sizes(&self) -> [usize; 3] {
        [self.encoding_size(), self.processing_size(), self.decision_size()]
    }

    pub fn neuron_count(&self) -> usize {
        self.layer_sizes().iter().sum()
    }

    pub fn decision_neuron(&self, pixel: usize, choice: usize) -> usize {
        pixel * self.k() + choice
    }

    /// Lateral table for a concrete scene: every kernel weight times `h(γ_i, γ_j)`.
    pub fn gated_lateral(&self, coherence: &CoherenceRaster) -> Result<SynapseTable> {
        if coherence.dims() != self.dims {
            return Err(Error::raster("coherence does not match the topology"));
        }
        let g = coherence.values();
        let h = self.params.lateral.h_mode;
        let mut t = self.lateral.clone();
        let gated: Vec<f64> =
            (0..t.len()).map(|s| t.weight(s) * h.apply(g[t.pre(s)], g[t.post(s)])).collect();
        t.weights_mut().copy_from_slice(&gated);
        Ok(t)
    }

    /// Squared L2 norm of the learnable (feedforward) weights.
    pub fn learnable_norm_sq(&self) -> f64 {
        self.enc_proc.weights().iter().chain(self.proc_dec.weights()).map(|w| w * w).sum()
    }

    /// Relabels pixels: `perm[old] = new`. Weights follow their neurons.
    pub fn remap_pixels(&self, perm: &[usize]) -> Result<NetworkTopology> {
        let n = self.dims.len();
        let mut seen = vec![false; n];
        if perm.len() != n || perm.iter().any(|&p| p >= n || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::params("remap_pixels needs a permutation of the pixel indices"));
        }
        let k = self.k();
        let enc = |id: usize| (id / n) * n + perm[id % n];
        let dec = |id: usize| perm[id / k] * k + id % k;
        let remap = |t: &SynapseTable, f: &dyn Fn(usize) -> usize, g: &dyn Fn(usize) -> usize| {
            SynapseTable::from_entries(t.n_pre(), t.n_post(), t.entries().map(|(a, b, w)| (f(a), g(b), w)).collect())
        };
        Ok(NetworkTopology {
            dims: self.dims,
            params: self.params.clone(),
            enc_proc: remap(&self.enc_proc, &enc, &|p| perm[p])?,
            proc_dec: remap(&self.proc_dec, &|p| perm[p], &dec)?,
            lateral: remap(&self.lateral, &|p| perm[p], &|p| perm[p])?,
            trained_epochs: self.trained_epochs,
            rng_seed: self.rng_seed,
        })
    }

    /// Hex SHA-256 of the SNUT encoding.
    pub fn hash(&self) -> Result<String> {
        let bytes = encode_topology(self)?;
        Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
    }
}

fn neighborhood(d: Dims, px: usize, radius: usize) -> impl Iterator<Item = usize> {
    let (x, y) = d.coords(px);
    let (x0, x1) = (x.saturating_sub(radius), (x + radius).min(d.width - 1));
    let (y0, y1) = (y.saturating_sub(radius), (y + radius).min(d.height - 1));
    (y0..=y1).flat_map(move |yy| (x0..=x1).map(move |xx| d.index(xx, yy)))
}

/// Lateral table: `w_ij = w0·exp(−d²/2σ²)·h(γ_i, γ_j)` for `0 < d ≤ cutoff`.
pub fn build_lateral_weights(coherence: &CoherenceRaster, p: &LateralParams) -> Result<SynapseTable> {
    p.validate()?;
    let d = coherence.dims();
    let g = coherence.values();
    let r = p.cutoff_radius.floor() as i64;
    let mut entries = Vec::new();
    for i in 0..d.len() {
        let (xi, yi) = d.coords(i);
        for dy in -r..=r {
            for dx in -r..=r {
                let (xj, yj) = (xi as i64 + dx, yi as i64 + dy);
                if (dx, dy) == (0, 0) || xj < 0 || yj < 0 || xj >= d.width as i64 || yj >= d.height as i64 {
                    continue;
                }
                let d2 = (dx * dx + dy * dy) as f64;
                if d2.sqrt() > p.cutoff_radius {
                    continue;
                }
                let j = d.index(xj as usize, yj as usize);
                let w = p.w0 * (-d2 / (2.0 * p.sigma * p.sigma)).exp() * p.h_mode.apply(g[i], g[j]);
                entries.push((i, j, w));
            }
        }
    }
    SynapseTable::from_entries(d.len(), d.len(), entries)
}

/// Builds an initialised network for an `width × height` grid.
pub fn build_network(width: usize, height: usize, params: &NetworkParams, rng_seed: u64) -> Result<NetworkTopology> {
    params.validate()?;
    let dims = Dims::new(width, height)?;
    let n = dims.len();
    let k = params.decision.k();
    let requested = n.checked_mul(k).unwrap_or(usize::MAX);
    if requested > params.max_decision_neurons {
        return Err(Error::Capacity { requested, max: params.max_decision_neurons });
    }
    let maps = params.encoding.map_count();
    let ip = &params.init;
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);

    let shares: Vec<(usize, f64)> = match params.encoding.gradient_maps {
        GradientMaps::X => {
            vec![(PHASE_MAP, ip.phase_share), (GRADIENT_MAP, ip.gradient_share), (COHERENCE_MAP, ip.coherence_share)]
        }
        GradientMaps::XY => vec![
            (PHASE_MAP, ip.phase_share),
            (GRADIENT_MAP, ip.gradient_share / 2.0),
            (COHERENCE_MAP, ip.coherence_share),
            (GRADIENT_Y_MAP, ip.gradient_share / 2.0),
        ],
    };
    let mut enc = Vec::new();
    for px in 0..n {
        let field: Vec<usize> = neighborhood(dims, px, ip.receptive_radius).collect();
        for &(map, share) in &shares {
            let draws: Vec<f64> = field.iter().map(|_| rng.random_range(0.0..=ip.w_init_max)).collect();
            let sum: f64 = draws.iter().sum();
            let target = share * ip.i_target;
            for (&q, &w) in field.iter().zip(&draws) {
                let w = if sum > 0.0 { w * target / sum } else { target / field.len() as f64 };
                // small fields at borders would otherwise start above the learnable range
                enc.push((map * n + q, px, w.min(ip.w_init_max)));
            }
        }
    }

    let zero = params.decision.zero_index();
    let mut dec = Vec::new();
    for px in 0..n {
        for q in neighborhood(dims, px, params.decision.radius) {
            for c in 0..k {
                let w = if c == zero {
                    if q == px {
                        ip.zero_own
                    } else {
                        ip.zero_neighbor
                    }
                } else {
                    rng.random_range(0.0..=ip.other_max)
                };
                dec.push((q, px * k + c, w));
            }
        }
    }

    let lateral = build_lateral_weights(&CoherenceRaster::uniform(width, height, 1.0)?, &params.lateral)?;
    Ok(NetworkTopology {
        dims,
        params: params.clone(),
        enc_proc: SynapseTable::from_entries(maps * n, n, enc)?,
        proc_dec: SynapseTable::from_entries(n, k * n, dec)?,
        lateral,
        trained_epochs: 0,
        rng_seed,
    })
}
