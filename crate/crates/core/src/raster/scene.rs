use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{wrap_value, CoherenceRaster, PhaseKind, PhaseRaster, WrapCountRaster};
use crate::error::{Error, Result};

const SHAPE_STREAM: u64 = 0;
const COHERENCE_STREAM: u64 = 1;
const NOISE_STREAM: u64 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SceneShape {
    GaussianBump,
    LinearRamp,
    SuperposedBumps,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CoherenceProfile {
    Uniform,
    Radial,
    Patchy,
}

/// Recipe for a synthetic interferogram.
///
/// * `gaussian_bump`: `amplitude · exp(-r²/2s²)` centred on the grid, `s = min(w, h)/6`.
/// * `linear_ramp`: `ramp_slope · x`.
/// * `superposed_bumps`: three seeded bumps of either sign plus `ramp_slope · x`.
///
/// Coherence is `coherence_level` everywhere (`uniform`), decays as a Gaussian
/// of the distance to the centre (`radial`), or has three seeded low-coherence
/// blobs cut into it (`patchy`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub width: usize,
    pub height: usize,
    pub shape: SceneShape,
    pub amplitude: f64,
    pub ramp_slope: f64,
    pub coherence_profile: CoherenceProfile,
    pub coherence_level: f64,
    pub rng_seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            width: 64,
            height: 64,
            shape: SceneShape::GaussianBump,
            amplitude: 10.0,
            ramp_slope: 0.0,
            coherence_profile: CoherenceProfile::Uniform,
            coherence_level: 1.0,
            rng_seed: 0,
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        if self.width < 2 || self.height < 2 {
            return Err(Error::InvalidSpec(format!(
                "grid {}x{} is below the 2x2 minimum",
                self.width, self.height
            )));
        }
        if self.width.checked_mul(self.height).is_none() {
            return Err(Error::InvalidSpec("grid size overflows".into()));
        }
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::InvalidSpec(format!("amplitude {} must be finite and >= 0", self.amplitude)));
        }
        if !self.ramp_slope.is_finite() {
            return Err(Error::InvalidSpec("ramp slope must be finite".into()));
        }
        if !(0.0..=1.0).contains(&self.coherence_level) {
            return Err(Error::InvalidSpec(format!(
                "coherence level {} outside [0, 1]",
                self.coherence_level
            )));
        }
        Ok(())
    }
}

/// Output of [`synthesize_scene`]: the noiseless absolute phase, the noisy
/// wrapped observation, its coherence, and the exact wrap counts of the
/// noiseless field.
#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub absolute: PhaseRaster,
    pub wrapped: PhaseRaster,
    pub coherence: CoherenceRaster,
    pub truth_k: WrapCountRaster,
}

/// Phase standard deviation for a single-look pixel of coherence `gamma`,
/// clamped to `[0, π/2]`. Returns `None` for `gamma == 0`, which gets uniform noise.
pub fn phase_noise_sigma(gamma: f64) -> Option<f64> {
    if gamma <= 0.0 {
        return None;
    }
    let s = ((1.0 - gamma * gamma) / (2.0 * gamma * gamma)).max(0.0).sqrt();
    Some(s.clamp(0.0, PI / 2.0))
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

struct Bump {
    cx: f64,
    cy: f64,
    sigma: f64,
    amp: f64,
}

impl Bump {
    fn at(&self, x: f64, y: f64) -> f64 {
        let r2 = (x - self.cx).powi(2) + (y - self.cy).powi(2);
        self.amp * (-r2 / (2.0 * self.sigma * self.sigma)).exp()
    }
}

fn absolute_field(spec: &SceneSpec) -> Vec<f64> {
    let (w, h) = (spec.width, spec.height);
    let short = w.min(h) as f64;
    let bumps: Vec<Bump> = match spec.shape {
        SceneShape::GaussianBump => vec![Bump {
            cx: (w as f64 - 1.0) / 2.0,
            cy: (h as f64 - 1.0) / 2.0,
            sigma: (short / 6.0).max(1.0),
            amp: spec.amplitude,
        }],
        SceneShape::SuperposedBumps => {
            let mut rng = rng_for(spec.rng_seed, SHAPE_STREAM);
            (0..3)
                .map(|_| {
                    let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
                    Bump {
                        cx: rng.random_range(0.0..w as f64),
                        cy: rng.random_range(0.0..h as f64),
                        sigma: rng.random_range(short / 10.0..short / 4.0).max(1.0),
                        amp: sign * spec.amplitude * rng.random_range(0.5..1.0),
                    }
                })
                .collect()
        }
        SceneShape::LinearRamp => Vec::new(),
    };
    let with_ramp = !matches!(spec.shape, SceneShape::GaussianBump);
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (xf, yf) = (x as f64, y as f64);
            let mut v: f64 = bumps.iter().map(|b| b.at(xf, yf)).sum();
            if with_ramp {
                v += spec.ramp_slope * xf;
            }
            out.push(v);
        }
    }
    out
}

fn coherence_field(spec: &SceneSpec) -> Vec<f64> {
    let (w, h) = (spec.width, spec.height);
    let level = spec.coherence_level;
    let cx = (w as f64 - 1.0) / 2.0;
    let cy = (h as f64 - 1.0) / 2.0;
    let r_max = (cx * cx + cy * cy).sqrt().max(1.0);
    let blobs: Vec<Bump> = if spec.coherence_profile == CoherenceProfile::Patchy {
        let mut rng = rng_for(spec.rng_seed, COHERENCE_STREAM);
        let short = w.min(h) as f64;
        (0..3)
            .map(|_| Bump {
                cx: rng.random_range(0.0..w as f64),
                cy: rng.random_range(0.0..h as f64),
                sigma: rng.random_range(short / 14.0..short / 7.0).max(0.75),
                amp: 0.9,
            })
            .collect()
    } else {
        Vec::new()
    };
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        for x in 0..w {
            let (xf, yf) = (x as f64, y as f64);
            let g = match spec.coherence_profile {
                CoherenceProfile::Uniform => level,
                CoherenceProfile::Radial => {
                    let r = ((xf - cx).powi(2) + (yf - cy).powi(2)).sqrt() / r_max;
                    level * (-2.0 * r * r).exp()
                }
                CoherenceProfile::Patchy => blobs.iter().fold(level, |g, b| g * (1.0 - b.at(xf, yf))),
            };
            out.push(g.clamp(0.0, 1.0));
        }
    }
    out
}

/// Builds a synthetic scene. Deterministic in `spec` (including `rng_seed`).
pub fn synthesize_scene(spec: &SceneSpec) -> Result<Scene> {
    spec.validate()?;
    let (w, h) = (spec.width, spec.height);
    let abs_values = absolute_field(spec);
    let coh_values = coherence_field(spec);

    let mut rng = rng_for(spec.rng_seed, NOISE_STREAM);
    let mut wrapped = Vec::with_capacity(w * h);
    let mut truth = Vec::with_capacity(w * h);
    for (&a, &g) in abs_values.iter().zip(&coh_values) {
        let noise = match phase_noise_sigma(g) {
            None => {
                // (-π, π]
                let u: f64 = rng.random();
                PI - u * 2.0 * PI
            }
            Some(s) if s > 0.0 => Normal::new(0.0, s).expect("sigma is finite").sample(&mut rng),
            Some(_) => 0.0,
        };
        let (_, k) = wrap_value(a);
        truth.push(k as i32);
        wrapped.push(wrap_value(a + noise).0);
    }

    Ok(Scene {
        absolute: PhaseRaster::new(w, h, abs_values, PhaseKind::Absolute)?,
        wrapped: PhaseRaster::new(w, h, wrapped, PhaseKind::Wrapped)?,
        coherence: CoherenceRaster::new(w, h, coh_values)?,
        truth_k: WrapCountRaster::new(w, h, truth)?,
    })
}

/// Wrapped phase of a single vortex `atan2(y - cy, x - cx)`.
pub fn vortex_phase(width: usize, height: usize, cx: f64, cy: f64) -> Result<PhaseRaster> {
    PhaseRaster::from_fn(width, height, PhaseKind::Wrapped, |x, y| {
        let a = (y as f64 - cy).atan2(x as f64 - cx);
        if a <= -PI {
            PI
        } else {
            a
        }
    })
}
