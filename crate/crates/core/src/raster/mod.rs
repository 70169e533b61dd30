//! Grid data types for wrapped/absolute phase, coherence and wrap counts,
//! plus the scene generator, classical oracle, metrics and file formats.

mod io;
mod metrics;
mod oracle;
mod scene;

pub use io::{encode_raster, read_raster, write_csv, write_pgm, write_raster, write_raster_as, AnyRaster, Dtype, RasterKind};
pub use metrics::{evaluate, MetricsReport};
pub use oracle::{
    detect_residues, gradient_energy, itoh_unwrap, itoh_unwrap_ordered, itoh_wrap_counts, IntegrationOrder,
    Residue,
};
pub use scene::{synthesize_scene, vortex_phase, CoherenceProfile, Scene, SceneShape, SceneSpec};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const TWO_PI: f64 = 2.0 * PI;

/// Width and height of a grid in pixels.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dims {
    pub width: usize,
    pub height: usize,
}

impl Dims {
    pub fn new(width: usize, height: usize) -> Result<Self> {
        if width < 2 || height < 2 {
            return Err(Error::raster(format!("grid must be at least 2x2, got {width}x{height}")));
        }
        width
            .checked_mul(height)
            .ok_or_else(|| Error::raster(format!("{width}x{height} overflows")))?;
        Ok(Dims { width, height })
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    #[inline]
    pub fn coords(&self, index: usize) -> (usize, usize) {
        (index % self.width, index / self.width)
    }

    fn expect(&self, other: Dims, what: &str) -> Result<()> {
        if *self != other {
            return Err(Error::raster(format!(
                "{what}: dimension mismatch {}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )));
        }
        Ok(())
    }
}

/// Wrapped-difference operator `W(a) = a - 2π·round(a/2π)`, ties to even.
#[inline]
pub fn wrap_diff(a: f64) -> f64 {
    a - TWO_PI * (a / TWO_PI).round_ties_even()
}

/// Number of whole cycles `W` removes from `a`.
#[inline]
pub(crate) fn wrap_diff_cycles(a: f64) -> i64 {
    (a / TWO_PI).round_ties_even() as i64
}

/// Wraps a single value into `(-π, π]`, returning the wrapped value and the
/// integer `k` with `value = wrapped + 2πk`.
pub fn wrap_value(value: f64) -> (f64, i64) {
    let mut k = ((value - PI) / TWO_PI).ceil();
    let mut w = value - TWO_PI * k;
    if w > PI {
        w -= TWO_PI;
        k += 1.0;
    } else if w <= -PI {
        w += TWO_PI;
        k -= 1.0;
    }
    (w, k as i64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseKind {
    Wrapped,
    Absolute,
}

/// Row-major grid of phase values in radians.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseRaster {
    dims: Dims,
    values: Vec<f64>,
    kind: PhaseKind,
}

impl PhaseRaster {
    pub fn new(width: usize, height: usize, values: Vec<f64>, kind: PhaseKind) -> Result<Self> {
        let dims = Dims::new(width, height)?;
        if values.len() != dims.len() {
            return Err(Error::raster(format!(
                "expected {} values for {width}x{height}, got {}",
                dims.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::raster(format!("non-finite phase at index {i}")));
        }
        if kind == PhaseKind::Wrapped {
            if let Some(i) = values.iter().position(|&v| !(v > -PI && v <= PI)) {
                return Err(Error::raster(format!(
                    "wrapped phase {} at index {i} outside (-pi, pi]",
                    values[i]
                )));
            }
        }
        Ok(PhaseRaster { dims, values, kind })
    }

    pub fn from_fn(width: usize, height: usize, kind: PhaseKind, f: impl Fn(usize, usize) -> f64) -> Result<Self> {
        let values = (0..height).flat_map(|y| (0..width).map(move |x| (x, y))).map(|(x, y)| f(x, y)).collect();
        Self::new(width, height, values, kind)
    }

    pub fn constant(width: usize, height: usize, value: f64, kind: PhaseKind) -> Result<Self> {
        Self::new(width, height, vec![value; width * height], kind)
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn width(&self) -> usize {
        self.dims.width
    }

    pub fn height(&self) -> usize {
        self.dims.height
    }

    pub fn kind(&self) -> PhaseKind {
        self.kind
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[self.dims.index(x, y)]
    }

    /// Same values tagged as absolute phase.
    pub fn as_absolute(&self) -> PhaseRaster {
        PhaseRaster { kind: PhaseKind::Absolute, ..self.clone() }
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Absolute phase `φ_w + 2πk` for the given wrap counts.
    pub fn reconstruct(&self, k: &WrapCountRaster) -> Result<PhaseRaster> {
        self.dims.expect(k.dims(), "reconstruct")?;
        let values = self.values.iter().zip(k.values()).map(|(&w, &k)| w + TWO_PI * k as f64).collect();
        PhaseRaster::new(self.width(), self.height(), values, PhaseKind::Absolute)
    }
}

/// Row-major grid of coherence magnitudes in `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoherenceRaster {
    dims: Dims,
    values: Vec<f64>,
}

impl CoherenceRaster {
    pub fn new(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        let dims = Dims::new(width, height)?;
        if values.len() != dims.len() {
            return Err(Error::raster(format!(
                "expected {} coherence values, got {}",
                dims.len(),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|&g| !(0.0..=1.0).contains(&g)) {
            return Err(Error::raster(format!("coherence {} at index {i} outside [0, 1]", values[i])));
        }
        Ok(CoherenceRaster { dims, values })
    }

    pub fn uniform(width: usize, height: usize, gamma: f64) -> Result<Self> {
        Self::new(width, height, vec![gamma; width * height])
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn width(&self) -> usize {
        self.dims.width
    }

    pub fn height(&self) -> usize {
        self.dims.height
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.values[self.dims.index(x, y)]
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }
}

/// Row-major grid of integer wrap counts `k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WrapCountRaster {
    dims: Dims,
    values: Vec<i32>,
}

impl WrapCountRaster {
    pub fn new(width: usize, height: usize, values: Vec<i32>) -> Result<Self> {
        let dims = Dims::new(width, height)?;
        if values.len() != dims.len() {
            return Err(Error::raster(format!(
                "expected {} wrap counts, got {}",
                dims.len(),
                values.len()
            )));
        }
        Ok(WrapCountRaster { dims, values })
    }

    /// Like [`WrapCountRaster::new`] but rejects any `|k| > bound`.
    pub fn bounded(width: usize, height: usize, values: Vec<i32>, bound: u32) -> Result<Self> {
        if let Some(k) = values.iter().find(|k| k.unsigned_abs() > bound) {
            return Err(Error::raster(format!("wrap count {k} outside +/-{bound}")));
        }
        Self::new(width, height, values)
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::new(width, height, vec![0; width * height])
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn width(&self) -> usize {
        self.dims.width
    }

    pub fn height(&self) -> usize {
        self.dims.height
    }

    pub fn values(&self) -> &[i32] {
        &self.values
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> i32 {
        self.values[self.dims.index(x, y)]
    }

    pub fn max_abs(&self) -> u32 {
        self.values.iter().map(|k| k.unsigned_abs()).max().unwrap_or(0)
    }
}

/// Wraps an absolute phase raster into `(-π, π]`.
pub fn wrap(phase_abs: &PhaseRaster) -> Result<PhaseRaster> {
    Ok(wrap_with_counts(phase_abs)?.0)
}

/// Wraps an absolute raster and also returns the exact wrap counts.
pub fn wrap_with_counts(phase_abs: &PhaseRaster) -> Result<(PhaseRaster, WrapCountRaster)> {
    if phase_abs.kind != PhaseKind::Absolute {
        return Err(Error::raster("wrap expects an absolute phase raster"));
    }
    let (values, counts): (Vec<f64>, Vec<i32>) = phase_abs
        .values
        .iter()
        .map(|&a| {
            let (w, k) = wrap_value(a);
            (w, k as i32)
        })
        .unzip();
    let dims = phase_abs.dims;
    Ok((
        PhaseRaster::new(dims.width, dims.height, values, PhaseKind::Wrapped)?,
        WrapCountRaster::new(dims.width, dims.height, counts)?,
    ))
}

/// Neumaier compensated sum.
#[derive(Clone, Copy, Debug, Default)]
pub(crate) struct CompensatedSum {
    sum: f64,
    c: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.c
    }
}
