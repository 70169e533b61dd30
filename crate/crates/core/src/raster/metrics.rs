use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{CoherenceRaster, WrapCountRaster, TWO_PI};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub pixels: usize,
    pub accuracy: f64,
    /// Accuracy over pixels with `γ >= mask_threshold`; `None` when no pixel qualifies.
    pub masked_accuracy: Option<f64>,
    pub masked_pixels: usize,
    pub mask_threshold: f64,
    /// RMSE of `φ_w + 2πk` against the truth, in radians.
    pub rmse: f64,
    /// `confusion[truth][predicted] = count`.
    pub confusion: BTreeMap<i32, BTreeMap<i32, usize>>,
}

pub fn evaluate(
    predicted_k: &WrapCountRaster,
    truth_k: &WrapCountRaster,
    coherence: &CoherenceRaster,
    mask_threshold: f64,
) -> Result<MetricsReport> {
    if predicted_k.dims() != truth_k.dims() || predicted_k.dims() != coherence.dims() {
        return Err(Error::raster("evaluate: dimension mismatch"));
    }
    let n = predicted_k.values().len();
    let mut correct = 0usize;
    let mut masked = 0usize;
    let mut masked_correct = 0usize;
    let mut sq = 0i64;
    let mut confusion: BTreeMap<i32, BTreeMap<i32, usize>> = BTreeMap::new();
    for ((&p, &t), &g) in predicted_k.values().iter().zip(truth_k.values()).zip(coherence.values()) {
        let hit = p == t;
        correct += hit as usize;
        if g >= mask_threshold {
            masked += 1;
            masked_correct += hit as usize;
        }
        let d = (p - t) as i64;
        sq += d * d;
        *confusion.entry(t).or_default().entry(p).or_default() += 1;
    }
    // φ_w cancels: the reconstruction error is exactly 2π·(k_pred − k_true).
    let rmse = TWO_PI * (sq as f64 / n as f64).sqrt();
    Ok(MetricsReport {
        pixels: n,
        accuracy: correct as f64 / n as f64,
        masked_accuracy: (masked > 0).then(|| masked_correct as f64 / masked as f64),
        masked_pixels: masked,
        mask_threshold,
        rmse,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn perfect_prediction() {
        let k = WrapCountRaster::new(3, 2, vec![0, 1, 2, -1, 0, 0]).unwrap();
        let g = CoherenceRaster::uniform(3, 2, 0.8).unwrap();
        let m = evaluate(&k, &k, &g, 0.5).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.masked_accuracy, Some(1.0));
        assert_eq!(m.rmse, 0.0);
        assert_eq!(m.confusion[&0][&0], 3);
    }

    #[test]
    fn one_pixel_off_by_one_cycle() {
        let truth = WrapCountRaster::zeros(10, 10).unwrap();
        let mut v = vec![0; 100];
        v[37] = 1;
        let pred = WrapCountRaster::new(10, 10, v).unwrap();
        let g = CoherenceRaster::uniform(10, 10, 1.0).unwrap();
        let m = evaluate(&pred, &truth, &g, 0.0).unwrap();
        assert_abs_diff_eq!(m.accuracy, 0.99, epsilon = 1e-15);
        assert_abs_diff_eq!(m.rmse, TWO_PI / 10.0, epsilon = 1e-15);
        assert_abs_diff_eq!(m.rmse, 0.6283, epsilon = 1e-4);
        assert_eq!(m.confusion[&0][&1], 1);
        assert_eq!(m.confusion[&0][&0], 99);
    }

    #[test]
    fn empty_mask_is_absent() {
        let k = WrapCountRaster::zeros(4, 4).unwrap();
        let g = CoherenceRaster::uniform(4, 4, 1.0).unwrap();
        let m = evaluate(&k, &k, &g, 1.1).unwrap();
        assert_eq!(m.masked_accuracy, None);
        let json = serde_json::to_string(&m).unwrap();
        assert!(json.contains("\"masked_accuracy\":null"));
        assert!(!json.contains("NaN"));
    }

    #[test]
    fn mismatched_dims() {
        let a = WrapCountRaster::zeros(4, 4).unwrap();
        let b = WrapCountRaster::zeros(4, 5).unwrap();
        let g = CoherenceRaster::uniform(4, 4, 1.0).unwrap();
        assert!(matches!(evaluate(&a, &b, &g, 0.0), Err(Error::InvalidRaster(_))));
    }
}
