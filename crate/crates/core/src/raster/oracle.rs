//! Classical path-following oracle: residue detection, Itoh integration and
//! the gradient-mismatch energy used to score candidate unwrappings.

use serde::{Deserialize, Serialize};

use super::{wrap_diff, wrap_diff_cycles, CompensatedSum, PhaseKind, PhaseRaster, WrapCountRaster, TWO_PI};
use crate::error::{Error, Result};

/// A 2×2 loop with nonzero circulation. `(x, y)` is the loop's top-left pixel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Residue {
    pub x: usize,
    pub y: usize,
    pub charge: i32,
}

fn expect_wrapped(r: &PhaseRaster, what: &str) -> Result<()> {
    if r.kind() != PhaseKind::Wrapped {
        return Err(Error::raster(format!("{what} expects a wrapped phase raster")));
    }
    Ok(())
}

/// Circulation of the loop (x,y) → (x+1,y) → (x+1,y+1) → (x,y+1) → (x,y), in cycles.
fn loop_charge(w: &PhaseRaster, x: usize, y: usize) -> i32 {
    let a = w.get(x, y);
    let b = w.get(x + 1, y);
    let c = w.get(x + 1, y + 1);
    let d = w.get(x, y + 1);
    let s = wrap_diff(b - a) + wrap_diff(c - b) + wrap_diff(d - c) + wrap_diff(a - d);
    (s / TWO_PI).round() as i32
}

pub fn detect_residues(wrapped: &PhaseRaster) -> Result<Vec<Residue>> {
    expect_wrapped(wrapped, "detect_residues")?;
    let mut out = Vec::new();
    for y in 0..wrapped.height() - 1 {
        for x in 0..wrapped.width() - 1 {
            let charge = loop_charge(wrapped, x, y);
            if charge != 0 {
                out.push(Residue { x, y, charge });
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrationOrder {
    /// Integrate along the seed row, then down/up every column.
    #[default]
    RowThenColumn,
    /// Integrate along the seed column, then left/right along every row.
    ColumnThenRow,
}

/// Wrap counts from Itoh integration with `k(seed) = 0`.
///
/// Counts are integrated as integers, so `φ_w + 2πk` is the only rounding step.
pub fn itoh_wrap_counts(
    wrapped: &PhaseRaster,
    seed: (usize, usize),
    order: IntegrationOrder,
) -> Result<WrapCountRaster> {
    expect_wrapped(wrapped, "itoh_unwrap")?;
    let dims = wrapped.dims();
    let (sx, sy) = seed;
    if sx >= dims.width || sy >= dims.height {
        return Err(Error::raster(format!("seed ({sx}, {sy}) outside the grid")));
    }
    let residues = detect_residues(wrapped)?;
    if !residues.is_empty() {
        return Err(Error::OracleInapplicable { residues: residues.len() });
    }

    let phi = wrapped.values();
    let mut k = vec![0i64; dims.len()];
    // k[q] = k[p] - cycles(φ[q] - φ[p]) keeps φ_a(q) - φ_a(p) = W(φ_w(q) - φ_w(p)).
    let step = |k: &mut [i64], from: usize, to: usize| {
        k[to] = k[from] - wrap_diff_cycles(phi[to] - phi[from]);
    };
    match order {
        IntegrationOrder::RowThenColumn => {
            for x in sx + 1..dims.width {
                step(&mut k, dims.index(x - 1, sy), dims.index(x, sy));
            }
            for x in (0..sx).rev() {
                step(&mut k, dims.index(x + 1, sy), dims.index(x, sy));
            }
            for x in 0..dims.width {
                for y in sy + 1..dims.height {
                    step(&mut k, dims.index(x, y - 1), dims.index(x, y));
                }
                for y in (0..sy).rev() {
                    step(&mut k, dims.index(x, y + 1), dims.index(x, y));
                }
            }
        }
        IntegrationOrder::ColumnThenRow => {
            for y in sy + 1..dims.height {
                step(&mut k, dims.index(sx, y - 1), dims.index(sx, y));
            }
            for y in (0..sy).rev() {
                step(&mut k, dims.index(sx, y + 1), dims.index(sx, y));
            }
            for y in 0..dims.height {
                for x in sx + 1..dims.width {
                    step(&mut k, dims.index(x - 1, y), dims.index(x, y));
                }
                for x in (0..sx).rev() {
                    step(&mut k, dims.index(x + 1, y), dims.index(x, y));
                }
            }
        }
    }
    let k = k
        .into_iter()
        .map(|v| i32::try_from(v).map_err(|_| Error::raster("wrap count overflows i32")))
        .collect::<Result<Vec<_>>>()?;
    WrapCountRaster::new(dims.width, dims.height, k)
}

/// Itoh (row-then-column) unwrapping seeded at `seed` with `φ_a(seed) = φ_w(seed)`.
pub fn itoh_unwrap(wrapped: &PhaseRaster, seed: (usize, usize)) -> Result<PhaseRaster> {
    itoh_unwrap_ordered(wrapped, seed, IntegrationOrder::RowThenColumn)
}

pub fn itoh_unwrap_ordered(
    wrapped: &PhaseRaster,
    seed: (usize, usize),
    order: IntegrationOrder,
) -> Result<PhaseRaster> {
    let k = itoh_wrap_counts(wrapped, seed, order)?;
    wrapped.reconstruct(&k)
}

/// Σ over defined forward differences of `(∇φ_a - W(∇φ_w))²`.
///
/// Right-column x-differences and bottom-row y-differences do not exist and are
/// left out of the sum.
pub fn gradient_energy(candidate: &PhaseRaster, wrapped: &PhaseRaster) -> Result<f64> {
    expect_wrapped(wrapped, "gradient_energy")?;
    if candidate.dims() != wrapped.dims() {
        return Err(Error::raster("gradient_energy: dimension mismatch"));
    }
    let dims = wrapped.dims();
    let mut sum = CompensatedSum::default();
    for y in 0..dims.height {
        for x in 0..dims.width {
            if x + 1 < dims.width {
                let da = candidate.get(x + 1, y) - candidate.get(x, y);
                let dw = wrap_diff(wrapped.get(x + 1, y) - wrapped.get(x, y));
                sum.add((da - dw).powi(2));
            }
            if y + 1 < dims.height {
                let da = candidate.get(x, y + 1) - candidate.get(x, y);
                let dw = wrap_diff(wrapped.get(x, y + 1) - wrapped.get(x, y));
                sum.add((da - dw).powi(2));
            }
        }
    }
    Ok(sum.value())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::{synthesize_scene, vortex_phase, wrap, SceneShape, SceneSpec};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn ramp(w: usize, h: usize, sx: f64, sy: f64) -> PhaseRaster {
        PhaseRaster::from_fn(w, h, PhaseKind::Absolute, |x, y| sx * x as f64 + sy * y as f64).unwrap()
    }

    /// Independent brute force: every 2×2 loop summed with explicit rounding of each edge.
    fn brute_force_residues(w: &PhaseRaster) -> Vec<Residue> {
        let wrapd = |a: f64| {
            let mut a = a;
            while a > std::f64::consts::PI {
                a -= TWO_PI;
            }
            while a < -std::f64::consts::PI {
                a += TWO_PI;
            }
            a
        };
        let mut out = vec![];
        for y in 0..w.height() - 1 {
            for x in 0..w.width() - 1 {
                let pts = [(x, y), (x + 1, y), (x + 1, y + 1), (x, y + 1), (x, y)];
                let s: f64 = pts.windows(2).map(|p| wrapd(w.get(p[1].0, p[1].1) - w.get(p[0].0, p[0].1))).sum();
                let c = (s / TWO_PI).round() as i32;
                if c != 0 {
                    out.push(Residue { x, y, charge: c });
                }
            }
        }
        out
    }

    #[test]
    fn constant_and_ramp_have_no_residues() {
        let c = PhaseRaster::constant(8, 8, 1.2, PhaseKind::Wrapped).unwrap();
        assert!(detect_residues(&c).unwrap().is_empty());
        let r = wrap(&ramp(16, 16, 0.9, -0.4)).unwrap();
        assert!(detect_residues(&r).unwrap().is_empty());
    }

    #[test]
    fn vortex_has_single_positive_residue() {
        let v = vortex_phase(16, 16, 7.5, 7.5).unwrap();
        let found = detect_residues(&v).unwrap();
        assert_eq!(found, brute_force_residues(&v));
        assert_eq!(found, vec![Residue { x: 7, y: 7, charge: 1 }]);
        assert!(matches!(itoh_unwrap(&v, (0, 0)), Err(Error::OracleInapplicable { residues: 1 })));
    }

    #[test]
    fn residue_total_equals_boundary_circulation() {
        let spec = SceneSpec { coherence_level: 0.4, rng_seed: 3, width: 24, height: 20, ..Default::default() };
        let s = synthesize_scene(&spec).unwrap();
        let w = &s.wrapped;
        let total: i32 = detect_residues(w).unwrap().iter().map(|r| r.charge).sum();
        let (wd, ht) = (w.width(), w.height());
        let mut boundary = vec![];
        boundary.extend((0..wd).map(|x| (x, 0)));
        boundary.extend((1..ht).map(|y| (wd - 1, y)));
        boundary.extend((0..wd - 1).rev().map(|x| (x, ht - 1)));
        boundary.extend((0..ht - 1).rev().map(|y| (0, y)));
        let circ: f64 = boundary.windows(2).map(|p| wrap_diff(w.get(p[1].0, p[1].1) - w.get(p[0].0, p[0].1))).sum();
        assert_eq!(total, (circ / TWO_PI).round() as i32);
    }

    #[test]
    fn itoh_constant_is_identity() {
        let c = PhaseRaster::constant(5, 4, -2.0, PhaseKind::Wrapped).unwrap();
        let a = itoh_unwrap(&c, (2, 2)).unwrap();
        assert_eq!(a.kind(), PhaseKind::Absolute);
        assert!(a.values().iter().all(|&v| v == -2.0));
    }

    #[test]
    fn itoh_recovers_ramp_up_to_seed_offset() {
        let truth = ramp(20, 12, 0.7, 0.45);
        let w = wrap(&truth).unwrap();
        let seed = (5, 7);
        let a = itoh_unwrap(&w, seed).unwrap();
        let offset = truth.get(seed.0, seed.1) - a.get(seed.0, seed.1);
        assert_abs_diff_eq!((offset / TWO_PI).round() * TWO_PI, offset, epsilon = 1e-9);
        for (t, u) in truth.values().iter().zip(a.values()) {
            assert_abs_diff_eq!(*t, *u + offset, epsilon = 1e-9);
        }
    }

    #[test]
    fn itoh_rejects_absolute_input() {
        assert!(itoh_unwrap(&ramp(4, 4, 0.1, 0.1), (0, 0)).is_err());
    }

    #[test]
    fn itoh_rejects_out_of_grid_seed() {
        let w = wrap(&ramp(4, 4, 0.1, 0.1)).unwrap();
        assert!(itoh_unwrap(&w, (4, 0)).is_err());
    }

    #[test]
    fn energy_zero_at_itoh_solution() {
        let spec = SceneSpec { shape: SceneShape::GaussianBump, amplitude: 12.0, ..Default::default() };
        let s = synthesize_scene(&spec).unwrap();
        let a = itoh_unwrap(&s.wrapped, (0, 0)).unwrap();
        assert!(gradient_energy(&a, &s.wrapped).unwrap() < 1e-12);
        assert!(gradient_energy(&s.wrapped.as_absolute(), &s.wrapped).unwrap() > 1.0);
    }

    #[test]
    fn energy_of_single_jump_strip() {
        // Two identical rows of [0, 0.5, 1.0] with a 2π jump on the last pixel of each row:
        // each row contributes one x-edge of (2π)².
        let w = PhaseRaster::new(3, 2, vec![0.0, 0.5, 1.0, 0.0, 0.5, 1.0], PhaseKind::Wrapped).unwrap();
        let c = PhaseRaster::new(3, 2, vec![0.0, 0.5, 1.0 + TWO_PI, 0.0, 0.5, 1.0 + TWO_PI], PhaseKind::Absolute)
            .unwrap();
        let e = gradient_energy(&c, &w).unwrap();
        assert_abs_diff_eq!(e, 2.0 * TWO_PI * TWO_PI, epsilon = 1e-12);
        assert_abs_diff_eq!(e / 2.0, 39.478, epsilon = 1e-3);
    }

    #[test]
    fn energy_dimension_mismatch() {
        let w = PhaseRaster::constant(3, 3, 0.0, PhaseKind::Wrapped).unwrap();
        let c = PhaseRaster::constant(3, 4, 0.0, PhaseKind::Absolute).unwrap();
        assert!(matches!(gradient_energy(&c, &w), Err(Error::InvalidRaster(_))));
    }

    fn smooth_spec() -> impl Strategy<Value = SceneSpec> {
        (4usize..40, 4usize..40, any::<u64>(), 0.0f64..12.0, -1.2f64..1.2, prop::bool::ANY).prop_map(
            |(w, h, seed, amp, slope, bump)| SceneSpec {
                width: w,
                height: h,
                shape: if bump { SceneShape::GaussianBump } else { SceneShape::LinearRamp },
                amplitude: amp,
                ramp_slope: slope,
                rng_seed: seed,
                ..Default::default()
            },
        )
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn itoh_inverts_wrap_on_residue_free_scenes(spec in smooth_spec(), sx in 0usize..4, sy in 0usize..4) {
            let s = synthesize_scene(&spec).unwrap();
            prop_assume!(detect_residues(&s.wrapped).unwrap().is_empty());
            prop_assume!(gradient_energy(&s.absolute, &s.wrapped).unwrap() < 1e-9);
            let k = itoh_wrap_counts(&s.wrapped, (sx, sy), IntegrationOrder::RowThenColumn).unwrap();
            let k2 = itoh_wrap_counts(&s.wrapped, (sx, sy), IntegrationOrder::ColumnThenRow).unwrap();
            prop_assert_eq!(&k, &k2);
            let off = s.truth_k.get(sx, sy) - k.get(sx, sy);
            for (t, u) in s.truth_k.values().iter().zip(k.values()) {
                prop_assert_eq!(*t, *u + off);
            }
            let a = itoh_unwrap(&s.wrapped, (sx, sy)).unwrap();
            for (a, w) in a.values().iter().zip(s.wrapped.values()) {
                let c = (a - w) / TWO_PI;
                prop_assert!((c - c.round()).abs() * TWO_PI < 1e-9);
            }
        }

        #[test]
        fn truth_minimises_energy_against_single_pixel_moves(spec in smooth_spec(), px in 0usize..4, py in 0usize..4, dk in prop::sample::select(vec![-1i32, 1])) {
            let s = synthesize_scene(&spec).unwrap();
            prop_assume!(detect_residues(&s.wrapped).unwrap().is_empty());
            let e0 = gradient_energy(&s.absolute, &s.wrapped).unwrap();
            // Itoh condition: every true neighbour difference below π.
            prop_assume!(e0 < 1e-9);
            let mut v = s.absolute.values().to_vec();
            v[s.absolute.dims().index(px, py)] += TWO_PI * dk as f64;
            let moved = PhaseRaster::new(spec.width, spec.height, v, PhaseKind::Absolute).unwrap();
            prop_assert!(e0 <= gradient_energy(&moved, &s.wrapped).unwrap());
        }
    }
}
