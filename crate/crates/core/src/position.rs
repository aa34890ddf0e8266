//! Uniform scalar quantization of bounding-box coordinates.
//!
//! A coordinate `b ∈ [-1, 1]` maps to `round((L-1) * clip((b+1)/2, 0, 1))`
//! and back through `2k/(L-1) - 1`. Ties round away from zero.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::Bbox;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QuantError {
    #[error("coordinate is not finite")]
    NonFiniteInput,
    #[error("position token {index} is outside [0, {levels})")]
    IndexOutOfRange { index: u32, levels: u32 },
    #[error("quantization needs at least 2 levels, got {0}")]
    TooFewLevels(u32),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantConfig {
    pub levels: u32,
}

impl Default for QuantConfig {
    fn default() -> Self {
        Self { levels: 2048 }
    }
}

impl QuantConfig {
    pub fn new(levels: u32) -> Result<Self, QuantError> {
        if levels < 2 {
            return Err(QuantError::TooFewLevels(levels));
        }
        Ok(Self { levels })
    }

    /// Largest round-trip error for in-range inputs: half a grid step.
    pub fn max_error(&self) -> f64 {
        1.0 / (self.levels - 1) as f64
    }
}

pub fn quantize_coord(b: f64, cfg: QuantConfig) -> Result<u32, QuantError> {
    if !b.is_finite() {
        return Err(QuantError::NonFiniteInput);
    }
    let unit = ((b + 1.0) / 2.0).clamp(0.0, 1.0);
    let k = ((cfg.levels - 1) as f64 * unit).round();
    Ok(k as u32)
}

pub fn dequantize_coord(k: u32, cfg: QuantConfig) -> Result<f64, QuantError> {
    if k >= cfg.levels {
        return Err(QuantError::IndexOutOfRange {
            index: k,
            levels: cfg.levels,
        });
    }
    Ok(2.0 * k as f64 / (cfg.levels - 1) as f64 - 1.0)
}

pub fn tokenize_bbox(bbox: &Bbox, cfg: QuantConfig) -> Result<[u32; 6], QuantError> {
    let mut out = [0; 6];
    for (o, &b) in out.iter_mut().zip(bbox.0.iter()) {
        *o = quantize_coord(b, cfg)?;
    }
    Ok(out)
}

/// Inverse of [`tokenize_bbox`]. A min/max pair that came out inverted is
/// swapped so the result is a valid box.
pub fn detokenize_bbox(tokens: &[u32; 6], cfg: QuantConfig) -> Result<Bbox, QuantError> {
    let mut b = [0.0; 6];
    for (o, &k) in b.iter_mut().zip(tokens.iter()) {
        *o = dequantize_coord(k, cfg)?;
    }
    for axis in 0..3 {
        if b[axis] > b[axis + 3] {
            b.swap(axis, axis + 3);
        }
    }
    Ok(Bbox(b))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const L2048: QuantConfig = QuantConfig { levels: 2048 };

    #[test]
    fn endpoints_and_midpoint() {
        assert_eq!(quantize_coord(-1.0, L2048).unwrap(), 0);
        assert_eq!(quantize_coord(1.0, L2048).unwrap(), 2047);
        // 2047 * 0.5 = 1023.5 rounds away from zero
        assert_eq!(quantize_coord(0.0, L2048).unwrap(), 1024);
    }

    #[test]
    fn dequantize_values() {
        assert_eq!(dequantize_coord(0, L2048).unwrap(), -1.0);
        assert_eq!(dequantize_coord(2047, L2048).unwrap(), 1.0);
        let mid = dequantize_coord(1024, L2048).unwrap();
        assert!((mid - 1.0 / 2047.0).abs() < 1e-15);
        assert!((mid - 4.8852e-4).abs() < 1e-8);
        assert_eq!(
            dequantize_coord(2048, L2048),
            Err(QuantError::IndexOutOfRange {
                index: 2048,
                levels: 2048
            })
        );
    }

    #[test]
    fn out_of_range_clips() {
        assert_eq!(quantize_coord(-3.0, L2048).unwrap(), 0);
        assert_eq!(quantize_coord(7.5, L2048).unwrap(), 2047);
        assert_eq!(quantize_coord(f64::NAN, L2048), Err(QuantError::NonFiniteInput));
    }

    #[test]
    fn full_box_tokens() {
        let t = tokenize_bbox(&Bbox([-1.0, -1.0, -1.0, 1.0, 1.0, 1.0]), L2048).unwrap();
        assert_eq!(t, [0, 0, 0, 2047, 2047, 2047]);
        let b = detokenize_bbox(&t, L2048).unwrap();
        assert_eq!(b.0, [-1.0, -1.0, -1.0, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn degenerate_box_tokens() {
        let t = tokenize_bbox(&Bbox([0.2; 6]), L2048).unwrap();
        assert!(t.iter().all(|&k| k == t[0]));
    }

    #[test]
    fn inverted_pair_is_repaired() {
        let b = detokenize_bbox(&[10, 5, 5, 3, 6, 5], QuantConfig { levels: 16 }).unwrap();
        assert!(b.0[0] <= b.0[3] && b.0[1] <= b.0[4] && b.0[2] <= b.0[5]);
    }

    #[test]
    fn exhaustive_scan_at_eight_levels() {
        let cfg = QuantConfig::new(8).unwrap();
        for k in 0..8 {
            assert_eq!(quantize_coord(dequantize_coord(k, cfg).unwrap(), cfg).unwrap(), k);
        }
        // dense scan of the half-step bound
        let n = 100_000;
        for i in 0..=n {
            let b = -1.0 + 2.0 * i as f64 / n as f64;
            let r = dequantize_coord(quantize_coord(b, cfg).unwrap(), cfg).unwrap();
            assert!((r - b).abs() <= cfg.max_error() + 1e-15);
        }
    }

    proptest! {
        #[test]
        fn round_trip_bound(b in -1.0f64..=1.0, levels in 2u32..5000) {
            let cfg = QuantConfig::new(levels).unwrap();
            let k = quantize_coord(b, cfg).unwrap();
            prop_assert!(k < levels);
            let r = dequantize_coord(k, cfg).unwrap();
            prop_assert!((r - b).abs() <= cfg.max_error() + 1e-12);
        }

        #[test]
        fn monotone(a in -1.5f64..1.5, b in -1.5f64..1.5) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(quantize_coord(lo, L2048).unwrap() <= quantize_coord(hi, L2048).unwrap());
        }

        #[test]
        fn identity_on_tokens(k in 0u32..2048) {
            prop_assert_eq!(quantize_coord(dequantize_coord(k, L2048).unwrap(), L2048).unwrap(), k);
        }
    }
}
