//! Orthonormal Daubechies filter pairs.
//!
//! Low-pass coefficients are the minimum-phase Daubechies scaling filters,
//! normalized so that `sum(h) = sqrt(2)` and `sum(h^2) = 1`. The high-pass
//! filter is the quadrature mirror `g[n] = (-1)^n h[L-1-n]`. `dbN` has `N`
//! vanishing moments and `2N` taps.

use std::f64::consts::FRAC_1_SQRT_2;

use crate::error::{Error, Result};

pub const SUPPORTED_WAVELETS: &[&str] = &["db1", "db2", "db4", "db8"];

const DB2: [f64; 4] = [
    0.482_962_913_144_534_16,
    0.836_516_303_737_807_9,
    0.224_143_868_042_013_4,
    -0.129_409_522_551_260_37,
];

const DB4: [f64; 8] = [
    0.230_377_813_308_896_5,
    0.714_846_570_552_915_7,
    0.630_880_767_929_858_9,
    -0.027_983_769_416_859_854,
    -0.187_034_811_719_093_09,
    0.030_841_381_835_560_764,
    0.032_883_011_666_885_2,
    -0.010_597_401_785_069_032,
];

const DB8: [f64; 16] = [
    0.054_415_842_243_104_01,
    0.312_871_590_914_299_95,
    0.675_630_736_297_289_8,
    0.585_354_683_654_206_7,
    -0.015_829_105_256_349_306,
    -0.284_015_542_961_546_9,
    0.000_472_484_573_913_282_8,
    0.128_747_426_620_478_47,
    -0.017_369_301_001_807_547,
    -0.044_088_253_930_794_755,
    0.013_981_027_917_398_282,
    0.008_746_094_047_405_777,
    -0.004_870_352_993_451_574,
    -0.000_391_740_373_376_947_05,
    0.000_675_449_406_450_569_3,
    -0.000_117_476_784_124_769_53,
];

/// Analysis low-pass `h` and high-pass `g` of an orthonormal wavelet.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletFilterPair {
    pub name: String,
    pub h: Vec<f64>,
    pub g: Vec<f64>,
}

impl WaveletFilterPair {
    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    fn from_lowpass(name: &str, h: &[f64]) -> Self {
        let l = h.len();
        let g = (0..l)
            .map(|n| {
                if n % 2 == 0 {
                    h[l - 1 - n]
                } else {
                    -h[l - 1 - n]
                }
            })
            .collect();
        Self {
            name: name.to_string(),
            h: h.to_vec(),
            g,
        }
    }
}

/// Looks up a filter pair by name (`db1`/`haar`, `db2`, `db4`, `db8`).
pub fn wavelet_filters(name: &str) -> Result<WaveletFilterPair> {
    let canonical = name.trim().to_ascii_lowercase();
    let pair = match canonical.as_str() {
        "db1" | "haar" => WaveletFilterPair::from_lowpass("db1", &[FRAC_1_SQRT_2, FRAC_1_SQRT_2]),
        "db2" => WaveletFilterPair::from_lowpass("db2", &DB2),
        "db4" => WaveletFilterPair::from_lowpass("db4", &DB4),
        "db8" => WaveletFilterPair::from_lowpass("db8", &DB8),
        _ => return Err(Error::UnknownWavelet(name.to_string())),
    };
    Ok(pair)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn haar() {
        let w = wavelet_filters("db1").unwrap();
        assert_eq!(w.h, vec![FRAC_1_SQRT_2, FRAC_1_SQRT_2]);
        assert_eq!(w.g, vec![FRAC_1_SQRT_2, -FRAC_1_SQRT_2]);
        assert_eq!(wavelet_filters("haar").unwrap(), w);
    }

    #[test]
    fn unknown_name_lists_supported() {
        let err = wavelet_filters("db99").unwrap_err().to_string();
        assert!(err.contains("db99"));
        for name in SUPPORTED_WAVELETS {
            assert!(err.contains(name));
        }
    }

    #[test]
    fn all_pairs_are_orthonormal_qmf() {
        for name in SUPPORTED_WAVELETS {
            let w = wavelet_filters(name).unwrap();
            let l = w.len();
            assert_eq!(l % 2, 0);
            assert_eq!(w.g.len(), l);
            let sum: f64 = w.h.iter().sum();
            let energy: f64 = w.h.iter().map(|v| v * v).sum();
            assert!((sum - 2f64.sqrt()).abs() < 1e-10, "{name}: sum {sum}");
            assert!((energy - 1.0).abs() < 1e-10, "{name}: energy {energy}");
            for n in 0..l {
                let sign = if n % 2 == 0 { 1.0 } else { -1.0 };
                assert!((w.g[n] - sign * w.h[l - 1 - n]).abs() < 1e-12);
            }
            for shift in 1..l / 2 {
                let dot: f64 = (0..l - 2 * shift)
                    .map(|n| w.h[n] * w.h[n + 2 * shift])
                    .sum();
                assert!(dot.abs() < 1e-10, "{name}: shift {shift} dot {dot}");
            }
        }
    }

    #[test]
    fn db4_has_eight_taps_and_four_vanishing_moments() {
        let w = wavelet_filters("db4").unwrap();
        assert_eq!(w.len(), 8);
        for p in 0..4 {
            let moment: f64 =
                w.g.iter()
                    .enumerate()
                    .map(|(n, v)| (n as f64).powi(p) * v)
                    .sum();
            assert!(moment.abs() < 1e-8, "moment {p}: {moment}");
        }
    }
}
