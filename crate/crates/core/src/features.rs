//! WPT-FFT dominant-frequency features and spectral baseline statistics.
//!
//! For each of the `2^k` elementary waveforms of a segment (natural leaf
//! order) the `m` strongest non-DC spectral peaks are turned into
//! `amplitude * frequency_hz`, giving a vector of `m * 2^k` values laid out
//! leaf-major: all `m` peaks of leaf 0, then leaf 1, and so on.

use crate::error::{ensure, Error, Result};
use crate::exec::Execution;
use crate::signal::SignalSegment;
use crate::spectrum::{amplitude_spectrum, top_m_peaks};
use crate::wavelet::{wavelet_filters, WaveletFilterPair};
use crate::wpt::{reconstruct_leaves, wpt_decompose};

/// Provenance attached to every feature vector and trained model. Features
/// are only comparable when all fields agree.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMeta {
    pub level: usize,
    pub peaks: usize,
    pub wavelet: String,
    pub sample_rate: f64,
    pub window: usize,
}

impl FeatureMeta {
    /// Feature vector length `m * 2^k`.
    pub fn size(&self) -> usize {
        self.peaks << self.level
    }

    pub(crate) fn check_matches(&self, other: &FeatureMeta) -> Result<()> {
        if self != other {
            return Err(Error::MetadataMismatch {
                expected: self.to_string(),
                found: other.to_string(),
            });
        }
        Ok(())
    }
}

impl std::fmt::Display for FeatureMeta {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "k={} m={} wavelet={} fs={} window={}",
            self.level, self.peaks, self.wavelet, self.sample_rate, self.window
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub values: Vec<f64>,
    pub meta: FeatureMeta,
}

impl FeatureVector {
    /// `(leaf, peak rank)` of each value.
    pub fn layout(&self) -> Vec<(usize, usize)> {
        feature_layout(self.meta.level, self.meta.peaks)
    }
}

pub fn feature_layout(level: usize, peaks: usize) -> Vec<(usize, usize)> {
    (0..1usize << level)
        .flat_map(|leaf| (0..peaks).map(move |rank| (leaf, rank)))
        .collect()
}

/// Configured WPT-FFT feature extractor.
#[derive(Debug, Clone)]
pub struct WptFftExtractor {
    level: usize,
    peaks: usize,
    wavelet: WaveletFilterPair,
}

impl WptFftExtractor {
    pub fn new(level: usize, peaks: usize, wavelet: &str) -> Result<Self> {
        Self::with_filters(level, peaks, wavelet_filters(wavelet)?)
    }

    pub fn with_filters(level: usize, peaks: usize, wavelet: WaveletFilterPair) -> Result<Self> {
        ensure!(level >= 1, "decomposition level must be at least 1");
        ensure!(peaks >= 1, "number of peaks must be at least 1");
        Ok(Self {
            level,
            peaks,
            wavelet,
        })
    }

    pub fn level(&self) -> usize {
        self.level
    }

    pub fn peaks(&self) -> usize {
        self.peaks
    }

    pub fn wavelet(&self) -> &WaveletFilterPair {
        &self.wavelet
    }

    pub fn feature_len(&self) -> usize {
        self.peaks << self.level
    }

    pub fn meta_for(&self, segment: &SignalSegment) -> FeatureMeta {
        FeatureMeta {
            level: self.level,
            peaks: self.peaks,
            wavelet: self.wavelet.name.clone(),
            sample_rate: segment.sample_rate,
            window: segment.len(),
        }
    }

    pub fn extract(&self, segment: &SignalSegment) -> Result<FeatureVector> {
        let tree = wpt_decompose(segment, self.level, &self.wavelet)?;
        let mut values = Vec::with_capacity(self.feature_len());
        for wave in reconstruct_leaves(&tree) {
            let spectrum = amplitude_spectrum(&wave, segment.sample_rate)?;
            for peak in top_m_peaks(&spectrum, self.peaks)? {
                values.push(peak.amplitude * peak.frequency);
            }
        }
        Ok(FeatureVector {
            values,
            meta: self.meta_for(segment),
        })
    }

    /// Extracts every segment; output order equals input order.
    pub fn extract_batch(
        &self,
        segments: &[SignalSegment],
        exec: Execution,
    ) -> Result<Vec<FeatureVector>> {
        exec.try_map(segments, |s| self.extract(s))
    }
}

pub fn extract_features(
    segment: &SignalSegment,
    level: usize,
    peaks: usize,
    wavelet: &WaveletFilterPair,
) -> Result<FeatureVector> {
    WptFftExtractor::with_filters(level, peaks, wavelet.clone())?.extract(segment)
}

/// Summary statistics of an amplitude spectrum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BaselineFeatures {
    pub mean: f64,
    pub crest_factor: f64,
    /// Non-excess fourth standardized moment; 0 for a constant spectrum.
    pub kurtosis: f64,
    /// Bits.
    pub entropy: f64,
}

impl BaselineFeatures {
    pub const NAMES: [&'static str; 4] = ["mean", "crest_factor", "kurtosis", "shannon_entropy"];

    pub fn to_array(self) -> [f64; 4] {
        [self.mean, self.crest_factor, self.kurtosis, self.entropy]
    }
}

pub fn baseline_from_amplitudes(amps: &[f64]) -> Result<BaselineFeatures> {
    ensure!(!amps.is_empty(), "empty spectrum");
    let n = amps.len() as f64;
    let total: f64 = amps.iter().sum();
    let peak = amps.iter().fold(0.0f64, |m, &a| m.max(a));
    if total <= 0.0 || peak <= 0.0 {
        return Err(Error::ZeroSpectrum);
    }
    let mean = total / n;
    let rms = (amps.iter().map(|a| a * a).sum::<f64>() / n).sqrt();
    let var = amps.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let m4 = amps.iter().map(|a| (a - mean).powi(4)).sum::<f64>() / n;
    let kurtosis = if var > 0.0 { m4 / (var * var) } else { 0.0 };
    let entropy = -amps
        .iter()
        .map(|&a| a / total)
        .filter(|&p| p > 0.0)
        .map(|p| p * p.log2())
        .sum::<f64>();
    Ok(BaselineFeatures {
        mean,
        crest_factor: peak / rms,
        kurtosis,
        entropy: entropy.max(0.0),
    })
}

/// Mean, crest factor, kurtosis and Shannon entropy of the raw segment's
/// amplitude spectrum (DC through Nyquist).
pub fn baseline_features(segment: &SignalSegment) -> Result<BaselineFeatures> {
    ensure!(
        segment.len() >= 4,
        "baseline features need at least 4 samples"
    );
    let spectrum = amplitude_spectrum(&segment.samples, segment.sample_rate)?;
    baseline_from_amplitudes(&spectrum.amps)
}

/// Same four statistics computed on each elementary waveform's spectrum,
/// leaf-major (`4 * 2^k` values).
pub fn baseline_features_per_leaf(
    segment: &SignalSegment,
    level: usize,
    wavelet: &WaveletFilterPair,
) -> Result<Vec<f64>> {
    let tree = wpt_decompose(segment, level, wavelet)?;
    let mut out = Vec::with_capacity(4 << level);
    for wave in reconstruct_leaves(&tree) {
        let spectrum = amplitude_spectrum(&wave, segment.sample_rate)?;
        out.extend(baseline_from_amplitudes(&spectrum.amps)?.to_array());
    }
    Ok(out)
}
