//! Fixed-length segmentation of vibration records and a seeded generator of
//! synthetic bearing-fault signals.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{ensure, Error, Result};

/// A window of single-channel vibration samples.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSegment {
    pub samples: Vec<f64>,
    /// Samples per second.
    pub sample_rate: f64,
    pub label: Option<String>,
}

impl SignalSegment {
    pub fn new(samples: Vec<f64>, sample_rate: f64) -> Result<Self> {
        ensure!(
            sample_rate > 0.0 && sample_rate.is_finite(),
            "sample rate must be positive, got {sample_rate}"
        );
        Ok(Self {
            samples,
            sample_rate,
            label: None,
        })
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Acquisition time of the segment in seconds.
    pub fn duration(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate
    }
}

/// Splits `signal` into windows of `window` samples starting every `hop`
/// samples. A trailing remainder shorter than one window is dropped.
pub fn segment_signal(
    signal: &[f64],
    sample_rate: f64,
    window: usize,
    hop: usize,
) -> Result<Vec<SignalSegment>> {
    ensure!(window >= 1, "window must be at least 1");
    ensure!(hop >= 1, "hop must be at least 1");
    ensure!(
        sample_rate > 0.0 && sample_rate.is_finite(),
        "sample rate must be positive, got {sample_rate}"
    );
    if signal.len() < window {
        return Err(Error::InputShorterThanWindow {
            len: signal.len(),
            window,
        });
    }
    let count = (signal.len() - window) / hop + 1;
    Ok((0..count)
        .map(|i| SignalSegment {
            samples: signal[i * hop..i * hop + window].to_vec(),
            sample_rate,
            label: None,
        })
        .collect())
}

/// Duration in seconds of `n` samples at `sample_rate`.
pub fn segment_duration(n: usize, sample_rate: f64) -> Result<f64> {
    ensure!(n >= 1, "segment must contain at least one sample");
    ensure!(
        sample_rate > 0.0 && sample_rate.is_finite(),
        "sample rate must be positive, got {sample_rate}"
    );
    Ok(n as f64 / sample_rate)
}

/// Parameters of a synthetic bearing vibration record: white Gaussian noise
/// plus a train of impulses, each ringing a single damped structural
/// resonance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FaultSynthesisSpec {
    pub sample_rate: f64,
    /// Seconds.
    pub duration: f64,
    /// Impulses per second; 0 produces a healthy (noise only) record.
    pub fault_rate: f64,
    /// Hz.
    pub resonance_freq: f64,
    /// Decay constant of the impulse response, 1/s.
    pub damping: f64,
    pub impulse_amplitude: f64,
    pub noise_sigma: f64,
    /// Linear sweep of the impulse rate from `.0` to `.1` over the record.
    /// Overrides `fault_rate` when the record is faulty.
    #[serde(default)]
    pub speed_ramp: Option<(f64, f64)>,
    pub rng_seed: u64,
}

impl FaultSynthesisSpec {
    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.sample_rate > 0.0 && self.sample_rate.is_finite(),
            "sample_rate must be positive"
        );
        ensure!(self.duration > 0.0, "duration must be positive");
        ensure!(self.fault_rate >= 0.0, "fault_rate must be nonnegative");
        ensure!(self.noise_sigma >= 0.0, "noise_sigma must be nonnegative");
        ensure!(
            self.resonance_freq >= 0.0 && self.resonance_freq < self.sample_rate / 2.0,
            "resonance_freq {} must lie below the Nyquist frequency {}",
            self.resonance_freq,
            self.sample_rate / 2.0
        );
        if self.fault_rate > 0.0 {
            ensure!(self.damping > 0.0, "damping must be positive");
        }
        if let Some((a, b)) = self.speed_ramp {
            ensure!(a > 0.0 && b > 0.0, "speed_ramp rates must be positive");
        }
        Ok(())
    }

    pub fn sample_count(&self) -> usize {
        (self.duration * self.sample_rate).round() as usize
    }

    /// Impulse onset times in seconds, in increasing order.
    fn impulse_times(&self) -> Vec<f64> {
        if self.fault_rate <= 0.0 {
            return Vec::new();
        }
        let (r0, r1) = self
            .speed_ramp
            .unwrap_or((self.fault_rate, self.fault_rate));
        // cumulative impulse count: r0*t + (r1 - r0) t^2 / (2 D)
        let a = (r1 - r0) / (2.0 * self.duration);
        let mut times = Vec::new();
        for j in 0.. {
            let j = j as f64;
            let t = if a.abs() < 1e-15 {
                j / r0
            } else {
                (-r0 + (r0 * r0 + 4.0 * a * j).sqrt()) / (2.0 * a)
            };
            if t.is_nan() || t >= self.duration {
                break;
            }
            times.push(t);
        }
        times
    }
}

/// Renders the record described by `spec`. Identical specs give
/// bit-identical output.
pub fn synthesize_bearing_signal(spec: &FaultSynthesisSpec) -> Result<SignalSegment> {
    spec.validate()?;
    let n = spec.sample_count();
    let fs = spec.sample_rate;
    let mut samples = vec![0.0; n];

    if spec.noise_sigma > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.rng_seed);
        let normal = Normal::new(0.0, spec.noise_sigma)
            .map_err(|e| Error::InvalidParameter(e.to_string()))?;
        for s in samples.iter_mut() {
            *s = normal.sample(&mut rng);
        }
    }

    // ring-down is truncated once the envelope falls below e^-30
    let tail = (30.0 / spec.damping.max(f64::MIN_POSITIVE) * fs).ceil();
    let omega = 2.0 * std::f64::consts::PI * spec.resonance_freq;
    for onset in spec.impulse_times() {
        let first = (onset * fs).ceil() as usize;
        let last = ((first as f64 + tail).min(n as f64)) as usize;
        for (i, s) in samples.iter_mut().enumerate().take(last).skip(first) {
            let tau = i as f64 / fs - onset;
            *s += spec.impulse_amplitude * (-spec.damping * tau).exp() * (omega * tau).sin();
        }
    }

    SignalSegment::new(samples, fs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec() -> FaultSynthesisSpec {
        FaultSynthesisSpec {
            sample_rate: 12_000.0,
            duration: 0.5,
            fault_rate: 100.0,
            resonance_freq: 3_000.0,
            damping: 800.0,
            impulse_amplitude: 1.0,
            noise_sigma: 0.05,
            speed_ramp: None,
            rng_seed: 7,
        }
    }

    #[test]
    fn twelve_thousand_samples_in_twenty_windows() {
        let x: Vec<f64> = (0..12_000).map(|i| i as f64).collect();
        let segs = segment_signal(&x, 12_000.0, 600, 600).unwrap();
        assert_eq!(segs.len(), 20);
        assert!(segs.iter().all(|s| s.len() == 600));
    }

    #[test]
    fn single_window_is_identity() {
        let x: Vec<f64> = (0..600).map(|i| (i as f64).sin()).collect();
        let segs = segment_signal(&x, 12_000.0, 600, 600).unwrap();
        assert_eq!(segs.len(), 1);
        assert_eq!(segs[0].samples, x);
    }

    #[test]
    fn overlapping_windows_drop_the_tail() {
        let x: Vec<f64> = (0..1250).map(|i| i as f64).collect();
        let segs = segment_signal(&x, 12_000.0, 600, 300).unwrap();
        let starts: Vec<f64> = segs.iter().map(|s| s.samples[0]).collect();
        assert_eq!(starts, vec![0.0, 300.0, 600.0]);
        assert_eq!(segs[2].samples.last().copied(), Some(1199.0));
    }

    #[test]
    fn short_input_is_rejected() {
        let err = segment_signal(&[0.0; 10], 1.0, 11, 1).unwrap_err();
        assert!(err.to_string().contains("input shorter than one window"));
        assert!(segment_signal(&[0.0; 10], 1.0, 5, 0).is_err());
    }

    #[test]
    fn durations() {
        assert_eq!(segment_duration(600, 12_000.0).unwrap(), 0.05);
        assert_eq!(segment_duration(300, 12_000.0).unwrap(), 0.025);
        assert_eq!(segment_duration(1, 1.0).unwrap(), 1.0);
        assert!(segment_duration(10, 0.0).is_err());
        assert!(segment_duration(10, -3.0).is_err());
    }

    #[test]
    fn silence() {
        let s = FaultSynthesisSpec {
            fault_rate: 0.0,
            noise_sigma: 0.0,
            ..spec()
        };
        let x = synthesize_bearing_signal(&s).unwrap();
        assert_eq!(x.len(), 6000);
        assert!(x.samples.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn seeded_noise_is_repeatable() {
        let s = FaultSynthesisSpec {
            fault_rate: 0.0,
            noise_sigma: 1.0,
            ..spec()
        };
        let a = synthesize_bearing_signal(&s).unwrap();
        let b = synthesize_bearing_signal(&s).unwrap();
        assert_eq!(a, b);
        let c = synthesize_bearing_signal(&FaultSynthesisSpec { rng_seed: 8, ..s }).unwrap();
        assert_ne!(a.samples, c.samples);
    }

    #[test]
    fn resonance_dominates_the_spectrum() {
        // naive DFT of each 0.1 s window, independent of the crate's FFT path
        let x = synthesize_bearing_signal(&spec()).unwrap();
        let n = 1200;
        let target = 3_000.0 * n as f64 / 12_000.0;
        for w in x.samples.chunks_exact(n) {
            let amps: Vec<f64> = (0..=n / 2)
                .map(|k| {
                    let (mut re, mut im) = (0.0, 0.0);
                    for (t, v) in w.iter().enumerate() {
                        let ph = -2.0 * std::f64::consts::PI * (k * t) as f64 / n as f64;
                        re += v * ph.cos();
                        im += v * ph.sin();
                    }
                    (re * re + im * im).sqrt()
                })
                .collect();
            // strongest bin in the 2.5-3.5 kHz sub-band
            let lo = 250;
            let hi = 350;
            let peak = (lo..=hi)
                .max_by(|&a, &b| amps[a].total_cmp(&amps[b]))
                .unwrap();
            assert!((peak as f64 - target).abs() <= 2.0, "peak at bin {peak}");
        }
    }

    #[test]
    fn speed_ramp_increases_impulse_density() {
        let s = FaultSynthesisSpec {
            speed_ramp: Some((50.0, 150.0)),
            duration: 1.0,
            ..spec()
        };
        let t = s.impulse_times();
        // integral of the rate over one second
        assert_eq!(t.len(), 100);
        let early = t[1] - t[0];
        let late = t[t.len() - 1] - t[t.len() - 2];
        assert!(early > 2.0 * late);
    }

    #[test]
    fn invalid_specs() {
        assert!(synthesize_bearing_signal(&FaultSynthesisSpec {
            resonance_freq: 6_000.0,
            ..spec()
        })
        .is_err());
        assert!(synthesize_bearing_signal(&FaultSynthesisSpec {
            noise_sigma: -1.0,
            ..spec()
        })
        .is_err());
        assert!(synthesize_bearing_signal(&FaultSynthesisSpec {
            fault_rate: -1.0,
            ..spec()
        })
        .is_err());
    }

    proptest! {
        #[test]
        fn segment_count_matches_closed_form(len in 1usize..2000, window in 1usize..500, hop in 1usize..500) {
            prop_assume!(len >= window);
            let x = vec![0.0; len];
            let segs = segment_signal(&x, 1.0, window, hop).unwrap();
            prop_assert_eq!(segs.len(), (len - window) / hop + 1);
        }

        #[test]
        fn contiguous_windows_concatenate_to_prefix(x in prop::collection::vec(-1e3f64..1e3, 1..400), window in 1usize..50) {
            prop_assume!(x.len() >= window);
            let segs = segment_signal(&x, 1.0, window, window).unwrap();
            let joined: Vec<f64> = segs.iter().flat_map(|s| s.samples.iter().copied()).collect();
            prop_assert_eq!(&joined[..], &x[..segs.len() * window]);
        }

        #[test]
        fn duration_times_rate_recovers_count(n in 1usize..1_000_000, fs in 1.0f64..1e6) {
            let d = segment_duration(n, fs).unwrap();
            let back = d * fs;
            prop_assert!((back - n as f64).abs() <= f64::EPSILON * n as f64);
        }
    }
}
