//! One-sided amplitude spectra and greedy dominant-peak selection.

use std::cell::RefCell;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{ensure, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

/// Bins `0..=N/2` of a real waveform's spectrum. A unit-amplitude sinusoid
/// centred on a bin reads 1.0 at that bin.
#[derive(Debug, Clone, PartialEq)]
pub struct AmplitudeSpectrum {
    pub freqs: Vec<f64>,
    pub amps: Vec<f64>,
    pub source_length: usize,
    pub sample_rate: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralPeak {
    pub amplitude: f64,
    /// Hz, never zero (DC is excluded).
    pub frequency: f64,
}

/// `(2/N)|X_j|` for interior bins, `(1/N)|X_j|` at DC and (even `N`) Nyquist.
/// No window and no zero padding.
pub fn amplitude_spectrum(waveform: &[f64], sample_rate: f64) -> Result<AmplitudeSpectrum> {
    let n = waveform.len();
    ensure!(n >= 2, "spectrum needs at least 2 samples, got {n}");
    ensure!(sample_rate > 0.0, "sample rate must be positive");
    let mut buf: Vec<Complex<f64>> = waveform.iter().map(|&v| Complex::new(v, 0.0)).collect();
    PLANNER.with(|p| p.borrow_mut().plan_fft_forward(n).process(&mut buf));

    let bins = n / 2 + 1;
    let inv = 1.0 / n as f64;
    let amps = buf[..bins]
        .iter()
        .enumerate()
        .map(|(j, x)| {
            let edge = j == 0 || (n.is_multiple_of(2) && j == n / 2);
            x.norm() * if edge { inv } else { 2.0 * inv }
        })
        .collect();
    let freqs = (0..bins)
        .map(|j| j as f64 * sample_rate / n as f64)
        .collect();
    Ok(AmplitudeSpectrum {
        freqs,
        amps,
        source_length: n,
        sample_rate,
    })
}

impl AmplitudeSpectrum {
    /// Number of bins available to [`top_m_peaks`] (all but DC).
    pub fn peak_budget(&self) -> usize {
        self.amps.len().saturating_sub(1)
    }
}

/// The `m` largest non-DC bins, by decreasing amplitude; equal amplitudes
/// go to the lower frequency first.
pub fn top_m_peaks(spectrum: &AmplitudeSpectrum, m: usize) -> Result<Vec<SpectralPeak>> {
    ensure!(m >= 1, "m must be at least 1");
    ensure!(
        m <= spectrum.peak_budget(),
        "m = {m} exceeds the {} non-DC bins of the spectrum",
        spectrum.peak_budget()
    );
    let amps = &spectrum.amps;
    let mut taken = vec![false; amps.len()];
    taken[0] = true;
    let mut peaks = Vec::with_capacity(m);
    for _ in 0..m {
        // strict comparison keeps the lowest index among equal amplitudes
        let mut best = None;
        for (j, &a) in amps.iter().enumerate() {
            if taken[j] {
                continue;
            }
            match best {
                Some(b) if amps[b] >= a => {}
                _ => best = Some(j),
            }
        }
        let j = best.expect("budget checked above");
        taken[j] = true;
        peaks.push(SpectralPeak {
            amplitude: amps[j],
            frequency: spectrum.freqs[j],
        });
    }
    Ok(peaks)
}
