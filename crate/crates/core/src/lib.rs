//! Dominant-frequency features for vibration-based bearing diagnosis.
//!
//! A segment of `N_o` samples is split by a level-`k` wavelet packet
//! transform into `2^k` leaves. Each leaf is reconstructed back to the time
//! domain, its amplitude spectrum computed, and the `m` largest peaks kept as
//! amplitude-times-frequency products. The resulting `m * 2^k` features feed
//! a random forest whose hyperparameters can be tuned by Gaussian-process
//! Bayesian optimization. [`bench`] measures the end-to-end system delay
//! `tau_d = N_o / f_s + T_p`.
//!
//! ```
//! use wptfft::{synthesize_bearing_signal, FaultSynthesisSpec, SignalSegment, WptFftExtractor};
//!
//! let spec = FaultSynthesisSpec {
//!     sample_rate: 12_000.0,
//!     duration: 0.05,
//!     fault_rate: 100.0,
//!     resonance_freq: 3_000.0,
//!     damping: 600.0,
//!     impulse_amplitude: 1.0,
//!     noise_sigma: 0.05,
//!     speed_ramp: None,
//!     rng_seed: 7,
//! };
//! let signal = synthesize_bearing_signal(&spec).unwrap();
//! let extractor = WptFftExtractor::new(3, 1, "db4").unwrap();
//! let features = extractor.extract(&signal).unwrap();
//! assert_eq!(features.values.len(), 8);
//! ```

pub mod bench;
pub mod config;
mod error;
pub mod exec;
pub mod features;
pub mod io;
pub mod ml;
pub mod pipeline;
pub mod seeds;
pub mod selection;
pub mod signal;
pub mod spectrum;
pub mod wavelet;
pub mod wpt;

pub use error::{Error, ErrorClass, Result};
pub use exec::Execution;
pub use features::{extract_features, FeatureMeta, FeatureVector, WptFftExtractor};
pub use selection::{select_wavelet_and_level, SelectionResult, SelectionScore};
pub use signal::{
    segment_duration, segment_signal, synthesize_bearing_signal, FaultSynthesisSpec, SignalSegment,
};
pub use spectrum::{amplitude_spectrum, top_m_peaks, AmplitudeSpectrum, SpectralPeak};
pub use wavelet::{wavelet_filters, WaveletFilterPair, SUPPORTED_WAVELETS};
pub use wpt::{reconstruct_leaves, wpt_decompose, PacketTree};
