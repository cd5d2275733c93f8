//! System-delay model and processing-time measurement.
//!
//! The delay of one diagnosis is the time to acquire the segment plus the
//! time to process it, `tau_d = N_o / f_s + T_p`. `T_p` covers feature
//! extraction and classification with the model already in memory; file
//! I/O and model loading are excluded. Measurements run on the calling
//! thread only, one grid cell after another.

use std::hint::black_box;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use log::{info, warn};

use crate::error::{ensure, Result};
use crate::exec::Execution;
use crate::features::WptFftExtractor;
use crate::ml::{train_forest_with, ForestModel, ForestParams, LabeledDataset};
use crate::signal::{segment_signal, synthesize_bearing_signal, FaultSynthesisSpec, SignalSegment};

/// Summary of repeated timings, in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingStats {
    pub median: f64,
    pub p95: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub reps: usize,
    /// Smallest nonzero step observed on the clock.
    pub clock_resolution: f64,
    /// The clock is coarser than 1 ms or than the median itself.
    pub coarse_clock: bool,
}

fn clock_resolution() -> f64 {
    let mut best = Duration::MAX;
    for _ in 0..64 {
        let a = Instant::now();
        let mut b = Instant::now();
        while b == a {
            b = Instant::now();
        }
        best = best.min(b - a);
    }
    best.as_secs_f64()
}

/// Nearest-rank percentile of sorted data.
fn percentile(sorted: &[f64], q: f64) -> f64 {
    let rank = (q * sorted.len() as f64).ceil() as usize;
    sorted[rank.clamp(1, sorted.len()) - 1]
}

fn median(sorted: &[f64]) -> f64 {
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

impl TimingStats {
    pub fn from_samples(mut samples: Vec<f64>, clock_resolution: f64) -> Result<Self> {
        ensure!(!samples.is_empty(), "no timing samples");
        samples.sort_by(f64::total_cmp);
        let med = median(&samples);
        Ok(Self {
            median: med,
            p95: percentile(&samples, 0.95),
            mean: samples.iter().sum::<f64>() / samples.len() as f64,
            min: samples[0],
            max: samples[samples.len() - 1],
            reps: samples.len(),
            clock_resolution,
            coarse_clock: clock_resolution > 1e-3 || clock_resolution > med,
        })
    }
}

/// Runs `work` `warmup` times untimed, then `reps` timed runs on a
/// monotonic clock.
pub fn measure_processing_time<R, F: FnMut() -> R>(
    mut work: F,
    warmup: usize,
    reps: usize,
) -> Result<TimingStats> {
    ensure!(
        reps >= 5,
        "at least 5 timed repetitions are required, got {reps}"
    );
    for _ in 0..warmup {
        black_box(work());
    }
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        black_box(work());
        samples.push(start.elapsed().as_secs_f64());
    }
    let stats = TimingStats::from_samples(samples, clock_resolution())?;
    if stats.coarse_clock {
        warn!(
            "clock resolution {:.3e} s is coarse relative to the measured median {:.3e} s",
            stats.clock_resolution, stats.median
        );
    }
    Ok(stats)
}

/// Times feature extraction plus prediction of one segment with a loaded
/// model.
pub fn measure_pipeline(
    extractor: &WptFftExtractor,
    model: &ForestModel,
    segment: &SignalSegment,
    warmup: usize,
    reps: usize,
) -> Result<TimingStats> {
    // fail before timing if the model cannot accept these features
    let probe = extractor.extract(segment)?;
    model.predict(&probe)?;
    measure_processing_time(
        || {
            let f = extractor
                .extract(black_box(segment))
                .expect("checked above");
            model.predict(&f).expect("checked above")
        },
        warmup,
        reps,
    )
}

/// `tau_d = N_o / f_s + T_p`.
pub fn system_delay(n_o: usize, sample_rate: f64, tp_median: f64) -> f64 {
    n_o as f64 / sample_rate + tp_median
}

/// How grid cells whose window is not divisible by `2^k` are handled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum LengthPolicy {
    /// Drop the cell and record why.
    #[default]
    Skip,
    /// Zero-pad each window up to the next multiple of `2^k` before
    /// decomposition. Acquisition time still counts only the real samples.
    ZeroPad,
}

pub fn padded_len(n: usize, level: usize) -> usize {
    let block = 1usize << level;
    n.div_ceil(block) * block
}

fn pad(segment: &SignalSegment, len: usize) -> SignalSegment {
    let mut s = segment.clone();
    s.samples.resize(len, 0.0);
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayRow {
    pub window: usize,
    pub t_vin: f64,
    pub level: usize,
    pub peaks: usize,
    pub feature_size: usize,
    pub tp: TimingStats,
    /// Feature extraction alone, when per-stage timing is enabled.
    pub extract: Option<TimingStats>,
    pub tau_d: f64,
    /// Length actually decomposed (differs from `window` when padded).
    pub processed_len: usize,
    /// Held-out accuracy of the cell's model.
    pub accuracy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedCell {
    pub window: usize,
    pub level: usize,
    pub peaks: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DelayReport {
    pub rows: Vec<DelayRow>,
    pub skipped: Vec<SkippedCell>,
    pub environment: String,
    pub sample_rate: f64,
}

/// Grid of `(window, k, m)` cells plus the synthetic data used to train a
/// model per cell.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub windows: Vec<usize>,
    pub levels: Vec<usize>,
    pub peaks: Vec<usize>,
    pub wavelet: String,
    pub classes: Vec<(String, FaultSynthesisSpec)>,
    pub segments_per_class: usize,
    pub forest: ForestParams,
    pub seed: u64,
    pub warmup: usize,
    pub reps: usize,
    pub length_policy: LengthPolicy,
    pub stage_timing: bool,
    /// Reuse `model_<window>_<k>_<m>.txt` from here when present, and save
    /// newly trained models into it.
    pub model_dir: Option<PathBuf>,
    pub environment_note: String,
}

impl SweepConfig {
    /// The window, level and peak grid of the published CWRU table.
    pub fn published_grid(classes: Vec<(String, FaultSynthesisSpec)>) -> Self {
        Self {
            windows: vec![300, 600, 1200, 2400],
            levels: vec![2, 3, 5],
            peaks: vec![1, 2, 3],
            wavelet: "db4".into(),
            classes,
            segments_per_class: 40,
            forest: ForestParams {
                n_trees: 50,
                ..ForestParams::default()
            },
            seed: 0,
            warmup: 5,
            reps: 30,
            length_policy: LengthPolicy::ZeroPad,
            stage_timing: false,
            model_dir: None,
            environment_note: String::new(),
        }
    }
}

pub fn environment_descriptor(note: &str) -> String {
    let threads = std::thread::available_parallelism().map_or(1, |n| n.get());
    let mut s = format!(
        "os={} arch={} threads_available={threads} timing=single-threaded",
        std::env::consts::OS,
        std::env::consts::ARCH
    );
    if !note.is_empty() {
        s.push_str(" note=");
        s.push_str(note);
    }
    s
}

/// Trains (or loads) a model per grid cell and measures its processing
/// time. Cells run strictly one after another.
pub fn delay_sweep(cfg: &SweepConfig) -> Result<DelayReport> {
    ensure!(!cfg.classes.is_empty(), "sweep needs at least one class");
    ensure!(
        cfg.segments_per_class >= 2,
        "need at least 2 segments per class"
    );
    let sample_rate = cfg.classes[0].1.sample_rate;
    ensure!(
        cfg.classes
            .iter()
            .all(|(_, s)| s.sample_rate == sample_rate),
        "all classes must share one sample rate"
    );
    let max_window = cfg.windows.iter().copied().max().unwrap_or(0);
    // one extra segment per class is held out for timing and scoring
    let needed = (cfg.segments_per_class + 1) * max_window;
    let recordings: Vec<(String, Vec<f64>)> = cfg
        .classes
        .iter()
        .map(|(label, spec)| {
            let mut spec = spec.clone();
            spec.duration = needed as f64 / spec.sample_rate;
            synthesize_bearing_signal(&spec).map(|s| (label.clone(), s.samples))
        })
        .collect::<Result<_>>()?;

    let mut rows = Vec::new();
    let mut skipped = Vec::new();
    for &window in &cfg.windows {
        let per_class: Vec<(String, Vec<SignalSegment>)> = recordings
            .iter()
            .map(|(label, x)| {
                segment_signal(x, sample_rate, window, window).map(|mut segs| {
                    segs.truncate(cfg.segments_per_class + 1);
                    (label.clone(), segs)
                })
            })
            .collect::<Result<_>>()?;
        for &level in &cfg.levels {
            let divisible = window % (1usize << level) == 0;
            let processed_len = match (divisible, cfg.length_policy) {
                (true, _) => window,
                (false, LengthPolicy::ZeroPad) => padded_len(window, level),
                (false, LengthPolicy::Skip) => {
                    for &peaks in &cfg.peaks {
                        let reason = format!("window {window} is not divisible by 2^{level}");
                        info!("skipping cell N_o={window} k={level} m={peaks}: {reason}");
                        skipped.push(SkippedCell {
                            window,
                            level,
                            peaks,
                            reason,
                        });
                    }
                    continue;
                }
            };
            for &peaks in &cfg.peaks {
                rows.push(run_cell(
                    cfg,
                    &per_class,
                    window,
                    processed_len,
                    level,
                    peaks,
                    sample_rate,
                )?);
            }
        }
    }
    Ok(DelayReport {
        rows,
        skipped,
        environment: environment_descriptor(&cfg.environment_note),
        sample_rate,
    })
}

fn run_cell(
    cfg: &SweepConfig,
    per_class: &[(String, Vec<SignalSegment>)],
    window: usize,
    processed_len: usize,
    level: usize,
    peaks: usize,
    sample_rate: f64,
) -> Result<DelayRow> {
    let extractor = WptFftExtractor::new(level, peaks, &cfg.wavelet)?;
    let prepare = |s: &SignalSegment| {
        if processed_len == window {
            s.clone()
        } else {
            pad(s, processed_len)
        }
    };

    let model_path = cfg
        .model_dir
        .as_ref()
        .map(|d| d.join(format!("model_{window}_{level}_{peaks}.txt")));
    let model = match model_path.as_ref().filter(|p| p.exists()) {
        Some(p) => crate::io::load_model(p)?,
        None => {
            let mut vectors = Vec::new();
            for (label, segs) in per_class {
                let train: Vec<SignalSegment> =
                    segs[..cfg.segments_per_class].iter().map(prepare).collect();
                for fv in extractor.extract_batch(&train, Execution::Parallel)? {
                    vectors.push((fv, label.clone()));
                }
            }
            let data = LabeledDataset::from_vectors(vectors)?;
            let model = train_forest_with(&data, &cfg.forest, cfg.seed, Execution::Parallel)?;
            if let Some(p) = &model_path {
                crate::io::save_model(p, &model)?;
            }
            model
        }
    };

    let held_out: Vec<(String, SignalSegment)> = per_class
        .iter()
        .map(|(l, segs)| (l.clone(), prepare(&segs[cfg.segments_per_class])))
        .collect();
    let correct = held_out
        .iter()
        .filter(|(l, s)| {
            extractor
                .extract(s)
                .and_then(|f| model.predict(&f))
                .map(|p| &p.label == l)
                .unwrap_or(false)
        })
        .count();

    let probe = &held_out[0].1;
    let tp = measure_pipeline(&extractor, &model, probe, cfg.warmup, cfg.reps)?;
    let extract = if cfg.stage_timing {
        Some(measure_processing_time(
            || extractor.extract(black_box(probe)),
            cfg.warmup,
            cfg.reps,
        )?)
    } else {
        None
    };
    let t_vin = window as f64 / sample_rate;
    Ok(DelayRow {
        window,
        t_vin,
        level,
        peaks,
        feature_size: extractor.feature_len(),
        tp,
        extract,
        tau_d: system_delay(window, sample_rate, tp.median),
        processed_len,
        accuracy: correct as f64 / held_out.len() as f64,
    })
}

fn grouped_mean<K: PartialOrd + Copy>(pairs: impl Iterator<Item = (K, f64)>) -> Vec<(K, f64)> {
    let mut groups: Vec<(K, f64, usize)> = Vec::new();
    for (k, v) in pairs {
        match groups.iter_mut().find(|(g, _, _)| *g == k) {
            Some(g) => {
                g.1 += v;
                g.2 += 1;
            }
            None => groups.push((k, v, 1)),
        }
    }
    groups.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("comparable keys"));
    groups
        .into_iter()
        .map(|(k, s, n)| (k, s / n as f64))
        .collect()
}

/// Relative increase of the averaged delay between the smallest and the
/// largest value of each swept quantity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dominance {
    pub duration_growth: f64,
    pub size_growth: f64,
}

impl Dominance {
    pub fn duration_dominates(&self) -> bool {
        self.duration_growth > self.size_growth
    }
}

impl DelayReport {
    /// Mean `tau_d` per acquisition time, averaged over feature sizes.
    pub fn by_duration(&self) -> Vec<(f64, f64)> {
        grouped_mean(self.rows.iter().map(|r| (r.t_vin, r.tau_d)))
    }

    /// Mean `tau_d` per feature size, averaged over acquisition times.
    pub fn by_size(&self) -> Vec<(usize, f64)> {
        grouped_mean(self.rows.iter().map(|r| (r.feature_size, r.tau_d)))
    }

    /// Mean `tau_d` per acquisition time for one feature size.
    pub fn by_duration_at_size(&self, size: usize) -> Vec<(f64, f64)> {
        grouped_mean(
            self.rows
                .iter()
                .filter(|r| r.feature_size == size)
                .map(|r| (r.t_vin, r.tau_d)),
        )
    }

    pub fn dominance(&self) -> Option<Dominance> {
        let d = self.by_duration();
        let s = self.by_size();
        if d.len() < 2 || s.len() < 2 {
            return None;
        }
        let growth = |a: f64, b: f64| (b - a) / a;
        Some(Dominance {
            duration_growth: growth(d[0].1, d[d.len() - 1].1),
            size_growth: growth(s[0].1, s[s.len() - 1].1),
        })
    }

    /// Per `(k, m)`, the number of times median `T_p` decreases as the
    /// window grows.
    pub fn tp_inversions(&self) -> Vec<((usize, usize), usize)> {
        let mut keys: Vec<(usize, usize)> = self.rows.iter().map(|r| (r.level, r.peaks)).collect();
        keys.sort_unstable();
        keys.dedup();
        keys.into_iter()
            .map(|key| {
                let mut cells: Vec<&DelayRow> = self
                    .rows
                    .iter()
                    .filter(|r| (r.level, r.peaks) == key)
                    .collect();
                cells.sort_by_key(|r| r.window);
                let inv = cells
                    .windows(2)
                    .filter(|w| w[1].tp.median < w[0].tp.median)
                    .count();
                (key, inv)
            })
            .collect()
    }

    /// Least-squares slope of log(median time) against log(window) for one
    /// `(k, m)`; uses extraction-only timings when recorded.
    pub fn complexity_slope(&self, level: usize, peaks: usize) -> Option<f64> {
        let pts: Vec<(f64, f64)> = self
            .rows
            .iter()
            .filter(|r| r.level == level && r.peaks == peaks)
            .map(|r| {
                let t = r.extract.map_or(r.tp.median, |e| e.median);
                ((r.window as f64).ln(), t.max(1e-12).ln())
            })
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        (sxx > 0.0).then(|| sxy / sxx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_delays() {
        assert!((system_delay(300, 12_000.0, 0.017) - 0.042).abs() < 1e-15);
        assert!((system_delay(600, 12_000.0, 0.015) - 0.065).abs() < 1e-15);
        assert_eq!(system_delay(600, 12_000.0, 0.0), 0.05);
    }

    #[test]
    fn statistic_ordering() {
        let s = measure_processing_time(|| (0..100).sum::<u64>(), 10, 100).unwrap();
        assert!(s.min <= s.median && s.median <= s.p95 && s.p95 <= s.max);
        assert!(s.median <= s.max && s.mean <= s.max && s.min <= s.mean);
        assert_eq!(s.reps, 100);
    }

    #[test]
    fn too_few_reps() {
        assert!(measure_processing_time(|| 1, 0, 1).is_err());
        assert!(measure_processing_time(|| 1, 0, 4).is_err());
        assert!(measure_processing_time(|| 1, 0, 5).is_ok());
    }

    #[test]
    fn stats_from_known_samples() {
        let s = TimingStats::from_samples(vec![5.0, 1.0, 3.0, 2.0, 4.0], 1e-9).unwrap();
        assert_eq!(
            (s.median, s.mean, s.min, s.max, s.p95),
            (3.0, 3.0, 1.0, 5.0, 5.0)
        );
        let s = TimingStats::from_samples((1..=100).map(f64::from).collect(), 1e-9).unwrap();
        assert_eq!(s.p95, 95.0);
        assert_eq!(s.median, 50.5);
        assert!(!s.coarse_clock);
        assert!(
            TimingStats::from_samples(vec![1e-6; 5], 1e-3 * 2.0)
                .unwrap()
                .coarse_clock
        );
    }

    #[test]
    fn padding() {
        assert_eq!(padded_len(300, 5), 320);
        assert_eq!(padded_len(600, 3), 600);
        assert_eq!(padded_len(1200, 5), 1216);
    }

    fn tiny_classes() -> Vec<(String, FaultSynthesisSpec)> {
        let base = FaultSynthesisSpec {
            sample_rate: 12_000.0,
            duration: 1.0,
            fault_rate: 0.0,
            resonance_freq: 2_000.0,
            damping: 600.0,
            impulse_amplitude: 1.0,
            noise_sigma: 0.1,
            speed_ramp: None,
            rng_seed: 1,
        };
        vec![
            ("healthy".into(), base.clone()),
            (
                "fault".into(),
                FaultSynthesisSpec {
                    fault_rate: 120.0,
                    rng_seed: 2,
                    ..base
                },
            ),
        ]
    }

    fn tiny_config() -> SweepConfig {
        SweepConfig {
            windows: vec![300],
            levels: vec![2],
            peaks: vec![1],
            segments_per_class: 6,
            forest: ForestParams {
                n_trees: 5,
                ..Default::default()
            },
            warmup: 1,
            reps: 5,
            length_policy: LengthPolicy::Skip,
            ..SweepConfig::published_grid(tiny_classes())
        }
    }

    #[test]
    fn singleton_grid() {
        let r = delay_sweep(&tiny_config()).unwrap();
        assert_eq!(r.rows.len(), 1);
        let row = &r.rows[0];
        assert_eq!(row.feature_size, 4);
        assert_eq!(row.t_vin, 0.025);
        assert_eq!(row.tau_d, row.t_vin + row.tp.median);
        assert_eq!(r.by_duration(), vec![(row.t_vin, row.tau_d)]);
        assert_eq!(r.by_size(), vec![(4, row.tau_d)]);
        assert!(r.dominance().is_none());
    }

    #[test]
    fn skip_and_pad_policies() {
        let mut cfg = tiny_config();
        cfg.levels = vec![2, 3];
        let r = delay_sweep(&cfg).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert_eq!(r.skipped.len(), 1);
        assert!(r.skipped[0].reason.contains("not divisible"));

        cfg.length_policy = LengthPolicy::ZeroPad;
        let r = delay_sweep(&cfg).unwrap();
        assert_eq!(r.rows.len(), 2);
        assert_eq!(r.rows[1].processed_len, 304);
        assert_eq!(r.rows[1].t_vin, 0.025);
        assert!(r
            .rows
            .iter()
            .all(|row| row.feature_size == row.peaks << row.level));
    }

    #[test]
    fn model_store_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = tiny_config();
        cfg.model_dir = Some(dir.path().to_path_buf());
        let a = delay_sweep(&cfg).unwrap();
        assert!(dir.path().join("model_300_2_1.txt").exists());
        let b = delay_sweep(&cfg).unwrap();
        assert_eq!(a.rows[0].accuracy, b.rows[0].accuracy);
    }
}
