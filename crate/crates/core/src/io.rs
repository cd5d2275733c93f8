//! Plain-text file formats: raw signals, feature tables, models, selection
//! tables, delay reports and synthetic dataset descriptions.
//!
//! Reals are written in the shortest form that parses back to the same
//! bits, so every format round-trips losslessly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::bench::DelayReport;
use crate::error::{ensure, Error, Result};
use crate::features::FeatureMeta;
use crate::ml::{Evaluation, ForestModel, LabeledDataset};
use crate::selection::SelectionScore;
use crate::signal::{synthesize_bearing_signal, FaultSynthesisSpec, SignalSegment};

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn check_label(label: &str) -> Result<()> {
    ensure!(!label.is_empty(), "labels must be non-empty");
    ensure!(
        !label.contains([',', '\n', '\r', '=', '#']),
        "label `{label}` contains a reserved character"
    );
    Ok(())
}

/// A single-channel recording read from a signal CSV.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub name: String,
    pub label: String,
    pub signal: SignalSegment,
}

/// Parses a signal CSV: header `sample` or `sample,label`, one real per
/// line. Blank lines are errors. A label column must hold a single value.
pub fn parse_signal_csv(text: &str, source: &str) -> Result<(Vec<f64>, Option<String>)> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let (_, header) = lines
        .next()
        .ok_or_else(|| Error::parse(source, 1, "empty file; expected header `sample`"))?;
    let with_label = match header.trim() {
        "sample" => false,
        "sample,label" => true,
        other => {
            return Err(Error::parse(
                source,
                1,
                format!("expected header `sample` or `sample,label`, got `{other}`"),
            ))
        }
    };
    let mut samples = Vec::new();
    let mut label: Option<String> = None;
    for (no, line) in lines {
        if line.trim().is_empty() {
            return Err(Error::parse(source, no, "blank line"));
        }
        let (value, row_label) = if with_label {
            let (v, l) = line
                .split_once(',')
                .ok_or_else(|| Error::parse(source, no, "expected `sample,label`"))?;
            (v, Some(l.trim()))
        } else {
            (line, None)
        };
        let v: f64 = value.trim().parse().map_err(|_| {
            Error::parse(source, no, format!("non-numeric sample `{}`", value.trim()))
        })?;
        if !v.is_finite() {
            return Err(Error::parse(
                source,
                no,
                format!("non-finite sample `{}`", value.trim()),
            ));
        }
        samples.push(v);
        if let Some(l) = row_label {
            match &label {
                None => label = Some(l.to_string()),
                Some(prev) if prev != l => {
                    return Err(Error::parse(
                        source,
                        no,
                        format!("label `{l}` differs from earlier label `{prev}`"),
                    ))
                }
                Some(_) => {}
            }
        }
    }
    Ok((samples, label))
}

pub fn read_signal_file(path: &Path) -> Result<(Vec<f64>, Option<String>)> {
    parse_signal_csv(&read(path)?, &path.display().to_string())
}

pub fn write_signal_csv(path: &Path, samples: &[f64], label: Option<&str>) -> Result<()> {
    let mut s = String::with_capacity(samples.len() * 22);
    match label {
        Some(l) => {
            check_label(l)?;
            s.push_str("sample,label\n");
            for v in samples {
                let _ = writeln!(s, "{v:?},{l}");
            }
        }
        None => {
            s.push_str("sample\n");
            for v in samples {
                let _ = writeln!(s, "{v:?}");
            }
        }
    }
    write(path, &s)
}

/// Maps file-name keys to class labels. Empty means every key is its own
/// label.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LabelMap(pub BTreeMap<String, String>);

impl LabelMap {
    /// Parses `key=label,key=label`.
    pub fn parse(spec: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (k, v) = part.split_once('=').ok_or_else(|| {
                Error::InvalidParameter(format!("label map entry `{part}` is not key=label"))
            })?;
            check_label(v.trim())?;
            map.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(Self(map))
    }

    fn resolve(&self, key: &str) -> Result<String> {
        if self.0.is_empty() {
            return Ok(key.to_string());
        }
        self.0
            .get(key)
            .cloned()
            .ok_or_else(|| Error::UnmappedLabel(key.to_string()))
    }
}

/// File-name key: the stem up to its first underscore (`ir_07.csv` -> `ir`).
pub fn label_key(path: &Path) -> String {
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    stem.split('_').next().unwrap_or_default().to_string()
}

/// Loads one CSV file or every `*.csv` in a directory (sorted by name).
/// The label is the file's label column when present, otherwise the
/// file-name key passed through `label_map`.
pub fn load_signals(path: &Path, sample_rate: f64, label_map: &LabelMap) -> Result<Vec<Recording>> {
    let files: Vec<PathBuf> = if path.is_dir() {
        let mut v: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| Error::io(path, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        v.sort();
        v
    } else {
        vec![path.to_path_buf()]
    };
    if files.is_empty() {
        return Err(Error::Dataset(format!(
            "no .csv files in {}",
            path.display()
        )));
    }
    files
        .iter()
        .map(|f| {
            let (samples, label) = read_signal_file(f)?;
            let label = match label {
                Some(l) => l,
                None => label_map.resolve(&label_key(f))?,
            };
            Ok(Recording {
                name: f
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_default(),
                signal: SignalSegment::new(samples, sample_rate)?.with_label(label.clone()),
                label,
            })
        })
        .collect()
}

pub fn feature_csv(data: &LabeledDataset) -> Result<String> {
    data.validate()?;
    let m = &data.meta;
    let mut s = String::new();
    let _ = writeln!(s, "# k={}", m.level);
    let _ = writeln!(s, "# m={}", m.peaks);
    let _ = writeln!(s, "# wavelet={}", m.wavelet);
    let _ = writeln!(s, "# fs={:?}", m.sample_rate);
    let _ = writeln!(s, "# window={}", m.window);
    for i in 0..m.size() {
        let _ = write!(s, "f_{i},");
    }
    s.push_str("label\n");
    for (row, label) in data.features.iter().zip(&data.labels) {
        check_label(label)?;
        for v in row {
            let _ = write!(s, "{v:?},");
        }
        s.push_str(label);
        s.push('\n');
    }
    Ok(s)
}

pub fn write_feature_csv(path: &Path, data: &LabeledDataset) -> Result<()> {
    write(path, &feature_csv(data)?)
}

pub fn parse_feature_csv(text: &str, source: &str) -> Result<LabeledDataset> {
    let mut meta_fields: BTreeMap<String, (usize, String)> = BTreeMap::new();
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let mut header = None;
    for (no, line) in lines.by_ref() {
        if let Some(c) = line.strip_prefix('#') {
            if let Some((k, v)) = c.split_once('=') {
                meta_fields.insert(k.trim().to_string(), (no, v.trim().to_string()));
            }
            continue;
        }
        header = Some((no, line));
        break;
    }
    let (hno, header) = header.ok_or_else(|| Error::parse(source, 1, "missing header row"))?;
    let field = |key: &str| -> Result<(usize, String)> {
        meta_fields
            .get(key)
            .cloned()
            .ok_or_else(|| Error::parse(source, hno, format!("missing `# {key}=` metadata line")))
    };
    fn num<T: std::str::FromStr>(src: &str, f: (usize, String)) -> Result<T> {
        f.1.parse()
            .map_err(|_| Error::parse(src, f.0, format!("invalid metadata value `{}`", f.1)))
    }
    let meta = FeatureMeta {
        level: num(source, field("k")?)?,
        peaks: num(source, field("m")?)?,
        wavelet: field("wavelet")?.1,
        sample_rate: num(source, field("fs")?)?,
        window: num(source, field("window")?)?,
    };
    let width = meta.size();
    let cols: Vec<&str> = header.split(',').collect();
    let expected: Vec<String> = (0..width)
        .map(|i| format!("f_{i}"))
        .chain(["label".to_string()])
        .collect();
    if cols != expected {
        return Err(Error::parse(
            source,
            hno,
            format!(
                "header does not match k={} m={} ({} feature columns + label)",
                meta.level, meta.peaks, width
            ),
        ));
    }
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (no, line) in lines {
        if line.trim().is_empty() {
            return Err(Error::parse(source, no, "blank line"));
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != width + 1 {
            return Err(Error::parse(
                source,
                no,
                format!("expected {} fields, got {}", width + 1, parts.len()),
            ));
        }
        let row = parts[..width]
            .iter()
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::parse(source, no, format!("non-numeric feature `{p}`")))
            })
            .collect::<Result<Vec<f64>>>()?;
        features.push(row);
        labels.push(parts[width].trim().to_string());
    }
    LabeledDataset::new(features, labels, meta)
}

pub fn read_feature_csv(path: &Path) -> Result<LabeledDataset> {
    parse_feature_csv(&read(path)?, &path.display().to_string())
}

pub fn save_model(path: &Path, model: &ForestModel) -> Result<()> {
    for c in &model.classes {
        check_label(c)?;
    }
    write(path, &model.to_text())
}

pub fn load_model(path: &Path) -> Result<ForestModel> {
    ForestModel::from_text(&read(path)?, &path.display().to_string())
}

pub fn selection_csv(scores: &[SelectionScore]) -> String {
    let mut s = String::from("wavelet,level,energy,entropy,ratio\n");
    for r in scores {
        let ratio = if r.ratio.is_infinite() {
            "inf".to_string()
        } else {
            format!("{:?}", r.ratio)
        };
        let _ = writeln!(
            s,
            "{},{},{:?},{:?},{ratio}",
            r.wavelet, r.level, r.energy, r.entropy
        );
    }
    s
}

/// Human-readable evaluation summary; byte-identical for identical inputs.
pub fn evaluation_report(e: &Evaluation) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "samples={}", e.n_samples);
    let _ = writeln!(s, "accuracy={:?}", e.accuracy);
    match e.macro_auc {
        Some(a) => {
            let _ = writeln!(s, "macro_auc_ovr={a:?}");
        }
        None => s.push_str("macro_auc_ovr=undefined\n"),
    }
    for (c, auc) in e.classes.iter().zip(&e.per_class_auc) {
        match auc {
            Some(a) => {
                let _ = writeln!(s, "auc[{c}]={a:?}");
            }
            None => {
                let _ = writeln!(s, "auc[{c}]=excluded");
            }
        }
    }
    if e.unknown_labels > 0 {
        let _ = writeln!(s, "unknown_labels={}", e.unknown_labels);
    }
    let _ = writeln!(
        s,
        "confusion (rows=true, cols=predicted): {}",
        e.classes.join(",")
    );
    for (c, row) in e.classes.iter().zip(&e.confusion) {
        let cells: Vec<String> = row.iter().map(usize::to_string).collect();
        let _ = writeln!(s, "{c},{}", cells.join(","));
    }
    s
}

pub const DELAY_CSV_HEADER: &str = "N_o,T_vin_s,k,m,S,Tp_median_s,Tp_mean_s,Tp_p95_s,tau_d_s";

pub fn delay_csv(report: &DelayReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "# environment: {}", report.environment);
    let _ = writeln!(s, "# fs={:?}", report.sample_rate);
    for sk in &report.skipped {
        let _ = writeln!(
            s,
            "# skipped N_o={} k={} m={}: {}",
            sk.window, sk.level, sk.peaks, sk.reason
        );
    }
    s.push_str(DELAY_CSV_HEADER);
    s.push('\n');
    for r in &report.rows {
        let _ = writeln!(
            s,
            "{},{:?},{},{},{},{:?},{:?},{:?},{:?}",
            r.window,
            r.t_vin,
            r.level,
            r.peaks,
            r.feature_size,
            r.tp.median,
            r.tp.mean,
            r.tp.p95,
            r.tau_d
        );
    }
    s
}

/// The two averaged views: delay against acquisition time and against
/// feature size.
pub fn delay_views_csv(report: &DelayReport) -> String {
    let mut s = String::from("view,x,avg_tau_d_s\n");
    for (t, d) in report.by_duration() {
        let _ = writeln!(s, "T_vin_s,{t:?},{d:?}");
    }
    for (size, d) in report.by_size() {
        let _ = writeln!(s, "S,{size},{d:?}");
    }
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    write(path, text)
}

/// One class of a synthetic dataset description.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct SyntheticClass {
    pub label: String,
    #[serde(default)]
    pub fault_rate: f64,
    #[serde(default)]
    pub resonance_freq: f64,
    #[serde(default)]
    pub damping: f64,
    #[serde(default)]
    pub impulse_amplitude: f64,
    pub noise_sigma: f64,
    #[serde(default)]
    pub speed_ramp: Option<(f64, f64)>,
    pub seed: u64,
}

/// TOML description of a labeled synthetic dataset:
///
/// ```toml
/// sample_rate = 12000.0
/// duration = 20.0
/// recordings_per_class = 1
///
/// [[class]]
/// label = "healthy"
/// noise_sigma = 0.2
/// seed = 1
/// ```
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticDatasetSpec {
    pub sample_rate: f64,
    pub duration: f64,
    #[serde(default = "one")]
    pub recordings_per_class: usize,
    #[serde(rename = "class")]
    pub classes: Vec<SyntheticClass>,
}

fn one() -> usize {
    1
}

impl SyntheticDatasetSpec {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let spec: Self = toml::from_str(text).map_err(|e| {
            let line = e
                .span()
                .map(|s| text[..s.start].lines().count().max(1))
                .unwrap_or(0);
            Error::parse(source, line, e.message().to_string())
        })?;
        ensure!(!spec.classes.is_empty(), "synthetic dataset has no classes");
        ensure!(
            spec.recordings_per_class >= 1,
            "recordings_per_class must be at least 1"
        );
        for c in &spec.classes {
            check_label(&c.label)?;
            ensure!(
                !c.label.contains('_'),
                "synthetic labels may not contain `_` (`{}`)",
                c.label
            );
        }
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&read(path)?, &path.display().to_string())
    }

    /// Per-recording synthesis parameters, class-major. Recording `r` of a
    /// class uses seed `class.seed + r`.
    pub fn recording_specs(&self) -> Vec<(String, FaultSynthesisSpec)> {
        self.classes
            .iter()
            .flat_map(|c| {
                (0..self.recordings_per_class).map(move |r| {
                    (
                        c.label.clone(),
                        FaultSynthesisSpec {
                            sample_rate: self.sample_rate,
                            duration: self.duration,
                            fault_rate: c.fault_rate,
                            resonance_freq: c.resonance_freq,
                            damping: c.damping,
                            impulse_amplitude: c.impulse_amplitude,
                            noise_sigma: c.noise_sigma,
                            speed_ramp: c.speed_ramp,
                            rng_seed: c.seed.wrapping_add(r as u64),
                        },
                    )
                })
            })
            .collect()
    }

    pub fn generate(&self) -> Result<Vec<Recording>> {
        let mut counters: BTreeMap<String, usize> = BTreeMap::new();
        self.recording_specs()
            .into_iter()
            .map(|(label, spec)| {
                let idx = counters.entry(label.clone()).or_default();
                let name = format!("{label}_{idx:03}");
                *idx += 1;
                let signal = synthesize_bearing_signal(&spec)?.with_label(label.clone());
                Ok(Recording {
                    name,
                    label,
                    signal,
                })
            })
            .collect()
    }
}

/// Writes each recording to `<dir>/<name>.csv` with a single `sample`
/// column (labels travel in the file name).
pub fn write_recordings(dir: &Path, recordings: &[Recording]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    recordings
        .iter()
        .map(|r| {
            let p = dir.join(format!("{}.csv", r.name));
            write_signal_csv(&p, &r.signal.samples, None)?;
            Ok(p)
        })
        .collect()
}
