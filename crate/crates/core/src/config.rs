//! Run configuration and the flat `key = value` config file format.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::error::{ensure, Error, Result};
use crate::wavelet::SUPPORTED_WAVELETS;

/// Parsed `key = value` lines. `#` starts a comment line; keys may not
/// repeat.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, (usize, String)>,
    source: String,
}

impl KeyValues {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let no = i + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::parse(source, no, format!("expected key=value, got `{line}`"))
            })?;
            let key = k.trim().replace('_', "-");
            if key.is_empty() {
                return Err(Error::parse(source, no, "empty key"));
            }
            if entries
                .insert(key.clone(), (no, v.trim().to_string()))
                .is_some()
            {
                return Err(Error::parse(source, no, format!("duplicate key `{key}`")));
            }
        }
        Ok(Self {
            entries,
            source: source.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Keys use dashes; `train_fraction` and `train-fraction` are the same.
    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(|(_, v)| v.as_str())
    }

    pub fn get_parsed<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.entries.get(key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|_| {
                Error::parse(
                    &self.source,
                    *line,
                    format!("invalid value `{v}` for `{key}`"),
                )
            }),
        }
    }

    /// Rejects keys outside `allowed`.
    pub fn check_keys(&self, allowed: &[&str]) -> Result<()> {
        for (k, (line, _)) in &self.entries {
            if !allowed.contains(&k.as_str()) {
                return Err(Error::parse(
                    &self.source,
                    *line,
                    format!("unknown key `{k}`"),
                ));
            }
        }
        Ok(())
    }

    /// `(key, value)` pairs in key order.
    pub fn entries(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries
            .iter()
            .map(|(k, (_, v))| (k.as_str(), v.as_str()))
    }
}

/// Parameters of one extract/train/evaluate run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub inputs: Vec<PathBuf>,
    pub sample_rate: f64,
    pub window: usize,
    /// Defaults to `window` (non-overlapping segments).
    pub hop: Option<usize>,
    pub level: usize,
    pub peaks: usize,
    pub wavelet: String,
    pub seed: u64,
    pub train_fraction: f64,
    /// 0 trains with default forest parameters.
    pub tune_budget: usize,
    pub outputs: Vec<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            inputs: Vec::new(),
            sample_rate: 12_000.0,
            window: 600,
            hop: None,
            level: 3,
            peaks: 1,
            wavelet: "db4".into(),
            seed: 0,
            train_fraction: 0.8,
            tune_budget: 0,
            outputs: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn hop(&self) -> usize {
        self.hop.unwrap_or(self.window)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.sample_rate > 0.0 && self.sample_rate.is_finite(),
            "sample rate must be positive, got {}",
            self.sample_rate
        );
        ensure!(self.window >= 1, "window must be at least 1 sample");
        ensure!(self.hop() >= 1, "hop must be at least 1 sample");
        ensure!(self.level >= 1, "decomposition level must be at least 1");
        ensure!(self.peaks >= 1, "peak count must be at least 1");
        ensure!(
            self.level < usize::BITS as usize,
            "decomposition level {} is too large",
            self.level
        );
        if !self.window.is_multiple_of(1usize << self.level) {
            return Err(Error::NotDivisible {
                len: self.window,
                level: self.level,
            });
        }
        if !SUPPORTED_WAVELETS.contains(&self.wavelet.as_str()) && self.wavelet != "haar" {
            return Err(Error::UnknownWavelet(self.wavelet.clone()));
        }
        ensure!(
            self.train_fraction > 0.0 && self.train_fraction < 1.0,
            "train fraction must lie strictly between 0 and 1, got {}",
            self.train_fraction
        );
        Ok(())
    }

    /// Overrides fields from config-file entries. Unknown keys are
    /// rejected.
    pub fn apply(&mut self, kv: &KeyValues) -> Result<()> {
        kv.check_keys(&[
            "input",
            "fs",
            "window",
            "hop",
            "k",
            "m",
            "wavelet",
            "seed",
            "train-fraction",
            "tune-budget",
            "output",
        ])?;
        if let Some(v) = kv.get("input") {
            self.inputs = split_paths(v);
        }
        if let Some(v) = kv.get("output") {
            self.outputs = split_paths(v);
        }
        if let Some(v) = kv.get_parsed("fs")? {
            self.sample_rate = v;
        }
        if let Some(v) = kv.get_parsed("window")? {
            self.window = v;
        }
        if let Some(v) = kv.get_parsed("hop")? {
            self.hop = Some(v);
        }
        if let Some(v) = kv.get_parsed("k")? {
            self.level = v;
        }
        if let Some(v) = kv.get_parsed("m")? {
            self.peaks = v;
        }
        if let Some(v) = kv.get("wavelet") {
            self.wavelet = v.to_string();
        }
        if let Some(v) = kv.get_parsed("seed")? {
            self.seed = v;
        }
        if let Some(v) = kv.get_parsed("train-fraction")? {
            self.train_fraction = v;
        }
        if let Some(v) = kv.get_parsed("tune-budget")? {
            self.tune_budget = v;
        }
        Ok(())
    }
}

fn split_paths(v: &str) -> Vec<PathBuf> {
    v.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(PathBuf::from)
        .collect()
}
