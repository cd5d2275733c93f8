//! Periodized wavelet packet transform.
//!
//! Node `(i, s)` at level `i` splits into `(i+1, 2s)` (low-pass `h`) and
//! `(i+1, 2s+1)` (high-pass `g`):
//!
//! ```text
//! w[i+1][2s  ](t) = sum_k h(k) w[i][s]((2t - k) mod n)
//! w[i+1][2s+1](t) = sum_k g(k) w[i][s]((2t - k) mod n)
//! ```
//!
//! With circular extension every node at level `i` holds exactly `N / 2^i`
//! coefficients and each level is an orthonormal change of basis, so energy
//! is preserved level by level and the leaf waveforms sum back to the input.
//! Nodes are kept in natural (Paley) order; see [`frequency_order`] for the
//! band-ordered permutation.

use crate::error::{ensure, Error, Result};
use crate::signal::SignalSegment;
use crate::wavelet::WaveletFilterPair;

/// All wavelet packet coefficients of a segment down to `level`.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketTree {
    level: usize,
    /// `nodes[i][s]`, `i` in `0..=level`, `s` in `0..2^i`.
    nodes: Vec<Vec<Vec<f64>>>,
    wavelet: WaveletFilterPair,
    original_length: usize,
}

/// One analysis step: circular convolution with `filter` followed by
/// keeping even outputs.
pub(crate) fn analyze(x: &[f64], filter: &[f64]) -> Vec<f64> {
    let n = x.len();
    let half = n / 2;
    let mut out = vec![0.0; half];
    for (t, o) in out.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (k, &f) in filter.iter().enumerate() {
            let idx = (2 * t + n * (k / n + 1) - k) % n;
            acc += f * x[idx];
        }
        *o = acc;
    }
    out
}

/// Adjoint of [`analyze`]: upsample by two and filter, accumulating into
/// `out` (length `2 * c.len()`).
pub(crate) fn synthesize_into(c: &[f64], filter: &[f64], out: &mut [f64]) {
    let n = out.len();
    debug_assert_eq!(n, 2 * c.len());
    for (t, &v) in c.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        for (k, &f) in filter.iter().enumerate() {
            let idx = (2 * t + n * (k / n + 1) - k) % n;
            out[idx] += f * v;
        }
    }
}

fn check_divisible(len: usize, level: usize) -> Result<()> {
    ensure!(level >= 1, "decomposition level must be at least 1");
    ensure!(
        level < usize::BITS as usize - 1,
        "decomposition level {level} too large"
    );
    if len == 0 || !len.is_multiple_of(1usize << level) {
        return Err(Error::NotDivisible { len, level });
    }
    Ok(())
}

/// Decomposes `samples` to `level` with the given filter pair.
pub fn wpt_decompose_samples(
    samples: &[f64],
    level: usize,
    wavelet: &WaveletFilterPair,
) -> Result<PacketTree> {
    check_divisible(samples.len(), level)?;
    let mut nodes = Vec::with_capacity(level + 1);
    nodes.push(vec![samples.to_vec()]);
    for i in 0..level {
        let next: Vec<Vec<f64>> = nodes[i]
            .iter()
            .flat_map(|parent| [analyze(parent, &wavelet.h), analyze(parent, &wavelet.g)])
            .collect();
        nodes.push(next);
    }
    Ok(PacketTree {
        level,
        nodes,
        wavelet: wavelet.clone(),
        original_length: samples.len(),
    })
}

pub fn wpt_decompose(
    segment: &SignalSegment,
    level: usize,
    wavelet: &WaveletFilterPair,
) -> Result<PacketTree> {
    wpt_decompose_samples(&segment.samples, level, wavelet)
}

impl PacketTree {
    pub fn level(&self) -> usize {
        self.level
    }

    pub fn wavelet(&self) -> &WaveletFilterPair {
        &self.wavelet
    }

    pub fn original_length(&self) -> usize {
        self.original_length
    }

    /// Coefficients of node `(level, index)`.
    pub fn node(&self, level: usize, index: usize) -> Option<&[f64]> {
        self.nodes.get(level)?.get(index).map(Vec::as_slice)
    }

    /// All nodes of one level in natural order.
    pub fn level_nodes(&self, level: usize) -> Option<&[Vec<f64>]> {
        self.nodes.get(level).map(Vec::as_slice)
    }

    pub fn leaves(&self) -> &[Vec<f64>] {
        &self.nodes[self.level]
    }

    /// Time-domain waveform of `coeffs` placed at node `(level, index)` with
    /// every other node of the tree zeroed.
    pub fn synthesize_node(&self, level: usize, index: usize, coeffs: &[f64]) -> Result<Vec<f64>> {
        ensure!(
            level <= self.level,
            "level {level} exceeds tree depth {}",
            self.level
        );
        ensure!(
            index < (1usize << level),
            "node {index} out of range at level {level}"
        );
        let expected = self.original_length >> level;
        ensure!(
            coeffs.len() == expected,
            "node ({level}, {index}) holds {expected} coefficients, got {}",
            coeffs.len()
        );
        Ok(synthesize_path(coeffs, level, index, &self.wavelet))
    }

    /// Perfect-reconstruction inverse from the leaves.
    pub fn inverse(&self) -> Vec<f64> {
        let mut current = self.nodes[self.level].clone();
        for _ in 0..self.level {
            current = current
                .chunks_exact(2)
                .map(|pair| {
                    let mut out = vec![0.0; 2 * pair[0].len()];
                    synthesize_into(&pair[0], &self.wavelet.h, &mut out);
                    synthesize_into(&pair[1], &self.wavelet.g, &mut out);
                    out
                })
                .collect();
        }
        current.pop().unwrap_or_default()
    }
}

/// Inverse transform of a single node's coefficients up to the root. Since
/// sibling branches are zero, only the ancestors of the node contribute.
fn synthesize_path(
    coeffs: &[f64],
    level: usize,
    index: usize,
    wavelet: &WaveletFilterPair,
) -> Vec<f64> {
    let mut current = coeffs.to_vec();
    let mut s = index;
    for _ in 0..level {
        let filter = if s.is_multiple_of(2) {
            &wavelet.h
        } else {
            &wavelet.g
        };
        let mut up = vec![0.0; current.len() * 2];
        synthesize_into(&current, filter, &mut up);
        current = up;
        s /= 2;
    }
    current
}

/// The `2^k` elementary waveforms of `tree`, one per leaf in natural order,
/// each of the original length. They sum to the decomposed signal.
pub fn reconstruct_leaves(tree: &PacketTree) -> Vec<Vec<f64>> {
    tree.leaves()
        .iter()
        .enumerate()
        .map(|(j, leaf)| synthesize_path(leaf, tree.level, j, &tree.wavelet))
        .collect()
}

/// Waveform of a unit coefficient at `position` of node `(level, index)` in a
/// signal of length `n`.
pub fn synthesis_atom(
    n: usize,
    level: usize,
    index: usize,
    position: usize,
    wavelet: &WaveletFilterPair,
) -> Result<Vec<f64>> {
    check_divisible(n, level)?;
    ensure!(
        index < (1usize << level),
        "node {index} out of range at level {level}"
    );
    let len = n >> level;
    ensure!(
        position < len,
        "position {position} out of range for node length {len}"
    );
    let mut coeffs = vec![0.0; len];
    coeffs[position] = 1.0;
    Ok(synthesize_path(&coeffs, level, index, wavelet))
}

/// Natural node indices of `level` listed from the lowest to the highest
/// frequency band. Each high-pass split mirrors the spectrum, so the band
/// at position `p` is held by natural index `p ^ (p >> 1)`.
pub fn frequency_order(level: usize) -> Vec<usize> {
    (0..1usize << level).map(|p| p ^ (p >> 1)).collect()
}
