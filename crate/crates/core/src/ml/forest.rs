//! Bagged CART classification forest (Gini criterion).

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::dataset::LabeledDataset;
use crate::error::{ensure, Error, Result};
use crate::exec::Execution;
use crate::features::{FeatureMeta, FeatureVector};
use crate::seeds;

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features examined per split; `None` means `ceil(sqrt(S))`.
    pub features_per_split: Option<usize>,
    /// Train each tree on a with-replacement resample of the rows.
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: 32,
            min_samples_leaf: 1,
            features_per_split: None,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn resolved_features_per_split(&self, n_features: usize) -> usize {
        self.features_per_split
            .unwrap_or_else(|| (n_features as f64).sqrt().ceil() as usize)
            .clamp(1, n_features.max(1))
    }

    fn validate(&self) -> Result<()> {
        ensure!(self.n_trees >= 1, "n_trees must be at least 1");
        ensure!(
            self.min_samples_leaf >= 1,
            "min_samples_leaf must be at least 1"
        );
        if let Some(f) = self.features_per_split {
            ensure!(f >= 1, "features_per_split must be at least 1");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Class histogram of the training rows that reached the leaf.
    Leaf { counts: Vec<u32> },
}

/// Nodes in pre-order; the root is node 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<TreeNode>,
}

impl Tree {
    pub fn from_nodes(nodes: Vec<TreeNode>) -> Self {
        Self { nodes }
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn leaf_counts(&self, x: &[f64]) -> &[u32] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                TreeNode::Leaf { counts } => return counts,
                TreeNode::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[*feature] <= *threshold {
                        *left
                    } else {
                        *right
                    }
                }
            }
        }
    }

    /// Number of split levels on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        fn go(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
            }
        }
        go(&self.nodes, 0)
    }

    /// Checks child links, feature indices and histogram widths.
    fn validate(&self, n_features: usize, n_classes: usize) -> std::result::Result<(), String> {
        if self.nodes.is_empty() {
            return Err("tree has no nodes".into());
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        while let Some(i) = stack.pop() {
            if i >= self.nodes.len() || seen[i] {
                return Err(format!("node {i} is missing or reached twice"));
            }
            seen[i] = true;
            match &self.nodes[i] {
                TreeNode::Leaf { counts } if counts.len() != n_classes => {
                    return Err(format!(
                        "leaf {i} has {} counts, expected {n_classes}",
                        counts.len()
                    ))
                }
                TreeNode::Leaf { .. } => {}
                TreeNode::Split {
                    feature,
                    left,
                    right,
                    ..
                } => {
                    if *feature >= n_features {
                        return Err(format!(
                            "node {i} splits on feature {feature} >= {n_features}"
                        ));
                    }
                    stack.push(*right);
                    stack.push(*left);
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err("tree contains unreachable nodes".into());
        }
        Ok(())
    }
}

struct TreeBuilder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    n_classes: usize,
    params: &'a ForestParams,
    features_per_split: usize,
    rng: ChaCha8Rng,
    nodes: Vec<TreeNode>,
    feature_order: Vec<usize>,
    scratch: Vec<(f64, usize)>,
}

impl TreeBuilder<'_> {
    fn histogram(&self, rows: &[usize]) -> Vec<u32> {
        let mut counts = vec![0u32; self.n_classes];
        for &r in rows {
            counts[self.y[r]] += 1;
        }
        counts
    }

    fn build(&mut self, rows: &mut [usize], depth: usize) -> usize {
        let id = self.nodes.len();
        let counts = self.histogram(rows);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        let min_leaf = self.params.min_samples_leaf;
        if pure || depth >= self.params.max_depth || rows.len() < 2 * min_leaf {
            self.nodes.push(TreeNode::Leaf { counts });
            return id;
        }
        let Some((feature, threshold)) = self.best_split(rows) else {
            self.nodes.push(TreeNode::Leaf { counts });
            return id;
        };
        self.nodes.push(TreeNode::Leaf { counts: Vec::new() });

        // stable partition
        let (mut lo, mut hi): (Vec<usize>, Vec<usize>) =
            rows.iter().partition(|&&r| self.x[r][feature] <= threshold);
        let left = self.build(&mut lo, depth + 1);
        let right = self.build(&mut hi, depth + 1);
        self.nodes[id] = TreeNode::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    /// Best Gini split among up to `features_per_split` non-constant
    /// features, visited in a random order. Thresholds are observed values
    /// (the largest value sent left), so splits depend only on the order of
    /// each feature's values.
    fn best_split(&mut self, rows: &[usize]) -> Option<(usize, f64)> {
        let n = rows.len();
        let min_leaf = self.params.min_samples_leaf;
        let mut order = std::mem::take(&mut self.feature_order);
        order.shuffle(&mut self.rng);

        let total = self.histogram(rows);
        let mut best: Option<(f64, usize, f64)> = None;
        let mut visited = 0;
        let mut left = vec![0u64; self.n_classes];
        for &f in &order {
            if visited == self.features_per_split {
                break;
            }
            self.scratch.clear();
            self.scratch
                .extend(rows.iter().map(|&r| (self.x[r][f], self.y[r])));
            self.scratch.sort_by(|a, b| a.0.total_cmp(&b.0));
            if self.scratch[0].0 == self.scratch[n - 1].0 {
                continue;
            }
            visited += 1;

            left.iter_mut().for_each(|c| *c = 0);
            let mut right: Vec<u64> = total.iter().map(|&c| c as u64).collect();
            let mut sq_left = 0u64;
            let mut sq_right: u64 = right.iter().map(|c| c * c).sum();
            for i in 0..n - 1 {
                let c = self.scratch[i].1;
                sq_left += 2 * left[c] + 1;
                left[c] += 1;
                sq_right -= 2 * right[c] - 1;
                right[c] -= 1;
                let (nl, nr) = (i + 1, n - i - 1);
                if self.scratch[i].0 == self.scratch[i + 1].0 || nl < min_leaf || nr < min_leaf {
                    continue;
                }
                // maximizing sum_c n_c^2 / n over both children minimizes
                // the weighted child Gini impurity
                let score = sq_left as f64 / nl as f64 + sq_right as f64 / nr as f64;
                if best.is_none_or(|(s, _, _)| score > s) {
                    best = Some((score, f, self.scratch[i].0));
                }
            }
        }
        self.feature_order = order;
        best.map(|(_, f, t)| (f, t))
    }
}

fn grow_tree(
    x: &[Vec<f64>],
    y: &[usize],
    n_classes: usize,
    params: &ForestParams,
    seed: u64,
    tree_index: usize,
) -> Tree {
    let n_features = x[0].len();
    let mut rng = seeds::substream(seed, seeds::BOOTSTRAP, tree_index as u64);
    let mut rows: Vec<usize> = if params.bootstrap {
        (0..x.len()).map(|_| rng.random_range(0..x.len())).collect()
    } else {
        (0..x.len()).collect()
    };
    let mut builder = TreeBuilder {
        x,
        y,
        n_classes,
        params,
        features_per_split: params.resolved_features_per_split(n_features),
        rng,
        nodes: Vec::new(),
        feature_order: (0..n_features).collect(),
        scratch: Vec::with_capacity(rows.len()),
    };
    builder.build(&mut rows, 0);
    Tree {
        nodes: builder.nodes,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    /// Sorted class labels; probability vectors follow this order.
    pub classes: Vec<String>,
    pub params: ForestParams,
    pub meta: FeatureMeta,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub class: usize,
    pub label: String,
    pub probabilities: Vec<f64>,
}

pub fn train_forest(
    train: &LabeledDataset,
    params: &ForestParams,
    seed: u64,
) -> Result<ForestModel> {
    train_forest_with(train, params, seed, Execution::Parallel)
}

/// Trains `params.n_trees` trees; tree `t` draws from its own random
/// stream, so sequential and parallel runs give the same model.
pub fn train_forest_with(
    train: &LabeledDataset,
    params: &ForestParams,
    seed: u64,
    exec: Execution,
) -> Result<ForestModel> {
    params.validate()?;
    train.validate()?;
    let classes = train.classes();
    if classes.len() < 2 {
        return Err(Error::Dataset(format!(
            "training needs at least 2 classes, found {}",
            classes.len()
        )));
    }
    ensure!(train.n_features() >= 1, "training rows have no features");
    let y: Vec<usize> = train
        .labels
        .iter()
        .map(|l| classes.binary_search(l).expect("label drawn from classes"))
        .collect();
    let trees = exec.map_range(params.n_trees, |t| {
        grow_tree(&train.features, &y, classes.len(), params, seed, t)
    });
    Ok(ForestModel {
        trees,
        classes,
        params: params.clone(),
        meta: train.meta.clone(),
        seed,
    })
}

impl ForestModel {
    pub fn n_features(&self) -> usize {
        self.meta.size()
    }

    /// Mean of the per-tree leaf class frequencies.
    pub fn predict_proba(&self, row: &[f64]) -> Result<Vec<f64>> {
        ensure!(
            row.len() == self.n_features(),
            "feature row has {} values, model expects {}",
            row.len(),
            self.n_features()
        );
        let mut probs = vec![0.0; self.classes.len()];
        for tree in &self.trees {
            let counts = tree.leaf_counts(row);
            let total: u32 = counts.iter().sum();
            if total == 0 {
                continue;
            }
            for (p, &c) in probs.iter_mut().zip(counts) {
                *p += c as f64 / total as f64;
            }
        }
        let n = self.trees.len() as f64;
        probs.iter_mut().for_each(|p| *p /= n);
        Ok(probs)
    }

    pub fn predict_row(&self, row: &[f64]) -> Result<Prediction> {
        let probabilities = self.predict_proba(row)?;
        let mut class = 0;
        for (i, &p) in probabilities.iter().enumerate() {
            if p > probabilities[class] {
                class = i;
            }
        }
        Ok(Prediction {
            class,
            label: self.classes[class].clone(),
            probabilities,
        })
    }

    /// Refuses features extracted with settings other than the model's.
    pub fn predict(&self, features: &FeatureVector) -> Result<Prediction> {
        self.meta.check_matches(&features.meta)?;
        self.predict_row(&features.values)
    }

    pub fn predict_batch(&self, rows: &[Vec<f64>], exec: Execution) -> Result<Vec<Prediction>> {
        exec.try_map(rows, |r| self.predict_row(r))
    }

    /// Plain-text serialization. Reals use the shortest representation that
    /// parses back to the same bits.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let p = &self.params;
        let fps = p
            .features_per_split
            .map_or_else(|| "auto".to_string(), |v| v.to_string());
        let _ = writeln!(s, "# wptfft random forest");
        let _ = writeln!(s, "version={MODEL_FORMAT_VERSION}");
        let _ = writeln!(s, "classes={}", self.classes.join(","));
        let _ = writeln!(s, "n_trees={}", p.n_trees);
        let _ = writeln!(s, "max_depth={}", p.max_depth);
        let _ = writeln!(s, "min_samples_leaf={}", p.min_samples_leaf);
        let _ = writeln!(s, "features_per_split={fps}");
        let _ = writeln!(s, "bootstrap={}", p.bootstrap);
        let _ = writeln!(s, "k={}", self.meta.level);
        let _ = writeln!(s, "m={}", self.meta.peaks);
        let _ = writeln!(s, "wavelet={}", self.meta.wavelet);
        let _ = writeln!(s, "fs={:?}", self.meta.sample_rate);
        let _ = writeln!(s, "window={}", self.meta.window);
        let _ = writeln!(s, "seed={}", self.seed);
        for (t, tree) in self.trees.iter().enumerate() {
            let _ = writeln!(s, "tree={t} nodes={}", tree.nodes.len());
            for (i, node) in tree.nodes.iter().enumerate() {
                match node {
                    TreeNode::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => {
                        let _ = writeln!(s, "{i},{feature},{threshold:?},{left},{right}");
                    }
                    TreeNode::Leaf { counts } => {
                        let _ = write!(s, "{i},LEAF");
                        for c in counts {
                            let _ = write!(s, ",{c}");
                        }
                        s.push('\n');
                    }
                }
            }
        }
        s
    }

    pub fn from_text(text: &str, source: &str) -> Result<Self> {
        let bad = |line: usize, msg: String| Error::parse(source, line, msg);
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
            .peekable();

        let mut header = std::collections::HashMap::new();
        while let Some(&(no, line)) = lines.peek() {
            if line.starts_with("tree=") {
                break;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(no, format!("expected key=value, got `{line}`")))?;
            header.insert(k.trim().to_string(), (no, v.trim().to_string()));
            lines.next();
        }
        let get = |key: &str| -> Result<(usize, String)> {
            header
                .get(key)
                .cloned()
                .ok_or_else(|| bad(0, format!("missing header field `{key}`")))
        };
        fn num<T: std::str::FromStr>(v: (usize, String), src: &str) -> Result<T> {
            v.1.parse()
                .map_err(|_| Error::parse(src, v.0, format!("invalid number `{}`", v.1)))
        }
        let version: u32 = num(get("version")?, source)?;
        if version != MODEL_FORMAT_VERSION {
            return Err(bad(0, format!("unsupported model version {version}")));
        }
        let classes: Vec<String> = get("classes")?.1.split(',').map(str::to_string).collect();
        let fps = get("features_per_split")?;
        let params = ForestParams {
            n_trees: num(get("n_trees")?, source)?,
            max_depth: num(get("max_depth")?, source)?,
            min_samples_leaf: num(get("min_samples_leaf")?, source)?,
            features_per_split: if fps.1 == "auto" {
                None
            } else {
                Some(num(fps, source)?)
            },
            bootstrap: num(get("bootstrap")?, source)?,
        };
        let meta = FeatureMeta {
            level: num(get("k")?, source)?,
            peaks: num(get("m")?, source)?,
            wavelet: get("wavelet")?.1,
            sample_rate: num(get("fs")?, source)?,
            window: num(get("window")?, source)?,
        };
        let seed = num(get("seed")?, source)?;

        let mut trees = Vec::with_capacity(params.n_trees);
        while let Some((no, line)) = lines.next() {
            let rest = line
                .strip_prefix("tree=")
                .ok_or_else(|| bad(no, format!("expected tree header, got `{line}`")))?;
            let count: usize = rest
                .split_once("nodes=")
                .and_then(|(_, c)| c.trim().parse().ok())
                .ok_or_else(|| bad(no, "tree header lacks a node count".into()))?;
            let mut nodes = Vec::with_capacity(count);
            for expected_id in 0..count {
                let (no, line) = lines
                    .next()
                    .ok_or_else(|| bad(no, "truncated tree".into()))?;
                let fields: Vec<&str> = line.split(',').collect();
                let id: usize = fields[0]
                    .parse()
                    .map_err(|_| bad(no, format!("invalid node id `{}`", fields[0])))?;
                if id != expected_id {
                    return Err(bad(no, format!("expected node {expected_id}, got {id}")));
                }
                let node = if fields.get(1) == Some(&"LEAF") {
                    let counts = fields[2..]
                        .iter()
                        .map(|c| {
                            c.parse()
                                .map_err(|_| bad(no, format!("invalid count `{c}`")))
                        })
                        .collect::<Result<Vec<u32>>>()?;
                    TreeNode::Leaf { counts }
                } else {
                    if fields.len() != 5 {
                        return Err(bad(
                            no,
                            format!("split node needs 5 fields, got {}", fields.len()),
                        ));
                    }
                    let parse_usize = |v: &str| {
                        v.parse::<usize>()
                            .map_err(|_| bad(no, format!("invalid index `{v}`")))
                    };
                    TreeNode::Split {
                        feature: parse_usize(fields[1])?,
                        threshold: fields[2]
                            .parse()
                            .map_err(|_| bad(no, format!("invalid threshold `{}`", fields[2])))?,
                        left: parse_usize(fields[3])?,
                        right: parse_usize(fields[4])?,
                    }
                };
                nodes.push(node);
            }
            let tree = Tree { nodes };
            tree.validate(meta.size(), classes.len())
                .map_err(|e| bad(no, format!("tree {}: {e}", trees.len())))?;
            trees.push(tree);
        }
        if trees.len() != params.n_trees {
            return Err(bad(
                0,
                format!(
                    "header declares {} trees, found {}",
                    params.n_trees,
                    trees.len()
                ),
            ));
        }
        Ok(ForestModel {
            trees,
            classes,
            params,
            meta,
            seed,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn meta(width: usize) -> FeatureMeta {
        // width = m * 2^1
        assert!(width.is_multiple_of(2));
        FeatureMeta {
            level: 1,
            peaks: width / 2,
            wavelet: "db1".into(),
            sample_rate: 1.0,
            window: 2,
        }
    }

    fn dataset(rows: Vec<Vec<f64>>, labels: &[&str]) -> LabeledDataset {
        let w = rows[0].len();
        LabeledDataset::new(
            rows,
            labels.iter().map(|s| s.to_string()).collect(),
            meta(w),
        )
        .unwrap()
    }

    fn single_tree(depth: usize) -> ForestParams {
        ForestParams {
            n_trees: 1,
            max_depth: depth,
            min_samples_leaf: 1,
            features_per_split: None,
            bootstrap: false,
        }
    }

    fn accuracy(model: &ForestModel, ds: &LabeledDataset) -> f64 {
        let ok = ds
            .features
            .iter()
            .zip(&ds.labels)
            .filter(|(r, l)| &model.predict_row(r).unwrap().label == *l)
            .count();
        ok as f64 / ds.len() as f64
    }

    #[test]
    fn separable_one_feature() {
        let rows: Vec<Vec<f64>> = (0..20).map(|i| vec![i as f64, 0.0]).collect();
        let labels: Vec<&str> = (0..20).map(|i| if i < 11 { "a" } else { "b" }).collect();
        let ds = dataset(rows, &labels);
        let m = train_forest(&ds, &single_tree(1), 0).unwrap();
        assert_eq!(accuracy(&m, &ds), 1.0);
        assert_eq!(m.trees[0].depth(), 1);
        assert_eq!(
            m.trees[0].nodes()[0],
            TreeNode::Split {
                feature: 0,
                threshold: 10.0,
                left: 1,
                right: 2
            }
        );
    }

    fn xor() -> LabeledDataset {
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for _ in 0..5 {
            for (a, b) in [(0.0, 0.0), (0.0, 1.0), (1.0, 0.0), (1.0, 1.0)] {
                rows.push(vec![a, b]);
                labels.push(if (a == 1.0) ^ (b == 1.0) {
                    "one"
                } else {
                    "zero"
                });
            }
        }
        dataset(rows, &labels)
    }

    #[test]
    fn xor_needs_two_levels() {
        let ds = xor();
        // every depth-1 stump: threshold on either feature, either polarity
        let mut best_stump = 0.0f64;
        for f in 0..2 {
            for left_label in ["zero", "one"] {
                let ok = ds
                    .features
                    .iter()
                    .zip(&ds.labels)
                    .filter(|(r, l)| {
                        let pred = if r[f] <= 0.0 {
                            left_label
                        } else if left_label == "zero" {
                            "one"
                        } else {
                            "zero"
                        };
                        pred == l.as_str()
                    })
                    .count();
                best_stump = best_stump.max(ok as f64 / ds.len() as f64);
            }
        }
        assert!(best_stump < 1.0);
        let m1 = train_forest(&ds, &single_tree(1), 0).unwrap();
        assert!(accuracy(&m1, &ds) < 1.0);
        let m2 = train_forest(&ds, &single_tree(2), 0).unwrap();
        assert_eq!(accuracy(&m2, &ds), 1.0);
    }

    fn noisy(n: usize, seed: u64) -> LabeledDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for i in 0..n {
            let c = i % 3;
            let r: Vec<f64> = (0..4)
                .map(|j| rng.random_range(0.0..1.0) + (c * j) as f64 * 0.3)
                .collect();
            rows.push(r);
            labels.push(["a", "b", "c"][c]);
        }
        dataset(rows, &labels)
    }

    #[test]
    fn determinism_and_serialization() {
        let ds = noisy(90, 1);
        let params = ForestParams {
            n_trees: 7,
            ..Default::default()
        };
        let a = train_forest_with(&ds, &params, 42, Execution::Sequential).unwrap();
        let b = train_forest_with(&ds, &params, 42, Execution::Parallel).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        let c = train_forest(&ds, &params, 43).unwrap();
        assert_ne!(a.to_text(), c.to_text());

        let back = ForestModel::from_text(&a.to_text(), "mem").unwrap();
        assert_eq!(back, a);
        for r in &ds.features {
            assert_eq!(back.predict_row(r).unwrap(), a.predict_row(r).unwrap());
        }
    }

    #[test]
    fn corrupt_models_are_rejected() {
        let ds = noisy(30, 2);
        let text = train_forest(
            &ds,
            &ForestParams {
                n_trees: 2,
                ..Default::default()
            },
            1,
        )
        .unwrap()
        .to_text();
        let err = ForestModel::from_text(&text.replace("version=1", "version=9"), "m").unwrap_err();
        assert!(err.to_string().contains("unsupported model version"));
        let truncated: String = text
            .lines()
            .take(text.lines().count() - 1)
            .collect::<Vec<_>>()
            .join("\n");
        assert!(ForestModel::from_text(&truncated, "m").is_err());
        let bad_feature = text
            .replacen("0,0,", "0,99,", 1)
            .replacen("0,1,", "0,99,", 1)
            .replacen("0,2,", "0,99,", 1)
            .replacen("0,3,", "0,99,", 1);
        assert!(ForestModel::from_text(&bad_feature, "m").is_err());
    }

    #[test]
    fn probabilities_from_histograms() {
        let m = ForestModel {
            trees: vec![Tree::from_nodes(vec![TreeNode::Leaf {
                counts: vec![3, 1],
            }])],
            classes: vec!["a".into(), "b".into()],
            params: ForestParams {
                n_trees: 1,
                ..Default::default()
            },
            meta: meta(2),
            seed: 0,
        };
        let p = m.predict_row(&[0.0, 0.0]).unwrap();
        assert_eq!(p.probabilities, vec![0.75, 0.25]);
        assert_eq!(p.class, 0);

        let tie = ForestModel {
            trees: vec![
                Tree::from_nodes(vec![TreeNode::Leaf { counts: vec![0, 4] }]),
                Tree::from_nodes(vec![TreeNode::Leaf { counts: vec![2, 0] }]),
            ],
            params: ForestParams {
                n_trees: 2,
                ..Default::default()
            },
            ..m.clone()
        };
        let p = tie.predict_row(&[0.0, 0.0]).unwrap();
        assert_eq!(p.probabilities, vec![0.5, 0.5]);
        assert_eq!(p.label, "a");
        assert!(m.predict_row(&[0.0]).is_err());
    }

    #[test]
    fn hand_averaged_histograms() {
        let ds = noisy(60, 3);
        let m = train_forest(
            &ds,
            &ForestParams {
                n_trees: 5,
                ..Default::default()
            },
            9,
        )
        .unwrap();
        let probe = noisy(10, 4);
        for row in &probe.features {
            let mut expected = [0.0; 3];
            for t in &m.trees {
                let c = t.leaf_counts(row);
                let s: u32 = c.iter().sum();
                for k in 0..3 {
                    expected[k] += c[k] as f64 / s as f64 / 5.0;
                }
            }
            let got = m.predict_row(row).unwrap().probabilities;
            for k in 0..3 {
                assert!((got[k] - expected[k]).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn metadata_mismatch_is_refused() {
        let ds = noisy(30, 5);
        let m = train_forest(
            &ds,
            &ForestParams {
                n_trees: 2,
                ..Default::default()
            },
            1,
        )
        .unwrap();
        let mut other = m.meta.clone();
        other.wavelet = "db4".into();
        let fv = FeatureVector {
            values: ds.features[0].clone(),
            meta: other,
        };
        assert!(matches!(
            m.predict(&fv),
            Err(Error::MetadataMismatch { .. })
        ));
        let fv = FeatureVector {
            values: ds.features[0].clone(),
            meta: m.meta.clone(),
        };
        assert!(m.predict(&fv).is_ok());
    }

    #[test]
    fn degenerate_features_give_majority_leaves() {
        let rows = vec![vec![1.0, 1.0]; 6];
        let ds = dataset(rows, &["a", "a", "a", "a", "b", "b"]);
        let m = train_forest(
            &ds,
            &ForestParams {
                n_trees: 3,
                bootstrap: false,
                ..Default::default()
            },
            0,
        )
        .unwrap();
        for t in &m.trees {
            assert_eq!(t.nodes().len(), 1);
        }
        assert_eq!(m.predict_row(&[1.0, 1.0]).unwrap().label, "a");
    }

    #[test]
    fn single_class_is_rejected() {
        let ds = dataset(vec![vec![0.0, 1.0]; 3], &["a", "a", "a"]);
        assert!(matches!(
            train_forest(&ds, &ForestParams::default(), 0),
            Err(Error::Dataset(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]

        #[test]
        fn monotone_transforms_preserve_predictions(seed in any::<u64>()) {
            let ds = noisy(60, seed);
            // strictly increasing, nonlinear, per column
            let transform = |r: &Vec<f64>| -> Vec<f64> {
                r.iter().enumerate().map(|(j, v)| match j % 3 {
                    0 => v.exp(),
                    1 => v * v * v + 2.0 * v,
                    _ => (v + 5.0).ln(),
                }).collect()
            };
            let mut tds = ds.clone();
            tds.features = ds.features.iter().map(transform).collect();
            let params = ForestParams { n_trees: 5, ..Default::default() };
            let a = train_forest(&ds, &params, seed).unwrap();
            let b = train_forest(&tds, &params, seed).unwrap();
            let probe = noisy(30, seed.wrapping_add(1));
            for r in &probe.features {
                prop_assert_eq!(a.predict_row(r).unwrap(), b.predict_row(&transform(r)).unwrap());
            }
        }

        #[test]
        fn probabilities_are_distributions(seed in any::<u64>()) {
            let ds = noisy(45, seed);
            let m = train_forest(&ds, &ForestParams { n_trees: 4, ..Default::default() }, seed).unwrap();
            for r in &noisy(10, seed ^ 1).features {
                let p = m.predict_row(r).unwrap().probabilities;
                prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
                prop_assert!(p.iter().all(|&v| (0.0..=1.0).contains(&v)));
            }
        }
    }
}
