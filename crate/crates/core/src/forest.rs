//! Two-class random forest: bootstrap bagging, CART trees on Gini impurity with
//! a random feature subset per split, and majority voting.
//!
//! Every tree draws from its own ChaCha stream keyed by `(seed, tree index)`,
//! so a forest is a pure function of its training data and parameters no
//! matter how trees are scheduled across threads.

use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::neighborhood::{MeMap, NsciMap};
use crate::raster::BinaryMask;

pub const UNCHANGED: u8 = 0;
pub const CHANGED: u8 = 1;

const MODEL_MAGIC: &[u8; 4] = b"SDRF";
const MODEL_VERSION: u8 = 1;
const LEAF_FEATURE: u16 = u16::MAX;

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub features: Vec<f64>,
    pub label: u8,
}

impl Sample {
    pub fn new(features: Vec<f64>, label: u8) -> Self {
        Self { features, label }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ForestParams {
    pub trees: usize,
    /// Features tried per split; 0 selects `ceil(sqrt(d))`.
    pub mtry: usize,
    /// 0 means unlimited.
    pub max_depth: usize,
    pub min_leaf: usize,
    pub seed: u64,
    /// Grow each tree on a bootstrap resample; when false every tree sees the full set.
    pub bootstrap: bool,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            trees: 100,
            mtry: 0,
            max_depth: 16,
            min_leaf: 1,
            seed: 42,
            bootstrap: true,
        }
    }
}

impl ForestParams {
    pub fn resolved_mtry(&self, n_features: usize) -> usize {
        if self.mtry == 0 {
            ((n_features as f64).sqrt().ceil() as usize).max(1)
        } else {
            self.mtry
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Node {
    /// Samples with `x[feature] < threshold` descend to `left`.
    Split {
        feature: u16,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        class: u8,
    },
}

/// Flat node array with the root at index 0; children always follow their parent.
#[derive(Clone, Debug, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
}

impl DecisionTree {
    pub fn from_nodes(nodes: Vec<Node>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::Format("a tree needs at least one node".into()));
        }
        for (i, node) in nodes.iter().enumerate() {
            match *node {
                Node::Split { left, right, .. } => {
                    for c in [left, right] {
                        if c as usize <= i || c as usize >= nodes.len() {
                            return Err(Error::Format(format!("node {i} has invalid child {c}")));
                        }
                    }
                }
                Node::Leaf { class } if class > CHANGED => {
                    return Err(Error::Format(format!("leaf {i} has class {class}")));
                }
                Node::Leaf { .. } => {}
            }
        }
        Ok(Self { nodes })
    }

    pub fn leaf(class: u8) -> Self {
        Self {
            nodes: vec![Node::Leaf { class }],
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        let mut depth = vec![0usize; self.nodes.len()];
        let mut deepest = 0;
        for (i, node) in self.nodes.iter().enumerate() {
            if let Node::Split { left, right, .. } = *node {
                depth[left as usize] = depth[i] + 1;
                depth[right as usize] = depth[i] + 1;
                deepest = deepest.max(depth[i] + 1);
            }
        }
        deepest
    }

    fn max_feature(&self) -> Option<u16> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                _ => None,
            })
            .max()
    }

    /// Class of the leaf reached by `x`. `x` must cover every feature the tree uses.
    pub fn predict(&self, x: &[f64]) -> u8 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { class } => return class,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if x[feature as usize] < threshold {
                        left as usize
                    } else {
                        right as usize
                    };
                }
            }
        }
    }
}

/// Single-tree prediction with a dimensionality check.
pub fn predict_tree(tree: &DecisionTree, n_features: usize, x: &[f64]) -> Result<u8> {
    if x.len() != n_features {
        return Err(Error::Shape(format!(
            "sample has {} features, tree expects {n_features}",
            x.len()
        )));
    }
    Ok(tree.predict(x))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Prediction {
    pub class: u8,
    /// Trees voting unchanged, changed.
    pub votes: [usize; 2],
}

#[derive(Clone, Debug, PartialEq)]
pub struct Forest {
    trees: Vec<DecisionTree>,
    n_features: usize,
    mtry: usize,
}

impl Forest {
    pub fn from_trees(trees: Vec<DecisionTree>, n_features: usize, mtry: usize) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::Format("a forest needs at least one tree".into()));
        }
        if mtry == 0 || mtry > n_features {
            return Err(Error::Format(format!("mtry {mtry} outside 1..={n_features}")));
        }
        if let Some(f) = trees.iter().filter_map(|t| t.max_feature()).max() {
            if f as usize >= n_features {
                return Err(Error::Format(format!(
                    "tree splits on feature {f} but the forest has {n_features}"
                )));
            }
        }
        Ok(Self {
            trees,
            n_features,
            mtry,
        })
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn mtry(&self) -> usize {
        self.mtry
    }

    /// Majority vote; an even split goes to [`UNCHANGED`].
    pub fn predict(&self, x: &[f64]) -> Result<Prediction> {
        if x.len() != self.n_features {
            return Err(Error::Shape(format!(
                "sample has {} features, forest expects {}",
                x.len(),
                self.n_features
            )));
        }
        let mut votes = [0usize; 2];
        for t in &self.trees {
            votes[t.predict(x) as usize] += 1;
        }
        let class = if votes[1] > votes[0] { CHANGED } else { UNCHANGED };
        Ok(Prediction { class, votes })
    }

    /// Classes for row-major samples of `n_features` values each.
    pub fn predict_rows(&self, rows: &[f64]) -> Result<Vec<u8>> {
        if !rows.len().is_multiple_of(self.n_features) {
            return Err(Error::Shape(format!(
                "{} values do not split into rows of {}",
                rows.len(),
                self.n_features
            )));
        }
        rows.par_chunks(self.n_features)
            .map(|x| self.predict(x).map(|p| p.class))
            .collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MODEL_MAGIC);
        out.push(MODEL_VERSION);
        out.extend_from_slice(&(self.trees.len() as u32).to_le_bytes());
        out.extend_from_slice(&(self.mtry as u32).to_le_bytes());
        out.extend_from_slice(&(self.n_features as u32).to_le_bytes());
        for tree in &self.trees {
            out.extend_from_slice(&(tree.nodes.len() as u32).to_le_bytes());
            for node in &tree.nodes {
                let (feature, threshold, left, right, class) = match *node {
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    } => (feature, threshold, left, right, 0u8),
                    Node::Leaf { class } => (LEAF_FEATURE, 0.0, 0, 0, class),
                };
                out.extend_from_slice(&feature.to_le_bytes());
                out.extend_from_slice(&threshold.to_le_bytes());
                out.extend_from_slice(&left.to_le_bytes());
                out.extend_from_slice(&right.to_le_bytes());
                out.push(class);
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ModelReader { bytes, pos: 0 };
        if r.take(4)? != MODEL_MAGIC {
            return Err(Error::Format("not an SDRF model file".into()));
        }
        let version = r.take(1)?[0];
        if version != MODEL_VERSION {
            return Err(Error::Format(format!("SDRF version {version} unsupported")));
        }
        let k = r.u32()? as usize;
        let mtry = r.u32()? as usize;
        let d = r.u32()? as usize;
        let mut trees = Vec::with_capacity(k.min(1 << 16));
        for _ in 0..k {
            let count = r.u32()? as usize;
            let mut nodes = Vec::with_capacity(count.min(1 << 20));
            for _ in 0..count {
                let feature = u16::from_le_bytes(r.take(2)?.try_into().unwrap());
                let threshold = f64::from_le_bytes(r.take(8)?.try_into().unwrap());
                let left = r.u32()?;
                let right = r.u32()?;
                let class = r.take(1)?[0];
                nodes.push(if feature == LEAF_FEATURE {
                    Node::Leaf { class }
                } else {
                    Node::Split {
                        feature,
                        threshold,
                        left,
                        right,
                    }
                });
            }
            trees.push(DecisionTree::from_nodes(nodes)?);
        }
        if r.pos != bytes.len() {
            return Err(Error::Format("trailing bytes after SDRF model".into()));
        }
        Self::from_trees(trees, d, mtry)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct ModelReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl ModelReader<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        let s = self
            .bytes
            .get(self.pos..self.pos + n)
            .ok_or_else(|| Error::Format("SDRF model is truncated".into()))?;
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Random stream owned by one tree.
pub fn tree_rng(seed: u64, tree: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tree as u64);
    rng
}

/// Bootstrap draw of `n` indices with replacement.
pub fn bootstrap(rng: &mut impl Rng, n: usize) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

pub fn train(samples: &[Sample], params: &ForestParams) -> Result<Forest> {
    let first = samples
        .first()
        .ok_or_else(|| Error::EmptyInput("no training samples".into()))?;
    let d = first.features.len();
    if d == 0 || d >= LEAF_FEATURE as usize {
        return Err(Error::Shape(format!("unsupported feature count {d}")));
    }
    for (i, s) in samples.iter().enumerate() {
        if s.features.len() != d {
            return Err(Error::Shape(format!(
                "sample {i} has {} features, expected {d}",
                s.features.len()
            )));
        }
        if s.features.iter().any(|v| !v.is_finite()) {
            return Err(Error::Format(format!("sample {i} has a non-finite feature")));
        }
        if s.label > CHANGED {
            return Err(Error::Format(format!("sample {i} has label {}", s.label)));
        }
    }
    let changed = samples.iter().filter(|s| s.label == CHANGED).count();
    if changed == 0 || changed == samples.len() {
        return Err(Error::DegenerateTraining(
            "training samples contain a single class".into(),
        ));
    }
    if params.trees == 0 {
        return Err(Error::Config("a forest needs at least one tree".into()));
    }
    let mtry = params.resolved_mtry(d);
    if mtry > d {
        return Err(Error::Config(format!("mtry {mtry} exceeds {d} features")));
    }
    let min_leaf = params.min_leaf.max(1);
    let max_depth = if params.max_depth == 0 {
        usize::MAX
    } else {
        params.max_depth
    };

    // column-major copy for split scans
    let columns: Vec<Vec<f64>> = (0..d)
        .map(|f| samples.iter().map(|s| s.features[f]).collect())
        .collect();
    let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
    let grower = Grower {
        columns: &columns,
        labels: &labels,
        mtry,
        max_depth,
        min_leaf,
    };
    let trees = (0..params.trees)
        .into_par_iter()
        .map(|t| {
            let mut rng = tree_rng(params.seed, t);
            let rows = if params.bootstrap {
                bootstrap(&mut rng, samples.len())
            } else {
                (0..samples.len()).collect()
            };
            grower.grow(rows, &mut rng)
        })
        .collect();
    Forest::from_trees(trees, d, mtry)
}

struct Grower<'a> {
    columns: &'a [Vec<f64>],
    labels: &'a [u8],
    mtry: usize,
    max_depth: usize,
    min_leaf: usize,
}

struct BestSplit {
    feature: usize,
    threshold: f64,
    /// Weighted Gini times the node size.
    impurity: f64,
}

fn gini_mass(c0: usize, c1: usize) -> f64 {
    let n = (c0 + c1) as f64;
    if n == 0.0 {
        return 0.0;
    }
    n - ((c0 * c0 + c1 * c1) as f64) / n
}

impl Grower<'_> {
    fn grow(&self, rows: Vec<usize>, rng: &mut ChaCha8Rng) -> DecisionTree {
        let mut nodes = vec![Node::Leaf { class: UNCHANGED }];
        let mut work = vec![(0usize, rows, 0usize)];
        while let Some((at, rows, depth)) = work.pop() {
            let c1 = rows.iter().filter(|&&i| self.labels[i] == CHANGED).count();
            let c0 = rows.len() - c1;
            let majority = if c1 > c0 { CHANGED } else { UNCHANGED };
            if c0 == 0 || c1 == 0 || depth >= self.max_depth || rows.len() < 2 * self.min_leaf {
                nodes[at] = Node::Leaf { class: majority };
                continue;
            }
            let Some(best) = self.best_split(&rows, rng) else {
                nodes[at] = Node::Leaf { class: majority };
                continue;
            };
            let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
                .iter()
                .partition(|&&i| self.columns[best.feature][i] < best.threshold);
            let left = nodes.len();
            nodes.push(Node::Leaf { class: UNCHANGED });
            nodes.push(Node::Leaf { class: UNCHANGED });
            nodes[at] = Node::Split {
                feature: best.feature as u16,
                threshold: best.threshold,
                left: left as u32,
                right: left as u32 + 1,
            };
            work.push((left + 1, right_rows, depth + 1));
            work.push((left, left_rows, depth + 1));
        }
        DecisionTree { nodes }
    }

    /// Tries `mtry` random features and, if none of them separates the node,
    /// falls back to the remaining features in index order.
    fn best_split(&self, rows: &[usize], rng: &mut ChaCha8Rng) -> Option<BestSplit> {
        let d = self.columns.len();
        let chosen = index::sample(rng, d, self.mtry).into_vec();
        let mut best = self.scan(rows, &chosen);
        if best.is_none() && self.mtry < d {
            let rest: Vec<usize> = (0..d).filter(|f| !chosen.contains(f)).collect();
            best = self.scan(rows, &rest);
        }
        best
    }

    fn scan(&self, rows: &[usize], features: &[usize]) -> Option<BestSplit> {
        let total1 = rows.iter().filter(|&&i| self.labels[i] == CHANGED).count();
        let total0 = rows.len() - total1;
        let mut best: Option<BestSplit> = None;
        let mut order = rows.to_vec();
        for &f in features {
            let col = &self.columns[f];
            order.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
            let (mut l0, mut l1) = (0usize, 0usize);
            for i in 1..order.len() {
                if self.labels[order[i - 1]] == CHANGED {
                    l1 += 1;
                } else {
                    l0 += 1;
                }
                let (lo, hi) = (col[order[i - 1]], col[order[i]]);
                if lo >= hi || i < self.min_leaf || order.len() - i < self.min_leaf {
                    continue;
                }
                let impurity = gini_mass(l0, l1) + gini_mass(total0 - l0, total1 - l1);
                if best.as_ref().is_none_or(|b| impurity < b.impurity) {
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold <= lo {
                        threshold = hi;
                    }
                    best = Some(BestSplit {
                        feature: f,
                        threshold,
                        impurity,
                    });
                }
            }
        }
        best
    }
}

/// Per-pixel `(r, a, b)` or `(r, a, b, ME)` vectors, row-major.
pub fn pixel_features(nsci: &NsciMap, me: Option<&MeMap>) -> Result<Vec<[f64; 4]>> {
    if let Some(me) = me {
        if me.width != nsci.width || me.height != nsci.height {
            return Err(Error::Shape(format!(
                "NSCI map is {}x{} but ME map is {}x{}",
                nsci.width, nsci.height, me.width, me.height
            )));
        }
    }
    Ok((0..nsci.width * nsci.height)
        .map(|i| [nsci.r[i], nsci.a[i], nsci.b[i], me.map_or(0.0, |m| m.me[i])])
        .collect())
}

/// Classifies every pixel. A 3-feature forest reads `(r, a, b)` only; a
/// 4-feature forest also needs the ME map.
pub fn predict_map(forest: &Forest, nsci: &NsciMap, me: Option<&MeMap>) -> Result<BinaryMask> {
    let d = forest.n_features();
    if d == 4 && me.is_none() {
        return Err(Error::Shape("a 4-feature forest needs the ME map".into()));
    }
    if d != 3 && d != 4 {
        return Err(Error::Shape(format!(
            "forest expects {d} features, pixel vectors have 3 or 4"
        )));
    }
    let features = pixel_features(nsci, me)?;
    let labels = features
        .par_iter()
        .map(|v| forest.predict(&v[..d]).map(|p| p.class))
        .collect::<Result<Vec<u8>>>()?;
    BinaryMask::new(nsci.width, nsci.height, labels)
}

/// Fraction of samples the forest labels correctly.
pub fn accuracy(forest: &Forest, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("no samples to score".into()));
    }
    let mut correct = 0usize;
    for s in samples {
        if forest.predict(&s.features)?.class == s.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / samples.len() as f64)
}
