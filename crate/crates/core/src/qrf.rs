//! Random forests grown from scratch: regression trees whose leaves keep
//! their training rows (for quantile regression forests) and class-weighted
//! classification trees.
//!
//! Split search works on rank codes of each feature. Large nodes accumulate
//! per-rank histograms, small nodes sort their `(rank, row)` pairs; both
//! produce the same split.

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distribution::ForecastDistribution;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestParams {
    pub n_tree: usize,
    /// Candidate features per split; `None` means `ceil(m / 3)`.
    pub mtry: Option<usize>,
    /// Nodes holding at most this many observations are not split.
    pub min_node: usize,
    pub bootstrap: bool,
    pub master_seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { n_tree: 500, mtry: None, min_node: 5, bootstrap: true, master_seed: 1 }
    }
}

impl ForestParams {
    pub fn resolved_mtry(&self, m: usize) -> usize {
        self.mtry.unwrap_or(m.div_ceil(3)).clamp(1, m.max(1))
    }

    fn validate(&self, m: usize) -> Result<()> {
        if m == 0 {
            return Err(Error::InvalidInput("feature matrix has no columns".into()));
        }
        if self.n_tree == 0 {
            return Err(Error::Config("n_tree must be at least 1".into()));
        }
        if self.min_node == 0 {
            return Err(Error::Config("min_node must be at least 1".into()));
        }
        if let Some(k) = self.mtry {
            if k == 0 || k > m {
                return Err(Error::Config(format!("mtry {k} outside 1..={m}")));
            }
        }
        Ok(())
    }
}

/// Internal node when `feature != LEAF`; otherwise a leaf whose rows are
/// `leaf_rows[left..right]` (regression) or whose class frequencies start at
/// `leaf_probs[left * k]` (classification).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub feature: u32,
    pub left: u32,
    pub right: u32,
    /// Split threshold (go left when `x <= value`), or the leaf mean.
    pub value: f64,
}

const LEAF: u32 = u32::MAX;

impl Node {
    pub fn is_leaf(&self) -> bool {
        self.feature == LEAF
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
    /// Bootstrap rows per leaf, sorted, repeated by multiplicity.
    pub leaf_rows: Vec<u32>,
    /// Weighted class frequencies per leaf (classification only).
    pub leaf_probs: Vec<f64>,
}

impl Tree {
    fn leaf_of(&self, x: &[f64]) -> &Node {
        let mut node = &self.nodes[0];
        while !node.is_leaf() {
            node = if x[node.feature as usize] <= node.value {
                &self.nodes[node.left as usize]
            } else {
                &self.nodes[node.right as usize]
            };
        }
        node
    }

    /// Training rows of the leaf reached by `x`.
    pub fn leaf_rows_for(&self, x: &[f64]) -> &[u32] {
        let leaf = self.leaf_of(x);
        &self.leaf_rows[leaf.left as usize..leaf.right as usize]
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| n.is_leaf()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ForestMode {
    Regression,
    Classification { n_classes: usize, class_weights: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub params: ForestParams,
    pub feature_names: Vec<String>,
    pub schema_hash: u64,
    /// Training labels (minutes) or class indices.
    pub labels: Vec<f64>,
    pub trees: Vec<Tree>,
    pub mode: ForestMode,
    /// Total impurity decrease per feature, summed over trees.
    pub raw_importance: Vec<f64>,
    /// Distinct sorted labels and each row's rank among them.
    distinct_labels: Vec<f64>,
    label_rank: Vec<u32>,
}

pub fn schema_hash(names: &[String]) -> u64 {
    let joined = names.join("\u{1f}");
    seed::derive_label(0, &joined)
}

/// Rank-coded training features, column-major.
struct Binned {
    n: usize,
    m: usize,
    codes: Vec<u32>,
    values: Vec<Vec<f64>>,
}

impl Binned {
    fn new(x: &[f64], n: usize, m: usize) -> Self {
        let mut codes = vec![0u32; n * m];
        let mut values = Vec::with_capacity(m);
        let mut col: Vec<f64> = Vec::with_capacity(n);
        for j in 0..m {
            col.clear();
            col.extend((0..n).map(|i| x[i * m + j]));
            let mut distinct = col.clone();
            distinct.sort_by(f64::total_cmp);
            distinct.dedup();
            for (i, v) in col.iter().enumerate() {
                codes[j * n + i] = distinct.partition_point(|d| d < v) as u32;
            }
            values.push(distinct);
        }
        Binned { n, m, codes, values }
    }

    fn code(&self, j: usize, row: u32) -> u32 {
        self.codes[j * self.n + row as usize]
    }
}

/// Per-row targets: weight and a `k`-vector of weighted statistics.
struct Targets<'a> {
    k: usize,
    /// Regression: the labels. Classification: class index per row.
    y: &'a [f64],
    classification: bool,
    class_weights: &'a [f64],
}

impl Targets<'_> {
    /// Unit weight and statistic vector of one row.
    fn row(&self, r: u32, out: &mut [f64]) -> f64 {
        let v = self.y[r as usize];
        if self.classification {
            out.iter_mut().for_each(|o| *o = 0.0);
            let c = v as usize;
            let w = self.class_weights[c];
            out[c] = w;
            w
        } else {
            out[0] = v;
            1.0
        }
    }
}

struct Scratch {
    hw: Vec<f64>,
    hs: Vec<f64>,
    pairs: Vec<(u32, u32)>,
    packed: Vec<u64>,
    stat: Vec<f64>,
    acc_s: Vec<f64>,
}

struct Split {
    feature: usize,
    code: u32,
    threshold: f64,
    decrease: f64,
}

struct Grower<'a> {
    data: &'a Binned,
    targets: &'a Targets<'a>,
    mtry: usize,
    min_node: usize,
}

fn gain(s: &[f64], w: f64, mu: &[f64]) -> f64 {
    s.iter().zip(mu).map(|(sk, mk)| (sk - w * mk).powi(2)).sum::<f64>() / w
}

impl Grower<'_> {
    fn grow(&self, tree_seed: u64, bootstrap: bool) -> (Tree, Vec<f64>) {
        let n = self.data.n;
        let m = self.data.m;
        let k = self.targets.k;
        let mut rng = seed::rng(tree_seed);
        let mut mult = vec![0u32; n];
        if bootstrap {
            for _ in 0..n {
                mult[rng.random_range(0..n)] += 1;
            }
        } else {
            mult.iter_mut().for_each(|c| *c = 1);
        }
        let mut rows: Vec<u32> = (0..n as u32).filter(|&r| mult[r as usize] > 0).collect();
        // (multiplicity, label) kept in step with `rows` for the regression scan.
        let mut cy: Vec<(f64, f64)> = rows.iter().map(|&r| (mult[r as usize] as f64, self.targets.y[r as usize])).collect();
        let dmax = self.data.values.iter().map(|v| v.len()).max().unwrap_or(1);
        let mut sc = Scratch {
            hw: vec![0.0; dmax],
            hs: vec![0.0; dmax * k],
            pairs: Vec::new(),
            packed: Vec::new(),
            stat: vec![0.0; k],
            acc_s: vec![0.0; k],
        };
        let mut feats: Vec<usize> = (0..m).collect();
        let mut importance = vec![0.0; m];
        let mut tree = Tree { nodes: vec![], leaf_rows: vec![], leaf_probs: vec![] };
        tree.nodes.push(Node { feature: LEAF, left: 0, right: 0, value: 0.0 });
        let mut stack = vec![(0usize, 0usize, rows.len())];
        while let Some((id, lo, hi)) = stack.pop() {
            let node_rows = &mut rows[lo..hi];
            let node_cy = &mut cy[lo..hi];
            // Node totals.
            let mut w_tot = 0.0;
            let mut s_tot = vec![0.0; k];
            let mut count = 0usize;
            for &r in node_rows.iter() {
                let c = mult[r as usize] as f64;
                let w = self.targets.row(r, &mut sc.stat);
                w_tot += c * w;
                for (t, s) in s_tot.iter_mut().zip(&sc.stat) {
                    *t += c * s;
                }
                count += mult[r as usize] as usize;
            }
            let (mu, impurity) = if self.targets.classification {
                let g = s_tot.iter().map(|s| s * s).sum::<f64>() / w_tot;
                (vec![0.0; k], w_tot - g)
            } else {
                let mean = s_tot[0] / w_tot;
                let sse: f64 = node_rows
                    .iter()
                    .map(|&r| mult[r as usize] as f64 * (self.targets.y[r as usize] - mean).powi(2))
                    .sum();
                (vec![mean], sse)
            };

            let split = if count <= self.min_node || impurity <= 1e-12 * w_tot {
                None
            } else {
                // Sample mtry features without replacement; scan in index order.
                for i in 0..self.mtry {
                    let j = rng.random_range(i..m);
                    feats.swap(i, j);
                }
                let mut cand: Vec<usize> = feats[..self.mtry].to_vec();
                cand.sort_unstable();
                let parent_gain = gain(&s_tot, w_tot, &mu);
                let mut best: Option<Split> = None;
                for &f in &cand {
                    let found = if self.targets.classification {
                        self.best_split_for(f, node_rows, &mult, &mu, parent_gain, &mut sc)
                    } else {
                        self.best_split_reg(f, node_rows, node_cy, s_tot[0], w_tot, &mut sc)
                    };
                    if let Some(s) = found {
                        if best.as_ref().is_none_or(|b| s.decrease > b.decrease) {
                            best = Some(s);
                        }
                    }
                }
                best.filter(|b| b.decrease > 1e-10 * impurity)
            };

            match split {
                Some(s) => {
                    importance[s.feature] += s.decrease;
                    let mut i = 0;
                    let mut j = node_rows.len();
                    while i < j {
                        if self.data.code(s.feature, node_rows[i]) <= s.code {
                            i += 1;
                        } else {
                            j -= 1;
                            node_rows.swap(i, j);
                            node_cy.swap(i, j);
                        }
                    }
                    let left = tree.nodes.len();
                    tree.nodes.push(Node { feature: LEAF, left: 0, right: 0, value: 0.0 });
                    tree.nodes.push(Node { feature: LEAF, left: 0, right: 0, value: 0.0 });
                    tree.nodes[id] =
                        Node { feature: s.feature as u32, left: left as u32, right: left as u32 + 1, value: s.threshold };
                    stack.push((left + 1, lo + i, hi));
                    stack.push((left, lo, lo + i));
                }
                None => {
                    node_rows.sort_unstable();
                    if self.targets.classification {
                        let leaf = (tree.leaf_probs.len() / k) as u32;
                        tree.leaf_probs.extend(s_tot.iter().map(|s| s / w_tot));
                        tree.nodes[id] = Node { feature: LEAF, left: leaf, right: leaf + 1, value: 0.0 };
                    } else {
                        let start = tree.leaf_rows.len() as u32;
                        for &r in node_rows.iter() {
                            for _ in 0..mult[r as usize] {
                                tree.leaf_rows.push(r);
                            }
                        }
                        let end = tree.leaf_rows.len() as u32;
                        tree.nodes[id] = Node { feature: LEAF, left: start, right: end, value: mu[0] };
                    }
                }
            }
        }
        (tree, importance)
    }

    fn make_split(&self, f: usize, code: u32, next: u32, decrease: f64) -> Split {
        let lo = self.data.values[f][code as usize];
        let hi = self.data.values[f][next as usize];
        let mut threshold = lo + (hi - lo) / 2.0;
        if threshold >= hi {
            threshold = lo;
        }
        Split { feature: f, code, threshold, decrease }
    }

    /// Regression fast path of [`Grower::best_split_for`]. With the node mean
    /// `mu` and `a = s_left - w_left * mu`, the SSE decrease is
    /// `a^2 (1/w_left + 1/w_right)`.
    fn best_split_reg(
        &self,
        f: usize,
        rows: &[u32],
        cy: &[(f64, f64)],
        s_tot: f64,
        w_tot: f64,
        sc: &mut Scratch,
    ) -> Option<Split> {
        let d = self.data.values[f].len();
        if d < 2 {
            return None;
        }
        let mu = s_tot / w_tot;
        let col = &self.data.codes[f * self.data.n..(f + 1) * self.data.n];
        // (code, next code, decrease) of the best cut so far.
        let mut best: Option<(u32, u32, f64)> = None;
        let mut consider = |code: u32, next: u32, w_left: f64, s_left: f64| {
            let w_right = w_tot - w_left;
            let a = s_left - w_left * mu;
            let dec = a * a * (1.0 / w_left + 1.0 / w_right);
            if best.is_none_or(|b| dec > b.2) {
                best = Some((code, next, dec));
            }
        };
        if d <= 4 * rows.len() {
            for (&r, &(c, y)) in rows.iter().zip(cy) {
                let b = col[r as usize] as usize;
                sc.hw[b] += c;
                sc.hs[b] += c * y;
            }
            let (mut w_left, mut s_left) = (0.0, 0.0);
            let mut prev: Option<u32> = None;
            for b in 0..d {
                let w = sc.hw[b];
                if w == 0.0 {
                    continue;
                }
                if let Some(p) = prev {
                    consider(p, b as u32, w_left, s_left);
                }
                w_left += w;
                s_left += sc.hs[b];
                sc.hw[b] = 0.0;
                sc.hs[b] = 0.0;
                prev = Some(b as u32);
            }
        } else {
            // Code in the high half, position in the low half.
            sc.packed.clear();
            sc.packed.extend(rows.iter().enumerate().map(|(i, &r)| (u64::from(col[r as usize]) << 32) | i as u64));
            sc.packed.sort_unstable();
            let (mut w_left, mut s_left) = (0.0, 0.0);
            let mut i = 0;
            let code_of = |p: u64| (p >> 32) as u32;
            while i < sc.packed.len() {
                let code = code_of(sc.packed[i]);
                if i > 0 {
                    consider(code_of(sc.packed[i - 1]), code, w_left, s_left);
                }
                while i < sc.packed.len() && code_of(sc.packed[i]) == code {
                    let (c, y) = cy[(sc.packed[i] & 0xFFFF_FFFF) as usize];
                    w_left += c;
                    s_left += c * y;
                    i += 1;
                }
            }
        }
        best.map(|(code, next, dec)| self.make_split(f, code, next, dec))
    }

    /// Best threshold on feature `f` for the node, or `None` if the feature
    /// is constant there.
    fn best_split_for(
        &self,
        f: usize,
        rows: &[u32],
        mult: &[u32],
        mu: &[f64],
        parent_gain: f64,
        sc: &mut Scratch,
    ) -> Option<Split> {
        let k = self.targets.k;
        let d = self.data.values[f].len();
        if d < 2 {
            return None;
        }
        let mut w_tot = 0.0;
        let mut s_tot = vec![0.0; k];
        // Ordered (code, weight, stats) groups are produced by either path and
        // consumed by the same scan.
        let mut groups: Vec<(u32, f64, usize)> = Vec::new();
        let mut gstats: Vec<f64> = Vec::new();
        if d <= 2 * rows.len() {
            for &r in rows {
                let b = self.data.code(f, r) as usize;
                let c = mult[r as usize] as f64;
                let w = self.targets.row(r, &mut sc.stat);
                sc.hw[b] += c * w;
                for q in 0..k {
                    sc.hs[b * k + q] += c * sc.stat[q];
                }
            }
            for b in 0..d {
                if sc.hw[b] > 0.0 {
                    groups.push((b as u32, sc.hw[b], gstats.len()));
                    gstats.extend_from_slice(&sc.hs[b * k..b * k + k]);
                    sc.hw[b] = 0.0;
                    sc.hs[b * k..b * k + k].iter_mut().for_each(|v| *v = 0.0);
                }
            }
        } else {
            sc.pairs.clear();
            sc.pairs.extend(rows.iter().map(|&r| (self.data.code(f, r), r)));
            sc.pairs.sort_unstable();
            let mut i = 0;
            while i < sc.pairs.len() {
                let code = sc.pairs[i].0;
                let at = gstats.len();
                gstats.extend(std::iter::repeat_n(0.0, k));
                let mut w_sum = 0.0;
                while i < sc.pairs.len() && sc.pairs[i].0 == code {
                    let r = sc.pairs[i].1;
                    let c = mult[r as usize] as f64;
                    let w = self.targets.row(r, &mut sc.stat);
                    w_sum += c * w;
                    for q in 0..k {
                        gstats[at + q] += c * sc.stat[q];
                    }
                    i += 1;
                }
                groups.push((code, w_sum, at));
            }
        }
        if groups.len() < 2 {
            return None;
        }
        for &(_, w, at) in &groups {
            w_tot += w;
            for q in 0..k {
                s_tot[q] += gstats[at + q];
            }
        }
        let mut w_left = 0.0;
        sc.acc_s.iter_mut().for_each(|v| *v = 0.0);
        let mut s_right = vec![0.0; k];
        let mut best: Option<Split> = None;
        for g in 0..groups.len() - 1 {
            let (code, w, at) = groups[g];
            w_left += w;
            for q in 0..k {
                sc.acc_s[q] += gstats[at + q];
                s_right[q] = s_tot[q] - sc.acc_s[q];
            }
            let w_right = w_tot - w_left;
            let dec = gain(&sc.acc_s, w_left, mu) + gain(&s_right, w_right, mu) - parent_gain;
            if best.as_ref().is_none_or(|b| dec > b.decrease) {
                best = Some(self.make_split(f, code, groups[g + 1].0, dec));
            }
        }
        best
    }
}

fn check_matrix(x: &[f64], n: usize, m: usize) -> Result<()> {
    if x.len() != n * m {
        return Err(Error::InvalidInput(format!("matrix has {} values, expected {n}x{m}", x.len())));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite feature value".into()));
    }
    Ok(())
}

fn grow_all(
    x: &[f64],
    n: usize,
    m: usize,
    targets: &Targets<'_>,
    params: &ForestParams,
) -> (Vec<Tree>, Vec<f64>) {
    let data = Binned::new(x, n, m);
    let grower = Grower { data: &data, targets, mtry: params.resolved_mtry(m), min_node: params.min_node };
    let grown: Vec<(Tree, Vec<f64>)> = (0..params.n_tree)
        .into_par_iter()
        .map(|t| grower.grow(seed::derive(params.master_seed, t as u64), params.bootstrap))
        .collect();
    let mut importance = vec![0.0; m];
    let mut trees = Vec::with_capacity(grown.len());
    for (tree, imp) in grown {
        for (a, b) in importance.iter_mut().zip(imp) {
            *a += b;
        }
        trees.push(tree);
    }
    (trees, importance)
}

fn rank_labels(y: &[f64]) -> (Vec<f64>, Vec<u32>) {
    let mut distinct = y.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    let ranks = y.iter().map(|v| distinct.partition_point(|d| d < v) as u32).collect();
    (distinct, ranks)
}

/// Fits a regression forest on the row-major `n x m` matrix `x`.
pub fn fit(x: &[f64], n: usize, feature_names: &[String], y: &[f64], params: &ForestParams) -> Result<ForestModel> {
    let m = feature_names.len();
    params.validate(m)?;
    check_matrix(x, n, m)?;
    if y.len() != n {
        return Err(Error::InvalidInput(format!("{} labels for {n} rows", y.len())));
    }
    if n == 0 {
        return Err(Error::InvalidInput("no training rows".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite label".into()));
    }
    let targets = Targets { k: 1, y, classification: false, class_weights: &[] };
    let (trees, raw_importance) = grow_all(x, n, m, &targets, params);
    let (distinct_labels, label_rank) = rank_labels(y);
    Ok(ForestModel {
        params: params.clone(),
        feature_names: feature_names.to_vec(),
        schema_hash: schema_hash(feature_names),
        labels: y.to_vec(),
        trees,
        mode: ForestMode::Regression,
        raw_importance,
        distinct_labels,
        label_rank,
    })
}

/// Inverse-frequency class weights normalised to sum to one.
pub fn inverse_frequency_weights(classes: &[usize], n_classes: usize) -> Result<Vec<f64>> {
    let mut counts = vec![0usize; n_classes];
    for &c in classes {
        if c >= n_classes {
            return Err(Error::InvalidInput(format!("class {c} outside 0..{n_classes}")));
        }
        counts[c] += 1;
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::InvalidInput(format!("class {c} absent from training data")));
    }
    let inv: Vec<f64> = counts.iter().map(|&n| 1.0 / n as f64).collect();
    let total: f64 = inv.iter().sum();
    Ok(inv.into_iter().map(|w| w / total).collect())
}

/// Fits a classification forest with weighted Gini impurity.
pub fn fit_classifier(
    x: &[f64],
    n: usize,
    feature_names: &[String],
    classes: &[usize],
    n_classes: usize,
    class_weights: &[f64],
    params: &ForestParams,
) -> Result<ForestModel> {
    let m = feature_names.len();
    params.validate(m)?;
    check_matrix(x, n, m)?;
    if classes.len() != n {
        return Err(Error::InvalidInput(format!("{} labels for {n} rows", classes.len())));
    }
    if n_classes < 2 || class_weights.len() != n_classes {
        return Err(Error::InvalidInput("need at least two classes with one weight each".into()));
    }
    if class_weights.iter().any(|&w| !(w >= 0.0)) || (class_weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidInput("class weights must be non-negative and sum to one".into()));
    }
    let mut present = vec![false; n_classes];
    for &c in classes {
        if c >= n_classes {
            return Err(Error::InvalidInput(format!("class {c} outside 0..{n_classes}")));
        }
        present[c] = true;
    }
    if let Some(c) = present.iter().position(|p| !p) {
        return Err(Error::InvalidInput(format!("class {c} absent from training data")));
    }
    let y: Vec<f64> = classes.iter().map(|&c| c as f64).collect();
    let targets = Targets { k: n_classes, y: &y, classification: true, class_weights };
    let (trees, raw_importance) = grow_all(x, n, m, &targets, params);
    Ok(ForestModel {
        params: params.clone(),
        feature_names: feature_names.to_vec(),
        schema_hash: schema_hash(feature_names),
        labels: y,
        trees,
        mode: ForestMode::Classification { n_classes, class_weights: class_weights.to_vec() },
        raw_importance,
        distinct_labels: vec![],
        label_rank: vec![],
    })
}

const FORMAT_TAG: &str = "edwait-forest";
const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Persisted {
    format: String,
    version: u32,
    model: ForestModel,
}

impl ForestModel {
    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn n_train(&self) -> usize {
        self.labels.len()
    }

    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.n_features() {
            return Err(Error::SchemaMismatch { expected: self.n_features(), got: x.len() });
        }
        Ok(())
    }

    fn require_regression(&self) -> Result<()> {
        match self.mode {
            ForestMode::Regression => Ok(()),
            _ => Err(Error::Model("operation needs a regression forest".into())),
        }
    }

    /// Forest weight of every training row for the query `x`.
    pub fn weights(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        self.require_regression()?;
        let mut w = vec![0.0; self.n_train()];
        let t = self.trees.len() as f64;
        for tree in &self.trees {
            let rows = tree.leaf_rows_for(x);
            let share = 1.0 / (rows.len() as f64 * t);
            for &r in rows {
                w[r as usize] += share;
            }
        }
        Ok(w)
    }

    /// Conditional distribution `sum_i w_i 1{y_i <= y}` over training labels.
    pub fn predict_cdf(&self, x: &[f64]) -> Result<ForecastDistribution> {
        self.check(x)?;
        self.require_regression()?;
        let mut pairs: Vec<(u32, f64)> = Vec::new();
        let mut ranks: Vec<u32> = Vec::new();
        for tree in &self.trees {
            let rows = tree.leaf_rows_for(x);
            ranks.clear();
            ranks.extend(rows.iter().map(|&r| self.label_rank[r as usize]));
            ranks.sort_unstable();
            let size = rows.len() as f64;
            let mut i = 0;
            while i < ranks.len() {
                let mut j = i;
                while j < ranks.len() && ranks[j] == ranks[i] {
                    j += 1;
                }
                pairs.push((ranks[i], (j - i) as f64 / size));
                i = j;
            }
        }
        pairs.sort_by_key(|p| p.0);
        let t = self.trees.len() as f64;
        let mut support = Vec::new();
        let mut weights = Vec::new();
        let mut i = 0;
        while i < pairs.len() {
            let rank = pairs[i].0;
            let mut acc = 0.0;
            while i < pairs.len() && pairs[i].0 == rank {
                acc += pairs[i].1;
                i += 1;
            }
            support.push(self.distinct_labels[rank as usize]);
            weights.push(acc / t);
        }
        Ok(ForecastDistribution::Discrete { support, weights })
    }

    /// Conditional mean `sum_i w_i y_i`.
    pub fn predict_mean(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        self.require_regression()?;
        let s: f64 = self.trees.iter().map(|t| t.leaf_of(x).value).sum();
        Ok(s / self.trees.len() as f64)
    }

    /// One draw from the conditional distribution: a random tree, then a
    /// random bootstrap row of its leaf.
    pub fn sample<R: rand::Rng>(&self, x: &[f64], rng: &mut R) -> Result<f64> {
        self.check(x)?;
        self.require_regression()?;
        let tree = &self.trees[rng.random_range(0..self.trees.len())];
        let rows = tree.leaf_rows_for(x);
        Ok(self.labels[rows[rng.random_range(0..rows.len())] as usize])
    }

    /// Averaged class probabilities.
    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check(x)?;
        let ForestMode::Classification { n_classes, .. } = self.mode else {
            return Err(Error::Model("operation needs a classification forest".into()));
        };
        let mut p = vec![0.0; n_classes];
        for tree in &self.trees {
            let leaf = tree.leaf_of(x).left as usize;
            for (a, b) in p.iter_mut().zip(&tree.leaf_probs[leaf * n_classes..(leaf + 1) * n_classes]) {
                *a += b;
            }
        }
        let total: f64 = p.iter().sum();
        p.iter_mut().for_each(|v| *v /= total);
        Ok(p)
    }

    /// Impurity-decrease importance scaled so the largest score is 1, in
    /// descending order (ties by feature index).
    pub fn importance(&self) -> Vec<(String, f64)> {
        let max = self.raw_importance.iter().cloned().fold(0.0, f64::max);
        let mut out: Vec<(usize, f64)> = self
            .raw_importance
            .iter()
            .enumerate()
            .map(|(j, &v)| (j, if max > 0.0 { v / max } else { 0.0 }))
            .collect();
        out.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        out.into_iter().map(|(j, v)| (self.feature_names[j].clone(), v)).collect()
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let p = Persisted { format: FORMAT_TAG.into(), version: FORMAT_VERSION, model: self.clone() };
        ciborium::into_writer(&p, w).map_err(|e| Error::Model(e.to_string()))
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let p: Persisted = ciborium::from_reader(r).map_err(|e| Error::Model(e.to_string()))?;
        if p.format != FORMAT_TAG || p.version != FORMAT_VERSION {
            return Err(Error::Model(format!("unsupported model format {} v{}", p.format, p.version)));
        }
        Ok(p.model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_to(f)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        Self::read_from(f)
    }
}

/// `k` one-vs-rest binary forests whose positive-class probabilities are
/// renormalised to sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneVsRest {
    pub models: Vec<ForestModel>,
}

impl OneVsRest {
    pub fn fit(
        x: &[f64],
        n: usize,
        feature_names: &[String],
        classes: &[usize],
        n_classes: usize,
        params: &ForestParams,
    ) -> Result<Self> {
        let mut models = Vec::with_capacity(n_classes);
        for c in 0..n_classes {
            let binary: Vec<usize> = classes.iter().map(|&k| usize::from(k == c)).collect();
            let w = inverse_frequency_weights(&binary, 2)?;
            let p = ForestParams { master_seed: seed::derive(params.master_seed, 1000 + c as u64), ..params.clone() };
            models.push(fit_classifier(x, n, feature_names, &binary, 2, &w, &p)?);
        }
        Ok(OneVsRest { models })
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut p = Vec::with_capacity(self.models.len());
        for m in &self.models {
            p.push(m.predict_proba(x)?[1]);
        }
        let total: f64 = p.iter().sum();
        if total <= 0.0 {
            let k = p.len() as f64;
            return Ok(vec![1.0 / k; p.len()]);
        }
        Ok(p.into_iter().map(|v| v / total).collect())
    }
}
