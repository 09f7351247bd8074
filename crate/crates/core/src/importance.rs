//! Per-dimension main-effect importance weights, estimated from a trial
//! history with a bootstrapped ensemble of regression trees.
//!
//! Each tree partitions the space into boxes. Marginalizing the ensemble
//! prediction over one dimension integrates the remaining dimensions
//! exactly through the box measures (no Monte Carlo), so a given seed
//! always yields the same weights. The weight of a dimension is the share
//! of prediction variance explained by its marginal, in percent, averaged
//! over trees. Interaction effects are not attributed, which is why the
//! weights sum to at most 100.

use crate::engine::RunHistory;
use crate::seed::{derive_seed, stream};
use crate::space::{Candidate, Domain, SearchSpace};
use rand::Rng;
use std::collections::BTreeMap;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ImportanceError {
    #[error("need at least {needed} successful trials, got {got}")]
    TooFewTrials { needed: usize, got: usize },
    #[error("objective values are all identical; importance is undefined")]
    ConstantObjective,
    #[error("ensemble explains no variance; importance is undefined")]
    ConstantModel,
    #[error("candidate value does not belong to the search space: {0}")]
    ValueMismatch(String),
    #[error("ensemble was fit on a different space")]
    SpaceMismatch,
}

/// Ensemble settings. The defaults favor stability on the few hundred
/// samples a phase-one history typically holds.
#[derive(Debug, Clone, PartialEq)]
pub struct ImportanceParams {
    pub n_trees: usize,
    pub min_samples_leaf: usize,
    pub bootstrap: bool,
    pub max_depth: Option<u32>,
}

impl Default for ImportanceParams {
    fn default() -> Self {
        Self {
            n_trees: 32,
            min_samples_leaf: 2,
            bootstrap: true,
            max_depth: None,
        }
    }
}

/// Tree count and depth digest of a fitted ensemble.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelMeta {
    pub n_trees: usize,
    pub depth_min: u32,
    pub depth_max: u32,
    pub depth_mean: f64,
}

/// Main-effect weights per dimension, in percent of explained variance.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightReport {
    pub weights: Vec<f64>,
    pub n_samples: usize,
    pub meta: ModelMeta,
}

#[derive(Debug, Clone, PartialEq)]
enum SplitRule {
    /// Numeric test `x < t`.
    Threshold(f64),
    /// Categorical membership of the left child, as sorted indices.
    Subset(Vec<u32>),
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf {
        value: f64,
    },
    Split {
        dim: usize,
        rule: SplitRule,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
struct Tree {
    nodes: Vec<Node>,
    depth: u32,
}

/// Per-dimension feature column.
#[derive(Debug, Clone)]
enum Column {
    Numeric(Vec<f64>),
    Categorical(Vec<u32>),
}

/// What the marginalization needs to know about a dimension's domain.
#[derive(Debug, Clone, PartialEq)]
enum DimKind {
    /// Real interval `[lo, hi]`.
    Real {
        lo: f64,
        hi: f64,
    },
    /// Integer interval, widened to the half-open `[lo, hi + 1)`.
    Integer {
        lo: f64,
        hi: f64,
    },
    Categorical {
        n: u32,
    },
}

#[derive(Debug, Clone)]
pub struct TreeEnsemble {
    trees: Vec<Tree>,
    kinds: Vec<DimKind>,
    n_samples: usize,
}

fn dim_kinds(space: &SearchSpace) -> Vec<DimKind> {
    space
        .dimensions()
        .iter()
        .map(|d| match d.domain() {
            Domain::Real { lo, hi } => DimKind::Real { lo: *lo, hi: *hi },
            Domain::Integer { lo, hi } => DimKind::Integer {
                lo: *lo as f64,
                hi: (*hi as f64) + 1.0,
            },
            Domain::Categorical(values) => DimKind::Categorical {
                n: values.len() as u32,
            },
        })
        .collect()
}

fn build_columns(
    space: &SearchSpace,
    candidates: &[Candidate],
) -> Result<Vec<Column>, ImportanceError> {
    let n = candidates.len();
    let mut columns = Vec::with_capacity(space.len());
    for (j, dim) in space.dimensions().iter().enumerate() {
        let column = match dim.domain() {
            Domain::Categorical(values) => {
                let mut col = Vec::with_capacity(n);
                for c in candidates {
                    let idx = values
                        .iter()
                        .position(|v| v == &c.values[j])
                        .ok_or_else(|| ImportanceError::ValueMismatch(dim.name().to_string()))?;
                    col.push(idx as u32);
                }
                Column::Categorical(col)
            }
            _ => {
                let mut col = Vec::with_capacity(n);
                for c in candidates {
                    let x = c.values[j]
                        .as_f64()
                        .ok_or_else(|| ImportanceError::ValueMismatch(dim.name().to_string()))?;
                    col.push(x);
                }
                Column::Numeric(col)
            }
        };
        columns.push(column);
    }
    Ok(columns)
}

/// Fit the ensemble on the successful trials of a history.
pub fn fit_ensemble(
    history: &RunHistory,
    params: &ImportanceParams,
    seed: u64,
) -> Result<TreeEnsemble, ImportanceError> {
    let mut candidates = Vec::new();
    let mut values = Vec::new();
    for trial in history.trials() {
        if let Some(v) = trial.value {
            candidates.push(trial.candidate.clone());
            values.push(v);
        }
    }
    fit_ensemble_raw(history.space(), &candidates, &values, params, seed)
}

/// Fit the ensemble directly on `(candidate, value)` pairs.
pub fn fit_ensemble_raw(
    space: &SearchSpace,
    candidates: &[Candidate],
    values: &[f64],
    params: &ImportanceParams,
    seed: u64,
) -> Result<TreeEnsemble, ImportanceError> {
    const MIN_TRIALS: usize = 10;
    let n = candidates.len();
    assert_eq!(n, values.len());
    if n < MIN_TRIALS {
        return Err(ImportanceError::TooFewTrials {
            needed: MIN_TRIALS,
            got: n,
        });
    }
    if values.iter().all(|v| v == &values[0]) {
        return Err(ImportanceError::ConstantObjective);
    }
    let columns = build_columns(space, candidates)?;
    let kinds = dim_kinds(space);

    let fit_one = |t: usize| -> Tree {
        let mut rng = stream(derive_seed(seed, "importance-tree", t as u64), "fit", 0);
        let indices: Vec<usize> = if params.bootstrap {
            (0..n).map(|_| rng.gen_range(0..n)).collect()
        } else {
            (0..n).collect()
        };
        grow_tree(&columns, values, indices, params)
    };

    #[cfg(feature = "parallel")]
    let trees: Vec<Tree> = {
        use rayon::prelude::*;
        (0..params.n_trees).into_par_iter().map(fit_one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let trees: Vec<Tree> = (0..params.n_trees).map(fit_one).collect();

    Ok(TreeEnsemble {
        trees,
        kinds,
        n_samples: n,
    })
}

struct CandidateSplit {
    sse: f64,
    dim: usize,
    rule: SplitRule,
}

fn grow_tree(
    columns: &[Column],
    y: &[f64],
    indices: Vec<usize>,
    params: &ImportanceParams,
) -> Tree {
    let mut nodes = Vec::new();
    let mut depth = 0;
    build_node(columns, y, indices, params, 0, &mut nodes, &mut depth);
    Tree { nodes, depth }
}

fn build_node(
    columns: &[Column],
    y: &[f64],
    indices: Vec<usize>,
    params: &ImportanceParams,
    level: u32,
    nodes: &mut Vec<Node>,
    max_level: &mut u32,
) -> usize {
    *max_level = (*max_level).max(level);
    let n = indices.len();
    let sum: f64 = indices.iter().map(|&i| y[i]).sum();
    let sum2: f64 = indices.iter().map(|&i| y[i] * y[i]).sum();
    let mean = sum / n as f64;
    let node_sse = sum2 - sum * sum / n as f64;

    let depth_reached = params.max_depth.is_some_and(|d| level >= d);
    let splittable = n >= 2 * params.min_samples_leaf
        && !depth_reached
        && indices.iter().any(|&i| y[i] != y[indices[0]]);

    let best = if splittable {
        best_split(columns, y, &indices, params.min_samples_leaf)
    } else {
        None
    };

    match best {
        Some(split) if split.sse < node_sse => {
            let (left_idx, right_idx) = partition(columns, &indices, split.dim, &split.rule);
            let slot = nodes.len();
            nodes.push(Node::Leaf { value: mean }); // placeholder
            let left = build_node(columns, y, left_idx, params, level + 1, nodes, max_level);
            let right = build_node(columns, y, right_idx, params, level + 1, nodes, max_level);
            nodes[slot] = Node::Split {
                dim: split.dim,
                rule: split.rule,
                left,
                right,
            };
            slot
        }
        _ => {
            nodes.push(Node::Leaf { value: mean });
            nodes.len() - 1
        }
    }
}

// Equal-SSE ties (common at small nodes, where different dimensions can
// induce the same row partition) must not resolve by dimension scan order:
// permuting the dimensions has to permute the fitted trees.
fn rule_precedes(a: &SplitRule, b: &SplitRule) -> bool {
    match (a, b) {
        (SplitRule::Threshold(x), SplitRule::Threshold(y)) => x.total_cmp(y).is_lt(),
        (SplitRule::Threshold(_), SplitRule::Subset(_)) => true,
        (SplitRule::Subset(_), SplitRule::Threshold(_)) => false,
        (SplitRule::Subset(x), SplitRule::Subset(y)) => x < y,
    }
}

fn best_split(
    columns: &[Column],
    y: &[f64],
    indices: &[usize],
    min_leaf: usize,
) -> Option<CandidateSplit> {
    let mut best: Option<CandidateSplit> = None;
    for (dim, column) in columns.iter().enumerate() {
        let candidate = match column {
            Column::Numeric(col) => {
                best_numeric_split(col, y, indices, min_leaf).map(|(sse, t)| CandidateSplit {
                    sse,
                    dim,
                    rule: SplitRule::Threshold(t),
                })
            }
            Column::Categorical(col) => {
                best_subset_split(col, y, indices, min_leaf).map(|(sse, subset)| CandidateSplit {
                    sse,
                    dim,
                    rule: SplitRule::Subset(subset),
                })
            }
        };
        if let Some(c) = candidate {
            if best.as_ref().is_none_or(|b| {
                c.sse < b.sse || (c.sse == b.sse && rule_precedes(&c.rule, &b.rule))
            }) {
                best = Some(c);
            }
        }
    }
    best
}

fn best_numeric_split(
    col: &[f64],
    y: &[f64],
    indices: &[usize],
    min_leaf: usize,
) -> Option<(f64, f64)> {
    let n = indices.len();
    let mut pairs: Vec<(f64, f64)> = indices.iter().map(|&i| (col[i], y[i])).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total_sum: f64 = pairs.iter().map(|p| p.1).sum();
    let total_sum2: f64 = pairs.iter().map(|p| p.1 * p.1).sum();

    let mut best: Option<(f64, f64)> = None;
    let mut left_sum = 0.0;
    let mut left_sum2 = 0.0;
    for k in 1..n {
        left_sum += pairs[k - 1].1;
        left_sum2 += pairs[k - 1].1 * pairs[k - 1].1;
        if pairs[k - 1].0 == pairs[k].0 || k < min_leaf || n - k < min_leaf {
            continue;
        }
        let kl = k as f64;
        let kr = (n - k) as f64;
        let sse = (left_sum2 - left_sum * left_sum / kl)
            + ((total_sum2 - left_sum2) - (total_sum - left_sum) * (total_sum - left_sum) / kr);
        if best.is_none_or(|b| sse < b.0) {
            let mut t = 0.5 * (pairs[k - 1].0 + pairs[k].0);
            if t <= pairs[k - 1].0 {
                // Adjacent floats: fall back to the right value so the
                // `x < t` test still separates the two sides.
                t = pairs[k].0;
            }
            best = Some((sse, t));
        }
    }
    best
}

fn best_subset_split(
    col: &[u32],
    y: &[f64],
    indices: &[usize],
    min_leaf: usize,
) -> Option<(f64, Vec<u32>)> {
    // Group by category, then scan contiguous partitions of the groups
    // ordered by mean response (optimal for squared error).
    let mut groups: BTreeMap<u32, (usize, f64, f64)> = BTreeMap::new();
    for &i in indices {
        let e = groups.entry(col[i]).or_insert((0, 0.0, 0.0));
        e.0 += 1;
        e.1 += y[i];
        e.2 += y[i] * y[i];
    }
    if groups.len() < 2 {
        return None;
    }
    let mut ordered: Vec<(u32, usize, f64, f64)> = groups
        .into_iter()
        .map(|(cat, (c, s, s2))| (cat, c, s, s2))
        .collect();
    ordered.sort_by(|a, b| {
        (a.2 / a.1 as f64)
            .total_cmp(&(b.2 / b.1 as f64))
            .then(a.0.cmp(&b.0))
    });

    let n = indices.len();
    let total_sum: f64 = ordered.iter().map(|g| g.2).sum();
    let total_sum2: f64 = ordered.iter().map(|g| g.3).sum();

    let mut best: Option<(f64, usize)> = None;
    let mut left_n = 0usize;
    let mut left_sum = 0.0;
    let mut left_sum2 = 0.0;
    for (k, group) in ordered.iter().enumerate().take(ordered.len() - 1) {
        left_n += group.1;
        left_sum += group.2;
        left_sum2 += group.3;
        if left_n < min_leaf || n - left_n < min_leaf {
            continue;
        }
        let kl = left_n as f64;
        let kr = (n - left_n) as f64;
        let sse = (left_sum2 - left_sum * left_sum / kl)
            + ((total_sum2 - left_sum2) - (total_sum - left_sum) * (total_sum - left_sum) / kr);
        if best.is_none_or(|b| sse < b.0) {
            best = Some((sse, k));
        }
    }
    best.map(|(sse, k)| {
        let mut subset: Vec<u32> = ordered[..=k].iter().map(|g| g.0).collect();
        subset.sort_unstable();
        (sse, subset)
    })
}

fn goes_left(columns: &[Column], row: usize, dim: usize, rule: &SplitRule) -> bool {
    match (&columns[dim], rule) {
        (Column::Numeric(col), SplitRule::Threshold(t)) => col[row] < *t,
        (Column::Categorical(col), SplitRule::Subset(subset)) => {
            subset.binary_search(&col[row]).is_ok()
        }
        _ => unreachable!("split rule does not match the column kind"),
    }
}

fn partition(
    columns: &[Column],
    indices: &[usize],
    dim: usize,
    rule: &SplitRule,
) -> (Vec<usize>, Vec<usize>) {
    let mut left = Vec::new();
    let mut right = Vec::new();
    for &i in indices {
        if goes_left(columns, i, dim, rule) {
            left.push(i);
        } else {
            right.push(i);
        }
    }
    (left, right)
}

/// A leaf's constraint on one dimension.
#[derive(Debug, Clone)]
enum DimBox {
    /// Half-open `[lo, hi)`.
    Range {
        lo: f64,
        hi: f64,
    },
    Cats(Vec<u32>),
}

impl DimBox {
    fn root(kind: &DimKind) -> Self {
        match kind {
            DimKind::Real { lo, hi } | DimKind::Integer { lo, hi } => {
                DimBox::Range { lo: *lo, hi: *hi }
            }
            DimKind::Categorical { n } => DimBox::Cats((0..*n).collect()),
        }
    }

    /// Fraction of the domain's measure the box covers.
    fn fraction(&self, kind: &DimKind) -> f64 {
        match (self, kind) {
            (DimBox::Range { lo, hi }, DimKind::Real { lo: rl, hi: rh }) => {
                if rh - rl == 0.0 {
                    1.0
                } else {
                    (hi - lo) / (rh - rl)
                }
            }
            (DimBox::Range { lo, hi }, DimKind::Integer { lo: rl, hi: rh }) => {
                let count = |a: f64, b: f64| (b.ceil() - a.ceil()).max(0.0);
                count(*lo, *hi) / count(*rl, *rh)
            }
            (DimBox::Cats(cats), DimKind::Categorical { n }) => cats.len() as f64 / *n as f64,
            _ => unreachable!("box does not match the dimension kind"),
        }
    }
}

struct LeafInfo {
    value: f64,
    boxes: Vec<DimBox>,
    fractions: Vec<f64>,
}

fn collect_leaves(tree: &Tree, kinds: &[DimKind]) -> Vec<LeafInfo> {
    let mut leaves = Vec::new();
    let root: Vec<DimBox> = kinds.iter().map(DimBox::root).collect();
    let mut stack = vec![(0usize, root)];
    while let Some((node, boxes)) = stack.pop() {
        match &tree.nodes[node] {
            Node::Leaf { value } => {
                let fractions = boxes
                    .iter()
                    .zip(kinds)
                    .map(|(b, k)| b.fraction(k))
                    .collect();
                leaves.push(LeafInfo {
                    value: *value,
                    boxes,
                    fractions,
                });
            }
            Node::Split {
                dim,
                rule,
                left,
                right,
            } => {
                let mut left_boxes = boxes.clone();
                let mut right_boxes = boxes;
                match rule {
                    SplitRule::Threshold(t) => {
                        if let (DimBox::Range { hi, .. }, DimBox::Range { lo, .. }) =
                            (&mut left_boxes[*dim], &mut right_boxes[*dim])
                        {
                            *hi = *t;
                            *lo = *t;
                        }
                    }
                    SplitRule::Subset(subset) => {
                        if let (DimBox::Cats(lc), DimBox::Cats(rc)) =
                            (&mut left_boxes[*dim], &mut right_boxes[*dim])
                        {
                            rc.retain(|c| subset.binary_search(c).is_err());
                            lc.retain(|c| subset.binary_search(c).is_ok());
                        }
                    }
                }
                stack.push((*left, left_boxes));
                stack.push((*right, right_boxes));
            }
        }
    }
    leaves
}

/// Variance of the piecewise-constant tree function under the uniform
/// product measure.
fn tree_total_variance(leaves: &[LeafInfo]) -> f64 {
    let mut mean = 0.0;
    let mut m2 = 0.0;
    for leaf in leaves {
        let mu: f64 = leaf.fractions.iter().product();
        mean += leaf.value * mu;
        m2 += leaf.value * leaf.value * mu;
    }
    m2 - mean * mean
}

/// Variance of dimension `dim`'s marginal within one tree: the remaining
/// dimensions are integrated out exactly through the leaf-box measures.
fn tree_marginal_variance(tree: &Tree, kinds: &[DimKind], dim: usize, leaves: &[LeafInfo]) -> f64 {
    // Atom boundaries on `dim`: the thresholds this tree uses, or each
    // category. The marginal is constant on every atom.
    let (var_i, _check_mean) = match &kinds[dim] {
        DimKind::Categorical { n } => {
            let n = *n as usize;
            let mut marginal = vec![0.0f64; n];
            for leaf in leaves {
                let mu_rest: f64 = leaf
                    .fractions
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != dim)
                    .map(|(_, f)| f)
                    .product();
                if let DimBox::Cats(cats) = &leaf.boxes[dim] {
                    for &c in cats {
                        marginal[c as usize] += leaf.value * mu_rest;
                    }
                }
            }
            let w = 1.0 / n as f64;
            let mean_i: f64 = marginal.iter().map(|a| a * w).sum();
            let var: f64 = marginal
                .iter()
                .map(|a| (a - mean_i) * (a - mean_i) * w)
                .sum();
            (var, mean_i)
        }
        kind @ (DimKind::Real { lo, hi } | DimKind::Integer { lo, hi }) => {
            let mut boundaries = vec![*lo];
            for node in &tree.nodes {
                if let Node::Split {
                    dim: d,
                    rule: SplitRule::Threshold(t),
                    ..
                } = node
                {
                    if *d == dim {
                        boundaries.push(*t);
                    }
                }
            }
            boundaries.push(*hi);
            boundaries.sort_by(f64::total_cmp);
            boundaries.dedup();
            let atoms = boundaries.len() - 1;

            let mut diff = vec![0.0f64; atoms + 1];
            for leaf in leaves {
                let mu_rest: f64 = leaf
                    .fractions
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != dim)
                    .map(|(_, f)| f)
                    .product();
                if let DimBox::Range { lo: bl, hi: bh } = &leaf.boxes[dim] {
                    let start = boundaries.partition_point(|b| b < bl);
                    let end = boundaries.partition_point(|b| b < bh);
                    diff[start] += leaf.value * mu_rest;
                    diff[end] -= leaf.value * mu_rest;
                }
            }

            let mut acc = 0.0;
            let mut mean_i = 0.0;
            let mut m2_i = 0.0;
            for a in 0..atoms {
                acc += diff[a];
                let w = DimBox::Range {
                    lo: boundaries[a],
                    hi: boundaries[a + 1],
                }
                .fraction(kind);
                mean_i += acc * w;
                m2_i += acc * acc * w;
            }
            (m2_i - mean_i * mean_i, mean_i)
        }
    };
    var_i.max(0.0)
}

/// Compute the main-effect weight of every dimension, in percent of the
/// per-tree prediction variance, averaged over trees.
pub fn main_effect_weights(
    ensemble: &TreeEnsemble,
    space: &SearchSpace,
) -> Result<WeightReport, ImportanceError> {
    if dim_kinds(space) != ensemble.kinds {
        return Err(ImportanceError::SpaceMismatch);
    }
    let d = ensemble.kinds.len();
    let mut sums = vec![0.0f64; d];
    let mut counted = 0usize;
    for tree in &ensemble.trees {
        let leaves = collect_leaves(tree, &ensemble.kinds);
        let total = tree_total_variance(&leaves);
        if total <= 0.0 {
            continue;
        }
        counted += 1;
        for (dim, sum) in sums.iter_mut().enumerate() {
            *sum += tree_marginal_variance(tree, &ensemble.kinds, dim, &leaves) / total;
        }
    }
    if counted == 0 {
        return Err(ImportanceError::ConstantModel);
    }
    let weights: Vec<f64> = sums.iter().map(|s| 100.0 * s / counted as f64).collect();

    let depths: Vec<u32> = ensemble.trees.iter().map(|t| t.depth).collect();
    let meta = ModelMeta {
        n_trees: ensemble.trees.len(),
        depth_min: depths.iter().copied().min().unwrap_or(0),
        depth_max: depths.iter().copied().max().unwrap_or(0),
        depth_mean: depths.iter().map(|&d| d as f64).sum::<f64>() / depths.len().max(1) as f64,
    };
    Ok(WeightReport {
        weights,
        n_samples: ensemble.n_samples,
        meta,
    })
}

impl TreeEnsemble {
    /// Ensemble prediction for one candidate (bagged tree average).
    pub fn predict(
        &self,
        columns_row: &Candidate,
        space: &SearchSpace,
    ) -> Result<f64, ImportanceError> {
        let columns = build_columns(space, std::slice::from_ref(columns_row))?;
        let mut acc = 0.0;
        for tree in &self.trees {
            let mut node = 0usize;
            loop {
                match &tree.nodes[node] {
                    Node::Leaf { value } => {
                        acc += value;
                        break;
                    }
                    Node::Split {
                        dim,
                        rule,
                        left,
                        right,
                    } => {
                        node = if goes_left(&columns, 0, *dim, rule) {
                            *left
                        } else {
                            *right
                        };
                    }
                }
            }
        }
        Ok(acc / self.trees.len() as f64)
    }

    pub fn n_samples(&self) -> usize {
        self.n_samples
    }
}
