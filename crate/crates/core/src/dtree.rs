//! Decision-tree analysis of test results.
//!
//! A CART tree with Gini impurity is grown over boolean "rule applied"
//! features. Edges to the "not applied" child cost 1 and edges to the
//! "applied" child cost 0, so the cheapest non-breaking leaf is the one that
//! excludes the fewest rules.

use std::cmp::Reverse;
use std::collections::{BTreeSet, BinaryHeap};
use std::fmt::Write as _;

use serde::Serialize;

use crate::bitset::BitSet;
use crate::error::{Error, Result};
use crate::model::{Guide, ResultSet, RuleId, Solution, Strategy};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeParams {
    pub min_split: usize,
    pub max_depth: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        TreeParams {
            min_split: 2,
            max_depth: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DTreeNode {
    Split {
        rule: RuleId,
        /// Rows where `rule` was not applied.
        left: Box<DTreeNode>,
        /// Rows where `rule` was applied.
        right: Box<DTreeNode>,
    },
    Leaf {
        breaking: bool,
        samples_pass: usize,
        samples_fail: usize,
    },
}

impl DTreeNode {
    pub fn is_leaf(&self) -> bool {
        matches!(self, DTreeNode::Leaf { .. })
    }

    pub fn num_leaves(&self) -> usize {
        match self {
            DTreeNode::Leaf { .. } => 1,
            DTreeNode::Split { left, right, .. } => left.num_leaves() + right.num_leaves(),
        }
    }

    pub fn num_splits(&self) -> usize {
        match self {
            DTreeNode::Leaf { .. } => 0,
            DTreeNode::Split { left, right, .. } => 1 + left.num_splits() + right.num_splits(),
        }
    }

    /// Label the tree assigns to a set of applied rules.
    pub fn predict(&self, applied: &BTreeSet<RuleId>) -> bool {
        match self {
            DTreeNode::Leaf { breaking, .. } => *breaking,
            DTreeNode::Split { rule, left, right } => {
                if applied.contains(rule) {
                    right.predict(applied)
                } else {
                    left.predict(applied)
                }
            }
        }
    }
}

/// Root-to-leaf path with its Dijkstra cost.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightedPath {
    /// Leaf number in depth-first order, left before right.
    pub leaf: usize,
    pub excluded_on_path: BTreeSet<RuleId>,
    pub cost: usize,
    pub breaking: bool,
    pub samples_pass: usize,
    pub samples_fail: usize,
}

struct Training<'a> {
    features: Vec<BitSet>,
    /// Feature indices sorted by rule id, so the first best split wins ties.
    order: Vec<usize>,
    fail: BitSet,
    rules: &'a [RuleId],
    params: TreeParams,
}

pub fn train_tree(results: &ResultSet, guide: &Guide, params: TreeParams) -> Result<DTreeNode> {
    results.validate_against(guide)?;
    let rows: Vec<_> = results.tuple_records().collect();
    if rows.is_empty() || rows.len() < params.min_split {
        return Err(Error::InsufficientData(format!(
            "no data to partition: {} tuple record(s)",
            rows.len()
        )));
    }
    let failing = rows.iter().filter(|r| !r.passed).count();
    if failing == 0 {
        return Err(Error::InsufficientData(
            "every tuple passed; there is no breaking behaviour to learn".into(),
        ));
    }
    if failing == rows.len() {
        return Err(Error::InsufficientData(
            "every tuple failed; there is no non-breaking behaviour to learn".into(),
        ));
    }

    let mut features = vec![BitSet::new(rows.len()); guide.len()];
    for (i, record) in rows.iter().enumerate() {
        for rule in &record.applied {
            features[guide.position(rule).expect("validated against guide")].insert(i);
        }
    }
    let mut order: Vec<usize> = (0..guide.len()).collect();
    order.sort_by(|&a, &b| guide.rules()[a].cmp(&guide.rules()[b]));
    let fail = BitSet::from_bools(&rows.iter().map(|r| !r.passed).collect::<Vec<_>>());

    let training = Training {
        features,
        order,
        fail,
        rules: guide.rules(),
        params,
    };
    Ok(training.grow(BitSet::full(rows.len()), 0))
}

/// Weighted child impurity `f_l (n_l - f_l) / n_l + f_r (n_r - f_r) / n_r`
/// as an exact fraction; proportional to the weighted Gini of the split.
#[derive(Clone, Copy)]
struct Impurity {
    num: u128,
    den: u128,
}

impl Impurity {
    fn of_split(n_l: usize, f_l: usize, n_r: usize, f_r: usize) -> Self {
        let (n_l, f_l, n_r, f_r) = (n_l as u128, f_l as u128, n_r as u128, f_r as u128);
        Impurity {
            num: f_l * (n_l - f_l) * n_r + f_r * (n_r - f_r) * n_l,
            den: n_l * n_r,
        }
    }

    fn lt(self, other: Impurity) -> bool {
        self.num * other.den < other.num * self.den
    }
}

impl Training<'_> {
    fn grow(&self, rows: BitSet, depth: usize) -> DTreeNode {
        let n = rows.count();
        let f = rows.and_count(&self.fail);
        let leaf = || DTreeNode::Leaf {
            breaking: f > 0,
            samples_pass: n - f,
            samples_fail: f,
        };
        let pure = f == 0 || f == n;
        let depth_reached = self.params.max_depth.is_some_and(|d| depth >= d);
        if pure || n < self.params.min_split || depth_reached {
            return leaf();
        }

        let mut best: Option<(usize, Impurity)> = None;
        for &j in &self.order {
            let col = &self.features[j];
            let n_r = rows.and_count(col);
            if n_r == 0 || n_r == n {
                continue;
            }
            let f_r = rows.and3_count(col, &self.fail);
            let score = Impurity::of_split(n - n_r, f - f_r, n_r, f_r);
            if best.map_or(true, |(_, b)| score.lt(b)) {
                best = Some((j, score));
            }
        }
        let Some((j, _)) = best else {
            // Identical feature vectors with mixed outcomes.
            return leaf();
        };
        let col = &self.features[j];
        DTreeNode::Split {
            rule: self.rules[j].clone(),
            left: Box::new(self.grow(rows.and_not(col), depth + 1)),
            right: Box::new(self.grow(rows.and(col), depth + 1)),
        }
    }
}

/// Flattened tree used for the graph search.
struct Arena<'a> {
    nodes: Vec<&'a DTreeNode>,
    /// `(child, weight, rule)` edges per node.
    edges: Vec<Vec<(usize, usize, &'a RuleId)>>,
    /// Leaf number of each node, if it is a leaf.
    leaf_no: Vec<Option<usize>>,
}

impl<'a> Arena<'a> {
    fn build(root: &'a DTreeNode) -> Self {
        let mut arena = Arena {
            nodes: Vec::new(),
            edges: Vec::new(),
            leaf_no: Vec::new(),
        };
        let mut leaves = 0;
        arena.push(root, &mut leaves);
        arena
    }

    fn push(&mut self, node: &'a DTreeNode, leaves: &mut usize) -> usize {
        let id = self.nodes.len();
        self.nodes.push(node);
        self.edges.push(Vec::new());
        self.leaf_no.push(None);
        match node {
            DTreeNode::Leaf { .. } => {
                self.leaf_no[id] = Some(*leaves);
                *leaves += 1;
            }
            DTreeNode::Split { rule, left, right } => {
                let l = self.push(left, leaves);
                let r = self.push(right, leaves);
                self.edges[id] = vec![(l, 1, rule), (r, 0, rule)];
            }
        }
        id
    }
}

/// Every leaf with its root path, costs computed by Dijkstra.
pub fn weighted_paths(tree: &DTreeNode) -> Vec<WeightedPath> {
    let arena = Arena::build(tree);
    let len = arena.nodes.len();
    let mut dist = vec![usize::MAX; len];
    let mut parent: Vec<Option<(usize, usize, &RuleId)>> = vec![None; len];
    let mut heap = BinaryHeap::new();
    dist[0] = 0;
    heap.push(Reverse((0usize, 0usize)));
    while let Some(Reverse((d, u))) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, w, rule) in &arena.edges[u] {
            if d + w < dist[v] {
                dist[v] = d + w;
                parent[v] = Some((u, w, rule));
                heap.push(Reverse((d + w, v)));
            }
        }
    }

    let mut paths = Vec::new();
    for id in 0..len {
        let Some(leaf) = arena.leaf_no[id] else {
            continue;
        };
        let DTreeNode::Leaf {
            breaking,
            samples_pass,
            samples_fail,
        } = *arena.nodes[id]
        else {
            unreachable!("leaf numbers are only assigned to leaves");
        };
        let mut excluded = BTreeSet::new();
        let mut at = id;
        while let Some((up, w, rule)) = parent[at] {
            if w == 1 {
                excluded.insert(rule.clone());
            }
            at = up;
        }
        paths.push(WeightedPath {
            leaf,
            excluded_on_path: excluded,
            cost: dist[id],
            breaking,
            samples_pass,
            samples_fail,
        });
    }
    paths.sort_by_key(|p| p.leaf);
    paths
}

/// Picks a non-breaking leaf and returns the rules excluded on its path.
pub fn find_solution(tree: &DTreeNode, strategy: Strategy) -> Result<Solution> {
    let paths = weighted_paths(tree);
    let candidates = paths.iter().filter(|p| !p.breaking);
    let by_ids = |a: &WeightedPath, b: &WeightedPath| a.excluded_on_path.iter().cmp(b.excluded_on_path.iter());
    let best = match strategy {
        Strategy::DtreeShortestPath => candidates.min_by(|a, b| {
            a.cost
                .cmp(&b.cost)
                .then(b.samples_pass.cmp(&a.samples_pass))
                .then_with(|| by_ids(a, b))
        }),
        Strategy::DtreeMaxPartition => candidates.min_by(|a, b| {
            b.samples_pass
                .cmp(&a.samples_pass)
                .then(a.cost.cmp(&b.cost))
                .then_with(|| by_ids(a, b))
        }),
        Strategy::LogicMin => {
            return Err(Error::Validation(
                "logic_min is not a decision-tree strategy".into(),
            ))
        }
    };
    let best = best.ok_or(Error::NoNonBreakingLeaf)?;
    Ok(Solution::unverified(strategy, best.excluded_on_path.clone()))
}

/// Graphviz rendering; edge labels carry the 0/1 weights when `weights` is set.
pub fn export_tree_dot(tree: &DTreeNode, weights: bool) -> String {
    let mut out = String::from("digraph dtree {\n  node [shape=box];\n");
    let mut next = 0usize;
    write_dot(tree, weights, &mut next, &mut out);
    out.push_str("}\n");
    out
}

fn write_dot(node: &DTreeNode, weights: bool, next: &mut usize, out: &mut String) -> usize {
    let id = *next;
    *next += 1;
    match node {
        DTreeNode::Leaf {
            breaking,
            samples_pass,
            samples_fail,
        } => {
            let label = if *breaking { "breaking" } else { "non-breaking" };
            writeln!(
                out,
                "  n{id} [label=\"{label}\\npass={samples_pass} fail={samples_fail}\", shape=ellipse];"
            )
            .unwrap();
        }
        DTreeNode::Split { rule, left, right } => {
            writeln!(out, "  n{id} [label=\"{rule}\"];").unwrap();
            let l = write_dot(left, weights, next, out);
            let r = write_dot(right, weights, next, out);
            for (child, text, w) in [(l, "not applied", 1), (r, "applied", 0)] {
                if weights {
                    writeln!(out, "  n{id} -> n{child} [label=\"{text} ({w})\"];").unwrap();
                } else {
                    writeln!(out, "  n{id} -> n{child} [label=\"{text}\"];").unwrap();
                }
            }
        }
    }
    id
}
