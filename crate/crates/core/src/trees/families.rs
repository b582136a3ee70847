//! Zero-momentum cancellation: trees that differ only by where the root line is
//! attached form a family whose values sum to zero.

use std::collections::BTreeMap;

use num_complex::Complex64;

use super::value::TreeEvaluator;
use super::{Component, FlatTree, Leaves, TreeEnumerator, VertexKind};
use crate::lattice;
use crate::model::Model;
use crate::real::{self, Real};

/// Minimum over `candidates` of the rooted canonical code of an undirected labeled tree.
pub(crate) fn min_rooted_code(
    labels: &[String],
    adjacency: &[Vec<(usize, char)>],
    candidates: impl IntoIterator<Item = usize>,
) -> String {
    fn code(x: usize, from: Option<usize>, labels: &[String], adjacency: &[Vec<(usize, char)>]) -> String {
        let mut parts: Vec<String> = adjacency[x]
            .iter()
            .filter(|(y, _)| Some(*y) != from)
            .map(|&(y, tag)| format!("{tag}{}", code(y, Some(x), labels, adjacency)))
            .collect();
        parts.sort();
        format!("{}({})", labels[x], parts.join(","))
    }
    candidates
        .into_iter()
        .map(|v| code(v, None, labels, adjacency))
        .min()
        .unwrap_or_default()
}

/// Canonical key of the tree with its root line detached, minimized over node re-rootings.
pub fn unrooted_key(tree: &FlatTree) -> String {
    let n = tree.vertices.len();
    let mut adjacency = vec![Vec::new(); n];
    for (i, v) in tree.vertices.iter().enumerate() {
        if let Some(p) = v.parent {
            adjacency[i].push((p, v.component.tag()));
            adjacency[p].push((i, v.component.tag()));
        }
    }
    let labels: Vec<String> = tree
        .vertices
        .iter()
        .map(|v| match &v.kind {
            VertexKind::Node(m) => format!("N{m:?}"),
            VertexKind::Leaf(k) => format!("L{k}"),
        })
        .collect();
    let nodes = (0..n).filter(|&v| !tree.is_leaf(v));
    let mut key = String::new();
    key.push(tree.vertices[tree.root].component.tag());
    key.push_str(&min_rooted_code(&labels, &adjacency, nodes));
    key
}

#[derive(Debug, Clone, PartialEq)]
pub struct FamilySum {
    pub key: String,
    pub members: usize,
    pub sum: Vec<Complex64>,
    pub max_summand: f64,
}

impl FamilySum {
    pub fn relative(&self) -> f64 {
        relative(&self.sum, self.max_summand)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CancellationReport {
    pub order: usize,
    pub tree_count: usize,
    pub global_sum: Vec<Complex64>,
    pub max_summand: f64,
    pub families: Vec<FamilySum>,
}

impl CancellationReport {
    /// `|Σ Val'| / max |Val'|` over all of `Θ_{k,0,α}`.
    pub fn global_relative(&self) -> f64 {
        relative(&self.global_sum, self.max_summand)
    }

    pub fn worst_family_relative(&self) -> f64 {
        self.families.iter().map(FamilySum::relative).fold(0.0, f64::max)
    }
}

fn sup(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

fn relative(sum: &[Complex64], scale: f64) -> f64 {
    if scale == 0.0 {
        0.0
    } else {
        sup(sum) / scale
    }
}

/// Sums `Val'` over `Θ_{k,0,α}`, globally and per root-shift family.
pub fn verify_zero_momentum_cancellation<R: Real>(
    model: &Model,
    k: usize,
    leaves: &Leaves<R>,
    enumerator: &mut TreeEnumerator,
) -> CancellationReport {
    let nums = model.numbers::<R>();
    let mut eval = TreeEvaluator::new(&nums, leaves);
    let zero = lattice::zero(model.r());
    let trees = enumerator.trees_at(k, &zero, Component::Alpha);
    let mut families: BTreeMap<String, (usize, Vec<real::C<R>>, f64)> = BTreeMap::new();
    let mut global = vec![real::czero::<R>(); model.r()];
    let mut max_summand = 0.0f64;
    for tree in &trees {
        let value = eval.value(tree, false);
        let size = value.iter().map(|z| real::cabs(*z).to_f64_lossy()).fold(0.0, f64::max);
        max_summand = max_summand.max(size);
        let entry = families
            .entry(unrooted_key(&tree.to_flat()))
            .or_insert_with(|| (0, vec![real::czero(); model.r()], 0.0));
        entry.0 += 1;
        entry.2 = entry.2.max(size);
        for ((f, g), v) in entry.1.iter_mut().zip(global.iter_mut()).zip(&value) {
            *f = *f + *v;
            *g = *g + *v;
        }
    }
    CancellationReport {
        order: k,
        tree_count: trees.len(),
        global_sum: global.into_iter().map(real::to_c64).collect(),
        max_summand,
        families: families
            .into_iter()
            .map(|(key, (members, sum, max_summand))| FamilySum {
                key,
                members,
                sum: sum.into_iter().map(real::to_c64).collect(),
                max_summand,
            })
            .collect(),
    }
}
