//! Canonical enumeration of trees by order: subtrees are pooled per order and child
//! multisets are generated as non-decreasing sequences of pool indices.

use std::sync::Arc;

use super::{Branch, Component, LabeledTree, Node, Vertex};
use crate::lattice::{self, Mode};
use crate::model::Model;

/// Labels allowed on node lines.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LineAlphabet {
    /// Every node line is either α or β.
    Components,
    /// Node lines carry the full vector (mode-only shapes).
    Joint,
}

impl LineAlphabet {
    fn labels(self) -> &'static [Component] {
        match self {
            LineAlphabet::Components => &[Component::Alpha, Component::Beta],
            LineAlphabet::Joint => &[Component::Joint],
        }
    }
}

#[derive(Debug, Clone)]
struct PoolEntry {
    component: Component,
    vertex: Vertex,
}

/// Memoized enumerator of all trees over a fixed mode support.
#[derive(Debug, Clone)]
pub struct TreeEnumerator {
    rank: usize,
    support: Vec<Mode>,
    alphabet: LineAlphabet,
    with_leaves: bool,
    /// `pools[j]`: subtrees of order `j` hanging from a line, with nonzero momentum for nodes.
    pools: Vec<Vec<PoolEntry>>,
}

impl TreeEnumerator {
    pub fn new(model: &Model) -> Self {
        Self::with_support(model.r(), model.perturbation().support(), LineAlphabet::Components)
    }

    /// Mode-only trees with full-vector lines.
    pub fn shapes(model: &Model) -> Self {
        Self::with_support(model.r(), model.perturbation().support(), LineAlphabet::Joint)
    }

    pub fn with_support(rank: usize, support: Vec<Mode>, alphabet: LineAlphabet) -> Self {
        Self {
            rank,
            support,
            alphabet,
            with_leaves: true,
            pools: vec![Vec::new()],
        }
    }

    /// Drops counterterm leaves from the enumeration.
    pub fn without_leaves(mut self) -> Self {
        self.with_leaves = false;
        self.pools.truncate(1);
        self
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    fn ensure(&mut self, order: usize) {
        while self.pools.len() <= order {
            let j = self.pools.len();
            let mut pool = Vec::new();
            if self.with_leaves {
                pool.push(PoolEntry {
                    component: Component::Beta,
                    vertex: Vertex::Leaf(j),
                });
            }
            let mut nodes = Vec::new();
            self.for_each_node(j, |node| {
                if !lattice::is_zero(&node.momentum) {
                    nodes.push(Arc::new(node));
                }
            });
            for node in nodes {
                for &component in self.alphabet.labels() {
                    pool.push(PoolEntry {
                        component,
                        vertex: Vertex::Node(node.clone()),
                    });
                }
            }
            self.pools.push(pool);
        }
    }

    /// Calls `visit` for every node of total order `order` (pools below must exist).
    fn for_each_node(&self, order: usize, mut visit: impl FnMut(Node)) {
        let mut current = Vec::new();
        let mut multisets: Vec<Vec<(usize, usize)>> = Vec::new();
        self.multisets(order - 1, (1, 0), &mut current, &mut multisets);
        for mode in &self.support {
            for set in &multisets {
                let children = set
                    .iter()
                    .map(|&(j, i)| {
                        let e = &self.pools[j][i];
                        Branch {
                            component: e.component,
                            end: e.vertex.clone(),
                        }
                    })
                    .collect();
                visit(Node::new(mode.clone(), children));
            }
        }
    }

    fn multisets(
        &self,
        remaining: usize,
        start: (usize, usize),
        current: &mut Vec<(usize, usize)>,
        out: &mut Vec<Vec<(usize, usize)>>,
    ) {
        if remaining == 0 {
            out.push(current.clone());
            return;
        }
        for j in start.0..=remaining {
            let first = if j == start.0 { start.1 } else { 0 };
            for i in first..self.pools[j].len() {
                current.push((j, i));
                self.multisets(remaining - j, (j, i), current, out);
                current.pop();
            }
        }
    }

    /// Every tree of order `k` with each admissible root label.
    pub fn trees(&mut self, k: usize) -> Vec<LabeledTree> {
        assert!(k >= 1, "trees have order at least one");
        self.ensure(k - 1);
        let mut roots = Vec::new();
        self.for_each_node(k, |node| roots.push(Arc::new(node)));
        let mut out = Vec::with_capacity(roots.len() * self.alphabet.labels().len());
        for root in roots {
            for &root_component in self.alphabet.labels() {
                out.push(LabeledTree {
                    root_component,
                    root: root.clone(),
                });
            }
        }
        out
    }

    /// `Θ_{k,ν,γ}`
    pub fn trees_at(&mut self, k: usize, nu: &[i32], component: Component) -> Vec<LabeledTree> {
        self.trees(k)
            .into_iter()
            .filter(|t| t.root_component == component && t.root.momentum == nu)
            .collect()
    }

    /// Number of subtrees of order `j` in the pool.
    pub fn pool_size(&mut self, j: usize) -> usize {
        self.ensure(j);
        self.pools[j].len()
    }
}

/// `Θ_{k,ν,γ}` for the model's support.
pub fn enumerate_trees(model: &Model, k: usize, nu: &[i32], component: Component) -> Vec<LabeledTree> {
    TreeEnumerator::new(model).trees_at(k, nu, component)
}
