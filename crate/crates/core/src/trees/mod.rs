//! Labeled rooted trees whose values reproduce the Lindstedt coefficients.
//!
//! Every line carries a component label (α or β); node lines carry the momentum of the
//! subtree below them, leaves are β lines carrying a zero-mode counterterm.

mod enumerate;
mod families;
mod value;

use std::fmt::Write as _;
use std::sync::Arc;

use crate::lattice::{self, Mode};

pub use enumerate::{enumerate_trees, LineAlphabet, TreeEnumerator};
pub(crate) use families::min_rooted_code;
pub use families::{unrooted_key, verify_zero_momentum_cancellation, CancellationReport, FamilySum};
pub(crate) use value::{is_excluded_counterterm_tree, multiplicity};
pub use value::{leaf_factor, sum_tree_values, tree_value, Leaves, TreeEvaluator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Component {
    Alpha,
    Beta,
    /// Unlabeled line carrying the full (α, β) vector.
    Joint,
}

impl Component {
    pub fn tag(self) -> char {
        match self {
            Component::Alpha => 'a',
            Component::Beta => 'b',
            Component::Joint => 'j',
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Vertex {
    Node(Arc<Node>),
    /// Zero-mode counterterm `b^{(order)}_0`.
    Leaf(usize),
}

impl Vertex {
    pub fn order(&self) -> usize {
        match self {
            Vertex::Node(n) => n.order,
            Vertex::Leaf(k) => *k,
        }
    }

    pub fn code(&self) -> String {
        let mut out = String::new();
        self.write_code(&mut out);
        out
    }

    fn write_code(&self, out: &mut String) {
        match self {
            Vertex::Node(n) => n.write_code(out),
            Vertex::Leaf(k) => {
                let _ = write!(out, "L{k}");
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Branch {
    pub component: Component,
    pub end: Vertex,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Node {
    pub mode: Mode,
    /// Children in canonical order: identical branches are adjacent.
    pub children: Vec<Branch>,
    /// Number of nodes plus the orders of the leaves below.
    pub order: usize,
    /// Sum of the node modes in the subtree.
    pub momentum: Mode,
}

impl Node {
    pub fn new(mode: Mode, children: Vec<Branch>) -> Self {
        let mut momentum = mode.clone();
        let mut order = 1;
        for b in &children {
            order += b.end.order();
            if let Vertex::Node(n) = &b.end {
                lattice::add_assign(&mut momentum, &n.momentum);
            }
        }
        Self {
            mode,
            children,
            order,
            momentum,
        }
    }

    pub fn node_count(&self) -> usize {
        1 + self
            .children
            .iter()
            .map(|b| match &b.end {
                Vertex::Node(n) => n.node_count(),
                Vertex::Leaf(_) => 0,
            })
            .sum::<usize>()
    }

    fn write_code(&self, out: &mut String) {
        let _ = write!(out, "N{:?}(", self.mode);
        let mut codes: Vec<String> = self
            .children
            .iter()
            .map(|b| {
                let mut code = String::new();
                code.push(b.component.tag());
                b.end.write_code(&mut code);
                code
            })
            .collect();
        codes.sort();
        for code in codes {
            out.push_str(&code);
            out.push(',');
        }
        out.push(')');
    }
}

/// Rooted tree with its root line label `γ`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledTree {
    pub root_component: Component,
    pub root: Arc<Node>,
}

impl LabeledTree {
    pub fn order(&self) -> usize {
        self.root.order
    }

    pub fn momentum(&self) -> &Mode {
        &self.root.momentum
    }

    pub fn node_count(&self) -> usize {
        self.root.node_count()
    }

    /// Canonical string; equal codes mean topologically equivalent trees.
    pub fn code(&self) -> String {
        let mut out = String::new();
        out.push(self.root_component.tag());
        self.root.write_code(&mut out);
        out
    }

    /// Indented listing, one line per vertex: exiting label, then mode, momentum and order
    /// for nodes or the counterterm order for leaves.
    pub fn dump(&self) -> String {
        let mut out = String::new();
        dump_vertex(&Vertex::Node(self.root.clone()), self.root_component, 0, &mut out);
        out
    }

    pub fn to_flat(&self) -> FlatTree {
        let mut vertices = Vec::new();
        flatten(
            &Vertex::Node(self.root.clone()),
            None,
            self.root_component,
            &mut vertices,
        );
        FlatTree { vertices, root: 0 }
    }
}

fn dump_vertex(v: &Vertex, component: Component, depth: usize, out: &mut String) {
    let indent = "  ".repeat(depth);
    match v {
        Vertex::Leaf(k) => {
            let _ = writeln!(out, "{indent}{} leaf order={k}", component.tag());
        }
        Vertex::Node(n) => {
            let _ = writeln!(
                out,
                "{indent}{} node mode={:?} momentum={:?} order={}",
                component.tag(),
                n.mode,
                n.momentum,
                n.order
            );
            for b in &n.children {
                dump_vertex(&b.end, b.component, depth + 1, out);
            }
        }
    }
}

fn flatten(v: &Vertex, parent: Option<usize>, component: Component, out: &mut Vec<FlatVertex>) {
    let index = out.len();
    match v {
        Vertex::Leaf(k) => out.push(FlatVertex {
            parent,
            kind: VertexKind::Leaf(*k),
            component,
            momentum: Vec::new(),
        }),
        Vertex::Node(n) => {
            out.push(FlatVertex {
                parent,
                kind: VertexKind::Node(n.mode.clone()),
                component,
                momentum: n.momentum.clone(),
            });
            for b in &n.children {
                flatten(&b.end, Some(index), b.component, out);
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum VertexKind {
    Node(Mode),
    Leaf(usize),
}

/// Vertex of a [`FlatTree`]; the line exiting the vertex is identified with it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlatVertex {
    pub parent: Option<usize>,
    pub kind: VertexKind,
    /// Label of the exiting line.
    pub component: Component,
    /// Momentum of the exiting line (empty for leaves).
    pub momentum: Mode,
}

/// Index-based view of a tree; the line of vertex `root` is the root line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlatTree {
    pub vertices: Vec<FlatVertex>,
    pub root: usize,
}

impl FlatTree {
    pub fn children(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.vertices
            .iter()
            .enumerate()
            .filter(move |(_, w)| w.parent == Some(v))
            .map(|(i, _)| i)
    }

    pub fn mode(&self, v: usize) -> Option<&Mode> {
        match &self.vertices[v].kind {
            VertexKind::Node(m) => Some(m),
            VertexKind::Leaf(_) => None,
        }
    }

    pub fn is_leaf(&self, v: usize) -> bool {
        matches!(self.vertices[v].kind, VertexKind::Leaf(_))
    }

    /// Recomputes line momenta from the parent links.
    pub fn recompute_momenta(&mut self, rank: usize) {
        for v in &mut self.vertices {
            v.momentum = match &v.kind {
                VertexKind::Node(m) => m.clone(),
                VertexKind::Leaf(_) => Vec::new(),
            };
        }
        for v in self.postorder() {
            if let (Some(p), VertexKind::Node(_)) = (self.vertices[v].parent, &self.vertices[v].kind) {
                let m = self.vertices[v].momentum.clone();
                debug_assert_eq!(m.len(), rank);
                lattice::add_assign(&mut self.vertices[p].momentum, &m);
            }
        }
    }

    /// Vertices with every child listed before its parent.
    pub fn postorder(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.vertices.len());
        let mut stack = vec![(self.root, false)];
        while let Some((v, expanded)) = stack.pop() {
            if expanded {
                out.push(v);
            } else {
                stack.push((v, true));
                for c in self.children(v) {
                    stack.push((c, false));
                }
            }
        }
        out
    }

    /// Rebuilds the canonical rooted tree.
    pub fn to_labeled(&self) -> LabeledTree {
        let root = match self.build(self.root) {
            Vertex::Node(n) => n,
            Vertex::Leaf(_) => panic!("root of a flat tree must be a node"),
        };
        LabeledTree {
            root_component: self.vertices[self.root].component,
            root,
        }
    }

    fn build(&self, v: usize) -> Vertex {
        match &self.vertices[v].kind {
            VertexKind::Leaf(k) => Vertex::Leaf(*k),
            VertexKind::Node(mode) => {
                let mut children: Vec<(String, Branch)> = self
                    .children(v)
                    .map(|c| {
                        let branch = Branch {
                            component: self.vertices[c].component,
                            end: self.build(c),
                        };
                        let mut code = String::new();
                        code.push(branch.component.tag());
                        code.push_str(&branch.end.code());
                        (code, branch)
                    })
                    .collect();
                children.sort_by(|a, b| a.0.cmp(&b.0));
                Vertex::Node(Arc::new(Node::new(
                    mode.clone(),
                    children.into_iter().map(|(_, b)| b).collect(),
                )))
            }
        }
    }
}
