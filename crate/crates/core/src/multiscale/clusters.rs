//! Scale labels on lines, clusters, self-energy graphs, the Bryuno counting bound and
//! shift families.

use std::collections::{BTreeMap, BTreeSet};

use super::scales::{ScaleError, ScaleSequence};
use crate::lattice::{self, Mode};
use crate::model::Frequency;
use crate::trees::{Component, FlatTree, VertexKind};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GraphVertex {
    Node(Mode),
    Leaf,
    /// Stand-in for the rest of an ambient tree; its line may enter a graph.
    External,
}

/// Rooted graph with a scale on every line; the line of vertex `v` runs to `parent[v]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledGraph {
    pub parent: Vec<Option<usize>>,
    pub kind: Vec<GraphVertex>,
    /// `None` for leaf lines and zero-momentum root lines.
    pub scale: Vec<Option<i32>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Cluster {
    /// Sorted node indices.
    pub nodes: Vec<usize>,
    pub scale: i32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SelfEnergyGraph {
    pub nodes: Vec<usize>,
    /// Cluster scale; `None` for a single node.
    pub scale: Option<i32>,
    /// Node whose line exits the graph.
    pub exit: usize,
    /// Vertex whose line enters the graph.
    pub entering: usize,
    /// Node receiving the entering line.
    pub entry: usize,
    /// Scale of the external lines.
    pub external_scale: i32,
    /// Nodes left after removing zero-mode subclusters.
    pub reduced_nodes: Vec<usize>,
    pub height: usize,
}

impl ScaledGraph {
    fn node_mode(&self, v: usize) -> Option<&Mode> {
        match &self.kind[v] {
            GraphVertex::Node(m) => Some(m),
            _ => None,
        }
    }

    fn is_node(&self, v: usize) -> bool {
        matches!(self.kind[v], GraphVertex::Node(_))
    }

    /// Scale of the line joining `v` to its parent when both ends are nodes.
    fn internal_scale(&self, v: usize) -> Option<i32> {
        let p = self.parent[v]?;
        (self.is_node(v) && self.is_node(p)).then_some(self.scale[v]).flatten()
    }

    fn mode_sum(&self, nodes: &[usize], rank: usize) -> Mode {
        let mut sum = lattice::zero(rank);
        for &v in nodes {
            lattice::add_assign(&mut sum, self.node_mode(v).expect("node"));
        }
        sum
    }

    /// Maximal connected node sets whose internal lines all have scale at least the
    /// smallest one among them.
    pub fn clusters(&self) -> Vec<Cluster> {
        let thresholds: BTreeSet<i32> = (0..self.kind.len()).filter_map(|v| self.internal_scale(v)).collect();
        let mut out = Vec::new();
        for &h in &thresholds {
            let mut uf: Vec<usize> = (0..self.kind.len()).collect();
            fn find(uf: &mut [usize], x: usize) -> usize {
                let mut r = x;
                while uf[r] != r {
                    r = uf[r];
                }
                let mut y = x;
                while uf[y] != r {
                    let next = uf[y];
                    uf[y] = r;
                    y = next;
                }
                r
            }
            let mut has_line_at_h = vec![false; self.kind.len()];
            for (v, at_h) in has_line_at_h.iter_mut().enumerate() {
                if let Some(s) = self.internal_scale(v).filter(|&s| s >= h) {
                    let p = self.parent[v].expect("internal line");
                    let (a, b) = (find(&mut uf, v), find(&mut uf, p));
                    uf[a] = b;
                    if s == h {
                        *at_h = true;
                    }
                }
            }
            let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
            for v in (0..self.kind.len()).filter(|&v| self.is_node(v)) {
                groups.entry(find(&mut uf, v)).or_default().push(v);
            }
            for nodes in groups.into_values() {
                if nodes.len() >= 2 && nodes.iter().any(|&v| has_line_at_h[v]) {
                    out.push(Cluster { nodes, scale: h });
                }
            }
        }
        out
    }

    /// Clusters and zero-mode single nodes satisfying the self-energy conditions.
    pub fn self_energy_graphs(&self, rank: usize, tau: f64) -> Vec<SelfEnergyGraph> {
        let clusters = self.clusters();
        let mut candidates: Vec<(Vec<usize>, Option<i32>)> =
            clusters.iter().map(|c| (c.nodes.clone(), Some(c.scale))).collect();
        for v in 0..self.kind.len() {
            if self.node_mode(v).is_some_and(|m| lattice::is_zero(m)) {
                candidates.push((vec![v], None));
            }
        }
        let mut out = Vec::new();
        for (nodes, scale) in candidates {
            if let Some(seg) = self.check_self_energy(&nodes, scale, &clusters, rank, tau) {
                out.push(seg);
            }
        }
        out.sort_by_key(|s| s.nodes.len());
        for i in 0..out.len() {
            let inside = |outer: &SelfEnergyGraph, inner: &SelfEnergyGraph| {
                inner.nodes.len() < outer.nodes.len()
                    && inner.nodes.iter().all(|v| outer.nodes.binary_search(v).is_ok())
            };
            let height = (0..i)
                .filter(|&j| inside(&out[i], &out[j]))
                .map(|j| out[j].height + 1)
                .max()
                .unwrap_or(0);
            out[i].height = height;
        }
        out
    }

    fn check_self_energy(
        &self,
        nodes: &[usize],
        scale: Option<i32>,
        clusters: &[Cluster],
        rank: usize,
        tau: f64,
    ) -> Option<SelfEnergyGraph> {
        let member = |v: usize| nodes.binary_search(&v).is_ok();
        let mut exits = nodes.iter().filter(|&&v| self.parent[v].is_none_or(|p| !member(p)));
        let exit = *exits.next()?;
        let mut entering = (0..self.kind.len()).filter(|&w| !member(w) && self.parent[w].is_some_and(member));
        let w = entering.next()?;
        if entering.next().is_some() || matches!(self.kind[w], GraphVertex::Leaf) {
            return None;
        }
        if !lattice::is_zero(&self.mode_sum(nodes, rank)) {
            return None;
        }
        let n = self.scale[w]?;
        let exit_scale = self.scale[exit]?;
        assert_eq!(
            exit_scale, n,
            "external lines of a zero-mode graph share their momentum"
        );
        let removed: BTreeSet<usize> = clusters
            .iter()
            .filter(|c| c.nodes.len() < nodes.len() && c.nodes.iter().all(|&v| member(v)))
            .filter(|c| lattice::is_zero(&self.mode_sum(&c.nodes, rank)))
            .flat_map(|c| c.nodes.iter().copied())
            .collect();
        let reduced_nodes: Vec<usize> = nodes.iter().copied().filter(|v| !removed.contains(v)).collect();
        let mass: u32 = reduced_nodes
            .iter()
            .map(|&v| lattice::l1(self.node_mode(v).expect("node")))
            .sum();
        if f64::from(mass) > super::scales::mass_bound(n, tau) * (1.0 + 1e-12) {
            return None;
        }
        Some(SelfEnergyGraph {
            nodes: nodes.to_vec(),
            scale,
            exit,
            entering: w,
            entry: self.parent[w].expect("entering line"),
            external_scale: n,
            reduced_nodes,
            height: 0,
        })
    }
}

/// Tree with scale labels, clusters and self-energy graphs.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaledTree {
    pub tree: FlatTree,
    pub graph: ScaledGraph,
    pub clusters: Vec<Cluster>,
    pub self_energy: Vec<SelfEnergyGraph>,
}

pub fn assign_scales(tree: &FlatTree, freq: &Frequency, seq: &ScaleSequence) -> Result<ScaledTree, ScaleError> {
    let n = tree.vertices.len();
    let mut parent = vec![None; n];
    let mut kind = Vec::with_capacity(n);
    let mut scale = vec![None; n];
    for (i, v) in tree.vertices.iter().enumerate() {
        parent[i] = v.parent;
        match &v.kind {
            VertexKind::Node(m) => {
                kind.push(GraphVertex::Node(m.clone()));
                if !lattice::is_zero(&v.momentum) {
                    scale[i] = Some(seq.scale_of_mode(freq, &v.momentum)?);
                }
            }
            VertexKind::Leaf(_) => kind.push(GraphVertex::Leaf),
        }
    }
    let graph = ScaledGraph { parent, kind, scale };
    let clusters = graph.clusters();
    let self_energy = graph.self_energy_graphs(freq.rank(), seq.tau());
    Ok(ScaledTree {
        tree: tree.clone(),
        graph,
        clusters,
        self_energy,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BryunoRow {
    pub n: i32,
    /// `N_n`: lines on scale `n`.
    pub lines: usize,
    /// `R_n`: self-energy lines on scale `n`.
    pub self_energy_lines: usize,
    /// `max{0, 2 M 2^{(n+3)/τ} - 1}`
    pub bound: f64,
}

impl BryunoRow {
    /// `N*_n = N_n - R_n`
    pub fn normal_lines(&self) -> usize {
        self.lines - self.self_energy_lines
    }

    pub fn holds(&self) -> bool {
        self.normal_lines() as f64 <= self.bound
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BryunoReport {
    /// `M(θ) = Σ_v |ν_v|`
    pub mass: u32,
    pub rows: Vec<BryunoRow>,
}

impl BryunoReport {
    pub fn holds(&self) -> bool {
        self.rows.iter().all(BryunoRow::holds)
    }
}

/// Counts normal lines per scale `n ≤ 0` against the mode mass of the tree.
pub fn bryuno_check(scaled: &ScaledTree, tau: f64) -> BryunoReport {
    let g = &scaled.graph;
    let mass: u32 = (0..g.kind.len())
        .filter_map(|v| g.node_mode(v))
        .map(|m| lattice::l1(m))
        .sum();
    let self_energy_lines: BTreeSet<usize> = scaled.self_energy.iter().map(|s| s.exit).collect();
    let scales: Vec<i32> = g.scale.iter().flatten().copied().collect();
    let lowest = scales.iter().copied().min().unwrap_or(0).min(0);
    let rows = (lowest..=0)
        .map(|n| {
            let on_scale = || (0..g.kind.len()).filter(move |&v| g.is_node(v) && g.scale[v] == Some(n));
            BryunoRow {
                n,
                lines: on_scale().count(),
                self_energy_lines: on_scale().filter(|v| self_energy_lines.contains(v)).count(),
                bound: (2.0 * f64::from(mass) * ((f64::from(n) + 3.0) / tau).exp2() - 1.0).max(0.0),
            }
        })
        .collect();
    BryunoReport { mass, rows }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftFamily {
    pub members: Vec<ScaledTree>,
    /// `(exit node, entry node)` of the graph in each member.
    pub attachments: Vec<(usize, usize)>,
    /// Every line keeps its scale label across the family.
    pub scales_preserved: bool,
}

/// All reattachments of the external lines of `scaled.self_energy[index]` to its reduced nodes.
pub fn shift_family(
    scaled: &ScaledTree,
    index: usize,
    freq: &Frequency,
    seq: &ScaleSequence,
) -> Result<ShiftFamily, ScaleError> {
    let seg = &scaled.self_energy[index];
    let tree = &scaled.tree;
    let member = |v: usize| seg.nodes.binary_search(&v).is_ok();
    let edge = |a: usize, b: usize| (a.min(b), a.max(b));
    let mut labels: BTreeMap<(usize, usize), Component> = BTreeMap::new();
    let mut adjacency: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for &v in &seg.nodes {
        if let Some(p) = tree.vertices[v].parent.filter(|&p| member(p)) {
            labels.insert(edge(v, p), tree.vertices[v].component);
            adjacency.entry(v).or_default().push(p);
            adjacency.entry(p).or_default().push(v);
        }
    }
    let original_scales = line_scales(scaled, seg.exit, &labels);
    let mut members = Vec::new();
    let mut attachments = Vec::new();
    let mut preserved = true;
    for &exit in &seg.reduced_nodes {
        for &entry in &seg.reduced_nodes {
            let mut t = tree.clone();
            let mut stack = vec![exit];
            let mut seen = BTreeSet::from([exit]);
            while let Some(x) = stack.pop() {
                for &u in adjacency.get(&x).into_iter().flatten() {
                    if seen.insert(u) {
                        t.vertices[u].parent = Some(x);
                        t.vertices[u].component = labels[&edge(x, u)];
                        stack.push(u);
                    }
                }
            }
            t.vertices[exit].parent = tree.vertices[seg.exit].parent;
            t.vertices[exit].component = tree.vertices[seg.exit].component;
            if tree.root == seg.exit {
                t.root = exit;
            }
            t.vertices[seg.entering].parent = Some(entry);
            t.recompute_momenta(freq.rank());
            let shifted = assign_scales(&t, freq, seq)?;
            preserved &= line_scales(&shifted, exit, &labels) == original_scales;
            members.push(shifted);
            attachments.push((exit, entry));
        }
    }
    Ok(ShiftFamily {
        members,
        attachments,
        scales_preserved: preserved,
    })
}

/// Scales keyed by line identity: outside lines by vertex, internal lines by edge,
/// the exiting line under a fixed key.
fn line_scales(
    scaled: &ScaledTree,
    exit: usize,
    internal: &BTreeMap<(usize, usize), Component>,
) -> BTreeMap<(usize, usize), Option<i32>> {
    let g = &scaled.graph;
    let mut out = BTreeMap::new();
    for v in 0..g.kind.len() {
        let key = match g.parent[v] {
            _ if v == exit => (usize::MAX, usize::MAX),
            Some(p) if internal.contains_key(&(v.min(p), v.max(p))) => (v.min(p), v.max(p)),
            _ => (v, usize::MAX - 1),
        };
        out.insert(key, g.scale[v]);
    }
    out
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::model::Model;
    use crate::multiscale::scales::build_scale_sequence;
    use crate::trees::{Branch, LabeledTree, Node, TreeEnumerator, Vertex};

    fn chain(modes: &[Mode], components: &[Component]) -> LabeledTree {
        // modes[0] is the root; each next node hangs below the previous one
        let mut below: Option<(Component, Arc<Node>)> = None;
        for (i, mode) in modes.iter().enumerate().rev() {
            let children = below
                .take()
                .map(|(c, n)| {
                    vec![Branch {
                        component: c,
                        end: Vertex::Node(n),
                    }]
                })
                .unwrap_or_default();
            below = Some((components[i], Arc::new(Node::new(mode.clone(), children))));
        }
        let (root_component, root) = below.unwrap();
        LabeledTree { root_component, root }
    }

    fn reference() -> (Model, ScaleSequence) {
        let m = Model::ref1();
        let seq = build_scale_sequence(m.frequency(), -6).unwrap();
        (m, seq)
    }

    #[test]
    fn single_node_has_top_scale() {
        let (m, seq) = reference();
        let t = chain(&[vec![1, 0]], &[Component::Alpha]).to_flat();
        let s = assign_scales(&t, m.frequency(), &seq).unwrap();
        assert_eq!(s.graph.scale, vec![Some(1)]);
        assert!(s.clusters.is_empty() && s.self_energy.is_empty());
    }

    #[test]
    fn zero_mode_node_between_equal_momenta_is_self_energy() {
        let (m, seq) = reference();
        let t = chain(
            &[vec![1, 0], vec![0, 0], vec![1, 1]],
            &[Component::Alpha, Component::Beta, Component::Beta],
        )
        .to_flat();
        let s = assign_scales(&t, m.frequency(), &seq).unwrap();
        assert_eq!(s.self_energy.len(), 1);
        let seg = &s.self_energy[0];
        assert_eq!((seg.nodes.clone(), seg.exit, seg.entering), (vec![1], 1, 2));
        assert_eq!(shift_family(&s, 0, m.frequency(), &seq).unwrap().members.len(), 1);
        // a second entering line breaks the pattern
        let t2 = LabeledTree {
            root_component: Component::Alpha,
            root: Arc::new(Node::new(
                vec![0, 0],
                vec![
                    Branch {
                        component: Component::Beta,
                        end: Vertex::Node(Arc::new(Node::new(vec![1, 0], vec![]))),
                    },
                    Branch {
                        component: Component::Beta,
                        end: Vertex::Leaf(1),
                    },
                ],
            )),
        };
        let s2 = assign_scales(&t2.to_flat(), m.frequency(), &seq).unwrap();
        assert!(s2.self_energy.is_empty());
    }

    /// Chain A(1,0) ← B(-1,0) ← C(34,-55): the pair {A, B} carries the momentum
    /// (34,-55) of small divisor in and out.
    fn small_divisor_fixture() -> (Model, ScaleSequence, ScaledTree) {
        let (m, seq) = reference();
        let t = chain(
            &[vec![1, 0], vec![-1, 0], vec![34, -55]],
            &[Component::Alpha, Component::Beta, Component::Alpha],
        )
        .to_flat();
        let s = assign_scales(&t, m.frequency(), &seq).unwrap();
        (m, seq, s)
    }

    #[test]
    fn two_node_self_energy_graph() {
        let (_, seq, s) = small_divisor_fixture();
        let n = s.graph.scale[2].unwrap();
        assert!(n <= -4, "{n}");
        assert_eq!(s.graph.scale[0], Some(n));
        assert_eq!(s.graph.scale[1], Some(1));
        assert_eq!(
            s.clusters,
            vec![
                Cluster {
                    nodes: vec![0, 1, 2],
                    scale: n
                },
                Cluster {
                    nodes: vec![0, 1],
                    scale: 1
                }
            ]
        );
        assert_eq!(s.self_energy.len(), 1);
        let seg = &s.self_energy[0];
        assert_eq!((seg.exit, seg.entry, seg.entering, seg.external_scale), (0, 1, 2, n));
        assert_eq!(seg.reduced_nodes, vec![0, 1]);
        assert!(2.0 <= seq.mass_bound(n));
        let report = bryuno_check(&s, 1.0);
        assert_eq!(report.mass, 91);
        let row = report.rows.iter().find(|r| r.n == n).unwrap();
        assert_eq!((row.lines, row.self_energy_lines, row.normal_lines()), (2, 1, 1));
        assert!(report.holds());
    }

    #[test]
    fn shift_family_of_fixture() {
        let (m, seq, s) = small_divisor_fixture();
        let fam = shift_family(&s, 0, m.frequency(), &seq).unwrap();
        assert_eq!(fam.members.len(), 4);
        assert!(fam.scales_preserved);
        // hand-computed internal momenta: ±ν⁰ + σ ν with ν = (34,-55)
        let expected: BTreeMap<(usize, usize), (usize, Mode)> = [
            ((0, 1), (1, vec![33, -55])),
            ((0, 0), (1, vec![-1, 0])),
            ((1, 0), (0, vec![35, -55])),
            ((1, 1), (0, vec![1, 0])),
        ]
        .into_iter()
        .collect();
        for (member, att) in fam.members.iter().zip(&fam.attachments) {
            let (inner, momentum) = &expected[att];
            assert_eq!(&member.tree.vertices[*inner].momentum, momentum, "{att:?}");
            assert_eq!(member.tree.vertices[att.0].momentum, vec![34, -55]);
            assert_eq!(member.self_energy.len(), 1);
        }
    }

    #[test]
    fn reference_trees_obey_bryuno_bound() {
        let (m, seq) = reference();
        let mut e = TreeEnumerator::new(&m);
        for k in 1..=4 {
            for t in e.trees(k) {
                let s = assign_scales(&t.to_flat(), m.frequency(), &seq).unwrap();
                assert!(bryuno_check(&s, 1.0).holds());
                for seg in &s.self_energy {
                    assert_eq!(seg.nodes.len(), 1);
                }
            }
        }
    }
}
