//! Catalog of self-energy skeletons: zero-mode node graphs with one entering and one
//! exiting line, enumerated up to a node budget and tagged with the external scales at
//! which they qualify.

use std::collections::{BTreeMap, BTreeSet};

use super::clusters::{GraphVertex, ScaledGraph};
use super::scales::ScaleSequence;
use crate::lattice::{self, Mode};
use crate::model::Model;
use crate::trees::min_rooted_code;

/// Node graph with its external attachments; node 0 carries the exiting line.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    pub modes: Vec<Mode>,
    pub parent: Vec<Option<usize>>,
    /// Node receiving the entering line.
    pub entry: usize,
    /// `1/|Aut|` of the graph with its attachments.
    pub weight: f64,
    /// `ν⁰` of each node's exiting line (zero for node 0).
    pub reduced: Vec<Mode>,
    /// `σ`: the entering line sits below the node.
    pub carries: Vec<bool>,
    pub code: String,
    /// Key shared by all reattachments of the external lines.
    pub family: String,
    /// External scales at which the graph is a self-energy graph.
    pub windows: Vec<i32>,
    /// External scales at which it is one and contains no other.
    pub renormalized_windows: Vec<i32>,
}

impl Skeleton {
    pub fn node_count(&self) -> usize {
        self.modes.len()
    }

    pub fn mass(&self) -> u32 {
        self.modes.iter().map(|m| lattice::l1(m)).sum()
    }

    pub fn admissible(&self, window: i32, renormalized: bool) -> bool {
        let list = if renormalized {
            &self.renormalized_windows
        } else {
            &self.windows
        };
        list.contains(&window)
    }

    /// Node indices with children before parents.
    pub fn postorder(&self) -> Vec<usize> {
        let depth = |mut v: usize| {
            let mut d = 0;
            while let Some(p) = self.parent[v] {
                v = p;
                d += 1;
            }
            d
        };
        let mut order: Vec<usize> = (0..self.modes.len()).collect();
        order.sort_by_key(|&v| std::cmp::Reverse(depth(v)));
        order
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SelfEnergyCatalog {
    pub skeletons: Vec<Skeleton>,
    pub v_max: usize,
    pub n_min: i32,
}

impl SelfEnergyCatalog {
    pub fn admissible(&self, window: i32, renormalized: bool) -> impl Iterator<Item = (usize, &Skeleton)> + '_ {
        self.skeletons
            .iter()
            .enumerate()
            .filter(move |(_, s)| s.admissible(window, renormalized))
    }

    /// Skeleton indices grouped by family key.
    pub fn families(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut out: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, s) in self.skeletons.iter().enumerate() {
            out.entry(s.family.as_str()).or_default().push(i);
        }
        out
    }
}

/// All labeled trees on `n` vertices as edge lists, via Prüfer sequences.
fn labeled_trees(n: usize) -> Vec<Vec<(usize, usize)>> {
    match n {
        0 => Vec::new(),
        1 => vec![Vec::new()],
        2 => vec![vec![(0, 1)]],
        _ => {
            let mut out = Vec::new();
            let mut seq = vec![0usize; n - 2];
            loop {
                out.push(decode_prufer(&seq, n));
                let mut i = 0;
                while i < seq.len() {
                    seq[i] += 1;
                    if seq[i] < n {
                        break;
                    }
                    seq[i] = 0;
                    i += 1;
                }
                if i == seq.len() {
                    return out;
                }
            }
        }
    }
}

fn decode_prufer(seq: &[usize], n: usize) -> Vec<(usize, usize)> {
    let mut degree = vec![1usize; n];
    for &x in seq {
        degree[x] += 1;
    }
    let mut edges = Vec::with_capacity(n - 1);
    for &x in seq {
        let leaf = (0..n).find(|&v| degree[v] == 1).expect("a leaf exists");
        edges.push((leaf, x));
        degree[leaf] -= 1;
        degree[x] -= 1;
    }
    let rest: Vec<usize> = (0..n).filter(|&v| degree[v] == 1).collect();
    edges.push((rest[0], rest[1]));
    edges
}

/// Mode assignments from `support` summing to zero.
fn zero_sum_assignments(support: &[Mode], n: usize, rank: usize) -> Vec<Vec<Mode>> {
    let members: BTreeSet<&Mode> = support.iter().collect();
    let mut out = Vec::new();
    let mut current: Vec<Mode> = Vec::with_capacity(n);
    fn fill(
        support: &[Mode],
        members: &BTreeSet<&Mode>,
        n: usize,
        rank: usize,
        current: &mut Vec<Mode>,
        out: &mut Vec<Vec<Mode>>,
    ) {
        if current.len() + 1 == n {
            let mut sum = lattice::zero(rank);
            for m in current.iter() {
                lattice::add_assign(&mut sum, m);
            }
            let last = lattice::neg(&sum);
            if members.contains(&last) {
                current.push(last);
                out.push(current.clone());
                current.pop();
            }
            return;
        }
        for m in support {
            current.push(m.clone());
            fill(support, members, n, rank, current, out);
            current.pop();
        }
    }
    fill(support, &members, n, rank, &mut current, &mut out);
    out
}

struct Rooted {
    children: Vec<Vec<usize>>,
    parent: Vec<Option<usize>>,
}

fn root_at(n: usize, edges: &[(usize, usize)], root: usize) -> Rooted {
    let mut adjacency = vec![Vec::new(); n];
    for &(a, b) in edges {
        adjacency[a].push(b);
        adjacency[b].push(a);
    }
    let mut parent = vec![None; n];
    let mut children = vec![Vec::new(); n];
    let mut stack = vec![root];
    let mut seen = vec![false; n];
    seen[root] = true;
    while let Some(x) = stack.pop() {
        for &y in &adjacency[x] {
            if !seen[y] {
                seen[y] = true;
                parent[y] = Some(x);
                children[x].push(y);
                stack.push(y);
            }
        }
    }
    Rooted { children, parent }
}

fn rooted_code(v: usize, rooted: &Rooted, modes: &[Mode], entry: usize) -> String {
    let mut parts: Vec<String> = rooted.children[v]
        .iter()
        .map(|&c| rooted_code(c, rooted, modes, entry))
        .collect();
    parts.sort();
    let marker = if v == entry { "*" } else { "" };
    format!("N{:?}{marker}({})", modes[v], parts.join(","))
}

fn subtree_sums(v: usize, rooted: &Rooted, modes: &[Mode], entry: usize, out: &mut [(Mode, bool)]) {
    let mut sum = modes[v].clone();
    let mut carries = v == entry;
    for &c in &rooted.children[v] {
        subtree_sums(c, rooted, modes, entry, out);
        lattice::add_assign(&mut sum, &out[c].0);
        carries |= out[c].1;
    }
    out[v] = (sum, carries);
}

struct Representative {
    count: usize,
    edges: Vec<(usize, usize)>,
    modes: Vec<Mode>,
    exit: usize,
    entry: usize,
}

/// Enumerates every skeleton with at most `v_max` nodes over the model's support.
pub fn build_catalog(model: &Model, seq: &ScaleSequence, v_max: usize) -> SelfEnergyCatalog {
    assert!(v_max >= 1, "the node budget must be positive");
    let rank = model.r();
    let support = model.perturbation().support();
    let mut skeletons = Vec::new();
    for n in 1..=v_max {
        let mut classes: BTreeMap<String, Representative> = BTreeMap::new();
        let trees = labeled_trees(n);
        for modes in zero_sum_assignments(&support, n, rank) {
            for edges in &trees {
                for exit in 0..n {
                    let rooted = root_at(n, edges, exit);
                    for entry in 0..n {
                        let mut sums = vec![(Vec::new(), false); n];
                        subtree_sums(exit, &rooted, &modes, entry, &mut sums);
                        // an internal line without reduced momentum has no bare propagator
                        if (0..n).any(|v| v != exit && lattice::is_zero(&sums[v].0)) {
                            continue;
                        }
                        let code = rooted_code(exit, &rooted, &modes, entry);
                        classes
                            .entry(code)
                            .or_insert_with(|| Representative {
                                count: 0,
                                edges: edges.clone(),
                                modes: modes.clone(),
                                exit,
                                entry,
                            })
                            .count += 1;
                    }
                }
            }
        }
        let labelings: f64 = (1..=n).map(|i| i as f64).product();
        for (code, rep) in classes {
            skeletons.push(canonical_skeleton(model, seq, &rep, code, rep.count as f64 / labelings));
        }
    }
    SelfEnergyCatalog {
        skeletons,
        v_max,
        n_min: seq.n_min(),
    }
}

fn canonical_skeleton(model: &Model, seq: &ScaleSequence, rep: &Representative, code: String, weight: f64) -> Skeleton {
    let n = rep.modes.len();
    let rooted = root_at(n, &rep.edges, rep.exit);
    // preorder with children sorted by code fixes the vertex numbering
    let mut order = Vec::with_capacity(n);
    let mut stack = vec![rep.exit];
    while let Some(v) = stack.pop() {
        order.push(v);
        let mut kids: Vec<(String, usize)> = rooted.children[v]
            .iter()
            .map(|&c| (rooted_code(c, &rooted, &rep.modes, rep.entry), c))
            .collect();
        kids.sort();
        stack.extend(kids.into_iter().rev().map(|(_, c)| c));
    }
    let mut index = vec![0; n];
    for (i, &v) in order.iter().enumerate() {
        index[v] = i;
    }
    let mut sums = vec![(Vec::new(), false); n];
    subtree_sums(rep.exit, &rooted, &rep.modes, rep.entry, &mut sums);
    let modes: Vec<Mode> = order.iter().map(|&v| rep.modes[v].clone()).collect();
    let parent: Vec<Option<usize>> = order.iter().map(|&v| rooted.parent[v].map(|p| index[p])).collect();
    let mut reduced: Vec<Mode> = order.iter().map(|&v| sums[v].0.clone()).collect();
    reduced[0] = lattice::zero(model.r());
    let carries: Vec<bool> = order.iter().map(|&v| sums[v].1).collect();
    let entry = index[rep.entry];

    let labels: Vec<String> = modes.iter().map(|m| format!("N{m:?}")).collect();
    let mut adjacency = vec![Vec::new(); n];
    for (v, p) in parent.iter().enumerate() {
        if let Some(p) = *p {
            adjacency[v].push((p, 'j'));
            adjacency[p].push((v, 'j'));
        }
    }
    let family = min_rooted_code(&labels, &adjacency, 0..n);

    let mut skeleton = Skeleton {
        modes,
        parent,
        entry,
        weight,
        reduced,
        carries,
        code,
        family,
        windows: Vec::new(),
        renormalized_windows: Vec::new(),
    };
    for window in seq.windows() {
        let (graph, nodes) = host_graph(model, seq, &skeleton, window);
        let found = graph.self_energy_graphs(model.r(), seq.tau());
        if found.iter().any(|s| s.nodes == nodes) {
            skeleton.windows.push(window);
            if found.len() == 1 {
                skeleton.renormalized_windows.push(window);
            }
        }
    }
    skeleton
}

/// The skeleton with both external lines on scale `window` and internal lines on their
/// reduced scales; the entering line comes from an external vertex.
fn host_graph(model: &Model, seq: &ScaleSequence, s: &Skeleton, window: i32) -> (ScaledGraph, Vec<usize>) {
    let n = s.node_count();
    let mut parent = s.parent.clone();
    let mut kind: Vec<GraphVertex> = s.modes.iter().cloned().map(GraphVertex::Node).collect();
    let mut scale: Vec<Option<i32>> = (0..n)
        .map(|v| {
            if v == 0 {
                Some(window)
            } else {
                // below the deepest threshold the line can never be internal to a window
                Some(
                    seq.scale_of_mode(model.frequency(), &s.reduced[v])
                        .unwrap_or(seq.n_min()),
                )
            }
        })
        .collect();
    parent.push(Some(s.entry));
    kind.push(GraphVertex::External);
    scale.push(Some(window));
    (ScaledGraph { parent, kind, scale }, (0..n).collect())
}
