//! Tree values: node factors, propagators `1/(ω·ν)²` and counterterm leaves.

use std::collections::HashMap;
use std::ops::Range;
use std::sync::Arc;

use super::{Branch, Component, LabeledTree, Node, TreeEnumerator, Vertex};
use crate::lattice::{self, Mode};
use crate::model::{Model, ModelNumbers};
use crate::oracle::FormalSolution;
use crate::real::{self, Real, C};

/// Zero-mode counterterms `b^{(κ)}_0` indexed by `κ` (entry 0 unused).
#[derive(Debug, Clone, PartialEq)]
pub struct Leaves<R: Real> {
    values: Vec<Vec<C<R>>>,
}

impl<R: Real> Leaves<R> {
    pub fn zero(s: usize, max_order: usize) -> Self {
        Self {
            values: vec![vec![real::czero(); s]; max_order + 1],
        }
    }

    pub fn from_solution(sol: &FormalSolution<R>) -> Self {
        Self {
            values: sol.counterterms.clone(),
        }
    }

    pub fn from_values(values: Vec<Vec<C<R>>>) -> Self {
        Self { values }
    }

    /// Builds `b^{(1)}_0, …, b^{(max_order)}_0` from trees alone, each from the lower ones.
    pub fn from_trees(model: &Model, enumerator: &mut TreeEnumerator, max_order: usize) -> Self {
        let nums = model.numbers::<R>();
        let mut leaves = Self::zero(model.s(), max_order);
        for kappa in 1..=max_order {
            let value = {
                let mut eval = TreeEvaluator::new(&nums, &leaves);
                eval.counterterm(enumerator, kappa)
            };
            leaves.values[kappa] = value;
        }
        leaves
    }

    pub fn get(&self, order: usize) -> &[C<R>] {
        &self.values[order]
    }

    pub fn max_order(&self) -> usize {
        self.values.len() - 1
    }
}

/// Evaluates trees with a cache of subtree values keyed by shared subtree identity.
pub struct TreeEvaluator<'a, R: Real> {
    nums: &'a ModelNumbers<R>,
    leaves: &'a Leaves<R>,
    groups: HashMap<Mode, Range<usize>>,
    cache: HashMap<(usize, Component), Vec<C<R>>>,
    /// Keeps cached subtrees alive so their addresses stay unique.
    pinned: Vec<Arc<Node>>,
}

impl<'a, R: Real> TreeEvaluator<'a, R> {
    pub fn new(nums: &'a ModelNumbers<R>, leaves: &'a Leaves<R>) -> Self {
        Self {
            nums,
            leaves,
            groups: nums.groups.iter().cloned().collect(),
            cache: HashMap::new(),
            pinned: Vec::new(),
        }
    }

    fn width(&self, component: Component) -> usize {
        match component {
            Component::Alpha => self.nums.r,
            Component::Beta => self.nums.s,
            Component::Joint => self.nums.d(),
        }
    }

    /// Value carried by a line: propagator times the node output, or the leaf counterterm.
    fn line(&mut self, branch: &Branch) -> Vec<C<R>> {
        match &branch.end {
            Vertex::Leaf(k) => self.leaves.get(*k).to_vec(),
            Vertex::Node(node) => {
                let key = (Arc::as_ptr(node) as usize, branch.component);
                if let Some(v) = self.cache.get(&key) {
                    return v.clone();
                }
                let divisor = self.nums.divisor(&node.momentum);
                assert!(!divisor.is_zero(), "node line with vanishing divisor");
                let inverse = (divisor * divisor).recip();
                let value: Vec<C<R>> = self
                    .node_output(node, branch.component)
                    .into_iter()
                    .map(|z| z * inverse)
                    .collect();
                self.pinned.push(node.clone());
                self.cache.insert(key, value.clone());
                value
            }
        }
    }

    /// `(1/Π s!) Σ_μ c e^{iμ·β₀} (ik)_γ Π_children (ik·h_child)` for the exiting label `γ`.
    pub fn node_output(&mut self, node: &Node, exit: Component) -> Vec<C<R>> {
        let children: Vec<(Component, Vec<C<R>>)> = node.children.iter().map(|b| (b.component, self.line(b))).collect();
        let symmetry = R::from_usize(multiplicity(&node.children)).expect("small");
        let width = self.width(exit);
        let mut out = vec![real::czero(); width];
        let Some(range) = self.groups.get(&node.mode).cloned() else {
            return out;
        };
        for term in &self.nums.terms[range] {
            let k = |component: Component| -> Vec<i32> {
                match component {
                    Component::Alpha => term.nu.clone(),
                    Component::Beta => term.mu.clone(),
                    Component::Joint => term.nu.iter().chain(&term.mu).copied().collect(),
                }
            };
            let mut product = term.weight;
            for (component, value) in &children {
                let direction = k(*component);
                let pairing = direction.iter().zip(value).fold(real::czero::<R>(), |acc, (&m, z)| {
                    acc + *z * R::from_i32(m).expect("small")
                });
                product = product * real::times_i(pairing);
            }
            for (o, &m) in out.iter_mut().zip(&k(exit)) {
                *o = *o + real::times_i(product * R::from_i32(m).expect("small"));
            }
        }
        let inv = symmetry.recip();
        out.into_iter().map(|z| z * inv).collect()
    }

    /// `Val(θ)` with the root propagator, or `Val'(θ)` without it.
    pub fn value(&mut self, tree: &LabeledTree, with_root_propagator: bool) -> Vec<C<R>> {
        let out = self.node_output(&tree.root, tree.root_component);
        if !with_root_propagator {
            return out;
        }
        let divisor = self.nums.divisor(&tree.root.momentum);
        assert!(!divisor.is_zero(), "root propagator at zero momentum");
        let inverse = (divisor * divisor).recip();
        out.into_iter().map(|z| z * inverse).collect()
    }

    /// `Σ_{Θ_{k,ν,γ}} Val` for `ν ≠ 0`; at `ν = 0` the reduced values over `Θ*_{k,0,γ}`.
    pub fn sum(&mut self, enumerator: &mut TreeEnumerator, k: usize, nu: &[i32], component: Component) -> Vec<C<R>> {
        let zero_momentum = lattice::is_zero(nu);
        let mut total = vec![real::czero(); self.width(component)];
        for tree in enumerator.trees_at(k, nu, component) {
            if zero_momentum && is_excluded_counterterm_tree(&tree) {
                continue;
            }
            for (t, v) in total.iter_mut().zip(self.value(&tree, !zero_momentum)) {
                *t = *t + v;
            }
        }
        total
    }

    /// `b^{(κ)}_0 = -(∂²f₀)^{-1} Σ_{Θ*_{κ+1,0,β}} Val'`
    pub fn counterterm(&mut self, enumerator: &mut TreeEnumerator, kappa: usize) -> Vec<C<R>> {
        let zero = lattice::zero(self.nums.r);
        let g = self.sum(enumerator, kappa + 1, &zero, Component::Beta);
        self.nums.counterterm(&g)
    }
}

/// Product of the factorials of the runs of identical adjacent branches.
pub(crate) fn multiplicity(children: &[Branch]) -> usize {
    let mut product = 1;
    let mut run = 1;
    for w in children.windows(2) {
        if same_branch(&w[0], &w[1]) {
            run += 1;
            product *= run;
        } else {
            run = 1;
        }
    }
    product
}

fn same_branch(a: &Branch, b: &Branch) -> bool {
    a.component == b.component
        && match (&a.end, &b.end) {
            (Vertex::Leaf(x), Vertex::Leaf(y)) => x == y,
            (Vertex::Node(x), Vertex::Node(y)) => Arc::ptr_eq(x, y) || x == y,
            _ => false,
        }
}

/// The single order-`k` tree holding a leaf of order `k - 1`: one zero-mode node above it.
pub(crate) fn is_excluded_counterterm_tree(tree: &LabeledTree) -> bool {
    let root = &tree.root;
    lattice::is_zero(&root.mode)
        && root.children.len() == 1
        && matches!(root.children[0].end, Vertex::Leaf(k) if k + 1 == root.order)
}

/// `Val(θ)` for a tree with nonzero momentum.
pub fn tree_value<R: Real>(model: &Model, tree: &LabeledTree, leaves: &Leaves<R>) -> Vec<C<R>> {
    let nums = model.numbers::<R>();
    TreeEvaluator::new(&nums, leaves).value(tree, true)
}

/// See [`TreeEvaluator::sum`].
pub fn sum_tree_values<R: Real>(
    model: &Model,
    k: usize,
    nu: &[i32],
    component: Component,
    leaves: &Leaves<R>,
) -> Vec<C<R>> {
    let nums = model.numbers::<R>();
    let mut enumerator = TreeEnumerator::new(model);
    TreeEvaluator::new(&nums, leaves).sum(&mut enumerator, k, nu, component)
}

/// See [`TreeEvaluator::counterterm`].
pub fn leaf_factor<R: Real>(model: &Model, kappa: usize, leaves: &Leaves<R>) -> Vec<C<R>> {
    let nums = model.numbers::<R>();
    let mut enumerator = TreeEnumerator::new(model);
    TreeEvaluator::new(&nums, leaves).counterterm(&mut enumerator, kappa)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::solve_to_order;
    use crate::real::BigFloat;
    use num_complex::Complex64;

    fn close(a: &[Complex64], b: &[Complex64], tol: f64, scale: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).norm() <= tol * scale)
    }

    #[test]
    fn tree_sums_reproduce_oracle_through_order_four() {
        for name in ["ref1", "ref1-odd"] {
            let m = Model::builtin(name).unwrap();
            let sol = solve_to_order::<f64>(&m, 4, None).unwrap();
            let leaves = Leaves::from_solution(&sol);
            let nums = m.numbers::<f64>();
            let mut e = TreeEnumerator::new(&m);
            let mut eval = TreeEvaluator::new(&nums, &leaves);
            for k in 1..=4 {
                let scale = sol.h.max_abs(k);
                for (nu, h) in sol.h.order(k) {
                    if lattice::is_zero(nu) {
                        continue;
                    }
                    let a = eval.sum(&mut e, k, nu, Component::Alpha);
                    let b = eval.sum(&mut e, k, nu, Component::Beta);
                    assert!(close(&a, &h[..2], 1e-12, scale), "{name} k={k} nu={nu:?} alpha");
                    assert!(close(&b, &h[2..], 1e-12, scale), "{name} k={k} nu={nu:?} beta");
                }
            }
        }
    }

    #[test]
    fn first_order_tree_value() {
        let m = Model::ref1();
        let leaves = Leaves::<f64>::zero(1, 1);
        let t = &super::super::enumerate_trees(&m, 1, &[1, 0], Component::Alpha)[0];
        let v = tree_value(&m, t, &leaves);
        assert!((v[0] - Complex64::new(0.0, 0.5)).norm() < 1e-16);
        let k0 = sum_tree_values(&m, 1, &[0, 0], Component::Alpha, &leaves);
        assert_eq!(k0, vec![Complex64::new(0.0, 0.0); 2]);
    }

    #[test]
    fn counterterms_from_trees_match_oracle() {
        let m = Model::builtin("ref1-odd").unwrap();
        let sol = solve_to_order::<f64>(&m, 4, None).unwrap();
        let mut e = TreeEnumerator::new(&m);
        let leaves = Leaves::<f64>::from_trees(&m, &mut e, 3);
        let scale = sol.counterterms.iter().map(|b| b[0].norm()).fold(0.0, f64::max);
        for kappa in 1..=3 {
            assert!(
                close(leaves.get(kappa), &sol.counterterms[kappa], 1e-12, scale),
                "kappa {kappa}: {:?} vs {:?}",
                leaves.get(kappa),
                sol.counterterms[kappa]
            );
        }
        let direct = leaf_factor(&m, 1, &Leaves::<f64>::zero(1, 1));
        assert!(close(&direct, &sol.counterterms[1], 1e-12, scale));
    }

    #[test]
    fn shape_trees_sum_to_joint_coefficients() {
        let m = Model::builtin("ref1-odd").unwrap();
        let sol = solve_to_order::<f64>(&m, 3, None).unwrap();
        let leaves = Leaves::from_solution(&sol);
        let nums = m.numbers::<f64>();
        let mut e = TreeEnumerator::shapes(&m);
        let mut eval = TreeEvaluator::new(&nums, &leaves);
        let scale = sol.h.max_abs(3);
        for (nu, h) in sol.h.order(3) {
            if lattice::is_zero(nu) {
                continue;
            }
            let v = eval.sum(&mut e, 3, nu, Component::Joint);
            assert!(close(&v, h, 1e-12, scale), "nu={nu:?}");
        }
    }

    #[test]
    fn extended_tree_sums_match_extended_oracle() {
        let m = Model::builtin("ref1-odd").unwrap();
        let sol = solve_to_order::<BigFloat>(&m, 3, None).unwrap();
        let leaves = Leaves::from_solution(&sol);
        let nums = m.numbers::<BigFloat>();
        let mut e = TreeEnumerator::new(&m);
        let mut eval = TreeEvaluator::new(&nums, &leaves);
        let tol = BigFloat::from_f64_lossy(1e-30);
        for (nu, h) in sol.h.order(3) {
            if lattice::is_zero(nu) {
                continue;
            }
            let a = eval.sum(&mut e, 3, nu, Component::Alpha);
            for (x, y) in a.iter().zip(&h[..2]) {
                assert!(real::cabs(*x - *y) < tol);
            }
        }
    }
}
