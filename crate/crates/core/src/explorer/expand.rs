//! Fully renormalized expansion: trees free of self-energy graphs with dressed
//! propagators on every line, its re-expansion in `ε` and checks on the torus.

use std::collections::{BTreeSet, HashMap};
use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rayon::prelude::*;

use super::ExplorerError;
use crate::lattice::{self, Mode};
use crate::model::{Model, ModelNumbers};
use crate::multiscale::{assign_scales, log_log_slope, SelfEnergyEngine};
use crate::oracle::solve_to_order;
use crate::series::{ft_derivative_along_flow, ft_eval, FourierTaylorSeries};
use crate::trees::{is_excluded_counterterm_tree, multiplicity, Component, LabeledTree, Node, TreeEnumerator, Vertex};

/// Settings of the limit `M^[∞]` used on every line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitSettings {
    pub tol: f64,
    pub max_levels: usize,
}

impl Default for LimitSettings {
    fn default() -> Self {
        Self {
            tol: 1e-15,
            max_levels: 16,
        }
    }
}

/// Parameters the solution was built with.
#[derive(Debug, Clone, PartialEq)]
pub struct Provenance {
    pub n_min: i32,
    pub v_max: usize,
    pub limit: LimitSettings,
}

/// Coefficients `h^{(k)}_{Rν}(ε)` of the renormalized series at a fixed `ε`, so that
/// `h(ψ;ε) = Σ_k ε^k Σ_ν h^{(k)}_{Rν}(ε) e^{iν·ψ}`.
#[derive(Debug, Clone)]
pub struct RenormalizedSolution {
    pub coefficients: FourierTaylorSeries<f64>,
    pub order: usize,
    pub eps: Complex64,
    pub provenance: Provenance,
}

impl RenormalizedSolution {
    /// `h(ψ;ε)`
    pub fn eval(&self, psi: &[f64]) -> Vec<Complex64> {
        ft_eval(&self.coefficients, psi, self.eps)
    }
}

/// Renormalized trees up to a truncation order, ready for evaluation at any `ε`.
pub struct RenormalizedExpander<'a> {
    model: &'a Model,
    engine: &'a SelfEnergyEngine,
    nums: ModelNumbers<f64>,
    order: usize,
    limit: LimitSettings,
    /// Renormalized trees of order `k` with nonzero momentum.
    trees: Vec<Vec<LabeledTree>>,
    /// Renormalized trees of order `k` with zero momentum that feed the leaf factors.
    zero_trees: Vec<Vec<LabeledTree>>,
    discarded: usize,
}

impl<'a> RenormalizedExpander<'a> {
    pub fn new(
        model: &'a Model,
        engine: &'a SelfEnergyEngine,
        order: usize,
        limit: LimitSettings,
    ) -> Result<Self, ExplorerError> {
        let freq = model.frequency();
        let mut enumerator = TreeEnumerator::shapes(model);
        let mut trees = vec![Vec::new(); order + 1];
        let mut zero_trees = vec![Vec::new(); order + 2];
        let mut discarded = 0;
        for k in 1..=order + 1 {
            for tree in enumerator.trees(k) {
                let zero = lattice::is_zero(tree.momentum());
                if (!zero && k > order) || (zero && is_excluded_counterterm_tree(&tree)) {
                    continue;
                }
                let scaled = assign_scales(&tree.to_flat(), freq, engine.sequence())?;
                if !scaled.self_energy.is_empty() {
                    discarded += 1;
                    continue;
                }
                if zero {
                    zero_trees[k].push(tree);
                } else {
                    trees[k].push(tree);
                }
            }
        }
        Ok(Self {
            model,
            engine,
            nums: model.numbers(),
            order,
            limit,
            trees,
            zero_trees,
            discarded,
        })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn model(&self) -> &'a Model {
        self.model
    }

    /// Renormalized trees per order, with and without momentum.
    pub fn tree_counts(&self) -> Vec<(usize, usize)> {
        (1..=self.order)
            .map(|k| (self.trees[k].len(), self.zero_trees[k + 1].len()))
            .collect()
    }

    /// Trees dropped for containing a self-energy graph.
    pub fn discarded(&self) -> usize {
        self.discarded
    }

    /// Sums the renormalized tree values at `ε`.
    pub fn expand(&self, eps: Complex64) -> Result<RenormalizedSolution, ExplorerError> {
        let (r, d) = (self.nums.r, self.nums.d());
        let mut eval = Evaluation {
            nums: &self.nums,
            engine: self.engine,
            eps,
            limit: self.limit,
            groups: self.nums.groups.iter().cloned().collect(),
            propagators: HashMap::new(),
            outputs: HashMap::new(),
            leaves: vec![vec![Complex64::new(0.0, 0.0); self.nums.s]],
        };
        for kappa in 1..=self.order {
            let mut g = vec![Complex64::new(0.0, 0.0); self.nums.s];
            for tree in &self.zero_trees[kappa + 1] {
                let out = eval.output(&tree.root)?;
                for (gi, o) in g.iter_mut().zip(&out[r..]) {
                    *gi += o;
                }
            }
            let leaf = self.nums.counterterm(&g);
            eval.leaves.push(leaf);
        }
        let mut coefficients = FourierTaylorSeries::new(r, d, self.order);
        for k in 1..=self.order {
            for tree in &self.trees[k] {
                let out = eval.output(&tree.root)?;
                let g = eval.propagator(self.nums.divisor(tree.momentum()))?;
                let value = g * DVector::from_vec(out);
                coefficients.add_to(k, tree.momentum(), value.as_slice());
            }
            let leaf = &eval.leaves[k];
            if leaf.iter().any(|z| z.norm() != 0.0) {
                let mut joint = vec![Complex64::new(0.0, 0.0); r];
                joint.extend_from_slice(leaf);
                coefficients.set(k, lattice::zero(r), joint);
            }
        }
        Ok(RenormalizedSolution {
            coefficients,
            order: self.order,
            eps,
            provenance: Provenance {
                n_min: self.engine.sequence().n_min(),
                v_max: self.engine.catalog().v_max,
                limit: self.limit,
            },
        })
    }

    /// Taylor coefficients in `ε` of the renormalized series through the truncation
    /// order, from `points` samples on the circle `|ε| = radius`.
    pub fn re_expand(&self, radius: f64, points: usize) -> Result<FourierTaylorSeries<f64>, ExplorerError> {
        let nodes: Vec<Complex64> = (0..points)
            .map(|j| Complex64::from_polar(radius, 2.0 * PI * j as f64 / points as f64))
            .collect();
        let samples = nodes.iter().map(|&e| self.expand(e)).collect::<Result<Vec<_>, _>>()?;
        let (r, d) = (self.nums.r, self.nums.d());
        let mut out = FourierTaylorSeries::new(r, d, self.order);
        for k in 1..=self.order {
            let modes: BTreeSet<&Mode> = samples.iter().flat_map(|s| s.coefficients.order(k).keys()).collect();
            for nu in modes {
                for m in 0..=self.order - k {
                    let mut taylor = vec![Complex64::new(0.0, 0.0); d];
                    for (e, s) in nodes.iter().zip(&samples) {
                        let weight = e.powi(-(m as i32)) / points as f64;
                        for (t, z) in taylor.iter_mut().zip(s.coefficients.coeff(k, nu)) {
                            *t += z * weight;
                        }
                    }
                    out.add_to(k + m, nu, &taylor);
                }
            }
        }
        Ok(out)
    }
}

struct Evaluation<'e> {
    nums: &'e ModelNumbers<f64>,
    engine: &'e SelfEnergyEngine,
    eps: Complex64,
    limit: LimitSettings,
    groups: HashMap<Mode, std::ops::Range<usize>>,
    propagators: HashMap<u64, DMatrix<Complex64>>,
    outputs: HashMap<usize, Vec<Complex64>>,
    leaves: Vec<Vec<Complex64>>,
}

impl Evaluation<'_> {
    fn propagator(&mut self, x: f64) -> Result<DMatrix<Complex64>, ExplorerError> {
        if let Some(g) = self.propagators.get(&x.to_bits()) {
            return Ok(g.clone());
        }
        let g =
            self.engine
                .limit_propagator(Complex64::new(x, 0.0), self.eps, self.limit.tol, self.limit.max_levels)?;
        self.propagators.insert(x.to_bits(), g.clone());
        Ok(g)
    }

    /// Joint node output `(1/Π s!) Σ c e^{iμ·β₀} (ik) Π_children (ik·h_child)`.
    fn output(&mut self, node: &Arc<Node>) -> Result<Vec<Complex64>, ExplorerError> {
        let key = Arc::as_ptr(node) as usize;
        if let Some(v) = self.outputs.get(&key) {
            return Ok(v.clone());
        }
        let mut children = Vec::with_capacity(node.children.len());
        for branch in &node.children {
            children.push(match &branch.end {
                Vertex::Leaf(k) => (Component::Beta, self.leaves[*k].clone()),
                Vertex::Node(child) => {
                    let out = self.output(child)?;
                    let g = self.propagator(self.nums.divisor(&child.momentum))?;
                    (Component::Joint, (g * DVector::from_vec(out)).as_slice().to_vec())
                }
            });
        }
        let d = self.nums.d();
        let mut out = vec![Complex64::new(0.0, 0.0); d];
        if let Some(range) = self.groups.get(&node.mode).cloned() {
            for term in &self.nums.terms[range] {
                let joint: Vec<f64> = term.nu.iter().chain(&term.mu).map(|&k| f64::from(k)).collect();
                let mut product = term.weight;
                for (component, value) in &children {
                    let direction = match component {
                        Component::Beta => &joint[self.nums.r..],
                        _ => &joint[..],
                    };
                    let pairing: Complex64 = direction.iter().zip(value).map(|(k, z)| z * k).sum();
                    product *= Complex64::i() * pairing;
                }
                for (o, k) in out.iter_mut().zip(&joint) {
                    *o += Complex64::i() * product * k;
                }
            }
        }
        let inv = 1.0 / multiplicity(&node.children) as f64;
        out.iter_mut().for_each(|z| *z *= inv);
        self.outputs.insert(key, out.clone());
        Ok(out)
    }
}

/// Largest deviation per order between the re-expanded renormalized series and the
/// recursion, relative to the largest coefficient of that order.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderMatching {
    pub relative: Vec<f64>,
}

impl OrderMatching {
    pub fn worst(&self) -> f64 {
        self.relative.iter().copied().fold(0.0, f64::max)
    }
}

pub const RE_EXPANSION_RADIUS: f64 = 1e-2;
pub const RE_EXPANSION_POINTS: usize = 32;

pub fn verify_order_matching(
    expander: &RenormalizedExpander<'_>,
    radius: f64,
    points: usize,
) -> Result<OrderMatching, ExplorerError> {
    let order = expander.order();
    let re = expander.re_expand(radius, points)?;
    let oracle = solve_to_order::<f64>(expander.model(), order + 1, None)?;
    let relative = (1..=order)
        .map(|k| {
            let modes: BTreeSet<&Mode> = re.order(k).keys().chain(oracle.h.order(k).keys()).collect();
            let scale = oracle.h.max_abs(k).max(f64::MIN_POSITIVE);
            modes
                .into_iter()
                .flat_map(|nu| {
                    let (a, b) = (re.coeff(k, nu), oracle.h.coeff(k, nu));
                    a.into_iter().zip(b).map(|(x, y)| (x - y).norm()).collect::<Vec<_>>()
                })
                .fold(0.0, f64::max)
                / scale
        })
        .collect();
    Ok(OrderMatching { relative })
}

/// `∂f = (∂_α f, ∂_β f)` at complex angles.
pub fn force_at(model: &Model, alpha: &[Complex64], beta: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); model.d()];
    for t in model.perturbation().terms() {
        let phase: Complex64 =
            t.nu.iter()
                .zip(alpha)
                .map(|(&k, a)| a * f64::from(k))
                .sum::<Complex64>()
                + t.mu.iter().zip(beta).map(|(&k, b)| b * f64::from(k)).sum::<Complex64>();
        let value = t.coeff * (Complex64::i() * phase).exp();
        for (o, &k) in out.iter_mut().zip(t.nu.iter().chain(&t.mu)) {
            *o += Complex64::i() * value * f64::from(k);
        }
    }
    out
}

/// Uniform grid with `n` points per angle on `T^r`.
pub fn torus_grid(r: usize, n: usize) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new()];
    for _ in 0..r {
        out = out
            .into_iter()
            .flat_map(|p| {
                (0..n).map(move |j| {
                    let mut q = p.clone();
                    q.push(2.0 * PI * j as f64 / n as f64);
                    q
                })
            })
            .collect();
    }
    out
}

/// `max_ψ ‖(ω·∂_ψ)² h + ε ∂f(ψ + a, β₀ + b)‖` over a grid of `n` points per angle.
pub fn residual_on_torus(model: &Model, sol: &RenormalizedSolution, n: usize) -> f64 {
    let r = model.r();
    let omega = model.frequency().omega();
    let second = ft_derivative_along_flow(&ft_derivative_along_flow(&sol.coefficients, omega), omega);
    let beta0 = model.equilibrium().beta0();
    torus_grid(r, n)
        .par_iter()
        .map(|psi| {
            let h = sol.eval(psi);
            let accel = ft_eval(&second, psi, sol.eps);
            let alpha: Vec<Complex64> = psi.iter().zip(&h[..r]).map(|(p, a)| a + p).collect();
            let beta: Vec<Complex64> = beta0.iter().zip(&h[r..]).map(|(b0, b)| b + b0).collect();
            let force = force_at(model, &alpha, &beta);
            accel
                .iter()
                .zip(&force)
                .map(|(a, f)| (a + sol.eps * f).norm())
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// Residuals at two values of `ε` on the same ray and their log-log slope.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualScaling {
    pub order: usize,
    pub eps: [f64; 2],
    pub residuals: [f64; 2],
    pub slope: f64,
}

pub fn residual_scaling(
    expander: &RenormalizedExpander<'_>,
    eps: [f64; 2],
    n: usize,
) -> Result<ResidualScaling, ExplorerError> {
    let mut residuals = [0.0; 2];
    for (res, &e) in residuals.iter_mut().zip(&eps) {
        let sol = expander.expand(Complex64::new(e, 0.0))?;
        *res = residual_on_torus(expander.model(), &sol, n);
    }
    Ok(ResidualScaling {
        order: expander.order(),
        eps,
        residuals,
        slope: log_log_slope(&eps, &residuals),
    })
}

/// Point of the invariant torus and the conjugate actions at angle `ψ`.
#[derive(Debug, Clone, PartialEq)]
pub struct TorusPoint {
    pub alpha: Vec<Complex64>,
    pub beta: Vec<Complex64>,
    pub action_alpha: Vec<Complex64>,
    pub action_beta: Vec<Complex64>,
}

/// `α = ψ + a`, `β = β₀ + b`, `A = (ω·∂_ψ) a`, `B = (ω·∂_ψ) b`.
pub fn torus_embedding(model: &Model, sol: &RenormalizedSolution, psi: &[f64]) -> TorusPoint {
    let r = model.r();
    let h = sol.eval(psi);
    let flow = ft_eval(
        &ft_derivative_along_flow(&sol.coefficients, model.frequency().omega()),
        psi,
        sol.eps,
    );
    TorusPoint {
        alpha: psi.iter().zip(&h[..r]).map(|(p, a)| a + p).collect(),
        beta: model
            .equilibrium()
            .beta0()
            .iter()
            .zip(&h[r..])
            .map(|(b0, b)| b + b0)
            .collect(),
        action_alpha: flow[..r].to_vec(),
        action_beta: flow[r..].to_vec(),
    }
}

/// Fit `max_ν |h^{(k)}_{Rν}| ≈ B₁ B₂^k`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthFit {
    pub maxima: Vec<f64>,
    pub b1: f64,
    pub b2: f64,
}

pub fn coefficient_growth(sol: &RenormalizedSolution) -> GrowthFit {
    let maxima: Vec<f64> = (1..=sol.order).map(|k| sol.coefficients.max_abs(k)).collect();
    let pts: Vec<(f64, f64)> = maxima
        .iter()
        .enumerate()
        .filter(|(_, m)| **m > 0.0)
        .map(|(i, m)| ((i + 1) as f64, m.ln()))
        .collect();
    let (b1, b2) = match pts.len() {
        0 => (0.0, 0.0),
        1 => (pts[0].1.exp() / 1.0, 1.0),
        n => {
            let n = n as f64;
            let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
            let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
            let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
            let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
            let slope = sxy / sxx;
            ((my - slope * mx).exp(), slope.exp())
        }
    };
    GrowthFit { maxima, b1, b2 }
}
