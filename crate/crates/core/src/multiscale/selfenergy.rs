//! Values of self-energy graphs as matrices in the external line components, their
//! localization at zero external divisor, and family cancellation reports.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use num_complex::Complex64;
use thiserror::Error;

use super::catalog::{SelfEnergyCatalog, Skeleton};
use super::clusters::{assign_scales, shift_family, ScaledTree, SelfEnergyGraph};
use super::scales::{ScaleError, ScaleSequence};
use crate::lattice::{self, Mode};
use crate::model::{Model, ModelNumbers};
use crate::trees::{unrooted_key, Component, TreeEnumerator, VertexKind};

#[derive(Debug, Clone, Error, PartialEq)]
pub enum SelfEnergyError {
    #[error("propagator argument {arg} is singular")]
    SingularPropagator { arg: Complex64 },
    #[error(transparent)]
    Scale(#[from] ScaleError),
}

/// Node graph evaluated as a matrix from the entering to the exiting line.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphSpec {
    pub modes: Vec<Mode>,
    /// Links inside the graph; the exiting node has none.
    pub parent: Vec<Option<usize>>,
    pub entry: usize,
    /// `ν⁰` per node line.
    pub reduced: Vec<Mode>,
    /// `σ` per node line.
    pub carries: Vec<bool>,
    /// Component label per node line.
    pub labels: Vec<Component>,
}

impl GraphSpec {
    pub fn from_skeleton(s: &Skeleton) -> Self {
        Self {
            modes: s.modes.clone(),
            parent: s.parent.clone(),
            entry: s.entry,
            reduced: s.reduced.clone(),
            carries: s.carries.clone(),
            labels: vec![Component::Joint; s.node_count()],
        }
    }

    /// The self-energy graph `seg` of a tree, with its internal line labels.
    pub fn from_tree(scaled: &ScaledTree, seg: &SelfEnergyGraph) -> Self {
        let tree = &scaled.tree;
        let local: BTreeMap<usize, usize> = seg.nodes.iter().enumerate().map(|(i, &v)| (v, i)).collect();
        let external = &tree.vertices[seg.entering].momentum;
        let n = seg.nodes.len();
        let mut carries = vec![false; n];
        let mut v = seg.entry;
        loop {
            carries[local[&v]] = true;
            if v == seg.exit {
                break;
            }
            v = tree.vertices[v].parent.expect("entry lies below the exit");
        }
        let mut modes = Vec::with_capacity(n);
        let mut parent = Vec::with_capacity(n);
        let mut reduced = Vec::with_capacity(n);
        let mut labels = Vec::with_capacity(n);
        for (i, &v) in seg.nodes.iter().enumerate() {
            let vertex = &tree.vertices[v];
            match &vertex.kind {
                VertexKind::Node(m) => modes.push(m.clone()),
                VertexKind::Leaf(_) => unreachable!("self-energy graphs contain no leaves"),
            }
            parent.push(if v == seg.exit {
                None
            } else {
                vertex.parent.map(|p| local[&p])
            });
            let mut nu0 = vertex.momentum.clone();
            if carries[i] {
                nu0 = lattice::add(&nu0, &lattice::neg(external));
            }
            reduced.push(nu0);
            labels.push(vertex.component);
        }
        Self {
            modes,
            parent,
            entry: local[&seg.entry],
            reduced,
            carries,
            labels,
        }
    }

    fn exit(&self) -> usize {
        self.parent
            .iter()
            .position(Option::is_none)
            .expect("graph has an exiting node")
    }

    fn postorder(&self) -> Vec<usize> {
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

/// Restricts a line matrix to the component carried by the line.
pub fn project(component: Component, r: usize, m: DMatrix<Complex64>) -> DMatrix<Complex64> {
    let range = match component {
        Component::Joint => return m,
        Component::Alpha => 0..r,
        Component::Beta => r..m.nrows(),
    };
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for i in range.clone() {
        for j in range.clone() {
            out[(i, j)] = m[(i, j)];
        }
    }
    out
}

/// Bare propagator `𝟙/x²`.
pub fn bare_propagator(d: usize, x: Complex64) -> Result<DMatrix<Complex64>, SelfEnergyError> {
    if x == Complex64::new(0.0, 0.0) {
        return Err(SelfEnergyError::SingularPropagator { arg: x });
    }
    Ok(DMatrix::identity(d, d) / (x * x))
}

fn node_vectors(nums: &ModelNumbers<f64>, mode: &[i32]) -> Vec<(Complex64, Vec<Complex64>)> {
    let Some((_, range)) = nums.groups.iter().find(|(nu, _)| nu.as_slice() == mode) else {
        return Vec::new();
    };
    nums.terms[range.clone()]
        .iter()
        .map(|t| {
            let ik =
                t.nu.iter()
                    .chain(&t.mu)
                    .map(|&k| Complex64::new(0.0, f64::from(k)))
                    .collect();
            (t.weight, ik)
        })
        .collect()
}

/// `Π F_v Π G_ℓ` with line matrices `line(ω·ν⁰_ℓ + σ_ℓ x)`; rows index the exiting
/// component, columns the entering one.
pub fn graph_value<E>(
    nums: &ModelNumbers<f64>,
    spec: &GraphSpec,
    x: Complex64,
    line: &mut dyn FnMut(Complex64) -> Result<DMatrix<Complex64>, E>,
) -> Result<DMatrix<Complex64>, E> {
    let d = nums.d();
    let n = spec.modes.len();
    let mut children = vec![Vec::new(); n];
    for (v, p) in spec.parent.iter().enumerate() {
        if let Some(p) = *p {
            children[p].push(v);
        }
    }
    let on_path = |v: usize| spec.carries[v] || v == spec.entry;
    let mut vectors: Vec<Option<Vec<Complex64>>> = vec![None; n];
    let mut matrices: Vec<Option<DMatrix<Complex64>>> = vec![None; n];
    for v in spec.postorder() {
        let mut side = Vec::new();
        let mut path_input = (v == spec.entry).then(|| DMatrix::identity(d, d));
        for &c in &children[v] {
            let arg = Complex64::new(nums.divisor(&spec.reduced[c]), 0.0)
                + if spec.carries[c] { x } else { Complex64::new(0.0, 0.0) };
            let g = project(spec.labels[c], nums.r, line(arg)?);
            if on_path(c) {
                path_input = Some(&g * matrices[c].take().expect("child evaluated"));
            } else {
                let h = vectors[c].take().expect("child evaluated");
                side.push(&g * nalgebra::DVector::from_vec(h));
            }
        }
        let terms = node_vectors(nums, &spec.modes[v]);
        if let Some(input) = path_input {
            let mut out = DMatrix::zeros(d, d);
            for (weight, ik) in &terms {
                let scalar = side.iter().fold(*weight, |acc, h| acc * dot(ik, h.as_slice()));
                let k = nalgebra::DVector::from_column_slice(ik);
                let row = k.transpose() * &input;
                out += (k * row) * scalar;
            }
            matrices[v] = Some(out);
        } else {
            let mut out = vec![Complex64::new(0.0, 0.0); d];
            for (weight, ik) in &terms {
                let scalar = side.iter().fold(*weight, |acc, h| acc * dot(ik, h.as_slice()));
                for (o, k) in out.iter_mut().zip(ik) {
                    *o += scalar * k;
                }
            }
            vectors[v] = Some(out);
        }
    }
    Ok(matrices[spec.exit()].take().expect("exit lies on the path"))
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `ε^V w Π F Π Ḡ` for a catalog skeleton.
pub fn self_energy_value<E>(
    nums: &ModelNumbers<f64>,
    skeleton: &Skeleton,
    x: Complex64,
    eps: Complex64,
    line: &mut dyn FnMut(Complex64) -> Result<DMatrix<Complex64>, E>,
) -> Result<DMatrix<Complex64>, E> {
    let value = graph_value(nums, &GraphSpec::from_skeleton(skeleton), x, line)?;
    Ok(value * (eps.powu(skeleton.node_count() as u32) * skeleton.weight))
}

/// Affine part `V(0) + x V'(0)` of a matrix function.
#[derive(Debug, Clone, PartialEq)]
pub struct Localized {
    pub value: DMatrix<Complex64>,
    pub slope: DMatrix<Complex64>,
}

/// Default step of the central differences in [`localize`].
pub const LOCALIZE_STEP: f64 = 1e-3;

/// `V(0)` and `V'(0)` with the derivative from Richardson-extrapolated central
/// differences at steps `h` and `h/2`.
pub fn localize<E>(h: f64, mut f: impl FnMut(Complex64) -> Result<DMatrix<Complex64>, E>) -> Result<Localized, E> {
    let at = |f: &mut dyn FnMut(Complex64) -> Result<DMatrix<Complex64>, E>, x: f64| f(Complex64::new(x, 0.0));
    let value = at(&mut f, 0.0)?;
    let central = |f: &mut dyn FnMut(Complex64) -> Result<DMatrix<Complex64>, E>, step: f64| {
        Ok::<_, E>((at(f, step)? - at(f, -step)?) / Complex64::new(2.0 * step, 0.0))
    };
    let coarse = central(&mut f, h)?;
    let fine = central(&mut f, 0.5 * h)?;
    let slope = (fine * Complex64::new(4.0, 0.0) - coarse) / Complex64::new(3.0, 0.0);
    Ok(Localized { value, slope })
}

/// Operator ∞-norm (largest absolute row sum).
pub fn sup_norm(m: &DMatrix<Complex64>) -> f64 {
    m.row_iter()
        .map(|row| row.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Blocks `(αα, αβ, βα, ββ)` of a `d×d` matrix with `r` angle components.
pub fn blocks(m: &DMatrix<Complex64>, r: usize) -> [DMatrix<Complex64>; 4] {
    let s = m.nrows() - r;
    [
        m.view((0, 0), (r, r)).into_owned(),
        m.view((0, r), (r, s)).into_owned(),
        m.view((r, 0), (s, r)).into_owned(),
        m.view((r, r), (s, s)).into_owned(),
    ]
}

/// Family-summed localized value with the largest member for normalization.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyCancellation {
    pub key: String,
    pub members: usize,
    pub window: i32,
    /// Self-energy type `1..=4` when the external labels are fixed; `None` for the full matrix.
    pub kind: Option<u8>,
    pub sum: Localized,
    pub scale: f64,
}

impl FamilyCancellation {
    fn relative(&self, m: &DMatrix<Complex64>) -> f64 {
        if self.scale == 0.0 {
            0.0
        } else {
            sup_norm(m) / self.scale
        }
    }

    fn parts(&self, r: usize) -> ([DMatrix<Complex64>; 4], [DMatrix<Complex64>; 4]) {
        (blocks(&self.sum.value, r), blocks(&self.sum.slope, r))
    }

    /// αα block: both localized parts.
    pub fn type1_residual(&self, r: usize) -> f64 {
        let (v, s) = self.parts(r);
        self.relative(&v[0]).max(self.relative(&s[0]))
    }

    /// Mixed blocks: the constant part.
    pub fn mixed_constant_residual(&self, r: usize) -> f64 {
        let (v, _) = self.parts(r);
        self.relative(&v[1]).max(self.relative(&v[2]))
    }

    /// `B' + (B'')^T`, only meaningful for full matrices.
    pub fn antisymmetry_residual(&self, r: usize) -> Option<f64> {
        let (_, s) = self.parts(r);
        self.kind.is_none().then(|| self.relative(&(&s[1] + s[2].transpose())))
    }

    /// ββ block: the slope.
    pub fn type4_residual(&self, r: usize) -> f64 {
        let (_, s) = self.parts(r);
        self.relative(&s[3])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalizedReport {
    pub r: usize,
    pub families: Vec<FamilyCancellation>,
}

impl LocalizedReport {
    fn worst(&self, f: impl Fn(&FamilyCancellation) -> f64) -> f64 {
        self.families.iter().map(f).fold(0.0, f64::max)
    }

    pub fn worst_type1(&self) -> f64 {
        self.worst(|f| f.type1_residual(self.r))
    }

    pub fn worst_mixed_constant(&self) -> f64 {
        self.worst(|f| f.mixed_constant_residual(self.r))
    }

    pub fn worst_antisymmetry(&self) -> f64 {
        self.worst(|f| f.antisymmetry_residual(self.r).unwrap_or(0.0))
    }

    pub fn worst_type4(&self) -> f64 {
        self.worst(|f| f.type4_residual(self.r))
    }

    /// Thresholds: type 1 and type 4 at `strict`, mixed blocks at `mixed`.
    pub fn holds(&self, strict: f64, mixed: f64) -> bool {
        self.worst_type1() <= strict
            && self.worst_type4() <= strict
            && self.worst_mixed_constant() <= mixed
            && self.worst_antisymmetry() <= mixed
    }

    /// Families with more than one member.
    pub fn nontrivial(&self) -> usize {
        self.families.iter().filter(|f| f.members > 1).count()
    }
}

fn accumulate(target: &mut Option<Localized>, item: &Localized) {
    match target {
        Some(t) => {
            t.value += &item.value;
            t.slope += &item.slope;
        }
        None => *target = Some(item.clone()),
    }
}

fn size(l: &Localized) -> f64 {
    sup_norm(&l.value).max(sup_norm(&l.slope))
}

/// Sums the localized values of every catalog family admissible at `window`, with bare
/// propagators and unit `ε`.
pub fn verify_catalog_cancellations(
    model: &Model,
    catalog: &SelfEnergyCatalog,
    window: i32,
) -> Result<LocalizedReport, SelfEnergyError> {
    let nums = model.numbers::<f64>();
    let d = nums.d();
    let one = Complex64::new(1.0, 0.0);
    let mut families = Vec::new();
    for (key, members) in catalog.families() {
        let members: Vec<&Skeleton> = members
            .iter()
            .map(|&i| &catalog.skeletons[i])
            .filter(|s| s.admissible(window, false))
            .collect();
        if members.is_empty() {
            continue;
        }
        let mut sum = None;
        let mut scale = 0.0f64;
        for s in &members {
            let loc = localize(LOCALIZE_STEP, |x| {
                self_energy_value(&nums, s, x, one, &mut |arg| bare_propagator(d, arg))
            })?;
            scale = scale.max(size(&loc));
            accumulate(&mut sum, &loc);
        }
        families.push(FamilyCancellation {
            key: key.to_string(),
            members: members.len(),
            window,
            kind: None,
            sum: sum.expect("nonempty family"),
            scale,
        });
    }
    Ok(LocalizedReport { r: model.r(), families })
}

fn self_energy_type(exit: Component, entering: Component) -> u8 {
    match (exit, entering) {
        (Component::Alpha, Component::Alpha) => 1,
        (Component::Alpha, _) => 2,
        (_, Component::Alpha) => 3,
        _ => 4,
    }
}

/// Shift-family sums of the localized values of every self-energy graph found in the
/// trees of order at most `order`.
pub fn verify_localized_cancellations(
    model: &Model,
    order: usize,
    seq: &ScaleSequence,
) -> Result<LocalizedReport, SelfEnergyError> {
    let nums = model.numbers::<f64>();
    let (r, d) = (nums.r, nums.d());
    let freq = model.frequency();
    let mut enumerator = TreeEnumerator::new(model);
    let mut families: BTreeMap<String, FamilyCancellation> = BTreeMap::new();
    for k in 1..=order {
        for tree in enumerator.trees(k) {
            let scaled = assign_scales(&tree.to_flat(), freq, seq)?;
            for (index, seg) in scaled.self_energy.iter().enumerate() {
                let exit_label = scaled.tree.vertices[seg.exit].component;
                let entering_label = scaled.tree.vertices[seg.entering].component;
                let family = shift_family(&scaled, index, freq, seq)?;
                let key = family
                    .members
                    .iter()
                    .map(|m| unrooted_key(&m.tree))
                    .min()
                    .expect("family has members");
                if families.contains_key(&key) {
                    continue;
                }
                let mut sum = None;
                let mut scale = 0.0f64;
                for (member, &(exit, entry)) in family.members.iter().zip(&family.attachments) {
                    let moved = SelfEnergyGraph {
                        exit,
                        entry,
                        ..seg.clone()
                    };
                    let spec = GraphSpec::from_tree(member, &moved);
                    let loc = localize(LOCALIZE_STEP, |x| {
                        graph_value(&nums, &spec, x, &mut |arg| bare_propagator(d, arg))
                            .map(|m| project_block(exit_label, entering_label, r, m))
                    })?;
                    scale = scale.max(size(&loc));
                    accumulate(&mut sum, &loc);
                }
                families.insert(
                    key.clone(),
                    FamilyCancellation {
                        key,
                        members: family.members.len(),
                        window: seg.external_scale,
                        kind: Some(self_energy_type(exit_label, entering_label)),
                        sum: sum.expect("nonempty family"),
                        scale,
                    },
                );
            }
        }
    }
    Ok(LocalizedReport {
        r,
        families: families.into_values().collect(),
    })
}

/// Keeps the block selected by the exiting (rows) and entering (columns) labels.
fn project_block(exit: Component, entering: Component, r: usize, m: DMatrix<Complex64>) -> DMatrix<Complex64> {
    let range = |c: Component| match c {
        Component::Alpha => 0..r,
        Component::Beta => r..m.nrows(),
        Component::Joint => 0..m.nrows(),
    };
    let mut out = DMatrix::zeros(m.nrows(), m.ncols());
    for i in range(exit) {
        for j in range(entering) {
            out[(i, j)] = m[(i, j)];
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::multiscale::catalog::build_catalog;
    use crate::multiscale::scales::build_scale_sequence;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn localize_affine_functions() {
        let b = DMatrix::from_fn(2, 2, |i, j| c((i + 2 * j) as f64 + 0.5));
        let constant = localize(LOCALIZE_STEP, |_| Ok::<_, ()>(b.clone())).unwrap();
        assert_eq!(constant.value, b);
        assert!(sup_norm(&constant.slope) == 0.0);
        let linear = localize(LOCALIZE_STEP, |x| Ok::<_, ()>(&b * x)).unwrap();
        assert!(sup_norm(&linear.value) == 0.0);
        assert!(sup_norm(&(linear.slope - &b)) < 1e-12);
        // cubic term: Richardson removes the h² error
        let cubic = localize(0.1, |x| Ok::<_, ()>(&b * (x * x * x + x))).unwrap();
        assert!(sup_norm(&(cubic.slope - &b)) < 1e-12);
    }

    #[test]
    fn single_node_value_is_hessian() {
        let m = Model::ref1();
        let seq = build_scale_sequence(m.frequency(), -6).unwrap();
        let cat = build_catalog(&m, &seq, 1);
        let nums = m.numbers::<f64>();
        let eps = c(0.01);
        let v = self_energy_value(&nums, &cat.skeletons[0], c(0.3), eps, &mut |a| bare_propagator(3, a)).unwrap();
        // ε ∂²_β f₀(β₀) = -ε in the ββ corner, zero elsewhere
        for i in 0..3 {
            for j in 0..3 {
                let expected = if (i, j) == (2, 2) { -0.01 } else { 0.0 };
                assert!((v[(i, j)] - c(expected)).norm() < 1e-16);
            }
        }
    }

    /// `M_αβ` slope of the two-node skeletons from an explicit double sum over the
    /// support: for `ν₁ + ν₂ = 0` the entering line attaches to node 2 or node 1.
    fn mixed_slope_oracle(m: &Model, eps: f64) -> (Vec<Complex64>, Vec<Complex64>) {
        let r = m.r();
        let omega = m.frequency().omega();
        let terms = m.perturbation().terms();
        let ik = |t: &crate::model::Term| -> Vec<Complex64> {
            t.nu.iter()
                .chain(&t.mu)
                .map(|&k| Complex64::new(0.0, f64::from(k)))
                .collect()
        };
        let mut value = vec![c(0.0); r];
        let mut slope = vec![c(0.0); r];
        for a in terms.iter().filter(|t| !lattice::is_zero(&t.nu)) {
            for b in terms.iter().filter(|t| lattice::add(&t.nu, &a.nu) == vec![0; r]) {
                let (ka, kb) = (ik(a), ik(b));
                let x2 = lattice::dot_f64(omega, &b.nu);
                let pair: Complex64 = ka.iter().zip(&kb).map(|(p, q)| p * q).sum();
                // entry at node b (line carries x): (ka)(ka·kb)(kb)_β/(x2 + x)²
                // entry at node a (line without x): (ka)(ka·kb)(ka)_β/x2²
                for i in 0..r {
                    let common = ka[i] * pair * a.coeff * b.coeff * eps * eps;
                    let with_x = common * kb[r];
                    let without_x = common * ka[r];
                    value[i] += with_x / (x2 * x2) + without_x / (x2 * x2);
                    slope[i] += with_x * (-2.0 / (x2 * x2 * x2));
                }
            }
        }
        (value, slope)
    }

    #[test]
    fn two_node_mixed_block_matches_explicit_sum() {
        let m = Model::builtin("ref1-odd").unwrap();
        let seq = build_scale_sequence(m.frequency(), -8).unwrap();
        let cat = build_catalog(&m, &seq, 2);
        let nums = m.numbers::<f64>();
        let window = seq.n_min() + 1;
        let eps = 0.01;
        let mut total: Option<Localized> = None;
        for (_, s) in cat.admissible(window, true).filter(|(_, s)| s.node_count() == 2) {
            let loc = localize(LOCALIZE_STEP, |x| {
                self_energy_value(&nums, s, x, c(eps), &mut |a| bare_propagator(3, a))
            })
            .unwrap();
            accumulate(&mut total, &loc);
        }
        let total = total.unwrap();
        let (value, slope) = mixed_slope_oracle(&m, eps);
        for i in 0..2 {
            assert!((total.value[(i, 2)] - value[i]).norm() < 1e-14, "{i}");
            assert!(
                (total.slope[(i, 2)] - slope[i]).norm() < 1e-10 * slope[i].norm().max(1e-6),
                "{i}"
            );
        }
        // the constant part cancels and the slope survives
        assert!(value.iter().all(|z| z.norm() < 1e-16));
        assert!(slope.iter().any(|z| z.norm() > 1e-6));
    }

    #[test]
    fn catalog_families_cancel() {
        for (name, n_min) in [("ref1", -6), ("ref1-odd", -6)] {
            let m = Model::builtin(name).unwrap();
            let seq = build_scale_sequence(m.frequency(), n_min).unwrap();
            let cat = build_catalog(&m, &seq, 3);
            let report = verify_catalog_cancellations(&m, &cat, seq.n_min() + 1).unwrap();
            assert!(report.nontrivial() > 0);
            assert!(report.worst_type1() <= 1e-12, "{name} {}", report.worst_type1());
            assert!(
                report.worst_mixed_constant() <= 1e-10,
                "{name} {}",
                report.worst_mixed_constant()
            );
            assert!(
                report.worst_antisymmetry() <= 1e-10,
                "{name} {}",
                report.worst_antisymmetry()
            );
            assert!(report.worst_type4() <= 1e-12, "{name} {}", report.worst_type4());
        }
    }

    #[test]
    fn tree_families_cancel() {
        let m = Model::ref1();
        let seq = build_scale_sequence(m.frequency(), -6).unwrap();
        let report = verify_localized_cancellations(&m, 3, &seq).unwrap();
        assert!(!report.families.is_empty());
        assert!(report.holds(1e-12, 1e-10));
    }
}
