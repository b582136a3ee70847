//! Sparse Fourier–Taylor series `Σ_k ε^k Σ_ν c_{k,ν} e^{iν·ψ}` with vector coefficients.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use crate::lattice::{self, Mode};
use crate::model::ModelNumbers;
use crate::real::{self, Real, C};

/// Coefficients indexed by Taylor order `k ∈ 0..=max_order` and Fourier mode `ν ∈ Z^rank`.
/// Each coefficient is a vector of length `dim`. Absent entries are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierTaylorSeries<R: Real> {
    rank: usize,
    dim: usize,
    orders: Vec<BTreeMap<Mode, Vec<C<R>>>>,
}

impl<R: Real> FourierTaylorSeries<R> {
    pub fn new(rank: usize, dim: usize, max_order: usize) -> Self {
        Self {
            rank,
            dim,
            orders: vec![BTreeMap::new(); max_order + 1],
        }
    }

    /// The scalar series `1` (order 0, mode 0).
    pub fn unit(rank: usize, max_order: usize) -> Self {
        let mut s = Self::new(rank, 1, max_order);
        s.set(0, lattice::zero(rank), vec![C::new(R::one(), R::zero())]);
        s
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn max_order(&self) -> usize {
        self.orders.len() - 1
    }

    pub fn order(&self, k: usize) -> &BTreeMap<Mode, Vec<C<R>>> {
        &self.orders[k]
    }

    pub fn get(&self, k: usize, nu: &[i32]) -> Option<&[C<R>]> {
        self.orders.get(k)?.get(nu).map(Vec::as_slice)
    }

    /// Coefficient with zeros for absent entries.
    pub fn coeff(&self, k: usize, nu: &[i32]) -> Vec<C<R>> {
        self.get(k, nu)
            .map(<[C<R>]>::to_vec)
            .unwrap_or_else(|| vec![real::czero(); self.dim])
    }

    pub fn set(&mut self, k: usize, nu: Mode, value: Vec<C<R>>) {
        debug_assert_eq!(value.len(), self.dim);
        debug_assert_eq!(nu.len(), self.rank);
        if value.iter().all(|z| z.re.is_zero() && z.im.is_zero()) {
            self.orders[k].remove(&nu);
        } else {
            self.orders[k].insert(nu, value);
        }
    }

    pub fn add_to(&mut self, k: usize, nu: &[i32], value: &[C<R>]) {
        let dim = self.dim;
        let slot = self.orders[k]
            .entry(nu.to_vec())
            .or_insert_with(|| vec![real::czero(); dim]);
        for (s, v) in slot.iter_mut().zip(value) {
            *s = *s + *v;
        }
    }

    /// Drops orders above `max_order`.
    pub fn truncated(&self, max_order: usize) -> Self {
        let keep = max_order.min(self.max_order());
        let mut orders = self.orders[..=keep].to_vec();
        orders.resize(max_order + 1, BTreeMap::new());
        Self {
            rank: self.rank,
            dim: self.dim,
            orders,
        }
    }

    pub fn len(&self) -> usize {
        self.orders.iter().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Largest `|ν|₁` present at order `k`.
    pub fn support_radius(&self, k: usize) -> u32 {
        self.orders[k].keys().map(|nu| lattice::l1(nu)).max().unwrap_or(0)
    }

    /// Largest coefficient modulus at order `k`.
    pub fn max_abs(&self, k: usize) -> R {
        self.orders[k]
            .values()
            .flatten()
            .map(|z| real::cabs(*z))
            .fold(R::zero(), R::max)
    }

    /// Copies components `range` into a series of dimension `range.len()`.
    pub fn components(&self, range: std::ops::Range<usize>) -> Self {
        let mut out = Self::new(self.rank, range.len(), self.max_order());
        for (k, order) in self.orders.iter().enumerate() {
            for (nu, v) in order {
                out.set(k, nu.clone(), v[range.clone()].to_vec());
            }
        }
        out
    }

    pub fn scaled(&self, factor: C<R>) -> Self {
        let mut out = self.clone();
        for order in &mut out.orders {
            for v in order.values_mut() {
                for z in v.iter_mut() {
                    *z = *z * factor;
                }
            }
        }
        out
    }

    /// Hard check that order-`k` coefficients live in `|ν|₁ ≤ (k + offset) · radius`.
    pub fn assert_support_bound(&self, radius: u32, offset: usize) {
        for k in 0..=self.max_order() {
            let bound = (k + offset) as u32 * radius;
            let found = self.support_radius(k);
            assert!(
                found <= bound,
                "order {k} has a mode with |nu| = {found} beyond the bound {bound}"
            );
        }
    }
}

/// Componentwise sum; the result is truncated at the smaller maximal order.
pub fn ft_add<R: Real>(a: &FourierTaylorSeries<R>, b: &FourierTaylorSeries<R>) -> FourierTaylorSeries<R> {
    assert_eq!((a.rank, a.dim), (b.rank, b.dim), "incompatible series");
    let mut out = a.truncated(a.max_order().min(b.max_order()));
    for k in 0..=out.max_order() {
        for (nu, v) in &b.orders[k] {
            out.add_to(k, nu, v);
        }
        out.orders[k].retain(|_, v| v.iter().any(|z| !(z.re.is_zero() && z.im.is_zero())));
    }
    out
}

/// Accumulates the image of one coefficient pair into an output coefficient.
pub type BilinearFn<'a, R> = Box<dyn Fn(&[C<R>], &[C<R>], &mut [C<R>]) + Sync + 'a>;

/// Bilinear map from coefficient pairs to output coefficients.
pub struct BilinearRule<'a, R: Real> {
    pub out_dim: usize,
    pub apply: BilinearFn<'a, R>,
}

impl<'a, R: Real> BilinearRule<'a, R> {
    /// Product of two scalar series.
    pub fn scalar() -> Self {
        Self {
            out_dim: 1,
            apply: Box::new(|x, y, out| out[0] = out[0] + x[0] * y[0]),
        }
    }

    /// Scalar on the left times a vector of length `dim` on the right.
    pub fn scalar_vector(dim: usize) -> Self {
        Self {
            out_dim: dim,
            apply: Box::new(|x, y, out| {
                for (o, v) in out.iter_mut().zip(y) {
                    *o = *o + x[0] * *v;
                }
            }),
        }
    }

    /// Euclidean pairing of two vectors.
    pub fn dot() -> Self {
        Self {
            out_dim: 1,
            apply: Box::new(|x, y, out| {
                out[0] = x.iter().zip(y).fold(out[0], |acc, (a, b)| acc + *a * *b);
            }),
        }
    }
}

/// Cauchy product in both the Taylor and the Fourier index, truncated at the smaller order.
pub fn ft_convolve<R: Real>(
    a: &FourierTaylorSeries<R>,
    b: &FourierTaylorSeries<R>,
    rule: &BilinearRule<'_, R>,
) -> FourierTaylorSeries<R> {
    assert_eq!(a.rank, b.rank, "incompatible ranks");
    let max_order = a.max_order().min(b.max_order());
    let mut out = FourierTaylorSeries::new(a.rank, rule.out_dim, max_order);
    let mut nu = lattice::zero(a.rank);
    for k in 0..=max_order {
        let target = &mut out.orders[k];
        for k1 in 0..=k {
            for (nu1, x) in &a.orders[k1] {
                for (nu2, y) in &b.orders[k - k1] {
                    for ((n, p), q) in nu.iter_mut().zip(nu1).zip(nu2) {
                        *n = p + q;
                    }
                    let slot = match target.get_mut(nu.as_slice()) {
                        Some(slot) => slot,
                        None => target
                            .entry(nu.clone())
                            .or_insert_with(|| vec![real::czero(); rule.out_dim]),
                    };
                    (rule.apply)(x, y, slot);
                }
            }
        }
        target.retain(|_, v| v.iter().any(|z| !(z.re.is_zero() && z.im.is_zero())));
    }
    out
}

/// `Σ_k ε^k Σ_ν c_{k,ν} e^{iν·ψ}`
pub fn ft_eval<R: Real>(series: &FourierTaylorSeries<R>, psi: &[R], eps: C<R>) -> Vec<C<R>> {
    let mut out = vec![real::czero(); series.dim];
    let mut power = C::new(R::one(), R::zero());
    for order in &series.orders {
        let mut level = vec![real::czero::<R>(); series.dim];
        for (nu, v) in order {
            let phase = real::cis(lattice::dot(psi, nu));
            for (l, z) in level.iter_mut().zip(v) {
                *l = *l + *z * phase;
            }
        }
        for (o, l) in out.iter_mut().zip(level) {
            *o = *o + l * power;
        }
        power = power * eps;
    }
    out
}

/// Derivative along the linear flow: multiplies `c_{k,ν}` by `i ω·ν`.
pub fn ft_derivative_along_flow<R: Real>(series: &FourierTaylorSeries<R>, omega: &[R]) -> FourierTaylorSeries<R> {
    let mut out = FourierTaylorSeries::new(series.rank, series.dim, series.max_order());
    for (k, order) in series.orders.iter().enumerate() {
        for (nu, v) in order {
            let factor = C::new(R::zero(), lattice::dot(omega, nu));
            out.set(k, nu.clone(), v.iter().map(|z| *z * factor).collect());
        }
    }
    out
}

/// One record per nonzero component: `k ν_1 .. ν_r component re im`, lexicographically sorted.
pub fn dump<R: Real>(series: &FourierTaylorSeries<R>) -> String {
    let mut out = String::new();
    for (k, order) in series.orders.iter().enumerate() {
        for (nu, v) in order {
            for (j, z) in v.iter().enumerate() {
                if z.re.is_zero() && z.im.is_zero() {
                    continue;
                }
                let modes: Vec<String> = nu.iter().map(i32::to_string).collect();
                let _ = writeln!(out, "{k} {} {j} {} {}", modes.join(" "), z.re, z.im);
            }
        }
    }
    out
}

/// Projects the α block (first r components) on `i ν₀` or the β block on `i μ`.
fn projection<R: Real>(
    h: &FourierTaylorSeries<R>,
    offset: usize,
    direction: &[i32],
    max_order: usize,
) -> FourierTaylorSeries<R> {
    let mut out = FourierTaylorSeries::new(h.rank, 1, max_order);
    if lattice::is_zero(direction) {
        return out;
    }
    let dir: Vec<R> = direction.iter().map(|&x| R::from_i32(x).expect("small")).collect();
    for k in 0..=max_order.min(h.max_order()) {
        for (nu, v) in &h.orders[k] {
            let s = dir
                .iter()
                .enumerate()
                .fold(real::czero::<R>(), |acc, (j, w)| acc + v[offset + j] * *w);
            out.set(k, nu.clone(), vec![real::times_i(s)]);
        }
    }
    out
}

/// `Σ_{m ≥ 0} U^m / m!` for a scalar series without order-0 part.
fn exp_series<R: Real>(u: &FourierTaylorSeries<R>) -> FourierTaylorSeries<R> {
    let max_order = u.max_order();
    let mut total = FourierTaylorSeries::unit(u.rank, max_order);
    if u.is_empty() {
        return total;
    }
    let rule = BilinearRule::scalar();
    let mut power = FourierTaylorSeries::unit(u.rank, max_order);
    for m in 1..=max_order {
        power = ft_convolve(&power, u, &rule).scaled(C::new(R::one() / R::from_usize(m).expect("small"), R::zero()));
        total = ft_add(&total, &power);
    }
    total
}

/// Force `(∂_α f, ∂_β f)(ψ + a(ψ), β₀ + b(ψ))` through order `max_order - 1`, where
/// `h = (a, b)` is a joint series of dimension `r + s` without order-0 part.
///
/// Each support term contributes `c e^{iμ·β₀} (iν₀, iμ) e^{iν₀·ψ} Σ_{p,q} (iν₀·a)^p (iμ·b)^q / (p! q!)`;
/// the two exponential factors are memoized per α-mode and per β-mode.
pub fn compose_force<R: Real>(
    model: &ModelNumbers<R>,
    h: &FourierTaylorSeries<R>,
    max_order: usize,
) -> FourierTaylorSeries<R> {
    let (r, d) = (model.r, model.d());
    assert_eq!(h.dim, d, "h must be a joint (a, b) series");
    assert!(max_order >= 1);
    let out_order = max_order - 1;
    let mut force = FourierTaylorSeries::new(r, d, out_order);
    let mut beta_cache: HashMap<Mode, FourierTaylorSeries<R>> = HashMap::new();
    let joint = BilinearRule::scalar();
    for (nu0, range) in &model.groups {
        let exp_alpha = exp_series(&projection(h, 0, nu0, out_order));
        for term in &model.terms[range.clone()] {
            let exp_beta = beta_cache
                .entry(term.mu.clone())
                .or_insert_with(|| exp_series(&projection(h, r, &term.mu, out_order)));
            let e = ft_convolve(&exp_alpha, exp_beta, &joint);
            let direction: Vec<C<R>> = nu0
                .iter()
                .chain(&term.mu)
                .map(|&x| C::new(R::zero(), R::from_i32(x).expect("small")))
                .collect();
            let mut value = vec![real::czero(); d];
            for (k, order) in e.orders.iter().enumerate() {
                for (nu, z) in order {
                    let scalar = z[0] * term.weight;
                    for (v, dir) in value.iter_mut().zip(&direction) {
                        *v = scalar * *dir;
                    }
                    force.add_to(k, &lattice::add(nu, nu0), &value);
                }
            }
        }
    }
    for order in &mut force.orders {
        order.retain(|_, v| v.iter().any(|z| !(z.re.is_zero() && z.im.is_zero())));
    }
    force
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Model;
    use proptest::prelude::*;

    type S = FourierTaylorSeries<f64>;

    fn cz(re: f64, im: f64) -> C<f64> {
        C::new(re, im)
    }

    fn scalar(entries: &[(usize, [i32; 2], f64, f64)], max_order: usize) -> S {
        let mut s = S::new(2, 1, max_order);
        for &(k, nu, re, im) in entries {
            s.add_to(k, &nu, &[cz(re, im)]);
        }
        s
    }

    #[test]
    fn unit_is_identity_for_products() {
        let a = scalar(&[(1, [1, 0], 0.5, 0.0), (2, [0, -1], 0.0, 2.0)], 3);
        let one = S::unit(2, 3);
        assert_eq!(ft_convolve(&one, &a, &BilinearRule::scalar()), a);
    }

    #[test]
    fn truncation_takes_smaller_order() {
        let a = scalar(&[(1, [1, 0], 1.0, 0.0)], 4);
        let b = scalar(&[(1, [0, 1], 1.0, 0.0)], 2);
        let p = ft_convolve(&a, &b, &BilinearRule::scalar());
        assert_eq!(p.max_order(), 2);
        assert_eq!(p.get(2, &[1, 1]), Some(&[cz(1.0, 0.0)][..]));
        assert_eq!(ft_add(&a, &b).max_order(), 2);
    }

    #[test]
    fn cancellation_removes_entries() {
        let a = scalar(&[(1, [1, 0], 1.0, 0.0)], 2);
        let b = scalar(&[(1, [1, 0], -1.0, 0.0)], 2);
        assert!(ft_add(&a, &b).is_empty());
    }

    #[test]
    fn flow_derivative_and_eval() {
        let a = scalar(&[(1, [1, 0], 1.0, 0.0), (1, [-1, 0], 1.0, 0.0)], 1);
        // a = ε · 2cos ψ₁
        let v = ft_eval(&a, &[0.3, 0.0], cz(0.5, 0.0));
        assert!((v[0].re - 0.3f64.cos()).abs() < 1e-15);
        let da = ft_derivative_along_flow(&a, &[2.0, 7.0]);
        assert_eq!(da.get(1, &[1, 0]), Some(&[cz(0.0, 2.0)][..]));
        assert_eq!(da.get(1, &[-1, 0]), Some(&[cz(0.0, -2.0)][..]));
    }

    #[test]
    fn dump_is_sorted_and_roundtrips() {
        let a = scalar(
            &[(2, [0, 1], 0.1, 0.0), (1, [1, -1], 0.0, -0.25), (1, [-1, 0], 1.0, 0.0)],
            2,
        );
        let text = dump(&a);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines, vec!["1 -1 0 0 1 0", "1 1 -1 0 0 -0.25", "2 0 1 0 0.1 0"]);
    }

    #[test]
    fn force_at_order_zero_is_gradient_of_modes() {
        let m = Model::ref1();
        let nums = m.numbers::<f64>();
        let h = FourierTaylorSeries::new(2, 3, 1);
        let force = compose_force(&nums, &h, 1);
        // ∂_α f at order 0: (iν) f_ν for the α-dependent modes
        assert_eq!(
            force.get(0, &[1, 0]),
            Some(&[cz(0.0, 0.5), cz(0.0, 0.0), cz(0.0, 0.0)][..])
        );
        assert_eq!(
            force.get(0, &[1, 1]),
            Some(&[cz(0.0, 0.5), cz(0.0, 0.5), cz(0.0, 0.5)][..])
        );
        // the zero mode gradient vanishes at the equilibrium
        assert!(force.get(0, &[0, 0]).is_none());
    }

    /// Direct evaluation of `∇f(ψ + a, β₀ + b)` from the trigonometric polynomial.
    fn direct_force(m: &Model, a: &[f64], b: &[f64], psi: &[f64]) -> Vec<C<f64>> {
        let mut out = vec![cz(0.0, 0.0); 3];
        for t in m.perturbation().terms() {
            let angle: f64 =
                t.nu.iter()
                    .zip(psi.iter().zip(a))
                    .map(|(&n, (p, x))| f64::from(n) * (p + x))
                    .sum::<f64>()
                    + t.mu.iter().zip(b).map(|(&n, x)| f64::from(n) * x).sum::<f64>();
            let val = t.coeff * C::cis(angle);
            for (j, k) in t.nu.iter().chain(&t.mu).enumerate() {
                out[j] += val * cz(0.0, f64::from(*k));
            }
        }
        out
    }

    #[test]
    fn force_matches_direct_evaluation_for_small_eps() {
        let m = Model::builtin("ref1-odd").unwrap();
        let nums = m.numbers::<f64>();
        let mut h = FourierTaylorSeries::new(2, 3, 9);
        h.add_to(1, &[1, 0], &[cz(0.1, 0.2), cz(-0.3, 0.0), cz(0.05, 0.1)]);
        h.add_to(1, &[-1, 0], &[cz(0.1, -0.2), cz(-0.3, 0.0), cz(0.05, -0.1)]);
        h.add_to(2, &[0, 1], &[cz(0.0, 0.4), cz(0.2, 0.0), cz(0.0, -0.3)]);
        h.add_to(2, &[0, -1], &[cz(0.0, -0.4), cz(0.2, 0.0), cz(0.0, 0.3)]);
        let force = compose_force(&nums, &h, 9);
        let eps = 0.05;
        let psi = [0.7, -1.3];
        let hv = ft_eval(&h, &psi, cz(eps, 0.0));
        let a: Vec<f64> = hv[..2].iter().map(|z| z.re).collect();
        let b: Vec<f64> = hv[2..].iter().map(|z| z.re).collect();
        let exact = direct_force(&m, &a, &b, &psi);
        let series = ft_eval(&force, &psi, cz(eps, 0.0));
        for (x, y) in exact.iter().zip(&series) {
            assert!((x - y).norm() < 1e-10, "{x} vs {y}");
        }
        force.assert_support_bound(2, 1);
    }

    proptest! {
        #[test]
        fn convolution_commutes_and_associates(
            coeffs in proptest::collection::vec((0usize..3, -2i32..3, -2i32..3, -1.0f64..1.0, -1.0f64..1.0), 1..6),
            coeffs2 in proptest::collection::vec((0usize..3, -2i32..3, -2i32..3, -1.0f64..1.0, -1.0f64..1.0), 1..6),
            coeffs3 in proptest::collection::vec((0usize..3, -2i32..3, -2i32..3, -1.0f64..1.0, -1.0f64..1.0), 1..6),
        ) {
            let build = |c: &Vec<(usize, i32, i32, f64, f64)>| {
                let entries: Vec<(usize, [i32; 2], f64, f64)> = c.iter().map(|&(k, x, y, re, im)| (k, [x, y], re, im)).collect();
                scalar(&entries, 3)
            };
            let (a, b, c) = (build(&coeffs), build(&coeffs2), build(&coeffs3));
            let rule = BilinearRule::scalar();
            let ab = ft_convolve(&a, &b, &rule);
            let ba = ft_convolve(&b, &a, &rule);
            let abc = ft_convolve(&ab, &c, &rule);
            let a_bc = ft_convolve(&a, &ft_convolve(&b, &c, &rule), &rule);
            for k in 0..=3 {
                for (nu, v) in ab.order(k) {
                    prop_assert!((v[0] - ba.coeff(k, nu)[0]).norm() < 1e-12);
                }
                prop_assert_eq!(ab.order(k).len(), ba.order(k).len());
                for (nu, v) in abc.order(k) {
                    prop_assert!((v[0] - a_bc.coeff(k, nu)[0]).norm() < 1e-12);
                }
                for (nu, v) in a_bc.order(k) {
                    prop_assert!((v[0] - abc.coeff(k, nu)[0]).norm() < 1e-12);
                }
            }
        }
    }
}
