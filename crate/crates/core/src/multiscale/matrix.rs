//! Self-energy matrices `M^[k](x;ε)`, dressed propagators and the limit `k → ∞`.

use dashmap::DashMap;
use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use thiserror::Error;

use super::catalog::{build_catalog, SelfEnergyCatalog};
use super::scales::{build_scale_sequence, ScaleError, ScaleSequence};
use super::selfenergy::{bare_propagator, blocks, self_energy_value, sup_norm, SelfEnergyError};
use crate::model::{Model, ModelNumbers};

/// Largest accepted ∞-norm condition number of `x² 𝟙 − M`.
pub const CONDITION_LIMIT: f64 = 1e12;

/// Default `x` range of the vanishing-order fits.
pub const BLOCK_FIT_RANGE: (f64, f64) = (1e-4, 1e-3);

/// Blocks below this fraction of the whole matrix count as vanishing identically.
const NEGLIGIBLE: f64 = 1e-14;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ResumError {
    #[error(transparent)]
    SelfEnergy(#[from] SelfEnergyError),
    #[error("x² - M is near singular at x = {x}, eps = {eps} (condition number {condition:e})")]
    NearSingular {
        x: Complex64,
        eps: Complex64,
        condition: f64,
    },
    #[error("no convergence at x = {x}, eps = {eps} after {iterations} levels (last change {last_delta:e}, last ratio {last_ratio})")]
    NoConvergence {
        x: Complex64,
        eps: Complex64,
        iterations: usize,
        last_delta: f64,
        last_ratio: f64,
    },
}

impl From<ScaleError> for ResumError {
    fn from(e: ScaleError) -> Self {
        Self::SelfEnergy(e.into())
    }
}

type MemoKey = (usize, [u64; 4]);

fn key(k: usize, x: Complex64, eps: Complex64) -> MemoKey {
    (k, [x.re.to_bits(), x.im.to_bits(), eps.re.to_bits(), eps.im.to_bits()])
}

/// Converged self-energy matrix with the contraction history.
#[derive(Debug, Clone, PartialEq)]
pub struct MLimit {
    pub matrix: DMatrix<Complex64>,
    pub iterations: usize,
    /// `‖M^[k] − M^[k−1]‖` for `k = 1, 2, …`.
    pub deltas: Vec<f64>,
    /// Successive ratios of nonzero `deltas`.
    pub ratios: Vec<f64>,
}

/// Log-log slopes of the blocks of `M^[k]` at small `x` and of the ββ constant term in `ε`.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockBoundReport {
    pub level: usize,
    pub eps: Complex64,
    pub xs: Vec<f64>,
    /// αα, αβ, βα and `M_ββ(x) − M_ββ(0)`; infinite when the block vanishes at working precision.
    pub block_slopes: [f64; 4],
    pub eps_values: [f64; 2],
    /// `‖M_ββ(0;ε) − ε ∂²_β f₀(β₀)‖` at `eps_values`.
    pub beta_offsets: [f64; 2],
    pub eps_slope: f64,
    /// Every block vanishes at `ε = 0`.
    pub zero_at_zero_eps: bool,
}

impl BlockBoundReport {
    pub const ORDERS: [f64; 4] = [2.0, 1.0, 1.0, 2.0];

    pub fn holds(&self, tol: f64) -> bool {
        self.block_slopes.iter().zip(Self::ORDERS).all(|(s, o)| *s >= o - tol)
            && self.eps_slope >= 2.0 - tol
            && self.zero_at_zero_eps
    }
}

/// Least-squares slope of `ln y` against `ln x`; infinite when every `y` is zero.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> f64 {
    if ys.iter().all(|&y| y == 0.0) {
        return f64::INFINITY;
    }
    let pts: Vec<(f64, f64)> = xs.iter().zip(ys).map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn invert_shifted(x: Complex64, eps: Complex64, m: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>, ResumError> {
    let d = m.nrows();
    let a = DMatrix::identity(d, d) * (x * x) - m;
    let singular = |condition| ResumError::NearSingular { x, eps, condition };
    let inverse = a.clone().try_inverse().ok_or_else(|| singular(f64::INFINITY))?;
    let condition = sup_norm(&a) * sup_norm(&inverse);
    if !condition.is_finite() || condition > CONDITION_LIMIT {
        return Err(singular(condition));
    }
    Ok(inverse)
}

/// Evaluates the self-energy hierarchy with a concurrent memo.
pub struct SelfEnergyEngine {
    nums: ModelNumbers<f64>,
    hessian: DMatrix<Complex64>,
    catalog: SelfEnergyCatalog,
    seq: ScaleSequence,
    memo: DashMap<MemoKey, DMatrix<Complex64>>,
}

impl SelfEnergyEngine {
    pub fn new(model: &Model, catalog: SelfEnergyCatalog, seq: ScaleSequence) -> Self {
        let (r, d) = (model.r(), model.d());
        let mut hessian = DMatrix::zeros(d, d);
        for (i, row) in model.equilibrium().hessian().iter().enumerate() {
            for (j, h) in row.iter().enumerate() {
                hessian[(r + i, r + j)] = Complex64::new(*h, 0.0);
            }
        }
        Self {
            nums: model.numbers(),
            hessian,
            catalog,
            seq,
            memo: DashMap::new(),
        }
    }

    /// Scale sequence down to `n_min` and the catalog up to `v_max` nodes.
    pub fn build(model: &Model, n_min: i32, v_max: usize) -> Result<Self, ScaleError> {
        let seq = build_scale_sequence(model.frequency(), n_min)?;
        let catalog = build_catalog(model, &seq, v_max);
        Ok(Self::new(model, catalog, seq))
    }

    pub fn catalog(&self) -> &SelfEnergyCatalog {
        &self.catalog
    }

    pub fn sequence(&self) -> &ScaleSequence {
        &self.seq
    }

    pub fn d(&self) -> usize {
        self.nums.d()
    }

    pub fn r(&self) -> usize {
        self.nums.r
    }

    /// `∂²_β f₀(β₀)` embedded in the ββ block.
    pub fn hessian(&self) -> &DMatrix<Complex64> {
        &self.hessian
    }

    pub fn cache_len(&self) -> usize {
        self.memo.len()
    }

    /// `M^[k](x;ε)`: renormalized skeletons admissible at the window of `|x|`, with
    /// internal lines dressed at level `k − 1`.
    pub fn m_level(&self, k: usize, x: Complex64, eps: Complex64) -> Result<DMatrix<Complex64>, ResumError> {
        let d = self.d();
        if k == 0 {
            return Ok(DMatrix::zeros(d, d));
        }
        let memo_key = key(k, x, eps);
        if let Some(m) = self.memo.get(&memo_key) {
            return Ok(m.clone());
        }
        let window = self.seq.window_of(x.norm());
        let skeletons: Vec<_> = self.catalog.admissible(window, true).map(|(_, s)| s).collect();
        let values: Vec<Result<DMatrix<Complex64>, ResumError>> = skeletons
            .par_iter()
            .map(|s| {
                self_energy_value(&self.nums, s, x, eps, &mut |arg| {
                    self.dressed_propagator(k - 1, arg, eps)
                })
            })
            .collect();
        let mut total = DMatrix::zeros(d, d);
        for v in values {
            total += v?;
        }
        self.memo.insert(memo_key, total.clone());
        Ok(total)
    }

    /// `Ḡ^[k](x;ε) = (x² 𝟙 − M^[k](x;ε))⁻¹`.
    pub fn dressed_propagator(&self, k: usize, x: Complex64, eps: Complex64) -> Result<DMatrix<Complex64>, ResumError> {
        let d = self.d();
        if k == 0 {
            return Ok(bare_propagator(d, x)?);
        }
        let m = self.m_level(k, x, eps)?;
        invert_shifted(x, eps, &m)
    }

    /// `(x² 𝟙 − M^[∞](x;ε))⁻¹` with the limit from [`Self::m_limit`].
    pub fn limit_propagator(
        &self,
        x: Complex64,
        eps: Complex64,
        tol: f64,
        k_max: usize,
    ) -> Result<DMatrix<Complex64>, ResumError> {
        let limit = self.m_limit(x, eps, tol, k_max)?;
        invert_shifted(x, eps, &limit.matrix)
    }

    pub fn clear_cache(&self) {
        self.memo.clear();
    }

    /// Iterates `M^[k]` until successive levels differ by at most `tol`.
    pub fn m_limit(&self, x: Complex64, eps: Complex64, tol: f64, k_max: usize) -> Result<MLimit, ResumError> {
        let mut previous = self.m_level(0, x, eps)?;
        let mut deltas = Vec::new();
        let mut ratios = Vec::new();
        for k in 1..=k_max {
            let current = self.m_level(k, x, eps)?;
            let delta = sup_norm(&(&current - &previous));
            if let Some(&last) = deltas.last() {
                if last > 0.0 {
                    ratios.push(delta / last);
                }
            }
            deltas.push(delta);
            if delta <= tol {
                return Ok(MLimit {
                    matrix: current,
                    iterations: k,
                    deltas,
                    ratios,
                });
            }
            previous = current;
        }
        Err(ResumError::NoConvergence {
            x,
            eps,
            iterations: k_max,
            last_delta: deltas.last().copied().unwrap_or(f64::NAN),
            last_ratio: ratios.last().copied().unwrap_or(f64::NAN),
        })
    }

    /// Vanishing orders of the blocks of `M^[k]` at `x → 0` over `x_range`, and the
    /// `ε`-order of `M_ββ(0;ε) − ε ∂²_β f₀(β₀)` between `ε` and `ε/10`.
    pub fn verify_block_bounds(
        &self,
        k: usize,
        eps: Complex64,
        x_range: (f64, f64),
    ) -> Result<BlockBoundReport, ResumError> {
        let r = self.r();
        let zero = Complex64::new(0.0, 0.0);
        let samples = 6;
        let xs: Vec<f64> = (0..samples)
            .map(|i| x_range.0 * (x_range.1 / x_range.0).powf(i as f64 / (samples - 1) as f64))
            .collect();
        let at_zero = blocks(&self.m_level(k, zero, eps)?, r);
        let mut norms: [Vec<f64>; 4] = std::array::from_fn(|_| Vec::with_capacity(samples));
        let mut whole = 0.0f64;
        for &x in &xs {
            let m = self.m_level(k, Complex64::new(x, 0.0), eps)?;
            whole = whole.max(sup_norm(&m));
            let [aa, ab, ba, bb] = blocks(&m, r);
            norms[0].push(sup_norm(&aa));
            norms[1].push(sup_norm(&ab));
            norms[2].push(sup_norm(&ba));
            norms[3].push(sup_norm(&(bb - &at_zero[3])));
        }
        let mut block_slopes = [0.0; 4];
        for (slope, ys) in block_slopes.iter_mut().zip(&norms) {
            let negligible = ys.iter().all(|&y| y <= NEGLIGIBLE * whole);
            *slope = if negligible {
                f64::INFINITY
            } else {
                log_log_slope(&xs, ys)
            };
        }
        let eps_values = [eps.norm(), 0.1 * eps.norm()];
        let mut beta_offsets = [0.0; 2];
        for (offset, scale) in beta_offsets.iter_mut().zip([1.0, 0.1]) {
            let e = eps * scale;
            let m = self.m_level(k, zero, e)?;
            let shifted = &m - &self.hessian * e;
            *offset = sup_norm(&blocks(&shifted, r)[3]);
        }
        let eps_slope = log_log_slope(&eps_values, &beta_offsets);
        let zero_at_zero_eps = xs
            .iter()
            .map(|&x| self.m_level(k, Complex64::new(x, 0.0), zero))
            .collect::<Result<Vec<_>, _>>()?
            .iter()
            .all(|m| sup_norm(m) == 0.0);
        Ok(BlockBoundReport {
            level: k,
            eps,
            xs,
            block_slopes,
            eps_values,
            beta_offsets,
            eps_slope,
            zero_at_zero_eps,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn engine(name: &str) -> SelfEnergyEngine {
        SelfEnergyEngine::build(&Model::builtin(name).unwrap(), -6, 3).unwrap()
    }

    fn relative(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
        let scale = sup_norm(a).max(sup_norm(b));
        if scale == 0.0 {
            0.0
        } else {
            sup_norm(&(a - b)) / scale
        }
    }

    #[test]
    fn level_zero_and_zero_eps() {
        let e = engine("ref1");
        let x = c(0.01, 0.0);
        assert_eq!(sup_norm(&e.m_level(0, x, c(0.1, 0.0)).unwrap()), 0.0);
        for k in 1..=3 {
            assert_eq!(sup_norm(&e.m_level(k, x, c(0.0, 0.0)).unwrap()), 0.0);
        }
        let g = e.dressed_propagator(0, c(0.5, 0.0), c(0.1, 0.0)).unwrap();
        assert_eq!(g, DMatrix::identity(3, 3) * c(4.0, 0.0));
        assert!(matches!(
            e.dressed_propagator(0, c(0.0, 0.0), c(0.1, 0.0)),
            Err(ResumError::SelfEnergy(SelfEnergyError::SingularPropagator { .. }))
        ));
    }

    #[test]
    fn beta_corner_leading_order() {
        let e = engine("ref1");
        let eps = 1e-3;
        let m = e.m_level(1, c(0.0, 0.0), c(eps, 0.0)).unwrap();
        assert!((m[(2, 2)] - c(-eps, 0.0)).norm() < 10.0 * eps * eps);
        // level one at large |x| keeps only the single-node graph
        let far = e.m_level(4, c(1.0, 0.0), c(eps, 0.0)).unwrap();
        assert!((far[(2, 2)] - c(-eps, 0.0)).norm() < 1e-18);
        assert!(sup_norm(&blocks(&far, 2)[0]) == 0.0);
    }

    #[test]
    fn transposition_and_self_adjointness() {
        for name in ["ref1", "ref1-odd"] {
            let e = engine(name);
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            for _ in 0..25 {
                let modulus = 10f64.powf(rng.gen_range(-3.5..0.5));
                let angle = rng.gen_range(-0.3..0.3);
                let x = Complex64::from_polar(modulus, angle);
                let eps = Complex64::from_polar(rng.gen_range(0.001..0.03), rng.gen_range(-1.0..1.0));
                let k = rng.gen_range(1..=3);
                let plus = e.m_level(k, x, eps).unwrap();
                let minus = e.m_level(k, -x, eps).unwrap();
                assert!(relative(&plus.transpose(), &minus) < 1e-10, "{name} {x} {eps}");
                let real = e.m_level(k, c(x.re, 0.0), c(eps.norm(), 0.0)).unwrap();
                assert!(relative(&real.adjoint(), &real) < 1e-10, "{name} {x}");
            }
        }
    }

    #[test]
    fn contraction_in_every_window() {
        let e = engine("ref1");
        let eps = c(0.01, 0.0);
        for n in e.sequence().windows() {
            let x = c(e.sequence().sample_in_window(n), 0.0);
            let limit = e.m_limit(x, eps, 1e-12, 8).unwrap();
            assert!(limit.iterations <= 8);
            assert!(limit.ratios.iter().all(|&q| q < 1.0), "{n} {:?}", limit.ratios);
            let g = e.dressed_propagator(limit.iterations, x, eps).unwrap();
            let identity = (&limit.matrix + g.try_inverse().unwrap()) / (x * x);
            assert!(relative(&identity, &DMatrix::identity(3, 3)) < 1e-12);
        }
    }

    #[test]
    fn contraction_golden() {
        let e = engine("ref1");
        let x = c(e.sequence().sample_in_window(-5), 0.0);
        let limit = e.m_limit(x, c(0.01, 0.0), 1e-12, 8).unwrap();
        assert_eq!(limit.iterations, 3);
        assert!((limit.ratios[0] - 2.863032583692816e-8).abs() < 1e-6 * 2.863032583692816e-8);
        let x = c(e.sequence().sample_in_window(-2), 0.0);
        let limit = e.m_limit(x, c(0.01, 0.0), 1e-12, 8).unwrap();
        assert_eq!((limit.iterations, limit.deltas[1]), (2, 0.0));
    }

    #[test]
    fn negative_eps_does_not_escape_errors() {
        let e = engine("ref1");
        let x = c(e.sequence().sample_in_window(-2), 0.0);
        // the fixed point exists or a structured error is reported
        match e.m_limit(x, c(-0.01, 0.0), 1e-12, 8) {
            Ok(limit) => assert!(limit.iterations <= 8),
            Err(ResumError::NearSingular { .. } | ResumError::NoConvergence { .. }) => {}
            Err(other) => panic!("{other}"),
        }
    }

    #[test]
    fn block_orders() {
        for name in ["ref1", "ref1-odd"] {
            let e = engine(name);
            let report = e.verify_block_bounds(3, c(0.01, 0.0), BLOCK_FIT_RANGE).unwrap();
            assert!(report.holds(0.05), "{name} {report:?}");
        }
    }

    #[test]
    fn slope_fit() {
        let xs = [1.0, 2.0, 4.0];
        assert!((log_log_slope(&xs, &[3.0, 12.0, 48.0]) - 2.0).abs() < 1e-12);
        assert_eq!(log_log_slope(&xs, &[0.0; 3]), f64::INFINITY);
    }
}
