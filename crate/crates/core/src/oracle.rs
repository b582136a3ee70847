//! Order-by-order Lindstedt recursion solving `(ω·ν)² h^{(k)}_ν = [∂f]^{(k-1)}_ν`.
//!
//! The zero-mode β coefficient of order `k-1` is fixed at step `k`, by requiring the
//! β component of the order-`k-1` force to vanish at `ν = 0`.

use thiserror::Error;

use crate::lattice::{self, Mode};
use crate::model::{Model, ModelNumbers};
use crate::real::{self, Real, C};
use crate::series::{compose_force, FourierTaylorSeries};

#[derive(Debug, Error)]
pub enum OracleError {
    #[error(
        "compatibility condition fails at order {order}: zero-mode {block} force {value:.3e} exceeds tolerance {tolerance:.3e}"
    )]
    Compatibility {
        order: usize,
        block: &'static str,
        value: f64,
        tolerance: f64,
    },
    #[error("small divisor vanishes at nu = {nu:?}")]
    Resonance { nu: Mode },
}

/// Formal solution `h = (a, b)` through order `K`; `counterterms[k] = b^{(k)}_0`.
#[derive(Debug, Clone)]
pub struct FormalSolution<R: Real> {
    pub h: FourierTaylorSeries<R>,
    pub counterterms: Vec<Vec<C<R>>>,
    pub order: usize,
    pub r: usize,
}

impl<R: Real> FormalSolution<R> {
    /// `b^{(K)}_0` needs the order-`K+1` equation and is left at zero.
    pub fn top_counterterm_determined(&self) -> bool {
        false
    }

    pub fn alpha(&self, k: usize, nu: &[i32]) -> Vec<C<R>> {
        self.h.coeff(k, nu)[..self.r].to_vec()
    }

    pub fn beta(&self, k: usize, nu: &[i32]) -> Vec<C<R>> {
        self.h.coeff(k, nu)[self.r..].to_vec()
    }
}

/// Relative tolerance used when none is supplied.
pub const DEFAULT_TOLERANCE: f64 = 1e-10;

pub fn solve_to_order<R: Real>(
    model: &Model,
    order: usize,
    tolerance: Option<f64>,
) -> Result<FormalSolution<R>, OracleError> {
    let nums = model.numbers::<R>();
    let (r, d) = (nums.r, nums.d());
    let tol = tolerance.unwrap_or(DEFAULT_TOLERANCE);
    let zero = lattice::zero(r);
    let mut h = FourierTaylorSeries::<R>::new(r, d, order);
    let mut counterterms = vec![vec![real::czero::<R>(); nums.s]; order + 1];
    for k in 1..=order {
        let force = compose_force(&nums, &h, k);
        let mut current = force.order(k - 1).clone();
        let scale = force.max_abs(k - 1).to_f64_lossy().max(f64::MIN_POSITIVE);
        let tolerance = tol * scale;
        let at_zero = current.get(&zero).cloned().unwrap_or_else(|| vec![real::czero(); d]);
        let alpha_defect = sup(&at_zero[..r]);
        if alpha_defect > tolerance {
            return Err(OracleError::Compatibility {
                order: k - 1,
                block: "alpha",
                value: alpha_defect,
                tolerance,
            });
        }
        if k >= 2 {
            let counter = nums.counterterm(&at_zero[r..]);
            add_counterterm_force(&nums, &counter, &mut current);
            let mut joint = vec![real::czero(); r];
            joint.extend_from_slice(&counter);
            h.set(k - 1, zero.clone(), joint);
            counterterms[k - 1] = counter;
        } else {
            let beta_defect = sup(&at_zero[r..]);
            if beta_defect > tolerance {
                return Err(OracleError::Compatibility {
                    order: 0,
                    block: "beta",
                    value: beta_defect,
                    tolerance,
                });
            }
        }
        for (nu, value) in current {
            if lattice::is_zero(&nu) {
                continue;
            }
            let divisor = nums.divisor(&nu);
            if divisor.is_zero() {
                return Err(OracleError::Resonance { nu });
            }
            let inverse = (divisor * divisor).recip();
            h.set(k, nu, value.iter().map(|z| *z * inverse).collect());
        }
    }
    h.assert_support_bound(model.perturbation().mode_radius(), 0);
    Ok(FormalSolution {
        h,
        counterterms,
        order,
        r,
    })
}

/// Linear response of the force to a zero-mode β shift `b0`:
/// `Σ c e^{iμ·β₀} (iμ·b0) (iν₀, iμ)` at mode `ν₀`.
fn add_counterterm_force<R: Real>(
    nums: &ModelNumbers<R>,
    b0: &[C<R>],
    target: &mut std::collections::BTreeMap<Mode, Vec<C<R>>>,
) {
    let d = nums.d();
    for term in &nums.terms {
        let pairing = term.mu.iter().zip(b0).fold(real::czero::<R>(), |acc, (&m, b)| {
            acc + *b * R::from_i32(m).expect("small")
        });
        if pairing.re.is_zero() && pairing.im.is_zero() {
            continue;
        }
        let scalar = real::times_i(pairing) * term.weight;
        let slot = target.entry(term.nu.clone()).or_insert_with(|| vec![real::czero(); d]);
        for (j, k) in term.nu.iter().chain(&term.mu).enumerate() {
            slot[j] = slot[j] + real::times_i(scalar * R::from_i32(*k).expect("small"));
        }
    }
}

fn sup<R: Real>(v: &[C<R>]) -> f64 {
    v.iter().map(|z| real::cabs(*z).to_f64_lossy()).fold(0.0, f64::max)
}

/// Residual of the order-`k` equation, absolute and relative to the largest force coefficient.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Residual {
    pub absolute: f64,
    pub relative: f64,
}

pub fn residual_norm<R: Real>(model: &Model, sol: &FormalSolution<R>, k: usize) -> Residual {
    assert!((1..=sol.order).contains(&k));
    let nums = model.numbers::<R>();
    let force = compose_force(&nums, &sol.h.truncated(k), k);
    let forcing = force.order(k - 1);
    let mut modes: Vec<&Mode> = forcing.keys().chain(sol.h.order(k).keys()).collect();
    modes.sort();
    modes.dedup();
    let mut absolute = 0.0f64;
    for nu in modes {
        let divisor = nums.divisor(nu);
        let lhs = sol.h.coeff(k, nu);
        let rhs = force.coeff(k - 1, nu);
        let defect: Vec<C<R>> = if lattice::is_zero(nu) {
            // the order-k zero mode of b is tied to the next order; only the force enters
            rhs.iter().map(|z| -*z).collect()
        } else {
            lhs.iter()
                .zip(&rhs)
                .map(|(x, y)| *x * (divisor * divisor) - *y)
                .collect()
        };
        absolute = absolute.max(sup(&defect));
    }
    let scale = force.max_abs(k - 1).to_f64_lossy().max(f64::MIN_POSITIVE);
    Residual {
        absolute,
        relative: absolute / scale,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::real::BigFloat;
    use num_complex::Complex64;

    const PHI: f64 = 1.618_033_988_749_895;

    #[test]
    fn first_order_hand_values() {
        let sol = solve_to_order::<f64>(&Model::ref1(), 1, None).unwrap();
        // a^(1)_(1,0) = (i/2, 0), b^(1)_(1,0) = 0
        let a10 = sol.alpha(1, &[1, 0]);
        assert!((a10[0] - Complex64::new(0.0, 0.5)).norm() < 1e-15);
        assert_eq!(a10[1], Complex64::new(0.0, 0.0));
        // h^(1)_(1,1) = i/(2φ²) (1, 1, 1)
        let expect = Complex64::new(0.0, 0.5 / (PHI * PHI));
        for z in sol.h.coeff(1, &[1, 1]) {
            assert!((z - expect).norm() < 1e-15, "{z}");
        }
        assert_eq!(sol.h.order(1).len(), 4);
    }

    #[test]
    fn parity_even_model_has_vanishing_counterterms() {
        let sol = solve_to_order::<f64>(&Model::ref1(), 5, None).unwrap();
        for b in &sol.counterterms {
            assert!(b[0].norm() < 1e-14, "{}", b[0]);
        }
        for k in 1..=5 {
            for v in sol.h.order(k).values() {
                for z in v {
                    assert!(z.re.abs() < 1e-13 * z.norm().max(1.0));
                }
            }
        }
    }

    #[test]
    fn odd_model_first_counterterm_matches_hand_value() {
        // At order 1 the zero-mode β force is Σ over ±ν of (iμ)(iν·a + iμ·b) c_ν e^{...}.
        // Independent evaluation from the first-order coefficients.
        let m = Model::builtin("ref1-odd").unwrap();
        let sol = solve_to_order::<f64>(&m, 2, None).unwrap();
        let mut g = Complex64::new(0.0, 0.0);
        for t in m.perturbation().terms() {
            if lattice::is_zero(&t.nu) {
                continue;
            }
            let neg = lattice::neg(&t.nu);
            let h = sol.h.coeff(1, &neg);
            let mut pairing = Complex64::new(0.0, 0.0);
            for (j, k) in t.nu.iter().chain(&t.mu).enumerate() {
                pairing += Complex64::new(0.0, f64::from(*k)) * h[j];
            }
            g += t.coeff * pairing * Complex64::new(0.0, f64::from(t.mu[0]));
        }
        // b = -H^{-1} g with H = -1
        assert!((sol.counterterms[1][0] - g).norm() < 1e-14);
        assert!(g.norm() > 1e-3);
        assert!(g.im.abs() < 1e-15);
    }

    #[test]
    fn residuals_vanish_through_order_five() {
        for name in ["ref1", "ref1-odd"] {
            let m = Model::builtin(name).unwrap();
            let sol = solve_to_order::<f64>(&m, 5, None).unwrap();
            for k in 1..=5 {
                let res = residual_norm(&m, &sol, k);
                assert!(res.relative <= 1e-12, "{name} k={k} {res:?}");
            }
        }
    }

    #[test]
    fn extended_precision_agrees_with_double() {
        let m = Model::builtin("ref1-odd").unwrap();
        let lo = solve_to_order::<f64>(&m, 3, None).unwrap();
        let hi = solve_to_order::<BigFloat>(&m, 3, None).unwrap();
        for k in 1..=3 {
            for (nu, v) in lo.h.order(k) {
                let w = hi.h.coeff(k, nu);
                for (x, y) in v.iter().zip(w) {
                    assert!((x - real::to_c64(y)).norm() < 1e-13 * x.norm().max(1.0));
                }
            }
        }
        let res = residual_norm(&m, &hi, 3);
        assert!(res.relative < 1e-30, "{res:?}");
    }

    #[test]
    fn resonant_frequency_is_reported() {
        let text =
            include_str!("../models/ref1.toml").replace("\"0.6180339887498948482045868343656381177203\"", "\"1\"");
        let m = Model::from_toml_str(&text).unwrap();
        assert!(matches!(
            solve_to_order::<f64>(&m, 3, None),
            Err(OracleError::Resonance { .. })
        ));
    }
}
