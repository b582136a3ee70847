//! Dyadic scale thresholds `γ_n ∈ [2^{n-1}, 2^n]` kept away from every small divisor
//! `|ω₀·ν|` of a bounded mode ball, and the scale labels they induce.

use std::ops::RangeInclusive;

use thiserror::Error;

use crate::lattice::{self, Mode};
use crate::model::Frequency;

/// Deepest admissible `n_min`.
pub const SCALE_FLOOR_LIMIT: i32 = -12;
/// Candidate thresholds tried per dyadic interval.
pub const GRID_SIZE: usize = 1024;
/// Margins above this value are not resolved further.
const MARGIN_CAP: f64 = 4.0;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum ScaleError {
    #[error("n_min = {n_min} outside the supported range [{limit}, 0]")]
    InvalidFloor { n_min: i32, limit: i32 },
    #[error("no threshold at scale {n} keeps the required separation; blocking modes {blocking:?}")]
    SeparationUnachievable { n: i32, blocking: Vec<Mode> },
    #[error("divisor {value:.6e} lies below the deepest threshold {floor:.6e}; lower n_min")]
    OutOfRange { value: f64, floor: f64 },
}

/// Result of the exhaustive separation check.
#[derive(Debug, Clone, PartialEq)]
pub struct ScaleCertificate {
    /// Number of (mode, threshold) pairs checked.
    pub checked: usize,
    /// `min ||ω₀·ν| - γ_p| / 2^{n+1}` over all constrained pairs; at least 1 certifies.
    pub worst_ratio: f64,
    pub worst_mode: Option<Mode>,
}

impl ScaleCertificate {
    pub fn holds(&self) -> bool {
        self.worst_ratio >= 1.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScaleSequence {
    n_min: i32,
    tau: f64,
    rescaling: f64,
    /// `gammas[i] = γ_{n_min + i}`
    gammas: Vec<f64>,
    pub certificate: ScaleCertificate,
}

/// `2^{-(n+3)/τ}`: the mode-mass bound attached to scale `n`.
pub fn mass_bound(n: i32, tau: f64) -> f64 {
    (-(f64::from(n) + 3.0) / tau).exp2()
}

fn ball_radius(n: i32, tau: f64) -> u32 {
    // tolerance absorbs rounding when the bound is an exact integer
    (mass_bound(n, tau) * (1.0 + 1e-12)).floor() as u32
}

struct Divisor {
    value: f64,
    /// Largest `n` whose mass bound admits the mode.
    strongest: i32,
    mode: Mode,
}

fn divisors(freq: &Frequency, n_min: i32) -> Vec<Divisor> {
    let tau = freq.tau();
    let mut out: Vec<Divisor> = lattice::half_ball(freq.rank(), ball_radius(n_min, tau))
        .into_iter()
        .map(|mode| {
            let l1 = lattice::l1(&mode);
            let strongest = (n_min..=0)
                .rev()
                .find(|&n| l1 <= ball_radius(n, tau))
                .expect("mode lies in the n_min ball");
            Divisor {
                value: freq.rescaled_divisor(&mode),
                strongest,
                mode,
            }
        })
        .collect();
    out.sort_by(|a, b| a.value.total_cmp(&b.value));
    out
}

/// Separation ratio of `gamma` against one divisor when checking threshold `p`;
/// the largest admissible `n ≤ p` gives the binding constraint.
fn ratio(d: &Divisor, gamma: f64, p: i32) -> f64 {
    let n = d.strongest.min(p);
    (d.value - gamma).abs() / f64::from(n + 1).exp2()
}

pub fn build_scale_sequence(freq: &Frequency, n_min: i32) -> Result<ScaleSequence, ScaleError> {
    if !(SCALE_FLOOR_LIMIT..=0).contains(&n_min) {
        return Err(ScaleError::InvalidFloor {
            n_min,
            limit: SCALE_FLOOR_LIMIT,
        });
    }
    let all = divisors(freq, n_min);
    let mut gammas = vec![0.0; (1 - n_min) as usize];
    for p in (n_min..=0).rev() {
        let (lo, hi) = (f64::from(p - 1).exp2(), f64::from(p).exp2());
        let reach = MARGIN_CAP * f64::from(p + 1).exp2();
        let start = all.partition_point(|d| d.value < lo - reach);
        let end = all.partition_point(|d| d.value <= hi + reach);
        let relevant = &all[start..end];
        let margin = |gamma: f64| relevant.iter().map(|d| ratio(d, gamma, p)).fold(MARGIN_CAP, f64::min);
        let mid = 0.5 * (lo + hi);
        let gamma = if relevant.is_empty() {
            mid
        } else {
            let mut best = (f64::NEG_INFINITY, mid);
            for j in 0..GRID_SIZE {
                let g = lo + (hi - lo) * (j as f64 + 0.5) / GRID_SIZE as f64;
                let m = margin(g);
                if m > best.0 || (m == best.0 && (g - mid).abs() < (best.1 - mid).abs()) {
                    best = (m, g);
                }
            }
            if best.0 < 1.0 {
                let blocking = relevant
                    .iter()
                    .filter(|d| ratio(d, best.1, p) < 1.0)
                    .map(|d| d.mode.clone())
                    .collect();
                return Err(ScaleError::SeparationUnachievable { n: p, blocking });
            }
            best.1
        };
        gammas[(p - n_min) as usize] = gamma;
    }
    let mut seq = ScaleSequence {
        n_min,
        tau: freq.tau(),
        rescaling: freq.rescaling(),
        gammas,
        certificate: ScaleCertificate {
            checked: 0,
            worst_ratio: f64::INFINITY,
            worst_mode: None,
        },
    };
    seq.certificate = certify(&seq, &all);
    debug_assert!(seq.certificate.holds());
    Ok(seq)
}

fn certify(seq: &ScaleSequence, all: &[Divisor]) -> ScaleCertificate {
    let mut cert = ScaleCertificate {
        checked: 0,
        worst_ratio: f64::INFINITY,
        worst_mode: None,
    };
    for p in seq.n_min..=0 {
        let gamma = seq.gamma(p);
        for d in all {
            // every n in [n_min, min(p, strongest)] is a separate constraint
            for n in seq.n_min..=d.strongest.min(p) {
                cert.checked += 1;
                let r = (d.value - gamma).abs() / f64::from(n + 1).exp2();
                if r < cert.worst_ratio {
                    cert.worst_ratio = r;
                    cert.worst_mode = Some(d.mode.clone());
                }
            }
        }
    }
    cert
}

impl ScaleSequence {
    pub fn n_min(&self) -> i32 {
        self.n_min
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Factor taking `ω·ν` to `ω₀·ν`.
    pub fn rescaling(&self) -> f64 {
        self.rescaling
    }

    pub fn gamma(&self, n: i32) -> f64 {
        assert!((self.n_min..=0).contains(&n), "no threshold at scale {n}");
        self.gammas[(n - self.n_min) as usize]
    }

    pub fn gammas(&self) -> &[f64] {
        &self.gammas
    }

    /// Scales of the windows `[γ_{n-1}, γ_n)`, with `n = 1` for `[γ₀, ∞)`.
    pub fn windows(&self) -> RangeInclusive<i32> {
        self.n_min + 1..=1
    }

    pub fn mass_bound(&self, n: i32) -> f64 {
        mass_bound(n, self.tau)
    }

    /// Scale of a rescaled divisor `v = |ω₀·ν|`.
    pub fn scale_of_value(&self, v: f64) -> Result<i32, ScaleError> {
        if v >= self.gamma(0) {
            return Ok(1);
        }
        (self.n_min + 1..=0)
            .rev()
            .find(|&n| v >= self.gamma(n - 1))
            .ok_or(ScaleError::OutOfRange {
                value: v,
                floor: self.gamma(self.n_min),
            })
    }

    /// Scale of the line momentum `ν`.
    pub fn scale_of_mode(&self, freq: &Frequency, nu: &[i32]) -> Result<i32, ScaleError> {
        self.scale_of_value(freq.rescaled_divisor(nu))
    }

    /// Window holding the argument `x = ω·ν` by modulus; values below the deepest
    /// threshold fall into the deepest window.
    pub fn window_of(&self, x: f64) -> i32 {
        self.scale_of_value(x.abs() * self.rescaling).unwrap_or(self.n_min + 1)
    }

    /// A representative argument `x = ω·ν` inside window `n`.
    pub fn sample_in_window(&self, n: i32) -> f64 {
        let v = if n >= 1 {
            2.0 * self.gamma(0)
        } else {
            0.5 * (self.gamma(n - 1) + self.gamma(n))
        };
        v / self.rescaling
    }
}
