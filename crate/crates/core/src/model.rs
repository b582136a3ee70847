//! Frequencies, trigonometric perturbations, hyperbolic equilibria and model loading.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::Deserialize;
use thiserror::Error;

use crate::lattice::{self, Mode};
use crate::real::{self, Real, C};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot read model file {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("malformed model document: {0}")]
    Parse(String),
    #[error("invalid number literal `{0}`")]
    Number(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("frequency data invalid: {0}")]
    Frequency(String),
    #[error("Diophantine exponent tau = {tau} must be at least r - 1 = {min}")]
    TauTooSmall { tau: f64, min: usize },
    #[error("reality constraint broken at nu = {nu:?}, mu = {mu:?}: {detail}")]
    Reality { nu: Mode, mu: Mode, detail: String },
    #[error("duplicate coefficient at nu = {nu:?}, mu = {mu:?}")]
    Duplicate { nu: Mode, mu: Mode },
    #[error("beta0 is not a critical point of the zero mode (gradient sup-norm {gradient:.3e})")]
    NotCritical { gradient: f64 },
    #[error("zero-mode hessian is degenerate (smallest |eigenvalue| {smallest:.3e})")]
    Degenerate { smallest: f64 },
    #[error("zero-mode hessian is indefinite (eigenvalues {eigenvalues:?})")]
    Indefinite { eigenvalues: Vec<f64> },
    #[error("unknown built-in model `{0}`")]
    UnknownBuiltin(String),
}

/// Rotation vector with its Diophantine constants. Entries keep their decimal
/// source text so they can be re-parsed at extended precision.
#[derive(Debug, Clone)]
pub struct Frequency {
    text: Vec<String>,
    omega: Vec<f64>,
    c0: f64,
    tau: f64,
}

impl Frequency {
    pub fn new(text: Vec<String>, c0: f64, tau: f64) -> Result<Self, ModelError> {
        if text.is_empty() {
            return Err(ModelError::Frequency("empty rotation vector".into()));
        }
        let omega = text
            .iter()
            .map(|t| f64::parse_decimal(t).ok_or_else(|| ModelError::Number(t.clone())))
            .collect::<Result<Vec<_>, _>>()?;
        if !(c0 > 0.0 && c0.is_finite()) {
            return Err(ModelError::Frequency(format!("C0 = {c0} must be positive")));
        }
        let min = text.len() - 1;
        if tau.is_nan() || tau < min as f64 {
            return Err(ModelError::TauTooSmall { tau, min });
        }
        Ok(Self { text, omega, c0, tau })
    }

    pub fn rank(&self) -> usize {
        self.omega.len()
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    pub fn c0(&self) -> f64 {
        self.c0
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn omega_as<R: Real>(&self) -> Vec<R> {
        self.text
            .iter()
            .map(|t| R::parse_decimal(t).expect("validated at construction"))
            .collect()
    }

    /// `ω·ν`
    pub fn dot(&self, nu: &[i32]) -> f64 {
        lattice::dot_f64(&self.omega, nu)
    }

    /// Factor `2^τ / C0` taking `ω` to the rescaled vector used for scale labels.
    pub fn rescaling(&self) -> f64 {
        self.tau.exp2() / self.c0
    }

    /// `|ω₀·ν|` with `ω₀ = (2^τ/C0) ω`
    pub fn rescaled_divisor(&self, nu: &[i32]) -> f64 {
        (self.rescaling() * self.dot(nu)).abs()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiophantineMargin {
    /// `min |ω·ν| |ν|₁^τ / C0` over the window; at least 1 certifies the inequality there.
    pub margin: f64,
    pub worst_mode: Option<Mode>,
}

/// Exhaustive check of `|ω·ν| ≥ C0 |ν|^{-τ}` over `0 < |ν|₁ ≤ mode_bound`.
pub fn diophantine_margin(freq: &Frequency, mode_bound: u32) -> DiophantineMargin {
    let mut best = DiophantineMargin {
        margin: f64::INFINITY,
        worst_mode: None,
    };
    for nu in lattice::half_ball(freq.rank(), mode_bound) {
        let norm = f64::from(lattice::l1(&nu));
        let value = freq.dot(&nu).abs() * norm.powf(freq.tau) / freq.c0;
        if value < best.margin {
            best = DiophantineMargin {
                margin: value,
                worst_mode: Some(nu),
            };
        }
    }
    best
}

/// One Fourier coefficient `c_{ν,μ}` of `f(α, β) = Σ c_{ν,μ} e^{i(ν·α + μ·β)}`.
#[derive(Debug, Clone)]
pub struct Term {
    pub nu: Mode,
    pub mu: Mode,
    pub coeff: Complex64,
    re_text: String,
    im_text: String,
}

impl Term {
    pub fn coeff_as<R: Real>(&self) -> C<R> {
        C::new(
            R::parse_decimal(&self.re_text).expect("validated"),
            R::parse_decimal(&self.im_text).expect("validated"),
        )
    }

    /// Joint mode `(ν, μ)` in Z^{r+s}.
    pub fn joint(&self) -> Mode {
        self.nu.iter().chain(&self.mu).copied().collect()
    }
}

/// Real trigonometric polynomial in `(α, β) ∈ T^r × T^s`.
#[derive(Debug, Clone)]
pub struct Perturbation {
    r: usize,
    s: usize,
    terms: Vec<Term>,
}

impl Perturbation {
    pub fn r(&self) -> usize {
        self.r
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    /// Distinct α-modes carrying at least one coefficient, sorted.
    pub fn support(&self) -> Vec<Mode> {
        let mut modes: Vec<Mode> = self.terms.iter().map(|t| t.nu.clone()).collect();
        modes.dedup();
        modes
    }

    pub fn terms_at<'a>(&'a self, nu: &'a [i32]) -> impl Iterator<Item = &'a Term> + 'a {
        self.terms.iter().filter(move |t| t.nu == nu)
    }

    /// Largest `|ν|₁` in the support.
    pub fn mode_radius(&self) -> u32 {
        self.terms.iter().map(|t| lattice::l1(&t.nu)).max().unwrap_or(0)
    }

    /// `f_ν(β)` evaluated at a real point.
    pub fn eval_mode(&self, nu: &[i32], beta: &[f64]) -> Complex64 {
        self.terms_at(nu)
            .map(|t| t.coeff * Complex64::cis(lattice::dot_f64(beta, &t.mu)))
            .sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HyperbolicBranch {
    /// Negative-definite hessian: hyperbolic for ε > 0.
    PositiveEps,
    /// Positive-definite hessian: hyperbolic for ε < 0.
    NegativeEps,
}

#[derive(Debug, Clone)]
pub struct Equilibrium {
    beta0_text: Vec<String>,
    beta0: Vec<f64>,
    hessian: Vec<Vec<f64>>,
    eigenvalues: Vec<f64>,
    branch: HyperbolicBranch,
}

impl Equilibrium {
    pub fn beta0(&self) -> &[f64] {
        &self.beta0
    }

    pub fn beta0_as<R: Real>(&self) -> Vec<R> {
        self.beta0_text
            .iter()
            .map(|t| R::parse_decimal(t).expect("validated"))
            .collect()
    }

    /// `∂²_β f₀(β₀)`
    pub fn hessian(&self) -> &[Vec<f64>] {
        &self.hessian
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn branch(&self) -> HyperbolicBranch {
        self.branch
    }
}

/// Validates that `β₀` is a nondegenerate, definite critical point of `f₀`.
pub fn check_equilibrium(pert: &Perturbation, beta0_text: Vec<String>) -> Result<Equilibrium, ModelError> {
    let s = pert.s();
    if beta0_text.len() != s {
        return Err(ModelError::Dimension(format!(
            "beta0 has {} entries, expected s = {s}",
            beta0_text.len()
        )));
    }
    let beta0 = beta0_text
        .iter()
        .map(|t| f64::parse_decimal(t).ok_or_else(|| ModelError::Number(t.clone())))
        .collect::<Result<Vec<_>, _>>()?;
    let zero = lattice::zero(pert.r());
    let gradient = zero_mode_derivative(pert, &zero, &beta0, 1);
    let hessian_c = zero_mode_derivative(pert, &zero, &beta0, 2);
    let scale: f64 = pert
        .terms_at(&zero)
        .map(|t| t.coeff.norm() * f64::from(lattice::l1(&t.mu)).powi(2).max(1.0))
        .sum::<f64>()
        .max(f64::MIN_POSITIVE);
    let tol = 1e-12 * scale;
    let grad_norm = gradient.iter().map(|g| g.norm()).fold(0.0, f64::max);
    if grad_norm > tol {
        return Err(ModelError::NotCritical { gradient: grad_norm });
    }
    let hessian: Vec<Vec<f64>> = (0..s)
        .map(|i| (0..s).map(|j| hessian_c[i * s + j].re).collect())
        .collect();
    let matrix = DMatrix::from_fn(s, s, |i, j| hessian[i][j]);
    let mut eigenvalues: Vec<f64> = SymmetricEigen::new(matrix).eigenvalues.iter().copied().collect();
    eigenvalues.sort_by(f64::total_cmp);
    let smallest = eigenvalues.iter().map(|e| e.abs()).fold(f64::INFINITY, f64::min);
    if smallest <= tol {
        return Err(ModelError::Degenerate { smallest });
    }
    let branch = if eigenvalues.iter().all(|&e| e < 0.0) {
        HyperbolicBranch::PositiveEps
    } else if eigenvalues.iter().all(|&e| e > 0.0) {
        HyperbolicBranch::NegativeEps
    } else {
        return Err(ModelError::Indefinite { eigenvalues });
    };
    Ok(Equilibrium {
        beta0_text,
        beta0,
        hessian,
        eigenvalues,
        branch,
    })
}

/// Flattened `∂^q_β f_ν(β)` with row-major β indices.
fn zero_mode_derivative(pert: &Perturbation, nu: &[i32], beta: &[f64], q: u32) -> Vec<Complex64> {
    let s = pert.s();
    let len = s.pow(q);
    let mut out = vec![Complex64::new(0.0, 0.0); len];
    for term in pert.terms_at(nu) {
        let phase = term.coeff * Complex64::cis(lattice::dot_f64(beta, &term.mu));
        for (flat, slot) in out.iter_mut().enumerate() {
            let mut factor = phase;
            let mut rest = flat;
            for _ in 0..q {
                factor *= Complex64::new(0.0, f64::from(term.mu[rest % s]));
                rest /= s;
            }
            *slot += factor;
        }
    }
    out
}

/// Dense tensor with row-major layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor<R: Real> {
    pub dims: Vec<usize>,
    pub data: Vec<C<R>>,
}

impl<R: Real> Tensor<R> {
    pub fn get(&self, index: &[usize]) -> C<R> {
        let flat = index.iter().zip(&self.dims).fold(0, |acc, (&i, &d)| acc * d + i);
        self.data[flat]
    }
}

/// `(iν)^{⊗p} ⊗ ∂^q_β f_ν(β₀)`: the first `p` slots have dimension r, the last `q` have s.
pub fn derivative_tensor<R: Real>(model: &Model, nu: &[i32], p: usize, q: usize) -> Tensor<R> {
    let (r, s) = (model.r(), model.s());
    let beta0 = model.equilibrium().beta0_as::<R>();
    let dims: Vec<usize> = std::iter::repeat_n(r, p).chain(std::iter::repeat_n(s, q)).collect();
    let len: usize = dims.iter().product();
    let mut data = vec![real::czero::<R>(); len];
    for term in model.perturbation().terms_at(nu) {
        let phase = term.coeff_as::<R>() * real::cis(lattice::dot(&beta0, &term.mu));
        for (flat, slot) in data.iter_mut().enumerate() {
            let mut rest = flat;
            let mut factor = phase;
            for (slot_idx, &d) in dims.iter().enumerate().rev() {
                let idx = rest % d;
                rest /= d;
                let k = if slot_idx < p { term.nu[idx] } else { term.mu[idx] };
                factor = real::times_i(factor * R::from_i32(k).expect("small"));
            }
            *slot = *slot + factor;
        }
    }
    Tensor { dims, data }
}

/// A validated model: frequency, perturbation and hyperbolic equilibrium.
#[derive(Debug, Clone)]
pub struct Model {
    name: String,
    freq: Frequency,
    pert: Perturbation,
    eq: Equilibrium,
    mode_bound: u32,
    margin: DiophantineMargin,
}

impl Model {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn frequency(&self) -> &Frequency {
        &self.freq
    }

    pub fn perturbation(&self) -> &Perturbation {
        &self.pert
    }

    pub fn equilibrium(&self) -> &Equilibrium {
        &self.eq
    }

    pub fn r(&self) -> usize {
        self.pert.r
    }

    pub fn s(&self) -> usize {
        self.pert.s
    }

    /// Total dimension `r + s` of the joint (α, β) vectors.
    pub fn d(&self) -> usize {
        self.pert.r + self.pert.s
    }

    pub fn mode_bound(&self) -> u32 {
        self.mode_bound
    }

    pub fn diophantine(&self) -> &DiophantineMargin {
        &self.margin
    }

    pub fn from_config(config: ModelConfig) -> Result<Self, ModelError> {
        let ModelConfig {
            name,
            r,
            s,
            omega,
            tau,
            c0,
            beta0,
            mode_bound,
            symmetrize,
            terms,
        } = config;
        if omega.len() != r {
            return Err(ModelError::Dimension(format!(
                "omega has {} entries, expected r = {r}",
                omega.len()
            )));
        }
        let c0 = c0.to_f64()?;
        let tau = tau.to_f64()?;
        let freq = Frequency::new(omega.iter().map(Number::text).collect(), c0, tau)?;
        let pert = build_perturbation(r, s, terms, symmetrize)?;
        let eq = check_equilibrium(&pert, beta0.iter().map(Number::text).collect())?;
        let margin = diophantine_margin(&freq, mode_bound);
        Ok(Self {
            name: name.unwrap_or_else(|| "unnamed".into()),
            freq,
            pert,
            eq,
            mode_bound,
            margin,
        })
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ModelError> {
        let config: ModelConfig = toml::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
        Self::from_config(config)
    }

    pub fn from_json_str(text: &str) -> Result<Self, ModelError> {
        let config: ModelConfig = serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
        Self::from_config(config)
    }

    /// Built-in models: `ref1` and its parity-broken variant `ref1-odd`.
    pub fn builtin(name: &str) -> Result<Self, ModelError> {
        match name {
            "ref1" => Self::from_toml_str(REF1),
            "ref1-odd" => Self::from_toml_str(REF1_ODD),
            other => Err(ModelError::UnknownBuiltin(other.into())),
        }
    }

    pub fn ref1() -> Self {
        Self::builtin("ref1").expect("built-in model is valid")
    }

    /// Precision-specific numbers derived from the decimal sources.
    pub fn numbers<R: Real>(&self) -> ModelNumbers<R> {
        ModelNumbers::new(self)
    }
}

const REF1: &str = include_str!("../models/ref1.toml");
const REF1_ODD: &str = include_str!("../models/ref1_odd.toml");

/// Reads a model from TOML, or JSON when the extension is `.json`.
pub fn load_model(path: &Path) -> Result<Model, ModelError> {
    let text = std::fs::read_to_string(path).map_err(|source| ModelError::Io {
        path: path.display().to_string(),
        source,
    })?;
    if path.extension().is_some_and(|e| e == "json") {
        Model::from_json_str(&text)
    } else {
        Model::from_toml_str(&text)
    }
}

/// Accepts a number either as a decimal string or as a native literal.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Number {
    Text(String),
    Int(i64),
    Float(f64),
}

impl Number {
    fn text(&self) -> String {
        match self {
            Number::Text(t) => t.trim().to_string(),
            Number::Int(i) => i.to_string(),
            Number::Float(f) => format!("{f:?}"),
        }
    }

    fn to_f64(&self) -> Result<f64, ModelError> {
        let t = self.text();
        f64::parse_decimal(&t).ok_or(ModelError::Number(t))
    }
}

impl Default for Number {
    fn default() -> Self {
        Number::Int(0)
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct TermConfig {
    pub nu: Mode,
    pub mu: Mode,
    #[serde(default)]
    pub re: Number,
    #[serde(default)]
    pub im: Number,
}

fn default_mode_bound() -> u32 {
    200
}

#[derive(Debug, Clone, Deserialize)]
pub struct ModelConfig {
    pub name: Option<String>,
    pub r: usize,
    pub s: usize,
    pub omega: Vec<Number>,
    pub tau: Number,
    #[serde(alias = "C0")]
    pub c0: Number,
    pub beta0: Vec<Number>,
    #[serde(default = "default_mode_bound")]
    pub mode_bound: u32,
    #[serde(default)]
    pub symmetrize: bool,
    pub terms: Vec<TermConfig>,
}

fn negate_text(text: &str) -> String {
    match text.strip_prefix('-') {
        Some(rest) => rest.to_string(),
        None => format!("-{}", text.strip_prefix('+').unwrap_or(text)),
    }
}

fn build_perturbation(
    r: usize,
    s: usize,
    terms: Vec<TermConfig>,
    symmetrize: bool,
) -> Result<Perturbation, ModelError> {
    let mut map: BTreeMap<(Mode, Mode), Term> = BTreeMap::new();
    for t in terms {
        if t.nu.len() != r || t.mu.len() != s {
            return Err(ModelError::Dimension(format!(
                "term ({:?}, {:?}) does not match r = {r}, s = {s}",
                t.nu, t.mu
            )));
        }
        let re_text = t.re.text();
        let im_text = t.im.text();
        let coeff = Complex64::new(
            f64::parse_decimal(&re_text).ok_or_else(|| ModelError::Number(re_text.clone()))?,
            f64::parse_decimal(&im_text).ok_or_else(|| ModelError::Number(im_text.clone()))?,
        );
        if coeff == Complex64::new(0.0, 0.0) {
            continue;
        }
        let key = (t.nu.clone(), t.mu.clone());
        if map.contains_key(&key) {
            return Err(ModelError::Duplicate { nu: t.nu, mu: t.mu });
        }
        map.insert(
            key,
            Term {
                nu: t.nu,
                mu: t.mu,
                coeff,
                re_text,
                im_text,
            },
        );
    }
    if symmetrize {
        let missing: Vec<Term> = map
            .values()
            .filter(|t| !map.contains_key(&(lattice::neg(&t.nu), lattice::neg(&t.mu))))
            .map(|t| Term {
                nu: lattice::neg(&t.nu),
                mu: lattice::neg(&t.mu),
                coeff: t.coeff.conj(),
                re_text: t.re_text.clone(),
                im_text: negate_text(&t.im_text),
            })
            .collect();
        for t in missing {
            map.insert((t.nu.clone(), t.mu.clone()), t);
        }
    }
    for ((nu, mu), term) in &map {
        let partner_key = (lattice::neg(nu), lattice::neg(mu));
        match map.get(&partner_key) {
            None => {
                return Err(ModelError::Reality {
                    nu: nu.clone(),
                    mu: mu.clone(),
                    detail: "conjugate partner missing".into(),
                })
            }
            Some(p) if p.coeff != term.coeff.conj() => {
                return Err(ModelError::Reality {
                    nu: nu.clone(),
                    mu: mu.clone(),
                    detail: format!("partner {} is not the conjugate of {}", p.coeff, term.coeff),
                })
            }
            Some(_) => {}
        }
    }
    Ok(Perturbation {
        r,
        s,
        terms: map.into_values().collect(),
    })
}

/// Support term with the equilibrium phase folded in: `c_{ν,μ} e^{iμ·β₀}`.
#[derive(Debug, Clone)]
pub struct PhasedTerm<R: Real> {
    pub nu: Mode,
    pub mu: Mode,
    pub weight: C<R>,
}

/// Model data converted to the working precision.
#[derive(Debug, Clone)]
pub struct ModelNumbers<R: Real> {
    pub r: usize,
    pub s: usize,
    pub omega: Vec<R>,
    pub beta0: Vec<R>,
    pub terms: Vec<PhasedTerm<R>>,
    /// Distinct α-modes of the support with the index range of their terms.
    pub groups: Vec<(Mode, std::ops::Range<usize>)>,
    /// `(∂²_β f₀(β₀))^{-1}`, row-major.
    pub hessian_inverse: Vec<R>,
}

impl<R: Real> ModelNumbers<R> {
    fn new(model: &Model) -> Self {
        let (r, s) = (model.r(), model.s());
        let omega = model.frequency().omega_as::<R>();
        let beta0 = model.equilibrium().beta0_as::<R>();
        let terms: Vec<PhasedTerm<R>> = model
            .perturbation()
            .terms()
            .iter()
            .map(|t| PhasedTerm {
                nu: t.nu.clone(),
                mu: t.mu.clone(),
                weight: t.coeff_as::<R>() * real::cis(lattice::dot(&beta0, &t.mu)),
            })
            .collect();
        let mut groups: Vec<(Mode, std::ops::Range<usize>)> = Vec::new();
        for (i, t) in terms.iter().enumerate() {
            match groups.last_mut() {
                Some((nu, range)) if *nu == t.nu => range.end = i + 1,
                _ => groups.push((t.nu.clone(), i..i + 1)),
            }
        }
        let zero = lattice::zero(r);
        let mut hessian = vec![R::zero(); s * s];
        for t in terms.iter().filter(|t| t.nu == zero) {
            for i in 0..s {
                for j in 0..s {
                    let mij = R::from_i32(t.mu[i] * t.mu[j]).expect("small");
                    hessian[i * s + j] = hessian[i * s + j] - t.weight.re * mij;
                }
            }
        }
        let hessian_inverse = invert_real(&hessian, s);
        Self {
            r,
            s,
            omega,
            beta0,
            terms,
            groups,
            hessian_inverse,
        }
    }

    pub fn d(&self) -> usize {
        self.r + self.s
    }

    /// `ω·ν` at working precision.
    pub fn divisor(&self, nu: &[i32]) -> R {
        lattice::dot(&self.omega, nu)
    }

    /// `-H^{-1} g` for a β-vector `g`.
    pub fn counterterm(&self, g: &[C<R>]) -> Vec<C<R>> {
        (0..self.s)
            .map(|i| {
                (0..self.s).fold(real::czero(), |acc, j| {
                    acc - g[j] * self.hessian_inverse[i * self.s + j]
                })
            })
            .collect()
    }
}

/// Gauss-Jordan inverse with partial pivoting; the caller guarantees invertibility.
fn invert_real<R: Real>(matrix: &[R], n: usize) -> Vec<R> {
    let mut a = matrix.to_vec();
    let mut inv: Vec<R> = (0..n * n)
        .map(|k| if k / n == k % n { R::one() } else { R::zero() })
        .collect();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i * n + col].abs().partial_cmp(&a[j * n + col].abs()).unwrap())
            .expect("nonempty");
        for k in 0..n {
            a.swap(col * n + k, pivot * n + k);
            inv.swap(col * n + k, pivot * n + k);
        }
        let p = a[col * n + col];
        for k in 0..n {
            a[col * n + k] = a[col * n + k] / p;
            inv[col * n + k] = inv[col * n + k] / p;
        }
        for row in 0..n {
            if row != col {
                let f = a[row * n + col];
                for k in 0..n {
                    a[row * n + k] = a[row * n + k] - f * a[col * n + k];
                    inv[row * n + k] = inv[row * n + k] - f * inv[col * n + k];
                }
            }
        }
    }
    inv
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::real::BigFloat;

    const SIGMA: f64 = 0.618_033_988_749_894_8;

    fn ref1_with_beta0(beta0: &str) -> Result<Model, ModelError> {
        Model::from_toml_str(&REF1.replace("beta0 = [\"0\"]", &format!("beta0 = [\"{beta0}\"]")))
    }

    #[test]
    fn ref1_loads_with_negative_hessian() {
        let m = Model::ref1();
        assert_eq!((m.r(), m.s(), m.d()), (2, 1, 3));
        assert_eq!(m.equilibrium().hessian()[0][0], -1.0);
        assert_eq!(m.equilibrium().branch(), HyperbolicBranch::PositiveEps);
        assert_eq!(m.perturbation().terms().len(), 6);
        assert_eq!(m.perturbation().mode_radius(), 2);
    }

    #[test]
    fn beta0_pi_selects_negative_eps_branch() {
        let m = ref1_with_beta0("pi").unwrap();
        assert!((m.equilibrium().hessian()[0][0] - 1.0).abs() < 1e-15);
        assert_eq!(m.equilibrium().branch(), HyperbolicBranch::NegativeEps);
    }

    #[test]
    fn non_critical_beta0_rejected() {
        let half_pi = format!("{:?}", std::f64::consts::FRAC_PI_2);
        assert!(matches!(ref1_with_beta0(&half_pi), Err(ModelError::NotCritical { .. })));
    }

    #[test]
    fn degenerate_hessian_rejected() {
        // f0 = cos β + cos 2β / 4 at β = π: f0' = 0 and f0'' = -cos β - cos 2β = 0
        let text = r#"
            r = 1
            s = 1
            omega = ["1"]
            tau = 0
            C0 = "1"
            beta0 = ["pi"]
            [[terms]]
            nu = [0]
            mu = [1]
            re = "0.5"
            [[terms]]
            nu = [0]
            mu = [-1]
            re = "0.5"
            [[terms]]
            nu = [0]
            mu = [2]
            re = "0.125"
            [[terms]]
            nu = [0]
            mu = [-2]
            re = "0.125"
        "#;
        assert!(matches!(Model::from_toml_str(text), Err(ModelError::Degenerate { .. })));
    }

    #[test]
    fn cos_two_beta_at_quarter_pi_is_not_critical() {
        let text = format!(
            r#"
            r = 1
            s = 1
            omega = ["1"]
            tau = 0
            C0 = "1"
            beta0 = ["{:?}"]
            symmetrize = true
            [[terms]]
            nu = [0]
            mu = [2]
            re = "0.5"
        "#,
            std::f64::consts::FRAC_PI_4
        );
        assert!(matches!(
            Model::from_toml_str(&text),
            Err(ModelError::NotCritical { .. })
        ));
    }

    #[test]
    fn missing_conjugate_rejected_unless_symmetrized() {
        let broken = REF1.replacen("nu = [-1, 0]", "nu = [-1, 0]\nim = \"0.1\"", 1);
        assert!(matches!(Model::from_toml_str(&broken), Err(ModelError::Reality { .. })));
        let text = r#"
            r = 2
            s = 1
            omega = ["1", "0.6180339887498948482"]
            tau = 1
            C0 = "0.38"
            beta0 = ["0"]
            [[terms]]
            nu = [0, 0]
            mu = [1]
            re = "0.5"
        "#;
        assert!(matches!(Model::from_toml_str(text), Err(ModelError::Reality { .. })));
        let fixed = text.replace("beta0 = [\"0\"]", "beta0 = [\"0\"]\nsymmetrize = true");
        let m = Model::from_toml_str(&fixed).unwrap();
        assert_eq!(m.perturbation().terms().len(), 2);
    }

    #[test]
    fn tau_below_rank_rejected() {
        let text = REF1.replace("tau = 1", "tau = \"0.5\"");
        assert!(matches!(
            Model::from_toml_str(&text),
            Err(ModelError::TauTooSmall { .. })
        ));
    }

    #[test]
    fn json_and_toml_agree() {
        let json = r#"{"r":1,"s":1,"omega":["1"],"tau":0,"C0":"1","beta0":["0"],"symmetrize":true,
            "terms":[{"nu":[0],"mu":[1],"re":"0.5"},{"nu":[1],"mu":[0],"re":0.25}]}"#;
        let m = Model::from_json_str(json).unwrap();
        assert_eq!(m.perturbation().terms().len(), 4);
        assert_eq!(m.equilibrium().hessian()[0][0], -1.0);
    }

    #[test]
    fn margin_window_of_one() {
        let f = Frequency::new(vec!["1".into(), format!("{SIGMA:?}")], SIGMA, 1.0).unwrap();
        let m = diophantine_margin(&f, 1);
        assert!((m.margin - 1.0).abs() < 1e-15);
        assert_eq!(m.worst_mode, Some(vec![0, 1]));
    }

    #[test]
    fn resonant_frequency_has_zero_margin() {
        let f = Frequency::new(vec!["1".into(), "1".into()], 0.38, 1.0).unwrap();
        let m = diophantine_margin(&f, 10);
        assert_eq!(m.margin, 0.0);
    }

    #[test]
    fn golden_margin_matches_independent_scan() {
        // independent brute-force scan of the box |ν_i| ≤ 200
        let mut best = f64::INFINITY;
        for a in -200i32..=200 {
            for b in -200i32..=200 {
                let n = a.unsigned_abs() + b.unsigned_abs();
                if n == 0 || n > 200 {
                    continue;
                }
                let v = (f64::from(a) + f64::from(b) * SIGMA).abs() * f64::from(n) / 0.38;
                best = best.min(v);
            }
        }
        let m = Model::ref1();
        assert!((m.diophantine().margin - best).abs() < 1e-15);
        assert_eq!(m.diophantine().worst_mode, Some(vec![0, 1]));
        // frozen value: σ / C0
        assert!((best - 1.626_405_233_552_355).abs() < 1e-14);
    }

    #[test]
    fn derivative_tensor_examples() {
        let m = Model::ref1();
        let t = derivative_tensor::<f64>(&m, &[1, 1], 0, 1);
        assert_eq!(t.dims, vec![1]);
        assert!((t.data[0] - Complex64::new(0.0, 0.5)).norm() < 1e-16);
        let h = derivative_tensor::<f64>(&m, &[0, 0], 0, 2);
        assert!((h.data[0] - Complex64::new(-1.0, 0.0)).norm() < 1e-16);
        // (iν)⊗(iν) f_ν for ν = (1,0): -ν⊗ν / 2
        let a = derivative_tensor::<f64>(&m, &[1, 0], 2, 0);
        assert_eq!(a.dims, vec![2, 2]);
        assert!((a.get(&[0, 0]) - Complex64::new(-0.5, 0.0)).norm() < 1e-16);
        assert_eq!(a.get(&[0, 1]), Complex64::new(0.0, 0.0));
        let mixed = derivative_tensor::<f64>(&m, &[1, 1], 1, 1);
        assert!((mixed.get(&[1, 0]) - Complex64::new(-0.5, 0.0)).norm() < 1e-16);
    }

    #[test]
    fn extended_numbers_match_double() {
        let m = Model::ref1();
        let lo = m.numbers::<f64>();
        let hi = m.numbers::<BigFloat>();
        assert_eq!(lo.hessian_inverse, vec![-1.0]);
        assert_eq!(hi.hessian_inverse[0].to_f64_lossy(), -1.0);
        assert_eq!(hi.omega[1].to_f64_lossy(), lo.omega[1]);
        assert_eq!(lo.groups.len(), 5);
        let g = lo.counterterm(&[Complex64::new(0.25, 0.0)]);
        assert_eq!(g[0], Complex64::new(0.25, 0.0));
    }
}
