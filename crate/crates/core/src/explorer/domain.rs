//! Empirical probe of the `ε`-domain where the dressed propagators obey
//! `‖Ḡ^[∞](x;ε)‖ < 2/((π−φ)x²)`.

use std::f64::consts::PI;

use num_complex::Complex64;
use rayon::prelude::*;

use super::expand::LimitSettings;
use crate::multiscale::{log_log_slope, sup_norm, ScaleSequence, SelfEnergyEngine};

/// Disks of radius `(π−φ)ε₀` restricted to the sectors `|arg ε| ≤ φ`.
#[derive(Debug, Clone, PartialEq)]
pub struct DomainSpec {
    pub eps0: f64,
    pub phi_grid: Vec<f64>,
}

impl DomainSpec {
    pub fn new(eps0: f64, phi_grid: Vec<f64>) -> Self {
        assert!(eps0 > 0.0, "eps0 must be positive");
        assert!(
            phi_grid.iter().all(|p| *p > 0.0 && *p < PI),
            "half-openings lie in (0, π)"
        );
        Self { eps0, phi_grid }
    }

    pub fn radius(&self, phi: f64) -> f64 {
        (PI - phi) * self.eps0
    }

    /// Membership in the union of all sectors.
    pub fn in_heart(&self, eps: Complex64) -> bool {
        eps.norm() < (PI - eps.arg().abs()) * self.eps0
    }
}

/// Default half-openings of the probe.
pub fn default_phi_grid() -> Vec<f64> {
    vec![PI / 4.0, PI / 2.0, 3.0 * PI / 4.0]
}

/// `per_window` log-spaced real arguments inside every scale window.
pub fn window_samples(seq: &ScaleSequence, per_window: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for n in seq.windows() {
        let lo = seq.gamma(n - 1);
        let hi = if n >= 1 { 4.0 * seq.gamma(0) } else { seq.gamma(n) };
        for i in 0..per_window {
            let t = (i as f64 + 0.5) / per_window as f64;
            out.push(lo * (hi / lo).powf(t) / seq.rescaling());
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProbeSample {
    pub phi: f64,
    pub eps: Complex64,
    pub pass: bool,
    /// `min_x (2/((π−φ)x²)) / ‖Ḡ^[∞](x;ε)‖`; zero when the limit or the inversion fails.
    pub norm_margin: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeSettings {
    pub arc_points: usize,
    pub ray_points: usize,
    pub per_window: usize,
    /// Denser sampling for the negative-axis probe.
    pub negative_per_window: usize,
    pub directions: usize,
    pub bisection_steps: usize,
    /// Real parts of the cusp probe as fractions of `ε₀`.
    pub cusp_fractions: Vec<f64>,
    /// Largest `ε₀` tried by the calibration, then halved `calibration_steps` times.
    pub calibration_start: f64,
    pub calibration_steps: usize,
    pub limit: LimitSettings,
}

impl Default for ProbeSettings {
    fn default() -> Self {
        Self {
            arc_points: 9,
            ray_points: 3,
            per_window: 3,
            negative_per_window: 8,
            directions: 16,
            bisection_steps: 24,
            cusp_fractions: vec![0.02, 0.04, 0.08, 0.16],
            calibration_start: 0.2,
            calibration_steps: 10,
            limit: LimitSettings {
                tol: 1e-12,
                max_levels: 8,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainReport {
    pub eps0: f64,
    pub phi_grid: Vec<f64>,
    pub samples: Vec<ProbeSample>,
    /// `ε = −(π−φ)ε₀` for every `φ`.
    pub negative: Vec<ProbeSample>,
    /// Largest passing `|ε|` per direction, as polygon vertices.
    pub boundary: Vec<Complex64>,
    /// `(−Re ε, Im ε)` of the measured boundary near the negative axis.
    pub cusp: Vec<(f64, f64)>,
    pub cusp_slope: f64,
}

impl DomainReport {
    pub fn phi_passes(&self, phi: f64) -> bool {
        self.samples.iter().filter(|s| s.phi == phi).all(|s| s.pass)
    }

    pub fn negative_fails(&self) -> bool {
        self.negative.iter().all(|s| !s.pass)
    }

    pub fn cusp_holds(&self, tol: f64) -> bool {
        (self.cusp_slope - 2.0).abs() <= tol
    }

    /// `phi,re_eps,im_eps,pass,norm_margin` rows, boundary samples first.
    pub fn csv(&self) -> String {
        let mut out = String::from("phi,re_eps,im_eps,pass,norm_margin\n");
        for s in self.samples.iter().chain(&self.negative) {
            out.push_str(&format!(
                "{:.16e},{:.16e},{:.16e},{},{:.16e}\n",
                s.phi, s.eps.re, s.eps.im, s.pass, s.norm_margin
            ));
        }
        out
    }
}

/// Propagator-norm checks at a fixed set of real arguments.
pub struct DomainProbe<'a> {
    engine: &'a SelfEnergyEngine,
    x_samples: Vec<f64>,
    dense_samples: Vec<f64>,
    settings: ProbeSettings,
}

impl<'a> DomainProbe<'a> {
    pub fn new(engine: &'a SelfEnergyEngine, settings: ProbeSettings) -> Self {
        let x_samples = window_samples(engine.sequence(), settings.per_window);
        let dense_samples = window_samples(engine.sequence(), settings.negative_per_window);
        Self {
            engine,
            x_samples,
            dense_samples,
            settings,
        }
    }

    pub fn x_samples(&self) -> &[f64] {
        &self.x_samples
    }

    fn check_at(&self, eps: Complex64, phi: f64, xs: &[f64]) -> ProbeSample {
        let limit = self.settings.limit;
        let margin = xs
            .par_iter()
            .map(|&x| {
                let bound = 2.0 / ((PI - phi) * x * x);
                match self
                    .engine
                    .limit_propagator(Complex64::new(x, 0.0), eps, limit.tol, limit.max_levels)
                {
                    Ok(g) => bound / sup_norm(&g),
                    Err(_) => 0.0,
                }
            })
            .reduce(|| f64::INFINITY, f64::min);
        ProbeSample {
            phi,
            eps,
            pass: margin > 1.0,
            norm_margin: margin,
        }
    }

    /// Norm bound for half-opening `φ` at every sample argument.
    pub fn check(&self, eps: Complex64, phi: f64) -> ProbeSample {
        self.check_at(eps, phi, &self.x_samples)
    }

    /// Arc of radius `(π−φ)ε₀` and the two bounding rays.
    pub fn sector_boundary(&self, spec: &DomainSpec, phi: f64) -> Vec<ProbeSample> {
        let radius = spec.radius(phi);
        let arc = self.settings.arc_points.max(2);
        let mut points: Vec<Complex64> = (0..arc)
            .map(|i| Complex64::from_polar(radius, -phi + 2.0 * phi * i as f64 / (arc - 1) as f64))
            .collect();
        for j in 1..=self.settings.ray_points {
            let t = radius * j as f64 / (self.settings.ray_points + 1) as f64;
            points.push(Complex64::from_polar(t, phi));
            points.push(Complex64::from_polar(t, -phi));
        }
        points.into_iter().map(|e| self.check(e, phi)).collect()
    }

    /// Inside the heart domain and obeying the bound of the widest sector containing `ε`,
    /// whose half-opening is `π − |ε|/ε₀`.
    pub fn heart_pass(&self, spec: &DomainSpec, eps: Complex64) -> bool {
        if eps.norm() == 0.0 {
            return true;
        }
        spec.in_heart(eps) && self.check(eps, PI - eps.norm() / spec.eps0).pass
    }

    /// Largest `ε₀` on a halving grid that lets the most half-openings pass.
    pub fn calibrate_eps0(&self, phi_grid: &[f64]) -> f64 {
        let mut best = (0usize, self.settings.calibration_start);
        let mut eps0 = self.settings.calibration_start;
        for _ in 0..=self.settings.calibration_steps {
            let spec = DomainSpec::new(eps0, phi_grid.to_vec());
            let passing = phi_grid
                .iter()
                .filter(|&&phi| self.sector_boundary(&spec, phi).iter().all(|s| s.pass))
                .count();
            if passing > best.0 {
                best = (passing, eps0);
            }
            if passing == phi_grid.len() {
                break;
            }
            eps0 *= 0.5;
        }
        best.1
    }

    fn bisect(&self, mut pass_at: f64, mut fail_at: f64, ok: impl Fn(f64) -> bool) -> f64 {
        for _ in 0..self.settings.bisection_steps {
            let mid = 0.5 * (pass_at + fail_at);
            if ok(mid) {
                pass_at = mid;
            } else {
                fail_at = mid;
            }
        }
        0.5 * (pass_at + fail_at)
    }

    pub fn probe(&self, spec: &DomainSpec) -> DomainReport {
        let samples = spec
            .phi_grid
            .iter()
            .flat_map(|&phi| self.sector_boundary(spec, phi))
            .collect();
        let negative = spec
            .phi_grid
            .iter()
            .map(|&phi| self.check_at(Complex64::new(-spec.radius(phi), 0.0), phi, &self.dense_samples))
            .collect();
        let n = self.settings.directions.max(1);
        let boundary = (0..n)
            .map(|j| {
                let theta = -PI + 2.0 * PI * (j as f64 + 0.5) / n as f64;
                let rho = self.bisect(0.0, PI * spec.eps0, |rho| {
                    self.heart_pass(spec, Complex64::from_polar(rho, theta))
                });
                Complex64::from_polar(rho, theta)
            })
            .collect();
        let cusp: Vec<(f64, f64)> = self
            .settings
            .cusp_fractions
            .iter()
            .map(|f| f * spec.eps0)
            .filter(|&a| self.heart_pass(spec, Complex64::new(-a, a)))
            .map(|a| (a, self.bisect(a, 0.0, |b| self.heart_pass(spec, Complex64::new(-a, b)))))
            .collect();
        let (re, im): (Vec<f64>, Vec<f64>) = cusp.iter().copied().unzip();
        let cusp_slope = if cusp.len() >= 2 {
            log_log_slope(&re, &im)
        } else {
            f64::NAN
        };
        DomainReport {
            eps0: spec.eps0,
            phi_grid: spec.phi_grid.clone(),
            samples,
            negative,
            boundary,
            cusp,
            cusp_slope,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Model;

    fn engine() -> SelfEnergyEngine {
        SelfEnergyEngine::build(&Model::ref1(), -6, 3).unwrap()
    }

    #[test]
    fn heart_membership() {
        let spec = DomainSpec::new(0.1, default_phi_grid());
        assert!((spec.radius(PI / 2.0) - 0.05 * PI).abs() < 1e-15);
        assert!(spec.in_heart(Complex64::new(0.3, 0.0)));
        assert!(!spec.in_heart(Complex64::new(0.32, 0.0)));
        assert!(!spec.in_heart(Complex64::new(-0.01, 0.0)));
        assert!(spec.in_heart(Complex64::new(-0.01, 0.01)));
        // radius shrinks to zero as φ → π
        assert!(spec.radius(PI - 1e-9) < 1e-9);
    }

    #[test]
    fn samples_fill_windows() {
        let e = engine();
        let xs = window_samples(e.sequence(), 2);
        assert_eq!(xs.len(), 2 * e.sequence().windows().count());
        for (i, n) in e.sequence().windows().enumerate() {
            assert_eq!(e.sequence().window_of(xs[2 * i]), n);
            assert_eq!(e.sequence().window_of(xs[2 * i + 1]), n);
        }
    }

    #[test]
    fn positive_axis_passes_and_negative_fails() {
        let e = engine();
        let probe = DomainProbe::new(&e, ProbeSettings::default());
        assert!(probe.check(Complex64::new(0.01, 0.0), PI / 2.0).pass);
        let dense = window_samples(e.sequence(), 8);
        assert!(!probe.check_at(Complex64::new(-0.01, 0.0), 3.0 * PI / 4.0, &dense).pass);
        // bound 2/((π−φ)x²) drops below the bare 1/x² for π − φ > 2
        assert!(!probe.check(Complex64::new(1e-4, 0.0), PI / 4.0).pass);
    }

    #[test]
    fn cusp_is_quadratic() {
        let e = engine();
        let settings = ProbeSettings {
            directions: 4,
            ..ProbeSettings::default()
        };
        let probe = DomainProbe::new(&e, settings);
        let spec = DomainSpec::new(0.05, vec![PI / 2.0, 3.0 * PI / 4.0]);
        let report = probe.probe(&spec);
        assert!(report.phi_passes(PI / 2.0) && report.phi_passes(3.0 * PI / 4.0));
        assert!(report.negative_fails());
        assert_eq!(report.cusp.len(), 4);
        assert!(report.cusp_holds(0.2), "{}", report.cusp_slope);
        assert!(report.csv().lines().count() > report.samples.len());
        // along the positive axis the bound trims the heart at |ε| = 2ε₀
        let forward = report.boundary[1].norm();
        assert!((forward - 2.0 * spec.eps0).abs() < 0.05 * spec.eps0, "{forward}");
    }
}
