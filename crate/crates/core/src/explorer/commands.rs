//! Runners behind the explorer subcommands. Each returns a [`Report`] whose verdicts
//! decide the exit status.

use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::domain::{DomainProbe, DomainSpec, ProbeSettings};
use super::report::{fmt_number, Report};
use super::ExplorerError;
use crate::lattice::{self, Mode};
use crate::model::Model;
use crate::multiscale::{
    assign_scales, bryuno_check, build_catalog, build_scale_sequence, sup_norm, verify_catalog_cancellations,
    verify_localized_cancellations, BlockBoundReport, LocalizedReport, ResumError, ScaleSequence, SelfEnergyCatalog,
    SelfEnergyEngine, BLOCK_FIT_RANGE,
};
use crate::oracle::{residual_norm, solve_to_order, FormalSolution};
use crate::real::{self, Real, C};
use crate::series::{dump, ft_convolve, BilinearRule};
use crate::trees::{unrooted_key, verify_zero_momentum_cancellation, Component, Leaves, TreeEnumerator, TreeEvaluator};

pub const RESIDUAL_TOLERANCE: f64 = 1e-10;
pub const ZERO_MOMENTUM_TOLERANCE: f64 = 1e-12;
pub const STRICT_CANCELLATION_TOLERANCE: f64 = 1e-12;
pub const MIXED_CANCELLATION_TOLERANCE: f64 = 1e-10;
pub const SYMMETRY_TOLERANCE: f64 = 1e-10;
pub const SLOPE_TOLERANCE: f64 = 0.05;
pub const FIXED_POINT_TOLERANCE: f64 = 1e-12;
pub const FIXED_POINT_LEVELS: usize = 8;
pub const CUSP_TOLERANCE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub order: usize,
    pub v_max: usize,
    pub n_min: i32,
    pub seed: u64,
    /// Real coupling of the resummation runs.
    pub eps: f64,
    /// Random samples of the symmetry checks.
    pub samples: usize,
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            order: 4,
            v_max: 3,
            n_min: -6,
            seed: 7,
            eps: 0.01,
            samples: 100,
        }
    }
}

/// Agreement expected between two exact evaluations carried out at precision `R`.
pub fn agreement_tolerance<R: Real>() -> f64 {
    (machine_epsilon::<R>() * 1e5).max(1e-30)
}

/// Smallest power of two `u` with `1 + u ≠ 1` in `R`.
fn machine_epsilon<R: Real>() -> f64 {
    let half = R::from_f64_lossy(0.5);
    let mut u = R::one();
    while R::one() + u * half != R::one() {
        u = u * half;
    }
    u.to_f64_lossy()
}

fn distance<R: Real>(a: &[C<R>], b: &[C<R>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| real::cabs(*x - *y).to_f64_lossy())
        .fold(0.0, f64::max)
}

fn largest<R: Real>(a: &[C<R>]) -> f64 {
    a.iter().map(|z| real::cabs(*z).to_f64_lossy()).fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeOracleComparison {
    pub modes: usize,
    /// Worst `|tree sum − oracle|` relative to the largest oracle coefficient of that order.
    pub worst_coefficient: f64,
    pub worst_counterterm: f64,
}

/// Tree sums against the oracle for orders `1..=order` at every nonzero oracle mode, and
/// tree counterterms against the oracle counterterms. `sol` must reach `order + 1`.
pub fn compare_trees_with_oracle<R: Real>(
    model: &Model,
    sol: &FormalSolution<R>,
    order: usize,
) -> TreeOracleComparison {
    assert!(sol.order > order, "oracle must reach order + 1");
    let nums = model.numbers::<R>();
    let leaves = Leaves::from_solution(sol);
    let mut enumerator = TreeEnumerator::new(model);
    let mut eval = TreeEvaluator::new(&nums, &leaves);
    let mut out = TreeOracleComparison {
        modes: 0,
        worst_coefficient: 0.0,
        worst_counterterm: 0.0,
    };
    for k in 1..=order {
        let scale = sol.h.max_abs(k).to_f64_lossy().max(f64::MIN_POSITIVE);
        let modes: Vec<Mode> = sol
            .h
            .order(k)
            .keys()
            .filter(|nu| !lattice::is_zero(nu))
            .cloned()
            .collect();
        for nu in modes {
            out.modes += 1;
            for (component, expected) in [
                (Component::Alpha, sol.alpha(k, &nu)),
                (Component::Beta, sol.beta(k, &nu)),
            ] {
                let got = eval.sum(&mut enumerator, k, &nu, component);
                out.worst_coefficient = out.worst_coefficient.max(distance(&got, &expected) / scale);
            }
        }
        let expected = &sol.counterterms[k];
        let got = eval.counterterm(&mut enumerator, k);
        let scale = largest(expected)
            .max(sol.h.max_abs(k).to_f64_lossy())
            .max(f64::MIN_POSITIVE);
        out.worst_counterterm = out.worst_counterterm.max(distance(&got, expected) / scale);
    }
    out
}

fn model_section(report: &mut Report, model: &Model, settings: &RunSettings) {
    report
        .section("model")
        .text("name", model.name())
        .text("r", model.r())
        .text("s", model.s())
        .numbers("omega", model.frequency().omega())
        .number("tau", model.frequency().tau())
        .text("order", settings.order)
        .text("v_max", settings.v_max)
        .text("n_min", settings.n_min);
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expansion {
    pub report: Report,
    /// Oracle coefficients through the requested order in the series dump format, then a
    /// `[b0]` block of `κ component re im` counterterm records.
    pub table: String,
}

fn expansion_table<R: Real>(sol: &FormalSolution<R>, order: usize) -> String {
    let mut out = String::from("[coefficients]\n");
    out.push_str(&dump(&sol.h.truncated(order)));
    out.push_str("[b0]\n");
    for (kappa, b) in sol.counterterms.iter().enumerate().take(order + 1).skip(1) {
        for (j, z) in b.iter().enumerate() {
            out.push_str(&format!("{kappa} {j} {} {}\n", z.re, z.im));
        }
    }
    out
}

/// Oracle coefficients and their tree-sum reconstruction at precision `R`.
pub fn run_expand<R: Real>(model: &Model, settings: &RunSettings) -> Result<Expansion, ExplorerError> {
    let order = settings.order;
    let sol = solve_to_order::<R>(model, order + 1, None)?;
    let mut report = Report::new("expand");
    model_section(&mut report, model, settings);
    report.section("oracle").text("precision", R::NAME);
    for k in 1..=order {
        report
            .text(&format!("order {k} coefficients"), sol.h.order(k).len())
            .number(&format!("order {k} max"), sol.h.max_abs(k).to_f64_lossy())
            .complex(&format!("order {k} counterterm"), real::to_c64(sol.counterterms[k][0]));
    }
    let tol = agreement_tolerance::<R>();
    let cmp = compare_trees_with_oracle(model, &sol, order);
    report
        .section("trees")
        .number("tolerance", tol)
        .text("modes", cmp.modes)
        .number("worst coefficient", cmp.worst_coefficient)
        .number("worst counterterm", cmp.worst_counterterm)
        .verdict(
            "agreement",
            cmp.worst_coefficient <= tol && cmp.worst_counterterm <= tol,
        );
    Ok(Expansion {
        report,
        table: expansion_table(&sol, order),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SymmetryDefects {
    /// Worst relative `‖M(x)^T − M(−x)‖`.
    pub transposition: f64,
    /// Worst relative `‖M − M^†‖` at real arguments.
    pub adjointness: f64,
    /// Largest `‖M‖` met, so that vanishing defects can be told apart from vanishing matrices.
    pub largest: f64,
}

/// `M^T(x) = M(−x)` and self-adjointness at real arguments, at seeded random samples.
pub fn symmetry_defects(
    engine: &SelfEnergyEngine,
    seed: u64,
    samples: usize,
    max_level: usize,
) -> Result<SymmetryDefects, ResumError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = SymmetryDefects {
        transposition: 0.0,
        adjointness: 0.0,
        largest: 0.0,
    };
    for _ in 0..samples {
        let x = Complex64::from_polar(10f64.powf(rng.gen_range(-3.5..0.5)), rng.gen_range(-0.3..0.3));
        let eps = Complex64::from_polar(rng.gen_range(0.001..0.03), rng.gen_range(-1.0..1.0));
        let k = rng.gen_range(1..=max_level);
        let plus = engine.m_level(k, x, eps)?;
        let minus = engine.m_level(k, -x, eps)?;
        worst.transposition = worst.transposition.max(relative(&plus.transpose(), &minus));
        let real_axis = engine.m_level(k, Complex64::new(x.re, 0.0), Complex64::new(eps.norm(), 0.0))?;
        worst.adjointness = worst.adjointness.max(relative(&real_axis.adjoint(), &real_axis));
        worst.largest = worst.largest.max(sup_norm(&plus)).max(sup_norm(&real_axis));
    }
    Ok(worst)
}

pub fn relative(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    let scale = sup_norm(a).max(sup_norm(b));
    if scale == 0.0 {
        0.0
    } else {
        sup_norm(&(a - b)) / scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Suite {
    /// Formal residual and tree/oracle equivalence.
    Oracle,
    /// Zero-momentum cancellation, globally and per family.
    Cancellations,
    /// Scale certificate and Bryuno bound.
    Bryuno,
    /// Localized self-energy cancellations on trees and on the catalog.
    SelfEnergy,
    /// Transposition and self-adjointness of the self-energy matrices.
    Symmetry,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::Oracle,
        Suite::Cancellations,
        Suite::Bryuno,
        Suite::SelfEnergy,
        Suite::Symmetry,
    ];
}

fn oracle_suite(report: &mut Report, model: &Model, sol: &FormalSolution<f64>, order: usize) {
    report.section("formal residual");
    let mut worst = 0.0f64;
    for k in 1..=order {
        let residual = residual_norm(model, sol, k);
        report.number(&format!("order {k}"), residual.relative);
        worst = worst.max(residual.relative);
    }
    report.verdict("residual", worst <= RESIDUAL_TOLERANCE);
    let cmp = compare_trees_with_oracle(model, sol, order);
    report
        .section("tree oracle equivalence")
        .text("modes", cmp.modes)
        .number("worst coefficient", cmp.worst_coefficient)
        .number("worst counterterm", cmp.worst_counterterm)
        .verdict(
            "agreement",
            cmp.worst_coefficient <= RESIDUAL_TOLERANCE && cmp.worst_counterterm <= RESIDUAL_TOLERANCE,
        );
}

fn cancellation_suite(report: &mut Report, model: &Model, sol: &FormalSolution<f64>, order: usize) {
    let leaves = Leaves::from_solution(sol);
    let mut enumerator = TreeEnumerator::new(model);
    report.section("zero momentum cancellation");
    let mut pass = true;
    for k in 1..=order {
        let c = verify_zero_momentum_cancellation(model, k, &leaves, &mut enumerator);
        report
            .text(&format!("order {k} trees"), c.tree_count)
            .number(&format!("order {k} max summand"), c.max_summand)
            .number(&format!("order {k} global"), c.global_relative())
            .number(&format!("order {k} worst family"), c.worst_family_relative());
        for family in &c.families {
            report.text(
                &format!("order {k} family {}", family.key),
                format!("members={} relative={}", family.members, fmt_number(family.relative())),
            );
        }
        pass &= c.global_relative() <= ZERO_MOMENTUM_TOLERANCE && c.worst_family_relative() <= ZERO_MOMENTUM_TOLERANCE;
    }
    report.verdict("cancellation", pass);
}

fn bryuno_suite(report: &mut Report, model: &Model, seq: &ScaleSequence, order: usize) -> Result<(), ExplorerError> {
    report
        .section("scale certificate")
        .text("checked", seq.certificate.checked)
        .number("worst ratio", seq.certificate.worst_ratio)
        .verdict("certificate", seq.certificate.holds());
    report.section("bryuno bound");
    let mut enumerator = TreeEnumerator::new(model);
    let mut violations = 0usize;
    for k in 1..=order {
        let trees = enumerator.trees(k);
        for tree in &trees {
            let scaled = assign_scales(&tree.to_flat(), model.frequency(), seq)?;
            if !bryuno_check(&scaled, seq.tau()).holds() {
                violations += 1;
            }
        }
        report.text(&format!("order {k} trees"), trees.len());
    }
    report.text("violations", violations).verdict("bound", violations == 0);
    Ok(())
}

fn localized_section(report: &mut Report, name: &str, localized: &LocalizedReport) {
    let r = localized.r;
    report
        .section(name)
        .text("families", localized.families.len())
        .text("nontrivial", localized.nontrivial());
    for f in &localized.families {
        let kind = f.kind.map_or_else(|| "full".to_string(), |k| k.to_string());
        let antisymmetry = f.antisymmetry_residual(r).map_or_else(|| "-".to_string(), fmt_number);
        report.text(
            &format!("family {} window {} kind {kind}", f.key, f.window),
            format!(
                "members={} type1={} mixed={} antisymmetry={antisymmetry} type4={}",
                f.members,
                fmt_number(f.type1_residual(r)),
                fmt_number(f.mixed_constant_residual(r)),
                fmt_number(f.type4_residual(r)),
            ),
        );
    }
    report
        .number("worst type 1", localized.worst_type1())
        .number("worst mixed constant", localized.worst_mixed_constant())
        .number("worst antisymmetry", localized.worst_antisymmetry())
        .number("worst type 4", localized.worst_type4())
        .verdict(
            "cancellations",
            localized.holds(STRICT_CANCELLATION_TOLERANCE, MIXED_CANCELLATION_TOLERANCE),
        );
}

fn self_energy_suite(
    report: &mut Report,
    model: &Model,
    seq: &ScaleSequence,
    catalog: &SelfEnergyCatalog,
    order: usize,
) -> Result<(), ExplorerError> {
    let trees = verify_localized_cancellations(model, order, seq).map_err(ResumError::from)?;
    localized_section(report, "localized cancellation trees", &trees);
    let mut all = LocalizedReport {
        r: model.r(),
        families: Vec::new(),
    };
    for n in seq.windows() {
        let window = verify_catalog_cancellations(model, catalog, n).map_err(ResumError::from)?;
        all.families.extend(window.families);
    }
    localized_section(report, "localized cancellation catalog", &all);
    Ok(())
}

/// Runs the selected suites at double precision. Bryuno runs one order beyond `settings.order`.
pub fn run_verify(model: &Model, settings: &RunSettings, suites: &[Suite]) -> Result<Report, ExplorerError> {
    let order = settings.order;
    let mut report = Report::new("verify");
    model_section(&mut report, model, settings);
    let seq = build_scale_sequence(model.frequency(), settings.n_min)?;
    let wants = |s: Suite| suites.contains(&s);
    if wants(Suite::Oracle) || wants(Suite::Cancellations) {
        let sol = solve_to_order::<f64>(model, order + 1, None)?;
        if wants(Suite::Oracle) {
            oracle_suite(&mut report, model, &sol, order);
        }
        if wants(Suite::Cancellations) {
            cancellation_suite(&mut report, model, &sol, order);
        }
    }
    if wants(Suite::Bryuno) {
        bryuno_suite(&mut report, model, &seq, order + 1)?;
    }
    if wants(Suite::SelfEnergy) || wants(Suite::Symmetry) {
        let catalog = build_catalog(model, &seq, settings.v_max);
        if wants(Suite::SelfEnergy) {
            self_energy_suite(&mut report, model, &seq, &catalog, order)?;
        }
        if wants(Suite::Symmetry) {
            let engine = SelfEnergyEngine::new(model, catalog, seq);
            let defects = symmetry_defects(&engine, settings.seed, settings.samples, 3)?;
            report
                .section("self-energy symmetry")
                .text("seed", settings.seed)
                .text("samples", settings.samples)
                .number("largest norm", defects.largest)
                .number("transposition", defects.transposition)
                .number("self-adjointness", defects.adjointness)
                .verdict(
                    "symmetry",
                    defects.transposition <= SYMMETRY_TOLERANCE && defects.adjointness <= SYMMETRY_TOLERANCE,
                );
        }
    }
    Ok(report)
}

/// Zero-momentum α trees of every order through `order`, one indented listing each.
pub fn dump_zero_momentum_trees(model: &Model, order: usize) -> String {
    let mut enumerator = TreeEnumerator::new(model);
    let zero = lattice::zero(model.r());
    let mut out = String::new();
    for k in 1..=order {
        for (i, tree) in enumerator.trees_at(k, &zero, Component::Alpha).iter().enumerate() {
            out.push_str(&format!(
                "# order {k} tree {i} family {}\n",
                unrooted_key(&tree.to_flat())
            ));
            out.push_str(&tree.dump());
        }
    }
    out
}

fn block_section(report: &mut Report, blocks: &BlockBoundReport) {
    report
        .section("block bounds")
        .text("level", blocks.level)
        .complex("eps", blocks.eps)
        .numbers("x", &blocks.xs)
        .numbers("slopes", &blocks.block_slopes)
        .numbers("eps values", &blocks.eps_values)
        .numbers("beta offsets", &blocks.beta_offsets)
        .number("eps slope", blocks.eps_slope)
        .verdict("orders", blocks.holds(SLOPE_TOLERANCE));
}

/// Fixed-point history of `M` in every scale window and the block vanishing orders.
pub fn run_resum(model: &Model, settings: &RunSettings) -> Result<Report, ExplorerError> {
    let engine = SelfEnergyEngine::build(model, settings.n_min, settings.v_max)?;
    let eps = Complex64::new(settings.eps, 0.0);
    let mut report = Report::new("resum");
    model_section(&mut report, model, settings);
    report
        .section("catalog")
        .text("skeletons", engine.catalog().skeletons.len())
        .number("eps", settings.eps);
    let mut fitted = 0.0f64;
    for n in engine.sequence().windows() {
        let x = Complex64::new(engine.sequence().sample_in_window(n), 0.0);
        report.section(&format!("window {n}")).number("x", x.re);
        match engine.m_limit(x, eps, FIXED_POINT_TOLERANCE, FIXED_POINT_LEVELS) {
            Ok(limit) => {
                let identity = engine
                    .dressed_propagator(limit.iterations, x, eps)?
                    .try_inverse()
                    .map(|inverse| {
                        relative(
                            &((&limit.matrix + inverse) / (x * x)),
                            &DMatrix::identity(engine.d(), engine.d()),
                        )
                    })
                    .unwrap_or(f64::INFINITY);
                fitted = limit
                    .ratios
                    .iter()
                    .fold(fitted, |c, q| c.max(q / (settings.eps * settings.eps)));
                report
                    .text("iterations", limit.iterations)
                    .numbers("deltas", &limit.deltas)
                    .numbers("ratios", &limit.ratios)
                    .number("identity", identity);
                for i in 0..engine.d() {
                    for j in 0..engine.d() {
                        report.complex(&format!("m[{i},{j}]"), limit.matrix[(i, j)]);
                    }
                }
                report
                    .verdict("contraction", limit.ratios.iter().all(|&q| q < 1.0))
                    .verdict("identity", identity <= FIXED_POINT_TOLERANCE);
            }
            Err(e) => {
                report.text("error", e).verdict("converged", false);
            }
        }
    }
    report.section("contraction").number("fitted constant", fitted);
    let blocks = engine.verify_block_bounds(settings.order.max(1), eps, BLOCK_FIT_RANGE)?;
    block_section(&mut report, &blocks);
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct DomainRun {
    pub report: Report,
    pub csv: String,
}

/// Heart-shaped domain probe; `eps0` is calibrated when not supplied.
pub fn run_probe_domain(
    model: &Model,
    settings: &RunSettings,
    phi_grid: &[f64],
    eps0: Option<f64>,
    probe_settings: ProbeSettings,
) -> Result<DomainRun, ExplorerError> {
    let engine = SelfEnergyEngine::build(model, settings.n_min, settings.v_max)?;
    let probe = DomainProbe::new(&engine, probe_settings);
    let calibrated = eps0.is_none();
    let eps0 = eps0.unwrap_or_else(|| probe.calibrate_eps0(phi_grid));
    let spec = DomainSpec::new(eps0, phi_grid.to_vec());
    let domain = probe.probe(&spec);
    let mut report = Report::new("probe-domain");
    model_section(&mut report, model, settings);
    report
        .section("heart")
        .number("eps0", eps0)
        .text("calibrated", calibrated)
        .numbers("phi", phi_grid);
    for &phi in phi_grid {
        let margin = domain
            .samples
            .iter()
            .filter(|s| s.phi == phi)
            .map(|s| s.norm_margin)
            .fold(f64::INFINITY, f64::min);
        report
            .number(&format!("phi {phi:.16e} worst margin"), margin)
            .verdict(&format!("phi {phi:.16e}"), domain.phi_passes(phi));
    }
    report.verdict("negative axis fails", domain.negative_fails());
    report.section("boundary");
    for (j, z) in domain.boundary.iter().enumerate() {
        report.complex(&format!("vertex {j}"), *z);
    }
    report.section("cusp");
    for (a, b) in &domain.cusp {
        report.numbers("point", &[*a, *b]);
    }
    report
        .number("slope", domain.cusp_slope)
        .verdict("quadratic", domain.cusp_holds(CUSP_TOLERANCE));
    Ok(DomainRun {
        report,
        csv: domain.csv(),
    })
}

/// Tree enumeration time through `settings.order` and throughput of the scalar
/// convolution of an oracle component at twice that order.
pub fn run_bench(model: &Model, settings: &RunSettings) -> Result<Report, ExplorerError> {
    let order = settings.order.max(1);
    let mut report = Report::new("bench");
    model_section(&mut report, model, settings);
    let start = Instant::now();
    let mut enumerator = TreeEnumerator::new(model);
    let counts: Vec<usize> = (1..=order).map(|k| enumerator.trees(k).len()).collect();
    let seconds = start.elapsed().as_secs_f64();
    report
        .section("enumeration")
        .text("trees", format!("{counts:?}"))
        .number("seconds", seconds);

    let depth = 2 * order;
    let sol = solve_to_order::<f64>(model, depth, None)?;
    let scalar = sol.h.components(0..1);
    let rule = BilinearRule::scalar();
    let products: usize = (0..=depth)
        .map(|k| {
            (0..=k)
                .map(|j| scalar.order(j).len() * scalar.order(k - j).len())
                .sum::<usize>()
        })
        .sum();
    let repetitions = 20;
    let start = Instant::now();
    for _ in 0..repetitions {
        std::hint::black_box(ft_convolve(&scalar, &scalar, &rule));
    }
    let seconds = start.elapsed().as_secs_f64();
    report
        .section("convolution")
        .text("order", depth)
        .text("terms", scalar.len())
        .text("products per call", products)
        .text("calls", repetitions)
        .number("seconds", seconds)
        .number(
            "products per second",
            (products * repetitions) as f64 / seconds.max(f64::MIN_POSITIVE),
        );
    Ok(report)
}
