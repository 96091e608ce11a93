//! Named verification suites. Each suite draws its samples from one seeded
//! generator before evaluating them in parallel, and reduces every named
//! residual to its maximum over the samples.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use super::config::{ScanConfig, Target};
use super::report::{CheckRecord, Environment, NamedValue, ScanReport, Value};
use crate::error::{Error, Result};
use crate::fields::{self, field_by_name, AcsField};
use crate::grassmann::{
    self, canonical_p, random_idempotent, random_orthogonal, random_self_adjoint_tangent, random_tangent,
    s2_criterion, GrassTangent, MapKind, Maps, Projector,
};
use crate::linalg;
use crate::poly::Poly2;
use crate::tensor::{JrmSplit, TangentSample, Tensors};

/// Pointwise `J` conjugation strength used by the `jrm` suite.
pub const JRM_CONJUGATION: f64 = 0.3;

/// Tolerance on `|det + threshold|` for the degeneracy flag.
pub const DEGENERACY_TOL: f64 = 1e-9;

/// Name of the check counting samples whose evaluation failed.
pub const FAILURE_CHECK: &str = "evaluation_failures";

/// A sample: point, metric-unit tangent vectors, and a seed for any extra
/// randomness the evaluation needs.
pub(crate) type Draw = (TangentSample, u64);

pub(crate) fn draw_samples(field: &dyn AcsField, seed: u64, n: usize, k: usize) -> Result<Vec<Draw>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let s = TangentSample::draw(field, k, &mut rng)?;
            Ok((s, rng.random()))
        })
        .collect()
}

/// Maximum that propagates NaN.
pub(crate) fn worst(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

pub(crate) fn effective_step(cfg: &ScanConfig, field: &dyn AcsField) -> f64 {
    cfg.step.unwrap_or_else(|| field.backend().default_step())
}

pub(crate) fn environment(cfg: &ScanConfig, step: f64) -> Environment {
    Environment {
        seed: cfg.seed,
        step,
        samples: cfg.samples,
        wall_time_s: 0.0,
    }
}

/// Evaluates `f` on every draw in parallel and reduces each residual to
/// its maximum. Failed samples are counted in a separate check.
fn reduce<F>(cfg: &ScanConfig, specs: &[(String, f64)], draws: &[Draw], f: F) -> Vec<CheckRecord>
where
    F: Fn(&TangentSample, u64) -> Result<Vec<f64>> + Sync,
{
    let results: Vec<Result<Vec<f64>>> = draws.par_iter().map(|(s, seed)| f(s, *seed)).collect();
    let mut maxima: Vec<Option<f64>> = vec![None; specs.len()];
    let mut failures = 0usize;
    for r in results {
        match r {
            Ok(v) => {
                debug_assert_eq!(v.len(), specs.len());
                for (m, x) in maxima.iter_mut().zip(v) {
                    *m = Some(m.map_or(x, |m| worst(m, x)));
                }
            }
            Err(_) => failures += 1,
        }
    }
    // A check with no successful sample has no evidence and fails as NaN.
    let mut checks: Vec<CheckRecord> = specs
        .iter()
        .zip(maxima)
        .map(|((name, tol), m)| CheckRecord::new(name.clone(), m.unwrap_or(f64::NAN), cfg.tol(name, *tol)))
        .collect();
    checks.push(CheckRecord::new(FAILURE_CHECK, failures as f64, cfg.tol(FAILURE_CHECK, 0.5)));
    checks
}

fn specs(list: &[(&str, f64)]) -> Vec<(String, f64)> {
    list.iter().map(|(n, t)| (n.to_string(), *t)).collect()
}

fn relative(diff: f64, reference: f64) -> f64 {
    diff.abs() / (1.0 + reference.abs())
}

fn require_sphere(field: &dyn AcsField, suite: &str) -> Result<()> {
    if !field.backend().is_sphere() {
        return Err(Error::Config(format!(
            "suite `{suite}` needs a sphere field; `{}` lives on a chart",
            field.name()
        )));
    }
    Ok(())
}

pub fn run_suite(cfg: &ScanConfig) -> Result<ScanReport> {
    cfg.validate()?;
    let Target::Suite(name) = &cfg.target else {
        return Err(Error::Config(format!("`{}` is a scan quantity, not a suite", cfg.target.name())));
    };
    let start = Instant::now();
    let field = field_by_name(&cfg.field, &cfg.params)?;
    let field = field.as_ref();
    let step = effective_step(cfg, field);
    let mut report = ScanReport::new(name.clone(), cfg.field.clone(), environment(cfg, step));
    match name.as_str() {
        "validate" => validate_suite(cfg, field, &mut report)?,
        "tensor-identities" => tensor_identities(cfg, field, step, &mut report)?,
        "jrm" => jrm_suite(cfg, field, &mut report)?,
        "thm44" => pullback_suite(cfg, field, step, PullbackForm::ReOmega, &mut report)?,
        "prop56" => pullback_suite(cfg, field, step, PullbackForm::Kahler, &mut report)?,
        "thm53" => dbar_suite(cfg, field, step, &mut report)?,
        "taming" => taming_suite(cfg, field, step, &mut report)?,
        "s2-criterion" => s2_suite(cfg, &mut report)?,
        "cor47-identity" => skew_trace_suite(cfg, field, step, &mut report)?,
        other => return Err(Error::Config(format!("unknown suite `{other}`"))),
    }
    report.environment.wall_time_s = start.elapsed().as_secs_f64();
    Ok(report)
}

fn validate_suite(cfg: &ScanConfig, field: &dyn AcsField, report: &mut ScanReport) -> Result<()> {
    let v = fields::validate(field, cfg.samples, cfg.seed, 1e-9)?;
    let list = [
        ("square", v.square_residual, 1e-9),
        ("tangency", v.tangency_residual, 1e-9),
        ("continuity", v.continuity_residual, 1e-6),
        (FAILURE_CHECK, v.failures.len() as f64, 0.5),
    ];
    for (name, r, tol) in list {
        report.checks.push(CheckRecord::new(name, r, cfg.tol(name, tol)));
    }
    Ok(())
}

fn tensor_identities(cfg: &ScanConfig, field: &dyn AcsField, step: f64, report: &mut ScanReport) -> Result<()> {
    let specs = specs(&[
        ("nabla_j_anticommutes", 1e-6),
        ("nabla_j_trace_free", 1e-6),
        ("m_antilinear_first", 1e-6),
        ("m_antilinear_second", 1e-6),
        ("nijenhuis_vs_bracket", 1e-5),
        ("nijenhuis_antilinear", 1e-6),
        ("complexified_identity", 1e-6),
        ("qform_j_invariant", 1e-6),
        ("qform_identity", 1e-6),
        ("eta_alternating", 1e-9),
    ]);
    let draws = draw_samples(field, cfg.seed, cfg.samples, 3)?;
    let t = Tensors::with_step(field, step);
    report.checks = reduce(cfg, &specs, &draws, |s, _| {
        let (p, x, y, z) = (&s.point, &s.vectors[0], &s.vectors[1], &s.vectors[2]);
        let j = t.j(p)?;
        let nj = t.nabla_j(p, x)?;
        let m = t.tangent_algebra_m(p, x, y)?;
        let jm = &j * &m;
        let m_first = (t.tangent_algebra_m(p, &(&j * x), y)? + &jm).norm() / (1.0 + m.norm());
        let m_second = (t.tangent_algebra_m(p, x, &(&j * y))? + &jm).norm() / (1.0 + m.norm());
        let n = t.nijenhuis(p, x, y)?;
        let oracle = t.nijenhuis_bracket_oracle(p, x, y)?;
        let n_anti = (t.nijenhuis(p, &(&j * x), y)? + &j * &n).norm() / (1.0 + n.norm());
        let (lhs, rhs) = t.complexified_identity(p, x, y)?;
        let split = t.jrm_split(p)?;
        let q = t.q_form(p, z, x)?;
        let qj = t.q_form(p, &(&j * z), x)?;
        let q_sum = t.q_form(p, z, &(&j * x))? + q;
        let q_rhs = split.ip(&t.tangent_algebra_m(p, x, z)?, &t.tangent_algebra_m(p, z, x)?);
        let eta = t.eta_form(p, x, y)? + t.eta_form(p, y, x)?;
        Ok(vec![
            nj.anticommutator_residual(&j),
            nj.trace().abs(),
            m_first,
            m_second,
            (&n - &oracle).norm() / (1.0 + n.norm()),
            n_anti,
            (&lhs - &rhs).norm() / (1.0 + rhs.norm()),
            relative(q - qj, q),
            relative(q_sum - q_rhs, q_rhs),
            eta.abs(),
        ])
    });
    Ok(())
}

fn jrm_suite(cfg: &ScanConfig, field: &dyn AcsField, report: &mut ScanReport) -> Result<()> {
    let names: Vec<&str> = {
        let s = field.structure(&field.sample_point(&mut ChaCha8Rng::seed_from_u64(cfg.seed)))?;
        JrmSplit::new(&s)?.property_residuals().into_iter().map(|(n, _)| n).collect()
    };
    let mut list: Vec<(String, f64)> = Vec::new();
    for prefix in ["", "conjugated_"] {
        for n in &names {
            list.push((format!("{prefix}{n}"), 1e-9));
        }
    }
    // Strict positivity: -lambda_min <= -1e-12.
    list.push(("ip_positive".into(), -1e-12));
    let draws = draw_samples(field, cfg.seed, cfg.samples, 0)?;
    report.checks = reduce(cfg, &list, &draws, |s, seed| {
        let base = field.structure(&s.point)?;
        let conj = base.conjugated(JRM_CONJUGATION, &mut ChaCha8Rng::seed_from_u64(seed))?;
        let mut out = Vec::with_capacity(list.len());
        let mut lambda = f64::INFINITY;
        for st in [&base, &conj] {
            let split = JrmSplit::new(st)?;
            out.extend(split.property_residuals().into_iter().map(|(_, r)| r));
            lambda = lambda.min(split.ip_min_eigenvalue());
        }
        out.push(-lambda);
        Ok(out)
    });
    Ok(())
}

#[derive(Clone, Copy)]
enum PullbackForm {
    ReOmega,
    Kahler,
}

fn pullback_suite(
    cfg: &ScanConfig,
    field: &dyn AcsField,
    step: f64,
    form: PullbackForm,
    report: &mut ScanReport,
) -> Result<()> {
    require_sphere(field, report.suite.as_str())?;
    let draws = draw_samples(field, cfg.seed, cfg.samples, 2)?;
    let maps = Maps::with_step(field, step);
    report.checks = reduce(cfg, &specs(&[("fd_vs_closed", 1e-5)]), &draws, |s, _| {
        let (p, x, y) = (&s.point, &s.vectors[0], &s.vectors[1]);
        let (fd, closed) = match form {
            PullbackForm::ReOmega => (maps.pullback_reomega_fd(p, x, y)?, maps.pullback_reomega_closed(p, x, y)?),
            PullbackForm::Kahler => (maps.pullback_kahler_fd(p, x, y)?, maps.pullback_kahler_closed(p, x, y)?),
        };
        Ok(vec![relative(fd - closed, closed)])
    });
    Ok(())
}

fn dbar_suite(cfg: &ScanConfig, field: &dyn AcsField, step: f64, report: &mut ScanReport) -> Result<()> {
    require_sphere(field, "thm53")?;
    let draws = draw_samples(field, cfg.seed, cfg.samples, 2)?;
    let maps = Maps::with_step(field, step);
    let t = Tensors::with_step(field, step);
    let list = specs(&[("dbar_normal", 1e-6), ("dbar_tangent", 1e-5)]);
    report.checks = reduce(cfg, &list, &draws, |s, _| {
        let (p, x, y) = (&s.point, &s.vectors[0], &s.vectors[1]);
        let j = t.j(p)?;
        let normal = maps.dbar_perp(p, x, &linalg::complexify_vec(p))?;
        let v = linalg::combine(y, &(&j * y));
        let dbar = maps.dbar_perp(p, x, &v)?;
        let target = maps.dbar_perp_target(p, x, y)?;
        let m = t.tangent_algebra_m(p, x, y)?;
        Ok(vec![normal.norm(), (dbar - target).norm() / (1.0 + m.norm())])
    });
    Ok(())
}

/// `1/2 (||B pi_Ker||^2 + ||C pi_Im||^2)`.
fn taming_formula(p: &Projector, t: &GrassTangent) -> f64 {
    let pi_im = linalg::column_span_projector(&p.mat);
    let pi_ker = linalg::column_span_projector(&p.complement());
    0.5 * ((&t.b * pi_ker).norm_squared() + (&t.c * pi_im).norm_squared())
}

fn taming_suite(cfg: &ScanConfig, field: &dyn AcsField, step: f64, report: &mut ScanReport) -> Result<()> {
    let list = specs(&[
        ("taming_positive", -1e-12),
        ("taming_formula", 1e-10),
        ("k_block_equivalence", 1e-12),
        ("k_squared", 1e-12),
        ("fd_tangency", 5.0 * step * step),
    ]);
    let draws = draw_samples(field, cfg.seed, cfg.samples, 1)?;
    let maps = Maps::with_step(field, step);
    report.checks = reduce(cfg, &list, &draws, |s, seed| {
        let (p, x) = (&s.point, &s.vectors[0]);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let base = canonical_p(field, p)?;
        let (n, k) = (base.dim(), base.rank);
        let idem = random_idempotent(n, k, &mut rng);
        let mut positivity = f64::NEG_INFINITY;
        let mut formula: f64 = 0.0;
        for proj in [&idem, &base] {
            let t = random_tangent(proj, &mut rng);
            let value = grassmann::taming_check(proj, &t)?;
            positivity = positivity.max(-value / t.mat.norm_squared());
            formula = formula.max(relative(value - taming_formula(proj, &t), value));
        }
        let orth = random_orthogonal(n, k, &mut rng);
        let t = random_self_adjoint_tangent(&orth, &mut rng);
        let kt = grassmann::grassmann_k(&orth, &t)?;
        let blocks = grassmann::grassmann_k_blocks(&orth, &t)?;
        let kkt = grassmann::grassmann_k(&orth, &kt)?;
        let (_, d) = maps.d_map(p, x, MapKind::Canonical)?;
        Ok(vec![
            positivity,
            formula,
            (&kt.mat - blocks).norm(),
            (&kkt.mat + &t.mat).norm(),
            d.tangency_residual,
        ])
    });
    Ok(())
}

/// A random polynomial of degree at most 2 with standard normal coefficients.
fn random_quadratic(rng: &mut ChaCha8Rng) -> Poly2 {
    let terms = [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]
        .into_iter()
        .map(|(a, b)| (a, b, rng.sample::<f64, _>(StandardNormal)))
        .collect();
    Poly2::new(terms)
}

/// `(f, g)` with `|g(0, 0)| >= 1/2`.
pub(crate) fn random_fg(rng: &mut ChaCha8Rng) -> (Poly2, Poly2) {
    let f = random_quadratic(rng);
    let mut g = random_quadratic(rng);
    let g0 = g.eval(0.0, 0.0);
    let shift = g0.signum() * 0.5;
    g = Poly2::new(g.terms().iter().copied().chain([(0, 0, shift)]).collect());
    (f, g)
}

fn s2_suite(cfg: &ScanConfig, report: &mut ScanReport) -> Result<()> {
    if cfg.field != "stereo-fg" {
        return Err(Error::Config(format!(
            "suite `s2-criterion` needs the `stereo-fg` field, got `{}`",
            cfg.field
        )));
    }
    let (f, g) = cfg
        .params
        .fg
        .clone()
        .unwrap_or_else(|| (Poly2::default(), Poly2::constant(1.0)));
    let c = s2_criterion(&f, &g, DEGENERACY_TOL)?;
    report.checks.push(CheckRecord::new(
        "closed_vs_chart",
        relative(c.pullback_value - c.chart_pullback_value, c.pullback_value),
        cfg.tol("closed_vs_chart", 1e-8),
    ));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let pairs: Vec<(Poly2, Poly2)> = (0..cfg.samples).map(|_| random_fg(&mut rng)).collect();
    let results: Vec<Result<f64>> = pairs
        .par_iter()
        .map(|(f, g)| {
            let r = s2_criterion(f, g, DEGENERACY_TOL)?;
            Ok(relative(r.pullback_value - r.chart_pullback_value, r.pullback_value))
        })
        .collect();
    let mut max: Option<f64> = None;
    let mut failures = 0usize;
    for r in results {
        match r {
            Ok(v) => max = Some(max.map_or(v, |m| worst(m, v))),
            Err(_) => failures += 1,
        }
    }
    let max = max.unwrap_or(f64::NAN);
    report
        .checks
        .push(CheckRecord::new("random_closed_vs_chart", max, cfg.tol("random_closed_vs_chart", 1e-8)));
    report
        .checks
        .push(CheckRecord::new(FAILURE_CHECK, failures as f64, cfg.tol(FAILURE_CHECK, 0.5)));
    let values = [
        ("det_df", Value::Number(c.det_df)),
        ("threshold", Value::Number(c.threshold)),
        ("pullback_value", Value::Number(c.pullback_value)),
        ("chart_pullback_value", Value::Number(c.chart_pullback_value)),
        ("opposite_sign_value", Value::Number(c.opposite_sign_value)),
        ("degenerate", Value::Flag(c.degenerate)),
        ("opposite_sign_degenerate", Value::Flag(c.opposite_sign_degenerate)),
    ];
    report.values = values
        .into_iter()
        .map(|(name, value)| NamedValue {
            name: name.into(),
            value,
        })
        .collect();
    Ok(())
}

fn skew_trace_suite(cfg: &ScanConfig, field: &dyn AcsField, step: f64, report: &mut ScanReport) -> Result<()> {
    let draws = draw_samples(field, cfg.seed, cfg.samples, 1)?;
    let first = field.structure(&draws[0].0.point)?;
    if !first.is_orthogonal() {
        return Err(Error::Config(format!(
            "suite `cor47-identity` needs an orthogonal field; `{}` is not",
            field.name()
        )));
    }
    let t = Tensors::with_step(field, step);
    let list = specs(&[("lhs_eq_rhs", 1e-6), ("sides_nonnegative", 1e-9)]);
    report.checks = reduce(cfg, &list, &draws, |s, _| {
        let (lhs, rhs) = t.skew_trace_identity(&s.point, &s.vectors[0])?;
        Ok(vec![relative(lhs - rhs, rhs), -lhs.min(rhs)])
    });
    Ok(())
}
