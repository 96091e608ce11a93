//! Scans of pointwise functionals over the unit sphere bundle, with
//! extrema, witnesses, and an optional derivative-free witness search.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::config::{ScanConfig, Target};
use super::report::{CheckRecord, Extremum, NamedValue, ScanReport, Value, Witness};
use super::suites::{draw_samples, effective_step, environment, FAILURE_CHECK};
use crate::error::{Error, Result};
use crate::fields::{field_by_name, sample_unit_tangent, AcsField};
use crate::geometry::Backend;
use crate::linalg::RVector;
use crate::tensor::Tensors;

/// Sweeps of the coordinate ascent.
pub const ASCENT_SWEEPS: usize = 200;

/// Initial coordinate step of the ascent.
pub const ASCENT_STEP: f64 = 0.1;

/// Tolerance encoding "strictly positive somewhere": `-max <= -1e-12`.
const STRICT: f64 = -1e-12;

/// Grid of `x` values for the planar bounds scan.
pub fn planar_grid() -> (Vec<f64>, Vec<f64>) {
    let below = (1..=9).map(|k| k as f64 / 10.0).collect();
    let above = (11..=30).map(|k| k as f64 / 10.0).collect();
    (below, above)
}

type Eval<'a> = Box<dyn Fn(&RVector, &[RVector]) -> Result<Vec<f64>> + Sync + 'a>;

/// A functional of a point and a list of tangent directions, returning
/// one value per named quantity. The first quantity is the one searched.
struct Functional<'a> {
    names: &'static [&'static str],
    directions: usize,
    eval: Eval<'a>,
}

fn functional<'a>(quantity: &str, t: Tensors<'a>) -> Result<Functional<'a>> {
    let field = t.field;
    Ok(match quantity {
        "commutator-obstruction" => Functional {
            names: &["commutator-obstruction", "commutator-obstruction-unit"],
            directions: 1,
            eval: Box::new(move |p, d| {
                let x = &d[0];
                let jx = t.j(p)? * x;
                let tr = t.commutator_trace_t01(p, x, &jx)?.im;
                let b = field.backend();
                let norms = b.inner(p, x, x)? + b.inner(p, &jx, &jx)?;
                Ok(vec![tr - 2.0 * norms, tr - 2.0])
            }),
        },
        "eta-nu" => Functional {
            names: &["eta-nu", "eta", "nu"],
            directions: 1,
            eval: Box::new(move |p, d| {
                let x = &d[0];
                let jx = t.j(p)? * x;
                let eta = t.eta_form(p, x, &jx)?;
                let nu = t.jrm_split(p)?.nu(x, &jx);
                Ok(vec![eta + nu, eta, nu])
            }),
        },
        "qform-bounds" | "example24-bounds" => Functional {
            names: &["halfspace-gap", "disk-gap", "halfspace-lhs", "halfspace-rhs"],
            directions: 2,
            eval: Box::new(move |p, d| qform_sides(&t, p, &d[0], &d[1])),
        },
        other => return Err(Error::Config(format!("unknown quantity `{other}`"))),
    })
}

/// Both first-order bounds on `m` in terms of `nabla J`: the half-space
/// bound `lhs <= rhs` with `lhs = ((nabla_X J) Z, J m(Z, X))` and
/// `rhs = ||(nabla_X J) Z||^2`, and the disk bound
/// `||m(Z, X)|| <= ||(nabla_X J) Z||`. Returns
/// `[lhs - rhs, ||m(Z, X)|| - ||(nabla_X J) Z||, lhs, rhs]`.
fn qform_sides(t: &Tensors, p: &RVector, x: &RVector, z: &RVector) -> Result<Vec<f64>> {
    let split = t.jrm_split(p)?;
    let az = t.nabla_j_matrix(p, x)? * z;
    let m = t.tangent_algebra_m(p, z, x)?;
    let lhs = split.ip(&az, &(&split.j * &m));
    let rhs = split.ip(&az, &az);
    let norm_gap = split.ip(&m, &m).max(0.0).sqrt() - rhs.max(0.0).sqrt();
    Ok(vec![lhs - rhs, norm_gap, lhs, rhs])
}

/// Running extrema of one quantity.
#[derive(Clone)]
struct Tracker {
    max: f64,
    argmax: Option<(RVector, Vec<RVector>)>,
    min: f64,
    argmin: Option<(RVector, Vec<RVector>)>,
}

impl Tracker {
    fn new() -> Self {
        Self {
            max: f64::NEG_INFINITY,
            argmax: None,
            min: f64::INFINITY,
            argmin: None,
        }
    }

    fn add(&mut self, v: f64, p: &RVector, d: &[RVector]) {
        if v.is_nan() {
            return;
        }
        if v > self.max {
            self.max = v;
            self.argmax = Some((p.clone(), d.to_vec()));
        }
        if v < self.min {
            self.min = v;
            self.argmin = Some((p.clone(), d.to_vec()));
        }
    }

    fn record(&self, quantity: &str) -> Extremum {
        let witness = |w: &Option<(RVector, Vec<RVector>)>| match w {
            Some((p, d)) => Witness {
                point: p.iter().copied().collect(),
                direction: d.iter().flat_map(|v| v.iter().copied()).collect(),
            },
            None => Witness {
                point: Vec::new(),
                direction: Vec::new(),
            },
        };
        let finite = |x: f64| if x.is_finite() { x } else { f64::NAN };
        Extremum {
            quantity: quantity.to_string(),
            max: finite(self.max),
            argmax: witness(&self.argmax),
            min: finite(self.min),
            argmin: witness(&self.argmin),
        }
    }
}

/// Moves a perturbed state back onto the unit sphere bundle.
fn retract(backend: &Backend, p: &RVector, dirs: &[RVector]) -> Result<(RVector, Vec<RVector>)> {
    let p = match backend {
        Backend::Sphere { .. } => p.normalize(),
        Backend::Chart(_) => p.clone(),
    };
    backend.check_point(&p)?;
    let pi = backend.tangent_projector(&p);
    let scale = backend.metric_scale(&p)?;
    let dirs = dirs
        .iter()
        .map(|d| {
            let v = &pi * d;
            let n = v.norm() * scale.sqrt();
            if n > 1e-12 {
                Ok(v / n)
            } else {
                Err(Error::Degenerate { rank: 0, expected: 1 })
            }
        })
        .collect::<Result<_>>()?;
    Ok((p, dirs))
}

/// Projected coordinate ascent with step halving: each sweep tries `+/-`
/// the current step along every ambient coordinate of the point and of
/// each direction, keeping the first improvement; a sweep without any
/// improvement halves the step.
pub fn coordinate_ascent(
    backend: &Backend,
    f: &dyn Fn(&RVector, &[RVector]) -> Result<f64>,
    p: RVector,
    dirs: Vec<RVector>,
    value: f64,
) -> (RVector, Vec<RVector>, f64) {
    let (mut p, mut dirs, mut best) = (p, dirs, value);
    let mut delta = ASCENT_STEP;
    let n = p.len();
    for _ in 0..ASCENT_SWEEPS {
        let mut improved = false;
        for slot in 0..=dirs.len() {
            for i in 0..n {
                for sign in [1.0, -1.0] {
                    let (mut cp, mut cd) = (p.clone(), dirs.clone());
                    if slot == 0 {
                        cp[i] += sign * delta;
                    } else {
                        cd[slot - 1][i] += sign * delta;
                    }
                    let Ok((cp, cd)) = retract(backend, &cp, &cd) else { continue };
                    if let Ok(v) = f(&cp, &cd) {
                        if v > best {
                            (p, dirs, best) = (cp, cd, v);
                            improved = true;
                            break;
                        }
                    }
                }
            }
        }
        if !improved {
            delta *= 0.5;
        }
    }
    (p, dirs, best)
}

pub fn scan(cfg: &ScanConfig) -> Result<ScanReport> {
    cfg.validate()?;
    let Target::Quantity(quantity) = &cfg.target else {
        return Err(Error::Config(format!("`{}` is a suite, not a scan quantity", cfg.target.name())));
    };
    let start = Instant::now();
    let field = field_by_name(&cfg.field, &cfg.params)?;
    let field = field.as_ref();
    let step = effective_step(cfg, field);
    let t = Tensors::with_step(field, step);
    let f = functional(quantity, t)?;
    let mut report = ScanReport::new(quantity.clone(), cfg.field.clone(), environment(cfg, step));

    let draws: Vec<(RVector, Vec<RVector>)> = if quantity == "example24-bounds" {
        grid_draws(cfg, field)?
    } else {
        draw_samples(field, cfg.seed, cfg.samples, f.directions)?
            .into_iter()
            .map(|(s, _)| (s.point, s.vectors))
            .collect()
    };
    let results: Vec<Result<Vec<f64>>> = draws.par_iter().map(|(p, d)| (f.eval)(p, d)).collect();

    let mut trackers = vec![Tracker::new(); f.names.len()];
    let mut failures = 0usize;
    for ((p, d), r) in draws.iter().zip(&results) {
        match r {
            Ok(v) => {
                for (tr, &x) in trackers.iter_mut().zip(v) {
                    tr.add(x, p, d);
                }
            }
            Err(_) => failures += 1,
        }
    }

    let mut optimized = false;
    if cfg.optimize && quantity != "example24-bounds" {
        if let Some((p0, d0)) = trackers[0].argmax.clone() {
            let primary = |p: &RVector, d: &[RVector]| -> Result<f64> { Ok((f.eval)(p, d)?[0]) };
            let (p, d, v) = coordinate_ascent(field.backend(), &primary, p0, d0, trackers[0].max);
            if let Ok(all) = (f.eval)(&p, &d) {
                for (tr, &x) in trackers.iter_mut().zip(&all) {
                    tr.add(x, &p, &d);
                }
            }
            report.values.push(NamedValue {
                name: "ascent_gain".into(),
                value: Value::Number(v - draws_max(&results)),
            });
            optimized = true;
        }
    }
    report.values.push(NamedValue {
        name: "optimized".into(),
        value: Value::Flag(optimized),
    });

    report.extrema = f
        .names
        .iter()
        .zip(&trackers)
        .map(|(name, tr)| tr.record(name))
        .collect();

    match quantity.as_str() {
        "commutator-obstruction" if matches!(field.backend(), Backend::Sphere { n: 3 }) => {
            for (name, tr) in [("witness_found", &trackers[0]), ("unit_witness_found", &trackers[1])] {
                report.checks.push(CheckRecord::new(name, -tr.max, cfg.tol(name, 1e-3)));
            }
        }
        "example24-bounds" => planar_bounds_checks(cfg, &draws, &results, &mut report),
        _ => {}
    }
    report
        .checks
        .push(CheckRecord::new(FAILURE_CHECK, failures as f64, cfg.tol(FAILURE_CHECK, 0.5)));
    report.environment.wall_time_s = start.elapsed().as_secs_f64();
    Ok(report)
}

fn draws_max(results: &[Result<Vec<f64>>]) -> f64 {
    results
        .iter()
        .filter_map(|r| r.as_ref().ok().map(|v| v[0]))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `samples` direction pairs at each grid point `(x, 0)`.
fn grid_draws(cfg: &ScanConfig, field: &dyn AcsField) -> Result<Vec<(RVector, Vec<RVector>)>> {
    if field.backend().is_sphere() {
        return Err(Error::Config(format!(
            "quantity `example24-bounds` needs a planar field; `{}` is a sphere field",
            field.name()
        )));
    }
    let (below, above) = planar_grid();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();
    for x in below.into_iter().chain(above) {
        let p = RVector::from_vec(vec![x, 0.0]);
        for _ in 0..cfg.samples {
            let dirs = (0..2)
                .map(|_| sample_unit_tangent(field.backend(), &p, &mut rng))
                .collect::<Result<Vec<_>>>()?;
            out.push((p.clone(), dirs));
        }
    }
    Ok(out)
}

/// Per grid point, the largest gap of each bound over the sampled
/// directions; then checks that the half-space bound holds below `x = 1`,
/// fails above it, and that the disk bound fails everywhere.
fn planar_bounds_checks(
    cfg: &ScanConfig,
    draws: &[(RVector, Vec<RVector>)],
    results: &[Result<Vec<f64>>],
    report: &mut ScanReport,
) {
    let (below, above) = planar_grid();
    let per_x = |x: f64, k: usize| -> f64 {
        draws
            .iter()
            .zip(results)
            .filter(|((p, _), _)| p[0] == x)
            .map(|(_, r)| match r {
                Ok(v) => v[k] / (1.0 + v[3].abs()),
                Err(_) => f64::NAN,
            })
            .fold(f64::NEG_INFINITY, |a, b| if a.is_nan() || b.is_nan() { f64::NAN } else { a.max(b) })
    };
    let max_of = |xs: &[f64], k: usize| xs.iter().map(|&x| per_x(x, k)).fold(f64::NEG_INFINITY, nan_max);
    let min_of = |xs: &[f64], k: usize| xs.iter().map(|&x| per_x(x, k)).fold(f64::INFINITY, nan_min);
    let all: Vec<f64> = below.iter().chain(&above).copied().collect();
    let list = [
        ("halfspace_holds_below_1", max_of(&below, 0), 1e-9),
        ("halfspace_violated_above_1", -min_of(&above, 0), STRICT),
        ("disk_violated", -min_of(&all, 1), STRICT),
    ];
    for (name, r, tol) in list {
        report.checks.push(CheckRecord::new(name, r, cfg.tol(name, tol)));
    }
}

fn nan_max(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.max(b)
    }
}

fn nan_min(a: f64, b: f64) -> f64 {
    if a.is_nan() || b.is_nan() {
        f64::NAN
    } else {
        a.min(b)
    }
}
