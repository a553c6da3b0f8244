//! Experiment drivers: shadow scans along analytic paths, r₀ maps over grids of
//! centres, capacities and multiplier deformations.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use shadowlab_core::contact::{body_capacity, formal_triviality_order, strict_max_check, SearchOptions, TrivialityOutcome};
use shadowlab_core::embedding::{rescaled_path, AnalyticPath, EmbeddingComposition};
use shadowlab_core::linalg::lstsq;
use shadowlab_core::shadow::{
    radial_oracle_volume, shadow_volume, stokes_volume, ChartTracer, OracleParams, ShadowGeometry, StokesOptions,
    STEP_CAP,
};
use shadowlab_core::symplectic::{j_invariance_defect, linear_shadow_volume, SymplecticSubspace};

use crate::error::{HarnessError, Result};
use crate::ledger::Record;
use crate::scenario::{multiplier_family, Experiment, Scenario};

/// φ₀⁻¹V counts as J-invariant below this defect.
pub const J_INVARIANCE_TOL: f64 = 1e-8;
/// Fitted t-derivatives below this are read as zero.
pub const DERIVATIVE_TOL: f64 = 1e-5;

#[derive(Clone, Debug, Serialize)]
pub struct ScanPoint {
    pub t: f64,
    pub value: f64,
    pub error: f64,
    pub margin: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct Dichotomy {
    /// d^j/dt^j Vol(Pφ_t(B)) at t = 0, j = 1..=degree, from a polynomial fit.
    pub derivatives: Vec<f64>,
    /// Slope of log margin against log t over the positive margins.
    pub leading_order: Option<f64>,
    pub trivial: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ScanProfile {
    pub points: Vec<ScanPoint>,
    /// Reason the trace stopped before the end of the grid.
    pub truncated: Option<String>,
    pub j_invariance_defect: f64,
    pub dichotomy: Option<Dichotomy>,
}

/// Least-squares polynomial fit of `values` against `ts`; returns derivatives 1..=degree at 0.
pub fn fitted_derivatives(ts: &[f64], values: &[f64], degree: usize) -> Vec<f64> {
    let scale = ts.iter().cloned().fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let a = DMatrix::from_fn(ts.len(), degree + 1, |i, j| (ts[i] / scale).powi(j as i32));
    let b = DVector::from_column_slice(values);
    let c = lstsq(&a, &b, 1e-13);
    (1..=degree)
        .map(|j| c[j] * (1..=j).product::<usize>() as f64 / scale.powi(j as i32))
        .collect()
}

fn log_log_slope(pts: &[(f64, f64)]) -> Option<f64> {
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    Some(sxy / sxx)
}

fn dichotomy(points: &[ScanPoint], ball: f64) -> Dichotomy {
    let ts: Vec<f64> = points.iter().map(|p| p.t).collect();
    let vs: Vec<f64> = points.iter().map(|p| p.value).collect();
    let degree = points.len().saturating_sub(1).min(4);
    let derivatives = if degree >= 1 {
        fitted_derivatives(&ts, &vs, degree)
    } else {
        Vec::new()
    };
    let floor = 1e-9 * ball;
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|p| p.t > 0.0 && p.margin > floor + 10.0 * p.error)
        .map(|p| (p.t.ln(), p.margin.ln()))
        .collect();
    let trivial = derivatives.iter().all(|d| d.abs() <= DERIVATIVE_TOL);
    Dichotomy {
        derivatives,
        leading_order: log_log_slope(&pts),
        trivial,
    }
}

/// Traces the boundary chart along the path and integrates at each grid time.
pub fn shadow_scan(
    path: &AnalyticPath,
    v: &SymplecticSubspace,
    geom: &ShadowGeometry,
    t_grid: &[f64],
    order: usize,
    oracle: Option<&OracleParams>,
) -> Result<ScanProfile> {
    let l0 = path
        .path_at(0.0)?
        .linear_part()
        .ok_or_else(|| HarnessError::InvalidConfig("path is not linear at t = 0".into()))?;
    let defect = j_invariance_defect(&l0, v)?;
    let mut tracer = ChartTracer::new(path, geom, order, STEP_CAP)?;
    let mut points = Vec::new();
    let mut truncated = None;
    for &t in t_grid {
        let step = tracer
            .advance_to(t)
            .cloned()
            .and_then(|chart| {
                let phi = path.path_at(t)?;
                let s = stokes_volume(&phi, geom, &chart, StokesOptions::default())?;
                let o = match oracle {
                    Some(p) => Some(radial_oracle_volume(&phi, geom, p)?.value),
                    None => None,
                };
                Ok((s, o))
            });
        match step {
            Ok((s, o)) => points.push(ScanPoint {
                t,
                value: s.value,
                error: s.error_estimate,
                margin: s.margin,
                oracle: o,
            }),
            Err(e) => {
                truncated = Some(format!("t = {t}: {e}"));
                break;
            }
        }
    }
    let dichotomy = (defect <= J_INVARIANCE_TOL).then(|| dichotomy(&points, geom.ball_volume()));
    Ok(ScanProfile {
        points,
        truncated,
        j_invariance_defect: defect,
        dichotomy,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct R0Row {
    pub center: Vec<f64>,
    /// (r, f(x, r)) over the validated prefix of the grid.
    pub margins: Vec<(f64, f64)>,
    pub r0: f64,
    pub truncated: Option<String>,
}

#[derive(Clone, Debug, Serialize)]
pub struct R0Table {
    pub rows: Vec<R0Row>,
    pub min_r0: f64,
}

/// Centres on a regular grid over the chosen coordinates, `p` points per axis in [−w, w].
pub fn grid_centers(dim: usize, axes: &[usize], p: usize, half_width: f64) -> Vec<DVector<f64>> {
    let vals: Vec<f64> = if p == 1 {
        vec![0.0]
    } else {
        (0..p).map(|i| -half_width + 2.0 * half_width * i as f64 / (p - 1) as f64).collect()
    };
    let mut out = vec![DVector::zeros(dim)];
    for &a in axes {
        out = out
            .into_iter()
            .flat_map(|c| {
                vals.iter().map(move |&v| {
                    let mut c = c.clone();
                    c[a] = v;
                    c
                })
            })
            .collect();
    }
    out
}

fn r0_row(phi: &EmbeddingComposition, geom: &ShadowGeometry, x: &DVector<f64>, r_grid: &[f64], order: usize, tol: f64) -> Result<R0Row> {
    let path = rescaled_path(phi, x)?;
    let mut tracer = ChartTracer::new(&path, geom, order, STEP_CAP)?;
    let floor = -tol * geom.ball_volume();
    let mut margins = Vec::new();
    let mut truncated = None;
    for &r in r_grid {
        if r >= path.t_max() {
            truncated = Some(format!("r = {r} beyond the rescaling bound {}", path.t_max()));
            break;
        }
        let step = tracer.advance_to(r).cloned().and_then(|chart| {
            let phi_r = path.path_at(r)?;
            stokes_volume(&phi_r, geom, &chart, StokesOptions::default())
        });
        match step {
            Ok(s) => margins.push((r, s.margin)),
            Err(e) => {
                truncated = Some(format!("r = {r}: {e}"));
                break;
            }
        }
    }
    let r0 = margins
        .iter()
        .take_while(|(_, m)| *m >= floor)
        .last()
        .map_or(0.0, |(r, _)| *r);
    Ok(R0Row {
        center: x.iter().copied().collect(),
        margins,
        r0,
        truncated,
    })
}

/// f(x, r) = Vol(Pφ_{r,x}(B₁)) − π^k along r for every centre; r₀(x) is the largest grid
/// radius up to which f stays above −tol·π^k. Only an under-approximation of the true r₀.
pub fn r0_map(
    phi: &EmbeddingComposition,
    geom: &ShadowGeometry,
    centers: &[DVector<f64>],
    r_grid: &[f64],
    order: usize,
    tol: f64,
) -> Result<R0Table> {
    for x in centers {
        if x.norm() >= phi.domain_radius() {
            return Err(HarnessError::InvalidConfig(format!(
                "centre with |x| = {} outside the domain radius {}",
                x.norm(),
                phi.domain_radius()
            )));
        }
    }
    let rows: Vec<R0Row> = centers
        .par_iter()
        .map(|x| r0_row(phi, geom, x, r_grid, order, tol))
        .collect::<Result<_>>()?;
    let min_r0 = rows.iter().map(|r| r.r0).fold(f64::INFINITY, f64::min);
    Ok(R0Table { rows, min_r0 })
}

#[derive(Clone, Debug, Serialize)]
pub struct ScalingCheck {
    /// Oracle volume of Pφ(B_r(x)).
    pub direct: f64,
    /// r^{2k}·Stokes volume of Pφ_{r,x}(B₁).
    pub rescaled: f64,
    /// |direct − rescaled| / (r^{2k}π^k).
    pub defect: f64,
}

/// Vol(Pφ(B_r(x))) against r^{2k}·Vol(Pφ_{r,x}(B₁)) by two independent routes.
pub fn scaling_identity(
    phi: &EmbeddingComposition,
    geom: &ShadowGeometry,
    x: &DVector<f64>,
    r: f64,
    order: usize,
) -> Result<ScalingCheck> {
    let k = geom.k() as i32;
    let params = OracleParams {
        order,
        center: Some(x.clone()),
        radius: r,
        ..Default::default()
    };
    let direct = radial_oracle_volume(phi, geom, &params)?.value;
    let path = rescaled_path(phi, x)?;
    let mut tracer = ChartTracer::new(&path, geom, order, STEP_CAP)?;
    let chart = tracer.advance_to(r)?.clone();
    let small = stokes_volume(&path.path_at(r)?, geom, &chart, StokesOptions::default())?.value;
    let r2k = r.powi(2 * k);
    let rescaled = r2k * small;
    Ok(ScalingCheck {
        direct,
        rescaled,
        defect: (direct - rescaled).abs() / (r2k * PI.powi(k)),
    })
}

#[derive(Clone, Debug)]
pub struct RunOutput {
    pub records: Vec<Record>,
    pub summary: serde_json::Value,
}

fn to_value<T: Serialize>(v: &T) -> serde_json::Value {
    serde_json::to_value(v).expect("summary serializes")
}

/// Dispatches a validated scenario to its pipeline. Deterministic given the scenario.
pub fn run_scenario(s: &Scenario) -> Result<RunOutput> {
    s.validate()?;
    let hash = s.hash();
    let seed = s.params.seed;
    let tol = s.params.tol;
    let order = s.params.quadrature_order;
    let oracle_params = OracleParams {
        order,
        seed: seed ^ 0x0ac1e,
        ..Default::default()
    };
    let stamp = |r: Record| r.origin(&hash, seed);
    let mut records = Vec::new();
    let summary;
    match &s.experiment {
        Experiment::LinearShadow => {
            let phi = s.embedding()?;
            let l = phi
                .linear_part()
                .ok_or_else(|| HarnessError::InvalidConfig("linear-shadow needs a linear embedding".into()))?;
            let v = s.subspace()?;
            let ball = PI.powi(v.k() as i32);
            let value = linear_shadow_volume(&l, &v)?;
            let margin = value - ball;
            let mut rec = Record::new(&s.id, 0.0, value, 0.0, margin, margin >= -tol * ball)
                .route("closed_form", value)
                .route("j_defect", j_invariance_defect(&l, &v)?);
            if s.params.cross_check {
                let geom = s.geometry()?;
                let st = shadow_volume(&phi, &geom, order)?;
                let or = radial_oracle_volume(&phi, &geom, &oracle_params)?;
                rec.error = st.error_estimate.max(or.error_estimate);
                rec.pass &= st.margin >= -tol * ball && or.margin >= -tol * ball;
                rec = rec.route("stokes", st.value).route("oracle", or.value);
            }
            summary = serde_json::json!({ "value": value, "margin": margin });
            records.push(stamp(rec));
        }
        Experiment::ShadowScan { t_grid, t_max } => {
            let path = s.analytic_path(*t_max)?;
            let v = s.subspace()?;
            let geom = s.geometry()?;
            let ball = geom.ball_volume();
            let profile = shadow_scan(&path, &v, &geom, t_grid, order, s.params.cross_check.then_some(&oracle_params))?;
            for p in &profile.points {
                let mut rec = Record::new(&s.id, p.t, p.value, p.error, p.margin, p.margin >= -tol * ball).route("stokes", p.value);
                if let Some(o) = p.oracle {
                    rec.pass &= o - ball >= -tol * ball;
                    rec = rec.route("oracle", o);
                }
                records.push(stamp(rec));
            }
            if let (Some(msg), Some(last)) = (&profile.truncated, records.last_mut()) {
                last.note = Some(format!("truncated after this point: {msg}"));
            }
            summary = to_value(&profile);
        }
        Experiment::R0Map {
            axes,
            points_per_axis,
            half_width,
            r_grid,
        } => {
            let phi = s.embedding()?;
            let geom = s.geometry()?;
            let centers = grid_centers(s.dimension, axes, *points_per_axis, *half_width);
            let table = r0_map(&phi, &geom, &centers, r_grid, order, tol)?;
            let floor = -tol * geom.ball_volume();
            for (i, row) in table.rows.iter().enumerate() {
                let id = format!("{}/c{i}", s.id);
                for &(r, m) in &row.margins {
                    records.push(stamp(Record::new(&id, r, m + geom.ball_volume(), 0.0, m, m >= floor)));
                }
                let mut rec = Record::new(&id, row.r0, row.r0, 0.0, row.r0, true).note("r0");
                if let Some(t) = &row.truncated {
                    rec = rec.note(format!("r0; truncated: {t}"));
                }
                records.push(stamp(rec));
            }
            let last_r = *r_grid.last().expect("validated grid");
            records.push(stamp(
                Record::new(format!("{}/min_r0", s.id), last_r, table.min_r0, 0.0, table.min_r0, table.min_r0 > 0.0)
                    .note("min r0 over the grid"),
            ));
            summary = to_value(&table);
        }
        Experiment::Capacity { body, expected } => {
            let b = body.build(s.dimension)?;
            let opts = SearchOptions {
                seed,
                ..Default::default()
            };
            let est = body_capacity(b.as_ref(), &opts)?;
            let margin = expected.map_or(0.0, |e| est.value - e);
            let pass = expected.is_none_or(|_| margin.abs() <= tol);
            let mut rec = Record::new(&s.id, 0.0, est.value, est.max_closure_residual, margin, pass).route("orbit", est.value);
            if let Some(d) = est.dual_value {
                rec = rec.route("dual", d);
            }
            records.push(stamp(rec));
            summary = serde_json::json!({
                "value": est.value,
                "dual_value": est.dual_value,
                "orbits_found": est.orbits_found,
                "seeds_tried": est.seeds_tried,
                "max_closure_residual": est.max_closure_residual,
            });
        }
        Experiment::DeformAnalyze {
            multiplier,
            t_grid,
            t_max,
            orders,
        } => {
            let fam = multiplier_family(s.dimension / 2, multiplier, *t_max)?;
            let opts = SearchOptions {
                seed,
                ..Default::default()
            };
            let triviality = match formal_triviality_order(&fam, *orders)? {
                TrivialityOutcome::Obstruction { order, min, max, .. } => {
                    records.push(stamp(
                        Record::new(&s.id, 0.0, order as f64, 0.0, max - min, true)
                            .route("obstruction_min", min)
                            .route("obstruction_max", max)
                            .note("obstruction order"),
                    ));
                    serde_json::json!({ "obstruction": order, "min": min, "max": max })
                }
                TrivialityOutcome::TrivialThrough(m) => {
                    records.push(stamp(Record::new(&s.id, 0.0, m as f64, 0.0, 0.0, true).note("formally trivial through order")));
                    serde_json::json!({ "trivial_through": m })
                }
            };
            let report = strict_max_check(&fam, t_grid, &opts)?;
            for (i, (&t, &a)) in report.t.iter().zip(&report.a_min).enumerate() {
                let bound = report.bound.as_ref().map(|b| b[i]);
                let ceiling = bound.unwrap_or(PI);
                let mut rec = Record::new(&s.id, t, a, 0.0, ceiling - a, a <= ceiling + tol && a <= PI + tol);
                if let Some(b) = bound {
                    rec = rec.route("bound", b);
                }
                records.push(stamp(rec));
            }
            summary = serde_json::json!({
                "triviality": triviality,
                "decreasing": report.decreasing,
                "flat": report.flat,
                "leading_order": report.leading_order,
                "verdict": report.verdict,
            });
        }
    }
    Ok(RunOutput { records, summary })
}

/// Runs `f` on a dedicated pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .expect("thread pool")
        .install(f)
}
