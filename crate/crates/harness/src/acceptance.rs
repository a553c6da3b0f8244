//! The acceptance suite: eleven criteria at pinned tolerances.

use std::f64::consts::PI;
use std::time::Instant;

use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use shadowlab_core::contact::{
    ball_capacity, body_capacity, check_pinch, formal_triviality_order, hausdorff_lipschitz_probe, projection_monotonicity,
    sample_points, strict_max_check, ContactMultiplier, ConvexBody, QuadraticBody, RadialBody, SearchOptions, SphereFunction,
    TrivialityOutcome,
};
use shadowlab_core::embedding::{AnalyticPath, EmbeddingComposition, PathFactor, PathPolynomial, PrimitiveMap};
use shadowlab_core::poly::{Polynomial, Term};
use shadowlab_core::shadow::{radial_oracle_volume, shadow_volume, OracleParams, ShadowGeometry};
use shadowlab_core::symplectic::random::{random_subspace, random_symplectic, random_unitary};
use shadowlab_core::symplectic::{
    complex_structure, factorial, gram_volume, j_invariance_defect, linear_shadow_volume, omega_power, symplectic_complement,
    symplectic_projector, SymplecticMatrix, SymplecticSubspace,
};

use crate::error::Result;
use crate::experiments::{grid_centers, r0_map, run_scenario, scaling_identity, shadow_scan, with_workers};
use crate::ledger::{Ledger, Record};
use crate::scenario::Scenario;

pub const CRITERIA: usize = 11;

#[derive(Clone, Debug)]
pub struct CriterionResult {
    pub id: usize,
    pub title: &'static str,
    pub pass: bool,
    pub detail: String,
    pub records: Vec<Record>,
    pub seconds: f64,
}

impl CriterionResult {
    pub fn line(&self) -> String {
        format!(
            "{} criterion {:>2} {}: {} ({:.1} s)",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.title,
            self.detail,
            self.seconds
        )
    }
}

pub fn title(id: usize) -> &'static str {
    match id {
        1 => "linear non-squeezing",
        2 => "Wirtinger bound",
        3 => "Stokes vs oracle",
        4 => "analytic local non-squeezing",
        5 => "dichotomy diagnostics",
        6 => "capacity anchors",
        7 => "projection monotonicity",
        8 => "Lipschitz probe",
        9 => "averaging and normal form",
        10 => "scaling identity and r0 map",
        11 => "determinism",
        _ => "unknown",
    }
}

struct Outcome {
    pass: bool,
    detail: String,
    records: Vec<Record>,
}

/// Runs criterion `id` with the suite seed. Numerical errors count as failures.
pub fn run_criterion(id: usize, seed: u64) -> CriterionResult {
    let start = Instant::now();
    let outcome = match id {
        1 => linear_nonsqueezing(seed),
        2 => wirtinger(seed),
        3 => stokes_vs_oracle(seed),
        4 => local_nonsqueezing(seed),
        5 => dichotomy_diagnostics(seed),
        6 => capacity_anchors(seed),
        7 => projection(seed),
        8 => lipschitz(seed),
        9 => averaging(seed),
        10 => scaling(seed),
        11 => determinism(seed),
        _ => Ok(Outcome {
            pass: false,
            detail: "no such criterion".into(),
            records: Vec::new(),
        }),
    };
    let outcome = outcome.unwrap_or_else(|e| Outcome {
        pass: false,
        detail: format!("error: {e}"),
        records: Vec::new(),
    });
    let records = outcome
        .records
        .into_iter()
        .map(|mut r| {
            r.scenario_id = format!("acceptance/c{id}/{}", r.scenario_id);
            r.seed = seed;
            r
        })
        .collect();
    CriterionResult {
        id,
        title: title(id),
        pass: outcome.pass,
        detail: outcome.detail,
        records,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Runs the given criteria in order; the ledger holds their records.
pub fn run_suite(ids: &[usize], seed: u64, mut on_result: impl FnMut(&CriterionResult)) -> (Vec<CriterionResult>, Ledger) {
    let mut ledger = Ledger::new();
    let mut results = Vec::new();
    for &id in ids {
        let r = run_criterion(id, seed);
        on_result(&r);
        ledger.extend(r.records.iter().cloned());
        ledger.time(&format!("acceptance/c{id}"), r.seconds);
        results.push(r);
    }
    (results, ledger)
}

fn rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(stream);
    r
}

fn uniform_vec(dim: usize, r: &mut ChaCha8Rng) -> DVector<f64> {
    DVector::from_fn(dim, |_, _| 2.0 * r.random::<f64>() - 1.0)
}

fn coordinate(dim: usize, planes: &[usize]) -> SymplecticSubspace {
    SymplecticSubspace::coordinate(dim, planes).expect("coordinate planes")
}

fn geometry(v: &SymplecticSubspace) -> Result<ShadowGeometry> {
    Ok(ShadowGeometry::new(&symplectic_projector(v)?)?)
}

/// A symplectic L with L⁻¹V J-invariant: Darboux frames of V and V^ω, then a unitary.
fn engineered_equality(v: &SymplecticSubspace, r: &mut ChaCha8Rng) -> Result<SymplecticMatrix> {
    let dim = v.ambient_dim();
    let d = v.darboux_basis();
    let comp = symplectic_complement(v)?.darboux_basis();
    let mut m = DMatrix::zeros(dim, dim);
    m.view_mut((0, 0), (dim, d.ncols())).copy_from(&d);
    m.view_mut((0, d.ncols()), (dim, comp.ncols())).copy_from(&comp);
    Ok(SymplecticMatrix::new(m)?.compose(&random_unitary(dim, r)))
}

fn linear_nonsqueezing(seed: u64) -> Result<Outcome> {
    let start = Instant::now();
    let mut r = rng(seed, 1);
    let ball = PI * PI;
    let mut min_ratio = f64::INFINITY;
    let mut violations = 0;
    for _ in 0..1000 {
        let l = random_symplectic(6, 4, 1.0, &mut r);
        let v = random_subspace(6, 2, &mut r);
        let vol = linear_shadow_volume(&l, &v)?;
        min_ratio = min_ratio.min(vol / ball);
        if vol < ball * (1.0 - 1e-9) {
            violations += 1;
        }
    }
    let random_secs = start.elapsed().as_secs_f64();
    let mut eq_err: f64 = 0.0;
    let mut eq_defect: f64 = 0.0;
    for _ in 0..20 {
        let v = random_subspace(6, 2, &mut r);
        let l = engineered_equality(&v, &mut r)?;
        eq_err = eq_err.max((linear_shadow_volume(&l, &v)? - ball).abs());
        eq_defect = eq_defect.max(j_invariance_defect(&l, &v)?);
    }
    let pass = violations == 0 && random_secs < 30.0 && eq_err <= 1e-6 && eq_defect <= 1e-8;
    Ok(Outcome {
        pass,
        detail: format!(
            "min Vol/π² = {min_ratio:.6}, {violations} violations in {random_secs:.2} s; equality |Vol − π²| ≤ {eq_err:.1e}, defect ≤ {eq_defect:.1e}"
        ),
        records: vec![
            Record::new("random", 0.0, min_ratio, 0.0, (min_ratio - 1.0) * ball, violations == 0),
            Record::new("equality", 0.0, eq_err, eq_defect, 0.0, eq_err <= 1e-6 && eq_defect <= 1e-8),
        ],
    })
}

fn wirtinger(seed: u64) -> Result<Outcome> {
    let mut r = rng(seed, 2);
    let mut violations = 0;
    let mut worst = f64::NEG_INFINITY;
    let j6 = complex_structure(6);
    let j4 = complex_structure(4);
    for i in 0..10_000 {
        let n = 2 + i % 2;
        let k = 1 + (i / 2) % 2;
        let dim = 2 * n;
        let mut frame: Vec<DVector<f64>> = (0..2 * k).map(|_| uniform_vec(dim, &mut r)).collect();
        // every fourth frame is complex, where the bound is attained
        if i % 4 == 3 {
            let j = if n == 3 { &j6 } else { &j4 };
            for p in 0..k {
                frame[2 * p + 1] = j * &frame[2 * p];
            }
        }
        let lhs = omega_power(&frame)?.abs() / factorial(k);
        let rhs = gram_volume(&frame);
        worst = worst.max(lhs - rhs);
        if lhs > rhs + 1e-10 {
            violations += 1;
        }
    }
    Ok(Outcome {
        pass: violations == 0,
        detail: format!("{violations} violations in 10^4 frames, max(|ω^k|/k! − Gram) = {worst:.2e}"),
        records: vec![Record::new("frames", 0.0, worst, 0.0, -worst, violations == 0)],
    })
}

fn cubic(n: usize, terms: &[(f64, &[u32])]) -> Polynomial {
    Polynomial::new(
        n,
        terms
            .iter()
            .map(|(c, e)| Term {
                coef: *c,
                exp: e.to_vec(),
            })
            .collect(),
    )
    .expect("valid polynomial")
}

/// φ_t = shear by t·g with a q₁q₃ term that mixes V with its complement.
fn shear_path_a() -> Result<AnalyticPath> {
    let g = cubic(3, &[(0.5, &[1, 0, 1]), (1.0, &[3, 0, 0]), (0.8, &[1, 0, 2]), (-0.6, &[0, 1, 2])]);
    Ok(AnalyticPath::new(6, vec![PathFactor::ShearPositions(PathPolynomial::linear_in_t(&g))], 1.0, 1.0)?)
}

/// A unitary followed by a cubic position shear.
fn shear_path_b(seed: u64) -> Result<AnalyticPath> {
    let u = random_unitary(6, &mut rng(seed, 30));
    let g = cubic(3, &[(0.4, &[1, 1, 1]), (0.3, &[0, 0, 3]), (-0.5, &[2, 0, 1]), (0.3, &[0, 1, 1])]);
    Ok(AnalyticPath::new(
        6,
        vec![
            PathFactor::Fixed(PrimitiveMap::linear(u)?),
            PathFactor::ShearPositions(PathPolynomial::linear_in_t(&g)),
        ],
        1.0,
        1.0,
    )?)
}

/// A momentum shear followed by a unitary.
fn shear_path_c(seed: u64) -> Result<AnalyticPath> {
    let u = random_unitary(6, &mut rng(seed, 31));
    let h = cubic(3, &[(0.6, &[1, 0, 1]), (0.5, &[3, 0, 0]), (0.4, &[0, 2, 1])]);
    Ok(AnalyticPath::new(
        6,
        vec![
            PathFactor::ShearMomenta(PathPolynomial::linear_in_t(&h)),
            PathFactor::Fixed(PrimitiveMap::linear(u)?),
        ],
        1.0,
        1.0,
    )?)
}

/// Unitary for every t, so φ_t⁻¹V stays J-invariant.
fn unitary_path() -> Result<AnalyticPath> {
    Ok(AnalyticPath::new(
        6,
        vec![
            PathFactor::PlaneRotation {
                plane: 0,
                angle: vec![0.0, 1.0],
            },
            PathFactor::UnitaryMix {
                first: 0,
                second: 2,
                angle: vec![0.0, 0.8],
            },
            PathFactor::PlaneRotation {
                plane: 1,
                angle: vec![0.3, -0.5],
            },
        ],
        1.0,
        1.0,
    )?)
}

fn stokes_vs_oracle(seed: u64) -> Result<Outcome> {
    let start = Instant::now();
    let mut r = rng(seed, 3);
    let v0 = coordinate(6, &[0, 1]);
    let mut cases: Vec<(String, EmbeddingComposition, SymplecticSubspace)> =
        vec![("identity".into(), EmbeddingComposition::identity(6), v0.clone())];
    for i in 0..3 {
        let l = random_symplectic(6, 3, 0.6, &mut r);
        let v = random_subspace(6, 2, &mut r);
        cases.push((format!("linear{i}"), EmbeddingComposition::from_linear(l)?, v));
    }
    for (name, path) in [("shear_a", shear_path_a()?), ("shear_b", shear_path_b(seed)?)] {
        for t in [0.02, 0.05, 0.1] {
            cases.push((format!("{name}@{t}"), path.path_at(t)?, v0.clone()));
        }
    }
    let mut records = Vec::new();
    let mut worst48: f64 = 0.0;
    let mut ok = true;
    let mut notes = Vec::new();
    for (name, phi, v) in &cases {
        let geom = geometry(v)?;
        let mut d = [0.0; 2];
        for (slot, q) in [48usize, 96].into_iter().enumerate() {
            let s = shadow_volume(phi, &geom, q)?;
            let o = radial_oracle_volume(
                phi,
                &geom,
                &OracleParams {
                    order: q,
                    seed: seed ^ 0x0ac1e,
                    ..Default::default()
                },
            )?;
            d[slot] = (s.value - o.value).abs() / s.value.abs();
            records.push(
                Record::new(name.clone(), q as f64, s.value, s.error_estimate.max(o.error_estimate), d[slot], d[slot] <= 1e-2)
                    .route("stokes", s.value)
                    .route("oracle", o.value),
            );
        }
        worst48 = worst48.max(d[0]);
        // spectral convergence reaches round-off; below 1e-11 the comparison is noise
        let refined = d[1] <= d[0] || d[1] <= 1e-11;
        if !(d[0] <= 1e-2 && refined) {
            ok = false;
            notes.push(format!("{name}: {:.2e} -> {:.2e}", d[0], d[1]));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = ok && secs < 300.0;
    Ok(Outcome {
        pass,
        detail: format!(
            "10 scenarios, max relative disagreement {worst48:.2e} at order 48, non-increasing to 96, {secs:.0} s{}",
            if notes.is_empty() { String::new() } else { format!("; {}", notes.join(", ")) }
        ),
        records,
    })
}

fn t_grid() -> Vec<f64> {
    (0..=10).map(|i| 0.01 * i as f64).collect()
}

fn local_nonsqueezing(seed: u64) -> Result<Outcome> {
    let v = coordinate(6, &[0, 1]);
    let geom = geometry(&v)?;
    let ball = PI * PI;
    let grid = t_grid();
    let mut records = Vec::new();
    let mut parts = Vec::new();
    let mut pass = true;
    for (name, path) in [("shear_a", shear_path_a()?), ("shear_b", shear_path_b(seed)?), ("shear_c", shear_path_c(seed)?)] {
        let prof = shadow_scan(&path, &v, &geom, &grid, 32, None)?;
        let j_ok = prof.j_invariance_defect <= 1e-8;
        let min = prof.points.iter().map(|p| p.margin).fold(f64::INFINITY, f64::min);
        let ok = j_ok && min >= -1e-3 * ball && !prof.points.is_empty();
        pass &= ok;
        for p in &prof.points {
            records.push(Record::new(name, p.t, p.value, p.error, p.margin, p.margin >= -1e-3 * ball));
        }
        let reach = prof.points.last().map_or(0.0, |p| p.t);
        parts.push(format!("{name}: min margin {min:.3e} to t = {reach}"));
    }
    let prof = shadow_scan(&unitary_path()?, &v, &geom, &grid, 32, None)?;
    let max_abs = prof.points.iter().map(|p| p.margin.abs()).fold(0.0, f64::max);
    let trivial_ok = max_abs <= 1e-6 * ball && prof.truncated.is_none();
    pass &= trivial_ok;
    for p in &prof.points {
        records.push(Record::new("unitary", p.t, p.value, p.error, p.margin, p.margin.abs() <= 1e-6 * ball));
    }
    parts.push(format!("unitary: max |margin| {max_abs:.1e}"));
    Ok(Outcome {
        pass,
        detail: parts.join("; "),
        records,
    })
}

fn dichotomy_diagnostics(_seed: u64) -> Result<Outcome> {
    let v = coordinate(6, &[0, 1]);
    let geom = geometry(&v)?;
    let grid = t_grid();
    let trivial = shadow_scan(&unitary_path()?, &v, &geom, &grid, 32, None)?;
    let td = trivial.dichotomy.clone().expect("unitary path is J-invariant");
    let max_deriv = td.derivatives.iter().map(|d| d.abs()).fold(0.0, f64::max);
    let trivial_ok = td.trivial && max_deriv <= 1e-5;
    let shear = shadow_scan(&shear_path_a()?, &v, &geom, &grid, 32, None)?;
    let sd = shear.dichotomy.clone().expect("shear path starts J-invariant");
    let positive = shear.points.iter().filter(|p| p.t > 0.0).all(|p| p.margin > 0.0);
    let order = sd.leading_order.unwrap_or(f64::NAN);
    let shear_ok = positive && order >= 1.0 && !sd.trivial;
    let records = vec![
        Record::new("trivial", 0.0, max_deriv, 0.0, 1e-5 - max_deriv, trivial_ok),
        Record::new("nontrivial", 0.0, if order.is_finite() { order } else { 0.0 }, 0.0, order - 1.0, shear_ok),
    ];
    Ok(Outcome {
        pass: trivial_ok && shear_ok,
        detail: format!(
            "trivial branch max |d^jV/dt^j| = {max_deriv:.1e}; shear branch margins > 0: {positive}, leading order {order:.3}"
        ),
        records,
    })
}

fn capacity_anchors(seed: u64) -> Result<Outcome> {
    let opts = SearchOptions {
        seed,
        ..Default::default()
    };
    let mut records = Vec::new();
    let mut pass = true;
    let mut parts = Vec::new();
    for delta in [0.7, 1.0, 1.3] {
        let est = ball_capacity(4, delta, &opts)?;
        let exact = delta * delta * PI;
        let err = (est.value - exact).abs();
        pass &= err <= 1e-4;
        parts.push(format!("B_{delta}: {err:.1e}"));
        records.push(Record::new(format!("ball_{delta}"), delta, est.value, err, est.value - exact, err <= 1e-4));
    }
    // planar characteristic in the (x₁, y₁) plane encloses area π·1²
    let e = QuadraticBody::ellipsoid(&[1.0, 2.0])?;
    let est = body_capacity(&e, &opts)?;
    let err = (est.value - PI).abs();
    pass &= err <= 1e-3;
    parts.push(format!("E(1,2): {err:.1e}"));
    records.push(Record::new("ellipsoid_1_2", 0.0, est.value, err, est.value - PI, err <= 1e-3));
    Ok(Outcome {
        pass,
        detail: format!("|c − exact|: {}", parts.join(", ")),
        records,
    })
}

/// {xᵀAx ≤ 1} with A = Qᵀdiag(s⁻²)Q, Q a random rotation, semi-axes s in [lo, hi].
fn random_quadratic(dim: usize, lo: f64, hi: f64, r: &mut ChaCha8Rng) -> DMatrix<f64> {
    let g = DMatrix::from_fn(dim, dim, |_, _| r.random::<f64>() - 0.5);
    let q = g.qr().q();
    let d = DMatrix::from_diagonal(&DVector::from_fn(dim, |_, _| {
        let s: f64 = lo + (hi - lo) * r.random::<f64>();
        1.0 / (s * s)
    }));
    let a = q.transpose() * d * q;
    (&a + a.transpose()) * 0.5
}

/// π over the largest symplectic eigenvalue of A (|eigenvalues of JA|).
fn ellipsoid_capacity(a: &DMatrix<f64>) -> f64 {
    let ja = complex_structure(a.nrows()) * a;
    let top = ja
        .complex_eigenvalues()
        .iter()
        .map(|z: &Complex<f64>| z.im.abs())
        .fold(0.0, f64::max);
    PI / top
}

/// Area of the orthogonal projection of {xᵀAx ≤ 1} onto the first coordinate plane.
fn projected_ellipse_area(a: &DMatrix<f64>) -> f64 {
    let inv = a.clone().try_inverse().expect("positive definite");
    PI * inv.view((0, 0), (2, 2)).determinant().sqrt()
}

/// 1 + f with f a small random combination of low-order harmonics.
fn random_radial_profile(r: &mut ChaCha8Rng, amp: f64) -> Result<SphereFunction> {
    let mut terms = Vec::new();
    for (a, b) in [([1, 0], [0, 1]), ([2, 0], [0, 0]), ([1, 1], [0, 0]), ([1, 0], [1, 0]), ([0, 2], [1, 1])] {
        let c = Complex::new(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5) * amp;
        terms.push((c, a.to_vec(), b.to_vec()));
    }
    Ok(SphereFunction::from_complex(2, &terms)?)
}

fn projection(seed: u64) -> Result<Outcome> {
    let mut r = rng(seed, 7);
    let v = coordinate(4, &[0]);
    let opts = SearchOptions {
        seed,
        ..Default::default()
    };
    let mut bodies: Vec<(String, Box<dyn ConvexBody>, Option<(f64, f64)>)> = Vec::new();
    for i in 0..14 {
        let a = random_quadratic(4, 0.6, 1.8, &mut r);
        let exact = (projected_ellipse_area(&a), ellipsoid_capacity(&a));
        bodies.push((format!("quadratic{i}"), Box::new(QuadraticBody::new(a)?), Some(exact)));
    }
    for i in 0..6 {
        let f = random_radial_profile(&mut r, 0.12)?;
        bodies.push((format!("radial{i}"), Box::new(RadialBody::new(f)?), None));
    }
    let rows: Vec<Result<(String, f64, f64, Option<(f64, f64)>)>> = bodies
        .par_iter()
        .map(|(name, b, exact)| {
            check_pinch(b.as_ref(), 0.5, 2.0)?;
            let m = projection_monotonicity(b.as_ref(), &v, &opts)?;
            Ok((name.clone(), m.projected, m.full, *exact))
        })
        .collect();
    let mut records = Vec::new();
    let mut pass = true;
    let mut min_margin = f64::INFINITY;
    let mut max_route_gap: f64 = 0.0;
    for row in rows {
        let (name, projected, full, exact) = row?;
        let margin = projected - full;
        min_margin = min_margin.min(margin);
        let mut ok = margin >= -1e-3;
        let mut rec = Record::new(name, 0.0, projected, 0.0, margin, ok).route("full", full);
        if let Some((pe, fe)) = exact {
            let gap = (projected - pe).abs().max((full - fe).abs());
            max_route_gap = max_route_gap.max(gap);
            ok &= gap <= 1e-3 && pe - fe >= -1e-3;
            rec.pass = ok;
            rec = rec.route("projected_exact", pe).route("full_exact", fe);
        }
        pass &= ok;
        records.push(rec);
    }
    Ok(Outcome {
        pass,
        detail: format!(
            "20 bodies, min c(PC) − c(C) = {min_margin:.4}; ellipsoids agree with closed forms to {max_route_gap:.1e}"
        ),
        records,
    })
}

fn lipschitz(seed: u64) -> Result<Outcome> {
    let mut r = rng(seed, 8);
    let opts = SearchOptions {
        seed,
        ..Default::default()
    };
    let mut pairs: Vec<(Box<dyn ConvexBody>, Box<dyn ConvexBody>)> = Vec::new();
    for i in 0..20 {
        let a = random_quadratic(4, 0.7, 1.6, &mut r);
        let b = if i % 2 == 0 {
            // nearby body
            let e = random_quadratic(4, 0.7, 1.6, &mut r);
            &a + (e - &a) * 0.1
        } else {
            random_quadratic(4, 0.7, 1.6, &mut r)
        };
        pairs.push((Box::new(QuadraticBody::new(a)?), Box::new(QuadraticBody::new(b)?)));
    }
    let probes: Vec<_> = pairs
        .par_iter()
        .map(|(c, d)| hausdorff_lipschitz_probe(c.as_ref(), d.as_ref(), (0.5, 2.0), &opts))
        .collect::<std::result::Result<_, _>>()?;
    let violations = probes.iter().filter(|p| !p.holds).count();
    let max_ratio = probes.iter().map(|p| p.ratio).fold(0.0, f64::max);
    let constant = probes[0].constant;
    let records = probes
        .iter()
        .enumerate()
        .map(|(i, p)| {
            Record::new(format!("pair{i}"), p.hausdorff, p.ratio, 0.0, p.constant - p.ratio, p.holds)
                .route("c", p.capacity_c)
                .route("d", p.capacity_d)
        })
        .collect();
    Ok(Outcome {
        pass: violations == 0,
        detail: format!("max ratio {max_ratio:.3} against constant {constant:.2}, {violations} violations"),
        records,
    })
}

fn averaging(seed: u64) -> Result<Outcome> {
    let mut r = rng(seed, 9);
    let mut worst: f64 = 0.0;
    let pts = sample_points(2, 32, seed);
    for _ in 0..20 {
        let mut terms = Vec::new();
        for _ in 0..6 {
            // total degree at most 5
            let a: Vec<u32> = vec![r.random_range(0..3), r.random_range(0..2)];
            let b: Vec<u32> = (0..2).map(|_| r.random_range(0..2)).collect();
            terms.push((Complex::new(r.random::<f64>() - 0.5, r.random::<f64>() - 0.5), a, b));
        }
        let f = SphereFunction::from_complex(2, &terms)?;
        let avg = f.reeb_average();
        let twice = avg.reeb_average();
        worst = worst.max((avg.integral() - f.integral()).abs());
        worst = worst.max(avg.fiber_defect(&pts, 16));
        for x in &pts {
            worst = worst.max((twice.eval(x.as_slice()) - avg.eval(x.as_slice())).abs());
        }
    }
    let averaging_ok = worst <= 1e-10;
    let rho1 = SphereFunction::abs2(2, 0).sub(&SphereFunction::constant(2, 0.5));
    let fam = ContactMultiplier::linear(rho1, 0.2)?;
    let (obs_ok, obs) = match formal_triviality_order(&fam, 2)? {
        TrivialityOutcome::Obstruction { order, min, max, .. } => (order == 1 && min < 0.0 && max > 0.0, format!("order {order}, extrema [{min:.3}, {max:.3}]")),
        TrivialityOutcome::TrivialThrough(m) => (false, format!("trivial through order {m}")),
    };
    let ts = [0.02, 0.05, 0.1];
    let opts = SearchOptions {
        seed,
        ..Default::default()
    };
    let rep = strict_max_check(&fam, &ts, &opts)?;
    let bound = rep.bound.clone().unwrap_or_default();
    let mut profile_ok = rep.decreasing && rep.a_min.windows(2).all(|w| w[1] < w[0]) && bound.len() == ts.len();
    let mut records = vec![
        Record::new("averaging", 0.0, worst, 0.0, 1e-10 - worst, averaging_ok),
        Record::new("obstruction", 0.0, 1.0, 0.0, 0.0, obs_ok),
    ];
    let mut worst_closed: f64 = 0.0;
    for (i, &t) in ts.iter().enumerate() {
        let a = rep.a_min[i];
        let b = bound.get(i).copied().unwrap_or(f64::NAN);
        // invariant family: Hopf circles at the minimum of the unit-volume rescaling of 1 + tρ₁
        let closed = PI * (1.0 - t / 2.0) / (1.0 + t * t / 12.0).sqrt();
        worst_closed = worst_closed.max((a - closed).abs());
        let ok = a <= b + 1e-3 && a < PI && (a - closed).abs() <= 1e-6;
        profile_ok &= ok;
        records.push(Record::new("profile", t, a, 0.0, b - a, ok).route("bound", b).route("closed_form", closed));
    }
    Ok(Outcome {
        pass: averaging_ok && obs_ok && profile_ok,
        detail: format!(
            "averaging defects ≤ {worst:.1e}; obstruction {obs}; A_min {:?} decreasing: {}, within {worst_closed:.1e} of closed form, bound gap ≥ {:.1e}",
            rep.a_min.iter().map(|a| format!("{a:.6}")).collect::<Vec<_>>(),
            rep.decreasing,
            rep.a_min.iter().zip(&bound).map(|(a, b)| b - a).fold(f64::INFINITY, f64::min)
        ),
        records,
    })
}

fn scaling_embedding(seed: u64) -> Result<EmbeddingComposition> {
    let l = random_symplectic(6, 2, 0.4, &mut rng(seed, 10));
    let g = cubic(3, &[(0.5, &[3, 0, 0]), (0.4, &[1, 1, 1]), (-0.3, &[0, 2, 1]), (0.3, &[1, 0, 2])]);
    let h = cubic(3, &[(0.3, &[0, 3, 0]), (-0.4, &[2, 0, 1])]);
    Ok(EmbeddingComposition::new(
        6,
        vec![PrimitiveMap::linear(l)?, PrimitiveMap::ShearPositions(g), PrimitiveMap::ShearMomenta(h)],
        1.0,
    )?)
}

fn scaling(seed: u64) -> Result<Outcome> {
    let phi = scaling_embedding(seed)?;
    let v = coordinate(6, &[0, 1]);
    let geom = geometry(&v)?;
    let mut r = rng(seed, 11);
    let mut records = Vec::new();
    let mut worst: f64 = 0.0;
    for (i, rad) in [0.1, 0.2, 0.3, 0.25, 0.4].into_iter().enumerate() {
        let x = uniform_vec(6, &mut r).normalize() * (0.1 + 0.05 * i as f64);
        let c = scaling_identity(&phi, &geom, &x, rad, 48)?;
        worst = worst.max(c.defect);
        records.push(Record::new(format!("pair{i}"), rad, c.direct, 0.0, c.defect, c.defect <= 1e-2).route("rescaled", c.rescaled));
    }
    let scaling_ok = worst <= 1e-2;
    let r_grid: Vec<f64> = (0..=8).map(|i| 0.05 * i as f64).collect();
    let step = 0.05;
    let coarse = r0_map(&phi, &geom, &grid_centers(6, &[0, 1, 2], 3, 0.25), &r_grid, 32, 1e-3)?;
    let fine = r0_map(&phi, &geom, &grid_centers(6, &[0, 1, 2], 5, 0.25), &r_grid, 32, 1e-3)?;
    let stable = (coarse.min_r0 - fine.min_r0).abs() <= step + 1e-12;
    let r0_ok = coarse.min_r0 > 0.0 && fine.min_r0 > 0.0 && stable;
    records.push(Record::new("r0_3", r_grid[8], coarse.min_r0, 0.0, coarse.min_r0, coarse.min_r0 > 0.0));
    records.push(Record::new("r0_5", r_grid[8], fine.min_r0, 0.0, fine.min_r0 - coarse.min_r0, r0_ok));
    Ok(Outcome {
        pass: scaling_ok && r0_ok,
        detail: format!(
            "max scaling defect {:.2e} of r^{{2k}}π^k; min r0 {:.2} on 3^3, {:.2} on 5^3",
            worst, coarse.min_r0, fine.min_r0
        ),
        records,
    })
}

/// Small scenarios covering every experiment kind.
pub fn probe_scenarios(seed: u64) -> Vec<Scenario> {
    let corpus = [
        include_str!("../../../scenarios/linear_identity.json"),
        include_str!("../../../scenarios/shadow_scan_shear.json"),
        include_str!("../../../scenarios/r0_map_small.json"),
        include_str!("../../../scenarios/capacity_ball.json"),
        include_str!("../../../scenarios/deform_hopf.json"),
    ];
    corpus
        .iter()
        .map(|s| {
            let mut sc = Scenario::from_json(s).expect("bundled scenario is valid");
            sc.params.seed = seed;
            sc
        })
        .collect()
}

/// Ledger of the probe scenarios on a pool of `workers` threads.
pub fn probe_ledger(seed: u64, workers: usize) -> Result<String> {
    let scenarios = probe_scenarios(seed);
    with_workers(workers, || {
        let mut ledger = Ledger::new();
        for s in &scenarios {
            ledger.extend(run_scenario(s)?.records);
        }
        Ok(ledger.to_jsonl())
    })
}

fn determinism(seed: u64) -> Result<Outcome> {
    let a = probe_ledger(seed, 1)?;
    let b = probe_ledger(seed, 4)?;
    let c = probe_ledger(seed, 4)?;
    let crit = |s| {
        let (_, l) = run_suite(&[1, 6], s, |_| {});
        l.to_jsonl()
    };
    let (d, e) = (crit(seed), with_workers(2, || crit(seed)));
    let same = a == b && b == c && d == e;
    let lines = a.lines().count() + d.lines().count();
    Ok(Outcome {
        pass: same,
        detail: format!("{lines} ledger lines bit-identical across repeats and 1, 2, 4 workers: {same}"),
        records: vec![Record::new("ledger", 0.0, lines as f64, 0.0, 0.0, same)],
    })
}
