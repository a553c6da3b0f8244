//! Closed-orbit search, minimal action, and the comparisons built on it.

use std::f64::consts::PI;

use nalgebra::DVector;
use rayon::prelude::*;

use super::bodies::{check_pinch, hausdorff_distance, Ball, ConvexBody, ProjectedBody, RadialBody};
use super::clarke::{clarke_minimize, ClarkeOptions};
use super::multiplier::{sample_points, ContactMultiplier};
use super::reeb::{refine_orbit, HamiltonianSystem, MultiplierSystem, ReebOrbit, ReebSystem, ORBIT_SAMPLES};
use super::sphere_fn::{rotate_phase, SphereFunction};
use crate::error::{Error, Result};
use crate::ode::integrate_samples;
use crate::symplectic::SymplecticSubspace;

const INVARIANCE_TOL: f64 = 1e-10;
const SCAN_SAMPLES: usize = 800;

#[derive(Clone, Copy, Debug)]
pub struct SearchOptions {
    pub random_seeds: usize,
    pub seed: u64,
    pub clarke: ClarkeOptions,
}

impl Default for SearchOptions {
    fn default() -> Self {
        Self {
            random_seeds: 16,
            seed: 0x0b17,
            clarke: ClarkeOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct CapacityEstimate {
    pub value: f64,
    pub witness: ReebOrbit,
    pub seeds_tried: usize,
    pub orbits_found: usize,
    pub max_closure_residual: f64,
    /// Minimal action over the loop functional, when it ran.
    pub dual_value: Option<f64>,
    /// Orbit search is heuristic: the value bounds the true minimal action from above.
    pub upper_bound: bool,
}

/// First return time guess: the earliest local minimum of |φ_t(x₀) − x₀| past `t_lo`.
fn return_guess(system: &dyn ReebSystem, x0: &DVector<f64>, t_lo: f64, t_hi: f64) -> Result<Option<f64>> {
    let times: Vec<f64> = (1..=SCAN_SAMPLES).map(|i| t_hi * i as f64 / SCAN_SAMPLES as f64).collect();
    let project = |y: &mut DVector<f64>| system.project(y);
    let states = integrate_samples(
        &|y: &DVector<f64>| system.field(y),
        x0,
        &times,
        &super::reeb::flow_options(),
        Some(&project),
    )?;
    let d: Vec<f64> = states.iter().map(|s| (s - x0).norm()).collect();
    let (r_min, _) = system.radial_range();
    for i in 1..d.len() - 1 {
        if times[i] > t_lo && d[i] <= d[i - 1] && d[i] <= d[i + 1] && d[i] < 0.5 * r_min {
            // parabolic vertex through the three samples
            let (a, b, c) = (d[i - 1], d[i], d[i + 1]);
            let h = times[1] - times[0];
            let den = a - 2.0 * b + c;
            let off = if den > 0.0 { 0.5 * h * (a - c) / den } else { 0.0 };
            return Ok(Some(times[i] + off));
        }
    }
    Ok(None)
}

/// Closed orbits from coordinate-plane and random seeds, plus the loop-functional minimizer
/// when a dual body is supplied and the dimension is at least 4. Sorted by action.
pub fn closed_characteristic_search(
    system: &dyn ReebSystem,
    dual: Option<&dyn ConvexBody>,
    opts: &SearchOptions,
) -> Result<(Vec<ReebOrbit>, usize, Option<f64>)> {
    let n = system.dim();
    let (r_min, r_max) = system.radial_range();
    let t_lo = 0.9 * PI * r_min * r_min;
    let t_hi = 2.2 * PI * r_max * r_max;

    let mut seeds: Vec<(DVector<f64>, Option<f64>)> = Vec::new();
    for p in 0..n / 2 {
        let mut e = DVector::zeros(n);
        e[2 * p] = 1.0;
        seeds.push((e, None));
    }
    if n > 2 {
        for u in sample_points(n / 2, opts.random_seeds, opts.seed) {
            seeds.push((u, None));
        }
    }
    let mut dual_value = None;
    if let (Some(body), true) = (dual, n >= 4) {
        if let Ok(cl) = clarke_minimize(body, &opts.clarke) {
            dual_value = Some(cl.value);
            seeds.push((cl.points[0].clone(), Some(cl.value)));
        }
    }
    for s in seeds.iter_mut() {
        system.project(&mut s.0);
    }
    let tried = seeds.len();
    let mut found: Vec<(usize, ReebOrbit)> = seeds
        .par_iter()
        .enumerate()
        .filter_map(|(i, (x0, guess))| {
            let t0 = match guess {
                Some(t) => Some(*t),
                None => return_guess(system, x0, t_lo, t_hi).ok().flatten(),
            }?;
            refine_orbit(system, x0, t0)
                .ok()
                .filter(|o| o.period > 0.5 * t_lo && o.action > 0.0)
                .map(|o| (i, o))
        })
        .collect();
    if found.is_empty() {
        return Err(Error::NoOrbitFound(format!(
            "{tried} seeds, radial range [{r_min:.4}, {r_max:.4}]"
        )));
    }
    found.sort_by(|a, b| a.1.action.total_cmp(&b.1.action).then(a.0.cmp(&b.0)));
    Ok((found.into_iter().map(|(_, o)| o).collect(), tried, dual_value))
}

pub fn a_min_estimate(system: &dyn ReebSystem, dual: Option<&dyn ConvexBody>, opts: &SearchOptions) -> Result<CapacityEstimate> {
    let (orbits, tried, dual_value) = closed_characteristic_search(system, dual, opts)?;
    let max_closure_residual = orbits.iter().map(|o| o.closure_residual).fold(0.0, f64::max);
    let orbits_found = orbits.len();
    let witness = orbits.into_iter().next().expect("non-empty");
    Ok(CapacityEstimate {
        value: witness.action,
        witness,
        seeds_tried: tried,
        orbits_found,
        max_closure_residual,
        dual_value,
        upper_bound: true,
    })
}

/// Minimal action of ∂C for the Hamiltonian flow of its squared gauge.
pub fn body_capacity(body: &dyn ConvexBody, opts: &SearchOptions) -> Result<CapacityEstimate> {
    let sys = HamiltonianSystem::new(body);
    a_min_estimate(&sys, Some(body), opts)
}

/// Minimal action of (S^{2m−1}, ρλ_s), seeded through the radial lift of ρ.
pub fn multiplier_capacity(rho: &SphereFunction, opts: &SearchOptions) -> Result<CapacityEstimate> {
    let sys = MultiplierSystem::new(rho.clone())?;
    let lift = RadialBody::new(rho.sub(&SphereFunction::constant(rho.m(), 1.0)))?;
    a_min_estimate(&sys, Some(&lift), opts)
}

#[derive(Clone, Debug)]
pub struct UpperBound {
    pub value: f64,
    pub argmin: DVector<f64>,
    /// The circle through the minimum point: a Reeb orbit of ρα with period value.
    pub witness: ReebOrbit,
}

/// (min ρ)·A_min(base) for a fiber-invariant positive multiplier of the round form.
pub fn amin_upper_bound(rho: &SphereFunction, base: f64) -> Result<UpperBound> {
    let samples = sample_points(rho.m(), 64, 0x1bd);
    let defect = rho.fiber_defect(&samples, 16);
    if defect > INVARIANCE_TOL {
        return Err(Error::NotInvariant { defect });
    }
    let ex = rho.extrema();
    if !(ex.min > 0.0) {
        return Err(Error::NonPositiveMultiplier { min: ex.min });
    }
    let value = ex.min * base;
    // x ↦ e^{iθ}x with θ ∈ [0, 2π) traverses the orbit; period scales with ρ
    let samples: Vec<DVector<f64>> = (0..=ORBIT_SAMPLES)
        .map(|j| rotate_phase(&ex.argmin, 2.0 * PI * j as f64 / ORBIT_SAMPLES as f64))
        .collect();
    let closure_residual = (samples.last().expect("samples") - &samples[0]).norm();
    Ok(UpperBound {
        value,
        argmin: ex.argmin,
        witness: ReebOrbit {
            samples,
            period: value,
            action: value,
            closure_residual,
        },
    })
}

#[derive(Clone, Debug)]
pub struct StrictMaxReport {
    pub t: Vec<f64>,
    pub a_min: Vec<f64>,
    /// (min ρ'_t)·π for the rescaled multiplier, when every ρ_t is fiber-invariant.
    pub bound: Option<Vec<f64>>,
    pub decreasing: bool,
    pub flat: bool,
    /// π − A_min(t).
    pub decrement: Vec<f64>,
    /// Slope of log decrement against log t.
    pub leading_order: Option<f64>,
    pub verdict: String,
}

/// A_min of the constant-volume rescaling of ρ_t along `t_grid` (t > 0).
pub fn strict_max_check(family: &ContactMultiplier, t_grid: &[f64], opts: &SearchOptions) -> Result<StrictMaxReport> {
    if t_grid.iter().any(|&t| !(t > 0.0) || t > family.t_max()) {
        return Err(Error::InvalidArgument("t grid must lie in (0, t_max]".into()));
    }
    let invariant = family.invariance_defect(1..=family.order()) <= INVARIANCE_TOL;
    let rows: Vec<(f64, Option<f64>)> = t_grid
        .iter()
        .map(|&t| -> Result<(f64, Option<f64>)> {
            let scale = family.volume_rescaling(t)?;
            let rho = family.at(t).scale(scale);
            let est = multiplier_capacity(&rho, opts)?;
            let bound = if invariant { Some(amin_upper_bound(&rho, PI)?.value) } else { None };
            Ok((est.value, bound))
        })
        .collect::<Result<_>>()?;
    let a_min: Vec<f64> = rows.iter().map(|r| r.0).collect();
    let bound = if invariant {
        Some(rows.iter().map(|r| r.1.expect("invariant")).collect())
    } else {
        None
    };
    let decrement: Vec<f64> = a_min.iter().map(|a| PI - a).collect();
    let flat = decrement.iter().all(|d| d.abs() <= 1e-6);
    let decreasing = !flat && decrement.iter().all(|&d| d > 0.0);
    let leading_order = if decreasing && t_grid.len() >= 2 {
        let pts: Vec<(f64, f64)> = t_grid.iter().zip(&decrement).map(|(t, d)| (t.ln(), d.ln())).collect();
        Some(slope(&pts))
    } else {
        None
    };
    let verdict = if flat {
        "no strict max detectable".to_string()
    } else if decreasing {
        "strict maximum at t = 0 on the grid".to_string()
    } else {
        "profile not below the base value".to_string()
    };
    Ok(StrictMaxReport {
        t: t_grid.to_vec(),
        a_min,
        bound,
        decreasing,
        flat,
        decrement,
        leading_order,
        verdict,
    })
}

/// Least-squares slope of y against x.
pub(crate) fn slope(pts: &[(f64, f64)]) -> f64 {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Clone, Debug)]
pub struct ProjectionMargin {
    pub projected: f64,
    pub full: f64,
    pub margin: f64,
}

/// c(PC) − c(C), with PC described by its fiberwise-minimized gauge on V.
pub fn projection_monotonicity(body: &dyn ConvexBody, v: &SymplecticSubspace, opts: &SearchOptions) -> Result<ProjectionMargin> {
    let full = body_capacity(body, opts)?.value;
    let pc = ProjectedBody::new(body, v)?;
    let projected = body_capacity(&pc, opts)?.value;
    Ok(ProjectionMargin {
        projected,
        full,
        margin: projected - full,
    })
}

#[derive(Clone, Debug)]
pub struct LipschitzProbe {
    pub capacity_c: f64,
    pub capacity_d: f64,
    pub hausdorff: f64,
    pub ratio: f64,
    /// (2/δ + Δ/δ²)·Δ²π.
    pub constant: f64,
    pub holds: bool,
}

/// Lipschitz constant of the capacity in the Hausdorff metric on the (δ, Δ) pinch.
pub fn lipschitz_constant(delta: f64, big_delta: f64) -> f64 {
    // c(D) ≤ c(ΔB) = Δ²π and the gauge comparison of two pinched bodies
    (2.0 / delta + big_delta / (delta * delta)) * big_delta * big_delta * PI
}

pub fn hausdorff_lipschitz_probe(
    c: &dyn ConvexBody,
    d: &dyn ConvexBody,
    pinch: (f64, f64),
    opts: &SearchOptions,
) -> Result<LipschitzProbe> {
    let (delta, big_delta) = pinch;
    check_pinch(c, delta, big_delta)?;
    check_pinch(d, delta, big_delta)?;
    let capacity_c = body_capacity(c, opts)?.value;
    let capacity_d = body_capacity(d, opts)?.value;
    let hausdorff = hausdorff_distance(c, d, 512, opts.seed)?;
    let diff = (capacity_c - capacity_d).abs();
    // identical bodies: 0/0 read as 0
    let ratio = if hausdorff <= 1e-12 { 0.0 } else { diff / hausdorff };
    let constant = lipschitz_constant(delta, big_delta);
    Ok(LipschitzProbe {
        capacity_c,
        capacity_d,
        hausdorff,
        ratio,
        constant,
        holds: ratio <= constant,
    })
}

/// Capacity of a ball of radius r, through the orbit search.
pub fn ball_capacity(dim: usize, radius: f64, opts: &SearchOptions) -> Result<CapacityEstimate> {
    body_capacity(&Ball::new(dim, radius)?, opts)
}
