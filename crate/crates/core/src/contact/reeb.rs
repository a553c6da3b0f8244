//! Reeb-type flows whose closed orbits are closed characteristics, parametrized
//! so that the period equals the action.

use nalgebra::{DMatrix, DVector};

use super::bodies::ConvexBody;
use super::sphere_fn::SphereFunction;
use crate::error::{Error, Result};
use crate::linalg::lstsq;
use crate::ode::{integrate, integrate_samples, OdeOptions};
use crate::symplectic::apply_j;

pub const ORBIT_TOL: f64 = 1e-8;
const LEVEL_TOL: f64 = 1e-10;
const FD_MONODROMY: f64 = 1e-5;

pub trait ReebSystem: Sync {
    fn dim(&self) -> usize;

    fn field(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Level function whose unit level set carries the flow.
    fn level(&self, x: &DVector<f64>) -> f64;

    fn level_gradient(&self, x: &DVector<f64>) -> DVector<f64>;

    /// Back onto the level set along rays.
    fn project(&self, x: &mut DVector<f64>);

    /// Loop integral of the primitive along samples x_j = γ(jT/N), with velocities from the field.
    fn action(&self, samples: &[DVector<f64>], period: f64) -> f64;

    /// Radial range of the level set, for period bounds.
    fn radial_range(&self) -> (f64, f64);
}

/// ẋ = J∇H on ∂C, H = g²; action ∫λ₀ equals the period.
pub struct HamiltonianSystem<'a> {
    body: &'a dyn ConvexBody,
    range: (f64, f64),
}

impl<'a> HamiltonianSystem<'a> {
    pub fn new(body: &'a dyn ConvexBody) -> Self {
        let range = super::bodies::radial_range(body, 256, 0x5a3);
        Self { body, range }
    }

    pub fn body(&self) -> &dyn ConvexBody {
        self.body
    }
}

impl ReebSystem for HamiltonianSystem<'_> {
    fn dim(&self) -> usize {
        self.body.dim()
    }

    fn field(&self, x: &DVector<f64>) -> DVector<f64> {
        apply_j(&self.body.hamiltonian_gradient(x))
    }

    fn level(&self, x: &DVector<f64>) -> f64 {
        self.body.hamiltonian(x)
    }

    fn level_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.body.hamiltonian_gradient(x)
    }

    fn project(&self, x: &mut DVector<f64>) {
        let g = self.body.gauge(x);
        x.scale_mut(1.0 / g);
    }

    fn action(&self, samples: &[DVector<f64>], period: f64) -> f64 {
        // ∫ Σ x_i ẏ_i dt, trapezoid on a periodic integrand
        let n = samples.len();
        let s: f64 = samples
            .iter()
            .map(|x| {
                let v = self.field(x);
                (0..x.len() / 2).map(|i| x[2 * i] * v[2 * i + 1]).sum::<f64>()
            })
            .sum();
        s * period / n as f64
    }

    fn radial_range(&self) -> (f64, f64) {
        self.range
    }
}

/// Reeb field of ρλ_s on S^{2m−1}: R' = 2Jx/ρ − JΠ_ξ∇ρ/ρ².
pub struct MultiplierSystem {
    rho: SphereFunction,
    range: (f64, f64),
}

impl MultiplierSystem {
    pub fn new(rho: SphereFunction) -> Result<Self> {
        let ex = rho.extrema();
        if !(ex.min > 0.0) {
            return Err(Error::NonPositiveMultiplier { min: ex.min });
        }
        // action scale ρ·π corresponds to a ball of radius √ρ
        let range = (ex.min.sqrt(), ex.max.sqrt());
        Ok(Self { rho, range })
    }

    pub fn multiplier(&self) -> &SphereFunction {
        &self.rho
    }

    /// ρλ_s(R') = 1 at a point of the sphere.
    pub fn normalization_defect(&self, x: &DVector<f64>) -> f64 {
        let x = x.normalize();
        let r = self.field(&x);
        let lam = 0.5 * apply_j(&x).dot(&r);
        (self.rho.eval(x.as_slice()) * lam - 1.0).abs()
    }
}

impl ReebSystem for MultiplierSystem {
    fn dim(&self) -> usize {
        2 * self.rho.m()
    }

    fn field(&self, x: &DVector<f64>) -> DVector<f64> {
        let (r, g) = self.rho.poly().value_and_gradient(x.as_slice());
        let jx = apply_j(x);
        let proj = &g - x * x.dot(&g) - &jx * jx.dot(&g);
        jx * (2.0 / r) - apply_j(&proj) / (r * r)
    }

    fn level(&self, x: &DVector<f64>) -> f64 {
        x.norm_squared()
    }

    fn level_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        x * 2.0
    }

    fn project(&self, x: &mut DVector<f64>) {
        let n = x.norm();
        x.scale_mut(1.0 / n);
    }

    fn action(&self, samples: &[DVector<f64>], period: f64) -> f64 {
        // ∫ ρ·½ω(x, ẋ) dt
        let n = samples.len();
        let s: f64 = samples
            .iter()
            .map(|x| {
                let v = self.field(x);
                self.rho.eval(x.as_slice()) * 0.5 * apply_j(x).dot(&v)
            })
            .sum();
        s * period / n as f64
    }

    fn radial_range(&self) -> (f64, f64) {
        self.range
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    /// max |level − 1| along the samples.
    pub energy_drift: f64,
}

pub(crate) fn flow_options() -> OdeOptions {
    OdeOptions {
        rtol: 1e-12,
        atol: 1e-13,
        h_init: 1e-2,
        ..OdeOptions::default()
    }
}

/// Trajectory from x₀ on the level set, sampled at `samples` uniform times in [0, T].
pub fn characteristic_flow(system: &dyn ReebSystem, x0: &DVector<f64>, t_end: f64, samples: usize) -> Result<Trajectory> {
    let lv = system.level(x0);
    if (lv - 1.0).abs() > LEVEL_TOL {
        return Err(Error::InvalidArgument(format!(
            "start point off the level set (level {lv:.12})"
        )));
    }
    let n = samples.max(1);
    let times: Vec<f64> = (0..=n).map(|i| t_end * i as f64 / n as f64).collect();
    let project = |y: &mut DVector<f64>| system.project(y);
    let states = integrate_samples(&|y: &DVector<f64>| system.field(y), x0, &times, &flow_options(), Some(&project))?;
    let energy_drift = states
        .iter()
        .map(|s| (system.level(s) - 1.0).abs())
        .fold(0.0, f64::max);
    Ok(Trajectory {
        times,
        states,
        energy_drift,
    })
}

pub(crate) fn flow_to(system: &dyn ReebSystem, x0: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    let project = |y: &mut DVector<f64>| system.project(y);
    integrate(&|y: &DVector<f64>| system.field(y), x0, t, &flow_options(), Some(&project))
}

#[derive(Clone, Debug)]
pub struct ReebOrbit {
    /// γ(jT/N), j = 0..N.
    pub samples: Vec<DVector<f64>>,
    pub period: f64,
    pub action: f64,
    pub closure_residual: f64,
}

pub const ORBIT_SAMPLES: usize = 256;

/// Newton on (x₀, T) for φ_T(x₀) = x₀ with level and phase conditions.
pub fn refine_orbit(system: &dyn ReebSystem, x0: &DVector<f64>, t0: f64) -> Result<ReebOrbit> {
    let n = system.dim();
    let mut x = x0.clone();
    system.project(&mut x);
    let mut t = t0;
    if !(t > 0.0) {
        return Err(Error::InvalidArgument("period guess must be positive".into()));
    }
    let anchor = x.clone();
    let anchor_field = system.field(&anchor);
    let mut best: Option<(f64, DVector<f64>, f64)> = None;
    for _ in 0..12 {
        let end = flow_to(system, &x, t)?;
        let res = (&end - &x).norm();
        if best.as_ref().is_none_or(|b| res < b.0) {
            best = Some((res, x.clone(), t));
        }
        if res <= 1e-11 * (1.0 + x.norm()) {
            break;
        }
        // central-difference monodromy
        let mut mono = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += FD_MONODROMY;
            xm[j] -= FD_MONODROMY;
            let col = (flow_to(system, &xp, t)? - flow_to(system, &xm, t)?) / (2.0 * FD_MONODROMY);
            mono.set_column(j, &col);
        }
        let mut a = DMatrix::zeros(n + 2, n + 1);
        let mut b = DVector::zeros(n + 2);
        let fe = system.field(&end);
        a.view_mut((0, 0), (n, n)).copy_from(&(mono - DMatrix::identity(n, n)));
        a.view_mut((0, n), (n, 1)).copy_from(&fe);
        b.rows_mut(0, n).copy_from(&(&x - &end));
        let lg = system.level_gradient(&x);
        a.view_mut((n, 0), (1, n)).copy_from(&lg.transpose());
        b[n] = 1.0 - system.level(&x);
        a.view_mut((n + 1, 0), (1, n)).copy_from(&anchor_field.transpose());
        b[n + 1] = -anchor_field.dot(&(&x - &anchor));
        let d = lstsq(&a, &b, 1e-10);
        let mut step = d.rows(0, n).into_owned();
        let mut dt = d[n];
        // keep steps local: the return map is only linearized near the guess
        let cap = 0.2 * (1.0 + x.norm());
        let sn = step.norm();
        if sn > cap {
            step *= cap / sn;
            dt *= cap / sn;
        }
        x += step;
        system.project(&mut x);
        t += dt;
        if !(t > 0.0) {
            return Err(Error::NoOrbitFound("period collapsed during refinement".into()));
        }
    }
    let (res, x, t) = best.expect("at least one iterate");
    if res > ORBIT_TOL {
        return Err(Error::NoOrbitFound(format!("closure residual {res:.3e} above tolerance")));
    }
    let traj = characteristic_flow(system, &x, t, ORBIT_SAMPLES)?;
    let closure_residual = (traj.states.last().expect("samples") - &traj.states[0]).norm();
    let samples = traj.states[..ORBIT_SAMPLES].to_vec();
    let action = system.action(&samples, t);
    Ok(ReebOrbit {
        samples: traj.states,
        period: t,
        action,
        closure_residual,
    })
}
