//! Star-shaped convex bodies described by their gauge functions.

use nalgebra::{DMatrix, DVector};

use super::multiplier::sample_points;
use super::sphere_fn::SphereFunction;
use crate::error::{check_dim, Error, Result};
use crate::symplectic::{symplectic_complement, SymplecticSubspace};

const FD_STEP: f64 = 1e-5;

/// Body C = {g ≤ 1} with g positively 1-homogeneous, smooth away from 0.
pub trait ConvexBody: Send + Sync {
    fn dim(&self) -> usize;

    fn gauge(&self, x: &DVector<f64>) -> f64;

    fn gauge_gradient(&self, x: &DVector<f64>) -> DVector<f64>;

    /// H = g², 2-homogeneous.
    fn hamiltonian(&self, x: &DVector<f64>) -> f64 {
        self.gauge(x).powi(2)
    }

    fn hamiltonian_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        self.gauge_gradient(x) * (2.0 * self.gauge(x))
    }

    /// Central differences of the gradient, symmetrized.
    fn hamiltonian_hessian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let n = self.dim();
        let h = FD_STEP * (1.0 + x.norm());
        let mut m = DMatrix::zeros(n, n);
        for j in 0..n {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[j] += h;
            xm[j] -= h;
            let col = (self.hamiltonian_gradient(&xp) - self.hamiltonian_gradient(&xm)) / (2.0 * h);
            m.set_column(j, &col);
        }
        (&m + m.transpose()) * 0.5
    }

    /// Boundary point in direction u: u/g(u).
    fn radial_point(&self, u: &DVector<f64>) -> DVector<f64> {
        u / self.gauge(u)
    }

    /// Legendre dual H*(w) and its gradient x with ∇H(x) = w.
    fn conjugate(&self, w: &DVector<f64>, guess: Option<&DVector<f64>>) -> Result<(f64, DVector<f64>)> {
        conjugate_newton(self, w, guess)
    }

    /// Support function h(u) = max_{x∈C} ⟨u, x⟩ = 2√H*(u).
    fn support(&self, u: &DVector<f64>) -> Result<f64> {
        Ok(2.0 * self.conjugate(u, None)?.0.max(0.0).sqrt())
    }
}

/// Newton on ∇H(x) = w from the radial guess; H* = H(x) by 2-homogeneity.
pub fn conjugate_newton<B: ConvexBody + ?Sized>(
    body: &B,
    w: &DVector<f64>,
    guess: Option<&DVector<f64>>,
) -> Result<(f64, DVector<f64>)> {
    let wn = w.norm();
    if wn == 0.0 {
        return Ok((0.0, DVector::zeros(w.len())));
    }
    let mut x = match guess {
        Some(g) => g.clone(),
        None => {
            // ∇H(t p) = t ∇H(p) for the boundary point p along w
            let p = body.radial_point(w);
            let gp = body.hamiltonian_gradient(&p);
            &p * (wn / gp.norm())
        }
    };
    let mut r = body.hamiltonian_gradient(&x) - w;
    for _ in 0..50 {
        if r.norm() <= 1e-13 * wn {
            return Ok((body.hamiltonian(&x), x));
        }
        let hess = body.hamiltonian_hessian(&x);
        let step = hess.lu().solve(&r).ok_or(Error::SingularJacobian)?;
        let mut lambda = 1.0;
        loop {
            let trial = &x - &step * lambda;
            let rt = body.hamiltonian_gradient(&trial) - w;
            if rt.norm() < r.norm() || lambda < 1e-4 {
                x = trial;
                r = rt;
                break;
            }
            lambda *= 0.5;
        }
    }
    if r.norm() <= 1e-9 * wn {
        Ok((body.hamiltonian(&x), x))
    } else {
        Err(Error::BisectionFailed(format!(
            "Legendre dual did not converge (residual {:.3e})",
            r.norm()
        )))
    }
}

#[derive(Clone, Debug)]
pub struct Ball {
    dim: usize,
    radius: f64,
}

impl Ball {
    pub fn new(dim: usize, radius: f64) -> Result<Self> {
        if dim == 0 || dim % 2 != 0 || !(radius > 0.0) {
            return Err(Error::InvalidArgument("ball needs even dimension and positive radius".into()));
        }
        Ok(Self { dim, radius })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

impl ConvexBody for Ball {
    fn dim(&self) -> usize {
        self.dim
    }

    fn gauge(&self, x: &DVector<f64>) -> f64 {
        x.norm() / self.radius
    }

    fn gauge_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        x / (x.norm() * self.radius)
    }

    fn hamiltonian(&self, x: &DVector<f64>) -> f64 {
        x.norm_squared() / self.radius.powi(2)
    }

    fn hamiltonian_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        x * (2.0 / self.radius.powi(2))
    }

    fn hamiltonian_hessian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(self.dim, self.dim) * (2.0 / self.radius.powi(2))
    }

    fn conjugate(&self, w: &DVector<f64>, _guess: Option<&DVector<f64>>) -> Result<(f64, DVector<f64>)> {
        let r2 = self.radius.powi(2);
        Ok((0.25 * r2 * w.norm_squared(), w * (0.5 * r2)))
    }

    fn support(&self, u: &DVector<f64>) -> Result<f64> {
        Ok(self.radius * u.norm())
    }
}

/// Ellipsoid {xᵀAx ≤ 1}, A symmetric positive definite.
#[derive(Clone, Debug)]
pub struct QuadraticBody {
    a: DMatrix<f64>,
    a_inv: DMatrix<f64>,
}

impl QuadraticBody {
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() % 2 != 0 || a.nrows() == 0 {
            return Err(Error::InvalidArgument("quadratic body needs an even square matrix".into()));
        }
        let sym = (&a + a.transpose()) * 0.5;
        let eig = sym.clone().symmetric_eigen();
        let min = eig.eigenvalues.min();
        if !(min > 0.0) {
            return Err(Error::InvalidArgument(format!("matrix not positive definite (min eigenvalue {min:.3e})")));
        }
        let a_inv = sym.clone().try_inverse().ok_or(Error::SingularJacobian)?;
        Ok(Self { a: sym, a_inv })
    }

    /// Σ_j |z_j|²/a_j² ≤ 1 with one semi-axis per complex plane.
    pub fn ellipsoid(semi_axes: &[f64]) -> Result<Self> {
        let n = 2 * semi_axes.len();
        let mut a = DMatrix::zeros(n, n);
        for (j, &s) in semi_axes.iter().enumerate() {
            if !(s > 0.0) {
                return Err(Error::InvalidArgument("semi-axes must be positive".into()));
            }
            a[(2 * j, 2 * j)] = 1.0 / (s * s);
            a[(2 * j + 1, 2 * j + 1)] = 1.0 / (s * s);
        }
        Self::new(a)
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.a
    }
}

impl ConvexBody for QuadraticBody {
    fn dim(&self) -> usize {
        self.a.nrows()
    }

    fn gauge(&self, x: &DVector<f64>) -> f64 {
        self.hamiltonian(x).sqrt()
    }

    fn gauge_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x / self.gauge(x)
    }

    fn hamiltonian(&self, x: &DVector<f64>) -> f64 {
        x.dot(&(&self.a * x))
    }

    fn hamiltonian_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.a * x * 2.0
    }

    fn hamiltonian_hessian(&self, _x: &DVector<f64>) -> DMatrix<f64> {
        &self.a * 2.0
    }

    fn conjugate(&self, w: &DVector<f64>, _guess: Option<&DVector<f64>>) -> Result<(f64, DVector<f64>)> {
        let x = &self.a_inv * w * 0.5;
        Ok((0.25 * w.dot(&(&self.a_inv * w)), x))
    }
}

/// Region bounded by the radial lift {√(1+f(u))·u : |u| = 1}.
#[derive(Clone, Debug)]
pub struct RadialBody {
    f: SphereFunction,
}

impl RadialBody {
    pub fn new(f: SphereFunction) -> Result<Self> {
        let min = f.extrema().min;
        if !(1.0 + min > 0.0) {
            return Err(Error::NonPositiveMultiplier { min: 1.0 + min });
        }
        Ok(Self { f })
    }

    pub fn profile(&self) -> &SphereFunction {
        &self.f
    }

    /// 1 + f(u): the multiplier whose form this body's boundary carries.
    pub fn multiplier(&self) -> SphereFunction {
        self.f.add(&SphereFunction::constant(self.f.m(), 1.0))
    }
}

impl ConvexBody for RadialBody {
    fn dim(&self) -> usize {
        2 * self.f.m()
    }

    fn gauge(&self, x: &DVector<f64>) -> f64 {
        let r = x.norm();
        let u = x / r;
        r / (1.0 + self.f.eval(u.as_slice())).sqrt()
    }

    fn gauge_gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        let r = x.norm();
        let u = x / r;
        let (fv, g) = self.f.poly().value_and_gradient(u.as_slice());
        let rho = 1.0 + fv;
        let tang = &g - &u * u.dot(&g);
        &u / rho.sqrt() - tang * (0.5 * rho.powf(-1.5))
    }
}

/// Symplectic projection P C of a body onto V, in Darboux coordinates of V:
/// g_{PC}(u) = min_ξ g_C(Du + Cξ) with C spanning V^ω.
pub struct ProjectedBody<'a> {
    body: &'a dyn ConvexBody,
    darboux: DMatrix<f64>,
    kernel: DMatrix<f64>,
}

impl<'a> ProjectedBody<'a> {
    pub fn new(body: &'a dyn ConvexBody, v: &SymplecticSubspace) -> Result<Self> {
        check_dim(body.dim(), v.ambient_dim())?;
        let kernel = symplectic_complement(v)?.orthonormal_basis();
        Ok(Self {
            body,
            darboux: v.darboux_basis(),
            kernel,
        })
    }

    /// Minimizer ξ of H_C(Du + Cξ); returns the ambient point.
    fn lift(&self, u: &DVector<f64>) -> DVector<f64> {
        let base = &self.darboux * u;
        if self.kernel.ncols() == 0 || u.norm() == 0.0 {
            return base;
        }
        let c = &self.kernel;
        let mut xi = DVector::zeros(c.ncols());
        for _ in 0..50 {
            let x = &base + c * &xi;
            let g = c.transpose() * self.body.hamiltonian_gradient(&x);
            let scale = self.body.hamiltonian(&x).max(1e-300);
            if g.norm() <= 1e-14 * scale.sqrt() * (1.0 + x.norm()) {
                break;
            }
            let h = c.transpose() * self.body.hamiltonian_hessian(&x) * c;
            let Some(step) = h.lu().solve(&g) else { break };
            // convex objective: backtrack on H
            let h0 = self.body.hamiltonian(&x);
            let mut lambda = 1.0;
            while lambda > 1e-6 {
                let trial = &xi - &step * lambda;
                if self.body.hamiltonian(&(&base + c * &trial)) <= h0 {
                    xi = trial;
                    break;
                }
                lambda *= 0.5;
            }
            if lambda <= 1e-6 || step.norm() * lambda <= 1e-15 * (1.0 + xi.norm()) {
                break;
            }
        }
        &base + c * xi
    }
}

impl ConvexBody for ProjectedBody<'_> {
    fn dim(&self) -> usize {
        self.darboux.ncols()
    }

    fn gauge(&self, u: &DVector<f64>) -> f64 {
        self.body.gauge(&self.lift(u))
    }

    fn gauge_gradient(&self, u: &DVector<f64>) -> DVector<f64> {
        // envelope: the ξ-derivative vanishes at the minimizer
        self.darboux.transpose() * self.body.gauge_gradient(&self.lift(u))
    }

    fn hamiltonian_gradient(&self, u: &DVector<f64>) -> DVector<f64> {
        let x = self.lift(u);
        self.darboux.transpose() * self.body.hamiltonian_gradient(&x)
    }

    fn hamiltonian(&self, u: &DVector<f64>) -> f64 {
        self.body.hamiltonian(&self.lift(u))
    }
}

/// Range [min, max] of the radial function 1/g over sampled unit directions.
pub fn radial_range(body: &dyn ConvexBody, samples: usize, seed: u64) -> (f64, f64) {
    let n = body.dim();
    let mut dirs = sample_points(n / 2, samples, seed);
    for i in 0..n {
        for s in [1.0, -1.0] {
            let mut e = DVector::zeros(n);
            e[i] = s;
            dirs.push(e);
        }
    }
    dirs.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), u| {
        let r = 1.0 / body.gauge(u);
        (lo.min(r), hi.max(r))
    })
}

/// B_δ ⊂ C ⊂ B_Δ on sampled directions.
pub fn check_pinch(body: &dyn ConvexBody, delta: f64, big_delta: f64) -> Result<(f64, f64)> {
    let (min, max) = radial_range(body, 512, 0x01c4);
    if min < delta || max > big_delta {
        return Err(Error::PinchViolated {
            min,
            max,
            delta,
            big_delta,
        });
    }
    Ok((min, max))
}

/// max_u |h_C(u) − h_D(u)| over sampled unit directions, refined by local ascent.
pub fn hausdorff_distance(c: &dyn ConvexBody, d: &dyn ConvexBody, samples: usize, seed: u64) -> Result<f64> {
    check_dim(c.dim(), d.dim())?;
    let n = c.dim();
    let gap = |u: &DVector<f64>| -> Result<f64> {
        let u = u.normalize();
        Ok((c.support(&u)? - d.support(&u)?).abs())
    };
    let dirs = sample_points(n / 2, samples, seed);
    let mut vals: Vec<(f64, &DVector<f64>)> = Vec::with_capacity(dirs.len());
    for u in &dirs {
        vals.push((gap(u)?, u));
    }
    vals.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best = vals.first().map(|v| v.0).unwrap_or(0.0);
    for &(v0, u0) in vals.iter().take(3) {
        // coordinate ascent with shrinking steps on the sphere
        let mut u = u0.clone();
        let mut v = v0;
        let mut step = 0.05;
        while step > 1e-6 {
            let mut moved = false;
            for i in 0..n {
                for s in [step, -step] {
                    let mut t = u.clone();
                    t[i] += s;
                    let t = t.normalize();
                    let vt = gap(&t)?;
                    if vt > v {
                        u = t;
                        v = vt;
                        moved = true;
                    }
                }
            }
            if !moved {
                step *= 0.5;
            }
        }
        best = best.max(v);
    }
    Ok(best)
}
