//! Radial membership oracle: Lebesgue volume of the star-shaped region
//! Pφ(B̄_R(x_c)) from its radial function about BᵀPφ(x_c).

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{Method, ShadowGeometry, ShadowVolumeResult};
use crate::embedding::{random_ball_point, EmbeddingComposition};
use crate::error::{check_dim, Error, Result};
use crate::quadrature::QuadratureRule;
use crate::symplectic::factorial;

const CHUNK: usize = 64;
const ROOT_TOL: f64 = 1e-12;
const MONOTONE_TOL: f64 = 1e-9;

#[derive(Clone, Debug)]
pub struct OracleParams {
    pub order: usize,
    /// Ball centre x_c (default 0).
    pub center: Option<DVector<f64>>,
    /// Ball radius (default 1).
    pub radius: f64,
    pub starts: usize,
    pub seed: u64,
}

impl Default for OracleParams {
    fn default() -> Self {
        Self {
            order: 24,
            center: None,
            radius: 1.0,
            starts: 8,
            seed: 0x0ac1e,
        }
    }
}

/// G̃(y) = BᵀPφ(x_c + R y) and its Jacobian.
struct Scaled<'a> {
    phi: &'a EmbeddingComposition,
    geom: &'a ShadowGeometry,
    center: DVector<f64>,
    radius: f64,
}

impl Scaled<'_> {
    fn eval(&self, y: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let x = &self.center + y * self.radius;
        let (v, jac) = self.phi.eval_jacobian_unchecked(&x);
        (
            self.geom.project(&v),
            self.geom.project_matrix() * jac * self.radius,
        )
    }

    /// Minimum-norm preimage of q by Gauss–Newton y ← A⁺(q − G̃(y) + Ay), from `y0`,
    /// to relative residual `tol`. Returns the point and the Jacobian there.
    fn preimage(&self, q: &DVector<f64>, y0: &DVector<f64>, tol: f64) -> Option<(DVector<f64>, DMatrix<f64>)> {
        let mut y = y0.clone();
        let (mut g, mut a) = self.eval(&y);
        let mut res = (q - &g).norm();
        let scale = 1.0 + q.norm();
        for _ in 0..60 {
            let rhs = q - &g + &a * &y;
            let sol = (&a * a.transpose()).lu().solve(&rhs)?;
            let step = a.transpose() * sol - &y;
            let mut lambda = 1.0;
            let mut moved = false;
            for _ in 0..8 {
                let trial = &y + &step * lambda;
                let (gt, at) = self.eval(&trial);
                let rt = (q - &gt).norm();
                // near convergence the residual sits at round-off and may not decrease
                if rt < res || rt <= 1e-13 * scale {
                    y = trial;
                    g = gt;
                    a = at;
                    res = rt;
                    moved = true;
                    break;
                }
                lambda *= 0.5;
            }
            if !moved {
                break;
            }
            if res <= tol * scale && step.norm() * lambda <= tol.max(1e-13) * (1.0 + y.norm()) {
                return Some((y, a));
            }
        }
        (res <= tol.max(1e-11) * scale).then_some((y, a))
    }
}

struct Ray {
    s: f64,
    minimizer: DVector<f64>,
}

/// ρ(s) = min{|y| : G̃(y) = q₀ + s u} with dρ/ds = uᵀ(AAᵀ)⁻¹Ay/ρ (envelope theorem).
struct Membership<'a> {
    sc: &'a Scaled<'a>,
    q0: &'a DVector<f64>,
    u: &'a DVector<f64>,
    lin: DVector<f64>,
    last: Option<DVector<f64>>,
    samples: Vec<(f64, f64)>,
}

impl Membership<'_> {
    fn at(&mut self, s: f64) -> Result<(f64, f64, DVector<f64>)> {
        let q = self.q0 + self.u * s;
        let guess = self.last.clone().unwrap_or_else(|| &self.lin * s);
        let (y, a) = self
            .sc
            .preimage(&q, &guess, 1e-13)
            .or_else(|| self.sc.preimage(&q, &(&self.lin * s), 1e-13))
            .ok_or_else(|| Error::BisectionFailed(format!("no preimage at s = {s:.6}")))?;
        let r = y.norm();
        let lam = (&a * a.transpose())
            .lu()
            .solve(&(&a * &y))
            .ok_or_else(|| Error::BisectionFailed("rank loss along ray".into()))?;
        let dr = if r > 0.0 { self.u.dot(&lam) / r } else { 0.0 };
        self.samples.push((s, r));
        self.last = Some(y.clone());
        Ok((r, dr, y))
    }

    fn check_monotone(&mut self) -> Result<()> {
        self.samples.sort_by(|a, b| a.0.total_cmp(&b.0));
        for w in self.samples.windows(2) {
            if w[1].1 < w[0].1 - MONOTONE_TOL * (1.0 + w[0].1) {
                return Err(Error::OracleRefused(format!(
                    "membership not monotone along ray: ρ({:.6}) = {:.9} > ρ({:.6}) = {:.9}",
                    w[0].0, w[0].1, w[1].0, w[1].1
                )));
            }
        }
        Ok(())
    }
}

/// Safeguarded Newton for ρ(s) = 1: steps stay inside the current bracket, else bisect.
fn crossing(m: &mut Membership, s_start: f64) -> Result<(f64, DVector<f64>)> {
    let mut lo = 0.0;
    let mut hi: Option<f64> = None;
    let mut s = s_start;
    for _ in 0..200 {
        let (r, dr, y) = m.at(s)?;
        let f = r - 1.0;
        if f.abs() <= 4.0 * f64::EPSILON {
            return Ok((s, y));
        }
        if f < 0.0 {
            lo = s;
        } else {
            hi = Some(s);
        }
        let newton = if dr > 0.0 { s - f / dr } else { f64::NAN };
        let next = match hi {
            Some(h) if newton > lo && newton < h => newton,
            Some(h) => 0.5 * (lo + h),
            // no upper bracket yet: Newton, capped at doubling
            None if newton > s => newton.min(2.0 * s),
            None => 2.0 * s,
        };
        if (next - s).abs() <= ROOT_TOL * s {
            let (_, _, y) = m.at(next)?;
            return Ok((next, y));
        }
        if let Some(h) = hi {
            if h - lo <= ROOT_TOL * h {
                return Ok((s, y));
            }
        }
        s = next;
    }
    Err(Error::BisectionFailed("radial root did not converge".into()))
}

/// Radial function along direction u: s with ρ(q₀ + s u) = 1.
fn radial(
    sc: &Scaled,
    q0: &DVector<f64>,
    a0_pinv: &DMatrix<f64>,
    u: &DVector<f64>,
    warm: Option<&DVector<f64>>,
    starts: &[DVector<f64>],
) -> Result<Ray> {
    let lin = a0_pinv * u;
    let s_lin = 1.0 / lin.norm();
    let mut m = Membership {
        sc,
        q0,
        u,
        lin,
        last: warm.cloned(),
        samples: vec![(0.0, 0.0)],
    };
    for _round in 0..3 {
        let (s_root, y_root) = crossing(&mut m, s_lin)?;
        let root_state = m.last.clone();
        for frac in [1.0 / 3.0, 2.0 / 3.0] {
            m.last = Some(&y_root * frac);
            m.at(frac * s_root)?;
        }
        m.last = root_state;
        // convexity license: membership must be monotone along the ray
        m.check_monotone()?;
        // global check of the minimum norm at the root from all starts, screened loosely
        let q = q0 + u * s_root;
        let mut r_best = y_root.norm();
        let mut better: Option<DVector<f64>> = None;
        let lin_root = &m.lin * s_root;
        for st in std::iter::once(&lin_root).chain(starts.iter()) {
            if let Some((y, _)) = sc.preimage(&q, st, 1e-7) {
                if y.norm() < r_best - 1e-7 {
                    if let Some((y, _)) = sc.preimage(&q, &y, 1e-13) {
                        if y.norm() < r_best - 1e-10 {
                            r_best = y.norm();
                            better = Some(y);
                        }
                    }
                }
            }
        }
        match better {
            None => {
                return Ok(Ray {
                    s: s_root,
                    minimizer: y_root,
                })
            }
            Some(y) => {
                m.last = Some(y);
                m.samples.clear();
                m.samples.push((0.0, 0.0));
            }
        }
    }
    Err(Error::BisectionFailed("multi-start minimum kept moving".into()))
}

/// Oracle volume ∫ω₀^k of Pφ(B̄_R(x_c)): k!·|Pf(Ω_B)|·∫ r(u)^{2k}/(2k) dσ(u).
pub fn radial_oracle_volume(
    phi: &EmbeddingComposition,
    geom: &ShadowGeometry,
    params: &OracleParams,
) -> Result<ShadowVolumeResult> {
    let dim = geom.dim();
    let k = geom.k();
    let center = params.center.clone().unwrap_or_else(|| DVector::zeros(dim));
    check_dim(dim, center.len())?;
    if !(params.radius > 0.0) {
        return Err(Error::InvalidArgument("ball radius must be positive".into()));
    }
    let sc = Scaled {
        phi,
        geom,
        center,
        radius: params.radius,
    };
    let zero = DVector::zeros(dim);
    let (q0, a0) = sc.eval(&zero);
    let a0_pinv = a0.transpose()
        * (&a0 * a0.transpose())
            .lu()
            .try_inverse()
            .ok_or_else(|| Error::OracleRefused("projection is not submersive at the centre".into()))?;

    let rule = QuadratureRule::sphere(k, params.order)?;
    let companion = QuadratureRule::sphere(k, params.order / 2)?;
    let extra = params.starts.saturating_sub(2) / 2;
    let integrate = |r: &QuadratureRule, salt: u64| -> Result<f64> {
        let nodes = r.nodes();
        let chunks: Vec<Vec<f64>> = nodes
            .par_chunks(CHUNK)
            .enumerate()
            .map(|(ci, chunk)| -> Result<Vec<f64>> {
                let mut rng = ChaCha8Rng::seed_from_u64(params.seed ^ (salt << 40) ^ ci as u64);
                let mut starts = Vec::with_capacity(2 * extra);
                for _ in 0..extra {
                    let p = random_ball_point(dim, 1.0, &mut rng);
                    starts.push(-&p);
                    starts.push(p);
                }
                let mut prev: Option<DVector<f64>> = None;
                let mut out = Vec::with_capacity(chunk.len());
                for node in chunk {
                    let mut st = starts.clone();
                    if let Some(p) = &prev {
                        st.push(p.clone());
                    }
                    let ray = radial(&sc, &q0, &a0_pinv, &node.point, prev.as_ref(), &st)?;
                    out.push(node.weight * ray.s.powi(2 * k as i32) / (2 * k) as f64);
                    prev = Some(ray.minimizer);
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        Ok(chunks.iter().flatten().sum())
    };
    let density = factorial(k) * geom.pfaffian().abs();
    let value = density * integrate(&rule, 1)?;
    let coarse = density * integrate(&companion, 2)?;
    let error_estimate = (value - coarse).abs() + 2.0 * k as f64 * ROOT_TOL * value.abs();
    Ok(ShadowVolumeResult {
        value,
        error_estimate,
        method: Method::RadialOracle,
        margin: value - geom.ball_volume() * params.radius.powi(2 * k as i32),
        order: params.order,
        coarse_value: coarse,
    })
}
