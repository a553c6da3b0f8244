//! Order-by-order removal of non-invariant multiplier content by pulling the
//! form back through the flow of a contact vector field.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::multiplier::{sample_points, ContactMultiplier};
use super::sphere_fn::{SphereFunction, MAX_DEGREE};
use crate::error::{Error, Result};
use crate::linalg::lstsq;
use crate::ode::{integrate_samples, OdeOptions};
use crate::poly::{monomials_of_degree, Polynomial, Term};
use crate::quadrature::QuadratureRule;

const INVARIANCE_TOL: f64 = 1e-10;
const OBSTRUCTION_TOL: f64 = 1e-8;
/// Half-width of the t window sampled for the coefficient fit.
const T_WINDOW: f64 = 0.3;
const T_NODES: usize = 16;

#[derive(Clone, Debug)]
pub struct ReductionReport {
    pub family: ContactMultiplier,
    pub order: usize,
    /// Largest least-squares residual of the refitted coefficients at the sample points.
    pub fit_residual: f64,
    /// max |F_i − ρ^{(i)}| over orders i < m and sample points.
    pub lower_order_defect: f64,
    /// max |F_m − ρ̄^{(m)}| over sample points.
    pub averaged_defect: f64,
    /// Largest relative volume change at t ∈ {±0.01, ±0.02}.
    pub volume_defect: f64,
}

/// Contact vector field of H for λ_s on the sphere, with d(log κ)/ds = RH appended.
struct CorrectionField {
    m: usize,
    h: Polynomial,
}

impl CorrectionField {
    fn rhs(&self, y: &DVector<f64>, sign: f64) -> DVector<f64> {
        let n = 2 * self.m;
        let x = y.rows(0, n);
        let (hv, g) = self.h.value_and_gradient(&x.as_slice()[..n]);
        let mut jx = DVector::zeros(n);
        for j in 0..self.m {
            jx[2 * j] = -x[2 * j + 1];
            jx[2 * j + 1] = x[2 * j];
        }
        // Π_ξ∇H, ξ = {x, Jx}^⊥
        let proj = &g - x * x.dot(&g) - &jx * jx.dot(&g);
        let mut out = DVector::zeros(n + 1);
        for j in 0..self.m {
            // J(a, b) = (−b, a)
            out[2 * j] = 2.0 * hv * jx[2 * j] - proj[2 * j + 1];
            out[2 * j + 1] = 2.0 * hv * jx[2 * j + 1] + proj[2 * j];
        }
        out[n] = 2.0 * g.dot(&jx);
        out * sign
    }
}

/// Values F_j(x) of the pulled-back family t ↦ ρ_t(ψ_{t^m}(x))·κ_{t^m}(x), orders 0..=M, at each point.
pub fn pullback_coefficients(family: &ContactMultiplier, m: usize, points: &[DVector<f64>]) -> Result<Vec<Vec<f64>>> {
    let big_m = family.order();
    let h = family.coefficient(m).cohomological_solve();
    let field = CorrectionField {
        m: family.m(),
        h: h.poly().scale(0.5),
    };
    let n = 2 * family.m();
    let nodes: Vec<f64> = (0..T_NODES)
        .map(|k| T_WINDOW * ((2 * k + 1) as f64 * std::f64::consts::PI / (2 * T_NODES) as f64).cos())
        .collect();
    let cheb = chebyshev_to_monomial(T_NODES, big_m);
    let opts = OdeOptions {
        rtol: 1e-13,
        atol: 1e-14,
        h_init: 1e-3,
        ..OdeOptions::default()
    };
    points
        .par_iter()
        .map(|x| -> Result<Vec<f64>> {
            let mut y0 = DVector::zeros(n + 1);
            y0.rows_mut(0, n).copy_from(x);
            let values = pull_at_nodes(family, &field, &y0, &nodes, m, &opts)?;
            // Chebyshev coefficients of F(·, x) on [−τ, τ], then the Taylor ones through order M
            let a = chebyshev_coefficients(&values);
            Ok((0..=big_m)
                .map(|j| cheb[j].iter().zip(&a).map(|(c, ak)| c * ak).sum::<f64>() / T_WINDOW.powi(j as i32))
                .collect())
        })
        .collect()
}

fn pull_at_nodes(
    family: &ContactMultiplier,
    field: &CorrectionField,
    y0: &DVector<f64>,
    nodes: &[f64],
    m: usize,
    opts: &OdeOptions,
) -> Result<Vec<f64>> {
    let n = 2 * family.m();
    let project = |y: &mut DVector<f64>| {
        let r = y.rows(0, n).norm();
        y.rows_mut(0, n).scale_mut(1.0 / r);
    };
    let mut out = vec![0.0; nodes.len()];
    for sign in [1.0, -1.0] {
        // flow time s = t^m; the sign of s picks the direction
        let mut idx: Vec<(usize, f64)> = nodes
            .iter()
            .enumerate()
            .map(|(i, &t)| (i, t.powi(m as i32)))
            .filter(|&(_, s)| s * sign > 0.0)
            .map(|(i, s)| (i, s.abs()))
            .collect();
        idx.sort_by(|a, b| a.1.total_cmp(&b.1));
        let times: Vec<f64> = idx.iter().map(|p| p.1).collect();
        let states = integrate_samples(&|y: &DVector<f64>| field.rhs(y, sign), y0, &times, opts, Some(&project))?;
        for ((i, _), st) in idx.iter().zip(&states) {
            let t = nodes[*i];
            out[*i] = family.eval(t, &st.as_slice()[..n]) * st[n].exp();
        }
    }
    // nodes with s = 0 (not produced by Chebyshev points, kept for safety)
    for (i, &t) in nodes.iter().enumerate() {
        if t.powi(m as i32) == 0.0 {
            out[i] = family.eval(t, &y0.as_slice()[..n]);
        }
    }
    Ok(out)
}

/// Coefficients a_k of Σ a_k T_k(t/τ) interpolating values at the Chebyshev points.
fn chebyshev_coefficients(values: &[f64]) -> Vec<f64> {
    let n = values.len();
    (0..n)
        .map(|k| {
            let s: f64 = values
                .iter()
                .enumerate()
                .map(|(j, v)| v * (k as f64 * (2 * j + 1) as f64 * std::f64::consts::PI / (2 * n) as f64).cos())
                .sum();
            s * if k == 0 { 1.0 } else { 2.0 } / n as f64
        })
        .collect()
}

/// cheb[j][k] = coefficient of u^j in T_k(u), for j ≤ max_j.
fn chebyshev_to_monomial(n: usize, max_j: usize) -> Vec<Vec<f64>> {
    let mut t: Vec<Vec<f64>> = vec![vec![1.0], vec![0.0, 1.0]];
    while t.len() < n {
        let k = t.len();
        let mut next = vec![0.0; k + 1];
        for (i, c) in t[k - 1].iter().enumerate() {
            next[i + 1] += 2.0 * c;
        }
        for (i, c) in t[k - 2].iter().enumerate() {
            next[i] -= c;
        }
        t.push(next);
    }
    (0..=max_j)
        .map(|j| (0..n).map(|k| t[k].get(j).copied().unwrap_or(0.0)).collect())
        .collect()
}

/// Sample set and monomial basis (degrees 6 and 5) for refitting sphere functions.
struct FitBasis {
    points: Vec<DVector<f64>>,
    monomials: Vec<Vec<u32>>,
    design: DMatrix<f64>,
}

impl FitBasis {
    fn new(m: usize) -> Result<Self> {
        let order = match m {
            1 => 32,
            2 => 24,
            _ => 12,
        };
        let rule = QuadratureRule::sphere(m, order)?;
        let points: Vec<DVector<f64>> = rule.nodes().iter().map(|n| n.point.clone()).collect();
        let mut monomials = monomials_of_degree(2 * m, MAX_DEGREE);
        monomials.extend(monomials_of_degree(2 * m, MAX_DEGREE - 1));
        let design = DMatrix::from_fn(points.len(), monomials.len(), |i, j| {
            points[i]
                .iter()
                .zip(&monomials[j])
                .map(|(x, &e)| x.powi(e as i32))
                .product()
        });
        Ok(Self {
            points,
            monomials,
            design,
        })
    }

    fn fit(&self, m: usize, values: &DVector<f64>) -> (SphereFunction, f64) {
        let coef = lstsq(&self.design, values, 1e-12);
        let resid = (&self.design * &coef - values).amax();
        let terms = self
            .monomials
            .iter()
            .zip(coef.iter())
            .filter(|(_, c)| c.abs() > 1e-15)
            .map(|(e, &c)| Term { coef: c, exp: e.clone() })
            .collect();
        let poly = Polynomial::new(2 * m, terms).expect("basis monomials");
        (SphereFunction::from_poly_unchecked(m, poly), resid)
    }
}

/// Replaces ρ^{(m)} by its fiber average and refits the orders above m.
pub fn normal_form_reduce(family: &ContactMultiplier, m: usize) -> Result<ContactMultiplier> {
    Ok(normal_form_reduce_report(family, m)?.family)
}

pub fn normal_form_reduce_report(family: &ContactMultiplier, m: usize) -> Result<ReductionReport> {
    if m == 0 || m > family.order() {
        return Err(Error::InvalidArgument(format!(
            "reduction order {m} outside 1..={}",
            family.order()
        )));
    }
    if m > 1 {
        let defect = family.invariance_defect(1..=m - 1);
        if defect > INVARIANCE_TOL {
            return Err(Error::NotReduced { order: m, defect });
        }
    }
    let sphere_m = family.m();
    let basis = FitBasis::new(sphere_m)?;
    let values = pullback_coefficients(family, m, &basis.points)?;

    let mut lower_order_defect: f64 = 0.0;
    for (x, v) in basis.points.iter().zip(&values) {
        for (i, vi) in v.iter().enumerate().take(m) {
            lower_order_defect = lower_order_defect.max((vi - family.coefficient(i).eval(x.as_slice())).abs());
        }
    }
    let averaged = family.coefficient(m).reeb_average();
    let averaged_defect = basis
        .points
        .iter()
        .zip(&values)
        .map(|(x, v)| (v[m] - averaged.eval(x.as_slice())).abs())
        .fold(0.0, f64::max);
    // loose bound: the Taylor extraction amplifies integration error by τ^{-j}
    if lower_order_defect > 1e-6 || averaged_defect > 1e-6 {
        return Err(Error::FlowFailure(format!(
            "pullback inconsistent: lower orders {lower_order_defect:.3e}, order {m} {averaged_defect:.3e}"
        )));
    }

    let mut coefs: Vec<SphereFunction> = family.coefficients()[..m - 1].to_vec();
    coefs.push(averaged);
    let mut fit_residual: f64 = 0.0;
    for j in m + 1..=family.order() {
        let col = DVector::from_iterator(values.len(), values.iter().map(|v| v[j]));
        let (f, r) = basis.fit(sphere_m, &col);
        fit_residual = fit_residual.max(r);
        coefs.push(f);
    }
    let reduced = ContactMultiplier::new(sphere_m, coefs, family.t_max())?;
    let volume_defect = [-0.02, -0.01, 0.01, 0.02]
        .iter()
        .map(|&t| ((reduced.volume(t) - family.volume(t)) / family.volume(t)).abs())
        .fold(0.0, f64::max);
    Ok(ReductionReport {
        family: reduced,
        order: m,
        fit_residual,
        lower_order_defect,
        averaged_defect,
        volume_defect,
    })
}

#[derive(Clone, Debug)]
pub enum TrivialityOutcome {
    Obstruction {
        order: usize,
        averaged: SphereFunction,
        min: f64,
        max: f64,
    },
    TrivialThrough(usize),
}

/// First order whose fiber-averaged coefficient is nonzero after reducing all lower
/// orders. The family is first brought to constant volume through order M.
pub fn formal_triviality_order(family: &ContactMultiplier, max_order: usize) -> Result<TrivialityOutcome> {
    let max_order = max_order.min(family.order());
    let mut fam = family.normalized()?;
    for m in 1..=max_order {
        let avg = fam.coefficient(m).reeb_average();
        let sup = sup_on_samples(&avg);
        if sup > OBSTRUCTION_TOL {
            let ex = avg.extrema();
            return Ok(TrivialityOutcome::Obstruction {
                order: m,
                averaged: avg,
                min: ex.min,
                max: ex.max,
            });
        }
        if m < max_order {
            fam = normal_form_reduce(&fam, m)?;
        }
    }
    Ok(TrivialityOutcome::TrivialThrough(max_order))
}

fn sup_on_samples(f: &SphereFunction) -> f64 {
    let ex = f.extrema();
    let samples = sample_points(f.m(), 64, 0xa11);
    samples
        .iter()
        .map(|x| f.eval(x.as_slice()).abs())
        .fold(ex.min.abs().max(ex.max.abs()), f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chebyshev_recovers_cubic() {
        let nodes: Vec<f64> = (0..T_NODES)
            .map(|k| T_WINDOW * ((2 * k + 1) as f64 * std::f64::consts::PI / (2 * T_NODES) as f64).cos())
            .collect();
        let vals: Vec<f64> = nodes.iter().map(|t| 1.0 - 2.0 * t + 0.5 * t * t + 3.0 * t * t * t).collect();
        let a = chebyshev_coefficients(&vals);
        let cheb = chebyshev_to_monomial(T_NODES, 3);
        let taylor: Vec<f64> = (0..=3)
            .map(|j| cheb[j].iter().zip(&a).map(|(c, ak)| c * ak).sum::<f64>() / T_WINDOW.powi(j as i32))
            .collect();
        // round-off grows like T_WINDOW^-j
        for (j, (x, y)) in taylor.iter().zip([1.0, -2.0, 0.5, 3.0]).enumerate() {
            assert!((x - y).abs() < 1e-12 / T_WINDOW.powi(j as i32), "{taylor:?}");
        }
    }
}
