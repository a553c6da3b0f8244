//! Charts of the shadow boundary preimage S ⊂ ∂B₁.
//!
//! A chart is a graph over the seed cone W = range(A), A = L₀ᵀJB:
//! c(z) = √(1 − |ν|²)·a(z) + Nν(z) with a(z) = Az/|Az| and N an orthonormal basis
//! of W^⊥. Continuation solves F(c) = 0 for ν node by node.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{ShadowGeometry, TOL_NEWTON};
use crate::embedding::{AnalyticPath, EmbeddingComposition};
use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::quadrature::{QuadratureRule, SphereNode};
use crate::symplectic::SymplecticMatrix;

/// Largest continuation step accepted by `trace_chart`.
pub const STEP_CAP: f64 = 0.1;
const MAX_NEWTON: usize = 24;
const FD_STEP: f64 = 5e-6;
const NU_LIMIT: f64 = 0.95;

#[derive(Clone, Debug)]
pub struct ChartNode {
    /// Node on the parameter sphere S^{2k−1} ⊂ ℝ^{2k}.
    pub z: DVector<f64>,
    pub weight: f64,
    /// Oriented orthonormal tangent frame of the parameter sphere at z.
    pub frame: DMatrix<f64>,
    pub nu: DVector<f64>,
    /// c(z) ∈ ∂B₁.
    pub point: DVector<f64>,
    /// Dc·frame, 2n × (2k−1).
    pub tangents: DMatrix<f64>,
    pub residual: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug)]
pub struct ShadowBoundaryChart {
    t_value: f64,
    order: usize,
    anchor: DMatrix<f64>,
    transversal: DMatrix<f64>,
    orientation: f64,
    nodes: Vec<ChartNode>,
    companion: Vec<ChartNode>,
    residual_max: f64,
    max_iterations: usize,
}

impl ShadowBoundaryChart {
    pub fn t_value(&self) -> f64 {
        self.t_value
    }

    pub fn order(&self) -> usize {
        self.order
    }

    /// Nodes of the order-Q rule.
    pub fn nodes(&self) -> &[ChartNode] {
        &self.nodes
    }

    /// Nodes of the embedded order-Q/2 rule used for error estimates.
    pub fn companion_nodes(&self) -> &[ChartNode] {
        &self.companion
    }

    pub fn residual_max(&self) -> f64 {
        self.residual_max
    }

    pub fn max_iterations(&self) -> usize {
        self.max_iterations
    }

    /// ±1, fixed at the seed so that the seed volume is positive.
    pub fn orientation(&self) -> f64 {
        self.orientation
    }

    pub fn anchor(&self) -> &DMatrix<f64> {
        &self.anchor
    }

    fn from_nodes(
        t_value: f64,
        order: usize,
        anchor: DMatrix<f64>,
        transversal: DMatrix<f64>,
        orientation: f64,
        nodes: Vec<ChartNode>,
        companion: Vec<ChartNode>,
    ) -> Self {
        let all = nodes.iter().chain(&companion);
        let residual_max = all.clone().map(|n| n.residual).fold(0.0, f64::max);
        let max_iterations = all.map(|n| n.iterations).max().unwrap_or(0);
        Self {
            t_value,
            order,
            anchor,
            transversal,
            orientation,
            nodes,
            companion,
            residual_max,
            max_iterations,
        }
    }
}

/// a(z), and Da·τ for each column τ of `frame`.
fn anchor_dir(a_mat: &DMatrix<f64>, z: &DVector<f64>, frame: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let az = a_mat * z;
    let norm = az.norm();
    let a = az / norm;
    let at = a_mat * frame;
    let mut da = DMatrix::zeros(a.len(), frame.ncols());
    for j in 0..frame.ncols() {
        let col = at.column(j);
        let d = (col - &a * a.dot(&col)) / norm;
        da.set_column(j, &d);
    }
    (a, da)
}

fn chart_point(a: &DVector<f64>, n_mat: &DMatrix<f64>, nu: &DVector<f64>) -> DVector<f64> {
    let mu = (1.0 - nu.norm_squared()).max(0.0).sqrt();
    a * mu + n_mat * nu
}

/// ∂F(x(ν))/∂ν by central differences.
fn jacobian_nu(
    phi: &EmbeddingComposition,
    geom: &ShadowGeometry,
    a: &DVector<f64>,
    n_mat: &DMatrix<f64>,
    nu: &DVector<f64>,
) -> DMatrix<f64> {
    let m = nu.len();
    let mut jac = DMatrix::zeros(m, m);
    for j in 0..m {
        let mut np = nu.clone();
        let mut nm = nu.clone();
        np[j] += FD_STEP;
        nm[j] -= FD_STEP;
        let fp = geom.residual_unchecked(phi, &chart_point(a, n_mat, &np));
        let fm = geom.residual_unchecked(phi, &chart_point(a, n_mat, &nm));
        jac.set_column(j, &((fp - fm) / (2.0 * FD_STEP)));
    }
    jac
}

/// DF(x)·w by central differences.
fn directional(phi: &EmbeddingComposition, geom: &ShadowGeometry, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
    let scale = w.norm();
    if scale == 0.0 {
        return DVector::zeros(geom.kernel_basis().ncols());
    }
    let h = FD_STEP / scale;
    let fp = geom.residual_unchecked(phi, &(x + w * h));
    let fm = geom.residual_unchecked(phi, &(x - w * h));
    (fp - fm) / (2.0 * h)
}

struct Solved {
    nu: DVector<f64>,
    residual: f64,
    iterations: usize,
    /// ∂F/∂ν from the last Newton step, within one converged step of `nu`.
    jacobian: Option<DMatrix<f64>>,
}

/// Damped Newton on ν from `nu0`. `None` on divergence.
fn newton(
    phi: &EmbeddingComposition,
    geom: &ShadowGeometry,
    a: &DVector<f64>,
    n_mat: &DMatrix<f64>,
    nu0: &DVector<f64>,
) -> Option<Solved> {
    let mut nu = nu0.clone();
    let mut f = geom.residual_unchecked(phi, &chart_point(a, n_mat, &nu));
    let mut fnorm = f.norm();
    let mut iterations = 0;
    let mut polished = false;
    let mut last_jac = None;
    while iterations < MAX_NEWTON {
        if fnorm <= TOL_NEWTON {
            // one extra step while it still helps, so residuals sit well below tolerance
            if polished || fnorm <= 1e-14 {
                break;
            }
            polished = true;
        }
        let jac = jacobian_nu(phi, geom, a, n_mat, &nu);
        let step = jac.clone().lu().solve(&(-&f))?;
        last_jac = Some(jac);
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..10 {
            let trial = &nu + &step * lambda;
            if trial.norm() < NU_LIMIT {
                let ft = geom.residual_unchecked(phi, &chart_point(a, n_mat, &trial));
                let ftn = ft.norm();
                if ftn < fnorm {
                    nu = trial;
                    f = ft;
                    fnorm = ftn;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        iterations += 1;
        if !accepted {
            break;
        }
    }
    if fnorm <= TOL_NEWTON && fnorm.is_finite() {
        // the Jacobian is only reused when it was taken at a converged point
        let jacobian = if polished { last_jac } else { None };
        Some(Solved {
            nu,
            residual: fnorm,
            iterations,
            jacobian,
        })
    } else {
        None
    }
}

/// Full node record at a converged ν, with implicit-function tangents.
fn node_at(
    phi: &EmbeddingComposition,
    geom: &ShadowGeometry,
    a_mat: &DMatrix<f64>,
    n_mat: &DMatrix<f64>,
    base: (&DVector<f64>, f64, &DMatrix<f64>),
    solved: Solved,
    exact_seed: bool,
) -> ChartNode {
    let (z, weight, frame) = base;
    let (a, da) = anchor_dir(a_mat, z, frame);
    let nu = solved.nu;
    let mu = (1.0 - nu.norm_squared()).max(0.0).sqrt();
    let point = chart_point(&a, n_mat, &nu);
    let tangents = if exact_seed {
        da
    } else {
        let jac = solved
            .jacobian
            .unwrap_or_else(|| jacobian_nu(phi, geom, &a, n_mat, &nu));
        let lu = jac.lu();
        // d x / d ν = N − a νᵀ/μ
        let dxdnu = n_mat - &a * nu.transpose() / mu;
        let mut t = DMatrix::zeros(point.len(), frame.ncols());
        for j in 0..frame.ncols() {
            let dz = da.column(j) * mu;
            let rhs = -directional(phi, geom, &point, &dz.clone_owned());
            let nut = lu.solve(&rhs).unwrap_or_else(|| DVector::zeros(nu.len()));
            t.set_column(j, &(dz + &dxdnu * nut));
        }
        t
    };
    ChartNode {
        z: z.clone(),
        weight,
        frame: frame.clone(),
        nu,
        point,
        tangents,
        residual: solved.residual,
        iterations: solved.iterations,
    }
}

fn rule_pair(k: usize, order: usize) -> Result<(QuadratureRule, QuadratureRule)> {
    Ok((QuadratureRule::sphere(k, order)?, QuadratureRule::sphere(k, order / 2)?))
}

/// Seed chart of a linear map L: the cone LᵀJV ∩ ∂B₁, with no correction needed.
pub fn seed_chart(l: &SymplecticMatrix, geom: &ShadowGeometry, order: usize) -> Result<ShadowBoundaryChart> {
    check_dim(geom.dim(), l.dim())?;
    let raw = l.matrix().transpose() * geom.jb();
    let gram = (raw.transpose() * &raw).determinant();
    if !(gram > 1e-12) {
        return Err(Error::DegenerateSubspace { det: gram });
    }
    // polar factor A(AᵀA)^{-1/2}: same cone, but z ↦ Az is an isometry, so the
    // pulled-back integrand of a linear map is a low-degree polynomial in z
    let svd = raw.svd(true, true);
    let a_mat = svd.u.unwrap() * svd.v_t.unwrap();
    let n_mat = linalg::orthogonal_complement(&a_mat);
    let phi = EmbeddingComposition::from_linear(l.clone())?;
    let m = n_mat.ncols();
    let (rule, companion) = rule_pair(geom.k(), order)?;
    let build = |nodes: &[SphereNode]| -> Vec<ChartNode> {
        nodes
            .par_iter()
            .map(|sn| {
                let (a, _) = anchor_dir(&a_mat, &sn.point, &sn.frame);
                let residual = geom.residual_unchecked(&phi, &a).norm();
                let solved = Solved {
                    nu: DVector::zeros(m),
                    residual,
                    iterations: 0,
                    jacobian: None,
                };
                node_at(&phi, geom, &a_mat, &n_mat, (&sn.point, sn.weight, &sn.frame), solved, true)
            })
            .collect()
    };
    let nodes = build(rule.nodes());
    let comp = build(companion.nodes());
    let mut chart = ShadowBoundaryChart::from_nodes(0.0, order, a_mat, n_mat, 1.0, nodes, comp);
    let signed = super::stokes::raw_integral(&phi, geom, &chart.nodes)?;
    if signed == 0.0 || !signed.is_finite() {
        return Err(Error::BeyondLocalRegime("seed chart has zero shadow volume".into()));
    }
    chart.orientation = signed.signum();
    Ok(chart)
}

/// Newton-correct every node of `prev` for the map φ_t.
pub fn trace_to(
    phi_t: &EmbeddingComposition,
    geom: &ShadowGeometry,
    t: f64,
    prev: &ShadowBoundaryChart,
) -> Result<ShadowBoundaryChart> {
    let a_mat = &prev.anchor;
    let n_mat = &prev.transversal;
    let run = |nodes: &[ChartNode], offset: usize| -> Result<Vec<ChartNode>> {
        nodes
            .par_iter()
            .enumerate()
            .map(|(i, pn)| {
                let (a, _) = anchor_dir(a_mat, &pn.z, &pn.frame);
                let solved = newton(phi_t, geom, &a, n_mat, &pn.nu).ok_or_else(|| {
                    let r = geom
                        .residual_unchecked(phi_t, &chart_point(&a, n_mat, &pn.nu))
                        .norm();
                    Error::NewtonDivergence {
                        node: offset + i,
                        t,
                        residual: r,
                    }
                })?;
                Ok(node_at(phi_t, geom, a_mat, n_mat, (&pn.z, pn.weight, &pn.frame), solved, false))
            })
            .collect()
    };
    let nodes = run(&prev.nodes, 0)?;
    let comp = run(&prev.companion, prev.nodes.len())?;
    Ok(ShadowBoundaryChart::from_nodes(
        t,
        prev.order,
        a_mat.clone(),
        n_mat.clone(),
        prev.orientation,
        nodes,
        comp,
    ))
}

/// One continuation step along `path` from `prev.t_value()` to `t`.
pub fn trace_chart(
    path: &AnalyticPath,
    geom: &ShadowGeometry,
    t: f64,
    prev: &ShadowBoundaryChart,
) -> Result<ShadowBoundaryChart> {
    let step = t - prev.t_value;
    if step < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "trace target {t} precedes chart parameter {}",
            prev.t_value
        )));
    }
    if step > STEP_CAP * (1.0 + 1e-9) {
        return Err(Error::StepTooLarge { step, cap: STEP_CAP });
    }
    if step == 0.0 {
        return Ok(prev.clone());
    }
    let phi_t = path.path_at(t)?;
    trace_to(&phi_t, geom, t, prev)
}

/// Stateful continuation along a path: seeds at t = 0 and substeps to each target.
pub struct ChartTracer<'a> {
    path: &'a AnalyticPath,
    geom: &'a ShadowGeometry,
    max_step: f64,
    chart: ShadowBoundaryChart,
}

impl<'a> ChartTracer<'a> {
    pub fn new(path: &'a AnalyticPath, geom: &'a ShadowGeometry, order: usize, max_step: f64) -> Result<Self> {
        let phi0 = path.path_at(0.0)?;
        let l = phi0
            .linear_part()
            .ok_or_else(|| Error::InvalidArgument("path is not linear at t = 0".into()))?;
        let chart = seed_chart(&l, geom, order)?;
        Ok(Self {
            path,
            geom,
            max_step: max_step.min(STEP_CAP),
            chart,
        })
    }

    pub fn chart(&self) -> &ShadowBoundaryChart {
        &self.chart
    }

    pub fn advance_to(&mut self, t: f64) -> Result<&ShadowBoundaryChart> {
        let t0 = self.chart.t_value;
        if t < t0 {
            return Err(Error::InvalidArgument(format!("cannot trace backwards from {t0} to {t}")));
        }
        let steps = ((t - t0) / self.max_step).ceil().max(0.0) as usize;
        for s in 1..=steps {
            let ts = if s == steps {
                t
            } else {
                t0 + (t - t0) * s as f64 / steps as f64
            };
            self.chart = trace_chart(self.path, self.geom, ts, &self.chart)?;
        }
        Ok(&self.chart)
    }
}
