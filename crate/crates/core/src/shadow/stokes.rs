//! ∫_{Pφ(B₁)} ω₀^k = ∫_{S^{2k−1}} G*α, G = BᵀP∘φ∘c, α = λ₀|_V ∧ (ω₀|_V)^{k−1}.

use nalgebra::DMatrix;
use rayon::prelude::*;

use super::chart::{seed_chart, ChartNode, ChartTracer, ShadowBoundaryChart, STEP_CAP};
use super::{Method, ShadowGeometry, ShadowVolumeResult, RANK_TOL, TOL_NEWTON};
use crate::embedding::{AnalyticPath, EmbeddingComposition};
use crate::error::{Error, Result};
use crate::linalg::pfaffian;
use crate::symplectic::factorial;

#[derive(Clone, Copy, Debug)]
pub struct StokesOptions {
    /// Relative bound on |v_Q − v_{Q/2}| above which the result is flagged under-resolved.
    pub resolution_tol: f64,
}

impl Default for StokesOptions {
    fn default() -> Self {
        Self { resolution_tol: 1e-4 }
    }
}

/// α(w₁,…,w_{2k−1}) = (k−1)!·Pf[ω_B] on (X, w₁, …), where ι_X ω_B = λ₀|_V.
fn integrand(phi: &EmbeddingComposition, geom: &ShadowGeometry, node: &ChartNode) -> Result<f64> {
    let k = geom.k();
    let (y, jac) = phi.eval_jacobian_unchecked(&node.point);
    let g = geom.project(&y);
    let w = geom.project_matrix() * jac * &node.tangents;
    let wg = (w.transpose() * &w).determinant();
    if !(wg >= RANK_TOL) {
        return Err(Error::BeyondLocalRegime(format!(
            "pushed-forward frame degenerate (Gram determinant {wg:.3e})"
        )));
    }
    let x = geom.x_mat() * g;
    let mut u = DMatrix::zeros(2 * k, 2 * k);
    u.set_column(0, &x);
    u.view_mut((0, 1), (2 * k, 2 * k - 1)).copy_from(&w);
    let gram = u.transpose() * geom.omega_b() * &u;
    Ok(factorial(k - 1) * pfaffian(&gram))
}

/// Unoriented weighted sum over `nodes`; fixed summation order.
pub(crate) fn raw_integral(phi: &EmbeddingComposition, geom: &ShadowGeometry, nodes: &[ChartNode]) -> Result<f64> {
    let terms: Vec<f64> = nodes
        .par_iter()
        .map(|n| integrand(phi, geom, n).map(|v| v * n.weight))
        .collect::<Result<_>>()?;
    Ok(terms.iter().sum())
}

pub fn stokes_volume(
    phi: &EmbeddingComposition,
    geom: &ShadowGeometry,
    chart: &ShadowBoundaryChart,
    opts: StokesOptions,
) -> Result<ShadowVolumeResult> {
    if !(chart.residual_max() <= TOL_NEWTON) {
        return Err(Error::InvalidArgument(format!(
            "invalid chart: residual {:.3e} above tolerance",
            chart.residual_max()
        )));
    }
    let s = chart.orientation();
    let value = s * raw_integral(phi, geom, chart.nodes())?;
    let coarse = s * raw_integral(phi, geom, chart.companion_nodes())?;
    let error_estimate = (value - coarse).abs();
    if error_estimate > opts.resolution_tol * value.abs() {
        return Err(Error::UnderResolved {
            value,
            estimate: error_estimate,
        });
    }
    Ok(ShadowVolumeResult {
        value,
        error_estimate,
        method: Method::Stokes,
        margin: value - geom.ball_volume(),
        order: chart.order(),
        coarse_value: coarse,
    })
}

/// Stokes volume of Pφ(B₁); nonlinear φ is reached by continuation along its
/// straight deformation from the linearisation at 0.
pub fn shadow_volume(phi: &EmbeddingComposition, geom: &ShadowGeometry, order: usize) -> Result<ShadowVolumeResult> {
    let opts = StokesOptions::default();
    if let (true, Some(l)) = (phi.is_linear(), phi.linear_part()) {
        let chart = seed_chart(&l, geom, order)?;
        return stokes_volume(phi, geom, &chart, opts);
    }
    let path = AnalyticPath::deformation_of(phi)?;
    let mut tracer = ChartTracer::new(&path, geom, order, STEP_CAP)?;
    let chart = tracer.advance_to(1.0)?.clone();
    stokes_volume(phi, geom, &chart, opts)
}

/// Stokes value − π^k.
pub fn nonsqueezing_margin(phi: &EmbeddingComposition, geom: &ShadowGeometry, order: usize) -> Result<f64> {
    Ok(shadow_volume(phi, geom, order)?.margin)
}
