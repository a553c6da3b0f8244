//! Shadow volumes ∫_{Pφ(B)} ω₀^k: boundary charts, the Stokes integral over the
//! shadow boundary, and an independent radial membership oracle.

mod chart;
mod oracle;
mod stokes;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingComposition;
use crate::error::{check_dim, Result};
use crate::linalg::{self, pfaffian};
use crate::symplectic::{complex_structure, omega_matrix, symplectic_gram, SymplecticProjector};

pub use chart::{seed_chart, trace_chart, trace_to, ChartNode, ChartTracer, ShadowBoundaryChart, STEP_CAP};
pub use oracle::{radial_oracle_volume, OracleParams};
pub use stokes::{nonsqueezing_margin, shadow_volume, stokes_volume, StokesOptions};

pub const TOL_NEWTON: f64 = 1e-10;
pub const RANK_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Stokes,
    RadialOracle,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ShadowVolumeResult {
    pub value: f64,
    pub error_estimate: f64,
    pub method: Method,
    /// value − π^k
    pub margin: f64,
    pub order: usize,
    /// Value of the embedded rule of order Q/2.
    pub coarse_value: f64,
}

/// Everything about P that the shadow pipelines need, in an oriented
/// orthonormal basis B of V (Pf(Ω_B) > 0).
#[derive(Clone, Debug)]
pub struct ShadowGeometry {
    dim: usize,
    k: usize,
    p: DMatrix<f64>,
    b: DMatrix<f64>,
    /// BᵀP
    bp: DMatrix<f64>,
    /// orthonormal basis of ker P = V^ω = (JV)^⊥
    c: DMatrix<f64>,
    omega_b: DMatrix<f64>,
    pf_b: f64,
    /// X(a) = x_mat·a satisfies ω_B(X(a), ·) = λ₀|_V(a)
    x_mat: DMatrix<f64>,
    jb: DMatrix<f64>,
}

impl ShadowGeometry {
    pub fn new(projector: &SymplecticProjector) -> Result<Self> {
        let v = projector.target();
        let dim = v.ambient_dim();
        let k = v.k();
        let b = v.orthonormal_basis();
        let c = linalg::column_basis(projector.kernel().basis(), 1e-10);
        let omega_b = symplectic_gram(&b);
        let pf_b = pfaffian(&omega_b);
        let mut e = DMatrix::zeros(dim, dim);
        for i in 0..dim / 2 {
            e[(2 * i, 2 * i + 1)] = 1.0;
        }
        let e_b = b.transpose() * e * &b;
        let om_inv = omega_b
            .clone()
            .lu()
            .try_inverse()
            .ok_or(crate::Error::DegenerateSubspace { det: 0.0 })?;
        let x_mat = -(om_inv * e_b.transpose());
        let p = projector.matrix().clone();
        let bp = b.transpose() * &p;
        let jb = complex_structure(dim) * &b;
        debug_assert!(linalg::max_abs(&(omega_matrix(dim) * &jb - &b)) < 1e-12);
        Ok(Self {
            dim,
            k,
            p,
            b,
            bp,
            c,
            omega_b,
            pf_b,
            x_mat,
            jb,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn projector_matrix(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn kernel_basis(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn pfaffian(&self) -> f64 {
        self.pf_b
    }

    /// π^k, the volume of the unit ball section.
    pub fn ball_volume(&self) -> f64 {
        std::f64::consts::PI.powi(self.k as i32)
    }

    /// Coordinates BᵀPy of the projection of y.
    pub(crate) fn project(&self, y: &DVector<f64>) -> DVector<f64> {
        &self.bp * y
    }

    pub(crate) fn project_matrix(&self) -> &DMatrix<f64> {
        &self.bp
    }

    pub(crate) fn omega_b(&self) -> &DMatrix<f64> {
        &self.omega_b
    }

    pub(crate) fn x_mat(&self) -> &DMatrix<f64> {
        &self.x_mat
    }

    pub(crate) fn jb(&self) -> &DMatrix<f64> {
        &self.jb
    }

    #[inline]
    pub(crate) fn residual_unchecked(&self, phi: &EmbeddingComposition, x: &DVector<f64>) -> DVector<f64> {
        self.c.tr_mul(&phi.adjoint_inverse_unchecked(x, x))
    }
}

/// F(x) = Cᵀ(Dφ(x)ᵀ)⁻¹x, C an orthonormal basis of ker P.
///
/// F(x) = 0 exactly when (Dφ(x)ᵀ)⁻¹x ∈ JV = range(Pᵀ), i.e. when x is normal to ∂B₁ at a
/// point where P∘φ restricted to the sphere fails to be a submersion. When V is J-invariant
/// this is the same as (I − P)(Dφ(x)ᵀ)⁻¹x = 0.
pub fn singular_residual(phi: &EmbeddingComposition, geom: &ShadowGeometry, x: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim(geom.dim(), x.len())?;
    let v = phi.adjoint_inverse_apply(x, x)?;
    Ok(geom.c.tr_mul(&v))
}
