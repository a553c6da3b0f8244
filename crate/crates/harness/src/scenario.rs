//! Versioned JSON scenarios.

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use shadowlab_core::contact::{Ball, ContactMultiplier, ConvexBody, QuadraticBody, SphereFunction};
use shadowlab_core::embedding::{AnalyticPath, EmbeddingComposition, FactorSpec, PathFactorSpec};
use shadowlab_core::shadow::ShadowGeometry;
use shadowlab_core::symplectic::{symplectic_projector, SymplecticSubspace};

use crate::error::{HarnessError, Result};

pub const SCHEMA: &str = "shadowlab/scenario/v1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub schema: String,
    pub id: String,
    /// Ambient dimension 2n.
    pub dimension: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subspace: Option<SubspaceSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub embedding: Vec<FactorSpec>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub path: Vec<PathFactorSpec>,
    #[serde(default = "default_radius")]
    pub domain_radius: f64,
    pub experiment: Experiment,
    #[serde(default)]
    pub params: Params,
}

fn default_radius() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SubspaceSpec {
    /// Span of the complex planes (x_p, y_p).
    Coordinate { planes: Vec<usize> },
    Basis { vectors: Vec<Vec<f64>> },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Experiment {
    LinearShadow,
    ShadowScan {
        t_grid: Vec<f64>,
        #[serde(default = "default_t_max")]
        t_max: f64,
    },
    R0Map {
        /// Coordinates varied by the grid of centres; the rest are zero.
        axes: Vec<usize>,
        points_per_axis: usize,
        half_width: f64,
        r_grid: Vec<f64>,
    },
    Capacity {
        body: BodySpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        expected: Option<f64>,
    },
    DeformAnalyze {
        /// ρ₁ in the family 1 + tρ₁.
        multiplier: Vec<MultiplierTerm>,
        t_grid: Vec<f64>,
        t_max: f64,
        #[serde(default = "default_orders")]
        orders: usize,
    },
}

fn default_t_max() -> f64 {
    1.0
}

fn default_orders() -> usize {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum BodySpec {
    Ball { radius: f64 },
    /// One semi-axis per complex plane.
    Ellipsoid { semi_axes: Vec<f64> },
    /// {xᵀAx ≤ 1}, row-major A.
    Quadratic { matrix: Vec<Vec<f64>> },
}

/// Re(c·z^α z̄^β).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MultiplierTerm {
    pub re: f64,
    #[serde(default)]
    pub im: f64,
    pub alpha: Vec<u32>,
    pub beta: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    #[serde(default = "default_order")]
    pub quadrature_order: usize,
    /// Relative tolerance on margins (in units of π^k) and absolute on capacities.
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub seed: u64,
    /// Also run the radial oracle; records then pass only if both routes do.
    #[serde(default)]
    pub cross_check: bool,
}

fn default_order() -> usize {
    24
}

fn default_tol() -> f64 {
    1e-3
}

impl Default for Params {
    fn default() -> Self {
        Self {
            quadrature_order: default_order(),
            tol: default_tol(),
            seed: 0,
            cross_check: false,
        }
    }
}

fn invalid(msg: impl Into<String>) -> HarnessError {
    HarnessError::InvalidConfig(msg.into())
}

fn check_grid(name: &str, grid: &[f64]) -> Result<()> {
    if grid.is_empty() {
        return Err(invalid(format!("{name} is empty")));
    }
    if grid.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(invalid(format!("{name} has negative or non-finite entries")));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid(format!("{name} must be strictly increasing")));
    }
    Ok(())
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Self> {
        let s: Self = serde_json::from_str(text).map_err(|e| invalid(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    /// SHA-256 of the compact serialization.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scenario serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema != SCHEMA {
            return Err(invalid(format!("schema {:?}, expected {SCHEMA:?}", self.schema)));
        }
        if self.id.is_empty() || self.id.contains([',', '"', '\n', '\r']) {
            return Err(invalid("id must be non-empty and free of commas, quotes and newlines"));
        }
        if self.dimension < 2 || self.dimension % 2 != 0 {
            return Err(invalid(format!("dimension {} is not a positive even number", self.dimension)));
        }
        let p = &self.params;
        if !(p.tol > 0.0) || !p.tol.is_finite() {
            return Err(invalid("tol must be positive"));
        }
        if p.quadrature_order < 8 || p.quadrature_order % 4 != 0 {
            return Err(invalid("quadrature_order must be a multiple of 4, at least 8"));
        }
        if !(self.domain_radius > 0.0) {
            return Err(invalid("domain_radius must be positive"));
        }
        match &self.experiment {
            Experiment::LinearShadow => {
                self.require_subspace()?;
                self.require_embedding()?;
            }
            Experiment::ShadowScan { t_grid, t_max } => {
                self.require_subspace()?;
                if self.path.is_empty() {
                    return Err(invalid("shadow-scan needs a path"));
                }
                check_grid("t_grid", t_grid)?;
                if !(*t_max > 0.0) || t_grid.last().is_some_and(|t| t > t_max) {
                    return Err(invalid("t_grid must lie in [0, t_max]"));
                }
            }
            Experiment::R0Map {
                axes,
                points_per_axis,
                half_width,
                r_grid,
            } => {
                self.require_subspace()?;
                self.require_embedding()?;
                check_grid("r_grid", r_grid)?;
                if axes.is_empty() || axes.iter().any(|&a| a >= self.dimension) {
                    return Err(invalid("axes must be coordinate indices"));
                }
                if *points_per_axis < 1 || !(*half_width >= 0.0) {
                    return Err(invalid("grid needs at least one point and a non-negative half width"));
                }
            }
            Experiment::Capacity { body, .. } => {
                let n = self.dimension / 2;
                match body {
                    BodySpec::Ball { radius } if !(*radius > 0.0) => return Err(invalid("ball radius must be positive")),
                    BodySpec::Ellipsoid { semi_axes } if semi_axes.len() != n => {
                        return Err(invalid(format!("ellipsoid needs {n} semi-axes")))
                    }
                    _ => {}
                }
            }
            Experiment::DeformAnalyze {
                multiplier,
                t_grid,
                t_max,
                orders,
            } => {
                let m = self.dimension / 2;
                if multiplier.iter().any(|t| t.alpha.len() != m || t.beta.len() != m) {
                    return Err(invalid(format!("multiplier exponents need {m} entries")));
                }
                if !(*t_max > 0.0) || *orders < 1 {
                    return Err(invalid("t_max must be positive and orders at least 1"));
                }
                check_grid("t_grid", t_grid)?;
                if t_grid[0] <= 0.0 || t_grid.last().is_some_and(|t| t > t_max) {
                    return Err(invalid("t_grid must lie in (0, t_max]"));
                }
            }
        }
        Ok(())
    }

    fn require_subspace(&self) -> Result<()> {
        if self.subspace.is_none() {
            return Err(invalid("experiment needs a subspace"));
        }
        Ok(())
    }

    fn require_embedding(&self) -> Result<()> {
        if self.embedding.is_empty() {
            return Err(invalid("experiment needs an embedding"));
        }
        Ok(())
    }

    pub fn subspace(&self) -> Result<SymplecticSubspace> {
        let spec = self.subspace.as_ref().ok_or_else(|| invalid("no subspace"))?;
        let v = match spec {
            SubspaceSpec::Coordinate { planes } => SymplecticSubspace::coordinate(self.dimension, planes),
            SubspaceSpec::Basis { vectors } => {
                if vectors.iter().any(|v| v.len() != self.dimension) {
                    return Err(invalid("subspace vectors have the wrong length"));
                }
                let vs: Vec<DVector<f64>> = vectors.iter().map(|v| DVector::from_vec(v.clone())).collect();
                SymplecticSubspace::from_vectors(&vs)
            }
        };
        v.map_err(|e| invalid(e.to_string()))
    }

    pub fn geometry(&self) -> Result<ShadowGeometry> {
        let p = symplectic_projector(&self.subspace()?).map_err(|e| invalid(e.to_string()))?;
        ShadowGeometry::new(&p).map_err(|e| invalid(e.to_string()))
    }

    pub fn embedding(&self) -> Result<EmbeddingComposition> {
        let factors = self
            .embedding
            .iter()
            .map(|f| f.build(self.dimension))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| invalid(e.to_string()))?;
        EmbeddingComposition::new(self.dimension, factors, self.domain_radius).map_err(|e| invalid(e.to_string()))
    }

    pub fn analytic_path(&self, t_max: f64) -> Result<AnalyticPath> {
        let factors = self
            .path
            .iter()
            .map(|f| f.build(self.dimension))
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| invalid(e.to_string()))?;
        AnalyticPath::new(self.dimension, factors, self.domain_radius, t_max).map_err(|e| invalid(e.to_string()))
    }
}

impl BodySpec {
    pub fn build(&self, dim: usize) -> Result<Box<dyn ConvexBody>> {
        let body: Box<dyn ConvexBody> = match self {
            Self::Ball { radius } => Box::new(Ball::new(dim, *radius).map_err(|e| invalid(e.to_string()))?),
            Self::Ellipsoid { semi_axes } => {
                Box::new(QuadraticBody::ellipsoid(semi_axes).map_err(|e| invalid(e.to_string()))?)
            }
            Self::Quadratic { matrix } => {
                if matrix.len() != dim || matrix.iter().any(|r| r.len() != dim) {
                    return Err(invalid(format!("quadratic body needs a {dim}x{dim} matrix")));
                }
                let flat: Vec<f64> = matrix.iter().flatten().copied().collect();
                Box::new(QuadraticBody::new(DMatrix::from_row_slice(dim, dim, &flat)).map_err(|e| invalid(e.to_string()))?)
            }
        };
        if body.dim() != dim {
            return Err(invalid(format!("body has dimension {}, scenario {dim}", body.dim())));
        }
        Ok(body)
    }
}

/// The linear family 1 + tρ₁ described by the terms.
pub fn multiplier_family(m: usize, terms: &[MultiplierTerm], t_max: f64) -> Result<ContactMultiplier> {
    let cterms: Vec<(Complex<f64>, Vec<u32>, Vec<u32>)> = terms
        .iter()
        .map(|t| (Complex::new(t.re, t.im), t.alpha.clone(), t.beta.clone()))
        .collect();
    let rho1 = SphereFunction::from_complex(m, &cterms).map_err(|e| invalid(e.to_string()))?;
    ContactMultiplier::linear(rho1, t_max).map_err(|e| invalid(e.to_string()))
}
