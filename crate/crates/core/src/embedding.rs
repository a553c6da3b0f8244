//! Compositions of exactly symplectic primitive maps, analytic paths of them,
//! and the rescaled families y ↦ (φ(x + ry) − φ(x))/r.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::linalg;
use crate::poly::{Polynomial, Term};
use crate::symplectic::{omega_matrix, SymplecticMatrix};

pub const MAX_DEGREE: u32 = 6;
pub const MAX_FACTORS: usize = 8;
/// Relative slack on the domain radius, wide enough for finite-difference probes at the boundary.
pub const DOMAIN_SLACK: f64 = 1e-5;

/// A linear factor with its inverse transpose cached from an LU solve.
#[derive(Clone, Debug)]
pub struct LinearFactor {
    l: SymplecticMatrix,
    inv_t: DMatrix<f64>,
}

impl LinearFactor {
    pub fn new(l: SymplecticMatrix) -> Result<Self> {
        let inv_t = l
            .matrix()
            .transpose()
            .lu()
            .try_inverse()
            .ok_or(Error::SingularJacobian)?;
        Ok(Self { l, inv_t })
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        self.l.matrix()
    }

    pub fn symplectic(&self) -> &SymplecticMatrix {
        &self.l
    }
}

#[derive(Clone, Debug)]
pub enum PrimitiveMap {
    Linear(LinearFactor),
    /// (x, y) ↦ (x, y + ∇g(x)), g a polynomial in the n position variables.
    ShearPositions(Polynomial),
    /// (x, y) ↦ (x + ∇h(y), y).
    ShearMomenta(Polynomial),
    Translation(DVector<f64>),
}

fn positions(x: &DVector<f64>) -> Vec<f64> {
    x.iter().step_by(2).copied().collect()
}

fn momenta(x: &DVector<f64>) -> Vec<f64> {
    x.iter().skip(1).step_by(2).copied().collect()
}

fn check_potential(p: &Polynomial, n: usize) -> Result<()> {
    check_dim(n, p.nvars())?;
    if p.degree() > MAX_DEGREE {
        return Err(Error::InvalidArgument(format!(
            "potential degree {} exceeds cap {MAX_DEGREE}",
            p.degree()
        )));
    }
    Ok(())
}

impl PrimitiveMap {
    pub fn linear(l: SymplecticMatrix) -> Result<Self> {
        Ok(Self::Linear(LinearFactor::new(l)?))
    }

    pub fn dim_hint(&self) -> Option<usize> {
        match self {
            Self::Linear(l) => Some(l.matrix().nrows()),
            Self::ShearPositions(g) | Self::ShearMomenta(g) => Some(2 * g.nvars()),
            Self::Translation(v) => Some(v.len()),
        }
    }

    /// Linear factors and shears with purely quadratic potentials.
    pub fn is_linear(&self) -> bool {
        match self {
            Self::Linear(_) => true,
            Self::ShearPositions(g) | Self::ShearMomenta(g) => {
                g.terms().iter().all(|t| t.degree() == 2 || t.degree() == 0)
            }
            Self::Translation(v) => v.iter().all(|c| *c == 0.0),
        }
    }

    /// Matrix of a linear primitive.
    pub fn as_matrix(&self, dim: usize) -> Option<DMatrix<f64>> {
        if !self.is_linear() {
            return None;
        }
        let zero = vec![0.0; dim / 2];
        Some(match self {
            Self::Linear(l) => l.matrix().clone(),
            Self::ShearPositions(g) => {
                let h = g.hessian(&zero);
                let mut m = DMatrix::identity(dim, dim);
                for i in 0..dim / 2 {
                    for j in 0..dim / 2 {
                        m[(2 * i + 1, 2 * j)] = h[(i, j)];
                    }
                }
                m
            }
            Self::ShearMomenta(h) => {
                let hh = h.hessian(&zero);
                let mut m = DMatrix::identity(dim, dim);
                for i in 0..dim / 2 {
                    for j in 0..dim / 2 {
                        m[(2 * i, 2 * j + 1)] = hh[(i, j)];
                    }
                }
                m
            }
            Self::Translation(_) => DMatrix::identity(dim, dim),
        })
    }

    fn eval(&self, x: &DVector<f64>) -> DVector<f64> {
        match self {
            Self::Linear(l) => l.matrix() * x,
            Self::ShearPositions(g) => {
                let grad = g.gradient(&positions(x));
                let mut y = x.clone();
                for i in 0..grad.len() {
                    y[2 * i + 1] += grad[i];
                }
                y
            }
            Self::ShearMomenta(h) => {
                let grad = h.gradient(&momenta(x));
                let mut y = x.clone();
                for i in 0..grad.len() {
                    y[2 * i] += grad[i];
                }
                y
            }
            Self::Translation(v) => x + v,
        }
    }

    /// y ← f(y), M ← Df(y)·M; shears update rows in place.
    fn eval_jacobian_in_place(&self, y: &mut DVector<f64>, m: &mut DMatrix<f64>) {
        let cols = m.ncols();
        match self {
            Self::Linear(l) => {
                *m = l.matrix() * &*m;
                *y = l.matrix() * &*y;
            }
            Self::ShearPositions(g) => {
                let (grad, h) = g.gradient_hessian(&positions(y));
                let n = grad.len();
                for i in 0..n {
                    for c in 0..cols {
                        let s: f64 = (0..n).map(|j| h[(i, j)] * m[(2 * j, c)]).sum();
                        m[(2 * i + 1, c)] += s;
                    }
                    y[2 * i + 1] += grad[i];
                }
            }
            Self::ShearMomenta(hp) => {
                let (grad, h) = hp.gradient_hessian(&momenta(y));
                let n = grad.len();
                for i in 0..n {
                    for c in 0..cols {
                        let s: f64 = (0..n).map(|j| h[(i, j)] * m[(2 * j + 1, c)]).sum();
                        m[(2 * i, c)] += s;
                    }
                    y[2 * i] += grad[i];
                }
            }
            Self::Translation(t) => *y += t,
        }
    }

    /// y ← f(y), v ← (Df(y)ᵀ)⁻¹v, sharing the derivative evaluation.
    fn eval_adjoint_in_place(&self, y: &mut DVector<f64>, v: &mut DVector<f64>) {
        match self {
            Self::Linear(l) => {
                *v = &l.inv_t * &*v;
                *y = l.matrix() * &*y;
            }
            Self::ShearPositions(g) => {
                let (grad, h) = g.gradient_hessian(&positions(y));
                let n = grad.len();
                for i in 0..n {
                    let s: f64 = (0..n).map(|j| h[(i, j)] * v[2 * j + 1]).sum();
                    v[2 * i] -= s;
                    y[2 * i + 1] += grad[i];
                }
            }
            Self::ShearMomenta(hp) => {
                let (grad, h) = hp.gradient_hessian(&momenta(y));
                let n = grad.len();
                for i in 0..n {
                    let s: f64 = (0..n).map(|j| h[(i, j)] * v[2 * j]).sum();
                    v[2 * i + 1] -= s;
                    y[2 * i] += grad[i];
                }
            }
            Self::Translation(t) => *y += t,
        }
    }
}

#[derive(Clone, Debug)]
pub struct EmbeddingComposition {
    dim: usize,
    factors: Vec<PrimitiveMap>,
    domain_radius: f64,
}

impl EmbeddingComposition {
    pub fn new(dim: usize, factors: Vec<PrimitiveMap>, domain_radius: f64) -> Result<Self> {
        if dim < 2 || dim % 2 != 0 {
            return Err(Error::InvalidArgument(format!("ambient dimension {dim} must be even")));
        }
        if factors.len() > MAX_FACTORS {
            return Err(Error::InvalidArgument(format!(
                "{} factors exceed cap {MAX_FACTORS}",
                factors.len()
            )));
        }
        if !(domain_radius > 0.0) {
            return Err(Error::InvalidArgument("domain radius must be positive".into()));
        }
        for f in &factors {
            match f {
                PrimitiveMap::ShearPositions(g) | PrimitiveMap::ShearMomenta(g) => {
                    check_potential(g, dim / 2)?
                }
                _ => check_dim(dim, f.dim_hint().unwrap_or(dim))?,
            }
        }
        Ok(Self {
            dim,
            factors,
            domain_radius,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            dim,
            factors: Vec::new(),
            domain_radius: f64::INFINITY,
        }
    }

    pub fn from_linear(l: SymplecticMatrix) -> Result<Self> {
        let dim = l.dim();
        Self::new(dim, vec![PrimitiveMap::linear(l)?], f64::INFINITY)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn factors(&self) -> &[PrimitiveMap] {
        &self.factors
    }

    pub fn domain_radius(&self) -> f64 {
        self.domain_radius
    }

    pub fn with_domain_radius(mut self, r: f64) -> Self {
        self.domain_radius = r;
        self
    }

    pub fn is_linear(&self) -> bool {
        self.factors.iter().all(PrimitiveMap::is_linear)
    }

    /// The matrix of a linear composition.
    pub fn linear_part(&self) -> Option<SymplecticMatrix> {
        let mut m = DMatrix::identity(self.dim, self.dim);
        for f in &self.factors {
            m = f.as_matrix(self.dim)? * m;
        }
        Some(SymplecticMatrix::new_unchecked(m))
    }

    fn check_domain(&self, x: &DVector<f64>) -> Result<()> {
        check_dim(self.dim, x.len())?;
        let norm = x.norm();
        if norm > self.domain_radius * (1.0 + DOMAIN_SLACK) {
            return Err(Error::OutsideDomain {
                norm,
                radius: self.domain_radius,
            });
        }
        Ok(())
    }

    pub fn eval(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_domain(x)?;
        Ok(self.eval_unchecked(x))
    }

    /// Evaluation without the domain test; the polynomial formulas are global.
    pub fn eval_unchecked(&self, x: &DVector<f64>) -> DVector<f64> {
        self.factors.iter().fold(x.clone(), |y, f| f.eval(&y))
    }

    pub fn jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.check_domain(x)?;
        Ok(self.eval_jacobian_unchecked(x).1)
    }

    pub fn eval_jacobian_unchecked(&self, x: &DVector<f64>) -> (DVector<f64>, DMatrix<f64>) {
        let mut y = x.clone();
        let mut jac = DMatrix::identity(self.dim, self.dim);
        for f in &self.factors {
            f.eval_jacobian_in_place(&mut y, &mut jac);
        }
        (y, jac)
    }

    /// (Dφ(x)ᵀ)⁻¹ w, factor by factor: (J_m ⋯ J_1)^{-T} = J_m^{-T} ⋯ J_1^{-T}.
    pub fn adjoint_inverse_apply(&self, x: &DVector<f64>, w: &DVector<f64>) -> Result<DVector<f64>> {
        self.check_domain(x)?;
        check_dim(self.dim, w.len())?;
        let out = self.adjoint_inverse_unchecked(x, w);
        if out.iter().all(|v| v.is_finite()) {
            Ok(out)
        } else {
            Err(Error::SingularJacobian)
        }
    }

    pub(crate) fn adjoint_inverse_unchecked(&self, x: &DVector<f64>, w: &DVector<f64>) -> DVector<f64> {
        let mut y = x.clone();
        let mut v = w.clone();
        for f in &self.factors {
            f.eval_adjoint_in_place(&mut y, &mut v);
        }
        v
    }

    /// Points x₀ = x, x_j = f_j(x_{j−1}).
    fn centers(&self, x: &DVector<f64>) -> Vec<DVector<f64>> {
        let mut out = vec![x.clone()];
        for f in &self.factors {
            let next = f.eval(out.last().expect("non-empty"));
            out.push(next);
        }
        out
    }

    /// max over sample points of max|DφᵀΩDφ − Ω|.
    pub fn symplecticity_residual(&self, sample_count: usize, seed: u64) -> f64 {
        let om = omega_matrix(self.dim);
        let r = if self.domain_radius.is_finite() {
            self.domain_radius
        } else {
            1.0
        };
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut worst: f64 = 0.0;
        for _ in 0..sample_count.max(1) {
            let x = random_ball_point(self.dim, r, &mut rng);
            let (_, j) = self.eval_jacobian_unchecked(&x);
            let d = j.transpose() * &om * &j - &om;
            worst = worst.max(linalg::max_abs(&d));
        }
        worst
    }

    /// Largest R ≤ `max_radius` passing the sampled test
    /// ‖Dφ(x) − Dφ(0)‖ ≤ ½·σ_min(Dφ(0)) for |x| ≤ R.
    pub fn certified_radius(&self, max_radius: f64) -> f64 {
        let zero = DVector::zeros(self.dim);
        let (_, j0) = self.eval_jacobian_unchecked(&zero);
        let bound = 0.5 * linalg::sigma_min(&j0);
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let dirs: Vec<DVector<f64>> = (0..96).map(|_| random_unit(self.dim, &mut rng)).collect();
        let ok = |r: f64| {
            [1.0, 0.6].iter().all(|frac| {
                dirs.iter().all(|u| {
                    let (_, j) = self.eval_jacobian_unchecked(&(u * (r * frac)));
                    linalg::op_norm(&(j - &j0)) <= bound
                })
            })
        };
        if ok(max_radius) {
            return max_radius;
        }
        let (mut lo, mut hi) = (0.0, max_radius);
        for _ in 0..40 {
            let mid = 0.5 * (lo + hi);
            if ok(mid) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }
}

pub(crate) fn random_unit<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> DVector<f64> {
    loop {
        let v = DVector::from_fn(dim, |_, _| gaussian(rng));
        let n = v.norm();
        if n > 1e-8 {
            return v / n;
        }
    }
}

pub(crate) fn random_ball_point<R: Rng + ?Sized>(dim: usize, r: f64, rng: &mut R) -> DVector<f64> {
    let u = random_unit(dim, rng);
    let s: f64 = rng.random::<f64>().powf(1.0 / dim as f64);
    u * (r * s)
}

pub(crate) fn gaussian<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    // Box–Muller
    let u1: f64 = rng.random::<f64>().max(1e-300);
    let u2: f64 = rng.random::<f64>();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

fn horner(c: &[f64], t: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, v| acc * t + v)
}

/// Potential whose coefficients are polynomials in the path parameter.
#[derive(Clone, Debug, PartialEq)]
pub struct PathPolynomial {
    nvars: usize,
    terms: Vec<(Vec<f64>, Vec<u32>)>,
}

impl PathPolynomial {
    /// Each term: (ascending coefficients in t, exponent vector).
    pub fn new(nvars: usize, terms: Vec<(Vec<f64>, Vec<u32>)>) -> Result<Self> {
        for (c, e) in &terms {
            check_dim(nvars, e.len())?;
            if e.iter().sum::<u32>() > MAX_DEGREE {
                return Err(Error::InvalidArgument("potential degree exceeds cap".into()));
            }
            if c.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidArgument("non-finite coefficient".into()));
            }
        }
        Ok(Self { nvars, terms })
    }

    /// t·g: the potential scaled linearly in t.
    pub fn linear_in_t(g: &Polynomial) -> Self {
        Self {
            nvars: g.nvars(),
            terms: g
                .terms()
                .iter()
                .map(|t| (vec![0.0, t.coef], t.exp.clone()))
                .collect(),
        }
    }

    pub fn at(&self, t: f64) -> Polynomial {
        let terms = self
            .terms
            .iter()
            .map(|(c, e)| Term {
                coef: horner(c, t),
                exp: e.clone(),
            })
            .collect();
        Polynomial::new(self.nvars, terms).expect("validated at construction")
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> &[(Vec<f64>, Vec<u32>)] {
        &self.terms
    }
}

#[derive(Clone, Debug)]
pub enum PathFactor {
    Fixed(PrimitiveMap),
    ShearPositions(PathPolynomial),
    ShearMomenta(PathPolynomial),
    /// diag(a(t), 1/a(t)) on the given complex plane.
    Stretch { plane: usize, scale: Vec<f64> },
    /// z_plane ↦ e^{iθ(t)} z_plane.
    PlaneRotation { plane: usize, angle: Vec<f64> },
    /// Real rotation by θ(t) mixing z_first and z_second.
    UnitaryMix {
        first: usize,
        second: usize,
        angle: Vec<f64>,
    },
}

impl PathFactor {
    fn at(&self, dim: usize, t: f64) -> Result<PrimitiveMap> {
        Ok(match self {
            Self::Fixed(p) => p.clone(),
            Self::ShearPositions(g) => PrimitiveMap::ShearPositions(g.at(t)),
            Self::ShearMomenta(h) => PrimitiveMap::ShearMomenta(h.at(t)),
            Self::Stretch { plane, scale } => {
                let a = horner(scale, t);
                let mut s = vec![1.0; dim / 2];
                *s.get_mut(*plane)
                    .ok_or_else(|| Error::InvalidArgument(format!("plane {plane} out of range")))? = a;
                PrimitiveMap::linear(SymplecticMatrix::stretch(&s)?)?
            }
            Self::PlaneRotation { plane, angle } => PrimitiveMap::linear(
                SymplecticMatrix::plane_rotation(dim, *plane, horner(angle, t)),
            )?,
            Self::UnitaryMix {
                first,
                second,
                angle,
            } => PrimitiveMap::linear(SymplecticMatrix::unitary_mix(
                dim,
                *first,
                *second,
                horner(angle, t),
            ))?,
        })
    }

    /// Maximum coefficient degree in t.
    fn t_degree(&self) -> usize {
        match self {
            Self::Fixed(_) => 0,
            Self::ShearPositions(g) | Self::ShearMomenta(g) => g
                .terms
                .iter()
                .map(|(c, _)| c.len().saturating_sub(1))
                .max()
                .unwrap_or(0),
            Self::Stretch { scale: c, .. }
            | Self::PlaneRotation { angle: c, .. }
            | Self::UnitaryMix { angle: c, .. } => c.len().saturating_sub(1),
        }
    }
}

/// t ↦ φ_t on [0, t_max]; φ₀ is linear.
#[derive(Clone, Debug)]
pub struct AnalyticPath {
    dim: usize,
    factors: Vec<PathFactor>,
    domain_radius: f64,
    t_max: f64,
}

impl AnalyticPath {
    pub fn new(dim: usize, factors: Vec<PathFactor>, domain_radius: f64, t_max: f64) -> Result<Self> {
        if factors.len() > MAX_FACTORS {
            return Err(Error::InvalidArgument("too many path factors".into()));
        }
        if !(t_max > 0.0) {
            return Err(Error::InvalidArgument("t_max must be positive".into()));
        }
        let path = Self {
            dim,
            factors,
            domain_radius,
            t_max,
        };
        for k in 0..=16 {
            let t = path.t_max * k as f64 / 16.0;
            for f in &path.factors {
                if let PathFactor::Stretch { scale, .. } = f {
                    if horner(scale, t) <= 0.0 {
                        return Err(Error::InvalidArgument(format!(
                            "stretch factor not positive at t = {t}"
                        )));
                    }
                }
            }
            path.raw_at(t)?;
        }
        if !path.raw_at(0.0)?.is_linear() {
            return Err(Error::InvalidArgument("path must be linear at t = 0".into()));
        }
        Ok(path)
    }

    /// The constant path at a fixed composition (linear or not).
    pub fn constant(phi: &EmbeddingComposition) -> Self {
        Self {
            dim: phi.dim(),
            factors: phi.factors().iter().cloned().map(PathFactor::Fixed).collect(),
            domain_radius: phi.domain_radius(),
            t_max: 1.0,
        }
    }

    /// Straight deformation t ↦ φ_t from the linearisation of φ at 0 (t = 0) to φ (t = 1):
    /// higher-order potential terms and translations are scaled by t.
    pub fn deformation_of(phi: &EmbeddingComposition) -> Result<Self> {
        let n = phi.dim() / 2;
        let split = |g: &Polynomial| {
            let terms = g
                .terms()
                .iter()
                .map(|t| {
                    let c = if t.degree() == 2 {
                        vec![t.coef]
                    } else {
                        vec![0.0, t.coef]
                    };
                    (c, t.exp.clone())
                })
                .collect();
            PathPolynomial::new(n, terms)
        };
        let mut factors = Vec::new();
        for f in phi.factors() {
            factors.push(match f {
                PrimitiveMap::ShearPositions(g) => PathFactor::ShearPositions(split(g)?),
                PrimitiveMap::ShearMomenta(h) => PathFactor::ShearMomenta(split(h)?),
                // translations do not change the shape of any image
                PrimitiveMap::Translation(_) => continue,
                other => PathFactor::Fixed(other.clone()),
            });
        }
        Self::new(phi.dim(), factors, phi.domain_radius(), 1.0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn factors(&self) -> &[PathFactor] {
        &self.factors
    }

    pub fn domain_radius(&self) -> f64 {
        self.domain_radius
    }

    pub fn t_degree(&self) -> usize {
        self.factors.iter().map(PathFactor::t_degree).max().unwrap_or(0)
    }

    fn raw_at(&self, t: f64) -> Result<EmbeddingComposition> {
        let prims = self
            .factors
            .iter()
            .map(|f| f.at(self.dim, t))
            .collect::<Result<Vec<_>>>()?;
        EmbeddingComposition::new(self.dim, prims, self.domain_radius)
    }

    /// φ_t with consecutive linear factors merged; φ₀ is a single linear factor.
    pub fn path_at(&self, t: f64) -> Result<EmbeddingComposition> {
        if !(0.0..=self.t_max * (1.0 + 1e-12)).contains(&t) {
            return Err(Error::InvalidArgument(format!(
                "t = {t} outside [0, {}]",
                self.t_max
            )));
        }
        let raw = self.raw_at(t)?;
        let mut out: Vec<PrimitiveMap> = Vec::new();
        let mut acc: Option<DMatrix<f64>> = None;
        for f in raw.factors() {
            match f.as_matrix(self.dim) {
                Some(m) => acc = Some(m * acc.unwrap_or_else(|| DMatrix::identity(self.dim, self.dim))),
                None => {
                    if let Some(m) = acc.take() {
                        out.push(PrimitiveMap::Linear(LinearFactor::new(SymplecticMatrix::new_unchecked(m))?));
                    }
                    out.push(f.clone());
                }
            }
        }
        if let Some(m) = acc {
            out.push(PrimitiveMap::Linear(LinearFactor::new(SymplecticMatrix::new_unchecked(m))?));
        }
        if out.is_empty() {
            out.push(PrimitiveMap::linear(SymplecticMatrix::identity(self.dim))?);
        }
        EmbeddingComposition::new(self.dim, out, self.domain_radius)
    }
}

/// R(x) = domain radius − |x|.
pub fn rescaling_bound(phi: &EmbeddingComposition, x: &DVector<f64>) -> f64 {
    phi.domain_radius() - x.norm()
}

/// The family r ↦ φ_{r,x} as an analytic path in r on [0, R(x)), unit-ball domain.
///
/// Each factor f_j is rescaled at its propagated centre x_{j−1}; shear potentials become
/// Σ_{|α|≥2} ∂^αg(q)/α! · r^{|α|−2} a^α, so r = 0 gives Dφ(x) and no division by r occurs.
pub fn rescaled_path(phi: &EmbeddingComposition, x: &DVector<f64>) -> Result<AnalyticPath> {
    check_dim(phi.dim(), x.len())?;
    let bound = rescaling_bound(phi, x);
    if !(bound > 0.0) {
        return Err(Error::OutsideDomain {
            norm: x.norm(),
            radius: phi.domain_radius(),
        });
    }
    let centers = phi.centers(x);
    let n = phi.dim() / 2;
    let rescale = |g: &Polynomial, c: &[f64]| -> Result<PathPolynomial> {
        let sh = g.shifted(c, 1.0);
        let terms = sh
            .terms()
            .iter()
            .filter(|t| t.degree() >= 2)
            .map(|t| {
                let mut coef = vec![0.0; (t.degree() - 1) as usize];
                coef[(t.degree() - 2) as usize] = t.coef;
                (coef, t.exp.clone())
            })
            .collect();
        PathPolynomial::new(n, terms)
    };
    let mut factors = Vec::new();
    for (f, c) in phi.factors().iter().zip(&centers) {
        match f {
            PrimitiveMap::Linear(_) => factors.push(PathFactor::Fixed(f.clone())),
            PrimitiveMap::Translation(_) => {}
            PrimitiveMap::ShearPositions(g) => {
                factors.push(PathFactor::ShearPositions(rescale(g, &positions(c))?))
            }
            PrimitiveMap::ShearMomenta(h) => {
                factors.push(PathFactor::ShearMomenta(rescale(h, &momenta(c))?))
            }
        }
    }
    AnalyticPath::new(phi.dim(), factors, 1.0, bound)
}

/// φ_{r,x} for a single radius.
pub fn rescaled_family(phi: &EmbeddingComposition, x: &DVector<f64>, r: f64) -> Result<EmbeddingComposition> {
    let bound = rescaling_bound(phi, x);
    if !(r >= 0.0) || r >= bound {
        return Err(Error::InvalidArgument(format!(
            "radius {r} not in [0, R(x) = {bound})"
        )));
    }
    rescaled_path(phi, x)?.path_at(r)
}

/// Serializable description of a primitive map.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FactorSpec {
    /// Row-major matrix.
    Linear { matrix: Vec<Vec<f64>> },
    /// diag(a₁, 1/a₁, …).
    Stretch { scales: Vec<f64> },
    ShearPositions { terms: Vec<Term> },
    ShearMomenta { terms: Vec<Term> },
    Translation { vector: Vec<f64> },
}

/// A potential term whose coefficient is a polynomial in t (ascending).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PathTermSpec {
    pub coef: Vec<f64>,
    pub exp: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PathFactorSpec {
    Fixed { factor: FactorSpec },
    ShearPositions { terms: Vec<PathTermSpec> },
    ShearMomenta { terms: Vec<PathTermSpec> },
    Stretch { plane: usize, scale: Vec<f64> },
    PlaneRotation { plane: usize, angle: Vec<f64> },
    UnitaryMix { first: usize, second: usize, angle: Vec<f64> },
}

impl FactorSpec {
    pub fn build(&self, dim: usize) -> Result<PrimitiveMap> {
        let n = dim / 2;
        Ok(match self {
            Self::Linear { matrix } => {
                if matrix.len() != dim || matrix.iter().any(|r| r.len() != dim) {
                    return Err(Error::InvalidArgument(format!("linear factor must be {dim}x{dim}")));
                }
                let flat: Vec<f64> = matrix.iter().flatten().copied().collect();
                PrimitiveMap::linear(SymplecticMatrix::new(DMatrix::from_row_slice(dim, dim, &flat))?)?
            }
            Self::Stretch { scales } => {
                check_dim(n, scales.len())?;
                PrimitiveMap::linear(SymplecticMatrix::stretch(scales)?)?
            }
            Self::ShearPositions { terms } => {
                let g = Polynomial::new(n, terms.clone())?;
                check_potential(&g, n)?;
                PrimitiveMap::ShearPositions(g)
            }
            Self::ShearMomenta { terms } => {
                let g = Polynomial::new(n, terms.clone())?;
                check_potential(&g, n)?;
                PrimitiveMap::ShearMomenta(g)
            }
            Self::Translation { vector } => {
                check_dim(dim, vector.len())?;
                PrimitiveMap::Translation(DVector::from_vec(vector.clone()))
            }
        })
    }
}

impl PathFactorSpec {
    pub fn build(&self, dim: usize) -> Result<PathFactor> {
        let n = dim / 2;
        let pp = |terms: &[PathTermSpec]| {
            PathPolynomial::new(n, terms.iter().map(|t| (t.coef.clone(), t.exp.clone())).collect())
        };
        let plane_ok = |p: usize| {
            if p < n {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("plane {p} out of range")))
            }
        };
        Ok(match self {
            Self::Fixed { factor } => PathFactor::Fixed(factor.build(dim)?),
            Self::ShearPositions { terms } => PathFactor::ShearPositions(pp(terms)?),
            Self::ShearMomenta { terms } => PathFactor::ShearMomenta(pp(terms)?),
            Self::Stretch { plane, scale } => {
                plane_ok(*plane)?;
                PathFactor::Stretch {
                    plane: *plane,
                    scale: scale.clone(),
                }
            }
            Self::PlaneRotation { plane, angle } => {
                plane_ok(*plane)?;
                PathFactor::PlaneRotation {
                    plane: *plane,
                    angle: angle.clone(),
                }
            }
            Self::UnitaryMix {
                first,
                second,
                angle,
            } => {
                plane_ok(*first)?;
                plane_ok(*second)?;
                if first == second {
                    return Err(Error::InvalidArgument("unitary mix needs two planes".into()));
                }
                PathFactor::UnitaryMix {
                    first: *first,
                    second: *second,
                    angle: angle.clone(),
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    fn x1_squared() -> Polynomial {
        Polynomial::new(2, vec![Term { coef: 1.0, exp: vec![2, 0] }]).unwrap()
    }

    fn x1_cubed() -> Polynomial {
        Polynomial::new(2, vec![Term { coef: 1.0, exp: vec![3, 0] }]).unwrap()
    }

    #[test]
    fn eval_examples() {
        let id = EmbeddingComposition::identity(4);
        assert_eq!(id.eval(&dv(&[1., 0., 0., 0.])).unwrap(), dv(&[1., 0., 0., 0.]));
        let sh = EmbeddingComposition::new(4, vec![PrimitiveMap::ShearPositions(x1_squared())], 2.0)
            .unwrap();
        assert_eq!(sh.eval(&dv(&[1., 0., 0., 0.])).unwrap(), dv(&[1., 2., 0., 0.]));
        let j = sh.jacobian(&dv(&[0.3, 0.1, -0.2, 0.5])).unwrap();
        let mut want = DMatrix::identity(4, 4);
        want[(1, 0)] = 2.0;
        assert_eq!(j, want);
        assert!(sh.eval(&dv(&[3., 0., 0., 0.])).is_err());
        let tr = EmbeddingComposition::new(
            4,
            vec![PrimitiveMap::Translation(dv(&[1., 2., 3., 4.]))],
            1.0,
        )
        .unwrap();
        assert_eq!(tr.eval(&dv(&[0.5, 0., 0., 0.])).unwrap(), dv(&[1.5, 2., 3., 4.]));
    }

    #[test]
    fn adjoint_inverse_roundtrip() {
        let s = DMatrix::from_row_slice(2, 2, &[0.3, 0.1, 0.1, -0.2]);
        let phi = EmbeddingComposition::new(
            4,
            vec![
                PrimitiveMap::linear(SymplecticMatrix::shear_momenta(&s).unwrap()).unwrap(),
                PrimitiveMap::ShearPositions(x1_cubed()),
                PrimitiveMap::ShearMomenta(x1_squared()),
            ],
            2.0,
        )
        .unwrap();
        let x = dv(&[0.2, -0.4, 0.1, 0.3]);
        let w = dv(&[1.0, 0.5, -0.3, 0.2]);
        let v = phi.adjoint_inverse_apply(&x, &w).unwrap();
        let j = phi.jacobian(&x).unwrap();
        assert!((j.transpose() * v - w).norm() < 1e-12);
    }

    #[test]
    fn path_at_zero_is_single_linear() {
        let path = AnalyticPath::new(
            4,
            vec![
                PathFactor::Stretch { plane: 0, scale: vec![1.0, 1.0] },
                PathFactor::ShearPositions(PathPolynomial::linear_in_t(&x1_cubed())),
            ],
            1.5,
            1.0,
        )
        .unwrap();
        let p0 = path.path_at(0.0).unwrap();
        assert_eq!(p0.factors().len(), 1);
        assert!(p0.is_linear());
        let p5 = path.path_at(0.5).unwrap();
        match &p5.factors()[1] {
            PrimitiveMap::ShearPositions(g) => assert_eq!(g.terms()[0].coef, 0.5),
            other => panic!("unexpected factor {other:?}"),
        }
    }

    #[test]
    fn rescaled_cubic_shear_at_origin() {
        let phi = EmbeddingComposition::new(4, vec![PrimitiveMap::ShearPositions(x1_cubed())], 1.0)
            .unwrap();
        let x = DVector::zeros(4);
        let f = rescaled_family(&phi, &x, 0.25).unwrap();
        match &f.factors()[0] {
            PrimitiveMap::ShearPositions(g) => {
                assert_eq!(g.terms().len(), 1);
                assert_eq!(g.terms()[0].coef, 0.25);
                assert_eq!(g.terms()[0].exp, vec![3, 0]);
            }
            other => panic!("unexpected factor {other:?}"),
        }
        let f0 = rescaled_family(&phi, &x, 0.0).unwrap();
        assert!(f0.is_linear());
        assert!(linalg::max_abs(&(f0.linear_part().unwrap().matrix() - DMatrix::<f64>::identity(4, 4))) == 0.0);
    }

    #[test]
    fn rescaled_matches_difference_quotient() {
        let phi = EmbeddingComposition::new(
            4,
            vec![
                PrimitiveMap::ShearPositions(x1_cubed()),
                PrimitiveMap::Translation(dv(&[0.1, 0.0, 0.2, 0.0])),
                PrimitiveMap::ShearMomenta(x1_squared()),
            ],
            1.0,
        )
        .unwrap();
        let x = dv(&[0.2, 0.1, -0.1, 0.05]);
        let r = 0.3;
        let f = rescaled_family(&phi, &x, r).unwrap();
        let y = dv(&[0.5, -0.2, 0.3, 0.4]);
        let direct = (phi.eval(&(&x + &y * r)).unwrap() - phi.eval(&x).unwrap()) / r;
        assert!((f.eval(&y).unwrap() - direct).norm() < 1e-13);
    }

    #[test]
    fn corrupted_factor_is_detected() {
        let mut m = DMatrix::identity(4, 4);
        m[(0, 0)] += 1e-3;
        let bad = EmbeddingComposition::new(
            4,
            vec![PrimitiveMap::linear(SymplecticMatrix::new_unchecked(m)).unwrap()],
            1.0,
        )
        .unwrap();
        assert!(bad.symplecticity_residual(8, 1) > 9e-4);
        assert_eq!(EmbeddingComposition::identity(4).symplecticity_residual(8, 1), 0.0);
    }

    #[test]
    fn certified_radius_of_cubic_shear() {
        // ‖D φ(x) − I‖ = 6|x₁| ≤ ½ ⇒ |x₁| ≤ 1/12
        let phi = EmbeddingComposition::new(4, vec![PrimitiveMap::ShearPositions(x1_cubed())], 1.0)
            .unwrap();
        let r = phi.certified_radius(1.0);
        assert!(r >= 1.0 / 12.0 - 1e-9, "r = {r}");
        assert!(r <= 0.2, "r = {r}");
    }
}
