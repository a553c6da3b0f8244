//! Linear symplectic algebra on ℝ^{2n} with interleaved coordinates
//! (x₁, y₁, …, x_n, y_n).

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::linalg::{self, pfaffian};

pub const TOL_SYMP: f64 = 1e-9;
pub const TOL_ND: f64 = 1e-9;

/// Matrix of ω₀: ω₀(u, v) = uᵀ Ω v.
pub fn omega_matrix(dim: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(dim, dim);
    for i in 0..dim / 2 {
        m[(2 * i, 2 * i + 1)] = 1.0;
        m[(2 * i + 1, 2 * i)] = -1.0;
    }
    m
}

/// The complex structure J(x, y) = (−y, x); J = −Ω.
pub fn complex_structure(dim: usize) -> DMatrix<f64> {
    -omega_matrix(dim)
}

pub fn apply_j(v: &DVector<f64>) -> DVector<f64> {
    let mut out = DVector::zeros(v.len());
    for i in 0..v.len() / 2 {
        out[2 * i] = -v[2 * i + 1];
        out[2 * i + 1] = v[2 * i];
    }
    out
}

/// ω₀(u, v) = Σ (u_{x_i} v_{y_i} − u_{y_i} v_{x_i}).
pub fn omega_eval(u: &DVector<f64>, v: &DVector<f64>) -> Result<f64> {
    check_dim(u.len(), v.len())?;
    if u.len() % 2 != 0 {
        return Err(Error::InvalidArgument("odd ambient dimension".into()));
    }
    Ok(omega_raw(u.as_slice(), v.as_slice()))
}

#[inline]
pub(crate) fn omega_raw(u: &[f64], v: &[f64]) -> f64 {
    u.chunks_exact(2)
        .zip(v.chunks_exact(2))
        .map(|(a, b)| a[0] * b[1] - a[1] * b[0])
        .sum()
}

/// Skew Gram matrix [ω₀(b_i, b_j)] of the columns of `b`.
pub fn symplectic_gram(b: &DMatrix<f64>) -> DMatrix<f64> {
    let c = b.ncols();
    let mut g = DMatrix::zeros(c, c);
    for i in 0..c {
        for j in (i + 1)..c {
            let w = omega_raw(b.column(i).as_slice(), b.column(j).as_slice());
            g[(i, j)] = w;
            g[(j, i)] = -w;
        }
    }
    g
}

fn symplectic_defect(m: &DMatrix<f64>) -> f64 {
    let om = omega_matrix(m.nrows());
    let r = m.transpose() * &om * m - om;
    linalg::max_abs(&r) / m.norm_squared().max(1.0)
}

/// A 2n×2n matrix with LᵀΩL = Ω up to `TOL_SYMP` (relative to ‖L‖²).
#[derive(Clone, Debug, PartialEq)]
pub struct SymplecticMatrix {
    m: DMatrix<f64>,
}

impl SymplecticMatrix {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if m.nrows() != m.ncols() || m.nrows() % 2 != 0 || m.nrows() == 0 {
            return Err(Error::InvalidArgument(format!(
                "symplectic matrix must be square of even size, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        let defect = symplectic_defect(&m);
        if defect.is_nan() || defect > TOL_SYMP {
            return Err(Error::NotSymplectic { defect });
        }
        Ok(Self { m })
    }

    /// Skips the symplecticity test. Only for negative controls.
    pub fn new_unchecked(m: DMatrix<f64>) -> Self {
        Self { m }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            m: DMatrix::identity(dim, dim),
        }
    }

    /// diag(a₁, 1/a₁, a₂, 1/a₂, …).
    pub fn stretch(scales: &[f64]) -> Result<Self> {
        let mut d = Vec::with_capacity(2 * scales.len());
        for &a in scales {
            if a <= 0.0 || !a.is_finite() {
                return Err(Error::InvalidArgument(format!("stretch factor {a} must be positive")));
            }
            d.push(a);
            d.push(1.0 / a);
        }
        Ok(Self {
            m: DMatrix::from_diagonal(&DVector::from_vec(d)),
        })
    }

    /// (x, y) ↦ (x, y + S x) for symmetric S.
    pub fn shear_positions(s: &DMatrix<f64>) -> Result<Self> {
        let n = s.nrows();
        let mut m = DMatrix::identity(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                m[(2 * i + 1, 2 * j)] = s[(i, j)];
            }
        }
        Self::new(m)
    }

    /// (x, y) ↦ (x + S y, y) for symmetric S.
    pub fn shear_momenta(s: &DMatrix<f64>) -> Result<Self> {
        let n = s.nrows();
        let mut m = DMatrix::identity(2 * n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                m[(2 * i, 2 * j + 1)] = s[(i, j)];
            }
        }
        Self::new(m)
    }

    /// Multiplication of z_plane by e^{iθ}.
    pub fn plane_rotation(dim: usize, plane: usize, theta: f64) -> Self {
        let mut m = DMatrix::identity(dim, dim);
        let (s, c) = theta.sin_cos();
        let (x, y) = (2 * plane, 2 * plane + 1);
        m[(x, x)] = c;
        m[(x, y)] = -s;
        m[(y, x)] = s;
        m[(y, y)] = c;
        Self { m }
    }

    /// Real rotation of (z_a, z_b) by θ, applied to x- and y-parts alike. Unitary.
    pub fn unitary_mix(dim: usize, a: usize, b: usize, theta: f64) -> Self {
        let mut m = DMatrix::identity(dim, dim);
        let (s, c) = theta.sin_cos();
        for off in 0..2 {
            let (i, j) = (2 * a + off, 2 * b + off);
            m[(i, i)] = c;
            m[(i, j)] = -s;
            m[(j, i)] = s;
            m[(j, j)] = c;
        }
        Self { m }
    }

    /// Swap of the complex planes a and b.
    pub fn plane_swap(dim: usize, a: usize, b: usize) -> Self {
        let mut m = DMatrix::zeros(dim, dim);
        let mut perm: Vec<usize> = (0..dim / 2).collect();
        perm.swap(a, b);
        for (i, &p) in perm.iter().enumerate() {
            m[(2 * p, 2 * i)] = 1.0;
            m[(2 * p + 1, 2 * i + 1)] = 1.0;
        }
        Self { m }
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn defect(&self) -> f64 {
        symplectic_defect(&self.m)
    }

    /// L⁻¹ = −Ω Lᵀ Ω.
    pub fn inverse(&self) -> Self {
        let om = omega_matrix(self.dim());
        Self {
            m: -(&om * self.m.transpose() * &om),
        }
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self {
            m: &self.m * &other.m,
        }
    }

    pub fn transpose(&self) -> Self {
        Self {
            m: self.m.transpose(),
        }
    }
}

/// A 2k-dimensional subspace on which ω₀ is nondegenerate.
#[derive(Clone, Debug)]
pub struct SymplecticSubspace {
    basis: DMatrix<f64>,
}

impl SymplecticSubspace {
    /// `basis` columns span V. Accepts 0 columns (the zero subspace).
    pub fn new(basis: DMatrix<f64>) -> Result<Self> {
        let dim = basis.nrows();
        if dim % 2 != 0 || dim == 0 {
            return Err(Error::InvalidArgument("ambient dimension must be even".into()));
        }
        if basis.ncols() % 2 != 0 || basis.ncols() > dim {
            return Err(Error::InvalidArgument(format!(
                "subspace needs an even number of basis vectors, got {}",
                basis.ncols()
            )));
        }
        if basis.ncols() > 0 {
            let gram = basis.transpose() * &basis;
            let gdet = gram.determinant();
            let wdet = symplectic_gram(&basis).determinant();
            // det Ω_V is invariant under orthonormal change of basis, so compare
            // against det(BᵀB) to make the test scale and basis free.
            let rel = if gdet > 0.0 { wdet.abs() / gdet } else { 0.0 };
            if !(rel > TOL_ND) {
                return Err(Error::DegenerateSubspace { det: rel });
            }
        }
        Ok(Self { basis })
    }

    pub fn from_vectors(vs: &[DVector<f64>]) -> Result<Self> {
        let dim = vs.first().map(|v| v.len()).unwrap_or(0);
        for v in vs {
            check_dim(dim, v.len())?;
        }
        Self::new(linalg::from_columns(dim, vs))
    }

    /// span(e_{x_i}, e_{y_i} : i ∈ planes).
    pub fn coordinate(dim: usize, planes: &[usize]) -> Result<Self> {
        let mut b = DMatrix::zeros(dim, 2 * planes.len());
        for (j, &p) in planes.iter().enumerate() {
            if 2 * p + 1 >= dim {
                return Err(Error::InvalidArgument(format!("plane {p} out of range")));
            }
            b[(2 * p, 2 * j)] = 1.0;
            b[(2 * p + 1, 2 * j + 1)] = 1.0;
        }
        Self::new(b)
    }

    pub fn ambient_dim(&self) -> usize {
        self.basis.nrows()
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Half the dimension, k.
    pub fn k(&self) -> usize {
        self.basis.ncols() / 2
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    /// Orthonormal basis oriented so that Pf(Ω_B) > 0.
    pub fn orthonormal_basis(&self) -> DMatrix<f64> {
        let mut q = linalg::column_basis(&self.basis, 1e-10);
        if q.ncols() >= 2 && pfaffian(&symplectic_gram(&q)) < 0.0 {
            let c = -q.column(0).into_owned();
            q.set_column(0, &c);
        }
        q
    }

    /// Basis (e₁, f₁, …, e_k, f_k) with ω₀(e_i, f_j) = δ_ij and all other pairs zero.
    pub fn darboux_basis(&self) -> DMatrix<f64> {
        let b = self.orthonormal_basis();
        let mut pool: Vec<DVector<f64>> = b.column_iter().map(|c| c.into_owned()).collect();
        let mut out = Vec::with_capacity(pool.len());
        while !pool.is_empty() {
            let e = pool.remove(0);
            // partner with the largest pairing
            let (idx, _) = pool
                .iter()
                .enumerate()
                .map(|(i, v)| (i, omega_raw(e.as_slice(), v.as_slice()).abs()))
                .fold((0, -1.0), |acc, x| if x.1 > acc.1 { x } else { acc });
            let f0 = pool.remove(idx);
            let w = omega_raw(e.as_slice(), f0.as_slice());
            let f = f0 / w;
            for v in pool.iter_mut() {
                // v ← v − ω(v, f) e + ω(v, e) f kills pairings with e and f
                let a = omega_raw(v.as_slice(), f.as_slice());
                let c = omega_raw(v.as_slice(), e.as_slice());
                *v = &*v - &e * a + &f * c;
            }
            out.push(e);
            out.push(f);
        }
        linalg::from_columns(self.ambient_dim(), &out)
    }

    /// Image under a linear map.
    pub fn mapped(&self, l: &SymplecticMatrix) -> Result<Self> {
        Self::new(l.matrix() * &self.basis)
    }

    /// Euclidean-orthogonal projector onto V.
    pub fn orthogonal_projector(&self) -> DMatrix<f64> {
        let q = linalg::column_basis(&self.basis, 1e-10);
        &q * q.transpose()
    }
}

/// V^ω = {w : ω₀(w, v) = 0 ∀ v ∈ V} = (JV)^⊥.
pub fn symplectic_complement(v: &SymplecticSubspace) -> Result<SymplecticSubspace> {
    let om = omega_matrix(v.ambient_dim());
    // bᵀΩw = (Ωᵀb)ᵀw, so V^ω is the orthogonal complement of ΩᵀB = JB.
    let c = linalg::orthogonal_complement(&(om.transpose() * v.basis()));
    SymplecticSubspace::new(c)
}

/// Projection onto V along V^ω.
#[derive(Clone, Debug)]
pub struct SymplecticProjector {
    matrix: DMatrix<f64>,
    target: SymplecticSubspace,
    kernel: SymplecticSubspace,
}

impl SymplecticProjector {
    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn target(&self) -> &SymplecticSubspace {
        &self.target
    }

    pub fn kernel(&self) -> &SymplecticSubspace {
        &self.kernel
    }

    pub fn apply(&self, z: &DVector<f64>) -> DVector<f64> {
        &self.matrix * z
    }
}

/// Assembled by solving z = Ba + Cb for the block basis [B | C] of V ⊕ V^ω.
pub fn symplectic_projector(v: &SymplecticSubspace) -> Result<SymplecticProjector> {
    let kernel = symplectic_complement(v)?;
    let dim = v.ambient_dim();
    let (b, c) = (v.basis(), kernel.basis());
    let mut full = DMatrix::zeros(dim, dim);
    full.view_mut((0, 0), (dim, b.ncols())).copy_from(b);
    full.view_mut((0, b.ncols()), (dim, c.ncols())).copy_from(c);
    let inv = full.lu().try_inverse().ok_or(Error::DegenerateSubspace { det: 0.0 })?;
    let matrix = b * inv.rows(0, b.ncols());
    Ok(SymplecticProjector {
        matrix,
        target: v.clone(),
        kernel,
    })
}

/// ω₀^k(u₁, …, u_{2k}) = k!·Pf[ω₀(u_i, u_j)].
pub fn omega_power(vs: &[DVector<f64>]) -> Result<f64> {
    let dim = vs.first().map(|v| v.len()).unwrap_or(0);
    for v in vs {
        check_dim(dim, v.len())?;
    }
    if vs.len() % 2 != 0 || vs.len() > dim {
        return Err(Error::InvalidArgument(format!(
            "omega_power needs 2k ≤ 2n vectors, got {}",
            vs.len()
        )));
    }
    let k = vs.len() / 2;
    let g = symplectic_gram(&linalg::from_columns(dim, vs));
    Ok(factorial(k) * pfaffian(&g))
}

/// |u₁ ∧ … ∧ u_m| = √det(UᵀU).
pub fn gram_volume(vs: &[DVector<f64>]) -> f64 {
    let dim = vs.first().map(|v| v.len()).unwrap_or(0);
    let u = linalg::from_columns(dim, vs);
    (u.transpose() * &u).determinant().max(0.0).sqrt()
}

pub fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// ∫_{P L(B₁)} ω₀^k|_V = π^k · |Pf(Ω_B)| · √det(M Mᵀ), M = BᵀPL.
pub fn linear_shadow_volume(l: &SymplecticMatrix, v: &SymplecticSubspace) -> Result<f64> {
    check_dim(l.dim(), v.ambient_dim())?;
    let defect = l.defect();
    if defect > TOL_SYMP {
        return Err(Error::NotSymplectic { defect });
    }
    let p = symplectic_projector(v)?;
    Ok(shadow_volume_in_basis(l, &p, &v.orthonormal_basis()))
}

/// The closed form with a caller-chosen orthonormal basis of V.
pub fn shadow_volume_in_basis(
    l: &SymplecticMatrix,
    p: &SymplecticProjector,
    b: &DMatrix<f64>,
) -> f64 {
    let k = b.ncols() / 2;
    let m = b.transpose() * p.matrix() * l.matrix();
    let pf = pfaffian(&symplectic_gram(b)).abs();
    PI.powi(k as i32) * pf * (&m * m.transpose()).determinant().max(0.0).sqrt()
}

/// ‖(I − Q) J Q‖_op, Q the orthogonal projector onto L⁻¹V.
pub fn j_invariance_defect(l: &SymplecticMatrix, v: &SymplecticSubspace) -> Result<f64> {
    check_dim(l.dim(), v.ambient_dim())?;
    let pre = l.inverse().matrix() * v.basis();
    let q = linalg::column_basis(&pre, 1e-10);
    let qq = &q * q.transpose();
    let dim = l.dim();
    let id = DMatrix::<f64>::identity(dim, dim);
    let r = (id - &qq) * complex_structure(dim) * &qq;
    Ok(linalg::op_norm(&r))
}

/// Random generators: exactly symplectic by construction.
pub mod random {
    use super::*;

    fn random_symmetric<R: Rng + ?Sized>(n: usize, scale: f64, rng: &mut R) -> DMatrix<f64> {
        let mut s = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in i..n {
                let v = scale * (2.0 * rng.random::<f64>() - 1.0);
                s[(i, j)] = v;
                s[(j, i)] = v;
            }
        }
        s
    }

    /// Random unitary (J-commuting orthogonal) matrix from plane rotations and mixes.
    pub fn random_unitary<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> SymplecticMatrix {
        let n = dim / 2;
        let mut u = SymplecticMatrix::identity(dim);
        for _ in 0..2 {
            for a in 0..n {
                u = SymplecticMatrix::plane_rotation(dim, a, 2.0 * PI * rng.random::<f64>())
                    .compose(&u);
                for b in (a + 1)..n {
                    u = SymplecticMatrix::unitary_mix(dim, a, b, 2.0 * PI * rng.random::<f64>())
                        .compose(&u);
                }
            }
        }
        u
    }

    /// Product of `shears` alternating position/momentum shears with entries in
    /// [−scale, scale], interleaved with random unitary rotations.
    pub fn random_symplectic<R: Rng + ?Sized>(
        dim: usize,
        shears: usize,
        scale: f64,
        rng: &mut R,
    ) -> SymplecticMatrix {
        let n = dim / 2;
        let mut l = random_unitary(dim, rng);
        for i in 0..shears {
            let s = random_symmetric(n, scale, rng);
            let f = if i % 2 == 0 {
                SymplecticMatrix::shear_positions(&s)
            } else {
                SymplecticMatrix::shear_momenta(&s)
            }
            .expect("symmetric shear is symplectic");
            l = f.compose(&l);
            if i % 2 == 1 {
                l = random_unitary(dim, rng).compose(&l);
            }
        }
        l
    }

    /// Image of the first k coordinate planes under a random symplectic map.
    pub fn random_subspace<R: Rng + ?Sized>(dim: usize, k: usize, rng: &mut R) -> SymplecticSubspace {
        let planes: Vec<usize> = (0..k).collect();
        let base = SymplecticSubspace::coordinate(dim, &planes).expect("coordinate subspace");
        let l = random_symplectic(dim, 3, 1.0, rng);
        base.mapped(&l).expect("symplectic image of a symplectic subspace")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn dv(v: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(v)
    }

    #[test]
    fn omega_examples() {
        assert_eq!(omega_eval(&dv(&[1., 0., 0., 0.]), &dv(&[0., 1., 0., 0.])).unwrap(), 1.0);
        assert_eq!(omega_eval(&dv(&[1., 2., 3., 4.]), &dv(&[0., 1., 1., 0.])).unwrap(), -3.0);
        assert!(omega_eval(&dv(&[1., 2.]), &dv(&[1., 2., 3., 4.])).is_err());
    }

    #[test]
    fn j_relates_to_omega() {
        let u = dv(&[0.3, -1.2, 0.7, 2.0]);
        let v = dv(&[1.1, 0.4, -0.5, 0.9]);
        let lhs = omega_eval(&u, &v).unwrap();
        assert!((lhs - apply_j(&u).dot(&v)).abs() < 1e-15);
        let j = complex_structure(4);
        assert!(linalg::max_abs(&(&j * &j + DMatrix::identity(4, 4))) == 0.0);
    }

    #[test]
    fn complement_and_projector_oracle() {
        // V = span(e_x1, e_y1 + e_x2)
        let v = SymplecticSubspace::from_vectors(&[dv(&[1., 0., 0., 0.]), dv(&[0., 1., 1., 0.])])
            .unwrap();
        let c = symplectic_complement(&v).unwrap();
        // expected span((1,0,0,1), (0,0,1,0))
        let expected = SymplecticSubspace::from_vectors(&[dv(&[1., 0., 0., 1.]), dv(&[0., 0., 1., 0.])])
            .unwrap();
        let pc = c.orthogonal_projector();
        let pe = expected.orthogonal_projector();
        assert!(linalg::max_abs(&(pc - pe)) < 1e-12);

        let p = symplectic_projector(&v).unwrap();
        let z = dv(&[0.7, -1.3, 2.1, 0.4]);
        let pz = p.apply(&z);
        let want = dv(&[z[0] - z[3], z[1], z[1], 0.0]);
        assert!((pz - want).norm() < 1e-12);
    }

    #[test]
    fn complement_of_full_space_is_zero() {
        let v = SymplecticSubspace::coordinate(4, &[0, 1]).unwrap();
        assert_eq!(symplectic_complement(&v).unwrap().dim(), 0);
    }

    #[test]
    fn degenerate_subspace_rejected() {
        let v = SymplecticSubspace::from_vectors(&[dv(&[1., 0., 0., 0.]), dv(&[0., 0., 1., 0.])]);
        assert!(matches!(v, Err(Error::DegenerateSubspace { .. })));
    }

    #[test]
    fn omega_power_standard_frame() {
        let e = |i: usize| {
            let mut v = DVector::zeros(4);
            v[i] = 1.0;
            v
        };
        assert_eq!(omega_power(&[e(0), e(1), e(2), e(3)]).unwrap(), 2.0);
        assert_eq!(omega_power(&[e(0), e(0), e(2), e(3)]).unwrap(), 0.0);
    }

    #[test]
    fn shadow_volume_examples() {
        let v = SymplecticSubspace::coordinate(6, &[0, 1]).unwrap();
        let vol = linear_shadow_volume(&SymplecticMatrix::identity(6), &v).unwrap();
        assert!((vol - PI * PI).abs() < 1e-12);

        let l = SymplecticMatrix::stretch(&[2.0, 1.0]).unwrap();
        let v1 = SymplecticSubspace::coordinate(4, &[0]).unwrap();
        assert!((linear_shadow_volume(&l, &v1).unwrap() - PI).abs() < 1e-12);
        assert!(j_invariance_defect(&l, &v1).unwrap() < 1e-14);
    }

    #[test]
    fn j_defect_examples() {
        let v = SymplecticSubspace::coordinate(4, &[0]).unwrap();
        let swap = SymplecticMatrix::plane_swap(4, 0, 1);
        assert!(swap.defect() == 0.0);
        assert!(j_invariance_defect(&swap, &v).unwrap() < 1e-14);
        // (x1, y1, x2, y2) ↦ (x1, y1 + x2, x2, y2 + x1)
        let s = DMatrix::from_row_slice(2, 2, &[0., 1., 1., 0.]);
        let shear = SymplecticMatrix::shear_positions(&s).unwrap();
        assert!(j_invariance_defect(&shear, &v).unwrap() > 0.1);
        assert!(linear_shadow_volume(&shear, &v).unwrap() > PI + 1e-3);
    }

    #[test]
    fn non_symplectic_rejected() {
        let mut m = DMatrix::identity(4, 4);
        m[(0, 0)] = 2.0;
        assert!(matches!(SymplecticMatrix::new(m), Err(Error::NotSymplectic { .. })));
    }

    #[test]
    fn random_generators_are_symplectic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let l = random::random_symplectic(6, 5, 1.0, &mut rng);
            assert!(l.defect() < 1e-12);
            let li = l.inverse();
            assert!(linalg::max_abs(&(l.matrix() * li.matrix() - DMatrix::identity(6, 6))) < 1e-10);
        }
    }

    #[test]
    fn darboux_basis_is_standard() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let v = random::random_subspace(6, 2, &mut rng);
        let d = v.darboux_basis();
        let g = symplectic_gram(&d);
        assert!(linalg::max_abs(&(g - omega_matrix(4))) < 1e-10);
    }
}
