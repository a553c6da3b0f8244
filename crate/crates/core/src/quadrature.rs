//! Product rules on S^{2k−1} ⊂ ℂ^k in Hopf-type coordinates
//! z_j = r_j e^{iξ_j}, with (r_j) on the positive orthant of S^{k−1}.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, gauss_legendre};
use crate::symplectic::factorial;

#[derive(Clone, Debug)]
pub struct SphereNode {
    pub point: DVector<f64>,
    pub weight: f64,
    /// 2k × (2k−1) orthonormal tangent frame with det[z, frame] > 0.
    pub frame: DMatrix<f64>,
}

#[derive(Clone, Debug)]
pub struct QuadratureRule {
    k: usize,
    order: usize,
    exactness_degree: usize,
    nodes: Vec<SphereNode>,
}

/// |S^{2k−1}| = 2π^k/(k−1)!.
pub fn sphere_area(k: usize) -> f64 {
    2.0 * PI.powi(k as i32) / factorial(k - 1)
}

/// Γ(m/2) for a positive integer m.
pub fn gamma_half(m: u32) -> f64 {
    let (mut g, mut x) = if m % 2 == 0 { (1.0, 1.0) } else { (PI.sqrt(), 0.5) };
    let target = m as f64 / 2.0;
    while x < target - 0.25 {
        g *= x;
        x += 1.0;
    }
    g
}

/// ∫_{S^{d−1}} x^α dσ for the unit sphere in ℝ^d.
pub fn sphere_monomial_integral(exp: &[u32]) -> f64 {
    if exp.iter().any(|e| e % 2 == 1) {
        return 0.0;
    }
    let num: f64 = exp.iter().map(|&e| gamma_half(e + 1)).product();
    let total: u32 = exp.iter().map(|&e| e + 1).sum();
    2.0 * num / gamma_half(total)
}

impl QuadratureRule {
    /// Rule of the given order on S^{2k−1}. k = 1: `order`-point trapezoid on the
    /// circle. k ≥ 2: order/2 uniform nodes per phase, order/4 Gauss–Legendre per latitude;
    /// exact for polynomials of degree below order/2.
    pub fn sphere(k: usize, order: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidArgument("sphere dimension must be positive".into()));
        }
        if order < 4 || order % 4 != 0 {
            return Err(Error::InvalidArgument(format!(
                "quadrature order {order} must be a positive multiple of 4"
            )));
        }
        let (nphase, nlat) = if k == 1 { (order, 0) } else { (order / 2, order / 4) };
        let (gx, gw) = gauss_legendre(nlat);
        let lat: Vec<(f64, f64)> = gx
            .iter()
            .zip(&gw)
            .map(|(x, w)| (0.5 * (x + 1.0), 0.5 * w))
            .collect();
        let dphase = 2.0 * PI / nphase as f64;

        let nl = k - 1;
        let total_lat = lat.len().pow(nl as u32);
        let total_phase = nphase.pow(k as u32);
        let mut nodes = Vec::with_capacity(total_lat * total_phase);
        for li in 0..total_lat {
            let mut eta = vec![0.0; nl];
            let mut wl = 1.0;
            let mut idx = li;
            for i in 0..nl {
                // Gauss–Legendre in v = sin²η, which turns the latitude density
                // into a polynomial weight
                let (v, w) = lat[idx % lat.len()];
                idx /= lat.len();
                let e = v.sqrt().asin();
                eta[i] = e;
                let (se, ce) = e.sin_cos();
                wl *= w * se.powi((nl - 1 - i) as i32) / (2.0 * se * ce);
            }
            let (r, dr) = radii(&eta, k);
            let wr: f64 = r.iter().product();
            for pi in 0..total_phase {
                let mut xi = vec![0.0; k];
                let mut idx = pi;
                for x in xi.iter_mut() {
                    *x = dphase * (idx % nphase) as f64;
                    idx /= nphase;
                }
                nodes.push(make_node(&r, &dr, &xi, wl * wr * dphase.powi(k as i32)));
            }
        }
        let exactness_degree = if k == 1 { order - 1 } else { order / 2 - 1 };
        Ok(Self {
            k,
            order,
            exactness_degree,
            nodes,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn exactness_degree(&self) -> usize {
        self.exactness_degree
    }

    pub fn nodes(&self) -> &[SphereNode] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(&DVector<f64>) -> f64) -> f64 {
        self.nodes.iter().map(|n| n.weight * f(&n.point)).sum()
    }
}

/// Radii r_j and ∂r_j/∂η_i for the nested latitude angles.
fn radii(eta: &[f64], k: usize) -> (Vec<f64>, Vec<Vec<f64>>) {
    let nl = eta.len();
    let factor = |j: usize, i: usize, deriv: bool| -> f64 {
        // contribution of η_i to r_j
        if i < j {
            if deriv { eta[i].cos() } else { eta[i].sin() }
        } else if i == j && j < nl {
            if deriv { -eta[i].sin() } else { eta[i].cos() }
        } else if deriv {
            0.0
        } else {
            1.0
        }
    };
    let r: Vec<f64> = (0..k).map(|j| (0..nl).map(|i| factor(j, i, false)).product()).collect();
    let dr: Vec<Vec<f64>> = (0..nl)
        .map(|d| {
            (0..k)
                .map(|j| (0..nl).map(|i| factor(j, i, i == d)).product())
                .collect()
        })
        .collect();
    (r, dr)
}

fn make_node(r: &[f64], dr: &[Vec<f64>], xi: &[f64], weight: f64) -> SphereNode {
    let k = r.len();
    let mut point = DVector::zeros(2 * k);
    let (mut c, mut s) = (vec![0.0; k], vec![0.0; k]);
    for j in 0..k {
        let (sj, cj) = xi[j].sin_cos();
        c[j] = cj;
        s[j] = sj;
        point[2 * j] = r[j] * cj;
        point[2 * j + 1] = r[j] * sj;
    }
    let mut tangents = Vec::with_capacity(2 * k - 1);
    for d in dr {
        let mut v = DVector::zeros(2 * k);
        for j in 0..k {
            v[2 * j] = d[j] * c[j];
            v[2 * j + 1] = d[j] * s[j];
        }
        tangents.push(v);
    }
    for j in 0..k {
        let mut v = DVector::zeros(2 * k);
        // direction i z_j; at r_j = 0 this is degenerate, so use the unit phase direction
        v[2 * j] = -s[j];
        v[2 * j + 1] = c[j];
        tangents.push(v);
    }
    let mut q = linalg::orthonormalize(&tangents, 1e-12);
    // nodes are interior in latitude, so all 2k−1 directions survive
    debug_assert_eq!(q.len(), 2 * k - 1);
    let mut full = DMatrix::zeros(2 * k, 2 * k);
    full.set_column(0, &point);
    for (i, v) in q.iter().enumerate() {
        full.set_column(i + 1, v);
    }
    if full.determinant() < 0.0 {
        q[0] = -&q[0];
    }
    SphereNode {
        point,
        weight,
        frame: linalg::from_columns(2 * k, &q),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::poly::monomials_of_degree;

    #[test]
    fn weights_sum_to_area() {
        for (k, q) in [(1, 24), (2, 24), (2, 48), (3, 16)] {
            let rule = QuadratureRule::sphere(k, q).unwrap();
            let s: f64 = rule.nodes().iter().map(|n| n.weight).sum();
            assert!((s - sphere_area(k)).abs() < 1e-10 * sphere_area(k), "k={k} q={q}");
            assert!(rule.nodes().iter().all(|n| n.weight > 0.0));
        }
        assert!((sphere_area(2) - 2.0 * PI * PI).abs() < 1e-14);
    }

    #[test]
    fn frames_are_tangent_orthonormal_and_oriented() {
        let rule = QuadratureRule::sphere(2, 16).unwrap();
        for n in rule.nodes() {
            assert!((n.point.norm() - 1.0).abs() < 1e-14);
            let f = &n.frame;
            assert!(linalg::max_abs(&(f.transpose() * f - DMatrix::identity(3, 3))) < 1e-13);
            assert!((f.transpose() * &n.point).norm() < 1e-13);
            let mut full = DMatrix::zeros(4, 4);
            full.set_column(0, &n.point);
            full.view_mut((0, 1), (4, 3)).copy_from(f);
            assert!(full.determinant() > 0.0);
        }
    }

    #[test]
    fn monomials_integrated_exactly() {
        // oracle: Folland's Gamma-function formula
        let rule = QuadratureRule::sphere(2, 24).unwrap();
        for d in 0..=8u32 {
            for e in monomials_of_degree(4, d) {
                let num = rule.integrate(|x| {
                    e.iter().enumerate().map(|(i, &p)| x[i].powi(p as i32)).product()
                });
                let exact = sphere_monomial_integral(&e);
                assert!((num - exact).abs() < 1e-12, "{e:?}: {num} vs {exact}");
            }
        }
    }

    #[test]
    fn gamma_values() {
        assert!((gamma_half(1) - PI.sqrt()).abs() < 1e-15);
        assert_eq!(gamma_half(2), 1.0);
        assert_eq!(gamma_half(8), 6.0);
        assert!((gamma_half(5) - 0.75 * PI.sqrt()).abs() < 1e-15);
        // |S^3| from the monomial formula with α = 0
        assert!((sphere_monomial_integral(&[0, 0, 0, 0]) - 2.0 * PI * PI).abs() < 1e-13);
    }
}
