//! Polynomial functions on S^{2m−1} ⊂ ℂ^m and their phase-Fourier structure
//! under the circle action x ↦ e^{iθ}x.

use std::collections::BTreeMap;

use nalgebra::{Complex, DVector};

use crate::error::{check_dim, Error, Result};
use crate::poly::{binomial, Polynomial, Term};
use crate::quadrature::{sphere_area, sphere_monomial_integral, QuadratureRule};

pub const MAX_DEGREE: u32 = 6;

/// Coefficient map keyed by [α | β] for z^α z̄^β.
type ComplexMap = BTreeMap<Vec<u32>, Complex<f64>>;

/// Real polynomial in the ambient coordinates (x₁, y₁, …, x_m, y_m), read on the unit sphere.
#[derive(Clone, Debug, PartialEq)]
pub struct SphereFunction {
    m: usize,
    poly: Polynomial,
}

#[derive(Clone, Debug)]
pub struct Extrema {
    pub min: f64,
    pub argmin: DVector<f64>,
    pub max: f64,
    pub argmax: DVector<f64>,
}

impl SphereFunction {
    pub fn new(m: usize, poly: Polynomial) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidArgument("sphere needs m ≥ 1".into()));
        }
        check_dim(2 * m, poly.nvars())?;
        if poly.degree() > MAX_DEGREE {
            return Err(Error::InvalidArgument(format!(
                "sphere function degree {} exceeds {MAX_DEGREE}",
                poly.degree()
            )));
        }
        Ok(Self { m, poly })
    }

    pub(crate) fn from_poly_unchecked(m: usize, poly: Polynomial) -> Self {
        Self { m, poly }
    }

    pub fn constant(m: usize, c: f64) -> Self {
        Self {
            m,
            poly: Polynomial::constant(2 * m, c),
        }
    }

    pub fn zero(m: usize) -> Self {
        Self {
            m,
            poly: Polynomial::zero(2 * m),
        }
    }

    /// Re Σ c·z^α z̄^β from (c, α, β) triples.
    pub fn from_complex(m: usize, terms: &[(Complex<f64>, Vec<u32>, Vec<u32>)]) -> Result<Self> {
        let mut map = ComplexMap::new();
        for (c, a, b) in terms {
            check_dim(m, a.len())?;
            check_dim(m, b.len())?;
            let key: Vec<u32> = a.iter().chain(b).copied().collect();
            *map.entry(key).or_insert(Complex::new(0.0, 0.0)) += c;
        }
        Self::new(m, real_part(m, &map))
    }

    /// |z_j|².
    pub fn abs2(m: usize, j: usize) -> Self {
        let square = |i: usize| {
            let mut exp = vec![0; 2 * m];
            exp[i] = 2;
            Term { coef: 1.0, exp }
        };
        let poly = Polynomial::new(2 * m, vec![square(2 * j), square(2 * j + 1)]).expect("valid monomials");
        Self { m, poly }
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn poly(&self) -> &Polynomial {
        &self.poly
    }

    pub fn degree(&self) -> u32 {
        self.poly.degree()
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        self.poly.eval(x)
    }

    pub fn add(&self, other: &Self) -> Self {
        Self::from_poly_unchecked(self.m, self.poly.add(&other.poly))
    }

    pub fn sub(&self, other: &Self) -> Self {
        Self::from_poly_unchecked(self.m, self.poly.sub(&other.poly))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::from_poly_unchecked(self.m, self.poly.scale(s))
    }

    /// Coefficients in the (z, z̄) monomial basis.
    pub(crate) fn complex_map(&self) -> ComplexMap {
        let m = self.m;
        let mut out = ComplexMap::new();
        for t in self.poly.terms() {
            // expand each x_j^a y_j^b into z_j^p z̄_j^q, then take the tensor product over j
            let mut partial: Vec<(Vec<u32>, Complex<f64>)> = vec![(vec![0; 2 * m], Complex::new(t.coef, 0.0))];
            for j in 0..m {
                let (a, b) = (t.exp[2 * j], t.exp[2 * j + 1]);
                if a + b == 0 {
                    continue;
                }
                let factor = pair_expansion(a, b);
                let mut next = Vec::with_capacity(partial.len() * factor.len());
                for (key, c) in &partial {
                    for &(p, q, w) in &factor {
                        let mut k = key.clone();
                        k[j] += p;
                        k[m + j] += q;
                        next.push((k, c * w));
                    }
                }
                partial = next;
            }
            for (k, c) in partial {
                *out.entry(k).or_insert(Complex::new(0.0, 0.0)) += c;
            }
        }
        out
    }

    /// Phase frequency |α| − |β| of each (z, z̄) coefficient.
    fn frequency(m: usize, key: &[u32]) -> i64 {
        key[..m].iter().map(|&e| e as i64).sum::<i64>() - key[m..].iter().map(|&e| e as i64).sum::<i64>()
    }

    fn map_frequencies(&self, f: impl Fn(i64, Complex<f64>) -> Complex<f64>) -> Self {
        let mut map = self.complex_map();
        for (k, c) in map.iter_mut() {
            *c = f(Self::frequency(self.m, k), *c);
        }
        Self::from_poly_unchecked(self.m, real_part(self.m, &map))
    }

    /// Mean over the circles x ↦ e^{iθ}x: the frequency-zero part.
    pub fn reeb_average(&self) -> Self {
        self.map_frequencies(|q, c| if q == 0 { c } else { Complex::new(0.0, 0.0) })
    }

    /// h with ∂_θ h(e^{iθ}x)|₀ = ρ̄ − ρ and zero fiber mean.
    pub fn cohomological_solve(&self) -> Self {
        // ∂_θ acts on frequency q as multiplication by iq
        self.map_frequencies(|q, c| {
            if q == 0 {
                Complex::new(0.0, 0.0)
            } else {
                -c / Complex::new(0.0, q as f64)
            }
        })
    }

    /// ⟨∇f(x), Jx⟩ on ℝ^{2m}: the derivative along the circle action.
    pub fn phase_derivative(&self, x: &[f64]) -> f64 {
        let g = self.poly.gradient(x);
        (0..self.m).map(|j| g[2 * j + 1] * x[2 * j] - g[2 * j] * x[2 * j + 1]).sum()
    }

    /// ∫_S f dσ, exact.
    pub fn integral(&self) -> f64 {
        self.poly
            .terms()
            .iter()
            .map(|t| t.coef * sphere_monomial_integral(&t.exp))
            .sum()
    }

    pub fn mean(&self) -> f64 {
        self.integral() / sphere_area(self.m)
    }

    /// sup_{x ∈ samples, θ} |f(e^{iθ}x) − f(x)| on a phase grid of `nphase` angles.
    pub fn fiber_defect(&self, samples: &[DVector<f64>], nphase: usize) -> f64 {
        let mut worst: f64 = 0.0;
        for x in samples {
            let f0 = self.eval(x.as_slice());
            for i in 1..nphase {
                let th = 2.0 * std::f64::consts::PI * i as f64 / nphase as f64;
                worst = worst.max((self.eval(rotate_phase(x, th).as_slice()) - f0).abs());
            }
        }
        worst
    }

    /// Global extrema by a sampling grid followed by projected-gradient refinement.
    pub fn extrema(&self) -> Extrema {
        let order = match self.m {
            1 => 64,
            2 => 24,
            _ => 12,
        };
        let rule = QuadratureRule::sphere(self.m, order).expect("valid order");
        let mut vals: Vec<(f64, &DVector<f64>)> = rule
            .nodes()
            .iter()
            .map(|n| (self.eval(n.point.as_slice()), &n.point))
            .collect();
        vals.sort_by(|a, b| a.0.total_cmp(&b.0));
        let refine = |sign: f64, starts: Vec<&DVector<f64>>| -> (f64, DVector<f64>) {
            starts
                .into_iter()
                .map(|s| self.descend(s, sign))
                .fold((f64::INFINITY, DVector::zeros(2 * self.m)), |best, p| {
                    if p.0 < best.0 {
                        p
                    } else {
                        best
                    }
                })
        };
        let lows: Vec<_> = vals.iter().take(4).map(|v| v.1).collect();
        let highs: Vec<_> = vals.iter().rev().take(4).map(|v| v.1).collect();
        let (min, argmin) = refine(1.0, lows);
        let (neg_max, argmax) = refine(-1.0, highs);
        Extrema {
            min,
            argmin,
            max: -neg_max,
            argmax,
        }
    }

    /// Minimizes sign·f on the sphere from x0 by gradient steps with backtracking.
    fn descend(&self, x0: &DVector<f64>, sign: f64) -> (f64, DVector<f64>) {
        let mut x = x0.normalize();
        let mut fx = sign * self.eval(x.as_slice());
        let mut step = 0.5;
        for _ in 0..2000 {
            let g = self.poly.gradient(x.as_slice()) * sign;
            let gt = &g - &x * x.dot(&g);
            let gn = gt.norm();
            if gn < 1e-11 {
                break;
            }
            let mut accepted = false;
            while step > 1e-14 {
                let trial = (&x - &gt * step).normalize();
                let ft = sign * self.eval(trial.as_slice());
                if ft <= fx - 1e-4 * step * gn * gn {
                    x = trial;
                    fx = ft;
                    accepted = true;
                    step *= 2.0;
                    break;
                }
                step *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        (fx, x)
    }
}

/// e^{iθ} applied to every complex coordinate.
pub fn rotate_phase(x: &DVector<f64>, theta: f64) -> DVector<f64> {
    let (s, c) = theta.sin_cos();
    let mut out = x.clone();
    for j in 0..x.len() / 2 {
        let (a, b) = (x[2 * j], x[2 * j + 1]);
        out[2 * j] = c * a - s * b;
        out[2 * j + 1] = s * a + c * b;
    }
    out
}

/// x^a y^b = Σ w·z^p z̄^q with x = (z + z̄)/2, y = (z − z̄)/(2i).
fn pair_expansion(a: u32, b: u32) -> Vec<(u32, u32, Complex<f64>)> {
    let mut out: BTreeMap<(u32, u32), Complex<f64>> = BTreeMap::new();
    let scale = Complex::new(0.5, 0.0).powu(a) * Complex::new(0.0, -0.5).powu(b);
    for p in 0..=a {
        for r in 0..=b {
            let sign = if (b - r) % 2 == 0 { 1.0 } else { -1.0 };
            let w = scale * binomial(a, p) * binomial(b, r) * sign;
            *out.entry((p + r, a - p + b - r)).or_insert(Complex::new(0.0, 0.0)) += w;
        }
    }
    out.into_iter().map(|((p, q), w)| (p, q, w)).collect()
}

/// Re Σ c z^α z̄^β as a real polynomial.
fn real_part(m: usize, map: &ComplexMap) -> Polynomial {
    let mut acc: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
    for (key, c) in map {
        if c.norm() == 0.0 {
            continue;
        }
        let mut partial: Vec<(Vec<u32>, Complex<f64>)> = vec![(vec![0; 2 * m], *c)];
        for j in 0..m {
            let (al, be) = (key[j], key[m + j]);
            if al + be == 0 {
                continue;
            }
            // (x + iy)^α (x − iy)^β
            let mut factor: BTreeMap<(u32, u32), Complex<f64>> = BTreeMap::new();
            for r in 0..=al {
                for s in 0..=be {
                    let w = Complex::new(0.0, 1.0).powu(r)
                        * Complex::new(0.0, -1.0).powu(s)
                        * binomial(al, r)
                        * binomial(be, s);
                    *factor
                        .entry((al - r + be - s, r + s))
                        .or_insert(Complex::new(0.0, 0.0)) += w;
                }
            }
            let mut next = Vec::with_capacity(partial.len() * factor.len());
            for (k, cc) in &partial {
                for (&(ex, ey), w) in &factor {
                    let mut k2 = k.clone();
                    k2[2 * j] += ex;
                    k2[2 * j + 1] += ey;
                    next.push((k2, cc * w));
                }
            }
            partial = next;
        }
        for (k, cc) in partial {
            *acc.entry(k).or_insert(0.0) += cc.re;
        }
    }
    // drop round-off residue of cancelled monomials
    let scale = acc.values().fold(0.0f64, |s, v| s.max(v.abs()));
    acc.retain(|_, v| v.abs() > 1e-15 * scale.max(1.0));
    Polynomial::from_map(2 * m, acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn re_z1_sq() -> SphereFunction {
        SphereFunction::from_complex(2, &[(Complex::new(1.0, 0.0), vec![2, 0], vec![0, 0])]).unwrap()
    }

    #[test]
    fn complex_round_trip() {
        let f = re_z1_sq();
        // Re(z₁²) = x₁² − y₁²
        let x = [0.3, -0.4, 0.5, 0.1];
        assert!((f.eval(&x) - (0.09 - 0.16)).abs() < 1e-15);
        let back = SphereFunction::from_poly_unchecked(2, real_part(2, &f.complex_map()));
        assert!((back.eval(&x) - f.eval(&x)).abs() < 1e-15);
    }

    #[test]
    fn abs2_is_invariant() {
        let f = SphereFunction::abs2(2, 0);
        let avg = f.reeb_average();
        let x = [0.3, -0.4, 0.5, 0.1];
        assert!((avg.eval(&x) - 0.25).abs() < 1e-15);
        assert!(f.cohomological_solve().poly().is_zero());
    }

    #[test]
    fn solve_matches_negative_half_imaginary() {
        let h = re_z1_sq().cohomological_solve();
        // −½ Im(z₁²) = −x₁y₁
        let x = [0.3, -0.4, 0.5, 0.1];
        assert!((h.eval(&x) - (-0.3 * -0.4)).abs() < 1e-15);
    }
}
