//! Families ρ_t = 1 + Σ tⁱρ^{(i)} of multipliers for the round contact form
//! λ_s = ½ω(x,·) on S^{2m−1}, and their contact volumes.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::sphere_fn::SphereFunction;
use crate::embedding::random_unit;
use crate::error::{Error, Result};
use crate::poly::Polynomial;
use crate::quadrature::sphere_monomial_integral;
use crate::symplectic::factorial;

pub const MAX_ORDER: usize = 3;

#[derive(Clone, Debug)]
pub struct ContactMultiplier {
    m: usize,
    coefs: Vec<SphereFunction>,
    t_max: f64,
}

impl ContactMultiplier {
    /// Family with coefficients ρ^{(1)}, …, ρ^{(M)}, positive for |t| ≤ t_max.
    pub fn new(m: usize, coefs: Vec<SphereFunction>, t_max: f64) -> Result<Self> {
        if coefs.len() > MAX_ORDER {
            return Err(Error::InvalidArgument(format!(
                "expansion order {} exceeds {MAX_ORDER}",
                coefs.len()
            )));
        }
        if coefs.iter().any(|c| c.m() != m) {
            return Err(Error::InvalidArgument("coefficients live on different spheres".into()));
        }
        if !(t_max >= 0.0) {
            return Err(Error::InvalidArgument("t range must be non-negative".into()));
        }
        let fam = Self { m, coefs, t_max };
        fam.check_positive()?;
        Ok(fam)
    }

    pub fn trivial(m: usize) -> Self {
        Self {
            m,
            coefs: Vec::new(),
            t_max: f64::INFINITY,
        }
    }

    /// 1 + t·ρ₁.
    pub fn linear(rho1: SphereFunction, t_max: f64) -> Result<Self> {
        Self::new(rho1.m(), vec![rho1], t_max)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn order(&self) -> usize {
        self.coefs.len()
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn coefficients(&self) -> &[SphereFunction] {
        &self.coefs
    }

    /// ρ^{(i)} for i ≥ 1 (zero past the expansion order); ρ^{(0)} = 1.
    pub fn coefficient(&self, i: usize) -> SphereFunction {
        match i {
            0 => SphereFunction::constant(self.m, 1.0),
            _ => self
                .coefs
                .get(i - 1)
                .cloned()
                .unwrap_or_else(|| SphereFunction::zero(self.m)),
        }
    }

    pub fn eval(&self, t: f64, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for c in self.coefs.iter().rev() {
            acc = (acc + c.eval(x)) * t;
        }
        1.0 + acc
    }

    pub fn at(&self, t: f64) -> SphereFunction {
        let mut p = Polynomial::constant(2 * self.m, 1.0);
        for (i, c) in self.coefs.iter().enumerate() {
            p = p.add(&c.poly().scale(t.powi(i as i32 + 1)));
        }
        SphereFunction::from_poly_unchecked(self.m, p)
    }

    fn check_positive(&self) -> Result<()> {
        if self.coefs.is_empty() {
            return Ok(());
        }
        let t = self.t_max;
        // |ρ^{(i)}| ≤ Σ|coefficients| on the unit sphere
        let bound: f64 = self
            .coefs
            .iter()
            .enumerate()
            .map(|(i, c)| t.powi(i as i32 + 1) * c.poly().coefficient_l1())
            .sum();
        if bound < 1.0 {
            return Ok(());
        }
        let grid = 8;
        let mut worst = f64::INFINITY;
        for j in 0..=2 * grid {
            let tj = t * (j as f64 - grid as f64) / grid as f64;
            worst = worst.min(self.at(tj).extrema().min);
        }
        if worst > 0.0 {
            Ok(())
        } else {
            Err(Error::NonPositiveMultiplier { min: worst })
        }
    }

    /// Coefficients v_j of the volume polynomial Vol(ρ_t) = Σ v_j t^j.
    pub fn volume_series(&self) -> Vec<f64> {
        let series: Vec<Polynomial> = (0..=self.order()).map(|i| self.coefficient(i).poly().clone()).collect();
        let mut power = vec![Polynomial::constant(2 * self.m, 1.0)];
        for _ in 0..self.m {
            let mut next = vec![Polynomial::zero(2 * self.m); power.len() + series.len() - 1];
            for (i, a) in power.iter().enumerate() {
                for (j, b) in series.iter().enumerate() {
                    if !a.is_zero() && !b.is_zero() {
                        next[i + j] = next[i + j].add(&a.mul(b));
                    }
                }
            }
            power = next;
        }
        let c = volume_constant(self.m);
        power.iter().map(|p| c * poly_integral(p)).collect()
    }

    /// Contact volume of ρ_t λ_s.
    pub fn volume(&self, t: f64) -> f64 {
        contact_volume(&self.at(t)).expect("same sphere")
    }

    /// Family N(t)ρ_t with N the truncated series making the volume constant through order M.
    pub fn normalized(&self) -> Result<Self> {
        let v = self.volume_series();
        let n = power_series(&v, -1.0 / self.m as f64, self.order());
        let mut coefs = Vec::with_capacity(self.order());
        for j in 1..=self.order() {
            let mut p = Polynomial::zero(2 * self.m);
            for i in 0..=j {
                p = p.add(&self.coefficient(i).poly().scale(n[j - i]));
            }
            coefs.push(SphereFunction::from_poly_unchecked(self.m, p));
        }
        Self::new(self.m, coefs, self.t_max)
    }

    /// Largest |v_j|/v₀ for 1 ≤ j ≤ M.
    pub fn volume_drift(&self) -> f64 {
        let v = self.volume_series();
        v.iter()
            .skip(1)
            .take(self.order())
            .fold(0.0, |a, x| a.max((x / v[0]).abs()))
    }

    /// (Vol₀/Vol_t)^{1/m}: the exact scalar putting ρ_t λ_s at the volume of t = 0.
    pub fn volume_rescaling(&self, t: f64) -> Result<f64> {
        let min = self.at(t).extrema().min;
        if !(min > 0.0) {
            return Err(Error::NonPositiveMultiplier { min });
        }
        Ok((self.volume(0.0) / self.volume(t)).powf(1.0 / self.m as f64))
    }

    /// Largest fiber-invariance defect among the given orders, sampled.
    pub fn invariance_defect(&self, orders: std::ops::RangeInclusive<usize>) -> f64 {
        let samples = sample_points(self.m, 64, 0x5eed);
        orders
            .map(|i| {
                let c = self.coefficient(i);
                let avg = c.reeb_average();
                samples
                    .iter()
                    .map(|x| (c.eval(x.as_slice()) - avg.eval(x.as_slice())).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }
}

/// (m−1)!/2: density of λ_s∧(dλ_s)^{m−1} against dσ.
fn volume_constant(m: usize) -> f64 {
    factorial(m - 1) / 2.0
}

fn poly_integral(p: &Polynomial) -> f64 {
    p.terms()
        .iter()
        .map(|t| t.coef * sphere_monomial_integral(&t.exp))
        .sum()
}

/// ∫_S ρ^m λ_s∧(dλ_s)^{m−1}; π^m for ρ ≡ 1.
pub fn contact_volume(rho: &SphereFunction) -> Result<f64> {
    let m = rho.m();
    Ok(volume_constant(m) * poly_integral(&rho.poly().pow(m as u32)))
}

/// Vol(ρ_t λ_s)^{−1/m}: the scalar giving unit contact volume.
pub fn constant_volume_normalizer(family: &ContactMultiplier, t: f64) -> Result<f64> {
    if t.abs() > family.t_max() {
        return Err(Error::InvalidArgument(format!(
            "t = {t} outside the declared range ±{}",
            family.t_max()
        )));
    }
    let rho = family.at(t);
    let min = rho.extrema().min;
    if !(min > 0.0) {
        return Err(Error::NonPositiveMultiplier { min });
    }
    Ok(contact_volume(&rho)?.powf(-1.0 / family.m() as f64))
}

/// Taylor coefficients through `order` of (s(t)/s₀)^γ for s = Σ a_j t^j, s₀ > 0.
fn power_series(a: &[f64], gamma: f64, order: usize) -> Vec<f64> {
    let a: Vec<f64> = (0..=order).map(|j| a.get(j).copied().unwrap_or(0.0) / a[0]).collect();
    let mut f = vec![1.0; order + 1];
    for n in 1..=order {
        let mut acc = 0.0;
        for j in 1..=n {
            acc += ((gamma + 1.0) * j as f64 - n as f64) * a[j] * f[n - j];
        }
        f[n] = acc / n as f64;
    }
    f
}

/// Deterministic uniform points on S^{2m−1}.
pub fn sample_points(m: usize, count: usize, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_unit(2 * m, &mut rng)).collect()
}
