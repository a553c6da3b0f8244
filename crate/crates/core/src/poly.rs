//! Sparse real polynomials in a fixed number of variables.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};

/// One monomial c·∏ x_i^{e_i}.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Term {
    pub coef: f64,
    pub exp: Vec<u32>,
}

impl Term {
    pub fn degree(&self) -> u32 {
        self.exp.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Polynomial {
    nvars: usize,
    terms: Vec<Term>,
    max_exp: u32,
}

impl Polynomial {
    pub fn zero(nvars: usize) -> Self {
        Self {
            nvars,
            terms: Vec::new(),
            max_exp: 0,
        }
    }

    pub fn constant(nvars: usize, c: f64) -> Self {
        Self::from_map(nvars, BTreeMap::from([(vec![0; nvars], c)]))
    }

    /// The coordinate function x_i.
    pub fn variable(nvars: usize, i: usize) -> Self {
        let mut e = vec![0; nvars];
        e[i] = 1;
        Self::from_map(nvars, BTreeMap::from([(e, 1.0)]))
    }

    pub fn new(nvars: usize, terms: Vec<Term>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for t in terms {
            check_dim(nvars, t.exp.len())?;
            if !t.coef.is_finite() {
                return Err(Error::InvalidArgument("non-finite coefficient".into()));
            }
            *map.entry(t.exp).or_insert(0.0) += t.coef;
        }
        Ok(Self::from_map(nvars, map))
    }

    pub(crate) fn from_map(nvars: usize, map: BTreeMap<Vec<u32>, f64>) -> Self {
        let terms: Vec<Term> = map
            .into_iter()
            .filter(|(_, c)| *c != 0.0)
            .map(|(exp, coef)| Term { coef, exp })
            .collect();
        let max_exp = terms
            .iter()
            .flat_map(|t| t.exp.iter().copied())
            .max()
            .unwrap_or(0);
        Self {
            nvars,
            terms,
            max_exp,
        }
    }

    pub(crate) fn to_map(&self) -> BTreeMap<Vec<u32>, f64> {
        self.terms.iter().map(|t| (t.exp.clone(), t.coef)).collect()
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(Term::degree).max().unwrap_or(0)
    }

    /// Sum of absolute coefficients: a bound for |p| on the unit sphere.
    pub fn coefficient_l1(&self) -> f64 {
        self.terms.iter().map(|t| t.coef.abs()).sum()
    }

    /// Runs `f` on the table x_i^e (row stride max_exp + 1), kept on the stack when small.
    fn with_powers<R>(&self, x: &[f64], f: impl FnOnce(&[f64], usize) -> R) -> R {
        let m = self.max_exp as usize + 1;
        let len = self.nvars * m;
        let fill = |table: &mut [f64]| {
            for i in 0..self.nvars {
                table[i * m] = 1.0;
                for e in 1..m {
                    table[i * m + e] = table[i * m + e - 1] * x[i];
                }
            }
        };
        if len <= 64 {
            let mut buf = [0.0; 64];
            fill(&mut buf[..len]);
            f(&buf[..len], m)
        } else {
            let mut buf = vec![0.0; len];
            fill(&mut buf);
            f(&buf, m)
        }
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), self.nvars);
        if self.terms.is_empty() {
            return 0.0;
        }
        self.with_powers(x, |table, m| {
            self.terms
                .iter()
                .map(|t| {
                    t.exp
                        .iter()
                        .enumerate()
                        .fold(t.coef, |acc, (i, &e)| acc * table[i * m + e as usize])
                })
                .sum()
        })
    }

    fn gradient_into(&self, table: &[f64], m: usize, g: &mut DVector<f64>) {
        for t in &self.terms {
            for j in 0..self.nvars {
                let ej = t.exp[j];
                if ej == 0 {
                    continue;
                }
                let mut v = t.coef * ej as f64;
                for (i, &e) in t.exp.iter().enumerate() {
                    let p = if i == j { e - 1 } else { e };
                    v *= table[i * m + p as usize];
                }
                g[j] += v;
            }
        }
    }

    fn hessian_into(&self, table: &[f64], m: usize, h: &mut DMatrix<f64>) {
        let n = self.nvars;
        for t in &self.terms {
            for a in 0..n {
                let ea = t.exp[a];
                if ea == 0 {
                    continue;
                }
                for b in a..n {
                    let eb = if a == b { ea - 1 } else { t.exp[b] };
                    if eb == 0 {
                        continue;
                    }
                    let mut v = t.coef * (ea * eb) as f64;
                    for (i, &e) in t.exp.iter().enumerate() {
                        let p = e - (i == a) as u32 - (i == b) as u32;
                        v *= table[i * m + p as usize];
                    }
                    h[(a, b)] += v;
                    if a != b {
                        h[(b, a)] += v;
                    }
                }
            }
        }
    }

    pub fn gradient(&self, x: &[f64]) -> DVector<f64> {
        let mut g = DVector::zeros(self.nvars);
        if !self.terms.is_empty() {
            self.with_powers(x, |table, m| self.gradient_into(table, m, &mut g));
        }
        g
    }

    pub fn value_and_gradient(&self, x: &[f64]) -> (f64, DVector<f64>) {
        (self.eval(x), self.gradient(x))
    }

    pub fn hessian(&self, x: &[f64]) -> DMatrix<f64> {
        let n = self.nvars;
        let mut h = DMatrix::zeros(n, n);
        if !self.terms.is_empty() {
            self.with_powers(x, |table, m| self.hessian_into(table, m, &mut h));
        }
        h
    }

    /// Gradient and Hessian from one power table.
    pub fn gradient_hessian(&self, x: &[f64]) -> (DVector<f64>, DMatrix<f64>) {
        let n = self.nvars;
        let mut g = DVector::zeros(n);
        let mut h = DMatrix::zeros(n, n);
        if !self.terms.is_empty() {
            self.with_powers(x, |table, m| {
                self.gradient_into(table, m, &mut g);
                self.hessian_into(table, m, &mut h);
            });
        }
        (g, h)
    }

    /// ∂p/∂x_j as a polynomial.
    pub fn derivative(&self, j: usize) -> Self {
        let mut map = BTreeMap::new();
        for t in &self.terms {
            if t.exp[j] > 0 {
                let mut e = t.exp.clone();
                let c = t.coef * e[j] as f64;
                e[j] -= 1;
                *map.entry(e).or_insert(0.0) += c;
            }
        }
        Self::from_map(self.nvars, map)
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        for t in &mut out.terms {
            t.coef *= s;
        }
        if s == 0.0 {
            out.terms.clear();
        }
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!(self.nvars, other.nvars);
        let mut map = self.to_map();
        for t in &other.terms {
            *map.entry(t.exp.clone()).or_insert(0.0) += t.coef;
        }
        Self::from_map(self.nvars, map)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.add(&other.scale(-1.0))
    }

    pub fn mul(&self, other: &Self) -> Self {
        debug_assert_eq!(self.nvars, other.nvars);
        let mut map = BTreeMap::new();
        for a in &self.terms {
            for b in &other.terms {
                let e: Vec<u32> = a.exp.iter().zip(&b.exp).map(|(x, y)| x + y).collect();
                *map.entry(e).or_insert(0.0) += a.coef * b.coef;
            }
        }
        Self::from_map(self.nvars, map)
    }

    pub fn pow(&self, k: u32) -> Self {
        let mut out = Self::constant(self.nvars, 1.0);
        for _ in 0..k {
            out = out.mul(self);
        }
        out
    }

    /// Keep only terms whose total degree lies in `range`.
    pub fn filter_degree(&self, keep: impl Fn(u32) -> bool) -> Self {
        let mut out = self.clone();
        out.terms.retain(|t| keep(t.degree()));
        out
    }

    /// Polynomial a ↦ p(c + s·a), expanded exactly.
    pub fn shifted(&self, c: &[f64], s: f64) -> Self {
        debug_assert_eq!(c.len(), self.nvars);
        let mut map: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
        for t in &self.terms {
            // per-variable binomial expansions of (c_i + s a_i)^{e_i}
            let mut partial: Vec<(Vec<u32>, f64)> = vec![(vec![0; self.nvars], t.coef)];
            for (i, &e) in t.exp.iter().enumerate() {
                if e == 0 {
                    continue;
                }
                let mut next = Vec::with_capacity(partial.len() * (e as usize + 1));
                for (exp, coef) in &partial {
                    for l in 0..=e {
                        let w = binomial(e, l) * c[i].powi((e - l) as i32) * s.powi(l as i32);
                        if w == 0.0 {
                            continue;
                        }
                        let mut ne = exp.clone();
                        ne[i] = l;
                        next.push((ne, coef * w));
                    }
                }
                partial = next;
            }
            for (exp, coef) in partial {
                *map.entry(exp).or_insert(0.0) += coef;
            }
        }
        Self::from_map(self.nvars, map)
    }
}

pub fn binomial(n: u32, k: u32) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// All exponent vectors in `nvars` variables with total degree exactly `d`.
pub fn monomials_of_degree(nvars: usize, d: u32) -> Vec<Vec<u32>> {
    fn rec(i: usize, left: u32, cur: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if i + 1 == cur.len() {
            cur[i] = left;
            out.push(cur.clone());
            return;
        }
        for e in (0..=left).rev() {
            cur[i] = e;
            rec(i + 1, left - e, cur, out);
        }
    }
    if nvars == 0 {
        return if d == 0 { vec![vec![]] } else { vec![] };
    }
    let mut out = Vec::new();
    rec(0, d, &mut vec![0; nvars], &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(terms: &[(f64, &[u32])]) -> Polynomial {
        let n = terms[0].1.len();
        Polynomial::new(
            n,
            terms
                .iter()
                .map(|(c, e)| Term {
                    coef: *c,
                    exp: e.to_vec(),
                })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn eval_gradient_hessian() {
        // x0^3 x1 + 2 x1^2
        let q = p(&[(1.0, &[3, 1]), (2.0, &[0, 2])]);
        let x = [1.5, -0.5];
        assert!((q.eval(&x) - (1.5f64.powi(3) * -0.5 + 2.0 * 0.25)).abs() < 1e-14);
        let g = q.gradient(&x);
        assert!((g[0] - 3.0 * 2.25 * -0.5).abs() < 1e-14);
        assert!((g[1] - (1.5f64.powi(3) + 4.0 * -0.5)).abs() < 1e-14);
        let h = q.hessian(&x);
        assert!((h[(0, 0)] - 6.0 * 1.5 * -0.5).abs() < 1e-14);
        assert!((h[(0, 1)] - 3.0 * 2.25).abs() < 1e-14);
        assert!((h[(1, 1)] - 4.0).abs() < 1e-14);
    }

    #[test]
    fn shifted_matches_pointwise() {
        let q = p(&[(1.0, &[3, 0]), (-0.7, &[1, 2]), (0.2, &[0, 0])]);
        let c = [0.3, -0.4];
        let s = 0.25;
        let sh = q.shifted(&c, s);
        for a in [[0.1, 0.9], [-1.0, 0.5], [0.0, 0.0]] {
            let direct = q.eval(&[c[0] + s * a[0], c[1] + s * a[1]]);
            assert!((sh.eval(&a) - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn monomial_counts() {
        assert_eq!(monomials_of_degree(4, 6).len(), 84);
        assert_eq!(monomials_of_degree(4, 5).len(), 56);
        assert_eq!(binomial(6, 2), 15.0);
    }
}
