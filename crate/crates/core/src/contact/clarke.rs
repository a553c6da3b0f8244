//! Dual least-action principle on Fourier loops: minimize
//! R(z) = ∫H*(−Jż) / (½∫⟨−Jż, z⟩) over z: ℝ/ℤ → ℝ^{2n}; min R is the minimal action.

use std::f64::consts::PI;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::bodies::ConvexBody;
use crate::embedding::gaussian;
use crate::error::{Error, Result};
use crate::symplectic::apply_j;

#[derive(Clone, Copy, Debug)]
pub struct ClarkeOptions {
    pub samples: usize,
    pub modes: usize,
    pub max_iter: usize,
    pub random_starts: usize,
    pub seed: u64,
}

impl Default for ClarkeOptions {
    fn default() -> Self {
        Self {
            samples: 256,
            modes: 16,
            max_iter: 400,
            random_starts: 2,
            seed: 0xc1a4e,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ClarkeResult {
    pub value: f64,
    /// ∇H*(−Jż) at the samples: points on a ray-scaled closed characteristic.
    pub points: Vec<DVector<f64>>,
    pub iterations: usize,
}

struct Loop<'a> {
    body: &'a dyn ConvexBody,
    n: usize,
    modes: usize,
    cos: Vec<Vec<f64>>,
    sin: Vec<Vec<f64>>,
}

struct Eval {
    ratio: f64,
    grad: Vec<f64>,
    points: Vec<DVector<f64>>,
}

impl Loop<'_> {
    /// Variables ĉ = (a_k, b_k)·2πk per mode, so that ż has O(ĉ) components.
    fn unpack(&self, c: &[f64], k: usize) -> (DVector<f64>, DVector<f64>) {
        let n = self.n;
        let s = 1.0 / (2.0 * PI * (k + 1) as f64);
        let off = 2 * n * k;
        (
            DVector::from_fn(n, |i, _| c[off + i] * s),
            DVector::from_fn(n, |i, _| c[off + n + i] * s),
        )
    }

    fn eval(&self, c: &[f64], guesses: &mut [Option<DVector<f64>>]) -> Result<Eval> {
        let n = self.n;
        let nsamp = self.cos.len();
        let coefs: Vec<(DVector<f64>, DVector<f64>)> = (0..self.modes).map(|k| self.unpack(c, k)).collect();
        let mut z = vec![DVector::zeros(n); nsamp];
        let mut zd = vec![DVector::zeros(n); nsamp];
        for j in 0..nsamp {
            for (k, (a, b)) in coefs.iter().enumerate() {
                let w = 2.0 * PI * (k + 1) as f64;
                let (cs, sn) = (self.cos[j][k], self.sin[j][k]);
                z[j] += a * cs + b * sn;
                zd[j] += (b * cs - a * sn) * w;
            }
        }
        let mut phi = 0.0;
        let mut area = 0.0;
        let mut points = Vec::with_capacity(nsamp);
        for j in 0..nsamp {
            let w = -apply_j(&zd[j]);
            let (hs, x) = self.body.conjugate(&w, guesses[j].as_ref())?;
            guesses[j] = Some(x.clone());
            phi += hs;
            area += 0.5 * w.dot(&z[j]);
            points.push(x);
        }
        phi /= nsamp as f64;
        area /= nsamp as f64;
        if !(area > 0.0) {
            return Ok(Eval {
                ratio: f64::INFINITY,
                grad: vec![0.0; c.len()],
                points,
            });
        }
        let ratio = phi / area;
        // dΦ = ⟨x, dw⟩, dA = ½⟨dw, z⟩ + ½⟨w, dz⟩; w = −Jż so ⟨v, dw⟩ = ⟨Jv, dż⟩
        let mut grad = vec![0.0; c.len()];
        for j in 0..nsamp {
            let w = -apply_j(&zd[j]);
            let gz = &w * (-ratio * 0.5);
            let gzd = apply_j(&(&points[j] - &z[j] * (ratio * 0.5)));
            for k in 0..self.modes {
                let f = 2.0 * PI * (k + 1) as f64;
                let s = 1.0 / f;
                let (cs, sn) = (self.cos[j][k], self.sin[j][k]);
                let off = 2 * n * k;
                for i in 0..n {
                    // ∂z/∂a = cos, ∂z/∂b = sin; ∂ż/∂a = −f sin, ∂ż/∂b = f cos
                    let da = gz[i] * cs - gzd[i] * f * sn;
                    let db = gz[i] * sn + gzd[i] * f * cs;
                    grad[off + i] += da * s / (nsamp as f64 * area);
                    grad[off + n + i] += db * s / (nsamp as f64 * area);
                }
            }
        }
        Ok(Eval { ratio, grad, points })
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// L-BFGS with backtracking from `start`.
fn minimize(lp: &Loop, start: Vec<f64>, max_iter: usize) -> Result<(Eval, usize)> {
    let mut guesses: Vec<Option<DVector<f64>>> = vec![None; lp.cos.len()];
    let mut c = start;
    let mut cur = lp.eval(&c, &mut guesses)?;
    if !cur.ratio.is_finite() {
        return Err(Error::InvalidArgument("loop start has non-positive area".into()));
    }
    let mut hist: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut iters = 0;
    for it in 0..max_iter {
        iters = it + 1;
        let g = &cur.grad;
        // two-loop recursion
        let mut q = g.clone();
        let mut alphas = Vec::with_capacity(hist.len());
        for (s, y) in hist.iter().rev() {
            let rho = 1.0 / dot(y, s);
            let a = rho * dot(s, &q);
            q.iter_mut().zip(y).for_each(|(qi, yi)| *qi -= a * yi);
            alphas.push((a, rho));
        }
        if let Some((s, y)) = hist.last() {
            let gamma = dot(s, y) / dot(y, y);
            q.iter_mut().for_each(|v| *v *= gamma);
        }
        for ((s, y), (a, rho)) in hist.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            q.iter_mut().zip(s).for_each(|(qi, si)| *qi += (a - b) * si);
        }
        let mut dir: Vec<f64> = q.iter().map(|v| -v).collect();
        let mut slope = dot(&dir, g);
        if !(slope < 0.0) {
            dir = g.iter().map(|v| -v).collect();
            slope = dot(&dir, g);
            hist.clear();
        }
        let mut step = 1.0;
        let mut accepted = None;
        while step > 1e-12 {
            let trial: Vec<f64> = c.iter().zip(&dir).map(|(x, d)| x + step * d).collect();
            let mut tg = guesses.clone();
            let ev = lp.eval(&trial, &mut tg)?;
            if ev.ratio <= cur.ratio + 1e-4 * step * slope {
                accepted = Some((trial, ev, tg));
                break;
            }
            step *= 0.5;
        }
        let Some((trial, ev, tg)) = accepted else { break };
        let s: Vec<f64> = trial.iter().zip(&c).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = ev.grad.iter().zip(&cur.grad).map(|(a, b)| a - b).collect();
        let improvement = cur.ratio - ev.ratio;
        c = trial;
        guesses = tg;
        let done = improvement <= 1e-15 * ev.ratio.abs();
        cur = ev;
        if dot(&s, &y) > 1e-300 {
            hist.push((s, y));
            if hist.len() > 8 {
                hist.remove(0);
            }
        }
        if done {
            break;
        }
    }
    Ok((cur, iters))
}

/// Minimal value of R over loops, started from each coordinate-plane circle and a few random loops.
pub fn clarke_minimize(body: &dyn ConvexBody, opts: &ClarkeOptions) -> Result<ClarkeResult> {
    let n = body.dim();
    let modes = opts.modes.min(opts.samples / 2 - 1).max(1);
    let nsamp = opts.samples;
    let table = |f: fn(f64) -> f64| -> Vec<Vec<f64>> {
        (0..nsamp)
            .map(|j| {
                (0..modes)
                    .map(|k| f(2.0 * PI * (k + 1) as f64 * j as f64 / nsamp as f64))
                    .collect()
            })
            .collect()
    };
    let lp = Loop {
        body,
        n,
        modes,
        cos: table(f64::cos),
        sin: table(f64::sin),
    };
    let nv = 2 * n * modes;
    let mut starts = Vec::new();
    for p in 0..n / 2 {
        // a₁ = e_{x_p}, b₁ = e_{y_p}, scaled by 2π
        let mut c = vec![0.0; nv];
        c[2 * p] = 2.0 * PI;
        c[n + 2 * p + 1] = 2.0 * PI;
        starts.push(c);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    for _ in 0..opts.random_starts {
        let mut c = starts[0].clone();
        for (i, v) in c.iter_mut().enumerate() {
            let k = i / (2 * n) + 1;
            *v += gaussian(&mut rng) / k as f64;
        }
        starts.push(c);
    }
    let mut best: Option<ClarkeResult> = None;
    for s in starts {
        let Ok((ev, iterations)) = minimize(&lp, s, opts.max_iter) else {
            continue;
        };
        if best.as_ref().is_none_or(|b| ev.ratio < b.value) {
            best = Some(ClarkeResult {
                value: ev.ratio,
                points: ev.points,
                iterations,
            });
        }
    }
    best.ok_or_else(|| Error::NoOrbitFound("no loop with positive area".into()))
}
