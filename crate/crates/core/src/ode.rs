//! Adaptive Dormand–Prince 5(4) integration with an optional projection
//! applied after every accepted step.

use nalgebra::DVector;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-12,
            atol: 1e-13,
            h_init: 1e-2,
            h_min: 1e-12,
            max_steps: 1_000_000,
        }
    }
}

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth-order minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// One step of size h; returns the new state and the scaled error norm.
fn step<F>(f: &F, y: &DVector<f64>, h: f64, k1: &DVector<f64>, opts: &OdeOptions) -> (DVector<f64>, DVector<f64>, f64)
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let k2 = f(&(y + k1 * (h * A21)));
    let k3 = f(&(y + (k1 * A31 + &k2 * A32) * h));
    let k4 = f(&(y + (k1 * A41 + &k2 * A42 + &k3 * A43) * h));
    let k5 = f(&(y + (k1 * A51 + &k2 * A52 + &k3 * A53 + &k4 * A54) * h));
    let k6 = f(&(y + (k1 * A61 + &k2 * A62 + &k3 * A63 + &k4 * A64 + &k5 * A65) * h));
    let y_new = y + (k1 * B1 + &k3 * B3 + &k4 * B4 + &k5 * B5 + &k6 * B6) * h;
    let k7 = f(&y_new);
    let err = (k1 * E1 + &k3 * E3 + &k4 * E4 + &k5 * E5 + &k6 * E6 + &k7 * E7) * h;
    let mut acc = 0.0;
    for i in 0..y.len() {
        let sc = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
        acc += (err[i] / sc).powi(2);
    }
    let norm = (acc / y.len().max(1) as f64).sqrt();
    (y_new, k7, norm)
}

/// States at each of the increasing `times` (the first may be 0), starting from y0 at t = 0.
pub fn integrate_samples<F>(
    f: &F,
    y0: &DVector<f64>,
    times: &[f64],
    opts: &OdeOptions,
    project: Option<&dyn Fn(&mut DVector<f64>)>,
) -> Result<Vec<DVector<f64>>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|t| *t < 0.0) {
        return Err(Error::InvalidArgument("sample times must be increasing and non-negative".into()));
    }
    let mut out = Vec::with_capacity(times.len());
    let mut t = 0.0;
    let mut y = y0.clone();
    let mut k1 = f(&y);
    let mut h = opts.h_init;
    let mut steps = 0usize;
    for &target in times {
        while t < target {
            let remaining = target - t;
            let last = h >= remaining;
            let hs = if last { remaining } else { h };
            let (mut y_new, k7, err) = step(f, &y, hs, &k1, opts);
            if !err.is_finite() {
                return Err(Error::FlowFailure("non-finite state".into()));
            }
            if err <= 1.0 {
                t = if last { target } else { t + hs };
                if let Some(p) = project {
                    p(&mut y_new);
                    k1 = f(&y_new);
                } else {
                    k1 = k7;
                }
                y = y_new;
                steps += 1;
                if steps > opts.max_steps {
                    return Err(Error::FlowFailure("step budget exhausted".into()));
                }
            }
            let factor = if err == 0.0 {
                5.0
            } else {
                (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
            };
            // a truncated final step says nothing about the natural step size
            if !(last && err <= 1.0) {
                h = hs * factor;
            }
            if h < opts.h_min {
                return Err(Error::FlowFailure(format!("step size underflow at t = {t:.6e}")));
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}

/// State at time `t_end`.
pub fn integrate<F>(
    f: &F,
    y0: &DVector<f64>,
    t_end: f64,
    opts: &OdeOptions,
    project: Option<&dyn Fn(&mut DVector<f64>)>,
) -> Result<DVector<f64>>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    Ok(integrate_samples(f, y0, &[t_end], opts, project)?.remove(0))
}
