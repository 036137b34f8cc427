//! Dormand–Prince 5(4) explicit Runge–Kutta integrator with embedded error
//! control, plus a fixed-step mode used for order checks.

use crate::error::{Error, Result};
use crate::linalg::Vector;

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [&[f64]; 7] = [
    &[],
    &[1.0 / 5.0],
    &[3.0 / 40.0, 9.0 / 40.0],
    &[44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0],
    &[19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0],
    &[9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0],
    &[35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// 5th-order weights minus the embedded 4th-order ones
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepControl {
    /// Local error per step kept below `tol` (relative and absolute, RMS norm).
    Adaptive { tol: f64 },
    /// `steps` equal steps, no error control.
    Fixed { steps: usize },
}

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
    /// `NaN` in fixed-step mode.
    pub tol: f64,
}

/// Every accepted step, starting with the initial condition.
#[derive(Clone, Debug)]
pub struct Solution {
    pub t: Vec<f64>,
    pub y: Vec<Vector>,
    pub stats: Stats,
}

impl Solution {
    pub fn last(&self) -> (f64, &Vector) {
        (*self.t.last().unwrap(), self.y.last().unwrap())
    }
}

struct Stepper<F> {
    f: F,
    evaluations: usize,
}

impl<F: FnMut(f64, &Vector) -> Vector> Stepper<F> {
    fn eval(&mut self, t: f64, y: &Vector) -> Vector {
        self.evaluations += 1;
        (self.f)(t, y)
    }

    /// One step from `(t, y)` with `k1 = f(t, y)`; returns the 5th-order
    /// solution, its derivative (FSAL) and the error estimate.
    fn step(&mut self, t: f64, y: &Vector, k1: &Vector, h: f64) -> (Vector, Vector, Vector) {
        let mut k: Vec<Vector> = Vec::with_capacity(7);
        k.push(k1.clone());
        for s in 1..7 {
            let mut ys = y.clone();
            for (j, &a) in A[s].iter().enumerate() {
                if a != 0.0 {
                    ys.axpy(h * a, &k[j], 1.0);
                }
            }
            let ks = self.eval(t + C[s] * h, &ys);
            if s == 6 {
                let mut err = Vector::zeros(y.len());
                k.push(ks);
                for (j, &e) in E.iter().enumerate() {
                    if e != 0.0 {
                        err.axpy(h * e, &k[j], 1.0);
                    }
                }
                return (ys, k.pop().unwrap(), err);
            }
            k.push(ks);
        }
        unreachable!()
    }
}

fn scaled_rms(err: &Vector, y0: &Vector, y1: &Vector, tol: f64) -> f64 {
    let n = err.len().max(1) as f64;
    let s: f64 =
        err.iter().zip(y0.iter().zip(y1.iter())).map(|(e, (a, b))| (e / (tol + tol * a.abs().max(b.abs()))).powi(2)).sum();
    (s / n).sqrt()
}

/// Integrates `y' = f(t, y)` from `t0` to `t1 > t0`.
pub fn dopri5<F>(f: F, t0: f64, y0: &Vector, t1: f64, control: StepControl) -> Result<Solution>
where
    F: FnMut(f64, &Vector) -> Vector,
{
    if !(t1 > t0) || !t0.is_finite() || !t1.is_finite() {
        return Err(Error::invalid(format!("need finite t0 < t1, got [{t0}, {t1}]")));
    }
    let mut st = Stepper { f, evaluations: 0 };
    let mut sol = Solution { t: vec![t0], y: vec![y0.clone()], stats: Stats::default() };
    let mut k1 = st.eval(t0, y0);
    match control {
        StepControl::Fixed { steps } => {
            if steps == 0 {
                return Err(Error::invalid("fixed-step mode needs at least one step"));
            }
            sol.stats.tol = f64::NAN;
            let h = (t1 - t0) / steps as f64;
            let mut y = y0.clone();
            for i in 0..steps {
                let t = t0 + i as f64 * h;
                let (y1, k7, _) = st.step(t, &y, &k1, h);
                y = y1;
                k1 = k7;
                sol.t.push(if i + 1 == steps { t1 } else { t0 + (i + 1) as f64 * h });
                sol.y.push(y.clone());
                sol.stats.accepted += 1;
            }
        }
        StepControl::Adaptive { tol } => {
            if !(tol > 0.0) {
                return Err(Error::invalid(format!("tolerance must be positive, got {tol}")));
            }
            sol.stats.tol = tol;
            let mut h = initial_step(&mut st, t0, y0, &k1, t1 - t0, tol);
            let (mut t, mut y) = (t0, y0.clone());
            let mut just_rejected = false;
            while t < t1 {
                if h < 16.0 * f64::EPSILON * t.abs().max(1e-300) || !h.is_finite() {
                    sol.stats.evaluations = st.evaluations;
                    return Err(Error::StepUnderflow { t, h, partial: Box::new(sol) });
                }
                let last = t + h >= t1;
                let hs = if last { t1 - t } else { h };
                let (y1, k7, err) = st.step(t, &y, &k1, hs);
                let e = scaled_rms(&err, &y, &y1, tol);
                if e <= 1.0 && y1.iter().all(|v| v.is_finite()) {
                    t = if last { t1 } else { t + hs };
                    y = y1;
                    k1 = k7;
                    sol.t.push(t);
                    sol.y.push(y.clone());
                    sol.stats.accepted += 1;
                    let grow = if just_rejected { 1.0 } else { 10.0 };
                    h = hs * (0.9 * e.max(1e-10).powf(-0.2)).clamp(0.2, grow);
                    just_rejected = false;
                } else {
                    sol.stats.rejected += 1;
                    let fac = if e.is_finite() { (0.9 * e.powf(-0.2)).clamp(0.1, 0.9) } else { 0.1 };
                    h = hs * fac;
                    just_rejected = true;
                }
            }
        }
    }
    sol.stats.evaluations = st.evaluations;
    Ok(sol)
}

// Standard starting-step heuristic (Hairer, Norsett & Wanner, II.4).
fn initial_step<F: FnMut(f64, &Vector) -> Vector>(
    st: &mut Stepper<F>,
    t0: f64,
    y0: &Vector,
    f0: &Vector,
    span: f64,
    tol: f64,
) -> f64 {
    let scale = |v: &Vector| {
        let n = v.len().max(1) as f64;
        (v.iter().zip(y0.iter()).map(|(a, y)| (a / (tol + tol * y.abs())).powi(2)).sum::<f64>() / n).sqrt()
    };
    let (d0, d1) = (scale(y0), scale(f0));
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 }.min(span);
    let y1 = y0 + f0 * h0;
    let f1 = st.eval(t0 + h0, &y1);
    let d2 = scale(&(f1 - f0)) / h0;
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    (100.0 * h0).min(h1).min(span)
}
