//! Explicit Runge–Kutta integration shared by the flow, transport and
//! averaging routines.

use crate::error::{Error, Result};

/// Step-size control for the adaptive integrator.
#[derive(Clone, Copy, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tolerance {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on |h|; `f64::INFINITY` leaves it free.
    pub max_step: f64,
    pub max_steps: usize,
}

impl Tolerance {
    pub fn new(tol: f64) -> Self {
        Tolerance {
            rtol: tol,
            atol: tol,
            max_step: f64::INFINITY,
            max_steps: 50_000_000,
        }
    }

    pub fn with_max_step(mut self, h: f64) -> Self {
        self.max_step = h;
        self
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.rtol > 0.0 && self.atol > 0.0 && self.max_step > 0.0) {
            return Err(Error::contract(format!(
                "tolerances must be positive, got {self:?}"
            )));
        }
        Ok(())
    }
}

impl Default for Tolerance {
    fn default() -> Self {
        Tolerance::new(1e-10)
    }
}

// Dormand–Prince 5(4) tableau.
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
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
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Callback invoked at the initial point and after every accepted step with
/// `(t, y, y')`; `at_stop` is set when `t` is one of the requested stop times.
pub(crate) type Observer<'a> = dyn FnMut(f64, &[f64], &[f64], bool) -> Result<()> + 'a;

/// Integrates `y' = f(t, y)` from `t0` to `t_end` (either direction), landing
/// exactly on every time in `stops`. `renorm` is applied to the state after
/// each accepted step and reports whether it changed anything. Returns the
/// final state.
pub(crate) fn dopri5<F, N>(
    mut rhs: F,
    mut renorm: N,
    t0: f64,
    y0: &[f64],
    t_end: f64,
    tol: &Tolerance,
    stops: &[f64],
    observer: &mut Observer<'_>,
) -> Result<Vec<f64>>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
    N: FnMut(&mut [f64]) -> bool,
{
    tol.validate()?;
    if !t_end.is_finite() || !t0.is_finite() {
        return Err(Error::contract("integration bounds must be finite"));
    }
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut k1 = vec![0.0; n];
    rhs(t0, &y, &mut k1)?;
    observer(t0, &y, &k1, stops.first().is_some_and(|&s| s == t0))?;
    if t_end == t0 {
        return Ok(y);
    }
    let dir = (t_end - t0).signum();

    let mut stop_iter = stops
        .iter()
        .copied()
        .filter(|&s| (s - t0) * dir > 0.0 && (t_end - s) * dir >= 0.0)
        .collect::<Vec<_>>();
    stop_iter.push(t_end);
    stop_iter.dedup();
    let mut next_stop = 0usize;

    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) = (
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
        vec![0.0; n],
    );
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];

    let mut t = t0;
    let mut h = initial_step(&mut rhs, t0, &y, &k1, dir, tol)?;
    let mut steps = 0usize;

    while next_stop < stop_iter.len() {
        let target = stop_iter[next_stop];
        let remaining = (target - t) * dir;
        let mut clamped = false;
        let mut h_try = h.min(tol.max_step);
        if h_try >= remaining {
            h_try = remaining;
            clamped = true;
        }
        let hs = h_try * dir;

        for i in 0..n {
            ytmp[i] = y[i] + hs * A21 * k1[i];
        }
        rhs(t + C2 * hs, &ytmp, &mut k2)?;
        for i in 0..n {
            ytmp[i] = y[i] + hs * (A31 * k1[i] + A32 * k2[i]);
        }
        rhs(t + C3 * hs, &ytmp, &mut k3)?;
        for i in 0..n {
            ytmp[i] = y[i] + hs * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        rhs(t + C4 * hs, &ytmp, &mut k4)?;
        for i in 0..n {
            ytmp[i] = y[i] + hs * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        rhs(t + C5 * hs, &ytmp, &mut k5)?;
        for i in 0..n {
            ytmp[i] = y[i]
                + hs * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        rhs(t + hs, &ytmp, &mut k6)?;
        for i in 0..n {
            ynew[i] =
                y[i] + hs * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
        }
        let t_new = if clamped { target } else { t + hs };
        rhs(t_new, &ynew, &mut k7)?;

        let mut err = 0.0;
        for i in 0..n {
            let e = hs
                * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = tol.atol + tol.rtol * y[i].abs().max(ynew[i].abs());
            err += (e / sc).powi(2);
        }
        let err = (err / n as f64).sqrt();
        if !err.is_finite() {
            return Err(Error::Divergence {
                t,
                reason: "non-finite error estimate".into(),
            });
        }

        steps += 1;
        if steps > tol.max_steps {
            return Err(Error::Divergence {
                t,
                reason: format!("exceeded {} steps", tol.max_steps),
            });
        }

        if err <= 1.0 {
            t = t_new;
            std::mem::swap(&mut y, &mut ynew);
            if renorm(&mut y) {
                rhs(t, &y, &mut k1)?;
            } else {
                std::mem::swap(&mut k1, &mut k7);
            }
            observer(t, &y, &k1, clamped && stops.contains(&target))?;
            if clamped {
                next_stop += 1;
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            let proposed = h_try * fac;
            // a short landing step must not shrink the natural step length
            h = if clamped { h.max(proposed) } else { proposed };
        } else {
            let fac = (0.9 * err.powf(-0.2)).clamp(0.1, 1.0);
            h = h_try * fac;
        }
        let floor = 1e-14 * t.abs().max(1.0);
        if h < floor {
            return Err(Error::Divergence {
                t,
                reason: format!("step size underflow (h={h:e})"),
            });
        }
    }
    Ok(y)
}

fn initial_step<F>(
    rhs: &mut F,
    t0: f64,
    y0: &[f64],
    f0: &[f64],
    dir: f64,
    tol: &Tolerance,
) -> Result<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]) -> Result<()>,
{
    let n = y0.len();
    let sc: Vec<f64> = y0.iter().map(|v| tol.atol + tol.rtol * v.abs()).collect();
    let rms = |v: &[f64]| -> f64 {
        (v.iter().zip(&sc).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / n as f64).sqrt()
    };
    let d0 = rms(y0);
    let d1 = rms(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + dir * h0 * f).collect();
    let mut f1 = vec![0.0; n];
    rhs(t0 + dir * h0, &y1, &mut f1)?;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = rms(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    Ok((100.0 * h0).min(h1).min(tol.max_step))
}

/// Coefficients of the fourth-order Forest–Ruth (Yoshida) composition.
pub(crate) fn forest_ruth() -> ([f64; 4], [f64; 3]) {
    let cbrt2 = 2f64.cbrt();
    let w1 = 1.0 / (2.0 - cbrt2);
    let w0 = -cbrt2 * w1;
    (
        [0.5 * w1, 0.5 * (w0 + w1), 0.5 * (w0 + w1), 0.5 * w1],
        [w1, w0, w1],
    )
}
