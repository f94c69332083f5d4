//! One-step integrators, local error estimators and the deferred-correction
//! update.

use crate::problems::{Rhs, StepFault};
use crate::weights::{combine, interpolation_weights, quadrature_weights, Stencil};

fn check(v: Vec<f64>, t: f64, context: &'static str) -> Result<Vec<f64>, StepFault> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(StepFault { t, context })
    }
}

/// `y + dt * slope`.
fn axpy(y: &[f64], dt: f64, slope: &[f64]) -> Vec<f64> {
    y.iter().zip(slope).map(|(a, b)| a + dt * b).collect()
}

/// Forward Euler: `y + dt * f(t, y)`.
pub fn euler_step<R: Rhs + ?Sized>(f: &R, t: f64, y: &[f64], dt: f64) -> Result<Vec<f64>, StepFault> {
    let slope = f.eval(t, y)?;
    check(axpy(y, dt, &slope), t + dt, "euler step")
}

/// Forward Euler given the already known slope `f(t, y)`.
pub fn euler_from_slope(t: f64, y: &[f64], slope: &[f64], dt: f64) -> Result<Vec<f64>, StepFault> {
    check(axpy(y, dt, slope), t + dt, "euler step")
}

/// Output of an error-estimating step.
#[derive(Debug, Clone, PartialEq)]
pub struct StepProposal {
    /// Value carried forward.
    pub state: Vec<f64>,
    /// Local error estimate for `state`.
    pub error: Vec<f64>,
    /// The other solution used to form the estimate, when there is one.
    pub companion: Option<Vec<f64>>,
    /// Order handed to the step-size controller.
    pub order: u32,
}

/// Explicit embedded Runge–Kutta pair. `b` are the propagating weights and
/// `b_hat` the companion weights; the error estimate is
/// `dt * Σ (b_i - b_hat_i) k_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct ButcherPair {
    pub name: &'static str,
    pub a: Vec<Vec<f64>>,
    pub c: Vec<f64>,
    pub b: Vec<f64>,
    pub b_hat: Vec<f64>,
    /// Orders of the lower and higher order members.
    pub orders: (u32, u32),
    /// Order reported to the controller.
    pub controller_order: u32,
}

impl ButcherPair {
    pub fn stages(&self) -> usize {
        self.c.len()
    }

    /// Heun–Euler 2(1). Propagates the Euler value; the controller order is 1.
    pub fn heun_euler() -> Self {
        Self {
            name: "heun-euler",
            a: vec![vec![], vec![1.0]],
            c: vec![0.0, 1.0],
            b: vec![1.0, 0.0],
            b_hat: vec![0.5, 0.5],
            orders: (1, 2),
            controller_order: 1,
        }
    }

    /// Bogacki–Shampine 3(2), propagating the third-order value.
    pub fn bogacki_shampine() -> Self {
        Self {
            name: "bs32",
            a: vec![
                vec![],
                vec![0.5],
                vec![0.0, 0.75],
                vec![2.0 / 9.0, 1.0 / 3.0, 4.0 / 9.0],
            ],
            c: vec![0.0, 0.5, 0.75, 1.0],
            b: vec![2.0 / 9.0, 1.0 / 3.0, 4.0 / 9.0, 0.0],
            b_hat: vec![7.0 / 24.0, 0.25, 1.0 / 3.0, 0.125],
            orders: (2, 3),
            controller_order: 2,
        }
    }

    /// Runge–Kutta–Fehlberg 4(5), propagating the fifth-order value.
    pub fn rkf45() -> Self {
        Self {
            name: "rkf45",
            a: vec![
                vec![],
                vec![0.25],
                vec![3.0 / 32.0, 9.0 / 32.0],
                vec![1932.0 / 2197.0, -7200.0 / 2197.0, 7296.0 / 2197.0],
                vec![439.0 / 216.0, -8.0, 3680.0 / 513.0, -845.0 / 4104.0],
                vec![-8.0 / 27.0, 2.0, -3544.0 / 2565.0, 1859.0 / 4104.0, -11.0 / 40.0],
            ],
            c: vec![0.0, 0.25, 0.375, 12.0 / 13.0, 1.0, 0.5],
            b: vec![
                16.0 / 135.0,
                0.0,
                6656.0 / 12825.0,
                28561.0 / 56430.0,
                -9.0 / 50.0,
                2.0 / 55.0,
            ],
            b_hat: vec![25.0 / 216.0, 0.0, 1408.0 / 2565.0, 2197.0 / 4104.0, -0.2, 0.0],
            orders: (4, 5),
            controller_order: 4,
        }
    }
}

/// One step of an embedded pair.
pub fn rk_pair_step<R: Rhs + ?Sized>(
    pair: &ButcherPair,
    f: &R,
    t: f64,
    y: &[f64],
    dt: f64,
) -> Result<StepProposal, StepFault> {
    let k1 = f.eval(t, y)?;
    rk_pair_step_from(pair, f, t, y, &k1, dt)
}

/// [`rk_pair_step`] with the first stage `f(t, y)` supplied by the caller.
pub fn rk_pair_step_from<R: Rhs + ?Sized>(
    pair: &ButcherPair,
    f: &R,
    t: f64,
    y: &[f64],
    k1: &[f64],
    dt: f64,
) -> Result<StepProposal, StepFault> {
    let m = y.len();
    let mut k: Vec<Vec<f64>> = Vec::with_capacity(pair.stages());
    k.push(k1.to_vec());
    for i in 1..pair.stages() {
        let mut stage_y = y.to_vec();
        for (j, aij) in pair.a[i].iter().enumerate() {
            if *aij != 0.0 {
                for (sy, kj) in stage_y.iter_mut().zip(&k[j]) {
                    *sy += dt * aij * kj;
                }
            }
        }
        k.push(f.eval(t + pair.c[i] * dt, &stage_y)?);
    }
    let mut state = y.to_vec();
    let mut companion = y.to_vec();
    let mut error = vec![0.0; m];
    for (i, ki) in k.iter().enumerate() {
        let (bi, bh) = (pair.b[i], pair.b_hat[i]);
        for d in 0..m {
            state[d] += dt * bi * ki[d];
            companion[d] += dt * bh * ki[d];
            error[d] += dt * (bi - bh) * ki[d];
        }
    }
    Ok(StepProposal {
        state: check(state, t + dt, "rk stage")?,
        error: check(error, t + dt, "rk error estimate")?,
        companion: Some(check(companion, t + dt, "rk stage")?),
        order: pair.controller_order,
    })
}

/// A single-step method usable as the base of step doubling.
pub trait OneStep {
    fn order(&self) -> u32;

    /// Advances from `(t, y)` by `dt`, given `slope = f(t, y)`.
    fn step_from<R: Rhs + ?Sized>(
        &self,
        f: &R,
        t: f64,
        y: &[f64],
        slope: &[f64],
        dt: f64,
    ) -> Result<Vec<f64>, StepFault>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Euler;

impl OneStep for Euler {
    fn order(&self) -> u32 {
        1
    }

    fn step_from<R: Rhs + ?Sized>(
        &self,
        _f: &R,
        t: f64,
        y: &[f64],
        slope: &[f64],
        dt: f64,
    ) -> Result<Vec<f64>, StepFault> {
        euler_from_slope(t, y, slope, dt)
    }
}

/// Step doubling: one full step against two half steps. The two-half-step
/// value is propagated unextrapolated and the estimate is their difference.
pub fn step_double<B: OneStep, R: Rhs + ?Sized>(
    base: &B,
    f: &R,
    t: f64,
    y: &[f64],
    dt: f64,
) -> Result<StepProposal, StepFault> {
    let slope = f.eval(t, y)?;
    step_double_from(base, f, t, y, &slope, dt)
}

/// [`step_double`] with `f(t, y)` supplied.
pub fn step_double_from<B: OneStep, R: Rhs + ?Sized>(
    base: &B,
    f: &R,
    t: f64,
    y: &[f64],
    slope: &[f64],
    dt: f64,
) -> Result<StepProposal, StepFault> {
    let full = base.step_from(f, t, y, slope, dt)?;
    let half = 0.5 * dt;
    let mid = base.step_from(f, t, y, slope, half)?;
    let mid_slope = f.eval(t + half, &mid)?;
    let two_halves = base.step_from(f, t + half, &mid, &mid_slope, half)?;
    let error = two_halves.iter().zip(&full).map(|(a, b)| a - b).collect();
    Ok(StepProposal {
        state: two_halves,
        error,
        companion: Some(full),
        order: base.order(),
    })
}

/// Previous-level data over one stencil: node times with the cached
/// `f(tau_i, eta^{[l-1]}(tau_i))` values.
#[derive(Debug, Clone, Copy)]
pub struct StencilData<'a> {
    pub stencil: &'a Stencil,
    pub slopes: &'a [&'a [f64]],
}

/// First-order deferred-correction update over `[t_prev, t_next]`:
///
/// `eta_n = eta_{n-1} + dt (f(t_{n-1}, eta_{n-1}) - F(t_{n-1})) + Σ_pieces Σ_i alpha_i f_i`
///
/// where `F(t_{n-1})` interpolates the previous level's slopes with the first
/// piece's stencil. `pieces` partition `[t_prev, t_next]` in order; usually
/// there is exactly one. `own_slope` is `f(t_{n-1}, eta_{n-1})`.
pub fn corrector_step(
    pieces: &[StencilData<'_>],
    t_prev: f64,
    t_next: f64,
    eta_prev: &[f64],
    own_slope: &[f64],
) -> Result<Vec<f64>, StepFault> {
    let first = pieces.first().expect("at least one quadrature piece");
    debug_assert_eq!(first.stencil.start(), t_prev);
    debug_assert_eq!(pieces.last().unwrap().stencil.end(), t_next);
    let dt = t_next - t_prev;
    let gamma = interpolation_weights(first.stencil, t_prev);
    let interpolated = combine(&gamma, first.slopes);
    let mut out: Vec<f64> = eta_prev
        .iter()
        .zip(own_slope.iter().zip(&interpolated))
        .map(|(y, (fo, fi))| y + dt * (fo - fi))
        .collect();
    for piece in pieces {
        let alpha = quadrature_weights(piece.stencil);
        let integral = combine(&alpha, piece.slopes);
        for (o, q) in out.iter_mut().zip(&integral) {
            *o += q;
        }
    }
    check(out, t_next, "corrector step")
}
