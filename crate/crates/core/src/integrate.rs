//! Classical fixed-step fourth-order Runge-Kutta.

use nalgebra::DVector;

/// Advances `x` from `t` to `t + dt`. `f(t, x)` returns dx/dt.
pub fn rk4_step<E, F>(mut f: F, t: f64, x: &DVector<f64>, dt: f64) -> Result<DVector<f64>, E>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>, E>,
{
    let k1 = f(t, x)?;
    rk4_step_from(f, t, x, dt, k1)
}

/// Same as [`rk4_step`] with the first stage derivative already known.
pub fn rk4_step_from<E, F>(mut f: F, t: f64, x: &DVector<f64>, dt: f64, k1: DVector<f64>) -> Result<DVector<f64>, E>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>, E>,
{
    let half = 0.5 * dt;
    let k2 = f(t + half, &(x + &k1 * half))?;
    let k3 = f(t + half, &(x + &k2 * half))?;
    let k4 = f(t + dt, &(x + &k3 * dt))?;
    Ok(x + (k1 + (k2 + k3) * 2.0 + k4) * (dt / 6.0))
}
