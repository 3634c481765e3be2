//! Strang split-step Fourier solver used as the reference oracle.
//!
//! The equation `i u_t - u_xx + σ|u|²u = 0` splits into the kinetic flow
//! `û ↦ e^{itξ²} û` and the pointwise rotation `u ↦ u e^{iσ|u|²t}`.

use crate::spectral::{forward, free_propagate, inverse, Direction, Field, Spectrum};
use crate::{Error, Result, C64};

/// Relative L² drift that aborts a run.
pub const MAX_NORM_DRIFT: f64 = 1e-4;
/// Stability heuristic `dt · max ξ²`.
pub const RESOLUTION_LIMIT: f64 = 0.1;

#[derive(Debug, Clone)]
pub struct FieldTrajectory {
    pub times: Vec<f64>,
    pub fields: Vec<Field>,
    /// `false` when `dt · max ξ²` exceeds [`RESOLUTION_LIMIT`].
    pub resolved: bool,
    pub max_norm_drift: f64,
}

/// Strang steps of size `dt`; `record(k)` decides which steps are stored.
fn run(u0: &Field, dt: f64, steps: usize, sign: f64, record: impl Fn(usize) -> bool) -> Result<FieldTrajectory> {
    if sign != 1.0 && sign != -1.0 {
        return Err(Error::Config(format!("sign must be +1 or -1, got {sign}")));
    }
    if !(dt > 0.0) && steps > 0 {
        return Err(Error::Config(format!("time step must be positive, got {dt}")));
    }
    let g = u0.grid;
    let norm0 = u0.l2_norm();
    let mut spec = forward(u0);
    let mut out = FieldTrajectory {
        times: vec![0.0],
        fields: vec![u0.clone()],
        resolved: dt * g.max_xi_sq() <= RESOLUTION_LIMIT,
        max_norm_drift: 0.0,
    };
    for k in 1..=steps {
        half_kinetic(&mut spec, dt);
        let mut u = inverse(&spec);
        for z in u.samples.iter_mut() {
            *z *= C64::from_polar(1.0, sign * z.norm_sqr() * dt);
        }
        spec = forward(&u);
        half_kinetic(&mut spec, dt);
        if norm0 > 0.0 {
            let drift = (spec.l2_norm() - norm0).abs() / norm0;
            out.max_norm_drift = out.max_norm_drift.max(drift);
            if drift > MAX_NORM_DRIFT {
                return Err(Error::Numerical(format!("L2 drift {drift:.3e} at step {k}")));
            }
        }
        if record(k) || k == steps {
            out.times.push(k as f64 * dt);
            out.fields.push(inverse(&spec));
        }
    }
    Ok(out)
}

fn half_kinetic(spec: &mut Spectrum, dt: f64) {
    *spec = free_propagate(spec, dt / 2.0, Direction::Physical);
}

/// Every step is recorded.
pub fn split_step_solve(u0: &Field, dt: f64, steps: usize, sign: f64) -> Result<FieldTrajectory> {
    run(u0, dt, steps, sign, |_| true)
}

/// Only the initial and final fields are recorded.
pub fn split_step_final(u0: &Field, dt: f64, steps: usize, sign: f64) -> Result<Field> {
    let mut r = run(u0, dt, steps, sign, |_| false)?;
    Ok(r.fields.pop().expect("final field"))
}

/// Reference spectrum at time `t_final` on the grid of `u0`: four times the
/// resolution and `16·intervals` steps.
pub fn reference_solution(u0: &Field, t_final: f64, intervals: usize, sign: f64) -> Result<Spectrum> {
    let g = u0.grid;
    let fine = g.widened(4)?;
    let u_fine = inverse(&forward(u0).regrid(fine)?);
    let steps = 16 * intervals;
    let end = split_step_final(&u_fine, t_final / steps as f64, steps, sign)?;
    forward(&end).regrid(g)
}

/// `‖a - b‖ / ‖b‖` in L².
pub fn relative_l2(a: &Spectrum, b: &Spectrum) -> Result<f64> {
    if a.grid != b.grid {
        return Err(Error::GridMismatch("spectra on different grids".into()));
    }
    let num: f64 = a.coeffs.iter().zip(&b.coeffs).map(|(x, y)| (x - y).norm_sqr()).sum();
    let den: f64 = b.coeffs.iter().map(|y| y.norm_sqr()).sum();
    if den == 0.0 {
        return Ok(num.sqrt());
    }
    Ok((num / den).sqrt())
}
