//! Bracketing root search: bisection to localise, then Illinois-style
//! secant steps that never leave the bracket.

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Root {
    pub x: f64,
    pub fx: f64,
    pub evaluations: usize,
}

const BISECTIONS: usize = 24;
const MAX_EVALS: usize = 300;

/// Finds `x` in `[lo, hi]` with `|f(x)| <= ftol`.
pub fn find_root<F>(mut f: F, lo: f64, hi: f64, ftol: f64) -> Result<Root>
where
    F: FnMut(f64) -> Result<f64>,
{
    let (mut a, mut b) = (lo, hi);
    let mut fa = f(a)?;
    let mut fb = f(b)?;
    let mut evals = 2;
    if fa.abs() <= ftol {
        return Ok(Root { x: a, fx: fa, evaluations: evals });
    }
    if fb.abs() <= ftol {
        return Ok(Root { x: b, fx: fb, evaluations: evals });
    }
    if !(fa.is_finite() && fb.is_finite()) || fa.signum() == fb.signum() {
        return Err(Error::Solver(format!(
            "no sign change on [{lo}, {hi}]: f({lo}) = {fa:.6e}, f({hi}) = {fb:.6e}"
        )));
    }
    for _ in 0..BISECTIONS {
        let c = 0.5 * (a + b);
        let fc = f(c)?;
        evals += 1;
        if fc.abs() <= ftol {
            return Ok(Root { x: c, fx: fc, evaluations: evals });
        }
        if fc.signum() == fa.signum() {
            a = c;
            fa = fc;
        } else {
            b = c;
            fb = fc;
        }
    }
    // Illinois: halve the retained endpoint's value when it is kept twice.
    let mut side = 0i8;
    while evals < MAX_EVALS {
        let c = (a * fb - b * fa) / (fb - fa);
        let c = if c.is_finite() && c > a.min(b) && c < a.max(b) { c } else { 0.5 * (a + b) };
        let fc = f(c)?;
        evals += 1;
        if fc.abs() <= ftol {
            return Ok(Root { x: c, fx: fc, evaluations: evals });
        }
        if fc.signum() == fb.signum() {
            b = c;
            fb = fc;
            if side == -1 {
                fa *= 0.5;
            }
            side = -1;
        } else {
            a = c;
            fa = fc;
            if side == 1 {
                fb *= 0.5;
            }
            side = 1;
        }
        if (b - a).abs() <= f64::EPSILON * a.abs().max(b.abs()) {
            break;
        }
    }
    Err(Error::Solver(format!(
        "tolerance {ftol:e} not reached within {evals} evaluations near [{a}, {b}]"
    )))
}
