//! Matrix exponential of a generator.
//!
//! Uses the shift `exp(Qt) = exp(−Λt)·exp((Q + ΛI)t)` with `Λ` the largest
//! exit rate, so every Taylor term is entrywise nonnegative, followed by
//! scaling and squaring.

use nalgebra::DMatrix;

use crate::error::{Error, Result};

const MAX_SQUARINGS: u32 = 48;

/// `exp(q·t)` for a matrix with nonnegative off-diagonal entries.
pub fn expm_generator(q: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    let n = q.nrows();
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::Numerical(format!("time step must be finite and nonnegative, got {t}")));
    }
    if t == 0.0 || n == 0 {
        return Ok(DMatrix::identity(n, n));
    }
    let lambda = (0..n).map(|i| -q[(i, i)]).fold(0.0f64, f64::max);
    if !lambda.is_finite() {
        return Err(Error::Numerical("generator has non-finite exit rate".into()));
    }
    if lambda == 0.0 {
        return Ok(DMatrix::identity(n, n));
    }
    let lt = lambda * t;
    let squarings = if lt <= 0.5 { 0 } else { (lt / 0.5).log2().ceil() as u32 };
    if squarings > MAX_SQUARINGS {
        return Err(Error::Numerical(format!(
            "rate·step {lt:.3e} too large for the exponential (needs {squarings} squarings)"
        )));
    }
    let h = t / f64::powi(2.0, squarings as i32);
    let mut b = q * h;
    for i in 0..n {
        b[(i, i)] += lambda * h;
    }
    // Taylor series of exp(b); ||b||_inf <= 0.5 so 30 terms is far beyond
    // double precision.
    let mut sum = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..=30 {
        term = &term * &b / k as f64;
        sum += &term;
        if term.amax() < 1e-18 * sum.amax() {
            break;
        }
    }
    sum *= (-lambda * h).exp();
    // rows of exp(Qt) sum to one for a conservative generator; pinning
    // that keeps rounding from compounding through the squarings
    let conservative = q.row_iter().all(|r| r.sum().abs() <= 1e-12 * r.amax().max(1.0));
    if conservative {
        normalize_rows(&mut sum);
    }
    for _ in 0..squarings {
        sum = &sum * &sum;
        if conservative {
            normalize_rows(&mut sum);
        }
    }
    if sum.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numerical("matrix exponential overflowed".into()));
    }
    Ok(sum)
}

fn normalize_rows(k: &mut DMatrix<f64>) {
    for mut r in k.row_iter_mut() {
        let s = r.sum();
        if s > 0.0 {
            r /= s;
        }
    }
}
