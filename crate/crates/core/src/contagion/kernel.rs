use std::fmt;
use std::io::{self, Write};
use std::sync::Arc;

use nalgebra::DMatrix;

use super::expm::expm_generator;
use super::model::{write_matrix_csv, RateMatrix};
use crate::error::{Error, Result};
use crate::grid::TenorGrid;

/// Transition probabilities over one tenor interval.
#[derive(Clone, Debug)]
pub struct StepKernel {
    pub dt: f64,
    pub matrix: Arc<DMatrix<f64>>,
}

impl StepKernel {
    pub fn max_row_sum_error(&self) -> f64 {
        self.matrix
            .row_iter()
            .map(|r| (r.sum() - 1.0).abs())
            .fold(0.0, f64::max)
    }
}

/// Cleans rounding noise off a probability matrix and checks stochasticity.
pub(crate) fn finish_stochastic(mut k: DMatrix<f64>, tol: f64) -> Result<DMatrix<f64>> {
    for x in k.iter_mut() {
        if *x < 0.0 {
            if *x < -1e-14 {
                return Err(Error::Numerical(format!("negative transition probability {x}")));
            }
            *x = 0.0;
        } else if *x > 1.0 {
            if *x > 1.0 + 1e-14 {
                return Err(Error::Numerical(format!("transition probability {x} exceeds one")));
            }
            *x = 1.0;
        }
    }
    for (i, r) in k.row_iter().enumerate() {
        let err = (r.sum() - 1.0).abs();
        if err > tol {
            return Err(Error::Numerical(format!("kernel row {i} sums to 1 + {err:.3e}")));
        }
    }
    Ok(k)
}

/// Reuses work across intervals whose lengths agree to rounding.
pub(crate) struct StepCache<T> {
    entries: Vec<(f64, T)>,
}

impl<T> Default for StepCache<T> {
    fn default() -> Self {
        Self { entries: Vec::new() }
    }
}

impl<T: Clone> StepCache<T> {
    pub(crate) fn get_or_try(&mut self, dt: f64, make: impl FnOnce() -> Result<T>) -> Result<T> {
        if let Some((_, v)) = self.entries.iter().find(|(d, _)| (d - dt).abs() <= 1e-13 * dt.abs()) {
            return Ok(v.clone());
        }
        let v = make()?;
        self.entries.push((dt, v.clone()));
        Ok(v)
    }
}

/// One kernel per grid interval, `exp(Q·Δt)`. Intervals of equal length
/// share storage.
pub fn step_kernels<S: Copy + fmt::Display>(generator: &RateMatrix<S>, grid: &TenorGrid) -> Result<Vec<StepKernel>> {
    let mut cache = StepCache::default();
    let mut out = Vec::with_capacity(grid.steps());
    for x in 0..grid.steps() {
        let dt = grid.dt(x);
        let matrix = cache.get_or_try(dt, || Ok(Arc::new(finish_stochastic(expm_generator(generator.rates(), dt)?, 1e-12)?)))?;
        out.push(StepKernel { dt, matrix });
    }
    Ok(out)
}

/// CSV matrix dump of a kernel with the generator's state labels.
pub fn write_kernel_csv<S: fmt::Display, W: Write>(states: &[S], kernel: &StepKernel, mut w: W) -> io::Result<()> {
    write_matrix_csv(&mut w, states, &kernel.matrix)
}

/// Law of the state after propagating `initial` through `kernels`.
pub fn propagate(initial: &[f64], kernels: &[StepKernel]) -> Vec<f64> {
    let mut v = nalgebra::RowDVector::from_row_slice(initial);
    for k in kernels {
        v = &v * k.matrix.as_ref();
    }
    v.iter().copied().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contagion::model::{build_generator, GeneratorSpec, Multipliers};
    use approx::assert_relative_eq;

    fn gen() -> RateMatrix<crate::contagion::ChainState> {
        let s = GeneratorSpec::from_survival(3, 0.8, 2.5, Multipliers::new(1.0, 0.8, 1.3)).unwrap();
        build_generator(&s).unwrap()
    }

    #[test]
    fn rows_are_stochastic() {
        let g = gen();
        let grid = TenorGrid::uniform(3.0, 36).unwrap();
        let ks = step_kernels(&g, &grid).unwrap();
        assert_eq!(ks.len(), 36);
        for k in &ks {
            assert!(k.max_row_sum_error() <= 1e-12);
            assert!(k.matrix.iter().all(|&p| (0.0..=1.0).contains(&p)));
        }
        assert!(Arc::ptr_eq(&ks[0].matrix, &ks[35].matrix));
    }

    #[test]
    fn semigroup() {
        let g = gen();
        let a = expm_generator(g.rates(), 0.3).unwrap();
        let b = expm_generator(g.rates(), 0.45).unwrap();
        let ab = expm_generator(g.rates(), 0.75).unwrap();
        let diff = (&a * &b - ab).amax();
        assert!(diff < 1e-10, "{diff}");
    }

    #[test]
    fn dump_round_trips_probabilities() {
        let g = gen();
        let grid = TenorGrid::uniform(1.0, 1).unwrap();
        let ks = step_kernels(&g, &grid).unwrap();
        let mut buf = Vec::new();
        write_kernel_csv(g.states(), &ks[0], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let row: Vec<f64> = text.lines().nth(1).unwrap().split(',').skip(1).map(|x| x.parse().unwrap()).collect();
        assert_relative_eq!(row.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }
}
