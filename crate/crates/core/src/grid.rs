use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Strictly increasing observation dates `0 = t0 < t1 < ... < tM = T`, in years.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TenorGrid {
    dates: Vec<f64>,
}

impl TenorGrid {
    /// `steps` equal intervals on `[0, maturity]`.
    pub fn uniform(maturity: f64, steps: usize) -> Result<Self> {
        if steps == 0 {
            return Err(Error::InvalidGrid("at least one step is required".into()));
        }
        if !(maturity > 0.0 && maturity.is_finite()) {
            return Err(Error::InvalidGrid(format!("maturity must be positive, got {maturity}")));
        }
        let dt = maturity / steps as f64;
        let mut dates: Vec<f64> = (0..steps).map(|j| j as f64 * dt).collect();
        dates.push(maturity);
        Ok(Self { dates })
    }

    pub fn from_dates(dates: Vec<f64>) -> Result<Self> {
        if dates.len() < 2 {
            return Err(Error::InvalidGrid("need at least two dates".into()));
        }
        if dates[0] != 0.0 {
            return Err(Error::InvalidGrid(format!("first date must be 0, got {}", dates[0])));
        }
        for w in dates.windows(2) {
            if !(w[1] > w[0]) || !w[1].is_finite() {
                return Err(Error::InvalidGrid(format!(
                    "dates must be strictly increasing: {} then {}",
                    w[0], w[1]
                )));
            }
        }
        Ok(Self { dates })
    }

    pub fn dates(&self) -> &[f64] {
        &self.dates
    }

    /// Number of intervals `M`.
    pub fn steps(&self) -> usize {
        self.dates.len() - 1
    }

    pub fn maturity(&self) -> f64 {
        *self.dates.last().unwrap()
    }

    pub fn date(&self, j: usize) -> f64 {
        self.dates[j]
    }

    /// Length of interval `(t_x, t_{x+1}]`.
    pub fn dt(&self, x: usize) -> f64 {
        self.dates[x + 1] - self.dates[x]
    }

    /// Index `x` of the interval `(t_x, t_{x+1}]` containing `t`, or `None`
    /// when `t` is outside `(0, T]`.
    pub fn interval_of(&self, t: f64) -> Option<usize> {
        if !(t > 0.0) || t > self.maturity() {
            return None;
        }
        // first date >= t, minus one
        let k = self.dates.partition_point(|&d| d < t);
        Some(k - 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_grid_ends_exactly_at_maturity() {
        let g = TenorGrid::uniform(3.0, 36).unwrap();
        assert_eq!(g.steps(), 36);
        assert_eq!(g.maturity(), 3.0);
        assert!((g.dt(5) - 1.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_dates() {
        assert!(TenorGrid::from_dates(vec![0.0]).is_err());
        assert!(TenorGrid::from_dates(vec![0.5, 1.0]).is_err());
        assert!(TenorGrid::from_dates(vec![0.0, 1.0, 1.0]).is_err());
        assert!(TenorGrid::uniform(1.0, 0).is_err());
    }

    #[test]
    fn interval_lookup_uses_right_closed_intervals() {
        let g = TenorGrid::from_dates(vec![0.0, 1.0, 2.0]).unwrap();
        assert_eq!(g.interval_of(0.0), None);
        assert_eq!(g.interval_of(0.3), Some(0));
        assert_eq!(g.interval_of(1.0), Some(0));
        assert_eq!(g.interval_of(1.0000001), Some(1));
        assert_eq!(g.interval_of(2.0), Some(1));
        assert_eq!(g.interval_of(2.1), None);
    }
}
