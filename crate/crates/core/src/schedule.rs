use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform time grid running from `1 - n_skip/n_total` down to `0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditSchedule {
    n_total: usize,
    n_skip: usize,
    grid: Vec<f64>,
}

impl EditSchedule {
    pub fn new(n_total: usize, n_skip: usize) -> Result<Self> {
        if n_total == 0 {
            return Err(Error::invalid("schedule needs at least one step"));
        }
        if n_skip >= n_total {
            return Err(Error::invalid(format!(
                "n_skip ({n_skip}) must be smaller than n_total ({n_total})"
            )));
        }
        // (n_total - i) / n_total keeps the last point exactly 0.
        let grid = (n_skip..=n_total)
            .map(|i| (n_total - i) as f64 / n_total as f64)
            .collect();
        Ok(Self {
            n_total,
            n_skip,
            grid,
        })
    }

    pub fn n_total(&self) -> usize {
        self.n_total
    }

    pub fn n_skip(&self) -> usize {
        self.n_skip
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn t_start(&self) -> f64 {
        self.grid[0]
    }

    /// Number of Euler steps (grid intervals).
    pub fn n_steps(&self) -> usize {
        self.grid.len() - 1
    }

    /// `(t_current, t_next)` for every step, in integration order.
    pub fn intervals(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.grid.windows(2).map(|w| (w[0], w[1]))
    }
}

/// Shorthand for [`EditSchedule::new`].
pub fn make_schedule(n_total: usize, n_skip: usize) -> Result<EditSchedule> {
    EditSchedule::new(n_total, n_skip)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_operating_point() {
        let s = make_schedule(50, 10).unwrap();
        assert_eq!(s.grid().len(), 41);
        assert_eq!(s.t_start(), 0.8);
        assert_eq!(*s.grid().last().unwrap(), 0.0);
        assert_eq!(s.n_steps(), 40);
    }

    #[test]
    fn small_grids() {
        assert_eq!(make_schedule(1, 0).unwrap().grid(), &[1.0, 0.0]);
        assert_eq!(make_schedule(4, 2).unwrap().grid(), &[0.5, 0.25, 0.0]);
    }

    #[test]
    fn skip_must_leave_a_step() {
        assert!(make_schedule(5, 5).is_err());
        assert!(make_schedule(5, 7).is_err());
        assert!(make_schedule(0, 0).is_err());
    }

    #[test]
    fn gaps_are_uniform_and_decreasing() {
        for n in 1..60 {
            for skip in 0..n {
                let s = make_schedule(n, skip).unwrap();
                for (a, b) in s.intervals() {
                    assert!(b < a);
                    assert!(((a - b) - 1.0 / n as f64).abs() < 1e-12);
                }
            }
        }
    }
}
