use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Piecewise-linear series in time, held constant outside its range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    times: Vec<f64>,
    values: Vec<f64>,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if times.is_empty() || times.len() != values.len() {
            return Err(Error::param(
                "boundary series",
                format!("{} times but {} values", times.len(), values.len()),
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::param("boundary series", "times must be strictly increasing"));
        }
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::param("boundary series", format!("value {v} outside [0, 1]")));
        }
        Ok(Self { times, values })
    }

    pub fn constant(value: f64) -> Result<Self> {
        Self::new(vec![0.0], vec![value])
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn eval(&self, t: f64) -> f64 {
        let n = self.times.len();
        if n == 1 || t <= self.times[0] {
            return self.values[0];
        }
        if t >= self.times[n - 1] {
            return self.values[n - 1];
        }
        let i = self.times.partition_point(|&s| s <= t) - 1;
        let w = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        self.values[i] + w * (self.values[i + 1] - self.values[i])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoundaryCondition {
    Periodic,
    /// Ghost densities to the left and right of the domain.
    Dirichlet { left: TimeSeries, right: TimeSeries },
}

impl BoundaryCondition {
    pub fn dirichlet_constant(left: f64, right: f64) -> Result<Self> {
        Ok(BoundaryCondition::Dirichlet {
            left: TimeSeries::constant(left)?,
            right: TimeSeries::constant(right)?,
        })
    }

    /// `(left, right)` ghost values, `None` when periodic.
    pub fn ghosts(&self, t: f64) -> Option<(f64, f64)> {
        match self {
            BoundaryCondition::Periodic => None,
            BoundaryCondition::Dirichlet { left, right } => Some((left.eval(t), right.eval(t))),
        }
    }

    pub fn is_periodic(&self) -> bool {
        matches!(self, BoundaryCondition::Periodic)
    }
}
