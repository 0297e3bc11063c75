//! The (x, y, δ) sample. Covariates are rescaled to [0, 1] before
//! construction; responses of missing units are stored as NaN and are never
//! read by any estimator.

use crate::error::{Result, SqriError};
use ndarray::{Array1, Array2};

#[derive(Debug, Clone)]
pub struct Dataset {
    x: Array2<f64>,
    y: Array1<f64>,
    delta: Vec<bool>,
}

impl Dataset {
    pub fn new(x: Array2<f64>, y: Array1<f64>, delta: Vec<bool>) -> Result<Self> {
        let n = x.nrows();
        if y.len() != n || delta.len() != n {
            return Err(SqriError::InvalidInput(format!(
                "length mismatch: x has {n} rows, y {}, delta {}",
                y.len(),
                delta.len()
            )));
        }
        if n == 0 {
            return Err(SqriError::InvalidInput("empty dataset".into()));
        }
        if x.ncols() == 0 || x.ncols() > 2 {
            return Err(SqriError::InvalidInput(format!(
                "covariate dimension {} unsupported",
                x.ncols()
            )));
        }
        if x.iter().any(|&v| !(0.0..=1.0).contains(&v)) {
            return Err(SqriError::InvalidInput(
                "covariates must lie in [0, 1]; rescale first".into(),
            ));
        }
        let mut y = y;
        for i in 0..n {
            if delta[i] {
                if !y[i].is_finite() {
                    return Err(SqriError::InvalidInput(format!(
                        "respondent {i} has non-finite response"
                    )));
                }
            } else {
                y[i] = f64::NAN;
            }
        }
        Ok(Dataset { x, y, delta })
    }

    /// Build a fully observed dataset.
    pub fn complete(x: Array2<f64>, y: Array1<f64>) -> Result<Self> {
        let n = x.nrows();
        Self::new(x, y, vec![true; n])
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d_x(&self) -> usize {
        self.x.ncols()
    }

    pub fn x(&self) -> &Array2<f64> {
        &self.x
    }

    pub fn x_row(&self, i: usize) -> Vec<f64> {
        self.x.row(i).to_vec()
    }

    /// Response of unit i; NaN when missing.
    pub fn y(&self, i: usize) -> f64 {
        self.y[i]
    }

    pub fn delta(&self, i: usize) -> bool {
        self.delta[i]
    }

    pub fn respondent_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.delta[i]).collect()
    }

    pub fn missing_indices(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| !self.delta[i]).collect()
    }

    pub fn n_respondents(&self) -> usize {
        self.delta.iter().filter(|&&d| d).count()
    }

    pub fn n_missing(&self) -> usize {
        self.n() - self.n_respondents()
    }

    /// Fraction of missing units, the Ĉ_p plug-in.
    pub fn missing_fraction(&self) -> f64 {
        self.n_missing() as f64 / self.n() as f64
    }

    /// Replace missing responses by the supplied values (respondents kept).
    pub fn completed_with(&self, fills: &[(usize, f64)]) -> Result<Dataset> {
        let mut y = self.y.clone();
        let mut delta = self.delta.clone();
        for &(i, v) in fills {
            if i >= self.n() || self.delta[i] {
                return Err(SqriError::InvalidInput(format!(
                    "fill index {i} is not a missing unit"
                )));
            }
            y[i] = v;
            delta[i] = true;
        }
        if delta.iter().any(|&d| !d) {
            return Err(SqriError::InvalidInput(
                "completed_with left missing units unfilled".into(),
            ));
        }
        Dataset::new(self.x.clone(), y, delta)
    }

    /// Resample rows with replacement according to `indices`.
    pub fn resample(&self, indices: &[usize]) -> Result<Dataset> {
        let mut x = Array2::<f64>::zeros((indices.len(), self.d_x()));
        let mut y = Array1::<f64>::zeros(indices.len());
        let mut delta = Vec::with_capacity(indices.len());
        for (row, &i) in indices.iter().enumerate() {
            x.row_mut(row).assign(&self.x.row(i));
            y[row] = if self.delta[i] { self.y[i] } else { 0.0 };
            delta.push(self.delta[i]);
        }
        Dataset::new(x, y, delta)
    }
}
