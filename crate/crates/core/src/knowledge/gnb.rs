//! Gaussian naive Bayes with maximum-likelihood means, variances and priors.

use crate::codec::{ByteReader, ByteWriter};
use crate::dataset::TransitionClass;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

use super::logreg::class_set;

/// Variance floor as a fraction of the largest per-feature variance.
pub const VAR_FLOOR_RATIO: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianNb {
    classes: Vec<TransitionClass>,
    width: usize,
    log_priors: Vec<f64>,
    /// `classes x width`, row-major.
    means: Vec<f64>,
    vars: Vec<f64>,
}

impl GaussianNb {
    pub fn fit(x: &Matrix, y: &[TransitionClass]) -> Result<Self> {
        if x.rows() != y.len() {
            return Err(Error::dims(
                format!("{} labels", x.rows()),
                format!("{} labels", y.len()),
            ));
        }
        if x.rows() == 0 {
            return Err(Error::invalid("cannot fit naive Bayes on an empty dataset"));
        }
        let d = x.cols();
        let n = x.rows() as f64;
        let classes = class_set(y);

        // floor relative to the largest feature variance over all rows
        let mut max_var: f64 = 0.0;
        for j in 0..d {
            let mean = (0..x.rows()).map(|i| x.get(i, j)).sum::<f64>() / n;
            let var = (0..x.rows()).map(|i| (x.get(i, j) - mean).powi(2)).sum::<f64>() / n;
            max_var = max_var.max(var);
        }
        let floor = if max_var > 0.0 {
            VAR_FLOOR_RATIO * max_var
        } else {
            VAR_FLOOR_RATIO
        };

        let mut log_priors = Vec::with_capacity(classes.len());
        let mut means = Vec::with_capacity(classes.len() * d);
        let mut vars = Vec::with_capacity(classes.len() * d);
        for &class in &classes {
            let rows: Vec<usize> = (0..x.rows()).filter(|&i| y[i] == class).collect();
            let nc = rows.len() as f64;
            log_priors.push((nc / n).ln());
            for j in 0..d {
                let mean = rows.iter().map(|&i| x.get(i, j)).sum::<f64>() / nc;
                let var = rows.iter().map(|&i| (x.get(i, j) - mean).powi(2)).sum::<f64>() / nc;
                means.push(mean);
                vars.push(var.max(floor));
            }
        }
        Ok(GaussianNb {
            classes,
            width: d,
            log_priors,
            means,
            vars,
        })
    }

    pub fn classes(&self) -> &[TransitionClass] {
        &self.classes
    }

    pub fn feature_width(&self) -> usize {
        self.width
    }

    pub fn means(&self) -> &[f64] {
        &self.means
    }

    pub fn variances(&self) -> &[f64] {
        &self.vars
    }

    /// `ln p(C_k) + sum_i ln N(x_i; mu_ki, var_ki)` per class.
    pub fn log_joint(&self, x: &[f64]) -> Vec<f64> {
        let d = self.width;
        (0..self.classes.len())
            .map(|c| {
                let mu = &self.means[c * d..(c + 1) * d];
                let var = &self.vars[c * d..(c + 1) * d];
                self.log_priors[c]
                    + x.iter()
                        .zip(mu)
                        .zip(var)
                        .map(|((v, m), s)| -0.5 * (2.0 * std::f64::consts::PI * s).ln() - (v - m).powi(2) / (2.0 * s))
                        .sum::<f64>()
            })
            .collect()
    }

    /// Normalized class posteriors, aligned with [`Self::classes`].
    pub fn posteriors(&self, x: &[f64]) -> Vec<f64> {
        let lj = self.log_joint(x);
        let max = lj.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = lj.iter().map(|v| (v - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.into_iter().map(|e| e / total).collect()
    }

    pub fn predict_row(&self, x: &[f64]) -> TransitionClass {
        let lj = self.log_joint(x);
        let mut best = 0;
        for c in 1..lj.len() {
            if lj[c] > lj[best] {
                best = c;
            }
        }
        self.classes[best]
    }

    pub(crate) fn write(&self, w: &mut ByteWriter) {
        w.u32(self.width as u32);
        w.f64s(&self.log_priors);
        w.f64s(&self.means);
        w.f64s(&self.vars);
    }

    pub(crate) fn read(r: &mut ByteReader<'_>, classes: Vec<TransitionClass>) -> Result<Self> {
        let width = r.u32()? as usize;
        let log_priors = r.f64s()?;
        let means = r.f64s()?;
        let vars = r.f64s()?;
        let k = classes.len();
        if log_priors.len() != k || means.len() != k * width || vars.len() != k * width {
            return Err(Error::ModelFormat("naive Bayes payload size mismatch".into()));
        }
        Ok(GaussianNb {
            classes,
            width,
            log_priors,
            means,
            vars,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use TransitionClass::*;

    #[test]
    fn symmetric_classes_split_at_zero() {
        let x = Matrix::from_rows(&[[-1.0], [-1.001], [-0.999], [1.0], [1.001], [0.999]]).unwrap();
        let y = vec![Persist, Persist, Persist, Urbanize, Urbanize, Urbanize];
        let m = GaussianNb::fit(&x, &y).unwrap();
        assert_eq!(m.predict_row(&[-0.01]), Persist);
        assert_eq!(m.predict_row(&[0.01]), Urbanize);
    }

    #[test]
    fn single_class_is_constant() {
        let x = Matrix::from_rows(&[[0.2, 1.0], [0.4, 1.0]]).unwrap();
        let m = GaussianNb::fit(&x, &[BuiltPersist, BuiltPersist]).unwrap();
        assert_eq!(m.predict_row(&[-9.0, -1.0]), BuiltPersist);
    }

    #[test]
    fn posteriors_match_hand_computation() {
        // class 0: rows (0,0) (2,2); class 2: rows (1,3) (3,1) (2,2)
        let x = Matrix::from_rows(&[[0.0, 0.0], [2.0, 2.0], [1.0, 3.0], [3.0, 1.0], [2.0, 2.0]]).unwrap();
        let y = vec![Persist, Persist, Urbanize, Urbanize, Urbanize];
        let m = GaussianNb::fit(&x, &y).unwrap();
        // class 0: mean (1,1), var (1,1), prior 2/5
        // class 2: mean (2,2), var (2/3, 2/3), prior 3/5
        let q = [1.5, 0.5];
        let normal =
            |v: f64, mu: f64, s: f64| (-(v - mu).powi(2) / (2.0 * s)).exp() / (2.0 * std::f64::consts::PI * s).sqrt();
        let j0 = 0.4 * normal(1.5, 1.0, 1.0) * normal(0.5, 1.0, 1.0);
        let j2 = 0.6 * normal(1.5, 2.0, 2.0 / 3.0) * normal(0.5, 2.0, 2.0 / 3.0);
        let post = m.posteriors(&q);
        assert!((post[0] - j0 / (j0 + j2)).abs() < 1e-9);
        assert!((post[1] - j2 / (j0 + j2)).abs() < 1e-9);
    }

    #[test]
    fn constant_columns_are_floored() {
        let x = Matrix::from_rows(&[[1.0, 0.5], [1.0, -0.5], [-1.0, 0.1]]).unwrap();
        let y = vec![BuiltPersist, BuiltPersist, Persist];
        let m = GaussianNb::fit(&x, &y).unwrap();
        assert!(m.variances().iter().all(|&v| v > 0.0));
        assert!(m.posteriors(&[1.0, 0.0]).iter().all(|p| p.is_finite()));
    }
}
