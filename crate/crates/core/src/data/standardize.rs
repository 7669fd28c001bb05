use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const STD_FLOOR: f64 = 1e-8;

/// Per-column mean and (population) standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    /// Fit on the rows of `x` not flagged in `exclude`.
    pub fn fit(x: &Tensor, exclude: Option<&[bool]>) -> Self {
        let (n, c) = (x.nrows(), x.ncols());
        let rows: Vec<usize> = (0..n)
            .filter(|&i| !exclude.is_some_and(|m| m[i]))
            .collect();
        let cnt = rows.len().max(1) as f64;
        let mut mean = vec![0.0; c];
        for &i in &rows {
            for (m, v) in mean.iter_mut().zip(x.row(i)) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= cnt);
        let mut var = vec![0.0; c];
        for &i in &rows {
            for ((s, v), m) in var.iter_mut().zip(x.row(i)).zip(&mean) {
                *s += (v - m) * (v - m);
            }
        }
        let std = var.iter().map(|s| (s / cnt).sqrt().max(STD_FLOOR)).collect();
        Self { mean, std }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    fn check(&self, x: &Tensor) -> Result<()> {
        if x.ncols() != self.dim() {
            return Err(Error::ShapeMismatch {
                op: "standardize",
                left: x.shape().to_vec(),
                right: vec![self.dim()],
            });
        }
        Ok(())
    }

    pub fn apply(&self, x: &Tensor) -> Result<Tensor> {
        self.check(x)?;
        let c = self.dim();
        let mut out = x.clone();
        for (k, v) in out.values_mut().iter_mut().enumerate() {
            let j = k % c;
            *v = (*v - self.mean[j]) / self.std[j];
        }
        Ok(out)
    }

    pub fn invert(&self, z: &Tensor) -> Result<Tensor> {
        self.check(z)?;
        let c = self.dim();
        let mut out = z.clone();
        for (k, v) in out.values_mut().iter_mut().enumerate() {
            let j = k % c;
            *v = *v * self.std[j] + self.mean[j];
        }
        Ok(out)
    }
}

/// Standardize columnwise. Without `stats`, they are fitted on the rows not
/// flagged in `exclude` (the held-out mask).
pub fn standardize(
    x: &Tensor,
    stats: Option<&Standardizer>,
    exclude: Option<&[bool]>,
) -> Result<(Tensor, Standardizer)> {
    let stats = match stats {
        Some(s) => s.clone(),
        None => Standardizer::fit(x, exclude),
    };
    Ok((stats.apply(x)?, stats))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn constant_column_maps_to_zero() {
        let x = Tensor::from_rows(&[vec![3.0, 1.0], vec![3.0, 2.0], vec![3.0, 4.0]]).unwrap();
        let (z, s) = standardize(&x, None, None).unwrap();
        assert_eq!(s.std[0], STD_FLOOR);
        assert!((0..3).all(|i| z.get(i, 0) == 0.0));
    }

    #[test]
    fn excluded_rows_do_not_shape_stats() {
        let x = Tensor::from_rows(&[vec![1.0], vec![3.0], vec![100.0]]).unwrap();
        let s = Standardizer::fit(&x, Some(&[false, false, true]));
        assert_eq!(s.mean, vec![2.0]);
        assert_eq!(s.std, vec![1.0]);
    }

    #[test]
    fn wrong_width_rejected() {
        let s = Standardizer::fit(&Tensor::zeros(&[3, 2]), None);
        assert!(s.apply(&Tensor::zeros(&[3, 3])).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_and_moments(
            rows in 2usize..30,
            cols in 1usize..5,
            seed in any::<u64>(),
        ) {
            use rand::Rng;
            let mut rng = crate::seed::rng(seed);
            let vals: Vec<f64> = (0..rows * cols).map(|_| rng.random_range(-50.0..50.0)).collect();
            let x = Tensor::matrix(rows, cols, vals).unwrap();
            let (z, s) = standardize(&x, None, None).unwrap();
            let back = s.invert(&z).unwrap();
            for (a, b) in back.values().iter().zip(x.values()) {
                prop_assert!((a - b).abs() < 1e-10);
            }
            for j in 0..cols {
                let col: Vec<f64> = (0..rows).map(|i| z.get(i, j)).collect();
                let m = col.iter().sum::<f64>() / rows as f64;
                let v = col.iter().map(|c| (c - m) * (c - m)).sum::<f64>() / rows as f64;
                prop_assert!(m.abs() < 1e-9);
                prop_assert!((v.sqrt() - 1.0).abs() < 1e-9);
            }
        }
    }
}
