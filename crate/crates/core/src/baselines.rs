//! Comparison forecasters: least-squares autoregression on a differenced
//! series, and naive persistence.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_AR_ORDER: usize = 8;
pub const DEFAULT_DIFFERENCING: usize = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArModel {
    pub p: usize,
    pub d: usize,
    /// `coefficients[i]` multiplies the value `i + 1` steps back.
    pub coefficients: Vec<f64>,
    pub intercept: f64,
    pub residual_variance: f64,
}

impl ArModel {
    pub fn validate(&self) -> Result<()> {
        if self.p == 0 || self.d > 1 || self.coefficients.len() != self.p {
            return Err(Error::InvalidConfig(format!(
                "AR model needs p >= 1, d in {{0,1}} and p coefficients (p={}, d={}, {} coefficients)",
                self.p,
                self.d,
                self.coefficients.len()
            )));
        }
        Ok(())
    }

    /// One-step prediction from the most recent `p` (differenced) values, oldest first.
    fn step(&self, recent: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(recent.iter().rev())
                .map(|(c, y)| c * y)
                .sum::<f64>()
    }
}

fn difference(values: &[f64], d: usize) -> Vec<f64> {
    let mut out = values.to_vec();
    for _ in 0..d {
        out = out.windows(2).map(|w| w[1] - w[0]).collect();
    }
    out
}

/// Fits AR(p) by ordinary least squares on the `d`-times differenced series.
/// A rank-deficient design (e.g. a constant series) falls back to an
/// intercept-only model.
pub fn ar_fit(series: &[f64], p: usize, d: usize) -> Result<ArModel> {
    if p == 0 || d > 1 {
        return Err(Error::InvalidConfig(format!("AR order p={p} and differencing d={d}")));
    }
    if series.len() <= p + d + 1 {
        return Err(Error::SeriesTooShort {
            needed: p + d + 2,
            actual: series.len(),
        });
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidSeries("non-finite value".into()));
    }
    let z = difference(series, d);
    let rows = z.len() - p;
    let design = DMatrix::from_fn(rows, p + 1, |r, c| if c == 0 { 1.0 } else { z[p + r - c] });
    let target = DVector::from_iterator(rows, z[p..].iter().copied());

    let svd = design.clone().svd(true, true);
    let largest = svd.singular_values.max();
    let tol = largest * 1e-10 * (rows.max(p + 1) as f64);
    let full_rank = largest > 0.0 && svd.rank(tol) == p + 1;
    let (intercept, coefficients) = match full_rank.then(|| svd.solve(&target, tol)) {
        Some(Ok(beta)) => (beta[0], beta.iter().skip(1).copied().collect()),
        _ => (target.mean(), vec![0.0; p]),
    };
    let model = ArModel {
        p,
        d,
        coefficients,
        intercept,
        residual_variance: 0.0,
    };
    let sse: f64 = (0..rows)
        .map(|r| {
            let e = z[p + r] - model.step(&z[r..p + r]);
            e * e
        })
        .sum();
    Ok(ArModel {
        residual_variance: sse / rows as f64,
        ..model
    })
}

/// Recursive multi-step forecast; own predictions feed later steps.
pub fn ar_forecast(model: &ArModel, history: &[f64], steps: usize) -> Result<Vec<f64>> {
    model.validate()?;
    let needed = model.p + model.d;
    if history.len() < needed {
        return Err(Error::InsufficientHistory {
            needed,
            actual: history.len(),
        });
    }
    let mut z = difference(&history[history.len() - needed..], model.d);
    let mut level = *history.last().expect("non-empty history");
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let next = model.step(&z[z.len() - model.p..]);
        z.push(next);
        if model.d == 1 {
            level += next;
            out.push(level);
        } else {
            out.push(next);
        }
    }
    Ok(out)
}

pub fn naive_forecast(history: &[f64], steps: usize) -> Result<Vec<f64>> {
    let last = *history.last().ok_or(Error::InsufficientHistory { needed: 1, actual: 0 })?;
    Ok(vec![last; steps])
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    use super::*;

    fn ar1(phi: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut y = 0.0;
        (0..n)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                y = phi * y + e;
                y
            })
            .collect()
    }

    #[test]
    fn constant_series_falls_back_to_intercept() {
        let m = ar_fit(&[5.0; 40], 3, 0).unwrap();
        assert!((m.intercept - 5.0).abs() < 1e-12);
        assert!(m.coefficients.iter().all(|c| c.abs() < 1e-12));
        let f = ar_forecast(&m, &[5.0; 10], 6).unwrap();
        assert!(f.iter().all(|v| (v - 5.0).abs() < 1e-12));
    }

    #[test]
    fn recovers_ar1_coefficient() {
        let y = ar1(0.8, 2000, 11);
        let m = ar_fit(&y, 1, 0).unwrap();
        assert!((0.7..=0.9).contains(&m.coefficients[0]), "{}", m.coefficients[0]);
        assert!((m.residual_variance - 1.0).abs() < 0.15);
    }

    #[test]
    fn ramp_continues_under_differencing() {
        let ramp: Vec<f64> = (0..50).map(|t| 3.0 + 0.5 * t as f64).collect();
        let m = ar_fit(&ramp, 4, 1).unwrap();
        let f = ar_forecast(&m, &ramp, 5).unwrap();
        for (k, v) in f.iter().enumerate() {
            assert!((v - (3.0 + 0.5 * (50 + k) as f64)).abs() < 1e-6);
        }
    }

    #[test]
    fn degenerate_coefficients() {
        let zero = ArModel { p: 2, d: 0, coefficients: vec![0.0, 0.0], intercept: 1.5, residual_variance: 0.0 };
        assert_eq!(ar_forecast(&zero, &[9.0, 4.0], 3).unwrap(), vec![1.5; 3]);
        let unit = ArModel { p: 1, d: 0, coefficients: vec![1.0], intercept: 0.0, residual_variance: 0.0 };
        assert_eq!(ar_forecast(&unit, &[2.0, 7.0], 4).unwrap(), vec![7.0; 4]);
    }

    #[test]
    fn hand_unrolled_ar2() {
        let m = ArModel { p: 2, d: 0, coefficients: vec![0.5, -0.25], intercept: 0.1, residual_variance: 0.0 };
        let (a, b) = (2.0, 3.0);
        let s1 = 0.1 + 0.5 * b - 0.25 * a;
        let s2 = 0.1 + 0.5 * s1 - 0.25 * b;
        let s3 = 0.1 + 0.5 * s2 - 0.25 * s1;
        let f = ar_forecast(&m, &[a, b], 3).unwrap();
        for (got, want) in f.iter().zip([s1, s2, s3]) {
            assert!((got - want).abs() < 1e-12);
        }
    }

    #[test]
    fn differenced_forecast_matches_manual_recursion() {
        let m = ArModel { p: 1, d: 1, coefficients: vec![0.5], intercept: 0.0, residual_variance: 0.0 };
        // last diff 4, so next diffs 2, 1 on top of level 10.
        assert_eq!(ar_forecast(&m, &[6.0, 10.0], 2).unwrap(), vec![12.0, 13.0]);
    }

    #[test]
    fn fit_and_forecast_preconditions() {
        assert!(matches!(ar_fit(&[1.0, 2.0, 3.0], 2, 0), Err(Error::SeriesTooShort { .. })));
        assert!(ar_fit(&[1.0; 20], 0, 0).is_err());
        assert!(ar_fit(&[1.0; 20], 1, 2).is_err());
        let m = ar_fit(&ar1(0.3, 100, 1), 3, 1).unwrap();
        assert!(matches!(ar_forecast(&m, &[1.0, 2.0, 3.0], 2), Err(Error::InsufficientHistory { .. })));
    }

    #[test]
    fn naive_repeats_last_value() {
        assert_eq!(naive_forecast(&[1.0, 3.0, 7.0], 4).unwrap(), vec![7.0; 4]);
        assert!(naive_forecast(&[], 3).is_err());
        let f = naive_forecast(&[2.0; 5], 3).unwrap();
        assert_eq!(f.iter().map(|v| (v - 2.0).powi(2)).sum::<f64>(), 0.0);
    }

    #[test]
    fn naive_error_on_ramp_grows_with_horizon() {
        let hist: Vec<f64> = (0..10).map(f64::from).collect();
        let f = naive_forecast(&hist, 6).unwrap();
        let err: Vec<f64> = f.iter().enumerate().map(|(k, v)| (10.0 + k as f64 - v).powi(2)).collect();
        assert!(err.windows(2).all(|w| w[1] > w[0]));
    }

    proptest! {
        #[test]
        fn forecasts_are_length_exact_and_deterministic(
            seed in 0u64..1000, p in 1usize..6, d in 0usize..2, steps in 0usize..40,
        ) {
            let y = ar1(0.5, 120, seed);
            let m = ar_fit(&y, p, d).unwrap();
            let a = ar_forecast(&m, &y, steps).unwrap();
            prop_assert_eq!(a.len(), steps);
            prop_assert_eq!(a, ar_forecast(&m, &y, steps).unwrap());
        }
    }
}
