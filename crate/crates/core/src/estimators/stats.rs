//! Batch-means errors, autocorrelation times and small fitting helpers.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal, StudentsT};

use crate::error::{Error, Result};

/// Minimum number of batches used for standard errors.
pub const MIN_BATCHES: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchMeans {
    pub mean: f64,
    pub se: f64,
    pub n: usize,
    pub batches: usize,
    pub n_eff: f64,
}

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Non-overlapping batch means with `batches` equal batches (the tail that
/// does not fill a batch is dropped from the error, not from the mean).
pub fn batch_means(xs: &[f64], batches: usize) -> Result<BatchMeans> {
    let batches = batches.max(MIN_BATCHES);
    if xs.len() < batches {
        return Err(Error::Degenerate(format!(
            "{} samples cannot form {batches} batches",
            xs.len()
        )));
    }
    let b = xs.len() / batches;
    let means: Vec<f64> = xs.chunks_exact(b).take(batches).map(mean).collect();
    let se = (variance(&means) / batches as f64).sqrt();
    let m = mean(xs);
    let var = variance(xs);
    let n_eff = if se > 0.0 { (var / (se * se)).min(xs.len() as f64) } else { xs.len() as f64 };
    Ok(BatchMeans { mean: m, se, n: xs.len(), batches, n_eff })
}

/// Integrated autocorrelation time with Sokal's automatic window `W >= c tau`.
pub fn integrated_autocorrelation(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 4 {
        return 1.0;
    }
    let m = mean(xs);
    let c0 = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n as f64;
    if c0 <= 0.0 {
        return 1.0;
    }
    let mut tau = 1.0;
    for t in 1..n / 2 {
        let ct = xs[..n - t].iter().zip(&xs[t..]).map(|(a, b)| (a - m) * (b - m)).sum::<f64>()
            / (n - t) as f64;
        tau += 2.0 * ct / c0;
        if t as f64 >= 6.0 * tau {
            break;
        }
    }
    tau.max(1.0)
}

/// Two-sided standard normal quantile for confidence `level`.
pub fn normal_quantile(level: f64) -> f64 {
    Normal::new(0.0, 1.0).expect("unit normal").inverse_cdf(0.5 + level / 2.0)
}

/// Two-sided Student t quantile.
pub fn t_quantile(level: f64, dof: f64) -> f64 {
    StudentsT::new(0.0, 1.0, dof).expect("positive dof").inverse_cdf(0.5 + level / 2.0)
}

/// Least squares fit `y = a + b x`, returning `(a, b, se_b, residuals)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> Result<(f64, f64, f64, Vec<f64>)> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Degenerate("linear fit needs two or more points".into()));
    }
    let n = x.len() as f64;
    let mx = mean(x);
    let my = mean(y);
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("all abscissae coincide".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let b = sxy / sxx;
    let a = my - b * mx;
    let res: Vec<f64> = x.iter().zip(y).map(|(xi, yi)| yi - a - b * xi).collect();
    let se_b = if x.len() > 2 {
        (res.iter().map(|r| r * r).sum::<f64>() / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok((a, b, se_b, res))
}
