//! Log-log regression and bootstrap intervals.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerLawFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Fits `y = e^intercept * x^slope` by ordinary least squares in log space.
pub fn fit_scaling_exponent(points: &[(f64, f64)]) -> Result<PowerLawFit> {
    if points.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "a scaling fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some(&(x, y)) = points.iter().find(|&&(x, y)| !(x > 0.0 && y > 0.0) || !x.is_finite() || !y.is_finite()) {
        return Err(Error::InvalidInput(format!("nonpositive point ({x}, {y}) in a log-log fit")));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let m = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / m;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = logs.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::InvalidInput("all x values coincide".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    Ok(PowerLawFit {
        slope,
        intercept,
        r_squared,
    })
}

/// Sample mean with a percentile bootstrap interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeanInterval {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Mean and 95% percentile interval from `resamples` bootstrap draws.
pub fn bootstrap_mean_ci(values: &[f64], resamples: usize, seed: u64) -> Result<MeanInterval> {
    if values.is_empty() {
        return Err(Error::InvalidInput("bootstrap of an empty sample".into()));
    }
    let m = values.len();
    let mean = values.iter().sum::<f64>() / m as f64;
    if m == 1 || resamples == 0 {
        return Ok(MeanInterval { mean, lo: mean, hi: mean });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..m).map(|_| values[rng.random_range(0..m)]).sum::<f64>() / m as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let at = |q: f64| means[((q * (resamples - 1) as f64).round() as usize).min(resamples - 1)];
    Ok(MeanInterval {
        mean,
        lo: at(0.025),
        hi: at(0.975),
    })
}
