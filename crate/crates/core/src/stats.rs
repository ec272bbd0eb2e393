//! Small statistics toolkit: means, jackknife and bootstrap errors, least squares.

use rand::Rng;

/// Sample mean and standard error of the mean.
pub fn mean_and_error(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, f64::INFINITY);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Blocked delete-one jackknife.
///
/// `columns` holds per-sample observables (one slice per observable, all of
/// the same length). `estimator` maps the column means to the quantity of
/// interest. Samples are grouped into at most `blocks` contiguous blocks.
/// Returns the full-sample estimate and its jackknife standard error.
pub fn jackknife<F>(columns: &[&[f64]], blocks: usize, estimator: F) -> (f64, f64)
where
    F: Fn(&[f64]) -> f64,
{
    let n = columns.first().map_or(0, |c| c.len());
    assert!(columns.iter().all(|c| c.len() == n), "ragged jackknife input");
    let k = columns.len();
    let totals: Vec<f64> = columns.iter().map(|c| c.iter().sum()).collect();
    let full_means: Vec<f64> = totals.iter().map(|t| t / n as f64).collect();
    let full = estimator(&full_means);
    let blocks = blocks.min(n);
    if blocks < 2 {
        return (full, f64::INFINITY);
    }

    let mut leave_out = Vec::with_capacity(blocks);
    let mut means = vec![0.0; k];
    for b in 0..blocks {
        let lo = b * n / blocks;
        let hi = (b + 1) * n / blocks;
        let kept = (n - (hi - lo)) as f64;
        for (j, col) in columns.iter().enumerate() {
            let block_sum: f64 = col[lo..hi].iter().sum();
            means[j] = (totals[j] - block_sum) / kept;
        }
        leave_out.push(estimator(&means));
    }
    let avg = leave_out.iter().sum::<f64>() / blocks as f64;
    let var = leave_out.iter().map(|v| (v - avg).powi(2)).sum::<f64>() * (blocks - 1) as f64
        / blocks as f64;
    (full, var.sqrt())
}

/// Nonparametric bootstrap over rows: resample indices with replacement,
/// apply `statistic` to each resample, and return the standard deviation of
/// the replicates.
pub fn bootstrap_error<R, F>(rng: &mut R, rows: usize, replicates: usize, statistic: F) -> f64
where
    R: Rng,
    F: Fn(&[usize]) -> f64,
{
    if rows == 0 || replicates < 2 {
        return f64::INFINITY;
    }
    let mut idx = vec![0usize; rows];
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..replicates {
        for slot in idx.iter_mut() {
            *slot = rng.random_range(0..rows);
        }
        let v = statistic(&idx);
        sum += v;
        sum_sq += v * v;
    }
    let r = replicates as f64;
    let mean = sum / r;
    ((sum_sq / r - mean * mean) * r / (r - 1.0)).max(0.0).sqrt()
}

/// Ordinary least-squares line `y = intercept + slope * x`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinearFit {
    pub slope: f64,
    pub intercept: f64,
    pub slope_error: f64,
    pub r_squared: f64,
}

/// Fit a line by ordinary least squares. Needs at least two distinct `x`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> LinearFit {
    assert_eq!(x.len(), y.len());
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let slope_error = if x.len() > 2 {
        (sse / (n - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    let r_squared = if syy > 0.0 { 1.0 - sse / syy } else { 1.0 };
    LinearFit {
        slope,
        intercept,
        slope_error,
        r_squared,
    }
}

/// Weighted least-squares line with weights `1/sigma²`. The slope error is the
/// formal one from the supplied `sigma`.
pub fn weighted_linear_fit(x: &[f64], y: &[f64], sigma: &[f64]) -> LinearFit {
    assert!(x.len() == y.len() && y.len() == sigma.len());
    let w: Vec<f64> = sigma.iter().map(|s| 1.0 / (s * s)).collect();
    let sw: f64 = w.iter().sum();
    let mx = x.iter().zip(&w).map(|(a, w)| a * w).sum::<f64>() / sw;
    let my = y.iter().zip(&w).map(|(b, w)| b * w).sum::<f64>() / sw;
    let sxx: f64 = x.iter().zip(&w).map(|(a, w)| w * (a - mx).powi(2)).sum();
    let sxy: f64 = x
        .iter()
        .zip(y)
        .zip(&w)
        .map(|((a, b), w)| w * (a - mx) * (b - my))
        .sum();
    let syy: f64 = y.iter().zip(&w).map(|(b, w)| w * (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = x
        .iter()
        .zip(y)
        .zip(&w)
        .map(|((a, b), w)| w * (b - intercept - slope * a).powi(2))
        .sum();
    LinearFit {
        slope,
        intercept,
        slope_error: (1.0 / sxx).sqrt(),
        r_squared: if syy > 0.0 { 1.0 - sse / syy } else { 1.0 },
    }
}
