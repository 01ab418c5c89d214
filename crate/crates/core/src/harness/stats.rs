//! Sample statistics with batch-mean standard errors, and the
//! Kolmogorov-Smirnov distance to the limiting log-normal.

use crate::error::{Error, Result};
use crate::kernels::comp_sum;
use crate::limits::LimitLaw;
use statrs::distribution::{ContinuousCDF, Normal};

pub fn mean(xs: &[f64]) -> f64 {
    comp_sum(xs.iter().copied()) / xs.len() as f64
}

pub fn variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    comp_sum(xs.iter().map(|v| (v - m) * (v - m))) / (xs.len() as f64 - 1.0)
}

/// Standard (Pearson) kurtosis; 3 for a Gaussian.
pub fn kurtosis(xs: &[f64]) -> f64 {
    let m = mean(xs);
    let n = xs.len() as f64;
    let m2 = comp_sum(xs.iter().map(|v| (v - m).powi(2))) / n;
    let m4 = comp_sum(xs.iter().map(|v| (v - m).powi(4))) / n;
    m4 / (m2 * m2)
}

pub fn correlation(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut cov = 0.0;
    let mut va = 0.0;
    let mut vb = 0.0;
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    cov / (va.sqrt() * vb.sqrt())
}

pub fn fractional_moment(xs: &[f64], theta: f64) -> f64 {
    comp_sum(xs.iter().map(|v| v.powf(theta))) / xs.len() as f64
}

/// A statistic with a batch-mean standard error.
#[derive(Debug, Clone, Copy)]
pub struct Batched {
    pub value: f64,
    pub se: f64,
    pub batches: usize,
}

pub const MIN_BATCHES: usize = 30;

/// Evaluate `stat` on the full sample and attach the spread of the statistic
/// across `MIN_BATCHES` contiguous batches as a standard error.
pub fn batch_stat(xs: &[f64], stat: impl Fn(&[f64]) -> f64) -> Result<Batched> {
    if xs.len() < 2 * MIN_BATCHES {
        return Err(Error::Config(format!(
            "need at least {} samples for batch errors, got {}",
            2 * MIN_BATCHES,
            xs.len()
        )));
    }
    let b = MIN_BATCHES;
    let per = xs.len() / b;
    let vals: Vec<f64> = (0..b).map(|i| stat(&xs[i * per..(i + 1) * per])).collect();
    let vm = mean(&vals);
    let spread = comp_sum(vals.iter().map(|v| (v - vm) * (v - vm))) / (b as f64 - 1.0);
    Ok(Batched {
        value: stat(xs),
        se: (spread / b as f64).sqrt(),
        batches: b,
    })
}

/// Kolmogorov-Smirnov distance between log(samples) and the Gaussian
/// N(-sigma^2/2, sigma^2) of the weak-disorder limit.
pub fn ks_lognormal(samples: &[f64], law: &LimitLaw) -> Result<f64> {
    let nonpos = samples.iter().filter(|&&v| v <= 0.0).count();
    if nonpos > 0 {
        return Err(Error::NonPositive { count: nonpos });
    }
    if samples.len() < 100 {
        return Err(Error::Config(format!(
            "need >= 100 samples for the KS distance, got {}",
            samples.len()
        )));
    }
    let mut logs: Vec<f64> = samples.iter().map(|v| v.ln()).collect();
    logs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let sigma = law.sigma_sq.sqrt();
    // the beta_hat = 0 limit is the point mass at Z = 1
    let cdf: Box<dyn Fn(f64) -> f64> = if sigma == 0.0 {
        Box::new(|x: f64| if x >= 0.0 { 1.0 } else { 0.0 })
    } else {
        let normal = Normal::new(-0.5 * law.sigma_sq, sigma).expect("valid normal");
        Box::new(move |x: f64| normal.cdf(x))
    };
    let n = logs.len() as f64;
    let mut d = 0.0f64;
    for (i, x) in logs.iter().enumerate() {
        let f = cdf(*x);
        d = d.max((f - i as f64 / n).abs());
        d = d.max(((i as f64 + 1.0) / n - f).abs());
    }
    Ok(d)
}

/// Empirical covariance matrix of log Z across jointly sampled points,
/// with batch-mean errors. Realizations where any coordinate is nonpositive
/// are dropped and counted.
#[derive(Debug, Clone)]
pub struct LogCovariance {
    pub cov: Vec<Vec<f64>>,
    pub se: Vec<Vec<f64>>,
    pub dropped: usize,
}

pub fn covariance_of_logs(columns: &[Vec<f64>]) -> Result<LogCovariance> {
    let p = columns.len();
    if p == 0 {
        return Err(Error::Config("no sample columns".into()));
    }
    let n = columns[0].len();
    let keep: Vec<usize> = (0..n)
        .filter(|&i| columns.iter().all(|c| c[i] > 0.0))
        .collect();
    let dropped = n - keep.len();
    if keep.len() < 2 * MIN_BATCHES {
        return Err(Error::NonPositive { count: dropped });
    }
    let logs: Vec<Vec<f64>> = columns
        .iter()
        .map(|c| keep.iter().map(|&i| c[i].ln()).collect())
        .collect();
    let sample_cov = |xs: &[f64], ys: &[f64]| -> f64 {
        let (mx, my) = (mean(xs), mean(ys));
        comp_sum(xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my))) / (xs.len() as f64 - 1.0)
    };
    let mut cov = vec![vec![0.0; p]; p];
    let mut se = vec![vec![0.0; p]; p];
    for a in 0..p {
        for b in a..p {
            let full = sample_cov(&logs[a], &logs[b]);
            let bcount = MIN_BATCHES;
            let per = keep.len() / bcount;
            let vals: Vec<f64> = (0..bcount)
                .map(|i| {
                    let sl = i * per..(i + 1) * per;
                    sample_cov(&logs[a][sl.clone()], &logs[b][sl])
                })
                .collect();
            let vm = mean(&vals);
            let spread =
                comp_sum(vals.iter().map(|v| (v - vm) * (v - vm))) / (bcount as f64 - 1.0);
            cov[a][b] = full;
            cov[b][a] = full;
            let s = (spread / bcount as f64).sqrt();
            se[a][b] = s;
            se[b][a] = s;
        }
    }
    Ok(LogCovariance { cov, se, dropped })
}
