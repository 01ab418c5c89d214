//! Closed-form limit laws, the covariance kernel of the rescaled field with
//! its quadrature, and samplers for the limiting objects including the
//! finite-M block approximation.

use crate::chaos::dominated_decomposition;
use crate::error::{Error, Result};
use crate::partition::FieldWeight;
use crate::quad;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use std::collections::HashMap;

/// The weak-disorder log-normal limit at disorder strength beta_hat < 1.
#[derive(Debug, Clone, Copy)]
pub struct LimitLaw {
    pub beta_hat: f64,
    pub sigma_sq: f64,
}

impl LimitLaw {
    pub fn new(beta_hat: f64) -> Result<Self> {
        Ok(LimitLaw {
            beta_hat,
            sigma_sq: sigma_sq(beta_hat)?,
        })
    }
}

/// sigma^2 = log(1 / (1 - beta_hat^2)).
pub fn sigma_sq(beta_hat: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&beta_hat) {
        return Err(Error::Domain(format!(
            "beta_hat = {beta_hat} outside [0, 1) (strong disorder)"
        )));
    }
    Ok(-(-beta_hat * beta_hat).ln_1p())
}

/// Limiting covariance of log partition functions at scale separation zeta:
/// log((1 - beta_hat^2 zeta) / (1 - beta_hat^2)).
pub fn cov_limit(beta_hat: f64, zeta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&beta_hat) {
        return Err(Error::Domain(format!("beta_hat = {beta_hat} outside [0, 1)")));
    }
    if !(0.0..=1.0).contains(&zeta) {
        return Err(Error::Domain(format!("zeta = {zeta} outside [0, 1]")));
    }
    let b2 = beta_hat * beta_hat;
    Ok(((1.0 - b2 * zeta) / (1.0 - b2)).ln())
}

/// One draw of exp(sigma G - sigma^2 / 2).
pub fn limit_sampler(law: &LimitLaw, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g: f64 = rng.sample(StandardNormal);
    (law.sigma_sq.sqrt() * g - 0.5 * law.sigma_sq).exp()
}

pub fn limit_samples(law: &LimitLaw, seed: u64, count: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = law.sigma_sq.sqrt();
    (0..count)
        .map(|_| {
            let g: f64 = rng.sample(StandardNormal);
            (s * g - 0.5 * law.sigma_sq).exp()
        })
        .collect()
}

/// Covariance kernel of the limiting Gaussian field.
#[derive(Debug, Clone, Copy)]
pub struct CovKernel {
    pub dim: usize,
    /// Pinning constant c with sqrt(n) q_n -> c; unused for d >= 1.
    pub c: f64,
}

fn g_density(dim: usize, x: [f64; 2]) -> f64 {
    match dim {
        1 => (1.0 / std::f64::consts::PI) / (1.0 + x[0] * x[0]),
        2 => (0.5 / std::f64::consts::PI) * (-0.5 * (x[0] * x[0] + x[1] * x[1])).exp(),
        _ => unreachable!(),
    }
}

/// K(p1, p2); diverges logarithmically as p1 -> p2, so coincident points are
/// rejected.
pub fn kernel_k(ck: &CovKernel, p1: ([f64; 2], f64), p2: ([f64; 2], f64)) -> Result<f64> {
    let (x1, t1) = p1;
    let (x2, t2) = p2;
    for t in [t1, t2] {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Domain(format!("time {t} outside [0, 1]")));
        }
    }
    match ck.dim {
        0 => {
            if t1 == t2 {
                return Err(Error::Domain(
                    "coincident points: kernel diverges on the diagonal".into(),
                ));
            }
            Ok(kernel_k_d0_closed(ck.c, t1, t2))
        }
        d @ (1 | 2) => {
            let dx = [x1[0] - x2[0], x1[1] - x2[1]];
            let dt = (t1 - t2).abs();
            if dx == [0.0, 0.0] && dt == 0.0 {
                return Err(Error::Domain(
                    "coincident points: kernel diverges on the diagonal".into(),
                ));
            }
            let upper = 2.0 - t1 - t2;
            if upper <= dt {
                return Ok(0.0);
            }
            if dx == [0.0, 0.0] {
                // g constant at the origin; the s-integral is elementary
                return Ok(0.5 * g_density(d, [0.0, 0.0]) * (upper / dt).ln());
            }
            let f = |s: f64| -> f64 {
                if s <= 0.0 {
                    return 0.0;
                }
                let scale = s.powf(1.0 / d as f64);
                g_density(d, [dx[0] / scale, dx[1] / scale]) / s
            };
            let (v, _) = quad::integrate(&f, dt, upper, 1e-12);
            Ok(0.5 * v)
        }
        other => Err(Error::Unsupported(format!("kernel dimension {other}"))),
    }
}

/// Closed antiderivative 2 c^2 log(sqrt(s - t1) + sqrt(s - t2)) evaluated
/// between s = t1 v t2 and s = 1.
pub fn kernel_k_d0_closed(c: f64, t1: f64, t2: f64) -> f64 {
    if t1.max(t2) >= 1.0 {
        return 0.0;
    }
    let hi = ( (1.0 - t1).sqrt() + (1.0 - t2).sqrt() ).ln();
    let lo = 0.5 * (t1 - t2).abs().ln();
    2.0 * c * c * (hi - lo)
}

/// Quadrature route for the d = 0 kernel: substituting s = t_max + w^2
/// removes the inverse-square-root endpoint.
pub fn kernel_k_d0_quadrature(c: f64, t1: f64, t2: f64) -> f64 {
    if t1.max(t2) >= 1.0 {
        return 0.0;
    }
    let lo = t1.min(t2);
    let hi = t1.max(t2);
    let gap = hi - lo;
    let f = |w: f64| 2.0 / (w * w + gap).sqrt();
    let (v, _) = quad::integrate(&f, 0.0, (1.0 - hi).sqrt(), 1e-13);
    c * c * v
}

/// sigma_psi^2 = beta_hat^2 / (1 - beta_hat^2) * Iint psi K psi, with the
/// diagonal log singularity handled by a delta strip whose log part is
/// integrated in closed form; delta is validated by halving (two-level
/// comparison) and the spread of the two levels is returned as the error
/// estimate.
pub fn sigma_psi_quadrature(
    ck: &CovKernel,
    law: &LimitLaw,
    psi: &FieldWeight,
) -> Result<(f64, f64)> {
    let pref = law.beta_hat * law.beta_hat / (1.0 - law.beta_hat * law.beta_hat);
    match ck.dim {
        0 => {
            let coarse = d0_psi_k_psi(ck.c, psi, 2e-3);
            let fine = d0_psi_k_psi(ck.c, psi, 1e-3);
            let err = (fine - coarse).abs();
            if err > 1e-4 * fine.abs().max(1.0) {
                return Err(Error::QuadratureFailure {
                    last: fine,
                    prev: coarse,
                });
            }
            Ok((pref * fine, pref * err))
        }
        1 | 2 => {
            let coarse = spatial_psi_k_psi(ck.dim, psi, 1e-7)?;
            let fine = spatial_psi_k_psi(ck.dim, psi, 1e-9)?;
            let err = (fine - coarse).abs();
            Ok((pref * fine, pref * err))
        }
        other => Err(Error::Unsupported(format!("kernel dimension {other}"))),
    }
}

/// Iint_{[0,1]^2} psi(t) K(t, t') psi(t') dt dt' with a |t - t'| < delta
/// strip: inside the strip psi(t') ~ psi(t) and the -c^2 log|u| part has an
/// elementary antiderivative; the remaining strip factor is smooth.
fn d0_psi_k_psi(c: f64, psi: &FieldWeight, delta: f64) -> f64 {
    let p = |t: f64| psi.eval([0.0, 0.0], t);
    let outer = |t: f64| -> f64 {
        let pt = p(t);
        // regular region, split at the strip edges
        let inner = |u: f64| -> f64 {
            let pu = p(u);
            if pu == 0.0 {
                0.0
            } else {
                pu * kernel_k_d0_closed(c, t, u)
            }
        };
        let lo_edge = (t - delta).max(0.0);
        let hi_edge = (t + delta).min(1.0);
        let (reg_lo, _) = quad::integrate(&inner, 0.0, lo_edge, 1e-11);
        let (reg_hi, _) = quad::integrate(&inner, hi_edge, 1.0, 1e-11);
        let mut acc = pt * (reg_lo + reg_hi);

        if pt != 0.0 {
            // strip: K = 2 c^2 [ log(sqrt(1-t) + sqrt(1-t-u)) - log|u| / 2 ]
            let a = lo_edge - t;
            let b = hi_edge - t;
            let smooth = |u: f64| -> f64 {
                let t2 = t + u;
                if t2 >= 1.0 {
                    return 0.0;
                }
                2.0 * c * c * ((1.0 - t).max(0.0).sqrt() + (1.0 - t2).sqrt()).ln()
            };
            let (sm, _) = quad::integrate_split(&smooth, &[a, 0.0, b], 1e-12);
            // integral of log|u| over [a, 0] and [0, b]
            let log_part = |v: f64| {
                if v == 0.0 {
                    0.0
                } else {
                    let av = v.abs();
                    av * av.ln() - av
                }
            };
            let log_int = log_part(a) + log_part(b);
            acc += pt * pt * (sm - c * c * log_int);
        }
        acc
    };
    let (v, _) = quad::integrate(&outer, 0.0, 1.0, 1e-10);
    v
}

/// Walk models with the flat indicator weight: swapping the s-integral of
/// the kernel outward reduces Iint psi K psi to one smooth one-dimensional
/// integral. Only the flat weight is supported here.
fn spatial_psi_k_psi(dim: usize, psi: &FieldWeight, tol: f64) -> Result<f64> {
    if psi.eval([0.0, 0.0], 0.5) != 1.0 || psi.eval([psi.x_half * 0.5, 0.0], 0.9) != 1.0 {
        return Err(Error::Unsupported(
            "spatial sigma_psi quadrature supports the flat box weight only".into(),
        ));
    }
    let a = psi.x_half;
    // time overlap T(s) = area of { 0 <= t, t' <= 1, |t-t'| <= s <= 2-t-t' }
    let time_overlap = |s: f64| -> f64 {
        let len = |sig: f64| -> f64 {
            let cap = sig.min(2.0 - sig).min(s);
            if cap <= 0.0 {
                0.0
            } else {
                2.0 * cap
            }
        };
        let top = (2.0 - s).clamp(0.0, 2.0);
        let mut pts = vec![0.0, s, 2.0 - s, 1.0, top];
        for p in pts.iter_mut() {
            *p = p.clamp(0.0, top);
        }
        pts.sort_by(|x, y| x.partial_cmp(y).unwrap());
        let (v, _) = quad::integrate_split(&|sig: f64| len(sig), &pts, 1e-12);
        0.5 * v
    };
    // spatial overlap per coordinate, in closed form:
    // int (2A - |lambda u|)_+ g(u) du with b = 2A / lambda
    let tent_int = |lambda: f64| -> f64 {
        if lambda <= 0.0 {
            return 2.0 * a;
        }
        let b = 2.0 * a / lambda;
        match dim {
            1 => {
                // Cauchy density
                2.0 * a * (2.0 / std::f64::consts::PI) * b.atan()
                    - lambda / std::f64::consts::PI * (1.0 + b * b).ln()
            }
            _ => {
                // standard normal density
                let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
                let cdf = |x: f64| 0.5 * (1.0 + statrs::function::erf::erf(x / 2f64.sqrt()));
                2.0 * a * (2.0 * cdf(b) - 1.0) - 2.0 * lambda * (phi(0.0) - phi(b))
            }
        }
    };
    let integrand = |s: f64| -> f64 {
        if s <= 0.0 {
            return time_overlap(0.0) * (2.0 * a).powi(dim as i32);
        }
        let lambda = s.powf(1.0 / dim as f64);
        let v = match dim {
            1 => tent_int(lambda),
            _ => {
                let one = tent_int(lambda);
                one * one
            }
        };
        time_overlap(s) * v
    };
    let ranges = [0.0, 0.25, 0.5, 1.0, 1.5, 2.0];
    let (v, _) = quad::integrate_split(&integrand, &ranges, tol);
    Ok(0.5 * v)
}

/// Plain Monte Carlo estimate of Iint psi K psi (independent of the
/// quadrature path); returns (pref * value, pref * standard error).
pub fn sigma_psi_monte_carlo(
    ck: &CovKernel,
    law: &LimitLaw,
    psi: &FieldWeight,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let pref = law.beta_hat * law.beta_hat / (1.0 - law.beta_hat * law.beta_hat);
    let d = ck.dim;
    let side = 2.0 * psi.x_half;
    let vol = side.powi(d as i32); // time factor 1
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draw_point = |rng: &mut ChaCha8Rng| -> ([f64; 2], f64) {
        let mut x = [0.0f64; 2];
        for c in x.iter_mut().take(d) {
            *c = (rng.random::<f64>() - 0.5) * side;
        }
        (x, rng.random::<f64>())
    };
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..samples {
        let p1 = draw_point(&mut rng);
        let p2 = draw_point(&mut rng);
        let k = kernel_k(ck, p1, p2)?;
        let v = vol * vol * psi.eval(p1.0, p1.1) * k * psi.eval(p2.0, p2.1);
        sum += v;
        sumsq += v * v;
    }
    let mean = sum / samples as f64;
    let var = (sumsq / samples as f64 - mean * mean).max(0.0);
    Ok((pref * mean, pref * (var / samples as f64).sqrt()))
}

/// Exact second moment of the truncated block-limit object:
/// 1 + sum_{k<=K} beta_hat^{2k} #sharp(M, k) / M^k,
/// with #sharp(M, k) = k! C(M - k + 1, k).
pub fn block_limit_second_moment(m: usize, beta_hat: f64, k_cap: usize) -> f64 {
    let mut total = 1.0;
    for k in 1..=k_cap.min(m.div_ceil(2)) {
        let mut count = 1.0;
        for j in 0..k {
            count *= (m - k + 1 - j) as f64; // C(m-k+1, k) * k!
        }
        total += beta_hat.powi(2 * k as i32) * count / (m as f64).powi(k as i32);
    }
    total
}

/// Sampler for the finite-M block approximation of the limit: an explicit
/// polynomial in i.i.d. standard Gaussians indexed by dominated sequences.
pub struct BlockLimitSampler {
    pub m: usize,
    pub beta_hat: f64,
    pub k_cap: usize,
    vocab: usize,
    /// flattened (coefficient, piece ids) per sharp tuple
    coeffs: Vec<f64>,
    piece_ids: Vec<Vec<u32>>,
}

const ENUM_CAP: u64 = 4_000_000;

impl BlockLimitSampler {
    pub fn new(m: usize, beta_hat: f64, k_cap: usize) -> Result<Self> {
        if !(0.0..1.0).contains(&beta_hat) {
            return Err(Error::Domain("beta_hat outside [0, 1)".into()));
        }
        let mut vocab: HashMap<Vec<u32>, u32> = HashMap::new();
        let mut coeffs = Vec::new();
        let mut piece_ids = Vec::new();
        let mut tuple = Vec::with_capacity(k_cap);
        let mut size = 0u64;
        for k in 1..=k_cap {
            let coeff = beta_hat.powi(k as i32) / (m as f64).powf(k as f64 / 2.0);
            enumerate_sharp(m as u32, k, &mut tuple, &mut |t: &[u32]| {
                size += t.len() as u64;
                if size > ENUM_CAP {
                    return Err(Error::EnumerationCap {
                        size,
                        cap: ENUM_CAP,
                    });
                }
                let ids: Vec<u32> = dominated_decomposition(t)
                    .into_iter()
                    .map(|piece| {
                        let next = vocab.len() as u32;
                        *vocab.entry(piece).or_insert(next)
                    })
                    .collect();
                coeffs.push(coeff);
                piece_ids.push(ids);
                Ok(())
            })?;
        }
        Ok(BlockLimitSampler {
            m,
            beta_hat,
            k_cap,
            vocab: vocab.len(),
            coeffs,
            piece_ids,
        })
    }

    pub fn tuple_count(&self) -> usize {
        self.coeffs.len()
    }

    /// One draw of the block-limit variable.
    pub fn sample(&self, seed: u64) -> f64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let zeta: Vec<f64> = (0..self.vocab)
            .map(|_| rng.sample::<f64, _>(StandardNormal))
            .collect();
        let mut z = 1.0;
        for (coeff, ids) in self.coeffs.iter().zip(&self.piece_ids) {
            let mut prod = *coeff;
            for &id in ids {
                prod *= zeta[id as usize];
            }
            z += prod;
        }
        z
    }

    /// `count` independent draws; deterministic in (seed, count) and
    /// independent of the worker-thread layout.
    pub fn samples(&self, seed: u64, count: usize) -> Vec<f64> {
        (0..count)
            .into_par_iter()
            .map(|i| self.sample(seed.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(i as u64 + 1))))
            .collect()
    }
}

fn enumerate_sharp(
    m: u32,
    k: usize,
    tuple: &mut Vec<u32>,
    visit: &mut impl FnMut(&[u32]) -> Result<()>,
) -> Result<()> {
    if tuple.len() == k {
        visit(tuple)?;
        return Ok(());
    }
    'next: for v in 1..=m {
        for &u in tuple.iter() {
            if u.abs_diff(v) < 2 {
                continue 'next;
            }
        }
        tuple.push(v);
        enumerate_sharp(m, k, tuple, visit)?;
        tuple.pop();
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chaos::is_sharp;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!(
            (a - b).abs() <= tol,
            "expected {b} got {a} (diff {:e})",
            (a - b).abs()
        );
    }

    #[test]
    fn sigma_sq_examples() {
        assert_close(sigma_sq(0.5).unwrap(), (4.0f64 / 3.0).ln(), 1e-15);
        assert_close(sigma_sq(0.5).unwrap(), 0.287682, 1e-6);
        assert_eq!(sigma_sq(0.0).unwrap(), 0.0);
        assert!(sigma_sq(1.0).is_err());
        // monotone in beta_hat
        assert!(sigma_sq(0.9).unwrap() > sigma_sq(0.8).unwrap());
    }

    #[test]
    fn sigma_sq_integral_identity() {
        // int_0^1 b^2 / (1 - b^2 t) dt = sigma^2
        for b in [0.25f64, 0.5, 0.85] {
            let f = move |t: f64| b * b / (1.0 - b * b * t);
            let (v, _) = quad::integrate(&f, 0.0, 1.0, 1e-14);
            assert_close(v, sigma_sq(b).unwrap(), 1e-12);
        }
    }

    #[test]
    fn cov_limit_examples() {
        let b = 0.5;
        assert_close(cov_limit(b, 0.0).unwrap(), sigma_sq(b).unwrap(), 1e-15);
        assert_eq!(cov_limit(b, 1.0).unwrap(), 0.0);
        assert_close(cov_limit(0.5, 0.5).unwrap(), (7.0f64 / 6.0).ln(), 1e-15);
        assert_close(cov_limit(0.5, 0.5).unwrap(), 0.154151, 1e-6);
        // decreasing in zeta
        let mut prev = f64::INFINITY;
        for z in [0.0, 0.25, 0.5, 0.75, 1.0] {
            let v = cov_limit(0.7, z).unwrap();
            assert!(v < prev);
            prev = v;
        }
    }

    #[test]
    fn limit_sampler_moments() {
        let law = LimitLaw::new(0.5).unwrap();
        let n = 1_000_000usize;
        let xs = limit_samples(&law, 99, n);
        let mean = xs.iter().sum::<f64>() / n as f64;
        let band = 4.0 * (law.sigma_sq.exp() - 1.0).sqrt() / 1e3;
        assert!((mean - 1.0).abs() <= band, "mean {mean}");
        let second = xs.iter().map(|v| v * v).sum::<f64>() / n as f64;
        let target = 1.0 / (1.0 - 0.25);
        assert!((second - target).abs() <= 6.0 * target / 1e3 * 4.0, "second {second}");

        let logs: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
        let lmean = logs.iter().sum::<f64>() / n as f64;
        let lvar = logs.iter().map(|v| (v - lmean) * (v - lmean)).sum::<f64>() / n as f64;
        assert!((lmean + 0.5 * law.sigma_sq).abs() < 4.0 * law.sigma_sq.sqrt() / 1e3);
        assert!((lvar - law.sigma_sq).abs() < 0.01);

        let tiny = LimitLaw::new(1e-6).unwrap();
        assert!((limit_sampler(&tiny, 7) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn kernel_d0_examples() {
        // c = 1, (t1, t2) = (0, 1/4): 2 ln(2 + sqrt 3)
        let ck = CovKernel { dim: 0, c: 1.0 };
        let v = kernel_k(&ck, ([0.0, 0.0], 0.0), ([0.0, 0.0], 0.25)).unwrap();
        assert_close(v, 2.0 * (2.0 + 3.0f64.sqrt()).ln(), 1e-12);
        assert_close(v, 2.633916, 1e-6);
        // symmetry
        let w = kernel_k(&ck, ([0.0, 0.0], 0.25), ([0.0, 0.0], 0.0)).unwrap();
        assert_close(v, w, 1e-12);
        assert!(kernel_k(&ck, ([0.0, 0.0], 0.3), ([0.0, 0.0], 0.3)).is_err());
    }

    #[test]
    fn kernel_d0_quadrature_matches_closed_form() {
        let mut state = 12345u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..100 {
            let t1 = 0.98 * next();
            let mut t2 = 0.98 * next();
            if (t1 - t2).abs() < 1e-6 {
                t2 += 0.01;
            }
            let c = 0.2 + next();
            let closed = kernel_k_d0_closed(c, t1, t2);
            let quadr = kernel_k_d0_quadrature(c, t1, t2);
            assert_close(quadr, closed, 1e-9 * closed.abs().max(1.0));
        }
    }

    #[test]
    fn kernel_d2_examples() {
        let ck = CovKernel { dim: 2, c: 0.0 };
        // x1 = x2, (t1, t2) = (0, 1/2): g(0)/2 * ln 3 = ln 3 / (4 pi)
        let v = kernel_k(&ck, ([0.0, 0.0], 0.0), ([0.0, 0.0], 0.5)).unwrap();
        assert_close(v, 3.0f64.ln() / (4.0 * std::f64::consts::PI), 1e-12);
        // displaced points, symmetric
        let a = kernel_k(&ck, ([0.4, -0.2], 0.1), ([0.0, 0.3], 0.6)).unwrap();
        let b = kernel_k(&ck, ([0.0, 0.3], 0.6), ([0.4, -0.2], 0.1)).unwrap();
        assert_close(a, b, 1e-12);
        assert!(a > 0.0);
    }

    #[test]
    fn sigma_psi_zero_weight() {
        let ck = CovKernel { dim: 0, c: 0.7 };
        let law = LimitLaw::new(0.5).unwrap();
        let (v, _) = sigma_psi_quadrature(&ck, &law, &FieldWeight::zero(0)).unwrap();
        assert_eq!(v, 0.0);
    }

    #[test]
    fn sigma_psi_flat_closed_form() {
        // flat weight on [0,1]: Iint K = 2 c^2 exactly
        let c = 0.4158;
        let ck = CovKernel { dim: 0, c };
        let law = LimitLaw::new(0.5).unwrap();
        let (v, err) = sigma_psi_quadrature(&ck, &law, &FieldWeight::flat(0)).unwrap();
        let pref = 0.25 / 0.75;
        let target = pref * 2.0 * c * c;
        assert!(v >= 0.0);
        assert_close(v, target, 5e-4 * target + err);
    }

    #[test]
    fn sigma_psi_quadrature_matches_monte_carlo_d0() {
        let ck = CovKernel { dim: 0, c: 0.5 };
        let law = LimitLaw::new(0.5).unwrap();
        let psi = FieldWeight::from_fn(0, 1.0, |_, t| 1.0 + 0.5 * (std::f64::consts::PI * t).sin());
        let (v, _) = sigma_psi_quadrature(&ck, &law, &psi).unwrap();
        let (mc, se) = sigma_psi_monte_carlo(&ck, &law, &psi, 2_000_000, 5).unwrap();
        assert!(
            (v - mc).abs() <= (0.01 * v.abs()).max(4.0 * se),
            "quadrature {v} vs MC {mc} +- {se}"
        );
    }

    #[test]
    fn sigma_psi_spatial_flat_matches_monte_carlo() {
        for dim in [1usize, 2] {
            let ck = CovKernel { dim, c: 0.0 };
            let law = LimitLaw::new(0.5).unwrap();
            let psi = FieldWeight::flat(dim);
            let (v, _) = sigma_psi_quadrature(&ck, &law, &psi).unwrap();
            let (mc, se) = sigma_psi_monte_carlo(&ck, &law, &psi, 400_000, 11).unwrap();
            assert!(
                (v - mc).abs() <= (0.02 * v.abs()).max(4.0 * se),
                "d={dim}: quadrature {v} vs MC {mc} +- {se}"
            );
            assert!(v > 0.0);
        }
    }

    #[test]
    fn block_sampler_tiny_case() {
        // M = 2, K = 1: Z = 1 + (beta/sqrt 2)(zeta_1 + zeta_2), variance beta^2
        let s = BlockLimitSampler::new(2, 0.6, 1).unwrap();
        assert_eq!(s.tuple_count(), 2);
        let xs = s.samples(4, 200_000);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / xs.len() as f64;
        assert!((mean - 1.0).abs() < 0.01);
        assert_close(var, 0.36, 0.01);
        assert_close(block_limit_second_moment(2, 0.6, 1), 1.36, 1e-15);
    }

    #[test]
    fn sharp_tuple_count_matches_formula() {
        // #sharp(M, k) = k! C(M - k + 1, k)
        for (m, k, want) in [(6usize, 2usize, 20.0f64), (8, 3, 120.0), (5, 1, 5.0)] {
            let mut count = 0u64;
            let mut tuple = Vec::new();
            enumerate_sharp(m as u32, k, &mut tuple, &mut |t| {
                assert!(is_sharp(t));
                count += 1;
                Ok(())
            })
            .unwrap();
            assert_eq!(count as f64, want);
        }
    }

    #[test]
    fn block_sampler_mean_and_second_moment() {
        let s = BlockLimitSampler::new(8, 0.5, 4).unwrap();
        let xs = s.samples(21, 40_000);
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let second = xs.iter().map(|v| v * v).sum::<f64>() / n;
        let target = block_limit_second_moment(8, 0.5, 4);
        let se_mean = (xs.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n / n).sqrt();
        assert!((mean - 1.0).abs() <= 4.0 * se_mean, "mean {mean}");
        let sq: Vec<f64> = xs.iter().map(|v| v * v).collect();
        let sq_mean = second;
        let sq_var = sq.iter().map(|v| (v - sq_mean) * (v - sq_mean)).sum::<f64>() / n;
        let se = (sq_var / n).sqrt();
        assert!(
            (second - target).abs() <= 4.0 * se,
            "second {second} vs target {target} (se {se})"
        );
    }
}
