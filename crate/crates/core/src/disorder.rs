//! Seeded disorder fields and the centered multiplicative increment
//! eta = (e^{beta omega - lambda(beta)} - 1) / beta.
//!
//! Field values come from a keyed stateless mixing function of
//! (seed, realization, n, x), so the same site always yields the same value
//! no matter which worker asks first.

use crate::kernels::SpaceTime;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DisorderLaw {
    Gaussian,
    Rademacher,
}

impl std::str::FromStr for DisorderLaw {
    type Err = crate::error::Error;
    fn from_str(s: &str) -> crate::error::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "gauss" => Ok(DisorderLaw::Gaussian),
            "rademacher" | "sign" => Ok(DisorderLaw::Rademacher),
            other => Err(crate::error::Error::Config(format!(
                "unknown disorder law `{other}`"
            ))),
        }
    }
}

/// log E[exp(beta omega)] for the two built-in laws.
pub fn cumulant_lambda(law: DisorderLaw, beta: f64) -> f64 {
    match law {
        DisorderLaw::Gaussian => 0.5 * beta * beta,
        DisorderLaw::Rademacher => beta.cosh().ln(),
    }
}

/// Parameters of the eta transform at a fixed inverse temperature.
#[derive(Debug, Clone, Copy)]
pub struct EtaParams {
    pub beta: f64,
    pub lambda_beta: f64,
    /// Var[eta] = (exp(lambda(2 beta) - 2 lambda(beta)) - 1) / beta^2,
    /// continuously extended to 1 at beta = 0.
    pub var_eta: f64,
}

impl EtaParams {
    pub fn for_law(law: DisorderLaw, beta: f64) -> Self {
        let lambda_beta = cumulant_lambda(law, beta);
        let var_eta = if beta == 0.0 {
            1.0
        } else {
            // delta = lambda(2b) - 2 lambda(b), written without cancellation
            let delta = match law {
                DisorderLaw::Gaussian => beta * beta,
                DisorderLaw::Rademacher => beta.tanh().powi(2).ln_1p(),
            };
            delta.exp_m1() / (beta * beta)
        };
        EtaParams {
            beta,
            lambda_beta,
            var_eta,
        }
    }

    /// Parameters for a field that injects standard Gaussian eta directly.
    pub fn direct(beta: f64) -> Self {
        EtaParams {
            beta,
            lambda_beta: 0.0,
            var_eta: 1.0,
        }
    }
}

/// eta = (e^{beta omega - lambda} - 1) / beta, with the beta -> 0 limit
/// eta = omega.
pub fn eta_transform(params: &EtaParams, omega: f64) -> f64 {
    if params.beta == 0.0 {
        return omega;
    }
    (params.beta * omega - params.lambda_beta).exp_m1() / params.beta
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldMode {
    /// Raw disorder omega drawn from the given law; eta via the transform.
    Omega(DisorderLaw),
    /// eta injected directly as standard Gaussians, bypassing omega.
    DirectEta,
}

/// A deterministic seeded disorder field.
#[derive(Debug, Clone, Copy)]
pub struct DisorderField {
    pub seed: u64,
    pub realization_index: u64,
    pub mode: FieldMode,
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

#[inline]
fn zigzag(v: i64) -> u64 {
    ((v << 1) ^ (v >> 63)) as u64
}

/// Keyed hash of one lattice site.
#[inline]
fn site_key(seed: u64, realization: u64, n: usize, x: [i64; 2]) -> u64 {
    let mut h = mix(seed ^ GOLDEN);
    h = mix(h ^ realization.wrapping_mul(GOLDEN));
    h = mix(h ^ (n as u64).wrapping_mul(GOLDEN));
    h = mix(h ^ zigzag(x[0]).wrapping_mul(GOLDEN));
    h = mix(h ^ zigzag(x[1]).wrapping_mul(GOLDEN));
    h
}

#[inline]
fn to_unit(h: u64) -> f64 {
    // 53-bit mantissa, strictly inside (0, 1)
    ((h >> 11) as f64 + 0.5) * (1.0 / 9007199254740992.0)
}

#[inline]
fn standard_gaussian(key: u64) -> f64 {
    let u1 = to_unit(mix(key ^ 1));
    let u2 = to_unit(mix(key ^ 2));
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

impl DisorderField {
    pub fn new(seed: u64, realization_index: u64, mode: FieldMode) -> Self {
        DisorderField {
            seed,
            realization_index,
            mode,
        }
    }

    /// Raw field value at site (n, x): omega for `Omega` fields, a standard
    /// Gaussian eta for `DirectEta` fields.
    pub fn value(&self, n: usize, x: [i64; 2]) -> f64 {
        let key = site_key(self.seed, self.realization_index, n, x);
        match self.mode {
            FieldMode::Omega(DisorderLaw::Gaussian) | FieldMode::DirectEta => {
                standard_gaussian(key)
            }
            FieldMode::Omega(DisorderLaw::Rademacher) => {
                if mix(key ^ 1) & 1 == 0 {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }

    pub fn value_at(&self, p: SpaceTime) -> f64 {
        self.value(p.t, p.x)
    }

    /// Centered increment eta at a site.
    pub fn eta(&self, params: &EtaParams, n: usize, x: [i64; 2]) -> f64 {
        match self.mode {
            FieldMode::Omega(_) => eta_transform(params, self.value(n, x)),
            FieldMode::DirectEta => self.value(n, x),
        }
    }

    /// Multiplicative weight xi = e^{beta omega - lambda(beta)} = 1 + beta eta.
    pub fn xi(&self, params: &EtaParams, n: usize, x: [i64; 2]) -> f64 {
        match self.mode {
            FieldMode::Omega(_) => {
                (params.beta * self.value(n, x) - params.lambda_beta).exp()
            }
            FieldMode::DirectEta => 1.0 + params.beta * self.value(n, x),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "expected {b} got {a}");
    }

    #[test]
    fn cumulant_examples() {
        assert_eq!(cumulant_lambda(DisorderLaw::Gaussian, 1.0), 0.5);
        assert_close(
            cumulant_lambda(DisorderLaw::Rademacher, 1.0),
            0.433781,
            1e-6,
        );
        assert_eq!(cumulant_lambda(DisorderLaw::Gaussian, 0.0), 0.0);
        assert_eq!(cumulant_lambda(DisorderLaw::Rademacher, 0.0), 0.0);
    }

    #[test]
    fn eta_transform_examples() {
        let p = EtaParams::for_law(DisorderLaw::Gaussian, 1.0);
        assert_eq!(eta_transform(&p, 0.5), 0.0);

        let p0 = EtaParams::for_law(DisorderLaw::Gaussian, 0.0);
        assert_eq!(eta_transform(&p0, 1.7), 1.7);

        // E[eta] = 0 for Rademacher by direct average over the two atoms
        let beta = 0.7;
        let p = EtaParams::for_law(DisorderLaw::Rademacher, beta);
        let mean = 0.5 * (eta_transform(&p, 1.0) + eta_transform(&p, -1.0));
        assert_close(mean, 0.0, 1e-15);
    }

    #[test]
    fn var_eta_limits_and_values() {
        assert_eq!(EtaParams::for_law(DisorderLaw::Gaussian, 0.0).var_eta, 1.0);
        assert_close(
            EtaParams::for_law(DisorderLaw::Gaussian, 1e-8).var_eta,
            1.0,
            1e-12,
        );
        let b = 0.3;
        let g = EtaParams::for_law(DisorderLaw::Gaussian, b);
        assert_close(g.var_eta, ((b * b).exp() - 1.0) / (b * b), 1e-14);
        let r = EtaParams::for_law(DisorderLaw::Rademacher, b);
        assert_close(r.var_eta, (b.tanh() / b).powi(2), 1e-14);
        assert!(r.var_eta < 1.0 && g.var_eta > 1.0);
        assert_eq!(EtaParams::direct(0.25).var_eta, 1.0);
    }

    #[test]
    fn determinism_and_order_independence() {
        let f = DisorderField::new(42, 7, FieldMode::Omega(DisorderLaw::Gaussian));
        let a = f.value(5, [3, -2]);
        let _ = f.value(1, [0, 0]);
        assert_eq!(f.value(5, [3, -2]), a);
        // distinct realization index gives a fresh field
        let g = DisorderField::new(42, 8, FieldMode::Omega(DisorderLaw::Gaussian));
        assert_ne!(g.value(5, [3, -2]), a);
    }

    #[test]
    fn rademacher_support() {
        let f = DisorderField::new(9, 0, FieldMode::Omega(DisorderLaw::Rademacher));
        for n in 1..200 {
            for x in -3i64..=3 {
                let v = f.value(n, [x, 0]);
                assert!(v == 1.0 || v == -1.0);
            }
        }
    }

    #[test]
    fn gaussian_moments_over_one_million_sites() {
        let f = DisorderField::new(1234, 0, FieldMode::Omega(DisorderLaw::Gaussian));
        let m = 1_000_000usize;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for i in 0..m {
            let v = f.value(i / 1000 + 1, [(i % 1000) as i64, 0]);
            sum += v;
            sq += v * v;
        }
        let mean = sum / m as f64;
        let var = sq / m as f64 - mean * mean;
        assert!(mean.abs() <= 4.0 / (m as f64).sqrt(), "mean {mean}");
        assert!((var - 1.0).abs() <= 0.01, "variance {var}");
    }

    #[test]
    fn eta_moments_match_var_eta() {
        let beta = 0.3;
        let p = EtaParams::for_law(DisorderLaw::Gaussian, beta);
        let f = DisorderField::new(77, 3, FieldMode::Omega(DisorderLaw::Gaussian));
        let m = 1_000_000usize;
        let mut sum = 0.0;
        let mut sq = 0.0;
        for i in 0..m {
            let e = f.eta(&p, i + 1, [0, 0]);
            sum += e;
            sq += e * e;
        }
        let mean = sum / m as f64;
        let var = sq / m as f64 - mean * mean;
        let sd = p.var_eta.sqrt();
        assert!(mean.abs() <= 4.0 * sd / (m as f64).sqrt(), "mean {mean}");
        assert!((var - p.var_eta).abs() <= 0.05 * p.var_eta, "var {var}");
    }

    #[test]
    fn direct_eta_is_standard_gaussian() {
        let f = DisorderField::new(5, 0, FieldMode::DirectEta);
        let p = EtaParams::direct(0.4);
        let m = 200_000usize;
        let mut sq = 0.0;
        for i in 0..m {
            let e = f.eta(&p, i + 1, [0, 0]);
            sq += e * e;
        }
        assert!((sq / m as f64 - 1.0).abs() < 0.02);
        // xi = 1 + beta eta in direct mode
        let e = f.eta(&p, 10, [1, 2]);
        assert_close(f.xi(&p, 10, [1, 2]), 1.0 + 0.4 * e, 1e-15);
    }
}
