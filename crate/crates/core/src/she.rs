//! Regularized 2d stochastic heat equation: the noise-strength schedule, a
//! discrete-polymer surrogate that reuses the partition module, and a small
//! explicit Euler grid solver kept as an independent qualitative check.

use crate::disorder::{DisorderField, EtaParams};
use crate::error::{Error, Result};
use crate::kernels::{beta_schedule, LatticeKernel, ModelKind, OverlapTable, SpaceTime};
use crate::partition::{polymer_z_all_starts, SweepRegion};
use crate::quad;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::io::Write;
use std::path::Path;

/// beta_eps = beta_hat sqrt(2 pi / log(1/eps)).
pub fn beta_eps(eps: f64, beta_hat: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&eps) || eps == 0.0 {
        return Err(Error::Domain(format!("eps = {eps} outside (0, 1)")));
    }
    Ok(beta_hat * (std::f64::consts::TAU / (1.0 / eps).ln()).sqrt())
}

/// Smooth, even, compactly supported probability density on R^2 with its
/// L^2 norm, tabulated radially.
#[derive(Debug, Clone)]
pub struct Mollifier {
    pub radius: f64,
    norm: f64,
    pub l2_sq: f64,
}

impl Mollifier {
    /// The standard bump exp(-1/(1-|x/R|^2)) normalized to unit mass.
    pub fn bump(radius: f64) -> Self {
        let raw = |r: f64| {
            let s = r / radius;
            if s >= 1.0 {
                0.0
            } else {
                (-1.0 / (1.0 - s * s)).exp()
            }
        };
        let (mass, _) = quad::integrate(
            &|r: f64| raw(r) * 2.0 * std::f64::consts::PI * r,
            0.0,
            radius,
            1e-13,
        );
        let norm = 1.0 / mass;
        let (sq, _) = quad::integrate(
            &|r: f64| (norm * raw(r)).powi(2) * 2.0 * std::f64::consts::PI * r,
            0.0,
            radius,
            1e-13,
        );
        Mollifier {
            radius,
            norm,
            l2_sq: sq,
        }
    }

    pub fn eval(&self, x: [f64; 2]) -> f64 {
        let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
        let s = r / self.radius;
        if s >= 1.0 {
            0.0
        } else {
            self.norm * (-1.0 / (1.0 - s * s)).exp()
        }
    }
}

/// Lattice surrogate for the regularized equation: the solution at (t, x)
/// maps to a polymer partition function started at
/// (floor(x / eps), floor((1 - t) / eps^2)) with horizon N = floor(1/eps^2)
/// and the overlap-exact schedule beta = beta_hat / sqrt(R_N).
pub fn she_surrogate(
    kernel: &LatticeKernel,
    overlap: &OverlapTable,
    field: &DisorderField,
    eps: f64,
    beta_hat: f64,
    points: &[(f64, [f64; 2])],
) -> Result<Vec<f64>> {
    if kernel.model() != ModelKind::Srw2d {
        return Err(Error::Unsupported("surrogate needs the 2d walk kernel".into()));
    }
    let n = (1.0 / (eps * eps)).floor() as usize;
    if n < 1 || n > kernel.n_max() {
        return Err(Error::Range {
            value: n,
            max: kernel.n_max(),
        });
    }
    let beta = beta_schedule(overlap, n, beta_hat)?;
    let eta = EtaParams::for_law(
        match field.mode {
            crate::disorder::FieldMode::Omega(law) => law,
            crate::disorder::FieldMode::DirectEta => {
                return Err(Error::Unsupported(
                    "surrogate uses the exponential weights; pick an omega law".into(),
                ))
            }
        },
        beta,
    );
    let starts: Vec<SpaceTime> = points
        .iter()
        .map(|&(t, x)| {
            let tl = ((1.0 - t) / (eps * eps)).floor().clamp(0.0, n as f64) as usize;
            SpaceTime::d2(
                [(x[0] / eps).floor() as i64, (x[1] / eps).floor() as i64],
                tl,
            )
        })
        .collect();
    let surface = polymer_z_all_starts(kernel, field, &eta, n, &SweepRegion::Points(starts.clone()))?;
    starts.iter().map(|p| surface.at(*p)).collect()
}

/// Parameters of one grid run on the torus.
#[derive(Debug, Clone, Copy)]
pub struct SheRun {
    pub eps: f64,
    pub beta_hat: f64,
    /// grid spacing
    pub h: f64,
    pub dt: f64,
    /// cells per side; the torus has physical side `cells * h`
    pub cells: usize,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct SheSnapshot {
    pub cells: usize,
    pub eps: f64,
    pub seed: u64,
    pub t_end: f64,
    pub field: Vec<f64>,
}

impl SheSnapshot {
    pub fn mean(&self) -> f64 {
        crate::kernels::comp_sum(self.field.iter().copied()) / self.field.len() as f64
    }

    pub fn at_origin(&self) -> f64 {
        self.field[0]
    }

    /// Flat little-endian float64 grid with a one-line text header.
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        writeln!(
            f,
            "she-grid cells={} eps={} seed={} t_end={}",
            self.cells, self.eps, self.seed, self.t_end
        )?;
        let mut buf = Vec::with_capacity(self.field.len() * 8);
        for v in &self.field {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        f.write_all(&buf)?;
        Ok(())
    }
}

/// Explicit Euler-Maruyama with Ito noise: the increment uses only Gaussians
/// independent of the current state.
pub fn she_grid_solve(run: &SheRun, mollifier: &Mollifier, t_end: f64) -> Result<SheSnapshot> {
    let h = run.h;
    if run.dt > h * h / 4.0 {
        return Err(Error::Stability(format!(
            "dt = {} exceeds h^2/4 = {}",
            run.dt,
            h * h / 4.0
        )));
    }
    let side = run.cells;
    if (side as f64) * h < 2.0 * t_end.sqrt() {
        return Err(Error::Stability(
            "torus side is smaller than twice the diffusive scale".into(),
        ));
    }
    let b_eps = beta_eps(run.eps, run.beta_hat)?;

    // mollifier at scale eps tabulated on grid offsets
    let r_cells = ((run.eps * mollifier.radius) / h).ceil() as i64;
    let jside = (2 * r_cells + 1) as usize;
    let mut jtab = vec![0.0f64; jside * jside];
    for dx in -r_cells..=r_cells {
        for dy in -r_cells..=r_cells {
            let x = [dx as f64 * h / run.eps, dy as f64 * h / run.eps];
            jtab[((dx + r_cells) as usize) * jside + (dy + r_cells) as usize] =
                mollifier.eval(x) / (run.eps * run.eps);
        }
    }

    let mut u = vec![1.0f64; side * side];
    let mut g = vec![0.0f64; side * side];
    let mut incr = vec![0.0f64; side * side];
    let mut rng = ChaCha8Rng::seed_from_u64(run.seed);
    let steps = (t_end / run.dt).round() as usize;
    let noise_scale = run.dt.sqrt() * h;
    let lap = run.dt * 0.5 / (h * h);

    let wrap = |i: i64| -> usize { i.rem_euclid(side as i64) as usize };
    for step in 0..steps {
        for v in g.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for x in 0..side {
            for y in 0..side {
                let mut acc = 0.0;
                for dx in -r_cells..=r_cells {
                    for dy in -r_cells..=r_cells {
                        let j = jtab[((dx + r_cells) as usize) * jside + (dy + r_cells) as usize];
                        if j != 0.0 {
                            acc += j * g[wrap(x as i64 + dx) * side + wrap(y as i64 + dy)];
                        }
                    }
                }
                incr[x * side + y] = noise_scale * acc;
            }
        }
        let old = u.clone();
        for x in 0..side {
            for y in 0..side {
                let i = x * side + y;
                let nb = old[wrap(x as i64 + 1) * side + y]
                    + old[wrap(x as i64 - 1) * side + y]
                    + old[x * side + wrap(y as i64 + 1)]
                    + old[x * side + wrap(y as i64 - 1)];
                let v = old[i] + lap * (nb - 4.0 * old[i]) + b_eps * old[i] * incr[i];
                if !v.is_finite() {
                    return Err(Error::Stability(format!(
                        "non-finite value at step {step}, cell ({x}, {y})"
                    )));
                }
                u[i] = v;
            }
        }
    }
    Ok(SheSnapshot {
        cells: side,
        eps: run.eps,
        seed: run.seed,
        t_end,
        field: u,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::{DisorderLaw, FieldMode};
    use crate::kernels::{build_kernel, overlap_table};

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!((a - b).abs() <= tol, "expected {b} got {a}");
    }

    #[test]
    fn beta_eps_examples() {
        let eps = (-std::f64::consts::TAU).exp();
        assert_close(beta_eps(eps, 1.0).unwrap(), 1.0, 1e-15);
        assert_eq!(beta_eps(0.1, 0.0).unwrap(), 0.0);
        // increasing in eps at fixed beta_hat (weaker regularization needs
        // less noise damping)
        assert!(beta_eps(0.01, 1.0).unwrap() < beta_eps(0.1, 1.0).unwrap());
        assert!(beta_eps(1.0, 1.0).is_err());
    }

    #[test]
    fn mollifier_is_normalized() {
        let j = Mollifier::bump(1.0);
        let (mass, _) = quad::integrate(
            &|r: f64| j.eval([r, 0.0]) * 2.0 * std::f64::consts::PI * r,
            0.0,
            1.0,
            1e-12,
        );
        assert_close(mass, 1.0, 1e-10);
        assert!(j.l2_sq > 0.0);
        assert_eq!(j.eval([1.5, 0.0]), 0.0);
        assert_eq!(j.eval([0.3, 0.1]), j.eval([-0.3, -0.1]));
    }

    #[test]
    fn surrogate_is_a_thin_adapter() {
        let n = 64usize;
        let eps = 1.0 / (n as f64).sqrt();
        let kernel = build_kernel(ModelKind::Srw2d, n, 1e-9).unwrap();
        let overlap = overlap_table(&kernel);
        let field = DisorderField::new(50, 3, FieldMode::Omega(DisorderLaw::Gaussian));
        let vals = she_surrogate(&kernel, &overlap, &field, eps, 0.5, &[(1.0, [0.0, 0.0])]).unwrap();

        let beta = crate::kernels::beta_schedule(&overlap, n, 0.5).unwrap();
        let eta = EtaParams::for_law(DisorderLaw::Gaussian, beta);
        let direct = polymer_z_all_starts(
            &kernel,
            &field,
            &eta,
            n,
            &SweepRegion::Points(vec![SpaceTime::d2([0, 0], 0)]),
        )
        .unwrap();
        assert_eq!(vals[0].to_bits(), direct.at(SpaceTime::d2([0, 0], 0)).unwrap().to_bits());
    }

    #[test]
    fn surrogate_at_zero_disorder() {
        let kernel = build_kernel(ModelKind::Srw2d, 16, 1e-9).unwrap();
        let overlap = overlap_table(&kernel);
        let field = DisorderField::new(1, 0, FieldMode::Omega(DisorderLaw::Gaussian));
        let vals = she_surrogate(
            &kernel,
            &overlap,
            &field,
            0.25,
            0.0,
            &[(1.0, [0.0, 0.0]), (0.5, [0.4, -0.2])],
        )
        .unwrap();
        for v in vals {
            assert_close(v, 1.0, 1e-12);
        }
    }

    #[test]
    fn grid_rejects_unstable_steps() {
        let run = SheRun {
            eps: 0.25,
            beta_hat: 0.5,
            h: 1.0 / 16.0,
            dt: 1.0,
            cells: 16,
            seed: 1,
        };
        assert!(matches!(
            she_grid_solve(&run, &Mollifier::bump(1.0), 0.1),
            Err(Error::Stability(_))
        ));
    }

    #[test]
    fn grid_beta_zero_is_exactly_flat() {
        let h = 1.0 / 16.0;
        let run = SheRun {
            eps: 0.25,
            beta_hat: 0.0,
            h,
            dt: h * h / 4.0,
            cells: 16,
            seed: 3,
        };
        let snap = she_grid_solve(&run, &Mollifier::bump(1.0), 0.05).unwrap();
        for v in &snap.field {
            assert_eq!(*v, 1.0);
        }
    }

    #[test]
    fn grid_mean_preservation_smoke() {
        let h = 1.0 / 16.0;
        let runs = 60;
        let mut means = Vec::new();
        for seed in 0..runs {
            let run = SheRun {
                eps: 4.0 * h,
                beta_hat: 0.5,
                h,
                dt: h * h / 4.0,
                cells: 16,
                seed: 1000 + seed,
            };
            let snap = she_grid_solve(&run, &Mollifier::bump(1.0), 0.0625).unwrap();
            means.push(snap.mean());
        }
        let m = means.iter().sum::<f64>() / runs as f64;
        let var = means.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (runs - 1) as f64;
        let se = (var / runs as f64).sqrt();
        assert!((m - 1.0).abs() <= 4.0 * se.max(1e-4), "mean {m} se {se}");
    }

    #[test]
    fn snapshot_file_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.bin");
        let snap = SheSnapshot {
            cells: 2,
            eps: 0.5,
            seed: 9,
            t_end: 0.25,
            field: vec![1.0, 2.0, 3.0, 4.0],
        };
        snap.write(&path).unwrap();
        let raw = std::fs::read(&path).unwrap();
        let header_end = raw.iter().position(|&b| b == b'\n').unwrap() + 1;
        let header = std::str::from_utf8(&raw[..header_end]).unwrap();
        assert!(header.contains("cells=2") && header.contains("eps=0.5"));
        assert_eq!(raw.len() - header_end, 4 * 8);
        let v = f64::from_le_bytes(raw[header_end + 8..header_end + 16].try_into().unwrap());
        assert_eq!(v, 2.0);
    }
}
