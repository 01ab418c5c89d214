//! The experiment runner behind the CLI subcommands. Each experiment is a
//! set of cells; a failing cell is recorded and the run continues.

use super::config::ExperimentConfig;
use super::output::{CellRecord, CsvTable, Manifest};
use super::stats;
use crate::disorder::{DisorderField, EtaParams, FieldMode};
use crate::error::{Error, Result};
use crate::kernels::{
    beta_schedule, block_boundaries, build_kernel_with, llt_diagnostic, overlap_table,
    renewal_c_estimate, KernelBudget, LatticeKernel, ModelKind, OverlapTable, SpaceTime,
};
use crate::limits::{
    cov_limit, sigma_psi_monte_carlo, sigma_psi_quadrature, CovKernel, LimitLaw,
};
use crate::partition::{
    cross_moment_exact, field_variance_exact, pinning_z_batch, polymer_z_all_starts,
    second_moment_exact, PinningBatch, SweepRegion,
};
use crate::she::{beta_eps, she_grid_solve, Mollifier, SheRun};
use rayon::prelude::*;
use std::time::Instant;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Kernel,
    Single,
    Multipoint,
    Fields,
    Theta,
    She,
    Strong,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::Kernel => "kernel",
            ExperimentKind::Single => "single",
            ExperimentKind::Multipoint => "multipoint",
            ExperimentKind::Fields => "field",
            ExperimentKind::Theta => "theta",
            ExperimentKind::She => "she",
            ExperimentKind::Strong => "strong",
        }
    }
}

pub struct RunReport {
    pub cells: Vec<CellRecord>,
    pub manifest_path: std::path::PathBuf,
}

impl RunReport {
    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.status != "ok").count()
    }
}

pub fn run_experiment(kind: ExperimentKind, cfg: &ExperimentConfig) -> Result<RunReport> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out_dir)?;
    let run = || -> Result<Vec<CellRecord>> {
        match kind {
            ExperimentKind::Kernel => kernel_cells(cfg),
            ExperimentKind::Single => single_cells(cfg),
            ExperimentKind::Multipoint => multipoint_cells(cfg),
            ExperimentKind::Fields => field_cells(cfg),
            ExperimentKind::Theta => theta_cells(cfg),
            ExperimentKind::She => she_cells(cfg),
            ExperimentKind::Strong => strong_cells(cfg),
        }
    };
    let cells = if cfg.threads > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
        pool.install(run)?
    } else {
        run()?
    };
    let mut manifest = Manifest::new(kind.name(), cfg.seed, cfg.echo());
    manifest.cells = cells.clone();
    let manifest_path = manifest.write(&cfg.out_dir)?;
    Ok(RunReport {
        cells,
        manifest_path,
    })
}

struct CellCtx<'a> {
    cfg: &'a ExperimentConfig,
    cells: Vec<CellRecord>,
}

impl<'a> CellCtx<'a> {
    fn new(cfg: &'a ExperimentConfig) -> Self {
        CellCtx {
            cfg,
            cells: Vec::new(),
        }
    }

    /// Run one cell, writing its CSV on success.
    fn cell(&mut self, name: &str, body: impl FnOnce() -> Result<CsvTable>) {
        let start = Instant::now();
        let result = body().and_then(|table| {
            let file = format!("{name}.csv");
            table.write(&self.cfg.out_dir.join(&file))?;
            Ok(file)
        });
        let runtime_s = start.elapsed().as_secs_f64();
        match result {
            Ok(file) => self.cells.push(CellRecord {
                name: name.into(),
                runtime_s,
                status: "ok".into(),
                csv: Some(file),
            }),
            Err(e) => self.cells.push(CellRecord {
                name: name.into(),
                runtime_s,
                status: format!("failed: {e}"),
                csv: None,
            }),
        }
    }
}

fn build_model_kernel(cfg: &ExperimentConfig, model: ModelKind, n_max: usize) -> Result<LatticeKernel> {
    build_kernel_with(model, n_max, cfg.tail_tol, KernelBudget::default())
}

fn fmt_beta(b: f64) -> String {
    format!("{b}").replace('.', "p")
}

// ---------------------------------------------------------------------------
// Monte Carlo drivers
// ---------------------------------------------------------------------------

const LANES: usize = 64;

/// Renewal-model Monte Carlo: run `samples` independent sweeps in lanes and
/// harvest one value per realization. Outputs are ordered by realization
/// index, independent of the thread layout.
fn pinning_mc<T: Send>(
    kernel: &LatticeKernel,
    eta: &EtaParams,
    mode: FieldMode,
    seed: u64,
    samples: usize,
    n: usize,
    harvest: impl Fn(&PinningBatch, usize) -> T + Sync,
) -> Result<Vec<T>> {
    let chunks: Vec<(usize, usize)> = (0..samples)
        .step_by(LANES)
        .map(|lo| (lo, (lo + LANES).min(samples)))
        .collect();
    let nested: Vec<Vec<T>> = chunks
        .into_par_iter()
        .map(|(lo, hi)| -> Result<Vec<T>> {
            let fields: Vec<DisorderField> = (lo..hi)
                .map(|i| DisorderField::new(seed, i as u64, mode))
                .collect();
            let batch = pinning_z_batch(kernel, eta, &fields, n)?;
            Ok((0..(hi - lo)).map(|l| harvest(&batch, l)).collect())
        })
        .collect::<Result<_>>()?;
    Ok(nested.into_iter().flatten().collect())
}

/// Walk-model Monte Carlo at a fixed list of starting points.
fn polymer_points_mc(
    kernel: &LatticeKernel,
    eta: &EtaParams,
    mode: FieldMode,
    seed: u64,
    samples: usize,
    n: usize,
    points: &[SpaceTime],
) -> Result<Vec<Vec<f64>>> {
    (0..samples)
        .into_par_iter()
        .map(|i| -> Result<Vec<f64>> {
            let field = DisorderField::new(seed, i as u64, mode);
            let surface = polymer_z_all_starts(
                kernel,
                &field,
                eta,
                n,
                &SweepRegion::Points(points.to_vec()),
            )?;
            points.iter().map(|p| surface.at(*p)).collect()
        })
        .collect()
}

fn z0_samples(
    kernel: &LatticeKernel,
    eta: &EtaParams,
    mode: FieldMode,
    seed: u64,
    samples: usize,
    n: usize,
) -> Result<Vec<f64>> {
    match kernel.model() {
        ModelKind::RenewalHalf => {
            pinning_mc(kernel, eta, mode, seed, samples, n, |batch, lane| {
                batch.z(lane, 0)
            })
        }
        _ => {
            let origin = match kernel.model().dim() {
                1 => SpaceTime::d1(0, 0),
                _ => SpaceTime::d2([0, 0], 0),
            };
            Ok(polymer_points_mc(kernel, eta, mode, seed, samples, n, &[origin])?
                .into_iter()
                .map(|row| row[0])
                .collect())
        }
    }
}

/// Smallest m with R_m >= zeta R_N (even-rounded for the 2d walk, whose
/// odd time offsets are degenerate by parity).
fn time_offset_for_zeta(overlap: &OverlapTable, n: usize, zeta: f64) -> Result<usize> {
    let rn = overlap.total(n)?;
    let mut m = 1;
    while m < n && overlap.total(m)? < zeta * rn {
        m += 1;
    }
    if overlap.model() == ModelKind::Srw2d && m % 2 == 1 {
        m += 1;
    }
    Ok(m.min(n))
}

// ---------------------------------------------------------------------------
// cells
// ---------------------------------------------------------------------------

fn kernel_cells(cfg: &ExperimentConfig) -> Result<Vec<CellRecord>> {
    let mut ctx = CellCtx::new(cfg);
    let n_max = *cfg.n_grid.iter().max().unwrap();
    let name = format!("kernel_{}_{}", cfg.model, n_max);
    ctx.cell(&name, || {
        let kernel = build_model_kernel(cfg, cfg.model, n_max)?;
        let cache = cfg
            .out_dir
            .join(format!("kernel_{}_{}.mrgk", cfg.model, n_max));
        kernel.write_cache(&cache)?;
        let table = overlap_table(&kernel);
        let mut csv = CsvTable::new(&["n", "r", "big_r", "window_radius", "tail_mass", "llt"]);
        let mut n = 1usize;
        while n <= n_max {
            csv.push(vec![
                n.into(),
                table.r(n).into(),
                table.total(n)?.into(),
                kernel.window_radius(n).into(),
                kernel.tail_mass(n).into(),
                llt_diagnostic(&kernel, n)?.into(),
            ]);
            n *= 2;
        }
        Ok(csv)
    });
    Ok(ctx.cells)
}

fn single_cells(cfg: &ExperimentConfig) -> Result<Vec<CellRecord>> {
    let mut ctx = CellCtx::new(cfg);
    let n_max = *cfg.n_grid.iter().max().unwrap();
    let kernel = build_model_kernel(cfg, cfg.model, n_max)?;
    let overlap = overlap_table(&kernel);
    for &n in &cfg.n_grid {
        for &bh in &cfg.beta_hat_grid {
            let name = format!("single_{}_n{}_b{}", cfg.model, n, fmt_beta(bh));
            ctx.cell(&name, || {
                let beta = beta_schedule(&overlap, n, bh)?;
                let eta = cfg.law.eta_params(beta);
                let xs = z0_samples(&kernel, &eta, cfg.law.field_mode(), cfg.seed, cfg.samples, n)?;
                let mean = stats::batch_stat(&xs, stats::mean)?;
                let var = stats::batch_stat(&xs, stats::variance)?;
                let exact = match second_moment_exact(&overlap, &eta, n) {
                    Ok(v) => v,
                    Err(Error::L2BlowUp { .. }) => f64::NAN,
                    Err(e) => return Err(e),
                };
                let ks = if bh < 1.0 {
                    stats::ks_lognormal(&xs, &LimitLaw::new(bh)?)?
                } else {
                    f64::NAN
                };
                let frac = stats::batch_stat(&xs, |s| stats::fractional_moment(s, cfg.theta))?;
                let mut csv = CsvTable::new(&["statistic", "value", "se"]);
                csv.push(vec!["beta_n".into(), beta.into(), f64::NAN.into()]);
                csv.push(vec!["samples".into(), cfg.samples.into(), f64::NAN.into()]);
                csv.push(vec!["mean".into(), mean.value.into(), mean.se.into()]);
                csv.push(vec!["variance".into(), var.value.into(), var.se.into()]);
                csv.push(vec![
                    "kurtosis".into(),
                    stats::kurtosis(&xs).into(),
                    f64::NAN.into(),
                ]);
                csv.push(vec![
                    "exact_second_moment".into(),
                    exact.into(),
                    f64::NAN.into(),
                ]);
                csv.push(vec!["ks_lognormal".into(), ks.into(), f64::NAN.into()]);
                csv.push(vec![
                    format!("fractional_moment_theta_{}", cfg.theta).into(),
                    frac.value.into(),
                    frac.se.into(),
                ]);
                Ok(csv)
            });
        }
    }
    Ok(ctx.cells)
}

fn multipoint_cells(cfg: &ExperimentConfig) -> Result<Vec<CellRecord>> {
    let mut ctx = CellCtx::new(cfg);
    let n_max = *cfg.n_grid.iter().max().unwrap();
    let kernel = build_model_kernel(cfg, cfg.model, n_max)?;
    let overlap = overlap_table(&kernel);
    let bh = cfg.beta_hat_grid[0];

    // deterministic cross-moment trend over the N grid
    let name = format!("multipoint_exact_{}_b{}", cfg.model, fmt_beta(bh));
    ctx.cell(&name, || {
        let mut csv = CsvTable::new(&[
            "n",
            "zeta_target",
            "zeta_realized",
            "delta_t",
            "cross_moment",
            "limit_value",
            "gap",
        ]);
        for &n in &cfg.n_grid {
            for &zt in &cfg.zeta_targets {
                let dt = time_offset_for_zeta(&overlap, n, zt)?;
                let beta = beta_schedule(&overlap, n, bh)?;
                let eta = cfg.law.eta_params(beta);
                let (a, b) = (SpaceTime::d0(0), point_at_time(cfg.model, dt));
                let cm = cross_moment_exact(&kernel, &overlap, &eta, n, a, b)?;
                let (_, zr) = crate::kernels::triple_norm_zeta(&overlap, n, a, b)?;
                let limit = (cov_limit(bh, zr)?).exp();
                csv.push(vec![
                    n.into(),
                    zt.into(),
                    zr.into(),
                    dt.into(),
                    cm.into(),
                    limit.into(),
                    (cm - limit).abs().into(),
                ]);
            }
        }
        Ok(csv)
    });

    // Monte Carlo covariance of logs at the largest N
    let n = n_max;
    let name = format!("multipoint_mc_{}_n{}_b{}", cfg.model, n, fmt_beta(bh));
    ctx.cell(&name, || {
        let beta = beta_schedule(&overlap, n, bh)?;
        let eta = cfg.law.eta_params(beta);
        let mut points = vec![SpaceTime::d0(0)];
        for &zt in &cfg.zeta_targets {
            points.push(point_at_time(cfg.model, time_offset_for_zeta(&overlap, n, zt)?));
        }
        let columns: Vec<Vec<f64>> = match cfg.model {
            ModelKind::RenewalHalf => {
                let rows = pinning_mc(
                    &kernel,
                    &eta,
                    cfg.law.field_mode(),
                    cfg.seed,
                    cfg.samples,
                    n,
                    |batch, lane| {
                        points
                            .iter()
                            .map(|p| batch.z(lane, p.t))
                            .collect::<Vec<f64>>()
                    },
                )?;
                transpose(rows)
            }
            _ => transpose(polymer_points_mc(
                &kernel,
                &eta,
                cfg.law.field_mode(),
                cfg.seed,
                cfg.samples,
                n,
                &points,
            )?),
        };
        let out = stats::covariance_of_logs(&columns)?;
        let mut csv = CsvTable::new(&["i", "j", "cov", "se", "limit_cov", "zeta_realized"]);
        for i in 0..points.len() {
            for j in i..points.len() {
                let (_, zr) = crate::kernels::triple_norm_zeta(&overlap, n, points[i], points[j])?;
                csv.push(vec![
                    i.into(),
                    j.into(),
                    out.cov[i][j].into(),
                    out.se[i][j].into(),
                    cov_limit(bh, zr)?.into(),
                    zr.into(),
                ]);
            }
        }
        csv.push(vec![
            "dropped".into(),
            "dropped".into(),
            (out.dropped as f64).into(),
            f64::NAN.into(),
            f64::NAN.into(),
            f64::NAN.into(),
        ]);
        Ok(csv)
    });
    Ok(ctx.cells)
}

fn point_at_time(model: ModelKind, t: usize) -> SpaceTime {
    match model.dim() {
        0 => SpaceTime::d0(t),
        1 => SpaceTime::d1(0, t),
        _ => SpaceTime::d2([0, 0], t),
    }
}

fn transpose(rows: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    if rows.is_empty() {
        return Vec::new();
    }
    let p = rows[0].len();
    let mut cols = vec![Vec::with_capacity(rows.len()); p];
    for row in rows {
        for (c, v) in row.into_iter().enumerate() {
            cols[c].push(v);
        }
    }
    cols
}

fn field_cells(cfg: &ExperimentConfig) -> Result<Vec<CellRecord>> {
    let mut ctx = CellCtx::new(cfg);
    if cfg.model != ModelKind::RenewalHalf {
        ctx.cell("field_unsupported", || {
            Err(Error::Unsupported(
                "field experiment runs on the renewal model; walk models exceed the desk budget"
                    .into(),
            ))
        });
        return Ok(ctx.cells);
    }
    let n_max = *cfg.n_grid.iter().max().unwrap();
    let kernel = build_model_kernel(cfg, cfg.model, n_max)?;
    let overlap = overlap_table(&kernel);
    let bh = cfg.beta_hat_grid[0];
    let psi = cfg.psi.build(0);
    let ck = CovKernel {
        dim: 0,
        c: renewal_c_estimate(&kernel),
    };
    let law = LimitLaw::new(bh)?;

    ctx.cell(&format!("field_sigma_psi_b{}", fmt_beta(bh)), || {
        let (quad_v, quad_err) = sigma_psi_quadrature(&ck, &law, &psi)?;
        let (mc_v, mc_se) = sigma_psi_monte_carlo(&ck, &law, &psi, 2_000_000, cfg.seed ^ 0xf1e1d)?;
        let mut csv = CsvTable::new(&["statistic", "value", "error"]);
        csv.push(vec!["kernel_c".into(), ck.c.into(), f64::NAN.into()]);
        csv.push(vec!["sigma_psi_quadrature".into(), quad_v.into(), quad_err.into()]);
        csv.push(vec!["sigma_psi_monte_carlo".into(), mc_v.into(), mc_se.into()]);
        csv.push(vec![
            "relative_gap".into(),
            ((quad_v - mc_v).abs() / quad_v.abs().max(1e-300)).into(),
            f64::NAN.into(),
        ]);
        Ok(csv)
    });

    for &n in &cfg.n_grid {
        let name = format!("field_var_n{}_b{}", n, fmt_beta(bh));
        ctx.cell(&name, || {
            let beta = beta_schedule(&overlap, n, bh)?;
            let eta = cfg.law.eta_params(beta);
            let exact = field_variance_exact(&kernel, &overlap, &eta, n, &psi)?;
            let rn_sqrt = overlap.total(n)?.sqrt();
            let psi_vals: Vec<f64> = (0..n).map(|t| psi.eval([0.0, 0.0], t as f64 / n as f64)).collect();
            let js = pinning_mc(
                &kernel,
                &eta,
                cfg.law.field_mode(),
                cfg.seed,
                cfg.samples,
                n,
                |batch, lane| {
                    let mut acc = 0.0;
                    for (t, pv) in psi_vals.iter().enumerate() {
                        if *pv != 0.0 {
                            acc += (batch.z(lane, t) - 1.0) * pv;
                        }
                    }
                    rn_sqrt / n as f64 * acc
                },
            )?;
            let var = stats::batch_stat(&js, stats::variance)?;
            let (sigma, _) = sigma_psi_quadrature(&ck, &law, &psi)?;
            let mut csv = CsvTable::new(&["statistic", "value", "se"]);
            csv.push(vec!["var_j_exact".into(), exact.into(), f64::NAN.into()]);
            csv.push(vec!["var_j_mc".into(), var.value.into(), var.se.into()]);
            csv.push(vec!["sigma_psi".into(), sigma.into(), f64::NAN.into()]);
            csv.push(vec![
                "gap_exact_vs_limit".into(),
                (exact - sigma).abs().into(),
                f64::NAN.into(),
            ]);
            Ok(csv)
        });
    }
    Ok(ctx.cells)
}

fn theta_cells(cfg: &ExperimentConfig) -> Result<Vec<CellRecord>> {
    let mut ctx = CellCtx::new(cfg);
    if cfg.model != ModelKind::RenewalHalf {
        ctx.cell("theta_unsupported", || {
            Err(Error::Unsupported(
                "theta experiment runs on the renewal model at desk scale".into(),
            ))
        });
        return Ok(ctx.cells);
    }
    let n = *cfg.n_grid.iter().max().unwrap();
    let kernel = build_model_kernel(cfg, cfg.model, n)?;
    let overlap = overlap_table(&kernel);
    let m = cfg.m;
    let name = format!("theta_n{}_m{}", n, m);
    ctx.cell(&name, || {
        let blocks = block_boundaries(&overlap, n, m)?;
        let eta = cfg.law.eta_params(0.0);
        let mut targets: Vec<Vec<u32>> = (1..=m as u32).map(|i| vec![i]).collect();
        if m >= 4 {
            targets.push(vec![3, 1]);
        }
        let samples: Vec<Vec<f64>> = (0..cfg.samples)
            .into_par_iter()
            .map(|rep| -> Result<Vec<f64>> {
                let field = DisorderField::new(cfg.seed, rep as u64, cfg.law.field_mode());
                targets
                    .iter()
                    .map(|i| {
                        crate::chaos::theta_block(
                            &kernel, &field, &eta, &overlap, n, &blocks, i, None,
                        )
                    })
                    .collect()
            })
            .collect::<Result<_>>()?;
        let cols = transpose(samples);
        let rn = overlap.total(n)?;
        let max_r = overlap.max_r(n);
        let slack = 2.0 * max_r / (rn / m as f64);
        let mut csv = CsvTable::new(&[
            "target",
            "mean",
            "variance",
            "kurtosis",
            "exact_variance",
            "bracket_lo",
            "bracket_hi",
        ]);
        for (ti, i) in targets.iter().enumerate() {
            let label = i
                .iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join("-");
            let exact_var = if i.len() == 1 {
                let b = i[0] as usize;
                m as f64 / rn
                    * (overlap.total(blocks.boundaries[b])?
                        - overlap.total(blocks.boundaries[b - 1])?)
            } else {
                f64::NAN
            };
            csv.push(vec![
                label.into(),
                stats::mean(&cols[ti]).into(),
                stats::variance(&cols[ti]).into(),
                stats::kurtosis(&cols[ti]).into(),
                exact_var.into(),
                (1.0 - slack).into(),
                (1.0 + slack).into(),
            ]);
        }
        for a in 0..targets.len() {
            for b in (a + 1)..targets.len() {
                let corr = stats::correlation(&cols[a], &cols[b]);
                csv.push(vec![
                    format!(
                        "corr_{}_{}",
                        a + 1,
                        b + 1
                    )
                    .into(),
                    corr.into(),
                    f64::NAN.into(),
                    f64::NAN.into(),
                    f64::NAN.into(),
                    f64::NAN.into(),
                    f64::NAN.into(),
                ]);
            }
        }
        Ok(csv)
    });
    Ok(ctx.cells)
}

fn she_cells(cfg: &ExperimentConfig) -> Result<Vec<CellRecord>> {
    let mut ctx = CellCtx::new(cfg);
    let n_max = *cfg.n_grid.iter().max().unwrap();
    let kernel = build_model_kernel(cfg, ModelKind::Srw2d, n_max)?;
    let overlap = overlap_table(&kernel);
    let bh = cfg.beta_hat_grid[0];

    ctx.cell("she_schedule", || {
        let mut csv = CsvTable::new(&["n", "eps", "beta_eps", "beta_overlap", "relative_gap"]);
        for &n in &cfg.n_grid {
            let eps = 1.0 / (n as f64).sqrt();
            let be = beta_eps(eps, bh)?;
            let bo = beta_schedule(&overlap, n, bh)?;
            csv.push(vec![
                n.into(),
                eps.into(),
                be.into(),
                bo.into(),
                ((be - bo).abs() / bo).into(),
            ]);
        }
        Ok(csv)
    });

    ctx.cell(&format!("she_surrogate_moments_b{}", fmt_beta(bh)), || {
        let mut csv = CsvTable::new(&["n", "eps", "second_moment", "limit", "gap"]);
        let limit = 1.0 / (1.0 - bh * bh);
        for &n in &cfg.n_grid {
            let beta = beta_schedule(&overlap, n, bh)?;
            let eta = cfg.law.eta_params(beta);
            let m2 = second_moment_exact(&overlap, &eta, n)?;
            csv.push(vec![
                n.into(),
                (1.0 / (n as f64).sqrt()).into(),
                m2.into(),
                limit.into(),
                (m2 - limit).abs().into(),
            ]);
        }
        Ok(csv)
    });

    ctx.cell("she_grid_mean", || {
        let h = 1.0 / 32.0;
        let runs = cfg.samples.min(500);
        let means: Vec<f64> = (0..runs)
            .into_par_iter()
            .map(|i| -> Result<f64> {
                let run = SheRun {
                    eps: 4.0 * h,
                    beta_hat: bh,
                    h,
                    dt: h * h / 4.0,
                    cells: 32,
                    seed: cfg.seed.wrapping_add(i as u64),
                };
                Ok(she_grid_solve(&run, &Mollifier::bump(1.0), 0.25)?.mean())
            })
            .collect::<Result<_>>()?;
        let m = stats::batch_stat(&means, stats::mean)?;
        let mut csv = CsvTable::new(&["statistic", "value", "se"]);
        csv.push(vec!["runs".into(), runs.into(), f64::NAN.into()]);
        csv.push(vec!["mean_u".into(), m.value.into(), m.se.into()]);
        csv.push(vec![
            "deviation_from_one".into(),
            (m.value - 1.0).abs().into(),
            m.se.into(),
        ]);
        Ok(csv)
    });

    ctx.cell("she_grid_vs_surrogate_var", || {
        let h: f64 = 1.0 / 24.0;
        let eps = 4.0 * h;
        let runs = cfg.samples.min(300);
        let n_match = (1.0 / (eps * eps)).floor() as usize;
        let kernel_small = build_model_kernel(cfg, ModelKind::Srw2d, n_match)?;
        let overlap_small = overlap_table(&kernel_small);
        let mut csv = CsvTable::new(&["beta_hat", "grid_var", "surrogate_var"]);
        for &b in &[0.25, 0.5] {
            let vals: Vec<f64> = (0..runs)
                .into_par_iter()
                .map(|i| -> Result<f64> {
                    let run = SheRun {
                        eps,
                        beta_hat: b,
                        h,
                        dt: h * h / 4.0,
                        cells: 24,
                        seed: cfg.seed.wrapping_add(7700 + i as u64),
                    };
                    Ok(she_grid_solve(&run, &Mollifier::bump(1.0), 0.25)?.at_origin())
                })
                .collect::<Result<_>>()?;
            let gv = stats::variance(&vals);
            let beta = beta_schedule(&overlap_small, n_match, b)?;
            let eta = cfg.law.eta_params(beta);
            let sv = second_moment_exact(&overlap_small, &eta, n_match)? - 1.0;
            csv.push(vec![b.into(), gv.into(), sv.into()]);
        }
        Ok(csv)
    });

    Ok(ctx.cells)
}

fn strong_cells(cfg: &ExperimentConfig) -> Result<Vec<CellRecord>> {
    let mut ctx = CellCtx::new(cfg);
    let n_max = *cfg.n_grid.iter().max().unwrap();
    let kernel = build_model_kernel(cfg, cfg.model, n_max)?;
    let overlap = overlap_table(&kernel);

    for &n in &cfg.n_grid {
        let name = format!("strong_{}_n{}", cfg.model, n);
        ctx.cell(&name, || {
            let mut csv = CsvTable::new(&["beta_hat", "fractional_moment", "se", "upper_bound"]);
            let mut prev: Option<(Vec<f64>, f64)> = None;
            let mut violations = 0usize;
            for &bh in &cfg.beta_hat_grid {
                let beta = beta_schedule(&overlap, n, bh)?;
                let eta = cfg.law.eta_params(beta);
                // common random numbers: the disorder field depends only on
                // (seed, realization), not on beta
                let xs = z0_samples(&kernel, &eta, cfg.law.field_mode(), cfg.seed, cfg.samples, n)?;
                let frac: Vec<f64> = xs.iter().map(|z| z.powf(cfg.theta)).collect();
                let est = stats::batch_stat(&frac, stats::mean)?;
                let bound = if bh < 1.0 {
                    (1.0 - bh * bh).powf(-cfg.theta * (cfg.theta - 1.0) / 2.0)
                } else {
                    f64::NAN
                };
                if let Some((prev_frac, prev_val)) = &prev {
                    // paired difference across the common disorder
                    let diffs: Vec<f64> = frac
                        .iter()
                        .zip(prev_frac)
                        .map(|(a, b)| a - b)
                        .collect();
                    let d = stats::batch_stat(&diffs, stats::mean)?;
                    if est.value > *prev_val && d.value > 2.0 * d.se {
                        violations += 1;
                    }
                }
                prev = Some((frac, est.value));
                csv.push(vec![bh.into(), est.value.into(), est.se.into(), bound.into()]);
            }
            csv.push(vec![
                "monotonicity_violations".into(),
                (violations as f64).into(),
                f64::NAN.into(),
                f64::NAN.into(),
            ]);
            Ok(csv)
        });
    }
    Ok(ctx.cells)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::ExperimentConfig;
    use std::path::Path;

    fn smoke_config(dir: &Path) -> ExperimentConfig {
        ExperimentConfig {
            n_grid: vec![64, 128],
            beta_hat_grid: vec![0.5],
            samples: 240,
            out_dir: dir.to_path_buf(),
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn smoke_single_runs_fast_and_reproducibly() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = smoke_config(dir.path());
        let start = Instant::now();
        let report = run_experiment(ExperimentKind::Single, &cfg).unwrap();
        assert!(start.elapsed().as_secs_f64() < 10.0, "smoke config too slow");
        assert_eq!(report.failed_cells(), 0);
        let csv1 = std::fs::read_to_string(dir.path().join("single_renewal_half_n64_b0p5.csv"))
            .unwrap();

        // second run, different thread count, byte-identical CSV
        let dir2 = tempfile::tempdir().unwrap();
        let mut cfg2 = smoke_config(dir2.path());
        cfg2.threads = 1;
        let report2 = run_experiment(ExperimentKind::Single, &cfg2).unwrap();
        assert_eq!(report2.failed_cells(), 0);
        let csv2 = std::fs::read_to_string(dir2.path().join("single_renewal_half_n64_b0p5.csv"))
            .unwrap();
        assert_eq!(csv1, csv2);
    }

    #[test]
    fn beta_zero_cell_is_deterministic_unity() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = smoke_config(dir.path());
        cfg.beta_hat_grid = vec![0.0];
        cfg.n_grid = vec![64];
        let report = run_experiment(ExperimentKind::Single, &cfg).unwrap();
        assert_eq!(report.failed_cells(), 0);
        let csv = std::fs::read_to_string(dir.path().join("single_renewal_half_n64_b0.csv"))
            .unwrap();
        for line in csv.lines() {
            if let Some(rest) = line.strip_prefix("variance,") {
                let var: f64 = rest.split(',').next().unwrap().parse().unwrap();
                assert!(var.abs() < 1e-20, "variance {var}");
            }
            if let Some(rest) = line.strip_prefix("mean,") {
                let mean: f64 = rest.split(',').next().unwrap().parse().unwrap();
                assert!((mean - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn cell_failures_are_recorded_not_fatal() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = smoke_config(dir.path());
        cfg.n_grid = vec![64];
        cfg.m = 4;
        cfg.model = ModelKind::Srw2d; // theta experiment rejects walk models
        let report = run_experiment(ExperimentKind::Theta, &cfg).unwrap();
        assert_eq!(report.failed_cells(), 1);
        assert!(report.manifest_path.exists());
    }
}
