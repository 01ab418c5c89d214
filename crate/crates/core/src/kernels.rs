//! Exact transition and renewal kernels for the three lattice models, the
//! replica overlap table built from them, block partitions of the time axis,
//! and scaling diagnostics.
//!
//! The three models:
//!
//! * `Srw2d`: simple random walk on Z^2. Rotating to u = x1+x2, v = x1-x2
//!   turns the walk into two independent 1d simple random walks, so the
//!   n-step mass is an exact product of binomial rows.
//! * `Cauchy1d`: long-range walk on Z with single-step law c_J/(1+x^2),
//!   built by direct dense convolution on a finite window with explicit
//!   tail-mass accounting.
//! * `RenewalHalf`: renewal process with inter-arrival law c_f n^{-3/2};
//!   the kernel is the renewal mass function q_n = P(n in tau).

use crate::error::{Error, Result};
use std::fs;
use std::io::{Read, Write};
use std::path::Path;

/// A lattice space-time point. For d = 0 the spatial part is ignored, for
/// d = 1 only `x[0]` is meaningful.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpaceTime {
    pub x: [i64; 2],
    pub t: usize,
}

impl SpaceTime {
    pub fn d0(t: usize) -> Self {
        SpaceTime { x: [0, 0], t }
    }
    pub fn d1(x: i64, t: usize) -> Self {
        SpaceTime { x: [x, 0], t }
    }
    pub fn d2(x: [i64; 2], t: usize) -> Self {
        SpaceTime { x, t }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Srw2d,
    Cauchy1d,
    RenewalHalf,
}

impl ModelKind {
    pub fn dim(self) -> usize {
        match self {
            ModelKind::Srw2d => 2,
            ModelKind::Cauchy1d => 1,
            ModelKind::RenewalHalf => 0,
        }
    }

    pub fn tag(self) -> u8 {
        match self {
            ModelKind::Srw2d => 0,
            ModelKind::Cauchy1d => 1,
            ModelKind::RenewalHalf => 2,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Self> {
        match tag {
            0 => Some(ModelKind::Srw2d),
            1 => Some(ModelKind::Cauchy1d),
            2 => Some(ModelKind::RenewalHalf),
            _ => None,
        }
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "srw2d" | "srw" | "d2" => Ok(ModelKind::Srw2d),
            "cauchy1d" | "cauchy" | "d1" => Ok(ModelKind::Cauchy1d),
            "renewal_half" | "renewal" | "pinning" | "d0" => Ok(ModelKind::RenewalHalf),
            other => Err(Error::Config(format!("unknown model `{other}`"))),
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ModelKind::Srw2d => "srw2d",
            ModelKind::Cauchy1d => "cauchy1d",
            ModelKind::RenewalHalf => "renewal_half",
        };
        f.write_str(s)
    }
}

/// Resource limits for kernel construction.
#[derive(Debug, Clone, Copy)]
pub struct KernelBudget {
    /// Upper bound on bytes of kernel mass storage.
    pub max_bytes: u64,
    /// Hard cap on any per-step window radius (Cauchy only).
    pub window_cap: usize,
}

impl Default for KernelBudget {
    fn default() -> Self {
        KernelBudget {
            max_bytes: 2 << 30,
            window_cap: 1 << 22,
        }
    }
}

#[derive(Debug, Clone)]
enum KernelData {
    /// `rows[n][k]` = P(1d SRW at position -n + 2k after n steps), len n+1.
    Srw2d { rows: Vec<Vec<f64>> },
    /// `masses[n]` covers x in [-W_n, W_n]; `c_j` is the single-step
    /// normalization.
    Cauchy1d { c_j: f64, masses: Vec<Vec<f64>> },
    /// Inter-arrival law `f` (index 1..=n_max), renewal mass `q`
    /// (index 0..=n_max) and survival `s[k]` = P(tau_1 > k).
    Renewal {
        f: Vec<f64>,
        q: Vec<f64>,
        survival: Vec<f64>,
    },
}

/// Exact n-step masses for one model, with per-step window metadata.
#[derive(Debug, Clone)]
pub struct LatticeKernel {
    model: ModelKind,
    n_max: usize,
    tail_tol: f64,
    data: KernelData,
    window_radius: Vec<usize>,
    tail_mass: Vec<f64>,
}

/// Neumaier compensated sum.
pub(crate) fn comp_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// zeta(3/2), by direct summation with an Euler-Maclaurin tail.
fn zeta_three_halves() -> f64 {
    const CUT: usize = 1_000_000;
    let head = comp_sum((1..=CUT).rev().map(|n| (n as f64).powf(-1.5)));
    let x = CUT as f64 + 0.5;
    // integral tail plus the leading correction
    let tail = 2.0 / x.sqrt() - (1.0 / 16.0) * x.powf(-2.5);
    head + tail
}

impl LatticeKernel {
    pub fn model(&self) -> ModelKind {
        self.model
    }
    pub fn n_max(&self) -> usize {
        self.n_max
    }
    pub fn tail_tol(&self) -> f64 {
        self.tail_tol
    }
    pub fn window_radius(&self, n: usize) -> usize {
        self.window_radius[n]
    }
    pub fn tail_mass(&self, n: usize) -> f64 {
        self.tail_mass[n]
    }

    /// n-step mass at lattice point `x` (scalar q_n for the renewal model).
    pub fn mass(&self, n: usize, x: [i64; 2]) -> f64 {
        match &self.data {
            KernelData::Srw2d { rows } => {
                let row = &rows[n];
                let (u, v) = (x[0] + x[1], x[0] - x[1]);
                let n_i = n as i64;
                if u.abs() > n_i || v.abs() > n_i || (u + n_i) % 2 != 0 || (v + n_i) % 2 != 0 {
                    return 0.0;
                }
                row[((u + n_i) / 2) as usize] * row[((v + n_i) / 2) as usize]
            }
            KernelData::Cauchy1d { masses, .. } => {
                let w = self.window_radius[n] as i64;
                if x[0].abs() > w {
                    return 0.0;
                }
                masses[n][(x[0] + w) as usize]
            }
            KernelData::Renewal { q, .. } => q[n],
        }
    }

    /// 1d binomial row of the axis walk (Srw2d only): entry k is the mass at
    /// -n + 2k.
    pub fn srw_row(&self, n: usize) -> &[f64] {
        match &self.data {
            KernelData::Srw2d { rows } => &rows[n],
            _ => panic!("srw_row on non-Srw2d kernel"),
        }
    }

    /// Full mass array over the window (Cauchy1d only), centered.
    pub fn cauchy_row(&self, n: usize) -> &[f64] {
        match &self.data {
            KernelData::Cauchy1d { masses, .. } => &masses[n],
            _ => panic!("cauchy_row on non-Cauchy1d kernel"),
        }
    }

    pub fn cauchy_step_norm(&self) -> f64 {
        match &self.data {
            KernelData::Cauchy1d { c_j, .. } => *c_j,
            _ => panic!("cauchy_step_norm on non-Cauchy1d kernel"),
        }
    }

    /// Renewal mass function q_n = P(n in tau) (renewal model only).
    pub fn renewal_q(&self) -> &[f64] {
        match &self.data {
            KernelData::Renewal { q, .. } => q,
            _ => panic!("renewal_q on non-renewal kernel"),
        }
    }

    /// Inter-arrival law, index 1..=n_max (entry 0 is zero).
    pub fn renewal_f(&self) -> &[f64] {
        match &self.data {
            KernelData::Renewal { f, .. } => f,
            _ => panic!("renewal_f on non-renewal kernel"),
        }
    }

    /// survival[k] = P(tau_1 > k), index 0..=n_max.
    pub fn renewal_survival(&self) -> &[f64] {
        match &self.data {
            KernelData::Renewal { survival, .. } => survival,
            _ => panic!("renewal_survival on non-renewal kernel"),
        }
    }

    /// Per-step overlap r_n = sum_x q_n(x)^2.
    pub fn overlap_at(&self, n: usize) -> f64 {
        match &self.data {
            KernelData::Srw2d { rows } => {
                let s = comp_sum(rows[n].iter().map(|p| p * p));
                s * s
            }
            KernelData::Cauchy1d { masses, .. } => comp_sum(masses[n].iter().map(|p| p * p)),
            KernelData::Renewal { q, .. } => q[n] * q[n],
        }
    }

    /// Degenerate debug renewal with f(1) = 1, so q_n = 1 for every n.
    pub fn degenerate_renewal(n_max: usize) -> Self {
        let mut f = vec![0.0; n_max + 1];
        if n_max >= 1 {
            f[1] = 1.0;
        }
        let q = vec![1.0; n_max + 1];
        let mut survival = vec![0.0; n_max + 1];
        survival[0] = 1.0;
        LatticeKernel {
            model: ModelKind::RenewalHalf,
            n_max,
            tail_tol: 0.0,
            data: KernelData::Renewal { f, q, survival },
            window_radius: vec![0; n_max + 1],
            tail_mass: vec![0.0; n_max + 1],
        }
    }
}

/// Build the exact kernel table for `model` up to horizon `n_max`.
pub fn build_kernel(model: ModelKind, n_max: usize, tail_tol: f64) -> Result<LatticeKernel> {
    build_kernel_with(model, n_max, tail_tol, KernelBudget::default())
}

pub fn build_kernel_with(
    model: ModelKind,
    n_max: usize,
    tail_tol: f64,
    budget: KernelBudget,
) -> Result<LatticeKernel> {
    if n_max < 1 {
        return Err(Error::Domain("n_max must be >= 1".into()));
    }
    if !(tail_tol > 0.0 && tail_tol < 1.0) {
        return Err(Error::Domain("tail_tol must lie in (0, 1)".into()));
    }
    match model {
        ModelKind::Srw2d => build_srw2d(n_max, tail_tol, budget),
        ModelKind::Cauchy1d => build_cauchy1d(n_max, tail_tol, budget),
        ModelKind::RenewalHalf => build_renewal(n_max, tail_tol),
    }
}

fn build_srw2d(n_max: usize, tail_tol: f64, budget: KernelBudget) -> Result<LatticeKernel> {
    let needed = 8 * ((n_max as u64 + 2) * (n_max as u64 + 1)) / 2;
    if needed > budget.max_bytes {
        return Err(Error::Sizing {
            needed,
            budget: budget.max_bytes,
        });
    }
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n_max + 1);
    rows.push(vec![1.0]);
    for n in 1..=n_max {
        let prev = &rows[n - 1];
        let mut row = vec![0.0; n + 1];
        for (k, slot) in row.iter_mut().enumerate() {
            let a = if k >= 1 { prev[k - 1] } else { 0.0 };
            let b = if k < n { prev[k] } else { 0.0 };
            *slot = 0.5 * (a + b);
        }
        rows.push(row);
    }
    let window_radius = (0..=n_max).collect();
    Ok(LatticeKernel {
        model: ModelKind::Srw2d,
        n_max,
        tail_tol,
        data: KernelData::Srw2d { rows },
        window_radius,
        tail_mass: vec![0.0; n_max + 1],
    })
}

fn build_cauchy1d(n_max: usize, tail_tol: f64, budget: KernelBudget) -> Result<LatticeKernel> {
    // sum_{x in Z} 1/(1+x^2) = pi coth(pi) (cotangent series)
    let total = std::f64::consts::PI / std::f64::consts::PI.tanh();
    let c_j = 1.0 / total;
    let step = |x: i64| c_j / (1.0 + (x as f64) * (x as f64));

    // Retained single-step mass inside |x| <= w, for the window policy.
    // Computed incrementally; tail(w) = 1 - retained(w).
    let mut retained = vec![c_j];
    let grow_retained = |w: usize, retained: &mut Vec<f64>| {
        while retained.len() <= w {
            let x = retained.len() as i64;
            let last = *retained.last().unwrap();
            retained.push(last + 2.0 * step(x));
        }
    };

    // Smallest w with n * tail(w) <= tail_tol / 4; the margin absorbs the
    // extra mass the n truncated convolutions push outside the window.
    let target = tail_tol / 4.0;
    let mut window_radius = vec![0usize; n_max + 1];
    for n in 1..=n_max {
        let mut w = window_radius[n - 1].max(1);
        loop {
            grow_retained(w, &mut retained);
            if (n as f64) * (1.0 - retained[w]) <= target {
                break;
            }
            if w >= budget.window_cap {
                return Err(Error::Truncation {
                    requested: tail_tol,
                    attained: (n as f64) * (1.0 - retained[w]),
                    cap: budget.window_cap,
                });
            }
            w = (w * 2).min(budget.window_cap);
        }
        // walk back down to the minimal radius
        while w > 1 && (n as f64) * (1.0 - retained[w - 1]) <= target {
            w -= 1;
        }
        window_radius[n] = w;
    }

    let needed: u64 = window_radius.iter().map(|&w| 8 * (2 * w as u64 + 1)).sum();
    if needed > budget.max_bytes {
        return Err(Error::Sizing {
            needed,
            budget: budget.max_bytes,
        });
    }

    // Step table out to the largest offset any convolution can see.
    let max_off = window_radius[n_max] + window_radius[n_max.saturating_sub(1)];
    let ptab: Vec<f64> = (0..=max_off as i64).map(step).collect();

    let mut masses: Vec<Vec<f64>> = Vec::with_capacity(n_max + 1);
    masses.push(vec![1.0]);
    let mut tail_mass = vec![0.0; n_max + 1];
    for n in 1..=n_max {
        let w_out = window_radius[n] as i64;
        let w_in = window_radius[n - 1] as i64;
        let prev = &masses[n - 1];
        let mut row = vec![0.0; (2 * w_out + 1) as usize];
        // compute the nonnegative half and mirror it, so the symmetry
        // q_n(x) = q_n(-x) holds to the bit
        for x in 0..=w_out {
            let mut acc = 0.0;
            for (j, &p) in prev.iter().enumerate() {
                let y = j as i64 - w_in;
                acc += ptab[(x - y).unsigned_abs() as usize] * p;
            }
            row[(w_out + x) as usize] = acc;
            row[(w_out - x) as usize] = acc;
        }
        tail_mass[n] = 1.0 - comp_sum(row.iter().copied());
        masses.push(row);
    }
    if let Some(&worst) = tail_mass
        .iter()
        .max_by(|a, b| a.partial_cmp(b).unwrap())
        .filter(|&&worst| worst > tail_tol)
    {
        return Err(Error::Truncation {
            requested: tail_tol,
            attained: worst,
            cap: budget.window_cap,
        });
    }

    Ok(LatticeKernel {
        model: ModelKind::Cauchy1d,
        n_max,
        tail_tol,
        data: KernelData::Cauchy1d { c_j, masses },
        window_radius,
        tail_mass,
    })
}

fn build_renewal(n_max: usize, tail_tol: f64) -> Result<LatticeKernel> {
    let zeta = zeta_three_halves();
    let c_f = 1.0 / zeta;
    let mut f = vec![0.0; n_max + 1];
    for (n, slot) in f.iter_mut().enumerate().skip(1) {
        *slot = c_f * (n as f64).powf(-1.5);
    }

    // survival[k] = P(tau_1 > k) = 1 - sum_{m <= k} f(m), from compensated
    // prefix sums so the renewal identities telescope exactly; survival at
    // the horizon is the explicit beyond-horizon mass of the law.
    let mut survival = vec![1.0; n_max + 1];
    {
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        for k in 1..=n_max {
            let v = f[k];
            let t = sum + v;
            if sum.abs() >= v.abs() {
                comp += (sum - t) + v;
            } else {
                comp += (v - t) + sum;
            }
            sum = t;
            survival[k] = (1.0 - (sum + comp)).max(0.0);
        }
    }

    let mut q = vec![0.0; n_max + 1];
    q[0] = 1.0;
    for n in 1..=n_max {
        let mut acc = 0.0;
        for m in 1..=n {
            acc += f[m] * q[n - m];
        }
        q[n] = acc;
    }

    Ok(LatticeKernel {
        model: ModelKind::RenewalHalf,
        n_max,
        tail_tol,
        data: KernelData::Renewal { f, q, survival },
        window_radius: vec![0; n_max + 1],
        tail_mass: vec![0.0; n_max + 1],
    })
}

/// Per-step overlaps r_n = sum_x q_n(x)^2 and their prefix sums R_n.
#[derive(Debug, Clone)]
pub struct OverlapTable {
    model: ModelKind,
    n_max: usize,
    /// r[n] for n in 0..=n_max, r[0] = 0.
    r: Vec<f64>,
    /// big_r[n] = sum_{m <= n} r[m].
    big_r: Vec<f64>,
}

pub fn overlap_table(kernel: &LatticeKernel) -> OverlapTable {
    let n_max = kernel.n_max();
    let mut r = vec![0.0; n_max + 1];
    for (n, slot) in r.iter_mut().enumerate().skip(1) {
        *slot = kernel.overlap_at(n);
    }
    let mut big_r = vec![0.0; n_max + 1];
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for n in 1..=n_max {
        let v = r[n];
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
        big_r[n] = sum + comp;
    }
    OverlapTable {
        model: kernel.model(),
        n_max,
        r,
        big_r,
    }
}

impl OverlapTable {
    pub fn model(&self) -> ModelKind {
        self.model
    }
    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn r(&self, n: usize) -> f64 {
        self.r[n]
    }

    /// R_n = sum_{m <= n} r_m.
    pub fn total(&self, n: usize) -> Result<f64> {
        if n > self.n_max {
            return Err(Error::Range {
                value: n,
                max: self.n_max,
            });
        }
        Ok(self.big_r[n])
    }

    pub fn r_slice(&self) -> &[f64] {
        &self.r
    }

    pub fn max_r(&self, n: usize) -> f64 {
        self.r[1..=n].iter().cloned().fold(0.0, f64::max)
    }
}

/// Intermediate-disorder schedule beta_N = beta_hat / sqrt(R_N).
pub fn beta_schedule(overlap: &OverlapTable, n: usize, beta_hat: f64) -> Result<f64> {
    if beta_hat < 0.0 {
        return Err(Error::Domain("beta_hat must be >= 0".into()));
    }
    let rn = overlap.total(n)?;
    if rn <= 0.0 {
        return Err(Error::Domain("R_N must be positive".into()));
    }
    Ok(beta_hat / rn.sqrt())
}

/// Partition of {1..N} into M consecutive blocks of equal overlap weight.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BlockPartition {
    pub m: usize,
    /// boundaries[i] = t_i, with boundaries[0] = 0 and boundaries[m] = N.
    pub boundaries: Vec<usize>,
}

impl BlockPartition {
    /// Half-open block I_i = (t_{i-1}, t_i], 1-based i.
    pub fn block(&self, i: usize) -> std::ops::RangeInclusive<usize> {
        (self.boundaries[i - 1] + 1)..=self.boundaries[i]
    }
}

/// Block boundaries t_i = min { m : R_m >= (i/M) R_N }.
pub fn block_boundaries(overlap: &OverlapTable, n: usize, m: usize) -> Result<BlockPartition> {
    if m < 1 || m > n {
        return Err(Error::Domain(format!("need 1 <= M <= N, got M={m}, N={n}")));
    }
    let positive = overlap.r[1..=n].iter().filter(|&&v| v > 0.0).count();
    if m > positive {
        return Err(Error::InfeasiblePartition { m, positive });
    }
    let rn = overlap.total(n)?;
    let mut boundaries = Vec::with_capacity(m + 1);
    boundaries.push(0usize);
    let mut cursor = 1usize;
    for i in 1..=m {
        let threshold = rn * (i as f64) / (m as f64);
        while cursor < n && overlap.big_r[cursor] < threshold {
            cursor += 1;
        }
        boundaries.push(cursor);
    }
    boundaries[m] = n;
    Ok(BlockPartition { m, boundaries })
}

/// phi^{-1}(|x|) = min { n : n^{1/d} >= |x| }, i.e. ceil(|x|^d), computed on
/// integer lattice points without floating-point rounding.
fn phi_inverse(model: ModelKind, dx: [i64; 2]) -> usize {
    match model.dim() {
        0 => 0,
        1 => dx[0].unsigned_abs() as usize,
        _ => (dx[0] * dx[0] + dx[1] * dx[1]) as usize,
    }
}

/// Scale separation of two space-time points: returns (|||X - X'|||, zeta)
/// with zeta = R_{|||X - X'|||} / R_N clamped to [0, 1].
pub fn triple_norm_zeta(
    overlap: &OverlapTable,
    n: usize,
    a: SpaceTime,
    b: SpaceTime,
) -> Result<(usize, f64)> {
    let dt = a.t.abs_diff(b.t);
    let dx = [a.x[0] - b.x[0], a.x[1] - b.x[1]];
    let norm = dt.max(phi_inverse(overlap.model, dx));
    if norm == 0 {
        return Ok((0, 0.0));
    }
    if norm > overlap.n_max {
        return Err(Error::Range {
            value: norm,
            max: overlap.n_max,
        });
    }
    let rn = overlap.total(n)?;
    let zeta = (overlap.big_r[norm] / rn).clamp(0.0, 1.0);
    Ok((norm, zeta))
}

/// Local-limit-theorem diagnostic: sup over the lattice of the rescaled
/// deviation n q_n(x) - g(x / phi(n)) from the kernel's own limiting stable
/// density (sublattice-doubled, per-coordinate variance 1/2 for the simple
/// walk; Cauchy scale pi c_J for the long-range walk). Purely informational.
pub fn llt_diagnostic(kernel: &LatticeKernel, n: usize) -> Result<f64> {
    if n < 1 || n > kernel.n_max() {
        return Err(Error::Range {
            value: n,
            max: kernel.n_max(),
        });
    }
    let nf = n as f64;
    match &kernel.data {
        KernelData::Srw2d { rows } => {
            // sublattice cells have area 2; the walk's covariance is I/2, so
            // the density of S_n / sqrt(n) is exp(-|x|^2) / pi
            let row = &rows[n];
            let mut worst = 0.0f64;
            for (ku, &pu) in row.iter().enumerate() {
                let u = -(n as i64) + 2 * ku as i64;
                for (kv, &pv) in row.iter().enumerate() {
                    let v = -(n as i64) + 2 * kv as i64;
                    let x_sq = ((u * u + v * v) / 2) as f64;
                    let g = (1.0 / std::f64::consts::PI) * (-x_sq / nf).exp();
                    worst = worst.max((nf * pu * pv - 2.0 * g).abs());
                }
            }
            Ok(worst)
        }
        KernelData::Cauchy1d { c_j, masses } => {
            // S_n / n tends to the Cauchy law with scale gamma = pi c_J
            let gamma = std::f64::consts::PI * c_j;
            let w = kernel.window_radius(n) as i64;
            let mut worst = 0.0f64;
            for (i, &p) in masses[n].iter().enumerate() {
                let x = (i as i64 - w) as f64;
                let y = x / nf;
                let g = gamma / (std::f64::consts::PI * (gamma * gamma + y * y));
                worst = worst.max((nf * p - g).abs());
            }
            Ok(worst)
        }
        KernelData::Renewal { q, .. } => {
            let c = renewal_c_estimate(kernel);
            Ok((nf.sqrt() * q[n] - c).abs())
        }
    }
}

/// Empirical estimate of the constant c with sqrt(n) q_n -> c, from the tail
/// of the table.
pub fn renewal_c_estimate(kernel: &LatticeKernel) -> f64 {
    let q = kernel.renewal_q();
    let n_max = kernel.n_max();
    let lo = (3 * n_max / 4).max(1);
    let vals: Vec<f64> = (lo..=n_max).map(|m| (m as f64).sqrt() * q[m]).collect();
    comp_sum(vals.iter().copied()) / vals.len() as f64
}

// ---------------------------------------------------------------------------
// binary cache, magic "MRGK1", little-endian
// ---------------------------------------------------------------------------

const CACHE_MAGIC: &[u8; 5] = b"MRGK1";

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}
fn put_f64(buf: &mut Vec<u8>, v: f64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

struct CacheReader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> CacheReader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Cache("truncated file".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl LatticeKernel {
    /// Payload rows as stored in the cache: one float64 array per step.
    fn payload_row(&self, n: usize) -> Vec<f64> {
        match &self.data {
            KernelData::Srw2d { rows } => rows[n].clone(),
            KernelData::Cauchy1d { masses, .. } => masses[n].clone(),
            KernelData::Renewal { f, q, survival } => vec![f[n], q[n], survival[n]],
        }
    }

    pub fn write_cache(&self, path: &Path) -> Result<()> {
        let mut buf = Vec::new();
        buf.extend_from_slice(CACHE_MAGIC);
        buf.push(1u8); // layout version
        buf.push(self.model.tag());
        put_u64(&mut buf, self.n_max as u64);
        put_f64(&mut buf, self.tail_tol);
        if let KernelData::Cauchy1d { c_j, .. } = &self.data {
            put_f64(&mut buf, *c_j);
        } else {
            put_f64(&mut buf, 0.0);
        }
        for n in 0..=self.n_max {
            put_u64(&mut buf, self.window_radius[n] as u64);
            put_f64(&mut buf, self.tail_mass[n]);
            let row = self.payload_row(n);
            put_u64(&mut buf, row.len() as u64);
            for v in row {
                put_f64(&mut buf, v);
            }
        }
        let mut file = fs::File::create(path)?;
        file.write_all(&buf)?;
        Ok(())
    }

    pub fn read_cache(path: &Path) -> Result<Self> {
        let mut raw = Vec::new();
        fs::File::open(path)?.read_to_end(&mut raw)?;
        let mut r = CacheReader { buf: &raw, pos: 0 };
        if r.take(5)? != CACHE_MAGIC {
            return Err(Error::Cache("bad magic".into()));
        }
        if r.take(1)?[0] != 1 {
            return Err(Error::Cache("unknown layout version".into()));
        }
        let model = ModelKind::from_tag(r.take(1)?[0]).ok_or_else(|| {
            Error::Cache("unknown model tag".into())
        })?;
        let n_max = r.u64()? as usize;
        let tail_tol = r.f64()?;
        let c_j = r.f64()?;
        let mut window_radius = Vec::with_capacity(n_max + 1);
        let mut tail_mass = Vec::with_capacity(n_max + 1);
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n_max + 1);
        for _ in 0..=n_max {
            window_radius.push(r.u64()? as usize);
            tail_mass.push(r.f64()?);
            let len = r.u64()? as usize;
            let mut row = Vec::with_capacity(len);
            for _ in 0..len {
                row.push(r.f64()?);
            }
            rows.push(row);
        }
        let data = match model {
            ModelKind::Srw2d => KernelData::Srw2d { rows },
            ModelKind::Cauchy1d => KernelData::Cauchy1d { c_j, masses: rows },
            ModelKind::RenewalHalf => {
                let mut f = vec![0.0; n_max + 1];
                let mut q = vec![0.0; n_max + 1];
                let mut survival = vec![0.0; n_max + 1];
                for (n, row) in rows.iter().enumerate() {
                    if row.len() != 3 {
                        return Err(Error::Cache("bad renewal payload".into()));
                    }
                    f[n] = row[0];
                    q[n] = row[1];
                    survival[n] = row[2];
                }
                KernelData::Renewal { f, q, survival }
            }
        };
        Ok(LatticeKernel {
            model,
            n_max,
            tail_tol,
            data,
            window_radius,
            tail_mass,
        })
    }

    /// Load from `path` if it holds a kernel with exactly this key, else
    /// build and write it.
    pub fn cached(
        path: &Path,
        model: ModelKind,
        n_max: usize,
        tail_tol: f64,
    ) -> Result<Self> {
        if path.exists() {
            let k = Self::read_cache(path)?;
            if k.model == model && k.n_max == n_max && k.tail_tol.to_bits() == tail_tol.to_bits() {
                return Ok(k);
            }
        }
        let k = build_kernel(model, n_max, tail_tol)?;
        k.write_cache(path)?;
        Ok(k)
    }
}
