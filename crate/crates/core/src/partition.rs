//! Disordered partition functions from one backward dynamic-programming
//! sweep, exact second and cross moments through overlap-chain recursions,
//! and the rescaled field functional J.

use crate::disorder::{DisorderField, EtaParams};
use crate::error::{Error, Result};
use crate::kernels::{comp_sum, LatticeKernel, ModelKind, OverlapTable, SpaceTime};
use std::sync::Arc;

/// Continuous test function on R^d x [0,1] with a declared compact support
/// box |x|_inf <= x_half (the time support is always [0,1]).
#[derive(Clone)]
pub struct FieldWeight {
    pub dim: usize,
    pub x_half: f64,
    f: Arc<dyn Fn([f64; 2], f64) -> f64 + Send + Sync>,
}

impl std::fmt::Debug for FieldWeight {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "FieldWeight(d={}, x_half={})", self.dim, self.x_half)
    }
}

impl FieldWeight {
    pub fn from_fn(
        dim: usize,
        x_half: f64,
        f: impl Fn([f64; 2], f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        FieldWeight {
            dim,
            x_half,
            f: Arc::new(f),
        }
    }

    /// Indicator of the support box.
    pub fn flat(dim: usize) -> Self {
        Self::from_fn(dim, 1.0, |_, _| 1.0)
    }

    pub fn zero(dim: usize) -> Self {
        Self::from_fn(dim, 1.0, |_, _| 0.0)
    }

    /// Smooth compactly supported bump in space and time.
    pub fn bump(dim: usize) -> Self {
        Self::from_fn(dim, 1.0, move |x, t| {
            let mut v = tent(2.0 * t - 1.0);
            for c in x.iter().take(dim) {
                v *= tent(*c);
            }
            v
        })
    }

    pub fn eval(&self, xhat: [f64; 2], that: f64) -> f64 {
        if !(0.0..=1.0).contains(&that) {
            return 0.0;
        }
        for c in xhat.iter().take(self.dim) {
            if c.abs() > self.x_half {
                return 0.0;
            }
        }
        (self.f)(xhat, that)
    }
}

fn tent(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        0.0
    } else {
        (-1.0 / (1.0 - u * u)).exp() * std::f64::consts::E
    }
}

/// Which starting points a sweep must retain.
#[derive(Debug, Clone)]
pub enum SweepRegion {
    Origin,
    Points(Vec<SpaceTime>),
    /// every (x, t) with |x|_inf <= ceil(x_half * phi(N)), 0 <= t <= N
    Box { x_half: f64 },
}

#[derive(Debug, Clone)]
enum SurfaceData {
    Scalar(Vec<f64>),
    Points(Vec<(SpaceTime, f64)>),
    Grid { x_half: i64, per_t: Vec<Vec<f64>> },
}

/// Z values for a family of starting points under one disorder realization.
#[derive(Debug, Clone)]
pub struct PartitionSurface {
    pub model: ModelKind,
    pub n: usize,
    pub beta: f64,
    /// Bound on the weight-1 continuation bias (Cauchy windows only).
    pub bias_bound: f64,
    data: SurfaceData,
}

impl PartitionSurface {
    pub fn at(&self, p: SpaceTime) -> Result<f64> {
        match &self.data {
            SurfaceData::Scalar(z) => z.get(p.t).copied().ok_or(Error::Range {
                value: p.t,
                max: self.n,
            }),
            SurfaceData::Points(list) => list
                .iter()
                .find(|(q, _)| *q == p)
                .map(|(_, v)| *v)
                .ok_or_else(|| Error::Coverage(format!("point ({:?}, {})", p.x, p.t))),
            SurfaceData::Grid { x_half, per_t } => {
                if p.t > self.n {
                    return Err(Error::Range {
                        value: p.t,
                        max: self.n,
                    });
                }
                let h = *x_half;
                if p.x[0].abs() > h || p.x[1].abs() > h {
                    return Err(Error::Coverage(format!("point ({:?}, {})", p.x, p.t)));
                }
                let side = (2 * h + 1) as usize;
                let (i, j) = ((p.x[0] + h) as usize, (p.x[1] + h) as usize);
                let flat = if self.model.dim() == 2 { i * side + j } else { i };
                Ok(per_t[p.t][flat])
            }
        }
    }

    /// All Z(t) for the pinning model.
    pub fn scalar(&self) -> &[f64] {
        match &self.data {
            SurfaceData::Scalar(z) => z,
            _ => panic!("scalar() on a spatial surface"),
        }
    }
}

fn phi(model: ModelKind, n: usize) -> f64 {
    match model.dim() {
        0 => 1.0,
        1 => n as f64,
        _ => (n as f64).sqrt(),
    }
}

/// Backward sweep for the directed-polymer models (d = 1, 2), producing Z
/// for every retained starting point.
pub fn polymer_z_all_starts(
    kernel: &LatticeKernel,
    field: &DisorderField,
    eta: &EtaParams,
    n: usize,
    region: &SweepRegion,
) -> Result<PartitionSurface> {
    if eta.beta < 0.0 {
        return Err(Error::Domain("beta must be >= 0".into()));
    }
    if n > kernel.n_max() {
        return Err(Error::Range {
            value: n,
            max: kernel.n_max(),
        });
    }
    match kernel.model() {
        ModelKind::Srw2d => sweep_srw2d(kernel, field, eta, n, region),
        ModelKind::Cauchy1d => sweep_cauchy(kernel, field, eta, n, region),
        ModelKind::RenewalHalf => Err(Error::Unsupported(
            "polymer sweep needs a walk kernel; use pinning_z_all_starts".into(),
        )),
    }
}

fn roi_radius(model: ModelKind, n: usize, region: &SweepRegion) -> i64 {
    match region {
        SweepRegion::Origin => 0,
        SweepRegion::Points(pts) => pts
            .iter()
            .map(|p| p.x[0].abs().max(p.x[1].abs()))
            .max()
            .unwrap_or(0),
        SweepRegion::Box { x_half } => (x_half * phi(model, n)).ceil() as i64,
    }
}

fn harvest_points(region: &SweepRegion) -> Option<&[SpaceTime]> {
    match region {
        SweepRegion::Points(p) => Some(p),
        _ => None,
    }
}

fn sweep_srw2d(
    kernel: &LatticeKernel,
    field: &DisorderField,
    eta: &EtaParams,
    n: usize,
    region: &SweepRegion,
) -> Result<PartitionSurface> {
    let roi = roi_radius(kernel.model(), n, region);
    let br = roi + n as i64;
    let side = (2 * br + 1) as usize;
    let idx = |x: i64, y: i64| -> usize { ((x + br) as usize) * side + ((y + br) as usize) };

    let mut z = vec![1.0f64; side * side];
    let mut w = vec![1.0f64; side * side];
    let mut harvest: Vec<(SpaceTime, f64)> = Vec::new();
    let mut per_t: Vec<Vec<f64>> = Vec::new();
    let box_half = match region {
        SweepRegion::Box { .. } => roi,
        _ => 0,
    };
    let grab = |z: &[f64], t: usize, harvest: &mut Vec<(SpaceTime, f64)>, per_t: &mut Vec<Vec<f64>>| {
        if let Some(pts) = harvest_points(region) {
            for p in pts.iter().filter(|p| p.t == t) {
                harvest.push((*p, z[idx(p.x[0], p.x[1])]));
            }
        } else if matches!(region, SweepRegion::Box { .. }) {
            let hs = (2 * box_half + 1) as usize;
            let mut row = vec![0.0; hs * hs];
            for (i, x) in (-box_half..=box_half).enumerate() {
                for (j, y) in (-box_half..=box_half).enumerate() {
                    row[i * hs + j] = z[idx(x, y)];
                }
            }
            per_t.push(row);
        } else if t == 0 {
            harvest.push((SpaceTime::d2([0, 0], 0), z[idx(0, 0)]));
        }
    };

    grab(&z, n, &mut harvest, &mut per_t);
    for m in (0..n).rev() {
        let active = roi + m as i64 + 1; // z-extent needed one level up
        for x in -active..=active {
            for y in -active..=active {
                let i = idx(x, y);
                w[i] = field.xi(eta, m + 1, [x, y]) * z[i];
            }
        }
        let reach = roi + m as i64;
        for x in -reach..=reach {
            for y in -reach..=reach {
                z[idx(x, y)] = 0.25
                    * (w[idx(x + 1, y)] + w[idx(x - 1, y)] + w[idx(x, y + 1)] + w[idx(x, y - 1)]);
            }
        }
        grab(&z, m, &mut harvest, &mut per_t);
    }

    let data = match region {
        SweepRegion::Box { .. } => {
            per_t.reverse(); // grabbed from t = n down to 0
            SurfaceData::Grid {
                x_half: box_half,
                per_t,
            }
        }
        _ => SurfaceData::Points(harvest),
    };
    Ok(PartitionSurface {
        model: kernel.model(),
        n,
        beta: eta.beta,
        bias_bound: 0.0,
        data,
    })
}

fn sweep_cauchy(
    kernel: &LatticeKernel,
    field: &DisorderField,
    eta: &EtaParams,
    n: usize,
    region: &SweepRegion,
) -> Result<PartitionSurface> {
    let roi = roi_radius(kernel.model(), n, region);
    let ws = kernel.window_radius(n) as i64;
    let br = roi + ws;
    let len = (2 * br + 1) as usize;
    let off = |x: i64| (x + br) as usize;

    let c_j = kernel.cauchy_step_norm();
    let ptab: Vec<f64> = (0..=2 * ws)
        .map(|o| c_j / (1.0 + (o as f64) * (o as f64)))
        .collect();
    let step_tail = 1.0 - comp_sum((-ws..=ws).map(|o| ptab[o.unsigned_abs() as usize]));

    let mut z = vec![1.0f64; len];
    let mut w = vec![1.0f64; len];
    let mut harvest: Vec<(SpaceTime, f64)> = Vec::new();
    let mut per_t: Vec<Vec<f64>> = Vec::new();
    let box_half = match region {
        SweepRegion::Box { .. } => roi,
        _ => 0,
    };
    let grab = |z: &[f64], t: usize, harvest: &mut Vec<(SpaceTime, f64)>, per_t: &mut Vec<Vec<f64>>| {
        if let Some(pts) = harvest_points(region) {
            for p in pts.iter().filter(|p| p.t == t) {
                harvest.push((*p, z[off(p.x[0])]));
            }
        } else if matches!(region, SweepRegion::Box { .. }) {
            per_t.push((-box_half..=box_half).map(|x| z[off(x)]).collect());
        } else if t == 0 {
            harvest.push((SpaceTime::d1(0, 0), z[off(0)]));
        }
    };

    grab(&z, n, &mut harvest, &mut per_t);
    for m in (0..n).rev() {
        for x in -br..=br {
            w[off(x)] = field.xi(eta, m + 1, [x, 0]) * z[off(x)];
        }
        let mut znew = vec![0.0f64; len];
        for x in -br..=br {
            let mut acc = step_tail; // out-of-support continuation at weight 1
            for o in -ws..=ws {
                let y = x + o;
                let p = ptab[o.unsigned_abs() as usize];
                if y < -br || y > br {
                    acc += p; // out-of-window continuation at weight 1
                } else {
                    acc += p * w[off(y)];
                }
            }
            znew[off(x)] = acc;
        }
        z = znew;
        grab(&z, m, &mut harvest, &mut per_t);
    }

    let data = match region {
        SweepRegion::Box { .. } => {
            per_t.reverse();
            SurfaceData::Grid {
                x_half: box_half,
                per_t,
            }
        }
        _ => SurfaceData::Points(harvest),
    };
    Ok(PartitionSurface {
        model: kernel.model(),
        n,
        beta: eta.beta,
        bias_bound: n as f64 * kernel.tail_tol(),
        data,
    })
}

/// Backward renewal sweep: Z(t) for every start time t in one pass.
pub fn pinning_z_all_starts(
    kernel: &LatticeKernel,
    field: &DisorderField,
    eta: &EtaParams,
    n: usize,
) -> Result<PartitionSurface> {
    if kernel.model() != ModelKind::RenewalHalf {
        return Err(Error::Unsupported("pinning sweep needs a renewal kernel".into()));
    }
    if n > kernel.n_max() {
        return Err(Error::Range {
            value: n,
            max: kernel.n_max(),
        });
    }
    let f = kernel.renewal_f();
    let s = kernel.renewal_survival();
    let mut z = vec![1.0f64; n + 1];
    // weighted values w(u) = xi(u) Z(u)
    let mut w = vec![0.0f64; n + 1];
    if n >= 1 {
        w[n] = field.xi(eta, n, [0, 0]);
    }
    for t in (0..n).rev() {
        let horizon = n - t;
        let mut acc = 0.0;
        for m in 1..=horizon {
            acc += f[m] * w[t + m];
        }
        z[t] = s[horizon] + acc;
        if t >= 1 {
            w[t] = field.xi(eta, t, [0, 0]) * z[t];
        }
    }
    Ok(PartitionSurface {
        model: ModelKind::RenewalHalf,
        n,
        beta: eta.beta,
        bias_bound: 0.0,
        data: SurfaceData::Scalar(z),
    })
}

/// Same backward renewal sweep over many disorder realizations at once.
/// Lane-major inner layout keeps the convolution vector-friendly; outputs
/// are exactly what per-lane `pinning_z_all_starts` would produce.
pub struct PinningBatch {
    pub n: usize,
    pub lanes: usize,
    z: Vec<f64>, // (n+1) rows of `lanes` values
}

impl PinningBatch {
    pub fn z(&self, lane: usize, t: usize) -> f64 {
        self.z[t * self.lanes + lane]
    }
    pub fn row(&self, t: usize) -> &[f64] {
        &self.z[t * self.lanes..(t + 1) * self.lanes]
    }
}

pub fn pinning_z_batch(
    kernel: &LatticeKernel,
    eta: &EtaParams,
    fields: &[DisorderField],
    n: usize,
) -> Result<PinningBatch> {
    if kernel.model() != ModelKind::RenewalHalf {
        return Err(Error::Unsupported("pinning sweep needs a renewal kernel".into()));
    }
    if n > kernel.n_max() {
        return Err(Error::Range {
            value: n,
            max: kernel.n_max(),
        });
    }
    let lanes = fields.len();
    let f = kernel.renewal_f();
    let s = kernel.renewal_survival();
    let mut xi = vec![0.0f64; (n + 1) * lanes];
    for t in 1..=n {
        for (l, fld) in fields.iter().enumerate() {
            xi[t * lanes + l] = fld.xi(eta, t, [0, 0]);
        }
    }
    let mut z = vec![1.0f64; (n + 1) * lanes];
    let mut w = vec![0.0f64; (n + 1) * lanes];
    for l in 0..lanes {
        w[n * lanes + l] = xi[n * lanes + l];
    }
    let mut acc = vec![0.0f64; lanes];
    for t in (0..n).rev() {
        acc.iter_mut().for_each(|a| *a = 0.0);
        for m in 1..=(n - t) {
            let fm = f[m];
            let row = &w[(t + m) * lanes..(t + m + 1) * lanes];
            for (a, &v) in acc.iter_mut().zip(row) {
                *a += fm * v;
            }
        }
        let sv = s[n - t];
        for l in 0..lanes {
            let zv = sv + acc[l];
            z[t * lanes + l] = zv;
            if t >= 1 {
                w[t * lanes + l] = xi[t * lanes + l] * zv;
            }
        }
    }
    Ok(PinningBatch { n, lanes, z })
}

const BLOWUP_LIMIT: f64 = 1e12;

/// Chain propagator h(k) = gamma (r_k + sum_{j<k} r_j h(k-j)).
fn chain_propagator(r: &[f64], gamma: f64, n: usize) -> Result<Vec<f64>> {
    let mut h = vec![0.0f64; n + 1];
    let mut running = 0.0;
    for k in 1..=n {
        let mut acc = r[k];
        for j in 1..k {
            acc += r[j] * h[k - j];
        }
        h[k] = gamma * acc;
        running += h[k];
        if running > BLOWUP_LIMIT {
            return Err(Error::L2BlowUp {
                at: k,
                limit: BLOWUP_LIMIT,
            });
        }
    }
    Ok(h)
}

/// Exact E[Z_{N,beta}^2] from the overlap-chain recursion; no sampling.
pub fn second_moment_exact(overlap: &OverlapTable, eta: &EtaParams, n: usize) -> Result<f64> {
    let gamma = eta.beta * eta.beta * eta.var_eta;
    if gamma < 0.0 {
        return Err(Error::Domain("gamma must be >= 0".into()));
    }
    if n > overlap.n_max() {
        return Err(Error::Range {
            value: n,
            max: overlap.n_max(),
        });
    }
    if gamma == 0.0 {
        return Ok(1.0);
    }
    let h = chain_propagator(overlap.r_slice(), gamma, n)?;
    Ok(1.0 + comp_sum(h[1..=n].iter().copied()))
}

/// Meeting weight w(m) = sum_z q_{m-t}(z-x) q_{m-t'}(z-x') for one common
/// pickup time m.
fn meeting_weight(kernel: &LatticeKernel, a: SpaceTime, b: SpaceTime, m: usize) -> f64 {
    if m <= a.t.max(b.t) {
        return 0.0;
    }
    let (ka, kb) = (m - a.t, m - b.t);
    match kernel.model() {
        ModelKind::RenewalHalf => {
            let q = kernel.renewal_q();
            q[ka] * q[kb]
        }
        ModelKind::Cauchy1d => {
            let (ra, rb) = (
                kernel.window_radius(ka) as i64,
                kernel.window_radius(kb) as i64,
            );
            let (qa, qb) = (kernel.cauchy_row(ka), kernel.cauchy_row(kb));
            let lo = (a.x[0] - ra).max(b.x[0] - rb);
            let hi = (a.x[0] + ra).min(b.x[0] + rb);
            let mut acc = 0.0;
            for z in lo..=hi {
                acc += qa[(z - a.x[0] + ra) as usize] * qb[(z - b.x[0] + rb) as usize];
            }
            acc
        }
        ModelKind::Srw2d => {
            // factorizes over the rotated axes
            let axis = |ca: i64, cb: i64| -> f64 {
                let (qa, qb) = (kernel.srw_row(ka), kernel.srw_row(kb));
                let mut acc = 0.0;
                for (i, &pa) in qa.iter().enumerate() {
                    let u = ca - ka as i64 + 2 * i as i64;
                    let num = u - cb + kb as i64;
                    if num % 2 != 0 {
                        return 0.0;
                    }
                    let j = num / 2;
                    if j >= 0 && (j as usize) < qb.len() {
                        acc += pa * qb[j as usize];
                    }
                }
                acc
            };
            let su = axis(a.x[0] + a.x[1], b.x[0] + b.x[1]);
            if su == 0.0 {
                return 0.0;
            }
            su * axis(a.x[0] - a.x[1], b.x[0] - b.x[1])
        }
    }
}

/// Exact E[Z(X) Z(X')] via the first-meeting decomposition.
pub fn cross_moment_exact(
    kernel: &LatticeKernel,
    overlap: &OverlapTable,
    eta: &EtaParams,
    n: usize,
    a: SpaceTime,
    b: SpaceTime,
) -> Result<f64> {
    if a.t >= n || b.t >= n {
        return Err(Error::Range {
            value: a.t.max(b.t),
            max: n - 1,
        });
    }
    if n > overlap.n_max() {
        return Err(Error::Range {
            value: n,
            max: overlap.n_max(),
        });
    }
    let gamma = eta.beta * eta.beta * eta.var_eta;
    if gamma == 0.0 {
        return Ok(1.0);
    }
    let h = chain_propagator(overlap.r_slice(), gamma, n)?;
    // continuation weight after a meeting at m: 1 + sum_{j <= n-m} h_j
    let mut cont = vec![1.0f64; n + 1];
    for j in 1..=n {
        cont[j] = cont[j - 1] + h[j];
    }
    let mut total = 0.0;
    for m in 1..=n {
        let w = meeting_weight(kernel, a, b, m);
        if w == 0.0 {
            continue;
        }
        total += gamma * w * cont[n - m];
        if total > BLOWUP_LIMIT {
            return Err(Error::L2BlowUp {
                at: m,
                limit: BLOWUP_LIMIT,
            });
        }
    }
    Ok(1.0 + total)
}

/// Rescaled field functional
/// J = (1 / (phi(N)^d N)) sum_{x,t} sqrt(R_N) (Z(x,t) - 1) psi(x/phi(N), t/N).
pub fn field_functional_j(
    surface: &PartitionSurface,
    overlap: &OverlapTable,
    psi: &FieldWeight,
) -> Result<f64> {
    let n = surface.n;
    let rn_sqrt = overlap.total(n)?.sqrt();
    let d = surface.model.dim();
    match (&surface.data, d) {
        (SurfaceData::Scalar(z), 0) => {
            let nf = n as f64;
            let terms: Vec<f64> = (0..n)
                .map(|t| (z[t] - 1.0) * psi.eval([0.0, 0.0], t as f64 / nf))
                .collect();
            Ok(rn_sqrt / nf * comp_sum(terms))
        }
        (SurfaceData::Grid { x_half, per_t }, _) => {
            let ph = phi(surface.model, n);
            let need = (psi.x_half * ph).ceil() as i64;
            if *x_half < need {
                return Err(Error::Coverage(format!(
                    "|x|_inf <= {need} required, surface holds {x_half}"
                )));
            }
            let nf = n as f64;
            let side = (2 * x_half + 1) as usize;
            let mut terms = Vec::new();
            for (t, row) in per_t.iter().enumerate().take(n) {
                let that = t as f64 / nf;
                if d == 1 {
                    for (i, zv) in row.iter().enumerate() {
                        let x = i as i64 - x_half;
                        let p = psi.eval([x as f64 / ph, 0.0], that);
                        if p != 0.0 {
                            terms.push((zv - 1.0) * p);
                        }
                    }
                } else {
                    for (i, zv) in row.iter().enumerate() {
                        let x = (i / side) as i64 - x_half;
                        let y = (i % side) as i64 - x_half;
                        let p = psi.eval([x as f64 / ph, y as f64 / ph], that);
                        if p != 0.0 {
                            terms.push((zv - 1.0) * p);
                        }
                    }
                }
            }
            Ok(rn_sqrt / (ph.powi(d as i32) * nf) * comp_sum(terms))
        }
        _ => Err(Error::Unsupported(
            "field functional needs a scalar or box surface".into(),
        )),
    }
}

/// Exact Var(J) for the pinning model, by summing the cross-moment
/// decomposition over all start pairs in O(N^2).
pub fn field_variance_exact(
    kernel: &LatticeKernel,
    overlap: &OverlapTable,
    eta: &EtaParams,
    n: usize,
    psi: &FieldWeight,
) -> Result<f64> {
    if kernel.model() != ModelKind::RenewalHalf {
        return Err(Error::Unsupported("exact field variance is d = 0 only".into()));
    }
    let gamma = eta.beta * eta.beta * eta.var_eta;
    if gamma == 0.0 {
        return Ok(0.0);
    }
    let rn = overlap.total(n)?;
    let q = kernel.renewal_q();
    let r = overlap.r_slice();
    // continuation weight 1 + H(m), H(m) = sum_{l>m} gamma r_{l-m} (1 + H(l))
    let mut one_plus_h = vec![1.0f64; n + 1];
    for m in (1..=n).rev() {
        let mut acc = 0.0;
        for l in (m + 1)..=n {
            acc += gamma * r[l - m] * one_plus_h[l];
        }
        one_plus_h[m] = 1.0 + acc;
    }
    let nf = n as f64;
    // P(m) = sum_{t < m} psi(t/N) q_{m-t}
    let mut total = 0.0;
    for m in 1..=n {
        let mut p = 0.0;
        for t in 0..m.min(n) {
            let pv = psi.eval([0.0, 0.0], t as f64 / nf);
            if pv != 0.0 {
                p += pv * q[m - t];
            }
        }
        total += gamma * one_plus_h[m] * p * p;
    }
    Ok(rn / (nf * nf) * total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::{DisorderLaw, FieldMode};
    use crate::kernels::{build_kernel, overlap_table};

    fn assert_close(a: f64, b: f64, tol: f64) {
        assert!(
            (a - b).abs() <= tol,
            "expected {b} got {a} (diff {:e})",
            (a - b).abs()
        );
    }

    fn gauss_field(seed: u64, idx: u64) -> DisorderField {
        DisorderField::new(seed, idx, FieldMode::Omega(DisorderLaw::Gaussian))
    }

    #[test]
    fn beta_zero_means_flat_surface() {
        let eta = EtaParams::for_law(DisorderLaw::Gaussian, 0.0);
        let f = gauss_field(1, 0);

        let k2 = build_kernel(ModelKind::Srw2d, 6, 1e-9).unwrap();
        let s = polymer_z_all_starts(&k2, &f, &eta, 6, &SweepRegion::Origin).unwrap();
        assert_eq!(s.at(SpaceTime::d2([0, 0], 0)).unwrap(), 1.0);

        let k1 = build_kernel(ModelKind::Cauchy1d, 6, 5e-2).unwrap();
        let s1 = polymer_z_all_starts(&k1, &f, &eta, 6, &SweepRegion::Origin).unwrap();
        assert_eq!(s1.at(SpaceTime::d1(0, 0)).unwrap(), 1.0);

        let k0 = build_kernel(ModelKind::RenewalHalf, 32, 1e-3).unwrap();
        let s0 = pinning_z_all_starts(&k0, &f, &eta, 32).unwrap();
        for t in 0..=32 {
            assert_close(s0.scalar()[t], 1.0, 1e-13);
        }
    }

    #[test]
    fn srw_one_step_formula() {
        let k = build_kernel(ModelKind::Srw2d, 1, 1e-9).unwrap();
        let eta = EtaParams::for_law(DisorderLaw::Gaussian, 0.7);
        let f = gauss_field(11, 4);
        let s = polymer_z_all_starts(&k, &f, &eta, 1, &SweepRegion::Origin).unwrap();
        let mut expect = 0.0;
        for nbr in [[1i64, 0], [-1, 0], [0, 1], [0, -1]] {
            expect += 0.25 * f.xi(&eta, 1, nbr);
        }
        assert_close(s.at(SpaceTime::d2([0, 0], 0)).unwrap(), expect, 1e-14);
    }

    /// exhaustive 4^N path oracle for the 2d walk
    fn srw_brute_force(field: &DisorderField, eta: &EtaParams, n: usize) -> f64 {
        let total = 4usize.pow(n as u32);
        let mut z = 0.0;
        for code in 0..total {
            let (mut x, mut y) = (0i64, 0i64);
            let mut weight = 1.0 / total as f64;
            let mut c = code;
            for step in 1..=n {
                match c % 4 {
                    0 => x += 1,
                    1 => x -= 1,
                    2 => y += 1,
                    _ => y -= 1,
                }
                c /= 4;
                weight *= field.xi(eta, step, [x, y]);
            }
            z += weight;
        }
        z
    }

    #[test]
    fn srw_dp_equals_path_enumeration() {
        let k = build_kernel(ModelKind::Srw2d, 5, 1e-9).unwrap();
        let eta = EtaParams::for_law(DisorderLaw::Gaussian, 0.45);
        for seed in 0..6 {
            let f = gauss_field(100 + seed, 0);
            let s = polymer_z_all_starts(&k, &f, &eta, 5, &SweepRegion::Origin).unwrap();
            let dp = s.at(SpaceTime::d2([0, 0], 0)).unwrap();
            assert_close(dp, srw_brute_force(&f, &eta, 5), 1e-10);
        }
    }

    /// exhaustive renewal-subset oracle for the pinning model
    fn pinning_brute_force(
        kernel: &LatticeKernel,
        field: &DisorderField,
        eta: &EtaParams,
        n: usize,
        start: usize,
    ) -> f64 {
        let f = kernel.renewal_f();
        let s = kernel.renewal_survival();
        let len = n - start;
        let mut z = 0.0;
        for mask in 0u32..(1 << len) {
            let mut weight = 1.0;
            let mut last = start;
            let mut ok = true;
            for b in 0..len {
                if mask & (1 << b) != 0 {
                    let site = start + b + 1;
                    let gap = site - last;
                    if f[gap] == 0.0 {
                        ok = false;
                        break;
                    }
                    weight *= f[gap] * field.xi(eta, site, [0, 0]);
                    last = site;
                }
            }
            if ok {
                z += weight * s[n - last];
            }
        }
        z
    }

    #[test]
    fn pinning_dp_equals_subset_enumeration() {
        let k = build_kernel(ModelKind::RenewalHalf, 10, 1e-3).unwrap();
        let eta = EtaParams::for_law(DisorderLaw::Gaussian, 0.6);
        for seed in 0..6 {
            let f = gauss_field(7 + seed, 2);
            let surf = pinning_z_all_starts(&k, &f, &eta, 10).unwrap();
            for start in [0usize, 3, 9] {
                assert_close(
                    surf.scalar()[start],
                    pinning_brute_force(&k, &f, &eta, 10, start),
                    1e-10,
                );
            }
        }
    }

    #[test]
    fn cauchy_dp_equals_truncated_path_enumeration() {
        // huge tolerance so the step window is tiny and paths are enumerable
        let budget = crate::kernels::KernelBudget::default();
        let k =
            crate::kernels::build_kernel_with(ModelKind::Cauchy1d, 4, 0.9, budget).unwrap();
        let ws = k.window_radius(4) as i64;
        let eta = EtaParams::for_law(DisorderLaw::Gaussian, 0.5);
        let c_j = k.cauchy_step_norm();
        let step = |o: i64| c_j / (1.0 + (o * o) as f64);
        let step_tail = {
            let mut kept = 0.0;
            for o in -ws..=ws {
                kept += step(o);
            }
            1.0 - kept
        };
        let br = ws; // sweep box radius for an origin start
        for seed in 0..4 {
            let fld = gauss_field(300 + seed, 1);
            let s = polymer_z_all_starts(&k, &fld, &eta, 4, &SweepRegion::Origin).unwrap();
            // enumerate all (2ws+2)^4 step sequences; symbol 2ws+1 stands for
            // the truncated step tail, and leaving |x| <= br also absorbs the
            // path at weight 1, exactly as the sweep does
            let base = (2 * ws + 2) as usize;
            let mut z = 0.0;
            for code in 0..base.pow(4) {
                let mut weight = 1.0;
                let mut x = 0i64;
                let mut absorbed = false;
                let mut c = code;
                for t in 1..=4usize {
                    let sym = (c % base) as i64;
                    c /= base;
                    if absorbed {
                        if sym != 0 {
                            weight = 0.0;
                            break;
                        }
                        continue;
                    }
                    if sym == 2 * ws + 1 {
                        weight *= step_tail;
                        absorbed = true;
                    } else {
                        let o = sym - ws;
                        x += o;
                        if x.abs() > br {
                            weight *= step(o);
                            absorbed = true;
                        } else {
                            weight *= step(o) * fld.xi(&eta, t, [x, 0]);
                        }
                    }
                }
                z += weight;
            }
            assert_close(s.at(SpaceTime::d1(0, 0)).unwrap(), z, 1e-10);
        }
    }

    #[test]
    fn batch_matches_single_sweeps() {
        let k = build_kernel(ModelKind::RenewalHalf, 64, 1e-3).unwrap();
        let eta = EtaParams::for_law(DisorderLaw::Gaussian, 0.4);
        let fields: Vec<DisorderField> = (0..5).map(|i| gauss_field(55, i)).collect();
        let batch = pinning_z_batch(&k, &eta, &fields, 64).unwrap();
        for (l, f) in fields.iter().enumerate() {
            let single = pinning_z_all_starts(&k, f, &eta, 64).unwrap();
            for t in 0..=64 {
                assert_eq!(batch.z(l, t), single.scalar()[t]);
            }
        }
    }

    #[test]
    fn degenerate_pinning_one_step() {
        let k = LatticeKernel::degenerate_renewal(8);
        let eta = EtaParams::for_law(DisorderLaw::Gaussian, 0.8);
        let f = gauss_field(21, 0);
        let s = pinning_z_all_starts(&k, &f, &eta, 8).unwrap();
        assert_close(s.scalar()[7], f.xi(&eta, 8, [0, 0]), 1e-15);
    }

    #[test]
    fn second_moment_examples() {
        let k = LatticeKernel::degenerate_renewal(2);
        let t = overlap_table(&k);
        let eta = EtaParams::direct(0.3);
        let gamma = 0.09;
        let m = second_moment_exact(&t, &eta, 2).unwrap();
        assert_close(m, (1.0 + gamma) * (1.0 + gamma), 1e-14);

        let zero = EtaParams::direct(0.0);
        assert_eq!(second_moment_exact(&t, &zero, 2).unwrap(), 1.0);
    }

    #[test]
    fn second_moment_blowup_guard() {
        let k = LatticeKernel::degenerate_renewal(4096);
        let t = overlap_table(&k);
        let eta = EtaParams::direct(0.9); // gamma = 0.81 with r = 1: exponential growth
        assert!(matches!(
            second_moment_exact(&t, &eta, 4096),
            Err(Error::L2BlowUp { .. })
        ));
    }

    #[test]
    fn second_moment_matches_monte_carlo() {
        let n = 64;
        let k = build_kernel(ModelKind::RenewalHalf, n, 1e-3).unwrap();
        let t = overlap_table(&k);
        let beta = crate::kernels::beta_schedule(&t, n, 0.5).unwrap();
        let eta = EtaParams::for_law(DisorderLaw::Gaussian, beta);
        let exact = second_moment_exact(&t, &eta, n).unwrap();

        let samples = 2000usize;
        let fields: Vec<DisorderField> = (0..samples as u64).map(|i| gauss_field(400, i)).collect();
        let batch = pinning_z_batch(&k, &eta, &fields, n).unwrap();
        let sq: Vec<f64> = (0..samples).map(|l| batch.z(l, 0).powi(2)).collect();
        let mean = comp_sum(sq.iter().copied()) / samples as f64;
        let var = comp_sum(sq.iter().map(|v| (v - mean) * (v - mean))) / (samples as f64 - 1.0);
        let se = (var / samples as f64).sqrt();
        assert!(
            (mean - exact).abs() <= 4.0 * se,
            "MC {mean} vs exact {exact} (se {se})"
        );
    }

    #[test]
    fn disorder_average_is_one() {
        // martingale normalization: E[Z] = 1 for any beta
        let n = 64;
        let k = build_kernel(ModelKind::RenewalHalf, n, 1e-3).unwrap();
        let t = overlap_table(&k);
        for bh in [0.25, 0.5] {
            let beta = crate::kernels::beta_schedule(&t, n, bh).unwrap();
            let eta = EtaParams::for_law(DisorderLaw::Gaussian, beta);
            let reps = 5000usize;
            let fields: Vec<DisorderField> =
                (0..reps as u64).map(|i| gauss_field(510, i)).collect();
            let batch = pinning_z_batch(&k, &eta, &fields, n).unwrap();
            let zs: Vec<f64> = (0..reps).map(|l| batch.z(l, 0)).collect();
            let mean = comp_sum(zs.iter().copied()) / reps as f64;
            let var = comp_sum(zs.iter().map(|v| (v - mean) * (v - mean))) / (reps as f64 - 1.0);
            let band = 4.0 * (var / reps as f64).sqrt();
            assert!((mean - 1.0).abs() <= band, "beta_hat {bh}: mean {mean}");
        }
    }

    #[test]
    fn cross_moment_reduces_to_second_moment() {
        let n = 48;
        let k = build_kernel(ModelKind::RenewalHalf, n, 1e-3).unwrap();
        let t = overlap_table(&k);
        let eta = EtaParams::direct(0.35);
        let p = SpaceTime::d0(0);
        let cm = cross_moment_exact(&k, &t, &eta, n, p, p).unwrap();
        let sm = second_moment_exact(&t, &eta, n).unwrap();
        assert_close(cm, sm, 1e-12);

        let zero = EtaParams::direct(0.0);
        assert_eq!(cross_moment_exact(&k, &t, &zero, n, p, p).unwrap(), 1.0);
    }

    /// brute-force chain enumeration of E[Z(X) Z(X')] for tiny renewal horizons
    fn cross_moment_brute(kernel: &LatticeKernel, gamma: f64, n: usize, t1: usize, t2: usize) -> f64 {
        let q = kernel.renewal_q();
        let lo = t1.max(t2);
        let len = n - lo;
        let mut total = 1.0;
        for mask in 1u32..(1 << len) {
            let sites: Vec<usize> = (0..len)
                .filter(|b| mask & (1 << b) != 0)
                .map(|b| lo + b + 1)
                .collect();
            let mut w1 = 1.0;
            let mut prev = None;
            for &s in &sites {
                w1 *= match prev {
                    None => q[s - t1],
                    Some(p) => q[s - p],
                };
                prev = Some(s);
            }
            let mut w2 = 1.0;
            prev = None;
            for &s in &sites {
                w2 *= match prev {
                    None => q[s - t2],
                    Some(p) => q[s - p],
                };
                prev = Some(s);
            }
            total += gamma.powi(sites.len() as i32) * w1 * w2;
        }
        total
    }

    #[test]
    fn cross_moment_matches_chain_enumeration() {
        for (kernel, name) in [
            (LatticeKernel::degenerate_renewal(6), "degenerate"),
            (build_kernel(ModelKind::RenewalHalf, 6, 1e-3).unwrap(), "heavy-tail"),
        ] {
            let t = overlap_table(&kernel);
            let eta = EtaParams::direct(0.4);
            let gamma = 0.16;
            for (t1, t2) in [(0usize, 1usize), (0, 3), (2, 2)] {
                let got = cross_moment_exact(
                    &kernel,
                    &t,
                    &eta,
                    6,
                    SpaceTime::d0(t1),
                    SpaceTime::d0(t2),
                )
                .unwrap();
                let want = cross_moment_brute(&kernel, gamma, 6, t1, t2);
                assert_close(got, want, 1e-12);
                let _ = name;
            }
        }
    }

    #[test]
    fn cross_moment_srw_parity_and_meeting() {
        let k = build_kernel(ModelKind::Srw2d, 32, 1e-9).unwrap();
        let t = overlap_table(&k);
        let eta = EtaParams::direct(0.4);
        let a = SpaceTime::d2([0, 0], 0);
        // odd time offset: walks can never sit on a common site
        let b_odd = SpaceTime::d2([0, 0], 1);
        assert_eq!(cross_moment_exact(&k, &t, &eta, 32, a, b_odd).unwrap(), 1.0);
        // even offset correlates, and less than the aligned second moment
        let b_even = SpaceTime::d2([0, 0], 2);
        let c = cross_moment_exact(&k, &t, &eta, 32, a, b_even).unwrap();
        let m = second_moment_exact(&t, &eta, 32).unwrap();
        assert!(c > 1.0 && c < m);
    }

    #[test]
    fn cross_moment_srw_matches_direct_pair_sum() {
        // independent check of the meeting-weight factorization:
        // w(m) = sum_z q_m(z) q_{m-dt}(z - x) computed from raw 2d masses
        let k = build_kernel(ModelKind::Srw2d, 12, 1e-9).unwrap();
        let a = SpaceTime::d2([0, 0], 0);
        let b = SpaceTime::d2([2, 0], 2);
        for m in 3..=12usize {
            let mut want = 0.0;
            let lim = m as i64;
            for zx in -lim..=lim {
                for zy in -lim..=lim {
                    want += k.mass(m, [zx, zy]) * k.mass(m - 2, [zx - 2, zy]);
                }
            }
            assert_close(meeting_weight(&k, a, b, m), want, 1e-14);
        }
    }

    #[test]
    fn field_functional_examples() {
        let n = 128;
        let k = build_kernel(ModelKind::RenewalHalf, n, 1e-3).unwrap();
        let t = overlap_table(&k);
        let beta = crate::kernels::beta_schedule(&t, n, 0.5).unwrap();
        let eta = EtaParams::for_law(DisorderLaw::Gaussian, beta);
        let f = gauss_field(88, 0);
        let s = pinning_z_all_starts(&k, &f, &eta, n).unwrap();

        assert_eq!(field_functional_j(&s, &t, &FieldWeight::zero(0)).unwrap(), 0.0);

        let zero_eta = EtaParams::for_law(DisorderLaw::Gaussian, 0.0);
        let s0 = pinning_z_all_starts(&k, &f, &zero_eta, n).unwrap();
        assert_close(
            field_functional_j(&s0, &t, &FieldWeight::flat(0)).unwrap(),
            0.0,
            1e-12,
        );

        // linearity in psi
        let psi1 = FieldWeight::flat(0);
        let psi2 = FieldWeight::from_fn(0, 1.0, |_, t| t * t);
        let combo = FieldWeight::from_fn(0, 1.0, |_, t| 2.5 - 3.0 * t * t);
        let j1 = field_functional_j(&s, &t, &psi1).unwrap();
        let j2 = field_functional_j(&s, &t, &psi2).unwrap();
        let jc = field_functional_j(&s, &t, &combo).unwrap();
        assert_close(jc, 2.5 * j1 - 3.0 * j2, 1e-12);
    }

    #[test]
    fn field_functional_coverage_error() {
        let k = build_kernel(ModelKind::Srw2d, 16, 1e-9).unwrap();
        let t = overlap_table(&k);
        let eta = EtaParams::for_law(DisorderLaw::Gaussian, 0.2);
        let f = gauss_field(3, 0);
        let s =
            polymer_z_all_starts(&k, &f, &eta, 16, &SweepRegion::Box { x_half: 0.5 }).unwrap();
        let wide = FieldWeight::flat(2); // needs |x| <= phi(N)
        assert!(matches!(
            field_functional_j(&s, &t, &wide),
            Err(Error::Coverage(_))
        ));
    }

    #[test]
    fn field_variance_exact_matches_monte_carlo() {
        let n = 256;
        let k = build_kernel(ModelKind::RenewalHalf, n, 1e-3).unwrap();
        let t = overlap_table(&k);
        let beta = crate::kernels::beta_schedule(&t, n, 0.5).unwrap();
        let eta = EtaParams::for_law(DisorderLaw::Gaussian, beta);
        let psi = FieldWeight::flat(0);
        let exact = field_variance_exact(&k, &t, &eta, n, &psi).unwrap();

        let samples = 3000usize;
        let fields: Vec<DisorderField> = (0..samples as u64).map(|i| gauss_field(91, i)).collect();
        let batch = pinning_z_batch(&k, &eta, &fields, n).unwrap();
        let rn_sqrt = t.total(n).unwrap().sqrt();
        let js: Vec<f64> = (0..samples)
            .map(|l| {
                let mut acc = 0.0;
                for tt in 0..n {
                    acc += batch.z(l, tt) - 1.0;
                }
                rn_sqrt / n as f64 * acc
            })
            .collect();
        let mean = comp_sum(js.iter().copied()) / samples as f64;
        let var = comp_sum(js.iter().map(|v| (v - mean) * (v - mean))) / (samples as f64 - 1.0);
        // variance-of-variance band, roughly 2 var^2 / n for near-Gaussian J
        let se = var * (2.0 / samples as f64).sqrt() * 2.0;
        assert!(
            (var - exact).abs() <= 4.0 * se,
            "MC var {var} vs exact {exact}"
        );
    }

    #[test]
    fn surface_grid_harvest_is_consistent() {
        let k = build_kernel(ModelKind::Srw2d, 8, 1e-9).unwrap();
        let eta = EtaParams::for_law(DisorderLaw::Gaussian, 0.3);
        let f = gauss_field(17, 0);
        let grid =
            polymer_z_all_starts(&k, &f, &eta, 8, &SweepRegion::Box { x_half: 1.0 }).unwrap();
        let pts = vec![SpaceTime::d2([1, -2], 3), SpaceTime::d2([0, 0], 0)];
        let harvested =
            polymer_z_all_starts(&k, &f, &eta, 8, &SweepRegion::Points(pts.clone())).unwrap();
        for p in pts {
            assert_eq!(grid.at(p).unwrap(), harvested.at(p).unwrap());
        }
    }
}
