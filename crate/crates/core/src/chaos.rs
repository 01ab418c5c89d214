//! Truncated polynomial chaos terms Z^(k), block variables Theta, and the
//! dominated-sequence combinatorics that index the limiting Gaussian blocks.

use crate::disorder::{DisorderField, EtaParams};
use crate::error::{Error, Result};
use crate::kernels::{
    comp_sum, BlockPartition, LatticeKernel, ModelKind, OverlapTable, SpaceTime,
};

/// Entries drawn from {1..M}; sharp means all pairwise gaps are >= 2,
/// dominated means the first entry strictly exceeds the rest.
pub fn is_sharp(i: &[u32]) -> bool {
    for (a, &va) in i.iter().enumerate() {
        for &vb in &i[a + 1..] {
            if va.abs_diff(vb) < 2 {
                return false;
            }
        }
    }
    true
}

pub fn is_dominated(i: &[u32]) -> bool {
    match i.split_first() {
        None => false,
        Some((head, rest)) => rest.iter().all(|v| v < head),
    }
}

/// Split a sequence at its strict running maxima. Concatenating the pieces
/// reproduces the input and every piece is dominated.
pub fn dominated_decomposition(i: &[u32]) -> Vec<Vec<u32>> {
    let mut out: Vec<Vec<u32>> = Vec::new();
    let mut best: Option<u32> = None;
    for &v in i {
        if best.is_none_or(|b| v > b) {
            best = Some(v);
            out.push(vec![v]);
        } else {
            out.last_mut().expect("first entry starts a piece").push(v);
        }
    }
    out
}

/// Ordered overlap-chain sums U_k(N) = sum over 0 < n_1 < ... < n_k <= N of
/// prod_j r_{n_j - n_{j-1}}. U_k <= R_N^k, with equality lost only to the
/// ordering constraint.
pub fn ordered_chain_sums(overlap: &OverlapTable, n: usize, k_max: usize) -> Vec<f64> {
    use rayon::prelude::*;
    let r = overlap.r_slice();
    // layer[m] = chain weight ending exactly at m
    let mut layer: Vec<f64> = r[..=n].to_vec();
    let mut sums = Vec::with_capacity(k_max);
    sums.push(comp_sum(layer[1..=n].iter().copied()));
    for _ in 2..=k_max {
        let next: Vec<f64> = (0..=n)
            .into_par_iter()
            .map(|m| {
                let mut acc = 0.0;
                for j in 1..m {
                    acc += layer[j] * r[m - j];
                }
                acc
            })
            .collect();
        layer = next;
        sums.push(comp_sum(layer[1..=n].iter().copied()));
    }
    sums
}

/// Chaos terms Z^(1..=k_max) for one disorder realization, via the
/// pickup-count dynamic programme. The normalization R_N^{-k/2} is applied.
pub fn chaos_terms(
    kernel: &LatticeKernel,
    field: &DisorderField,
    eta: &EtaParams,
    overlap: &OverlapTable,
    n: usize,
    k_max: usize,
) -> Result<Vec<f64>> {
    if k_max == 0 {
        return Ok(Vec::new());
    }
    if n > kernel.n_max() {
        return Err(Error::Range {
            value: n,
            max: kernel.n_max(),
        });
    }
    let rn = overlap.total(n)?;
    let raw = match kernel.model() {
        ModelKind::RenewalHalf => chaos_raw_renewal(kernel, field, eta, n, k_max),
        ModelKind::Srw2d => chaos_raw_srw(kernel, field, eta, n, k_max)?,
        ModelKind::Cauchy1d => chaos_raw_cauchy(kernel, field, eta, n, k_max)?,
    };
    Ok(raw
        .into_iter()
        .enumerate()
        .map(|(idx, v)| v / rn.powf((idx as f64 + 1.0) / 2.0))
        .collect())
}

pub fn chaos_term_k(
    kernel: &LatticeKernel,
    field: &DisorderField,
    eta: &EtaParams,
    overlap: &OverlapTable,
    n: usize,
    k: usize,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::Domain("chaos order k must be >= 1".into()));
    }
    Ok(chaos_terms(kernel, field, eta, overlap, n, k)?[k - 1])
}

/// scalar model: A_j(n) = eta_n (q_n 1_{j=1} + sum_{m<n} q_{n-m} A_{j-1}(m))
fn chaos_raw_renewal(
    kernel: &LatticeKernel,
    field: &DisorderField,
    eta: &EtaParams,
    n: usize,
    k_max: usize,
) -> Vec<f64> {
    let q = kernel.renewal_q();
    let etas: Vec<f64> = (0..=n)
        .map(|m| if m == 0 { 0.0 } else { field.eta(eta, m, [0, 0]) })
        .collect();
    let mut layers: Vec<Vec<f64>> = vec![vec![0.0; n + 1]; k_max];
    for m in 1..=n {
        layers[0][m] = q[m] * etas[m];
    }
    for j in 1..k_max {
        let (prev, rest) = layers.split_at_mut(j);
        let prev = &prev[j - 1];
        let cur = &mut rest[0];
        for m in 2..=n {
            let mut acc = 0.0;
            for l in 1..m {
                acc += q[m - l] * prev[l];
            }
            cur[m] = etas[m] * acc;
        }
    }
    layers
        .iter()
        .map(|layer| comp_sum(layer[1..=n].iter().copied()))
        .collect()
}

/// 2d walk: running fields S_j(n, .) = sum_{m<n} q_{n-m} * A_{j-1}(m, .),
/// advanced by one single-step convolution per time slice.
fn chaos_raw_srw(
    _kernel: &LatticeKernel,
    field: &DisorderField,
    eta: &EtaParams,
    n: usize,
    k_max: usize,
) -> Result<Vec<f64>> {
    let br = n as i64;
    let side = (2 * br + 1) as usize;
    let bytes = (k_max as u64 + 1) * (side * side * 8) as u64;
    if bytes > (1 << 31) {
        return Err(Error::Sizing {
            needed: bytes,
            budget: 1 << 31,
        });
    }
    let idx = |x: i64, y: i64| ((x + br) as usize) * side + ((y + br) as usize);
    // s[j] holds S_{j+1}(m, .) when processing slice m; s1 seeds with q_m
    let mut s: Vec<Vec<f64>> = vec![vec![0.0; side * side]; k_max];
    s[0][idx(0, 0)] = 1.0; // q_0 = delta; first convolution turns it into q_1
    let mut totals = vec![0.0f64; k_max];
    let mut a_prev: Vec<Vec<f64>> = vec![vec![0.0; side * side]; k_max];

    let conv_into = |src: &[f64], dst: &mut [f64], radius: i64| {
        for x in -radius..=radius {
            for y in -radius..=radius {
                let mut acc = 0.0;
                if x < br {
                    acc += src[idx(x + 1, y)];
                }
                if x > -br {
                    acc += src[idx(x - 1, y)];
                }
                if y < br {
                    acc += src[idx(x, y + 1)];
                }
                if y > -br {
                    acc += src[idx(x, y - 1)];
                }
                dst[idx(x, y)] = 0.25 * acc;
            }
        }
    };

    let mut scratch = vec![0.0f64; side * side];
    for m in 1..=n {
        let radius = m as i64;
        // advance every order: S_j(m) = q_1 * (S_j(m-1) + A_{j-1}(m-1))
        for j in (0..k_max).rev() {
            if j > 0 {
                for (slot, (sv, av)) in scratch
                    .iter_mut()
                    .zip(s[j].iter().zip(a_prev[j - 1].iter()))
                {
                    *slot = sv + av;
                }
                conv_into(&scratch, &mut s[j], radius.min(br));
            } else {
                scratch.copy_from_slice(&s[0]);
                conv_into(&scratch, &mut s[0], radius.min(br));
            }
        }
        // harvest A_j(m) = eta(m, .) S_j(m) on the reachable diamond
        for j in 0..k_max {
            let mut slice_total = 0.0;
            for x in -radius.min(br)..=radius.min(br) {
                let reach = radius - x.abs();
                for y in -reach..=reach {
                    let sv = s[j][idx(x, y)];
                    if sv != 0.0 {
                        let av = field.eta(eta, m, [x, y]) * sv;
                        a_prev[j][idx(x, y)] = av;
                        slice_total += av;
                    } else {
                        a_prev[j][idx(x, y)] = 0.0;
                    }
                }
            }
            totals[j] += slice_total;
        }
    }
    Ok(totals)
}

/// 1d long-range walk, same structure with the windowed step table. Mass
/// convolved outside the horizon window is dropped; the induced bias is of
/// the order of the kernel tail tolerance.
fn chaos_raw_cauchy(
    kernel: &LatticeKernel,
    field: &DisorderField,
    eta: &EtaParams,
    n: usize,
    k_max: usize,
) -> Result<Vec<f64>> {
    let br = kernel.window_radius(n) as i64;
    let len = (2 * br + 1) as usize;
    let c_j = kernel.cauchy_step_norm();
    let ptab: Vec<f64> = (0..=2 * br)
        .map(|o| c_j / (1.0 + (o * o) as f64))
        .collect();
    let ws = br;
    let off = |x: i64| (x + br) as usize;

    let mut s: Vec<Vec<f64>> = vec![vec![0.0; len]; k_max];
    s[0][off(0)] = 1.0;
    let mut a_prev: Vec<Vec<f64>> = vec![vec![0.0; len]; k_max];
    let mut totals = vec![0.0f64; k_max];
    let mut scratch = vec![0.0f64; len];

    let conv_into = |src: &[f64], dst: &mut [f64]| {
        for x in -br..=br {
            let mut acc = 0.0;
            for o in -ws..=ws {
                let y = x + o;
                if (-br..=br).contains(&y) {
                    acc += ptab[o.unsigned_abs() as usize] * src[off(y)];
                }
            }
            dst[off(x)] = acc;
        }
    };

    for m in 1..=n {
        for j in (0..k_max).rev() {
            if j > 0 {
                for (slot, (sv, av)) in scratch
                    .iter_mut()
                    .zip(s[j].iter().zip(a_prev[j - 1].iter()))
                {
                    *slot = sv + av;
                }
            } else {
                scratch.copy_from_slice(&s[0]);
            }
            conv_into(&scratch, &mut s[j]);
        }
        for j in 0..k_max {
            let mut slice_total = 0.0;
            for x in -br..=br {
                let sv = s[j][off(x)];
                if sv != 0.0 {
                    let av = field.eta(eta, m, [x, 0]) * sv;
                    a_prev[j][off(x)] = av;
                    slice_total += av;
                } else {
                    a_prev[j][off(x)] = 0.0;
                }
            }
            totals[j] += slice_total;
        }
    }
    Ok(totals)
}

/// 1 + sum_{k<=K} beta_hat^k Z^(k).
pub fn truncated_z(
    kernel: &LatticeKernel,
    field: &DisorderField,
    eta: &EtaParams,
    overlap: &OverlapTable,
    n: usize,
    beta_hat: f64,
    k_cap: usize,
) -> Result<f64> {
    if k_cap == 0 || beta_hat == 0.0 {
        return Ok(1.0);
    }
    let terms = chaos_terms(kernel, field, eta, overlap, n, k_cap)?;
    let mut z = 1.0;
    let mut pow = 1.0;
    for t in terms {
        pow *= beta_hat;
        z += pow * t;
    }
    Ok(z)
}

/// Exact L^2 mass of the orders beyond K:
/// sum_{k>K} beta_hat^{2k} var_eta^k U_k / R_N^k.
pub fn truncation_tail_l2(
    overlap: &OverlapTable,
    eta: &EtaParams,
    n: usize,
    beta_hat: f64,
    k_cap: usize,
) -> Result<f64> {
    let full = crate::partition::second_moment_exact(overlap, eta, n)?;
    let rn = overlap.total(n)?;
    let gamma = beta_hat * beta_hat * eta.var_eta / rn;
    let sums = ordered_chain_sums(overlap, n, k_cap);
    let mut head = 1.0;
    let mut pow = 1.0;
    for u in sums {
        pow *= gamma;
        head += pow * u;
    }
    Ok((full - head).max(0.0))
}

/// Block variable Theta for an index sequence of length 1 or 2, optionally
/// started at a point other than the origin.
#[allow(clippy::too_many_arguments)]
pub fn theta_block(
    kernel: &LatticeKernel,
    field: &DisorderField,
    eta: &EtaParams,
    overlap: &OverlapTable,
    n: usize,
    blocks: &BlockPartition,
    i: &[u32],
    start: Option<SpaceTime>,
) -> Result<f64> {
    if i.is_empty() || i.len() > 2 {
        return Err(Error::Unsupported(
            "theta blocks are implemented for |i| in {1, 2}".into(),
        ));
    }
    for &ix in i {
        if ix < 1 || ix as usize > blocks.m {
            return Err(Error::Domain(format!("block index {ix} outside 1..={}", blocks.m)));
        }
    }
    let rn = overlap.total(n)?;
    let scale = (blocks.m as f64 / rn).powf(i.len() as f64 / 2.0);
    let origin = start.unwrap_or(SpaceTime { x: [0, 0], t: 0 });
    let b1 = blocks.block(i[0] as usize);

    let total = match kernel.model() {
        ModelKind::RenewalHalf => {
            let q = kernel.renewal_q();
            let t0 = origin.t;
            if i.len() == 1 {
                let mut acc = 0.0;
                for a in b1 {
                    acc += q[a] * field.eta(eta, t0 + a, [0, 0]);
                }
                acc
            } else {
                let b2 = blocks.block(i[1] as usize);
                let mut acc = 0.0;
                for a in b1 {
                    let first = q[a] * field.eta(eta, t0 + a, [0, 0]);
                    if first == 0.0 {
                        continue;
                    }
                    let mut inner = 0.0;
                    for b in b2.clone() {
                        inner += q[b] * field.eta(eta, t0 + a + b, [0, 0]);
                    }
                    acc += first * inner;
                }
                acc
            }
        }
        _ => {
            // spatial models: sum q-weighted eta over the reachable window
            let t0 = origin.t;
            let x0 = origin.x;
            if i.len() == 1 {
                let mut acc = 0.0;
                for a in b1 {
                    acc += spatial_layer_sum(kernel, field, eta, t0 + a, x0, a, None);
                }
                acc
            } else {
                let b2 = blocks.block(i[1] as usize);
                let mut acc = 0.0;
                for a in b1 {
                    acc += spatial_layer_sum(
                        kernel,
                        field,
                        eta,
                        t0 + a,
                        x0,
                        a,
                        Some((&b2, eta, field)),
                    );
                }
                acc
            }
        }
    };
    Ok(scale * total)
}

type InnerBlock<'a> = (
    &'a std::ops::RangeInclusive<usize>,
    &'a EtaParams,
    &'a DisorderField,
);

/// sum_z q_a(z - x0) eta(t, z) [ * inner block sum from z ].
fn spatial_layer_sum(
    kernel: &LatticeKernel,
    field: &DisorderField,
    eta: &EtaParams,
    t: usize,
    x0: [i64; 2],
    a: usize,
    inner: Option<InnerBlock<'_>>,
) -> f64 {
    let w = kernel.window_radius(a) as i64;
    let mut acc = 0.0;
    match kernel.model() {
        ModelKind::Srw2d => {
            for du in -w..=w {
                for dv in -w..=w {
                    if (du + dv) % 2 != 0 {
                        continue;
                    }
                    let dx = [(du + dv) / 2, (du - dv) / 2];
                    let z = [x0[0] + dx[0], x0[1] + dx[1]];
                    let q = kernel.mass(a, dx);
                    if q == 0.0 {
                        continue;
                    }
                    let head = q * field.eta(eta, t, z);
                    acc += match &inner {
                        None => head,
                        Some((range, ep, fld)) => {
                            let mut sub = 0.0;
                            for b in (*range).clone() {
                                sub += spatial_layer_sum(kernel, fld, ep, t + b, z, b, None);
                            }
                            head * sub
                        }
                    };
                }
            }
        }
        ModelKind::Cauchy1d => {
            for dx in -w..=w {
                let q = kernel.mass(a, [dx, 0]);
                if q == 0.0 {
                    continue;
                }
                let z = [x0[0] + dx, 0];
                let head = q * field.eta(eta, t, z);
                acc += match &inner {
                    None => head,
                    Some((range, ep, fld)) => {
                        let mut sub = 0.0;
                        for b in (*range).clone() {
                            sub += spatial_layer_sum(kernel, fld, ep, t + b, z, b, None);
                        }
                        head * sub
                    }
                };
            }
        }
        ModelKind::RenewalHalf => unreachable!(),
    }
    acc
}
