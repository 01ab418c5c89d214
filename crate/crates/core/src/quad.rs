//! Small adaptive Simpson integrator used by the limit-law module.

/// Adaptive Simpson on [a, b] to absolute tolerance `tol`.
/// Returns (value, error estimate).
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> (f64, f64) {
    if a == b {
        return (0.0, 0.0);
    }
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = simpson(a, b, fa, fm, fb);
    let mut err_total = 0.0;
    let v = adapt(f, a, b, fa, fm, fb, whole, tol, 52, &mut err_total);
    (v, err_total)
}

/// Integrate with forced split points (singularities, kinks).
pub fn integrate_split(f: &dyn Fn(f64) -> f64, points: &[f64], tol: f64) -> (f64, f64) {
    let mut total = 0.0;
    let mut err = 0.0;
    for w in points.windows(2) {
        if w[1] > w[0] {
            let (v, e) = integrate(f, w[0], w[1], tol / (points.len() as f64 - 1.0));
            total += v;
            err += e;
        }
    }
    (total, err)
}

fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
    (b - a) / 6.0 * (fa + 4.0 * fm + fb)
}

#[allow(clippy::too_many_arguments)]
fn adapt(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
    err_total: &mut f64,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = simpson(a, m, fa, flm, fm);
    let right = simpson(m, b, fm, frm, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        *err_total += delta.abs() / 15.0;
        return left + right + delta / 15.0;
    }
    adapt(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1, err_total)
        + adapt(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1, err_total)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomials_are_exact() {
        let (v, _) = integrate(&|x| 3.0 * x * x, 0.0, 2.0, 1e-12);
        assert!((v - 8.0).abs() < 1e-12);
    }

    #[test]
    fn handles_log_endpoint() {
        let (v, _) = integrate(&|x: f64| if x > 0.0 { x.ln() } else { 0.0 }, 0.0, 1.0, 1e-11);
        assert!((v + 1.0).abs() < 1e-8, "got {v}");
    }

    #[test]
    fn split_points_respected() {
        let f = |x: f64| x.abs();
        let (v, _) = integrate_split(&f, &[-1.0, 0.0, 1.0], 1e-12);
        assert!((v - 1.0).abs() < 1e-12);
    }
}
