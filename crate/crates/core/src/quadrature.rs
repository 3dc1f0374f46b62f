//! Small quadrature toolbox shared by the kernel and rate modules:
//! Gauss-Legendre rules (Newton on the Legendre recurrence) and adaptive
//! Simpson integration for smooth one-dimensional integrands.

use crate::error::{CoreError, Result};

/// Gauss-Legendre nodes and weights on [-1, 1], nodes ascending.
pub fn gauss_legendre(n: usize) -> Result<(Vec<f64>, Vec<f64>)> {
    if n == 0 || n > 1024 {
        return Err(CoreError::InvalidParameter(format!(
            "gauss_legendre order {n} outside 1..=1024"
        )));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi initial guess for the i-th root (descending), then Newton.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre P_n and derivative via the three-term recurrence.
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let kf = k as f64;
                let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                p0 = p1;
                p1 = p2;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let dx = p1 / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    Ok((nodes, weights))
}

/// Gauss-Legendre integral of `f` over [a, b] with a fixed order.
pub fn gauss_legendre_integrate<F: Fn(f64) -> f64>(n: usize, a: f64, b: f64, f: F) -> Result<f64> {
    let (x, w) = gauss_legendre(n)?;
    let half = 0.5 * (b - a);
    let mid = 0.5 * (a + b);
    Ok(half
        * x.iter()
            .zip(&w)
            .map(|(&xi, &wi)| wi * f(mid + half * xi))
            .sum::<f64>())
}

fn simpson_rule<F: Fn(f64) -> f64>(f: &F, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
    let m = 0.5 * (a + b);
    let fm = f(m);
    ((b - a) / 6.0 * (fa + 4.0 * fm + fb), m, fm)
}

#[allow(clippy::too_many_arguments)] // recursion carries its bracket state positionally
fn simpson_recurse<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    fa: f64,
    b: f64,
    fb: f64,
    whole: f64,
    m: f64,
    fm: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let (left, lm, flm) = simpson_rule(f, a, fa, m, fm);
    let (right, rm, frm) = simpson_rule(f, m, fm, b, fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_recurse(f, a, fa, m, fm, left, lm, flm, 0.5 * tol, depth - 1)
            + simpson_recurse(f, m, fm, b, fb, right, rm, frm, 0.5 * tol, depth - 1)
    }
}

/// Adaptive Simpson integration of a smooth integrand over [a, b] with an
/// absolute tolerance.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> f64 {
    if a == b {
        return 0.0;
    }
    let fa = f(a);
    let fb = f(b);
    let (whole, m, fm) = simpson_rule(&f, a, fa, b, fb);
    simpson_recurse(&f, a, fa, b, fb, whole, m, fm, tol.max(1e-15), 48)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn legendre_low_orders_match_closed_forms() {
        let (x, w) = gauss_legendre(2).unwrap();
        let r = 1.0 / 3.0f64.sqrt();
        assert!((x[0] + r).abs() < 1e-14 && (x[1] - r).abs() < 1e-14);
        assert!((w[0] - 1.0).abs() < 1e-14 && (w[1] - 1.0).abs() < 1e-14);
        let (x3, w3) = gauss_legendre(3).unwrap();
        assert!((x3[2] - 0.6f64.sqrt()).abs() < 1e-14);
        assert!((w3[1] - 8.0 / 9.0).abs() < 1e-14);
    }

    #[test]
    fn legendre_exact_for_high_degree_polynomial() {
        // int_{-1}^{1} x^18 dx = 2/19, exact for n >= 10
        let got = gauss_legendre_integrate(10, -1.0, 1.0, |x| x.powi(18)).unwrap();
        assert!((got - 2.0 / 19.0).abs() < 1e-14);
    }

    #[test]
    fn legendre_oscillatory_integral() {
        // int_0^pi sin(x) dx = 2
        let got = gauss_legendre_integrate(24, 0.0, std::f64::consts::PI, f64::sin).unwrap();
        assert!((got - 2.0).abs() < 1e-13);
    }

    #[test]
    fn simpson_matches_analytic() {
        let got = adaptive_simpson(|x: f64| (-x * x).exp(), 0.0, 6.0, 1e-12);
        let want = 0.886_226_925_452_758; // sqrt(pi)/2 minus a 1e-17 tail
        assert!((got - want).abs() < 1e-10);
        let osc = adaptive_simpson(|x: f64| (10.0 * x).cos(), 0.0, 2.0, 1e-12);
        assert!((osc - (20.0f64).sin() / 10.0).abs() < 1e-10);
    }
}
