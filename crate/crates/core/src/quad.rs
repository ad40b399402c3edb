//! Gauss–Legendre quadrature, fixed panels and adaptive bisection.

use crate::error::{Error, Result};

/// Nodes and weights of the n-point rule on [−1, 1].
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, z);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            if n == 1 {
                p1 = z;
                p0 = 1.0;
            }
            dp = n as f64 * (z * p1 - p0) / (z * z - 1.0);
            let dz = p1 / dp;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

/// Composite Gauss–Legendre over `panels` equal sub-intervals.
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, order: usize, panels: usize) -> f64 {
    let (x, w) = gauss_legendre(order);
    let h = (b - a) / panels as f64;
    let mut sum = 0.0;
    for p in 0..panels {
        let mid = a + (p as f64 + 0.5) * h;
        for (xi, wi) in x.iter().zip(&w) {
            sum += wi * f(mid + 0.5 * h * xi);
        }
    }
    0.5 * h * sum
}

/// Adaptive bisection with a 10-point rule; absolute-or-relative tolerance.
pub fn adaptive<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, tol: f64) -> Result<f64> {
    let rule = gauss_legendre(10);
    let panel = |lo: f64, hi: f64| -> f64 {
        let mid = 0.5 * (lo + hi);
        let half = 0.5 * (hi - lo);
        half * rule.0.iter().zip(&rule.1).map(|(x, w)| w * f(mid + half * x)).sum::<f64>()
    };
    let first = panel(a, b);
    let scale = first.abs().max(1.0);
    let mut stack = vec![(a, b, first, 0usize)];
    let mut total = 0.0;
    let mut evals = 0usize;
    while let Some((lo, hi, whole, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let (l, r) = (panel(lo, mid), panel(mid, hi));
        evals += 1;
        if !(l + r).is_finite() {
            return Err(Error::Domain(format!("non-finite integrand on [{lo}, {hi}]")));
        }
        let local = tol * scale * ((hi - lo) / (b - a)).abs();
        if (l + r - whole).abs() <= local {
            total += l + r;
        } else if depth >= 60 || evals > 200_000 {
            return Err(Error::Domain(format!(
                "adaptive quadrature did not converge on [{lo}, {hi}]"
            )));
        } else {
            stack.push((lo, mid, l, depth + 1));
            stack.push((mid, hi, r, depth + 1));
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn rule_integrates_polynomials_exactly() {
        for n in [1, 2, 5, 10, 20] {
            let (x, w) = gauss_legendre(n);
            assert_relative_eq!(w.iter().sum::<f64>(), 2.0, epsilon = 1e-14);
            let deg = 2 * n - 2;
            let s: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32)).sum();
            assert_relative_eq!(s, 2.0 / (deg as f64 + 1.0), epsilon = 1e-13);
        }
    }

    #[test]
    fn gaussian_integral() {
        let v = integrate(|x| (-x * x).exp(), -8.0, 8.0, 10, 16);
        assert_relative_eq!(v, std::f64::consts::PI.sqrt(), epsilon = 1e-13);
        let a = adaptive(|x| (-x * x).exp(), -8.0, 8.0, 1e-12).unwrap();
        assert_relative_eq!(a, std::f64::consts::PI.sqrt(), epsilon = 1e-11);
    }

    #[test]
    fn adaptive_handles_endpoint_power() {
        let v = adaptive(|x: f64| x.sqrt(), 0.0, 1.0, 1e-12).unwrap();
        assert_relative_eq!(v, 2.0 / 3.0, epsilon = 1e-10);
    }
}
