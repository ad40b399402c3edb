//! Scalar special functions used by the closed-form solution families.
//!
//! Everything here is pure and allocation-light. Polynomials are evaluated by
//! their three-term recurrences; the explicit series forms only appear in the
//! tests as oracles.
//!
//! Airy functions accept complex arguments because the Airy-type family is
//! used with a complex separation constant. The evaluation strategy is:
//!
//! * `|z| <= 2`: Maclaurin series around the origin,
//! * `|z| >= 10`: Poincaré asymptotic expansions (principal form for
//!   `|arg z| <= 2π/3`, oscillatory form for `-z` otherwise),
//! * in between: Taylor-series continuation of `Q'' = zQ` along a ray,
//!   always stepping in the direction in which `Ai` is not recessive.

use std::f64::consts::{FRAC_PI_3, FRAC_PI_4, PI};
use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Probabilists' Hermite polynomial `He_n(z)` and its derivative `n·He_{n-1}(z)`.
pub fn hermite_he(n: usize, z: f64) -> (f64, f64) {
    let seq = hermite_he_seq(n, z);
    let d = if n == 0 { 0.0 } else { n as f64 * seq[n - 1] };
    (seq[n], d)
}

/// `[He_0(z), ..., He_n(z)]` by `He_{k+1} = z·He_k − k·He_{k−1}`.
pub fn hermite_he_seq(n: usize, z: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    out.push(1.0);
    if n >= 1 {
        out.push(z);
    }
    for k in 1..n {
        let next = z * out[k] - k as f64 * out[k - 1];
        out.push(next);
    }
    out
}

/// Associated Laguerre polynomial `L_p^α(z)` for real (possibly negative) α.
/// Negative degree is treated as the zero polynomial, which is what the
/// derivative identity `d/dz L_p^α = −L_{p−1}^{α+1}` needs at `p = 0`.
pub fn laguerre_value(p: i64, alpha: f64, z: f64) -> f64 {
    if p < 0 {
        return 0.0;
    }
    let mut prev = 1.0;
    if p == 0 {
        return prev;
    }
    let mut cur = 1.0 + alpha - z;
    for k in 1..p {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + alpha - z) * cur - (kf + alpha) * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// `L_p^α(z)` and its z-derivative.
pub fn laguerre(p: usize, alpha: f64, z: f64) -> (f64, f64) {
    let p = p as i64;
    (laguerre_value(p, alpha, z), -laguerre_value(p - 1, alpha + 1.0, z))
}

/// `k`-th z-derivative of `L_p^α`, via `(−1)^k L_{p−k}^{α+k}`.
pub fn laguerre_deriv(p: usize, alpha: f64, z: f64, k: usize) -> f64 {
    let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
    sign * laguerre_value(p as i64 - k as i64, alpha + k as f64, z)
}

// Ai(0) and Ai'(0).
const AI0: f64 = 0.355_028_053_887_817_24;
const AIP0: f64 = -0.258_819_403_792_806_8;
const MACLAURIN_RADIUS: f64 = 2.0;
const ASYMPTOTIC_RADIUS: f64 = 10.0;
const CONTINUATION_STEP: f64 = 1.0;

/// Advance `(Q, Q')` of a solution of `Q'' = zQ` from `z0` to `z0 + h` with a
/// Taylor series whose coefficients follow from the ODE.
fn airy_taylor_step(z0: Complex64, q: Complex64, dq: Complex64, h: Complex64) -> (Complex64, Complex64) {
    // a_{n+2} (n+1)(n+2) = z0 a_n + a_{n-1}
    let mut a_prev2 = Complex64::new(0.0, 0.0); // a_{n-1}
    let mut a_prev = q; // a_n, n = 0
    let mut a_cur = dq; // a_{n+1}
    let mut hp = Complex64::new(1.0, 0.0);
    let mut value = q;
    let mut deriv = Complex64::new(0.0, 0.0);
    let mut small = 0;
    for n in 1..400usize {
        // a_cur is a_n
        let term_d = a_cur * hp * n as f64; // n a_n h^{n-1}
        hp *= h;
        let term_v = a_cur * hp;
        value += term_v;
        deriv += term_d;
        let scale = value.l1_norm() + deriv.l1_norm() + 1e-300;
        if term_v.l1_norm() + term_d.l1_norm() < 1e-18 * scale {
            small += 1;
            if small >= 3 {
                break;
            }
        } else {
            small = 0;
        }
        // a_{n+1} from a_{n-1} and a_{n-2}: (n)(n+1) a_{n+1} = z0 a_{n-1} + a_{n-2}
        let next = (z0 * a_prev + a_prev2) / ((n * (n + 1)) as f64);
        a_prev2 = a_prev;
        a_prev = a_cur;
        a_cur = next;
    }
    (value, deriv)
}

fn asymptotic_table() -> &'static (Vec<f64>, Vec<f64>) {
    static TABLE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    TABLE.get_or_init(|| asymptotic_coeffs(ASYMPTOTIC_TERMS))
}

fn asymptotic_coeffs(kmax: usize) -> (Vec<f64>, Vec<f64>) {
    let mut u = vec![1.0];
    let mut v = vec![1.0];
    for k in 1..=kmax {
        let kf = k as f64;
        let uk = u[k - 1] * (6.0 * kf - 5.0) * (6.0 * kf - 3.0) * (6.0 * kf - 1.0)
            / ((2.0 * kf - 1.0) * 216.0 * kf);
        u.push(uk);
        v.push(-(6.0 * kf + 1.0) / (6.0 * kf - 1.0) * uk);
    }
    (u, v)
}

const ASYMPTOTIC_TERMS: usize = 40;

fn airy_asymptotic_principal(z: Complex64) -> (Complex64, Complex64) {
    let (shift, a, da) = airy_asymptotic_principal_scaled(z);
    let e = shift.exp();
    (a * e, da * e)
}

/// (s, e^{−s}Ai, e^{−s}Ai') with s = −Re ζ.
fn airy_asymptotic_principal_scaled(z: Complex64) -> (f64, Complex64, Complex64) {
    let (u, v) = asymptotic_table();
    let zeta = z * z.sqrt() * (2.0 / 3.0);
    let inv = 1.0 / zeta;
    let mut su = Complex64::new(0.0, 0.0);
    let mut sv = Complex64::new(0.0, 0.0);
    let mut p = Complex64::new(1.0, 0.0);
    let mut last = f64::INFINITY;
    for k in 0..=ASYMPTOTIC_TERMS {
        let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
        let tu = p * u[k] * sign;
        if tu.norm() > last {
            break;
        }
        last = tu.norm();
        su += tu;
        sv += p * v[k] * sign;
        if last < 1e-18 * su.norm() {
            break;
        }
        p *= inv;
    }
    let quarter = z.powf(0.25);
    let e = Complex64::from_polar(1.0, -zeta.im) / (2.0 * PI.sqrt());
    (-zeta.re, e / quarter * su, -e * quarter * sv)
}

fn airy_asymptotic_oscillatory(z: Complex64) -> (Complex64, Complex64) {
    // z = -w with |arg w| < π/3 here.
    let (u, v) = asymptotic_table();
    let w = -z;
    let zeta = w * w.sqrt() * (2.0 / 3.0);
    let inv = 1.0 / zeta;
    let mut pu = Complex64::new(0.0, 0.0);
    let mut qu = Complex64::new(0.0, 0.0);
    let mut pv = Complex64::new(0.0, 0.0);
    let mut qv = Complex64::new(0.0, 0.0);
    let mut p = Complex64::new(1.0, 0.0);
    let mut last = f64::INFINITY;
    for k in 0..=ASYMPTOTIC_TERMS {
        let tu = p * u[k];
        if tu.norm() > last {
            break;
        }
        last = tu.norm();
        // (-1)^{floor(k/2)} with even k feeding P and odd k feeding Q.
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            pu += tu * sign;
            pv += p * v[k] * sign;
        } else {
            qu += tu * sign;
            qv += p * v[k] * sign;
        }
        if last < 1e-18 * (pu.norm() + qu.norm()) {
            break;
        }
        p *= inv;
    }
    let arg = zeta - FRAC_PI_4;
    let (c, s) = (arg.cos(), arg.sin());
    let quarter = w.powf(0.25);
    let rp = 1.0 / PI.sqrt();
    let ai = (c * pu + s * qu) * rp / quarter;
    let aip = (s * pv - c * qv) * rp * quarter;
    (ai, aip)
}

fn airy_far(z: Complex64) -> (Complex64, Complex64) {
    if z.arg().abs() <= 2.0 * FRAC_PI_3 {
        airy_asymptotic_principal(z)
    } else {
        airy_asymptotic_oscillatory(z)
    }
}

fn continue_along_ray(from: Complex64, q: Complex64, dq: Complex64, to: Complex64) -> (Complex64, Complex64) {
    let dist = (to - from).norm();
    let n = (dist / CONTINUATION_STEP).ceil().max(1.0) as usize;
    let h = (to - from) / n as f64;
    let (mut q, mut dq) = (q, dq);
    let mut z = from;
    for _ in 0..n {
        let (nq, ndq) = airy_taylor_step(z, q, dq, h);
        q = nq;
        dq = ndq;
        z += h;
    }
    (q, dq)
}

/// `(Ai(z), Ai'(z))` for complex `z`.
pub fn airy_ai_complex(z: Complex64) -> (Complex64, Complex64) {
    let r = z.norm();
    if r <= MACLAURIN_RADIUS {
        return airy_taylor_step(
            Complex64::new(0.0, 0.0),
            Complex64::new(AI0, 0.0),
            Complex64::new(AIP0, 0.0),
            z,
        );
    }
    if r >= ASYMPTOTIC_RADIUS {
        return airy_far(z);
    }
    let dir = z / r;
    if z.arg().abs() <= FRAC_PI_3 {
        // Ai is recessive outward: start far out and integrate inward.
        let start = dir * ASYMPTOTIC_RADIUS;
        let (q, dq) = airy_far(start);
        continue_along_ray(start, q, dq, z)
    } else {
        let start = dir * MACLAURIN_RADIUS;
        let (q, dq) = airy_taylor_step(
            Complex64::new(0.0, 0.0),
            Complex64::new(AI0, 0.0),
            Complex64::new(AIP0, 0.0),
            start,
        );
        continue_along_ray(start, q, dq, z)
    }
}

/// `(Bi(z), Bi'(z))` for complex `z` from the rotation identity
/// `Bi(z) = e^{iπ/6} Ai(z e^{2iπ/3}) + e^{−iπ/6} Ai(z e^{−2iπ/3})`.
pub fn airy_bi_complex(z: Complex64) -> (Complex64, Complex64) {
    let rot = Complex64::from_polar(1.0, 2.0 * FRAC_PI_3);
    let (a1, d1) = airy_ai_complex(z * rot);
    let (a2, d2) = airy_ai_complex(z * rot.conj());
    let p6 = Complex64::from_polar(1.0, PI / 6.0);
    let bi = p6 * a1 + p6.conj() * a2;
    let bip = p6 * rot * d1 + (p6 * rot).conj() * d2;
    (bi, bip)
}

/// (s, e^{−s}Ai(z), e^{−s}Ai'(z)) with a real shift s that keeps the scaled
/// values representable where Ai itself under- or overflows.
pub fn airy_ai_scaled(z: Complex64) -> (f64, Complex64, Complex64) {
    if z.norm() >= ASYMPTOTIC_RADIUS && z.arg().abs() <= 2.0 * FRAC_PI_3 {
        airy_asymptotic_principal_scaled(z)
    } else {
        let (a, da) = airy_ai_complex(z);
        (0.0, a, da)
    }
}

/// `Q = c1·Ai + c2·Bi` and `Q'` as (s, e^{−s}Q, e^{−s}Q') with a real shift s.
pub fn airy_combination_scaled(z: Complex64, c1: f64, c2: f64) -> Result<(f64, Complex64, Complex64)> {
    let rot = Complex64::from_polar(1.0, 2.0 * FRAC_PI_3);
    let p6 = Complex64::from_polar(1.0, PI / 6.0);
    // (shift, coefficient of the value, coefficient of the derivative, Ai, Ai')
    let mut parts: Vec<(f64, Complex64, Complex64, Complex64, Complex64)> = Vec::new();
    if c1 != 0.0 {
        let (s, a, da) = airy_ai_scaled(z);
        parts.push((s, Complex64::new(c1, 0.0), Complex64::new(c1, 0.0), a, da));
    }
    if c2 != 0.0 {
        let (s1, a1, d1) = airy_ai_scaled(z * rot);
        let (s2, a2, d2) = airy_ai_scaled(z * rot.conj());
        parts.push((s1, p6 * c2, p6 * rot * c2, a1, d1));
        parts.push((s2, p6.conj() * c2, (p6 * rot).conj() * c2, a2, d2));
    }
    let shift = parts.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let (mut q, mut dq) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    for (s, cv, cd, a, da) in parts {
        let e = (s - shift).exp();
        q += cv * a * e;
        dq += cd * da * e;
    }
    if !(q.re.is_finite() && q.im.is_finite() && dq.re.is_finite() && dq.im.is_finite() && shift.is_finite()) {
        return Err(Error::Overflow(format!("Airy combination not representable at z = {z}")));
    }
    Ok((shift, q, dq))
}

/// General Airy solution `Q = c1·Ai + c2·Bi` and `Q'` at complex argument.
pub fn airy_combination(z: Complex64, c1: f64, c2: f64) -> Result<(Complex64, Complex64)> {
    let (mut q, mut dq) = (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
    if c1 != 0.0 {
        let (a, da) = airy_ai_complex(z);
        q += a * c1;
        dq += da * c1;
    }
    if c2 != 0.0 {
        let (b, db) = airy_bi_complex(z);
        q += b * c2;
        dq += db * c2;
    }
    if !(q.re.is_finite() && q.im.is_finite() && dq.re.is_finite() && dq.im.is_finite()) {
        return Err(Error::Overflow(format!("Airy combination not representable at z = {z}")));
    }
    Ok((q, dq))
}

/// Real Airy combination `Q(z) = c1·Ai(z) + c2·Bi(z)` and `Q'(z)`.
pub fn airy_general(z: f64, c1: f64, c2: f64) -> Result<(f64, f64)> {
    let (q, dq) = airy_combination(Complex64::new(z, 0.0), c1, c2)?;
    Ok((q.re, dq.re))
}

const ERF_SERIES_LIMIT: f64 = 3.0;

/// Error function.
pub fn erf(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    let a = z.abs();
    let v = if a <= ERF_SERIES_LIMIT {
        erf_series(a)
    } else {
        1.0 - erfc_continued_fraction(a)
    };
    v.copysign(z)
}

/// Complementary error function for `z >= 0`, accurate in the tail.
pub fn erfc(z: f64) -> f64 {
    if z < ERF_SERIES_LIMIT {
        1.0 - erf(z)
    } else {
        erfc_continued_fraction(z)
    }
}

fn erf_series(a: f64) -> f64 {
    // (2/√π) e^{-a²} Σ 2^n a^{2n+1} / (2n+1)!!, all terms positive
    let a2 = a * a;
    let mut term = a;
    let mut sum = a;
    for n in 1..300 {
        term *= 2.0 * a2 / (2 * n + 1) as f64;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum * (-a2).exp() * 2.0 / PI.sqrt()
}

fn erfc_continued_fraction(a: f64) -> f64 {
    // erfc(a) = e^{-a²}/√π · 1/(a + (1/2)/(a + 1/(a + (3/2)/(a + ...)))), modified Lentz.
    let tiny = 1e-300;
    let mut f = a;
    let mut c = a;
    let mut d = 0.0;
    for n in 1..500 {
        let an = n as f64 / 2.0;
        d = a + an * d;
        if d.abs() < tiny {
            d = tiny;
        }
        c = a + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-a * a).exp() / (PI.sqrt() * f)
}

// Lanczos approximation, g = 7, n = 9.
const LANCZOS_G: f64 = 7.0;
const LANCZOS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(x)` for `x > 0`.
pub fn ln_gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("ln_gamma requires x > 0, got {x}")));
    }
    if x < 0.5 {
        // Reflection: Γ(x)Γ(1−x) = π / sin(πx)
        return Ok((PI / (PI * x).sin()).ln() - ln_gamma(1.0 - x)?);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS[0];
    for (i, c) in LANCZOS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    Ok(0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + acc.ln())
}

/// `Γ(a)/Γ(b)` evaluated in log space.
pub fn gamma_ratio(a: f64, b: f64) -> Result<f64> {
    if !(a > 0.0 && b > 0.0) {
        return Err(Error::Domain(format!(
            "gamma_ratio requires positive arguments, got ({a}, {b})"
        )));
    }
    Ok((ln_gamma(a)? - ln_gamma(b)?).exp())
}

/// `J_n(z) = Σ_{k=0}^{n} Γ(n+1)/Γ(k+1) · He_k(z)²`.
pub fn j_poly(n: usize, z: f64) -> f64 {
    j_poly_derivs(n, z).0
}

/// `(J_n, J_n', J_n'')` with respect to `z`.
pub fn j_poly_derivs(n: usize, z: f64) -> (f64, f64, f64) {
    let he = hermite_he_seq(n, z);
    let (mut j, mut dj, mut ddj) = (0.0, 0.0, 0.0);
    // weight n!/k!, accumulated from k = n downward
    let mut weight = 1.0;
    for k in (0..=n).rev() {
        let h = he[k];
        let dh = if k == 0 { 0.0 } else { k as f64 * he[k - 1] };
        // He_k'' = z He_k' − k He_k
        let ddh = z * dh - k as f64 * h;
        j += weight * h * h;
        dj += weight * 2.0 * h * dh;
        ddj += weight * 2.0 * (dh * dh + h * ddh);
        weight *= k as f64;
    }
    (j, dj, ddj)
}
