//! The classical envelope ε(t) solving ε̈ + 4ω²(t)ε = 0 and the real time
//! factors built from it.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Time-dependent frequency ω(t).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum FrequencyProfile {
    Constant {
        omega: f64,
    },
    /// ω(t) = Σ coeffs[j] t^j
    Polynomial {
        coeffs: Vec<f64>,
    },
    /// ω(t) = a + b cos(c t)
    Sinusoidal {
        a: f64,
        b: f64,
        c: f64,
    },
    /// Piecewise interpolation through `(t, ω)` knots, held constant beyond
    /// the end knots. `order` is 1 (linear) or 3 (natural cubic spline).
    Tabulated {
        knots: Vec<(f64, f64)>,
        #[serde(default = "default_order")]
        order: u8,
    },
}

fn default_order() -> u8 {
    3
}

impl FrequencyProfile {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("frequency profile: {m}")));
        match self {
            FrequencyProfile::Constant { omega } if !omega.is_finite() => bad("omega must be finite"),
            FrequencyProfile::Polynomial { coeffs } if coeffs.is_empty() => {
                bad("polynomial needs at least one coefficient")
            }
            FrequencyProfile::Polynomial { coeffs } if coeffs.iter().any(|c| !c.is_finite()) => {
                bad("polynomial coefficients must be finite")
            }
            FrequencyProfile::Sinusoidal { a, b, c }
                if !(a.is_finite() && b.is_finite() && c.is_finite()) =>
            {
                bad("sinusoidal parameters must be finite")
            }
            FrequencyProfile::Tabulated { knots, order } => {
                if knots.len() < 2 {
                    return bad("tabulated profile needs at least two knots");
                }
                if *order != 1 && *order != 3 {
                    return bad("tabulated interpolation order must be 1 or 3");
                }
                if knots.windows(2).any(|w| !(w[1].0 > w[0].0)) {
                    return bad("tabulated knots must be strictly increasing in t");
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// (ω(t), ω̇(t))
    pub fn eval(&self, t: f64) -> (f64, f64) {
        match self {
            FrequencyProfile::Constant { omega } => (*omega, 0.0),
            FrequencyProfile::Polynomial { coeffs } => {
                let mut v = 0.0;
                let mut d = 0.0;
                for &c in coeffs.iter().rev() {
                    d = d * t + v;
                    v = v * t + c;
                }
                (v, d)
            }
            FrequencyProfile::Sinusoidal { a, b, c } => {
                (a + b * (c * t).cos(), -b * c * (c * t).sin())
            }
            FrequencyProfile::Tabulated { knots, order } => tabulated(knots, *order, t),
        }
    }

    pub fn omega(&self, t: f64) -> f64 {
        self.eval(t).0
    }
}

fn tabulated(knots: &[(f64, f64)], order: u8, t: f64) -> (f64, f64) {
    let n = knots.len();
    if t <= knots[0].0 {
        return (knots[0].1, 0.0);
    }
    if t >= knots[n - 1].0 {
        return (knots[n - 1].1, 0.0);
    }
    let i = knots.partition_point(|k| k.0 <= t) - 1;
    let (t0, y0) = knots[i];
    let (t1, y1) = knots[i + 1];
    let h = t1 - t0;
    if order == 1 {
        let s = (y1 - y0) / h;
        return (y0 + s * (t - t0), s);
    }
    let m = spline_moments(knots);
    let a = (t1 - t) / h;
    let b = (t - t0) / h;
    let v = a * y0 + b * y1 + ((a * a * a - a) * m[i] + (b * b * b - b) * m[i + 1]) * h * h / 6.0;
    let d = (y1 - y0) / h - (3.0 * a * a - 1.0) / 6.0 * h * m[i] + (3.0 * b * b - 1.0) / 6.0 * h * m[i + 1];
    (v, d)
}

/// Second derivatives of the natural cubic spline at the knots.
fn spline_moments(knots: &[(f64, f64)]) -> Vec<f64> {
    let n = knots.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    let mut diag = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut sup = vec![0.0; n];
    for i in 1..n - 1 {
        let h0 = knots[i].0 - knots[i - 1].0;
        let h1 = knots[i + 1].0 - knots[i].0;
        diag[i] = (h0 + h1) / 3.0;
        sup[i] = h1 / 6.0;
        rhs[i] = (knots[i + 1].1 - knots[i].1) / h1 - (knots[i].1 - knots[i - 1].1) / h0;
        if i > 1 {
            let w = (h0 / 6.0) / diag[i - 1];
            diag[i] -= w * sup[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
    }
    for i in (1..n - 1).rev() {
        m[i] = (rhs[i] - sup[i] * m[i + 1]) / diag[i];
    }
    m
}

#[derive(Clone, Copy, Debug)]
struct Node {
    t: f64,
    eps: Complex64,
    deps: Complex64,
    theta: f64,
}

/// Complex classical trajectory with cached dense output.
///
/// The cache covers a closed interval around `t0`; evaluation outside it is
/// an error and [`Envelope::extend`] grows it.
#[derive(Clone, Debug)]
pub struct Envelope {
    profile: FrequencyProfile,
    t0: f64,
    eps0: Complex64,
    deps0: Complex64,
    tolerance: f64,
    nodes: Vec<Node>,
}

pub const DEFAULT_TOLERANCE: f64 = 1e-13;

impl Envelope {
    /// Integrate over `[lo, hi]` (which must contain `t0`).
    pub fn solve(
        profile: FrequencyProfile,
        t0: f64,
        eps0: Complex64,
        deps0: Complex64,
        tolerance: f64,
        lo: f64,
        hi: f64,
    ) -> Result<Self> {
        profile.validate()?;
        if !(tolerance > 0.0 && tolerance < 1e-3) {
            return Err(Error::Config(format!(
                "envelope tolerance {tolerance} must lie in (0, 1e-3)"
            )));
        }
        if !(lo <= t0 && t0 <= hi) {
            return Err(Error::Config(format!(
                "envelope interval [{lo}, {hi}] must contain t0 = {t0}"
            )));
        }
        let mut env = Envelope {
            profile,
            t0,
            eps0,
            deps0,
            tolerance,
            nodes: vec![Node {
                t: t0,
                eps: eps0,
                deps: deps0,
                theta: eps0.arg(),
            }],
        };
        env.extend(lo, hi)?;
        Ok(env)
    }

    /// Initial data with Im(ε̄ε̇) = 1/4, the normalization every family's
    /// closed form assumes: ε0 = e^{iφ}/√(8ω0), ε̇0 = 2iω0·ε0 (ε0 = e^{iφ}/2,
    /// ε̇0 = iε0 when ω0 ≤ 0).
    pub fn normalized_initial_data(profile: &FrequencyProfile, t0: f64, phase: f64) -> (Complex64, Complex64) {
        let w0 = profile.omega(t0);
        let rot = Complex64::from_polar(1.0, phase);
        if w0 > 0.0 {
            let e = rot / (8.0 * w0).sqrt();
            (e, Complex64::new(0.0, 2.0 * w0) * e)
        } else {
            let e = rot * 0.5;
            (e, Complex64::i() * e)
        }
    }

    pub fn normalized(
        profile: FrequencyProfile,
        t0: f64,
        phase: f64,
        tolerance: f64,
        lo: f64,
        hi: f64,
    ) -> Result<Self> {
        let (e, d) = Self::normalized_initial_data(&profile, t0, phase);
        Self::solve(profile, t0, e, d, tolerance, lo, hi)
    }

    pub fn profile(&self) -> &FrequencyProfile {
        &self.profile
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn initial_data(&self) -> (Complex64, Complex64) {
        (self.eps0, self.deps0)
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn interval(&self) -> (f64, f64) {
        (self.nodes[0].t, self.nodes[self.nodes.len() - 1].t)
    }

    /// Grow the cached interval to cover `[lo, hi]`.
    pub fn extend(&mut self, lo: f64, hi: f64) -> Result<()> {
        let (cur_lo, cur_hi) = self.interval();
        if hi > cur_hi {
            let start = *self.nodes.last().expect("nonempty");
            let fresh = self.integrate(start, hi)?;
            self.nodes.extend(fresh);
        }
        if lo < cur_lo {
            let start = self.nodes[0];
            let mut fresh = self.integrate(start, lo)?;
            fresh.reverse();
            fresh.append(&mut self.nodes);
            self.nodes = fresh;
        }
        Ok(())
    }

    fn rhs(&self, t: f64, y: &[f64; 4]) -> [f64; 4] {
        let w = self.profile.omega(t);
        let k = -4.0 * w * w;
        [y[2], y[3], k * y[0], k * y[1]]
    }

    /// Dormand–Prince 5(4) from `start` to `end` (either direction).
    fn integrate(&self, start: Node, end: f64) -> Result<Vec<Node>> {
        const C: [f64; 7] = [0.0, 0.2, 0.3, 0.8, 8.0 / 9.0, 1.0, 1.0];
        const A: [[f64; 6]; 7] = [
            [0.0; 6],
            [0.2, 0.0, 0.0, 0.0, 0.0, 0.0],
            [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
            [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
            [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
            [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
            [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
        ];
        const E: [f64; 7] = [
            71.0 / 57600.0,
            0.0,
            -71.0 / 16695.0,
            71.0 / 1920.0,
            -17253.0 / 339200.0,
            22.0 / 525.0,
            -1.0 / 40.0,
        ];
        let span = end - start.t;
        let dir = span.signum();
        let rtol = self.tolerance;
        let atol = self.tolerance;
        let mut out = Vec::new();
        let mut t = start.t;
        let mut y = [start.eps.re, start.eps.im, start.deps.re, start.deps.im];
        let mut theta = start.theta;
        let mut arg_prev = start.eps.arg();
        let (w0, _) = self.profile.eval(t);
        let mut h = dir * (0.01 / (1.0 + w0.abs())).min(span.abs());
        let mut k1 = self.rhs(t, &y);
        let mut steps = 0usize;
        while dir * (end - t) > 0.0 {
            steps += 1;
            if steps > 10_000_000 {
                return Err(Error::Integration {
                    t,
                    reason: "step budget exhausted".into(),
                });
            }
            if dir * (t + h - end) > 0.0 {
                h = end - t;
            }
            let mut k = [[0.0; 4]; 7];
            k[0] = k1;
            for s in 1..7 {
                let mut ys = y;
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = A[s][j];
                    if a != 0.0 {
                        for i in 0..4 {
                            ys[i] += h * a * kj[i];
                        }
                    }
                }
                k[s] = self.rhs(t + C[s] * h, &ys);
            }
            let mut ynew = y;
            for (j, kj) in k.iter().enumerate().take(6) {
                for i in 0..4 {
                    ynew[i] += h * A[6][j] * kj[i];
                }
            }
            let mut err = 0.0;
            for i in 0..4 {
                let mut e = 0.0;
                for j in 0..7 {
                    e += E[j] * k[j][i];
                }
                let sc = atol + rtol * y[i].abs().max(ynew[i].abs());
                err += (h * e / sc).powi(2);
            }
            let err = (err / 4.0).sqrt();
            if !err.is_finite() {
                return Err(Error::Integration {
                    t,
                    reason: "non-finite state".into(),
                });
            }
            if err <= 1.0 {
                t += h;
                y = ynew;
                k1 = k[6];
                let eps = Complex64::new(y[0], y[1]);
                let arg = eps.arg();
                theta += wrap(arg - arg_prev);
                arg_prev = arg;
                out.push(Node {
                    t,
                    eps,
                    deps: Complex64::new(y[2], y[3]),
                    theta,
                });
            }
            let fac = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            h *= fac;
            if h.abs() < 1e-14 * (1.0 + t.abs()) {
                return Err(Error::Integration {
                    t,
                    reason: "step size underflow".into(),
                });
            }
        }
        Ok(out)
    }

    fn locate(&self, t: f64) -> Result<usize> {
        let (lo, hi) = self.interval();
        if !(t >= lo && t <= hi) {
            return Err(Error::OutsideInterval { t, lo, hi });
        }
        let i = self.nodes.partition_point(|n| n.t <= t);
        Ok(i.clamp(1, self.nodes.len() - 1) - 1)
    }

    /// Second and third time derivatives of ε from the equation of motion.
    fn higher(&self, t: f64, eps: Complex64, deps: Complex64) -> (Complex64, Complex64) {
        let (w, wd) = self.profile.eval(t);
        let dd = -4.0 * w * w * eps;
        let ddd = -4.0 * (2.0 * w * wd * eps + w * w * deps);
        (dd, ddd)
    }

    /// (ε(t), ε̇(t))
    pub fn eval(&self, t: f64) -> Result<(Complex64, Complex64)> {
        if self.nodes.len() == 1 {
            let (lo, hi) = self.interval();
            if t == self.t0 {
                return Ok((self.eps0, self.deps0));
            }
            return Err(Error::OutsideInterval { t, lo, hi });
        }
        let i = self.locate(t)?;
        let (a, b) = (self.nodes[i], self.nodes[i + 1]);
        if t == a.t {
            return Ok((a.eps, a.deps));
        }
        let h = b.t - a.t;
        let s = (t - a.t) / h;
        let (dda, ddda) = self.higher(a.t, a.eps, a.deps);
        let (ddb, dddb) = self.higher(b.t, b.eps, b.deps);
        let eps = quintic(s, h, [a.eps, a.deps, dda], [b.eps, b.deps, ddb]);
        let deps = quintic(s, h, [a.deps, dda, ddda], [b.deps, ddb, dddb]);
        Ok((eps, deps))
    }

    /// ε·conj(ε̇) − ε̇·conj(ε)
    pub fn wronskian(&self, t: f64) -> Result<Complex64> {
        let (e, d) = self.eval(t)?;
        Ok(e * d.conj() - d * e.conj())
    }

    /// γ₁ = (ε + ε̄)/2
    pub fn gamma_half_sum(&self, t: f64) -> Result<f64> {
        Ok(self.eval(t)?.0.re)
    }

    /// γ₂ = ε + ε̄
    pub fn gamma_sum(&self, t: f64) -> Result<f64> {
        Ok(2.0 * self.eval(t)?.0.re)
    }

    /// γ₃ = εε̄; refuses data with vanishing Wronskian, where ε may vanish.
    pub fn gamma_prod(&self, t: f64) -> Result<f64> {
        let (e, d) = self.eval(t)?;
        let w = e * d.conj() - d * e.conj();
        if w.norm() <= 1e-14 * (e.norm_sqr() + d.norm_sqr()) {
            return Err(Error::Domain(
                "γ = εε̄ requested for initial data with zero Wronskian".into(),
            ));
        }
        Ok(e.norm_sqr())
    }

    /// δ = −i(ε − ε̄)
    pub fn delta_of(&self, t: f64) -> Result<f64> {
        Ok(2.0 * self.eval(t)?.0.im)
    }

    /// Continuous branch of arg ε(t), anchored at arg ε(t0) ∈ (−π, π].
    pub fn phase(&self, t: f64) -> Result<f64> {
        let (e, _) = self.eval(t)?;
        if self.nodes.len() == 1 {
            return Ok(self.nodes[0].theta);
        }
        let i = self.locate(t)?;
        let a = self.nodes[i];
        Ok(a.theta + wrap(e.arg() - a.eps.arg()))
    }

    /// ω(t)
    pub fn omega(&self, t: f64) -> f64 {
        self.profile.omega(t)
    }

    /// Number of accepted integrator steps in the cache.
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
}

fn wrap(d: f64) -> f64 {
    use std::f64::consts::PI;
    let mut d = d;
    while d > PI {
        d -= 2.0 * PI;
    }
    while d <= -PI {
        d += 2.0 * PI;
    }
    d
}

/// Quintic Hermite interpolation on [0, h] at s = τ/h from value, first and
/// second derivatives at both ends.
fn quintic(s: f64, h: f64, a: [Complex64; 3], b: [Complex64; 3]) -> Complex64 {
    let s2 = s * s;
    let s3 = s2 * s;
    let s4 = s3 * s;
    let s5 = s4 * s;
    let h00 = 1.0 - 10.0 * s3 + 15.0 * s4 - 6.0 * s5;
    let h10 = s - 6.0 * s3 + 8.0 * s4 - 3.0 * s5;
    let h20 = 0.5 * (s2 - 3.0 * s3 + 3.0 * s4 - s5);
    let h01 = 10.0 * s3 - 15.0 * s4 + 6.0 * s5;
    let h11 = -4.0 * s3 + 7.0 * s4 - 3.0 * s5;
    let h21 = 0.5 * (s3 - 2.0 * s4 + s5);
    a[0] * h00 + a[1] * (h * h10) + a[2] * (h * h * h20) + b[0] * h01 + b[1] * (h * h11) + b[2] * (h * h * h21)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn free_particle_is_linear() {
        let env = Envelope::solve(
            FrequencyProfile::Constant { omega: 0.0 },
            0.0,
            c(1.0, 0.0),
            c(0.0, 1.0),
            DEFAULT_TOLERANCE,
            0.0,
            2.0,
        )
        .unwrap();
        let (e, d) = env.eval(2.0).unwrap();
        assert!((e - c(1.0, 2.0)).norm() < 1e-12);
        assert!((d - c(0.0, 1.0)).norm() < 1e-12);
        assert_relative_eq!(env.gamma_prod(2.0).unwrap(), 5.0, epsilon = 1e-11);
        assert_relative_eq!(env.delta_of(2.0).unwrap(), 4.0, epsilon = 1e-11);
    }

    #[test]
    fn constant_frequency_closed_form() {
        let env = Envelope::solve(
            FrequencyProfile::Constant { omega: 1.0 },
            0.0,
            c(1.0, 0.0),
            c(0.0, 2.0),
            DEFAULT_TOLERANCE,
            -1.0,
            5.0,
        )
        .unwrap();
        for &t in &[0.5, 1.0, 5.0, 0.123, -0.7] {
            let (e, d) = env.eval(t).unwrap();
            let want = Complex64::new(0.0, 2.0 * t).exp();
            assert!((e - want).norm() < 1e-9, "t = {t}");
            assert!((d - c(0.0, 2.0) * want).norm() < 1e-9);
            assert!((env.wronskian(t).unwrap() - c(0.0, -4.0)).norm() < 1e-9);
            assert_relative_eq!(env.gamma_half_sum(t).unwrap(), (2.0 * t).cos(), epsilon = 1e-9);
            assert_relative_eq!(env.gamma_sum(t).unwrap(), 2.0 * (2.0 * t).cos(), epsilon = 1e-9);
            assert_relative_eq!(env.delta_of(t).unwrap(), 2.0 * (2.0 * t).sin(), epsilon = 1e-9);
            assert_relative_eq!(env.gamma_prod(t).unwrap(), 1.0, epsilon = 1e-9);
            assert_relative_eq!(env.phase(t).unwrap(), 2.0 * t, epsilon = 1e-9);
        }
    }

    #[test]
    fn real_data_has_zero_wronskian() {
        let env = Envelope::solve(
            FrequencyProfile::Sinusoidal { a: 1.0, b: 0.3, c: 2.0 },
            0.0,
            c(1.0, 0.0),
            c(0.5, 0.0),
            DEFAULT_TOLERANCE,
            0.0,
            3.0,
        )
        .unwrap();
        assert_eq!(env.wronskian(2.0).unwrap(), c(0.0, 0.0));
        assert!(matches!(env.gamma_prod(2.0), Err(Error::Domain(_))));
    }

    #[test]
    fn outside_interval_is_reported() {
        let mut env = Envelope::normalized(FrequencyProfile::Constant { omega: 0.5 }, 0.0, 0.0, 1e-12, 0.0, 1.0)
            .unwrap();
        assert!(matches!(env.eval(1.5), Err(Error::OutsideInterval { .. })));
        env.extend(-1.0, 2.0).unwrap();
        assert!(env.eval(1.5).is_ok());
        assert!(env.eval(-0.9).is_ok());
    }

    #[test]
    fn normalized_data_has_unit_quarter_wronskian() {
        for profile in [
            FrequencyProfile::Constant { omega: 0.7 },
            FrequencyProfile::Constant { omega: 0.0 },
            FrequencyProfile::Sinusoidal { a: 0.5, b: 0.1, c: 1.0 },
        ] {
            let env = Envelope::normalized(profile, 0.0, 0.4, 1e-12, 0.0, 2.0).unwrap();
            assert!((env.wronskian(1.3).unwrap() - c(0.0, -0.5)).norm() < 1e-11);
        }
    }

    #[test]
    fn tabulated_spline_reproduces_line() {
        let p = FrequencyProfile::Tabulated {
            knots: vec![(0.0, 1.0), (1.0, 2.0), (2.5, 3.5), (4.0, 5.0)],
            order: 3,
        };
        p.validate().unwrap();
        let (v, d) = p.eval(1.7);
        assert_relative_eq!(v, 2.7, epsilon = 1e-14);
        assert_relative_eq!(d, 1.0, epsilon = 1e-14);
        let bad = FrequencyProfile::Tabulated {
            knots: vec![(0.0, 1.0), (0.0, 2.0)],
            order: 1,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn wronskian_drift_over_fifty_units() {
        for profile in [
            FrequencyProfile::Constant { omega: 1.0 },
            FrequencyProfile::Constant { omega: 0.0 },
            FrequencyProfile::Sinusoidal { a: 1.0, b: 0.4, c: 1.3 },
        ] {
            let env = Envelope::normalized(profile, 0.0, 0.2, DEFAULT_TOLERANCE, 0.0, 50.0).unwrap();
            let w0 = env.wronskian(0.0).unwrap();
            let drift = (0..=500)
                .map(|j| (env.wronskian(0.1 * j as f64).unwrap() - w0).norm() / w0.norm())
                .fold(0.0, f64::max);
            assert!(drift < 1e-9, "drift {drift:e}");
        }
    }

    #[test]
    fn polynomial_profile_and_derivative() {
        let p = FrequencyProfile::Polynomial { coeffs: vec![1.0, 2.0, 3.0] };
        let (v, d) = p.eval(2.0);
        assert_eq!(v, 17.0);
        assert_eq!(d, 14.0);
    }
}
