//! Closed-form transformation functions, discrete bases and printed
//! potentials for the time-dependent harmonic and singular oscillators.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::specfun;
use crate::trajectory::Envelope;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

/// A wavefunction value with its first two spatial derivatives.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WaveSample {
    pub value: Complex64,
    pub dx: Complex64,
    pub dxx: Complex64,
}

impl From<Jet> for WaveSample {
    fn from(j: Jet) -> Self {
        WaveSample {
            value: j.value(),
            dx: j.deriv(1).unwrap_or_default(),
            dxx: j.deriv(2).unwrap_or_default(),
        }
    }
}

impl WaveSample {
    pub fn to_jet(self) -> Jet {
        Jet::from_derivs(&[self.value, self.dx, self.dxx])
    }
}

/// Anything that yields a spatial jet of a wavefunction at (x, t).
pub trait Wavefunction: Send + Sync {
    fn jet(&self, x: f64, t: f64) -> Result<Jet>;

    fn sample(&self, x: f64, t: f64) -> Result<WaveSample> {
        self.jet(x, t).map(WaveSample::from)
    }

    /// Jets along one time slice; implementors override this to share
    /// per-slice work.
    fn row(&self, xs: &[f64], t: f64) -> Result<Vec<Jet>> {
        xs.iter().map(|&x| self.jet(x, t)).collect()
    }

    /// ψ = exp(expo)·rest with the exponential part kept apart. Handles
    /// whose modulus can overflow or underflow override this.
    fn factored_jet(&self, x: f64, t: f64) -> Result<Factored> {
        Ok(Factored::plain(self.jet(x, t)?))
    }

    fn factored_row(&self, xs: &[f64], t: f64) -> Result<Vec<Factored>> {
        xs.iter().map(|&x| self.factored_jet(x, t)).collect()
    }

    /// (s, ψ·e^{−s}) with a real shift s that keeps the jet inside the
    /// floating-point range.
    fn scaled_jet(&self, x: f64, t: f64) -> Result<(f64, Jet)> {
        scaled_checked(self.factored_jet(x, t)?, x, t)
    }

    fn scaled_row(&self, xs: &[f64], t: f64) -> Result<Vec<(f64, Jet)>> {
        xs.iter()
            .zip(self.factored_row(xs, t)?)
            .map(|(&x, f)| scaled_checked(f, x, t))
            .collect()
    }

    /// log ψ = expo + ln(rest) as a jet (the branch of the constant term is
    /// unspecified).
    fn log_jet(&self, x: f64, t: f64) -> Result<Jet> {
        self.factored_jet(x, t)?.log(x, t)
    }

    fn log_row(&self, xs: &[f64], t: f64) -> Result<Vec<Jet>> {
        xs.iter()
            .zip(self.factored_row(xs, t)?)
            .map(|(&x, f)| f.log(x, t))
            .collect()
    }
}

fn scaled_checked(f: Factored, x: f64, t: f64) -> Result<(f64, Jet)> {
    let (s, j) = f.scaled();
    if !(s.is_finite() && j.is_finite()) {
        return Err(Error::Overflow(format!("wavefunction not representable at (x, t) = ({x}, {t})")));
    }
    Ok((s, j))
}

/// log of a jet, failing with a node error where the value vanishes.
pub fn log_of(j: &Jet, x: f64, t: f64) -> Result<Jet> {
    let v = j.value().norm();
    if !(v > 0.0) || !v.is_finite() {
        return Err(Error::Node { x, t });
    }
    let l = j.ln();
    if !l.is_finite() {
        return Err(Error::Node { x, t });
    }
    Ok(l)
}

/// exp(expo)·rest, kept apart so that log ψ stays representable where ψ
/// itself over- or underflows.
#[derive(Clone, Copy, Debug)]
pub struct Factored {
    pub expo: Jet,
    pub rest: Jet,
}

impl Factored {
    pub fn plain(j: Jet) -> Self {
        Factored {
            expo: Jet::real(0.0),
            rest: j,
        }
    }

    pub fn value(self) -> Jet {
        self.expo.exp() * self.rest
    }

    pub fn scaled(self) -> (f64, Jet) {
        let s = self.expo.value().re;
        (s, (self.expo + (-s)).exp() * self.rest)
    }

    pub fn log(self, x: f64, t: f64) -> Result<Jet> {
        Ok(self.expo + log_of(&self.rest, x, t)?)
    }

    /// c·ψ
    pub fn times(self, c: Complex64) -> Self {
        Factored {
            expo: self.expo,
            rest: self.rest * c,
        }
    }
}

impl<F> Wavefunction for F
where
    F: Fn(f64, f64) -> Result<Jet> + Send + Sync,
{
    fn jet(&self, x: f64, t: f64) -> Result<Jet> {
        self(x, t)
    }
}

/// A real potential V(x, t).
pub trait Potential: Send + Sync {
    fn value(&self, x: f64, t: f64) -> Result<f64>;

    /// Values along one time slice.
    fn row(&self, xs: &[f64], t: f64) -> Result<Vec<f64>> {
        xs.iter().map(|&x| self.value(x, t).map_err(|e| e.at(x, t))).collect()
    }
}

impl<F> Potential for F
where
    F: Fn(f64, f64) -> Result<f64> + Send + Sync,
{
    fn value(&self, x: f64, t: f64) -> Result<f64> {
        self(x, t)
    }
}

/// The solution families of the catalog.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Family {
    /// cosh-type function, λ = −μ − iν.
    #[serde(rename = "osc1")]
    Osc1 { mu: f64, nu: f64 },
    /// Airy-type function ψ_λ with Q = c1·Ai + c2·Bi.
    #[serde(rename = "osc2")]
    Osc2 {
        lambda: Complex64,
        #[serde(default = "one")]
        airy_c1: f64,
        #[serde(default)]
        airy_c2: f64,
    },
    /// Hermite basis function u_n.
    #[serde(rename = "osc3")]
    Osc3Discrete { n: usize },
    /// C + erf family, |C| > 1.
    OscErf { c: f64 },
    /// Singular oscillator, non-normalizable u_p and 1/u_p.
    SingBroken { g: f64, p: usize },
    /// Singular oscillator, normalizable 1/u_p.
    SingExact { g: f64, p: usize },
}

fn one() -> f64 {
    1.0
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Osc1 { .. } => "osc1",
            Family::Osc2 { .. } => "osc2",
            Family::Osc3Discrete { .. } => "osc3",
            Family::OscErf { .. } => "osc-erf",
            Family::SingBroken { .. } => "sing-broken",
            Family::SingExact { .. } => "sing-exact",
        }
    }

    pub fn is_singular(&self) -> bool {
        matches!(self, Family::SingBroken { .. } | Family::SingExact { .. })
    }

    /// Coupling of the g/x² term (0 for the plain oscillator).
    pub fn coupling(&self) -> f64 {
        match self {
            Family::SingBroken { g, .. } | Family::SingExact { g, .. } => *g,
            _ => 0.0,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Osc1 { mu, nu } => write!(f, "osc1(mu={mu}, nu={nu})"),
            Family::Osc2 { lambda, airy_c1, airy_c2 } => write!(
                f,
                "osc2(lambda={}{:+}i, c1={airy_c1}, c2={airy_c2})",
                lambda.re, lambda.im
            ),
            Family::Osc3Discrete { n } => write!(f, "osc3(n={n})"),
            Family::OscErf { c } => write!(f, "osc-erf(C={c})"),
            Family::SingBroken { g, p } => write!(f, "sing-broken(g={g}, p={p})"),
            Family::SingExact { g, p } => write!(f, "sing-exact(g={g}, p={p})"),
        }
    }
}

/// Interpretation of the typographically ambiguous tokens.
///
/// `delta_scale`: the cosh family's δ is `delta_scale · Im ε`.
/// Airy family: the linear phase term is `x γ / (2 δ^delta_power)`, the
/// argument prefactor is `airy_scale` and λ enters the argument as
/// `lambda_factor · λ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Reading {
    pub delta_scale: f64,
    pub delta_power: i32,
    pub airy_scale: f64,
    pub lambda_factor: f64,
}

impl Default for Reading {
    fn default() -> Self {
        Reading {
            delta_scale: 4.0,
            delta_power: 2,
            airy_scale: 2f64.powf(-1.0 / 3.0),
            lambda_factor: 2f64.powf(2.0 / 3.0),
        }
    }
}

impl Reading {
    /// The finite candidate set tried for each ambiguous family, with labels.
    pub fn candidates(family: &Family) -> Vec<(String, Reading)> {
        let base = Reading::default();
        match family {
            Family::Osc1 { .. } => [1.0, 2.0, -2.0, 4.0, -4.0]
                .iter()
                .map(|&s| {
                    (
                        format!("delta = {s}*Im(eps)"),
                        Reading {
                            delta_scale: s,
                            ..base
                        },
                    )
                })
                .collect(),
            Family::Osc2 { .. } => {
                let scales = [("2^(-1/2)", 2f64.powf(-0.5)), ("2^(-1/3)", 2f64.powf(-1.0 / 3.0))];
                let lfacs = [
                    ("2^(2/3)", 2f64.powf(2.0 / 3.0)),
                    ("2^(-1/3)", 2f64.powf(-1.0 / 3.0)),
                    ("1", 1.0),
                ];
                let mut out = Vec::new();
                for dp in [1, 2] {
                    for (sn, s) in scales {
                        for (ln, l) in lfacs {
                            out.push((
                                format!("delta^{dp} in linear phase, scale {sn}, lambda factor {ln}"),
                                Reading {
                                    delta_power: dp,
                                    airy_scale: s,
                                    lambda_factor: l,
                                    ..base
                                },
                            ));
                        }
                    }
                }
                out
            }
            _ => vec![("as printed".into(), base)],
        }
    }
}

/// A family, its constants and the envelope it is built on.
#[derive(Clone, Debug)]
pub struct ModelSpec {
    pub family: Family,
    pub envelope: Arc<Envelope>,
    pub reading: Reading,
}

/// k = 1/2 + √(1+4g)/4
pub fn k_from_g(g: f64) -> Result<f64> {
    let d = 1.0 + 4.0 * g;
    if !(d >= 0.0) {
        return Err(Error::Domain(format!("1 + 4g = {d} < 0")));
    }
    Ok(0.5 + 0.25 * d.sqrt())
}

/// Text of the admissibility rule for the exact branch.
pub const ALLOWED_P_RULE: &str = "if p is even it may take the values p < 2k-1 and p = [2k]+1, [2k]+3, ...; \
     for odd p only p = [2k], [2k]+2, ... may be used, where [2k] = entire(2k)";

/// The admissibility rule for the exact branch, applied verbatim.
pub fn allowed_p(p: usize, k: f64) -> bool {
    let e = (2.0 * k).floor() as i64;
    let p = p as i64;
    let in_ladder = |start: i64| p >= start && (p - start) % 2 == 0;
    if p % 2 == 0 {
        (p as f64) < 2.0 * k - 1.0 || (in_ladder(e + 1) && (e + 1) % 2 == 0)
    } else {
        in_ladder(e) && e % 2 == 1
    }
}

/// Direct test of the exact branch: L_p^{1−2k}(−y) has no zero for y > 0
/// (scanned out to where the leading term dominates) and 1/u_p still vanishes
/// at the origin, which fails when the polynomial itself vanishes there to
/// high order (integer 2k).
pub fn exact_branch_regular(p: usize, k: f64) -> bool {
    let alpha = 1.0 - 2.0 * k;
    // order of the zero of L_p^alpha at the origin
    let m = (0..=p).find(|&i| binomial(p as f64 + alpha, p - i) != 0.0).unwrap_or(p);
    if 2.0 * k - 1.5 - 2.0 * m as f64 <= 0.0 {
        return false;
    }
    let y_max = 50.0 * (p as f64 + 1.0) + 4.0 * alpha.abs();
    let n = 20_000;
    let mut prev = 0.0f64;
    for j in 1..=n {
        let y = y_max * (j as f64 / n as f64).powi(2);
        let v = specfun::laguerre_value(p as i64, alpha, -y);
        if v == 0.0 || (prev != 0.0 && v.signum() != prev.signum()) {
            return false;
        }
        prev = v;
    }
    true
}

fn binomial(a: f64, j: usize) -> f64 {
    (0..j).fold(1.0, |acc, r| acc * (a - r as f64) / (r as f64 + 1.0))
}

/// Envelope-derived factors at one instant.
#[derive(Clone, Copy, Debug)]
pub struct TimeFactors {
    pub eps: Complex64,
    pub deps: Complex64,
    pub theta: f64,
    pub omega: f64,
}

impl TimeFactors {
    pub fn at(env: &Envelope, t: f64) -> Result<Self> {
        let (eps, deps) = env.eval(t)?;
        Ok(TimeFactors {
            eps,
            deps,
            theta: env.phase(t)?,
            omega: env.omega(t),
        })
    }

    /// γ₃ = |ε|²
    pub fn g3(&self) -> f64 {
        self.eps.norm_sqr()
    }

    pub fn g3_dot(&self) -> f64 {
        2.0 * (self.eps.conj() * self.deps).re
    }

    /// (ε̄/ε)^s on the continuous branch.
    pub fn ratio_pow(&self, s: f64) -> Complex64 {
        Complex64::from_polar(1.0, -2.0 * s * self.theta)
    }
}

impl ModelSpec {
    /// Validate the family constants and the envelope normalization.
    pub fn new(family: Family, envelope: Arc<Envelope>) -> Result<Self> {
        validate_family(&family)?;
        let w = envelope.wronskian(envelope.t0())?;
        if (w + I * 0.5).norm() > 1e-8 {
            return Err(Error::InvalidModel(format!(
                "envelope Wronskian is {w}, but the closed forms require W = -i/2 (Im(conj(eps)*deps) = 1/4)"
            )));
        }
        Ok(ModelSpec {
            family,
            envelope,
            reading: Reading::default(),
        })
    }

    pub fn with_reading(&self, reading: Reading) -> Self {
        ModelSpec {
            reading,
            ..self.clone()
        }
    }

    pub fn with_family(&self, family: Family) -> Result<Self> {
        validate_family(&family)?;
        Ok(ModelSpec {
            family,
            ..self.clone()
        })
    }

    pub fn k(&self) -> Option<f64> {
        match self.family {
            Family::SingBroken { g, .. } | Family::SingExact { g, .. } => k_from_g(g).ok(),
            _ => None,
        }
    }

    /// V₀ = ω²x² (+ g/x²)
    pub fn v0(&self, x: f64, t: f64) -> Result<f64> {
        let w = self.envelope.omega(t);
        if self.family.is_singular() {
            if !(x > 0.0) {
                return Err(Error::Domain(format!("singular oscillator evaluated at x = {x} <= 0")));
            }
            Ok(w * w * x * x + self.family.coupling() / (x * x))
        } else {
            Ok(w * w * x * x)
        }
    }

    /// Refuse windows in which the family's real time factor changes sign.
    pub fn check_window(&self, lo: f64, hi: f64) -> Result<()> {
        let factor = match self.family {
            Family::Osc1 { .. } => "gamma = (eps + conj(eps))/2",
            Family::Osc2 { .. } => "delta = -i(eps - conj(eps))",
            _ => return Ok(()),
        };
        let n = 4000;
        let mut prev = f64::NAN;
        for j in 0..=n {
            let t = lo + (hi - lo) * j as f64 / n as f64;
            let v = match self.family {
                Family::Osc1 { .. } => self.envelope.gamma_half_sum(t)?,
                _ => self.envelope.delta_of(t)?,
            };
            if v.abs() < 1e-10 || (prev.is_finite() && v.signum() != prev.signum()) {
                return Err(Error::Caustic { t, factor });
            }
            prev = v;
        }
        Ok(())
    }

    /// Transformation function of the family at (x, t).
    pub fn evaluate_u(&self, x: f64, t: f64) -> Result<WaveSample> {
        self.u_jet(x, t).map(WaveSample::from)
    }

    /// Transformation function as a full jet (derivatives up to order 4).
    pub fn u_jet(&self, x: f64, t: f64) -> Result<Jet> {
        let f = TimeFactors::at(&self.envelope, t)?;
        self.u_jet_at(&f, x, t)
    }

    fn u_jet_at(&self, f: &TimeFactors, x: f64, t: f64) -> Result<Jet> {
        finite(self.u_factored(f, x, t).map(Factored::value), x, t)
    }

    /// (s, u·e^{−s}) with the Gaussian growth or decay split off into s.
    /// exp(expo)·rest form of the transformation function.
    pub fn u_factored_jet(&self, x: f64, t: f64) -> Result<Factored> {
        let f = TimeFactors::at(&self.envelope, t)?;
        self.u_factored_at(&f, x, t)
    }

    fn u_factored_at(&self, f: &TimeFactors, x: f64, t: f64) -> Result<Factored> {
        let u = self.u_factored(f, x, t).map_err(|e| e.at(x, t))?;
        check_factored(u, x, t)
    }

    fn u_factored(&self, f: &TimeFactors, x: f64, t: f64) -> Result<Factored> {
        let f = *f;
        match &self.family {
            Family::Osc1 { mu, nu } => osc1(&f, *mu, *nu, self.reading, x, t),
            Family::Osc2 { lambda, airy_c1, airy_c2 } => {
                osc2(&f, *lambda, *airy_c1, *airy_c2, self.reading, x, t)
            }
            Family::Osc3Discrete { n } => Ok(hermite_basis(&f, *n, x)),
            Family::OscErf { c } => Ok(erf_family(&f, *c, x)),
            Family::SingBroken { g, p } => sing_broken(&f, k_from_g(*g)?, *p, x),
            Family::SingExact { g, p } => sing_exact(&f, k_from_g(*g)?, *p, x),
        }
    }

    /// Basis solution ψ_n (oscillator) or φ_n (singular oscillator).
    pub fn evaluate_basis(&self, n: usize, x: f64, t: f64) -> Result<WaveSample> {
        self.basis_jet(n, x, t).map(WaveSample::from)
    }

    pub fn basis_jet(&self, n: usize, x: f64, t: f64) -> Result<Jet> {
        let f = TimeFactors::at(&self.envelope, t)?;
        self.basis_jet_at(&f, n, x, t)
    }

    fn basis_jet_at(&self, f: &TimeFactors, n: usize, x: f64, t: f64) -> Result<Jet> {
        finite(self.basis_factored(f, n, x).map(Factored::value), x, t)
    }

    fn basis_factored_at(&self, f: &TimeFactors, n: usize, x: f64, t: f64) -> Result<Factored> {
        let b = self.basis_factored(f, n, x).map_err(|e| e.at(x, t))?;
        check_factored(b, x, t)
    }

    fn basis_factored(&self, f: &TimeFactors, n: usize, x: f64) -> Result<Factored> {
        match &self.family {
            Family::SingBroken { g, .. } | Family::SingExact { g, .. } => sing_basis(f, k_from_g(*g)?, n, x),
            _ => Ok(hermite_basis(f, n, x)),
        }
    }

    /// The printed potential V₁ of the family (V₀ − A for the singular
    /// oscillator, whose printed difference runs the other way).
    pub fn closed_form_potential(&self, x: f64, t: f64) -> Result<f64> {
        let f = TimeFactors::at(&self.envelope, t)?;
        let v0 = self.v0(x, t)?;
        let g3 = f.g3();
        match &self.family {
            Family::Osc1 { mu, nu } => {
                let g1 = f.eps.re;
                let delta = self.reading.delta_scale * f.eps.im;
                let s = nu * x / (8.0 * g1) + mu * nu * delta / (32.0 * g1);
                Ok(v0 - nu * nu / (32.0 * g1 * g1) / s.cosh().powi(2))
            }
            Family::Osc2 { .. } => Err(Error::Unsupported(
                "the Airy family has no printed potential; use the second-order transform".into(),
            )),
            Family::Osc3Discrete { n } => {
                let z = x / (2.0 * g3.sqrt());
                let (j, j1, j2) = specfun::j_poly_derivs(*n, z);
                Ok(v0 - (j2 / j - (j1 / j).powi(2) - 1.0) / (2.0 * g3))
            }
            Family::OscErf { c } => {
                let z = x / (2.0 * g3.sqrt());
                let q = (PI / 2.0).sqrt() * (c + specfun::erf(z / 2f64.sqrt()));
                let e = (-z * z / 2.0).exp();
                Ok(v0 - (1.0 - 2.0 * z * e / q - 2.0 * e * e / (q * q)) / (4.0 * g3))
            }
            Family::SingBroken { g, p } => {
                let k = k_from_g(*g)?;
                let z = -x * x / (8.0 * g3);
                let p = *p as i64;
                let lp = specfun::laguerre_value(p, 2.0 * k - 1.0, z);
                let l1 = specfun::laguerre_value(p - 1, 2.0 * k, z);
                let l2 = specfun::laguerre_value(p - 2, 2.0 * k + 1.0, z);
                let a = 1.0 / (4.0 * g3) - (4.0 * k - 1.0) / (x * x)
                    - (x * l1 / (g3 * lp)).powi(2) / 8.0
                    + (x * x * l2 + 4.0 * g3 * l1) / (8.0 * g3 * g3 * lp);
                Ok(v0 - a)
            }
            Family::SingExact { g, p } => {
                let k = k_from_g(*g)?;
                let z = -x * x / (8.0 * g3);
                let p = *p as i64;
                let lp = specfun::laguerre_value(p, 1.0 - 2.0 * k, z);
                let l1 = specfun::laguerre_value(p - 1, 2.0 - 2.0 * k, z);
                let l2 = specfun::laguerre_value(p - 2, 3.0 - 2.0 * k, z);
                let a = 1.0 / (4.0 * g3) + (4.0 * k - 3.0) / (x * x)
                    - 0.5 * (x * l1 / (2.0 * g3 * lp)).powi(2)
                    + (x * x * l2 + 4.0 * g3 * l1) / (8.0 * g3 * g3 * lp);
                Ok(v0 - a)
            }
        }
    }
}

/// The family's transformation function as a wavefunction handle.
#[derive(Clone, Debug)]
pub struct TransformationFunction(pub ModelSpec);

impl Wavefunction for TransformationFunction {
    fn jet(&self, x: f64, t: f64) -> Result<Jet> {
        self.0.u_jet(x, t)
    }

    fn row(&self, xs: &[f64], t: f64) -> Result<Vec<Jet>> {
        let f = TimeFactors::at(&self.0.envelope, t)?;
        xs.iter().map(|&x| self.0.u_jet_at(&f, x, t)).collect()
    }

    fn factored_jet(&self, x: f64, t: f64) -> Result<Factored> {
        self.0.u_factored_jet(x, t)
    }

    fn factored_row(&self, xs: &[f64], t: f64) -> Result<Vec<Factored>> {
        let f = TimeFactors::at(&self.0.envelope, t)?;
        xs.iter().map(|&x| self.0.u_factored_at(&f, x, t)).collect()
    }
}

/// The n-th basis solution of the family's initial equation.
#[derive(Clone, Debug)]
pub struct BasisFunction(pub ModelSpec, pub usize);

impl Wavefunction for BasisFunction {
    fn jet(&self, x: f64, t: f64) -> Result<Jet> {
        self.0.basis_jet(self.1, x, t)
    }

    fn row(&self, xs: &[f64], t: f64) -> Result<Vec<Jet>> {
        let f = TimeFactors::at(&self.0.envelope, t)?;
        xs.iter().map(|&x| self.0.basis_jet_at(&f, self.1, x, t)).collect()
    }

    fn factored_jet(&self, x: f64, t: f64) -> Result<Factored> {
        let f = TimeFactors::at(&self.0.envelope, t)?;
        self.0.basis_factored_at(&f, self.1, x, t)
    }

    fn factored_row(&self, xs: &[f64], t: f64) -> Result<Vec<Factored>> {
        let f = TimeFactors::at(&self.0.envelope, t)?;
        xs.iter().map(|&x| self.0.basis_factored_at(&f, self.1, x, t)).collect()
    }
}

/// V₀ of the family's initial equation.
#[derive(Clone, Debug)]
pub struct InitialPotential(pub ModelSpec);

impl Potential for InitialPotential {
    fn value(&self, x: f64, t: f64) -> Result<f64> {
        self.0.v0(x, t)
    }
}

/// The printed potential of the family.
#[derive(Clone, Debug)]
pub struct PrintedPotential(pub ModelSpec);

impl Potential for PrintedPotential {
    fn value(&self, x: f64, t: f64) -> Result<f64> {
        self.0.closed_form_potential(x, t)
    }
}

fn validate_family(family: &Family) -> Result<()> {
    match family {
        Family::Osc1 { mu, nu } => {
            if !(mu.is_finite() && nu.is_finite()) {
                return Err(Error::InvalidModel("osc1: mu and nu must be finite".into()));
            }
            if *nu == 0.0 {
                return Err(Error::InvalidModel(
                    "osc1 requires nu != 0 (nu = 0 gives a vanishing potential difference)".into(),
                ));
            }
        }
        Family::Osc2 { lambda, airy_c1, airy_c2 } => {
            if !(lambda.re.is_finite() && lambda.im.is_finite()) {
                return Err(Error::InvalidModel("osc2: lambda must be finite".into()));
            }
            if *airy_c1 == 0.0 && *airy_c2 == 0.0 {
                return Err(Error::InvalidModel(
                    "osc2: the Airy combination c1*Ai + c2*Bi must be nonzero".into(),
                ));
            }
        }
        Family::Osc3Discrete { .. } => {}
        Family::OscErf { c } => {
            if !(c.abs() > 1.0) {
                return Err(Error::InvalidModel(format!(
                    "osc-erf requires |C| > 1 (got C = {c}); otherwise C + erf has a node"
                )));
            }
        }
        Family::SingBroken { g, .. } => {
            k_from_g(*g).map_err(|_| Error::InvalidModel(format!("sing-broken requires 1 + 4g >= 0 (got g = {g})")))?;
        }
        Family::SingExact { g, p } => {
            let k = k_from_g(*g)
                .map_err(|_| Error::InvalidModel(format!("sing-exact requires 1 + 4g >= 0 (got g = {g})")))?;
            if !allowed_p(*p, k) {
                return Err(Error::InvalidModel(format!(
                    "sing-exact: p = {p} is not allowed for k = {k} ([2k] = {}): {ALLOWED_P_RULE}",
                    (2.0 * k).floor()
                )));
            }
        }
    }
    Ok(())
}

fn check_factored(f: Factored, x: f64, t: f64) -> Result<Factored> {
    if !(f.expo.is_finite() && f.rest.is_finite()) {
        return Err(Error::Overflow(format!("wavefunction not representable at (x, t) = ({x}, {t})")));
    }
    Ok(f)
}

fn finite(out: Result<Jet>, x: f64, t: f64) -> Result<Jet> {
    match out {
        Ok(j) if j.is_finite() => Ok(j),
        Ok(_) => Err(Error::Overflow("non-finite wavefunction value".into()).at(x, t)),
        Err(e) => Err(e.at(x, t)),
    }
}

fn caustic(v: f64, t: f64, factor: &'static str) -> Result<()> {
    if v.abs() < 1e-12 {
        return Err(Error::Caustic { t, factor });
    }
    Ok(())
}

fn osc1(f: &TimeFactors, mu: f64, nu: f64, r: Reading, x: f64, t: f64) -> Result<Factored> {
    let g1 = f.eps.re;
    caustic(g1, t, "gamma = (eps + conj(eps))/2")?;
    let g1d = f.deps.re;
    let delta = r.delta_scale * f.eps.im;
    let xj = Jet::var(x);
    let arg = xj * (nu / (8.0 * g1)) + mu * nu * delta / (32.0 * g1);
    let phase = (xj * xj * (g1d / (4.0 * g1)) + xj * (-mu / (8.0 * g1))
        + (nu * nu - mu * mu) * delta / (64.0 * g1))
        * I;
    let pref = Complex64::new(g1, 0.0).powf(-0.5);
    Ok(Factored {
        expo: phase,
        rest: arg.cosh() * pref,
    })
}

fn osc2(f: &TimeFactors, lambda: Complex64, c1: f64, c2: f64, r: Reading, x: f64, t: f64) -> Result<Factored> {
    let g = 2.0 * f.eps.re;
    let d = 2.0 * f.eps.im;
    caustic(d, t, "delta = -i(eps - conj(eps))")?;
    let dd = 2.0 * f.deps.im;
    let xj = Jet::var(x);
    let phase = (xj * xj * (dd / (4.0 * d)) + xj * (-g / (2.0 * d.powi(r.delta_power)))) * I
        + I * (g.powi(3) / (6.0 * d.powi(3)) + lambda * g / d);
    let z = (xj * (1.0 / d) + (-g * g / (2.0 * d * d))) * r.airy_scale + (-r.lambda_factor * lambda);
    let z0 = z.value();
    let (shift, q, qd) = specfun::airy_combination_scaled(z0, c1, c2)?;
    let qs = [q, qd, z0 * q, q + z0 * qd, 2.0 * qd + z0 * z0 * q];
    let pref = Complex64::new(d, 0.0).powf(-0.5);
    Ok(Factored {
        expo: phase + shift,
        rest: z.compose(&qs) * pref,
    })
}

fn hermite_basis(f: &TimeFactors, n: usize, x: f64) -> Factored {
    let g = f.g3();
    let gd = f.g3_dot();
    let xj = Jet::var(x);
    let s = 1.0 / (2.0 * g.sqrt());
    let z0 = x * s;
    let he = specfun::hermite_he_seq(n, z0);
    let mut ds = [Complex64::default(); 5];
    let mut fall = 1.0;
    for (k, d) in ds.iter_mut().enumerate() {
        if k > n {
            break;
        }
        *d = Complex64::new(fall * he[n - k], 0.0);
        fall *= (n - k) as f64;
    }
    let herm = (xj * s).compose(&ds);
    Factored {
        expo: xj * xj * ((2.0 * I * gd - 1.0) / (16.0 * g)),
        rest: herm * (f.ratio_pow(n as f64 / 2.0 + 0.25) * g.powf(-0.25)),
    }
}

fn erf_family(f: &TimeFactors, c: f64, x: f64) -> Factored {
    let g = f.g3();
    let gd = f.g3_dot();
    let xj = Jet::var(x);
    let s = 1.0 / (2.0 * (2.0 * g).sqrt());
    let z = x * s;
    let e1 = 2.0 / PI.sqrt() * (-z * z).exp();
    let ds = [
        c + specfun::erf(z),
        e1,
        -2.0 * z * e1,
        (4.0 * z * z - 2.0) * e1,
        (-8.0 * z * z * z + 12.0 * z) * e1,
    ]
    .map(|v| Complex64::new(v, 0.0));
    let q = (xj * s).compose(&ds);
    // conj(eps)^(-1/2) continued along the unwrapped phase
    let pref = Complex64::from_polar(f.eps.norm().powf(-0.5), 0.5 * f.theta);
    Factored {
        expo: xj * xj * ((2.0 * I * gd + 1.0) / (16.0 * g)),
        rest: q * pref,
    }
}

fn laguerre_of(p: usize, alpha: f64, y: Jet) -> Jet {
    let y0 = y.value().re;
    let ds: Vec<Complex64> = (0..5)
        .map(|j| Complex64::new(specfun::laguerre_deriv(p, alpha, y0, j), 0.0))
        .collect();
    y.compose(&ds)
}

fn half_line(x: f64) -> Result<()> {
    if !(x > 0.0) {
        return Err(Error::Domain(format!("singular oscillator evaluated at x = {x} <= 0")));
    }
    Ok(())
}

/// (x^power, Gaussian exponent, x²/(8γ₃))
fn sing_common(f: &TimeFactors, x: f64, power: f64, sign: f64) -> (Jet, Jet, Jet) {
    let g = f.g3();
    let gd = f.g3_dot();
    let xj = Jet::var(x);
    let x2 = xj * xj;
    let expo = x2 * ((I * gd * 2.0 + sign) / (16.0 * g));
    let y = x2 * (1.0 / (8.0 * g));
    (xj.powf(power), expo, y)
}

fn sing_basis(f: &TimeFactors, k: f64, n: usize, x: f64) -> Result<Factored> {
    half_line(x)?;
    let (body, expo, y) = sing_common(f, x, 2.0 * k - 0.5, -1.0);
    let pref = f.ratio_pow(n as f64 + k) * f.g3().powf(-k);
    Ok(Factored {
        expo,
        rest: body * laguerre_of(n, 2.0 * k - 1.0, y) * pref,
    })
}

fn sing_broken(f: &TimeFactors, k: f64, p: usize, x: f64) -> Result<Factored> {
    half_line(x)?;
    let (body, expo, y) = sing_common(f, x, 2.0 * k - 0.5, 1.0);
    let pref = f.ratio_pow(-(p as f64) - k) * f.g3().powf(-k);
    Ok(Factored {
        expo,
        rest: body * laguerre_of(p, 2.0 * k - 1.0, -y) * pref,
    })
}

fn sing_exact(f: &TimeFactors, k: f64, p: usize, x: f64) -> Result<Factored> {
    half_line(x)?;
    let (body, expo, y) = sing_common(f, x, 1.5 - 2.0 * k, 1.0);
    let pref = f.ratio_pow(k - p as f64 - 1.0) * f.g3().powf(k - 1.0);
    Ok(Factored {
        expo,
        rest: body * laguerre_of(p, 1.0 - 2.0 * k, -y) * pref,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trajectory::FrequencyProfile;

    fn env() -> Arc<Envelope> {
        Arc::new(
            Envelope::normalized(FrequencyProfile::Constant { omega: 0.5 }, 0.0, 0.3, 1e-13, -1.0, 3.0)
                .unwrap(),
        )
    }

    #[test]
    fn k_values() {
        assert_eq!(k_from_g(0.0).unwrap(), 0.75);
        assert_eq!(k_from_g(2.0).unwrap(), 1.25);
        assert_eq!(k_from_g(0.75).unwrap(), 1.0);
        assert!(k_from_g(-1.0).is_err());
    }

    #[test]
    fn allowed_p_verbatim() {
        assert!(allowed_p(0, 1.25));
        assert!(!allowed_p(1, 1.25));
        assert!(!allowed_p(2, 1.25));
        // k = 3/2: [2k] = 3
        let allowed: Vec<usize> = (0..8).filter(|&p| allowed_p(p, 1.5)).collect();
        assert_eq!(allowed, vec![0, 3, 4, 5, 6, 7]);
    }

    #[test]
    fn regularity_diagnostic_agrees_with_rule() {
        for g in [1.0, 2.0, 6.0, 12.0, 20.0] {
            let k = k_from_g(g).unwrap();
            for p in 0..8 {
                assert_eq!(allowed_p(p, k), exact_branch_regular(p, k), "g={g} p={p}");
            }
        }
    }

    #[test]
    fn integer_two_k_degenerates() {
        // k = 3/2: L_3^{-2}(z) = z^2/2 - z^3/6, so u_3 ~ x^{5/2} at the origin
        assert!(allowed_p(3, 1.5));
        assert!(!exact_branch_regular(3, 1.5));
        assert!(exact_branch_regular(0, 1.5));
    }

    #[test]
    fn validation_messages_cite_constraints() {
        let e = env();
        let err = ModelSpec::new(Family::OscErf { c: 0.5 }, e.clone()).unwrap_err();
        assert!(err.to_string().contains("|C| > 1"));
        let err = ModelSpec::new(Family::SingExact { g: 2.0, p: 1 }, e.clone()).unwrap_err();
        assert!(err.to_string().contains("entire(2k)"));
        assert!(ModelSpec::new(Family::Osc1 { mu: 1.0, nu: 0.0 }, e).is_err());
    }

    #[test]
    fn unnormalized_envelope_is_rejected() {
        let env = Envelope::solve(
            FrequencyProfile::Constant { omega: 1.0 },
            0.0,
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 2.0),
            1e-12,
            0.0,
            1.0,
        )
        .unwrap();
        let err = ModelSpec::new(Family::Osc3Discrete { n: 0 }, Arc::new(env)).unwrap_err();
        assert!(err.to_string().contains("W = -i/2"));
    }

    #[test]
    fn osc1_at_origin() {
        let spec = ModelSpec::new(Family::Osc1 { mu: 0.0, nu: 0.8 }, env()).unwrap();
        let t = 0.4;
        let (e, _) = spec.envelope.eval(t).unwrap();
        let g1 = e.re;
        let delta = 4.0 * e.im;
        let want = Complex64::new(g1, 0.0).powf(-0.5) * (I * 0.64 * delta / (64.0 * g1)).exp();
        let got = spec.evaluate_u(0.0, t).unwrap().value;
        assert!((got - want).norm() < 1e-14);
    }

    #[test]
    fn ground_state_modulus_is_gaussian() {
        let spec = ModelSpec::new(Family::Osc3Discrete { n: 0 }, env()).unwrap();
        let t = 1.1;
        let g = spec.envelope.gamma_prod(t).unwrap();
        for x in [-3.0, 0.5, 2.0] {
            let u = spec.evaluate_u(x, t).unwrap().value.norm();
            let want = g.powf(-0.25) * (-x * x / (16.0 * g)).exp();
            assert!((u - want).abs() < 1e-14);
        }
    }

    #[test]
    fn basis_derivatives_match_finite_differences() {
        let e = env();
        let specs = [
            ModelSpec::new(Family::Osc3Discrete { n: 3 }, e.clone()).unwrap(),
            ModelSpec::new(Family::OscErf { c: -2.0 }, e.clone()).unwrap(),
            ModelSpec::new(Family::SingExact { g: 2.0, p: 0 }, e.clone()).unwrap(),
            ModelSpec::new(Family::SingBroken { g: 2.0, p: 1 }, e.clone()).unwrap(),
            ModelSpec::new(
                Family::Osc2 {
                    lambda: Complex64::new(0.3, 0.7),
                    airy_c1: 1.0,
                    airy_c2: 0.0,
                },
                e,
            )
            .unwrap(),
        ];
        let h = 1e-3;
        for spec in &specs {
            let x = 1.3;
            let t = 0.7;
            let s = spec.evaluate_u(x, t).unwrap();
            let f = |x| spec.evaluate_u(x, t).unwrap().value;
            let d1 = (f(x - 2.0 * h) - 8.0 * f(x - h) + 8.0 * f(x + h) - f(x + 2.0 * h)) / (12.0 * h);
            let d2 = (-f(x - 2.0 * h) + 16.0 * f(x - h) - 30.0 * f(x) + 16.0 * f(x + h) - f(x + 2.0 * h))
                / (12.0 * h * h);
            let scale = 1.0 + s.value.norm() + s.dx.norm() + s.dxx.norm();
            assert!((d1 - s.dx).norm() < 1e-8 * scale, "{}", spec.family);
            assert!((d2 - s.dxx).norm() < 1e-6 * scale, "{}", spec.family);
        }
    }

    #[test]
    fn singular_family_rejects_nonpositive_x() {
        let spec = ModelSpec::new(Family::SingBroken { g: 2.0, p: 0 }, env()).unwrap();
        assert!(spec.evaluate_u(0.0, 0.5).is_err());
        assert!(spec.evaluate_basis(1, -1.0, 0.5).is_err());
    }

    #[test]
    fn osc2_has_no_printed_potential() {
        let spec = ModelSpec::new(
            Family::Osc2 {
                lambda: Complex64::new(0.0, 1.0),
                airy_c1: 1.0,
                airy_c2: 0.0,
            },
            env(),
        )
        .unwrap();
        assert!(matches!(spec.closed_form_potential(0.5, 0.5), Err(Error::Unsupported(_))));
    }

    #[test]
    fn caustic_window_is_refused() {
        // with constant omega = 0.5 the real part of eps oscillates through zero
        let spec = ModelSpec::new(Family::Osc1 { mu: 0.0, nu: 1.0 }, env()).unwrap();
        assert!(matches!(spec.check_window(-1.0, 3.0), Err(Error::Caustic { .. })));
    }
}
