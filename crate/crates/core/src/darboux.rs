//! First- and second-order nonstationary Darboux transformations.
//!
//! A transformation function u defines L = ℓ(t)(∂ − w) with w = uₓ/u and
//! ℓ(t) = exp(2∫ Im wₓ dt). The new potential is V₁ = V₀ − 2 Re wₓ, which
//! equals V₀ − (log|u|²)ₓₓ.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::jet::Jet;
use crate::models::{Factored, Potential, Wavefunction};
use crate::quad::gauss_legendre;
use crate::verify::residual::central_stencil;

pub type WaveHandle = Arc<dyn Wavefunction>;
pub type PotentialHandle = Arc<dyn Potential>;
pub type TimeFactor = Arc<dyn Fn(f64) -> Result<f64> + Send + Sync>;

const PANEL: f64 = 0.05;
const GL_ORDER: usize = 16;
const GATE_TOL: f64 = 1e-6;

/// How the time factor ℓ(t) is obtained.
#[derive(Clone)]
pub enum L1Mode {
    /// ℓ ≡ 1, for intermediate steps whose own ℓ is not needed.
    Unit,
    /// A known closed form.
    ClosedForm(TimeFactor),
    /// ℓ(t) = l_ref · exp(2∫_{t_ref}^t Im wₓ(probe, s) ds).
    Integrated(Arc<IntegratedL1>),
}

impl fmt::Debug for L1Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            L1Mode::Unit => write!(f, "Unit"),
            L1Mode::ClosedForm(_) => write!(f, "ClosedForm"),
            L1Mode::Integrated(i) => write!(f, "Integrated(t_ref = {}, probe = {})", i.t_ref, i.probe),
        }
    }
}

/// Cached cumulative integrals of Im wₓ at panel boundaries.
pub struct IntegratedL1 {
    t_ref: f64,
    l_ref: f64,
    probe: f64,
    lo: f64,
    nodes: Vec<f64>,
    cumulative: Vec<f64>,
    ref_value: f64,
    rule: (Vec<f64>, Vec<f64>),
}

/// Im wₓ = Im (log u)ₓₓ from a jet of log u.
fn im_log_xx(log_u: &Jet) -> Option<f64> {
    let r = log_u.deriv(2)?.im;
    r.is_finite().then_some(r)
}

impl IntegratedL1 {
    fn rate(u: &dyn Wavefunction, x: f64, t: f64) -> Result<f64> {
        im_log_xx(&u.log_jet(x, t)?).ok_or(Error::Node { x, t })
    }

    fn panel(&self, u: &dyn Wavefunction, a: f64, b: f64) -> Result<f64> {
        if a == b {
            return Ok(0.0);
        }
        let (x, w) = &self.rule;
        let mid = 0.5 * (a + b);
        let half = 0.5 * (b - a);
        let mut s = 0.0;
        for (xi, wi) in x.iter().zip(w) {
            s += wi * Self::rate(u, self.probe, mid + half * xi)?;
        }
        Ok(half * s)
    }

    /// ∫_lo^t Im wₓ ds
    fn primitive(&self, u: &dyn Wavefunction, t: f64) -> Result<f64> {
        let hi = *self.nodes.last().expect("nonempty");
        if t <= self.lo {
            let n = ((self.lo - t) / PANEL).ceil().max(1.0) as usize;
            let h = (self.lo - t) / n as f64;
            let mut s = 0.0;
            for j in 0..n {
                s -= self.panel(u, t + j as f64 * h, t + (j + 1) as f64 * h)?;
            }
            return Ok(s);
        }
        if t >= hi {
            let n = ((t - hi) / PANEL).ceil().max(1.0) as usize;
            let h = (t - hi) / n as f64;
            let mut s = *self.cumulative.last().expect("nonempty");
            for j in 0..n {
                s += self.panel(u, hi + j as f64 * h, hi + (j + 1) as f64 * h)?;
            }
            return Ok(s);
        }
        let i = self.nodes.partition_point(|&n| n <= t) - 1;
        Ok(self.cumulative[i] + self.panel(u, self.nodes[i], t)?)
    }
}

/// Common surface of first- and second-order transformation operators.
pub trait Transform: Send + Sync {
    /// Overall time factor ℓ(t).
    fn l1_factor(&self, t: f64) -> Result<f64>;

    /// The operator applied along one time slice, given ℓ(t).
    fn apply_row(&self, psi: &[Jet], xs: &[f64], t: f64, l1: f64) -> Result<Vec<Jet>>;

    /// V_new − V₀ at (x, t).
    fn potential_difference(&self, x: f64, t: f64) -> Result<f64>;

    /// V_new − V₀ along one time slice.
    fn potential_difference_row(&self, xs: &[f64], t: f64) -> Result<Vec<f64>> {
        xs.iter().map(|&x| self.potential_difference(x, t)).collect()
    }

    /// |∂ₓ³ log(f/f̄)| for the function whose log-derivative defines the
    /// new potential.
    fn reality_residual(&self, x: f64, t: f64) -> Result<f64>;

    /// Functions the operator annihilates.
    fn kernel(&self) -> Vec<WaveHandle>;

    /// L(Vψ) along one time slice for a potential V that is not a jet: the
    /// x-derivatives of V come from central differences with step
    /// `POTENTIAL_STEP`.
    fn apply_potential_row(&self, v: &dyn Potential, psi: &[Jet], xs: &[f64], t: f64, l1: f64) -> Result<Vec<Jet>> {
        let vj: Vec<Jet> = xs
            .iter()
            .map(|&x| potential_jet(v, x, t, self.order()))
            .collect::<Result<_>>()?;
        let prod: Vec<Jet> = psi.iter().zip(&vj).map(|(p, v)| *p * *v).collect();
        self.apply_row(&prod, xs, t, l1)
    }

    /// Differential order of the operator.
    fn order(&self) -> usize;

    fn apply_jet(&self, psi: &Jet, x: f64, t: f64) -> Result<Jet> {
        let l1 = self.l1_factor(t)?;
        Ok(self.apply_row(std::slice::from_ref(psi), &[x], t, l1)?.remove(0))
    }
}

/// The image Lψ of a wavefunction.
#[derive(Clone)]
pub struct Transformed<T: Transform + Clone> {
    op: T,
    psi: WaveHandle,
}

impl<T: Transform + Clone> Wavefunction for Transformed<T> {
    fn jet(&self, x: f64, t: f64) -> Result<Jet> {
        self.op.apply_jet(&self.psi.jet(x, t)?, x, t)
    }

    fn row(&self, xs: &[f64], t: f64) -> Result<Vec<Jet>> {
        let l1 = self.op.l1_factor(t)?;
        self.op.apply_row(&self.psi.row(xs, t)?, xs, t, l1)
    }
}

/// V₀ + A as a potential handle.
#[derive(Clone)]
pub struct TransformedPotential<T: Transform + Clone> {
    op: T,
    v0: PotentialHandle,
}

impl<T: Transform + Clone> Potential for TransformedPotential<T> {
    fn value(&self, x: f64, t: f64) -> Result<f64> {
        Ok(self.v0.value(x, t)? + self.op.potential_difference(x, t)?)
    }

    fn row(&self, xs: &[f64], t: f64) -> Result<Vec<f64>> {
        let v0 = self.v0.row(xs, t)?;
        let a = self.op.potential_difference_row(xs, t)?;
        Ok(v0.iter().zip(&a).map(|(v, a)| v + a).collect())
    }
}

/// First-order transformation operator L = ℓ(t)(∂ − uₓ/u).
#[derive(Clone)]
pub struct DarbouxOperator {
    u: WaveHandle,
    mode: L1Mode,
    label: String,
}

impl fmt::Debug for DarbouxOperator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DarbouxOperator")
            .field("label", &self.label)
            .field("mode", &self.mode)
            .finish()
    }
}

impl DarbouxOperator {
    pub fn unit(u: WaveHandle, label: impl Into<String>) -> Self {
        DarbouxOperator {
            u,
            mode: L1Mode::Unit,
            label: label.into(),
        }
    }

    pub fn closed_form(u: WaveHandle, l1: TimeFactor, label: impl Into<String>) -> Self {
        DarbouxOperator {
            u,
            mode: L1Mode::ClosedForm(l1),
            label: label.into(),
        }
    }

    /// Integrated time factor over `window`, anchored at ℓ(t_ref) = l_ref.
    ///
    /// Im(log u)ₓₓ must be x-independent; this is checked across `probes`
    /// at 21 instants of the window before anything is integrated.
    pub fn integrated(
        u: WaveHandle,
        window: (f64, f64),
        t_ref: f64,
        l_ref: f64,
        probes: &[f64],
        label: impl Into<String>,
    ) -> Result<Self> {
        let (lo, hi) = window;
        if !(lo < hi) || probes.is_empty() {
            return Err(Error::Config("integrated time factor needs a window and probe points".into()));
        }
        x_independence_gate(u.as_ref(), window, probes)?;
        // integrate at the probe where |u| is largest
        let mut probe = probes[0];
        let mut best = f64::NEG_INFINITY;
        for &x in probes {
            let m = u.log_jet(x, t_ref)?.value().re;
            if m > best {
                best = m;
                probe = x;
            }
        }
        let n = ((hi - lo) / PANEL).ceil().max(1.0) as usize;
        let nodes: Vec<f64> = (0..=n).map(|j| lo + (hi - lo) * j as f64 / n as f64).collect();
        let mut table = IntegratedL1 {
            t_ref,
            l_ref,
            probe,
            lo,
            nodes: nodes.clone(),
            cumulative: vec![0.0; nodes.len()],
            ref_value: 0.0,
            rule: gauss_legendre(GL_ORDER),
        };
        for j in 1..nodes.len() {
            table.cumulative[j] = table.cumulative[j - 1] + table.panel(u.as_ref(), nodes[j - 1], nodes[j])?;
        }
        table.ref_value = table.primitive(u.as_ref(), t_ref)?;
        Ok(DarbouxOperator {
            u,
            mode: L1Mode::Integrated(Arc::new(table)),
            label: label.into(),
        })
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn mode(&self) -> &L1Mode {
        &self.mode
    }

    pub fn transformation_function(&self) -> &WaveHandle {
        &self.u
    }

    /// The same operator built on c·u.
    pub fn rescaled(&self, c: Complex64) -> Self {
        DarbouxOperator {
            u: Arc::new(Scaled { inner: self.u.clone(), c }),
            ..self.clone()
        }
    }

    /// ℓ(t)
    pub fn l1_factor(&self, t: f64) -> Result<f64> {
        match &self.mode {
            L1Mode::Unit => Ok(1.0),
            L1Mode::ClosedForm(f) => f(t),
            L1Mode::Integrated(tab) => {
                let p = tab.primitive(self.u.as_ref(), t)?;
                Ok(tab.l_ref * (2.0 * (p - tab.ref_value)).exp())
            }
        }
    }

    /// w = uₓ/u as a jet (order one less than u's).
    pub fn w_jet(&self, x: f64, t: f64) -> Result<Jet> {
        Ok(self.u.log_jet(x, t)?.differentiate())
    }

    /// Lψ at (x, t) for a jet ψ.
    pub fn apply_l(&self, psi: &Jet, x: f64, t: f64) -> Result<Jet> {
        let w = self.w_jet(x, t)?;
        Ok(apply_l_with(psi, &w, self.l1_factor(t)?))
    }

    /// L⁺φ = −ℓ(φₓ + w̄φ)
    pub fn apply_ldag(&self, phi: &Jet, x: f64, t: f64) -> Result<Jet> {
        let w = self.w_jet(x, t)?;
        Ok(apply_ldag_with(phi, &w, self.l1_factor(t)?))
    }

    /// A = V₁ − V₀ = −(log|u|²)ₓₓ
    pub fn potential_difference(&self, x: f64, t: f64) -> Result<f64> {
        potential_difference_of(&self.u.log_jet(x, t)?, x, t)
    }

    /// |∂ₓ³ log(u/ū)| = 2|Im wₓₓ|
    pub fn reality_residual(&self, x: f64, t: f64) -> Result<f64> {
        let w = self.w_jet(x, t)?;
        let wxx = w.deriv(2).ok_or_else(|| Error::Shape("transformation function jet too short".into()))?;
        Ok(2.0 * wxx.im.abs())
    }

    /// The transformed wavefunction Lψ.
    pub fn transform(&self, psi: WaveHandle) -> Transformed<DarbouxOperator> {
        Transformed { op: self.clone(), psi }
    }

    /// V₁ = V₀ + A.
    pub fn new_potential(&self, v0: PotentialHandle) -> TransformedPotential<DarbouxOperator> {
        TransformedPotential {
            op: self.clone(),
            v0,
        }
    }
}

impl Transform for DarbouxOperator {
    fn l1_factor(&self, t: f64) -> Result<f64> {
        DarbouxOperator::l1_factor(self, t)
    }

    fn apply_row(&self, psi: &[Jet], xs: &[f64], t: f64, l1: f64) -> Result<Vec<Jet>> {
        let logs = self.u.log_row(xs, t)?;
        Ok(logs
            .iter()
            .zip(psi)
            .map(|(l, p)| apply_l_with(p, &l.differentiate(), l1))
            .collect())
    }

    fn potential_difference(&self, x: f64, t: f64) -> Result<f64> {
        DarbouxOperator::potential_difference(self, x, t)
    }

    fn potential_difference_row(&self, xs: &[f64], t: f64) -> Result<Vec<f64>> {
        xs.iter()
            .zip(self.u.log_row(xs, t)?)
            .map(|(&x, l)| potential_difference_of(&l, x, t))
            .collect()
    }

    fn reality_residual(&self, x: f64, t: f64) -> Result<f64> {
        DarbouxOperator::reality_residual(self, x, t)
    }

    fn kernel(&self) -> Vec<WaveHandle> {
        vec![self.u.clone()]
    }

    fn order(&self) -> usize {
        1
    }
}

fn log_derivative(u: &Jet, x: f64, t: f64) -> Result<Jet> {
    let v = u.value();
    if !(v.norm() > 0.0) || !v.norm().is_finite() {
        return Err(Error::Node { x, t });
    }
    let w = u.differentiate() / *u;
    if !w.is_finite() {
        return Err(Error::Node { x, t });
    }
    Ok(w)
}

pub(crate) fn apply_l_with(psi: &Jet, w: &Jet, l1: f64) -> Jet {
    (psi.differentiate() - *w * *psi) * l1
}

pub(crate) fn apply_ldag_with(phi: &Jet, w: &Jet, l1: f64) -> Jet {
    (phi.differentiate() + w.conj() * *phi) * (-l1)
}

/// −(log|u|²)ₓₓ = −2 Re (log u)ₓₓ
fn potential_difference_of(log_u: &Jet, x: f64, t: f64) -> Result<f64> {
    let a = -2.0 * log_u.deriv(2).ok_or_else(|| Error::Shape("jet too short".into()))?.re;
    if !a.is_finite() {
        return Err(Error::Node { x, t });
    }
    Ok(a)
}

fn x_independence_gate(u: &dyn Wavefunction, window: (f64, f64), probes: &[f64]) -> Result<()> {
    let (lo, hi) = window;
    for j in 0..=20 {
        let t = lo + (hi - lo) * j as f64 / 20.0;
        let logs = u.log_row(probes, t)?;
        let peak = logs.iter().map(|l| l.value().re).fold(f64::NEG_INFINITY, f64::max);
        // ignore probes where |u| is below 1e-8 of the largest
        let rates: Vec<f64> = logs
            .iter()
            .filter(|l| l.value().re > peak - 8.0 * std::f64::consts::LN_10)
            .filter_map(im_log_xx)
            .collect();
        if rates.is_empty() {
            return Err(Error::Node { x: probes[0], t });
        }
        let max = rates.iter().cloned().fold(f64::MIN, f64::max);
        let min = rates.iter().cloned().fold(f64::MAX, f64::min);
        let scale = 1.0 + max.abs().max(min.abs());
        if (max - min) / scale > GATE_TOL {
            return Err(Error::XDependence { t, spread: max - min });
        }
    }
    Ok(())
}

/// The handle c·u for a constant c.
pub fn scaled_handle(u: WaveHandle, c: Complex64) -> WaveHandle {
    Arc::new(Scaled { inner: u, c })
}

/// c·u for a constant c.
struct Scaled {
    inner: WaveHandle,
    c: Complex64,
}

impl Wavefunction for Scaled {
    fn jet(&self, x: f64, t: f64) -> Result<Jet> {
        Ok(self.inner.jet(x, t)? * self.c)
    }

    fn row(&self, xs: &[f64], t: f64) -> Result<Vec<Jet>> {
        Ok(self.inner.row(xs, t)?.into_iter().map(|j| j * self.c).collect())
    }

    fn factored_jet(&self, x: f64, t: f64) -> Result<Factored> {
        Ok(self.inner.factored_jet(x, t)?.times(self.c))
    }

    fn factored_row(&self, xs: &[f64], t: f64) -> Result<Vec<Factored>> {
        Ok(self.inner.factored_row(xs, t)?.into_iter().map(|f| f.times(self.c)).collect())
    }
}

const POTENTIAL_STEP: f64 = 1e-3;

/// Jet of V at x up to `order` derivatives, by eighth-order central
/// differences on the nodes x + kh, k = −4..4.
fn potential_jet(v: &dyn Potential, x: f64, t: f64, order: usize) -> Result<Jet> {
    let h = POTENTIAL_STEP;
    let v0 = v.value(x, t)?;
    let mut d = vec![Complex64::new(v0, 0.0)];
    let mut vals = [0.0; 9];
    for k in -4i32..=4 {
        vals[(k + 4) as usize] = if k == 0 { v0 } else { v.value(x + k as f64 * h, t)? };
    }
    let first = [1.0 / 280.0, -4.0 / 105.0, 1.0 / 5.0, -4.0 / 5.0, 0.0, 4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0];
    let second = [-1.0 / 560.0, 8.0 / 315.0, -1.0 / 5.0, 8.0 / 5.0, -205.0 / 72.0, 8.0 / 5.0, -1.0 / 5.0, 8.0 / 315.0, -1.0 / 560.0];
    let dot = |w: &[f64; 9]| w.iter().zip(&vals).map(|(w, v)| w * v).sum::<f64>();
    d.push(Complex64::new(dot(&first) / h, 0.0));
    if order >= 2 {
        d.push(Complex64::new(dot(&second) / (h * h), 0.0));
    }
    Ok(Jet::from_derivs(&d))
}

/// V + constant, used for negative controls.
pub struct ShiftedPotential {
    pub base: PotentialHandle,
    pub shift: f64,
}

impl Potential for ShiftedPotential {
    fn value(&self, x: f64, t: f64) -> Result<f64> {
        Ok(self.base.value(x, t)? + self.shift)
    }

    fn row(&self, xs: &[f64], t: f64) -> Result<Vec<f64>> {
        Ok(self.base.row(xs, t)?.into_iter().map(|v| v + self.shift).collect())
    }
}

/// W(u₁, u₂) = u₁u₂' − u₁'u₂ as a jet-valued handle.
struct WronskianFn {
    u1: WaveHandle,
    u2: WaveHandle,
}

fn wronskian2(a: &Jet, b: &Jet) -> Jet {
    *a * b.differentiate() - a.differentiate() * *b
}

/// W(e^f·a, e^g·b) = e^{f+g}(a(b' + g'b) − (a' + f'a)b)
fn factored_wronskian(a: Factored, b: Factored) -> Factored {
    let da = a.rest.differentiate() + a.expo.differentiate() * a.rest;
    let db = b.rest.differentiate() + b.expo.differentiate() * b.rest;
    Factored {
        expo: a.expo + b.expo,
        rest: a.rest * db - da * b.rest,
    }
}

impl Wavefunction for WronskianFn {
    fn jet(&self, x: f64, t: f64) -> Result<Jet> {
        Ok(wronskian2(&self.u1.jet(x, t)?, &self.u2.jet(x, t)?))
    }

    fn row(&self, xs: &[f64], t: f64) -> Result<Vec<Jet>> {
        let a = self.u1.row(xs, t)?;
        let b = self.u2.row(xs, t)?;
        Ok(a.iter().zip(&b).map(|(a, b)| wronskian2(a, b)).collect())
    }

    fn factored_jet(&self, x: f64, t: f64) -> Result<Factored> {
        Ok(factored_wronskian(self.u1.factored_jet(x, t)?, self.u2.factored_jet(x, t)?))
    }

    fn factored_row(&self, xs: &[f64], t: f64) -> Result<Vec<Factored>> {
        let a = self.u1.factored_row(xs, t)?;
        let b = self.u2.factored_row(xs, t)?;
        Ok(a.into_iter().zip(b).map(|(a, b)| factored_wronskian(a, b)).collect())
    }
}

/// Second-order transformation: a first step with u₁ (ℓ ≡ 1), then a second
/// step whose transformation function is v = (∂ − u₁ₓ/u₁)u₂.
///
/// The composition (∂ − vₓ/v)(∂ − u₁ₓ/u₁) is evaluated in its Wronskian form
/// W(u₁,u₂,ψ)/W(u₁,u₂), identical to the two steps but free of the poles the
/// intermediate step has at zeros of u₁. The overall time factor comes from
/// Im(log W(u₁,u₂))ₓₓ and the new potential is V₀ − (log|W|²)ₓₓ.
#[derive(Clone)]
pub struct Chain2 {
    first: DarbouxOperator,
    u2: WaveHandle,
    outer: DarbouxOperator,
}

impl Chain2 {
    pub fn new(
        u1: WaveHandle,
        u2: WaveHandle,
        window: (f64, f64),
        t_ref: f64,
        probes: &[f64],
        label: impl Into<String>,
    ) -> Result<Self> {
        let label = label.into();
        let mut degenerate = true;
        for &x in probes {
            let a = u1.scaled_jet(x, t_ref)?.1;
            let b = u2.scaled_jet(x, t_ref)?.1;
            let w = wronskian2(&a, &b).value().norm();
            let scale = (a.value() * b.d(1)).norm() + (a.d(1) * b.value()).norm();
            if w > 1e-12 * scale {
                degenerate = false;
            }
        }
        if degenerate {
            return Err(Error::Coincident);
        }
        let wr: WaveHandle = Arc::new(WronskianFn {
            u1: u1.clone(),
            u2: u2.clone(),
        });
        let outer = DarbouxOperator::integrated(wr, window, t_ref, 1.0, probes, format!("{label} (outer)"))?;
        Ok(Chain2 {
            first: DarbouxOperator::unit(u1, format!("{label} (first step)")),
            u2,
            outer,
        })
    }

    /// The intermediate operator of the first step (ℓ ≡ 1).
    pub fn first_step(&self) -> &DarbouxOperator {
        &self.first
    }

    /// Transformation function of the second step, v = (∂ − u₁ₓ/u₁)u₂.
    pub fn second_function(&self) -> Transformed<DarbouxOperator> {
        self.first.transform(self.u2.clone())
    }

    /// W(u₁, u₂), whose log-derivatives define the composed step.
    pub fn wronskian_function(&self) -> &WaveHandle {
        self.outer.transformation_function()
    }

    pub fn l1_factor(&self, t: f64) -> Result<f64> {
        self.outer.l1_factor(t)
    }

    /// A₁ + A₂ = −(log|W|²)ₓₓ
    pub fn potential_difference(&self, x: f64, t: f64) -> Result<f64> {
        self.outer.potential_difference(x, t)
    }

    /// Imaginary part the composed potential would carry without the time
    /// factor correction, measured against the probe: zero iff W satisfies
    /// the reality condition.
    pub fn imaginary_potential(&self, x: f64, t: f64) -> Result<f64> {
        let tab = match &self.outer.mode {
            L1Mode::Integrated(tab) => tab.clone(),
            _ => unreachable!("outer step is always integrated"),
        };
        let here = im_log_xx(&self.outer.u.log_jet(x, t)?).ok_or(Error::Node { x, t })?;
        let probe = im_log_xx(&self.outer.u.log_jet(tab.probe, t)?).ok_or(Error::Node { x: tab.probe, t })?;
        Ok(-2.0 * (here - probe))
    }

    pub fn reality_residual(&self, x: f64, t: f64) -> Result<f64> {
        self.outer.reality_residual(x, t)
    }

    /// W(u₁,u₂,ψ)/W(u₁,u₂)·ℓ; the ratio is invariant under constant
    /// rescaling of u₁ and u₂, so their scaled jets are used directly.
    fn apply_with(u1: &Jet, u2: &Jet, psi: &Jet, l1: f64, x: f64, t: f64) -> Result<Jet> {
        let (a1, b1, p1) = (u1.differentiate(), u2.differentiate(), psi.differentiate());
        let (a2, b2, p2) = (a1.differentiate(), b1.differentiate(), p1.differentiate());
        let w = *u1 * b1 - a1 * *u2;
        if !(w.value().norm() > 0.0) {
            return Err(Error::Node { x, t });
        }
        let w3 = *u1 * (b1 * p2 - b2 * p1) - *u2 * (a1 * p2 - a2 * p1) + *psi * (a1 * b2 - a2 * b1);
        Ok(w3 / w * l1)
    }

    /// L⁽²⁾ψ at (x, t).
    pub fn apply(&self, psi: &Jet, x: f64, t: f64) -> Result<Jet> {
        let u1 = self.first.u.scaled_jet(x, t)?.1;
        let u2 = self.u2.scaled_jet(x, t)?.1;
        Self::apply_with(&u1, &u2, psi, self.l1_factor(t)?, x, t)
    }

    /// The same map evaluated literally as two first-order steps; singular
    /// at zeros of u₁, used to cross-check [`Chain2::apply`].
    pub fn apply_stepwise(&self, psi: &Jet, x: f64, t: f64) -> Result<Jet> {
        let psi1 = self.first.apply_l(psi, x, t)?;
        let v = self.first.apply_l(&self.u2.jet(x, t)?, x, t)?;
        let wv = log_derivative(&v, x, t)?;
        Ok(apply_l_with(&psi1, &wv, self.l1_factor(t)?))
    }

    pub fn transform(&self, psi: WaveHandle) -> Transformed<Chain2> {
        Transformed { op: self.clone(), psi }
    }

    pub fn new_potential(&self, v0: PotentialHandle) -> TransformedPotential<Chain2> {
        TransformedPotential {
            op: self.clone(),
            v0,
        }
    }
}

impl Transform for Chain2 {
    fn l1_factor(&self, t: f64) -> Result<f64> {
        Chain2::l1_factor(self, t)
    }

    fn apply_row(&self, psi: &[Jet], xs: &[f64], t: f64, l1: f64) -> Result<Vec<Jet>> {
        let a = self.first.u.scaled_row(xs, t)?;
        let b = self.u2.scaled_row(xs, t)?;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| Chain2::apply_with(&a[i].1, &b[i].1, &psi[i], l1, x, t))
            .collect()
    }

    fn potential_difference(&self, x: f64, t: f64) -> Result<f64> {
        Chain2::potential_difference(self, x, t)
    }

    fn potential_difference_row(&self, xs: &[f64], t: f64) -> Result<Vec<f64>> {
        self.outer.potential_difference_row(xs, t)
    }

    fn reality_residual(&self, x: f64, t: f64) -> Result<f64> {
        Chain2::reality_residual(self, x, t)
    }

    fn kernel(&self) -> Vec<WaveHandle> {
        vec![self.first.u.clone(), self.u2.clone()]
    }

    fn order(&self) -> usize {
        2
    }
}

/// Two-component state Ψ = ψ₊e₊ + ψ₋e₋ of the matrix equation.
#[derive(Clone)]
pub struct SuperState {
    pub plus_component: WaveHandle,
    pub minus_component: WaveHandle,
}

impl SuperState {
    /// Ψ₊ = ψe₊ (minus component zero).
    pub fn plus(psi: WaveHandle) -> Self {
        SuperState {
            plus_component: psi,
            minus_component: Arc::new(|_x: f64, _t: f64| Ok(Jet::real(0.0))),
        }
    }

    /// Ψ₋ = (Lψ)e₋ (plus component zero).
    pub fn minus(op: &DarbouxOperator, psi: WaveHandle) -> Self {
        SuperState {
            plus_component: Arc::new(|_x: f64, _t: f64| Ok(Jet::real(0.0))),
            minus_component: Arc::new(op.transform(psi)),
        }
    }
}

/// Result of the superalgebra check.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AlphaEstimate {
    pub alpha: f64,
    pub alpha_imag: f64,
    pub variance: f64,
    /// max |Q²Ψ| and |(Q⁺)²Ψ| over all points.
    pub q_squared: f64,
    pub points: usize,
}

/// Estimate α in {Q, Q⁺} = S − αI.
///
/// {Q, Q⁺} is applied as the operator products L⁺L and LL⁺; S is evaluated
/// from its expanded second-order form, so the comparison is not circular.
pub fn anticommutator_check(
    op: &DarbouxOperator,
    states: &[SuperState],
    xs: &[f64],
    ts: &[f64],
) -> Result<AlphaEstimate> {
    let mut num = Complex64::default();
    let mut den = 0.0;
    let mut pairs: Vec<(Complex64, Complex64)> = Vec::new();
    let mut q2 = 0.0f64;
    for &t in ts {
        let l1 = op.l1_factor(t)?;
        let logs = op.u.log_row(xs, t)?;
        for st in states {
            let plus = st.plus_component.row(xs, t)?;
            let minus = st.minus_component.row(xs, t)?;
            for i in 0..xs.len() {
                let w = logs[i].differentiate();
                let (p, m) = (plus[i], minus[i]);
                // {Q,Q⁺}Ψ = (L⁺Lψ₊, LL⁺ψ₋)
                let top = apply_ldag_with(&apply_l_with(&p, &w, l1), &w, l1).value();
                let bottom = apply_l_with(&apply_ldag_with(&m, &w, l1), &w, l1).value();
                // QΨ = (0, Lψ₊), Q(QΨ) = (0, L·0); likewise for Q⁺
                let zero = Jet::real(0.0);
                let qq = apply_l_with(&zero, &w, l1).value().norm();
                let qdqd = apply_ldag_with(&zero, &w, l1).value().norm();
                q2 = q2.max(qq).max(qdqd);
                let wc = w.conj();
                let (w0, w1) = (w.value(), w.d(1));
                let (wc0, wc1) = (wc.value(), wc.d(1));
                let s1 = -l1 * l1 * (p.d(2) + (wc0 - w0) * p.d(1) - w1 * p.value() - wc0 * w0 * p.value());
                let s2 = -l1 * l1 * (m.d(2) + (wc0 - w0) * m.d(1) + wc1 * m.value() - w0 * wc0 * m.value());
                for (psi, r) in [(p.value(), top - s1), (m.value(), bottom - s2)] {
                    num += psi.conj() * r;
                    den += psi.norm_sqr();
                    pairs.push((psi, r));
                }
            }
        }
    }
    if !(den > 0.0) {
        return Err(Error::Shape("anticommutator check needs nonzero states".into()));
    }
    let alpha = -num / den;
    let variance = pairs.iter().map(|(p, r)| (r + alpha * p).norm_sqr()).sum::<f64>() / den;
    Ok(AlphaEstimate {
        alpha: alpha.re,
        alpha_imag: alpha.im,
        variance,
        q_squared: q2,
        points: pairs.len(),
    })
}

/// max |[L(i∂ₜ − h₀) − (i∂ₜ − h₁)L]ψ| / max |Lψ| over the grid, with time
/// derivatives by eighth-order central differences of step `dt`.
pub fn intertwining_residual(
    op: &dyn Transform,
    h0: &dyn Potential,
    h1: &dyn Potential,
    psi: &dyn Wavefunction,
    xs: &[f64],
    ts: &[f64],
    dt: f64,
) -> Result<f64> {
    let weights = central_stencil(8)?;
    let i = Complex64::i();
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for &t in ts {
        let l1 = op.l1_factor(t)?;
        let ps = psi.row(xs, t)?;
        let mut psi_t = vec![Jet::real(0.0); xs.len()];
        let mut lpsi_t = vec![Complex64::default(); xs.len()];
        for &(k, c) in &weights {
            let s = t + k * dt;
            let pk = psi.row(xs, s)?;
            let lk = op.apply_row(&pk, xs, s, op.l1_factor(s)?)?;
            for j in 0..xs.len() {
                psi_t[j] = psi_t[j] + pk[j] * (c / dt);
                lpsi_t[j] += lk[j].value() * (c / dt);
            }
        }
        // L(iψₜ + ψₓₓ) as jets; L(V₀ψ) = V₀·Lψ + ℓ·V₀ₓ·ψ for first order
        let f: Vec<Jet> = ps
            .iter()
            .zip(&psi_t)
            .map(|(p, pt)| *pt * i + p.differentiate().differentiate())
            .collect();
        let lf = op.apply_row(&f, xs, t, l1)?;
        let lp = op.apply_row(&ps, xs, t, l1)?;
        let lv0 = op.apply_potential_row(h0, &ps, xs, t, l1)?;
        for (j, &x) in xs.iter().enumerate() {
            let lhs = lf[j].value() - lv0[j].value();
            let rhs = i * lpsi_t[j] + lp[j].d(2) - h1.value(x, t)? * lp[j].value();
            num = num.max((lhs - rhs).norm());
            den = den.max(lp[j].value().norm());
        }
    }
    if !(den > 0.0) {
        return Err(Error::Shape("test function is annihilated on the whole grid".into()));
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn handle<F: Fn(f64, f64) -> Result<Jet> + Send + Sync + 'static>(f: F) -> WaveHandle {
        Arc::new(f)
    }

    #[test]
    fn real_function_has_unit_time_factor() {
        let u = handle(|x, _t| Ok((Jet::var(x) * 0.3).cosh()));
        let op = DarbouxOperator::integrated(u, (0.0, 1.0), 0.0, 1.0, &[-1.0, 0.0, 2.0], "cosh").unwrap();
        assert!((op.l1_factor(0.7).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn quadratic_phase_time_factor() {
        // phase a(t)x² with a = t²/4: Im(log u)ₓₓ = t²/2, ℓ = exp(t³/3)
        let u = handle(|x, t| {
            let xj = Jet::var(x);
            Ok((xj * xj * Complex64::new(-0.5, t * t / 4.0) + xj * Complex64::new(0.0, t)).exp())
        });
        let op = DarbouxOperator::integrated(u, (0.0, 2.0), 0.0, 1.0, &[-1.0, 0.5, 3.0], "q").unwrap();
        for t in [0.3, 1.0, 1.9, 2.4] {
            let want = (t * t * t / 3.0f64).exp();
            assert!((op.l1_factor(t).unwrap() / want - 1.0).abs() < 1e-12, "t = {t}");
        }
    }

    #[test]
    fn x_dependent_phase_fails_gate() {
        let u = handle(|x, t| {
            let xj = Jet::var(x);
            Ok((xj * xj * xj * Complex64::new(0.0, 1.0 + t)).exp())
        });
        let err = DarbouxOperator::integrated(u, (0.0, 1.0), 0.0, 1.0, &[-1.0, 0.5, 1.0], "cubic").unwrap_err();
        assert!(matches!(err, Error::XDependence { .. }));
    }

    #[test]
    fn kernel_and_potential_of_gaussian() {
        let u = handle(|x, _t| {
            let xj = Jet::var(x);
            Ok((xj * xj * Complex64::new(-0.5, 0.2)).exp())
        });
        let op = DarbouxOperator::unit(u.clone(), "g");
        for x in [-2.0, 0.1, 1.5] {
            let k = op.apply_l(&u.jet(x, 0.0).unwrap(), x, 0.0).unwrap();
            assert!(k.value().norm() < 1e-15);
            assert!((op.potential_difference(x, 0.0).unwrap() - 2.0).abs() < 1e-13);
            assert!(op.reality_residual(x, 0.0).unwrap() < 1e-13);
        }
    }

    #[test]
    fn cosh_potential_difference() {
        let op = DarbouxOperator::unit(handle(|x, _t| Ok(Jet::var(x).cosh())), "cosh");
        for x in [-1.0f64, 0.0, 0.4, 2.0] {
            let want = -2.0 / x.cosh().powi(2);
            assert!((op.potential_difference(x, 0.0).unwrap() - want).abs() < 1e-14);
        }
    }

    #[test]
    fn cubic_phase_flags_reality() {
        let op = DarbouxOperator::unit(
            handle(|x, _t| {
                let xj = Jet::var(x);
                Ok((xj * xj * xj * Complex64::i()).exp())
            }),
            "cubic",
        );
        assert!((op.reality_residual(0.7, 0.0).unwrap() - 12.0).abs() < 1e-12);
    }

    #[test]
    fn adjoint_annihilates_reciprocal_conjugate() {
        let u = handle(|x, _t| {
            let xj = Jet::var(x);
            Ok((xj * xj * Complex64::new(-0.3, 0.7) + xj * 0.2).exp())
        });
        let op = DarbouxOperator::unit(u.clone(), "g");
        let x = 0.8;
        let inv = u.jet(x, 0.0).unwrap().conj().recip();
        assert!(op.apply_ldag(&inv, x, 0.0).unwrap().value().norm() < 1e-14);
    }

    #[test]
    fn chain_of_identical_functions_is_coincident() {
        let u = handle(|x, _t| Ok((Jet::var(x) * Jet::var(x) * -0.5).exp()));
        let err = Chain2::new(u.clone(), u, (0.0, 1.0), 0.0, &[-1.0, 0.0, 1.0], "same").err().unwrap();
        assert_eq!(err, Error::Coincident);
    }

    #[test]
    fn wronskian_form_matches_two_steps() {
        let u1 = handle(|x, _t| Ok((Jet::var(x) * Jet::var(x) * -0.5).exp()));
        let u2 = handle(|x, _t| Ok((Jet::var(x) * Jet::var(x) * -0.5).exp() * Jet::var(x)));
        let chain = Chain2::new(u1, u2, (0.0, 1.0), 0.0, &[-1.0, 0.3, 1.0], "hermite").unwrap();
        for x in [-1.3, 0.4, 2.2] {
            let psi = (Jet::var(x) * Jet::var(x) * -0.5).exp() * (Jet::var(x) * Jet::var(x) + -0.5);
            let a = chain.apply(&psi, x, 0.0).unwrap();
            let b = chain.apply_stepwise(&psi, x, 0.0).unwrap();
            for k in 0..=2 {
                assert!((a.d(k) - b.d(k)).norm() < 1e-12 * (1.0 + a.d(k).norm()));
            }
        }
    }
}
