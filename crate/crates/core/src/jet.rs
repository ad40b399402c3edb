//! Truncated Taylor jets in the spatial variable.
//!
//! A [`Jet`] carries `f(x0), f'(x0), ..., f^{(ORDER)}(x0)` (stored as Taylor
//! coefficients `f^{(k)}/k!`). Arithmetic follows the Leibniz rule and
//! composition with scalar functions uses their derivative stacks, so every
//! closed-form family gets exact x-derivatives up to `ORDER` without symbolic
//! differentiation. The number of valid derivatives shrinks when a jet is
//! differentiated and is tracked in `order`.

use std::ops::{Add, Div, Mul, Neg, Sub};

use num_complex::Complex64;

pub const ORDER: usize = 4;
const LEN: usize = ORDER + 1;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
const ONE: Complex64 = Complex64 { re: 1.0, im: 0.0 };

const FACT: [f64; LEN] = [1.0, 1.0, 2.0, 6.0, 24.0];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    c: [Complex64; LEN],
    order: usize,
}

impl Jet {
    pub fn constant(v: Complex64) -> Self {
        let mut c = [ZERO; LEN];
        c[0] = v;
        Jet { c, order: ORDER }
    }

    pub fn real(v: f64) -> Self {
        Self::constant(Complex64::new(v, 0.0))
    }

    /// The independent variable at `x0`.
    pub fn var(x0: f64) -> Self {
        let mut j = Self::real(x0);
        j.c[1] = ONE;
        j
    }

    /// Build from derivative values `f, f', f'', ...`.
    pub fn from_derivs(d: &[Complex64]) -> Self {
        let mut c = [ZERO; LEN];
        let n = d.len().min(LEN);
        for k in 0..n {
            c[k] = d[k] / FACT[k];
        }
        Jet { c, order: n - 1 }
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn value(&self) -> Complex64 {
        self.c[0]
    }

    /// `k`-th derivative; `None` past the valid order.
    pub fn deriv(&self, k: usize) -> Option<Complex64> {
        (k <= self.order).then(|| self.c[k] * FACT[k])
    }

    /// k-th derivative, panicking past the valid order. Internal use where
    /// the order is known statically.
    pub(crate) fn d(&self, k: usize) -> Complex64 {
        self.deriv(k)
            .unwrap_or_else(|| panic!("jet derivative {k} requested beyond order {}", self.order))
    }

    /// Spatial derivative of the jet.
    pub fn differentiate(&self) -> Self {
        let mut c = [ZERO; LEN];
        for k in 0..ORDER {
            c[k] = self.c[k + 1] * (k + 1) as f64;
        }
        Jet {
            c,
            order: self.order.saturating_sub(1),
        }
    }

    pub fn conj(&self) -> Self {
        let mut out = *self;
        for v in out.c.iter_mut() {
            *v = v.conj();
        }
        out
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let mut out = *self;
        for v in out.c.iter_mut().take(self.order + 1) {
            *v *= s;
        }
        out
    }

    pub fn truncate(mut self, order: usize) -> Self {
        self.order = self.order.min(order);
        for v in self.c.iter_mut().skip(self.order + 1) {
            *v = ZERO;
        }
        self
    }

    /// `f(self)` for a scalar `f` given its derivatives `f^{(k)}` at `self.value()`.
    pub fn compose(&self, f: &[Complex64]) -> Self {
        let order = self.order.min(f.len() - 1);
        let mut h = *self;
        h.c[0] = ZERO;
        let mut out = [ZERO; LEN];
        out[0] = f[0];
        let mut pow = Jet::real(1.0);
        for (k, fk) in f.iter().enumerate().take(order + 1).skip(1) {
            pow = pow * h;
            let coef = fk / FACT[k];
            for i in 0..=order {
                out[i] += pow.c[i] * coef;
            }
        }
        Jet { c: out, order }
    }

    pub fn exp(&self) -> Self {
        let e = self.c[0].exp();
        self.compose(&[e; LEN])
    }

    pub fn ln(&self) -> Self {
        let z = self.c[0];
        let r = 1.0 / z;
        self.compose(&[z.ln(), r, -r * r, 2.0 * r * r * r, -6.0 * r * r * r * r])
    }

    pub fn recip(&self) -> Self {
        let r = 1.0 / self.c[0];
        let r2 = r * r;
        self.compose(&[r, -r2, 2.0 * r2 * r, -6.0 * r2 * r2, 24.0 * r2 * r2 * r])
    }

    /// Principal-branch power `self^a`.
    pub fn powf(&self, a: f64) -> Self {
        let z = self.c[0];
        let mut f = [ZERO; LEN];
        let mut coef = 1.0;
        for (k, fk) in f.iter_mut().enumerate() {
            *fk = z.powf(a - k as f64) * coef;
            coef *= a - k as f64;
        }
        self.compose(&f)
    }

    pub fn cosh(&self) -> Self {
        let (c, s) = (self.c[0].cosh(), self.c[0].sinh());
        self.compose(&[c, s, c, s, c])
    }

    pub fn is_finite(&self) -> bool {
        self.c
            .iter()
            .take(self.order + 1)
            .all(|v| v.re.is_finite() && v.im.is_finite())
    }
}

impl Add for Jet {
    type Output = Jet;
    fn add(self, rhs: Jet) -> Jet {
        let mut c = [ZERO; LEN];
        for k in 0..LEN {
            c[k] = self.c[k] + rhs.c[k];
        }
        Jet {
            c,
            order: self.order.min(rhs.order),
        }
        .truncate(ORDER)
    }
}

impl Sub for Jet {
    type Output = Jet;
    fn sub(self, rhs: Jet) -> Jet {
        self + (-rhs)
    }
}

impl Neg for Jet {
    type Output = Jet;
    fn neg(self) -> Jet {
        self.scale(-ONE)
    }
}

impl Mul for Jet {
    type Output = Jet;
    fn mul(self, rhs: Jet) -> Jet {
        let order = self.order.min(rhs.order);
        let mut c = [ZERO; LEN];
        for i in 0..=order {
            for j in 0..=(order - i) {
                c[i + j] += self.c[i] * rhs.c[j];
            }
        }
        Jet { c, order }
    }
}

impl Div for Jet {
    type Output = Jet;
    #[allow(clippy::suspicious_arithmetic_impl)]
    fn div(self, rhs: Jet) -> Jet {
        self * rhs.recip()
    }
}

impl Mul<Complex64> for Jet {
    type Output = Jet;
    fn mul(self, rhs: Complex64) -> Jet {
        self.scale(rhs)
    }
}

impl Mul<f64> for Jet {
    type Output = Jet;
    fn mul(self, rhs: f64) -> Jet {
        self.scale(Complex64::new(rhs, 0.0))
    }
}

impl Add<Complex64> for Jet {
    type Output = Jet;
    fn add(mut self, rhs: Complex64) -> Jet {
        self.c[0] += rhs;
        self
    }
}

impl Add<f64> for Jet {
    type Output = Jet;
    fn add(mut self, rhs: f64) -> Jet {
        self.c[0] += rhs;
        self
    }
}
