//! Operator identities on exact free-particle solutions of iψₜ = −ψₓₓ:
//! spreading Gaussians ψ = (1 + 4iσt)^{-1/2} exp(−σ(x − x₀)²/(1 + 4iσt)) and
//! plane waves exp(ikx − ik²t).

use std::sync::Arc;

use darboux_core::darboux::{
    anticommutator_check, intertwining_residual, Chain2, DarbouxOperator, PotentialHandle, SuperState, Transform,
    WaveHandle,
};
use darboux_core::jet::Jet;
use darboux_core::models::Potential;
use num_complex::Complex64;
use proptest::prelude::*;

const WINDOW: (f64, f64) = (0.0, 1.0);
const PROBES: [f64; 3] = [-1.0, 0.2, 1.3];

fn gaussian_parts(sigma: Complex64, x0: f64, x: f64, t: f64) -> (Jet, Complex64, Jet) {
    let d = Complex64::new(1.0, 0.0) + Complex64::i() * 4.0 * sigma * t;
    let c = -sigma / d;
    let y = Jet::var(x) + (-x0);
    let psi = (y * y * c).exp() * d.powf(-0.5);
    (psi, c, y)
}

fn gaussian(sigma: Complex64, x0: f64) -> WaveHandle {
    Arc::new(move |x: f64, t: f64| Ok(gaussian_parts(sigma, x0, x, t).0))
}

/// ∂ₓ of the Gaussian, again a free solution.
fn gaussian_dx(sigma: Complex64, x0: f64) -> WaveHandle {
    Arc::new(move |x: f64, t: f64| {
        let (psi, c, y) = gaussian_parts(sigma, x0, x, t);
        Ok(psi * y * (2.0 * c))
    })
}

fn plane_wave(k: f64) -> WaveHandle {
    Arc::new(move |x: f64, t: f64| Ok((Jet::var(x) * Complex64::new(0.0, k) + Complex64::new(0.0, -k * k * t)).exp()))
}

fn free() -> PotentialHandle {
    Arc::new(|_x: f64, _t: f64| Ok(0.0))
}

fn sigmas() -> impl Strategy<Value = Complex64> {
    (0.2f64..1.0, -0.5f64..0.5).prop_map(|(a, b)| Complex64::new(a, b))
}

fn xs() -> Vec<f64> {
    (0..=16).map(|j| -2.0 + 0.25 * j as f64).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn first_order_step_intertwines(s1 in sigmas(), x1 in -1.0f64..1.0, s2 in sigmas(), x2 in -1.0f64..1.0) {
        let op = DarbouxOperator::integrated(gaussian(s1, x1), WINDOW, 0.0, 1.0, &PROBES, "g").unwrap();
        let v1 = op.new_potential(free());
        let r = intertwining_residual(&op, free().as_ref(), &v1, gaussian(s2, x2).as_ref(), &xs(), &[0.2, 0.6], 1e-3)
            .unwrap();
        prop_assert!(r < 1e-7, "residual {:e}", r);
    }

    #[test]
    fn kernel_is_annihilated_and_scale_is_irrelevant(s in sigmas(), x0 in -1.0f64..1.0, c in 0.1f64..5.0, ph in -3.0f64..3.0) {
        let u = gaussian(s, x0);
        let op = DarbouxOperator::integrated(u.clone(), WINDOW, 0.0, 1.0, &PROBES, "g").unwrap();
        let scaled = op.rescaled(Complex64::from_polar(c, ph));
        let probe = plane_wave(0.7);
        for &x in &xs() {
            let t = 0.4;
            let uj = u.jet(x, t).unwrap();
            let k = op.apply_l(&uj, x, t).unwrap().value().norm();
            prop_assert!(k < 1e-12 * (1.0 + uj.value().norm()));
            // A = −(log|u|²)ₓₓ = −4 Re c(t), independent of x
            let d = Complex64::new(1.0, 0.0) + Complex64::i() * 4.0 * s * t;
            let want = 4.0 * (s / d).re;
            prop_assert!((op.potential_difference(x, t).unwrap() - want).abs() < 1e-12);
            prop_assert!((scaled.potential_difference(x, t).unwrap() - want).abs() < 1e-12);
            let pj = probe.jet(x, t).unwrap();
            let a = op.apply_l(&pj, x, t).unwrap().value();
            let b = scaled.apply_l(&pj, x, t).unwrap().value();
            prop_assert!((a - b).norm() < 1e-12 * (1.0 + a.norm()));
        }
    }

    #[test]
    fn second_order_chain(s in sigmas(), x0 in -1.0f64..1.0, k in -1.5f64..1.5) {
        let chain = Chain2::new(gaussian(s, x0), gaussian_dx(s, x0), WINDOW, 0.0, &PROBES, "chain").unwrap();
        let psi = plane_wave(k);
        for &x in &xs() {
            let t = 0.3;
            let pj = psi.jet(x, t).unwrap();
            let a = chain.apply(&pj, x, t).unwrap().value();
            let b = chain.apply_stepwise(&pj, x, t).unwrap().value();
            prop_assert!((a - b).norm() < 1e-9 * (1.0 + a.norm()), "{} vs {}", a, b);
            for u in chain.kernel() {
                let uj = u.jet(x, t).unwrap();
                prop_assert!(chain.apply(&uj, x, t).unwrap().value().norm() < 1e-10 * (1.0 + uj.value().norm()));
            }
        }
        let v1 = chain.new_potential(free());
        let r = intertwining_residual(&chain, free().as_ref(), &v1, psi.as_ref(), &xs(), &[0.25, 0.7], 1e-3).unwrap();
        prop_assert!(r < 1e-7, "residual {:e}", r);
    }

    #[test]
    fn factorization_constant_vanishes(s in sigmas(), x0 in -1.0f64..1.0, k in -1.5f64..1.5) {
        let op = DarbouxOperator::integrated(gaussian(s, x0), WINDOW, 0.0, 1.0, &PROBES, "g").unwrap();
        let states = vec![
            SuperState::plus(plane_wave(k)),
            SuperState::minus(&op, gaussian(Complex64::new(0.5, 0.1), 0.3)),
        ];
        let est = anticommutator_check(&op, &states, &xs(), &[0.1, 0.5, 0.9]).unwrap();
        prop_assert!(est.alpha.abs() < 1e-10, "alpha {:e}", est.alpha);
        prop_assert!(est.alpha_imag.abs() < 1e-10);
        prop_assert_eq!(est.q_squared, 0.0);
    }
}

#[test]
fn wrong_potential_breaks_intertwining() {
    let op = DarbouxOperator::integrated(gaussian(Complex64::new(0.5, 0.2), 0.1), WINDOW, 0.0, 1.0, &PROBES, "g").unwrap();
    let v0 = free();
    let r = intertwining_residual(&op, v0.as_ref(), v0.as_ref(), plane_wave(0.8).as_ref(), &xs(), &[0.3], 1e-3).unwrap();
    assert!(r > 0.1, "residual {r:e}");
}

#[test]
fn new_potential_is_shifted_initial_potential() {
    let op = DarbouxOperator::unit(Arc::new(|x: f64, _t: f64| Ok(Jet::var(x).cosh())), "cosh");
    let v0: PotentialHandle = Arc::new(|x: f64, _t: f64| Ok(x * x));
    let v1 = op.new_potential(v0);
    for x in [-1.5f64, 0.0, 0.7] {
        let want = x * x - 2.0 / x.cosh().powi(2);
        assert!((v1.value(x, 0.0).unwrap() - want).abs() < 1e-14);
    }
}
