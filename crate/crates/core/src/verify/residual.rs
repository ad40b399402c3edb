use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Potential, Wavefunction};
use crate::verify::grid::Grid1D;

/// Which grid rows enter a residual evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualOptions {
    /// Evaluate every `time_stride`-th time row (first and last always).
    pub time_stride: usize,
    /// Evaluate every `space_stride`-th spatial node.
    pub space_stride: usize,
    /// Time-difference step as a fraction of the grid Δt.
    pub substep_fraction: f64,
    /// Order of the central time difference (4, 6 or 8).
    pub stencil_order: usize,
}

impl Default for ResidualOptions {
    fn default() -> Self {
        ResidualOptions {
            time_stride: 50,
            space_stride: 1,
            substep_fraction: 0.05,
            stencil_order: 8,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub max_abs: f64,
    pub scale: f64,
    pub scaled: f64,
    pub rows: usize,
}

/// (offset, weight) pairs of the central first-derivative stencil.
pub fn central_stencil(order: usize) -> Result<Vec<(f64, f64)>> {
    let half: &[f64] = match order {
        2 => &[0.5],
        4 => &[2.0 / 3.0, -1.0 / 12.0],
        6 => &[3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0],
        8 => &[4.0 / 5.0, -1.0 / 5.0, 4.0 / 105.0, -1.0 / 280.0],
        _ => return Err(Error::Config(format!("stencil order {order} is not one of 2, 4, 6, 8"))),
    };
    let mut out = Vec::with_capacity(2 * half.len());
    for (k, &w) in half.iter().enumerate() {
        let off = (k + 1) as f64;
        out.push((-off, -w));
        out.push((off, w));
    }
    Ok(out)
}

pub(crate) fn row_indices(nt: usize, stride: usize) -> Vec<usize> {
    let stride = stride.max(1);
    let mut rows: Vec<usize> = (0..nt).step_by(stride).collect();
    if *rows.last().expect("nt >= 1") != nt - 1 {
        rows.push(nt - 1);
    }
    rows
}

/// max|iψₜ − (−ψₓₓ + Vψ)| / max(1, max|ψ|) with default options.
pub fn schrodinger_residual(wf: &dyn Wavefunction, v: &dyn Potential, grid: &Grid1D) -> Result<f64> {
    Ok(schrodinger_residual_with(wf, v, grid, ResidualOptions::default())?.scaled)
}

/// ψₓₓ comes from the handle's jets, ψₜ from central differences of order
/// `stencil_order` with step `substep_fraction · Δt`.
pub fn schrodinger_residual_with(
    wf: &dyn Wavefunction,
    v: &dyn Potential,
    grid: &Grid1D,
    opts: ResidualOptions,
) -> Result<Residual> {
    let xs: Vec<f64> = grid.xs().into_iter().step_by(opts.space_stride.max(1)).collect();
    let h = grid.dt() * opts.substep_fraction;
    let stencil = central_stencil(opts.stencil_order)?;
    let i = Complex64::i();
    let mut max_abs = 0.0f64;
    let mut peak = 0.0f64;
    let rows = row_indices(grid.nt, opts.time_stride);
    for &j in &rows {
        let t = grid.t(j);
        let centre = wf.row(&xs, t)?;
        let mut dt = vec![Complex64::default(); xs.len()];
        for &(k, c) in &stencil {
            for (d, jet) in dt.iter_mut().zip(wf.row(&xs, t + k * h)?) {
                *d += jet.value() * (c / h);
            }
        }
        for (n, &x) in xs.iter().enumerate() {
            let psi = centre[n].value();
            let psi_xx = centre[n].deriv(2).unwrap_or_default();
            let vx = v.value(x, t).map_err(|e| e.at(x, t))?;
            let r = i * dt[n] - (-psi_xx + vx * psi);
            max_abs = max_abs.max(r.norm());
            peak = peak.max(psi.norm());
        }
    }
    let scale = peak.max(1.0);
    Ok(Residual {
        max_abs,
        scale,
        scaled: max_abs / scale,
        rows: rows.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::Jet;
    use crate::verify::grid::Geometry;

    #[test]
    fn plane_wave_is_exact() {
        let p = 1.7;
        let wave = move |x: f64, t: f64| Ok((Jet::var(x) * Complex64::new(0.0, p) + Complex64::new(0.0, -p * p * t)).exp());
        let zero = |_x: f64, _t: f64| Ok(0.0);
        let g = Grid1D::new(-10.0, 10.0, 201, 0.0, 1.0, 101, Geometry::FullLine).unwrap();
        assert!(schrodinger_residual(&wave, &zero, &g).unwrap() < 1e-8);
    }

    #[test]
    fn non_solution_is_flagged() {
        let p = 1.7;
        let wave = move |x: f64, t: f64| {
            let xj = Jet::var(x);
            Ok((xj * Complex64::new(0.0, p) + Complex64::new(0.0, -p * p * t)).exp() * xj.exp())
        };
        let zero = |_x: f64, _t: f64| Ok(0.0);
        let g = Grid1D::new(-1.0, 1.0, 21, 0.0, 1.0, 11, Geometry::FullLine).unwrap();
        assert!(schrodinger_residual(&wave, &zero, &g).unwrap() > 0.1);
    }

    #[test]
    fn rows_include_endpoints() {
        assert_eq!(row_indices(11, 4), vec![0, 4, 8, 10]);
        assert_eq!(row_indices(3, 1), vec![0, 1, 2]);
    }

    #[test]
    fn stencils_differentiate_polynomials_exactly() {
        for order in [2, 4, 6, 8] {
            let st = central_stencil(order).unwrap();
            for p in 0..=order {
                let d: f64 = st.iter().map(|(k, w)| w * k.powi(p as i32)).sum();
                let want = if p == 1 { 1.0 } else { 0.0 };
                assert!((d - want).abs() < 1e-13, "order {order}, power {p}");
            }
        }
        assert!(central_stencil(5).is_err());
    }
}
