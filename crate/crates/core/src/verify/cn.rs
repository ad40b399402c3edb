use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::{Potential, Wavefunction};
use crate::verify::grid::{l2_error_slices, Geometry, Grid1D, GridFunction};
use crate::verify::residual::row_indices;

/// Crank–Nicolson settings.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CnOptions {
    /// Steps per grid Δt.
    pub substeps: usize,
    /// Largest admissible |ψ| at the outer boundary nodes, relative to max|ψ₀|.
    pub sponge: f64,
    /// When set, V is sampled at this many uniform times on [t_min, t_max]
    /// and interpolated cubically in t; otherwise it is evaluated at every
    /// step midpoint.
    pub potential_samples: Option<usize>,
}

impl Default for CnOptions {
    fn default() -> Self {
        CnOptions {
            substeps: 1,
            sponge: 1e-8,
            potential_samples: None,
        }
    }
}

/// V on fixed nodes at uniform times, interpolated by four-point Lagrange.
struct TimeSampled {
    t0: f64,
    h: f64,
    rows: Vec<Vec<f64>>,
}

impl TimeSampled {
    fn new(v: &dyn Potential, xs: &[f64], t0: f64, t1: f64, n: usize) -> Result<Self> {
        if n < 4 {
            return Err(Error::Config(format!("potential_samples = {n} must be at least 4")));
        }
        let h = (t1 - t0) / (n - 1) as f64;
        let rows = (0..n).map(|k| v.row(xs, t0 + k as f64 * h)).collect::<Result<_>>()?;
        Ok(TimeSampled { t0, h, rows })
    }

    fn row(&self, t: f64) -> Vec<f64> {
        let n = self.rows.len();
        let s = (t - self.t0) / self.h;
        let k = (s.floor() as isize - 1).clamp(0, n as isize - 4) as usize;
        let u = s - k as f64;
        let w = [
            -(u - 1.0) * (u - 2.0) * (u - 3.0) / 6.0,
            u * (u - 2.0) * (u - 3.0) / 2.0,
            -u * (u - 1.0) * (u - 3.0) / 2.0,
            u * (u - 1.0) * (u - 2.0) / 6.0,
        ];
        (0..self.rows[0].len())
            .map(|i| (0..4).map(|j| w[j] * self.rows[k + j][i]).sum())
            .collect()
    }
}

/// Outcome of one evolution.
#[derive(Clone, Debug, PartialEq)]
pub struct CnRun {
    pub final_state: Vec<Complex64>,
    /// max over steps of |‖ψ‖/‖ψ₀‖ − 1|
    pub norm_drift: f64,
    /// max over steps of the relative boundary modulus
    pub boundary_max: f64,
    pub steps: usize,
}

/// Pentadiagonal complex system, rows stored as [i−2, i−1, i, i+1, i+2].
struct Band {
    rows: Vec<[Complex64; 5]>,
}

impl Band {
    fn solve(mut self, mut rhs: Vec<Complex64>, step: usize) -> Result<Vec<Complex64>> {
        let m = rhs.len();
        for i in 0..m {
            let pivot = self.rows[i][2];
            if !(pivot.norm() > 0.0) || !pivot.norm().is_finite() {
                return Err(Error::SolverBreakdown { step });
            }
            for r in 1..=2 {
                if i + r >= m {
                    break;
                }
                let f = self.rows[i + r][2 - r] / pivot;
                if f == Complex64::default() {
                    continue;
                }
                for c in 0..=2 {
                    let src = self.rows[i][2 + c];
                    self.rows[i + r][2 - r + c] -= f * src;
                }
                let ri = rhs[i];
                rhs[i + r] -= f * ri;
            }
        }
        let mut x = vec![Complex64::default(); m];
        for i in (0..m).rev() {
            let mut s = rhs[i];
            for k in 1..=2 {
                if i + k < m {
                    s -= self.rows[i][2 + k] * x[i + k];
                }
            }
            x[i] = s / self.rows[i][2];
            if !(x[i].re.is_finite() && x[i].im.is_finite()) {
                return Err(Error::SolverBreakdown { step });
            }
        }
        Ok(x)
    }
}

/// −∂ₓ² by the symmetric fourth-order five-point stencil on the interior
/// nodes, with odd reflection through the Dirichlet end nodes.
fn laplacian_rows(m: usize, dx: f64) -> Vec<[f64; 5]> {
    let s = 1.0 / (12.0 * dx * dx);
    let mut rows = vec![[s, -16.0 * s, 30.0 * s, -16.0 * s, s]; m];
    if m > 0 {
        rows[0][0] = 0.0;
        rows[0][1] = 0.0;
        rows[0][2] = 29.0 * s;
        rows[m - 1][4] = 0.0;
        rows[m - 1][3] = 0.0;
        rows[m - 1][2] = 29.0 * s;
    }
    if m > 1 {
        rows[1][0] = 0.0;
        rows[m - 2][4] = 0.0;
    }
    rows
}

fn apply_rows(rows: &[[Complex64; 5]], psi: &[Complex64]) -> Vec<Complex64> {
    let m = psi.len();
    (0..m)
        .map(|i| {
            let mut s = Complex64::default();
            for (k, c) in rows[i].iter().enumerate() {
                let j = i as isize + k as isize - 2;
                if j >= 0 && (j as usize) < m {
                    s += c * psi[j as usize];
                }
            }
            s
        })
        .collect()
}

/// Spatial nodes of the propagator. Full line: the grid nodes. Half line:
/// `nx` uniform nodes on [0, x_max], so the Dirichlet zero sits at the
/// origin itself; x_min only regularizes pointwise evaluation elsewhere.
pub fn cn_nodes(grid: &Grid1D) -> Vec<f64> {
    match grid.geometry {
        Geometry::FullLine => grid.xs(),
        Geometry::HalfLine => {
            let dx = grid.x_max / (grid.nx - 1) as f64;
            (0..grid.nx)
                .map(|j| if j == grid.nx - 1 { grid.x_max } else { j as f64 * dx })
                .collect()
        }
    }
}

fn cn_dx(grid: &Grid1D) -> f64 {
    match grid.geometry {
        Geometry::FullLine => grid.dx(),
        Geometry::HalfLine => grid.x_max / (grid.nx - 1) as f64,
    }
}

/// Evolve ψ₀ (sampled on [`cn_nodes`]) from t_min to t_max. The first and
/// last nodes carry Dirichlet zeros; V is sampled at step midpoints.
pub fn evolve(v: &dyn Potential, psi0: &[Complex64], grid: &Grid1D, opts: CnOptions) -> Result<CnRun> {
    run(v, psi0, grid, opts, |_, _| ())
}

/// A recorded state: (t, values on [`cn_nodes`]).
pub type Slice = (f64, Vec<Complex64>);

/// Like [`evolve`], also returning the state at every `every`-th grid row
/// (first and last included) as (t, slice on [`cn_nodes`]).
pub fn evolve_recorded(
    v: &dyn Potential,
    psi0: &[Complex64],
    grid: &Grid1D,
    opts: CnOptions,
    every: usize,
) -> Result<(CnRun, Vec<Slice>)> {
    let rows = row_indices(grid.nt, every);
    let mut out = Vec::with_capacity(rows.len());
    let run = run(v, psi0, grid, opts, |row, state| {
        if rows.contains(&row) {
            out.push((grid.t(row), state.to_vec()));
        }
    })?;
    Ok((run, out))
}

fn run<F: FnMut(usize, &[Complex64])>(
    v: &dyn Potential,
    psi0: &[Complex64],
    grid: &Grid1D,
    opts: CnOptions,
    mut record: F,
) -> Result<CnRun> {
    grid.validate()?;
    if psi0.len() != grid.nx {
        return Err(Error::Shape(format!("initial data has {} points, grid has {}", psi0.len(), grid.nx)));
    }
    if psi0.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::SolverBreakdown { step: 0 });
    }
    let xs = cn_nodes(grid);
    let m = grid.nx - 2;
    let inner = &xs[1..grid.nx - 1];
    let lap = laplacian_rows(m, cn_dx(grid));
    let substeps = opts.substeps.max(1);
    let dt = grid.dt() / substeps as f64;
    let tau = Complex64::new(0.0, 0.5 * dt);
    let mut psi: Vec<Complex64> = psi0[1..grid.nx - 1].to_vec();
    let peak = psi0.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let norm0: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    if !(peak > 0.0) {
        return Err(Error::Shape("initial data vanishes identically".into()));
    }
    let boundary = |psi: &[Complex64]| -> f64 {
        let far = psi[m - 1].norm().max(psi[m - 2].norm());
        let near = psi[0].norm().max(psi[1].norm());
        let b = match grid.geometry {
            Geometry::FullLine => far.max(near),
            Geometry::HalfLine => far,
        };
        b / peak
    };
    let mut boundary_max = boundary(&psi);
    if boundary_max > opts.sponge {
        return Err(Error::BoundaryReached {
            t: grid.t_min,
            value: boundary_max,
        });
    }
    let mut full = vec![Complex64::default(); grid.nx];
    full[1..grid.nx - 1].copy_from_slice(&psi);
    record(0, &full);
    let sampled = match opts.potential_samples {
        Some(n) => Some(TimeSampled::new(v, inner, grid.t_min, grid.t_max, n)?),
        None => None,
    };
    let mut norm_drift = 0.0f64;
    let mut step = 0usize;
    for row in 1..grid.nt {
        for sub in 0..substeps {
            let t = grid.t(row - 1) + (sub as f64 + 0.5) * dt;
            let mut left = Vec::with_capacity(m);
            let mut right = Vec::with_capacity(m);
            let vt = match &sampled {
                Some(s) => s.row(t),
                None => v.row(inner, t)?,
            };
            for (i, vx) in vt.into_iter().enumerate() {
                let mut k: [Complex64; 5] = lap[i].map(|c| Complex64::new(c, 0.0));
                k[2] += vx;
                left.push(k.map(|c| tau * c));
                right.push(k.map(|c| -tau * c));
            }
            for i in 0..m {
                left[i][2] += 1.0;
                right[i][2] += 1.0;
            }
            let rhs = apply_rows(&right, &psi);
            step += 1;
            psi = Band { rows: left }.solve(rhs, step)?;
            let b = boundary(&psi);
            boundary_max = boundary_max.max(b);
            if b > opts.sponge {
                return Err(Error::BoundaryReached { t: t + 0.5 * dt, value: b });
            }
            let n: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
            norm_drift = norm_drift.max(((n / norm0).sqrt() - 1.0).abs());
        }
        full[1..grid.nx - 1].copy_from_slice(&psi);
        record(row, &full);
    }
    full[1..grid.nx - 1].copy_from_slice(&psi);
    Ok(CnRun {
        final_state: full,
        norm_drift,
        boundary_max,
        steps: step,
    })
}

/// Evolution recorded on every grid row, on the nodes of [`cn_nodes`].
pub fn crank_nicolson(v: &dyn Potential, psi0: &[Complex64], grid: &Grid1D) -> Result<GridFunction> {
    let mut values = vec![Complex64::default(); grid.nx * grid.nt];
    run(v, psi0, grid, CnOptions::default(), |row, state| {
        values[row * grid.nx..(row + 1) * grid.nx].copy_from_slice(state);
    })?;
    GridFunction::new(*grid, values)
}

/// Result of comparing a propagated initial slice with the analytic final
/// slice.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PropagationMatch {
    pub error: f64,
    pub norm_drift: f64,
    pub boundary_max: f64,
    pub steps: usize,
}

/// Sample the analytic slice at t_min, propagate under V to t_max and
/// return the L2 error against the analytic slice at t_max, relative to
/// its norm.
pub fn propagation_match(
    analytic: &dyn Wavefunction,
    v: &dyn Potential,
    grid: &Grid1D,
    opts: CnOptions,
) -> Result<PropagationMatch> {
    Ok(propagation_slices(analytic, v, grid, opts)?.0)
}

/// Analytic slice on the propagator nodes, with the Dirichlet end nodes
/// set to zero.
pub fn analytic_slice(analytic: &dyn Wavefunction, grid: &Grid1D, t: f64) -> Result<Vec<Complex64>> {
    let xs = cn_nodes(grid);
    let mut out = vec![Complex64::default(); grid.nx];
    for (o, j) in out[1..grid.nx - 1].iter_mut().zip(analytic.row(&xs[1..grid.nx - 1], t)?) {
        *o = j.value();
    }
    Ok(out)
}

/// Like [`propagation_match`], also returning the numerical and analytic
/// final slices.
pub fn propagation_slices(
    analytic: &dyn Wavefunction,
    v: &dyn Potential,
    grid: &Grid1D,
    opts: CnOptions,
) -> Result<(PropagationMatch, Vec<Complex64>, Vec<Complex64>)> {
    let psi0 = analytic_slice(analytic, grid, grid.t_min)?;
    let run = evolve(v, &psi0, grid, opts)?;
    let exact = analytic_slice(analytic, grid, grid.t_max)?;
    let error = l2_error_slices(&run.final_state, &exact)?;
    Ok((
        PropagationMatch {
            error,
            norm_drift: run.norm_drift,
            boundary_max: run.boundary_max,
            steps: run.steps,
        },
        run.final_state,
        exact,
    ))
}
