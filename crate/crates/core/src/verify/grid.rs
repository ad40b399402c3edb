use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::models::Wavefunction;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Geometry {
    FullLine,
    HalfLine,
}

/// Uniform space-time grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grid1D {
    pub x_min: f64,
    pub x_max: f64,
    pub nx: usize,
    pub t_min: f64,
    pub t_max: f64,
    pub nt: usize,
    pub geometry: Geometry,
}

impl Grid1D {
    pub fn new(x_min: f64, x_max: f64, nx: usize, t_min: f64, t_max: f64, nt: usize, geometry: Geometry) -> Result<Self> {
        let g = Grid1D {
            x_min,
            x_max,
            nx,
            t_min,
            t_max,
            nt,
            geometry,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidGrid(m));
        if !(self.x_min.is_finite() && self.x_max.is_finite() && self.x_min < self.x_max) {
            return bad(format!("need x_min < x_max (got {} and {})", self.x_min, self.x_max));
        }
        if self.nx < 9 {
            return bad(format!("nx = {} is below the minimum of 9", self.nx));
        }
        if !(self.t_min.is_finite() && self.t_max.is_finite() && self.t_min < self.t_max) {
            return bad(format!("need t_min < t_max (got {} and {})", self.t_min, self.t_max));
        }
        if self.nt < 2 {
            return bad(format!("nt = {} must be at least 2", self.nt));
        }
        if self.geometry == Geometry::HalfLine && !(self.x_min > 0.0) {
            return bad(format!("half-line grids need x_min > 0 (got {})", self.x_min));
        }
        Ok(())
    }

    pub fn default_full_line() -> Self {
        Grid1D {
            x_min: -25.0,
            x_max: 25.0,
            nx: 2048,
            t_min: 0.0,
            t_max: 2.0,
            nt: 2001,
            geometry: Geometry::FullLine,
        }
    }

    pub fn default_half_line() -> Self {
        Grid1D {
            x_min: 1e-3,
            x_max: 40.0,
            nx: 4096,
            t_min: 0.0,
            t_max: 2.0,
            nt: 2001,
            geometry: Geometry::HalfLine,
        }
    }

    pub fn dx(&self) -> f64 {
        (self.x_max - self.x_min) / (self.nx - 1) as f64
    }

    pub fn dt(&self) -> f64 {
        (self.t_max - self.t_min) / (self.nt - 1) as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        if i == self.nx - 1 {
            self.x_max
        } else {
            self.x_min + i as f64 * self.dx()
        }
    }

    pub fn t(&self, j: usize) -> f64 {
        if j == self.nt - 1 {
            self.t_max
        } else {
            self.t_min + j as f64 * self.dt()
        }
    }

    pub fn xs(&self) -> Vec<f64> {
        (0..self.nx).map(|i| self.x(i)).collect()
    }

    pub fn ts(&self) -> Vec<f64> {
        (0..self.nt).map(|j| self.t(j)).collect()
    }

    pub fn with_time(&self, t_min: f64, t_max: f64, nt: usize) -> Self {
        Grid1D {
            t_min,
            t_max,
            nt,
            ..*self
        }
    }

    pub fn with_nx(&self, nx: usize) -> Self {
        Grid1D { nx, ..*self }
    }
}

/// Complex samples indexed by (time, space), row-major in time.
#[derive(Clone, Debug, PartialEq)]
pub struct GridFunction {
    pub grid: Grid1D,
    pub values: Vec<Complex64>,
}

impl GridFunction {
    pub fn new(grid: Grid1D, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.nx * grid.nt {
            return Err(Error::Shape(format!(
                "{} values for a {}x{} grid",
                values.len(),
                grid.nt,
                grid.nx
            )));
        }
        Ok(GridFunction { grid, values })
    }

    pub fn row(&self, j: usize) -> &[Complex64] {
        &self.values[j * self.grid.nx..(j + 1) * self.grid.nx]
    }

    pub fn get(&self, j: usize, i: usize) -> Complex64 {
        self.values[j * self.grid.nx + i]
    }
}

/// Sample a wavefunction on every grid node.
pub fn sample(wf: &dyn Wavefunction, grid: &Grid1D) -> Result<GridFunction> {
    let xs = grid.xs();
    let mut values = Vec::with_capacity(grid.nx * grid.nt);
    for t in grid.ts() {
        values.extend(wf.row(&xs, t)?.into_iter().map(|j| j.value()));
    }
    GridFunction::new(*grid, values)
}

fn norm2(v: &[Complex64]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>()
}

/// ‖a − b‖ / ‖b‖ in the discrete L2 norm (spacing factors cancel).
pub fn l2_error(a: &GridFunction, b: &GridFunction) -> Result<f64> {
    if a.grid != b.grid {
        return Err(Error::Shape("l2_error needs identical grids".into()));
    }
    l2_error_slices(&a.values, &b.values)
}

pub fn l2_error_slices(a: &[Complex64], b: &[Complex64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!("{} vs {} samples", a.len(), b.len())));
    }
    let diff: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let nb = norm2(b);
    if !(nb > 0.0) {
        return Err(Error::Shape("reference has zero norm".into()));
    }
    Ok((norm2(&diff) / nb).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::jet::Jet;

    #[test]
    fn grid_validation() {
        assert!(Grid1D::new(0.0, 1.0, 8, 0.0, 1.0, 3, Geometry::FullLine).is_err());
        assert!(Grid1D::new(0.0, 1.0, 9, 0.0, 1.0, 3, Geometry::HalfLine).is_err());
        assert!(Grid1D::new(1e-3, 1.0, 9, 0.0, 1.0, 3, Geometry::HalfLine).is_ok());
        let g = Grid1D::default_full_line();
        assert_eq!(g.x(0), -25.0);
        assert_eq!(g.x(g.nx - 1), 25.0);
        assert_eq!(g.t(g.nt - 1), 2.0);
    }

    #[test]
    fn l2_error_identities() {
        let g = Grid1D::new(-5.0, 5.0, 33, 0.0, 1.0, 4, Geometry::FullLine).unwrap();
        let wave = |x: f64, t: f64| Ok((Jet::var(x) * Complex64::new(0.0, 1.3) + Complex64::new(0.0, -1.69 * t)).exp());
        let f = sample(&wave, &g).unwrap();
        let neg = GridFunction::new(g, f.values.iter().map(|z| -z).collect()).unwrap();
        assert_eq!(l2_error(&f, &f).unwrap(), 0.0);
        assert!((l2_error(&neg, &f).unwrap() - 2.0).abs() < 1e-15);
        for j in 0..g.nt {
            assert!(f.row(j).iter().all(|z| (z.norm() - 1.0).abs() < 1e-14));
        }
        let other = g.with_nx(35);
        let h = sample(&wave, &other).unwrap();
        assert!(l2_error(&f, &h).is_err());
    }
}
