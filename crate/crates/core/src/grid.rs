//! Uniform time grids, exponential weights and trajectories.
//!
//! A [`Trajectory`] holds `n` complex `d`-vectors, one per grid point, and is
//! implicitly zero before the first point. The weighted inner product is
//!
//! ```text
//! ⟨u, v⟩_ν = Σ_k w_k ⟨u_k, v_k⟩,   w_k = h · exp(−2ν t_k)
//! ```
//!
//! linear in the first argument and conjugate linear in the second.

use std::fmt::Write as _;

use nalgebra::{DVectorView, DVectorViewMut};
use serde::{Deserialize, Serialize};

use crate::operators::{self, CausalOperator};
use crate::{CMat, Error, Result, C64};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t0: f64,
    h: f64,
    n: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, h: f64, n: usize) -> Result<Self> {
        if !t0.is_finite() {
            return Err(Error::InvalidGrid(format!("t0 = {t0} is not finite")));
        }
        if !(h.is_finite() && h > 0.0) {
            return Err(Error::InvalidGrid(format!("step h = {h} must be positive")));
        }
        if n < 2 {
            return Err(Error::InvalidGrid(format!("point count n = {n} must be at least 2")));
        }
        Ok(Self { t0, h, n })
    }

    /// Grid with `n` points covering `[start, end]` inclusively.
    pub fn spanning(start: f64, end: f64, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidGrid(format!("point count n = {n} must be at least 2")));
        }
        Self::new(start, (end - start) / (n - 1) as f64, n)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn time(&self, k: usize) -> f64 {
        self.t0 + k as f64 * self.h
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n).map(|k| self.time(k)).collect()
    }

    pub fn end(&self) -> f64 {
        self.time(self.n - 1)
    }

    /// Number of grid points with `t_k ≤ a`.
    pub fn count_up_to(&self, a: f64) -> usize {
        (0..self.n).take_while(|&k| self.time(k) <= a).count()
    }

    pub(crate) fn check_same(&self, other: &TimeGrid) -> Result<()> {
        if self != other {
            return Err(Error::Shape(format!(
                "grids differ: (t0={}, h={}, n={}) vs (t0={}, h={}, n={})",
                self.t0, self.h, self.n, other.t0, other.h, other.n
            )));
        }
        Ok(())
    }
}

/// Grid constructor in free-function form.
pub fn make_grid(t0: f64, h: f64, n: usize) -> Result<TimeGrid> {
    TimeGrid::new(t0, h, n)
}

/// Exponential weight `ν` together with its quadrature weights on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct Weight {
    grid: TimeGrid,
    nu: f64,
    w: Vec<f64>,
}

impl Weight {
    /// `ν = 0` is accepted and yields the unweighted inner product.
    pub fn new(grid: &TimeGrid, nu: f64) -> Result<Self> {
        if !(nu.is_finite() && nu >= 0.0) {
            return Err(Error::Parameter(format!("weight nu = {nu} must be finite and non-negative")));
        }
        let w: Vec<f64> = (0..grid.n())
            .map(|k| grid.h() * (-2.0 * nu * grid.time(k)).exp())
            .collect();
        if w.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
            return Err(Error::Numeric(format!(
                "weights exp(-2 nu t) under- or overflow on this grid for nu = {nu}"
            )));
        }
        Ok(Self { grid: grid.clone(), nu, w })
    }

    pub fn nu(&self) -> f64 {
        self.nu
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.w
    }

    pub fn at(&self, k: usize) -> f64 {
        self.w[k]
    }
}

/// Values of a `d`-dimensional state at every grid point, stored time-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    grid: TimeGrid,
    dim: usize,
    data: Vec<C64>,
}

impl Trajectory {
    pub fn new(grid: &TimeGrid, dim: usize, data: Vec<C64>) -> Result<Self> {
        if data.len() != grid.n() * dim {
            return Err(Error::Shape(format!(
                "trajectory data has {} entries, expected n*d = {}*{}",
                data.len(),
                grid.n(),
                dim
            )));
        }
        if let Some(i) = data.iter().position(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::Numeric(format!(
                "trajectory entry {} (k = {}) is not finite",
                i,
                i / dim.max(1)
            )));
        }
        Ok(Self { grid: grid.clone(), dim, data })
    }

    pub(crate) fn from_raw(grid: &TimeGrid, dim: usize, data: Vec<C64>) -> Self {
        debug_assert_eq!(data.len(), grid.n() * dim);
        Self { grid: grid.clone(), dim, data }
    }

    pub fn zeros(grid: &TimeGrid, dim: usize) -> Self {
        Self::from_raw(grid, dim, vec![C64::new(0.0, 0.0); grid.n() * dim])
    }

    /// Builds a trajectory by sampling `f(t_k)`, which must return `dim` values.
    pub fn from_fn(grid: &TimeGrid, dim: usize, mut f: impl FnMut(f64) -> Vec<C64>) -> Result<Self> {
        let mut data = Vec::with_capacity(grid.n() * dim);
        for k in 0..grid.n() {
            let v = f(grid.time(k));
            if v.len() != dim {
                return Err(Error::Shape(format!(
                    "sample at k = {k} has {} components, expected {dim}",
                    v.len()
                )));
            }
            data.extend(v);
        }
        Self::new(grid, dim, data)
    }

    /// Scalar profile `p(t_k)` times a fixed direction.
    pub fn from_profile(grid: &TimeGrid, direction: &[C64], p: impl Fn(f64) -> f64) -> Self {
        let mut data = Vec::with_capacity(grid.n() * direction.len());
        for k in 0..grid.n() {
            let s = p(grid.time(k));
            data.extend(direction.iter().map(|z| z * s));
        }
        Self::from_raw(grid, direction.len(), data)
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<C64> {
        self.data
    }

    pub fn at(&self, k: usize) -> &[C64] {
        &self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn at_mut(&mut self, k: usize) -> &mut [C64] {
        &mut self.data[k * self.dim..(k + 1) * self.dim]
    }

    pub fn view(&self, k: usize) -> DVectorView<'_, C64> {
        DVectorView::from_slice(self.at(k), self.dim)
    }

    pub fn view_mut(&mut self, k: usize) -> DVectorViewMut<'_, C64> {
        let d = self.dim;
        DVectorViewMut::from_slice(self.at_mut(k), d)
    }

    pub(crate) fn check_compatible(&self, other: &Trajectory) -> Result<()> {
        self.grid.check_same(&other.grid)?;
        if self.dim != other.dim {
            return Err(Error::Shape(format!(
                "state dimensions differ: {} vs {}",
                self.dim, other.dim
            )));
        }
        Ok(())
    }

    pub fn sub(&self, other: &Trajectory) -> Result<Trajectory> {
        self.check_compatible(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect();
        Ok(Self::from_raw(&self.grid, self.dim, data))
    }

    pub fn add(&self, other: &Trajectory) -> Result<Trajectory> {
        self.check_compatible(other)?;
        let data = self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect();
        Ok(Self::from_raw(&self.grid, self.dim, data))
    }

    pub fn scale(&self, c: C64) -> Trajectory {
        Self::from_raw(&self.grid, self.dim, self.data.iter().map(|z| z * c).collect())
    }

    pub fn weighted_inner(&self, other: &Trajectory, w: &Weight) -> Result<C64> {
        weighted_inner(self, other, w)
    }

    pub fn weighted_norm(&self, w: &Weight) -> f64 {
        debug_assert_eq!(w.grid(), &self.grid);
        let mut acc = 0.0;
        for k in 0..self.grid.n() {
            acc += w.at(k) * self.at(k).iter().map(|z| z.norm_sqr()).sum::<f64>();
        }
        acc.sqrt()
    }

    /// Largest entry modulus over the time points `0..count`.
    pub fn max_abs_leading(&self, count: usize) -> f64 {
        self.data[..count.min(self.grid.n()) * self.dim]
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max)
    }

    /// CSV with header `k,t,re_u1,im_u1,...`, LF line endings and 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,t");
        for i in 1..=self.dim {
            let _ = write!(out, ",re_u{i},im_u{i}");
        }
        out.push('\n');
        for k in 0..self.grid.n() {
            let _ = write!(out, "{},{:.16e}", k, self.grid.time(k));
            for z in self.at(k) {
                let _ = write!(out, ",{:.16e},{:.16e}", z.re, z.im);
            }
            out.push('\n');
        }
        out
    }

    /// Parses the format written by [`Trajectory::to_csv`]; the `t` column must match the grid.
    pub fn from_csv(grid: &TimeGrid, dim: usize, text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::Scenario("csv source is empty".into()))?;
        let cols = header.split(',').count();
        if cols != 2 + 2 * dim {
            return Err(Error::Scenario(format!(
                "csv header has {cols} columns, expected {} for state dimension {dim}",
                2 + 2 * dim
            )));
        }
        let mut data = Vec::with_capacity(grid.n() * dim);
        let mut rows = 0;
        for (line_no, line) in lines.enumerate().filter(|(_, l)| !l.trim().is_empty()) {
            let fields: Vec<&str> = line.split(',').collect();
            let parse = |s: &str| -> Result<f64> {
                s.trim().parse::<f64>().map_err(|e| {
                    Error::Scenario(format!("csv line {}: cannot parse '{s}': {e}", line_no + 2))
                })
            };
            if fields.len() != cols {
                return Err(Error::Scenario(format!(
                    "csv line {}: {} fields, expected {cols}",
                    line_no + 2,
                    fields.len()
                )));
            }
            if rows >= grid.n() {
                return Err(Error::Scenario(format!("csv has more than n = {} rows", grid.n())));
            }
            let t = parse(fields[1])?;
            if (t - grid.time(rows)).abs() > 1e-9 * (1.0 + t.abs()) {
                return Err(Error::Scenario(format!(
                    "csv line {}: t = {t} does not match grid time {}",
                    line_no + 2,
                    grid.time(rows)
                )));
            }
            for i in 0..dim {
                data.push(C64::new(parse(fields[2 + 2 * i])?, parse(fields[3 + 2 * i])?));
            }
            rows += 1;
        }
        if rows != grid.n() {
            return Err(Error::Scenario(format!("csv has {rows} rows, expected {}", grid.n())));
        }
        Self::new(grid, dim, data)
    }
}

pub fn weighted_inner(u: &Trajectory, v: &Trajectory, w: &Weight) -> Result<C64> {
    u.check_compatible(v)?;
    u.grid.check_same(w.grid())?;
    let mut acc = C64::new(0.0, 0.0);
    for k in 0..u.grid.n() {
        let s: C64 = u.at(k).iter().zip(v.at(k)).map(|(a, b)| a * b.conj()).sum();
        acc += s * w.at(k);
    }
    Ok(acc)
}

/// Diagonal projection `1_{t ≤ a}`: identity on points with `t_k ≤ a`, zero elsewhere.
pub fn cutoff_projection(grid: &TimeGrid, a: f64, dim: usize) -> CausalOperator {
    let one = CMat::identity(dim, dim);
    let zero = CMat::zeros(dim, dim);
    operators::multiplication_operator(grid, |t| if t <= a { one.clone() } else { zero.clone() })
        .expect("cutoff blocks are finite")
}

/// Shift `(τu)_k = u_{k+m}` with zero fill outside the window.
pub fn time_shift(grid: &TimeGrid, m: isize, dim: usize) -> Result<CausalOperator> {
    if m.unsigned_abs() >= grid.n() {
        return Err(Error::DegenerateShift { m, n: grid.n() });
    }
    Ok(operators::shift(grid, m, dim))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn grid_times() {
        assert_eq!(make_grid(0.0, 1.0, 3).unwrap().times(), vec![0.0, 1.0, 2.0]);
        assert_eq!(make_grid(-1.0, 0.5, 4).unwrap().times(), vec![-1.0, -0.5, 0.0, 0.5]);
    }

    #[test]
    fn invalid_grids() {
        assert!(matches!(make_grid(0.0, 0.0, 5), Err(Error::InvalidGrid(_))));
        assert!(matches!(make_grid(0.0, -1.0, 5), Err(Error::InvalidGrid(_))));
        assert!(matches!(make_grid(0.0, 1.0, 1), Err(Error::InvalidGrid(_))));
        assert!(matches!(make_grid(f64::NAN, 1.0, 3), Err(Error::InvalidGrid(_))));
    }

    #[test]
    fn inner_product_examples() {
        let g = make_grid(0.0, 1.0, 2).unwrap();
        let u = Trajectory::new(&g, 1, vec![c(1.0), c(1.0)]).unwrap();
        let w0 = Weight::new(&g, 0.0).unwrap();
        assert_eq!(weighted_inner(&u, &u, &w0).unwrap(), c(2.0));
        let w = Weight::new(&g, 2f64.ln() / 2.0).unwrap();
        assert!((weighted_inner(&u, &u, &w).unwrap() - c(1.5)).norm() < 1e-15);
        let z = Trajectory::zeros(&g, 1);
        assert_eq!(weighted_inner(&z, &u, &w).unwrap(), c(0.0));
    }

    #[test]
    fn inner_product_shape_errors() {
        let g = make_grid(0.0, 1.0, 2).unwrap();
        let g2 = make_grid(0.0, 1.0, 3).unwrap();
        let w = Weight::new(&g, 1.0).unwrap();
        let u = Trajectory::zeros(&g, 1);
        assert!(matches!(weighted_inner(&u, &Trajectory::zeros(&g, 2), &w), Err(Error::Shape(_))));
        assert!(matches!(weighted_inner(&u, &Trajectory::zeros(&g2, 1), &w), Err(Error::Shape(_))));
    }

    #[test]
    fn trajectory_rejects_non_finite() {
        let g = make_grid(0.0, 1.0, 2).unwrap();
        assert!(Trajectory::new(&g, 1, vec![c(1.0), C64::new(f64::INFINITY, 0.0)]).is_err());
        assert!(Trajectory::new(&g, 1, vec![c(1.0)]).is_err());
    }

    #[test]
    fn cutoff_examples() {
        let g = make_grid(0.0, 1.0, 3).unwrap();
        let p = cutoff_projection(&g, 1.0, 1).materialize();
        let diag: Vec<f64> = (0..3).map(|i| p[(i, i)].re).collect();
        assert_eq!(diag, vec![1.0, 1.0, 0.0]);
        assert_eq!(cutoff_projection(&g, -0.5, 1).materialize(), CMat::zeros(3, 3));
        assert_eq!(cutoff_projection(&g, 2.0, 1).materialize(), CMat::identity(3, 3));
    }

    #[test]
    fn shift_examples() {
        let g = make_grid(0.0, 1.0, 3).unwrap();
        let u = Trajectory::new(&g, 1, vec![c(1.0), c(2.0), c(3.0)]).unwrap();
        let s = time_shift(&g, 1, 1).unwrap();
        assert_eq!(s.apply(&u).unwrap().as_slice(), &[c(2.0), c(3.0), c(0.0)]);
        assert_eq!(time_shift(&g, 0, 1).unwrap().apply(&u).unwrap(), u);
        assert!(matches!(time_shift(&g, 3, 1), Err(Error::DegenerateShift { .. })));
        assert!(matches!(time_shift(&g, -3, 1), Err(Error::DegenerateShift { .. })));
    }

    #[test]
    fn shift_weight_identity() {
        // Direct summation: support {2,3} moves to {1,2}, each weight grows by e^{2νh}.
        let g = make_grid(0.0, 1.0, 8).unwrap();
        let w = Weight::new(&g, 0.3).unwrap();
        let mut data = vec![c(0.0); 8];
        data[2] = C64::new(0.7, -0.2);
        data[3] = C64::new(-1.1, 0.4);
        let u = Trajectory::new(&g, 1, data).unwrap();
        let tu = time_shift(&g, 1, 1).unwrap().apply(&u).unwrap();
        let expected: f64 = (2..4)
            .map(|k| (-2.0 * 0.3 * (k as f64 - 1.0)).exp() * u.at(k)[0].norm_sqr())
            .sum::<f64>()
            / (2..4).map(|k| (-2.0 * 0.3 * k as f64).exp() * u.at(k)[0].norm_sqr()).sum::<f64>();
        let ratio = tu.weighted_norm(&w).powi(2) / u.weighted_norm(&w).powi(2);
        assert!((ratio - expected).abs() < 1e-12 * expected);
        assert!((ratio - 0.6f64.exp()).abs() < 1e-12 * ratio);
    }

    #[test]
    fn csv_round_trip() {
        let g = make_grid(-0.25, 0.125, 5).unwrap();
        let u = Trajectory::from_fn(&g, 2, |t| vec![C64::new(t.sin(), 1.0 / 3.0), C64::new(t.exp(), -t)])
            .unwrap();
        let text = u.to_csv();
        assert!(text.starts_with("k,t,re_u1,im_u1,re_u2,im_u2\n"));
        assert_eq!(Trajectory::from_csv(&g, 2, &text).unwrap(), u);
        assert!(Trajectory::from_csv(&g, 1, &text).is_err());
    }
}
