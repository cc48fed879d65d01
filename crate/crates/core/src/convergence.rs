//! Manufactured-solution study for the heat equation in first-order form.
//!
//! The state is `U = (θ, q)` with `m` temperature nodes and the fluxes on
//! the faces between them. `M₀ = diag(I, 0)`, `M₁ = diag(0, k⁻¹I)` and
//! `A = [[0, div], [grad, 0]]` with `div = −gradᵀ`, so `A` is exactly skew.
//! Eliminating `q` gives `∂₀θ − kΔ_hθ = f`.
//!
//! The exact solution is `θ*(t, x) = s(t)·φ(x)` with `s(t) = t³e^{−t}` and
//! `φ = sin(πx)` (Dirichlet) or `cos(πx)` (Neumann). Both are exact
//! eigenvectors of the discrete Laplacian, so the spatial error only comes
//! from the eigenvalue mismatch, `O(Δx²)`, and the temporal error from the
//! backward difference, `O(h)`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::grid::{TimeGrid, Trajectory, Weight};
use crate::material::{self, MaterialLaw};
use crate::solver::{self, EvolutionaryProblem};
use crate::verify::{window_grid, ConvergenceReport};
use crate::{CMat, Error, Result, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Boundary {
    /// `θ = 0` at both ends; `m` interior nodes, `m + 1` faces, `Δx = 1/(m+1)`.
    Dirichlet,
    /// Zero flux at both ends; `m` cells, `m − 1` interior faces, `Δx = 1/m`.
    Neumann,
}

/// Node positions, `Δx` and the face-from-node gradient.
#[derive(Clone, Debug)]
pub struct HeatMesh {
    pub bc: Boundary,
    pub nodes: Vec<f64>,
    pub dx: f64,
    pub grad: CMat,
}

impl HeatMesh {
    pub fn new(points: usize, bc: Boundary) -> Result<Self> {
        let r = |x: f64| C64::from(x);
        match bc {
            Boundary::Dirichlet => {
                if points < 1 {
                    return Err(Error::Parameter("Dirichlet stencil needs at least one point".into()));
                }
                let dx = 1.0 / (points + 1) as f64;
                let mut grad = CMat::zeros(points + 1, points);
                for f in 0..=points {
                    if f < points {
                        grad[(f, f)] = r(1.0 / dx);
                    }
                    if f >= 1 {
                        grad[(f, f - 1)] = r(-1.0 / dx);
                    }
                }
                let nodes = (1..=points).map(|i| i as f64 * dx).collect();
                Ok(Self { bc, nodes, dx, grad })
            }
            Boundary::Neumann => {
                if points < 2 {
                    return Err(Error::Parameter("Neumann stencil needs at least two points".into()));
                }
                let dx = 1.0 / points as f64;
                let mut grad = CMat::zeros(points - 1, points);
                for f in 0..points - 1 {
                    grad[(f, f)] = r(-1.0 / dx);
                    grad[(f, f + 1)] = r(1.0 / dx);
                }
                let nodes = (0..points).map(|i| (i as f64 + 0.5) * dx).collect();
                Ok(Self { bc, nodes, dx, grad })
            }
        }
    }

    pub fn points(&self) -> usize {
        self.nodes.len()
    }

    pub fn faces(&self) -> usize {
        self.grad.nrows()
    }

    pub fn dim(&self) -> usize {
        self.points() + self.faces()
    }

    /// `c·[[0, −gradᵀ], [grad, 0]]`.
    pub fn spatial_operator(&self, coefficient: f64) -> CMat {
        let (m, f) = (self.points(), self.faces());
        let mut a = CMat::zeros(m + f, m + f);
        let g = &self.grad * C64::from(coefficient);
        a.view_mut((m, 0), (f, m)).copy_from(&g);
        a.view_mut((0, m), (m, f)).copy_from(&(-g.transpose()));
        a
    }

    /// `φ(x)` at the nodes: `sin(πx)` or `cos(πx)`.
    pub fn mode(&self) -> Vec<f64> {
        self.nodes
            .iter()
            .map(|&x| match self.bc {
                Boundary::Dirichlet => (PI * x).sin(),
                Boundary::Neumann => (PI * x).cos(),
            })
            .collect()
    }

    /// `M₀ = diag(I, 0)`, `M₁ = diag(0, k⁻¹I)`.
    pub fn law(&self, grid: &TimeGrid, conductivity: f64) -> Result<MaterialLaw> {
        if !(conductivity.is_finite() && conductivity > 0.0) {
            return Err(Error::Parameter(format!("conductivity {conductivity} must be positive")));
        }
        let (m, d) = (self.points(), self.dim());
        let m0 = CMat::from_fn(d, d, |i, j| C64::from(if i == j && i < m { 1.0 } else { 0.0 }));
        let m1 = CMat::from_fn(d, d, |i, j| C64::from(if i == j && i >= m { 1.0 / conductivity } else { 0.0 }));
        material::autonomous_law(grid, vec![m0], vec![m1], 0.0)
    }
}

/// `s(t) = t³e^{−t}` for `t > 0`, zero before.
pub fn mms_amplitude(t: f64) -> f64 {
    if t > 0.0 {
        t.powi(3) * (-t).exp()
    } else {
        0.0
    }
}

fn mms_amplitude_rate(t: f64) -> f64 {
    if t > 0.0 {
        (3.0 * t * t - t.powi(3)) * (-t).exp()
    } else {
        0.0
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct HeatStudy {
    pub bc: Boundary,
    pub conductivity: f64,
    pub t_end: f64,
    pub nu: f64,
    /// Scales the manufactured solution; zero gives the zero problem.
    pub amplitude: f64,
}

impl Default for HeatStudy {
    fn default() -> Self {
        Self { bc: Boundary::Dirichlet, conductivity: 1.0, t_end: 2.0, nu: 1.0, amplitude: 1.0 }
    }
}

impl HeatStudy {
    pub fn problem(&self, points: usize, h: f64) -> Result<(EvolutionaryProblem, HeatMesh)> {
        let mesh = HeatMesh::new(points, self.bc)?;
        let grid = window_grid(0.0, self.t_end, h)?;
        let law = mesh.law(&grid, self.conductivity)?;
        let a = mesh.spatial_operator(1.0);
        let mode = mesh.mode();
        let (m, d, k, amp) = (mesh.points(), mesh.dim(), self.conductivity, self.amplitude);
        let f = Trajectory::from_fn(&grid, d, |t| {
            let s = amp * (mms_amplitude_rate(t) + k * PI * PI * mms_amplitude(t));
            (0..d).map(|i| C64::from(if i < m { s * mode[i] } else { 0.0 })).collect()
        })?;
        Ok((EvolutionaryProblem::new(law, a, f, self.nu, "heat1d-mms")?, mesh))
    }

    /// `‖θ_h − θ*‖ / ‖θ*‖` in the norm `(Σ_k w_k Δx Σ_i |θ_{k,i}|²)^{1/2}`;
    /// absolute when the exact solution vanishes.
    pub fn error(&self, points: usize, h: f64) -> Result<f64> {
        let (p, mesh) = self.problem(points, h)?;
        let u = solver::forward_substitute(&solver::assemble(&p)?, &p.f)?.u;
        let w = Weight::new(&p.grid, self.nu)?;
        let mode = mesh.mode();
        let (mut err, mut norm) = (0.0, 0.0);
        for k in 0..p.grid.n() {
            let s = self.amplitude * mms_amplitude(p.grid.time(k));
            for (i, phi) in mode.iter().enumerate() {
                let exact = s * phi;
                err += w.at(k) * mesh.dx * (u.at(k)[i] - C64::from(exact)).norm_sqr();
                norm += w.at(k) * mesh.dx * exact * exact;
            }
        }
        Ok(if norm > 0.0 { (err / norm).sqrt() } else { err.sqrt() })
    }

    /// Halves `h` from `h0` at a fixed mesh.
    pub fn temporal(&self, points: usize, h0: f64, halvings: usize) -> Result<ConvergenceReport> {
        let hs: Vec<f64> = (0..=halvings).map(|i| h0 / 2f64.powi(i as i32)).collect();
        let errors = hs.iter().map(|&h| self.error(points, h)).collect::<Result<Vec<_>>>()?;
        Ok(ConvergenceReport::new("heat_temporal", "h", hs, errors, 0.8).with_upper(1.2))
    }

    /// Refines the mesh at a fixed `h`; the slope is fitted against the actual `Δx`.
    pub fn spatial(&self, points: &[usize], h: f64) -> Result<ConvergenceReport> {
        let mut dxs = Vec::new();
        let mut errors = Vec::new();
        for &m in points {
            dxs.push(HeatMesh::new(m, self.bc)?.dx);
            errors.push(self.error(m, h)?);
        }
        Ok(ConvergenceReport::new("heat_spatial", "dx", dxs, errors, 1.8).with_upper(2.2))
    }
}

/// Mesh sizes with `Δx` halving: `2^j − 1` points (Dirichlet) or `2^j` cells (Neumann).
pub fn halving_meshes(bc: Boundary, from: u32, count: u32) -> Vec<usize> {
    (from..from + count)
        .map(|j| match bc {
            Boundary::Dirichlet => (1usize << j) - 1,
            Boundary::Neumann => 1usize << j,
        })
        .collect()
}
