//! The shipped example scenarios.
//!
//! - `heat1d`: heat equation in first-order form `U = (θ, q)` with the
//!   manufactured source whose exact solution is `t³e^{−t}·sin(πx)`.
//! - `wave_memory`: 1-D wave equation `(v, σ)` with an exponentially fading
//!   memory `γe^{−βt}` on the stress block.
//! - `tdide`: a one-component memory block next to a two-component
//!   time-dependent block, one of whose components is purely algebraic. The
//!   block sizes, coefficients and the choice `A = skew + 0.1·PSD` are our own.
//! - `maria`: `M₀ = (2 + sin t)·I`, `M₁ = 0` with a skew `A` over one period.

use std::f64::consts::PI;

use super::{
    ComponentSpec, DiagSpec, Entry, GridSpec, KernelSpec, MaterialSpec, MatrixSpec, NuSpec, OutputSpec, Scenario,
    SourceSpec, SpatialSpec, StencilKind, StencilSpec,
};
use crate::convergence::{Boundary, HeatMesh};
use crate::{Error, Result};

pub const NAMES: [&str; 4] = ["heat1d", "wave_memory", "tdide", "maria"];

pub fn describe(name: &str) -> &'static str {
    match name {
        "heat1d" => "heat equation (theta, q) with a manufactured source, Dirichlet ends",
        "wave_memory" => "1-D wave equation with fading memory on the stress block",
        "tdide" => "memory block plus a time-dependent differential-algebraic block",
        "maria" => "M0 = (2 + sin t) I, M1 = 0, skew A over one period",
        _ => "",
    }
}

pub fn named(name: &str) -> Result<Scenario> {
    match name {
        "heat1d" => Heat1d::default().scenario(),
        "wave_memory" => WaveMemory::default().scenario(),
        "tdide" => Ok(tdide()),
        "maria" => Ok(maria(128)),
        other => Err(Error::Scenario(format!(
            "unknown example '{other}', expected one of {}",
            NAMES.join(", ")
        ))),
    }
}

fn num(x: f64) -> Entry {
    Entry::Num(x)
}

fn ex(s: impl Into<String>) -> Entry {
    Entry::Expr(s.into())
}

fn diag(v: Vec<Entry>) -> MatrixSpec {
    MatrixSpec::Diag(DiagSpec { diag: v })
}

fn grid_over(t_end: f64, h: f64) -> GridSpec {
    GridSpec { t0: 0.0, h, n: (t_end / h).round() as usize + 1 }
}

#[derive(Clone, Debug)]
pub struct Heat1d {
    pub points: usize,
    pub bc: Boundary,
    pub conductivity: f64,
    pub h: f64,
    pub t_end: f64,
    pub nu: f64,
}

impl Default for Heat1d {
    fn default() -> Self {
        Self { points: 7, bc: Boundary::Dirichlet, conductivity: 1.0, h: 0.05, t_end: 2.0, nu: 1.0 }
    }
}

impl Heat1d {
    pub fn scenario(&self) -> Result<Scenario> {
        let mesh = HeatMesh::new(self.points, self.bc)?;
        let (m, d) = (mesh.points(), mesh.dim());
        let indicator = |on_nodes: bool, value: f64| {
            diag((0..d).map(|i| num(if (i < m) == on_nodes { value } else { 0.0 })).collect())
        };
        // f = (s' + kπ²s)·φ with s = t³e^{−t}.
        let c = self.conductivity * PI * PI - 1.0;
        let source = mesh
            .mode()
            .iter()
            .map(|phi| ex(format!("(3*t^2 + {c:?}*t^3)*exp(-t)*{phi:?}")))
            .chain((m..d).map(|_| num(0.0)))
            .collect();
        Ok(Scenario {
            label: "heat1d".into(),
            grid: grid_over(self.t_end, self.h),
            nu: NuSpec::One(self.nu),
            state_dim: d,
            material: MaterialSpec::Autonomous {
                m_kernel: KernelSpec { delta: Some(indicator(true, 1.0)), ..KernelSpec::default() },
                n_kernel: KernelSpec { delta: Some(indicator(false, 1.0 / self.conductivity)), ..KernelSpec::default() },
                min_nu: 0.0,
            },
            spatial: SpatialSpec::Stencil(StencilSpec {
                kind: StencilKind::GradDiv1d,
                points: self.points,
                bc: self.bc,
                coefficient: 1.0,
            }),
            source: SourceSpec::Expr(source),
            outputs: OutputSpec::default(),
        })
    }
}

#[derive(Clone, Debug)]
pub struct WaveMemory {
    pub points: usize,
    pub gamma: f64,
    pub beta: f64,
    pub h: f64,
    pub t_end: f64,
    pub nu: f64,
}

impl Default for WaveMemory {
    fn default() -> Self {
        Self { points: 8, gamma: 0.5, beta: 1.0, h: 0.1, t_end: 4.0, nu: 1.0 }
    }
}

impl WaveMemory {
    pub fn scenario(&self) -> Result<Scenario> {
        let mesh = HeatMesh::new(self.points, Boundary::Dirichlet)?;
        let (m, d) = (mesh.points(), mesh.dim());
        let memory = format!("{:?}*exp(-{:?}*t)", self.gamma, self.beta);
        let density = diag((0..d).map(|i| if i < m { num(0.0) } else { ex(memory.clone()) }).collect());
        let source = mesh
            .mode()
            .iter()
            .map(|phi| ex(format!("sin(3*t)*exp(-t)*{phi:?}")))
            .chain((m..d).map(|_| num(0.0)))
            .collect();
        Ok(Scenario {
            label: "wave_memory".into(),
            grid: grid_over(self.t_end, self.h),
            nu: NuSpec::One(self.nu),
            state_dim: d,
            material: MaterialSpec::Autonomous {
                m_kernel: KernelSpec { delta: Some(MatrixSpec::Scalar(num(1.0))), density: Some(density), blocks: None },
                n_kernel: KernelSpec::default(),
                min_nu: 0.0,
            },
            spatial: SpatialSpec::Stencil(StencilSpec {
                kind: StencilKind::GradDiv1d,
                points: self.points,
                bc: Boundary::Dirichlet,
                coefficient: 1.0,
            }),
            source: SourceSpec::Expr(source),
            outputs: OutputSpec::default(),
        })
    }
}

pub fn tdide() -> Scenario {
    let memory = MaterialSpec::Autonomous {
        m_kernel: KernelSpec { delta: Some(MatrixSpec::Scalar(num(1.0))), density: Some(MatrixSpec::Scalar(ex("0.5*exp(-t)"))), blocks: None },
        n_kernel: KernelSpec::default(),
        min_nu: 0.0,
    };
    let varying = MaterialSpec::Nonautonomous {
        m0: diag(vec![ex("2 + sin(t)"), num(0.0)]),
        m0dot: Some(diag(vec![ex("cos(t)"), num(0.0)])),
        m1: diag(vec![num(0.0), num(1.0)]),
        min_nu: 0.0,
    };
    // skew [[0, 1, 0.5], [-1, 0, 1], [-0.5, -1, 0]] + 0.1·[[1, 0.5, 0], [0.5, 1, 0], [0, 0, 0]]
    let a = [[0.1, 1.05, 0.5], [-0.95, 0.1, 1.0], [-0.5, -1.0, 0.0]];
    Scenario {
        label: "tdide".into(),
        grid: grid_over(10.0, 0.05),
        nu: NuSpec::One(1.0),
        state_dim: 3,
        material: MaterialSpec::Block {
            components: vec![
                ComponentSpec { dim: 1, material: memory },
                ComponentSpec { dim: 2, material: varying },
            ],
        },
        spatial: SpatialSpec::Matrix(MatrixSpec::Rows(a.iter().map(|r| r.iter().map(|&x| num(x)).collect()).collect())),
        source: SourceSpec::Expr(vec![ex("sin(t)"), ex("cos(2*t)"), ex("t*exp(-t)")]),
        outputs: OutputSpec::default(),
    }
}

/// `steps` time steps over `[0, 2π]`.
pub fn maria(steps: usize) -> Scenario {
    Scenario {
        label: "maria".into(),
        grid: GridSpec { t0: 0.0, h: 2.0 * PI / steps as f64, n: steps + 1 },
        nu: NuSpec::One(1.0),
        state_dim: 2,
        material: MaterialSpec::Nonautonomous {
            m0: MatrixSpec::Scalar(ex("2 + sin(t)")),
            m0dot: Some(MatrixSpec::Scalar(ex("cos(t)"))),
            m1: MatrixSpec::Scalar(num(0.0)),
            min_nu: 0.0,
        },
        spatial: SpatialSpec::Matrix(MatrixSpec::Rows(vec![vec![num(0.0), num(1.0)], vec![num(-1.0), num(0.0)]])),
        source: SourceSpec::Expr(vec![num(1.0), num(0.0)]),
        outputs: OutputSpec::default(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wellposed;
    use std::path::Path;

    #[test]
    fn every_example_builds_and_round_trips() {
        for name in NAMES {
            let s = named(name).unwrap();
            assert_eq!(Scenario::from_json(&s.to_json()).unwrap(), s, "{name}");
            let b = s.build(Path::new(".")).unwrap();
            assert!(b.problem.grid.n() * b.problem.dim() <= 2000, "{name} too large to certify");
            assert!(wellposed::monotonicity_check(&b.problem.a).unwrap().is_monotone, "{name}");
        }
        assert!(named("nope").is_err());
    }

    #[test]
    fn heat_source_matches_the_study() {
        let b = named("heat1d").unwrap().build(Path::new(".")).unwrap();
        let study = crate::convergence::HeatStudy::default();
        let (p, _) = study.problem(7, 0.05).unwrap();
        let diff = b.problem.f.sub(&p.f).unwrap();
        assert!(diff.max_abs_leading(p.grid.n()) < 1e-12);
    }

    #[test]
    fn tdide_spatial_is_skew_plus_psd() {
        let b = tdide().build(Path::new(".")).unwrap();
        let m = wellposed::monotonicity_check(&b.problem.a).unwrap();
        assert!(m.margin.abs() < 1e-12, "margin {}", m.margin);
    }
}
