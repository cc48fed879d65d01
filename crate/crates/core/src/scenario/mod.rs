//! Declarative problem descriptions.
//!
//! A scenario is a JSON document: grid, weight(s), state dimension, material
//! law, spatial operator, source and output paths. Unknown keys are
//! rejected. Matrices are row-major; an entry is a number, an expression in
//! `t` (see [`expr`]) or a `[re, im]` pair of those.
//!
//! ```json
//! {
//!   "grid": {"t0": 0, "h": 0.05, "n": 41},
//!   "nu": 1,
//!   "state_dim": 1,
//!   "material": {"kind": "nonautonomous", "m0": "2 + sin(t)", "m0dot": "cos(t)", "m1": 0},
//!   "spatial": {"matrix": 0},
//!   "source": {"expr": ["1"]}
//! }
//! ```

pub mod examples;
pub mod expr;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::convergence::{Boundary, HeatMesh};
use crate::grid::{TimeGrid, Trajectory};
use crate::material::{self, MaterialLaw};
use crate::solver::EvolutionaryProblem;
use crate::{CMat, Error, Result, C64};

pub use expr::Expr;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub label: String,
    pub grid: GridSpec,
    pub nu: NuSpec,
    pub state_dim: usize,
    pub material: MaterialSpec,
    pub spatial: SpatialSpec,
    pub source: SourceSpec,
    #[serde(default, skip_serializing_if = "OutputSpec::is_empty")]
    pub outputs: OutputSpec,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub t0: f64,
    pub h: f64,
    pub n: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum NuSpec {
    One(f64),
    Many(Vec<f64>),
}

impl NuSpec {
    pub fn values(&self) -> Vec<f64> {
        match self {
            NuSpec::One(x) => vec![*x],
            NuSpec::Many(v) => v.clone(),
        }
    }
}

/// A real part or imaginary part.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Part {
    Num(f64),
    Expr(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Num(f64),
    Expr(String),
    Complex([Part; 2]),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagSpec {
    pub diag: Vec<Entry>,
}

/// `c` (meaning `c·I`), `{"diag": [...]}` or a list of rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Scalar(Entry),
    Diag(DiagSpec),
    Rows(Vec<Vec<Entry>>),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct KernelSpec {
    /// Weight of the identity-like term at lag zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<MatrixSpec>,
    /// Kernel density `k(s)`, entering as `h·k(jh)` at lag `j`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub density: Option<MatrixSpec>,
    /// Explicit blocks `g_0, g_1, …` (exclusive with `density`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub blocks: Option<Vec<MatrixSpec>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum MaterialSpec {
    Autonomous {
        m_kernel: KernelSpec,
        n_kernel: KernelSpec,
        #[serde(default)]
        min_nu: f64,
    },
    Nonautonomous {
        m0: MatrixSpec,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        m0dot: Option<MatrixSpec>,
        m1: MatrixSpec,
        #[serde(default)]
        min_nu: f64,
    },
    Block {
        components: Vec<ComponentSpec>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentSpec {
    pub dim: usize,
    pub material: MaterialSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SpatialSpec {
    Matrix(MatrixSpec),
    Stencil(StencilSpec),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StencilKind {
    #[serde(rename = "grad_div_1d")]
    GradDiv1d,
}

fn one() -> f64 {
    1.0
}

/// `c·[[0, div], [grad, 0]]` on `(θ, q)` over the unit interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StencilSpec {
    pub kind: StencilKind,
    pub points: usize,
    pub bc: Boundary,
    #[serde(default = "one")]
    pub coefficient: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpulseSpec {
    pub k: usize,
    /// Defaults to all ones.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vector: Option<Vec<Entry>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum SourceSpec {
    /// One expression per component.
    Expr(Vec<Entry>),
    Impulse(ImpulseSpec),
    /// Trajectory CSV, relative paths resolved against the scenario file.
    Csv(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub report: Option<String>,
}

impl OutputSpec {
    fn is_empty(&self) -> bool {
        self.csv.is_none() && self.report.is_none()
    }
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

enum CompiledPart {
    Const(f64),
    Expr(Expr),
}

impl CompiledPart {
    fn eval(&self, t: f64) -> f64 {
        match self {
            CompiledPart::Const(x) => *x,
            CompiledPart::Expr(e) => e.eval(t),
        }
    }

    fn uses_t(&self) -> bool {
        matches!(self, CompiledPart::Expr(e) if e.uses_t())
    }
}

fn compile_part(p: &Part) -> Result<CompiledPart> {
    match p {
        Part::Num(x) => Ok(CompiledPart::Const(*x)),
        Part::Expr(s) => Ok(CompiledPart::Expr(Expr::parse(s)?)),
    }
}

struct CompiledEntry(CompiledPart, CompiledPart);

impl CompiledEntry {
    fn eval(&self, t: f64) -> C64 {
        C64::new(self.0.eval(t), self.1.eval(t))
    }

    fn uses_t(&self) -> bool {
        self.0.uses_t() || self.1.uses_t()
    }
}

fn compile_entry(e: &Entry) -> Result<CompiledEntry> {
    Ok(match e {
        Entry::Num(x) => CompiledEntry(CompiledPart::Const(*x), CompiledPart::Const(0.0)),
        Entry::Expr(s) => CompiledEntry(compile_part(&Part::Expr(s.clone()))?, CompiledPart::Const(0.0)),
        Entry::Complex([re, im]) => CompiledEntry(compile_part(re)?, compile_part(im)?),
    })
}

/// A matrix-valued function of `t`.
pub struct CompiledMatrix {
    dim: usize,
    form: Form,
}

enum Form {
    Scalar(CompiledEntry),
    Diag(Vec<CompiledEntry>),
    Rows(Vec<Vec<CompiledEntry>>),
}

impl CompiledMatrix {
    pub fn compile(spec: &MatrixSpec, dim: usize, what: &str) -> Result<Self> {
        let form = match spec {
            MatrixSpec::Scalar(e) => Form::Scalar(compile_entry(e)?),
            MatrixSpec::Diag(d) => {
                if d.diag.len() != dim {
                    return Err(Error::Scenario(format!(
                        "{what}: diagonal has {} entries, expected {dim}",
                        d.diag.len()
                    )));
                }
                Form::Diag(d.diag.iter().map(compile_entry).collect::<Result<_>>()?)
            }
            MatrixSpec::Rows(rows) => {
                if rows.len() != dim || rows.iter().any(|r| r.len() != dim) {
                    return Err(Error::Scenario(format!("{what}: matrix must be {dim}x{dim}")));
                }
                Form::Rows(
                    rows.iter()
                        .map(|r| r.iter().map(compile_entry).collect::<Result<Vec<_>>>())
                        .collect::<Result<_>>()?,
                )
            }
        };
        Ok(Self { dim, form })
    }

    pub fn uses_t(&self) -> bool {
        match &self.form {
            Form::Scalar(e) => e.uses_t(),
            Form::Diag(v) => v.iter().any(|e| e.uses_t()),
            Form::Rows(r) => r.iter().flatten().any(|e| e.uses_t()),
        }
    }

    pub fn eval(&self, t: f64) -> CMat {
        let d = self.dim;
        match &self.form {
            Form::Scalar(e) => CMat::identity(d, d) * e.eval(t),
            Form::Diag(v) => CMat::from_fn(d, d, |i, j| if i == j { v[i].eval(t) } else { C64::from(0.0) }),
            Form::Rows(r) => CMat::from_fn(d, d, |i, j| r[i][j].eval(t)),
        }
    }
}

fn kernel_blocks(spec: &KernelSpec, grid: &TimeGrid, dim: usize, what: &str) -> Result<Vec<CMat>> {
    let mut blocks = match (&spec.density, &spec.blocks) {
        (Some(_), Some(_)) => {
            return Err(Error::Scenario(format!("{what}: 'density' and 'blocks' are exclusive")));
        }
        (Some(density), None) => {
            let k = CompiledMatrix::compile(density, dim, what)?;
            let h = grid.h();
            (0..grid.n()).map(|j| k.eval(j as f64 * h) * C64::from(h)).collect()
        }
        (None, Some(list)) => list
            .iter()
            .map(|b| Ok(CompiledMatrix::compile(b, dim, what)?.eval(0.0)))
            .collect::<Result<Vec<_>>>()?,
        (None, None) => vec![CMat::zeros(dim, dim)],
    };
    if blocks.is_empty() {
        blocks.push(CMat::zeros(dim, dim));
    }
    if let Some(delta) = &spec.delta {
        blocks[0] += CompiledMatrix::compile(delta, dim, what)?.eval(0.0);
    }
    Ok(blocks)
}

fn build_material(spec: &MaterialSpec, grid: &TimeGrid, dim: usize, path: &str) -> Result<MaterialLaw> {
    match spec {
        MaterialSpec::Autonomous { m_kernel, n_kernel, min_nu } => material::autonomous_law(
            grid,
            kernel_blocks(m_kernel, grid, dim, &format!("{path}.m_kernel"))?,
            kernel_blocks(n_kernel, grid, dim, &format!("{path}.n_kernel"))?,
            *min_nu,
        ),
        MaterialSpec::Nonautonomous { m0, m0dot, m1, min_nu } => {
            let m0 = CompiledMatrix::compile(m0, dim, &format!("{path}.m0"))?;
            let m1 = CompiledMatrix::compile(m1, dim, &format!("{path}.m1"))?;
            let m0dot = m0dot
                .as_ref()
                .map(|s| CompiledMatrix::compile(s, dim, &format!("{path}.m0dot")))
                .transpose()?;
            let deriv = m0dot.as_ref().map(|c| move |t: f64| c.eval(t));
            let law = material::nonautonomous_law(
                grid,
                &|t| m0.eval(t),
                deriv.as_ref().map(|f| f as &dyn Fn(f64) -> CMat),
                &|t| m1.eval(t),
            )?;
            law.with_min_nu(*min_nu)
        }
        MaterialSpec::Block { components } => {
            let total: usize = components.iter().map(|c| c.dim).sum();
            if total != dim {
                return Err(Error::Scenario(format!(
                    "{path}: component dimensions add up to {total}, state_dim is {dim}"
                )));
            }
            let mut law: Option<MaterialLaw> = None;
            for (i, c) in components.iter().enumerate() {
                let part = build_material(&c.material, grid, c.dim, &format!("{path}.components[{i}]"))?;
                law = Some(match law {
                    None => part,
                    Some(acc) => material::block_direct_sum(&acc, &part)?,
                });
            }
            law.ok_or_else(|| Error::Scenario(format!("{path}: no components")))
        }
    }
}

fn build_spatial(spec: &SpatialSpec, dim: usize) -> Result<CMat> {
    match spec {
        SpatialSpec::Matrix(m) => {
            let c = CompiledMatrix::compile(m, dim, "spatial.matrix")?;
            if c.uses_t() {
                return Err(Error::Scenario("spatial.matrix must not depend on t".into()));
            }
            Ok(c.eval(0.0))
        }
        SpatialSpec::Stencil(s) => {
            let mesh = HeatMesh::new(s.points, s.bc)?;
            if mesh.dim() != dim {
                return Err(Error::Scenario(format!(
                    "spatial.stencil: {} points with {:?} boundary give dimension {}, state_dim is {dim}",
                    s.points,
                    s.bc,
                    mesh.dim()
                )));
            }
            Ok(mesh.spatial_operator(s.coefficient))
        }
    }
}

fn build_source(spec: &SourceSpec, grid: &TimeGrid, dim: usize, base: &Path) -> Result<Trajectory> {
    match spec {
        SourceSpec::Expr(entries) => {
            if entries.len() != dim {
                return Err(Error::Scenario(format!(
                    "source.expr: {} expressions for {dim} components",
                    entries.len()
                )));
            }
            let compiled = entries.iter().map(compile_entry).collect::<Result<Vec<_>>>()?;
            Trajectory::from_fn(grid, dim, |t| compiled.iter().map(|e| e.eval(t)).collect())
        }
        SourceSpec::Impulse(imp) => {
            if imp.k >= grid.n() {
                return Err(Error::Scenario(format!(
                    "source.impulse: k = {} outside a grid of {} points",
                    imp.k,
                    grid.n()
                )));
            }
            let v: Vec<C64> = match &imp.vector {
                None => vec![C64::from(1.0); dim],
                Some(entries) if entries.len() == dim => {
                    entries.iter().map(|e| Ok(compile_entry(e)?.eval(0.0))).collect::<Result<_>>()?
                }
                Some(entries) => {
                    return Err(Error::Scenario(format!(
                        "source.impulse.vector has {} entries, expected {dim}",
                        entries.len()
                    )));
                }
            };
            let mut f = Trajectory::zeros(grid, dim);
            f.at_mut(imp.k).copy_from_slice(&v);
            Ok(f)
        }
        SourceSpec::Csv(path) => {
            let full = base.join(path);
            let text = std::fs::read_to_string(&full).map_err(|source| Error::Io { path: full.display().to_string(), source })?;
            Trajectory::from_csv(grid, dim, &text)
        }
    }
}

/// A scenario turned into a solvable problem at its first weight.
#[derive(Clone, Debug)]
pub struct Built {
    pub problem: EvolutionaryProblem,
    pub nus: Vec<f64>,
}

impl Scenario {
    /// Parses JSON text; errors name the offending field and position.
    pub fn from_json(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            Error::Scenario(format!("at '{path}': {}", e.into_inner()))
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io { path: path.display().to_string(), source })?;
        Self::from_json(&text)
    }

    pub fn grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.grid.t0, self.grid.h, self.grid.n)
    }

    /// Builds the problem; relative file references resolve against `base`.
    pub fn build(&self, base: &Path) -> Result<Built> {
        let grid = self.grid()?;
        let nus = self.nu.values();
        let first = *nus.first().ok_or_else(|| Error::Scenario("nu list is empty".into()))?;
        let law = build_material(&self.material, &grid, self.state_dim, "material")?;
        let a = build_spatial(&self.spatial, self.state_dim)?;
        let f = build_source(&self.source, &grid, self.state_dim, base)?;
        let label = if self.label.is_empty() { "scenario".to_string() } else { self.label.clone() };
        Ok(Built { problem: EvolutionaryProblem::new(law, a, f, first, label)?, nus })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::material::LawKind;

    const MINIMAL: &str = r#"{
        "grid": {"t0": 0, "h": 0.1, "n": 5},
        "nu": 1,
        "state_dim": 2,
        "material": {"kind": "nonautonomous", "m0": "2 + sin(t)", "m0dot": "cos(t)", "m1": {"diag": [0, [0.5, "t"]]}},
        "spatial": {"matrix": [[0, 1], [-1, 0]]},
        "source": {"expr": ["1", [0, "t"]]}
    }"#;

    #[test]
    fn parses_and_builds() {
        let s = Scenario::from_json(MINIMAL).unwrap();
        let b = s.build(Path::new(".")).unwrap();
        let p = &b.problem;
        assert_eq!(p.dim(), 2);
        assert_eq!(p.law.kind(), LawKind::Nonautonomous);
        assert_eq!(p.law.n_op().block(2, 2)[(1, 1)], C64::new(0.5, 0.2));
        assert_eq!(p.f.at(3)[1], C64::new(0.0, 0.30000000000000004));
        assert_eq!(p.a[(0, 1)], C64::from(1.0));
    }

    #[test]
    fn round_trip() {
        let s = Scenario::from_json(MINIMAL).unwrap();
        let again = Scenario::from_json(&s.to_json()).unwrap();
        assert_eq!(s, again);
        assert_eq!(again.to_json(), s.to_json());
    }

    #[test]
    fn unknown_keys_are_rejected_with_path() {
        let bad = MINIMAL.replace("\"n\": 5", "\"n\": 5, \"extra\": 1");
        let err = Scenario::from_json(&bad).unwrap_err().to_string();
        assert!(err.contains("grid") && err.contains("extra"), "{err}");
        let bad = MINIMAL.replace("\"m1\"", "\"m2\"");
        assert!(Scenario::from_json(&bad).is_err());
    }

    #[test]
    fn semantic_errors() {
        let bad = MINIMAL.replace("\"n\": 5", "\"n\": 1");
        assert!(matches!(Scenario::from_json(&bad).unwrap().build(Path::new(".")), Err(Error::InvalidGrid(_))));
        let bad = MINIMAL.replace("[\"1\", [0, \"t\"]]", "[\"1\"]");
        assert!(Scenario::from_json(&bad).unwrap().build(Path::new(".")).is_err());
        let bad = MINIMAL.replace("2 + sin(t)", "2 + sin(");
        assert!(Scenario::from_json(&bad).unwrap().build(Path::new(".")).is_err());
        let bad = MINIMAL.replace("[[0, 1], [-1, 0]]", "\"t\"");
        assert!(Scenario::from_json(&bad).unwrap().build(Path::new(".")).is_err());
    }

    #[test]
    fn kernels_and_impulse() {
        let text = r#"{
            "grid": {"t0": 0, "h": 0.5, "n": 4},
            "nu": [1, 2],
            "state_dim": 1,
            "material": {"kind": "autonomous",
                         "m_kernel": {"delta": 1, "density": "exp(-t)"},
                         "n_kernel": {"blocks": [0.5, 0.25]}},
            "spatial": {"matrix": 0},
            "source": {"impulse": {"k": 1}}
        }"#;
        let s = Scenario::from_json(text).unwrap();
        let b = s.build(Path::new(".")).unwrap();
        assert_eq!(b.nus, vec![1.0, 2.0]);
        let m = b.problem.law.m_op();
        assert_eq!(m.block(0, 0)[(0, 0)], C64::from(1.5));
        assert_eq!(m.block(2, 0)[(0, 0)], C64::from(0.5 * (-1.0f64).exp()));
        assert_eq!(b.problem.law.n_op().block(1, 0)[(0, 0)], C64::from(0.25));
        assert_eq!(b.problem.f.at(1)[0], C64::from(1.0));
        assert_eq!(b.problem.f.at(0)[0], C64::from(0.0));
    }

    #[test]
    fn block_material_and_stencil() {
        let text = r#"{
            "grid": {"t0": 0, "h": 0.1, "n": 3},
            "nu": 1,
            "state_dim": 3,
            "material": {"kind": "block", "components": [
                {"dim": 1, "material": {"kind": "autonomous", "m_kernel": {"delta": 1}, "n_kernel": {}}},
                {"dim": 2, "material": {"kind": "nonautonomous", "m0": {"diag": [1, 0]}, "m1": {"diag": [0, 1]}}}
            ]},
            "spatial": {"stencil": {"kind": "grad_div_1d", "points": 1, "bc": "dirichlet"}},
            "source": {"expr": [0, 0, 0]}
        }"#;
        let b = Scenario::from_json(text).unwrap().build(Path::new(".")).unwrap();
        assert_eq!(b.problem.law.kind(), LawKind::Block);
        assert_eq!(b.problem.a[(1, 0)], C64::from(2.0));
        assert_eq!(b.problem.a[(0, 1)], C64::from(-2.0));
    }
}
