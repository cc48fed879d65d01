//! Assembly of `B = D𝓜 + 𝓝 + A` and its causal solution.
//!
//! `B` is block lower triangular in time, so `Bu = f` is solved one time
//! step at a time: each step is a `d × d` system with the diagonal block
//! `B_kk`. The residual is always recomputed afterwards by an independent
//! matrix-free application of `B`.

use std::time::Instant;

use serde::Serialize;

use crate::grid::{TimeGrid, Trajectory, Weight};
use crate::linalg;
use crate::material::{LawSummary, MaterialLaw};
use crate::operators::{self, CausalOperator};
use crate::wellposed::{self, Certificate};
use crate::{CMat, CVec, Error, Result, C64};

/// Step blocks with a larger 1-norm condition number are treated as singular.
pub const MAX_STEP_CONDITION: f64 = 1e14;

#[derive(Clone, Debug)]
pub struct EvolutionaryProblem {
    pub grid: TimeGrid,
    pub weight: Weight,
    pub law: MaterialLaw,
    pub a: CMat,
    pub f: Trajectory,
    pub label: String,
}

impl EvolutionaryProblem {
    pub fn new(law: MaterialLaw, a: CMat, f: Trajectory, nu: f64, label: impl Into<String>) -> Result<Self> {
        let label = label.into();
        let grid = law.grid().clone();
        let d = law.dim();
        if a.shape() != (d, d) {
            return Err(Error::Shape(format!(
                "spatial operator is {}x{}, material law has dimension {d}",
                a.nrows(),
                a.ncols()
            )));
        }
        grid.check_same(f.grid())?;
        if f.dim() != d {
            return Err(Error::Shape(format!("source has {} components, expected {d}", f.dim())));
        }
        check_nu(&law, nu, &label)?;
        let weight = Weight::new(&grid, nu)?;
        Ok(Self { grid, weight, law, a, f, label })
    }

    pub fn nu(&self) -> f64 {
        self.weight.nu()
    }

    pub fn dim(&self) -> usize {
        self.law.dim()
    }

    pub fn with_nu(&self, nu: f64) -> Result<Self> {
        check_nu(&self.law, nu, &self.label)?;
        Ok(Self { weight: Weight::new(&self.grid, nu)?, ..self.clone() })
    }

    pub fn with_source(&self, f: Trajectory) -> Result<Self> {
        Self::new(self.law.clone(), self.a.clone(), f, self.nu(), self.label.clone())
    }
}

fn check_nu(law: &MaterialLaw, nu: f64, label: &str) -> Result<()> {
    if !(nu.is_finite() && nu >= 0.0) {
        return Err(Error::Parameter(format!("nu = {nu} must be finite and >= 0")));
    }
    if nu < law.min_nu() {
        return Err(Error::NuBelowThreshold { nu, min_nu: law.min_nu(), law: label.to_string() });
    }
    Ok(())
}

/// `B = D·𝓜 + 𝓝 + (Id_time ⊗ A)`.
pub fn assemble(p: &EvolutionaryProblem) -> Result<CausalOperator> {
    let d = operators::time_derivative(&p.grid, p.dim());
    operators::sum(&[
        operators::product(&d, p.law.m_op())?,
        p.law.n_op().clone(),
        operators::spatial(&p.grid, p.a.clone()),
    ])
}

#[derive(Clone, Debug)]
pub struct SolveOptions {
    pub certify: bool,
    /// Largest `n·d` for which the dense certificate is computed.
    pub certificate_cap: usize,
    pub cutoff_count: usize,
    pub residual_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        Self { certify: true, certificate_cap: 2000, cutoff_count: 8, residual_tol: 1e-10 }
    }
}

#[derive(Clone, Debug)]
pub struct SolveReport {
    pub u: Trajectory,
    pub residual_rel: f64,
    pub residual_ok: bool,
    /// `None` when certification was skipped (disabled or above the size cap).
    pub certificate: Option<Certificate>,
    /// `‖u‖_ν / ‖f‖_ν`.
    pub norm_ratio: f64,
    /// `norm_ratio ≤ 1/c + 1e−8`, checked only when certified.
    pub norm_bound_ok: Option<bool>,
    pub causality_ok: bool,
    pub max_step_condition: f64,
    pub wallclock_s: f64,
}

/// Flat JSON record of a solve.
#[derive(Clone, Debug, Serialize)]
pub struct SolveRecord {
    pub format: u32,
    pub label: String,
    pub nu: f64,
    pub t0: f64,
    pub h: f64,
    pub n: usize,
    pub dim: usize,
    pub residual_rel: f64,
    pub residual_ok: bool,
    pub norm_ratio: f64,
    pub norm_bound_ok: Option<bool>,
    pub causality_ok: bool,
    pub max_step_condition: f64,
    pub wallclock_s: f64,
    pub law: LawSummary,
    pub certificate: Option<Certificate>,
}

impl SolveReport {
    pub fn record(&self, p: &EvolutionaryProblem) -> SolveRecord {
        SolveRecord {
            format: 1,
            label: p.label.clone(),
            nu: p.nu(),
            t0: p.grid.t0(),
            h: p.grid.h(),
            n: p.grid.n(),
            dim: p.dim(),
            residual_rel: self.residual_rel,
            residual_ok: self.residual_ok,
            norm_ratio: self.norm_ratio,
            norm_bound_ok: self.norm_bound_ok,
            causality_ok: self.causality_ok,
            max_step_condition: self.max_step_condition,
            wallclock_s: self.wallclock_s,
            law: p.law.summary(),
            certificate: self.certificate.clone(),
        }
    }
}

/// Solution of a causal system together with the worst step condition number.
pub struct ForwardSolution {
    pub u: Trajectory,
    pub max_step_condition: f64,
}

struct StepSolver {
    lu: nalgebra::LU<C64, nalgebra::Dyn, nalgebra::Dyn>,
    condition: f64,
}

fn step_solver(block: CMat, k: usize, t: f64) -> Result<StepSolver> {
    let condition = linalg::condition_1(&block).unwrap_or(f64::INFINITY);
    if condition > MAX_STEP_CONDITION {
        return Err(Error::DegenerateStep { k, t, condition });
    }
    Ok(StepSolver { lu: block.lu(), condition })
}

/// Block forward substitution for a causal square operator.
pub fn forward_substitute(b: &CausalOperator, f: &Trajectory) -> Result<ForwardSolution> {
    if !b.is_square() || b.d_in() != f.dim() {
        return Err(Error::Shape(format!(
            "operator is {}x{}, source has {} components",
            b.d_out(),
            b.d_in(),
            f.dim()
        )));
    }
    b.grid().check_same(f.grid())?;
    if b.upper_band() != 0 {
        return Err(Error::Structural("forward substitution needs a causal operator".into()));
    }
    let grid = b.grid();
    let (n, d) = (grid.n(), b.d_in());
    let invariant = b.is_time_invariant();
    let mut fixed: Option<StepSolver> = None;
    let mut solved: Vec<CVec> = Vec::with_capacity(n);
    let mut max_cond: f64 = 0.0;
    for k in 0..n {
        let history = b.row(k, &|j| if j < k { solved[j].clone() } else { CVec::zeros(d) });
        let rhs = CVec::from_column_slice(f.at(k)) - history;
        let fresh;
        let step = if invariant {
            if fixed.is_none() {
                fixed = Some(step_solver(b.block(0, 0), k, grid.time(k))?);
            }
            fixed.as_ref().unwrap()
        } else {
            fresh = step_solver(b.block(k, k), k, grid.time(k))?;
            &fresh
        };
        max_cond = max_cond.max(step.condition);
        let uk = step
            .lu
            .solve(&rhs)
            .ok_or(Error::DegenerateStep { k, t: grid.time(k), condition: f64::INFINITY })?;
        if uk.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
            return Err(Error::Numeric(format!("non-finite solution at step {k}")));
        }
        solved.push(uk);
    }
    let data = solved.into_iter().flat_map(|v| v.data.as_vec().clone()).collect();
    Ok(ForwardSolution { u: Trajectory::new(grid, d, data)?, max_step_condition: max_cond })
}

fn relative_residual(b: &CausalOperator, u: &Trajectory, f: &Trajectory, w: &Weight) -> Result<f64> {
    let r = b.apply(u)?.sub(f)?.weighted_norm(w);
    let fnorm = f.weighted_norm(w);
    Ok(if fnorm > 0.0 { r / fnorm } else { r })
}

pub fn solve(p: &EvolutionaryProblem) -> Result<SolveReport> {
    solve_with(p, &SolveOptions::default())
}

pub fn solve_with(p: &EvolutionaryProblem, opts: &SolveOptions) -> Result<SolveReport> {
    let start = Instant::now();
    let b = assemble(p)?;
    let sol = forward_substitute(&b, &p.f)?;
    let wallclock_s = start.elapsed().as_secs_f64();
    let residual_rel = relative_residual(&b, &sol.u, &p.f, &p.weight)?;
    let fnorm = p.f.weighted_norm(&p.weight);
    let unorm = sol.u.weighted_norm(&p.weight);
    let norm_ratio = if fnorm > 0.0 { unorm / fnorm } else { 0.0 };
    let certificate = if opts.certify && p.grid.n() * p.dim() <= opts.certificate_cap {
        let maria = match p.law.pointwise() {
            Some(s) => Some(wellposed::pointwise_condition_from_samples(s, p.nu())?),
            None => None,
        };
        Some(wellposed::certify(&b, &p.weight, opts.cutoff_count, maria)?)
    } else {
        None
    };
    let norm_bound_ok = certificate
        .as_ref()
        .filter(|c| c.certified)
        .map(|c| unorm <= fnorm / c.c + 1e-8);
    Ok(SolveReport {
        u: sol.u,
        residual_rel,
        residual_ok: residual_rel <= opts.residual_tol,
        certificate,
        norm_ratio,
        norm_bound_ok,
        causality_ok: operators::is_causal_structure(&b, 0.0).causal,
        max_step_condition: sol.max_step_condition,
        wallclock_s,
    })
}

/// Dense LU solve of an arbitrary square operator; the oracle for [`forward_substitute`].
pub fn solve_operator_dense(b: &CausalOperator, f: &Trajectory, cap: usize) -> Result<Trajectory> {
    let size = b.grid().n() * b.d_in();
    if size > cap {
        return Err(Error::CapExceeded { size, cap });
    }
    if !b.is_square() || b.d_in() != f.dim() {
        return Err(Error::Shape("dense solve needs a square operator matching the source".into()));
    }
    let rhs = CVec::from_column_slice(f.as_slice());
    let x = b
        .materialize()
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::Numeric("dense system is singular".into()))?;
    Trajectory::new(b.grid(), b.d_in(), x.data.as_vec().clone())
}

pub fn solve_dense_oracle(p: &EvolutionaryProblem) -> Result<Trajectory> {
    solve_dense_oracle_capped(p, 2000)
}

pub fn solve_dense_oracle_capped(p: &EvolutionaryProblem, cap: usize) -> Result<Trajectory> {
    solve_operator_dense(&assemble(p)?, &p.f, cap)
}

/// `(1 + εD)⁻¹` applied to the solution path; `ε = 0` returns the solution itself.
pub fn solve_regularized(p: &EvolutionaryProblem, eps: f64) -> Result<Trajectory> {
    let reg = operators::yosida(&p.grid, eps, p.dim())?;
    let u = forward_substitute(&assemble(p)?, &p.f)?.u;
    if eps == 0.0 {
        return Ok(u);
    }
    reg.apply(&u)
}

/// Solves the same problem under each weight. All weights are validated before any solve.
pub fn nu_sweep(p: &EvolutionaryProblem, nus: &[f64]) -> Result<Vec<SolveReport>> {
    nu_sweep_with(p, nus, &SolveOptions::default())
}

pub fn nu_sweep_with(p: &EvolutionaryProblem, nus: &[f64], opts: &SolveOptions) -> Result<Vec<SolveReport>> {
    let problems = nus.iter().map(|&nu| p.with_nu(nu)).collect::<Result<Vec<_>>>()?;
    std::thread::scope(|s| {
        let handles: Vec<_> = problems.iter().map(|q| s.spawn(move || solve_with(q, opts))).collect();
        handles.into_iter().map(|h| h.join().expect("solver thread panicked")).collect()
    })
}
