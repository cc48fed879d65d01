//! Material laws `(𝓜, 𝓝)` together with the bounded operator `M` for which
//! `𝓜∂₀ ⊆ ∂₀𝓜 + M`.
//!
//! Autonomous laws are convolution kernels and commute with the discrete
//! derivative, so their commutator is zero. Nonautonomous laws are
//! multiplication operators `M₀(t)`, `M₁(t)` with commutator `−Ṁ₀(t)`; on the
//! grid the identity holds up to `O(h)` on smooth trajectories, and that
//! residual is computed once when the law is built.

use serde::Serialize;

use crate::grid::{TimeGrid, Trajectory, Weight};
use crate::linalg;
use crate::operators::{self, CausalOperator};
use crate::{CMat, Error, Result, C64};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LawKind {
    Autonomous,
    Nonautonomous,
    Block,
}

/// Where `Ṁ₀` came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DerivativeSource {
    /// No derivative needed (autonomous law).
    NotNeeded,
    Supplied,
    /// Second-order central differences, one-sided second order at the ends.
    CentralDifference,
}

/// Result of the eager commutator validation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CommutatorCheck {
    /// `‖(𝓜D − D𝓜 − M)u‖_ν / ‖u‖_ν` on the standard probe.
    pub residual: f64,
    pub tolerance: f64,
    pub h: f64,
    pub passed: bool,
}

/// Grid samples of `M₀`, `Ṁ₀`, `M₁` kept for the pointwise positivity condition.
#[derive(Clone, Debug)]
pub struct PointwiseSamples {
    pub m0: Vec<CMat>,
    pub m0dot: Vec<CMat>,
    pub m1: Vec<CMat>,
}

#[derive(Clone, Debug)]
pub struct MaterialLaw {
    grid: TimeGrid,
    dim: usize,
    m_op: CausalOperator,
    n_op: CausalOperator,
    commutator_op: CausalOperator,
    kind: LawKind,
    min_nu: f64,
    derivative: DerivativeSource,
    check: CommutatorCheck,
    pointwise: Option<PointwiseSamples>,
}

/// Serializable description of a law for reports.
#[derive(Clone, Debug, Serialize)]
pub struct LawSummary {
    pub kind: LawKind,
    pub dim: usize,
    pub min_nu: f64,
    pub derivative: DerivativeSource,
    pub commutator: CommutatorCheck,
}

impl MaterialLaw {
    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn m_op(&self) -> &CausalOperator {
        &self.m_op
    }

    pub fn n_op(&self) -> &CausalOperator {
        &self.n_op
    }

    pub fn commutator_op(&self) -> &CausalOperator {
        &self.commutator_op
    }

    pub fn kind(&self) -> LawKind {
        self.kind
    }

    pub fn min_nu(&self) -> f64 {
        self.min_nu
    }

    pub fn derivative_source(&self) -> DerivativeSource {
        self.derivative
    }

    pub fn commutator_check(&self) -> CommutatorCheck {
        self.check
    }

    pub fn pointwise(&self) -> Option<&PointwiseSamples> {
        self.pointwise.as_ref()
    }

    pub fn with_min_nu(mut self, min_nu: f64) -> Result<Self> {
        if !(min_nu.is_finite() && min_nu >= 0.0) {
            return Err(Error::Parameter(format!("min_nu = {min_nu} must be finite and >= 0")));
        }
        self.min_nu = min_nu;
        Ok(self)
    }

    pub fn summary(&self) -> LawSummary {
        LawSummary {
            kind: self.kind,
            dim: self.dim,
            min_nu: self.min_nu,
            derivative: self.derivative,
            commutator: self.check,
        }
    }

    /// Replaces the commutator operator, re-running validation. Used to
    /// exercise the validator with deliberately wrong commutators.
    pub fn with_commutator(mut self, commutator_op: CausalOperator) -> Result<Self> {
        check_square(&commutator_op, self.dim, "commutator")?;
        self.grid.check_same(commutator_op.grid())?;
        self.commutator_op = commutator_op;
        let tolerance = self.check.tolerance;
        let residual = commutator_residual(&self)?;
        self.check = CommutatorCheck { residual, tolerance, h: self.grid.h(), passed: residual <= tolerance };
        Ok(self)
    }
}

fn check_square(op: &CausalOperator, dim: usize, what: &str) -> Result<()> {
    if op.d_in() != dim || op.d_out() != dim {
        return Err(Error::Shape(format!(
            "{what} is {}x{}, expected {dim}x{dim}",
            op.d_out(),
            op.d_in()
        )));
    }
    Ok(())
}

fn kernel_dim(blocks: &[CMat], what: &str) -> Result<usize> {
    let first = blocks
        .first()
        .ok_or_else(|| Error::Shape(format!("{what} kernel is empty")))?;
    if first.nrows() != first.ncols() {
        return Err(Error::Shape(format!("{what} kernel blocks must be square")));
    }
    Ok(first.nrows())
}

/// `𝓜 = M(∂₀⁻¹)` and `𝓝` given by causal kernels; the commutator is zero.
pub fn autonomous_law(grid: &TimeGrid, m_kernel: Vec<CMat>, n_kernel: Vec<CMat>, min_nu: f64) -> Result<MaterialLaw> {
    let dim = kernel_dim(&m_kernel, "M")?;
    if kernel_dim(&n_kernel, "N")? != dim {
        return Err(Error::Shape(format!(
            "M kernel has dimension {dim}, N kernel {}",
            n_kernel[0].nrows()
        )));
    }
    let m_op = operators::causal_kernel_operator(grid, m_kernel)?;
    let n_op = operators::causal_kernel_operator(grid, n_kernel)?;
    MaterialLaw {
        grid: grid.clone(),
        dim,
        m_op,
        n_op,
        commutator_op: operators::zero(grid, dim, dim),
        kind: LawKind::Autonomous,
        min_nu: 0.0,
        derivative: DerivativeSource::NotNeeded,
        // Toeplitz operators commute exactly with D.
        check: CommutatorCheck { residual: 0.0, tolerance: 0.0, h: grid.h(), passed: true },
        pointwise: None,
    }
    .with_min_nu(min_nu)
}

/// Second-order difference quotient of grid samples.
pub fn central_difference(samples: &[CMat], h: f64) -> Vec<CMat> {
    let n = samples.len();
    let s = |x: f64| C64::from(x / h);
    if n < 3 {
        let d = (&samples[1] - &samples[0]) * s(1.0);
        return vec![d.clone(), d];
    }
    (0..n)
        .map(|k| {
            if k == 0 {
                (&samples[0] * C64::from(-3.0) + &samples[1] * C64::from(4.0) - &samples[2]) * s(0.5)
            } else if k == n - 1 {
                (&samples[n - 1] * C64::from(3.0) - &samples[n - 2] * C64::from(4.0) + &samples[n - 3]) * s(0.5)
            } else {
                (&samples[k + 1] - &samples[k - 1]) * s(0.5)
            }
        })
        .collect()
}

/// `max_k ‖A_k − A_{k−1}‖ / h`.
fn lipschitz_estimate(samples: &[CMat], h: f64) -> f64 {
    samples
        .windows(2)
        .map(|p| linalg::spectral_norm(&(&p[1] - &p[0])) / h)
        .fold(0.0, f64::max)
}

/// `𝓜 = M₀(t)`, `𝓝 = M₁(t)`, commutator `−Ṁ₀(t)`. Without `m0dot` the derivative is
/// approximated by central differences of the grid samples.
pub fn nonautonomous_law(
    grid: &TimeGrid,
    m0: &dyn Fn(f64) -> CMat,
    m0dot: Option<&dyn Fn(f64) -> CMat>,
    m1: &dyn Fn(f64) -> CMat,
) -> Result<MaterialLaw> {
    let times = grid.times();
    let m0s: Vec<CMat> = times.iter().map(|&t| m0(t)).collect();
    let m1s: Vec<CMat> = times.iter().map(|&t| m1(t)).collect();
    let (m0dots, derivative) = match m0dot {
        Some(f) => (times.iter().map(|&t| f(t)).collect(), DerivativeSource::Supplied),
        None => (central_difference(&m0s, grid.h()), DerivativeSource::CentralDifference),
    };
    nonautonomous_from_samples(grid, m0s, m0dots, m1s, derivative)
}

pub fn nonautonomous_from_samples(
    grid: &TimeGrid,
    m0: Vec<CMat>,
    m0dot: Vec<CMat>,
    m1: Vec<CMat>,
    derivative: DerivativeSource,
) -> Result<MaterialLaw> {
    let m_op = operators::multiplication_from_samples(grid, m0.clone())?;
    let n_op = operators::multiplication_from_samples(grid, m1.clone())?;
    let neg: Vec<CMat> = m0dot.iter().map(|a| -a).collect();
    let commutator_op = operators::multiplication_from_samples(grid, neg)?;
    let dim = m_op.d_in();
    check_square(&m_op, dim, "M0")?;
    check_square(&n_op, dim, "M1")?;
    check_square(&commutator_op, dim, "M0dot")?;
    let h = grid.h();
    let mut law = MaterialLaw {
        grid: grid.clone(),
        dim,
        m_op,
        n_op,
        commutator_op,
        kind: LawKind::Nonautonomous,
        min_nu: 0.0,
        derivative,
        check: CommutatorCheck { residual: 0.0, tolerance: 0.0, h, passed: true },
        pointwise: None,
    };
    let probe = standard_probe(grid, dim);
    let rho = derivative_ratio(grid, &probe)?;
    let tolerance = 10.0 * h * (lipschitz_estimate(&m0, h) * rho + lipschitz_estimate(&m0dot, h)) + 1e-12;
    let residual = commutator_residual(&law)?;
    law.check = CommutatorCheck { residual, tolerance, h, passed: residual <= tolerance };
    law.pointwise = Some(PointwiseSamples { m0, m0dot, m1 });
    Ok(law)
}

/// `diag(law0, law1)` on the direct sum of the component spaces.
pub fn block_direct_sum(law0: &MaterialLaw, law1: &MaterialLaw) -> Result<MaterialLaw> {
    law0.grid.check_same(&law1.grid)?;
    if law1.dim == 0 {
        return Ok(law0.clone());
    }
    if law0.dim == 0 {
        return Ok(law1.clone());
    }
    let m_op = operators::block_diagonal(&[&law0.m_op, &law1.m_op])?;
    let n_op = operators::block_diagonal(&[&law0.n_op, &law1.n_op])?;
    let commutator_op = operators::block_diagonal(&[&law0.commutator_op, &law1.commutator_op])?;
    let derivative = [law0.derivative, law1.derivative]
        .into_iter()
        .max_by_key(|d| match d {
            DerivativeSource::NotNeeded => 0,
            DerivativeSource::Supplied => 1,
            DerivativeSource::CentralDifference => 2,
        })
        .unwrap();
    let pointwise = match (&law0.pointwise, &law1.pointwise) {
        (Some(a), Some(b)) => {
            let join = |x: &[CMat], y: &[CMat]| -> Vec<CMat> { x.iter().zip(y).map(|(p, q)| direct_sum_matrix(p, q)).collect() };
            Some(PointwiseSamples {
                m0: join(&a.m0, &b.m0),
                m0dot: join(&a.m0dot, &b.m0dot),
                m1: join(&a.m1, &b.m1),
            })
        }
        _ => None,
    };
    let mut law = MaterialLaw {
        grid: law0.grid.clone(),
        dim: law0.dim + law1.dim,
        m_op,
        n_op,
        commutator_op,
        kind: LawKind::Block,
        min_nu: law0.min_nu.max(law1.min_nu),
        derivative,
        check: law0.check,
        pointwise,
    };
    let residual = commutator_residual(&law)?;
    let tolerance = law0.check.tolerance.max(law1.check.tolerance);
    law.check = CommutatorCheck { residual, tolerance, h: law.grid.h(), passed: residual <= tolerance.max(1e-12) };
    Ok(law)
}

pub fn direct_sum_matrix(a: &CMat, b: &CMat) -> CMat {
    let mut m = CMat::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    m.view_mut((0, 0), a.shape()).copy_from(a);
    m.view_mut((a.nrows(), a.ncols()), b.shape()).copy_from(b);
    m
}

/// The standard smooth profile: `e · exp(−1/(1 − s²))` on the middle half of
/// the window, `s ∈ (−1, 1)` its affine coordinate, zero elsewhere. It peaks at 1.
pub fn standard_profile(grid: &TimeGrid) -> impl Fn(f64) -> f64 {
    let (a, b) = (grid.t0(), grid.end());
    let mid = 0.5 * (a + b);
    let half = 0.25 * (b - a);
    move |t| {
        let s = (t - mid) / half;
        if s.abs() < 1.0 {
            (1.0 - 1.0 / (1.0 - s * s)).exp()
        } else {
            0.0
        }
    }
}

/// Standard profile along the all-ones direction.
pub fn standard_probe(grid: &TimeGrid, dim: usize) -> Trajectory {
    Trajectory::from_profile(grid, &vec![C64::from(1.0); dim], standard_profile(grid))
}

fn probe_weight(grid: &TimeGrid) -> Weight {
    Weight::new(grid, 1.0).or_else(|_| Weight::new(grid, 0.0)).expect("unweighted measure is always valid")
}

fn derivative_ratio(grid: &TimeGrid, probe: &Trajectory) -> Result<f64> {
    let w = probe_weight(grid);
    let du = operators::time_derivative(grid, probe.dim()).apply(probe)?;
    let norm = probe.weighted_norm(&w);
    Ok(if norm > 0.0 { du.weighted_norm(&w) / norm } else { 0.0 })
}

fn commutator_defect(law: &MaterialLaw) -> Result<CausalOperator> {
    let d = operators::time_derivative(&law.grid, law.dim);
    operators::sum(&[
        operators::commutator(&law.m_op, &d)?,
        operators::scaled(C64::from(-1.0), &law.commutator_op),
    ])
}

/// `‖(𝓜D − D𝓜 − M)u‖_ν / ‖u‖_ν` on the standard probe with `ν = 1`.
/// Autonomous laws return exactly zero.
pub fn commutator_residual(law: &MaterialLaw) -> Result<f64> {
    if law.kind == LawKind::Autonomous || law.dim == 0 {
        return Ok(0.0);
    }
    let probe = standard_probe(&law.grid, law.dim);
    let w = probe_weight(&law.grid);
    let r = commutator_defect(law)?.apply(&probe)?;
    Ok(r.weighted_norm(&w) / probe.weighted_norm(&w))
}

/// `‖𝓜D − D𝓜 − M‖` in the weighted operator norm. For nonautonomous laws this
/// does not vanish as `h ↓ 0`, since the backward shift hidden in `[𝓜, D]`
/// differs from the identity by `O(1)` on rough trajectories.
pub fn commutator_residual_operator_norm(law: &MaterialLaw, w: &Weight) -> Result<f64> {
    operators::operator_norm_weighted(&commutator_defect(law)?, w)
}

#[derive(Clone, Debug, Serialize)]
pub struct BoundednessReport {
    pub hs: Vec<f64>,
    pub norms: Vec<f64>,
    /// Least-squares slope of `log norm` against `log h`; strongly negative means growth.
    pub slope: Option<f64>,
    pub bounded: bool,
    pub verdict: String,
}

/// Tracks `‖[𝓜, D]‖_ν` as `h` shrinks. The verdict is a heuristic read of
/// the observed trend and proves nothing.
pub fn commutator_boundedness_probe(
    build: &dyn Fn(&TimeGrid) -> Result<MaterialLaw>,
    grids: &[TimeGrid],
    nu: f64,
) -> Result<BoundednessReport> {
    let mut hs = Vec::new();
    let mut norms = Vec::new();
    for g in grids {
        let law = build(g)?;
        let d = operators::time_derivative(g, law.dim);
        let c = operators::commutator(&law.m_op, &d)?;
        hs.push(g.h());
        norms.push(operators::operator_norm_weighted(&c, &Weight::new(g, nu)?)?);
    }
    let pts: Vec<(f64, f64)> = hs
        .iter()
        .zip(&norms)
        .filter(|(_, n)| **n > 1e-300)
        .map(|(h, n)| (h.ln(), n.ln()))
        .collect();
    let slope = crate::verify::least_squares_slope(&pts);
    let max = norms.iter().copied().fold(0.0, f64::max);
    let first = norms.first().copied().unwrap_or(0.0);
    let growing = max > 1e-12 && slope.is_some_and(|s| s < -0.2) && max > 1.5 * first.max(1e-300);
    let verdict = if max <= 1e-12 {
        "bounded (heuristic): commutator vanishes"
    } else if growing {
        "unbounded commutator suspected (heuristic): norms grow as h shrinks"
    } else {
        "bounded (heuristic): norms stay level as h shrinks"
    };
    Ok(BoundednessReport { hs, norms, slope, bounded: !growing, verdict: verdict.into() })
}
