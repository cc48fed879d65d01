//! Executable checks: convergence studies, algebraic identities, causality
//! and weight independence of the solution map, and a seeded problem corpus.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::grid::{TimeGrid, Trajectory, Weight};
use crate::material::{self, MaterialLaw};
use crate::operators::{self, CausalOperator};
use crate::solver::{self, EvolutionaryProblem};
use crate::{CMat, Error, Result, C64};

/// One machine-readable pass/fail line.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Verdict {
    pub name: String,
    pub seed: Option<u64>,
    pub measured: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl Verdict {
    /// Passes when `measured ≤ threshold`.
    pub fn at_most(name: impl Into<String>, seed: Option<u64>, measured: f64, threshold: f64) -> Self {
        Self { name: name.into(), seed, measured, threshold, pass: measured <= threshold }
    }

    /// Passes when `measured ≥ threshold`.
    pub fn at_least(name: impl Into<String>, seed: Option<u64>, measured: f64, threshold: f64) -> Self {
        Self { name: name.into(), seed, measured, threshold, pass: measured >= threshold }
    }
}

/// Least-squares slope of `y` against `x`; `None` with fewer than two distinct `x`.
pub fn least_squares_slope(points: &[(f64, f64)]) -> Option<f64> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx).filter(|s| s.is_finite())
}

#[derive(Clone, Debug, Serialize)]
pub struct ConvergenceReport {
    pub name: String,
    pub parameter: String,
    pub parameters: Vec<f64>,
    pub errors: Vec<f64>,
    /// Log-log slope over the non-zero errors; `None` when every error vanishes.
    pub order: Option<f64>,
    pub threshold: f64,
    /// Optional upper limit on the order, for two-sided claims.
    pub upper: Option<f64>,
    pub pass: bool,
}

impl ConvergenceReport {
    pub fn new(name: &str, parameter: &str, parameters: Vec<f64>, errors: Vec<f64>, threshold: f64) -> Self {
        let pts: Vec<(f64, f64)> = parameters
            .iter()
            .zip(&errors)
            .filter(|(_, e)| **e > 0.0)
            .map(|(p, e)| (p.ln(), e.ln()))
            .collect();
        let exact = errors.iter().all(|e| *e == 0.0);
        let order = if exact { None } else { least_squares_slope(&pts) };
        let pass = exact || order.is_some_and(|o| o >= threshold);
        Self {
            name: name.into(),
            parameter: parameter.into(),
            parameters,
            errors,
            order,
            threshold,
            upper: None,
            pass,
        }
    }

    /// Also requires `order ≤ upper`.
    pub fn with_upper(mut self, upper: f64) -> Self {
        self.upper = Some(upper);
        self.pass = match self.order {
            Some(o) => o >= self.threshold && o <= upper,
            None => self.errors.iter().all(|e| *e == 0.0),
        };
        self
    }

    pub fn verdict(&self) -> Verdict {
        Verdict {
            name: self.name.clone(),
            seed: None,
            measured: self.order.unwrap_or(f64::INFINITY),
            threshold: self.threshold,
            pass: self.pass,
        }
    }
}

fn halving_sequence(start: f64, halvings: usize) -> Vec<f64> {
    (0..=halvings).map(|i| start / 2f64.powi(i as i32)).collect()
}

/// Grid over `[a, b]` with step exactly `h` (the window is extended to a whole number of steps).
pub fn window_grid(a: f64, b: f64, h: f64) -> Result<TimeGrid> {
    let steps = ((b - a) / h).round() as usize;
    TimeGrid::new(a, h, steps + 1)
}

// ---------------------------------------------------------------------------
// Algebraic identities
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, Serialize)]
pub struct IdentityResidual {
    /// Weighted operator norm of `lhs − rhs`.
    pub residual: f64,
    pub lhs_norm: f64,
}

/// `[R, D𝓜] = εD R M_disc R` with `R = (1 + εD)⁻¹` and `M_disc = 𝓜D − D𝓜`,
/// both sides materialized.
pub fn verify_commutator_identity(law: &MaterialLaw, eps: f64, w: &Weight) -> Result<IdentityResidual> {
    let grid = law.grid();
    let d = operators::time_derivative(grid, law.dim());
    let r = operators::yosida(grid, eps, law.dim())?;
    let dm = operators::product(&d, law.m_op())?;
    let lhs = operators::commutator(&r, &dm)?;
    let m_disc = operators::commutator(law.m_op(), &d)?;
    let rhs = operators::scaled(
        C64::from(eps),
        &operators::product(&d, &operators::product(&r, &operators::product(&m_disc, &r)?)?)?,
    );
    let diff = operators::sum(&[lhs.clone(), operators::scaled(C64::from(-1.0), &rhs)])?;
    Ok(IdentityResidual {
        residual: operators::operator_norm_weighted(&diff, w)?,
        lhs_norm: operators::operator_norm_weighted(&lhs, w)?,
    })
}

/// `‖(D^♯ − (−D + 2ν))u‖_ν / ‖u‖_ν` on the standard profile over `window`,
/// for `h = h0, h0/2, …`.
pub fn verify_adjoint_formula(nu: f64, window: (f64, f64), h0: f64, halvings: usize) -> Result<ConvergenceReport> {
    let hs = halving_sequence(h0, halvings);
    let mut errors = Vec::new();
    for &h in &hs {
        let g = window_grid(window.0, window.1, h)?;
        let w = Weight::new(&g, nu)?;
        let u = material::standard_probe(&g, 1);
        let d = operators::time_derivative(&g, 1);
        let adj = operators::weighted_adjoint(&d, &w)?.apply(&u)?;
        let formula = u.scale(C64::from(2.0 * nu)).sub(&d.apply(&u)?)?;
        errors.push(adj.sub(&formula)?.weighted_norm(&w) / u.weighted_norm(&w));
    }
    Ok(ConvergenceReport::new("adjoint_formula", "h", hs, errors, 0.9))
}

/// `‖(1 + εD)⁻¹u − u‖_ν` for each `ε`.
pub fn verify_yosida_convergence(u: &Trajectory, w: &Weight, eps: &[f64]) -> Result<ConvergenceReport> {
    let mut errors = Vec::new();
    for &e in eps {
        let r = operators::yosida(u.grid(), e, u.dim())?;
        errors.push(r.apply(u)?.sub(u)?.weighted_norm(w));
    }
    Ok(ConvergenceReport::new("yosida_convergence", "eps", eps.to_vec(), errors, 0.9))
}

/// Relative error between the transform of `Du` and `(iξ + ν)` times the
/// transform of `u` on the band `|ξ| ≤ 0.1·π/h0`, the lowest tenth of the
/// coarsest grid's frequency range, held fixed while `h` shrinks.
pub fn verify_spectral_representation(
    profile: &dyn Fn(&TimeGrid) -> Trajectory,
    nu: f64,
    window: (f64, f64),
    h0: f64,
    halvings: usize,
) -> Result<ConvergenceReport> {
    let hs = halving_sequence(h0, halvings);
    let band = 0.1 * std::f64::consts::PI / h0;
    let mut errors = Vec::new();
    for &h in &hs {
        let g = window_grid(window.0, window.1, h)?;
        let w = Weight::new(&g, nu)?;
        let u = profile(&g);
        let du = operators::time_derivative(&g, u.dim()).apply(&u)?;
        let fu = operators::fourier_laplace(&u, &w)?;
        let fdu = operators::fourier_laplace(&du, &w)?;
        let (mut num, mut den) = (0.0, 0.0);
        for (j, &xi) in fu.frequencies.iter().enumerate() {
            if xi.abs() > band {
                continue;
            }
            let symbol = C64::new(nu, xi);
            for (a, b) in fdu.at(j).iter().zip(fu.at(j)) {
                num += (a - symbol * b).norm_sqr();
                den += (symbol * b).norm_sqr();
            }
        }
        errors.push(if den > 0.0 { (num / den).sqrt() } else { 0.0 });
    }
    Ok(ConvergenceReport::new("spectral_representation", "h", hs, errors, 0.9))
}

// ---------------------------------------------------------------------------
// Solution-map properties
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize)]
pub struct CausalityReport {
    pub a: f64,
    pub trials: usize,
    /// Worst `‖P_a(u' − u)‖_ν / max(‖u‖_ν, ‖u'‖_ν)` over the perturbed tails.
    pub max_rel_difference: f64,
    pub pass: bool,
}

fn solve_any(b: &CausalOperator, f: &Trajectory) -> Result<Trajectory> {
    if b.upper_band() == 0 {
        Ok(solver::forward_substitute(b, f)?.u)
    } else {
        solver::solve_operator_dense(b, f, 4000)
    }
}

/// Perturbs `f` on `t > a` with seeded random tails and compares the solutions on `t ≤ a`.
/// Non-causal operators are solved densely so the check can fail.
pub fn verify_causality_operator(
    b: &CausalOperator,
    f: &Trajectory,
    w: &Weight,
    a: f64,
    seed: u64,
    trials: usize,
) -> Result<CausalityReport> {
    let grid = b.grid();
    let keep = grid.count_up_to(a);
    let u = solve_any(b, f)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..trials {
        let mut g = f.clone();
        for k in keep..grid.n() {
            for z in g.at_mut(k) {
                *z += C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            }
        }
        let v = solve_any(b, &g)?;
        let mut diff = v.sub(&u)?;
        for k in keep..grid.n() {
            diff.at_mut(k).iter_mut().for_each(|z| *z = C64::from(0.0));
        }
        let scale = u.weighted_norm(w).max(v.weighted_norm(w));
        let rel = if scale > 0.0 { diff.weighted_norm(w) / scale } else { 0.0 };
        worst = worst.max(rel);
    }
    Ok(CausalityReport { a, trials, max_rel_difference: worst, pass: worst <= 1e-12 })
}

pub fn verify_causality(p: &EvolutionaryProblem, a: f64, seed: u64, trials: usize) -> Result<CausalityReport> {
    verify_causality_operator(&solver::assemble(p)?, &p.f, &p.weight, a, seed, trials)
}

#[derive(Clone, Debug, Serialize)]
pub struct NuIndependenceReport {
    pub nus: Vec<f64>,
    /// Per weight, `None` when certification was skipped.
    pub certificates: Vec<Option<f64>>,
    /// Largest `max|u_ν − u_μ| / max|u_ν|` over pairs.
    pub max_rel_difference: f64,
    pub pass: bool,
}

fn sup(u: &Trajectory) -> f64 {
    u.as_slice().iter().map(|z| z.norm()).fold(0.0, f64::max)
}

pub fn verify_nu_independence(p: &EvolutionaryProblem, nus: &[f64]) -> Result<NuIndependenceReport> {
    let reps = solver::nu_sweep(p, nus)?;
    let mut worst: f64 = 0.0;
    for (i, a) in reps.iter().enumerate() {
        for b in &reps[i + 1..] {
            let scale = sup(&a.u).max(sup(&b.u));
            if scale > 0.0 {
                worst = worst.max(sup(&a.u.sub(&b.u)?) / scale);
            }
        }
    }
    Ok(NuIndependenceReport {
        nus: nus.to_vec(),
        certificates: reps.iter().map(|r| r.certificate.as_ref().map(|c| c.c)).collect(),
        max_rel_difference: worst,
        pass: worst <= 1e-12,
    })
}

// ---------------------------------------------------------------------------
// Seeded corpus
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ProblemKind {
    /// Nonautonomous memory-free law with positive `M₀`.
    Maria,
    /// Autonomous memory block next to a nonautonomous block with an algebraic component.
    Tdide,
    /// Autonomous law with an exponentially decaying memory kernel.
    Autonomous,
}

impl std::str::FromStr for ProblemKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "maria" => Ok(Self::Maria),
            "tdide" => Ok(Self::Tdide),
            "autonomous" => Ok(Self::Autonomous),
            other => Err(Error::Parameter(format!("unknown problem kind '{other}'"))),
        }
    }
}

/// Step used for every corpus problem.
pub const CORPUS_H: f64 = 0.05;

fn real_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize, scale: f64) -> CMat {
    CMat::from_fn(rows, cols, |_, _| C64::from(scale * rng.random_range(-1.0..1.0)))
}

fn skew_plus_psd(rng: &mut ChaCha8Rng, d: usize) -> CMat {
    let k = real_matrix(rng, d, d, 1.0);
    let c = real_matrix(rng, d, d, 1.0);
    &k - k.transpose() + (&c * c.adjoint()) * C64::from(0.1 / d as f64)
}

fn psd(rng: &mut ChaCha8Rng, d: usize) -> CMat {
    let b = real_matrix(rng, d, d, 1.0);
    (&b * b.adjoint()) * C64::from(1.0 / d as f64)
}

fn smooth_source(rng: &mut ChaCha8Rng, grid: &TimeGrid, d: usize) -> Result<Trajectory> {
    let params: Vec<[f64; 4]> = (0..d)
        .map(|_| {
            [
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(0.5..4.0),
                rng.random_range(0.0..std::f64::consts::TAU),
            ]
        })
        .collect();
    Trajectory::from_fn(grid, d, |t| {
        params
            .iter()
            .map(|[re, im, om, ph]| C64::new(*re, *im) * (om * t + ph).sin())
            .collect()
    })
}

struct Oscillating {
    base: f64,
    amp: f64,
    omega: f64,
    phase: f64,
    shape: CMat,
}

impl Oscillating {
    fn value(&self, t: f64) -> f64 {
        self.base + self.amp * (self.omega * t + self.phase).sin()
    }

    fn rate(&self, t: f64) -> f64 {
        self.amp * self.omega * (self.omega * t + self.phase).cos()
    }
}

/// `M₀(t) = m(t)·I + s(t)·S` on the leading `dyn_dim` components, zero on the rest.
fn nonautonomous_part(
    rng: &mut ChaCha8Rng,
    grid: &TimeGrid,
    d: usize,
    dyn_dim: usize,
) -> Result<(MaterialLaw, f64)> {
    let scalar = Oscillating {
        base: rng.random_range(1.0..2.0),
        amp: rng.random_range(0.0..0.5),
        omega: rng.random_range(0.5..2.0),
        phase: rng.random_range(0.0..std::f64::consts::TAU),
        shape: CMat::identity(dyn_dim, dyn_dim),
    };
    let pert = Oscillating {
        base: 0.5,
        amp: 0.5,
        omega: rng.random_range(0.5..2.0),
        phase: rng.random_range(0.0..std::f64::consts::TAU),
        shape: psd(rng, dyn_dim) * C64::from(0.3),
    };
    let mut m1 = real_matrix(rng, d, d, 0.3);
    for i in dyn_dim..d {
        m1[(i, i)] += C64::from(1.5);
    }
    let embed = |m: CMat| -> CMat {
        let mut out = CMat::zeros(d, d);
        out.view_mut((0, 0), (dyn_dim, dyn_dim)).copy_from(&m);
        out
    };
    let m0 = |t: f64| embed(&scalar.shape * C64::from(scalar.value(t)) + &pert.shape * C64::from(pert.value(t)));
    let m0dot = |t: f64| embed(&scalar.shape * C64::from(scalar.rate(t)) + &pert.shape * C64::from(pert.rate(t)));
    let m1c = m1.clone();
    let law = material::nonautonomous_law(grid, &m0, Some(&m0dot), &move |_| m1c.clone())?;
    // On the dynamic block ν·λ_min(M₀) − ½ max‖Ṁ₀‖ − ‖M₁‖ ≥ 1; algebraic
    // components (M₀ = 0 there) lean on the boosted diagonal of M₁.
    let lower = scalar.base - scalar.amp;
    let rate_bound = scalar.amp * scalar.omega + pert.amp * pert.omega * crate::linalg::spectral_norm(&pert.shape);
    let m1_norm = crate::linalg::spectral_norm(&m1);
    let nu = (1.0 + 0.5 * rate_bound + m1_norm) / lower;
    Ok((law, nu))
}

fn memory_law(rng: &mut ChaCha8Rng, grid: &TimeGrid, d: usize) -> Result<MaterialLaw> {
    let gamma = rng.random_range(0.1..1.0);
    let beta = rng.random_range(0.5..2.0);
    let p = psd(rng, d);
    let h = grid.h();
    let mut m_kernel = vec![CMat::identity(d, d)];
    for j in 1..grid.n() {
        let c = h * gamma * (-beta * grid.time(j) + beta * grid.t0()).exp();
        if c < 1e-18 {
            break;
        }
        m_kernel.push(&p * C64::from(c));
    }
    let n_kernel = vec![psd(rng, d) * C64::from(0.2)];
    material::autonomous_law(grid, m_kernel, n_kernel, 0.0)
}

/// A seeded instance satisfying the positivity hypotheses by construction.
pub fn random_problem(seed: u64, n: usize, d: usize, kind: ProblemKind) -> Result<EvolutionaryProblem> {
    if d == 0 || n < 2 || n * d > 4096 {
        return Err(Error::Parameter(format!("random problem size n = {n}, d = {d} out of range")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = TimeGrid::new(0.0, CORPUS_H, n)?;
    let (law, nu) = match kind {
        ProblemKind::Maria => nonautonomous_part(&mut rng, &grid, d, d)?,
        ProblemKind::Autonomous => (memory_law(&mut rng, &grid, d)?, 1.0),
        ProblemKind::Tdide => {
            if d == 1 {
                (memory_law(&mut rng, &grid, 1)?, 1.0)
            } else {
                let d0 = d / 2;
                let d1 = d - d0;
                let mem = memory_law(&mut rng, &grid, d0)?;
                let dyn_dim = if d1 >= 2 { d1 - 1 } else { d1 };
                let (na, nu) = nonautonomous_part(&mut rng, &grid, d1, dyn_dim)?;
                (material::block_direct_sum(&mem, &na)?, nu.max(1.0))
            }
        }
    };
    let a = skew_plus_psd(&mut rng, d);
    let f = smooth_source(&mut rng, &grid, d)?;
    let kind_name = match kind {
        ProblemKind::Maria => "maria",
        ProblemKind::Tdide => "tdide",
        ProblemKind::Autonomous => "autonomous",
    };
    EvolutionaryProblem::new(law, a, f, nu, format!("random-{kind_name}-{seed}"))
}

/// Size and kind of corpus entry `seed`: `n ∈ [8, 64]`, `d ≤ 6`, `n·d ≤ 256`.
pub fn corpus_entry(seed: u64) -> (usize, usize, ProblemKind) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let d = rng.random_range(1..=6usize);
    let n = rng.random_range(8..=(256 / d).min(64));
    let kind = match seed % 3 {
        0 => ProblemKind::Maria,
        1 => ProblemKind::Tdide,
        _ => ProblemKind::Autonomous,
    };
    (n, d, kind)
}

pub fn corpus_problem(seed: u64) -> Result<EvolutionaryProblem> {
    let (n, d, kind) = corpus_entry(seed);
    random_problem(seed, n, d, kind)
}

/// A random nonautonomous law for the commutator identity check.
pub fn random_nonautonomous_law(seed: u64, n: usize, d: usize) -> Result<MaterialLaw> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = TimeGrid::new(0.0, CORPUS_H, n)?;
    Ok(nonautonomous_part(&mut rng, &grid, d, d)?.0)
}
