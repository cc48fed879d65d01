//! Positivity certificates and structural checks on the spatial operator.
//!
//! With the Gram diagonal `G` of the weight, the sharp constant in
//! `Re⟨Bφ, φ⟩_ν ≥ c‖φ‖²_ν` is the smallest eigenvalue of the Hermitian part of
//! `G^{1/2} B G^{−1/2}`.

use serde::Serialize;

use crate::grid::{TimeGrid, Weight};
use crate::linalg;
use crate::material::PointwiseSamples;
use crate::operators::{self, CausalOperator};
use crate::{CMat, Error, Result, C64};

/// Tolerance attached to every eigenvalue-based statement.
pub const EIG_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CutoffSample {
    pub a: f64,
    /// `None` when no grid point lies at or before `a`.
    pub c_a: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Certificate {
    pub c: f64,
    pub c_adjoint: f64,
    /// `1/c` when `c > 0`.
    pub norm_bound: Option<f64>,
    pub nu: f64,
    pub cutoff_samples: Vec<CutoffSample>,
    pub maria_pointwise_c: Option<f64>,
    /// `c > 0`; a negative value downgrades the report but does not stop a solve.
    pub certified: bool,
}

impl Certificate {
    /// `c ≤ min c_a + tol` and `c ≈ c_adjoint`.
    pub fn is_consistent(&self) -> bool {
        let cut_ok = self
            .cutoff_samples
            .iter()
            .filter_map(|s| s.c_a)
            .all(|ca| self.c <= ca + EIG_TOL);
        cut_ok && (self.c - self.c_adjoint).abs() <= EIG_TOL * self.c.abs().max(1.0)
    }
}

fn check_square(b: &CausalOperator) -> Result<()> {
    if !b.is_square() {
        return Err(Error::Shape(format!("operator is {}x{}, not square", b.d_out(), b.d_in())));
    }
    Ok(())
}

/// Smallest eigenvalue of `Herm(G^{1/2} B G^{−1/2})`.
pub fn positivity_certificate(b: &CausalOperator, w: &Weight) -> Result<f64> {
    check_square(b)?;
    linalg::min_hermitian_eigenvalue(&b.gram_transformed(w)?)
}

/// The same constant computed from the weighted adjoint `B^♯`.
pub fn adjoint_positivity_certificate(b: &CausalOperator, w: &Weight) -> Result<f64> {
    check_square(b)?;
    let adj = operators::weighted_adjoint(b, w)?;
    linalg::min_hermitian_eigenvalue(&adj.gram_transformed(w)?)
}

fn leading_block_min(t: &CMat, rows: usize) -> Result<Option<f64>> {
    if rows == 0 {
        return Ok(None);
    }
    let sub = t.view((0, 0), (rows, rows)).clone_owned();
    linalg::min_hermitian_eigenvalue(&sub).map(Some)
}

/// `c_a` for each cutoff: the same constant restricted to the time points `t_k ≤ a`.
/// Only meaningful for causal `B`, where `P_a B P_a = P_a B`.
pub fn cutoff_positivity_check(b: &CausalOperator, w: &Weight, cutoffs: &[f64]) -> Result<Vec<CutoffSample>> {
    check_square(b)?;
    let chk = operators::is_causal_structure(b, 0.0);
    if !chk.causal {
        return Err(Error::Structural(format!(
            "cutoff reduction needs a causal operator; found off-causal entries up to {:.3e}",
            chk.max_off_causal
        )));
    }
    let t = b.gram_transformed(w)?;
    let grid = b.grid();
    cutoffs
        .iter()
        .map(|&a| {
            let rows = grid.count_up_to(a) * b.d_in();
            Ok(CutoffSample { a, c_a: leading_block_min(&t, rows)? })
        })
        .collect()
}

/// `count` cutoffs spread over the grid, the last at the final time.
pub fn sample_cutoffs(grid: &TimeGrid, count: usize) -> Vec<f64> {
    let n = grid.n();
    (1..=count)
        .map(|i| grid.time(((i * n).div_ceil(count)).clamp(1, n) - 1))
        .collect()
}

/// Global certificate, its adjoint twin and a cutoff audit. Non-causal
/// operators get no cutoff samples.
pub fn certify(b: &CausalOperator, w: &Weight, cutoff_count: usize, maria: Option<f64>) -> Result<Certificate> {
    let c = positivity_certificate(b, w)?;
    let c_adjoint = adjoint_positivity_certificate(b, w)?;
    let cutoff_samples = if operators::is_causal_structure(b, 0.0).causal {
        cutoff_positivity_check(b, w, &sample_cutoffs(b.grid(), cutoff_count))?
    } else {
        Vec::new()
    };
    Ok(Certificate {
        c,
        c_adjoint,
        norm_bound: (c > 0.0).then(|| 1.0 / c),
        nu: w.nu(),
        cutoff_samples,
        maria_pointwise_c: maria,
        certified: c > 0.0,
    })
}

fn pointwise_matrix(m0: &CMat, m0dot: &CMat, m1: &CMat, nu: f64) -> CMat {
    m0 * C64::from(nu) + m0dot * C64::from(0.5) + m1
}

/// `min_k λ_min Herm(ν M₀(t_k) + ½ Ṁ₀(t_k) + M₁(t_k))` over the grid times.
pub fn pointwise_condition_maria(
    m0: &dyn Fn(f64) -> CMat,
    m0dot: &dyn Fn(f64) -> CMat,
    m1: &dyn Fn(f64) -> CMat,
    nu: f64,
    grid: &TimeGrid,
) -> Result<f64> {
    let mut worst = f64::INFINITY;
    for t in grid.times() {
        worst = worst.min(linalg::min_hermitian_eigenvalue(&pointwise_matrix(&m0(t), &m0dot(t), &m1(t), nu))?);
    }
    Ok(worst)
}

/// Same condition evaluated on the samples stored in a law.
pub fn pointwise_condition_from_samples(s: &PointwiseSamples, nu: f64) -> Result<f64> {
    let mut worst = f64::INFINITY;
    for ((m0, m0dot), m1) in s.m0.iter().zip(&s.m0dot).zip(&s.m1) {
        worst = worst.min(linalg::min_hermitian_eigenvalue(&pointwise_matrix(m0, m0dot, m1, nu))?);
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Monotonicity {
    pub is_monotone: bool,
    /// `λ_min Herm(A)`.
    pub margin: f64,
    /// 1-norm condition number of `1 + A` when monotone.
    pub resolvent_condition: Option<f64>,
}

/// `Re⟨Ax, x⟩ ≥ 0`. In finite dimensions monotone already means maximal
/// monotone, which is confirmed by inverting `1 + A`.
pub fn monotonicity_check(a: &CMat) -> Result<Monotonicity> {
    let margin = linalg::min_hermitian_eigenvalue(a)?;
    let tol = -1e-10 * linalg::spectral_norm(a).max(1.0);
    let is_monotone = margin >= tol;
    let resolvent_condition = if is_monotone {
        let resolvent = CMat::identity(a.nrows(), a.ncols()) + a;
        Some(linalg::condition_1(&resolvent).ok_or_else(|| {
            Error::Inconsistent("1 + A is singular although A is monotone".into())
        })?)
    } else {
        None
    };
    Ok(Monotonicity { is_monotone, margin, resolvent_condition })
}

/// `‖A + Aᴴ‖ ≤ tol`.
pub fn skew_check(a: &CMat, tol: f64) -> bool {
    a.is_square() && linalg::spectral_norm(&(a + a.adjoint())) <= tol
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    fn r(x: f64) -> C64 {
        C64::from(x)
    }

    fn real(rows: usize, v: &[f64]) -> CMat {
        CMat::from_row_slice(rows, v.len() / rows, &v.iter().map(|&x| r(x)).collect::<Vec<_>>())
    }

    #[test]
    fn two_by_two_derivative() {
        let g = make_grid(0.0, 1.0, 2).unwrap();
        let w = Weight::new(&g, 2f64.ln()).unwrap();
        let d = operators::time_derivative(&g, 1);
        // Herm of [[1, 0], [−1/2, 1]] has eigenvalues 1 ± 1/4.
        assert!((positivity_certificate(&d, &w).unwrap() - 0.75).abs() < 1e-12);
        assert!((adjoint_positivity_certificate(&d, &w).unwrap() - 0.75).abs() < 1e-12);
        let cut = cutoff_positivity_check(&d, &w, &[0.0, 1.0, -1.0]).unwrap();
        assert!((cut[0].c_a.unwrap() - 1.0).abs() < 1e-12);
        assert!((cut[1].c_a.unwrap() - 0.75).abs() < 1e-12);
        assert_eq!(cut[2].c_a, None);
    }

    #[test]
    fn scalar_and_skew_operators() {
        let g = make_grid(0.0, 0.2, 6).unwrap();
        let w = Weight::new(&g, 1.5).unwrap();
        let b = operators::spatial(&g, CMat::identity(2, 2) * r(2.5));
        assert!((positivity_certificate(&b, &w).unwrap() - 2.5).abs() < 1e-12);
        let skew = operators::spatial(&g, real(2, &[0.0, 1.0, -1.0, 0.0]));
        assert!(positivity_certificate(&skew, &w).unwrap().abs() < 1e-12);
        assert!(adjoint_positivity_certificate(&skew, &w).unwrap().abs() < 1e-12);
    }

    #[test]
    fn cutoff_rejects_noncausal() {
        let g = make_grid(0.0, 0.2, 6).unwrap();
        let w = Weight::new(&g, 1.0).unwrap();
        let adj = operators::weighted_adjoint(&operators::time_derivative(&g, 1), &w).unwrap();
        assert!(matches!(cutoff_positivity_check(&adj, &w, &[0.5]), Err(Error::Structural(_))));
    }

    #[test]
    fn certificate_of_negative_identity() {
        let g = make_grid(0.0, 0.2, 6).unwrap();
        let w = Weight::new(&g, 1.0).unwrap();
        let cert = certify(&operators::spatial(&g, CMat::identity(1, 1) * r(-1.0)), &w, 4, None).unwrap();
        assert!(!cert.certified && cert.norm_bound.is_none());
        assert!((cert.c + 1.0).abs() < 1e-12);
        assert!(cert.is_consistent());
        assert_eq!(cert.cutoff_samples.len(), 4);
        assert_eq!(cert.cutoff_samples[3].a, g.time(5));
    }

    #[test]
    fn maria_examples() {
        let g = make_grid(0.0, 0.5, 5).unwrap();
        let c = pointwise_condition_maria(&|_| CMat::identity(2, 2), &|_| CMat::zeros(2, 2), &|_| CMat::zeros(2, 2), 2.0, &g).unwrap();
        assert!((c - 2.0).abs() < 1e-14);
        let c = pointwise_condition_maria(
            &|_| real(2, &[1.0, 0.0, 0.0, 0.0]),
            &|_| CMat::zeros(2, 2),
            &|_| real(2, &[0.0, 0.0, 0.0, 1.0]),
            3.0,
            &g,
        )
        .unwrap();
        assert!((c - 1.0).abs() < 1e-14);
        let period = std::f64::consts::TAU;
        let dense = TimeGrid::spanning(0.0, period, 20001).unwrap();
        let c = pointwise_condition_maria(
            &|t| CMat::identity(1, 1) * r(2.0 + t.sin()),
            &|t| CMat::identity(1, 1) * r(t.cos()),
            &|_| CMat::zeros(1, 1),
            1.0,
            &dense,
        )
        .unwrap();
        assert!((c - (2.0 - 1.25f64.sqrt())).abs() < 1e-6);
    }

    #[test]
    fn monotonicity_examples() {
        let skew = real(2, &[0.0, 1.0, -1.0, 0.0]);
        let m = monotonicity_check(&skew).unwrap();
        assert!(m.is_monotone && m.margin.abs() < 1e-14);
        let m = monotonicity_check(&CMat::identity(3, 3)).unwrap();
        assert!((m.margin - 1.0).abs() < 1e-14);
        let m = monotonicity_check(&real(2, &[0.1, 1.0, -1.0, 0.1])).unwrap();
        assert!((m.margin - 0.1).abs() < 1e-14 && m.resolvent_condition.is_some());
        let m = monotonicity_check(&(CMat::identity(2, 2) * r(-1.0))).unwrap();
        assert!(!m.is_monotone && m.resolvent_condition.is_none());
    }

    #[test]
    fn skew_examples() {
        assert!(skew_check(&real(2, &[0.0, 1.0, -1.0, 0.0]), 1e-14));
        assert!(!skew_check(&CMat::identity(2, 2), 1e-14));
    }

    #[test]
    fn cutoff_samples_end_at_final_time() {
        let g = make_grid(0.0, 0.1, 50).unwrap();
        let cuts = sample_cutoffs(&g, 8);
        assert_eq!(cuts.len(), 8);
        assert_eq!(*cuts.last().unwrap(), g.time(49));
        assert!(cuts.windows(2).all(|p| p[0] < p[1]));
    }
}
