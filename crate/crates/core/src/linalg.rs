//! Small dense helpers on complex matrices.

use crate::{CMat, Error, Result};

/// `½(A + Aᴴ)`.
pub fn hermitian_part(a: &CMat) -> CMat {
    (a + a.adjoint()) * crate::C64::new(0.5, 0.0)
}

/// Eigenvalues of a Hermitian matrix in ascending order.
pub fn hermitian_eigenvalues(a: &CMat) -> Result<Vec<f64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::Shape(format!("{}x{} matrix is not square", a.nrows(), a.ncols())));
    }
    if a.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::Numeric("matrix has non-finite entries".into()));
    }
    if a.nrows() == 0 {
        return Ok(Vec::new());
    }
    // Real input takes the real solver, several times faster than the complex one.
    let mut ev: Vec<f64> = if a.iter().all(|z| z.im == 0.0) {
        a.map(|z| z.re).symmetric_eigenvalues().iter().copied().collect()
    } else {
        a.clone().symmetric_eigenvalues().iter().copied().collect()
    };
    if ev.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric("Hermitian eigensolver produced non-finite values".into()));
    }
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

/// Smallest eigenvalue of the Hermitian part of `a`.
pub fn min_hermitian_eigenvalue(a: &CMat) -> Result<f64> {
    hermitian_eigenvalues(&hermitian_part(a))?
        .first()
        .copied()
        .ok_or_else(|| Error::Shape("empty matrix has no eigenvalues".into()))
}

/// Largest singular value.
pub fn spectral_norm(a: &CMat) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().singular_values().iter().copied().fold(0.0, f64::max)
}

pub fn max_abs(a: &CMat) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// 1-norm condition estimate through an explicit inverse; `None` when singular.
pub fn condition_1(a: &CMat) -> Option<f64> {
    let inv = a.clone().try_inverse()?;
    let norm1 = |m: &CMat| {
        (0..m.ncols())
            .map(|j| m.column(j).iter().map(|z| z.norm()).sum::<f64>())
            .fold(0.0, f64::max)
    };
    let c = norm1(a) * norm1(&inv);
    c.is_finite().then_some(c)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::C64;

    fn real(rows: usize, cols: usize, v: &[f64]) -> CMat {
        CMat::from_row_slice(rows, cols, &v.iter().map(|&x| C64::new(x, 0.0)).collect::<Vec<_>>())
    }

    #[test]
    fn eigenvalues_of_hermitian_part() {
        let a = real(2, 2, &[0.1, 1.0, -1.0, 0.1]);
        assert!((min_hermitian_eigenvalue(&a).unwrap() - 0.1).abs() < 1e-14);
        let h = CMat::from_row_slice(2, 2, &[C64::new(2.0, 0.0), C64::new(0.0, 1.0), C64::new(0.0, -1.0), C64::new(2.0, 0.0)]);
        let ev = hermitian_eigenvalues(&h).unwrap();
        assert!((ev[0] - 1.0).abs() < 1e-14 && (ev[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn norms_and_condition() {
        let a = real(2, 2, &[3.0, 0.0, 0.0, -4.0]);
        assert!((spectral_norm(&a) - 4.0).abs() < 1e-14);
        assert!((condition_1(&a).unwrap() - 4.0 / 3.0).abs() < 1e-14);
        assert!(condition_1(&real(2, 2, &[1.0, 1.0, 1.0, 1.0])).is_none());
        assert!(hermitian_eigenvalues(&real(1, 2, &[1.0, 2.0])).is_err());
    }
}
