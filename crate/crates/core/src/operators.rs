//! Block operators on grid trajectories.
//!
//! A [`CausalOperator`] acts on trajectories with `d_in` components and
//! produces trajectories with `d_out` components. Seen as an
//! `(n·d_out) × (n·d_in)` matrix it is built from `n × n` time blocks; the
//! primitive representations are all block lower triangular in time, and only
//! weighted adjoints and forward shifts reach above the diagonal.
//!
//! Every operator can be used three ways, which are kept independent of each
//! other so one can serve as an oracle for another:
//!
//! - [`CausalOperator::apply`]: matrix-free action on a whole trajectory,
//! - [`CausalOperator::block`]: a single `d_out × d_in` time block,
//! - [`CausalOperator::materialize`]: the dense matrix.

use std::sync::Arc;

use nalgebra::{DVectorView, DVectorViewMut};
use num_complex::ComplexFloat;
use rustfft::FftPlanner;
use serde::Serialize;

use crate::grid::{TimeGrid, Trajectory, Weight};
use crate::linalg;
use crate::{CMat, CVec, Error, Result, C64};

const ONE: C64 = C64 { re: 1.0, im: 0.0 };
const ZERO: C64 = C64 { re: 0.0, im: 0.0 };

/// Convolution kernel `g_0, g_1, …` of a lower triangular Toeplitz operator.
/// Entries past the stored length are zero.
#[derive(Clone, Debug, PartialEq)]
pub enum Kernel {
    /// `g_j · I` acting on every component alike.
    Scalar(Vec<C64>),
    /// Full `d_out × d_in` blocks.
    Block(Vec<CMat>),
}

impl Kernel {
    fn len(&self) -> usize {
        match self {
            Kernel::Scalar(g) => g.len(),
            Kernel::Block(g) => g.len(),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Representation {
    /// `(Op u)_k = Σ_{j≤k} g_{k−j} u_j`.
    ToeplitzKernel(Kernel),
    /// `(Op u)_k = A(t_k) u_k`; `blocks[index[k]]` is `A(t_k)`, consecutive repeats are shared.
    TimeVaryingMultiplication { blocks: Vec<CMat>, index: Vec<usize> },
    /// `(Op u)_k = A u_k`.
    SpatialConstant(CMat),
    /// `(Op u)_k = u_{k+m}`, zero outside the window.
    Shift(isize),
    Sum(Vec<Arc<CausalOperator>>),
    /// `first · second`, i.e. `second` acts first.
    Product(Arc<CausalOperator>, Arc<CausalOperator>),
    Scaled(C64, Arc<CausalOperator>),
    /// `G⁻¹ Opᴴ G` with the Gram diagonal of the weight.
    WeightedAdjoint(Arc<CausalOperator>, Weight),
}

#[derive(Clone, Debug)]
pub struct CausalOperator {
    grid: TimeGrid,
    d_in: usize,
    d_out: usize,
    repr: Representation,
}

/// Outcome of [`is_causal_structure`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CausalityCheck {
    pub causal: bool,
    /// Largest entry modulus found strictly above the block diagonal.
    pub max_off_causal: f64,
}

fn seg(x: &[C64], k: usize, d: usize) -> &[C64] {
    &x[k * d..(k + 1) * d]
}

fn seg_mut(x: &mut [C64], k: usize, d: usize) -> &mut [C64] {
    &mut x[k * d..(k + 1) * d]
}

/// `out += a · x`
fn gemv_acc(out: &mut [C64], a: &CMat, x: &[C64]) {
    let mut o = DVectorViewMut::from_slice(out, a.nrows());
    o.gemv(ONE, a, &DVectorView::from_slice(x, a.ncols()), ONE);
}

/// `out += aᴴ · x`
fn gemv_ad_acc(out: &mut [C64], a: &CMat, x: &[C64]) {
    let mut o = DVectorViewMut::from_slice(out, a.ncols());
    o.gemv_ad(ONE, a, &DVectorView::from_slice(x, a.nrows()), ONE);
}

fn axpy(out: &mut [C64], c: C64, x: &[C64]) {
    for (o, v) in out.iter_mut().zip(x) {
        *o += c * v;
    }
}

fn scale_blocks(x: &mut [C64], d: usize, s: impl Fn(usize) -> f64) {
    if d == 0 {
        return;
    }
    for (k, chunk) in x.chunks_mut(d).enumerate() {
        let f = s(k);
        chunk.iter_mut().for_each(|z| *z *= f);
    }
}

fn check_finite(m: &CMat, what: &str) -> Result<()> {
    if m.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return Err(Error::Numeric(format!("{what} has non-finite entries")));
    }
    Ok(())
}

impl CausalOperator {
    fn new(grid: &TimeGrid, d_out: usize, d_in: usize, repr: Representation) -> Self {
        Self { grid: grid.clone(), d_in, d_out, repr }
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_out(&self) -> usize {
        self.d_out
    }

    pub fn representation(&self) -> &Representation {
        &self.repr
    }

    pub fn is_square(&self) -> bool {
        self.d_in == self.d_out
    }

    /// Upper bound on `k − j` over non-zero blocks `(k, j)`.
    pub fn lower_band(&self) -> usize {
        let cap = self.grid.n() - 1;
        match &self.repr {
            Representation::ToeplitzKernel(g) => g.len().saturating_sub(1).min(cap),
            Representation::TimeVaryingMultiplication { .. } | Representation::SpatialConstant(_) => 0,
            Representation::Shift(m) => {
                if *m < 0 {
                    m.unsigned_abs()
                } else {
                    0
                }
            }
            Representation::Sum(ops) => ops.iter().map(|o| o.lower_band()).max().unwrap_or(0),
            Representation::Product(a, b) => (a.lower_band() + b.lower_band()).min(cap),
            Representation::Scaled(_, op) => op.lower_band(),
            Representation::WeightedAdjoint(op, _) => op.upper_band(),
        }
    }

    /// Upper bound on `j − k` over non-zero blocks `(k, j)`.
    pub fn upper_band(&self) -> usize {
        let cap = self.grid.n() - 1;
        match &self.repr {
            Representation::ToeplitzKernel(_)
            | Representation::TimeVaryingMultiplication { .. }
            | Representation::SpatialConstant(_) => 0,
            Representation::Shift(m) => {
                if *m > 0 {
                    *m as usize
                } else {
                    0
                }
            }
            Representation::Sum(ops) => ops.iter().map(|o| o.upper_band()).max().unwrap_or(0),
            Representation::Product(a, b) => (a.upper_band() + b.upper_band()).min(cap),
            Representation::Scaled(_, op) => op.upper_band(),
            Representation::WeightedAdjoint(op, _) => op.lower_band(),
        }
    }

    /// True when block `(k, j)` depends only on `k − j`, so in particular
    /// every diagonal block is the same matrix.
    pub fn is_time_invariant(&self) -> bool {
        match &self.repr {
            Representation::ToeplitzKernel(_)
            | Representation::SpatialConstant(_)
            | Representation::Shift(_) => true,
            Representation::TimeVaryingMultiplication { blocks, .. } => blocks.len() == 1,
            Representation::Sum(ops) => ops.iter().all(|o| o.is_time_invariant()),
            // Window truncation breaks invariance when a lower and an upper factor mix.
            Representation::Product(a, b) => {
                a.is_time_invariant()
                    && b.is_time_invariant()
                    && ((a.upper_band() == 0 && b.upper_band() == 0)
                        || (a.lower_band() == 0 && b.lower_band() == 0))
            }
            Representation::Scaled(_, op) | Representation::WeightedAdjoint(op, _) => {
                op.is_time_invariant()
            }
        }
    }

    /// Matrix-free application.
    pub fn apply(&self, u: &Trajectory) -> Result<Trajectory> {
        self.grid.check_same(u.grid())?;
        if u.dim() != self.d_in {
            return Err(Error::Shape(format!(
                "operator expects {} components, trajectory has {}",
                self.d_in,
                u.dim()
            )));
        }
        Ok(Trajectory::from_raw(&self.grid, self.d_out, self.apply_flat(u.as_slice())))
    }

    /// Unweighted conjugate-transpose application `Opᴴ v`.
    pub fn apply_conj_transpose(&self, v: &Trajectory) -> Result<Trajectory> {
        self.grid.check_same(v.grid())?;
        if v.dim() != self.d_out {
            return Err(Error::Shape(format!(
                "adjoint expects {} components, trajectory has {}",
                self.d_out,
                v.dim()
            )));
        }
        Ok(Trajectory::from_raw(&self.grid, self.d_in, self.apply_h_flat(v.as_slice())))
    }

    pub(crate) fn apply_flat(&self, x: &[C64]) -> Vec<C64> {
        let n = self.grid.n();
        let (di, dout) = (self.d_in, self.d_out);
        let mut out = vec![ZERO; n * dout];
        match &self.repr {
            Representation::ToeplitzKernel(Kernel::Scalar(g)) => {
                for k in 0..n {
                    for (l, &c) in g.iter().enumerate().take(k + 1) {
                        if c != ZERO {
                            axpy(seg_mut(&mut out, k, dout), c, seg(x, k - l, di));
                        }
                    }
                }
            }
            Representation::ToeplitzKernel(Kernel::Block(g)) => {
                for k in 0..n {
                    for (l, b) in g.iter().enumerate().take(k + 1) {
                        gemv_acc(seg_mut(&mut out, k, dout), b, seg(x, k - l, di));
                    }
                }
            }
            Representation::TimeVaryingMultiplication { blocks, index } => {
                for k in 0..n {
                    gemv_acc(seg_mut(&mut out, k, dout), &blocks[index[k]], seg(x, k, di));
                }
            }
            Representation::SpatialConstant(a) => {
                for k in 0..n {
                    gemv_acc(seg_mut(&mut out, k, dout), a, seg(x, k, di));
                }
            }
            Representation::Shift(m) => {
                for k in 0..n {
                    let src = k as isize + m;
                    if (0..n as isize).contains(&src) {
                        seg_mut(&mut out, k, dout).copy_from_slice(seg(x, src as usize, di));
                    }
                }
            }
            Representation::Sum(ops) => {
                for op in ops {
                    for (o, v) in out.iter_mut().zip(op.apply_flat(x)) {
                        *o += v;
                    }
                }
            }
            Representation::Product(a, b) => out = a.apply_flat(&b.apply_flat(x)),
            Representation::Scaled(c, op) => {
                out = op.apply_flat(x);
                out.iter_mut().for_each(|z| *z *= c);
            }
            Representation::WeightedAdjoint(op, w) => {
                let mut y = x.to_vec();
                scale_blocks(&mut y, di, |k| w.at(k));
                out = op.apply_h_flat(&y);
                scale_blocks(&mut out, dout, |k| 1.0 / w.at(k));
            }
        }
        out
    }

    pub(crate) fn apply_h_flat(&self, x: &[C64]) -> Vec<C64> {
        let n = self.grid.n();
        let (di, dout) = (self.d_in, self.d_out);
        let mut out = vec![ZERO; n * di];
        match &self.repr {
            Representation::ToeplitzKernel(Kernel::Scalar(g)) => {
                for j in 0..n {
                    for (l, &c) in g.iter().enumerate().take(n - j) {
                        if c != ZERO {
                            axpy(seg_mut(&mut out, j, di), c.conj(), seg(x, j + l, dout));
                        }
                    }
                }
            }
            Representation::ToeplitzKernel(Kernel::Block(g)) => {
                for j in 0..n {
                    for (l, b) in g.iter().enumerate().take(n - j) {
                        gemv_ad_acc(seg_mut(&mut out, j, di), b, seg(x, j + l, dout));
                    }
                }
            }
            Representation::TimeVaryingMultiplication { blocks, index } => {
                for k in 0..n {
                    gemv_ad_acc(seg_mut(&mut out, k, di), &blocks[index[k]], seg(x, k, dout));
                }
            }
            Representation::SpatialConstant(a) => {
                for k in 0..n {
                    gemv_ad_acc(seg_mut(&mut out, k, di), a, seg(x, k, dout));
                }
            }
            Representation::Shift(m) => {
                for j in 0..n {
                    let src = j as isize - m;
                    if (0..n as isize).contains(&src) {
                        seg_mut(&mut out, j, di).copy_from_slice(seg(x, src as usize, dout));
                    }
                }
            }
            Representation::Sum(ops) => {
                for op in ops {
                    for (o, v) in out.iter_mut().zip(op.apply_h_flat(x)) {
                        *o += v;
                    }
                }
            }
            Representation::Product(a, b) => out = b.apply_h_flat(&a.apply_h_flat(x)),
            Representation::Scaled(c, op) => {
                out = op.apply_h_flat(x);
                let cc = c.conj();
                out.iter_mut().for_each(|z| *z *= cc);
            }
            Representation::WeightedAdjoint(op, w) => {
                // (G⁻¹ Aᴴ G)ᴴ = G A G⁻¹
                let mut y = x.to_vec();
                scale_blocks(&mut y, dout, |k| 1.0 / w.at(k));
                out = op.apply_flat(&y);
                scale_blocks(&mut out, di, |k| w.at(k));
            }
        }
        out
    }

    /// Time block `k` of `Op u`, where `input(j)` supplies `u_j`.
    /// Only indices inside the band are requested.
    pub(crate) fn row(&self, k: usize, input: &dyn Fn(usize) -> CVec) -> CVec {
        let n = self.grid.n();
        match &self.repr {
            Representation::ToeplitzKernel(Kernel::Scalar(g)) => {
                let mut acc = CVec::zeros(self.d_out);
                for (l, &c) in g.iter().enumerate().take(k + 1) {
                    if c != ZERO {
                        acc.axpy(c, &input(k - l), ONE);
                    }
                }
                acc
            }
            Representation::ToeplitzKernel(Kernel::Block(g)) => {
                let mut acc = CVec::zeros(self.d_out);
                for (l, b) in g.iter().enumerate().take(k + 1) {
                    acc.gemv(ONE, b, &input(k - l), ONE);
                }
                acc
            }
            Representation::TimeVaryingMultiplication { blocks, index } => &blocks[index[k]] * input(k),
            Representation::SpatialConstant(a) => a * input(k),
            Representation::Shift(m) => {
                let src = k as isize + m;
                if (0..n as isize).contains(&src) {
                    input(src as usize)
                } else {
                    CVec::zeros(self.d_out)
                }
            }
            Representation::Sum(ops) => {
                let mut acc = CVec::zeros(self.d_out);
                for op in ops {
                    acc += op.row(k, input);
                }
                acc
            }
            Representation::Product(a, b) => a.row(k, &|i| b.row(i, input)),
            Representation::Scaled(c, op) => op.row(k, input) * *c,
            Representation::WeightedAdjoint(op, w) => {
                op.row_h(k, &|j| input(j) * C64::from(w.at(j))) * C64::from(1.0 / w.at(k))
            }
        }
    }

    /// Time block `k` of `Opᴴ v`.
    fn row_h(&self, k: usize, input: &dyn Fn(usize) -> CVec) -> CVec {
        let n = self.grid.n();
        match &self.repr {
            Representation::ToeplitzKernel(Kernel::Scalar(g)) => {
                let mut acc = CVec::zeros(self.d_in);
                for (l, &c) in g.iter().enumerate().take(n - k) {
                    if c != ZERO {
                        acc.axpy(c.conj(), &input(k + l), ONE);
                    }
                }
                acc
            }
            Representation::ToeplitzKernel(Kernel::Block(g)) => {
                let mut acc = CVec::zeros(self.d_in);
                for (l, b) in g.iter().enumerate().take(n - k) {
                    acc.gemv_ad(ONE, b, &input(k + l), ONE);
                }
                acc
            }
            Representation::TimeVaryingMultiplication { blocks, index } => {
                blocks[index[k]].ad_mul(&input(k))
            }
            Representation::SpatialConstant(a) => a.ad_mul(&input(k)),
            Representation::Shift(m) => {
                let src = k as isize - m;
                if (0..n as isize).contains(&src) {
                    input(src as usize)
                } else {
                    CVec::zeros(self.d_in)
                }
            }
            Representation::Sum(ops) => {
                let mut acc = CVec::zeros(self.d_in);
                for op in ops {
                    acc += op.row_h(k, input);
                }
                acc
            }
            Representation::Product(a, b) => b.row_h(k, &|i| a.row_h(i, input)),
            Representation::Scaled(c, op) => op.row_h(k, input) * c.conj(),
            Representation::WeightedAdjoint(op, w) => {
                op.row(k, &|j| input(j) * C64::from(1.0 / w.at(j))) * C64::from(w.at(k))
            }
        }
    }

    /// The `d_out × d_in` block coupling output time `k` to input time `j`.
    pub fn block(&self, k: usize, j: usize) -> CMat {
        let zero = || CMat::zeros(self.d_out, self.d_in);
        match &self.repr {
            Representation::ToeplitzKernel(g) => {
                if k < j || k - j >= g.len() {
                    return zero();
                }
                match g {
                    Kernel::Scalar(g) => CMat::identity(self.d_out, self.d_in) * g[k - j],
                    Kernel::Block(g) => g[k - j].clone(),
                }
            }
            Representation::TimeVaryingMultiplication { blocks, index } => {
                if k == j {
                    blocks[index[k]].clone()
                } else {
                    zero()
                }
            }
            Representation::SpatialConstant(a) => {
                if k == j {
                    a.clone()
                } else {
                    zero()
                }
            }
            Representation::Shift(m) => {
                if j as isize == k as isize + m {
                    CMat::identity(self.d_out, self.d_in)
                } else {
                    zero()
                }
            }
            Representation::Sum(ops) => {
                let mut acc = zero();
                for op in ops {
                    acc += op.block(k, j);
                }
                acc
            }
            Representation::Product(a, b) => {
                let n = self.grid.n() as isize;
                let (k_, j_) = (k as isize, j as isize);
                let lo = [k_ - a.lower_band() as isize, j_ - b.upper_band() as isize, 0]
                    .into_iter()
                    .max()
                    .unwrap();
                let hi = [k_ + a.upper_band() as isize, j_ + b.lower_band() as isize, n - 1]
                    .into_iter()
                    .min()
                    .unwrap();
                let mut acc = zero();
                for i in lo..=hi {
                    let i = i as usize;
                    acc += a.block(k, i) * b.block(i, j);
                }
                acc
            }
            Representation::Scaled(c, op) => op.block(k, j) * *c,
            Representation::WeightedAdjoint(op, w) => op.block(j, k).adjoint() * C64::from(w.at(j) / w.at(k)),
        }
    }

    /// Dense `(n·d_out) × (n·d_in)` matrix, time-major.
    pub fn materialize(&self) -> CMat {
        let n = self.grid.n();
        let (di, dout) = (self.d_in, self.d_out);
        match &self.repr {
            Representation::ToeplitzKernel(_)
            | Representation::TimeVaryingMultiplication { .. }
            | Representation::SpatialConstant(_)
            | Representation::Shift(_) => {
                let mut m = CMat::zeros(n * dout, n * di);
                let (lb, ub) = (self.lower_band(), self.upper_band());
                for k in 0..n {
                    let lo = k.saturating_sub(lb);
                    let hi = (k + ub).min(n - 1);
                    for j in lo..=hi {
                        m.view_mut((k * dout, j * di), (dout, di)).copy_from(&self.block(k, j));
                    }
                }
                m
            }
            Representation::Sum(ops) => {
                let mut m = CMat::zeros(n * dout, n * di);
                for op in ops {
                    m += op.materialize();
                }
                m
            }
            Representation::Product(a, b) => {
                // Banded block product; a dense product would cost O((n·d)³).
                let (ma, mb) = (a.materialize(), b.materialize());
                let dm = a.d_in;
                let (al, au, bl, bu) = (a.lower_band(), a.upper_band(), b.lower_band(), b.upper_band());
                let mut m = CMat::zeros(n * dout, n * di);
                for k in 0..n {
                    for i in k.saturating_sub(al)..=(k + au).min(n - 1) {
                        let (lo, hi) = (i.saturating_sub(bl), (i + bu).min(n - 1));
                        let width = (hi - lo + 1) * di;
                        let mut out = m.view_mut((k * dout, lo * di), (dout, width));
                        out.gemm(
                            ONE,
                            &ma.view((k * dout, i * dm), (dout, dm)),
                            &mb.view((i * dm, lo * di), (dm, width)),
                            ONE,
                        );
                    }
                }
                m
            }
            Representation::Scaled(c, op) => op.materialize() * *c,
            Representation::WeightedAdjoint(op, w) => {
                let inner = op.materialize();
                let mut m = inner.adjoint();
                for p in 0..m.nrows() {
                    for q in 0..m.ncols() {
                        m[(p, q)] *= w.at(q / di) / w.at(p / dout);
                    }
                }
                m
            }
        }
    }

    /// `G^{1/2} Op G^{-1/2}` materialized; its spectral norm is the weighted operator norm.
    pub fn gram_transformed(&self, w: &Weight) -> Result<CMat> {
        self.grid.check_same(w.grid())?;
        let mut m = self.materialize();
        let (di, dout) = (self.d_in, self.d_out);
        let sw: Vec<f64> = w.values().iter().map(|x| x.sqrt()).collect();
        for p in 0..m.nrows() {
            for q in 0..m.ncols() {
                m[(p, q)] *= sw[p / dout] / sw[q / di];
            }
        }
        Ok(m)
    }

    pub fn weighted_adjoint(&self, w: &Weight) -> Result<CausalOperator> {
        weighted_adjoint(self, w)
    }
}

// ---------------------------------------------------------------------------
// Constructors
// ---------------------------------------------------------------------------

pub fn identity(grid: &TimeGrid, dim: usize) -> CausalOperator {
    spatial(grid, CMat::identity(dim, dim))
}

pub fn zero(grid: &TimeGrid, d_out: usize, d_in: usize) -> CausalOperator {
    spatial(grid, CMat::zeros(d_out, d_in))
}

/// `(Op u)_k = A u_k`; `A` may be rectangular.
pub fn spatial(grid: &TimeGrid, a: CMat) -> CausalOperator {
    CausalOperator::new(grid, a.nrows(), a.ncols(), Representation::SpatialConstant(a))
}

pub(crate) fn shift(grid: &TimeGrid, m: isize, dim: usize) -> CausalOperator {
    CausalOperator::new(grid, dim, dim, Representation::Shift(m))
}

fn scalar_toeplitz(grid: &TimeGrid, dim: usize, mut g: Vec<C64>) -> CausalOperator {
    g.truncate(grid.n());
    CausalOperator::new(grid, dim, dim, Representation::ToeplitzKernel(Kernel::Scalar(g)))
}

/// Backward difference `(Du)_k = (u_k − u_{k−1})/h` with zero history.
pub fn time_derivative(grid: &TimeGrid, dim: usize) -> CausalOperator {
    let r = 1.0 / grid.h();
    scalar_toeplitz(grid, dim, vec![C64::from(r), C64::from(-r)])
}

/// Rectangle-rule integral `(D⁻¹f)_k = h Σ_{j≤k} f_j`, the exact inverse of [`time_derivative`].
pub fn time_integral(grid: &TimeGrid, dim: usize) -> CausalOperator {
    scalar_toeplitz(grid, dim, vec![C64::from(grid.h()); grid.n()])
}

/// Regularizer `(1 + εD)⁻¹`: `v_k = (h f_k + ε v_{k−1})/(h + ε)`.
pub fn yosida(grid: &TimeGrid, eps: f64, dim: usize) -> Result<CausalOperator> {
    if !(eps.is_finite() && eps >= 0.0) {
        return Err(Error::Parameter(format!("regularization eps = {eps} must be >= 0")));
    }
    if eps == 0.0 {
        return Ok(scalar_toeplitz(grid, dim, vec![ONE]));
    }
    let h = grid.h();
    let first = h / (h + eps);
    let q = eps / (h + eps);
    let mut g = Vec::with_capacity(grid.n());
    let mut c = first;
    for _ in 0..grid.n() {
        g.push(C64::from(c));
        c *= q;
    }
    Ok(scalar_toeplitz(grid, dim, g))
}

/// Lower triangular block Toeplitz operator with kernel blocks `g_0, …, g_{m−1}`, `m ≤ n`.
pub fn causal_kernel_operator(grid: &TimeGrid, blocks: Vec<CMat>) -> Result<CausalOperator> {
    let first = blocks
        .first()
        .ok_or_else(|| Error::Shape("kernel needs at least one block".into()))?;
    let (dout, din) = first.shape();
    if blocks.len() > grid.n() {
        return Err(Error::Shape(format!(
            "kernel has {} blocks but the grid only {} points",
            blocks.len(),
            grid.n()
        )));
    }
    for (j, b) in blocks.iter().enumerate() {
        if b.shape() != (dout, din) {
            return Err(Error::Shape(format!(
                "kernel block {j} is {}x{}, expected {dout}x{din}",
                b.nrows(),
                b.ncols()
            )));
        }
        check_finite(b, &format!("kernel block {j}"))?;
    }
    Ok(CausalOperator::new(grid, dout, din, Representation::ToeplitzKernel(Kernel::Block(blocks))))
}

/// `(Op u)_k = A(t_k) u_k`.
pub fn multiplication_operator(grid: &TimeGrid, a: impl Fn(f64) -> CMat) -> Result<CausalOperator> {
    multiplication_from_samples(grid, grid.times().into_iter().map(a).collect())
}

/// Multiplication operator from the samples `A(t_0), …, A(t_{n−1})`.
pub fn multiplication_from_samples(grid: &TimeGrid, samples: Vec<CMat>) -> Result<CausalOperator> {
    if samples.len() != grid.n() {
        return Err(Error::Shape(format!(
            "{} samples for a grid of {} points",
            samples.len(),
            grid.n()
        )));
    }
    let (dout, din) = samples[0].shape();
    let mut blocks: Vec<CMat> = Vec::new();
    let mut index = Vec::with_capacity(samples.len());
    for (k, s) in samples.into_iter().enumerate() {
        if s.shape() != (dout, din) {
            return Err(Error::Shape(format!(
                "sample at k = {k} is {}x{}, expected {dout}x{din}",
                s.nrows(),
                s.ncols()
            )));
        }
        check_finite(&s, &format!("multiplier at k = {k}"))?;
        if blocks.last() != Some(&s) {
            blocks.push(s);
        }
        index.push(blocks.len() - 1);
    }
    Ok(CausalOperator::new(
        grid,
        dout,
        din,
        Representation::TimeVaryingMultiplication { blocks, index },
    ))
}

/// Grünwald–Letnikov weights `g_j = (−1)^j binom(−α, j)` via `g_j = g_{j−1}(1 − (1−α)/j)`.
pub fn grunwald_letnikov_weights(alpha: f64, count: usize) -> Vec<f64> {
    let mut g = Vec::with_capacity(count);
    let mut c = 1.0;
    for j in 0..count {
        if j > 0 {
            c *= 1.0 - (1.0 - alpha) / j as f64;
        }
        g.push(c);
    }
    g
}

/// Fractional integral `∂₀^{−α}` with kernel `h^α g_j`, `0 < α ≤ 1`.
pub fn fractional_integral(grid: &TimeGrid, alpha: f64, dim: usize) -> Result<CausalOperator> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Parameter(format!("fractional order alpha = {alpha} must lie in (0, 1]")));
    }
    let scale = grid.h().powf(alpha);
    let g = grunwald_letnikov_weights(alpha, grid.n())
        .into_iter()
        .map(|x| C64::from(scale * x))
        .collect();
    Ok(scalar_toeplitz(grid, dim, g))
}

pub fn sum(ops: &[CausalOperator]) -> Result<CausalOperator> {
    let first = ops
        .first()
        .ok_or_else(|| Error::Shape("sum of zero operators".into()))?;
    for op in &ops[1..] {
        first.grid.check_same(&op.grid)?;
        if (op.d_out, op.d_in) != (first.d_out, first.d_in) {
            return Err(Error::Shape(format!(
                "cannot add {}x{} and {}x{} block operators",
                first.d_out, first.d_in, op.d_out, op.d_in
            )));
        }
    }
    Ok(CausalOperator::new(
        &first.grid,
        first.d_out,
        first.d_in,
        Representation::Sum(ops.iter().cloned().map(Arc::new).collect()),
    ))
}

/// `a · b` (apply `b` first).
pub fn product(a: &CausalOperator, b: &CausalOperator) -> Result<CausalOperator> {
    a.grid.check_same(&b.grid)?;
    if a.d_in != b.d_out {
        return Err(Error::Shape(format!(
            "cannot compose: left expects {} components, right produces {}",
            a.d_in, b.d_out
        )));
    }
    Ok(CausalOperator::new(
        &a.grid,
        a.d_out,
        b.d_in,
        Representation::Product(Arc::new(a.clone()), Arc::new(b.clone())),
    ))
}

pub fn scaled(c: C64, op: &CausalOperator) -> CausalOperator {
    CausalOperator::new(&op.grid, op.d_out, op.d_in, Representation::Scaled(c, Arc::new(op.clone())))
}

/// `ab − ba`.
pub fn commutator(a: &CausalOperator, b: &CausalOperator) -> Result<CausalOperator> {
    if !a.is_square() || !b.is_square() || a.d_in != b.d_in {
        return Err(Error::Shape(format!(
            "commutator needs equal square shapes, got {}x{} and {}x{}",
            a.d_out, a.d_in, b.d_out, b.d_in
        )));
    }
    sum(&[product(a, b)?, scaled(C64::from(-1.0), &product(b, a)?)])
}

/// `Op^♯ = G⁻¹ Opᴴ G`, the adjoint with respect to the weighted inner product.
pub fn weighted_adjoint(op: &CausalOperator, w: &Weight) -> Result<CausalOperator> {
    op.grid.check_same(w.grid())?;
    Ok(CausalOperator::new(
        &op.grid,
        op.d_in,
        op.d_out,
        Representation::WeightedAdjoint(Arc::new(op.clone()), w.clone()),
    ))
}

/// `diag(parts[0], parts[1], …)` on the direct sum of the component spaces.
pub fn block_diagonal(parts: &[&CausalOperator]) -> Result<CausalOperator> {
    let first = parts
        .first()
        .ok_or_else(|| Error::Shape("block diagonal of zero operators".into()))?;
    let grid = first.grid.clone();
    let d_out: usize = parts.iter().map(|p| p.d_out).sum();
    let d_in: usize = parts.iter().map(|p| p.d_in).sum();
    let (mut off_out, mut off_in) = (0, 0);
    let mut terms = Vec::with_capacity(parts.len());
    for p in parts {
        grid.check_same(&p.grid)?;
        let mut inject = CMat::zeros(d_out, p.d_out);
        for i in 0..p.d_out {
            inject[(off_out + i, i)] = ONE;
        }
        let mut restrict = CMat::zeros(p.d_in, d_in);
        for i in 0..p.d_in {
            restrict[(i, off_in + i)] = ONE;
        }
        terms.push(product(&spatial(&grid, inject), &product(p, &spatial(&grid, restrict))?)?);
        off_out += p.d_out;
        off_in += p.d_in;
    }
    sum(&terms)
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

pub fn apply(op: &CausalOperator, u: &Trajectory) -> Result<Trajectory> {
    op.apply(u)
}

/// Weighted operator norm: largest singular value of `G^{1/2} Op G^{-1/2}`.
pub fn operator_norm_weighted(op: &CausalOperator, w: &Weight) -> Result<f64> {
    Ok(linalg::spectral_norm(&op.gram_transformed(w)?))
}

/// Checks block lower triangularity, i.e. `P_a Op = P_a Op P_a` for every grid cutoff `a`.
/// Blocks beyond the structural upper band are exactly zero and are not visited.
pub fn is_causal_structure(op: &CausalOperator, tol: f64) -> CausalityCheck {
    let n = op.grid.n();
    let ub = op.upper_band();
    let mut worst: f64 = 0.0;
    for k in 0..n {
        for j in (k + 1)..=(k + ub).min(n - 1) {
            worst = worst.max(linalg::max_abs(&op.block(k, j)));
        }
    }
    CausalityCheck { causal: worst <= tol, max_off_causal: worst }
}

/// Discrete Fourier–Laplace transform of a trajectory.
///
/// Convention: `values[j] = √Δξ · e^{−iξ_j t_0} · h/√(2π) · Σ_k e^{−iξ_j (t_k − t_0)} e^{−ν t_k} u_k`
/// with `Δξ = 2π/(n h)` and `ξ_j = Δξ · j` for `j < n/2`, `Δξ · (j − n)` otherwise (FFT order).
/// The prefactor makes `Σ_j |values[j]|² = ‖u‖²_ν` exactly, and `values[j]/√Δξ`
/// approximates the continuous transform at `ξ_j`.
#[derive(Clone, Debug, Serialize)]
pub struct SpectralDiagnostic {
    pub convention: String,
    pub dim: usize,
    pub frequencies: Vec<f64>,
    /// Frequency-major, `dim` entries per frequency.
    pub values: Vec<C64>,
}

impl SpectralDiagnostic {
    pub fn at(&self, j: usize) -> &[C64] {
        &self.values[j * self.dim..(j + 1) * self.dim]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum()
    }
}

pub fn fourier_laplace(u: &Trajectory, w: &Weight) -> Result<SpectralDiagnostic> {
    let grid = u.grid();
    grid.check_same(w.grid())?;
    let (n, d, h, nu) = (grid.n(), u.dim(), grid.h(), w.nu());
    let dxi = 2.0 * std::f64::consts::PI / (n as f64 * h);
    let frequencies: Vec<f64> = (0..n)
        .map(|j| if j < n.div_ceil(2) { j as f64 } else { j as f64 - n as f64 } * dxi)
        .collect();
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n);
    let pre = (h / n as f64).sqrt();
    let mut values = vec![ZERO; n * d];
    let mut buf = vec![ZERO; n];
    for i in 0..d {
        for k in 0..n {
            buf[k] = u.at(k)[i] * (-nu * grid.time(k)).exp();
        }
        fft.process(&mut buf);
        for j in 0..n {
            let phase = C64::from_polar(pre, -frequencies[j] * grid.t0());
            values[j * d + i] = buf[j] * phase;
        }
    }
    Ok(SpectralDiagnostic {
        convention: "values = sqrt(dxi) * L_nu u(xi_j), dxi = 2pi/(n h); sum |values|^2 = |u|_nu^2".into(),
        dim: d,
        frequencies,
        values,
    })
}

/// Largest entrywise modulus of `a − b`.
pub fn max_abs_difference(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{cutoff_projection, make_grid, time_shift};

    fn r(x: f64) -> C64 {
        C64::from(x)
    }

    fn traj(grid: &TimeGrid, v: &[f64]) -> Trajectory {
        Trajectory::new(grid, 1, v.iter().map(|&x| r(x)).collect()).unwrap()
    }

    fn re(u: &Trajectory) -> Vec<f64> {
        u.as_slice().iter().map(|z| z.re).collect()
    }

    #[test]
    fn derivative_examples() {
        let g = make_grid(0.0, 0.25, 3).unwrap();
        let d = time_derivative(&g, 1);
        assert_eq!(re(&d.apply(&traj(&g, &[0.25, 0.25, 0.25])).unwrap()), vec![1.0, 0.0, 0.0]);
        assert_eq!(re(&d.apply(&traj(&g, &[0.0, 0.0, 0.0])).unwrap()), vec![0.0, 0.0, 0.0]);
        let g = make_grid(0.0, 0.5, 3).unwrap();
        let d = time_derivative(&g, 1);
        assert_eq!(re(&d.apply(&traj(&g, &[1.0, 2.0, 4.0])).unwrap()), vec![2.0, 2.0, 4.0]);
    }

    #[test]
    fn integral_examples() {
        let g = make_grid(0.0, 0.5, 6).unwrap();
        let i = time_integral(&g, 1);
        assert_eq!(i.apply(&traj(&g, &[1.0; 6])).unwrap().at(3)[0], r(2.0));
        let mut imp = vec![0.0; 6];
        imp[0] = 1.0;
        assert_eq!(re(&i.apply(&traj(&g, &imp)).unwrap()), vec![0.5; 6]);
        let dense = i.materialize();
        for k in 0..6 {
            for j in 0..6 {
                assert_eq!(dense[(k, j)], if j <= k { r(0.5) } else { r(0.0) });
            }
        }
    }

    #[test]
    fn derivative_inverts_integral_exactly_on_dyadic_steps() {
        let g = make_grid(0.0, 0.25, 7).unwrap();
        let d = time_derivative(&g, 2);
        let i = time_integral(&g, 2);
        let prod = product(&d, &i).unwrap().materialize();
        assert_eq!(prod, CMat::identity(14, 14));
        let prod = product(&i, &d).unwrap().materialize();
        assert_eq!(prod, CMat::identity(14, 14));
    }

    #[test]
    fn yosida_examples() {
        let g = make_grid(0.0, 0.1, 4).unwrap();
        let f = traj(&g, &[1.0, -2.0, 3.5, 0.25]);
        assert_eq!(yosida(&g, 0.0, 1).unwrap().apply(&f).unwrap(), f);
        let v = yosida(&g, 0.1, 1).unwrap().apply(&traj(&g, &[1.0; 4])).unwrap();
        let expected = [0.5, 0.75, 0.875, 0.9375];
        for (a, b) in re(&v).iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(yosida(&g, -1.0, 1).is_err());
    }

    #[test]
    fn yosida_is_contractive() {
        let g = make_grid(0.0, 0.2, 12).unwrap();
        for nu in [0.5, 1.0, 4.0] {
            let w = Weight::new(&g, nu).unwrap();
            for eps in [0.05, 0.5, 3.0] {
                let norm = operator_norm_weighted(&yosida(&g, eps, 1).unwrap(), &w).unwrap();
                assert!(norm <= 1.0 + 1e-12, "nu={nu} eps={eps} norm={norm}");
            }
        }
    }

    #[test]
    fn adjoint_of_derivative_formula() {
        // Summation by parts: (D^♯ v)_k = (v_k − e^{−2νh} v_{k+1})/h.
        let g = make_grid(0.3, 0.2, 6).unwrap();
        let nu = 0.7;
        let w = Weight::new(&g, nu).unwrap();
        let v = traj(&g, &[0.3, -1.0, 2.0, 0.5, 1.5, -0.7]);
        let got = weighted_adjoint(&time_derivative(&g, 1), &w).unwrap().apply(&v).unwrap();
        let q = (-2.0 * nu * 0.2f64).exp();
        for k in 0..6 {
            let next = if k + 1 < 6 { v.at(k + 1)[0].re } else { 0.0 };
            let want = (v.at(k)[0].re - q * next) / 0.2;
            assert!((got.at(k)[0].re - want).abs() < 1e-12);
        }
        let adj = weighted_adjoint(&time_derivative(&g, 1), &w).unwrap();
        let dense = adj.materialize();
        let mut applied = CMat::zeros(6, 1);
        applied.copy_from_slice(adj.apply(&v).unwrap().as_slice());
        let direct = &dense * CMat::from_column_slice(6, 1, v.as_slice());
        assert!(max_abs_difference(&direct, &applied) < 1e-12);
    }

    #[test]
    fn real_diagonal_multiplication_is_self_adjoint() {
        let g = make_grid(0.0, 0.5, 5).unwrap();
        let w = Weight::new(&g, 1.3).unwrap();
        let m = multiplication_operator(&g, |t| CMat::from_element(1, 1, r(1.0 + t))).unwrap();
        let adj = weighted_adjoint(&m, &w).unwrap();
        assert!(max_abs_difference(&adj.materialize(), &m.materialize()) < 1e-15);
    }

    #[test]
    fn kernel_examples() {
        let g = make_grid(0.0, 0.5, 5).unwrap();
        let mut blocks = vec![CMat::zeros(2, 2); 5];
        blocks[0] = CMat::identity(2, 2);
        let id = causal_kernel_operator(&g, blocks).unwrap();
        assert_eq!(id.materialize(), CMat::identity(10, 10));
        let hk = causal_kernel_operator(&g, vec![CMat::identity(2, 2) * r(0.5); 5]).unwrap();
        assert_eq!(hk.materialize(), time_integral(&g, 2).materialize());
        assert!(matches!(
            causal_kernel_operator(&g, vec![CMat::identity(2, 2), CMat::identity(3, 3)]),
            Err(Error::Shape(_))
        ));
        assert!(causal_kernel_operator(&g, vec![CMat::identity(1, 1); 6]).is_err());
    }

    #[test]
    fn multiplication_examples() {
        let g = make_grid(0.0, 1.0, 3).unwrap();
        let m = multiplication_operator(&g, |t| CMat::from_element(1, 1, r(t))).unwrap();
        assert_eq!(re(&m.apply(&traj(&g, &[1.0, 1.0, 1.0])).unwrap()), vec![0.0, 1.0, 2.0]);
        let id = multiplication_operator(&g, |_| CMat::identity(2, 2)).unwrap();
        assert_eq!(id.materialize(), CMat::identity(6, 6));
        assert!(id.is_time_invariant());
        assert!(!m.is_time_invariant());
    }

    #[test]
    fn multiplication_norm_is_max_block_norm() {
        let g = make_grid(0.0, 0.25, 6).unwrap();
        let a = |t: f64| {
            CMat::from_row_slice(2, 2, &[r(1.0 + t), C64::new(0.0, t), r(-0.5), r(2.0 * t.cos())])
        };
        let m = multiplication_operator(&g, a).unwrap();
        let want = g.times().into_iter().map(|t| linalg::spectral_norm(&a(t))).fold(0.0, f64::max);
        for nu in [0.0, 1.0, 3.0] {
            let got = operator_norm_weighted(&m, &Weight::new(&g, nu).unwrap()).unwrap();
            assert!((got - want).abs() < 1e-10);
        }
    }

    #[test]
    fn fractional_weights() {
        let gw = grunwald_letnikov_weights(0.5, 3);
        assert!((gw[0] - 1.0).abs() < 1e-15 && (gw[1] - 0.5).abs() < 1e-15 && (gw[2] - 0.375).abs() < 1e-15);
        let g = make_grid(0.0, 0.1, 9).unwrap();
        assert_eq!(fractional_integral(&g, 1.0, 1).unwrap().materialize(), time_integral(&g, 1).materialize());
        let half = fractional_integral(&g, 0.5, 1).unwrap();
        let twice = product(&half, &half).unwrap().materialize();
        assert!(max_abs_difference(&twice, &time_integral(&g, 1).materialize()) < 1e-10);
        assert!(fractional_integral(&g, 0.0, 1).is_err());
        assert!(fractional_integral(&g, 1.5, 1).is_err());
    }

    #[test]
    fn commutator_examples() {
        let g = make_grid(0.0, 1.0, 3).unwrap();
        let d = time_derivative(&g, 1);
        let c = commutator(&identity(&g, 1), &d).unwrap();
        assert_eq!(c.materialize(), CMat::zeros(3, 3));
        let t = multiplication_operator(&g, |t| CMat::from_element(1, 1, r(t))).unwrap();
        let c = commutator(&t, &d).unwrap();
        assert_eq!(re(&c.apply(&traj(&g, &[1.0, 2.0, 3.0])).unwrap()), vec![0.0, -1.0, -2.0]);
        assert!(commutator(&identity(&g, 1), &identity(&g, 2)).is_err());
    }

    #[test]
    fn toeplitz_operators_commute() {
        let g = make_grid(0.0, 0.5, 6).unwrap();
        let a = causal_kernel_operator(
            &g,
            (0..6).map(|j| CMat::from_element(1, 1, r(1.0 / (1.0 + j as f64)))).collect(),
        )
        .unwrap();
        let b = fractional_integral(&g, 0.3, 1).unwrap();
        for other in [&b, &time_derivative(&g, 1), &time_integral(&g, 1), &time_shift(&g, -2, 1).unwrap()] {
            let c = commutator(&a, other).unwrap().materialize();
            assert!(linalg::max_abs(&c) < 1e-14);
        }
    }

    #[test]
    fn causal_structure() {
        let g = make_grid(0.0, 0.5, 5).unwrap();
        let d = time_derivative(&g, 1);
        assert!(is_causal_structure(&d, 0.0).causal);
        let w = Weight::new(&g, 1.0).unwrap();
        let adj = weighted_adjoint(&d, &w).unwrap();
        let chk = is_causal_structure(&adj, 1e-12);
        // |e^{−2νh}/h| with ν = 1, h = 0.5.
        assert!(!chk.causal && (chk.max_off_causal - (-1.0f64).exp() / 0.5).abs() < 1e-12);
        assert!(is_causal_structure(&cutoff_projection(&g, 1.0, 1), 0.0).causal);
        assert!(!is_causal_structure(&time_shift(&g, 1, 1).unwrap(), 0.0).causal);
    }

    #[test]
    fn block_diagonal_layout() {
        let g = make_grid(0.0, 0.5, 3).unwrap();
        let a = time_derivative(&g, 1);
        let b = spatial(&g, CMat::identity(2, 2) * r(3.0));
        let bd = block_diagonal(&[&a, &b]).unwrap();
        assert_eq!((bd.d_out(), bd.d_in()), (3, 3));
        assert_eq!(bd.block(1, 0)[(0, 0)], r(-2.0));
        assert_eq!(bd.block(1, 1)[(2, 2)], r(3.0));
        assert_eq!(bd.block(1, 1)[(0, 1)], r(0.0));
    }

    #[test]
    fn product_materialize_matches_blocks_with_uneven_bands() {
        let g = make_grid(0.0, 0.25, 7).unwrap();
        let w = Weight::new(&g, 0.7).unwrap();
        let kernel: Vec<CMat> = (0..3)
            .map(|j| CMat::from_fn(2, 2, |p, q| C64::new(1.0 + j as f64 + p as f64, q as f64 - 0.5)))
            .collect();
        let t = causal_kernel_operator(&g, kernel).unwrap();
        let up = weighted_adjoint(&time_derivative(&g, 2), &w).unwrap();
        let shift = time_shift(&g, -3, 2).unwrap();
        for (a, b) in [(&t, &up), (&up, &t), (&shift, &up), (&up, &shift), (&t, &shift)] {
            let p = product(a, b).unwrap();
            let dense = p.materialize();
            let reference = a.materialize() * b.materialize();
            assert!(max_abs_difference(&dense, &reference) < 1e-12);
            for k in 0..g.n() {
                for j in 0..g.n() {
                    let blk = dense.view((2 * k, 2 * j), (2, 2)).clone_owned();
                    assert!(max_abs_difference(&blk, &p.block(k, j)) < 1e-12);
                }
            }
        }
    }

    #[test]
    fn spectral_zero_and_parseval() {
        let g = make_grid(-1.0, 0.1, 32).unwrap();
        let w = Weight::new(&g, 0.8).unwrap();
        let z = fourier_laplace(&Trajectory::zeros(&g, 2), &w).unwrap();
        assert!(z.values.iter().all(|v| *v == ZERO));
        let u = Trajectory::from_fn(&g, 2, |t| vec![C64::new(t.sin(), t), C64::new(1.0, -t * t)]).unwrap();
        let s = fourier_laplace(&u, &w).unwrap();
        let norm2 = u.weighted_norm(&w).powi(2);
        assert!((s.norm_sqr() - norm2).abs() < 1e-10 * norm2);
    }
}
