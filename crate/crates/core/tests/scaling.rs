//! Wallclock growth of the structured solve when `n` doubles: quadratic with
//! a full memory kernel, linear without one.

use std::time::Instant;

use evolv_core::grid::{make_grid, Trajectory};
use evolv_core::operators::{self, CausalOperator};
use evolv_core::solver::forward_substitute;
use evolv_core::verify::least_squares_slope;
use evolv_core::{CMat, C64};

fn memory_operator(n: usize, d: usize) -> (CausalOperator, Trajectory) {
    let g = make_grid(0.0, 0.01, n).unwrap();
    let a = CMat::from_fn(d, d, |i, j| C64::from(if i == j { 1.0 } else { 0.1 * (i as f64 - j as f64) }));
    let kernel: Vec<CMat> = (0..n).map(|j| &a * C64::from(0.01 * (-0.01 * j as f64).exp())).collect();
    let m = operators::sum(&[operators::identity(&g, d), operators::causal_kernel_operator(&g, kernel).unwrap()]).unwrap();
    let b = operators::sum(&[operators::product(&operators::time_derivative(&g, d), &m).unwrap(), operators::spatial(&g, a)]).unwrap();
    let f = Trajectory::from_fn(&g, d, |t| vec![C64::from(t.sin()); d]).unwrap();
    (b, f)
}

fn memory_free_operator(n: usize, d: usize) -> (CausalOperator, Trajectory) {
    let g = make_grid(0.0, 0.01, n).unwrap();
    let m = operators::multiplication_operator(&g, |t| CMat::identity(d, d) * C64::from(2.0 + t.sin())).unwrap();
    let a = CMat::from_fn(d, d, |i, j| C64::from(i as f64 - j as f64));
    let b = operators::sum(&[operators::product(&operators::time_derivative(&g, d), &m).unwrap(), operators::spatial(&g, a)]).unwrap();
    let f = Trajectory::from_fn(&g, d, |t| vec![C64::from(t.cos()); d]).unwrap();
    (b, f)
}

fn time(b: &CausalOperator, f: &Trajectory) -> f64 {
    let start = Instant::now();
    std::hint::black_box(forward_substitute(b, f).unwrap());
    start.elapsed().as_secs_f64()
}

/// Doubling factor `2^p`, with `p` the least-squares slope of log(best time)
/// against log(n) over sizes `n0·√2^i`. Sizes are visited round-robin so a
/// burst of background load hits all of them.
fn doubling_factor(build: fn(usize, usize) -> (CausalOperator, Trajectory), n0: usize, d: usize) -> f64 {
    let sizes: Vec<usize> = (0..5).map(|i| (n0 as f64 * 2f64.sqrt().powi(i)).round() as usize).collect();
    let problems: Vec<_> = sizes.iter().map(|&n| build(n, d)).collect();
    let mut best = vec![f64::INFINITY; sizes.len()];
    for _ in 0..5 {
        for (t, (b, f)) in best.iter_mut().zip(&problems) {
            *t = t.min(time(b, f));
        }
    }
    let points: Vec<(f64, f64)> = sizes.iter().zip(&best).map(|(&n, &t)| ((n as f64).ln(), t.ln())).collect();
    2f64.powf(least_squares_slope(&points).unwrap())
}

#[test]
fn solve_cost_grows_as_expected_when_n_doubles() {
    let memory = doubling_factor(memory_operator, 300, 4);
    let free = doubling_factor(memory_free_operator, 3000, 8);
    println!("doubling factor with memory {memory:.2}, without {free:.2}");
    assert!(memory <= 4.5, "memory factor {memory:.2}");
    assert!(free <= 2.5, "memory-free factor {free:.2}");
    // Guards against the memory case accidentally being linear, which would
    // mean the kernel is truncated.
    assert!(memory > 2.5, "memory factor {memory:.2}");
}
