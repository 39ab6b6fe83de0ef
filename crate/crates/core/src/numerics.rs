//! Small numerical building blocks: Gauss-Legendre nodes, a dense matrix
//! exponential, composite quadrature, Simpson's rule, golden-section search.
//!
//! These are deliberately independent of the physics modules so they can act
//! as oracles for closed-form results elsewhere.

use crate::C64;
use ndarray::Array2;

/// Gauss-Legendre nodes and weights on [-1, 1], nodes ascending.
///
/// Nodes are the roots of the Legendre polynomial P_n found by Newton
/// iteration from the Chebyshev-like initial guess; weights are
/// 2 / ((1 - x²) P_n'(x)²). Exact for polynomials of degree ≤ 2n - 1.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 1, "need at least one node");
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n {
        // i-th root counted from the upper end
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre_and_derivative(n, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-15 {
                break;
            }
        }
        let (_, dp) = legendre_and_derivative(n, x);
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = 2.0 / ((1.0 - x * x) * dp * dp);
    }
    (nodes, weights)
}

/// P_n(x) and P_n'(x) by the three-term recurrence.
fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// Gauss-Legendre nodes and weights mapped to [a, b].
pub fn gauss_legendre_on(n: usize, a: f64, b: f64) -> (Vec<f64>, Vec<f64>) {
    let (xs, ws) = gauss_legendre(n);
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    (
        xs.iter().map(|x| mid + half * x).collect(),
        ws.iter().map(|w| w * half).collect(),
    )
}

/// Composite Gauss-Legendre quadrature of `f` over [a, b] with panels no
/// wider than `max_panel` and `nodes` points per panel. Panel width bounds
/// the phase advance per panel for oscillatory integrands.
pub fn composite_gl_quad(f: &dyn Fn(f64) -> f64, a: f64, b: f64, max_panel: f64, nodes: usize) -> f64 {
    assert!(b >= a && max_panel > 0.0);
    if a == b {
        return 0.0;
    }
    let n_panels = ((b - a) / max_panel).ceil().max(1.0) as usize;
    let width = (b - a) / n_panels as f64;
    let (xs, ws) = gauss_legendre(nodes);
    let mut total = 0.0;
    for p in 0..n_panels {
        let lo = a + p as f64 * width;
        let mid = lo + 0.5 * width;
        let half = 0.5 * width;
        for (x, w) in xs.iter().zip(&ws) {
            total += w * half * f(mid + half * x);
        }
    }
    total
}

/// Composite Simpson's rule over uniformly spaced samples (odd count).
pub fn simpson_uniform(values: &[f64], dx: f64) -> f64 {
    let n = values.len();
    assert!(n >= 3 && n % 2 == 1, "Simpson needs an odd sample count >= 3");
    let mut sum = values[0] + values[n - 1];
    for (i, v) in values.iter().enumerate().take(n - 1).skip(1) {
        sum += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    sum * dx / 3.0
}

/// Max-column-sum norm of a complex matrix.
pub fn matrix_one_norm(a: &Array2<C64>) -> f64 {
    let mut best = 0.0_f64;
    for col in a.columns() {
        let s: f64 = col.iter().map(|z| z.norm()).sum();
        best = best.max(s);
    }
    best
}

/// Largest entry magnitude of a complex matrix.
pub fn max_abs(a: &Array2<C64>) -> f64 {
    a.iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// Dense matrix exponential by Taylor series with scaling and squaring.
///
/// The argument is scaled by 2^{-s} until its 1-norm is ≤ 0.5, the series is
/// summed to machine precision, and the result squared s times. Adequate for
/// the D² ≤ 144 generators used here; serves as the propagation oracle for
/// the eigen-expansion.
pub fn expm(a: &Array2<C64>) -> Array2<C64> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "expm needs a square matrix");
    let norm = matrix_one_norm(a);
    let s = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let scale = 2.0_f64.powi(s as i32);
    let b = a.mapv(|z| z / scale);

    let mut result = Array2::<C64>::eye(n);
    let mut term = Array2::<C64>::eye(n);
    for k in 1..=80u32 {
        term = term.dot(&b).mapv(|z| z / k as f64);
        let t_norm = matrix_one_norm(&term);
        result += &term;
        if t_norm < 1e-17 * matrix_one_norm(&result) {
            break;
        }
    }
    for _ in 0..s {
        result = result.dot(&result);
    }
    result
}

/// Golden-section maximization of a unimodal function on [lo, hi].
///
/// Returns (argmax, max). The bracket shrinks until its width is below
/// `tol`; for a non-unimodal f this still terminates but may return a local
/// maximum, so callers wanting a guarantee should pre-scan (see
/// `window::optimal_window`).
pub fn golden_section_max(f: &dyn Fn(f64) -> f64, lo: f64, hi: f64, tol: f64) -> (f64, f64) {
    assert!(hi > lo && tol > 0.0);
    let inv_phi = 0.5 * (5.0_f64.sqrt() - 1.0);
    let mut a = lo;
    let mut b = hi;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    while b - a > tol {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        }
    }
    let x = 0.5 * (a + b);
    (x, f(x))
}
