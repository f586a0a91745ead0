//! Gauss–Legendre rules and an adaptive bisection driver.

use std::f64::consts::PI;
use std::sync::OnceLock;

use thiserror::Error;

use crate::scalar::{lit, Real};

/// Number of nodes of the panel rule used by [`adaptive`].
pub const PANEL_ORDER: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadratureError {
    #[error("quadrature did not reach rel_tol {rel_tol:e} within {max_subdivisions} subdivisions (last estimate {estimate:e})")]
    NotConverged {
        rel_tol: f64,
        max_subdivisions: usize,
        estimate: f64,
    },
}

/// Nodes and weights of the `order`-point Gauss–Legendre rule on [-1, 1].
///
/// Roots are polished by Newton iteration on the three-term recurrence,
/// which converges to full double precision for the orders used here.
pub fn gauss_legendre_f64(order: usize) -> Vec<(f64, f64)> {
    assert!(order >= 1, "Gauss-Legendre order must be positive");
    let n = order;
    let mut out = vec![(0.0, 0.0); n];
    for i in 0..n.div_ceil(2) {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                let (_, d) = legendre_and_derivative(n, x);
                dp = d;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        out[i] = (-x, w);
        out[n - 1 - i] = (x, w);
    }
    out
}

fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

fn panel_rule_f64() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre_f64(PANEL_ORDER))
}

/// Fixed-order rule converted to the working scalar type.
#[derive(Debug, Clone, Copy)]
pub struct PanelRule<T> {
    nodes: [T; PANEL_ORDER],
    weights: [T; PANEL_ORDER],
}

impl<T: Real> PanelRule<T> {
    pub fn new() -> Self {
        let rule = panel_rule_f64();
        let mut nodes = [T::zero(); PANEL_ORDER];
        let mut weights = [T::zero(); PANEL_ORDER];
        for (i, &(x, w)) in rule.iter().enumerate() {
            nodes[i] = lit(x);
            weights[i] = lit(w);
        }
        Self { nodes, weights }
    }

    #[inline]
    pub fn integrate<F: FnMut(T) -> T>(&self, f: &mut F, a: T, b: T) -> T {
        let half = (b - a) * lit(0.5);
        let mid = (a + b) * lit(0.5);
        let mut acc = T::zero();
        for i in 0..PANEL_ORDER {
            acc = acc + self.weights[i] * f(mid + half * self.nodes[i]);
        }
        acc * half
    }
}

impl<T: Real> Default for PanelRule<T> {
    fn default() -> Self {
        Self::new()
    }
}

/// Adaptive composite Gauss–Legendre integration of a nonnegative integrand.
///
/// Each panel is compared against the sum over its two halves; a panel is
/// accepted once the two agree to `rel_tol` relative to the refined value,
/// otherwise both halves are queued. For nonnegative integrands the local
/// relative criterion bounds the global relative error by `rel_tol`.
/// `breakpoints` seed the initial partition (points outside `(a, b)` are
/// ignored). Returns the integral and the number of bisections performed.
pub fn adaptive<T: Real, F: FnMut(T) -> T>(
    rule: &PanelRule<T>,
    mut f: F,
    a: T,
    b: T,
    breakpoints: &[T],
    rel_tol: T,
    max_subdivisions: usize,
) -> Result<(T, usize), QuadratureError> {
    if b <= a {
        return Ok((T::zero(), 0));
    }
    let mut cuts: Vec<T> = Vec::with_capacity(breakpoints.len() + 2);
    cuts.push(a);
    for &p in breakpoints {
        if p > a && p < b {
            cuts.push(p);
        }
    }
    cuts.push(b);
    cuts.sort_by(|x, y| x.partial_cmp(y).expect("finite breakpoints"));

    let mut stack: Vec<(T, T, T)> = Vec::with_capacity(32);
    for w in cuts.windows(2).rev() {
        if w[1] > w[0] {
            let whole = rule.integrate(&mut f, w[0], w[1]);
            stack.push((w[0], w[1], whole));
        }
    }

    let tiny = T::min_positive_value();
    let mut total = T::zero();
    let mut subdivisions = 0usize;
    while let Some((lo, hi, whole)) = stack.pop() {
        let mid = (lo + hi) * lit(0.5);
        let left = rule.integrate(&mut f, lo, mid);
        let right = rule.integrate(&mut f, mid, hi);
        let refined = left + right;
        let diff = (refined - whole).abs();
        if diff <= rel_tol * refined.abs() || diff <= tiny || !(mid > lo && mid < hi) {
            total = total + refined;
            continue;
        }
        subdivisions += 1;
        if subdivisions > max_subdivisions {
            let pending: T = stack.iter().fold(refined, |acc, s| acc + s.2);
            return Err(QuadratureError::NotConverged {
                rel_tol: rel_tol.to_f64().unwrap_or(f64::NAN),
                max_subdivisions,
                estimate: (total + pending).to_f64().unwrap_or(f64::NAN),
            });
        }
        stack.push((mid, hi, right));
        stack.push((lo, mid, left));
    }
    Ok((total, subdivisions))
}
