//! Gauss–Legendre quadrature with cached rules and node-doubling refinement.

use std::collections::HashMap;
use std::sync::{Arc, Mutex, OnceLock};

use crate::error::{Error, Result};

/// Nodes and weights on the reference interval [-1, 1], nodes ascending.
pub(crate) struct GlRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

/// Legendre polynomial P_n and its derivative at `x`, by upward recurrence.
fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p_prev = 1.0;
    let mut p = x;
    for k in 2..=n {
        let kf = k as f64;
        let p_next = ((2.0 * kf - 1.0) * x * p - (kf - 1.0) * p_prev) / kf;
        p_prev = p;
        p = p_next;
    }
    let dp = n as f64 * (x * p - p_prev) / (x * x - 1.0);
    (p, dp)
}

fn compute_rule(n: usize) -> GlRule {
    assert!(n >= 1);
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let half = n.div_ceil(2);
    for k in 1..=half {
        // Tricomi initial guess, then Newton.
        let mut x = (std::f64::consts::PI * (k as f64 - 0.25) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let step = p / d;
            x -= step;
            if step.abs() < 1e-15 {
                let (p2, d2) = legendre_with_derivative(n, x);
                dp = d2;
                x -= p2 / d2;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // k counts down from the largest positive node.
        nodes[n - k] = x;
        weights[n - k] = w;
        nodes[k - 1] = -x;
        weights[k - 1] = w;
    }
    if n % 2 == 1 {
        // Odd rules have a node exactly at the origin.
        nodes[n / 2] = 0.0;
        let (_, dp) = legendre_with_derivative(n, 0.0);
        weights[n / 2] = 2.0 / (dp * dp);
    }
    GlRule { nodes, weights }
}

pub(crate) fn gl_rule(n: usize) -> Arc<GlRule> {
    static CACHE: OnceLock<Mutex<HashMap<usize, Arc<GlRule>>>> = OnceLock::new();
    let cache = CACHE.get_or_init(|| Mutex::new(HashMap::new()));
    let mut guard = cache.lock().expect("quadrature cache poisoned");
    guard
        .entry(n)
        .or_insert_with(|| Arc::new(compute_rule(n)))
        .clone()
}

/// Integrates `f` over `[a, b]` with a fixed n-node rule.
pub(crate) fn integrate_fixed<F>(f: &F, a: f64, b: f64, n: usize) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let rule = gl_rule(n);
    let mid = 0.5 * (a + b);
    let halfwidth = 0.5 * (b - a);
    let mut acc = 0.0;
    for (x, w) in rule.nodes.iter().zip(&rule.weights) {
        acc += w * f(mid + halfwidth * x)?;
    }
    Ok(acc * halfwidth)
}

/// Integrates `f` over `[a, b]`, doubling the node count from `initial`
/// until two successive estimates agree to `rel_tol` or `max` is exceeded.
pub(crate) fn integrate_doubling<F>(
    f: &F,
    a: f64,
    b: f64,
    initial: usize,
    max: usize,
    rel_tol: f64,
) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    let mut n = initial;
    let mut prev = integrate_fixed(f, a, b, n)?;
    while n * 2 <= max {
        n *= 2;
        let cur = integrate_fixed(f, a, b, n)?;
        if (cur - prev).abs() <= rel_tol * cur.abs().max(f64::MIN_POSITIVE) {
            return Ok(cur);
        }
        if n * 2 > max {
            return Err(Error::QuadratureDidNotConverge {
                nodes: n,
                previous: prev,
                latest: cur,
            });
        }
        prev = cur;
    }
    // Only reachable when `initial` already exhausts the budget.
    Err(Error::QuadratureDidNotConverge {
        nodes: n,
        previous: prev,
        latest: prev,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ok(f: impl Fn(f64) -> f64) -> impl Fn(f64) -> Result<f64> {
        move |x| Ok(f(x))
    }

    #[test]
    fn rule_is_exact_for_low_degree_polynomials() {
        // An n-node rule integrates degree 2n-1 exactly.
        for n in [2usize, 3, 5, 8] {
            let deg = 2 * n - 1;
            let f = ok(move |x: f64| x.powi(deg as i32) + x.powi(deg as i32 - 1));
            let got = integrate_fixed(&f, -1.0, 1.0, n).unwrap();
            let exact = 2.0 / (deg as f64); // odd term vanishes on [-1,1]
            assert!((got - exact).abs() < 1e-13, "n={n}: {got} vs {exact}");
        }
    }

    #[test]
    fn nodes_are_symmetric_and_weights_sum_to_two() {
        for n in [7usize, 32, 33, 64] {
            let rule = gl_rule(n);
            let wsum: f64 = rule.weights.iter().sum();
            assert!((wsum - 2.0).abs() < 1e-12);
            for i in 0..n {
                assert!((rule.nodes[i] + rule.nodes[n - 1 - i]).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn doubling_converges_on_smooth_integrand() {
        let got = integrate_doubling(&ok(f64::sin), 0.0, std::f64::consts::PI, 4, 256, 1e-12)
            .unwrap();
        assert!((got - 2.0).abs() < 1e-12);
    }

    #[test]
    fn doubling_reports_non_convergence() {
        // A kink keeps successive estimates apart at any practical depth.
        let f = ok(|x: f64| x.abs().sqrt());
        let err = integrate_doubling(&f, -1.0, 1.0, 4, 64, 1e-14).unwrap_err();
        assert!(matches!(err, Error::QuadratureDidNotConverge { nodes: 64, .. }));
    }

    #[test]
    fn integrand_errors_propagate() {
        let f = |_x: f64| -> Result<f64> { Err(Error::DivergentMeasure) };
        assert!(matches!(
            integrate_fixed(&f, 0.0, 1.0, 8),
            Err(Error::DivergentMeasure)
        ));
    }
}
