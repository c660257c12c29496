//! Closed-form results for probes whose excited levels merge into a single
//! degenerate manifold: the locally optimal gap, its sensitivity, and
//! small-window corrections to the optimal gap.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;
use crate::solve;
use crate::thermal::SENSITIVITY_FLOOR;

/// A two-level probe ansatz: unique ground state plus an (N-1)-fold
/// degenerate excited manifold at `gap`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoLevelAnsatz {
    gap: f64,
    n_levels: usize,
}

impl TwoLevelAnsatz {
    pub fn new(gap: f64, n_levels: usize) -> Result<Self> {
        if !(gap.is_finite() && gap > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "ansatz gap must be positive and finite, got {gap}"
            )));
        }
        if n_levels < 2 {
            return Err(Error::InvalidConfig(format!(
                "ansatz needs at least 2 levels, got {n_levels}"
            )));
        }
        Ok(Self { gap, n_levels })
    }

    pub fn gap(&self) -> f64 {
        self.gap
    }

    pub fn n_levels(&self) -> usize {
        self.n_levels
    }
}

/// A narrow temperature window `[t0, t0 + delta]` described by its left
/// edge and width. The small parameter of every expansion here is
/// `delta/t0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NarrowRangeParams {
    t0: f64,
    delta: f64,
}

impl NarrowRangeParams {
    /// Width ratio beyond which the expansions stop being trustworthy.
    pub const VALIDITY_LIMIT: f64 = 0.3;

    pub fn new(t0: f64, delta: f64) -> Result<Self> {
        if !(t0.is_finite() && t0 > 0.0) {
            return Err(Error::InvalidTemperature(t0));
        }
        if !(delta.is_finite() && delta >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "window width must be nonnegative and finite, got {delta}"
            )));
        }
        let params = Self { t0, delta };
        if !params.is_within_validity() {
            log::warn!(
                "window ratio delta/t0 = {:.3} exceeds the expansion validity limit {}",
                params.delta_ratio(),
                Self::VALIDITY_LIMIT
            );
        }
        Ok(params)
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// The expansion parameter `delta/t0`.
    pub fn delta_ratio(&self) -> f64 {
        self.delta / self.t0
    }

    pub fn is_within_validity(&self) -> bool {
        self.delta_ratio() <= Self::VALIDITY_LIMIT
    }
}

fn check_n_levels(n_levels: usize) -> Result<f64> {
    if n_levels < 2 {
        return Err(Error::InvalidConfig(format!(
            "need at least 2 levels, got {n_levels}"
        )));
    }
    Ok((n_levels - 1) as f64)
}

/// The dimensionless optimal gap `x = eps/t` for a probe read out at a
/// single temperature: the unique root above 2 of
/// `exp(x) = (N-1)(x+2)/(x-2)`.
///
/// Solved in log form, where the left side minus the right side is
/// strictly increasing, so the bracket `(2, 2 + ln(N-1) + 20]` always
/// contains exactly one sign change.
pub fn local_optimal_gap(n_levels: usize) -> Result<f64> {
    let m = check_n_levels(n_levels)?;
    let h = |x: f64| x + (x - 2.0).ln() - (m * (x + 2.0)).ln();
    let lo = 2.0 + 1e-9;
    let hi = 2.0 + m.ln() + 20.0;
    solve::brent_root(h, lo, hi, 1e-13)
}

/// Sensitivity of the two-level ansatz at temperature `t`, evaluated in a
/// form that never overflows: `(N-1) eps^2 e^{-x} / (((N-1)e^{-x} + 1)^2 t^4)`
/// with `x = eps/t`.
pub fn effective_two_level_qfi(ansatz: &TwoLevelAnsatz, t: f64) -> Result<f64> {
    if !t.is_finite() || t <= 0.0 {
        return Err(Error::InvalidTemperature(t));
    }
    let m = (ansatz.n_levels - 1) as f64;
    let eps = ansatz.gap;
    let emx = (-eps / t).exp();
    let denom = m * emx + 1.0;
    Ok(m * eps * eps * emx / (denom * denom * t.powi(4)))
}

/// Right-hand side of the gap condition truncated at the requested order
/// in the width ratio. Positive for all `x > 2`, which keeps the log-form
/// root-finding well defined.
fn truncated_rhs(m: f64, dp: f64, order: u8, x: f64) -> f64 {
    let xm2 = x - 2.0;
    let mut rhs = m * (x + 2.0) / xm2;
    if order >= 1 {
        rhs += m * x.powi(3) * dp / (2.0 * xm2 * xm2);
    }
    if order >= 2 {
        // 12 + x(x-6) = (x-3)^2 + 3 > 0, so the term never flips the sign.
        rhs += m * x.powi(3) * (12.0 + x * (x - 6.0)) * dp * dp / (8.0 * xm2.powi(3));
    }
    rhs
}

/// Optimal dimensionless gap for a narrow window, from the series-corrected
/// gap condition truncated at `order` (0, 1, or 2) in `delta/t0`.
///
/// Order 0 reduces exactly to [`local_optimal_gap`]. The truncated root
/// approaches [`narrow_range_condition_root`] with an error that is cubic
/// in the width ratio; both carry the same quadratic bias relative to the
/// exact integral minimizer of [`exact_narrow_optimum`].
pub fn narrow_range_optimal_gap(
    n_levels: usize,
    params: &NarrowRangeParams,
    order: u8,
) -> Result<f64> {
    let m = check_n_levels(n_levels)?;
    if order > 2 {
        return Err(Error::InvalidConfig(format!(
            "expansion order must be 0, 1, or 2, got {order}"
        )));
    }
    if order == 0 || params.delta == 0.0 {
        return local_optimal_gap(n_levels);
    }
    let dp = params.delta_ratio();
    let phi = |x: f64| x - truncated_rhs(m, dp, order, x).ln();
    let lo = 2.0 + 1e-9;
    let mut hi = 2.0 + m.ln() + 20.0;
    while phi(hi) <= 0.0 {
        hi += 10.0;
        if hi > 300.0 {
            return Err(Error::NoRoot { lo, hi });
        }
    }
    solve::brent_root(phi, lo, hi, 1e-13)
}

/// Exact root of the stationarity condition of the width-expanded
/// objective, before any truncation of the gap series.
///
/// The condition is quadratic in `e^x`; the physical branch is the larger
/// root, available where the leading coefficient is negative. This is the
/// reference against which the truncated series of
/// [`narrow_range_optimal_gap`] converges cubically.
pub fn narrow_range_condition_root(n_levels: usize, params: &NarrowRangeParams) -> Result<f64> {
    let m = check_n_levels(n_levels)?;
    let dp = params.delta_ratio();
    if dp == 0.0 {
        return local_optimal_gap(n_levels);
    }
    // Leading coefficient a(x) = (4 - 2x) + dp (x^2 - 5x + 8) is an upward
    // parabola in x; the branch exists between its two roots.
    let (qa, qb, qc) = (dp, -(2.0 + 5.0 * dp), 4.0 + 8.0 * dp);
    let disc = qb * qb - 4.0 * qa * qc;
    if disc <= 0.0 {
        return Err(Error::NoRoot { lo: 2.0, hi: 2.0 });
    }
    let x_left = (-qb - disc.sqrt()) / (2.0 * qa);
    let x_right = (-qb + disc.sqrt()) / (2.0 * qa);

    let branch_exponent = |x: f64| -> f64 {
        let a = (4.0 - 2.0 * x) + dp * (x * x - 5.0 * x + 8.0);
        let b = 8.0 * m * (1.0 + 2.0 * dp);
        let c = m * m * ((4.0 + 2.0 * x) + dp * (x * x + 5.0 * x + 8.0));
        let y = (-b - (b * b - 4.0 * a * c).sqrt()) / (2.0 * a);
        x - y.ln()
    };

    // The branch value diverges at both domain edges, so the condition
    // changes sign twice; the optimum is the first (ascending) crossing.
    let margin = 1e-6 * (x_right - x_left);
    let mut lo = x_left + margin;
    let mut f_lo = branch_exponent(lo);
    let step = 0.05;
    loop {
        let hi = (lo + step).min(x_right - margin);
        let f_hi = branch_exponent(hi);
        if f_lo < 0.0 && f_hi >= 0.0 {
            return solve::brent_root(branch_exponent, lo, hi, 1e-13);
        }
        if hi >= x_right - margin {
            return Err(Error::NoRoot {
                lo: x_left,
                hi: x_right,
            });
        }
        lo = hi;
        f_lo = f_hi;
    }
}

/// Optimal dimensionless gap `eps/t0` for the two-level ansatz on a narrow
/// window, found by direct golden-section minimization of the windowed
/// inverse-sensitivity integral (no series truncation).
pub fn exact_narrow_optimum(n_levels: usize, params: &NarrowRangeParams) -> Result<f64> {
    check_n_levels(n_levels)?;
    let t0 = params.t0;
    let t1 = params.t0 + params.delta;
    let objective = |eps: f64| -> f64 {
        let ansatz = TwoLevelAnsatz {
            gap: eps,
            n_levels,
        };
        let inverse = |t: f64| -> Result<f64> {
            let f = effective_two_level_qfi(&ansatz, t)?;
            if f < SENSITIVITY_FLOOR {
                return Err(Error::DivergentMeasure);
            }
            Ok(1.0 / f)
        };
        if params.delta == 0.0 {
            return inverse(t0).unwrap_or(f64::INFINITY);
        }
        quad::integrate_doubling(&inverse, t0, t1, 32, 4096, 1e-12).unwrap_or(f64::INFINITY)
    };
    let (eps_opt, _) = solve::golden_min(objective, 1e-9 * t0, 40.0 * t1, 1e-10 * t0);
    Ok(eps_opt / t0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::thermal::{thermal_qfi, EnergySpectrum};
    use rand::Rng;

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs())
    }

    #[test]
    fn local_gap_matches_reference_roots() {
        // Reference roots computed independently by bisecting the gap
        // condition at 1e-13 resolution.
        for (n, expected) in [
            (2, 2.399357280515145),
            (4, 2.8449889662217763),
            (16, 3.856799272213567),
            (64, 4.991965836820667),
            (1024, 7.478675948138726),
        ] {
            let x = local_optimal_gap(n).unwrap();
            assert!(
                (x - expected).abs() < 1e-10,
                "N={n}: {x} vs {expected}"
            );
        }
    }

    #[test]
    fn local_gap_satisfies_its_defining_condition() {
        for n in [2usize, 3, 5, 16, 64, 256, 1024] {
            let m = (n - 1) as f64;
            let x = local_optimal_gap(n).unwrap();
            let lhs = x.exp();
            let rhs = m * (x + 2.0) / (x - 2.0);
            assert!(
                (lhs - rhs).abs() < 1e-8 * lhs,
                "N={n}: residual {}",
                (lhs - rhs).abs() / lhs
            );
        }
    }

    #[test]
    fn local_gap_grows_with_level_count() {
        let x16 = local_optimal_gap(16).unwrap();
        let x64 = local_optimal_gap(64).unwrap();
        assert!(x64 > x16);
        assert!(local_optimal_gap(1).is_err());
    }

    #[test]
    fn ansatz_validation() {
        assert!(TwoLevelAnsatz::new(0.0, 4).is_err());
        assert!(TwoLevelAnsatz::new(-1.0, 4).is_err());
        assert!(TwoLevelAnsatz::new(1.0, 1).is_err());
        assert!(TwoLevelAnsatz::new(1.0, 2).is_ok());
    }

    #[test]
    fn effective_qfi_matches_two_level_closed_form() {
        let ansatz = TwoLevelAnsatz::new(1.0, 2).unwrap();
        let e = std::f64::consts::E;
        let expected = e / ((1.0 + e) * (1.0 + e));
        assert!(rel_close(
            effective_two_level_qfi(&ansatz, 1.0).unwrap(),
            expected,
            1e-14
        ));
    }

    #[test]
    fn effective_qfi_vanishes_for_tiny_gap() {
        let ansatz = TwoLevelAnsatz::new(1e-12, 8).unwrap();
        assert!(effective_two_level_qfi(&ansatz, 1.0).unwrap() < 1e-20);
    }

    #[test]
    fn effective_qfi_agrees_with_expanded_spectrum() {
        let mut rng = crate::rng::stream(42, &[100]);
        for _ in 0..50 {
            let n = rng.gen_range(2usize..40);
            let eps = rng.gen_range(0.05..8.0);
            let t = rng.gen_range(0.1..5.0);
            let ansatz = TwoLevelAnsatz::new(eps, n).unwrap();
            let mut levels = vec![0.0];
            levels.extend(std::iter::repeat(eps).take(n - 1));
            let spectrum = EnergySpectrum::new(levels).unwrap();
            let a = effective_two_level_qfi(&ansatz, t).unwrap();
            let b = thermal_qfi(&spectrum, t).unwrap();
            assert!(rel_close(a, b, 1e-12), "N={n} eps={eps} t={t}: {a} vs {b}");
        }
    }

    #[test]
    fn effective_qfi_survives_extreme_gap_over_temperature() {
        let ansatz = TwoLevelAnsatz::new(1e4, 2).unwrap();
        let f = effective_two_level_qfi(&ansatz, 1.0).unwrap();
        assert!(f.is_finite());
        assert!(f >= 0.0);
    }

    #[test]
    fn narrow_range_order_zero_is_the_local_gap() {
        let params = NarrowRangeParams::new(1.0, 0.2).unwrap();
        let x0 = narrow_range_optimal_gap(16, &params, 0).unwrap();
        assert_eq!(x0, local_optimal_gap(16).unwrap());
        let zero_width = NarrowRangeParams::new(1.0, 0.0).unwrap();
        for order in 0..=2 {
            assert_eq!(
                narrow_range_optimal_gap(16, &zero_width, order).unwrap(),
                local_optimal_gap(16).unwrap()
            );
        }
    }

    #[test]
    fn narrow_range_rejects_unknown_order() {
        let params = NarrowRangeParams::new(1.0, 0.1).unwrap();
        assert!(narrow_range_optimal_gap(16, &params, 3).is_err());
    }

    #[test]
    fn narrow_range_corrections_match_reference_roots() {
        // Frozen from an independent root-finder on the truncated
        // conditions at delta/t0 = 0.1, N = 16.
        let params = NarrowRangeParams::new(1.0, 0.1).unwrap();
        let x1 = narrow_range_optimal_gap(16, &params, 1).unwrap();
        let x2 = narrow_range_optimal_gap(16, &params, 2).unwrap();
        assert!((x1 - 4.032816957).abs() < 1e-8, "order 1: {x1}");
        assert!((x2 - 4.040853571).abs() < 1e-8, "order 2: {x2}");
    }

    #[test]
    fn condition_root_sits_between_truncations_and_minimizer() {
        let params = NarrowRangeParams::new(1.0, 0.1).unwrap();
        let root = narrow_range_condition_root(16, &params).unwrap();
        assert!((root - 4.042876025).abs() < 1e-8, "{root}");
        let zero = NarrowRangeParams::new(1.0, 0.0).unwrap();
        assert_eq!(
            narrow_range_condition_root(16, &zero).unwrap(),
            local_optimal_gap(16).unwrap()
        );
    }

    #[test]
    fn exact_optimum_reduces_to_local_gap_at_zero_width() {
        let params = NarrowRangeParams::new(1.0, 0.0).unwrap();
        let x = exact_narrow_optimum(16, &params).unwrap();
        assert!((x - local_optimal_gap(16).unwrap()).abs() < 1e-7);
    }

    #[test]
    fn exact_optimum_exceeds_local_gap_for_positive_width() {
        let params = NarrowRangeParams::new(1.0, 0.1).unwrap();
        let x = exact_narrow_optimum(16, &params).unwrap();
        assert!(x > local_optimal_gap(16).unwrap());
        assert!((x - 4.052675554).abs() < 1e-6, "{x}");
    }

    #[test]
    fn params_validation_and_validity_flag() {
        assert!(NarrowRangeParams::new(0.0, 0.1).is_err());
        assert!(NarrowRangeParams::new(1.0, -0.1).is_err());
        assert!(NarrowRangeParams::new(1.0, 0.29).unwrap().is_within_validity());
        assert!(!NarrowRangeParams::new(1.0, 0.31).unwrap().is_within_validity());
    }
}
