//! Equilibrium statistics of a probe spectrum: occupation weights, thermal
//! sensitivity (quantum Fisher information), and the range-averaged
//! insensitivity measure G.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::quad;

/// Occupation weights below this are flushed to exactly zero; they are
/// beneath double-precision resolution of the normalizing sum anyway.
pub const WEIGHT_FLUSH: f64 = 1e-300;

/// Sensitivity floor under which 1/F is treated as divergent instead of
/// being allowed to overflow inside the quadrature.
pub const SENSITIVITY_FLOOR: f64 = 1e-280;

/// A sorted probe spectrum pinned so the ground level sits exactly at 0.
///
/// Single-level spectra are representable (they arise when ingesting
/// degenerate data and must reach the divergence guards), but every
/// optimization surface requires at least two levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct EnergySpectrum {
    levels: Vec<f64>,
}

impl EnergySpectrum {
    /// Validates an already pinned, ascending level list.
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::EmptySpectrum);
        }
        for &e in &levels {
            if !e.is_finite() {
                return Err(Error::NonFiniteLevel(e));
            }
        }
        if levels.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::UnpinnedSpectrum(levels[0]));
        }
        if levels[0] != 0.0 {
            return Err(Error::UnpinnedSpectrum(levels[0]));
        }
        Ok(Self { levels })
    }

    /// Sorts arbitrary finite levels and shifts them so the ground is 0.
    pub fn pinned(mut levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::EmptySpectrum);
        }
        for &e in &levels {
            if !e.is_finite() {
                return Err(Error::NonFiniteLevel(e));
            }
        }
        levels.sort_by(f64::total_cmp);
        let ground = levels[0];
        for e in &mut levels {
            *e -= ground;
        }
        levels[0] = 0.0;
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        false // construction requires at least one level
    }

    /// Largest level; 0 for fully degenerate spectra.
    pub fn span(&self) -> f64 {
        *self.levels.last().expect("nonempty by construction")
    }

    /// True when every level equals the ground level.
    pub fn is_fully_degenerate(&self) -> bool {
        self.span() == 0.0
    }
}

impl TryFrom<Vec<f64>> for EnergySpectrum {
    type Error = Error;
    fn try_from(levels: Vec<f64>) -> Result<Self> {
        Self::new(levels)
    }
}

impl From<EnergySpectrum> for Vec<f64> {
    fn from(s: EnergySpectrum) -> Vec<f64> {
        s.levels
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct RawRange {
    t_min: f64,
    t_max: f64,
}

/// A temperature window `[t_min, t_max]` with `0 < t_min <= t_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawRange", into = "RawRange")]
pub struct TemperatureRange {
    t_min: f64,
    t_max: f64,
}

impl TemperatureRange {
    pub fn new(t_min: f64, t_max: f64) -> Result<Self> {
        if !(t_min.is_finite() && t_max.is_finite()) || t_min <= 0.0 || t_max < t_min {
            return Err(Error::InvalidRange { t_min, t_max });
        }
        Ok(Self { t_min, t_max })
    }

    /// Builds the window from its harmonic-mean scale `t_hm` and the ratio
    /// `r = t_max/t_min >= 1`, the two parameters the problem actually
    /// depends on.
    pub fn from_harmonic_mean(t_hm: f64, ratio: f64) -> Result<Self> {
        if !(t_hm.is_finite() && ratio.is_finite()) || t_hm <= 0.0 || ratio < 1.0 {
            return Err(Error::InvalidRange {
                t_min: t_hm,
                t_max: ratio,
            });
        }
        let t_min = t_hm * (ratio + 1.0) / ratio;
        let t_max = t_hm * (ratio + 1.0);
        Self::new(t_min, t_max)
    }

    pub fn t_min(&self) -> f64 {
        self.t_min
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    /// Harmonic combination `(1/t_min + 1/t_max)^-1`, the natural energy
    /// scale of the window.
    pub fn harmonic_mean(&self) -> f64 {
        1.0 / (1.0 / self.t_min + 1.0 / self.t_max)
    }

    pub fn ratio(&self) -> f64 {
        self.t_max / self.t_min
    }

    pub fn width(&self) -> f64 {
        self.t_max - self.t_min
    }

    /// True for a single-temperature window (`t_min == t_max`).
    pub fn is_local(&self) -> bool {
        self.t_min == self.t_max
    }
}

impl TryFrom<RawRange> for TemperatureRange {
    type Error = Error;
    fn try_from(r: RawRange) -> Result<Self> {
        Self::new(r.t_min, r.t_max)
    }
}

impl From<TemperatureRange> for RawRange {
    fn from(r: TemperatureRange) -> RawRange {
        RawRange {
            t_min: r.t_min,
            t_max: r.t_max,
        }
    }
}

/// Controls the node-doubling Gauss-Legendre evaluation of the G integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureConfig {
    pub initial_nodes: usize,
    pub max_nodes: usize,
    pub rel_tol: f64,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self {
            initial_nodes: 32,
            max_nodes: 4096,
            rel_tol: 1e-9,
        }
    }
}

impl QuadratureConfig {
    pub fn validate(&self) -> Result<()> {
        if self.initial_nodes == 0 || self.initial_nodes > self.max_nodes {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= initial_nodes <= max_nodes, got {} and {}",
                self.initial_nodes, self.max_nodes
            )));
        }
        if !(self.rel_tol.is_finite() && self.rel_tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "rel_tol must be positive and finite, got {}",
                self.rel_tol
            )));
        }
        Ok(())
    }
}

fn check_temperature(t: f64) -> Result<()> {
    if !t.is_finite() || t <= 0.0 {
        return Err(Error::InvalidTemperature(t));
    }
    Ok(())
}

/// Shifted mean and variance of `levels` at temperature `t`, with all
/// exponentials taken relative to the smallest level so nothing overflows.
/// Order-insensitive. Returns `(mean - min, var)`.
fn shifted_moments(levels: &[f64], t: f64) -> (f64, f64) {
    let ground = levels.iter().copied().fold(f64::INFINITY, f64::min);
    let mut z = 0.0;
    let mut first = 0.0;
    let mut second = 0.0;
    for &e in levels {
        let d = e - ground;
        let mut w = (-d / t).exp();
        if w < WEIGHT_FLUSH {
            w = 0.0;
        }
        z += w;
        first += w * d;
        second += w * d * d;
    }
    // z >= 1: the ground level always contributes weight 1.
    let mean = first / z;
    let var = (second / z - mean * mean).max(0.0);
    (mean, var)
}

/// Occupation probabilities of each level at temperature `t`.
pub fn boltzmann_weights(spectrum: &EnergySpectrum, t: f64) -> Result<Vec<f64>> {
    check_temperature(t)?;
    let levels = spectrum.levels();
    let ground = levels[0];
    let mut weights: Vec<f64> = levels
        .iter()
        .map(|&e| {
            let w = (-(e - ground) / t).exp();
            if w < WEIGHT_FLUSH {
                0.0
            } else {
                w
            }
        })
        .collect();
    let z: f64 = weights.iter().sum();
    for w in &mut weights {
        *w /= z;
    }
    Ok(weights)
}

/// Thermal sensitivity of the spectrum at `t`: energy variance / t^4.
pub fn thermal_qfi(spectrum: &EnergySpectrum, t: f64) -> Result<f64> {
    check_temperature(t)?;
    let (_, var) = shifted_moments(spectrum.levels(), t);
    Ok(var / t.powi(4))
}

/// Same as [`thermal_qfi`] but on an arbitrary finite level list: the
/// input is sorted internally and the value is invariant under adding a
/// constant to every level.
pub fn thermal_qfi_raw(levels: &[f64], t: f64) -> Result<f64> {
    check_temperature(t)?;
    if levels.is_empty() {
        return Err(Error::EmptySpectrum);
    }
    for &e in levels {
        if !e.is_finite() {
            return Err(Error::NonFiniteLevel(e));
        }
    }
    let mut sorted = levels.to_vec();
    sorted.sort_by(f64::total_cmp);
    let (_, var) = shifted_moments(&sorted, t);
    Ok(var / t.powi(4))
}

/// Mean occupied energy at `t` (in absolute terms, including the ground
/// offset). Strictly increasing in `t` for non-degenerate spectra.
pub fn mean_energy(spectrum: &EnergySpectrum, t: f64) -> Result<f64> {
    check_temperature(t)?;
    let levels = spectrum.levels();
    let (shifted_mean, _) = shifted_moments(levels, t);
    Ok(levels[0] + shifted_mean)
}

/// Range-averaged inverse sensitivity: the figure of demerit minimized by
/// every optimizer in this crate. Lower is better; a probe with small G
/// stays sensitive across the whole window.
///
/// For a single-temperature window this is exactly `1/F(t)`. Otherwise the
/// integral of `1/F` is evaluated by Gauss-Legendre node doubling per
/// `quad` and divided by the window width.
pub fn g_measure(
    spectrum: &EnergySpectrum,
    range: &TemperatureRange,
    quad_cfg: &QuadratureConfig,
) -> Result<f64> {
    g_measure_raw(spectrum.levels(), range, quad_cfg)
}

/// [`g_measure`] on a bare level list, for optimizer objectives that
/// cannot afford spectrum construction per evaluation. Levels need not be
/// sorted or pinned; they must be finite.
pub(crate) fn g_measure_raw(
    levels: &[f64],
    range: &TemperatureRange,
    quad_cfg: &QuadratureConfig,
) -> Result<f64> {
    quad_cfg.validate()?;
    let lo = levels.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = levels.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(lo < hi) {
        return Err(Error::DivergentMeasure);
    }
    let guarded_inverse = |t: f64| -> Result<f64> {
        let (_, var) = shifted_moments(levels, t);
        let f = var / t.powi(4);
        if f < SENSITIVITY_FLOOR {
            return Err(Error::DivergentMeasure);
        }
        Ok(1.0 / f)
    };
    if range.is_local() {
        return guarded_inverse(range.t_min());
    }
    let integral = quad::integrate_doubling(
        &guarded_inverse,
        range.t_min(),
        range.t_max(),
        quad_cfg.initial_nodes,
        quad_cfg.max_nodes,
        quad_cfg.rel_tol,
    )?;
    Ok(integral / range.width())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rel_close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * a.abs().max(b.abs())
    }

    #[test]
    fn new_rejects_bad_spectra() {
        assert!(matches!(
            EnergySpectrum::new(vec![]),
            Err(Error::EmptySpectrum)
        ));
        assert!(matches!(
            EnergySpectrum::new(vec![0.0, f64::NAN]),
            Err(Error::NonFiniteLevel(_))
        ));
        assert!(matches!(
            EnergySpectrum::new(vec![0.5, 1.0]),
            Err(Error::UnpinnedSpectrum(_))
        ));
        assert!(matches!(
            EnergySpectrum::new(vec![0.0, 2.0, 1.0]),
            Err(Error::UnpinnedSpectrum(_))
        ));
        assert!(EnergySpectrum::new(vec![0.0]).is_ok());
    }

    #[test]
    fn pinned_sorts_and_shifts() {
        let s = EnergySpectrum::pinned(vec![3.0, 1.0, 2.0]).unwrap();
        assert_eq!(s.levels(), &[0.0, 1.0, 2.0]);
        let t = EnergySpectrum::pinned(vec![-1.0, 4.0]).unwrap();
        assert_eq!(t.levels(), &[0.0, 5.0]);
    }

    #[test]
    fn range_construction_and_conversion() {
        assert!(TemperatureRange::new(0.0, 1.0).is_err());
        assert!(TemperatureRange::new(2.0, 1.0).is_err());
        let r = TemperatureRange::from_harmonic_mean(1.0, 5.0).unwrap();
        assert!(rel_close(r.ratio(), 5.0, 1e-12));
        assert!(rel_close(r.harmonic_mean(), 1.0, 1e-12));
        assert!(rel_close(r.t_min(), 1.2, 1e-12));
        assert!(rel_close(r.t_max(), 6.0, 1e-12));
        let local = TemperatureRange::from_harmonic_mean(2.0, 1.0).unwrap();
        assert!(local.is_local());
        assert_eq!(local.t_min(), 4.0);
    }

    #[test]
    fn degenerate_two_level_weights_split_evenly() {
        let s = EnergySpectrum::new(vec![0.0, 0.0]).unwrap();
        let w = boltzmann_weights(&s, 0.7).unwrap();
        assert_eq!(w, vec![0.5, 0.5]);
    }

    #[test]
    fn cold_limit_occupies_ground_only() {
        let s = EnergySpectrum::new(vec![0.0, 1.0]).unwrap();
        let w = boltzmann_weights(&s, 1e-3).unwrap();
        assert_eq!(w[0], 1.0);
        assert_eq!(w[1], 0.0);
    }

    #[test]
    fn unit_gap_weights_at_unit_temperature() {
        let s = EnergySpectrum::new(vec![0.0, 1.0]).unwrap();
        let w = boltzmann_weights(&s, 1.0).unwrap();
        let e = std::f64::consts::E;
        assert!(rel_close(w[0], e / (1.0 + e), 1e-14));
        assert!(rel_close(w[1], 1.0 / (1.0 + e), 1e-14));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn weights_reject_bad_temperature() {
        let s = EnergySpectrum::new(vec![0.0, 1.0]).unwrap();
        assert!(matches!(
            boltzmann_weights(&s, 0.0),
            Err(Error::InvalidTemperature(_))
        ));
        assert!(matches!(
            boltzmann_weights(&s, -1.0),
            Err(Error::InvalidTemperature(_))
        ));
        assert!(matches!(
            boltzmann_weights(&s, f64::INFINITY),
            Err(Error::InvalidTemperature(_))
        ));
    }

    #[test]
    fn qfi_vanishes_for_degenerate_spectrum() {
        let s = EnergySpectrum::new(vec![0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(thermal_qfi(&s, 0.3).unwrap(), 0.0);
    }

    #[test]
    fn two_level_qfi_matches_closed_form() {
        let s = EnergySpectrum::new(vec![0.0, 1.0]).unwrap();
        let e = std::f64::consts::E;
        let expected = e / ((1.0 + e) * (1.0 + e));
        assert!(rel_close(thermal_qfi(&s, 1.0).unwrap(), expected, 1e-14));
    }

    #[test]
    fn degenerate_excited_manifold_matches_effective_form() {
        // (N-1)-fold degenerate gap: F = (N-1) e^2 exp(e/t) / ((N-1+exp(e/t))^2 t^4)
        let n = 16;
        let eps = 3.857;
        let t = 1.0;
        let mut levels = vec![0.0];
        levels.extend(std::iter::repeat(eps).take(n - 1));
        let s = EnergySpectrum::new(levels).unwrap();
        let m = (n - 1) as f64;
        let ex = (eps / t).exp();
        let expected = m * eps * eps * ex / ((m + ex) * (m + ex) * t.powi(4));
        assert!(rel_close(thermal_qfi(&s, t).unwrap(), expected, 1e-10));
    }

    #[test]
    fn qfi_scale_covariance() {
        let s = EnergySpectrum::new(vec![0.0, 0.8, 2.5]).unwrap();
        let doubled = EnergySpectrum::new(vec![0.0, 1.6, 5.0]).unwrap();
        let f = thermal_qfi(&s, 0.9).unwrap();
        let f2 = thermal_qfi(&doubled, 1.8).unwrap();
        // Doubling is exact in binary floating point.
        assert_eq!(f2, f / 4.0);
        let tripled =
            EnergySpectrum::new(vec![0.0, 3.0 * 0.8, 3.0 * 2.5]).unwrap();
        let f3 = thermal_qfi(&tripled, 3.0 * 0.9).unwrap();
        assert!(rel_close(f3, f / 9.0, 1e-12));
    }

    #[test]
    fn raw_qfi_is_shift_and_permutation_invariant() {
        let base = [0.0, 0.37, 1.9];
        let t = 0.63;
        let f0 = thermal_qfi_raw(&base, t).unwrap();
        let shifted: Vec<f64> = base.iter().map(|e| e + 5.1).collect();
        assert!(rel_close(thermal_qfi_raw(&shifted, t).unwrap(), f0, 1e-12));
        let permuted = [1.9, 0.0, 0.37];
        assert_eq!(thermal_qfi_raw(&permuted, t).unwrap(), f0);
    }

    #[test]
    fn qfi_decays_at_high_temperature() {
        let s = EnergySpectrum::new(vec![0.0, 1.0, 3.0]).unwrap();
        let peak = (1..400)
            .map(|i| thermal_qfi(&s, 0.01 * i as f64).unwrap())
            .fold(0.0, f64::max);
        let tail = thermal_qfi(&s, 1e3 * 3.0).unwrap();
        assert!(tail < 1e-6 * peak);
    }

    #[test]
    fn mean_energy_is_monotone_in_t() {
        let s = EnergySpectrum::new(vec![0.0, 1.0, 2.5]).unwrap();
        let mut prev = mean_energy(&s, 0.05).unwrap();
        for i in 1..60 {
            let cur = mean_energy(&s, 0.05 + 0.25 * i as f64).unwrap();
            assert!(cur > prev);
            prev = cur;
        }
        // Saturates at the flat average of all levels.
        assert!(prev < (0.0 + 1.0 + 2.5) / 3.0);
    }

    #[test]
    fn local_g_is_inverse_sensitivity() {
        let s = EnergySpectrum::new(vec![0.0, 1.0]).unwrap();
        let range = TemperatureRange::new(1.0, 1.0).unwrap();
        let g = g_measure(&s, &range, &QuadratureConfig::default()).unwrap();
        let f = thermal_qfi(&s, 1.0).unwrap();
        assert_eq!(g, 1.0 / f);
        assert!(rel_close(g, 5.086161269630487, 1e-12));
    }

    #[test]
    fn g_rejects_fully_degenerate_spectrum() {
        let s = EnergySpectrum::new(vec![0.0, 0.0]).unwrap();
        let range = TemperatureRange::new(0.5, 1.0).unwrap();
        assert!(matches!(
            g_measure(&s, &range, &QuadratureConfig::default()),
            Err(Error::DivergentMeasure)
        ));
        let single = EnergySpectrum::new(vec![0.0]).unwrap();
        assert!(matches!(
            g_measure(&single, &range, &QuadratureConfig::default()),
            Err(Error::DivergentMeasure)
        ));
    }

    #[test]
    fn g_scaling_identity_is_exact_for_doubling() {
        let s = EnergySpectrum::new(vec![0.0, 0.75, 2.0, 3.5]).unwrap();
        let scaled = EnergySpectrum::new(vec![0.0, 1.5, 4.0, 7.0]).unwrap();
        let range = TemperatureRange::new(0.5, 1.25).unwrap();
        let scaled_range = TemperatureRange::new(1.0, 2.5).unwrap();
        let cfg = QuadratureConfig::default();
        let g = g_measure(&s, &range, &cfg).unwrap();
        let g2 = g_measure(&scaled, &scaled_range, &cfg).unwrap();
        assert_eq!(g2, 4.0 * g);
    }

    #[test]
    fn g_quadrature_tightens_under_smaller_tolerance() {
        let s = EnergySpectrum::new(vec![0.0, 4.0]).unwrap();
        let range = TemperatureRange::new(0.5, 1.0).unwrap();
        let loose = g_measure(
            &s,
            &range,
            &QuadratureConfig {
                initial_nodes: 8,
                max_nodes: 4096,
                rel_tol: 1e-6,
            },
        )
        .unwrap();
        let tight = g_measure(
            &s,
            &range,
            &QuadratureConfig {
                initial_nodes: 64,
                max_nodes: 8192,
                rel_tol: 1e-13,
            },
        )
        .unwrap();
        assert!(rel_close(loose, tight, 1e-5));
    }

    #[test]
    fn quadrature_config_validation() {
        let bad = QuadratureConfig {
            initial_nodes: 0,
            max_nodes: 10,
            rel_tol: 1e-9,
        };
        assert!(bad.validate().is_err());
        let inverted = QuadratureConfig {
            initial_nodes: 64,
            max_nodes: 32,
            rel_tol: 1e-9,
        };
        assert!(inverted.validate().is_err());
        let nan_tol = QuadratureConfig {
            rel_tol: f64::NAN,
            ..QuadratureConfig::default()
        };
        assert!(nan_tol.validate().is_err());
    }

    #[test]
    fn spectrum_serde_round_trip_enforces_invariants() {
        let s = EnergySpectrum::new(vec![0.0, 1.0, 2.0]).unwrap();
        let json = serde_json::to_string(&s).unwrap();
        assert_eq!(json, "[0.0,1.0,2.0]");
        let back: EnergySpectrum = serde_json::from_str(&json).unwrap();
        assert_eq!(back, s);
        let bad: std::result::Result<EnergySpectrum, _> =
            serde_json::from_str("[1.0,2.0]");
        assert!(bad.is_err());
    }
}
