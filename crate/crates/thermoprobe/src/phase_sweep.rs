//! Sweeping the window ratio, reading effective-level structure off
//! optimal spectra, and locating the critical ratios where that structure
//! changes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optim::{OptimizationResult, OptimizerConfig};
use crate::spectrum_opt;
use crate::thermal::{EnergySpectrum, TemperatureRange};

/// Cluster tolerance in units of the window's harmonic-mean scale: well
/// below the observed separation between effective levels (order of the
/// scale itself) and well above post-polish optimizer noise.
pub const CLUSTER_TOL_FACTOR: f64 = 1e-3;

/// A spectrum reduced to its effective levels: groups of levels closer
/// than the clustering tolerance, each with a mean energy and degeneracy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusteredSpectrum {
    cluster_energies: Vec<f64>,
    degeneracies: Vec<usize>,
}

impl ClusteredSpectrum {
    pub fn cluster_energies(&self) -> &[f64] {
        &self.cluster_energies
    }

    pub fn degeneracies(&self) -> &[usize] {
        &self.degeneracies
    }

    pub fn count(&self) -> usize {
        self.cluster_energies.len()
    }

    /// Energy of the first excited cluster above the ground cluster.
    pub fn first_excited_gap(&self) -> Option<f64> {
        (self.count() >= 2).then(|| self.cluster_energies[1] - self.cluster_energies[0])
    }
}

/// Single-linkage clustering along the sorted level list: a new cluster
/// starts wherever consecutive levels differ by at least `cluster_tol`.
pub fn cluster_levels(spectrum: &EnergySpectrum, cluster_tol: f64) -> Result<ClusteredSpectrum> {
    if !(cluster_tol.is_finite() && cluster_tol > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "cluster tolerance must be positive and finite, got {cluster_tol}"
        )));
    }
    let levels = spectrum.levels();
    let mut cluster_energies = Vec::new();
    let mut degeneracies = Vec::new();
    let mut start = 0;
    for i in 1..=levels.len() {
        if i == levels.len() || levels[i] - levels[i - 1] >= cluster_tol {
            let members = &levels[start..i];
            cluster_energies.push(members.iter().sum::<f64>() / members.len() as f64);
            degeneracies.push(members.len());
            start = i;
        }
    }
    Ok(ClusteredSpectrum {
        cluster_energies,
        degeneracies,
    })
}

/// One grid point of a ratio sweep. Optimizer failures are recorded
/// rather than aborting the whole sweep.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepPoint {
    pub ratio: f64,
    pub result: Option<OptimizationResult>,
    pub clusters: Option<ClusteredSpectrum>,
    pub error: Option<String>,
}

/// A located structure transition: the ratio at which the effective level
/// count steps from `count_below` to `count_above`, with its bisection
/// half-width. `index` numbers the transition within the swept window,
/// starting at 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CriticalRatio {
    pub index: usize,
    pub value: f64,
    pub half_width: f64,
    pub count_below: usize,
    pub count_above: usize,
}

/// Result of a full ratio sweep at fixed probe size and window scale.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PhaseDiagram {
    pub n_levels: usize,
    pub t_hm: f64,
    pub points: Vec<SweepPoint>,
    pub critical_ratios: Vec<CriticalRatio>,
}

impl PhaseDiagram {
    /// Plot-ready CSV: one row per successful grid point with the cluster
    /// energies in units of the window scale. Columns are padded to the
    /// largest cluster count in the sweep.
    pub fn to_csv(&self) -> String {
        let max_clusters = self
            .points
            .iter()
            .filter_map(|p| p.clusters.as_ref().map(ClusteredSpectrum::count))
            .max()
            .unwrap_or(0);
        let mut out = String::from("r,count");
        for i in 1..=max_clusters {
            out.push_str(&format!(",energy_{i},degeneracy_{i}"));
        }
        out.push('\n');
        for point in &self.points {
            let Some(clusters) = &point.clusters else {
                continue;
            };
            out.push_str(&format!("{:.16e},{}", point.ratio, clusters.count()));
            for i in 0..max_clusters {
                if i < clusters.count() {
                    out.push_str(&format!(
                        ",{:.16e},{}",
                        clusters.cluster_energies()[i] / self.t_hm,
                        clusters.degeneracies()[i]
                    ));
                } else {
                    out.push_str(",,");
                }
            }
            out.push('\n');
        }
        out
    }
}

fn optimize_point(
    n_levels: usize,
    t_hm: f64,
    ratio: f64,
    warm_start: Option<&EnergySpectrum>,
    cfg: &OptimizerConfig,
) -> Result<OptimizationResult> {
    let range = TemperatureRange::from_harmonic_mean(t_hm, ratio)?;
    let fresh = spectrum_opt::optimize_levels(n_levels, &range, cfg)?;
    let Some(previous) = warm_start else {
        return Ok(fresh);
    };
    // Bifurcations are exactly where warm-starting alone would track a
    // stale optimum, so the fresh global run always competes; ties go to
    // the warm start for continuity along the grid.
    match spectrum_opt::refine_levels(previous, &range) {
        Ok(warm) if warm.g_value <= fresh.g_value => Ok(warm),
        _ => Ok(fresh),
    }
}

/// Optimizes the probe at every grid ratio (warm-started from the
/// previous point plus an independent fresh search), clusters each
/// optimum, and bisects every detected change in cluster count.
pub fn sweep(
    n_levels: usize,
    t_hm: f64,
    ratio_grid: &[f64],
    cfg: &OptimizerConfig,
) -> Result<PhaseDiagram> {
    if !(t_hm.is_finite() && t_hm > 0.0) {
        return Err(Error::InvalidTemperature(t_hm));
    }
    if ratio_grid.is_empty() {
        return Err(Error::InvalidConfig("ratio grid is empty".into()));
    }
    if ratio_grid.windows(2).any(|w| w[0] >= w[1]) || ratio_grid[0] < 1.0 {
        return Err(Error::InvalidConfig(
            "ratio grid must be strictly ascending with every entry >= 1".into(),
        ));
    }
    let tol = CLUSTER_TOL_FACTOR * t_hm;

    let mut points = Vec::with_capacity(ratio_grid.len());
    let mut previous: Option<EnergySpectrum> = None;
    for (i, &ratio) in ratio_grid.iter().enumerate() {
        let point_cfg = cfg.with_derived_seed(&[1, i as u64]);
        match optimize_point(n_levels, t_hm, ratio, previous.as_ref(), &point_cfg) {
            Ok(result) => {
                let clusters = cluster_levels(&result.spectrum, tol)?;
                previous = Some(result.spectrum.clone());
                points.push(SweepPoint {
                    ratio,
                    result: Some(result),
                    clusters: Some(clusters),
                    error: None,
                });
            }
            Err(e) => points.push(SweepPoint {
                ratio,
                result: None,
                clusters: None,
                error: Some(e.to_string()),
            }),
        }
    }

    let mut critical_ratios = Vec::new();
    let mut transition_index = 0;
    for window in points.windows(2) {
        let (Some(a), Some(b)) = (&window[0].clusters, &window[1].clusters) else {
            continue;
        };
        if a.count() == b.count() {
            continue;
        }
        transition_index += 1;
        let bracket = (window[0].ratio, window[1].ratio);
        match find_critical_ratio(n_levels, t_hm, transition_index, bracket, cfg) {
            Ok(critical) => critical_ratios.push(critical),
            Err(_) => critical_ratios.push(CriticalRatio {
                // Bisection could not tighten the bracket; report the grid
                // cell itself as the uncertainty.
                index: transition_index,
                value: 0.5 * (bracket.0 + bracket.1),
                half_width: 0.5 * (bracket.1 - bracket.0),
                count_below: a.count(),
                count_above: b.count(),
            }),
        }
    }

    Ok(PhaseDiagram {
        n_levels,
        t_hm,
        points,
        critical_ratios,
    })
}

/// Bisects a bracket of window ratios until the transition in effective
/// level count is localized to a relative width below 1e-3.
pub fn find_critical_ratio(
    n_levels: usize,
    t_hm: f64,
    index: usize,
    bracket: (f64, f64),
    cfg: &OptimizerConfig,
) -> Result<CriticalRatio> {
    if !(t_hm.is_finite() && t_hm > 0.0) {
        return Err(Error::InvalidTemperature(t_hm));
    }
    let (mut lo, mut hi) = bracket;
    if !(lo.is_finite() && hi.is_finite()) || lo < 1.0 || hi <= lo {
        return Err(Error::InvalidConfig(format!(
            "invalid ratio bracket [{lo}, {hi}]"
        )));
    }
    let tol = CLUSTER_TOL_FACTOR * t_hm;
    let count_at = |r: f64| -> Result<usize> {
        let range = TemperatureRange::from_harmonic_mean(t_hm, r)?;
        let point_cfg = cfg.with_derived_seed(&[2, r.to_bits()]);
        let result = spectrum_opt::optimize_levels(n_levels, &range, &point_cfg)?;
        Ok(cluster_levels(&result.spectrum, tol)?.count())
    };

    let count_below = count_at(lo)?;
    let count_above = count_at(hi)?;
    if count_below == count_above {
        return Err(Error::DegenerateBracket { count: count_below });
    }
    for _ in 0..60 {
        if hi - lo <= 1e-3 * 0.5 * (hi + lo) {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if count_at(mid)? == count_below {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(CriticalRatio {
        index,
        value: 0.5 * (lo + hi),
        half_width: 0.5 * (hi - lo),
        count_below,
        count_above,
    })
}
