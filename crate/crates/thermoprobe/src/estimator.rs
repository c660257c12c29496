//! Monte Carlo check that energy measurements followed by maximum
//! likelihood actually reach the variance floor 1/(M F) that the
//! sensitivity analysis promises.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;
use crate::thermal::{self, EnergySpectrum};
use rand::Rng;

const T_LO_FACTOR: f64 = 1e-6;
const T_HI_FACTOR: f64 = 1e6;
const BOOTSTRAP_RESAMPLES: usize = 1000;

/// Whether an estimate ran into a search boundary instead of solving
/// the likelihood equation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Clip {
    None,
    Cold,
    Hot,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TemperatureEstimate {
    pub t: f64,
    pub clip: Clip,
}

/// Independent draws from the thermal occupation of `spectrum` at `t`,
/// as level indices, by inverse transform on one deterministic stream.
pub fn sample_energies(
    spectrum: &EnergySpectrum,
    t: f64,
    m: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if m == 0 {
        return Err(Error::InvalidConfig(
            "at least one measurement is required".into(),
        ));
    }
    let weights = thermal::boltzmann_weights(spectrum, t)?;
    let mut cdf = weights;
    let mut acc = 0.0;
    for w in &mut cdf {
        acc += *w;
        *w = acc;
    }
    // Guard the top against roundoff so a draw of u close to 1 cannot
    // fall past the last level.
    *cdf.last_mut().expect("spectra are nonempty") = f64::INFINITY;
    let mut stream = rng::stream(seed, &[]);
    Ok((0..m)
        .map(|_| {
            let u: f64 = stream.gen_range(0.0..1.0);
            cdf.partition_point(|&c| c <= u)
        })
        .collect())
}

/// Temperature whose thermal mean energy matches the sample mean: for
/// energy measurements of a Gibbs state this moment condition is the
/// maximum-likelihood equation. Solved by bisection, which is
/// insensitive to the flat tails of the mean-energy curve.
pub fn mle_temperature(spectrum: &EnergySpectrum, sample: &[usize]) -> Result<TemperatureEstimate> {
    let levels = spectrum.levels();
    let span = *levels.last().expect("spectra are nonempty");
    if span == 0.0 {
        return Err(Error::InvalidConfig(
            "all levels coincide, so no measurement can distinguish temperatures".into(),
        ));
    }
    if sample.is_empty() {
        return Err(Error::InvalidConfig("empty sample".into()));
    }
    if let Some(&bad) = sample.iter().find(|&&i| i >= levels.len()) {
        return Err(Error::InvalidConfig(format!(
            "sample index {bad} is out of range for {} levels",
            levels.len()
        )));
    }
    let mean = sample.iter().map(|&i| levels[i]).sum::<f64>() / sample.len() as f64;
    let t_lo = T_LO_FACTOR * span;
    let t_hi = T_HI_FACTOR * span;
    if mean <= 0.0 {
        return Ok(TemperatureEstimate {
            t: t_lo,
            clip: Clip::Cold,
        });
    }
    // The thermal mean rises monotonically from the ground energy to
    // the flat average of all levels, so a sample mean at or beyond
    // that ceiling has no finite solution.
    let infinite_t_mean = levels.iter().sum::<f64>() / levels.len() as f64;
    if mean >= infinite_t_mean {
        return Ok(TemperatureEstimate {
            t: t_hi,
            clip: Clip::Hot,
        });
    }
    let (mut lo, mut hi) = (t_lo, t_hi);
    while hi - lo > 1e-10 * 0.5 * (hi + lo) {
        let mid = 0.5 * (lo + hi);
        if thermal::mean_energy(spectrum, mid)? < mean {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(TemperatureEstimate {
        t: 0.5 * (lo + hi),
        clip: Clip::None,
    })
}

/// One full repeated-measurement experiment: per-trial estimates, their
/// spread, and the variance floor they are compared against.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EstimationRun {
    pub spectrum: EnergySpectrum,
    pub true_t: f64,
    pub samples_per_trial: usize,
    pub trials: usize,
    pub seed: u64,
    pub estimates: Vec<f64>,
    pub clipped_cold: usize,
    pub clipped_hot: usize,
    /// Spread of the unclipped estimates (n-1 normalization).
    pub empirical_variance: f64,
    /// 1/(M F) at the true temperature.
    pub crb: f64,
    pub ratio: f64,
    /// Central 95% bootstrap interval for `ratio`.
    pub ratio_ci: (f64, f64),
}

fn variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)
}

/// Runs `trials` independent experiments of `m` energy measurements
/// each at `true_t`, estimates the temperature in every trial, and
/// compares the estimator variance to the single-shot bound scaled by
/// 1/m. Trials that clip at a search boundary are excluded from the
/// variance and counted.
pub fn crb_saturation_check(
    spectrum: &EnergySpectrum,
    true_t: f64,
    m: usize,
    trials: usize,
    seed: u64,
) -> Result<EstimationRun> {
    if trials < 2 {
        return Err(Error::InvalidConfig(
            "variance needs at least two trials".into(),
        ));
    }
    if m == 0 {
        return Err(Error::InvalidConfig(
            "at least one measurement per trial is required".into(),
        ));
    }
    let qfi = thermal::thermal_qfi(spectrum, true_t)?;
    if qfi <= 0.0 {
        return Err(Error::InvalidConfig(
            "the bound is infinite for an insensitive spectrum".into(),
        ));
    }
    let crb = 1.0 / (m as f64 * qfi);

    let per_trial: Vec<TemperatureEstimate> = (0..trials)
        .into_par_iter()
        .map(|trial| {
            let sample = sample_energies(
                spectrum,
                true_t,
                m,
                rng::derive_seed(seed, &[trial as u64]),
            )?;
            mle_temperature(spectrum, &sample)
        })
        .collect::<Result<Vec<_>>>()?;

    let estimates: Vec<f64> = per_trial.iter().map(|e| e.t).collect();
    let clipped_cold = per_trial.iter().filter(|e| e.clip == Clip::Cold).count();
    let clipped_hot = per_trial.iter().filter(|e| e.clip == Clip::Hot).count();
    let unclipped: Vec<f64> = per_trial
        .iter()
        .filter(|e| e.clip == Clip::None)
        .map(|e| e.t)
        .collect();
    let clipped = clipped_cold + clipped_hot;
    if clipped * 100 > trials {
        log::warn!(
            "{clipped} of {trials} trials clipped at a boundary; \
             increase the measurements per trial"
        );
    }
    if unclipped.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "only {} of {trials} trials produced usable estimates",
            unclipped.len()
        )));
    }
    let empirical_variance = variance(&unclipped);
    let ratio = empirical_variance / crb;

    // Percentile bootstrap over the unclipped estimates.
    let mut boot: Vec<f64> = (0..BOOTSTRAP_RESAMPLES)
        .into_par_iter()
        .map(|b| {
            let mut stream = rng::stream(seed, &[u64::MAX, b as u64]);
            let resample: Vec<f64> = (0..unclipped.len())
                .map(|_| unclipped[stream.gen_range(0..unclipped.len())])
                .collect();
            variance(&resample) / crb
        })
        .collect();
    boot.sort_by(|a, b| a.total_cmp(b));
    let pick = |q: f64| boot[((boot.len() - 1) as f64 * q).round() as usize];
    let ratio_ci = (pick(0.025), pick(0.975));

    Ok(EstimationRun {
        spectrum: spectrum.clone(),
        true_t,
        samples_per_trial: m,
        trials,
        seed,
        estimates,
        clipped_cold,
        clipped_hot,
        empirical_variance,
        crb,
        ratio,
        ratio_ci,
    })
}
