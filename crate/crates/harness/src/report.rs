//! Fits and profiles derived from an ensemble aggregate.

use gmc_core::estimators::{
    clt_rescale_profile, d_gamma, fit_block_values, l2_slope_from_mean_logs, log_center, BlockValue, SlopeFit,
    Statistic, MIN_FIT_BLOCKS, MIN_QUANTILE_ENSEMBLE,
};
use gmc_core::GmcError;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::ensemble::EnsembleResult;
use crate::error::Result;

/// The statistic of pooled `log |mu^(n)|^2` for every frequency block;
/// `-inf` when a block holds only zero coefficients.
pub fn block_statistics(result: &EnsembleResult, statistic: Statistic) -> Result<Vec<BlockValue<f64>>> {
    result
        .reservoirs
        .iter()
        .enumerate()
        .map(|(b, res)| {
            let value = match statistic {
                _ if result.block_log_count[b] == 0 => f64::NEG_INFINITY,
                Statistic::Mean => result.block_log_sum[b] / result.block_log_count[b] as f64,
                _ => statistic.apply(&mut res.values())?,
            };
            Ok(BlockValue { lo: res.lo, hi: res.hi, x: log_center(res.lo, res.hi, statistic)?, value })
        })
        .collect::<gmc_core::Result<_>>()
        .map_err(Into::into)
}

/// Slope of the block statistic against log-frequency over `[lo, hi)`.
pub fn decay_fit(result: &EnsembleResult, statistic: Statistic, range: (usize, usize)) -> Result<SlopeFit<f64>> {
    if statistic != Statistic::Mean && result.count < MIN_QUANTILE_ENSEMBLE as u64 {
        return Err(GmcError::InsufficientData(format!(
            "{} replicas < {MIN_QUANTILE_ENSEMBLE} for {statistic}",
            result.count
        ))
        .into());
    }
    let blocks: Vec<_> = block_statistics(result, statistic)?
        .into_iter()
        .filter(|b| b.lo >= range.0 && b.hi <= range.1 && b.hi == 2 * b.lo)
        .collect();
    if blocks.iter().any(|b| !b.value.is_finite()) {
        return Err(GmcError::InsufficientData("block without nonzero coefficients".into()).into());
    }
    if blocks.len() < MIN_FIT_BLOCKS {
        return Err(GmcError::InsufficientData(format!("{} blocks < {MIN_FIT_BLOCKS}", blocks.len())).into());
    }
    Ok(fit_block_values(blocks, statistic, range)?)
}

/// Mean `ln S(l)` per level.
pub fn mean_log_l2(result: &EnsembleResult, levels: &[u32]) -> Vec<f64> {
    levels.iter().map(|&l| result.log_l2_sum[l as usize] / result.count as f64).collect()
}

pub fn l2_fit(result: &EnsembleResult, levels: &[u32]) -> Result<SlopeFit<f64>> {
    if levels.iter().any(|&l| l as usize >= result.log_l2_sum.len()) {
        return Err(GmcError::InvalidArgument(format!("levels {levels:?} beyond the grid")).into());
    }
    Ok(l2_slope_from_mean_logs(levels, &mean_log_l2(result, levels))?)
}

pub fn clt_profile(result: &EnsembleResult, range: (usize, usize)) -> Result<Vec<BlockValue<f64>>> {
    Ok(clt_rescale_profile(&result.moments, result.config.gamma, range)?)
}

/// Ensemble mean of `ln(max_{I in D_l} mass(I) / |I|^alpha)` per level.
pub fn frostman_log_ratios(result: &EnsembleResult, alpha: f64, levels: &[u32]) -> Vec<f64> {
    levels
        .iter()
        .map(|&l| result.log_max_mass_sum[l as usize] / result.count as f64 + alpha * l as f64 * std::f64::consts::LN_2)
        .collect()
}

/// Ratio of consecutive (geometric-mean) Frostman ratios.
pub fn frostman_growth(result: &EnsembleResult, alpha: f64, levels: &[u32]) -> Vec<f64> {
    frostman_log_ratios(result, alpha, levels).windows(2).map(|w| (w[1] - w[0]).exp()).collect()
}

/// `(m, mean ||M_m||_q^p)` for each recorded depth.
pub fn norm_means(result: &EnsembleResult) -> Vec<(u32, f64)> {
    result
        .config
        .effective_norm_depths()
        .into_iter()
        .zip(&result.norm_power_sum)
        .map(|(m, s)| (m, s / result.count as f64))
        .collect()
}

/// Default `L^2` levels: 4 up to 10, kept two levels above the grid.
pub fn default_levels(config: &ExperimentConfig) -> Vec<u32> {
    let top = (config.grid.trailing_zeros().saturating_sub(2)).min(10);
    (4..=top).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub version: String,
    pub config: ExperimentConfig,
    pub replicas: u64,
    pub d_gamma: f64,
    pub mean_total_mass: f64,
    pub decay: SlopeFit<f64>,
    pub decay_mean: SlopeFit<f64>,
    pub l2: Option<SlopeFit<f64>>,
    pub norms: Vec<(u32, f64)>,
}

pub fn summarize(result: &EnsembleResult) -> Result<Summary> {
    let c = &result.config;
    let range = (c.block_lo, c.block_hi);
    let levels = default_levels(c);
    Ok(Summary {
        version: result.version.clone(),
        config: c.clone(),
        replicas: result.count,
        d_gamma: d_gamma(c.gamma)?,
        mean_total_mass: result.mean_total_mass(),
        decay: decay_fit(result, c.statistic, range)?,
        decay_mean: decay_fit(result, Statistic::Mean, range)?,
        l2: if levels.len() >= 3 { Some(l2_fit(result, &levels)?) } else { None },
        norms: norm_means(result),
    })
}
