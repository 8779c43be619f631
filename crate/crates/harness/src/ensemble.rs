//! Replica execution and the mergeable ensemble aggregate.

use std::ops::Range;

use gmc_core::chaos::chaos_density_to;
use gmc_core::estimators::{exponent_search, martingale_norm_powers, ExponentTriple, SpectrumMoments};
use gmc_core::rng::hash_words;
use gmc_core::sampler::FieldSampler;
use gmc_core::spectral::FourierPlan;
use gmc_core::{Complex64, SeedRecord};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{HarnessError, Result};

pub const VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));
pub const RESERVOIR_SIZE: usize = 256;
const RESERVOIR_TAG: u64 = 0x7265_7365_7276_6f69;

/// Everything one replica contributes to the ensemble.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaRecord {
    pub replica: u64,
    /// `mu^(n)` for `n = 1..=n_max`.
    pub spectrum: Vec<Complex64>,
    pub total_mass: f64,
    /// `S(l) = sum_{I in D_l} mass(I)^2` for `l = 0..=log2 G`.
    pub l2_sums: Vec<f64>,
    /// `max_{I in D_l} mass(I)` for `l = 0..=log2 G`.
    pub max_masses: Vec<f64>,
    /// `||M_m||_q^p` for each norm depth.
    pub norm_powers: Vec<f64>,
}

/// Samples kept for quantiles of `log |mu^(n)|^2` over one frequency block.
///
/// Holds the `RESERVOIR_SIZE` entries of smallest priority, where the priority
/// is a hash of `(seed, block, replica, n)`. Bottom-k selection is order-free,
/// so merges are associative and commutative.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reservoir {
    pub lo: usize,
    pub hi: usize,
    /// `(priority, value)` sorted by priority.
    pub entries: Vec<(u64, f64)>,
}

impl Reservoir {
    fn new(lo: usize, hi: usize) -> Self {
        Self { lo, hi, entries: Vec::new() }
    }

    fn settle(&mut self) {
        self.entries.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        self.entries.truncate(RESERVOIR_SIZE);
    }

    fn merge(&mut self, other: &Self) {
        self.entries.extend_from_slice(&other.entries);
        self.settle();
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.1).collect()
    }
}

/// Dyadic blocks `[2^a, 2^{a+1})` clipped to `[1, n_max]`.
pub fn frequency_blocks(n_max: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut lo = 1;
    while lo <= n_max {
        out.push((lo, (2 * lo).min(n_max + 1)));
        lo *= 2;
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleResult {
    pub version: String,
    pub config: ExperimentConfig,
    pub exponents: Option<ExponentTriple<f64>>,
    pub count: u64,
    pub moments: SpectrumMoments<f64>,
    /// Per frequency block: sum and count of finite `log |mu^(n)|^2`.
    pub block_log_sum: Vec<f64>,
    pub block_log_count: Vec<u64>,
    pub reservoirs: Vec<Reservoir>,
    pub mass_sum: f64,
    pub mass_sq_sum: f64,
    /// Per level `l = 0..=log2 G`.
    pub l2_sum: Vec<f64>,
    pub log_l2_sum: Vec<f64>,
    pub log_max_mass_sum: Vec<f64>,
    /// Per norm depth.
    pub norm_power_sum: Vec<f64>,
}

fn add(a: &mut [f64], b: &[f64]) {
    for (x, y) in a.iter_mut().zip(b) {
        *x += y;
    }
}

impl EnsembleResult {
    /// The merge identity for `config`.
    pub fn empty(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let levels = config.grid_spec()?.log2() as usize + 1;
        let blocks = frequency_blocks(config.n_max);
        let exponents = match config.tau {
            Some(tau) => Some(exponent_search(config.gamma, tau)?),
            None => None,
        };
        Ok(Self {
            version: VERSION.to_string(),
            config: config.clone(),
            exponents,
            count: 0,
            moments: SpectrumMoments::new(config.n_max),
            block_log_sum: vec![0.0; blocks.len()],
            block_log_count: vec![0; blocks.len()],
            reservoirs: blocks.iter().map(|&(lo, hi)| Reservoir::new(lo, hi)).collect(),
            mass_sum: 0.0,
            mass_sq_sum: 0.0,
            l2_sum: vec![0.0; levels],
            log_l2_sum: vec![0.0; levels],
            log_max_mass_sum: vec![0.0; levels],
            norm_power_sum: vec![0.0; config.effective_norm_depths().len()],
        })
    }

    fn absorb(&mut self, record: &ReplicaRecord) {
        self.count += 1;
        self.moments.push(&record.spectrum);
        for (b, res) in self.reservoirs.iter_mut().enumerate() {
            for n in res.lo..res.hi {
                let v = record.spectrum[n - 1].norm_sqr().ln();
                if !v.is_finite() {
                    continue;
                }
                self.block_log_sum[b] += v;
                self.block_log_count[b] += 1;
                let priority =
                    hash_words(&[self.config.seed, RESERVOIR_TAG, res.lo as u64, record.replica, n as u64]);
                res.entries.push((priority, v));
            }
            res.settle();
        }
        self.mass_sum += record.total_mass;
        self.mass_sq_sum += record.total_mass * record.total_mass;
        add(&mut self.l2_sum, &record.l2_sums);
        for (l, s) in self.log_l2_sum.iter_mut().zip(&record.l2_sums) {
            *l += s.ln();
        }
        for (l, s) in self.log_max_mass_sum.iter_mut().zip(&record.max_masses) {
            *l += s.ln();
        }
        add(&mut self.norm_power_sum, &record.norm_powers);
    }

    pub fn from_record(config: &ExperimentConfig, record: &ReplicaRecord) -> Result<Self> {
        let mut r = Self::empty(config)?;
        r.absorb(record);
        Ok(r)
    }

    pub fn mean_total_mass(&self) -> f64 {
        self.mass_sum / self.count as f64
    }
}

/// Adds accumulators, counts and reservoirs of two results with compatible
/// config echoes.
pub fn merge_results(a: &EnsembleResult, b: &EnsembleResult) -> Result<EnsembleResult> {
    if !a.config.compatible(&b.config) {
        return Err(HarnessError::Mismatch(format!("{:?} vs {:?}", a.config, b.config)));
    }
    if a.version != b.version {
        return Err(HarnessError::Mismatch(format!("version {} vs {}", a.version, b.version)));
    }
    let mut out = a.clone();
    out.count += b.count;
    out.moments.merge(&b.moments);
    add(&mut out.block_log_sum, &b.block_log_sum);
    for (x, y) in out.block_log_count.iter_mut().zip(&b.block_log_count) {
        *x += y;
    }
    for (x, y) in out.reservoirs.iter_mut().zip(&b.reservoirs) {
        x.merge(y);
    }
    out.mass_sum += b.mass_sum;
    out.mass_sq_sum += b.mass_sq_sum;
    add(&mut out.l2_sum, &b.l2_sum);
    add(&mut out.log_l2_sum, &b.log_l2_sum);
    add(&mut out.log_max_mass_sum, &b.log_max_mass_sum);
    add(&mut out.norm_power_sum, &b.norm_power_sum);
    Ok(out)
}

/// Sampler, FFT plan and exponents shared by all replicas of one config.
pub struct Runner {
    config: ExperimentConfig,
    sampler: FieldSampler<f64>,
    plan: FourierPlan<f64>,
    exponents: Option<ExponentTriple<f64>>,
}

impl Runner {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let grid = config.grid_spec()?;
        let exponents = match config.tau {
            Some(tau) => Some(exponent_search(config.gamma, tau)?),
            None => None,
        };
        Ok(Self {
            config: config.clone(),
            sampler: FieldSampler::new(config.m, grid)?,
            plan: FourierPlan::new(grid),
            exponents,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn run_replica(&self, id: u64) -> Result<ReplicaRecord> {
        self.replica_inner(id).map_err(|source| HarnessError::Replica { id, source })
    }

    fn replica_inner(&self, id: u64) -> gmc_core::Result<ReplicaRecord> {
        let c = &self.config;
        let gamma = gmc_core::chaos::Gamma::new(c.gamma)?;
        let hierarchy = self.sampler.sample(SeedRecord::new(c.seed, id));
        let density = chaos_density_to(&hierarchy, gamma, c.m)?;
        let spectrum = self.plan.coefficients(&density.values, c.n_max);
        let mut l2_sums = Vec::new();
        let mut max_masses = Vec::new();
        for l in 0..=density.grid.log2() {
            let masses = density.dyadic_masses(l)?;
            l2_sums.push(masses.iter().map(|m| m * m).sum());
            max_masses.push(masses.into_iter().fold(0.0, f64::max));
        }
        let norm_powers = match (self.exponents, c.tau) {
            (Some(e), Some(tau)) => martingale_norm_powers(
                &hierarchy,
                &self.plan,
                gamma,
                tau,
                (e.p, e.q),
                &c.effective_norm_depths(),
                c.n_max,
            )?,
            _ => Vec::new(),
        };
        Ok(ReplicaRecord {
            replica: id,
            spectrum,
            total_mass: density.total_mass(),
            l2_sums,
            max_masses,
            norm_powers,
        })
    }

    /// Records for `ids`, in id order.
    pub fn records(&self, ids: Range<u64>) -> Result<Vec<ReplicaRecord>> {
        ids.into_par_iter().map(|id| self.run_replica(id)).collect()
    }

    /// Reduces replicas `ids` over a fixed binary tree split at midpoints, so
    /// the floating-point summation order depends only on the ids.
    pub fn reduce(&self, ids: Range<u64>) -> Result<EnsembleResult> {
        match ids.end.saturating_sub(ids.start) {
            0 => EnsembleResult::empty(&self.config),
            1 => EnsembleResult::from_record(&self.config, &self.run_replica(ids.start)?),
            len => {
                let mid = ids.start + len / 2;
                let (a, b) = rayon::join(|| self.reduce(ids.start..mid), || self.reduce(mid..ids.end));
                merge_results(&a?, &b?)
            }
        }
    }
}

pub fn run_replica(config: &ExperimentConfig, id: u64) -> Result<ReplicaRecord> {
    Runner::new(config)?.run_replica(id)
}

pub fn run_range(config: &ExperimentConfig, ids: Range<u64>) -> Result<EnsembleResult> {
    Runner::new(config)?.reduce(ids)
}

pub fn run_ensemble(config: &ExperimentConfig) -> Result<EnsembleResult> {
    run_range(config, 0..config.replicas)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ExperimentConfig {
        ExperimentConfig {
            gamma: 0.6,
            m: 7,
            grid: 512,
            n_max: 32,
            replicas: 6,
            seed: 3,
            block_lo: 2,
            block_hi: 32,
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn blocks_cover_range() {
        assert_eq!(frequency_blocks(8), vec![(1, 2), (2, 4), (4, 8), (8, 9)]);
        assert_eq!(frequency_blocks(6), vec![(1, 2), (2, 4), (4, 7)]);
    }

    #[test]
    fn replica_is_deterministic() {
        let c = small();
        assert_eq!(run_replica(&c, 2).unwrap(), run_replica(&c, 2).unwrap());
        assert_ne!(run_replica(&c, 2).unwrap().spectrum, run_replica(&c, 3).unwrap().spectrum);
    }

    #[test]
    fn reservoir_keeps_smallest_priorities() {
        let mut a = Reservoir::new(1, 2);
        a.entries = (0..300u64).rev().map(|p| (p, p as f64)).collect();
        a.settle();
        assert_eq!(a.entries.len(), RESERVOIR_SIZE);
        assert_eq!(a.entries[0], (0, 0.0));
        assert_eq!(a.entries.last().unwrap().0, 255);
    }

    #[test]
    fn single_replica_equals_record() {
        let c = ExperimentConfig { replicas: 1, ..small() };
        let e = run_ensemble(&c).unwrap();
        let r = run_replica(&c, 0).unwrap();
        assert_eq!(e, EnsembleResult::from_record(&c, &r).unwrap());
        assert_eq!(e.count, 1);
    }
}
