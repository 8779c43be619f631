//! Closed-form exponents and statistical dimension estimators.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::chaos::{chaos_density_to, ChaosDensity, Gamma};
use crate::error::{out_of_range, GmcError, Result};
use crate::sampler::FieldHierarchy;
use crate::scalar::Scalar;
use crate::spectral::{lq_norm, FourierPlan, SpectrumVector};

/// Offset of the chosen `p` from the maximizer of `f_gamma`.
pub const EXPONENT_EPS: f64 = 1e-3;
pub const MIN_FIT_BLOCKS: usize = 4;
pub const MIN_QUANTILE_ENSEMBLE: usize = 30;
pub const MIN_CLT_ENSEMBLE: usize = 100;

fn checked_gamma<T: Scalar>(gamma: T) -> Result<T> {
    Gamma::new(gamma).map(Gamma::get)
}

/// `1 - gamma^2` below `sqrt(2)/2`, `(sqrt 2 - gamma)^2` above.
pub fn d_gamma<T: Scalar>(gamma: T) -> Result<T> {
    let g = checked_gamma(gamma)?;
    Ok(if g < T::FRAC_1_SQRT_2() { T::one() - g * g } else { (T::SQRT_2() - g).powi(2) })
}

/// `f(p) = 2 + gamma^2 - gamma^2 p - 2/p`, whose supremum over `(1, 2]` is `D_gamma`.
pub fn f_gamma<T: Scalar>(gamma: T, p: T) -> T {
    let g2 = gamma * gamma;
    T::lit(2.0) + g2 - g2 * p - T::lit(2.0) / p
}

/// `(p - 1)(1 - gamma^2 p / 2) - tau p / 2 - p / q`.
pub fn theta<T: Scalar>(gamma: T, tau: T, p: T, q: T) -> Result<T> {
    let g = checked_gamma(gamma)?;
    if !(tau >= T::zero() && tau < T::one()) {
        return Err(out_of_range(tau.as_f64(), "[0, 1)"));
    }
    if !(p > T::one() && p < T::lit(2.0)) {
        return Err(out_of_range(p.as_f64(), "(1, 2)"));
    }
    let q_min = T::lit(4.0) / (T::one() - tau);
    if !(q > q_min) {
        return Err(out_of_range(q.as_f64(), format!("({}, inf)", q_min)));
    }
    Ok(theta_unchecked(g, tau, p, q))
}

fn theta_unchecked<T: Scalar>(g: T, tau: T, p: T, q: T) -> T {
    let one = T::one();
    (p - one) * (one - g * g * p * T::lit(0.5)) - tau * p * T::lit(0.5) - p / q
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentTriple<T> {
    pub p: T,
    pub q: T,
    pub theta: T,
}

/// Deterministic `(p, q)` with `theta > 0` for `tau < D_gamma`.
///
/// `p` sits `eps` to the left of the maximizer of `f_gamma` (2, or
/// `sqrt(2)/gamma` in the large-gamma branch); `q` is the smallest power of
/// two above `4 / (1 - tau)` that makes `theta` positive. If no such `q`
/// exists, `eps` is divided by ten and the search repeats.
pub fn exponent_search<T: Scalar>(gamma: T, tau: T) -> Result<ExponentTriple<T>> {
    let d = d_gamma(gamma)?;
    if !(tau >= T::zero()) {
        return Err(out_of_range(tau.as_f64(), "[0, D_gamma)"));
    }
    if tau >= d {
        return Err(GmcError::NoFeasibleExponents { tau: tau.as_f64(), d_gamma: d.as_f64() });
    }
    let two = T::lit(2.0);
    let p_star = if gamma < T::FRAC_1_SQRT_2() { two } else { T::SQRT_2() / gamma };
    let q_min = T::lit(4.0) / (T::one() - tau);
    let mut eps = T::lit(EXPONENT_EPS);
    for _ in 0..8 {
        let p = (p_star - eps).max(T::one() + eps).min(two - eps);
        let mut q = two;
        while q <= q_min {
            q = q * two;
        }
        for _ in 0..64 {
            let th = theta_unchecked(gamma, tau, p, q);
            if th > T::zero() {
                return Ok(ExponentTriple { p, q, theta: th });
            }
            q = q * two;
        }
        eps = eps * T::lit(0.1);
    }
    Err(GmcError::NoFeasibleExponents { tau: tau.as_f64(), d_gamma: d.as_f64() })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "level", rename_all = "lowercase")]
pub enum Statistic {
    Mean,
    Median,
    Quantile(f64),
}

impl Statistic {
    fn level(self) -> Option<f64> {
        match self {
            Statistic::Mean => None,
            Statistic::Median => Some(0.5),
            Statistic::Quantile(q) => Some(q),
        }
    }

    /// Applies the statistic to `values` (reordered in place).
    pub fn apply<T: Scalar>(self, values: &mut [T]) -> Result<T> {
        if values.is_empty() {
            return Err(GmcError::InsufficientData("empty block".into()));
        }
        match self.level() {
            None => Ok(values.iter().copied().sum::<T>() / T::from_usize_lossy(values.len())),
            Some(q) => {
                if !(0.0..=1.0).contains(&q) {
                    return Err(out_of_range(q, "[0, 1]"));
                }
                values.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
                Ok(quantile_sorted(values, q))
            }
        }
    }
}

impl fmt::Display for Statistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Statistic::Mean => write!(f, "mean"),
            Statistic::Median => write!(f, "median"),
            Statistic::Quantile(q) => write!(f, "quantile({q})"),
        }
    }
}

impl FromStr for Statistic {
    type Err = GmcError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "mean" => Ok(Statistic::Mean),
            "median" => Ok(Statistic::Median),
            other => other
                .strip_prefix("quantile(")
                .and_then(|r| r.strip_suffix(')'))
                .or_else(|| other.strip_prefix("q"))
                .and_then(|v| v.parse::<f64>().ok())
                .filter(|q| (0.0..=1.0).contains(q))
                .map(Statistic::Quantile)
                .ok_or_else(|| GmcError::InvalidArgument(format!("unknown statistic '{other}'"))),
        }
    }
}

/// Linear-interpolation quantile of sorted data.
pub fn quantile_sorted<T: Scalar>(sorted: &[T], q: f64) -> T {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = T::lit(pos - lo as f64);
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

/// One point of a log-log regression.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BlockValue<T> {
    /// Inclusive lower end (frequency, or level for L^2 sums).
    pub lo: usize,
    /// Exclusive upper end.
    pub hi: usize,
    /// Regressor (natural log scale).
    pub x: T,
    /// Regressand (natural log scale).
    pub value: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlopeFit<T> {
    pub slope: T,
    pub intercept: T,
    pub std_error: T,
    pub range: (usize, usize),
    pub statistic: Statistic,
    pub blocks: Vec<BlockValue<T>>,
}

/// Ordinary least squares `y = intercept + slope x` with the slope's standard error.
pub fn fit_line<T: Scalar>(x: &[T], y: &[T]) -> Result<(T, T, T)> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(GmcError::InsufficientData(format!("{n} points for a line fit")));
    }
    let nf = T::from_usize_lossy(n);
    let mx = x.iter().copied().sum::<T>() / nf;
    let my = y.iter().copied().sum::<T>() / nf;
    let sxx: T = x.iter().map(|&a| (a - mx) * (a - mx)).sum();
    let sxy: T = x.iter().zip(y).map(|(&a, &b)| (a - mx) * (b - my)).sum();
    if sxx <= T::zero() {
        return Err(GmcError::InsufficientData("degenerate regressor".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let std_error = if n > 2 {
        let ssr: T = x.iter().zip(y).map(|(&a, &b)| (b - intercept - slope * a).powi(2)).sum();
        (ssr / T::from_usize_lossy(n - 2) / sxx).sqrt()
    } else {
        T::zero()
    };
    Ok((slope, intercept, std_error))
}

/// Dyadic blocks `[2^a, 2^{a+1})` covering `[n_lo, n_hi)`; both ends powers of two.
pub fn dyadic_blocks(n_lo: usize, n_hi: usize) -> Result<Vec<(usize, usize)>> {
    if !n_lo.is_power_of_two() || !n_hi.is_power_of_two() || n_hi <= n_lo {
        return Err(GmcError::InvalidArgument(format!("block range [{n_lo}, {n_hi}) must be powers of two")));
    }
    let mut out = Vec::new();
    let mut a = n_lo;
    while a < n_hi {
        out.push((a, 2 * a));
        a *= 2;
    }
    Ok(out)
}

/// The statistic applied to `ln n` over `n in [lo, hi)`: the block's position
/// on the log-frequency axis.
pub fn log_center<T: Scalar>(lo: usize, hi: usize, statistic: Statistic) -> Result<T> {
    let mut logs: Vec<T> = (lo..hi).map(|n| T::from_usize_lossy(n).ln()).collect();
    statistic.apply(&mut logs)
}

pub fn fit_block_values<T: Scalar>(
    blocks: Vec<BlockValue<T>>,
    statistic: Statistic,
    range: (usize, usize),
) -> Result<SlopeFit<T>> {
    let x: Vec<T> = blocks.iter().map(|b| b.x).collect();
    let y: Vec<T> = blocks.iter().map(|b| b.value).collect();
    let (slope, intercept, std_error) = fit_line(&x, &y)?;
    Ok(SlopeFit { slope, intercept, std_error, range, statistic, blocks })
}

/// Pools `log |mu^(n)|^2` over each block and all replicas, applies the
/// statistic, and regresses against the block's log-frequency center. The
/// slope estimates minus the decay exponent.
pub fn decay_slope<T: Scalar>(
    spectra: &[SpectrumVector<T>],
    n_range: (usize, usize),
    statistic: Statistic,
) -> Result<SlopeFit<T>> {
    if statistic != Statistic::Mean && spectra.len() < MIN_QUANTILE_ENSEMBLE {
        return Err(GmcError::InsufficientData(format!(
            "{} replicas < {MIN_QUANTILE_ENSEMBLE} for {statistic}",
            spectra.len()
        )));
    }
    if spectra.is_empty() {
        return Err(GmcError::InsufficientData("empty ensemble".into()));
    }
    let blocks = dyadic_blocks(n_range.0, n_range.1)?;
    if blocks.len() < MIN_FIT_BLOCKS {
        return Err(GmcError::InsufficientData(format!("{} blocks < {MIN_FIT_BLOCKS}", blocks.len())));
    }
    let n_max = spectra.iter().map(|s| s.n_max).min().unwrap();
    if n_range.1 - 1 > n_max {
        return Err(GmcError::InvalidArgument(format!("range end {} beyond n_max {n_max}", n_range.1)));
    }
    let values = blocks
        .into_iter()
        .map(|(lo, hi)| {
            let mut pooled: Vec<T> = spectra
                .iter()
                .flat_map(|s| s.coefficients[lo - 1..hi - 1].iter().map(|z| z.norm_sqr().ln()))
                .filter(|v| v.is_finite())
                .collect();
            Ok(BlockValue { lo, hi, x: log_center(lo, hi, statistic)?, value: statistic.apply(&mut pooled)? })
        })
        .collect::<Result<Vec<_>>>()?;
    fit_block_values(values, statistic, n_range)
}

/// `S(l) = sum_{I in D_l} mass(I)^2` for each level.
pub fn l2_sums<T: Scalar>(density: &ChaosDensity<T>, levels: &[u32]) -> Result<Vec<T>> {
    levels
        .iter()
        .map(|&l| Ok(density.dyadic_masses(l)?.into_iter().map(|m| m * m).sum()))
        .collect()
}

/// Fits ensemble-mean `ln S(l)` against `ln 2^-l`; the slope estimates the
/// correlation dimension.
pub fn l2_slope_from_mean_logs<T: Scalar>(levels: &[u32], mean_log_sums: &[T]) -> Result<SlopeFit<T>> {
    if levels.len() < 3 || levels.len() != mean_log_sums.len() {
        return Err(GmcError::InsufficientData(format!("{} levels for an L^2 fit", levels.len())));
    }
    let blocks = levels
        .iter()
        .zip(mean_log_sums)
        .map(|(&l, &v)| BlockValue {
            lo: l as usize,
            hi: l as usize + 1,
            x: -T::from_u32(l).unwrap() * T::LN_2(),
            value: v,
        })
        .collect();
    let range = (*levels.iter().min().unwrap() as usize, *levels.iter().max().unwrap() as usize + 1);
    fit_block_values(blocks, Statistic::Mean, range)
}

pub fn l2_spectrum_slope<T: Scalar>(densities: &[ChaosDensity<T>], levels: &[u32]) -> Result<SlopeFit<T>> {
    if densities.is_empty() {
        return Err(GmcError::InsufficientData("empty ensemble".into()));
    }
    let mut mean = vec![T::zero(); levels.len()];
    for d in densities {
        for (m, s) in mean.iter_mut().zip(l2_sums(d, levels)?) {
            *m += s.ln();
        }
    }
    let nf = T::from_usize_lossy(densities.len());
    mean.iter_mut().for_each(|m| *m /= nf);
    l2_slope_from_mean_logs(levels, &mean)
}

/// Mergeable per-frequency moments of an ensemble of spectra.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumMoments<T> {
    pub count: usize,
    pub sum: Vec<Complex<T>>,
    pub sum_abs2: Vec<T>,
    pub sum_abs4: Vec<T>,
}

impl<T: Scalar> SpectrumMoments<T> {
    pub fn new(n_max: usize) -> Self {
        Self {
            count: 0,
            sum: vec![Complex::default(); n_max],
            sum_abs2: vec![T::zero(); n_max],
            sum_abs4: vec![T::zero(); n_max],
        }
    }

    pub fn n_max(&self) -> usize {
        self.sum.len()
    }

    pub fn from_spectra(spectra: &[SpectrumVector<T>]) -> Self {
        let n_max = spectra.iter().map(|s| s.n_max).min().unwrap_or(0);
        let mut m = Self::new(n_max);
        for s in spectra {
            m.push(&s.coefficients[..n_max]);
        }
        m
    }

    pub fn push(&mut self, coefficients: &[Complex<T>]) {
        assert_eq!(coefficients.len(), self.n_max());
        self.count += 1;
        for (i, z) in coefficients.iter().enumerate() {
            let a2 = z.norm_sqr();
            self.sum[i] += z;
            self.sum_abs2[i] += a2;
            self.sum_abs4[i] += a2 * a2;
        }
    }

    pub fn merge(&mut self, other: &Self) {
        assert_eq!(self.n_max(), other.n_max());
        self.count += other.count;
        for i in 0..self.n_max() {
            self.sum[i] += other.sum[i];
            self.sum_abs2[i] += other.sum_abs2[i];
            self.sum_abs4[i] += other.sum_abs4[i];
        }
    }

    /// Ensemble mean of `mu^(n)`.
    pub fn mean(&self, n: usize) -> Complex<T> {
        self.sum[n - 1] / T::from_usize_lossy(self.count)
    }

    pub fn mean_abs2(&self, n: usize) -> T {
        self.sum_abs2[n - 1] / T::from_usize_lossy(self.count)
    }

    /// Unbiased `E|z - E z|^2`.
    pub fn variance(&self, n: usize) -> T {
        let c = T::from_usize_lossy(self.count);
        if self.count < 2 {
            return T::zero();
        }
        let centered = self.sum_abs2[n - 1] - self.sum[n - 1].norm_sqr() / c;
        (centered / (c - T::one())).max(T::zero())
    }
}

/// `(1 - gamma^2) / 2`, the rescaling exponent of the Fourier coefficients.
pub fn clt_exponent<T: Scalar>(gamma: T) -> T {
    (T::one() - gamma * gamma) * T::lit(0.5)
}

/// Per-block mean of `Var(n^{(1-gamma^2)/2} mu^(n))`.
pub fn clt_rescale_profile<T: Scalar>(
    moments: &SpectrumMoments<T>,
    gamma: T,
    n_range: (usize, usize),
) -> Result<Vec<BlockValue<T>>> {
    let g = checked_gamma(gamma)?;
    if g >= T::FRAC_1_SQRT_2() {
        return Err(out_of_range(g.as_f64(), "[0, sqrt(2)/2)"));
    }
    if moments.count < MIN_CLT_ENSEMBLE {
        return Err(GmcError::InsufficientData(format!("{} replicas < {MIN_CLT_ENSEMBLE}", moments.count)));
    }
    if n_range.1 - 1 > moments.n_max() {
        return Err(GmcError::InvalidArgument(format!("range end {} beyond n_max {}", n_range.1, moments.n_max())));
    }
    let power = T::lit(2.0) * clt_exponent(g);
    dyadic_blocks(n_range.0, n_range.1)?
        .into_iter()
        .map(|(lo, hi)| {
            let total: T = (lo..hi).map(|n| T::from_usize_lossy(n).powf(power) * moments.variance(n)).sum();
            Ok(BlockValue {
                lo,
                hi,
                x: log_center(lo, hi, Statistic::Mean)?,
                value: total / T::from_usize_lossy(hi - lo),
            })
        })
        .collect()
}

/// `||M_m||_q^p` for each `m` in `depths`, sharing one hierarchy.
pub fn martingale_norm_powers<T: Scalar>(
    hierarchy: &FieldHierarchy<T>,
    plan: &FourierPlan<T>,
    gamma: Gamma<T>,
    tau: T,
    exponents: (T, T),
    depths: &[u32],
    n_max: usize,
) -> Result<Vec<T>> {
    let (p, q) = exponents;
    depths
        .iter()
        .map(|&m| {
            let density = chaos_density_to(hierarchy, gamma, m)?;
            let weighted: Vec<Complex<T>> = plan
                .coefficients(&density.values, n_max)
                .into_iter()
                .enumerate()
                .map(|(i, z)| z * T::from_usize_lossy(i + 1).powf(tau * T::lit(0.5)))
                .collect();
            Ok(lq_norm(&weighted, q)?.powf(p))
        })
        .collect()
}

/// Ensemble means of `||M_m||_q^p` over the given hierarchies.
pub fn uniform_bound_probe<T: Scalar>(
    hierarchies: &[FieldHierarchy<T>],
    gamma: Gamma<T>,
    exponents: (T, T),
    tau: T,
    depths: &[u32],
    n_max: usize,
) -> Result<Vec<T>> {
    let th = theta(gamma.get(), tau, exponents.0, exponents.1)?;
    if th <= T::zero() {
        return Err(GmcError::InfeasibleExponents { theta: th.as_f64() });
    }
    if depths.windows(2).any(|w| w[0] >= w[1]) {
        return Err(GmcError::InvalidArgument("depths must be increasing".into()));
    }
    if hierarchies.is_empty() {
        return Err(GmcError::InsufficientData("empty ensemble".into()));
    }
    let grid = hierarchies[0].grid;
    let plan = FourierPlan::new(grid);
    let mut sums = vec![T::zero(); depths.len()];
    for h in hierarchies {
        for (s, v) in sums.iter_mut().zip(martingale_norm_powers(h, &plan, gamma, tau, exponents, depths, n_max)?) {
            *s += v;
        }
    }
    let nf = T::from_usize_lossy(hierarchies.len());
    Ok(sums.into_iter().map(|s| s / nf).collect())
}
