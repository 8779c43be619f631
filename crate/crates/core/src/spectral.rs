//! Fourier coefficients of chaos densities, the weighted martingale vectors
//! `M_m(n) = n^{tau/2} mu_m^(n)`, the localized vectors `Y_I`, and the
//! separation-of-variable diagnostic for `|Y_I(n)|`.
//!
//! All integrals use the left-endpoint rectangle rule on the grid, so the
//! localized vectors sum to the martingale difference exactly at grid level.

use std::io::Write;
use std::ops::Range;
use std::sync::Arc;

use num_complex::Complex;
use num_traits::Num;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::chaos::{log_density, ChaosDensity, Gamma};
use crate::error::{out_of_range, GmcError, Result};
use crate::sampler::{FieldHierarchy, GridSpec};
use crate::scalar::Scalar;

/// Tolerance added to the separation bound to absorb floating-point error.
pub const SEPARATION_SLACK: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumVector<T> {
    pub n_max: usize,
    pub tau: T,
    /// `mu^(n)` for `n = 1..=n_max` (index `n - 1`).
    pub coefficients: Vec<Complex<T>>,
    /// `n^{tau/2} mu^(n)`.
    pub weighted: Vec<Complex<T>>,
}

/// Largest admissible frequency cutoff for a grid.
pub fn nyquist_limit(grid: GridSpec) -> usize {
    grid.points() / 8
}

fn check_nyquist(grid: GridSpec, n_max: usize) -> Result<()> {
    let limit = nyquist_limit(grid);
    if n_max == 0 || n_max > limit {
        return Err(GmcError::Nyquist { n_max, limit });
    }
    Ok(())
}

/// Cached forward FFT of length `G` mapping grid values to
/// `(1/G) sum_i f(t_i) e^{-2 pi i n t_i}`.
pub struct FourierPlan<T: Scalar> {
    grid: GridSpec,
    fft: Arc<dyn Fft<T>>,
}

impl<T: Scalar> FourierPlan<T> {
    pub fn new(grid: GridSpec) -> Self {
        Self { grid, fft: FftPlanner::new().plan_fft_forward(grid.points()) }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    /// Coefficients for `n = 1..=n_max` of the grid function `values`.
    pub fn coefficients(&self, values: &[T], n_max: usize) -> Vec<Complex<T>> {
        assert_eq!(values.len(), self.grid.points());
        let mut buf: Vec<Complex<T>> = values.iter().map(|&v| Complex::new(v, T::zero())).collect();
        self.fft.process(&mut buf);
        let inv = self.grid.spacing::<T>();
        buf[1..=n_max].iter().map(|z| z * inv).collect()
    }
}

pub fn fourier_coefficients<T: Scalar>(density: &ChaosDensity<T>, n_max: usize) -> Result<SpectrumVector<T>> {
    check_nyquist(density.grid, n_max)?;
    let coefficients = FourierPlan::new(density.grid).coefficients(&density.values, n_max);
    Ok(SpectrumVector { n_max, tau: T::zero(), weighted: coefficients.clone(), coefficients })
}

#[inline]
fn weight<T: Scalar>(n: usize, tau: T) -> T {
    T::from_usize_lossy(n).powf(tau * T::lit(0.5))
}

fn check_tau<T: Scalar>(tau: T) -> Result<()> {
    if !(tau >= T::zero() && tau < T::one()) {
        return Err(out_of_range(tau.as_f64(), "[0, 1)"));
    }
    Ok(())
}

pub fn martingale_vector<T: Scalar>(spectrum: &SpectrumVector<T>, tau: T) -> Result<SpectrumVector<T>> {
    check_tau(tau)?;
    let weighted = spectrum.coefficients.iter().enumerate().map(|(i, z)| z * weight(i + 1, tau)).collect();
    Ok(SpectrumVector { n_max: spectrum.n_max, tau, coefficients: spectrum.coefficients.clone(), weighted })
}

impl<T: Scalar> SpectrumVector<T> {
    /// Comma-separated `n,re,im,abs2,weighted_abs` with a header row.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "n,re,im,abs2,weighted_abs")?;
        for (i, (c, m)) in self.coefficients.iter().zip(&self.weighted).enumerate() {
            writeln!(w, "{},{},{},{},{}", i + 1, c.re, c.im, c.norm_sqr(), m.norm())?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Parity {
    All,
    Odd,
    Even,
}

/// `[(h - 1) / 2^level, h / 2^level)` with `1 <= h <= 2^level`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DyadicInterval {
    pub level: u32,
    pub index: u64,
}

impl DyadicInterval {
    pub fn new(level: u32, index: u64) -> Result<Self> {
        if index == 0 || index > 1u64 << level {
            return Err(out_of_range(index as f64, format!("[1, 2^{level}]")));
        }
        Ok(Self { level, index })
    }

    pub fn is_odd(&self) -> bool {
        self.index % 2 == 1
    }

    pub fn start<T: Scalar>(&self) -> T {
        T::from_u64(self.index - 1).unwrap() * T::pow2(-(self.level as i32))
    }

    pub fn end<T: Scalar>(&self) -> T {
        T::from_u64(self.index).unwrap() * T::pow2(-(self.level as i32))
    }

    pub fn length<T: Scalar>(&self) -> T {
        T::pow2(-(self.level as i32))
    }

    /// Grid indices `i` with `t_i` in the interval.
    pub fn grid_range(&self, grid: GridSpec) -> Result<Range<usize>> {
        if self.level > grid.log2() {
            return Err(GmcError::TooDeep {
                level: self.level,
                reason: format!("interval not aligned with a grid of 2^{} points", grid.log2()),
            });
        }
        let cell = grid.points() >> self.level;
        let start = (self.index as usize - 1) * cell;
        Ok(start..start + cell)
    }
}

pub fn dyadic_family(k: u32, parity: Parity) -> Vec<DyadicInterval> {
    (1..=1u64 << k)
        .filter(|h| match parity {
            Parity::All => true,
            Parity::Odd => h % 2 == 1,
            Parity::Even => h % 2 == 0,
        })
        .map(|index| DyadicInterval { level: k, index })
        .collect()
}

/// `D_k(t_i) = rho_{k-1}(t_i) (X_k(t_i) - 1)` on the whole grid, `k >= 1`.
pub fn localized_increment<T: Scalar>(hierarchy: &FieldHierarchy<T>, gamma: Gamma<T>, k: u32) -> Result<Vec<T>> {
    if k == 0 || k > hierarchy.depth {
        return Err(GmcError::TooDeep { level: k, reason: format!("need 1 <= k <= depth {}", hierarchy.depth) });
    }
    let base = log_density(hierarchy, gamma, k - 1)?;
    let g = gamma.get();
    let var = hierarchy.variances[k as usize];
    Ok(base
        .into_iter()
        .zip(hierarchy.row(k))
        .map(|(b, &phi)| b.exp() * (g * phi - T::lit(0.5) * g * g * var).exp_m1())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalizedVector<T> {
    pub interval: DyadicInterval,
    /// Level of the increment, `interval.level + 1`.
    pub k: u32,
    pub tau: T,
    /// `Y_I(n)` for `n = 1..=n_max`.
    pub values: Vec<Complex<T>>,
}

fn localized_from_increment<T: Scalar>(
    plan: &FourierPlan<T>,
    increment: &[T],
    interval: DyadicInterval,
    tau: T,
    n_max: usize,
) -> Result<LocalizedVector<T>> {
    let range = interval.grid_range(plan.grid())?;
    let mut masked = vec![T::zero(); increment.len()];
    masked[range.clone()].copy_from_slice(&increment[range]);
    let values = plan
        .coefficients(&masked, n_max)
        .into_iter()
        .enumerate()
        .map(|(i, z)| z * weight(i + 1, tau))
        .collect();
    Ok(LocalizedVector { interval, k: interval.level + 1, tau, values })
}

/// `Y_I(n) = n^{tau/2} int_I rho_{k-1} (X_k - 1) e^{-2 pi i n t} dt` for `I`
/// of level `k - 1`.
pub fn localized_vector<T: Scalar>(
    hierarchy: &FieldHierarchy<T>,
    gamma: Gamma<T>,
    interval: DyadicInterval,
    tau: T,
    n_max: usize,
) -> Result<LocalizedVector<T>> {
    check_tau(tau)?;
    check_nyquist(hierarchy.grid, n_max)?;
    let increment = localized_increment(hierarchy, gamma, interval.level + 1)?;
    localized_from_increment(&FourierPlan::new(hierarchy.grid), &increment, interval, tau, n_max)
}

/// All `Y_I` for `I` in the level-`(k-1)` family with the given parity.
pub fn localized_family<T: Scalar>(
    hierarchy: &FieldHierarchy<T>,
    gamma: Gamma<T>,
    k: u32,
    parity: Parity,
    tau: T,
    n_max: usize,
) -> Result<Vec<LocalizedVector<T>>> {
    check_tau(tau)?;
    check_nyquist(hierarchy.grid, n_max)?;
    if k == 0 {
        return Err(GmcError::TooDeep { level: 0, reason: "localized vectors need k >= 1".into() });
    }
    let increment = localized_increment(hierarchy, gamma, k)?;
    let plan = FourierPlan::new(hierarchy.grid);
    dyadic_family(k - 1, parity)
        .into_iter()
        .map(|i| localized_from_increment(&plan, &increment, i, tau, n_max))
        .collect()
}

/// `M_k - M_{k-1}` from the two truncated densities directly.
pub fn martingale_difference<T: Scalar>(
    hierarchy: &FieldHierarchy<T>,
    gamma: Gamma<T>,
    k: u32,
    tau: T,
    n_max: usize,
) -> Result<Vec<Complex<T>>> {
    check_tau(tau)?;
    check_nyquist(hierarchy.grid, n_max)?;
    if k == 0 || k > hierarchy.depth {
        return Err(GmcError::TooDeep { level: k, reason: format!("need 1 <= k <= depth {}", hierarchy.depth) });
    }
    let plan = FourierPlan::new(hierarchy.grid);
    let hi: Vec<T> = log_density(hierarchy, gamma, k)?.into_iter().map(T::exp).collect();
    let lo: Vec<T> = log_density(hierarchy, gamma, k - 1)?.into_iter().map(T::exp).collect();
    let a = plan.coefficients(&hi, n_max);
    let b = plan.coefficients(&lo, n_max);
    Ok(a.iter().zip(&b).enumerate().map(|(i, (x, y))| (x - y) * weight(i + 1, tau)).collect())
}

/// Truncated `l^q` norm, `q >= 1`.
pub fn lq_norm<T: Scalar>(v: &[Complex<T>], q: T) -> Result<T> {
    if !(q >= T::one()) || q.is_infinite() {
        return Err(out_of_range(q.as_f64(), "[1, inf)"));
    }
    let scale = v.iter().fold(T::zero(), |a, z| a.max(z.norm()));
    if scale == T::zero() {
        return Ok(T::zero());
    }
    // Scale out the maximum so large q does not overflow.
    let s: T = v.iter().map(|z| (z.norm() / scale).powf(q)).sum();
    Ok(scale * s.powf(T::one() / q))
}

/// Right-hand side of
/// `prod a_j - prod b_j = sum_r (prod_{j<r} b_j)(a_r - b_r)(prod_{j>r} a_j)`.
pub fn telescoping_product_expansion<N: Num + Copy>(a: &[N], b: &[N]) -> N {
    assert_eq!(a.len(), b.len());
    let m = a.len();
    // suffix[r] = prod_{j >= r} a_j
    let mut suffix = vec![N::one(); m + 1];
    for r in (0..m).rev() {
        suffix[r] = suffix[r + 1] * a[r];
    }
    let mut prefix = N::one();
    let mut total = N::zero();
    for r in 0..m {
        total = total + prefix * (a[r] - b[r]) * suffix[r + 1];
        prefix = prefix * b[r];
    }
    total
}

#[inline]
fn cis_neg<T: Scalar>(n: usize, t: T) -> Complex<T> {
    // Reduce n t modulo 1 before scaling by 2 pi.
    let x = T::from_usize_lossy(n) * t;
    let frac = x - x.floor();
    let theta = -T::TAU() * frac;
    Complex::new(theta.cos(), theta.sin())
}

/// Piecewise-constant segment transform over `[start, end)` split into
/// `2^L` equal pieces with node values `D(t_0), ..., D(t_{2^L})`.
///
/// Returns `(direct, abel)`: the direct sum of `D(t_{l-1}) int_{J_l}
/// e^{-2 pi i n t} dt` and the summation-by-parts regrouping into boundary
/// terms plus node differences. Only `D(t_0..t_{2^L - 1})` enter either form.
pub fn abel_segment_transform<T: Scalar>(
    nodes: &[T],
    start: T,
    end: T,
    n: usize,
) -> Result<(Complex<T>, Complex<T>)> {
    let pieces = nodes.len().saturating_sub(1);
    if pieces == 0 || !pieces.is_power_of_two() {
        return Err(GmcError::InvalidArgument(format!("need 2^L + 1 node values, got {}", nodes.len())));
    }
    if n == 0 || !(end > start) {
        return Err(GmcError::InvalidArgument("need n >= 1 and a non-empty segment".into()));
    }
    let step = (end - start) / T::from_usize_lossy(pieces);
    let t = |l: usize| start + step * T::from_usize_lossy(l);
    let e: Vec<Complex<T>> = (0..=pieces).map(|l| cis_neg(n, t(l))).collect();
    let factor = Complex::new(T::zero(), T::TAU() * T::from_usize_lossy(n)).inv() * T::lit(-1.0);
    let direct: Complex<T> = (1..=pieces).map(|l| (e[l] - e[l - 1]) * nodes[l - 1]).sum::<Complex<T>>() * factor;
    let mut regrouped = e[pieces] * nodes[pieces - 1] - e[0] * nodes[0];
    for l in 1..pieces {
        regrouped = regrouped + e[l] * (nodes[l - 1] - nodes[l]);
    }
    Ok((direct, regrouped * factor))
}

/// Pathwise quantities of the separation-of-variable bound
/// `|Y_I(n)| <= sum_{L>=0} v_L(n) R_L + sum_{L>=1} w_L(n) Q_L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationComponents<T> {
    pub interval: DyadicInterval,
    pub k: u32,
    pub l_max: u32,
    pub tau: T,
    /// `R_0, R_1, ..., R_{L_max}`.
    pub r: Vec<T>,
    /// `Q_1, ..., Q_{L_max}` stored at index `L - 1`.
    pub q: Vec<T>,
}

impl<T: Scalar> SeparationComponents<T> {
    /// Frequency band `(lo, hi]` carried by `v_L`, `w_L` (`v_0` covers `[1, 2^k]`).
    pub fn band(&self, l: u32) -> (usize, usize) {
        if l == 0 {
            (0, 1 << self.k)
        } else {
            (1 << (self.k + l - 1), 1 << (self.k + l))
        }
    }

    fn in_band(&self, l: u32, n: usize) -> bool {
        let (lo, hi) = self.band(l);
        n > lo && n <= hi
    }

    pub fn v(&self, l: u32, n: usize) -> T {
        if self.in_band(l, n) {
            weight(n, self.tau)
        } else {
            T::zero()
        }
    }

    pub fn w(&self, l: u32, n: usize) -> T {
        if l >= 1 && self.in_band(l, n) {
            weight(n, self.tau) / T::from_usize_lossy(n)
        } else {
            T::zero()
        }
    }

    pub fn bound(&self, n: usize) -> T {
        let vr: T = (0..=self.l_max).map(|l| self.v(l, n) * self.r[l as usize]).sum();
        let wq: T = (1..=self.l_max).map(|l| self.w(l, n) * self.q[l as usize - 1]).sum();
        vr + wq
    }

    /// Largest frequency covered by the components.
    pub fn n_limit(&self) -> usize {
        1 << (self.k + self.l_max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationCheck<T> {
    pub n: usize,
    /// `|Y_I(n)|` with `D_k` taken piecewise constant on grid cells.
    pub localized_abs: T,
    /// `|Y_I(n)|` under the rectangle rule (the value summing to `M_k - M_{k-1}`).
    pub rectangle_abs: T,
    pub bound: T,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparationReport<T> {
    pub components: SeparationComponents<T>,
    pub checks: Vec<SeparationCheck<T>>,
    pub holds: bool,
    /// `max_n (|Y_I(n)| - bound(n))`; negative when the bound has room.
    pub max_excess: T,
}

/// Evaluates the separation-of-variable bound for `Y_I` on one hierarchy.
///
/// `D_k` is treated as constant on each grid cell, so every integral in the
/// bound is exact: `R_L` are cell sums, the segment integrals are analytic,
/// and `Y_I(n)` is the rectangle-rule value times the cell transform
/// `G (1 - e^{-2 pi i n / G}) / (2 pi i n)`.
pub fn separation_bound<T: Scalar>(
    hierarchy: &FieldHierarchy<T>,
    gamma: Gamma<T>,
    interval: DyadicInterval,
    tau: T,
    l_max: u32,
) -> Result<SeparationReport<T>> {
    check_tau(tau)?;
    let grid = hierarchy.grid;
    let k = interval.level + 1;
    if k + l_max > grid.log2() {
        return Err(GmcError::TooDeep {
            level: k + l_max,
            reason: format!("k + L_max must not exceed log2 G = {}", grid.log2()),
        });
    }
    let increment = localized_increment(hierarchy, gamma, k)?;
    let range = interval.grid_range(grid)?;
    let d = &increment[range.clone()];
    let dx = grid.spacing::<T>();

    let mut r = Vec::with_capacity(l_max as usize + 1);
    let mut q = Vec::with_capacity(l_max as usize);
    r.push(d.iter().map(|x| x.abs()).sum::<T>() * dx);
    for l in 1..=l_max {
        let pieces = 1usize << l;
        let cell = d.len() / pieces;
        let mut r_l = T::zero();
        for piece in d.chunks_exact(cell) {
            let left = piece[0];
            r_l += piece.iter().map(|&x| (x - left).abs()).sum::<T>();
        }
        r.push(r_l * dx);
        let node = |i: usize| d[i * cell];
        let mut q_l = node(pieces - 1).abs() + node(0).abs();
        for i in 1..pieces {
            q_l += (node(i - 1) - node(i)).abs();
        }
        q.push(q_l / T::TAU());
    }
    let components = SeparationComponents { interval, k, l_max, tau, r, q };

    let n_limit = components.n_limit();
    let plan = FourierPlan::new(grid);
    let mut masked = vec![T::zero(); grid.points()];
    masked[range].copy_from_slice(d);
    let rect = plan.coefficients(&masked, n_limit.min(grid.points() - 1));
    let g = T::from_usize_lossy(grid.points());
    let mut checks = Vec::with_capacity(n_limit);
    let mut max_excess = T::neg_infinity();
    for n in 1..=n_limit {
        let w = weight(n, tau);
        let y_rect = rect.get(n - 1).copied().unwrap_or_default() * w;
        let theta = T::TAU() * T::from_usize_lossy(n) / g;
        let cell_factor = if n % grid.points() == 0 {
            T::zero()
        } else {
            (T::lit(2.0) * (theta * T::lit(0.5)).sin() / theta).abs()
        };
        let localized_abs = y_rect.norm() * cell_factor;
        let bound = components.bound(n);
        max_excess = max_excess.max(localized_abs - bound);
        checks.push(SeparationCheck { n, localized_abs, rectangle_abs: y_rect.norm(), bound });
    }
    let holds = max_excess <= T::lit(SEPARATION_SLACK);
    Ok(SeparationReport { components, checks, holds, max_excess })
}
