//! Multiplicative weights `X_j = exp(gamma phi_j - gamma^2 Var(phi_j) / 2)`,
//! the approximate chaos density `rho_m = X_0 X_1 ... X_m`, and measure
//! queries on it.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{out_of_range, GmcError, Result};
use crate::geometry::{level_covariance, level_variance};
use crate::rng::SeedRecord;
use crate::sampler::{FieldHierarchy, GridSpec};
use crate::scalar::Scalar;

/// Sub-critical parameter, `0 <= gamma < sqrt 2`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Gamma<T>(T);

impl<T: Scalar> Gamma<T> {
    pub fn new(gamma: T) -> Result<Self> {
        if gamma >= T::zero() && gamma < T::SQRT_2() {
            Ok(Self(gamma))
        } else {
            Err(GmcError::InvalidGamma(gamma.as_f64()))
        }
    }

    #[inline]
    pub fn get(self) -> T {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChaosDensity<T> {
    pub grid: GridSpec,
    pub gamma: T,
    pub depth: u32,
    /// `rho_m(t_i)`, all strictly positive.
    pub values: Vec<T>,
    pub seed: SeedRecord,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntervalMass<T> {
    pub start: T,
    pub end: T,
    pub mass: T,
}

#[inline]
fn log_weight<T: Scalar>(gamma: T, phi: T, variance: T) -> T {
    gamma * phi - T::lit(0.5) * gamma * gamma * variance
}

pub fn weight_field<T: Scalar>(hierarchy: &FieldHierarchy<T>, j: u32, gamma: Gamma<T>) -> Result<Vec<T>> {
    if j > hierarchy.depth {
        return Err(GmcError::TooDeep { level: j, reason: format!("hierarchy depth is {}", hierarchy.depth) });
    }
    let var = hierarchy.variances[j as usize];
    Ok(hierarchy.row(j).iter().map(|&phi| log_weight(gamma.get(), phi, var).exp()).collect())
}

/// `log rho_depth(t_i) = sum_{j <= depth} (gamma phi_j - gamma^2 var_j / 2)`.
pub fn log_density<T: Scalar>(hierarchy: &FieldHierarchy<T>, gamma: Gamma<T>, depth: u32) -> Result<Vec<T>> {
    if depth > hierarchy.depth {
        return Err(GmcError::TooDeep { level: depth, reason: format!("hierarchy depth is {}", hierarchy.depth) });
    }
    let mut acc = vec![T::zero(); hierarchy.grid.points()];
    for j in 0..=depth {
        let var = hierarchy.variances[j as usize];
        for (a, &phi) in acc.iter_mut().zip(hierarchy.row(j)) {
            *a += log_weight(gamma.get(), phi, var);
        }
    }
    Ok(acc)
}

/// Density truncated at `depth <= hierarchy.depth`.
pub fn chaos_density_to<T: Scalar>(
    hierarchy: &FieldHierarchy<T>,
    gamma: Gamma<T>,
    depth: u32,
) -> Result<ChaosDensity<T>> {
    let values = log_density(hierarchy, gamma, depth)?.into_iter().map(T::exp).collect();
    Ok(ChaosDensity { grid: hierarchy.grid, gamma: gamma.get(), depth, values, seed: hierarchy.seed })
}

pub fn chaos_density<T: Scalar>(hierarchy: &FieldHierarchy<T>, gamma: Gamma<T>) -> Result<ChaosDensity<T>> {
    chaos_density_to(hierarchy, gamma, hierarchy.depth)
}

impl<T: Scalar> ChaosDensity<T> {
    pub fn uniform(grid: GridSpec) -> Self {
        Self {
            grid,
            gamma: T::zero(),
            depth: 0,
            values: vec![T::one(); grid.points()],
            seed: SeedRecord::new(0, 0),
        }
    }

    pub fn total_mass(&self) -> T {
        self.values.iter().copied().sum::<T>() * self.grid.spacing()
    }

    /// Masses of the `2^level` dyadic intervals, left to right.
    pub fn dyadic_masses(&self, level: u32) -> Result<Vec<T>> {
        if level > self.grid.log2() {
            return Err(GmcError::TooDeep { level, reason: format!("grid has 2^{} points", self.grid.log2()) });
        }
        let cell = self.grid.points() >> level;
        let dx = self.grid.spacing::<T>();
        Ok(self.values.chunks_exact(cell).map(|c| c.iter().copied().sum::<T>() * dx).collect())
    }

    /// Comma-separated `i,t,value` with a header row.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "i,t,value")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{},{},{}", i, self.grid.point::<T>(i), v)?;
        }
        Ok(())
    }
}

fn grid_index<T: Scalar>(grid: GridSpec, x: T) -> Result<usize> {
    let scaled = x * T::from_usize_lossy(grid.points());
    let idx = scaled.round();
    if x < T::zero() || x > T::one() || (scaled - idx).abs() > T::lit(1e-9) * (T::one() + scaled.abs()) {
        return Err(GmcError::MisalignedInterval(x.as_f64()));
    }
    Ok(idx.to_usize().unwrap())
}

/// Rectangle-rule mass `(1/G) sum_{t_i in [a, b)} rho(t_i)`.
pub fn interval_mass<T: Scalar>(density: &ChaosDensity<T>, start: T, end: T) -> Result<IntervalMass<T>> {
    let lo = grid_index(density.grid, start)?;
    let hi = grid_index(density.grid, end)?;
    if hi < lo {
        return Err(GmcError::InvalidArgument(format!("empty interval [{start}, {end})")));
    }
    let mass = density.values[lo..hi].iter().copied().sum::<T>() * density.grid.spacing();
    Ok(IntervalMass { start, end, mass })
}

/// `max_{I in D_l} mass(I) / |I|^alpha` for each requested level.
pub fn frostman_scan<T: Scalar>(density: &ChaosDensity<T>, alpha: T, levels: &[u32]) -> Result<Vec<T>> {
    if !(alpha >= T::zero() && alpha <= T::one()) {
        return Err(out_of_range(alpha.as_f64(), "[0, 1]"));
    }
    levels
        .iter()
        .map(|&l| {
            let max = density.dyadic_masses(l)?.into_iter().fold(T::zero(), T::max);
            Ok(max * T::pow2(l as i32).powf(alpha))
        })
        .collect()
}

/// Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeEstimate<T> {
    pub mean: T,
    pub std_error: T,
    pub samples: usize,
}

const PROBE_CHUNKS: usize = 64;
const PROBE_MOMENT: u32 = 1;
const PROBE_HOLDER: u32 = 2;

/// Runs `draw` over `n` samples split into fixed chunks with their own
/// streams, so the estimate does not depend on thread scheduling.
fn probe<F>(n: usize, seed: SeedRecord, probe_id: u32, draw: F) -> ProbeEstimate<f64>
where
    F: Fn(&mut rand_chacha::ChaCha8Rng) -> f64 + Sync,
{
    let partial: Vec<(f64, f64)> = (0..PROBE_CHUNKS)
        .into_par_iter()
        .map(|c| {
            let count = n / PROBE_CHUNKS + usize::from(c < n % PROBE_CHUNKS);
            let mut rng = seed.probe_stream(probe_id, c as u64);
            let (mut s, mut s2) = (0.0, 0.0);
            for _ in 0..count {
                let x = draw(&mut rng);
                s += x;
                s2 += x * x;
            }
            (s, s2)
        })
        .collect();
    let (s, s2) = partial.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    let nf = n as f64;
    let mean = s / nf;
    let var = ((s2 - nf * mean * mean) / (nf - 1.0)).max(0.0);
    ProbeEstimate { mean, std_error: (var / nf).sqrt(), samples: n }
}

fn convert<T: Scalar>(e: ProbeEstimate<f64>) -> ProbeEstimate<T> {
    ProbeEstimate { mean: T::lit(e.mean), std_error: T::lit(e.std_error), samples: e.samples }
}

/// Exact `E[X_j^p] = exp(p (p - 1) gamma^2 Var(phi_j) / 2)`.
pub fn weight_moment_exact<T: Scalar>(gamma: Gamma<T>, j: u32, p: T) -> T {
    let g = gamma.get();
    (p * (p - T::one()) * g * g * level_variance::<T>(j) * T::lit(0.5)).exp()
}

/// Monte Carlo `E[X_j^p]` from exact draws of `phi_j(t)`.
pub fn weight_moment_probe<T: Scalar>(
    gamma: Gamma<T>,
    j: u32,
    p: T,
    n_samples: usize,
    seed: SeedRecord,
) -> Result<ProbeEstimate<T>> {
    if n_samples < 2 {
        return Err(GmcError::InsufficientData("need at least two samples".into()));
    }
    let (g, p) = (gamma.get().as_f64(), p.as_f64());
    let var = level_variance::<f64>(j);
    let sd = var.sqrt();
    let est = probe(n_samples, seed, PROBE_MOMENT ^ (j << 8), |rng| {
        let phi = sd * rng.sample::<f64, _>(StandardNormal);
        (p * log_weight(g, phi, var)).exp()
    });
    Ok(convert(est))
}

/// Monte Carlo `E|X_j(h) - X_j(0)|^p / (2^j h)^{p/2}` for `0 < h <= 2^-j`.
///
/// `(phi_j(0), phi_j(h))` is drawn exactly as `(C + R, C + L)` with `C` the
/// shared region and `L`, `R` the two independent differences.
pub fn holder_moment_probe<T: Scalar>(
    gamma: Gamma<T>,
    j: u32,
    p: T,
    h: T,
    n_samples: usize,
    seed: SeedRecord,
) -> Result<ProbeEstimate<T>> {
    let top = T::pow2(-(j as i32));
    if !(h > T::zero() && h <= top) {
        return Err(out_of_range(h.as_f64(), format!("(0, 2^-{j}]")));
    }
    if p <= T::zero() {
        return Err(out_of_range(p.as_f64(), "(0, inf)"));
    }
    if n_samples < 10_000 {
        return Err(GmcError::InsufficientData(format!("{n_samples} samples < 10^4")));
    }
    let (g, p, h) = (gamma.get().as_f64(), p.as_f64(), h.as_f64());
    let var = level_variance::<f64>(j);
    let shared = level_covariance(j, h)?;
    let sd_shared = shared.sqrt();
    let sd_diff = (var - shared).max(0.0).sqrt();
    let norm = (2f64.powi(j as i32) * h).powf(p / 2.0);
    let est = probe(n_samples, seed, PROBE_HOLDER ^ (j << 8), |rng| {
        let c = sd_shared * rng.sample::<f64, _>(StandardNormal);
        let l = sd_diff * rng.sample::<f64, _>(StandardNormal);
        let r = sd_diff * rng.sample::<f64, _>(StandardNormal);
        let xt = log_weight(g, c + l, var).exp();
        let x0 = log_weight(g, c + r, var).exp();
        (xt - x0).abs().powf(p) / norm
    });
    Ok(convert(est))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::{sample_hierarchy, FieldSampler};

    fn hierarchy(m: u32, g: usize, replica: u64) -> FieldHierarchy<f64> {
        sample_hierarchy(m, GridSpec::new(g).unwrap(), SeedRecord::new(42, replica)).unwrap()
    }

    #[test]
    fn gamma_range() {
        assert!(Gamma::new(0.0).is_ok());
        assert!(Gamma::new(1.41).is_ok());
        assert!(Gamma::new(std::f64::consts::SQRT_2).is_err());
        assert!(Gamma::new(-0.1).is_err());
    }

    #[test]
    fn zero_gamma_is_degenerate() {
        let h = hierarchy(4, 64, 0);
        let g0 = Gamma::new(0.0).unwrap();
        assert!(weight_field(&h, 2, g0).unwrap().iter().all(|&x| x == 1.0));
        let d = chaos_density(&h, g0).unwrap();
        assert!(d.values.iter().all(|&x| x == 1.0));
        assert!(weight_field(&h, 5, g0).is_err());
    }

    #[test]
    fn density_equals_product_of_weights() {
        let h = hierarchy(6, 128, 1);
        let g = Gamma::new(0.9).unwrap();
        let d = chaos_density(&h, g).unwrap();
        let mut prod = vec![1.0; 128];
        for j in 0..=6 {
            for (p, w) in prod.iter_mut().zip(weight_field(&h, j, g).unwrap()) {
                *p *= w;
            }
        }
        for (a, b) in d.values.iter().zip(&prod) {
            assert!(*a > 0.0);
            assert!((a - b).abs() <= 1e-12 * b);
        }
    }

    #[test]
    fn interval_mass_rules() {
        let grid = GridSpec::new(64).unwrap();
        let u = ChaosDensity::<f64>::uniform(grid);
        assert!((interval_mass(&u, 0.25, 0.5).unwrap().mass - 0.25).abs() < 1e-15);
        assert!(matches!(interval_mass(&u, 0.1, 0.5), Err(GmcError::MisalignedInterval(_))));
        assert!(interval_mass(&u, 0.5, 0.25).is_err());

        let d = chaos_density(&hierarchy(5, 64, 3), Gamma::new(0.8).unwrap()).unwrap();
        let total = interval_mass(&d, 0.0, 1.0).unwrap().mass;
        for level in 0..=6 {
            let masses = d.dyadic_masses(level).unwrap();
            let s: f64 = masses.iter().sum();
            assert!((s - total).abs() < 1e-12 * total);
        }
        let halves = interval_mass(&d, 0.0, 0.5).unwrap().mass + interval_mass(&d, 0.5, 1.0).unwrap().mass;
        assert!((halves - total).abs() < 1e-13);
    }

    #[test]
    fn frostman_scan_uniform() {
        let u = ChaosDensity::<f64>::uniform(GridSpec::new(256).unwrap());
        for (l, r) in frostman_scan(&u, 1.0, &[0, 2, 5, 8]).unwrap().into_iter().enumerate() {
            assert!((r - 1.0).abs() < 1e-12, "level index {l}");
        }
        let half = frostman_scan(&u, 0.5, &[0, 2, 4]).unwrap();
        for (r, l) in half.iter().zip([0, 2, 4]) {
            assert!((r - 2f64.powf(-(l as f64) / 2.0)).abs() < 1e-12);
        }
        assert!(frostman_scan(&u, 1.5, &[1]).is_err());
        assert!(frostman_scan(&u, 0.5, &[9]).is_err());
    }

    #[test]
    fn weight_moments_match_closed_form() {
        let seed = SeedRecord::new(9, 0);
        for (j, expected) in [(0u32, 1.0f64), (3, 1.0)] {
            let e = weight_moment_probe(Gamma::new(0.7).unwrap(), j, 1.0, 100_000, seed).unwrap();
            assert!((e.mean - expected).abs() < 3.0 * e.std_error, "{e:?}");
        }
        let exact = weight_moment_exact(Gamma::new(0.5).unwrap(), 1, 2.0);
        assert!((exact - 2f64.powf(0.25)).abs() < 1e-12);
        let e = weight_moment_probe(Gamma::new(0.5).unwrap(), 1, 2.0, 100_000, seed).unwrap();
        assert!((e.mean - exact).abs() < 3.0 * e.std_error, "{e:?}");
    }

    #[test]
    fn holder_probe_edge_cases() {
        let seed = SeedRecord::new(1, 1);
        let zero = holder_moment_probe(Gamma::new(0.0).unwrap(), 2, 2.0, 0.1, 10_000, seed).unwrap();
        assert_eq!(zero.mean, 0.0);
        let g = Gamma::new(0.5).unwrap();
        assert!(holder_moment_probe(g, 2, 2.0, 0.3, 10_000, seed).is_err());
        assert!(holder_moment_probe(g, 2, 2.0, 0.0, 10_000, seed).is_err());
        assert!(holder_moment_probe(g, 2, 2.0, 0.1, 100, seed).is_err());
        let tiny = holder_moment_probe(g, 3, 2.0, 2f64.powi(-13), 20_000, seed).unwrap();
        assert!(tiny.mean.is_finite() && tiny.mean < 10.0);
    }

    #[test]
    fn holder_probe_matches_exact_second_moment() {
        // E(X_h - X_0)^2 = 2 e^{g^2 v} - 2 e^{g^2 c(h)} for p = 2.
        let (g, h) = (0.5f64, 0.1f64);
        let exact = (2.0 * (g * g).exp() - 2.0 * (g * g * 0.9).exp()) / h;
        let e = holder_moment_probe(Gamma::new(g).unwrap(), 0, 2.0, h, 200_000, SeedRecord::new(3, 0)).unwrap();
        assert!((e.mean - exact).abs() < 3.0 * e.std_error, "{e:?} vs {exact}");
    }

    #[test]
    fn total_mass_has_unit_mean() {
        let grid = GridSpec::new(256).unwrap();
        let sampler = FieldSampler::<f64>::new(8, grid).unwrap();
        let g = Gamma::new(0.7).unwrap();
        let n = 2000;
        let masses: Vec<f64> = (0..n)
            .map(|r| chaos_density(&sampler.sample(SeedRecord::new(77, r)), g).unwrap().total_mass())
            .collect();
        let mean = masses.iter().sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 0.05, "mean {mean}");
    }

    #[test]
    fn density_csv_has_header() {
        let u = ChaosDensity::<f64>::uniform(GridSpec::new(4).unwrap());
        let mut out = Vec::new();
        u.write_csv(&mut out).unwrap();
        let text = String::from_utf8(out).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "i,t,value");
        assert_eq!(lines.len(), 5);
        assert_eq!(lines[2], "1,0.25,1");
    }
}
