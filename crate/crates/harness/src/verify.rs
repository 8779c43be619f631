//! Exact and closed-form self-checks behind `gmc verify`.

use gmc_core::chaos::{holder_moment_probe, weight_moment_exact, weight_moment_probe, Gamma};
use gmc_core::estimators::{d_gamma, f_gamma};
use gmc_core::geometry::{level_covariance, level_variance, psi_covariance, quadrature_overlap_oracle};
use gmc_core::rng::hash_words;
use gmc_core::sampler::{sample_hierarchy, EmbeddingSpectrum, GridSpec};
use gmc_core::spectral::{
    abel_segment_transform, dyadic_family, localized_family, martingale_difference, separation_bound,
    telescoping_product_expansion, Parity,
};
use gmc_core::{Complex64, SeedRecord};
use serde::Serialize;

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, worst: f64, tol: f64) -> Check {
    Check { name, passed: worst <= tol, detail: format!("max error {worst:.3e} (tolerance {tol:.0e})") }
}

fn failed(name: &'static str, err: impl std::fmt::Display) -> Check {
    Check { name, passed: false, detail: err.to_string() }
}

/// Deterministic uniform draw in `[0, 1)` keyed by `words`.
fn unit(words: &[u64]) -> f64 {
    (hash_words(words) >> 11) as f64 / (1u64 << 53) as f64
}

fn geometry_oracle() -> gmc_core::Result<f64> {
    let mut worst: f64 = 0.0;
    for j in [0u32, 2, 4] {
        for i in 0..6 {
            let h = 1.2 * 2f64.powi(-(j as i32)) * i as f64 / 6.0;
            let oracle = quadrature_overlap_oracle::<f64>(j, h, 2000)?.value;
            worst = worst.max((oracle - level_covariance(j, h)?).abs());
        }
    }
    Ok(worst)
}

fn telescoping() -> gmc_core::Result<f64> {
    let mut worst: f64 = 0.0;
    for m in 0..=12u32 {
        for i in 0..200 {
            let h = 1.1 * i as f64 / 200.0;
            let sum: f64 = (0..=m).map(|j| level_covariance(j, h)).sum::<gmc_core::Result<f64>>()?;
            worst = worst.max((sum - psi_covariance(m, h)?).abs());
        }
    }
    Ok(worst)
}

fn embedding() -> gmc_core::Result<f64> {
    let grid = GridSpec::new(64)?;
    let mut worst: f64 = 0.0;
    for j in 0..=4 {
        let implied = EmbeddingSpectrum::<f64>::for_level(j, grid)?.implied_covariance();
        for (r, c) in implied.iter().take(64).enumerate() {
            worst = worst.max((c - level_covariance(j, r as f64 / 64.0)?).abs());
        }
    }
    Ok(worst)
}

/// Largest `|estimate - exact| / std_error` over a small parameter grid.
fn moments() -> gmc_core::Result<f64> {
    let mut worst: f64 = 0.0;
    for (i, &g) in [0.3, 0.7].iter().enumerate() {
        for j in [0u32, 3] {
            let gamma = Gamma::<f64>::new(g)?;
            let est = weight_moment_probe(gamma, j, 1.5, 100_000, SeedRecord::new(0x7e41, i as u64))?;
            worst = worst.max((est.mean - weight_moment_exact(gamma, j, 1.5)).abs() / est.std_error);
            // For p = 2 the Holder moment has the closed form
            // 2 (e^{g^2 var} - e^{g^2 cov(h)}) / (2^j h).
            let h = 2f64.powi(-(j as i32) - 2);
            let exact = 2.0 * ((g * g * level_variance::<f64>(j)).exp() - (g * g * level_covariance(j, h)?).exp())
                / (2f64.powi(j as i32) * h);
            let est = holder_moment_probe(gamma, j, 2.0, h, 100_000, SeedRecord::new(0x7e42, i as u64))?;
            worst = worst.max((est.mean - exact).abs() / est.std_error);
        }
    }
    Ok(worst)
}

/// Relative error of `M_k - M_{k-1} = sum_I Y_I`.
fn decomposition() -> gmc_core::Result<f64> {
    let grid = GridSpec::new(1024)?;
    let mut worst: f64 = 0.0;
    for r in 0..2 {
        let h = sample_hierarchy::<f64>(7, grid, SeedRecord::new(0x7e43, r))?;
        for k in 1..=7 {
            let gamma = Gamma::new(0.9)?;
            let diff = martingale_difference(&h, gamma, k, 0.4, 128)?;
            let family = localized_family(&h, gamma, k, Parity::All, 0.4, 128)?;
            for (n, d) in diff.iter().enumerate() {
                let sum: Complex64 = family.iter().map(|y| y.values[n]).sum();
                worst = worst.max((sum - d).norm() / d.norm().max(1.0));
            }
        }
    }
    Ok(worst)
}

fn abel() -> gmc_core::Result<f64> {
    let mut worst: f64 = 0.0;
    for case in 0..100u64 {
        let pieces = 1usize << (1 + case % 5);
        let nodes: Vec<f64> = (0..=pieces).map(|l| 4.0 * unit(&[case, l as u64]) - 2.0).collect();
        let start = unit(&[case, 1000]) * 0.5;
        let end = start + 0.01 + unit(&[case, 1001]) * 0.4;
        let n = 1 + (hash_words(&[case, 1002]) % 4096) as usize;
        let (direct, regrouped) = abel_segment_transform(&nodes, start, end, n)?;
        worst = worst.max((direct - regrouped).norm());
    }
    Ok(worst)
}

fn product_identity() -> f64 {
    let mut worst: f64 = 0.0;
    for case in 0..100u64 {
        let len = 1 + (case % 12) as usize;
        let a: Vec<f64> = (0..len).map(|i| 0.5 + unit(&[case, i as u64, 0])).collect();
        let b: Vec<f64> = (0..len).map(|i| 0.5 + unit(&[case, i as u64, 1])).collect();
        let direct = a.iter().product::<f64>() - b.iter().product::<f64>();
        worst = worst.max((telescoping_product_expansion(&a, &b) - direct).abs());
    }
    worst
}

fn exponent_supremum() -> gmc_core::Result<f64> {
    let mut worst: f64 = 0.0;
    for i in 1..=20 {
        let g = std::f64::consts::SQRT_2 * i as f64 / 21.0;
        let sup = (0..=100_000).map(|s| f_gamma(g, 1.0 + s as f64 * 1e-5)).fold(f64::NEG_INFINITY, f64::max);
        worst = worst.max((sup - d_gamma(g)?).abs());
    }
    Ok(worst)
}

/// Largest `|Y_I(n)| - bound(n)` over a few intervals.
fn separation() -> gmc_core::Result<f64> {
    let grid = GridSpec::new(1024)?;
    let h = sample_hierarchy::<f64>(6, grid, SeedRecord::new(0x7e44, 0))?;
    let mut worst = f64::NEG_INFINITY;
    for &g in &[0.5, 1.0] {
        for k in [2u32, 4] {
            for interval in dyadic_family(k - 1, Parity::Odd) {
                let report = separation_bound(&h, Gamma::new(g)?, interval, 0.3, 4)?;
                worst = worst.max(report.max_excess);
            }
        }
    }
    Ok(worst)
}

pub fn run_verify() -> Vec<Check> {
    let wrap = |name, r: gmc_core::Result<f64>, tol| match r {
        Ok(w) => check(name, w, tol),
        Err(e) => failed(name, e),
    };
    vec![
        wrap("geometry: closed form vs quadrature oracle", geometry_oracle(), 1e-3),
        wrap("geometry: telescoping level sum", telescoping(), 1e-12),
        wrap("sampler: circulant embedding reproduces covariance", embedding(), 1e-10),
        wrap("chaos: Monte Carlo moments within 4 standard errors", moments(), 4.0),
        wrap("spectral: localized vectors sum to martingale difference", decomposition(), 1e-10),
        wrap("spectral: summation by parts", abel(), 1e-12),
        check("spectral: telescoping product identity", product_identity(), 1e-12),
        wrap("spectral: separation-of-variable bound", separation(), gmc_core::spectral::SEPARATION_SLACK),
        wrap("estimators: D_gamma is the supremum of f_gamma", exponent_supremum(), 1e-8),
    ]
}
