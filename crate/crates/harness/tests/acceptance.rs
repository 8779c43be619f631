//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

use std::f64::consts::SQRT_2;
use std::time::Instant;

use gmc_core::chaos::{holder_moment_probe, weight_moment_exact, weight_moment_probe, Gamma};
use gmc_core::estimators::{d_gamma, decay_slope, exponent_search, f_gamma, Statistic};
use gmc_core::geometry::{level_covariance, level_variance, psi_covariance, quadrature_overlap_oracle};
use gmc_core::rng::hash_words;
use gmc_core::sampler::{FieldSampler, GridSpec};
use gmc_core::spectral::{
    abel_segment_transform, dyadic_family, localized_family, martingale_difference, separation_bound,
    telescoping_product_expansion, Parity, SpectrumVector,
};
use gmc_core::{Complex64, GmcError, SeedRecord};
use gmc_harness::report::{clt_profile, decay_fit, frostman_growth, l2_fit, norm_means};
use gmc_harness::{run_ensemble, ExperimentConfig, Runner};

type Outcome = Result<String, String>;

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn unit(words: &[u64]) -> f64 {
    (hash_words(words) >> 11) as f64 / (1u64 << 53) as f64
}

fn geometry_exactness() -> Outcome {
    let mut oracle_err: f64 = 0.0;
    for j in 0..=6u32 {
        let top = 2f64.powi(1 - j as i32).min(1.0);
        for i in 0..50 {
            // Lags spread over the support and slightly beyond it.
            let h = 1.1 * top * i as f64 / 49.0;
            let oracle = quadrature_overlap_oracle::<f64>(j, h, 2000).unwrap().value;
            oracle_err = oracle_err.max((oracle - level_covariance(j, h).unwrap()).abs());
        }
    }
    let mut tele_err: f64 = 0.0;
    for m in 0..=16u32 {
        for i in 0..=400 {
            let h = i as f64 / 400.0;
            let sum: f64 = (0..=m).map(|j| level_covariance(j, h).unwrap()).sum();
            tele_err = tele_err.max((sum - psi_covariance(m, h).unwrap()).abs());
        }
    }
    verdict(
        oracle_err <= 1e-3 && tele_err <= 1e-12,
        format!("oracle max error {oracle_err:.2e}, telescoping max error {tele_err:.2e}"),
    )
}

fn sampler_fidelity() -> Outcome {
    const G: usize = 256;
    const M: u32 = 6;
    const REPS: u64 = 20_000;
    let grid = GridSpec::new(G).unwrap();
    let sampler = FieldSampler::<f64>::new(M, grid).unwrap();
    let levels = M as usize + 1;
    // Ten lags per level spread over that level's support.
    let lags: Vec<Vec<usize>> = (0..levels)
        .map(|j| {
            let support = (G >> j.saturating_sub(1)).min(G - 1);
            (0..10).map(|i| i * support / 10).collect()
        })
        .collect();
    let mut lag_sums = vec![vec![0.0; 10]; levels];
    let pairs: Vec<(usize, usize)> = (0..levels).flat_map(|a| (a + 1..levels).map(move |b| (a, b))).collect();
    let mut cross = vec![(0.0, 0.0); pairs.len()];
    for r in 0..REPS {
        let h = sampler.sample(SeedRecord::new(0xacc2, r));
        for j in 0..levels {
            let row = h.row(j as u32);
            for (s, &lag) in lag_sums[j].iter_mut().zip(&lags[j]) {
                *s += (0..G - lag).map(|i| row[i] * row[i + lag]).sum::<f64>() / (G - lag) as f64;
            }
        }
        for (acc, &(a, b)) in cross.iter_mut().zip(&pairs) {
            let (ra, rb) = (h.row(a as u32), h.row(b as u32));
            let x = ra.iter().zip(rb).map(|(p, q)| p * q).sum::<f64>() / G as f64;
            acc.0 += x;
            acc.1 += x * x;
        }
    }
    let n = REPS as f64;
    let mut worst_cov: f64 = 0.0;
    for j in 0..levels {
        for (s, &lag) in lag_sums[j].iter().zip(&lags[j]) {
            let exact = level_covariance(j as u32, lag as f64 / G as f64).unwrap();
            worst_cov = worst_cov.max((s / n - exact).abs());
        }
    }
    let worst_z = cross
        .iter()
        .map(|&(s, s2)| {
            let mean = s / n;
            (mean / ((s2 / n - mean * mean) / n).sqrt()).abs()
        })
        .fold(0.0, f64::max);
    verdict(
        worst_cov <= 0.01 && worst_z <= 4.0,
        format!("max covariance error {worst_cov:.4}, max cross-level |z| {worst_z:.2}"),
    )
}

fn exact_moments() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut cell = 0u64;
    for &p in &[1.2f64, 1.5, 2.0] {
        for &g in &[0.3f64, 0.7, 1.0] {
            for j in [0u32, 1, 4] {
                let gamma = Gamma::new(g).unwrap();
                let est = weight_moment_probe(gamma, j, p, 100_000, SeedRecord::new(0xacc3, cell)).unwrap();
                cell += 1;
                let exact = weight_moment_exact(gamma, j, p);
                let closed = if j == 0 {
                    (p * (p - 1.0) * g * g / 2.0).exp()
                } else {
                    2f64.powf(p * (p - 1.0) * g * g / 2.0)
                };
                assert!((exact - closed).abs() < 1e-12 * closed);
                // Exact standard error from Var X^p = E X^{2p} - (E X^p)^2.
                let se = ((weight_moment_exact(gamma, j, 2.0 * p) - exact * exact) / 100_000.0).sqrt();
                worst = worst.max((est.mean - exact).abs() / se);
            }
        }
    }
    verdict(worst <= 3.0, format!("max deviation {worst:.2} standard errors over 27 cells"))
}

/// `E|X_0(h) - X_0(0)|^2 / h` by a tensor trapezoid rule over the two
/// standard normals driving `(phi_0(0), phi_0(h))`.
fn holder_quadrature(gamma: f64, h: f64) -> f64 {
    let var = level_variance::<f64>(0);
    let rho = level_covariance(0, h).unwrap() / var;
    let sd = var.sqrt();
    let (lim, k) = (9.0, 1201);
    let step = 2.0 * lim / (k - 1) as f64;
    let pdf = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let mut total = 0.0;
    for a in 0..k {
        let z1 = -lim + a as f64 * step;
        for b in 0..k {
            let z2 = -lim + b as f64 * step;
            let x0 = (gamma * sd * z1 - 0.5 * gamma * gamma * var).exp();
            let xh = (gamma * sd * (rho * z1 + (1.0 - rho * rho).sqrt() * z2) - 0.5 * gamma * gamma * var).exp();
            total += (xh - x0).powi(2) * pdf(z1) * pdf(z2);
        }
    }
    total * step * step / h
}

fn holder_boundedness() -> Outcome {
    let mut max_value: f64 = 0.0;
    for (gi, &g) in [0.3, 0.5, 0.7, 1.0].iter().enumerate() {
        for j in 0..=8u32 {
            for shift in [1, 4] {
                let h = 2f64.powi(-(j as i32) - shift);
                let seed = SeedRecord::new(0xacc4, (gi as u64) << 16 | (j as u64) << 4 | shift as u64);
                let est = holder_moment_probe(Gamma::new(g).unwrap(), j, 2.0, h, 100_000, seed).unwrap();
                max_value = max_value.max(est.mean);
            }
        }
    }
    let (g, h) = (0.3, 0.5);
    let oracle = holder_quadrature(g, h);
    let probe = holder_moment_probe(Gamma::new(g).unwrap(), 0, 2.0, h, 4_000_000, SeedRecord::new(0xacc4, 99)).unwrap();
    let closed = 2.0 * ((g * g).exp() - (g * g * (1.0 - h)).exp()) / h;
    let cross = (probe.mean - oracle).abs();
    verdict(
        max_value <= 10.0 && cross <= 1e-3 && (oracle - closed).abs() <= 1e-9,
        format!(
            "max probe {max_value:.3}; j=0 probe {:.5} vs quadrature {oracle:.5} (diff {cross:.1e}, s.e. {:.1e})",
            probe.mean, probe.std_error
        ),
    )
}

fn decomposition_identities() -> Outcome {
    let grid = GridSpec::new(1 << 12).unwrap();
    let sampler = FieldSampler::<f64>::new(8, grid).unwrap();
    let mut split_err: f64 = 0.0;
    for r in 0..10 {
        let h = sampler.sample(SeedRecord::new(0xacc5, r));
        let gamma = Gamma::new(if r % 2 == 0 { 0.5 } else { 1.1 }).unwrap();
        for k in 1..=8 {
            let diff = martingale_difference(&h, gamma, k, 0.5, 512).unwrap();
            let family = localized_family(&h, gamma, k, Parity::All, 0.5, 512).unwrap();
            for (n, d) in diff.iter().enumerate() {
                let sum: Complex64 = family.iter().map(|y| y.values[n]).sum();
                split_err = split_err.max((sum - d).norm());
            }
        }
    }
    let mut abel_err: f64 = 0.0;
    let mut prod_err: f64 = 0.0;
    for case in 0..100u64 {
        let pieces = 1usize << (1 + case % 6);
        let nodes: Vec<f64> = (0..=pieces).map(|l| 4.0 * unit(&[case, l as u64]) - 2.0).collect();
        let start = 0.5 * unit(&[case, 1 << 20]);
        let end = start + 0.01 + 0.4 * unit(&[case, 1 << 21]);
        let n = 1 + (hash_words(&[case, 1 << 22]) % 8192) as usize;
        let (direct, regrouped) = abel_segment_transform(&nodes, start, end, n).unwrap();
        abel_err = abel_err.max((direct - regrouped).norm());

        let len = 1 + (case % 16) as usize;
        let a: Vec<f64> = (0..len).map(|i| 0.5 + unit(&[case, i as u64, 7])).collect();
        let b: Vec<f64> = (0..len).map(|i| 0.5 + unit(&[case, i as u64, 8])).collect();
        let direct = a.iter().product::<f64>() - b.iter().product::<f64>();
        prod_err = prod_err.max((telescoping_product_expansion(&a, &b) - direct).abs());
    }
    verdict(
        split_err <= 1e-10 && abel_err <= 1e-12 && prod_err <= 1e-12,
        format!("odd/even split {split_err:.1e}, summation by parts {abel_err:.1e}, product identity {prod_err:.1e}"),
    )
}

fn separation_bound_holds() -> Outcome {
    let grid = GridSpec::new(4096).unwrap();
    let sampler = FieldSampler::<f64>::new(9, grid).unwrap();
    let mut worst = f64::NEG_INFINITY;
    let mut checked = 0usize;
    for r in 0..10 {
        let h = sampler.sample(SeedRecord::new(0xacc6, r));
        for &g in &[0.5, 1.0] {
            for k in [3u32, 5] {
                for interval in dyadic_family(k - 1, Parity::All) {
                    let report = separation_bound(&h, Gamma::new(g).unwrap(), interval, 0.5, 4).unwrap();
                    checked += report.checks.len();
                    worst = worst.max(report.max_excess);
                }
            }
        }
    }
    verdict(worst <= 1e-8, format!("{checked} (I, n) pairs, max |Y_I(n)| - bound = {worst:.3e}"))
}

fn exponent_machinery() -> Outcome {
    let mut sup_err: f64 = 0.0;
    for i in 1..=50 {
        let g = SQRT_2 * i as f64 / 51.0;
        let sup = (1..=100_000).map(|s| f_gamma(g, 1.0 + s as f64 * 1e-5)).fold(f64::NEG_INFINITY, f64::max);
        sup_err = sup_err.max((sup - d_gamma(g).unwrap()).abs());
    }
    let mut search_ok = true;
    let mut thetas = Vec::new();
    for &g in &[0.3, 0.7, 1.0, 1.3] {
        let d = d_gamma(g).unwrap();
        match exponent_search(g, 0.9 * d) {
            Ok(e) => {
                search_ok &= e.theta > 0.0;
                thetas.push(format!("{g}: {:.2e}", e.theta));
            }
            Err(_) => search_ok = false,
        }
        search_ok &= matches!(exponent_search(g, d), Err(GmcError::NoFeasibleExponents { .. }));
    }
    verdict(
        sup_err <= 1e-8 && search_ok,
        format!("sup f_gamma error {sup_err:.1e}; theta at 0.9 D [{}]", thetas.join(", ")),
    )
}

fn spectrum_config(gamma: f64, m: u32) -> ExperimentConfig {
    ExperimentConfig {
        gamma,
        m,
        grid: 1 << 15,
        n_max: 1 << 12,
        replicas: 200,
        seed: 0xacc8,
        statistic: Statistic::Median,
        block_lo: 1 << 4,
        block_hi: 1 << 12,
        allow_shallow: m < 14,
        ..ExperimentConfig::default()
    }
}

/// Pooled-median decay slope over all replicas, and the reservoir-based one.
fn median_slope(config: &ExperimentConfig) -> (f64, f64) {
    let runner = Runner::new(config).unwrap();
    let spectra: Vec<SpectrumVector<f64>> = runner
        .records(0..config.replicas)
        .unwrap()
        .into_iter()
        .map(|r| SpectrumVector { n_max: config.n_max, tau: 0.0, weighted: r.spectrum.clone(), coefficients: r.spectrum })
        .collect();
    let pooled = decay_slope(&spectra, (config.block_lo, config.block_hi), Statistic::Median).unwrap();
    let ensemble = run_ensemble(config).unwrap();
    let reservoir = decay_fit(&ensemble, Statistic::Median, (config.block_lo, config.block_hi)).unwrap();
    (pooled.slope, reservoir.slope)
}

// The fits run at m = log2 G = 15, the finest level the grid resolves; m = 12
// breaks the depth rule m >= log2(n_max) + 2 and its truncation visibly
// steepens the top blocks. The m = 12 slopes are reported alongside.
fn fourier_decay() -> (Outcome, Outcome) {
    let (s05, r05) = median_slope(&spectrum_config(0.5, 15));
    let (s10, r10) = median_slope(&spectrum_config(1.0, 15));
    // Finite-scale correlation dimension at gamma = 1, for comparison.
    let l2_10 = l2_fit(&run_ensemble(&spectrum_config(1.0, 15)).unwrap(), &(4..=10).collect::<Vec<_>>()).unwrap().slope;
    let (s05_12, _) = median_slope(&spectrum_config(0.5, 12));
    let (s10_12, _) = median_slope(&spectrum_config(1.0, 12));
    let small = verdict(
        (-0.90..=-0.60).contains(&s05),
        format!("slope {s05:.3} (reservoir {r05:.3}; at m=12: {s05_12:.3}), target -0.75"),
    );
    let large = verdict(
        (-0.35..=-0.05).contains(&s10) && s10 > s05,
        format!("slope {s10:.3} (reservoir {r10:.3}; at m=12: {s10_12:.3}) vs gamma=0.5 slope {s05:.3}, D = 0.1716, dim_2 fit at this scale {l2_10:.3}"),
    );
    (small, large)
}

fn correlation_dimension() -> Outcome {
    let result = run_ensemble(&spectrum_config(0.5, 15)).unwrap();
    let fit = l2_fit(&result, &(4..=10).collect::<Vec<_>>()).unwrap();
    verdict((fit.slope - 0.75).abs() <= 0.12, format!("slope {:.4} +- {:.4}, target 0.75", fit.slope, fit.std_error))
}

fn clt_rescaling() -> Outcome {
    let config = ExperimentConfig {
        gamma: 0.4,
        m: 13,
        grid: 1 << 14,
        n_max: 1 << 11,
        replicas: 200,
        seed: 0xacc11,
        block_lo: 1 << 6,
        block_hi: 1 << 11,
        ..ExperimentConfig::default()
    };
    let profile = clt_profile(&run_ensemble(&config).unwrap(), (1 << 6, 1 << 11)).unwrap();
    let values: Vec<f64> = profile.iter().map(|b| b.value).collect();
    let ratio = values.iter().cloned().fold(0.0, f64::max) / values.iter().cloned().fold(f64::INFINITY, f64::min);
    verdict(ratio <= 2.0, format!("block variances {values:.4?}, max/min {ratio:.3}"))
}

fn uniform_bound() -> Outcome {
    let config = ExperimentConfig {
        gamma: 0.5,
        tau: Some(0.5),
        norm_depths: vec![6, 8, 10, 12],
        m: 12,
        grid: 1 << 14,
        n_max: 1 << 10,
        replicas: 100,
        seed: 0xacc12,
        block_hi: 1 << 10,
        ..ExperimentConfig::default()
    };
    let result = run_ensemble(&config).unwrap();
    let means = norm_means(&result);
    let e = result.exponents.unwrap();
    let ratio = means.last().unwrap().1 / means[0].1;
    verdict(
        ratio <= 1.5,
        format!("(p, q) = ({}, {}), theta {:.4}; E||M_m||^p = {means:.4?}; last/first {ratio:.3}", e.p, e.q, e.theta),
    )
}

fn frostman_scan() -> Outcome {
    let config = ExperimentConfig {
        gamma: 0.5,
        m: 12,
        grid: 1 << 14,
        n_max: 1 << 10,
        replicas: 50,
        seed: 0xacc13,
        block_hi: 1 << 10,
        ..ExperimentConfig::default()
    };
    let growth = frostman_growth(&run_ensemble(&config).unwrap(), 0.3, &[6, 7, 8, 9, 10]);
    let worst = growth.iter().cloned().fold(0.0, f64::max);
    verdict(worst < 1.2, format!("growth factors {growth:.3?}; ratios decay like 2^(l (0.3 - {:.3}))", 1.0 + 0.125 - 0.5 * SQRT_2))
}

fn main() {
    let start = Instant::now();
    let mut results: Vec<(u32, &str, Outcome)> = vec![
        (1, "geometry exactness", geometry_exactness()),
        (2, "sampler fidelity", sampler_fidelity()),
        (3, "exact weight moments", exact_moments()),
        (4, "Holder-moment boundedness", holder_boundedness()),
        (5, "decomposition identities", decomposition_identities()),
        (6, "separation-of-variable bound", separation_bound_holds()),
        (7, "exponent machinery", exponent_machinery()),
    ];
    let (small, large) = fourier_decay();
    results.push((8, "Fourier decay, gamma = 0.5", small));
    results.push((9, "Fourier decay, gamma = 1.0", large));
    results.push((10, "correlation dimension", correlation_dimension()));
    results.push((11, "CLT rescaling", clt_rescaling()));
    results.push((12, "uniform-bound probe", uniform_bound()));
    results.push((13, "Frostman scan", frostman_scan()));

    let mut failures = 0;
    for (id, name, outcome) in &results {
        match outcome {
            Ok(d) => println!("criterion {id:>2} PASS  {name}: {d}"),
            Err(d) => {
                failures += 1;
                println!("criterion {id:>2} FAIL  {name}: {d}")
            }
        }
    }
    println!("{} of {} criteria passed in {:.1?}", results.len() - failures, results.len(), start.elapsed());
    if failures > 0 {
        std::process::exit(1);
    }
}
