use gmc_core::geometry::level_covariance;
use gmc_core::sampler::{dense, FieldSampler, GridSpec};
use gmc_core::SeedRecord;

const G: usize = 64;
const DEPTH: u32 = 4;
const REPS: u64 = 4000;

fn empirical_lag_covariance(rows: &[Vec<f64>], lag: usize) -> f64 {
    // Pools the product over all base points; the field is stationary and
    // periodicity is not assumed, so only pairs inside the grid are used.
    let mut sum = 0.0;
    let mut count = 0usize;
    for row in rows {
        for i in 0..G - lag {
            sum += row[i] * row[i + lag];
            count += 1;
        }
    }
    sum / count as f64
}

#[test]
fn fft_sampler_matches_closed_form_covariance() {
    let grid = GridSpec::new(G).unwrap();
    let sampler = FieldSampler::<f64>::new(DEPTH, grid).unwrap();
    let hs: Vec<_> = (0..REPS).map(|r| sampler.sample(SeedRecord::new(11, r))).collect();
    for j in 0..=DEPTH {
        let rows: Vec<Vec<f64>> = hs.iter().map(|h| h.row(j).to_vec()).collect();
        for lag in [0usize, 1, 2, 5, 9, 17, 33] {
            let exact: f64 = level_covariance(j, lag as f64 / G as f64).unwrap();
            let got = empirical_lag_covariance(&rows, lag);
            assert!((got - exact).abs() < 0.04, "j={j} lag={lag} got={got} exact={exact}");
        }
    }
}

#[test]
fn levels_are_uncorrelated() {
    let grid = GridSpec::new(G).unwrap();
    let sampler = FieldSampler::<f64>::new(DEPTH, grid).unwrap();
    let mut sums = vec![(0.0, 0.0); 4];
    for r in 0..REPS {
        let h = sampler.sample(SeedRecord::new(12, r));
        for (idx, (a, b)) in [(0, 1), (1, 2), (2, 4), (0, 4)].into_iter().enumerate() {
            let x = h.row(a)[7] * h.row(b)[7];
            sums[idx].0 += x;
            sums[idx].1 += x * x;
        }
    }
    for (s, s2) in sums {
        let n = REPS as f64;
        let mean = s / n;
        let se = ((s2 / n - mean * mean) / n).sqrt();
        assert!(mean.abs() < 4.0 * se, "mean={mean} se={se}");
    }
}

#[test]
fn dense_and_fft_samplers_agree_in_distribution() {
    use rand::SeedableRng;
    let g = 32;
    let grid = GridSpec::new(g).unwrap();
    let sampler = FieldSampler::<f64>::new(3, grid).unwrap();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
    for j in [0u32, 2, 3] {
        let fft: Vec<Vec<f64>> = (0..REPS).map(|r| sampler.sample(SeedRecord::new(13, r)).row(j).to_vec()).collect();
        let chol: Vec<Vec<f64>> = (0..REPS).map(|_| dense::sample_level(j, grid, &mut rng).unwrap()).collect();
        for (a, b) in [(0usize, 0usize), (0, 1), (3, 6), (10, 12)] {
            let cov = |rows: &[Vec<f64>]| rows.iter().map(|r| r[a] * r[b]).sum::<f64>() / rows.len() as f64;
            let (x, y) = (cov(&fft), cov(&chol));
            assert!((x - y).abs() < 0.08, "j={j} ({a},{b}) fft={x} dense={y}");
        }
    }
}
