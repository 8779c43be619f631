//! Exact sampling of the level fields `phi_0, ..., phi_m` on a dyadic grid by
//! circulant embedding.
//!
//! Each level covariance is supported on lags `<= 1`, so periodizing it with
//! period 2 (twice the unit interval) is overlap-free and the periodized
//! sequence is the autocorrelation of a box average, hence positive
//! semidefinite. One complex FFT of length `2G` per level then yields an
//! exact stationary sample whose first `G` entries cover `[0, 1)`.

use std::io::{Read, Write};
use std::sync::Arc;

use num_complex::Complex;
use rand::Rng;
use rand_distr::StandardNormal;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{GmcError, Result};
use crate::geometry::{level_covariance, level_variance};
use crate::rng::SeedRecord;
use crate::scalar::Scalar;

/// Relative tolerance below which negative embedding eigenvalues are treated
/// as round-off and clamped to zero.
pub const EPS_CLAMP: f64 = 1e-8;

/// Uniform grid `t_i = i / G`, `G = 2^g`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GridSpec {
    log2_points: u32,
}

impl GridSpec {
    pub fn new(points: usize) -> Result<Self> {
        if points < 2 || !points.is_power_of_two() {
            return Err(GmcError::InvalidGrid(points));
        }
        Ok(Self { log2_points: points.trailing_zeros() })
    }

    pub fn from_log2(g: u32) -> Result<Self> {
        if g == 0 || g > 40 {
            return Err(GmcError::InvalidGrid(1usize.checked_shl(g).unwrap_or(0)));
        }
        Ok(Self { log2_points: g })
    }

    #[inline]
    pub fn points(&self) -> usize {
        1 << self.log2_points
    }

    #[inline]
    pub fn log2(&self) -> u32 {
        self.log2_points
    }

    #[inline]
    pub fn point<T: Scalar>(&self, i: usize) -> T {
        T::from_usize_lossy(i) / T::from_usize_lossy(self.points())
    }

    /// Grid spacing `1/G`.
    #[inline]
    pub fn spacing<T: Scalar>(&self) -> T {
        T::one() / T::from_usize_lossy(self.points())
    }
}

/// Period-2 circulant first row: entry `r` is the level covariance at lag
/// `min(r, 2G - r) / G`.
pub fn covariance_sequence<T: Scalar>(j: u32, grid: GridSpec) -> Vec<T> {
    let g = grid.points();
    let period = 2 * g;
    (0..period)
        .map(|r| {
            let lag = T::from_usize_lossy(r.min(period - r)) / T::from_usize_lossy(g);
            level_covariance(j, lag).expect("lag is non-negative")
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingSpectrum<T> {
    pub level: Option<u32>,
    /// Clamped eigenvalues of the circulant matrix, length `2G`.
    pub eigenvalues: Vec<T>,
    /// Most negative raw eigenvalue before clamping (zero if none).
    pub min_raw: T,
    pub clamped: usize,
}

/// Eigenvalues of the circulant matrix with first row `seq`.
pub fn embedding_spectrum<T: Scalar>(seq: &[T]) -> Result<EmbeddingSpectrum<T>> {
    let p = seq.len();
    if p < 2 || p % 2 != 0 {
        return Err(GmcError::InvalidArgument(format!("embedding length {p} must be even and >= 2")));
    }
    let scale = seq.iter().fold(T::zero(), |a, &b| a.max(b.abs()));
    let sym_tol = T::lit(1e-12) * (scale + T::one());
    for r in 1..p {
        if (seq[r] - seq[p - r]).abs() > sym_tol {
            return Err(GmcError::InvalidArgument(format!("sequence not symmetric at {r}")));
        }
    }
    let mut buf: Vec<Complex<T>> = seq.iter().map(|&x| Complex::new(x, T::zero())).collect();
    FftPlanner::new().plan_fft_forward(p).process(&mut buf);
    let max = buf.iter().fold(T::zero(), |a, z| a.max(z.re));
    let tol = T::lit(EPS_CLAMP) * max;
    let mut min_raw = T::zero();
    let mut clamped = 0;
    let mut eigenvalues = Vec::with_capacity(p);
    for z in &buf {
        let v = z.re;
        if v < T::zero() {
            min_raw = min_raw.min(v);
            if -v > tol {
                return Err(GmcError::NotEmbeddable { min: v.as_f64(), max: max.as_f64(), tol: tol.as_f64() });
            }
            clamped += 1;
            eigenvalues.push(T::zero());
        } else {
            eigenvalues.push(v);
        }
    }
    Ok(EmbeddingSpectrum { level: None, eigenvalues, min_raw, clamped })
}

impl<T: Scalar> EmbeddingSpectrum<T> {
    pub fn for_level(j: u32, grid: GridSpec) -> Result<Self> {
        let mut spec = embedding_spectrum(&covariance_sequence::<T>(j, grid))?;
        spec.level = Some(j);
        Ok(spec)
    }

    /// Covariance sequence reproduced by the clamped eigenvalues (inverse DFT).
    pub fn implied_covariance(&self) -> Vec<T> {
        let p = self.eigenvalues.len();
        let mut buf: Vec<Complex<T>> = self.eigenvalues.iter().map(|&x| Complex::new(x, T::zero())).collect();
        FftPlanner::new().plan_fft_inverse(p).process(&mut buf);
        let inv = T::one() / T::from_usize_lossy(p);
        buf.into_iter().map(|z| z.re * inv).collect()
    }
}

/// Sampled level fields on a grid, row `j` holding `phi_j(t_i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldHierarchy<T> {
    pub grid: GridSpec,
    pub depth: u32,
    /// Row-major `(depth + 1) x G`.
    pub samples: Vec<T>,
    pub variances: Vec<T>,
    pub seed: SeedRecord,
}

impl<T: Scalar> FieldHierarchy<T> {
    pub fn row(&self, j: u32) -> &[T] {
        let g = self.grid.points();
        let j = j as usize;
        &self.samples[j * g..(j + 1) * g]
    }

    pub fn row_mut(&mut self, j: u32) -> &mut [T] {
        let g = self.grid.points();
        let j = j as usize;
        &mut self.samples[j * g..(j + 1) * g]
    }

    /// Debug dump: `G, m, seed.experiment, seed.replica` as little-endian
    /// `u64`, then the row-major samples as little-endian `f64`.
    pub fn write_binary<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        for word in [self.grid.points() as u64, u64::from(self.depth), self.seed.experiment, self.seed.replica] {
            w.write_all(&word.to_le_bytes())?;
        }
        for &x in &self.samples {
            w.write_all(&x.as_f64().to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_binary<R: Read>(mut r: R) -> std::io::Result<Self> {
        let mut word = [0u8; 8];
        let mut next = |r: &mut R| -> std::io::Result<u64> {
            r.read_exact(&mut word)?;
            Ok(u64::from_le_bytes(word))
        };
        let invalid = |msg: String| std::io::Error::new(std::io::ErrorKind::InvalidData, msg);
        let g = next(&mut r)? as usize;
        let depth = next(&mut r)? as u32;
        let seed = SeedRecord::new(next(&mut r)?, next(&mut r)?);
        let grid = GridSpec::new(g).map_err(|e| invalid(e.to_string()))?;
        let len = (depth as usize + 1) * g;
        let mut samples = Vec::with_capacity(len);
        for _ in 0..len {
            samples.push(T::lit(f64::from_bits(next(&mut r)?)));
        }
        Ok(Self { grid, depth, samples, variances: (0..=depth).map(level_variance).collect(), seed })
    }
}

/// Precomputed per-level square-root spectra and FFT plan; reusable across
/// replicas of the same `(depth, grid)`.
pub struct FieldSampler<T: Scalar> {
    grid: GridSpec,
    depth: u32,
    scales: Vec<Vec<T>>,
    fft: Arc<dyn Fft<T>>,
}

impl<T: Scalar> std::fmt::Debug for FieldSampler<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FieldSampler").field("grid", &self.grid).field("depth", &self.depth).finish()
    }
}

impl<T: Scalar> FieldSampler<T> {
    pub fn new(depth: u32, grid: GridSpec) -> Result<Self> {
        let period = 2 * grid.points();
        let inv_p = T::one() / T::from_usize_lossy(period);
        let scales = (0..=depth)
            .map(|j| {
                EmbeddingSpectrum::<T>::for_level(j, grid)
                    .map(|s| s.eigenvalues.into_iter().map(|l| (l * inv_p).sqrt()).collect())
            })
            .collect::<Result<Vec<Vec<T>>>>()?;
        let fft = FftPlanner::new().plan_fft_forward(period);
        Ok(Self { grid, depth, scales, fft })
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    /// Writes `phi_j` on the grid into `out` (length `G`); deterministic in
    /// `(seed, j)`.
    pub fn sample_level_into(&self, j: u32, seed: &SeedRecord, out: &mut [T]) {
        let scale = &self.scales[j as usize];
        let mut rng = seed.level_stream(j);
        let mut buf: Vec<Complex<T>> = scale
            .iter()
            .map(|&s| {
                let a: f64 = rng.sample(StandardNormal);
                let b: f64 = rng.sample(StandardNormal);
                Complex::new(s * T::lit(a), s * T::lit(b))
            })
            .collect();
        self.fft.process(&mut buf);
        for (o, z) in out.iter_mut().zip(&buf) {
            *o = z.re;
        }
    }

    pub fn sample(&self, seed: SeedRecord) -> FieldHierarchy<T> {
        let g = self.grid.points();
        let mut samples = vec![T::zero(); (self.depth as usize + 1) * g];
        for (j, row) in samples.chunks_exact_mut(g).enumerate() {
            self.sample_level_into(j as u32, &seed, row);
        }
        FieldHierarchy {
            grid: self.grid,
            depth: self.depth,
            samples,
            variances: (0..=self.depth).map(level_variance).collect(),
            seed,
        }
    }

    /// Replaces level `j` of `hierarchy` with a fresh draw from `seed`,
    /// keeping every other level.
    pub fn resample_level(&self, hierarchy: &mut FieldHierarchy<T>, j: u32, seed: &SeedRecord) {
        self.sample_level_into(j, seed, hierarchy.row_mut(j));
    }
}

pub fn sample_hierarchy<T: Scalar>(m: u32, grid: GridSpec, seed: SeedRecord) -> Result<FieldHierarchy<T>> {
    Ok(FieldSampler::new(m, grid)?.sample(seed))
}

/// Dense Cholesky sampler for small grids, used to cross-check the FFT path.
pub mod dense {
    use super::*;

    pub const MAX_POINTS: usize = 512;

    pub fn covariance_matrix<T: Scalar>(j: u32, grid: GridSpec) -> Vec<Vec<T>> {
        let g = grid.points();
        (0..g)
            .map(|a| {
                (0..g)
                    .map(|b| {
                        let lag = T::from_usize_lossy(a.abs_diff(b)) / T::from_usize_lossy(g);
                        level_covariance(j, lag).expect("non-negative lag")
                    })
                    .collect()
            })
            .collect()
    }

    /// Lower-triangular factor of `cov + jitter I`; semidefinite pivots are
    /// zeroed.
    pub fn cholesky<T: Scalar>(cov: &[Vec<T>], jitter: T) -> Vec<Vec<T>> {
        let n = cov.len();
        let mut l = vec![vec![T::zero(); n]; n];
        for i in 0..n {
            for k in 0..=i {
                let mut s = cov[i][k];
                for p in 0..k {
                    s -= l[i][p] * l[k][p];
                }
                if i == k {
                    let d = s + jitter;
                    l[i][i] = if d > T::zero() { d.sqrt() } else { T::zero() };
                } else if l[k][k] > T::zero() {
                    l[i][k] = s / l[k][k];
                }
            }
        }
        l
    }

    pub fn sample_level<T: Scalar, R: Rng>(j: u32, grid: GridSpec, rng: &mut R) -> Result<Vec<T>> {
        if grid.points() > MAX_POINTS {
            return Err(GmcError::InvalidArgument(format!("dense sampler limited to {MAX_POINTS} points")));
        }
        let l = cholesky(&covariance_matrix::<T>(j, grid), T::lit(1e-12));
        let z: Vec<T> = (0..grid.points()).map(|_| T::lit(rng.sample::<f64, _>(StandardNormal))).collect();
        Ok(l.iter().map(|row| row.iter().zip(&z).map(|(&a, &b)| a * b).sum()).collect())
    }
}
