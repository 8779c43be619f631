//! Hyperbolic-measure calculus for the cone regions of the white-noise
//! decomposition.
//!
//! With `lambda(dx dy) = dx dy / y^2` on the upper half-plane, the level
//! region `A_0(t)` is the strip `y > 1, |x - t| < 1/2` and, for `j >= 1`,
//! `A_j(t) = { max(2|x - t|, 2^-j) < y <= 2^-(j-1) }`. The level field
//! `phi_j(t)` is the white noise of `A_j(t)`, so its covariance at lag `h` is
//! `lambda(A_j(0) ∩ A_j(h))`.

use serde::{Deserialize, Serialize};

use crate::error::{out_of_range, GmcError, Result};
use crate::scalar::Scalar;

/// Height at which the unbounded level-0 strip is cut by the quadrature oracle.
pub const ORACLE_Y_CUTOFF: f64 = 1e4;

fn check_lag<T: Scalar>(h: T) -> Result<()> {
    if h < T::zero() || h.is_nan() {
        return Err(GmcError::NegativeLag(h.as_f64()));
    }
    Ok(())
}

/// Pointwise variance of `phi_j`: 1 at level 0 and `ln 2` above.
pub fn level_variance<T: Scalar>(j: u32) -> T {
    if j == 0 {
        T::one()
    } else {
        T::LN_2()
    }
}

/// `E[phi_j(t) phi_j(t + h)]`, obtained by integrating the overlap width
/// `(y - h)_+ / y^2` of the two slabs over the level's height band.
pub fn level_covariance<T: Scalar>(j: u32, h: T) -> Result<T> {
    check_lag(h)?;
    if j == 0 {
        return Ok((T::one() - h).max(T::zero()));
    }
    let lo = T::pow2(-(j as i32));
    let hi = lo + lo;
    let half_scale = T::pow2(j as i32 - 1);
    let v = if h <= lo {
        T::LN_2() - h * half_scale
    } else if h < hi {
        (hi / h).ln() + h * half_scale - T::one()
    } else {
        T::zero()
    };
    Ok(v.max(T::zero()))
}

/// Covariance of the truncated field `psi_m = phi_0 + ... + phi_m`.
pub fn psi_covariance<T: Scalar>(m: u32, h: T) -> Result<T> {
    check_lag(h)?;
    let cutoff = T::pow2(-(m as i32));
    Ok(if h < cutoff {
        T::from_u32(m).unwrap() * T::LN_2() + T::one() - T::pow2(m as i32) * h
    } else if h <= T::one() {
        -h.ln()
    } else {
        T::zero()
    })
}

/// `lambda(A_j(0) \ A_j(t))` for `0 <= t <= 2^-j`: the variance of the part of
/// `phi_j(0)` not shared with `phi_j(t)`.
pub fn region_difference_measure<T: Scalar>(j: u32, t: T) -> Result<T> {
    let max = T::pow2(-(j as i32));
    if !(t >= T::zero() && t <= max) {
        return Err(out_of_range(t.as_f64(), format!("[0, 2^-{j}]")));
    }
    Ok(if j == 0 { t } else { T::pow2(j as i32 - 1) * t })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleEstimate<T> {
    pub value: T,
    pub resolution: usize,
    /// Height cut applied to the unbounded level-0 region, if any.
    pub y_cutoff: Option<T>,
}

/// Two-dimensional midpoint rule for `lambda(A_j(0) ∩ A_j(h))`.
///
/// Integrates in `(x, u = 1/y)`, where the measure becomes `dx du`, over the
/// bounding box of the intersection with `resolution` cells per axis. Each
/// row counts the x-midpoints falling inside the region, which is exactly the
/// midpoint rule applied to the region's indicator.
pub fn quadrature_overlap_oracle<T: Scalar>(j: u32, h: T, resolution: usize) -> Result<OracleEstimate<T>> {
    check_lag(h)?;
    if resolution < 100 {
        return Err(out_of_range(resolution as f64, "[100, inf)"));
    }
    let h = h.as_f64();
    let (u_lo, u_hi, y_max, y_cutoff) = if j == 0 {
        (1.0 / ORACLE_Y_CUTOFF, 1.0, 1.0, Some(T::lit(ORACLE_Y_CUTOFF)))
    } else {
        let top = 2f64.powi(-(j as i32 - 1));
        (1.0 / top, 2.0 / top, top, None)
    };
    let x_lo = h - y_max / 2.0;
    let x_hi = y_max / 2.0;
    if x_hi <= x_lo {
        return Ok(OracleEstimate { value: T::zero(), resolution, y_cutoff });
    }
    let n = resolution;
    let du = (u_hi - u_lo) / n as f64;
    let dx = (x_hi - x_lo) / n as f64;
    let mut cells = 0usize;
    for r in 0..n {
        let u = u_lo + (r as f64 + 0.5) * du;
        // Slab half-width y/2 at this height; level 0 has fixed half-width 1/2.
        let half = if j == 0 { 0.5 } else { 0.5 / u };
        let lo = (h - half).max(-half);
        let hi = half.min(h + half);
        if hi <= lo {
            continue;
        }
        // Midpoints x_lo + (k + 1/2) dx strictly inside (lo, hi).
        let first = ((lo - x_lo) / dx - 0.5).floor() as i64 + 1;
        let last = ((hi - x_lo) / dx - 0.5).ceil() as i64 - 1;
        let first = first.max(0);
        let last = last.min(n as i64 - 1);
        if last >= first {
            cells += (last - first + 1) as usize;
        }
    }
    Ok(OracleEstimate { value: T::lit(cells as f64 * dx * du), resolution, y_cutoff })
}
