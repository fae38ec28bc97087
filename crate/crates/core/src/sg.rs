//! Savitzky-Golay smoothing, differentiation and interpolation on
//! non-uniformly sampled streams.
//!
//! Each window of `2N + 1` consecutive samples is fitted with a polynomial of
//! degree `M` in `t − T[k]`, where `T[k]` is the window's center sample. The
//! timesteps are recomputed per window, so jittered or irregular sampling is
//! handled without resampling.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SgConfig {
    /// Polynomial degree `M`.
    pub degree: usize,
    /// Half-window `N`; windows hold `2N + 1` samples.
    pub half_window: usize,
}

impl Default for SgConfig {
    fn default() -> Self {
        Self {
            degree: 5,
            half_window: 3,
        }
    }
}

impl SgConfig {
    pub fn new(degree: usize, half_window: usize) -> Result<Self> {
        let c = Self {
            degree,
            half_window,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn window_len(&self) -> usize {
        2 * self.half_window + 1
    }

    pub fn validate(&self) -> Result<()> {
        if self.degree < 1 || self.half_window < 1 || self.window_len() <= self.degree {
            return Err(Error::InvalidInput(format!(
                "Savitzky-Golay needs M >= 1, N >= 1 and 2N+1 > M (got M = {}, N = {})",
                self.degree, self.half_window
            )));
        }
        Ok(())
    }
}

/// A fitted window: `p(t) = Σ c_i (t − center_time)^i` per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct SgWindow {
    pub center_time: f64,
    /// `(M + 1) × D` coefficients; row `i` multiplies `(t − center_time)^i`.
    pub coefficients: DMatrix<f64>,
    /// `[T[k − N], T[k + N]]`.
    pub span: (f64, f64),
}

impl SgWindow {
    pub fn channels(&self) -> usize {
        self.coefficients.ncols()
    }

    pub fn value_at(&self, t: f64) -> DVector<f64> {
        let dt = t - self.center_time;
        let m = self.coefficients.nrows();
        let mut out = DVector::zeros(self.channels());
        // Horner
        for i in (0..m).rev() {
            out = out * dt + self.coefficients.row(i).transpose();
        }
        out
    }

    pub fn derivative_at(&self, t: f64) -> DVector<f64> {
        let dt = t - self.center_time;
        let m = self.coefficients.nrows();
        let mut out = DVector::zeros(self.channels());
        for i in (1..m).rev() {
            out = out * dt + self.coefficients.row(i).transpose() * i as f64;
        }
        out
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.span.0 && t <= self.span.1
    }
}

/// Least-squares polynomial fit of one window.
///
/// `values` holds one row per timestamp and one column per channel. The
/// Vandermonde system is solved by Householder QR after scaling `ΔT` to
/// `[-1, 1]`, which yields the same solution as `(AᵀA)⁻¹Aᵀd`.
pub fn fit_window(times: &[f64], values: &DMatrix<f64>, config: &SgConfig) -> Result<SgWindow> {
    config.validate()?;
    let n = config.window_len();
    if times.len() != n || values.nrows() != n {
        return Err(Error::InvalidInput(format!(
            "window needs exactly {n} samples, got {} timestamps and {} rows",
            times.len(),
            values.nrows()
        )));
    }
    if times.iter().any(|t| !t.is_finite()) || values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite window data".into()));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if times[i] == times[j] {
                return Err(Error::InvalidInput(format!("duplicate timestamp {}", times[i])));
            }
        }
    }
    let center = times[config.half_window];
    let scale = times
        .iter()
        .map(|t| (t - center).abs())
        .fold(0.0_f64, f64::max);
    let cols = config.degree + 1;
    let a = DMatrix::from_fn(n, cols, |r, c| ((times[r] - center) / scale).powi(c as i32));
    let qr = a.qr();
    let rhs = qr.q().transpose() * values;
    let mut coefficients = qr
        .r()
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::Internal("singular Vandermonde factor".into()))?;
    for i in 0..cols {
        let f = scale.powi(i as i32);
        coefficients.row_mut(i).apply(|v| *v /= f);
    }
    let (lo, hi) = times
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &t| (lo.min(t), hi.max(t)));
    Ok(SgWindow {
        center_time: center,
        coefficients,
        span: (lo, hi),
    })
}

/// Filtered value and time derivative at one query time.
#[derive(Debug, Clone, PartialEq)]
pub struct SgPoint {
    pub t: f64,
    pub value: DVector<f64>,
    pub derivative: DVector<f64>,
    /// The query fell outside every window span and was clamped to the
    /// nearest stream endpoint.
    pub extrapolated: bool,
}

/// Evaluates the filtered stream at arbitrary query times.
///
/// Each query uses the window whose center sample is nearest in time (that
/// window's span always contains an in-range query). Queries before the first
/// or after the last sample return the value at that endpoint and are flagged
/// as extrapolated. Output times equal `queries` exactly.
pub fn interpolate_to(
    times: &[f64],
    values: &DMatrix<f64>,
    queries: &[f64],
    config: &SgConfig,
) -> Result<Vec<SgPoint>> {
    config.validate()?;
    let n = times.len();
    let w = config.window_len();
    if n < w {
        return Err(Error::InsufficientData { needed: w, got: n });
    }
    if values.nrows() != n {
        return Err(Error::InvalidInput(format!(
            "{} timestamps but {} value rows",
            n,
            values.nrows()
        )));
    }
    if times.windows(2).any(|p| !(p[1] > p[0])) {
        return Err(Error::InvalidInput("timestamps must be strictly increasing".into()));
    }
    let origin = times[0];
    let rel: Vec<f64> = times.iter().map(|t| t - origin).collect();
    let half = config.half_window;
    let (first_center, last_center) = (half, n - 1 - half);

    let mut cache: Option<(usize, SgWindow)> = None;
    let mut out = Vec::with_capacity(queries.len());
    for &q in queries {
        let tq = q - origin;
        let (eval_t, extrapolated) = if tq < 0.0 {
            (0.0, true)
        } else if tq > rel[n - 1] {
            (rel[n - 1], true)
        } else {
            (tq, false)
        };
        let k = nearest_index(&rel, eval_t).clamp(first_center, last_center);
        let window = match &cache {
            Some((ck, win)) if *ck == k => win,
            _ => {
                let rows = values.rows(k - half, w).into_owned();
                let win = fit_window(&rel[k - half..=k + half], &rows, config)?;
                &cache.insert((k, win)).1
            }
        };
        out.push(SgPoint {
            t: q,
            value: window.value_at(eval_t),
            derivative: window.derivative_at(eval_t),
            extrapolated,
        });
    }
    Ok(out)
}

/// Smoothed values and derivatives at the stream's own timestamps.
pub fn smooth(times: &[f64], values: &DMatrix<f64>, config: &SgConfig) -> Result<Vec<SgPoint>> {
    interpolate_to(times, values, times, config)
}

fn nearest_index(sorted: &[f64], t: f64) -> usize {
    let i = sorted.partition_point(|&x| x < t);
    if i == 0 {
        0
    } else if i == sorted.len() {
        sorted.len() - 1
    } else if t - sorted[i - 1] <= sorted[i] - t {
        i - 1
    } else {
        i
    }
}
