//! Savitzky-Golay smoothing on uniformly sampled signals.
//!
//! Each output sample is the value of a least-squares polynomial of the given
//! order fitted over a window of neighbouring samples. Near the edges the
//! window is kept at full width and shifted inside the signal, evaluating the
//! fit at the off-center position, so polynomials up to the fit order are
//! reproduced exactly everywhere.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Smoothing operator for a fixed window and order; precomputes one weight
/// row per in-window evaluation offset.
#[derive(Debug, Clone)]
pub struct SavitzkyGolay {
    window: usize,
    weights: Vec<DVector<f64>>, // weights[j] evaluates the fit at offset j
}

impl SavitzkyGolay {
    pub fn new(window: usize, order: usize) -> Result<Self> {
        if window % 2 == 0 || window <= order {
            return Err(Error::BadFilterWindow {
                window,
                order,
                len: 0,
            });
        }
        // Vandermonde on centered integer abscissae
        let a = DMatrix::from_fn(window, order + 1, |i, p| {
            let x = i as f64 - (window as f64 - 1.0) / 2.0;
            x.powi(p as i32)
        });
        let ata = a.transpose() * &a;
        let inv = ata
            .try_inverse()
            .expect("Vandermonde normal matrix is invertible for window > order");
        let proj = &a * inv * a.transpose(); // window x window smoothing matrix
        let weights = (0..window)
            .map(|j| proj.row(j).transpose())
            .collect();
        Ok(SavitzkyGolay { window, weights })
    }

    pub fn apply(&self, signal: &[f64]) -> Result<Vec<f64>> {
        let n = signal.len();
        let w = self.window;
        if n < w {
            return Err(Error::BadFilterWindow {
                window: w,
                order: 0,
                len: n,
            });
        }
        let half = w / 2;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            // shift the window inside the signal near the edges
            let start = i.saturating_sub(half).min(n - w);
            let offset = i - start;
            let mut acc = 0.0;
            let wt = &self.weights[offset];
            for k in 0..w {
                acc += wt[k] * signal[start + k];
            }
            out.push(acc);
        }
        Ok(out)
    }
}

/// One-shot smoothing with the given odd window and polynomial order.
pub fn savitzky_golay(signal: &[f64], window: usize, order: usize) -> Result<Vec<f64>> {
    let f = SavitzkyGolay::new(window, order)?;
    if signal.len() < window {
        return Err(Error::BadFilterWindow {
            window,
            order,
            len: signal.len(),
        });
    }
    f.apply(signal)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;
    use rand_distr::{Distribution, Normal};

    #[test]
    fn constant_signal_unchanged() {
        let sig = vec![3.25; 120];
        let out = savitzky_golay(&sig, 51, 3).unwrap();
        for v in out {
            assert!((v - 3.25).abs() < 1e-12);
        }
    }

    #[test]
    fn cubic_reproduced_exactly() {
        let sig: Vec<f64> = (0..200)
            .map(|i| {
                let t = i as f64 * 0.01;
                2.0 * t * t * t - 0.5 * t * t + t - 4.0
            })
            .collect();
        let out = savitzky_golay(&sig, 51, 3).unwrap();
        for (a, b) in sig.iter().zip(out.iter()) {
            assert!((a - b).abs() < 1e-9, "{} vs {}", a, b);
        }
    }

    #[test]
    fn quartic_not_reproduced() {
        let sig: Vec<f64> = (0..200).map(|i| (i as f64 * 0.02).powi(4)).collect();
        let out = savitzky_golay(&sig, 51, 3).unwrap();
        let max_dev = sig
            .iter()
            .zip(out.iter())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        assert!(max_dev > 1e-6);
    }

    #[test]
    fn noise_variance_reduced() {
        let mut rng = StdRng::seed_from_u64(99);
        let normal = Normal::new(0.0, 0.5).unwrap();
        let n = 2000;
        let clean: Vec<f64> = (0..n).map(|i| (i as f64 * 0.01).sin()).collect();
        let noisy: Vec<f64> = clean
            .iter()
            .map(|v| v + normal.sample(&mut rng))
            .collect();
        let out = savitzky_golay(&noisy, 51, 3).unwrap();
        let var = |xs: &[f64]| {
            let m = 25..n - 25; // interior
            let vals: Vec<f64> = m.clone().map(|i| xs[i] - clean[i]).collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / vals.len() as f64
        };
        let before = var(&noisy);
        let after = var(&out);
        assert!(
            before / after >= 5.0,
            "variance reduction only {}",
            before / after
        );
    }

    #[test]
    fn invalid_window_rejected() {
        assert!(savitzky_golay(&[0.0; 100], 50, 3).is_err()); // even
        assert!(savitzky_golay(&[0.0; 100], 3, 3).is_err()); // order too high
        assert!(savitzky_golay(&[0.0; 10], 51, 3).is_err()); // too short
    }
}
