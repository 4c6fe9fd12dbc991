//! Dominant frequency of a uniformly sampled signal.

use rustfft::{num_complex::Complex, FftPlanner};
use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpectralPeak {
    pub frequency: f64,
    pub bin: usize,
    /// Frequency resolution `1 / (n dt)`.
    pub bin_width: f64,
    pub magnitude: f64,
}

/// Largest non-DC component of the mean-removed signal. Returns `None` for
/// fewer than four samples or a constant signal.
pub fn dominant_frequency(signal: &[f64], dt: f64) -> Option<SpectralPeak> {
    let n = signal.len();
    if n < 4 || !(dt > 0.0) {
        return None;
    }
    let mean = signal.iter().sum::<f64>() / n as f64;
    let mut buf: Vec<Complex<f64>> = signal.iter().map(|x| Complex::new(x - mean, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let (bin, magnitude) = buf[1..=n / 2]
        .iter()
        .enumerate()
        .map(|(i, c)| (i + 1, c.norm()))
        .fold((0, 0.0), |best, x| if x.1 > best.1 { x } else { best });
    if magnitude == 0.0 {
        return None;
    }
    let bin_width = 1.0 / (n as f64 * dt);
    Some(SpectralPeak {
        frequency: bin as f64 * bin_width,
        bin,
        bin_width,
        magnitude,
    })
}
