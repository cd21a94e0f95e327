use std::f64::consts::PI;
use std::str::FromStr;

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use super::{Psd, VoltageTrace};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Rectangular,
    #[default]
    Hann,
    BlackmanHarris,
}

impl Window {
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        // periodic windows, which keep segment overlaps evenly weighted
        let nf = n as f64;
        (0..n)
            .map(|i| {
                let x = 2.0 * PI * i as f64 / nf;
                match self {
                    Window::Rectangular => 1.0,
                    Window::Hann => 0.5 - 0.5 * x.cos(),
                    Window::BlackmanHarris => {
                        0.35875 - 0.48829 * x.cos() + 0.14128 * (2.0 * x).cos()
                            - 0.01168 * (3.0 * x).cos()
                    }
                }
            })
            .collect()
    }
}

impl FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "rect" | "rectangular" | "boxcar" => Ok(Window::Rectangular),
            "hann" | "hanning" => Ok(Window::Hann),
            "blackman_harris" | "blackmanharris" => Ok(Window::BlackmanHarris),
            other => Err(Error::validation(format!("unknown window '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WelchConfig {
    pub segment_length: usize,
    /// Fractional overlap in [0, 1).
    pub overlap: f64,
    pub window: Window,
}

impl WelchConfig {
    pub fn new(segment_length: usize) -> Self {
        WelchConfig {
            segment_length,
            overlap: 0.5,
            window: Window::Hann,
        }
    }

    /// Segment length giving roughly the requested bin width.
    pub fn for_bin_width(sample_rate: f64, bin_width: f64) -> Self {
        Self::new(((sample_rate / bin_width).round() as usize).max(2))
    }

    /// Longest segment that still yields `segments` averages at 50% overlap.
    pub fn for_segments(n_samples: usize, segments: usize) -> Self {
        let len = 2 * n_samples / (segments + 1);
        Self::new(len.max(2))
    }

    pub fn with_window(mut self, window: Window) -> Self {
        self.window = window;
        self
    }

    pub fn with_overlap(mut self, overlap: f64) -> Self {
        self.overlap = overlap;
        self
    }
}

/// Averaged modified periodogram with density scaling `2/(f_s Σw²)`. DC and
/// Nyquist bins are not doubled, so `Σ S Δf` equals the mean windowed power.
pub fn welch_psd(trace: &VoltageTrace, cfg: &WelchConfig) -> Result<Psd> {
    let n = cfg.segment_length;
    let available = trace.samples.len();
    if n > available {
        return Err(Error::SegmentTooLong {
            segment: n,
            available,
        });
    }
    if n < 2 {
        return Err(Error::validation("segment_length must be >= 2"));
    }
    if !(0.0..1.0).contains(&cfg.overlap) {
        return Err(Error::validation("overlap must lie in [0, 1)"));
    }
    if !(trace.sample_rate > 0.0) {
        return Err(Error::validation("sample_rate must be > 0"));
    }
    if trace.samples.iter().any(|x| !x.is_finite()) {
        return Err(Error::validation("trace contains non-finite samples"));
    }
    let fs = trace.sample_rate;
    let w = cfg.window.coefficients(n);
    let s1: f64 = w.iter().sum();
    let s2: f64 = w.iter().map(|x| x * x).sum();
    let step = ((n as f64 * (1.0 - cfg.overlap)).round() as usize).max(1);
    let n_bins = n / 2 + 1;

    let fft = FftPlanner::new().plan_fft_forward(n);
    let mut buf = vec![Complex::new(0.0, 0.0); n];
    let mut acc = vec![0.0; n_bins];
    let mut segments = 0usize;
    let mut start = 0;
    while start + n <= available {
        let seg = &trace.samples[start..start + n];
        let mean = seg.iter().sum::<f64>() / n as f64;
        for ((b, &x), &wi) in buf.iter_mut().zip(seg).zip(&w) {
            *b = Complex::new((x - mean) * wi, 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
        segments += 1;
        start += step;
    }

    let scale = 1.0 / (fs * s2 * segments as f64);
    let values: Vec<f64> = acc
        .iter()
        .enumerate()
        .map(|(k, &p)| {
            let edge = k == 0 || (n % 2 == 0 && k == n / 2);
            p * scale * if edge { 1.0 } else { 2.0 }
        })
        .collect();
    let df = fs / n as f64;
    Ok(Psd {
        frequencies: (0..n_bins).map(|k| k as f64 * df).collect(),
        values,
        resolution_bandwidth: fs * s2 / (s1 * s1),
        n_averages: segments,
    })
}
