//! Detection, spectral estimation, line fitting and volt-to-metre calibration.

mod detect;
mod fit;
mod welch;

use std::io::{BufRead, BufReader, BufWriter, Read, Write};

use serde::{Deserialize, Serialize};

use crate::constants::BOLTZMANN;
use crate::error::{Error, Result};

pub use detect::{record_detector, transduce, DecimatingDetector, DetectionConfig, Detector};
pub use fit::{
    find_mode_window, fit_line, fit_lorentzian, fit_lorentzian_with, numeric_area, FitOptions,
    FitUncertainty, LineModel, LorentzianFit,
};
pub use welch::{welch_psd, WelchConfig, Window};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VoltageTrace {
    pub sample_rate: f64,
    pub samples: Vec<f64>,
    pub label: String,
}

impl VoltageTrace {
    pub fn new(sample_rate: f64, samples: Vec<f64>, label: impl Into<String>) -> Self {
        VoltageTrace {
            sample_rate,
            samples,
            label: label.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn variance(&self) -> f64 {
        let n = self.samples.len() as f64;
        let mean = self.samples.iter().sum::<f64>() / n;
        self.samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n
    }

    /// Drops the first `seconds` of the trace.
    pub fn skip(&self, seconds: f64) -> VoltageTrace {
        let k = ((seconds * self.sample_rate).round() as usize).min(self.samples.len());
        VoltageTrace::new(
            self.sample_rate,
            self.samples[k..].to_vec(),
            self.label.clone(),
        )
    }
}

/// One-sided power spectral density.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Psd {
    /// Bin centres in Hz, ascending.
    pub frequencies: Vec<f64>,
    /// V²/Hz.
    pub values: Vec<f64>,
    /// Equivalent noise bandwidth of the window, Hz.
    pub resolution_bandwidth: f64,
    pub n_averages: usize,
}

impl Psd {
    pub fn bin_width(&self) -> f64 {
        if self.frequencies.len() > 1 {
            self.frequencies[1] - self.frequencies[0]
        } else {
            0.0
        }
    }

    /// Index range of the bins inside `[low, high]`.
    pub fn index_range(&self, low: f64, high: f64) -> std::ops::Range<usize> {
        let start = self.frequencies.partition_point(|&f| f < low);
        let end = self.frequencies.partition_point(|&f| f <= high);
        start..end.max(start)
    }

    /// `Σ S Δf` over `[low, high]`.
    pub fn integrate(&self, low: f64, high: f64) -> f64 {
        let df = self.bin_width();
        self.values[self.index_range(low, high)].iter().sum::<f64>() * df
    }

    pub fn total_power(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.bin_width()
    }

    /// Frequency and value of the largest bin in `[low, high]`.
    pub fn peak_in(&self, low: f64, high: f64) -> Option<(f64, f64)> {
        let r = self.index_range(low, high);
        let off = r.start;
        self.values[r]
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, &v)| (self.frequencies[off + i], v))
    }

    /// Median level in `[low, high]`, a robust noise-floor estimate.
    pub fn median_in(&self, low: f64, high: f64) -> f64 {
        let mut v: Vec<f64> = self.values[self.index_range(low, high)].to_vec();
        if v.is_empty() {
            return f64::NAN;
        }
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    }

    /// CSV with columns `frequency_hz,psd_v2_per_hz`.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = BufWriter::new(writer);
        writeln!(w, "frequency_hz,psd_v2_per_hz")?;
        for (f, s) in self.frequencies.iter().zip(&self.values) {
            writeln!(w, "{f:e},{s:e}")?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a CSV export. Resolution bandwidth and averages are not stored in
    /// the CSV, so they are passed in.
    pub fn read_csv<R: Read>(
        reader: R,
        resolution_bandwidth: f64,
        n_averages: usize,
    ) -> Result<Psd> {
        let mut frequencies = Vec::new();
        let mut values = Vec::new();
        let mut header = true;
        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line?;
            if line.starts_with('#') || line.trim().is_empty() {
                continue;
            }
            if std::mem::take(&mut header) {
                continue;
            }
            let mut it = line.split(',').map(|s| s.trim().parse::<f64>());
            match (it.next(), it.next()) {
                (Some(Ok(f)), Some(Ok(s))) => {
                    frequencies.push(f);
                    values.push(s);
                }
                _ => return Err(Error::Format(format!("bad PSD row at line {}", i + 1))),
            }
        }
        Ok(Psd {
            frequencies,
            values,
            resolution_bandwidth,
            n_averages,
        })
    }
}

/// Volt-to-metre conversion factor from the equipartition theorem,
/// `S² = k_B T / (m ω² ⟨V²⟩)`.
pub fn calibrate_conversion(
    measured_variance: f64,
    temperature: f64,
    mass: f64,
    omega: f64,
) -> Result<f64> {
    for (name, x) in [
        ("measured_variance", measured_variance),
        ("temperature", temperature),
        ("mass", mass),
        ("omega", omega),
    ] {
        if !(x > 0.0 && x.is_finite()) {
            return Err(Error::validation(format!("{name} must be > 0, got {x}")));
        }
    }
    Ok((BOLTZMANN * temperature / (mass * omega * omega * measured_variance)).sqrt())
}
