use std::f64::consts::PI;
use std::str::FromStr;

use levenberg_marquardt::{LeastSquaresProblem, LevenbergMarquardt};
use nalgebra::storage::Owned;
use nalgebra::{DMatrix, Dyn, OMatrix, OVector, Vector4, U4};
use serde::{Deserialize, Serialize};

use super::Psd;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LineModel {
    /// `offset + (A/π)(Γ/2)/((f−f₀)² + (Γ/2)²)`.
    Lorentzian,
    /// `offset + A(2Γf₀²/π)/((f₀²−f²)² + Γ²f²)`, the spectrum of a damped
    /// oscillator driven by white force noise. Also has area `A`.
    ThermalOscillator,
}

impl FromStr for LineModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "lorentzian" => Ok(LineModel::Lorentzian),
            "thermal_oscillator" | "oscillator" => Ok(LineModel::ThermalOscillator),
            other => Err(Error::validation(format!("unknown line model '{other}'"))),
        }
    }
}

impl LineModel {
    /// Unit-area line shape.
    pub fn shape(self, f: f64, f0: f64, width: f64) -> f64 {
        match self {
            LineModel::Lorentzian => {
                let h = width / 2.0;
                h / (PI * ((f - f0).powi(2) + h * h))
            }
            LineModel::ThermalOscillator => {
                let e = (f0 * f0 - f * f).powi(2) + width * width * f * f;
                2.0 * width * f0 * f0 / (PI * e)
            }
        }
    }

    /// Shape with its derivatives with respect to `f₀` and `Γ`.
    fn shape_and_grad(self, f: f64, f0: f64, width: f64) -> (f64, f64, f64) {
        match self {
            LineModel::Lorentzian => {
                let d = (f - f0).powi(2) + width * width / 4.0;
                let s = width / (2.0 * PI * d);
                let ds_df0 = width * (f - f0) / (PI * d * d);
                let ds_dw = 1.0 / (2.0 * PI * d) - width * width / (4.0 * PI * d * d);
                (s, ds_df0, ds_dw)
            }
            LineModel::ThermalOscillator => {
                let x = f0 * f0 - f * f;
                let e = x * x + width * width * f * f;
                let num = 2.0 * width * f0 * f0 / PI;
                let s = num / e;
                let ds_df0 = 4.0 * width * f0 / (PI * e) - num * 4.0 * x * f0 / (e * e);
                let ds_dw = 2.0 * f0 * f0 / (PI * e) - num * 2.0 * width * f * f / (e * e);
                (s, ds_df0, ds_dw)
            }
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            LineModel::Lorentzian => "lorentzian",
            LineModel::ThermalOscillator => "thermal_oscillator",
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct FitUncertainty {
    pub center_frequency: f64,
    pub linewidth: f64,
    pub area: f64,
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LorentzianFit {
    /// Hz.
    pub center_frequency: f64,
    /// Full width at half maximum in Hz, `γ/2π`.
    pub linewidth: f64,
    /// V².
    pub area: f64,
    /// V²/Hz.
    pub offset: f64,
    pub uncertainties: FitUncertainty,
    pub model: LineModel,
    pub reduced_chi_squared: f64,
    pub n_points: usize,
    pub window: [f64; 2],
}

impl LorentzianFit {
    /// Energy damping rate `γ = 2π·linewidth` in 1/s.
    pub fn gamma(&self) -> f64 {
        2.0 * PI * self.linewidth
    }

    pub fn omega0(&self) -> f64 {
        2.0 * PI * self.center_frequency
    }

    pub fn evaluate(&self, f: f64) -> f64 {
        self.offset + self.area * self.model.shape(f, self.center_frequency, self.linewidth)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// `None` fits both models and keeps the better one.
    pub model: Option<LineModel>,
    /// Reweighting passes with `σ = model/√K`.
    pub passes: usize,
    pub multi_peak_check: bool,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions {
            model: None,
            passes: 3,
            multi_peak_check: true,
        }
    }
}

struct LineProblem<'a> {
    f: &'a [f64],
    s: &'a [f64],
    sigma: Vec<f64>,
    model: LineModel,
    area_scale: f64,
    level_scale: f64,
    p: Vector4<f64>,
}

impl LineProblem<'_> {
    fn unpack(&self, p: &Vector4<f64>) -> (f64, f64, f64, f64) {
        (
            p[0],
            p[1].exp(),
            p[2].exp() * self.area_scale,
            p[3] * self.level_scale,
        )
    }

    fn model_at(&self, p: &Vector4<f64>, f: f64) -> f64 {
        let (f0, w, a, o) = self.unpack(p);
        o + a * self.model.shape(f, f0, w)
    }

    fn chi2(&self) -> f64 {
        self.f
            .iter()
            .zip(self.s)
            .zip(&self.sigma)
            .map(|((&f, &s), &sg)| ((self.model_at(&self.p, f) - s) / sg).powi(2))
            .sum()
    }
}

impl LeastSquaresProblem<f64, Dyn, U4> for LineProblem<'_> {
    type ResidualStorage = Owned<f64, Dyn>;
    type JacobianStorage = Owned<f64, Dyn, U4>;
    type ParameterStorage = Owned<f64, U4>;

    fn set_params(&mut self, x: &Vector4<f64>) {
        self.p = *x;
    }

    fn params(&self) -> Vector4<f64> {
        self.p
    }

    fn residuals(&self) -> Option<OVector<f64, Dyn>> {
        let r = OVector::<f64, Dyn>::from_iterator(
            self.f.len(),
            self.f
                .iter()
                .zip(self.s)
                .zip(&self.sigma)
                .map(|((&f, &s), &sg)| (self.model_at(&self.p, f) - s) / sg),
        );
        r.iter().all(|x| x.is_finite()).then_some(r)
    }

    fn jacobian(&self) -> Option<OMatrix<f64, Dyn, U4>> {
        let (f0, w, a, _) = self.unpack(&self.p);
        let mut j = OMatrix::<f64, Dyn, U4>::zeros(self.f.len());
        for (i, (&f, &sg)) in self.f.iter().zip(&self.sigma).enumerate() {
            let (s, ds_df0, ds_dw) = self.model.shape_and_grad(f, f0, w);
            j[(i, 0)] = a * ds_df0 / sg;
            j[(i, 1)] = a * ds_dw * w / sg;
            j[(i, 2)] = a * s / sg;
            j[(i, 3)] = self.level_scale / sg;
        }
        j.iter().all(|x| x.is_finite()).then_some(j)
    }
}

/// Area of the line above `offset` by direct summation of the PSD bins.
pub fn numeric_area(psd: &Psd, low: f64, high: f64, offset: f64) -> f64 {
    let df = psd.bin_width();
    psd.values[psd.index_range(low, high)]
        .iter()
        .map(|v| (v - offset) * df)
        .sum()
}

/// Locates the strongest line in `[low, high]` and returns a fit window of
/// `widths` linewidths on either side of it.
///
/// The width is the interquartile range of the floor-subtracted cumulative
/// area, which equals the FWHM for a Lorentzian and is far less sensitive to
/// bin noise than walking down to half maximum.
pub fn find_mode_window(psd: &Psd, low: f64, high: f64, widths: f64) -> Result<(f64, f64)> {
    let r = psd.index_range(low, high);
    if r.len() < 3 {
        return Err(Error::ModeNotFound { low, high });
    }
    let floor = psd.median_in(low, high);
    let vals = &psd.values[r.clone()];
    let peak = vals.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !(peak > 4.0 * floor) {
        return Err(Error::ModeNotFound { low, high });
    }
    let mut cum = Vec::with_capacity(vals.len());
    let mut acc = 0.0;
    for v in vals {
        acc += v - floor;
        cum.push(acc);
    }
    let quantile = |q: f64| {
        r.start
            + cum
                .iter()
                .position(|c| *c >= q * acc)
                .unwrap_or(cum.len() - 1)
    };
    let (q1, mid, q3) = (quantile(0.25), quantile(0.5), quantile(0.75));
    let df = psd.bin_width();
    let fwhm = ((q3 - q1) as f64 * df).max(df);
    let half_width = (widths * fwhm).max(12.0 * df);
    let f0 = psd.frequencies[mid];
    Ok(((f0 - half_width).max(low), (f0 + half_width).min(high)))
}

/// Fits a single resonance in `[low, high]`, trying both line models and
/// keeping the one with the lower χ².
pub fn fit_lorentzian(psd: &Psd, low: f64, high: f64) -> Result<LorentzianFit> {
    fit_lorentzian_with(psd, low, high, &FitOptions::default())
}

/// Fits one specific line model.
pub fn fit_line(psd: &Psd, low: f64, high: f64, model: LineModel) -> Result<LorentzianFit> {
    fit_lorentzian_with(
        psd,
        low,
        high,
        &FitOptions {
            model: Some(model),
            ..FitOptions::default()
        },
    )
}

pub fn fit_lorentzian_with(
    psd: &Psd,
    low: f64,
    high: f64,
    opts: &FitOptions,
) -> Result<LorentzianFit> {
    let range = psd.index_range(low, high);
    if range.len() < 6 {
        return Err(Error::ModeNotFound { low, high });
    }
    let f = &psd.frequencies[range.clone()];
    let s = &psd.values[range];
    if s.iter().any(|v| !v.is_finite() || *v < 0.0) {
        return Err(Error::validation("PSD values must be finite and >= 0"));
    }
    let fits: Vec<Result<(LorentzianFit, f64)>> = match opts.model {
        Some(m) => vec![fit_model(psd, f, s, m, opts.passes)],
        None => [LineModel::Lorentzian, LineModel::ThermalOscillator]
            .into_iter()
            .map(|m| fit_model(psd, f, s, m, opts.passes))
            .collect(),
    };
    let mut best: Option<(LorentzianFit, f64)> = None;
    let mut last_err = None;
    for r in fits {
        match r {
            Ok((fit, chi2)) => {
                if best.as_ref().is_none_or(|(_, c)| chi2 < *c) {
                    best = Some((fit, chi2));
                }
            }
            Err(e) => last_err = Some(e),
        }
    }
    let (mut fit, _) = match best {
        Some(b) => b,
        None => return Err(last_err.unwrap_or_else(|| Error::Fit("no model converged".into()))),
    };
    fit.window = [low, high];
    if opts.multi_peak_check {
        check_single_peak(psd, f, s, &fit)?;
    }
    Ok(fit)
}

fn fit_model(
    psd: &Psd,
    f: &[f64],
    s: &[f64],
    model: LineModel,
    passes: usize,
) -> Result<(LorentzianFit, f64)> {
    let df = psd.bin_width();
    let n = f.len();
    let (imax, &smax) = s
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty window");
    if !(smax > 0.0) {
        return Err(Error::ModeNotFound {
            low: f[0],
            high: f[n - 1],
        });
    }

    // Floor from the quieter edge, area by summation, width from area/height.
    let edge = (n / 8).max(2);
    let med = |v: &[f64]| {
        let mut v = v.to_vec();
        v.sort_by(f64::total_cmp);
        v[v.len() / 2]
    };
    let offset0 = med(&s[..edge]).min(med(&s[n - edge..]));
    let height = (smax - offset0).max(smax * 1e-3);
    let area0 = (s.iter().map(|v| v - offset0).sum::<f64>() * df).max(height * df);
    let width0 = (2.0 * area0 / (PI * height)).clamp(0.5 * df, f[n - 1] - f[0]);

    let level_scale = smax;
    let area_scale = area0;
    let mut prob = LineProblem {
        f,
        s,
        sigma: vec![level_scale; n],
        model,
        area_scale,
        level_scale,
        p: Vector4::new(f[imax], width0.ln(), 0.0, offset0 / level_scale),
    };
    let lm = LevenbergMarquardt::new().with_patience(400);
    let k = psd.n_averages.max(1) as f64;
    for pass in 0..passes.max(1) + 1 {
        if pass > 0 {
            let p = prob.p;
            let floor = level_scale * 1e-12;
            prob.sigma = f
                .iter()
                .map(|&fi| (prob.model_at(&p, fi).abs() / k.sqrt()).max(floor))
                .collect();
        }
        let (next, report) = lm.minimize(prob);
        prob = next;
        if !report.termination.was_successful()
            && !matches!(
                report.termination,
                levenberg_marquardt::TerminationReason::LostPatience
            )
        {
            return Err(Error::Fit(format!(
                "{} fit did not converge: {:?}",
                model.label(),
                report.termination
            )));
        }
    }

    let (f0, width, area, offset) = prob.unpack(&prob.p);
    if !(width > 0.0 && area > 0.0 && f0.is_finite()) || f0 < f[0] || f0 > f[n - 1] {
        return Err(Error::Fit(format!(
            "{} fit left the window or gave non-positive width/area",
            model.label()
        )));
    }
    let chi2 = prob.chi2();
    let dof = (n as f64 - 4.0).max(1.0);
    let red = chi2 / dof;
    let unc = covariance(&prob)
        .map(|c| {
            let scale = red.max(1e-300);
            FitUncertainty {
                center_frequency: (c[(0, 0)] * scale).sqrt(),
                linewidth: width * (c[(1, 1)] * scale).sqrt(),
                area: area * (c[(2, 2)] * scale).sqrt(),
                offset: level_scale * (c[(3, 3)] * scale).sqrt(),
            }
        })
        .unwrap_or(FitUncertainty {
            center_frequency: f64::INFINITY,
            linewidth: f64::INFINITY,
            area: f64::INFINITY,
            offset: f64::INFINITY,
        });
    Ok((
        LorentzianFit {
            center_frequency: f0,
            linewidth: width,
            area,
            offset,
            uncertainties: unc,
            model,
            reduced_chi_squared: red,
            n_points: n,
            window: [f[0], f[n - 1]],
        },
        chi2,
    ))
}

fn covariance(prob: &LineProblem<'_>) -> Option<DMatrix<f64>> {
    let j = prob.jacobian()?;
    let jtj = j.transpose() * &j;
    let dm = DMatrix::from_iterator(4, 4, jtj.iter().copied());
    dm.try_inverse()
}

/// Rejects windows whose residuals show a second, unmodelled peak: a run of
/// bins well above the model with enough excess area to be a resonance.
fn check_single_peak(psd: &Psd, f: &[f64], s: &[f64], fit: &LorentzianFit) -> Result<()> {
    let df = psd.bin_width();
    // resolution-limited lines leave window-shaped residuals, so skip them
    if fit.linewidth < 2.0 * df {
        return Ok(());
    }
    let k = psd.n_averages.max(1) as f64;
    let mut best: Option<(f64, f64)> = None;
    let mut i = 0;
    while i < f.len() {
        let m = fit.evaluate(f[i]).max(f64::MIN_POSITIVE);
        let z = (s[i] - m) / (m / k.sqrt());
        if z <= 1.0 {
            i += 1;
            continue;
        }
        let (mut zsum, mut excess, mut len) = (0.0, 0.0, 0usize);
        let (mut peak_f, mut peak_z) = (f[i], f64::MIN);
        while i < f.len() {
            let m = fit.evaluate(f[i]).max(f64::MIN_POSITIVE);
            let z = (s[i] - m) / (m / k.sqrt());
            if z <= 1.0 {
                break;
            }
            zsum += z;
            excess += (s[i] - m) * df;
            len += 1;
            if z > peak_z {
                peak_z = z;
                peak_f = f[i];
            }
            i += 1;
        }
        let significance = zsum / (len as f64).sqrt();
        if significance > 8.0 && excess > 0.05 * fit.area && best.is_none_or(|(_, e)| excess > e) {
            best = Some((peak_f, excess));
        }
    }
    match best {
        Some((frequency, _)) => Err(Error::MultiplePeaks { frequency }),
        None => Ok(()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(model: LineModel, f0: f64, width: f64, area: f64, offset: f64) -> Psd {
        let df = 0.25;
        let frequencies: Vec<f64> = (0..8000).map(|i| i as f64 * df).collect();
        let values = frequencies
            .iter()
            .map(|&f| offset + area * model.shape(f, f0, width))
            .collect();
        Psd {
            frequencies,
            values,
            resolution_bandwidth: 1.5 * df,
            n_averages: 16,
        }
    }

    #[test]
    fn noise_free_lorentzian_recovered() {
        let psd = synthetic(LineModel::Lorentzian, 1000.0, 3.0, 2e-6, 1e-10);
        let fit = fit_line(&psd, 950.0, 1050.0, LineModel::Lorentzian).unwrap();
        assert!((fit.center_frequency / 1000.0 - 1.0).abs() < 1e-6);
        assert!((fit.linewidth / 3.0 - 1.0).abs() < 1e-6);
        assert!((fit.area / 2e-6 - 1.0).abs() < 1e-6);
    }

    #[test]
    fn model_selection_prefers_true_shape() {
        let psd = synthetic(LineModel::ThermalOscillator, 200.0, 30.0, 1.0, 1e-5);
        let fit = fit_lorentzian(&psd, 60.0, 400.0).unwrap();
        assert_eq!(fit.model, LineModel::ThermalOscillator);
        assert!((fit.linewidth / 30.0 - 1.0).abs() < 1e-4);
    }

    #[test]
    fn analytic_gradient_matches_difference() {
        for model in [LineModel::Lorentzian, LineModel::ThermalOscillator] {
            let (f, f0, w) = (101.0, 100.0, 2.5);
            let (_, d0, dw) = model.shape_and_grad(f, f0, w);
            let h = 1e-6;
            let n0 = (model.shape(f, f0 + h, w) - model.shape(f, f0 - h, w)) / (2.0 * h);
            let nw = (model.shape(f, f0, w + h) - model.shape(f, f0, w - h)) / (2.0 * h);
            assert!((d0 - n0).abs() <= 1e-6 * n0.abs().max(1e-12));
            assert!((dw - nw).abs() <= 1e-6 * nw.abs().max(1e-12));
        }
    }
}
