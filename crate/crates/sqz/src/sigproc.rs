//! Delay-axis low-pass filtering of homodyne records and PSD/RIN noise
//! analysis of shot streams.
//!
//! The filter works in the discrete Fourier domain of the unpadded trace, so
//! it is an exact linear projection: applying it twice changes nothing, and
//! the DC component passes through untouched.

use crate::tomography::HomodyneDataset;
use crate::{Error, Result};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;

/// Default low-pass cutoff in units of the carrier frequency. Slightly above
/// one keeps the full fundamental line under finite-window leakage.
pub const DEFAULT_CUTOFF_FACTOR: f64 = 1.2;

/// Fraction of samples at each end of a filtered trace considered
/// edge-affected by windowing leakage.
pub const EDGE_FRACTION: f64 = 0.05;

/// Number of leading (and trailing) samples flagged as edge-affected.
pub fn edge_affected_count(n: usize) -> usize {
    (n as f64 * EDGE_FRACTION).ceil() as usize
}

/// Spectral mask edge shape for the delay-axis filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FilterEdge {
    /// Binary mask; keeps the filter an exact projection.
    Hard,
    /// Raised-cosine rolloff of the given half-width (in units of the
    /// carrier frequency) centred on the cutoff. Smoother in time but no
    /// longer idempotent.
    Cosine { width_factor: f64 },
}

/// Uniformly sampled real signal along the pump-probe delay axis.
#[derive(Debug, Clone)]
pub struct DelayTrace {
    /// Delay samples in femtoseconds, uniformly spaced.
    pub tau_grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl DelayTrace {
    /// Uniform grid spacing in femtoseconds.
    pub fn step(&self) -> Result<f64> {
        if self.tau_grid.len() < 2 {
            return Err(Error::InvalidInput(
                "delay trace needs at least 2 samples".into(),
            ));
        }
        let dt = self.tau_grid[1] - self.tau_grid[0];
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "delay step must be positive, got {dt}"
            )));
        }
        for w in self.tau_grid.windows(2) {
            if ((w[1] - w[0]) - dt).abs() > 1e-9 * dt {
                return Err(Error::InvalidInput(format!(
                    "delay grid is not uniform: step {} vs {dt}",
                    w[1] - w[0]
                )));
            }
        }
        Ok(dt)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.len() != self.tau_grid.len() {
            return Err(Error::InvalidInput(format!(
                "trace has {} values for {} delays",
                self.values.len(),
                self.tau_grid.len()
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("non-finite trace value".into()));
        }
        self.step().map(|_| ())
    }
}

/// Spectral mask over the DFT bins of an n-point trace with step dt.
fn build_mask(n: usize, dt: f64, omega0: f64, cutoff_factor: f64, edge: FilterEdge) -> Vec<f64> {
    let cutoff = cutoff_factor * omega0;
    let domega = 2.0 * std::f64::consts::PI / (n as f64 * dt);
    (0..n)
        .map(|k| {
            let idx = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
            let omega = (idx * domega).abs();
            match edge {
                FilterEdge::Hard => {
                    if omega <= cutoff {
                        1.0
                    } else {
                        0.0
                    }
                }
                FilterEdge::Cosine { width_factor } => {
                    let width = width_factor.abs() * omega0;
                    if width == 0.0 || omega <= cutoff - width {
                        if omega <= cutoff {
                            1.0
                        } else {
                            0.0
                        }
                    } else if omega >= cutoff + width {
                        0.0
                    } else {
                        0.5 * (1.0 + ((cutoff - omega) * std::f64::consts::FRAC_PI_2 / width).sin())
                    }
                }
            }
        })
        .collect()
}

fn apply_mask(
    values: &[f64],
    mask: &[f64],
    forward: &dyn rustfft::Fft<f64>,
    inverse: &dyn rustfft::Fft<f64>,
) -> Vec<f64> {
    let n = values.len();
    let mut buf: Vec<Complex<f64>> = values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    forward.process(&mut buf);
    for (b, &m) in buf.iter_mut().zip(mask.iter()) {
        *b *= m;
    }
    inverse.process(&mut buf);
    buf.into_iter().map(|z| z.re / n as f64).collect()
}

fn check_resolution(dt: f64, omega0: f64) -> Result<()> {
    if !(omega0 > 0.0 && omega0.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "carrier frequency must be positive, got {omega0}"
        )));
    }
    let period = 2.0 * std::f64::consts::PI / omega0;
    if dt > period / 4.0 * (1.0 + 1e-12) {
        return Err(Error::InvalidInput(format!(
            "delay step {dt} too coarse: need at least 4 samples per {period} fs cycle"
        )));
    }
    Ok(())
}

/// Low-pass filters a delay trace, zeroing DFT components with
/// `|omega| > cutoff_factor * omega0` (`omega0` in rad/fs).
pub fn nrm_filter(trace: &DelayTrace, omega0: f64, cutoff_factor: f64) -> Result<DelayTrace> {
    nrm_filter_shaped(trace, omega0, cutoff_factor, FilterEdge::Hard)
}

/// Low-pass filter with a selectable mask edge. The hard edge is an exact
/// projection; the cosine edge trades that for smaller time-domain ringing.
pub fn nrm_filter_shaped(
    trace: &DelayTrace,
    omega0: f64,
    cutoff_factor: f64,
    edge: FilterEdge,
) -> Result<DelayTrace> {
    trace.validate()?;
    let dt = trace.step()?;
    check_resolution(dt, omega0)?;
    if !(cutoff_factor > 0.0 && cutoff_factor.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "cutoff factor must be positive, got {cutoff_factor}"
        )));
    }
    let n = trace.values.len();
    let mask = build_mask(n, dt, omega0, cutoff_factor, edge);
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(n);
    let inverse = planner.plan_fft_inverse(n);
    Ok(DelayTrace {
        tau_grid: trace.tau_grid.clone(),
        values: apply_mask(&trace.values, &mask, forward.as_ref(), inverse.as_ref()),
    })
}

/// Applies the delay-axis low-pass filter to every (phase, mode, shot) series
/// of a dataset, in parallel over (phase, mode) slices.
pub fn filter_dataset(
    dataset: &HomodyneDataset,
    omega0: f64,
    cutoff_factor: f64,
    edge: FilterEdge,
) -> Result<HomodyneDataset> {
    dataset.validate()?;
    let trace_probe = DelayTrace {
        tau_grid: dataset.tau_grid.clone(),
        values: vec![0.0; dataset.tau_grid.len()],
    };
    let dt = trace_probe.step()?;
    check_resolution(dt, omega0)?;
    let n_tau = dataset.tau_grid.len();
    let n_phi = dataset.phi_grid.len();
    let n_modes = dataset.mode_labels.len();
    let n_shots = dataset.n_shots;
    let mask = build_mask(n_tau, dt, omega0, cutoff_factor, edge);
    let mut planner = FftPlanner::new();
    let forward = planner.plan_fft_forward(n_tau);
    let inverse = planner.plan_fft_inverse(n_tau);

    let slices: Vec<Vec<f64>> = (0..n_phi * n_modes)
        .into_par_iter()
        .map(|slice| {
            let ip = slice / n_modes;
            let im = slice % n_modes;
            let mut out = vec![0.0; n_tau * n_shots];
            let mut series = vec![0.0; n_tau];
            for s in 0..n_shots {
                for it in 0..n_tau {
                    series[it] = dataset.samples[[it, ip, im, s]];
                }
                let filtered = apply_mask(&series, &mask, forward.as_ref(), inverse.as_ref());
                for it in 0..n_tau {
                    out[it * n_shots + s] = filtered[it];
                }
            }
            out
        })
        .collect();

    let mut samples = dataset.samples.clone();
    for (slice, values) in slices.iter().enumerate() {
        let ip = slice / n_modes;
        let im = slice % n_modes;
        for it in 0..n_tau {
            for s in 0..n_shots {
                samples[[it, ip, im, s]] = values[it * n_shots + s];
            }
        }
    }
    Ok(HomodyneDataset {
        samples,
        ..dataset.clone()
    })
}

/// Welch power spectral density with RIN per frequency bin.
#[derive(Debug, Clone)]
pub struct SpectrumEstimate {
    /// Analysis frequencies from 0 to Nyquist, in the units of `sample_rate`.
    pub freqs: Vec<f64>,
    /// One-sided power spectral density (power per unit frequency).
    pub psd: Vec<f64>,
    /// Relative intensity noise, `10 log10(psd / mean^2)`, per bin.
    pub rin_db: Vec<f64>,
    /// Mean of the analyzed samples, the RIN reference level.
    pub mean: f64,
    /// Estimator parameters, echoed for output manifests.
    pub segment_len: usize,
    pub overlap: f64,
    pub taper: &'static str,
}

/// Welch segment length used by [`psd`].
pub const PSD_SEGMENT_LEN: usize = 256;

/// Averaged-periodogram spectral estimate of a shot stream.
///
/// The stream mean (the RIN reference) is removed once up front; segments of
/// 256 samples with 50% overlap are tapered with a periodic Hann window and
/// averaged. The one-sided density is normalized so that its integral matches
/// the time-domain variance.
pub fn psd(values: &[f64], sample_rate: f64) -> Result<SpectrumEstimate> {
    let seg = PSD_SEGMENT_LEN;
    if values.len() < seg {
        return Err(Error::InvalidInput(format!(
            "need at least {seg} samples, got {}",
            values.len()
        )));
    }
    if !(sample_rate > 0.0 && sample_rate.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "sample rate must be positive, got {sample_rate}"
        )));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite sample in shot stream".into()));
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    if mean.abs() < 1e-300 {
        return Err(Error::InvalidInput(
            "RIN undefined: stream mean is zero".into(),
        ));
    }

    let window: Vec<f64> = (0..seg)
        .map(|k| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * k as f64 / seg as f64).cos()))
        .collect();
    let win_power: f64 = window.iter().map(|w| w * w).sum();
    let hop = seg / 2;
    let n_segments = (values.len() - seg) / hop + 1;

    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(seg);
    let n_bins = seg / 2 + 1;
    let mut acc = vec![0.0f64; n_bins];
    let mut buf = vec![Complex::new(0.0, 0.0); seg];
    for s in 0..n_segments {
        let start = s * hop;
        let chunk = &values[start..start + seg];
        for (k, b) in buf.iter_mut().enumerate() {
            *b = Complex::new((chunk[k] - mean) * window[k], 0.0);
        }
        fft.process(&mut buf);
        for (k, slot) in acc.iter_mut().enumerate() {
            *slot += buf[k].norm_sqr();
        }
    }
    let scale = 1.0 / (sample_rate * win_power * n_segments as f64);
    let mut psd = Vec::with_capacity(n_bins);
    for (k, &a) in acc.iter().enumerate() {
        // one-sided: double everything except DC and Nyquist
        let one_sided = if k == 0 || k == seg / 2 { 1.0 } else { 2.0 };
        psd.push(a * scale * one_sided);
    }
    let freqs: Vec<f64> = (0..n_bins)
        .map(|k| k as f64 * sample_rate / seg as f64)
        .collect();
    let rin_db: Vec<f64> = psd.iter().map(|&p| 10.0 * (p / (mean * mean)).log10()).collect();
    Ok(SpectrumEstimate {
        freqs,
        psd,
        rin_db,
        mean,
        segment_len: seg,
        overlap: 0.5,
        taper: "hann",
    })
}

impl SpectrumEstimate {
    pub fn nyquist(&self) -> f64 {
        *self.freqs.last().unwrap()
    }

    /// Integrated PSD over a frequency band (inclusive bin selection).
    pub fn band_power(&self, f_lo: f64, f_hi: f64) -> Result<f64> {
        let df = self.freqs[1] - self.freqs[0];
        let mut total = 0.0;
        let mut hit = false;
        for (k, &f) in self.freqs.iter().enumerate() {
            if f >= f_lo && f <= f_hi {
                total += self.psd[k] * df;
                hit = true;
            }
        }
        if !hit {
            return Err(Error::InvalidInput(format!(
                "band [{f_lo}, {f_hi}] contains no analysis bins"
            )));
        }
        Ok(total)
    }
}

/// Mean RIN over a frequency band in dB.
pub fn band_average_rin(spectrum: &SpectrumEstimate, f_lo: f64, f_hi: f64) -> Result<f64> {
    if !(f_lo.is_finite() && f_hi.is_finite()) || f_lo > f_hi {
        return Err(Error::InvalidInput(format!("bad band [{f_lo}, {f_hi}]")));
    }
    if f_lo < 0.0 || f_hi > spectrum.nyquist() * (1.0 + 1e-12) {
        return Err(Error::InvalidInput(format!(
            "band [{f_lo}, {f_hi}] outside [0, {}]",
            spectrum.nyquist()
        )));
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for (k, &f) in spectrum.freqs.iter().enumerate() {
        if f >= f_lo && f <= f_hi {
            sum += spectrum.rin_db[k];
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::InvalidInput(format!(
            "band [{f_lo}, {f_hi}] contains no analysis bins"
        )));
    }
    Ok(sum / count as f64)
}
