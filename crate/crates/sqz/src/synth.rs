//! Synthetic homodyne data: shot-resolved quadrature sampling from known
//! Gaussian or Kerr states, with a simple detector model (electronic noise,
//! deterministic delay-axis contamination, LO calibration scale).
//!
//! Sampled marginals follow the convention `X_phi = X cos(phi) + P sin(phi)`;
//! for a Fock-basis pure state with amplitudes `c_n` the marginal density at
//! LO phase `phi` is `|sum_n c_n e^{-i n phi} psi_n(x)|^2` with
//! harmonic-oscillator eigenfunctions `psi_n` (vacuum variance 1/2).

use crate::fock::{CoherentSpec, KerrCoupling};
use crate::tomography::HomodyneDataset;
use crate::util::{kerr_amplitudes, oscillator_eigenfunctions, stream_rng};
use crate::{Error, Result};
use ndarray::Array4;
use num_complex::Complex64;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;

/// Nodes in the tabulated marginal used for inverse-CDF sampling.
pub const CDF_TABLE_POINTS: usize = 4096;

/// Speed of light in vacuum, m/s.
const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Optical carrier period in femtoseconds for a wavelength in nanometres.
pub fn optical_period_fs(wavelength_nm: f64) -> f64 {
    wavelength_nm * 1e-9 / SPEED_OF_LIGHT * 1e15
}

/// State being synthesized, shared by every mode label.
#[derive(Debug, Clone)]
pub enum StateKind {
    /// Rotated Gaussian with variances `(v1, v2)` along axes at `theta` and
    /// centre `(d1, d2)` in the rotated frame.
    Gaussian {
        v1: f64,
        v2: f64,
        theta: f64,
        d1: f64,
        d2: f64,
    },
    /// Coherent state evolved under a single-mode Kerr phase, truncated at
    /// Fock occupation `nmax`.
    Kerr {
        spec: CoherentSpec,
        coupling: KerrCoupling,
        nmax: usize,
    },
}

/// Full description of the synthetic state, including an optional tabulated
/// delay dependence of the Kerr phase.
#[derive(Debug, Clone)]
pub struct StateSpec {
    pub kind: StateKind,
    /// Tabulated `(tau, chi_bar)` pairs; when present, every requested delay
    /// must match a table entry. Ignored for Gaussian states.
    pub chi_of_tau: Option<Vec<(f64, f64)>>,
}

impl StateSpec {
    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            StateKind::Gaussian { v1, v2, theta, d1, d2 } => {
                for (v, name) in [(v1, "v1"), (v2, "v2")] {
                    if !(v.is_finite() && *v > 0.0) {
                        return Err(Error::InvalidInput(format!(
                            "gaussian variance {name} must be positive, got {v}"
                        )));
                    }
                }
                if v1 * v2 < 0.25 - 1e-12 {
                    return Err(Error::InvalidInput(format!(
                        "gaussian variances v1*v2 = {} violate the uncertainty bound 1/4",
                        v1 * v2
                    )));
                }
                for (x, name) in [(theta, "theta"), (d1, "d1"), (d2, "d2")] {
                    if !x.is_finite() {
                        return Err(Error::InvalidInput(format!("non-finite {name}")));
                    }
                }
            }
            StateKind::Kerr { spec, nmax, .. } => {
                spec.validate()?;
                let floor = spec.n_mean + 5.0 * spec.n_mean.sqrt();
                if (*nmax as f64) < floor {
                    return Err(Error::InvalidInput(format!(
                        "nmax = {nmax} too small for mean occupation {}; need at least {}",
                        spec.n_mean,
                        floor.ceil()
                    )));
                }
            }
        }
        if let Some(table) = &self.chi_of_tau {
            if table.is_empty() {
                return Err(Error::InvalidInput("empty chi_of_tau table".into()));
            }
            if table.iter().any(|(t, c)| !t.is_finite() || !c.is_finite()) {
                return Err(Error::InvalidInput("non-finite chi_of_tau entry".into()));
            }
        }
        Ok(())
    }

    /// Kerr phase at a requested delay: table lookup when a table is present,
    /// otherwise the constant coupling.
    fn chi_at(&self, tau: f64) -> Result<f64> {
        let StateKind::Kerr { coupling, .. } = &self.kind else {
            return Ok(0.0);
        };
        match &self.chi_of_tau {
            None => Ok(coupling.chi_bar),
            Some(table) => {
                let tol = 1e-9 * tau.abs().max(1.0);
                table
                    .iter()
                    .find(|(t, _)| (t - tau).abs() <= tol)
                    .map(|(_, c)| *c)
                    .ok_or_else(|| {
                        Error::InvalidInput(format!(
                            "chi_of_tau table has no entry for delay {tau}"
                        ))
                    })
            }
        }
    }
}

/// Detector imperfections applied after ideal sampling, in quadrature units.
#[derive(Debug, Clone, Copy)]
pub struct DetectorModel {
    /// Standard deviation of additive Gaussian electronic noise per shot.
    pub electronic_noise_sd: f64,
    /// Amplitude of a deterministic delay-axis oscillation added to every shot.
    pub hf_amplitude: f64,
    /// Frequency of that oscillation in multiples of the carrier frequency.
    pub hf_harmonic: f64,
    /// Carrier period in femtoseconds defining the harmonic frequency scale.
    pub carrier_period_fs: f64,
    /// LO-to-signal power ratio; raw values scale as its square root.
    pub lo_ratio: f64,
}

impl Default for DetectorModel {
    fn default() -> Self {
        DetectorModel {
            electronic_noise_sd: 0.0,
            hf_amplitude: 0.0,
            hf_harmonic: 2.0,
            carrier_period_fs: optical_period_fs(808.0),
            lo_ratio: 40.0,
        }
    }
}

impl DetectorModel {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            (self.electronic_noise_sd, "electronic_noise_sd"),
            (self.hf_amplitude, "hf_amplitude"),
            (self.hf_harmonic, "hf_harmonic"),
            (self.carrier_period_fs, "carrier_period_fs"),
            (self.lo_ratio, "lo_ratio"),
        ];
        for (v, name) in fields {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidInput(format!(
                    "detector field {name} must be nonnegative, got {v}"
                )));
            }
        }
        if self.carrier_period_fs == 0.0 || self.lo_ratio == 0.0 {
            return Err(Error::InvalidInput(
                "carrier period and LO ratio must be positive".into(),
            ));
        }
        Ok(())
    }

    /// Raw-units-per-quadrature scale implied by the LO power ratio.
    pub fn lo_calibration(&self) -> f64 {
        self.lo_ratio.sqrt()
    }

    /// Deterministic additive offset at a given delay.
    fn hf_offset(&self, tau: f64) -> f64 {
        if self.hf_amplitude == 0.0 {
            return 0.0;
        }
        let omega = self.hf_harmonic * 2.0 * std::f64::consts::PI / self.carrier_period_fs;
        self.hf_amplitude * (omega * tau).cos()
    }
}

/// Sinusoidal Kerr-phase profile over a delay grid:
/// `chi(tau) = offset + amplitude * sin(2 pi tau / period + phase)`.
pub fn chi_modulation_profile(
    tau_grid: &[f64],
    amplitude: f64,
    period_fs: f64,
    phase: f64,
    offset: f64,
) -> Result<Vec<(f64, f64)>> {
    if !(period_fs > 0.0 && period_fs.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "modulation period must be positive, got {period_fs}"
        )));
    }
    for v in [amplitude, phase, offset] {
        if !v.is_finite() {
            return Err(Error::InvalidInput(
                "non-finite modulation parameter".into(),
            ));
        }
    }
    Ok(tau_grid
        .iter()
        .map(|&tau| {
            let chi = offset + amplitude * (2.0 * std::f64::consts::PI * tau / period_fs + phase).sin();
            (tau, chi)
        })
        .collect())
}

/// Tabulated density with trapezoid CDF for inverse-transform sampling.
pub(crate) struct InverseCdfTable {
    x0: f64,
    dx: f64,
    pdf: Vec<f64>,
    cdf: Vec<f64>,
    total: f64,
}

impl InverseCdfTable {
    /// Builds the table from density values on a uniform grid.
    pub(crate) fn new(x0: f64, dx: f64, pdf: Vec<f64>) -> Result<Self> {
        let mut cdf = Vec::with_capacity(pdf.len());
        let mut acc = 0.0;
        cdf.push(0.0);
        for w in pdf.windows(2) {
            acc += 0.5 * (w[0] + w[1]) * dx;
            cdf.push(acc);
        }
        if !(acc > 0.0 && acc.is_finite()) {
            return Err(Error::Numerics(format!(
                "degenerate sampling table, total mass {acc}"
            )));
        }
        Ok(InverseCdfTable { x0, dx, pdf, cdf, total: acc })
    }

    /// Maps a uniform variate in [0, 1) through the inverse CDF. Within each
    /// segment the density is linear, so the local inverse is a quadratic
    /// solved in the cancellation-free form.
    pub(crate) fn sample(&self, u: f64) -> f64 {
        let t = u * self.total;
        let mut lo = 0usize;
        let mut hi = self.cdf.len() - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.cdf[mid] <= t {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let seg = t - self.cdf[lo];
        let p0 = self.pdf[lo];
        let p1 = self.pdf[lo + 1];
        let a = 0.5 * (p1 - p0) / self.dx;
        let disc = (p0 * p0 + 4.0 * a * seg).max(0.0);
        let denom = p0 + disc.sqrt();
        let xi = if denom > 1e-300 {
            2.0 * seg / denom
        } else if a > 0.0 {
            (seg / a).sqrt()
        } else {
            0.0
        };
        self.x0 + self.dx * lo as f64 + xi.clamp(0.0, self.dx)
    }

    /// CDF evaluated at arbitrary x, for distribution tests.
    #[cfg(test)]
    pub(crate) fn cdf_at(&self, x: f64) -> f64 {
        if x <= self.x0 {
            return 0.0;
        }
        let pos = (x - self.x0) / self.dx;
        let i = (pos.floor() as usize).min(self.pdf.len() - 2);
        let xi = ((x - self.x0) - self.dx * i as f64).clamp(0.0, self.dx);
        let a = 0.5 * (self.pdf[i + 1] - self.pdf[i]) / self.dx;
        ((self.cdf[i] + self.pdf[i] * xi + a * xi * xi) / self.total).min(1.0)
    }
}

/// Marginal density of a Fock-basis pure state at LO phase `phi`, evaluated
/// on tabulated x nodes using precomputed eigenfunction columns.
fn fock_marginal(
    amps: &[Complex64],
    phi: f64,
    psi: &[Vec<f64>],
) -> Vec<f64> {
    let rotated: Vec<Complex64> = amps
        .iter()
        .enumerate()
        .map(|(n, c)| c * Complex64::from_polar(1.0, -(n as f64) * phi))
        .collect();
    psi.iter()
        .map(|row| {
            let mut amp = Complex64::new(0.0, 0.0);
            for (c, &b) in rotated.iter().zip(row.iter()) {
                amp += c * b;
            }
            amp.norm_sqr()
        })
        .collect()
}

/// Builds the sampling table for one Kerr cell.
#[cfg(test)]
pub(crate) fn kerr_cell_table(
    spec: &CoherentSpec,
    chi: f64,
    nmax: usize,
    phi: f64,
    n_points: usize,
) -> Result<InverseCdfTable> {
    let half = (2.0 * spec.n_mean).sqrt() + 6.0;
    let dx = 2.0 * half / (n_points - 1) as f64;
    let amps = kerr_amplitudes(spec.alpha, chi, nmax);
    let psi: Vec<Vec<f64>> = (0..n_points)
        .map(|i| oscillator_eigenfunctions(nmax, -half + dx * i as f64))
        .collect();
    let pdf = fock_marginal(&amps, phi, &psi);
    InverseCdfTable::new(-half, dx, pdf)
}

/// Mean and variance of `X_phi` for the rotated Gaussian state.
fn gaussian_projection(v1: f64, v2: f64, theta: f64, d1: f64, d2: f64, phi: f64) -> (f64, f64) {
    let (s, c) = theta.sin_cos();
    let mean_x = c * d1 - s * d2;
    let mean_p = s * d1 + c * d2;
    let mean = phi.cos() * mean_x + phi.sin() * mean_p;
    let rel = phi - theta;
    let var = v1 * rel.cos().powi(2) + v2 * rel.sin().powi(2);
    (mean, var)
}

/// Samples a shot-resolved homodyne dataset from a known state.
///
/// Every mode label carries the same state. Sampling is parallel over
/// (tau, phi) cells with one counter-derived RNG stream per cell, so results
/// are deterministic for a given seed regardless of thread count. Detector
/// effects are applied in quadrature units, then scaled to raw units by the
/// LO calibration factor.
pub fn sample_homodyne(
    state: &StateSpec,
    tau_grid: &[f64],
    phi_grid: &[f64],
    mode_labels: &[f64],
    n_shots: usize,
    detector: &DetectorModel,
    seed: u64,
) -> Result<HomodyneDataset> {
    state.validate()?;
    detector.validate()?;
    if tau_grid.is_empty() || phi_grid.is_empty() || mode_labels.is_empty() {
        return Err(Error::InvalidInput("empty sampling grid".into()));
    }
    if n_shots < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 shots per cell, got {n_shots}"
        )));
    }
    let n_tau = tau_grid.len();
    let n_phi = phi_grid.len();
    let n_modes = mode_labels.len();
    let cal = detector.lo_calibration();

    // eigenfunction columns are phase- and delay-independent; build them once
    let psi_shared: Option<(Vec<Vec<f64>>, f64, f64)> = match &state.kind {
        StateKind::Kerr { spec, nmax, .. } => {
            let half = (2.0 * spec.n_mean).sqrt() + 6.0;
            let dx = 2.0 * half / (CDF_TABLE_POINTS - 1) as f64;
            let psi = (0..CDF_TABLE_POINTS)
                .map(|i| oscillator_eigenfunctions(*nmax, -half + dx * i as f64))
                .collect();
            Some((psi, -half, dx))
        }
        StateKind::Gaussian { .. } => None,
    };

    let cells: Vec<Vec<f64>> = (0..n_tau * n_phi)
        .into_par_iter()
        .map(|cell| -> Result<Vec<f64>> {
            let it = cell / n_phi;
            let ip = cell % n_phi;
            let tau = tau_grid[it];
            let phi = phi_grid[ip];
            let mut rng = stream_rng(seed, cell as u64);
            let noise = if detector.electronic_noise_sd > 0.0 {
                Some(
                    Normal::new(0.0, detector.electronic_noise_sd)
                        .map_err(|e| Error::Numerics(format!("noise model: {e}")))?,
                )
            } else {
                None
            };
            let offset = detector.hf_offset(tau);
            let mut out = Vec::with_capacity(n_modes * n_shots);
            match &state.kind {
                StateKind::Gaussian { v1, v2, theta, d1, d2 } => {
                    let (mean, var) = gaussian_projection(*v1, *v2, *theta, *d1, *d2, phi);
                    let dist = Normal::new(mean, var.sqrt())
                        .map_err(|e| Error::Numerics(format!("projection model: {e}")))?;
                    for _ in 0..n_modes * n_shots {
                        let mut x = dist.sample(&mut rng);
                        if let Some(nd) = &noise {
                            x += nd.sample(&mut rng);
                        }
                        out.push((x + offset) * cal);
                    }
                }
                StateKind::Kerr { spec, nmax, .. } => {
                    let chi = state.chi_at(tau)?;
                    let (psi, x0, dx) = psi_shared.as_ref().unwrap();
                    let amps = kerr_amplitudes(spec.alpha, chi, *nmax);
                    let pdf = fock_marginal(&amps, phi, psi);
                    let table = InverseCdfTable::new(*x0, *dx, pdf)?;
                    for _ in 0..n_modes * n_shots {
                        let mut x = table.sample(rng.random::<f64>());
                        if let Some(nd) = &noise {
                            x += nd.sample(&mut rng);
                        }
                        out.push((x + offset) * cal);
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    let mut samples = Array4::<f64>::zeros((n_tau, n_phi, n_modes, n_shots));
    for (cell, values) in cells.iter().enumerate() {
        let it = cell / n_phi;
        let ip = cell % n_phi;
        for m in 0..n_modes {
            for s in 0..n_shots {
                samples[[it, ip, m, s]] = values[m * n_shots + s];
            }
        }
    }
    let dataset = HomodyneDataset {
        tau_grid: tau_grid.to_vec(),
        phi_grid: phi_grid.to_vec(),
        mode_labels: mode_labels.to_vec(),
        n_shots,
        lo_calibration: cal,
        samples,
    };
    dataset.validate()?;
    Ok(dataset)
}
