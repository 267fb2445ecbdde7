//! Run configuration: a sectioned TOML document with strict key checking.
//!
//! Every field has a default, a partial file only overrides what it names,
//! and the fully resolved document is serialized next to every output so a
//! run can be reproduced from its artifacts alone.

use crate::fock::{CoherentSpec, KerrCoupling};
use crate::grid::GridSpec;
use crate::io::DataFormat;
use crate::sigproc::FilterEdge;
use crate::synth::{chi_modulation_profile, optical_period_fs, DetectorModel, StateKind, StateSpec};
use crate::tomography::BinSpec;
use crate::twa::{PropagationConfig, PulseSpec};
use crate::{Error, Result};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::Path;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Master seed; stage-specific streams derive from it.
    pub seed: u64,
    pub twa: TwaSection,
    pub state: StateSection,
    pub detector: DetectorSection,
    pub tomography: TomographySection,
    pub sigproc: SigprocSection,
    pub output: OutputSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 7,
            twa: TwaSection::default(),
            state: StateSection::default(),
            detector: DetectorSection::default(),
            tomography: TomographySection::default(),
            sigproc: SigprocSection::default(),
            output: OutputSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TwaSection {
    pub nz: usize,
    pub z_extent: f64,
    pub dt: f64,
    pub t_final: f64,
    pub vg: f64,
    pub beta2: f64,
    pub chi_e: f64,
    pub n_traj: usize,
    /// Input pulse envelope: "flat" or "gaussian".
    pub pulse: String,
    pub pulse_center: f64,
    pub pulse_sigma: f64,
    pub n_photons: f64,
    /// Optional sweep of single-mode Kerr phases; each entry is mapped back
    /// to a chi_e value through the pulse-overlap relation. Empty means a
    /// single run at the configured chi_e.
    pub chi_bar_scan: Vec<f64>,
}

impl Default for TwaSection {
    fn default() -> Self {
        TwaSection {
            nz: 128,
            z_extent: 1.0,
            // stays inside the split-step stability rule at the default
            // photon number, noise peaks included
            dt: 0.125,
            t_final: 1.0,
            vg: 0.0,
            beta2: 0.0,
            chi_e: -9e-6,
            n_traj: 10_000,
            pulse: "flat".to_string(),
            pulse_center: 0.5,
            pulse_sigma: 0.1,
            n_photons: 4e4,
            chi_bar_scan: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StateSection {
    /// Synthesized state: "gaussian" or "kerr".
    pub kind: String,
    pub v1: f64,
    pub v2: f64,
    pub theta: f64,
    pub d1: f64,
    pub d2: f64,
    pub alpha_re: f64,
    pub alpha_im: f64,
    pub chi_bar: f64,
    pub nmax: usize,
    /// Kerr phases emitted by the `kerr` subcommand sweep.
    pub chi_bar_list: Vec<f64>,
    pub tau_start_fs: f64,
    pub tau_step_fs: f64,
    pub n_tau: usize,
    pub mode_labels: Vec<f64>,
    /// When true, chi_bar varies sinusoidally along the delay axis.
    pub chi_modulation: bool,
    pub chi_amplitude: f64,
    pub chi_period_fs: f64,
    pub chi_phase: f64,
    pub chi_offset: f64,
}

impl Default for StateSection {
    fn default() -> Self {
        StateSection {
            kind: "gaussian".to_string(),
            v1: 0.5,
            v2: 0.5,
            theta: 0.0,
            d1: 0.0,
            d2: 0.0,
            alpha_re: 2.0,
            alpha_im: 0.0,
            chi_bar: 0.05,
            nmax: 64,
            chi_bar_list: vec![4.0, 2.0, 0.0, -4.0],
            tau_start_fs: 0.0,
            // sub-cycle delay sampling so the carrier-referenced low-pass
            // filter stays applicable (one sixteenth of the 808 nm period)
            tau_step_fs: 0.1684,
            n_tau: 48,
            mode_labels: vec![808.0],
            chi_modulation: false,
            chi_amplitude: 0.025,
            chi_period_fs: 8.0832,
            chi_phase: 0.0,
            chi_offset: 0.025,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorSection {
    pub electronic_noise_sd: f64,
    pub hf_amplitude: f64,
    pub hf_harmonic: f64,
    pub carrier_wavelength_nm: f64,
    pub lo_ratio: f64,
}

impl Default for DetectorSection {
    fn default() -> Self {
        DetectorSection {
            electronic_noise_sd: 0.0,
            hf_amplitude: 0.0,
            hf_harmonic: 2.0,
            carrier_wavelength_nm: 808.0,
            lo_ratio: 40.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TomographySection {
    pub n_phases: usize,
    pub n_shots: usize,
    pub bin_min: f64,
    pub bin_max: f64,
    pub n_bins: usize,
    pub grid_extent: f64,
    pub grid_points: usize,
    /// Ramp-kernel cutoff as a fraction of the bin Nyquist pi / bin_width.
    pub kc_fraction: f64,
}

impl Default for TomographySection {
    fn default() -> Self {
        TomographySection {
            n_phases: 40,
            n_shots: 2000,
            bin_min: -6.3,
            bin_max: 6.3,
            n_bins: 60,
            grid_extent: 5.0,
            grid_points: 81,
            kc_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SigprocSection {
    pub cutoff_factor: f64,
    /// Spectral mask edge: "hard" or "cosine".
    pub edge: String,
    pub edge_width_factor: f64,
    /// Shot acquisition rate for PSD/RIN analysis, in Hz.
    pub frame_rate: f64,
    pub band_lo: f64,
    pub band_hi: f64,
    pub rin_tau_index: usize,
    pub rin_phi_index: usize,
    pub rin_mode_index: usize,
}

impl Default for SigprocSection {
    fn default() -> Self {
        SigprocSection {
            cutoff_factor: crate::sigproc::DEFAULT_CUTOFF_FACTOR,
            edge: "hard".to_string(),
            edge_width_factor: 0.2,
            frame_rate: 100.0,
            band_lo: 5.0,
            band_hi: 20.0,
            rin_tau_index: 0,
            rin_phi_index: 0,
            rin_mode_index: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: String,
    /// Sample payload encoding: "binary" or "text".
    pub format: String,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection { dir: "out".to_string(), format: "binary".to_string() }
    }
}

impl PipelineConfig {
    /// Parses a TOML document, rejecting unknown keys; missing keys fall back
    /// to defaults.
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: PipelineConfig = toml::from_str(text)
            .map_err(|e| Error::InvalidInput(format!("config parse error: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        Self::from_toml(&text)
    }

    /// Fully resolved document, every default spelled out.
    pub fn resolved_toml(&self) -> Result<String> {
        toml::to_string(self)
            .map_err(|e| Error::InvalidInput(format!("config serialization error: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        match self.state.kind.as_str() {
            "gaussian" | "kerr" => {}
            other => {
                return Err(Error::InvalidInput(format!(
                    "state.kind must be 'gaussian' or 'kerr', got '{other}'"
                )))
            }
        }
        match self.twa.pulse.as_str() {
            "flat" | "gaussian" => {}
            other => {
                return Err(Error::InvalidInput(format!(
                    "twa.pulse must be 'flat' or 'gaussian', got '{other}'"
                )))
            }
        }
        match self.sigproc.edge.as_str() {
            "hard" | "cosine" => {}
            other => {
                return Err(Error::InvalidInput(format!(
                    "sigproc.edge must be 'hard' or 'cosine', got '{other}'"
                )))
            }
        }
        self.data_format()?;
        if self.state.n_tau == 0 {
            return Err(Error::InvalidInput("state.n_tau must be at least 1".into()));
        }
        if !(self.state.tau_step_fs > 0.0) {
            return Err(Error::InvalidInput(format!(
                "state.tau_step_fs must be positive, got {}",
                self.state.tau_step_fs
            )));
        }
        if self.tomography.n_phases == 0 || self.tomography.n_shots == 0 {
            return Err(Error::InvalidInput(
                "tomography.n_phases and n_shots must be at least 1".into(),
            ));
        }
        if self.state.mode_labels.is_empty() {
            return Err(Error::InvalidInput("state.mode_labels must not be empty".into()));
        }
        Ok(())
    }

    pub fn data_format(&self) -> Result<DataFormat> {
        match self.output.format.as_str() {
            "binary" => Ok(DataFormat::Binary),
            "text" => Ok(DataFormat::Text),
            other => Err(Error::InvalidInput(format!(
                "output.format must be 'binary' or 'text', got '{other}'"
            ))),
        }
    }

    pub fn filter_edge(&self) -> FilterEdge {
        match self.sigproc.edge.as_str() {
            "cosine" => FilterEdge::Cosine { width_factor: self.sigproc.edge_width_factor },
            _ => FilterEdge::Hard,
        }
    }

    /// Delay grid in femtoseconds.
    pub fn tau_grid(&self) -> Vec<f64> {
        (0..self.state.n_tau)
            .map(|k| self.state.tau_start_fs + k as f64 * self.state.tau_step_fs)
            .collect()
    }

    /// LO phase grid: n equally spaced phases covering [0, pi).
    pub fn phi_grid(&self) -> Vec<f64> {
        let n = self.tomography.n_phases;
        (0..n)
            .map(|k| k as f64 * std::f64::consts::PI / n as f64)
            .collect()
    }

    pub fn bin_spec(&self) -> BinSpec {
        BinSpec {
            s_min: self.tomography.bin_min,
            s_max: self.tomography.bin_max,
            n_bins: self.tomography.n_bins,
        }
    }

    pub fn grid_spec(&self) -> GridSpec {
        GridSpec::square(self.tomography.grid_extent, self.tomography.grid_points)
    }

    /// Ramp-kernel cutoff resolved against the configured bin width.
    pub fn kc(&self) -> f64 {
        let width = (self.tomography.bin_max - self.tomography.bin_min)
            / self.tomography.n_bins as f64;
        self.tomography.kc_fraction * std::f64::consts::PI / width
    }

    pub fn detector_model(&self) -> DetectorModel {
        DetectorModel {
            electronic_noise_sd: self.detector.electronic_noise_sd,
            hf_amplitude: self.detector.hf_amplitude,
            hf_harmonic: self.detector.hf_harmonic,
            carrier_period_fs: optical_period_fs(self.detector.carrier_wavelength_nm),
            lo_ratio: self.detector.lo_ratio,
        }
    }

    /// Carrier angular frequency along the delay axis, rad/fs.
    pub fn carrier_omega(&self) -> f64 {
        2.0 * std::f64::consts::PI / optical_period_fs(self.detector.carrier_wavelength_nm)
    }

    pub fn state_spec(&self) -> Result<StateSpec> {
        let kind = match self.state.kind.as_str() {
            "gaussian" => StateKind::Gaussian {
                v1: self.state.v1,
                v2: self.state.v2,
                theta: self.state.theta,
                d1: self.state.d1,
                d2: self.state.d2,
            },
            _ => StateKind::Kerr {
                spec: CoherentSpec::new(Complex64::new(self.state.alpha_re, self.state.alpha_im))?,
                coupling: KerrCoupling::new(self.state.chi_bar)?,
                nmax: self.state.nmax,
            },
        };
        let chi_of_tau = if self.state.chi_modulation && self.state.kind == "kerr" {
            Some(chi_modulation_profile(
                &self.tau_grid(),
                self.state.chi_amplitude,
                self.state.chi_period_fs,
                self.state.chi_phase,
                self.state.chi_offset,
            )?)
        } else {
            None
        };
        let spec = StateSpec { kind, chi_of_tau };
        spec.validate()?;
        Ok(spec)
    }

    pub fn propagation_config(&self) -> PropagationConfig {
        PropagationConfig {
            nz: self.twa.nz,
            z_extent: self.twa.z_extent,
            dt: self.twa.dt,
            t_final: self.twa.t_final,
            vg: self.twa.vg,
            beta2: self.twa.beta2,
            chi_e: self.twa.chi_e,
            n_traj: self.twa.n_traj,
            seed: self.seed,
        }
    }

    pub fn pulse_spec(&self) -> PulseSpec {
        let config = self.propagation_config();
        let pulse = match self.twa.pulse.as_str() {
            "gaussian" => {
                PulseSpec::gaussian(&config, self.twa.pulse_center, self.twa.pulse_sigma)
            }
            _ => PulseSpec::flat(&config),
        };
        pulse.with_photons(self.twa.n_photons)
    }
}
