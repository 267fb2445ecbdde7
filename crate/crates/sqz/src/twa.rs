//! Stochastic c-field simulation of the one-dimensional nonlinear
//! Schrodinger equation in the truncated-Wigner representation.
//!
//! Each trajectory starts from the coherent pulse plus half a photon of
//! complex Gaussian noise per plane-wave mode and evolves under a symmetric
//! split-step spectral integrator. Ensemble averages of symmetrically
//! ordered products then estimate quantum expectation values.

use crate::modes::QuadratureSamples;
use crate::util::{kahan_sum, stream_rng};
use crate::{Error, Result};
use ndarray::Array2;
use num_complex::Complex64;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::FftPlanner;
use std::sync::Arc;

/// Maximum per-step relative norm drift before propagation aborts.
pub const NORM_DRIFT_ABORT: f64 = 1e-6;

/// Grid, integrator, and ensemble parameters for one propagation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PropagationConfig {
    /// Spatial grid points; must be a power of two.
    pub nz: usize,
    /// Periodic box length in propagation units.
    pub z_extent: f64,
    /// Integrator step.
    pub dt: f64,
    /// Total propagation time; must be an integer number of steps.
    pub t_final: f64,
    /// Drift coefficient of the linear dispersion omega(k) = vg k + beta2 k^2 / 2.
    pub vg: f64,
    pub beta2: f64,
    /// Nonlinear coefficient of the -chi_e |psi|^2 term.
    pub chi_e: f64,
    pub n_traj: usize,
    pub seed: u64,
}

impl PropagationConfig {
    pub fn validate(&self) -> Result<()> {
        if self.nz < 2 || !self.nz.is_power_of_two() {
            return Err(Error::InvalidInput(format!(
                "nz must be a power of two >= 2, got {}",
                self.nz
            )));
        }
        if !(self.z_extent > 0.0 && self.z_extent.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "z_extent must be positive, got {}",
                self.z_extent
            )));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidInput(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "t_final must be nonnegative, got {}",
                self.t_final
            )));
        }
        if self.n_traj == 0 {
            return Err(Error::InvalidInput("n_traj must be at least 1".into()));
        }
        for (v, name) in [(self.vg, "vg"), (self.beta2, "beta2"), (self.chi_e, "chi_e")] {
            if !v.is_finite() {
                return Err(Error::InvalidInput(format!("non-finite {name}")));
            }
        }
        self.n_steps().map(|_| ())
    }

    pub fn dz(&self) -> f64 {
        self.z_extent / self.nz as f64
    }

    /// Number of integrator steps; `t_final` must be an integer multiple of `dt`.
    pub fn n_steps(&self) -> Result<usize> {
        let ratio = self.t_final / self.dt;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::InvalidInput(format!(
                "t_final = {} is not an integer number of dt = {} steps",
                self.t_final, self.dt
            )));
        }
        Ok(steps as usize)
    }

    /// Periodic grid positions z_j = j dz.
    pub fn grid(&self) -> Vec<f64> {
        let dz = self.dz();
        (0..self.nz).map(|j| j as f64 * dz).collect()
    }

    /// Plane-wave wavenumbers in FFT bin order (nonnegative first, then
    /// negative), k_m = 2 pi m / z_extent.
    pub fn wavenumbers(&self) -> Vec<f64> {
        let base = 2.0 * std::f64::consts::PI / self.z_extent;
        (0..self.nz)
            .map(|m| {
                let signed = if m <= self.nz / 2 {
                    m as f64
                } else {
                    m as f64 - self.nz as f64
                };
                base * signed
            })
            .collect()
    }
}

/// Coherent input pulse: normalized shape on the grid plus a photon number.
#[derive(Debug, Clone)]
pub struct PulseSpec {
    pub shape: Vec<Complex64>,
    pub n_photons: f64,
}

impl PulseSpec {
    /// Uniform pulse filling the periodic box.
    pub fn flat(config: &PropagationConfig) -> Self {
        let amp = 1.0 / config.z_extent.sqrt();
        PulseSpec {
            shape: vec![Complex64::new(amp, 0.0); config.nz],
            n_photons: 0.0,
        }
    }

    /// Gaussian envelope centred at `center` with rms width `sigma`,
    /// numerically normalized on the grid.
    pub fn gaussian(config: &PropagationConfig, center: f64, sigma: f64) -> Self {
        let dz = config.dz();
        let mut shape: Vec<Complex64> = config
            .grid()
            .iter()
            .map(|&z| Complex64::new((-0.25 * ((z - center) / sigma).powi(2)).exp(), 0.0))
            .collect();
        let norm = (shape.iter().map(|c| c.norm_sqr()).sum::<f64>() * dz).sqrt();
        for c in &mut shape {
            *c /= norm;
        }
        PulseSpec { shape, n_photons: 0.0 }
    }

    pub fn with_photons(mut self, n: f64) -> Self {
        self.n_photons = n;
        self
    }

    fn validate(&self, config: &PropagationConfig) -> Result<()> {
        if self.shape.len() != config.nz {
            return Err(Error::InvalidInput(format!(
                "pulse sampled on {} points, grid has {}",
                self.shape.len(),
                config.nz
            )));
        }
        if !(self.n_photons >= 0.0 && self.n_photons.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "photon number must be nonnegative, got {}",
                self.n_photons
            )));
        }
        let norm: f64 = self.shape.iter().map(|c| c.norm_sqr()).sum::<f64>() * config.dz();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(Error::InvalidInput(format!(
                "pulse shape norm is {norm}, expected 1 on the grid"
            )));
        }
        Ok(())
    }
}

/// One stochastic realization of the c-field.
#[derive(Debug, Clone)]
pub struct CField {
    pub psi: Vec<Complex64>,
    pub dz: f64,
}

impl CField {
    /// Total field norm, Sum |psi|^2 dz.
    pub fn norm(&self) -> f64 {
        kahan_sum(self.psi.iter().map(|c| c.norm_sqr())) * self.dz
    }

    /// Symmetric-ordering photon number: Sum |psi|^2 dz minus half a photon
    /// for each of the nz plane-wave modes.
    pub fn symmetric_photon_number(&self) -> f64 {
        self.norm() - self.psi.len() as f64 / 2.0
    }
}

/// Trajectory ensemble with the configuration that produced it.
#[derive(Debug, Clone)]
pub struct TrajectoryEnsemble {
    pub fields: Vec<CField>,
    pub config: PropagationConfig,
}

/// Ensemble-averaged one-body density matrix in position space.
#[derive(Debug, Clone)]
pub struct OneBodyDensityMatrix {
    /// rho[[i, j]] estimates <psi^dag(z_i) psi(z_j)> after the symmetric
    /// ordering subtraction; Hermitian by construction.
    pub rho_zz: Array2<Complex64>,
    pub dz: f64,
}

impl OneBodyDensityMatrix {
    /// Mean photon number, trace(rho) dz.
    pub fn photon_number(&self) -> f64 {
        (0..self.rho_zz.nrows())
            .map(|i| self.rho_zz[[i, i]].re)
            .sum::<f64>()
            * self.dz
    }
}

/// Draws the initial ensemble: psi = sqrt(N) phi(z) + eta(z), with eta
/// carrying half a photon of complex Gaussian noise per plane-wave mode.
/// Trajectory t uses its own counter-based stream of `config.seed`, so the
/// ensemble is reproducible independent of scheduling.
pub fn init_ensemble(pulse: &PulseSpec, config: &PropagationConfig) -> Result<TrajectoryEnsemble> {
    config.validate()?;
    pulse.validate(config)?;
    let dz = config.dz();
    // variance 1/2 per plane-wave mode maps to 1/(2 dz) per grid point
    let component_sd = (0.25 / dz).sqrt();
    let amp = pulse.n_photons.sqrt();
    let fields: Vec<CField> = (0..config.n_traj)
        .into_par_iter()
        .map(|t| {
            let mut rng = stream_rng(config.seed, t as u64);
            let psi = pulse
                .shape
                .iter()
                .map(|&phi| {
                    let re: f64 = StandardNormal.sample(&mut rng);
                    let im: f64 = StandardNormal.sample(&mut rng);
                    amp * phi + Complex64::new(component_sd * re, component_sd * im)
                })
                .collect();
            CField { psi, dz }
        })
        .collect();
    Ok(TrajectoryEnsemble { fields, config: *config })
}

/// Evolves every trajectory by the symmetric split-step spectral integrator:
/// half a linear dispersion step in wavenumber space, a full nonlinear phase
/// step in position space, and another linear half step.
pub fn propagate(
    ensemble: &TrajectoryEnsemble,
    config: &PropagationConfig,
) -> Result<TrajectoryEnsemble> {
    config.validate()?;
    if ensemble.fields.is_empty() {
        return Err(Error::InvalidInput("empty ensemble".into()));
    }
    let nz = config.nz;
    let dz = config.dz();
    for field in &ensemble.fields {
        if field.psi.len() != nz {
            return Err(Error::InvalidInput(format!(
                "trajectory has {} points, config grid has {nz}",
                field.psi.len()
            )));
        }
        if (field.dz - dz).abs() > 1e-12 * dz {
            return Err(Error::InvalidInput(format!(
                "trajectory grid step {} does not match config step {dz}",
                field.dz
            )));
        }
    }
    let n_steps = config.n_steps()?;
    if n_steps == 0 {
        return Ok(ensemble.clone());
    }

    // stability rule: dt small against both the nonlinear rotation rate at
    // the current peak intensity and the fastest dispersion phase
    let peak_intensity = ensemble
        .fields
        .iter()
        .flat_map(|f| f.psi.iter())
        .map(|c| c.norm_sqr())
        .fold(0.0f64, f64::max);
    let k_max = std::f64::consts::PI * nz as f64 / config.z_extent;
    let rate = (config.chi_e.abs() * peak_intensity).max(config.beta2.abs() * k_max * k_max);
    if rate > 0.0 && config.dt > 0.1 / rate * (1.0 + 1e-12) {
        return Err(Error::InvalidInput(format!(
            "dt = {} unstable: step-size rule requires dt <= {}",
            config.dt,
            0.1 / rate
        )));
    }

    let linear_half: Option<Vec<Complex64>> = if config.vg == 0.0 && config.beta2 == 0.0 {
        None
    } else {
        Some(
            config
                .wavenumbers()
                .iter()
                .map(|&k| {
                    let omega = config.vg * k + 0.5 * config.beta2 * k * k;
                    Complex64::from_polar(1.0, -omega * config.dt / 2.0)
                })
                .collect(),
        )
    };
    let mut planner = FftPlanner::new();
    let forward: Arc<dyn rustfft::Fft<f64>> = planner.plan_fft_forward(nz);
    let inverse: Arc<dyn rustfft::Fft<f64>> = planner.plan_fft_inverse(nz);

    let fields: Result<Vec<CField>> = ensemble
        .fields
        .par_iter()
        .enumerate()
        .map(|(t, field)| {
            let mut psi = field.psi.clone();
            let norm0 = CField { psi: psi.clone(), dz }.norm();
            let mut prev = norm0;
            let half_step = |psi: &mut Vec<Complex64>| {
                if let Some(phases) = &linear_half {
                    forward.process(psi);
                    for (c, &ph) in psi.iter_mut().zip(phases.iter()) {
                        *c *= ph;
                    }
                    inverse.process(psi);
                    let scale = 1.0 / nz as f64;
                    for c in psi.iter_mut() {
                        *c *= scale;
                    }
                }
            };
            for step in 0..n_steps {
                half_step(&mut psi);
                if config.chi_e != 0.0 {
                    for c in psi.iter_mut() {
                        let phase = config.chi_e * c.norm_sqr() * config.dt;
                        *c *= Complex64::from_polar(1.0, phase);
                    }
                }
                half_step(&mut psi);
                let norm = CField { psi: psi.clone(), dz }.norm();
                if (norm - prev).abs() > NORM_DRIFT_ABORT * norm0.max(f64::MIN_POSITIVE) {
                    return Err(Error::Numerics(format!(
                        "norm drift {} at step {step} of trajectory {t} exceeds {NORM_DRIFT_ABORT}",
                        (norm - prev).abs() / norm0
                    )));
                }
                prev = norm;
            }
            Ok(CField { psi, dz })
        })
        .collect();
    Ok(TrajectoryEnsemble { fields: fields?, config: *config })
}

/// Ensemble-averaged one-body density matrix with the symmetric-ordering
/// subtraction of half a photon per grid mode on the diagonal.
///
/// Trajectories are accumulated in fixed-size chunks that are reduced in
/// order, so the result does not depend on thread scheduling.
pub fn one_body_density_matrix(ensemble: &TrajectoryEnsemble) -> Result<OneBodyDensityMatrix> {
    let n_traj = ensemble.fields.len();
    if n_traj < 100 {
        return Err(Error::InvalidInput(format!(
            "need at least 100 trajectories for ensemble statistics, got {n_traj}"
        )));
    }
    let nz = ensemble.config.nz;
    let dz = ensemble.config.dz();
    const CHUNK: usize = 64;
    let partials: Vec<Array2<Complex64>> = ensemble
        .fields
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut acc = Array2::<Complex64>::zeros((nz, nz));
            for field in chunk {
                for i in 0..nz {
                    let ci = field.psi[i].conj();
                    for j in 0..nz {
                        acc[[i, j]] += ci * field.psi[j];
                    }
                }
            }
            acc
        })
        .collect();
    let mut rho = Array2::<Complex64>::zeros((nz, nz));
    for partial in partials {
        rho += &partial;
    }
    rho.mapv_inplace(|c| c / n_traj as f64);
    let vacuum = 0.5 / dz;
    for i in 0..nz {
        rho[[i, i]] -= vacuum;
    }
    // Hermitize: the estimator is Hermitian only in expectation
    let mut sym = Array2::<Complex64>::zeros((nz, nz));
    for i in 0..nz {
        for j in 0..nz {
            sym[[i, j]] = 0.5 * (rho[[i, j]] + rho[[j, i]].conj());
        }
    }
    Ok(OneBodyDensityMatrix { rho_zz: sym, dz })
}

/// Projects every trajectory onto orthonormal mode functions (one per row),
/// returning quadrature samples X = sqrt(2) Re(a), P = sqrt(2) Im(a).
pub fn mode_quadratures(
    ensemble: &TrajectoryEnsemble,
    modes: &Array2<Complex64>,
) -> Result<QuadratureSamples> {
    let nz = ensemble.config.nz;
    let dz = ensemble.config.dz();
    if modes.ncols() != nz {
        return Err(Error::InvalidInput(format!(
            "mode functions sampled on {} points, grid has {nz}",
            modes.ncols()
        )));
    }
    let n_modes = modes.nrows();
    if n_modes == 0 {
        return Err(Error::InvalidInput("no mode functions given".into()));
    }
    for a in 0..n_modes {
        for b in a..n_modes {
            let mut overlap = Complex64::new(0.0, 0.0);
            for i in 0..nz {
                overlap += modes[[a, i]].conj() * modes[[b, i]];
            }
            overlap *= dz;
            let target = if a == b { 1.0 } else { 0.0 };
            if (overlap - target).norm() > 1e-10 {
                return Err(Error::InvalidInput(format!(
                    "modes {a} and {b} are not orthonormal on the grid: overlap {overlap}"
                )));
            }
        }
    }
    let n_traj = ensemble.fields.len();
    let mut x = Array2::<f64>::zeros((n_modes, n_traj));
    let mut p = Array2::<f64>::zeros((n_modes, n_traj));
    let rt2 = std::f64::consts::SQRT_2;
    for (t, field) in ensemble.fields.iter().enumerate() {
        for m in 0..n_modes {
            let mut a = Complex64::new(0.0, 0.0);
            for i in 0..nz {
                a += modes[[m, i]].conj() * field.psi[i];
            }
            a *= dz;
            x[[m, t]] = rt2 * a.re;
            p[[m, t]] = rt2 * a.im;
        }
    }
    let samples = QuadratureSamples {
        mode_labels: (0..n_modes).map(|m| m as f64).collect(),
        x,
        p,
    };
    samples.validate()?;
    Ok(samples)
}

/// Effective single-mode Kerr phase for a pulse occupying one principal
/// mode: chi_bar = -chi_e t Int |phi|^4 dz / 2, matching the closed-form
/// oracle's evolution exp(-i chi_bar n(n-1)).
pub fn single_mode_chi_bar(chi_e: f64, t: f64, shape: &[Complex64], dz: f64) -> f64 {
    let quartic: f64 = shape.iter().map(|c| c.norm_sqr().powi(2)).sum::<f64>() * dz;
    -0.5 * chi_e * t * quartic
}
