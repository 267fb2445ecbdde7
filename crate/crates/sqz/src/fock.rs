//! Exact single-mode Kerr dynamics in the Fock basis.
//!
//! A coherent state |alpha> evolved under the Kerr unitary
//! U(chi) = exp(-i chi n(n-1)) has the density matrix
//!
//! rho_mn = e^{-|alpha|^2} alpha^m conj(alpha)^n / sqrt(m! n!)
//!          * e^{-i chi [m(m-1) - n(n-1)]},
//!
//! which is everything this module needs: closed-form field moments and
//! quadrature variances, the Wigner function as an associated-Laguerre
//! series, a moment-matched Gaussian reference, and the overlap fidelity
//! between the two.

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::grid::{GridSpec, WignerGrid};
use crate::util::{default_fock_cutoff, kerr_amplitudes, ln_factorial_table};
use crate::{Error, Result};

const LOG2_E: f64 = std::f64::consts::LOG2_E;
const SQRT_2: f64 = std::f64::consts::SQRT_2;

/// Coherent input state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherentSpec {
    pub alpha: Complex64,
    pub n_mean: f64,
}

impl CoherentSpec {
    pub fn new(alpha: Complex64) -> Result<Self> {
        if !alpha.re.is_finite() || !alpha.im.is_finite() {
            return Err(Error::InvalidInput("coherent amplitude must be finite".into()));
        }
        Ok(CoherentSpec { alpha, n_mean: alpha.norm_sqr() })
    }

    /// Real-amplitude convenience constructor.
    pub fn real(alpha: f64) -> Result<Self> {
        Self::new(Complex64::new(alpha, 0.0))
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_mean < 0.0 || !self.n_mean.is_finite() {
            return Err(Error::InvalidInput("mean photon number must be finite and >= 0".into()));
        }
        if (self.n_mean - self.alpha.norm_sqr()).abs() > 1e-12 * (1.0 + self.n_mean) {
            return Err(Error::InvalidInput(format!(
                "n_mean {} inconsistent with |alpha|^2 = {}",
                self.n_mean,
                self.alpha.norm_sqr()
            )));
        }
        Ok(())
    }
}

/// Accumulated nonlinear phase of the Kerr evolution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KerrCoupling {
    pub chi_bar: f64,
}

impl KerrCoupling {
    pub fn new(chi_bar: f64) -> Result<Self> {
        if !chi_bar.is_finite() {
            return Err(Error::InvalidInput("Kerr phase must be finite".into()));
        }
        Ok(KerrCoupling { chi_bar })
    }
}

/// Truncated Fock-basis density matrix of a Kerr-evolved coherent state.
///
/// The matrix is renormalized to unit trace after truncation; the removed
/// Poisson tail weight is reported as `truncation_deficit`.
#[derive(Debug, Clone)]
pub struct KerrDensityMatrix {
    pub spec: CoherentSpec,
    pub chi: KerrCoupling,
    pub nmax: usize,
    pub rho: Array2<Complex64>,
    pub truncation_deficit: f64,
}

/// Builds the density matrix with cutoff `nmax` (inclusive highest Fock index).
///
/// Refuses cutoffs below n_mean + 5 sqrt(n_mean), where the truncated tail
/// would visibly distort moments.
pub fn kerr_density_matrix(
    spec: &CoherentSpec,
    chi: KerrCoupling,
    nmax: usize,
) -> Result<KerrDensityMatrix> {
    spec.validate()?;
    let floor = spec.n_mean + 5.0 * spec.n_mean.sqrt();
    if (nmax as f64) < floor {
        return Err(Error::InvalidInput(format!(
            "Fock cutoff {} under-resolves n_mean {} (need >= {:.1})",
            nmax, spec.n_mean, floor
        )));
    }
    let amps = kerr_amplitudes(spec.alpha, chi.chi_bar, nmax);
    let weight: f64 = amps.iter().map(|a| a.norm_sqr()).sum();
    let deficit = 1.0 - weight;
    let scale = 1.0 / weight;
    let dim = nmax + 1;
    let mut rho = Array2::zeros((dim, dim));
    for m in 0..dim {
        for n in 0..dim {
            rho[[m, n]] = amps[m] * amps[n].conj() * scale;
        }
    }
    Ok(KerrDensityMatrix { spec: *spec, chi, nmax, rho, truncation_deficit: deficit })
}

/// Density matrix at the recommended cutoff for the state's photon number.
pub fn kerr_density_matrix_auto(spec: &CoherentSpec, chi: KerrCoupling) -> Result<KerrDensityMatrix> {
    kerr_density_matrix(spec, chi, default_fock_cutoff(spec.n_mean))
}

impl KerrDensityMatrix {
    pub fn trace(&self) -> Complex64 {
        (0..=self.nmax).map(|n| self.rho[[n, n]]).sum()
    }

    /// Tr(rho^2); 1 for the pure states produced here.
    pub fn purity(&self) -> f64 {
        self.rho.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Largest Hermiticity violation |rho_mn - conj(rho_nm)|.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut worst = 0.0f64;
        for m in 0..=self.nmax {
            for n in m..=self.nmax {
                worst = worst.max((self.rho[[m, n]] - self.rho[[n, m]].conj()).norm());
            }
        }
        worst
    }
}

/// First and second field moments <a>, <a^2>, <a^dag a>.
#[derive(Debug, Clone, Copy)]
pub struct FieldMoments {
    pub mean_a: Complex64,
    pub mean_a_sq: Complex64,
    pub n_mean: f64,
}

/// Lab-frame quadrature statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureStats {
    pub var_x: f64,
    pub var_p: f64,
    pub mean_x: f64,
    pub mean_p: f64,
}

impl FieldMoments {
    /// Quadrature means/variances via
    /// Var X = Re<a^2> + n + 1/2 - 2 (Re<a>)^2 and the P-space analogue.
    pub fn quadrature_stats(&self) -> QuadratureStats {
        let re2 = self.mean_a_sq.re;
        let half = self.n_mean + 0.5;
        QuadratureStats {
            var_x: re2 + half - 2.0 * self.mean_a.re * self.mean_a.re,
            var_p: -re2 + half - 2.0 * self.mean_a.im * self.mean_a.im,
            mean_x: SQRT_2 * self.mean_a.re,
            mean_p: SQRT_2 * self.mean_a.im,
        }
    }

    /// Symmetrized cross covariance Cov(X, P) = Im<a^2> - 2 Re<a> Im<a>.
    pub fn cov_xp(&self) -> f64 {
        self.mean_a_sq.im - 2.0 * self.mean_a.re * self.mean_a.im
    }

    /// Full 2x2 quadrature covariance [[Vxx, Vxp], [Vxp, Vpp]].
    pub fn covariance(&self) -> [[f64; 2]; 2] {
        let s = self.quadrature_stats();
        let c = self.cov_xp();
        [[s.var_x, c], [c, s.var_p]]
    }
}

/// Closed-form Kerr moments of a coherent input:
/// <a>     = alpha exp(n (e^{-2i chi} - 1)),
/// <a^2>   = alpha^2 e^{-2i chi} exp(n (e^{-4i chi} - 1)),
/// <a^dag a> = n (conserved).
pub fn kerr_moments(spec: &CoherentSpec, chi: KerrCoupling) -> Result<FieldMoments> {
    spec.validate()?;
    let n = spec.n_mean;
    let c = chi.chi_bar;
    let rot2 = Complex64::from_polar(1.0, -2.0 * c);
    let rot4 = Complex64::from_polar(1.0, -4.0 * c);
    let mean_a = spec.alpha * ((rot2 - 1.0) * n).exp();
    let mean_a_sq = spec.alpha * spec.alpha * rot2 * ((rot4 - 1.0) * n).exp();
    Ok(FieldMoments { mean_a, mean_a_sq, n_mean: n })
}

/// Closed-form quadrature variances and means of the Kerr output.
pub fn kerr_variances(spec: &CoherentSpec, chi: KerrCoupling) -> Result<QuadratureStats> {
    Ok(kerr_moments(spec, chi)?.quadrature_stats())
}

/// Field moments extracted from a density matrix by trace algebra:
/// <a> = sum_m sqrt(m) rho[m][m-1], <a^2> = sum_m sqrt(m(m-1)) rho[m][m-2],
/// n = sum_m m rho[m][m]. This is the Fock-space route, independent of the
/// closed forms above.
pub fn fock_moments(rho: &KerrDensityMatrix) -> FieldMoments {
    let mut mean_a = Complex64::ZERO;
    let mut mean_a_sq = Complex64::ZERO;
    let mut n_mean = 0.0f64;
    for m in 0..=rho.nmax {
        let mf = m as f64;
        n_mean += mf * rho.rho[[m, m]].re;
        if m >= 1 {
            mean_a += mf.sqrt() * rho.rho[[m, m - 1]];
        }
        if m >= 2 {
            mean_a_sq += (mf * (mf - 1.0)).sqrt() * rho.rho[[m, m - 2]];
        }
    }
    FieldMoments { mean_a, mean_a_sq, n_mean }
}

/// Series cutoff needed for full f64 accuracy at phase-space radius
/// `alpha_g_max`: the cross terms carry weight ~ (2 |alpha_0| |alpha_g|)^n / n!,
/// so the sum must run past that Poisson-like peak, not just the state's own
/// photon support.
fn series_cutoff(rho: &KerrDensityMatrix, alpha_g_max: f64) -> usize {
    let lam = rho.spec.n_mean + 2.0 * rho.spec.alpha.norm() * alpha_g_max;
    let needed = (lam + 8.0 * lam.sqrt() + 16.0).ceil() as usize;
    rho.nmax.max(needed)
}

/// Wigner function value in the d^2 alpha convention (vacuum peak 2/pi) at
/// field amplitude `alpha_g`, evaluated from the associated-Laguerre series
///
/// W(a) = (2/pi) e^{-2|a|^2} [ sum_n (-1)^n rho_nn L_n(4|a|^2)
///        + 2 Re sum_{n>m} (-1)^m rho_mn sqrt(m!/n!) (2a)^{n-m}
///                          L_m^{(n-m)}(4|a|^2) ].
///
/// The recurrence runs with mantissa/exponent rescaling and all prefactors
/// are combined in the log domain, so the evaluation is stable for cutoffs
/// well past 150. The summation range is extended automatically when the
/// evaluation point lies outside the state's truncation radius.
pub fn wigner_alpha_density(rho: &KerrDensityMatrix, alpha_g: Complex64) -> f64 {
    let nmax = series_cutoff(rho, alpha_g.norm());
    let lnfact = ln_factorial_table(nmax);
    wigner_alpha_density_inner(rho, alpha_g, &lnfact, nmax)
}

fn wigner_alpha_density_inner(
    rho: &KerrDensityMatrix,
    alpha_g: Complex64,
    lnfact: &[f64],
    nmax: usize,
) -> f64 {
    let n_mean = rho.spec.n_mean;
    let chi = rho.chi.chi_bar;
    let alpha0_mag = rho.spec.alpha.norm();
    let alpha0_arg = rho.spec.alpha.arg();
    let ln_alpha0 = alpha0_mag.ln(); // -inf for vacuum; guarded below
    let g_mag = alpha_g.norm();
    let g_arg = alpha_g.arg();
    let ln_2g = (2.0 * g_mag).ln(); // -inf at the origin; guarded below
    let z = 4.0 * g_mag * g_mag;
    // e^{-n_mean} from rho_mn and e^{-2|a|^2} from the series prefactor.
    let base_log2 = (-n_mean - 0.5 * z) * LOG2_E;
    // Truncation renormalization of the density matrix.
    let norm_log2 = -(1.0 - rho.truncation_deficit).log2();

    let mut total = 0.0f64;
    for k in 0..=nmax {
        // Scaled three-term recurrence for L_m^{(k)}(z) over m.
        let mut prev = 0.0f64; // L_{m-1}
        let mut cur = 1.0f64; // L_0 = 1
        let mut exp2_off: f64 = 0.0;
        for m in 0..=(nmax - k) {
            let n = m + k;
            let pow_a0 = (2 * m + k) as f64;
            let ln_coef = if pow_a0 == 0.0 { 0.0 } else { pow_a0 * ln_alpha0 }
                + if k == 0 { 0.0 } else { k as f64 * ln_2g }
                - lnfact[n];
            let log2_term = base_log2 + norm_log2 + ln_coef * LOG2_E + exp2_off;
            let val = cur * log2_term.exp2();
            let signed = if m % 2 == 0 { val } else { -val };
            if k == 0 {
                total += signed;
            } else {
                let kf = k as f64;
                let phase = kf * (g_arg - alpha0_arg) + chi * kf * (2.0 * m as f64 + kf - 1.0);
                total += 2.0 * signed * phase.cos();
            }
            // Advance the recurrence: (m+1) L_{m+1} = (2m+k+1-z) L_m - (m+k) L_{m-1}.
            let mf = m as f64;
            let next = ((2.0 * mf + k as f64 + 1.0 - z) * cur - (mf + k as f64) * prev)
                / (mf + 1.0);
            prev = cur;
            cur = next;
            let mag = prev.abs().max(cur.abs());
            if mag > 1.34e154 {
                // 2^512
                prev *= 2.0f64.powi(-512);
                cur *= 2.0f64.powi(-512);
                exp2_off += 512.0;
            } else if mag < 7.46e-155 && mag > 0.0 {
                prev *= 2.0f64.powi(512);
                cur *= 2.0f64.powi(512);
                exp2_off -= 512.0;
            }
        }
    }
    2.0 / std::f64::consts::PI * total
}

/// Exact Wigner function on a quadrature grid.
///
/// Grid values are W(X, P) normalized over dX dP: the series value at
/// alpha = (X + iP)/sqrt(2) times the Jacobian 1/2. Vacuum peaks at 1/pi.
pub fn wigner_exact(rho: &KerrDensityMatrix, grid: &GridSpec) -> Result<WignerGrid> {
    grid.validate()?;
    let corner = |x: f64, p: f64| (x * x + p * p).sqrt() / SQRT_2;
    let radius = corner(grid.x_min, grid.p_min)
        .max(corner(grid.x_min, grid.p_max))
        .max(corner(grid.x_max, grid.p_min))
        .max(corner(grid.x_max, grid.p_max));
    let nmax = series_cutoff(rho, radius);
    let lnfact = ln_factorial_table(nmax);
    let rows: Vec<Vec<f64>> = (0..grid.nx)
        .into_par_iter()
        .map(|i| {
            let x = grid.x_at(i);
            (0..grid.np)
                .map(|j| {
                    let p = grid.p_at(j);
                    let alpha_g = Complex64::new(x / SQRT_2, p / SQRT_2);
                    0.5 * wigner_alpha_density_inner(rho, alpha_g, &lnfact, nmax)
                })
                .collect()
        })
        .collect();
    let mut values = Array2::zeros((grid.nx, grid.np));
    for (i, row) in rows.into_iter().enumerate() {
        for (j, v) in row.into_iter().enumerate() {
            values[[i, j]] = v;
        }
    }
    WignerGrid::new(*grid, values)
}

/// Gaussian Wigner function with covariance R(theta) diag(var_x, var_p)
/// R(theta)^T and mean (mean_x, mean_p):
/// W = 1/(2 pi sqrt(det S)) exp(-1/2 (r - r0)^T S^{-1} (r - r0)).
///
/// `theta` is the direction of the var_x principal axis in the (X, P) plane.
/// Rejects covariances below the uncertainty bound det S >= 1/4.
pub fn wigner_gaussian(stats: &QuadratureStats, theta: f64, grid: &GridSpec) -> Result<WignerGrid> {
    grid.validate()?;
    if !(stats.var_x > 0.0) || !(stats.var_p > 0.0) {
        return Err(Error::InvalidInput("variances must be positive".into()));
    }
    let det = stats.var_x * stats.var_p;
    if det < 0.25 - 1e-9 {
        return Err(Error::InvalidInput(format!(
            "covariance violates the uncertainty bound: det = {det} < 1/4"
        )));
    }
    let (s, c) = theta.sin_cos();
    // S = R diag R^T.
    let sxx = c * c * stats.var_x + s * s * stats.var_p;
    let spp = s * s * stats.var_x + c * c * stats.var_p;
    let sxp = s * c * (stats.var_x - stats.var_p);
    // Inverse of the 2x2 covariance.
    let ixx = spp / det;
    let ipp = sxx / det;
    let ixp = -sxp / det;
    let norm = 1.0 / (2.0 * std::f64::consts::PI * det.sqrt());
    let mut values = Array2::zeros((grid.nx, grid.np));
    for i in 0..grid.nx {
        let dxv = grid.x_at(i) - stats.mean_x;
        for j in 0..grid.np {
            let dpv = grid.p_at(j) - stats.mean_p;
            let q = ixx * dxv * dxv + 2.0 * ixp * dxv * dpv + ipp * dpv * dpv;
            values[[i, j]] = norm * (-0.5 * q).exp();
        }
    }
    WignerGrid::new(*grid, values)
}

/// Principal-frame Gaussian matched to the exact first and second moments:
/// returns (stats, theta) for `wigner_gaussian` with var_x/var_p the
/// principal variances and theta the major-axis angle.
pub fn gaussian_reference(moments: &FieldMoments) -> (QuadratureStats, f64) {
    let s = moments.quadrature_stats();
    let c = moments.cov_xp();
    let half_diff = 0.5 * (s.var_x - s.var_p);
    let mean = 0.5 * (s.var_x + s.var_p);
    let radius = (half_diff * half_diff + c * c).sqrt();
    let theta = 0.5 * c.atan2(half_diff).rem_euclid(2.0 * std::f64::consts::PI);
    (
        QuadratureStats {
            var_x: mean + radius,
            var_p: mean - radius,
            mean_x: s.mean_x,
            mean_p: s.mean_p,
        },
        theta,
    )
}

/// Overlap fidelity F = 2 pi Int W_exact W_gauss dX dP between the exact
/// state and the Gaussian described by (stats, theta), evaluated on a shared
/// grid covering both supports. Clamped to [0, 1 + 1e-6].
pub fn gaussian_fidelity(
    rho: &KerrDensityMatrix,
    stats: &QuadratureStats,
    theta: f64,
) -> Result<f64> {
    let state_extent = SQRT_2 * (rho.spec.alpha.norm() + 5.0);
    let vmax = stats.var_x.max(stats.var_p).max(0.5);
    let gauss_extent = stats.mean_x.abs().max(stats.mean_p.abs()) + 6.0 * vmax.sqrt();
    let extent = state_extent.max(gauss_extent);
    let grid = GridSpec::square(extent, 241);
    let w_exact = wigner_exact(rho, &grid)?;
    let w_gauss = wigner_gaussian(stats, theta, &grid)?;
    let f = w_exact.overlap(&w_gauss)?;
    if f > 1.0 + 1e-6 || f < -1e-6 {
        return Err(Error::Numerics(format!("fidelity {f} outside [0, 1]: under-resolved grid")));
    }
    Ok(f.clamp(0.0, 1.0 + 1e-6))
}
