//! Multimode correlation analysis: quadrature covariance blocks, the
//! coherency matrix `gamma_mn = <a_m^dag a_n>`, and its principal-mode
//! decomposition.
//!
//! Quadrature samples follow the vacuum-variance-1/2 convention, so
//! symmetric-ordered moments carry a vacuum offset of 1/2 per mode which is
//! subtracted when a normally ordered coherency matrix is requested.

use crate::{Error, Result};
use ndarray::Array2;
use num_complex::Complex64;

/// Hermiticity tolerance accepted by the eigensolver.
pub const HERMITICITY_TOL: f64 = 1e-10;

/// Simultaneously recorded quadrature samples for a set of modes.
#[derive(Debug, Clone)]
pub struct QuadratureSamples {
    /// Wavelength or wavenumber per mode, strictly monotonic.
    pub mode_labels: Vec<f64>,
    /// X samples, shape `[n_modes, n_shots]`.
    pub x: Array2<f64>,
    /// P samples, shape `[n_modes, n_shots]`.
    pub p: Array2<f64>,
}

impl QuadratureSamples {
    pub fn n_modes(&self) -> usize {
        self.mode_labels.len()
    }

    pub fn n_shots(&self) -> usize {
        self.x.ncols()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.mode_labels.len();
        if self.x.nrows() != m || self.p.nrows() != m {
            return Err(Error::Data(format!(
                "sample rows ({}, {}) do not match {m} mode labels",
                self.x.nrows(),
                self.p.nrows()
            )));
        }
        if self.x.ncols() != self.p.ncols() {
            return Err(Error::Data("x and p shot counts differ".into()));
        }
        if self.x.ncols() < 2 {
            return Err(Error::Data(format!(
                "need at least 2 shots, got {}",
                self.x.ncols()
            )));
        }
        let increasing = self.mode_labels.windows(2).all(|w| w[0] < w[1]);
        let decreasing = self.mode_labels.windows(2).all(|w| w[0] > w[1]);
        if !(increasing || decreasing) {
            return Err(Error::Data("mode labels must be strictly monotonic".into()));
        }
        if self.x.iter().chain(self.p.iter()).any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite quadrature sample".into()));
        }
        Ok(())
    }
}

/// Second moments of the quadratures, split into mode-indexed blocks.
#[derive(Debug, Clone)]
pub struct CovarianceMatrix {
    pub xx: Array2<f64>,
    pub xp: Array2<f64>,
    pub px: Array2<f64>,
    pub pp: Array2<f64>,
    /// True when the blocks hold mean-subtracted noise correlations.
    pub central: bool,
}

impl CovarianceMatrix {
    pub fn n_modes(&self) -> usize {
        self.xx.nrows()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.xx.nrows();
        for (b, name) in [
            (&self.xx, "XX"),
            (&self.xp, "XP"),
            (&self.px, "PX"),
            (&self.pp, "PP"),
        ] {
            if b.nrows() != n || b.ncols() != n {
                return Err(Error::InvalidInput(format!(
                    "covariance block {name} is not {n}x{n}"
                )));
            }
        }
        let mut defect: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                defect = defect
                    .max((self.xx[[i, j]] - self.xx[[j, i]]).abs())
                    .max((self.pp[[i, j]] - self.pp[[j, i]]).abs())
                    .max((self.px[[i, j]] - self.xp[[j, i]]).abs());
            }
        }
        if defect > HERMITICITY_TOL {
            return Err(Error::InvalidInput(format!(
                "covariance blocks break symmetry by {defect:.3e}"
            )));
        }
        Ok(())
    }
}

/// First-order coherence `gamma_mn = <a_m^dag a_n>` (or its symmetric-ordered
/// counterpart when `vacuum_subtracted` is false).
#[derive(Debug, Clone)]
pub struct CoherencyMatrix {
    pub gamma: Array2<Complex64>,
    /// True when the per-mode vacuum offset 1/2 has been removed.
    pub vacuum_subtracted: bool,
}

impl CoherencyMatrix {
    pub fn n_modes(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn trace(&self) -> f64 {
        (0..self.n_modes()).map(|i| self.gamma[[i, i]].re).sum()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        let n = self.n_modes();
        let mut defect: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                defect = defect.max((self.gamma[[i, j]] - self.gamma[[j, i]].conj()).norm());
            }
        }
        defect
    }
}

/// Eigen-decomposition of a coherency matrix: principal mode occupations and
/// the corresponding orthonormal mode vectors.
#[derive(Debug, Clone)]
pub struct ModeDecomposition {
    /// Mean photon number per principal mode, descending.
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors as columns, phase-fixed so the largest-magnitude
    /// component of each is real positive.
    pub eigenvectors: Array2<Complex64>,
}

/// Second-moment blocks of a sample set.
///
/// With `central` set the sample means are removed first, giving quadrature
/// noise correlations; otherwise the blocks are raw moments. Both use the
/// 1/n divisor so that `central = raw - outer(mean, mean)` holds exactly.
pub fn covariance(samples: &QuadratureSamples, central: bool) -> Result<CovarianceMatrix> {
    samples.validate()?;
    let m = samples.n_modes();
    let n = samples.n_shots();
    let scale = 1.0 / n as f64;
    let (mut mean_x, mut mean_p) = (vec![0.0; m], vec![0.0; m]);
    if central {
        for i in 0..m {
            mean_x[i] = samples.x.row(i).sum() * scale;
            mean_p[i] = samples.p.row(i).sum() * scale;
        }
    }
    let mut xx = Array2::<f64>::zeros((m, m));
    let mut xp = Array2::<f64>::zeros((m, m));
    let mut pp = Array2::<f64>::zeros((m, m));
    for i in 0..m {
        let xi = samples.x.row(i);
        let pi = samples.p.row(i);
        for j in 0..m {
            let xj = samples.x.row(j);
            let pj = samples.p.row(j);
            let (mut sxx, mut sxp, mut spp) = (0.0, 0.0, 0.0);
            for s in 0..n {
                let (a, b) = (xi[s] - mean_x[i], xj[s] - mean_x[j]);
                let (c, d) = (pi[s] - mean_p[i], pj[s] - mean_p[j]);
                sxx += a * b;
                sxp += a * d;
                spp += c * d;
            }
            xx[[i, j]] = sxx * scale;
            xp[[i, j]] = sxp * scale;
            pp[[i, j]] = spp * scale;
        }
    }
    let px = xp.t().to_owned();
    Ok(CovarianceMatrix { xx, xp, px, pp, central })
}

/// Coherency matrix from raw quadrature moments.
///
/// Builds `(XX + PP + i(XP - PX)) / 2` per entry; with `vacuum_subtracted`
/// the symmetric-ordering offset `I/2` is removed so vacuum maps to zero.
pub fn coherency_from_quadratures(
    cov: &CovarianceMatrix,
    vacuum_subtracted: bool,
) -> Result<CoherencyMatrix> {
    cov.validate()?;
    if cov.central {
        return Err(Error::InvalidInput(
            "coherency needs raw moments; central covariance drops displacement terms".into(),
        ));
    }
    let m = cov.n_modes();
    let mut gamma = Array2::<Complex64>::zeros((m, m));
    for i in 0..m {
        for j in 0..m {
            let re = 0.5 * (cov.xx[[i, j]] + cov.pp[[i, j]]);
            let im = 0.5 * (cov.xp[[i, j]] - cov.px[[i, j]]);
            gamma[[i, j]] = Complex64::new(re, im);
        }
        if vacuum_subtracted {
            gamma[[i, i]] -= 0.5;
        }
    }
    Ok(CoherencyMatrix { gamma, vacuum_subtracted })
}

/// Coherency matrix by projecting a position-space one-body density matrix
/// onto a set of mode functions.
///
/// `rho[[i, j]]` approximates `<psi^dag(z_i) psi(z_j)>` on a uniform grid of
/// spacing `dz`; `modes` holds one mode function per row sampled on the same
/// grid. Modes must be orthonormal under the grid inner product.
pub fn coherency_from_density_matrix(
    rho: &Array2<Complex64>,
    dz: f64,
    modes: &Array2<Complex64>,
) -> Result<CoherencyMatrix> {
    let nz = rho.nrows();
    if rho.ncols() != nz {
        return Err(Error::InvalidInput("density matrix is not square".into()));
    }
    if modes.ncols() != nz {
        return Err(Error::InvalidInput(format!(
            "mode functions sampled on {} points, grid has {nz}",
            modes.ncols()
        )));
    }
    if !(dz > 0.0 && dz.is_finite()) {
        return Err(Error::InvalidInput(format!("grid step must be positive, got {dz}")));
    }
    let m = modes.nrows();
    for a in 0..m {
        for b in a..m {
            let mut overlap = Complex64::new(0.0, 0.0);
            for i in 0..nz {
                overlap += modes[[a, i]].conj() * modes[[b, i]];
            }
            overlap *= dz;
            let target = if a == b { 1.0 } else { 0.0 };
            if (overlap - target).norm() > 1e-8 {
                return Err(Error::InvalidInput(format!(
                    "modes {a} and {b} are not orthonormal on the grid: overlap {overlap}"
                )));
            }
        }
    }
    // gamma_mn = sum_ij phi_m(z_i) rho_ij conj(phi_n(z_j)) dz^2
    let mut gamma = Array2::<Complex64>::zeros((m, m));
    for a in 0..m {
        for b in 0..m {
            let mut acc = Complex64::new(0.0, 0.0);
            for i in 0..nz {
                let mut inner = Complex64::new(0.0, 0.0);
                for j in 0..nz {
                    inner += rho[[i, j]] * modes[[b, j]].conj();
                }
                acc += modes[[a, i]] * inner;
            }
            gamma[[a, b]] = acc * dz * dz;
        }
    }
    Ok(CoherencyMatrix { gamma, vacuum_subtracted: true })
}

/// Cyclic Jacobi diagonalization of a Hermitian matrix.
///
/// Each sweep zeroes every off-diagonal pair with a complex Givens rotation;
/// the accumulated rotations stay unitary to machine precision, so the
/// returned columns are orthonormal eigenvectors.
fn jacobi_hermitian(mut a: Array2<Complex64>) -> (Vec<f64>, Array2<Complex64>) {
    let n = a.nrows();
    let mut v = Array2::<Complex64>::eye(n);
    let scale: f64 = a.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    for _ in 0..60 {
        let mut off: f64 = 0.0;
        for p in 0..n {
            for q in (p + 1)..n {
                off = off.max(a[[p, q]].norm());
            }
        }
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[[p, q]];
                let mag = apq.norm();
                if mag <= 1e-300 {
                    continue;
                }
                // phase removal makes the 2x2 block real symmetric
                let phase = apq / mag;
                let app = a[[p, p]].re;
                let aqq = a[[q, q]].re;
                let tau = (aqq - app) / (2.0 * mag);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // U = diag(1, conj(phase)) * [[c, s], [-s, c]]:
                // col_p' = c*col_p - s*conj(phase)*col_q
                // col_q' = s*col_p + c*conj(phase)*col_q
                for r in 0..n {
                    let arp = a[[r, p]];
                    let arq = a[[r, q]];
                    a[[r, p]] = arp * c - arq * s * phase.conj();
                    a[[r, q]] = arp * s + arq * c * phase.conj();
                }
                for col in 0..n {
                    let apc = a[[p, col]];
                    let aqc = a[[q, col]];
                    a[[p, col]] = apc * c - aqc * s * phase;
                    a[[q, col]] = apc * s + aqc * c * phase;
                }
                for r in 0..n {
                    let vrp = v[[r, p]];
                    let vrq = v[[r, q]];
                    v[[r, p]] = vrp * c - vrq * s * phase.conj();
                    v[[r, q]] = vrp * s + vrq * c * phase.conj();
                }
            }
        }
    }
    let eigenvalues = (0..n).map(|i| a[[i, i]].re).collect();
    (eigenvalues, v)
}

/// Diagonalizes a coherency matrix into principal modes.
///
/// Eigenvalues are sorted descending; exact ties are broken by the first
/// differing eigenvector component so the output is reproducible. Each
/// eigenvector is rephased to make its largest-magnitude component real
/// positive.
pub fn principal_modes(gamma: &CoherencyMatrix) -> Result<ModeDecomposition> {
    let defect = gamma.hermiticity_defect();
    if defect > HERMITICITY_TOL {
        return Err(Error::InvalidInput(format!(
            "coherency matrix breaks Hermiticity by {defect:.3e}"
        )));
    }
    let n = gamma.n_modes();
    // symmetrize to kill roundoff asymmetry before iterating
    let mut work = gamma.gamma.clone();
    for i in 0..n {
        for j in 0..n {
            let h = 0.5 * (gamma.gamma[[i, j]] + gamma.gamma[[j, i]].conj());
            work[[i, j]] = h;
        }
    }
    let (vals, vecs) = jacobi_hermitian(work);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        vals[j].total_cmp(&vals[i]).then_with(|| {
            for r in 0..n {
                let a = vecs[[r, i]];
                let b = vecs[[r, j]];
                let c = a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im));
                if c != std::cmp::Ordering::Equal {
                    return c;
                }
            }
            std::cmp::Ordering::Equal
        })
    });

    let mut eigenvalues = Vec::with_capacity(n);
    let mut eigenvectors = Array2::<Complex64>::zeros((n, n));
    for (slot, &src) in order.iter().enumerate() {
        eigenvalues.push(vals[src]);
        let mut best = 0usize;
        let mut best_mag = -1.0;
        for r in 0..n {
            let mag = vecs[[r, src]].norm();
            if mag > best_mag + 1e-15 {
                best_mag = mag;
                best = r;
            }
        }
        let pivot = vecs[[best, src]];
        let rotor = if pivot.norm() > 0.0 {
            pivot.conj() / pivot.norm()
        } else {
            Complex64::new(1.0, 0.0)
        };
        for r in 0..n {
            eigenvectors[[r, slot]] = vecs[[r, src]] * rotor;
        }
    }
    Ok(ModeDecomposition { eigenvalues, eigenvectors })
}
