//! Homodyne tomography: quadrature histograms, inverse-Radon reconstruction
//! of Wigner functions, and rotated-Gaussian fits with squeezing metrics.
//!
//! A local-oscillator phase `phi` selects the quadrature
//! `X_phi = X cos(phi) + P sin(phi)`. Reconstruction is filtered
//! backprojection with a hard ramp cutoff `kc`; fits report variances
//! `(v1, v2)` along axes rotated by `theta`, with `theta` canonicalized to
//! `[0, pi)` and `v1 <= v2`.

use crate::grid::{GridSpec, WignerGrid};
use crate::{Error, Result};
use ndarray::{Array2, Array4};
use rayon::prelude::*;

/// Residual level above which a fit is considered non-Gaussian.
pub const GAUSSIAN_RESIDUAL_MAX: f64 = 0.05;

/// Minimum number of distinct LO phases accepted for reconstruction.
pub const MIN_PHASES: usize = 8;

/// Shot-resolved homodyne record over a (delay, phase, mode) grid.
///
/// `samples` holds raw difference-signal values indexed
/// `[tau][phi][mode][shot]`; dividing by `lo_calibration` converts them to
/// quadrature units.
#[derive(Debug, Clone)]
pub struct HomodyneDataset {
    /// Pump-probe delay values in femtoseconds.
    pub tau_grid: Vec<f64>,
    /// Local-oscillator phases in radians.
    pub phi_grid: Vec<f64>,
    /// Mode labels (wavelengths in nanometres).
    pub mode_labels: Vec<f64>,
    /// Shots recorded per (tau, phi) cell.
    pub n_shots: usize,
    /// Scale from quadrature units to raw signal units.
    pub lo_calibration: f64,
    /// Raw samples, shape `[n_tau, n_phi, n_modes, n_shots]`.
    pub samples: Array4<f64>,
}

impl HomodyneDataset {
    /// Checks dimensions, finiteness, and phase coverage.
    pub fn validate(&self) -> Result<()> {
        let shape = self.samples.shape();
        let expect = [
            self.tau_grid.len(),
            self.phi_grid.len(),
            self.mode_labels.len(),
            self.n_shots,
        ];
        if shape != expect {
            return Err(Error::Data(format!(
                "sample array shape {shape:?} does not match grids {expect:?}"
            )));
        }
        if self.tau_grid.is_empty() || self.mode_labels.is_empty() {
            return Err(Error::Data("empty delay or mode grid".into()));
        }
        if self.n_shots < 2 {
            return Err(Error::Data(format!(
                "need at least 2 shots per cell, got {}",
                self.n_shots
            )));
        }
        if !(self.lo_calibration.is_finite() && self.lo_calibration > 0.0) {
            return Err(Error::Data(format!(
                "lo_calibration must be positive, got {}",
                self.lo_calibration
            )));
        }
        validate_phase_grid(&self.phi_grid)?;
        for (v, name) in [
            (&self.tau_grid, "tau_grid"),
            (&self.phi_grid, "phi_grid"),
            (&self.mode_labels, "mode_labels"),
        ] {
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::Data(format!("non-finite entry in {name}")));
            }
        }
        if self.samples.iter().any(|x| !x.is_finite()) {
            return Err(Error::Data("non-finite sample value".into()));
        }
        Ok(())
    }
}

/// Requires >= MIN_PHASES distinct phases covering half a turn.
///
/// Quadrature directions are pi-periodic, so a grid of n equally spaced
/// phases on `[0, pi)` covers every direction while spanning only
/// `pi - pi/n`; the span check allows that reading.
pub(crate) fn validate_phase_grid(phi: &[f64]) -> Result<()> {
    let mut distinct: Vec<f64> = phi.to_vec();
    distinct.sort_by(|a, b| a.total_cmp(b));
    distinct.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    if distinct.len() < MIN_PHASES {
        return Err(Error::InvalidInput(format!(
            "need at least {MIN_PHASES} distinct LO phases, got {}",
            distinct.len()
        )));
    }
    let span = distinct.last().unwrap() - distinct.first().unwrap();
    let needed = std::f64::consts::PI * (1.0 - 1.0 / distinct.len() as f64) - 1e-9;
    if span < needed {
        return Err(Error::InvalidInput(format!(
            "LO phases span {span:.6} rad, need at least {needed:.6}"
        )));
    }
    Ok(())
}

/// Uniform quadrature binning for histogram construction.
#[derive(Debug, Clone, Copy)]
pub struct BinSpec {
    pub s_min: f64,
    pub s_max: f64,
    pub n_bins: usize,
}

impl BinSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.s_min.is_finite() && self.s_max.is_finite() && self.s_min < self.s_max) {
            return Err(Error::InvalidInput(format!(
                "bad bin range [{}, {}]",
                self.s_min, self.s_max
            )));
        }
        if self.n_bins < 2 {
            return Err(Error::InvalidInput(format!(
                "need at least 2 bins, got {}",
                self.n_bins
            )));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        (self.s_max - self.s_min) / self.n_bins as f64
    }
}

/// Per-phase quadrature histograms, each row normalized to unit sum.
#[derive(Debug, Clone)]
pub struct QuadraturePDF {
    pub phi_grid: Vec<f64>,
    /// `n_bins + 1` edges of the uniform quadrature bins.
    pub bin_edges: Vec<f64>,
    /// Probability per bin, shape `[n_phi, n_bins]`.
    pub pr: Array2<f64>,
    /// Samples outside the bin range, counted rather than silently dropped.
    pub n_out_of_range: usize,
}

impl QuadraturePDF {
    pub fn n_bins(&self) -> usize {
        self.bin_edges.len() - 1
    }

    pub fn bin_width(&self) -> f64 {
        self.bin_edges[1] - self.bin_edges[0]
    }

    pub fn bin_center(&self, j: usize) -> f64 {
        0.5 * (self.bin_edges[j] + self.bin_edges[j + 1])
    }
}

/// Histograms the calibrated quadrature samples of one (tau, mode) cell.
///
/// Raw values are divided by `lo_calibration` before binning. Each phase row
/// is normalized over its in-range count; out-of-range samples are tallied in
/// `n_out_of_range`.
pub fn build_pdf(
    dataset: &HomodyneDataset,
    tau_idx: usize,
    mode_idx: usize,
    bins: BinSpec,
) -> Result<QuadraturePDF> {
    dataset.validate()?;
    bins.validate()?;
    if tau_idx >= dataset.tau_grid.len() || mode_idx >= dataset.mode_labels.len() {
        return Err(Error::Data(format!(
            "no cell at tau index {tau_idx}, mode index {mode_idx}"
        )));
    }
    let n_phi = dataset.phi_grid.len();
    let width = bins.width();
    let mut pr = Array2::<f64>::zeros((n_phi, bins.n_bins));
    let mut n_oor = 0usize;
    for (p, mut row) in pr.outer_iter_mut().enumerate() {
        let mut in_range = 0usize;
        for s in 0..dataset.n_shots {
            let val = dataset.samples[[tau_idx, p, mode_idx, s]] / dataset.lo_calibration;
            let j = ((val - bins.s_min) / width).floor();
            let j = if val == bins.s_max {
                bins.n_bins as f64 - 1.0
            } else {
                j
            };
            if j < 0.0 || j >= bins.n_bins as f64 {
                n_oor += 1;
                continue;
            }
            row[j as usize] += 1.0;
            in_range += 1;
        }
        if in_range == 0 {
            return Err(Error::Data(format!(
                "no in-range samples at phase index {p}"
            )));
        }
        row.mapv_inplace(|c| c / in_range as f64);
    }
    let bin_edges = (0..=bins.n_bins)
        .map(|j| bins.s_min + j as f64 * width)
        .collect();
    Ok(QuadraturePDF {
        phi_grid: dataset.phi_grid.clone(),
        bin_edges,
        pr,
        n_out_of_range: n_oor,
    })
}

/// Default ramp cutoff for a given bin width: 80% of the bin Nyquist limit.
pub fn default_kc(bin_width: f64) -> f64 {
    0.8 * std::f64::consts::PI / bin_width
}

/// Ramp-filter kernel with hard cutoff: `2 int_0^kc k cos(k t) dk`.
///
/// Written with `cos(u) - 1 = -2 sin^2(u/2)` so no cancellation occurs at
/// small arguments.
fn ramp_kernel(kc: f64, t: f64) -> f64 {
    let u = kc * t;
    if u.abs() < 1e-100 {
        return kc * kc;
    }
    let half_ratio = (0.5 * u).sin() / u;
    2.0 * kc * kc * (u.sin() / u - 2.0 * half_ratio * half_ratio)
}

/// Reconstructs a Wigner function from per-phase quadrature histograms by
/// filtered backprojection with ramp cutoff `kc`.
///
/// Phases beyond `[0, pi)` are folded using `X_{phi+pi} = -X_phi`. Phase
/// weights are periodic midpoint widths, so nonuniform grids integrate
/// correctly. The result is approximately normalized; the deficit is visible
/// through [`WignerGrid::normalization`].
pub fn inverse_radon(pdf: &QuadraturePDF, spec: &GridSpec, kc: f64) -> Result<WignerGrid> {
    spec.validate()?;
    validate_phase_grid(&pdf.phi_grid)?;
    let width = pdf.bin_width();
    let nyquist = std::f64::consts::PI / width;
    if !(kc > 0.0 && kc.is_finite()) {
        return Err(Error::InvalidInput(format!("cutoff kc must be positive, got {kc}")));
    }
    if kc > nyquist * (1.0 + 1e-12) {
        return Err(Error::InvalidInput(format!(
            "cutoff kc = {kc:.6} exceeds bin Nyquist limit {nyquist:.6}"
        )));
    }

    let pi = std::f64::consts::PI;
    // fold each phase into [0, pi); mirrored rows read bins back to front
    let mut folded: Vec<(f64, usize, bool)> = pdf
        .phi_grid
        .iter()
        .enumerate()
        .map(|(row, &phi)| {
            let t = phi.rem_euclid(2.0 * pi);
            if t < pi {
                (t, row, false)
            } else {
                (t - pi, row, true)
            }
        })
        .collect();
    folded.sort_by(|a, b| a.0.total_cmp(&b.0));
    let m = folded.len();
    // periodic midpoint weights; they sum to pi exactly
    let weights: Vec<f64> = (0..m)
        .map(|i| {
            let prev = if i == 0 {
                folded[m - 1].0 - pi
            } else {
                folded[i - 1].0
            };
            let next = if i == m - 1 {
                folded[0].0 + pi
            } else {
                folded[i + 1].0
            };
            0.5 * (next - prev)
        })
        .collect();

    let n_bins = pdf.n_bins();
    let centers: Vec<f64> = (0..n_bins).map(|j| pdf.bin_center(j)).collect();
    let norm = 1.0 / (4.0 * pi * pi);

    let rows: Vec<Vec<f64>> = (0..spec.nx)
        .into_par_iter()
        .map(|ix| {
            let x = spec.x_at(ix);
            let mut row = vec![0.0; spec.np];
            for (ip, slot) in row.iter_mut().enumerate() {
                let p = spec.p_at(ip);
                let mut acc = 0.0;
                for (k, &(phi, src, mirrored)) in folded.iter().enumerate() {
                    let proj = x * phi.cos() + p * phi.sin();
                    let mut sum = 0.0;
                    for j in 0..n_bins {
                        let prob = pdf.pr[[src, j]];
                        if prob == 0.0 {
                            continue;
                        }
                        let s = if mirrored { -centers[j] } else { centers[j] };
                        sum += prob * ramp_kernel(kc, s - proj);
                    }
                    acc += weights[k] * sum;
                }
                *slot = norm * acc;
            }
            row
        })
        .collect();
    let mut values = Array2::<f64>::zeros((spec.nx, spec.np));
    for (ix, row) in rows.iter().enumerate() {
        for (ip, &v) in row.iter().enumerate() {
            values[[ix, ip]] = v;
        }
    }

    WignerGrid::new(*spec, values)
}

/// Rotated-Gaussian description of a Wigner lobe.
///
/// The model is `A exp(-(r1^2/v1 + r2^2/v2)/2)` with
/// `r = R(theta)^T (x, p) - d`, i.e. `d` is the centre expressed in the
/// rotated frame. Canonical form has `theta` in `[0, pi)` and `v1 <= v2`.
#[derive(Debug, Clone, Copy)]
pub struct GaussianFit {
    pub amplitude: f64,
    /// Variance along the rotated axis `(cos theta, sin theta)`.
    pub v1: f64,
    /// Variance along the orthogonal axis.
    pub v2: f64,
    /// Rotation of the principal frame, radians in `[0, pi)`.
    pub theta: f64,
    /// Centre in the rotated frame.
    pub d1: f64,
    pub d2: f64,
    /// RMS misfit divided by the peak data magnitude.
    pub residual: f64,
    /// Set when v1 and v2 agree to rounding, making theta unidentifiable.
    pub degenerate: bool,
    /// Set when v1 * v2 falls more than 10% below the uncertainty bound 1/4.
    pub below_heisenberg: bool,
}

impl GaussianFit {
    /// Centre of the lobe in unrotated (X, P) coordinates.
    pub fn mean(&self) -> (f64, f64) {
        let (s, c) = self.theta.sin_cos();
        (c * self.d1 - s * self.d2, s * self.d1 + c * self.d2)
    }

    /// True when the residual exceeds the Gaussian-acceptability level.
    pub fn non_gaussian(&self) -> bool {
        self.residual > GAUSSIAN_RESIDUAL_MAX
    }
}

/// Folds theta into `[0, pi)` and orders the axes so `v1 <= v2`.
fn canonicalize(params: &mut [f64; 6]) {
    let pi = std::f64::consts::PI;
    // model is invariant under theta += pi with d -> -d
    let mut theta = params[5].rem_euclid(pi);
    let half_turns = ((params[5] - theta) / pi).round() as i64;
    if half_turns.rem_euclid(2) == 1 {
        params[1] = -params[1];
        params[2] = -params[2];
    }
    if params[3] > params[4] {
        // swap axes: theta += pi/2, d -> (d2, -d1)
        params.swap(3, 4);
        let (d1, d2) = (params[1], params[2]);
        params[1] = d2;
        params[2] = -d1;
        theta += 0.5 * pi;
        if theta >= pi {
            theta -= pi;
            params[1] = -params[1];
            params[2] = -params[2];
        }
    }
    params[5] = theta;
}

struct FitWork {
    xs: Vec<f64>,
    ps: Vec<f64>,
    data: Vec<f64>,
    peak: f64,
}

impl FitWork {
    /// Residual vector and Jacobian for params (A, d1, d2, ln v1, ln v2, theta).
    fn residuals(&self, q: &[f64; 6], jac: Option<&mut Vec<[f64; 6]>>) -> (Vec<f64>, f64) {
        let (a, d1, d2, u1, u2, theta) = (q[0], q[1], q[2], q[3], q[4], q[5]);
        let (v1, v2) = (u1.exp(), u2.exp());
        let (s, c) = theta.sin_cos();
        let n = self.data.len();
        let mut res = vec![0.0; n];
        let mut cost = 0.0;
        let mut jac = jac;
        if let Some(j) = jac.as_deref_mut() {
            j.clear();
            j.reserve(n);
        }
        for i in 0..n {
            let (x, p) = (self.xs[i], self.ps[i]);
            let y1 = c * x + s * p;
            let y2 = -s * x + c * p;
            let r1 = y1 - d1;
            let r2 = y2 - d2;
            let e = (-0.5 * (r1 * r1 / v1 + r2 * r2 / v2)).exp();
            let f = a * e;
            let r = f - self.data[i];
            res[i] = r;
            cost += r * r;
            if let Some(j) = jac.as_deref_mut() {
                j.push([
                    e,
                    f * r1 / v1,
                    f * r2 / v2,
                    0.5 * f * r1 * r1 / v1,
                    0.5 * f * r2 * r2 / v2,
                    f * (-r1 / v1 * y2 + r2 / v2 * y1),
                ]);
            }
        }
        (res, cost)
    }
}

/// Solves the symmetric 6x6 system via Gaussian elimination with pivoting.
fn solve6(mut m: [[f64; 7]; 6]) -> Option<[f64; 6]> {
    for col in 0..6 {
        let pivot = (col..6).max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))?;
        if m[pivot][col].abs() < 1e-300 {
            return None;
        }
        m.swap(col, pivot);
        let inv = 1.0 / m[col][col];
        for row in 0..6 {
            if row == col {
                continue;
            }
            let factor = m[row][col] * inv;
            for k in col..7 {
                m[row][k] -= factor * m[col][k];
            }
        }
    }
    let mut out = [0.0; 6];
    for i in 0..6 {
        out[i] = m[i][6] / m[i][i];
    }
    Some(out)
}

fn levenberg(work: &FitWork, start: [f64; 6]) -> ([f64; 6], f64) {
    let mut q = start;
    let mut jac: Vec<[f64; 6]> = Vec::new();
    let (mut res, mut cost) = work.residuals(&q, Some(&mut jac));
    let mut lambda = 1e-3;
    for _ in 0..200 {
        // normal equations with Levenberg damping on the diagonal
        let mut m = [[0.0f64; 7]; 6];
        for (row, r) in jac.iter().zip(res.iter()) {
            for i in 0..6 {
                for k in i..6 {
                    m[i][k] += row[i] * row[k];
                }
                m[i][6] -= row[i] * r;
            }
        }
        for i in 0..6 {
            for k in 0..i {
                m[i][k] = m[k][i];
            }
        }
        let mut stepped = false;
        for _ in 0..12 {
            let mut damped = m;
            for i in 0..6 {
                damped[i][i] += lambda * m[i][i].max(1e-12);
            }
            let Some(delta) = solve6(damped) else {
                lambda *= 10.0;
                continue;
            };
            let mut trial = q;
            for i in 0..6 {
                trial[i] += delta[i];
            }
            let (_, trial_cost) = work.residuals(&trial, None);
            if trial_cost < cost {
                let rel_drop = (cost - trial_cost) / cost.max(1e-300);
                q = trial;
                cost = trial_cost;
                lambda = (lambda * 0.25).max(1e-14);
                stepped = true;
                if rel_drop < 1e-14 {
                    let (_, c2) = work.residuals(&q, Some(&mut jac));
                    return (q, c2);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !stepped {
            break;
        }
        let (r2, c2) = work.residuals(&q, Some(&mut jac));
        res = r2;
        cost = c2;
    }
    (q, cost)
}

/// Seeds (A, d, v, theta) from the moments of the positive part of the grid.
fn moment_seed(w: &WignerGrid) -> [f64; 6] {
    let spec = &w.spec;
    let mut mass = 0.0;
    let (mut mx, mut mp) = (0.0, 0.0);
    for ix in 0..spec.nx {
        for ip in 0..spec.np {
            let v = w.values[[ix, ip]].max(0.0);
            mass += v;
            mx += v * spec.x_at(ix);
            mp += v * spec.p_at(ip);
        }
    }
    if mass <= 0.0 {
        return [1.0, 0.0, 0.0, 0.5f64.ln(), 0.5f64.ln(), 0.0];
    }
    mx /= mass;
    mp /= mass;
    let (mut sxx, mut spp, mut sxp) = (0.0, 0.0, 0.0);
    for ix in 0..spec.nx {
        for ip in 0..spec.np {
            let v = w.values[[ix, ip]].max(0.0);
            let dx = spec.x_at(ix) - mx;
            let dp = spec.p_at(ip) - mp;
            sxx += v * dx * dx;
            spp += v * dp * dp;
            sxp += v * dx * dp;
        }
    }
    sxx /= mass;
    spp /= mass;
    sxp /= mass;
    let half_diff = 0.5 * (sxx - spp);
    let radius = (half_diff * half_diff + sxp * sxp).sqrt();
    let mean = 0.5 * (sxx + spp);
    let theta = 0.5 * sxp.atan2(half_diff);
    let v1 = (mean + radius).max(1e-4);
    let v2 = (mean - radius).max(1e-4);
    let (s, c) = theta.sin_cos();
    let d1 = c * mx + s * mp;
    let d2 = -s * mx + c * mp;
    let peak = w.max_value().max(1e-300);
    [peak, d1, d2, v1.ln(), v2.ln(), theta]
}

/// Fits a rotated 2D Gaussian to a Wigner grid by damped least squares.
///
/// Runs from a moment-based seed plus five deterministically perturbed
/// restarts and keeps the lowest-cost solution. Fails if no restart reaches a
/// usable optimum (non-positive amplitude or variance overflow).
pub fn fit_gaussian2d(w: &WignerGrid) -> Result<GaussianFit> {
    let spec = &w.spec;
    let n = spec.nx * spec.np;
    let mut xs = Vec::with_capacity(n);
    let mut ps = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n);
    for ix in 0..spec.nx {
        for ip in 0..spec.np {
            xs.push(spec.x_at(ix));
            ps.push(spec.p_at(ip));
            data.push(w.values[[ix, ip]]);
        }
    }
    let peak = data.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if peak <= 0.0 {
        return Err(Error::Numerics("cannot fit an all-zero grid".into()));
    }
    let work = FitWork { xs, ps, data, peak };
    let seed = moment_seed(w);

    let mut best: Option<([f64; 6], f64)> = None;
    for k in 0..6 {
        let mut start = seed;
        if k > 0 {
            let kf = k as f64;
            start[3] += 0.35 * if k % 2 == 0 { kf * 0.5 } else { -kf * 0.5 };
            start[4] -= 0.25 * if k % 3 == 0 { kf * 0.5 } else { -kf * 0.4 };
            start[5] += 0.3 * kf;
            start[0] *= 1.0 + 0.2 * kf;
        }
        let (q, cost) = levenberg(&work, start);
        if !cost.is_finite() || q[0] <= 0.0 || q[3].abs() > 200.0 || q[4].abs() > 200.0 {
            continue;
        }
        if best.as_ref().is_none_or(|(_, c)| cost < *c) {
            best = Some((q, cost));
        }
    }
    let Some((mut q, cost)) = best else {
        return Err(Error::Numerics(
            "gaussian fit failed to converge from any restart".into(),
        ));
    };
    canonicalize(&mut q);
    let v1 = q[3].exp();
    let v2 = q[4].exp();
    let residual = (cost / n as f64).sqrt() / work.peak;
    Ok(GaussianFit {
        amplitude: q[0],
        v1,
        v2,
        theta: q[5],
        d1: q[1],
        d2: q[2],
        residual,
        degenerate: (v1 - v2).abs() <= 1e-6 * v2.max(v1),
        below_heisenberg: v1 * v2 < 0.25 * 0.9,
    })
}

/// Renders the fitted model on a grid, for idempotence checks and residual maps.
pub fn render_fit(fit: &GaussianFit, spec: &GridSpec) -> Result<WignerGrid> {
    spec.validate()?;
    let (s, c) = fit.theta.sin_cos();
    let mut values = Array2::<f64>::zeros((spec.nx, spec.np));
    for ix in 0..spec.nx {
        let x = spec.x_at(ix);
        for ip in 0..spec.np {
            let p = spec.p_at(ip);
            let r1 = c * x + s * p - fit.d1;
            let r2 = -s * x + c * p - fit.d2;
            values[[ix, ip]] =
                fit.amplitude * (-0.5 * (r1 * r1 / fit.v1 + r2 * r2 / fit.v2)).exp();
        }
    }
    WignerGrid::new(*spec, values)
}

/// Squeezing levels in decibels relative to a reference variance, plus the
/// Wigner negativity volume when a grid is supplied.
#[derive(Debug, Clone, Copy)]
pub struct SqueezingMetrics {
    /// `10 log10(min(v1, v2) / reference)`; negative means squeezed.
    pub db_min: f64,
    /// `10 log10(max(v1, v2) / reference)`.
    pub db_max: f64,
    /// Integral of `|min(W, 0)|`, when a reconstruction is available.
    pub negativity_volume: Option<f64>,
}

/// Converts fitted variances to dB against a shot-noise reference.
pub fn squeezing_metrics(
    fit: &GaussianFit,
    reference: f64,
    wigner: Option<&WignerGrid>,
) -> Result<SqueezingMetrics> {
    if !(reference > 0.0 && reference.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "reference variance must be positive, got {reference}"
        )));
    }
    let lo = fit.v1.min(fit.v2);
    let hi = fit.v1.max(fit.v2);
    Ok(SqueezingMetrics {
        db_min: 10.0 * (lo / reference).log10(),
        db_max: 10.0 * (hi / reference).log10(),
        negativity_volume: wigner.map(|w| w.negativity_volume()),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::{kerr_density_matrix_auto, wigner_exact, CoherentSpec, KerrCoupling};
    use approx::assert_abs_diff_eq;

    fn gaussian_grid(v1: f64, v2: f64, theta: f64, d1: f64, d2: f64, spec: &GridSpec) -> WignerGrid {
        let model = GaussianFit {
            amplitude: 1.0 / (2.0 * std::f64::consts::PI * (v1 * v2).sqrt()),
            v1,
            v2,
            theta,
            d1,
            d2,
            residual: 0.0,
            degenerate: false,
            below_heisenberg: false,
        };
        render_fit(&model, spec).unwrap()
    }

    #[test]
    fn ramp_kernel_matches_textbook_form_and_small_argument_series() {
        let kc: f64 = 7.0;
        for &t in &[0.5f64, 0.11, 2.3] {
            let u = kc * t;
            let direct = 2.0 * kc * kc * (u.sin() / u + (u.cos() - 1.0) / (u * u));
            assert_abs_diff_eq!(ramp_kernel(kc, t), direct, epsilon = 1e-12 * kc * kc);
        }
        for &t in &[1e-6f64, 3e-7] {
            let u = kc * t;
            let series = kc * kc * (1.0 - 0.25 * u * u);
            assert_abs_diff_eq!(ramp_kernel(kc, t), series, epsilon = 1e-12 * kc * kc);
        }
        assert_abs_diff_eq!(ramp_kernel(kc, 0.0), kc * kc, epsilon = 1e-12);
    }

    #[test]
    fn phase_grid_validation_accepts_periodic_coverage() {
        let n = 12;
        let grid: Vec<f64> = (0..n)
            .map(|k| k as f64 * std::f64::consts::PI / n as f64)
            .collect();
        validate_phase_grid(&grid).unwrap();
        assert!(validate_phase_grid(&grid[..6]).is_err());
        let narrow: Vec<f64> = (0..n).map(|k| k as f64 * 0.1).collect();
        assert!(validate_phase_grid(&narrow).is_err());
    }

    #[test]
    fn exact_gaussian_grid_is_recovered_to_high_precision() {
        let spec = GridSpec::square(6.0, 121);
        let (v1, v2, theta, d1, d2) = (0.3, 0.8, 0.5235987755982988, 1.0, -0.5);
        let w = gaussian_grid(v1, v2, theta, d1, d2, &spec);
        let fit = fit_gaussian2d(&w).unwrap();
        assert_abs_diff_eq!(fit.v1, v1, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.v2, v2, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.theta, theta, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.d1, d1, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.d2, d2, epsilon = 1e-6);
        assert!(fit.residual < 1e-8);
        assert!(!fit.degenerate);
        assert!(!fit.non_gaussian());
    }

    #[test]
    fn fit_is_idempotent_on_its_own_rendering() {
        let spec = GridSpec::square(6.0, 101);
        let w = gaussian_grid(0.25, 1.0, 2.1, -0.4, 0.7, &spec);
        let first = fit_gaussian2d(&w).unwrap();
        let rendered = render_fit(&first, &spec).unwrap();
        let second = fit_gaussian2d(&rendered).unwrap();
        assert_abs_diff_eq!(first.v1, second.v1, epsilon = 1e-9);
        assert_abs_diff_eq!(first.v2, second.v2, epsilon = 1e-9);
        assert_abs_diff_eq!(first.theta, second.theta, epsilon = 1e-9);
        assert_abs_diff_eq!(first.d1, second.d1, epsilon = 1e-9);
        assert_abs_diff_eq!(first.d2, second.d2, epsilon = 1e-9);
    }

    #[test]
    fn canonical_form_orders_axes_and_folds_theta() {
        // same model expressed with swapped axes and shifted theta
        let spec = GridSpec::square(6.0, 101);
        let a = gaussian_grid(0.3, 0.9, 0.4, 0.6, -0.2, &spec);
        let b = gaussian_grid(
            0.9,
            0.3,
            0.4 + 1.5 * std::f64::consts::PI,
            0.2,
            0.6,
            &spec,
        );
        let fa = fit_gaussian2d(&a).unwrap();
        let fb = fit_gaussian2d(&b).unwrap();
        assert_abs_diff_eq!(fa.v1, fb.v1, epsilon = 1e-8);
        assert_abs_diff_eq!(fa.v2, fb.v2, epsilon = 1e-8);
        assert_abs_diff_eq!(fa.theta, fb.theta, epsilon = 1e-8);
        assert_abs_diff_eq!(fa.d1, fb.d1, epsilon = 1e-7);
        assert_abs_diff_eq!(fa.d2, fb.d2, epsilon = 1e-7);
        assert!(fa.v1 <= fa.v2);
        assert!((0.0..std::f64::consts::PI).contains(&fa.theta));
    }

    #[test]
    fn isotropic_grid_is_flagged_degenerate() {
        let spec = GridSpec::square(5.0, 81);
        let w = gaussian_grid(0.5, 0.5, 0.0, 0.3, 0.1, &spec);
        let fit = fit_gaussian2d(&w).unwrap();
        assert!(fit.degenerate);
        assert_abs_diff_eq!(fit.v1, 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.v2, 0.5, epsilon = 1e-6);
    }

    #[test]
    fn strongly_driven_state_is_flagged_non_gaussian() {
        let rho = kerr_density_matrix_auto(
            &CoherentSpec::real(2.0).unwrap(),
            KerrCoupling::new(4.0).unwrap(),
        )
        .unwrap();
        let spec = GridSpec::square(5.0, 101);
        let w = wigner_exact(&rho, &spec).unwrap();
        let fit = fit_gaussian2d(&w).unwrap();
        assert!(fit.non_gaussian(), "residual {}", fit.residual);
    }

    #[test]
    fn squeezing_metrics_match_reference_values() {
        let fit = GaussianFit {
            amplitude: 1.0,
            v1: 0.158,
            v2: 0.5,
            theta: 0.0,
            d1: 0.0,
            d2: 0.0,
            residual: 0.0,
            degenerate: false,
            below_heisenberg: false,
        };
        let m = squeezing_metrics(&fit, 0.5, None).unwrap();
        assert_abs_diff_eq!(m.db_min, -5.0035, epsilon = 0.002);
        assert_abs_diff_eq!(m.db_max, 0.0, epsilon = 1e-12);
        assert!(m.negativity_volume.is_none());
        assert!(squeezing_metrics(&fit, 0.0, None).is_err());
    }

    #[test]
    fn kernel_cutoff_validation_rejects_super_nyquist_values() {
        let pdf = QuadraturePDF {
            phi_grid: (0..10)
                .map(|k| k as f64 * std::f64::consts::PI / 10.0)
                .collect(),
            bin_edges: (0..=40).map(|j| -5.0 + 0.25 * j as f64).collect(),
            pr: Array2::zeros((10, 40)),
            n_out_of_range: 0,
        };
        let spec = GridSpec::square(4.0, 33);
        let nyq = std::f64::consts::PI / 0.25;
        assert!(inverse_radon(&pdf, &spec, nyq * 1.01).is_err());
        assert!(inverse_radon(&pdf, &spec, -1.0).is_err());
        assert!(inverse_radon(&pdf, &spec, nyq * 0.8).is_ok());
    }
}
