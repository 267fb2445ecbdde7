//! Command-line front end.
//!
//! Every subcommand resolves one [`PipelineConfig`], writes its outputs into
//! the configured directory, and finishes by emitting `digests.txt` (content
//! hashes of every output, in write order) and `run_manifest.txt` (tool
//! version, seed, input digests, output list, wall clock). Outputs are
//! deterministic for a given (config, seed) regardless of thread count, so
//! `digests.txt` doubles as a reproducibility witness.
//!
//! Stage defaults compose into the `pipeline` subcommand: `synth` writes the
//! raw dataset, `filter` a carrier low-passed copy plus a mean-trace
//! comparison, while `reconstruct`, `fit`, and `corr` analyze the raw records
//! (per-shot statistics must not be mixed along the delay axis) and `rin`
//! spectrally analyzes one shot stream.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Parser, Subcommand};
use ndarray::Array2;
use num_complex::Complex64;

use crate::config::PipelineConfig;
use crate::fock::{
    gaussian_fidelity, gaussian_reference, kerr_density_matrix, kerr_moments, CoherentSpec,
    KerrCoupling,
};
use crate::grid::GridSpec;
use crate::io::{
    file_digest, fmt_f64, kv_get, read_dataset, read_key_values, read_wigner, write_dataset,
    write_ensemble, write_key_values, write_matrix, write_spectrum, write_table, write_wigner,
    DataFormat,
};
use crate::modes::{
    coherency_from_density_matrix, coherency_from_quadratures, covariance, principal_modes,
    QuadratureSamples,
};
use crate::sigproc::{band_average_rin, edge_affected_count, filter_dataset, psd};
use crate::synth::sample_homodyne;
use crate::tomography::{build_pdf, fit_gaussian2d, inverse_radon, squeezing_metrics};
use crate::twa::{
    init_ensemble, mode_quadratures, one_body_density_matrix, propagate, single_mode_chi_bar,
    TrajectoryEnsemble,
};
use crate::util::default_fock_cutoff;
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICS: i32 = 4;
pub const EXIT_IO: i32 = 5;

/// Maps an error to the exit-status contract.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidInput(_) => EXIT_CONFIG,
        Error::Data(_) => EXIT_DATA,
        Error::Numerics(_) => EXIT_NUMERICS,
        Error::Io { .. } => EXIT_IO,
    }
}

#[derive(Parser)]
#[command(name = "sqz", version, about = "Squeezed-light simulation and analysis pipeline")]
struct Cli {
    /// Configuration file (TOML); missing keys fall back to defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory override.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker thread count (default: one per core).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Sample payload encoding override: binary or text.
    #[arg(long, global = true)]
    format: Option<String>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact single-mode Kerr sweep: variance, Wigner, and fidelity tables.
    Kerr,
    /// Stochastic multimode propagation with a single-mode comparison table.
    Twa,
    /// Synthesize a shot-resolved homodyne dataset.
    Synth,
    /// Low-pass a dataset along the delay axis at the carrier cutoff.
    Filter {
        /// Dataset manifest to filter (default: <out>/dataset.manifest).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Reconstruct Wigner grids for every (delay, mode) cell.
    Reconstruct {
        /// Dataset manifest to reconstruct (default: <out>/dataset.manifest).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Fit rotated Gaussians to reconstructed grids and tabulate squeezing.
    Fit {
        /// Reconstruction manifest (default: <out>/reconstruction.manifest).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Multimode covariance, coherency, and principal-mode decomposition.
    Corr {
        /// Dataset manifest to analyze (default: <out>/dataset.manifest).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Delay index of the analyzed cell.
        #[arg(long, default_value_t = 0)]
        tau_index: usize,
    },
    /// Welch spectrum and band-averaged RIN of one shot stream.
    Rin {
        /// Dataset manifest to analyze (default: <out>/dataset.manifest).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Full chain: synth, filter, reconstruct, fit, corr, rin.
    Pipeline,
}

impl Command {
    fn label(&self) -> &'static str {
        match self {
            Command::Kerr => "kerr",
            Command::Twa => "twa",
            Command::Synth => "synth",
            Command::Filter { .. } => "filter",
            Command::Reconstruct { .. } => "reconstruct",
            Command::Fit { .. } => "fit",
            Command::Corr { .. } => "corr",
            Command::Rin { .. } => "rin",
            Command::Pipeline => "pipeline",
        }
    }
}

/// Parses arguments, runs the selected command, and returns the exit status.
pub fn main_entry<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_CONFIG,
            };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.threads {
        // the global pool can be installed only once per process; later calls
        // (tests, repeated entry) keep the existing pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let mut ctx = Ctx::new(&cli)?;
    match &cli.command {
        Command::Kerr => cmd_kerr(&mut ctx)?,
        Command::Twa => cmd_twa(&mut ctx)?,
        Command::Synth => cmd_synth(&mut ctx)?,
        Command::Filter { input } => cmd_filter(&mut ctx, input.as_deref())?,
        Command::Reconstruct { input } => cmd_reconstruct(&mut ctx, input.as_deref())?,
        Command::Fit { input } => cmd_fit(&mut ctx, input.as_deref())?,
        Command::Corr { input, tau_index } => cmd_corr(&mut ctx, input.as_deref(), *tau_index)?,
        Command::Rin { input } => cmd_rin(&mut ctx, input.as_deref())?,
        Command::Pipeline => cmd_pipeline(&mut ctx)?,
    }
    ctx.finish()
}

/// Per-run state: resolved configuration, output bookkeeping, input digests.
struct Ctx {
    config: PipelineConfig,
    out: PathBuf,
    format: DataFormat,
    label: &'static str,
    outputs: Vec<PathBuf>,
    inputs: Vec<(String, String)>,
    started: Instant,
}

impl Ctx {
    fn new(cli: &Cli) -> Result<Ctx> {
        let mut config = match &cli.config {
            Some(path) => PipelineConfig::load(path)?,
            None => PipelineConfig::default(),
        };
        if let Some(seed) = cli.seed {
            config.seed = seed;
        }
        if let Some(out) = &cli.out {
            config.output.dir = out.display().to_string();
        }
        if let Some(format) = &cli.format {
            config.output.format = format.clone();
        }
        config.validate()?;
        let format = config.data_format()?;
        let out = PathBuf::from(&config.output.dir);
        std::fs::create_dir_all(&out).map_err(|e| Error::io(out.display().to_string(), e))?;
        let resolved = config.resolved_toml()?;
        let mut ctx = Ctx {
            config,
            out,
            format,
            label: cli.command.label(),
            outputs: Vec::new(),
            inputs: Vec::new(),
            started: Instant::now(),
        };
        if let Some(path) = &cli.config {
            ctx.note_input(path)?;
        }
        let resolved_path = ctx.path("resolved_config.toml");
        std::fs::write(&resolved_path, resolved)
            .map_err(|e| Error::io(resolved_path.display().to_string(), e))?;
        ctx.record(resolved_path);
        Ok(ctx)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn record(&mut self, path: PathBuf) {
        self.outputs.push(path);
    }

    fn record_all(&mut self, paths: Vec<PathBuf>) {
        self.outputs.extend(paths);
    }

    fn note_input(&mut self, path: &Path) -> Result<()> {
        let digest = file_digest(path)?;
        self.inputs.push((path.display().to_string(), digest));
        Ok(())
    }

    /// Writes `digests.txt` (outputs only, stable across reruns and thread
    /// counts) and `run_manifest.txt` (provenance, includes wall clock).
    fn finish(self) -> Result<()> {
        let mut names = Vec::new();
        let mut digest_pairs: Vec<(String, String)> = Vec::new();
        for path in &self.outputs {
            let name = path
                .file_name()
                .and_then(|n| n.to_str())
                .ok_or_else(|| Error::Data(format!("unnameable output {}", path.display())))?
                .to_string();
            digest_pairs.push((name.clone(), file_digest(path)?));
            names.push(name);
        }
        let refs: Vec<(&str, String)> =
            digest_pairs.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
        write_key_values(&self.path("digests.txt"), &refs)?;

        let mut manifest: Vec<(String, String)> = vec![
            ("tool".into(), format!("sqz {}", env!("CARGO_PKG_VERSION"))),
            ("subcommand".into(), self.label.to_string()),
            ("seed".into(), self.config.seed.to_string()),
            ("config".into(), "resolved_config.toml".into()),
            ("outputs".into(), names.join(", ")),
            ("output_digests".into(), "digests.txt".into()),
        ];
        for (name, digest) in &self.inputs {
            manifest.push((format!("input {name}"), digest.clone()));
        }
        manifest.push(("wall_clock_ms".into(), self.started.elapsed().as_millis().to_string()));
        let refs: Vec<(&str, String)> =
            manifest.iter().map(|(k, v)| (k.as_str(), v.clone())).collect();
        write_key_values(&self.path("run_manifest.txt"), &refs)
    }
}

/// Table titles carry the provenance pointer required of every output.
fn titled(name: &str) -> String {
    format!("{name} config=resolved_config.toml")
}

fn join_list(values: &[f64]) -> String {
    values.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(", ")
}

fn parse_list(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|tok| {
            let tok = tok.trim();
            tok.parse::<f64>()
                .map_err(|e| Error::Data(format!("bad {what} entry '{tok}': {e}")))
        })
        .collect()
}

fn nearest_index(grid: &[f64], target: f64) -> usize {
    let mut best = 0;
    let mut dist = f64::INFINITY;
    for (i, &v) in grid.iter().enumerate() {
        let d = (v - target).abs();
        if d < dist {
            dist = d;
            best = i;
        }
    }
    best
}

fn central_stats(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var)
}

/// Re-tags an error with the failing pipeline stage, keeping the variant so
/// the exit-status contract still reflects the underlying failure.
fn tag_stage(stage: &str, e: Error) -> Error {
    match e {
        Error::InvalidInput(m) => Error::InvalidInput(format!("stage {stage}: {m}")),
        Error::Data(m) => Error::Data(format!("stage {stage}: {m}")),
        Error::Numerics(m) => Error::Numerics(format!("stage {stage}: {m}")),
        Error::Io { path, source } => Error::Io { path: format!("stage {stage}: {path}"), source },
    }
}

// ---------------------------------------------------------------------------
// kerr
// ---------------------------------------------------------------------------

/// Closed-form single-mode sweep: one row per configured Kerr phase in the
/// variance and fidelity tables, plus an exact Wigner grid per phase.
fn cmd_kerr(ctx: &mut Ctx) -> Result<()> {
    let state = ctx.config.state.clone();
    let spec = CoherentSpec::new(Complex64::new(state.alpha_re, state.alpha_im))?;
    let list = if state.chi_bar_list.is_empty() { vec![0.0] } else { state.chi_bar_list.clone() };
    let nmax = state.nmax.max(default_fock_cutoff(spec.n_mean));
    // the sweep shares one grid sized to hold every phase-smeared state
    let extent = std::f64::consts::SQRT_2 * (spec.alpha.norm() + 5.0);
    let grid = GridSpec::square(extent, 161);

    let mut var_rows = Vec::new();
    let mut wig_rows = Vec::new();
    let mut fid_rows = Vec::new();
    for (i, &chi_bar) in list.iter().enumerate() {
        let chi = KerrCoupling::new(chi_bar)?;
        let moments = kerr_moments(&spec, chi)?;
        let stats = moments.quadrature_stats();
        var_rows.push(vec![
            chi_bar,
            stats.var_x,
            stats.var_p,
            moments.cov_xp(),
            stats.mean_x,
            stats.mean_p,
        ]);

        let rho = kerr_density_matrix(&spec, chi, nmax)?;
        let wigner = crate::fock::wigner_exact(&rho, &grid)?;
        let path = ctx.path(&format!("kerr_wigner_{i}.txt"));
        write_wigner(&path, &wigner)?;
        ctx.record(path);
        wig_rows.push(vec![
            chi_bar,
            wigner.min_value(),
            wigner.negativity_volume(),
            wigner.normalization(),
        ]);

        let (gauss, theta) = gaussian_reference(&moments);
        let fidelity = gaussian_fidelity(&rho, &gauss, theta)?;
        fid_rows.push(vec![chi_bar, fidelity, rho.purity()]);
    }

    let path = ctx.path("kerr_variances.txt");
    write_table(
        &path,
        &titled("kerr_variances"),
        &["chi_bar", "var_x", "var_p", "cov_xp", "mean_x", "mean_p"],
        &var_rows,
    )?;
    ctx.record(path);

    let path = ctx.path("kerr_wigner_summary.txt");
    write_table(
        &path,
        &titled("kerr_wigner_summary"),
        &["chi_bar", "min_w", "negativity_volume", "normalization"],
        &wig_rows,
    )?;
    ctx.record(path);

    let path = ctx.path("kerr_fidelity.txt");
    write_table(&path, &titled("kerr_fidelity"), &["chi_bar", "fidelity", "purity"], &fid_rows)?;
    ctx.record(path);
    Ok(())
}

// ---------------------------------------------------------------------------
// twa
// ---------------------------------------------------------------------------

/// Plane-wave rows ordered k = 0, +1, -1, +2, -2, ... for mode projection.
fn plane_wave_rows(config: &crate::twa::PropagationConfig, n_modes: usize) -> Array2<Complex64> {
    let ks = config.wavenumbers();
    let grid = config.grid();
    let amp = 1.0 / config.z_extent.sqrt();
    let mut modes = Array2::<Complex64>::zeros((n_modes, config.nz));
    for m in 0..n_modes {
        let bin = if m == 0 {
            0
        } else if m % 2 == 1 {
            (m + 1) / 2
        } else {
            config.nz - m / 2
        };
        for (j, &z) in grid.iter().enumerate() {
            modes[[m, j]] = amp * Complex64::from_polar(1.0, ks[bin] * z);
        }
    }
    modes
}

/// Stochastic propagation sweep. Each requested single-mode phase is mapped
/// back onto the propagation coefficient through the pulse overlap, and the
/// resulting pulse-mode variances are tabulated against the closed forms.
/// The final run is kept for ensemble, density-matrix, and coherency outputs.
fn cmd_twa(ctx: &mut Ctx) -> Result<()> {
    let base = ctx.config.propagation_config();
    let pulse = ctx.config.pulse_spec();
    let dz = base.dz();
    let quartic: f64 = pulse.shape.iter().map(|c| c.norm_sqr().powi(2)).sum::<f64>() * dz;
    let scan: Vec<f64> = if ctx.config.twa.chi_bar_scan.is_empty() {
        vec![single_mode_chi_bar(base.chi_e, base.t_final, &pulse.shape, dz)]
    } else {
        ctx.config.twa.chi_bar_scan.clone()
    };
    let alpha = CoherentSpec::real(pulse.n_photons.sqrt())?;
    let mut pulse_row = Array2::<Complex64>::zeros((1, base.nz));
    for (i, &c) in pulse.shape.iter().enumerate() {
        pulse_row[[0, i]] = c;
    }

    let mut rows = Vec::new();
    let mut last: Option<TrajectoryEnsemble> = None;
    for &chi_bar in &scan {
        let mut config = base;
        config.chi_e = if chi_bar == 0.0 {
            0.0
        } else if base.t_final * quartic > 0.0 {
            -2.0 * chi_bar / (base.t_final * quartic)
        } else {
            return Err(Error::InvalidInput(format!(
                "chi_bar = {chi_bar} unreachable with t_final = {} on this pulse",
                base.t_final
            )));
        };
        let ensemble = propagate(&init_ensemble(&pulse, &config)?, &config)?;
        let samples = mode_quadratures(&ensemble, &pulse_row)?;
        let (_, var_x) = central_stats(samples.x.row(0).as_slice().expect("contiguous row"));
        let (_, var_p) = central_stats(samples.p.row(0).as_slice().expect("contiguous row"));
        let stats = crate::fock::kerr_variances(&alpha, KerrCoupling::new(chi_bar)?)?;
        let n_mean = ensemble
            .fields
            .iter()
            .map(|f| f.symmetric_photon_number())
            .sum::<f64>()
            / ensemble.fields.len() as f64;
        rows.push(vec![chi_bar, config.chi_e, var_x, var_p, stats.var_x, stats.var_p, n_mean]);
        last = Some(ensemble);
    }

    let path = ctx.path("twa_variances.txt");
    write_table(
        &path,
        &titled("twa_variances"),
        &["chi_bar", "chi_e", "var_x", "var_p", "var_x_ref", "var_p_ref", "n_photons"],
        &rows,
    )?;
    ctx.record(path);

    let ensemble = last.expect("scan has at least one entry");
    let paths = write_ensemble(&ctx.path("ensemble"), &ensemble)?;
    ctx.record_all(paths);

    let obdm = one_body_density_matrix(&ensemble)?;
    let path = ctx.path("obdm.txt");
    write_matrix(&path, "obdm", &obdm.rho_zz)?;
    ctx.record(path);

    let n_modes = base.nz.min(16);
    let modes = plane_wave_rows(&base, n_modes);
    let gamma = coherency_from_density_matrix(&obdm.rho_zz, dz, &modes)?;
    let path = ctx.path("twa_coherency.txt");
    write_matrix(&path, "coherency", &gamma.gamma)?;
    ctx.record(path);

    let decomposition = principal_modes(&gamma)?;
    let eig_rows: Vec<Vec<f64>> = decomposition
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(i, &ev)| vec![i as f64, ev])
        .collect();
    let path = ctx.path("twa_eigenvalues.txt");
    write_table(&path, &titled("twa_eigenvalues"), &["index", "eigenvalue"], &eig_rows)?;
    ctx.record(path);
    let path = ctx.path("twa_modes.txt");
    write_matrix(&path, "principal_modes", &decomposition.eigenvectors)?;
    ctx.record(path);
    Ok(())
}

// ---------------------------------------------------------------------------
// synth / filter
// ---------------------------------------------------------------------------

fn cmd_synth(ctx: &mut Ctx) -> Result<()> {
    let state = ctx.config.state_spec()?;
    let dataset = sample_homodyne(
        &state,
        &ctx.config.tau_grid(),
        &ctx.config.phi_grid(),
        &ctx.config.state.mode_labels,
        ctx.config.tomography.n_shots,
        &ctx.config.detector_model(),
        ctx.config.seed,
    )?;
    let extra = [
        ("config", "resolved_config.toml".to_string()),
        ("state_kind", ctx.config.state.kind.clone()),
        ("seed", ctx.config.seed.to_string()),
    ];
    let paths = write_dataset(&ctx.path("dataset"), &dataset, ctx.format, &extra)?;
    ctx.record_all(paths);
    Ok(())
}

fn cmd_filter(ctx: &mut Ctx, input: Option<&Path>) -> Result<()> {
    let manifest =
        input.map(Path::to_path_buf).unwrap_or_else(|| ctx.path("dataset.manifest"));
    ctx.note_input(&manifest)?;
    let (dataset, _) = read_dataset(&manifest)?;
    let filtered = filter_dataset(
        &dataset,
        ctx.config.carrier_omega(),
        ctx.config.sigproc.cutoff_factor,
        ctx.config.filter_edge(),
    )?;
    let source = manifest
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("dataset.manifest")
        .to_string();
    let extra = [
        ("config", "resolved_config.toml".to_string()),
        ("filtered", "true".to_string()),
        ("source", source),
        ("cutoff_factor", fmt_f64(ctx.config.sigproc.cutoff_factor)),
        ("edge", ctx.config.sigproc.edge.clone()),
        ("edge_affected", edge_affected_count(dataset.tau_grid.len()).to_string()),
    ];
    let paths = write_dataset(&ctx.path("filtered"), &filtered, ctx.format, &extra)?;
    ctx.record_all(paths);

    // shot-averaged delay trace at the first phase and mode, before and after
    let n_shots = dataset.n_shots as f64;
    let rows: Vec<Vec<f64>> = dataset
        .tau_grid
        .iter()
        .enumerate()
        .map(|(it, &tau)| {
            let raw: f64 =
                (0..dataset.n_shots).map(|s| dataset.samples[[it, 0, 0, s]]).sum::<f64>() / n_shots;
            let low: f64 = (0..dataset.n_shots)
                .map(|s| filtered.samples[[it, 0, 0, s]])
                .sum::<f64>()
                / n_shots;
            vec![tau, raw, low]
        })
        .collect();
    let path = ctx.path("trace_compare.txt");
    write_table(&path, &titled("trace_compare"), &["tau_fs", "raw_mean", "filtered_mean"], &rows)?;
    ctx.record(path);
    Ok(())
}

// ---------------------------------------------------------------------------
// reconstruct / fit
// ---------------------------------------------------------------------------

fn cmd_reconstruct(ctx: &mut Ctx, input: Option<&Path>) -> Result<()> {
    let manifest =
        input.map(Path::to_path_buf).unwrap_or_else(|| ctx.path("dataset.manifest"));
    ctx.note_input(&manifest)?;
    let (dataset, _) = read_dataset(&manifest)?;
    let bins = ctx.config.bin_spec();
    let grid = ctx.config.grid_spec();
    let kc = ctx.config.kc();

    let mut files = Vec::new();
    for it in 0..dataset.tau_grid.len() {
        for im in 0..dataset.mode_labels.len() {
            let pdf = build_pdf(&dataset, it, im, bins)?;
            let wigner = inverse_radon(&pdf, &grid, kc)?;
            let name = format!("wigner_tau{it}_mode{im}.txt");
            let path = ctx.path(&name);
            write_wigner(&path, &wigner)?;
            ctx.record(path);
            files.push(name);
        }
    }

    let source = manifest
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or("dataset.manifest")
        .to_string();
    let pairs = [
        ("config", "resolved_config.toml".to_string()),
        ("source", source),
        ("ordering", "tau,mode".to_string()),
        ("tau_grid", join_list(&dataset.tau_grid)),
        ("mode_labels", join_list(&dataset.mode_labels)),
        ("kc", fmt_f64(kc)),
        ("bin_min", fmt_f64(bins.s_min)),
        ("bin_max", fmt_f64(bins.s_max)),
        ("n_bins", bins.n_bins.to_string()),
        ("grid_extent", fmt_f64(ctx.config.tomography.grid_extent)),
        ("grid_points", ctx.config.tomography.grid_points.to_string()),
        ("files", files.join(", ")),
    ];
    let path = ctx.path("reconstruction.manifest");
    write_key_values(&path, &pairs)?;
    ctx.record(path);
    Ok(())
}

fn cmd_fit(ctx: &mut Ctx, input: Option<&Path>) -> Result<()> {
    let manifest =
        input.map(Path::to_path_buf).unwrap_or_else(|| ctx.path("reconstruction.manifest"));
    ctx.note_input(&manifest)?;
    let pairs = read_key_values(&manifest)?;
    let tau_grid = parse_list(kv_get(&pairs, "tau_grid")?, "tau_grid")?;
    let mode_labels = parse_list(kv_get(&pairs, "mode_labels")?, "mode_labels")?;
    let files: Vec<String> =
        kv_get(&pairs, "files")?.split(',').map(|s| s.trim().to_string()).collect();
    if files.len() != tau_grid.len() * mode_labels.len() {
        return Err(Error::Data(format!(
            "reconstruction lists {} grids for {} cells",
            files.len(),
            tau_grid.len() * mode_labels.len()
        )));
    }
    let dir = manifest.parent().map(Path::to_path_buf).unwrap_or_default();

    let mut rows = Vec::new();
    for (i, name) in files.iter().enumerate() {
        let it = i / mode_labels.len();
        let im = i % mode_labels.len();
        let wigner = read_wigner(&dir.join(name))?;
        let fit = fit_gaussian2d(&wigner)?;
        let metrics = squeezing_metrics(&fit, 0.5, Some(&wigner))?;
        let (mean_x, mean_p) = fit.mean();
        rows.push(vec![
            tau_grid[it],
            mode_labels[im],
            fit.v1,
            fit.v2,
            fit.theta,
            fit.d1,
            fit.d2,
            mean_x,
            mean_p,
            fit.amplitude,
            fit.residual,
            metrics.db_min,
            metrics.db_max,
            metrics.negativity_volume.unwrap_or(0.0),
            f64::from(u8::from(fit.degenerate)),
            f64::from(u8::from(fit.below_heisenberg)),
        ]);
    }
    let path = ctx.path("fits.txt");
    write_table(
        &path,
        &titled("fits"),
        &[
            "tau_fs",
            "mode",
            "v1",
            "v2",
            "theta",
            "d1",
            "d2",
            "mean_x",
            "mean_p",
            "amplitude",
            "residual",
            "db_min",
            "db_max",
            "negativity",
            "degenerate",
            "below_heisenberg",
        ],
        &rows,
    )?;
    ctx.record(path);
    Ok(())
}

// ---------------------------------------------------------------------------
// corr / rin
// ---------------------------------------------------------------------------

/// Builds mode-resolved X and P records from the phases nearest 0 and pi/2
/// at one delay, then writes the covariance blocks, the coherency matrix,
/// and its principal-mode decomposition.
fn cmd_corr(ctx: &mut Ctx, input: Option<&Path>, tau_index: usize) -> Result<()> {
    let manifest =
        input.map(Path::to_path_buf).unwrap_or_else(|| ctx.path("dataset.manifest"));
    ctx.note_input(&manifest)?;
    let (dataset, _) = read_dataset(&manifest)?;
    if tau_index >= dataset.tau_grid.len() {
        return Err(Error::InvalidInput(format!(
            "tau index {tau_index} out of range ({} delays)",
            dataset.tau_grid.len()
        )));
    }
    let ip_x = nearest_index(&dataset.phi_grid, 0.0);
    let ip_p = nearest_index(&dataset.phi_grid, std::f64::consts::FRAC_PI_2);
    let n_modes = dataset.mode_labels.len();
    let n_shots = dataset.n_shots;
    let cal = dataset.lo_calibration;
    let mut x = Array2::<f64>::zeros((n_modes, n_shots));
    let mut p = Array2::<f64>::zeros((n_modes, n_shots));
    for m in 0..n_modes {
        for s in 0..n_shots {
            x[[m, s]] = dataset.samples[[tau_index, ip_x, m, s]] / cal;
            p[[m, s]] = dataset.samples[[tau_index, ip_p, m, s]] / cal;
        }
    }
    let samples = QuadratureSamples { mode_labels: dataset.mode_labels.clone(), x, p };

    let central = covariance(&samples, true)?;
    let mut blocks = Array2::<Complex64>::zeros((2 * n_modes, 2 * n_modes));
    for i in 0..n_modes {
        for j in 0..n_modes {
            blocks[[i, j]] = Complex64::new(central.xx[[i, j]], 0.0);
            blocks[[i, j + n_modes]] = Complex64::new(central.xp[[i, j]], 0.0);
            blocks[[i + n_modes, j]] = Complex64::new(central.px[[i, j]], 0.0);
            blocks[[i + n_modes, j + n_modes]] = Complex64::new(central.pp[[i, j]], 0.0);
        }
    }
    let path = ctx.path("covariance.txt");
    write_matrix(&path, "covariance", &blocks)?;
    ctx.record(path);

    let raw = covariance(&samples, false)?;
    let gamma = coherency_from_quadratures(&raw, true)?;
    let path = ctx.path("coherency.txt");
    write_matrix(&path, "coherency", &gamma.gamma)?;
    ctx.record(path);

    let decomposition = principal_modes(&gamma)?;
    let eig_rows: Vec<Vec<f64>> = decomposition
        .eigenvalues
        .iter()
        .enumerate()
        .map(|(i, &ev)| vec![i as f64, ev])
        .collect();
    let path = ctx.path("mode_eigenvalues.txt");
    write_table(&path, &titled("mode_eigenvalues"), &["index", "eigenvalue"], &eig_rows)?;
    ctx.record(path);
    let path = ctx.path("mode_vectors.txt");
    write_matrix(&path, "principal_modes", &decomposition.eigenvectors)?;
    ctx.record(path);

    let summary = vec![vec![
        dataset.tau_grid[tau_index],
        dataset.phi_grid[ip_x],
        dataset.phi_grid[ip_p],
        gamma.trace(),
        gamma.hermiticity_defect(),
        decomposition.eigenvalues[0],
    ]];
    let path = ctx.path("corr_summary.txt");
    write_table(
        &path,
        &titled("corr_summary"),
        &["tau_fs", "phi_x", "phi_p", "trace_gamma", "hermiticity_defect", "lambda_max"],
        &summary,
    )?;
    ctx.record(path);
    Ok(())
}

/// Welch spectrum of the shot stream at the configured (tau, phi, mode) cell.
/// RIN is scale invariant, so the raw (uncalibrated) stream is analyzed.
fn cmd_rin(ctx: &mut Ctx, input: Option<&Path>) -> Result<()> {
    let manifest =
        input.map(Path::to_path_buf).unwrap_or_else(|| ctx.path("dataset.manifest"));
    ctx.note_input(&manifest)?;
    let (dataset, _) = read_dataset(&manifest)?;
    let sp = ctx.config.sigproc.clone();
    let (it, ip, im) = (sp.rin_tau_index, sp.rin_phi_index, sp.rin_mode_index);
    if it >= dataset.tau_grid.len()
        || ip >= dataset.phi_grid.len()
        || im >= dataset.mode_labels.len()
    {
        return Err(Error::InvalidInput(format!(
            "rin indices ({it}, {ip}, {im}) out of range for dataset {}x{}x{}",
            dataset.tau_grid.len(),
            dataset.phi_grid.len(),
            dataset.mode_labels.len()
        )));
    }
    let stream: Vec<f64> = (0..dataset.n_shots).map(|s| dataset.samples[[it, ip, im, s]]).collect();
    let spectrum = psd(&stream, sp.frame_rate)?;
    let path = ctx.path("spectrum.txt");
    write_spectrum(&path, &spectrum)?;
    ctx.record(path);

    let band_rin = band_average_rin(&spectrum, sp.band_lo, sp.band_hi)?;
    let band_power = spectrum.band_power(sp.band_lo, sp.band_hi)?;
    let rows = vec![vec![sp.band_lo, sp.band_hi, band_rin, band_power, spectrum.mean]];
    let path = ctx.path("rin_band.txt");
    write_table(
        &path,
        &titled("rin_band"),
        &["band_lo", "band_hi", "rin_db", "band_power", "mean"],
        &rows,
    )?;
    ctx.record(path);
    Ok(())
}

// ---------------------------------------------------------------------------
// pipeline
// ---------------------------------------------------------------------------

/// Full chain with stage-tagged errors. Outputs written before a failing
/// stage stay on disk for inspection.
fn cmd_pipeline(ctx: &mut Ctx) -> Result<()> {
    cmd_synth(ctx).map_err(|e| tag_stage("synth", e))?;
    cmd_filter(ctx, None).map_err(|e| tag_stage("filter", e))?;
    cmd_reconstruct(ctx, None).map_err(|e| tag_stage("reconstruct", e))?;
    cmd_fit(ctx, None).map_err(|e| tag_stage("fit", e))?;
    cmd_corr(ctx, None, 0).map_err(|e| tag_stage("corr", e))?;
    cmd_rin(ctx, None).map_err(|e| tag_stage("rin", e))?;
    Ok(())
}
