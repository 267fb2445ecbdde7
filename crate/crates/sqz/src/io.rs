//! Canonical file formats: Wigner grids and complex matrices as delimited
//! text, homodyne datasets and trajectory ensembles as key-value manifests
//! with little-endian binary payloads, spectra and generic tables as text.
//!
//! All numeric text uses `{:.16e}` (17 significant digits, locale
//! independent), so text round trips are bit exact for finite values.

use crate::grid::{GridSpec, WignerGrid};
use crate::sigproc::SpectrumEstimate;
use crate::tomography::HomodyneDataset;
use crate::twa::{CField, PropagationConfig, TrajectoryEnsemble};
use crate::{Error, Result};
use ndarray::{Array2, Array4};
use num_complex::Complex64;
use sha2::{Digest, Sha256};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

/// Payload encoding for sample data.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DataFormat {
    Binary,
    Text,
}

impl DataFormat {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(DataFormat::Binary),
            "text" => Ok(DataFormat::Text),
            other => Err(Error::Data(format!("unknown data format '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            DataFormat::Binary => "binary",
            DataFormat::Text => "text",
        }
    }
}

/// Canonical float rendering: 17 significant digits, never locale dependent.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(s: &str, what: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| Error::Data(format!("bad float '{s}' in {what}")))
}

fn parse_usize(s: &str, what: &str) -> Result<usize> {
    s.trim()
        .parse::<usize>()
        .map_err(|_| Error::Data(format!("bad integer '{s}' in {what}")))
}

fn open_reader(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path.display().to_string(), e))
}

fn create_writer(path: &Path) -> Result<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path.display().to_string(), e))
}

fn io_err<T>(path: &Path, e: std::io::Error) -> Result<T> {
    Err(Error::io(path.display().to_string(), e))
}

/// SHA-256 digest of a byte slice as lowercase hex.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// SHA-256 digest of a file's contents.
pub fn file_digest(path: &Path) -> Result<String> {
    let mut reader = open_reader(path)?;
    let mut hasher = Sha256::new();
    let mut buf = [0u8; 65536];
    loop {
        let n = match reader.read(&mut buf) {
            Ok(n) => n,
            Err(e) => return io_err(path, e),
        };
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    let mut out = String::with_capacity(64);
    for b in hasher.finalize() {
        out.push_str(&format!("{b:02x}"));
    }
    Ok(out)
}

/// Writes `key = value` pairs, one per line, in the given order.
pub fn write_key_values(path: &Path, pairs: &[(&str, String)]) -> Result<()> {
    let mut w = create_writer(path)?;
    for (key, value) in pairs {
        if let Err(e) = writeln!(w, "{key} = {value}") {
            return io_err(path, e);
        }
    }
    w.flush().or_else(|e| io_err(path, e))
}

/// Reads `key = value` pairs, skipping blank lines and `#` comments.
pub fn read_key_values(path: &Path) -> Result<Vec<(String, String)>> {
    let reader = open_reader(path)?;
    let mut pairs = Vec::new();
    for line in reader.lines() {
        let line = match line {
            Ok(l) => l,
            Err(e) => return io_err(path, e),
        };
        let body = line.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        let Some((key, value)) = body.split_once('=') else {
            return Err(Error::Data(format!(
                "manifest line without '=' in {}: '{line}'",
                path.display()
            )));
        };
        pairs.push((key.trim().to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

/// Looks up a required manifest key.
pub fn kv_get<'a>(pairs: &'a [(String, String)], key: &str) -> Result<&'a str> {
    pairs
        .iter()
        .find(|(k, _)| k == key)
        .map(|(_, v)| v.as_str())
        .ok_or_else(|| Error::Data(format!("manifest is missing key '{key}'")))
}

fn join_floats(values: &[f64]) -> String {
    values.iter().map(|&v| fmt_f64(v)).collect::<Vec<_>>().join(", ")
}

fn split_floats(s: &str, what: &str) -> Result<Vec<f64>> {
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|tok| parse_f64(tok, what)).collect()
}

// ---------------------------------------------------------------------------
// Wigner grids
// ---------------------------------------------------------------------------

/// Writes a Wigner grid: header `# wigner nx np x_min x_max p_min p_max`
/// then row-major values, one grid row per line.
pub fn write_wigner(path: &Path, grid: &WignerGrid) -> Result<()> {
    let mut w = create_writer(path)?;
    let s = &grid.spec;
    let header = format!(
        "# wigner {} {} {} {} {} {}",
        s.nx,
        s.np,
        fmt_f64(s.x_min),
        fmt_f64(s.x_max),
        fmt_f64(s.p_min),
        fmt_f64(s.p_max)
    );
    if let Err(e) = writeln!(w, "{header}") {
        return io_err(path, e);
    }
    for ix in 0..s.nx {
        let row: Vec<String> = (0..s.np).map(|ip| fmt_f64(grid.values[[ix, ip]])).collect();
        if let Err(e) = writeln!(w, "{}", row.join(" ")) {
            return io_err(path, e);
        }
    }
    w.flush().or_else(|e| io_err(path, e))
}

pub fn read_wigner(path: &Path) -> Result<WignerGrid> {
    let reader = open_reader(path)?;
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(Ok(l)) => l,
        Some(Err(e)) => return io_err(path, e),
        None => return Err(Error::Data(format!("{} is empty", path.display()))),
    };
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() != 8 || tokens[0] != "#" || tokens[1] != "wigner" {
        return Err(Error::Data(format!(
            "bad Wigner header in {}: '{header}'",
            path.display()
        )));
    }
    let nx = parse_usize(tokens[2], "wigner header")?;
    let np = parse_usize(tokens[3], "wigner header")?;
    let spec = GridSpec {
        x_min: parse_f64(tokens[4], "wigner header")?,
        x_max: parse_f64(tokens[5], "wigner header")?,
        p_min: parse_f64(tokens[6], "wigner header")?,
        p_max: parse_f64(tokens[7], "wigner header")?,
        nx,
        np,
    };
    let mut values = Array2::<f64>::zeros((nx, np));
    let mut ix = 0;
    for line in lines {
        let line = match line {
            Ok(l) => l,
            Err(e) => return io_err(path, e),
        };
        if line.trim().is_empty() {
            continue;
        }
        if ix >= nx {
            return Err(Error::Data(format!(
                "{} has more than {nx} value rows",
                path.display()
            )));
        }
        let row: Vec<&str> = line.split_whitespace().collect();
        if row.len() != np {
            return Err(Error::Data(format!(
                "row {ix} of {} has {} values, expected {np}",
                path.display(),
                row.len()
            )));
        }
        for (ip, tok) in row.iter().enumerate() {
            values[[ix, ip]] = parse_f64(tok, "wigner row")?;
        }
        ix += 1;
    }
    if ix != nx {
        return Err(Error::Data(format!(
            "{} has {ix} value rows, expected {nx}",
            path.display()
        )));
    }
    WignerGrid::new(spec, values)
}

// ---------------------------------------------------------------------------
// Complex matrices
// ---------------------------------------------------------------------------

/// Writes a square complex matrix: header `# matrix kind n` then row-major
/// entries as `re,im`, one matrix row per line.
pub fn write_matrix(path: &Path, kind: &str, matrix: &Array2<Complex64>) -> Result<()> {
    if kind.contains(char::is_whitespace) || kind.is_empty() {
        return Err(Error::InvalidInput(format!("bad matrix kind '{kind}'")));
    }
    let n = matrix.nrows();
    if matrix.ncols() != n {
        return Err(Error::InvalidInput("matrix is not square".into()));
    }
    let mut w = create_writer(path)?;
    if let Err(e) = writeln!(w, "# matrix {kind} {n}") {
        return io_err(path, e);
    }
    for i in 0..n {
        let row: Vec<String> = (0..n)
            .map(|j| format!("{},{}", fmt_f64(matrix[[i, j]].re), fmt_f64(matrix[[i, j]].im)))
            .collect();
        if let Err(e) = writeln!(w, "{}", row.join(" ")) {
            return io_err(path, e);
        }
    }
    w.flush().or_else(|e| io_err(path, e))
}

pub fn read_matrix(path: &Path) -> Result<(String, Array2<Complex64>)> {
    let reader = open_reader(path)?;
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(Ok(l)) => l,
        Some(Err(e)) => return io_err(path, e),
        None => return Err(Error::Data(format!("{} is empty", path.display()))),
    };
    let tokens: Vec<&str> = header.split_whitespace().collect();
    if tokens.len() != 4 || tokens[0] != "#" || tokens[1] != "matrix" {
        return Err(Error::Data(format!(
            "bad matrix header in {}: '{header}'",
            path.display()
        )));
    }
    let kind = tokens[2].to_string();
    let n = parse_usize(tokens[3], "matrix header")?;
    let mut matrix = Array2::<Complex64>::zeros((n, n));
    let mut i = 0;
    for line in lines {
        let line = match line {
            Ok(l) => l,
            Err(e) => return io_err(path, e),
        };
        if line.trim().is_empty() {
            continue;
        }
        if i >= n {
            return Err(Error::Data(format!(
                "{} has more than {n} matrix rows",
                path.display()
            )));
        }
        let entries: Vec<&str> = line.split_whitespace().collect();
        if entries.len() != n {
            return Err(Error::Data(format!(
                "row {i} of {} has {} entries, expected {n}",
                path.display(),
                entries.len()
            )));
        }
        for (j, tok) in entries.iter().enumerate() {
            let Some((re, im)) = tok.split_once(',') else {
                return Err(Error::Data(format!("bad complex entry '{tok}'")));
            };
            matrix[[i, j]] =
                Complex64::new(parse_f64(re, "matrix entry")?, parse_f64(im, "matrix entry")?);
        }
        i += 1;
    }
    if i != n {
        return Err(Error::Data(format!(
            "{} has {i} matrix rows, expected {n}",
            path.display()
        )));
    }
    Ok((kind, matrix))
}

// ---------------------------------------------------------------------------
// Homodyne datasets
// ---------------------------------------------------------------------------

/// Writes a dataset as `<stem>.manifest` plus a payload file; records are
/// ordered (tau, phi, mode, shot). Extra manifest pairs (filter provenance,
/// etc.) are appended verbatim. Returns the written paths, manifest first.
pub fn write_dataset(
    stem: &Path,
    dataset: &HomodyneDataset,
    format: DataFormat,
    extra: &[(&str, String)],
) -> Result<Vec<PathBuf>> {
    dataset.validate()?;
    let manifest_path = stem.with_extension("manifest");
    let data_path = match format {
        DataFormat::Binary => stem.with_extension("samples.bin"),
        DataFormat::Text => stem.with_extension("samples.txt"),
    };
    let data_name = data_path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::InvalidInput(format!("bad output stem {}", stem.display())))?
        .to_string();

    let (n_tau, n_phi, n_modes, n_shots) = dataset.samples.dim();
    {
        let mut w = create_writer(&data_path)?;
        match format {
            DataFormat::Binary => {
                for it in 0..n_tau {
                    for ip in 0..n_phi {
                        for im in 0..n_modes {
                            for is in 0..n_shots {
                                let bytes = dataset.samples[[it, ip, im, is]].to_le_bytes();
                                if let Err(e) = w.write_all(&bytes) {
                                    return io_err(&data_path, e);
                                }
                            }
                        }
                    }
                }
            }
            DataFormat::Text => {
                if let Err(e) = writeln!(w, "# homodyne tau_idx phi_idx mode_idx shot_idx value")
                {
                    return io_err(&data_path, e);
                }
                for it in 0..n_tau {
                    for ip in 0..n_phi {
                        for im in 0..n_modes {
                            for is in 0..n_shots {
                                let v = fmt_f64(dataset.samples[[it, ip, im, is]]);
                                if let Err(e) = writeln!(w, "{it}, {ip}, {im}, {is}, {v}") {
                                    return io_err(&data_path, e);
                                }
                            }
                        }
                    }
                }
            }
        }
        if let Err(e) = w.flush() {
            return io_err(&data_path, e);
        }
    }

    let mut pairs: Vec<(&str, String)> = vec![
        ("format", format.name().to_string()),
        ("data", data_name),
        ("ordering", "tau,phi,mode,shot".to_string()),
        ("n_shots", n_shots.to_string()),
        ("lo_calibration", fmt_f64(dataset.lo_calibration)),
        ("tau_grid", join_floats(&dataset.tau_grid)),
        ("phi_grid", join_floats(&dataset.phi_grid)),
        ("mode_labels", join_floats(&dataset.mode_labels)),
    ];
    for (k, v) in extra {
        pairs.push((k, v.clone()));
    }
    write_key_values(&manifest_path, &pairs)?;
    Ok(vec![manifest_path, data_path])
}

/// Reads a dataset manifest and its payload; returns the dataset plus all
/// manifest pairs so callers can inspect provenance keys.
pub fn read_dataset(manifest_path: &Path) -> Result<(HomodyneDataset, Vec<(String, String)>)> {
    let pairs = read_key_values(manifest_path)?;
    let format = DataFormat::parse(kv_get(&pairs, "format")?)?;
    let ordering = kv_get(&pairs, "ordering")?;
    if ordering != "tau,phi,mode,shot" {
        return Err(Error::Data(format!("unsupported record ordering '{ordering}'")));
    }
    let tau_grid = split_floats(kv_get(&pairs, "tau_grid")?, "tau_grid")?;
    let phi_grid = split_floats(kv_get(&pairs, "phi_grid")?, "phi_grid")?;
    let mode_labels = split_floats(kv_get(&pairs, "mode_labels")?, "mode_labels")?;
    let n_shots = parse_usize(kv_get(&pairs, "n_shots")?, "n_shots")?;
    let lo_calibration = parse_f64(kv_get(&pairs, "lo_calibration")?, "lo_calibration")?;
    let data_name = kv_get(&pairs, "data")?;
    let data_path = manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(data_name);

    let (n_tau, n_phi, n_modes) = (tau_grid.len(), phi_grid.len(), mode_labels.len());
    let total = n_tau * n_phi * n_modes * n_shots;
    let mut samples = Array4::<f64>::zeros((n_tau, n_phi, n_modes, n_shots));
    match format {
        DataFormat::Binary => {
            let mut reader = open_reader(&data_path)?;
            let mut bytes = Vec::new();
            if let Err(e) = reader.read_to_end(&mut bytes) {
                return io_err(&data_path, e);
            }
            if bytes.len() != total * 8 {
                return Err(Error::Data(format!(
                    "{} holds {} bytes, expected {}",
                    data_path.display(),
                    bytes.len(),
                    total * 8
                )));
            }
            let mut chunk = bytes.chunks_exact(8);
            for it in 0..n_tau {
                for ip in 0..n_phi {
                    for im in 0..n_modes {
                        for is in 0..n_shots {
                            let raw: [u8; 8] = chunk.next().unwrap().try_into().unwrap();
                            samples[[it, ip, im, is]] = f64::from_le_bytes(raw);
                        }
                    }
                }
            }
        }
        DataFormat::Text => {
            let reader = open_reader(&data_path)?;
            let mut count = 0usize;
            for line in reader.lines() {
                let line = match line {
                    Ok(l) => l,
                    Err(e) => return io_err(&data_path, e),
                };
                let body = line.trim();
                if body.is_empty() || body.starts_with('#') {
                    continue;
                }
                let cols: Vec<&str> = body.split(',').map(str::trim).collect();
                if cols.len() != 5 {
                    return Err(Error::Data(format!(
                        "bad record '{body}' in {}",
                        data_path.display()
                    )));
                }
                let it = parse_usize(cols[0], "tau_idx")?;
                let ip = parse_usize(cols[1], "phi_idx")?;
                let im = parse_usize(cols[2], "mode_idx")?;
                let is = parse_usize(cols[3], "shot_idx")?;
                if it >= n_tau || ip >= n_phi || im >= n_modes || is >= n_shots {
                    return Err(Error::Data(format!(
                        "record index ({it}, {ip}, {im}, {is}) out of range"
                    )));
                }
                samples[[it, ip, im, is]] = parse_f64(cols[4], "sample value")?;
                count += 1;
            }
            if count != total {
                return Err(Error::Data(format!(
                    "{} holds {count} records, expected {total}",
                    data_path.display()
                )));
            }
        }
    }
    let dataset = HomodyneDataset {
        tau_grid,
        phi_grid,
        mode_labels,
        n_shots,
        lo_calibration,
        samples,
    };
    dataset.validate()?;
    Ok((dataset, pairs))
}

// ---------------------------------------------------------------------------
// Trajectory ensembles
// ---------------------------------------------------------------------------

/// Writes an ensemble as `<stem>.manifest` plus interleaved (re, im) grid
/// values per trajectory as little-endian 64-bit floats.
pub fn write_ensemble(stem: &Path, ensemble: &TrajectoryEnsemble) -> Result<Vec<PathBuf>> {
    let manifest_path = stem.with_extension("manifest");
    let data_path = stem.with_extension("fields.bin");
    let data_name = data_path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| Error::InvalidInput(format!("bad output stem {}", stem.display())))?
        .to_string();
    let c = &ensemble.config;
    {
        let mut w = create_writer(&data_path)?;
        for field in &ensemble.fields {
            for value in &field.psi {
                if let Err(e) = w
                    .write_all(&value.re.to_le_bytes())
                    .and_then(|_| w.write_all(&value.im.to_le_bytes()))
                {
                    return io_err(&data_path, e);
                }
            }
        }
        if let Err(e) = w.flush() {
            return io_err(&data_path, e);
        }
    }
    let pairs: Vec<(&str, String)> = vec![
        ("data", data_name),
        ("nz", c.nz.to_string()),
        ("dz", fmt_f64(c.dz())),
        ("n_traj", ensemble.fields.len().to_string()),
        ("seed", c.seed.to_string()),
        ("z_extent", fmt_f64(c.z_extent)),
        ("dt", fmt_f64(c.dt)),
        ("t_final", fmt_f64(c.t_final)),
        ("vg", fmt_f64(c.vg)),
        ("beta2", fmt_f64(c.beta2)),
        ("chi_e", fmt_f64(c.chi_e)),
    ];
    write_key_values(&manifest_path, &pairs)?;
    Ok(vec![manifest_path, data_path])
}

pub fn read_ensemble(manifest_path: &Path) -> Result<TrajectoryEnsemble> {
    let pairs = read_key_values(manifest_path)?;
    let nz = parse_usize(kv_get(&pairs, "nz")?, "nz")?;
    let n_traj = parse_usize(kv_get(&pairs, "n_traj")?, "n_traj")?;
    let config = PropagationConfig {
        nz,
        z_extent: parse_f64(kv_get(&pairs, "z_extent")?, "z_extent")?,
        dt: parse_f64(kv_get(&pairs, "dt")?, "dt")?,
        t_final: parse_f64(kv_get(&pairs, "t_final")?, "t_final")?,
        vg: parse_f64(kv_get(&pairs, "vg")?, "vg")?,
        beta2: parse_f64(kv_get(&pairs, "beta2")?, "beta2")?,
        chi_e: parse_f64(kv_get(&pairs, "chi_e")?, "chi_e")?,
        n_traj,
        seed: kv_get(&pairs, "seed")?
            .parse::<u64>()
            .map_err(|_| Error::Data("bad seed in ensemble manifest".into()))?,
    };
    let stored_dz = parse_f64(kv_get(&pairs, "dz")?, "dz")?;
    if (stored_dz - config.dz()).abs() > 1e-12 * config.dz() {
        return Err(Error::Data(format!(
            "manifest dz {stored_dz} inconsistent with z_extent/nz = {}",
            config.dz()
        )));
    }
    let data_path = manifest_path
        .parent()
        .unwrap_or_else(|| Path::new("."))
        .join(kv_get(&pairs, "data")?);
    let mut reader = open_reader(&data_path)?;
    let mut bytes = Vec::new();
    if let Err(e) = reader.read_to_end(&mut bytes) {
        return io_err(&data_path, e);
    }
    let expected = n_traj * nz * 16;
    if bytes.len() != expected {
        return Err(Error::Data(format!(
            "{} holds {} bytes, expected {expected}",
            data_path.display(),
            bytes.len()
        )));
    }
    let mut chunk = bytes.chunks_exact(8);
    let mut next = || f64::from_le_bytes(chunk.next().unwrap().try_into().unwrap());
    let dz = config.dz();
    let fields: Vec<CField> = (0..n_traj)
        .map(|_| CField {
            psi: (0..nz).map(|_| Complex64::new(next(), next())).collect(),
            dz,
        })
        .collect();
    Ok(TrajectoryEnsemble { fields, config })
}

// ---------------------------------------------------------------------------
// Spectra and generic tables
// ---------------------------------------------------------------------------

/// Writes a spectrum as `freq, psd, rin_db` rows with estimator parameters
/// in comment headers.
pub fn write_spectrum(path: &Path, spectrum: &SpectrumEstimate) -> Result<()> {
    let mut w = create_writer(path)?;
    let headers = [
        "# spectrum freq psd rin_db".to_string(),
        format!("# mean = {}", fmt_f64(spectrum.mean)),
        format!("# segment_len = {}", spectrum.segment_len),
        format!("# overlap = {}", fmt_f64(spectrum.overlap)),
        format!("# taper = {}", spectrum.taper),
    ];
    for h in headers {
        if let Err(e) = writeln!(w, "{h}") {
            return io_err(path, e);
        }
    }
    for k in 0..spectrum.freqs.len() {
        if let Err(e) = writeln!(
            w,
            "{}, {}, {}",
            fmt_f64(spectrum.freqs[k]),
            fmt_f64(spectrum.psd[k]),
            fmt_f64(spectrum.rin_db[k])
        ) {
            return io_err(path, e);
        }
    }
    w.flush().or_else(|e| io_err(path, e))
}

/// Reads back the `(freq, psd, rin_db)` columns of a spectrum file.
pub fn read_spectrum(path: &Path) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let reader = open_reader(path)?;
    let (mut freqs, mut psd, mut rin) = (Vec::new(), Vec::new(), Vec::new());
    for line in reader.lines() {
        let line = match line {
            Ok(l) => l,
            Err(e) => return io_err(path, e),
        };
        let body = line.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = body.split(',').map(str::trim).collect();
        if cols.len() != 3 {
            return Err(Error::Data(format!("bad spectrum row '{body}'")));
        }
        freqs.push(parse_f64(cols[0], "freq")?);
        psd.push(parse_f64(cols[1], "psd")?);
        rin.push(parse_f64(cols[2], "rin_db")?);
    }
    Ok((freqs, psd, rin))
}

/// Writes a delimited numeric table with named columns; rows print as
/// comma-separated canonical floats.
pub fn write_table(path: &Path, title: &str, columns: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = create_writer(path)?;
    if let Err(e) = writeln!(w, "# {title} {}", columns.join(" ")) {
        return io_err(path, e);
    }
    for (idx, row) in rows.iter().enumerate() {
        if row.len() != columns.len() {
            return Err(Error::InvalidInput(format!(
                "table row {idx} has {} values for {} columns",
                row.len(),
                columns.len()
            )));
        }
        let line: Vec<String> = row.iter().map(|&v| fmt_f64(v)).collect();
        if let Err(e) = writeln!(w, "{}", line.join(", ")) {
            return io_err(path, e);
        }
    }
    w.flush().or_else(|e| io_err(path, e))
}

/// Reads the numeric rows of a delimited table written by [`write_table`].
pub fn read_table(path: &Path) -> Result<Vec<Vec<f64>>> {
    let reader = open_reader(path)?;
    let mut rows = Vec::new();
    for line in reader.lines() {
        let line = match line {
            Ok(l) => l,
            Err(e) => return io_err(path, e),
        };
        let body = line.trim();
        if body.is_empty() || body.starts_with('#') {
            continue;
        }
        let row: Result<Vec<f64>> =
            body.split(',').map(|tok| parse_f64(tok, "table cell")).collect();
        rows.push(row?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::twa::{init_ensemble, PulseSpec};
    use approx::assert_abs_diff_eq;
    use ndarray::Array4;

    fn tempdir() -> tempfile::TempDir {
        tempfile::tempdir().expect("create temp dir")
    }

    fn sample_dataset() -> HomodyneDataset {
        let (n_tau, n_phi, n_modes, n_shots) = (3, 8, 2, 5);
        let mut samples = Array4::<f64>::zeros((n_tau, n_phi, n_modes, n_shots));
        let mut v: f64 = -2.0;
        for x in samples.iter_mut() {
            *x = v * (1.0 + v * v).sin();
            v += 0.137;
        }
        HomodyneDataset {
            tau_grid: vec![0.0, 0.5, 1.0],
            phi_grid: (0..n_phi)
                .map(|k| k as f64 * std::f64::consts::PI / n_phi as f64)
                .collect(),
            mode_labels: vec![800.0, 808.0],
            n_shots,
            lo_calibration: 5.5,
            samples,
        }
    }

    #[test]
    fn wigner_grid_round_trips_bit_exactly() {
        let dir = tempdir();
        let path = dir.path().join("w.txt");
        let spec = GridSpec::square(4.0, 17);
        let mut values = Array2::<f64>::zeros((17, 17));
        for (k, v) in values.iter_mut().enumerate() {
            *v = (k as f64 * 0.618).sin() / 3.1;
        }
        let grid = WignerGrid::new(spec, values).unwrap();
        write_wigner(&path, &grid).unwrap();
        let back = read_wigner(&path).unwrap();
        assert_eq!(back.spec, grid.spec);
        for (a, b) in back.values.iter().zip(grid.values.iter()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn matrix_round_trips_with_kind_tag() {
        let dir = tempdir();
        let path = dir.path().join("m.txt");
        let mut m = Array2::<Complex64>::zeros((3, 3));
        for (k, v) in m.iter_mut().enumerate() {
            *v = Complex64::new(k as f64 * 0.3 - 1.0, (k as f64).cos());
        }
        write_matrix(&path, "coherency", &m).unwrap();
        let (kind, back) = read_matrix(&path).unwrap();
        assert_eq!(kind, "coherency");
        for (a, b) in back.iter().zip(m.iter()) {
            assert_eq!(a.re.to_bits(), b.re.to_bits());
            assert_eq!(a.im.to_bits(), b.im.to_bits());
        }
    }

    #[test]
    fn dataset_round_trips_in_both_formats() {
        let dir = tempdir();
        let dataset = sample_dataset();
        for format in [DataFormat::Binary, DataFormat::Text] {
            let stem = dir.path().join(format!("d_{}", format.name()));
            let files =
                write_dataset(&stem, &dataset, format, &[("filtered", "false".into())]).unwrap();
            assert_eq!(files.len(), 2);
            let (back, pairs) = read_dataset(&files[0]).unwrap();
            assert_eq!(kv_get(&pairs, "filtered").unwrap(), "false");
            assert_eq!(back.n_shots, dataset.n_shots);
            assert_eq!(back.tau_grid, dataset.tau_grid);
            assert_eq!(back.phi_grid, dataset.phi_grid);
            assert_eq!(back.mode_labels, dataset.mode_labels);
            assert_abs_diff_eq!(back.lo_calibration, dataset.lo_calibration, epsilon = 0.0);
            for (a, b) in back.samples.iter().zip(dataset.samples.iter()) {
                assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }

    #[test]
    fn truncated_dataset_payload_is_detected() {
        let dir = tempdir();
        let dataset = sample_dataset();
        let stem = dir.path().join("bad");
        let files = write_dataset(&stem, &dataset, DataFormat::Binary, &[]).unwrap();
        let bytes = std::fs::read(&files[1]).unwrap();
        std::fs::write(&files[1], &bytes[..bytes.len() - 8]).unwrap();
        assert!(matches!(read_dataset(&files[0]), Err(Error::Data(_))));
    }

    #[test]
    fn ensemble_round_trips_bit_exactly() {
        let dir = tempdir();
        let config = crate::twa::PropagationConfig {
            nz: 16,
            z_extent: 2.0,
            dt: 0.1,
            t_final: 0.0,
            vg: 0.0,
            beta2: 0.0,
            chi_e: -0.001,
            n_traj: 7,
            seed: 99,
        };
        let ensemble = init_ensemble(&PulseSpec::flat(&config).with_photons(4.0), &config).unwrap();
        let stem = dir.path().join("ens");
        let files = write_ensemble(&stem, &ensemble).unwrap();
        let back = read_ensemble(&files[0]).unwrap();
        assert_eq!(back.config, ensemble.config);
        for (fa, fb) in back.fields.iter().zip(ensemble.fields.iter()) {
            assert_abs_diff_eq!(fa.dz, fb.dz, epsilon = 0.0);
            for (a, b) in fa.psi.iter().zip(fb.psi.iter()) {
                assert_eq!(a.re.to_bits(), b.re.to_bits());
                assert_eq!(a.im.to_bits(), b.im.to_bits());
            }
        }
    }

    #[test]
    fn spectrum_and_table_round_trip() {
        let dir = tempdir();
        let spectrum = SpectrumEstimate {
            freqs: vec![0.0, 1.0, 2.0],
            psd: vec![0.5, 0.25, 0.125],
            rin_db: vec![-90.0, -93.0, -96.0],
            mean: 2.5,
            segment_len: 256,
            overlap: 0.5,
            taper: "hann",
        };
        let spath = dir.path().join("s.txt");
        write_spectrum(&spath, &spectrum).unwrap();
        let (freqs, psd, rin) = read_spectrum(&spath).unwrap();
        assert_eq!(freqs, spectrum.freqs);
        assert_eq!(psd, spectrum.psd);
        assert_eq!(rin, spectrum.rin_db);

        let tpath = dir.path().join("t.txt");
        let rows = vec![vec![1.0, 2.0, 3.0], vec![-0.5, 1e-300, 6.02e23]];
        write_table(&tpath, "fits", &["a", "b", "c"], &rows).unwrap();
        let back = read_table(&tpath).unwrap();
        assert_eq!(back, rows);
    }

    #[test]
    fn digests_identify_content_changes() {
        let dir = tempdir();
        let path = dir.path().join("blob.bin");
        std::fs::write(&path, b"alpha").unwrap();
        let d1 = file_digest(&path).unwrap();
        assert_eq!(d1, sha256_hex(b"alpha"));
        assert_eq!(d1.len(), 64);
        std::fs::write(&path, b"alphb").unwrap();
        assert_ne!(file_digest(&path).unwrap(), d1);
        assert!(file_digest(&dir.path().join("missing")).is_err());
    }

    #[test]
    fn manifests_skip_comments_and_report_missing_keys() {
        let dir = tempdir();
        let path = dir.path().join("kv.txt");
        std::fs::write(&path, "# leading comment\na = 1\n\nb = two # trailing\n").unwrap();
        let pairs = read_key_values(&path).unwrap();
        assert_eq!(kv_get(&pairs, "a").unwrap(), "1");
        assert_eq!(kv_get(&pairs, "b").unwrap(), "two");
        assert!(kv_get(&pairs, "missing").is_err());
    }
}
