//! File emission: CSV tables and JSON documents with byte-stable
//! formatting.
//!
//! Every float in a CSV is rendered at nine significant digits through one
//! formatter, so a run writes identical bytes no matter how many workers
//! computed it or which platform rounded the last bit of a sum (ties below
//! the ninth digit disappear at the format boundary). CSVs carry a header
//! row, comma delimiters, '.' decimals, and LF line endings.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::Config;
use crate::engine::DecayCurve;
use crate::fitkit::FitResult;
use crate::scans::{DecouplingScan, LandscapeCell, LaserScan, OrderedComparison, SlicePoint};
use crate::transport::SizeRow;
use crate::Result;

/// Render a float with nine significant digits. Plain decimal notation
/// inside a readable exponent range, normalized e-notation outside it;
/// trailing zeros trimmed. Deterministic for every input.
pub fn fmt_sig(x: f64) -> String {
    if x == 0.0 {
        return "0".into(); // covers -0.0: the sign carries no data here
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    // Round via the exponential formatter, then reshape.
    let e = format!("{x:.8e}"); // "-1.23456789e-4"
    let (mantissa, exp) = e.split_once('e').expect("exponential format");
    let exp: i32 = exp.parse().expect("exponent digits");
    let neg = mantissa.starts_with('-');
    let digits: String = mantissa.chars().filter(|c| c.is_ascii_digit()).collect();
    let digits = digits.trim_end_matches('0');
    let digits = if digits.is_empty() { "0" } else { digits };
    let mut out = String::new();
    if neg {
        out.push('-');
    }
    if (-4..=12).contains(&exp) {
        // Decimal point sits after exp+1 leading digits.
        let point = exp + 1;
        if point <= 0 {
            out.push_str("0.");
            for _ in 0..-point {
                out.push('0');
            }
            out.push_str(digits);
        } else if (point as usize) >= digits.len() {
            out.push_str(digits);
            for _ in 0..(point as usize - digits.len()) {
                out.push('0');
            }
        } else {
            out.push_str(&digits[..point as usize]);
            out.push('.');
            out.push_str(&digits[point as usize..]);
        }
    } else {
        out.push_str(&digits[..1]);
        if digits.len() > 1 {
            out.push('.');
            out.push_str(&digits[1..]);
        }
        let _ = write!(out, "e{exp}");
    }
    out
}

/// Write a CSV with the crate's formatting rules. Rows are pre-joined
/// strings (build them with [`fmt_sig`]); the writer adds the header and
/// LF endings.
pub fn write_csv<I>(path: &Path, header: &str, rows: I) -> Result<()>
where
    I: IntoIterator,
    I::Item: AsRef<str>,
{
    let mut text = String::with_capacity(4096);
    text.push_str(header);
    text.push('\n');
    for row in rows {
        text.push_str(row.as_ref());
        text.push('\n');
    }
    fs::write(path, text)?;
    Ok(())
}

/// Join already-formatted fields into one CSV row.
pub fn csv_row<I>(fields: I) -> String
where
    I: IntoIterator,
    I::Item: AsRef<str>,
{
    let mut out = String::new();
    for (i, f) in fields.into_iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        out.push_str(f.as_ref());
    }
    out
}

/// Ensemble decay curve: `t_s,P_mean,P_stderr` (normalized at the first
/// sample, like the in-memory curve).
pub fn write_decay_csv(path: &Path, curve: &DecayCurve) -> Result<()> {
    let rows = curve.times.iter().zip(&curve.values).zip(&curve.stderr).map(|((t, v), s)| {
        csv_row([fmt_sig(*t), fmt_sig(*v), fmt_sig(*s)])
    });
    write_csv(path, "t_s,P_mean,P_stderr", rows)
}

/// Stretch-exponent sweep: `gamma,rms`.
pub fn write_gamma_csv(path: &Path, sweep: &[(f64, f64)]) -> Result<()> {
    let rows = sweep.iter().map(|(g, r)| csv_row([fmt_sig(*g), fmt_sig(*r)]));
    write_csv(path, "gamma,rms", rows)
}

/// Spatial map: `x_A,y_A,value`.
pub fn write_heatmap_csv(path: &Path, cells: &[(f64, f64, f64)]) -> Result<()> {
    let rows = cells.iter().map(|(x, y, v)| csv_row([fmt_sig(*x), fmt_sig(*y), fmt_sig(*v)]));
    write_csv(path, "x_A,y_A,value", rows)
}

/// Eigenvalue spectrum: `index,lambda_per_s`.
pub fn write_spectrum_csv(path: &Path, lambdas: &[f64]) -> Result<()> {
    let rows =
        lambdas.iter().enumerate().map(|(i, l)| csv_row([i.to_string(), fmt_sig(*l)]));
    write_csv(path, "index,lambda_per_s", rows)
}

/// Transport observable: `t_s,msd_A2,stderr`.
pub fn write_msd_csv(path: &Path, times: &[f64], msd: &[f64], stderr: &[f64]) -> Result<()> {
    let rows = times
        .iter()
        .zip(msd)
        .zip(stderr)
        .map(|((t, m), s)| csv_row([fmt_sig(*t), fmt_sig(*m), fmt_sig(*s)]));
    write_csv(path, "t_s,msd_A2,stderr", rows)
}

/// Finite-size summary: `N,alpha,alpha_err,D,D_err` (N = lattice sites).
pub fn write_sizes_csv(path: &Path, rows: &[SizeRow]) -> Result<()> {
    let lines = rows.iter().map(|r| {
        csv_row([
            r.n_sites.to_string(),
            fmt_sig(r.alpha),
            fmt_sig(r.alpha_err),
            fmt_sig(r.d),
            fmt_sig(r.d_err),
        ])
    });
    write_csv(path, "N,alpha,alpha_err,D,D_err", lines)
}

/// Relaxation landscape, long format:
/// `c_nuc,c_el_ppm,Rp,Rd,log10_ratio,tag` (blank ratio for limit cells).
pub fn write_landscape_csv(path: &Path, cells: &[LandscapeCell]) -> Result<()> {
    let rows = cells.iter().map(landscape_row);
    write_csv(path, "c_nuc,c_el_ppm,Rp,Rd,log10_ratio,tag", rows)
}

/// One landscape CSV row (shared with the checkpointing writer).
pub fn landscape_row(cell: &LandscapeCell) -> String {
    csv_row([
        fmt_sig(cell.c_nuc),
        fmt_sig(cell.c_el_ppm),
        fmt_sig(cell.r_p),
        fmt_sig(cell.r_d),
        cell.ratio_log10.map(fmt_sig).unwrap_or_default(),
        cell.tag.to_string(),
    ])
}

/// Concentration slice: `c_nuc,R_p,R_d,t_1e_s,boundary,n_configs`.
pub fn write_slice_csv(path: &Path, points: &[SlicePoint]) -> Result<()> {
    let rows = points.iter().map(|p| {
        csv_row([
            fmt_sig(p.c_nuc),
            fmt_sig(p.r_p),
            fmt_sig(p.r_d),
            p.t_1e.map(fmt_sig).unwrap_or_default(),
            format!("{:?}", p.boundary),
            p.n_configs.to_string(),
        ])
    });
    write_csv(path, "c_nuc,R_p,R_d,t_1e_s,boundary,n_configs", rows)
}

/// Laser power scan: `power_w,tau_c_s,t2_s,R_p,R_p_err,R_d,R_d_err`.
pub fn write_laser_csv(path: &Path, scan: &LaserScan) -> Result<()> {
    let rows = scan.points.iter().map(|p| {
        csv_row([
            fmt_sig(p.power),
            fmt_sig(p.tau_c),
            fmt_sig(p.t2),
            fmt_sig(p.r_p),
            fmt_sig(p.r_p_err),
            fmt_sig(p.r_d),
            fmt_sig(p.r_d_err),
        ])
    });
    write_csv(path, "power_w,tau_c_s,t2_s,R_p,R_p_err,R_d,R_d_err", rows)
}

/// Extended decoupling sweep: `inv_tau_c_per_s,R_p,R_d`.
pub fn write_decoupling_csv(path: &Path, scan: &DecouplingScan) -> Result<()> {
    let rows = scan
        .points
        .iter()
        .map(|p| csv_row([fmt_sig(p.inv_tau_c), fmt_sig(p.r_p), fmt_sig(p.r_d)]));
    write_csv(path, "inv_tau_c_per_s,R_p,R_d", rows)
}

/// Paired placement comparison, curves:
/// `t_s,random_mean,random_stderr,ordered_mean,ordered_stderr`.
pub fn write_ordered_csv(path: &Path, cmp: &OrderedComparison) -> Result<()> {
    let rows = (0..cmp.times.len()).map(|i| {
        csv_row([
            fmt_sig(cmp.times[i]),
            fmt_sig(cmp.random_mean[i]),
            fmt_sig(cmp.random_stderr[i]),
            fmt_sig(cmp.ordered_mean[i]),
            fmt_sig(cmp.ordered_stderr[i]),
        ])
    });
    write_csv(path, "t_s,random_mean,random_stderr,ordered_mean,ordered_stderr", rows)
}

/// Paired placement comparison, per-trial 1/e times:
/// `index,random_t1e_s,ordered_t1e_s,random_slower`.
pub fn write_ordered_trials_csv(path: &Path, cmp: &OrderedComparison) -> Result<()> {
    let rows = cmp.trials.iter().map(|t| {
        csv_row([
            t.index.to_string(),
            t.random_t1e.map(fmt_sig).unwrap_or_default(),
            t.ordered_t1e.map(fmt_sig).unwrap_or_default(),
            t.random_slower.to_string(),
        ])
    });
    write_csv(path, "index,random_t1e_s,ordered_t1e_s,random_slower", rows)
}

/// Fit residual trace: `t_s,data,model,residual`.
pub fn write_residuals_csv(
    path: &Path,
    times: &[f64],
    data: &[f64],
    model: &[f64],
) -> Result<()> {
    let rows = times.iter().zip(data).zip(model).map(|((t, d), m)| {
        csv_row([fmt_sig(*t), fmt_sig(*d), fmt_sig(*m), fmt_sig(d - m)])
    });
    write_csv(path, "t_s,data,model,residual", rows)
}

/// Sequence scan table: `detuning_hz,kappa,comb_weight`.
pub fn write_kappa_csv(path: &Path, rows: &[(f64, f64, f64)]) -> Result<()> {
    let lines =
        rows.iter().map(|(d, k, w)| csv_row([fmt_sig(*d), fmt_sig(*k), fmt_sig(*w)]));
    write_csv(path, "detuning_hz,kappa,comb_weight", lines)
}

/// Bath tables: `gamma_p_per_s,tau_c_s` and `omega_rad_s,J_env`.
pub fn write_pump_map_csv(path: &Path, rows: &[(f64, f64)]) -> Result<()> {
    let lines = rows.iter().map(|(g, t)| csv_row([fmt_sig(*g), fmt_sig(*t)]));
    write_csv(path, "gamma_p_per_s,tau_c_s", lines)
}

pub fn write_spectral_density_csv(path: &Path, rows: &[(f64, f64)]) -> Result<()> {
    let lines = rows.iter().map(|(w, j)| csv_row([fmt_sig(*w), fmt_sig(*j)]));
    write_csv(path, "omega_rad_s,J_env", lines)
}

/// Read a CSV written by this module back into string cells: header
/// fields, then one Vec per row. Quoting is not supported (we never emit
/// quotes); blank lines are skipped.
pub fn read_csv(path: &Path) -> Result<(Vec<String>, Vec<Vec<String>>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| crate::invalid(format!("{}: empty CSV", path.display())))?
        .split(',')
        .map(str::to_owned)
        .collect();
    let rows = lines.map(|l| l.split(',').map(str::to_owned).collect()).collect();
    Ok((header, rows))
}

/// Read a decay CSV (`t_s,P_mean,P_stderr`) back into columns.
pub fn read_decay_csv(path: &Path) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let (header, rows) = read_csv(path)?;
    if header.first().map(String::as_str) != Some("t_s") || header.len() < 2 {
        return Err(crate::invalid(format!(
            "{}: expected a decay CSV starting with t_s,P_mean",
            path.display()
        )));
    }
    let mut t = Vec::with_capacity(rows.len());
    let mut v = Vec::with_capacity(rows.len());
    let mut s = Vec::with_capacity(rows.len());
    for (i, row) in rows.iter().enumerate() {
        let parse = |cell: &str| -> Result<f64> {
            cell.parse().map_err(|_| {
                crate::invalid(format!("{} row {}: bad float {cell:?}", path.display(), i + 2))
            })
        };
        t.push(parse(&row[0])?);
        v.push(parse(&row[1])?);
        s.push(if row.len() > 2 { parse(&row[2])? } else { 0.0 });
    }
    Ok((t, v, s))
}

/// First-two-column keys of an existing landscape CSV; lets an interrupted
/// scan skip cells already on disk. Missing file means nothing done yet.
pub fn landscape_done_keys(path: &Path) -> Result<std::collections::HashSet<(String, String)>> {
    if !path.exists() {
        return Ok(Default::default());
    }
    let (_, rows) = read_csv(path)?;
    Ok(rows
        .into_iter()
        .filter(|r| r.len() >= 2)
        .map(|r| (r[0].clone(), r[1].clone()))
        .collect())
}

/// Pretty-printed JSON document (fit reports, scan summaries, manifests).
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Fit report per the emergent-law contract.
pub fn write_fit_json(path: &Path, fit: &FitResult) -> Result<()> {
    write_json(path, fit)
}

/// FNV-1a 64-bit digest, hex-encoded; stable across platforms and runs.
pub fn fnv64_hex(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// Everything needed to reproduce a run and audit what it wrote.
#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    /// Fully resolved configuration (all defaults filled, file units).
    pub config: Config,
    pub master_seed: u64,
    pub artifact_version: String,
    pub wall_time_s: f64,
    pub outputs: Vec<String>,
    /// FNV-1a digests of each module's parameter block, keyed by module.
    pub digests: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, config: &Config) -> RunManifest {
        RunManifest {
            command: command.into(),
            config: config.clone(),
            master_seed: config.master_seed,
            artifact_version: env!("CARGO_PKG_VERSION").into(),
            wall_time_s: 0.0,
            outputs: Vec::new(),
            digests: BTreeMap::new(),
        }
    }

    /// Digest a module's parameter block (any serializable value).
    pub fn digest<T: Serialize>(&mut self, module: &str, params: &T) -> Result<()> {
        let bytes = serde_json::to_vec(params)?;
        self.digests.insert(module.into(), fnv64_hex(&bytes));
        Ok(())
    }

    /// Record an output file (manifests list paths relative to out-dir).
    pub fn record(&mut self, path: &Path) {
        self.outputs.push(path.file_name().unwrap_or_default().to_string_lossy().into());
    }

    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        write_json(&path, self)?;
        Ok(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nine_digit_formatting_anchors() {
        assert_eq!(fmt_sig(0.0), "0");
        assert_eq!(fmt_sig(-0.0), "0");
        assert_eq!(fmt_sig(1.0), "1");
        assert_eq!(fmt_sig(0.5), "0.5");
        assert_eq!(fmt_sig(-2.25), "-2.25");
        assert_eq!(fmt_sig(0.01), "0.01");
        assert_eq!(fmt_sig(1e-4), "0.0001");
        assert_eq!(fmt_sig(9.999e-5), "9.999e-5");
        assert_eq!(fmt_sig(123456789.0), "123456789");
        assert_eq!(fmt_sig(1234567891.0), "1234567890"); // 9 significant digits
        assert_eq!(fmt_sig(1e13), "1e13");
        assert_eq!(fmt_sig(1.23456789e-7), "1.23456789e-7");
        assert_eq!(fmt_sig(3.867e12), "3867000000000");
        assert_eq!(fmt_sig(f64::INFINITY), "inf");
        assert_eq!(fmt_sig(f64::NAN), "nan");
    }

    #[test]
    fn formatting_rounds_not_truncates() {
        assert_eq!(fmt_sig(0.123456789449), "0.123456789");
        assert_eq!(fmt_sig(0.123456789551), "0.12345679");
        // Nine digits preserve relative accuracy to 5e-9.
        for &x in &[std::f64::consts::PI, 2.0f64.sqrt() * 1e-11, 6.02214076e23] {
            let back: f64 = fmt_sig(x).parse().unwrap();
            assert!(((back - x) / x).abs() < 5e-9, "{x} -> {}", fmt_sig(x));
        }
    }

    #[test]
    fn csv_layout_is_stable() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("sweep.csv");
        write_gamma_csv(&path, &[(0.3, 0.25), (0.5, 0.0125)]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text, "gamma,rms\n0.3,0.25\n0.5,0.0125\n");
        // LF only, even through round trips.
        assert!(!text.contains('\r'));
    }

    #[test]
    fn decay_csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("decay.csv");
        let curve = DecayCurve {
            times: vec![0.01, 0.1, 1.0],
            values: vec![1.0, 0.875, 0.25],
            stderr: vec![0.0, 0.003, 0.011],
            initial_mean: 0.98,
            n_configs: 4,
            n_skipped: 0,
            label: "round trip".into(),
        };
        write_decay_csv(&path, &curve).unwrap();
        let (t, v, s) = read_decay_csv(&path).unwrap();
        assert_eq!(t, curve.times);
        assert_eq!(v, curve.values);
        assert_eq!(s, curve.stderr);
        // A non-decay table is rejected by header.
        let other = dir.path().join("sweep.csv");
        write_gamma_csv(&other, &[(0.5, 0.1)]).unwrap();
        assert!(read_decay_csv(&other).is_err());
    }

    #[test]
    fn resume_keys_match_written_rows() {
        use crate::scans::CellTag;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("landscape.csv");
        assert!(landscape_done_keys(&path).unwrap().is_empty());
        let cell = LandscapeCell {
            c_nuc: 0.011,
            c_el_ppm: 30.0,
            r_p: 1.25,
            r_d: 0.01,
            ratio_log10: Some(2.0969100130080562),
            tag: CellTag::Intermediate,
            n_configs: 10,
            n_skipped: 0,
        };
        write_landscape_csv(&path, &[cell]).unwrap();
        let keys = landscape_done_keys(&path).unwrap();
        assert!(keys.contains(&(fmt_sig(0.011), fmt_sig(30.0))), "{keys:?}");
    }

    #[test]
    fn digests_are_stable_and_key_sensitive() {
        assert_eq!(fnv64_hex(b""), "cbf29ce484222325");
        assert_eq!(fnv64_hex(b"a"), fnv64_hex(b"a"));
        assert_ne!(fnv64_hex(b"a"), fnv64_hex(b"b"));
        let mut m = RunManifest::new("decay", &Config::default());
        m.digest("engine", &("seed", 7u64)).unwrap();
        m.digest("bath", &("tau_c", 2e-3)).unwrap();
        let j = serde_json::to_string(&m).unwrap();
        assert!(j.contains("\"engine\""), "{j}");
        assert!(j.contains("\"artifact_version\""), "{j}");
    }

    #[test]
    fn manifest_records_relative_outputs() {
        let dir = tempfile::tempdir().unwrap();
        let mut m = RunManifest::new("landscape", &Config::default());
        m.record(&dir.path().join("landscape.csv"));
        assert_eq!(m.outputs, vec!["landscape.csv".to_string()]);
        let path = m.write(dir.path()).unwrap();
        let text = std::fs::read_to_string(path).unwrap();
        assert!(text.ends_with('\n'));
        assert!(text.contains("\"command\": \"landscape\""));
    }
}
