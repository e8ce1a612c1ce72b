//! Command-line front end: one subcommand per figure-class output, a JSON
//! config file with override flags, deterministic seeding, and a manifest
//! for every run.
//!
//! All knobs live in the config file (see [`crate::config`]); the flags
//! here override single fields so quick parameter scans don't need a file
//! per point. Every run writes its artifacts plus `manifest.json` into
//! `--out-dir` (or `$SPINNET_OUT`, or the working directory). CSVs are
//! byte-identical for a given manifest regardless of `--workers`.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::bath::{filter_function, tau_c_of_power, PumpModel};
use crate::config::{self, Config, Resolved};
use crate::engine::{ensemble_decay, log_time_grid, realization_modes, DecayCurve};
use crate::fitkit::{
    default_gamma_grid, fit_emergent, gamma_sweep, poisson_trap_survival, positive_window,
    FitOptions,
};
use crate::floquet::{find_kappa_zero, PulseCycle};
use crate::io::{self, fmt_sig, RunManifest};
use crate::scans::{
    concentration_slice, crossing_time, default_inv_tau_c_grid, default_power_grid,
    landscape_cell, laser_scan, optical_decoupling_extrapolation, ordered_vs_random,
    OrderedParams,
};
use crate::spectral::{
    eigenvalue_spectrum, mode_profile_2d, slowest_mode_stats, PROFILE_GRID, ZERO_MODE_TOL,
};
use crate::transport::{finite_size_scan, measure_transport};
use crate::{invalid, Result};

#[derive(Parser, Debug)]
#[command(name = "spinnet", version, about = "Nuclear-spin relaxation and transport simulator")]
pub struct Cli {
    /// JSON config file; omitted means all defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed override.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Realizations / trajectories / trials override.
    #[arg(long, global = true)]
    pub configs: Option<usize>,
    /// Worker threads (0 = one per core). Outputs do not depend on this.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Output directory (default: $SPINNET_OUT, then ".").
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Drive regime override: I, II or III.
    #[arg(long, global = true)]
    pub regime: Option<String>,
    /// Nuclear site fraction override.
    #[arg(long, global = true)]
    pub cnuc: Option<f64>,
    /// Electron content override, ppm.
    #[arg(long, global = true)]
    pub cel_ppm: Option<f64>,
    /// Laser power override, W.
    #[arg(long, global = true)]
    pub power: Option<f64>,
    /// Box edge override, conventional cells.
    #[arg(long, global = true)]
    pub box_cells: Option<usize>,

    #[command(subcommand)]
    pub cmd: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Ensemble survival curve for the configured regime.
    Decay,
    /// Two-channel decay-law fit with residual trace.
    Fit {
        /// Decay CSV to fit; omitted runs the decay pipeline first.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// RMS residual across stretching exponents (argmin locates the law).
    GammaSweep {
        /// Decay CSV to sweep; omitted runs the decay pipeline first.
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Polarization spreading from a point source: MSD and power-law fit.
    Transport,
    /// Transport exponent and coefficient across box sizes.
    FiniteSize {
        /// Box edges to scan, comma-separated cells.
        #[arg(long, default_value = "12,17,22,27")]
        sizes: String,
        /// Independent runs per size (errors come from their scatter).
        #[arg(long, default_value_t = 8)]
        runs: usize,
    },
    /// Decay-rate spectrum, slowest-rate statistics, slow-mode heatmap.
    Eigen,
    /// Rate landscape over (c_nuc, c_el) cells; resumes interrupted scans.
    Landscape {
        /// Nuclear concentrations, comma-separated fractions.
        #[arg(long, default_value = "0.004,0.011,0.05,0.1")]
        cnuc_grid: String,
        /// Electron concentrations, comma-separated ppm.
        #[arg(long, default_value = "2,30,300,3000")]
        cel_grid: String,
    },
    /// Landscape slice: rates and 1/e times across c_nuc at fixed c_el.
    Slice {
        /// Nuclear concentrations, comma-separated fractions.
        #[arg(long, default_value = "0.004,0.011,0.02,0.05,0.1")]
        cnuc_list: String,
    },
    /// Fitted rates across the calibrated laser-power grid, plus the
    /// extended inverse-correlation-time sweep.
    Laser {
        /// Independent batches per power (rate errors from their scatter).
        #[arg(long, default_value_t = 4)]
        batches: usize,
    },
    /// Random vs octant-ordered electron placement, paired seeds.
    Ordered {
        /// Box edge in cells (32 puts eight electrons at 30 ppm).
        #[arg(long, default_value_t = 32)]
        cells: usize,
        /// Paired trials.
        #[arg(long, default_value_t = 50)]
        pairs: usize,
    },
    /// Coupling scale factor and sideband weight across pulse detunings.
    Kappa,
    /// Pump-strength map of the electron correlation time and the bath
    /// spectral density.
    Bath,
    /// Trap-survival reference curves with known stretching exponents.
    Oracle,
}

impl Cmd {
    fn name(&self) -> &'static str {
        match self {
            Cmd::Decay => "decay",
            Cmd::Fit { .. } => "fit",
            Cmd::GammaSweep { .. } => "gamma-sweep",
            Cmd::Transport => "transport",
            Cmd::FiniteSize { .. } => "finite-size",
            Cmd::Eigen => "eigen",
            Cmd::Landscape { .. } => "landscape",
            Cmd::Slice { .. } => "slice",
            Cmd::Laser { .. } => "laser",
            Cmd::Ordered { .. } => "ordered",
            Cmd::Kappa => "kappa",
            Cmd::Bath => "bath",
            Cmd::Oracle => "oracle",
        }
    }
}

/// Binary entry point: parse, run, report.
pub fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

/// Execute one parsed invocation; returns the artifact paths (manifest
/// last). Split from `main` so tests can drive full runs in-process.
pub fn run(cli: Cli) -> Result<Vec<PathBuf>> {
    let started = Instant::now();
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path)?;
            if text.trim().is_empty() {
                Config::default()
            } else {
                serde_json::from_str(&text)?
            }
        }
        None => Config::default(),
    };
    apply_overrides(&mut cfg, &cli);
    let resolved = config::resolve(cfg.clone())?;
    for w in &resolved.warnings {
        eprintln!("warning: {w}");
    }
    let out_dir = cli
        .out_dir
        .clone()
        .or_else(|| std::env::var_os("SPINNET_OUT").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("."));
    fs::create_dir_all(&out_dir)?;

    let mut manifest = RunManifest::new(cli.cmd.name(), &cfg);
    base_digests(&mut manifest, &resolved)?;

    // A scoped pool (not the global one) so each invocation honors its own
    // --workers even when several run in one process.
    let mut body = || dispatch(&cli.cmd, &resolved, &out_dir, &mut manifest);
    let outputs = if resolved.workers > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(resolved.workers)
            .build()
            .map_err(|e| invalid(format!("worker pool: {e}")))?
            .install(body)?
    } else {
        body()?
    };

    for path in &outputs {
        manifest.record(path);
    }
    manifest.wall_time_s = started.elapsed().as_secs_f64();
    let mpath = manifest.write(&out_dir)?;
    let mut all = outputs;
    for p in &all {
        println!("wrote {}", p.display());
    }
    println!("wrote {}", mpath.display());
    all.push(mpath);
    Ok(all)
}

fn apply_overrides(cfg: &mut Config, cli: &Cli) {
    if let Some(s) = cli.seed {
        cfg.master_seed = s;
    }
    if let Some(n) = cli.configs {
        cfg.n_configs = n;
    }
    if let Some(w) = cli.workers {
        cfg.workers = w;
    }
    if let Some(r) = &cli.regime {
        cfg.regime = r.clone();
    }
    if let Some(c) = cli.cnuc {
        cfg.c_nuc = c;
    }
    if let Some(c) = cli.cel_ppm {
        cfg.c_el_ppm = c;
    }
    if let Some(p) = cli.power {
        cfg.laser_power_w = p;
    }
    if let Some(b) = cli.box_cells {
        cfg.box_cells = b;
    }
}

/// Parameter digests shared by every subcommand; pipelines add their own.
fn base_digests(m: &mut RunManifest, r: &Resolved) -> Result<()> {
    m.digest(
        "lattice",
        &(r.geometry.cells, r.geometry.lattice_constant, r.conc.c_nuc, r.conc.c_el, r.core_radius),
    )?;
    let c = &r.spec.cycle;
    m.digest("floquet", &(c.flip, c.phase, c.detuning, c.t_pulse, c.t_delay, r.raw.k_max))?;
    m.digest("bath", &(r.bath.tau_c,))?;
    m.digest("engine", &(r.spec.eta, r.t2, r.raw.n_configs, r.raw.master_seed))?;
    Ok(())
}

fn dispatch(cmd: &Cmd, r: &Resolved, dir: &Path, m: &mut RunManifest) -> Result<Vec<PathBuf>> {
    match cmd {
        Cmd::Decay => cmd_decay(r, dir),
        Cmd::Fit { input } => cmd_fit(r, input.as_deref(), dir),
        Cmd::GammaSweep { input } => cmd_gamma_sweep(r, input.as_deref(), dir),
        Cmd::Transport => cmd_transport(r, dir, m),
        Cmd::FiniteSize { sizes, runs } => cmd_finite_size(r, sizes, *runs, dir, m),
        Cmd::Eigen => cmd_eigen(r, dir),
        Cmd::Landscape { cnuc_grid, cel_grid } => cmd_landscape(r, cnuc_grid, cel_grid, dir),
        Cmd::Slice { cnuc_list } => cmd_slice(r, cnuc_list, dir),
        Cmd::Laser { batches } => cmd_laser(r, *batches, dir),
        Cmd::Ordered { cells, pairs } => cmd_ordered(r, *cells, *pairs, dir),
        Cmd::Kappa => cmd_kappa(r, dir),
        Cmd::Bath => cmd_bath(r, dir, m),
        Cmd::Oracle => cmd_oracle(r, dir, m),
    }
}

fn parse_f64_list(text: &str, what: &str) -> Result<Vec<f64>> {
    let vals: Vec<f64> = text
        .split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| invalid(format!("bad {what} entry {s:?}"))))
        .collect::<Result<_>>()?;
    if vals.is_empty() {
        return Err(invalid(format!("{what} list is empty")));
    }
    Ok(vals)
}

fn parse_usize_list(text: &str, what: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(|s| s.trim().parse::<usize>().map_err(|_| invalid(format!("bad {what} entry {s:?}"))))
        .collect()
}

fn run_configured_decay(r: &Resolved) -> Result<DecayCurve> {
    let drive = r.spec.analysis()?;
    ensemble_decay(&r.ensemble(), &drive, &r.times)
}

fn cmd_decay(r: &Resolved, dir: &Path) -> Result<Vec<PathBuf>> {
    let curve = run_configured_decay(r)?;
    let raw: Vec<f64> = curve.values.iter().map(|v| v * curve.initial_mean).collect();
    match crossing_time(&curve.times, &raw, (-1.0f64).exp()) {
        Some(t) => println!(
            "{}: {} realizations, 1/e at {} s",
            curve.label,
            curve.n_configs,
            fmt_sig(t)
        ),
        None => println!(
            "{}: {} realizations, stays above 1/e through {} s",
            curve.label,
            curve.n_configs,
            fmt_sig(*curve.times.last().unwrap())
        ),
    }
    let path = dir.join("decay.csv");
    io::write_decay_csv(&path, &curve)?;
    Ok(vec![path])
}

fn load_or_run_curve(r: &Resolved, input: Option<&Path>) -> Result<(Vec<f64>, Vec<f64>)> {
    match input {
        Some(path) => {
            let (t, v, _) = io::read_decay_csv(path)?;
            Ok((t, v))
        }
        None => {
            let curve = run_configured_decay(r)?;
            Ok((curve.times, curve.values))
        }
    }
}

fn cmd_fit(r: &Resolved, input: Option<&Path>, dir: &Path) -> Result<Vec<PathBuf>> {
    let (times, values) = load_or_run_curve(r, input)?;
    let window = positive_window(&times, &values);
    let opts = FitOptions { gamma: 0.5, window, channels: r.spec.channels };
    let fit = fit_emergent(&times, &values, &opts)?;
    println!(
        "R_p = {} /s, R_d = {} /s ({:?}, rrms {})",
        fmt_sig(fit.r_p),
        fmt_sig(fit.r_d),
        fit.boundary,
        fmt_sig(fit.rrms)
    );
    let fit_path = dir.join("fit.json");
    io::write_fit_json(&fit_path, &fit)?;
    // Residuals under the fit's own convention: both the data and the model
    // renormalized at the window start.
    let (w0, w1) = fit.window;
    let norm = times
        .iter()
        .zip(&values)
        .find(|(&t, _)| t >= w0)
        .map(|(_, &v)| v)
        .ok_or_else(|| invalid("fit window holds no samples"))?;
    let mut wt = Vec::new();
    let mut wd = Vec::new();
    let mut wm = Vec::new();
    for (&t, &v) in times.iter().zip(&values) {
        if t >= w0 && t <= w1 {
            wt.push(t);
            wd.push(v / norm);
            wm.push(fit.model_at_window(t));
        }
    }
    let res_path = dir.join("residuals.csv");
    io::write_residuals_csv(&res_path, &wt, &wd, &wm)?;
    Ok(vec![fit_path, res_path])
}

fn cmd_gamma_sweep(r: &Resolved, input: Option<&Path>, dir: &Path) -> Result<Vec<PathBuf>> {
    let (times, values) = load_or_run_curve(r, input)?;
    let sweep = gamma_sweep(&times, &values, &default_gamma_grid(), None)?;
    println!("residual argmin at gamma = {}", fmt_sig(sweep.argmin));
    let csv = dir.join("gamma.csv");
    io::write_gamma_csv(&csv, &sweep.points.iter().map(|p| (p.gamma, p.rms)).collect::<Vec<_>>())?;
    let json = dir.join("gamma_sweep.json");
    io::write_json(&json, &sweep)?;
    Ok(vec![csv, json])
}

/// Transport wants an early-start grid; the configured grid only wins when
/// the config actually changed it.
fn transport_times(r: &Resolved) -> Vec<f64> {
    let d = Config::default();
    if r.raw.time_start_s == d.time_start_s
        && r.raw.time_end_s == d.time_end_s
        && r.raw.time_points == d.time_points
    {
        crate::transport::default_transport_grid()
    } else {
        r.times.clone()
    }
}

fn cmd_transport(r: &Resolved, dir: &Path, m: &mut RunManifest) -> Result<Vec<PathBuf>> {
    let times = transport_times(r);
    m.digest("transport", &(crate::transport::DEFAULT_KAPPA, crate::transport::DEFAULT_T2))?;
    let (run, fit) =
        measure_transport(r.geometry, r.conc.c_nuc, &times, r.raw.n_configs, r.raw.master_seed)?;
    println!(
        "alpha = {} +- {}, D = {} +- {} A^2/s^alpha ({} trajectories, front cutoff {} s)",
        fmt_sig(fit.alpha),
        fmt_sig(fit.alpha_err),
        fmt_sig(fit.d),
        fmt_sig(fit.d_err),
        run.n_traj,
        fmt_sig(run.t_cutoff)
    );
    let msd = dir.join("msd.csv");
    io::write_msd_csv(&msd, &run.times, &run.msd, &run.msd_stderr)?;
    let json = dir.join("transport_fit.json");
    io::write_json(&json, &fit)?;
    Ok(vec![msd, json])
}

fn cmd_finite_size(
    r: &Resolved,
    sizes: &str,
    runs: usize,
    dir: &Path,
    m: &mut RunManifest,
) -> Result<Vec<PathBuf>> {
    let sizes = parse_usize_list(sizes, "sizes")?;
    // Small boxes need the early grid (the front arrives fast).
    let times = log_time_grid(1e-3, 300.0, 100);
    m.digest("transport", &(&sizes, runs, r.raw.n_configs))?;
    let rows = finite_size_scan(r.conc.c_nuc, &sizes, runs, r.raw.n_configs, &times, r.raw.master_seed)?;
    for row in &rows {
        println!(
            "{} cells ({} sites): alpha = {} +- {}, D = {} +- {}",
            row.cells,
            row.n_sites,
            fmt_sig(row.alpha),
            fmt_sig(row.alpha_err),
            fmt_sig(row.d),
            fmt_sig(row.d_err)
        );
    }
    let path = dir.join("sizes.csv");
    io::write_sizes_csv(&path, &rows)?;
    Ok(vec![path])
}

fn cmd_eigen(r: &Resolved, dir: &Path) -> Result<Vec<PathBuf>> {
    let drive = r.spec.analysis()?;
    let params = r.ensemble();
    let spectra = eigenvalue_spectrum(&params, &drive, &[r.conc.c_nuc], r.raw.n_configs)?;
    let stats = slowest_mode_stats(&params, &drive, true)?;
    println!(
        "slowest rate = {} +- {} /s over {} realizations ({} empty)",
        fmt_sig(stats.mean),
        fmt_sig(stats.stderr),
        stats.n_used,
        stats.n_empty
    );
    let spec_path = dir.join("spectrum.csv");
    io::write_spectrum_csv(&spec_path, &spectra[0].rates)?;
    let stats_path = dir.join("eigen_stats.json");
    io::write_json(&stats_path, &stats)?;
    let mut outputs = vec![spec_path, stats_path];
    // Spatial profile of the slowest genuine mode of the first non-empty
    // realization.
    for index in 0..params.n_configs as u64 {
        let Some(rm) = realization_modes(&params, &drive, index)? else { continue };
        let n = rm.modes.n();
        let Some(j) = (0..n).rev().find(|&j| -rm.modes.eig.values[j] > ZERO_MODE_TOL) else {
            continue;
        };
        let map = mode_profile_2d(&rm.real, rm.modes.eig.vector(j), PROFILE_GRID)?;
        let path = dir.join("slow_mode_map.csv");
        io::write_heatmap_csv(&path, &map.rows())?;
        outputs.push(path);
        break;
    }
    Ok(outputs)
}

fn cmd_landscape(r: &Resolved, cnuc_grid: &str, cel_grid: &str, dir: &Path) -> Result<Vec<PathBuf>> {
    let c_nuc_grid = parse_f64_list(cnuc_grid, "cnuc-grid")?;
    let cel_ppm_grid = parse_f64_list(cel_grid, "cel-grid")?;
    let base = r.ensemble();
    let path = dir.join("landscape.csv");
    // Checkpointed: finished cells are read back by key and skipped, so an
    // interrupted scan resumes where it stopped and a finished file is
    // left untouched (rows land in deterministic grid order either way).
    let done = io::landscape_done_keys(&path)?;
    use std::io::Write as _;
    let mut file = fs::OpenOptions::new().create(true).append(true).open(&path)?;
    if done.is_empty() && file.metadata()?.len() == 0 {
        writeln!(file, "c_nuc,c_el_ppm,Rp,Rd,log10_ratio,tag")?;
    }
    for &c_nuc in &c_nuc_grid {
        for &ppm in &cel_ppm_grid {
            let key = (fmt_sig(c_nuc), fmt_sig(ppm));
            if done.contains(&key) {
                println!("cell ({}, {} ppm): already on disk, skipping", key.0, key.1);
                continue;
            }
            let (cell, _) = landscape_cell(&r.spec, c_nuc, ppm, &base, &r.times)?;
            writeln!(file, "{}", io::landscape_row(&cell))?;
            file.flush()?;
            println!(
                "cell ({}, {} ppm): R_p = {}, R_d = {}, {}",
                key.0,
                key.1,
                fmt_sig(cell.r_p),
                fmt_sig(cell.r_d),
                cell.tag
            );
        }
    }
    Ok(vec![path])
}

fn cmd_slice(r: &Resolved, cnuc_list: &str, dir: &Path) -> Result<Vec<PathBuf>> {
    let list = parse_f64_list(cnuc_list, "cnuc-list")?;
    let base = r.ensemble();
    let points = concentration_slice(&r.spec, &list, r.raw.c_el_ppm, &base, &r.times)?;
    for p in &points {
        let t1e = p.t_1e.map(|t| fmt_sig(t)).unwrap_or_else(|| "beyond window".into());
        println!(
            "c_nuc = {}: R_p = {}, R_d = {}, 1/e at {}",
            fmt_sig(p.c_nuc),
            fmt_sig(p.r_p),
            fmt_sig(p.r_d),
            t1e
        );
    }
    let path = dir.join("slice.csv");
    io::write_slice_csv(&path, &points)?;
    Ok(vec![path])
}

fn cmd_laser(r: &Resolved, batches: usize, dir: &Path) -> Result<Vec<PathBuf>> {
    let base = r.ensemble();
    let scan = laser_scan(&r.spec, &r.laser_map, &default_power_grid(), &base, &r.times, batches)?;
    let (first, last) = (scan.points.first().unwrap(), scan.points.last().unwrap());
    println!(
        "regime {}: R_p {} -> {} /s, R_d {} -> {} /s across {} powers",
        scan.regime,
        fmt_sig(first.r_p),
        fmt_sig(last.r_p),
        fmt_sig(first.r_d),
        fmt_sig(last.r_d),
        scan.points.len()
    );
    let csv = dir.join("laser.csv");
    io::write_laser_csv(&csv, &scan)?;
    // The extended sweep past the calibrated range (same ensemble).
    let decoupling = optical_decoupling_extrapolation(
        &r.spec,
        &default_inv_tau_c_grid(),
        &base,
        &r.times,
    )?;
    println!(
        "extended sweep: peak at 1/tau_c = {} /s, single interior peak: {}",
        fmt_sig(decoupling.points[decoupling.peak_index].inv_tau_c),
        decoupling.single_interior_peak && decoupling.decreasing_after_peak
    );
    let dcsv = dir.join("decoupling.csv");
    io::write_decoupling_csv(&dcsv, &decoupling)?;
    Ok(vec![csv, dcsv])
}

fn cmd_ordered(r: &Resolved, cells: usize, pairs: usize, dir: &Path) -> Result<Vec<PathBuf>> {
    let params = OrderedParams {
        cells,
        c_nuc: r.conc.c_nuc,
        n_electrons: 8,
        n_pairs: pairs,
        master_seed: r.raw.master_seed,
        eta: r.spec.eta,
        bath: r.bath,
        t2: r.t2,
        arm_salt: 0,
    };
    let drive = r.spec.analysis()?;
    let cmp = ordered_vs_random(&params, &drive, &r.times)?;
    let decided = cmp.trials.iter().filter(|t| t.random_t1e.is_some() && t.ordered_t1e.is_some());
    println!(
        "random slower in {} of {} trials ({} with both 1/e times resolved)",
        cmp.n_random_slower,
        cmp.trials.len(),
        decided.count()
    );
    let curves = dir.join("ordered_curves.csv");
    io::write_ordered_csv(&curves, &cmp)?;
    let trials = dir.join("ordered_trials.csv");
    io::write_ordered_trials_csv(&trials, &cmp)?;
    let summary = dir.join("ordered_summary.json");
    io::write_json(
        &summary,
        &serde_json::json!({
            "n_pairs": cmp.trials.len(),
            "n_random_slower": cmp.n_random_slower,
            "fraction_random_slower": cmp.n_random_slower as f64 / cmp.trials.len() as f64,
        }),
    )?;
    Ok(vec![curves, trials, summary])
}

fn cmd_kappa(r: &Resolved, dir: &Path) -> Result<Vec<PathBuf>> {
    let two_pi = 2.0 * std::f64::consts::PI;
    let base = r.spec.cycle;
    // Sweep the detuning dial over 0..5 kHz with everything else fixed.
    let mut rows = Vec::with_capacity(101);
    for i in 0..101 {
        let hz = 5000.0 * i as f64 / 100.0;
        let an = PulseCycle { detuning: two_pi * hz, ..base }.analyze(r.raw.k_max)?;
        let weight: f64 = (-an.k_max..=an.k_max).map(|k| an.harmonic_weight(k)).sum();
        rows.push((hz, an.kappa, weight));
    }
    let scan = dir.join("kappa_scan.csv");
    io::write_kappa_csv(&scan, &rows)?;
    // The resolved cycle's own sideband comb.
    let an = r.spec.analysis()?;
    let comb = filter_function(&an);
    let comb_path = dir.join("filter_comb.csv");
    io::write_csv(
        &comb_path,
        "omega_rad_s,weight",
        comb.iter().map(|(w, c)| io::csv_row([fmt_sig(*w), fmt_sig(*c)])),
    )?;
    println!("kappa = {} at the configured detuning", fmt_sig(an.kappa));
    if (base.flip - std::f64::consts::FRAC_PI_2).abs() < 1e-12 {
        let zero = find_kappa_zero(
            PulseCycle { detuning: 0.0, ..base },
            two_pi * 1500.0,
            two_pi * 3500.0,
            1e-6,
        )?;
        println!("kappa zero crossing at {} Hz", fmt_sig(zero / two_pi));
    }
    Ok(vec![scan, comb_path])
}

fn cmd_bath(r: &Resolved, dir: &Path, m: &mut RunManifest) -> Result<Vec<PathBuf>> {
    let pump = PumpModel::default();
    let grid: Vec<f64> = (1..=16).map(|i| 0.5 * i as f64).collect();
    m.digest("bath_pump", &pump)?;
    let (map, fits) = tau_c_of_power(&pump, &grid)?;
    println!(
        "1/tau_c linear in pump strength: R^2 = {}, monotone: {}",
        fmt_sig(map.r_squared),
        map.monotone
    );
    let rows: Vec<(f64, f64)> = grid.iter().zip(&fits).map(|(&g, f)| (g, f.tau_c)).collect();
    let pump_path = dir.join("pump_map.csv");
    io::write_pump_map_csv(&pump_path, &rows)?;
    // Configured bath's spectral density over a wide log grid.
    let jrows: Vec<(f64, f64)> = (0..200)
        .map(|i| {
            let w = 1e2 * (1e7f64 / 1e2).powf(i as f64 / 199.0);
            (w, r.bath.j(w))
        })
        .collect();
    let j_path = dir.join("spectral_density.csv");
    io::write_spectral_density_csv(&j_path, &jrows)?;
    let map_path = dir.join("laser_map.json");
    io::write_json(&map_path, &map)?;
    Ok(vec![pump_path, j_path, map_path])
}

fn cmd_oracle(r: &Resolved, dir: &Path, m: &mut RunManifest) -> Result<Vec<PathBuf>> {
    // Reference decays with exactly known stretching exponents 3/alpha:
    // traps coupling as 1/r^6 give 1/2, as 1/r^4 give 3/4.
    let times6: Vec<f64> = log_time_grid(10f64.powf(-1.5), 1e2, 25);
    let times4: Vec<f64> = log_time_grid(10f64.powf(-1.5), 10f64.powf(1.3), 25);
    let n = r.raw.n_configs.max(1000);
    m.digest("oracle", &(1.0, 0.04, 0.02, n))?;
    let s6 = poisson_trap_survival(1.0, 0.04, 6.0, &times6, n, r.raw.master_seed)?;
    let s4 = poisson_trap_survival(1.0, 0.02, 4.0, &times4, n, r.raw.master_seed + 1)?;
    let report = |name: &str, s: &crate::fitkit::TrapSurvival| match s.exponent {
        Some((x, se)) => println!("{name}: exponent {} +- {}", fmt_sig(x), fmt_sig(se)),
        None => println!("{name}: decay too small to fit"),
    };
    report("1/r^6", &s6);
    report("1/r^4", &s4);
    let p6 = dir.join("oracle_r6.csv");
    let p4 = dir.join("oracle_r4.csv");
    for (path, s) in [(&p6, &s6), (&p4, &s4)] {
        io::write_csv(
            path,
            "t_s,S",
            s.times.iter().zip(&s.survival).map(|(t, v)| io::csv_row([fmt_sig(*t), fmt_sig(*v)])),
        )?;
    }
    let json = dir.join("oracle.json");
    io::write_json(
        &json,
        &serde_json::json!({
            "r6": { "exponent": s6.exponent.map(|e| e.0), "stderr": s6.exponent.map(|e| e.1) },
            "r4": { "exponent": s4.exponent.map(|e| e.0), "stderr": s4.exponent.map(|e| e.1) },
            "n_samples": n,
        }),
    )?;
    Ok(vec![p6, p4, json])
}
