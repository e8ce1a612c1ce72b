//! Run configuration: one JSON file capturing every tunable.
//!
//! The file speaks human units — frequencies in Hz, angles in degrees,
//! pulse timings in microseconds, electron content in ppm — and resolution
//! normalizes everything to the internal conventions (rad/s, radians,
//! seconds, site fractions). An empty file is a valid config meaning "all
//! defaults"; unknown keys are rejected by name so typos cannot silently
//! revert a knob to its default. Validation collects every violation before
//! reporting, one per line.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::bath::{LaserMap, LorentzianBath};
use crate::engine::{log_time_grid, EnsembleParams};
use crate::lattice::{BoxGeometry, Concentrations, LATTICE_CONSTANT};
use crate::scans::{
    cell_core_radius, frozen_core_radius_for, regime_preset, RegimeLabel, RegimeSpec,
};
use crate::{invalid, Result};

/// File-facing configuration. Every field has a default, so any subset may
/// be given; the full resolved set is echoed into run manifests.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Drive preset: "I" (spin-lock), "II" (hopping frozen), "III"
    /// (relaxation starved).
    pub regime: String,
    /// Conventional diamond cells per box edge.
    pub box_cells: usize,
    /// Nuclear site fraction (0.011 = natural abundance).
    pub c_nuc: f64,
    /// Electron-defect content in ppm of lattice sites.
    pub c_el_ppm: f64,
    /// Disorder realizations per ensemble.
    pub n_configs: usize,
    pub master_seed: u64,
    /// Worker threads; 0 means one per available core. Results are
    /// byte-identical at any setting.
    pub workers: usize,
    /// Laser power in watts on the calibrated power map.
    pub laser_power_w: f64,
    /// Electron correlation time override, seconds. Default: the power map.
    pub tau_c_s: Option<f64>,
    /// Nuclear dephasing-time override, seconds. Default: the power map.
    pub t2_s: Option<f64>,
    /// Relaxation-strength prefactor override. Default: the regime preset.
    pub eta: Option<f64>,
    /// Pulse detuning override in Hz. Default: the regime preset.
    pub detuning_hz: Option<f64>,
    /// Flip-angle override in degrees. Default: the regime preset.
    pub flip_deg: Option<f64>,
    /// Pulse phase in degrees.
    pub phase_deg: f64,
    /// Pulse duration and interpulse delay, microseconds.
    pub t_pulse_us: f64,
    pub t_delay_us: f64,
    /// Sideband truncation order for drive analyses.
    pub k_max: i32,
    /// Log-spaced observation grid, seconds.
    pub time_start_s: f64,
    pub time_end_s: f64,
    pub time_points: usize,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            regime: "I".into(),
            box_cells: 25,
            c_nuc: 0.011,
            c_el_ppm: 30.0,
            n_configs: 100,
            master_seed: 1,
            workers: 0,
            laser_power_w: 0.0,
            tau_c_s: None,
            t2_s: None,
            eta: None,
            detuning_hz: None,
            flip_deg: None,
            phase_deg: 0.0,
            t_pulse_us: 38.0,
            t_delay_us: 40.0,
            k_max: 50,
            time_start_s: 1e-2,
            time_end_s: 600.0,
            time_points: 400,
        }
    }
}

/// A validated configuration in internal units, ready to drive any
/// pipeline. Keeps the raw file form for manifest echo.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub raw: Config,
    pub label: RegimeLabel,
    pub spec: RegimeSpec,
    pub geometry: BoxGeometry,
    pub conc: Concentrations,
    /// Effective (box-capped) frozen-core radius, angstrom.
    pub core_radius: f64,
    pub bath: LorentzianBath,
    pub t2: f64,
    pub laser_map: LaserMap,
    pub times: Vec<f64>,
    pub workers: usize,
    /// Advisory notes (tiny expected electron counts, capped cores, ...);
    /// callers print these, they never fail a run.
    pub warnings: Vec<String>,
}

impl Resolved {
    /// Ensemble parameters for the configured decay pipeline.
    pub fn ensemble(&self) -> EnsembleParams {
        EnsembleParams {
            geometry: self.geometry,
            conc: self.conc,
            core_radius: self.core_radius,
            eta: self.spec.eta,
            bath: self.bath,
            t2: self.t2,
            n_configs: self.raw.n_configs,
            master_seed: self.raw.master_seed,
            label: format!("regime {} ({})", self.label, self.raw.c_el_ppm),
        }
    }
}

/// Read and resolve a config file. A missing `--config` flag upstream maps
/// to `resolve_str("")`, i.e. all defaults.
pub fn load(path: &Path) -> Result<Resolved> {
    let text = std::fs::read_to_string(path)?;
    resolve_str(&text)
}

/// Parse (empty input = defaults) and resolve.
pub fn resolve_str(text: &str) -> Result<Resolved> {
    let cfg: Config = if text.trim().is_empty() {
        Config::default()
    } else {
        serde_json::from_str(text)?
    };
    resolve(cfg)
}

/// Validate in aggregate, normalize units, and assemble the run pieces.
pub fn resolve(cfg: Config) -> Result<Resolved> {
    let mut errs = Vec::new();

    let label = match cfg.regime.parse::<RegimeLabel>() {
        Ok(l) => Some(l),
        Err(e) => {
            errs.push(e.to_string());
            None
        }
    };
    if cfg.box_cells < 2 {
        errs.push(format!("box_cells must be at least 2, got {}", cfg.box_cells));
    }
    if !(cfg.c_nuc > 0.0 && cfg.c_nuc <= 0.5) {
        errs.push(format!("c_nuc must lie in (0, 0.5], got {}", cfg.c_nuc));
    }
    if !(cfg.c_el_ppm >= 0.0 && cfg.c_el_ppm <= 10_000.0) {
        errs.push(format!("c_el_ppm must lie in [0, 10000], got {}", cfg.c_el_ppm));
    }
    if cfg.n_configs == 0 {
        errs.push("n_configs must be at least 1".into());
    }
    let map = LaserMap::calibrated_default();
    if !(cfg.laser_power_w >= 0.0 && cfg.laser_power_w <= map.p_max) {
        errs.push(format!(
            "laser_power_w must lie in [0, {}], got {}",
            map.p_max, cfg.laser_power_w
        ));
    }
    for (name, value) in [("tau_c_s", cfg.tau_c_s), ("t2_s", cfg.t2_s), ("eta", cfg.eta)] {
        if let Some(v) = value {
            if !(v > 0.0 && v.is_finite()) {
                errs.push(format!("{name} must be positive, got {v}"));
            }
        }
    }
    if let Some(f) = cfg.flip_deg {
        if !(f > 0.0 && f <= 180.0) {
            errs.push(format!("flip_deg must lie in (0, 180], got {f}"));
        }
    }
    if !(cfg.t_pulse_us > 0.0) {
        errs.push(format!("t_pulse_us must be positive, got {}", cfg.t_pulse_us));
    }
    if !(cfg.t_delay_us >= 0.0) {
        errs.push(format!("t_delay_us must not be negative, got {}", cfg.t_delay_us));
    }
    if cfg.k_max < 1 {
        errs.push(format!("k_max must be at least 1, got {}", cfg.k_max));
    }
    if !(cfg.time_start_s > 0.0 && cfg.time_end_s > cfg.time_start_s) {
        errs.push(format!(
            "time grid must satisfy 0 < start < end, got [{}, {}]",
            cfg.time_start_s, cfg.time_end_s
        ));
    }
    if cfg.time_points < 2 {
        errs.push(format!("time_points must be at least 2, got {}", cfg.time_points));
    }
    if !errs.is_empty() {
        return Err(invalid(errs.join("\n")));
    }
    let label = label.unwrap();

    // Preset, then explicit overrides on top.
    let mut spec = regime_preset(label)?;
    spec.cycle.t_pulse = cfg.t_pulse_us * 1e-6;
    spec.cycle.t_delay = cfg.t_delay_us * 1e-6;
    spec.cycle.phase = cfg.phase_deg.to_radians();
    if let Some(hz) = cfg.detuning_hz {
        spec.cycle.detuning = 2.0 * std::f64::consts::PI * hz;
    }
    if let Some(deg) = cfg.flip_deg {
        spec.cycle.flip = deg.to_radians();
    }
    if let Some(eta) = cfg.eta {
        spec.eta = eta;
    }

    let geometry = BoxGeometry::new(cfg.box_cells, LATTICE_CONSTANT)?;
    let conc = Concentrations { c_nuc: cfg.c_nuc, c_el: cfg.c_el_ppm * 1e-6 };
    conc.validate()?;
    let tau_c = cfg.tau_c_s.unwrap_or_else(|| map.tau_c_at(cfg.laser_power_w));
    let bath = LorentzianBath::new(tau_c)?;
    let t2 = cfg.t2_s.unwrap_or_else(|| map.t2_at(cfg.laser_power_w));
    let core_radius = cell_core_radius(conc.c_nuc, conc.c_el, &geometry);
    if core_radius >= geometry.side / 2.0 {
        return Err(invalid(format!(
            "frozen-core radius {core_radius:.2} A does not fit the {:.2} A box",
            geometry.side
        )));
    }

    let mut warnings = Vec::new();
    let expected_el = conc.c_el * geometry.n_sites() as f64;
    if conc.c_el > 0.0 && expected_el < 1.0 {
        warnings.push(format!(
            "expected electrons per realization is {expected_el:.3}; most boxes will \
             hold none and decay curves will sit near 1"
        ));
    }
    // The electron Wigner-Seitz trim routinely shaves a percent or two off
    // the core; only a cap that meaningfully truncates it deserves noise.
    let raw_core = frozen_core_radius_for(conc.c_nuc);
    if raw_core > 1.05 * core_radius {
        warnings.push(format!(
            "frozen-core radius capped from {raw_core:.2} to {core_radius:.2} A by the \
             box/electron spacing"
        ));
    }

    let times = log_time_grid(cfg.time_start_s, cfg.time_end_s, cfg.time_points);
    let workers = cfg.workers;
    Ok(Resolved {
        raw: cfg,
        label,
        spec,
        geometry,
        conc,
        core_radius,
        bath,
        t2,
        laser_map: map,
        times,
        workers,
        warnings,
    })
}
