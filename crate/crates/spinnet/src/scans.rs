//! Composite sweeps built on the decay engine: drive-regime presets, laser
//! power scans, the two-concentration relaxation landscape and its
//! fixed-electron slice, ordered-vs-random electron placement, and the
//! extended optical-decoupling sweep.
//!
//! Every sweep reuses identical lattice draws across the variable under
//! study (powers, grid cells, arms), so trends are resolved against common
//! disorder rather than fresh noise.

use rayon::prelude::*;
use serde::Serialize;

use crate::bath::{LaserMap, LorentzianBath};
use crate::dipolar::CouplingTable;
use crate::engine::{assemble, build_r, build_w, ensemble_decay, DecayCurve, EnsembleParams, ModeBasis};
use crate::fitkit::{FitBoundary, FitChannels, FitResult};
use crate::floquet::{find_kappa_zero, FloquetAnalysis, PulseCycle};
use crate::lattice::{
    apply_frozen_core, build_diamond_sites, effective_core_radius, frozen_core_radius, populate,
    BoxGeometry, Concentrations, RealizationSeed, SpinRealization, LATTICE_CONSTANT,
};
use crate::linalg::mean_stderr_columns;
use crate::spectral::fit_curve;
use crate::{invalid, Error, Result};

/// Natural-abundance nuclear fraction and the matching mean
/// nearest-neighbor spacing (angstrom); spacing rescales as c^(-1/3).
pub const NATURAL_ABUNDANCE: f64 = 0.011;
pub const NN_SPACING_NATURAL: f64 = 4.5;

/// Field and temperature entering the frozen-core radius.
pub const FIELD_TESLA: f64 = 9.4;
pub const TEMP_KELVIN: f64 = 100.0;

/// Harmonic truncation for drive analyses throughout the sweeps.
pub const K_MAX: i32 = 50;

/// Shared pulse-train timing: pulse duration and interpulse delay (s).
pub const T_PULSE: f64 = 38e-6;
pub const T_DELAY: f64 = 40e-6;

/// Mean nearest-neighbor spacing at a given nuclear concentration.
pub fn mean_nn_spacing(c_nuc: f64) -> f64 {
    NN_SPACING_NATURAL * (NATURAL_ABUNDANCE / c_nuc).cbrt()
}

/// Uncapped frozen-core radius at the standard field and temperature.
pub fn frozen_core_radius_for(c_nuc: f64) -> f64 {
    frozen_core_radius(mean_nn_spacing(c_nuc), FIELD_TESLA, TEMP_KELVIN)
}

/// Frozen-core radius for a concentration cell, capped to the box.
pub fn cell_core_radius(c_nuc: f64, c_el: f64, geometry: &BoxGeometry) -> f64 {
    effective_core_radius(frozen_core_radius_for(c_nuc), c_el, geometry)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RegimeLabel {
    I,
    II,
    III,
}

impl std::fmt::Display for RegimeLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            RegimeLabel::I => write!(f, "I"),
            RegimeLabel::II => write!(f, "II"),
            RegimeLabel::III => write!(f, "III"),
        }
    }
}

impl std::str::FromStr for RegimeLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_uppercase().as_str() {
            "I" | "1" => Ok(RegimeLabel::I),
            "II" | "2" => Ok(RegimeLabel::II),
            "III" | "3" => Ok(RegimeLabel::III),
            other => Err(invalid(format!(
                "unknown regime {other:?}; expected I, II or III"
            ))),
        }
    }
}

/// One drive regime: the pulse cycle, the relaxation-strength prefactor
/// used with it, and how decay curves are fit under it (regime II freezes
/// the hopping channel so only the stretched rate is free; regime III
/// starves the relaxation channel so only the mono rate is free).
#[derive(Clone, Copy, Debug)]
pub struct RegimeSpec {
    pub label: RegimeLabel,
    pub cycle: PulseCycle,
    pub eta: f64,
    pub channels: FitChannels,
}

impl RegimeSpec {
    pub fn analysis(&self) -> Result<FloquetAnalysis> {
        self.cycle.analyze(K_MAX)
    }
}

/// The three drive presets. The flip-flop-freeze preset (II) pins its
/// detuning at the computed zero crossing of the coupling scale factor for
/// the 90-degree train — a few percent off the nominal dial setting —
/// so the hopping channel actually vanishes instead of merely shrinking.
pub fn regime_preset(label: RegimeLabel) -> Result<RegimeSpec> {
    let base = PulseCycle {
        t_pulse: T_PULSE,
        t_delay: T_DELAY,
        flip: std::f64::consts::FRAC_PI_2,
        phase: 0.0,
        detuning: 0.0,
    };
    match label {
        RegimeLabel::I => Ok(RegimeSpec {
            label,
            cycle: base,
            eta: 1.5e-3,
            channels: FitChannels::Both,
        }),
        RegimeLabel::II => {
            let two_pi = 2.0 * std::f64::consts::PI;
            let det = find_kappa_zero(base, two_pi * 1500.0, two_pi * 3500.0, 1e-6)?;
            Ok(RegimeSpec {
                label,
                cycle: PulseCycle { detuning: det, ..base },
                eta: 2.0e-3,
                channels: FitChannels::StretchedOnly,
            })
        }
        RegimeLabel::III => Ok(RegimeSpec {
            label,
            cycle: PulseCycle {
                flip: 5f64.to_radians(),
                detuning: 2.0 * std::f64::consts::PI * 5000.0,
                ..base
            },
            eta: 3.4e-5,
            channels: FitChannels::MonoOnly,
        }),
    }
}

/// Ensemble defaults for a regime: natural abundance, 30 ppm electrons,
/// dark-bath correlation time and dephasing, core radius capped to the box.
pub fn standard_ensemble(
    spec: &RegimeSpec,
    cells: usize,
    n_configs: usize,
    master_seed: u64,
) -> Result<EnsembleParams> {
    let geometry = BoxGeometry::new(cells, LATTICE_CONSTANT)?;
    let conc = Concentrations { c_nuc: NATURAL_ABUNDANCE, c_el: 30e-6 };
    let map = LaserMap::calibrated_default();
    Ok(EnsembleParams {
        geometry,
        conc,
        core_radius: cell_core_radius(conc.c_nuc, conc.c_el, &geometry),
        eta: spec.eta,
        bath: LorentzianBath::new(map.tau_c_at(0.0))?,
        t2: map.t2_at(0.0),
        n_configs,
        master_seed,
        label: format!("regime {} defaults", spec.label),
    })
}

/// First time the curve falls below `level`, log-linearly interpolated
/// between samples; `Some(times[0])` if already below at the first sample,
/// `None` if it never crosses within the window.
pub fn crossing_time(times: &[f64], values: &[f64], level: f64) -> Option<f64> {
    if values.is_empty() || level <= 0.0 {
        return None;
    }
    if values[0] < level {
        return Some(times[0]);
    }
    for i in 1..values.len() {
        if values[i] < level && values[i - 1] >= level {
            let (v0, v1) = (values[i - 1].max(f64::MIN_POSITIVE), values[i].max(f64::MIN_POSITIVE));
            let f = (level.ln() - v0.ln()) / (v1.ln() - v0.ln());
            return Some(times[i - 1] + f * (times[i] - times[i - 1]));
        }
    }
    None
}

/// One sampled laser power: the bath parameters it maps to and the fitted
/// rates, batch mean +- stderr.
#[derive(Clone, Debug, Serialize)]
pub struct LaserPoint {
    pub power: f64,
    pub tau_c: f64,
    pub t2: f64,
    #[serde(rename = "R_p")]
    pub r_p: f64,
    #[serde(rename = "R_p_err")]
    pub r_p_err: f64,
    #[serde(rename = "R_d")]
    pub r_d: f64,
    #[serde(rename = "R_d_err")]
    pub r_d_err: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct LaserScan {
    pub regime: RegimeLabel,
    pub points: Vec<LaserPoint>,
}

/// Decay-and-fit at each laser power. The power maps to a correlation
/// time and dephasing time; geometry draws are identical across powers and
/// batches differ only in master seed, so rate uncertainties come from
/// batch-to-batch scatter of the fits.
pub fn laser_scan(
    spec: &RegimeSpec,
    map: &LaserMap,
    powers: &[f64],
    base: &EnsembleParams,
    times: &[f64],
    n_batches: usize,
) -> Result<LaserScan> {
    if powers.is_empty() || powers.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("laser powers must be ascending and non-empty"));
    }
    if n_batches == 0 {
        return Err(invalid("need at least one batch"));
    }
    map.validate()?;
    let drive = spec.analysis()?;
    let mut points = Vec::with_capacity(powers.len());
    for &power in powers {
        let tau_c = map.tau_c_at(power);
        let t2 = map.t2_at(power);
        let mut rp = Vec::with_capacity(n_batches);
        let mut rd = Vec::with_capacity(n_batches);
        for batch in 0..n_batches as u64 {
            let mut params = base.clone();
            params.eta = spec.eta;
            params.bath = LorentzianBath::new(tau_c)?;
            params.t2 = t2;
            params.master_seed = base.master_seed.wrapping_add(batch.wrapping_mul(0x9E37_79B9));
            params.label = format!("regime {} P = {power} W batch {batch}", spec.label);
            let curve = ensemble_decay(&params, &drive, times)?;
            let fit = fit_curve(&curve, spec.channels)?;
            rp.push(fit.r_p);
            rd.push(fit.r_d);
        }
        let (rp_mean, rp_err) = scalar_mean_stderr(&rp);
        let (rd_mean, rd_err) = scalar_mean_stderr(&rd);
        points.push(LaserPoint {
            power,
            tau_c,
            t2,
            r_p: rp_mean,
            r_p_err: rp_err,
            r_d: rd_mean,
            r_d_err: rd_err,
        });
    }
    Ok(LaserScan { regime: spec.label, points })
}

fn scalar_mean_stderr(x: &[f64]) -> (f64, f64) {
    let rows: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
    let refs: Vec<&Vec<f64>> = rows.iter().collect();
    let (m, s) = mean_stderr_columns(&refs);
    (m[0], s[0])
}

/// How a concentration cell's fit landed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum CellTag {
    /// Both rates resolved; the log ratio is meaningful.
    Intermediate,
    /// Hopping channel pinned at zero: survival is set by the on-site
    /// (stretched) channel alone.
    DiffusionLimited,
    /// On-site channel pinned at zero: survival is set by diffusion to
    /// sinks (mono channel) alone.
    DiffusionDominated,
    /// No decay resolved in the window (both rates at zero).
    Flat,
    /// No realization kept any nuclei.
    Invalid,
}

impl std::fmt::Display for CellTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct LandscapeCell {
    pub c_nuc: f64,
    pub c_el_ppm: f64,
    #[serde(rename = "R_p")]
    pub r_p: f64,
    #[serde(rename = "R_d")]
    pub r_d: f64,
    /// log10(R_p / R_d), present only when both rates are positive.
    pub ratio_log10: Option<f64>,
    pub tag: CellTag,
    pub n_configs: usize,
    pub n_skipped: usize,
}

/// Allowed concentration ranges for landscape cells.
pub const C_NUC_RANGE: (f64, f64) = (0.002, 0.2);
pub const C_EL_PPM_RANGE: (f64, f64) = (2.0, 3000.0);

fn check_cell_ranges(c_nuc: f64, c_el_ppm: f64) -> Result<()> {
    let mut errs = Vec::new();
    if !(C_NUC_RANGE.0..=C_NUC_RANGE.1).contains(&c_nuc) {
        errs.push(format!(
            "c_nuc = {c_nuc} outside [{}, {}]",
            C_NUC_RANGE.0, C_NUC_RANGE.1
        ));
    }
    if !(C_EL_PPM_RANGE.0..=C_EL_PPM_RANGE.1).contains(&c_el_ppm) {
        errs.push(format!(
            "c_el = {c_el_ppm} ppm outside [{}, {}] ppm",
            C_EL_PPM_RANGE.0, C_EL_PPM_RANGE.1
        ));
    }
    if errs.is_empty() { Ok(()) } else { Err(invalid(errs.join("\n"))) }
}

/// Decay-and-fit for one concentration cell; box, bath and drive come from
/// the base parameters and regime. Returns the tagged cell, the ensemble
/// curve, and the two-channel fit (or None for invalid cells).
///
/// All cells share the base master seed: the site populator consumes one
/// uniform pair per site regardless of outcome, so cells at the same
/// electron concentration see identical electron draws and nucleus sets
/// nest along the nuclear axis (common random numbers across the grid).
pub fn landscape_cell(
    spec: &RegimeSpec,
    c_nuc: f64,
    c_el_ppm: f64,
    base: &EnsembleParams,
    times: &[f64],
) -> Result<(LandscapeCell, Option<(DecayCurve, FitResult)>)> {
    check_cell_ranges(c_nuc, c_el_ppm)?;
    let drive = spec.analysis()?;
    let conc = Concentrations { c_nuc, c_el: c_el_ppm * 1e-6 };
    let mut params = base.clone();
    params.conc = conc;
    params.core_radius = cell_core_radius(c_nuc, conc.c_el, &base.geometry);
    params.eta = spec.eta;
    params.label = format!("c_nuc = {c_nuc}, c_el = {c_el_ppm} ppm");
    let curve = match ensemble_decay(&params, &drive, times) {
        Ok(c) => c,
        Err(Error::InsufficientData(_)) => {
            return Ok((
                LandscapeCell {
                    c_nuc,
                    c_el_ppm,
                    r_p: 0.0,
                    r_d: 0.0,
                    ratio_log10: None,
                    tag: CellTag::Invalid,
                    n_configs: 0,
                    n_skipped: params.n_configs,
                },
                None,
            ));
        }
        Err(e) => return Err(e),
    };
    let fit = fit_curve(&curve, FitChannels::Both)?;
    let tag = match fit.boundary {
        FitBoundary::Interior => CellTag::Intermediate,
        FitBoundary::PureStretched => CellTag::DiffusionLimited,
        FitBoundary::PureMono => CellTag::DiffusionDominated,
        FitBoundary::Flat => CellTag::Flat,
    };
    let ratio_log10 = (fit.r_p > 0.0 && fit.r_d > 0.0).then(|| (fit.r_p / fit.r_d).log10());
    let cell = LandscapeCell {
        c_nuc,
        c_el_ppm,
        r_p: fit.r_p,
        r_d: fit.r_d,
        ratio_log10,
        tag,
        n_configs: curve.n_configs,
        n_skipped: curve.n_skipped,
    };
    Ok((cell, Some((curve, fit))))
}

/// Full concentration grid, row-major over (c_nuc, c_el). Cells are
/// independent; each derives its seed from its concentrations.
pub fn landscape(
    spec: &RegimeSpec,
    c_nuc_grid: &[f64],
    c_el_ppm_grid: &[f64],
    base: &EnsembleParams,
    times: &[f64],
) -> Result<Vec<LandscapeCell>> {
    if c_nuc_grid.is_empty() || c_el_ppm_grid.is_empty() {
        return Err(invalid("landscape grids must be non-empty"));
    }
    let mut cells = Vec::with_capacity(c_nuc_grid.len() * c_el_ppm_grid.len());
    for &c_nuc in c_nuc_grid {
        for &ppm in c_el_ppm_grid {
            let (cell, _) = landscape_cell(spec, c_nuc, ppm, base, times)?;
            cells.push(cell);
        }
    }
    Ok(cells)
}

/// One nuclear concentration on the fixed-electron slice.
#[derive(Clone, Debug, Serialize)]
pub struct SlicePoint {
    pub c_nuc: f64,
    #[serde(rename = "R_p")]
    pub r_p: f64,
    #[serde(rename = "R_d")]
    pub r_d: f64,
    pub boundary: FitBoundary,
    /// Absolute 1/e survival time (raw mean, referenced to full
    /// polarization at t = 0), if crossed within the window.
    pub t_1e: Option<f64>,
    pub n_configs: usize,
}

/// Landscape slice at fixed electron concentration (default 30 ppm),
/// fixed box across points.
pub fn concentration_slice(
    spec: &RegimeSpec,
    c_nuc_list: &[f64],
    c_el_ppm: f64,
    base: &EnsembleParams,
    times: &[f64],
) -> Result<Vec<SlicePoint>> {
    if c_nuc_list.is_empty() {
        return Err(invalid("slice needs at least one concentration"));
    }
    c_nuc_list
        .iter()
        .map(|&c_nuc| {
            let (cell, detail) = landscape_cell(spec, c_nuc, c_el_ppm, base, times)?;
            let (t_1e, boundary) = match &detail {
                Some((curve, fit)) => {
                    let raw: Vec<f64> =
                        curve.values.iter().map(|v| v * curve.initial_mean).collect();
                    (crossing_time(&curve.times, &raw, (-1.0f64).exp()), fit.boundary)
                }
                None => (None, FitBoundary::Flat),
            };
            Ok(SlicePoint {
                c_nuc,
                r_p: cell.r_p,
                r_d: cell.r_d,
                boundary,
                t_1e,
                n_configs: cell.n_configs,
            })
        })
        .collect()
}

/// Inputs for the ordered-vs-random electron comparison.
#[derive(Clone, Debug)]
pub struct OrderedParams {
    /// Box size; 32 cells puts eight electrons at 30 ppm.
    pub cells: usize,
    pub c_nuc: f64,
    /// Electrons per arm: 8 (octant centers) or 0 (control).
    pub n_electrons: usize,
    pub n_pairs: usize,
    pub master_seed: u64,
    pub eta: f64,
    pub bath: LorentzianBath,
    pub t2: f64,
    /// Extra salt for the random arm's electron draws; lets robustness
    /// checks re-deal electron positions while keeping nuclei fixed.
    pub arm_salt: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OrderedTrial {
    pub index: u64,
    pub random_t1e: Option<f64>,
    pub ordered_t1e: Option<f64>,
    /// True when the random arm survives strictly longer.
    pub random_slower: bool,
}

#[derive(Clone, Debug)]
pub struct OrderedComparison {
    pub times: Vec<f64>,
    pub random_mean: Vec<f64>,
    pub random_stderr: Vec<f64>,
    pub ordered_mean: Vec<f64>,
    pub ordered_stderr: Vec<f64>,
    pub trials: Vec<OrderedTrial>,
    pub n_random_slower: usize,
}

/// Paired comparison of electron placements: each trial draws one set of
/// nuclei, then relaxes it against (a) electrons at the eight octant
/// centers and (b) the same number of electrons on random sites. Identical
/// nucleus seeds across arms; only the placement differs.
pub fn ordered_vs_random(
    params: &OrderedParams,
    drive: &FloquetAnalysis,
    times: &[f64],
) -> Result<OrderedComparison> {
    if params.n_pairs == 0 {
        return Err(invalid("need at least one trial pair"));
    }
    if params.n_electrons != 0 && params.n_electrons != 8 {
        return Err(invalid(format!(
            "the ordered arm places 0 or 8 electrons, got {}",
            params.n_electrons
        )));
    }
    let geometry = BoxGeometry::new(params.cells, LATTICE_CONSTANT)?;
    let sites = build_diamond_sites(&geometry);
    let c_el_equiv = params.n_electrons as f64 / sites.len() as f64;
    let r_core = cell_core_radius(params.c_nuc, c_el_equiv, &geometry);
    let side = geometry.side;
    let octants: Vec<[f64; 3]> = (0..8)
        .map(|k| {
            let f = |bit: usize| if k >> bit & 1 == 1 { 0.75 } else { 0.25 };
            [f(0) * side, f(1) * side, f(2) * side]
        })
        .take(params.n_electrons)
        .collect();

    let pairs: Vec<(Vec<f64>, Vec<f64>)> = (0..params.n_pairs as u64)
        .into_par_iter()
        .map(|index| -> Result<(Vec<f64>, Vec<f64>)> {
            let seed = RealizationSeed { master: params.master_seed, index };
            let nuclei_only = populate(
                &sites,
                geometry,
                Concentrations { c_nuc: params.c_nuc, c_el: 0.0 },
                seed,
            )?;
            // Random arm: same nuclei, electrons dealt from a separate
            // stream so arm and salt never perturb the lattice draw.
            let mut rng = RealizationSeed {
                master: params.master_seed ^ 0xE1EC_0DD5 ^ params.arm_salt,
                index,
            }
            .rng();
            let random_electrons: Vec<[f64; 3]> =
                rand::seq::index::sample(&mut rng, sites.len(), params.n_electrons)
                    .iter()
                    .map(|i| sites[i])
                    .collect();
            let random_curve =
                arm_curve(&nuclei_only, random_electrons, r_core, params, drive, times)?;
            let ordered_curve =
                arm_curve(&nuclei_only, octants.clone(), r_core, params, drive, times)?;
            Ok((random_curve, ordered_curve))
        })
        .collect::<Result<_>>()?;

    let e_inv = (-1.0f64).exp();
    let mut trials = Vec::with_capacity(pairs.len());
    for (i, (rand_c, ord_c)) in pairs.iter().enumerate() {
        let random_t1e = crossing_time(times, rand_c, e_inv);
        let ordered_t1e = crossing_time(times, ord_c, e_inv);
        let random_slower = match (random_t1e, ordered_t1e) {
            (Some(r), Some(o)) => r > o,
            (None, Some(_)) => true,
            _ => false,
        };
        trials.push(OrderedTrial { index: i as u64, random_t1e, ordered_t1e, random_slower });
    }
    let n_random_slower = trials.iter().filter(|t| t.random_slower).count();
    let rand_rows: Vec<&Vec<f64>> = pairs.iter().map(|p| &p.0).collect();
    let ord_rows: Vec<&Vec<f64>> = pairs.iter().map(|p| &p.1).collect();
    let (random_mean, random_stderr) = mean_stderr_columns(&rand_rows);
    let (ordered_mean, ordered_stderr) = mean_stderr_columns(&ord_rows);
    Ok(OrderedComparison {
        times: times.to_vec(),
        random_mean,
        random_stderr,
        ordered_mean,
        ordered_stderr,
        trials,
        n_random_slower,
    })
}

fn arm_curve(
    nuclei_only: &SpinRealization,
    electrons: Vec<[f64; 3]>,
    r_core: f64,
    params: &OrderedParams,
    drive: &FloquetAnalysis,
    times: &[f64],
) -> Result<Vec<f64>> {
    let mut real = nuclei_only.clone();
    real.electrons = electrons;
    if r_core > 0.0 && !real.electrons.is_empty() {
        apply_frozen_core(&mut real, r_core)?;
    }
    if real.nuclei.is_empty() {
        return Err(Error::InsufficientData(
            "frozen cores removed every nucleus in one arm".into(),
        ));
    }
    let table = CouplingTable::build(&real);
    let w = build_w(&table, drive.kappa, params.t2);
    let r = build_r(&table, drive, &params.bath, params.eta);
    let modes = ModeBasis::new(assemble(w, &r))?;
    let p0 = vec![1.0 / real.nuclei.len() as f64; real.nuclei.len()];
    Ok(modes.total_curve(&p0, times))
}

/// Upper end of the calibrated inverse correlation times (1/s): the
/// default laser map at full power.
pub const INV_TAU_C_CALIBRATED_MAX: f64 = 1000.0;

#[derive(Clone, Debug, Serialize)]
pub struct DecouplingPoint {
    pub inv_tau_c: f64,
    #[serde(rename = "R_p")]
    pub r_p: f64,
    #[serde(rename = "R_d")]
    pub r_d: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct DecouplingScan {
    pub points: Vec<DecouplingPoint>,
    pub peak_index: usize,
    /// Peak is interior and the rate rises strictly up to it.
    pub single_interior_peak: bool,
    /// Rate falls strictly after the peak.
    pub decreasing_after_peak: bool,
}

/// Stretched-channel rate across an extended inverse-correlation-time
/// grid, far past the calibrated range: the rate should rise while the
/// bath spectrum narrows onto the filter, then fall once the spectrum is
/// so broad its weight near the filter drains away.
pub fn optical_decoupling_extrapolation(
    spec: &RegimeSpec,
    inv_tau_c: &[f64],
    base: &EnsembleParams,
    times: &[f64],
) -> Result<DecouplingScan> {
    if inv_tau_c.len() < 3 || inv_tau_c.windows(2).any(|w| w[1] <= w[0]) {
        return Err(invalid("need an ascending grid of at least 3 inverse correlation times"));
    }
    if inv_tau_c[inv_tau_c.len() - 1] < 10.0 * INV_TAU_C_CALIBRATED_MAX {
        return Err(invalid(format!(
            "grid must extend at least 10x past the calibrated range ({} 1/s)",
            INV_TAU_C_CALIBRATED_MAX
        )));
    }
    let drive = spec.analysis()?;
    let points = inv_tau_c
        .iter()
        .map(|&x| -> Result<DecouplingPoint> {
            let mut params = base.clone();
            params.eta = spec.eta;
            params.bath = LorentzianBath::new(1.0 / x)?;
            params.label = format!("1/tau_c = {x:.3e}");
            let curve = ensemble_decay(&params, &drive, times)?;
            let fit = fit_curve(&curve, spec.channels)?;
            Ok(DecouplingPoint { inv_tau_c: x, r_p: fit.r_p, r_d: fit.r_d })
        })
        .collect::<Result<Vec<_>>>()?;
    let peak_index = points
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.r_p.total_cmp(&b.1.r_p))
        .map(|(i, _)| i)
        .unwrap();
    let rising = (1..=peak_index).all(|i| points[i].r_p > points[i - 1].r_p);
    let falling = (peak_index + 1..points.len()).all(|i| points[i].r_p < points[i - 1].r_p);
    Ok(DecouplingScan {
        points,
        peak_index,
        single_interior_peak: peak_index > 0 && peak_index + 1 < inv_tau_c.len() && rising,
        decreasing_after_peak: falling,
    })
}

/// Log-spaced inverse-correlation-time grid reaching 1000x past the
/// calibrated range.
pub fn default_inv_tau_c_grid() -> Vec<f64> {
    let lo: f64 = 500.0;
    let hi: f64 = 1e6;
    let n = 13;
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}

/// Evenly spaced powers over the calibrated laser range.
pub fn default_power_grid() -> Vec<f64> {
    (0..6).map(|i| i as f64 * 1.5).collect()
}
