//! Assembly and propagation of the polarization master equation
//! `dp/dt = (W + R) p` on single disorder realizations, and ensemble
//! averaging into decay curves.
//!
//! `W` holds symmetric flip-flop hopping rates `W_ij = kappa^2 d_ij^2 T2`
//! with a conservation diagonal (zero row sums); `R` is the non-positive
//! relaxation diagonal `R_ii = -eta J_env^i`. The combined generator is
//! symmetric, so propagation uses one dense eigendecomposition per
//! realization and analytic exponentials in time.

use rayon::prelude::*;

use crate::bath::{filter_sum, j_env, LorentzianBath};
use crate::dipolar::CouplingTable;
use crate::floquet::FloquetAnalysis;
use crate::lattice::{
    apply_frozen_core, build_diamond_sites, populate, BoxGeometry, Concentrations,
    RealizationSeed, SpinRealization,
};
use crate::linalg::{dot, eigh, pairwise_sum, SymEig, SymMatrix};
use crate::{invalid, Error, Result};

/// Hopping matrix `W_ij = kappa^2 d_ij^2 T2` (1/s) with diagonal set to
/// minus the row sum, so pure hopping conserves total polarization.
pub fn build_w(table: &CouplingTable, kappa: f64, t2: f64) -> SymMatrix {
    let n = table.n;
    let k2t = kappa * kappa * t2;
    let mut w = SymMatrix::zeros(n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d = table.nn[i * n + j];
            w.set_sym(i, j, k2t * d * d);
        }
    }
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            if j != i {
                row += w.get(i, j);
            }
        }
        w.add_diag(i, -row);
    }
    w
}

/// Relaxation diagonal `R_ii = -eta (sum_mu h_imu^2) sum_k |c_k|^2
/// J_e(omega_eff + k omega_d)`; entries are non-positive.
pub fn build_r(
    table: &CouplingTable,
    drive: &FloquetAnalysis,
    bath: &LorentzianBath,
    eta: f64,
) -> Vec<f64> {
    let comb = filter_sum(drive, bath);
    table.ne_sq.iter().map(|&h2| -eta * j_env(h2, comb)).collect()
}

/// `M = W + diag(R)`, consuming the hopping matrix.
pub fn assemble(mut w: SymMatrix, r_diag: &[f64]) -> SymMatrix {
    for (i, &r) in r_diag.iter().enumerate() {
        w.add_diag(i, r);
    }
    w
}

/// Eigenmode basis of one realization's generator.
pub struct ModeBasis {
    pub eig: SymEig,
}

impl ModeBasis {
    pub fn new(m: SymMatrix) -> Result<ModeBasis> {
        Ok(ModeBasis { eig: eigh(m)? })
    }

    pub fn n(&self) -> usize {
        self.eig.n
    }

    /// Time trace of a linear observable: `obs . exp(M t) p0` for each
    /// requested time, via mode projections.
    pub fn observable_curve(&self, p0: &[f64], obs: &[f64], times: &[f64]) -> Vec<f64> {
        let n = self.n();
        let coeffs: Vec<f64> = (0..n)
            .map(|j| {
                let v = self.eig.vector(j);
                dot(v, obs) * dot(v, p0)
            })
            .collect();
        times
            .iter()
            .map(|&t| {
                (0..n).map(|j| coeffs[j] * (self.eig.values[j] * t).exp()).sum()
            })
            .collect()
    }

    /// Total surviving polarization `1 . exp(M t) p0`.
    pub fn total_curve(&self, p0: &[f64], times: &[f64]) -> Vec<f64> {
        let ones = vec![1.0; self.n()];
        self.observable_curve(p0, &ones, times)
    }

    /// Full per-site polarization profile at one time.
    pub fn profile(&self, p0: &[f64], t: f64) -> Vec<f64> {
        let n = self.n();
        let mut out = vec![0.0; n];
        for j in 0..n {
            let v = self.eig.vector(j);
            let amp = dot(v, p0) * (self.eig.values[j] * t).exp();
            for (o, &vj) in out.iter_mut().zip(v) {
                *o += amp * vj;
            }
        }
        out
    }
}

/// Logarithmic time grid, inclusive of both endpoints.
pub fn log_time_grid(t_lo: f64, t_hi: f64, n: usize) -> Vec<f64> {
    assert!(t_lo > 0.0 && t_hi > t_lo && n >= 2);
    let (l0, l1) = (t_lo.ln(), t_hi.ln());
    (0..n).map(|j| (l0 + (l1 - l0) * j as f64 / (n - 1) as f64).exp()).collect()
}

/// Default observation window: 400 log-spaced points over 10 ms .. 600 s.
pub fn default_time_grid() -> Vec<f64> {
    log_time_grid(1e-2, 600.0, 400)
}

/// Everything needed to average decay curves over disorder realizations.
#[derive(Clone)]
pub struct EnsembleParams {
    pub geometry: BoxGeometry,
    pub conc: Concentrations,
    /// Effective frozen-core radius in angstrom (0 disables the cut).
    pub core_radius: f64,
    pub eta: f64,
    pub bath: LorentzianBath,
    /// Intrinsic nuclear dephasing time entering the hopping rates, seconds.
    pub t2: f64,
    pub n_configs: usize,
    pub master_seed: u64,
    pub label: String,
}

/// Ensemble-averaged survival curve.
#[derive(Clone, Debug)]
pub struct DecayCurve {
    pub times: Vec<f64>,
    /// Mean total polarization, normalized to 1 at `times[0]`.
    pub values: Vec<f64>,
    /// Standard error of the mean, same normalization.
    pub stderr: Vec<f64>,
    /// Mean total polarization at `times[0]` before normalization, i.e.
    /// the fraction surviving the pre-sample window. Multiply `values`
    /// by this to recover raw means.
    pub initial_mean: f64,
    /// Realizations that contributed.
    pub n_configs: usize,
    /// Realizations skipped because no nucleus survived.
    pub n_skipped: usize,
    pub label: String,
}

/// Raw (unnormalized) survival curves per realization; `None` marks a
/// skipped empty realization.
fn realization_curves(
    params: &EnsembleParams,
    drive: &FloquetAnalysis,
    times: &[f64],
) -> Result<Vec<Option<Vec<f64>>>> {
    params.conc.validate()?;
    if params.n_configs == 0 {
        return Err(invalid("n_configs must be at least 1"));
    }
    if !(params.t2 > 0.0) {
        return Err(invalid(format!("T2 must be positive, got {}", params.t2)));
    }
    if !(params.eta >= 0.0) {
        return Err(invalid(format!("eta must be non-negative, got {}", params.eta)));
    }
    let sites = build_diamond_sites(&params.geometry);
    (0..params.n_configs as u64)
        .into_par_iter()
        .map(|index| -> Result<Option<Vec<f64>>> {
            let seed = RealizationSeed { master: params.master_seed, index };
            let mut real = populate(&sites, params.geometry, params.conc, seed)?;
            if params.core_radius > 0.0 {
                apply_frozen_core(&mut real, params.core_radius)?;
            }
            if real.nuclei.is_empty() {
                return Ok(None);
            }
            let table = CouplingTable::build(&real);
            let w = build_w(&table, drive.kappa, params.t2);
            let r = build_r(&table, drive, &params.bath, params.eta);
            let modes = ModeBasis::new(assemble(w, &r))?;
            let p0 = vec![1.0 / real.nuclei.len() as f64; real.nuclei.len()];
            Ok(Some(modes.total_curve(&p0, times)))
        })
        .collect()
}

/// Populate, prune, assemble and propagate `n_configs` realizations, then
/// average. Deterministic for a fixed master seed regardless of worker
/// count: per-realization seeds are indexed ChaCha streams, the parallel
/// collect preserves order, and the averages use pairwise summation.
pub fn ensemble_decay(
    params: &EnsembleParams,
    drive: &FloquetAnalysis,
    times: &[f64],
) -> Result<DecayCurve> {
    let curves = realization_curves(params, drive, times)?;
    let kept: Vec<&Vec<f64>> = curves.iter().flatten().collect();
    let n_skipped = curves.len() - kept.len();
    if kept.is_empty() {
        return Err(Error::InsufficientData(format!(
            "all {} realizations were empty (no surviving nuclei)",
            curves.len()
        )));
    }
    let n = kept.len() as f64;
    let mut values = Vec::with_capacity(times.len());
    let mut stderr = Vec::with_capacity(times.len());
    let mut column = vec![0.0; kept.len()];
    for ti in 0..times.len() {
        for (c, curve) in column.iter_mut().zip(&kept) {
            *c = curve[ti];
        }
        let mean = pairwise_sum(&column) / n;
        for c in &mut column {
            *c = (*c - mean) * (*c - mean);
        }
        let var = if kept.len() > 1 { pairwise_sum(&column) / (n - 1.0) } else { 0.0 };
        values.push(mean);
        stderr.push((var / n).sqrt());
    }
    let norm = values[0];
    if !(norm > 0.0) {
        return Err(Error::InsufficientData(format!(
            "mean polarization at the first sample is {norm}; nothing to normalize"
        )));
    }
    for v in &mut values {
        *v /= norm;
    }
    for s in &mut stderr {
        *s /= norm;
    }
    Ok(DecayCurve {
        times: times.to_vec(),
        values,
        stderr,
        initial_mean: norm,
        n_configs: kept.len(),
        n_skipped,
        label: params.label.clone(),
    })
}

/// Build one realization's generator and mode basis (used by the spectral
/// and scan tooling, which need the eigenpairs and geometry, not just the
/// survival curve).
pub struct RealizationModes {
    pub real: SpinRealization,
    pub r_diag: Vec<f64>,
    pub modes: ModeBasis,
}

pub fn realization_modes(
    params: &EnsembleParams,
    drive: &FloquetAnalysis,
    index: u64,
) -> Result<Option<RealizationModes>> {
    let sites = build_diamond_sites(&params.geometry);
    let seed = RealizationSeed { master: params.master_seed, index };
    let mut real = populate(&sites, params.geometry, params.conc, seed)?;
    if params.core_radius > 0.0 {
        apply_frozen_core(&mut real, params.core_radius)?;
    }
    if real.nuclei.is_empty() {
        return Ok(None);
    }
    let table = CouplingTable::build(&real);
    let w = build_w(&table, drive.kappa, params.t2);
    let r_diag = build_r(&table, drive, &params.bath, params.eta);
    let modes = ModeBasis::new(assemble(w, &r_diag))?;
    Ok(Some(RealizationModes { real, r_diag, modes }))
}
