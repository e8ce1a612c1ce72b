//! Eigenmode analysis of the polarization generator: exact mode-sum
//! decompositions of the total polarization, slowest-mode statistics over
//! disorder ensembles, the asymptotic late-time form, hopping-free rate
//! comparisons, spatial mode maps, and full eigenvalue spectra.

use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{
    ensemble_decay, realization_modes, DecayCurve, EnsembleParams, ModeBasis,
};
use crate::fitkit::{fit_emergent, positive_window, FitChannels, FitOptions, FitResult};
use crate::floquet::FloquetAnalysis;
use crate::lattice::SpinRealization;
use crate::linalg::{dot, pairwise_sum, SymMatrix};
use crate::{invalid, Error, Result};

/// Decay rates and amplitudes of the total polarization:
/// `sum_i p_i(t) = sum_j a_j exp(-lambda_j t)` exactly.
#[derive(Clone, Debug)]
pub struct ModeSet {
    /// Ascending decay rates of `-M`, 1/s.
    pub lambdas: Vec<f64>,
    /// `a_j = (v_j . p0)(v_j . 1)`.
    pub amplitudes: Vec<f64>,
    /// Orthonormal mode vectors, column `j` belonging to `lambdas[j]`.
    pub vectors: Vec<f64>,
    pub n: usize,
}

/// Eigendecomposition of `-M` ordered by decay rate, plus the total-
/// polarization amplitudes for the given initial state.
pub fn decompose(m: SymMatrix, p0: &[f64]) -> Result<ModeSet> {
    let n = m.n;
    if p0.len() != n {
        return Err(invalid(format!(
            "initial state has {} entries for an {n}-site generator",
            p0.len()
        )));
    }
    let basis = ModeBasis::new(m)?;
    // eigh sorts eigenvalues of M ascending (most negative first); decay
    // rates of -M ascend in the reverse order.
    let ones = vec![1.0; n];
    let mut lambdas = Vec::with_capacity(n);
    let mut amplitudes = Vec::with_capacity(n);
    let mut vectors = vec![0.0; n * n];
    for j in 0..n {
        let src = n - 1 - j;
        let v = basis.eig.vector(src);
        lambdas.push(-basis.eig.values[src]);
        amplitudes.push(dot(v, p0) * dot(v, &ones));
        vectors[j * n..(j + 1) * n].copy_from_slice(v);
    }
    Ok(ModeSet { lambdas, amplitudes, vectors, n })
}

impl ModeSet {
    /// Mode vector `j` as a slice.
    pub fn vector(&self, j: usize) -> &[f64] {
        &self.vectors[j * self.n..(j + 1) * self.n]
    }

    /// Exact total polarization `sum_j a_j exp(-lambda_j t)`.
    pub fn total(&self, t: f64) -> f64 {
        let terms: Vec<f64> = self
            .lambdas
            .iter()
            .zip(&self.amplitudes)
            .map(|(&l, &a)| a * (-l * t).exp())
            .collect();
        pairwise_sum(&terms)
    }

    /// Slowest decay rate, optionally skipping exact conservation modes
    /// (rates below `zero_tol`); returns the rate and how many zero modes
    /// were passed over.
    pub fn slowest_rate(&self, exclude_zero: bool, zero_tol: f64) -> Option<(f64, usize)> {
        if !exclude_zero {
            return self.lambdas.first().map(|&l| (l, 0));
        }
        let skipped = self.lambdas.iter().take_while(|&&l| l.abs() <= zero_tol).count();
        self.lambdas.get(skipped).map(|&l| (l, skipped))
    }
}

/// Late-time closed form built from the slowest mode plus exponentially
/// small corrections:
/// `a0 exp(-lambda0 t) exp(a0^-1 sum_{j>=1} a_j exp(-(lambda_j-lambda0) t))`.
///
/// The returned flag is false where the expansion is outside its regime
/// (some |a_j/a0| >= 1 while (lambda_1-lambda_0) t < 1).
pub fn asymptotic_form(modes: &ModeSet, t: f64) -> Result<(f64, bool)> {
    let a0 = modes.amplitudes[0];
    if a0 == 0.0 {
        return Err(invalid("slowest mode is unpopulated (a0 = 0)"));
    }
    let l0 = modes.lambdas[0];
    let mut corr = 0.0;
    let mut max_ratio = 0.0f64;
    for j in 1..modes.n {
        let ratio = modes.amplitudes[j] / a0;
        max_ratio = max_ratio.max(ratio.abs());
        corr += ratio * (-(modes.lambdas[j] - l0) * t).exp();
    }
    let value = a0 * (-l0 * t).exp() * corr.exp();
    let valid = if modes.n > 1 {
        max_ratio < 1.0 || (modes.lambdas[1] - l0) * t >= 1.0
    } else {
        true
    };
    Ok((value, valid))
}

/// Ensemble statistics of the slowest decay rate.
#[derive(Clone, Debug, Serialize)]
pub struct SlowestModeStats {
    pub mean: f64,
    pub stderr: f64,
    /// Realizations contributing a rate.
    pub n_used: usize,
    /// Realizations skipped for holding no nuclei.
    pub n_empty: usize,
    /// Total conservation modes excluded across the ensemble.
    pub n_zero_excluded: usize,
}

/// Slowest-rate tolerance: rates below this are conservation modes.
pub const ZERO_MODE_TOL: f64 = 1e-12;

/// Mean and standard error of the slowest decay rate over a disorder
/// ensemble. Exact zero modes (pure hopping configurations) are excluded
/// and counted when `exclude_zero` is set.
pub fn slowest_mode_stats(
    params: &EnsembleParams,
    drive: &FloquetAnalysis,
    exclude_zero: bool,
) -> Result<SlowestModeStats> {
    let picks: Vec<Option<(f64, usize)>> = (0..params.n_configs as u64)
        .into_par_iter()
        .map(|index| -> Result<Option<(f64, usize)>> {
            let Some(rm) = realization_modes(params, drive, index)? else {
                return Ok(None);
            };
            // The slowest rate is minus the largest eigenvalue; zero-mode
            // skipping only needs the sorted rates.
            let rates: Vec<f64> = rm.modes.eig.values.iter().rev().map(|&l| -l).collect();
            let skipped = if exclude_zero {
                rates.iter().take_while(|&&l| l.abs() <= ZERO_MODE_TOL).count()
            } else {
                0
            };
            Ok(rates.get(skipped).map(|&l| (l, skipped)))
        })
        .collect::<Result<Vec<_>>>()?;
    let kept: Vec<(f64, usize)> = picks.iter().flatten().cloned().collect();
    let n_empty = picks.len() - kept.len();
    if kept.is_empty() {
        return Err(Error::InsufficientData("no realization produced a decay rate".into()));
    }
    let rates: Vec<f64> = kept.iter().map(|&(l, _)| l).collect();
    let n = rates.len() as f64;
    let mean = pairwise_sum(&rates) / n;
    let var = if rates.len() > 1 {
        rates.iter().map(|&l| (l - mean) * (l - mean)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    Ok(SlowestModeStats {
        mean,
        stderr: (var / n).sqrt(),
        n_used: rates.len(),
        n_empty,
        n_zero_excluded: kept.iter().map(|&(_, s)| s).sum(),
    })
}

/// Stretched rates fitted with and without hopping.
#[derive(Clone, Debug, Serialize)]
pub struct HoppingFreeComparison {
    /// Two-channel fit of the full dynamics.
    pub full: FitResult,
    /// Pure stretched fit of the hopping-free (relaxation-only) dynamics.
    pub relaxation_only: FitResult,
}

/// Compare R_p from the full model against the hopping-free limit: the
/// same ensemble propagated once with the full generator (fit with both
/// channels) and once with W = 0 (each spin relaxing independently, fit
/// with the exponential channel pinned to zero).
pub fn hopping_free_comparison(
    params: &EnsembleParams,
    drive: &FloquetAnalysis,
    times: &[f64],
) -> Result<HoppingFreeComparison> {
    let full_curve = ensemble_decay(params, drive, times)?;
    let mut frozen = drive.clone();
    // A drive with kappa = 0 leaves the comb and omega_eff untouched but
    // zeroes every hopping rate.
    frozen.kappa = 0.0;
    let frozen_curve = ensemble_decay(params, &frozen, times)?;
    let full = fit_curve(&full_curve, FitChannels::Both)?;
    let relaxation_only = fit_curve(&frozen_curve, FitChannels::StretchedOnly)?;
    Ok(HoppingFreeComparison { full, relaxation_only })
}

/// Two-channel emergent-law fit of a decay curve on its positive window.
pub fn fit_curve(curve: &DecayCurve, channels: FitChannels) -> Result<FitResult> {
    let window = positive_window(&curve.times, &curve.values);
    fit_emergent(
        &curve.times,
        &curve.values,
        &FitOptions { gamma: 0.5, window, channels },
    )
}

/// Regular 2D histogram of per-nucleus amplitudes, periodic cloud-in-cell
/// binning onto cell centers of an `n x n` grid over the box cross-section.
#[derive(Clone, Debug)]
pub struct Heatmap {
    pub n: usize,
    /// Cell-center coordinates along each axis, angstrom.
    pub coords: Vec<f64>,
    /// Row-major values, index `ix * n + iy`.
    pub values: Vec<f64>,
}

impl Heatmap {
    pub fn value(&self, ix: usize, iy: usize) -> f64 {
        self.values[ix * self.n + iy]
    }

    /// Rows of (x, y, value) in grid order.
    pub fn rows(&self) -> Vec<(f64, f64, f64)> {
        let mut out = Vec::with_capacity(self.n * self.n);
        for ix in 0..self.n {
            for iy in 0..self.n {
                out.push((self.coords[ix], self.coords[iy], self.value(ix, iy)));
            }
        }
        out
    }
}

/// Cosine similarity of two maps viewed as flat vectors.
pub fn map_cosine(a: &Heatmap, b: &Heatmap) -> Result<f64> {
    if a.values.len() != b.values.len() {
        return Err(invalid("heatmap sizes differ"));
    }
    let na = dot(&a.values, &a.values).sqrt();
    let nb = dot(&b.values, &b.values).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(invalid("cosine similarity of an all-zero map"));
    }
    Ok(dot(&a.values, &b.values) / (na * nb))
}

/// Default heatmap resolution.
pub const PROFILE_GRID: usize = 60;

/// Project per-nucleus weights onto the xy-plane with periodic bilinear
/// (cloud-in-cell) binning. `weights[i]` belongs to `real.nuclei[i]`;
/// absolute values are deposited, matching how mode amplitudes are drawn.
pub fn mode_profile_2d(real: &SpinRealization, weights: &[f64], grid: usize) -> Result<Heatmap> {
    if weights.len() != real.nuclei.len() {
        return Err(invalid(format!(
            "{} weights for {} nuclei",
            weights.len(),
            real.nuclei.len()
        )));
    }
    if grid == 0 {
        return Err(invalid("heatmap grid must have at least one cell"));
    }
    let side = real.geometry.side;
    let h = side / grid as f64;
    let mut values = vec![0.0; grid * grid];
    for (pos, &w) in real.nuclei.iter().zip(weights) {
        // Fractional index relative to cell centers at (k + 1/2) h.
        let deposit = w.abs();
        let fx = pos[0].rem_euclid(side) / h - 0.5;
        let fy = pos[1].rem_euclid(side) / h - 0.5;
        let ix = fx.floor();
        let iy = fy.floor();
        let (dx, dy) = (fx - ix, fy - iy);
        let wrap = |k: f64| (k.rem_euclid(grid as f64)) as usize;
        let (ix0, ix1) = (wrap(ix), wrap(ix + 1.0));
        let (iy0, iy1) = (wrap(iy), wrap(iy + 1.0));
        values[ix0 * grid + iy0] += deposit * (1.0 - dx) * (1.0 - dy);
        values[ix1 * grid + iy0] += deposit * dx * (1.0 - dy);
        values[ix0 * grid + iy1] += deposit * (1.0 - dx) * dy;
        values[ix1 * grid + iy1] += deposit * dx * dy;
    }
    let coords = (0..grid).map(|k| (k as f64 + 0.5) * h).collect();
    Ok(Heatmap { n: grid, coords, values })
}

/// Sorted decay-rate spectrum for one nuclear concentration.
#[derive(Clone, Debug)]
pub struct Spectrum {
    pub c_nuc: f64,
    /// Pooled ascending rates across the requested realizations, 1/s.
    pub rates: Vec<f64>,
    pub n_configs: usize,
}

/// Largest consecutive ratio between sorted positive rates; a value well
/// above 1 flags a gap between a slow cluster and a fast cluster. Rates at
/// or below `floor` are ignored.
pub fn spectral_gap_ratio(sorted_rates: &[f64], floor: f64) -> Option<f64> {
    let kept: Vec<f64> = sorted_rates.iter().cloned().filter(|&l| l > floor).collect();
    kept.windows(2).map(|w| w[1] / w[0]).fold(None, |m, r| match m {
        None => Some(r),
        Some(c) => Some(c.max(r)),
    })
}

/// Full sorted eigenvalue spectra at each nuclear concentration, pooled
/// over `n_configs` realizations with everything else held fixed.
pub fn eigenvalue_spectrum(
    base: &EnsembleParams,
    drive: &FloquetAnalysis,
    c_nuc_list: &[f64],
    n_configs: usize,
) -> Result<Vec<Spectrum>> {
    if n_configs == 0 {
        return Err(invalid("need at least one realization per concentration"));
    }
    c_nuc_list
        .iter()
        .map(|&c_nuc| {
            let mut params = base.clone();
            params.conc.c_nuc = c_nuc;
            params.n_configs = n_configs;
            let mut rates = Vec::new();
            for index in 0..n_configs as u64 {
                if let Some(rm) = realization_modes(&params, drive, index)? {
                    rates.extend(rm.modes.eig.values.iter().rev().map(|&l| -l));
                }
            }
            rates.sort_by(f64::total_cmp);
            Ok(Spectrum { c_nuc, rates, n_configs })
        })
        .collect()
}
