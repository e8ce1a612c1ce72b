//! Electron-bath noise: Lorentzian spectral density, the seven-level
//! optical-pumping population model that sets the electron correlation time,
//! and the laser-power maps used by the engine.
//!
//! The electron spin projection fluctuates with correlation function
//! `C(tau) ~ exp(-tau/tau_c)`, giving the unit-area spectral density
//! `J_e(w) = 2 tau_c / (1 + w^2 tau_c^2)`. Nuclei only sample this noise
//! through the drive's sideband comb: the filtered density at nucleus `i` is
//!
//! ```text
//! J_env^i = (sum_mu h_imu^2) * sum_k |c_k|^2 J_e(omega_eff + k omega_d)
//! ```
//!
//! Under illumination the electron bath churns faster; a seven-level
//! population model (ground/excited spin triplets + shelving singlet)
//! reproduces an approximately exponential `C(tau)` whose inverse
//! correlation time grows linearly with pump strength.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::floquet::FloquetAnalysis;
use crate::linalg::linfit;
use crate::{invalid, Error, Result};

/// Exponentially correlated (Ornstein-Uhlenbeck-like) electron noise.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LorentzianBath {
    /// Correlation time in seconds.
    pub tau_c: f64,
}

impl LorentzianBath {
    pub fn new(tau_c: f64) -> Result<Self> {
        if !(tau_c > 0.0 && tau_c.is_finite()) {
            return Err(invalid(format!("correlation time must be positive, got {tau_c}")));
        }
        Ok(LorentzianBath { tau_c })
    }

    /// Spectral density `J_e(w) = 2 tau_c / (1 + w^2 tau_c^2)`, unit area
    /// under dw/2pi. Seconds.
    #[inline]
    pub fn j(&self, omega: f64) -> f64 {
        let x = omega * self.tau_c;
        2.0 * self.tau_c / (1.0 + x * x)
    }
}

/// Sideband-comb convolution `sum_k |c^{+1}_k|^2 J_e(omega_eff + k omega_d)`
/// for a given drive analysis. Multiply by `sum_mu h_imu^2` (and the
/// regime's eta) to get a nucleus relaxation rate.
pub fn filter_sum(an: &FloquetAnalysis, bath: &LorentzianBath) -> f64 {
    (-an.k_max..=an.k_max)
        .map(|k| an.harmonic_weight(k) * bath.j(an.omega_eff + k as f64 * an.omega_drive))
        .sum()
}

/// The discrete filter comb `{(-k omega_d, |c_k|^2)}` as (frequency, weight)
/// pairs, for inspection and CSV output.
pub fn filter_function(an: &FloquetAnalysis) -> Vec<(f64, f64)> {
    (-an.k_max..=an.k_max)
        .map(|k| (-(k as f64) * an.omega_drive, an.harmonic_weight(k)))
        .collect()
}

/// Filtered noise density at one nucleus: summed squared electron couplings
/// times the comb-filtered spectral density.
#[inline]
pub fn j_env(ne_sq: f64, comb: f64) -> f64 {
    ne_sq * comb
}

/// Rates of the seven-level optical pumping model over the basis
/// `{|g,-1>, |g,0>, |g,+1>, |e,-1>, |e,0>, |e,+1>, |s>}`. All rates in 1/s;
/// `gamma_p` is the dimensionless pump strength (the optical excitation
/// rate is `gamma_p * gamma_s / 3`).
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PumpModel {
    /// Spin-conserving radiative decay |e,m> -> |g,m>.
    pub gamma_eg: f64,
    /// Spin-mixing optical decay: |e,0> -> |g,+-1> and |e,+-1> -> |g,0>.
    pub gamma_01: f64,
    /// Intersystem crossing |e,+-1> -> |s>.
    pub gamma_es: f64,
    /// Total singlet decay; branches uniformly, gamma_s/3 to each |g,m>.
    pub gamma_s: f64,
    /// Dimensionless pump strength (proportional to laser power).
    pub gamma_p: f64,
    /// Spin-lattice relaxation rate within each triplet manifold.
    pub r1: f64,
    /// Thermal argument hbar*omega_e/(kB*T) for the detailed-balance factor
    /// Theta(w) = exp(-beta w / 2).
    pub beta_omega: f64,
}

impl Default for PumpModel {
    /// NV-like rates; absolute values are configurable, downstream results
    /// depend only on the linearity of 1/tau_c in the pump strength.
    fn default() -> Self {
        PumpModel {
            gamma_eg: 65e6,
            gamma_01: 0.5e6,
            gamma_es: 50e6,
            gamma_s: 1e6,
            gamma_p: 1.0,
            r1: 10.0,
            beta_omega: beta_omega(9.4, 100.0),
        }
    }
}

/// `hbar |gamma_e| B / (kB T)`: electron Zeeman splitting over temperature.
pub fn beta_omega(b_tesla: f64, temp_kelvin: f64) -> f64 {
    use crate::dipolar::{GAMMA_E, HBAR, KB};
    HBAR * GAMMA_E * b_tesla / (KB * temp_kelvin)
}

impl PumpModel {
    pub fn validate(&self) -> Result<()> {
        let rates =
            [self.gamma_eg, self.gamma_01, self.gamma_es, self.gamma_s, self.gamma_p, self.r1];
        if rates.iter().any(|r| !(*r >= 0.0) || !r.is_finite()) {
            return Err(invalid(format!("pump-model rates must be finite and >= 0: {self:?}")));
        }
        if !self.beta_omega.is_finite() {
            return Err(invalid("beta_omega must be finite"));
        }
        Ok(())
    }

    /// Population-dynamics generator: optical dissipator plus the
    /// triplet-manifold thermal relaxation block (the shelving singlet gets
    /// no thermal relaxation, keeping columns zero-sum). Column `j` holds
    /// the outflow rates of state `j`; diagonal = minus column sum.
    pub fn generator(&self) -> Result<DMatrix<f64>> {
        self.validate()?;
        let mut g = DMatrix::<f64>::zeros(7, 7);
        let gsg = self.gamma_s / 3.0; // singlet -> each ground state
        let pump = self.gamma_p * gsg;
        let mut add = |to: usize, from: usize, rate: f64| {
            g[(to, from)] += rate;
            g[(from, from)] -= rate;
        };
        // Optical pumping |g,m> -> |e,m>.
        for m in 0..3 {
            add(3 + m, m, pump);
        }
        // Radiative decay |e,m> -> |g,m>.
        for m in 0..3 {
            add(m, 3 + m, self.gamma_eg);
        }
        // Spin-mixing decay between m = 0 and m = +-1.
        add(0, 4, self.gamma_01); // |e,0> -> |g,-1>
        add(2, 4, self.gamma_01); // |e,0> -> |g,+1>
        add(1, 3, self.gamma_01); // |e,-1> -> |g,0>
        add(1, 5, self.gamma_01); // |e,+1> -> |g,0>
        // Intersystem crossing from |e,+-1> into the singlet.
        add(6, 3, self.gamma_es);
        add(6, 5, self.gamma_es);
        // Singlet decay, uniform branching.
        for m in 0..3 {
            add(m, 6, gsg);
        }
        // Thermal relaxation within each triplet manifold, detailed-balance
        // asymmetry Theta(w) = exp(-beta w / 2): climbing in m carries
        // Theta(-w), descending carries Theta(+w).
        let up = (self.beta_omega / 2.0).exp();
        let dn = (-self.beta_omega / 2.0).exp();
        for base in [0usize, 3] {
            add(base + 1, base, self.r1 * up);
            add(base, base + 1, self.r1 * dn);
            add(base + 2, base + 1, self.r1 * up);
            add(base + 1, base + 2, self.r1 * dn);
        }
        Ok(g)
    }

    /// Stationary distribution of the generator (nullspace, normalized).
    pub fn equilibrium(&self) -> Result<DVector<f64>> {
        let g = self.generator()?;
        equilibrium_of(&g)
    }
}

/// Solve `gen p = 0, sum p = 1` by replacing the first row with the
/// normalization condition.
pub fn equilibrium_of(gen: &DMatrix<f64>) -> Result<DVector<f64>> {
    let n = gen.nrows();
    let mut a = gen.clone();
    for j in 0..n {
        a[(0, j)] = 1.0;
    }
    let mut b = DVector::zeros(n);
    b[0] = 1.0;
    let p = a
        .lu()
        .solve(&b)
        .ok_or_else(|| Error::Linalg("singular system for equilibrium distribution".into()))?;
    // Verify stationarity; a reducible generator can sneak past the solve.
    let resid = (gen * &p).amax();
    if resid > 1e-10 * gen.amax().max(1.0) {
        return Err(Error::NotConverged(format!(
            "equilibrium residual {resid:.2e}; generator may have no unique stationary state"
        )));
    }
    Ok(p)
}

/// Electron S_z eigenvalue per basis state (singlet carries none).
pub const SZ_DIAG: [f64; 7] = [-1.0, 0.0, 1.0, -1.0, 0.0, 1.0, 0.0];

/// Equilibrium autocorrelation `C(tau) = s_z^T exp(gen tau) (P_eq . s_z)`
/// at the requested lags.
pub fn correlation_function(
    gen: &DMatrix<f64>,
    p_eq: &DVector<f64>,
    taus: &[f64],
) -> Vec<f64> {
    let weighted = DVector::from_iterator(7, (0..7).map(|n| p_eq[n] * SZ_DIAG[n]));
    taus.iter()
        .map(|&tau| {
            let prop = (gen.clone() * tau).exp();
            let evolved = &prop * &weighted;
            (0..7).map(|m| SZ_DIAG[m] * evolved[m]).sum()
        })
        .collect()
}

/// Long-time limit `(sum_n P_eq_n s_z_n)^2`.
pub fn correlation_infinity(p_eq: &DVector<f64>) -> f64 {
    let mean: f64 = (0..7).map(|n| p_eq[n] * SZ_DIAG[n]).sum();
    mean * mean
}

/// Exponential-fit summary of one correlation function.
#[derive(Clone, Copy, Debug)]
pub struct CorrelationFit {
    pub tau_c: f64,
    pub r_squared: f64,
}

/// Fit `|C(tau) - C_inf| ~ A exp(-tau/tau_c)` on an adaptive grid.
pub fn fit_tau_c(pm: &PumpModel) -> Result<CorrelationFit> {
    let gen = pm.generator()?;
    let p_eq = equilibrium_of(&gen)?;
    let c_inf = correlation_infinity(&p_eq);
    let c0 = correlation_function(&gen, &p_eq, &[0.0])[0];
    let amp0 = c0 - c_inf;
    if amp0 <= 0.0 {
        return Err(Error::InsufficientData(
            "correlation function has no decaying part (zero variance)".into(),
        ));
    }
    // Find the 5% survival time by doubling, then fit on a linear grid up
    // to roughly three decay constants.
    let mut tau_max = 1e-9;
    loop {
        let c = correlation_function(&gen, &p_eq, &[tau_max])[0];
        if (c - c_inf) / amp0 < 0.05 || tau_max > 1e6 {
            break;
        }
        tau_max *= 2.0;
    }
    let n = 40;
    let taus: Vec<f64> = (1..=n).map(|j| tau_max * j as f64 / n as f64).collect();
    let cs = correlation_function(&gen, &p_eq, &taus);
    let mut xs = Vec::with_capacity(n);
    let mut ys = Vec::with_capacity(n);
    for (tau, c) in taus.iter().zip(&cs) {
        let amp = c - c_inf;
        if amp > amp0 * 1e-12 {
            xs.push(*tau);
            ys.push(amp.ln());
        }
    }
    if xs.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "only {} usable correlation samples for the exponential fit",
            xs.len()
        )));
    }
    let (_, slope, r2) = linfit(&xs, &ys)?;
    if !(slope < 0.0) {
        return Err(Error::NotConverged(format!(
            "correlation envelope does not decay (log-slope {slope:.3e})"
        )));
    }
    Ok(CorrelationFit { tau_c: -1.0 / slope, r_squared: r2 })
}

/// Linear map from laser power to electron bath parameters.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct LaserMap {
    /// 1/tau_c at zero power (1/s).
    pub intercept: f64,
    /// d(1/tau_c)/dP (1/s per W).
    pub slope: f64,
    /// Intrinsic nuclear T2 at zero power and at `p_max` (seconds); T2
    /// interpolates linearly in between.
    pub t2_zero: f64,
    pub t2_max: f64,
    /// Upper end of the calibrated power range (W).
    pub p_max: f64,
    /// R^2 of the linear 1/tau_c fit (1 for maps constructed directly).
    pub r_squared: f64,
    /// Whether 1/tau_c grew monotonically across the fitted grid.
    pub monotone: bool,
}

impl LaserMap {
    /// Engine defaults: tau_c = 2 ms in the dark, halved at 7.5 W, with the
    /// documented T2 range.
    pub fn calibrated_default() -> LaserMap {
        let inv_tau0 = 1.0 / 2.0e-3;
        LaserMap {
            intercept: inv_tau0,
            slope: inv_tau0 / 7.5,
            t2_zero: 2.5e-5,
            t2_max: 5.0e-5,
            p_max: 7.5,
            r_squared: 1.0,
            monotone: true,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.intercept > 0.0) {
            errs.push(format!("zero-power 1/tau_c must be positive, got {}", self.intercept));
        }
        if !(self.p_max > 0.0) {
            errs.push(format!("p_max must be positive, got {}", self.p_max));
        }
        if !(self.t2_zero > 0.0 && self.t2_max > 0.0) {
            errs.push("T2 endpoints must be positive".into());
        }
        for p in [0.0, self.p_max] {
            if self.intercept + self.slope * p <= 0.0 {
                errs.push(format!("1/tau_c becomes non-positive at {p} W"));
            }
        }
        if errs.is_empty() { Ok(()) } else { Err(invalid(errs.join("\n"))) }
    }

    /// Electron correlation time at the given power.
    pub fn tau_c_at(&self, power: f64) -> f64 {
        1.0 / (self.intercept + self.slope * power)
    }

    /// Intrinsic nuclear T2 at the given power (clamped to the calibrated
    /// range).
    pub fn t2_at(&self, power: f64) -> f64 {
        let f = (power / self.p_max).clamp(0.0, 1.0);
        self.t2_zero + (self.t2_max - self.t2_zero) * f
    }
}

/// Fit 1/tau_c against pump strength over a grid of `PumpModel`s differing
/// only in `gamma_p`, and package the result as a `LaserMap` (per-watt slope
/// assumes pump strength == power in arbitrary units).
pub fn tau_c_of_power(base: &PumpModel, pump_grid: &[f64]) -> Result<(LaserMap, Vec<CorrelationFit>)> {
    if pump_grid.len() < 4 {
        return Err(invalid(format!(
            "need at least 4 pump strengths for the linear fit, got {}",
            pump_grid.len()
        )));
    }
    let fits: Vec<CorrelationFit> = pump_grid
        .iter()
        .map(|&gp| fit_tau_c(&PumpModel { gamma_p: gp, ..*base }))
        .collect::<Result<_>>()?;
    let inv: Vec<f64> = fits.iter().map(|f| 1.0 / f.tau_c).collect();
    let monotone = inv.windows(2).all(|w| w[1] > w[0]);
    let (intercept, slope, r2) = linfit(pump_grid, &inv)?;
    let p_max = pump_grid.iter().cloned().fold(f64::MIN, f64::max);
    let map = LaserMap {
        intercept,
        slope,
        t2_zero: 2.5e-5,
        t2_max: 5.0e-5,
        p_max,
        r_squared: r2,
        monotone,
    };
    Ok((map, fits))
}
