//! Decay-curve fitting: the two-channel law `M(t) = exp(-(R_p t)^gamma) *
//! exp(-R_d t)`, the stretching-exponent sweep, relative-RMS goodness of
//! fit, and an independent Monte Carlo oracle for stretched-exponential
//! survival around Poisson-distributed traps.
//!
//! Fits run on log-values, where the model is *linear* in the transformed
//! parameters `(u, v) = (R_p^gamma, R_d)`:
//! `-log M = u t^gamma + v t`. The non-negative least-squares optimum of a
//! two-variable quadratic has a closed form, which is appended to the
//! multi-start projected-gradient candidates as a safety net; all starts
//! converge to the same global optimum.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::linalg::{linfit, pairwise_sum, slope_stderr};
use crate::{invalid, Error, Result};

/// Which decay channels participate in a fit.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FitChannels {
    /// Both the stretched and the exponential channel are free.
    Both,
    /// Exponential rate pinned to zero: pure stretched fit.
    StretchedOnly,
    /// Stretched rate pinned to zero: pure mono-exponential fit.
    MonoOnly,
}

/// Where the optimum landed relative to the non-negativity bounds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum FitBoundary {
    /// Both rates strictly positive.
    Interior,
    /// R_d = 0: the curve is pure stretched exponential.
    PureStretched,
    /// R_p = 0: the curve is pure mono-exponential.
    PureMono,
    /// Both rates zero: no resolvable decay in the window.
    Flat,
}

#[derive(Clone, Debug, Serialize)]
pub struct FitResult {
    #[serde(rename = "R_p")]
    pub r_p: f64,
    #[serde(rename = "R_d")]
    pub r_d: f64,
    pub gamma: f64,
    /// Root-mean-square residual of the log-values (the fit objective).
    pub rms: f64,
    /// Relative RMS on linear values: `sqrt(<(data-model)^2>) / sqrt(<data^2>)`.
    pub rrms: f64,
    /// Time window actually used, seconds.
    pub window: (f64, f64),
    pub converged: bool,
    pub boundary: FitBoundary,
}

impl FitResult {
    /// Model value at time `t` (normalized to 1 at t = 0).
    pub fn model(&self, t: f64) -> f64 {
        (-(self.r_p * t).powf(self.gamma) - self.r_d * t).exp()
    }

    /// Model renormalized to 1 at the window start, directly comparable to
    /// a curve that was itself normalized at its first sample.
    pub fn model_at_window(&self, t: f64) -> f64 {
        self.model(t) / self.model(self.window.0)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct FitOptions {
    pub gamma: f64,
    /// Restrict the fit to `t_min <= t <= t_max`; `None` uses everything.
    pub window: Option<(f64, f64)>,
    pub channels: FitChannels,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { gamma: 0.5, window: None, channels: FitChannels::Both }
    }
}

/// Longest window starting at the first sample over which values stay
/// strictly positive, as a `(t_min, t_max)` pair. Deeply decayed curves
/// underflow to zero at late times; fitting on log-values needs them cut.
pub fn positive_window(times: &[f64], values: &[f64]) -> Option<(f64, f64)> {
    let end = values.iter().position(|&v| !(v > 0.0)).unwrap_or(values.len());
    if end == 0 {
        return None;
    }
    Some((times[0], times[end - 1]))
}

/// Exactly `sqrt(<(data - model)^2>) / sqrt(<data^2>)`.
pub fn rrms(data: &[f64], model: &[f64]) -> Result<f64> {
    if data.len() != model.len() {
        return Err(invalid(format!(
            "rrms needs equal lengths, got {} and {}",
            data.len(),
            model.len()
        )));
    }
    let sq: Vec<f64> = data.iter().zip(model).map(|(d, m)| (d - m) * (d - m)).collect();
    let dd: Vec<f64> = data.iter().map(|d| d * d).collect();
    let denom = pairwise_sum(&dd);
    if denom == 0.0 {
        return Err(invalid("rrms undefined for all-zero data"));
    }
    Ok((pairwise_sum(&sq) / denom).sqrt())
}

/// Quadratic objective `sum_i (y_i + u a_i + v b_i)^2` and its gradient,
/// in the linearized coordinates. The regressors are measured from the
/// window start t0 — `a_i = t_i^gamma - t0^gamma`, `b_i = t_i - t0` — so
/// the model passes exactly through the normalization point y(t0) = 0.
struct Quadratic {
    /// Gram matrix [[sum a^2, sum a b], [sum a b, sum b^2]].
    g: [[f64; 2]; 2],
    /// Right-hand side [-sum y a, -sum y b].
    rhs: [f64; 2],
    /// sum y^2 (constant term).
    yy: f64,
}

impl Quadratic {
    fn build(t: &[f64], y: &[f64], gamma: f64, t0: f64) -> Quadratic {
        let mut g = [[0.0; 2]; 2];
        let mut rhs = [0.0; 2];
        let mut yy = 0.0;
        let a0 = t0.powf(gamma);
        for (&ti, &yi) in t.iter().zip(y) {
            let a = ti.powf(gamma) - a0;
            let b = ti - t0;
            g[0][0] += a * a;
            g[0][1] += a * b;
            g[1][1] += b * b;
            rhs[0] -= yi * a;
            rhs[1] -= yi * b;
            yy += yi * yi;
        }
        g[1][0] = g[0][1];
        Quadratic { g, rhs, yy }
    }

    fn objective(&self, x: [f64; 2]) -> f64 {
        // |y + A x|^2 expanded: yy + 2 x.(-rhs)... careful with signs:
        // residual r_i = y_i + u a_i + v t_i, so
        // f = yy + x^T G x - 2 x . rhs  with rhs as defined above.
        self.yy + x[0] * (self.g[0][0] * x[0] + self.g[0][1] * x[1])
            + x[1] * (self.g[1][0] * x[0] + self.g[1][1] * x[1])
            - 2.0 * (x[0] * self.rhs[0] + x[1] * self.rhs[1])
    }

    fn gradient(&self, x: [f64; 2]) -> [f64; 2] {
        [
            2.0 * (self.g[0][0] * x[0] + self.g[0][1] * x[1] - self.rhs[0]),
            2.0 * (self.g[1][0] * x[0] + self.g[1][1] * x[1] - self.rhs[1]),
        ]
    }

    /// Exact minimizer over the non-negative quadrant (closed form for two
    /// variables): best of the unconstrained solution and each edge.
    fn nnls(&self, free: [bool; 2]) -> [f64; 2] {
        let mut best = [0.0, 0.0];
        let mut best_f = self.objective(best);
        let consider = |x: [f64; 2], f: &mut f64, b: &mut [f64; 2]| {
            if x[0] >= 0.0 && x[1] >= 0.0 {
                let fx = self.objective(x);
                if fx < *f {
                    *f = fx;
                    *b = x;
                }
            }
        };
        if free[0] && free[1] {
            let det = self.g[0][0] * self.g[1][1] - self.g[0][1] * self.g[1][0];
            if det.abs() > 0.0 {
                let u = (self.rhs[0] * self.g[1][1] - self.g[0][1] * self.rhs[1]) / det;
                let v = (self.g[0][0] * self.rhs[1] - self.rhs[0] * self.g[1][0]) / det;
                consider([u, v], &mut best_f, &mut best);
            }
        }
        if free[0] && self.g[0][0] > 0.0 {
            consider([self.rhs[0] / self.g[0][0], 0.0], &mut best_f, &mut best);
        }
        if free[1] && self.g[1][1] > 0.0 {
            consider([0.0, self.rhs[1] / self.g[1][1]], &mut best_f, &mut best);
        }
        best
    }
}

/// Projected gradient descent with backtracking on the non-negative
/// quadrant. Returns the final point, whether the projected gradient
/// vanished, and the accepted objective trace (strictly decreasing).
fn projected_descent(q: &Quadratic, start: [f64; 2], free: [bool; 2]) -> ([f64; 2], bool, Vec<f64>) {
    let mut x = [
        if free[0] { start[0].max(0.0) } else { 0.0 },
        if free[1] { start[1].max(0.0) } else { 0.0 },
    ];
    let mut f = q.objective(x);
    let mut trace = vec![f];
    let scale = q.g[0][0].max(q.g[1][1]).max(1e-300);
    let mut step = 1.0 / scale;
    let mut converged = false;
    for _ in 0..500 {
        let mut grad = q.gradient(x);
        for k in 0..2 {
            if !free[k] {
                grad[k] = 0.0;
            }
        }
        // Projected gradient: components pushing into the boundary from
        // the boundary are inactive.
        let pg = [
            if x[0] <= 0.0 && grad[0] > 0.0 { 0.0 } else { grad[0] },
            if x[1] <= 0.0 && grad[1] > 0.0 { 0.0 } else { grad[1] },
        ];
        let pg_norm = (pg[0] * pg[0] + pg[1] * pg[1]).sqrt();
        if pg_norm <= 1e-12 * scale.max(1.0) {
            converged = true;
            break;
        }
        // Backtracking line search; accept only strict decrease.
        let mut accepted = false;
        let mut s = step;
        for _ in 0..60 {
            let cand = [
                if free[0] { (x[0] - s * grad[0]).max(0.0) } else { 0.0 },
                if free[1] { (x[1] - s * grad[1]).max(0.0) } else { 0.0 },
            ];
            let fc = q.objective(cand);
            if fc < f {
                x = cand;
                f = fc;
                trace.push(f);
                step = s * 2.0;
                accepted = true;
                break;
            }
            s *= 0.5;
        }
        if !accepted {
            converged = true; // no descent direction left at this scale
            break;
        }
    }
    (x, converged, trace)
}

fn window_slice<'a>(
    times: &'a [f64],
    values: &'a [f64],
    window: Option<(f64, f64)>,
) -> Result<(Vec<f64>, Vec<f64>, (f64, f64))> {
    if times.len() != values.len() {
        return Err(invalid("times/values length mismatch"));
    }
    let (lo, hi) = window.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    let mut t = Vec::new();
    let mut v = Vec::new();
    for (&ti, &vi) in times.iter().zip(values) {
        if ti >= lo && ti <= hi {
            t.push(ti);
            v.push(vi);
        }
    }
    if t.len() < 50 {
        return Err(Error::InsufficientData(format!(
            "fit window holds {} points; need at least 50",
            t.len()
        )));
    }
    if let Some(&bad) = v.iter().find(|&&x| !(x > 0.0)) {
        return Err(invalid(format!(
            "fit window contains non-positive value {bad}; shrink the window (see positive_window)"
        )));
    }
    let win = (t[0], *t.last().unwrap());
    Ok((t, v, win))
}

/// Fit `M(t) = exp(-(R_p t)^gamma - R_d t)` to a curve on log-values.
///
/// The curve is renormalized to 1 at the window start, so no amplitude
/// parameter is fitted. Multi-start projected gradient descent over
/// `(R_p^gamma, R_d) >= 0` (nine starts scattered around the 1/e crossing)
/// plus the closed-form non-negative least-squares candidate.
pub fn fit_emergent(times: &[f64], values: &[f64], opts: &FitOptions) -> Result<FitResult> {
    if !(opts.gamma > 0.0 && opts.gamma < 2.0) {
        return Err(invalid(format!("gamma must lie in (0, 2), got {}", opts.gamma)));
    }
    let (t, v, win) = window_slice(times, values, opts.window)?;
    // Normalize at the window start; the regressors inside Quadratic are
    // anchored there too, so no amplitude parameter is needed.
    let v0 = v[0];
    let y: Vec<f64> = v.iter().map(|&x| (x / v0).ln()).collect();
    let q = Quadratic::build(&t, &y, opts.gamma, t[0]);
    let free = match opts.channels {
        FitChannels::Both => [true, true],
        FitChannels::StretchedOnly => [true, false],
        FitChannels::MonoOnly => [false, true],
    };

    // 1/e crossing of the normalized curve seeds the starts; flat curves
    // fall back to the geometric mean of the window.
    let t_e = t
        .iter()
        .zip(&y)
        .find(|(_, &yi)| yi < -1.0)
        .map(|(&ti, _)| ti)
        .unwrap_or_else(|| (win.0.max(1e-300) * win.1).sqrt());
    let r0 = 1.0 / t_e;

    let mut best: Option<([f64; 2], bool)> = None;
    let mut best_f = f64::INFINITY;
    let mut any_converged = false;
    for &su in &[0.1, 1.0, 10.0] {
        for &sv in &[0.1, 1.0, 10.0] {
            let start = [(r0 * su).powf(opts.gamma), r0 * sv];
            let (x, conv, _) = projected_descent(&q, start, free);
            let fx = q.objective(x);
            any_converged |= conv;
            if fx < best_f {
                best_f = fx;
                best = Some((x, conv));
            }
        }
    }
    let x_nnls = q.nnls(free);
    if q.objective(x_nnls) < best_f {
        best_f = q.objective(x_nnls);
        best = Some((x_nnls, true));
        any_converged = true;
    }
    let (mut x, _) = best.expect("at least one candidate always exists");
    if !any_converged {
        return Err(Error::NotConverged("no fit start converged".into()));
    }

    // Snap channels whose total contribution across the window is float
    // noise relative to the signal; keeps boundary reporting exact.
    let a0 = t[0].powf(opts.gamma);
    let a_max = t.iter().map(|&ti| ti.powf(opts.gamma) - a0).fold(0.0, f64::max);
    let b_max = t.last().unwrap() - t[0];
    let y_scale = y.iter().fold(0.0f64, |m, &yi| m.max(yi.abs())).max(1e-30);
    if x[0] * a_max <= 1e-9 * y_scale {
        x[0] = 0.0;
    }
    if x[1] * b_max <= 1e-9 * y_scale {
        x[1] = 0.0;
    }

    let r_p = if x[0] > 0.0 { x[0].powf(1.0 / opts.gamma) } else { 0.0 };
    let r_d = x[1].max(0.0);
    let boundary = match (r_p > 0.0, r_d > 0.0) {
        (true, true) => FitBoundary::Interior,
        (true, false) => FitBoundary::PureStretched,
        (false, true) => FitBoundary::PureMono,
        (false, false) => FitBoundary::Flat,
    };
    let rms = (best_f.max(0.0) / t.len() as f64).sqrt();
    let model: Vec<f64> = t
        .iter()
        .map(|&ti| v0 * (-x[0] * (ti.powf(opts.gamma) - a0) - x[1] * (ti - t[0])).exp())
        .collect();
    let rrms = rrms(&v, &model)?;
    Ok(FitResult {
        r_p,
        r_d,
        gamma: opts.gamma,
        rms,
        rrms,
        window: win,
        converged: any_converged,
        boundary,
    })
}

/// One row of a stretching-exponent sweep.
#[derive(Clone, Debug, Serialize)]
pub struct GammaPoint {
    pub gamma: f64,
    pub rms: f64,
    #[serde(rename = "R_p")]
    pub r_p: f64,
    #[serde(rename = "R_d")]
    pub r_d: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct GammaSweep {
    pub points: Vec<GammaPoint>,
    /// Exponent with the smallest RMS residual.
    pub argmin: f64,
}

/// Default exponent grid 0.30, 0.35, ..., 0.90.
pub fn default_gamma_grid() -> Vec<f64> {
    (0..=12).map(|k| 0.30 + 0.05 * k as f64).collect()
}

/// Refit the curve at each exponent in the grid; report residuals and the
/// best exponent.
pub fn gamma_sweep(
    times: &[f64],
    values: &[f64],
    grid: &[f64],
    window: Option<(f64, f64)>,
) -> Result<GammaSweep> {
    if grid.is_empty() {
        return Err(invalid("gamma grid is empty"));
    }
    let mut points = Vec::with_capacity(grid.len());
    for &gamma in grid {
        let opts = FitOptions { gamma, window, channels: FitChannels::Both };
        let fit = fit_emergent(times, values, &opts)?;
        points.push(GammaPoint { gamma, rms: fit.rms, r_p: fit.r_p, r_d: fit.r_d });
    }
    let argmin = points
        .iter()
        .min_by(|a, b| a.rms.total_cmp(&b.rms))
        .map(|p| p.gamma)
        .unwrap();
    Ok(GammaSweep { points, argmin })
}

/// Monte Carlo survival of a walker-free polarization site surrounded by
/// Poisson-distributed traps: `S(t) = < prod_i exp(-A t / r_i^alpha) >`
/// over trap configurations at the given number density.
#[derive(Clone, Debug)]
pub struct TrapSurvival {
    pub times: Vec<f64>,
    pub survival: Vec<f64>,
    /// Fitted stretching exponent of `-ln S ~ t^x` (slope of the log-log
    /// fit), with its standard error; `None` when the decay is too small
    /// to fit.
    pub exponent: Option<(f64, f64)>,
    /// Ball radius used for sampling (truncation error < 1e-3).
    pub radius: f64,
}

/// Poisson sample via Knuth's product method, chunked so the running
/// product never underflows even for large means.
fn poisson_count(rng: &mut ChaCha8Rng, mean: f64) -> usize {
    let mut remaining = mean;
    let mut n = 0usize;
    while remaining > 0.0 {
        let lambda = remaining.min(256.0);
        remaining -= lambda;
        let limit = (-lambda).exp();
        let mut prod: f64 = rng.random();
        while prod >= limit {
            n += 1;
            prod *= rng.random::<f64>();
        }
    }
    n
}

/// Expected log-survival contribution of traps beyond the sampling ball:
/// `rho * integral_R^inf (1 - exp(-A t / r^alpha)) 4 pi r^2 dr`, evaluated
/// by the series in `c = A t / R^alpha` (kept small by construction, so
/// four terms are exact to well below the truncation budget).
fn tail_log_survival(density: f64, a: f64, alpha: f64, radius: f64, t: f64) -> f64 {
    let c = a * t / radius.powf(alpha);
    let mut sum = 0.0;
    let mut ck = 1.0;
    let mut kfac = 1.0;
    for k in 1..=4u32 {
        ck *= c;
        kfac *= k as f64;
        let term = ck / (kfac * (alpha * k as f64 - 3.0));
        sum += if k % 2 == 1 { term } else { -term };
    }
    density * 4.0 * std::f64::consts::PI * radius.powi(3) * sum
}

/// Survival around Poisson traps with interaction `A / r^alpha`.
///
/// `density` is traps per unit volume (units consistent with `a` and the
/// times). Traps inside a ball are sampled explicitly; the (statistically
/// quasi-deterministic) far-field tail is folded in analytically via the
/// exact Poisson average, so the total truncation error in `-ln S` stays
/// below 1e-3 even for slowly decaying interactions.
pub fn poisson_trap_survival(
    a: f64,
    density: f64,
    alpha: f64,
    times: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<TrapSurvival> {
    if !(a >= 0.0) {
        return Err(invalid(format!("coupling A must be non-negative, got {a}")));
    }
    if !(density > 0.0) {
        return Err(invalid(format!("trap density must be positive, got {density}")));
    }
    if !(alpha > 3.0) {
        return Err(invalid(format!(
            "interaction exponent must exceed the dimension 3, got {alpha}"
        )));
    }
    if times.is_empty() || n_samples == 0 {
        return Err(Error::InsufficientData("need times and samples".into()));
    }
    let t_max = times.iter().cloned().fold(0.0, f64::max);
    // Ball radius: (a) every tail trap is individually weak,
    // c = A t_max / R^alpha <= 0.05, so the series correction converges
    // fast; (b) the neglected tail *fluctuations* (variance of the far
    // rate sum) stay below 1e-3:
    // rho 4 pi (A t)^2 R^(3-2 alpha) / (2 alpha - 3) < 1e-3.
    let radius = if a == 0.0 {
        1.0
    } else {
        let r_weak = (a * t_max / 0.05).powf(1.0 / alpha);
        let r_var = (density * 4.0 * std::f64::consts::PI * (a * t_max) * (a * t_max)
            / ((2.0 * alpha - 3.0) * 1e-3))
            .powf(1.0 / (2.0 * alpha - 3.0));
        r_weak.max(r_var).max(1e-6)
    };
    let mean_count = density * 4.0 / 3.0 * std::f64::consts::PI * radius.powi(3);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut acc = vec![0.0; times.len()];
    let mut rates = Vec::new();
    for _ in 0..n_samples {
        let count = poisson_count(&mut rng, mean_count);
        rates.clear();
        for _ in 0..count {
            // Radius of a uniform point in the ball; angles are irrelevant.
            let r = radius * rng.random::<f64>().cbrt();
            rates.push(a / r.powf(alpha));
        }
        let total: f64 = rates.iter().sum();
        for (s, &t) in acc.iter_mut().zip(times) {
            *s += (-total * t).exp();
        }
    }
    let survival: Vec<f64> = acc
        .iter()
        .zip(times)
        .map(|(s, &t)| s / n_samples as f64 * (-tail_log_survival(density, a, alpha, radius, t)).exp())
        .collect();

    // Stretching exponent from ln(-ln S) vs ln t on resolvable points.
    let mut lx = Vec::new();
    let mut ly = Vec::new();
    for (&t, &s) in times.iter().zip(&survival) {
        if s > 1e-3 && s < 1.0 - 1e-4 && t > 0.0 {
            lx.push(t.ln());
            ly.push((-s.ln()).ln());
        }
    }
    let exponent = if lx.len() >= 3 {
        let (_, slope, _) = linfit(&lx, &ly)?;
        let se = slope_stderr(&lx, &ly)?;
        Some((slope, se))
    } else {
        None
    };
    Ok(TrapSurvival { times: times.to_vec(), survival, exponent, radius })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synthetic(r_p: f64, r_d: f64, gamma: f64, n: usize) -> (Vec<f64>, Vec<f64>) {
        let times: Vec<f64> = (0..n)
            .map(|j| 10f64.powf(-2.0 + 4.0 * j as f64 / (n - 1) as f64))
            .collect();
        let values: Vec<f64> =
            times.iter().map(|&t| (-(r_p * t).powf(gamma) - r_d * t).exp()).collect();
        (times, values)
    }

    #[test]
    fn recovers_exact_two_channel_data() {
        let (t, v) = synthetic(2.0, 0.01, 0.5, 120);
        let fit = fit_emergent(&t, &v, &FitOptions::default()).unwrap();
        assert!((fit.r_p - 2.0).abs() / 2.0 < 1e-4, "R_p = {}", fit.r_p);
        assert!((fit.r_d - 0.01).abs() / 0.01 < 1e-4, "R_d = {}", fit.r_d);
        assert!(fit.rms < 1e-8);
        assert!(fit.rrms < 1e-6);
        assert_eq!(fit.boundary, FitBoundary::Interior);
        assert!(fit.converged);
    }

    #[test]
    fn pure_channels_land_on_bounds() {
        let (t, v) = synthetic(0.0, 1.0, 0.5, 100);
        let fit = fit_emergent(&t, &v, &FitOptions::default()).unwrap();
        assert!((fit.r_d - 1.0).abs() < 1e-6, "R_d = {}", fit.r_d);
        assert_eq!(fit.r_p, 0.0);
        assert_eq!(fit.boundary, FitBoundary::PureMono);

        let (t, v) = synthetic(1.0, 0.0, 0.5, 100);
        let fit = fit_emergent(&t, &v, &FitOptions::default()).unwrap();
        assert!((fit.r_p - 1.0).abs() < 1e-6, "R_p = {}", fit.r_p);
        assert_eq!(fit.r_d, 0.0);
        assert_eq!(fit.boundary, FitBoundary::PureStretched);

        // Flat data: both rates at zero.
        let t: Vec<f64> = (0..60).map(|j| 0.1 * (j + 1) as f64).collect();
        let v = vec![1.0; 60];
        let fit = fit_emergent(&t, &v, &FitOptions::default()).unwrap();
        assert_eq!(fit.boundary, FitBoundary::Flat);
        assert_eq!((fit.r_p, fit.r_d), (0.0, 0.0));
    }

    #[test]
    fn channel_restrictions_pin_rates() {
        let (t, v) = synthetic(2.0, 0.01, 0.5, 100);
        let mono = fit_emergent(
            &t,
            &v,
            &FitOptions { channels: FitChannels::MonoOnly, ..Default::default() },
        )
        .unwrap();
        assert_eq!(mono.r_p, 0.0);
        assert!(mono.r_d > 0.0);
        let stretched = fit_emergent(
            &t,
            &v,
            &FitOptions { channels: FitChannels::StretchedOnly, ..Default::default() },
        )
        .unwrap();
        assert_eq!(stretched.r_d, 0.0);
        assert!(stretched.r_p > 0.0);
        // Restricted fits cannot beat the free fit.
        let both = fit_emergent(&t, &v, &FitOptions::default()).unwrap();
        assert!(both.rms <= mono.rms + 1e-15);
        assert!(both.rms <= stretched.rms + 1e-15);
    }

    #[test]
    fn time_rescaling_covariance() {
        // Sampling the same law at t -> c t must divide both rates by c.
        let (t, v) = synthetic(0.37, 0.004, 0.5, 150);
        let base = fit_emergent(&t, &v, &FitOptions::default()).unwrap();
        let c = 7.3;
        let t_scaled: Vec<f64> = t.iter().map(|&x| c * x).collect();
        let scaled = fit_emergent(&t_scaled, &v, &FitOptions::default()).unwrap();
        assert!(
            (scaled.r_p - base.r_p / c).abs() / (base.r_p / c) < 1e-6,
            "R_p {} vs {}",
            scaled.r_p,
            base.r_p / c
        );
        assert!(
            (scaled.r_d - base.r_d / c).abs() / (base.r_d / c) < 1e-6,
            "R_d {} vs {}",
            scaled.r_d,
            base.r_d / c
        );
    }

    #[test]
    fn descent_objective_is_monotone() {
        let (t, v) = synthetic(1.3, 0.09, 0.5, 90);
        let y: Vec<f64> = v.iter().map(|&x| (x / v[0]).ln()).collect();
        let q = Quadratic::build(&t, &y, 0.5, t[0]);
        let (_, _, trace) = projected_descent(&q, [37.0, 0.001], [true, true]);
        assert!(trace.len() > 2, "no iterations accepted");
        for w in trace.windows(2) {
            assert!(w[1] < w[0], "objective rose: {} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn window_and_validation_errors() {
        let (t, v) = synthetic(1.0, 0.1, 0.5, 100);
        // Window too small.
        let opts = FitOptions { window: Some((1.0, 1.2)), ..Default::default() };
        assert!(matches!(fit_emergent(&t, &v, &opts), Err(Error::InsufficientData(_))));
        // Non-positive values rejected, and positive_window cures it.
        let mut v_bad = v.clone();
        let n = v_bad.len();
        for x in &mut v_bad[n - 5..] {
            *x = 0.0;
        }
        assert!(fit_emergent(&t, &v_bad, &FitOptions::default()).is_err());
        let win = positive_window(&t, &v_bad).unwrap();
        assert!(win.1 < t[n - 5]);
        let opts = FitOptions { window: Some(win), ..Default::default() };
        let fit = fit_emergent(&t, &v_bad, &opts).unwrap();
        assert!((fit.r_p - 1.0).abs() < 1e-4);
    }

    #[test]
    fn rrms_matches_hand_values() {
        assert_eq!(rrms(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        let one = rrms(&[3.0, 4.0], &[0.0, 0.0]).unwrap();
        assert!((one - 1.0).abs() < 1e-15);
        let r = rrms(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((r - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(rrms(&[0.0, 0.0], &[1.0, 1.0]).is_err());
        assert!(rrms(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn gamma_sweep_finds_generating_exponent() {
        let grid = default_gamma_grid();
        assert!((grid[0] - 0.3).abs() < 1e-12 && (grid[12] - 0.9).abs() < 1e-12);
        for &g_true in &[0.5, 0.7] {
            let (t, v) = synthetic(1.0, 0.002, g_true, 120);
            let sweep = gamma_sweep(&t, &v, &grid, None).unwrap();
            assert!(
                (sweep.argmin - g_true).abs() < 0.05 + 1e-12,
                "argmin {} for true gamma {}",
                sweep.argmin,
                g_true
            );
        }
    }

    #[test]
    fn gamma_argmin_stable_under_noise() {
        let (t, v) = synthetic(1.0, 0.002, 0.5, 120);
        let grid = default_gamma_grid();
        let mut lcg = 0x9e3779b97f4a7c15u64;
        let mut unif = || {
            lcg = lcg.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (lcg >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..20 {
            let noisy: Vec<f64> =
                v.iter().map(|&x| x * (1.0 + 0.01 * (2.0 * unif() - 1.0))).collect();
            let sweep = gamma_sweep(&t, &noisy, &grid, None).unwrap();
            assert!(
                (sweep.argmin - 0.5).abs() < 0.05 + 1e-12,
                "argmin {} drifted under 1% noise",
                sweep.argmin
            );
        }
    }

    #[test]
    fn trap_survival_matches_analytic_exponents() {
        let times: Vec<f64> = (0..25)
            .map(|j| 10f64.powf(-1.5 + 3.5 * j as f64 / 24.0))
            .collect();
        // 1/r^6 traps: -ln S = rho (4 pi / 3) Gamma(1/2) (A t)^(1/2).
        let s6 = poisson_trap_survival(1.0, 0.04, 6.0, &times, 3000, 11).unwrap();
        let (exp6, _) = s6.exponent.unwrap();
        assert!((exp6 - 0.5).abs() < 0.03, "1/r^6 exponent {exp6}");
        // Amplitude check against the closed form at one mid time.
        let rho = 0.04;
        let coeff = rho * 4.0 / 3.0 * std::f64::consts::PI * std::f64::consts::PI.sqrt();
        let idx = 12;
        let want = (-coeff * times[idx].sqrt()).exp();
        assert!(
            (s6.survival[idx] - want).abs() < 0.02,
            "S({}) = {} vs analytic {}",
            times[idx],
            s6.survival[idx],
            want
        );
        // 1/r^4 traps: exponent 3/4 (shorter span; the law is faster).
        let times4: Vec<f64> = (0..25)
            .map(|j| 10f64.powf(-1.5 + 2.8 * j as f64 / 24.0))
            .collect();
        let s4 = poisson_trap_survival(1.0, 0.02, 4.0, &times4, 3000, 12).unwrap();
        let (exp4, _) = s4.exponent.unwrap();
        assert!((exp4 - 0.75).abs() < 0.03, "1/r^4 exponent {exp4}");
        // A = 0: survival identically 1, no exponent.
        let s0 = poisson_trap_survival(0.0, 0.04, 6.0, &times, 50, 13).unwrap();
        assert!(s0.survival.iter().all(|&s| s == 1.0));
        assert!(s0.exponent.is_none());
    }

    #[test]
    fn poisson_sampler_moments() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        for &mean in &[0.3, 4.0, 700.0] {
            let n = 3000;
            let counts: Vec<f64> = (0..n).map(|_| poisson_count(&mut rng, mean) as f64).collect();
            let m = pairwise_sum(&counts) / n as f64;
            let var = counts.iter().map(|c| (c - m) * (c - m)).sum::<f64>() / (n - 1) as f64;
            // Mean and variance both equal the rate; allow 5 sigma.
            let tol = 5.0 * (mean / n as f64).sqrt();
            assert!((m - mean).abs() < tol, "mean {m} vs {mean}");
            assert!(
                (var - mean).abs() < 5.0 * mean * (2.0 / n as f64).sqrt() + 0.1,
                "var {var} vs {mean}"
            );
        }
    }
}
