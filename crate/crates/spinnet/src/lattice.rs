//! Diamond-lattice boxes with doubly random site occupation.
//!
//! A simulation box is `cells^3` conventional cubic cells (8 carbon sites per
//! cell) with periodic boundaries. Each site independently hosts an electron
//! defect with probability `c_el`, otherwise a spin-active nucleus with
//! probability `c_nuc`. Nuclei inside the "frozen core" radius of any
//! electron are strongly detuned and are removed from the dynamical network.
//!
//! All positions are in angstrom. Distances use the minimum-image convention.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{invalid, Result};

/// Conventional diamond cubic lattice constant for carbon, in angstrom.
pub const LATTICE_CONSTANT: f64 = 3.567;

/// Fractional coordinates of the 8 sites in a conventional diamond cell:
/// the FCC positions plus the same four shifted by (1/4, 1/4, 1/4).
const CELL_SITES: [[f64; 3]; 8] = [
    [0.0, 0.0, 0.0],
    [0.0, 0.5, 0.5],
    [0.5, 0.0, 0.5],
    [0.5, 0.5, 0.0],
    [0.25, 0.25, 0.25],
    [0.25, 0.75, 0.75],
    [0.75, 0.25, 0.75],
    [0.75, 0.75, 0.25],
];

/// Periodic cubic simulation box.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct BoxGeometry {
    /// Edge length in angstrom.
    pub side: f64,
    /// Number of conventional cells per edge.
    pub cells: usize,
    /// Lattice constant in angstrom.
    pub lattice_constant: f64,
}

impl BoxGeometry {
    pub fn new(cells: usize, lattice_constant: f64) -> Result<Self> {
        if cells == 0 {
            return Err(invalid("box must span at least one cell per edge"));
        }
        if !(lattice_constant > 0.0) {
            return Err(invalid(format!("lattice constant must be positive, got {lattice_constant}")));
        }
        Ok(BoxGeometry { side: cells as f64 * lattice_constant, cells, lattice_constant })
    }

    /// Total number of carbon sites in the box.
    pub fn n_sites(&self) -> usize {
        8 * self.cells * self.cells * self.cells
    }

    /// Minimum-image displacement `p - q`, each component wrapped to
    /// `[-side/2, side/2)`.
    #[inline]
    pub fn min_image(&self, p: [f64; 3], q: [f64; 3]) -> [f64; 3] {
        let mut d = [p[0] - q[0], p[1] - q[1], p[2] - q[2]];
        for c in &mut d {
            *c -= self.side * (*c / self.side).round();
            // round() sends exactly +side/2 to +side/2; fold onto the
            // half-open convention.
            if *c >= self.side / 2.0 {
                *c -= self.side;
            }
        }
        d
    }

    /// Minimum-image distance between two points.
    #[inline]
    pub fn distance(&self, p: [f64; 3], q: [f64; 3]) -> f64 {
        let d = self.min_image(p, q);
        (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
    }
}

/// All carbon sites of the box, in lattice order.
pub fn build_diamond_sites(geometry: &BoxGeometry) -> Vec<[f64; 3]> {
    let a = geometry.lattice_constant;
    let m = geometry.cells;
    let mut sites = Vec::with_capacity(geometry.n_sites());
    for ix in 0..m {
        for iy in 0..m {
            for iz in 0..m {
                for frac in &CELL_SITES {
                    sites.push([
                        (ix as f64 + frac[0]) * a,
                        (iy as f64 + frac[1]) * a,
                        (iz as f64 + frac[2]) * a,
                    ]);
                }
            }
        }
    }
    sites
}

/// Site occupation probabilities.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct Concentrations {
    /// Nuclear isotopic abundance (fraction of carbon sites), e.g. 0.011.
    pub c_nuc: f64,
    /// Electron-defect site fraction, e.g. 30e-6 for 30 ppm.
    pub c_el: f64,
}

impl Concentrations {
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if !(self.c_nuc >= 0.0 && self.c_nuc <= 0.5) {
            errs.push(format!("c_nuc must lie in [0, 0.5], got {}", self.c_nuc));
        }
        if !(self.c_el >= 0.0 && self.c_el <= 0.01) {
            errs.push(format!("c_el must lie in [0, 0.01], got {}", self.c_el));
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(invalid(errs.join("\n")))
        }
    }
}

/// Seed for one disorder realization: a master seed shared by the whole
/// ensemble plus the realization index, mapped to an independent ChaCha
/// stream. Identical `(master, index)` pairs reproduce identical boxes on
/// any machine and any worker count.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct RealizationSeed {
    pub master: u64,
    pub index: u64,
}

impl RealizationSeed {
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master);
        rng.set_stream(self.index);
        rng
    }
}

/// One disorder realization: nucleus and electron positions in a periodic box.
#[derive(Clone, Debug)]
pub struct SpinRealization {
    pub geometry: BoxGeometry,
    pub seed: RealizationSeed,
    pub nuclei: Vec<[f64; 3]>,
    pub electrons: Vec<[f64; 3]>,
}

/// Populate lattice sites at the given concentrations.
///
/// Each site draws its electron trial first and, when that fails, a nucleus
/// trial, so expected counts are `c_el * N` electrons and
/// `c_nuc * (1 - c_el) * N` nuclei. Both trials consume one draw per site
/// regardless of outcome, keeping the stream layout independent of the
/// concentrations.
pub fn populate(
    sites: &[[f64; 3]],
    geometry: BoxGeometry,
    conc: Concentrations,
    seed: RealizationSeed,
) -> Result<SpinRealization> {
    conc.validate()?;
    let mut rng = seed.rng();
    let mut nuclei = Vec::new();
    let mut electrons = Vec::new();
    for &site in sites {
        let u_el: f64 = rng.random();
        let u_nuc: f64 = rng.random();
        if u_el < conc.c_el {
            electrons.push(site);
        } else if u_nuc < conc.c_nuc {
            nuclei.push(site);
        }
    }
    Ok(SpinRealization { geometry, seed, nuclei, electrons })
}

/// Electron polarization `tanh(hbar |gamma_e| B / (2 kB T))` for a spin-1/2
/// defect at field `b_tesla` and temperature `temp_kelvin`.
pub fn electron_polarization(b_tesla: f64, temp_kelvin: f64) -> f64 {
    use crate::dipolar::{GAMMA_E, HBAR, KB};
    (HBAR * GAMMA_E.abs() * b_tesla / (2.0 * KB * temp_kelvin)).tanh()
}

/// Frozen-core radius `r_c = a (P_e * gamma_e / gamma_n)^(1/4)` around an
/// electron defect, inside which nuclei are detuned out of the hopping
/// network. `nn_distance` is the typical nearest-neighbour distance between
/// spin-active nuclei (angstrom).
pub fn frozen_core_radius(nn_distance: f64, b_tesla: f64, temp_kelvin: f64) -> f64 {
    use crate::dipolar::{GAMMA_C, GAMMA_E};
    let pe = electron_polarization(b_tesla, temp_kelvin);
    nn_distance * (pe * (GAMMA_E / GAMMA_C).abs()).powf(0.25)
}

/// Wigner-Seitz radius of the electron point density (angstrom): the radius
/// of the sphere holding one electron on average.
pub fn wigner_seitz_radius(c_el: f64, lattice_constant: f64) -> f64 {
    let rho = 8.0 * c_el / lattice_constant.powi(3);
    (3.0 / (4.0 * std::f64::consts::PI * rho)).cbrt()
}

/// Cap a frozen-core radius so the exclusion spheres can neither cover the
/// box nor (at high electron density) swallow every nucleus: the effective
/// radius is `min(r_c, 0.45 r_ws, 0.45 side)`.
pub fn effective_core_radius(r_c: f64, c_el: f64, geometry: &BoxGeometry) -> f64 {
    let mut r = r_c.min(0.45 * geometry.side);
    if c_el > 0.0 {
        r = r.min(0.45 * wigner_seitz_radius(c_el, geometry.lattice_constant));
    }
    r
}

/// Remove nuclei lying within `r_c` (minimum image) of any electron.
/// Returns the number of removed nuclei.
pub fn apply_frozen_core(real: &mut SpinRealization, r_c: f64) -> Result<usize> {
    if !(r_c >= 0.0) {
        return Err(invalid(format!("frozen-core radius must be non-negative, got {r_c}")));
    }
    if r_c >= real.geometry.side / 2.0 {
        return Err(invalid(format!(
            "frozen-core radius {r_c} exceeds half the box side {}; the core would cover the box",
            real.geometry.side / 2.0
        )));
    }
    if real.electrons.is_empty() || r_c == 0.0 {
        return Ok(0);
    }
    let geometry = real.geometry;
    let electrons = real.electrons.clone();
    let r2 = r_c * r_c;
    let before = real.nuclei.len();
    real.nuclei.retain(|&n| {
        electrons.iter().all(|&e| {
            let d = geometry.min_image(n, e);
            d[0] * d[0] + d[1] * d[1] + d[2] * d[2] >= r2
        })
    });
    Ok(before - real.nuclei.len())
}

/// Serializable mirror of a realization (positions rounded to 6 significant
/// digits) for the on-disk JSON format.
#[derive(Serialize, Deserialize)]
pub struct RealizationRecord {
    pub seed: RealizationSeed,
    pub side_length: f64,
    pub lattice_constant: f64,
    pub nuclei: Vec<[f64; 3]>,
    pub electrons: Vec<[f64; 3]>,
}

/// Round to `digits` significant digits (used for compact JSON output).
pub fn round_sig(x: f64, digits: i32) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let scale = digits - 1 - x.abs().log10().floor() as i32;
    let factor = 10f64.powi(scale);
    (x * factor).round() / factor
}

impl RealizationRecord {
    pub fn from_realization(real: &SpinRealization) -> Self {
        let r6 = |p: &[f64; 3]| [round_sig(p[0], 6), round_sig(p[1], 6), round_sig(p[2], 6)];
        RealizationRecord {
            seed: real.seed,
            side_length: round_sig(real.geometry.side, 6),
            lattice_constant: real.geometry.lattice_constant,
            nuclei: real.nuclei.iter().map(r6).collect(),
            electrons: real.electrons.iter().map(r6).collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn site_count_is_eight_per_cell() {
        for cells in [1usize, 2, 5] {
            let g = BoxGeometry::new(cells, LATTICE_CONSTANT).unwrap();
            assert_eq!(build_diamond_sites(&g).len(), 8 * cells * cells * cells);
        }
        // Default production box: 25 cells, 125,000 sites, side 89.175 A.
        let g = BoxGeometry::new(25, LATTICE_CONSTANT).unwrap();
        assert_eq!(g.n_sites(), 125_000);
        assert!((g.side - 89.175).abs() < 1e-9);
    }

    #[test]
    fn nearest_neighbour_distance_is_bond_length() {
        // Diamond bond length is a * sqrt(3) / 4 = 1.5445 A.
        let g = BoxGeometry::new(3, LATTICE_CONSTANT).unwrap();
        let sites = build_diamond_sites(&g);
        let mut dmin = f64::INFINITY;
        let p = sites[0];
        for &q in &sites[1..] {
            dmin = dmin.min(g.distance(p, q));
        }
        assert!((dmin - LATTICE_CONSTANT * 3f64.sqrt() / 4.0).abs() < 1e-9);
    }

    #[test]
    fn min_image_is_antisymmetric_and_translation_invariant() {
        let g = BoxGeometry::new(4, LATTICE_CONSTANT).unwrap();
        let mut state = 0x9e3779b97f4a7c15u64;
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64
        };
        for _ in 0..2000 {
            let p = [next() * g.side, next() * g.side, next() * g.side];
            let q = [next() * g.side, next() * g.side, next() * g.side];
            let d_pq = g.min_image(p, q);
            let d_qp = g.min_image(q, p);
            for c in 0..3 {
                assert!(d_pq[c] >= -g.side / 2.0 && d_pq[c] < g.side / 2.0);
                // Antisymmetric up to the half-open boundary convention.
                if d_pq[c].abs() < g.side / 2.0 - 1e-9 {
                    assert!((d_pq[c] + d_qp[c]).abs() < 1e-9);
                }
            }
            // Shifting both points by a lattice vector changes nothing.
            let shift = [g.side, -2.0 * g.side, g.side];
            let p2 = [p[0] + shift[0], p[1] + shift[1], p[2] + shift[2]];
            let q2 = [q[0] + shift[0], q[1] + shift[1], q[2] + shift[2]];
            let d2 = g.min_image(p2, q2);
            for c in 0..3 {
                assert!((d_pq[c] - d2[c]).abs() < 1e-8);
            }
            // Any minimum-image distance is bounded by side * sqrt(3) / 2.
            let r = g.distance(p, q);
            assert!(r <= g.side * 3f64.sqrt() / 2.0 + 1e-9);
        }
    }

    #[test]
    fn populate_matches_binomial_statistics() {
        // Sample mean counts over many seeds against binomial expectation,
        // within 3 standard errors.
        let g = BoxGeometry::new(10, LATTICE_CONSTANT).unwrap();
        let sites = build_diamond_sites(&g);
        let n = g.n_sites() as f64;
        let conc = Concentrations { c_nuc: 0.011, c_el: 30e-6 };
        let trials = 600usize;
        let mut nuc_sum = 0.0;
        let mut el_sum = 0.0;
        for i in 0..trials {
            let r = populate(&sites, g, conc, RealizationSeed { master: 42, index: i as u64 })
                .unwrap();
            nuc_sum += r.nuclei.len() as f64;
            el_sum += r.electrons.len() as f64;
        }
        let nuc_mean = nuc_sum / trials as f64;
        let el_mean = el_sum / trials as f64;
        let p_nuc = conc.c_nuc * (1.0 - conc.c_el);
        let nuc_expect = p_nuc * n;
        let el_expect = conc.c_el * n;
        let nuc_se = (n * p_nuc * (1.0 - p_nuc) / trials as f64).sqrt();
        let el_se = (n * conc.c_el * (1.0 - conc.c_el) / trials as f64).sqrt();
        assert!(
            (nuc_mean - nuc_expect).abs() < 3.0 * nuc_se,
            "nucleus count {nuc_mean} vs expected {nuc_expect} +- {nuc_se}"
        );
        assert!(
            (el_mean - el_expect).abs() < 3.0 * el_se,
            "electron count {el_mean} vs expected {el_expect} +- {el_se}"
        );
    }

    #[test]
    fn populate_is_deterministic_per_seed() {
        let g = BoxGeometry::new(6, LATTICE_CONSTANT).unwrap();
        let sites = build_diamond_sites(&g);
        let conc = Concentrations { c_nuc: 0.05, c_el: 100e-6 };
        let s = RealizationSeed { master: 7, index: 3 };
        let a = populate(&sites, g, conc, s).unwrap();
        let b = populate(&sites, g, conc, s).unwrap();
        assert_eq!(a.nuclei, b.nuclei);
        assert_eq!(a.electrons, b.electrons);
        // A different stream gives a different draw.
        let c = populate(&sites, g, conc, RealizationSeed { master: 7, index: 4 }).unwrap();
        assert_ne!(a.nuclei, c.nuclei);
    }

    #[test]
    fn frozen_core_radius_matches_closed_form() {
        // At full electron polarization the radius is
        // a * (gamma_e / gamma_n)^(1/4); gamma_e/gamma_n = 2616.9.
        use crate::dipolar::{GAMMA_C, GAMMA_E};
        let ratio: f64 = GAMMA_E / GAMMA_C;
        assert!((ratio - 2616.9).abs() < 1.0);
        // Simulate P_e -> 1 by taking T -> 0.
        let rc_full = frozen_core_radius(4.5, 9.4, 1e-9);
        assert!((rc_full - 4.5 * ratio.powf(0.25)).abs() < 1e-9);
        // Production conditions: 9.4 T, 100 K, 4.5 A spacing -> about 16 A.
        let pe = electron_polarization(9.4, 100.0);
        assert!((pe - 0.063).abs() < 2e-3, "P_e = {pe}");
        let rc = frozen_core_radius(4.5, 9.4, 100.0);
        assert!((rc - 16.0).abs() < 0.5, "r_c = {rc}");
    }

    #[test]
    fn frozen_core_removes_expected_fraction() {
        // At 30 ppm and r_c = 16 A the exclusion spheres cover
        // 1 - exp(-rho_e * V_c) ~ 8.7% of the box, so about 9% of nuclei go.
        let g = BoxGeometry::new(25, LATTICE_CONSTANT).unwrap();
        let sites = build_diamond_sites(&g);
        let conc = Concentrations { c_nuc: 0.011, c_el: 30e-6 };
        let mut removed_frac = 0.0;
        let trials = 40;
        for i in 0..trials {
            let mut r =
                populate(&sites, g, conc, RealizationSeed { master: 11, index: i }).unwrap();
            let before = r.nuclei.len();
            let removed = apply_frozen_core(&mut r, 16.0).unwrap();
            removed_frac += removed as f64 / before as f64;
        }
        removed_frac /= trials as f64;
        assert!(
            (removed_frac - 0.087).abs() < 0.03,
            "removed fraction {removed_frac} out of expected ~0.087"
        );
    }

    #[test]
    fn core_radius_cap_tracks_electron_spacing() {
        let g = BoxGeometry::new(25, LATTICE_CONSTANT).unwrap();
        // At 30 ppm the Wigner-Seitz radius is ~35.6 A, so the production
        // radius of ~16 A passes through nearly untouched.
        let rws = wigner_seitz_radius(30e-6, LATTICE_CONSTANT);
        assert!((rws - 35.6).abs() < 0.2, "r_ws = {rws}");
        let eff = effective_core_radius(16.13, 30e-6, &g);
        assert!(eff <= 16.13 && eff > 15.9, "capped radius {eff}");
        // At 1000 ppm electrons sit ~11 A apart; the cap shrinks the core
        // so nuclei survive between them.
        let eff_dense = effective_core_radius(16.13, 1e-3, &g);
        assert!((eff_dense - 0.45 * wigner_seitz_radius(1e-3, LATTICE_CONSTANT)).abs() < 1e-12);
        assert!(eff_dense < 5.1);
        // Small boxes are protected by the side cap.
        let small = BoxGeometry::new(2, LATTICE_CONSTANT).unwrap();
        assert!(effective_core_radius(16.13, 0.0, &small) <= 0.45 * small.side);
    }

    #[test]
    fn frozen_core_rejects_core_covering_box() {
        let g = BoxGeometry::new(3, LATTICE_CONSTANT).unwrap();
        let sites = build_diamond_sites(&g);
        let conc = Concentrations { c_nuc: 0.05, c_el: 1e-3 };
        let mut r = populate(&sites, g, conc, RealizationSeed { master: 1, index: 0 }).unwrap();
        assert!(apply_frozen_core(&mut r, g.side / 2.0).is_err());
    }

    #[test]
    fn round_sig_truncates_to_significant_digits() {
        assert_eq!(round_sig(123.456789, 6), 123.457);
        assert_eq!(round_sig(-0.0012345678, 6), -0.00123457);
        assert_eq!(round_sig(0.0, 6), 0.0);
    }
}
