//! Secular dipole-dipole couplings and physical constants.
//!
//! Couplings are angular frequencies (rad/s). For two like spins separated
//! by `r` at polar angle `theta` from the external field,
//!
//! ```text
//! d = -(mu0 / 4 pi) * (hbar gamma^2 / r^3) * (3 cos^2 theta - 1) / 2
//! ```
//!
//! which is the flip-flop matrix element of the secular dipolar Hamiltonian.
//! Electron-nucleus couplings use the same geometry with `gamma_e * gamma_n`
//! and no factor 1/2, since only the electron's Ising field on the nucleus
//! matters there.

use crate::lattice::{BoxGeometry, SpinRealization};

/// Reduced Planck constant, J s.
pub const HBAR: f64 = 1.054_571_817e-34;
/// Boltzmann constant, J/K.
pub const KB: f64 = 1.380_649e-23;
/// mu0 / 4 pi in SI (T^2 m^3 / J).
pub const MU0_OVER_4PI: f64 = 1e-7;
/// 13C gyromagnetic ratio, rad/s/T.
pub const GAMMA_C: f64 = 2.0 * std::f64::consts::PI * 10.7084e6;
/// Electron gyromagnetic ratio magnitude, rad/s/T.
pub const GAMMA_E: f64 = 2.0 * std::f64::consts::PI * 28.024e9;

/// Angstrom in meters.
pub const ANGSTROM: f64 = 1e-10;

/// Secular flip-flop coupling between two nuclei (rad/s) for displacement
/// `d` in angstrom. The field is along +z.
#[inline]
pub fn nn_coupling(d: [f64; 3]) -> f64 {
    let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
    let r = r2.sqrt();
    let cos2 = d[2] * d[2] / r2;
    let r_m = r * ANGSTROM;
    -MU0_OVER_4PI * HBAR * GAMMA_C * GAMMA_C / (r_m * r_m * r_m) * 0.5 * (3.0 * cos2 - 1.0)
}

/// Ising (hyperfine-like) coupling between an electron and a nucleus
/// (rad/s) for displacement `d` in angstrom.
#[inline]
pub fn ne_coupling(d: [f64; 3]) -> f64 {
    let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
    let r = r2.sqrt();
    let cos2 = d[2] * d[2] / r2;
    let r_m = r * ANGSTROM;
    -MU0_OVER_4PI * HBAR * GAMMA_E * GAMMA_C / (r_m * r_m * r_m) * 0.5 * (3.0 * cos2 - 1.0)
}

/// Dense table of pairwise couplings for one realization.
///
/// `nn[i * n + j]` is the nucleus-nucleus flip-flop coupling (rad/s),
/// `ne[i]` is the summed squared electron field on nucleus `i` (rad^2/s^2),
/// used by the relaxation rates. Both use minimum-image displacements.
pub struct CouplingTable {
    pub n: usize,
    /// Row-major symmetric n x n matrix of nucleus-nucleus couplings; the
    /// diagonal is zero.
    pub nn: Vec<f64>,
    /// Per-nucleus sum over electrons of the squared coupling.
    pub ne_sq: Vec<f64>,
}

impl CouplingTable {
    pub fn build(real: &SpinRealization) -> Self {
        let n = real.nuclei.len();
        let g = real.geometry;
        let mut nn = vec![0.0; n * n];
        for i in 0..n {
            for j in (i + 1)..n {
                let d = g.min_image(real.nuclei[i], real.nuclei[j]);
                let c = nn_coupling(d);
                nn[i * n + j] = c;
                nn[j * n + i] = c;
            }
        }
        let ne_sq = electron_field_sq(&real.nuclei, &real.electrons, &g);
        CouplingTable { n, nn, ne_sq }
    }
}

/// Sum over electrons of the squared electron-nucleus coupling at each
/// nucleus (rad^2/s^2).
pub fn electron_field_sq(
    nuclei: &[[f64; 3]],
    electrons: &[[f64; 3]],
    geometry: &BoxGeometry,
) -> Vec<f64> {
    nuclei
        .iter()
        .map(|&p| {
            electrons
                .iter()
                .map(|&e| {
                    let h = ne_coupling(geometry.min_image(p, e));
                    h * h
                })
                .sum()
        })
        .collect()
}
