//! Scratch probe for acceptance operating points (deleted before release).

use spinnet::bath::LorentzianBath;
use spinnet::engine::{ensemble_decay, log_time_grid, EnsembleParams};
use spinnet::fitkit::FitChannels;
use spinnet::lattice::{BoxGeometry, Concentrations, LATTICE_CONSTANT};
use spinnet::linalg::pearson;
use spinnet::scans::{
    cell_core_radius, crossing_time, default_power_grid, landscape_cell, laser_scan,
    ordered_vs_random, regime_preset, OrderedParams, RegimeLabel,
};
use spinnet::spectral::{fit_curve, slowest_mode_stats};

fn main() {
    let spec = regime_preset(RegimeLabel::I).unwrap();
    let drive = spec.analysis().unwrap();

    // --- criterion 5: slowest rate vs 2 R_d across electron concentrations
    let t0 = std::time::Instant::now();
    let times = log_time_grid(1e-2, 600.0, 120);
    for &ppm in &[300.0, 600.0, 1000.0] {
        let geometry = BoxGeometry::new(12, LATTICE_CONSTANT).unwrap();
        let conc = Concentrations { c_nuc: 0.011, c_el: ppm * 1e-6 };
        let params = EnsembleParams {
            geometry,
            conc,
            core_radius: cell_core_radius(conc.c_nuc, conc.c_el, &geometry),
            eta: spec.eta,
            bath: LorentzianBath::new(2e-3).unwrap(),
            t2: 2.5e-5,
            n_configs: 400,
            master_seed: 21,
            label: format!("{ppm} ppm"),
        };
        let stats = slowest_mode_stats(&params, &drive, true).unwrap();
        let curve = ensemble_decay(&params, &drive, &times).unwrap();
        let fit = fit_curve(&curve, FitChannels::Both).unwrap();
        let ratio = stats.mean / (2.0 * fit.r_d.max(1e-300));
        println!(
            "C5 {ppm} ppm: lambda0 {:.4} +- {:.4}, R_d {:.4} (R_p {:.4}, {:?}), ratio {:.4}, used {} empty {}",
            stats.mean, stats.stderr, fit.r_d, fit.r_p, fit.boundary, ratio, stats.n_used, stats.n_empty
        );
    }
    println!("C5 block: {:.1} s", t0.elapsed().as_secs_f64());

    // --- criterion 10: fraction of 50 paired trials with random slower
    let t0 = std::time::Instant::now();
    for &cells in &[10usize, 12] {
        for &seed in &[4242u64, 7] {
            let params = OrderedParams {
                cells,
                c_nuc: 0.011,
                n_electrons: 8,
                n_pairs: 50,
                master_seed: seed,
                eta: spec.eta,
                bath: LorentzianBath::new(2e-3).unwrap(),
                t2: 2.5e-5,
                arm_salt: 0,
            };
            let cmp = ordered_vs_random(&params, &drive, &times).unwrap();
            println!(
                "C10 {cells} cells seed {seed}: random slower {}/{}",
                cmp.n_random_slower,
                cmp.trials.len()
            );
        }
    }
    println!("C10 block: {:.1} s", t0.elapsed().as_secs_f64());

    // --- criterion 9: regime III mono rate rising with power
    let t0 = std::time::Instant::now();
    let spec_iii = regime_preset(RegimeLabel::III).unwrap();
    let map = spinnet::bath::LaserMap::calibrated_default();
    let geometry = BoxGeometry::new(10, LATTICE_CONSTANT).unwrap();
    let conc = Concentrations { c_nuc: 0.011, c_el: 300e-6 };
    let base = EnsembleParams {
        geometry,
        conc,
        core_radius: cell_core_radius(conc.c_nuc, conc.c_el, &geometry),
        eta: spec_iii.eta,
        bath: LorentzianBath::new(2e-3).unwrap(),
        t2: 2.5e-5,
        n_configs: 8,
        master_seed: 3,
        label: "iii".into(),
    };
    let scan = laser_scan(&spec_iii, &map, &default_power_grid(), &base, &times, 3).unwrap();
    let x: Vec<f64> = scan.points.iter().map(|p| p.power).collect();
    let y: Vec<f64> = scan.points.iter().map(|p| p.r_d).collect();
    println!("C9 III R_d: {:?} pearson {:.4}", y, pearson(&x, &y).unwrap());
    println!("C9 block: {:.1} s", t0.elapsed().as_secs_f64());

    // --- criterion 7A: cardinal point (0.4%, 3000 ppm)
    let t0 = std::time::Instant::now();
    let geometry = BoxGeometry::new(12, LATTICE_CONSTANT).unwrap();
    let conc = Concentrations { c_nuc: 0.004, c_el: 3000e-6 };
    let base = EnsembleParams {
        geometry,
        conc,
        core_radius: cell_core_radius(conc.c_nuc, conc.c_el, &geometry),
        eta: spec.eta,
        bath: LorentzianBath::new(2e-3).unwrap(),
        t2: 2.5e-5,
        n_configs: 100,
        master_seed: 7,
        label: "cardinal A".into(),
    };
    let times_a = log_time_grid(1e-3, 1.0, 120);
    let (cell, detail) = landscape_cell(&spec, 0.004, 3000.0, &base, &times_a).unwrap();
    let (curve, fit) = detail.unwrap();
    let raw: Vec<f64> = curve.values.iter().map(|v| v * curve.initial_mean).collect();
    let t1e = crossing_time(&curve.times, &raw, (-1.0f64).exp());
    let pure = fit_curve(&curve, FitChannels::StretchedOnly).unwrap();
    println!(
        "C7A: tag {:?}, t1e {:?}, rrms free {:.6} pure {:.6} ratio {:.4}",
        cell.tag,
        t1e,
        fit.rrms,
        pure.rrms,
        pure.rrms / fit.rrms.max(1e-300)
    );
    println!("C7A block: {:.1} s", t0.elapsed().as_secs_f64());
}
