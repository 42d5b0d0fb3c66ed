//! Relaxation times from simulation. The integrated autocorrelation time
//! of the slowest density mode matches the exact inverse spectral gap where
//! enumeration is possible, then extends the gap's L^2 growth to sizes no
//! eigensolver reaches.

use latgas::disorder::DisorderField;
use latgas::kmc::{cosine_profile, relaxation_time, KmcState};
use latgas::lattice::{Boundary, LatticeGeometry};
use latgas::spectra::kawasaki_gap;
use std::sync::Arc;

fn tau_mean(
    geom: &Arc<LatticeGeometry>,
    n: usize,
    horizon: f64,
    dt: f64,
    seeds: u64,
) -> latgas::Result<f64> {
    let field = DisorderField::zero(geom.n_sites);
    let profile = cosine_profile(geom);
    let mut total = 0.0;
    for seed in 1..=seeds {
        let mut state = KmcState::from_equilibrium(Arc::clone(geom), &field, n, seed)?;
        let r = relaxation_time(&mut state, &profile, horizon, dt)?;
        assert!(!r.inconclusive, "L={}: window never closed", geom.n_sites);
        total += r.tau;
    }
    Ok(total / seeds as f64)
}

fn main() -> latgas::Result<()> {
    println!("segments at half filling, observable = slowest density mode:");
    println!("{:>4} {:>10} {:>10} {:>8}", "L", "tau", "1/gap", "ratio");
    for l in [6usize, 8] {
        let geom = Arc::new(LatticeGeometry::build_box(1, l, Boundary::Free)?);
        let guess = (l * l) as f64 / 19.7;
        let tau = tau_mean(&geom, l / 2, 1000.0 * guess, guess / 20.0, 4)?;
        let gap = kawasaki_gap(&geom, &DisorderField::zero(l), l / 2)?;
        let ratio = tau * gap.gap;
        println!("{l:>4} {tau:>10.4} {:>10.4} {ratio:>8.3}", 1.0 / gap.gap);
        assert!(ratio > 0.5 && ratio < 2.0);
    }

    println!("\ngrowth beyond enumeration:");
    println!("{:>4} {:>12}", "L", "tau");
    let mut pts = Vec::new();
    for l in [8usize, 16, 32] {
        let geom = Arc::new(LatticeGeometry::build_box(1, l, Boundary::Free)?);
        let guess = (l * l) as f64 / 19.7;
        let tau = tau_mean(&geom, l / 2, 1000.0 * guess, guess / 20.0, 4)?;
        println!("{l:>4} {tau:>12.4}");
        pts.push(((l as f64).ln(), tau.ln()));
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    println!("\nlog-log slope = {slope:.3} (diffusive scaling is 2)");
    assert!((slope - 2.0).abs() < 0.4);
    Ok(())
}
