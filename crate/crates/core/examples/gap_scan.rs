//! Exchange-dynamics spectral gaps across system sizes. The scaled gap
//! gap * L^2 settles into a narrow band, and bounded disorder widens the
//! band by at most e^{2K}.

use latgas::disorder::{generate_iid, DisorderField};
use latgas::lattice::{Boundary, LatticeGeometry};
use latgas::spectra::kawasaki_gap;
use std::sync::Arc;

fn main() -> latgas::Result<()> {
    println!("homogeneous field, half filling:");
    println!(
        "{:>4} {:>3} {:>14} {:>12} {:>10}",
        "L", "N", "gap", "gap*L^2", "method"
    );
    let mut scaled = Vec::new();
    for l in 2..=12 {
        let geom = Arc::new(LatticeGeometry::build_box(1, l, Boundary::Free)?);
        let n = l / 2;
        let r = kawasaki_gap(&geom, &DisorderField::zero(l), n)?;
        let s = r.gap * (l * l) as f64;
        println!(
            "{l:>4} {n:>3} {:>14.10} {:>12.7} {:>10}",
            r.gap,
            s,
            r.method.as_str()
        );
        if l >= 4 {
            scaled.push(s);
        }
    }

    // Two sites, one particle: both directed moves fire at rate 2, so the
    // unique nonzero eigenvalue is 4.
    let geom = Arc::new(LatticeGeometry::build_box(1, 2, Boundary::Free)?);
    let two = kawasaki_gap(&geom, &DisorderField::zero(2), 1)?;
    assert!((two.gap - 4.0).abs() < 1e-10);

    let lo = scaled.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = scaled.iter().copied().fold(0.0f64, f64::max);
    println!(
        "band over L = 4..12: max/min = {:.4} (expect <= 3 at K = 0)\n",
        hi / lo
    );

    let k = 1.0;
    println!("disordered fields, K = {k}:");
    println!("{:>4} {:>5} {:>14} {:>12}", "L", "seed", "gap", "gap*L^2");
    let mut dis = Vec::new();
    for l in [6usize, 8, 10] {
        let geom = Arc::new(LatticeGeometry::build_box(1, l, Boundary::Free)?);
        for seed in 1..=5 {
            let field = generate_iid(&geom, k, seed)?;
            let r = kawasaki_gap(&geom, &field, l / 2)?;
            let s = r.gap * (l * l) as f64;
            println!("{l:>4} {seed:>5} {:>14.10} {:>12.7}", r.gap, s);
            dis.push(s);
        }
    }
    let lo = dis.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = dis.iter().copied().fold(0.0f64, f64::max);
    let limit = 3.0 * (2.0 * k).exp();
    println!(
        "band over disordered instances: max/min = {:.4} (expect <= 3 e^{{2K}} = {:.2})",
        hi / lo,
        limit
    );
    assert!(hi / lo <= limit);
    Ok(())
}
