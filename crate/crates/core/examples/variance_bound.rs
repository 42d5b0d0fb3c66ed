//! The all-pairs exchange constant. For the dynamics where any two sites
//! may swap contents, the variance of an observable is controlled by
//! C = |sites| / gap times its Dirichlet form. At zero field C is exactly
//! 1/2 at every size; bounded disorder moves it, but it stays flat in L,
//! which is what makes the comparison useful.

use latgas::disorder::generate_iid;
use latgas::lattice::{Boundary, LatticeGeometry};
use latgas::spectra::{bl_gap, bl_variance_constant};

fn main() -> latgas::Result<()> {
    println!("zero field, half filling:");
    println!("{:>4} {:>12} {:>12}", "m", "gap", "C = m/gap");
    for m in [4usize, 6, 8, 10, 12] {
        let alpha = vec![0.0; m];
        let gap = bl_gap(&alpha, m / 2)?;
        let c = bl_variance_constant(&alpha, m / 2)?;
        println!("{m:>4} {:>12.6} {:>12.9}", gap.gap, c);
        // All-pairs exchange at zero field has gap exactly 2m.
        assert!((gap.gap - 2.0 * m as f64).abs() < 1e-8);
        assert!((c - 0.5).abs() < 1e-9);
    }

    let k = 1.0;
    println!("\ndisordered fields, K = {k}, 10 seeds per size:");
    println!(
        "{:>4} {:>12} {:>12} {:>12}",
        "m", "min C", "mean C", "max C"
    );
    let mut per_size_max = Vec::new();
    for m in [4usize, 6, 8, 10, 12] {
        let geom = LatticeGeometry::build_box(1, m, Boundary::Free)?;
        let mut cs = Vec::new();
        for seed in 1..=10 {
            let field = generate_iid(&geom, k, seed)?;
            cs.push(bl_variance_constant(&field.values, m / 2)?);
        }
        let lo = cs.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = cs.iter().copied().fold(0.0f64, f64::max);
        let mean: f64 = cs.iter().sum::<f64>() / cs.len() as f64;
        println!("{m:>4} {lo:>12.6} {mean:>12.6} {hi:>12.6}");
        per_size_max.push(hi);
    }
    let first = per_size_max[0];
    let last = *per_size_max.last().unwrap();
    println!(
        "\nper-size max: first {first:.5}, last {last:.5}, ratio {:.4} (no growth in L)",
        last / first
    );
    assert!(last <= 1.2 * first);
    Ok(())
}
