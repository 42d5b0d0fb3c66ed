//! The weighted-chain certificate at zero field: the exchange form between
//! the endpoints of a k-site chain is dominated by the weighted sum of its
//! nearest-neighbour bond forms, sum_x rho_x^{-1} D_bond(x), whenever the
//! weights are subprobabilities. Numerically this is the largest eigenvalue
//! of a matrix pencil, which must stay at or below 1.

use latgas::spectra::certify_homogeneous_exchange;

fn uniform(bonds: usize) -> Vec<f64> {
    vec![1.0 / bonds as f64; bonds]
}

// Weight mass concentrated near one end; the certificate does not care.
fn lopsided(bonds: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..bonds).map(|i| 1.0 / (i + 1) as f64).collect();
    let s: f64 = raw.iter().sum();
    raw.iter().map(|v| v / s).collect()
}

fn main() -> latgas::Result<()> {
    println!(
        "{:>3} {:>3} {:>10} {:>22} {:>22}",
        "k", "N", "weights", "lambda_max", "1 - lambda_max"
    );
    let mut worst: f64 = 0.0;
    for k in 2..=8 {
        for (name, rho) in [("uniform", uniform(k - 1)), ("lopsided", lopsided(k - 1))] {
            for n in 1..k {
                let r = certify_homogeneous_exchange(k, n, &rho)?;
                assert!(r.pass, "k={k} N={n} {name}: ratio {}", r.lambda_max);
                worst = worst.max(r.lambda_max);
                if n == k / 2 {
                    println!(
                        "{k:>3} {n:>3} {name:>10} {:>22.16} {:>22.3e}",
                        r.lambda_max,
                        1.0 - r.lambda_max
                    );
                }
            }
        }
    }
    println!("\nworst ratio over all sectors and weights: {worst:.12}");

    // Two sites: the endpoint exchange IS the single bond, so the pencil
    // ratio is exactly 1 and the bound is tight.
    let r = certify_homogeneous_exchange(2, 1, &[1.0])?;
    println!("k = 2 tightness: lambda_max = {:.15}", r.lambda_max);
    assert!((r.lambda_max - 1.0).abs() <= 1e-9);
    Ok(())
}
