//! Product and fixed-particle-number Bernoulli measures on a site set:
//! partition functions by dynamic programming in log space, occupation
//! probabilities, exact sequential sampling, and moments of observables.

use crate::configspace::{ConfigSpace, Configuration};
use crate::disorder::DisorderField;
use crate::error::{Error, Result};
use rand::Rng;

/// ln(e^a + e^b) with max shift; tolerates -inf operands.
pub fn logaddexp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

fn ln_binomial(m: usize, n: usize) -> f64 {
    if n > m {
        return f64::NEG_INFINITY;
    }
    let n = n.min(m - n);
    let mut s = 0.0;
    for i in 1..=n {
        s += ((m - n + i) as f64).ln() - (i as f64).ln();
    }
    s
}

/// Unconditioned product measure: site x occupied with probability
/// p_x = e^{alpha_x} / (1 + e^{alpha_x}), independently.
#[derive(Debug, Clone)]
pub struct GrandMeasure {
    pub alpha: Vec<f64>,
    pub p: Vec<f64>,
    /// ln of the normalizer prod_x (1 + e^{alpha_x}).
    pub log_z: f64,
}

impl GrandMeasure {
    pub fn new(alpha: &[f64]) -> Self {
        let p: Vec<f64> = alpha
            .iter()
            .map(|&a| {
                let e = a.exp();
                e / (1.0 + e)
            })
            .collect();
        let log_z = alpha.iter().map(|&a| logaddexp(0.0, a)).sum();
        GrandMeasure {
            alpha: alpha.to_vec(),
            p,
            log_z,
        }
    }

    pub fn from_field(field: &DisorderField) -> Self {
        Self::new(&field.values)
    }

    pub fn n_sites(&self) -> usize {
        self.alpha.len()
    }

    pub fn log_prob(&self, cfg: &Configuration) -> f64 {
        let s: f64 = cfg.sites().map(|x| self.alpha[x]).sum();
        s - self.log_z
    }

    pub fn prob(&self, cfg: &Configuration) -> f64 {
        self.log_prob(cfg).exp()
    }
}

/// Product measure conditioned on exactly `n` particles. Holds prefix and
/// suffix log-partition tables ln Z over site ranges, from which weights,
/// marginals, and sequential samples all come.
#[derive(Debug, Clone)]
pub struct CanonicalMeasure {
    pub alpha: Vec<f64>,
    pub n: usize,
    /// ln Z over all sites with n particles.
    pub log_z: f64,
    /// prefix[m][j] = ln Z over sites 0..m with j particles.
    prefix: Vec<Vec<f64>>,
    /// suffix[m][j] = ln Z over sites m.. with j particles.
    suffix: Vec<Vec<f64>>,
}

impl CanonicalMeasure {
    pub fn new(alpha: &[f64], n: usize) -> Result<Self> {
        let m = alpha.len();
        if n > m {
            return Err(Error::InvalidArgument(format!(
                "particle number {n} exceeds {m} sites"
            )));
        }
        let cap = n + 1;
        let neg = f64::NEG_INFINITY;
        let mut prefix = vec![vec![neg; cap]; m + 1];
        prefix[0][0] = 0.0;
        for x in 0..m {
            for j in 0..cap {
                let stay = prefix[x][j];
                let take = if j > 0 {
                    prefix[x][j - 1] + alpha[x]
                } else {
                    neg
                };
                prefix[x + 1][j] = logaddexp(stay, take);
            }
        }
        let mut suffix = vec![vec![neg; cap]; m + 1];
        suffix[m][0] = 0.0;
        for x in (0..m).rev() {
            for j in 0..cap {
                let stay = suffix[x + 1][j];
                let take = if j > 0 {
                    suffix[x + 1][j - 1] + alpha[x]
                } else {
                    neg
                };
                suffix[x][j] = logaddexp(stay, take);
            }
        }
        let log_z = prefix[m][n];
        Ok(CanonicalMeasure {
            alpha: alpha.to_vec(),
            n,
            log_z,
            prefix,
            suffix,
        })
    }

    pub fn from_field(field: &DisorderField, n: usize) -> Result<Self> {
        Self::new(&field.values, n)
    }

    pub fn n_sites(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_degenerate(&self) -> bool {
        self.n == 0 || self.n == self.n_sites()
    }

    /// ln Z restricted to all sites except `x`, with `j` particles.
    fn log_z_without(&self, x: usize, j: usize) -> f64 {
        let mut acc = f64::NEG_INFINITY;
        for a in 0..=j.min(x) {
            acc = logaddexp(acc, self.prefix[x][a] + self.suffix[x + 1][j - a]);
        }
        acc
    }

    pub fn log_zeta(&self) -> f64 {
        self.log_z - ln_binomial(self.n_sites(), self.n)
    }

    pub fn log_weight(&self, cfg: &Configuration) -> Result<f64> {
        if cfg.popcount() as usize != self.n {
            return Err(Error::ParticleMismatch {
                expected: self.n,
                found: cfg.popcount() as usize,
            });
        }
        let s: f64 = cfg.sites().map(|x| self.alpha[x]).sum();
        Ok(s - self.log_z)
    }

    pub fn weight(&self, cfg: &Configuration) -> Result<f64> {
        Ok(self.log_weight(cfg)?.exp())
    }

    /// Marginal occupation probability at site x under the conditioned
    /// measure: e^{alpha_x} Z_{without x, n-1} / Z_n.
    pub fn occupation_prob(&self, x: usize) -> f64 {
        if self.n == 0 {
            return 0.0;
        }
        if self.n == self.n_sites() {
            return 1.0;
        }
        (self.alpha[x] + self.log_z_without(x, self.n - 1) - self.log_z).exp()
    }

    pub fn occupation_probs(&self) -> Vec<f64> {
        (0..self.n_sites())
            .map(|x| self.occupation_prob(x))
            .collect()
    }

    /// Sequential exact sample: march left to right, occupying site x with
    /// the conditional probability e^{alpha_x} Z_{x+1.., r-1} / Z_{x.., r}
    /// for r particles still to place. Output law is exactly this measure.
    pub fn sample_occupancy<R: Rng>(&self, rng: &mut R) -> Vec<u8> {
        let m = self.n_sites();
        let mut occ = vec![0u8; m];
        let mut r = self.n;
        for x in 0..m {
            if r == 0 {
                break;
            }
            if m - x == r {
                for slot in occ.iter_mut().take(m).skip(x) {
                    *slot = 1;
                }
                break;
            }
            let p = (self.alpha[x] + self.suffix[x + 1][r - 1] - self.suffix[x][r]).exp();
            if rng.gen::<f64>() < p {
                occ[x] = 1;
                r -= 1;
            }
        }
        occ
    }

    /// `sample_occupancy` packed into a bit-mask configuration (64 sites max).
    pub fn sample_config<R: Rng>(&self, rng: &mut R) -> Result<Configuration> {
        if self.n_sites() > 64 {
            return Err(Error::InvalidArgument(
                "bit-mask configurations support at most 64 sites; use sample_occupancy".into(),
            ));
        }
        Ok(Configuration::from_bytes(&self.sample_occupancy(rng)))
    }

    pub fn expectation<F>(&self, space: &ConfigSpace, f: F) -> Result<f64>
    where
        F: Fn(&Configuration) -> f64,
    {
        self.check_space(space)?;
        let mut acc = 0.0;
        for cfg in space.enumerate() {
            acc += self.weight(&cfg)? * f(&cfg);
        }
        Ok(acc)
    }

    pub fn covariance<F, G>(&self, space: &ConfigSpace, f: F, g: G) -> Result<f64>
    where
        F: Fn(&Configuration) -> f64,
        G: Fn(&Configuration) -> f64,
    {
        self.check_space(space)?;
        let (mut ef, mut eg, mut efg) = (0.0, 0.0, 0.0);
        for cfg in space.enumerate() {
            let w = self.weight(&cfg)?;
            let fv = f(&cfg);
            let gv = g(&cfg);
            ef += w * fv;
            eg += w * gv;
            efg += w * fv * gv;
        }
        Ok(efg - ef * eg)
    }

    pub fn variance<F>(&self, space: &ConfigSpace, f: F) -> Result<f64>
    where
        F: Fn(&Configuration) -> f64,
    {
        self.covariance(space, &f, &f)
    }

    fn check_space(&self, space: &ConfigSpace) -> Result<()> {
        if space.n_sites() != self.n_sites() || space.n != self.n {
            return Err(Error::InvalidArgument(format!(
                "space ({} sites, {} particles) does not match measure ({}, {})",
                space.n_sites(),
                space.n,
                self.n_sites(),
                self.n
            )));
        }
        Ok(())
    }
}

/// ln Z and ln zeta for `n` particles, rolling-row DP with O(n) memory.
/// zeta is Z divided by the number of n-subsets.
pub fn partition_dp(alpha: &[f64], n: usize) -> Result<(f64, f64)> {
    let m = alpha.len();
    if n > m {
        return Err(Error::InvalidArgument(format!(
            "particle number {n} exceeds {m} sites"
        )));
    }
    let neg = f64::NEG_INFINITY;
    let mut row = vec![neg; n + 1];
    row[0] = 0.0;
    for &a in alpha {
        for j in (1..=n).rev() {
            row[j] = logaddexp(row[j], row[j - 1] + a);
        }
    }
    let log_z = row[n];
    Ok((log_z, log_z - ln_binomial(m, n)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::configspace::binomial;
    use crate::lattice::{Boundary, LatticeGeometry};
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;
    use std::sync::Arc;

    fn space(m: usize, n: usize) -> ConfigSpace {
        let g = Arc::new(LatticeGeometry::build_box(1, m, Boundary::Free).unwrap());
        ConfigSpace::new(g, n).unwrap()
    }

    fn random_alpha(m: usize, k: f64, seed: u64) -> Vec<f64> {
        let g = LatticeGeometry::build_box(1, m, Boundary::Free).unwrap();
        crate::disorder::generate_iid(&g, k, seed).unwrap().values
    }

    /// Brute-force ln Z by subset enumeration.
    fn enum_log_z(alpha: &[f64], n: usize) -> f64 {
        let sp = space(alpha.len(), n);
        let mut acc = f64::NEG_INFINITY;
        for cfg in sp.enumerate() {
            acc = logaddexp(acc, cfg.sites().map(|x| alpha[x]).sum());
        }
        acc
    }

    #[test]
    fn empty_sector_partition() {
        let (log_z, log_zeta) = partition_dp(&[0.3, -0.7, 1.1], 0).unwrap();
        assert_eq!(log_z, 0.0);
        assert_eq!(log_zeta, 0.0);
    }

    #[test]
    fn constant_field_partition() {
        // Z = C(m,n) e^{c n}.
        let c = 0.37;
        let (log_z, log_zeta) = partition_dp(&[c; 7], 3).unwrap();
        let expect = (binomial(7, 3) as f64).ln() + 3.0 * c;
        assert!((log_z - expect).abs() < 1e-12);
        assert!((log_zeta - 3.0 * c).abs() < 1e-12);
    }

    #[test]
    fn dp_matches_enumeration() {
        for seed in 0..10 {
            let alpha = random_alpha(10, 1.0, seed);
            for n in 0..=10 {
                let (log_z, _) = partition_dp(&alpha, n).unwrap();
                let exact = enum_log_z(&alpha, n);
                assert!(
                    (log_z - exact).abs() <= 1e-12 * exact.abs().max(1.0),
                    "n={n} dp={log_z} enum={exact}"
                );
            }
        }
    }

    #[test]
    fn shuffled_site_order_same_partition() {
        let alpha = random_alpha(9, 1.0, 5);
        let mut shuffled = alpha.clone();
        shuffled.reverse();
        shuffled.swap(0, 4);
        let (a, _) = partition_dp(&alpha, 4).unwrap();
        let (b, _) = partition_dp(&shuffled, 4).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn no_overflow_large_system() {
        let alpha = vec![5.0; 10_000];
        let (log_z, log_zeta) = partition_dp(&alpha, 5_000).unwrap();
        assert!(log_z.is_finite());
        assert!((log_zeta - 25_000.0).abs() < 1e-6 * 25_000.0);
    }

    #[test]
    fn two_site_weights_by_hand() {
        // alpha = (ln 2, 0), one particle: Z = 2 + 1, weights 2/3 and 1/3.
        let mu = CanonicalMeasure::new(&[2.0f64.ln(), 0.0], 1).unwrap();
        let sp = space(2, 1);
        let w0 = mu.weight(&Configuration::new(0b01, 2)).unwrap();
        let w1 = mu.weight(&Configuration::new(0b10, 2)).unwrap();
        assert!((w0 - 2.0 / 3.0).abs() < 1e-15);
        assert!((w1 - 1.0 / 3.0).abs() < 1e-15);
        let total: f64 = sp.enumerate().map(|c| mu.weight(&c).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn uniform_weights_at_zero_field() {
        let mu = CanonicalMeasure::new(&[0.0; 6], 3).unwrap();
        let sp = space(6, 3);
        for cfg in sp.enumerate() {
            assert!((mu.weight(&cfg).unwrap() - 1.0 / 20.0).abs() < 1e-15);
        }
    }

    #[test]
    fn weight_rejects_wrong_count() {
        let mu = CanonicalMeasure::new(&[0.0; 4], 2).unwrap();
        assert!(mu.weight(&Configuration::new(0b0111, 4)).is_err());
    }

    #[test]
    fn weights_sum_to_one_random_fields() {
        for seed in 0..5 {
            let alpha = random_alpha(12, 1.0, seed);
            for n in [1, 5, 6, 11] {
                let mu = CanonicalMeasure::new(&alpha, n).unwrap();
                let sp = space(12, n);
                let total: f64 = sp.enumerate().map(|c| mu.weight(&c).unwrap()).sum();
                assert!((total - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn occupation_matches_enumeration_and_sums_to_n() {
        for seed in 0..5 {
            let alpha = random_alpha(8, 1.0, seed);
            let n = 3;
            let mu = CanonicalMeasure::new(&alpha, n).unwrap();
            let sp = space(8, n);
            for x in 0..8 {
                let marginal = mu
                    .expectation(&sp, |cfg| cfg.occupied(x) as u8 as f64)
                    .unwrap();
                assert!((mu.occupation_prob(x) - marginal).abs() < 1e-13);
            }
            let total: f64 = mu.occupation_probs().iter().sum();
            assert!((total - n as f64).abs() < 1e-10);
        }
    }

    #[test]
    fn occupation_degenerate_sectors() {
        let alpha = random_alpha(5, 1.0, 3);
        let empty = CanonicalMeasure::new(&alpha, 0).unwrap();
        let full = CanonicalMeasure::new(&alpha, 5).unwrap();
        for x in 0..5 {
            assert_eq!(empty.occupation_prob(x), 0.0);
            assert_eq!(full.occupation_prob(x), 1.0);
        }
    }

    #[test]
    fn occupation_constant_field_is_density() {
        let mu = CanonicalMeasure::new(&[0.7; 9], 4).unwrap();
        for x in 0..9 {
            assert!((mu.occupation_prob(x) - 4.0 / 9.0).abs() < 1e-12);
        }
    }

    #[test]
    fn occupation_second_form_via_zeta() {
        // (n/m) e^{alpha_x} zeta_{without x, n-1} / zeta_n equals the
        // occupation probability: binomial prefactors cancel exactly.
        let alpha = random_alpha(8, 1.0, 11);
        let n = 3;
        let m = 8;
        let mu = CanonicalMeasure::new(&alpha, n).unwrap();
        for x in 0..m {
            let mut rest = alpha.clone();
            rest.remove(x);
            let (_, log_zeta_rest) = partition_dp(&rest, n - 1).unwrap();
            let second = (n as f64 / m as f64) * (alpha[x] + log_zeta_rest - mu.log_zeta()).exp();
            assert!((second - mu.occupation_prob(x)).abs() < 1e-10);
        }
    }

    #[test]
    fn grand_canonical_consistency() {
        // Summing Z_n over all n recovers the product normalizer, and the
        // grand marginal at each site is p_x.
        let alpha = random_alpha(10, 1.0, 2);
        let grand = GrandMeasure::new(&alpha);
        let mut acc = f64::NEG_INFINITY;
        for n in 0..=10 {
            let (log_z, _) = partition_dp(&alpha, n).unwrap();
            acc = logaddexp(acc, log_z);
        }
        assert!((acc - grand.log_z).abs() < 1e-12);
        for x in 0..10 {
            let mut marginal = 0.0;
            for n in 0..=10 {
                let mu = CanonicalMeasure::new(&alpha, n).unwrap();
                let (log_z, _) = partition_dp(&alpha, n).unwrap();
                let sector_prob = (log_z - grand.log_z).exp();
                marginal += sector_prob * mu.occupation_prob(x);
            }
            assert!((marginal - grand.p[x]).abs() < 1e-12);
        }
    }

    #[test]
    fn sampling_empty_sector() {
        let mu = CanonicalMeasure::new(&[0.3; 4], 0).unwrap();
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        assert_eq!(mu.sample_occupancy(&mut rng), vec![0; 4]);
    }

    #[test]
    fn sampling_uniform_chi_square() {
        // alpha == 0, 4 sites, 2 particles: 6 equally likely configurations.
        let mu = CanonicalMeasure::new(&[0.0; 4], 2).unwrap();
        let sp = space(4, 2);
        let mut rng = ChaCha12Rng::seed_from_u64(77);
        let draws = 100_000;
        let mut counts = vec![0u64; sp.dim];
        for _ in 0..draws {
            let cfg = mu.sample_config(&mut rng).unwrap();
            counts[sp.rank(&cfg).unwrap()] += 1;
        }
        let expected = draws as f64 / 6.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // dof 5; p > 0.001 needs chi2 below 20.5.
        assert!(chi2 < 20.5, "chi2 = {chi2}");
    }

    #[test]
    fn sampling_matches_weights_disordered() {
        let alpha = random_alpha(6, 1.0, 4);
        let mu = CanonicalMeasure::new(&alpha, 3).unwrap();
        let sp = space(6, 3);
        let mut rng = ChaCha12Rng::seed_from_u64(5);
        let draws = 200_000;
        let mut counts = vec![0u64; sp.dim];
        for _ in 0..draws {
            let cfg = mu.sample_config(&mut rng).unwrap();
            counts[sp.rank(&cfg).unwrap()] += 1;
        }
        let mut chi2 = 0.0;
        for cfg in sp.enumerate() {
            let e = draws as f64 * mu.weight(&cfg).unwrap();
            let o = counts[sp.rank(&cfg).unwrap()] as f64;
            chi2 += (o - e).powi(2) / e;
        }
        // dof 19; p > 0.001 needs chi2 below 43.8.
        assert!(chi2 < 43.8, "chi2 = {chi2}");
    }

    #[test]
    fn variance_basics() {
        let alpha = random_alpha(7, 1.0, 9);
        let mu = CanonicalMeasure::new(&alpha, 3).unwrap();
        let sp = space(7, 3);
        assert!(mu.variance(&sp, |_| 4.2).unwrap().abs() < 1e-14);
        let f = |cfg: &Configuration| cfg.occupied(2) as u8 as f64;
        let var = mu.variance(&sp, f).unwrap();
        let cov = mu.covariance(&sp, f, f).unwrap();
        assert!((var - cov).abs() < 1e-15);
        let p = mu.occupation_prob(2);
        assert!((var - p * (1.0 - p)).abs() < 1e-12);
    }
}
