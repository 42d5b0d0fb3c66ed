//! Fixed-count occupancy configurations as bit masks, with a
//! combinatorial-number-system bijection onto dense indices.

use crate::error::{Error, Result};
use crate::lattice::LatticeGeometry;
use std::fmt;
use std::sync::Arc;

/// Occupancy pattern on up to 64 sites, one bit per site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Configuration {
    pub bits: u64,
    pub n_sites: u32,
}

impl Configuration {
    pub fn new(bits: u64, n_sites: u32) -> Self {
        debug_assert!(n_sites <= 64);
        debug_assert!(n_sites == 64 || bits < (1u64 << n_sites));
        Configuration { bits, n_sites }
    }

    pub fn popcount(&self) -> u32 {
        self.bits.count_ones()
    }

    pub fn occupied(&self, x: usize) -> bool {
        (self.bits >> x) & 1 == 1
    }

    /// Exchange the contents of sites `x` and `y`. An involution; a no-op
    /// when both sites hold the same value. `x == y` is allowed and is the
    /// identity.
    pub fn apply_swap(&self, x: usize, y: usize) -> Configuration {
        let bx = (self.bits >> x) & 1;
        let by = (self.bits >> y) & 1;
        if bx == by {
            return *self;
        }
        Configuration {
            bits: self.bits ^ ((1u64 << x) | (1u64 << y)),
            n_sites: self.n_sites,
        }
    }

    /// Toggle site `x`; changes the particle count by one.
    pub fn apply_flip(&self, x: usize) -> Configuration {
        Configuration {
            bits: self.bits ^ (1u64 << x),
            n_sites: self.n_sites,
        }
    }

    pub fn sites(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_sites as usize).filter(|&x| self.occupied(x))
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        (0..self.n_sites as usize)
            .map(|x| self.occupied(x) as u8)
            .collect()
    }

    pub fn from_bytes(occ: &[u8]) -> Self {
        let mut bits = 0u64;
        for (x, &v) in occ.iter().enumerate() {
            if v != 0 {
                bits |= 1 << x;
            }
        }
        Configuration::new(bits, occ.len() as u32)
    }
}

impl fmt::Display for Configuration {
    /// Prints as a 0/1 string in site order (site 0 first).
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for x in 0..self.n_sites as usize {
            write!(f, "{}", if self.occupied(x) { '1' } else { '0' })?;
        }
        Ok(())
    }
}

/// All configurations with exactly `n` particles on the sites of a geometry,
/// indexed colexicographically. Colex rank order coincides with numeric
/// order of the bit masks, so enumeration is a strictly increasing mask walk.
#[derive(Debug, Clone)]
pub struct ConfigSpace {
    pub geom: Arc<LatticeGeometry>,
    pub n: usize,
    pub dim: usize,
    binom: Vec<Vec<u64>>,
}

impl ConfigSpace {
    pub fn new(geom: Arc<LatticeGeometry>, n: usize) -> Result<Self> {
        let m = geom.n_sites;
        if m > 64 {
            return Err(Error::InvalidArgument(format!(
                "exact configuration spaces support at most 64 sites, geometry has {m}"
            )));
        }
        if n > m {
            return Err(Error::InvalidArgument(format!(
                "particle number {n} exceeds {m} sites"
            )));
        }
        let binom = binomial_table(m);
        let dim = binom[m][n];
        if dim > (1u64 << 33) {
            return Err(Error::InvalidArgument(format!(
                "configuration space too large to enumerate: C({m},{n}) = {dim}"
            )));
        }
        Ok(ConfigSpace {
            geom,
            n,
            dim: dim as usize,
            binom,
        })
    }

    pub fn n_sites(&self) -> usize {
        self.geom.n_sites
    }

    pub fn contains(&self, cfg: &Configuration) -> bool {
        cfg.n_sites as usize == self.n_sites() && cfg.popcount() as usize == self.n
    }

    /// Colex rank: sum of C(site, j) over occupied sites, j counting
    /// occupied sites from the lowest up.
    pub fn rank(&self, cfg: &Configuration) -> Result<usize> {
        if !self.contains(cfg) {
            return Err(Error::ParticleMismatch {
                expected: self.n,
                found: cfg.popcount() as usize,
            });
        }
        let mut r = 0u64;
        for (j, x) in cfg.sites().enumerate() {
            r += self.binom[x][j + 1];
        }
        Ok(r as usize)
    }

    pub fn unrank(&self, mut index: usize) -> Result<Configuration> {
        if index >= self.dim {
            return Err(Error::InvalidArgument(format!(
                "rank {index} out of range for space of dimension {}",
                self.dim
            )));
        }
        let mut bits = 0u64;
        let mut idx = index as u64;
        for j in (1..=self.n).rev() {
            // Largest site x with C(x, j) <= idx.
            let mut x = j - 1;
            while x + 1 < self.n_sites() && self.binom[x + 1][j] <= idx {
                x += 1;
            }
            bits |= 1 << x;
            idx -= self.binom[x][j];
        }
        index = idx as usize;
        debug_assert_eq!(index, 0);
        Ok(Configuration::new(bits, self.n_sites() as u32))
    }

    /// Enumerate in rank order via the next-higher-same-popcount bit trick.
    pub fn enumerate(&self) -> impl Iterator<Item = Configuration> + '_ {
        let m = self.n_sites() as u32;
        let n = self.n;
        let first = if n == 0 { 0 } else { (1u64 << n) - 1 };
        let mut next = Some(Configuration::new(first, m));
        let dim = self.dim;
        let mut count = 0usize;
        std::iter::from_fn(move || {
            if count == dim {
                return None;
            }
            let cur = next.take()?;
            count += 1;
            if count < dim {
                let v = cur.bits;
                let t = v | (v - 1);
                let w = (t + 1) | (((!t & (t + 1)) - 1) >> (v.trailing_zeros() + 1));
                next = Some(Configuration::new(w, m));
            }
            Some(cur)
        })
    }
}

fn binomial_table(m: usize) -> Vec<Vec<u64>> {
    let mut b = vec![vec![0u64; m + 1]; m + 1];
    for i in 0..=m {
        b[i][0] = 1;
        for j in 1..=i {
            b[i][j] = b[i - 1][j - 1] + b[i - 1].get(j).copied().unwrap_or(0);
        }
    }
    b
}

/// C(m, n) without building a space.
pub fn binomial(m: usize, n: usize) -> u64 {
    if n > m {
        return 0;
    }
    binomial_table(m)[m][n]
}
