//! Per-site external fields: bounded i.i.d. generation, grid quantization,
//! endpoint forcing, peak sites, and exact text round-tripping.

use crate::error::{Error, Result};
use crate::lattice::LatticeGeometry;
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

/// External field alpha with the invariant |alpha_x| <= bound for all x.
#[derive(Debug, Clone, PartialEq)]
pub struct DisorderField {
    pub values: Vec<f64>,
    pub bound: f64,
}

impl DisorderField {
    pub fn new(values: Vec<f64>, bound: f64) -> Result<Self> {
        if bound < 0.0 || !bound.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "field bound must be a nonnegative finite real, got {bound}"
            )));
        }
        if let Some((x, &v)) = values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || v.abs() > bound)
        {
            return Err(Error::InvalidArgument(format!(
                "field value {v} at site {x} violates |alpha| <= {bound}"
            )));
        }
        Ok(DisorderField { values, bound })
    }

    pub fn zero(n_sites: usize) -> Self {
        DisorderField {
            values: vec![0.0; n_sites],
            bound: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// One line per site: `site_index value`, with shortest round-trip float
    /// formatting so parsing recovers the exact bits.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (x, v) in self.values.iter().enumerate() {
            s.push_str(&format!("{x} {v}\n"));
        }
        s
    }

    pub fn from_text(text: &str, bound: f64) -> Result<Self> {
        let mut values = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let idx: usize = parts
                .next()
                .ok_or_else(|| Error::Parse(format!("line {}: missing site index", lineno + 1)))?
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: bad site index: {e}", lineno + 1)))?;
            let val: f64 = parts
                .next()
                .ok_or_else(|| Error::Parse(format!("line {}: missing value", lineno + 1)))?
                .parse()
                .map_err(|e| Error::Parse(format!("line {}: bad value: {e}", lineno + 1)))?;
            if idx != values.len() {
                return Err(Error::Parse(format!(
                    "line {}: expected site {} in order, got {idx}",
                    lineno + 1,
                    values.len()
                )));
            }
            values.push(val);
        }
        DisorderField::new(values, bound)
    }
}

/// I.i.d. uniform field on [-K, K], reproducible from the seed.
pub fn generate_iid(geom: &LatticeGeometry, k: f64, seed: u64) -> Result<DisorderField> {
    if k < 0.0 || !k.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "field bound must be nonnegative, got {k}"
        )));
    }
    if k == 0.0 {
        return Ok(DisorderField::zero(geom.n_sites));
    }
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let dist = Uniform::new_inclusive(-k, k);
    let values: Vec<f64> = (0..geom.n_sites).map(|_| dist.sample(&mut rng)).collect();
    DisorderField::new(values, k)
}

/// Replace each value by the nearest grid point K*j/L, j in [-L, L], ties
/// toward +K. The returned flag marks a degenerate grid: at K = 0 the grid
/// collapses to {0} and the zero field is returned.
pub fn quantize_to_grid(field: &DisorderField, l: usize) -> Result<(DisorderField, bool)> {
    if l == 0 {
        return Err(Error::InvalidArgument(
            "grid resolution L must be positive".into(),
        ));
    }
    let k = field.bound;
    if k == 0.0 {
        return Ok((DisorderField::zero(field.len()), true));
    }
    let lf = l as f64;
    let values: Vec<f64> = field
        .values
        .iter()
        .map(|&a| {
            // j = round(a*L/K) with exact halves rounded up (toward +K).
            let j = (a * lf / k + 0.5).floor();
            let j = j.clamp(-lf, lf);
            k * j / lf
        })
        .collect();
    Ok((DisorderField::new(values, k)?, false))
}

/// Set the field to +K at the first and last site of a segment. A separate
/// pipeline step so certificates can log it rather than fold it into
/// quantization.
pub fn force_endpoints(field: &DisorderField, geom: &LatticeGeometry) -> Result<DisorderField> {
    if geom.d != 1 {
        return Err(Error::InvalidArgument(
            "endpoint forcing applies to 1-d segments".into(),
        ));
    }
    let mut values = field.values.clone();
    if let Some(first) = values.first_mut() {
        *first = field.bound;
    }
    if let Some(last) = values.last_mut() {
        *last = field.bound;
    }
    DisorderField::new(values, field.bound)
}

/// Sites where the field attains its bound K exactly, in increasing order.
/// Requires both endpoints at K (apply `force_endpoints` first).
pub fn peak_set(field: &DisorderField) -> Result<Vec<usize>> {
    let k = field.bound;
    let n = field.len();
    if n == 0 {
        return Err(Error::InvalidArgument("empty field".into()));
    }
    if field.values[0] != k || field.values[n - 1] != k {
        return Err(Error::InvalidArgument(
            "peak set requires both endpoints forced to the bound".into(),
        ));
    }
    Ok((0..n).filter(|&x| field.values[x] == k).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Boundary;
    use proptest::prelude::*;

    fn seg(l: usize) -> LatticeGeometry {
        LatticeGeometry::build_box(1, l, Boundary::Free).unwrap()
    }

    #[test]
    fn zero_bound_gives_zero_field() {
        let f = generate_iid(&seg(4), 0.0, 9).unwrap();
        assert_eq!(f.values, vec![0.0; 4]);
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_iid(&seg(4), 1.0, 42).unwrap();
        let b = generate_iid(&seg(4), 1.0, 42).unwrap();
        assert_eq!(a, b);
        let c = generate_iid(&seg(4), 1.0, 43).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn empirical_mean_within_three_sigma() {
        let g = seg(100_000);
        let f = generate_iid(&g, 1.0, 1234).unwrap();
        let mean: f64 = f.values.iter().sum::<f64>() / f.len() as f64;
        let sigma = 1.0 / (3.0 * f.len() as f64).sqrt();
        assert!(
            mean.abs() < 3.0 * sigma,
            "mean {mean} vs 3 sigma {}",
            3.0 * sigma
        );
    }

    #[test]
    fn rejects_negative_bound() {
        assert!(generate_iid(&seg(2), -1.0, 0).is_err());
    }

    #[test]
    fn quantize_fixed_points_and_ties() {
        let f = DisorderField::new(vec![0.5, 0.3, -0.25, 1.0], 1.0).unwrap();
        let (q, degenerate) = quantize_to_grid(&f, 2).unwrap();
        assert!(!degenerate);
        // Grid {-1, -0.5, 0, 0.5, 1}: 0.5 is already on the grid, 0.3 -> 0.5,
        // -0.25 is an exact tie and rounds toward +K, so -0.25 -> 0.
        assert_eq!(q.values, vec![0.5, 0.5, 0.0, 1.0]);
    }

    #[test]
    fn quantize_degenerate_grid() {
        let f = DisorderField::zero(3);
        let (q, degenerate) = quantize_to_grid(&f, 5).unwrap();
        assert!(degenerate);
        assert_eq!(q.values, vec![0.0; 3]);
    }

    #[test]
    fn endpoint_forcing_and_peaks() {
        let f = DisorderField::new(vec![0.0, 1.0, -0.5, 0.25], 1.0).unwrap();
        assert!(peak_set(&f).is_err());
        let g = seg(4);
        let forced = force_endpoints(&f, &g).unwrap();
        assert_eq!(forced.values, vec![1.0, 1.0, -0.5, 1.0]);
        assert_eq!(peak_set(&forced).unwrap(), vec![0, 1, 3]);
        let constant = DisorderField::new(vec![2.0; 5], 2.0).unwrap();
        assert_eq!(peak_set(&constant).unwrap(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn text_roundtrip_exact() {
        let f = generate_iid(&seg(32), 1.0, 7).unwrap();
        let back = DisorderField::from_text(&f.to_text(), 1.0).unwrap();
        for (a, b) in f.values.iter().zip(&back.values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn text_rejects_out_of_order() {
        assert!(DisorderField::from_text("1 0.5\n0 0.25\n", 1.0).is_err());
    }

    proptest! {
        #[test]
        fn quantize_error_bound_and_idempotence(
            seed in 0u64..500, l in 1usize..40, k in prop::sample::select(vec![0.5f64, 1.0, 2.0])
        ) {
            let g = seg(8);
            let f = generate_iid(&g, k, seed).unwrap();
            let (q, _) = quantize_to_grid(&f, l).unwrap();
            for (a, b) in f.values.iter().zip(&q.values) {
                prop_assert!((a - b).abs() <= k / (2.0 * l as f64) + 1e-15);
                prop_assert!(b.abs() <= k);
            }
            let (qq, _) = quantize_to_grid(&q, l).unwrap();
            prop_assert_eq!(q.values, qq.values);
        }
    }
}
