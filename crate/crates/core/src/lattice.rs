//! Box geometries, nearest-neighbour bonds, deterministic inter-site
//! routes, and congestion counts for the route family.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Free,
    Periodic,
}

/// A d-dimensional box of sites with its nearest-neighbour bond list.
///
/// Sites are indexed in row-major order (the first axis varies fastest).
/// Bonds are unordered, stored as `(low, high)` site indices, each pair
/// exactly once.
#[derive(Debug, Clone)]
pub struct LatticeGeometry {
    pub d: usize,
    pub sides: Vec<usize>,
    pub boundary: Boundary,
    /// Integer offset of the box origin; labels coordinates, never topology.
    pub origin: Vec<i64>,
    pub n_sites: usize,
    pub bonds: Vec<(u32, u32)>,
}

impl LatticeGeometry {
    /// Cubic box of side `l` in dimension `d`.
    pub fn build_box(d: usize, l: usize, boundary: Boundary) -> Result<Self> {
        Self::from_sides(vec![l; d.max(1)], boundary).and_then(|g| {
            if d == 0 {
                Err(Error::InvalidArgument(
                    "dimension must be at least 1".into(),
                ))
            } else {
                Ok(g)
            }
        })
    }

    pub fn from_sides(sides: Vec<usize>, boundary: Boundary) -> Result<Self> {
        if sides.is_empty() {
            return Err(Error::InvalidArgument(
                "dimension must be at least 1".into(),
            ));
        }
        if sides.contains(&0) {
            return Err(Error::InvalidArgument(
                "side lengths must be positive".into(),
            ));
        }
        if boundary == Boundary::Periodic && sides.iter().any(|&s| s < 2) {
            return Err(Error::InvalidArgument(
                "periodic boundary needs side length at least 2".into(),
            ));
        }
        let d = sides.len();
        let n_sites: usize = sides.iter().product();
        let mut bonds = Vec::new();
        for site in 0..n_sites {
            let coords = index_to_coords(site, &sides);
            for axis in 0..d {
                let s = sides[axis];
                if s == 1 {
                    continue;
                }
                // Forward neighbour along this axis; periodic wrap links the
                // last site back to the first unless that bond already exists
                // (side 2, where forward and wrap coincide).
                let next = if coords[axis] + 1 < s {
                    Some(coords[axis] + 1)
                } else if boundary == Boundary::Periodic && s > 2 {
                    Some(0)
                } else {
                    None
                };
                if let Some(c) = next {
                    let mut other = coords.clone();
                    other[axis] = c;
                    let j = coords_to_index(&other, &sides);
                    let (a, b) = if site < j { (site, j) } else { (j, site) };
                    bonds.push((a as u32, b as u32));
                }
            }
        }
        bonds.sort_unstable();
        bonds.dedup();
        Ok(LatticeGeometry {
            d,
            sides,
            boundary,
            origin: vec![0; d],
            n_sites,
            bonds,
        })
    }

    pub fn coords(&self, site: usize) -> Vec<usize> {
        index_to_coords(site, &self.sides)
    }

    pub fn index(&self, coords: &[usize]) -> usize {
        coords_to_index(coords, &self.sides)
    }

    /// Bond indices incident to each site; used for local catalog updates.
    pub fn incident_bonds(&self) -> Vec<Vec<u32>> {
        let mut inc = vec![Vec::new(); self.n_sites];
        for (bi, &(a, b)) in self.bonds.iter().enumerate() {
            inc[a as usize].push(bi as u32);
            inc[b as usize].push(bi as u32);
        }
        inc
    }
}

fn index_to_coords(mut site: usize, sides: &[usize]) -> Vec<usize> {
    let mut c = Vec::with_capacity(sides.len());
    for &s in sides {
        c.push(site % s);
        site /= s;
    }
    c
}

fn coords_to_index(coords: &[usize], sides: &[usize]) -> usize {
    let mut idx = 0;
    let mut stride = 1;
    for (&c, &s) in coords.iter().zip(sides) {
        idx += c * stride;
        stride *= s;
    }
    idx
}

/// An ordered chain of bonds connecting two sites.
#[derive(Debug, Clone)]
pub struct SwapPath {
    pub x: usize,
    pub y: usize,
    pub bonds: Vec<(u32, u32)>,
}

impl SwapPath {
    pub fn len(&self) -> usize {
        self.bonds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bonds.is_empty()
    }
}

/// Deterministic staircase route from `x` to `y`: walk axis 0 to the target
/// coordinate, then axis 1, and so on. The staircase is computed from the
/// lower-indexed endpoint so an unordered pair has a single bond set; the
/// bond order is reversed when `x` is the higher endpoint. Routes never
/// wrap, so the same family serves free and periodic geometries; length is
/// the l1 distance inside the box.
pub fn canonical_path(geom: &LatticeGeometry, x: usize, y: usize) -> Result<SwapPath> {
    if x >= geom.n_sites || y >= geom.n_sites {
        return Err(Error::InvalidArgument(format!(
            "site out of range: geometry has {} sites, got ({x}, {y})",
            geom.n_sites
        )));
    }
    let (lo, hi) = if x <= y { (x, y) } else { (y, x) };
    let mut cur = geom.coords(lo);
    let target = geom.coords(hi);
    let mut bonds = Vec::new();
    for axis in 0..geom.d {
        while cur[axis] != target[axis] {
            let here = geom.index(&cur);
            cur[axis] = if cur[axis] < target[axis] {
                cur[axis] + 1
            } else {
                cur[axis] - 1
            };
            let there = geom.index(&cur);
            bonds.push(if here < there {
                (here as u32, there as u32)
            } else {
                (there as u32, here as u32)
            });
        }
    }
    if x > y {
        bonds.reverse();
    }
    Ok(SwapPath { x, y, bonds })
}

#[derive(Debug, Clone)]
pub struct CongestionReport {
    /// Usage count per bond, aligned with `LatticeGeometry::bonds`.
    pub per_bond: Vec<u64>,
    pub max: u64,
    /// Reference value d*(L/2)^(d+1) for a cubic box of side L; exact for
    /// d=1 and even L, reported for comparison otherwise.
    pub nominal: f64,
    /// Counts are over unordered site pairs; ordered-pair counts are exactly
    /// twice these.
    pub ordered_factor: u64,
}

/// Route every unordered pair of distinct sites and count per-bond usage.
pub fn congestion(geom: &LatticeGeometry) -> Result<CongestionReport> {
    let mut index = std::collections::HashMap::new();
    for (i, &b) in geom.bonds.iter().enumerate() {
        index.insert(b, i);
    }
    let mut per_bond = vec![0u64; geom.bonds.len()];
    for x in 0..geom.n_sites {
        for y in (x + 1)..geom.n_sites {
            let path = canonical_path(geom, x, y)?;
            for b in &path.bonds {
                per_bond[index[b]] += 1;
            }
        }
    }
    let max = per_bond.iter().copied().max().unwrap_or(0);
    let l = geom.sides[0] as f64;
    let nominal = geom.d as f64 * (l / 2.0).powi(geom.d as i32 + 1);
    Ok(CongestionReport {
        per_bond,
        max,
        nominal,
        ordered_factor: 2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smallest_box() {
        let g = LatticeGeometry::build_box(1, 2, Boundary::Free).unwrap();
        assert_eq!(g.n_sites, 2);
        assert_eq!(g.bonds, vec![(0, 1)]);
    }

    #[test]
    fn box_2d_free_bond_count() {
        // 2*L*(L-1) nearest-neighbour bonds for an L x L free box.
        let g = LatticeGeometry::build_box(2, 3, Boundary::Free).unwrap();
        assert_eq!(g.n_sites, 9);
        assert_eq!(g.bonds.len(), 12);
    }

    #[test]
    fn box_2d_periodic_bond_count() {
        // d*L^d bonds on the torus.
        let g = LatticeGeometry::build_box(2, 3, Boundary::Periodic).unwrap();
        assert_eq!(g.n_sites, 9);
        assert_eq!(g.bonds.len(), 18);
    }

    #[test]
    fn periodic_side_two_has_no_duplicate_bond() {
        let g = LatticeGeometry::build_box(1, 2, Boundary::Periodic).unwrap();
        assert_eq!(g.bonds, vec![(0, 1)]);
    }

    #[test]
    fn bonds_unique_and_degree_bounds() {
        for (d, l, bnd) in [
            (1, 6, Boundary::Free),
            (2, 4, Boundary::Free),
            (2, 3, Boundary::Periodic),
            (3, 3, Boundary::Periodic),
        ] {
            let g = LatticeGeometry::build_box(d, l, bnd).unwrap();
            let mut seen = std::collections::HashSet::new();
            let mut degree = vec![0usize; g.n_sites];
            for &(a, b) in &g.bonds {
                assert!(a < b);
                assert!(seen.insert((a, b)), "duplicate bond {:?}", (a, b));
                degree[a as usize] += 1;
                degree[b as usize] += 1;
            }
            for &deg in &degree {
                match bnd {
                    Boundary::Free => assert!(deg >= d && deg <= 2 * d),
                    Boundary::Periodic => assert_eq!(deg, 2 * d),
                }
            }
        }
    }

    #[test]
    fn rejects_bad_dimensions() {
        assert!(LatticeGeometry::build_box(0, 4, Boundary::Free).is_err());
        assert!(LatticeGeometry::build_box(1, 0, Boundary::Free).is_err());
        assert!(LatticeGeometry::build_box(1, 1, Boundary::Periodic).is_err());
    }

    #[test]
    fn path_identity_is_empty() {
        let g = LatticeGeometry::build_box(2, 4, Boundary::Free).unwrap();
        let p = canonical_path(&g, 5, 5).unwrap();
        assert!(p.is_empty());
    }

    #[test]
    fn path_on_segment() {
        // Sites 0..3 on a segment: the only route is bond by bond.
        let g = LatticeGeometry::build_box(1, 4, Boundary::Free).unwrap();
        let p = canonical_path(&g, 0, 3).unwrap();
        assert_eq!(p.bonds, vec![(0, 1), (1, 2), (2, 3)]);
    }

    #[test]
    fn path_axis_order() {
        // (0,0) -> (2,1): two first-axis bonds, then one second-axis bond.
        let g = LatticeGeometry::build_box(2, 3, Boundary::Free).unwrap();
        let x = g.index(&[0, 0]);
        let y = g.index(&[2, 1]);
        let p = canonical_path(&g, x, y).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p.bonds[0], (0, 1));
        assert_eq!(p.bonds[1], (1, 2));
        assert_eq!(p.bonds[2], (2, 5));
    }

    #[test]
    fn path_reversal_same_bonds() {
        let g = LatticeGeometry::build_box(2, 4, Boundary::Free).unwrap();
        for x in 0..g.n_sites {
            for y in 0..g.n_sites {
                let fwd = canonical_path(&g, x, y).unwrap();
                let mut back = canonical_path(&g, y, x).unwrap().bonds;
                let mut fwd_bonds = fwd.bonds.clone();
                fwd_bonds.sort_unstable();
                back.sort_unstable();
                assert_eq!(fwd_bonds, back);
                assert!(fwd.len() <= g.d * 4);
            }
        }
    }

    #[test]
    fn path_rejects_out_of_range() {
        let g = LatticeGeometry::build_box(1, 4, Boundary::Free).unwrap();
        assert!(canonical_path(&g, 0, 4).is_err());
    }

    #[test]
    fn congestion_single_bond() {
        let g = LatticeGeometry::build_box(1, 2, Boundary::Free).unwrap();
        let c = congestion(&g).unwrap();
        assert_eq!(c.per_bond, vec![1]);
        assert_eq!(c.max, 1);
    }

    #[test]
    fn congestion_l4_matches_hand_count() {
        // Middle bond of a 4-site segment serves 2 left x 2 right = 4 pairs,
        // which is also the nominal (L/2)^2 for d=1.
        let g = LatticeGeometry::build_box(1, 4, Boundary::Free).unwrap();
        let c = congestion(&g).unwrap();
        assert_eq!(c.max, 4);
        assert_eq!(c.nominal, 4.0);
    }

    #[test]
    fn congestion_1d_closed_form() {
        // Bond i serves (i+1)(L-i-1) pairs on a segment.
        for l in 2..=12 {
            let g = LatticeGeometry::build_box(1, l, Boundary::Free).unwrap();
            let c = congestion(&g).unwrap();
            for (i, &count) in c.per_bond.iter().enumerate() {
                assert_eq!(count as usize, (i + 1) * (l - i - 1));
            }
        }
    }
}
