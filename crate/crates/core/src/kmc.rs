//! Event-driven continuous-time simulation of the nearest-neighbour
//! exchange dynamics, with equilibrium validation against exact weights,
//! waiting-time diagnostics, autocorrelation-based relaxation times, and
//! block-average comparison statistics.
//!
//! Moves live in a directed catalog with one slot per (bond, direction);
//! a slot is active exactly when its source site is occupied and its
//! target empty, at rate 1 + e^{alpha_to - alpha_from}. Selection is by
//! binary sum tree, so steps cost O(log #slots) plus a constant-size
//! neighbourhood refresh.

use crate::configspace::{ConfigSpace, Configuration};
use crate::disorder::DisorderField;
use crate::ensemble::CanonicalMeasure;
use crate::error::{Error, Result};
use crate::lattice::{Boundary, LatticeGeometry};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use std::sync::Arc;

/// Incremental catalog totals are rebuilt from scratch this often.
const REVALIDATE_EVERY: u64 = 100_000;
/// Exact spaces above this state count are refused for histogram checks.
const ENUMERABLE_LIMIT: usize = 10_000;

/// Flat binary sum tree over nonnegative leaf weights.
struct SumTree {
    cap: usize,
    vals: Vec<f64>,
}

impl SumTree {
    fn new(n: usize) -> Self {
        let cap = n.next_power_of_two().max(1);
        SumTree {
            cap,
            vals: vec![0.0; 2 * cap],
        }
    }

    fn update(&mut self, leaf: usize, v: f64) {
        let mut k = self.cap + leaf;
        self.vals[k] = v;
        k >>= 1;
        while k >= 1 {
            self.vals[k] = self.vals[2 * k] + self.vals[2 * k + 1];
            if k == 1 {
                break;
            }
            k >>= 1;
        }
    }

    fn get(&self, leaf: usize) -> f64 {
        self.vals[self.cap + leaf]
    }

    fn total(&self) -> f64 {
        self.vals[1]
    }

    /// Leaf containing the given cumulative target in [0, total).
    fn select(&self, mut target: f64) -> usize {
        let mut k = 1;
        while k < self.cap {
            let left = self.vals[2 * k];
            if target < left {
                k *= 2;
            } else {
                target -= left;
                k = 2 * k + 1;
            }
        }
        k - self.cap
    }

    fn rebuild(&mut self, leaves: &[f64]) {
        for (i, slot) in self.vals[self.cap..].iter_mut().enumerate() {
            *slot = leaves.get(i).copied().unwrap_or(0.0);
        }
        for k in (1..self.cap).rev() {
            self.vals[k] = self.vals[2 * k] + self.vals[2 * k + 1];
        }
    }
}

/// Live simulation state: occupancy, directed-move catalog, clock, stream.
pub struct KmcState {
    pub geom: Arc<LatticeGeometry>,
    pub alpha: Vec<f64>,
    pub occ: Vec<u8>,
    pub time: f64,
    pub events: u64,
    rng: ChaCha12Rng,
    tree: SumTree,
    incident: Vec<Vec<u32>>,
    /// Per-slot rate multipliers; anything other than 1.0 deliberately
    /// breaks reversibility (negative-control harness).
    perturb: Vec<f64>,
}

impl KmcState {
    pub fn new(
        geom: Arc<LatticeGeometry>,
        field: &DisorderField,
        occ: Vec<u8>,
        seed: u64,
    ) -> Result<Self> {
        let m = geom.n_sites;
        if field.len() != m {
            return Err(Error::InvalidArgument(format!(
                "field has {} sites, geometry has {m}",
                field.len()
            )));
        }
        if occ.len() != m {
            return Err(Error::InvalidArgument(format!(
                "occupancy has {} sites, geometry has {m}",
                occ.len()
            )));
        }
        if occ.iter().any(|&o| o > 1) {
            return Err(Error::InvalidArgument(
                "occupancy entries must be 0 or 1".into(),
            ));
        }
        let n: usize = occ.iter().map(|&o| o as usize).sum();
        if n == 0 || n == m {
            return Err(Error::Degenerate(format!(
                "sector N = {n} of {m} sites has no legal moves"
            )));
        }
        if geom.bonds.is_empty() {
            return Err(Error::InvalidArgument("geometry has no bonds".into()));
        }
        let n_slots = 2 * geom.bonds.len();
        let mut state = KmcState {
            incident: geom.incident_bonds(),
            alpha: field.values.clone(),
            occ,
            time: 0.0,
            events: 0,
            rng: ChaCha12Rng::seed_from_u64(seed),
            tree: SumTree::new(n_slots),
            perturb: vec![1.0; n_slots],
            geom,
        };
        let rates: Vec<f64> = (0..n_slots).map(|s| state.rate_of(s)).collect();
        state.tree.rebuild(&rates);
        Ok(state)
    }

    /// Start from an exact draw of the conditioned measure.
    pub fn from_equilibrium(
        geom: Arc<LatticeGeometry>,
        field: &DisorderField,
        n: usize,
        seed: u64,
    ) -> Result<Self> {
        let measure = CanonicalMeasure::from_field(field, n)?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15);
        let occ = measure.sample_occupancy(&mut rng);
        Self::new(geom, field, occ, seed)
    }

    pub fn n_particles(&self) -> usize {
        self.occ.iter().map(|&o| o as usize).sum()
    }

    fn slot_endpoints(&self, slot: usize) -> (usize, usize) {
        let (a, b) = self.geom.bonds[slot / 2];
        if slot.is_multiple_of(2) {
            (a as usize, b as usize)
        } else {
            (b as usize, a as usize)
        }
    }

    /// The single authoritative rate formula; construction, incremental
    /// updates, and revalidation all go through here.
    fn rate_of(&self, slot: usize) -> f64 {
        let (from, to) = self.slot_endpoints(slot);
        if self.occ[from] == 1 && self.occ[to] == 0 {
            (1.0 + (self.alpha[to] - self.alpha[from]).exp()) * self.perturb[slot]
        } else {
            0.0
        }
    }

    /// Scale one directed rate by `factor`. Scaling a single direction of a
    /// bond breaks detailed balance; scaling both preserves it.
    pub fn corrupt_rate(&mut self, from: usize, to: usize, factor: f64) -> Result<()> {
        if factor <= 0.0 || !factor.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "rate factor must be positive, got {factor}"
            )));
        }
        let (lo, hi) = if from < to { (from, to) } else { (to, from) };
        let bond = self
            .geom
            .bonds
            .iter()
            .position(|&(a, b)| (a as usize, b as usize) == (lo, hi))
            .ok_or_else(|| {
                Error::InvalidArgument(format!("sites {from} and {to} are not bonded"))
            })?;
        let slot = 2 * bond + usize::from(from > to);
        self.perturb[slot] *= factor;
        let r = self.rate_of(slot);
        self.tree.update(slot, r);
        Ok(())
    }

    pub fn total_rate(&self) -> f64 {
        self.tree.total()
    }

    /// One event: exponential waiting time, rate-proportional move choice,
    /// neighbourhood catalog refresh. Returns (from, to, dt).
    pub fn step(&mut self) -> Result<(usize, usize, f64)> {
        let total = self.tree.total();
        if total <= 0.0 {
            return Err(Error::Degenerate("no legal moves in current state".into()));
        }
        let u: f64 = self.rng.gen();
        let dt = -(1.0 - u).ln() / total;
        let mut slot = self.tree.select(self.rng.gen::<f64>() * total);
        if self.tree.get(slot) <= 0.0 {
            // Cumulative-sum rounding can land on an inactive slot at a
            // boundary; the nearest active slot carries the same law up to
            // measure zero.
            slot = (0..self.perturb.len())
                .find(|&s| self.tree.get(s) > 0.0)
                .expect("positive total implies an active slot");
        }
        let (from, to) = self.slot_endpoints(slot);
        debug_assert!(self.occ[from] == 1 && self.occ[to] == 0);
        self.occ[from] = 0;
        self.occ[to] = 1;
        self.time += dt;
        self.events += 1;
        for site in [from, to] {
            for &bi in &self.incident[site] {
                let b = bi as usize;
                let r0 = self.rate_of(2 * b);
                self.tree.update(2 * b, r0);
                let r1 = self.rate_of(2 * b + 1);
                self.tree.update(2 * b + 1, r1);
            }
        }
        if self.events.is_multiple_of(REVALIDATE_EVERY) {
            let (leaf_drift, total_drift) = self.revalidate();
            assert!(
                leaf_drift == 0.0,
                "catalog drifted from the rate formula by {leaf_drift}"
            );
            assert!(
                total_drift <= 1e-9,
                "sum tree total drifted by relative {total_drift}"
            );
        }
        Ok((from, to, dt))
    }

    /// Recompute every slot from scratch and rebuild the tree. Returns the
    /// largest |incremental - fresh| over slots and the relative drift of
    /// the total before the rebuild.
    pub fn revalidate(&mut self) -> (f64, f64) {
        let fresh: Vec<f64> = (0..self.perturb.len()).map(|s| self.rate_of(s)).collect();
        let mut leaf_drift = 0.0f64;
        for (s, &r) in fresh.iter().enumerate() {
            leaf_drift = leaf_drift.max((self.tree.get(s) - r).abs());
        }
        let fresh_total: f64 = fresh.iter().sum();
        let total_drift = if fresh_total > 0.0 {
            (self.tree.total() - fresh_total).abs() / fresh_total
        } else {
            0.0
        };
        self.tree.rebuild(&fresh);
        (leaf_drift, total_drift)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CheckStatus {
    Pass,
    Fail,
    Inconclusive,
}

impl CheckStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::Inconclusive => "inconclusive",
        }
    }
}

/// Histogram comparison of a trajectory against exact stationary weights.
#[derive(Debug, Clone)]
pub struct EquilibriumReport {
    pub chi_square: f64,
    pub dof: usize,
    pub p_value: f64,
    /// Configurations sampled on the fixed time grid feeding the chi-square.
    pub n_samples: usize,
    /// Total-variation distance between time-weighted occupation
    /// frequencies and the exact weights.
    pub tv_distance: f64,
    pub events_per_state: f64,
    pub status: CheckStatus,
}

/// Run `events` steps and compare visit statistics against the exact
/// conditioned measure. Configurations are read on a time grid of spacing
/// `sample_dt`, which should be a few relaxation times to keep grid reads
/// nearly independent; time-weighted frequencies feed the TV distance.
pub fn equilibrium_check(
    state: &mut KmcState,
    measure: &CanonicalMeasure,
    events: u64,
    sample_dt: f64,
) -> Result<EquilibriumReport> {
    if sample_dt <= 0.0 || !sample_dt.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "sample spacing must be positive, got {sample_dt}"
        )));
    }
    let n = state.n_particles();
    if measure.n_sites() != state.geom.n_sites || measure.n != n {
        return Err(Error::InvalidArgument(
            "measure sites/particles do not match the simulation state".into(),
        ));
    }
    let space = ConfigSpace::new(Arc::clone(&state.geom), n)?;
    if space.dim > ENUMERABLE_LIMIT {
        return Err(Error::InvalidArgument(format!(
            "histogram check needs at most {ENUMERABLE_LIMIT} states, space has {}",
            space.dim
        )));
    }
    let probs: Vec<f64> = {
        let mut p = vec![0.0; space.dim];
        for cfg in space.enumerate() {
            p[space.rank(&cfg)?] = measure.weight(&cfg)?;
        }
        p
    };
    let occ_bits = |occ: &[u8]| -> u64 {
        occ.iter()
            .enumerate()
            .fold(0u64, |acc, (x, &o)| acc | ((o as u64) << x))
    };
    let m = state.geom.n_sites as u32;
    let mut rank = space.rank(&Configuration::new(occ_bits(&state.occ), m))?;
    let t0 = state.time;
    let mut next_sample = t0 + sample_dt;
    let mut time_in = vec![0.0f64; space.dim];
    let mut counts = vec![0u64; space.dim];
    for _ in 0..events {
        let (_, _, dt) = state.step()?;
        time_in[rank] += dt;
        while next_sample < state.time {
            counts[rank] += 1;
            next_sample += sample_dt;
        }
        rank = space.rank(&Configuration::new(occ_bits(&state.occ), m))?;
    }
    let total_time = state.time - t0;
    let n_samples: u64 = counts.iter().sum();
    let tv_distance = 0.5
        * time_in
            .iter()
            .zip(&probs)
            .map(|(&t, &p)| (t / total_time - p).abs())
            .sum::<f64>();
    let events_per_state = events as f64 / space.dim as f64;
    let min_expected = probs
        .iter()
        .map(|&p| p * n_samples as f64)
        .fold(f64::INFINITY, f64::min);
    let mut chi_square = 0.0;
    for (s, &p) in probs.iter().enumerate() {
        let e = p * n_samples as f64;
        if e > 0.0 {
            let d = counts[s] as f64 - e;
            chi_square += d * d / e;
        } else if counts[s] > 0 {
            chi_square = f64::INFINITY;
        }
    }
    let dof = space.dim - 1;
    let p_value = if chi_square.is_finite() {
        1.0 - ChiSquared::new(dof as f64)
            .map_err(|e| Error::InvalidArgument(e.to_string()))?
            .cdf(chi_square)
    } else {
        0.0
    };
    let status = if events_per_state < 100.0 || min_expected < 5.0 {
        CheckStatus::Inconclusive
    } else if p_value > 0.001 {
        CheckStatus::Pass
    } else {
        CheckStatus::Fail
    };
    Ok(EquilibriumReport {
        chi_square,
        dof,
        p_value,
        n_samples: n_samples as usize,
        tv_distance,
        events_per_state,
        status,
    })
}

/// Kolmogorov-Smirnov check of waiting times with the catalog frozen: the
/// state is not advanced, so draws are iid exponentials at the current
/// total rate. Compared against the exponential fitted to the sample.
#[derive(Debug, Clone)]
pub struct KsReport {
    pub statistic: f64,
    pub p_value: f64,
    pub n_samples: usize,
}

pub fn waiting_time_ks(state: &mut KmcState, n: usize) -> Result<KsReport> {
    if n < 10 {
        return Err(Error::InvalidArgument(format!(
            "waiting-time test needs at least 10 draws, got {n}"
        )));
    }
    let total = state.tree.total();
    if total <= 0.0 {
        return Err(Error::Degenerate("no legal moves in current state".into()));
    }
    let mut draws: Vec<f64> = (0..n)
        .map(|_| {
            let u: f64 = state.rng.gen();
            -(1.0 - u).ln() / total
        })
        .collect();
    draws.sort_by(f64::total_cmp);
    let mean = draws.iter().sum::<f64>() / n as f64;
    let rate = 1.0 / mean;
    let mut d = 0.0f64;
    for (i, &x) in draws.iter().enumerate() {
        let f = 1.0 - (-rate * x).exp();
        d = d.max(f - i as f64 / n as f64);
        d = d.max((i + 1) as f64 / n as f64 - f);
    }
    let sqrt_n = (n as f64).sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    Ok(KsReport {
        statistic: d,
        p_value: kolmogorov_tail(lambda),
        n_samples: n,
    })
}

/// Tail probability of the Kolmogorov distribution.
fn kolmogorov_tail(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let term = (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        sum += if k % 2 == 1 { term } else { -term };
        if term < 1e-16 {
            break;
        }
    }
    (2.0 * sum).clamp(0.0, 1.0)
}

/// Integrated autocorrelation time of a site-weighted observable.
#[derive(Debug, Clone)]
pub struct TauReport {
    pub tau: f64,
    pub standard_error: f64,
    /// Summation window, in grid steps, chosen self-consistently.
    pub window: usize,
    pub n_samples: usize,
    pub sample_dt: f64,
    /// Set when the horizon is shorter than 50 estimated taus or the
    /// window never closed; the estimate is then a lower-confidence guess.
    pub inconclusive: bool,
}

/// Slowest-mode site profile for the homogeneous segment dynamics; a good
/// (no longer exact) probe under weak disorder.
pub fn cosine_profile(geom: &LatticeGeometry) -> Vec<f64> {
    let l0 = geom.sides[0] as f64;
    (0..geom.n_sites)
        .map(|x| {
            let c = geom.coords(x)[0] as f64;
            (std::f64::consts::PI * (c + 0.5) / l0).cos()
        })
        .collect()
}

/// Estimate the integrated autocorrelation time of sum_x weights[x] eta_x
/// from one trajectory of length `horizon`, sampled every `sample_dt`.
/// The summation window W is the smallest with W >= 6 tau(W).
pub fn relaxation_time(
    state: &mut KmcState,
    weights: &[f64],
    horizon: f64,
    sample_dt: f64,
) -> Result<TauReport> {
    if weights.len() != state.geom.n_sites {
        return Err(Error::InvalidArgument(format!(
            "observable has {} weights, geometry has {} sites",
            weights.len(),
            state.geom.n_sites
        )));
    }
    if sample_dt <= 0.0 || horizon <= 0.0 || !sample_dt.is_finite() || !horizon.is_finite() {
        return Err(Error::InvalidArgument(
            "horizon and sample spacing must be positive".into(),
        ));
    }
    let t_end = state.time + horizon;
    let mut value: f64 = weights
        .iter()
        .zip(&state.occ)
        .map(|(&w, &o)| w * o as f64)
        .sum();
    let mut next_t = state.time;
    let mut samples = Vec::with_capacity((horizon / sample_dt) as usize + 2);
    while state.time < t_end {
        let (from, to, _) = state.step()?;
        let reach = state.time.min(t_end);
        while next_t < reach {
            samples.push(value);
            next_t += sample_dt;
        }
        value += weights[to] - weights[from];
    }
    let n = samples.len();
    if n < 64 {
        return Err(Error::InvalidArgument(format!(
            "only {n} grid samples in the horizon; lengthen it or shrink sample_dt"
        )));
    }
    let mean = samples.iter().sum::<f64>() / n as f64;
    for s in &mut samples {
        *s -= mean;
    }
    let gamma0 = samples.iter().map(|&x| x * x).sum::<f64>() / n as f64;
    if gamma0 <= 0.0 {
        return Err(Error::Degenerate(
            "observable is constant along the trajectory".into(),
        ));
    }
    let w_max = (n / 3).min(20_000);
    let mut tau_disc = 0.5;
    let mut window = w_max;
    let mut closed = false;
    for k in 1..=w_max {
        let mut g = 0.0;
        for i in 0..n - k {
            g += samples[i] * samples[i + k];
        }
        tau_disc += g / (n as f64 * gamma0);
        if (k as f64) >= 6.0 * tau_disc {
            window = k;
            closed = true;
            break;
        }
    }
    let tau = sample_dt * tau_disc.max(0.0);
    let standard_error = tau * (2.0 * (2.0 * window as f64 + 1.0) / n as f64).sqrt();
    let inconclusive = !closed || horizon < 50.0 * tau;
    Ok(TauReport {
        tau,
        standard_error,
        window,
        n_samples: n,
        sample_dt,
        inconclusive,
    })
}

/// Member sites of the torus sup-norm ball of radius `r` around each site,
/// each site counted once (radius >= side/2 covers the whole axis).
fn window_members(geom: &LatticeGeometry, r: usize) -> Vec<Vec<u32>> {
    let d = geom.d;
    let axis_offsets: Vec<Vec<usize>> = geom
        .sides
        .iter()
        .map(|&s| {
            if 2 * r + 1 >= s {
                (0..s).collect()
            } else {
                // Offsets r..s+r reduce mod s to c-r..c+r around centre c.
                (0..=2 * r).collect()
            }
        })
        .collect();
    let mut members = Vec::with_capacity(geom.n_sites);
    for site in 0..geom.n_sites {
        let c = geom.coords(site);
        let mut list = Vec::with_capacity(axis_offsets.iter().map(Vec::len).product());
        let mut coord = vec![0usize; d];
        collect_members(geom, &c, &axis_offsets, r, 0, &mut coord, &mut list);
        members.push(list);
    }
    members
}

fn collect_members(
    geom: &LatticeGeometry,
    centre: &[usize],
    axis_offsets: &[Vec<usize>],
    r: usize,
    axis: usize,
    coord: &mut Vec<usize>,
    out: &mut Vec<u32>,
) {
    if axis == geom.d {
        out.push(geom.index(coord) as u32);
        return;
    }
    let s = geom.sides[axis];
    for &o in &axis_offsets[axis] {
        coord[axis] = if 2 * r + 1 >= s {
            o
        } else {
            (centre[axis] + s + o - r) % s
        };
        collect_members(geom, centre, axis_offsets, r, axis + 1, coord, out);
    }
}

/// Per-site window averages of the occupancy.
fn block_means(members: &[Vec<u32>], occ: &[u8]) -> Vec<f64> {
    members
        .iter()
        .map(|list| {
            let sum: u32 = list.iter().map(|&y| occ[y as usize] as u32).sum();
            sum as f64 / list.len() as f64
        })
        .collect()
}

/// Micro and macro window radii, with the precondition checks shared by
/// every block-comparison entry point.
fn window_radii(geom: &LatticeGeometry, k: usize, delta: f64) -> Result<(usize, usize)> {
    if geom.boundary != Boundary::Periodic {
        return Err(Error::InvalidArgument(
            "block comparison is defined on periodic boxes".into(),
        ));
    }
    if !(0.0..=1.0).contains(&delta) {
        return Err(Error::InvalidArgument(format!(
            "macro fraction must lie in [0, 1], got {delta}"
        )));
    }
    let side = geom.sides[0];
    let r = (delta * side as f64).floor() as usize;
    if k < 1 || r < 1 {
        return Err(Error::InvalidArgument(format!(
            "window radii must be at least 1 site, got micro {k}, macro {r}"
        )));
    }
    if r < k {
        return Err(Error::InvalidArgument(format!(
            "macro window radius {r} is smaller than micro radius {k}"
        )));
    }
    Ok((k, r))
}

/// One-configuration block-comparison term:
/// |sum_x phi(x/L) (F(m_x^k) - F(m_x^r))| / |sites|.
fn config_term(
    geom: &LatticeGeometry,
    f: &dyn Fn(f64) -> f64,
    phi: &dyn Fn(&[f64]) -> f64,
    members_k: &[Vec<u32>],
    members_r: &[Vec<u32>],
    occ: &[u8],
) -> f64 {
    let mk = block_means(members_k, occ);
    let mr = block_means(members_r, occ);
    let mut sum = 0.0;
    let mut frac = vec![0.0f64; geom.d];
    for x in 0..geom.n_sites {
        let c = geom.coords(x);
        for (a, &ci) in c.iter().enumerate() {
            frac[a] = ci as f64 / geom.sides[a] as f64;
        }
        sum += phi(&frac) * (f(mk[x]) - f(mr[x]));
    }
    sum.abs() / geom.n_sites as f64
}

/// Exact expectation of the block-comparison term over an enumerable
/// sector.
pub fn two_block_statistic_exact(
    space: &ConfigSpace,
    measure: &CanonicalMeasure,
    f: &dyn Fn(f64) -> f64,
    phi: &dyn Fn(&[f64]) -> f64,
    k: usize,
    delta: f64,
) -> Result<f64> {
    let (rk, rr) = window_radii(&space.geom, k, delta)?;
    if space.dim > ENUMERABLE_LIMIT {
        return Err(Error::InvalidArgument(format!(
            "exact evaluation needs at most {ENUMERABLE_LIMIT} states, space has {}",
            space.dim
        )));
    }
    let members_k = window_members(&space.geom, rk);
    let members_r = window_members(&space.geom, rr);
    let m = space.n_sites();
    let mut occ = vec![0u8; m];
    let mut total = 0.0;
    for cfg in space.enumerate() {
        for (x, slot) in occ.iter_mut().enumerate() {
            *slot = u8::from(cfg.occupied(x));
        }
        total +=
            measure.weight(&cfg)? * config_term(&space.geom, f, phi, &members_k, &members_r, &occ);
    }
    Ok(total)
}

/// Monte Carlo estimate of the block-comparison statistic from exact
/// equilibrium draws. Returns (estimate, standard error).
#[allow(clippy::too_many_arguments)]
pub fn two_block_statistic_mc(
    geom: &Arc<LatticeGeometry>,
    field: &DisorderField,
    n: usize,
    f: &dyn Fn(f64) -> f64,
    phi: &dyn Fn(&[f64]) -> f64,
    k: usize,
    delta: f64,
    samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let (rk, rr) = window_radii(geom, k, delta)?;
    if field.len() != geom.n_sites {
        return Err(Error::InvalidArgument(format!(
            "field has {} sites, geometry has {}",
            field.len(),
            geom.n_sites
        )));
    }
    if samples < 2 {
        return Err(Error::InvalidArgument("need at least 2 samples".into()));
    }
    let measure = CanonicalMeasure::from_field(field, n)?;
    let members_k = window_members(geom, rk);
    let members_r = window_members(geom, rr);
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let occ = measure.sample_occupancy(&mut rng);
        let s = config_term(geom, f, phi, &members_k, &members_r, &occ);
        sum += s;
        sum_sq += s * s;
    }
    let mean = sum / samples as f64;
    let var = (sum_sq / samples as f64 - mean * mean).max(0.0);
    Ok((mean, (var / (samples - 1) as f64).sqrt()))
}

/// Block-comparison expectation reweighted by a density, minus the
/// side^{2-d}-scaled exchange Dirichlet energy of sqrt(density): the
/// finite-size form of the two-scale inequality's left side.
pub fn two_block_functional(
    space: &ConfigSpace,
    measure: &CanonicalMeasure,
    density: &[f64],
    f: &dyn Fn(f64) -> f64,
    phi: &dyn Fn(&[f64]) -> f64,
    k: usize,
    delta: f64,
) -> Result<f64> {
    let (rk, rr) = window_radii(&space.geom, k, delta)?;
    if space.dim > ENUMERABLE_LIMIT {
        return Err(Error::InvalidArgument(format!(
            "functional needs at most {ENUMERABLE_LIMIT} states, space has {}",
            space.dim
        )));
    }
    if density.len() != space.dim {
        return Err(Error::InvalidArgument(format!(
            "density has {} entries, space has {} states",
            density.len(),
            space.dim
        )));
    }
    if density.iter().any(|&v| v < 0.0 || !v.is_finite()) {
        return Err(Error::InvalidArgument(
            "density entries must be finite and nonnegative".into(),
        ));
    }
    let members_k = window_members(&space.geom, rk);
    let members_r = window_members(&space.geom, rr);
    let m = space.n_sites();
    let mut occ = vec![0u8; m];
    let mut mass = 0.0;
    let mut expectation = 0.0;
    for cfg in space.enumerate() {
        let rank = space.rank(&cfg)?;
        let w = measure.weight(&cfg)?;
        mass += w * density[rank];
        for (x, slot) in occ.iter_mut().enumerate() {
            *slot = u8::from(cfg.occupied(x));
        }
        expectation +=
            w * density[rank] * config_term(&space.geom, f, phi, &members_k, &members_r, &occ);
    }
    if (mass - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!(
            "density must average to 1 under the measure, got {mass}"
        )));
    }
    let root: Vec<f64> = density.iter().map(|&v| v.sqrt()).collect();
    let (_, form) = crate::forms::build_kawasaki(space, measure)?;
    let side = space.geom.sides[0] as f64;
    let dirichlet = side.powi(2 - space.geom.d as i32) * form.value(&root);
    Ok(expectation - dirichlet)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::{generate_iid, quantize_to_grid, DisorderField};
    use crate::spectra::kawasaki_gap;

    fn ring(l: usize) -> Arc<LatticeGeometry> {
        Arc::new(LatticeGeometry::build_box(1, l, Boundary::Periodic).unwrap())
    }

    fn segment(l: usize) -> Arc<LatticeGeometry> {
        Arc::new(LatticeGeometry::build_box(1, l, Boundary::Free).unwrap())
    }

    #[test]
    fn interior_particle_exit_rate_four() {
        let geom = segment(5);
        let occ = vec![0, 0, 1, 0, 0];
        let state = KmcState::new(geom, &DisorderField::zero(5), occ, 1).unwrap();
        assert!((state.total_rate() - 4.0).abs() < 1e-12);
    }

    #[test]
    fn blocked_particle_contributes_nothing() {
        let geom = segment(3);
        let state = KmcState::new(geom, &DisorderField::zero(3), vec![1, 1, 0], 1).unwrap();
        // Only the site-1 particle can move, to site 2, at rate 2.
        assert!((state.total_rate() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn frozen_sectors_rejected_at_construction() {
        let geom = segment(4);
        let field = DisorderField::zero(4);
        assert!(KmcState::new(Arc::clone(&geom), &field, vec![0; 4], 1).is_err());
        assert!(KmcState::new(geom, &field, vec![1; 4], 1).is_err());
    }

    #[test]
    fn step_conserves_particles_and_advances_time() {
        let geom = ring(6);
        let mut state = KmcState::from_equilibrium(geom, &DisorderField::zero(6), 3, 7).unwrap();
        let mut last_t = 0.0;
        for _ in 0..1000 {
            let (from, to, dt) = state.step().unwrap();
            assert!(dt > 0.0);
            assert!(state.time > last_t);
            last_t = state.time;
            assert_eq!(state.occ[from], 0);
            assert_eq!(state.occ[to], 1);
            assert_eq!(state.n_particles(), 3);
        }
    }

    #[test]
    fn incremental_catalog_matches_rebuild() {
        let geom = ring(8);
        let raw = generate_iid(&geom, 1.0, 5).unwrap();
        let (field, _) = quantize_to_grid(&raw, 8).unwrap();
        let mut state = KmcState::from_equilibrium(geom, &field, 4, 11).unwrap();
        for _ in 0..50_000 {
            state.step().unwrap();
        }
        let (leaf_drift, total_drift) = state.revalidate();
        assert_eq!(leaf_drift, 0.0);
        assert!(total_drift <= 1e-9, "total drift {total_drift}");
    }

    #[test]
    fn waiting_times_look_exponential() {
        let geom = ring(6);
        let raw = generate_iid(&geom, 1.0, 2).unwrap();
        let (field, _) = quantize_to_grid(&raw, 6).unwrap();
        let mut state = KmcState::from_equilibrium(geom, &field, 3, 3).unwrap();
        let report = waiting_time_ks(&mut state, 20_000).unwrap();
        assert!(report.p_value > 0.001, "KS p = {}", report.p_value);
    }

    #[test]
    fn kolmogorov_tail_reference_values() {
        // Classical table: Q(0.828) ~ 0.50, Q(1.358) ~ 0.05, Q(1.628) ~ 0.01.
        assert!((kolmogorov_tail(0.8276) - 0.5).abs() < 5e-3);
        assert!((kolmogorov_tail(1.3581) - 0.05).abs() < 2e-3);
        assert!((kolmogorov_tail(1.6276) - 0.01).abs() < 1e-3);
        assert!(kolmogorov_tail(0.0) == 1.0);
    }

    #[test]
    fn uniform_sector_histogram_passes() {
        let geom = ring(4);
        let field = DisorderField::zero(4);
        let measure = CanonicalMeasure::from_field(&field, 2).unwrap();
        let mut state = KmcState::from_equilibrium(geom, &field, 2, 17).unwrap();
        let report = equilibrium_check(&mut state, &measure, 300_000, 2.0).unwrap();
        assert_eq!(report.status, CheckStatus::Pass, "report {report:?}");
        assert!(report.tv_distance < 0.02, "tv {}", report.tv_distance);
    }

    #[test]
    fn corrupted_rate_detected() {
        let geom = ring(4);
        let field = DisorderField::zero(4);
        let measure = CanonicalMeasure::from_field(&field, 2).unwrap();
        let mut state = KmcState::from_equilibrium(geom, &field, 2, 19).unwrap();
        state.corrupt_rate(0, 1, 1.5).unwrap();
        let report = equilibrium_check(&mut state, &measure, 400_000, 2.0).unwrap();
        assert_eq!(report.status, CheckStatus::Fail, "report {report:?}");
    }

    #[test]
    fn corruption_survives_revalidation() {
        let geom = ring(4);
        let field = DisorderField::zero(4);
        let mut state = KmcState::new(Arc::clone(&geom), &field, vec![1, 0, 1, 0], 23).unwrap();
        state.corrupt_rate(0, 1, 1.5).unwrap();
        let before = state.total_rate();
        let (leaf_drift, _) = state.revalidate();
        assert_eq!(leaf_drift, 0.0);
        assert_eq!(state.total_rate(), before);
    }

    #[test]
    fn too_few_events_is_inconclusive() {
        let geom = ring(6);
        let field = DisorderField::zero(6);
        let measure = CanonicalMeasure::from_field(&field, 3).unwrap();
        let mut state = KmcState::from_equilibrium(geom, &field, 3, 29).unwrap();
        let report = equilibrium_check(&mut state, &measure, 500, 0.5).unwrap();
        assert_eq!(report.status, CheckStatus::Inconclusive);
    }

    #[test]
    fn trajectory_flux_balances_per_transition() {
        let geom = segment(5);
        let raw = generate_iid(&geom, 1.0, 31).unwrap();
        let (field, _) = quantize_to_grid(&raw, 5).unwrap();
        let space = ConfigSpace::new(Arc::clone(&geom), 2).unwrap();
        let m = geom.n_sites as u32;
        let mut state = KmcState::from_equilibrium(geom, &field, 2, 37).unwrap();
        let bits = |occ: &[u8]| {
            occ.iter()
                .enumerate()
                .fold(0u64, |acc, (x, &o)| acc | ((o as u64) << x))
        };
        let mut rank = space
            .rank(&Configuration::new(bits(&state.occ), m))
            .unwrap();
        let mut flux = std::collections::HashMap::new();
        for _ in 0..400_000 {
            state.step().unwrap();
            let next = space
                .rank(&Configuration::new(bits(&state.occ), m))
                .unwrap();
            *flux.entry((rank, next)).or_insert(0u64) += 1;
            rank = next;
        }
        let mut checked = 0;
        for (&(i, j), &nij) in &flux {
            if i < j {
                let nji = flux.get(&(j, i)).copied().unwrap_or(0);
                if nij + nji >= 500 {
                    let z = (nij as f64 - nji as f64) / ((nij + nji) as f64).sqrt();
                    assert!(z.abs() < 6.0, "flux imbalance {z} on ({i},{j})");
                    checked += 1;
                }
            }
        }
        assert!(checked > 5, "only {checked} transitions had enough traffic");
    }

    #[test]
    fn two_state_relaxation_quarter() {
        // Two states swapping at total rate 4: autocorrelation e^{-4t}.
        let geom = segment(2);
        let field = DisorderField::zero(2);
        let mut state = KmcState::new(geom, &field, vec![1, 0], 41).unwrap();
        let report = relaxation_time(&mut state, &[0.0, 1.0], 3000.0, 0.02).unwrap();
        assert!(!report.inconclusive);
        assert!(
            report.tau > 0.25 / 1.5 && report.tau < 0.25 * 1.5,
            "tau {} expected near 0.25",
            report.tau
        );
    }

    #[test]
    fn relaxation_tracks_inverse_gap() {
        let l = 6;
        let geom = segment(l);
        let field = DisorderField::zero(l);
        let gap = kawasaki_gap(&geom, &field, 3).unwrap().gap;
        let mut state = KmcState::from_equilibrium(Arc::clone(&geom), &field, 3, 43).unwrap();
        let profile = cosine_profile(&geom);
        let report = relaxation_time(&mut state, &profile, 20_000.0, 0.4).unwrap();
        assert!(!report.inconclusive);
        let ratio = report.tau * gap;
        assert!(
            (0.5..=2.0).contains(&ratio),
            "tau {} vs 1/gap {}",
            report.tau,
            1.0 / gap
        );
    }

    #[test]
    fn short_horizon_flagged_inconclusive() {
        let geom = segment(8);
        let field = DisorderField::zero(8);
        let mut state = KmcState::from_equilibrium(Arc::clone(&geom), &field, 4, 47).unwrap();
        let profile = cosine_profile(&geom);
        let report = relaxation_time(&mut state, &profile, 60.0, 0.25).unwrap();
        assert!(report.inconclusive);
    }

    #[test]
    fn window_members_cover_and_wrap() {
        let geom = ring(8);
        let members = window_members(&geom, 1);
        assert_eq!(members[0], vec![7, 0, 1]);
        assert_eq!(members[3].len(), 3);
        let full = window_members(&geom, 4);
        for list in &full {
            assert_eq!(list.len(), 8);
        }
    }

    #[test]
    fn frozen_full_configuration_scores_zero() {
        let geom = ring(8);
        let field = DisorderField::zero(8);
        let space = ConfigSpace::new(Arc::clone(&geom), 8).unwrap();
        let measure = CanonicalMeasure::from_field(&field, 8).unwrap();
        let s = two_block_statistic_exact(&space, &measure, &|r| r * r, &|_| 1.0, 1, 0.25).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn full_torus_windows_cancel_exactly() {
        let geom = ring(8);
        let field = DisorderField::zero(8);
        let space = ConfigSpace::new(Arc::clone(&geom), 4).unwrap();
        let measure = CanonicalMeasure::from_field(&field, 4).unwrap();
        // Radius 4 on side 8 is the whole torus for both windows.
        let s = two_block_statistic_exact(&space, &measure, &|r| r, &|_| 1.0, 4, 0.5).unwrap();
        assert_eq!(s, 0.0);
    }

    #[test]
    fn statistic_invariant_under_field_shift() {
        let geom = ring(6);
        let raw = generate_iid(&geom, 1.0, 53).unwrap();
        let (field, _) = quantize_to_grid(&raw, 6).unwrap();
        let space = ConfigSpace::new(Arc::clone(&geom), 3).unwrap();
        let m0 = CanonicalMeasure::from_field(&field, 3).unwrap();
        let shifted: Vec<f64> = field.values.iter().map(|&a| a + 0.7).collect();
        let m1 = CanonicalMeasure::new(&shifted, 3).unwrap();
        let f = |r: f64| r * r;
        let phi = |_: &[f64]| 1.0;
        let s0 = two_block_statistic_exact(&space, &m0, &f, &phi, 1, 0.4).unwrap();
        let s1 = two_block_statistic_exact(&space, &m1, &f, &phi, 1, 0.4).unwrap();
        assert!((s0 - s1).abs() < 1e-12, "{s0} vs {s1}");
    }

    #[test]
    fn monte_carlo_matches_enumeration() {
        let geom = ring(8);
        let field = DisorderField::zero(8);
        let space = ConfigSpace::new(Arc::clone(&geom), 4).unwrap();
        let measure = CanonicalMeasure::from_field(&field, 4).unwrap();
        let f = |r: f64| r * r;
        let phi = |_: &[f64]| 1.0;
        let exact = two_block_statistic_exact(&space, &measure, &f, &phi, 1, 0.25).unwrap();
        let (mc, se) =
            two_block_statistic_mc(&geom, &field, 4, &f, &phi, 1, 0.25, 40_000, 59).unwrap();
        assert!(
            (mc - exact).abs() < 4.0 * se + 1e-12,
            "mc {mc} exact {exact} se {se}"
        );
    }

    #[test]
    fn window_preconditions_enforced() {
        let geom = ring(8);
        let field = DisorderField::zero(8);
        let space = ConfigSpace::new(Arc::clone(&geom), 4).unwrap();
        let measure = CanonicalMeasure::from_field(&field, 4).unwrap();
        let f = |r: f64| r;
        let phi = |_: &[f64]| 1.0;
        // Macro radius floor(0.25*8) = 2 below micro radius 3.
        assert!(two_block_statistic_exact(&space, &measure, &f, &phi, 3, 0.25).is_err());
        // Macro radius 0.
        assert!(two_block_statistic_exact(&space, &measure, &f, &phi, 1, 0.1).is_err());
        // Free boundary refused.
        let free = segment(8);
        let fspace = ConfigSpace::new(Arc::clone(&free), 4).unwrap();
        assert!(two_block_statistic_exact(&fspace, &measure, &f, &phi, 1, 0.25).is_err());
    }

    #[test]
    fn functional_reduces_to_statistic_at_unit_density() {
        let geom = ring(6);
        let field = DisorderField::zero(6);
        let space = ConfigSpace::new(Arc::clone(&geom), 3).unwrap();
        let measure = CanonicalMeasure::from_field(&field, 3).unwrap();
        let f = |r: f64| r * r;
        let phi = |_: &[f64]| 1.0;
        let ones = vec![1.0; space.dim];
        let val = two_block_functional(&space, &measure, &ones, &f, &phi, 1, 0.4).unwrap();
        let stat = two_block_statistic_exact(&space, &measure, &f, &phi, 1, 0.4).unwrap();
        assert!((val - stat).abs() < 1e-12);
    }

    #[test]
    fn functional_constant_f_is_negative_dirichlet() {
        let geom = ring(6);
        let raw = generate_iid(&geom, 1.0, 61).unwrap();
        let (field, _) = quantize_to_grid(&raw, 6).unwrap();
        let space = ConfigSpace::new(Arc::clone(&geom), 3).unwrap();
        let measure = CanonicalMeasure::from_field(&field, 3).unwrap();
        // Random normalized density.
        let mut rng = ChaCha12Rng::seed_from_u64(63);
        let mut density: Vec<f64> = (0..space.dim).map(|_| rng.gen_range(0.1..2.0)).collect();
        let mass: f64 = space
            .enumerate()
            .map(|cfg| measure.weight(&cfg).unwrap() * density[space.rank(&cfg).unwrap()])
            .sum();
        density.iter_mut().for_each(|v| *v /= mass);
        let val =
            two_block_functional(&space, &measure, &density, &|_| 3.0, &|_| 1.0, 1, 0.4).unwrap();
        assert!(val <= 0.0, "constant F must leave -Dirichlet, got {val}");
        let root: Vec<f64> = density.iter().map(|v| v.sqrt()).collect();
        let (_, form) = crate::forms::build_kawasaki(&space, &measure).unwrap();
        let expect = -(space.geom.sides[0] as f64) * form.value(&root);
        assert!((val - expect).abs() < 1e-10 * expect.abs().max(1.0));
    }

    #[test]
    fn functional_rejects_bad_densities() {
        let geom = ring(6);
        let field = DisorderField::zero(6);
        let space = ConfigSpace::new(Arc::clone(&geom), 3).unwrap();
        let measure = CanonicalMeasure::from_field(&field, 3).unwrap();
        let f = |r: f64| r;
        let phi = |_: &[f64]| 1.0;
        let mut neg = vec![1.0; space.dim];
        neg[0] = -0.5;
        assert!(two_block_functional(&space, &measure, &neg, &f, &phi, 1, 0.4).is_err());
        let heavy = vec![1.5; space.dim];
        assert!(two_block_functional(&space, &measure, &heavy, &f, &phi, 1, 0.4).is_err());
    }

    #[test]
    fn sum_tree_select_respects_weights() {
        let mut tree = SumTree::new(5);
        tree.rebuild(&[1.0, 0.0, 2.0, 3.0, 0.0]);
        assert!((tree.total() - 6.0).abs() < 1e-15);
        assert_eq!(tree.select(0.5), 0);
        assert_eq!(tree.select(1.5), 2);
        assert_eq!(tree.select(2.99), 2);
        assert_eq!(tree.select(3.01), 3);
        assert_eq!(tree.select(5.99), 3);
        tree.update(1, 4.0);
        assert!((tree.total() - 10.0).abs() < 1e-15);
        assert_eq!(tree.select(1.5), 1);
    }
}
