//! Reversible jump generators and their Dirichlet quadratic forms over
//! enumerated configuration spaces.
//!
//! Every generator uses the rate convention c(eta -> T eta) = 1 + mu(T
//! eta)/mu(eta), which is reversible by construction and makes the energy
//! <f, (-Gen) f>_mu equal exactly the form D(f) = sum_eta mu(eta)
//! sum_moves (f(T eta) - f(eta))^2 with one term per unordered move.
//! Ordered-pair conventions differ from this by a factor of 2.

use crate::configspace::{ConfigSpace, Configuration};
use crate::ensemble::{CanonicalMeasure, GrandMeasure};
use crate::error::{Error, Result};
use std::collections::HashMap;
use std::sync::Arc;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum MoveSet {
    Glauber,
    Kawasaki,
    BernoulliLaplace,
    SingleExchange(usize, usize),
    WeightedSum,
}

/// Off-diagonal jump rates in CSR layout plus exit rates; the diagonal of
/// the generator is minus the exit rate, so rows sum to zero identically.
#[derive(Debug, Clone)]
pub struct SparseGenerator {
    pub dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    rates: Vec<f64>,
    exit: Vec<f64>,
    pub mu: Arc<Vec<f64>>,
}

impl SparseGenerator {
    fn from_transitions(dim: usize, mut rows: Vec<Vec<(u32, f64)>>, mu: Arc<Vec<f64>>) -> Self {
        let mut row_ptr = Vec::with_capacity(dim + 1);
        let mut col_idx = Vec::new();
        let mut rates = Vec::new();
        let mut exit = vec![0.0; dim];
        row_ptr.push(0);
        for (i, row) in rows.iter_mut().enumerate() {
            row.sort_unstable_by_key(|&(c, _)| c);
            for &(c, r) in row.iter() {
                col_idx.push(c);
                rates.push(r);
                exit[i] += r;
            }
            row_ptr.push(col_idx.len());
        }
        SparseGenerator {
            dim,
            row_ptr,
            col_idx,
            rates,
            exit,
            mu,
        }
    }

    pub fn rate(&self, i: usize, j: usize) -> f64 {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        match self.col_idx[lo..hi].binary_search(&(j as u32)) {
            Ok(k) => self.rates[lo + k],
            Err(_) => 0.0,
        }
    }

    pub fn exit_rate(&self, i: usize) -> f64 {
        self.exit[i]
    }

    pub fn transitions(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        self.col_idx[lo..hi]
            .iter()
            .zip(&self.rates[lo..hi])
            .map(|(&c, &r)| (c as usize, r))
    }

    /// (-Gen) f, the positive-semidefinite action.
    pub fn neg_apply(&self, f: &[f64], out: &mut [f64]) {
        for i in 0..self.dim {
            let mut acc = self.exit[i] * f[i];
            for (j, r) in self.transitions(i) {
                acc -= r * f[j];
            }
            out[i] = acc;
        }
    }

    /// <f, (-Gen) f>_mu.
    pub fn energy(&self, f: &[f64]) -> f64 {
        let mut out = vec![0.0; self.dim];
        self.neg_apply(f, &mut out);
        f.iter()
            .zip(&out)
            .zip(self.mu.iter())
            .map(|((&fi, &gi), &mi)| mi * fi * gi)
            .sum()
    }

    /// Worst relative violation of mu(i) c(i,j) = mu(j) c(j,i) over stored
    /// transitions.
    pub fn detailed_balance_violation(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.dim {
            for (j, rij) in self.transitions(i) {
                if j <= i {
                    continue;
                }
                let fwd = self.mu[i] * rij;
                let bwd = self.mu[j] * self.rate(j, i);
                let scale = fwd.abs().max(bwd.abs());
                if scale > 0.0 {
                    worst = worst.max((fwd - bwd).abs() / scale);
                }
            }
        }
        worst
    }

    /// `row col value` lines, sorted, diagonal included as negative exit
    /// rates; for cross-checks against external tools.
    pub fn dump_triplets(&self) -> String {
        let mut s = String::new();
        for i in 0..self.dim {
            let mut entries: Vec<(usize, f64)> = self.transitions(i).collect();
            entries.push((i, -self.exit[i]));
            entries.sort_unstable_by_key(|&(c, _)| c);
            for (j, v) in entries {
                s.push_str(&format!("{i} {j} {v}\n"));
            }
        }
        s
    }
}

/// Symmetric PSD operator Q with f^T Q f = D(f); the base measure is folded
/// into the entries, so no extra weighting is needed when evaluating.
#[derive(Debug, Clone)]
pub struct QuadraticForm {
    pub dim: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<u32>,
    vals: Vec<f64>,
    pub mu: Arc<Vec<f64>>,
    pub label: MoveSet,
}

impl QuadraticForm {
    /// Accumulate mu(i) * w * (delta_i - delta_j)(delta_i - delta_j)^T terms.
    fn from_moves(
        dim: usize,
        moves: impl Iterator<Item = (usize, usize, f64)>,
        mu: Arc<Vec<f64>>,
        label: MoveSet,
    ) -> Self {
        let mut acc: HashMap<(u32, u32), f64> = HashMap::new();
        for (i, j, w) in moves {
            if i == j {
                continue;
            }
            let c = mu[i] * w;
            *acc.entry((i as u32, i as u32)).or_default() += c;
            *acc.entry((j as u32, j as u32)).or_default() += c;
            *acc.entry((i as u32, j as u32)).or_default() -= c;
            *acc.entry((j as u32, i as u32)).or_default() -= c;
        }
        Self::from_entries(dim, acc, mu, label)
    }

    fn from_entries(
        dim: usize,
        acc: HashMap<(u32, u32), f64>,
        mu: Arc<Vec<f64>>,
        label: MoveSet,
    ) -> Self {
        let mut entries: Vec<((u32, u32), f64)> = acc.into_iter().collect();
        entries.sort_unstable_by_key(|&(k, _)| k);
        let mut row_ptr = vec![0usize; dim + 1];
        let mut col_idx = Vec::with_capacity(entries.len());
        let mut vals = Vec::with_capacity(entries.len());
        for ((r, c), v) in entries {
            row_ptr[r as usize + 1] += 1;
            col_idx.push(c);
            vals.push(v);
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        QuadraticForm {
            dim,
            row_ptr,
            col_idx,
            vals,
            mu,
            label,
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.dim).flat_map(move |i| {
            let lo = self.row_ptr[i];
            let hi = self.row_ptr[i + 1];
            self.col_idx[lo..hi]
                .iter()
                .zip(&self.vals[lo..hi])
                .map(move |(&c, &v)| (i, c as usize, v))
        })
    }

    pub fn apply(&self, f: &[f64], out: &mut [f64]) {
        for (i, slot) in out[..self.dim].iter_mut().enumerate() {
            let lo = self.row_ptr[i];
            let hi = self.row_ptr[i + 1];
            let mut acc = 0.0;
            for (&c, &v) in self.col_idx[lo..hi].iter().zip(&self.vals[lo..hi]) {
                acc += v * f[c as usize];
            }
            *slot = acc;
        }
    }

    /// D(f) = f^T Q f.
    pub fn value(&self, f: &[f64]) -> f64 {
        let mut out = vec![0.0; self.dim];
        self.apply(f, &mut out);
        f.iter().zip(&out).map(|(&a, &b)| a * b).sum()
    }

    pub fn same_space(&self, other: &QuadraticForm) -> bool {
        self.dim == other.dim
            && (Arc::ptr_eq(&self.mu, &other.mu) || self.mu.as_slice() == other.mu.as_slice())
    }

    /// Largest diagonal entry; a cheap scale for tolerance checks.
    pub fn scale(&self) -> f64 {
        (0..self.dim).fold(0.0f64, |m, i| {
            let lo = self.row_ptr[i];
            let hi = self.row_ptr[i + 1];
            match self.col_idx[lo..hi].binary_search(&(i as u32)) {
                Ok(k) => m.max(self.vals[lo + k]),
                Err(_) => m,
            }
        })
    }

    pub fn dump_triplets(&self) -> String {
        let mut s = String::new();
        for (i, j, v) in self.entries() {
            s.push_str(&format!("{i} {j} {v}\n"));
        }
        s
    }
}

/// Stationary weights indexed by rank.
pub fn measure_vector(space: &ConfigSpace, measure: &CanonicalMeasure) -> Result<Arc<Vec<f64>>> {
    if space.n_sites() != measure.n_sites() || space.n != measure.n {
        return Err(Error::InvalidArgument(
            "configuration space and measure disagree on sites or particle number".into(),
        ));
    }
    let mut mu = vec![0.0; space.dim];
    for cfg in space.enumerate() {
        mu[space.rank(&cfg)?] = measure.weight(&cfg)?;
    }
    Ok(Arc::new(mu))
}

fn check_nondegenerate(space: &ConfigSpace) -> Result<()> {
    if space.n == 0 || space.n == space.n_sites() {
        return Err(Error::Degenerate(format!(
            "sector N = {} of {} sites is a point mass",
            space.n,
            space.n_sites()
        )));
    }
    Ok(())
}

fn build_exchange_dynamics(
    space: &ConfigSpace,
    measure: &CanonicalMeasure,
    pairs: &[(usize, usize)],
    label: MoveSet,
) -> Result<(SparseGenerator, QuadraticForm)> {
    check_nondegenerate(space)?;
    let mu = measure_vector(space, measure)?;
    let dim = space.dim;
    let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); dim];
    let mut moves: Vec<(usize, usize, f64)> = Vec::new();
    for cfg in space.enumerate() {
        let i = space.rank(&cfg)?;
        for &(x, y) in pairs {
            if cfg.occupied(x) == cfg.occupied(y) {
                continue;
            }
            let j = space.rank(&cfg.apply_swap(x, y))?;
            // Jump from the occupied to the empty site of the pair.
            let (from, to) = if cfg.occupied(x) { (x, y) } else { (y, x) };
            let rate = 1.0 + (measure.alpha[to] - measure.alpha[from]).exp();
            rows[i].push((j as u32, rate));
            moves.push((i, j, 1.0));
        }
    }
    let gen = SparseGenerator::from_transitions(dim, rows, Arc::clone(&mu));
    // Each unordered state transition appears twice in `moves` (once from
    // each endpoint), which is exactly the mu(i)+mu(j) coefficient the
    // unordered-move form needs.
    let form = QuadraticForm::from_moves(dim, moves.into_iter(), mu, label);
    Ok((gen, form))
}

/// Nearest-neighbour exchange dynamics on the space's geometry.
pub fn build_kawasaki(
    space: &ConfigSpace,
    measure: &CanonicalMeasure,
) -> Result<(SparseGenerator, QuadraticForm)> {
    let pairs: Vec<(usize, usize)> = space
        .geom
        .bonds
        .iter()
        .map(|&(a, b)| (a as usize, b as usize))
        .collect();
    if pairs.is_empty() {
        return Err(Error::InvalidArgument(
            "geometry has no bonds; exchange dynamics needs a connected site graph".into(),
        ));
    }
    build_exchange_dynamics(space, measure, &pairs, MoveSet::Kawasaki)
}

/// Exchange dynamics over every unordered site pair, regardless of distance.
pub fn build_bl(
    space: &ConfigSpace,
    measure: &CanonicalMeasure,
) -> Result<(SparseGenerator, QuadraticForm)> {
    let m = space.n_sites();
    let mut pairs = Vec::with_capacity(m * (m - 1) / 2);
    for x in 0..m {
        for y in (x + 1)..m {
            pairs.push((x, y));
        }
    }
    build_exchange_dynamics(space, measure, &pairs, MoveSet::BernoulliLaplace)
}

/// Single-site flip dynamics on the full 2^m cube, reversible for the
/// unconditioned product measure. States are indexed by their bit masks.
pub fn build_glauber(grand: &GrandMeasure) -> Result<(SparseGenerator, QuadraticForm)> {
    let m = grand.n_sites();
    if m > 20 {
        return Err(Error::InvalidArgument(format!(
            "exact flip dynamics capped at 20 sites, got {m}"
        )));
    }
    if m == 0 {
        return Err(Error::InvalidArgument("empty site set".into()));
    }
    let dim = 1usize << m;
    let mut mu = vec![0.0; dim];
    for (bits, slot) in mu.iter_mut().enumerate() {
        *slot = grand.prob(&Configuration::new(bits as u64, m as u32));
    }
    let mu = Arc::new(mu);
    let mut rows: Vec<Vec<(u32, f64)>> = vec![Vec::new(); dim];
    let mut moves = Vec::with_capacity(dim * m);
    for (bits, row) in rows.iter_mut().enumerate() {
        for x in 0..m {
            let j = bits ^ (1 << x);
            let eta_x = (bits >> x) & 1;
            let rate = 1.0 + (grand.alpha[x] * (1.0 - 2.0 * eta_x as f64)).exp();
            row.push((j as u32, rate));
            moves.push((bits, j, 1.0));
        }
    }
    let gen = SparseGenerator::from_transitions(dim, rows, Arc::clone(&mu));
    let form = QuadraticForm::from_moves(dim, moves.into_iter(), mu, MoveSet::Glauber);
    Ok((gen, form))
}

/// The form of one exchange move alone: f -> sum_eta mu(eta) (f(T_{x,y}
/// eta) - f(eta))^2.
pub fn build_single_exchange(
    space: &ConfigSpace,
    measure: &CanonicalMeasure,
    x: usize,
    y: usize,
) -> Result<QuadraticForm> {
    if x == y {
        return Err(Error::InvalidArgument(
            "exchange needs two distinct sites".into(),
        ));
    }
    let m = space.n_sites();
    if x >= m || y >= m {
        return Err(Error::InvalidArgument(format!(
            "exchange sites ({x}, {y}) out of range for {m} sites"
        )));
    }
    let mu = measure_vector(space, measure)?;
    let dim = space.dim;
    let mut moves = Vec::new();
    for cfg in space.enumerate() {
        if cfg.occupied(x) == cfg.occupied(y) {
            continue;
        }
        let i = space.rank(&cfg)?;
        let j = space.rank(&cfg.apply_swap(x, y))?;
        moves.push((i, j, 1.0));
    }
    Ok(QuadraticForm::from_moves(
        dim,
        moves.into_iter(),
        mu,
        MoveSet::SingleExchange(x, y),
    ))
}

/// Positive combination sum_i w_i Q_i of forms on one space and measure.
pub fn weighted_sum(forms: &[&QuadraticForm], weights: &[f64]) -> Result<QuadraticForm> {
    if forms.is_empty() || forms.len() != weights.len() {
        return Err(Error::InvalidArgument(
            "weighted sum needs one positive weight per form".into(),
        ));
    }
    if let Some(w) = weights.iter().find(|w| **w <= 0.0 || !w.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "weights must be positive finite reals, got {w}"
        )));
    }
    let first = forms[0];
    if forms.iter().any(|f| !first.same_space(f)) {
        return Err(Error::InvalidArgument(
            "weighted sum over mixed spaces or measures".into(),
        ));
    }
    let mut acc: HashMap<(u32, u32), f64> = HashMap::new();
    for (form, &w) in forms.iter().zip(weights) {
        for (i, j, v) in form.entries() {
            *acc.entry((i as u32, j as u32)).or_default() += w * v;
        }
    }
    Ok(QuadraticForm::from_entries(
        first.dim,
        acc,
        Arc::clone(&first.mu),
        MoveSet::WeightedSum,
    ))
}
