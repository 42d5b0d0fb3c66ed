//! Spectral gaps of Dirichlet forms and generalized-ratio certificates
//! comparing one form against another.
//!
//! Gaps are eigenvalues of the measure-weighted problem Q f = lambda M f
//! with M = diag(mu), solved on the symmetrized operator S = M^{-1/2} Q
//! M^{-1/2} whose kernel is sqrt(mu). Ratio problems max_f A(f)/B(f) are
//! solved by whitening B on the complement of its kernel. Both switch from
//! dense to matrix-free iterative solvers at `DENSE_LIMIT` states.

use crate::configspace::ConfigSpace;
use crate::disorder::DisorderField;
use crate::ensemble::CanonicalMeasure;
use crate::error::{Error, Result};
use crate::forms::{build_bl, build_kawasaki, build_single_exchange, weighted_sum, QuadraticForm};
use crate::lattice::{Boundary, LatticeGeometry};
use nalgebra::DMatrix;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use std::sync::Arc;

/// States at and above this count use matrix-free iterative solvers.
pub const DENSE_LIMIT: usize = 2000;
/// Relative residual target for reported eigenpairs.
pub const RESIDUAL_TOL: f64 = 1e-8;
/// Relative eigenvalue threshold separating the kernel of a PSD form.
const KERNEL_REL_TOL: f64 = 1e-12;
/// A kernel vector of B must carry at most this much A-energy, relative to
/// the scale of A, for the ratio to be finite.
const CONTAINMENT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    Dense,
    Iterative,
}

impl Method {
    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Dense => "dense",
            Method::Iterative => "iterative",
        }
    }
}

#[derive(Debug, Clone)]
pub struct GapResult {
    pub gap: f64,
    pub method: Method,
    /// ||S v - gap v|| / gap for the reported eigenpair.
    pub residual: f64,
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct PencilResult {
    pub lambda_max: f64,
    /// Certificate envelope the ratio is checked against.
    pub bound: f64,
    pub pass: bool,
    pub method: Method,
    /// ||A f - lambda B f|| / (lambda ||B f||) for the reported maximizer.
    pub residual: f64,
}

fn dense_sym_eigen(mat: DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = nalgebra::linalg::SymmetricEigen::new(mat);
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let dim = eig.eigenvectors.nrows();
    let mut vecs = DMatrix::zeros(dim, order.len());
    for (k, &i) in order.iter().enumerate() {
        vecs.set_column(k, &eig.eigenvectors.column(i));
    }
    (vals, vecs)
}

/// Connected components of the off-diagonal structure; two ranks in
/// different classes witness reducibility.
fn connectivity_witness(form: &QuadraticForm) -> Option<(usize, usize)> {
    let dim = form.dim;
    let mut parent: Vec<usize> = (0..dim).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for (i, j, v) in form.entries() {
        if i != j && v != 0.0 {
            let (a, b) = (find(&mut parent, i), find(&mut parent, j));
            if a != b {
                parent[a] = b;
            }
        }
    }
    let root0 = find(&mut parent, 0);
    (1..dim)
        .find(|&i| find(&mut parent, i) != root0)
        .map(|i| (0, i))
}

fn sqrt_mu(mu: &[f64]) -> Vec<f64> {
    mu.iter().map(|&m| m.sqrt()).collect()
}

/// Symmetrized operator application: out = M^{-1/2} Q M^{-1/2} f.
fn apply_sym(form: &QuadraticForm, inv_sqrt: &[f64], f: &[f64], tmp: &mut [f64], out: &mut [f64]) {
    for i in 0..form.dim {
        tmp[i] = f[i] * inv_sqrt[i];
    }
    form.apply(tmp, out);
    for i in 0..form.dim {
        out[i] *= inv_sqrt[i];
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Smallest nonzero eigenvalue of the form in the mu-weighted geometry.
pub fn spectral_gap(form: &QuadraticForm) -> Result<GapResult> {
    spectral_gap_with_limit(form, DENSE_LIMIT)
}

/// As `spectral_gap` with an explicit dense/iterative crossover, so both
/// paths can be exercised on the same instance.
pub fn spectral_gap_with_limit(form: &QuadraticForm, dense_limit: usize) -> Result<GapResult> {
    let dim = form.dim;
    if dim <= 1 {
        return Ok(GapResult {
            gap: 0.0,
            method: Method::Dense,
            residual: 0.0,
            degenerate: true,
        });
    }
    if let Some((a, b)) = connectivity_witness(form) {
        return Err(Error::Reducible {
            state_a: format!("rank {a}"),
            state_b: format!("rank {b}"),
        });
    }
    let mu = form.mu.as_slice();
    let root = sqrt_mu(mu);
    let inv_sqrt: Vec<f64> = root.iter().map(|&r| 1.0 / r).collect();
    if dim < dense_limit {
        let mut s = DMatrix::zeros(dim, dim);
        for (i, j, v) in form.entries() {
            s[(i, j)] = v * inv_sqrt[i] * inv_sqrt[j];
        }
        let (vals, vecs) = dense_sym_eigen(s);
        let gap = vals[1];
        let v: Vec<f64> = vecs.column(1).iter().copied().collect();
        let mut tmp = vec![0.0; dim];
        let mut sv = vec![0.0; dim];
        apply_sym(form, &inv_sqrt, &v, &mut tmp, &mut sv);
        let mut res = 0.0;
        for i in 0..dim {
            let d = sv[i] - gap * v[i];
            res += d * d;
        }
        let residual = res.sqrt() / (gap * norm(&v));
        return Ok(GapResult {
            gap,
            method: Method::Dense,
            residual,
            degenerate: false,
        });
    }
    iterative_gap(form, &root, &inv_sqrt)
}

/// Inverse iteration on the symmetrized operator with the known kernel
/// sqrt(mu) deflated; inner solves by conjugate gradients on the
/// complement, where the operator is positive definite.
fn iterative_gap(form: &QuadraticForm, root: &[f64], inv_sqrt: &[f64]) -> Result<GapResult> {
    let dim = form.dim;
    let kernel = {
        let n = norm(root);
        root.iter().map(|&r| r / n).collect::<Vec<f64>>()
    };
    let project = |v: &mut [f64]| {
        let c = dot(v, &kernel);
        for (vi, ki) in v.iter_mut().zip(&kernel) {
            *vi -= c * ki;
        }
    };
    let mut tmp = vec![0.0; dim];
    let apply = |f: &[f64], out: &mut [f64], tmp: &mut [f64]| {
        apply_sym(form, inv_sqrt, f, tmp, out);
    };

    let mut rng = ChaCha12Rng::seed_from_u64(0x5EED);
    let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0f64..1.0)).collect();
    project(&mut v);
    let nv = norm(&v);
    v.iter_mut().for_each(|x| *x /= nv);

    let mut lambda = 0.0;
    let mut residual = f64::INFINITY;
    let mut sv = vec![0.0; dim];
    for _ in 0..200 {
        // Solve S w = v on the complement by CG.
        let mut w = vec![0.0; dim];
        let mut r = v.clone();
        let mut p = r.clone();
        let mut rs = dot(&r, &r);
        let mut ap = vec![0.0; dim];
        let max_cg = 40 * (dim as f64).sqrt() as usize + 200;
        for _ in 0..max_cg {
            apply(&p, &mut ap, &mut tmp);
            project(&mut ap);
            let denom = dot(&p, &ap);
            if denom <= 0.0 {
                break;
            }
            let alpha = rs / denom;
            for i in 0..dim {
                w[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rs_new = dot(&r, &r);
            if rs_new.sqrt() <= 1e-13 {
                break;
            }
            let beta = rs_new / rs;
            rs = rs_new;
            for i in 0..dim {
                p[i] = r[i] + beta * p[i];
            }
        }
        project(&mut w);
        let nw = norm(&w);
        if nw == 0.0 {
            break;
        }
        for (vi, wi) in v.iter_mut().zip(&w) {
            *vi = wi / nw;
        }
        apply(&v, &mut sv, &mut tmp);
        project(&mut sv);
        lambda = dot(&v, &sv);
        let mut res = 0.0;
        for i in 0..dim {
            let d = sv[i] - lambda * v[i];
            res += d * d;
        }
        residual = res.sqrt() / lambda.abs().max(f64::MIN_POSITIVE);
        if residual <= RESIDUAL_TOL {
            return Ok(GapResult {
                gap: lambda,
                method: Method::Iterative,
                residual,
                degenerate: false,
            });
        }
    }
    if residual <= RESIDUAL_TOL {
        Ok(GapResult {
            gap: lambda,
            method: Method::Iterative,
            residual,
            degenerate: false,
        })
    } else {
        Err(Error::NonConvergence {
            residual,
            tolerance: RESIDUAL_TOL,
        })
    }
}

/// max over f not in ker B of A(f)/B(f), with the kernel-containment
/// precondition ker B within ker A checked explicitly.
pub fn pencil_ratio(a: &QuadraticForm, b: &QuadraticForm) -> Result<(f64, Method, f64)> {
    if !a.same_space(b) {
        return Err(Error::InvalidArgument(
            "ratio of forms on different spaces or measures".into(),
        ));
    }
    let dim = a.dim;
    if dim < DENSE_LIMIT {
        dense_pencil(a, b)
    } else {
        iterative_pencil(a, b)
    }
}

fn dense_pencil(a: &QuadraticForm, b: &QuadraticForm) -> Result<(f64, Method, f64)> {
    let dim = a.dim;
    let mut qa = DMatrix::zeros(dim, dim);
    for (i, j, v) in a.entries() {
        qa[(i, j)] = v;
    }
    let mut qb = DMatrix::zeros(dim, dim);
    for (i, j, v) in b.entries() {
        qb[(i, j)] = v;
    }
    let (bvals, bvecs) = dense_sym_eigen(qb.clone());
    let bmax = bvals.last().copied().unwrap_or(0.0);
    if bmax <= 0.0 {
        return Err(Error::InvalidArgument(
            "right-hand form is identically zero".into(),
        ));
    }
    let a_scale = a.scale().max(f64::MIN_POSITIVE);
    let mut keep = Vec::new();
    for (k, &val) in bvals.iter().enumerate() {
        if val > KERNEL_REL_TOL * bmax {
            keep.push(k);
        } else {
            let u = bvecs.column(k);
            let energy = (&qa * u).dot(&u).abs();
            if energy > CONTAINMENT_TOL * a_scale {
                return Err(Error::KernelEscape {
                    residual: energy / a_scale,
                });
            }
        }
    }
    if keep.is_empty() {
        // B vanishes and A vanishes with it; the ratio is 0/0 over an empty
        // complement.
        return Ok((0.0, Method::Dense, 0.0));
    }
    let mut w = DMatrix::zeros(dim, keep.len());
    for (col, &k) in keep.iter().enumerate() {
        let scale = 1.0 / bvals[k].sqrt();
        w.set_column(col, &(bvecs.column(k) * scale));
    }
    let c = w.transpose() * &qa * &w;
    let sym = (&c + c.transpose()) * 0.5;
    let (cvals, cvecs) = dense_sym_eigen(sym);
    let lambda = *cvals.last().unwrap();
    let z = cvecs.column(cvals.len() - 1);
    let f = &w * z;
    let num = (&qa * &f - &qb * &f * lambda).norm();
    let den = lambda.abs().max(f64::MIN_POSITIVE) * (&qb * &f).norm().max(f64::MIN_POSITIVE);
    Ok((lambda, Method::Dense, num / den))
}

/// Power iteration on B^+ A, for right-hand forms whose kernel is exactly
/// the constants (connected move sets). Larger kernels stall the inner CG
/// and surface as nonconvergence.
fn iterative_pencil(a: &QuadraticForm, b: &QuadraticForm) -> Result<(f64, Method, f64)> {
    let dim = a.dim;
    let ones = vec![1.0 / (dim as f64).sqrt(); dim];
    // Containment precondition for the assumed kernel.
    let a_scale = a.scale().max(f64::MIN_POSITIVE);
    let energy = a.value(&ones).abs();
    if energy > CONTAINMENT_TOL * a_scale {
        return Err(Error::KernelEscape {
            residual: energy / a_scale,
        });
    }
    let project = |v: &mut [f64]| {
        let c = dot(v, &ones);
        for (vi, oi) in v.iter_mut().zip(&ones) {
            *vi -= c * oi;
        }
    };
    let mut rng = ChaCha12Rng::seed_from_u64(0xA11CE);
    let mut f: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0f64..1.0)).collect();
    project(&mut f);
    let nf = norm(&f);
    f.iter_mut().for_each(|x| *x /= nf);
    let mut lambda = 0.0;
    let mut residual = f64::INFINITY;
    let mut af = vec![0.0; dim];
    let mut bf = vec![0.0; dim];
    for _ in 0..500 {
        a.apply(&f, &mut af);
        project(&mut af);
        // Solve B w = af by CG on the complement of the constants.
        let mut w = vec![0.0; dim];
        let mut r = af.clone();
        let mut p = r.clone();
        let mut rs = dot(&r, &r);
        let mut ap = vec![0.0; dim];
        let max_cg = 40 * (dim as f64).sqrt() as usize + 200;
        for _ in 0..max_cg {
            b.apply(&p, &mut ap);
            project(&mut ap);
            let denom = dot(&p, &ap);
            if denom <= 0.0 {
                break;
            }
            let alpha = rs / denom;
            for i in 0..dim {
                w[i] += alpha * p[i];
                r[i] -= alpha * ap[i];
            }
            let rs_new = dot(&r, &r);
            if rs_new.sqrt() <= 1e-12 * rs.sqrt().max(1e-300) + 1e-14 {
                break;
            }
            let beta = rs_new / rs;
            rs = rs_new;
            for i in 0..dim {
                p[i] = r[i] + beta * p[i];
            }
        }
        project(&mut w);
        let nw = norm(&w);
        if nw == 0.0 {
            break;
        }
        for (fi, wi) in f.iter_mut().zip(&w) {
            *fi = wi / nw;
        }
        a.apply(&f, &mut af);
        b.apply(&f, &mut bf);
        let fa = dot(&f, &af);
        let fb = dot(&f, &bf);
        if fb <= 0.0 {
            break;
        }
        lambda = fa / fb;
        let mut res = 0.0;
        let mut bn = 0.0;
        for i in 0..dim {
            let d = af[i] - lambda * bf[i];
            res += d * d;
            bn += bf[i] * bf[i];
        }
        residual = res.sqrt() / (lambda.abs().max(f64::MIN_POSITIVE) * bn.sqrt());
        if residual <= RESIDUAL_TOL {
            return Ok((lambda, Method::Iterative, residual));
        }
    }
    if residual <= RESIDUAL_TOL {
        Ok((lambda, Method::Iterative, residual))
    } else {
        Err(Error::NonConvergence {
            residual,
            tolerance: RESIDUAL_TOL,
        })
    }
}

fn segment(l: usize) -> Result<Arc<LatticeGeometry>> {
    Ok(Arc::new(LatticeGeometry::build_box(1, l, Boundary::Free)?))
}

/// Certificate: at zero field on a k-site segment, the exchange of the two
/// endpoint contents is dominated by the chain of nearest-neighbour bond
/// forms weighted by 1/rho_x, provided the positive weights rho sum to at
/// most 1. Asserts the ratio is at most 1.
pub fn certify_homogeneous_exchange(k: usize, n: usize, rho: &[f64]) -> Result<PencilResult> {
    if k < 2 {
        return Err(Error::InvalidArgument(
            "chain needs at least 2 sites".into(),
        ));
    }
    if rho.len() != k - 1 {
        return Err(Error::InvalidArgument(format!(
            "need one weight per bond: {} bonds, got {} weights",
            k - 1,
            rho.len()
        )));
    }
    if rho.iter().any(|&r| r <= 0.0 || !r.is_finite()) {
        return Err(Error::InvalidArgument("weights must be positive".into()));
    }
    let total: f64 = rho.iter().sum();
    if total > 1.0 + 1e-12 {
        return Err(Error::InvalidArgument(format!(
            "weights must sum to at most 1, got {total}"
        )));
    }
    if n == 0 || n >= k {
        return Err(Error::Degenerate(format!(
            "sector N = {n} of {k} sites has no exchange dynamics"
        )));
    }
    let geom = segment(k)?;
    let space = ConfigSpace::new(geom, n)?;
    let measure = CanonicalMeasure::new(&vec![0.0; k], n)?;
    let a = build_single_exchange(&space, &measure, 0, k - 1)?;
    let bonds: Vec<QuadraticForm> = (0..k - 1)
        .map(|x| build_single_exchange(&space, &measure, x, x + 1))
        .collect::<Result<_>>()?;
    let refs: Vec<&QuadraticForm> = bonds.iter().collect();
    let weights: Vec<f64> = rho.iter().map(|&r| 1.0 / r).collect();
    let b = weighted_sum(&refs, &weights)?;
    let (lambda_max, method, residual) = pencil_ratio(&a, &b)?;
    Ok(PencilResult {
        lambda_max,
        bound: 1.0,
        pass: lambda_max <= 1.0 + 1e-9,
        method,
        residual,
    })
}

/// Certificate: under a bounded field on a segment, the endpoint exchange
/// form is dominated by e^{13K} L times the sum of nearest-neighbour bond
/// forms. Reports the observed ratio; slack is expected.
pub fn certify_disordered_exchange(field: &DisorderField, n: usize) -> Result<PencilResult> {
    let l = field.len();
    if l < 2 {
        return Err(Error::InvalidArgument(
            "segment needs at least 2 sites".into(),
        ));
    }
    if n == 0 || n >= l {
        return Err(Error::Degenerate(format!(
            "sector N = {n} of {l} sites has no exchange dynamics"
        )));
    }
    let geom = segment(l)?;
    let space = ConfigSpace::new(geom, n)?;
    let measure = CanonicalMeasure::from_field(field, n)?;
    let a = build_single_exchange(&space, &measure, 0, l - 1)?;
    let bonds: Vec<QuadraticForm> = (0..l - 1)
        .map(|x| build_single_exchange(&space, &measure, x, x + 1))
        .collect::<Result<_>>()?;
    let refs: Vec<&QuadraticForm> = bonds.iter().collect();
    let b = weighted_sum(&refs, &vec![1.0; refs.len()])?;
    let (lambda_max, method, residual) = pencil_ratio(&a, &b)?;
    let bound = (13.0 * field.bound).exp() * l as f64;
    Ok(PencilResult {
        lambda_max,
        bound,
        pass: lambda_max <= bound * (1.0 + 1e-9),
        method,
        residual,
    })
}

/// Gap of the nearest-neighbour exchange dynamics for a field and sector,
/// with reducibility witnesses spelled as configuration strings.
pub fn kawasaki_gap(
    geom: &Arc<LatticeGeometry>,
    field: &DisorderField,
    n: usize,
) -> Result<GapResult> {
    let space = ConfigSpace::new(Arc::clone(geom), n)?;
    if n == 0 || n == space.n_sites() {
        return Ok(GapResult {
            gap: 0.0,
            method: Method::Dense,
            residual: 0.0,
            degenerate: true,
        });
    }
    let measure = CanonicalMeasure::from_field(field, n)?;
    let (_, form) = build_kawasaki(&space, &measure)?;
    spectral_gap(&form).map_err(|e| relabel_reducible(e, &space))
}

/// Gap of the all-pairs exchange dynamics.
pub fn bl_gap(alpha: &[f64], n: usize) -> Result<GapResult> {
    let geom = segment(alpha.len())?;
    let space = ConfigSpace::new(geom, n)?;
    if n == 0 || n == space.n_sites() {
        return Ok(GapResult {
            gap: 0.0,
            method: Method::Dense,
            residual: 0.0,
            degenerate: true,
        });
    }
    let measure = CanonicalMeasure::new(alpha, n)?;
    let (_, form) = build_bl(&space, &measure)?;
    spectral_gap(&form).map_err(|e| relabel_reducible(e, &space))
}

/// |sites| / gap of the all-pairs exchange form: the empirical variance
/// comparison constant for one instance.
pub fn bl_variance_constant(alpha: &[f64], n: usize) -> Result<f64> {
    let gap = bl_gap(alpha, n)?;
    if gap.degenerate {
        return Err(Error::Degenerate(format!(
            "sector N = {n} of {} sites is a point mass",
            alpha.len()
        )));
    }
    Ok(alpha.len() as f64 / gap.gap)
}

/// Gap of the single-site flip dynamics under the product measure.
pub fn glauber_gap(alpha: &[f64]) -> Result<GapResult> {
    let grand = crate::ensemble::GrandMeasure::new(alpha);
    let (_, form) = crate::forms::build_glauber(&grand)?;
    spectral_gap(&form)
}

fn relabel_reducible(e: Error, space: &ConfigSpace) -> Error {
    if let Error::Reducible { state_a, state_b } = &e {
        let parse = |s: &str| s.trim_start_matches("rank ").parse::<usize>().ok();
        if let (Some(a), Some(b)) = (parse(state_a), parse(state_b)) {
            if let (Ok(ca), Ok(cb)) = (space.unrank(a), space.unrank(b)) {
                return Error::Reducible {
                    state_a: format!("{ca}"),
                    state_b: format!("{cb}"),
                };
            }
        }
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::{force_endpoints, generate_iid, quantize_to_grid};

    fn flat_field(l: usize) -> DisorderField {
        DisorderField::zero(l)
    }

    #[test]
    fn two_state_gap_is_four() {
        let geom = segment(2).unwrap();
        let gap = kawasaki_gap(&geom, &flat_field(2), 1).unwrap();
        assert!((gap.gap - 4.0).abs() < 1e-10);
        assert!(gap.residual <= RESIDUAL_TOL);
    }

    #[test]
    fn degenerate_sector_flagged() {
        let geom = segment(4).unwrap();
        let gap = kawasaki_gap(&geom, &flat_field(4), 0).unwrap();
        assert!(gap.degenerate);
        assert_eq!(gap.gap, 0.0);
    }

    #[test]
    fn homogeneous_exchange_gap_closed_form() {
        // At zero field the nearest-neighbour exchange gap on a segment is
        // 4 (1 - cos(pi/L)), independent of the sector.
        for l in [4usize, 6] {
            let geom = segment(l).unwrap();
            let expect = 4.0 * (1.0 - (std::f64::consts::PI / l as f64).cos());
            for n in 1..l {
                let gap = kawasaki_gap(&geom, &flat_field(l), n).unwrap();
                assert!(
                    (gap.gap - expect).abs() < 1e-8 * expect,
                    "L={l} N={n}: {} vs {expect}",
                    gap.gap
                );
            }
        }
    }

    #[test]
    fn glauber_flat_gap_is_four() {
        let gap = glauber_gap(&[0.0; 3]).unwrap();
        assert!((gap.gap - 4.0).abs() < 1e-9);
    }

    #[test]
    fn glauber_product_gap_formula() {
        for seed in 0..10 {
            let geom = segment(4).unwrap();
            let field = generate_iid(&geom, 1.0, 100 + seed).unwrap();
            let gap = glauber_gap(&field.values).unwrap();
            let expect = field
                .values
                .iter()
                .map(|&a| 2.0 + 2.0 * a.cosh())
                .fold(f64::INFINITY, f64::min);
            assert!(
                (gap.gap - expect).abs() < 1e-9,
                "seed {seed}: {} vs {expect}",
                gap.gap
            );
        }
    }

    #[test]
    fn bl_gap_dominates_kawasaki_gap() {
        let geom = segment(6).unwrap();
        let field = generate_iid(&geom, 1.0, 3).unwrap();
        let kaw = kawasaki_gap(&geom, &field, 3).unwrap();
        let bl = bl_gap(&field.values, 3).unwrap();
        assert!(bl.gap >= kaw.gap - 1e-10);
    }

    #[test]
    fn dense_and_iterative_paths_agree() {
        let geom = segment(10).unwrap();
        let field = generate_iid(&geom, 1.0, 9).unwrap();
        let space = ConfigSpace::new(Arc::clone(&geom), 5).unwrap();
        let measure = CanonicalMeasure::from_field(&field, 5).unwrap();
        let (_, form) = build_kawasaki(&space, &measure).unwrap();
        let dense = spectral_gap_with_limit(&form, usize::MAX).unwrap();
        let iter = spectral_gap_with_limit(&form, 1).unwrap();
        assert_eq!(dense.method, Method::Dense);
        assert_eq!(iter.method, Method::Iterative);
        assert!(
            (dense.gap - iter.gap).abs() <= 1e-7 * dense.gap,
            "dense {} vs iterative {}",
            dense.gap,
            iter.gap
        );
    }

    #[test]
    fn reducible_move_set_names_states() {
        // Only one exchange move on a 4-site, 2-particle space cannot reach
        // every configuration.
        let geom = segment(4).unwrap();
        let space = ConfigSpace::new(Arc::clone(&geom), 2).unwrap();
        let measure = CanonicalMeasure::new(&[0.0; 4], 2).unwrap();
        let lonely = build_single_exchange(&space, &measure, 0, 1).unwrap();
        match spectral_gap(&lonely) {
            Err(Error::Reducible { .. }) => {}
            other => panic!("expected reducibility error, got {other:?}"),
        }
    }

    #[test]
    fn pencil_identity_and_scaling() {
        let geom = segment(5).unwrap();
        let field = generate_iid(&geom, 1.0, 4).unwrap();
        let space = ConfigSpace::new(Arc::clone(&geom), 2).unwrap();
        let measure = CanonicalMeasure::from_field(&field, 2).unwrap();
        let (_, kaw) = build_kawasaki(&space, &measure).unwrap();
        let (same, _, _) = pencil_ratio(&kaw, &kaw).unwrap();
        assert!((same - 1.0).abs() < 1e-9);
        let double = weighted_sum(&[&kaw], &[2.0]).unwrap();
        let (two, _, _) = pencil_ratio(&double, &kaw).unwrap();
        assert!((two - 2.0).abs() < 1e-9);
        // Simultaneous scaling leaves the ratio alone.
        let (still_two, _, _) = pencil_ratio(
            &weighted_sum(&[&double], &[3.0]).unwrap(),
            &weighted_sum(&[&kaw], &[3.0]).unwrap(),
        )
        .unwrap();
        assert!((still_two - 2.0).abs() < 1e-9);
    }

    #[test]
    fn pencil_single_bond_is_one() {
        let geom = segment(2).unwrap();
        let space = ConfigSpace::new(Arc::clone(&geom), 1).unwrap();
        let measure = CanonicalMeasure::new(&[0.0, 0.0], 1).unwrap();
        let bond = build_single_exchange(&space, &measure, 0, 1).unwrap();
        let (lambda, _, _) = pencil_ratio(&bond, &bond).unwrap();
        assert!((lambda - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pencil_detects_kernel_escape() {
        // B supported on one bond annihilates observables that are
        // symmetric under that bond, but a different single-bond A does not.
        let geom = segment(4).unwrap();
        let space = ConfigSpace::new(Arc::clone(&geom), 2).unwrap();
        let measure = CanonicalMeasure::new(&[0.0; 4], 2).unwrap();
        let a = build_single_exchange(&space, &measure, 2, 3).unwrap();
        let b = build_single_exchange(&space, &measure, 0, 1).unwrap();
        match pencil_ratio(&a, &b) {
            Err(Error::KernelEscape { .. }) => {}
            other => panic!("expected kernel escape, got {other:?}"),
        }
    }

    #[test]
    fn homogeneous_certificate_equality_at_two_sites() {
        let r = certify_homogeneous_exchange(2, 1, &[1.0]).unwrap();
        assert!((r.lambda_max - 1.0).abs() <= 1e-9);
        assert!(r.pass);
    }

    #[test]
    fn homogeneous_certificate_uniform_weights() {
        for k in 3..=6 {
            let rho = vec![1.0 / (k as f64 - 1.0); k - 1];
            for n in 1..k {
                let r = certify_homogeneous_exchange(k, n, &rho).unwrap();
                assert!(r.pass, "k={k} n={n}: lambda={}", r.lambda_max);
            }
        }
    }

    #[test]
    fn homogeneous_certificate_nonuniform_weights() {
        let r = certify_homogeneous_exchange(5, 2, &[0.4, 0.3, 0.2, 0.1]).unwrap();
        assert!(r.pass, "lambda = {}", r.lambda_max);
        assert!(r.lambda_max <= 1.0 + 1e-9);
    }

    #[test]
    fn homogeneous_certificate_rejects_heavy_weights() {
        assert!(certify_homogeneous_exchange(4, 2, &[0.5, 0.5, 0.5]).is_err());
        assert!(certify_homogeneous_exchange(4, 0, &[0.3, 0.3, 0.3]).is_err());
    }

    #[test]
    fn disordered_certificate_zero_field_tight() {
        // At zero field the uniform-weight chain bound L-1 is attained.
        for l in 4..=7 {
            for n in 1..l {
                let r = certify_disordered_exchange(&flat_field(l), n).unwrap();
                assert!(r.pass);
                assert!(
                    r.lambda_max <= (l - 1) as f64 + 1e-9,
                    "L={l} N={n}: {}",
                    r.lambda_max
                );
                assert!(r.lambda_max >= (l - 1) as f64 - 1e-6);
            }
        }
    }

    #[test]
    fn disordered_certificate_quantized_fields() {
        let geom = segment(6).unwrap();
        for seed in 0..5 {
            let raw = generate_iid(&geom, 1.0, 40 + seed).unwrap();
            let (quant, _) = quantize_to_grid(&raw, 6).unwrap();
            let field = force_endpoints(&quant, &geom).unwrap();
            for n in 1..6 {
                let r = certify_disordered_exchange(&field, n).unwrap();
                assert!(r.pass, "seed {seed} n {n}: {} vs {}", r.lambda_max, r.bound);
            }
        }
    }

    #[test]
    fn variance_constant_flat_is_half() {
        // All-pairs exchange gap at zero field is 2N... the measured gap
        // gives |sites|/gap = 1/2 at every size here.
        for m in [4usize, 6, 8] {
            let c = bl_variance_constant(&vec![0.0; m], m / 2).unwrap();
            assert!((c - 0.5).abs() < 1e-9, "m={m}: {c}");
        }
    }

    #[test]
    fn composed_comparison_dominates_direct_gap() {
        // Chain of certificates: variance against the all-pairs form, each
        // pair form against its route's bond forms, routes against the full
        // nearest-neighbour form. The composed constant must be weaker
        // (larger) than the directly computed 1/gap.
        let l = 5usize;
        let n = 2usize;
        let geom = segment(l).unwrap();
        let raw = generate_iid(&geom, 0.5, 17).unwrap();
        let (quant, _) = quantize_to_grid(&raw, l).unwrap();
        let field = force_endpoints(&quant, &geom).unwrap();
        let space = ConfigSpace::new(Arc::clone(&geom), n).unwrap();
        let measure = CanonicalMeasure::from_field(&field, n).unwrap();
        let c1 = bl_variance_constant(&field.values, n).unwrap();
        let mut lambda_sum = 0.0;
        for x in 0..l {
            for y in (x + 1)..l {
                let pair = build_single_exchange(&space, &measure, x, y).unwrap();
                let path = crate::lattice::canonical_path(&geom, x, y).unwrap();
                let bonds: Vec<QuadraticForm> = path
                    .bonds
                    .iter()
                    .map(|&(a, b)| {
                        build_single_exchange(&space, &measure, a as usize, b as usize).unwrap()
                    })
                    .collect();
                let refs: Vec<&QuadraticForm> = bonds.iter().collect();
                let route_sum = weighted_sum(&refs, &vec![1.0; refs.len()]).unwrap();
                let (lambda, _, _) = pencil_ratio(&pair, &route_sum).unwrap();
                lambda_sum += lambda;
            }
        }
        // Var(f) <= (c1/|sites|) * sum_pairs pair(f) <= (c1/|sites|) *
        // lambda_sum * D_nn(f), so 1/gap <= c1 * lambda_sum / |sites|.
        let composed = c1 * lambda_sum / l as f64;
        let direct = 1.0 / kawasaki_gap(&geom, &field, n).unwrap().gap;
        assert!(
            composed >= direct,
            "composed {composed} should dominate direct {direct}"
        );
    }
}
