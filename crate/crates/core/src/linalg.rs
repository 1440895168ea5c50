//! Preconditioned conjugate gradients on flat vectors.

use rayon::prelude::*;

use crate::par;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgOutcome {
    pub iters: usize,
    /// `|r| / |b|` at exit.
    pub rel_residual: f64,
    pub converged: bool,
    /// Set when a search direction with `p^T A p <= 0` was met.
    pub indefinite: bool,
}

/// Solves `A x = b` from the initial guess in `x`. `a(v, out)` applies the
/// operator and `m(r, out)` the preconditioner; both must be symmetric and
/// `m` positive definite.
pub fn pcg<A, M>(a: A, m: M, b: &[f64], x: &mut [f64], rtol: f64, max_iter: usize) -> CgOutcome
where
    A: Fn(&[f64], &mut [f64]),
    M: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let bnorm = par::dot(b, b).sqrt();
    if bnorm == 0.0 {
        x.iter_mut().for_each(|t| *t = 0.0);
        return CgOutcome { iters: 0, rel_residual: 0.0, converged: true, indefinite: false };
    }
    let mut ax = vec![0.0; n];
    a(x, &mut ax);
    let mut r: Vec<f64> = b.par_iter().zip(&ax).with_min_len(par::MIN_LEN).map(|(b, a)| b - a).collect();
    let mut z = vec![0.0; n];
    m(&r, &mut z);
    let mut p = z.clone();
    let mut rz = par::dot(&r, &z);
    let mut ap = vec![0.0; n];
    let mut rel = par::dot(&r, &r).sqrt() / bnorm;
    for it in 0..max_iter {
        if rel <= rtol {
            return CgOutcome { iters: it, rel_residual: rel, converged: true, indefinite: false };
        }
        a(&p, &mut ap);
        let pap = par::dot(&p, &ap);
        if pap <= 0.0 {
            return CgOutcome { iters: it, rel_residual: rel, converged: false, indefinite: true };
        }
        let alpha = rz / pap;
        x.par_iter_mut().zip(&p).with_min_len(par::MIN_LEN).for_each(|(x, p)| *x += alpha * p);
        r.par_iter_mut().zip(&ap).with_min_len(par::MIN_LEN).for_each(|(r, a)| *r -= alpha * a);
        rel = par::dot(&r, &r).sqrt() / bnorm;
        m(&r, &mut z);
        let rz_new = par::dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        p.par_iter_mut().zip(&z).with_min_len(par::MIN_LEN).for_each(|(p, z)| *p = z + beta * *p);
    }
    CgOutcome { iters: max_iter, rel_residual: rel, converged: rel <= rtol, indefinite: false }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// 1D Dirichlet Laplacian `tridiag(-1, 2, -1)`.
    fn lap1d(v: &[f64], out: &mut [f64]) {
        let n = v.len();
        for i in 0..n {
            let l = if i > 0 { v[i - 1] } else { 0.0 };
            let r = if i + 1 < n { v[i + 1] } else { 0.0 };
            out[i] = 2.0 * v[i] - l - r;
        }
    }

    #[test]
    fn solves_tridiagonal_exactly() {
        let n = 50;
        let xs: Vec<f64> = (0..n).map(|i| (i as f64 * 0.3).sin()).collect();
        let mut b = vec![0.0; n];
        lap1d(&xs, &mut b);
        let mut x = vec![0.0; n];
        let out = pcg(lap1d, |r, z| z.copy_from_slice(r), &b, &mut x, 1e-12, 200);
        assert!(out.converged && out.iters <= n + 1);
        for (a, e) in x.iter().zip(&xs) {
            assert!((a - e).abs() < 1e-9);
        }
    }

    #[test]
    fn flags_indefinite() {
        let neg = |v: &[f64], out: &mut [f64]| {
            lap1d(v, out);
            out.iter_mut().for_each(|t| *t = -*t);
        };
        let b = vec![1.0; 10];
        let mut x = vec![0.0; 10];
        assert!(pcg(neg, |r, z| z.copy_from_slice(r), &b, &mut x, 1e-10, 50).indefinite);
    }

    #[test]
    fn zero_rhs() {
        let mut x = vec![3.0; 4];
        let out = pcg(lap1d, |r, z| z.copy_from_slice(r), &[0.0; 4], &mut x, 1e-10, 10);
        assert!(out.converged && x.iter().all(|&t| t == 0.0));
    }
}
