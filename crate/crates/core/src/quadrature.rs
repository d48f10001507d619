//! Quadrature rules for expectations under the standard normal measure.

use crate::{Error, Result};

pub const MIN_NODES: usize = 2;
pub const MAX_NODES: usize = 512;

/// Truncation radius of the breakpoint-aware rule; `P(|x| > 14) < 1e-43`.
const SPLIT_RADIUS: f64 = 14.0;

const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Nodes and positive weights with `Σ w_i f(x_i) ≈ E_{x~N(0,1)}[f(x)]`.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }

    /// Visits every node of the `dim`-fold tensor product with its weight.
    pub fn for_each_tensor_node(&self, dim: usize, mut visit: impl FnMut(&[f64], f64)) {
        let n = self.len();
        if dim == 0 || n == 0 {
            return;
        }
        let mut idx = vec![0usize; dim];
        let mut x = vec![self.nodes[0]; dim];
        loop {
            let w: f64 = idx.iter().map(|&i| self.weights[i]).product();
            if w > 0.0 {
                visit(&x, w);
            }
            // odometer increment
            let mut c = 0;
            loop {
                idx[c] += 1;
                if idx[c] < n {
                    x[c] = self.nodes[idx[c]];
                    break;
                }
                idx[c] = 0;
                x[c] = self.nodes[0];
                c += 1;
                if c == dim {
                    return;
                }
            }
        }
    }

    /// `E[f(x)]` for `x ~ N(0, I_dim)` on the tensor grid.
    pub fn tensor_expect(&self, dim: usize, f: impl Fn(&[f64]) -> f64) -> f64 {
        let mut acc = 0.0;
        self.for_each_tensor_node(dim, |x, w| acc += w * f(x));
        acc
    }
}

/// Gauss–Hermite rule with `n` nodes for the standard normal measure.
///
/// Nodes are the eigenvalues of the orthonormal-Hermite Jacobi matrix, found by
/// Sturm-sequence bisection and polished with Newton steps; weights are the
/// Christoffel numbers `1 / Σ_k p_k(x_i)^2`, evaluated with running rescaling so
/// that large `n` does not overflow. Exact for polynomials of degree `2n - 1`.
pub fn gauss_hermite_rule(n: usize) -> Result<QuadratureRule> {
    if !(MIN_NODES..=MAX_NODES).contains(&n) {
        return Err(Error::InvalidArgument(format!(
            "Gauss-Hermite node count must be in [{MIN_NODES}, {MAX_NODES}], got {n}"
        )));
    }
    let b2: Vec<f64> = (1..n).map(|k| k as f64).collect();
    let bound = 2.0 * ((n - 1) as f64).sqrt() + 1.0;
    let mut nodes = Vec::with_capacity(n);
    for i in 0..n {
        let mut lo = -bound;
        let mut hi = bound;
        // smallest x with more than i eigenvalues below it
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi {
                break;
            }
            if sturm_count(&b2, mid) > i {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        nodes.push(0.5 * (lo + hi));
    }
    for x in nodes.iter_mut() {
        for _ in 0..3 {
            let e = eval_orthonormal(n, *x);
            let step = e.p_n / ((n as f64).sqrt() * e.p_nm1);
            if !step.is_finite() {
                break;
            }
            *x -= step;
        }
    }
    // enforce exact symmetry
    for i in 0..n / 2 {
        let m = 0.5 * (nodes[n - 1 - i] - nodes[i]);
        nodes[i] = -m;
        nodes[n - 1 - i] = m;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    let mut weights: Vec<f64> = nodes
        .iter()
        .map(|&x| {
            let e = eval_orthonormal(n, x);
            (-2.0 * e.log_scale - e.sum_sq.ln()).exp()
        })
        .collect();
    for i in 0..n / 2 {
        let m = 0.5 * (weights[i] + weights[n - 1 - i]);
        weights[i] = m;
        weights[n - 1 - i] = m;
    }
    let total: f64 = weights.iter().sum();
    for w in weights.iter_mut() {
        *w /= total;
    }
    Ok(QuadratureRule { nodes, weights })
}

/// Number of eigenvalues of the zero-diagonal Jacobi matrix below `x`.
fn sturm_count(b2: &[f64], x: f64) -> usize {
    let mut count = 0;
    let mut q = -x;
    if q < 0.0 {
        count += 1;
    }
    for &b in b2 {
        let prev = if q == 0.0 { f64::EPSILON } else { q };
        q = -x - b / prev;
        if q < 0.0 {
            count += 1;
        }
    }
    count
}

struct OrthoEval {
    p_n: f64,
    p_nm1: f64,
    /// all `p` values and `sum_sq` are stored divided by `exp(log_scale)` (resp. squared)
    log_scale: f64,
    /// `Σ_{k<n} p_k^2`
    sum_sq: f64,
}

fn eval_orthonormal(n: usize, x: f64) -> OrthoEval {
    const BIG: f64 = 1e150;
    let mut log_scale = 0.0;
    let mut pm1 = 0.0;
    let mut p = 1.0;
    let mut sum_sq = 0.0;
    for k in 0..n {
        sum_sq += p * p;
        let next = (x * p - (k as f64).sqrt() * pm1) / ((k + 1) as f64).sqrt();
        pm1 = p;
        p = next;
        if p.abs() > BIG {
            p /= BIG;
            pm1 /= BIG;
            sum_sq /= BIG * BIG;
            log_scale += BIG.ln();
        }
    }
    OrthoEval {
        p_n: p,
        p_nm1: pm1,
        log_scale,
        sum_sq,
    }
}

/// Gauss–Legendre nodes and weights on `[-1, 1]`.
fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for k in 2..=n {
                let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = p2;
            }
            let pn = if n == 0 { 1.0 } else { p1 };
            let pnm1 = if n == 1 { 1.0 } else { p0 };
            dp = n as f64 * (x * pn - pnm1) / (x * x - 1.0);
            let dx = pn / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    (nodes, weights)
}

/// Breakpoint-aware rule for integrands with a kink or jump at the origin
/// (relu, sign): Gauss–Legendre on `[-R, 0]` and `[0, R]` against the Gaussian
/// density, `n_per_half` nodes on each side.
pub fn split_rule(n_per_half: usize) -> Result<QuadratureRule> {
    if !(MIN_NODES..=MAX_NODES / 2).contains(&n_per_half) {
        return Err(Error::InvalidArgument(format!(
            "split rule needs between {MIN_NODES} and {} nodes per half, got {n_per_half}",
            MAX_NODES / 2
        )));
    }
    let (t, wt) = gauss_legendre(n_per_half);
    let half = 0.5 * SPLIT_RADIUS;
    let mut nodes = Vec::with_capacity(2 * n_per_half);
    let mut weights = Vec::with_capacity(2 * n_per_half);
    for (&ti, &wi) in t.iter().zip(&wt).rev() {
        let x = -half * (ti + 1.0);
        nodes.push(x);
        weights.push(half * wi * INV_SQRT_2PI * (-0.5 * x * x).exp());
    }
    for (&ti, &wi) in t.iter().zip(&wt) {
        let x = half * (ti + 1.0);
        nodes.push(x);
        weights.push(half * wi * INV_SQRT_2PI * (-0.5 * x * x).exp());
    }
    Ok(QuadratureRule { nodes, weights })
}
