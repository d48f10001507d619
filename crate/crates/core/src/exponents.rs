//! Hardness exponents of a target from its Gaussian moments.
//!
//! Every quantity here reduces to a table of moments `E[y^j He_k(<v, z>)]`:
//!
//! * the information exponent is the first `k >= 1` with `E[y He_k] != 0`;
//! * the polynomial generative exponent is the first `k >= 1` for which some
//!   polynomial `p` gives `E[p(y) He_k] != 0`. Since `p -> E[p(y) He_k]` is
//!   linear in the coefficients of `p`, such a `p` exists iff some monomial
//!   moment `E[y^j He_k]` with `j <= degmax` is nonzero.
//!
//! A moment counts as nonzero when `|E[y^j He_k]| > tol * sqrt(E[y^{2j}] k!)`,
//! i.e. relative to the Cauchy–Schwarz bound on its magnitude.

use serde::Serialize;

use crate::linalg::{dot, norm, GaussianSampler};
use crate::quadrature::{gauss_hermite_rule, split_rule, QuadratureRule};
use crate::targets::{hermite_all, LinkFunction, Smoothness};
use crate::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-7;
pub const DEFAULT_KMAX: usize = 8;
pub const DEFAULT_DEGMAX: usize = 6;

/// Largest label power accepted by the oracles.
pub const MAX_POWER: usize = 8;
/// Largest Hermite order accepted by the oracles.
pub const MAX_ORDER: usize = 10;
/// Minimum node count for links with a kink or jump.
pub const MIN_PIECEWISE_NODES: usize = 200;
/// Largest index dimension handled by tensor quadrature.
pub const MAX_TENSOR_DIM: usize = 3;

fn factorial(k: usize) -> f64 {
    (1..=k).map(|i| i as f64).product()
}

/// The default 1-d rule for a link: Gauss–Hermite for analytic links, the
/// breakpoint-aware split rule for piecewise ones.
pub fn default_rule(link: &LinkFunction, nodes: usize) -> Result<QuadratureRule> {
    match link.smoothness() {
        Smoothness::Analytic => gauss_hermite_rule(nodes),
        Smoothness::Piecewise => split_rule(nodes / 2),
    }
}

/// Node count used per axis by [`default_rule`] callers that do not choose one.
pub fn default_nodes(link: &LinkFunction) -> usize {
    match (link.smoothness(), link.index_dim()) {
        (Smoothness::Analytic, 1) => 64,
        (Smoothness::Analytic, _) => 40,
        (Smoothness::Piecewise, 1) => 200,
        (Smoothness::Piecewise, 2) => 200,
        (Smoothness::Piecewise, _) => 120,
    }
}

/// `E[y^j He_k(s)]` for `1 <= j <= degmax`, `0 <= k <= kmax`, plus the
/// matching `E[y^{2j}]` used for scaling.
#[derive(Clone, Debug, PartialEq)]
pub struct MomentTable {
    kmax: usize,
    degmax: usize,
    values: Vec<f64>,
    even_powers: Vec<f64>,
}

impl MomentTable {
    fn zeros(kmax: usize, degmax: usize) -> Self {
        Self {
            kmax,
            degmax,
            values: vec![0.0; degmax * (kmax + 1)],
            even_powers: vec![0.0; degmax],
        }
    }

    #[inline]
    fn accumulate(&mut self, y: f64, s: f64, w: f64, herm: &mut [f64]) {
        hermite_all(s, herm);
        let mut yj = 1.0;
        for j in 0..self.degmax {
            yj *= y;
            self.even_powers[j] += w * yj * yj;
            let row = &mut self.values[j * (self.kmax + 1)..(j + 1) * (self.kmax + 1)];
            let wy = w * yj;
            for (v, h) in row.iter_mut().zip(herm.iter()) {
                *v += wy * h;
            }
        }
    }

    pub fn kmax(&self) -> usize {
        self.kmax
    }

    pub fn degmax(&self) -> usize {
        self.degmax
    }

    /// `E[y^j He_k]` (`j >= 1`).
    pub fn value(&self, j: usize, k: usize) -> f64 {
        self.values[(j - 1) * (self.kmax + 1) + k]
    }

    /// `sqrt(E[y^{2j}] k!)`, the Cauchy–Schwarz bound on `|E[y^j He_k]|`.
    pub fn scale(&self, j: usize, k: usize) -> f64 {
        (self.even_powers[j - 1] * factorial(k)).sqrt()
    }

    pub fn is_nonzero(&self, j: usize, k: usize, tol: f64) -> bool {
        let s = self.scale(j, k);
        s > 0.0 && self.value(j, k).abs() > tol * s
    }

    /// First `k >= 1` with `E[y He_k] != 0`.
    pub fn information_exponent(&self, tol: f64) -> Option<usize> {
        (1..=self.kmax).find(|&k| self.is_nonzero(1, k, tol))
    }

    /// First `k >= 1` with some `E[y^j He_k] != 0`, `j <= degmax`.
    pub fn poly_generative_exponent(&self, tol: f64) -> Option<usize> {
        (1..=self.kmax).find(|&k| (1..=self.degmax).any(|j| self.is_nonzero(j, k, tol)))
    }

    pub fn entries(&self) -> Vec<MomentEntry> {
        let mut out = Vec::with_capacity(self.values.len());
        for j in 1..=self.degmax {
            for k in 0..=self.kmax {
                out.push(MomentEntry {
                    j,
                    k,
                    value: self.value(j, k),
                });
            }
        }
        out
    }
}

fn check_budget(kmax: usize, degmax: usize) -> Result<()> {
    if degmax == 0 || degmax > MAX_POWER {
        return Err(Error::QuadratureBudget(format!(
            "label power must be in 1..={MAX_POWER}, got {degmax}"
        )));
    }
    if kmax > MAX_ORDER {
        return Err(Error::QuadratureBudget(format!(
            "Hermite order must be <= {MAX_ORDER}, got {kmax}"
        )));
    }
    Ok(())
}

fn check_rule(link: &LinkFunction, rule: &QuadratureRule, kmax: usize, degmax: usize) -> Result<()> {
    if link.smoothness() == Smoothness::Piecewise && rule.len() < MIN_PIECEWISE_NODES {
        return Err(Error::QuadratureBudget(format!(
            "piecewise link `{link}` needs at least {MIN_PIECEWISE_NODES} nodes, rule has {}",
            rule.len()
        )));
    }
    // Gauss-Hermite with n nodes is exact up to degree 2n - 1.
    if let Some(deg) = link.polynomial_degree() {
        let needed = (degmax * deg + kmax) / 2 + 1;
        if rule.len() < needed {
            return Err(Error::QuadratureBudget(format!(
                "`{link}` with powers up to {degmax} and orders up to {kmax} needs {needed} nodes, rule has {}",
                rule.len()
            )));
        }
    }
    Ok(())
}

fn require_single_index(link: &LinkFunction) -> Result<()> {
    if link.index_dim() != 1 {
        return Err(Error::InvalidArgument(format!(
            "`{link}` has index dimension {}; use the directional oracle",
            link.index_dim()
        )));
    }
    Ok(())
}

/// Moment table of a single-index link.
pub fn moment_table(
    link: &LinkFunction,
    kmax: usize,
    degmax: usize,
    rule: &QuadratureRule,
) -> Result<MomentTable> {
    require_single_index(link)?;
    check_budget(kmax, degmax)?;
    check_rule(link, rule, kmax, degmax)?;
    let mut table = MomentTable::zeros(kmax, degmax);
    let mut herm = vec![0.0; kmax + 1];
    for (&x, &w) in rule.nodes().iter().zip(rule.weights()) {
        table.accumulate(link.eval(&[x]), x, w, &mut herm);
    }
    Ok(table)
}

/// `E[h*(x)^j He_k(x)]` for a single-index link.
pub fn hermite_moment(
    link: &LinkFunction,
    j: usize,
    korder: usize,
    rule: &QuadratureRule,
) -> Result<f64> {
    if j == 0 {
        return Err(Error::InvalidArgument("label power must be >= 1".into()));
    }
    Ok(moment_table(link, korder, j, rule)?.value(j, korder))
}

pub fn information_exponent(
    link: &LinkFunction,
    kmax: usize,
    rule: &QuadratureRule,
    tol: f64,
) -> Result<Option<usize>> {
    Ok(moment_table(link, kmax, 1, rule)?.information_exponent(tol))
}

pub fn poly_generative_exponent(
    link: &LinkFunction,
    kmax: usize,
    degmax: usize,
    rule: &QuadratureRule,
    tol: f64,
) -> Result<Option<usize>> {
    Ok(moment_table(link, kmax, degmax, rule)?.poly_generative_exponent(tol))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MomentEntry {
    pub j: usize,
    pub k: usize,
    pub value: f64,
}

/// Exponents of a link together with the moments that witnessed them.
///
/// `ell` / `ell_star_p` are `None` ("> kmax") when no nonzero moment was found.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExponentReport {
    pub link: String,
    pub ell: Option<usize>,
    pub ell_star_p: Option<usize>,
    pub moments: Vec<MomentEntry>,
    pub tol: f64,
    pub nodes: usize,
}

impl ExponentReport {
    fn from_table(link: &LinkFunction, table: &MomentTable, tol: f64, nodes: usize) -> Self {
        Self {
            link: link.id().to_string(),
            ell: table.information_exponent(tol),
            ell_star_p: table.poly_generative_exponent(tol),
            moments: table.entries(),
            tol,
            nodes,
        }
    }
}

/// Full report for a single-index link.
pub fn exponent_report(
    link: &LinkFunction,
    kmax: usize,
    degmax: usize,
    rule: &QuadratureRule,
    tol: f64,
) -> Result<ExponentReport> {
    let table = moment_table(link, kmax, degmax, rule)?;
    Ok(ExponentReport::from_table(link, &table, tol, rule.len()))
}

/// Report along direction `v` of the index space (tensor quadrature, `k <= 3`).
pub fn directional_report(
    link: &LinkFunction,
    v: &[f64],
    kmax: usize,
    degmax: usize,
    rule: &QuadratureRule,
    tol: f64,
) -> Result<ExponentReport> {
    let table = directional_moments(link, v, kmax, degmax, rule)?;
    Ok(ExponentReport::from_table(link, &table, tol, rule.len()))
}

fn check_direction(link: &LinkFunction, v: &[f64]) -> Result<()> {
    if v.len() != link.index_dim() {
        return Err(Error::DimensionMismatch {
            expected: link.index_dim(),
            got: v.len(),
        });
    }
    if (norm(v) - 1.0).abs() > 1e-9 {
        return Err(Error::ContractViolation(format!(
            "direction must be a unit vector, got norm {}",
            norm(v)
        )));
    }
    Ok(())
}

/// `E[y^j He_k(<v, z>)]` for `z ~ N(0, I_k)`, by tensor quadrature.
pub fn directional_moments(
    link: &LinkFunction,
    v: &[f64],
    kmax: usize,
    degmax: usize,
    rule: &QuadratureRule,
) -> Result<MomentTable> {
    check_direction(link, v)?;
    check_budget(kmax, degmax)?;
    let dim = link.index_dim();
    if dim > MAX_TENSOR_DIM {
        return Err(Error::Unsupported(format!(
            "tensor quadrature supports index dimension <= {MAX_TENSOR_DIM}; \
             use directional_moments_mc for k = {dim}"
        )));
    }
    let mut table = MomentTable::zeros(kmax, degmax);
    let mut herm = vec![0.0; kmax + 1];
    rule.for_each_tensor_node(dim, |u, w| {
        table.accumulate(link.eval(u), dot(v, u), w, &mut herm);
    });
    Ok(table)
}

/// `(ℓ_v, ℓ*_v)` along `v`.
pub fn directional_exponents(
    link: &LinkFunction,
    v: &[f64],
    kmax: usize,
    degmax: usize,
    rule: &QuadratureRule,
    tol: f64,
) -> Result<(Option<usize>, Option<usize>)> {
    let t = directional_moments(link, v, kmax, degmax, rule)?;
    Ok((t.information_exponent(tol), t.poly_generative_exponent(tol)))
}

/// Monte-Carlo moment estimates with standard errors.
#[derive(Clone, Debug, PartialEq)]
pub struct McMoments {
    pub table: MomentTable,
    /// Standard error of each entry of `table`, same layout.
    pub std_errors: Vec<f64>,
    pub samples: usize,
}

impl McMoments {
    pub fn std_error(&self, j: usize, k: usize) -> f64 {
        self.std_errors[(j - 1) * (self.table.kmax + 1) + k]
    }
}

/// Monte-Carlo estimate of the directional moments; works for any index dimension.
pub fn directional_moments_mc(
    link: &LinkFunction,
    v: &[f64],
    kmax: usize,
    degmax: usize,
    samples: usize,
    sampler: &mut GaussianSampler,
) -> Result<McMoments> {
    check_direction(link, v)?;
    check_budget(kmax, degmax)?;
    if samples < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    let dim = link.index_dim();
    let mut sum = MomentTable::zeros(kmax, degmax);
    let mut sq = vec![0.0; sum.values.len()];
    let mut herm = vec![0.0; kmax + 1];
    let mut u = vec![0.0; dim];
    for _ in 0..samples {
        sampler.fill_gaussian(&mut u);
        let y = link.eval(&u);
        let s = dot(v, &u);
        hermite_all(s, &mut herm);
        let mut yj = 1.0;
        for j in 0..degmax {
            yj *= y;
            sum.even_powers[j] += yj * yj;
            for (k, h) in herm.iter().enumerate().take(kmax + 1) {
                let x = yj * h;
                let idx = j * (kmax + 1) + k;
                sum.values[idx] += x;
                sq[idx] += x * x;
            }
        }
    }
    let n = samples as f64;
    for x in sum.even_powers.iter_mut() {
        *x /= n;
    }
    let mut std_errors = vec![0.0; sq.len()];
    for (idx, v) in sum.values.iter_mut().enumerate() {
        let mean = *v / n;
        let var = (sq[idx] / n - mean * mean).max(0.0) * n / (n - 1.0);
        std_errors[idx] = (var / n).sqrt();
        *v = mean;
    }
    Ok(McMoments {
        table: sum,
        std_errors,
        samples,
    })
}

/// Result of the sparse-parity hardness check for `sign(x1...x_m)`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SignWitness {
    pub m: usize,
    /// `E[sign(x1...x_m) x1...x_m]`, which equals `(2/π)^{m/2}`.
    pub witness: f64,
    /// `E[sign(x1...x_m) He_m(<v, x>)]` along `v = (1, ..., 1)/sqrt(m)`.
    pub directional_moment: f64,
    /// Largest `|E[y^j He_k(<v, x>)]|` over `j <= degmax`, `1 <= k < m`.
    pub max_lower_order: f64,
    pub tol: f64,
}

impl SignWitness {
    pub fn lower_orders_vanish(&self) -> bool {
        self.max_lower_order < self.tol
    }
}

/// Order-`m` witness for the parity link along the diagonal direction.
///
/// Along `v = (1, ..., 1)/sqrt(m)`, `He_m(<v, x>) = m! m^{-m/2} x1...x_m + Q(x)`
/// where every monomial of `Q` misses a coordinate, so the directional moment
/// divided by `m! m^{-m/2}` is `E[|x1...x_m|]`. All moments of order `< m`
/// vanish because flipping any missing coordinate flips the label.
pub fn sign_parity_witness(m: usize, degmax: usize, tol: f64) -> Result<SignWitness> {
    let link = match m {
        2 => LinkFunction::parse("sign(x1x2)")?,
        3 => LinkFunction::parse("sign(x1x2x3)")?,
        _ => {
            return Err(Error::InvalidArgument(format!(
                "parity witness is implemented for m in {{2, 3}}, got {m}"
            )))
        }
    };
    let v = vec![1.0 / (m as f64).sqrt(); m];
    let rule = split_rule(if m == 2 { 100 } else { 60 })?;
    let table = directional_moments(&link, &v, m, degmax, &rule)?;
    let mut max_lower = 0.0f64;
    for j in 1..=degmax {
        for k in 1..m {
            max_lower = max_lower.max(table.value(j, k).abs());
        }
    }
    let directional = table.value(1, m);
    let coeff = factorial(m) / (m as f64).powf(m as f64 / 2.0);
    Ok(SignWitness {
        m,
        witness: directional / coeff,
        directional_moment: directional,
        max_lower_order: max_lower,
        tol,
    })
}
