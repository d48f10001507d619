//! The two-layer learner and the two-step optimizer family.
//!
//! The network is `f(z; W, a) = (1/p) Σ_j a_j σ(<w_j, z>)` with the second
//! layer `a` frozen at initialisation. One optimizer step on a batch reads
//!
//! ```text
//! w̃_j = w_j - ρ_j ∇_{w_j} L(f(z; W), y)                     (per sample)
//! w_j ← w_j - (γ / n_b) Σ_ν ∇_{w_j} L(f(z^ν; W̃^ν), y^ν)
//! ```
//!
//! `ρ = 0` is one-pass SGD, `ρ > 0` extragradient, `ρ < 0` SAM. The
//! gradient of every row is a multiple of the sample `z`, so the inner step
//! only moves the pre-activations: `<w̃_j, z> = <w_j, z> - ρ_j c_j ||z||^2`,
//! and a step costs one pass over `W` per sample.

use serde::{Deserialize, Serialize};

use crate::linalg::{axpy, dot, normalize_in_place, DirectionSet, GaussianSampler};
use crate::quadrature::QuadratureRule;
use crate::targets::{Activation, LinkFunction, Smoothness};
use crate::{Error, Result};

/// Plain-mode divergence guard on individual weight coordinates.
pub const DIVERGENCE_BOUND: f64 = 1e6;

id_enum!(
    /// Member of the optimizer family.
    Algorithm, "algorithm" {
        Sgd => "sgd",
        Egd => "egd",
        Sam => "sam",
        Lookahead2 => "lookahead2",
    }
);

id_enum!(LossKind, "loss" {
    Squared => "squared",
    Correlation => "correlation",
});

id_enum!(
    /// How the outer learning rate shrinks with the dimension.
    GammaScaling, "gamma_scaling" {
        InvD => "1/d",
        InvDLogD => "1/(d log d)" | "1/dlogd" | "1/(dlogd)",
        BatchOverD => "n_b/d",
    }
);

id_enum!(RhoSigns, "rho_signs" {
    Fixed => "fixed",
    Rademacher => "rademacher",
});

id_enum!(FirstLayerInit, "first_layer init" {
    UniformSphere => "uniform_sphere",
    OrthogonalToTarget => "orthogonal_to_target",
});

id_enum!(SecondLayerInit, "second_layer init" {
    Ones => "ones",
    Rademacher => "rademacher",
    UniformPm1 => "uniform_pm1",
    Gaussian => "gaussian",
});

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct InitSpec {
    pub first_layer: FirstLayerInit,
    pub second_layer: SecondLayerInit,
}

impl Default for InitSpec {
    fn default() -> Self {
        Self {
            first_layer: FirstLayerInit::OrthogonalToTarget,
            second_layer: SecondLayerInit::Ones,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerConfig {
    pub algorithm: Algorithm,
    pub loss: LossKind,
    pub spherical: bool,
    pub gamma0: f64,
    pub rho0: f64,
    pub gamma_scaling: GammaScaling,
    pub batch: usize,
    pub rho_signs: RhoSigns,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Egd,
            loss: LossKind::Squared,
            spherical: false,
            gamma0: 0.01,
            rho0: 0.1,
            gamma_scaling: GammaScaling::InvD,
            batch: 1,
            rho_signs: RhoSigns::Fixed,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma0.is_finite() && self.gamma0 > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "gamma0 must be positive, got {}",
                self.gamma0
            )));
        }
        if !(self.rho0.is_finite() && self.rho0 >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "rho0 must be non-negative, got {}",
                self.rho0
            )));
        }
        if self.batch == 0 {
            return Err(Error::InvalidArgument("batch size must be >= 1".into()));
        }
        Ok(())
    }

    /// Effective outer rate `γ = γ0 · scaling(d)`.
    pub fn effective_gamma(&self, d: usize) -> f64 {
        let d = d as f64;
        match self.gamma_scaling {
            GammaScaling::InvD => self.gamma0 / d,
            GammaScaling::InvDLogD => self.gamma0 / (d * d.ln()),
            GammaScaling::BatchOverD => self.gamma0 * self.batch as f64 / d,
        }
    }

    /// Signed inner rate `ρ0/d` before per-neuron signs: negative for SAM,
    /// zero for SGD and lookahead.
    pub fn effective_rho(&self, d: usize) -> f64 {
        let rho = self.rho0 / d as f64;
        match self.algorithm {
            Algorithm::Egd => rho,
            Algorithm::Sam => -rho,
            Algorithm::Sgd | Algorithm::Lookahead2 => 0.0,
        }
    }
}

/// First-layer weights, frozen second layer and activation.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkState {
    w: Vec<f64>,
    a: Vec<f64>,
    activation: Activation,
    p: usize,
    d: usize,
}

impl NetworkState {
    pub fn new(rows: Vec<Vec<f64>>, a: Vec<f64>, activation: Activation) -> Result<Self> {
        let p = rows.len();
        if p == 0 || a.len() != p {
            return Err(Error::DimensionMismatch {
                expected: p,
                got: a.len(),
            });
        }
        let d = rows[0].len();
        if d == 0 {
            return Err(Error::InvalidArgument("dimension must be >= 1".into()));
        }
        let mut w = Vec::with_capacity(p * d);
        for r in rows {
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: r.len(),
                });
            }
            w.extend(r);
        }
        Ok(Self {
            w,
            a,
            activation,
            p,
            d,
        })
    }

    /// Random initial state. Rows are unit vectors; under
    /// `OrthogonalToTarget` they are also exactly orthogonal to every target.
    pub fn init(
        spec: &InitSpec,
        p: usize,
        activation: Activation,
        targets: &DirectionSet,
        sampler: &mut GaussianSampler,
    ) -> Result<Self> {
        let d = targets.d();
        if p == 0 {
            return Err(Error::InvalidArgument("need at least one neuron".into()));
        }
        let mut rows = Vec::with_capacity(p);
        for _ in 0..p {
            let mut w = sampler.sample_gaussian(d);
            if spec.first_layer == FirstLayerInit::OrthogonalToTarget {
                if targets.k() >= d {
                    return Err(Error::InvalidArgument(
                        "no room for an init orthogonal to the targets".into(),
                    ));
                }
                if targets.is_standard() {
                    w[..targets.k()].iter_mut().for_each(|x| *x = 0.0);
                } else {
                    for _ in 0..2 {
                        for r in targets.rows() {
                            let c = dot(&w, r);
                            axpy(-c, r, &mut w);
                        }
                    }
                }
            }
            normalize_in_place(&mut w)?;
            rows.push(w);
        }
        let a = (0..p)
            .map(|_| match spec.second_layer {
                SecondLayerInit::Ones => 1.0,
                SecondLayerInit::Rademacher => sampler.rademacher(),
                SecondLayerInit::UniformPm1 => 2.0 * sampler.uniform() - 1.0,
                SecondLayerInit::Gaussian => sampler.gaussian(),
            })
            .collect();
        Self::new(rows, a, activation)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn a(&self) -> &[f64] {
        &self.a
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.w[j * self.d..(j + 1) * self.d]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> {
        self.w.chunks_exact(self.d)
    }

    pub fn rows_vec(&self) -> Vec<Vec<f64>> {
        self.rows().map(<[f64]>::to_vec).collect()
    }

    fn check_input(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: z.len(),
            });
        }
        Ok(())
    }

    #[inline]
    fn output_from_preactivations(&self, lam: &[f64]) -> f64 {
        let s: f64 = self
            .a
            .iter()
            .zip(lam)
            .map(|(a, &l)| a * self.activation.value(l))
            .sum();
        s / self.p as f64
    }
}

/// `f(z; W, a) = (1/p) Σ_j a_j σ(<w_j, z>)`.
pub fn forward(net: &NetworkState, z: &[f64]) -> Result<f64> {
    net.check_input(z)?;
    let lam: Vec<f64> = net.rows().map(|w| dot(w, z)).collect();
    Ok(net.output_from_preactivations(&lam))
}

/// Correlation: `1 - y f`. Squared: `(f - y)^2 / 2`.
pub fn loss(kind: LossKind, f: f64, y: f64) -> f64 {
    match kind {
        LossKind::Squared => 0.5 * (f - y) * (f - y),
        LossKind::Correlation => 1.0 - y * f,
    }
}

/// `∂L/∂f`.
#[inline]
pub fn loss_derivative(kind: LossKind, f: f64, y: f64) -> f64 {
    match kind {
        LossKind::Squared => f - y,
        LossKind::Correlation => -y,
    }
}

/// `∂L/∂w_j` for every row; row `j` equals `L'(f, y) (a_j/p) σ'(<w_j, z>) z`.
pub fn grad_first_layer(
    net: &NetworkState,
    z: &[f64],
    y: f64,
    kind: LossKind,
) -> Result<Vec<Vec<f64>>> {
    net.check_input(z)?;
    let lam: Vec<f64> = net.rows().map(|w| dot(w, z)).collect();
    let r = loss_derivative(kind, net.output_from_preactivations(&lam), y);
    Ok(lam
        .iter()
        .zip(&net.a)
        .map(|(&l, &a)| {
            let c = r * a / net.p as f64 * net.activation.derivative(l);
            z.iter().map(|x| c * x).collect()
        })
        .collect())
}

/// `n_b` samples stored row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    d: usize,
    zs: Vec<f64>,
    ys: Vec<f64>,
}

impl Batch {
    pub fn new(d: usize) -> Self {
        Self {
            d,
            zs: Vec::new(),
            ys: Vec::new(),
        }
    }

    pub fn from_samples(samples: &[(Vec<f64>, f64)]) -> Result<Self> {
        let d = samples
            .first()
            .map(|(z, _)| z.len())
            .ok_or_else(|| Error::InvalidArgument("empty batch".into()))?;
        let mut b = Self::new(d);
        for (z, y) in samples {
            b.push(z, *y)?;
        }
        Ok(b)
    }

    pub fn clear(&mut self) {
        self.zs.clear();
        self.ys.clear();
    }

    pub fn push(&mut self, z: &[f64], y: f64) -> Result<()> {
        if z.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: z.len(),
            });
        }
        self.zs.extend_from_slice(z);
        self.ys.push(y);
        Ok(())
    }

    /// Appends a zeroed sample and returns it for in-place filling.
    pub(crate) fn push_slot(&mut self) -> (&mut [f64], &mut f64) {
        let start = self.zs.len();
        self.zs.resize(start + self.d, 0.0);
        self.ys.push(0.0);
        let y = self.ys.last_mut().expect("just pushed");
        (&mut self.zs[start..], y)
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn sample(&self, i: usize) -> (&[f64], f64) {
        (&self.zs[i * self.d..(i + 1) * self.d], self.ys[i])
    }
}

/// A configured optimizer: effective rates, per-neuron inner-rate signs and
/// scratch buffers.
#[derive(Clone, Debug)]
pub struct Optimizer {
    cfg: OptimizerConfig,
    gamma: f64,
    rhos: Vec<f64>,
    lam: Vec<f64>,
    coef: Vec<f64>,
    grad: Vec<f64>,
}

impl Optimizer {
    /// `sampler` is only consulted for Rademacher inner-rate signs.
    pub fn new(
        cfg: OptimizerConfig,
        p: usize,
        d: usize,
        sampler: &mut GaussianSampler,
    ) -> Result<Self> {
        cfg.validate()?;
        let rho = cfg.effective_rho(d);
        let rhos = (0..p)
            .map(|_| match cfg.rho_signs {
                RhoSigns::Fixed => rho,
                RhoSigns::Rademacher => rho * sampler.rademacher(),
            })
            .collect();
        Ok(Self {
            gamma: cfg.effective_gamma(d),
            cfg,
            rhos,
            lam: vec![0.0; p],
            coef: vec![0.0; p],
            grad: Vec::new(),
        })
    }

    pub fn config(&self) -> &OptimizerConfig {
        &self.cfg
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// Signed per-neuron inner rates.
    pub fn rhos(&self) -> &[f64] {
        &self.rhos
    }

    /// One optimizer step in place. `step_index` is reported on divergence.
    pub fn step(&mut self, net: &mut NetworkState, batch: &Batch, step_index: u64) -> Result<()> {
        if batch.d() != net.d {
            return Err(Error::DimensionMismatch {
                expected: net.d,
                got: batch.d(),
            });
        }
        if batch.is_empty() {
            return Err(Error::InvalidArgument("empty batch".into()));
        }
        if self.rhos.len() != net.p {
            return Err(Error::DimensionMismatch {
                expected: self.rhos.len(),
                got: net.p,
            });
        }
        match self.cfg.algorithm {
            Algorithm::Lookahead2 => {
                self.gradient_step(net, batch, false, step_index)?;
                self.gradient_step(net, batch, false, step_index)
            }
            _ => self.gradient_step(net, batch, true, step_index),
        }
    }

    fn gradient_step(
        &mut self,
        net: &mut NetworkState,
        batch: &Batch,
        two_step: bool,
        step_index: u64,
    ) -> Result<()> {
        let (p, d) = (net.p, net.d);
        let inv_p = 1.0 / p as f64;
        let extra = two_step && self.rhos.iter().any(|&r| r != 0.0);
        let single = batch.len() == 1;
        if !single {
            self.grad.clear();
            self.grad.resize(p * d, 0.0);
        }
        for nu in 0..batch.len() {
            let (z, y) = batch.sample(nu);
            for (l, w) in self.lam.iter_mut().zip(net.w.chunks_exact(d)) {
                *l = dot(w, z);
            }
            let f = net.output_from_preactivations(&self.lam);
            let r = loss_derivative(self.cfg.loss, f, y);
            for j in 0..p {
                self.coef[j] = r * net.a[j] * inv_p * net.activation.derivative(self.lam[j]);
            }
            if extra {
                // inner step on the same sample, seen through the pre-activations
                let zz = dot(z, z);
                let mut shifted = std::mem::take(&mut self.lam);
                for ((s, rho), c) in shifted.iter_mut().zip(&self.rhos).zip(&self.coef) {
                    *s -= rho * c * zz;
                }
                let f_shift = net.output_from_preactivations(&shifted);
                let r_shift = loss_derivative(self.cfg.loss, f_shift, y);
                for (j, &s) in shifted.iter().enumerate() {
                    self.coef[j] = r_shift * net.a[j] * inv_p * net.activation.derivative(s);
                }
                self.lam = shifted;
                // the spherical fast path below needs <w_j, z>, not the shifted value
                if single && self.cfg.spherical {
                    for (l, w) in self.lam.iter_mut().zip(net.w.chunks_exact(d)) {
                        *l = dot(w, z);
                    }
                }
            }
            if single {
                return self.apply_single(net, z, step_index);
            }
            for j in 0..p {
                if self.coef[j] != 0.0 {
                    axpy(self.coef[j], z, &mut self.grad[j * d..(j + 1) * d]);
                }
            }
        }
        self.apply_accumulated(net, batch.len(), step_index)
    }

    /// `n_b = 1`: every row moves along `z` (and along itself when spherical).
    fn apply_single(&mut self, net: &mut NetworkState, z: &[f64], step_index: u64) -> Result<()> {
        let d = net.d;
        let gamma = self.gamma;
        for (j, w) in net.w.chunks_exact_mut(d).enumerate() {
            let c = self.coef[j];
            if c == 0.0 {
                continue;
            }
            if self.cfg.spherical {
                // w - γ c (z - <z, w> w), then renormalise
                let keep = 1.0 + gamma * c * self.lam[j];
                for (wi, zi) in w.iter_mut().zip(z) {
                    *wi = keep * *wi - gamma * c * zi;
                }
                normalize_in_place(w).map_err(|_| Error::Divergence { step: step_index })?;
            } else {
                let mut ok = true;
                for (wi, zi) in w.iter_mut().zip(z) {
                    *wi -= gamma * c * zi;
                    ok &= wi.abs() <= DIVERGENCE_BOUND;
                }
                if !ok {
                    return Err(Error::Divergence { step: step_index });
                }
            }
        }
        Ok(())
    }

    fn apply_accumulated(&mut self, net: &mut NetworkState, n_b: usize, step_index: u64) -> Result<()> {
        let d = net.d;
        let scale = self.gamma / n_b as f64;
        for (w, g) in net.w.chunks_exact_mut(d).zip(self.grad.chunks_exact_mut(d)) {
            if self.cfg.spherical {
                let c = dot(g, w);
                axpy(-c, w, g);
                axpy(-scale, g, w);
                normalize_in_place(w).map_err(|_| Error::Divergence { step: step_index })?;
            } else {
                let mut ok = true;
                for (wi, gi) in w.iter_mut().zip(g.iter()) {
                    *wi -= scale * gi;
                    ok &= wi.abs() <= DIVERGENCE_BOUND;
                }
                if !ok {
                    return Err(Error::Divergence { step: step_index });
                }
            }
        }
        Ok(())
    }
}

/// Functional form of [`Optimizer::step`].
pub fn optimizer_step(
    net: &NetworkState,
    batch: &Batch,
    optimizer: &mut Optimizer,
) -> Result<NetworkState> {
    let mut next = net.clone();
    optimizer.step(&mut next, batch, 0)?;
    Ok(next)
}

fn require_analytic(activation: Activation) -> Result<()> {
    if !activation.is_analytic() {
        return Err(Error::InvalidArgument(format!(
            "drift functions need an analytic activation, got {activation}"
        )));
    }
    Ok(())
}

/// One-dimensional population drift
/// `φ(m) = E[h*(x*) σ'(x + a0 ρ0 σ'(x) h*(x*)) x⊥]`, with `(x, x*)` standard
/// normal of correlation `m` and `x⊥ = x* - m x`.
///
/// `rule` is used on both axes; the label axis carries `x*` directly so
/// breakpoints of piecewise links stay on the grid lines.
pub fn drift_phi(
    m: f64,
    rho0: f64,
    a0: f64,
    link: &LinkFunction,
    activation: Activation,
    rule: &QuadratureRule,
) -> Result<f64> {
    if m.abs() >= 1.0 {
        return Err(Error::InvalidArgument(format!("overlap must satisfy |m| < 1, got {m}")));
    }
    if link.index_dim() != 1 {
        return Err(Error::InvalidArgument("drift_phi needs a single-index link".into()));
    }
    require_analytic(activation)?;
    let s = (1.0 - m * m).sqrt();
    let mut acc = 0.0;
    rule.for_each_tensor_node(2, |u, w| {
        let xs = u[0];
        let x = m * xs + s * u[1];
        let h = link.eval(&[xs]);
        let inner = x + a0 * rho0 * activation.derivative(x) * h;
        acc += w * h * activation.derivative(inner) * (xs - m * x);
    });
    Ok(acc)
}

/// `∂φ/∂ρ0` at `ρ0 = 0`: `a0 E[h*(x*)^2 x⊥ σ''(x) σ'(x)]`.
pub fn drift_phi_rho_derivative(
    m: f64,
    a0: f64,
    link: &LinkFunction,
    activation: Activation,
    rule: &QuadratureRule,
) -> Result<f64> {
    if m.abs() >= 1.0 {
        return Err(Error::InvalidArgument(format!("overlap must satisfy |m| < 1, got {m}")));
    }
    require_analytic(activation)?;
    let s = (1.0 - m * m).sqrt();
    let mut acc = 0.0;
    rule.for_each_tensor_node(2, |u, w| {
        let xs = u[0];
        let x = m * xs + s * u[1];
        let h = link.eval(&[xs]);
        acc += w * h * h * (xs - m * x) * activation.second_derivative(x) * activation.derivative(x);
    });
    Ok(a0 * acc)
}

/// Multi-index drift `ψ(p) = E[h*(z*) σ'(z + a0 ρ0 σ'(z) h*(z*)) z⊥]` with
/// `z* ~ N(0, I_k)`, `z = <p, z*> + sqrt(1 - |p|^2) g` and `z⊥ = z* - z p`.
pub fn drift_psi(
    overlaps: &[f64],
    rho0: f64,
    a0: f64,
    link: &LinkFunction,
    activation: Activation,
    rule: &QuadratureRule,
) -> Result<Vec<f64>> {
    let k = link.index_dim();
    if overlaps.len() != k {
        return Err(Error::DimensionMismatch {
            expected: k,
            got: overlaps.len(),
        });
    }
    if k > crate::exponents::MAX_TENSOR_DIM {
        return Err(Error::Unsupported(format!("ψ quadrature needs k <= 3, got {k}")));
    }
    require_analytic(activation)?;
    let pn2 = dot(overlaps, overlaps);
    if pn2 >= 1.0 {
        return Err(Error::InvalidArgument("overlap vector must have norm < 1".into()));
    }
    let s = (1.0 - pn2).sqrt();
    let mut acc = vec![0.0; k];
    rule.for_each_tensor_node(k + 1, |u, w| {
        let zs = &u[..k];
        let z = dot(overlaps, zs) + s * u[k];
        let h = link.eval(zs);
        let inner = z + a0 * rho0 * activation.derivative(z) * h;
        let c = w * h * activation.derivative(inner);
        for r in 0..k {
            acc[r] += c * (zs[r] - z * overlaps[r]);
        }
    });
    Ok(acc)
}

/// One target direction of a [`DriftReport`].
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DirectionDrift {
    pub mc_mean: f64,
    pub mc_std_error: f64,
    /// `a0 ψ_r(W* w)` from quadrature (`a0 φ(m)` for `k = 1`).
    pub predicted: f64,
    pub gate: f64,
    pub agrees: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DriftReport {
    pub d: usize,
    pub samples: usize,
    pub overlaps: Vec<f64>,
    pub directions: Vec<DirectionDrift>,
}

impl DriftReport {
    pub fn all_agree(&self) -> bool {
        self.directions.iter().all(|d| d.agrees)
    }
}

/// Parameters of [`drift_consistency_check`].
#[derive(Clone, Copy, Debug)]
pub struct DriftSetup<'a> {
    pub link: &'a LinkFunction,
    pub activation: Activation,
    pub rho0: f64,
    pub a0: f64,
}

/// Monte-Carlo estimate of the population drift of the spherical
/// correlation-loss extragradient update, `E[<w*_r, -∇⊥L(f(z; w̃), y)>]`, in
/// full dimension, against `a0 ψ(W* w)` from quadrature. Agreement means
/// `|mc - predicted| <= 5 SE + 10/d`.
pub fn drift_consistency_check(
    w: &[f64],
    setup: DriftSetup<'_>,
    directions: &DirectionSet,
    samples: usize,
    sampler: &mut GaussianSampler,
) -> Result<DriftReport> {
    let d = directions.d();
    let k = directions.k();
    if w.len() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: w.len(),
        });
    }
    if k != setup.link.index_dim() {
        return Err(Error::DimensionMismatch {
            expected: setup.link.index_dim(),
            got: k,
        });
    }
    if d < 100 {
        return Err(Error::InvalidArgument(format!("drift check needs d >= 100, got {d}")));
    }
    if samples < 2 {
        return Err(Error::InvalidArgument("need at least two samples".into()));
    }
    require_analytic(setup.activation)?;
    let wn = dot(w, w).sqrt();
    if (wn - 1.0).abs() > crate::linalg::UNIT_TOL {
        return Err(Error::ContractViolation("drift check needs a unit w".into()));
    }
    let overlaps: Vec<f64> = directions.rows().iter().map(|r| dot(w, r)).collect();
    let rho = setup.rho0 / d as f64;
    let act = setup.activation;
    let mut z = vec![0.0; d];
    let mut u = vec![0.0; k];
    let mut sum = vec![0.0; k];
    let mut sq = vec![0.0; k];
    for _ in 0..samples {
        sampler.fill_gaussian(&mut z);
        directions.project_into(&z, &mut u);
        let lam = dot(w, &z);
        let zz = dot(&z, &z);
        let y = setup.link.eval(&u);
        // correlation loss: ∇L(w) = -a0 y σ'(λ) z, so w̃ = w + ρ a0 y σ'(λ) z
        let shifted = lam + rho * setup.a0 * y * act.derivative(lam) * zz;
        let c = setup.a0 * y * act.derivative(shifted);
        for r in 0..k {
            let x = c * (u[r] - lam * overlaps[r]);
            sum[r] += x;
            sq[r] += x * x;
        }
    }
    let rule = match setup.link.smoothness() {
        Smoothness::Analytic => crate::quadrature::gauss_hermite_rule(if k == 1 { 80 } else { 40 })?,
        Smoothness::Piecewise => crate::quadrature::split_rule(if k == 1 { 100 } else { 30 })?,
    };
    let predicted = if k == 1 {
        vec![setup.a0 * drift_phi(overlaps[0], setup.rho0, setup.a0, setup.link, act, &rule)?]
    } else {
        drift_psi(&overlaps, setup.rho0, setup.a0, setup.link, act, &rule)?
            .into_iter()
            .map(|v| setup.a0 * v)
            .collect()
    };
    let n = samples as f64;
    let dirs = (0..k)
        .map(|r| {
            let mean = sum[r] / n;
            let var = (sq[r] / n - mean * mean).max(0.0) * n / (n - 1.0);
            let se = (var / n).sqrt();
            let gate = 5.0 * se + 10.0 / d as f64;
            DirectionDrift {
                mc_mean: mean,
                mc_std_error: se,
                predicted: predicted[r],
                gate,
                agrees: (mean - predicted[r]).abs() <= gate,
            }
        })
        .collect();
    Ok(DriftReport {
        d,
        samples,
        overlaps,
        directions: dirs,
    })
}
