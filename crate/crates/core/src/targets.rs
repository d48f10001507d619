//! Probabilists' Hermite polynomials, the link-function zoo and activations.

use std::fmt;

use crate::{Error, Result};

/// Highest Hermite order accepted by [`hermite`].
pub const MAX_HERMITE_ORDER: usize = 30;

/// Probabilists' Hermite polynomial `He_k(x)`, with `E[He_j He_k] = k! δ_jk`.
pub fn hermite(k: usize, x: f64) -> Result<f64> {
    if k > MAX_HERMITE_ORDER {
        return Err(Error::OrderTooHigh(k));
    }
    Ok(hermite_unchecked(k, x))
}

#[inline]
pub(crate) fn hermite_unchecked(k: usize, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, x);
    if k == 0 {
        return prev;
    }
    for n in 1..k {
        let next = x * cur - n as f64 * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// Fills `out[k] = He_k(x)` for `k < out.len()`.
#[inline]
pub fn hermite_all(x: f64, out: &mut [f64]) {
    if out.is_empty() {
        return;
    }
    out[0] = 1.0;
    if out.len() > 1 {
        out[1] = x;
    }
    for n in 2..out.len() {
        out[n] = x * out[n - 1] - (n - 1) as f64 * out[n - 2];
    }
}

/// `sign` with `sign(0) = 0`.
#[inline]
pub fn sign0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[inline]
fn relu(x: f64) -> f64 {
    x.max(0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Smoothness {
    Analytic,
    Piecewise,
}

#[derive(Clone, Debug, PartialEq)]
enum LinkKind {
    Relu,
    Hermite(usize),
    /// Monomial-basis coefficients `c0 + c1 x + ...`.
    Polynomial(Vec<f64>),
    X1PlusX1X2,
    SignX1X2,
    X1PlusHe3X2,
    X1X2X3,
    X1PlusX1He3X2,
    He2PlusSignX1X2X3,
    SignX1X2X3,
    He4PlusSignX1X2X3,
}

/// A target link `h*: R^k -> R`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinkFunction {
    id: String,
    kind: LinkKind,
}

/// Canonical ids of the built-in links, in registry order.
pub const LINK_IDS: &[&str] = &[
    "relu",
    "He1",
    "He2",
    "He3",
    "He4",
    "He5",
    "He6",
    "x1+x1x2",
    "sign(x1x2)",
    "x1+He3(x2)",
    "x1x2x3",
    "x1+x1He3(x2)",
    "He2(x1)+sign(x1x2x3)",
    "sign(x1x2x3)",
    "He4(x1)+sign(x1x2x3)",
];

impl LinkFunction {
    /// Look up a link by id. Whitespace, `*` and `·` are ignored, so
    /// `"x1 + x1·He3(x2)"` and `"x1+x1He3(x2)"` name the same link.
    pub fn parse(id: &str) -> Result<Self> {
        let key: String = id
            .chars()
            .filter(|c| !c.is_whitespace() && *c != '*' && *c != '·')
            .collect();
        let kind = match key.as_str() {
            "relu" => LinkKind::Relu,
            "x1+x1x2" => LinkKind::X1PlusX1X2,
            "sign(x1x2)" => LinkKind::SignX1X2,
            "x1+He3(x2)" => LinkKind::X1PlusHe3X2,
            "x1x2x3" => LinkKind::X1X2X3,
            "x1+x1He3(x2)" => LinkKind::X1PlusX1He3X2,
            "He2(x1)+sign(x1x2x3)" => LinkKind::He2PlusSignX1X2X3,
            "sign(x1x2x3)" => LinkKind::SignX1X2X3,
            "He4(x1)+sign(x1x2x3)" => LinkKind::He4PlusSignX1X2X3,
            other => match other
                .strip_prefix("He")
                .and_then(|n| n.parse::<usize>().ok())
            {
                Some(n) if (1..=6).contains(&n) => LinkKind::Hermite(n),
                _ => {
                    return Err(Error::UnknownId {
                        kind: "link",
                        id: id.to_string(),
                    })
                }
            },
        };
        Ok(Self { id: key, kind })
    }

    pub fn hermite(k: usize) -> Result<Self> {
        if k > MAX_HERMITE_ORDER {
            return Err(Error::OrderTooHigh(k));
        }
        Ok(Self {
            id: format!("He{k}"),
            kind: LinkKind::Hermite(k),
        })
    }

    /// Single-index polynomial link from monomial coefficients (`c[i]` multiplies `x^i`).
    pub fn polynomial(coeffs: Vec<f64>) -> Self {
        let id = format!(
            "poly({})",
            coeffs
                .iter()
                .map(|c| format!("{c}"))
                .collect::<Vec<_>>()
                .join(",")
        );
        Self {
            id,
            kind: LinkKind::Polynomial(coeffs),
        }
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn index_dim(&self) -> usize {
        match self.kind {
            LinkKind::Relu | LinkKind::Hermite(_) | LinkKind::Polynomial(_) => 1,
            LinkKind::X1PlusX1X2
            | LinkKind::SignX1X2
            | LinkKind::X1PlusHe3X2
            | LinkKind::X1PlusX1He3X2 => 2,
            LinkKind::X1X2X3
            | LinkKind::He2PlusSignX1X2X3
            | LinkKind::SignX1X2X3
            | LinkKind::He4PlusSignX1X2X3 => 3,
        }
    }

    pub fn smoothness(&self) -> Smoothness {
        match self.kind {
            LinkKind::Relu
            | LinkKind::SignX1X2
            | LinkKind::He2PlusSignX1X2X3
            | LinkKind::SignX1X2X3
            | LinkKind::He4PlusSignX1X2X3 => Smoothness::Piecewise,
            _ => Smoothness::Analytic,
        }
    }

    /// Polynomial degree when the link is a polynomial.
    pub fn polynomial_degree(&self) -> Option<usize> {
        match &self.kind {
            LinkKind::Hermite(k) => Some(*k),
            LinkKind::Polynomial(c) => Some(c.iter().rposition(|&x| x != 0.0).unwrap_or(0)),
            LinkKind::X1PlusX1X2 => Some(2),
            LinkKind::X1PlusHe3X2 | LinkKind::X1X2X3 => Some(3),
            LinkKind::X1PlusX1He3X2 => Some(4),
            _ => None,
        }
    }

    /// Evaluate without checking the length of `u`.
    #[inline]
    pub fn eval(&self, u: &[f64]) -> f64 {
        match &self.kind {
            LinkKind::Relu => relu(u[0]),
            LinkKind::Hermite(k) => hermite_unchecked(*k, u[0]),
            LinkKind::Polynomial(c) => c.iter().rev().fold(0.0, |acc, &ci| acc * u[0] + ci),
            LinkKind::X1PlusX1X2 => u[0] + u[0] * u[1],
            LinkKind::SignX1X2 => sign0(u[0] * u[1]),
            LinkKind::X1PlusHe3X2 => u[0] + hermite_unchecked(3, u[1]),
            LinkKind::X1X2X3 => u[0] * u[1] * u[2],
            LinkKind::X1PlusX1He3X2 => u[0] + u[0] * hermite_unchecked(3, u[1]),
            LinkKind::He2PlusSignX1X2X3 => {
                hermite_unchecked(2, u[0]) + sign0(u[0] * u[1] * u[2])
            }
            LinkKind::SignX1X2X3 => sign0(u[0] * u[1] * u[2]),
            LinkKind::He4PlusSignX1X2X3 => {
                hermite_unchecked(4, u[0]) + sign0(u[0] * u[1] * u[2])
            }
        }
    }
}

impl fmt::Display for LinkFunction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.id)
    }
}

/// `h*(u)` with a length check on `u`.
pub fn eval_link(link: &LinkFunction, u: &[f64]) -> Result<f64> {
    if u.len() != link.index_dim() {
        return Err(Error::DimensionMismatch {
            expected: link.index_dim(),
            got: u.len(),
        });
    }
    Ok(link.eval(u))
}

/// Label `y = h*(W* z)`.
pub fn make_label(
    link: &LinkFunction,
    directions: &crate::linalg::DirectionSet,
    z: &[f64],
) -> Result<f64> {
    if directions.k() != link.index_dim() {
        return Err(Error::DimensionMismatch {
            expected: link.index_dim(),
            got: directions.k(),
        });
    }
    let u = directions.project(z)?;
    eval_link(link, &u)
}

/// Default shift for the biased analytic activations.
pub const DEFAULT_BIAS: f64 = 0.5;

/// Student activation σ.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Activation {
    Relu,
    Identity,
    /// `softplus(x + bias)`
    Softplus { bias: f64 },
    /// `erf(x + bias)`
    Erf { bias: f64 },
}

pub const ACTIVATION_IDS: &[&str] = &["relu", "identity", "softplus", "erf"];

const TWO_OVER_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;

#[inline]
fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Activation {
    pub fn parse(id: &str, bias: f64) -> Result<Self> {
        match id.trim() {
            "relu" => Ok(Self::Relu),
            "identity" => Ok(Self::Identity),
            "softplus" => Ok(Self::Softplus { bias }),
            "erf" => Ok(Self::Erf { bias }),
            other => Err(Error::UnknownId {
                kind: "activation",
                id: other.to_string(),
            }),
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            Self::Relu => "relu",
            Self::Identity => "identity",
            Self::Softplus { .. } => "softplus",
            Self::Erf { .. } => "erf",
        }
    }

    /// True when σ is analytic everywhere (needed by the drift functions).
    pub fn is_analytic(&self) -> bool {
        !matches!(self, Self::Relu)
    }

    #[inline]
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            Self::Relu => relu(x),
            Self::Identity => x,
            Self::Softplus { bias } => {
                let t = x + bias;
                // log(1 + e^t) without overflow
                t.max(0.0) + (-t.abs()).exp().ln_1p()
            }
            Self::Erf { bias } => libm::erf(x + bias),
        }
    }

    /// σ'; relu'(0) = 0.
    #[inline]
    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            Self::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::Identity => 1.0,
            Self::Softplus { bias } => logistic(x + bias),
            Self::Erf { bias } => {
                let t = x + bias;
                TWO_OVER_SQRT_PI * (-t * t).exp()
            }
        }
    }

    /// σ''; zero almost everywhere for relu and identity.
    #[inline]
    pub fn second_derivative(&self, x: f64) -> f64 {
        match *self {
            Self::Relu | Self::Identity => 0.0,
            Self::Softplus { bias } => {
                let s = logistic(x + bias);
                s * (1.0 - s)
            }
            Self::Erf { bias } => {
                let t = x + bias;
                -2.0 * t * TWO_OVER_SQRT_PI * (-t * t).exp()
            }
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{dot, DirectionSet, GaussianSampler};

    fn explicit(k: usize, x: f64) -> f64 {
        match k {
            0 => 1.0,
            1 => x,
            2 => x * x - 1.0,
            3 => x.powi(3) - 3.0 * x,
            4 => x.powi(4) - 6.0 * x * x + 3.0,
            5 => x.powi(5) - 10.0 * x.powi(3) + 15.0 * x,
            6 => x.powi(6) - 15.0 * x.powi(4) + 45.0 * x * x - 15.0,
            _ => unreachable!(),
        }
    }

    #[test]
    fn hermite_closed_forms() {
        assert_eq!(hermite(2, 2.0).unwrap(), 3.0);
        assert_eq!(hermite(3, 2.0).unwrap(), 2.0);
        assert_eq!(hermite(4, 0.0).unwrap(), 3.0);
        assert_eq!(hermite(31, 0.5), Err(Error::OrderTooHigh(31)));
        for k in 0..=6 {
            for i in 0..=100 {
                let x = -5.0 + 0.1 * i as f64;
                let e = explicit(k, x);
                assert!((hermite(k, x).unwrap() - e).abs() <= 1e-10 * e.abs().max(1.0));
            }
        }
    }

    #[test]
    fn hermite_all_matches_scalar() {
        let mut buf = [0.0; 9];
        hermite_all(1.3, &mut buf);
        for (k, v) in buf.iter().enumerate() {
            assert_eq!(*v, hermite_unchecked(k, 1.3));
        }
    }

    #[test]
    fn hermite_parity() {
        let mut s = GaussianSampler::new(2, 0);
        for _ in 0..100 {
            let x = 3.0 * s.gaussian();
            for k in 0..=10 {
                let sgn = if k % 2 == 0 { 1.0 } else { -1.0 };
                let (a, b) = (hermite(k, -x).unwrap(), sgn * hermite(k, x).unwrap());
                assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
            }
        }
    }

    #[test]
    fn link_examples() {
        let l = LinkFunction::parse("x1+x1x2").unwrap();
        assert_eq!(eval_link(&l, &[1.0, 2.0]).unwrap(), 3.0);
        let l = LinkFunction::parse("sign(x1x2x3)").unwrap();
        assert_eq!(eval_link(&l, &[1.0, -1.0, 2.0]).unwrap(), -1.0);
        let l = LinkFunction::parse("He2(x1)+sign(x1x2x3)").unwrap();
        assert_eq!(eval_link(&l, &[0.0, 1.0, 1.0]).unwrap(), -1.0);
        assert!(matches!(
            eval_link(&l, &[0.0, 1.0]),
            Err(Error::DimensionMismatch { expected: 3, got: 2 })
        ));
        let l = LinkFunction::parse("x1 + x1·He3(x2)").unwrap();
        assert_eq!(l.id(), "x1+x1He3(x2)");
        assert_eq!(eval_link(&l, &[2.0, 2.0]).unwrap(), 2.0 + 2.0 * 2.0);
        assert!(LinkFunction::parse("cos(x1)").is_err());
    }

    #[test]
    fn every_registered_id_parses() {
        for id in LINK_IDS {
            let l = LinkFunction::parse(id).unwrap();
            assert_eq!(l.id(), *id);
        }
        for id in ACTIVATION_IDS {
            assert_eq!(Activation::parse(id, DEFAULT_BIAS).unwrap().id(), *id);
        }
    }

    #[test]
    fn polynomial_link_horner() {
        let p = LinkFunction::polynomial(vec![1.0, -2.0, 0.5]);
        assert_eq!(p.eval(&[2.0]), 1.0 - 4.0 + 2.0);
        assert_eq!(p.polynomial_degree(), Some(2));
    }

    #[test]
    fn make_label_examples() {
        let he3 = LinkFunction::parse("He3").unwrap();
        let dirs = DirectionSet::standard(1, 4).unwrap();
        assert_eq!(make_label(&he3, &dirs, &[2.0, 5.0, -1.0, 0.3]).unwrap(), 2.0);

        // k of the directions must match the link
        assert!(make_label(&he3, &DirectionSet::standard(2, 4).unwrap(), &[0.0; 4]).is_err());

        let prod = LinkFunction::parse("x1+x1x2").unwrap();
        let dirs2 = DirectionSet::standard(2, 4).unwrap();
        // x1 + x1 x2 at (1, -1) = 0; the product term alone is -1
        assert_eq!(make_label(&prod, &dirs2, &[1.0, -1.0, 0.0, 0.0]).unwrap(), 0.0);
        let sign = LinkFunction::parse("sign(x1x2)").unwrap();
        assert_eq!(make_label(&sign, &dirs2, &[1.0, -1.0, 7.0, 0.0]).unwrap(), -1.0);
    }

    #[test]
    fn labels_are_rotation_invariant() {
        let link = LinkFunction::parse("x1+He3(x2)").unwrap();
        let d = 6;
        let mut s = GaussianSampler::new(4, 0);
        let dirs = DirectionSet::random(2, d, &mut s).unwrap();
        // Orthogonal map Q = I - 2 u uᵀ applied to both W* and z.
        let u = s.uniform_sphere(d).unwrap();
        let reflect = |v: &[f64]| {
            let c = 2.0 * dot(&u, v);
            v.iter().zip(&u).map(|(a, b)| a - c * b).collect::<Vec<_>>()
        };
        let rotated =
            DirectionSet::from_rows(dirs.rows().iter().map(|r| reflect(r)).collect()).unwrap();
        for _ in 0..50 {
            let z = s.sample_gaussian(d);
            let y0 = make_label(&link, &dirs, &z).unwrap();
            let y1 = make_label(&link, &rotated, &reflect(&z)).unwrap();
            assert!((y0 - y1).abs() < 1e-12 * y0.abs().max(1.0));
        }
    }

    #[test]
    fn parity_of_zoo_members() {
        let mut s = GaussianSampler::new(8, 0);
        for id in ["He2", "He4", "sign(x1x2)"] {
            let l = LinkFunction::parse(id).unwrap();
            for _ in 0..100 {
                let u: Vec<f64> = s.sample_gaussian(l.index_dim());
                let neg: Vec<f64> = u.iter().map(|x| -x).collect();
                assert!((l.eval(&u) - l.eval(&neg)).abs() < 1e-12 * l.eval(&u).abs().max(1.0));
            }
        }
        for id in ["sign(x1x2)", "sign(x1x2x3)"] {
            let l = LinkFunction::parse(id).unwrap();
            for _ in 0..100 {
                let u = s.sample_gaussian(l.index_dim());
                for c in 0..u.len() {
                    let mut f = u.clone();
                    f[c] = -f[c];
                    assert_eq!(l.eval(&f), -l.eval(&u));
                }
            }
        }
    }

    #[test]
    fn zoo_has_polynomial_growth() {
        // |h(x)| <= C (1 + |x|)^6 on the ball |x| <= 10, with C = 16.
        let mut s = GaussianSampler::new(12, 0);
        for id in LINK_IDS {
            let l = LinkFunction::parse(id).unwrap();
            for _ in 0..500 {
                let dir = s.uniform_sphere(l.index_dim()).unwrap();
                let r = 10.0 * s.uniform();
                let u: Vec<f64> = dir.iter().map(|x| r * x).collect();
                let bound = 16.0 * (1.0 + r).powi(6);
                assert!(l.eval(&u).abs() <= bound, "{id}");
            }
        }
    }

    #[test]
    fn activation_derivatives_match_finite_differences() {
        let mut s = GaussianSampler::new(21, 0);
        let acts = [
            Activation::Relu,
            Activation::Identity,
            Activation::Softplus { bias: DEFAULT_BIAS },
            Activation::Erf { bias: DEFAULT_BIAS },
        ];
        let h = 1e-5;
        for act in acts {
            for _ in 0..100 {
                let mut x = 2.0 * s.gaussian();
                if act == Activation::Relu && x.abs() < 1e-3 {
                    x += 0.1;
                }
                let fd = (act.value(x + h) - act.value(x - h)) / (2.0 * h);
                let d = act.derivative(x);
                assert!((fd - d).abs() <= 1e-6 * d.abs().max(1.0), "{act} at {x}");
                let fd2 = (act.derivative(x + h) - act.derivative(x - h)) / (2.0 * h);
                let d2 = act.second_derivative(x);
                assert!((fd2 - d2).abs() <= 1e-6 * d2.abs().max(1.0), "{act}'' at {x}");
            }
        }
        assert_eq!(Activation::Relu.derivative(0.0), 0.0);
    }
}
