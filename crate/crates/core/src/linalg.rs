//! Gaussian streams, sphere geometry and overlap metrics.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::{Error, Result};

/// Tolerance used when checking that a vector is on the unit sphere.
pub const UNIT_TOL: f64 = 1e-9;

/// Deterministic standard-normal stream keyed by `(seed, stream_id)`.
///
/// Backed by a ChaCha counter-mode generator: the seed selects the key and the
/// stream id selects an independent keystream, so trajectories never share
/// generator state and replay identically regardless of scheduling.
#[derive(Clone, Debug)]
pub struct GaussianSampler {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl GaussianSampler {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        Self {
            seed,
            stream_id,
            rng,
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    #[inline]
    pub fn gaussian(&mut self) -> f64 {
        self.rng.sample(StandardNormal)
    }

    pub fn fill_gaussian(&mut self, out: &mut [f64]) {
        for x in out.iter_mut() {
            *x = self.rng.sample(StandardNormal);
        }
    }

    /// A fresh length-`d` vector of i.i.d. N(0, 1) draws.
    pub fn sample_gaussian(&mut self, d: usize) -> Vec<f64> {
        let mut v = vec![0.0; d];
        self.fill_gaussian(&mut v);
        v
    }

    /// Uniform draw in `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    /// Uniform draw on `{-1, +1}`.
    pub fn rademacher(&mut self) -> f64 {
        if self.rng.random::<bool>() {
            1.0
        } else {
            -1.0
        }
    }

    /// Uniform draw on the unit sphere of `R^d`.
    pub fn uniform_sphere(&mut self, d: usize) -> Result<Vec<f64>> {
        project_sphere(&self.sample_gaussian(d))
    }
}

/// Free-function form of [`GaussianSampler::sample_gaussian`].
pub fn sample_gaussian(sampler: &mut GaussianSampler, d: usize) -> Vec<f64> {
    sampler.sample_gaussian(d)
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    // Four independent accumulators; the hot loop is bound by this reduction.
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for i in 0..chunks {
        let o = 4 * i;
        acc[0] += a[o] * b[o];
        acc[1] += a[o + 1] * b[o + 1];
        acc[2] += a[o + 2] * b[o + 2];
        acc[3] += a[o + 3] * b[o + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[inline]
pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `y += alpha * x`
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Normalise `w` onto the unit sphere.
pub fn project_sphere(w: &[f64]) -> Result<Vec<f64>> {
    let mut out = w.to_vec();
    normalize_in_place(&mut out)?;
    Ok(out)
}

pub(crate) fn normalize_in_place(w: &mut [f64]) -> Result<()> {
    let n = norm(w);
    if n == 0.0 || !n.is_finite() {
        return Err(Error::DegenerateState("cannot normalise a zero or non-finite vector"));
    }
    for x in w.iter_mut() {
        *x /= n;
    }
    Ok(())
}

/// Tangential part `g - <g, w> w` of `g` at the unit vector `w`.
pub fn spherical_gradient(g: &[f64], w: &[f64]) -> Result<Vec<f64>> {
    if g.len() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: w.len(),
            got: g.len(),
        });
    }
    let wn = norm(w);
    if (wn - 1.0).abs() > UNIT_TOL {
        return Err(Error::ContractViolation(format!(
            "spherical gradient needs a unit base point, got norm {wn}"
        )));
    }
    let mut out = g.to_vec();
    axpy(-dot(g, w), w, &mut out);
    Ok(out)
}

pub fn cosine_similarity(w: &[f64], v: &[f64]) -> Result<f64> {
    if w.len() != v.len() {
        return Err(Error::DimensionMismatch {
            expected: w.len(),
            got: v.len(),
        });
    }
    let (nw, nv) = (norm(w), norm(v));
    if nw == 0.0 || nv == 0.0 {
        return Err(Error::DegenerateState("cosine similarity of a zero vector"));
    }
    Ok((dot(w, v) / (nw * nv)).clamp(-1.0, 1.0))
}

/// Orthonormal target directions `W*` (k rows in `R^d`).
#[derive(Clone, Debug, PartialEq)]
pub struct DirectionSet {
    rows: Vec<Vec<f64>>,
    d: usize,
    standard: bool,
}

impl DirectionSet {
    /// The first `k` standard basis vectors.
    pub fn standard(k: usize, d: usize) -> Result<Self> {
        if k == 0 || k > d {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= k <= d, got k={k}, d={d}"
            )));
        }
        let rows = (0..k)
            .map(|r| {
                let mut e = vec![0.0; d];
                e[r] = 1.0;
                e
            })
            .collect();
        Ok(Self {
            rows,
            d,
            standard: true,
        })
    }

    /// `k` orthonormal directions from Gram–Schmidt on Gaussian vectors.
    pub fn random(k: usize, d: usize, sampler: &mut GaussianSampler) -> Result<Self> {
        if k == 0 || k > d {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= k <= d, got k={k}, d={d}"
            )));
        }
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(k);
        while rows.len() < k {
            let mut v = sampler.sample_gaussian(d);
            // two passes keep the Gram matrix at machine precision
            for _ in 0..2 {
                for r in &rows {
                    let c = dot(&v, r);
                    axpy(-c, r, &mut v);
                }
            }
            if normalize_in_place(&mut v).is_ok() {
                rows.push(v);
            }
        }
        Ok(Self {
            rows,
            d,
            standard: false,
        })
    }

    /// Wrap caller-provided rows, checking orthonormality to 1e-12.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let d = rows
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::InvalidArgument("empty direction set".into()))?;
        for (i, a) in rows.iter().enumerate() {
            if a.len() != d {
                return Err(Error::DimensionMismatch {
                    expected: d,
                    got: a.len(),
                });
            }
            for (j, b) in rows.iter().enumerate().skip(i) {
                let target = if i == j { 1.0 } else { 0.0 };
                if (dot(a, b) - target).abs() > 1e-12 {
                    return Err(Error::ContractViolation(format!(
                        "directions {i} and {j} are not orthonormal"
                    )));
                }
            }
        }
        let standard = rows.iter().enumerate().all(|(r, row)| {
            row.iter()
                .enumerate()
                .all(|(c, &x)| x == if c == r { 1.0 } else { 0.0 })
        });
        Ok(Self { rows, d, standard })
    }

    pub fn k(&self) -> usize {
        self.rows.len()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.rows[r]
    }

    pub fn is_standard(&self) -> bool {
        self.standard
    }

    /// Writes `W* z` into `out` (length k).
    #[inline]
    pub fn project_into(&self, z: &[f64], out: &mut [f64]) {
        if self.standard {
            out.copy_from_slice(&z[..out.len()]);
        } else {
            for (o, row) in out.iter_mut().zip(&self.rows) {
                *o = dot(row, z);
            }
        }
    }

    pub fn project(&self, z: &[f64]) -> Result<Vec<f64>> {
        if z.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: z.len(),
            });
        }
        let mut out = vec![0.0; self.k()];
        self.project_into(z, &mut out);
        Ok(out)
    }
}

/// Entry `r` is `max_j |CosSim(w_j, w*_r)|`.
pub fn max_abs_cosine_per_direction<W: AsRef<[f64]>>(
    weights: &[W],
    targets: &DirectionSet,
) -> Result<Vec<f64>> {
    if weights.is_empty() {
        return Err(Error::InvalidArgument("no weight vectors".into()));
    }
    let mut out = vec![0.0f64; targets.k()];
    for w in weights {
        let w = w.as_ref();
        for (r, best) in out.iter_mut().enumerate() {
            let c = cosine_similarity(w, targets.row(r))?.abs();
            if c > *best {
                *best = c;
            }
        }
    }
    Ok(out)
}

/// `||Ŵ W*ᵀ||_F` with `Ŵ` the row-normalised weights: the overlap of the
/// learner with the whole target subspace.
pub fn subspace_overlap<W: AsRef<[f64]>>(weights: &[W], targets: &DirectionSet) -> Result<f64> {
    let mut acc = 0.0;
    for w in weights {
        let w = w.as_ref();
        for r in 0..targets.k() {
            let c = cosine_similarity(w, targets.row(r))?;
            acc += c * c;
        }
    }
    Ok(acc.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn sampler_is_deterministic() {
        let a = GaussianSampler::new(1, 0).sample_gaussian(4);
        let b = GaussianSampler::new(1, 0).sample_gaussian(4);
        assert_eq!(a, b);
        let c = GaussianSampler::new(1, 1).sample_gaussian(4);
        assert_ne!(a, c);
    }

    #[test]
    fn sampler_moments() {
        let mut s = GaussianSampler::new(7, 3);
        let n = 1_000_000;
        let (mut m1, mut m2) = (0.0, 0.0);
        for _ in 0..n {
            let x = s.gaussian();
            m1 += x;
            m2 += x * x;
        }
        let mean = m1 / n as f64;
        let var = m2 / n as f64 - mean * mean;
        let se = 1.0 / (n as f64).sqrt();
        assert!(mean.abs() < 4.0 * se, "mean {mean}");
        // Var of the sample variance is 2/n for a Gaussian.
        assert!((var - 1.0).abs() < 4.0 * (2.0f64).sqrt() * se, "var {var}");
    }

    #[test]
    fn chi_square_concentration() {
        let mut s = GaussianSampler::new(11, 0);
        let d = 1000;
        let mean: f64 = (0..100)
            .map(|_| {
                let z = s.sample_gaussian(d);
                dot(&z, &z) / d as f64
            })
            .sum::<f64>()
            / 100.0;
        assert!((mean - 1.0).abs() < 0.05, "{mean}");
    }

    #[test]
    fn project_sphere_examples() {
        let p = project_sphere(&[3.0, 4.0]).unwrap();
        assert!((p[0] - 0.6).abs() < 1e-15 && (p[1] - 0.8).abs() < 1e-15);
        assert_eq!(project_sphere(&[1.0, 0.0]).unwrap(), vec![1.0, 0.0]);
        assert!(matches!(
            project_sphere(&[0.0, 0.0]),
            Err(Error::DegenerateState(_))
        ));
    }

    #[test]
    fn spherical_gradient_examples() {
        let w = [1.0, 0.0, 0.0];
        assert_eq!(spherical_gradient(&w, &w).unwrap(), vec![0.0; 3]);
        assert_eq!(
            spherical_gradient(&[0.0, 2.0, -1.0], &w).unwrap(),
            vec![0.0, 2.0, -1.0]
        );
        assert_eq!(
            spherical_gradient(&[1.0, 1.0, 0.0], &w).unwrap(),
            vec![0.0, 1.0, 0.0]
        );
        assert!(matches!(
            spherical_gradient(&[1.0, 1.0, 0.0], &[2.0, 0.0, 0.0]),
            Err(Error::ContractViolation(_))
        ));
    }

    #[test]
    fn spherical_gradient_is_tangent() {
        let mut s = GaussianSampler::new(5, 0);
        for &d in &[2usize, 10, 1000] {
            for _ in 0..1000 {
                let g = s.sample_gaussian(d);
                let w = s.uniform_sphere(d).unwrap();
                let t = spherical_gradient(&g, &w).unwrap();
                assert!(dot(&t, &w).abs() <= 1e-9 * norm(&g));
            }
        }
    }

    #[test]
    fn cosine_examples() {
        assert!((cosine_similarity(&[1.0, 2.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(cosine_similarity(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        assert!((cosine_similarity(&[3.0, 4.0], &[1.0, 0.0]).unwrap() - 0.6).abs() < 1e-15);
        assert!(cosine_similarity(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn max_abs_cosine_examples() {
        let t = DirectionSet::standard(1, 3).unwrap();
        assert_eq!(
            max_abs_cosine_per_direction(&[vec![1.0, 0.0, 0.0]], &t).unwrap(),
            vec![1.0]
        );
        // cosines 0.2 and -0.7 against e1
        let w1 = vec![0.2, (1.0f64 - 0.04).sqrt(), 0.0];
        let w2 = vec![-0.7, 0.0, (1.0f64 - 0.49).sqrt()];
        let m = max_abs_cosine_per_direction(&[w1, w2], &t).unwrap();
        assert!((m[0] - 0.7).abs() < 1e-12);
        let empty: Vec<Vec<f64>> = vec![];
        assert!(max_abs_cosine_per_direction(&empty, &t).is_err());
    }

    #[test]
    fn random_unit_vectors_have_small_overlap() {
        let d = 10_000;
        let t = DirectionSet::standard(2, d).unwrap();
        let mut acc = [0.0; 2];
        for seed in 0..100 {
            let mut s = GaussianSampler::new(seed, 0);
            let w = s.uniform_sphere(d).unwrap();
            let m = max_abs_cosine_per_direction(&[w], &t).unwrap();
            acc[0] += m[0];
            acc[1] += m[1];
        }
        let bound = 3.0 * 2.0 / (d as f64).sqrt();
        for a in acc {
            assert!(a / 100.0 < bound);
        }
    }

    #[test]
    fn random_directions_are_orthonormal() {
        let mut s = GaussianSampler::new(3, 9);
        let ds = DirectionSet::random(3, 50, &mut s).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let target = if i == j { 1.0 } else { 0.0 };
                assert!((dot(ds.row(i), ds.row(j)) - target).abs() < 1e-12);
            }
        }
        assert!(DirectionSet::from_rows(ds.rows().to_vec()).is_ok());
        assert!(DirectionSet::from_rows(vec![vec![1.0, 1.0]]).is_err());
        assert!(DirectionSet::from_rows(vec![vec![0.0, 1.0]]).unwrap().k() == 1);
    }

    proptest! {
        #[test]
        fn project_sphere_idempotent(v in proptest::collection::vec(-10.0f64..10.0, 1..20)) {
            prop_assume!(norm(&v) > 1e-6);
            let p = project_sphere(&v).unwrap();
            prop_assert!((norm(&p) - 1.0).abs() < 1e-12);
            let q = project_sphere(&p).unwrap();
            for (a, b) in p.iter().zip(&q) {
                prop_assert!((a - b).abs() < 1e-15);
            }
        }

        #[test]
        fn cosine_scale_invariance(
            w in proptest::collection::vec(-5.0f64..5.0, 5),
            v in proptest::collection::vec(-5.0f64..5.0, 5),
            alpha in prop_oneof![-10.0f64..-0.1, 0.1f64..10.0],
            beta in prop_oneof![-10.0f64..-0.1, 0.1f64..10.0],
        ) {
            prop_assume!(norm(&w) > 1e-3 && norm(&v) > 1e-3);
            let c = cosine_similarity(&w, &v).unwrap();
            let ws: Vec<f64> = w.iter().map(|x| alpha * x).collect();
            let vs: Vec<f64> = v.iter().map(|x| beta * x).collect();
            let cs = cosine_similarity(&ws, &vs).unwrap();
            prop_assert!((cs - (alpha * beta).signum() * c).abs() < 1e-12);
        }
    }
}
