use mindex::dynamics::*;
use mindex::linalg::{dot, norm, DirectionSet, GaussianSampler};
use mindex::quadrature::gauss_hermite_rule;
use mindex::targets::{Activation, LinkFunction, DEFAULT_BIAS};

const SMOOTH: [Activation; 3] = [
    Activation::Softplus { bias: DEFAULT_BIAS },
    Activation::Erf { bias: DEFAULT_BIAS },
    Activation::Identity,
];

fn flat_loss(rows: &[Vec<f64>], a: &[f64], act: Activation, z: &[f64], y: f64, kind: LossKind) -> f64 {
    let net = NetworkState::new(rows.to_vec(), a.to_vec(), act).unwrap();
    loss(kind, forward(&net, z).unwrap(), y)
}

/// Central differences of `W -> L(f(z; W), y)`.
fn fd_grad(rows: &[Vec<f64>], a: &[f64], act: Activation, z: &[f64], y: f64, kind: LossKind) -> Vec<Vec<f64>> {
    let h = 1e-5;
    let mut out = vec![vec![0.0; z.len()]; rows.len()];
    for j in 0..rows.len() {
        for i in 0..z.len() {
            let mut plus = rows.to_vec();
            let mut minus = rows.to_vec();
            plus[j][i] += h;
            minus[j][i] -= h;
            out[j][i] = (flat_loss(&plus, a, act, z, y, kind) - flat_loss(&minus, a, act, z, y, kind)) / (2.0 * h);
        }
    }
    out
}

fn rel_err(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (ra, rb) in a.iter().zip(b) {
        for (x, y) in ra.iter().zip(rb) {
            num += (x - y) * (x - y);
            den += y * y;
        }
    }
    num.sqrt() / den.sqrt().max(1e-300)
}

struct Instance {
    rows: Vec<Vec<f64>>,
    a: Vec<f64>,
    act: Activation,
    kind: LossKind,
    z: Vec<f64>,
    y: f64,
}

fn random_instance(s: &mut GaussianSampler, i: usize) -> Instance {
    let p = 1 + i % 3;
    let d = 4 + i % 5;
    Instance {
        rows: (0..p).map(|_| s.uniform_sphere(d).unwrap()).collect(),
        a: (0..p).map(|_| s.gaussian()).collect(),
        act: SMOOTH[i % 3],
        kind: if i.is_multiple_of(2) { LossKind::Squared } else { LossKind::Correlation },
        z: s.sample_gaussian(d),
        y: s.gaussian(),
    }
}

#[test]
fn analytic_gradient_matches_finite_differences() {
    let mut s = GaussianSampler::new(11, 0);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let c = random_instance(&mut s, i);
        let net = NetworkState::new(c.rows.clone(), c.a.clone(), c.act).unwrap();
        let g = grad_first_layer(&net, &c.z, c.y, c.kind).unwrap();
        let fd = fd_grad(&c.rows, &c.a, c.act, &c.z, c.y, c.kind);
        worst = worst.max(rel_err(&g, &fd));
    }
    assert!(worst < 1e-5, "worst relative error {worst}");
}

#[test]
fn extragradient_step_matches_finite_difference_composition() {
    let mut s = GaussianSampler::new(12, 0);
    let mut worst: f64 = 0.0;
    for i in 0..1000 {
        let c = random_instance(&mut s, i);
        let d = c.z.len();
        let rho0 = 0.05 + 0.5 * s.uniform();
        // γ = 1 so the update is exactly minus the outer gradient
        let cfg = OptimizerConfig {
            algorithm: Algorithm::Egd,
            loss: c.kind,
            gamma0: d as f64,
            rho0,
            ..Default::default()
        };
        let mut opt = Optimizer::new(cfg, c.rows.len(), d, &mut s).unwrap();
        let net = NetworkState::new(c.rows.clone(), c.a.clone(), c.act).unwrap();
        let batch = Batch::from_samples(&[(c.z.clone(), c.y)]).unwrap();
        let next = optimizer_step(&net, &batch, &mut opt).unwrap();
        let step: Vec<Vec<f64>> = c
            .rows
            .iter()
            .zip(next.rows())
            .map(|(w, v)| w.iter().zip(v).map(|(a, b)| a - b).collect())
            .collect();

        let rho = rho0 / d as f64;
        let g0 = fd_grad(&c.rows, &c.a, c.act, &c.z, c.y, c.kind);
        let tilde: Vec<Vec<f64>> = c
            .rows
            .iter()
            .zip(&g0)
            .map(|(w, g)| w.iter().zip(g).map(|(a, b)| a - rho * b).collect())
            .collect();
        let outer = fd_grad(&tilde, &c.a, c.act, &c.z, c.y, c.kind);
        worst = worst.max(rel_err(&step, &outer));
    }
    assert!(worst < 1e-5, "worst relative error {worst}");
}

#[test]
fn single_neuron_closed_form() {
    // correlation loss, p = 1: the outer gradient is
    // -a0 y σ'(<w,z> + ρ a0 y σ'(<w,z>) |z|^2) z
    let mut s = GaussianSampler::new(13, 0);
    for i in 0..200 {
        let d = 16;
        let act = SMOOTH[i % 2];
        let w = s.uniform_sphere(d).unwrap();
        let a0 = s.gaussian();
        let z = s.sample_gaussian(d);
        let y = s.gaussian();
        for alg in [Algorithm::Egd, Algorithm::Sam] {
            let cfg = OptimizerConfig {
                algorithm: alg,
                loss: LossKind::Correlation,
                gamma0: d as f64,
                rho0: 0.3,
                ..Default::default()
            };
            let rho = cfg.effective_rho(d);
            let mut opt = Optimizer::new(cfg, 1, d, &mut s).unwrap();
            let net = NetworkState::new(vec![w.clone()], vec![a0], act).unwrap();
            let next = optimizer_step(&net, &Batch::from_samples(&[(z.clone(), y)]).unwrap(), &mut opt).unwrap();
            let lam = dot(&w, &z);
            let c = -a0 * y * act.derivative(lam + rho * a0 * y * act.derivative(lam) * dot(&z, &z));
            for i in 0..d {
                let expect = w[i] - c * z[i];
                assert!((next.row(0)[i] - expect).abs() < 1e-12 * (1.0 + expect.abs()));
            }
        }
    }
}

fn run(cfg: OptimizerConfig, steps: usize, seed: u64) -> NetworkState {
    let d = 32;
    let p = 3;
    let mut init = GaussianSampler::new(seed, 1);
    let targets = DirectionSet::standard(1, d).unwrap();
    let link = LinkFunction::parse("He3").unwrap();
    let spec = InitSpec {
        first_layer: FirstLayerInit::UniformSphere,
        second_layer: SecondLayerInit::Gaussian,
    };
    let mut net = NetworkState::init(&spec, p, Activation::Relu, &targets, &mut init).unwrap();
    let n_b = cfg.batch;
    let mut opt = Optimizer::new(cfg, p, d, &mut init).unwrap();
    let mut data = GaussianSampler::new(seed, 0);
    let mut batch = Batch::new(d);
    for t in 0..steps {
        batch.clear();
        for _ in 0..n_b {
            let z = data.sample_gaussian(d);
            let y = link.eval(&z[..1]);
            batch.push(&z, y).unwrap();
        }
        opt.step(&mut net, &batch, t as u64).unwrap();
    }
    net
}

#[test]
fn egd_with_zero_rho_is_sgd_bit_for_bit() {
    for spherical in [false, true] {
        for batch in [1, 3] {
            let sgd = OptimizerConfig {
                algorithm: Algorithm::Sgd,
                spherical,
                batch,
                ..Default::default()
            };
            let egd = OptimizerConfig {
                algorithm: Algorithm::Egd,
                rho0: 0.0,
                ..sgd.clone()
            };
            assert_eq!(run(sgd, 300, 5), run(egd, 300, 5));
        }
    }
}

#[test]
fn lookahead_is_two_sgd_steps_on_the_same_batch() {
    let d = 12;
    let mut s = GaussianSampler::new(3, 0);
    let net = NetworkState::new(
        (0..2).map(|_| s.uniform_sphere(d).unwrap()).collect(),
        vec![0.7, -1.2],
        Activation::Relu,
    )
    .unwrap();
    let batch = Batch::from_samples(&[(s.sample_gaussian(d), 0.4), (s.sample_gaussian(d), -1.0)]).unwrap();
    let base = OptimizerConfig {
        algorithm: Algorithm::Sgd,
        gamma0: 0.5,
        batch: 2,
        ..Default::default()
    };
    let mut sgd = Optimizer::new(base.clone(), 2, d, &mut s).unwrap();
    let mut la = Optimizer::new(
        OptimizerConfig {
            algorithm: Algorithm::Lookahead2,
            ..base
        },
        2,
        d,
        &mut s,
    )
    .unwrap();
    let twice = optimizer_step(&optimizer_step(&net, &batch, &mut sgd).unwrap(), &batch, &mut sgd).unwrap();
    assert_eq!(optimizer_step(&net, &batch, &mut la).unwrap(), twice);
}

#[test]
fn duplicated_sample_batch_matches_single_sample() {
    let d = 10;
    let mut s = GaussianSampler::new(4, 0);
    for spherical in [false, true] {
        let net = NetworkState::new(
            (0..3).map(|_| s.uniform_sphere(d).unwrap()).collect(),
            vec![1.0, -0.5, 0.25],
            Activation::Softplus { bias: DEFAULT_BIAS },
        )
        .unwrap();
        let z = s.sample_gaussian(d);
        let cfg = |batch| OptimizerConfig {
            spherical,
            gamma0: 2.0,
            rho0: 0.4,
            batch,
            ..Default::default()
        };
        let mut one = Optimizer::new(cfg(1), 3, d, &mut s).unwrap();
        let mut two = Optimizer::new(cfg(2), 3, d, &mut s).unwrap();
        let a = optimizer_step(&net, &Batch::from_samples(&[(z.clone(), 0.3)]).unwrap(), &mut one).unwrap();
        let b = optimizer_step(&net, &Batch::from_samples(&[(z.clone(), 0.3), (z.clone(), 0.3)]).unwrap(), &mut two)
            .unwrap();
        for (ra, rb) in a.rows().zip(b.rows()) {
            for (x, y) in ra.iter().zip(rb) {
                assert!((x - y).abs() < 1e-14, "{x} vs {y}");
            }
        }
    }
}

#[test]
fn spherical_rows_stay_on_the_sphere_and_second_layer_is_frozen() {
    for batch in [1, 4] {
        for algorithm in [Algorithm::Sgd, Algorithm::Egd, Algorithm::Sam, Algorithm::Lookahead2] {
            let cfg = OptimizerConfig {
                algorithm,
                spherical: true,
                gamma0: 1.0,
                batch,
                ..Default::default()
            };
            let start = run(cfg.clone(), 0, 9);
            let net = run(cfg, 1000, 9);
            assert_eq!(net.a(), start.a());
            for w in net.rows() {
                assert!((norm(w) - 1.0).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn rademacher_rho_signs_flip_individual_neurons() {
    let mut s = GaussianSampler::new(21, 1);
    let cfg = OptimizerConfig {
        rho_signs: RhoSigns::Rademacher,
        ..Default::default()
    };
    let opt = Optimizer::new(cfg.clone(), 64, 100, &mut s).unwrap();
    let rho = cfg.effective_rho(100);
    assert!(opt.rhos().iter().all(|&r| r == rho || r == -rho));
    assert!(opt.rhos().iter().any(|&r| r > 0.0) && opt.rhos().iter().any(|&r| r < 0.0));
}

#[test]
fn drift_rho_derivative_matches_finite_difference() {
    let rule = gauss_hermite_rule(60).unwrap();
    let he3 = LinkFunction::parse("He3").unwrap();
    let act = Activation::Softplus { bias: DEFAULT_BIAS };
    for m in [0.05, 0.1, 0.3, -0.2] {
        let h = 1e-5;
        let fd = (drift_phi(m, h, 1.0, &he3, act, &rule).unwrap() - drift_phi(m, -h, 1.0, &he3, act, &rule).unwrap())
            / (2.0 * h);
        let exact = drift_phi_rho_derivative(m, 1.0, &he3, act, &rule).unwrap();
        assert!((fd - exact).abs() < 1e-6 * (1.0 + exact.abs()), "m={m}: {fd} vs {exact}");
    }
}

#[test]
fn extragradient_creates_drift_at_zero_overlap_for_he3() {
    // plain SGD drift of He3 is cubic in m; the inner step adds a linear term
    let rule = gauss_hermite_rule(60).unwrap();
    let he3 = LinkFunction::parse("He3").unwrap();
    let act = Activation::Softplus { bias: DEFAULT_BIAS };
    let sgd = drift_phi(0.1, 0.0, 1.0, &he3, act, &rule).unwrap();
    let egd = drift_phi(0.1, 0.5, 1.0, &he3, act, &rule).unwrap();
    assert!(sgd.abs() < 0.1 * egd.abs(), "sgd {sgd}, egd {egd}");
}

#[test]
fn drift_monte_carlo_small_run() {
    let d = 200;
    let targets = DirectionSet::standard(1, d).unwrap();
    let mut s = GaussianSampler::new(2, 0);
    let mut w = s.sample_gaussian(d);
    w[0] = 0.0;
    let n = norm(&w);
    w.iter_mut().for_each(|x| *x /= n);
    w[0] = 0.2;
    let n = norm(&w);
    w.iter_mut().for_each(|x| *x /= n);
    let he3 = LinkFunction::parse("He3").unwrap();
    let setup = DriftSetup {
        link: &he3,
        activation: Activation::Softplus { bias: DEFAULT_BIAS },
        rho0: 0.1,
        a0: 1.0,
    };
    let r = drift_consistency_check(&w, setup, &targets, 20_000, &mut s).unwrap();
    assert!(r.all_agree(), "{r:?}");
}
