use super::*;
use crate::nn::{Network, NetworkConfig};
use crate::prox::{hard_threshold, tl1_threshold_level};
use crate::{Dataset, Example};

fn config(penalty: Penalty, lambda: f64, beta: f64) -> RvsmConfig {
    RvsmConfig {
        penalty: PenaltySpec::new(penalty, lambda).unwrap(),
        beta,
        ..RvsmConfig::default()
    }
}

fn t(v: &[f64]) -> Tensor {
    Tensor::from_slice(v).unwrap()
}

#[test]
fn u_step_examples() {
    let c = config(Penalty::L0, 0.0005, 0.1);
    assert!((c.gamma().unwrap() - 0.005).abs() < 1e-18);
    let u = u_step(&c, &t(&[0.05, 0.2, -0.1, -0.11])).unwrap();
    assert_eq!(u.data(), &[0.0, 0.2, 0.0, -0.11]);

    let w = t(&[0.3, -1e-7, 0.0, 4.0]);
    for p in [Penalty::L0, Penalty::L1, Penalty::Tl1 { a: 1.0 }] {
        assert_eq!(u_step(&config(p, 0.0, 0.1), &w).unwrap(), w);
    }

    let c = config(Penalty::Tl1 { a: 1.0 }, 0.0005, 0.1);
    assert!((tl1_threshold_level(1.0, c.gamma().unwrap()).unwrap() - 0.01).abs() < 1e-15);
    assert_eq!(u_step(&c, &t(&[0.005])).unwrap().data(), &[0.0]);
}

#[test]
fn w_step_examples() {
    let c = config(Penalty::L0, 0.0005, 0.1);
    let w = t(&[0.4, -0.2]);
    assert_eq!(w_step(&c, &w, &w, &t(&[0.0, 0.0])).unwrap(), w);

    let c = RvsmConfig { eta: 0.1, ..config(Penalty::L0, 0.0005, 0.1) };
    let next = w_step(&c, &t(&[1.0]), &t(&[0.0]), &t(&[0.0])).unwrap();
    assert!((next.data()[0] - 0.99).abs() < 1e-15);

    let c = RvsmConfig { normalize_w: true, ..c };
    let next = w_step(&c, &t(&[3.0, -4.0, 1.0]), &t(&[0.0, 0.0, 1.0]), &t(&[0.5, 0.1, 0.0])).unwrap();
    assert!((next.norm_l2() - 1.0).abs() < 1e-15);
    assert!(matches!(
        w_step(&c, &t(&[0.0]), &t(&[0.0]), &t(&[0.0])),
        Err(Error::DegenerateNormalization(_))
    ));
    assert!(w_step(&c, &t(&[0.0]), &t(&[0.0, 1.0]), &t(&[0.0])).is_err());
}

#[test]
fn lagrangian_examples() {
    let mut u = LayerTensors::new();
    let mut w = LayerTensors::new();
    u.insert("dense".into(), t(&[1.0, 0.0]));
    w.insert("dense".into(), t(&[1.0, 1.0]));
    let c = config(Penalty::L0, 1.0, 2.0);
    assert_eq!(lagrangian_value(&c, 1.0, &u, &w).unwrap(), 3.0);

    let c0 = config(Penalty::L1, 0.0, 2.0);
    assert_eq!(lagrangian_value(&c0, 0.7, &w, &w).unwrap(), 0.7);

    let mut missing = LayerTensors::new();
    missing.insert("other".into(), t(&[1.0, 1.0]));
    assert!(lagrangian_value(&c, 1.0, &u, &missing).is_err());
}

fn toy_model(d: usize, seed: u64) -> LinearRegression {
    use rand::Rng;
    let mut rng = crate::seed::rng(seed);
    LinearRegression::new(t(&(0..d).map(|_| rng.random_range(-0.1..0.1)).collect::<Vec<_>>()))
}

fn full_batch(epochs: usize, n: usize) -> RvsmConfig {
    RvsmConfig {
        eta: 0.01,
        epochs,
        batch_size: n,
        ..config(Penalty::L0, 0.01, 0.1)
    }
}

/// Scalar-loop implementation of the splitting iteration for a two-weight
/// least-squares problem, written independently of the library path.
fn reference_iterates(samples: &[Regression], w0: [f64; 2], lambda: f64, beta: f64, eta: f64, steps: usize) -> Vec<[f64; 2]> {
    let gamma = lambda / beta;
    let level = (2.0 * gamma).sqrt();
    let n = samples.len() as f64;
    let mut w = w0;
    let mut out = Vec::with_capacity(steps);
    for _ in 0..steps {
        let u = [
            if w[0].abs() <= level { 0.0 } else { w[0] },
            if w[1].abs() <= level { 0.0 } else { w[1] },
        ];
        let mut g = [0.0; 2];
        for s in samples {
            let r = s.features[0] * w[0] + s.features[1] * w[1] - s.target;
            g[0] += r * s.features[0];
            g[1] += r * s.features[1];
        }
        for i in 0..2 {
            w[i] = w[i] - eta * (g[i] / n) - eta * beta * (w[i] - u[i]);
        }
        out.push(w);
    }
    out
}

#[test]
fn full_batch_iterates_match_reference_loop() {
    let samples: Vec<Regression> = (0..20)
        .map(|i| {
            let x0 = (i as f64 * 0.37).sin() * 2.0;
            let x1 = (i as f64 * 0.91).cos();
            Regression {
                features: vec![x0, x1],
                target: 1.2 * x0 + 0.2 * x1,
            }
        })
        .collect();
    let w0 = [0.05, -0.3];
    let (lambda, beta, eta) = (0.01, 0.1, 0.05);
    let expected = reference_iterates(&samples, w0, lambda, beta, eta, 100);

    let mut model = LinearRegression::new(t(&w0));
    let cfg = RvsmConfig {
        eta,
        epochs: 1,
        batch_size: samples.len(),
        ..config(Penalty::L0, lambda, beta)
    };
    for (step, want) in expected.iter().enumerate() {
        rvsm_train(&mut model, &samples, None, &cfg, |_| {}).unwrap();
        let got = model.weights().data();
        for i in 0..2 {
            assert!((got[i] - want[i]).abs() <= 1e-12, "step {step}: {got:?} vs {want:?}");
        }
    }
    // The weight on the weak feature is eventually thresholded away in u.
    let w = model.weights().data()[1];
    assert_eq!(hard_threshold(lambda / beta, w).unwrap(), 0.0);
}

#[test]
fn lagrangian_descends_on_full_batch_toy() {
    let (samples, _) = synthetic_regression(200, 10, 2.0, 3);
    for penalty in [Penalty::L0, Penalty::L1, Penalty::Tl1 { a: 1.0 }] {
        let mut model = toy_model(10, 4);
        let cfg = RvsmConfig {
            penalty: PenaltySpec::new(penalty, 0.01).unwrap(),
            ..full_batch(500, 200)
        };
        let out = rvsm_train(&mut model, &samples, None, &cfg, |_| {}).unwrap();
        let trace = &out.state.lagrangian_trace;
        assert_eq!(trace.len(), 500);
        for pair in trace.windows(2) {
            assert!(pair[1].1 <= pair[0].1 + 1e-8, "{penalty:?}: {:?} -> {:?}", pair[0], pair[1]);
        }
        let last_step = out.state.step_trace.last().unwrap().1;
        assert!(last_step < 1e-6, "{penalty:?}: last step {last_step}");
        let report = equilibrium_residuals(&cfg, &model, &out.state, &samples).unwrap();
        assert!(report.grad_residual <= 1e-4, "{penalty:?}: {report:?}");
    }
}

#[test]
fn converged_run_reaches_fixed_point() {
    let (samples, _) = synthetic_regression(200, 10, 2.0, 3);
    let mut model = toy_model(10, 4);
    let cfg = full_batch(3000, 200);
    let out = rvsm_train(&mut model, &samples, None, &cfg, |_| {}).unwrap();
    let report = equilibrium_residuals(&cfg, &model, &out.state, &samples).unwrap();
    assert!(report.grad_residual <= 1e-6, "{report:?}");
}

#[test]
fn equilibrium_controls() {
    let (samples, _) = synthetic_regression(200, 10, 2.0, 5);
    let cfg = full_batch(1, 200);
    let mut model = toy_model(10, 6);
    let out = rvsm_train(&mut model, &samples, None, &cfg, |_| {}).unwrap();

    // Right after a u-step, u is exactly T(w).
    let mut fresh = out.state.clone();
    let w = model.params().require("dense.weight").unwrap();
    fresh.u.insert("dense".into(), u_step(&cfg, w).unwrap());
    let report = equilibrium_residuals(&cfg, &model, &fresh, &samples).unwrap();
    assert_eq!(report.u_residual, 0.0);

    // An untrained state is far from equilibrium.
    let report = equilibrium_residuals(&cfg, &model, &out.state, &samples).unwrap();
    assert!(report.grad_residual > 1e-2, "{report:?}");

    assert!(matches!(
        equilibrium_residuals(&cfg, &model, &out.state, &[]),
        Err(Error::InvalidInput(_))
    ));
}

#[test]
fn u_matches_threshold_of_pre_step_weights() {
    let (samples, _) = synthetic_regression(64, 6, 1.0, 8);
    let mut model = toy_model(6, 9);
    let cfg = RvsmConfig { batch_size: 16, epochs: 1, ..full_batch(1, 16) };
    let mut prev_w = model.weights().clone();
    for _ in 0..5 {
        let out = rvsm_train(&mut model, &samples[..16], None, &RvsmConfig { batch_size: 16, ..cfg.clone() }, |_| {}).unwrap();
        // one iteration: u == T(w before the step), bitwise
        assert_eq!(out.state.u["dense"], u_step(&cfg, &prev_w).unwrap());
        prev_w = model.weights().clone();
    }
}

fn tiny_images(n: usize, size: usize) -> Dataset {
    let examples = (0..n)
        .map(|i| {
            let label = i % 2;
            let data: Vec<f64> = (0..size * size)
                .map(|p| {
                    let (y, x) = (p / size, p % size);
                    if label == 0 { ((x + i) % 3 == 0) as u8 as f64 } else { ((y + x + i) % 2 == 0) as u8 as f64 }
                })
                .collect();
            Example {
                image: Tensor::new(vec![1, size, size], data).unwrap(),
                label,
            }
        })
        .collect();
    Dataset::new(examples).unwrap()
}

fn tiny_net(seed: u64) -> Network {
    Network::new(
        NetworkConfig {
            input_size: 8,
            filters: 2,
            hidden: 16,
            ..NetworkConfig::default()
        },
        seed,
    )
    .unwrap()
}

#[test]
fn zero_lambda_reduces_to_sgd_bitwise() {
    let data = tiny_images(24, 8);
    let cfg = RvsmConfig {
        eta: 0.05,
        epochs: 3,
        batch_size: 5,
        seed: 17,
        ..config(Penalty::L0, 0.0, 0.1)
    };
    let mut a = tiny_net(1);
    let mut b = a.clone();
    let mut c = a.clone();
    rvsm_train(&mut a, data.examples(), None, &cfg, |_| {}).unwrap();
    sgd_train(&mut b, data.examples(), None, &cfg, |_| {}).unwrap();
    let tl1 = RvsmConfig { penalty: PenaltySpec::new(Penalty::Tl1 { a: 0.5 }, 0.0).unwrap(), ..cfg.clone() };
    penalized_sgd_train(&mut c, data.examples(), None, &tl1, |_| {}).unwrap();
    for ((name, x), (_, y)) in a.params().iter().zip(b.params().iter()) {
        assert!(x.data().iter().zip(y.data()).all(|(p, q)| p.to_bits() == q.to_bits()), "{name}");
    }
    assert_eq!(b.params(), c.params());
}

#[test]
fn training_is_deterministic() {
    let data = tiny_images(20, 8);
    let cfg = RvsmConfig { eta: 0.05, epochs: 2, batch_size: 4, seed: 3, ..RvsmConfig::default() };
    let mut a = tiny_net(2);
    let mut b = tiny_net(2);
    let oa = rvsm_train(&mut a, data.examples(), Some(data.examples()), &cfg, |_| {}).unwrap();
    let ob = rvsm_train(&mut b, data.examples(), Some(data.examples()), &cfg, |_| {}).unwrap();
    assert_eq!(a, b);
    assert_eq!(oa.state, ob.state);
    assert_eq!(oa.state.loss_trace.len(), 2);
    assert!(oa.state.loss_trace[0].accuracy.is_some());
}

#[test]
fn penalized_sgd_rejects_l0_and_validates_layers() {
    let data = tiny_images(4, 8);
    let mut net = tiny_net(0);
    let cfg = RvsmConfig::default();
    assert!(matches!(
        penalized_sgd_train(&mut net, data.examples(), None, &cfg, |_| {}),
        Err(Error::UnsupportedPenalty(_))
    ));
    let bad = RvsmConfig { thresholded_layers: vec!["pool1".into()], ..cfg };
    assert!(matches!(
        rvsm_train(&mut net, data.examples(), None, &bad, |_| {}),
        Err(Error::InvalidParameter(_))
    ));
    assert!(rvsm_train(&mut net, &[], None, &RvsmConfig::default(), |_| {}).is_err());
}

#[test]
fn divergence_names_the_iteration() {
    let (samples, _) = synthetic_regression(50, 4, 3.0, 1);
    let mut model = toy_model(4, 1);
    let cfg = RvsmConfig { eta: 10.0, ..full_batch(2000, 50) };
    match rvsm_train(&mut model, &samples, None, &cfg, |_| {}) {
        Err(Error::Divergence { iteration, .. }) => assert!(iteration > 0),
        other => panic!("expected divergence, got {:?}", other.map(|o| o.state.iteration)),
    }
}

#[test]
fn penalized_sgd_drives_small_weights_near_but_not_to_zero() {
    let (samples, _) = synthetic_regression(200, 10, 2.0, 12);
    let mut model = toy_model(10, 13);
    let cfg = RvsmConfig {
        penalty: PenaltySpec::new(Penalty::Tl1 { a: 0.01 }, 0.01).unwrap(),
        ..full_batch(300, 200)
    };
    penalized_sgd_train(&mut model, &samples, None, &cfg, |_| {}).unwrap();
    let w = model.weights();
    assert_eq!(crate::metrics::sparsity(w).unwrap(), 0.0);

    let mut split = toy_model(10, 13);
    let out = rvsm_train(&mut split, &samples, None, &cfg, |_| {}).unwrap();
    assert!(crate::metrics::sparsity(&out.state.u["dense"]).unwrap() > 0.0);
}
