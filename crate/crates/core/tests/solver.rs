use marginflat::data::{BatchPair, Corpus};
use marginflat::losses::{retain_loss, ForgetLossKind};
use marginflat::model::{LinearLogitModel, ParamSet, Policy, TokenExample};
use marginflat::solver::{
    dual_step, primal_step, replay_lambdas, run_pdu, run_scalarized, Budget, SolverConfig,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn ex(prompt: &[u32], response: &[u32]) -> TokenExample {
    TokenExample::new(prompt.to_vec(), response.to_vec())
}

fn small_corpus() -> Corpus {
    let forget = vec![ex(&[0], &[1, 2]), ex(&[1], &[3]), ex(&[2], &[0, 0])];
    let retain = vec![
        ex(&[3], &[4, 5]),
        ex(&[4], &[5]),
        ex(&[5], &[3, 4]),
        ex(&[3], &[3]),
        ex(&[4], &[4, 1]),
        ex(&[5], &[2]),
    ];
    Corpus::new(forget, retain, 6).unwrap()
}

fn setup() -> (LinearLogitModel, ParamSet<f64>, Corpus) {
    let m = LinearLogitModel::new(6, 8).unwrap();
    let mut p: ParamSet<f64> = m.init_params(&mut ChaCha8Rng::seed_from_u64(3));
    for v in p.get_mut("weight").unwrap().data_mut() {
        *v *= 50.0;
    }
    (m, p, small_corpus())
}

fn config() -> SolverConfig {
    SolverConfig {
        eta_theta: 0.2,
        eta_lambda: 0.7,
        lambda0: 1.5,
        warmup_epochs: 1,
        primal_dual_epochs: 3,
        forget_batch: 2,
        retain_batch: 3,
        seed: 11,
        ..SolverConfig::desk_default()
    }
}

#[test]
fn dual_step_examples() {
    assert_eq!(dual_step(1.0, 2.5, 2.0, 0.5), 1.25);
    assert_eq!(dual_step(0.1, 1.0, 2.0, 0.5), 0.0);
    assert_eq!(dual_step(0.0, 2.0, 2.0, 0.5), 0.0);
}

#[test]
fn hand_computed_primal_step() {
    let m = LinearLogitModel::new(2, 4).unwrap();
    let mut p: ParamSet<f64> = Policy::<f64>::zero_params(&m);
    p.get_mut("weight")
        .unwrap()
        .data_mut()
        .copy_from_slice(&[0.0, 0.0, 1.0, 0.0]);
    let pair = BatchPair {
        forget: vec![ex(&[1], &[0])],
        retain: vec![ex(&[0], &[1])],
    };
    let next = primal_step(&m, &p, 2.0, &pair, 0.1, ForgetLossKind::LogitMargin).unwrap();
    let w = next.get("weight").unwrap().data();
    let b = next.get("bias").unwrap().data();
    let expect_w = [-0.1, 0.1, 0.95, 0.05];
    let expect_b = [-0.15, 0.15];
    for (a, e) in w.iter().zip(expect_w).chain(b.iter().zip(expect_b)) {
        assert!((a - e).abs() < 1e-15, "{a} vs {e}");
    }
    assert!(primal_step(&m, &p, -1.0, &pair, 0.1, ForgetLossKind::LogitMargin).is_err());
}

#[test]
fn no_primal_dual_epochs_keeps_lambda0() {
    let (m, p, c) = setup();
    let cfg = SolverConfig {
        primal_dual_epochs: 0,
        warmup_epochs: 3,
        ..config()
    };
    let out = run_pdu(&m, &p, &c, &cfg).unwrap();
    assert_eq!(out.lambda, 1.5);
    assert!(out.trace.records.iter().all(|r| r.lambda == 1.5));
    assert!(out.trace.records.iter().all(|r| r.dual_signal.is_none()));
}

#[test]
fn frozen_parameters_give_closed_form_multiplier() {
    let (m, p, c) = setup();
    let cfg = SolverConfig {
        eta_theta: 0.0,
        warmup_epochs: 0,
        primal_dual_epochs: 4,
        retain_batch: c.retain().len(),
        ..config()
    };
    let out = run_pdu(&m, &p, &c, &cfg).unwrap();
    assert!(out.params.bit_identical(&p));
    let full = retain_loss(&m, &p, c.retain()).unwrap();
    let gap = full - out.epsilon;
    assert!(gap < 0.0);
    for (k, r) in out.trace.records.iter().enumerate() {
        let closed = (1.5 + (k + 1) as f64 * 0.7 * gap).max(0.0);
        assert!(
            (r.lambda - closed).abs() < 1e-12,
            "step {k}: {} vs {closed}",
            r.lambda
        );
    }
    assert!(out.lambda < 1.5);
}

#[test]
fn frozen_parameters_violated_budget_grows_multiplier() {
    let (m, p, c) = setup();
    let full = retain_loss(&m, &p, c.retain()).unwrap();
    let eps = full - 0.25;
    let cfg = SolverConfig {
        eta_theta: 0.0,
        warmup_epochs: 1,
        primal_dual_epochs: 2,
        retain_batch: c.retain().len(),
        epsilon: Budget::Explicit(eps),
        ..config()
    };
    let out = run_pdu(&m, &p, &c, &cfg).unwrap();
    let per_epoch = out.trace.records.len() / 3;
    let mut k = 0usize;
    for r in &out.trace.records {
        if r.epoch == 1 {
            assert_eq!(r.lambda, 1.5);
            continue;
        }
        k += 1;
        let closed = 1.5 + k as f64 * 0.7 * (full - eps);
        assert!((r.lambda - closed).abs() < 1e-12);
    }
    assert_eq!(k, 2 * per_epoch);
}

#[test]
fn trace_replays_multiplier() {
    let (m, p, c) = setup();
    let out = run_pdu(&m, &p, &c, &config()).unwrap();
    let replayed = replay_lambdas(&out.trace.records, 1.5, 0.7);
    assert_eq!(replayed, out.trace.lambdas());
    assert!(out.trace.records.iter().all(|r| r.lambda >= 0.0));
    assert!(out.trace.records.iter().all(|r| r.epsilon == out.epsilon));
}

#[test]
fn scalarized_matches_fixed_multiplier_run() {
    let (m, p, c) = setup();
    let fixed = SolverConfig {
        scalar_weight: 0.8,
        ..config()
    };
    let pdu = SolverConfig {
        lambda0: 0.8,
        warmup_epochs: fixed.total_epochs(),
        primal_dual_epochs: 0,
        ..config()
    };
    let a = run_scalarized(&m, &p, &c, &fixed).unwrap();
    let b = run_pdu(&m, &p, &c, &pdu).unwrap();
    assert!(a.params.bit_identical(&b.params));
    assert_eq!(a.trace.records.len(), b.trace.records.len());
    assert!(a.trace.records.iter().all(|r| r.lambda == 0.8));
}

#[test]
fn runs_are_bitwise_reproducible() {
    let (m, p, c) = setup();
    let a = run_pdu(&m, &p, &c, &config()).unwrap();
    let b = run_pdu(&m, &p, &c, &config()).unwrap();
    assert!(a.params.bit_identical(&b.params));
    assert_eq!(a.trace.to_csv(), b.trace.to_csv());
    let other = SolverConfig {
        seed: 12,
        ..config()
    };
    let d = run_pdu(&m, &p, &c, &other).unwrap();
    assert!(!a.params.bit_identical(&d.params));
}

#[test]
fn warm_start_begins_at_reference() {
    let (m, p, c) = setup();
    let cfg = SolverConfig {
        warmup_epochs: 1,
        primal_dual_epochs: 0,
        eta_theta: 1e-3,
        ..config()
    };
    let out = run_pdu(&m, &p, &c, &cfg).unwrap();
    assert!(out.trace.records[0].retain_loss.is_finite());
    assert!(out.params.max_abs_diff(&p) < 0.05);
    assert!(!out.params.bit_identical(&p));
}

#[test]
fn divergence_is_reported_with_partial_trace() {
    let (m, p, c) = setup();
    let cfg = SolverConfig {
        eta_theta: 1e300,
        forget_loss: ForgetLossKind::NegativeCe,
        ..config()
    };
    let err = run_pdu(&m, &p, &c, &cfg).unwrap_err();
    let msg = err.to_string();
    assert!(
        msg.contains("diverg") || msg.contains("non-finite"),
        "{msg}"
    );
}

#[test]
fn vocabulary_mismatch_rejected() {
    let (_, _, c) = setup();
    let m = LinearLogitModel::new(7, 8).unwrap();
    let p: ParamSet<f64> = Policy::<f64>::zero_params(&m);
    assert!(run_pdu(&m, &p, &c, &config()).is_err());
}

#[test]
fn epsilon_derived_once_from_reference() {
    let (m, p, c) = setup();
    let out = run_pdu(&m, &p, &c, &config()).unwrap();
    let base = retain_loss(&m, &p, c.retain()).unwrap();
    assert!((out.epsilon - 1.05 * base).abs() < 1e-12);
    let explicit = SolverConfig {
        epsilon: Budget::Explicit(2.0),
        ..config()
    };
    assert_eq!(run_pdu(&m, &p, &c, &explicit).unwrap().epsilon, 2.0);
}
