use marginflat::losses::{evaluate_batch, ForgetLossKind, Objective};
use marginflat::model::{BlockKind, ModelConfig, ParamSet, Policy, TinyLm, TokenExample};
use marginflat::tensor::{grad_check, Axis, DenseArray, Graph, NodeId, Nonlinearity};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const STEP: f64 = 1e-5;
const TOLERANCE: f64 = 1e-6;

fn random_array(rng: &mut ChaCha8Rng, shape: &[usize]) -> DenseArray<f64> {
    let n = shape.iter().product();
    DenseArray::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(-1.5..1.5)).collect(),
    )
    .unwrap()
}

/// Checks d(sum of the weighted output)/dx for a graph with one free leaf `x`
/// and fixed leaves bound from `others`.
fn check_op(
    x_shape: &[usize],
    others: Vec<(&'static str, DenseArray<f64>)>,
    build: impl Fn(&mut Graph<f64>) -> NodeId,
    seed: u64,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let point = random_array(&mut rng, x_shape);
    let probe = {
        let mut g = Graph::new();
        let out = build(&mut g);
        let mut bindings: Vec<(&str, DenseArray<f64>)> = others.clone();
        bindings.push(("x", point.clone()));
        g.forward(bindings.as_slice(), out)
            .unwrap()
            .shape()
            .to_vec()
    };
    let weights = random_array(&mut rng, &probe);
    let f = |x: &DenseArray<f64>| {
        let mut g = Graph::new();
        let out = build(&mut g);
        let w = g.constant(weights.clone());
        let root = if probe.is_empty() {
            g.scale(out, weights.item())
        } else {
            let prod = weighted(&mut g, out, w);
            g.sum(prod, Axis::All)
        };
        let mut bindings: Vec<(&str, DenseArray<f64>)> = others.clone();
        bindings.push(("x", x.clone()));
        let v = g.forward(bindings.as_slice(), root)?;
        let mut grads = g.backward(root, &["x"])?;
        Ok((v.item(), grads.remove("x").unwrap()))
    };
    let report = grad_check(f, &point, STEP).unwrap();
    assert!(report.max_relative_error <= TOLERANCE, "{report:?}");
}

/// Elementwise product expressed with the available ops:
/// `((a + w)^2 - (a - w)^2) / 4`.
fn weighted(g: &mut Graph<f64>, a: NodeId, w: NodeId) -> NodeId {
    let p = g.add(a, w);
    let m = g.sub(a, w);
    let p2 = g.square(p);
    let m2 = g.square(m);
    let d = g.sub(p2, m2);
    g.scale(d, 0.25)
}

#[test]
fn matmul_both_sides() {
    let b = random_array(&mut ChaCha8Rng::seed_from_u64(1), &[4, 2]);
    check_op(
        &[3, 4],
        vec![("b", b)],
        |g| {
            let x = g.leaf("x");
            let b = g.leaf("b");
            g.matmul(x, b)
        },
        2,
    );
    let a = random_array(&mut ChaCha8Rng::seed_from_u64(3), &[3, 4]);
    check_op(
        &[4, 2],
        vec![("a", a)],
        |g| {
            let a = g.leaf("a");
            let x = g.leaf("x");
            g.matmul(a, x)
        },
        4,
    );
}

#[test]
fn transpose_scale_add_sub() {
    check_op(
        &[3, 2],
        vec![],
        |g| {
            let x = g.leaf("x");
            let t = g.transpose(x);
            g.scale(t, -1.7)
        },
        5,
    );
    let c = random_array(&mut ChaCha8Rng::seed_from_u64(6), &[2, 3]);
    check_op(
        &[2, 3],
        vec![("c", c)],
        |g| {
            let x = g.leaf("x");
            let c = g.leaf("c");
            let s = g.add(x, c);
            g.sub(c, s)
        },
        7,
    );
}

#[test]
fn add_row_both_operands() {
    let bias = random_array(&mut ChaCha8Rng::seed_from_u64(8), &[3]);
    check_op(
        &[4, 3],
        vec![("b", bias)],
        |g| {
            let x = g.leaf("x");
            let b = g.leaf("b");
            g.add_row(x, b)
        },
        9,
    );
    let m = random_array(&mut ChaCha8Rng::seed_from_u64(10), &[4, 3]);
    check_op(
        &[3],
        vec![("m", m)],
        |g| {
            let m = g.leaf("m");
            let x = g.leaf("x");
            g.add_row(m, x)
        },
        11,
    );
}

#[test]
fn embed_lookup_with_repeats() {
    check_op(
        &[5, 3],
        vec![],
        |g| {
            let x = g.leaf("x");
            g.embed(x, vec![4, 0, 4, 2])
        },
        12,
    );
}

#[test]
fn elementwise_nonlinearities() {
    for (i, f) in [Nonlinearity::Tanh, Nonlinearity::Exp]
        .into_iter()
        .enumerate()
    {
        check_op(
            &[3, 3],
            vec![],
            move |g| {
                let x = g.leaf("x");
                g.unary(x, f)
            },
            13 + i as u64,
        );
    }
    // log needs a positive argument.
    check_op(
        &[2, 3],
        vec![],
        |g| {
            let x = g.leaf("x");
            let e = g.unary(x, Nonlinearity::Exp);
            let one = g.constant(DenseArray::filled(&[2, 3], 1.0));
            let s = g.add(e, one);
            g.unary(s, Nonlinearity::Log)
        },
        15,
    );
    check_op(
        &[4],
        vec![],
        |g| {
            let x = g.leaf("x");
            g.square(x)
        },
        16,
    );
}

#[test]
fn reductions() {
    for axis in [Axis::All, Axis::Rows] {
        check_op(
            &[3, 4],
            vec![],
            move |g| {
                let x = g.leaf("x");
                g.mean(x, axis)
            },
            17,
        );
        check_op(
            &[3, 4],
            vec![],
            move |g| {
                let x = g.leaf("x");
                g.sum(x, axis)
            },
            18,
        );
        check_op(
            &[3, 4],
            vec![],
            move |g| {
                let x = g.leaf("x");
                g.max(x, axis)
            },
            19,
        );
    }
}

#[test]
fn gather_concat_logsumexp() {
    check_op(
        &[3, 5],
        vec![],
        |g| {
            let x = g.leaf("x");
            g.gather(x, vec![4, 0, 2])
        },
        20,
    );
    let c = random_array(&mut ChaCha8Rng::seed_from_u64(21), &[1, 3]);
    check_op(
        &[2, 3],
        vec![("c", c)],
        |g| {
            let c = g.leaf("c");
            let x = g.leaf("x");
            g.concat(vec![c, x, x])
        },
        22,
    );
    check_op(
        &[3, 6],
        vec![],
        |g| {
            let x = g.leaf("x");
            g.logsumexp(x)
        },
        23,
    );
}

#[test]
fn causal_softmax() {
    check_op(
        &[4, 4],
        vec![],
        |g| {
            let x = g.leaf("x");
            g.causal_softmax(x)
        },
        24,
    );
}

fn small_lm(block: BlockKind) -> TinyLm {
    TinyLm::new(ModelConfig {
        vocab_size: 8,
        embed_dim: 4,
        context_window: 6,
        block,
        hidden_dim: 8,
    })
    .unwrap()
}

fn random_params(model: &TinyLm, rng: &mut ChaCha8Rng) -> ParamSet<f64> {
    let base: ParamSet<f64> = model.zero_params();
    let normal = Normal::new(0.0, 0.6).unwrap();
    let flat: Vec<f64> = (0..base.num_scalars())
        .map(|_| normal.sample(rng))
        .collect();
    base.with_flat(&flat).unwrap()
}

fn random_batch(rng: &mut ChaCha8Rng) -> Vec<TokenExample> {
    (0..2)
        .map(|_| {
            let p = rng.random_range(1..=2);
            let r = rng.random_range(1..=3);
            TokenExample::new(
                (0..p).map(|_| rng.random_range(0..8)).collect(),
                (0..r).map(|_| rng.random_range(0..8)).collect(),
            )
        })
        .collect()
}

/// Smallest gap between the top two logits over every row of the batch.
fn min_top_gap(model: &TinyLm, params: &ParamSet<f64>, batch: &[TokenExample]) -> f64 {
    let out = evaluate_batch(model, params, batch, Objective::retain(), false).unwrap();
    out.logits
        .iter()
        .flat_map(|z| (0..z.rows()).map(move |t| z.row(t).to_vec()))
        .map(|mut row| {
            row.sort_by(|a, b| b.total_cmp(a));
            row[0] - row[1]
        })
        .fold(f64::INFINITY, f64::min)
}

fn check_objective(objective: Objective, block: BlockKind, points: usize, seed: u64) {
    let model = small_lm(block);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut checked = 0;
    while checked < points {
        let params = random_params(&model, &mut rng);
        let batch = random_batch(&mut rng);
        if matches!(objective, Objective::Forget(ForgetLossKind::LogitMargin, _))
            && min_top_gap(&model, &params, &batch) < 1e-3
        {
            continue;
        }
        let f = |flat: &DenseArray<f64>| {
            let p = params.with_flat(flat.data())?;
            let out = evaluate_batch(&model, &p, &batch, objective, true)?;
            let g = DenseArray::vector(out.grad.unwrap().to_flat())?;
            Ok((out.value, g))
        };
        let point = DenseArray::vector(params.to_flat()).unwrap();
        let report = grad_check(f, &point, STEP).unwrap();
        assert!(
            report.max_relative_error <= TOLERANCE,
            "{objective:?} point {checked}: {} at {}",
            report.max_relative_error,
            report.worst_index
        );
        checked += 1;
    }
}

#[test]
fn retain_cross_entropy_gradient() {
    check_objective(
        Objective::retain(),
        BlockKind::SingleAttentionPlusMlp,
        10,
        30,
    );
}

#[test]
fn forget_loss_gradients() {
    for (i, kind) in [
        ForgetLossKind::NegativeCe,
        ForgetLossKind::UniformCe,
        ForgetLossKind::LogitMargin,
    ]
    .into_iter()
    .enumerate()
    {
        check_objective(
            Objective::forget(kind),
            BlockKind::SingleAttentionPlusMlp,
            10,
            31 + i as u64,
        );
    }
}

#[test]
fn mlp_only_block_gradient() {
    check_objective(
        Objective::forget(ForgetLossKind::LogitMargin),
        BlockKind::MlpOnly,
        5,
        40,
    );
    check_objective(Objective::retain(), BlockKind::MlpOnly, 5, 41);
}
