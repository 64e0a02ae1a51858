use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck::{grad_check, GradCheckOptions};
use super::*;
use crate::error::{Result, VgaError};

fn t(rows: &[&[f64]]) -> Tensor {
    Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(
        shape.to_vec(),
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect(),
    )
    .unwrap()
}

/// Store holding `inputs` as parameters named `x0, x1, ...`.
fn store_of(inputs: Vec<Tensor>) -> ParamStore {
    let mut store = ParamStore::new();
    for (i, x) in inputs.into_iter().enumerate() {
        store.add(format!("x{i}"), x).unwrap();
    }
    store
}

fn inputs(tape: &mut Tape, store: &ParamStore) -> Vec<Var> {
    store
        .iter()
        .map(|(id, _)| id)
        .collect::<Vec<_>>()
        .into_iter()
        .map(|id| tape.param(store, id))
        .collect()
}

/// `sum(out ⊙ R)` for a fixed random `R`, so every output entry carries a distinct weight.
fn weighted_sum(tape: &mut Tape, out: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = random(tape.value(out).shape(), &mut rng);
    let r = tape.constant(r);
    let p = tape.mul(out, r)?;
    Ok(tape.sum(p))
}

fn check_op<F>(shapes: &[&[usize]], tol: f64, seed: u64, op: F)
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = store_of(shapes.iter().map(|s| random(s, &mut rng)).collect());
    let report = grad_check(
        &mut store,
        |tape, store| {
            let xs = inputs(tape, store);
            let out = op(tape, &xs)?;
            weighted_sum(tape, out, seed + 1)
        },
        &GradCheckOptions::with_tolerance(tol),
    )
    .unwrap();
    assert!(report.passed(), "{report}");
}

fn eval1(x: Tensor, f: impl FnOnce(&mut Tape, Var) -> Var) -> Tensor {
    let mut tape = Tape::new();
    let v = tape.constant(x);
    let out = f(&mut tape, v);
    tape.value(out).clone()
}

#[test]
fn matmul_examples() {
    let mut tape = Tape::new();
    let i = tape.constant(Tensor::identity(2));
    let a = tape.constant(t(&[&[1.0, 2.0], &[3.0, 4.0]]));
    let p = tape.matmul(i, a).unwrap();
    assert_eq!(tape.value(p), &t(&[&[1.0, 2.0], &[3.0, 4.0]]));

    let r = tape.constant(t(&[&[1.0, 2.0]]));
    let c = tape.constant(t(&[&[3.0], &[4.0]]));
    let p = tape.matmul(r, c).unwrap();
    assert_eq!(tape.value(p).data(), &[11.0]);
}

#[test]
fn matmul_shape_error_names_both_shapes() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::zeros(&[2, 3]));
    let b = tape.constant(Tensor::zeros(&[2, 3]));
    let err = tape.matmul(a, b).unwrap_err();
    assert!(matches!(err, VgaError::Dimension(_)));
    let msg = err.to_string();
    assert_eq!(msg.matches("[2, 3]").count(), 2, "{msg}");
}

#[test]
fn matmul_gradcheck() {
    check_op(&[&[3, 4], &[4, 2]], 1e-6, 1, |tape, x| {
        tape.matmul(x[0], x[1])
    });
    check_op(&[&[3, 4], &[2, 4]], 1e-6, 2, |tape, x| {
        tape.matmul_bt(x[0], x[1])
    });
    check_op(&[&[3, 4]], 1e-6, 3, |tape, x| tape.transpose(x[0]));
}

#[test]
fn affine_examples() {
    let mut tape = Tape::new();
    let x = tape.constant(t(&[&[0.3, -2.0], &[5.0, 1.0]]));
    let w = tape.constant(Tensor::zeros(&[2, 2]));
    let b = tape.constant(Tensor::vector(vec![1.0, 2.0]));
    let y = tape.affine(x, w, b).unwrap();
    assert_eq!(tape.value(y), &t(&[&[1.0, 2.0], &[1.0, 2.0]]));

    let x = tape.constant(t(&[&[1.0, 1.0]]));
    let w = tape.constant(Tensor::identity(2));
    let b = tape.constant(Tensor::vector(vec![0.0, 0.0]));
    let y = tape.affine(x, w, b).unwrap();
    assert_eq!(tape.value(y), &t(&[&[1.0, 1.0]]));

    let bad = tape.constant(Tensor::vector(vec![0.0; 3]));
    assert!(matches!(
        tape.affine(x, w, bad),
        Err(VgaError::Dimension(_))
    ));
}

#[test]
fn affine_gradcheck() {
    check_op(&[&[2, 3], &[3, 2], &[2]], 1e-6, 4, |tape, x| {
        tape.affine(x[0], x[1], x[2])
    });
}

#[test]
fn leaky_relu_examples() {
    let y = eval1(Tensor::vector(vec![5.0, -1.0, 0.0]), |tape, x| {
        tape.leaky_relu(x, 0.01)
    });
    assert_eq!(y.data(), &[5.0, -0.01, 0.0]);

    // derivative at the kink comes from the positive branch
    let mut store = store_of(vec![Tensor::vector(vec![0.0])]);
    let mut tape = Tape::new();
    let x = inputs(&mut tape, &store)[0];
    let y = tape.leaky_relu(x, 0.01);
    let s = tape.sum(y);
    tape.backward(s, &mut store).unwrap();
    assert_eq!(store.grad(ParamId(0)).data(), &[1.0]);
}

#[test]
fn sigmoid_examples() {
    let y = eval1(Tensor::vector(vec![0.0, 50.0, -800.0]), |tape, x| {
        tape.sigmoid(x)
    });
    assert_eq!(y.data()[0], 0.5);
    assert!((y.data()[1] - 1.0).abs() < 1e-12);
    assert!(y.data()[2] >= 0.0 && y.data()[2] < 1e-300);
    assert!(y.is_finite());

    let mut store = store_of(vec![Tensor::vector(vec![0.0])]);
    let mut tape = Tape::new();
    let x = inputs(&mut tape, &store)[0];
    let y = tape.sigmoid(x);
    let s = tape.sum(y);
    tape.backward(s, &mut store).unwrap();
    assert_eq!(store.grad(ParamId(0)).data(), &[0.25]);
}

#[test]
fn unary_gradchecks() {
    // sampled values stay away from the LeakyReLU kink
    let mut store = store_of(vec![Tensor::new(
        vec![2, 3],
        vec![-1.3, 0.4, 2.2, -0.2, 0.9, -3.0],
    )
    .unwrap()]);
    let report = grad_check(
        &mut store,
        |tape, store| {
            let x = inputs(tape, store)[0];
            let y = tape.leaky_relu(x, 0.01);
            weighted_sum(tape, y, 9)
        },
        &GradCheckOptions::with_tolerance(1e-6),
    )
    .unwrap();
    assert!(report.passed(), "{report}");
    check_op(&[&[2, 3]], 1e-6, 5, |tape, x| Ok(tape.sigmoid(x[0])));
    check_op(&[&[3, 4]], 1e-6, 6, |tape, x| tape.softmax_rows(x[0]));
}

#[test]
fn softmax_examples() {
    let y = eval1(t(&[&[1.0, 1.0], &[7.0, 7.0]]), |tape, x| {
        tape.softmax_rows(x).unwrap()
    });
    assert_eq!(y, t(&[&[0.5, 0.5], &[0.5, 0.5]]));

    let y = eval1(t(&[&[0.0, 3f64.ln()]]), |tape, x| {
        tape.softmax_rows(x).unwrap()
    });
    assert!((y.data()[0] - 0.25).abs() < 1e-15);
    assert!((y.data()[1] - 0.75).abs() < 1e-15);

    let y = eval1(t(&[&[1e4, 0.0]]), |tape, x| tape.softmax_rows(x).unwrap());
    assert_eq!(y.data(), &[1.0, 0.0]);
}

#[test]
fn concat_and_slice() {
    let mut tape = Tape::new();
    let a = tape.constant(t(&[&[1.0]]));
    let b = tape.constant(t(&[&[2.0]]));
    let c = tape.concat_cols(a, b).unwrap();
    assert_eq!(tape.value(c), &t(&[&[1.0, 2.0]]));

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let x = tape.constant(random(&[3, 2], &mut rng));
    let y = tape.constant(random(&[3, 4], &mut rng));
    let xy = tape.concat_cols(x, y).unwrap();
    let x2 = tape.slice_cols(xy, 0, 2).unwrap();
    let y2 = tape.slice_cols(xy, 2, 6).unwrap();
    assert_eq!(tape.value(x2), tape.value(x));
    assert_eq!(tape.value(y2), tape.value(y));

    let z = tape.constant(Tensor::zeros(&[2, 2]));
    assert!(matches!(
        tape.concat_cols(x, z),
        Err(VgaError::Dimension(_))
    ));
}

#[test]
fn concat_gradcheck() {
    check_op(&[&[3, 2], &[3, 4]], 1e-6, 11, |tape, x| {
        tape.concat_cols(x[0], x[1])
    });
    check_op(&[&[3, 5]], 1e-6, 12, |tape, x| tape.slice_cols(x[0], 1, 4));
}

#[test]
fn mean_rows_examples() {
    let y = eval1(t(&[&[1.0, 3.0], &[3.0, 5.0]]), |tape, x| {
        tape.mean_rows(x).unwrap()
    });
    assert_eq!(y, Tensor::vector(vec![2.0, 4.0]));
    let y = eval1(t(&[&[1.5, -2.0, 7.0]]), |tape, x| {
        tape.mean_rows(x).unwrap()
    });
    assert_eq!(y.data(), &[1.5, -2.0, 7.0]);
    check_op(&[&[4, 3]], 1e-6, 13, |tape, x| tape.mean_rows(x[0]));
}

#[test]
fn mean_rows_rejects_non_matrix() {
    let mut tape = Tape::new();
    let v = tape.constant(Tensor::vector(vec![1.0]));
    assert!(tape.mean_rows(v).is_err());
}

#[test]
fn broadcast_and_misc_gradchecks() {
    check_op(&[&[3, 4]], 1e-6, 14, |tape, x| {
        tape.broadcast_row(x[0], 0, 5)
    });
    check_op(&[&[2, 3], &[2, 3]], 1e-6, 15, |tape, x| {
        tape.mul(x[0], x[1])
    });
    check_op(&[&[2, 3], &[2, 3]], 1e-6, 16, |tape, x| {
        tape.sub(x[0], x[1])
    });
    check_op(&[&[2, 3], &[1, 1]], 1e-6, 17, |tape, x| {
        tape.scale_by(x[0], x[1])
    });
    check_op(&[&[1, 6], &[1, 6]], 1e-6, 18, |tape, x| {
        tape.cosine(x[0], x[1])
    });
    check_op(&[&[1, 6], &[1, 6]], 1e-6, 19, |tape, x| {
        tape.distance(x[0], x[1])
    });
    check_op(&[&[2, 6]], 1e-6, 20, |tape, x| tape.reshape(x[0], &[3, 4]));
}

#[test]
fn clamp_log_gradcheck() {
    let mut store = store_of(vec![Tensor::vector(vec![0.2, 0.5, 0.9])]);
    let report = grad_check(
        &mut store,
        |tape, store| {
            let x = inputs(tape, store)[0];
            let y = tape.clamp_log(x, 1e-7);
            weighted_sum(tape, y, 21)
        },
        &GradCheckOptions::with_tolerance(1e-6),
    )
    .unwrap();
    assert!(report.passed(), "{report}");
    let y = eval1(Tensor::vector(vec![0.0, 1.0]), |tape, x| {
        tape.clamp_log(x, 1e-7)
    });
    assert!(y.is_finite());
    assert!((y.data()[0] - 1e-7f64.ln()).abs() < 1e-12);
}

fn kernel_bank(rng: &mut ChaCha8Rng, k: usize, c: usize, zero_sum: bool) -> Tensor {
    let mut ker = random(&[k, 5, 5, c], rng);
    if zero_sum {
        let per = 25 * c;
        for kk in 0..k {
            let block = &mut ker.data_mut()[kk * per..(kk + 1) * per];
            let mean = block.iter().sum::<f64>() / per as f64;
            block.iter_mut().for_each(|v| *v -= mean);
        }
    }
    ker
}

#[test]
fn conv2d_constant_image_zero_sum_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let ker = kernel_bank(&mut rng, 2, 3, true);
    let out = conv2d_valid_forward(&Tensor::full(&[9, 7, 3], 0.37), &ker).unwrap();
    assert_eq!(out.shape(), &[5, 3, 2]);
    assert!(out.data().iter().all(|v| v.abs() < 1e-12));
}

#[test]
fn conv2d_impulse_reproduces_reflected_kernel() {
    // Direct oracle: a unit impulse at the image centre. Output (y, x) reads the kernel at
    // (2 + 2 - y, 2 + 2 - x) under cross-correlation.
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let ker = kernel_bank(&mut rng, 1, 1, false);
    let mut img = Tensor::zeros(&[9, 9, 1]);
    img.data_mut()[4 * 9 + 4] = 1.0;
    let out = conv2d_valid_forward(&img, &ker).unwrap();
    assert_eq!(out.shape(), &[5, 5, 1]);
    for y in 0..5 {
        for x in 0..5 {
            let expected = ker.data()[(4 - y) * 5 + (4 - x)];
            assert_eq!(out.data()[y * 5 + x], expected);
        }
    }
}

#[test]
fn conv2d_shapes_and_errors() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let ker = kernel_bank(&mut rng, 3, 3, false);
    let out = conv2d_valid_forward(&random(&[5, 5, 3], &mut rng), &ker).unwrap();
    assert_eq!(out.shape(), &[1, 1, 3]);
    assert!(matches!(
        conv2d_valid_forward(&Tensor::zeros(&[4, 8, 3]), &ker),
        Err(VgaError::Dimension(_))
    ));
    assert!(conv2d_valid_forward(&Tensor::zeros(&[8, 8, 2]), &ker).is_err());
}

#[test]
fn conv2d_gradcheck_wrt_image() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    let ker = kernel_bank(&mut rng, 2, 3, true);
    let mut store = store_of(vec![random(&[7, 6, 3], &mut rng)]);
    let report = grad_check(
        &mut store,
        |tape, store| {
            let x = inputs(tape, store)[0];
            let y = tape.conv2d_valid(x, &ker)?;
            weighted_sum(tape, y, 34)
        },
        &GradCheckOptions::with_tolerance(1e-6),
    )
    .unwrap();
    assert!(report.passed(), "{report}");
}

fn attention_store(a: usize, b: usize, width: usize, seed: u64) -> ParamStore {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    store_of(vec![
        random(&[a, width], &mut rng),
        random(&[b, width], &mut rng),
        random(&[width, width], &mut rng),
        random(&[width, width], &mut rng),
        random(&[width, width], &mut rng),
        random(&[width, width], &mut rng),
    ])
}

fn attend(tape: &mut Tape, store: &ParamStore, heads: usize) -> Result<Var> {
    let x = inputs(tape, store);
    let w = AttentionVars {
        wq: x[2],
        wk: x[3],
        wv: x[4],
        wo: x[5],
    };
    multi_head_attention(tape, x[0], x[1], &w, heads)
}

#[test]
fn attention_single_token_is_value_output_projection() {
    let store = attention_store(1, 1, 8, 40);
    let mut tape = Tape::new();
    let out = attend(&mut tape, &store, 2).unwrap();
    let expected = store
        .value(ParamId(1))
        .matmul(store.value(ParamId(4)))
        .unwrap()
        .matmul(store.value(ParamId(5)))
        .unwrap();
    assert!(tape.value(out).max_abs_diff(&expected) < 1e-12);
}

#[test]
fn attention_identical_keys_give_identical_rows() {
    let mut store = attention_store(4, 3, 8, 41);
    let row: Vec<f64> = store.value(ParamId(1)).row_slice(0).to_vec();
    let kv = store.get_mut(ParamId(1));
    for r in 0..3 {
        kv.value.data_mut()[r * 8..(r + 1) * 8].copy_from_slice(&row);
    }
    let mut tape = Tape::new();
    let out = attend(&mut tape, &store, 2).unwrap();
    let out = tape.value(out);
    let expected = Tensor::row(row)
        .matmul(store.value(ParamId(4)))
        .unwrap()
        .matmul(store.value(ParamId(5)))
        .unwrap();
    for r in 0..4 {
        for c in 0..8 {
            assert!((out.at(r, c) - expected.at(0, c)).abs() < 1e-12);
        }
    }
}

#[test]
fn attention_gradcheck() {
    let mut store = attention_store(3, 3, 8, 42);
    let report = grad_check(
        &mut store,
        |tape, store| {
            let out = attend(tape, store, 2)?;
            weighted_sum(tape, out, 43)
        },
        &GradCheckOptions::with_tolerance(1e-4),
    )
    .unwrap();
    assert!(report.passed(), "{report}");
}

#[test]
fn attention_rejects_bad_head_count() {
    let store = attention_store(2, 2, 6, 44);
    let mut tape = Tape::new();
    assert!(matches!(
        attend(&mut tape, &store, 4),
        Err(VgaError::Config(_))
    ));
}

#[test]
fn backward_sum_gives_ones() {
    let mut store = store_of(vec![
        Tensor::new(vec![2, 2], vec![0.1, 0.2, 0.3, 0.4]).unwrap()
    ]);
    let mut tape = Tape::new();
    let w = inputs(&mut tape, &store)[0];
    let s = tape.sum(w);
    tape.backward(s, &mut store).unwrap();
    assert_eq!(store.grad(ParamId(0)).data(), &[1.0; 4]);

    // without clearing, a second pass doubles
    tape.backward(s, &mut store).unwrap();
    assert_eq!(store.grad(ParamId(0)).data(), &[2.0; 4]);
}

#[test]
fn disconnected_parameter_keeps_zero_grad() {
    let mut store = store_of(vec![Tensor::scalar(2.0), Tensor::scalar(5.0)]);
    let mut tape = Tape::new();
    let x = inputs(&mut tape, &store);
    let y = tape.mul(x[0], x[0]).unwrap();
    tape.backward(y, &mut store).unwrap();
    assert_eq!(store.grad(ParamId(0)).item(), 4.0);
    assert_eq!(store.grad(ParamId(1)).item(), 0.0);
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let mut store = store_of(vec![Tensor::zeros(&[2, 2])]);
    let mut tape = Tape::new();
    let w = inputs(&mut tape, &store)[0];
    assert!(matches!(
        tape.backward(w, &mut store),
        Err(VgaError::Contract(_))
    ));
}

#[test]
fn backward_visits_in_reverse_execution_order() {
    let mut store = store_of(vec![Tensor::scalar(0.5), Tensor::scalar(-0.3)]);
    let mut tape = Tape::new();
    let x = inputs(&mut tape, &store);
    let a = tape.mul(x[0], x[1]).unwrap();
    let b = tape.sigmoid(a);
    let c = tape.add(b, x[0]).unwrap();
    let report = tape.backward(c, &mut store).unwrap();
    let mut sorted = report.visited.clone();
    sorted.sort_unstable_by(|p, q| q.cmp(p));
    assert_eq!(report.visited, sorted);
    assert_eq!(report.visited.first(), Some(&c.index()));
    assert_eq!(report.visited.len(), tape.len());
}

#[test]
fn cosine_degenerate_input_is_zero_without_gradient() {
    let mut store = store_of(vec![
        Tensor::row(vec![0.0, 0.0]),
        Tensor::row(vec![1.0, 2.0]),
    ]);
    let mut tape = Tape::new();
    let x = inputs(&mut tape, &store);
    let c = tape.cosine(x[0], x[1]).unwrap();
    assert_eq!(tape.value(c).item(), 0.0);
    tape.backward(c, &mut store).unwrap();
    assert!(store
        .iter()
        .all(|(_, p)| p.grad.data().iter().all(|&g| g == 0.0)));
}

fn values(len: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-50.0f64..50.0, len)
}

proptest! {
    #[test]
    fn softmax_rows_are_distributions(rows in 1usize..5, cols in 1usize..7, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Tensor::new(
            vec![rows, cols],
            (0..rows * cols).map(|_| rng.random_range(-30.0..30.0)).collect(),
        ).unwrap();
        let y = eval1(x, |tape, x| tape.softmax_rows(x).unwrap());
        for r in 0..rows {
            let row = y.row_slice(r);
            prop_assert!(row.iter().all(|&v| v >= 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn activations_are_monotone(mut xs in values(32)) {
        xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let lr = eval1(Tensor::vector(xs.clone()), |tape, x| tape.leaky_relu(x, LEAKY_SLOPE));
        let sg = eval1(Tensor::vector(xs), |tape, x| tape.sigmoid(x));
        for w in lr.data().windows(2) {
            prop_assert!(w[0] <= w[1]);
        }
        for w in sg.data().windows(2) {
            prop_assert!(w[0] <= w[1]);
        }
    }

    #[test]
    fn conv_of_constant_image_with_zero_sum_kernel_vanishes(
        level in -5.0f64..5.0, h in 5usize..9, w in 5usize..9, seed in any::<u64>()
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let ker = kernel_bank(&mut rng, 3, 3, true);
        let out = conv2d_valid_forward(&Tensor::full(&[h, w, 3], level), &ker).unwrap();
        prop_assert!(out.data().iter().all(|v| v.abs() < 1e-9));
    }

    #[test]
    fn random_attention_gradients_match(seed in 0u64..1000) {
        let mut store = attention_store(2, 3, 4, seed);
        let report = grad_check(
            &mut store,
            |tape, store| {
                let out = attend(tape, store, 2)?;
                weighted_sum(tape, out, seed)
            },
            &GradCheckOptions::with_tolerance(1e-4),
        ).unwrap();
        prop_assert!(report.passed(), "{}", report);
    }
}
