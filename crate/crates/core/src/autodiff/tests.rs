use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

type Build = dyn Fn(&mut Tape<'_>, &[Var]) -> Result<Var, AutodiffError>;

fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
}

fn eval(build: &Build, inputs: &[Tensor]) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = build(&mut tape, &vars).unwrap();
    tape.value(out).item()
}

/// Max relative error between analytic gradients and central differences.
fn grad_check(build: &Build, inputs: &[Tensor]) -> f64 {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let out = build(&mut tape, &vars).unwrap();
    let grads = tape.backward(out).unwrap();

    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for (k, input) in inputs.iter().enumerate() {
        let analytic = grads.get(vars[k]).cloned().unwrap_or_else(|| Tensor::zeros(input.shape()));
        for i in 0..input.len() {
            let mut plus = inputs.to_vec();
            plus[k].data_mut()[i] += h;
            let mut minus = inputs.to_vec();
            minus[k].data_mut()[i] -= h;
            let numeric = (eval(build, &plus) - eval(build, &minus)) / (2.0 * h);
            let a = analytic.data()[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}

/// Contracts a node to a scalar with fixed pseudo-random weights so that every
/// output entry gets a distinct upstream gradient.
fn weighted_sum(tape: &mut Tape<'_>, x: Var) -> Result<Var, AutodiffError> {
    let shape = tape.value(x).shape().to_vec();
    let n: usize = shape.iter().product();
    let w = Tensor::new(shape, (0..n).map(|i| 0.3 + 0.17 * ((i * 7) % 5) as f64).collect())?;
    let w = tape.leaf(w);
    let p = tape.mul(x, w)?;
    tape.sum(p)
}

#[test]
fn matmul_identity_and_hand_example() {
    let mut tape = Tape::new();
    let i2 = tape.leaf(Tensor::identity(2));
    let x = tape.leaf(Tensor::vector(vec![4.0, -1.5]));
    let y = tape.matmul(i2, x).unwrap();
    assert_eq!(tape.value(y).data(), &[4.0, -1.5]);

    let a = tape.leaf(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
    let b = tape.leaf(Tensor::matrix(2, 1, vec![1.0, 1.0]).unwrap());
    let c = tape.matmul(a, b).unwrap();
    assert_eq!(tape.value(c).shape(), &[2, 1]);
    assert_eq!(tape.value(c).data(), &[3.0, 7.0]);
}

#[test]
fn matmul_shape_mismatch_is_error() {
    let mut tape = Tape::new();
    let a = tape.leaf(Tensor::zeros(&[2, 3]));
    let b = tape.leaf(Tensor::zeros(&[2, 2]));
    assert!(matches!(tape.matmul(a, b), Err(AutodiffError::Shape { op: "matmul", .. })));
}

#[test]
fn matmul_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let build: Box<Build> = Box::new(|t, v| {
        let y = t.matmul(v[0], v[1])?;
        weighted_sum(t, y)
    });
    let err = grad_check(&*build, &[random(&mut rng, &[3, 4]), random(&mut rng, &[4, 2])]);
    assert!(err < 1e-6, "matrix-matrix rel err {err}");
    let err = grad_check(&*build, &[random(&mut rng, &[3, 4]), random(&mut rng, &[4])]);
    assert!(err < 1e-6, "matrix-vector rel err {err}");
    let err = grad_check(&*build, &[random(&mut rng, &[4]), random(&mut rng, &[4, 3])]);
    assert!(err < 1e-6, "vector-matrix rel err {err}");
}

#[test]
fn softmax_examples() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::vector(vec![2.5, 2.5, 2.5]));
    let y = tape.softmax(x, 0).unwrap();
    for &v in tape.value(y).data() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }

    let x = tape.leaf(Tensor::vector(vec![0.0, 3f64.ln()]));
    let y = tape.softmax(x, 0).unwrap();
    let d = tape.value(y).data();
    assert!((d[0] - 0.25).abs() < 1e-12 && (d[1] - 0.75).abs() < 1e-12);

    let x = tape.leaf(Tensor::vector(vec![1000.0, 1001.0]));
    let y = tape.softmax(x, 0).unwrap();
    let d = tape.value(y).data();
    // exp(-1) / (1 + exp(-1)) evaluated on the shifted exponent
    let lo = (-1f64).exp() / (1.0 + (-1f64).exp());
    assert!((d[0] - lo).abs() < 1e-12 && (d[1] - (1.0 - lo)).abs() < 1e-12);
    assert!((d[0] - 0.2689).abs() < 1e-4 && (d[1] - 0.7311).abs() < 1e-4);
}

#[test]
fn softmax_along_matrix_axes() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for axis in 0..2 {
        let mut tape = Tape::new();
        let x = tape.leaf(random(&mut rng, &[3, 4]));
        let y = tape.softmax(x, axis).unwrap();
        let s = tape.sum_axis(y, axis).unwrap();
        for &v in tape.value(s).data() {
            assert!((v - 1.0).abs() < 1e-12);
        }
        let build: Box<Build> = Box::new(move |t, v| {
            let y = t.softmax(v[0], axis)?;
            weighted_sum(t, y)
        });
        assert!(grad_check(&*build, &[random(&mut rng, &[3, 4])]) < 1e-6);
    }
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::vector(vec![1.0]));
    assert!(tape.softmax(x, 1).is_err());
}

#[test]
fn zero_sized_tensors_are_rejected() {
    assert!(Tensor::new(vec![0], vec![]).is_err());
    assert!(Tensor::new(vec![2, 2], vec![1.0; 3]).is_err());
}

#[test]
fn elementwise_examples() {
    let mut tape = Tape::new();
    let z = tape.leaf(Tensor::scalar(0.0));
    let s = tape.sigmoid(z).unwrap();
    let t = tape.tanh(z).unwrap();
    assert_eq!(tape.value(s).item(), 0.5);
    assert_eq!(tape.value(t).item(), 0.0);

    let a = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
    let b = tape.leaf(Tensor::vector(vec![3.0]));
    let c = tape.concat(&[a, b]).unwrap();
    assert_eq!(tape.value(c).data(), &[1.0, 2.0, 3.0]);
    assert!(tape.add(a, b).is_err());
    assert!(tape.mul(a, b).is_err());
}

#[test]
fn elementwise_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cases: Vec<(&str, Box<Build>, Vec<Vec<usize>>)> = vec![
        (
            "tanh",
            Box::new(|t, v| {
                let y = t.tanh(v[0])?;
                weighted_sum(t, y)
            }),
            vec![vec![5]],
        ),
        (
            "sigmoid",
            Box::new(|t, v| {
                let y = t.sigmoid(v[0])?;
                weighted_sum(t, y)
            }),
            vec![vec![5]],
        ),
        (
            "add",
            Box::new(|t, v| {
                let y = t.add(v[0], v[1])?;
                weighted_sum(t, y)
            }),
            vec![vec![4], vec![4]],
        ),
        (
            "mul",
            Box::new(|t, v| {
                let y = t.mul(v[0], v[1])?;
                weighted_sum(t, y)
            }),
            vec![vec![2, 3], vec![2, 3]],
        ),
        (
            "affine",
            Box::new(|t, v| {
                let y = t.affine(v[0], -1.7, 0.4)?;
                weighted_sum(t, y)
            }),
            vec![vec![4]],
        ),
        (
            "concat",
            Box::new(|t, v| {
                let y = t.concat(&[v[0], v[1]])?;
                weighted_sum(t, y)
            }),
            vec![vec![3], vec![2]],
        ),
        (
            "stack_cols",
            Box::new(|t, v| {
                let y = t.stack_cols(&[v[0], v[1], v[2]])?;
                weighted_sum(t, y)
            }),
            vec![vec![3], vec![3], vec![3]],
        ),
        (
            "add_col_broadcast",
            Box::new(|t, v| {
                let y = t.add_col_broadcast(v[0], v[1])?;
                weighted_sum(t, y)
            }),
            vec![vec![3, 4], vec![3]],
        ),
        (
            "sum_axis0",
            Box::new(|t, v| {
                let y = t.sum_axis(v[0], 0)?;
                weighted_sum(t, y)
            }),
            vec![vec![3, 4]],
        ),
        (
            "sum_axis1",
            Box::new(|t, v| {
                let y = t.sum_axis(v[0], 1)?;
                weighted_sum(t, y)
            }),
            vec![vec![3, 4]],
        ),
        (
            "row",
            Box::new(|t, v| {
                let y = t.row(v[0], 1)?;
                weighted_sum(t, y)
            }),
            vec![vec![3, 4]],
        ),
        ("nll_softmax", Box::new(|t, v| t.nll_softmax(v[0], 2)), vec![vec![5]]),
        (
            "div_scalar",
            Box::new(|t, v| {
                // keep the divisor away from zero
                let s = t.sigmoid(v[1])?;
                let s = t.affine(s, 1.0, 0.5)?;
                let y = t.div_scalar(v[0], s)?;
                weighted_sum(t, y)
            }),
            vec![vec![4], vec![]],
        ),
    ];
    for (name, build, shapes) in cases {
        let inputs: Vec<Tensor> = shapes.iter().map(|s| random(&mut rng, s)).collect();
        let err = grad_check(&*build, &inputs);
        assert!(err < 1e-6, "{name}: relative error {err}");
    }
}

#[test]
fn backward_sum_and_product() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::matrix(2, 3, vec![0.1, -2.0, 3.0, 4.0, 5.0, 6.0]).unwrap());
    let s = tape.sum(x).unwrap();
    let g = tape.backward(s).unwrap();
    assert_eq!(g.get(x).unwrap().data(), &[1.0; 6]);

    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::scalar(3.0));
    let y = tape.leaf(Tensor::scalar(-2.0));
    let p = tape.mul(x, y).unwrap();
    let g = tape.backward(p).unwrap();
    assert_eq!(g.get(x).unwrap().item(), -2.0);
    assert_eq!(g.get(y).unwrap().item(), 3.0);
}

#[test]
fn backward_rejects_non_scalar_loss() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::vector(vec![1.0, 2.0]));
    assert!(matches!(tape.backward(x), Err(AutodiffError::NotScalar { .. })));
}

#[test]
fn fan_out_accumulates_both_paths() {
    // loss = sum(tanh(x)) + sum(x ⊙ w): two consumers of x
    let x0 = Tensor::vector(vec![0.3, -1.1, 0.7]);
    let w0 = Tensor::vector(vec![2.0, 0.5, -1.0]);

    let single = |use_tanh: bool| {
        let mut tape = Tape::new();
        let x = tape.leaf(x0.clone());
        let w = tape.leaf(w0.clone());
        let y = if use_tanh { tape.tanh(x).unwrap() } else { tape.mul(x, w).unwrap() };
        let l = tape.sum(y).unwrap();
        tape.backward(l).unwrap().get(x).unwrap().clone()
    };
    let mut tape = Tape::new();
    let x = tape.leaf(x0.clone());
    let w = tape.leaf(w0.clone());
    let a = tape.tanh(x).unwrap();
    let a = tape.sum(a).unwrap();
    let b = tape.mul(x, w).unwrap();
    let b = tape.sum(b).unwrap();
    let l = tape.add(a, b).unwrap();
    let both = tape.backward(l).unwrap().get(x).unwrap().clone();

    let (g1, g2) = (single(true), single(false));
    for i in 0..3 {
        assert!((both.data()[i] - (g1.data()[i] + g2.data()[i])).abs() < 1e-15);
    }
}

#[test]
fn bound_leaves_do_not_copy_and_stay_untouched() {
    let p = Tensor::vector(vec![1.0, 2.0]);
    let mut tape = Tape::new();
    let v = tape.bind(&p);
    let s = tape.sum(v).unwrap();
    let g = tape.backward(s).unwrap();
    assert_eq!(g.get(v).unwrap().data(), &[1.0, 1.0]);
    assert_eq!(p.data(), &[1.0, 2.0]);
}

fn gru_inputs(rng: &mut ChaCha8Rng, d_in: usize, d_h: usize) -> Vec<Tensor> {
    let mut v = vec![random(rng, &[d_in]), random(rng, &[d_h])];
    for _ in 0..3 {
        v.push(random(rng, &[d_h, d_in]));
        v.push(random(rng, &[d_h, d_h]));
        v.push(random(rng, &[d_h]));
    }
    v
}

fn gru_vars(v: &[Var]) -> GruVars {
    GruVars { w_r: v[2], u_r: v[3], b_r: v[4], w_z: v[5], u_z: v[6], b_z: v[7], w_h: v[8], u_h: v[9], b_h: v[10] }
}

#[test]
fn gru_zero_weights_keep_zero_state() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut inputs = gru_inputs(&mut rng, 3, 2);
    inputs[1].fill(0.0);
    for t in &mut inputs[2..] {
        t.fill(0.0);
    }
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let h = gru_cell(&mut tape, vars[0], vars[1], &gru_vars(&vars)).unwrap();
    assert_eq!(tape.value(h).data(), &[0.0, 0.0]);
}

#[test]
fn gru_saturated_update_gate_takes_candidate() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut inputs = gru_inputs(&mut rng, 3, 2);
    inputs[7].fill(50.0); // b_z
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone())).collect();
    let h = gru_cell(&mut tape, vars[0], vars[1], &gru_vars(&vars)).unwrap();

    // candidate evaluated by hand
    let (x, hp) = (inputs[0].data(), inputs[1].data());
    let mv = |m: &Tensor, v: &[f64]| -> Vec<f64> {
        (0..m.shape()[0]).map(|i| (0..v.len()).map(|j| m.at(i, j) * v[j]).sum()).collect()
    };
    let sig = |v: f64| 1.0 / (1.0 + (-v).exp());
    let wr = mv(&inputs[2], x);
    let ur = mv(&inputs[3], hp);
    let r: Vec<f64> = (0..2).map(|i| sig(wr[i] + ur[i] + inputs[4].data()[i])).collect();
    let rh: Vec<f64> = (0..2).map(|i| r[i] * hp[i]).collect();
    let wh = mv(&inputs[8], x);
    let uh = mv(&inputs[9], &rh);
    for i in 0..2 {
        let cand = (wh[i] + uh[i] + inputs[10].data()[i]).tanh();
        assert!((tape.value(h).data()[i] - cand).abs() < 1e-9);
    }
}

#[test]
fn gru_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let inputs = gru_inputs(&mut rng, 3, 2);
    let build: Box<Build> = Box::new(|t, v| {
        let h = gru_cell(t, v[0], v[1], &gru_vars(v))?;
        weighted_sum(t, h)
    });
    let err = grad_check(&*build, &inputs);
    assert!(err < 1e-5, "gru relative error {err}");
}

#[test]
fn large_inputs_stay_finite() {
    let mut tape = Tape::new();
    let x = tape.leaf(Tensor::vector(vec![50.0, -50.0, 49.0]));
    let ops: Vec<Var> = vec![
        tape.tanh(x).unwrap(),
        tape.sigmoid(x).unwrap(),
        tape.softmax(x, 0).unwrap(),
        tape.nll_softmax(x, 1).unwrap(),
    ];
    for v in ops {
        assert!(tape.value(v).is_finite());
    }
}

proptest! {
    #[test]
    fn softmax_sums_to_one_and_is_shift_invariant(
        xs in proptest::collection::vec(-50.0f64..50.0, 1..12),
        c in -30.0f64..30.0,
    ) {
        let mut tape = Tape::new();
        let x = tape.leaf(Tensor::vector(xs.clone()));
        let shifted = tape.leaf(Tensor::vector(xs.iter().map(|v| v + c).collect()));
        let y = tape.softmax(x, 0).unwrap();
        let ys = tape.softmax(shifted, 0).unwrap();
        prop_assert!((tape.value(y).sum() - 1.0).abs() < 1e-12);
        for (a, b) in tape.value(y).data().iter().zip(tape.value(ys).data()) {
            prop_assert!(*a > 0.0);
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
