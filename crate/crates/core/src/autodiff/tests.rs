use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
}

/// Builds `Σ w ⊙ f(inputs)` with a fixed random weighting so every output
/// element contributes to the scalar being differentiated.
fn weighted_root(tape: &mut Tape<f64>, out: Var, seed: u64) -> Var {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = tape.shape(out).to_vec();
    let w = tape.constant(random(&shape, &mut rng));
    let m = tape.mul(out, w);
    tape.sum(m)
}

/// Compares backprop against central differences for every input element.
fn check(inputs: Vec<Tensor<f64>>, f: impl Fn(&mut Tape<f64>, &[Var]) -> Var) {
    let eval = |vals: &[Tensor<f64>]| {
        let mut tape = Tape::new();
        let vars: Vec<Var> = vals.iter().map(|t| tape.param(t.clone())).collect();
        let out = f(&mut tape, &vars);
        let root = weighted_root(&mut tape, out, 99);
        (tape, vars, root)
    };
    let (tape, vars, root) = eval(&inputs);
    let grads = tape.backward(root);
    let h = 1e-6;
    for (which, t) in inputs.iter().enumerate() {
        let analytic = grads.get_or_zeros(vars[which], &t.shape);
        for i in 0..t.len() {
            let mut plus = inputs.clone();
            plus[which].data[i] += h;
            let mut minus = inputs.clone();
            minus[which].data[i] -= h;
            let (tp, _, rp) = eval(&plus);
            let (tm, _, rm) = eval(&minus);
            let numeric = (tp.value(rp).data[0] - tm.value(rm).data[0]) / (2.0 * h);
            let a = analytic.data[i];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-3);
            assert!(err < 1e-5, "input {which} elem {i}: analytic {a} numeric {numeric}");
        }
    }
}

fn rng() -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(7)
}

#[test]
fn elementwise_ops() {
    let mut r = rng();
    let a = random(&[3, 4], &mut r);
    let b = random(&[3, 4], &mut r);
    check(vec![a.clone(), b.clone()], |t, v| t.add(v[0], v[1]));
    check(vec![a.clone(), b.clone()], |t, v| t.sub(v[0], v[1]));
    check(vec![a.clone(), b.clone()], |t, v| t.mul(v[0], v[1]));
    check(vec![a.clone()], |t, v| t.scale(v[0], 2.5));
    check(vec![a.clone()], |t, v| t.sigmoid(v[0]));
    check(vec![a.clone()], |t, v| t.tanh(v[0]));
    check(vec![a.clone()], |t, v| t.exp(v[0]));
    check(vec![a.clone()], |t, v| t.relu(v[0]));
    check(vec![a], |t, v| t.leaky_relu(v[0], 0.01));
}

#[test]
fn matmul_and_bias() {
    let mut r = rng();
    let a = random(&[3, 4], &mut r);
    let b = random(&[4, 5], &mut r);
    let bias = random(&[5], &mut r);
    check(vec![a, b, bias], |t, v| {
        let m = t.matmul(v[0], v[1]);
        t.add_bias(m, v[2])
    });
}

#[test]
fn column_plumbing() {
    let mut r = rng();
    let a = random(&[2, 6], &mut r);
    let b = random(&[2, 3], &mut r);
    check(vec![a.clone(), b], |t, v| {
        let s = t.slice_cols(v[0], 1, 3);
        let c = t.concat_cols(&[s, v[1]]);
        t.reshape(c, vec![2, 2, 3])
    });
    check(vec![a], |t, v| t.upsample(v[0], 3, 2, 4));
}

#[test]
fn convolutions() {
    let mut r = rng();
    let x = random(&[2, 3, 9], &mut r);
    let w = random(&[4, 3, 3], &mut r);
    let b = random(&[4], &mut r);
    check(vec![x.clone(), w, b.clone()], |t, v| t.conv1d(v[0], v[1], v[2], 1));
    let wt = random(&[3, 4, 5], &mut r);
    check(vec![x.clone(), wt, b], |t, v| t.conv_transpose1d(v[0], v[1], v[2], 2));
    check(vec![x.clone()], |t, v| t.global_avg_pool(v[0]));
    check(vec![x], |t, v| t.time_slice(v[0], 4));
}

#[test]
fn max_pool_routes_to_argmax() {
    let mut r = rng();
    let x = random(&[2, 2, 10], &mut r);
    check(vec![x], |t, v| t.max_pool1d(v[0], 5));
}

#[test]
fn channel_norm_batch_and_frozen() {
    let mut r = rng();
    let x = random(&[3, 2, 5], &mut r);
    let g = random(&[2], &mut r);
    let b = random(&[2], &mut r);
    check(vec![x.clone(), g.clone(), b.clone()], |t, v| t.channel_norm(v[0], v[1], v[2], None).0);
    let stats = NormStats {
        mean: vec![0.1, -0.2],
        var: vec![0.5, 2.0],
    };
    check(vec![x, g, b], |t, v| t.channel_norm(v[0], v[1], v[2], Some(&stats)).0);
}

#[test]
fn distance_and_assignment_ops() {
    let mut r = rng();
    let a = random(&[3, 4], &mut r);
    let b = random(&[3, 4], &mut r);
    let w = random(&[2, 4], &mut r);
    check(vec![a.clone(), b], |t, v| t.squared_distance(v[0], v[1], 0.3));
    check(vec![a.clone(), w.clone()], |t, v| t.pairwise_euclid(v[0], v[1]));
    check(vec![a.clone(), w.clone()], |t, v| t.pairwise_cid(v[0], v[1], 2, 2, 1e-12));
    check(vec![a.clone(), w.clone()], |t, v| {
        let d = t.pairwise_euclid(v[0], v[1]);
        t.student_t(d, 1.0)
    });
    check(vec![a.clone(), w], |t, v| {
        let d = t.pairwise_euclid(v[0], v[1]);
        t.student_t(d, 2.5)
    });
}

#[test]
fn kl_terms() {
    let mut r = rng();
    let a = random(&[3, 4], &mut r);
    let w = random(&[2, 4], &mut r);
    let p = vec![0.7, 0.3, 0.1, 0.9, 0.5, 0.5];
    check(vec![a.clone(), w], move |t, v| {
        let d = t.pairwise_euclid(v[0], v[1]);
        let q = t.student_t(d, 1.0);
        t.kl_to_target(q, p.clone())
    });
    let lv = random(&[3, 4], &mut r);
    check(vec![a, lv], |t, v| t.gaussian_kl(v[0], v[1]));
}

#[test]
fn shared_subexpressions_accumulate() {
    let mut r = rng();
    let a = random(&[2, 3], &mut r);
    check(vec![a], |t, v| {
        let s = t.mul(v[0], v[0]);
        let e = t.tanh(v[0]);
        t.add(s, e)
    });
}

#[test]
fn constants_receive_no_gradient() {
    let mut tape = Tape::<f64>::new();
    let c = tape.constant(Tensor::new(vec![2], vec![1.0, 2.0]));
    let p = tape.param(Tensor::new(vec![2], vec![3.0, 4.0]));
    let m = tape.mul(c, p);
    let s = tape.sum(m);
    let g = tape.backward(s);
    assert!(g.get(c).is_none());
    assert_eq!(g.get(p).unwrap().data, vec![1.0, 2.0]);
}

#[test]
fn single_dense_layer_closed_form() {
    // L = (w·x + b − y)² with x = (1, 2), w = (0.5, −1), b = 0.25, y = 1.
    let mut tape = Tape::<f64>::new();
    let x = tape.constant(Tensor::new(vec![1, 2], vec![1.0, 2.0]));
    let w = tape.param(Tensor::new(vec![2, 1], vec![0.5, -1.0]));
    let b = tape.param(Tensor::new(vec![1], vec![0.25]));
    let y = tape.constant(Tensor::new(vec![1, 1], vec![1.0]));
    let m = tape.matmul(x, w);
    let out = tape.add_bias(m, b);
    let l = tape.squared_distance(out, y, 1.0);
    let g = tape.backward(l);
    // residual = 0.5 − 2 + 0.25 − 1 = −2.25
    let gw = &g.get(w).unwrap().data;
    assert!((gw[0] - 2.0 * -2.25 * 1.0).abs() < 1e-9);
    assert!((gw[1] - 2.0 * -2.25 * 2.0).abs() < 1e-9);
    assert!((g.get(b).unwrap().data[0] - 2.0 * -2.25).abs() < 1e-9);
}
