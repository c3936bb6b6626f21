//! Finite-difference checks for every differentiable tape primitive.
//!
//! Central differences with h = 1e-6 against reverse-mode gradients,
//! relative tolerance 1e-5 with an absolute floor of 1e-7, over 20
//! seeds per primitive. Inputs are sampled away from non-smooth points
//! (ReLU kink, log near 0).

use indexcache_core::tensor::{Tape, TensorId};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

const H: f64 = 1e-6;
const REL_TOL: f64 = 1e-5;
const ABS_FLOOR: f64 = 1e-7;
const SEEDS: u64 = 20;

struct Input {
    data: Vec<f64>,
    shape: Vec<usize>,
}

/// Build the graph, backprop, and compare each input coordinate's
/// reverse-mode gradient against a central finite difference.
fn check_gradients<F>(build: F, inputs: &[Input], label: &str)
where
    F: Fn(&mut Tape, &[TensorId]) -> TensorId,
{
    let eval = |datas: &[Vec<f64>]| -> f64 {
        let mut tape = Tape::new();
        let ids: Vec<TensorId> = datas
            .iter()
            .zip(inputs)
            .map(|(d, inp)| tape.leaf(d.clone(), inp.shape.clone(), false).unwrap())
            .collect();
        let root = build(&mut tape, &ids);
        tape.value(root)[0]
    };

    let mut tape = Tape::new();
    let ids: Vec<TensorId> = inputs
        .iter()
        .map(|inp| tape.leaf(inp.data.clone(), inp.shape.clone(), true).unwrap())
        .collect();
    let root = build(&mut tape, &ids);
    tape.backward(root).unwrap();

    let base: Vec<Vec<f64>> = inputs.iter().map(|i| i.data.clone()).collect();
    for (arg, inp) in inputs.iter().enumerate() {
        let ad = tape.grad(ids[arg]).expect("grad populated");
        for coord in 0..inp.data.len() {
            let mut plus = base.clone();
            let mut minus = base.clone();
            plus[arg][coord] += H;
            minus[arg][coord] -= H;
            let fd = (eval(&plus) - eval(&minus)) / (2.0 * H);
            let diff = (ad[coord] - fd).abs();
            let tol = ABS_FLOOR.max(REL_TOL * ad[coord].abs().max(fd.abs()));
            assert!(
                diff <= tol,
                "{label}: input {arg} coord {coord}: ad={} fd={} diff={diff:e}",
                ad[coord],
                fd
            );
        }
    }
}

fn rand_vec(rng: &mut StdRng, n: usize, lo: f64, hi: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(lo..hi)).collect()
}

/// Sample values bounded away from zero (for ReLU kink / log domain).
fn rand_vec_off_zero(rng: &mut StdRng, n: usize) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let v: f64 = rng.random_range(0.05..1.5);
            if rng.random_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect()
}

#[test]
fn matmul_gradcheck() {
    for seed in 0..SEEDS {
        let mut rng = StdRng::seed_from_u64(seed);
        let a = Input { data: rand_vec(&mut rng, 6, -1.0, 1.0), shape: vec![2, 3] };
        let b = Input { data: rand_vec(&mut rng, 12, -1.0, 1.0), shape: vec![3, 4] };
        check_gradients(
            |t, ids| {
                let c = t.matmul(ids[0], ids[1]).unwrap();
                t.sum_all(c)
            },
            &[a, b],
            "matmul",
        );
    }
}

#[test]
fn add_and_mul_gradcheck() {
    for seed in 0..SEEDS {
        let mut rng = StdRng::seed_from_u64(100 + seed);
        let a = Input { data: rand_vec(&mut rng, 8, -2.0, 2.0), shape: vec![2, 4] };
        let b = Input { data: rand_vec(&mut rng, 8, -2.0, 2.0), shape: vec![2, 4] };
        check_gradients(
            |t, ids| {
                let s = t.add(ids[0], ids[1]).unwrap();
                let p = t.mul(s, ids[1]).unwrap();
                t.sum_all(p)
            },
            &[a, b],
            "add/mul",
        );
    }
}

#[test]
fn add_bias_gradcheck() {
    for seed in 0..SEEDS {
        let mut rng = StdRng::seed_from_u64(200 + seed);
        let a = Input { data: rand_vec(&mut rng, 12, -1.0, 1.0), shape: vec![3, 4] };
        let b = Input { data: rand_vec(&mut rng, 4, -1.0, 1.0), shape: vec![4] };
        check_gradients(
            |t, ids| {
                let s = t.add_bias(ids[0], ids[1]).unwrap();
                let sq = t.mul(s, s).unwrap();
                t.sum_all(sq)
            },
            &[a, b],
            "add_bias",
        );
    }
}

#[test]
fn relu_gradcheck() {
    for seed in 0..SEEDS {
        let mut rng = StdRng::seed_from_u64(300 + seed);
        let a = Input { data: rand_vec_off_zero(&mut rng, 10), shape: vec![10] };
        check_gradients(
            |t, ids| {
                let r = t.relu(ids[0]);
                let sq = t.mul(r, r).unwrap();
                t.sum_all(sq)
            },
            &[a],
            "relu",
        );
    }
}

#[test]
fn exp_log_gradcheck() {
    for seed in 0..SEEDS {
        let mut rng = StdRng::seed_from_u64(400 + seed);
        let a = Input { data: rand_vec(&mut rng, 6, 0.2, 2.0), shape: vec![6] };
        check_gradients(
            |t, ids| {
                let l = t.log(ids[0]);
                let e = t.exp(l);
                let p = t.mul(e, l).unwrap();
                t.sum_all(p)
            },
            &[a],
            "exp/log",
        );
    }
}

#[test]
fn softmax_gradcheck() {
    for seed in 0..SEEDS {
        let mut rng = StdRng::seed_from_u64(500 + seed);
        let a = Input { data: rand_vec(&mut rng, 10, -2.0, 2.0), shape: vec![2, 5] };
        let w = Input { data: rand_vec(&mut rng, 10, -1.0, 1.0), shape: vec![2, 5] };
        check_gradients(
            |t, ids| {
                let s = t.softmax_last(ids[0]);
                let p = t.mul(s, ids[1]).unwrap();
                t.sum_all(p)
            },
            &[a, w],
            "softmax_last",
        );
    }
}

#[test]
fn softmax_cross_entropy_matches_finite_differences() {
    // Softmax + gather + log composition on a random 5-logit input.
    for seed in 0..SEEDS {
        let mut rng = StdRng::seed_from_u64(600 + seed);
        let logits = Input { data: rand_vec(&mut rng, 5, -3.0, 3.0), shape: vec![1, 5] };
        let target = rng.random_range(0..5usize);
        check_gradients(
            |t, ids| {
                let probs = t.softmax_last(ids[0]);
                let sel = t.gather(probs, vec![target], vec![1]).unwrap();
                let lp = t.log(sel);
                t.scale(lp, -1.0)
            },
            &[logits],
            "softmax cross-entropy",
        );
    }
}

#[test]
fn reductions_gradcheck() {
    for seed in 0..SEEDS {
        let mut rng = StdRng::seed_from_u64(700 + seed);
        let a = Input { data: rand_vec(&mut rng, 12, -1.0, 1.0), shape: vec![3, 4] };
        check_gradients(
            |t, ids| {
                let rows = t.sum_last(ids[0]);
                let sq = t.mul(rows, rows).unwrap();
                let total = t.sum_all(sq);
                let m = t.mean_all(ids[0]);
                let both = t.add(total, m).unwrap();
                t.sum_all(both)
            },
            &[a],
            "sum_last/sum_all/mean_all",
        );
    }
}

#[test]
fn gather_variants_gradcheck() {
    for seed in 0..SEEDS {
        let mut rng = StdRng::seed_from_u64(800 + seed);
        let a = Input { data: rand_vec(&mut rng, 12, -1.0, 1.0), shape: vec![4, 3] };
        let idx: Vec<usize> = (0..6).map(|_| rng.random_range(0..12usize)).collect();
        let rows: Vec<usize> = (0..3).map(|_| rng.random_range(0..4usize)).collect();
        check_gradients(
            move |t, ids| {
                let g = t.gather(ids[0], idx.clone(), vec![6]).unwrap();
                let r = t.gather_rows(ids[0], rows.clone()).unwrap();
                let sl = t.slice_range(ids[0], 2, vec![4]).unwrap();
                let gs = t.sum_all(g);
                let rsq = t.mul(r, r).unwrap();
                let rs = t.sum_all(rsq);
                let ss = t.sum_all(sl);
                let partial = t.add(gs, rs).unwrap();
                t.add(partial, ss).unwrap()
            },
            &[a],
            "gather/gather_rows/slice_range",
        );
    }
}

#[test]
fn concat_transpose_reshape_gradcheck() {
    for seed in 0..SEEDS {
        let mut rng = StdRng::seed_from_u64(900 + seed);
        let a = Input { data: rand_vec(&mut rng, 6, -1.0, 1.0), shape: vec![2, 3] };
        let b = Input { data: rand_vec(&mut rng, 6, -1.0, 1.0), shape: vec![2, 3] };
        check_gradients(
            |t, ids| {
                let at = t.transpose(ids[0]).unwrap();
                let ar = t.reshape(at, vec![2, 3]).unwrap();
                let c = t.concat(&[ar, ids[1]], vec![4, 3]).unwrap();
                let sq = t.mul(c, c).unwrap();
                t.sum_all(sq)
            },
            &[a, b],
            "concat/transpose/reshape",
        );
    }
}

#[test]
fn scale_and_gate_gradcheck() {
    for seed in 0..SEEDS {
        let mut rng = StdRng::seed_from_u64(1000 + seed);
        let a = Input { data: rand_vec(&mut rng, 8, -1.0, 1.0), shape: vec![8] };
        let gate = Input { data: vec![rng.random_range(0.2..1.5)], shape: vec![1] };
        check_gradients(
            |t, ids| {
                let s = t.scale(ids[0], 0.7);
                let gated = t.mul_gate(s, ids[1]).unwrap();
                let sq = t.mul(gated, gated).unwrap();
                t.sum_all(sq)
            },
            &[a, gate],
            "scale/mul_gate",
        );
    }
}

#[test]
fn layer_norm_gradcheck() {
    for seed in 0..SEEDS {
        let mut rng = StdRng::seed_from_u64(1100 + seed);
        let a = Input { data: rand_vec(&mut rng, 12, -2.0, 2.0), shape: vec![3, 4] };
        let gamma = Input { data: rand_vec(&mut rng, 4, 0.5, 1.5), shape: vec![4] };
        let beta = Input { data: rand_vec(&mut rng, 4, -0.5, 0.5), shape: vec![4] };
        check_gradients(
            |t, ids| {
                let y = t.layer_norm(ids[0], ids[1], ids[2], 1e-5).unwrap();
                let w = t.mul(y, y).unwrap();
                t.sum_all(w)
            },
            &[a, gamma, beta],
            "layer_norm",
        );
    }
}

#[test]
fn causal_dot_gradcheck() {
    for seed in 0..SEEDS {
        let mut rng = StdRng::seed_from_u64(1200 + seed);
        let q = Input { data: rand_vec(&mut rng, 12, -1.0, 1.0), shape: vec![4, 3] };
        let k = Input { data: rand_vec(&mut rng, 12, -1.0, 1.0), shape: vec![4, 3] };
        let w = Input { data: rand_vec(&mut rng, 10, -1.0, 1.0), shape: vec![10] };
        check_gradients(
            |t, ids| {
                let packed = t.causal_dot(ids[0], ids[1]).unwrap();
                let weighted = t.mul(packed, ids[2]).unwrap();
                t.sum_all(weighted)
            },
            &[q, k, w],
            "causal_dot",
        );
    }
}

#[test]
fn detached_subgraph_has_zero_gradient() {
    for seed in 0..5 {
        let mut rng = StdRng::seed_from_u64(1300 + seed);
        let xv = rand_vec(&mut rng, 4, -1.0, 1.0);
        let yv = rand_vec(&mut rng, 4, -1.0, 1.0);
        let mut t = Tape::new();
        let x = t.leaf(xv, vec![4], true).unwrap();
        let y = t.leaf(yv.clone(), vec![4], true).unwrap();
        let xd = t.detach(x);
        let p = t.mul(xd, y).unwrap();
        let loss = t.sum_all(p);
        t.backward(loss).unwrap();
        assert_eq!(t.grad(x).unwrap(), &[0.0; 4]);
        let gy = t.grad(y).unwrap();
        assert_eq!(gy, t.value(xd));
    }
}
