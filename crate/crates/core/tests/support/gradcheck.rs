//! Reverse-mode gradients against central finite differences of
//! independently written reference forwards (plain f64 loops).
//!
//! Each check panics on failure; shared with the acceptance suite.

use ippsm_core::numerics::{NodeId, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const H: f64 = 1e-3;
const TOL: f64 = 1e-4;
const SHAPES: usize = 20;

struct Param {
    shape: Vec<usize>,
    data: Vec<f64>,
}

/// Values bounded away from zero so ReLU kinks stay outside `±H`.
fn random_param(shape: Vec<usize>, rng: &mut impl Rng) -> Param {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.gen_range(0.05..1.0);
            if rng.gen() {
                v
            } else {
                -v
            }
        })
        .collect();
    Param { shape, data }
}

/// `Σ c_i out_i` on the tape: flatten, then a constant `[N, 1]` dense layer.
fn project(tape: &mut Tape<f64>, out: NodeId, coeffs: &[f64]) -> NodeId {
    let n = coeffs.len();
    let flat = tape.reshape(out, vec![1, n]).unwrap();
    let w = tape.constant(Tensor::new(vec![n, 1], coeffs.to_vec()).unwrap());
    let b = tape.constant(Tensor::new(vec![1], vec![0.0]).unwrap());
    tape.dense(flat, w, b).unwrap()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Checks tape gradients of `build` against finite differences of `reference`
/// for every parameter; returns the worst relative error.
fn check(
    name: &str,
    params: &[Param],
    build: impl Fn(&mut Tape<f64>, &[NodeId]) -> NodeId,
    reference: impl Fn(&[Vec<f64>]) -> f64,
) -> f64 {
    let mut tape = Tape::<f64>::new();
    let ids: Vec<NodeId> = params
        .iter()
        .enumerate()
        .map(|(i, p)| tape.param(i, Tensor::new(p.shape.clone(), p.data.clone()).unwrap()))
        .collect();
    let loss = build(&mut tape, &ids);
    let values: Vec<Vec<f64>> = params.iter().map(|p| p.data.clone()).collect();
    let forward = tape.value(loss).item();
    let expected = reference(&values);
    assert!(
        (forward - expected).abs() <= 1e-9 * (1.0 + expected.abs()),
        "{name}: forward {forward} vs reference {expected}"
    );
    let grads = tape.backward(loss).unwrap();
    let mut worst = 0.0f64;
    for (i, p) in params.iter().enumerate() {
        let mut shifted = values.clone();
        let numeric: Vec<f64> = (0..p.data.len())
            .map(|j| {
                shifted[i][j] = p.data[j] + H;
                let up = reference(&shifted);
                shifted[i][j] = p.data[j] - H;
                let down = reference(&shifted);
                shifted[i][j] = p.data[j];
                (up - down) / (2.0 * H)
            })
            .collect();
        let analytic = grads.get(i).unwrap().data();
        let diff: Vec<f64> = analytic.iter().zip(&numeric).map(|(a, n)| a - n).collect();
        let scale = norm(analytic).max(norm(&numeric)).max(1e-12);
        let rel = norm(&diff) / scale;
        assert!(rel <= TOL, "{name}: parameter {i} relative error {rel:e}");
        worst = worst.max(rel);
    }
    worst
}

// Reference forwards.

fn conv_ref(x: &[f64], k: &[f64], bias: &[f64], (b, l, cin, width, cout): (usize, usize, usize, usize, usize)) -> Vec<f64> {
    let half = width / 2;
    let mut y = vec![0.0; b * l * cout];
    for s in 0..b {
        for p in 0..l {
            for o in 0..cout {
                let mut acc = bias[o];
                for t in 0..width {
                    let src = p as isize + t as isize - half as isize;
                    if src < 0 || src >= l as isize {
                        continue;
                    }
                    for c in 0..cin {
                        acc += x[(s * l + src as usize) * cin + c] * k[(t * cin + c) * cout + o];
                    }
                }
                y[(s * l + p) * cout + o] = acc;
            }
        }
    }
    y
}

fn dense_ref(x: &[f64], w: &[f64], bias: &[f64], batch: usize, inputs: usize, outputs: usize) -> Vec<f64> {
    let mut y = vec![0.0; batch * outputs];
    for b in 0..batch {
        for o in 0..outputs {
            y[b * outputs + o] = bias[o] + (0..inputs).map(|i| x[b * inputs + i] * w[i * outputs + o]).sum::<f64>();
        }
    }
    y
}

fn smoothed_ce_ref(logits: &[f64], targets: &[usize], eps: f64, width: usize) -> f64 {
    let rows = targets.len();
    let mut total = 0.0;
    for (r, &t) in targets.iter().enumerate() {
        let row = &logits[r * width..(r + 1) * width];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for (s, &v) in row.iter().enumerate() {
            let y = eps / width as f64 + if s == t { 1.0 - eps } else { 0.0 };
            total -= y * (v - lse);
        }
    }
    total / rows as f64
}

fn mmd_ref(a: &[f64], b: &[f64], d: usize, sigma: f64) -> f64 {
    let k = |x: &[f64], y: &[f64]| {
        let sq: f64 = x.iter().zip(y).map(|(u, v)| (u - v) * (u - v)).sum();
        (-sq / (2.0 * sigma * sigma)).exp()
    };
    let mean = |x: &[f64], y: &[f64]| {
        let mut t = 0.0;
        for xi in x.chunks(d) {
            for yj in y.chunks(d) {
                t += k(xi, yj);
            }
        }
        t / ((x.len() / d) * (y.len() / d)) as f64
    };
    mean(a, a) + mean(b, b) - 2.0 * mean(a, b)
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn coeffs(n: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

pub fn conv1d_gradients_match_finite_differences() {
    let mut r = rng(1);
    for case in 0..SHAPES {
        let dims = (
            r.gen_range(1..4),
            r.gen_range(1..9),
            r.gen_range(1..5),
            [1, 3, 5][r.gen_range(0..3)],
            r.gen_range(1..5),
        );
        let (b, l, cin, width, cout) = dims;
        let params = vec![
            random_param(vec![b, l, cin], &mut r),
            random_param(vec![width, cin, cout], &mut r),
            random_param(vec![cout], &mut r),
        ];
        let c = coeffs(b * l * cout, &mut r);
        check(
            &format!("conv1d case {case} {dims:?}"),
            &params,
            |t, ids| {
                let y = t.conv1d(ids[0], ids[1], ids[2]).unwrap();
                project(t, y, &c)
            },
            |v| dot(&conv_ref(&v[0], &v[1], &v[2], dims), &c),
        );
    }
}

pub fn dense_gradients_match_finite_differences() {
    let mut r = rng(2);
    for case in 0..SHAPES {
        let (batch, inputs, outputs) = (r.gen_range(1..5), r.gen_range(1..12), r.gen_range(1..7));
        let params = vec![
            random_param(vec![batch, inputs], &mut r),
            random_param(vec![inputs, outputs], &mut r),
            random_param(vec![outputs], &mut r),
        ];
        let c = coeffs(batch * outputs, &mut r);
        check(
            &format!("dense case {case}"),
            &params,
            |t, ids| {
                let y = t.dense(ids[0], ids[1], ids[2]).unwrap();
                project(t, y, &c)
            },
            |v| dot(&dense_ref(&v[0], &v[1], &v[2], batch, inputs, outputs), &c),
        );
    }
}

pub fn elementwise_gradients_match_finite_differences() {
    let mut r = rng(3);
    for case in 0..SHAPES {
        let shape = vec![r.gen_range(1..4), r.gen_range(1..6), r.gen_range(1..5)];
        let n: usize = shape.iter().product();
        let factor = r.gen_range(-3.0..3.0);
        let params = vec![random_param(shape.clone(), &mut r), random_param(shape.clone(), &mut r)];
        let c = coeffs(n, &mut r);
        check(
            &format!("relu case {case}"),
            &params[..1],
            |t, ids| {
                let y = t.relu(ids[0]).unwrap();
                project(t, y, &c)
            },
            |v| dot(&v[0].iter().map(|x| x.max(0.0)).collect::<Vec<_>>(), &c),
        );
        check(
            &format!("add case {case}"),
            &params,
            |t, ids| {
                let y = t.add(ids[0], ids[1]).unwrap();
                project(t, y, &c)
            },
            |v| dot(&v[0].iter().zip(&v[1]).map(|(a, b)| a + b).collect::<Vec<_>>(), &c),
        );
        check(
            &format!("scale case {case}"),
            &params[..1],
            |t, ids| {
                let y = t.scale(ids[0], factor).unwrap();
                project(t, y, &c)
            },
            |v| factor * dot(&v[0], &c),
        );
        let reshaped = vec![shape[0] * shape[1], shape[2]];
        check(
            &format!("reshape case {case}"),
            &params[..1],
            |t, ids| {
                let y = t.reshape(ids[0], reshaped.clone()).unwrap();
                let y = t.relu(y).unwrap();
                project(t, y, &c)
            },
            |v| dot(&v[0].iter().map(|x| x.max(0.0)).collect::<Vec<_>>(), &c),
        );
    }
}

pub fn softmax_cross_entropy_gradients_match_finite_differences() {
    let mut r = rng(4);
    for case in 0..SHAPES {
        let (rows, width) = (r.gen_range(1..7), r.gen_range(2..9));
        let eps = [0.0, 0.05, 0.3][case % 3];
        let mut logits = random_param(vec![rows, width], &mut r);
        logits.data.iter_mut().for_each(|v| *v *= 4.0);
        let targets: Vec<usize> = (0..rows).map(|_| r.gen_range(0..width)).collect();
        check(
            &format!("softmax-ce case {case}"),
            &[logits],
            |t, ids| t.softmax_cross_entropy(ids[0], &targets, eps).unwrap(),
            |v| smoothed_ce_ref(&v[0], &targets, eps, width),
        );
    }
}

pub fn mmd_gradients_match_finite_differences() {
    let mut r = rng(5);
    for case in 0..SHAPES {
        let (n, m, d) = (r.gen_range(2..7), r.gen_range(2..7), r.gen_range(1..5));
        let sigma = r.gen_range(0.5..2.0);
        let sample = random_param(vec![n, d], &mut r);
        let reference = random_param(vec![m, d], &mut r);
        let reference_data = reference.data.clone();
        let reference_tensor = Tensor::new(vec![m, d], reference.data).unwrap();
        check(
            &format!("mmd case {case}"),
            &[sample],
            |t, ids| t.mmd(ids[0], reference_tensor.clone(), sigma).unwrap(),
            |v| mmd_ref(&v[0], &reference_data, d, sigma),
        );
    }
}

pub fn composite_graph_gradients_match_finite_differences() {
    // conv -> relu -> conv -> residual add -> flatten -> dense -> scale -> CE
    let mut r = rng(6);
    for case in 0..SHAPES {
        let (b, l, ch, classes) = (r.gen_range(1..3), r.gen_range(2..6), r.gen_range(1..4), r.gen_range(2..5));
        // Redraw until no hidden pre-activation sits close to the ReLU kink.
        let params = loop {
            let params = vec![
                random_param(vec![b, l, ch], &mut r),
                random_param(vec![3, ch, ch], &mut r),
                random_param(vec![ch], &mut r),
                random_param(vec![1, ch, ch], &mut r),
                random_param(vec![ch], &mut r),
                random_param(vec![l * ch, classes], &mut r),
                random_param(vec![classes], &mut r),
            ];
            let pre = conv_ref(&params[0].data, &params[1].data, &params[2].data, (b, l, ch, 3, ch));
            if pre.iter().all(|v| v.abs() > 0.05) {
                break params;
            }
        };
        let targets: Vec<usize> = (0..b).map(|_| r.gen_range(0..classes)).collect();
        check(
            &format!("composite case {case}"),
            &params,
            |t, ids| {
                let h = t.conv1d(ids[0], ids[1], ids[2]).unwrap();
                let h = t.relu(h).unwrap();
                let h = t.conv1d(h, ids[3], ids[4]).unwrap();
                let h = t.add(ids[0], h).unwrap();
                let h = t.reshape(h, vec![b, l * ch]).unwrap();
                let h = t.dense(h, ids[5], ids[6]).unwrap();
                let h = t.scale(h, 0.7).unwrap();
                t.softmax_cross_entropy(h, &targets, 0.05).unwrap()
            },
            |v| {
                let h = conv_ref(&v[0], &v[1], &v[2], (b, l, ch, 3, ch));
                let h: Vec<f64> = h.iter().map(|x| x.max(0.0)).collect();
                let h = conv_ref(&h, &v[3], &v[4], (b, l, ch, 1, ch));
                let h: Vec<f64> = v[0].iter().zip(&h).map(|(a, c)| a + c).collect();
                let h = dense_ref(&h, &v[5], &v[6], b, l * ch, classes);
                let h: Vec<f64> = h.iter().map(|x| 0.7 * x).collect();
                smoothed_ce_ref(&h, &targets, 0.05, classes)
            },
        );
    }
}
