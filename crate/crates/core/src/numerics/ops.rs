//! Forward kernels and their hand-written adjoints.
//!
//! The public functions operate on whole tensors and validate shapes; the
//! `pub(crate)` helpers are shared with the tape so forward values recorded
//! during training come from exactly the same code paths.

use super::tensor::{matmul_into, Real, Tensor};
use crate::error::{Error, Result};

/// Floor applied inside logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct ConvDims {
    pub batch: usize,
    pub len: usize,
    pub cin: usize,
    pub width: usize,
    pub cout: usize,
}

pub(crate) fn conv_dims(input: &[usize], kernel: &[usize], bias: &[usize]) -> Result<ConvDims> {
    let (batch, len, cin) = match *input {
        [l, c] => (1, l, c),
        [b, l, c] => (b, l, c),
        _ => {
            return Err(Error::shape(
                "conv1d_same",
                format!("input must be [L, Cin] or [B, L, Cin], got {:?}", input),
            ))
        }
    };
    let [width, kcin, cout] = *kernel else {
        return Err(Error::shape(
            "conv1d_same",
            format!("kernel must be [K, Cin, Cout], got {:?}", kernel),
        ));
    };
    if width % 2 == 0 {
        return Err(Error::shape(
            "conv1d_same",
            format!("kernel width {width} must be odd for same padding"),
        ));
    }
    if kcin != cin {
        return Err(Error::shape(
            "conv1d_same",
            format!("input has {cin} channels, kernel expects {kcin}"),
        ));
    }
    if bias != [cout] {
        return Err(Error::shape(
            "conv1d_same",
            format!("bias must be [{cout}], got {:?}", bias),
        ));
    }
    Ok(ConvDims {
        batch,
        len,
        cin,
        width,
        cout,
    })
}

/// Unfolds `[B, L, Cin]` into `[B*L, K*Cin]` rows with zero padding.
pub(crate) fn im2col<T: Real>(input: &[T], d: ConvDims) -> Vec<T> {
    let row = d.width * d.cin;
    let half = d.width / 2;
    let mut cols = vec![T::zero(); d.batch * d.len * row];
    for b in 0..d.batch {
        let sample = &input[b * d.len * d.cin..(b + 1) * d.len * d.cin];
        for pos in 0..d.len {
            let dst = &mut cols[(b * d.len + pos) * row..(b * d.len + pos + 1) * row];
            for tap in 0..d.width {
                let src = pos + tap;
                if src < half || src - half >= d.len {
                    continue;
                }
                let src = src - half;
                dst[tap * d.cin..(tap + 1) * d.cin]
                    .copy_from_slice(&sample[src * d.cin..(src + 1) * d.cin]);
            }
        }
    }
    cols
}

/// Adjoint of [`im2col`]: scatter-adds column gradients back onto the input.
pub(crate) fn col2im_add<T: Real>(dcols: &[T], d: ConvDims, dinput: &mut [T]) {
    let row = d.width * d.cin;
    let half = d.width / 2;
    for b in 0..d.batch {
        for pos in 0..d.len {
            let src_row = &dcols[(b * d.len + pos) * row..(b * d.len + pos + 1) * row];
            for tap in 0..d.width {
                let src = pos + tap;
                if src < half || src - half >= d.len {
                    continue;
                }
                let at = (b * d.len + src - half) * d.cin;
                for (acc, &g) in dinput[at..at + d.cin]
                    .iter_mut()
                    .zip(&src_row[tap * d.cin..(tap + 1) * d.cin])
                {
                    *acc = *acc + g;
                }
            }
        }
    }
}

pub(crate) fn conv_forward<T: Real>(
    input: &[T],
    kernel: &[T],
    bias: &[T],
    d: ConvDims,
) -> (Vec<T>, Vec<T>) {
    let cols = im2col(input, d);
    let rows = d.batch * d.len;
    let mut out = Vec::with_capacity(rows * d.cout);
    for _ in 0..rows {
        out.extend_from_slice(bias);
    }
    matmul_into(&cols, false, kernel, false, rows, d.width * d.cin, d.cout, &mut out, true);
    (out, cols)
}

/// Returns `(d_input, d_kernel, d_bias)`.
pub(crate) fn conv_backward<T: Real>(
    dout: &[T],
    cols: &[T],
    kernel: &[T],
    d: ConvDims,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let rows = d.batch * d.len;
    let kc = d.width * d.cin;
    let mut dkernel = vec![T::zero(); kc * d.cout];
    matmul_into(cols, true, dout, false, kc, rows, d.cout, &mut dkernel, false);
    let mut dbias = vec![T::zero(); d.cout];
    for row in dout.chunks_exact(d.cout) {
        for (acc, &g) in dbias.iter_mut().zip(row) {
            *acc = *acc + g;
        }
    }
    let mut dcols = vec![T::zero(); rows * kc];
    matmul_into(dout, false, kernel, true, rows, d.cout, kc, &mut dcols, false);
    let mut dinput = vec![T::zero(); rows * d.cin];
    col2im_add(&dcols, d, &mut dinput);
    (dinput, dkernel, dbias)
}

/// Zero-padded, stride-1, same-length 1-D cross-correlation.
///
/// Accepts `[L, Cin]` or batched `[B, L, Cin]` input; the kernel is laid out
/// `[K, Cin, Cout]`.
pub fn conv1d_same<T: Real>(
    input: &Tensor<T>,
    kernel: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let d = conv_dims(input.shape(), kernel.shape(), bias.shape())?;
    let (out, _) = conv_forward(input.data(), kernel.data(), bias.data(), d);
    let mut shape = input.shape().to_vec();
    *shape.last_mut().unwrap() = d.cout;
    Tensor::new(shape, out)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub(crate) struct DenseDims {
    pub batch: usize,
    pub inputs: usize,
    pub outputs: usize,
}

pub(crate) fn dense_dims(input: &[usize], weights: &[usize], bias: &[usize]) -> Result<DenseDims> {
    let (batch, inputs) = match *input {
        [n] => (1, n),
        [b, n] => (b, n),
        _ => {
            return Err(Error::shape(
                "dense",
                format!("input must be [N] or [B, N], got {:?}", input),
            ))
        }
    };
    let [wn, outputs] = *weights else {
        return Err(Error::shape(
            "dense",
            format!("weights must be [N, M], got {:?}", weights),
        ));
    };
    if wn != inputs {
        return Err(Error::shape(
            "dense",
            format!("input width {inputs} does not match weight rows {wn}"),
        ));
    }
    if bias != [outputs] {
        return Err(Error::shape(
            "dense",
            format!("bias must be [{outputs}], got {:?}", bias),
        ));
    }
    Ok(DenseDims {
        batch,
        inputs,
        outputs,
    })
}

pub(crate) fn dense_forward<T: Real>(input: &[T], weights: &[T], bias: &[T], d: DenseDims) -> Vec<T> {
    let mut out = Vec::with_capacity(d.batch * d.outputs);
    for _ in 0..d.batch {
        out.extend_from_slice(bias);
    }
    matmul_into(input, false, weights, false, d.batch, d.inputs, d.outputs, &mut out, true);
    out
}

/// Returns `(d_input, d_weights, d_bias)`.
pub(crate) fn dense_backward<T: Real>(
    dout: &[T],
    input: &[T],
    weights: &[T],
    d: DenseDims,
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let mut dweights = vec![T::zero(); d.inputs * d.outputs];
    matmul_into(input, true, dout, false, d.inputs, d.batch, d.outputs, &mut dweights, false);
    let mut dbias = vec![T::zero(); d.outputs];
    for row in dout.chunks_exact(d.outputs) {
        for (acc, &g) in dbias.iter_mut().zip(row) {
            *acc = *acc + g;
        }
    }
    let mut dinput = vec![T::zero(); d.batch * d.inputs];
    matmul_into(dout, false, weights, true, d.batch, d.outputs, d.inputs, &mut dinput, false);
    (dinput, dweights, dbias)
}

/// Affine map `input · weights + bias` for `[N]` or batched `[B, N]` input.
pub fn dense<T: Real>(input: &Tensor<T>, weights: &Tensor<T>, bias: &Tensor<T>) -> Result<Tensor<T>> {
    let d = dense_dims(input.shape(), weights.shape(), bias.shape())?;
    let out = dense_forward(input.data(), weights.data(), bias.data(), d);
    let shape = if input.shape().len() == 1 {
        vec![d.outputs]
    } else {
        vec![d.batch, d.outputs]
    };
    Tensor::new(shape, out)
}

pub(crate) fn softmax_slice<T: Real>(row: &[T], out: &mut [T]) {
    let max = row.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
    let mut sum = 0.0f64;
    for (o, &v) in out.iter_mut().zip(row) {
        let e = (v - max).exp();
        *o = e;
        sum += e.as_f64();
    }
    let inv = T::from_f64(1.0 / sum);
    for o in out.iter_mut() {
        *o = *o * inv;
    }
}

/// Softmax over the last axis, overflow-safe by max subtraction.
pub fn softmax_rows<T: Real>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let width = *logits
        .shape()
        .last()
        .ok_or_else(|| Error::shape("softmax_rows", "tensor has no axes"))?;
    if width == 0 {
        return Err(Error::shape("softmax_rows", "rows are empty"));
    }
    if !logits.all_finite() {
        return Err(Error::NonFinite("softmax_rows input".into()));
    }
    let mut out = vec![T::zero(); logits.len()];
    for (row, dst) in logits.data().chunks_exact(width).zip(out.chunks_exact_mut(width)) {
        softmax_slice(row, dst);
    }
    Tensor::new(logits.shape().to_vec(), out)
}

/// Outcome of [`smoothed_cross_entropy`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrossEntropy {
    pub loss: f64,
    /// Number of (row, symbol) terms whose probability hit [`PROB_FLOOR`].
    pub clamped: usize,
}

pub(crate) fn check_smoothing(epsilon: f64) -> Result<()> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::invalid(format!(
            "label smoothing epsilon must lie in [0, 1), got {epsilon}"
        )));
    }
    Ok(())
}

/// Smoothed target weight for `symbol` given the true `target`.
#[inline]
pub(crate) fn smoothed_target(symbol: usize, target: usize, epsilon: f64, width: usize) -> f64 {
    let base = epsilon / width as f64;
    if symbol == target {
        1.0 - epsilon + base
    } else {
        base
    }
}

/// Mean over rows of `-Σ_s y_s ln p_s` with `y = (1-ε)·onehot + ε/A`.
pub fn smoothed_cross_entropy<T: Real>(
    predicted: &Tensor<T>,
    targets: &[usize],
    epsilon: f64,
) -> Result<CrossEntropy> {
    check_smoothing(epsilon)?;
    let width = *predicted
        .shape()
        .last()
        .ok_or_else(|| Error::shape("smoothed_cross_entropy", "tensor has no axes"))?;
    let rows = predicted.len() / width.max(1);
    if rows != targets.len() {
        return Err(Error::shape(
            "smoothed_cross_entropy",
            format!("{rows} rows but {} targets", targets.len()),
        ));
    }
    if rows == 0 {
        return Err(Error::shape("smoothed_cross_entropy", "no rows"));
    }
    let mut total = 0.0;
    let mut clamped = 0;
    for (row, &target) in predicted.data().chunks_exact(width).zip(targets) {
        if target >= width {
            return Err(Error::invalid(format!(
                "target index {target} outside {width} classes"
            )));
        }
        for (s, &p) in row.iter().enumerate() {
            let y = smoothed_target(s, target, epsilon, width);
            if y == 0.0 {
                continue;
            }
            let p = p.as_f64();
            let p = if p < PROB_FLOOR {
                clamped += 1;
                PROB_FLOOR
            } else {
                p
            };
            total -= y * p.ln();
        }
    }
    Ok(CrossEntropy {
        loss: total / rows as f64,
        clamped,
    })
}

fn sample_dims<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<(usize, usize, usize)> {
    let (&[n, d], &[m, d2]) = (a.shape(), b.shape()) else {
        return Err(Error::shape(
            "mmd_sq",
            format!("samples must be [n, d], got {:?} and {:?}", a.shape(), b.shape()),
        ));
    };
    if d != d2 {
        return Err(Error::shape(
            "mmd_sq",
            format!("sample dimensions differ: {d} vs {d2}"),
        ));
    }
    if n == 0 || m == 0 {
        return Err(Error::invalid("mmd_sq needs non-empty samples"));
    }
    Ok((n, m, d))
}

#[inline]
fn sq_dist<T: Real>(x: &[T], y: &[T]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(&a, &b)| {
            let t = a.as_f64() - b.as_f64();
            t * t
        })
        .sum()
}

fn mean_kernel<T: Real>(x: &[T], y: &[T], d: usize, gamma: f64) -> f64 {
    let mut total = 0.0;
    let (n, m) = (x.len() / d, y.len() / d);
    for xi in x.chunks_exact(d) {
        for yj in y.chunks_exact(d) {
            total += (-gamma * sq_dist(xi, yj)).exp();
        }
    }
    total / (n * m) as f64
}

/// Biased (V-statistic) squared maximum mean discrepancy with a Gaussian
/// kernel `exp(-|x-y|² / 2σ²)`.
pub fn mmd_sq<T: Real>(a: &Tensor<T>, b: &Tensor<T>, bandwidth: f64) -> Result<f64> {
    let (_, _, d) = sample_dims(a, b)?;
    if !(bandwidth > 0.0 && bandwidth.is_finite()) {
        return Err(Error::invalid(format!("bandwidth must be positive, got {bandwidth}")));
    }
    let gamma = 0.5 / (bandwidth * bandwidth);
    let value = mean_kernel(a.data(), a.data(), d, gamma) + mean_kernel(b.data(), b.data(), d, gamma)
        - 2.0 * mean_kernel(a.data(), b.data(), d, gamma);
    // The V-statistic is a squared RKHS norm; only rounding can push it below zero.
    Ok(value.max(0.0))
}

/// Gradient of [`mmd_sq`] with respect to the first sample.
pub(crate) fn mmd_sq_grad_a<T: Real>(a: &[T], b: &[T], d: usize, bandwidth: f64) -> Vec<f64> {
    let (n, m) = (a.len() / d, b.len() / d);
    let inv_var = 1.0 / (bandwidth * bandwidth);
    let gamma = 0.5 * inv_var;
    let mut grad = vec![0.0; n * d];
    let self_scale = 2.0 / (n * n) as f64;
    let cross_scale = 2.0 / (n * m) as f64;
    for (p, xp) in a.chunks_exact(d).enumerate() {
        let g = &mut grad[p * d..(p + 1) * d];
        for xj in a.chunks_exact(d) {
            let k = (-gamma * sq_dist(xp, xj)).exp();
            for ((gv, &u), &v) in g.iter_mut().zip(xp).zip(xj) {
                *gv -= self_scale * k * (u.as_f64() - v.as_f64()) * inv_var;
            }
        }
        for yj in b.chunks_exact(d) {
            let k = (-gamma * sq_dist(xp, yj)).exp();
            for ((gv, &u), &v) in g.iter_mut().zip(xp).zip(yj) {
                *gv += cross_scale * k * (u.as_f64() - v.as_f64()) * inv_var;
            }
        }
    }
    grad
}

/// Median pairwise Euclidean distance over the pooled samples.
pub fn median_bandwidth<T: Real>(a: &Tensor<T>, b: &Tensor<T>) -> Result<f64> {
    let (_, _, d) = sample_dims(a, b)?;
    let pooled: Vec<&[T]> = a.data().chunks_exact(d).chain(b.data().chunks_exact(d)).collect();
    let mut dists = Vec::with_capacity(pooled.len() * (pooled.len() - 1) / 2);
    for i in 0..pooled.len() {
        for j in i + 1..pooled.len() {
            dists.push(sq_dist(pooled[i], pooled[j]).sqrt());
        }
    }
    if dists.is_empty() {
        return Ok(1.0);
    }
    let mid = dists.len() / 2;
    let (_, median, _) = dists.select_nth_unstable_by(mid, f64::total_cmp);
    let median = *median;
    Ok(if median > 0.0 { median } else { 1.0 })
}
