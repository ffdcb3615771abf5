//! Forward and backward kernels for the primitives the model uses.
//!
//! Forward kernels take and return [`Tensor`]s; backward kernels take the
//! upstream gradient plus whatever the forward pass saved and accumulate
//! into caller-owned gradient buffers.

use super::{NumericError, Rng, Tensor};

/// Probabilities are clamped to this value inside [`cross_entropy`].
pub const PROB_FLOOR: f64 = 1e-12;

fn shape_err(op: &'static str, expected: impl Into<String>, actual: impl Into<String>) -> NumericError {
    NumericError::Shape { op, expected: expected.into(), actual: actual.into() }
}

/// Valid 1-D convolution over the time axis.
///
/// `input` is `L×d`, `kernels` is `w×d×m`, `bias` is `m`; the result is
/// `(L−w+1)×m` with `out[t][k] = bias[k] + Σ_{a,b} input[t+a][b]·kernels[a][b][k]`.
pub fn conv1d_valid(input: &Tensor, kernels: &Tensor, bias: &Tensor) -> Result<Tensor, NumericError> {
    let (len, dim) = match input.shape() {
        [l, d] => (*l, *d),
        s => return Err(shape_err("conv1d_valid", "input of rank 2 (L×d)", format!("{s:?}"))),
    };
    let (width, kdim, maps) = match kernels.shape() {
        [w, d, m] => (*w, *d, *m),
        s => return Err(shape_err("conv1d_valid", "kernels of rank 3 (w×d×m)", format!("{s:?}"))),
    };
    if kdim != dim {
        return Err(shape_err(
            "conv1d_valid",
            format!("kernel depth d={dim} (input width)"),
            format!("kernel depth d={kdim}"),
        ));
    }
    if bias.shape() != [maps] {
        return Err(shape_err("conv1d_valid", format!("bias of shape [{maps}]"), format!("{:?}", bias.shape())));
    }
    if len < width {
        return Err(NumericError::InputTooShort { len, width });
    }
    let out = conv1d_forward(input.values(), len, dim, kernels.values(), width, maps, bias.values());
    Tensor::new(vec![len - width + 1, maps], out)
}

/// Raw kernel behind [`conv1d_valid`]. Rows of `input` that are entirely
/// zero (padding) contribute nothing and are skipped.
pub(crate) fn conv1d_forward(
    input: &[f64],
    len: usize,
    dim: usize,
    kernels: &[f64],
    width: usize,
    maps: usize,
    bias: &[f64],
) -> Vec<f64> {
    let steps = len - width + 1;
    let live: Vec<bool> = input.chunks(dim).map(|row| row.iter().any(|&v| v != 0.0)).collect();
    let mut out = Vec::with_capacity(steps * maps);
    for _ in 0..steps {
        out.extend_from_slice(bias);
    }
    for t in 0..steps {
        let acc = &mut out[t * maps..(t + 1) * maps];
        for a in 0..width {
            if !live[t + a] {
                continue;
            }
            let row = &input[(t + a) * dim..(t + a + 1) * dim];
            for (b, &x) in row.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                let k = &kernels[(a * dim + b) * maps..(a * dim + b + 1) * maps];
                for (o, &kv) in acc.iter_mut().zip(k) {
                    *o += x * kv;
                }
            }
        }
    }
    out
}

/// Accumulates gradients of [`conv1d_forward`] given `d_out` (`steps×maps`).
#[allow(clippy::too_many_arguments)]
pub(crate) fn conv1d_backward(
    input: &[f64],
    dim: usize,
    kernels: &[f64],
    width: usize,
    maps: usize,
    d_out: &[f64],
    d_input: Option<&mut [f64]>,
    d_kernels: Option<&mut [f64]>,
    d_bias: Option<&mut [f64]>,
) {
    let steps = d_out.len() / maps;
    if let Some(db) = d_bias {
        for row in d_out.chunks(maps) {
            for (g, &d) in db.iter_mut().zip(row) {
                *g += d;
            }
        }
    }
    let live_steps: Vec<usize> = (0..steps).filter(|&t| d_out[t * maps..(t + 1) * maps].iter().any(|&v| v != 0.0)).collect();
    if let Some(dk) = d_kernels {
        for &t in &live_steps {
            let dt = &d_out[t * maps..(t + 1) * maps];
            for a in 0..width {
                let row = &input[(t + a) * dim..(t + a + 1) * dim];
                for (b, &x) in row.iter().enumerate() {
                    if x == 0.0 {
                        continue;
                    }
                    let g = &mut dk[(a * dim + b) * maps..(a * dim + b + 1) * maps];
                    for (gv, &d) in g.iter_mut().zip(dt) {
                        *gv += x * d;
                    }
                }
            }
        }
    }
    if let Some(di) = d_input {
        for &t in &live_steps {
            let dt = &d_out[t * maps..(t + 1) * maps];
            for a in 0..width {
                for b in 0..dim {
                    let k = &kernels[(a * dim + b) * maps..(a * dim + b + 1) * maps];
                    let s: f64 = k.iter().zip(dt).map(|(kv, d)| kv * d).sum();
                    di[(t + a) * dim + b] += s;
                }
            }
        }
    }
}

/// Column-wise maximum over the time axis of a `T×m` tensor. Ties resolve
/// to the earliest row.
pub fn max_over_time(input: &Tensor) -> Result<(Tensor, Vec<usize>), NumericError> {
    let (steps, maps) = match input.shape() {
        [t, m] => (*t, *m),
        s => return Err(shape_err("max_over_time", "input of rank 2 (T×m)", format!("{s:?}"))),
    };
    if steps == 0 {
        return Err(NumericError::EmptyTimeAxis);
    }
    let (out, argmax) = max_over_time_forward(input.values(), steps, maps);
    Ok((Tensor::vector(out), argmax))
}

pub(crate) fn max_over_time_forward(input: &[f64], steps: usize, maps: usize) -> (Vec<f64>, Vec<usize>) {
    let mut out = input[..maps].to_vec();
    let mut argmax = vec![0; maps];
    for t in 1..steps {
        for k in 0..maps {
            let v = input[t * maps + k];
            if v > out[k] {
                out[k] = v;
                argmax[k] = t;
            }
        }
    }
    (out, argmax)
}

pub(crate) fn max_over_time_backward(argmax: &[usize], maps: usize, d_out: &[f64], d_input: &mut [f64]) {
    for (k, (&t, &d)) in argmax.iter().zip(d_out).enumerate() {
        d_input[t * maps + k] += d;
    }
}

pub fn tanh_map(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    out.clear_grad();
    out.values_mut().iter_mut().for_each(|v| *v = v.tanh());
    out
}

/// `d_in += d_out · (1 − out²)`
pub(crate) fn tanh_backward(out: &[f64], d_out: &[f64], d_input: &mut [f64]) {
    for ((g, &y), &d) in d_input.iter_mut().zip(out).zip(d_out) {
        *g += d * (1.0 - y * y);
    }
}

pub fn relu(input: &Tensor) -> Tensor {
    let mut out = input.clone();
    out.clear_grad();
    out.values_mut().iter_mut().for_each(|v| *v = v.max(0.0));
    out
}

pub fn softmax(input: &Tensor) -> Tensor {
    Tensor::vector(softmax_slice(input.values()))
}

/// Max-subtracted softmax.
pub fn softmax_slice(input: &[f64]) -> Vec<f64> {
    let max = input.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = input.iter().map(|&v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// `d_in[i] += out[i] · (d_out[i] − Σ_j d_out[j]·out[j])`
pub(crate) fn softmax_backward(out: &[f64], d_out: &[f64], d_input: &mut [f64]) {
    let dot: f64 = out.iter().zip(d_out).map(|(y, d)| y * d).sum();
    for ((g, &y), &d) in d_input.iter_mut().zip(out).zip(d_out) {
        *g += y * (d - dot);
    }
}

/// `−ln(max(probs[label], PROB_FLOOR))`
pub fn cross_entropy(probs: &Tensor, label: usize) -> Result<f64, NumericError> {
    let classes = probs.len();
    if label >= classes {
        return Err(NumericError::LabelOutOfRange { label, classes });
    }
    Ok(floored_nll(probs.values()[label]))
}

/// `-ln(max(p, floor))`, with NaN propagated rather than floored.
pub(crate) fn floored_nll(p: f64) -> f64 {
    if p.is_nan() {
        p
    } else {
        -p.max(PROB_FLOOR).ln()
    }
}

/// Derivative of [`cross_entropy`] w.r.t. `probs[label]`; zero once the
/// floor is active.
pub(crate) fn cross_entropy_grad(p: f64) -> f64 {
    if p > PROB_FLOOR {
        -1.0 / p
    } else {
        0.0
    }
}

/// Inverted dropout. In training mode each element survives with
/// probability `1 − rate` and is scaled by `1/(1 − rate)`; otherwise the
/// input is returned unchanged.
pub fn dropout(input: &Tensor, rate: f64, rng: &mut Rng, training: bool) -> Result<Tensor, NumericError> {
    let mask = dropout_mask(input.len(), rate, rng, training)?;
    let mut out = input.clone();
    out.clear_grad();
    if let Some(mask) = mask {
        out.values_mut().iter_mut().zip(&mask).for_each(|(v, m)| *v *= m);
    }
    Ok(out)
}

/// Per-element multipliers for inverted dropout, or `None` when dropout is
/// inactive (inference mode or zero rate). Consumes one draw per element
/// only when active.
pub(crate) fn dropout_mask(len: usize, rate: f64, rng: &mut Rng, training: bool) -> Result<Option<Vec<f64>>, NumericError> {
    if !(0.0..1.0).contains(&rate) {
        return Err(NumericError::DropoutRate(rate));
    }
    if !training || rate == 0.0 {
        return Ok(None);
    }
    let scale = 1.0 / (1.0 - rate);
    Ok(Some((0..len).map(|_| if rng.next_f64() < rate { 0.0 } else { scale }).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: &[usize], v: &[f64]) -> Tensor {
        Tensor::new(shape.to_vec(), v.to_vec()).unwrap()
    }

    #[test]
    fn conv_hand_example() {
        let out = conv1d_valid(&t(&[3, 1], &[1.0, 2.0, 3.0]), &t(&[2, 1, 1], &[1.0, 1.0]), &t(&[1], &[0.0])).unwrap();
        assert_eq!(out.shape(), &[2, 1]);
        assert_eq!(out.values(), &[3.0, 5.0]);
    }

    #[test]
    fn conv_zero_kernel() {
        let mut rng = Rng::new(3);
        let input = Tensor::new(vec![6, 3], (0..18).map(|_| rng.uniform(-1.0, 1.0)).collect()).unwrap();
        let out = conv1d_valid(&input, &Tensor::zeros(vec![2, 3, 4]), &Tensor::zeros(vec![4])).unwrap();
        assert!(out.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn conv_errors() {
        let input = Tensor::zeros(vec![2, 3]);
        let err = conv1d_valid(&input, &Tensor::zeros(vec![3, 3, 1]), &Tensor::zeros(vec![1])).unwrap_err();
        assert!(err.to_string().contains("pad"), "{err}");
        let err = conv1d_valid(&input, &Tensor::zeros(vec![2, 4, 1]), &Tensor::zeros(vec![1])).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("d=3") && msg.contains("d=4"), "{msg}");
        assert!(conv1d_valid(&input, &Tensor::zeros(vec![2, 3, 1]), &Tensor::zeros(vec![2])).is_err());
    }

    #[test]
    fn max_pool_examples() {
        let (out, arg) = max_over_time(&t(&[2, 2], &[1.0, 5.0, 3.0, 2.0])).unwrap();
        assert_eq!(out.values(), &[3.0, 5.0]);
        assert_eq!(arg, vec![1, 0]);
        let (out, arg) = max_over_time(&t(&[1, 2], &[7.0, -1.0])).unwrap();
        assert_eq!(out.values(), &[7.0, -1.0]);
        assert_eq!(arg, vec![0, 0]);
        let (_, arg) = max_over_time(&t(&[3, 1], &[2.0, 2.0, 2.0])).unwrap();
        assert_eq!(arg, vec![0]);
    }

    #[test]
    fn max_pool_routes_gradient_to_argmax() {
        let mut d_in = vec![0.0; 4];
        max_over_time_backward(&[1, 0], 2, &[0.5, -2.0], &mut d_in);
        assert_eq!(d_in, vec![0.0, -2.0, 0.5, 0.0]);
    }

    #[test]
    fn tanh_examples() {
        let out = tanh_map(&t(&[3], &[0.0, 50.0, 0.5]));
        assert_eq!(out.values()[0], 0.0);
        assert!((out.values()[1] - 1.0).abs() < 1e-12);
        assert!((out.values()[2] - 0.462_117_157_26).abs() < 1e-11);
        let mut g = vec![0.0; 3];
        tanh_backward(out.values(), &[1.0, 1.0, 1.0], &mut g);
        assert_eq!(g[0], 1.0);
        assert!(g[1].abs() < 1e-12);
    }

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax_slice(&[0.0, 0.0]), vec![0.5, 0.5]);
        let s = softmax_slice(&[1000.0, 0.0]);
        assert!((s[0] - 1.0).abs() < 1e-12 && s[1] < 1e-12);
        let s = softmax_slice(&[1.0, 2.0, 3.0]);
        for (a, b) in s.iter().zip([0.090_030_57, 0.244_728_47, 0.665_240_96]) {
            assert!((a - b).abs() < 1e-8);
        }
    }

    #[test]
    fn cross_entropy_examples() {
        let ln2 = std::f64::consts::LN_2;
        assert!((cross_entropy(&t(&[2], &[0.5, 0.5]), 1).unwrap() - ln2).abs() < 1e-12);
        assert_eq!(cross_entropy(&t(&[2], &[1.0, 0.0]), 0).unwrap(), 0.0);
        assert!((cross_entropy(&t(&[2], &[0.62, 0.38]), 1).unwrap() - 0.967_584_026_261_705_6).abs() < 1e-12);
        let floored = cross_entropy(&t(&[2], &[1.0, 0.0]), 1).unwrap();
        assert!(floored.is_finite() && (floored - 12.0 * std::f64::consts::LN_10).abs() < 1e-9);
        assert!(matches!(
            cross_entropy(&t(&[2], &[0.5, 0.5]), 2),
            Err(NumericError::LabelOutOfRange { label: 2, classes: 2 })
        ));
    }

    #[test]
    fn dropout_modes() {
        let x = t(&[4], &[1.0, 2.0, 3.0, 4.0]);
        let mut rng = Rng::new(1);
        assert_eq!(dropout(&x, 0.0, &mut rng, true).unwrap(), x);
        assert_eq!(dropout(&x, 0.5, &mut rng, false).unwrap(), x);
        assert_eq!(rng.counter(), 0);
        assert!(dropout(&x, 1.0, &mut rng, true).is_err());
        assert!(dropout(&x, -0.1, &mut rng, true).is_err());
    }

    #[test]
    fn dropout_preserves_mean() {
        let n = 100_000;
        let x = Tensor::new(vec![n], vec![1.0; n]).unwrap();
        let out = dropout(&x, 0.5, &mut Rng::new(11), true).unwrap();
        let mean = out.values().iter().sum::<f64>() / n as f64;
        // each element is 0 or 2 with equal odds: σ = 1/√n
        let sigma = 1.0 / (n as f64).sqrt();
        assert!((mean - 1.0).abs() < 3.0 * sigma, "mean {mean}");
        assert!(out.values().iter().all(|&v| v == 0.0 || v == 2.0));
    }

    #[test]
    fn dropout_reproducible() {
        let x = Tensor::new(vec![64], vec![1.0; 64]).unwrap();
        let a = dropout(&x, 0.5, &mut Rng::new(4), true).unwrap();
        let b = dropout(&x, 0.5, &mut Rng::new(4), true).unwrap();
        assert_eq!(a, b);
    }
}
