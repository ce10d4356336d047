use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};

use super::loss::{logit_grad, softmax};
use super::{HeadDims, HeadError, HeadParams, LossKind, LstmParams};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Per-step activations of one direction, in processing order.
#[derive(Debug, Clone)]
struct DirectionTrace {
    /// Row `t` is the input consumed at step `t`.
    inputs: Array2<f64>,
    /// Post-nonlinearity gates `[i, f, g, o]`, one row per step.
    gates: Array2<f64>,
    /// Row 0 is the zero initial state; row `t + 1` follows step `t`.
    cells: Array2<f64>,
    hidden: Array2<f64>,
}

/// Everything [`backward`] needs from a forward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    dims: HeadDims,
    forward: DirectionTrace,
    backward: DirectionTrace,
    /// Concatenated final states `[h_fwd, h_bwd]`.
    pub state: Array1<f64>,
    pub probs: Vec<f64>,
}

impl ForwardCache {
    pub fn dims(&self) -> HeadDims {
        self.dims
    }

    pub fn seq_len(&self) -> usize {
        self.forward.inputs.nrows()
    }
}

fn run_direction(p: &LstmParams, inputs: Array2<f64>, h: usize) -> DirectionTrace {
    let steps = inputs.nrows();
    let mut gates = Array2::zeros((steps, 4 * h));
    let mut cells = Array2::zeros((steps + 1, h));
    let mut hidden = Array2::zeros((steps + 1, h));
    for t in 0..steps {
        let z = inputs.row(t).dot(&p.w_input) + hidden.row(t).dot(&p.w_recurrent) + &p.bias;
        let mut g = gates.row_mut(t);
        for j in 0..h {
            g[j] = sigmoid(z[j]);
            g[h + j] = sigmoid(z[h + j]);
            g[2 * h + j] = z[2 * h + j].tanh();
            g[3 * h + j] = sigmoid(z[3 * h + j]);
        }
        for j in 0..h {
            let c: f64 = g[h + j] * cells[[t, j]] + g[j] * g[2 * h + j];
            cells[[t + 1, j]] = c;
            hidden[[t + 1, j]] = g[3 * h + j] * c.tanh();
        }
    }
    DirectionTrace { inputs, gates, cells, hidden }
}

/// Runs both directions over `seq` (`T x d`, `T >= 1`) and returns the class
/// probabilities with a cache for [`backward`].
pub fn forward(params: &HeadParams, seq: ArrayView2<f64>) -> Result<ForwardCache, HeadError> {
    let dims = params.dims();
    if seq.nrows() == 0 {
        return Err(HeadError::EmptySequence);
    }
    if seq.ncols() != dims.input {
        return Err(HeadError::DimensionMismatch { expected: dims.input, found: seq.ncols() });
    }
    let h = dims.hidden;
    let fwd = run_direction(&params.forward, seq.to_owned(), h);
    let bwd = run_direction(&params.backward, seq.slice(s![..;-1, ..]).to_owned(), h);
    let mut state = Array1::zeros(2 * h);
    state.slice_mut(s![..h]).assign(&fwd.hidden.row(fwd.hidden.nrows() - 1));
    state.slice_mut(s![h..]).assign(&bwd.hidden.row(bwd.hidden.nrows() - 1));
    let logits = state.dot(&params.dense_w) + &params.dense_b;
    let probs = softmax(logits.as_slice().expect("contiguous"));
    Ok(ForwardCache { dims, forward: fwd, backward: bwd, state, probs })
}

fn check_cache(params: &HeadParams, cache: &ForwardCache) -> Result<(), HeadError> {
    let dims = params.dims();
    if cache.dims != dims {
        return Err(HeadError::StaleCache(format!("cache dims {:?}, params dims {:?}", cache.dims, dims)));
    }
    let steps = cache.seq_len();
    for trace in [&cache.forward, &cache.backward] {
        let ok = trace.inputs.nrows() == steps
            && trace.inputs.ncols() == dims.input
            && trace.gates.dim() == (steps, 4 * dims.hidden)
            && trace.cells.dim() == (steps + 1, dims.hidden)
            && trace.hidden.dim() == (steps + 1, dims.hidden);
        if !ok {
            return Err(HeadError::StaleCache("inconsistent trace shapes".into()));
        }
    }
    if cache.probs.len() != dims.classes || cache.state.len() != 2 * dims.hidden {
        return Err(HeadError::StaleCache("inconsistent output shapes".into()));
    }
    Ok(())
}

fn backprop_direction(p: &LstmParams, trace: &DirectionTrace, dh_final: ArrayView1<f64>, grad: &mut LstmParams) {
    let h = dh_final.len();
    let steps = trace.inputs.nrows();
    let mut dh = dh_final.to_owned();
    let mut dc = Array1::<f64>::zeros(h);
    let mut dz = Array1::<f64>::zeros(4 * h);
    for t in (0..steps).rev() {
        let g = trace.gates.row(t);
        let c_prev = trace.cells.row(t);
        let c = trace.cells.row(t + 1);
        for j in 0..h {
            let (i, f, gg, o) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
            let tc = c[j].tanh();
            dc[j] += dh[j] * o * (1.0 - tc * tc);
            dz[j] = dc[j] * gg * i * (1.0 - i);
            dz[h + j] = dc[j] * c_prev[j] * f * (1.0 - f);
            dz[2 * h + j] = dc[j] * i * (1.0 - gg * gg);
            dz[3 * h + j] = dh[j] * tc * o * (1.0 - o);
            dc[j] *= f;
        }
        let x = trace.inputs.row(t).insert_axis(Axis(1));
        let h_prev = trace.hidden.row(t).insert_axis(Axis(1));
        let dz_row = dz.view().insert_axis(Axis(0));
        grad.w_input += &x.dot(&dz_row);
        grad.w_recurrent += &h_prev.dot(&dz_row);
        grad.bias += &dz;
        dh = p.w_recurrent.dot(&dz);
    }
}

/// Adds the gradient of the loss at `label` to `grad`.
pub fn backward_into(
    params: &HeadParams,
    cache: &ForwardCache,
    label: usize,
    kind: LossKind,
    grad: &mut HeadParams,
) -> Result<(), HeadError> {
    check_cache(params, cache)?;
    let dims = params.dims();
    kind.check(dims.classes)?;
    if label >= dims.classes {
        return Err(HeadError::LabelOutOfRange { label, classes: dims.classes });
    }
    if grad.dims() != dims {
        return Err(HeadError::ShapeMismatch);
    }
    let dlogits = Array1::from(logit_grad(&cache.probs, label));
    let state = cache.state.view().insert_axis(Axis(1));
    grad.dense_w += &state.dot(&dlogits.view().insert_axis(Axis(0)));
    grad.dense_b += &dlogits;
    let dstate = params.dense_w.dot(&dlogits);
    let h = dims.hidden;
    backprop_direction(&params.forward, &cache.forward, dstate.slice(s![..h]), &mut grad.forward);
    backprop_direction(&params.backward, &cache.backward, dstate.slice(s![h..]), &mut grad.backward);
    Ok(())
}

/// Gradient of the loss at `label` with respect to every parameter.
pub fn backward(params: &HeadParams, cache: &ForwardCache, label: usize, kind: LossKind) -> Result<HeadParams, HeadError> {
    let mut grad = HeadParams::zeros(params.dims());
    backward_into(params, cache, label, kind, &mut grad)?;
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::head::loss;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_params(dims: HeadDims, rng: &mut ChaCha8Rng) -> HeadParams {
        let mut p = HeadParams::zeros(dims);
        let flat: Vec<f64> = (0..p.num_params()).map(|_| rng.random_range(-0.8..0.8)).collect();
        p.set_flat(&flat).unwrap();
        p
    }

    fn random_seq(t: usize, d: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
        Array2::from_shape_fn((t, d), |_| rng.random_range(-1.0..1.0))
    }

    /// Scalar-loop LSTM, written from the cell equations without ndarray.
    fn reference_probs(p: &HeadParams, seq: &Array2<f64>) -> Vec<f64> {
        let d = p.dims();
        let (din, h) = (d.input, d.hidden);
        let run = |cell: &LstmParams, order: Vec<usize>| -> Vec<f64> {
            let mut hs = vec![0.0; h];
            let mut cs = vec![0.0; h];
            for t in order {
                let mut pre = vec![0.0; 4 * h];
                for (col, z) in pre.iter_mut().enumerate() {
                    *z = cell.bias[col];
                    for r in 0..din {
                        *z += seq[[t, r]] * cell.w_input[[r, col]];
                    }
                    for r in 0..h {
                        *z += hs[r] * cell.w_recurrent[[r, col]];
                    }
                }
                let sig = |x: f64| 1.0 / (1.0 + (-x).exp());
                for j in 0..h {
                    let i = sig(pre[j]);
                    let f = sig(pre[h + j]);
                    let g = pre[2 * h + j].tanh();
                    let o = sig(pre[3 * h + j]);
                    cs[j] = f * cs[j] + i * g;
                    hs[j] = o * cs[j].tanh();
                }
            }
            hs
        };
        let n = seq.nrows();
        let mut state = run(&p.forward, (0..n).collect());
        state.extend(run(&p.backward, (0..n).rev().collect()));
        let logits: Vec<f64> = (0..d.classes)
            .map(|k| p.dense_b[k] + (0..2 * h).map(|r| state[r] * p.dense_w[[r, k]]).sum::<f64>())
            .collect();
        let m = logits.iter().cloned().fold(f64::MIN, f64::max);
        let e: Vec<f64> = logits.iter().map(|z| (z - m).exp()).collect();
        let s: f64 = e.iter().sum();
        e.iter().map(|x| x / s).collect()
    }

    #[test]
    fn zero_params_give_uniform_and_zero_state() {
        let dims = HeadDims { input: 4, hidden: 3, classes: 5 };
        let p = HeadParams::zeros(dims);
        let cache = forward(&p, Array2::<f64>::zeros((2, 4)).view()).unwrap();
        assert!(cache.probs.iter().all(|&x| (x - 0.2).abs() < 1e-15));
        assert!(cache.state.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn matches_scalar_reference() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let dims = HeadDims { input: 8, hidden: 5, classes: 5 };
        for t in [1, 3, 6] {
            let p = random_params(dims, &mut rng);
            let seq = random_seq(t, 8, &mut rng);
            let got = forward(&p, seq.view()).unwrap().probs;
            let want = reference_probs(&p, &seq);
            for (a, b) in got.iter().zip(&want) {
                assert!((a - b).abs() < 1e-12, "{got:?} vs {want:?}");
            }
            assert!((got.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn direction_matters() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dims = HeadDims { input: 3, hidden: 2, classes: 2 };
        let mut p = random_params(dims, &mut rng);
        p.backward = p.forward.clone();
        let seq = random_seq(4, 3, &mut rng);
        let c = forward(&p, seq.view()).unwrap();
        // Same weights both ways: the backward state is the forward state of the reversed input.
        let rev = forward(&p, seq.slice(s![..;-1, ..])).unwrap();
        assert!((c.state[0] - rev.state[2]).abs() < 1e-15);
        assert!((c.state[2] - rev.state[0]).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_input() {
        let p = HeadParams::zeros(HeadDims { input: 4, hidden: 2, classes: 2 });
        assert!(matches!(forward(&p, Array2::zeros((0, 4)).view()), Err(HeadError::EmptySequence)));
        assert!(matches!(
            forward(&p, Array2::zeros((1, 3)).view()),
            Err(HeadError::DimensionMismatch { expected: 4, found: 3 })
        ));
    }

    #[test]
    fn stale_cache_is_rejected() {
        let a = HeadParams::zeros(HeadDims { input: 4, hidden: 2, classes: 2 });
        let b = HeadParams::zeros(HeadDims { input: 4, hidden: 3, classes: 2 });
        let cache = forward(&a, Array2::zeros((1, 4)).view()).unwrap();
        assert!(matches!(backward(&b, &cache, 0, LossKind::Binary), Err(HeadError::StaleCache(_))));
    }

    #[test]
    fn dense_bias_gradient_is_p_minus_onehot() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let dims = HeadDims { input: 8, hidden: 5, classes: 5 };
        let p = random_params(dims, &mut rng);
        let cache = forward(&p, random_seq(3, 8, &mut rng).view()).unwrap();
        let g = backward(&p, &cache, 2, LossKind::Categorical).unwrap();
        for k in 0..5 {
            let want = cache.probs[k] - if k == 2 { 1.0 } else { 0.0 };
            assert!((g.dense_b[k] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn saturated_loss_has_zero_gradient() {
        let dims = HeadDims { input: 2, hidden: 2, classes: 2 };
        let mut p = HeadParams::zeros(dims);
        p.dense_b[1] = 40.0;
        let cache = forward(&p, Array2::ones((2, 2)).view()).unwrap();
        assert_eq!(loss(&cache.probs, 1, LossKind::Binary).unwrap(), 0.0);
        let g = backward(&p, &cache, 1, LossKind::Binary).unwrap();
        assert!(g.to_flat().iter().all(|&x| x == 0.0));
    }

    fn relative_error(a: f64, b: f64) -> f64 {
        (a - b).abs() / a.abs().max(b.abs()).max(1e-7)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let dims = HeadDims { input: 8, hidden: 5, classes: 5 };
        let p = random_params(dims, &mut rng);
        let seq = random_seq(3, 8, &mut rng);
        let label = 4;
        let analytic = backward(&p, &forward(&p, seq.view()).unwrap(), label, LossKind::Categorical)
            .unwrap()
            .to_flat();
        let base = p.to_flat();
        let step = 1e-5;
        let eval = |flat: &[f64]| {
            let mut q = p.clone();
            q.set_flat(flat).unwrap();
            loss(&forward(&q, seq.view()).unwrap().probs, label, LossKind::Categorical).unwrap()
        };
        let mut worst: f64 = 0.0;
        let mut probe = base.clone();
        for i in 0..base.len() {
            probe[i] = base[i] + step;
            let up = eval(&probe);
            probe[i] = base[i] - step;
            let down = eval(&probe);
            probe[i] = base[i];
            worst = worst.max(relative_error(analytic[i], (up - down) / (2.0 * step)));
        }
        assert!(worst < 1e-4, "max relative error {worst}");
    }
}
