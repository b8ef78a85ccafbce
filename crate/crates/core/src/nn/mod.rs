//! Parameterized layers and the parameter store they live in.

mod layers;
mod lstm;
mod params;
mod session;

pub use layers::{dropout, uniform_init, BatchNorm, Component, HiddenLayer, Linear, Mlp};
pub use lstm::{lstm_cell_step, LstmLayer, LstmOutput, LstmStack, LstmState, SeqBatch};
pub use params::{ManifestEntry, ParamStore};
pub use session::{Gradients, Mode, Session};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{finite_difference_at, relative_error, sigmoid, ParamId, Tensor, Var};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    fn random_tensor(rng: &mut ChaCha8Rng, shape: &[usize], scale: f64) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
    }

    /// Checks every listed parameter against central differences of `loss_fn`.
    fn check_params(
        store: &ParamStore,
        ids: &[ParamId],
        mode: Mode,
        loss_fn: &dyn Fn(&mut Session) -> Var,
    ) {
        let mut s = Session::with_recording(store, mode, 5, true);
        let loss = loss_fn(&mut s);
        let grads = s.backward(loss).unwrap();
        for &id in ids {
            let n = store.get(id).numel();
            let picks: Vec<usize> = (0..n).step_by((n / 6).max(1)).collect();
            let numeric = finite_difference_at(
                |probe| {
                    let mut st = store.clone();
                    st.set(id, probe.clone())?;
                    let mut s = Session::with_recording(&st, mode, 5, true);
                    let l = loss_fn(&mut s);
                    Ok(s.value(l).item())
                },
                store.get(id),
                1e-5,
                &picks,
            )
            .unwrap();
            for (&i, n) in picks.iter().zip(numeric) {
                let a = grads.get(id).data()[i];
                assert!(relative_error(a, n, 1e-7) <= 1e-4, "{}[{i}]: {a} vs {n}", store.name(id));
            }
        }
    }

    fn sum_sq(s: &mut Session, y: Var) -> Var {
        let sq = s.graph.mul(y, y).unwrap();
        s.graph.sum_all(sq).unwrap()
    }

    #[test]
    fn linear_parameter_count() {
        let mut store = ParamStore::new();
        let lin = Linear::new(&mut store, "head", 128, 1, &mut rng(0));
        assert_eq!(lin.count_params(&store), 129);
    }

    #[test]
    fn lstm_parameter_counts_use_double_bias() {
        let mut store = ParamStore::new();
        let stack = LstmStack::new(&mut store, "s2", 25, 128, 2, &mut rng(0));
        let expected = 4 * 128 * (25 + 128) + 1024 + 4 * 128 * (128 + 128) + 1024;
        assert_eq!(expected, 211_456);
        assert_eq!(stack.count_params(&store), expected);
    }

    #[test]
    fn zero_lstm_gives_zero_state() {
        let mut store = ParamStore::new();
        let layer = LstmLayer::new(&mut store, "l", 3, 4, &mut rng(0));
        for id in layer.params() {
            let shape = store.get(id).shape().to_vec();
            store.set(id, Tensor::zeros(&shape)).unwrap();
        }
        let mut s = Session::new(&store, Mode::Eval, 0);
        let x = s.constant(Tensor::matrix(1, 3, vec![0.3, -1.0, 2.0]).unwrap());
        let h0 = s.constant(Tensor::zeros(&[1, 4]));
        let (h, c) = lstm_cell_step(&mut s, &layer, x, h0, h0).unwrap();
        assert!(s.value(h).data().iter().all(|&v| v == 0.0));
        assert!(s.value(c).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_gates_carry_memory() {
        let hidden = 3;
        let mut store = ParamStore::new();
        let layer = LstmLayer::new(&mut store, "l", 2, hidden, &mut rng(1));
        let mut bias = vec![0.0; 4 * hidden];
        bias[..hidden].iter_mut().for_each(|v| *v = -50.0);
        bias[hidden..2 * hidden].iter_mut().for_each(|v| *v = 50.0);
        store.set(layer.b_ih, Tensor::vector(bias)).unwrap();
        let mut s = Session::new(&store, Mode::Eval, 0);
        let x = s.constant(Tensor::matrix(1, 2, vec![0.1, -0.2]).unwrap());
        let h0 = s.constant(Tensor::matrix(1, hidden, vec![0.1, 0.2, 0.3]).unwrap());
        let c_prev = vec![0.7, -0.4, 1.3];
        let c0 = s.constant(Tensor::matrix(1, hidden, c_prev.clone()).unwrap());
        let (_, c) = lstm_cell_step(&mut s, &layer, x, h0, c0).unwrap();
        for (a, b) in s.value(c).data().iter().zip(&c_prev) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn cell_step_matches_scalar_oracle() {
        let (din, hid) = (3, 4);
        let mut store = ParamStore::new();
        let mut r = rng(2);
        let layer = LstmLayer::new(&mut store, "l", din, hid, &mut r);
        store.set(layer.b_ih, random_tensor(&mut r, &[4 * hid], 0.5)).unwrap();
        store.set(layer.b_hh, random_tensor(&mut r, &[4 * hid], 0.5)).unwrap();
        let x = random_tensor(&mut r, &[1, din], 1.0);
        let h0 = random_tensor(&mut r, &[1, hid], 1.0);
        let c0 = random_tensor(&mut r, &[1, hid], 1.0);

        // scalar loop over gates
        let (wi, wh) = (store.get(layer.w_ih), store.get(layer.w_hh));
        let (bi, bh) = (store.get(layer.b_ih).data(), store.get(layer.b_hh).data());
        let pre = |gate: usize, j: usize| -> f64 {
            let col = gate * hid + j;
            let mut acc = bi[col] + bh[col];
            for k in 0..din {
                acc += x.data()[k] * wi.at2(k, col);
            }
            for k in 0..hid {
                acc += h0.data()[k] * wh.at2(k, col);
            }
            acc
        };
        let mut h_ref = vec![0.0; hid];
        let mut c_ref = vec![0.0; hid];
        for j in 0..hid {
            let i = sigmoid(pre(0, j));
            let f = sigmoid(pre(1, j));
            let g = pre(2, j).tanh();
            let o = sigmoid(pre(3, j));
            c_ref[j] = f * c0.data()[j] + i * g;
            h_ref[j] = o * c_ref[j].tanh();
        }

        let mut s = Session::new(&store, Mode::Eval, 0);
        let (xv, hv, cv) = (s.constant(x.clone()), s.constant(h0.clone()), s.constant(c0.clone()));
        let (h, c) = lstm_cell_step(&mut s, &layer, xv, hv, cv).unwrap();
        for j in 0..hid {
            assert!((s.value(h).data()[j] - h_ref[j]).abs() < 1e-12);
            assert!((s.value(c).data()[j] - c_ref[j]).abs() < 1e-12);
        }
    }

    fn seq(x: Vec<Vec<f64>>, valid: Vec<bool>, feat: usize) -> SeqBatch {
        let t = x.len();
        let data = x.into_iter().flatten().collect();
        SeqBatch::new(Tensor::new(vec![t, 1, feat], data).unwrap(), valid).unwrap()
    }

    #[test]
    fn single_step_stack_equals_cell_step() {
        let mut store = ParamStore::new();
        let mut r = rng(3);
        let stack = LstmStack::new(&mut store, "s", 2, 5, 1, &mut r);
        store.set(stack.layers[0].b_hh, random_tensor(&mut r, &[20], 0.5)).unwrap();
        let mut s = Session::new(&store, Mode::Eval, 0);
        let out = stack.forward(&mut s, &seq(vec![vec![0.4, -0.3]], vec![true], 2)).unwrap();
        let x = s.constant(Tensor::matrix(1, 2, vec![0.4, -0.3]).unwrap());
        let z = s.constant(Tensor::zeros(&[1, 5]));
        let (h, _) = lstm_cell_step(&mut s, &stack.layers[0], x, z, z).unwrap();
        assert_eq!(s.value(out.last), s.value(h));
    }

    #[test]
    fn padding_is_inert_and_matches_truncation() {
        let mut store = ParamStore::new();
        let mut r = rng(4);
        let stack = LstmStack::new(&mut store, "s", 3, 6, 2, &mut r);
        let steps: Vec<Vec<f64>> = (0..5).map(|_| random_tensor(&mut r, &[3], 1.0).into_data()).collect();
        let last_of = |b: &SeqBatch| {
            let mut s = Session::new(&store, Mode::Eval, 0);
            let out = stack.forward(&mut s, b).unwrap();
            s.value(out.last).clone()
        };
        let truncated = last_of(&seq(steps.clone(), vec![true; 5], 3));
        let mut padded = steps.clone();
        padded.extend(std::iter::repeat_n(vec![-1.0; 3], 4));
        let mut valid = vec![true; 5];
        valid.extend([false; 4]);
        assert_eq!(last_of(&seq(padded, valid, 3)), truncated);

        // leading and interleaved masked steps are skipped as well
        let mut inter = vec![vec![-1.0; 3]];
        inter.extend(steps[..2].iter().cloned());
        inter.push(vec![-1.0; 3]);
        inter.extend(steps[2..].iter().cloned());
        let valid = vec![false, true, true, false, true, true, true];
        assert_eq!(last_of(&seq(inter, valid, 3)), truncated);
    }

    #[test]
    fn mixed_batch_rows_match_single_runs() {
        let mut store = ParamStore::new();
        let mut r = rng(5);
        let stack = LstmStack::new(&mut store, "s", 2, 4, 2, &mut r);
        let a: Vec<Vec<f64>> = (0..4).map(|_| random_tensor(&mut r, &[2], 1.0).into_data()).collect();
        let b: Vec<Vec<f64>> = (0..2).map(|_| random_tensor(&mut r, &[2], 1.0).into_data()).collect();
        let run = |batch: &SeqBatch| {
            let mut s = Session::new(&store, Mode::Eval, 0);
            let out = stack.forward(&mut s, batch).unwrap();
            s.value(out.last).clone()
        };
        let single_a = run(&seq(a.clone(), vec![true; 4], 2));
        let single_b = run(&seq(b.clone(), vec![true; 2], 2));
        let mut data = Vec::new();
        let mut mask = Vec::new();
        for t in 0..4 {
            data.extend(&a[t]);
            data.extend(b.get(t).cloned().unwrap_or(vec![-1.0, -1.0]));
            mask.extend([true, t < 2]);
        }
        let both = run(&SeqBatch::new(Tensor::new(vec![4, 2, 2], data).unwrap(), mask).unwrap());
        for j in 0..4 {
            assert!((both.at2(0, j) - single_a.data()[j]).abs() < 1e-12);
            assert!((both.at2(1, j) - single_b.data()[j]).abs() < 1e-12);
        }
    }

    #[test]
    fn all_masked_sequence_is_rejected() {
        let mut store = ParamStore::new();
        let stack = LstmStack::new(&mut store, "s", 2, 3, 1, &mut rng(0));
        let mut s = Session::new(&store, Mode::Eval, 0);
        let b = seq(vec![vec![-1.0, -1.0]; 3], vec![false; 3], 2);
        assert!(matches!(stack.forward(&mut s, &b), Err(crate::Error::EmptySequence)));
    }

    #[test]
    fn lstm_stack_gradients_match_finite_differences() {
        let mut store = ParamStore::new();
        let mut r = rng(6);
        let stack = LstmStack::new(&mut store, "s", 3, 4, 2, &mut r);
        for l in &stack.layers {
            store.set(l.b_hh, random_tensor(&mut r, &[16], 0.5)).unwrap();
        }
        let x = random_tensor(&mut r, &[4, 2, 3], 2.0);
        let batch = SeqBatch::new(x, vec![true, true, true, true, true, false, false, true]).unwrap();
        let ids = stack.params();
        check_params(&store, &ids, Mode::Train, &|s| {
            let out = stack.forward(s, &batch).unwrap();
            sum_sq(s, out.last)
        });
    }

    #[test]
    fn batch_norm_train_statistics() {
        let mut store = ParamStore::new();
        let bn = BatchNorm::new(&mut store, "bn", 3);
        store.set(bn.gamma, Tensor::vector(vec![2.0, 0.5, 1.5])).unwrap();
        store.set(bn.beta, Tensor::vector(vec![-1.0, 0.25, 3.0])).unwrap();
        let x = random_tensor(&mut rng(7), &[64, 3], 50.0);
        let mut s = Session::new(&store, Mode::Train, 0);
        let xv = s.constant(x);
        let y = bn.forward(&mut s, xv).unwrap();
        let y = s.value(y);
        let gamma = [2.0, 0.5, 1.5];
        let beta = [-1.0, 0.25, 3.0];
        for f in 0..3 {
            let col: Vec<f64> = (0..64).map(|i| y.at2(i, f)).collect();
            let mean = col.iter().sum::<f64>() / 64.0;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 64.0;
            assert!((mean - beta[f]).abs() < 1e-6);
            assert!((var - gamma[f] * gamma[f]).abs() < 1e-6);
        }
        assert_eq!(s.take_stat_updates().len(), 2);
    }

    #[test]
    fn batch_norm_eval_uses_running_stats_only() {
        let mut store = ParamStore::new();
        let bn = BatchNorm::new(&mut store, "bn", 2);
        store.set(bn.running_mean, Tensor::vector(vec![1.0, -1.0])).unwrap();
        store.set(bn.running_var, Tensor::vector(vec![4.0, 1.0])).unwrap();
        let mut s = Session::new(&store, Mode::Eval, 0);
        let xv = s.constant(Tensor::matrix(1, 2, vec![3.0, -1.0]).unwrap());
        let y = bn.forward(&mut s, xv).unwrap();
        let expected = [2.0 / (4.0f64 + 1e-5).sqrt(), 0.0];
        for (a, b) in s.value(y).data().iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(s.take_stat_updates().is_empty());
        assert_eq!(bn.count_params(&store), 4);
    }

    #[test]
    fn mlp_with_bn_gradients_match_finite_differences() {
        let mut store = ParamStore::new();
        let mut r = rng(8);
        let mlp = Mlp::new(&mut store, "m", &[3, 5, 2], true, 0.3, &mut r);
        let x = random_tensor(&mut r, &[6, 3], 2.0);
        let ids = mlp.params();
        let trainable: Vec<ParamId> = ids.into_iter().filter(|id| store.is_trainable(*id)).collect();
        check_params(&store, &trainable, Mode::Train, &|s| {
            let xv = s.constant(x.clone());
            let y = mlp.forward(s, xv).unwrap();
            sum_sq(s, y)
        });
    }

    #[test]
    fn mlp_without_regularization_composes_linear_maps() {
        let mut store = ParamStore::new();
        let mlp = Mlp::new(&mut store, "m", &[2, 2, 1], false, 0.0, &mut rng(0));
        let h = &mlp.hidden[0].linear;
        store.set(h.weight, Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap()).unwrap();
        store.set(mlp.output.weight, Tensor::matrix(2, 1, vec![2.0, 3.0]).unwrap()).unwrap();
        store.set(mlp.output.bias, Tensor::vector(vec![0.5])).unwrap();
        let mut s = Session::new(&store, Mode::Train, 0);
        let xv = s.constant(Tensor::matrix(2, 2, vec![1.0, -4.0, -1.0, 2.0]).unwrap());
        let y = mlp.forward(&mut s, xv).unwrap();
        // relu([1,-4]) = [1,0] -> 2.5 ; relu([-1,2]) = [0,2] -> 6.5
        assert_eq!(s.value(y).data(), &[2.5, 6.5]);
    }

    #[test]
    fn eval_mode_is_deterministic() {
        let mut store = ParamStore::new();
        let mut r = rng(9);
        let mlp = Mlp::new(&mut store, "m", &[4, 8, 1], true, 0.5, &mut r);
        let x = random_tensor(&mut r, &[3, 4], 1.0);
        let run = |seed| {
            let mut s = Session::new(&store, Mode::Eval, seed);
            let xv = s.constant(x.clone());
            let y = mlp.forward(&mut s, xv).unwrap();
            s.value(y).clone()
        };
        assert_eq!(run(1), run(2));
    }

    #[test]
    fn dropout_keep_rate() {
        let store = ParamStore::new();
        let mut s = Session::new(&store, Mode::Train, 11);
        let x = s.constant(Tensor::full(&[100_000], 1.0));
        let y = dropout(&mut s, x, 0.3).unwrap();
        let kept = s.value(y).data().iter().filter(|&&v| v != 0.0).count() as f64 / 1e5;
        assert!((kept - 0.7).abs() < 0.01, "keep rate {kept}");
        let scaled = s.value(y).data().iter().find(|&&v| v != 0.0).unwrap();
        assert!((scaled - 1.0 / 0.7).abs() < 1e-12);
        assert!(dropout(&mut s, x, 1.0).is_err());
    }
}
