//! Vanilla, LSTM and GRU recurrences with bidirectional wrapping, stacking
//! and backpropagation through time.

mod cell;
mod unroll;

pub use cell::{cell_param_count, Cell, CellKind, GruCache, GruCell, LstmCache, LstmCell, RnnCache, RnnCell, StepCache};
pub use unroll::{
    bidirectional, bptt_backward, stack, unroll, Direction, LayerCache, RecurrentLayer, RecurrentStack, Sequence,
    SequenceBatch, StackCache, UnrollCache,
};

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::{central_difference, compare, STEP, TOLERANCE};
    use crate::module::Module;
    use crate::rng::Rng;
    use crate::tensor::{Activation, Tensor};

    fn random(shape: &[usize], rng: &mut Rng, scale: f64) -> Tensor {
        Tensor::from_fn(shape, |_| rng.uniform_range(-scale, scale))
    }

    fn sig(x: f64) -> f64 {
        1.0 / (1.0 + (-x).exp())
    }

    // Straight-line scalar reimplementations, sharing nothing with the cells.

    fn lstm_oracle(w: &Tensor, b: &Tensor, x: &[f64], h: &[f64], c: &[f64], d: usize) -> (Vec<f64>, Vec<f64>) {
        let xh: Vec<f64> = x.iter().chain(h).copied().collect();
        let k = xh.len();
        let pre = |row: usize| -> f64 {
            let mut s = b.data()[row];
            for col in 0..k {
                s += w.data()[row * k + col] * xh[col];
            }
            s
        };
        let mut h_new = vec![0.0; d];
        let mut c_new = vec![0.0; d];
        for j in 0..d {
            let ig = sig(pre(j));
            let fg = sig(pre(d + j));
            let og = sig(pre(2 * d + j));
            let cand = pre(3 * d + j).tanh();
            c_new[j] = fg * c[j] + ig * cand;
            h_new[j] = og * c_new[j].tanh();
        }
        (h_new, c_new)
    }

    fn gru_oracle(cell: &GruCell, x: &[f64], h: &[f64]) -> Vec<f64> {
        let d = h.len();
        let xh: Vec<f64> = x.iter().chain(h).copied().collect();
        let k = xh.len();
        let mut z = vec![0.0; d];
        let mut r = vec![0.0; d];
        for j in 0..d {
            let mut sz = cell.b_gates.data()[j];
            let mut sr = cell.b_gates.data()[d + j];
            for col in 0..k {
                sz += cell.w_gates.data()[j * k + col] * xh[col];
                sr += cell.w_gates.data()[(d + j) * k + col] * xh[col];
            }
            z[j] = sig(sz);
            r[j] = sig(sr);
        }
        let mut xrh: Vec<f64> = x.to_vec();
        xrh.extend((0..d).map(|j| r[j] * h[j]));
        (0..d)
            .map(|j| {
                let mut s = cell.b_cand.data()[j];
                for col in 0..k {
                    s += cell.w_cand.data()[j * k + col] * xrh[col];
                }
                z[j] * h[j] + (1.0 - z[j]) * s.tanh()
            })
            .collect()
    }

    fn batch(n: usize, t: usize, i: usize, lengths: &[usize], rng: &mut Rng) -> SequenceBatch {
        let mut data = Tensor::zeros(&[n, t, i]);
        for (b, &len) in lengths.iter().enumerate() {
            for s in 0..len {
                for k in 0..i {
                    data.data_mut()[(b * t + s) * i + k] = rng.uniform_range(-1.0, 1.0);
                }
            }
        }
        SequenceBatch::new(data, lengths.to_vec()).unwrap()
    }

    #[test]
    fn vanilla_examples() {
        let cell = RnnCell::zeros(3, 2, Activation::Tanh);
        let x = Tensor::full(&[2, 3], 0.7);
        let h = Tensor::full(&[2, 2], -0.3);
        let (out, _) = cell.forward(&x, &h).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));

        let cell = RnnCell {
            w: Tensor::new(vec![1, 2], vec![1.0, 0.0]).unwrap(),
            b: Tensor::zeros(&[1]),
            activation: Activation::Tanh,
        };
        let (out, _) = cell
            .forward(&Tensor::full(&[1, 1], 0.5), &Tensor::zeros(&[1, 1]))
            .unwrap();
        assert!((out.data()[0] - 0.46211716).abs() < 1e-8);

        let cell = RnnCell {
            w: Tensor::new(vec![1, 2], vec![0.0, 1000.0]).unwrap(),
            b: Tensor::zeros(&[1]),
            activation: Activation::Sigmoid,
        };
        let (out, _) = cell
            .forward(&Tensor::full(&[1, 1], -4.0), &Tensor::full(&[1, 1], 0.1))
            .unwrap();
        assert!(out.data()[0] > 1.0 - 1e-12);
    }

    #[test]
    fn cell_rejects_bad_shapes() {
        let mut rng = Rng::new(1);
        let cell = GruCell::new(3, 2, &mut rng);
        assert!(cell.forward(&Tensor::zeros(&[2, 4]), &Tensor::zeros(&[2, 2])).is_err());
        assert!(cell.forward(&Tensor::zeros(&[2, 3]), &Tensor::zeros(&[3, 2])).is_err());
    }

    #[test]
    fn lstm_gate_extremes() {
        let mut rng = Rng::new(2);
        let (i, d, n) = (3, 4, 5);
        let mut cell = LstmCell::zeros(i, d);
        for j in 0..d {
            cell.b.data_mut()[j] = -50.0; // input gate shut
            cell.b.data_mut()[d + j] = 50.0; // forget gate open
        }
        for _ in 0..20 {
            let x = random(&[n, i], &mut rng, 1.0);
            let h = random(&[n, d], &mut rng, 1.0);
            let c = random(&[n, d], &mut rng, 3.0);
            let (_, c_new, _) = cell.forward(&x, &h, &c).unwrap();
            assert!(c_new.max_abs_diff(&c) <= 1e-10);
        }

        let mut closed = LstmCell::new(i, d, &mut rng);
        for j in 0..d {
            closed.b.data_mut()[2 * d + j] = -50.0;
        }
        closed.w = Tensor::zeros(closed.w.shape());
        let (h_new, _, _) = closed
            .forward(&random(&[n, i], &mut rng, 1.0), &random(&[n, d], &mut rng, 1.0), &random(&[n, d], &mut rng, 1.0))
            .unwrap();
        assert!(h_new.data().iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn lstm_matches_scalar_oracle() {
        let mut rng = Rng::new(7);
        let (n, i, d) = (2, 3, 4);
        let mut cell = LstmCell::new(i, d, &mut rng);
        cell.b = random(&[4 * d], &mut rng, 0.5);
        let x = random(&[n, i], &mut rng, 1.0);
        let h = random(&[n, d], &mut rng, 1.0);
        let c = random(&[n, d], &mut rng, 1.0);
        let (h_new, c_new, _) = cell.forward(&x, &h, &c).unwrap();
        for b in 0..n {
            let (oh, oc) = lstm_oracle(&cell.w, &cell.b, x.row(b), h.row(b), c.row(b), d);
            for j in 0..d {
                assert!((h_new.row(b)[j] - oh[j]).abs() <= 1e-12);
                assert!((c_new.row(b)[j] - oc[j]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn gru_gate_extremes() {
        let mut rng = Rng::new(4);
        let (i, d, n) = (3, 4, 5);
        let mut cell = GruCell::new(i, d, &mut rng);
        for j in 0..d {
            for col in 0..i + d {
                cell.w_gates.data_mut()[j * (i + d) + col] = 0.0;
            }
            cell.b_gates.data_mut()[j] = 50.0;
        }
        for _ in 0..20 {
            let x = random(&[n, i], &mut rng, 1.0);
            let h = random(&[n, d], &mut rng, 1.0);
            let (h_new, _) = cell.forward(&x, &h).unwrap();
            assert!(h_new.max_abs_diff(&h) <= 1e-10);
        }

        // z = 0 and r = 0 reduce the cell to tanh(W_cand·[x; 0] + b_cand).
        let mut cell = GruCell::new(i, d, &mut rng);
        cell.w_gates = Tensor::zeros(cell.w_gates.shape());
        cell.b_gates = Tensor::full(&[2 * d], -50.0);
        let x = random(&[n, i], &mut rng, 1.0);
        let h = random(&[n, d], &mut rng, 1.0);
        let (h_new, _) = cell.forward(&x, &h).unwrap();
        for b in 0..n {
            for j in 0..d {
                let mut s = cell.b_cand.data()[j];
                for k in 0..i {
                    s += cell.w_cand.data()[j * (i + d) + k] * x.row(b)[k];
                }
                assert!((h_new.row(b)[j] - s.tanh()).abs() <= 1e-10);
            }
        }
    }

    #[test]
    fn gru_matches_scalar_oracle() {
        let mut rng = Rng::new(7);
        let (n, i, d) = (2, 3, 4);
        let mut cell = GruCell::new(i, d, &mut rng);
        cell.b_gates = random(&[2 * d], &mut rng, 0.5);
        cell.b_cand = random(&[d], &mut rng, 0.5);
        let x = random(&[n, i], &mut rng, 1.0);
        let h = random(&[n, d], &mut rng, 1.0);
        let (h_new, _) = cell.forward(&x, &h).unwrap();
        for b in 0..n {
            let want = gru_oracle(&cell, x.row(b), h.row(b));
            for j in 0..d {
                assert!((h_new.row(b)[j] - want[j]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn gru_is_three_quarters_of_lstm() {
        for (i, d) in [(1, 1), (3, 4), (150, 300), (600, 300), (18, 32)] {
            let mut rng = Rng::new(0);
            let gru = Cell::new(CellKind::Gru, i, d, &mut rng);
            let lstm = Cell::new(CellKind::Lstm, i, d, &mut rng);
            assert_eq!(gru.num_params() * 4, lstm.num_params() * 3);
            assert_eq!(gru.num_params(), cell_param_count(CellKind::Gru, i, d));
            assert_eq!(lstm.num_params(), cell_param_count(CellKind::Lstm, i, d));
        }
    }

    #[test]
    fn length_one_unroll_is_one_step() {
        let mut rng = Rng::new(5);
        let cell = Cell::new(CellKind::Gru, 2, 3, &mut rng);
        let b = batch(1, 1, 2, &[1], &mut rng);
        let (out, last, _) = unroll(&cell, &b, Direction::Forward).unwrap();
        let Cell::Gru(g) = &cell else { unreachable!() };
        let (once, _) = g.forward(&b.data().clone().reshape(&[1, 2]).unwrap(), &Tensor::zeros(&[1, 3])).unwrap();
        assert_eq!(out.data(), once.data());
        assert_eq!(last, once);
    }

    #[test]
    fn zero_everything_gives_zero_outputs() {
        for kind in [CellKind::Vanilla(Activation::Tanh), CellKind::Lstm, CellKind::Gru] {
            let mut rng = Rng::new(6);
            let cell = Cell::new(kind, 3, 4, &mut rng).zeros_like();
            let b = SequenceBatch::new(Tensor::zeros(&[2, 5, 3]), vec![5, 3]).unwrap();
            let (out, last, _) = unroll(&cell, &b, Direction::Forward).unwrap();
            assert!(out.data().iter().all(|&v| v == 0.0));
            assert!(last.data().iter().all(|&v| v == 0.0));
        }
    }

    fn reverse_per_sample(b: &SequenceBatch) -> SequenceBatch {
        let (n, t, i) = (b.batch_size(), b.steps(), b.width());
        let mut data = Tensor::zeros(&[n, t, i]);
        for s in 0..n {
            let len = b.lengths()[s];
            for step in 0..len {
                let src = (s * t + step) * i;
                let dst = (s * t + (len - 1 - step)) * i;
                data.data_mut()[dst..dst + i].copy_from_slice(&b.data().data()[src..src + i]);
            }
        }
        SequenceBatch::new(data, b.lengths().to_vec()).unwrap()
    }

    #[test]
    fn backward_direction_is_forward_on_reversed_input() {
        for kind in [CellKind::Vanilla(Activation::Tanh), CellKind::Lstm, CellKind::Gru] {
            let mut rng = Rng::new(8);
            let cell = Cell::new(kind, 3, 4, &mut rng);
            let lengths = [6, 2, 4];
            let x = batch(3, 6, 3, &lengths, &mut rng);
            let (bwd, bwd_last, _) = unroll(&cell, &x, Direction::Backward).unwrap();
            let (fwd, fwd_last, _) = unroll(&cell, &reverse_per_sample(&x), Direction::Forward).unwrap();
            assert_eq!(bwd_last, fwd_last);
            for (s, &len) in lengths.iter().enumerate() {
                for step in 0..len {
                    let a = &bwd.data()[(s * 6 + step) * 4..(s * 6 + step + 1) * 4];
                    let b = &fwd.data()[(s * 6 + len - 1 - step) * 4..(s * 6 + len - step) * 4];
                    assert_eq!(a, b);
                }
            }
        }
    }

    #[test]
    fn bidirectional_examples() {
        let mut rng = Rng::new(9);
        let cell = Cell::new(CellKind::Gru, 2, 3, &mut rng);
        // Palindromic sequence of length 5.
        let rows = [[0.1, -0.4], [0.7, 0.2], [-0.3, 0.9], [0.7, 0.2], [0.1, -0.4]];
        let data = Tensor::new(vec![1, 5, 2], rows.iter().flatten().copied().collect()).unwrap();
        let b = SequenceBatch::new(data, vec![5]).unwrap();
        let (out, last) = bidirectional(&cell, &cell, &b).unwrap();
        assert_eq!(out.shape(), &[1, 5, 6]);
        assert_eq!(&last.data()[..3], &last.data()[3..]);

        let zero = cell.zeros_like();
        let (out, _) = bidirectional(&zero, &zero, &b).unwrap();
        assert!(out.data().iter().all(|&v| v == 0.0));

        let other = Cell::new(CellKind::Gru, 2, 4, &mut rng);
        assert!(bidirectional(&cell, &other, &b).is_err());
    }

    #[test]
    fn full_width_bidirectional_stack() {
        let mut rng = Rng::new(10);
        let l1 = RecurrentLayer::new(CellKind::Gru, 150, 300, true, &mut rng);
        let l2 = RecurrentLayer::new(CellKind::Gru, 600, 300, true, &mut rng);
        let s = RecurrentStack::new(vec![l1, l2]).unwrap();
        assert_eq!(s.output_dim(), 600);
        let b = batch(1, 2, 150, &[2], &mut rng);
        let outs = stack(&s, &b).unwrap();
        assert_eq!(outs[1].shape(), &[1, 2, 600]);
        let (_, last, _) = s.run(&Sequence::from_batch_major(b.data(), vec![2])).unwrap();
        assert_eq!(last.shape(), &[1, 600]);
    }

    #[test]
    fn stack_rejects_broken_chain() {
        let mut rng = Rng::new(10);
        let l1 = RecurrentLayer::new(CellKind::Gru, 4, 3, true, &mut rng);
        let l2 = RecurrentLayer::new(CellKind::Gru, 3, 3, false, &mut rng);
        assert!(RecurrentStack::new(vec![l1, l2]).is_err());
    }

    #[test]
    fn single_layer_stack_equals_unroll() {
        let mut rng = Rng::new(11);
        let cell = Cell::new(CellKind::Lstm, 3, 2, &mut rng);
        let s = RecurrentStack::new(vec![RecurrentLayer {
            forward: cell.clone(),
            backward: None,
        }])
        .unwrap();
        let b = batch(2, 4, 3, &[4, 3], &mut rng);
        let outs = stack(&s, &b).unwrap();
        let (direct, _, _) = unroll(&cell, &b, Direction::Forward).unwrap();
        assert_eq!(outs[0], direct);
    }

    #[test]
    fn two_layer_gru_stack_matches_scalar_oracle() {
        let mut rng = Rng::new(12);
        let g1 = GruCell::new(2, 3, &mut rng);
        // Second layer: update gate forced shut (z = 0), so h_t is the candidate.
        let mut g2 = GruCell::new(3, 2, &mut rng);
        for j in 0..2 {
            for col in 0..5 {
                g2.w_gates.data_mut()[j * 5 + col] = 0.0;
            }
            g2.b_gates.data_mut()[j] = -50.0;
        }
        let s = RecurrentStack::new(vec![
            RecurrentLayer {
                forward: Cell::Gru(g1.clone()),
                backward: None,
            },
            RecurrentLayer {
                forward: Cell::Gru(g2.clone()),
                backward: None,
            },
        ])
        .unwrap();
        let b = batch(1, 3, 2, &[3], &mut rng);
        let outs = stack(&s, &b).unwrap();

        let mut h1 = vec![0.0; 3];
        let mut h2 = vec![0.0; 2];
        for t in 0..3 {
            let x = &b.data().data()[t * 2..t * 2 + 2];
            h1 = gru_oracle(&g1, x, &h1);
            h2 = gru_oracle(&g2, &h1, &h2);
            for j in 0..2 {
                assert!((outs[1].data()[t * 2 + j] - h2[j]).abs() <= 1e-12);
            }
        }
    }

    /// Projection loss `Σ r ⊙ outputs` over the top layer's sequence.
    fn stack_loss(s: &RecurrentStack, b: &SequenceBatch, proj: &Tensor) -> f64 {
        let outs = stack(s, b).unwrap();
        outs.last().unwrap().data().iter().zip(proj.data()).map(|(a, r)| a * r).sum()
    }

    fn check_stack(s: &RecurrentStack, b: &SequenceBatch, rng: &mut Rng) {
        let (n, t) = (b.batch_size(), b.steps());
        let proj = random(&[n, t, s.output_dim()], rng, 1.0);
        let seq = Sequence::from_batch_major(b.data(), b.lengths().to_vec());
        let (_, _, cache) = s.run(&seq).unwrap();
        let grad_top = Sequence::from_batch_major(&proj, b.lengths().to_vec()).steps;
        let (grads, gx) = s.backprop(&cache, grad_top).unwrap();

        let mut probe = s.clone();
        let flat: Vec<Vec<f64>> = s.params().iter().map(|(_, t)| t.data().to_vec()).collect();
        for (p, (name, g)) in grads.params().iter().enumerate() {
            let numeric = central_difference(&flat[p], STEP, |v| {
                probe.params_mut()[p].data_mut().copy_from_slice(v);
                stack_loss(&probe, b, &proj)
            });
            probe.params_mut()[p].data_mut().copy_from_slice(&flat[p]);
            let out = compare("stack", name, "", g.data(), &numeric, TOLERANCE);
            assert!(out.passed, "{out:?}");
        }

        let gx = Sequence {
            steps: gx,
            lengths: b.lengths().to_vec(),
        }
        .to_batch_major();
        let numeric = central_difference(b.data().data(), STEP, |v| {
            // Perturbing padded entries would violate the batch invariant; those
            // gradients must be zero, which the analytic side is checked for below.
            let data = Tensor::new(b.data().shape().to_vec(), v.to_vec()).unwrap();
            let seq = Sequence::from_batch_major(&data, b.lengths().to_vec());
            let (outs, _, _) = s.run(&seq).unwrap();
            outs.last().unwrap().to_batch_major().data().iter().zip(proj.data()).map(|(a, r)| a * r).sum()
        });
        let out = compare("stack", "input", "", gx.data(), &numeric, TOLERANCE);
        assert!(out.passed, "{out:?}");
        let (n_, t_, i_) = (b.batch_size(), b.steps(), b.width());
        for s_ in 0..n_ {
            for step in b.lengths()[s_]..t_ {
                let row = &gx.data()[(s_ * t_ + step) * i_..(s_ * t_ + step + 1) * i_];
                assert!(row.iter().all(|&v| v == 0.0));
            }
        }
        let _ = n;
    }

    #[test]
    fn bptt_matches_finite_differences() {
        let mut rng = Rng::new(13);
        for kind in [
            CellKind::Vanilla(Activation::Tanh),
            CellKind::Vanilla(Activation::Sigmoid),
            CellKind::Lstm,
            CellKind::Gru,
        ] {
            for _ in 0..3 {
                let n = 1 + rng.below(3);
                let t = 1 + rng.below(5);
                let i = 1 + rng.below(4);
                let d = 1 + rng.below(4);
                let lengths: Vec<usize> = (0..n).map(|_| 1 + rng.below(t)).collect();
                let b = batch(n, t, i, &lengths, &mut rng);
                let bidir = rng.bernoulli(0.5);
                let l1 = RecurrentLayer::new(kind, i, d, bidir, &mut rng);
                let l2 = RecurrentLayer::new(kind, l1.output_dim(), d, false, &mut rng);
                check_stack(&RecurrentStack::new(vec![l1.clone()]).unwrap(), &b, &mut rng);
                check_stack(&RecurrentStack::new(vec![l1, l2]).unwrap(), &b, &mut rng);
            }
        }
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let mut rng = Rng::new(14);
        let cell = Cell::new(CellKind::Lstm, 3, 4, &mut rng);
        let b = batch(2, 5, 3, &[5, 2], &mut rng);
        let (_, _, cache) = unroll(&cell, &b, Direction::Forward).unwrap();
        let (grads, gx) = bptt_backward(&cell, &cache, &Tensor::zeros(&[2, 5, 4])).unwrap();
        assert!(grads.params().iter().all(|(_, t)| t.data().iter().all(|&v| v == 0.0)));
        assert!(gx.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn saturated_update_gate_never_uses_candidate() {
        let mut rng = Rng::new(15);
        let (i, d) = (3, 4);
        let mut g = GruCell::new(i, d, &mut rng);
        for j in 0..d {
            for col in 0..i + d {
                g.w_gates.data_mut()[j * (i + d) + col] = 0.0;
            }
            g.b_gates.data_mut()[j] = 50.0;
        }
        let cell = Cell::Gru(g);
        let b = batch(2, 5, i, &[5, 3], &mut rng);
        let (_, _, cache) = unroll(&cell, &b, Direction::Forward).unwrap();
        let grad_out = random(&[2, 5, d], &mut rng, 1.0);
        let (grads, _) = bptt_backward(&cell, &cache, &grad_out).unwrap();
        let Cell::Gru(g) = grads else { unreachable!() };
        // (1 − z) underflows to exactly zero in double precision at a bias of 50.
        assert!(g.w_cand.data().iter().all(|v| v.abs() < 1e-20));
        assert!(g.b_cand.data().iter().all(|v| v.abs() < 1e-20));
    }

    #[test]
    fn padding_changes_nothing() {
        for kind in [CellKind::Vanilla(Activation::Tanh), CellKind::Lstm, CellKind::Gru] {
            let mut rng = Rng::new(16);
            let l1 = RecurrentLayer::new(kind, 3, 4, true, &mut rng);
            let l2 = RecurrentLayer::new(kind, 8, 4, true, &mut rng);
            let s = RecurrentStack::new(vec![l1, l2]).unwrap();
            let short = batch(2, 4, 3, &[4, 2], &mut rng);
            // Same data padded out to 9 steps.
            let mut long = Tensor::zeros(&[2, 9, 3]);
            for b in 0..2 {
                for step in 0..4 {
                    for k in 0..3 {
                        long.data_mut()[(b * 9 + step) * 3 + k] = short.data().data()[(b * 4 + step) * 3 + k];
                    }
                }
            }
            let long = SequenceBatch::new(long, vec![4, 2]).unwrap();

            let (_, last_s, cache_s) = s.run(&short.to_sequence()).unwrap();
            let (_, last_l, cache_l) = s.run(&long.to_sequence()).unwrap();
            assert_eq!(last_s, last_l);

            let g = random(&[2, 8], &mut rng, 1.0);
            let (grads_s, gx_s) = s.backprop_last(&cache_s, &g).unwrap();
            let (grads_l, gx_l) = s.backprop_last(&cache_l, &g).unwrap();
            assert_eq!(grads_s, grads_l);
            for t in 0..4 {
                assert_eq!(gx_s[t], gx_l[t]);
            }
            for gx in &gx_l[4..] {
                assert!(gx.data().iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn batch_rejects_nonzero_padding_and_bad_lengths() {
        let mut data = Tensor::zeros(&[1, 3, 1]);
        data.data_mut()[2] = 1.0;
        assert!(SequenceBatch::new(data.clone(), vec![2]).is_err());
        assert!(SequenceBatch::new(data.clone(), vec![3]).is_ok());
        assert!(SequenceBatch::new(data.clone(), vec![0]).is_err());
        assert!(SequenceBatch::new(data, vec![4]).is_err());
    }
}
