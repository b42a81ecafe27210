//! Minimal reverse-mode automatic differentiation over 4-axis tensors.
//!
//! Just the op set the generator, discriminator, expert and losses need:
//! strided convolution (im2col + GEMM), leaky ReLU, instance/batch
//! normalization, 2x max-pooling, 2x bilinear up-sampling, channel
//! concatenation and a handful of element-wise and reduction ops.

mod kernels;
mod tape;
mod tensor;

pub use tape::{Grads, Tape, Var};
pub use tensor::{Real, Tensor};

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(shape: [usize; 4], rng: &mut ChaCha8Rng) -> Tensor<f64> {
        Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
    }

    /// Compares the tape gradient of `f` w.r.t. every input against central
    /// differences.
    fn check(inputs: Vec<Tensor<f64>>, f: impl Fn(&mut Tape<f64>, &[Var]) -> Var) {
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
        let loss = f(&mut tape, &vars);
        let grads = tape.backward(loss);
        let eval = |inputs: &[Tensor<f64>]| {
            let mut t = Tape::new();
            let v: Vec<Var> = inputs.iter().map(|x| t.leaf(x.clone(), false)).collect();
            let l = f(&mut t, &v);
            t.value(l).item()
        };
        let h = 1e-6;
        for (i, input) in inputs.iter().enumerate() {
            let analytic = grads.get(vars[i]).expect("missing gradient");
            for j in 0..input.len() {
                let mut plus = inputs.clone();
                plus[i].data_mut()[j] += h;
                let mut minus = inputs.clone();
                minus[i].data_mut()[j] -= h;
                let numeric = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let a = analytic.data()[j];
                let err = (a - numeric).abs() / (1e-6 + a.abs().max(numeric.abs()));
                assert!(err < 1e-4, "input {i} elem {j}: analytic {a} numeric {numeric}");
            }
        }
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for &(k, s, p) in &[(3, 1, 1), (4, 2, 1), (4, 1, 1), (1, 1, 0)] {
            let x = random([2, 2, 6, 6], &mut rng);
            let w = random([3, 2, k, k], &mut rng);
            let b = random([1, 3, 1, 1], &mut rng);
            let head = random([1, 1, 1, 1], &mut rng);
            check(vec![x, w, b], |t, v| {
                let y = t.conv2d(v[0], v[1], Some(v[2]), s, p);
                let y = t.square(y);
                let _ = &head;
                t.mean(y)
            });
        }
    }

    #[test]
    fn norm_pool_upsample_concat_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let x = random([2, 3, 4, 4], &mut rng);
        let z = random([2, 2, 8, 8], &mut rng);
        let weights = random([2, 5, 8, 8], &mut rng);
        check(vec![x, z], move |t, v| {
            let a = t.leaky_relu(v[0], 0.2);
            let a = t.normalize(a, true, 1e-5);
            let a = t.upsample2x(a);
            let b = t.maxpool2(v[1]);
            let b = t.upsample2x(b);
            let c = t.concat(a, b);
            let c = t.normalize(c, false, 1e-5);
            let wv = t.constant(weights.clone());
            let c = t.mul(c, wv);
            let c = t.tanh(c);
            t.sum(c)
        });
    }

    #[test]
    fn elementwise_and_reduction_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random([3, 2, 2, 2], &mut rng);
        let b = random([3, 2, 2, 2], &mut rng);
        check(vec![a, b], |t, v| {
            let d = t.sub(v[0], v[1]);
            let h = t.affine(d, -1.0, 0.3);
            let h = t.relu(h);
            let h = t.square(h);
            let m = t.mul(v[0], v[1]);
            let m = t.abs(m);
            let s = t.sigmoid(v[1]);
            let g = t.global_avg_pool(s);
            let g = t.slice_batch(g, 1, 2);
            let g = t.mean(g);
            let h = t.mean(h);
            let m = t.mean(m);
            let hm = t.add(h, m);
            t.add(hm, g)
        });
    }

    #[test]
    fn detached_values_block_gradients() {
        let mut tape = Tape::<f64>::new();
        let x = tape.leaf(Tensor::full([1, 1, 2, 2], 0.5), true);
        let y = tape.square(x);
        let yd = tape.detach(y);
        let z = tape.mul(yd, x);
        let l = tape.sum(z);
        let g = tape.backward(l);
        // d/dx (stopgrad(x^2) * x) = x^2
        assert!(g.get(x).unwrap().data().iter().all(|&v| (v - 0.25).abs() < 1e-15));
        assert!(g.get(yd).is_none());
    }
}
