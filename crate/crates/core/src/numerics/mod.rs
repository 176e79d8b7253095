//! Differentiable tensor substrate.

mod gradcheck;
mod graph;
mod tensor;

pub use gradcheck::{
    analytic_grads, evaluate, gradient_check, numeric_grads, relative_error, DEFAULT_STEP,
};
pub use graph::{sigmoid, Graph, Mode, Var};
pub use tensor::Tensor;

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    fn eval1(input: Tensor, f: impl Fn(&mut Graph<'_>, Var) -> crate::Result<Var>) -> Tensor {
        let params = vec![input];
        let mut g = Graph::new(&params);
        let x = g.param(0);
        let y = f(&mut g, x).unwrap();
        g.value(y).clone()
    }

    #[test]
    fn softmax_uniform() {
        let y = eval1(Tensor::vector(vec![0.0; 3]).unwrap(), |g, x| g.softmax(x, 0));
        for v in y.data() {
            assert!((v - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    #[test]
    fn softmax_is_stable_for_large_logits() {
        let y = eval1(Tensor::vector(vec![1000.0, 0.0]).unwrap(), |g, x| g.softmax(x, 0));
        assert!((y.data()[0] - 1.0).abs() < 1e-12);
        assert!(y.data()[1] < 1e-300 || y.data()[1] == 0.0);
    }

    #[test]
    fn softmax_over_inner_axis() {
        let t = Tensor::new(vec![2, 3, 2], (0..12).map(|v| v as f64 * 0.7).collect()).unwrap();
        let y = eval1(t, |g, x| g.softmax(x, 1));
        for o in 0..2 {
            for i in 0..2 {
                let s: f64 = (0..3).map(|j| y.data()[o * 6 + j * 2 + i]).sum();
                assert!((s - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn layer_norm_constant_row_is_zero() {
        let params = vec![
            Tensor::vector(vec![2.5; 4]).unwrap(),
            Tensor::full(&[4], 1.0),
            Tensor::zeros(&[4]),
        ];
        let mut g = Graph::new(&params);
        let y = g.layer_norm(g.param(0), g.param(1), g.param(2), 1e-5).unwrap();
        assert!(g.value(y).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn layer_norm_two_points() {
        let params = vec![
            Tensor::vector(vec![1.0, 3.0]).unwrap(),
            Tensor::full(&[2], 1.0),
            Tensor::zeros(&[2]),
        ];
        let mut g = Graph::new(&params);
        let y = g.layer_norm(g.param(0), g.param(1), g.param(2), 1e-5).unwrap();
        // mean 2, biased variance 1: (x - 2) / sqrt(1 + eps)
        let expected = 1.0 / (1.0f64 + 1e-5).sqrt();
        assert!((g.value(y).data()[0] + expected).abs() < 1e-15);
        assert!((g.value(y).data()[1] - expected).abs() < 1e-15);
    }

    #[test]
    fn dropout_eval_is_identity_and_train_rescales() {
        let params = vec![Tensor::full(&[1000], 1.0)];
        let mut g = Graph::new(&params);
        let x = g.param(0);
        let same = g.dropout(x, 0.5, &mut Mode::eval()).unwrap();
        assert_eq!(same, x);

        let mut rng = seeded(7);
        let y = g.dropout(x, 0.5, &mut Mode::train(&mut rng)).unwrap();
        let vals = g.value(y).data();
        assert!(vals.iter().all(|&v| v == 0.0 || v == 2.0));
        let kept = vals.iter().filter(|&&v| v > 0.0).count();
        assert!((400..600).contains(&kept), "{kept}");
    }

    #[test]
    fn dropout_rejects_bad_rate() {
        let params = vec![Tensor::full(&[3], 1.0)];
        let mut g = Graph::new(&params);
        let x = g.param(0);
        assert!(g.dropout(x, 1.0, &mut Mode::eval()).is_err());
    }

    #[test]
    fn backward_requires_scalar() {
        let params = vec![Tensor::full(&[3], 1.0)];
        let mut g = Graph::new(&params);
        let x = g.param(0);
        assert!(g.backward(x).is_err());
    }
}
