//! Minimal dense-network machinery: tensors, layers with hand-written
//! reverse-mode gradients, mean-square loss and Adam.

mod adam;
mod layer;
mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use layer::{backward, forward, predict, Activation, DenseLayer, LayerCache, LayerGrads};
pub use tensor::Tensor2;

use crate::error::{shape_err, Result};

/// Mean over all entries of the squared difference, with its gradient
/// `2 (pred - target) / N`.
pub fn mse_loss(pred: &Tensor2, target: &Tensor2) -> Result<(f64, Tensor2)> {
    if pred.shape() != target.shape() {
        return Err(shape_err!("prediction {:?} vs target {:?}", pred.shape(), target.shape()));
    }
    let n = pred.data().len().max(1) as f64;
    let diff = pred.zip_with(target, |p, t| p - t)?;
    let loss = diff.data().iter().map(|d| d * d).sum::<f64>() / n;
    Ok((loss, diff.map(|d| 2.0 * d / n)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn row(v: &[f64]) -> Tensor2 {
        Tensor2::from_vec(1, v.len(), v.to_vec()).unwrap()
    }

    #[test]
    fn mse_examples() {
        assert_eq!(mse_loss(&row(&[1., 2.]), &row(&[1., 2.])).unwrap().0, 0.0);
        assert_eq!(mse_loss(&row(&[2., 3., 4.]), &row(&[1., 2., 3.])).unwrap().0, 1.0);
        let (l, g) = mse_loss(&row(&[0., 2.]), &row(&[0., 0.])).unwrap();
        assert_eq!(l, 2.0);
        assert_eq!(g.data(), &[0.0, 2.0]);
        assert!(mse_loss(&row(&[0.]), &row(&[0., 0.])).is_err());
    }

    proptest! {
        #[test]
        fn mse_non_negative_and_zero_iff_equal(
            p in proptest::collection::vec(-1e3f64..1e3, 1..20),
            shift in -10.0f64..10.0,
        ) {
            let t: Vec<f64> = p.iter().map(|v| v + shift).collect();
            let (l, _) = mse_loss(&row(&p), &row(&t)).unwrap();
            prop_assert!(l >= 0.0);
            prop_assert_eq!(l == 0.0, p == t);
        }
    }
}
