use alloc::format;

use crate::error::{Error, Result};
use crate::nd::Tensor;

/// Plain SGD, `p ← p − lr·g`, over every trainable tensor.
///
/// All gradients are checked before any parameter moves, so a non-finite
/// gradient leaves the parameters untouched.
pub fn sgd_step(params: &mut [&mut Tensor], lr: f64) -> Result<()> {
    sgd_step_scaled(params, lr, &[])
}

/// [`sgd_step`] where parameter `i` uses `lr · scales[i]` (missing scales are 1).
pub fn sgd_step_scaled(params: &mut [&mut Tensor], lr: f64, scales: &[f64]) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::config(format!("learning rate must be positive, got {lr}")));
    }
    if let Some(s) = scales.iter().find(|s| !(**s >= 0.0 && s.is_finite())) {
        return Err(Error::config(format!("learning-rate scale must be finite and ≥ 0, got {s}")));
    }
    for (i, p) in params.iter().enumerate() {
        if let Some(g) = p.grad() {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of parameter {i}")));
            }
        }
    }
    for (i, p) in params.iter_mut().enumerate() {
        let step = lr * scales.get(i).copied().unwrap_or(1.0);
        let Some(g) = p.grad().map(<[f64]>::to_vec) else { continue };
        for (w, gv) in p.data_mut().iter_mut().zip(g) {
            *w -= step * gv;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nd::Graph;
    use alloc::vec;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut p = Tensor::parameter(&[2], vec![1.0, -1.0]).unwrap();
        sgd_step(&mut [&mut p], 0.5).unwrap();
        assert_eq!(p.data(), &[1.0, -1.0]);
    }

    #[test]
    fn quadratic_converges() {
        // f(w) = (w − 3)², minimum at 3.
        let mut w = Tensor::parameter(&[1], vec![-5.0]).unwrap();
        for _ in 0..200 {
            let mut g = Graph::new();
            let n = g.leaf(&w);
            let f = g.sum_sq_diff(n, &Tensor::scalar(3.0)).unwrap();
            let grads = g.backward(f).unwrap();
            w.zero_grad();
            w.accumulate_grad(grads.get(n).unwrap()).unwrap();
            sgd_step(&mut [&mut w], 0.1).unwrap();
        }
        assert!((w.data()[0] - 3.0).abs() < 1e-12);
    }

    #[test]
    fn two_half_steps_equal_one_full_step() {
        let mut a = Tensor::parameter(&[3], vec![0.5, 1.0, -2.0]).unwrap();
        a.accumulate_grad(&[0.25, -1.0, 4.0]).unwrap();
        let mut b = a.clone();
        sgd_step(&mut [&mut a], 0.5).unwrap();
        sgd_step(&mut [&mut a], 0.5).unwrap();
        sgd_step(&mut [&mut b], 1.0).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn non_finite_gradient_aborts_without_update() {
        let mut a = Tensor::parameter(&[2], vec![1.0, 2.0]).unwrap();
        let mut b = Tensor::parameter(&[1], vec![3.0]).unwrap();
        a.accumulate_grad(&[1.0, 1.0]).unwrap();
        b.accumulate_grad(&[f64::NAN]).unwrap();
        assert!(matches!(sgd_step(&mut [&mut a, &mut b], 0.1), Err(Error::NonFinite(_))));
        assert_eq!(a.data(), &[1.0, 2.0]);
        assert!(sgd_step(&mut [&mut a], 0.0).is_err());
    }

    #[test]
    fn scaled_step_uses_per_parameter_rate() {
        let mut a = Tensor::parameter(&[1], vec![1.0]).unwrap();
        let mut b = Tensor::parameter(&[1], vec![1.0]).unwrap();
        a.accumulate_grad(&[1.0]).unwrap();
        b.accumulate_grad(&[1.0]).unwrap();
        sgd_step_scaled(&mut [&mut a, &mut b], 0.5, &[1.0, 4.0]).unwrap();
        assert_eq!((a.data()[0], b.data()[0]), (0.5, -1.0));
        assert!(sgd_step_scaled(&mut [&mut a], 0.5, &[f64::NAN]).is_err());
    }
}
