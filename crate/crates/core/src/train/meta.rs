//! The first-order meta-gradient of one SUML outer step.

use crate::error::Result;
use crate::optim::{sgd_step, SgdConfig};

#[derive(Debug, Clone, PartialEq)]
pub struct MetaStep {
    /// Gradient of the meta-test loss at the adapted parameters.
    pub meta_grad: Vec<f64>,
    pub meta_loss: f64,
    pub inner_losses: Vec<f64>,
    /// The adapted parameters. Only returned for inspection: the outer
    /// update is applied to the starting point, never to these.
    pub adapted: Vec<f64>,
}

/// Runs `k` plain SGD steps from `theta0` and returns the meta-test
/// gradient at the last iterate.
///
/// `inner(i, theta)` yields the loss and gradient of the `i`-th sampled
/// training batch at `theta`; `meta(theta)` does the same for the sampled
/// meta-test batch. No derivative flows back through the inner steps.
pub fn first_order_meta_gradient<I, M>(
    theta0: &[f64],
    inner_lr: f64,
    k: usize,
    mut inner: I,
    meta: M,
) -> Result<MetaStep>
where
    I: FnMut(usize, &[f64]) -> Result<(f64, Vec<f64>)>,
    M: FnOnce(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let mut theta = theta0.to_vec();
    let mut inner_losses = Vec::with_capacity(k);
    let cfg = SgdConfig {
        learning_rate: inner_lr,
    };
    for i in 0..k {
        let (loss, grad) = inner(i, &theta)?;
        inner_losses.push(loss);
        sgd_step(&mut theta, &grad, cfg)?;
    }
    let (meta_loss, meta_grad) = meta(&theta)?;
    Ok(MetaStep {
        meta_grad,
        meta_loss,
        inner_losses,
        adapted: theta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    // L_tr = (θ - 1)^2, L_te = (θ - 2)^2, θ = 0, α = 0.1, outer SGD with β = 0.1.
    fn quadratic(k: usize) -> (MetaStep, f64) {
        let quad = |c: f64| move |t: &[f64]| -> Result<(f64, Vec<f64>)> { Ok(((t[0] - c).powi(2), vec![2.0 * (t[0] - c)])) };
        let tr = quad(1.0);
        let step = first_order_meta_gradient(&[0.0], 0.1, k, |_, t| tr(t), quad(2.0)).unwrap();
        let mut theta = [0.0];
        sgd_step(&mut theta, &step.meta_grad, SgdConfig { learning_rate: 0.1 }).unwrap();
        (step, theta[0])
    }

    #[test]
    fn closed_form_one_inner_step() {
        let (s, outer) = quadratic(1);
        assert!((s.adapted[0] - 0.2).abs() <= 1e-10);
        assert!((s.meta_grad[0] + 3.6).abs() <= 1e-10);
        assert!((outer - 0.36).abs() <= 1e-10);
    }

    #[test]
    fn closed_form_two_inner_steps() {
        let (s, outer) = quadratic(2);
        assert!((s.adapted[0] - 0.36).abs() <= 1e-10);
        assert!((s.meta_grad[0] + 3.28).abs() <= 1e-10);
        assert!((outer - 0.328).abs() <= 1e-10);
    }

    #[test]
    fn zero_inner_rate_degenerates_to_the_plain_gradient() {
        let g = |t: &[f64]| -> Result<(f64, Vec<f64>)> { Ok((t[0] * t[0], vec![2.0 * t[0]])) };
        let s = first_order_meta_gradient(&[1.5], 0.0, 4, |_, t| g(t), g).unwrap();
        assert_eq!(s.meta_grad, vec![3.0]);
        assert_eq!(s.adapted, vec![1.5]);
    }
}
