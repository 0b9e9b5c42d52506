//! Adam optimiser with bias correction.

use crate::error::{Error, Result};
use crate::nn::mat::{Mat, Scalar};
use crate::nn::params::ParamSet;

/// First- and second-moment state aligned with a [`ParamSet`].
#[derive(Debug, Clone)]
pub struct AdamState<F> {
    m: Vec<Mat<F>>,
    v: Vec<Mat<F>>,
    step: u64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl<F: Scalar> AdamState<F> {
    /// Fresh zero-moment state for `params` with the conventional
    /// `beta1 = 0.9`, `beta2 = 0.999`, `eps = 1e-8`.
    pub fn new(params: &ParamSet<F>) -> Self {
        AdamState {
            m: params.iter().map(|(_, p)| Mat::zeros(p.rows(), p.cols())).collect(),
            v: params.iter().map(|(_, p)| Mat::zeros(p.rows(), p.cols())).collect(),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update. Gradients are given per parameter in set order;
    /// `None` means no path reached the parameter this step and is treated
    /// as a zero gradient so the moment decay stays uniform.
    pub fn step(
        &mut self,
        params: &mut ParamSet<F>,
        grads: &[Option<Mat<F>>],
        lr: f64,
    ) -> Result<()> {
        if grads.len() != params.len() || self.m.len() != params.len() {
            return Err(Error::Contract(format!(
                "optimiser state for {} parameters applied to {} gradients",
                self.m.len(),
                grads.len()
            )));
        }
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (F::from_f64(self.beta1), F::from_f64(self.beta2));
        let nb1 = F::from_f64(1.0 - self.beta1);
        let nb2 = F::from_f64(1.0 - self.beta2);
        let eps = F::from_f64(self.eps);
        let scale = F::from_f64(lr / bc1);
        let inv_sqrt_bc2 = F::from_f64(1.0 / bc2.sqrt());

        for idx in 0..params.len() {
            let p = params.mat_mut(idx);
            let m = &mut self.m[idx];
            let v = &mut self.v[idx];
            if let Some(g) = &grads[idx] {
                if g.shape() != p.shape() {
                    return Err(Error::shape(
                        "adam_step",
                        format!("gradient {:?} for parameter {:?}", g.shape(), p.shape()),
                    ));
                }
                for i in 0..g.data().len() {
                    let gi = g.data()[i];
                    m.data_mut()[i] = b1 * m.data()[i] + nb1 * gi;
                    v.data_mut()[i] = b2 * v.data()[i] + nb2 * gi * gi;
                }
            } else {
                for i in 0..m.data().len() {
                    m.data_mut()[i] = b1 * m.data()[i];
                    v.data_mut()[i] = b2 * v.data()[i];
                }
            }
            for i in 0..p.data().len() {
                let vhat_sqrt = (v.data()[i] * inv_sqrt_bc2 * inv_sqrt_bc2).sqrt();
                p.data_mut()[i] = p.data()[i] - scale * m.data()[i] / (vhat_sqrt + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    /// Independent scalar recurrence of the textbook update rule.
    fn reference_adam(g: &[f64], lr: f64) -> f64 {
        let (b1, b2, eps) = (0.9, 0.999, 1e-8);
        let (mut p, mut m, mut v) = (0.0_f64, 0.0_f64, 0.0_f64);
        for (t, &gt) in g.iter().enumerate() {
            m = b1 * m + (1.0 - b1) * gt;
            v = b2 * v + (1.0 - b2) * gt * gt;
            let mh = m / (1.0 - b1.powi(t as i32 + 1));
            let vh = v / (1.0 - b2.powi(t as i32 + 1));
            p -= lr * mh / (vh.sqrt() + eps);
        }
        p
    }

    #[test]
    fn first_step_matches_hand_value() {
        let mut params = ParamSet::<f64>::new();
        params.insert("p", Mat::zeros(1, 1)).unwrap();
        let mut adam = AdamState::new(&params);
        adam.step(&mut params, &[Some(Mat::from_vec(1, 1, vec![1.0]).unwrap())], 0.1).unwrap();
        // Bias-corrected first step: -lr * g / (|g| + eps).
        assert_abs_diff_eq!(params.get("p").unwrap().get(0, 0), -0.0999999990, epsilon = 1e-12);
    }

    #[test]
    fn multi_step_matches_scalar_recurrence() {
        let gs = [1.0, -2.0, 0.5, 0.1, -0.7, 3.0];
        let mut params = ParamSet::<f64>::new();
        params.insert("p", Mat::zeros(1, 1)).unwrap();
        let mut adam = AdamState::new(&params);
        for &g in &gs {
            adam.step(&mut params, &[Some(Mat::from_vec(1, 1, vec![g]).unwrap())], 0.05).unwrap();
        }
        assert_abs_diff_eq!(
            params.get("p").unwrap().get(0, 0),
            reference_adam(&gs, 0.05),
            epsilon = 1e-12
        );
        assert_eq!(adam.step_count(), gs.len() as u64);
    }

    #[test]
    fn missing_gradient_still_decays_moments() {
        let mut params = ParamSet::<f64>::new();
        params.insert("p", Mat::zeros(1, 1)).unwrap();
        let mut adam = AdamState::new(&params);
        adam.step(&mut params, &[Some(Mat::from_vec(1, 1, vec![1.0]).unwrap())], 0.1).unwrap();
        let after_grad = params.get("p").unwrap().get(0, 0);
        adam.step(&mut params, &[None], 0.1).unwrap();
        // Momentum keeps pushing in the same direction even without a
        // fresh gradient.
        assert!(params.get("p").unwrap().get(0, 0) < after_grad);
    }
}
