//! Adam optimizer with bias correction.

use ndarray::ArrayD;

use crate::nn::params::{Gradients, ParamKind, Parameters, TensorId};
use crate::nn::scalar::Scalar;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// First/second moment accumulators, shaped like the parameters.
#[derive(Debug, Clone)]
pub struct AdamState<F> {
    m: Vec<ArrayD<F>>,
    v: Vec<ArrayD<F>>,
    step: u64,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(params: &Parameters<F>) -> Self {
        let zeros: Vec<ArrayD<F>> = params
            .tensor_ids()
            .map(|id| ArrayD::zeros(params.get(id).raw_dim()))
            .collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// One Adam update over the trainable tensors. Running statistics are
    /// untouched.
    pub fn step(&mut self, params: &mut Parameters<F>, grads: &Gradients<F>, lr: f64) {
        self.step += 1;
        let b1 = F::from_f64(ADAM_BETA1);
        let b2 = F::from_f64(ADAM_BETA2);
        let eps = F::from_f64(ADAM_EPS);
        let lr = F::from_f64(lr);
        let bc1 = F::one() - F::from_f64(ADAM_BETA1.powi(self.step as i32));
        let bc2 = F::one() - F::from_f64(ADAM_BETA2.powi(self.step as i32));
        let one = F::one();

        for id in 0..params.len() {
            let tid = TensorId(id);
            if params.spec(tid).kind != ParamKind::Trainable {
                continue;
            }
            let g = grads.get(tid);
            let m = &mut self.m[id];
            let v = &mut self.v[id];
            let w = params.get_mut(tid);
            for ((wi, gi), (mi, vi)) in w
                .iter_mut()
                .zip(g.iter())
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mi = b1 * *mi + (one - b1) * *gi;
                *vi = b2 * *vi + (one - b2) * *gi * *gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *wi = *wi - lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
