use crate::model::{BackboneEncoder, Network};
use crate::scalar::Real;

/// Adam with bias correction, no weight decay.
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
    step: i32,
}

impl<T: Real> Adam<T> {
    pub fn new<A: BackboneEncoder<T>, V: BackboneEncoder<T>>(net: &Network<T, A, V>, learning_rate: f64) -> Self {
        let zeros: Vec<Vec<T>> = net.tensors().iter().map(|p| vec![T::zero(); p.values.len()]).collect();
        Self {
            learning_rate: T::lit(learning_rate),
            beta1: T::lit(0.9),
            beta2: T::lit(0.999),
            eps: T::lit(1e-8),
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }

    /// One update from `grad` (same shape as `net`); backbone tensors are skipped when
    /// `freeze_backbone` is set.
    pub fn step<A: BackboneEncoder<T>, V: BackboneEncoder<T>>(
        &mut self,
        net: &mut Network<T, A, V>,
        grad: &Network<T, A, V>,
        freeze_backbone: bool,
    ) {
        self.step += 1;
        let one = T::one();
        let c1 = one - self.beta1.powi(self.step);
        let c2 = one - self.beta2.powi(self.step);
        let grads = grad.tensors();
        for (i, (backbone, params)) in net.tensors_mut().into_iter().enumerate() {
            if backbone && freeze_backbone {
                continue;
            }
            let g = grads[i].values;
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for j in 0..params.len() {
                m[j] = self.beta1 * m[j] + (one - self.beta1) * g[j];
                v[j] = self.beta2 * v[j] + (one - self.beta2) * g[j] * g[j];
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                params[j] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}
