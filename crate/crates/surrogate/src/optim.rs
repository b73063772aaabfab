use crate::params::ParamStore;
use crate::tensor::Tensor;

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub lr: f64,
    pub weight_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u32,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

impl AdamW {
    pub fn new(store: &ParamStore, lr: f64, weight_decay: f64) -> Self {
        let zeros: Vec<Tensor> = store.tensors().iter().map(|t| Tensor::zeros(t.dims())).collect();
        Self {
            lr,
            weight_decay,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// One update. Slots without a gradient only decay.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Option<Tensor>]) {
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (i, p) in store.tensors_mut().iter_mut().enumerate() {
            let decay = 1.0 - self.lr * self.weight_decay;
            let Some(g) = &grads[i] else {
                p.scale(decay);
                continue;
            };
            let (m, v) = (self.m[i].data_mut(), self.v[i].data_mut());
            for (k, w) in p.data_mut().iter_mut().enumerate() {
                let gk = g.data()[k];
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * gk;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * gk * gk;
                let mh = m[k] / bc1;
                let vh = v[k] / bc2;
                *w = *w * decay - self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_against_gradient() {
        let mut s = ParamStore::new();
        s.push("w", Tensor::new(&[2], vec![1.0, -1.0]));
        let mut opt = AdamW::new(&s, 0.1, 0.0);
        opt.step(&mut s, &[Some(Tensor::new(&[2], vec![3.0, -0.5]))]);
        let d = s.get(0).data();
        assert!((d[0] - 0.9).abs() < 1e-6 && (d[1] + 0.9).abs() < 1e-6, "{d:?}");
    }

    #[test]
    fn decay_is_decoupled() {
        let mut s = ParamStore::new();
        s.push("w", Tensor::new(&[1], vec![2.0]));
        let mut opt = AdamW::new(&s, 0.1, 0.5);
        opt.step(&mut s, &[None]);
        assert!((s.get(0).data()[0] - 2.0 * 0.95).abs() < 1e-15);
    }

    #[test]
    fn minimizes_a_quadratic() {
        let mut s = ParamStore::new();
        s.push("w", Tensor::new(&[1], vec![5.0]));
        let mut opt = AdamW::new(&s, 0.05, 0.0);
        for _ in 0..2000 {
            let w = s.get(0).data()[0];
            opt.step(&mut s, &[Some(Tensor::new(&[1], vec![2.0 * (w - 1.0)]))]);
        }
        assert!((s.get(0).data()[0] - 1.0).abs() < 1e-2);
    }
}
