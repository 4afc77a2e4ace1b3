use bridgeflow_tensor::Tensor;

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct AdamW {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    step: u64,
}

impl AdamW {
    pub fn new(shapes: &[usize], beta1: f64, beta2: f64, eps: f64, weight_decay: f64) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            weight_decay,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update. `decay[i]` selects whether parameter `i` is decayed.
    pub fn step(&mut self, params: &mut [&mut Tensor], grads: &[Tensor], decay: &[bool], lr: f64) {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
            let shrink = if decay[i] { 1.0 - lr * self.weight_decay } else { 1.0 };
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (j, (w, &gj)) in p.data_mut().iter_mut().zip(g.data()).enumerate() {
                m[j] = self.beta1 * m[j] + (1.0 - self.beta1) * gj;
                v[j] = self.beta2 * v[j] + (1.0 - self.beta2) * gj * gj;
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                *w = *w * shrink - lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr_against_the_gradient_sign() {
        let mut p = Tensor::vector(vec![1.0, -2.0]);
        let g = Tensor::vector(vec![0.3, -4.0]);
        let mut opt = AdamW::new(&[2], 0.9, 0.999, 1e-12, 0.0);
        opt.step(&mut [&mut p], &[g], &[true], 0.1);
        assert!((p.data()[0] - 0.9).abs() < 1e-9);
        assert!((p.data()[1] + 1.9).abs() < 1e-9);
    }

    #[test]
    fn decay_only_where_selected() {
        let mut a = Tensor::vector(vec![1.0]);
        let mut b = Tensor::vector(vec![1.0]);
        let zero = Tensor::vector(vec![0.0]);
        let mut opt = AdamW::new(&[1, 1], 0.9, 0.999, 1e-8, 0.5);
        opt.step(&mut [&mut a, &mut b], &[zero.clone(), zero], &[true, false], 0.1);
        assert!((a.data()[0] - 0.95).abs() < 1e-12);
        assert_eq!(b.data()[0], 1.0);
    }
}
