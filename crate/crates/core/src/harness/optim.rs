use crate::error::{Result, VgaError};
use crate::tensorcore::{ParamStore, Tensor};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

/// Adaptive-moment optimizer state for one [`ParamStore`].
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let zeros: Vec<Tensor> = store
            .iter()
            .map(|(_, p)| Tensor::zeros(p.value.shape()))
            .collect();
        Adam {
            lr,
            beta1: ADAM_BETA1,
            beta2: ADAM_BETA2,
            eps: ADAM_EPS,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Applies one bias-corrected update from the accumulated gradients, then clears them.
    ///
    /// Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        if self.m.len() != store.len() {
            return Err(VgaError::Contract(format!(
                "optimizer tracks {} parameters, store has {}",
                self.m.len(),
                store.len()
            )));
        }
        for (_, p) in store.iter() {
            if !p.grad.is_finite() {
                return Err(VgaError::Numeric(format!(
                    "non-finite gradient in parameter '{}'",
                    p.name()
                )));
            }
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((p, m), v) in store.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let g = p.grad.data();
            let (md, vd) = (m.data_mut(), v.data_mut());
            for (i, x) in p.value.data_mut().iter_mut().enumerate() {
                md[i] = self.beta1 * md[i] + (1.0 - self.beta1) * g[i];
                vd[i] = self.beta2 * vd[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = md[i] / c1;
                let v_hat = vd[i] / c2;
                *x -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        store.zero_grads();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_store(v: f64) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("x", Tensor::scalar(v)).unwrap();
        s
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient() {
        for g in [3.0, -0.02, 1e4] {
            let mut s = scalar_store(1.0);
            let mut opt = Adam::new(&s, 0.01);
            s.iter_mut().next().unwrap().grad = Tensor::scalar(g);
            opt.step(&mut s).unwrap();
            // m̂ = g, v̂ = g², update = lr·g/(|g|+ε)
            let expected = 1.0 - 0.01 * g / (g.abs() + ADAM_EPS);
            assert!((s.value(s.id("x").unwrap()).item() - expected).abs() < 1e-15);
            assert_eq!(s.grad(s.id("x").unwrap()).item(), 0.0);
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut s = scalar_store(0.7);
        let mut opt = Adam::new(&s, 0.1);
        for _ in 0..3 {
            opt.step(&mut s).unwrap();
        }
        assert_eq!(s.value(s.id("x").unwrap()).item(), 0.7);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut s = scalar_store(0.0);
        s.add("bad.w", Tensor::row(vec![0.0, 0.0])).unwrap();
        let mut opt = Adam::new(&s, 0.1);
        s.iter_mut().nth(1).unwrap().grad = Tensor::row(vec![1.0, f64::NAN]);
        let err = opt.step(&mut s).unwrap_err().to_string();
        assert!(err.contains("bad.w"), "{err}");
        assert_eq!(opt.step, 0);
        assert_eq!(s.value(s.id("x").unwrap()).item(), 0.0);
    }

    #[test]
    fn minimises_a_quadratic() {
        let mut s = scalar_store(5.0);
        let mut opt = Adam::new(&s, 0.1);
        for _ in 0..500 {
            let x = s.value(s.id("x").unwrap()).item();
            s.iter_mut().next().unwrap().grad = Tensor::scalar(2.0 * (x - 2.0));
            opt.step(&mut s).unwrap();
        }
        assert!((s.value(s.id("x").unwrap()).item() - 2.0).abs() < 1e-2);
    }
}
