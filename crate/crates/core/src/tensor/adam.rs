use super::params::ParamSet;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.0,
        }
    }
}

/// Adam with decoupled weight decay.
#[derive(Debug, Clone)]
pub struct Adam<S> {
    pub config: AdamConfig,
    step: i32,
    m: Vec<Vec<S>>,
    v: Vec<Vec<S>>,
}

impl<S: Scalar> Adam<S> {
    pub fn new(config: AdamConfig, params: &ParamSet<S>) -> Self {
        let zeros = || params.params().iter().map(|p| vec![S::zero(); p.value.numel()]).collect();
        Self {
            config,
            step: 0,
            m: zeros(),
            v: zeros(),
        }
    }

    pub fn steps_taken(&self) -> i32 {
        self.step
    }

    /// Applies one update from the accumulated gradients, then clears them.
    pub fn step(&mut self, params: &mut ParamSet<S>) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(Error::Shape("optimizer built for a different parameter set".into()));
        }
        self.step += 1;
        let c = &self.config;
        let (b1, b2) = (S::lit(c.beta1), S::lit(c.beta2));
        let (lr, eps, wd) = (S::lit(c.lr), S::lit(c.eps), S::lit(c.weight_decay));
        let bc1 = S::one() - b1.powi(self.step);
        let bc2 = S::one() - b2.powi(self.step);
        for ((p, m), v) in params.params_mut().iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let g = p
                .grad
                .take()
                .ok_or_else(|| Error::Shape(format!("parameter {} has no gradient", p.name)))?;
            for (((x, &gi), mi), vi) in p.value.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                *mi = b1 * *mi + (S::one() - b1) * gi;
                *vi = b2 * *vi + (S::one() - b2) * gi * gi;
                let mhat = *mi / bc1;
                let vhat = *vi / bc2;
                *x -= lr * wd * *x;
                *x -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Tape, Tensor};

    #[test]
    fn minimises_a_quadratic() {
        let mut ps = ParamSet::<f64>::new();
        let id = ps.add("x", Tensor::from_f64(&[2], &[3.0, -2.0]).unwrap());
        let mut opt = Adam::new(AdamConfig { lr: 0.1, ..Default::default() }, &ps);
        for _ in 0..500 {
            let mut tape = Tape::new();
            let b = ps.bind(&mut tape);
            let sq = tape.mul(b[id], b[id]).unwrap();
            let loss = tape.sum(sq);
            let mut g = tape.backward(loss).unwrap();
            ps.accumulate(&b, &mut g);
            opt.step(&mut ps).unwrap();
        }
        assert!(ps.get(id).data().iter().all(|x| x.abs() < 1e-3));
    }

    fn one_step(x: f64, grad: f64, cfg: AdamConfig) -> f64 {
        let mut ps = ParamSet::<f64>::new();
        let id = ps.add("x", Tensor::from_f64(&[1], &[x]).unwrap());
        ps.params_mut()[0].grad = Some(Tensor::from_f64(&[1], &[grad]).unwrap());
        Adam::new(cfg, &ps).step(&mut ps).unwrap();
        assert!(ps.params()[0].grad.is_none());
        ps.get(id).data()[0]
    }

    #[test]
    fn single_step_examples() {
        let lr = AdamConfig { lr: 0.1, ..Default::default() };
        assert!((one_step(1.0, 1.0, lr) - 0.9).abs() < 1e-6);
        assert_eq!(one_step(0.7, 0.0, lr), 0.7);
        let decay = AdamConfig { weight_decay: 0.1, ..lr };
        assert!((one_step(2.0, 0.0, decay) - 2.0 * 0.99).abs() < 1e-12);
    }

    #[test]
    fn missing_gradient_is_an_error() {
        let mut ps = ParamSet::<f64>::new();
        ps.add("x", Tensor::zeros(&[1]));
        let mut opt = Adam::new(AdamConfig::default(), &ps);
        assert!(opt.step(&mut ps).is_err());
    }
}
