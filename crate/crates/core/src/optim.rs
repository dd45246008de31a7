//! Adaptive-moment (Adam) optimizer over a named parameter group.

use candle_core::backprop::GradStore;
use candle_core::{Tensor, Var};

use crate::error::Result;
use crate::nn::NamedVar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

#[derive(Debug)]
pub struct Adam {
    params: Vec<NamedVar>,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
    cfg: AdamConfig,
}

impl Adam {
    /// Takes only the trainable entries of `vars`.
    pub fn new(vars: &[NamedVar], cfg: AdamConfig) -> Result<Self> {
        let params: Vec<NamedVar> = vars.iter().filter(|v| v.trainable).cloned().collect();
        let first = params
            .iter()
            .map(|p| p.var.as_tensor().zeros_like())
            .collect::<candle_core::Result<Vec<_>>>()?;
        let second = first.clone();
        Ok(Self {
            params,
            first,
            second,
            step: 0,
            cfg,
        })
    }

    pub fn config(&self) -> AdamConfig {
        self.cfg
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn params(&self) -> &[NamedVar] {
        &self.params
    }

    pub fn moments(&self) -> impl Iterator<Item = (&str, &Tensor, &Tensor)> {
        self.params
            .iter()
            .zip(self.first.iter().zip(&self.second))
            .map(|(p, (m, v))| (p.name.as_str(), m, v))
    }

    pub(crate) fn restore(&mut self, step: u64, first: Vec<Tensor>, second: Vec<Tensor>) {
        self.step = step;
        self.first = first;
        self.second = second;
    }

    pub fn contains(&self, var: &Var) -> bool {
        self.params.iter().any(|p| p.var.id() == var.id())
    }

    /// One update from `grads`. Parameters without a gradient keep their
    /// value and moments.
    pub fn step(&mut self, grads: &GradStore) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let AdamConfig {
            learning_rate: lr,
            beta1: b1,
            beta2: b2,
            epsilon: eps,
        } = self.cfg;
        let bias1 = 1.0 - b1.powi(t);
        let bias2 = 1.0 - b2.powi(t);
        for ((p, m), v) in self.params.iter().zip(&mut self.first).zip(&mut self.second) {
            let Some(g) = grads.get(p.var.as_tensor()) else {
                continue;
            };
            *m = ((&*m * b1)? + (g * (1.0 - b1))?)?.detach();
            *v = ((&*v * b2)? + (g.sqr()? * (1.0 - b2))?)?.detach();
            let m_hat = (&*m / bias1)?;
            let v_hat = (&*v / bias2)?;
            let update = (m_hat / (v_hat.sqrt()? + eps)?)?;
            let next = (p.var.as_tensor() - (update * lr)?)?;
            p.var.set(&next)?;
        }
        Ok(())
    }
}
