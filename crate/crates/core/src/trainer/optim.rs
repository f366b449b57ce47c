use std::path::Path;

use candle_core::backprop::GradStore;
use candle_core::Tensor;

use crate::models::{archive, NamedVars};
use crate::Result;

const ADAM_EPS: f64 = 1e-8;

/// Adam with bias correction over a fixed set of named variables.
#[derive(Debug, Clone)]
pub struct Adam {
    vars: NamedVars,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    beta1: f64,
    beta2: f64,
    step: u64,
}

impl Adam {
    pub fn new(vars: NamedVars, beta1: f64, beta2: f64) -> Result<Self> {
        let m = vars
            .iter()
            .map(|(_, v)| v.zeros_like())
            .collect::<candle_core::Result<Vec<_>>>()?;
        let v = m.clone();
        Ok(Self {
            vars,
            m,
            v,
            beta1,
            beta2,
            step: 0,
        })
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update; variables without a gradient keep their value and
    /// moments.
    pub fn step(&mut self, grads: &GradStore, lr: f64) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for (i, (_, var)) in self.vars.iter().enumerate() {
            let Some(g) = grads.get(var.as_tensor()) else {
                continue;
            };
            let m = ((&self.m[i] * self.beta1)? + (g * (1.0 - self.beta1))?)?;
            let v = ((&self.v[i] * self.beta2)? + (g.sqr()? * (1.0 - self.beta2))?)?;
            let denom = ((&v / c2)?.sqrt()? + ADAM_EPS)?;
            let delta = ((&m / c1)? / denom)?;
            var.set(&(var.as_tensor() - (delta * lr)?)?)?;
            self.m[i] = m;
            self.v[i] = v;
        }
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let pack = |moments: &[Tensor]| -> Vec<(String, Tensor)> {
            self.vars
                .iter()
                .zip(moments)
                .map(|((n, _), t)| (n.clone(), t.clone()))
                .collect()
        };
        archive::write_archive(dir, "m", &pack(&self.m))?;
        archive::write_archive(dir, "v", &pack(&self.v))
    }

    /// Restores moments saved by [`Adam::save`] for the same variable layout.
    pub fn load(&mut self, dir: &Path, step: u64) -> Result<()> {
        let shadow = |stem: &str| -> Result<Vec<Tensor>> {
            let slots: NamedVars = self
                .vars
                .iter()
                .map(|(n, v)| Ok((n.clone(), candle_core::Var::from_tensor(&v.zeros_like()?)?)))
                .collect::<Result<_>>()?;
            archive::load_into(&slots, dir, stem)?;
            Ok(slots.into_iter().map(|(_, v)| v.as_detached_tensor()).collect())
        };
        self.m = shadow("m")?;
        self.v = shadow("v")?;
        self.step = step;
        Ok(())
    }
}
