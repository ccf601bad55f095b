//! Adam optimizer with bias correction. Moment state is keyed by parameter
//! name and can be round-tripped through a checkpoint so training resumes
//! exactly.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};

use super::graph::Grads;
use super::params::ModelParams;
use super::tensor::Tensor;
use super::Result;
use crate::fmath;

#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: u64,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: BTreeMap::new(),
            v: BTreeMap::new(),
        }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// One update. Parameters without a gradient entry are left untouched.
    pub fn step(&mut self, params: &mut ModelParams, grads: &Grads) -> Result<()> {
        self.step += 1;
        let bc1 = 1.0 - fmath::powi(self.beta1, self.step as i32);
        let bc2 = 1.0 - fmath::powi(self.beta2, self.step as i32);
        for (name, g) in grads {
            let p = params.get_mut(name)?;
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(g.rows(), g.cols()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(g.rows(), g.cols()));
            for i in 0..g.len() {
                let gi = g.data()[i];
                let mi = self.beta1 * m.data()[i] + (1.0 - self.beta1) * gi;
                let vi = self.beta2 * v.data()[i] + (1.0 - self.beta2) * gi * gi;
                m.data_mut()[i] = mi;
                v.data_mut()[i] = vi;
                let m_hat = mi / bc1;
                let v_hat = vi / bc2;
                p.data_mut()[i] -= self.lr * m_hat / (fmath::sqrt(v_hat) + self.eps);
            }
        }
        Ok(())
    }

    /// Writes moment state into a parameter store under the given prefix.
    pub fn save_into(&self, store: &mut ModelParams, prefix: &str) -> Result<()> {
        store.insert(&format!("{prefix}.step"), Tensor::scalar(self.step as f64))?;
        for (name, t) in &self.m {
            store.insert(&format!("{prefix}.m.{name}"), t.clone())?;
        }
        for (name, t) in &self.v {
            store.insert(&format!("{prefix}.v.{name}"), t.clone())?;
        }
        Ok(())
    }

    /// Restores moment state written by [`Adam::save_into`].
    pub fn load_from(&mut self, store: &ModelParams, prefix: &str) -> Result<()> {
        if let Ok(s) = store.get(&format!("{prefix}.step")) {
            self.step = s.item() as u64;
        }
        self.m.clear();
        self.v.clear();
        let m_prefix = format!("{prefix}.m.");
        let v_prefix = format!("{prefix}.v.");
        for (name, t) in store.iter() {
            if let Some(stripped) = name.strip_prefix(m_prefix.as_str()) {
                self.m.insert(stripped.to_string(), t.clone());
            } else if let Some(stripped) = name.strip_prefix(v_prefix.as_str()) {
                self.v.insert(stripped.to_string(), t.clone());
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grads_of(name: &str, t: Tensor) -> Grads {
        let mut g = Grads::new();
        g.insert(name.to_string(), t);
        g
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut params = ModelParams::new();
        params.insert("w", Tensor::scalar(0.7)).unwrap();
        let mut opt = Adam::new(1e-3);
        opt.step(&mut params, &grads_of("w", Tensor::scalar(0.0)))
            .unwrap();
        assert_eq!(params.get("w").unwrap().item(), 0.7);
    }

    #[test]
    fn unit_gradient_first_step_moves_by_lr() {
        // m_hat = 1, v_hat = 1 -> step = lr / (1 + eps) ~ lr.
        let mut params = ModelParams::new();
        params.insert("w", Tensor::scalar(1.0)).unwrap();
        let mut opt = Adam::new(1e-3);
        opt.step(&mut params, &grads_of("w", Tensor::scalar(1.0)))
            .unwrap();
        let moved = 1.0 - params.get("w").unwrap().item();
        assert!((moved - 1e-3).abs() < 1e-9, "moved {moved}");
    }

    #[test]
    fn deterministic_trajectories() {
        let run = || {
            let mut params = ModelParams::new();
            params.insert("w", Tensor::row(&[0.3, -0.2])).unwrap();
            let mut opt = Adam::new(0.01);
            for i in 0..50 {
                let g = Tensor::row(&[(i as f64 * 0.1).sin(), (i as f64 * 0.2).cos()]);
                opt.step(&mut params, &grads_of("w", g)).unwrap();
            }
            params.get("w").unwrap().data().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn state_round_trip_resumes_exactly() {
        let g1 = grads_of("w", Tensor::scalar(0.5));
        let g2 = grads_of("w", Tensor::scalar(-0.25));

        // Continuous run.
        let mut p_ref = ModelParams::new();
        p_ref.insert("w", Tensor::scalar(1.0)).unwrap();
        let mut opt_ref = Adam::new(0.01);
        opt_ref.step(&mut p_ref, &g1).unwrap();
        opt_ref.step(&mut p_ref, &g2).unwrap();

        // Interrupted run: save state after step 1, reload, then step 2.
        let mut p = ModelParams::new();
        p.insert("w", Tensor::scalar(1.0)).unwrap();
        let mut opt = Adam::new(0.01);
        opt.step(&mut p, &g1).unwrap();
        let mut saved = ModelParams::new();
        opt.save_into(&mut saved, "opt").unwrap();
        let mut opt2 = Adam::new(0.01);
        opt2.load_from(&saved, "opt").unwrap();
        opt2.step(&mut p, &g2).unwrap();

        assert_eq!(
            p_ref.get("w").unwrap().item().to_bits(),
            p.get("w").unwrap().item().to_bits()
        );
    }
}
