use std::collections::BTreeMap;

use ndarray::ArrayD;
use serde::{Deserialize, Serialize};

use crate::encoder::Params;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment estimates keyed by tensor name. Entries are created on first use,
/// so heads attached mid-run get fresh moments.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct OptimizerState {
    pub first: BTreeMap<String, ArrayD<f64>>,
    pub second: BTreeMap<String, ArrayD<f64>>,
    pub step: u64,
}

/// One bias-corrected Adam update. Frozen tensors are skipped entirely.
/// Nothing is modified if any gradient is non-finite.
pub fn adam_step(params: &mut Params, grads: &Params, state: &mut OptimizerState, cfg: &AdamConfig) -> Result<()> {
    let grad_tensors = grads.tensors();
    for (name, g) in &grad_tensors {
        if !params.is_frozen(name) && g.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteGradient(name.clone()));
        }
    }
    let grad_by_name: BTreeMap<&str, _> = grad_tensors.iter().map(|(n, g)| (n.as_str(), g)).collect();
    for (name, p) in params.tensors() {
        match grad_by_name.get(name.as_str()) {
            Some(g) if g.shape() == p.shape() => {}
            Some(g) => {
                return Err(Error::DimensionMismatch {
                    expected: format!("{name} {:?}", p.shape()),
                    got: format!("{:?}", g.shape()),
                })
            }
            None => return Err(Error::DimensionMismatch { expected: format!("gradient for {name}"), got: "none".into() }),
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let frozen = params.frozen.clone();
    for (name, mut p) in params.tensors_mut() {
        if frozen.contains(&name) {
            continue;
        }
        let g = grad_by_name[name.as_str()];
        let m = state.first.entry(name.clone()).or_insert_with(|| ArrayD::zeros(p.shape()));
        let v = state.second.entry(name.clone()).or_insert_with(|| ArrayD::zeros(p.shape()));
        if m.shape() != p.shape() {
            return Err(Error::DimensionMismatch {
                expected: format!("moments for {name} {:?}", p.shape()),
                got: format!("{:?}", m.shape()),
            });
        }
        ndarray::Zip::from(&mut p)
            .and(g)
            .and(&mut *m)
            .and(&mut *v)
            .for_each(|p, &g, m, v| {
                *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
                *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
                let m_hat = *m / c1;
                let v_hat = *v / c2;
                *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            });
    }
    Ok(())
}
