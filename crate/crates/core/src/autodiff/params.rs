use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AutodiffError, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Hyperparameters of the decoupled-weight-decay Adam update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-6,
            weight_decay: 0.01,
        }
    }
}

/// Parameter gradients produced by one backward pass.
///
/// Dense entries cover whole parameters; row entries come from embedding
/// lookups and touch only the looked-up rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Gradients {
    pub(crate) dense: Vec<(ParamId, Tensor)>,
    pub(crate) rows: Vec<(ParamId, usize, Vec<f64>)>,
}

impl Gradients {
    pub fn is_empty(&self) -> bool {
        self.dense.is_empty() && self.rows.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.dense.iter().all(|(_, t)| t.is_finite())
            && self.rows.iter().all(|(_, _, r)| r.iter().all(|v| v.is_finite()))
    }
}

/// Named parameters with their gradients and AdamW moment estimates.
#[derive(Debug, Clone, Default)]
pub struct ParameterStore {
    names: Vec<String>,
    index: HashMap<String, ParamId>,
    values: Vec<Tensor>,
    grads: Vec<Tensor>,
    first_moments: Vec<Tensor>,
    second_moments: Vec<Tensor>,
    step: u64,
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: &str, value: Tensor) -> Result<ParamId, AutodiffError> {
        if self.index.contains_key(name) {
            return Err(AutodiffError::DuplicateParameter(name.to_string()));
        }
        let id = ParamId(self.values.len());
        let (r, c) = value.shape();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        self.values.push(value);
        self.grads.push(Tensor::zeros(r, c));
        self.first_moments.push(Tensor::zeros(r, c));
        self.second_moments.push(Tensor::zeros(r, c));
        Ok(id)
    }

    pub fn id(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor {
        &self.values[id.0]
    }

    pub fn value_mut(&mut self, id: ParamId) -> &mut Tensor {
        &mut self.values[id.0]
    }

    pub fn grad(&self, id: ParamId) -> &Tensor {
        &self.grads[id.0]
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn parameter_count(&self) -> usize {
        self.values.iter().map(|t| t.data().len()).sum()
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.fill(0.0);
        }
    }

    pub fn accumulate(&mut self, grads: &Gradients) {
        for (id, g) in &grads.dense {
            self.grads[id.0].add_assign(g);
        }
        for (id, row, g) in &grads.rows {
            for (a, b) in self.grads[id.0].row_mut(*row).iter_mut().zip(g) {
                *a += b;
            }
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.grads.iter().map(Tensor::sum_squares).sum::<f64>().sqrt()
    }

    pub fn grad_norm_of(&self, id: ParamId) -> f64 {
        self.grads[id.0].sum_squares().sqrt()
    }

    /// One AdamW update with bias correction, then zeroes the gradients.
    pub fn adamw_step(&mut self, cfg: &AdamWConfig) {
        self.step += 1;
        let t = self.step as i32;
        let bias1 = 1.0 - cfg.beta1.powi(t);
        let bias2 = 1.0 - cfg.beta2.powi(t);
        for i in 0..self.values.len() {
            let value = self.values[i].data_mut();
            let grad = self.grads[i].data();
            let m = self.first_moments[i].data_mut();
            let v = self.second_moments[i].data_mut();
            for j in 0..value.len() {
                let g = grad[j];
                m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g;
                v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g * g;
                let m_hat = m[j] / bias1;
                let v_hat = v[j] / bias2;
                value[j] -= cfg.lr * cfg.weight_decay * value[j];
                value[j] -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            }
        }
        self.zero_grads();
    }

    /// Copies of the current parameter values, in id order.
    pub fn snapshot(&self) -> Vec<Tensor> {
        self.values.clone()
    }

    pub fn restore(&mut self, snapshot: &[Tensor]) -> Result<(), AutodiffError> {
        if snapshot.len() != self.values.len() {
            return Err(AutodiffError::Checkpoint(format!(
                "snapshot has {} parameters, store has {}",
                snapshot.len(),
                self.values.len()
            )));
        }
        for (i, t) in snapshot.iter().enumerate() {
            if t.shape() != self.values[i].shape() {
                return Err(AutodiffError::ShapeMismatch {
                    op: "restore",
                    left: self.values[i].shape(),
                    right: t.shape(),
                });
            }
        }
        self.values = snapshot.to_vec();
        Ok(())
    }

    pub fn to_checkpoint(&self) -> ParameterCheckpoint {
        ParameterCheckpoint {
            format: CHECKPOINT_FORMAT.to_string(),
            version: CHECKPOINT_VERSION,
            parameters: self
                .names
                .iter()
                .zip(&self.values)
                .map(|(name, t)| StoredParameter {
                    name: name.clone(),
                    rows: t.rows(),
                    cols: t.cols(),
                    values: t.data().to_vec(),
                })
                .collect(),
        }
    }

    /// Rebuilds a store (with fresh optimizer state) from a checkpoint.
    pub fn from_checkpoint(ckpt: &ParameterCheckpoint) -> Result<Self, AutodiffError> {
        if ckpt.format != CHECKPOINT_FORMAT {
            return Err(AutodiffError::Checkpoint(format!("unknown format {:?}", ckpt.format)));
        }
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(AutodiffError::Checkpoint(format!(
                "unsupported version {}",
                ckpt.version
            )));
        }
        let mut store = Self::new();
        for p in &ckpt.parameters {
            if p.values.len() != p.rows * p.cols {
                return Err(AutodiffError::Checkpoint(format!(
                    "parameter {} has {} values for shape {}x{}",
                    p.name,
                    p.values.len(),
                    p.rows,
                    p.cols
                )));
            }
            store.add(&p.name, Tensor::from_vec(p.rows, p.cols, p.values.clone()))?;
        }
        Ok(store)
    }

    pub fn save(&self, path: &Path) -> Result<(), AutodiffError> {
        let text = serde_json::to_string(&self.to_checkpoint())
            .map_err(|e| AutodiffError::Checkpoint(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| AutodiffError::Checkpoint(format!("{}: {e}", path.display())))
    }

    pub fn load(path: &Path) -> Result<Self, AutodiffError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| AutodiffError::Checkpoint(format!("{}: {e}", path.display())))?;
        let ckpt: ParameterCheckpoint =
            serde_json::from_str(&text).map_err(|e| AutodiffError::Checkpoint(e.to_string()))?;
        Self::from_checkpoint(&ckpt)
    }
}

pub const CHECKPOINT_FORMAT: &str = "treetag-params";
pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk parameter document: names, shapes and row-major values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterCheckpoint {
    pub format: String,
    pub version: u32,
    pub parameters: Vec<StoredParameter>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredParameter {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scalar_store(v: f64) -> (ParameterStore, ParamId) {
        let mut s = ParameterStore::new();
        let id = s.add("theta", Tensor::row_vector(vec![v])).unwrap();
        (s, id)
    }

    #[test]
    fn zero_gradient_only_decays() {
        let (mut s, id) = scalar_store(2.0);
        let cfg = AdamWConfig {
            lr: 0.1,
            weight_decay: 0.01,
            ..Default::default()
        };
        s.adamw_step(&cfg);
        assert_eq!(s.value(id).data()[0], 2.0 * (1.0 - 0.1 * 0.01));
    }

    #[test]
    fn zero_gradient_zero_decay_is_identity() {
        let mut s = ParameterStore::new();
        let id = s.add("w", Tensor::from_rows(&[vec![0.5, -1.5], vec![3.0, 0.0]])).unwrap();
        let before = s.value(id).clone();
        s.adamw_step(&AdamWConfig {
            weight_decay: 0.0,
            ..Default::default()
        });
        assert_eq!(s.value(id), &before);
        assert_eq!(s.step_count(), 1);
    }

    #[test]
    fn constant_gradient_moves_by_lr() {
        let (mut s, id) = scalar_store(0.0);
        let cfg = AdamWConfig {
            lr: 0.01,
            weight_decay: 0.0,
            eps: 1e-12,
            ..Default::default()
        };
        let mut prev = 0.0;
        for _ in 0..200 {
            s.accumulate(&Gradients {
                dense: vec![(id, Tensor::row_vector(vec![-3.0]))],
                rows: vec![],
            });
            s.adamw_step(&cfg);
            let now = s.value(id).data()[0];
            assert!((now - prev - 0.01).abs() < 1e-9);
            prev = now;
        }
    }

    #[test]
    fn two_hand_stepped_iterations() {
        // theta=1, g1=0.5, g2=-0.2, lr=0.1, wd=0.01, b1=.9, b2=.999, eps=1e-6
        // step 1: m=0.05 v=0.00025 m^=0.5 v^=0.25
        //   theta = 1 - 0.001 = 0.999; theta -= 0.1*0.5/(0.5+1e-6)
        // step 2: m=0.045-0.02=0.025 v=0.00024975+0.00004=0.00028975
        //   m^=0.025/0.19 v^=0.00028975/0.001999
        let (mut s, id) = scalar_store(1.0);
        let cfg = AdamWConfig {
            lr: 0.1,
            ..Default::default()
        };
        let push = |s: &mut ParameterStore, g: f64| {
            s.accumulate(&Gradients {
                dense: vec![(id, Tensor::row_vector(vec![g]))],
                rows: vec![],
            })
        };
        push(&mut s, 0.5);
        s.adamw_step(&cfg);
        let t1 = 0.999 - 0.1 * 0.5 / (0.5 + 1e-6);
        assert!((s.value(id).data()[0] - t1).abs() < 1e-15);
        push(&mut s, -0.2);
        s.adamw_step(&cfg);
        let m_hat = 0.025 / 0.19;
        let v_hat: f64 = 0.00028975 / (1.0 - 0.999f64 * 0.999);
        let t2 = t1 * (1.0 - 0.001) - 0.1 * m_hat / (v_hat.sqrt() + 1e-6);
        assert!((s.value(id).data()[0] - t2).abs() < 1e-12, "{} vs {t2}", s.value(id).data()[0]);
        assert_eq!(s.grad(id).data()[0], 0.0);
    }

    #[test]
    fn row_gradients_touch_only_their_rows() {
        let mut s = ParameterStore::new();
        let id = s.add("emb", Tensor::zeros(3, 2)).unwrap();
        s.accumulate(&Gradients {
            dense: vec![],
            rows: vec![(id, 1, vec![1.0, 2.0]), (id, 1, vec![0.5, 0.5])],
        });
        assert_eq!(s.grad(id).data(), &[0.0, 0.0, 1.5, 2.5, 0.0, 0.0]);
    }

    #[test]
    fn duplicate_names_rejected() {
        let mut s = ParameterStore::new();
        s.add("a", Tensor::zeros(1, 1)).unwrap();
        assert!(matches!(s.add("a", Tensor::zeros(1, 1)), Err(AutodiffError::DuplicateParameter(_))));
    }

    #[test]
    fn bad_checkpoints_rejected() {
        let mut ckpt = scalar_store(1.0).0.to_checkpoint();
        ckpt.version = 99;
        assert!(ParameterStore::from_checkpoint(&ckpt).is_err());
        let mut ckpt = scalar_store(1.0).0.to_checkpoint();
        ckpt.parameters[0].values.push(0.0);
        assert!(ParameterStore::from_checkpoint(&ckpt).is_err());
    }

    proptest! {
        #[test]
        fn checkpoint_round_trip_is_bit_exact(values in proptest::collection::vec(proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO, 1..40)) {
            let mut s = ParameterStore::new();
            let n = values.len();
            s.add("p", Tensor::from_vec(1, n, values.clone())).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("p.json");
            s.save(&path).unwrap();
            let back = ParameterStore::load(&path).unwrap();
            let got = back.value(back.id("p").unwrap()).data().to_vec();
            for (a, b) in got.iter().zip(&values) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
