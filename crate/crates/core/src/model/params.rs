use std::sync::Arc;

use indexmap::IndexMap;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{Real, Tape, Tensor, Var};
use crate::rng::RngKey;

use super::config::ModelConfig;

/// Which learning rate a parameter trains under.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    Backbone,
    Head,
}

pub fn group_of(name: &str) -> ParamGroup {
    if name.starts_with("head.") {
        ParamGroup::Head
    } else {
        ParamGroup::Backbone
    }
}

/// Base projection weights that stay fixed while adapters train.
pub fn is_frozen(cfg: &ModelConfig, name: &str) -> bool {
    cfg.adapter_rank.is_some() && (name.ends_with("attn.wq") || name.ends_with("attn.wv"))
}

/// Named parameter tensors in a fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamStore<T: Real = f32> {
    tensors: IndexMap<String, Arc<Tensor<T>>>,
}

impl<T: Real> Default for ParamStore<T> {
    fn default() -> Self {
        ParamStore {
            tensors: IndexMap::new(),
        }
    }
}

impl<T: Real> ParamStore<T> {
    pub fn insert(&mut self, name: impl Into<String>, t: Tensor<T>) {
        self.tensors.insert(name.into(), Arc::new(t));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.tensors.get(name).map(|a| a.as_ref())
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.tensors.get_mut(name).map(Arc::make_mut)
    }

    pub(crate) fn arc(&self, name: &str) -> Option<Arc<Tensor<T>>> {
        self.tensors.get(name).cloned()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.tensors.iter().map(|(k, v)| (k.as_str(), v.as_ref()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.tensors.keys().map(String::as_str)
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.values().map(|t| t.len()).sum()
    }

    pub fn cast<U: Real>(&self) -> ParamStore<U> {
        ParamStore {
            tensors: self
                .tensors
                .iter()
                .map(|(k, v)| (k.clone(), Arc::new(v.cast::<U>())))
                .collect(),
        }
    }

    /// Records every tensor on `tape`; tensors for which `trainable`
    /// returns true become gradient leaves, the rest constants.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: impl Fn(&str) -> bool) -> Bound {
        let vars = self
            .tensors
            .iter()
            .map(|(name, t)| {
                let v = if trainable(name) {
                    tape.param(t.clone())
                } else {
                    tape.constant(t.clone())
                };
                (name.clone(), v)
            })
            .collect();
        Bound { vars }
    }
}

impl<T: Real> ParamStore<T> {
    /// Binds only `names`, all as constants.
    pub fn bind_only(&self, tape: &mut Tape<T>, names: &[&str]) -> Bound {
        let vars = names
            .iter()
            .map(|&n| {
                let t = self.arc(n).unwrap_or_else(|| panic!("parameter {n} missing"));
                (n.to_string(), tape.constant(t))
            })
            .collect();
        Bound { vars }
    }
}

/// Tape handles for a bound [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Bound {
    vars: IndexMap<String, Var>,
}

impl Bound {
    pub fn from_pairs(pairs: impl IntoIterator<Item = (String, Var)>) -> Self {
        Bound {
            vars: pairs.into_iter().collect(),
        }
    }

    pub fn var(&self, name: &str) -> Var {
        *self
            .vars
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name} is not bound"))
    }

    pub fn try_var(&self, name: &str) -> Option<Var> {
        self.vars.get(name).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, Var)> {
        self.vars.iter().map(|(k, v)| (k.as_str(), *v))
    }
}

fn normal(rows: usize, cols: usize, std: f64, rng: &mut impl Rng) -> Tensor<f32> {
    Tensor::from_fn(rows, cols, |_, _| (rng.sample::<f64, _>(StandardNormal) * std) as f32)
}

/// Fresh parameters. Linear layers are fan-in scaled; the value head's
/// output layer starts at exactly zero so every initial reward is 0.
/// Adapter `b` factors start at zero, so adapters begin as a no-op.
pub fn init_params(cfg: &ModelConfig, key: RngKey) -> ParamStore<f32> {
    let mut rng = key.rng();
    let mut store = ParamStore::default();
    let resid_scale = 1.0 / (2.0 * cfg.num_layers as f64).sqrt();
    for (name, [r, c]) in cfg.param_shapes() {
        let fan_in = (r as f64).sqrt();
        let t = if name.starts_with("embed.") {
            normal(r, c, 0.1, &mut rng)
        } else if name.ends_with(".gain") {
            Tensor::full(r, c, 1.0)
        } else if name.ends_with("adapter_b") || name == "head.w2" || r == 1 {
            Tensor::zeros(r, c)
        } else if name.ends_with("attn.wo") || name.ends_with("mlp.w2") {
            normal(r, c, resid_scale / fan_in, &mut rng)
        } else {
            normal(r, c, 1.0 / fan_in, &mut rng)
        };
        store.insert(name, t);
    }
    store
}
