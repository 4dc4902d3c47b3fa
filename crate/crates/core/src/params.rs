//! Named parameter storage shared by networks, the optimizer, and checkpoints.
//!
//! Parameters live outside the autodiff graph; each training step binds them
//! into a fresh graph as leaves. Frozen parameters are bound without gradient
//! tracking, so backward never visits the subgraphs they feed.

use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;

use crate::graph::{Graph, Var};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamId(pub(crate) usize);

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Tensor,
    pub frozen: bool,
}

#[derive(Debug, Default, Clone)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: String, value: Tensor, frozen: bool) -> ParamId {
        self.params.push(Param {
            name,
            value,
            frozen,
        });
        ParamId(self.params.len() - 1)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Param {
        &mut self.params[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamId, &mut Param)> {
        self.params
            .iter_mut()
            .enumerate()
            .map(|(i, p)| (ParamId(i), p))
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.params.iter().position(|p| p.name == name).map(ParamId)
    }

    pub fn total_elements(&self) -> usize {
        self.params.iter().map(|p| p.value.numel()).sum()
    }

    /// Insert every parameter into `g` as a leaf. Frozen parameters do not
    /// track gradients.
    pub fn bind(&self, g: &mut Graph) -> Binding {
        let vars = self
            .params
            .iter()
            .map(|p| g.leaf(p.value.clone(), !p.frozen))
            .collect();
        Binding { vars }
    }

    /// Bind with gradient tracking disabled everywhere (inference only).
    pub fn bind_inference(&self, g: &mut Graph) -> Binding {
        let vars = self.params.iter().map(|p| g.input(p.value.clone())).collect();
        Binding { vars }
    }
}

/// Maps [`ParamId`]s to the graph leaves of one forward pass.
#[derive(Debug, Clone)]
pub struct Binding {
    vars: Vec<Var>,
}

impl Binding {
    pub fn var(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, Var)> + '_ {
        self.vars.iter().enumerate().map(|(i, &v)| (ParamId(i), v))
    }
}

/// Kaiming fan-in scaled normal init for a conv weight of shape
/// (Cout, Cin/G, kh, kw): std = sqrt(2 / fan_in).
pub fn kaiming_conv_weight(rng: &mut SplitMix64, shape: &[usize; 4]) -> Tensor {
    let fan_in = shape[1] * shape[2] * shape[3];
    let std = Float::sqrt(2.0f32 / fan_in as f32);
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| rng.next_normal() * std).collect();
    Tensor::from_vec(shape, data).expect("shape/product consistent")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bind_marks_frozen_params_untracked() {
        let mut store = ParamStore::new();
        let a = store.add("a".into(), Tensor::zeros(&[2]), false);
        let b = store.add("b".into(), Tensor::zeros(&[2]), true);
        let mut g = Graph::new();
        let binding = store.bind(&mut g);
        assert!(g.requires_grad(binding.var(a)));
        assert!(!g.requires_grad(binding.var(b)));
    }

    #[test]
    fn kaiming_scale_tracks_fan_in() {
        let mut rng = SplitMix64::new(1);
        let w = kaiming_conv_weight(&mut rng, &[8, 16, 3, 3]);
        let var: f32 = w.data().iter().map(|v| v * v).sum::<f32>() / w.numel() as f32;
        let expect = 2.0 / (16.0 * 9.0);
        assert!((var - expect).abs() < expect * 0.5, "var {var} vs {expect}");
    }
}
