//! SGD with momentum and parameter freezing.

use alloc::format;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::graph::Graph;
use crate::params::{Binding, ParamStore};
use crate::tensor::Tensor;

/// Momentum SGD. Per parameter: `v <- mu*v + grad; theta <- theta - lr*v`.
/// Frozen parameters and their momentum buffers are never touched.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f32,
    pub momentum: f32,
    velocity: Vec<Tensor>,
}

impl Sgd {
    pub fn new(store: &ParamStore, lr: f32, momentum: f32) -> Self {
        let velocity = store
            .iter()
            .map(|(_, p)| Tensor::zeros(p.value.shape()))
            .collect();
        Sgd {
            lr,
            momentum,
            velocity,
        }
    }

    pub fn velocity(&self) -> &[Tensor] {
        &self.velocity
    }

    pub fn set_velocity(&mut self, velocity: Vec<Tensor>) {
        self.velocity = velocity;
    }

    /// Apply one update from the gradients accumulated in `graph`, then zero
    /// those gradients. Every non-frozen parameter must have a gradient.
    pub fn step(&mut self, store: &mut ParamStore, graph: &mut Graph, binding: &Binding) -> Result<()> {
        for (id, param) in store.iter_mut() {
            if param.frozen {
                continue;
            }
            let var = binding.var(id);
            let grad = graph.grad(var).ok_or_else(|| {
                Error::Optim(format!(
                    "missing gradient for non-frozen parameter '{}'",
                    param.name
                ))
            })?;
            let v = &mut self.velocity[id.0];
            for ((vi, gi), ti) in v
                .data_mut()
                .iter_mut()
                .zip(grad.data())
                .zip(param.value.data_mut())
            {
                *vi = self.momentum * *vi + *gi;
                *ti -= self.lr * *vi;
            }
        }
        graph.zero_grads();
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn store_with(values: &[(&str, Tensor, bool)]) -> ParamStore {
        let mut s = ParamStore::new();
        for (name, t, frozen) in values {
            s.add((*name).into(), t.clone(), *frozen);
        }
        s
    }

    fn loss_graph(store: &ParamStore) -> (Graph, Binding, crate::graph::Var) {
        let mut g = Graph::new();
        let binding = store.bind(&mut g);
        let mut total = None;
        for (id, p) in store.iter() {
            if p.frozen {
                continue;
            }
            let s = g.sum(binding.var(id));
            total = Some(match total {
                None => s,
                Some(t) => g.add(t, s).unwrap(),
            });
        }
        let l = total.unwrap();
        (g, binding, l)
    }

    #[test]
    fn zero_lr_changes_nothing() {
        let mut store = store_with(&[("w", Tensor::full(&[3], 1.5), false)]);
        let mut sgd = Sgd::new(&store, 0.0, 0.9);
        let (mut g, binding, l) = loss_graph(&store);
        g.backward(l).unwrap();
        sgd.step(&mut store, &mut g, &binding).unwrap();
        assert_eq!(store.get(crate::params::ParamId(0)).value.data(), &[1.5, 1.5, 1.5]);
    }

    #[test]
    fn plain_gradient_step_subtracts_grad() {
        // mu=0, lr=1: theta decreases by exactly the gradient (ones for sum).
        let mut store = store_with(&[("w", Tensor::full(&[2], 3.0), false)]);
        let mut sgd = Sgd::new(&store, 1.0, 0.0);
        let (mut g, binding, l) = loss_graph(&store);
        g.backward(l).unwrap();
        sgd.step(&mut store, &mut g, &binding).unwrap();
        assert_eq!(store.get(crate::params::ParamId(0)).value.data(), &[2.0, 2.0]);
    }

    #[test]
    fn frozen_param_is_bitwise_stable_over_many_steps() {
        let mut rng = SplitMix64::new(4);
        let frozen_init: Vec<f32> = (0..4).map(|_| rng.range_f32(-1.0, 1.0)).collect();
        let mut store = store_with(&[
            ("live", Tensor::full(&[4], 0.2), false),
            ("ice", Tensor::from_vec(&[4], frozen_init.clone()).unwrap(), true),
        ]);
        let mut sgd = Sgd::new(&store, 0.05, 0.9);
        for _ in 0..100 {
            let (mut g, binding, l) = loss_graph(&store);
            g.backward(l).unwrap();
            sgd.step(&mut store, &mut g, &binding).unwrap();
        }
        let ice = store.find("ice").unwrap();
        let bits: Vec<u32> = store.get(ice).value.data().iter().map(|v| v.to_bits()).collect();
        let want: Vec<u32> = frozen_init.iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits, want);
        // And the live parameter did move.
        let live = store.find("live").unwrap();
        assert!(store.get(live).value.data().iter().all(|&v| v != 0.2));
    }

    #[test]
    fn missing_grad_on_live_param_is_rejected() {
        let mut store = store_with(&[("w", Tensor::full(&[2], 1.0), false)]);
        let mut sgd = Sgd::new(&store, 0.1, 0.9);
        let mut g = Graph::new();
        let binding = store.bind(&mut g);
        let err = sgd.step(&mut store, &mut g, &binding).unwrap_err();
        assert!(alloc::format!("{err}").contains("'w'"));
    }
}
