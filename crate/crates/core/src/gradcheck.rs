//! Central finite-difference verification of analytic gradients.
//!
//! The whole check runs in 64-bit arithmetic: the analytic side replays the
//! recorded graph forward and backward in f64 through the same generic
//! kernels the f32 training path uses, and the numeric side evaluates
//! central differences on the f64 replay, so the comparison is not dominated
//! by f32 rounding. Relative error uses `max(|analytic|, |numeric|, 1e-8)`.
//!
//! For deep composite graphs the replay freezes the base-point activation
//! pattern (relu masks, pool argmax): a perturbation is then differenced on
//! the same linearization the backward pass differentiates, instead of
//! measuring kink crossings that any subgradient method ignores. Primitive
//! checks use the strict (fresh recompute) replay.

use alloc::format;
use alloc::vec::Vec;

use crate::config::NetworkConfig;
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::net::Network;
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

pub const DEFAULT_EPS: f64 = 1e-3;

pub struct Checker<'g> {
    graph: &'g Graph,
    loss: Var,
    grads: Vec<Option<Vec<f64>>>,
    frozen_pattern: bool,
}

impl<'g> Checker<'g> {
    pub fn new(graph: &'g Graph, loss: Var, frozen_pattern: bool) -> Result<Self> {
        let grads = graph.backward_f64(loss)?;
        Ok(Checker {
            graph,
            loss,
            grads,
            frozen_pattern,
        })
    }

    /// Worst relative error over every coordinate of `param`.
    pub fn check(&self, param: Var, eps: f64) -> Result<f64> {
        self.check_sampled(param, eps, usize::MAX)
    }

    /// Worst relative error over at most `max_coords` coordinates, chosen by
    /// a deterministic stream for large parameters.
    pub fn check_sampled(&self, param: Var, eps: f64, max_coords: usize) -> Result<f64> {
        if !(eps > 0.0 && eps <= 1e-1) {
            return Err(Error::Graph(format!(
                "finite-difference eps {eps} outside (0, 0.1]"
            )));
        }
        if !self.graph.is_leaf(param) || !self.graph.requires_grad(param) {
            return Err(Error::Graph(
                "finite-difference check target must be a trainable leaf".into(),
            ));
        }
        let n = self.graph.value(param).numel();
        let coords: Vec<usize> = if n <= max_coords {
            (0..n).collect()
        } else {
            let mut rng = SplitMix64::for_stream(0x6664, param.index() as u64);
            (0..max_coords).map(|_| rng.next_below(n as u64) as usize).collect()
        };
        let analytic = self.grads[param.index()].as_deref();
        let mut worst = 0.0f64;
        for i in coords {
            let base = self.graph.value(param).data()[i] as f64;
            let plus = self
                .graph
                .eval_f64(self.loss, Some((param, i, base + eps)), self.frozen_pattern)?;
            let minus = self
                .graph
                .eval_f64(self.loss, Some((param, i, base - eps)), self.frozen_pattern)?;
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.map_or(0.0, |g| g[i]);
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max((a - numeric).abs() / denom);
        }
        Ok(worst)
    }

    /// Worst error over every trainable leaf. Frozen parameters are bound
    /// without gradient tracking, so they are excluded from the set.
    pub fn check_all(&self, eps: f64, max_coords: usize) -> Result<f64> {
        let mut worst = 0.0f64;
        for param in self.graph.trainable_leaves() {
            worst = worst.max(self.check_sampled(param, eps, max_coords)?);
        }
        Ok(worst)
    }
}

/// One-shot strict check of a single trainable leaf.
pub fn check_param(g: &Graph, loss: Var, param: Var, eps: f64) -> Result<f64> {
    Checker::new(g, loss, false)?.check(param, eps)
}

/// One-shot strict check over every trainable leaf.
pub fn check_all_params(g: &Graph, loss: Var, eps: f64) -> Result<f64> {
    Checker::new(g, loss, false)?.check_all(eps, usize::MAX)
}

#[derive(Debug, Clone)]
pub struct SuiteEntry {
    pub name: &'static str,
    pub max_rel_error: f64,
}

/// Keep values away from relu/pool kinks so strict central differences stay
/// on one smooth piece.
fn nudged(t: &mut Tensor, margin: f32) {
    for v in t.data_mut() {
        *v += if *v >= 0.0 { margin } else { -margin };
    }
}

fn rand_tensor(rng: &mut SplitMix64, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.range_f32(-1.0, 1.0)).collect()).expect("shape ok")
}

/// Run the finite-difference suite over every differentiable primitive plus
/// dual-path composites. Returns one entry per construct.
pub fn run_suite(seed: u64) -> Result<Vec<SuiteEntry>> {
    let mut rng = SplitMix64::for_stream(seed, 0x7375_6974_65);
    let mut out = Vec::new();
    let eps = DEFAULT_EPS;

    // Pure linear graph: central differences are exact up to f64 noise.
    {
        let mut g = Graph::new();
        let x = g.param(rand_tensor(&mut rng, &[2, 3, 4, 4]));
        let l = g.sum(x);
        out.push(SuiteEntry {
            name: "linear_sum",
            max_rel_error: check_all_params(&g, l, eps)?,
        });
    }

    {
        let mut g = Graph::new();
        let p = g.param(rand_tensor(&mut rng, &[2, 4, 5, 5]));
        let t = g.param(rand_tensor(&mut rng, &[2, 4, 5, 5]));
        let l = g.sse_loss(p, t)?;
        out.push(SuiteEntry {
            name: "sse_loss",
            max_rel_error: check_all_params(&g, l, eps)?,
        });
    }

    {
        let mut g = Graph::new();
        let x = g.param(rand_tensor(&mut rng, &[2, 3, 6, 6]));
        let w = g.param(rand_tensor(&mut rng, &[4, 3, 3, 3]));
        let b = g.param(rand_tensor(&mut rng, &[4]));
        let tgt = g.input(rand_tensor(&mut rng, &[2, 4, 6, 6]));
        let y = g.conv2d(x, w, b, 1, 1, 1)?;
        let l = g.sse_loss(y, tgt)?;
        out.push(SuiteEntry {
            name: "conv2d",
            max_rel_error: check_all_params(&g, l, eps)?,
        });
    }

    {
        let mut g = Graph::new();
        let x = g.param(rand_tensor(&mut rng, &[1, 8, 6, 6]));
        let w = g.param(rand_tensor(&mut rng, &[8, 2, 3, 3]));
        let b = g.param(rand_tensor(&mut rng, &[8]));
        let tgt = g.input(rand_tensor(&mut rng, &[1, 8, 6, 6]));
        let y = g.conv2d(x, w, b, 1, 1, 4)?;
        let l = g.sse_loss(y, tgt)?;
        out.push(SuiteEntry {
            name: "conv2d_grouped",
            max_rel_error: check_all_params(&g, l, eps)?,
        });
    }

    {
        let mut g = Graph::new();
        let x = g.param(rand_tensor(&mut rng, &[1, 4, 6, 6]));
        let w = g.param(rand_tensor(&mut rng, &[6, 4, 3, 3]));
        let b = g.param(rand_tensor(&mut rng, &[6]));
        let y = g.conv2d(x, w, b, 2, 1, 1)?;
        let tgt = g.input(rand_tensor(&mut rng, &[1, 6, 3, 3]));
        let l = g.sse_loss(y, tgt)?;
        out.push(SuiteEntry {
            name: "conv2d_strided",
            max_rel_error: check_all_params(&g, l, eps)?,
        });
    }

    {
        let mut g = Graph::new();
        let mut t = rand_tensor(&mut rng, &[2, 4, 5, 5]);
        nudged(&mut t, 0.05);
        let x = g.param(t);
        let y = g.relu(x);
        let tgt = g.input(rand_tensor(&mut rng, &[2, 4, 5, 5]));
        let l = g.sse_loss(y, tgt)?;
        out.push(SuiteEntry {
            name: "relu",
            max_rel_error: check_all_params(&g, l, eps)?,
        });
    }

    {
        let mut g = Graph::new();
        let x = g.param(rand_tensor(&mut rng, &[1, 3, 6, 6]));
        let y = g.max_pool_2x2(x)?;
        let tgt = g.input(rand_tensor(&mut rng, &[1, 3, 3, 3]));
        let l = g.sse_loss(y, tgt)?;
        out.push(SuiteEntry {
            name: "max_pool_2x2",
            max_rel_error: check_all_params(&g, l, eps)?,
        });
    }

    {
        let mut g = Graph::new();
        let a = g.param(rand_tensor(&mut rng, &[1, 3, 4, 4]));
        let b = g.param(rand_tensor(&mut rng, &[1, 5, 4, 4]));
        let y = g.concat(&[a, b])?;
        let tgt = g.input(rand_tensor(&mut rng, &[1, 8, 4, 4]));
        let l = g.sse_loss(y, tgt)?;
        out.push(SuiteEntry {
            name: "concat",
            max_rel_error: check_all_params(&g, l, eps)?,
        });
    }

    {
        let mut g = Graph::new();
        let x = g.param(rand_tensor(&mut rng, &[1, 2, 4, 4]));
        let y = g.add(x, x)?;
        let tgt = g.input(rand_tensor(&mut rng, &[1, 2, 4, 4]));
        let l = g.sse_loss(y, tgt)?;
        out.push(SuiteEntry {
            name: "add_fanout",
            max_rel_error: check_all_params(&g, l, eps)?,
        });
    }

    // One dual-path block wired from raw ops (r=4, d0=2, g=2, w=4, G=2).
    {
        let mut g = Graph::new();
        let mut kp_t = rand_tensor(&mut rng, &[1, 4, 4, 4]);
        nudged(&mut kp_t, 0.05);
        let mut ap_t = rand_tensor(&mut rng, &[1, 2, 4, 4]);
        nudged(&mut ap_t, 0.05);
        let kp = g.param(kp_t);
        let ap = g.param(ap_t);
        let w1 = g.param(rand_tensor(&mut rng, &[4, 6, 1, 1]));
        let b1 = g.param(rand_tensor(&mut rng, &[4]));
        let w2 = g.param(rand_tensor(&mut rng, &[4, 2, 3, 3]));
        let b2 = g.param(rand_tensor(&mut rng, &[4]));
        let w3 = g.param(rand_tensor(&mut rng, &[4, 4, 1, 1]));
        let b3 = g.param(rand_tensor(&mut rng, &[4]));
        let w4 = g.param(rand_tensor(&mut rng, &[2, 4, 1, 1]));
        let b4 = g.param(rand_tensor(&mut rng, &[2]));
        let x = g.concat(&[kp, ap])?;
        let y = g.conv2d(x, w1, b1, 1, 0, 1)?;
        let y = g.relu(y);
        let y = g.conv2d(y, w2, b2, 1, 1, 2)?;
        let y = g.relu(y);
        let res = g.conv2d(y, w3, b3, 1, 0, 1)?;
        let dense = g.conv2d(y, w4, b4, 1, 0, 1)?;
        let kp2 = g.add(kp, res)?;
        let ap2 = g.concat(&[ap, dense])?;
        let both = g.concat(&[kp2, ap2])?;
        let tgt = g.input(rand_tensor(&mut rng, &[1, 8, 4, 4]));
        let l = g.sse_loss(both, tgt)?;
        // Frozen pattern: two stacked relus after random convs sit too close
        // to their kinks for strict differencing.
        out.push(SuiteEntry {
            name: "dpn_block",
            max_rel_error: Checker::new(&g, l, true)?.check_all(eps, usize::MAX)?,
        });
    }

    out.push(network_entry(
        "dpn_network_2stage",
        NetworkConfig::micro(),
        seed,
        2048,
    )?);

    {
        let mut cfg = NetworkConfig::micro();
        cfg.arch = crate::config::Arch::Baseline;
        out.push(network_entry("baseline_network_2stage", cfg, seed, 512)?);
    }

    Ok(out)
}

/// Finite-difference check of a whole network: frontend unfrozen so every
/// parameter participates, loss = sum of per-stage SSE against random
/// targets. Uses the frozen-pattern replay.
fn network_entry(
    name: &'static str,
    cfg: NetworkConfig,
    seed: u64,
    max_coords: usize,
) -> Result<SuiteEntry> {
    let mut rng = SplitMix64::for_stream(seed, 0x6e6574);
    let mut net = Network::new(&cfg, seed)?;
    net.set_frontend_frozen(false);
    let mut g = Graph::new();
    let binding = net.store.bind(&mut g);
    let images = g.input(rand_tensor(&mut rng, &[1, 3, 16, 16]));
    let outputs = net.forward(&mut g, &binding, images)?;
    let mut total: Option<Var> = None;
    for o in &outputs {
        let s_tgt = g.input(rand_tensor(&mut rng, g.value(o.s).shape()));
        let l_tgt = g.input(rand_tensor(&mut rng, g.value(o.l).shape()));
        let fs = g.sse_loss(o.s, s_tgt)?;
        let fl = g.sse_loss(o.l, l_tgt)?;
        let stage = g.add(fs, fl)?;
        total = Some(match total {
            None => stage,
            Some(t) => g.add(t, stage)?,
        });
    }
    let loss = total.expect("at least one stage");
    Ok(SuiteEntry {
        name,
        max_rel_error: Checker::new(&g, loss, true)?.check_all(DEFAULT_EPS, max_coords)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_graph_error_is_noise_level() {
        let mut g = Graph::new();
        let mut rng = SplitMix64::new(8);
        let x = g.param(rand_tensor(&mut rng, &[2, 3, 4, 4]));
        let l = g.sum(x);
        let err = check_all_params(&g, l, 1e-3).unwrap();
        assert!(err < 1e-6, "linear error {err}");
    }

    #[test]
    fn conv_relu_sse_micrograph_passes() {
        let mut g = Graph::new();
        let mut rng = SplitMix64::new(12);
        let mut xt = rand_tensor(&mut rng, &[1, 2, 5, 5]);
        nudged(&mut xt, 0.05);
        let x = g.param(xt);
        let w = g.param(rand_tensor(&mut rng, &[3, 2, 3, 3]));
        let b = g.param(rand_tensor(&mut rng, &[3]));
        let y = g.conv2d(x, w, b, 1, 1, 1).unwrap();
        let y = g.relu(y);
        let tgt = g.input(rand_tensor(&mut rng, &[1, 3, 5, 5]));
        let l = g.sse_loss(y, tgt).unwrap();
        let err = check_all_params(&g, l, 1e-3).unwrap();
        assert!(err < 1e-4, "conv+relu+sse error {err}");
    }

    #[test]
    fn frozen_params_are_excluded() {
        let mut g = Graph::new();
        let mut rng = SplitMix64::new(14);
        let live = g.param(rand_tensor(&mut rng, &[2, 2]));
        let frozen = g.leaf(rand_tensor(&mut rng, &[2, 2]), false);
        let s1 = g.sum(live);
        let s2 = g.sum(frozen);
        let l = g.add(s1, s2).unwrap();
        assert_eq!(g.trainable_leaves(), alloc::vec![live]);
        // Checking the frozen leaf directly is an error.
        assert!(check_param(&g, l, frozen, 1e-3).is_err());
    }

    #[test]
    fn eps_range_is_enforced() {
        let mut g = Graph::new();
        let x = g.param(Tensor::full(&[2], 1.0));
        let l = g.sum(x);
        assert!(check_param(&g, l, x, 0.0).is_err());
        assert!(check_param(&g, l, x, 0.2).is_err());
        assert!(check_param(&g, l, x, 0.05).is_ok());
    }

    #[test]
    fn f32_backward_tracks_f64_backward_on_whole_network() {
        // The production f32 backward and the checker's f64 backward share
        // kernels but not wiring; keep them aligned on a real network.
        let cfg = NetworkConfig::micro();
        let mut net = Network::new(&cfg, 77).unwrap();
        net.set_frontend_frozen(false);
        let mut g = Graph::new();
        let binding = net.store.bind(&mut g);
        let mut rng = SplitMix64::new(78);
        let images = g.input(rand_tensor(&mut rng, &[1, 3, 16, 16]));
        let outputs = net.forward(&mut g, &binding, images).unwrap();
        let mut total = None;
        for o in &outputs {
            let s_tgt = g.input(rand_tensor(&mut rng, g.value(o.s).shape()));
            let l_tgt = g.input(rand_tensor(&mut rng, g.value(o.l).shape()));
            let fs = g.sse_loss(o.s, s_tgt).unwrap();
            let fl = g.sse_loss(o.l, l_tgt).unwrap();
            let stage = g.add(fs, fl).unwrap();
            total = Some(match total {
                None => stage,
                Some(t) => g.add(t, stage).unwrap(),
            });
        }
        let loss = total.unwrap();
        let grads64 = g.backward_f64(loss).unwrap();
        g.backward(loss).unwrap();
        for (id, p) in net.store.iter() {
            let var = binding.var(id);
            let g32 = g.grad(var).expect("f32 grad");
            let g64 = grads64[var.index()].as_ref().expect("f64 grad");
            for (a, b) in g32.data().iter().zip(g64) {
                let err = (*a as f64 - b).abs() / (1.0 + b.abs());
                assert!(err < 1e-3, "{}: f32 {a} vs f64 {b}", p.name);
            }
        }
    }
}
