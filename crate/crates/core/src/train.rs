//! Per-stage losses, the training loop, and held-out evaluation.
//!
//! Each stage is supervised independently: the total objective is the
//! unweighted sum over stages of the heatmap SSE plus the PAF SSE.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::checkpoint::Checkpoint;
use crate::config::{RunConfig, INPUT_STRIDE};
use crate::decode::{decode_maps, multi_scale_infer, pck_counts};
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::net::{Network, StageOutput};
use crate::optim::Sgd;
use crate::synth::{generate_scene, make_split};
use crate::targets::render_targets;
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainParams {
    pub steps: usize,
    pub batch: usize,
    pub lr: f32,
    pub momentum: f32,
    /// Zero learning rate for the shared frontend. Off by default: unlike a
    /// pretrained frontend, randomly initialized features are worth training.
    pub freeze_frontend: bool,
    pub log_interval: usize,
    pub n_train: usize,
    pub n_eval: usize,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            steps: 200,
            batch: 4,
            lr: 1e-4,
            momentum: 0.9,
            freeze_frontend: false,
            log_interval: 20,
            n_train: 512,
            n_eval: 50,
        }
    }
}

impl TrainParams {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("steps must be >= 1".into()));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch must be >= 1".into()));
        }
        if self.log_interval == 0 {
            return Err(Error::Config("log_interval must be >= 1".into()));
        }
        Ok(())
    }
}

/// Heatmap and PAF SSE of one stage against the rendered ground truth.
pub fn stage_losses(g: &mut Graph, out: &StageOutput, s_star: Var, l_star: Var) -> Result<(Var, Var)> {
    Ok((g.sse_loss(out.s, s_star)?, g.sse_loss(out.l, l_star)?))
}

/// Unweighted sum of every stage's pair of losses.
pub fn total_loss(g: &mut Graph, stage_loss_pairs: &[(Var, Var)]) -> Result<Var> {
    if stage_loss_pairs.is_empty() {
        return Err(Error::Graph("total_loss over an empty stage list".into()));
    }
    let mut total: Option<Var> = None;
    for &(fs, fl) in stage_loss_pairs {
        let pair = g.add(fs, fl)?;
        total = Some(match total {
            None => pair,
            Some(t) => g.add(t, pair)?,
        });
    }
    Ok(total.expect("non-empty"))
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRecord {
    pub step: usize,
    pub total: f32,
    /// Per-stage heatmap loss.
    pub stage_s: Vec<f32>,
    /// Per-stage PAF loss.
    pub stage_l: Vec<f32>,
}

impl LogRecord {
    pub fn tsv_header(stages: usize) -> String {
        let mut s = String::from("step\ttotal");
        for t in 1..=stages {
            s.push_str(&format!("\tf_S_stage{t}\tf_L_stage{t}"));
        }
        s
    }

    pub fn to_tsv(&self) -> String {
        let mut s = format!("{}\t{}", self.step, self.total);
        for (fs, fl) in self.stage_s.iter().zip(&self.stage_l) {
            s.push_str(&format!("\t{fs}\t{fl}"));
        }
        s
    }
}

#[derive(Debug)]
pub struct TrainOutcome {
    pub checkpoint: Checkpoint,
    pub initial_loss: f32,
    pub final_loss: f32,
    pub logs: Vec<LogRecord>,
}

/// Deterministic training over the synthetic train split. Scenes are
/// consumed in index order, cycling when the split is exhausted. Aborts with
/// [`Error::Diverged`] if the loss stops being finite.
pub fn train_loop(cfg: &RunConfig, mut on_log: impl FnMut(&LogRecord)) -> Result<TrainOutcome> {
    cfg.validate_training()?;
    let params = &cfg.train;
    let (train_range, _) = make_split(params.n_train, params.n_eval)?;

    let mut net = Network::new(&cfg.net, cfg.seed)?;
    net.set_frontend_frozen(params.freeze_frontend);
    let mut sgd = Sgd::new(&net.store, params.lr, params.momentum);

    let mut initial_loss = 0.0f32;
    let mut final_loss = 0.0f32;
    let mut logs = Vec::new();

    for step in 0..params.steps {
        let mut images = Vec::with_capacity(params.batch);
        let mut s_stars = Vec::with_capacity(params.batch);
        let mut l_stars = Vec::with_capacity(params.batch);
        for b in 0..params.batch {
            let offset = (step * params.batch + b) % params.n_train;
            let index = train_range.start + offset as u64;
            let (image, ann) = generate_scene(&cfg.synth, index)?;
            let maps = render_targets(&ann, cfg.net.keypoint_channels, INPUT_STRIDE, &cfg.targets)?;
            images.push(image);
            s_stars.push(maps.s_star);
            l_stars.push(maps.l_star);
        }
        let images = Tensor::stack_batch(&images)?;
        let s_star = Tensor::stack_batch(&s_stars)?;
        let l_star = Tensor::stack_batch(&l_stars)?;

        let mut g = Graph::new();
        let binding = net.store.bind(&mut g);
        let images = g.input(images);
        let s_star = g.input(s_star);
        let l_star = g.input(l_star);
        let outputs = net.forward(&mut g, &binding, images)?;
        let mut pairs = Vec::with_capacity(outputs.len());
        for out in &outputs {
            pairs.push(stage_losses(&mut g, out, s_star, l_star)?);
        }
        let total = total_loss(&mut g, &pairs)?;
        let total_value = g.value(total).item()?;
        if !total_value.is_finite() {
            return Err(Error::Diverged { step });
        }
        if step == 0 {
            initial_loss = total_value;
        }
        final_loss = total_value;

        if step % params.log_interval == 0 || step + 1 == params.steps {
            let record = LogRecord {
                step,
                total: total_value,
                stage_s: pairs
                    .iter()
                    .map(|&(fs, _)| g.value(fs).item().expect("scalar"))
                    .collect(),
                stage_l: pairs
                    .iter()
                    .map(|&(_, fl)| g.value(fl).item().expect("scalar"))
                    .collect(),
            };
            on_log(&record);
            logs.push(record);
        }

        g.backward(total)?;
        sgd.step(&mut net.store, &mut g, &binding)?;
    }

    Ok(TrainOutcome {
        checkpoint: Checkpoint::capture(&net, Some(&sgd), params.steps as u64),
        initial_loss,
        final_loss,
        logs,
    })
}

/// Decode every held-out scene and aggregate PCK@alpha over all visible
/// keypoints.
pub fn evaluate_pck(net: &Network, cfg: &RunConfig, alpha: f32) -> Result<f32> {
    cfg.validate_training()?;
    let (_, eval_range) = make_split(cfg.train.n_train, cfg.train.n_eval)?;
    let mut correct = 0usize;
    let mut total = 0usize;
    for index in eval_range {
        let (image, ann) = generate_scene(&cfg.synth, index)?;
        let (s, l) = multi_scale_infer(net, &image, &cfg.decode.scales)?;
        let poses = decode_maps(&s, &l, &ann.limbs, INPUT_STRIDE, &cfg.decode)?;
        let (c, t) = pck_counts(&poses, &ann, alpha)?;
        correct += c;
        total += t;
    }
    if total == 0 {
        return Ok(1.0);
    }
    Ok(correct as f32 / total as f32)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::NetworkConfig;
    use crate::rng::SplitMix64;
    use crate::synth::SynthParams;

    fn rand_tensor(rng: &mut SplitMix64, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::from_vec(shape, (0..n).map(|_| rng.range_f32(-1.0, 1.0)).collect()).unwrap()
    }

    #[test]
    fn stage_loss_trivial_values() {
        let mut g = Graph::new();
        let pred = g.input(Tensor::full(&[1, 2, 4, 4], 1.0));
        let tgt = g.input(Tensor::full(&[1, 2, 4, 4], 1.0));
        let l = g.sse_loss(pred, tgt).unwrap();
        assert_eq!(g.value(l).item().unwrap(), 0.0);

        // Prediction one above target everywhere, J=2 over 4x4 maps: 32.
        let off = g.input(Tensor::full(&[1, 2, 4, 4], 2.0));
        let l = g.sse_loss(off, tgt).unwrap();
        assert_eq!(g.value(l).item().unwrap(), 32.0);
    }

    #[test]
    fn stage_losses_match_double_sum_oracle() {
        let mut rng = SplitMix64::new(61);
        for _ in 0..5 {
            let p = rand_tensor(&mut rng, &[1, 3, 4, 5]);
            let t = rand_tensor(&mut rng, &[1, 3, 4, 5]);
            let mut want = 0.0f64;
            for c in 0..3 {
                for y in 0..4 {
                    for x in 0..5 {
                        let d = (p.at4(0, c, y, x) - t.at4(0, c, y, x)) as f64;
                        want += d * d;
                    }
                }
            }
            let mut g = Graph::new();
            let pv = g.input(p);
            let tv = g.input(t);
            let l = g.sse_loss(pv, tv).unwrap();
            let got = g.value(l).item().unwrap() as f64;
            assert!((got - want).abs() / want.max(1e-12) < 1e-6);
        }
    }

    #[test]
    fn total_loss_adds_stages_linearly() {
        let mut g = Graph::new();
        let a = g.input(Tensor::scalar(1.25));
        let b = g.input(Tensor::scalar(0.5));
        // T=1: total = f_S + f_L.
        let total = total_loss(&mut g, &[(a, b)]).unwrap();
        assert_eq!(g.value(total).item().unwrap(), 1.75);
        // T=3 with identical stages: three times the single-stage sum.
        let total = total_loss(&mut g, &[(a, b), (a, b), (a, b)]).unwrap();
        assert_eq!(g.value(total).item().unwrap(), 3.0 * 1.75);
        // Empty list rejected.
        assert!(total_loss(&mut g, &[]).is_err());
    }

    fn micro_run_config() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.net = NetworkConfig::micro();
        // Micro net has J=2: one synthetic keypoint plus background.
        cfg.net.keypoint_channels = 2;
        cfg.net.paf_channels = 2;
        cfg.synth = SynthParams {
            width: 32,
            height: 32,
            max_persons: 1,
            skeleton: crate::synth::Skeleton::ring(1),
            scale_range: (10.0, 14.0),
            ..SynthParams::default()
        };
        cfg.synth.skeleton.limbs = alloc::vec![(0, 0)];
        cfg.train.steps = 3;
        cfg.train.batch = 2;
        cfg.train.n_train = 8;
        cfg.train.n_eval = 2;
        cfg
    }

    #[test]
    fn training_is_deterministic_and_logs() {
        let cfg = micro_run_config();
        let run = || {
            let mut seen = Vec::new();
            let out = train_loop(&cfg, |r| seen.push(r.clone())).unwrap();
            (seen, out.initial_loss, out.final_loss)
        };
        let (l1, i1, f1) = run();
        let (l2, i2, f2) = run();
        assert_eq!(l1, l2);
        assert_eq!(i1.to_bits(), i2.to_bits());
        assert_eq!(f1.to_bits(), f2.to_bits());
        assert!(!l1.is_empty());
    }

    #[test]
    fn freeze_flag_keeps_frontend_bitwise_stable() {
        let mut cfg = micro_run_config();
        cfg.train.freeze_frontend = true;
        cfg.train.steps = 5;
        let reference = Network::new(&cfg.net, cfg.seed).unwrap();
        let out = train_loop(&cfg, |_| {}).unwrap();
        let trained = out.checkpoint.build_network().unwrap();
        let mut frontend_checked = 0;
        let mut nonfrontend_changed = false;
        for ((_, p0), (_, p1)) in reference.store.iter().zip(trained.store.iter()) {
            assert_eq!(p0.name, p1.name);
            if p0.name.starts_with("frontend.") {
                let b0: Vec<u32> = p0.value.data().iter().map(|v| v.to_bits()).collect();
                let b1: Vec<u32> = p1.value.data().iter().map(|v| v.to_bits()).collect();
                assert_eq!(b0, b1, "frontend tensor {} moved", p0.name);
                frontend_checked += 1;
            } else if p0.value != p1.value {
                nonfrontend_changed = true;
            }
        }
        assert!(frontend_checked > 0);
        assert!(nonfrontend_changed, "no stage parameter changed");
    }

    #[test]
    fn gradient_reaches_every_stage_with_intermediate_supervision() {
        let cfg = micro_run_config();
        let mut net = Network::new(&cfg.net, 3).unwrap();
        net.set_frontend_frozen(false);
        let mut g = Graph::new();
        let binding = net.store.bind(&mut g);
        let mut rng = SplitMix64::new(70);
        let images = g.input(rand_tensor(&mut rng, &[1, 3, 32, 32]));
        let outputs = net.forward(&mut g, &binding, images).unwrap();
        let s_star = g.input(rand_tensor(&mut rng, g.value(outputs[0].s).shape()));
        let l_star = g.input(rand_tensor(&mut rng, g.value(outputs[0].l).shape()));
        let mut pairs = Vec::new();
        for out in &outputs {
            pairs.push(stage_losses(&mut g, out, s_star, l_star).unwrap());
        }
        let total = total_loss(&mut g, &pairs).unwrap();
        g.backward(total).unwrap();
        for (id, p) in net.store.iter() {
            let grad = g.grad(binding.var(id)).expect("gradient populated");
            let nonzero = grad.data().iter().any(|&v| v != 0.0);
            assert!(nonzero, "parameter {} received a zero gradient", p.name);
        }
    }

    #[test]
    fn stage2_head_gets_no_gradient_from_stage1_only_loss() {
        let cfg = micro_run_config();
        let net = Network::new(&cfg.net, 5).unwrap();
        let mut g = Graph::new();
        let binding = net.store.bind(&mut g);
        let mut rng = SplitMix64::new(71);
        let images = g.input(rand_tensor(&mut rng, &[1, 3, 32, 32]));
        let outputs = net.forward(&mut g, &binding, images).unwrap();
        let s_star = g.input(rand_tensor(&mut rng, g.value(outputs[0].s).shape()));
        let l_star = g.input(rand_tensor(&mut rng, g.value(outputs[0].l).shape()));
        let pair = stage_losses(&mut g, &outputs[0], s_star, l_star).unwrap();
        let total = total_loss(&mut g, &[pair]).unwrap();
        g.backward(total).unwrap();
        let head2 = net.store.find("stage2.head_s.weight").unwrap();
        assert!(g.grad(binding.var(head2)).is_none());
        let head1 = net.store.find("stage1.head_s.weight").unwrap();
        assert!(g.grad(binding.var(head1)).is_some());
    }

    #[test]
    fn loss_decreases_on_micro_training() {
        let mut cfg = micro_run_config();
        cfg.train.steps = 60;
        cfg.train.lr = 2e-4;
        let out = train_loop(&cfg, |_| {}).unwrap();
        assert!(
            out.final_loss < out.initial_loss,
            "loss {} -> {}",
            out.initial_loss,
            out.final_loss
        );
    }
}
