//! Network construction and forward passes.
//!
//! Both architectures share the VGG-style frontend: ten 3x3 convs in the
//! 64,64 | 128,128 | 256,256,256,256 | 512,512 pattern with three interleaved
//! 2x2 max-pools, then two 3x3 convs narrowing 512 -> 256 -> 128. The
//! frontend output F (128 channels at stride 8) feeds every stage.
//!
//! A dual-path stage projects its input into a keypoint branch (constant
//! `residual_width` channels, updated by element-wise addition) and an
//! association branch (grows by `growth` channels per block via
//! concatenation), then regresses heatmaps from the keypoint branch and PAFs
//! from the accumulated association branch with linear 1x1 heads.
//!
//! A baseline stage runs two independent plain conv branches, one per output.
//!
//! [`conv_specs`] enumerates every conv layer of a configuration; the
//! builders consume the same enumeration, so closed-form parameter counting
//! in [`crate::analyze`] can never drift from the constructed network.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::config::{Arch, NetworkConfig, INPUT_STRIDE};
use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::kernels::same_padding;
use crate::params::{kaiming_conv_weight, Binding, ParamId, ParamStore};
use crate::rng::SplitMix64;
use crate::tensor::Tensor;

/// Geometry of one conv layer: enough to build it and to count it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConvSpec {
    pub name: String,
    pub cin: usize,
    pub cout: usize,
    pub kh: usize,
    pub kw: usize,
    pub groups: usize,
    /// Spatial downsampling factor of this layer's output relative to the
    /// network input (1, 2, 4, or 8).
    pub scale: usize,
}

impl ConvSpec {
    fn new(name: String, cin: usize, cout: usize, k: usize, groups: usize, scale: usize) -> Self {
        ConvSpec {
            name,
            cin,
            cout,
            kh: k,
            kw: k,
            groups,
            scale,
        }
    }

    /// Weights plus biases.
    pub fn param_count(&self) -> u64 {
        (self.cout * (self.cin / self.groups) * self.kh * self.kw + self.cout) as u64
    }

    /// Multiply-accumulates for one image of the given input size.
    pub fn macs(&self, input_h: usize, input_w: usize) -> u64 {
        let (oh, ow) = (input_h / self.scale, input_w / self.scale);
        (oh * ow) as u64 * (self.cout * (self.cin / self.groups) * self.kh * self.kw) as u64
    }
}

/// Pools sit after these frontend conv indices (0-based).
const FRONTEND_POOLS_AFTER: [usize; 3] = [1, 3, 7];

/// The twelve frontend convs. `width_div` scales every width except the RGB
/// input.
pub fn frontend_specs(width_div: usize) -> Vec<ConvSpec> {
    let widths = [64, 64, 128, 128, 256, 256, 256, 256, 512, 512, 256, 128];
    let names = [
        "conv1_1", "conv1_2", "conv2_1", "conv2_2", "conv3_1", "conv3_2", "conv3_3", "conv3_4",
        "conv4_1", "conv4_2", "conv4_3", "conv4_4",
    ];
    let mut specs = Vec::with_capacity(12);
    let mut cin = 3;
    let mut scale = 1;
    for (i, (&w, name)) in widths.iter().zip(names).enumerate() {
        let cout = w / width_div;
        specs.push(ConvSpec::new(format!("frontend.{name}"), cin, cout, 3, 1, scale));
        cin = cout;
        if FRONTEND_POOLS_AFTER.contains(&i) {
            scale *= 2;
        }
    }
    specs
}

/// Conv layers of stage `t` (1-based) for the configured architecture.
pub fn stage_specs(cfg: &NetworkConfig, t: usize) -> Vec<ConvSpec> {
    match cfg.arch {
        Arch::Dpn => dpn_stage_specs(cfg, t),
        Arch::Baseline => baseline_stage_specs(cfg, t),
    }
}

fn dpn_stage_specs(cfg: &NetworkConfig, t: usize) -> Vec<ConvSpec> {
    let pre = format!("stage{t}");
    let (r, d0, g, w, card) = (
        cfg.residual_width,
        cfg.dense_seed,
        cfg.growth,
        cfg.bottleneck,
        cfg.cardinality,
    );
    let cin = cfg.stage_input_channels(t);
    let blocks = cfg.blocks_for_stage(t);
    let mut specs = Vec::new();
    specs.push(ConvSpec::new(format!("{pre}.proj_kp"), cin, r, 1, 1, 8));
    specs.push(ConvSpec::new(format!("{pre}.proj_ap"), cin, d0, 1, 1, 8));
    for b in 1..=blocks {
        let block_in = r + cfg.dense_width_after(b - 1);
        specs.push(ConvSpec::new(format!("{pre}.block{b}.reduce"), block_in, w, 1, 1, 8));
        specs.push(ConvSpec::new(format!("{pre}.block{b}.grouped"), w, w, 3, card, 8));
        specs.push(ConvSpec::new(format!("{pre}.block{b}.residual_out"), w, r, 1, 1, 8));
        specs.push(ConvSpec::new(format!("{pre}.block{b}.dense_out"), w, g, 1, 1, 8));
    }
    specs.push(ConvSpec::new(format!("{pre}.head_s"), r, cfg.keypoint_channels, 1, 1, 8));
    specs.push(ConvSpec::new(
        format!("{pre}.head_l"),
        cfg.dense_width_after(blocks),
        cfg.paf_channels,
        1,
        1,
        8,
    ));
    specs
}

fn baseline_stage_specs(cfg: &NetworkConfig, t: usize) -> Vec<ConvSpec> {
    let bw = 128 / cfg.width_div;
    let mid = 512 / cfg.width_div;
    let cin = cfg.stage_input_channels(t);
    let mut specs = Vec::new();
    for (branch, cout) in [("s", cfg.keypoint_channels), ("l", cfg.paf_channels)] {
        let pre = format!("stage{t}.branch_{branch}");
        if t == 1 {
            specs.push(ConvSpec::new(format!("{pre}.conv1"), cin, bw, 3, 1, 8));
            specs.push(ConvSpec::new(format!("{pre}.conv2"), bw, bw, 3, 1, 8));
            specs.push(ConvSpec::new(format!("{pre}.conv3"), bw, bw, 3, 1, 8));
            specs.push(ConvSpec::new(format!("{pre}.conv4"), bw, mid, 1, 1, 8));
            specs.push(ConvSpec::new(format!("{pre}.head"), mid, cout, 1, 1, 8));
        } else {
            specs.push(ConvSpec::new(format!("{pre}.conv1"), cin, bw, 7, 1, 8));
            for i in 2..=5 {
                specs.push(ConvSpec::new(format!("{pre}.conv{i}"), bw, bw, 7, 1, 8));
            }
            specs.push(ConvSpec::new(format!("{pre}.conv6"), bw, bw, 1, 1, 8));
            specs.push(ConvSpec::new(format!("{pre}.head"), bw, cout, 1, 1, 8));
        }
    }
    specs
}

/// Every conv layer of the configured network, frontend first, stages in
/// order.
pub fn conv_specs(cfg: &NetworkConfig) -> Vec<ConvSpec> {
    let mut specs = frontend_specs(cfg.width_div);
    for t in 1..=cfg.stages {
        specs.extend(stage_specs(cfg, t));
    }
    specs
}

#[derive(Debug, Clone)]
struct ConvLayer {
    weight: ParamId,
    bias: ParamId,
    padding: usize,
    groups: usize,
}

impl ConvLayer {
    fn build(
        store: &mut ParamStore,
        rng: &mut SplitMix64,
        spec: &ConvSpec,
        frozen: bool,
    ) -> Result<ConvLayer> {
        let padding = same_padding(spec.kh)?;
        let w = kaiming_conv_weight(rng, &[spec.cout, spec.cin / spec.groups, spec.kh, spec.kw]);
        let weight = store.add(format!("{}.weight", spec.name), w, frozen);
        let bias = store.add(format!("{}.bias", spec.name), Tensor::zeros(&[spec.cout]), frozen);
        Ok(ConvLayer {
            weight,
            bias,
            padding,
            groups: spec.groups,
        })
    }

    fn forward(&self, g: &mut Graph, binding: &Binding, x: Var) -> Result<Var> {
        g.conv2d(
            x,
            binding.var(self.weight),
            binding.var(self.bias),
            1,
            self.padding,
            self.groups,
        )
    }
}

/// Sequentially consume builder specs, keeping construction aligned with the
/// enumeration order.
struct SpecCursor<'a> {
    specs: core::slice::Iter<'a, ConvSpec>,
}

impl<'a> SpecCursor<'a> {
    fn next(&mut self, suffix: &str) -> &'a ConvSpec {
        let spec = self.specs.next().expect("spec list exhausted");
        debug_assert!(
            spec.name.ends_with(suffix),
            "spec cursor misaligned: {} vs {suffix}",
            spec.name
        );
        spec
    }
}

#[derive(Debug)]
struct Frontend {
    convs: Vec<ConvLayer>,
}

impl Frontend {
    fn forward(&self, g: &mut Graph, binding: &Binding, x: Var) -> Result<Var> {
        let mut cur = x;
        for (i, conv) in self.convs.iter().enumerate() {
            cur = conv.forward(g, binding, cur)?;
            cur = g.relu(cur);
            if FRONTEND_POOLS_AFTER.contains(&i) {
                cur = g.max_pool_2x2(cur)?;
            }
        }
        Ok(cur)
    }
}

#[derive(Debug)]
struct DpnBlock {
    reduce: ConvLayer,
    grouped: ConvLayer,
    residual_out: ConvLayer,
    dense_out: ConvLayer,
}

impl DpnBlock {
    /// One dual-path update: bottleneck over concat(kp, ap), then the
    /// residual half adds into kp and the dense half extends ap.
    fn forward(&self, g: &mut Graph, binding: &Binding, kp: Var, ap: Var) -> Result<(Var, Var)> {
        let x = g.concat(&[kp, ap])?;
        let y = self.reduce.forward(g, binding, x)?;
        let y = g.relu(y);
        let y = self.grouped.forward(g, binding, y)?;
        let y = g.relu(y);
        let res = self.residual_out.forward(g, binding, y)?;
        let dense = self.dense_out.forward(g, binding, y)?;
        let kp_next = g.add(kp, res)?;
        let ap_next = g.concat(&[ap, dense])?;
        Ok((kp_next, ap_next))
    }
}

#[derive(Debug)]
enum StageNet {
    Dpn {
        proj_kp: ConvLayer,
        proj_ap: ConvLayer,
        blocks: Vec<DpnBlock>,
        head_s: ConvLayer,
        head_l: ConvLayer,
    },
    Baseline {
        branch_s: Vec<ConvLayer>,
        branch_l: Vec<ConvLayer>,
    },
}

impl StageNet {
    fn forward(&self, g: &mut Graph, binding: &Binding, input: Var) -> Result<StageOutput> {
        match self {
            StageNet::Dpn {
                proj_kp,
                proj_ap,
                blocks,
                head_s,
                head_l,
            } => {
                let kp = proj_kp.forward(g, binding, input)?;
                let mut kp = g.relu(kp);
                let ap = proj_ap.forward(g, binding, input)?;
                let mut ap = g.relu(ap);
                for block in blocks {
                    (kp, ap) = block.forward(g, binding, kp, ap)?;
                }
                let s = head_s.forward(g, binding, kp)?;
                let l = head_l.forward(g, binding, ap)?;
                Ok(StageOutput { s, l })
            }
            StageNet::Baseline { branch_s, branch_l } => {
                let run = |g: &mut Graph, convs: &[ConvLayer]| -> Result<Var> {
                    let mut cur = input;
                    for (i, conv) in convs.iter().enumerate() {
                        cur = conv.forward(g, binding, cur)?;
                        if i + 1 < convs.len() {
                            cur = g.relu(cur);
                        }
                    }
                    Ok(cur)
                };
                Ok(StageOutput {
                    s: run(g, branch_s)?,
                    l: run(g, branch_l)?,
                })
            }
        }
    }
}

/// One stage's predictions: `s` holds J heatmap channels, `l` holds C PAF
/// channels, both at frontend resolution.
#[derive(Debug, Clone, Copy)]
pub struct StageOutput {
    pub s: Var,
    pub l: Var,
}

#[derive(Debug)]
pub struct Network {
    config: NetworkConfig,
    pub store: ParamStore,
    frontend: Frontend,
    stages: Vec<StageNet>,
}

impl Network {
    /// Build a network with seeded Kaiming-initialized weights and zero
    /// biases. Frontend parameters start frozen; see
    /// [`Network::set_frontend_frozen`].
    pub fn new(config: &NetworkConfig, seed: u64) -> Result<Network> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut rng = SplitMix64::for_stream(seed, 0x6e65_7477_6f72_6b); // "network"

        let fe_specs = frontend_specs(config.width_div);
        let mut convs = Vec::with_capacity(fe_specs.len());
        for spec in fe_specs.iter() {
            convs.push(ConvLayer::build(&mut store, &mut rng, spec, true)?);
        }
        let frontend = Frontend { convs };

        let mut stages = Vec::with_capacity(config.stages);
        for t in 1..=config.stages {
            let specs = stage_specs(config, t);
            let mut cursor = SpecCursor { specs: specs.iter() };
            let stage = match config.arch {
                Arch::Dpn => {
                    let proj_kp = ConvLayer::build(&mut store, &mut rng, cursor.next("proj_kp"), false)?;
                    let proj_ap = ConvLayer::build(&mut store, &mut rng, cursor.next("proj_ap"), false)?;
                    let mut blocks = Vec::new();
                    for _ in 0..config.blocks_for_stage(t) {
                        blocks.push(DpnBlock {
                            reduce: ConvLayer::build(&mut store, &mut rng, cursor.next("reduce"), false)?,
                            grouped: ConvLayer::build(&mut store, &mut rng, cursor.next("grouped"), false)?,
                            residual_out: ConvLayer::build(
                                &mut store,
                                &mut rng,
                                cursor.next("residual_out"),
                                false,
                            )?,
                            dense_out: ConvLayer::build(
                                &mut store,
                                &mut rng,
                                cursor.next("dense_out"),
                                false,
                            )?,
                        });
                    }
                    StageNet::Dpn {
                        proj_kp,
                        proj_ap,
                        blocks,
                        head_s: ConvLayer::build(&mut store, &mut rng, cursor.next("head_s"), false)?,
                        head_l: ConvLayer::build(&mut store, &mut rng, cursor.next("head_l"), false)?,
                    }
                }
                Arch::Baseline => {
                    let n_convs = if t == 1 { 5 } else { 7 };
                    let build_branch = |cursor: &mut SpecCursor<'_>,
                                            store: &mut ParamStore,
                                            rng: &mut SplitMix64|
                     -> Result<Vec<ConvLayer>> {
                        let mut convs = Vec::with_capacity(n_convs);
                        for i in 0..n_convs {
                            let suffix = if i + 1 == n_convs {
                                String::from("head")
                            } else {
                                format!("conv{}", i + 1)
                            };
                            convs.push(ConvLayer::build(store, rng, cursor.next(&suffix), false)?);
                        }
                        Ok(convs)
                    };
                    let branch_s = build_branch(&mut cursor, &mut store, &mut rng)?;
                    let branch_l = build_branch(&mut cursor, &mut store, &mut rng)?;
                    StageNet::Baseline { branch_s, branch_l }
                }
            };
            stages.push(stage);
        }

        Ok(Network {
            config: config.clone(),
            store,
            frontend,
            stages,
        })
    }

    pub fn config(&self) -> &NetworkConfig {
        &self.config
    }

    /// Freeze or unfreeze every frontend parameter.
    pub fn set_frontend_frozen(&mut self, frozen: bool) {
        for (_, p) in self.store.iter_mut() {
            if p.name.starts_with("frontend.") {
                p.frozen = frozen;
            }
        }
    }

    pub fn frontend_param_names(&self) -> Vec<String> {
        self.store
            .iter()
            .filter(|(_, p)| p.name.starts_with("frontend."))
            .map(|(_, p)| p.name.clone())
            .collect()
    }

    fn check_input(&self, images: &Tensor) -> Result<()> {
        let (_, c, h, w) = images.dims4()?;
        if c != 3 {
            return Err(Error::Shape(format!(
                "network input must have 3 channels, got {c}"
            )));
        }
        if h % INPUT_STRIDE != 0 {
            return Err(Error::Shape(format!(
                "input height {h} not divisible by {INPUT_STRIDE}"
            )));
        }
        if w % INPUT_STRIDE != 0 {
            return Err(Error::Shape(format!(
                "input width {w} not divisible by {INPUT_STRIDE}"
            )));
        }
        Ok(())
    }

    /// Forward pass over an already-bound graph. F is computed once and fed
    /// to every stage; all stage outputs are returned for intermediate
    /// supervision.
    pub fn forward(&self, g: &mut Graph, binding: &Binding, images: Var) -> Result<Vec<StageOutput>> {
        self.check_input(g.value(images))?;
        let f = self.frontend.forward(g, binding, images)?;
        let mut outputs: Vec<StageOutput> = Vec::with_capacity(self.stages.len());
        for stage in &self.stages {
            let input = match outputs.last() {
                None => f,
                Some(prev) => g.concat(&[f, prev.s, prev.l])?,
            };
            outputs.push(stage.forward(g, binding, input)?);
        }
        Ok(outputs)
    }

    /// Inference convenience: run the graph without gradient tracking and
    /// return every stage's (S, L) as plain tensors.
    pub fn forward_maps(&self, images: &Tensor) -> Result<Vec<(Tensor, Tensor)>> {
        let mut g = Graph::new();
        let binding = self.store.bind_inference(&mut g);
        let images = g.input(images.clone());
        let outputs = self.forward(&mut g, &binding, images)?;
        Ok(outputs
            .into_iter()
            .map(|o| (g.value(o.s).clone(), g.value(o.l).clone()))
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn frontend_output_is_128ch_stride8() {
        let cfg = NetworkConfig {
            stages: 1,
            ..NetworkConfig::default_dpn()
        };
        let net = Network::new(&cfg, 1).unwrap();
        let mut g = Graph::new();
        let binding = net.store.bind(&mut g);
        let images = g.input(Tensor::zeros(&[1, 3, 64, 64]));
        let f = net.frontend.forward(&mut g, &binding, images).unwrap();
        assert_eq!(g.value(f).shape(), &[1, 128, 8, 8]);
    }

    #[test]
    fn default_stage_heads_have_contract_shapes() {
        // J=19, C=38 at stride 8 over a 64x64 input.
        let cfg = NetworkConfig {
            stages: 1,
            ..NetworkConfig::default_dpn()
        };
        let net = Network::new(&cfg, 2).unwrap();
        let mut g = Graph::new();
        let binding = net.store.bind(&mut g);
        let images = g.input(Tensor::zeros(&[1, 3, 64, 64]));
        let outs = net.forward(&mut g, &binding, images).unwrap();
        assert_eq!(outs.len(), 1);
        assert_eq!(g.value(outs[0].s).shape(), &[1, 19, 8, 8]);
        assert_eq!(g.value(outs[0].l).shape(), &[1, 38, 8, 8]);
    }

    #[test]
    fn channel_accumulation_law_micro() {
        // r=4, d0=2, g=2: block input (kp 4, ap 2) -> output (kp 4, ap 4).
        let cfg = NetworkConfig::micro();
        let specs = dpn_stage_specs(&cfg, 1);
        let reduce = specs.iter().find(|s| s.name.contains("block1.reduce")).unwrap();
        assert_eq!(reduce.cin, 4 + 2);
        let dense = specs.iter().find(|s| s.name.contains("block1.dense_out")).unwrap();
        assert_eq!(dense.cout, 2);
        let head_l = specs.iter().find(|s| s.name.contains("head_l")).unwrap();
        assert_eq!(head_l.cin, 2 + 1 * 2);
    }

    #[test]
    fn forward_rejects_bad_input_dims() {
        let net = Network::new(&NetworkConfig::micro(), 3).unwrap();
        let mut g = Graph::new();
        let binding = net.store.bind(&mut g);
        let images = g.input(Tensor::zeros(&[1, 3, 60, 64]));
        let err = net.forward(&mut g, &binding, images).unwrap_err();
        assert!(format!("{err}").contains("height 60"));

        let mut g = Graph::new();
        let binding = net.store.bind(&mut g);
        let images = g.input(Tensor::zeros(&[1, 4, 64, 64]));
        let err = net.forward(&mut g, &binding, images).unwrap_err();
        assert!(format!("{err}").contains("3 channels"));
    }

    #[test]
    fn stage_outputs_match_between_architectures() {
        let mut dpn_cfg = NetworkConfig::micro();
        dpn_cfg.stages = 2;
        let mut base_cfg = dpn_cfg.clone();
        base_cfg.arch = Arch::Baseline;
        let images = Tensor::full(&[1, 3, 16, 16], 0.5);
        for cfg in [dpn_cfg, base_cfg] {
            let net = Network::new(&cfg, 7).unwrap();
            let maps = net.forward_maps(&images).unwrap();
            assert_eq!(maps.len(), 2);
            for (s, l) in maps {
                assert_eq!(s.shape(), &[1, 2, 2, 2]);
                assert_eq!(l.shape(), &[1, 2, 2, 2]);
                assert!(s.all_finite() && l.all_finite());
            }
        }
    }

    #[test]
    fn zero_weight_heads_produce_zero_maps() {
        let mut net = Network::new(&NetworkConfig::micro(), 11).unwrap();
        for (_, p) in net.store.iter_mut() {
            if p.name.contains("head_") {
                p.value = Tensor::zeros(p.value.shape());
            }
        }
        let maps = net.forward_maps(&Tensor::full(&[1, 3, 16, 16], 0.3)).unwrap();
        for (s, l) in maps {
            assert!(s.data().iter().all(|&v| v == 0.0));
            assert!(l.data().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn zero_weight_block_is_identity_on_keypoint_branch() {
        // Zero all block weights: kp must pass through unchanged, dense
        // outputs must append zeros.
        let cfg = NetworkConfig::micro();
        let mut net = Network::new(&cfg, 13).unwrap();
        for (_, p) in net.store.iter_mut() {
            if p.name.contains(".block1.") {
                p.value = Tensor::zeros(p.value.shape());
            }
        }
        let mut g = Graph::new();
        let binding = net.store.bind(&mut g);
        let images = g.input(Tensor::full(&[1, 3, 16, 16], 0.4));
        // Reach into stage 1 manually to observe branch tensors.
        let f = net.frontend.forward(&mut g, &binding, images).unwrap();
        let StageNet::Dpn {
            proj_kp,
            proj_ap,
            blocks,
            ..
        } = &net.stages[0]
        else {
            panic!("micro profile is dpn");
        };
        let kp0 = proj_kp.forward(&mut g, &binding, f).unwrap();
        let kp0 = g.relu(kp0);
        let ap0 = proj_ap.forward(&mut g, &binding, f).unwrap();
        let ap0 = g.relu(ap0);
        let (kp1, ap1) = blocks[0].forward(&mut g, &binding, kp0, ap0).unwrap();
        assert_eq!(g.value(kp1), g.value(kp0));
        let ap1_t = g.value(ap1);
        let (_, c1, h, w) = ap1_t.dims4().unwrap();
        let c0 = g.value(ap0).shape()[1];
        assert_eq!(c1, c0 + cfg.growth);
        for c in c0..c1 {
            for y in 0..h {
                for x in 0..w {
                    assert_eq!(ap1_t.at4(0, c, y, x), 0.0);
                }
            }
        }
    }

    #[test]
    fn forward_is_bitwise_deterministic() {
        let cfg = NetworkConfig::micro();
        let run = || {
            let net = Network::new(&cfg, 99).unwrap();
            let maps = net
                .forward_maps(&Tensor::full(&[1, 3, 16, 16], 0.2))
                .unwrap();
            maps[1].0.data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn t2_requires_previous_stage_via_concat_arithmetic() {
        let cfg = NetworkConfig::default_dpn();
        let specs = dpn_stage_specs(&cfg, 2);
        assert_eq!(specs[0].cin, 185);
        let base = baseline_stage_specs(&cfg, 2);
        assert_eq!(base[0].cin, 185);
    }
}
