//! Network architecture configuration and plain-text config parsing.
//!
//! Config files are line-oriented `key = value` text with `#` comments.
//! Every key has a documented default, so an empty file (or no file) is a
//! valid configuration.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// Frontend downsampling factor: three 2x2 pools.
pub const INPUT_STRIDE: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arch {
    /// Dual-path stages: residual keypoint branch + densely growing
    /// association branch.
    Dpn,
    /// Openpose-style stages: two independent plain conv branches.
    Baseline,
}

impl Arch {
    pub fn as_str(&self) -> &'static str {
        match self {
            Arch::Dpn => "dpn",
            Arch::Baseline => "baseline",
        }
    }

    pub fn parse(s: &str) -> Result<Arch> {
        match s {
            "dpn" => Ok(Arch::Dpn),
            "baseline" => Ok(Arch::Baseline),
            other => Err(Error::Config(format!(
                "unknown arch '{other}' (expected 'dpn' or 'baseline')"
            ))),
        }
    }
}

/// Full architectural description of a network.
///
/// Field names follow the dual-path block geometry: the keypoint branch keeps
/// `residual_width` channels, the association branch starts at `dense_seed`
/// channels and grows by `growth` per block, and each block's internal
/// bottleneck is `bottleneck` channels wide split into `cardinality` groups.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkConfig {
    pub arch: Arch,
    /// Stage count T.
    pub stages: usize,
    /// Heatmap channels J (keypoint types + one background channel).
    pub keypoint_channels: usize,
    /// PAF channels C (two per limb: x and y components).
    pub paf_channels: usize,
    /// Frontend width divisor: 1 = full VGG-style frontend, 4 = quarter width.
    pub width_div: usize,
    /// Keypoint-branch width r.
    pub residual_width: usize,
    /// Association-branch seed width d0.
    pub dense_seed: usize,
    /// Association-branch growth g per block.
    pub growth: usize,
    /// Block bottleneck width w.
    pub bottleneck: usize,
    /// Grouped-conv cardinality G.
    pub cardinality: usize,
    /// Blocks in stage 1.
    pub blocks_stage1: usize,
    /// Blocks in stages >= 2.
    pub blocks: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        NetworkConfig::default_dpn()
    }
}

impl NetworkConfig {
    /// Full-scale dual-path network. The block widths are calibrated so the
    /// closed-form model size lands on the published comparison table; they
    /// are a reconstruction, not measured values.
    pub fn default_dpn() -> Self {
        NetworkConfig {
            arch: Arch::Dpn,
            stages: 3,
            keypoint_channels: 19,
            paf_channels: 38,
            width_div: 1,
            residual_width: 128,
            dense_seed: 64,
            growth: 48,
            bottleneck: 256,
            cardinality: 32,
            blocks_stage1: 2,
            blocks: 10,
        }
    }

    /// Full-scale openpose-style baseline.
    pub fn default_baseline() -> Self {
        NetworkConfig {
            arch: Arch::Baseline,
            ..NetworkConfig::default_dpn()
        }
    }

    /// Desk-scale profile for CPU training tests.
    pub fn tiny() -> Self {
        NetworkConfig {
            arch: Arch::Dpn,
            stages: 2,
            keypoint_channels: 5,
            paf_channels: 8,
            width_div: 4,
            residual_width: 32,
            dense_seed: 16,
            growth: 8,
            bottleneck: 32,
            cardinality: 4,
            blocks_stage1: 1,
            blocks: 3,
        }
    }

    /// Smallest useful profile; exhaustive finite-difference checking of a
    /// whole 2-stage network stays cheap at these widths.
    pub fn micro() -> Self {
        NetworkConfig {
            arch: Arch::Dpn,
            stages: 2,
            keypoint_channels: 2,
            paf_channels: 2,
            width_div: 16,
            residual_width: 4,
            dense_seed: 2,
            growth: 2,
            bottleneck: 4,
            cardinality: 2,
            blocks_stage1: 1,
            blocks: 1,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.stages == 0 {
            return Err(Error::Config("stages must be >= 1".into()));
        }
        for (name, v) in [
            ("keypoint_channels", self.keypoint_channels),
            ("paf_channels", self.paf_channels),
            ("residual_width", self.residual_width),
            ("dense_seed", self.dense_seed),
            ("growth", self.growth),
            ("bottleneck", self.bottleneck),
            ("cardinality", self.cardinality),
            ("blocks_stage1", self.blocks_stage1),
            ("blocks", self.blocks),
            ("width_div", self.width_div),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.paf_channels % 2 != 0 {
            return Err(Error::Config(format!(
                "paf_channels must be even (two channels per limb), got {}",
                self.paf_channels
            )));
        }
        if self.bottleneck % self.cardinality != 0 {
            return Err(Error::Config(format!(
                "bottleneck ({}) must be divisible by cardinality ({})",
                self.bottleneck, self.cardinality
            )));
        }
        if 64 % self.width_div != 0 {
            return Err(Error::Config(format!(
                "width_div ({}) must divide the narrowest frontend width (64)",
                self.width_div
            )));
        }
        Ok(())
    }

    /// Channels of the shared frontend feature map F.
    pub fn frontend_channels(&self) -> usize {
        128 / self.width_div
    }

    pub fn blocks_for_stage(&self, t: usize) -> usize {
        if t == 1 {
            self.blocks_stage1
        } else {
            self.blocks
        }
    }

    /// Stage input channels: F for stage 1, concat(F, S, L) afterwards.
    pub fn stage_input_channels(&self, t: usize) -> usize {
        if t == 1 {
            self.frontend_channels()
        } else {
            self.frontend_channels() + self.keypoint_channels + self.paf_channels
        }
    }

    /// Association-branch width after `b` blocks of a stage.
    pub fn dense_width_after(&self, b: usize) -> usize {
        self.dense_seed + b * self.growth
    }

    /// Serialize as config-file text (used for the checkpoint config echo).
    pub fn to_config_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            s.push_str(&format!("{k} = {v}\n"));
        }
        s
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        alloc::vec![
            ("arch", self.arch.as_str().to_string()),
            ("stages", self.stages.to_string()),
            ("keypoint_channels", self.keypoint_channels.to_string()),
            ("paf_channels", self.paf_channels.to_string()),
            ("width_div", self.width_div.to_string()),
            ("residual_width", self.residual_width.to_string()),
            ("dense_seed", self.dense_seed.to_string()),
            ("growth", self.growth.to_string()),
            ("bottleneck", self.bottleneck.to_string()),
            ("cardinality", self.cardinality.to_string()),
            ("blocks_stage1", self.blocks_stage1.to_string()),
            ("blocks", self.blocks.to_string()),
        ]
    }

    pub fn set_key(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "arch" => self.arch = Arch::parse(value)?,
            "stages" => self.stages = parse_usize(key, value)?,
            "keypoint_channels" => self.keypoint_channels = parse_usize(key, value)?,
            "paf_channels" => self.paf_channels = parse_usize(key, value)?,
            "width_div" => self.width_div = parse_usize(key, value)?,
            "residual_width" => self.residual_width = parse_usize(key, value)?,
            "dense_seed" => self.dense_seed = parse_usize(key, value)?,
            "growth" => self.growth = parse_usize(key, value)?,
            "bottleneck" => self.bottleneck = parse_usize(key, value)?,
            "cardinality" => self.cardinality = parse_usize(key, value)?,
            "blocks_stage1" => self.blocks_stage1 = parse_usize(key, value)?,
            "blocks" => self.blocks = parse_usize(key, value)?,
            other => {
                return Err(Error::Config(format!("unknown config key '{other}'")));
            }
        }
        Ok(())
    }

    /// Parse config text, starting from defaults. Unknown keys are rejected.
    pub fn parse(text: &str) -> Result<NetworkConfig> {
        let mut cfg = NetworkConfig::default();
        for (key, value) in iter_kv(text)? {
            cfg.set_key(key, value)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub(crate) fn parse_usize(key: &str, value: &str) -> Result<usize> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("key '{key}': expected an unsigned integer, got '{value}'")))
}

pub(crate) fn parse_f32(key: &str, value: &str) -> Result<f32> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("key '{key}': expected a number, got '{value}'")))
}

pub(crate) fn parse_u64(key: &str, value: &str) -> Result<u64> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("key '{key}': expected an unsigned integer, got '{value}'")))
}

pub(crate) fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" | "on" => Ok(true),
        "false" | "0" | "no" | "off" => Ok(false),
        _ => Err(Error::Config(format!(
            "key '{key}': expected a boolean, got '{value}'"
        ))),
    }
}

/// Everything one run needs: architecture, scene generation, training,
/// target rendering, and decoding knobs, all from one config file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub net: NetworkConfig,
    pub synth: crate::synth::SynthParams,
    pub train: crate::train::TrainParams,
    pub targets: crate::targets::TargetParams,
    pub decode: crate::decode::DecodeParams,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            net: NetworkConfig::default(),
            synth: crate::synth::SynthParams::default(),
            train: crate::train::TrainParams::default(),
            targets: crate::targets::TargetParams::default(),
            decode: crate::decode::DecodeParams::default(),
            seed: 0,
        }
    }
}

impl RunConfig {
    /// Parse config text over defaults; unknown keys are rejected.
    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        for (key, value) in iter_kv(text)? {
            cfg.set_key(key, value)?;
        }
        cfg.net.validate()?;
        cfg.synth.validate()?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    /// Route all randomness through one seed.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.synth.seed = seed;
    }

    pub fn set_key(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "arch" | "stages" | "keypoint_channels" | "paf_channels" | "width_div"
            | "residual_width" | "dense_seed" | "growth" | "bottleneck" | "cardinality"
            | "blocks_stage1" | "blocks" => self.net.set_key(key, value)?,
            "image_width" => self.synth.width = parse_usize(key, value)?,
            "image_height" => self.synth.height = parse_usize(key, value)?,
            "max_persons" => self.synth.max_persons = parse_usize(key, value)?,
            "scale_min" => self.synth.scale_range.0 = parse_f32(key, value)?,
            "scale_max" => self.synth.scale_range.1 = parse_f32(key, value)?,
            "rotation" => self.synth.rotation = parse_f32(key, value)?,
            "jitter" => self.synth.jitter = parse_f32(key, value)?,
            "noise" => self.synth.noise = parse_f32(key, value)?,
            "skeleton" => self.synth.skeleton = parse_skeleton(value)?,
            "skeleton_limbs" => self.synth.skeleton.limbs = parse_limbs(value)?,
            "steps" => self.train.steps = parse_usize(key, value)?,
            "batch" => self.train.batch = parse_usize(key, value)?,
            "lr" => self.train.lr = parse_f32(key, value)?,
            "momentum" => self.train.momentum = parse_f32(key, value)?,
            "freeze_frontend" => self.train.freeze_frontend = parse_bool(key, value)?,
            "log_interval" => self.train.log_interval = parse_usize(key, value)?,
            "n_train" => self.train.n_train = parse_usize(key, value)?,
            "n_eval" => self.train.n_eval = parse_usize(key, value)?,
            "sigma" => self.targets.sigma = parse_f32(key, value)?,
            "limb_half_width" => self.targets.half_width = parse_f32(key, value)?,
            "peak_threshold" => self.decode.peak_threshold = parse_f32(key, value)?,
            "connection_threshold" => self.decode.connection_threshold = parse_f32(key, value)?,
            "line_samples" => self.decode.samples = parse_usize(key, value)?,
            "scales" => {
                let mut scales = Vec::new();
                for part in value.split(',') {
                    scales.push(parse_f32(key, part.trim())?);
                }
                self.decode.scales = scales;
            }
            "seed" => {
                let seed = parse_u64(key, value)?;
                self.set_seed(seed);
            }
            other => return Err(Error::Config(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Consistency between network channel counts and the synthetic skeleton:
    /// J covers every keypoint type plus one background channel, C holds two
    /// channels per limb.
    pub fn validate_training(&self) -> Result<()> {
        self.net.validate()?;
        self.synth.validate()?;
        self.train.validate()?;
        let kp = self.synth.skeleton.keypoints();
        if self.net.keypoint_channels != kp + 1 {
            return Err(Error::Config(format!(
                "keypoint_channels = {} but the skeleton has {kp} keypoints (+1 background = {})",
                self.net.keypoint_channels,
                kp + 1
            )));
        }
        let limbs = self.synth.skeleton.limbs.len();
        if self.net.paf_channels != 2 * limbs {
            return Err(Error::Config(format!(
                "paf_channels = {} but the skeleton has {limbs} limbs (2 per limb = {})",
                self.net.paf_channels,
                2 * limbs
            )));
        }
        Ok(())
    }
}

fn parse_skeleton(value: &str) -> Result<crate::synth::Skeleton> {
    if value == "stick" {
        return Ok(crate::synth::Skeleton::stick_figure());
    }
    if let Some(n) = value.strip_prefix("ring:") {
        let n = parse_usize("skeleton", n)?;
        if n == 0 {
            return Err(Error::Config("ring skeleton needs at least one keypoint".into()));
        }
        return Ok(crate::synth::Skeleton::ring(n));
    }
    Err(Error::Config(format!(
        "unknown skeleton '{value}' (expected 'stick' or 'ring:N')"
    )))
}

fn parse_limbs(value: &str) -> Result<Vec<(usize, usize)>> {
    let mut limbs = Vec::new();
    for part in value.split(',') {
        let part = part.trim();
        let Some((a, b)) = part.split_once('-') else {
            return Err(Error::Config(format!(
                "bad limb '{part}' (expected 'a-b')"
            )));
        };
        limbs.push((parse_usize("skeleton_limbs", a)?, parse_usize("skeleton_limbs", b)?));
    }
    Ok(limbs)
}

/// Iterate `key = value` pairs of a config text, skipping blanks and `#`
/// comments. Malformed lines are rejected with their content.
pub fn iter_kv(text: &str) -> Result<Vec<(&str, &str)>> {
    let mut out = Vec::new();
    for raw in text.lines() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(Error::Config(format!("malformed config line '{raw}' (expected key = value)")));
        };
        out.push((k.trim(), v.trim()));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_profiles_validate() {
        NetworkConfig::default_dpn().validate().unwrap();
        NetworkConfig::default_baseline().validate().unwrap();
        NetworkConfig::tiny().validate().unwrap();
        NetworkConfig::micro().validate().unwrap();
    }

    #[test]
    fn stage_two_input_is_185_channels_with_defaults() {
        let cfg = NetworkConfig::default_dpn();
        assert_eq!(cfg.stage_input_channels(1), 128);
        assert_eq!(cfg.stage_input_channels(2), 185);
    }

    #[test]
    fn parse_round_trips_and_rejects_unknown_keys() {
        let cfg = NetworkConfig::tiny();
        let parsed = NetworkConfig::parse(&cfg.to_config_text()).unwrap();
        assert_eq!(parsed, cfg);

        let err = NetworkConfig::parse("bogus_key = 3\n").unwrap_err();
        assert!(format!("{err}").contains("bogus_key"));

        let err = NetworkConfig::parse("stages\n").unwrap_err();
        assert!(format!("{err}").contains("malformed"));
    }

    #[test]
    fn comments_and_blanks_are_ignored() {
        let text = "# a comment\n\n  stages = 4  # trailing\n";
        let cfg = NetworkConfig::parse(text).unwrap();
        assert_eq!(cfg.stages, 4);
    }

    #[test]
    fn odd_paf_channel_count_is_rejected() {
        let mut cfg = NetworkConfig::tiny();
        cfg.paf_channels = 7;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn cardinality_must_divide_bottleneck() {
        let mut cfg = NetworkConfig::tiny();
        cfg.cardinality = 5;
        assert!(cfg.validate().is_err());
    }
}
