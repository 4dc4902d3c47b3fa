//! Ground-truth rendering: keypoint heatmaps and part-affinity fields.
//!
//! Output pixel `p` corresponds to image point `p * stride` (no half-pixel
//! offset); the decoder inverts the same mapping.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use num_traits::Float;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f32,
    pub y: f32,
    pub visible: bool,
}

/// Per-scene ground truth: every person's keypoints plus the shared limb
/// topology.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneAnnotation {
    pub width: usize,
    pub height: usize,
    pub keypoint_types: usize,
    /// One keypoint array of length `keypoint_types` per person.
    pub persons: Vec<Vec<Keypoint>>,
    /// Keypoint-index pairs (a, b); each limb produces two PAF channels.
    pub limbs: Vec<(usize, usize)>,
}

impl SceneAnnotation {
    pub fn validate(&self) -> Result<()> {
        for (pi, person) in self.persons.iter().enumerate() {
            if person.len() != self.keypoint_types {
                return Err(Error::Shape(format!(
                    "person {pi} has {} keypoints, skeleton defines {}",
                    person.len(),
                    self.keypoint_types
                )));
            }
            for (ki, kp) in person.iter().enumerate() {
                if kp.visible
                    && !(kp.x >= 0.0
                        && kp.x < self.width as f32
                        && kp.y >= 0.0
                        && kp.y < self.height as f32)
                {
                    return Err(Error::Shape(format!(
                        "person {pi} keypoint {ki} at ({}, {}) outside {}x{}",
                        kp.x, kp.y, self.width, self.height
                    )));
                }
            }
        }
        for &(a, b) in &self.limbs {
            if a >= self.keypoint_types || b >= self.keypoint_types {
                return Err(Error::Shape(format!(
                    "limb ({a}, {b}) references a keypoint index >= {}",
                    self.keypoint_types
                )));
            }
        }
        Ok(())
    }

    /// Axis-aligned bounding-box diagonal over a person's visible keypoints.
    pub fn person_diagonal(&self, person: usize) -> f32 {
        let mut min = (f32::INFINITY, f32::INFINITY);
        let mut max = (f32::NEG_INFINITY, f32::NEG_INFINITY);
        let mut any = false;
        for kp in &self.persons[person] {
            if kp.visible {
                any = true;
                min.0 = min.0.min(kp.x);
                min.1 = min.1.min(kp.y);
                max.0 = max.0.max(kp.x);
                max.1 = max.1.max(kp.y);
            }
        }
        if !any {
            return 0.0;
        }
        let (dx, dy) = (max.0 - min.0, max.1 - min.1);
        Float::sqrt(dx * dx + dy * dy)
    }

    /// One person per line: `x y v` triples, space separated.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for person in &self.persons {
            let mut first = true;
            for kp in person {
                if !first {
                    s.push(' ');
                }
                first = false;
                s.push_str(&format!("{} {} {}", kp.x, kp.y, u8::from(kp.visible)));
            }
            s.push('\n');
        }
        s
    }

    /// Parse annotation text; dims and limb topology come from the config.
    pub fn parse_text(
        text: &str,
        width: usize,
        height: usize,
        limbs: Vec<(usize, usize)>,
    ) -> Result<SceneAnnotation> {
        let mut persons = Vec::new();
        let mut keypoint_types = None;
        for (li, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() % 3 != 0 {
                return Err(Error::Config(format!(
                    "annotation line {} has {} fields, expected x y v triples",
                    li + 1,
                    fields.len()
                )));
            }
            let count = fields.len() / 3;
            match keypoint_types {
                None => keypoint_types = Some(count),
                Some(k) if k != count => {
                    return Err(Error::Config(format!(
                        "annotation line {} has {count} keypoints, previous lines had {k}",
                        li + 1
                    )))
                }
                _ => {}
            }
            let mut person = Vec::with_capacity(count);
            for triple in fields.chunks(3) {
                let x: f32 = triple[0]
                    .parse()
                    .map_err(|_| Error::Config(format!("bad x coordinate '{}'", triple[0])))?;
                let y: f32 = triple[1]
                    .parse()
                    .map_err(|_| Error::Config(format!("bad y coordinate '{}'", triple[1])))?;
                let visible = match triple[2] {
                    "0" => false,
                    "1" => true,
                    other => {
                        return Err(Error::Config(format!("bad visibility flag '{other}'")))
                    }
                };
                person.push(Keypoint { x, y, visible });
            }
            persons.push(person);
        }
        let ann = SceneAnnotation {
            width,
            height,
            keypoint_types: keypoint_types.unwrap_or(0),
            persons,
            limbs,
        };
        ann.validate()?;
        Ok(ann)
    }
}

/// Rendering knobs for ground-truth maps.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TargetParams {
    /// Gaussian peak width in image pixels.
    pub sigma: f32,
    /// Limb half-width in image pixels.
    pub half_width: f32,
}

impl Default for TargetParams {
    fn default() -> Self {
        TargetParams {
            sigma: 7.0,
            half_width: 8.0,
        }
    }
}

/// Rendered ground truth at network output resolution.
#[derive(Debug, Clone)]
pub struct TargetMaps {
    /// `[J, H/s, W/s]`; keypoint channels 0..J-1, background last.
    pub s_star: Tensor,
    /// `[C, H/s, W/s]`; limb i occupies channels (2i, 2i+1).
    pub l_star: Tensor,
}

pub fn render_targets(
    ann: &SceneAnnotation,
    j_channels: usize,
    stride: usize,
    params: &TargetParams,
) -> Result<TargetMaps> {
    Ok(TargetMaps {
        s_star: render_heatmaps(ann, j_channels, stride, params.sigma)?,
        l_star: render_pafs(ann, stride, params.half_width)?,
    })
}

fn out_dims(ann: &SceneAnnotation, stride: usize) -> Result<(usize, usize)> {
    if stride == 0 || ann.height % stride != 0 || ann.width % stride != 0 {
        return Err(Error::Shape(format!(
            "image dims {}x{} not divisible by stride {stride}",
            ann.width, ann.height
        )));
    }
    Ok((ann.height / stride, ann.width / stride))
}

/// Per keypoint type, the max over persons of a Gaussian bump around each
/// visible keypoint; the last channel is the background `1 - max(others)`.
pub fn render_heatmaps(
    ann: &SceneAnnotation,
    j_channels: usize,
    stride: usize,
    sigma: f32,
) -> Result<Tensor> {
    if sigma <= 0.0 {
        return Err(Error::Config(format!("sigma must be positive, got {sigma}")));
    }
    if j_channels != ann.keypoint_types + 1 {
        return Err(Error::Shape(format!(
            "heatmap channel count {j_channels} != keypoint types {} + 1 background",
            ann.keypoint_types
        )));
    }
    ann.validate()?;
    let (oh, ow) = out_dims(ann, stride)?;
    let mut maps = Tensor::zeros(&[j_channels, oh, ow]);
    let inv = 1.0f32 / (2.0 * sigma * sigma);
    let plane = oh * ow;
    for kind in 0..ann.keypoint_types {
        let data = &mut maps.data_mut()[kind * plane..][..plane];
        for person in &ann.persons {
            let kp = person[kind];
            if !kp.visible {
                continue;
            }
            for py in 0..oh {
                let dy = py as f32 * stride as f32 - kp.y;
                for px in 0..ow {
                    let dx = px as f32 * stride as f32 - kp.x;
                    let v = Float::exp(-(dx * dx + dy * dy) * inv);
                    let cell = &mut data[py * ow + px];
                    if v > *cell {
                        *cell = v;
                    }
                }
            }
        }
    }
    // Background: complement of the strongest keypoint response.
    for i in 0..plane {
        let mut best = 0.0f32;
        for kind in 0..ann.keypoint_types {
            best = best.max(maps.data()[kind * plane + i]);
        }
        maps.data_mut()[ann.keypoint_types * plane + i] = (1.0 - best).clamp(0.0, 1.0);
    }
    Ok(maps)
}

/// Unit direction vectors written over each limb's coverage rectangle;
/// pixels covered by several persons' same limb hold the mean vector.
pub fn render_pafs(ann: &SceneAnnotation, stride: usize, half_width: f32) -> Result<Tensor> {
    if half_width <= 0.0 {
        return Err(Error::Config(format!(
            "limb half-width must be positive, got {half_width}"
        )));
    }
    ann.validate()?;
    let (oh, ow) = out_dims(ann, stride)?;
    let c_channels = 2 * ann.limbs.len();
    let mut maps = Tensor::zeros(&[c_channels.max(1), oh, ow]);
    let plane = oh * ow;
    let mut counts = alloc::vec![0u32; plane];
    for (li, &(a, b)) in ann.limbs.iter().enumerate() {
        counts.fill(0);
        let (xc, yc) = (2 * li * plane, (2 * li + 1) * plane);
        for person in &ann.persons {
            let (ka, kb) = (person[a], person[b]);
            if !ka.visible || !kb.visible {
                continue;
            }
            let (ex, ey) = (kb.x - ka.x, kb.y - ka.y);
            let len = Float::sqrt(ex * ex + ey * ey);
            if len == 0.0 {
                continue;
            }
            let (vx, vy) = (ex / len, ey / len);
            for py in 0..oh {
                let qy = py as f32 * stride as f32 - ka.y;
                for px in 0..ow {
                    let qx = px as f32 * stride as f32 - ka.x;
                    let along = qx * vx + qy * vy;
                    let across = qx * vy - qy * vx;
                    if along >= 0.0 && along <= len && across.abs() <= half_width {
                        let i = py * ow + px;
                        maps.data_mut()[xc + i] += vx;
                        maps.data_mut()[yc + i] += vy;
                        counts[i] += 1;
                    }
                }
            }
        }
        for (i, &c) in counts.iter().enumerate() {
            if c > 1 {
                maps.data_mut()[xc + i] /= c as f32;
                maps.data_mut()[yc + i] /= c as f32;
            }
        }
    }
    if c_channels == 0 {
        return Tensor::from_vec(&[0, oh, ow], Vec::new());
    }
    Ok(maps)
}
