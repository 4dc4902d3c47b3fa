//! Deterministic multi-person stick-figure scenes.
//!
//! Scene `index` under seed `s` is a pure function of the splitmix64 stream
//! `for_stream(s, index)` (see [`crate::rng`]), so any scene can be
//! regenerated independently and in any order.

use alloc::vec::Vec;

use num_traits::Float;

use crate::config::INPUT_STRIDE;
use crate::error::{Error, Result};
use crate::rng::SplitMix64;
use crate::targets::{Keypoint, SceneAnnotation};
use crate::tensor::Tensor;

/// Keypoint layout and limb topology of the rendered figures. Offsets are in
/// figure units, scaled by the per-person size; +y points down.
#[derive(Debug, Clone, PartialEq)]
pub struct Skeleton {
    pub offsets: Vec<(f32, f32)>,
    pub limbs: Vec<(usize, usize)>,
}

impl Skeleton {
    /// Five keypoints: head on top, two hands at the sides, two feet at the
    /// bottom; four limbs radiating from the head.
    pub fn stick_figure() -> Skeleton {
        Skeleton {
            offsets: alloc::vec![
                (0.00, -0.50),  // head
                (-0.45, -0.05), // left hand
                (0.45, -0.05),  // right hand
                (-0.22, 0.50),  // left foot
                (0.22, 0.50),   // right foot
            ],
            limbs: alloc::vec![(0, 1), (0, 2), (0, 3), (0, 4)],
        }
    }

    /// Fallback layout for other keypoint counts: points on a circle with
    /// limbs radiating from keypoint 0.
    pub fn ring(keypoints: usize) -> Skeleton {
        let mut offsets = Vec::with_capacity(keypoints);
        for i in 0..keypoints {
            let angle = core::f32::consts::TAU * i as f32 / keypoints as f32;
            offsets.push((0.5 * Float::sin(angle), -0.5 * Float::cos(angle)));
        }
        let limbs = (1..keypoints).map(|i| (0, i)).collect();
        Skeleton { offsets, limbs }
    }

    pub fn keypoints(&self) -> usize {
        self.offsets.len()
    }

    /// Largest keypoint distance from the figure center, in figure units.
    pub fn radius(&self) -> f32 {
        self.offsets
            .iter()
            .map(|&(x, y)| Float::sqrt(x * x + y * y))
            .fold(0.0f32, f32::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub width: usize,
    pub height: usize,
    /// Persons per scene are drawn uniformly from 1..=max_persons.
    pub max_persons: usize,
    pub skeleton: Skeleton,
    /// Person size (height of the unit figure) range in pixels.
    pub scale_range: (f32, f32),
    /// Rotation drawn from [-rotation, rotation] radians.
    pub rotation: f32,
    /// Per-keypoint jitter amplitude as a fraction of person size.
    pub jitter: f32,
    /// Background noise amplitude in [0, 1].
    pub noise: f32,
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            width: 64,
            height: 64,
            max_persons: 2,
            skeleton: Skeleton::stick_figure(),
            scale_range: (24.0, 34.0),
            rotation: 0.35,
            jitter: 0.05,
            noise: 0.08,
            seed: 0,
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        if self.width % INPUT_STRIDE != 0 || self.height % INPUT_STRIDE != 0 {
            return Err(Error::Config(alloc::format!(
                "scene dims {}x{} must be divisible by {INPUT_STRIDE}",
                self.width,
                self.height
            )));
        }
        if self.max_persons == 0 {
            return Err(Error::Config("max_persons must be >= 1".into()));
        }
        if !(self.scale_range.0 > 0.0 && self.scale_range.1 >= self.scale_range.0) {
            return Err(Error::Config(alloc::format!(
                "scale range ({}, {}) must be positive and ordered",
                self.scale_range.0,
                self.scale_range.1
            )));
        }
        if self.skeleton.keypoints() == 0 {
            return Err(Error::Config("skeleton needs at least one keypoint".into()));
        }
        // The largest figure must fit somewhere in the image.
        let margin = self.margin(self.scale_range.1);
        if 2.0 * margin + 1.0 >= self.width.min(self.height) as f32 {
            return Err(Error::Config(alloc::format!(
                "largest person (size {}) cannot fit inside {}x{}",
                self.scale_range.1,
                self.width,
                self.height
            )));
        }
        Ok(())
    }

    /// Minimum person-centers separation the generator guarantees.
    pub fn min_center_distance(&self) -> f32 {
        0.25 * self.width.min(self.height) as f32
    }

    fn margin(&self, size: f32) -> f32 {
        size * (self.skeleton.radius() + self.jitter) + 2.0
    }
}

struct Figure {
    center: (f32, f32),
    keypoints: Vec<(f32, f32)>,
    size: f32,
    color: [f32; 3],
}

/// Deterministically generate scene `index`: an RGB image in `[0,1]` plus its
/// exact annotation.
pub fn generate_scene(params: &SynthParams, index: u64) -> Result<(Tensor, SceneAnnotation)> {
    params.validate()?;
    let mut rng = SplitMix64::for_stream(params.seed, index);
    let (w, h) = (params.width, params.height);

    // Background noise first: a fixed number of draws keeps the stream
    // layout independent of person count.
    let mut image = Tensor::zeros(&[3, h, w]);
    let plane = h * w;
    for i in 0..plane {
        let v = params.noise * rng.next_f32();
        image.data_mut()[i] = v;
        image.data_mut()[plane + i] = v;
        image.data_mut()[2 * plane + i] = v;
    }

    let k = 1 + rng.next_below(params.max_persons as u64) as usize;
    let min_dist = params.min_center_distance();
    let mut figures: Vec<Figure> = Vec::with_capacity(k);
    for pi in 0..k {
        let size = rng.range_f32(params.scale_range.0, params.scale_range.1);
        let angle = rng.range_f32(-params.rotation, params.rotation);
        let hue = rng.next_f32();
        let brightness = 0.55 + 0.45 * (pi + 1) as f32 / k as f32;
        let margin = params.margin(size);

        let mut center = None;
        for _ in 0..64 {
            let cx = rng.range_f32(margin, w as f32 - 1.0 - margin);
            let cy = rng.range_f32(margin, h as f32 - 1.0 - margin);
            let ok = figures.iter().all(|f| {
                let (dx, dy) = (f.center.0 - cx, f.center.1 - cy);
                Float::sqrt(dx * dx + dy * dy) >= min_dist
            });
            if ok {
                center = Some((cx, cy));
                break;
            }
        }
        // No admissible spot: drop this person rather than violate the
        // separation guarantee.
        let Some(center) = center else { continue };

        let (sin, cos) = (Float::sin(angle), Float::cos(angle));
        let keypoints = params
            .skeleton
            .offsets
            .iter()
            .map(|&(ox, oy)| {
                let jx = rng.range_f32(-params.jitter, params.jitter);
                let jy = rng.range_f32(-params.jitter, params.jitter);
                let (ux, uy) = (ox + jx, oy + jy);
                let rx = cos * ux - sin * uy;
                let ry = sin * ux + cos * uy;
                (center.0 + size * rx, center.1 + size * ry)
            })
            .collect();
        figures.push(Figure {
            center,
            keypoints,
            size,
            color: tint(hue, brightness),
        });
    }

    for figure in &figures {
        draw_figure(&mut image, params, figure);
    }

    let persons = figures
        .iter()
        .map(|f| {
            f.keypoints
                .iter()
                .map(|&(x, y)| Keypoint {
                    x,
                    y,
                    visible: true,
                })
                .collect()
        })
        .collect();
    let ann = SceneAnnotation {
        width: w,
        height: h,
        keypoint_types: params.skeleton.keypoints(),
        persons,
        limbs: params.skeleton.limbs.clone(),
    };
    ann.validate()?;
    Ok((image, ann))
}

fn tint(hue: f32, brightness: f32) -> [f32; 3] {
    // Three phase-shifted ramps give saturated, distinct colors.
    let f = |t: f32| 0.5 + 0.5 * Float::cos(core::f32::consts::TAU * t);
    [
        brightness * (0.35 + 0.65 * f(hue)),
        brightness * (0.35 + 0.65 * f(hue + 1.0 / 3.0)),
        brightness * (0.35 + 0.65 * f(hue + 2.0 / 3.0)),
    ]
}

fn draw_figure(image: &mut Tensor, params: &SynthParams, fig: &Figure) {
    let thickness = (fig.size * 0.045).max(1.2);
    for &(a, b) in &params.skeleton.limbs {
        draw_segment(image, fig.keypoints[a], fig.keypoints[b], thickness, fig.color);
    }
    let dot = (fig.size * 0.06).max(1.6);
    let bright = [
        (fig.color[0] + 0.25).min(1.0),
        (fig.color[1] + 0.25).min(1.0),
        (fig.color[2] + 0.25).min(1.0),
    ];
    for &(x, y) in &fig.keypoints {
        draw_segment(image, (x, y), (x, y), dot, bright);
    }
}

/// Anti-aliased capsule from `a` to `b`: coverage falls off linearly in the
/// half-pixel band around the radius.
fn draw_segment(image: &mut Tensor, a: (f32, f32), b: (f32, f32), radius: f32, color: [f32; 3]) {
    let (_, h, w) = (image.shape()[0], image.shape()[1], image.shape()[2]);
    let x0 = (a.0.min(b.0) - radius - 1.0).floor().max(0.0) as usize;
    let x1 = ((a.0.max(b.0) + radius + 1.0).ceil() as usize).min(w - 1);
    let y0 = (a.1.min(b.1) - radius - 1.0).floor().max(0.0) as usize;
    let y1 = ((a.1.max(b.1) + radius + 1.0).ceil() as usize).min(h - 1);
    let plane = h * w;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let d = point_segment_distance((x as f32, y as f32), a, b);
            let cov = (radius + 0.5 - d).clamp(0.0, 1.0);
            if cov > 0.0 {
                for (c, &col) in color.iter().enumerate() {
                    let cell = &mut image.data_mut()[c * plane + y * w + x];
                    *cell = cell.max(cov * col);
                }
            }
        }
    }
}

fn point_segment_distance(p: (f32, f32), a: (f32, f32), b: (f32, f32)) -> f32 {
    let (ex, ey) = (b.0 - a.0, b.1 - a.1);
    let len2 = ex * ex + ey * ey;
    let (px, py) = (p.0 - a.0, p.1 - a.1);
    let t = if len2 == 0.0 {
        0.0
    } else {
        ((px * ex + py * ey) / len2).clamp(0.0, 1.0)
    };
    let (dx, dy) = (px - t * ex, py - t * ey);
    Float::sqrt(dx * dx + dy * dy)
}

/// Disjoint train/eval index ranges: train gets `0..n_train`, eval follows.
pub fn make_split(n_train: usize, n_eval: usize) -> Result<(core::ops::Range<u64>, core::ops::Range<u64>)> {
    if n_train == 0 || n_eval == 0 {
        return Err(Error::Config("split sizes must be positive".into()));
    }
    let nt = n_train as u64;
    Ok((0..nt, nt..nt + n_eval as u64))
}
