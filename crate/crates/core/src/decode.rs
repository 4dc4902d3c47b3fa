//! Bottom-up decoding, multi-scale inference, and the PCK metric.
//!
//! Pipeline: heatmap peaks become keypoint candidates, candidate pairs are
//! scored by a line integral over the PAF channels, accepted connections are
//! merged into persons by union-find, greedily, in descending score order.

use alloc::vec;
use alloc::vec::Vec;

use num_traits::Float;

use crate::config::INPUT_STRIDE;
use crate::error::{Error, Result};
use crate::kernels::bilinear_resize;
use crate::net::Network;
use crate::targets::SceneAnnotation;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeypointCandidate {
    /// Keypoint type (heatmap channel).
    pub kind: usize,
    /// Image-space coordinates (output grid times stride).
    pub x: f32,
    pub y: f32,
    /// Heatmap value at the peak.
    pub score: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodedPose {
    /// Per keypoint type: (x, y, score) when present.
    pub keypoints: Vec<Option<(f32, f32, f32)>>,
    /// Sum of member keypoint scores and accepted connection scores.
    pub score: f32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecodeParams {
    pub peak_threshold: f32,
    pub connection_threshold: f32,
    /// Sample count of the PAF line integral.
    pub samples: usize,
    /// Inference scales, averaged at base resolution.
    pub scales: Vec<f32>,
}

impl Default for DecodeParams {
    fn default() -> Self {
        DecodeParams {
            peak_threshold: 0.3,
            connection_threshold: 0.3,
            samples: 10,
            scales: vec![1.0],
        }
    }
}

/// 3x3 local maxima (strictly greater than all in-bounds neighbors, ties
/// broken by scan order) at or above `threshold`, over every non-background
/// channel. The last channel is the background and is skipped.
pub fn find_peaks(s: &Tensor, stride: usize, threshold: f32) -> Result<Vec<KeypointCandidate>> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::Config(alloc::format!(
            "peak threshold {threshold} outside (0, 1)"
        )));
    }
    let (j, h, w) = s.dims3()?;
    let mut out = Vec::new();
    if j == 0 {
        return Ok(out);
    }
    for kind in 0..j - 1 {
        for py in 0..h {
            for px in 0..w {
                let v = s.at3(kind, py, px);
                if v < threshold {
                    continue;
                }
                let mut is_peak = true;
                'scan: for dy in -1i32..=1 {
                    for dx in -1i32..=1 {
                        if dy == 0 && dx == 0 {
                            continue;
                        }
                        let (ny, nx) = (py as i32 + dy, px as i32 + dx);
                        if ny < 0 || nx < 0 || ny >= h as i32 || nx >= w as i32 {
                            continue;
                        }
                        if s.at3(kind, ny as usize, nx as usize) >= v {
                            is_peak = false;
                            break 'scan;
                        }
                    }
                }
                if is_peak {
                    out.push(KeypointCandidate {
                        kind,
                        x: (px * stride) as f32,
                        y: (py * stride) as f32,
                        score: v,
                    });
                }
            }
        }
    }
    Ok(out)
}

/// Mean over `samples` points along a->b of the PAF dotted with the segment
/// direction. Zero-length segments score zero.
pub fn score_connection(
    l: &Tensor,
    limb: usize,
    a: &KeypointCandidate,
    b: &KeypointCandidate,
    stride: usize,
    samples: usize,
) -> Result<f32> {
    if samples < 2 {
        return Err(Error::Config(alloc::format!(
            "line integral needs >= 2 samples, got {samples}"
        )));
    }
    let (c, h, w) = l.dims3()?;
    if 2 * limb + 1 >= c {
        return Err(Error::Shape(alloc::format!(
            "limb {limb} needs channels ({}, {}), field has {c}",
            2 * limb,
            2 * limb + 1
        )));
    }
    let (ex, ey) = (b.x - a.x, b.y - a.y);
    let len = Float::sqrt(ex * ex + ey * ey);
    if len == 0.0 {
        return Ok(0.0);
    }
    let (ux, uy) = (ex / len, ey / len);
    let mut acc = 0.0f32;
    for i in 0..samples {
        let t = i as f32 / (samples - 1) as f32;
        let qx = a.x + t * ex;
        let qy = a.y + t * ey;
        // Nearest output pixel, clamped to the map.
        let px = ((qx / stride as f32 + 0.5) as usize).min(w - 1);
        let py = ((qy / stride as f32 + 0.5) as usize).min(h - 1);
        acc += l.at3(2 * limb, py, px) * ux + l.at3(2 * limb + 1, py, px) * uy;
    }
    Ok(acc / samples as f32)
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, i: usize) -> usize {
        let mut root = i;
        while self.parent[root] != root {
            root = self.parent[root];
        }
        let mut cur = i;
        while self.parent[cur] != root {
            let next = self.parent[cur];
            self.parent[cur] = root;
            cur = next;
        }
        root
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            // Deterministic: smaller root wins.
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Greedy limb-by-limb assembly. Per limb, candidate pairs are scored and
/// accepted in descending score order while both endpoints are unused for
/// that limb; accepted pairs merge into persons via union-find.
pub fn assemble(
    candidates: &[KeypointCandidate],
    l: &Tensor,
    limbs: &[(usize, usize)],
    stride: usize,
    params: &DecodeParams,
) -> Result<Vec<DecodedPose>> {
    if !(params.connection_threshold > 0.0 && params.connection_threshold < 1.0) {
        return Err(Error::Config(alloc::format!(
            "connection threshold {} outside (0, 1)",
            params.connection_threshold
        )));
    }
    if candidates.is_empty() {
        return Ok(Vec::new());
    }
    let n = candidates.len();
    let mut uf = UnionFind::new(n);
    let mut connected = vec![false; n];
    let mut connection_score = vec![0.0f32; n];

    for (li, &(ka, kb)) in limbs.iter().enumerate() {
        let side_a: Vec<usize> = (0..n).filter(|&i| candidates[i].kind == ka).collect();
        let side_b: Vec<usize> = (0..n).filter(|&i| candidates[i].kind == kb).collect();
        let mut scored: Vec<(f32, usize, usize)> = Vec::with_capacity(side_a.len() * side_b.len());
        for &ia in &side_a {
            for &ib in &side_b {
                let s = score_connection(
                    l,
                    li,
                    &candidates[ia],
                    &candidates[ib],
                    stride,
                    params.samples,
                )?;
                if s >= params.connection_threshold {
                    scored.push((s, ia, ib));
                }
            }
        }
        // Descending score; candidate indices break ties deterministically.
        scored.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
        let mut used_a = vec![false; n];
        let mut used_b = vec![false; n];
        for (s, ia, ib) in scored {
            if used_a[ia] || used_b[ib] {
                continue;
            }
            used_a[ia] = true;
            used_b[ib] = true;
            uf.union(ia, ib);
            connected[ia] = true;
            connected[ib] = true;
            connection_score[ia] += s;
        }
    }

    let kinds = limbs
        .iter()
        .flat_map(|&(a, b)| [a, b])
        .max()
        .map_or_else(
            || candidates.iter().map(|c| c.kind).max().unwrap_or(0) + 1,
            |m| (m + 1).max(candidates.iter().map(|c| c.kind).max().unwrap_or(0) + 1),
        );

    // Gather components that hold at least one accepted connection, ordered
    // by their smallest member index.
    let mut poses: Vec<DecodedPose> = Vec::new();
    let mut root_to_pose: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        if !connected[i] {
            continue;
        }
        let root = uf.find(i);
        let pose_idx = match root_to_pose[root] {
            Some(p) => p,
            None => {
                poses.push(DecodedPose {
                    keypoints: vec![None; kinds],
                    score: 0.0,
                });
                root_to_pose[root] = Some(poses.len() - 1);
                poses.len() - 1
            }
        };
        let cand = &candidates[i];
        let slot = &mut poses[pose_idx].keypoints[cand.kind];
        let replace = match slot {
            None => true,
            Some((_, _, score)) => cand.score > *score,
        };
        if replace {
            *slot = Some((cand.x, cand.y, cand.score));
        }
        poses[pose_idx].score += cand.score + connection_score[i];
    }
    Ok(poses)
}

/// Peaks + assembly over final-stage maps of one image.
pub fn decode_maps(
    s: &Tensor,
    l: &Tensor,
    limbs: &[(usize, usize)],
    stride: usize,
    params: &DecodeParams,
) -> Result<Vec<DecodedPose>> {
    let candidates = find_peaks(s, stride, params.peak_threshold)?;
    assemble(&candidates, l, limbs, stride, params)
}

/// Run the network at each scale, resize final-stage maps back to base
/// output resolution, and average. A single 1.0 scale is exactly the plain
/// forward path.
pub fn multi_scale_infer(net: &Network, image: &Tensor, scales: &[f32]) -> Result<(Tensor, Tensor)> {
    if scales.is_empty() {
        return Err(Error::Config("scale list must not be empty".into()));
    }
    let (_, h, w) = image.dims3()?;
    if h % INPUT_STRIDE != 0 || w % INPUT_STRIDE != 0 {
        return Err(Error::Shape(alloc::format!(
            "image dims {h}x{w} must be divisible by {INPUT_STRIDE}"
        )));
    }
    let (oh, ow) = (h / INPUT_STRIDE, w / INPUT_STRIDE);
    let mut sum_s: Option<Tensor> = None;
    let mut sum_l: Option<Tensor> = None;
    for &scale in scales {
        if !(scale > 0.0) {
            return Err(Error::Config(alloc::format!("scale {scale} must be positive")));
        }
        let sh = ((h as f32 * scale) as usize).max(1);
        let sw = ((w as f32 * scale) as usize).max(1);
        let scaled = if (sh, sw) == (h, w) {
            image.clone()
        } else {
            bilinear_resize(image, sh, sw)?
        };
        // Pad up to the stride so the frontend accepts it; the padded band is
        // cropped away from the output.
        let (ph, pw) = (sh.div_ceil(INPUT_STRIDE) * INPUT_STRIDE, sw.div_ceil(INPUT_STRIDE) * INPUT_STRIDE);
        let padded = pad_bottom_right(&scaled, ph, pw)?;
        let maps = net.forward_maps(&padded.unsqueeze_batch()?)?;
        let (s, l) = maps.last().expect("at least one stage");
        let s = s.batch_item(0)?;
        let l = l.batch_item(0)?;
        // Valid output rows/cols: those whose image point p*stride lies
        // inside the unpadded area.
        let (vh, vw) = (sh.div_ceil(INPUT_STRIDE), sw.div_ceil(INPUT_STRIDE));
        let s = crop_spatial(&s, vh, vw)?;
        let l = crop_spatial(&l, vh, vw)?;
        let s = bilinear_resize(&s, oh, ow)?;
        let l = bilinear_resize(&l, oh, ow)?;
        sum_s = Some(match sum_s {
            None => s,
            Some(mut acc) => {
                for (a, b) in acc.data_mut().iter_mut().zip(s.data()) {
                    *a += *b;
                }
                acc
            }
        });
        sum_l = Some(match sum_l {
            None => l,
            Some(mut acc) => {
                for (a, b) in acc.data_mut().iter_mut().zip(l.data()) {
                    *a += *b;
                }
                acc
            }
        });
    }
    let k = scales.len() as f32;
    let mut s = sum_s.expect("non-empty scales");
    let mut l = sum_l.expect("non-empty scales");
    for v in s.data_mut() {
        *v /= k;
    }
    for v in l.data_mut() {
        *v /= k;
    }
    Ok((s, l))
}

fn pad_bottom_right(t: &Tensor, ph: usize, pw: usize) -> Result<Tensor> {
    let (c, h, w) = t.dims3()?;
    if (ph, pw) == (h, w) {
        return Ok(t.clone());
    }
    let mut out = Tensor::zeros(&[c, ph, pw]);
    for ci in 0..c {
        for y in 0..h {
            let src = &t.data()[(ci * h + y) * w..][..w];
            out.data_mut()[(ci * ph + y) * pw..][..w].copy_from_slice(src);
        }
    }
    Ok(out)
}

fn crop_spatial(t: &Tensor, ch: usize, cw: usize) -> Result<Tensor> {
    let (c, h, w) = t.dims3()?;
    if (ch, cw) == (h, w) {
        return Ok(t.clone());
    }
    if ch > h || cw > w {
        return Err(Error::Shape(alloc::format!(
            "crop {ch}x{cw} exceeds source {h}x{w}"
        )));
    }
    let mut out = Tensor::zeros(&[c, ch, cw]);
    for ci in 0..c {
        for y in 0..ch {
            let src = &t.data()[(ci * h + y) * w..][..cw];
            out.data_mut()[(ci * ch + y) * cw..][..cw].copy_from_slice(src);
        }
    }
    Ok(out)
}

/// Percentage of correct keypoints at `alpha` times the person bounding-box
/// diagonal. Decoded poses are matched to ground-truth persons greedily by
/// mean keypoint distance.
pub fn pck(poses: &[DecodedPose], ann: &SceneAnnotation, alpha: f32) -> Result<f32> {
    let (correct, total) = pck_counts(poses, ann, alpha)?;
    if total == 0 {
        return Ok(1.0);
    }
    Ok(correct as f32 / total as f32)
}

/// (correct, total-visible) keypoint counts; aggregate across scenes by
/// summing both sides.
pub fn pck_counts(poses: &[DecodedPose], ann: &SceneAnnotation, alpha: f32) -> Result<(usize, usize)> {
    if !(alpha > 0.0) {
        return Err(Error::Config(alloc::format!("alpha {alpha} must be positive")));
    }
    ann.validate()?;
    let total: usize = ann
        .persons
        .iter()
        .map(|p| p.iter().filter(|k| k.visible).count())
        .sum();

    // Mean distance over keypoints present on both sides.
    let mut pairs: Vec<(f32, usize, usize)> = Vec::new();
    for (pi, pose) in poses.iter().enumerate() {
        for (gi, person) in ann.persons.iter().enumerate() {
            let mut dist = 0.0f32;
            let mut count = 0usize;
            for (kind, kp) in person.iter().enumerate() {
                if !kp.visible {
                    continue;
                }
                if let Some(Some((x, y, _))) = pose.keypoints.get(kind) {
                    let (dx, dy) = (x - kp.x, y - kp.y);
                    dist += Float::sqrt(dx * dx + dy * dy);
                    count += 1;
                }
            }
            if count > 0 {
                pairs.push((dist / count as f32, pi, gi));
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut pose_used = vec![false; poses.len()];
    let mut gt_used = vec![false; ann.persons.len()];
    let mut correct = 0usize;
    for (_, pi, gi) in pairs {
        if pose_used[pi] || gt_used[gi] {
            continue;
        }
        pose_used[pi] = true;
        gt_used[gi] = true;
        let tol = alpha * ann.person_diagonal(gi);
        for (kind, kp) in ann.persons[gi].iter().enumerate() {
            if !kp.visible {
                continue;
            }
            if let Some(Some((x, y, _))) = poses[pi].keypoints.get(kind) {
                let (dx, dy) = (x - kp.x, y - kp.y);
                if Float::sqrt(dx * dx + dy * dy) <= tol {
                    correct += 1;
                }
            }
        }
    }
    Ok((correct, total))
}
