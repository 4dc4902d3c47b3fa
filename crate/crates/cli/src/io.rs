//! File IO: config loading, checkpoints, and portable pixmap/graymap images.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

use dualpose_core::checkpoint::Checkpoint;
use dualpose_core::config::RunConfig;
use dualpose_core::tensor::Tensor;

pub fn load_run_config(path: Option<&Path>, seed: u64) -> Result<RunConfig> {
    let mut cfg = match path {
        None => RunConfig::default(),
        Some(p) => {
            let text = fs::read_to_string(p)
                .with_context(|| format!("cannot read config file {}", p.display()))?;
            RunConfig::parse(&text).with_context(|| format!("in config file {}", p.display()))?
        }
    };
    cfg.set_seed(seed);
    Ok(cfg)
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    fs::write(path, ckpt.encode())
        .with_context(|| format!("cannot write checkpoint {}", path.display()))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes =
        fs::read(path).with_context(|| format!("cannot read checkpoint {}", path.display()))?;
    Ok(Checkpoint::decode(&bytes)?)
}

/// Binary PPM (P6) from a `[3, H, W]` tensor with values in `[0, 1]`.
pub fn write_ppm(path: &Path, image: &Tensor) -> Result<()> {
    let (c, h, w) = image.dims3()?;
    if c != 3 {
        bail!("PPM needs 3 channels, tensor has {c}");
    }
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    let plane = h * w;
    for i in 0..plane {
        for ch in 0..3 {
            let v = image.data()[ch * plane + i].clamp(0.0, 1.0);
            out.push((v * 255.0 + 0.5) as u8);
        }
    }
    fs::write(path, out).with_context(|| format!("cannot write {}", path.display()))
}

/// Binary PGM (P5) from one `[H, W]` plane with values in `[0, 1]`;
/// negative values are clamped.
pub fn write_pgm(path: &Path, plane: &[f32], h: usize, w: usize) -> Result<()> {
    let mut out = format!("P5\n{w} {h}\n255\n").into_bytes();
    for &v in plane {
        out.push((v.clamp(0.0, 1.0) * 255.0 + 0.5) as u8);
    }
    fs::write(path, out).with_context(|| format!("cannot write {}", path.display()))
}

/// Read a binary PPM (P6) into a `[3, H, W]` tensor scaled to `[0, 1]`.
pub fn read_ppm(path: &Path) -> Result<Tensor> {
    let bytes = fs::read(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut pos = 0usize;
    let mut token = |what: &str| -> Result<String> {
        // Skip whitespace and '#' comments.
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            bail!("unexpected end of PPM while reading {what}");
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token("magic")?;
    if magic != "P6" {
        bail!("unsupported pixmap magic '{magic}' (only binary P6)");
    }
    let w: usize = token("width")?.parse().context("bad PPM width")?;
    let h: usize = token("height")?.parse().context("bad PPM height")?;
    let maxval: usize = token("maxval")?.parse().context("bad PPM maxval")?;
    if maxval != 255 {
        bail!("unsupported PPM maxval {maxval} (only 255)");
    }
    pos += 1; // single whitespace after maxval
    let need = 3 * w * h;
    if bytes.len() < pos + need {
        bail!("PPM truncated: need {need} pixel bytes");
    }
    let mut t = Tensor::zeros(&[3, h, w]);
    let plane = h * w;
    for i in 0..plane {
        for ch in 0..3 {
            t.data_mut()[ch * plane + i] = bytes[pos + 3 * i + ch] as f32 / 255.0;
        }
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ppm_round_trip() {
        let dir = std::env::temp_dir().join("dualpose-io-test");
        fs::create_dir_all(&dir).unwrap();
        let path = dir.join("t.ppm");
        let mut img = Tensor::zeros(&[3, 2, 3]);
        for (i, v) in img.data_mut().iter_mut().enumerate() {
            *v = (i as f32) / 18.0;
        }
        write_ppm(&path, &img).unwrap();
        let back = read_ppm(&path).unwrap();
        assert_eq!(back.shape(), &[3, 2, 3]);
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1.0 / 255.0 + 1e-6);
        }
    }
}
