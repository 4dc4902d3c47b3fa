//! Closed-form parameter, model-size, and MAC accounting.
//!
//! Everything here is computed from layer shapes alone; no tensors are
//! allocated. Model size uses the decimal convention MB = params * 4 / 1e6,
//! which reproduces the published size table for the baseline architecture
//! to within 0.1%.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use crate::config::{Arch, NetworkConfig};
use crate::error::Result;
use crate::net::{conv_specs, frontend_specs, stage_specs, ConvSpec};

pub const BYTES_PER_PARAM: u64 = 4;

#[derive(Debug, Clone)]
pub struct LayerRow {
    pub name: String,
    pub kernel: (usize, usize),
    pub cin: usize,
    pub cout: usize,
    pub groups: usize,
    pub params: u64,
    /// Multiply-accumulates for the report's input size (0 when no input
    /// size was requested).
    pub macs: u64,
}

#[derive(Debug, Clone)]
pub struct CostReport {
    pub rows: Vec<LayerRow>,
    pub total_params: u64,
    pub total_macs: u64,
    /// Parameter cost of one extra stage beyond the first repeated stage.
    pub per_stage_params: u64,
}

impl CostReport {
    pub fn size_mb(&self) -> f64 {
        params_to_mb(self.total_params)
    }

    pub fn per_stage_mb(&self) -> f64 {
        params_to_mb(self.per_stage_params)
    }
}

pub fn params_to_mb(params: u64) -> f64 {
    (params * BYTES_PER_PARAM) as f64 / 1.0e6
}

fn row_from_spec(spec: &ConvSpec, input: Option<(usize, usize)>) -> LayerRow {
    LayerRow {
        name: spec.name.clone(),
        kernel: (spec.kh, spec.kw),
        cin: spec.cin,
        cout: spec.cout,
        groups: spec.groups,
        params: spec.param_count(),
        macs: input.map_or(0, |(h, w)| spec.macs(h, w)),
    }
}

/// Full per-layer report for a configuration. `input` enables the MAC
/// column; input dims must be divisible by the network stride.
pub fn report(cfg: &NetworkConfig, input: Option<(usize, usize)>) -> Result<CostReport> {
    cfg.validate()?;
    if let Some((h, w)) = input {
        if h % 8 != 0 || w % 8 != 0 {
            return Err(crate::error::Error::Shape(format!(
                "analysis input dims {h}x{w} must be divisible by 8"
            )));
        }
    }
    let rows: Vec<LayerRow> = conv_specs(cfg)
        .iter()
        .map(|s| row_from_spec(s, input))
        .collect();
    let total_params = rows.iter().map(|r| r.params).sum();
    let total_macs = rows.iter().map(|r| r.macs).sum();
    let per_stage_params = stage_specs(cfg, 2).iter().map(|s| s.param_count()).sum();
    Ok(CostReport {
        rows,
        total_params,
        total_macs,
        per_stage_params,
    })
}

/// Parameter count only (closed form).
pub fn count_params(cfg: &NetworkConfig) -> Result<u64> {
    Ok(report(cfg, None)?.total_params)
}

/// Multiply-accumulate count for one image of the given size.
pub fn count_flops(cfg: &NetworkConfig, h: usize, w: usize) -> Result<u64> {
    Ok(report(cfg, Some((h, w)))?.total_macs)
}

pub fn frontend_params(width_div: usize) -> u64 {
    frontend_specs(width_div).iter().map(|s| s.param_count()).sum()
}

/// Model sizes in MB for one architecture across several stage counts.
pub fn sizes_for_stages(cfg: &NetworkConfig, stage_counts: &[usize]) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(stage_counts.len());
    for &t in stage_counts {
        let mut c = cfg.clone();
        c.stages = t;
        out.push(params_to_mb(count_params(&c)?));
    }
    Ok(out)
}

/// Model-size comparison table: one row per architecture, one column per
/// stage count. Returns (aligned text, tab-separated copy).
pub fn size_table(archs: &[Arch], stage_counts: &[usize], base: &NetworkConfig) -> Result<(String, String)> {
    let mut aligned = String::new();
    let mut tsv = String::new();

    let name_w = 10usize;
    aligned.push_str(&format!("{:<name_w$}", "arch"));
    tsv.push_str("arch");
    for t in stage_counts {
        aligned.push_str(&format!(" {:>10}", format!("{t} stages")));
        tsv.push_str(&format!("\t{t} stages"));
    }
    aligned.push('\n');
    tsv.push('\n');

    for &arch in archs {
        let mut cfg = base.clone();
        cfg.arch = arch;
        let sizes = sizes_for_stages(&cfg, stage_counts)?;
        aligned.push_str(&format!("{:<name_w$}", arch.as_str()));
        tsv.push_str(arch.as_str());
        for mb in sizes {
            aligned.push_str(&format!(" {mb:>10.1}"));
            tsv.push_str(&format!("\t{mb:.1}"));
        }
        aligned.push('\n');
        tsv.push('\n');
    }
    Ok((aligned, tsv))
}
