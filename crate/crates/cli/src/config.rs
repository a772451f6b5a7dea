//! Plain-text run configuration.
//!
//! One `key = value` per line, `#` starts a comment, blank lines are fine.
//! Keys mirror the training config fields; unknown keys are errors, missing
//! keys keep their defaults, and a later line overrides an earlier one.
//! Printing a config and parsing it back is the identity.

use anyhow::{anyhow, bail, Result};
use regionlets::regionlet::{PoolMode, RsnMode};
use toybench::TrainConfig;

pub fn mode_name(mode: RsnMode) -> &'static str {
    match mode {
        RsnMode::Projective => "projective",
        RsnMode::Affine => "affine",
        RsnMode::OffsetOnly => "offset_only",
        RsnMode::Global => "global",
    }
}

pub fn mode_from_name(name: &str) -> Result<RsnMode> {
    Ok(match name {
        "projective" => RsnMode::Projective,
        "affine" => RsnMode::Affine,
        "offset_only" => RsnMode::OffsetOnly,
        "global" => RsnMode::Global,
        other => bail!("unknown mode '{other}' (projective|affine|offset_only|global)"),
    })
}

pub fn pool_name(pool: PoolMode) -> &'static str {
    match pool {
        PoolMode::Max => "max",
        PoolMode::Avg => "avg",
    }
}

pub fn pool_from_name(name: &str) -> Result<PoolMode> {
    Ok(match name {
        "max" => PoolMode::Max,
        "avg" => PoolMode::Avg,
        other => bail!("unknown pool mode '{other}' (max|avg)"),
    })
}

/// Parses config text over the default settings.
pub fn parse_config(text: &str) -> Result<TrainConfig> {
    let mut cfg = TrainConfig::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(i) => &raw[..i],
            None => raw,
        }
        .trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected key = value", lineno + 1))?;
        let key = key.trim();
        let value = value.trim();
        let ctx = |e: String| anyhow!("line {}: {}", lineno + 1, e);
        match key {
            "seed" => cfg.seed = value.parse().map_err(|e| ctx(format!("seed: {e}")))?,
            "epochs" => cfg.epochs = value.parse().map_err(|e| ctx(format!("epochs: {e}")))?,
            "train_scenes" => {
                cfg.train_scenes = value
                    .parse()
                    .map_err(|e| ctx(format!("train_scenes: {e}")))?
            }
            "eval_scenes" => {
                cfg.eval_scenes = value.parse().map_err(|e| ctx(format!("eval_scenes: {e}")))?
            }
            "proposals_per_scene" => {
                cfg.proposals_per_scene = value
                    .parse()
                    .map_err(|e| ctx(format!("proposals_per_scene: {e}")))?
            }
            "lr_initial" => {
                cfg.lr_initial = value.parse().map_err(|e| ctx(format!("lr_initial: {e}")))?
            }
            "lr_final" => {
                cfg.lr_final = value.parse().map_err(|e| ctx(format!("lr_final: {e}")))?
            }
            "momentum" => {
                cfg.momentum = value.parse().map_err(|e| ctx(format!("momentum: {e}")))?
            }
            "region_rows" => {
                cfg.region_rows = value.parse().map_err(|e| ctx(format!("region_rows: {e}")))?
            }
            "region_cols" => {
                cfg.region_cols = value.parse().map_err(|e| ctx(format!("region_cols: {e}")))?
            }
            "sample_h" => cfg.sample_h = value.parse().map_err(|e| ctx(format!("sample_h: {e}")))?,
            "sample_w" => cfg.sample_w = value.parse().map_err(|e| ctx(format!("sample_w: {e}")))?,
            "mode" => cfg.mode = mode_from_name(value)?,
            "gating" => cfg.gating = parse_bool(value).map_err(&ctx)?,
            "shared_gate" => cfg.shared_gate = parse_bool(value).map_err(&ctx)?,
            "pool" => cfg.pool = pool_from_name(value)?,
            "descriptor_s" => {
                cfg.descriptor_s = value
                    .parse()
                    .map_err(|e| ctx(format!("descriptor_s: {e}")))?
            }
            other => bail!("line {}: unknown key '{other}'", lineno + 1),
        }
    }
    Ok(cfg)
}

fn parse_bool(value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" => Ok(true),
        "false" => Ok(false),
        other => Err(format!("expected true or false, got '{other}'")),
    }
}

/// Canonical text form; `parse_config(print_config(c))` recovers `c` exactly.
pub fn print_config(cfg: &TrainConfig) -> String {
    let mut out = String::new();
    out.push_str(&format!("seed = {}\n", cfg.seed));
    out.push_str(&format!("epochs = {}\n", cfg.epochs));
    out.push_str(&format!("train_scenes = {}\n", cfg.train_scenes));
    out.push_str(&format!("eval_scenes = {}\n", cfg.eval_scenes));
    out.push_str(&format!(
        "proposals_per_scene = {}\n",
        cfg.proposals_per_scene
    ));
    out.push_str(&format!("lr_initial = {}\n", cfg.lr_initial));
    out.push_str(&format!("lr_final = {}\n", cfg.lr_final));
    out.push_str(&format!("momentum = {}\n", cfg.momentum));
    out.push_str(&format!("region_rows = {}\n", cfg.region_rows));
    out.push_str(&format!("region_cols = {}\n", cfg.region_cols));
    out.push_str(&format!("sample_h = {}\n", cfg.sample_h));
    out.push_str(&format!("sample_w = {}\n", cfg.sample_w));
    out.push_str(&format!("mode = {}\n", mode_name(cfg.mode)));
    out.push_str(&format!("gating = {}\n", cfg.gating));
    out.push_str(&format!("shared_gate = {}\n", cfg.shared_gate));
    out.push_str(&format!("pool = {}\n", pool_name(cfg.pool)));
    out.push_str(&format!("descriptor_s = {}\n", cfg.descriptor_s));
    out
}
