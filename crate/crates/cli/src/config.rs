use std::collections::BTreeMap;
use std::path::Path;

use cde_core::net::{preset, Activation, LayerSpec};
use cde_core::TrainConfig;

/// Flat key=value text; '#' starts a comment, blank lines ignored.
pub fn parse_config_file(path: &Path) -> Result<BTreeMap<String, String>, String> {
    let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key=value", i + 1))?;
        map.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(map)
}

fn set<T: std::str::FromStr>(dst: &mut T, key: &str, val: &str) -> Result<(), String> {
    *dst = val
        .parse()
        .map_err(|_| format!("config key {key}: cannot parse {val:?}"))?;
    Ok(())
}

/// Applies config-file keys onto the defaults. Flag overrides are applied by
/// the caller afterwards, giving flag > config > default precedence.
pub fn apply_config(
    cfg: &mut TrainConfig,
    arch: &mut String,
    map: &BTreeMap<String, String>,
) -> Result<(), String> {
    for (k, v) in map {
        match k.as_str() {
            "mu" => set(&mut cfg.mu, k, v)?,
            "rho" => set(&mut cfg.rho, k, v)?,
            "lr_net" => set(&mut cfg.lr_net, k, v)?,
            "lr_tensor" => set(&mut cfg.lr_tensor, k, v)?,
            "lr_lambda" => set(&mut cfg.lr_lambda, k, v)?,
            "batch" => set(&mut cfg.batch, k, v)?,
            "max_iter" => set(&mut cfg.max_iter, k, v)?,
            "patience" => set(&mut cfg.patience, k, v)?,
            "pretrain_epochs" => set(&mut cfg.pretrain_epochs, k, v)?,
            "pretrain_lr" => set(&mut cfg.pretrain_lr, k, v)?,
            "eps_floor" => set(&mut cfg.eps_floor, k, v)?,
            "k" => set(&mut cfg.k_cutoff, k, v)?,
            "f" => set(&mut cfg.rank, k, v)?,
            "d" => set(&mut cfg.d_latent, k, v)?,
            "seed" => set(&mut cfg.seed, k, v)?,
            "val_fraction" => set(&mut cfg.val_fraction, k, v)?,
            "val_every" => set(&mut cfg.val_every, k, v)?,
            "identity_bypass" => set(&mut cfg.identity_bypass, k, v)?,
            "raw_init" => set(&mut cfg.raw_init, k, v)?,
            "arch" => *arch = v.clone(),
            other => return Err(format!("unknown config key {other}")),
        }
    }
    Ok(())
}

/// Preset name or dash-separated encoder widths such as 3-128-64-32-2
/// (ReLU hidden layers, bounded bottleneck, mirrored decoder).
pub fn build_arch(arch: &str) -> Result<(Vec<LayerSpec>, Vec<LayerSpec>), String> {
    if let Ok(pair) = preset(arch, true) {
        return Ok(pair);
    }
    let widths: Result<Vec<usize>, _> = arch.split('-').map(str::parse).collect();
    let widths = widths.map_err(|_| format!("unknown preset or widths list: {arch}"))?;
    if widths.len() < 2 || widths.contains(&0) {
        return Err(format!("need at least two nonzero widths: {arch}"));
    }
    let mut enc = Vec::new();
    for w in widths.windows(2) {
        enc.push(LayerSpec::new(w[0], w[1], Activation::Relu));
    }
    enc.last_mut().unwrap().activation = Activation::Bounded;
    let rev: Vec<usize> = widths.iter().rev().copied().collect();
    let mut dec = Vec::new();
    for w in rev.windows(2) {
        dec.push(LayerSpec::new(w[0], w[1], Activation::Relu));
    }
    dec.last_mut().unwrap().activation = Activation::Identity;
    Ok((enc, dec))
}
