//! Key-value experiment configuration: parsing with strict validation,
//! defaults for every field, and effective-config emission that reproduces a
//! run bit-for-bit.

use std::path::Path;

use crate::cil::{benchmark_multistep_spec, benchmark_scene_spec, Arm, CilHyper, ClassOrder, SplitPlan};
use crate::cloud::{generate_scene, load_cloud, CloudFormat, SceneSpec};
use crate::error::{Error, Result};
use crate::model::PreparedCloud;
use crate::network::TrainConfig;
use crate::propel::{BaldConfig, SigmaMode, ThresholdConfig};
use crate::protoguard::{MomentumParams, PipelineShape};
use crate::rng::Rng;

/// Data source for an experiment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SceneSource {
    /// the fixed single-step benchmark scene
    Builtin,
    /// the fixed multi-step benchmark scene
    BuiltinMultistep,
    /// a scene-spec file
    File(String),
    /// explicit train/eval cloud files (XYZRGBL text)
    Clouds { train: String, eval: String },
}

/// Direction of the similarity -> momentum map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentumDirection {
    /// higher similarity -> higher momentum (default)
    Direct,
    Inverse,
}

/// Fully resolved experiment configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub scene: SceneSource,
    pub order: ClassOrder,
    pub n_base: usize,
    pub step_sizes: Vec<usize>,
    pub arm: Arm,
    pub k: usize,
    pub hidden: usize,
    pub d_embed: usize,
    pub d_proto: usize,
    pub fusion_hidden: usize,
    pub lr: f64,
    pub lr_novel: f64,
    pub epochs_base: usize,
    pub epochs_novel: usize,
    pub batch_points: usize,
    pub l2: f64,
    pub m_min: f64,
    pub m_max: f64,
    pub momentum_a: f64,
    pub momentum_b: f64,
    pub momentum_direction: MomentumDirection,
    pub learnable_momentum: bool,
    pub bald_passes: usize,
    /// 0 = use `k`
    pub bald_k: usize,
    /// 0 = half the neighborhood
    pub bald_subsample: usize,
    /// None = median neighbor distance
    pub sigma: Option<f64>,
    /// None = entropy-scaled from the step's base width
    pub tau0: Option<f64>,
    pub gamma: f64,
    pub tau_min: Option<f64>,
    pub tau_max: Option<f64>,
    /// 0 = use `k`
    pub propagate_k: usize,
    pub seed: u64,
    pub debug_dump: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scene: SceneSource::Builtin,
            order: ClassOrder::S0,
            n_base: 4,
            step_sizes: vec![2],
            arm: Arm::FtPgPro,
            k: 8,
            hidden: 16,
            d_embed: 16,
            d_proto: 8,
            fusion_hidden: 16,
            lr: 0.3,
            lr_novel: 0.2,
            epochs_base: 60,
            epochs_novel: 40,
            batch_points: 0,
            l2: 0.0,
            m_min: 0.01,
            m_max: 0.5,
            momentum_a: 4.0,
            momentum_b: 0.0,
            momentum_direction: MomentumDirection::Direct,
            learnable_momentum: true,
            bald_passes: 8,
            bald_k: 0,
            bald_subsample: 0,
            sigma: None,
            tau0: None,
            gamma: 0.5,
            tau_min: None,
            tau_max: None,
            propagate_k: 0,
            seed: 42,
        debug_dump: false,
        }
    }
}

fn split_pairs(line: &str) -> Vec<&str> {
    line.split(',').map(|s| s.trim()).filter(|s| !s.is_empty()).collect()
}

fn parse_usize(key: &str, v: &str) -> Result<usize> {
    v.parse().map_err(|_| Error::OutOfRange(key.into()))
}

fn parse_u64(key: &str, v: &str) -> Result<u64> {
    v.parse().map_err(|_| Error::OutOfRange(key.into()))
}

fn parse_f64(key: &str, v: &str) -> Result<f64> {
    v.parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| Error::OutOfRange(key.into()))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::OutOfRange(key.into())),
    }
}

fn parse_auto_f64(key: &str, v: &str) -> Result<Option<f64>> {
    if v == "auto" {
        Ok(None)
    } else {
        parse_f64(key, v).map(Some)
    }
}

fn fmt_auto(v: Option<f64>) -> String {
    match v {
        None => "auto".into(),
        Some(x) => format!("{x}"),
    }
}

fn parse_usize_list(key: &str, v: &str) -> Result<Vec<usize>> {
    let out: std::result::Result<Vec<usize>, _> =
        v.split_whitespace().map(|t| t.parse::<usize>()).collect();
    let out = out.map_err(|_| Error::OutOfRange(key.into()))?;
    if out.is_empty() {
        return Err(Error::OutOfRange(key.into()));
    }
    Ok(out)
}

impl RunConfig {
    /// Parse a config file; an empty file yields the full default config.
    pub fn parse_file(path: impl AsRef<Path>) -> Result<RunConfig> {
        RunConfig::parse_str(&std::fs::read_to_string(path)?)
    }

    pub fn parse_str(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let mut order_seed: Option<u64> = None;
        let mut order_kind = "s0".to_string();
        let mut train_cloud: Option<String> = None;
        let mut eval_cloud: Option<String> = None;
        for raw_line in text.lines() {
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            for pair in split_pairs(line) {
                let (key, value) = pair
                    .split_once(':')
                    .map(|(k, v)| (k.trim(), v.trim()))
                    .ok_or_else(|| Error::Parse(format!("expected `key: value`, got `{pair}`")))?;
                if value.is_empty() {
                    return Err(Error::Missing(key.into()));
                }
                match key {
                    "scene" => {
                        cfg.scene = match value {
                            "builtin" => SceneSource::Builtin,
                            "builtin-multistep" => SceneSource::BuiltinMultistep,
                            path => SceneSource::File(path.to_string()),
                        }
                    }
                    "train_cloud" => train_cloud = Some(value.to_string()),
                    "eval_cloud" => eval_cloud = Some(value.to_string()),
                    "order" => order_kind = value.to_ascii_lowercase(),
                    "order_seed" => order_seed = Some(parse_u64(key, value)?),
                    "n_base" => cfg.n_base = parse_usize(key, value)?,
                    "step_sizes" => cfg.step_sizes = parse_usize_list(key, value)?,
                    "arm" => cfg.arm = Arm::parse(value)?,
                    "k" => cfg.k = parse_usize(key, value)?,
                    "hidden" => cfg.hidden = parse_usize(key, value)?,
                    "d_embed" => cfg.d_embed = parse_usize(key, value)?,
                    "d_proto" => cfg.d_proto = parse_usize(key, value)?,
                    "fusion_hidden" => cfg.fusion_hidden = parse_usize(key, value)?,
                    "lr" => cfg.lr = parse_f64(key, value)?,
                    "lr_novel" => cfg.lr_novel = parse_f64(key, value)?,
                    "epochs_base" => cfg.epochs_base = parse_usize(key, value)?,
                    "epochs_novel" => cfg.epochs_novel = parse_usize(key, value)?,
                    "batch_points" => cfg.batch_points = parse_usize(key, value)?,
                    "l2" => cfg.l2 = parse_f64(key, value)?,
                    "m_min" => cfg.m_min = parse_f64(key, value)?,
                    "m_max" => cfg.m_max = parse_f64(key, value)?,
                    "momentum_a" => cfg.momentum_a = parse_f64(key, value)?,
                    "momentum_b" => cfg.momentum_b = parse_f64(key, value)?,
                    "momentum_direction" => {
                        cfg.momentum_direction = match value {
                            "direct" => MomentumDirection::Direct,
                            "inverse" => MomentumDirection::Inverse,
                            _ => return Err(Error::OutOfRange(key.into())),
                        }
                    }
                    "learnable_momentum" => cfg.learnable_momentum = parse_bool(key, value)?,
                    "bald_passes" => cfg.bald_passes = parse_usize(key, value)?,
                    "bald_k" => cfg.bald_k = parse_usize(key, value)?,
                    "bald_subsample" => cfg.bald_subsample = parse_usize(key, value)?,
                    "sigma" => cfg.sigma = parse_auto_f64(key, value)?,
                    "tau0" => cfg.tau0 = parse_auto_f64(key, value)?,
                    "gamma" => cfg.gamma = parse_f64(key, value)?,
                    "tau_min" => cfg.tau_min = parse_auto_f64(key, value)?,
                    "tau_max" => cfg.tau_max = parse_auto_f64(key, value)?,
                    "propagate_k" => cfg.propagate_k = parse_usize(key, value)?,
                    "seed" => cfg.seed = parse_u64(key, value)?,
                    "debug_dump" => cfg.debug_dump = parse_bool(key, value)?,
                    other => return Err(Error::UnknownKey(other.into())),
                }
            }
        }
        cfg.order = match order_kind.as_str() {
            "s0" => ClassOrder::S0,
            "s1" => ClassOrder::S1(order_seed.unwrap_or(cfg.seed)),
            _ => return Err(Error::OutOfRange("order".into())),
        };
        match (train_cloud, eval_cloud) {
            (None, None) => {}
            (Some(t), Some(e)) => cfg.scene = SceneSource::Clouds { train: t, eval: e },
            (Some(_), None) => return Err(Error::Missing("eval_cloud".into())),
            (None, Some(_)) => return Err(Error::Missing("train_cloud".into())),
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0) {
            return Err(Error::OutOfRange("lr".into()));
        }
        if !(self.lr_novel > 0.0) {
            return Err(Error::OutOfRange("lr_novel".into()));
        }
        if self.epochs_base < 1 {
            return Err(Error::OutOfRange("epochs_base".into()));
        }
        if self.epochs_novel < 1 {
            return Err(Error::OutOfRange("epochs_novel".into()));
        }
        if self.l2 < 0.0 {
            return Err(Error::OutOfRange("l2".into()));
        }
        if self.k < 3 {
            return Err(Error::OutOfRange("k".into()));
        }
        if self.n_base < 1 {
            return Err(Error::OutOfRange("n_base".into()));
        }
        if self.step_sizes.contains(&0) {
            return Err(Error::OutOfRange("step_sizes".into()));
        }
        if !(self.m_min > 0.0 && self.m_min < 1.0) {
            return Err(Error::OutOfRange("m_min".into()));
        }
        if !(self.m_max > self.m_min && self.m_max < 1.0) {
            return Err(Error::OutOfRange("m_max".into()));
        }
        if self.bald_passes < 2 {
            return Err(Error::OutOfRange("bald_passes".into()));
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0) {
                return Err(Error::OutOfRange("sigma".into()));
            }
        }
        if let Some(t) = self.tau0 {
            if !(t > 0.0) {
                return Err(Error::OutOfRange("tau0".into()));
            }
        }
        if self.gamma < 0.0 {
            return Err(Error::OutOfRange("gamma".into()));
        }
        if let Some(tmin) = self.tau_min {
            if !(tmin > 0.0) {
                return Err(Error::OutOfRange("tau_min".into()));
            }
        }
        if let (Some(tmin), Some(tmax)) = (self.tau_min, self.tau_max) {
            if tmax < tmin {
                return Err(Error::OutOfRange("tau_max".into()));
            }
        }
        Ok(())
    }

    /// The effective config: every key, in a fixed order; re-parsing it
    /// reproduces this config exactly.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let scene = match &self.scene {
            SceneSource::Builtin => "builtin".to_string(),
            SceneSource::BuiltinMultistep => "builtin-multistep".to_string(),
            SceneSource::File(p) => p.clone(),
            SceneSource::Clouds { .. } => "builtin".to_string(),
        };
        s.push_str(&format!("scene: {scene}\n"));
        if let SceneSource::Clouds { train, eval } = &self.scene {
            s.push_str(&format!("train_cloud: {train}\n"));
            s.push_str(&format!("eval_cloud: {eval}\n"));
        }
        match self.order {
            ClassOrder::S0 => s.push_str("order: s0\n"),
            ClassOrder::S1(seed) => {
                s.push_str("order: s1\n");
                s.push_str(&format!("order_seed: {seed}\n"));
            }
        }
        s.push_str(&format!("n_base: {}\n", self.n_base));
        let sizes: Vec<String> = self.step_sizes.iter().map(|v| v.to_string()).collect();
        s.push_str(&format!("step_sizes: {}\n", sizes.join(" ")));
        s.push_str(&format!(
            "arm: {}\n",
            match self.arm {
                Arm::Ft => "ft",
                Arm::FreezeAdd => "fa",
                Arm::FtPg => "ft-pg",
                Arm::FtPro => "ft-pro",
                Arm::FtPgPro => "ft-pg-pro",
                Arm::Jt => "jt",
            }
        ));
        s.push_str(&format!("k: {}\n", self.k));
        s.push_str(&format!("hidden: {}\n", self.hidden));
        s.push_str(&format!("d_embed: {}\n", self.d_embed));
        s.push_str(&format!("d_proto: {}\n", self.d_proto));
        s.push_str(&format!("fusion_hidden: {}\n", self.fusion_hidden));
        s.push_str(&format!("lr: {}\n", self.lr));
        s.push_str(&format!("lr_novel: {}\n", self.lr_novel));
        s.push_str(&format!("epochs_base: {}\n", self.epochs_base));
        s.push_str(&format!("epochs_novel: {}\n", self.epochs_novel));
        s.push_str(&format!("batch_points: {}\n", self.batch_points));
        s.push_str(&format!("l2: {}\n", self.l2));
        s.push_str(&format!("m_min: {}\n", self.m_min));
        s.push_str(&format!("m_max: {}\n", self.m_max));
        s.push_str(&format!("momentum_a: {}\n", self.momentum_a));
        s.push_str(&format!("momentum_b: {}\n", self.momentum_b));
        s.push_str(&format!(
            "momentum_direction: {}\n",
            match self.momentum_direction {
                MomentumDirection::Direct => "direct",
                MomentumDirection::Inverse => "inverse",
            }
        ));
        s.push_str(&format!("learnable_momentum: {}\n", self.learnable_momentum));
        s.push_str(&format!("bald_passes: {}\n", self.bald_passes));
        s.push_str(&format!("bald_k: {}\n", self.bald_k));
        s.push_str(&format!("bald_subsample: {}\n", self.bald_subsample));
        s.push_str(&format!("sigma: {}\n", fmt_auto(self.sigma)));
        s.push_str(&format!("tau0: {}\n", fmt_auto(self.tau0)));
        s.push_str(&format!("gamma: {}\n", self.gamma));
        s.push_str(&format!("tau_min: {}\n", fmt_auto(self.tau_min)));
        s.push_str(&format!("tau_max: {}\n", fmt_auto(self.tau_max)));
        s.push_str(&format!("propagate_k: {}\n", self.propagate_k));
        s.push_str(&format!("seed: {}\n", self.seed));
        s.push_str(&format!("debug_dump: {}\n", self.debug_dump));
        s
    }

    /// Hyperparameters in the form the experiment harness consumes.
    pub fn hyper(&self) -> CilHyper {
        let a = match self.momentum_direction {
            MomentumDirection::Direct => self.momentum_a.abs(),
            MomentumDirection::Inverse => -self.momentum_a.abs(),
        };
        CilHyper {
            k: self.k,
            shape: PipelineShape {
                d_proto: self.d_proto,
                fusion_hidden: self.fusion_hidden,
                d_enhanced: 8,
                hidden: self.hidden,
                d_embed: self.d_embed,
            },
            momentum: MomentumParams {
                a,
                b: self.momentum_b,
                m_min: self.m_min,
                m_max: self.m_max,
            },
            learnable_momentum: self.learnable_momentum,
            base_train: TrainConfig {
                learning_rate: self.lr,
                epochs: self.epochs_base,
                batch_points: self.batch_points,
                l2: self.l2,
                seed: self.seed,
            },
            novel_train: TrainConfig {
                learning_rate: self.lr_novel,
                epochs: self.epochs_novel,
                batch_points: self.batch_points,
                l2: self.l2,
                seed: self.seed,
            },
            bald: BaldConfig {
                passes: self.bald_passes,
                k: if self.bald_k == 0 { self.k } else { self.bald_k },
                subsample: self.bald_subsample,
                sigma: match self.sigma {
                    None => SigmaMode::MedianNeighbor,
                    Some(v) => SigmaMode::Fixed(v),
                },
                seed: self.seed,
            },
            threshold: match (self.tau0, self.tau_min, self.tau_max) {
                (Some(tau0), Some(tau_min), Some(tau_max)) => Some(ThresholdConfig {
                    tau0,
                    gamma: self.gamma,
                    tau_min,
                    tau_max,
                }),
                // any auto component falls back to entropy scaling per step
                _ => None,
            },
            propagate_k: if self.propagate_k == 0 { self.k } else { self.propagate_k },
            seed: self.seed,
        }
    }

    /// Generate or load the train and eval clouds.
    pub fn load_data(&self) -> Result<(Vec<PreparedCloud>, Vec<PreparedCloud>)> {
        match &self.scene {
            SceneSource::Clouds { train, eval } => {
                let t = load_cloud(train, CloudFormat::XyzRgbL)?;
                let e = load_cloud(eval, CloudFormat::XyzRgbL)?;
                Ok((
                    vec![PreparedCloud::build(t, self.k)?],
                    vec![PreparedCloud::build(e, self.k)?],
                ))
            }
            source => {
                let spec = match source {
                    SceneSource::Builtin => benchmark_scene_spec(self.seed),
                    SceneSource::BuiltinMultistep => benchmark_multistep_spec(self.seed),
                    SceneSource::File(path) => parse_scene_file(path)?,
                    SceneSource::Clouds { .. } => unreachable!(),
                };
                let train = generate_scene(&spec)?;
                let mut eval_spec = spec.clone();
                eval_spec.seed = Rng::from_tags(spec.seed, &[0xE7A1]).next_u64();
                let eval = generate_scene(&eval_spec)?;
                Ok((
                    vec![PreparedCloud::build(train, self.k)?],
                    vec![PreparedCloud::build(eval, self.k)?],
                ))
            }
        }
    }

    /// Split plan for a scene with `n_classes` classes.
    pub fn plan(&self, n_classes: usize) -> Result<SplitPlan> {
        crate::cil::make_split(n_classes, self.order, self.n_base, self.step_sizes.clone())
    }
}

/// Parse a scene-spec file (`key: value` lines with indexed per-class keys).
pub fn parse_scene_file(path: impl AsRef<Path>) -> Result<SceneSpec> {
    parse_scene_str(&std::fs::read_to_string(path)?)
}

pub fn parse_scene_str(text: &str) -> Result<SceneSpec> {
    let mut n_classes: Option<usize> = None;
    let mut seed = 0u64;
    let mut points: Option<Vec<usize>> = None;
    let mut stddev: Option<Vec<f64>> = None;
    let mut centers: Vec<(usize, [f64; 3])> = Vec::new();
    let mut colors: Vec<(usize, [f64; 3])> = Vec::new();
    let mut overlaps: Vec<(usize, usize, f64)> = Vec::new();
    let parse_vec3 = |key: &str, v: &str| -> Result<[f64; 3]> {
        let parts: Vec<f64> = v
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::OutOfRange(key.into()))?;
        if parts.len() != 3 {
            return Err(Error::OutOfRange(key.into()));
        }
        Ok([parts[0], parts[1], parts[2]])
    };
    for raw_line in text.lines() {
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        for pair in split_pairs(line) {
            let (key, value) = pair
                .split_once(':')
                .map(|(k, v)| (k.trim(), v.trim()))
                .ok_or_else(|| Error::Parse(format!("expected `key: value`, got `{pair}`")))?;
            if value.is_empty() {
                return Err(Error::Missing(key.into()));
            }
            if let Some(idx) = key.strip_prefix("center_") {
                let i = parse_usize(key, idx)?;
                centers.push((i, parse_vec3(key, value)?));
            } else if let Some(idx) = key.strip_prefix("color_") {
                let i = parse_usize(key, idx)?;
                colors.push((i, parse_vec3(key, value)?));
            } else if let Some(idx) = key.strip_prefix("overlap_") {
                let _ = parse_usize(key, idx)?;
                let parts: Vec<&str> = value.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(Error::OutOfRange(key.into()));
                }
                overlaps.push((
                    parse_usize(key, parts[0])?,
                    parse_usize(key, parts[1])?,
                    parse_f64(key, parts[2])?,
                ));
            } else {
                match key {
                    "n_classes" => n_classes = Some(parse_usize(key, value)?),
                    "seed" => seed = parse_u64(key, value)?,
                    "points_per_class" => points = Some(parse_usize_list(key, value)?),
                    "stddev" => {
                        let vals: Vec<f64> = value
                            .split_whitespace()
                            .map(|t| t.parse::<f64>())
                            .collect::<std::result::Result<_, _>>()
                            .map_err(|_| Error::OutOfRange(key.into()))?;
                        stddev = Some(vals);
                    }
                    other => return Err(Error::UnknownKey(other.into())),
                }
            }
        }
    }
    let n = n_classes.ok_or_else(|| Error::Missing("n_classes".into()))?;
    let points = points.ok_or_else(|| Error::Missing("points_per_class".into()))?;
    let mut stddev = stddev.ok_or_else(|| Error::Missing("stddev".into()))?;
    if stddev.len() == 1 {
        stddev = vec![stddev[0]; n];
    }
    let mut center_vec = vec![[0.0f64; 3]; n];
    let mut seen_center = vec![false; n];
    for (i, c) in centers {
        if i >= n {
            return Err(Error::OutOfRange(format!("center_{i}")));
        }
        center_vec[i] = c;
        seen_center[i] = true;
    }
    if let Some(missing) = seen_center.iter().position(|&s| !s) {
        return Err(Error::Missing(format!("center_{missing}")));
    }
    let mut color_vec = vec![[0.5f64; 3]; n];
    for (i, c) in colors {
        if i >= n {
            return Err(Error::OutOfRange(format!("color_{i}")));
        }
        color_vec[i] = c;
    }
    let spec = SceneSpec {
        n_classes: n,
        points_per_class: points,
        cluster_centers: center_vec,
        cluster_stddev: stddev,
        overlap_shift: overlaps,
        color_means: color_vec,
        seed,
    };
    spec.validate()?;
    Ok(spec)
}

/// Scene spec in the same key-value format `parse_scene_str` reads.
pub fn scene_to_text(spec: &SceneSpec) -> String {
    let mut s = String::new();
    s.push_str(&format!("n_classes: {}\n", spec.n_classes));
    s.push_str(&format!("seed: {}\n", spec.seed));
    let pts: Vec<String> = spec.points_per_class.iter().map(|v| v.to_string()).collect();
    s.push_str(&format!("points_per_class: {}\n", pts.join(" ")));
    let sd: Vec<String> = spec.cluster_stddev.iter().map(|v| v.to_string()).collect();
    s.push_str(&format!("stddev: {}\n", sd.join(" ")));
    for (i, c) in spec.cluster_centers.iter().enumerate() {
        s.push_str(&format!("center_{i}: {} {} {}\n", c[0], c[1], c[2]));
    }
    for (i, c) in spec.color_means.iter().enumerate() {
        s.push_str(&format!("color_{i}: {} {} {}\n", c[0], c[1], c[2]));
    }
    for (i, &(a, b, d)) in spec.overlap_shift.iter().enumerate() {
        s.push_str(&format!("overlap_{i}: {a} {b} {d}\n"));
    }
    s
}
