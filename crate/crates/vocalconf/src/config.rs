//! `key = value` run configuration.
//!
//! One setting per line, `#` starts a comment, blank lines are ignored.
//! Every key has a default; unknown keys and repeated keys are errors.
//! Lists are comma-separated. [`RunConfig::to_text`] writes every key, and
//! parsing that text gives back the same config.

use std::collections::BTreeSet;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use vocalconf_core::audio::DenoiseConfig;
use vocalconf_core::evaluation::{Arm, CvConfig};
use vocalconf_core::features::FrameConfig;
use vocalconf_core::hybrid::FusionMode;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub manifest: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub seed: u64,
    pub k: usize,
    pub arms: Vec<Arm>,
    pub cv: CvConfig,
    pub denoise_enabled: bool,
    pub denoise: DenoiseConfig,
    pub frame: FrameConfig,
    pub ds_max_iters: usize,
    pub ds_tol: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            manifest: None,
            out_dir: None,
            seed: 0,
            k: 5,
            arms: vec![Arm::GtOnly, Arm::NoFilter, Arm::Proposed],
            cv: CvConfig::default(),
            denoise_enabled: true,
            denoise: DenoiseConfig::default(),
            frame: FrameConfig::default(),
            ds_max_iters: 100,
            ds_tol: 1e-6,
        }
    }
}

fn list<T: Display>(xs: &[T]) -> String {
    xs.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn mode_str(m: FusionMode) -> &'static str {
    match m {
        FusionMode::Both => "both",
        FusionMode::EmbeddingOnly => "embedding_only",
        FusionMode::FeatureOnly => "feature_only",
    }
}

fn parse<T: FromStr>(v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("cannot parse `{v}`"))
}

fn parse_list<T: FromStr>(v: &str) -> std::result::Result<Vec<T>, String> {
    v.split(',').map(|s| parse(s.trim())).collect()
}

fn parse_array<T: FromStr + Copy + Default, const N: usize>(v: &str) -> std::result::Result<[T; N], String> {
    let xs: Vec<T> = parse_list(v)?;
    xs.try_into().map_err(|xs: Vec<T>| format!("expected {N} values, got {}", xs.len()))
}

impl RunConfig {
    /// Every key with its current value, in file order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let (l, h, p) = (&self.cv.labeller, &self.cv.hybrid, &self.cv.pseudo);
        let path = |p: &Option<PathBuf>| p.as_ref().map_or(String::new(), |p| p.display().to_string());
        vec![
            ("manifest", path(&self.manifest)),
            ("out_dir", path(&self.out_dir)),
            ("seed", self.seed.to_string()),
            ("k", self.k.to_string()),
            ("arms", list(&self.arms)),
            ("tau", format!("{:?}", p.tau)),
            ("calibrate", p.calibrate_before_filter.to_string()),
            ("labeller.hidden_dims", list(&l.hidden_dims)),
            ("labeller.dropout", format!("{:?}", l.dropout)),
            ("labeller.lr", format!("{:?}", l.lr)),
            ("labeller.internal_folds", l.internal_folds.to_string()),
            ("labeller.patience", l.patience.to_string()),
            ("labeller.max_epochs", l.max_epochs.to_string()),
            ("labeller.batch_size", l.batch_size.to_string()),
            ("labeller.val_fraction", format!("{:?}", l.val_fraction)),
            ("hybrid.lambda_fv", format!("{:?}", h.lambda_fv)),
            ("hybrid.gt_boost", format!("{:?}", h.gt_boost)),
            ("hybrid.class_weights", h.class_weights.iter().map(|w| format!("{w:?}")).collect::<Vec<_>>().join(",")),
            ("hybrid.lr_embedding_stream", format!("{:?}", h.lr_embedding_stream)),
            ("hybrid.lr_feature_stream", format!("{:?}", h.lr_feature_stream)),
            ("hybrid.weight_decay", format!("{:?}", h.weight_decay)),
            ("hybrid.dropout", format!("{:?}", h.dropout)),
            ("hybrid.feature_hidden", list(&h.feature_hidden)),
            ("hybrid.epochs", h.epochs.to_string()),
            ("hybrid.batch_size", h.batch_size.to_string()),
            ("hybrid.val_fraction", format!("{:?}", h.val_fraction)),
            ("hybrid.patience", h.patience.map_or("none".into(), |p| p.to_string())),
            ("hybrid.mode", mode_str(h.mode).into()),
            ("denoise.enabled", self.denoise_enabled.to_string()),
            ("denoise.noise_floor_percentile", format!("{:?}", self.denoise.noise_floor_percentile)),
            ("denoise.gate_threshold_db", format!("{:?}", self.denoise.gate_threshold_db)),
            ("denoise.fft_size", self.denoise.fft_size.to_string()),
            ("denoise.smoothing_bands", self.denoise.smoothing_bands.to_string()),
            ("frame.frame_len_ms", format!("{:?}", self.frame.frame_len_ms)),
            ("frame.hop_ms", format!("{:?}", self.frame.hop_ms)),
            ("frame.f0_min", format!("{:?}", self.frame.f0_min)),
            ("frame.f0_max", format!("{:?}", self.frame.f0_max)),
            ("frame.mel_bands", self.frame.mel_bands.to_string()),
            ("frame.mfcc_count", self.frame.mfcc_count.to_string()),
            ("ds.max_iters", self.ds_max_iters.to_string()),
            ("ds.tol", format!("{:?}", self.ds_tol)),
        ]
    }

    fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        let (l, h, p) = (&mut self.cv.labeller, &mut self.cv.hybrid, &mut self.cv.pseudo);
        let path = |v: &str| if v.is_empty() { None } else { Some(PathBuf::from(v)) };
        match key {
            "manifest" => self.manifest = path(v),
            "out_dir" => self.out_dir = path(v),
            "seed" => self.seed = parse(v)?,
            "k" => self.k = parse(v)?,
            "arms" => self.arms = v.split(',').map(|s| s.trim().parse()).collect::<std::result::Result<_, _>>()?,
            "tau" => p.tau = parse(v)?,
            "calibrate" => p.calibrate_before_filter = parse(v)?,
            "labeller.hidden_dims" => l.hidden_dims = parse_list(v)?,
            "labeller.dropout" => l.dropout = parse(v)?,
            "labeller.lr" => l.lr = parse(v)?,
            "labeller.internal_folds" => l.internal_folds = parse(v)?,
            "labeller.patience" => l.patience = parse(v)?,
            "labeller.max_epochs" => l.max_epochs = parse(v)?,
            "labeller.batch_size" => l.batch_size = parse(v)?,
            "labeller.val_fraction" => l.val_fraction = parse(v)?,
            "hybrid.lambda_fv" => h.lambda_fv = parse(v)?,
            "hybrid.gt_boost" => h.gt_boost = parse(v)?,
            "hybrid.class_weights" => h.class_weights = parse_array(v)?,
            "hybrid.lr_embedding_stream" => h.lr_embedding_stream = parse(v)?,
            "hybrid.lr_feature_stream" => h.lr_feature_stream = parse(v)?,
            "hybrid.weight_decay" => h.weight_decay = parse(v)?,
            "hybrid.dropout" => h.dropout = parse(v)?,
            "hybrid.feature_hidden" => h.feature_hidden = parse_array(v)?,
            "hybrid.epochs" => h.epochs = parse(v)?,
            "hybrid.batch_size" => h.batch_size = parse(v)?,
            "hybrid.val_fraction" => h.val_fraction = parse(v)?,
            "hybrid.patience" => h.patience = if v == "none" { None } else { Some(parse(v)?) },
            "hybrid.mode" => {
                h.mode = [FusionMode::Both, FusionMode::EmbeddingOnly, FusionMode::FeatureOnly]
                    .into_iter()
                    .find(|m| mode_str(*m) == v)
                    .ok_or_else(|| format!("unknown mode `{v}` (both|embedding_only|feature_only)"))?
            }
            "denoise.enabled" => self.denoise_enabled = parse(v)?,
            "denoise.noise_floor_percentile" => self.denoise.noise_floor_percentile = parse(v)?,
            "denoise.gate_threshold_db" => self.denoise.gate_threshold_db = parse(v)?,
            "denoise.fft_size" => self.denoise.fft_size = parse(v)?,
            "denoise.smoothing_bands" => self.denoise.smoothing_bands = parse(v)?,
            "frame.frame_len_ms" => self.frame.frame_len_ms = parse(v)?,
            "frame.hop_ms" => self.frame.hop_ms = parse(v)?,
            "frame.f0_min" => self.frame.f0_min = parse(v)?,
            "frame.f0_max" => self.frame.f0_max = parse(v)?,
            "frame.mel_bands" => self.frame.mel_bands = parse(v)?,
            "frame.mfcc_count" => self.frame.mfcc_count = parse(v)?,
            "ds.max_iters" => self.ds_max_iters = parse(v)?,
            "ds.tol" => self.ds_tol = parse(v)?,
            _ => return Err(format!("unknown key `{key}`")),
        }
        Ok(())
    }

    /// The single `seed` drives the fold plan, labeller and hybrid seeds.
    pub fn set_seed(&mut self, seed: u64) {
        self.seed = seed;
        self.cv.labeller.seed = seed;
        self.cv.hybrid.seed = seed;
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeSet::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Config { line: i + 1, message };
            let (key, value) = line.split_once('=').ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(err(format!("key `{key}` set twice")));
            }
            cfg.set(key, value).map_err(|m| err(format!("{key}: {m}")))?;
        }
        cfg.set_seed(cfg.seed);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        // Relative paths inside the file are relative to the file.
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.manifest, &mut cfg.out_dir].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let err = |m: &str| Error::Config { line: 0, message: m.into() };
        if self.k < 2 {
            return Err(err("k must be at least 2"));
        }
        if self.arms.is_empty() {
            return Err(err("arms must not be empty"));
        }
        if !(0.0..=1.0).contains(&self.cv.pseudo.tau) {
            return Err(err("tau must lie in [0, 1]"));
        }
        let l = &self.cv.labeller;
        if l.hidden_dims.is_empty() || l.hidden_dims.contains(&0) {
            return Err(err("labeller.hidden_dims must be non-empty and positive"));
        }
        if !(0.0..1.0).contains(&l.dropout) || !(0.0..1.0).contains(&self.cv.hybrid.dropout) {
            return Err(err("dropout must lie in [0, 1)"));
        }
        if !(l.lr > 0.0) || !(self.cv.hybrid.lr_embedding_stream > 0.0) || !(self.cv.hybrid.lr_feature_stream > 0.0) {
            return Err(err("learning rates must be positive"));
        }
        if l.batch_size < 2 || !(0.0..1.0).contains(&l.val_fraction) || l.internal_folds == 1 {
            return Err(err("labeller needs batch_size >= 2, val_fraction in [0, 1) and internal_folds of 0 or >= 2"));
        }
        if self.cv.hybrid.feature_hidden.contains(&0) {
            return Err(err("hybrid.feature_hidden must be positive"));
        }
        self.cv.hybrid.validate().map_err(|e| err(&e.to_string()))?;
        self.denoise.validate().map_err(|e| err(&e.to_string()))?;
        self.frame.validate(vocalconf_core::audio::CANONICAL_RATE).map_err(|e| err(&e.to_string()))?;
        if self.ds_max_iters == 0 || !(self.ds_tol > 0.0) {
            return Err(err("ds.max_iters and ds.tol must be positive"));
        }
        Ok(())
    }

    /// Every key, one per line, suitable for [`RunConfig::parse`].
    pub fn to_text(&self) -> String {
        self.entries().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
