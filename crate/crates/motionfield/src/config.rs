//! Fit settings: a flat TOML file of optional keys, overlaid by flags.
//!
//! Every key mirrors a [`FitConfig`] field, plus `basis` for the family and
//! `layout` and `mean_init` by name. Unknown keys are errors. When
//! `iterations` is given without `warmup`, `regularizer_delay` or
//! `polish_iterations`, those default to a tenth of `iterations`.

use std::path::Path;

use motionfield_core::fit::{FitConfig, MeanInit};
use motionfield_core::{BasisFamily, CoefficientLayout};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::fsio;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSettings {
    pub basis: Option<String>,
    pub num_basis: Option<usize>,
    pub freqs: Option<usize>,
    pub mlp_width: Option<usize>,
    pub mlp_depth: Option<usize>,
    pub layout: Option<String>,
    pub iterations: Option<usize>,
    pub warmup: Option<usize>,
    pub basis_lr_start: Option<f64>,
    pub basis_lr_end: Option<f64>,
    pub coefficient_lr: Option<f64>,
    pub means_lr_start: Option<f64>,
    pub means_lr_end: Option<f64>,
    pub lambda_l1: Option<f64>,
    pub lambda_sparse: Option<f64>,
    pub lambda_rigid: Option<f64>,
    pub lambda_w: Option<f64>,
    pub knn: Option<usize>,
    pub regularizer_delay: Option<usize>,
    pub proximal_l1: Option<bool>,
    pub normalize_basis: Option<bool>,
    pub coefficient_init_std: Option<f64>,
    pub mean_init: Option<String>,
    pub prune_ratio: Option<f64>,
    pub polish_iterations: Option<usize>,
    pub checkpoint_every: Option<usize>,
    pub seed: Option<u64>,
}

macro_rules! overlay_fields {
    ($base:ident, $top:ident, $($f:ident),*) => {
        FitSettings { $($f: $top.$f.or($base.$f)),* }
    };
}

impl FitSettings {
    pub fn parse_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fsio::read(path)?;
        let text = std::str::from_utf8(&bytes)
            .map_err(|e| Error::Config(format!("{}: not UTF-8 at byte {}", path.display(), e.valid_up_to())))?;
        Self::parse_toml(text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Keys set in `top` win over keys set in `self`.
    pub fn overlay(self, top: FitSettings) -> FitSettings {
        let base = self;
        overlay_fields!(
            base,
            top,
            basis,
            num_basis,
            freqs,
            mlp_width,
            mlp_depth,
            layout,
            iterations,
            warmup,
            basis_lr_start,
            basis_lr_end,
            coefficient_lr,
            means_lr_start,
            means_lr_end,
            lambda_l1,
            lambda_sparse,
            lambda_rigid,
            lambda_w,
            knn,
            regularizer_delay,
            proximal_l1,
            normalize_basis,
            coefficient_init_std,
            mean_init,
            prune_ratio,
            polish_iterations,
            checkpoint_every,
            seed
        )
    }

    /// Built-in defaults with every set key applied, validated.
    pub fn resolve(&self) -> Result<FitConfig> {
        let mut c = match self.iterations {
            Some(n) => FitConfig::with_iterations(n),
            None => FitConfig::default(),
        };
        if let Some(name) = &self.basis {
            c.family = BasisFamily::from_name(name)
                .ok_or_else(|| Error::Config(format!("basis must be 'fourier' or 'mlp', got '{name}'")))?;
        }
        if let Some(name) = &self.layout {
            c.layout =
                Some(CoefficientLayout::from_name(name).ok_or_else(|| {
                    Error::Config(format!("layout must be 'shared' or 'per-coordinate', got '{name}'"))
                })?);
        }
        if let Some(name) = &self.mean_init {
            c.mean_init = MeanInit::from_name(name).ok_or_else(|| {
                Error::Config(format!("mean_init must be 'first-observation' or 'random', got '{name}'"))
            })?;
        }
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = self.$f { c.$f = v; })* };
        }
        set!(
            num_basis,
            freqs,
            mlp_width,
            mlp_depth,
            warmup,
            basis_lr_start,
            basis_lr_end,
            coefficient_lr,
            means_lr_start,
            means_lr_end,
            lambda_l1,
            lambda_sparse,
            lambda_rigid,
            lambda_w,
            knn,
            regularizer_delay,
            proximal_l1,
            normalize_basis,
            coefficient_init_std,
            polish_iterations,
            checkpoint_every,
            seed
        );
        if self.prune_ratio.is_some() {
            c.prune_ratio = self.prune_ratio;
        }
        c.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(c)
    }
}

/// Every setting of `config`, explicitly.
pub fn settings_of(config: &FitConfig) -> FitSettings {
    FitSettings {
        basis: Some(config.family.name().into()),
        num_basis: Some(config.num_basis),
        freqs: Some(config.freqs),
        mlp_width: Some(config.mlp_width),
        mlp_depth: Some(config.mlp_depth),
        layout: Some(config.resolved_layout().name().into()),
        iterations: Some(config.iterations),
        warmup: Some(config.warmup),
        basis_lr_start: Some(config.basis_lr_start),
        basis_lr_end: Some(config.basis_lr_end),
        coefficient_lr: Some(config.coefficient_lr),
        means_lr_start: Some(config.means_lr_start),
        means_lr_end: Some(config.means_lr_end),
        lambda_l1: Some(config.lambda_l1),
        lambda_sparse: Some(config.lambda_sparse),
        lambda_rigid: Some(config.lambda_rigid),
        lambda_w: Some(config.lambda_w),
        knn: Some(config.knn),
        regularizer_delay: Some(config.regularizer_delay),
        proximal_l1: Some(config.proximal_l1),
        normalize_basis: Some(config.normalize_basis),
        coefficient_init_std: Some(config.coefficient_init_std),
        mean_init: Some(config.mean_init.name().into()),
        prune_ratio: config.prune_ratio,
        polish_iterations: Some(config.polish_iterations),
        checkpoint_every: Some(config.checkpoint_every),
        seed: Some(config.seed),
    }
}

/// SHA-256 hex of the fully resolved settings as compact JSON.
pub fn config_hash(config: &FitConfig) -> String {
    let json = serde_json::to_vec(&settings_of(config)).expect("settings serialize");
    Sha256::digest(&json).iter().map(|b| format!("{b:02x}")).collect()
}
