//! Building spaces from configuration.

use crate::config::{parse_dims, Config, ConfigError};
use anyhow::Result;
use mms_core::io::load_space;
use mms_core::normed::NormSpec;
use mms_core::space::{build_centered_grid, build_grid, build_model_patch, build_sphere, ModelTag, Surface};
use mms_core::FiniteMms;
use std::path::Path;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Model {
    Euclidean,
    Sphere,
    Hyperbolic,
}

impl Model {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        match text {
            "euclidean" | "flat" => Ok(Model::Euclidean),
            "sphere" => Ok(Model::Sphere),
            "hyperbolic" => Ok(Model::Hyperbolic),
            _ => Err(ConfigError::BadValue { key: "space.model".into(), value: text.into(), expected: "euclidean, sphere or hyperbolic" }),
        }
    }

    /// Curvature of the unit model surface.
    pub fn curvature(self) -> f64 {
        match self {
            Model::Euclidean => 0.0,
            Model::Sphere => 1.0,
            Model::Hyperbolic => -1.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Model::Euclidean => "euclidean",
            Model::Sphere => "sphere",
            Model::Hyperbolic => "hyperbolic",
        }
    }
}

/// Patch of geodesic radius `space.radius` around the base point at the origin.
pub fn model_patch(model: Model, radius: f64, spacing: f64) -> Result<FiniteMms> {
    Ok(match model {
        Model::Euclidean => build_centered_grid(2, radius, spacing, None)?.with_model(ModelTag::Euclidean),
        Model::Sphere => build_model_patch(Surface::Sphere, radius, spacing)?,
        Model::Hyperbolic => build_model_patch(Surface::Hyperbolic, radius, spacing)?,
    })
}

/// Lattice from `space.grid`, `space.spacing` and `space.norm`.
pub fn lattice(cfg: &Config, dims: &str, spacing: f64) -> Result<FiniteMms> {
    let dims = parse_dims(cfg.raw("space.grid").unwrap_or(dims))?;
    let spacing = positive(cfg, "space.spacing", spacing)?;
    let norm = match cfg.raw("space.norm") {
        None => None,
        Some(text) => Some(NormSpec::parse(text, dims.len()).map_err(|e| ConfigError::BadValue {
            key: "space.norm".into(),
            value: format!("{text} ({e})"),
            expected: "p:<p>, p:inf or poly:(x,y);…",
        })?),
    };
    Ok(build_grid(&dims, spacing, None, norm)?)
}

/// The space named by `[space]` for `space build` and `check metric`.
pub fn from_config(cfg: &Config) -> Result<FiniteMms> {
    match cfg.raw("space.kind").unwrap_or(if cfg.raw("space.model").is_some() { "model" } else { "grid" }) {
        "grid" => lattice(cfg, "16x16", 1.0 / 15.0),
        "model" => {
            let model = Model::parse(cfg.raw("space.model").unwrap_or("euclidean"))?;
            model_patch(model, positive(cfg, "space.radius", 0.9)?, positive(cfg, "space.spacing", 0.05)?)
        }
        "sphere" => Ok(build_sphere(2, positive(cfg, "space.spacing", 0.1)?)?),
        "file" => {
            let path = cfg.raw("space.path").ok_or_else(|| ConfigError::Invalid("space.kind = file needs space.path".into()))?;
            Ok(load_space(Path::new(path))?)
        }
        other => Err(ConfigError::BadValue { key: "space.kind".into(), value: other.into(), expected: "grid, model, sphere or file" }.into()),
    }
}

pub fn positive(cfg: &Config, key: &str, default: f64) -> Result<f64, ConfigError> {
    let v = cfg.f64_or(key, default)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(ConfigError::BadValue { key: key.into(), value: v.to_string(), expected: "a positive number" })
    }
}
