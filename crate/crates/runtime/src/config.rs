use std::path::PathBuf;

use crate::flow::DEFAULT_MAX_TOKENS;

pub const DEFAULT_BIND_ADDR: &str = "127.0.0.1:8765";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DetectorBinding {
    /// Detections arrive precomputed; raw frames are refused.
    None,
    /// Template baseline model file run in-process.
    Template(PathBuf),
    /// Command line of a JSON-lines detector plugin.
    Plugin(String),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServiceConfig {
    pub bind_addr: String,
    pub package_dir: Option<PathBuf>,
    pub max_tokens: u32,
    pub detector: DetectorBinding,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind_addr: DEFAULT_BIND_ADDR.to_string(),
            package_dir: None,
            max_tokens: DEFAULT_MAX_TOKENS,
            detector: DetectorBinding::None,
        }
    }
}

impl ServiceConfig {
    /// Reads BIND_ADDR, PACKAGE_DIR, MAX_TOKENS and DETECTOR_PLUGIN through `var`.
    pub fn from_vars(var: impl Fn(&str) -> Option<String>) -> Result<Self, String> {
        let mut c = Self::default();
        if let Some(v) = var("BIND_ADDR") {
            c.bind_addr = v;
        }
        if let Some(v) = var("PACKAGE_DIR") {
            c.package_dir = Some(PathBuf::from(v));
        }
        if let Some(v) = var("MAX_TOKENS") {
            c.max_tokens = v.parse().map_err(|_| format!("MAX_TOKENS={v:?} is not a positive integer"))?;
        }
        if let Some(v) = var("DETECTOR_PLUGIN") {
            c.detector = DetectorBinding::Plugin(v);
        }
        if c.max_tokens == 0 {
            return Err("MAX_TOKENS must be at least 1".into());
        }
        Ok(c)
    }

    pub fn from_env() -> Result<Self, String> {
        Self::from_vars(|k| std::env::var(k).ok().filter(|v| !v.is_empty()))
    }
}
