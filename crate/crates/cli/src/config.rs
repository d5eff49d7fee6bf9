//! Flat `key = value` run configuration with command-line overrides.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use cacti_core::vb::TauUpdateMode;
use cacti_core::video::BayerLayout;

/// Mono gray pipeline or Bayer color pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ColorMode {
    #[default]
    Mono,
    Bayer,
}

impl ColorMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mono" => Ok(ColorMode::Mono),
            "bayer" => Ok(ColorMode::Bayer),
            other => bail!("color mode must be `mono` or `bayer`, got `{other}`"),
        }
    }
}

/// Everything a pipeline command needs, resolved from defaults, the optional
/// config file, and command-line flags (highest precedence).
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub video: Option<PathBuf>,
    pub mask: Option<PathBuf>,
    pub schedule: Option<PathBuf>,
    pub out: PathBuf,
    pub nt: usize,
    pub basis_x: String,
    pub basis_y: String,
    pub basis_t: String,
    pub levels: usize,
    pub mask_density: f64,
    pub noise_sigma: f64,
    pub seed: u64,
    pub color: ColorMode,
    pub bayer_layout: BayerLayout,
    pub wrap: bool,
    pub tau_update: TauUpdateMode,
    pub max_sweeps: usize,
    pub tolerance: f64,
    pub peak: f64,
    pub trace: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            video: None,
            mask: None,
            schedule: None,
            out: PathBuf::from("out"),
            nt: 8,
            basis_x: "db8".into(),
            basis_y: "db8".into(),
            basis_t: "dct".into(),
            levels: 3,
            mask_density: 0.5,
            noise_sigma: 0.0,
            seed: 0,
            color: ColorMode::Mono,
            bayer_layout: BayerLayout::Rggb,
            wrap: false,
            tau_update: TauUpdateMode::Verbatim,
            max_sweeps: 200,
            tolerance: 1e-4,
            peak: 1.0,
            trace: false,
        }
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => bail!("config key `{key}`: expected a boolean, got `{v}`"),
    }
}

fn parse_tau(v: &str) -> Result<TauUpdateMode> {
    match v.to_ascii_lowercase().as_str() {
        "verbatim" => Ok(TauUpdateMode::Verbatim),
        "mgp" => Ok(TauUpdateMode::Mgp),
        other => bail!("tau update must be `verbatim` or `mgp`, got `{other}`"),
    }
}

fn check_basis(key: &str, v: &str) -> Result<String> {
    match v {
        "db8" | "dct" => Ok(v.to_string()),
        other => bail!("config key `{key}`: basis must be `db8` or `dct`, got `{other}`"),
    }
}

impl RunConfig {
    /// Read a flat `key = value` file; `#` starts a comment. Unknown keys and
    /// malformed values are errors naming the key.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .with_context(|| format!("cannot read config {}", path.display()))?;
        let mut kv = HashMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                bail!("config line {}: expected `key = value`, got `{raw}`", lineno + 1);
            };
            kv.insert(k.trim().to_string(), v.trim().to_string());
        }
        let mut cfg = RunConfig::default();
        cfg.apply_map(&kv)?;
        Ok(cfg)
    }

    fn apply_map(&mut self, kv: &HashMap<String, String>) -> Result<()> {
        for (k, v) in kv {
            let num = |what: &str| -> Result<f64> {
                v.parse::<f64>()
                    .with_context(|| format!("config key `{k}`: expected {what}, got `{v}`"))
            };
            match k.as_str() {
                "video" => self.video = Some(PathBuf::from(v)),
                "mask" => self.mask = Some(PathBuf::from(v)),
                "schedule" => self.schedule = Some(PathBuf::from(v)),
                "out" => self.out = PathBuf::from(v),
                "nt" => self.nt = num("an integer")? as usize,
                "basis_x" => self.basis_x = check_basis(k, v)?,
                "basis_y" => self.basis_y = check_basis(k, v)?,
                "basis_t" => self.basis_t = check_basis(k, v)?,
                "levels" => self.levels = num("an integer")? as usize,
                "mask_density" => self.mask_density = num("a real")?,
                "noise_sigma" => self.noise_sigma = num("a real")?,
                "seed" => self.seed = num("an integer")? as u64,
                "color" => self.color = ColorMode::parse(v)?,
                "bayer_layout" => {
                    self.bayer_layout = BayerLayout::parse(v)
                        .map_err(|e| anyhow::anyhow!("config key `{k}`: {e}"))?
                }
                "wrap" => self.wrap = parse_bool(k, v)?,
                "tau_update" => self.tau_update = parse_tau(v)?,
                "max_sweeps" => self.max_sweeps = num("an integer")? as usize,
                "tolerance" => self.tolerance = num("a real")?,
                "peak" => self.peak = num("a real")?,
                "trace" => self.trace = parse_bool(k, v)?,
                other => bail!("unknown config key `{other}`"),
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.nt == 0 {
            bail!("nt must be positive");
        }
        if !(self.mask_density > 0.0 && self.mask_density < 1.0) {
            bail!("mask_density must lie in (0, 1)");
        }
        if self.noise_sigma < 0.0 {
            bail!("noise_sigma must be nonnegative");
        }
        if self.peak <= 0.0 {
            bail!("peak must be positive");
        }
        let spatial_wavelet = self.basis_x == "db8" && self.basis_y == "db8";
        let spatial_dct = self.basis_x == "dct" && self.basis_y == "dct";
        match (spatial_wavelet, spatial_dct, self.basis_t.as_str()) {
            (true, _, "db8") | (true, _, "dct") | (_, true, "dct") => Ok(()),
            _ => bail!(
                "unsupported basis combination ({}, {}, {}); use db8/db8 in space \
                 with db8 or dct in time, or dct on all axes",
                self.basis_x,
                self.basis_y,
                self.basis_t
            ),
        }
    }
}
