//! Flat `key = value` run configuration.
//!
//! Resolution order, later wins: built-in defaults, dataset preset, config
//! file, command-line overrides. Unknown keys are rejected at every level.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use sha2::{Digest, Sha256};

use diffgad::autoencoder::AeConfig;
use diffgad::detector::DetectConfig;
use diffgad::diffusion::{DmConfig, Kernel, SampleMode, SamplerConfig};
use diffgad::rng::derive_seed;

/// One configuration key with its default and meaning.
#[derive(Debug, Clone, Copy)]
pub struct KeySpec {
    pub key: &'static str,
    pub default: &'static str,
    pub doc: &'static str,
}

pub const KEYS: &[KeySpec] = &[
    KeySpec { key: "seed", default: "0", doc: "run seed; every model and trial seed derives from it" },
    KeySpec { key: "data.standardize", default: "true", doc: "z-score node features on load" },
    KeySpec { key: "ae.latent_dim", default: "8", doc: "latent width k" },
    KeySpec { key: "ae.hidden_dim", default: "auto", doc: "GCN hidden width; auto = 2k" },
    KeySpec { key: "ae.dropout", default: "0.1", doc: "dropout after hidden GCN layers" },
    KeySpec { key: "ae.lr", default: "0.01", doc: "Adam learning rate" },
    KeySpec { key: "ae.epochs", default: "300", doc: "full-batch epochs, no early stop" },
    KeySpec { key: "ae.alpha", default: "0.5", doc: "feature weight; 1 disables the structure decoder" },
    KeySpec { key: "ae.squared_norm", default: "false", doc: "square the Frobenius norms in the loss" },
    KeySpec { key: "dm.hidden", default: "16", doc: "denoiser hidden width" },
    KeySpec { key: "dm.depth", default: "4", doc: "denoiser affine layers" },
    KeySpec { key: "dm.epochs", default: "800", doc: "maximum full-batch epochs" },
    KeySpec { key: "dm.lr", default: "0.005", doc: "Adam learning rate" },
    KeySpec { key: "dm.patience", default: "50", doc: "early-stop patience in epochs; 0 disables" },
    KeySpec { key: "dm.min_delta", default: "0.0001", doc: "improvement that resets patience" },
    KeySpec { key: "dm.t_steps", default: "500", doc: "number of noise scales T" },
    KeySpec { key: "dm.kernel", default: "interp", doc: "interp | edm_additive" },
    KeySpec { key: "dm.sigma_max", default: "80", doc: "sigma at T for edm_additive, standardised units" },
    KeySpec { key: "dm.tau", default: "1", doc: "common-feature softmax temperature" },
    KeySpec { key: "detect.lambda", default: "2", doc: "guidance strength" },
    KeySpec { key: "detect.t_detect", default: "auto", doc: "corruption step; auto = T/5" },
    KeySpec { key: "detect.sample_steps", default: "50", doc: "reverse sampler steps" },
    KeySpec { key: "detect.mode", default: "ode", doc: "ode | sde" },
    KeySpec { key: "detect.rho", default: "7", doc: "sigma grid exponent" },
    KeySpec { key: "detect.trials", default: "20", doc: "noise trials averaged per score" },
    KeySpec { key: "detect.component", default: "diffgad", doc: "ae | diff | cond-diff | diffgad" },
];

/// Per-dataset values (AE dropout, lr, alpha, latent width; DM width, λ).
pub const PRESETS: &[(&str, [(&str, &str); 6])] = &[
    ("weibo", [("ae.dropout", "0.3"), ("ae.lr", "0.01"), ("ae.alpha", "0.8"), ("ae.latent_dim", "128"), ("dm.hidden", "256"), ("detect.lambda", "1.0")]),
    ("reddit", [("ae.dropout", "0.3"), ("ae.lr", "0.05"), ("ae.alpha", "0.8"), ("ae.latent_dim", "32"), ("dm.hidden", "64"), ("detect.lambda", "0.8")]),
    ("disney", [("ae.dropout", "0.3"), ("ae.lr", "0.01"), ("ae.alpha", "1.0"), ("ae.latent_dim", "8"), ("dm.hidden", "16"), ("detect.lambda", "2.0")]),
    ("books", [("ae.dropout", "0.1"), ("ae.lr", "0.1"), ("ae.alpha", "0.5"), ("ae.latent_dim", "8"), ("dm.hidden", "16"), ("detect.lambda", "2.0")]),
    ("enron", [("ae.dropout", "0.1"), ("ae.lr", "0.01"), ("ae.alpha", "0.0"), ("ae.latent_dim", "8"), ("dm.hidden", "16"), ("detect.lambda", "2.0")]),
    ("dgraph", [("ae.dropout", "0.3"), ("ae.lr", "0.1"), ("ae.alpha", "1.0"), ("ae.latent_dim", "8"), ("dm.hidden", "16"), ("detect.lambda", "1.0")]),
];

/// Where a value came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Source {
    Default,
    Preset(String),
    File(PathBuf),
    Cli,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Source::Default => f.write_str("default"),
            Source::Preset(p) => write!(f, "preset:{p}"),
            Source::File(p) => write!(f, "file:{}", p.display()),
            Source::Cli => f.write_str("cli"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, (String, Source)>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            values: KEYS
                .iter()
                .map(|k| (k.key.to_string(), (k.default.to_string(), Source::Default)))
                .collect(),
        }
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_pairs(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("line {}: expected `key = value`, got `{raw}`", i + 1))?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl RunConfig {
    /// Defaults, then `preset`, then the file, then `overrides`. A `preset`
    /// line in the file is used when no preset is passed explicitly.
    pub fn resolve(preset: Option<&str>, file: Option<&Path>, overrides: &[(String, String)]) -> Result<Self> {
        let mut cfg = RunConfig::default();
        let mut file_pairs = Vec::new();
        let mut file_preset = None;
        if let Some(path) = file {
            let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
            for (k, v) in parse_pairs(&text).with_context(|| format!("parsing {}", path.display()))? {
                if k == "preset" {
                    file_preset = Some(v);
                } else {
                    file_pairs.push((k, v));
                }
            }
        }
        if let Some(name) = preset.map(str::to_string).or(file_preset) {
            cfg.apply_preset(&name)?;
        }
        if let Some(path) = file {
            for (k, v) in file_pairs {
                cfg.set(&k, &v, Source::File(path.to_path_buf()))?;
            }
        }
        for (k, v) in overrides {
            cfg.set(k, v, Source::Cli)?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply_preset(&mut self, name: &str) -> Result<()> {
        let lower = name.to_ascii_lowercase();
        let (_, pairs) = PRESETS
            .iter()
            .find(|(n, _)| *n == lower)
            .ok_or_else(|| anyhow!("unknown preset `{name}` (known: {})", PRESETS.iter().map(|p| p.0).collect::<Vec<_>>().join(", ")))?;
        for (k, v) in pairs {
            self.set(k, v, Source::Preset(lower.clone()))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str, source: Source) -> Result<()> {
        let slot = self
            .values
            .get_mut(key)
            .ok_or_else(|| anyhow!("unknown config key `{key}`"))?;
        *slot = (value.to_string(), source);
        Ok(())
    }

    pub fn raw(&self, key: &str) -> Result<&str> {
        self.values
            .get(key)
            .map(|(v, _)| v.as_str())
            .ok_or_else(|| anyhow!("unknown config key `{key}`"))
    }

    pub fn source(&self, key: &str) -> Option<&Source> {
        self.values.get(key).map(|(_, s)| s)
    }

    pub fn get<T: std::str::FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        let raw = self.raw(key)?;
        raw.parse::<T>().map_err(|e| anyhow!("config key `{key}`: bad value `{raw}`: {e}"))
    }

    fn get_auto<T: std::str::FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: fmt::Display,
    {
        if self.raw(key)? == "auto" {
            Ok(None)
        } else {
            self.get(key).map(Some)
        }
    }

    pub fn seed(&self) -> Result<u64> {
        self.get("seed")
    }

    pub fn ae_config(&self) -> Result<AeConfig> {
        Ok(AeConfig {
            latent_dim: self.get("ae.latent_dim")?,
            hidden_dim: self.get_auto("ae.hidden_dim")?,
            dropout: self.get("ae.dropout")?,
            lr: self.get("ae.lr")?,
            epochs: self.get("ae.epochs")?,
            alpha: self.get("ae.alpha")?,
            squared_norm: self.get("ae.squared_norm")?,
            seed: derive_seed(self.seed()?, 1),
        })
    }

    /// Unconditional and conditioned models get different seeds.
    pub fn dm_config(&self, conditioned: bool) -> Result<DmConfig> {
        let kernel: Kernel = self.raw("dm.kernel")?.parse()?;
        Ok(DmConfig {
            hidden: self.get("dm.hidden")?,
            depth: self.get("dm.depth")?,
            epochs: self.get("dm.epochs")?,
            lr: self.get("dm.lr")?,
            patience: self.get("dm.patience")?,
            min_delta: self.get("dm.min_delta")?,
            t_steps: self.get("dm.t_steps")?,
            kernel,
            sigma_max: self.get("dm.sigma_max")?,
            seed: derive_seed(self.seed()?, if conditioned { 3 } else { 2 }),
        })
    }

    pub fn tau(&self) -> Result<f64> {
        self.get("dm.tau")
    }

    pub fn detect_config(&self) -> Result<DetectConfig> {
        let mode: SampleMode = self.raw("detect.mode")?.parse()?;
        Ok(DetectConfig {
            lambda: self.get("detect.lambda")?,
            t_detect: self.get_auto("detect.t_detect")?,
            sampler: SamplerConfig {
                steps: self.get("detect.sample_steps")?,
                mode,
                rho: self.get("detect.rho")?,
            },
            seed: derive_seed(self.seed()?, 4),
            trials: self.get("detect.trials")?,
        })
    }

    pub fn component(&self) -> Result<diffgad::detector::Component> {
        Ok(self.raw("detect.component")?.parse()?)
    }

    pub fn standardize(&self) -> Result<bool> {
        self.get("data.standardize")
    }

    /// Parses every typed view so bad values fail before any work starts.
    pub fn validate(&self) -> Result<()> {
        self.ae_config()?.validate()?;
        let dm = self.dm_config(false)?;
        dm.validate()?;
        let det = self.detect_config()?;
        if let Some(t) = det.t_detect {
            if t > dm.t_steps {
                bail!("detect.t_detect {t} exceeds dm.t_steps {}", dm.t_steps);
            }
        }
        if det.trials == 0 || det.sampler.steps == 0 {
            bail!("detect.trials and detect.sample_steps must be >= 1");
        }
        if !(self.tau()? > 0.0) {
            bail!("dm.tau must be positive");
        }
        self.component()?;
        Ok(())
    }

    /// Canonical `key = value` text, one line per key in sorted order.
    pub fn to_text(&self) -> String {
        self.values
            .iter()
            .map(|(k, (v, _))| format!("{k} = {v}\n"))
            .collect()
    }

    /// Like [`RunConfig::to_text`] with the source of each value appended.
    pub fn to_annotated_text(&self) -> String {
        self.values
            .iter()
            .map(|(k, (v, s))| format!("{k} = {v}  # {s}\n"))
            .collect()
    }

    pub fn hash(&self) -> String {
        hex(&Sha256::digest(self.to_text().as_bytes()))
    }

    /// Hash over the keys that affect trained checkpoints; `detect.*` values
    /// are excluded so detection settings can change on resume.
    pub fn training_hash(&self) -> String {
        let text: String = self
            .values
            .iter()
            .filter(|(k, _)| !k.starts_with("detect."))
            .map(|(k, (v, _))| format!("{k} = {v}\n"))
            .collect();
        hex(&Sha256::digest(text.as_bytes()))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
