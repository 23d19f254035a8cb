use crate::error::{HarnessError, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use specvit_core::datagen::{CsvSchema, SplitCounts};
use specvit_imaging::MorletConfig;
use specvit_nn::schedule::TrainSchedule;
use specvit_vit::{Variant, VitConfig};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

/// A forecasting method that can appear in a report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Method {
    Vit(Variant),
    Naive,
    Ema,
    Arima,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Vit(Variant::NumSpec),
        Method::Vit(Variant::Lineplot),
        Method::Vit(Variant::Num),
        Method::Naive,
        Method::Ema,
        Method::Arima,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Method::Vit(v) => v.name(),
            Method::Naive => "naive",
            Method::Ema => "ema",
            Method::Arima => "arima",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = HarnessError;
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase();
        let key = key.strip_prefix("vit-").unwrap_or(&key);
        Ok(match key {
            "num-spec" => Method::Vit(Variant::NumSpec),
            "lineplot" => Method::Vit(Variant::Lineplot),
            "num" => Method::Vit(Variant::Num),
            "naive" => Method::Naive,
            "ema" => Method::Ema,
            "arima" => Method::Arima,
            _ => return Err(HarnessError::Config(format!("unknown method `{s}`"))),
        })
    }
}

impl Serialize for Method {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Method {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Source {
    /// Two-harmonic series from the built-in generator.
    Synthetic { series_len: usize },
    /// Long-format CSV (`series_id,timestamp,value` by default), path
    /// relative to the config file.
    Csv {
        path: PathBuf,
        #[serde(default)]
        schema: CsvSchema,
        /// Train/val windows end before this timestamp, test windows start
        /// at or after it; counts are then per series.
        #[serde(default)]
        boundary: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetConfig {
    pub name: String,
    #[serde(flatten)]
    pub source: Source,
    pub input_len: usize,
    pub horizon: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl DatasetConfig {
    pub fn counts(&self) -> SplitCounts {
        SplitCounts {
            train: self.train,
            val: self.val,
            test: self.test,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub patch: usize,
    pub embed_dim: usize,
    pub depth: usize,
    pub heads: usize,
    pub mlp_ratio: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        let v = VitConfig::new(1);
        Self {
            patch: v.patch,
            embed_dim: v.embed_dim,
            depth: v.depth,
            heads: v.heads,
            mlp_ratio: v.mlp_ratio,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainingConfig {
    pub base_lr: f64,
    pub warmup_epochs: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_size: usize,
    pub weight_decay: f64,
    /// Decay rate of AdamW's second-moment estimate.
    pub adam_beta2: f64,
    pub shard_size: usize,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        let s = TrainSchedule::default();
        Self {
            base_lr: s.base_lr,
            warmup_epochs: s.warmup_epochs,
            max_epochs: s.max_epochs,
            patience: s.patience,
            batch_size: s.batch_size,
            weight_decay: 0.05,
            adam_beta2: 0.999,
            shard_size: 16,
        }
    }
}

impl TrainingConfig {
    pub fn schedule(&self) -> TrainSchedule {
        TrainSchedule {
            base_lr: self.base_lr,
            warmup_epochs: self.warmup_epochs,
            max_epochs: self.max_epochs,
            patience: self.patience,
            batch_size: self.batch_size,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WaveletConfig {
    pub w: f64,
    pub n_scales: usize,
    /// Shortest and longest period covered, in samples; the longest
    /// defaults to the context length.
    pub min_period: f64,
    pub max_period: Option<f64>,
}

impl Default for WaveletConfig {
    fn default() -> Self {
        Self {
            w: MorletConfig::DEFAULT_W,
            n_scales: MorletConfig::DEFAULT_SCALES,
            min_period: 2.0,
            max_period: None,
        }
    }
}

impl WaveletConfig {
    pub fn morlet(&self, input_len: usize) -> MorletConfig {
        let max = self.max_period.unwrap_or(input_len as f64);
        MorletConfig::for_periods(self.w, self.n_scales, self.min_period, max)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SignSettings {
    /// Threshold fractions of the context std; 0 is the strict variant.
    pub thresholds: Vec<f64>,
}

impl Default for SignSettings {
    fn default() -> Self {
        Self {
            thresholds: vec![0.0, 0.2],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    #[serde(default = "default_methods")]
    pub methods: Vec<Method>,
    /// One or more datasets; every method is trained and scored on each.
    pub datasets: Vec<DatasetConfig>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub training: TrainingConfig,
    #[serde(default)]
    pub wavelet: WaveletConfig,
    #[serde(default)]
    pub sign: SignSettings,
}

fn default_seed() -> u64 {
    42
}

fn default_output() -> PathBuf {
    PathBuf::from("runs/default")
}

fn default_methods() -> Vec<Method> {
    Method::ALL.to_vec()
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative CSV paths resolve against its folder.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        for ds in &mut cfg.datasets {
            if let Source::Csv { path: csv, .. } = &mut ds.source {
                if csv.is_relative() {
                    if let Some(dir) = path.parent() {
                        *csv = dir.join(&*csv);
                    }
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.datasets.is_empty() {
            return bad("no datasets configured".into());
        }
        let mut names: Vec<&str> = self.datasets.iter().map(|d| d.name.as_str()).collect();
        names.sort_unstable();
        names.dedup();
        if names.len() != self.datasets.len() {
            return bad("dataset names must be unique".into());
        }
        for d in &self.datasets {
            self.validate_dataset(d)?;
        }
        if self.methods.is_empty() {
            return bad("no methods selected".into());
        }
        let mut seen = self.methods.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.methods.len() {
            return bad("methods list has duplicates".into());
        }
        self.training.schedule().validate().map_err(HarnessError::Config)?;
        if !(self.training.adam_beta2 > 0.0 && self.training.adam_beta2 < 1.0) {
            return bad("adam_beta2 must lie in (0, 1)".into());
        }
        if self.training.shard_size == 0 {
            return bad("shard_size must be positive".into());
        }
        if self.sign.thresholds.iter().any(|t| !(*t >= 0.0)) {
            return bad("sign thresholds must be non-negative".into());
        }
        Ok(())
    }

    fn validate_dataset(&self, d: &DatasetConfig) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(format!("dataset `{}`: {m}", d.name)));
        if d.name.is_empty() || !d.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_') {
            return bad("name must be non-empty and use only [A-Za-z0-9_-]".into());
        }
        if d.input_len < 3 || d.horizon == 0 {
            return bad(format!("input_len {} / horizon {} too small", d.input_len, d.horizon));
        }
        if let Source::Synthetic { series_len } = d.source {
            if series_len < d.input_len + d.horizon {
                return bad(format!(
                    "series_len {series_len} shorter than input_len + horizon = {}",
                    d.input_len + d.horizon
                ));
            }
        }
        if d.test == 0 {
            return bad("test split is empty".into());
        }
        if self.has_vit() && (d.train == 0 || d.val == 0) {
            return bad("ViT methods need non-empty train and val splits".into());
        }
        for v in Variant::ALL {
            if let Err(e) = self.vit_config(d, v).validate() {
                return bad(e.to_string());
            }
        }
        if let Err(e) = self.wavelet.morlet(d.input_len).validate() {
            return bad(e.to_string());
        }
        Ok(())
    }

    pub fn dataset(&self, name: &str) -> Option<&DatasetConfig> {
        self.datasets.iter().find(|d| d.name == name)
    }

    pub fn has_vit(&self) -> bool {
        self.methods.iter().any(|m| matches!(m, Method::Vit(_)))
    }

    pub fn vit_config(&self, dataset: &DatasetConfig, variant: Variant) -> VitConfig {
        let m = self.model;
        variant.configure(VitConfig {
            patch: m.patch,
            embed_dim: m.embed_dim,
            depth: m.depth,
            heads: m.heads,
            mlp_ratio: m.mlp_ratio,
            ..VitConfig::new(dataset.horizon)
        })
    }

    /// Hash of the whole config (output directory excluded).
    pub fn config_hash(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        hash_json(&serde_json::to_value(&c).expect("config serializes"))
    }

    /// Hash of everything that fixes a variant's architecture and inputs;
    /// checkpoints carry it and evaluation refuses mismatches.
    pub fn architecture_hash(&self, dataset: &DatasetConfig, variant: Variant) -> String {
        hash_json(&serde_json::json!({
            "variant": variant,
            "model": self.vit_config(dataset, variant),
            "input_len": dataset.input_len,
            "wavelet": self.wavelet,
        }))
    }
}

fn hash_json(v: &serde_json::Value) -> String {
    let digest = Sha256::digest(v.to_string().as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        [[datasets]]
        name = "synthetic"
        kind = "synthetic"
        series_len = 100
        input_len = 80
        horizon = 20
        train = 10
        val = 5
        test = 5
    "#;

    #[test]
    fn defaults_match_reference_settings() {
        let cfg = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.seed, 42);
        assert_eq!(cfg.training.batch_size, 128);
        assert_eq!(cfg.training.max_epochs, 200);
        assert_eq!(cfg.training.patience, 10);
        assert_eq!(cfg.training.weight_decay, 0.05);
        assert_eq!(cfg.model.embed_dim, 128);
        assert_eq!(cfg.methods.len(), 6);
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.name().parse::<Method>().unwrap(), m);
        }
        assert_eq!("num-spec".parse::<Method>().unwrap(), Method::Vit(Variant::NumSpec));
        assert!("deepar".parse::<Method>().is_err());
    }

    #[test]
    fn rejects_bad_configs() {
        assert!(ExperimentConfig::from_toml(&MINIMAL.replace("series_len = 100", "series_len = 50")).is_err());
        assert!(ExperimentConfig::from_toml(&format!("methods = [\"naive\", \"naive\"]\n{MINIMAL}")).is_err());
        assert!(ExperimentConfig::from_toml("seed = 1").is_err());
    }

    #[test]
    fn hashes_track_architecture() {
        let a = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let mut b = a.clone();
        b.output_dir = PathBuf::from("elsewhere");
        assert_eq!(a.config_hash(), b.config_hash());
        b.training.base_lr = 0.5;
        assert_ne!(a.config_hash(), b.config_hash());
        let d = &a.datasets[0];
        let arch = |c: &ExperimentConfig, v| c.architecture_hash(d, v);
        assert_eq!(arch(&a, Variant::NumSpec), arch(&b, Variant::NumSpec));
        b.model.depth = 1;
        assert_ne!(arch(&a, Variant::NumSpec), arch(&b, Variant::NumSpec));
        assert_ne!(arch(&a, Variant::NumSpec), arch(&a, Variant::Lineplot));
    }
}
