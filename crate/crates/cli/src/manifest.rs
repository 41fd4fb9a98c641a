//! The run manifest: a flat `key = value` file with `#` comment lines.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use dtstyle::extractor::VGG19_LAYERS;
use dtstyle::imageio::{ChannelOrder, Preprocess, IMAGENET_MEAN_BGR};
use dtstyle::losses::{DEFAULT_CONTENT_LAYER, DEFAULT_STYLE_LAYERS};
use dtstyle::numerics::PoolMode;
use dtstyle::{LossWeights, OptimConfig};

use crate::error::CliError;

/// Every key the manifest accepts, in the order they are written.
pub const KEYS: [&str; 25] = [
    "content",
    "style",
    "out",
    "weights",
    "weights_sha256",
    "resolution",
    "threshold",
    "invert",
    "normalize_distance",
    "alpha",
    "beta",
    "gamma",
    "power",
    "content_layer",
    "style_layers",
    "pool",
    "channel_order",
    "channel_mean",
    "iterations",
    "lr",
    "adam_beta1",
    "adam_beta2",
    "adam_epsilon",
    "snapshot_every",
    "seed",
];

#[derive(Clone, Debug, PartialEq)]
pub struct RunManifest {
    pub content: PathBuf,
    pub style: PathBuf,
    pub out: PathBuf,
    pub weights: PathBuf,
    /// When present, the weights file must hash to this value.
    pub weights_sha256: Option<String>,
    /// Side length of the square working images.
    pub resolution: usize,
    pub threshold: f64,
    pub invert: bool,
    pub normalize_distance: bool,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub power: u32,
    pub content_layer: String,
    pub style_layers: Vec<String>,
    pub pool: PoolMode,
    pub channel_order: ChannelOrder,
    pub channel_mean: [f64; 3],
    pub iterations: usize,
    pub lr: f64,
    pub adam_beta1: f64,
    pub adam_beta2: f64,
    pub adam_epsilon: f64,
    pub snapshot_every: Option<usize>,
    pub seed: u64,
}

/// Raw entries keyed by manifest key. Later inserts override earlier ones,
/// which is how flags override a manifest file.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Entries(BTreeMap<String, String>);

impl Entries {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut map = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                CliError::BadArgs(format!("manifest line {}: expected `key = value`", n + 1))
            })?;
            let key = key.trim();
            if !KEYS.contains(&key) {
                return Err(CliError::BadArgs(format!(
                    "manifest line {}: unknown key `{key}`",
                    n + 1
                )));
            }
            if map.insert(key.to_owned(), value.trim().to_owned()).is_some() {
                return Err(CliError::BadArgs(format!(
                    "manifest line {}: duplicate key `{key}`",
                    n + 1
                )));
            }
        }
        Ok(Self(map))
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        debug_assert!(KEYS.contains(&key), "unknown key {key}");
        self.0.insert(key.to_owned(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.0.get(key).map(String::as_str)
    }
}

fn field<T: FromStr>(entries: &Entries, key: &str, default: Option<T>) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    match entries.get(key) {
        Some(v) => v
            .parse()
            .map_err(|e| CliError::BadArgs(format!("`{key}`: cannot parse `{v}`: {e}"))),
        None => default.ok_or_else(|| CliError::BadArgs(format!("`{key}` is required"))),
    }
}

fn list(value: &str) -> impl Iterator<Item = &str> {
    value.split(',').map(str::trim).filter(|s| !s.is_empty())
}

impl RunManifest {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        Self::from_entries(&Entries::parse(text)?)
    }

    pub fn from_entries(e: &Entries) -> Result<Self, CliError> {
        let defaults = OptimConfig::default();
        let style_layers = match e.get("style_layers") {
            Some(v) => list(v).map(str::to_owned).collect(),
            None => DEFAULT_STYLE_LAYERS.iter().map(|s| s.to_string()).collect(),
        };
        let channel_mean = match e.get("channel_mean") {
            Some(v) => {
                let parts: Vec<f64> = list(v)
                    .map(|s| s.parse::<f64>())
                    .collect::<Result<_, _>>()
                    .map_err(|err| CliError::BadArgs(format!("`channel_mean`: {err}")))?;
                <[f64; 3]>::try_from(parts).map_err(|p| {
                    CliError::BadArgs(format!("`channel_mean` needs 3 values, got {}", p.len()))
                })?
            }
            None => IMAGENET_MEAN_BGR,
        };
        let snapshot_every = match e.get("snapshot_every") {
            Some("none") => None,
            Some(_) => Some(field(e, "snapshot_every", None)?),
            None => defaults.snapshot_every,
        };
        let m = Self {
            content: field(e, "content", None)?,
            style: field(e, "style", None)?,
            out: field(e, "out", Some(PathBuf::from("out")))?,
            weights: field(e, "weights", None)?,
            weights_sha256: e.get("weights_sha256").map(str::to_owned),
            resolution: field(e, "resolution", Some(256))?,
            threshold: field(e, "threshold", Some(0.5))?,
            invert: field(e, "invert", Some(false))?,
            normalize_distance: field(e, "normalize_distance", Some(true))?,
            alpha: field(e, "alpha", Some(0.001))?,
            beta: field(e, "beta", Some(1.0))?,
            gamma: field(e, "gamma", Some(1000.0))?,
            power: field(e, "power", Some(2))?,
            content_layer: field(e, "content_layer", Some(DEFAULT_CONTENT_LAYER.to_owned()))?,
            style_layers,
            pool: field(e, "pool", Some(PoolMode::Max))?,
            channel_order: field(e, "channel_order", Some(ChannelOrder::Bgr))?,
            channel_mean,
            iterations: field(e, "iterations", Some(defaults.iterations))?,
            lr: field(e, "lr", Some(defaults.learning_rate))?,
            adam_beta1: field(e, "adam_beta1", Some(defaults.adam_beta1))?,
            adam_beta2: field(e, "adam_beta2", Some(defaults.adam_beta2))?,
            adam_epsilon: field(e, "adam_epsilon", Some(defaults.adam_epsilon))?,
            snapshot_every,
            seed: field(e, "seed", Some(defaults.seed))?,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::BadArgs(m));
        for (key, p) in [
            ("content", &self.content),
            ("style", &self.style),
            ("out", &self.out),
            ("weights", &self.weights),
        ] {
            let s = p.to_str().unwrap_or("");
            if s.is_empty() || s.trim() != s || s.contains(['\n', '\r']) {
                return bad(format!("`{key}` must be a non-empty single-line path"));
            }
        }
        if let Some(h) = &self.weights_sha256 {
            if h.len() != 64 || !h.bytes().all(|b| b.is_ascii_hexdigit()) {
                return bad(format!("`weights_sha256` is not a sha256 hex digest: {h}"));
            }
        }
        if self.resolution == 0 {
            return bad("`resolution` must be at least 1".into());
        }
        if !(0.0..=1.0).contains(&self.threshold) {
            return bad(format!("`threshold` must lie in [0, 1], got {}", self.threshold));
        }
        if self.power == 0 {
            return bad("`power` must be at least 1".into());
        }
        for layer in std::iter::once(&self.content_layer).chain(&self.style_layers) {
            if !VGG19_LAYERS.iter().any(|(n, _)| n == layer) {
                return bad(format!("`{layer}` is not a VGG-19 conv layer name"));
            }
        }
        if self.preprocess().is_none() {
            return bad("`channel_mean` values must lie in [0, 255]".into());
        }
        self.loss_weights()
            .map_err(|e| CliError::BadArgs(e.to_string()))?;
        self.optim_config()
            .validate()
            .map_err(|e| CliError::BadArgs(e.to_string()))?;
        if self.snapshot_every == Some(0) {
            return bad("`snapshot_every` must be at least 1 or `none`".into());
        }
        Ok(())
    }

    pub fn loss_weights(&self) -> Result<LossWeights, dtstyle::losses::LossError> {
        LossWeights::new(
            self.alpha,
            self.beta,
            self.gamma,
            &self.style_layers,
            self.power,
        )
    }

    pub fn optim_config(&self) -> OptimConfig {
        OptimConfig {
            iterations: self.iterations,
            learning_rate: self.lr,
            adam_beta1: self.adam_beta1,
            adam_beta2: self.adam_beta2,
            adam_epsilon: self.adam_epsilon,
            snapshot_every: self.snapshot_every,
            seed: self.seed,
        }
    }

    pub fn preprocess(&self) -> Option<Preprocess> {
        Preprocess::new(self.channel_mean, self.channel_order)
    }

    /// Every key written in [`KEYS`] order. Reals use the shortest decimal
    /// form that parses back to the same value.
    pub fn to_text(&self) -> String {
        let mut s = String::from("# dtstyle run manifest\n");
        let mut put = |k: &str, v: String| {
            s.push_str(k);
            s.push_str(" = ");
            s.push_str(&v);
            s.push('\n');
        };
        put("content", self.content.display().to_string());
        put("style", self.style.display().to_string());
        put("out", self.out.display().to_string());
        put("weights", self.weights.display().to_string());
        if let Some(h) = &self.weights_sha256 {
            put("weights_sha256", h.clone());
        }
        put("resolution", self.resolution.to_string());
        put("threshold", self.threshold.to_string());
        put("invert", self.invert.to_string());
        put("normalize_distance", self.normalize_distance.to_string());
        put("alpha", self.alpha.to_string());
        put("beta", self.beta.to_string());
        put("gamma", self.gamma.to_string());
        put("power", self.power.to_string());
        put("content_layer", self.content_layer.clone());
        put("style_layers", self.style_layers.join(", "));
        put("pool", self.pool.to_string());
        put("channel_order", self.channel_order.to_string());
        put(
            "channel_mean",
            self.channel_mean
                .iter()
                .map(f64::to_string)
                .collect::<Vec<_>>()
                .join(", "),
        );
        put("iterations", self.iterations.to_string());
        put("lr", self.lr.to_string());
        put("adam_beta1", self.adam_beta1.to_string());
        put("adam_beta2", self.adam_beta2.to_string());
        put("adam_epsilon", self.adam_epsilon.to_string());
        put(
            "snapshot_every",
            self.snapshot_every
                .map_or_else(|| "none".to_owned(), |k| k.to_string()),
        );
        put("seed", self.seed.to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "content = a.png\nstyle = b.png\nweights = w.cnstw\n";

    #[test]
    fn defaults_fill_missing_keys() {
        let m = RunManifest::parse(MINIMAL).unwrap();
        assert_eq!(m.resolution, 256);
        assert_eq!(m.threshold, 0.5);
        assert!(m.normalize_distance && !m.invert);
        assert_eq!((m.alpha, m.beta, m.gamma, m.power), (0.001, 1.0, 1000.0, 2));
        assert_eq!(m.content_layer, "conv4_2");
        assert_eq!(m.style_layers.len(), 5);
        assert_eq!(m.iterations, 500);
        assert_eq!(m.snapshot_every, Some(50));
        assert_eq!(m.out, PathBuf::from("out"));
    }

    #[test]
    fn unknown_and_duplicate_keys_are_rejected() {
        let unknown = format!("{MINIMAL}colour = red\n");
        assert!(matches!(RunManifest::parse(&unknown), Err(CliError::BadArgs(m)) if m.contains("colour")));
        let dup = format!("{MINIMAL}gamma = 1\ngamma = 2\n");
        assert!(RunManifest::parse(&dup).is_err());
        assert!(RunManifest::parse("content a.png\n").is_err());
    }

    #[test]
    fn comments_and_blank_lines_are_skipped() {
        let text = format!("# header\n\n  # indented\n{MINIMAL}gamma = 0.01\n");
        assert_eq!(RunManifest::parse(&text).unwrap().gamma, 0.01);
    }

    #[test]
    fn required_keys() {
        assert!(matches!(
            RunManifest::parse("content = a.png\nweights = w\n"),
            Err(CliError::BadArgs(m)) if m.contains("style")
        ));
    }

    #[test]
    fn invalid_values() {
        for extra in [
            "threshold = 1.5",
            "power = 0",
            "resolution = 0",
            "gamma = -1",
            "content_layer = conv9_9",
            "iterations = 0",
            "adam_beta1 = 1",
            "channel_mean = 1, 2",
            "snapshot_every = 0",
            "pool = median",
            "weights_sha256 = xyz",
        ] {
            assert!(RunManifest::parse(&format!("{MINIMAL}{extra}\n")).is_err(), "{extra}");
        }
    }

    #[test]
    fn entries_override() {
        let mut e = Entries::parse(MINIMAL).unwrap();
        e.set("gamma", "0");
        e.set("snapshot_every", "none");
        let m = RunManifest::from_entries(&e).unwrap();
        assert_eq!(m.gamma, 0.0);
        assert_eq!(m.snapshot_every, None);
    }

    #[test]
    fn text_round_trip() {
        let m = RunManifest::parse(MINIMAL).unwrap();
        assert_eq!(RunManifest::parse(&m.to_text()).unwrap(), m);
    }
}
