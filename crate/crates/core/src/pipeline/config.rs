//! `key = value` run configuration.
//!
//! One entry per line, `#` starts a comment, nested keys are dotted
//! (`gen.pad_mode = circular`). Unknown keys are rejected so typos surface.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::net::{DiscriminatorConfig, GeneratorConfig};
use crate::posenc::{PeGroup, SpeMode};

use super::loss::AdvLoss;
use super::mask::MaskSpec;
use super::synth::Family;

/// Raw key/value pairs in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    pub entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got '{line}'", i + 1)))?;
            let k = k.trim();
            if k.is_empty() || k.contains(char::is_whitespace) {
                return Err(Error::Config(format!("line {}: bad key '{k}'", i + 1)));
            }
            if entries.insert(k.to_string(), v.trim().to_string()).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key '{k}'", i + 1)));
            }
        }
        Ok(KeyValues { entries })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn parsed<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'"))),
        }
    }

    pub fn list(&self, key: &str) -> Result<Option<Vec<usize>>> {
        match self.get(key) {
            None => Ok(None),
            Some(v) => v
                .split(',')
                .map(|p| p.trim().parse::<usize>().map_err(|_| Error::Config(format!("{key}: bad list entry '{p}'"))))
                .collect::<Result<Vec<_>>>()
                .map(Some),
        }
    }

    pub fn render(&self) -> String {
        self.entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got '{v}'"))),
    }
}

fn parse_group(v: &str) -> Result<Option<PeGroup>> {
    if v.eq_ignore_ascii_case("none") {
        Ok(None)
    } else {
        v.parse::<PeGroup>().map(Some).map_err(|e| Error::Config(e.to_string()))
    }
}

pub fn group_name(g: Option<PeGroup>) -> &'static str {
    g.map_or("none", PeGroup::name)
}

/// Everything a training run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub steps: usize,
    pub batch: usize,
    pub lr_gen: f64,
    pub lr_disc: f64,
    pub lambda_gen: f64,
    pub lambda_adv: f64,
    pub adversarial: bool,
    pub adv_loss: AdvLoss,
    /// Validation/checkpoint period in steps.
    pub eval_every: usize,
    pub family: Family,
    pub height: usize,
    pub width: usize,
    pub train_size: usize,
    pub val_size: usize,
    pub mask: MaskSpec,
    pub gen: GeneratorConfig,
    pub disc: DiscriminatorConfig,
    pub out_dir: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            steps: 200,
            batch: 2,
            lr_gen: 1e-4,
            lr_disc: 1e-3,
            lambda_gen: 1.0,
            lambda_adv: 1e-2,
            adversarial: false,
            adv_loss: AdvLoss::Wgan,
            eval_every: 100,
            family: Family::Stripes,
            height: 64,
            width: 128,
            train_size: 64,
            val_size: 4,
            mask: MaskSpec::default(),
            gen: GeneratorConfig::default(),
            disc: DiscriminatorConfig::default(),
            out_dir: PathBuf::from("run"),
        }
    }
}

const KEYS: &[&str] = &[
    "seed",
    "steps",
    "batch",
    "lr_gen",
    "lr_disc",
    "lambda_gen",
    "lambda_adv",
    "adversarial",
    "adv_loss",
    "eval_every",
    "out_dir",
    "data.family",
    "data.height",
    "data.width",
    "data.train_size",
    "data.val_size",
    "mask.known_fraction",
    "gen.stages",
    "gen.channels",
    "gen.kernel",
    "gen.pad_mode",
    "gen.pe_group",
    "gen.pe_mode",
    "gen.pe_pairs",
    "gen.paste_known",
    "disc.channels",
    "disc.kernel",
    "disc.pad_mode",
    "disc.train_iters",
    "disc.eval_iters",
];

impl RunConfig {
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        if let Some(k) = kv.entries.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown config key '{k}'")));
        }
        let mut c = RunConfig::default();
        macro_rules! set {
            ($field:expr, $key:literal) => {
                if let Some(v) = kv.parsed($key)? {
                    $field = v;
                }
            };
        }
        set!(c.seed, "seed");
        set!(c.steps, "steps");
        set!(c.batch, "batch");
        set!(c.lr_gen, "lr_gen");
        set!(c.lr_disc, "lr_disc");
        set!(c.lambda_gen, "lambda_gen");
        set!(c.lambda_adv, "lambda_adv");
        set!(c.eval_every, "eval_every");
        set!(c.out_dir, "out_dir");
        set!(c.family, "data.family");
        set!(c.height, "data.height");
        set!(c.width, "data.width");
        set!(c.train_size, "data.train_size");
        set!(c.val_size, "data.val_size");
        set!(c.mask.known_fraction, "mask.known_fraction");
        set!(c.adv_loss, "adv_loss");
        if let Some(v) = kv.get("adversarial") {
            c.adversarial = parse_bool("adversarial", v)?;
        }

        if let Some(ch) = kv.list("gen.channels")? {
            c.gen.channels = ch;
        }
        if let Some(s) = kv.parsed::<usize>("gen.stages")? {
            if kv.get("gen.channels").is_some() {
                if s != c.gen.channels.len() {
                    return Err(Error::Config(format!(
                        "gen.stages = {s} but gen.channels lists {} stages",
                        c.gen.channels.len()
                    )));
                }
            } else {
                c.gen.channels = (0..s).map(|i| (32usize << i).min(256)).collect();
            }
        }
        set!(c.gen.kernel, "gen.kernel");
        set!(c.gen.pad_mode, "gen.pad_mode");
        set!(c.gen.pe_mode, "gen.pe_mode");
        set!(c.gen.pe_pairs, "gen.pe_pairs");
        if let Some(v) = kv.get("gen.pe_group") {
            c.gen.pe_group = parse_group(v)?;
        }
        if let Some(v) = kv.get("gen.paste_known") {
            c.gen.paste_known = parse_bool("gen.paste_known", v)?;
        }
        if let Some(ch) = kv.list("disc.channels")? {
            c.disc.channels = ch;
        }
        set!(c.disc.kernel, "disc.kernel");
        set!(c.disc.pad_mode, "disc.pad_mode");
        set!(c.disc.train_iters, "disc.train_iters");
        set!(c.disc.eval_iters, "disc.eval_iters");
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_kv(&KeyValues::load(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        for (name, v) in [("lr_gen", self.lr_gen), ("lr_disc", self.lr_disc)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        for (name, v) in [("lambda_gen", self.lambda_gen), ("lambda_adv", self.lambda_adv)] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        if self.batch == 0 || self.train_size == 0 || self.val_size == 0 || self.eval_every == 0 {
            return bad("batch, data sizes and eval_every must be positive".into());
        }
        if !(self.mask.known_fraction > 0.0 && self.mask.known_fraction <= 1.0) {
            return bad(format!("mask.known_fraction must lie in (0, 1], got {}", self.mask.known_fraction));
        }
        self.gen.validate()?;
        self.disc.validate()?;
        let s = self.gen.total_stride().max(if self.adversarial { self.disc.total_stride() } else { 1 });
        if self.height == 0 || self.width == 0 || self.height % s != 0 || self.width % s != 0 {
            return bad(format!("image size {}x{} must be a positive multiple of {s}", self.height, self.width));
        }
        Ok(())
    }

    /// Canonical `key = value` form; parsing it gives back the same config.
    pub fn to_kv(&self) -> KeyValues {
        let join = |v: &[usize]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
        let pairs: Vec<(&str, String)> = vec![
            ("seed", self.seed.to_string()),
            ("steps", self.steps.to_string()),
            ("batch", self.batch.to_string()),
            ("lr_gen", self.lr_gen.to_string()),
            ("lr_disc", self.lr_disc.to_string()),
            ("lambda_gen", self.lambda_gen.to_string()),
            ("lambda_adv", self.lambda_adv.to_string()),
            ("adversarial", self.adversarial.to_string()),
            ("adv_loss", self.adv_loss.to_string()),
            ("eval_every", self.eval_every.to_string()),
            ("out_dir", self.out_dir.display().to_string()),
            ("data.family", self.family.to_string()),
            ("data.height", self.height.to_string()),
            ("data.width", self.width.to_string()),
            ("data.train_size", self.train_size.to_string()),
            ("data.val_size", self.val_size.to_string()),
            ("mask.known_fraction", self.mask.known_fraction.to_string()),
            ("gen.channels", join(&self.gen.channels)),
            ("gen.kernel", self.gen.kernel.to_string()),
            ("gen.pad_mode", self.gen.pad_mode.to_string()),
            ("gen.pe_group", group_name(self.gen.pe_group).to_string()),
            ("gen.pe_mode", self.gen.pe_mode.to_string()),
            ("gen.pe_pairs", self.gen.pe_pairs.to_string()),
            ("gen.paste_known", self.gen.paste_known.to_string()),
            ("disc.channels", join(&self.disc.channels)),
            ("disc.kernel", self.disc.kernel.to_string()),
            ("disc.pad_mode", self.disc.pad_mode.to_string()),
            ("disc.train_iters", self.disc.train_iters.to_string()),
            ("disc.eval_iters", self.disc.eval_iters.to_string()),
        ];
        KeyValues { entries: pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect() }
    }
}

/// Generator architecture from `gen.*` keys only, as stored in checkpoints.
pub fn generator_config_from_kv(kv: &KeyValues) -> Result<GeneratorConfig> {
    let mut g = GeneratorConfig::default();
    g.channels = kv.list("gen.channels")?.ok_or_else(|| Error::Config("missing gen.channels".into()))?;
    if let Some(v) = kv.parsed("gen.kernel")? {
        g.kernel = v;
    }
    if let Some(v) = kv.parsed("gen.pad_mode")? {
        g.pad_mode = v;
    }
    if let Some(v) = kv.parsed::<SpeMode>("gen.pe_mode")? {
        g.pe_mode = v;
    }
    if let Some(v) = kv.parsed("gen.pe_pairs")? {
        g.pe_pairs = v;
    }
    if let Some(v) = kv.get("gen.pe_group") {
        g.pe_group = parse_group(v)?;
    }
    if let Some(v) = kv.get("gen.paste_known") {
        g.paste_known = parse_bool("gen.paste_known", v)?;
    }
    if let Some(v) = kv.parsed("gen.image_channels")? {
        g.image_channels = v;
    }
    g.validate()?;
    Ok(g)
}

pub fn generator_config_to_kv(g: &GeneratorConfig) -> Vec<(String, String)> {
    vec![
        ("gen.channels".into(), g.channels.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")),
        ("gen.kernel".into(), g.kernel.to_string()),
        ("gen.pad_mode".into(), g.pad_mode.to_string()),
        ("gen.pe_group".into(), group_name(g.pe_group).to_string()),
        ("gen.pe_mode".into(), g.pe_mode.to_string()),
        ("gen.pe_pairs".into(), g.pe_pairs.to_string()),
        ("gen.paste_known".into(), g.paste_known.to_string()),
        ("gen.image_channels".into(), g.image_channels.to_string()),
    ]
}
