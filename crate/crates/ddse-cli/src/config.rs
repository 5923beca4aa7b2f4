//! Training-config resolution: defaults, then the synthetic profile, then
//! the config file, then command-line flags, most specific last.

use crate::{AugmentArgs, TrainOverrides};
use ddse::data::AugmentConfig;
use ddse::encoder::Arch;
use ddse::trainer::{InitScaleMode, TrainConfig};
use ddse::{Error, Result};
use std::path::Path;

/// Everything `train` needs beyond the dataset itself.
#[derive(Debug, Clone)]
pub struct ResolvedTrain {
    pub config: TrainConfig,
    pub arch: Arch,
    pub augment: AugmentConfig,
}

/// Keys accepted in a config file on top of the flat TrainConfig fields.
const EXTRA_KEYS: [&str; 5] = [
    "arch",
    "augment",
    "noise_sigma",
    "hflip_prob",
    "max_shift_px",
];

fn read_table(path: &Path) -> Result<toml::Table> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.parse::<toml::Table>()
        .map_err(|e| Error::config(format!("{}: {e}", path.display())))
}

/// Overlay `over` onto `base` key by key; unknown or mistyped keys are
/// rejected by TrainConfig's own deserializer.
pub fn merge_table(base: &TrainConfig, over: toml::Table) -> Result<TrainConfig> {
    let mut value = toml::Value::try_from(base)
        .map_err(|e| Error::config(format!("config serialization failed: {e}")))?;
    let table = value
        .as_table_mut()
        .expect("TrainConfig serializes to a table");
    for (key, val) in over {
        table.insert(key, val);
    }
    value
        .try_into()
        .map_err(|e| Error::config(format!("config file: {e}")))
}

fn parse_init_mode(text: &str) -> Result<InitScaleMode> {
    match text {
        "ones" => Ok(InitScaleMode::Ones),
        "inv_sqrt_s" => Ok(InitScaleMode::InvSqrtS),
        "spectral" => Ok(InitScaleMode::Spectral),
        other => Err(Error::config(format!(
            "--init-scale-mode must be ones, inv_sqrt_s, or spectral, got '{other}'"
        ))),
    }
}

fn apply_overrides(config: &mut TrainConfig, flags: &TrainOverrides) -> Result<()> {
    if let Some(v) = flags.lr {
        config.learning_rate = v;
    }
    if let Some(v) = flags.momentum {
        config.momentum = v;
    }
    if let Some(v) = flags.batch_size {
        config.batch_size = v;
    }
    if let Some(v) = flags.projection_interval {
        config.projection_interval = v;
    }
    if let Some(v) = flags.epochs {
        config.max_epochs = v;
    }
    if let Some(v) = flags.patience {
        config.plateau_patience = v;
    }
    if let Some(v) = flags.lr_decay_factor {
        config.lr_decay_factor = v;
    }
    if let Some(v) = flags.max_lr_decays {
        config.max_lr_decays = v;
    }
    if let Some(v) = flags.seed {
        config.seed = v;
    }
    if let Some(v) = flags.s {
        config.s = v;
    }
    if let Some(v) = flags.m {
        config.m = v;
    }
    if let Some(v) = flags.k {
        config.k = v;
    }
    if let Some(v) = flags.classes {
        config.classes = v;
    }
    if let Some(v) = flags.lambda_init {
        config.lambda_init = v;
    }
    if let Some(text) = &flags.init_scale_mode {
        config.init_scale_mode = parse_init_mode(text)?;
    }
    if let Some(v) = flags.per_coord_thresholds {
        config.per_coord_thresholds = v;
    }
    if let Some(v) = flags.drop_ratio {
        config.drop_ratio = v;
    }
    if let Some(v) = flags.reinject {
        config.no_shortcut_reinject = v;
    }
    Ok(())
}

fn toml_f64(key: &str, value: &toml::Value) -> Result<f64> {
    match value {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        _ => Err(Error::config(format!("config key '{key}' must be a number"))),
    }
}

fn toml_usize(key: &str, value: &toml::Value) -> Result<usize> {
    match value {
        toml::Value::Integer(i) if *i >= 0 => Ok(*i as usize),
        _ => Err(Error::config(format!(
            "config key '{key}' must be a nonnegative integer"
        ))),
    }
}

fn toml_bool(key: &str, value: &toml::Value) -> Result<bool> {
    value
        .as_bool()
        .ok_or_else(|| Error::config(format!("config key '{key}' must be a boolean")))
}

/// Resolve arch, TrainConfig, and augmentation for a training run. The
/// synthetic profile shrinks the model to fit the low-dimensional corpus
/// unless the file or flags say otherwise.
pub fn resolve_train(
    arch_flag: Option<&str>,
    config_path: Option<&Path>,
    synthetic: bool,
    overrides: &TrainOverrides,
    augment_args: &AugmentArgs,
) -> Result<ResolvedTrain> {
    let mut config = TrainConfig::default();
    if synthetic {
        // Sized to the 64-dimensional blob corpus; small batches keep
        // enough optimizer steps per epoch and the spectral fill keeps the
        // first forward pass inside the shrinkage's dynamic range.
        config.m = 128;
        config.s = 16;
        config.batch_size = 32;
        config.init_scale_mode = InitScaleMode::Spectral;
    }

    let mut arch_name: Option<String> = arch_flag.map(str::to_owned);
    let mut augment = AugmentConfig::default();

    if let Some(path) = config_path {
        let mut table = read_table(path)?;
        let mut extras = toml::Table::new();
        for key in EXTRA_KEYS {
            if let Some(value) = table.remove(key) {
                extras.insert(key.to_string(), value);
            }
        }
        config = merge_table(&config, table)?;
        if let Some(value) = extras.get("arch") {
            let name = value
                .as_str()
                .ok_or_else(|| Error::config("config key 'arch' must be a string"))?;
            // Flag wins over file.
            if arch_name.is_none() {
                arch_name = Some(name.to_string());
            }
        }
        if let Some(value) = extras.get("augment") {
            augment.enabled = toml_bool("augment", value)?;
        }
        if let Some(value) = extras.get("noise_sigma") {
            augment.noise_sigma = toml_f64("noise_sigma", value)?;
        }
        if let Some(value) = extras.get("hflip_prob") {
            augment.hflip_prob = toml_f64("hflip_prob", value)?;
        }
        if let Some(value) = extras.get("max_shift_px") {
            augment.max_shift_px = toml_usize("max_shift_px", value)?;
        }
    }

    apply_overrides(&mut config, overrides)?;
    if augment_args.augment {
        augment.enabled = true;
    }
    if let Some(v) = augment_args.noise_sigma {
        augment.noise_sigma = v;
    }
    if let Some(v) = augment_args.hflip_prob {
        augment.hflip_prob = v;
    }
    if let Some(v) = augment_args.max_shift_px {
        augment.max_shift_px = v;
    }

    let arch_name = arch_name.ok_or_else(|| {
        Error::config("no architecture given: pass --arch or set 'arch' in the config file")
    })?;
    let arch = Arch::parse(&arch_name)?;

    config.validate()?;
    augment.validate()?;
    Ok(ResolvedTrain {
        config,
        arch,
        augment,
    })
}

/// Serialize the fully resolved config (plus arch and augmentation) so a
/// run directory records exactly what produced it.
pub fn render_resolved(resolved: &ResolvedTrain) -> Result<String> {
    let mut value = toml::Value::try_from(&resolved.config)
        .map_err(|e| Error::config(format!("config serialization failed: {e}")))?;
    let table = value
        .as_table_mut()
        .expect("TrainConfig serializes to a table");
    table.insert(
        "arch".to_string(),
        toml::Value::String(resolved.arch.tag().to_string()),
    );
    if resolved.augment.enabled {
        table.insert("augment".to_string(), toml::Value::Boolean(true));
        table.insert(
            "noise_sigma".to_string(),
            toml::Value::Float(resolved.augment.noise_sigma),
        );
        table.insert(
            "hflip_prob".to_string(),
            toml::Value::Float(resolved.augment.hflip_prob),
        );
        table.insert(
            "max_shift_px".to_string(),
            toml::Value::Integer(resolved.augment.max_shift_px as i64),
        );
    }
    toml::to_string_pretty(&value).map_err(|e| Error::config(format!("config render failed: {e}")))
}
