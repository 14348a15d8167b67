use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Training hyperparameters. Parsed and validated only; nothing here trains.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParams {
    pub epochs: u32,
    /// Square input side in pixels.
    pub image_size: u32,
    pub batch: u32,
    pub initial_lr: f64,
    pub final_lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub optimizer: String,
}

impl Default for HyperParams {
    fn default() -> Self {
        Self {
            epochs: 100,
            image_size: 640,
            batch: 32,
            initial_lr: 0.01,
            final_lr: 0.01,
            momentum: 0.9,
            weight_decay: 0.0005,
            optimizer: "SGD".into(),
        }
    }
}

impl HyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, reason: String| Err(Error::invalid(what, reason));
        for (name, v) in [("epochs", self.epochs), ("image_size", self.image_size), ("batch", self.batch)] {
            if v == 0 {
                return bad(name, "must be positive".into());
            }
        }
        for (name, v) in [("initial_lr", self.initial_lr), ("final_lr", self.final_lr)] {
            if !(v > 0.0 && v <= 1.0) {
                return bad(name, format!("{v} not in (0, 1]"));
            }
        }
        if !(self.momentum > 0.0 && self.momentum < 1.0) {
            return bad("momentum", format!("{} not in (0, 1)", self.momentum));
        }
        if !(self.weight_decay > 0.0 && self.weight_decay.is_finite()) {
            return bad("weight_decay", format!("{} must be positive", self.weight_decay));
        }
        if self.optimizer.is_empty() || !self.optimizer.chars().all(|c| c.is_ascii_alphanumeric()) {
            return bad("optimizer", format!("{:?} must be a non-empty alphanumeric name", self.optimizer));
        }
        Ok(())
    }

    /// `key=value` lines in field order; parses back to an equal value.
    pub fn to_config_text(&self) -> String {
        format!(
            "epochs={}\nimage_size={}\nbatch={}\ninitial_lr={}\nfinal_lr={}\nmomentum={}\nweight_decay={}\noptimizer={}\n",
            self.epochs,
            self.image_size,
            self.batch,
            self.initial_lr,
            self.final_lr,
            self.momentum,
            self.weight_decay,
            self.optimizer
        )
    }
}

/// Parses `key=value` lines over the defaults. `#` starts a comment. Unknown
/// keys are logged as warnings and skipped.
pub fn parse_hyperparams(text: &str) -> Result<HyperParams> {
    let (params, warnings) = parse_hyperparams_with_warnings(text)?;
    for w in warnings {
        log::warn!("{w}");
    }
    Ok(params)
}

/// Like [`parse_hyperparams`], returning the warnings instead of logging them.
pub fn parse_hyperparams_with_warnings(text: &str) -> Result<(HyperParams, Vec<String>)> {
    let mut hp = HyperParams::default();
    let mut warnings = Vec::new();
    let mut seen = HashSet::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let perr = |column: usize, message: String| Error::Parse {
            source_name: "hyperparameters".into(),
            line: line_no,
            column,
            message,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| perr(1, format!("expected key=value, found {line:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        let vcol = raw.find('=').map_or(1, |p| p + 2);
        if !seen.insert(key.to_string()) {
            return Err(perr(1, format!("duplicate key {key:?}")));
        }
        let int = || value.parse::<u32>().map_err(|_| perr(vcol, format!("{key}: {value:?} is not a non-negative integer")));
        let float = || {
            value
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| perr(vcol, format!("{key}: {value:?} is not a number")))
        };
        match key {
            "epochs" => hp.epochs = int()?,
            "image_size" => hp.image_size = int()?,
            "batch" => hp.batch = int()?,
            "initial_lr" => hp.initial_lr = float()?,
            "final_lr" => hp.final_lr = float()?,
            "momentum" => hp.momentum = float()?,
            "weight_decay" => hp.weight_decay = float()?,
            "optimizer" => hp.optimizer = value.to_string(),
            _ => warnings.push(format!("hyperparameters line {line_no}: unknown key {key:?} ignored")),
        }
    }
    hp.validate()?;
    Ok((hp, warnings))
}
