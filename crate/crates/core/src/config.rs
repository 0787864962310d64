//! Experiment configuration: a flat `key = value` text format with a schema
//! version. Unknown keys are errors so sweep typos surface immediately.

use std::collections::BTreeMap;
use std::path::PathBuf;

use crate::error::{Error, Result};
use crate::model::ModelKind;
use crate::protocol::Scheme;
use crate::schedule::LrSchedule;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub workers: usize,
    pub scheme: Scheme,
    pub model: ModelKind,
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub samples: usize,
    pub eval_samples: usize,
    pub noise_std: f64,
    pub batch_size: usize,
    pub rounds: u32,
    pub local_steps: u32,
    /// Kept fraction of coordinates; `K = round(phi * d)`.
    pub phi: f64,
    /// Add-drop change fraction; required for `mv-ad`.
    pub phi_ad: Option<f64>,
    /// Value bit budget; `None` transmits 32-bit values.
    pub q: Option<u32>,
    pub lr: f64,
    pub warmup_rounds: u32,
    pub warmup_start: f64,
    pub decays: Vec<(u32, f64)>,
    pub error_feedback: bool,
    /// Fold quantization error into the feedback residual as well.
    pub quant_error_feedback: bool,
    pub weight_decay: f64,
    pub out: PathBuf,
}

impl ExperimentConfig {
    /// Model parameter count implied by the model fields.
    pub fn param_dim(&self) -> usize {
        crate::model::param_count(
            self.model,
            match self.model {
                ModelKind::Mlp1Hidden => {
                    crate::model::ModelShape::mlp(self.input_dim, self.hidden_dim)
                }
                _ => crate::model::ModelShape::vector(self.input_dim),
            },
        )
    }

    /// Kept coordinates per round.
    pub fn k(&self) -> usize {
        let d = self.param_dim();
        ((self.phi * d as f64).round() as usize).clamp(1, d)
    }

    /// Maximum vote changes per worker per round under add-drop voting.
    pub fn k_ad(&self) -> usize {
        let d = self.param_dim();
        let phi_ad = self.phi_ad.unwrap_or(0.0);
        ((phi_ad * d as f64).round() as usize).clamp(1, d)
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            base_rate: self.lr,
            warmup_rounds: self.warmup_rounds,
            warmup_start: self.warmup_start,
            decay_points: self.decays.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.workers == 0 {
            return Err(Error::config("workers", "must be at least 1"));
        }
        if self.samples < self.workers {
            return Err(Error::config("samples", "need at least one sample per worker"));
        }
        if self.input_dim == 0 {
            return Err(Error::config("input_dim", "must be at least 1"));
        }
        if self.model == ModelKind::Mlp1Hidden && self.hidden_dim == 0 {
            return Err(Error::config("hidden_dim", "must be at least 1 for the MLP"));
        }
        if self.rounds == 0 {
            return Err(Error::config("rounds", "must be at least 1"));
        }
        if self.local_steps == 0 {
            return Err(Error::config("local_steps", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be at least 1"));
        }
        if !(self.phi > 0.0 && self.phi <= 1.0) {
            return Err(Error::config("phi", "must lie in (0, 1]"));
        }
        if self.scheme == Scheme::MvAd {
            match self.phi_ad {
                Some(pa) if pa > 0.0 && pa <= self.phi => {}
                Some(_) => return Err(Error::config("phi_ad", "must lie in (0, phi]")),
                None => return Err(Error::config("phi_ad", "required for scheme mv-ad")),
            }
        }
        if let Some(q) = self.q {
            if !(2..=16).contains(&q) {
                return Err(Error::config("q", "must lie in [2, 16] (omit for 32-bit values)"));
            }
        }
        if self.noise_std < 0.0 {
            return Err(Error::config("noise_std", "must be nonnegative"));
        }
        if self.weight_decay < 0.0 {
            return Err(Error::config("weight_decay", "must be nonnegative"));
        }
        self.schedule()
            .validate()
            .map_err(|e| Error::config("lr", e.to_string()))?;
        Ok(())
    }

    /// Parses the flat text form; every unknown or duplicate key is an error.
    pub fn parse(text: &str) -> Result<Self> {
        let mut fields: BTreeMap<&str, &str> = BTreeMap::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::config(format!("line {}", lineno + 1), "expected `key = value`")
            })?;
            let key = key.trim();
            let value = value.trim();
            if fields.insert(key, value).is_some() {
                return Err(Error::config(key, "duplicate key"));
            }
        }

        let schema: u32 = take(&mut fields, "schema")?;
        if schema != SCHEMA_VERSION {
            return Err(Error::config(
                "schema",
                format!("unsupported version {schema}, expected {SCHEMA_VERSION}"),
            ));
        }

        let lr: f64 = take(&mut fields, "lr")?;
        let cfg = ExperimentConfig {
            seed: take(&mut fields, "seed")?,
            workers: take(&mut fields, "workers")?,
            scheme: take_parsed(&mut fields, "scheme")?,
            model: take_opt_parsed(&mut fields, "model")?.unwrap_or(ModelKind::LinearRegression),
            input_dim: take(&mut fields, "input_dim")?,
            hidden_dim: take_opt(&mut fields, "hidden_dim")?.unwrap_or(16),
            samples: take(&mut fields, "samples")?,
            eval_samples: take_opt(&mut fields, "eval_samples")?.unwrap_or(0),
            noise_std: take_opt(&mut fields, "noise_std")?.unwrap_or(0.1),
            batch_size: take_opt(&mut fields, "batch_size")?.unwrap_or(32),
            rounds: take(&mut fields, "rounds")?,
            local_steps: take_opt(&mut fields, "local_steps")?.unwrap_or(1),
            phi: take_opt(&mut fields, "phi")?.unwrap_or(1.0),
            phi_ad: take_opt(&mut fields, "phi_ad")?,
            q: match take_opt::<u32>(&mut fields, "q")? {
                Some(32) | None => None,
                Some(q) => Some(q),
            },
            lr,
            warmup_rounds: take_opt(&mut fields, "warmup_rounds")?.unwrap_or(0),
            warmup_start: take_opt(&mut fields, "warmup_start")?.unwrap_or(lr),
            decays: parse_decays(fields.remove("decays").unwrap_or(""))?,
            error_feedback: take_opt(&mut fields, "error_feedback")?.unwrap_or(true),
            quant_error_feedback: take_opt(&mut fields, "quant_error_feedback")?.unwrap_or(false),
            weight_decay: take_opt(&mut fields, "weight_decay")?.unwrap_or(1e-4),
            out: PathBuf::from(
                fields
                    .remove("out")
                    .ok_or_else(|| Error::config("out", "missing required key"))?,
            ),
        };

        if let Some(unknown) = fields.keys().next() {
            return Err(Error::config(*unknown, "unknown key"));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Canonical text form; `parse(to_text(cfg)) == cfg`.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut push = |k: &str, v: String| {
            out.push_str(k);
            out.push_str(" = ");
            out.push_str(&v);
            out.push('\n');
        };
        push("schema", SCHEMA_VERSION.to_string());
        push("seed", self.seed.to_string());
        push("workers", self.workers.to_string());
        push("scheme", self.scheme.to_string());
        push("model", self.model.to_string());
        push("input_dim", self.input_dim.to_string());
        push("hidden_dim", self.hidden_dim.to_string());
        push("samples", self.samples.to_string());
        push("eval_samples", self.eval_samples.to_string());
        push("noise_std", self.noise_std.to_string());
        push("batch_size", self.batch_size.to_string());
        push("rounds", self.rounds.to_string());
        push("local_steps", self.local_steps.to_string());
        push("phi", self.phi.to_string());
        if let Some(pa) = self.phi_ad {
            push("phi_ad", pa.to_string());
        }
        if let Some(q) = self.q {
            push("q", q.to_string());
        }
        push("lr", self.lr.to_string());
        push("warmup_rounds", self.warmup_rounds.to_string());
        push("warmup_start", self.warmup_start.to_string());
        if !self.decays.is_empty() {
            let spec: Vec<String> = self
                .decays
                .iter()
                .map(|(r, f)| format!("{r}:{f}"))
                .collect();
            push("decays", spec.join(","));
        }
        push("error_feedback", self.error_feedback.to_string());
        push("quant_error_feedback", self.quant_error_feedback.to_string());
        push("weight_decay", self.weight_decay.to_string());
        push("out", self.out.display().to_string());
        out
    }
}

fn take<T: std::str::FromStr>(fields: &mut BTreeMap<&str, &str>, key: &'static str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    take_opt(fields, key)?.ok_or_else(|| Error::config(key, "missing required key"))
}

fn take_opt<T: std::str::FromStr>(
    fields: &mut BTreeMap<&str, &str>,
    key: &'static str,
) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    match fields.remove(key) {
        Some(raw) => raw
            .parse()
            .map(Some)
            .map_err(|e| Error::config(key, format!("invalid value `{raw}`: {e}"))),
        None => Ok(None),
    }
}

fn take_parsed<T>(fields: &mut BTreeMap<&str, &str>, key: &'static str) -> Result<T>
where
    T: std::str::FromStr<Err = Error>,
{
    take_opt_parsed(fields, key)?.ok_or_else(|| Error::config(key, "missing required key"))
}

fn take_opt_parsed<T>(fields: &mut BTreeMap<&str, &str>, key: &'static str) -> Result<Option<T>>
where
    T: std::str::FromStr<Err = Error>,
{
    match fields.remove(key) {
        Some(raw) => raw
            .parse()
            .map(Some)
            .map_err(|e: Error| Error::config(key, e.to_string())),
        None => Ok(None),
    }
}

fn parse_decays(spec: &str) -> Result<Vec<(u32, f64)>> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Ok(Vec::new());
    }
    spec.split(',')
        .map(|part| {
            let (round, factor) = part
                .trim()
                .split_once(':')
                .ok_or_else(|| Error::config("decays", format!("expected `round:factor`, got `{part}`")))?;
            let round = round
                .trim()
                .parse()
                .map_err(|e| Error::config("decays", format!("bad round `{round}`: {e}")))?;
            let factor = factor
                .trim()
                .parse()
                .map_err(|e| Error::config("decays", format!("bad factor `{factor}`: {e}")))?;
            Ok((round, factor))
        })
        .collect()
}
