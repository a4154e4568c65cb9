//! Run configuration shared by the library entry points and the CLI.
//!
//! Defaults: seed 42, L = 3, depth 2, accuracy and recall thresholds 0.5,
//! five negatives per positive, 50 candidates per ranking problem.

use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{ApstError, Result};
use crate::filter::{EvidenceMode, MatchParams, Thresholds};
use crate::graph::TripleFormat;
use crate::scorer::{CorruptSide, LossConfig, PairConfig};
use crate::text::DescriptionTier;

/// Description tier crossed with evidence type: short/detailed descriptions,
/// closed paths only or closed plus anchoring paths.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Ablation {
    Sc,
    Sa,
    Dc,
    #[default]
    Da,
}

impl Ablation {
    pub fn tier(self) -> DescriptionTier {
        match self {
            Ablation::Sc | Ablation::Sa => DescriptionTier::Short,
            Ablation::Dc | Ablation::Da => DescriptionTier::Detailed,
        }
    }

    pub fn evidence(self) -> EvidenceMode {
        match self {
            Ablation::Sc | Ablation::Dc => EvidenceMode::ClosedOnly,
            Ablation::Sa | Ablation::Da => EvidenceMode::ClosedAndAnchoring,
        }
    }
}

impl FromStr for Ablation {
    type Err = ApstError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "SC" => Ok(Ablation::Sc),
            "SA" => Ok(Ablation::Sa),
            "DC" => Ok(Ablation::Dc),
            "DA" => Ok(Ablation::Da),
            _ => Err(ApstError::Config(format!("unknown ablation `{s}` (SC, SA, DC, DA)"))),
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Ablation::Sc => "SC",
            Ablation::Sa => "SA",
            Ablation::Dc => "DC",
            Ablation::Da => "DA",
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalMode {
    #[default]
    Transductive,
    Inductive,
}

impl FromStr for EvalMode {
    type Err = ApstError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "transductive" => Ok(EvalMode::Transductive),
            "inductive" => Ok(EvalMode::Inductive),
            _ => Err(ApstError::Config(format!("unknown mode `{s}` (transductive, inductive)"))),
        }
    }
}

/// `builtin` or the base URL of an embedding service.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "String", from = "String")]
pub enum EncoderSpec {
    #[default]
    Builtin,
    Remote(String),
}

impl From<String> for EncoderSpec {
    fn from(s: String) -> Self {
        if s == "builtin" {
            EncoderSpec::Builtin
        } else {
            EncoderSpec::Remote(s.strip_prefix("remote:").unwrap_or(&s).to_string())
        }
    }
}

impl From<EncoderSpec> for String {
    fn from(e: EncoderSpec) -> String {
        match e {
            EncoderSpec::Builtin => "builtin".into(),
            EncoderSpec::Remote(url) => url,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train: Option<PathBuf>,
    pub test: Option<PathBuf>,
    pub candidates: Option<PathBuf>,
    /// Detailed-tier description file.
    pub descriptions: Option<PathBuf>,
    pub short_descriptions: Option<PathBuf>,
    pub store: Option<PathBuf>,
    /// Where eval writes its report and export-train-pairs its pairs.
    pub output: Option<PathBuf>,
    /// Mine the store from `train` even if `store` exists.
    pub build_store: bool,
    pub format: TripleFormat,
    pub depth: usize,
    /// `"none"` disables the threshold.
    #[serde(with = "threshold")]
    pub min_acc: Option<f64>,
    #[serde(with = "threshold")]
    pub min_rec: Option<f64>,
    pub budget_l: usize,
    pub margin: f64,
    pub negatives_per_positive: usize,
    pub corrupt: CorruptSide,
    pub seed: u64,
    pub encoder: EncoderSpec,
    pub ablation: Ablation,
    pub mode: EvalMode,
    pub candidates_per_query: usize,
    /// Report head- and tail-masked metrics separately in addition to pooled.
    pub split_sides: bool,
    pub workers: Option<usize>,
}

/// Parses a threshold flag value: a number, or `none` to disable it.
pub fn parse_threshold(s: &str) -> Result<Option<f64>> {
    if s.eq_ignore_ascii_case("none") || s.eq_ignore_ascii_case("off") {
        return Ok(None);
    }
    s.parse::<f64>()
        .map(Some)
        .map_err(|_| ApstError::Config(format!("threshold `{s}` is neither a number nor `none`")))
}

mod threshold {
    use serde::{Deserialize, Deserializer, Serializer};

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Number(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(x) => s.serialize_f64(*x),
            None => s.serialize_str("none"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Number(x) => Ok(Some(x)),
            Raw::Text(t) => super::parse_threshold(&t).map_err(serde::de::Error::custom),
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            train: None,
            test: None,
            candidates: None,
            descriptions: None,
            short_descriptions: None,
            store: None,
            output: None,
            build_store: false,
            format: TripleFormat::HeadRelationTail,
            depth: 2,
            min_acc: Some(0.5),
            min_rec: Some(0.5),
            budget_l: 3,
            margin: 0.5,
            negatives_per_positive: 5,
            corrupt: CorruptSide::Tail,
            seed: 42,
            encoder: EncoderSpec::Builtin,
            ablation: Ablation::Da,
            mode: EvalMode::Transductive,
            candidates_per_query: 50,
            split_sides: false,
            workers: None,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(ApstError::Config("depth must be >= 1".into()));
        }
        self.thresholds().validate()?;
        LossConfig::new(self.margin, self.budget_l)?;
        if self.candidates_per_query < 2 {
            return Err(ApstError::Config("candidates_per_query must be >= 2".into()));
        }
        if self.workers == Some(0) {
            return Err(ApstError::Config("workers must be >= 1".into()));
        }
        Ok(())
    }

    pub fn thresholds(&self) -> Thresholds {
        Thresholds {
            min_accuracy: self.min_acc,
            min_recall: self.min_rec,
        }
    }

    pub fn match_params(&self) -> MatchParams {
        MatchParams {
            budget: self.budget_l,
            depth: self.depth,
            seed: self.seed,
            mode: self.ablation.evidence(),
        }
    }

    pub fn loss(&self) -> LossConfig {
        LossConfig {
            margin: self.margin,
            budget: self.budget_l,
        }
    }

    pub fn pair_config(&self) -> PairConfig {
        PairConfig {
            negatives_per_positive: self.negatives_per_positive,
            seed: self.seed,
            corrupt: self.corrupt,
            params: self.match_params(),
        }
    }

    pub fn require<'a>(&self, field: &'a Option<PathBuf>, name: &str) -> Result<&'a PathBuf> {
        field
            .as_ref()
            .ok_or_else(|| ApstError::Config(format!("missing required path `{name}`")))
    }
}
