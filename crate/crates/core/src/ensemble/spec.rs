use serde::{Deserialize, Serialize};

use super::matrix::PredictionMatrix;
use super::vote::{hard_vote_matrix, soft_vote, validate_weights, weighted_vote, TieBreak};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMethod {
    Soft,
    Hard,
    Weighted,
}

impl FusionMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            FusionMethod::Soft => "soft",
            FusionMethod::Hard => "hard",
            FusionMethod::Weighted => "weighted",
        }
    }
}

impl std::str::FromStr for FusionMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "soft" => Ok(FusionMethod::Soft),
            "hard" => Ok(FusionMethod::Hard),
            "weighted" => Ok(FusionMethod::Weighted),
            _ => Err(Error::Config(format!(
                "unknown fusion method {s:?}; expected soft, hard or weighted"
            ))),
        }
    }
}

/// Which members to fuse and how. An empty member list means "the inputs,
/// in the order given".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleSpec {
    pub method: FusionMethod,
    #[serde(default)]
    pub members: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default)]
    pub tie_break: TieBreak,
}

/// Named ensemble presets.
pub const ENSEMBLE_PRESETS: [&str; 4] = ["weighted-1c", "soft-3", "hard-3", "uniform-3"];

const BACKBONE_MEMBERS: [&str; 3] = ["muril", "banglabert", "indicbertv2"];

impl EnsembleSpec {
    pub fn soft(members: Vec<String>) -> Self {
        EnsembleSpec {
            method: FusionMethod::Soft,
            members,
            weights: None,
            tie_break: TieBreak::default(),
        }
    }

    pub fn hard(members: Vec<String>, tie_break: TieBreak) -> Self {
        EnsembleSpec {
            method: FusionMethod::Hard,
            members,
            weights: None,
            tie_break,
        }
    }

    pub fn weighted(members: Vec<String>, weights: Vec<f64>) -> Self {
        EnsembleSpec {
            method: FusionMethod::Weighted,
            members,
            weights: Some(weights),
            tie_break: TieBreak::default(),
        }
    }

    /// `weighted-1c`: weights 0.5 / 0.3 / 0.2 over MuRIL, BanglaBERT and
    /// IndicBERTv2. The other presets fuse the same three members.
    pub fn preset(name: &str) -> Result<Self> {
        let members: Vec<String> = BACKBONE_MEMBERS.iter().map(|s| s.to_string()).collect();
        match name {
            "weighted-1c" => Ok(EnsembleSpec::weighted(members, vec![0.5, 0.3, 0.2])),
            "soft-3" => Ok(EnsembleSpec::soft(members)),
            "hard-3" => Ok(EnsembleSpec::hard(members, TieBreak::SoftFallback)),
            "uniform-3" => Ok(EnsembleSpec::weighted(members, vec![1.0 / 3.0; 3])),
            _ => Err(Error::Config(format!(
                "unknown ensemble preset {name:?}; known: {}",
                ENSEMBLE_PRESETS.join(", ")
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (self.method, &self.weights) {
            (FusionMethod::Weighted, None) => Err(Error::Validation("weighted fusion needs weights".into())),
            (FusionMethod::Weighted, Some(w)) => {
                if !self.members.is_empty() {
                    validate_weights(w, self.members.len())?;
                }
                Ok(())
            }
            (m, Some(_)) => Err(Error::Validation(format!("{} fusion takes no weights", m.as_str()))),
            (_, None) => Ok(()),
        }
    }

    /// Positions of the members within `model_ids`, in spec order.
    pub fn member_indices(&self, model_ids: &[&str]) -> Result<Vec<usize>> {
        if self.members.is_empty() {
            return Ok((0..model_ids.len()).collect());
        }
        self.members
            .iter()
            .map(|id| {
                let mut found = model_ids.iter().enumerate().filter(|(_, m)| **m == id).map(|(i, _)| i);
                match (found.next(), found.next()) {
                    (Some(i), None) => Ok(i),
                    (None, _) => Err(Error::Validation(format!(
                        "ensemble member {id:?} not among inputs ({})",
                        model_ids.join(", ")
                    ))),
                    (Some(_), Some(_)) => Err(Error::Validation(format!(
                        "ensemble member {id:?} given more than once"
                    ))),
                }
            })
            .collect()
    }

    /// Picks the members out of `inputs` in spec order, matching on
    /// `model_id`.
    pub fn select<'a>(&self, inputs: &'a [PredictionMatrix]) -> Result<Vec<&'a PredictionMatrix>> {
        let ids: Vec<&str> = inputs.iter().map(|m| m.model_id.as_str()).collect();
        Ok(self.member_indices(&ids)?.into_iter().map(|i| &inputs[i]).collect())
    }

    /// Fuses the selected members. Hard voting yields one-hot rows.
    pub fn fuse(&self, inputs: &[PredictionMatrix]) -> Result<PredictionMatrix> {
        self.validate()?;
        let members: Vec<PredictionMatrix> = self.select(inputs)?.into_iter().cloned().collect();
        match self.method {
            FusionMethod::Soft => soft_vote(&members),
            FusionMethod::Hard => hard_vote_matrix(&members, self.tie_break),
            FusionMethod::Weighted => weighted_vote(&members, self.weights.as_deref().unwrap_or(&[])),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weighted_1c_preset() {
        let s = EnsembleSpec::preset("weighted-1c").unwrap();
        assert_eq!(s.method, FusionMethod::Weighted);
        assert_eq!(s.weights, Some(vec![0.5, 0.3, 0.2]));
        assert_eq!(s.members, vec!["muril", "banglabert", "indicbertv2"]);
        for p in ENSEMBLE_PRESETS {
            EnsembleSpec::preset(p).unwrap().validate().unwrap();
        }
        assert!(EnsembleSpec::preset("nope").is_err());
    }

    #[test]
    fn weights_only_for_weighted() {
        let mut s = EnsembleSpec::soft(vec![]);
        s.weights = Some(vec![1.0]);
        assert!(s.validate().is_err());
        let w = EnsembleSpec {
            method: FusionMethod::Weighted,
            members: vec!["a".into(), "b".into()],
            weights: None,
            tie_break: TieBreak::default(),
        };
        assert!(w.validate().is_err());
        assert!(EnsembleSpec::weighted(vec!["a".into(), "b".into()], vec![0.7, 0.7])
            .validate()
            .is_err());
    }

    #[test]
    fn toml_round_trip() {
        let s: EnsembleSpec = toml::from_str("method = \"hard\"\ntie_break = \"lowest_index\"").unwrap();
        assert_eq!(s, EnsembleSpec::hard(vec![], TieBreak::LowestIndex));
        assert!(toml::from_str::<EnsembleSpec>("method = \"soft\"\nbogus = 1").is_err());
    }
}
