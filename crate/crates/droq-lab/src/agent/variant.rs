//! Algorithm variants: base algorithms, ablation modifier tags, and the
//! resolution into concrete network / update-rule settings.
//!
//! Tags accepted by configs and the `ablate` subcommand:
//!
//! - bases: `SAC`, `REDQ`, `DroQ`, `DroQN`, `DUVN`, `SinDroQ` (and `REDQ<k>`
//!   for an explicit ensemble size, e.g. `REDQ5`);
//! - ablations relative to `DroQ`: `-DO`, `-LN`, `-DO-LN`, `-DO@TargetQ`,
//!   `-DO@CurrentQ`, `-DO@PolicyOpt`;
//! - normalization swaps: `+BN`, `+GN`, `+LNwoVR` (dropout off) and
//!   `+DO+BN`, `+DO+GN`, `+DO+LNwoVR` (dropout kept);
//! - SAC variants: `SAC+DO`, `SAC+LN`, `SAC+DO+LN`.
//!
//! A modifier token list may follow any base name (`DroQN-LN`,
//! `DroQN-DO-LN`, ...). When a `+`-normalization token is present, dropout is
//! enabled only if `+DO` also appears, matching the ablation naming above.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::q_ensemble::Normalization;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseAlgorithm {
    Sac,
    Redq,
    DroQ,
    DroQN,
    Duvn,
    SinDroQ,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyObjective {
    MeanOverEnsemble,
    MinOverEnsemble,
}

/// Outcome of parsing a variant tag; `None` fields fall back to base or
/// config defaults during resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct VariantSpec {
    pub base: BaseAlgorithm,
    /// Explicit ensemble size from a numeric suffix (`REDQ5`).
    pub n_override: Option<usize>,
    pub dropout_on: bool,
    pub normalization: Normalization,
    pub placement_target_q: bool,
    pub placement_current_q: bool,
    pub placement_policy_opt: bool,
}

impl BaseAlgorithm {
    fn default_dropout_on(self) -> bool {
        matches!(
            self,
            BaseAlgorithm::DroQ | BaseAlgorithm::DroQN | BaseAlgorithm::Duvn | BaseAlgorithm::SinDroQ
        )
    }

    fn default_normalization(self) -> Normalization {
        match self {
            BaseAlgorithm::DroQ | BaseAlgorithm::DroQN | BaseAlgorithm::SinDroQ => {
                Normalization::LayerNorm
            }
            BaseAlgorithm::Sac | BaseAlgorithm::Redq | BaseAlgorithm::Duvn => Normalization::None,
        }
    }

    pub fn default_policy_objective(self) -> PolicyObjective {
        match self {
            BaseAlgorithm::Sac => PolicyObjective::MinOverEnsemble,
            _ => PolicyObjective::MeanOverEnsemble,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            BaseAlgorithm::Sac => "SAC",
            BaseAlgorithm::Redq => "REDQ",
            BaseAlgorithm::DroQ => "DroQ",
            BaseAlgorithm::DroQN => "DroQN",
            BaseAlgorithm::Duvn => "DUVN",
            BaseAlgorithm::SinDroQ => "SinDroQ",
        }
    }
}

/// Parses a variant tag. Bare modifier tags (`-DO`, `+BN`, ...) are relative
/// to `DroQ`.
pub fn parse_variant_tag(tag: &str) -> Result<VariantSpec> {
    let tag = tag.trim();
    let (base, mut rest, n_override) = if let Some(r) = tag.strip_prefix("DroQN") {
        (BaseAlgorithm::DroQN, r, None)
    } else if let Some(r) = tag.strip_prefix("DroQ") {
        (BaseAlgorithm::DroQ, r, None)
    } else if let Some(r) = tag.strip_prefix("REDQ") {
        let digits: String = r.chars().take_while(|c| c.is_ascii_digit()).collect();
        let rr = &r[digits.len()..];
        let n = if digits.is_empty() {
            None
        } else {
            Some(digits.parse::<usize>().map_err(|_| {
                Error::Config(format!("bad ensemble size suffix in '{tag}'"))
            })?)
        };
        (BaseAlgorithm::Redq, rr, n)
    } else if let Some(r) = tag.strip_prefix("SAC") {
        (BaseAlgorithm::Sac, r, None)
    } else if let Some(r) = tag.strip_prefix("DUVN") {
        (BaseAlgorithm::Duvn, r, None)
    } else if let Some(r) = tag.strip_prefix("SinDroQ") {
        (BaseAlgorithm::SinDroQ, r, None)
    } else if tag.starts_with('+') || tag.starts_with('-') {
        (BaseAlgorithm::DroQ, tag, None)
    } else {
        return Err(Error::Config(format!(
            "unknown variant '{tag}' (expected SAC, REDQ[k], DroQ, DroQN, DUVN, \
             SinDroQ, optionally followed by modifiers like -DO, -LN, +BN, \
             -DO@TargetQ)"
        )));
    };

    let mut spec = VariantSpec {
        base,
        n_override,
        dropout_on: base.default_dropout_on(),
        normalization: base.default_normalization(),
        placement_target_q: true,
        placement_current_q: true,
        placement_policy_opt: true,
    };

    // tokenize the modifier list
    let mut plus_do = false;
    let mut plus_norm: Option<Normalization> = None;
    let mut tokens: Vec<(char, String)> = Vec::new();
    while !rest.is_empty() {
        let sign = rest.chars().next().unwrap();
        if sign != '+' && sign != '-' {
            return Err(Error::Config(format!("malformed variant modifier in '{tag}'")));
        }
        rest = &rest[1..];
        let end = rest
            .char_indices()
            .find(|(i, c)| *i > 0 && (*c == '+' || *c == '-'))
            .map(|(i, _)| i)
            .unwrap_or(rest.len());
        let (word, tail) = rest.split_at(end);
        tokens.push((sign, word.to_string()));
        rest = tail;
    }

    for (sign, word) in &tokens {
        match (sign, word.as_str()) {
            ('+', "DO") => plus_do = true,
            ('-', "DO") => spec.dropout_on = false,
            ('+', "LN") => plus_norm = Some(Normalization::LayerNorm),
            ('-', "LN") => spec.normalization = Normalization::None,
            ('+', "BN") => plus_norm = Some(Normalization::BatchNorm),
            ('+', "GN") => plus_norm = Some(Normalization::GroupNorm2),
            ('+', "LNwoVR") => plus_norm = Some(Normalization::LayerNormNoVr),
            ('-', "DO@TargetQ") => spec.placement_target_q = false,
            ('-', "DO@CurrentQ") => spec.placement_current_q = false,
            ('-', "DO@PolicyOpt") => spec.placement_policy_opt = false,
            _ => {
                return Err(Error::Config(format!(
                    "unknown variant modifier '{sign}{word}' in '{tag}'"
                )))
            }
        }
    }

    if let Some(norm) = plus_norm {
        spec.normalization = norm;
        spec.dropout_on = plus_do;
    } else if plus_do {
        spec.dropout_on = true;
    }

    Ok(spec)
}

/// Fully resolved algorithm variant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmVariant {
    pub tag: String,
    pub base: BaseAlgorithm,
    /// Ensemble pool size for subset-sampling methods.
    pub n: usize,
    /// In-target minimization parameter.
    pub m: usize,
    pub policy_objective: PolicyObjective,
}

impl AlgorithmVariant {
    pub fn resolve(
        tag: &str,
        n: usize,
        m: usize,
        policy_objective: Option<PolicyObjective>,
    ) -> Result<(Self, VariantSpec)> {
        let spec = parse_variant_tag(tag)?;
        let mut n = spec.n_override.unwrap_or(n);
        let mut m = m;
        match spec.base {
            BaseAlgorithm::Sac => {
                n = 2;
                m = 2;
            }
            BaseAlgorithm::Duvn => {
                m = 1;
            }
            _ => {}
        }
        if m == 0 || n == 0 {
            return Err(Error::Config("N and M must be positive".into()));
        }
        if m > n {
            return Err(Error::Config(format!("M = {m} exceeds N = {n}")));
        }
        let policy_objective = match spec.base {
            // the SAC family is defined by its min-over-ensemble policy loss
            BaseAlgorithm::Sac => PolicyObjective::MinOverEnsemble,
            _ => policy_objective.unwrap_or_else(|| spec.base.default_policy_objective()),
        };
        let variant = AlgorithmVariant {
            tag: tag.trim().to_string(),
            base: spec.base,
            n,
            m,
            policy_objective,
        };
        Ok((variant, spec))
    }

    /// Number of online/target network pairs this variant maintains.
    pub fn ensemble_size(&self) -> usize {
        match self.base {
            BaseAlgorithm::Sac => 2,
            BaseAlgorithm::Redq | BaseAlgorithm::DroQN => self.n,
            BaseAlgorithm::DroQ => self.m,
            BaseAlgorithm::Duvn | BaseAlgorithm::SinDroQ => 1,
        }
    }

    /// How the bootstrap target evaluates target networks.
    pub fn target_rule(&self) -> TargetRule {
        match self.base {
            BaseAlgorithm::Sac => TargetRule::MinOverFirst { count: 2 },
            BaseAlgorithm::DroQ => TargetRule::MinOverFirst { count: self.m },
            BaseAlgorithm::Redq | BaseAlgorithm::DroQN => TargetRule::MinOverSubset {
                n: self.n,
                m: self.m,
            },
            BaseAlgorithm::Duvn => TargetRule::SingleMember,
            BaseAlgorithm::SinDroQ => TargetRule::MinOverRepeats { count: self.m },
        }
    }

    /// How many stochastic evaluations the policy objective averages when the
    /// ensemble has a single member (Sin-DroQ style).
    pub fn policy_eval_repeats(&self) -> usize {
        match self.base {
            BaseAlgorithm::SinDroQ => self.m,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetRule {
    /// Row-wise min over members 0..count, each evaluated once.
    MinOverFirst { count: usize },
    /// Row-wise min over a freshly sampled subset of m of the n members.
    MinOverSubset { n: usize, m: usize },
    /// Member 0 evaluated once; no min.
    SingleMember,
    /// Member 0 evaluated `count` times with independent masks; row-wise min.
    MinOverRepeats { count: usize },
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_tags_parse() {
        for (tag, base) in [
            ("SAC", BaseAlgorithm::Sac),
            ("REDQ", BaseAlgorithm::Redq),
            ("DroQ", BaseAlgorithm::DroQ),
            ("DroQN", BaseAlgorithm::DroQN),
            ("DUVN", BaseAlgorithm::Duvn),
            ("SinDroQ", BaseAlgorithm::SinDroQ),
        ] {
            assert_eq!(parse_variant_tag(tag).unwrap().base, base, "{tag}");
        }
    }

    #[test]
    fn redq_numeric_suffix_sets_n() {
        let spec = parse_variant_tag("REDQ5").unwrap();
        assert_eq!(spec.n_override, Some(5));
        let (v, _) = AlgorithmVariant::resolve("REDQ5", 10, 2, None).unwrap();
        assert_eq!(v.n, 5);
        assert_eq!(v.ensemble_size(), 5);
    }

    #[test]
    fn droq_ablations() {
        let spec = parse_variant_tag("-DO").unwrap();
        assert_eq!(spec.base, BaseAlgorithm::DroQ);
        assert!(!spec.dropout_on);
        assert_eq!(spec.normalization, Normalization::LayerNorm);

        let spec = parse_variant_tag("-LN").unwrap();
        assert!(spec.dropout_on);
        assert_eq!(spec.normalization, Normalization::None);

        let spec = parse_variant_tag("-DO-LN").unwrap();
        assert!(!spec.dropout_on);
        assert_eq!(spec.normalization, Normalization::None);

        let spec = parse_variant_tag("DroQ-DO-LN").unwrap();
        assert!(!spec.dropout_on);
        assert_eq!(spec.normalization, Normalization::None);
    }

    #[test]
    fn placement_ablations() {
        let spec = parse_variant_tag("-DO@TargetQ").unwrap();
        assert!(spec.dropout_on);
        assert!(!spec.placement_target_q);
        assert!(spec.placement_current_q);
        assert!(spec.placement_policy_opt);

        let spec = parse_variant_tag("-DO@CurrentQ").unwrap();
        assert!(!spec.placement_current_q);
        let spec = parse_variant_tag("-DO@PolicyOpt").unwrap();
        assert!(!spec.placement_policy_opt);
    }

    #[test]
    fn normalization_swaps_follow_the_ablation_naming() {
        // +BN alone replaces the norm in the no-dropout variant
        let spec = parse_variant_tag("+BN").unwrap();
        assert!(!spec.dropout_on);
        assert_eq!(spec.normalization, Normalization::BatchNorm);

        let spec = parse_variant_tag("+DO+BN").unwrap();
        assert!(spec.dropout_on);
        assert_eq!(spec.normalization, Normalization::BatchNorm);

        let spec = parse_variant_tag("+GN").unwrap();
        assert_eq!(spec.normalization, Normalization::GroupNorm2);
        let spec = parse_variant_tag("+DO+LNwoVR").unwrap();
        assert!(spec.dropout_on);
        assert_eq!(spec.normalization, Normalization::LayerNormNoVr);
    }

    #[test]
    fn sac_variants() {
        let spec = parse_variant_tag("SAC").unwrap();
        assert!(!spec.dropout_on);
        assert_eq!(spec.normalization, Normalization::None);

        let spec = parse_variant_tag("SAC+DO").unwrap();
        assert!(spec.dropout_on);
        assert_eq!(spec.normalization, Normalization::None);

        let spec = parse_variant_tag("SAC+LN").unwrap();
        assert!(!spec.dropout_on);
        assert_eq!(spec.normalization, Normalization::LayerNorm);

        let spec = parse_variant_tag("SAC+DO+LN").unwrap();
        assert!(spec.dropout_on);
        assert_eq!(spec.normalization, Normalization::LayerNorm);

        let (v, _) = AlgorithmVariant::resolve("SAC+DO+LN", 10, 2, None).unwrap();
        assert_eq!(v.n, 2);
        assert_eq!(v.m, 2);
        assert_eq!(v.policy_objective, PolicyObjective::MinOverEnsemble);
    }

    #[test]
    fn duvn_forces_m_one() {
        let (v, spec) = AlgorithmVariant::resolve("DUVN", 10, 2, None).unwrap();
        assert_eq!(v.m, 1);
        assert_eq!(v.ensemble_size(), 1);
        assert_eq!(spec.normalization, Normalization::None);
        assert!(spec.dropout_on);
        assert_eq!(v.target_rule(), TargetRule::SingleMember);
    }

    #[test]
    fn ensemble_sizes_per_variant() {
        let size = |tag: &str| {
            AlgorithmVariant::resolve(tag, 10, 2, None)
                .unwrap()
                .0
                .ensemble_size()
        };
        assert_eq!(size("SAC"), 2);
        assert_eq!(size("REDQ"), 10);
        assert_eq!(size("DroQ"), 2);
        assert_eq!(size("DroQN"), 10);
        assert_eq!(size("DUVN"), 1);
        assert_eq!(size("SinDroQ"), 1);
    }

    #[test]
    fn m_greater_than_n_is_rejected() {
        assert!(AlgorithmVariant::resolve("REDQ", 2, 5, None).is_err());
    }

    #[test]
    fn unknown_tags_are_rejected() {
        assert!(parse_variant_tag("TD3").is_err());
        assert!(parse_variant_tag("DroQ*LN").is_err());
        assert!(parse_variant_tag("-XYZ").is_err());
    }
}
