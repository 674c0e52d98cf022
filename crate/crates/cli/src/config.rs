//! JSON experiment configuration and its conversion into library types.

use std::path::Path;

use serde::{Deserialize, Serialize};
use ultralap::bvp::Condition;
use ultralap::disc::Disc;
use ultralap::padic::{Exponent, Mobius, Prime, Rational};
use ultralap::schottky::{GoodFundamentalDomain, SchottkyGroup};
use ultralap::spectral::{
    ComponentConfig, CouplingConfig, CouplingExponent, IntegrationMode, SpectralOptions,
};
use ultralap::ultrametric::{Branching, Normalization, OmegaForm, OrbitShape};

use crate::error::CliError;

/// A rational written as an integer or a `"num/den"` string.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Num {
    Int(i64),
    Text(String),
}

impl Num {
    pub fn rational(&self, field: &str) -> Result<Rational, CliError> {
        match self {
            Num::Int(n) => Ok(Rational::from_integer((*n).into())),
            Num::Text(s) => s
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("{field}: `{s}` is not a rational"))),
        }
    }

    pub fn exponent(&self, field: &str) -> Result<Exponent, CliError> {
        match self {
            Num::Int(n) => Ok(Exponent::from_integer(*n)),
            Num::Text(s) => s
                .trim()
                .parse()
                .map_err(|_| CliError::Config(format!("{field}: `{s}` is not a small rational"))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub components: Vec<ComponentJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub coupling: Option<CouplingJson>,
    #[serde(default)]
    pub numerics: NumericsJson,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub heat: Option<HeatJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kernel: Option<KernelJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample: Option<SampleJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bvp: Option<BvpJson>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ComponentJson {
    pub prime: u32,
    /// Checked against the number of generators when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub genus: Option<usize>,
    /// Rows `[a, b, c, d]` of `z ↦ (az + b)/(cz + d)`.
    pub generators: Vec<[Num; 4]>,
    /// Disc `i` is mapped by generator `i` onto the complement of disc `i + g`.
    pub discs: Vec<DiscJson>,
    pub orbits: Vec<OrbitJson>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega: Option<OmegaJson>,
    pub alpha: Num,
    #[serde(default)]
    pub normalization: NormalizationJson,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DiscKind {
    #[default]
    Closed,
    Open,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiscJson {
    pub center: Num,
    /// Radius is `p^rho`.
    pub rho: Num,
    #[serde(default)]
    pub kind: DiscKind,
    /// Take the complement, a disc around infinity.
    #[serde(default)]
    pub outer: bool,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitJson {
    pub center: Num,
    pub rho: i64,
    /// Radius drop per level; omitted means regular `p`-branching.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<Vec<u32>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmegaJson {
    /// Ascending coefficients.
    pub numerator: Vec<Num>,
    pub denominator: Vec<Num>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormalizationJson {
    #[default]
    Diameter,
    Probability,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingJson {
    pub alpha_z: Num,
    pub weights: Vec<Vec<Num>>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntegrationJson {
    #[default]
    FullDomain,
    Complement,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CouplingExponentJson {
    #[default]
    Scaled,
    Unscaled,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecompositionJson {
    /// Wavelets plus the orbit block.
    #[default]
    Analytic,
    /// Symmetric eigensolve of the assembled matrix.
    Direct,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NumericsJson {
    #[serde(default = "default_depth")]
    pub depth: usize,
    #[serde(default = "default_l_max")]
    pub l_max: usize,
    #[serde(default)]
    pub integration: IntegrationJson,
    #[serde(default)]
    pub coupling_exponent: CouplingExponentJson,
    #[serde(default = "default_word_cap")]
    pub word_cap: Option<usize>,
    #[serde(default)]
    pub decomposition: DecompositionJson,
}

fn default_depth() -> usize {
    2
}

fn default_l_max() -> usize {
    4
}

fn default_word_cap() -> Option<usize> {
    Some(500_000)
}

impl Default for NumericsJson {
    fn default() -> Self {
        NumericsJson {
            depth: default_depth(),
            l_max: default_l_max(),
            integration: IntegrationJson::default(),
            coupling_exponent: CouplingExponentJson::default(),
            word_cap: default_word_cap(),
            decomposition: DecompositionJson::default(),
        }
    }
}

/// Initial data on the global leaf grid.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialJson {
    /// One value per leaf.
    Values(Vec<f64>),
    /// Indicator function of these leaves.
    Indicator(Vec<usize>),
    /// Eigenvector with this anchor id, as printed in the spectrum file.
    Eigenfunction(String),
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeatJson {
    pub times: Vec<f64>,
    pub initial: InitialJson,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelJson {
    pub times: Vec<f64>,
    /// Leaf pairs; omitted means the whole grid.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pairs: Option<Vec<[usize; 2]>>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleJson {
    pub start: usize,
    pub horizon: f64,
    pub paths: u64,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionJson {
    Dirichlet,
    VonNeumann,
}

impl From<ConditionJson> for Condition {
    fn from(c: ConditionJson) -> Self {
        match c {
            ConditionJson::Dirichlet => Condition::Dirichlet,
            ConditionJson::VonNeumann => Condition::VonNeumann,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BvpJson {
    pub region: Vec<usize>,
    pub condition: ConditionJson,
    pub times: Vec<f64>,
    pub initial: InitialJson,
}

/// Parsed config together with the raw bytes it came from.
pub struct Loaded {
    pub config: ExperimentConfig,
    pub raw: Vec<u8>,
    pub echo: serde_json::Value,
}

pub fn load(path: &Path) -> Result<Loaded, CliError> {
    let raw = std::fs::read(path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
    let echo: serde_json::Value = serde_json::from_slice(&raw)
        .map_err(|e| CliError::Config(format!("{} is not valid JSON: {e}", path.display())))?;
    let config: ExperimentConfig = serde_json::from_value(echo.clone())
        .map_err(|e| CliError::Config(format!("schema: {e}")))?;
    if config.components.is_empty() {
        return Err(CliError::Config(
            "at least one component is required".into(),
        ));
    }
    Ok(Loaded { config, raw, echo })
}

impl ComponentJson {
    pub fn to_config(&self, index: usize) -> Result<ComponentConfig, CliError> {
        let at = |f: &str| format!("components[{index}].{f}");
        let p = Prime::new(self.prime)
            .map_err(|e| CliError::Config(format!("{}: {e}", at("prime"))))?;
        if let Some(g) = self.genus {
            if g != self.generators.len() {
                return Err(CliError::Config(format!(
                    "{}: genus {g} but {} generators",
                    at("genus"),
                    self.generators.len()
                )));
            }
        }
        let mut gens = Vec::new();
        for (i, row) in self.generators.iter().enumerate() {
            let f = at(&format!("generators[{i}]"));
            let [a, b, c, d] = row;
            let m = Mobius::new(
                a.rational(&f)?,
                b.rational(&f)?,
                c.rational(&f)?,
                d.rational(&f)?,
                p,
            )
            .map_err(|e| CliError::Config(format!("{f}: {e}")))?;
            gens.push(m);
        }
        let group = SchottkyGroup::new(p, gens)
            .map_err(|e| CliError::Config(format!("{}: {e}", at("generators"))))?;
        let mut discs = Vec::new();
        for (i, d) in self.discs.iter().enumerate() {
            let f = at(&format!("discs[{i}]"));
            let (c, rho) = (d.center.rational(&f)?, d.rho.exponent(&f)?);
            let disc = match d.kind {
                DiscKind::Closed => Disc::closed(p, c, rho),
                DiscKind::Open => Disc::open(p, c, rho),
            };
            discs.push(if d.outer { disc.complement() } else { disc });
        }
        let fundamental_domain = GoodFundamentalDomain::new(group.genus(), discs)
            .map_err(|e| CliError::Config(format!("{}: {e}", at("discs"))))?;
        let omega = match &self.omega {
            None => OmegaForm::constant_one(),
            Some(o) => {
                let f = at("omega");
                let numer = o
                    .numerator
                    .iter()
                    .map(|x| x.rational(&f))
                    .collect::<Result<_, _>>()?;
                let denom = o
                    .denominator
                    .iter()
                    .map(|x| x.rational(&f))
                    .collect::<Result<_, _>>()?;
                OmegaForm::new(numer, denom).map_err(|e| CliError::Config(format!("{f}: {e}")))?
            }
        };
        let mut orbits = Vec::new();
        for (i, o) in self.orbits.iter().enumerate() {
            let branching = match &o.profile {
                None => Branching::Regular,
                Some(p) => Branching::Profile(p.clone()),
            };
            orbits.push(OrbitShape {
                center: o.center.rational(&at(&format!("orbits[{i}]")))?,
                rho: o.rho,
                branching,
            });
        }
        let normalization = match self.normalization {
            NormalizationJson::Diameter => Normalization::DiameterRule,
            NormalizationJson::Probability => Normalization::Probability,
        };
        Ok(ComponentConfig {
            group,
            fundamental_domain,
            omega,
            orbits,
            normalization,
            alpha: self.alpha.exponent(&at("alpha"))?,
        })
    }
}

impl ExperimentConfig {
    pub fn component_configs(&self) -> Result<Vec<ComponentConfig>, CliError> {
        self.components
            .iter()
            .enumerate()
            .map(|(i, c)| c.to_config(i))
            .collect()
    }

    pub fn coupling(&self) -> Result<CouplingConfig, CliError> {
        let n = self.components.len();
        let Some(c) = &self.coupling else {
            return Ok(CouplingConfig::uncoupled(n));
        };
        let weights = c
            .weights
            .iter()
            .enumerate()
            .map(|(i, row)| {
                row.iter()
                    .map(|w| w.rational(&format!("coupling.weights[{i}]")))
                    .collect()
            })
            .collect::<Result<Vec<Vec<_>>, _>>()?;
        let alpha_z = c.alpha_z.exponent("coupling.alpha_z")?;
        CouplingConfig::new(weights, alpha_z)
            .map_err(|e| CliError::Config(format!("coupling: {e}")))
    }

    pub fn options(&self) -> SpectralOptions {
        SpectralOptions {
            l_max: self.numerics.l_max,
            integration: match self.numerics.integration {
                IntegrationJson::FullDomain => IntegrationMode::FullDomain,
                IntegrationJson::Complement => IntegrationMode::Complement,
            },
            coupling_exponent: match self.numerics.coupling_exponent {
                CouplingExponentJson::Scaled => CouplingExponent::Scaled,
                CouplingExponentJson::Unscaled => CouplingExponent::Unscaled,
            },
            word_cap: self.numerics.word_cap,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn numbers_parse() {
        assert_eq!(
            Num::Text("-3/4".into()).rational("x").unwrap(),
            Rational::new((-3).into(), 4.into())
        );
        assert_eq!(
            Num::Int(5).exponent("x").unwrap(),
            Exponent::from_integer(5)
        );
        assert!(Num::Text("1/0x".into()).rational("x").is_err());
    }

    #[test]
    fn defaults_fill_in() {
        let c: ExperimentConfig = serde_json::from_str(
            r#"{"components":[{"prime":2,"generators":[[4,0,0,1]],"discs":[],"orbits":[],"alpha":2}]}"#,
        )
        .unwrap();
        assert_eq!(c.numerics.depth, 2);
        assert_eq!(c.numerics.word_cap, Some(500_000));
        assert!(c.component_configs().is_err());
    }
}
