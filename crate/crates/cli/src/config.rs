//! JSON configuration files.

use std::path::Path;

use fockdimer::curve::Curve;
use fockdimer::kasteleyn::{AngleAssignment, FockModel, StanleyWeights};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::Fail;

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CurveConfig {
    pub genus: u8,
    #[serde(default)]
    pub tau_im: Option<f64>,
}

/// Angle lists shorter than `n` are repeated periodically.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnglesConfig {
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    pub delta: Vec<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub n: usize,
    pub curve: CurveConfig,
    #[serde(default)]
    pub t: f64,
    #[serde(default)]
    pub d: f64,
    pub angles: AnglesConfig,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasedConfig {
    pub a: f64,
    pub b: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum GaugeConfig {
    Stanley(StanleyWeights),
    Biased(BiasedConfig),
}

/// Raw bytes of a config file and their SHA-256 digest.
pub struct Loaded<T> {
    pub value: T,
    pub digest: String,
}

pub fn load<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Loaded<T>, Fail> {
    let bytes =
        std::fs::read(path).map_err(|e| Fail::Config(format!("{}: {e}", path.display())))?;
    let value = serde_json::from_slice(&bytes)
        .map_err(|e| Fail::Config(format!("{}: {e}", path.display())))?;
    let digest = Sha256::digest(&bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect();
    Ok(Loaded { value, digest })
}

fn expand(name: &str, v: &[f64], n: usize) -> Result<Vec<f64>, Fail> {
    if v.is_empty() || v.len() > n {
        return Err(Fail::Config(format!(
            "{name} needs between 1 and n = {n} angles, got {}",
            v.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Fail::Config(format!("{name} has a non-finite angle")));
    }
    Ok((0..n).map(|j| v[j % v.len()]).collect())
}

impl ModelConfig {
    pub fn curve(&self) -> Result<Curve, Fail> {
        match (self.curve.genus, self.curve.tau_im) {
            (0, None) => Ok(Curve::Genus0),
            (1, Some(t)) => Ok(Curve::genus1(t)?),
            (0, Some(_)) => Err(Fail::Config("tau_im is only allowed in genus 1".into())),
            (1, None) => Err(Fail::Config("genus 1 needs tau_im".into())),
            (g, _) => Err(Fail::Config(format!("genus {g} is not supported"))),
        }
    }

    pub fn angles(&self) -> Result<AngleAssignment, Fail> {
        if self.n == 0 {
            return Err(Fail::Config("n must be at least 1".into()));
        }
        let a = &self.angles;
        Ok(AngleAssignment {
            alpha: expand("alpha", &a.alpha, self.n)?,
            beta: expand("beta", &a.beta, self.n)?,
            gamma: expand("gamma", &a.gamma, self.n)?,
            delta: expand("delta", &a.delta, self.n)?,
        })
    }

    pub fn model(&self) -> Result<FockModel, Fail> {
        if !(self.t.is_finite() && self.d.is_finite()) {
            return Err(Fail::Config("t and d must be finite".into()));
        }
        Ok(FockModel::new(
            self.curve()?,
            self.angles()?,
            self.t,
            self.d,
        )?)
    }

    /// Periods `(k, l)` of the (γ, δ) and (α, β) sequences.
    pub fn periods(&self) -> Result<(usize, usize), Fail> {
        let a = self.angles()?;
        let joint = |u: &[f64], v: &[f64]| {
            (1..=self.n)
                .find(|&p| (0..self.n).all(|j| u[j] == u[j % p] && v[j] == v[j % p]))
                .unwrap_or(self.n)
        };
        Ok((joint(&a.gamma, &a.delta), joint(&a.alpha, &a.beta)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_expands() {
        let c: ModelConfig = serde_json::from_str(
            r#"{"n":4,"curve":{"genus":1,"tau_im":1.0},"t":0.2,"d":0.1,
                "angles":{"alpha":[0.05,0.1],"beta":[0.55],"gamma":[0.3],"delta":[0.8]}}"#,
        )
        .unwrap();
        let a = c.angles().unwrap();
        assert_eq!(a.alpha, vec![0.05, 0.1, 0.05, 0.1]);
        assert_eq!(a.delta, vec![0.8; 4]);
        assert_eq!(c.periods().unwrap(), (1, 2));
        assert!(c.model().is_ok());
    }

    #[test]
    fn rejects_bad_configs() {
        let unknown = r#"{"n":1,"curve":{"genus":0},"angles":{"alpha":[0],"beta":[1],"gamma":[0.5],"delta":[2]},"x":1}"#;
        assert!(serde_json::from_str::<ModelConfig>(unknown).is_err());
        let c: ModelConfig =
            serde_json::from_str(r#"{"n":1,"curve":{"genus":1},"angles":{"alpha":[0],"beta":[1],"gamma":[0.5],"delta":[2]}}"#)
                .unwrap();
        assert!(c.curve().is_err());
        let c: ModelConfig =
            serde_json::from_str(r#"{"n":1,"curve":{"genus":0},"angles":{"alpha":[0,1],"beta":[1],"gamma":[0.5],"delta":[2]}}"#)
                .unwrap();
        assert!(c.angles().is_err());
        let g: GaugeConfig = serde_json::from_str(r#"{"biased":{"a":1.0,"b":0.5}}"#).unwrap();
        assert!(matches!(g, GaugeConfig::Biased(_)));
        assert!(serde_json::from_str::<GaugeConfig>(r#"{"other":{}}"#).is_err());
    }
}
