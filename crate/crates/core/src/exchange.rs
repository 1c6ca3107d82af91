//! JSON payloads crossing the site/coordinator boundary.
//!
//! A site publishes
//! `{"format_version": 1, "site_id": "...", "type": "...", "parameters": {...}}`
//! and the coordinator returns result objects carrying the same version
//! field. Floats are written in shortest round-trip form.

use crate::approx::{Approximation, LikelihoodProfile};
use crate::error::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use std::collections::HashSet;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SitePayload {
    pub site_id: String,
    pub approximation: Approximation,
}

#[derive(Serialize, Deserialize)]
struct RawPayload {
    #[serde(default)]
    format_version: Option<u32>,
    site_id: String,
    #[serde(rename = "type")]
    kind: String,
    parameters: Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Location {
    mu: f64,
    sigma: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct SkewParams {
    mu: f64,
    sigma: f64,
    alpha: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct CustomParams {
    mu: f64,
    sigma: f64,
    gamma: f64,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Reason {
    reason: String,
}

fn params<T: DeserializeOwned>(kind: &str, value: Value) -> Result<T> {
    serde_json::from_value(value)
        .map_err(|e| Error::Payload(format!("bad parameters for type '{kind}': {e}")))
}

impl SitePayload {
    pub fn new(site_id: impl Into<String>, approximation: Approximation) -> Self {
        Self {
            site_id: site_id.into(),
            approximation,
        }
    }

    pub fn to_json(&self) -> String {
        let (kind, parameters) = match &self.approximation {
            Approximation::Normal { mu, sigma } => ("normal", json!({"mu": mu, "sigma": sigma})),
            Approximation::SkewNormal { mu, sigma, alpha } => (
                "skew_normal",
                json!({"mu": mu, "sigma": sigma, "alpha": alpha}),
            ),
            Approximation::Custom { mu, sigma, gamma } => {
                ("custom", json!({"mu": mu, "sigma": sigma, "gamma": gamma}))
            }
            Approximation::Grid(p) => (
                "grid",
                json!({"log_hr": p.log_hr(), "log_likelihood": p.log_likelihood()}),
            ),
            Approximation::NonEstimable { reason } => ("non_estimable", json!({"reason": reason})),
        };
        let raw = RawPayload {
            format_version: Some(FORMAT_VERSION),
            site_id: self.site_id.clone(),
            kind: kind.to_string(),
            parameters,
        };
        serde_json::to_string_pretty(&raw).expect("payload serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawPayload = serde_json::from_str(text)?;
        match raw.format_version {
            None | Some(FORMAT_VERSION) => {}
            Some(v) => return Err(Error::Payload(format!("unsupported format_version {v}"))),
        }
        let kind = raw.kind.as_str();
        let approximation = match kind {
            "normal" => {
                let p: Location = params(kind, raw.parameters)?;
                Approximation::Normal {
                    mu: p.mu,
                    sigma: p.sigma,
                }
            }
            "skew_normal" => {
                let p: SkewParams = params(kind, raw.parameters)?;
                Approximation::SkewNormal {
                    mu: p.mu,
                    sigma: p.sigma,
                    alpha: p.alpha,
                }
            }
            "custom" => {
                let p: CustomParams = params(kind, raw.parameters)?;
                Approximation::Custom {
                    mu: p.mu,
                    sigma: p.sigma,
                    gamma: p.gamma,
                }
            }
            "grid" => Approximation::Grid(params::<LikelihoodProfile>(kind, raw.parameters)?),
            "non_estimable" => {
                let p: Reason = params(kind, raw.parameters)?;
                Approximation::NonEstimable { reason: p.reason }
            }
            other => {
                return Err(Error::Payload(format!(
                    "unknown approximation type '{other}'"
                )))
            }
        };
        approximation.validate()?;
        Ok(Self {
            site_id: raw.site_id,
            approximation,
        })
    }
}

/// Rejects payload sets that name the same site twice.
pub fn check_unique_sites(payloads: &[SitePayload]) -> Result<()> {
    let mut seen = HashSet::new();
    for p in payloads {
        if !seen.insert(p.site_id.as_str()) {
            return Err(Error::Payload(format!("duplicate site_id '{}'", p.site_id)));
        }
    }
    Ok(())
}

/// A result object tagged with the format version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versioned<T> {
    pub format_version: u32,
    #[serde(flatten)]
    pub result: T,
}

impl<T: Serialize + DeserializeOwned> Versioned<T> {
    pub fn new(result: T) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            result,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("result serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let v: Self = serde_json::from_str(text)?;
        if v.format_version != FORMAT_VERSION {
            return Err(Error::Payload(format!(
                "unsupported format_version {}",
                v.format_version
            )));
        }
        Ok(v)
    }
}
