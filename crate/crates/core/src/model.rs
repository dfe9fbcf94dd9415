//! Persisted calibrations.
//!
//! A model file is pretty-printed JSON with a `format_version`, the method
//! tag and its parameters, the normalization to replay at inference time and
//! the calibration image size. Writing is deterministic, so a model that is
//! read and written again is byte-identical.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::depth::SamplePoint;
use crate::error::{Error, Result};
use crate::gssa::GlobalScaleShift;
use crate::lwlr::LwlrConfig;
use crate::normalize::NormalizationMethod;
use crate::ssra::ThetaParams;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Gssa,
    Lwlr,
    Ssra,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Gssa, Method::Lwlr, Method::Ssra];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Gssa => "gssa",
            Self::Lwlr => "lwlr",
            Self::Ssra => "ssra",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gssa" => Ok(Self::Gssa),
            "lwlr" => Ok(Self::Lwlr),
            "ssra" => Ok(Self::Ssra),
            other => Err(Error::Parse(format!(
                "unknown method '{other}' (expected gssa, lwlr or ssra)"
            ))),
        }
    }
}

/// Calibration samples stored for the locally weighted fit, which is
/// recomputed for the target size at apply time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LwlrPayload {
    pub bandwidth: f64,
    pub epsilon: f64,
    /// `[u, v, z_c, z_p]` per sample.
    pub samples: Vec<[f64; 4]>,
}

impl LwlrPayload {
    pub fn new(cfg: LwlrConfig, points: &[SamplePoint]) -> Result<Self> {
        let samples = points
            .iter()
            .map(|p| {
                p.z_p
                    .map(|z_p| [p.u as f64, p.v as f64, p.z_c, z_p])
                    .ok_or_else(|| Error::InvalidArgument("unpaired sample".into()))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            bandwidth: cfg.bandwidth,
            epsilon: cfg.epsilon,
            samples,
        })
    }

    pub fn config(&self) -> LwlrConfig {
        LwlrConfig {
            bandwidth: self.bandwidth,
            epsilon: self.epsilon,
        }
    }

    pub fn points(&self) -> Result<Vec<SamplePoint>> {
        self.samples
            .iter()
            .map(|&[u, v, z_c, z_p]| {
                if u < 0.0 || v < 0.0 || u.fract() != 0.0 || v.fract() != 0.0 {
                    return Err(Error::Parse(format!("bad sample pixel ({u}, {v})")));
                }
                Ok(SamplePoint::paired(u as usize, v as usize, z_c, z_p))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", content = "params", rename_all = "lowercase")]
pub enum Alignment {
    Gssa(GlobalScaleShift),
    Lwlr(LwlrPayload),
    Ssra(ThetaParams),
}

impl Alignment {
    pub fn method(&self) -> Method {
        match self {
            Self::Gssa(_) => Method::Gssa,
            Self::Lwlr(_) => Method::Lwlr,
            Self::Ssra(_) => Method::Ssra,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentModel {
    pub format_version: u32,
    #[serde(flatten)]
    pub alignment: Alignment,
    pub norm: NormalizationMethod,
    /// Additive term of min-max normalization, fixed at calibration time.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub norm_offset: Option<f64>,
    pub calib_dims: [usize; 2],
    pub created_at: String,
    pub sample_count: usize,
}

impl AlignmentModel {
    pub fn method(&self) -> Method {
        self.alignment.method()
    }

    pub fn calib_dims(&self) -> (usize, usize) {
        (self.calib_dims[0], self.calib_dims[1])
    }

    pub fn validate(&self) -> Result<()> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Parse(format!(
                "unsupported model format_version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        match &self.alignment {
            Alignment::Gssa(p) if !(p.s.is_finite() && p.t.is_finite()) => {
                return Err(Error::Parse("gssa parameters must be finite".into()))
            }
            Alignment::Lwlr(p) => {
                p.config().validate()?;
                p.points()?;
            }
            Alignment::Ssra(p) => p.validate()?,
            _ => {}
        }
        if self.norm == NormalizationMethod::MinMax && self.norm_offset.is_none() {
            return Err(Error::Parse("min-max model is missing norm_offset".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: Self = serde_json::from_str(text)?;
        model.validate()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Current UTC time, or `SOURCE_DATE_EPOCH` when set, as RFC 3339.
pub fn timestamp() -> String {
    use chrono::{DateTime, SecondsFormat, Utc};
    let now = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .and_then(|secs| DateTime::<Utc>::from_timestamp(secs, 0))
        .unwrap_or_else(Utc::now);
    now.to_rfc3339_opts(SecondsFormat::Secs, true)
}
