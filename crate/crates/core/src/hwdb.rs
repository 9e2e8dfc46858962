//! Hardware profiles: memory bandwidth plus per-datatype peak throughput of
//! CUDA Cores, dense Tensor Cores and (optionally) Sparse Tensor Cores.
//!
//! Profiles are stored as TOML:
//!
//! ```toml
//! schema_version = 1
//!
//! [[profile]]
//! name = "a100-80gb-pcie"
//! bandwidth = "1935 GB/s"
//!
//! [profile.dtypes.float]
//! cuda = "19.5 TFLOPS"
//! tc_dense = "156 TFLOPS"
//! tc_sparse = "312 TFLOPS"   # optional
//! ```
//!
//! Rates are either numbers in base units or strings with a decimal prefix
//! (`k`, `M`, `G`, `T`, `P`).

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::roofline::{DataType, RooflineError, Unit};

pub const SCHEMA_VERSION: u32 = 1;
pub const BUILTIN_A100: &str = "a100-80gb-pcie";

const BUILTIN_TOML: &str = include_str!("../profiles/builtin.toml");

#[derive(Debug, Clone, PartialEq, Error)]
pub enum HwdbError {
    #[error("cannot read {path}: {message}")]
    Read { path: String, message: String },
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unsupported schema_version {0} (expected {SCHEMA_VERSION})")]
    SchemaVersion(u32),
    #[error("profile `{profile}`: {message}")]
    Invalid { profile: String, message: String },
    #[error("duplicate profile name `{0}`")]
    DuplicateName(String),
    #[error("unknown profile `{0}`")]
    UnknownProfile(String),
    #[error("profile `{profile}` has no `{dtype}` entry")]
    MissingDataType { profile: String, dtype: DataType },
    #[error("cannot parse rate `{0}`")]
    BadRate(String),
}

/// Peak throughput of each unit for one data type, in FLOP/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UnitPeaks {
    pub cuda: f64,
    pub tc_dense: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tc_sparse: Option<f64>,
}

impl UnitPeaks {
    pub fn peak(&self, unit: Unit) -> Option<f64> {
        match unit {
            Unit::Cuda => Some(self.cuda),
            Unit::Tensor => Some(self.tc_dense),
            Unit::SparseTensor => self.tc_sparse,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareProfile {
    pub name: String,
    /// Off-chip bandwidth in bytes/s.
    pub bandwidth: f64,
    pub dtypes: BTreeMap<DataType, UnitPeaks>,
}

impl HardwareProfile {
    pub fn peaks(&self, dtype: DataType) -> Result<&UnitPeaks, HwdbError> {
        self.dtypes.get(&dtype).ok_or_else(|| HwdbError::MissingDataType {
            profile: self.name.clone(),
            dtype,
        })
    }

    pub fn validate(&self) -> Result<(), HwdbError> {
        let invalid = |message: String| HwdbError::Invalid {
            profile: self.name.clone(),
            message,
        };
        if self.name.trim().is_empty() {
            return Err(invalid("empty name".into()));
        }
        if !(self.bandwidth > 0.0 && self.bandwidth.is_finite()) {
            return Err(invalid(format!("bandwidth must be positive, got {}", self.bandwidth)));
        }
        for (dtype, p) in &self.dtypes {
            for (key, value) in [("cuda", Some(p.cuda)), ("tc_dense", Some(p.tc_dense)), ("tc_sparse", p.tc_sparse)] {
                if let Some(v) = value {
                    if !(v > 0.0 && v.is_finite()) {
                        return Err(invalid(format!("dtypes.{dtype}.{key} must be positive, got {v}")));
                    }
                }
            }
            if let Some(sparse) = p.tc_sparse {
                if sparse < p.tc_dense {
                    return Err(invalid(format!(
                        "dtypes.{dtype}.tc_sparse ({sparse}) is below tc_dense ({})",
                        p.tc_dense
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Ridge points `I* = P / B` of each unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RidgePoints {
    pub cuda: f64,
    pub tc: f64,
    pub sptc: Option<f64>,
}

impl RidgePoints {
    /// Rounded to the nearest integer, as ridge points are usually quoted.
    pub fn rounded(&self) -> (i64, i64, Option<i64>) {
        (
            self.cuda.round() as i64,
            self.tc.round() as i64,
            self.sptc.map(|s| s.round() as i64),
        )
    }

    pub fn for_unit(&self, unit: Unit) -> Option<f64> {
        match unit {
            Unit::Cuda => Some(self.cuda),
            Unit::Tensor => Some(self.tc),
            Unit::SparseTensor => self.sptc,
        }
    }
}

pub fn ridge_points(profile: &HardwareProfile, dtype: DataType) -> Result<RidgePoints, HwdbError> {
    let p = profile.peaks(dtype)?;
    let b = profile.bandwidth;
    Ok(RidgePoints {
        cuda: p.cuda / b,
        tc: p.tc_dense / b,
        sptc: p.tc_sparse.map(|s| s / b),
    })
}

/// A validated set of profiles.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ProfileFile {
    pub schema_version: u32,
    pub profiles: Vec<HardwareProfile>,
}

impl ProfileFile {
    pub fn get(&self, name: &str) -> Result<&HardwareProfile, HwdbError> {
        self.profiles
            .iter()
            .find(|p| p.name == name)
            .ok_or_else(|| HwdbError::UnknownProfile(name.to_string()))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.profiles.iter().map(|p| p.name.as_str())
    }

    pub fn validate(&self) -> Result<(), HwdbError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(HwdbError::SchemaVersion(self.schema_version));
        }
        let mut seen = BTreeSet::new();
        for p in &self.profiles {
            if !seen.insert(p.name.as_str()) {
                return Err(HwdbError::DuplicateName(p.name.clone()));
            }
            p.validate()?;
        }
        Ok(())
    }

    /// Serializes with every rate in base units.
    pub fn to_toml(&self) -> String {
        let raw = RawFile {
            schema_version: self.schema_version,
            profile: self
                .profiles
                .iter()
                .map(|p| RawProfile {
                    name: p.name.clone(),
                    bandwidth: Rate::Number(p.bandwidth),
                    dtypes: p
                        .dtypes
                        .iter()
                        .map(|(d, u)| {
                            (
                                d.name().to_string(),
                                RawPeaks {
                                    cuda: Rate::Number(u.cuda),
                                    tc_dense: Rate::Number(u.tc_dense),
                                    tc_sparse: u.tc_sparse.map(Rate::Number),
                                },
                            )
                        })
                        .collect(),
                })
                .collect(),
        };
        toml::to_string(&raw).expect("profile serialization cannot fail")
    }

    pub fn parse(text: &str) -> Result<Self, HwdbError> {
        let raw: RawFile = toml::from_str(text).map_err(|e| HwdbError::Parse(e.to_string()))?;
        let mut profiles = Vec::with_capacity(raw.profile.len());
        for rp in raw.profile {
            let mut dtypes = BTreeMap::new();
            for (key, peaks) in rp.dtypes {
                let dtype: DataType = key.parse().map_err(|e: RooflineError| HwdbError::Invalid {
                    profile: rp.name.clone(),
                    message: e.to_string(),
                })?;
                dtypes.insert(
                    dtype,
                    UnitPeaks {
                        cuda: peaks.cuda.value()?,
                        tc_dense: peaks.tc_dense.value()?,
                        tc_sparse: peaks.tc_sparse.map(|r| r.value()).transpose()?,
                    },
                );
            }
            profiles.push(HardwareProfile {
                name: rp.name,
                bandwidth: rp.bandwidth.value()?,
                dtypes,
            });
        }
        let file = ProfileFile {
            schema_version: raw.schema_version,
            profiles,
        };
        file.validate()?;
        Ok(file)
    }
}

pub fn load_profiles(path: impl AsRef<Path>) -> Result<ProfileFile, HwdbError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| HwdbError::Read {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    ProfileFile::parse(&text)
}

/// The profiles shipped with the crate.
pub fn builtin() -> ProfileFile {
    ProfileFile::parse(BUILTIN_TOML).expect("built-in profiles are valid")
}

pub fn builtin_a100() -> HardwareProfile {
    builtin()
        .get(BUILTIN_A100)
        .expect("built-in A100 profile")
        .clone()
}

/// Parses `"19.5 TFLOPS"`, `"1935 GB/s"`, `"9.7e12"` and similar into base
/// units. Prefixes are decimal.
pub fn parse_rate(text: &str) -> Result<f64, HwdbError> {
    let bad = || HwdbError::BadRate(text.to_string());
    let s = text.trim();
    let split = s
        .char_indices()
        .find(|&(i, c)| {
            c.is_ascii_alphabetic()
                && !((c == 'e' || c == 'E')
                    && s[i + 1..].starts_with(|n: char| n.is_ascii_digit() || n == '-' || n == '+'))
        })
        .map(|(i, _)| i)
        .unwrap_or(s.len());
    let number: f64 = s[..split].trim().parse().map_err(|_| bad())?;
    let unit = s[split..].trim();
    let lower = unit.to_ascii_lowercase();
    let (prefix, rest) = match lower.chars().next() {
        Some('k') => (1e3, &unit[1..]),
        Some('m') if unit.starts_with('M') => (1e6, &unit[1..]),
        Some('g') => (1e9, &unit[1..]),
        Some('t') => (1e12, &unit[1..]),
        Some('p') => (1e15, &unit[1..]),
        _ => (1.0, unit),
    };
    let rest = rest.to_ascii_lowercase();
    let known = [
        "", "flops", "flop/s", "flop/sec", "b/s", "bytes/s", "byte/s", "bps", "b/sec",
    ];
    if !known.contains(&rest.as_str()) {
        return Err(bad());
    }
    let value = number * prefix;
    if value.is_finite() {
        Ok(value)
    } else {
        Err(bad())
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFile {
    schema_version: u32,
    #[serde(default)]
    profile: Vec<RawProfile>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProfile {
    name: String,
    bandwidth: Rate,
    #[serde(default)]
    dtypes: BTreeMap<String, RawPeaks>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPeaks {
    cuda: Rate,
    tc_dense: Rate,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    tc_sparse: Option<Rate>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(untagged)]
enum Rate {
    Number(f64),
    Text(String),
}

impl Rate {
    fn value(&self) -> Result<f64, HwdbError> {
        match self {
            Rate::Number(v) => Ok(*v),
            Rate::Text(s) => parse_rate(s),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_a100_values() {
        let p = builtin_a100();
        assert_eq!(p.bandwidth, 1.935e12);
        let d = p.peaks(DataType::Double).unwrap();
        assert_eq!((d.cuda, d.tc_dense, d.tc_sparse), (9.7e12, 19.5e12, None));
        let f = p.peaks(DataType::Float).unwrap();
        assert_eq!((f.cuda, f.tc_dense, f.tc_sparse), (19.5e12, 156e12, Some(312e12)));
    }

    #[test]
    fn a100_ridge_points() {
        let p = builtin_a100();
        assert_eq!(ridge_points(&p, DataType::Double).unwrap().rounded(), (5, 10, None));
        let f = ridge_points(&p, DataType::Float).unwrap().rounded();
        assert_eq!((f.1, f.2), (81, Some(161)));
        assert!(matches!(
            ridge_points(&p, DataType::Half),
            Err(HwdbError::MissingDataType { .. })
        ));
    }

    #[test]
    fn unit_ridge_when_peak_equals_bandwidth() {
        let text = r#"
            schema_version = 1
            [[profile]]
            name = "unit"
            bandwidth = 3.0
            [profile.dtypes.double]
            cuda = 3.0
            tc_dense = 3.0
        "#;
        let f = ProfileFile::parse(text).unwrap();
        let r = ridge_points(f.get("unit").unwrap(), DataType::Double).unwrap();
        assert_eq!(r.rounded(), (1, 1, None));
    }

    #[test]
    fn empty_profile_list() {
        let f = ProfileFile::parse("schema_version = 1\n").unwrap();
        assert!(f.profiles.is_empty());
        assert!(matches!(f.get("x"), Err(HwdbError::UnknownProfile(_))));
    }

    #[test]
    fn rejects_bad_files() {
        let negative = r#"
            schema_version = 1
            [[profile]]
            name = "bad"
            bandwidth = -1.0
        "#;
        assert!(matches!(ProfileFile::parse(negative), Err(HwdbError::Invalid { .. })));

        let unknown = r#"
            schema_version = 1
            [[profile]]
            name = "bad"
            bandwidth = 1.0
            clock = "1.4 GHz"
        "#;
        match ProfileFile::parse(unknown) {
            Err(HwdbError::Parse(msg)) => assert!(msg.contains("clock"), "{msg}"),
            other => panic!("{other:?}"),
        }

        let dup = r#"
            schema_version = 1
            [[profile]]
            name = "a"
            bandwidth = 1.0
            [[profile]]
            name = "a"
            bandwidth = 2.0
        "#;
        assert_eq!(ProfileFile::parse(dup), Err(HwdbError::DuplicateName("a".into())));

        let sparse_low = r#"
            schema_version = 1
            [[profile]]
            name = "a"
            bandwidth = 1.0
            [profile.dtypes.float]
            cuda = 1.0
            tc_dense = 4.0
            tc_sparse = 2.0
        "#;
        assert!(matches!(ProfileFile::parse(sparse_low), Err(HwdbError::Invalid { .. })));

        assert_eq!(
            ProfileFile::parse("schema_version = 2\n"),
            Err(HwdbError::SchemaVersion(2))
        );

        match ProfileFile::parse("schema_version = 1\n[[profile]\n") {
            Err(HwdbError::Parse(msg)) => assert!(msg.contains("line 2"), "{msg}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rate_strings() {
        assert_eq!(parse_rate("19.5 TFLOPS").unwrap(), 19.5e12);
        assert_eq!(parse_rate("1935 GB/s").unwrap(), 1.935e12);
        assert_eq!(parse_rate("9.7e12").unwrap(), 9.7e12);
        assert_eq!(parse_rate("2 MFLOP/s").unwrap(), 2e6);
        assert_eq!(parse_rate("1.5 TB/s").unwrap(), 1.5e12);
        assert!(parse_rate("fast").is_err());
        assert!(parse_rate("3 parsecs").is_err());
    }

    #[test]
    fn serialize_round_trip() {
        let f = builtin();
        let text = f.to_toml();
        assert_eq!(ProfileFile::parse(&text).unwrap(), f);
    }
}
