//! Machine-readable reports. Floats are written with 17 significant digits
//! and non-finite values as the strings `"+inf"`, `"-inf"`, `"nan"`, so a
//! report parses back to the same values and identical runs give identical
//! bytes.

use std::fmt;

use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use serde_json::value::RawValue;

use crate::error::{Error, Result};
use crate::linalg::Tolerances;
use crate::oracles::{SelftestSummary, SuiteResult};
use crate::prox::{ConvexFunction, Partition};
use crate::sovf::{
    Certificate, CertifyOptions, FrameSummary, KktCandidate, SsoscResult, SweepPoint, Verdict,
};

pub const TOOL: &str = "ssosc";
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// `f64` with a lossless, deterministic JSON encoding.
#[derive(Debug, Clone, Copy)]
pub struct Real(pub f64);

impl PartialEq for Real {
    fn eq(&self, other: &Self) -> bool {
        self.0.to_bits() == other.0.to_bits() || (self.0.is_nan() && other.0.is_nan())
    }
}

impl From<f64> for Real {
    fn from(v: f64) -> Self {
        Real(v)
    }
}

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let v = self.0;
        if v.is_nan() {
            s.serialize_str("nan")
        } else if v == f64::INFINITY {
            s.serialize_str("+inf")
        } else if v == f64::NEG_INFINITY {
            s.serialize_str("-inf")
        } else {
            let raw =
                RawValue::from_string(format!("{v:.16e}")).map_err(serde::ser::Error::custom)?;
            raw.serialize(s)
        }
    }
}

struct RealVisitor;

impl Visitor<'_> for RealVisitor {
    type Value = Real;

    fn expecting(&self, f: &mut fmt::Formatter) -> fmt::Result {
        f.write_str("a number or one of \"+inf\", \"-inf\", \"nan\"")
    }

    fn visit_f64<E: de::Error>(self, v: f64) -> std::result::Result<Real, E> {
        Ok(Real(v))
    }

    fn visit_i64<E: de::Error>(self, v: i64) -> std::result::Result<Real, E> {
        Ok(Real(v as f64))
    }

    fn visit_u64<E: de::Error>(self, v: u64) -> std::result::Result<Real, E> {
        Ok(Real(v as f64))
    }

    fn visit_str<E: de::Error>(self, v: &str) -> std::result::Result<Real, E> {
        match v {
            "+inf" => Ok(Real(f64::INFINITY)),
            "-inf" => Ok(Real(f64::NEG_INFINITY)),
            "nan" => Ok(Real(f64::NAN)),
            other => Err(E::invalid_value(de::Unexpected::Str(other), &self)),
        }
    }
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        d.deserialize_any(RealVisitor)
    }
}

fn reals(v: impl IntoIterator<Item = f64>) -> Vec<Real> {
    v.into_iter().map(Real).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToleranceReport {
    pub tol_class: Real,
    pub tol_orth: Real,
    pub tol_recon: Real,
    pub tol_pd: Real,
    pub tol_range: Real,
}

impl From<&Tolerances> for ToleranceReport {
    fn from(t: &Tolerances) -> Self {
        Self {
            tol_class: Real(t.tol_class),
            tol_orth: Real(t.tol_orth),
            tol_recon: Real(t.tol_recon),
            tol_pd: Real(t.tol_pd),
            tol_range: Real(t.tol_range),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KktReport {
    pub x: Vec<Real>,
    pub stationarity: Real,
    pub subgradient: Real,
    pub threshold: Real,
    pub valid: bool,
}

impl From<&KktCandidate> for KktReport {
    fn from(k: &KktCandidate) -> Self {
        Self {
            x: reals(k.x.iter().copied()),
            stationarity: Real(k.stationarity),
            subgradient: Real(k.subgradient),
            threshold: Real(k.threshold),
            valid: k.valid,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameReport {
    pub function: ConvexFunction,
    pub values: Vec<Real>,
    pub partition: Partition,
    pub band_active: bool,
}

impl From<&FrameSummary> for FrameReport {
    fn from(f: &FrameSummary) -> Self {
        Self {
            function: f.function,
            values: reals(f.values.iter().copied()),
            partition: f.partition.clone(),
            band_active: f.band_active,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsoscReport {
    pub margin: Real,
    pub holds: bool,
    pub subspace_dim: usize,
    pub threshold: Real,
}

impl From<&SsoscResult> for SsoscReport {
    fn from(s: &SsoscResult) -> Self {
        Self {
            margin: Real(s.margin),
            holds: s.holds,
            subspace_dim: s.subspace_dim,
            threshold: Real(s.threshold),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub sigma: Real,
    pub min_eig: Real,
    pub pd: bool,
    pub elements_tested: usize,
    pub exhaustive: bool,
}

impl From<&SweepPoint> for SweepReport {
    fn from(p: &SweepPoint) -> Self {
        Self {
            sigma: Real(p.sigma),
            min_eig: Real(p.min_eig),
            pd: p.pd,
            elements_tested: p.elements_tested,
            exhaustive: p.exhaustive,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub name: String,
    pub trials: usize,
    pub passed: usize,
    pub flagged: usize,
    pub worst: Real,
    pub tolerance: Real,
    pub pass: bool,
}

impl From<&SuiteResult> for SuiteReport {
    fn from(s: &SuiteResult) -> Self {
        Self {
            name: s.name.clone(),
            trials: s.trials,
            passed: s.passed,
            flagged: s.flagged,
            worst: Real(s.worst),
            tolerance: Real(s.tolerance),
            pass: s.pass,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelftestReport {
    pub trials: usize,
    pub suites: Vec<SuiteReport>,
    pub all_pass: bool,
}

/// One report per command run. Sections a command does not produce are
/// omitted from the JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportFile {
    pub tool: String,
    pub version: String,
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_hash: Option<String>,
    pub seed: u64,
    pub tolerances: ToleranceReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma_grid: Option<Vec<Real>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kkt: Option<KktReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frame: Option<FrameReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<Real>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ssosc: Option<SsoscReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<Vec<SweepReport>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equivalence_verdict: Option<Verdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling_exhaustive: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub selftest: Option<SelftestReport>,
}

impl ReportFile {
    pub fn new(command: &str, seed: u64, tol: &Tolerances) -> Self {
        Self {
            tool: TOOL.to_string(),
            version: VERSION.to_string(),
            command: command.to_string(),
            input_hash: None,
            seed,
            tolerances: tol.into(),
            sigma_grid: None,
            budget: None,
            kkt: None,
            frame: None,
            gamma: None,
            ssosc: None,
            sweep: None,
            equivalence_verdict: None,
            sampling_exhaustive: None,
            selftest: None,
        }
    }

    pub fn with_options(mut self, opts: &CertifyOptions) -> Self {
        self.sigma_grid = Some(reals(opts.sigma_grid.iter().copied()));
        self.budget = Some(opts.budget);
        self
    }

    pub fn with_sweep(mut self, sweep: &[SweepPoint]) -> Self {
        self.sweep = Some(sweep.iter().map(SweepReport::from).collect());
        self.sampling_exhaustive = Some(sweep.iter().all(|p| p.exhaustive));
        self
    }

    pub fn with_certificate(mut self, cert: &Certificate) -> Self {
        self.kkt = Some((&cert.kkt).into());
        self.frame = Some((&cert.frame).into());
        self.ssosc = Some((&cert.ssosc).into());
        self = self.with_sweep(&cert.sweep);
        self.equivalence_verdict = Some(cert.verdict);
        self
    }

    pub fn with_selftest(mut self, trials: usize, summary: &SelftestSummary) -> Self {
        self.selftest = Some(SelftestReport {
            trials,
            suites: summary.suites.iter().map(SuiteReport::from).collect(),
            all_pass: summary.all_pass,
        });
        self
    }
}

/// Pretty-printed JSON with a trailing newline; keys in declaration order.
pub fn emit_report(report: &ReportFile) -> Result<String> {
    let mut s = serde_json::to_string_pretty(report)
        .map_err(|e| Error::InvalidArgument(format!("report serialization failed: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub fn parse_report(text: &str) -> Result<ReportFile> {
    serde_json::from_str(text)
        .map_err(|e| Error::InvalidArgument(format!("report parse failed: {e}")))
}
