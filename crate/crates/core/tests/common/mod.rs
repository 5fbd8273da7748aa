#![allow(dead_code)]

use std::path::PathBuf;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(format!("{name}.json"))
}

/// name, SSOSC holds, expected margin (`None` for +inf)
pub const FIXTURES: [(&str, bool, Option<f64>); 14] = [
    ("scalar_holds", true, Some(1.0)),
    ("scalar_fails", false, Some(-1.0)),
    ("scalar_vacuous", true, None),
    ("psd2_holds", true, Some(1.0)),
    ("psd2_fails", false, Some(-1.0)),
    ("psd2_vacuous", true, None),
    ("psd3_holds", true, Some(0.5)),
    ("psd3_fails", false, Some(-0.5)),
    ("psd3_coupled_holds", true, Some(0.176_393_202_250_021)),
    ("nuclear_n1_holds", true, Some(0.25)),
    ("nuclear_n1_fails", false, Some(-0.25)),
    ("nuclear_n1_vacuous", true, None),
    (
        "nuclear_n1_coupled_holds",
        true,
        Some(0.189_022_777_135_355_6),
    ),
    ("nuclear_boundary_holds", true, Some(0.5)),
];
