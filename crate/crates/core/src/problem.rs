//! JSON problem files: one composite problem plus one KKT candidate.
//!
//! ```json
//! {
//!   "n": 1,
//!   "f0": {"Q": [[1.0]], "c": [0.0], "const": 0.0},
//!   "F": {"A0": [[0.0]], "A": [[[1.0]]]},
//!   "g": {"kind": "psd_indicator", "m": 1},
//!   "candidate": {"x": [0.0], "u": [[0.0]]}
//! }
//! ```

use std::path::Path;

use serde_json::{Map, Value};
use sha2::{Digest, Sha256};

use crate::error::{input_err, Error, Result};
use crate::linalg::{Matrix, Tolerances, Vector};
use crate::prox::ConvexFunction;
use crate::sovf::{CompositeProblem, KktCandidate};

#[derive(Debug, Clone)]
pub struct ProblemFile {
    pub problem: CompositeProblem,
    pub candidate: KktCandidate,
    /// Hex SHA-256 of the raw file bytes.
    pub input_hash: String,
}

pub fn input_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn field<'a>(obj: &'a Map<String, Value>, prefix: &str, key: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| input_err(join(prefix, key), "missing key"))
}

fn join(prefix: &str, key: &str) -> String {
    if prefix.is_empty() {
        key.to_string()
    } else {
        format!("{prefix}.{key}")
    }
}

fn object<'a>(v: &'a Value, key: &str) -> Result<&'a Map<String, Value>> {
    v.as_object()
        .ok_or_else(|| input_err(key, "expected an object"))
}

fn number(v: &Value, key: &str) -> Result<f64> {
    v.as_f64()
        .ok_or_else(|| input_err(key, "expected a number"))
}

fn count(v: &Value, key: &str) -> Result<usize> {
    v.as_u64()
        .map(|n| n as usize)
        .ok_or_else(|| input_err(key, "expected a non-negative integer"))
}

fn vector(v: &Value, key: &str) -> Result<Vector> {
    let items = v
        .as_array()
        .ok_or_else(|| input_err(key, "expected an array of numbers"))?;
    let vals = items
        .iter()
        .enumerate()
        .map(|(i, x)| number(x, &format!("{key}[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    Ok(Vector::from_vec(vals))
}

/// Row-major array of arrays.
pub fn matrix(v: &Value, key: &str) -> Result<Matrix> {
    let rows = v
        .as_array()
        .ok_or_else(|| input_err(key, "expected an array of rows"))?;
    if rows.is_empty() {
        return Err(input_err(key, "empty matrix"));
    }
    let parsed = rows
        .iter()
        .enumerate()
        .map(|(i, r)| vector(r, &format!("{key}[{i}]")))
        .collect::<Result<Vec<_>>>()?;
    let cols = parsed[0].len();
    if let Some(i) = parsed.iter().position(|r| r.len() != cols) {
        return Err(input_err(
            key,
            format!("row {i} has {} entries, row 0 has {cols}", parsed[i].len()),
        ));
    }
    Ok(Matrix::from_fn(parsed.len(), cols, |i, j| parsed[i][j]))
}

fn convex_function(v: &Value) -> Result<ConvexFunction> {
    let obj = object(v, "g")?;
    let kind = field(obj, "g", "kind")?
        .as_str()
        .ok_or_else(|| input_err("g.kind", "expected a string"))?;
    let g = match kind {
        "psd_indicator" => ConvexFunction::PsdIndicator {
            m: count(field(obj, "g", "m")?, "g.m")?,
        },
        "nuclear_norm" => ConvexFunction::NuclearNorm {
            p: count(field(obj, "g", "p")?, "g.p")?,
            q: count(field(obj, "g", "q")?, "g.q")?,
        },
        other => {
            return Err(input_err(
                "g.kind",
                format!("unknown kind `{other}` (expected psd_indicator or nuclear_norm)"),
            ))
        }
    };
    g.validate().map_err(|e| input_err("g", e.to_string()))?;
    Ok(g)
}

/// Parses and validates a problem document, then evaluates the candidate's
/// KKT residuals under `tol`. The candidate is not required to be valid here.
pub fn parse_problem(bytes: &[u8], tol: &Tolerances) -> Result<ProblemFile> {
    let doc: Value = serde_json::from_slice(bytes)
        .map_err(|e| input_err("<document>", format!("invalid JSON: {e}")))?;
    let root = object(&doc, "<document>")?;
    let n = count(field(root, "", "n")?, "n")?;

    let f0 = object(field(root, "", "f0")?, "f0")?;
    let q = matrix(field(f0, "f0", "Q")?, "f0.Q")?;
    let c = vector(field(f0, "f0", "c")?, "f0.c")?;
    let constant = match f0.get("const") {
        Some(v) => number(v, "f0.const")?,
        None => 0.0,
    };
    if c.len() != n {
        return Err(input_err(
            "f0.c",
            format!("expected length n = {n}, found {}", c.len()),
        ));
    }

    let fobj = object(field(root, "", "F")?, "F")?;
    let a0 = matrix(field(fobj, "F", "A0")?, "F.A0")?;
    let a = field(fobj, "F", "A")?
        .as_array()
        .ok_or_else(|| input_err("F.A", "expected an array of matrices"))?
        .iter()
        .enumerate()
        .map(|(i, m)| matrix(m, &format!("F.A[{i}]")))
        .collect::<Result<Vec<_>>>()?;

    let g = convex_function(field(root, "", "g")?)?;
    let problem = CompositeProblem::new(q, c, constant, a0, a, g)?;

    let cand = object(field(root, "", "candidate")?, "candidate")?;
    let x = vector(field(cand, "candidate", "x")?, "candidate.x")?;
    if x.len() != n {
        return Err(input_err(
            "candidate.x",
            format!("expected length n = {n}, found {}", x.len()),
        ));
    }
    let u = matrix(field(cand, "candidate", "u")?, "candidate.u")?;
    if u.shape() != g.shape() {
        let (r, c) = g.shape();
        return Err(input_err(
            "candidate.u",
            format!("expected {r}x{c}, found {}x{}", u.nrows(), u.ncols()),
        ));
    }
    let candidate = KktCandidate::evaluate(&problem, x, u, tol)
        .map_err(|e| input_err("candidate", e.to_string()))?;
    Ok(ProblemFile {
        problem,
        candidate,
        input_hash: input_hash(bytes),
    })
}

pub fn read_problem(path: &Path, tol: &Tolerances) -> Result<ProblemFile> {
    let bytes = std::fs::read(path).map_err(|e| Error::Input {
        key: "--problem".into(),
        message: format!("cannot read {}: {e}", path.display()),
    })?;
    parse_problem(&bytes, tol)
}

/// Direction for Γ: either `{"d": [...]}` in decision space, mapped through
/// `F'`, or `{"Y": matrix}` given directly.
pub fn parse_direction(bytes: &[u8], problem: &CompositeProblem) -> Result<Matrix> {
    let doc: Value = serde_json::from_slice(bytes)
        .map_err(|e| input_err("<direction>", format!("invalid JSON: {e}")))?;
    let obj = object(&doc, "<direction>")?;
    match (obj.get("d"), obj.get("Y")) {
        (Some(d), None) => {
            let d = vector(d, "d")?;
            if d.len() != problem.n() {
                return Err(input_err(
                    "d",
                    format!("expected length n = {}, found {}", problem.n(), d.len()),
                ));
            }
            let (r, c) = problem.g().shape();
            Ok(problem
                .a()
                .iter()
                .zip(d.iter())
                .fold(Matrix::zeros(r, c), |acc, (ai, &di)| acc + ai * di))
        }
        (None, Some(y)) => {
            let y = matrix(y, "Y")?;
            if y.shape() != problem.g().shape() {
                let (r, c) = problem.g().shape();
                return Err(input_err(
                    "Y",
                    format!("expected {r}x{c}, found {}x{}", y.nrows(), y.ncols()),
                ));
            }
            Ok(y)
        }
        _ => Err(input_err(
            "<direction>",
            "expected exactly one of `d` or `Y`",
        )),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SCALAR: &str = r#"{
        "n": 1,
        "f0": {"Q": [[1.0]], "c": [0.0], "const": 0.0},
        "F": {"A0": [[0.0]], "A": [[[1.0]]]},
        "g": {"kind": "psd_indicator", "m": 1},
        "candidate": {"x": [0.0], "u": [[0.0]]}
    }"#;

    fn parse(s: &str) -> Result<ProblemFile> {
        parse_problem(s.as_bytes(), &Tolerances::default())
    }

    fn key_of(e: Error) -> String {
        match e {
            Error::Input { key, .. } => key,
            other => panic!("expected input error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_scalar_file() {
        let p = parse(SCALAR).unwrap();
        assert_eq!(p.problem.n(), 1);
        assert!(p.candidate.valid);
        assert_eq!(p.input_hash.len(), 64);
    }

    #[test]
    fn const_defaults_to_zero() {
        let p = parse(&SCALAR.replace(r#", "const": 0.0"#, "")).unwrap();
        assert_eq!(p.problem.constant(), 0.0);
    }

    #[test]
    fn unknown_kind() {
        let s = SCALAR.replace(r#""kind": "psd_indicator", "m": 1"#, r#""kind": "box""#);
        assert_eq!(key_of(parse(&s).unwrap_err()), "g.kind");
    }

    #[test]
    fn asymmetric_constraint_matrix_names_index() {
        let s = r#"{
            "n": 2,
            "f0": {"Q": [[1,0],[0,1]], "c": [0,0]},
            "F": {"A0": [[0,0],[0,0]], "A": [[[1,0],[0,0]], [[0,1],[1.001,0]]]},
            "g": {"kind": "psd_indicator", "m": 2},
            "candidate": {"x": [0,0], "u": [[0,0],[0,0]]}
        }"#;
        assert_eq!(key_of(parse(s).unwrap_err()), "F.A[1]");
    }

    #[test]
    fn missing_and_mismatched_keys() {
        assert_eq!(
            key_of(parse(&SCALAR.replace(r#""c": [0.0], "#, "")).unwrap_err()),
            "f0.c"
        );
        assert_eq!(
            key_of(parse(&SCALAR.replace(r#""x": [0.0]"#, r#""x": [0.0, 1.0]"#)).unwrap_err()),
            "candidate.x"
        );
        assert_eq!(
            key_of(parse(&SCALAR.replace(r#""Q": [[1.0]]"#, r#""Q": [[1.0, 0.0]]"#)).unwrap_err()),
            "f0.Q"
        );
        assert_eq!(
            key_of(parse(&SCALAR.replace(r#""n": 1"#, r#""n": 2"#)).unwrap_err()),
            "f0.c"
        );
        assert_eq!(key_of(parse("[1, 2]").unwrap_err()), "<document>");
        assert_eq!(key_of(parse("{").unwrap_err()), "<document>");
    }

    #[test]
    fn ragged_matrix() {
        let s = SCALAR.replace(r#""A0": [[0.0]]"#, r#""A0": [[0.0], [1.0, 2.0]]"#);
        assert_eq!(key_of(parse(&s).unwrap_err()), "F.A0");
    }

    #[test]
    fn invalid_candidate_still_parses() {
        let p = parse(&SCALAR.replace(r#""x": [0.0]"#, r#""x": [1.0]"#)).unwrap();
        assert!(!p.candidate.valid);
    }

    #[test]
    fn directions() {
        let p = parse(SCALAR).unwrap();
        let y = parse_direction(br#"{"d": [2.0]}"#, &p.problem).unwrap();
        assert_eq!(y[(0, 0)], 2.0);
        let y = parse_direction(br#"{"Y": [[3.0]]}"#, &p.problem).unwrap();
        assert_eq!(y[(0, 0)], 3.0);
        assert!(parse_direction(br#"{"d": [1.0], "Y": [[1.0]]}"#, &p.problem).is_err());
        assert!(parse_direction(br#"{"Y": [[1.0, 2.0]]}"#, &p.problem).is_err());
    }
}
