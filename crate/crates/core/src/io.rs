//! JSON problem files.
//!
//! ```json
//! {"n":1,"m":1,"grid":{"t0":0.0,"T":1.0,"steps":1000},"marks":[],
//!  "A":{"const":[[0.0]]}, ..., "F":[], "G":[], "f":[],
//!  "b":{"const":[0.0]}, ..., "H":[[1.0]], "g":[0.0], "x0":[1.0]}
//! ```
//!
//! Matrix paths are `{"const": [[...]]}` or `{"sampled": [[[...]]...]}` with one
//! sample per grid point; vector paths are `{"const": [...]}` or
//! `{"sampled": [[...]...]}`. `F`, `G` and `f` are arrays indexed like `marks`.

#![allow(non_snake_case)]

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::problem::{CoefficientPath, JumpMeasure, Mark, MatrixPath, ProblemSpec, TimeGrid, VectorPath};

type Rows = Vec<Vec<f64>>;

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
enum MatrixPathDoc {
    Const(Rows),
    Sampled(Vec<Rows>),
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
enum VectorPathDoc {
    Const(Vec<f64>),
    Sampled(Vec<Vec<f64>>),
}

#[derive(Serialize, Deserialize)]
struct GridDoc {
    t0: f64,
    T: f64,
    steps: usize,
}

#[derive(Serialize, Deserialize)]
struct MarkDoc {
    id: String,
    pi: f64,
}

#[derive(Serialize, Deserialize)]
struct ProblemDoc {
    n: usize,
    m: usize,
    grid: GridDoc,
    marks: Vec<MarkDoc>,
    A: MatrixPathDoc,
    B: MatrixPathDoc,
    C: MatrixPathDoc,
    D: MatrixPathDoc,
    F: Vec<MatrixPathDoc>,
    G: Vec<MatrixPathDoc>,
    b: VectorPathDoc,
    sigma: VectorPathDoc,
    f: Vec<VectorPathDoc>,
    Q: MatrixPathDoc,
    S: MatrixPathDoc,
    R: MatrixPathDoc,
    q: VectorPathDoc,
    rho: VectorPathDoc,
    H: Rows,
    g: Vec<f64>,
    x0: Vec<f64>,
}

fn to_rows(m: &Matrix) -> Rows {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn from_rows(field: &str, rows: Rows) -> Result<Matrix> {
    let r = rows.len();
    let c = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|row| row.len() != c) {
        return Err(Error::Schema(format!("{field} (ragged rows)")));
    }
    Ok(Matrix::from_row_iterator(r, c, rows.into_iter().flatten()))
}

impl MatrixPathDoc {
    fn from_path(p: &MatrixPath) -> Self {
        match p {
            CoefficientPath::Constant(m) => MatrixPathDoc::Const(to_rows(m)),
            CoefficientPath::Sampled(s) => MatrixPathDoc::Sampled(s.iter().map(to_rows).collect()),
        }
    }

    fn into_path(self, field: &str) -> Result<MatrixPath> {
        Ok(match self {
            MatrixPathDoc::Const(r) => CoefficientPath::Constant(from_rows(field, r)?),
            MatrixPathDoc::Sampled(s) => CoefficientPath::Sampled(
                s.into_iter().map(|r| from_rows(field, r)).collect::<Result<_>>()?,
            ),
        })
    }
}

impl VectorPathDoc {
    fn from_path(p: &VectorPath) -> Self {
        match p {
            CoefficientPath::Constant(v) => VectorPathDoc::Const(v.iter().copied().collect()),
            CoefficientPath::Sampled(s) => {
                VectorPathDoc::Sampled(s.iter().map(|v| v.iter().copied().collect()).collect())
            }
        }
    }

    fn into_path(self) -> VectorPath {
        match self {
            VectorPathDoc::Const(v) => CoefficientPath::Constant(Vector::from_vec(v)),
            VectorPathDoc::Sampled(s) => CoefficientPath::Sampled(s.into_iter().map(Vector::from_vec).collect()),
        }
    }
}

fn map_json_err(e: serde_json::Error) -> Error {
    use serde_json::error::Category;
    match e.classify() {
        Category::Data => {
            let msg = e.to_string();
            if let Some(rest) = msg.strip_prefix("missing field `") {
                if let Some(end) = rest.find('`') {
                    return Error::Schema(rest[..end].to_string());
                }
            }
            Error::Schema(msg)
        }
        _ => Error::Parse(format!("{e} (line {}, column {})", e.line(), e.column())),
    }
}

/// Parses a problem document. Does not validate.
pub fn load_spec_str(doc: &str) -> Result<ProblemSpec> {
    let d: ProblemDoc = serde_json::from_str(doc).map_err(map_json_err)?;
    Ok(ProblemSpec {
        n: d.n,
        m: d.m,
        grid: TimeGrid::new(d.grid.t0, d.grid.T, d.grid.steps),
        jumps: JumpMeasure {
            marks: d.marks.into_iter().map(|m| Mark { id: m.id, pi: m.pi }).collect(),
        },
        A: d.A.into_path("A")?,
        B: d.B.into_path("B")?,
        C: d.C.into_path("C")?,
        D: d.D.into_path("D")?,
        F: d.F.into_iter().map(|p| p.into_path("F")).collect::<Result<_>>()?,
        G: d.G.into_iter().map(|p| p.into_path("G")).collect::<Result<_>>()?,
        b: d.b.into_path(),
        sigma: d.sigma.into_path(),
        f: d.f.into_iter().map(VectorPathDoc::into_path).collect(),
        Q: d.Q.into_path("Q")?,
        S: d.S.into_path("S")?,
        R: d.R.into_path("R")?,
        q: d.q.into_path(),
        rho: d.rho.into_path(),
        H: from_rows("H", d.H)?,
        g: Vector::from_vec(d.g),
        x0: Vector::from_vec(d.x0),
    })
}

pub fn load_spec(path: impl AsRef<Path>) -> Result<ProblemSpec> {
    let text = std::fs::read_to_string(path)?;
    load_spec_str(&text)
}

/// Serializes a problem. Floats are written in shortest round-trip form, so
/// `load_spec_str(&save_spec(p))` reproduces every entry bit-exactly.
pub fn save_spec(spec: &ProblemSpec) -> Result<String> {
    if let Some(bad) = spec.violations().into_iter().find(|v| v.message.contains("non-finite")) {
        return Err(Error::Schema(format!("{} (non-finite values cannot be written)", bad.field)));
    }
    let doc = ProblemDoc {
        n: spec.n,
        m: spec.m,
        grid: GridDoc {
            t0: spec.grid.t0,
            T: spec.grid.t_end,
            steps: spec.grid.steps,
        },
        marks: spec
            .jumps
            .marks
            .iter()
            .map(|m| MarkDoc {
                id: m.id.clone(),
                pi: m.pi,
            })
            .collect(),
        A: MatrixPathDoc::from_path(&spec.A),
        B: MatrixPathDoc::from_path(&spec.B),
        C: MatrixPathDoc::from_path(&spec.C),
        D: MatrixPathDoc::from_path(&spec.D),
        F: spec.F.iter().map(MatrixPathDoc::from_path).collect(),
        G: spec.G.iter().map(MatrixPathDoc::from_path).collect(),
        b: VectorPathDoc::from_path(&spec.b),
        sigma: VectorPathDoc::from_path(&spec.sigma),
        f: spec.f.iter().map(VectorPathDoc::from_path).collect(),
        Q: MatrixPathDoc::from_path(&spec.Q),
        S: MatrixPathDoc::from_path(&spec.S),
        R: MatrixPathDoc::from_path(&spec.R),
        q: VectorPathDoc::from_path(&spec.q),
        rho: VectorPathDoc::from_path(&spec.rho),
        H: to_rows(&spec.H),
        g: spec.g.iter().copied().collect(),
        x0: spec.x0.iter().copied().collect(),
    };
    serde_json::to_string_pretty(&doc).map_err(|e| Error::Parse(e.to_string()))
}
