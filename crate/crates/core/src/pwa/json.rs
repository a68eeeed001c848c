//! JSON documents for systems and polytopes. Matrices are written as flat
//! row-major arrays; nested row arrays are accepted on input.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{Polytope, PwaError, PwaMode, PwaSystem};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum MatrixDoc {
    Flat(Vec<f64>),
    Nested(Vec<Vec<f64>>),
}

impl MatrixDoc {
    fn flat(m: &DMatrix<f64>) -> Self {
        let mut out = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            out.extend(m.row(i).iter());
        }
        MatrixDoc::Flat(out)
    }

    fn into_matrix(self, name: &str, rows: usize, cols: usize) -> Result<DMatrix<f64>, PwaError> {
        let data: Vec<f64> = match self {
            MatrixDoc::Flat(v) => v,
            MatrixDoc::Nested(rs) => {
                if rs.len() != rows || rs.iter().any(|r| r.len() != cols) {
                    return Err(PwaError::Document(format!("{name} must be {rows}x{cols}")));
                }
                rs.into_iter().flatten().collect()
            }
        };
        if data.len() != rows * cols {
            return Err(PwaError::Document(format!(
                "{name} has {} entries, expected {rows}x{cols}",
                data.len()
            )));
        }
        Ok(DMatrix::from_row_slice(rows, cols, &data))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct ModeDoc {
    #[serde(rename = "A")]
    a: MatrixDoc,
    #[serde(rename = "B")]
    b: MatrixDoc,
    c: Vec<f64>,
    #[serde(rename = "guard_H")]
    guard_h: MatrixDoc,
    #[serde(rename = "guard_J")]
    guard_j: MatrixDoc,
    guard_k: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub(crate) struct SystemDoc {
    modes: Vec<ModeDoc>,
    n_x: usize,
    n_u: usize,
    dt: f64,
    x_min: Vec<f64>,
    x_max: Vec<f64>,
    u_min: Vec<f64>,
    u_max: Vec<f64>,
}

impl From<&PwaSystem> for SystemDoc {
    fn from(s: &PwaSystem) -> Self {
        SystemDoc {
            modes: s
                .modes()
                .iter()
                .map(|m| ModeDoc {
                    a: MatrixDoc::flat(&m.a),
                    b: MatrixDoc::flat(&m.b),
                    c: m.c.iter().copied().collect(),
                    guard_h: MatrixDoc::flat(&m.guard_h),
                    guard_j: MatrixDoc::flat(&m.guard_j),
                    guard_k: m.guard_k.iter().copied().collect(),
                })
                .collect(),
            n_x: s.n_x(),
            n_u: s.n_u(),
            dt: s.dt(),
            x_min: s.x_min().iter().copied().collect(),
            x_max: s.x_max().iter().copied().collect(),
            u_min: s.u_min().iter().copied().collect(),
            u_max: s.u_max().iter().copied().collect(),
        }
    }
}

impl TryFrom<SystemDoc> for PwaSystem {
    type Error = PwaError;

    fn try_from(doc: SystemDoc) -> Result<Self, PwaError> {
        let (nx, nu) = (doc.n_x, doc.n_u);
        let vec = |name: &str, v: Vec<f64>, len: usize| {
            if v.len() == len {
                Ok(DVector::from_vec(v))
            } else {
                Err(PwaError::Document(format!("{name} has length {}, expected {len}", v.len())))
            }
        };
        let mut modes = Vec::with_capacity(doc.modes.len());
        for m in doc.modes {
            let ng = m.guard_k.len();
            modes.push(PwaMode {
                a: m.a.into_matrix("A", nx, nx)?,
                b: m.b.into_matrix("B", nx, nu)?,
                c: vec("c", m.c, nx)?,
                guard_h: m.guard_h.into_matrix("guard_H", ng, nx)?,
                guard_j: m.guard_j.into_matrix("guard_J", ng, nu)?,
                guard_k: DVector::from_vec(m.guard_k),
            });
        }
        PwaSystem::new(
            modes,
            (vec("x_min", doc.x_min, nx)?, vec("x_max", doc.x_max, nx)?),
            (vec("u_min", doc.u_min, nu)?, vec("u_max", doc.u_max, nu)?),
            doc.dt,
        )
    }
}

impl Serialize for PwaSystem {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        SystemDoc::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for PwaSystem {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let doc = SystemDoc::deserialize(d)?;
        PwaSystem::try_from(doc).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PolytopeDoc {
    #[serde(rename = "F")]
    f: MatrixDoc,
    g: Vec<f64>,
    /// Column count; only needed when `g` is empty.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n_x: Option<usize>,
}

impl Serialize for Polytope {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        PolytopeDoc {
            f: MatrixDoc::flat(&self.f),
            g: self.g.iter().copied().collect(),
            n_x: self.g.is_empty().then_some(self.f.ncols()),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for Polytope {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let doc = PolytopeDoc::deserialize(d)?;
        let rows = doc.g.len();
        let cols = match (&doc.f, doc.n_x) {
            (_, Some(n)) => n,
            (MatrixDoc::Nested(rs), None) => rs.first().map_or(0, Vec::len),
            (MatrixDoc::Flat(v), None) if rows > 0 => v.len() / rows,
            (MatrixDoc::Flat(_), None) => 0,
        };
        let f = doc.f.into_matrix("F", rows, cols).map_err(serde::de::Error::custom)?;
        Polytope::new(f, DVector::from_vec(doc.g)).map_err(serde::de::Error::custom)
    }
}
