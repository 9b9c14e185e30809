//! JSON form of sets: `{"type": "zonotope", "center", "generators"}`,
//! `{"type": "hpolytope", "H", "h"}` or `{"type": "box", "lo", "hi"}`.
//! Matrices are lists of rows.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{HPolytope, MatrixZonotope, Set, Zonotope};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum SetJson {
    Zonotope {
        center: Vec<f64>,
        generators: Vec<Vec<f64>>,
    },
    Hpolytope {
        #[serde(rename = "H")]
        h_mat: Vec<Vec<f64>>,
        h: Vec<f64>,
    },
    Box {
        lo: Vec<f64>,
        hi: Vec<f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixZonotopeJson {
    pub center: Vec<Vec<f64>>,
    pub generators: Vec<Vec<Vec<f64>>>,
}

pub fn vec_to_json<T: Scalar>(v: &DVector<T>) -> Vec<f64> {
    v.iter().map(|x| x.as_f64()).collect()
}

pub fn vec_from_json<T: Scalar>(v: &[f64]) -> DVector<T> {
    DVector::from_iterator(v.len(), v.iter().map(|&x| T::lit(x)))
}

pub fn mat_to_json<T: Scalar>(m: &DMatrix<T>) -> Vec<Vec<f64>> {
    m.row_iter()
        .map(|r| r.iter().map(|x| x.as_f64()).collect())
        .collect()
}

/// Rows to matrix; `cols` disambiguates an empty row list.
pub fn mat_from_json<T: Scalar>(rows: &[Vec<f64>], cols: usize) -> Result<DMatrix<T>> {
    let cols = rows.first().map_or(cols, |r| r.len());
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::invalid("ragged matrix rows"));
    }
    Ok(DMatrix::from_fn(rows.len(), cols, |i, j| {
        T::lit(rows[i][j])
    }))
}

impl SetJson {
    pub fn from_set<T: Scalar>(s: &Set<T>) -> Self {
        match s {
            Set::Zonotope(z) => SetJson::Zonotope {
                center: vec_to_json(z.center()),
                generators: mat_to_json(z.generators()),
            },
            Set::HPolytope(p) => SetJson::Hpolytope {
                h_mat: mat_to_json(p.h_mat()),
                h: vec_to_json(p.h_vec()),
            },
        }
    }

    pub fn to_set<T: Scalar>(&self) -> Result<Set<T>> {
        match self {
            SetJson::Zonotope { center, generators } => {
                let n = center.len();
                let g = if generators.is_empty() {
                    DMatrix::zeros(n, 0)
                } else {
                    mat_from_json(generators, 0)?
                };
                Ok(Set::Zonotope(Zonotope::new(vec_from_json(center), g)?))
            }
            SetJson::Hpolytope { h_mat, h } => {
                let m = mat_from_json(h_mat, 0)?;
                Ok(Set::HPolytope(HPolytope::new(m, vec_from_json(h))?))
            }
            SetJson::Box { lo, hi } => Ok(Set::Zonotope(Zonotope::from_box(
                &vec_from_json(lo),
                &vec_from_json(hi),
            )?)),
        }
    }

    pub fn to_zonotope<T: Scalar>(&self) -> Result<Zonotope<T>> {
        match self.to_set()? {
            Set::Zonotope(z) => Ok(z),
            Set::HPolytope(_) => Err(Error::invalid("expected a zonotope or box")),
        }
    }

    /// Any representation as halfspaces.
    pub fn to_hpolytope<T: Scalar>(&self) -> Result<HPolytope<T>> {
        match self {
            SetJson::Box { lo, hi } => HPolytope::from_box(&vec_from_json(lo), &vec_from_json(hi)),
            _ => self.to_set()?.to_hpolytope(),
        }
    }
}

impl<T: Scalar> From<&Zonotope<T>> for SetJson {
    fn from(z: &Zonotope<T>) -> Self {
        SetJson::from_set(&Set::Zonotope(z.clone()))
    }
}

impl<T: Scalar> From<&HPolytope<T>> for SetJson {
    fn from(p: &HPolytope<T>) -> Self {
        SetJson::from_set(&Set::HPolytope(p.clone()))
    }
}

impl MatrixZonotopeJson {
    pub fn from_mz<T: Scalar>(m: &MatrixZonotope<T>) -> Self {
        Self {
            center: mat_to_json(m.center()),
            generators: m.generators().iter().map(mat_to_json).collect(),
        }
    }

    pub fn to_mz<T: Scalar>(&self) -> Result<MatrixZonotope<T>> {
        let c: DMatrix<T> = mat_from_json(&self.center, 0)?;
        let gens = self
            .generators
            .iter()
            .map(|g| mat_from_json(g, c.ncols()))
            .collect::<Result<Vec<_>>>()?;
        MatrixZonotope::new(c, gens)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let z = Zonotope::new(
            DVector::from_row_slice(&[1.0, 2.0]),
            DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.5, 0.0, 1.0, -0.5]),
        )
        .unwrap();
        let j = serde_json::to_string(&SetJson::from(&z)).unwrap();
        assert!(j.contains("\"type\":\"zonotope\""));
        let back: SetJson = serde_json::from_str(&j).unwrap();
        assert_eq!(back.to_zonotope::<f64>().unwrap(), z);
        let bx: SetJson =
            serde_json::from_str(r#"{"type":"box","lo":[-1,-2],"hi":[1,2]}"#).unwrap();
        let p = bx.to_hpolytope::<f64>().unwrap();
        assert!(p.contains_point(&DVector::from_row_slice(&[1.0, -2.0])));
    }
}
