use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;

use super::zonotope::Zonotope;

/// `{C + Σ βᵢ Gᵢ : |βᵢ| ≤ 1}` over `n × p` matrices.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixZonotope<T: Scalar = f64> {
    center: DMatrix<T>,
    generators: Vec<DMatrix<T>>,
}

impl<T: Scalar> MatrixZonotope<T> {
    pub fn new(center: DMatrix<T>, generators: Vec<DMatrix<T>>) -> Result<Self> {
        for g in &generators {
            check_dim(center.nrows(), g.nrows())?;
            check_dim(center.ncols(), g.ncols())?;
        }
        if center
            .iter()
            .chain(generators.iter().flat_map(|g| g.iter()))
            .any(|v| !v.is_finite())
        {
            return Err(Error::invalid("matrix zonotope entries must be finite"));
        }
        Ok(Self { center, generators })
    }

    pub fn singleton(center: DMatrix<T>) -> Self {
        Self {
            center,
            generators: Vec::new(),
        }
    }

    pub fn center(&self) -> &DMatrix<T> {
        &self.center
    }

    pub fn generators(&self) -> &[DMatrix<T>] {
        &self.generators
    }

    pub fn num_generators(&self) -> usize {
        self.generators.len()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.center.shape()
    }

    /// `{Mv : M ∈ self}` as a vector zonotope.
    pub fn map(&self, v: &DVector<T>) -> Result<Zonotope<T>> {
        check_dim(self.center.ncols(), v.len())?;
        let n = self.center.nrows();
        let mut g = DMatrix::zeros(n, self.generators.len());
        for (i, gi) in self.generators.iter().enumerate() {
            g.set_column(i, &(gi * v));
        }
        Zonotope::new(&self.center * v, g)
    }

    /// The same set as a zonotope over column-major `vec(M)`.
    pub fn vectorized(&self) -> Zonotope<T> {
        let len = self.center.len();
        let c = DVector::from_column_slice(self.center.as_slice());
        let mut g = DMatrix::zeros(len, self.generators.len());
        for (i, gi) in self.generators.iter().enumerate() {
            g.set_column(i, &DVector::from_column_slice(gi.as_slice()));
        }
        Zonotope::new(c, g).expect("finite by construction")
    }

    fn from_vectorized(z: &Zonotope<T>, rows: usize, cols: usize) -> Self {
        let center = DMatrix::from_column_slice(rows, cols, z.center().as_slice());
        let generators = z
            .generators()
            .column_iter()
            .map(|c| DMatrix::from_column_slice(rows, cols, c.as_slice()))
            .collect();
        Self { center, generators }
    }

    /// LP membership test for a concrete matrix.
    pub fn contains(&self, m: &DMatrix<T>) -> bool {
        if m.shape() != self.center.shape() {
            return false;
        }
        self.vectorized()
            .contains_point(&DVector::from_column_slice(m.as_slice()))
    }

    /// Exact merge of parallel generators.
    pub fn compact(&self) -> Self {
        let (r, c) = self.shape();
        Self::from_vectorized(&self.vectorized().compact(), r, c)
    }

    /// Outer order reduction to at most `g_max` generators. The result
    /// contains `self`. `g_max` below `n·p` is raised to `n·p`, the fewest
    /// generators a sound box enclosure of the remainder needs.
    pub fn reduce(&self, g_max: usize) -> Self {
        let (r, c) = self.shape();
        let g_max = g_max.max(r * c);
        Self::from_vectorized(&self.vectorized().reduce(g_max), r, c)
    }

    /// All `2^g` sign combinations `C ± Σ Gᵢ`, after reducing to `g_max`.
    pub fn vertices(&self, g_max: usize) -> Vec<DMatrix<T>> {
        let m = self.compact();
        let m = if m.num_generators() > g_max {
            m.reduce(g_max)
        } else {
            m
        };
        let g = m.num_generators();
        assert!(g < 24, "too many generators for vertex enumeration");
        let mut out = Vec::with_capacity(1 << g);
        for mask in 0u32..(1u32 << g) {
            let mut v = m.center.clone();
            for (i, gi) in m.generators.iter().enumerate() {
                if mask & (1 << i) != 0 {
                    v += gi;
                } else {
                    v -= gi;
                }
            }
            out.push(v);
        }
        out
    }
}
