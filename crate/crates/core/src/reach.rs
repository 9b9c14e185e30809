//! Data-driven forward reachability: one-step outer reachable sets and the
//! open-loop tube used while measurements cannot be trusted.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result};
use crate::scalar::Scalar;
use crate::setkernel::json::{mat_to_json, vec_to_json};
use crate::setkernel::{MatrixZonotope, Zonotope};

/// Generators kept per tube step.
pub const TUBE_MAX_GENERATORS: usize = 30;
/// Steps after which a tube refuses to grow.
pub const TUBE_HORIZON_CAP: usize = 200;

fn stack<T: Scalar>(x: &DVector<T>, u: &DVector<T>) -> DVector<T> {
    let mut z = DVector::zeros(x.len() + u.len());
    z.rows_mut(0, x.len()).copy_from(x);
    z.rows_mut(x.len(), u.len()).copy_from(u);
    z
}

/// `M [x; u] ⊕ W`.
pub fn rors_point<T: Scalar>(
    m: &MatrixZonotope<T>,
    x: &DVector<T>,
    u: &DVector<T>,
    w: &Zonotope<T>,
) -> Result<Zonotope<T>> {
    check_dim(m.shape().0, x.len())?;
    check_dim(m.shape().1, x.len() + u.len())?;
    Ok(m.map(&stack(x, u))?.minkowski_sum(w)?.compact())
}

/// Outer approximation of `{M [x; v] + w : M ∈ 𝓜, x ∈ X, v ∈ V, w ∈ W}`
/// where `V` is an input set (a point for the tube).
///
/// Center×generator and generator×center products are kept exactly; the
/// bilinear generator×generator terms are boxed.
pub fn rors_set_with_inputs<T: Scalar>(
    m: &MatrixZonotope<T>,
    xs: &Zonotope<T>,
    us: &Zonotope<T>,
    w: &Zonotope<T>,
) -> Result<Zonotope<T>> {
    let n = xs.dim();
    check_dim(m.shape().0, n)?;
    check_dim(m.shape().1, n + us.dim())?;
    let z = xs.cartesian(us);
    let c = z.center();
    let gz = z.generators();
    let cm = m.center();
    let mut cols: Vec<DVector<T>> = Vec::with_capacity(gz.ncols() + m.num_generators() + n);
    for j in 0..gz.ncols() {
        cols.push(cm * gz.column(j));
    }
    let mut boxed = DVector::zeros(n);
    for gi in m.generators() {
        cols.push(gi * c);
        if gz.ncols() > 0 {
            let prod = gi * gz;
            for j in 0..prod.ncols() {
                boxed += prod.column(j).abs();
            }
        }
    }
    for i in 0..n {
        if boxed[i] > T::zero() {
            let mut e = DVector::zeros(n);
            e[i] = boxed[i];
            cols.push(e);
        }
    }
    let mut g = DMatrix::zeros(n, cols.len());
    for (k, col) in cols.iter().enumerate() {
        g.set_column(k, col);
    }
    Ok(Zonotope::new(cm * c, g)?.minkowski_sum(w)?.compact())
}

/// `M [X; u] ⊕ W` for a set of states and a fixed input.
pub fn rors_set<T: Scalar>(
    m: &MatrixZonotope<T>,
    xs: &Zonotope<T>,
    u: &DVector<T>,
    w: &Zonotope<T>,
) -> Result<Zonotope<T>> {
    rors_set_with_inputs(m, xs, &Zonotope::point(u.clone()), w)
}

/// Open-loop tube anchored at a trusted measurement.
#[derive(Debug, Clone, PartialEq)]
pub struct ReachTube<T: Scalar = f64> {
    pub anchor_time: i64,
    pub sets: Vec<Zonotope<T>>,
    pub inputs_applied: Vec<DVector<T>>,
}

impl<T: Scalar> ReachTube<T> {
    /// Fresh tube at the singleton `{x_trusted}`.
    pub fn reset(anchor_time: i64, x_trusted: DVector<T>) -> Self {
        Self {
            anchor_time,
            sets: vec![Zonotope::point(x_trusted)],
            inputs_applied: Vec::new(),
        }
    }

    pub fn last(&self) -> &Zonotope<T> {
        self.sets.last().expect("tube holds at least its anchor")
    }

    /// Time index of the last set.
    pub fn last_time(&self) -> i64 {
        self.anchor_time + self.inputs_applied.len() as i64
    }

    pub fn len(&self) -> usize {
        self.sets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sets.is_empty()
    }

    /// The set that would follow the last one under `u` (tube unchanged).
    pub fn predict(
        &self,
        m: &MatrixZonotope<T>,
        u: &DVector<T>,
        w: &Zonotope<T>,
    ) -> Result<Zonotope<T>> {
        Ok(rors_set(m, self.last(), u, w)?.reduce(TUBE_MAX_GENERATORS))
    }

    /// Appends the successor under `u`.
    pub fn extend(&mut self, m: &MatrixZonotope<T>, u: &DVector<T>, w: &Zonotope<T>) -> Result<()> {
        if self.inputs_applied.len() >= TUBE_HORIZON_CAP {
            return Err(crate::Error::Synthesis(format!(
                "tube horizon cap of {TUBE_HORIZON_CAP} steps reached"
            )));
        }
        let next = self.predict(m, u, w)?;
        self.sets.push(next);
        self.inputs_applied.push(u.clone());
        Ok(())
    }

    /// Functional form of [`ReachTube::extend`].
    pub fn extended(&self, m: &MatrixZonotope<T>, u: &DVector<T>, w: &Zonotope<T>) -> Result<Self> {
        let mut t = self.clone();
        t.extend(m, u, w)?;
        Ok(t)
    }

    pub fn to_json(&self) -> TubeJson {
        TubeJson {
            anchor_time: self.anchor_time,
            steps: self
                .sets
                .iter()
                .enumerate()
                .map(|(t, z)| TubeStepJson {
                    k: self.anchor_time + t as i64,
                    center: vec_to_json(z.center()),
                    generators: mat_to_json(z.generators()),
                })
                .collect(),
        }
    }

    /// CSV dump: `k,center...,generators` (generators row-major, `;`-separated).
    pub fn write_csv<W: std::io::Write>(&self, out: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(out);
        let n = self.last().dim();
        let mut header = vec!["k".to_string()];
        header.extend((0..n).map(|i| format!("c{i}")));
        header.push("generators".into());
        wr.write_record(&header)?;
        for step in self.to_json().steps {
            let mut rec = vec![step.k.to_string()];
            rec.extend(step.center.iter().map(|v| format!("{v:e}")));
            let g: Vec<String> = step
                .generators
                .iter()
                .flat_map(|r| r.iter().map(|v| format!("{v:e}")))
                .collect();
            rec.push(g.join(";"));
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TubeStepJson {
    pub k: i64,
    pub center: Vec<f64>,
    pub generators: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TubeJson {
    pub anchor_time: i64,
    pub steps: Vec<TubeStepJson>,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn s(v: f64) -> DVector<f64> {
        DVector::from_element(1, v)
    }

    fn scalar_model() -> MatrixZonotope {
        MatrixZonotope::singleton(DMatrix::from_row_slice(1, 2, &[0.5, 1.0]))
    }

    #[test]
    fn point_examples() {
        let m = scalar_model();
        let none = Zonotope::point(s(0.0));
        let z = rors_point(&m, &s(2.0), &s(1.0), &none).unwrap();
        assert_eq!(z.center()[0], 2.0);
        assert_eq!(z.radii()[0], 0.0);
        let w = Zonotope::from_box(&s(-0.001), &s(0.001)).unwrap();
        let (lo, hi) = rors_point(&m, &s(2.0), &s(1.0), &w)
            .unwrap()
            .interval_hull();
        assert!((lo[0] - 1.999).abs() < 1e-12 && (hi[0] - 2.001).abs() < 1e-12);
    }

    #[test]
    fn set_version_agrees_on_singletons() {
        let m = MatrixZonotope::new(
            DMatrix::from_row_slice(1, 2, &[0.5, 1.0]),
            vec![DMatrix::from_row_slice(1, 2, &[0.1, 0.0])],
        )
        .unwrap();
        let w = Zonotope::from_box(&s(-0.01), &s(0.01)).unwrap();
        let a = rors_point(&m, &s(2.0), &s(1.0), &w).unwrap();
        let b = rors_set(&m, &Zonotope::point(s(2.0)), &s(1.0), &w).unwrap();
        assert_eq!(a.interval_hull(), b.interval_hull());
    }

    #[test]
    fn singleton_model_is_model_based() {
        let m = scalar_model();
        let x = Zonotope::from_box(&s(1.0), &s(2.0)).unwrap();
        let z = rors_set(&m, &x, &s(1.0), &Zonotope::point(s(0.0))).unwrap();
        let (lo, hi) = z.interval_hull();
        assert!((lo[0] - 1.5).abs() < 1e-12 && (hi[0] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn interval_model_encloses() {
        let m = MatrixZonotope::new(
            DMatrix::from_row_slice(1, 2, &[0.5, 1.0]),
            vec![DMatrix::from_row_slice(1, 2, &[0.1, 0.0])],
        )
        .unwrap();
        let x = Zonotope::from_box(&s(1.0), &s(2.0)).unwrap();
        let (lo, hi) = rors_set(&m, &x, &s(0.0), &Zonotope::point(s(0.0)))
            .unwrap()
            .interval_hull();
        assert!(lo[0] <= 0.4 + 1e-12 && hi[0] >= 1.2 - 1e-12);
    }

    #[test]
    fn tube_follows_model_without_noise() {
        let m = scalar_model();
        let w = Zonotope::point(s(0.0));
        let mut tube = ReachTube::reset(0, s(1.0));
        let mut x = 1.0;
        for k in 0..5 {
            let u = s(k as f64 * 0.1);
            tube.extend(&m, &u, &w).unwrap();
            x = 0.5 * x + u[0];
            assert!((tube.last().center()[0] - x).abs() < 1e-12);
            assert_eq!(tube.last().num_generators(), 0);
        }
        assert_eq!(tube.last_time(), 5);
        let one = ReachTube::reset(3, s(2.0))
            .extended(&m, &s(1.0), &w)
            .unwrap();
        assert_eq!(one.sets[1], rors_point(&m, &s(2.0), &s(1.0), &w).unwrap());
    }

    #[test]
    fn csv_dump_has_one_row_per_set() {
        let m = scalar_model();
        let w = Zonotope::from_box(&s(-0.1), &s(0.1)).unwrap();
        let mut tube = ReachTube::reset(10, s(1.0));
        tube.extend(&m, &s(0.0), &w).unwrap();
        let mut buf = Vec::new();
        tube.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 3);
        assert!(text.lines().nth(2).unwrap().starts_with("11,"));
    }
}
