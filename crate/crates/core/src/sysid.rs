//! Identification of the set of system matrices consistent with noisy data.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::scalar::Scalar;
use crate::setkernel::json::{mat_from_json, mat_to_json, vec_from_json, vec_to_json};
use crate::setkernel::linalg::{pinv, rank};
use crate::setkernel::MatrixZonotope;

/// One input/state record: `x` has one more column than `u`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory<T: Scalar = f64> {
    /// `m × N`
    pub u: DMatrix<T>,
    /// `n × (N + 1)`
    pub x: DMatrix<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryBank<T: Scalar = f64> {
    pub trajectories: Vec<Trajectory<T>>,
    pub noise_center: DVector<T>,
    /// Generators of the per-step noise zonotope.
    pub noise_generators: Vec<DVector<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrices<T: Scalar = f64> {
    pub x_minus: DMatrix<T>,
    pub u_minus: DMatrix<T>,
    pub x_plus: DMatrix<T>,
}

impl<T: Scalar> DataMatrices<T> {
    pub fn samples(&self) -> usize {
        self.x_minus.ncols()
    }

    /// `[X₋; U₋]`
    pub fn stacked(&self) -> DMatrix<T> {
        let (n, m, t) = (self.x_minus.nrows(), self.u_minus.nrows(), self.samples());
        let mut s = DMatrix::zeros(n + m, t);
        s.view_mut((0, 0), (n, t)).copy_from(&self.x_minus);
        s.view_mut((n, 0), (m, t)).copy_from(&self.u_minus);
        s
    }
}

impl<T: Scalar> TrajectoryBank<T> {
    pub fn state_dim(&self) -> usize {
        self.noise_center.len()
    }

    pub fn total_steps(&self) -> usize {
        self.trajectories.iter().map(|t| t.u.ncols()).sum()
    }
}

/// Concatenates trajectories; `X₊` is shifted within each trajectory only.
pub fn assemble<T: Scalar>(bank: &TrajectoryBank<T>) -> Result<DataMatrices<T>> {
    let first = bank
        .trajectories
        .first()
        .ok_or_else(|| Error::invalid("trajectory bank is empty"))?;
    let (n, m) = (first.x.nrows(), first.u.nrows());
    check_dim(bank.state_dim(), n)?;
    let total = bank.total_steps();
    if total == 0 {
        return Err(Error::invalid("trajectory bank holds no transitions"));
    }
    let mut xm = DMatrix::zeros(n, total);
    let mut um = DMatrix::zeros(m, total);
    let mut xp = DMatrix::zeros(n, total);
    let mut col = 0;
    for tr in &bank.trajectories {
        check_dim(n, tr.x.nrows())?;
        check_dim(m, tr.u.nrows())?;
        let steps = tr.u.ncols();
        if tr.x.ncols() != steps + 1 {
            return Err(Error::invalid(format!(
                "trajectory has {} inputs but {} states (expected {})",
                steps,
                tr.x.ncols(),
                steps + 1
            )));
        }
        xm.view_mut((0, col), (n, steps))
            .copy_from(&tr.x.columns(0, steps));
        um.view_mut((0, col), (m, steps)).copy_from(&tr.u);
        xp.view_mut((0, col), (n, steps))
            .copy_from(&tr.x.columns(1, steps));
        col += steps;
    }
    Ok(DataMatrices {
        x_minus: xm,
        u_minus: um,
        x_plus: xp,
    })
}

/// Full row rank of `[X₋; U₋]`.
pub fn check_rank<T: Scalar>(d: &DataMatrices<T>) -> bool {
    let need = d.x_minus.nrows() + d.u_minus.nrows();
    d.samples() >= need && rank(&d.stacked()) == need
}

/// Matrix zonotope of stacked noise sequences: generator `j + i·T` holds the
/// `i`-th noise generator in column `j`.
pub fn noise_matrix_zonotope<T: Scalar>(bank: &TrajectoryBank<T>) -> Result<MatrixZonotope<T>> {
    let n = bank.state_dim();
    let t = bank.total_steps();
    let mut center = DMatrix::zeros(n, t);
    for j in 0..t {
        center.set_column(j, &bank.noise_center);
    }
    let mut gens = Vec::with_capacity(bank.noise_generators.len() * t);
    for g in &bank.noise_generators {
        check_dim(n, g.len())?;
        for j in 0..t {
            let mut m = DMatrix::zeros(n, t);
            m.set_column(j, g);
            gens.push(m);
        }
    }
    MatrixZonotope::new(center, gens)
}

/// `M_AB = (X₊ − M_w)[X₋; U₋]^†`. Generator signs are dropped (the set is
/// symmetric in β).
pub fn identify<T: Scalar>(
    d: &DataMatrices<T>,
    mw: &MatrixZonotope<T>,
) -> Result<MatrixZonotope<T>> {
    let need = d.x_minus.nrows() + d.u_minus.nrows();
    if !check_rank(d) {
        return Err(Error::RankDeficient {
            rank: rank(&d.stacked()),
            needed: need,
        });
    }
    check_dim(d.samples(), mw.center().ncols())?;
    let p = pinv(&d.stacked());
    let center = (&d.x_plus - mw.center()) * &p;
    let gens = mw.generators().iter().map(|g| g * &p).collect();
    MatrixZonotope::new(center, gens)
}

/// Convenience: assemble, build the noise zonotope and identify.
pub fn identify_bank<T: Scalar>(bank: &TrajectoryBank<T>) -> Result<MatrixZonotope<T>> {
    let d = assemble(bank)?;
    let mw = noise_matrix_zonotope(bank)?;
    identify(&d, &mw)
}

/// LP membership of a concrete `[A, B]`.
pub fn membership_check<T: Scalar>(m: &MatrixZonotope<T>, ab: &DMatrix<T>) -> bool {
    m.contains(ab)
}

/// Vertex matrices after outer reduction to at most `g_max` generators.
pub fn vertex_matrices<T: Scalar>(m: &MatrixZonotope<T>, g_max: usize) -> Vec<DMatrix<T>> {
    m.vertices(g_max)
}

/// Splits `[A, B]` into its blocks.
pub fn split_ab<T: Scalar>(ab: &DMatrix<T>, n: usize) -> (DMatrix<T>, DMatrix<T>) {
    let m = ab.ncols() - n;
    (ab.columns(0, n).into_owned(), ab.columns(n, m).into_owned())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryJson {
    /// One entry per time step.
    pub u: Vec<Vec<f64>>,
    pub x: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NoiseJson {
    pub center: Vec<f64>,
    pub generators: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryBankJson {
    pub trajectories: Vec<TrajectoryJson>,
    pub noise: NoiseJson,
}

impl TrajectoryBankJson {
    pub fn from_bank<T: Scalar>(bank: &TrajectoryBank<T>) -> Self {
        Self {
            trajectories: bank
                .trajectories
                .iter()
                .map(|t| TrajectoryJson {
                    u: mat_to_json(&t.u.transpose()),
                    x: mat_to_json(&t.x.transpose()),
                })
                .collect(),
            noise: NoiseJson {
                center: vec_to_json(&bank.noise_center),
                generators: bank.noise_generators.iter().map(vec_to_json).collect(),
            },
        }
    }

    pub fn to_bank<T: Scalar>(&self) -> Result<TrajectoryBank<T>> {
        let n = self.noise.center.len();
        let trajectories = self
            .trajectories
            .iter()
            .map(|t| {
                let m = t.u.first().map_or(0, |r| r.len());
                let u: DMatrix<T> = mat_from_json(&t.u, m)?;
                let x: DMatrix<T> = mat_from_json(&t.x, n)?;
                Ok(Trajectory {
                    u: u.transpose(),
                    x: x.transpose(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(TrajectoryBank {
            trajectories,
            noise_center: vec_from_json(&self.noise.center),
            noise_generators: self
                .noise
                .generators
                .iter()
                .map(|g| vec_from_json(g))
                .collect(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_bank() -> TrajectoryBank {
        TrajectoryBank {
            trajectories: vec![Trajectory {
                u: DMatrix::from_row_slice(1, 2, &[1.0, -1.0]),
                x: DMatrix::from_row_slice(1, 3, &[0.0, 1.0, -0.5]),
            }],
            noise_center: DVector::zeros(1),
            noise_generators: vec![DVector::zeros(1)],
        }
    }

    #[test]
    fn assemble_one_trajectory() {
        let d = assemble(&scalar_bank()).unwrap();
        assert_eq!(d.x_minus, DMatrix::from_row_slice(1, 2, &[0.0, 1.0]));
        assert_eq!(d.u_minus, DMatrix::from_row_slice(1, 2, &[1.0, -1.0]));
        assert_eq!(d.x_plus, DMatrix::from_row_slice(1, 2, &[1.0, -0.5]));
        assert!(check_rank(&d));
    }

    #[test]
    fn no_shift_across_trajectories() {
        let mk = |x0: f64, u: f64, x1: f64| Trajectory {
            u: DMatrix::from_row_slice(1, 1, &[u]),
            x: DMatrix::from_row_slice(1, 2, &[x0, x1]),
        };
        let bank = TrajectoryBank {
            trajectories: vec![mk(1.0, 2.0, 3.0), mk(10.0, 20.0, 30.0)],
            noise_center: DVector::zeros(1),
            noise_generators: vec![],
        };
        let d = assemble(&bank).unwrap();
        assert_eq!(d.x_minus, DMatrix::from_row_slice(1, 2, &[1.0, 10.0]));
        assert_eq!(d.x_plus, DMatrix::from_row_slice(1, 2, &[3.0, 30.0]));
    }

    #[test]
    fn empty_bank_is_rejected() {
        let bank: TrajectoryBank = TrajectoryBank {
            trajectories: vec![],
            noise_center: DVector::zeros(1),
            noise_generators: vec![],
        };
        assert!(assemble(&bank).is_err());
    }

    #[test]
    fn rank_conditions() {
        let mut d = assemble(&scalar_bank()).unwrap();
        d.u_minus.fill(0.0);
        assert!(!check_rank(&d));
        let short = DataMatrices {
            x_minus: DMatrix::from_row_slice(1, 1, &[1.0]),
            u_minus: DMatrix::from_row_slice(1, 1, &[1.0]),
            x_plus: DMatrix::from_row_slice(1, 1, &[1.0]),
        };
        assert!(!check_rank(&short));
    }

    #[test]
    fn noise_layout() {
        let g = DVector::from_row_slice(&[0.001, 0.001]);
        let bank = TrajectoryBank {
            trajectories: vec![Trajectory {
                u: DMatrix::zeros(1, 2),
                x: DMatrix::zeros(2, 3),
            }],
            noise_center: DVector::zeros(2),
            noise_generators: vec![g.clone()],
        };
        let mw = noise_matrix_zonotope(&bank).unwrap();
        assert_eq!(mw.num_generators(), 2);
        assert_eq!(mw.generators()[0].column(0), g.column(0));
        assert_eq!(mw.generators()[0].column(1).amax(), 0.0);
        assert_eq!(mw.generators()[1].column(1), g.column(0));
        assert_eq!(mw.generators()[1].column(0).amax(), 0.0);
    }

    #[test]
    fn noise_layout_two_generators_three_steps() {
        let g1 = DVector::from_row_slice(&[1.0, 0.0]);
        let g2 = DVector::from_row_slice(&[0.0, 2.0]);
        let bank = TrajectoryBank {
            trajectories: vec![Trajectory {
                u: DMatrix::zeros(1, 3),
                x: DMatrix::zeros(2, 4),
            }],
            noise_center: DVector::zeros(2),
            noise_generators: vec![g1.clone(), g2.clone()],
        };
        let mw = noise_matrix_zonotope(&bank).unwrap();
        assert_eq!(mw.num_generators(), 6);
        for i in 0..2 {
            for j in 0..3 {
                let gen = &mw.generators()[j + i * 3];
                let want = if i == 0 { &g1 } else { &g2 };
                for c in 0..3 {
                    if c == j {
                        assert_eq!(gen.column(c), want.column(0));
                    } else {
                        assert_eq!(gen.column(c).amax(), 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn noise_free_identification() {
        let m = identify_bank(&scalar_bank()).unwrap();
        assert!((m.center() - DMatrix::from_row_slice(1, 2, &[0.5, 1.0])).amax() < 1e-12);
        assert!(m.generators().iter().all(|g| g.amax() <= 1e-12));
        assert!(membership_check(
            &m,
            &DMatrix::from_row_slice(1, 2, &[0.5, 1.0])
        ));
        assert!(!membership_check(
            &MatrixZonotope::singleton(m.center().clone()),
            &DMatrix::from_row_slice(1, 2, &[0.5, 1.1])
        ));
    }

    #[test]
    fn identity_system() {
        let x = DMatrix::from_row_slice(2, 4, &[1.0, 2.0, 0.5, -1.0, 0.0, 1.0, 3.0, 2.0]);
        let d = DataMatrices {
            x_minus: x.clone(),
            u_minus: DMatrix::from_row_slice(1, 4, &[1.0, -2.0, 0.3, 0.7]),
            x_plus: x,
        };
        let mw = MatrixZonotope::singleton(DMatrix::zeros(2, 4));
        let m = identify(&d, &mw).unwrap();
        let want = DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0]);
        assert!((m.center() - want).amax() < 1e-10);
    }

    #[test]
    fn rank_deficient_identification_fails() {
        let d = DataMatrices {
            x_minus: DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]),
            u_minus: DMatrix::from_row_slice(1, 3, &[2.0, 4.0, 6.0]),
            x_plus: DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]),
        };
        let mw = MatrixZonotope::singleton(DMatrix::zeros(1, 3));
        assert!(matches!(
            identify(&d, &mw),
            Err(Error::RankDeficient { .. })
        ));
    }

    #[test]
    fn bank_json_round_trip() {
        let bank = scalar_bank();
        let j = serde_json::to_string(&TrajectoryBankJson::from_bank(&bank)).unwrap();
        let back: TrajectoryBankJson = serde_json::from_str(&j).unwrap();
        assert_eq!(back.to_bank::<f64>().unwrap(), bank);
    }
}
