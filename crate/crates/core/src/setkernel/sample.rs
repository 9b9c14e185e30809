//! Monte Carlo volume, uniform sampling and farthest-point distance.
//!
//! Randomness is counter based: sample `i` draws from the ChaCha stream
//! `i / CHUNK` of the seed, so results do not depend on how the work is
//! split across threads.

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::hpolytope::HPolytope;
use super::Set;

const CHUNK: usize = 1024;

/// RNG for an independent stream of a seed.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VolumeEstimate {
    pub volume: f64,
    pub std_error: f64,
    /// `std_error / volume` (infinite when nothing was hit).
    pub rel_std_error: f64,
    pub samples: usize,
    pub seed: u64,
}

/// Membership oracle with a fast path: low-dimensional zonotopes are
/// converted to halfspaces once instead of solving an LP per sample.
pub(crate) fn oracle<T: Scalar>(s: &Set<T>) -> Result<HPolytope<T>> {
    match s {
        Set::HPolytope(p) => Ok(p.clone()),
        Set::Zonotope(z) => z.to_hpolytope(),
    }
}

/// Hit-ratio volume estimate over the tight bounding box.
pub fn volume_estimate<T: Scalar>(
    s: &Set<T>,
    n_samples: usize,
    seed: u64,
) -> Result<VolumeEstimate> {
    let empty = VolumeEstimate {
        volume: 0.0,
        std_error: 0.0,
        rel_std_error: 0.0,
        samples: n_samples,
        seed,
    };
    if s.is_empty() {
        return Ok(empty);
    }
    let (lo, hi) = s.bounding_box()?;
    let n = lo.len();
    let widths: Vec<f64> = (0..n).map(|i| (hi[i] - lo[i]).as_f64()).collect();
    let box_vol: f64 = widths.iter().product();
    if box_vol <= 0.0 || n_samples == 0 {
        return Ok(empty);
    }
    let member = oracle(s)?;
    let hits = count_hits(&member, &lo, &hi, n_samples, seed);
    let p = hits as f64 / n_samples as f64;
    let volume = p * box_vol;
    let std_error = box_vol * (p * (1.0 - p) / n_samples as f64).sqrt();
    Ok(VolumeEstimate {
        volume,
        std_error,
        rel_std_error: if volume > 0.0 {
            std_error / volume
        } else {
            f64::INFINITY
        },
        samples: n_samples,
        seed,
    })
}

fn count_hits<T: Scalar>(
    member: &HPolytope<T>,
    lo: &DVector<T>,
    hi: &DVector<T>,
    n_samples: usize,
    seed: u64,
) -> usize {
    let chunks = n_samples.div_ceil(CHUNK);
    (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, c as u64);
            let count = CHUNK.min(n_samples - c * CHUNK);
            (0..count)
                .filter(|_| member.contains_point(&draw_box(&mut rng, lo, hi)))
                .count()
        })
        .sum()
}

/// One uniform draw from the box `[lo, hi]`.
pub fn draw_box<T: Scalar, R: Rng>(rng: &mut R, lo: &DVector<T>, hi: &DVector<T>) -> DVector<T> {
    DVector::from_iterator(
        lo.len(),
        (0..lo.len()).map(|i| {
            let t: f64 = rng.gen();
            lo[i] + (hi[i] - lo[i]) * T::lit(t)
        }),
    )
}

/// Up to `k` uniform samples of a set by rejection from its bounding box.
/// Stops early (returning fewer samples) after `64 k` draws.
pub fn sample_uniform<T: Scalar>(s: &Set<T>, k: usize, seed: u64) -> Result<Vec<DVector<T>>> {
    if s.is_empty() {
        return Err(Error::EmptySet);
    }
    let (lo, hi) = s.bounding_box()?;
    let member = oracle(s)?;
    let budget = 64 * k.max(1);
    let chunks = budget.div_ceil(CHUNK);
    let mut out = Vec::with_capacity(k);
    // Chunks are drawn in order so that the first `k` hits are deterministic.
    let batch = rayon::current_num_threads().max(1);
    let mut c = 0;
    while c < chunks && out.len() < k {
        let upto = (c + batch).min(chunks);
        let found: Vec<Vec<DVector<T>>> = (c..upto)
            .into_par_iter()
            .map(|ci| {
                let mut rng = stream_rng(seed, ci as u64);
                (0..CHUNK)
                    .map(|_| draw_box(&mut rng, &lo, &hi))
                    .filter(|x| member.contains_point(x))
                    .collect()
            })
            .collect();
        for f in found {
            out.extend(f);
        }
        c = upto;
    }
    out.truncate(k);
    Ok(out)
}

/// Exact `max_{x∈S} ‖x − p‖₂` by vertex enumeration (`n ≤ 4`).
pub fn sup_distance<T: Scalar>(s: &Set<T>, p: &DVector<T>) -> Result<T> {
    let verts = s.vertices()?;
    verts
        .iter()
        .map(|v| (v - p).norm())
        .fold(None, |m: Option<T>, d| Some(m.map_or(d, |m| m.max(d))))
        .ok_or(Error::EmptySet)
}

/// Cheap bracket for `sup_distance` in any dimension: a sampled lower bound
/// and the farthest bounding-box corner as an upper bound.
pub fn sup_distance_bounds<T: Scalar>(
    s: &Set<T>,
    p: &DVector<T>,
    k: usize,
    seed: u64,
) -> Result<(T, T)> {
    let (lo, hi) = s.bounding_box()?;
    let upper = (0..lo.len())
        .map(|i| {
            let a = (lo[i] - p[i]).abs().max((hi[i] - p[i]).abs());
            a * a
        })
        .fold(T::zero(), |a, b| a + b)
        .sqrt();
    let lower = sample_uniform(s, k, seed)?
        .iter()
        .map(|x| (x - p).norm())
        .fold(T::zero(), |a, b| a.max(b));
    Ok((lower, upper))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::setkernel::{HPolytope, Zonotope};
    use nalgebra::DMatrix;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    #[test]
    fn box_volume() {
        let s = Set::HPolytope(HPolytope::from_box(&v(&[-1.0, -1.0]), &v(&[1.0, 1.0])).unwrap());
        let est = volume_estimate(&s, 10_000, 1).unwrap();
        assert!((est.volume - 4.0).abs() <= 0.08);
    }

    #[test]
    fn triangle_area() {
        let tri = HPolytope::new(
            DMatrix::from_row_slice(3, 2, &[-1.0, 0.0, 0.0, -1.0, 1.0, 1.0]),
            v(&[0.0, 0.0, 1.0]),
        )
        .unwrap();
        let est = volume_estimate(&Set::HPolytope(tri), 100_000, 7).unwrap();
        assert!((est.volume - 0.5).abs() <= 0.025, "{}", est.volume);
        assert!((est.volume - 0.5).abs() <= 3.0 * est.std_error + 1e-12);
    }

    #[test]
    fn empty_volume_is_zero() {
        let est = volume_estimate(&Set::HPolytope(HPolytope::<f64>::empty(2)), 1000, 1).unwrap();
        assert_eq!(est.volume, 0.0);
    }

    #[test]
    fn volume_is_seed_deterministic() {
        let z = Zonotope::new(
            v(&[0.0, 0.0]),
            DMatrix::from_row_slice(2, 3, &[1.0, 0.5, 0.0, 0.0, 0.5, 1.0]),
        )
        .unwrap();
        let s = Set::Zonotope(z);
        assert_eq!(
            volume_estimate(&s, 5000, 42).unwrap(),
            volume_estimate(&s, 5000, 42).unwrap()
        );
    }

    #[test]
    fn sup_distance_examples() {
        let bx = Set::HPolytope(HPolytope::from_box(&v(&[-1.0, -1.0]), &v(&[1.0, 1.0])).unwrap());
        assert!((sup_distance(&bx, &v(&[0.0, 0.0])).unwrap() - 2f64.sqrt()).abs() < 1e-9);
        let pt = Set::Zonotope(Zonotope::point(v(&[3.0, 4.0])));
        assert!((sup_distance(&pt, &v(&[0.0, 0.0])).unwrap() - 5.0).abs() < 1e-12);
        let b2 = Set::Zonotope(Zonotope::from_box(&v(&[0.0, 0.0]), &v(&[2.0, 2.0])).unwrap());
        assert!((sup_distance(&b2, &v(&[-1.0, 0.0])).unwrap() - 13f64.sqrt()).abs() < 1e-12);
        let (lo, hi) = sup_distance_bounds(&b2, &v(&[-1.0, 0.0]), 200, 1).unwrap();
        assert!(lo <= 13f64.sqrt() + 1e-12 && hi >= 13f64.sqrt() - 1e-12);
    }
}
