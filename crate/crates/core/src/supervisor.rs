//! Controller-side anomaly detector and tracking supervisor.
//!
//! The detector flags a received measurement that no data-consistent model
//! could have produced from the previous one. While the flag is up, the
//! supervisor tracks the reference open loop on a reachable tube anchored at
//! the last trusted measurement, and deliberately sends an invalid input
//! (which trips the plant-side emergency controller) as soon as the tube
//! could leave the safe region or drifts toward worse-performing cells.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::ctrlsets::{classify, EquilibriumCell, RoscFamily};
use crate::error::{Error, Result};
use crate::reach::{rors_point, rors_set_with_inputs, ReachTube, TUBE_HORIZON_CAP};
use crate::setkernel::sample::sample_uniform;
use crate::setkernel::sup_distance;
use crate::{HPolytope, MatrixZonotope, Set, Zonotope};

// ---------------------------------------------------------------------------
// Detector

/// `true` (anomaly) iff `x_recv ∉ tube_1step`.
pub fn detect(x_recv: &DVector<f64>, tube_1step: &Zonotope) -> bool {
    !tube_1step.contains_point(x_recv)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorConfig {
    /// Worst-case detection delay assumed by the supervisor.
    pub tau: usize,
    /// Consecutive consistent samples that clear the flag.
    pub clear_streak: usize,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            tau: 5,
            clear_streak: 3,
        }
    }
}

/// Result of one detector update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Observation {
    pub d: bool,
    pub consistent: bool,
    pub raised: bool,
    pub cleared: bool,
}

#[derive(Debug, Clone, Default)]
pub struct DetectorState {
    pub d: bool,
    streak: usize,
    strict_streak: usize,
    /// After an invalid input, the plant may apply inputs the controller
    /// never sent; consistency is then judged against the whole input set
    /// until the plant is seen following the sent inputs again.
    pub relaxed: bool,
    prev: Option<(DVector<f64>, DVector<f64>)>,
}

impl DetectorState {
    pub fn observe(
        &mut self,
        x_recv: &DVector<f64>,
        cfg: &DetectorConfig,
        m: &MatrixZonotope,
        w: &Zonotope,
        u_box: &Zonotope,
    ) -> Observation {
        let consistent = match &self.prev {
            None => true,
            Some((xp, up)) => {
                let strict = rors_point(m, xp, up, w)
                    .map(|z| !detect(x_recv, &z))
                    .unwrap_or(false);
                if strict {
                    self.strict_streak += 1;
                } else {
                    self.strict_streak = 0;
                }
                strict
                    || (self.relaxed
                        && rors_set_with_inputs(m, &Zonotope::point(xp.clone()), u_box, w)
                            .map(|z| !detect(x_recv, &z))
                            .unwrap_or(false))
            }
        };
        if self.relaxed && self.strict_streak >= cfg.clear_streak {
            self.relaxed = false;
        }
        let was = self.d;
        if !consistent {
            self.d = true;
            self.streak = 0;
        } else if self.d {
            self.streak += 1;
            if self.streak >= cfg.clear_streak {
                self.d = false;
                self.streak = 0;
            }
        }
        Observation {
            d: self.d,
            consistent,
            raised: self.d && !was,
            cleared: was && !self.d,
        }
    }

    /// Records what was sent after observing `x_recv`.
    pub fn record_sent(&mut self, x_recv: &DVector<f64>, u: &DVector<f64>, valid: bool) {
        if !valid {
            self.relaxed = true;
            self.strict_streak = 0;
        }
        self.prev = Some((x_recv.clone(), u.clone()));
    }
}

// ---------------------------------------------------------------------------
// Index tables

/// `I₁(i, j) = max_{x ∈ T₀ⁱ} ‖x − x_eʲ‖`.
pub fn index_i1(cells: &[EquilibriumCell], i: usize, j: usize) -> Result<f64> {
    sup_distance(&Set::Zonotope(cells[i].t0.clone()), &cells[j].x_e)
}

/// Smallest `p` with `T₀ⁱ ⊆ ⋃_{s ≤ p} C_sʲ`, judged on `samples` uniform
/// points of `T₀ⁱ` plus its vertices. `None` when no level covers it.
pub fn index_i2(
    families: &[RoscFamily],
    i: usize,
    j: usize,
    samples: usize,
    seed: u64,
) -> Result<Option<usize>> {
    let t0 = &families[i].cell.t0;
    let mut pts = if t0.is_full_dimensional() {
        sample_uniform(&Set::Zonotope(t0.clone()), samples, seed)?
    } else {
        Vec::new()
    };
    pts.extend(t0.vertices()?);
    let fam = &families[j];
    let mut p = 0;
    for x in &pts {
        match fam.level_of(x) {
            Some(s) => p = p.max(s),
            None => return Ok(None),
        }
    }
    Ok(Some(p))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexTable {
    pub alpha: f64,
    pub beta: f64,
    /// Row `i`, column `j`: state cell `i`, reference cell `j`.
    pub i1: Vec<Vec<f64>>,
    pub i2: Vec<Vec<f64>>,
    pub i: Vec<Vec<f64>>,
    /// `sorted[r]` lists the state cells in ascending `I(·, r)`.
    pub sorted: Vec<Vec<usize>>,
}

impl IndexTable {
    pub fn build(
        families: &[RoscFamily],
        alpha: f64,
        beta: f64,
        samples: usize,
        seed: u64,
    ) -> Result<Self> {
        if alpha < 0.0 || beta < 0.0 {
            return Err(Error::invalid("index weights must be nonnegative"));
        }
        let cells: Vec<EquilibriumCell> = families.iter().map(|f| f.cell.clone()).collect();
        let l = cells.len();
        let mut i1 = vec![vec![0.0; l]; l];
        let mut i2 = vec![vec![0.0; l]; l];
        for a in 0..l {
            for b in 0..l {
                i1[a][b] = index_i1(&cells, a, b)?;
                i2[a][b] = match index_i2(families, a, b, samples, seed)? {
                    Some(p) => p as f64,
                    None => families[b].levels() as f64,
                };
            }
        }
        Ok(Self::from_parts(alpha, beta, i1, i2))
    }

    pub fn from_parts(alpha: f64, beta: f64, i1: Vec<Vec<f64>>, i2: Vec<Vec<f64>>) -> Self {
        let l = i1.len();
        let i: Vec<Vec<f64>> = (0..l)
            .map(|a| (0..l).map(|b| alpha * i1[a][b] + beta * i2[a][b]).collect())
            .collect();
        let sorted = (0..l)
            .map(|r| {
                let mut idx: Vec<usize> = (0..l).collect();
                idx.sort_by(|&a, &b| i[a][r].total_cmp(&i[b][r]).then(a.cmp(&b)));
                idx
            })
            .collect();
        Self {
            alpha,
            beta,
            i1,
            i2,
            i,
            sorted,
        }
    }

    /// `I(·, r)` as a vector over state cells.
    pub fn column(&self, r: usize) -> Vec<f64> {
        self.i.iter().map(|row| row[r]).collect()
    }
}

/// Monte Carlo estimate of `Σ_l vol(R ∩ V_l)/vol(R) · I(l, l_r)` with its
/// standard error. Degenerate sets are classified by their center.
pub fn index_j(
    tube_next: &Zonotope,
    seeds: &[DVector<f64>],
    i_col: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let pts = if tube_next.is_full_dimensional() {
        sample_uniform(&Set::Zonotope(tube_next.clone()), n_samples, seed)?
    } else {
        Vec::new()
    };
    if pts.is_empty() {
        return Ok((i_col[classify(seeds, tube_next.center())], 0.0));
    }
    let vals: Vec<f64> = pts.iter().map(|x| i_col[classify(seeds, x)]).collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0).max(1.0);
    Ok((mean, (var / n).sqrt()))
}

// ---------------------------------------------------------------------------
// Tracking supervisor

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum StopReason {
    /// The next tube set may leave the safe region.
    Safety,
    /// The tube drifts toward cells with a worse index.
    Performance,
    /// The history cannot seed a tube, or the tube grew too long.
    NoPrediction,
}

impl StopReason {
    pub fn code(self) -> &'static str {
        match self {
            StopReason::Safety => "safety",
            StopReason::Performance => "performance",
            StopReason::NoPrediction => "no_prediction",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SupervisorMode {
    /// Open-loop tracking on the tube while an anomaly is flagged.
    Tracking,
    /// Invalidate every input while an anomaly is flagged.
    EmergencyOnly,
}

#[derive(Debug, Clone)]
pub struct SupervisorConfig {
    pub detector: DetectorConfig,
    pub mode: SupervisorMode,
    pub j_samples: usize,
    pub seed: u64,
    /// Stop only when `J` grows by more than this many standard errors.
    pub hysteresis: f64,
}

impl Default for SupervisorConfig {
    fn default() -> Self {
        Self {
            detector: DetectorConfig::default(),
            mode: SupervisorMode::Tracking,
            j_samples: 1000,
            seed: 11,
            hysteresis: 1.0,
        }
    }
}

/// `η(x, r)`: the networked tracking controller.
pub type TrackingLaw<'a> = dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + 'a;

/// Shared, read-only inputs of the supervisor.
pub struct SupervisorContext<'a> {
    pub model: &'a MatrixZonotope,
    pub w: &'a Zonotope,
    pub x_eta: &'a HPolytope,
    pub u_set: &'a HPolytope,
    pub seeds: Vec<DVector<f64>>,
    pub table: &'a IndexTable,
    /// The networked tracking law `η(x, r)`.
    pub controller: &'a TrackingLaw<'a>,
}

impl SupervisorContext<'_> {
    /// The intentional invalid input: twice the input-box radius on the
    /// first input axis.
    pub fn invalid_input(&self) -> DVector<f64> {
        let (lo, hi) = self.u_set.bounding_box().expect("bounded input set");
        let mut u = (&lo + &hi) * 0.5;
        u[0] += hi[0] - lo[0];
        u
    }
}

#[derive(Debug, Clone)]
pub struct HistoryEntry {
    pub k: i64,
    pub x_recv: DVector<f64>,
    pub u_sent: DVector<f64>,
    pub valid: bool,
    pub trusted: bool,
}

#[derive(Debug, Clone, Default)]
pub struct SupervisorState {
    pub detector: DetectorState,
    pub tube: Option<ReachTube>,
    pub j_prev: Option<f64>,
    pub j_cell: Option<usize>,
    pub stopped: Option<StopReason>,
    pub history: Vec<HistoryEntry>,
    pub resets: usize,
}

/// What the controller side did at one step.
#[derive(Debug, Clone)]
pub struct SupervisorStep {
    pub u_sent: DVector<f64>,
    pub d: bool,
    pub consistent: bool,
    pub ts_active: bool,
    pub x_hat: DVector<f64>,
    pub j: Option<f64>,
    pub stop: Option<StopReason>,
    /// The tube was dropped because measurements became consistent again.
    pub reset: bool,
    pub ref_cell: usize,
}

impl SupervisorState {
    /// One controller-side step (the supervisor loop body).
    pub fn step(
        &mut self,
        k: i64,
        x_recv: &DVector<f64>,
        r: &DVector<f64>,
        ctx: &SupervisorContext,
        cfg: &SupervisorConfig,
    ) -> Result<SupervisorStep> {
        let u_box = {
            let (lo, hi) = ctx.u_set.bounding_box()?;
            Zonotope::from_box(&lo, &hi)?
        };
        let obs = self
            .detector
            .observe(x_recv, &cfg.detector, ctx.model, ctx.w, &u_box);
        let ref_cell = classify(&ctx.seeds, r);
        let mut reset = false;
        let mut x_hat = x_recv.clone();
        let mut j_out = None;
        let u = if !obs.d {
            if self.tube.is_some() || self.stopped.is_some() {
                reset = true;
                self.resets += 1;
            }
            self.tube = None;
            self.stopped = None;
            self.j_prev = None;
            self.j_cell = None;
            (ctx.controller)(x_recv, r)
        } else if cfg.mode == SupervisorMode::EmergencyOnly {
            self.stopped.get_or_insert(StopReason::NoPrediction);
            ctx.invalid_input()
        } else {
            if self.tube.is_none() && self.stopped.is_none() {
                self.start_tube(k, ctx, cfg)?;
            }
            match (&self.tube, self.stopped) {
                (Some(_), None) => {
                    let (u, xh, j) = self.ts_step(ref_cell, r, ctx, cfg)?;
                    x_hat = xh;
                    j_out = j;
                    u
                }
                _ => ctx.invalid_input(),
            }
        };
        let valid = ctx.u_set.contains_point(&u);
        self.detector.record_sent(x_recv, &u, valid);
        self.history.push(HistoryEntry {
            k,
            x_recv: x_recv.clone(),
            u_sent: u.clone(),
            valid,
            trusted: obs.consistent && !obs.d,
        });
        Ok(SupervisorStep {
            u_sent: u,
            d: obs.d,
            consistent: obs.consistent,
            ts_active: self.tube.is_some() && self.stopped.is_none(),
            x_hat,
            j: j_out,
            stop: self.stopped,
            reset,
            ref_cell,
        })
    }

    /// Anchors a tube at the latest trusted measurement no later than
    /// `k − τ − 1` and replays the inputs sent since.
    fn start_tube(
        &mut self,
        k: i64,
        ctx: &SupervisorContext,
        cfg: &SupervisorConfig,
    ) -> Result<()> {
        let limit = k - cfg.detector.tau as i64 - 1;
        let anchor = self.history.iter().rposition(|h| h.k <= limit && h.trusted);
        let Some(a) = anchor else {
            self.stopped = Some(StopReason::NoPrediction);
            return Ok(());
        };
        if self.history[a..].iter().any(|h| !h.valid) {
            // The plant ran its own controller at some point since the
            // anchor; the sent inputs no longer describe the applied ones.
            self.stopped = Some(StopReason::NoPrediction);
            return Ok(());
        }
        let mut tube = ReachTube::reset(self.history[a].k, self.history[a].x_recv.clone());
        for h in &self.history[a..] {
            tube.extend(ctx.model, &h.u_sent, ctx.w)?;
        }
        self.tube = Some(tube);
        Ok(())
    }

    fn ts_step(
        &mut self,
        ref_cell: usize,
        r: &DVector<f64>,
        ctx: &SupervisorContext,
        cfg: &SupervisorConfig,
    ) -> Result<(DVector<f64>, DVector<f64>, Option<f64>)> {
        let col = ctx.table.column(ref_cell);
        let tube = self.tube.as_ref().expect("active tube");
        let current = tube.last().clone();
        let j_now = match (self.j_prev, self.j_cell) {
            (Some(j), Some(c)) if c == ref_cell => j,
            _ => index_j(&current, &ctx.seeds, &col, cfg.j_samples, cfg.seed)?.0,
        };
        let x_hat = current.center().clone();
        let u = (ctx.controller)(&x_hat, r);
        if tube.inputs_applied.len() >= TUBE_HORIZON_CAP {
            self.stopped = Some(StopReason::NoPrediction);
            return Ok((ctx.invalid_input(), x_hat, Some(j_now)));
        }
        let next = tube.predict(ctx.model, &u, ctx.w)?;
        if !ctx.x_eta.contains_zonotope(&next) {
            self.stopped = Some(StopReason::Safety);
            return Ok((ctx.invalid_input(), x_hat, Some(j_now)));
        }
        let (j_next, se) = index_j(&next, &ctx.seeds, &col, cfg.j_samples, cfg.seed)?;
        if j_next > j_now + cfg.hysteresis * se {
            self.stopped = Some(StopReason::Performance);
            return Ok((ctx.invalid_input(), x_hat, Some(j_next)));
        }
        let tube = self.tube.as_mut().expect("active tube");
        tube.sets.push(next);
        tube.inputs_applied.push(u.clone());
        self.j_prev = Some(j_next);
        self.j_cell = Some(ref_cell);
        Ok((u, x_hat, Some(j_next)))
    }
}

/// Runs the supervisor over a recorded measurement/reference sequence.
/// Mostly useful for replaying traces; the closed loop lives in `sim`.
pub fn supervisor_loop(
    xs: &[DVector<f64>],
    rs: &[DVector<f64>],
    ctx: &SupervisorContext,
    cfg: &SupervisorConfig,
) -> Result<Vec<SupervisorStep>> {
    let mut st = SupervisorState::default();
    xs.iter()
        .zip(rs)
        .enumerate()
        .map(|(k, (x, r))| st.step(k as i64, x, r, ctx, cfg))
        .collect()
}

/// Column-stacked helper used by tests and reports.
pub fn table_matrix(rows: &[Vec<f64>]) -> DMatrix<f64> {
    let l = rows.len();
    DMatrix::from_fn(l, l, |a, b| rows[a][b])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_row_slice(x)
    }

    fn bx(lo: &[f64], hi: &[f64]) -> Zonotope {
        Zonotope::from_box(&v(lo), &v(hi)).unwrap()
    }

    fn cell(i: usize, x_e: &[f64], t0: Zonotope) -> EquilibriumCell {
        EquilibriumCell {
            index: i,
            seed: v(x_e),
            x_e: v(x_e),
            u_e: v(&[0.0, 0.0]),
            gain: DMatrix::zeros(2, 2),
            t0,
            cell: HPolytope::from_box(&v(&[-1.0, -1.0]), &v(&[1.0, 1.0])).unwrap(),
        }
    }

    #[test]
    fn i1_examples() {
        let d = 0.1;
        let cells = vec![
            cell(0, &[0.0, 0.0], bx(&[-d, -d], &[d, d])),
            cell(1, &[3.0, 4.0], Zonotope::point(v(&[3.0, 4.0]))),
        ];
        assert!((index_i1(&cells, 0, 0).unwrap() - d * 2f64.sqrt()).abs() < 1e-12);
        assert!((index_i1(&cells, 1, 0).unwrap() - 5.0).abs() < 1e-12);
    }

    #[test]
    fn sorted_rows_ascend() {
        let i1 = vec![
            vec![0.0, 3.0, 1.0],
            vec![2.0, 0.0, 5.0],
            vec![1.0, 1.0, 0.0],
        ];
        let t = IndexTable::from_parts(1.0, 0.0, i1.clone(), vec![vec![0.0; 3]; 3]);
        for r in 0..3 {
            let col = t.column(r);
            let s = &t.sorted[r];
            assert!(s.windows(2).all(|p| col[p[0]] <= col[p[1]]));
        }
        assert_eq!(t.sorted[0], vec![0, 2, 1]);
        let t = IndexTable::from_parts(2.0, 0.5, i1, vec![vec![1.0; 3]; 3]);
        assert_eq!(t.i[0][1], 6.5);
    }

    #[test]
    fn j_examples() {
        let seeds = vec![v(&[-1.0, 0.0]), v(&[1.0, 0.0])];
        let col = [3.0, 7.0];
        let (j, se) = index_j(&bx(&[0.2, -0.1], &[0.8, 0.1]), &seeds, &col, 500, 1).unwrap();
        assert_eq!((j, se), (7.0, 0.0));
        let (j, se) = index_j(&bx(&[-0.5, -0.5], &[0.5, 0.5]), &seeds, &col, 4000, 1).unwrap();
        assert!((j - 5.0).abs() <= 3.0 * se + 1e-12, "{j} ± {se}");
        let (j, _) = index_j(&Zonotope::point(v(&[-0.3, 0.0])), &seeds, &col, 10, 1).unwrap();
        assert_eq!(j, 3.0);
    }

    #[test]
    fn detector_flags_and_clears() {
        let m = MatrixZonotope::singleton(DMatrix::from_row_slice(1, 2, &[0.5, 1.0]));
        let w = bx(&[-0.01], &[0.01]);
        let ub = bx(&[-1.0], &[1.0]);
        let cfg = DetectorConfig {
            tau: 2,
            clear_streak: 3,
        };
        let mut det = DetectorState::default();
        let mut x = v(&[0.0]);
        let u = v(&[0.2]);
        assert!(!det.observe(&x, &cfg, &m, &w, &ub).d);
        det.record_sent(&x, &u, true);
        // Center of the one-step set is consistent.
        x = v(&[0.2]);
        assert!(!det.observe(&x, &cfg, &m, &w, &ub).d);
        det.record_sent(&x, &u, true);
        x = v(&[0.5]);
        let o = det.observe(&x, &cfg, &m, &w, &ub);
        assert!(o.d && o.raised);
        det.record_sent(&x, &u, true);
        let mut cleared_at = None;
        for k in 0..5 {
            x = v(&[0.5 * x[0] + 0.2]);
            let o = det.observe(&x, &cfg, &m, &w, &ub);
            det.record_sent(&x, &u, true);
            if o.cleared {
                cleared_at = Some(k);
                break;
            }
        }
        assert_eq!(cleared_at, Some(2));
    }

    #[test]
    fn relaxed_mode_accepts_unknown_inputs() {
        let m = MatrixZonotope::singleton(DMatrix::from_row_slice(1, 2, &[0.5, 1.0]));
        let w = bx(&[-0.01], &[0.01]);
        let ub = bx(&[-1.0], &[1.0]);
        let cfg = DetectorConfig::default();
        let mut det = DetectorState::default();
        let x = v(&[0.0]);
        det.observe(&x, &cfg, &m, &w, &ub);
        det.record_sent(&x, &v(&[4.0]), false);
        // The plant applied some u ∈ [−1, 1] instead of the invalid one.
        let o = det.observe(&v(&[-0.7]), &cfg, &m, &w, &ub);
        assert!(o.consistent && !o.d);
        det.record_sent(&v(&[-0.7]), &v(&[4.0]), false);
        let o = det.observe(&v(&[3.0]), &cfg, &m, &w, &ub);
        assert!(!o.consistent && o.d);
    }
}
