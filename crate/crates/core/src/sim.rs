//! Closed-loop scenario engine: true plant, networked tracking controller,
//! attack injection, the synthesis bundle, traces and metrics. Ships the
//! CSTR case study as [`cstr_scenario`].

use std::io::{Read, Write};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ctrlsets::{
    build_cells, build_family, CellSpec, EquilibriumCell, FamilyOptions, RciOptions, RoscFamily,
};
use crate::error::{check_dim, Error, Result};
use crate::safety::{Guard, SafetyState, Verdict};
use crate::setkernel::json::{
    mat_from_json, mat_to_json, vec_from_json, vec_to_json, MatrixZonotopeJson, SetJson,
};
use crate::setkernel::sample::stream_rng;
use crate::supervisor::{
    DetectorConfig, IndexTable, StopReason, SupervisorConfig, SupervisorContext, SupervisorMode,
    SupervisorState,
};
use crate::sysid::{identify_bank, split_ab, Trajectory, TrajectoryBank};
use crate::{HPolytope, MatrixZonotope, Zonotope};

// ---------------------------------------------------------------------------
// Configuration

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantConfig {
    #[serde(rename = "A")]
    pub a: Vec<Vec<f64>>,
    #[serde(rename = "B")]
    pub b: Vec<Vec<f64>>,
    #[serde(rename = "W")]
    pub w: SetJson,
    #[serde(rename = "X")]
    pub x: SetJson,
    #[serde(rename = "U")]
    pub u: SetJson,
    pub x0: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControllerConfig {
    #[serde(rename = "Kt")]
    pub kt: Vec<Vec<f64>>,
    #[serde(rename = "X_eta")]
    pub x_eta: SetJson,
}

/// A Voronoi generator; `u_e` pins the terminal equilibrium to `(x_e, u_e)`
/// instead of the nearest admissible equilibrium.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellConfig {
    pub x_e: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub u_e: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Weights {
    pub alpha: f64,
    pub beta: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Measurement,
    Actuation,
}

/// `offset + slope·(k − origin)` on `start ≤ k ≤ end`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackWindow {
    pub start: i64,
    pub end: i64,
    pub origin: i64,
    pub slope: Vec<f64>,
    #[serde(default)]
    pub offset: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    #[serde(default)]
    pub name: String,
    pub channel: Channel,
    pub windows: Vec<AttackWindow>,
}

impl AttackSpec {
    /// Additive signal at `k` (zero outside every window).
    pub fn signal(&self, k: i64, dim: usize) -> DVector<f64> {
        let mut s = DVector::zeros(dim);
        for w in &self.windows {
            if k >= w.start && k <= w.end {
                let t = (k - w.origin) as f64;
                for i in 0..dim {
                    s[i] += w.offset.get(i).copied().unwrap_or(0.0)
                        + w.slope.get(i).copied().unwrap_or(0.0) * t;
                }
            }
        }
        s
    }

    pub fn active(&self, k: i64) -> bool {
        self.windows.iter().any(|w| k >= w.start && k <= w.end)
    }
}

/// `clean` plus every active signal on `channel`.
pub fn inject(
    attacks: &[AttackSpec],
    channel: Channel,
    k: i64,
    clean: &DVector<f64>,
) -> DVector<f64> {
    attacks
        .iter()
        .filter(|a| a.channel == channel)
        .fold(clean.clone(), |acc, a| acc + a.signal(k, clean.len()))
}

/// Piecewise-constant reference: `r` from step `k` on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub k: i64,
    pub r: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DataConfig {
    pub trajectories: usize,
    pub length: usize,
    pub seed: u64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            trajectories: 4,
            length: 50,
            seed: 2024,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub plant: PlantConfig,
    pub controller: ControllerConfig,
    pub cells: Vec<CellConfig>,
    pub weights: Weights,
    pub detector: DetectorConfig,
    pub attacks: Vec<AttackSpec>,
    pub reference: Vec<Waypoint>,
    pub horizon: usize,
    pub seed: u64,
    #[serde(default)]
    pub data: DataConfig,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn reference_at(&self, k: i64) -> DVector<f64> {
        let wp = self
            .reference
            .iter()
            .rev()
            .find(|w| w.k <= k)
            .or(self.reference.first())
            .expect("validated: nonempty reference");
        vec_from_json(&wp.r)
    }

    pub fn without_attacks(&self) -> Self {
        Self {
            attacks: Vec::new(),
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let plant = Plant::from_config(&self.plant)?;
        let n = plant.n();
        let m = plant.m();
        if !plant.x_set.contains_point(&plant.x0) {
            return Err(Error::invalid("x0 is outside X"));
        }
        let kt: DMatrix<f64> = mat_from_json(&self.controller.kt, n)?;
        if kt.shape() != (m, n) {
            return Err(Error::invalid("Kt must be m × n"));
        }
        check_dim(n, self.controller.x_eta.to_hpolytope::<f64>()?.dim())?;
        if self.cells.is_empty() {
            return Err(Error::invalid("at least one cell is required"));
        }
        for c in &self.cells {
            check_dim(n, c.x_e.len())?;
            if let Some(u) = &c.u_e {
                check_dim(m, u.len())?;
            }
        }
        if self.weights.alpha < 0.0 || self.weights.beta < 0.0 {
            return Err(Error::invalid("weights must be nonnegative"));
        }
        if self.reference.is_empty() {
            return Err(Error::invalid("reference schedule is empty"));
        }
        for w in &self.reference {
            check_dim(n, w.r.len())?;
        }
        for ch in [Channel::Measurement, Channel::Actuation] {
            let dim = if ch == Channel::Measurement { n } else { m };
            let mut spans: Vec<(i64, i64)> = Vec::new();
            for a in self.attacks.iter().filter(|a| a.channel == ch) {
                for w in &a.windows {
                    if w.end < w.start {
                        return Err(Error::invalid("attack window ends before it starts"));
                    }
                    if w.slope.len() != dim || !(w.offset.is_empty() || w.offset.len() == dim) {
                        return Err(Error::invalid("attack signal has the wrong dimension"));
                    }
                    spans.push((w.start, w.end));
                }
            }
            spans.sort();
            if spans.windows(2).any(|p| p[1].0 <= p[0].1) {
                return Err(Error::invalid("attack windows overlap on one channel"));
            }
        }
        if self.data.trajectories == 0 || self.data.length == 0 {
            return Err(Error::invalid("data collection needs at least one step"));
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Plant and controller

#[derive(Debug, Clone)]
pub struct Plant {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub w: Zonotope,
    pub x_set: HPolytope,
    pub u_set: HPolytope,
    pub x0: DVector<f64>,
}

impl Plant {
    pub fn from_config(c: &PlantConfig) -> Result<Self> {
        let a: DMatrix<f64> = mat_from_json(&c.a, 0)?;
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::invalid("A must be square"));
        }
        let b: DMatrix<f64> = mat_from_json(&c.b, 0)?;
        check_dim(n, b.nrows())?;
        let w = c.w.to_zonotope()?;
        let x_set = c.x.to_hpolytope()?;
        let u_set = c.u.to_hpolytope()?;
        check_dim(n, w.dim())?;
        check_dim(n, x_set.dim())?;
        check_dim(b.ncols(), u_set.dim())?;
        if x_set.is_empty() || u_set.is_empty() {
            return Err(Error::invalid("X and U must be nonempty"));
        }
        let x0 = vec_from_json(&c.x0);
        check_dim(n, x0.len())?;
        Ok(Self {
            a,
            b,
            w,
            x_set,
            u_set,
            x0,
        })
    }

    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn m(&self) -> usize {
        self.b.ncols()
    }

    /// A disturbance `c + Gβ` with `β` uniform on the unit cube (uniform on
    /// `W` when `W` is a box).
    pub fn draw_w<R: Rng>(&self, rng: &mut R) -> DVector<f64> {
        let g = self.w.num_generators();
        let beta = DVector::from_iterator(g, (0..g).map(|_| rng.gen_range(-1.0..=1.0)));
        self.w.center() + self.w.generators() * beta
    }

    /// `x⁺ = Ax + Bu + w` with `w` drawn from `W`.
    pub fn step<R: Rng>(&self, x: &DVector<f64>, u: &DVector<f64>, rng: &mut R) -> DVector<f64> {
        let w = self.draw_w(rng);
        plant_step(&self.a, &self.b, x, u, &w)
    }
}

/// The noise-free part plus a given disturbance.
pub fn plant_step(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    x: &DVector<f64>,
    u: &DVector<f64>,
    w: &DVector<f64>,
) -> DVector<f64> {
    a * x + b * u + w
}

/// Saturated state-feedback tracking law
/// `u = u_ref(r) + s·K_t(x − r)` with the largest `s ∈ [0, 1]` keeping
/// `u` in the input box. `u_ref(r)` is the steady-state input of the
/// nominal (center) model.
#[derive(Debug, Clone)]
pub struct Tracker {
    pub kt: DMatrix<f64>,
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    lo: DVector<f64>,
    hi: DVector<f64>,
    x_lo: DVector<f64>,
    x_hi: DVector<f64>,
}

impl Tracker {
    pub fn new(
        kt: DMatrix<f64>,
        nominal: &DMatrix<f64>,
        u_set: &HPolytope,
        x_eta: &HPolytope,
    ) -> Result<Self> {
        let n = kt.ncols();
        let (a, b) = split_ab(nominal, n);
        let (lo, hi) = u_set.bounding_box()?;
        let (x_lo, x_hi) = x_eta.bounding_box()?;
        Ok(Self {
            kt,
            a,
            b,
            lo,
            hi,
            x_lo,
            x_hi,
        })
    }

    /// Steady-state input for `r` (least squares when `B` is not square).
    pub fn u_ref(&self, r: &DVector<f64>) -> DVector<f64> {
        let n = r.len();
        let rhs = (DMatrix::identity(n, n) - &self.a) * r;
        crate::setkernel::linalg::pinv(&self.b) * rhs
    }

    pub fn control(&self, x: &DVector<f64>, r: &DVector<f64>) -> DVector<f64> {
        // States outside X_η are clamped onto its bounding box.
        let x = x.zip_zip_map(&self.x_lo, &self.x_hi, |v, l, h| v.clamp(l, h));
        let u0 = self
            .u_ref(r)
            .zip_zip_map(&self.lo, &self.hi, |v, l, h| v.clamp(l, h));
        let du = &self.kt * (x - r);
        let mut s: f64 = 1.0;
        for i in 0..du.len() {
            if du[i] > 0.0 {
                s = s.min((self.hi[i] - u0[i]) / du[i]);
            } else if du[i] < 0.0 {
                s = s.min((self.lo[i] - u0[i]) / du[i]);
            }
        }
        let u = u0 + du * s.max(0.0);
        u.zip_zip_map(&self.lo, &self.hi, |v, l, h| v.clamp(l, h))
    }
}

/// `−B⁺(A − λI)`: places the nominal closed loop at `λI`.
pub fn pole_placement_gain(a: &DMatrix<f64>, b: &DMatrix<f64>, lambda: f64) -> DMatrix<f64> {
    let n = a.nrows();
    -(crate::setkernel::linalg::pinv(b) * (a - DMatrix::identity(n, n) * lambda))
}

// ---------------------------------------------------------------------------
// Data and synthesis

/// Random-input experiments on the true plant, starting at `x0`.
pub fn collect_data(plant: &Plant, data: &DataConfig) -> Result<TrajectoryBank> {
    let (lo, hi) = plant.u_set.bounding_box()?;
    let (n, m) = (plant.n(), plant.m());
    let mut trajectories = Vec::with_capacity(data.trajectories);
    for t in 0..data.trajectories {
        let mut rng = stream_rng(data.seed, 1000 + t as u64);
        let mut x = DMatrix::zeros(n, data.length + 1);
        let mut u = DMatrix::zeros(m, data.length);
        x.set_column(0, &plant.x0);
        for k in 0..data.length {
            let uk = DVector::from_iterator(m, (0..m).map(|i| rng.gen_range(lo[i]..=hi[i])));
            let xk = x.column(k).into_owned();
            x.set_column(k + 1, &plant.step(&xk, &uk, &mut rng));
            u.set_column(k, &uk);
        }
        trajectories.push(Trajectory { u, x });
    }
    let g = plant.w.generators();
    Ok(TrajectoryBank {
        trajectories,
        noise_center: plant.w.center().clone(),
        noise_generators: (0..g.ncols()).map(|j| g.column(j).into_owned()).collect(),
    })
}

/// Tunables of the offline synthesis.
#[derive(Debug, Clone)]
pub struct SynthOptions {
    /// Terminal equilibria keep their inputs this far inside the box.
    pub u_margin: f64,
    pub rci: RciOptions,
    pub family: FamilyOptions,
    pub index_samples: usize,
}

impl Default for SynthOptions {
    fn default() -> Self {
        Self {
            u_margin: 0.2,
            rci: RciOptions::default(),
            family: FamilyOptions::default(),
            index_samples: 1000,
        }
    }
}

/// Everything computed offline, shared read-only by both sides.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub model: MatrixZonotope,
    pub families: Vec<RoscFamily>,
    pub table: IndexTable,
    pub x_set: HPolytope,
    pub x_eta: HPolytope,
    pub u_set: HPolytope,
    pub w: Zonotope,
}

impl Synthesis {
    pub fn seeds(&self) -> Vec<DVector<f64>> {
        self.families.iter().map(|f| f.cell.seed.clone()).collect()
    }

    pub fn cells(&self) -> Vec<EquilibriumCell> {
        self.families.iter().map(|f| f.cell.clone()).collect()
    }

    pub fn guard(&self) -> Guard<'_> {
        Guard {
            model: &self.model,
            w: &self.w,
            u_set: &self.u_set,
            x_eta: &self.x_eta,
            families: &self.families,
            fw_steps: 3,
        }
    }
}

/// Identification, cells, families and index tables.
pub fn synthesize(
    bank: &TrajectoryBank,
    cfg: &ScenarioConfig,
    opts: &SynthOptions,
) -> Result<Synthesis> {
    let plant = Plant::from_config(&cfg.plant)?;
    let model = identify_bank(bank)?;
    let x_eta = cfg.controller.x_eta.to_hpolytope()?;
    let specs: Vec<CellSpec> = cfg
        .cells
        .iter()
        .map(|c| CellSpec {
            seed: vec_from_json(&c.x_e),
            x_e: c.u_e.as_ref().map(|_| vec_from_json(&c.x_e)),
            u_e: c.u_e.as_ref().map(|u| vec_from_json(u)),
        })
        .collect();
    let reduced = model.compact().reduce(opts.family.g_max);
    let cells = build_cells(
        &reduced,
        &specs,
        &x_eta,
        &plant.u_set,
        &plant.w,
        opts.u_margin,
        &opts.rci,
    )?;
    let t0s: Vec<Zonotope> = cells.iter().map(|c| c.t0.clone()).collect();
    let families = cells
        .into_par_iter()
        .map(|c| {
            let others: Vec<Zonotope> = t0s
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != c.index)
                .map(|(_, z)| z.clone())
                .collect();
            build_family(
                c,
                &reduced,
                &plant.x_set,
                &plant.u_set,
                &plant.w,
                &others,
                &opts.family,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let table = IndexTable::build(
        &families,
        cfg.weights.alpha,
        cfg.weights.beta,
        opts.index_samples,
        opts.family.seed,
    )?;
    Ok(Synthesis {
        model,
        families,
        table,
        x_set: plant.x_set,
        x_eta,
        u_set: plant.u_set,
        w: plant.w,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellJson {
    pub index: usize,
    pub seed: Vec<f64>,
    pub x_e: Vec<f64>,
    pub u_e: Vec<f64>,
    pub gain: Vec<Vec<f64>>,
    pub t0: SetJson,
    pub cell: SetJson,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FamilyJson {
    pub cell: CellJson,
    pub c: Vec<SetJson>,
    pub xi: Vec<SetJson>,
    pub n_main: usize,
    pub coverage: f64,
    pub stalled: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SynthesisJson {
    pub model: MatrixZonotopeJson,
    pub families: Vec<FamilyJson>,
    pub table: IndexTable,
    #[serde(rename = "X")]
    pub x_set: SetJson,
    #[serde(rename = "X_eta")]
    pub x_eta: SetJson,
    #[serde(rename = "U")]
    pub u_set: SetJson,
    #[serde(rename = "W")]
    pub w: SetJson,
}

impl SynthesisJson {
    pub fn from_synthesis(s: &Synthesis) -> Self {
        let families = s
            .families
            .iter()
            .map(|f| FamilyJson {
                cell: CellJson {
                    index: f.cell.index,
                    seed: vec_to_json(&f.cell.seed),
                    x_e: vec_to_json(&f.cell.x_e),
                    u_e: vec_to_json(&f.cell.u_e),
                    gain: mat_to_json(&f.cell.gain),
                    t0: (&f.cell.t0).into(),
                    cell: (&f.cell.cell).into(),
                },
                c: f.c.iter().map(SetJson::from).collect(),
                xi: f.xi.iter().map(SetJson::from).collect(),
                n_main: f.n_main,
                coverage: f.coverage,
                stalled: f.stalled,
            })
            .collect();
        Self {
            model: MatrixZonotopeJson::from_mz(&s.model),
            families,
            table: s.table.clone(),
            x_set: (&s.x_set).into(),
            x_eta: (&s.x_eta).into(),
            u_set: (&s.u_set).into(),
            w: (&s.w).into(),
        }
    }

    pub fn to_synthesis(&self) -> Result<Synthesis> {
        let families = self
            .families
            .iter()
            .map(|f| {
                let n = f.cell.x_e.len();
                Ok(RoscFamily {
                    cell: EquilibriumCell {
                        index: f.cell.index,
                        seed: vec_from_json(&f.cell.seed),
                        x_e: vec_from_json(&f.cell.x_e),
                        u_e: vec_from_json(&f.cell.u_e),
                        gain: mat_from_json(&f.cell.gain, n)?,
                        t0: f.cell.t0.to_zonotope()?,
                        cell: f.cell.cell.to_hpolytope()?,
                    },
                    c: f.c
                        .iter()
                        .map(|s| s.to_hpolytope())
                        .collect::<Result<_>>()?,
                    xi: f
                        .xi
                        .iter()
                        .map(|s| s.to_hpolytope())
                        .collect::<Result<_>>()?,
                    n_main: f.n_main,
                    coverage: f.coverage,
                    stalled: f.stalled,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Synthesis {
            model: self.model.to_mz()?,
            families,
            table: self.table.clone(),
            x_set: self.x_set.to_hpolytope()?,
            x_eta: self.x_eta.to_hpolytope()?,
            u_set: self.u_set.to_hpolytope()?,
            w: self.w.to_zonotope()?,
        })
    }
}

// ---------------------------------------------------------------------------
// Closed loop

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RunMode {
    /// Detector, tracking supervisor, verification and EC.
    Proposed,
    /// Any detection invalidates the input.
    EcOnly,
    /// Attacks removed.
    NoAttack,
}

impl std::str::FromStr for RunMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(RunMode::Proposed),
            "ec-only" => Ok(RunMode::EcOnly),
            "no-attack" => Ok(RunMode::NoAttack),
            _ => Err(Error::invalid(format!("unknown mode {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceRow {
    pub k: i64,
    pub x_true: DVector<f64>,
    pub x_recv: DVector<f64>,
    pub u_sent: DVector<f64>,
    pub u_recv: DVector<f64>,
    pub u_applied: DVector<f64>,
    pub d: bool,
    pub f: bool,
    pub verdict: Verdict,
    pub ec: bool,
    pub cell: Option<usize>,
    pub level: Option<usize>,
    pub j: Option<f64>,
    pub stop_reason: Option<StopReason>,
    pub ts_active: bool,
    pub reset: bool,
    pub x_hat: DVector<f64>,
    pub r: DVector<f64>,
    pub alarm: bool,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ScenarioTrace {
    pub rows: Vec<TraceRow>,
}

fn push_vec(rec: &mut Vec<String>, v: &DVector<f64>) {
    rec.extend(v.iter().map(|x| x.to_string()));
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn b01(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

impl ScenarioTrace {
    pub fn header(n: usize, m: usize) -> Vec<String> {
        let mut h = vec!["k".to_string()];
        let vecs = |h: &mut Vec<String>, name: &str, d: usize| {
            h.extend((0..d).map(|i| format!("{name}{i}")));
        };
        vecs(&mut h, "x_true", n);
        vecs(&mut h, "x_recv", n);
        vecs(&mut h, "u_sent", m);
        vecs(&mut h, "u_recv", m);
        vecs(&mut h, "u_applied", m);
        for s in [
            "d",
            "f",
            "verdict",
            "ec",
            "cell",
            "level",
            "J",
            "stop_reason",
            "ts_active",
            "reset",
        ] {
            h.push(s.into());
        }
        vecs(&mut h, "x_hat", n);
        vecs(&mut h, "r", n);
        h.push("alarm".into());
        h
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut wr = csv::Writer::from_writer(out);
        let (n, m) = self
            .rows
            .first()
            .map_or((0, 0), |r| (r.x_true.len(), r.u_sent.len()));
        wr.write_record(Self::header(n, m))?;
        for r in &self.rows {
            let mut rec = vec![r.k.to_string()];
            push_vec(&mut rec, &r.x_true);
            push_vec(&mut rec, &r.x_recv);
            push_vec(&mut rec, &r.u_sent);
            push_vec(&mut rec, &r.u_recv);
            push_vec(&mut rec, &r.u_applied);
            rec.push(b01(r.d).into());
            rec.push(b01(r.f).into());
            rec.push(r.verdict.code().into());
            rec.push(b01(r.ec).into());
            rec.push(opt(r.cell.map(|c| c + 1)));
            rec.push(opt(r.level));
            rec.push(opt(r.j));
            rec.push(
                r.stop_reason
                    .map_or(String::new(), |s| s.code().to_string()),
            );
            rec.push(b01(r.ts_active).into());
            rec.push(b01(r.reset).into());
            push_vec(&mut rec, &r.x_hat);
            push_vec(&mut rec, &r.r);
            rec.push(b01(r.alarm).into());
            wr.write_record(&rec)?;
        }
        wr.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("in-memory write");
        String::from_utf8(buf).expect("utf-8")
    }

    /// Parses a trace written by [`ScenarioTrace::write_csv`].
    pub fn read_csv<R: Read>(input: R) -> Result<Self> {
        let mut rd = csv::Reader::from_reader(input);
        let header: Vec<String> = rd.headers()?.iter().map(String::from).collect();
        let count = |p: &str| {
            header
                .iter()
                .filter(|h| {
                    h.strip_prefix(p)
                        .is_some_and(|t| t.parse::<usize>().is_ok())
                })
                .count()
        };
        let (n, m) = (count("x_true"), count("u_sent"));
        if header != Self::header(n, m) {
            return Err(Error::invalid("unrecognized trace header"));
        }
        let mut rows = Vec::new();
        for rec in rd.records() {
            let rec = rec?;
            let mut it = rec.iter();
            let mut next = || it.next().unwrap_or("").to_string();
            let num = |s: String| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|_| Error::invalid(format!("bad number {s:?}")))
            };
            let k: i64 = next()
                .parse()
                .map_err(|_| Error::invalid("bad step index"))?;
            let vecn = |d: usize, next: &mut dyn FnMut() -> String| -> Result<DVector<f64>> {
                let v = (0..d).map(|_| num(next())).collect::<Result<Vec<_>>>()?;
                Ok(DVector::from_vec(v))
            };
            let x_true = vecn(n, &mut next)?;
            let x_recv = vecn(n, &mut next)?;
            let u_sent = vecn(m, &mut next)?;
            let u_recv = vecn(m, &mut next)?;
            let u_applied = vecn(m, &mut next)?;
            let d = next() == "1";
            let f = next() == "1";
            let verdict = match next().as_str() {
                "safe" => Verdict::Safe,
                "unsafe_input" => Verdict::UnsafeInput,
                _ => Verdict::UnsafeReach,
            };
            let ec = next() == "1";
            let cell = next().parse::<usize>().ok().map(|c| c - 1);
            let level = next().parse::<usize>().ok();
            let j = next().parse::<f64>().ok();
            let stop_reason = match next().as_str() {
                "safety" => Some(StopReason::Safety),
                "performance" => Some(StopReason::Performance),
                "no_prediction" => Some(StopReason::NoPrediction),
                _ => None,
            };
            let ts_active = next() == "1";
            let reset = next() == "1";
            let x_hat = vecn(n, &mut next)?;
            let r = vecn(n, &mut next)?;
            let alarm = next() == "1";
            rows.push(TraceRow {
                k,
                x_true,
                x_recv,
                u_sent,
                u_recv,
                u_applied,
                d,
                f,
                verdict,
                ec,
                cell,
                level,
                j,
                stop_reason,
                ts_active,
                reset,
                x_hat,
                r,
                alarm,
            });
        }
        Ok(Self { rows })
    }
}

/// Runs one closed-loop scenario. Message order per step: the controller
/// receives `x'_k`, the detector and supervisor produce `u_k`, the network
/// delivers `u'_k`, the plant verifies it (or runs the EC) and steps.
pub fn run_scenario(
    cfg: &ScenarioConfig,
    synth: &Synthesis,
    seed: u64,
    mode: RunMode,
) -> Result<ScenarioTrace> {
    cfg.validate()?;
    let plant = Plant::from_config(&cfg.plant)?;
    let attacks: &[AttackSpec] = if mode == RunMode::NoAttack {
        &[]
    } else {
        &cfg.attacks
    };
    let kt: DMatrix<f64> = mat_from_json(&cfg.controller.kt, plant.n())?;
    let tracker = Tracker::new(kt, synth.model.center(), &synth.u_set, &synth.x_eta)?;
    let controller = |x: &DVector<f64>, r: &DVector<f64>| tracker.control(x, r);
    let ctx = SupervisorContext {
        model: &synth.model,
        w: &synth.w,
        x_eta: &synth.x_eta,
        u_set: &synth.u_set,
        seeds: synth.seeds(),
        table: &synth.table,
        controller: &controller,
    };
    let sup_cfg = SupervisorConfig {
        detector: cfg.detector,
        mode: if mode == RunMode::EcOnly {
            SupervisorMode::EmergencyOnly
        } else {
            SupervisorMode::Tracking
        },
        seed: seed ^ 0x5eed,
        ..Default::default()
    };
    let guard = synth.guard();
    let mut rng = stream_rng(seed, 0);
    let mut sup = SupervisorState::default();
    let mut safety = SafetyState::tracking();
    let mut x = plant.x0.clone();
    let mut rows = Vec::with_capacity(cfg.horizon);
    for k in 0..cfg.horizon as i64 {
        let r = cfg.reference_at(k);
        let x_recv = inject(attacks, Channel::Measurement, k, &x);
        let s = sup.step(k, &x_recv, &r, &ctx, &sup_cfg)?;
        let u_recv = inject(attacks, Channel::Actuation, k, &s.u_sent);
        let (u_app, verdict, ec, next) = guard.plant_side_step(&u_recv, &x, &safety);
        rows.push(TraceRow {
            k,
            x_true: x.clone(),
            x_recv,
            u_sent: s.u_sent,
            u_recv,
            u_applied: u_app.clone(),
            d: s.d,
            f: next.f,
            verdict,
            ec: ec.is_some(),
            cell: ec.as_ref().map(|e| e.cell),
            level: ec.as_ref().map(|e| e.level),
            j: s.j,
            stop_reason: s.stop,
            ts_active: s.ts_active,
            reset: s.reset,
            x_hat: s.x_hat,
            r,
            alarm: ec.as_ref().is_some_and(|e| e.alarm),
        });
        safety = next;
        x = plant.step(&x, &u_app, &mut rng);
    }
    Ok(ScenarioTrace { rows })
}

/// The same wiring with the tracking supervisor disabled.
pub fn baseline_ec_only(
    cfg: &ScenarioConfig,
    synth: &Synthesis,
    seed: u64,
) -> Result<ScenarioTrace> {
    run_scenario(cfg, synth, seed, RunMode::EcOnly)
}

/// Runs several seeds in parallel; results keep the input order.
pub fn run_seeds(
    cfg: &ScenarioConfig,
    synth: &Synthesis,
    seeds: &[u64],
    mode: RunMode,
) -> Result<Vec<ScenarioTrace>> {
    seeds
        .par_iter()
        .map(|&s| run_scenario(cfg, synth, s, mode))
        .collect()
}

// ---------------------------------------------------------------------------
// Metrics

/// Mean tracking error `Σ_{k≥1} ‖x_k − r_k‖ / N`.
pub fn metric_er(trace: &ScenarioTrace) -> f64 {
    let rows: Vec<&TraceRow> = trace.rows.iter().filter(|r| r.k >= 1).collect();
    if rows.is_empty() {
        return 0.0;
    }
    rows.iter().map(|r| (&r.x_true - &r.r).norm()).sum::<f64>() / rows.len() as f64
}

/// Steps where `x ∉ X` or the applied input is outside `U`.
pub fn violations(trace: &ScenarioTrace, x_set: &HPolytope, u_set: &HPolytope) -> Vec<i64> {
    trace
        .rows
        .iter()
        .filter(|r| !x_set.contains_point(&r.x_true) || !u_set.contains_point(&r.u_applied))
        .map(|r| r.k)
        .collect()
}

/// Steps after `end` until the mean tracking error over the next 5 steps
/// drops back to the 10-step mean before `start` (plus a small absolute
/// slack). `None` when it never does within the trace.
pub fn recovery_steps(trace: &ScenarioTrace, start: i64, end: i64) -> Option<usize> {
    let err = |r: &TraceRow| (&r.x_true - &r.r).norm();
    let before: Vec<f64> = trace
        .rows
        .iter()
        .filter(|r| r.k >= start - 10 && r.k < start)
        .map(err)
        .collect();
    if before.is_empty() {
        return Some(0);
    }
    let base = before.iter().sum::<f64>() / before.len() as f64 + 0.05;
    let after: Vec<f64> = trace.rows.iter().filter(|r| r.k > end).map(err).collect();
    (0..after.len()).find(|&i| {
        let win = &after[i..(i + 5).min(after.len())];
        win.iter().sum::<f64>() / win.len() as f64 <= base
    })
}

/// First step with `d = 1` at or after `onset`, as a delay.
pub fn detection_delay(trace: &ScenarioTrace, onset: i64) -> Option<i64> {
    trace
        .rows
        .iter()
        .find(|r| r.k >= onset && r.d)
        .map(|r| r.k - onset)
}

// ---------------------------------------------------------------------------
// CSTR case study

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    mat_to_json(m)
}

/// Linearized CSTR with three measurement attacks.
pub fn cstr_scenario() -> ScenarioConfig {
    let a = DMatrix::from_row_slice(2, 2, &[0.9719, 0.0013, 0.0340, 0.8628]);
    let b = DMatrix::from_row_slice(2, 2, &[-0.0839, 0.0232, 0.0761, 0.4144]);
    let kt = pole_placement_gain(&a, &b, 0.6);
    let bx = |lo: [f64; 2], hi: [f64; 2]| SetJson::Box {
        lo: lo.to_vec(),
        hi: hi.to_vec(),
    };
    let ramp = |start: i64, end: i64, slope: f64| AttackWindow {
        start,
        end,
        origin: start - 1,
        slope: vec![slope, slope],
        offset: Vec::new(),
    };
    let wp = |k: i64, r: [f64; 2]| Waypoint { k, r: r.to_vec() };
    ScenarioConfig {
        plant: PlantConfig {
            a: rows(&a),
            b: rows(&b),
            w: bx([-0.001, -0.001], [0.001, 0.001]),
            x: bx([-10.0, -30.0], [10.0, 30.0]),
            u: bx([-2.0, -10.0], [2.0, 10.0]),
            x0: vec![0.01, -0.01],
        },
        controller: ControllerConfig {
            kt: rows(&kt),
            x_eta: bx([-9.0, -27.0], [9.0, 27.0]),
        },
        cells: [
            [4.0, 15.0],
            [-6.0, 15.0],
            [0.0, 0.0],
            [6.0, -20.0],
            [-4.0, -20.0],
        ]
        .iter()
        .map(|x| CellConfig {
            x_e: x.to_vec(),
            u_e: None,
        })
        .collect(),
        weights: Weights {
            alpha: 1.0,
            beta: 0.0,
        },
        detector: DetectorConfig {
            tau: 5,
            clear_streak: 3,
        },
        attacks: vec![
            AttackSpec {
                name: "attack1".into(),
                channel: Channel::Measurement,
                windows: vec![ramp(60, 110, 0.01)],
            },
            AttackSpec {
                name: "attack2".into(),
                channel: Channel::Measurement,
                windows: vec![ramp(200, 220, 0.08), ramp(240, 260, 0.1)],
            },
            AttackSpec {
                name: "attack3".into(),
                channel: Channel::Measurement,
                windows: vec![ramp(400, 420, 0.1)],
            },
        ],
        reference: vec![
            wp(0, [0.0, 0.0]),
            wp(15, [4.0, 26.9]),
            wp(150, [5.0, 5.0]),
            wp(300, [-8.5, -14.0]),
        ],
        horizon: 500,
        seed: 1,
        data: DataConfig::default(),
    }
}
