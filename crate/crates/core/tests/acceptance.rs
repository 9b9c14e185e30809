//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use setguard::ctrlsets::{feasible_input, rosc_step, RoscOptions};
use setguard::lp;
use setguard::reach::rors_point;
use setguard::safety::SafetyState;
use setguard::setkernel::sample::{sample_uniform, stream_rng};
use setguard::sim::{
    collect_data, cstr_scenario, detection_delay, metric_er, recovery_steps, run_seeds, synthesize,
    violations, Plant, RunMode, ScenarioConfig, ScenarioTrace, SynthOptions, Synthesis,
};
use setguard::supervisor::StopReason;
use setguard::sysid::{identify_bank, membership_check, Trajectory, TrajectoryBank};
use setguard::{HPolytope, MatrixZonotope, Set, Zonotope};

const SEEDS: [u64; 10] = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10];
const EPS: f64 = 1e-9;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn v(x: &[f64]) -> DVector<f64> {
    DVector::from_row_slice(x)
}

fn stack(x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(x.len() + u.len(), x.iter().chain(u.iter()).copied())
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

// 1. Identification soundness on random stable systems.
fn identification() -> Outcome {
    let t = Instant::now();
    let mut contained = 0;
    let runs = 100;
    for run in 0..runs {
        let mut rng = stream_rng(500 + run, 0);
        let mut a = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
        let rho = a
            .complex_eigenvalues()
            .iter()
            .map(|z| z.norm())
            .fold(0.0, f64::max);
        if rho > 0.0 {
            a *= rng.gen_range(0.2..0.95) / rho;
        }
        let b = DMatrix::from_fn(2, 2, |_, _| rng.gen_range(-1.0..1.0));
        let eta = 0.01;
        let trajectories = (0..4)
            .map(|_| {
                let mut x = DMatrix::zeros(2, 51);
                let mut u = DMatrix::zeros(2, 50);
                for k in 0..50 {
                    let uk = v(&[rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)]);
                    let wk = v(&[rng.gen_range(-eta..eta), rng.gen_range(-eta..eta)]);
                    let xk = x.column(k).into_owned();
                    x.set_column(k + 1, &(&a * xk + &b * &uk + wk));
                    u.set_column(k, &uk);
                }
                Trajectory { u, x }
            })
            .collect();
        let bank = TrajectoryBank {
            trajectories,
            noise_center: v(&[0.0, 0.0]),
            noise_generators: vec![v(&[eta, 0.0]), v(&[0.0, eta])],
        };
        let Ok(m) = identify_bank(&bank) else {
            continue;
        };
        let mut ab = DMatrix::zeros(2, 4);
        ab.view_mut((0, 0), (2, 2)).copy_from(&a);
        ab.view_mut((0, 2), (2, 2)).copy_from(&b);
        if membership_check(&m, &ab) {
            contained += 1;
        }
    }
    let el = t.elapsed();
    outcome(
        contained == runs && el < Duration::from_secs(30),
        format!(
            "{contained}/{runs} true models contained, {:.1} s",
            el.as_secs_f64()
        ),
    )
}

// 2. One-step reachable sets contain the true successor.
fn reachability(s: &Synthesis, plant: &Plant) -> Outcome {
    let (xl, xh) = s.x_set.bounding_box().unwrap();
    let (ul, uh) = s.u_set.bounding_box().unwrap();
    let mut rng = stream_rng(77, 0);
    let mut ok = 0;
    let n = 1000;
    for _ in 0..n {
        let x = DVector::from_fn(2, |i, _| rng.gen_range(xl[i]..=xh[i]));
        let u = DVector::from_fn(2, |i, _| rng.gen_range(ul[i]..=uh[i]));
        let w = plant.draw_w(&mut rng);
        let next = &plant.a * &x + &plant.b * &u + w;
        if rors_point(&s.model, &x, &u, &s.w)
            .unwrap()
            .contains_point(&next)
        {
            ok += 1;
        }
    }
    outcome(ok == n, format!("{ok}/{n} successors contained"))
}

// 3. Every sampled state of level j has an input that lands in level j-1
// under every vertex model and every sampled disturbance.
fn rosc_contract(s: &Synthesis, synth_time: Duration) -> Outcome {
    let t = Instant::now();
    let opts = SynthOptions::default();
    let vertices = s
        .model
        .compact()
        .reduce(opts.family.g_max)
        .vertices(opts.family.g_max);
    let mut rng = stream_rng(91, 0);
    let ws: Vec<DVector<f64>> = (0..100)
        .map(|_| {
            let g = s.w.num_generators();
            let beta = DVector::from_fn(g, |_, _| rng.gen_range(-1.0..=1.0));
            s.w.center() + s.w.generators() * beta
        })
        .collect();
    let (mut checked, mut failed, mut no_input) = (0usize, 0usize, 0usize);
    for fam in &s.families {
        for j in 1..fam.levels() {
            let target = &fam.c[j - 1];
            let h = target.h_mat();
            // Worst sampled disturbance per row.
            let w_max = DVector::from_fn(h.nrows(), |i, _| {
                ws.iter()
                    .map(|w| h.row(i).dot(&w.transpose()))
                    .fold(f64::MIN, f64::max)
            });
            let tol = DVector::from_fn(h.nrows(), |i, _| EPS * h.row(i).norm().max(1.0));
            let xs =
                sample_uniform(&Set::HPolytope(fam.c[j].clone()), 500, 1000 + j as u64).unwrap();
            for x in xs {
                checked += 1;
                let Some(u) = feasible_input(&fam.xi[j - 1], &x) else {
                    no_input += 1;
                    continue;
                };
                let z = stack(&x, &u);
                let bad = vertices.iter().any(|m| {
                    let hp = h * (m * &z);
                    (0..h.nrows()).any(|i| hp[i] + w_max[i] > target.h_vec()[i] + tol[i])
                });
                if bad {
                    failed += 1;
                }
            }
        }
    }
    let el = t.elapsed() + synth_time;
    outcome(
        failed == 0 && no_input == 0 && el < Duration::from_secs(300),
        format!(
            "{checked} states, {} vertex models, {failed} escapes, {no_input} without input, {:.1} s with synthesis",
            vertices.len(),
            el.as_secs_f64()
        ),
    )
}

// 4. Exact model, no disturbance: predecessor matches a grid oracle.
fn degenerate_rosc() -> Outcome {
    let a = DMatrix::from_row_slice(2, 2, &[1.13, 0.31, -0.17, 0.87]);
    let b = DMatrix::from_row_slice(2, 2, &[0.53, 0.11, 0.07, 0.29]);
    let mut ab = DMatrix::zeros(2, 4);
    ab.view_mut((0, 0), (2, 2)).copy_from(&a);
    ab.view_mut((0, 2), (2, 2)).copy_from(&b);
    let m = MatrixZonotope::new(ab.clone(), Vec::new()).unwrap();
    let x_set = HPolytope::from_box(&v(&[-3.07, -2.93]), &v(&[3.11, 2.89])).unwrap();
    let u_set = HPolytope::from_box(&v(&[-0.61, -0.47]), &v(&[0.59, 0.43])).unwrap();
    let target = HPolytope::from_box(&v(&[-0.73, -0.41]), &v(&[0.67, 0.53])).unwrap();
    let w = Zonotope::point(v(&[0.0, 0.0]));
    let step = rosc_step(
        &target,
        &m.vertices(0),
        &x_set,
        &u_set,
        &w,
        &RoscOptions::exact(),
    )
    .unwrap();
    let (lo, hi) = x_set.bounding_box().unwrap();
    let grid = 200;
    let mut mismatches = 0;
    let mut inside = 0;
    // Oracle: x is a predecessor iff {u ∈ U : T(Ax + Bu)} is nonempty.
    let th = target.h_mat() * &b;
    let a_ineq = DMatrix::from_fn(th.nrows() + u_set.num_rows(), 2, |i, j| {
        if i < th.nrows() {
            th[(i, j)]
        } else {
            u_set.h_mat()[(i - th.nrows(), j)]
        }
    });
    for gi in 0..grid {
        for gj in 0..grid {
            let x = v(&[
                lo[0] + (hi[0] - lo[0]) * (gi as f64 + 0.5) / grid as f64,
                lo[1] + (hi[1] - lo[1]) * (gj as f64 + 0.5) / grid as f64,
            ]);
            let tx = target.h_mat() * (&a * &x);
            let rhs = DVector::from_fn(a_ineq.nrows(), |i, _| {
                if i < th.nrows() {
                    target.h_vec()[i] - tx[i]
                } else {
                    u_set.h_vec()[i - th.nrows()]
                }
            });
            let oracle = lp::feasible_point(&a_ineq, &rhs).is_ok();
            if oracle {
                inside += 1;
            }
            if oracle != step.c.contains_point(&x) {
                mismatches += 1;
            }
        }
    }
    outcome(
        mismatches == 0 && inside > 0 && inside < grid * grid,
        format!("{mismatches} mismatches on a {grid}x{grid} grid ({inside} predecessors)"),
    )
}

// 5. The EC reaches the terminal set within the activation level, one
// level per step or faster.
fn ec_recovery(s: &Synthesis, plant: &Plant) -> Outcome {
    let guard = s.guard();
    let (mut runs, mut failures) = (0, 0);
    let mut worst = String::new();
    for seed in 0..10u64 {
        let mut rng = stream_rng(300 + seed, 0);
        for (l, fam) in s.families.iter().enumerate() {
            let starts =
                sample_uniform(&Set::HPolytope(fam.cell.cell.clone()), 20, 40 + l as u64).unwrap();
            for x0 in starts {
                runs += 1;
                let mut x = x0;
                let mut st = SafetyState::default();
                let (out, next) = guard.ec_step(&x, &st);
                let j0 = out.level;
                let mut levels = vec![j0];
                let mut ok = !out.alarm;
                let mut u = out.u;
                st = next;
                for _ in 0..j0 {
                    if !plant.u_set.contains_point(&u) {
                        ok = false;
                    }
                    x = plant.step(&x, &u, &mut rng);
                    let (out, next) = guard.ec_step(&x, &st);
                    ok &= !out.alarm && out.level < *levels.last().unwrap();
                    levels.push(out.level);
                    u = out.u;
                    st = next;
                    if out.level == 0 {
                        break;
                    }
                }
                let at = &s.families[st.active_cell.unwrap_or(l)];
                ok &= *levels.last().unwrap() == 0 && at.c[0].contains_point(&x);
                if !ok {
                    failures += 1;
                    if worst.is_empty() {
                        worst = format!(", first failure: cell {} levels {levels:?}", l + 1);
                    }
                }
            }
        }
    }
    outcome(
        failures == 0,
        format!(
            "{}/{runs} activations reached the terminal set in time{worst}",
            runs - failures
        ),
    )
}

fn window_rows(
    t: &ScenarioTrace,
    lo: i64,
    hi: i64,
) -> impl Iterator<Item = &setguard::sim::TraceRow> {
    t.rows.iter().filter(move |r| r.k >= lo && r.k <= hi)
}

struct Runs {
    proposed: Vec<ScenarioTrace>,
    ec_only: Vec<ScenarioTrace>,
    no_attack: Vec<ScenarioTrace>,
    per_seed: Duration,
}

// 6. No constraint violations in the full scenario.
fn safety(runs: &Runs, s: &Synthesis) -> Outcome {
    let bad: usize = runs
        .proposed
        .iter()
        .map(|t| violations(t, &s.x_set, &s.u_set).len())
        .sum();
    outcome(
        bad == 0,
        format!("{bad} violating steps over {} seeds", runs.proposed.len()),
    )
}

// 7. Tracking error ordering and ratios.
fn ordering(runs: &Runs) -> Outcome {
    let er = |ts: &[ScenarioTrace]| ts.iter().map(metric_er).collect::<Vec<_>>();
    let (na, pr, ec) = (er(&runs.no_attack), er(&runs.proposed), er(&runs.ec_only));
    let ordered = (0..na.len()).all(|i| na[i] < pr[i] && pr[i] < ec[i]);
    let (mna, mpr, mec) = (median(na), median(pr), median(ec));
    let pass =
        ordered && mpr <= 2.0 * mna && mec >= 2.0 * mpr && runs.per_seed < Duration::from_secs(120);
    outcome(
        pass,
        format!(
            "median e_r no-attack {mna:.4}, proposed {mpr:.4}, EC-only {mec:.4}; ordered on every seed: {ordered}; {:.2} s per seed",
            runs.per_seed.as_secs_f64()
        ),
    )
}

// 8. Supervisor signatures of the three attacks.
fn signatures(runs: &Runs, cfg: &ScenarioConfig) -> Outcome {
    let win = |i: usize| {
        (
            cfg.attacks[i].windows[0].start,
            cfg.attacks[i].windows.last().unwrap().end,
        )
    };
    let (a1, a2, a3) = (win(0), win(1), win(2));
    let mut counts = [0; 3];
    for t in &runs.proposed {
        let stop = window_rows(t, a1.0, a1.1).find(|r| r.stop_reason == Some(StopReason::Safety));
        if let Some(s) = stop {
            let ec_after = window_rows(t, s.k, a1.1 + 20).any(|r| r.ec);
            if ec_after && recovery_steps(t, a1.0, a1.1).is_some() {
                counts[0] += 1;
            }
        }
        let reset = window_rows(t, a2.0, a2.1 + 20).any(|r| r.reset);
        let ec2 = window_rows(t, a2.0, a3.0 - 1).any(|r| r.ec);
        if reset && !ec2 {
            counts[1] += 1;
        }
        let js: Vec<f64> = window_rows(t, a3.0, a3.1 + 20)
            .filter_map(|r| r.j)
            .collect();
        let monotone = !js.is_empty() && js.windows(2).all(|p| p[1] <= p[0] + 1e-12);
        let ec3 = window_rows(t, a3.0, i64::MAX).any(|r| r.ec);
        if monotone && !ec3 {
            counts[2] += 1;
        }
    }
    let n = runs.proposed.len();
    outcome(
        counts.iter().all(|&c| c >= 8),
        format!(
            "attack 1 stop-on-safety then EC then recovery {}/{n}, attack 2 reset without EC {}/{n}, attack 3 monotone J without EC {}/{n}",
            counts[0], counts[1], counts[2]
        ),
    )
}

// 9. No false alarms and bounded detection delay.
fn detector(runs: &Runs, cfg: &ScenarioConfig) -> Outcome {
    let false_alarms: usize = runs
        .no_attack
        .iter()
        .map(|t| t.rows.iter().filter(|r| r.d).count())
        .sum();
    let tau = cfg.detector.tau as i64;
    let mut worst = 0;
    let mut missed = 0;
    for t in &runs.proposed {
        for w in cfg.attacks.iter().flat_map(|a| a.windows.iter()) {
            match detection_delay(t, w.start) {
                Some(d) if d <= (w.end - w.start) => worst = worst.max(d),
                _ => missed += 1,
            }
        }
    }
    outcome(
        false_alarms == 0 && missed == 0 && worst <= tau,
        format!("{false_alarms} false alarms, worst detection delay {worst} (tau = {tau}), {missed} missed windows"),
    )
}

// 10. Same config and seed give byte-identical traces.
fn determinism(cfg: &ScenarioConfig, s: &Synthesis) -> Outcome {
    let a = run_seeds(cfg, s, &[3, 3], RunMode::Proposed).unwrap();
    let (x, y) = (a[0].to_csv_string(), a[1].to_csv_string());
    let again = setguard::sim::run_scenario(cfg, s, 3, RunMode::Proposed)
        .unwrap()
        .to_csv_string();
    outcome(
        x == y && x == again,
        format!("{} bytes, identical: {}", x.len(), x == y && x == again),
    )
}

fn main() {
    let cfg = cstr_scenario();
    let plant = Plant::from_config(&cfg.plant).unwrap();
    let mut results: Vec<(usize, Outcome)> = Vec::new();

    results.push((1, identification()));

    let t = Instant::now();
    let bank = collect_data(&plant, &cfg.data).unwrap();
    let synth = synthesize(&bank, &cfg, &SynthOptions::default()).unwrap();
    let synth_time = t.elapsed();

    results.push((2, reachability(&synth, &plant)));
    results.push((3, rosc_contract(&synth, synth_time)));
    results.push((4, degenerate_rosc()));
    results.push((5, ec_recovery(&synth, &plant)));

    let t = Instant::now();
    let proposed = run_seeds(&cfg, &synth, &SEEDS, RunMode::Proposed).unwrap();
    let ec_only = run_seeds(&cfg, &synth, &SEEDS, RunMode::EcOnly).unwrap();
    let no_attack = run_seeds(&cfg, &synth, &SEEDS, RunMode::NoAttack).unwrap();
    let runs = Runs {
        proposed,
        ec_only,
        no_attack,
        // Wall time of one seed across all three modes, amortized.
        per_seed: t.elapsed() / SEEDS.len() as u32,
    };
    results.push((6, safety(&runs, &synth)));
    results.push((7, ordering(&runs)));
    results.push((8, signatures(&runs, &cfg)));
    results.push((9, detector(&runs, &cfg)));
    results.push((10, determinism(&cfg, &synth)));

    let mut all = true;
    for (i, o) in &results {
        println!(
            "criterion {i:>2}: {} ({})",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
        all &= o.pass;
    }
    if !all {
        std::process::exit(1);
    }
}
