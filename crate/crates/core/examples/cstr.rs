//! Runs the CSTR case study end to end and prints the tracking error of the
//! three configurations plus a short log of supervisor events.
//!
//! cargo run --release --example cstr [seed]

use setguard::sim::{
    collect_data, cstr_scenario, metric_er, run_scenario, synthesize, violations, Plant, RunMode,
    SynthOptions,
};

fn main() -> setguard::Result<()> {
    let seed = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(1);
    let cfg = cstr_scenario();
    let bank = collect_data(&Plant::from_config(&cfg.plant)?, &cfg.data)?;
    let synth = synthesize(&bank, &cfg, &SynthOptions::default())?;
    for f in &synth.families {
        println!(
            "cell {}: x_e = [{:.3}, {:.3}], {} levels",
            f.cell.index + 1,
            f.cell.x_e[0],
            f.cell.x_e[1],
            f.levels()
        );
    }

    for mode in [RunMode::NoAttack, RunMode::Proposed, RunMode::EcOnly] {
        let t = run_scenario(&cfg, &synth, seed, mode)?;
        let bad = violations(&t, &synth.x_set, &synth.u_set).len();
        println!("{mode:?}: e_r = {:.4}, {bad} violations", metric_er(&t));
        if mode == RunMode::Proposed {
            for r in &t.rows {
                if let Some(s) = r.stop_reason {
                    println!(
                        "  k = {}: tube stopped ({}), EC level {:?}",
                        r.k,
                        s.code(),
                        r.level
                    );
                }
                if r.reset {
                    println!("  k = {}: tube reset", r.k);
                }
            }
        }
    }
    Ok(())
}
