use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use setguard::setkernel::json::MatrixZonotopeJson;
use setguard::sim::{
    collect_data, cstr_scenario, metric_er, recovery_steps, run_scenario, synthesize, violations,
    Plant, RunMode, ScenarioConfig, ScenarioTrace, SynthOptions, SynthesisJson,
};
use setguard::sysid::{identify_bank, TrajectoryBankJson};

#[derive(Parser)]
#[command(
    name = "setguard",
    version,
    about = "Set-based safety supervision for networked control"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Print the built-in CSTR scenario config.
    Scenario {
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run random-input experiments on the scenario plant.
    Collect {
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Identify the matrix zonotope of consistent models from recorded data.
    Identify {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Build cells, control-set families and index tables.
    Synth {
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Recorded data; collected from the scenario plant when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one closed-loop scenario and write its trace.
    Simulate {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Defaults to the scenario seed.
        #[arg(long)]
        seed: Option<u64>,
        /// proposed, ec-only or no-attack
        #[arg(long, default_value = "proposed")]
        mode: RunMode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize traces: tracking error, violations, recovery.
    Report {
        #[arg(long, num_args = 1.., required = true)]
        traces: Vec<PathBuf>,
        /// Scenario used for the attack windows and constraint sets.
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Per-step tracking error of every trace, for plotting.
        #[arg(long)]
        errors_out: Option<PathBuf>,
    },
}

fn load_scenario(path: Option<&Path>) -> Result<ScenarioConfig> {
    match path {
        None => Ok(cstr_scenario()),
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            ScenarioConfig::from_json(&text).with_context(|| format!("parsing {}", p.display()))
        }
    }
}

fn write_json<T: serde::Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    match path {
        Some(p) => fs::write(p, text + "\n").with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(f))
        .with_context(|| format!("parsing {}", path.display()))
}

fn label(p: &Path) -> String {
    p.file_stem().map_or_else(
        || p.display().to_string(),
        |s| s.to_string_lossy().into_owned(),
    )
}

fn main() -> Result<()> {
    match Cli::parse().cmd {
        Cmd::Scenario { out } => write_json(out.as_deref(), &cstr_scenario())?,
        Cmd::Collect { scenario, out } => {
            let cfg = load_scenario(scenario.as_deref())?;
            let bank = collect_data(&Plant::from_config(&cfg.plant)?, &cfg.data)?;
            write_json(Some(&out), &TrajectoryBankJson::from_bank(&bank))?;
        }
        Cmd::Identify { data, out } => {
            let bank = read_json::<TrajectoryBankJson>(&data)?.to_bank::<f64>()?;
            let m = identify_bank(&bank)?;
            eprintln!("identified {} generators", m.num_generators());
            write_json(out.as_deref(), &MatrixZonotopeJson::from_mz(&m))?;
        }
        Cmd::Synth {
            scenario,
            data,
            out,
        } => {
            let cfg = load_scenario(scenario.as_deref())?;
            let bank = match data {
                Some(p) => read_json::<TrajectoryBankJson>(&p)?.to_bank()?,
                None => collect_data(&Plant::from_config(&cfg.plant)?, &cfg.data)?,
            };
            let s = synthesize(&bank, &cfg, &SynthOptions::default())?;
            for f in &s.families {
                eprintln!(
                    "cell {}: x_e = {:?}, {} levels ({} main), coverage {:.3}{}",
                    f.cell.index + 1,
                    f.cell.x_e.as_slice(),
                    f.levels(),
                    f.n_main,
                    f.coverage,
                    if f.stalled { ", stalled" } else { "" }
                );
            }
            write_json(Some(&out), &SynthesisJson::from_synthesis(&s))?;
        }
        Cmd::Simulate {
            bundle,
            scenario,
            seed,
            mode,
            out,
        } => {
            let cfg = load_scenario(scenario.as_deref())?;
            let synth = read_json::<SynthesisJson>(&bundle)?.to_synthesis()?;
            let trace = run_scenario(&cfg, &synth, seed.unwrap_or(cfg.seed), mode)?;
            let f = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
            trace.write_csv(BufWriter::new(f))?;
            eprintln!(
                "e_r = {:.4} over {} steps",
                metric_er(&trace),
                trace.rows.len()
            );
        }
        Cmd::Report {
            traces,
            scenario,
            errors_out,
        } => {
            let cfg = load_scenario(scenario.as_deref())?;
            let plant = Plant::from_config(&cfg.plant)?;
            let mut loaded = Vec::new();
            for p in &traces {
                let f = File::open(p).with_context(|| format!("opening {}", p.display()))?;
                loaded.push((label(p), ScenarioTrace::read_csv(BufReader::new(f))?));
            }
            let stdout = io::stdout();
            let mut o = stdout.lock();
            writeln!(
                o,
                "{:<24} {:>10} {:>6} {:>6} {:>10} recovery",
                "trace", "e_r", "ec", "resets", "violations"
            )?;
            for (name, t) in &loaded {
                let ec = t.rows.iter().filter(|r| r.ec).count();
                let resets = t.rows.iter().filter(|r| r.reset).count();
                let viol = violations(t, &plant.x_set, &plant.u_set).len();
                let rec: Vec<String> = cfg
                    .attacks
                    .iter()
                    .flat_map(|a| a.windows.iter())
                    .map(|w| {
                        recovery_steps(t, w.start, w.end).map_or("-".into(), |s| s.to_string())
                    })
                    .collect();
                writeln!(
                    o,
                    "{name:<24} {:>10.4} {ec:>6} {resets:>6} {viol:>10} {}",
                    metric_er(t),
                    rec.join(",")
                )?;
            }
            if let Some(path) = errors_out {
                let len = loaded.iter().map(|(_, t)| t.rows.len()).min().unwrap_or(0);
                if loaded.iter().any(|(_, t)| t.rows.len() != len) {
                    bail!("traces have different lengths");
                }
                let mut w = BufWriter::new(File::create(&path)?);
                write!(w, "k")?;
                for (name, _) in &loaded {
                    write!(w, ",e_{name}")?;
                }
                writeln!(w)?;
                for i in 0..len {
                    write!(w, "{}", loaded[0].1.rows[i].k)?;
                    for (_, t) in &loaded {
                        let r = &t.rows[i];
                        write!(w, ",{}", (&r.x_true - &r.r).norm())?;
                    }
                    writeln!(w)?;
                }
            }
        }
    }
    Ok(())
}
