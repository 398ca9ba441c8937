//! CSV and JSON writers. Floats use Rust's shortest round-trip formatting so
//! identical runs produce identical bytes.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use clearnet_core::continuous::{Event, TrajectoryPoint};
use clearnet_core::discrete::DiscreteState;
use clearnet_core::processes::RngStream;
use clearnet_core::static_clearing::StaticSolution;
use clearnet_core::Vector;
use serde::Serialize;

use crate::montecarlo::{Distribution, McSummary, DEFAULT_THRESHOLD};

pub const STATIC_FILE: &str = "clearing.csv";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const EVENTS_FILE: &str = "events.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SAMPLES_FILE: &str = "samples.csv";

fn create(dir: &Path, name: &str) -> anyhow::Result<(PathBuf, csv::Writer<File>)> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    let writer = csv::Writer::from_path(&path)?;
    Ok((path, writer))
}

fn header<'a>(prefix: &'a str, names: &'a [String]) -> impl Iterator<Item = String> + 'a {
    names.iter().map(move |n| format!("{prefix}_{n}"))
}

fn cells(v: &Vector) -> impl Iterator<Item = String> + '_ {
    v.iter().map(|x| x.to_string())
}

pub fn write_static(dir: &Path, names: &[String], sol: &StaticSolution, obligations: &Vector) -> anyhow::Result<PathBuf> {
    let (path, mut w) = create(dir, STATIC_FILE)?;
    w.write_record([
        "node",
        "name",
        "wealth",
        "payment",
        "obligation",
        "default_order",
        "first_order_solvent",
    ])?;
    for (i, name) in names.iter().enumerate() {
        w.write_record([
            i.to_string(),
            name.clone(),
            sol.wealth[i].to_string(),
            sol.payments[i].to_string(),
            obligations[i].to_string(),
            sol.default_order(i).to_string(),
            sol.first_order_solvent.contains(&i).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(path)
}

/// `t, V_*` and, with `exposures`, `A_i_j` in row-major order.
pub fn write_discrete<'a>(
    dir: &Path,
    names: &[String],
    rows: impl IntoIterator<Item = (f64, &'a DiscreteState)>,
    exposures: bool,
) -> anyhow::Result<PathBuf> {
    let (path, mut w) = create(dir, TRAJECTORY_FILE)?;
    let mut head: Vec<String> = vec!["t".into()];
    head.extend(header("V", names));
    if exposures {
        for a in names {
            for b in names {
                head.push(format!("A_{a}_{b}"));
            }
        }
    }
    w.write_record(&head)?;
    for (t, state) in rows {
        let mut rec: Vec<String> = vec![t.to_string()];
        rec.extend(cells(&state.wealth));
        if exposures {
            let a = &state.exposures;
            for i in 0..a.nrows() {
                for j in 0..a.ncols() {
                    rec.push(a[(i, j)].to_string());
                }
            }
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(path)
}

/// `trajectory.csv` with `t, c_*, V_*` and `events.csv` with `t, node, name, direction`.
pub fn write_continuous(
    dir: &Path,
    names: &[String],
    trajectory: &[TrajectoryPoint],
    events: &[Event],
) -> anyhow::Result<(PathBuf, PathBuf)> {
    let (tpath, mut w) = create(dir, TRAJECTORY_FILE)?;
    let mut head: Vec<String> = vec!["t".into()];
    head.extend(header("c", names));
    head.extend(header("V", names));
    w.write_record(&head)?;
    for p in trajectory {
        let mut rec = vec![p.t.to_string()];
        rec.extend(cells(&p.cash));
        rec.extend(cells(&p.wealth));
        w.write_record(&rec)?;
    }
    w.flush()?;

    let (epath, mut w) = create(dir, EVENTS_FILE)?;
    w.write_record(["t", "node", "name", "direction"])?;
    for e in events {
        w.write_record([
            e.t.to_string(),
            e.node.to_string(),
            names[e.node].clone(),
            e.direction.as_str().to_string(),
        ])?;
    }
    w.flush()?;
    Ok((tpath, epath))
}

#[derive(Serialize)]
struct SummaryJson<'a> {
    rng: &'static str,
    seed: u64,
    n_paths: usize,
    dt: f64,
    #[serde(rename = "T")]
    horizon: f64,
    default_threshold: f64,
    nodes: &'a [String],
    default_frequency: &'a [f64],
    societal_wealth: &'a Distribution,
    societal_payment: &'a Distribution,
    warnings: &'a [String],
}

/// `summary.json` and `samples.csv` (`path, V_*, societal_payment, steps`).
pub fn write_monte_carlo(dir: &Path, names: &[String], mc: &McSummary) -> anyhow::Result<(PathBuf, PathBuf)> {
    fs::create_dir_all(dir)?;
    let spath = dir.join(SUMMARY_FILE);
    let summary = SummaryJson {
        rng: RngStream::ALGORITHM,
        seed: mc.seed,
        n_paths: mc.n_paths,
        dt: mc.dt,
        horizon: mc.horizon,
        default_threshold: DEFAULT_THRESHOLD,
        nodes: names,
        default_frequency: &mc.default_frequency,
        societal_wealth: &mc.societal_wealth,
        societal_payment: &mc.societal_payment,
        warnings: &mc.warnings,
    };
    let mut out = BufWriter::new(File::create(&spath)?);
    serde_json::to_writer_pretty(&mut out, &summary)?;
    writeln!(out)?;
    out.flush()?;

    let (cpath, mut w) = create(dir, SAMPLES_FILE)?;
    let mut head: Vec<String> = vec!["path".into()];
    head.extend(header("V", names));
    head.push("societal_payment".into());
    head.push("steps".into());
    w.write_record(&head)?;
    for (k, s) in mc.samples.iter().enumerate() {
        let mut rec = vec![k.to_string()];
        rec.extend(cells(&s.wealth));
        rec.push(s.societal_payment.to_string());
        rec.push(s.steps.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok((spath, cpath))
}
