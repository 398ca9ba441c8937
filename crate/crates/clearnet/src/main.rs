use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};
use clearnet::config::Scenario;
use clearnet::montecarlo::run_monte_carlo;
use clearnet::output;
use clearnet::scenarios::{run_scenario_suite, SuiteOptions};
use clearnet_core::continuous::simulate_path;
use clearnet_core::discrete::{run_discrete, run_discrete_dt};
use clearnet_core::processes::RngStream;
use clearnet_core::static_clearing::clear_static;

/// Clearing and contagion simulations for interbank networks.
#[derive(Parser)]
#[command(name = "clearnet", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One-period clearing of the aggregate network.
    Static(RunArgs),
    /// Period-by-period clearing with rolled-forward debt.
    Discrete(RunArgs),
    /// One continuous-time path.
    Continuous(RunArgs),
    /// Monte-Carlo over independent cash-flow paths.
    Mc(RunArgs),
    /// Built-in regression scenarios.
    Suite {
        #[arg(long, default_value_t = SuiteOptions::default().seed)]
        seed: u64,
        #[arg(long, default_value_t = SuiteOptions::default().mc_paths)]
        paths: usize,
        #[arg(long, default_value_t = SuiteOptions::default().dt)]
        dt: f64,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Base step, overriding the scenario's `dt`.
    #[arg(long)]
    dt: Option<f64>,
    /// Random seed, overriding the scenario's `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of paths, overriding the scenario's `n_paths`.
    #[arg(long)]
    paths: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Append the flattened exposure matrix to discrete trajectories.
    #[arg(long)]
    emit_exposures: bool,
}

impl RunArgs {
    fn scenario(&self) -> anyhow::Result<Scenario> {
        let mut s = Scenario::from_path(&self.config)?;
        if let Some(dt) = self.dt {
            s.dt = dt;
        }
        if let Some(seed) = self.seed {
            s.seed = seed;
        }
        if let Some(paths) = self.paths {
            s.n_paths = paths;
        }
        s.check_run_parameters()?;
        Ok(s)
    }
}

fn warn<T: std::fmt::Display>(warnings: impl IntoIterator<Item = T>) {
    for w in warnings {
        eprintln!("warning: {w}");
    }
}

fn fmt_vec(v: &clearnet_core::Vector) -> String {
    v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ")
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Static(args) => {
            let s = args.scenario()?;
            let prob = clearnet_core::static_clearing::StaticProblem::new(
                s.assets.clone(),
                s.network.liabilities().clone(),
            )?;
            let sol = clear_static(&prob).context("static clearing failed")?;
            warn(&sol.warnings);
            let path = output::write_static(&args.out, &s.names(), &sol, &prob.liabilities().total_obligations())?;
            println!("wealth   [{}]", fmt_vec(&sol.wealth));
            println!("payments [{}]", fmt_vec(&sol.payments));
            println!("default orders {:?}", sol.orders);
            println!("wrote {}", path.display());
        }
        Command::Discrete(args) => {
            let s = args.scenario()?;
            let rows = match &s.discrete {
                Some(sched) => run_discrete(sched)?
                    .into_iter()
                    .map(|st| (st.t as f64, st))
                    .collect::<Vec<_>>(),
                None => run_discrete_dt(s.initial_wealth.clone(), &s.cash_flow, &s.liabilities, s.horizon, s.dt)
                    .context("discrete recursion failed")?,
            };
            warn(rows.iter().flat_map(|(_, st)| st.warnings.iter()));
            let path = output::write_discrete(
                &args.out,
                &s.names(),
                rows.iter().map(|(t, st)| (*t, st)),
                args.emit_exposures,
            )?;
            if let Some((t, last)) = rows.last() {
                println!("V({t}) [{}]", fmt_vec(&last.wealth));
            }
            println!("wrote {}", path.display());
        }
        Command::Continuous(args) => {
            let s = args.scenario()?;
            let mut rng = RngStream::new(s.seed, 0);
            let out = simulate_path(&s.path_config(), &mut rng, true).context("simulation failed")?;
            warn(&out.warnings);
            let (tpath, epath) = output::write_continuous(&args.out, &s.names(), &out.trajectory, out.events())?;
            println!("V(T) [{}] after {} steps", fmt_vec(&out.terminal.wealth), out.steps);
            for e in out.events() {
                println!("t = {:.6} node {} {}", e.t, e.node, e.direction.as_str());
            }
            println!("wrote {} and {}", tpath.display(), epath.display());
        }
        Command::Mc(args) => {
            let s = args.scenario()?;
            let mc = run_monte_carlo(&s.path_config(), s.seed, s.n_paths, false)?;
            warn(&mc.warnings);
            let names = s.names();
            let (spath, cpath) = output::write_monte_carlo(&args.out, &names, &mc)?;
            for (name, f) in names.iter().zip(&mc.default_frequency).skip(1) {
                println!("{name:>10} default frequency {f:.4}");
            }
            println!(
                "societal payment mean {:.4} range [{:.4}, {:.4}]",
                mc.societal_payment.mean, mc.societal_payment.min, mc.societal_payment.max
            );
            println!("wrote {} and {}", spath.display(), cpath.display());
        }
        Command::Suite { seed, paths, dt } => {
            if paths == 0 || dt.is_nan() || dt <= 0.0 {
                bail!("suite needs at least one path and a positive step");
            }
            let report = run_scenario_suite(SuiteOptions { seed, mc_paths: paths, dt });
            print!("{report}");
            return Ok(report.passed());
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
