//! Built-in scenarios on the four-bank reference network and a regression
//! suite over them.

use std::fmt;

use clearnet_core::continuous::{simulate_path, Crossing, PathConfig};
use clearnet_core::processes::{CashFlowSpec, LiabilitySchedule, RngStream, Window};
use clearnet_core::static_clearing::{clear_static, classify_orders, StaticProblem};
use clearnet_core::{LiabilityMatrix, Matrix, Vector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::montecarlo::{run_monte_carlo, DEFAULT_THRESHOLD};

/// Static wealths of the reference network as reported, to two decimals.
pub const REFERENCE_WEALTH: [f64; 5] = [109.38, -6.81, -3.03, -0.32, 1.62];

/// Aggregate obligations of the reference network; row 0 is society.
pub fn reference_liabilities() -> LiabilityMatrix {
    LiabilityMatrix::from_rows(&[
        &[0.0, 0.0, 0.0, 0.0, 0.0],
        &[3.0, 0.0, 7.0, 1.0, 1.0],
        &[3.0, 3.0, 0.0, 3.0, 3.0],
        &[3.0, 1.0, 1.0, 0.0, 1.0],
        &[3.0, 1.0, 2.0, 1.0, 0.0],
    ])
    .expect("reference liabilities are valid")
}

pub fn reference_assets() -> Vector {
    Vector::from_vec(vec![100.0, 1.0, 3.0, 2.0, 5.0])
}

pub fn reference_static() -> StaticProblem {
    StaticProblem::new(reference_assets(), reference_liabilities()).expect("valid problem")
}

/// Net claims `L̄^T 1 - L̄ 1`.
pub fn net_claims(l: &LiabilityMatrix) -> Vector {
    l.total_claims() - l.total_obligations()
}

/// `L̄` restricted to column `j`, i.e. `L̄ E_j`.
pub fn column_of(total: &Matrix, j: usize) -> Matrix {
    Matrix::from_fn(total.nrows(), total.ncols(), |a, b| if b == j { total[(a, b)] } else { 0.0 })
}

/// Constant liability rate on `[0, 1]` with either the deterministic net-claim
/// cash flow (`vol = None`) or a Brownian bridge to the same target.
pub fn reference_path(vol: Option<f64>, dt: f64) -> PathConfig {
    let l = reference_liabilities();
    let liabilities = LiabilitySchedule::constant(&l, 1.0).expect("valid schedule");
    let cash_flow = match vol {
        None => CashFlowSpec::ConstantRate { mu: net_claims(&l) },
        Some(vol) => CashFlowSpec::BrownianBridge {
            target: net_claims(&l),
            vol,
        },
    };
    PathConfig {
        initial_wealth: reference_assets(),
        cash_flow,
        liabilities,
        horizon: 1.0,
        base_step: dt,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ordering {
    /// Obligations to banks 1..4 come due in turn, society last.
    DefaultsFirst,
    /// Obligations to society first, then to banks 1..4 in turn.
    SocietyFirst,
}

/// Each column of `L̄` is due at five times the rate on one fifth of `[0, 1]`;
/// cash flows fund exactly the new net claims.
pub fn shifted_obligations(order: Ordering, dt: f64) -> PathConfig {
    let l = reference_liabilities().into_matrix();
    let slot = |k: usize| (0.2 * k as f64, 0.2 * (k + 1) as f64);
    let mut windows = Vec::new();
    for j in 0..5 {
        let k = match order {
            Ordering::DefaultsFirst => (j + 4) % 5,
            Ordering::SocietyFirst => j,
        };
        let (start, end) = slot(k);
        windows.push(Window {
            rate: column_of(&l, j) * 5.0,
            start,
            end,
        });
    }
    let liabilities = LiabilitySchedule::windows(windows, 1.0).expect("valid schedule");
    PathConfig {
        initial_wealth: reference_assets(),
        cash_flow: CashFlowSpec::net_liability_flow(&liabilities),
        liabilities,
        horizon: 1.0,
        base_step: dt,
    }
}

/// Staggered obligation windows per bank, constant obligations to society.
pub const STAGGERED_WINDOWS: [(usize, f64, f64, f64); 4] = [
    (1, 0.145, 0.382, 0.237),
    (2, 0.331, 0.509, 0.178),
    (3, 0.301, 0.740, 0.439),
    (4, 0.673, 0.778, 0.105),
];

pub fn staggered_obligations(vol: f64, dt: f64) -> PathConfig {
    let l = reference_liabilities();
    let total = l.as_matrix();
    let mut windows = vec![Window {
        rate: column_of(total, 0),
        start: 0.0,
        end: 1.0,
    }];
    for (j, start, end, length) in STAGGERED_WINDOWS {
        windows.push(Window {
            rate: column_of(total, j) / length,
            start,
            end,
        });
    }
    PathConfig {
        initial_wealth: reference_assets(),
        cash_flow: CashFlowSpec::BrownianBridge {
            target: net_claims(&l),
            vol,
        },
        liabilities: LiabilitySchedule::windows(windows, 1.0).expect("valid schedule"),
        horizon: 1.0,
        base_step: dt,
    }
}

/// A random schedule aggregating to `total` over `[0, horizon]`: the society
/// column accrues at a constant rate and every other column is split over one
/// to three random windows with random weights.
pub fn random_column_schedule<R: Rng>(rng: &mut R, total: &LiabilityMatrix, horizon: f64) -> LiabilitySchedule {
    let m = total.as_matrix();
    let mut windows = vec![Window {
        rate: column_of(m, 0) / horizon,
        start: 0.0,
        end: horizon,
    }];
    for j in 1..m.ncols() {
        let pieces = rng.random_range(1..=3);
        let weights: Vec<f64> = (0..pieces).map(|_| rng.random_range(0.1..1.0)).collect();
        let sum: f64 = weights.iter().sum();
        for w in weights {
            let a = rng.random_range(0.0..horizon);
            let b = rng.random_range(0.0..horizon);
            let (start, end) = if a < b { (a, b) } else { (b, a) };
            let end = end.max(start + 1e-3 * horizon).min(horizon);
            let start = start.min(end - 1e-3 * horizon);
            windows.push(Window {
                rate: column_of(m, j) * (w / sum / (end - start)),
                start,
                end,
            });
        }
    }
    LiabilitySchedule::windows(windows, horizon).expect("random windows are valid")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub schedules: usize,
    pub first_order_defaults: Vec<usize>,
    pub first_order_solvent: Vec<usize>,
    /// Per node, the number of schedules ending with `V_i(T) < DEFAULT_THRESHOLD`.
    pub defaults: Vec<usize>,
}

impl SweepReport {
    pub fn frequency(&self, node: usize) -> f64 {
        self.defaults[node] as f64 / self.schedules as f64
    }

    /// Every first-order default defaulted and every first-order solvent node
    /// stayed solvent on every schedule.
    pub fn consistent(&self) -> bool {
        self.first_order_defaults
            .iter()
            .all(|&i| self.defaults[i] == self.schedules)
            && self.first_order_solvent.iter().all(|&i| self.defaults[i] == 0)
    }
}

/// Runs the reference network under `count` random schedules with the same
/// aggregates and records terminal defaults.
pub fn random_schedule_sweep(count: usize, seed: u64, dt: f64) -> clearnet_core::Result<SweepReport> {
    let l = reference_liabilities();
    let orders = classify_orders(&reference_static())?;
    let dim = l.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut defaults = vec![0; dim];
    for _ in 0..count {
        let liabilities = random_column_schedule(&mut rng, &l, 1.0);
        let config = PathConfig {
            initial_wealth: reference_assets(),
            cash_flow: CashFlowSpec::net_liability_flow(&liabilities),
            liabilities,
            horizon: 1.0,
            base_step: dt,
        };
        let out = simulate_path(&config, &mut RngStream::new(seed, 0), false)?;
        for (i, &v) in out.terminal.wealth.iter().enumerate() {
            if v < DEFAULT_THRESHOLD {
                defaults[i] += 1;
            }
        }
    }
    Ok(SweepReport {
        schedules: count,
        first_order_defaults: orders.orders.first().cloned().unwrap_or_default(),
        first_order_solvent: orders.first_order_solvent,
        defaults,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteEntry {
    pub name: &'static str,
    pub passed: bool,
    pub measured: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SuiteReport {
    pub entries: Vec<SuiteEntry>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.passed)
    }

    fn push(&mut self, name: &'static str, passed: bool, measured: String) {
        self.entries.push(SuiteEntry {
            name,
            passed,
            measured,
        });
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for e in &self.entries {
            writeln!(
                f,
                "{} {:<40} {}",
                if e.passed { "PASS" } else { "FAIL" },
                e.name,
                e.measured
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub struct SuiteOptions {
    pub seed: u64,
    pub mc_paths: usize,
    pub dt: f64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            seed: 20240601,
            mc_paths: 2000,
            dt: 1e-3,
        }
    }
}

fn sci(xs: &[f64]) -> String {
    xs.iter().map(|x| format!("{x:.2e}")).collect::<Vec<_>>().join(", ")
}

fn max_gap(a: &Vector, b: &Vector) -> f64 {
    (a - b).amax()
}

fn default_set(v: &Vector) -> Vec<usize> {
    (1..v.len()).filter(|&i| v[i] < DEFAULT_THRESHOLD).collect()
}

/// Reference regressions; failures are reported, not raised.
pub fn run_scenario_suite(opts: SuiteOptions) -> SuiteReport {
    let mut report = SuiteReport::default();
    let reference = Vector::from_row_slice(&REFERENCE_WEALTH);

    match clear_static(&reference_static()) {
        Ok(sol) => {
            let gap = max_gap(&sol.wealth, &reference);
            let ok = gap <= 0.01 && sol.orders == [vec![1], vec![1, 2], vec![1, 2, 3]];
            report.push("static wealths and default orders", ok, format!("max |dV| {gap:.2e}, orders {:?}", sol.orders));
        }
        Err(e) => report.push("static wealths and default orders", false, e.to_string()),
    }
    let static_wealth = clear_static(&reference_static()).map(|s| s.wealth).ok();

    let deterministic = |dt: f64| simulate_path(&reference_path(None, dt), &mut RngStream::new(opts.seed, 0), false);
    match (deterministic(opts.dt), &static_wealth) {
        (Ok(out), Some(sw)) => {
            let gap = max_gap(&out.terminal.wealth, sw);
            let entries: Vec<usize> = out
                .events()
                .iter()
                .filter(|e| e.direction == Crossing::IntoDistress)
                .map(|e| e.node)
                .collect();
            let exits = out.events().iter().any(|e| e.direction == Crossing::OutOfDistress);
            report.push(
                "constant-rate path recovers static",
                gap <= 0.05 && entries == [1, 2, 3] && !exits,
                format!("max |dV| {gap:.2e}, distress order {entries:?}, exits {exits}"),
            );
        }
        (Err(e), _) => report.push("constant-rate path recovers static", false, e.to_string()),
        (_, None) => report.push("constant-rate path recovers static", false, "no static solution".into()),
    }

    if let Some(sw) = &static_wealth {
        let config = reference_path(Some(1.0), opts.dt);
        let gaps: Result<Vec<f64>, _> = (0..5)
            .map(|k| {
                simulate_path(&config, &mut RngStream::new(opts.seed, k), false)
                    .map(|o| max_gap(&o.terminal.wealth, sw))
            })
            .collect();
        match gaps {
            Ok(g) => {
                let worst = g.iter().cloned().fold(0.0, f64::max);
                report.push("bridge paths are path independent", worst <= 0.1, format!("worst |dV| {worst:.2e} over 5 paths"));
            }
            Err(e) => report.push("bridge paths are path independent", false, e.to_string()),
        }
    }

    let steps = [1e-2, 5e-3, 2.5e-3];
    let sweep = |make: &dyn Fn(f64) -> PathConfig, reference: &Vector| -> Result<Vec<f64>, clearnet_core::ClearingError> {
        steps
            .iter()
            .map(|&dt| {
                simulate_path(&make(dt), &mut RngStream::new(0, 0), false).map(|o| max_gap(&o.terminal.wealth, reference))
            })
            .collect()
    };
    if let Some(sw) = &static_wealth {
        match sweep(&|dt| reference_path(None, dt), sw) {
            Ok(e) => {
                let ok = e.iter().all(|&x| x <= 1e-9);
                report.push("constant-rate error at rounding level", ok, format!("errors [{}]", sci(&e)));
            }
            Err(err) => report.push("constant-rate error at rounding level", false, err.to_string()),
        }
    }
    let fine = simulate_path(&staggered_obligations(0.0, 1e-5), &mut RngStream::new(0, 0), false);
    match fine.and_then(|f| sweep(&|dt| staggered_obligations(0.0, dt), &f.terminal.wealth)) {
        Ok(e) => {
            let ok = e.windows(2).all(|w| w[1] < w[0]);
            report.push("staggered windows converge in dt", ok, format!("errors [{}]", sci(&e)));
        }
        Err(err) => report.push("staggered windows converge in dt", false, err.to_string()),
    }

    match simulate_path(&shifted_obligations(Ordering::DefaultsFirst, opts.dt), &mut RngStream::new(0, 0), false) {
        Ok(out) => {
            let v = &out.terminal.wealth;
            let ok = default_set(v) == [1] && v[2].abs() <= 0.05 && v[3].abs() <= 0.05;
            report.push("defaults-first ordering", ok, format!("V(T) {:.4?}", v.as_slice()));
        }
        Err(e) => report.push("defaults-first ordering", false, e.to_string()),
    }
    let mut society = Vec::new();
    match clearnet_core::continuous::simulate_path_with(
        &shifted_obligations(Ordering::SocietyFirst, opts.dt),
        &mut RngStream::new(0, 0),
        |s| society.push((s.t, s.wealth[0])),
    ) {
        Ok(out) => {
            let v = &out.terminal.wealth;
            let at = society.iter().find(|(t, _)| *t >= 0.2).map(|p| p.1).unwrap_or(f64::NAN);
            let ok = default_set(v) == [1, 2, 3, 4] && v[0] > 0.0 && v[0] > at;
            report.push("society-first ordering", ok, format!("V(T) {:.4?}, V_0(0.2) {at:.4}", v.as_slice()));
        }
        Err(e) => report.push("society-first ordering", false, e.to_string()),
    }

    match run_monte_carlo(&staggered_obligations(2.0, opts.dt), opts.seed, opts.mc_paths, false) {
        Ok(mc) => {
            let f = &mc.default_frequency;
            let p = &mc.societal_payment;
            let ok = (0.96..=1.0).contains(&f[2])
                && (0.01..=0.08).contains(&f[3])
                && f[4] <= 0.005
                && p.min <= 10.20
                && p.max >= 8.12;
            report.push(
                "staggered windows Monte-Carlo",
                ok,
                format!(
                    "freq {:.4?}, payments [{:.2}, {:.2}] over {} paths",
                    f,
                    p.min,
                    p.max,
                    mc.n_paths
                ),
            );
        }
        Err(e) => report.push("staggered windows Monte-Carlo", false, e.to_string()),
    }

    match random_schedule_sweep(100, opts.seed, opts.dt) {
        Ok(r) => report.push(
            "first-order outcomes fixed by aggregates",
            r.consistent(),
            format!("defaults per node {:?} over {} schedules", r.defaults, r.schedules),
        ),
        Err(e) => report.push("first-order outcomes fixed by aggregates", false, e.to_string()),
    }
    report
}
