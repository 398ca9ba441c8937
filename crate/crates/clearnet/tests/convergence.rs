use clearnet::scenarios::{reference_path, staggered_obligations};
use clearnet_core::continuous::simulate_path;
use clearnet_core::continuous::{PathConfig, TrajectoryPoint};
use clearnet_core::discrete::run_discrete_dt;
use clearnet_core::processes::{CashFlowSpec, RateSegment, RngStream};
use clearnet_core::{Vector, Warning};

/// Staggered windows funded by their net new claims plus outside income for
/// banks 2 and 3 late in the horizon, so cash never falls below the
/// interbank level but the timing of defaults and recoveries matters.
fn funded_staggered(dt: f64) -> PathConfig {
    let mut config = staggered_obligations(0.0, dt);
    let CashFlowSpec::PiecewiseRate { mut segments } = CashFlowSpec::net_liability_flow(&config.liabilities) else {
        unreachable!()
    };
    segments.push(RateSegment {
        mu: Vector::from_vec(vec![0.0, 0.0, 4.0, 4.0, 0.0]),
        start: 0.45,
        end: 0.85,
    });
    config.cash_flow = CashFlowSpec::PiecewiseRate { segments };
    config
}

fn discrete_terminal(config: &PathConfig, dt: f64) -> Vector {
    let rows = run_discrete_dt(
        config.initial_wealth.clone(),
        &config.cash_flow,
        &config.liabilities,
        config.horizon,
        dt,
    )
    .unwrap();
    let (t, last) = rows.last().unwrap();
    assert_eq!(*t, config.horizon);
    last.wealth.clone()
}

/// Largest gap over the discrete dates to the continuous path, linearly
/// interpolated between its recorded points.
fn path_gap(config: &PathConfig, dt: f64, path: &[TrajectoryPoint]) -> f64 {
    let rows = run_discrete_dt(config.initial_wealth.clone(), &config.cash_flow, &config.liabilities, 1.0, dt).unwrap();
    rows.iter()
        .map(|(t, state)| {
            let k = path.partition_point(|p| p.t < *t).clamp(1, path.len() - 1);
            let (a, b) = (&path[k - 1], &path[k]);
            let w = if b.t > a.t { (t - a.t) / (b.t - a.t) } else { 1.0 };
            let v = &a.wealth + (&b.wealth - &a.wealth) * w;
            (&state.wealth - v).amax()
        })
        .fold(0.0, f64::max)
}

#[test]
fn discrete_recursion_approaches_continuous_path() {
    let path = simulate_path(&funded_staggered(1e-5), &mut RngStream::new(0, 0), true).unwrap().trajectory;
    let gaps: Vec<f64> = [2e-2, 1e-2, 5e-3, 2.5e-3]
        .iter()
        .map(|&dt| path_gap(&funded_staggered(dt), dt, &path))
        .collect();
    println!("discrete vs continuous gaps {gaps:?}");
    assert!(gaps.windows(2).all(|w| w[1] < w[0]), "{gaps:?}");
}

#[test]
fn discrete_recursion_is_exact_for_constant_rates() {
    let config = reference_path(None, 1e-3);
    let continuous = simulate_path(&config, &mut RngStream::new(0, 0), false).unwrap().terminal.wealth;
    for dt in [0.1, 1e-2, 1e-3] {
        let gap = (discrete_terminal(&config, dt) - &continuous).amax();
        assert!(gap < 1e-9, "dt {dt}: {gap}");
    }
}

#[test]
fn discrete_recursion_rejects_random_cash_flows() {
    let config = staggered_obligations(2.0, 1e-3);
    assert!(run_discrete_dt(config.initial_wealth, &config.cash_flow, &config.liabilities, 1.0, 1e-2).is_err());
}

#[test]
fn underfunded_steps_are_flagged() {
    // a linear bridge pays obligations out before they come due
    let config = staggered_obligations(0.0, 1e-2);
    let rows = run_discrete_dt(config.initial_wealth, &config.cash_flow, &config.liabilities, 1.0, 1e-2).unwrap();
    assert!(rows
        .iter()
        .flat_map(|(_, s)| &s.warnings)
        .any(|w| matches!(w, Warning::CashFlowBelowInterbank { .. })));
}
