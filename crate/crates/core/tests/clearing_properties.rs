use approx::assert_abs_diff_eq;
use clearnet_core::discrete::{discrete_step, run_discrete, DiscreteSchedule, DiscreteState};
use clearnet_core::static_clearing::{clear_static, picard_oracle, StaticProblem};
use clearnet_core::{relative_liabilities, LiabilityMatrix, Matrix, Vector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn positive_part_sum(v: &Vector) -> f64 {
    v.iter().map(|x| x.max(0.0)).sum()
}

/// Greatest fixed point of `V = b - Πᵀ V⁻`, by monotone iteration from `b`.
fn wealth_fixed_point(pi: &Matrix, b: &Vector) -> Vector {
    let mut v = b.clone();
    for _ in 0..100_000 {
        let shortfall = v.map(|x| (-x).max(0.0));
        let next = b - pi.transpose() * shortfall;
        let change = (&next - &v).amax();
        v = next;
        if change < 1e-14 {
            break;
        }
    }
    v
}

/// Greatest clearing payment vector `p = min(p̄, (x + Πᵀ p)^+)` from `p̄` down.
fn payment_fixed_point(x: &Vector, l: &LiabilityMatrix) -> Vector {
    let pi = relative_liabilities(l).into_matrix();
    let pbar = l.total_obligations();
    let mut p = pbar.clone();
    for _ in 0..100_000 {
        let income = x + pi.transpose() * &p;
        let next = Vector::from_fn(p.len(), |i, _| pbar[i].min(income[i].max(0.0)));
        let change = (&next - &p).amax();
        p = next;
        if change < 1e-14 {
            break;
        }
    }
    p
}

fn network_strategy() -> impl Strategy<Value = (Vector, LiabilityMatrix)> {
    (2usize..=6).prop_flat_map(|dim| {
        (
            prop::collection::vec(0.0f64..10.0, dim),
            prop::collection::vec(prop_oneof![Just(0.0), 0.0f64..8.0], dim * dim),
            prop::collection::vec(0.1f64..5.0, dim - 1),
        )
            .prop_map(move |(x, entries, society)| {
                let mut m = Matrix::from_row_slice(dim, dim, &entries);
                for i in 0..dim {
                    m[(i, i)] = 0.0;
                    m[(0, i)] = 0.0;
                }
                for i in 1..dim {
                    m[(i, 0)] = society[i - 1];
                }
                (Vector::from_vec(x), LiabilityMatrix::new(m).unwrap())
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn static_wealth_matches_payment_fixed_point((x, l) in network_strategy()) {
        let sol = clear_static(&StaticProblem::new(x.clone(), l.clone()).unwrap()).unwrap();
        let p = payment_fixed_point(&x, &l);
        let pi = relative_liabilities(&l).into_matrix();
        let wealth = &x + pi.transpose() * &p - l.total_obligations();
        for i in 0..x.len() {
            prop_assert!((sol.payments[i] - p[i]).abs() < 1e-8, "payment {i}: {} vs {}", sol.payments[i], p[i]);
            // below zero the wealth form keeps the full shortfall, the payment form stops at -p̄ + income
            if wealth[i] >= -1e-9 || sol.payments[i] > 1e-9 {
                prop_assert!((sol.wealth[i] - wealth[i]).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn static_solution_is_unique_and_conserves((x, l) in network_strategy()) {
        let prob = StaticProblem::new(x.clone(), l).unwrap();
        let sol = clear_static(&prob).unwrap();
        let bounds = picard_oracle(&prob).unwrap();
        for i in 0..x.len() {
            prop_assert!((sol.wealth[i] - bounds.greatest[i]).abs() < 1e-8);
            prop_assert!((bounds.greatest[i] - bounds.least[i]).abs() < 1e-8);
        }
        prop_assert!((positive_part_sum(&sol.wealth) - x.sum()).abs() < 1e-8);
    }

    #[test]
    fn default_orders_partition_the_defaulters((x, l) in network_strategy()) {
        let sol = clear_static(&StaticProblem::new(x, l).unwrap()).unwrap();
        let last = sol.orders.last().cloned().unwrap_or_default();
        for i in 1..sol.wealth.len() {
            prop_assert_eq!(sol.wealth[i] < 0.0, last.contains(&i), "bank {}", i);
        }
        for w in sol.orders.windows(2) {
            prop_assert!(w[0].iter().all(|i| w[1].contains(i)));
        }
    }
}

fn random_schedule<R: Rng>(rng: &mut R) -> DiscreteSchedule {
    let dim = rng.random_range(2..=6);
    let periods = rng.random_range(1..=20);
    let initial_wealth = Vector::from_fn(dim, |_, _| rng.random_range(0.0..10.0));
    let steps = (0..periods)
        .map(|_| {
            let mut m = Matrix::zeros(dim, dim);
            for i in 1..dim {
                for j in 0..dim {
                    if i != j && rng.random_bool(0.6) {
                        m[(i, j)] = rng.random_range(0.0..5.0);
                    }
                }
            }
            let ones = Vector::from_element(dim, 1.0);
            // c = x + Lᵀ1 - L1 with non-negative outside income x
            let mut cash = m.transpose() * &ones - &m * &ones;
            for i in 1..dim {
                if rng.random_bool(0.5) {
                    cash[i] += rng.random_range(0.0..3.0);
                }
            }
            (cash, LiabilityMatrix::new(m).unwrap())
        })
        .collect();
    DiscreteSchedule { initial_wealth, steps }
}

#[test]
fn discrete_steps_conserve_positive_wealth() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for k in 0..100 {
        let sched = random_schedule(&mut rng);
        let states = run_discrete(&sched).unwrap();
        let mut before = positive_part_sum(&sched.initial_wealth);
        for (state, (cash, _)) in states.iter().zip(&sched.steps) {
            let after = positive_part_sum(&state.wealth);
            assert!((after - before - cash.sum()).abs() <= 1e-8, "schedule {k} date {}", state.t);
            before = after;
        }
    }
}

#[test]
fn discrete_exposures_stay_row_stochastic() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..100 {
        let sched = random_schedule(&mut rng);
        for state in run_discrete(&sched).unwrap() {
            for i in 0..state.dim() {
                let row = state.exposures.row(i);
                assert_abs_diff_eq!(row.sum(), 1.0, epsilon = 1e-10);
                assert!(row.iter().all(|a| *a >= -1e-12));
                assert_eq!(state.exposures[(i, i)], 0.0);
            }
        }
    }
}

#[test]
fn discrete_steps_match_fixed_point_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..100 {
        let sched = random_schedule(&mut rng);
        let mut prev = DiscreteState::initial(sched.initial_wealth.clone()).unwrap();
        for (cash, l) in &sched.steps {
            let next = discrete_step(&prev, cash, l).unwrap();
            let dim = prev.dim();
            let rolled = prev.wealth.map(|v| (-v).max(0.0));
            // new obligations plus unpaid debt rolled along last date's exposures
            let mut owed = l.as_matrix().clone();
            for i in 1..dim {
                for j in 0..dim {
                    owed[(i, j)] += prev.exposures[(i, j)] * rolled[i];
                }
            }
            let pi = Matrix::from_fn(dim, dim, |i, j| {
                let total: f64 = owed.row(i).sum();
                if total > 0.0 { owed[(i, j)] / total } else { 0.0 }
            });
            let b = &prev.wealth + cash + prev.exposures.transpose() * &rolled;
            let oracle = wealth_fixed_point(&pi, &b);
            assert_abs_diff_eq!(next.wealth, oracle, epsilon = 1e-8);
            prev = next;
        }
    }
}
