use approx::assert_abs_diff_eq;
use ludus_core::framework::{
    control_grid, equilibrium_condition_values, induce_action_distribution, induce_control_distribution,
    mood_label, regret_condition, time_consistency_residual, value_of_control, Profile,
    EXHAUSTIVE_CONTROL_LIMIT,
};
use ludus_core::seed::{rng_from_seed, LabRng};
use ludus_core::{Control, EstimationBundle, FiniteMeasure, ScenarioSpace, TimeIndexedGame};
use proptest::prelude::*;
use rand::Rng;

const TOL: f64 = 1e-12;

/// Two players, states {0, 1}, actions {0, 1}, random tables.
#[derive(Clone)]
struct Tables {
    horizon: usize,
    up: Vec<f64>,
    cost: Vec<f64>,
    terminal: [f64; 2],
}

fn idx(t: usize, x: usize, a: &[usize]) -> usize {
    ((t * 2 + x) * 2 + a[0]) * 2 + a[1]
}

impl Tables {
    fn random(rng: &mut LabRng, horizon: usize) -> Self {
        let n = horizon * 8;
        let up = (0..n)
            .map(|_| match rng.gen_range(0..5) {
                0 => 0.0,
                1 => 1.0,
                _ => rng.gen::<f64>(),
            })
            .collect();
        Self {
            horizon,
            up,
            cost: (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect(),
            terminal: [rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0)],
        }
    }

    fn game(&self) -> TimeIndexedGame {
        TimeIndexedGame::stationary(self.horizon, vec![0, 1], vec![vec![0, 1], vec![0, 1]]).unwrap()
    }

    fn bundle(&self, gamma: FiniteMeasure<Control>, prior: Vec<FiniteMeasure<Control>>) -> EstimationBundle<'static> {
        let (h, up, cost, cost2, terminal) = (self.horizon, self.up.clone(), self.cost.clone(), self.cost.clone(), self.terminal);
        EstimationBundle::new(0)
            .with_horizon(move |t, _| h - t)
            .with_transition(move |t, x, a| {
                let p = up[idx(t, x, a)];
                let mut m = FiniteMeasure::new();
                if p < 1.0 {
                    m.add(0, 1.0 - p);
                }
                if p > 0.0 {
                    m.add(1, p);
                }
                m
            })
            .with_opponent_model(move |_, own| gamma.map(|opp| vec![own.clone(), opp.clone()]))
            .with_transition_cost(move |s, t, x, a| cost[idx(t, x, a)] * (1.0 + s as f64) - 0.1 * s as f64)
            .with_state_value(move |s, _, x| terminal[x] + s as f64 * cost2[x])
            .with_policy_prior(move |s, _, _| prior[s % prior.len()].clone())
    }
}

fn random_law(rng: &mut LabRng, support: &[Control], max_atoms: usize) -> FiniteMeasure<Control> {
    let n = rng.gen_range(1..=max_atoms.min(support.len()));
    FiniteMeasure::from_atoms((0..n).map(|_| (support[rng.gen_range(0..support.len())].clone(), rng.gen_range(0.05..1.0))))
        .normalized()
}

fn mix<P: Clone + PartialEq>(lambda: f64, p: &FiniteMeasure<P>, q: &FiniteMeasure<P>) -> FiniteMeasure<P> {
    let mut m = p.clone().scaled(lambda);
    for (x, w) in q.iter() {
        m.add(x.clone(), (1.0 - lambda) * w);
    }
    m
}

fn assert_same_law<P: Clone + PartialEq + std::fmt::Debug>(a: &FiniteMeasure<P>, b: &FiniteMeasure<P>) {
    for x in a.support().chain(b.support()) {
        assert_abs_diff_eq!(a.weight_of(x), b.weight_of(x), epsilon = TOL);
    }
}

fn scenarios(rng: &mut LabRng) -> ScenarioSpace {
    let n = rng.gen_range(1..=3);
    let raw: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
    let total: f64 = raw.iter().sum();
    let mut w: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let head: f64 = w[..n - 1].iter().sum();
    w[n - 1] = 1.0 - head;
    ScenarioSpace::new(w).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn normalization_gives_probability(atoms in prop::collection::vec((-5i32..5, 0.001f64..10.0), 1..12)) {
        let m = FiniteMeasure::from_atoms(atoms.into_iter().map(|(p, w)| (p as f64, w))).normalized();
        prop_assert!((m.total_mass() - 1.0).abs() <= 1e-12);
        prop_assert!(m.is_probability());
        prop_assert!(m.iter().all(|(_, w)| w > 0.0));
    }

    #[test]
    fn mixtures_of_probabilities_stay_normalized(seed: u64, lambda in 0.0f64..=1.0) {
        let mut rng = rng_from_seed(seed);
        let pts: Vec<f64> = (0..6).map(|i| i as f64).collect();
        let law = |rng: &mut LabRng| FiniteMeasure::from_atoms(pts.iter().map(|&p| (p, rng.gen_range(0.0..1.0) + 1e-3))).normalized();
        let (p, q) = (law(&mut rng), law(&mut rng));
        prop_assert!((mix(lambda, &p, &q).total_mass() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn value_is_linear_in_the_opponent_model(seed: u64, lambda in 0.0f64..=1.0) {
        let mut rng = rng_from_seed(seed);
        let horizon = rng.gen_range(1..=2);
        let tables = Tables::random(&mut rng, horizon);
        let game = tables.game();
        let controls = control_grid(&game, 1, 0, horizon, EXHAUSTIVE_CONTROL_LIMIT);
        let g1 = random_law(&mut rng, &controls, 4);
        let g2 = random_law(&mut rng, &controls, 4);
        let own = &control_grid(&game, 0, 0, horizon, EXHAUSTIVE_CONTROL_LIMIT)[rng.gen_range(0..1 << (2 * horizon))];
        let x = rng.gen_range(0..2);
        let s = rng.gen_range(0..3);
        let v = |g: FiniteMeasure<Control>| value_of_control(&game, &tables.bundle(g, vec![FiniteMeasure::new()]), s, 0, x, own).unwrap();
        let mixed = v(mix(lambda, &g1, &g2));
        let split = lambda * v(g1) + (1.0 - lambda) * v(g2);
        prop_assert!((mixed - split).abs() <= 1e-10, "{mixed} vs {split}");
    }

    #[test]
    fn induced_law_is_linear_in_the_scenario_measure(seed: u64, lambda in 0.0f64..=1.0) {
        let mut rng = rng_from_seed(seed);
        let tables = Tables::random(&mut rng, 2);
        let game = tables.game();
        let controls = control_grid(&game, 0, 0, 2, EXHAUSTIVE_CONTROL_LIMIT);
        let priors: Vec<_> = (0..3).map(|_| random_law(&mut rng, &controls, 5)).collect();
        let bundle = tables.bundle(FiniteMeasure::dirac(controls[0].clone()), priors);
        let (p, q) = (ScenarioSpace::new(vec![0.2, 0.3, 0.5]).unwrap(), ScenarioSpace::new(vec![0.6, 0.0, 0.4]).unwrap());
        let mixed = induce_control_distribution(&bundle, &p.mix(lambda, &q), 0, 0);
        let split = mix(
            lambda,
            &induce_control_distribution(&bundle, &p, 0, 0),
            &induce_control_distribution(&bundle, &q, 0, 0),
        );
        assert_same_law(&mixed, &split);
        prop_assert!((mixed.total_mass() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn pushforward_commutes_with_mixtures(seed: u64, lambda in 0.0f64..=1.0) {
        let mut rng = rng_from_seed(seed);
        let game = Tables::random(&mut rng, 2).game();
        let controls = control_grid(&game, 0, 0, 2, EXHAUSTIVE_CONTROL_LIMIT);
        let p = random_law(&mut rng, &controls, 6);
        let q = random_law(&mut rng, &controls, 6);
        let x = rng.gen_range(0..2);
        let push = |m: &FiniteMeasure<Control>| induce_action_distribution(m, 1, x).unwrap();
        assert_same_law(&push(&mix(lambda, &p, &q)), &mix(lambda, &push(&p), &push(&q)));
        let f = |c: &Control| c.decision(0, 0).unwrap() + 2 * c.decision(1, 1).unwrap();
        assert_same_law(&mix(lambda, &p, &q).map(f), &mix(lambda, &p.map(f), &q.map(f)));
    }

    #[test]
    fn regret_is_nonnegative_and_vanishes_at_argmax(seed: u64) {
        let mut rng = rng_from_seed(seed);
        let horizon = rng.gen_range(1..=2);
        let tables = Tables::random(&mut rng, horizon);
        let game = tables.game();
        let own = control_grid(&game, 0, 0, horizon, EXHAUSTIVE_CONTROL_LIMIT);
        let opp = control_grid(&game, 1, 0, horizon, EXHAUSTIVE_CONTROL_LIMIT);
        let gamma = random_law(&mut rng, &opp, 3);
        let scen = scenarios(&mut rng);
        let x = rng.gen_range(0..2);

        let priors: Vec<_> = (0..3).map(|_| random_law(&mut rng, &own, 4)).collect();
        let bundle = tables.bundle(gamma.clone(), priors);
        prop_assert!(regret_condition(&game, &bundle, &scen, 0, x, &own).unwrap() >= 0.0);

        let probe = tables.bundle(gamma.clone(), vec![FiniteMeasure::new()]);
        let argmax: Vec<_> = (0..3)
            .map(|s| {
                let values: Vec<f64> = own.iter().map(|c| value_of_control(&game, &probe, s, 0, x, c).unwrap()).collect();
                let best = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                FiniteMeasure::uniform(own.iter().zip(&values).filter(|(_, &v)| v == best).map(|(c, _)| c.clone()))
            })
            .collect();
        let optimal = tables.bundle(gamma, argmax);
        prop_assert_eq!(regret_condition(&game, &optimal, &scen, 0, x, &own).unwrap(), 0.0);
    }

    #[test]
    fn time_consistency_residual_vanishes_at_full_horizon(seed: u64) {
        let mut rng = rng_from_seed(seed);
        let horizon = rng.gen_range(1..=3);
        let tables = Tables::random(&mut rng, horizon);
        let game = tables.game();
        let own = control_grid(&game, 0, 0, horizon, EXHAUSTIVE_CONTROL_LIMIT);
        let opp = control_grid(&game, 1, 0, horizon, EXHAUSTIVE_CONTROL_LIMIT);
        let priors: Vec<_> = (0..3).map(|_| random_law(&mut rng, &own, 3)).collect();
        let bundle = tables.bundle(random_law(&mut rng, &opp, 3), priors);
        let scen = scenarios(&mut rng);
        let x = rng.gen_range(0..2);
        prop_assert_eq!(time_consistency_residual(&game, &bundle, &scen, 0, x, horizon).unwrap(), 0.0);
    }

    #[test]
    fn optimality_rows_are_ordered(seed: u64) {
        let (nash, corr, coarse) = random_two_by_two(seed);
        prop_assert!(coarse <= corr + 1e-12);
        prop_assert!(corr <= nash + 1e-12);
    }

    #[test]
    fn mood_is_monotone_in_kappa(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(mood_label(lo).unwrap() <= mood_label(hi).unwrap());
    }
}

/// `(nash-type, correlated, coarse correlated)` for player 0 or 1 of a
/// random 2×2 game under a random joint law.
fn random_two_by_two(seed: u64) -> (f64, f64, f64) {
    let mut rng = rng_from_seed(seed);
    let table: Vec<f64> = (0..4).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let rho = FiniteMeasure::from_atoms(
        [vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]
            .into_iter()
            .filter_map(|p: Profile| rng.gen_bool(0.85).then(|| (p, rng.gen_range(0.01..1.0)))),
    );
    let rho = if rho.is_empty() { FiniteMeasure::dirac(vec![1, 0]) } else { rho.normalized() };
    let player = rng.gen_range(0..2);
    let payoff = move |p: &[usize]| table[p[0] * 2 + p[1]];
    let v = equilibrium_condition_values(&[2, 2], &payoff, &rho, player, None).unwrap();
    (v.nash_type, v.correlated, v.coarse_correlated)
}

#[test]
fn coarse_correlated_below_correlated_on_hundred_games() {
    for seed in 0..100 {
        let (nash, corr, coarse) = random_two_by_two(1_000 + seed);
        assert!(coarse <= corr + 1e-12, "game {seed}: {coarse} > {corr}");
        assert!(corr <= nash + 1e-12, "game {seed}: {corr} > {nash}");
    }
}

#[test]
fn mood_bands_cover_the_unit_interval() {
    assert!(mood_label(-0.01).is_err());
    assert!(mood_label(1.01).is_err());
    let labels: Vec<_> = (0..=90).map(|i| mood_label(i as f64 / 90.0).unwrap()).collect();
    assert!(labels.windows(2).all(|w| w[0] <= w[1]));
    assert_ne!(labels[0], labels[90]);
}
