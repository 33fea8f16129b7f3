use coordlab::optimizer::*;
use coordlab::probability::{Alphabet, ConditionalPmf, JointPmf, Pmf};
use coordlab::coordination::slack_causal;
use coordlab::CoordError;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn bin() -> Alphabet {
    Alphabet::binary()
}

fn penny() -> RewardTable {
    RewardTable::from_fn(vec![bin(), bin(), bin()], |x, a, b| (x == a && a == b) as u8 as f64).unwrap()
}

fn random_reward(seed: u64) -> RewardTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    RewardTable::new(vec![bin(), bin(), bin()], (0..8).map(|_| rng.gen_range(0.0..1.0)).collect()).unwrap()
}

fn light() -> OptimizerConfig {
    OptimizerConfig {
        restarts: 8,
        iterations: 150,
        grid_resolution: None,
        ..OptimizerConfig::default()
    }
}

const REGIMES: [Regime; 3] = [Regime::NonCausalBoth, Regime::CausalBob, Regime::CausalBobWithSourceFeedback];

#[test]
fn converse_holds_for_every_encoder_pair() {
    for p in [0.5, 0.2] {
        let p0 = Pmf::bernoulli(p).unwrap();
        for regime in REGIMES {
            for n in [1, 2] {
                let cert = certify_converse(&p0, &bin(), &bin(), n, regime, DEFAULT_ORACLE_BUDGET).unwrap();
                assert!(cert.min_slack >= -1e-12, "{regime:?} n={n}: {}", cert.min_slack);
                assert!(cert.pairs_checked > 0);
            }
        }
    }
}

#[test]
fn converse_certificate_counts() {
    let p0 = Pmf::bernoulli(0.5).unwrap();
    let c = certify_converse(&p0, &bin(), &bin(), 2, Regime::NonCausalBoth, DEFAULT_ORACLE_BUDGET).unwrap();
    assert_eq!(c.pairs_checked, 256 * 256);
    let c = certify_converse(&p0, &bin(), &bin(), 2, Regime::CausalBobWithSourceFeedback, DEFAULT_ORACLE_BUDGET).unwrap();
    assert_eq!(c.pairs_checked, 256 * 32);
}

#[test]
fn oracle_value_equals_reward_under_expected_empirical() {
    let p0 = Pmf::bernoulli(0.3).unwrap();
    for seed in 0..5 {
        let r = random_reward(seed);
        for regime in REGIMES {
            let o = finite_n_oracle(&p0, &r, 2, regime, DEFAULT_ORACLE_BUDGET).unwrap();
            assert!((r.expected(&o.expected_empirical).unwrap() - o.best_value).abs() <= 1e-12);
        }
    }
}

#[test]
fn oracle_bounded_by_optimizer() {
    let fair = Pmf::bernoulli(0.5).unwrap();
    let mut cases = vec![(fair.clone(), penny())];
    for seed in 0..4 {
        cases.push((Pmf::bernoulli(0.25 + 0.1 * seed as f64).unwrap(), random_reward(100 + seed)));
    }
    for (p0, r) in cases {
        for regime in REGIMES {
            let opt = maximize_reward(&p0, &r, regime.matching_constraint(), &light()).unwrap();
            for n in [1, 2] {
                let o = finite_n_oracle(&p0, &r, n, regime, DEFAULT_ORACLE_BUDGET).unwrap();
                assert!(o.best_value <= opt.value + 1e-6, "{regime:?} n={n}: {} > {}", o.best_value, opt.value);
            }
        }
    }
}

#[test]
fn oracle_superadditive_on_penny() {
    let p0 = Pmf::bernoulli(0.5).unwrap();
    for regime in REGIMES {
        let v1 = finite_n_oracle(&p0, &penny(), 1, regime, DEFAULT_ORACLE_BUDGET).unwrap().best_value;
        let v2 = finite_n_oracle(&p0, &penny(), 2, regime, DEFAULT_ORACLE_BUDGET).unwrap().best_value;
        assert!(2.0 * v2 >= 2.0 * v1 - 1e-15, "{regime:?}");
    }
}

#[test]
fn penny_hand_strategy_is_optimal_at_two_rounds() {
    // A1 = x2, A2 = x2, B1 fixed, B2 = A1: scores in round 2 always, and in
    // round 1 when x1 = x2 = B1. Average (1/4 + 1)/2 = 5/8.
    let p0 = Pmf::bernoulli(0.5).unwrap();
    let o = finite_n_oracle(&p0, &penny(), 2, Regime::CausalBob, DEFAULT_ORACLE_BUDGET).unwrap();
    assert_eq!(o.best_value, 0.625);
    let mut hand = 0.0;
    for x1 in 0..2 {
        for x2 in 0..2 {
            let (a1, a2, b1, b2) = (x2, x2, 0, x2);
            hand += 0.25 * 0.5 * ((x1 == a1 && a1 == b1) as u8 as f64 + (x2 == a2 && a2 == b2) as u8 as f64);
        }
    }
    assert_eq!(hand, 0.625);
    let j = &o.expected_empirical;
    assert!(slack_causal(j).unwrap() >= -1e-12);
}

#[test]
fn oracle_budget_error_reports_count() {
    let p0 = Pmf::bernoulli(0.5).unwrap();
    match finite_n_oracle(&p0, &penny(), 2, Regime::NonCausalBoth, 1000) {
        Err(CoordError::BudgetExceeded { count, budget }) => {
            assert_eq!(count, 65536);
            assert_eq!(budget, 1000);
        }
        other => panic!("expected budget error, got {other:?}"),
    }
}

#[test]
fn noncausal_set_value_dominates_causal() {
    for seed in 0..50 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p0 = Pmf::bernoulli(rng.gen_range(0.1..0.9)).unwrap();
        let r = random_reward(1000 + seed);
        let cfg = OptimizerConfig {
            restarts: 6,
            iterations: 150,
            grid_resolution: None,
            seed,
            ..OptimizerConfig::default()
        };
        let t1 = maximize_reward(&p0, &r, Constraint::Theorem1, &cfg).unwrap();
        let t2 = maximize_reward(&p0, &r, Constraint::Theorem2, &cfg).unwrap();
        assert!(t1.value >= t2.value - 1e-6, "seed {seed}: {} < {}", t1.value, t2.value);
        assert!(t1.slack_at_argmax >= -1e-6 && t2.slack_at_argmax >= -1e-6);
    }
}

#[test]
fn optimizer_is_deterministic() {
    let p0 = Pmf::bernoulli(0.4).unwrap();
    let r = random_reward(7);
    let a = maximize_reward(&p0, &r, Constraint::Theorem2, &light()).unwrap();
    let b = maximize_reward(&p0, &r, Constraint::Theorem2, &light()).unwrap();
    assert_eq!(a, b);
}

#[test]
fn argmax_rows_are_valid_and_value_recomputes() {
    let p0 = Pmf::bernoulli(0.5).unwrap();
    let res = maximize_reward(&p0, &penny(), Constraint::Theorem1, &light()).unwrap();
    let j = JointPmf::from_source_and_conditional(&p0, &res.argmax).unwrap();
    assert!((penny().expected(&j).unwrap() - res.value).abs() <= 1e-12);
    assert!((res.value - 1.0).abs() <= 1e-6);
    for row in res.argmax.rows() {
        assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }
    let _ = ConditionalPmf::new(bin(), vec![bin(), bin()], res.argmax.rows().to_vec()).unwrap();
}
