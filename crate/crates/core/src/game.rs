//! The repeated coordination game.
//!
//! Each round the source emits `x_i`; Alice has seen the whole source
//! sequence in advance and Bob has seen only the past (actions, and the past
//! source when [`BobInformation::ActionsAndSource`]). Both act simultaneously
//! and the pair earns `π(x_i, a_i, b_i)`.

use std::cell::RefCell;
use std::sync::Arc;

use rayon::prelude::*;

use crate::coordination::slack_causal;
use crate::error::{invalid, CoordError, Result};
use crate::optimizer::RewardTable;
use crate::probability::{Alphabet, EmpiricalCounts, Pmf};
use crate::schemes::{sample_source, trial_seed, BlockMarkovCode, SchemeConfig};
use crate::target::{TargetSpec, AXIS_A, AXIS_B, AXIS_X};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BobInformation {
    /// `b_i` may depend on `a^{i-1}` only.
    ActionsOnly,
    /// `b_i` may depend on `a^{i-1}` and `x^{i-1}`.
    ActionsAndSource,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameSpec {
    pub source: Pmf,
    pub reward: RewardTable,
    pub bob_information: BobInformation,
    pub rounds: usize,
}

impl GameSpec {
    pub fn new(source: Pmf, reward: RewardTable, bob_information: BobInformation, rounds: usize) -> Result<Self> {
        let spec = GameSpec {
            source,
            reward,
            bob_information,
            rounds,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.rounds == 0 {
            return invalid("a game needs at least one round");
        }
        if self.source.alphabet() != &self.reward.axes()[AXIS_X] {
            return invalid("source alphabet differs from the reward's X axis");
        }
        Ok(())
    }

    pub fn with_rounds(mut self, rounds: usize) -> Result<Self> {
        self.rounds = rounds;
        self.validate()?;
        Ok(self)
    }
}

/// X ~ Bern(1/2), binary actions, one point when `x = a = b`, Bob sees actions only.
pub fn penny_matching() -> GameSpec {
    let b = Alphabet::binary();
    let reward = RewardTable::from_fn(vec![b.clone(), b.clone(), b], |x, a, b| {
        if x == a && a == b {
            1.0
        } else {
            0.0
        }
    })
    .expect("binary table");
    GameSpec {
        source: Pmf::bernoulli(0.5).expect("valid"),
        reward,
        bob_information: BobInformation::ActionsOnly,
        rounds: 10_000,
    }
}

/// What Bob may look at in round `i`. Forbidden reads are recorded and turn
/// into a strategy violation once Bob's action returns.
pub struct BobView<'a> {
    round: usize,
    actions: &'a [usize],
    source: &'a [usize],
    info: BobInformation,
    violation: RefCell<Option<String>>,
}

impl<'a> BobView<'a> {
    fn flag(&self, reason: String) {
        self.violation.borrow_mut().get_or_insert(reason);
    }

    pub fn round(&self) -> usize {
        self.round
    }

    pub fn information(&self) -> BobInformation {
        self.info
    }

    /// `a^{i-1}`.
    pub fn past_actions(&self) -> &'a [usize] {
        &self.actions[..self.round]
    }

    pub fn action(&self, t: usize) -> Result<usize> {
        if t >= self.round {
            let reason = format!("read a_{t} in round {}", self.round);
            self.flag(reason.clone());
            return Err(CoordError::StrategyViolation {
                round: self.round,
                reason,
            });
        }
        Ok(self.actions[t])
    }

    /// `x^{i-1}`; a violation when Bob sees actions only.
    pub fn past_source(&self) -> Result<&'a [usize]> {
        if self.info == BobInformation::ActionsOnly {
            let reason = "read the source while seeing actions only".to_string();
            self.flag(reason.clone());
            return Err(CoordError::StrategyViolation {
                round: self.round,
                reason,
            });
        }
        Ok(&self.source[..self.round])
    }

    pub fn source(&self, t: usize) -> Result<usize> {
        let past = self.past_source()?;
        past.get(t).copied().ok_or_else(|| {
            let reason = format!("read x_{t} in round {}", self.round);
            self.flag(reason.clone());
            CoordError::StrategyViolation {
                round: self.round,
                reason,
            }
        })
    }
}

pub trait AliceStrategy: Sync {
    type Memory;
    fn init(&self, shared_seed: u64) -> Self::Memory;
    fn act(&self, source: &[usize], round: usize, memory: &mut Self::Memory) -> usize;
}

pub trait BobStrategy: Sync {
    type Memory;
    fn init(&self, shared_seed: u64) -> Self::Memory;
    fn act(&self, view: &BobView<'_>, memory: &mut Self::Memory) -> usize;
}

#[derive(Debug, Clone)]
pub struct StrategyPair<A, B> {
    pub alice: A,
    pub bob: B,
    pub shared_seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundRecord {
    pub x: usize,
    pub a: usize,
    pub b: usize,
    pub payoff: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameTrace {
    pub rounds: Vec<RoundRecord>,
    /// `Σ P_emp(x,a,b) π(x,a,b)`.
    pub average_score: f64,
    pub empirical: EmpiricalCounts,
}

impl GameTrace {
    pub fn xs(&self) -> Vec<usize> {
        self.rounds.iter().map(|r| r.x).collect()
    }

    pub fn as_(&self) -> Vec<usize> {
        self.rounds.iter().map(|r| r.a).collect()
    }

    pub fn bs(&self) -> Vec<usize> {
        self.rounds.iter().map(|r| r.b).collect()
    }
}

/// Plays `spec.rounds` rounds. The source is drawn exactly as the scheme
/// simulations draw it for the same seed.
pub fn play<A: AliceStrategy, B: BobStrategy>(
    spec: &GameSpec,
    pair: &StrategyPair<A, B>,
    seed: u64,
) -> Result<GameTrace> {
    spec.validate()?;
    let axes = spec.reward.axes();
    let (na, nb) = (axes[AXIS_A].size(), axes[AXIS_B].size());
    let xs = sample_source(&spec.source, spec.rounds, seed);
    let mut alice_mem = pair.alice.init(pair.shared_seed);
    let mut bob_mem = pair.bob.init(pair.shared_seed);
    let mut as_ = Vec::with_capacity(spec.rounds);
    let mut bs = Vec::with_capacity(spec.rounds);
    let mut records = Vec::with_capacity(spec.rounds);
    for i in 0..spec.rounds {
        let a = pair.alice.act(&xs, i, &mut alice_mem);
        if a >= na {
            return Err(CoordError::StrategyViolation {
                round: i,
                reason: format!("Alice played {a}, outside an alphabet of size {na}"),
            });
        }
        let view = BobView {
            round: i,
            actions: &as_,
            source: &xs,
            info: spec.bob_information,
            violation: RefCell::new(None),
        };
        let b = pair.bob.act(&view, &mut bob_mem);
        if let Some(reason) = view.violation.into_inner() {
            return Err(CoordError::StrategyViolation { round: i, reason });
        }
        if b >= nb {
            return Err(CoordError::StrategyViolation {
                round: i,
                reason: format!("Bob played {b}, outside an alphabet of size {nb}"),
            });
        }
        as_.push(a);
        bs.push(b);
        records.push(RoundRecord {
            x: xs[i],
            a,
            b,
            payoff: spec.reward.value(xs[i], a, b),
        });
    }
    let empirical = EmpiricalCounts::tally(axes.to_vec(), &[&xs, &as_, &bs])?;
    let average_score = spec.reward.expected(&empirical.normalized())?;
    Ok(GameTrace {
        rounds: records,
        average_score,
        empirical,
    })
}

/// Independent games with per-trial seeds, in trial order.
pub fn play_trials<A: AliceStrategy, B: BobStrategy>(
    spec: &GameSpec,
    pair: &StrategyPair<A, B>,
    seed: u64,
    trials: usize,
) -> Result<Vec<GameTrace>> {
    (0..trials)
        .into_par_iter()
        .map(|t| play(spec, pair, trial_seed(seed, t)))
        .collect()
}

/// Alice plays the current source symbol.
#[derive(Debug, Clone, Copy, Default)]
pub struct CopySource;

impl AliceStrategy for CopySource {
    type Memory = ();
    fn init(&self, _: u64) {}
    fn act(&self, source: &[usize], round: usize, _: &mut ()) -> usize {
        source[round]
    }
}

/// Bob always plays the same symbol.
#[derive(Debug, Clone, Copy)]
pub struct ConstantBob(pub usize);

impl BobStrategy for ConstantBob {
    type Memory = ();
    fn init(&self, _: u64) {}
    fn act(&self, _: &BobView<'_>, _: &mut ()) -> usize {
        self.0
    }
}

/// Bob repeats Alice's previous action (`first` in round 0).
#[derive(Debug, Clone, Copy)]
pub struct EchoBob {
    pub first: usize,
}

impl BobStrategy for EchoBob {
    type Memory = ();
    fn init(&self, _: u64) {}
    fn act(&self, view: &BobView<'_>, _: &mut ()) -> usize {
        view.past_actions().last().copied().unwrap_or(self.first)
    }
}

/// Alice's side of the block-Markov code: encodes the whole source on the first round.
#[derive(Debug, Clone)]
pub struct SchemeAlice {
    code: Arc<BlockMarkovCode>,
}

impl AliceStrategy for SchemeAlice {
    type Memory = Option<Vec<usize>>;
    fn init(&self, _: u64) -> Self::Memory {
        None
    }
    fn act(&self, source: &[usize], round: usize, memory: &mut Self::Memory) -> usize {
        memory.get_or_insert_with(|| self.code.run(source).0)[round]
    }
}

/// Bob's side of the block-Markov code: decodes a bin at each block boundary.
#[derive(Debug, Clone)]
pub struct SchemeBob {
    code: Arc<BlockMarkovCode>,
}

impl BobStrategy for SchemeBob {
    type Memory = Vec<usize>;
    fn init(&self, _: u64) -> Self::Memory {
        Vec::new()
    }
    fn act(&self, view: &BobView<'_>, memory: &mut Self::Memory) -> usize {
        let k = self.code.k();
        let (block, offset) = (view.round() / k, view.round() % k);
        if offset == 0 {
            let prev = (block > 0).then(|| &view.past_actions()[(block - 1) * k..block * k]);
            *memory = self.code.bob_block(prev, k);
        }
        memory[offset]
    }
}

/// The block-Markov controllers as game strategies. With the game seed equal
/// to `config.seed` and `num_blocks × k` rounds, the trace reproduces
/// `simulate_block_markov` exactly.
pub fn scheme_strategy(target: &TargetSpec, config: &SchemeConfig) -> Result<StrategyPair<SchemeAlice, SchemeBob>> {
    let slack = slack_causal(target.joint())?;
    if slack <= 0.0 {
        return Err(CoordError::InfeasibleTarget { slack });
    }
    let code = Arc::new(BlockMarkovCode::new(target, config)?);
    Ok(StrategyPair {
        alice: SchemeAlice { code: code.clone() },
        bob: SchemeBob { code },
        shared_seed: config.seed,
    })
}
