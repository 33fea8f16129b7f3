//! Random-coding constructions run as seeded simulations.
//!
//! The non-causal scheme shares a codebook of `(a^n, b^n)` pairs: Controller 1
//! picks a codeword typical with the whole source block and plays its `a^n`;
//! Controller 2 looks the `a^n` up and plays the matching `b^n`.
//!
//! The block-Markov scheme works with strictly causal Controller 2. In every
//! block Controller 1 covers the *next* source block with a `b^k` codeword and
//! hides that codeword's index in the bin of the `a^k` it plays now. Controller
//! 2 reads the bin at the end of the block and plays the codeword during the
//! next one.

use rand::distributions::{Distribution, WeightedIndex};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::coordination::{slack_causal, slack_noncausal};
use crate::error::{invalid, Result};
use crate::optimizer::RewardTable;
use crate::probability::{
    conditional_entropy, mutual_information, total_variation, EmpiricalCounts, JointPmf, Pmf,
    ProbabilityTable,
};
use crate::rng::{
    derive_seed, rng_for, ROLE_BINNING, ROLE_CODEBOOK, ROLE_ENCODER, ROLE_FIRST_BLOCK,
    ROLE_SOURCE, ROLE_TRIAL,
};
use crate::target::{TargetSpec, AXIS_A, AXIS_B, AXIS_X};

/// Largest codebook or bin count a simulation will allocate.
pub const MAX_CODEBOOK_SIZE: usize = 1 << 24;

/// Default typicality threshold on total variation.
pub const DEFAULT_TYPICALITY_EPS: f64 = 0.12;

/// `⌈2^{n·r}⌉`, rejecting sizes above [`MAX_CODEBOOK_SIZE`].
pub fn codebook_size(n: usize, rate: f64) -> Result<usize> {
    if !rate.is_finite() || rate < 0.0 {
        return invalid(format!("rate must be a non-negative number, got {rate}"));
    }
    let size = (n as f64 * rate).exp2().ceil();
    if size > MAX_CODEBOOK_SIZE as f64 {
        return invalid(format!("2^(n·r) = {size:.0} exceeds the codebook limit {MAX_CODEBOOK_SIZE}"));
    }
    Ok(size as usize)
}

/// I.i.d. draws from `p0`, shared by the schemes and the game harness.
pub fn sample_source(p0: &Pmf, len: usize, seed: u64) -> Vec<usize> {
    let dist = WeightedIndex::new(p0.probs()).expect("validated pmf");
    let mut rng = rng_for(seed, ROLE_SOURCE, 0);
    (0..len).map(|_| dist.sample(&mut rng)).collect()
}

fn sample_seq(dist: &WeightedIndex<f64>, len: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    (0..len).map(|_| dist.sample(rng)).collect()
}

/// Random codebook of `(a^n, b^n)` pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    n: usize,
    rate: f64,
    entries: Vec<(Vec<usize>, Vec<usize>)>,
}

impl Codebook {
    pub fn from_entries(n: usize, rate: f64, entries: Vec<(Vec<usize>, Vec<usize>)>) -> Result<Self> {
        if entries.is_empty() {
            return invalid("codebook must have at least one entry");
        }
        if entries.iter().any(|(a, b)| a.len() != n || b.len() != n) {
            return invalid(format!("every codeword must have length {n}"));
        }
        Ok(Codebook { n, rate, entries })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[(Vec<usize>, Vec<usize>)] {
        &self.entries
    }

    pub fn entry(&self, k: usize) -> (&[usize], &[usize]) {
        let (a, b) = &self.entries[k];
        (a, b)
    }
}

/// Draws `⌈2^{n·r}⌉` pairs i.i.d. per symbol from the `(a,b)` marginal of the target.
pub fn generate_codebook(target: &TargetSpec, n: usize, rate: f64, seed: u64) -> Result<Codebook> {
    if n == 0 {
        return invalid("block length must be at least 1");
    }
    let na = target.a_alphabet().size();
    let nb = target.b_alphabet().size();
    let max_rate = ((na * nb) as f64).log2();
    if rate > max_rate + 1e-12 {
        return invalid(format!("rate {rate} exceeds log2|A×B| = {max_rate}"));
    }
    let size = codebook_size(n, rate)?;
    let dist = WeightedIndex::new(target.ab_marginal()).expect("validated pmf");
    let mut rng = rng_for(seed, ROLE_CODEBOOK, 0);
    let entries = (0..size)
        .map(|_| {
            let pairs = sample_seq(&dist, n, &mut rng);
            (pairs.iter().map(|p| p / nb).collect(), pairs.iter().map(|p| p % nb).collect())
        })
        .collect();
    Codebook::from_entries(n, rate, entries)
}

/// Total variation between the type of aligned sequences and a flat target table.
///
/// `axes` lists, per sequence, its alphabet size; cells are row-major.
fn type_tv(seqs: &[&[usize]], sizes: &[usize], target: &[f64], counts: &mut Vec<u32>) -> f64 {
    counts.clear();
    counts.resize(target.len(), 0);
    let len = seqs[0].len();
    for t in 0..len {
        let cell = seqs.iter().zip(sizes).fold(0, |acc, (s, &n)| acc * n + s[t]);
        counts[cell] += 1;
    }
    let inv = 1.0 / len as f64;
    0.5 * counts
        .iter()
        .zip(target)
        .map(|(&c, p)| (c as f64 * inv - p).abs())
        .sum::<f64>()
}

/// Result of searching a codebook for a typical codeword.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EncodeOutcome {
    /// Lowest index within the threshold.
    Found { index: usize, tv: f64 },
    /// No codeword was typical; `fallback` has the smallest distance (lowest index on ties).
    Failed { fallback: usize, tv: f64 },
}

impl EncodeOutcome {
    pub fn index(&self) -> usize {
        match *self {
            EncodeOutcome::Found { index, .. } => index,
            EncodeOutcome::Failed { fallback, .. } => fallback,
        }
    }

    pub fn tv(&self) -> f64 {
        match *self {
            EncodeOutcome::Found { tv, .. } | EncodeOutcome::Failed { tv, .. } => tv,
        }
    }

    pub fn is_found(&self) -> bool {
        matches!(self, EncodeOutcome::Found { .. })
    }
}

/// Non-causal encoder: the first codeword whose triple with `xn` is typical.
pub fn encode_noncausal(xn: &[usize], codebook: &Codebook, target: &TargetSpec, eps: f64) -> Result<EncodeOutcome> {
    if xn.len() != codebook.n() {
        return invalid(format!("source block has length {}, codebook uses {}", xn.len(), codebook.n()));
    }
    if eps.is_nan() || eps < 0.0 {
        return invalid("typicality threshold must be non-negative");
    }
    let sizes = [
        target.x_alphabet().size(),
        target.a_alphabet().size(),
        target.b_alphabet().size(),
    ];
    let probs = target.joint().probs();
    let mut counts = Vec::new();
    let mut best = (f64::INFINITY, 0);
    for (k, (a, b)) in codebook.entries().iter().enumerate() {
        let tv = type_tv(&[xn, a, b], &sizes, probs, &mut counts);
        if tv <= eps {
            return Ok(EncodeOutcome::Found { index: k, tv });
        }
        if tv < best.0 {
            best = (tv, k);
        }
    }
    Ok(EncodeOutcome::Failed {
        fallback: best.1,
        tv: best.0,
    })
}

/// Non-causal decoder: the `b^n` of the first codeword whose `a^n` equals `an`;
/// codeword 0's `b^n` when none does.
pub fn decode_noncausal(an: &[usize], codebook: &Codebook) -> Vec<usize> {
    codebook
        .entries()
        .iter()
        .find(|(a, _)| a.as_slice() == an)
        .unwrap_or(&codebook.entries()[0])
        .1
        .clone()
}

/// Seeded hash from `a^k` sequences to bins, computed identically by both controllers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashBinning {
    pub k: usize,
    pub num_bins: usize,
    pub bin_seed: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl HashBinning {
    pub fn new(k: usize, rate: f64, bin_seed: u64) -> Result<Self> {
        Ok(HashBinning {
            k,
            num_bins: codebook_size(k, rate)?,
            bin_seed,
        })
    }

    pub fn bin(&self, seq: &[usize]) -> usize {
        let h = seq
            .iter()
            .fold(splitmix64(self.bin_seed), |h, &s| splitmix64(h ^ (s as u64 + 1)));
        (h % self.num_bins as u64) as usize
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Rate {
    /// Midpoint of the scheme's admissible rate interval.
    Auto,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchemeConfig {
    /// `n` for the non-causal scheme, `k` for block-Markov.
    pub block_length: usize,
    pub rate: Rate,
    pub typicality_eps: f64,
    /// Rejection-sampling attempts per block; `None` means `64 × num_bins`.
    pub max_draws: Option<u64>,
    pub seed: u64,
    pub num_blocks: usize,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            block_length: 14,
            rate: Rate::Auto,
            typicality_eps: DEFAULT_TYPICALITY_EPS,
            max_draws: None,
            seed: 0,
            num_blocks: 50,
        }
    }
}

impl SchemeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.block_length == 0 {
            return invalid("block length must be at least 1");
        }
        if self.typicality_eps.is_nan() || self.typicality_eps <= 0.0 {
            return invalid("typicality_eps must be positive");
        }
        if self.max_draws == Some(0) {
            return invalid("max_draws must be at least 1");
        }
        if self.num_blocks == 0 {
            return invalid("num_blocks must be at least 1");
        }
        if let Rate::Fixed(r) = self.rate {
            if !r.is_finite() || r < 0.0 {
                return invalid(format!("rate must be a non-negative number, got {r}"));
            }
        }
        Ok(())
    }
}

/// The open interval `(I(X;A,B), H(A))`.
pub fn noncausal_rate_interval(target: &TargetSpec) -> (f64, f64) {
    let j = target.joint();
    let lo = mutual_information(j, &[AXIS_X], &[AXIS_A, AXIS_B], &[]).expect("three axes");
    (lo, j.marginal_entropy(&[AXIS_A]).expect("three axes"))
}

/// The open interval `(I(X;B), H(A|X,B))`.
pub fn block_markov_rate_interval(target: &TargetSpec) -> (f64, f64) {
    let j = target.joint();
    let lo = mutual_information(j, &[AXIS_X], &[AXIS_B], &[]).expect("three axes");
    (lo, conditional_entropy(j, &[AXIS_A], &[AXIS_X, AXIS_B]).expect("three axes"))
}

fn resolve(rate: Rate, interval: (f64, f64)) -> f64 {
    match rate {
        Rate::Auto => 0.5 * (interval.0 + interval.1),
        Rate::Fixed(r) => r,
    }
}

/// Per-block record. The non-causal scheme reports a single block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockDiagnostics {
    pub block: usize,
    pub len: usize,
    /// Codeword chosen by Controller 1 (non-causal), or the covering index for the next block.
    pub codeword: Option<usize>,
    pub codeword_tv: Option<f64>,
    pub typical: bool,
    /// Bin Controller 1 aimed for (block-Markov).
    pub chosen_bin: Option<usize>,
    /// Bin Controller 2 read from the played `a^k` (block-Markov).
    pub decoded_bin: Option<usize>,
    pub draws: u64,
    pub bin_failure: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub seed: u64,
    pub rate: f64,
    /// Codewords (non-causal) or bins (block-Markov).
    pub codebook_size: usize,
    pub xs: Vec<usize>,
    pub as_: Vec<usize>,
    pub bs: Vec<usize>,
    pub empirical: EmpiricalCounts,
    pub tv_to_target: f64,
    pub avg_reward: Option<f64>,
    pub encoder_failures: usize,
    /// Blocks with no typical covering codeword (block-Markov).
    pub covering_failures: usize,
    pub per_block: Vec<BlockDiagnostics>,
    pub warnings: Vec<String>,
}

fn finish_report(
    target: &TargetSpec,
    reward: Option<&RewardTable>,
    xs: &[usize],
    as_: &[usize],
    bs: &[usize],
) -> Result<(EmpiricalCounts, f64, Option<f64>)> {
    let empirical = EmpiricalCounts::tally(target.joint().axes().to_vec(), &[xs, as_, bs])?;
    let normalized = empirical.normalized();
    let tv = total_variation(&normalized, target.joint())?;
    let avg = reward.map(|r| r.expected(&normalized)).transpose()?;
    Ok((empirical, tv, avg))
}

fn check_reward(target: &TargetSpec, reward: Option<&RewardTable>) -> Result<()> {
    match reward {
        Some(r) if r.axes() != target.joint().axes() => invalid("reward axes differ from the target's"),
        _ => Ok(()),
    }
}

/// Codebook seed of a non-causal run with the given seed.
pub fn noncausal_codebook_seed(seed: u64) -> u64 {
    derive_seed(seed, ROLE_CODEBOOK, 0)
}

/// One run of the non-causal scheme: a fresh codebook and a fresh source block.
pub fn run_noncausal(target: &TargetSpec, config: &SchemeConfig, reward: Option<&RewardTable>) -> Result<SimulationReport> {
    config.validate()?;
    check_reward(target, reward)?;
    let mut warnings = Vec::new();
    let slack = slack_noncausal(target.joint())?;
    if slack <= 0.0 {
        warnings.push(format!("target slack {slack:.6} is not positive; the scheme is expected to fail"));
    }
    let interval = noncausal_rate_interval(target);
    let rate = resolve(config.rate, interval);
    if !(rate > interval.0 && rate < interval.1) {
        warnings.push(format!(
            "rate {rate:.6} lies outside the admissible interval ({:.6}, {:.6})",
            interval.0, interval.1
        ));
    }
    let n = config.block_length;
    let codebook = generate_codebook(target, n, rate, noncausal_codebook_seed(config.seed))?;
    let xs = sample_source(target.source(), n, config.seed);
    let outcome = encode_noncausal(&xs, &codebook, target, config.typicality_eps)?;
    let as_ = codebook.entry(outcome.index()).0.to_vec();
    let bs = decode_noncausal(&as_, &codebook);
    let (empirical, tv_to_target, avg_reward) = finish_report(target, reward, &xs, &as_, &bs)?;
    Ok(SimulationReport {
        seed: config.seed,
        rate,
        codebook_size: codebook.len(),
        xs,
        as_,
        bs,
        empirical,
        tv_to_target,
        avg_reward,
        encoder_failures: usize::from(!outcome.is_found()),
        covering_failures: 0,
        per_block: vec![BlockDiagnostics {
            block: 0,
            len: n,
            codeword: Some(outcome.index()),
            codeword_tv: Some(outcome.tv()),
            typical: outcome.is_found(),
            chosen_bin: None,
            decoded_bin: None,
            draws: 0,
            bin_failure: false,
        }],
        warnings,
    })
}

/// Seed of trial `t` under a base seed.
pub fn trial_seed(seed: u64, trial: usize) -> u64 {
    derive_seed(seed, ROLE_TRIAL, trial as u64)
}

fn trials_of<F>(config: &SchemeConfig, trials: usize, run: F) -> Result<Vec<SimulationReport>>
where
    F: Fn(&SchemeConfig) -> Result<SimulationReport> + Sync,
{
    if trials == 0 {
        return invalid("at least one trial is required");
    }
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let cfg = SchemeConfig {
                seed: trial_seed(config.seed, t),
                ..config.clone()
            };
            run(&cfg)
        })
        .collect()
}

/// Independent non-causal runs, reported in trial order.
pub fn simulate_noncausal(
    target: &TargetSpec,
    config: &SchemeConfig,
    reward: Option<&RewardTable>,
    trials: usize,
) -> Result<Vec<SimulationReport>> {
    trials_of(config, trials, |cfg| run_noncausal(target, cfg, reward))
}

/// Shared state of the block-Markov code: `b^k` codebook, binning, first-block `b^k`.
#[derive(Debug, Clone)]
pub struct BlockMarkovCode {
    target: TargetSpec,
    k: usize,
    rate: f64,
    eps: f64,
    max_draws: u64,
    seed: u64,
    codebook: Vec<Vec<usize>>,
    binning: HashBinning,
    first_block: Vec<usize>,
    xb_target: Vec<f64>,
    a_given_xb: Vec<WeightedIndex<f64>>,
    warnings: Vec<String>,
}

impl BlockMarkovCode {
    pub fn new(target: &TargetSpec, config: &SchemeConfig) -> Result<Self> {
        config.validate()?;
        let mut warnings = Vec::new();
        let slack = slack_causal(target.joint())?;
        if slack <= 0.0 {
            warnings.push(format!("target slack {slack:.6} is not positive; the scheme is expected to fail"));
        }
        let interval = block_markov_rate_interval(target);
        let rate = resolve(config.rate, interval);
        if !(rate > interval.0 && rate < interval.1) {
            warnings.push(format!(
                "rate {rate:.6} lies outside the admissible interval ({:.6}, {:.6})",
                interval.0, interval.1
            ));
        }
        let k = config.block_length;
        let binning = HashBinning::new(k, rate, derive_seed(config.seed, ROLE_BINNING, 0))?;
        let b_dist = WeightedIndex::new(target.b_marginal()).expect("validated pmf");
        let mut rng = rng_for(config.seed, ROLE_CODEBOOK, 0);
        let codebook = (0..binning.num_bins).map(|_| sample_seq(&b_dist, k, &mut rng)).collect();
        let first_block = sample_seq(&b_dist, k, &mut rng_for(config.seed, ROLE_FIRST_BLOCK, 0));
        let max_draws = config.max_draws.unwrap_or(64 * binning.num_bins as u64);
        Ok(BlockMarkovCode {
            target: target.clone(),
            k,
            rate,
            eps: config.typicality_eps,
            max_draws,
            seed: config.seed,
            codebook,
            binning,
            first_block,
            xb_target: target.xb_marginal().probs().to_vec(),
            a_given_xb: target
                .a_given_xb()
                .iter()
                .map(|row| WeightedIndex::new(row).expect("validated row"))
                .collect(),
            warnings,
        })
    }

    pub fn rate(&self) -> f64 {
        self.rate
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn binning(&self) -> &HashBinning {
        &self.binning
    }

    pub fn codebook(&self) -> &[Vec<usize>] {
        &self.codebook
    }

    pub fn max_draws(&self) -> u64 {
        self.max_draws
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Codeword whose prefix has the smallest `(x, b)` distance to `x_block`,
    /// lowest index on ties; `Found` when that distance is within the threshold.
    pub fn cover(&self, x_block: &[usize]) -> EncodeOutcome {
        let sizes = [self.target.x_alphabet().size(), self.target.b_alphabet().size()];
        let mut counts = Vec::new();
        let mut best = (f64::INFINITY, 0);
        for (j, b) in self.codebook.iter().enumerate() {
            let tv = type_tv(&[x_block, &b[..x_block.len()]], &sizes, &self.xb_target, &mut counts);
            if tv < best.0 {
                best = (tv, j);
            }
        }
        if best.0 <= self.eps {
            return EncodeOutcome::Found {
                index: best.1,
                tv: best.0,
            };
        }
        EncodeOutcome::Failed {
            fallback: best.1,
            tv: best.0,
        }
    }

    /// Controller 2's block: the first-block sequence, or the codeword named by
    /// the bin of the previous block's actions.
    pub fn bob_block(&self, prev_a: Option<&[usize]>, len: usize) -> Vec<usize> {
        match prev_a {
            None => self.first_block[..len].to_vec(),
            Some(a) => self.codebook[self.binning.bin(a)][..len].to_vec(),
        }
    }

    /// Controller 1's block `i`: draws `a^k ~ Π p(a|x_t, b_t)` until its bin
    /// names the covering codeword of `next_x`. The final block has no target bin.
    pub fn alice_block(
        &self,
        i: usize,
        x_block: &[usize],
        b_block: &[usize],
        next_x: Option<&[usize]>,
    ) -> (Vec<usize>, BlockDiagnostics) {
        let nb = self.target.b_alphabet().size();
        let mut rng = rng_for(self.seed, ROLE_ENCODER, i as u64);
        let draw = |rng: &mut ChaCha8Rng| -> Vec<usize> {
            x_block
                .iter()
                .zip(b_block)
                .map(|(&x, &b)| self.a_given_xb[x * nb + b].sample(rng))
                .collect()
        };
        let mut diag = BlockDiagnostics {
            block: i,
            len: x_block.len(),
            codeword: None,
            codeword_tv: None,
            typical: false,
            chosen_bin: None,
            decoded_bin: None,
            draws: 0,
            bin_failure: false,
        };
        let a = match next_x {
            None => {
                diag.draws = 1;
                draw(&mut rng)
            }
            Some(next) => {
                let cover = self.cover(next);
                let j = cover.index();
                diag.codeword = Some(j);
                diag.codeword_tv = Some(cover.tv());
                diag.typical = cover.is_found();
                diag.chosen_bin = Some(j);
                let mut a = Vec::new();
                let mut hit = false;
                while diag.draws < self.max_draws {
                    a = draw(&mut rng);
                    diag.draws += 1;
                    if self.binning.bin(&a) == j {
                        hit = true;
                        break;
                    }
                }
                diag.bin_failure = !hit;
                diag.decoded_bin = Some(self.binning.bin(&a));
                a
            }
        };
        (a, diag)
    }

    /// Runs both controllers over a whole source sequence. The last block may be short.
    pub fn run(&self, xs: &[usize]) -> (Vec<usize>, Vec<usize>, Vec<BlockDiagnostics>) {
        let blocks: Vec<&[usize]> = xs.chunks(self.k).collect();
        let mut as_ = Vec::with_capacity(xs.len());
        let mut bs = Vec::with_capacity(xs.len());
        let mut diags = Vec::with_capacity(blocks.len());
        let mut prev_a: Option<Vec<usize>> = None;
        for (i, x_block) in blocks.iter().enumerate() {
            let b_block = self.bob_block(prev_a.as_deref(), x_block.len());
            // A short block cannot carry a full-length bin index.
            let next = blocks.get(i + 1).copied().filter(|_| x_block.len() == self.k);
            let (a_block, diag) = self.alice_block(i, x_block, &b_block, next);
            as_.extend_from_slice(&a_block);
            bs.extend_from_slice(&b_block);
            diags.push(diag);
            prev_a = Some(a_block);
        }
        (as_, bs, diags)
    }

    /// Recomputes Controller 2's actions from Controller 1's actions alone.
    pub fn replay_bob(&self, as_: &[usize]) -> Vec<usize> {
        let mut bs = Vec::with_capacity(as_.len());
        let mut prev: Option<&[usize]> = None;
        for block in as_.chunks(self.k) {
            bs.extend(self.bob_block(prev, block.len()));
            prev = Some(block);
        }
        bs
    }
}

/// Block-Markov run on a given source sequence.
pub fn simulate_block_markov_with_source(
    target: &TargetSpec,
    config: &SchemeConfig,
    reward: Option<&RewardTable>,
    xs: Vec<usize>,
) -> Result<SimulationReport> {
    check_reward(target, reward)?;
    if xs.is_empty() {
        return invalid("source sequence must be non-empty");
    }
    let code = BlockMarkovCode::new(target, config)?;
    let (as_, bs, per_block) = code.run(&xs);
    let encoder_failures = per_block.iter().filter(|d| d.bin_failure).count();
    let covering_failures = per_block.iter().filter(|d| d.codeword.is_some() && !d.typical).count();
    let mut warnings = code.warnings().to_vec();
    if per_block.len() > 1 {
        warnings.push(format!(
            "edge blocks: block 0 plays a pre-agreed b-sequence and block {} carries no index",
            per_block.len() - 1
        ));
    }
    let (empirical, tv_to_target, avg_reward) = finish_report(target, reward, &xs, &as_, &bs)?;
    Ok(SimulationReport {
        seed: config.seed,
        rate: code.rate(),
        codebook_size: code.binning().num_bins,
        xs,
        as_,
        bs,
        empirical,
        tv_to_target,
        avg_reward,
        encoder_failures,
        covering_failures,
        per_block,
        warnings,
    })
}

/// Block-Markov run of `num_blocks × k` symbols drawn from the target's source.
pub fn simulate_block_markov(
    target: &TargetSpec,
    config: &SchemeConfig,
    reward: Option<&RewardTable>,
) -> Result<SimulationReport> {
    config.validate()?;
    let xs = sample_source(target.source(), config.block_length * config.num_blocks, config.seed);
    simulate_block_markov_with_source(target, config, reward, xs)
}

/// Independent block-Markov runs, reported in trial order.
pub fn simulate_block_markov_trials(
    target: &TargetSpec,
    config: &SchemeConfig,
    reward: Option<&RewardTable>,
    trials: usize,
) -> Result<Vec<SimulationReport>> {
    trials_of(config, trials, |cfg| simulate_block_markov(target, cfg, reward))
}

/// Average of the empirical distributions of several reports.
pub fn average_empirical(reports: &[SimulationReport]) -> Result<JointPmf> {
    let Some(first) = reports.first() else {
        return invalid("no reports to average");
    };
    let axes = first.empirical.axes().to_vec();
    let mut acc = vec![0.0; first.empirical.counts().len()];
    for r in reports {
        for (a, p) in acc.iter_mut().zip(r.empirical.normalized().probs()) {
            *a += p / reports.len() as f64;
        }
    }
    JointPmf::new(axes, acc)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probability::{Alphabet, ConditionalPmf};
    use approx::assert_abs_diff_eq;

    /// X ~ Bern(1/2), A = X flipped with probability `flip`, B = A.
    fn flip_target(flip: f64) -> TargetSpec {
        let b = Alphabet::binary();
        let row = |x: usize| {
            let mut r = vec![0.0; 4];
            r[x * 2 + x] = 1.0 - flip;
            r[(1 - x) * 2 + (1 - x)] = flip;
            r
        };
        TargetSpec::new(
            Pmf::bernoulli(0.5).unwrap(),
            ConditionalPmf::new(b.clone(), vec![b.clone(), b], vec![row(0), row(1)]).unwrap(),
        )
        .unwrap()
    }

    fn product_target() -> TargetSpec {
        let b = Alphabet::binary();
        TargetSpec::new(
            Pmf::bernoulli(0.5).unwrap(),
            ConditionalPmf::new(b.clone(), vec![b.clone(), b], vec![vec![0.25; 4]; 2]).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn codebook_sizes() {
        assert_eq!(codebook_size(14, 0.0).unwrap(), 1);
        assert_eq!(codebook_size(14, 0.766).unwrap(), 1692);
        assert_eq!(codebook_size(10, 1.0).unwrap(), 1024);
        assert!(codebook_size(64, 1.0).is_err());
        assert!(codebook_size(4, -0.1).is_err());
    }

    #[test]
    fn auto_rate_is_interval_midpoint() {
        let t = flip_target(0.1);
        let (lo, hi) = noncausal_rate_interval(&t);
        assert_abs_diff_eq!(lo, 0.5310044064107188, epsilon = 1e-12);
        assert_abs_diff_eq!(hi, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(resolve(Rate::Auto, (lo, hi)), 0.7655022032053594, epsilon = 1e-12);
    }

    #[test]
    fn deterministic_marginal_gives_identical_entries() {
        let b = Alphabet::binary();
        let t = TargetSpec::new(
            Pmf::bernoulli(0.5).unwrap(),
            ConditionalPmf::new(b.clone(), vec![b.clone(), b], vec![vec![0.0, 1.0, 0.0, 0.0]; 2]).unwrap(),
        )
        .unwrap();
        let cb = generate_codebook(&t, 6, 1.0, 3).unwrap();
        assert_eq!(cb.len(), 64);
        assert!(cb.entries().iter().all(|(a, b)| a == &vec![0; 6] && b == &vec![1; 6]));
    }

    #[test]
    fn encoder_picks_lowest_typical_index() {
        let t = flip_target(0.0);
        let xn = vec![0, 1, 1, 0];
        let cb = Codebook::from_entries(
            4,
            1.0,
            vec![
                (vec![1, 1, 1, 1], vec![1, 1, 1, 1]),
                (xn.clone(), xn.clone()),
                (xn.clone(), xn.clone()),
            ],
        )
        .unwrap();
        let out = encode_noncausal(&xn, &cb, &t, 0.0).unwrap();
        assert_eq!(out, EncodeOutcome::Found { index: 1, tv: 0.0 });
        let miss = encode_noncausal(&[1, 1, 1, 1], &cb, &flip_target(0.1), 0.0).unwrap();
        assert!(!miss.is_found());
    }

    #[test]
    fn decoder_first_match_and_fallback() {
        let cb = Codebook::from_entries(
            2,
            1.0,
            vec![(vec![0, 0], vec![1, 0]), (vec![0, 1], vec![1, 1]), (vec![0, 1], vec![0, 0])],
        )
        .unwrap();
        assert_eq!(decode_noncausal(&[0, 0], &cb), vec![1, 0]);
        assert_eq!(decode_noncausal(&[0, 1], &cb), vec![1, 1]);
        assert_eq!(decode_noncausal(&[1, 1], &cb), vec![1, 0]);
    }

    #[test]
    fn config_validation() {
        let ok = SchemeConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            SchemeConfig { typicality_eps: 0.0, ..ok.clone() },
            SchemeConfig { max_draws: Some(0), ..ok.clone() },
            SchemeConfig { block_length: 0, ..ok.clone() },
            SchemeConfig { num_blocks: 0, ..ok.clone() },
            SchemeConfig { rate: Rate::Fixed(f64::NAN), ..ok.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
    }

    #[test]
    fn noncausal_run_is_deterministic_and_consistent() {
        let t = flip_target(0.1);
        let cfg = SchemeConfig {
            block_length: 10,
            seed: 42,
            ..SchemeConfig::default()
        };
        let r1 = run_noncausal(&t, &cfg, None).unwrap();
        let r2 = run_noncausal(&t, &cfg, None).unwrap();
        assert_eq!(r1, r2);
        let tv = total_variation(&r1.empirical.normalized(), t.joint()).unwrap();
        assert_eq!(r1.tv_to_target, tv);
        let cb = generate_codebook(&t, 10, r1.rate, noncausal_codebook_seed(42)).unwrap();
        assert_eq!(decode_noncausal(&r1.as_, &cb), r1.bs);
    }

    #[test]
    fn infeasible_target_warns() {
        let b = Alphabet::binary();
        let t = TargetSpec::new(
            Pmf::bernoulli(0.5).unwrap(),
            ConditionalPmf::new(b.clone(), vec![b.clone(), b], vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0]])
                .unwrap(),
        )
        .unwrap();
        let cfg = SchemeConfig {
            block_length: 8,
            rate: Rate::Fixed(0.5),
            ..SchemeConfig::default()
        };
        let r = run_noncausal(&t, &cfg, None).unwrap();
        assert!(!r.warnings.is_empty());
    }

    #[test]
    fn binning_is_deterministic_and_in_range() {
        let h = HashBinning::new(8, 0.5, 7).unwrap();
        assert_eq!(h.num_bins, 16);
        let seq = [0, 1, 1, 0, 1, 0, 0, 1];
        assert_eq!(h.bin(&seq), h.bin(&seq));
        assert!(h.bin(&seq) < 16);
        let other = HashBinning { bin_seed: 8, ..h };
        let differs = (0..256usize)
            .map(|v| (0..8).map(|i| (v >> i) & 1).collect::<Vec<_>>())
            .any(|s| h.bin(&s) != other.bin(&s));
        assert!(differs);
    }

    #[test]
    fn block_markov_product_target_never_fails() {
        let t = product_target();
        let cfg = SchemeConfig {
            block_length: 8,
            num_blocks: 20,
            rate: Rate::Fixed(0.5),
            seed: 5,
            ..SchemeConfig::default()
        };
        let r = simulate_block_markov(&t, &cfg, None).unwrap();
        assert_eq!(r.encoder_failures, 0);
        assert_eq!(r.xs.len(), 160);
        for d in &r.per_block[..19] {
            assert_eq!(d.chosen_bin, d.decoded_bin);
        }
        let code = BlockMarkovCode::new(&t, &cfg).unwrap();
        assert_eq!(code.replay_bob(&r.as_), r.bs);
    }

    #[test]
    fn block_markov_partial_last_block() {
        let t = product_target();
        let cfg = SchemeConfig {
            block_length: 8,
            rate: Rate::Fixed(0.5),
            ..SchemeConfig::default()
        };
        let xs = sample_source(t.source(), 21, 9);
        let r = simulate_block_markov_with_source(&t, &cfg, None, xs).unwrap();
        assert_eq!(r.per_block.len(), 3);
        assert_eq!(r.per_block[2].len, 5);
        assert_eq!(r.bs.len(), 21);
    }
}
