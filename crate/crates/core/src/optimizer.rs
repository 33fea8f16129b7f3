//! Reward maximization over coordination sets, and exhaustive finite-horizon oracles.
//!
//! The best long-run average of a reward `π(x,a,b)` equals the maximum of
//! `E π(X,A,B)` over the coordination set of the delay regime. The set is not
//! convex in the parameters of `p(a,b|x)`, so [`maximize_reward`] combines
//! random-restart penalized ascent with a coarse simplex grid.
//!
//! [`finite_n_oracle`] enumerates every deterministic encoder pair for a short
//! horizon and computes its expected empirical distribution exactly, which
//! gives achievable values and a direct check of the converse inequalities.

use rand::Rng;
use rayon::prelude::*;

use crate::coordination::{
    cell_rule, slack_causal, slack_noncausal, Condition, DelaySpec, EntropyCondition,
    FEASIBILITY_TOL,
};
use crate::error::{invalid, CoordError, Result};
use crate::probability::{advance, Alphabet, ConditionalPmf, JointPmf, MarginalIndex, Pmf, ProbabilityTable};
use crate::rng::{rng_for, ROLE_RESTART};
use crate::target::{AXIS_A, AXIS_B, AXIS_X};

/// A payoff `π(x, a, b)` for every triple.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardTable {
    axes: Vec<Alphabet>,
    values: Vec<f64>,
}

impl RewardTable {
    pub fn new(axes: Vec<Alphabet>, values: Vec<f64>) -> Result<Self> {
        if axes.len() != 3 {
            return invalid("reward table needs axes (X, A, B)");
        }
        let cells: usize = axes.iter().map(Alphabet::size).product();
        if values.len() != cells {
            return invalid(format!("reward table has {} entries, expected {cells}", values.len()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return invalid("reward values must be finite");
        }
        Ok(RewardTable { axes, values })
    }

    pub fn from_fn(axes: Vec<Alphabet>, f: impl Fn(usize, usize, usize) -> f64) -> Result<Self> {
        let (na, nb) = (axes[1].size(), axes[2].size());
        let values = (0..axes[0].size() * na * nb)
            .map(|i| f(i / (na * nb), (i / nb) % na, i % nb))
            .collect();
        RewardTable::new(axes, values)
    }

    pub fn axes(&self) -> &[Alphabet] {
        &self.axes
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, x: usize, a: usize, b: usize) -> f64 {
        let (na, nb) = (self.axes[1].size(), self.axes[2].size());
        self.values[(x * na + a) * nb + b]
    }

    /// `E π` under a joint on the same axes.
    pub fn expected(&self, joint: &JointPmf) -> Result<f64> {
        if joint.axes() != self.axes.as_slice() {
            return invalid("reward and joint have different axes");
        }
        Ok(dot(joint.probs(), &self.values))
    }
}

fn dot(p: &[f64], v: &[f64]) -> f64 {
    p.iter().zip(v).map(|(p, v)| p * v).sum()
}

/// Which coordination set to optimize over.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Constraint {
    /// Both controllers non-causal: `H(A) ≥ I(X;A,B)`.
    Theorem1,
    /// Second controller strictly causal: `H(A|X,B) ≥ I(X;B)`.
    Theorem2,
    Cell(DelaySpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub restarts: usize,
    /// Ascent steps per penalty round.
    pub iterations: usize,
    /// Penalty weights, one ascent round each.
    pub penalty_schedule: Vec<f64>,
    pub learning_rate: f64,
    /// Grid points per simplex coordinate; `None` disables the grid floor.
    pub grid_resolution: Option<usize>,
    /// The grid is skipped when it would have more points than this.
    pub grid_cap: usize,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            restarts: 200,
            iterations: 300,
            penalty_schedule: vec![2.0, 8.0, 32.0, 128.0],
            learning_rate: 0.1,
            grid_resolution: Some(20),
            grid_cap: 5_000_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizationResult {
    pub value: f64,
    pub argmax: ConditionalPmf,
    /// Smallest constraint margin at the argmax (bits).
    pub slack_at_argmax: f64,
    pub restarts_used: usize,
    /// The best value was reached (within 1e-5) from at least two independent starts.
    pub converged: bool,
}

/// Exact structural restriction imposed by independence/Markov conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Structure {
    Free,
    XIndepB,
    XIndepA,
    XIndepAB,
    MarkovXAB,
}

/// Dense evaluation of a signed sum of marginal entropies.
struct EntropyExpr {
    terms: Vec<(f64, MarginalIndex)>,
}

impl EntropyExpr {
    fn new(cond: EntropyCondition, shape: &[usize]) -> Self {
        EntropyExpr {
            terms: cond
                .entropy_terms()
                .into_iter()
                .map(|(c, axes)| (c, MarginalIndex::new(shape, &axes)))
                .collect(),
        }
    }

    fn eval(&self, q: &[f64], buf: &mut Vec<f64>) -> f64 {
        self.terms
            .iter()
            .map(|(c, idx)| {
                buf.resize(idx.len(), 0.0);
                idx.accumulate(q, buf);
                c * crate::probability::entropy_bits(buf)
            })
            .sum()
    }
}

struct Problem {
    p0: Vec<f64>,
    nx: usize,
    na: usize,
    nb: usize,
    reward: Vec<f64>,
    structure: Structure,
    entropy: Vec<EntropyExpr>,
}

impl Problem {
    fn new(p0: &Pmf, reward: &RewardTable, constraint: Constraint) -> Result<Self> {
        if p0.alphabet() != &reward.axes()[AXIS_X] {
            return invalid("source alphabet differs from the reward's X axis");
        }
        let shape: Vec<usize> = reward.axes().iter().map(Alphabet::size).collect();
        let (structure, conds) = match constraint {
            Constraint::Theorem1 => (Structure::Free, vec![EntropyCondition::NonCausal]),
            Constraint::Theorem2 => (Structure::Free, vec![EntropyCondition::Causal]),
            Constraint::Cell(delays) => {
                let rule = cell_rule(delays)?;
                if rule.auxiliary {
                    return invalid("cells with an auxiliary variable are not supported by the optimizer");
                }
                let mut structure = Structure::Free;
                let mut conds = Vec::new();
                for c in rule.conditions {
                    match c {
                        Condition::Entropy(e) => conds.push(e),
                        Condition::Independent { left, right } => {
                            structure = match (left.as_slice(), right.as_slice()) {
                                ([AXIS_X], [AXIS_B]) => Structure::XIndepB,
                                ([AXIS_X], [AXIS_A]) => Structure::XIndepA,
                                ([AXIS_X], [AXIS_A, AXIS_B]) => Structure::XIndepAB,
                                _ => return invalid("unsupported independence condition"),
                            }
                        }
                        Condition::Markov { .. } => structure = Structure::MarkovXAB,
                        Condition::Deterministic { .. } => {
                            return invalid("unsupported deterministic condition")
                        }
                    }
                }
                (structure, conds)
            }
        };
        Ok(Problem {
            p0: p0.probs().to_vec(),
            nx: shape[0],
            na: shape[1],
            nb: shape[2],
            reward: reward.values().to_vec(),
            structure,
            entropy: conds.into_iter().map(|c| EntropyExpr::new(c, &shape)).collect(),
        })
    }

    fn width(&self) -> usize {
        self.na * self.nb
    }

    /// Joint `p0(x) c(a,b|x)` followed by the structural projection.
    fn joint(&self, cond: &[f64], q: &mut Vec<f64>) {
        let w = self.width();
        q.clear();
        q.extend((0..self.nx * w).map(|i| self.p0[i / w] * cond[i]));
        let (nx, na, nb) = (self.nx, self.na, self.nb);
        let at = |x: usize, a: usize, b: usize| (x * na + a) * nb + b;
        match self.structure {
            Structure::Free => {}
            Structure::XIndepAB => {
                let mut ab = vec![0.0; w];
                for (i, p) in q.iter().enumerate() {
                    ab[i % w] += p;
                }
                for (i, v) in q.iter_mut().enumerate() {
                    *v = self.p0[i / w] * ab[i % w];
                }
            }
            Structure::XIndepB | Structure::XIndepA => {
                // Keep the free variable's law given (x, other); replace the
                // restricted variable's law by its marginal.
                let indep_b = self.structure == Structure::XIndepB;
                let (n_r, n_f) = if indep_b { (nb, na) } else { (na, nb) };
                let cell = |x: usize, r: usize, f: usize| if indep_b { at(x, f, r) } else { at(x, r, f) };
                let mut marg = vec![0.0; n_r];
                let mut xr = vec![0.0; nx * n_r];
                for x in 0..nx {
                    for r in 0..n_r {
                        for f in 0..n_f {
                            marg[r] += q[cell(x, r, f)];
                            xr[x * n_r + r] += q[cell(x, r, f)];
                        }
                    }
                }
                let old = q.clone();
                for x in 0..nx {
                    for r in 0..n_r {
                        for f in 0..n_f {
                            let given = if xr[x * n_r + r] > 0.0 {
                                old[cell(x, r, f)] / xr[x * n_r + r]
                            } else {
                                1.0 / n_f as f64
                            };
                            q[cell(x, r, f)] = self.p0[x] * marg[r] * given;
                        }
                    }
                }
            }
            Structure::MarkovXAB => {
                let mut xa = vec![0.0; nx * na];
                let mut ab = vec![0.0; na * nb];
                for x in 0..nx {
                    for a in 0..na {
                        for b in 0..nb {
                            xa[x * na + a] += q[at(x, a, b)];
                            ab[a * nb + b] += q[at(x, a, b)];
                        }
                    }
                }
                for x in 0..nx {
                    for a in 0..na {
                        let pa: f64 = (0..nb).map(|b| ab[a * nb + b]).sum();
                        for b in 0..nb {
                            let b_given_a = if pa > 0.0 { ab[a * nb + b] / pa } else { 1.0 / nb as f64 };
                            q[at(x, a, b)] = xa[x * na + a] * b_given_a;
                        }
                    }
                }
            }
        }
    }

    fn min_slack(&self, q: &[f64], buf: &mut Vec<f64>) -> f64 {
        self.entropy
            .iter()
            .map(|e| e.eval(q, buf))
            .fold(f64::INFINITY, f64::min)
    }

    /// Conditional rows of a projected joint; zero-mass sources keep `fallback`.
    fn rows_of(&self, q: &[f64], fallback: &[f64]) -> Vec<f64> {
        let w = self.width();
        (0..self.nx * w)
            .map(|i| {
                let px = self.p0[i / w];
                if px > 0.0 {
                    q[i] / px
                } else {
                    fallback[i]
                }
            })
            .collect()
    }
}

struct Scratch {
    q: Vec<f64>,
    buf: Vec<f64>,
    cond: Vec<f64>,
}

impl Scratch {
    fn new() -> Self {
        Scratch {
            q: Vec::new(),
            buf: Vec::new(),
            cond: Vec::new(),
        }
    }
}

/// Value and smallest margin at a conditional table.
fn evaluate(problem: &Problem, cond: &[f64], s: &mut Scratch) -> (f64, f64) {
    let mut q = std::mem::take(&mut s.q);
    problem.joint(cond, &mut q);
    let value = dot(&q, &problem.reward);
    let slack = problem.min_slack(&q, &mut s.buf);
    s.q = q;
    (value, slack)
}

fn softmax_rows(logits: &[f64], width: usize, out: &mut Vec<f64>) {
    out.clear();
    for row in logits.chunks(width) {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let start = out.len();
        out.extend(row.iter().map(|z| (z - m).exp()));
        let total: f64 = out[start..].iter().sum();
        out[start..].iter_mut().for_each(|v| *v /= total);
    }
}

fn penalized(problem: &Problem, logits: &[f64], lambda: f64, s: &mut Scratch) -> f64 {
    let mut cond = std::mem::take(&mut s.cond);
    softmax_rows(logits, problem.width(), &mut cond);
    let (value, slack) = evaluate(problem, &cond, s);
    s.cond = cond;
    value - lambda * (-slack).max(0.0)
}

/// Mixes `cond` toward the uniform table until every margin reaches `floor`.
fn repair(problem: &Problem, cond: &[f64], floor: f64, s: &mut Scratch) -> Vec<f64> {
    let (_, slack) = evaluate(problem, cond, s);
    if slack >= floor {
        return cond.to_vec();
    }
    let uniform = 1.0 / problem.width() as f64;
    let mix = |t: f64| -> Vec<f64> { cond.iter().map(|c| (1.0 - t) * c + t * uniform).collect() };
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if evaluate(problem, &mix(mid), s).1 >= floor {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    mix(hi)
}

/// Adam ascent on the penalized objective in softmax coordinates.
fn ascend(problem: &Problem, mut logits: Vec<f64>, config: &OptimizerConfig, s: &mut Scratch) -> Vec<f64> {
    let dim = logits.len();
    let (mut m, mut v) = (vec![0.0; dim], vec![0.0; dim]);
    let (beta1, beta2) = (0.9f64, 0.999f64);
    let mut step = 0;
    for (round, &lambda) in config.penalty_schedule.iter().enumerate() {
        let base = config.learning_rate * 0.3f64.powi(round as i32);
        for t in 1..=config.iterations {
            let grad = gradient(&logits, |z| penalized(problem, z, lambda, s));
            step += 1;
            // Step size decays by one decade over each round.
            let lr = base * 0.1f64.powf(t as f64 / config.iterations as f64);
            for i in 0..dim {
                m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
                let mh = m[i] / (1.0 - beta1.powi(step));
                let vh = v[i] / (1.0 - beta2.powi(step));
                logits[i] += lr * mh / (vh.sqrt() + 1e-12);
            }
        }
    }
    let mut cond = Vec::new();
    softmax_rows(&logits, problem.width(), &mut cond);
    cond
}

/// Central differences, one-sided where the objective is not finite.
fn gradient(x: &[f64], mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    const H: f64 = 1e-6;
    let mut z = x.to_vec();
    let f0 = f(x);
    (0..x.len())
        .map(|i| {
            z[i] = x[i] + H;
            let up = f(&z);
            z[i] = x[i] - H;
            let down = f(&z);
            z[i] = x[i];
            match (up.is_finite(), down.is_finite()) {
                (true, true) => (up - down) / (2.0 * H),
                (true, false) => (up - f0) / H,
                (false, true) => (f0 - down) / H,
                (false, false) => 0.0,
            }
        })
        .collect()
}

fn barrier(problem: &Problem, logits: &[f64], weight: f64, s: &mut Scratch) -> f64 {
    let mut cond = std::mem::take(&mut s.cond);
    softmax_rows(logits, problem.width(), &mut cond);
    let mut q = std::mem::take(&mut s.q);
    problem.joint(&cond, &mut q);
    let mut total = dot(&q, &problem.reward);
    for e in &problem.entropy {
        let slack = e.eval(&q, &mut s.buf);
        total += if slack > 0.0 { weight * slack.ln() } else { f64::NEG_INFINITY };
    }
    s.cond = cond;
    s.q = q;
    total
}

/// Log-barrier ascent from a strictly feasible table, with backtracking.
fn polish(problem: &Problem, cond: &[f64], s: &mut Scratch) -> Vec<f64> {
    let mut logits: Vec<f64> = cond.iter().map(|c| c.max(1e-300).ln()).collect();
    if problem.entropy.is_empty() || !barrier(problem, &logits, 1.0, s).is_finite() {
        return cond.to_vec();
    }
    let mut alpha = 1.0;
    for k in 2..=9 {
        let weight = 10f64.powi(-k);
        let mut f0 = barrier(problem, &logits, weight, s);
        for _ in 0..150 {
            let grad = gradient(&logits, |z| barrier(problem, z, weight, s));
            let norm2: f64 = grad.iter().map(|g| g * g).sum();
            if norm2 < 1e-24 {
                break;
            }
            alpha *= 2.0;
            let mut moved = false;
            while alpha > 1e-14 {
                let trial: Vec<f64> = logits.iter().zip(&grad).map(|(z, g)| z + alpha * g).collect();
                let f1 = barrier(problem, &trial, weight, s);
                if f1.is_finite() && f1 >= f0 + 1e-4 * alpha * norm2 {
                    logits = trial;
                    f0 = f1;
                    moved = true;
                    break;
                }
                alpha *= 0.5;
            }
            if !moved {
                break;
            }
        }
    }
    let mut out = Vec::new();
    softmax_rows(&logits, problem.width(), &mut out);
    out
}

/// Number of grid points on one simplex row (compositions of `r` into `m` parts).
fn compositions(r: usize, m: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    let mut cur = vec![0usize; m];
    fn rec(pos: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if pos + 1 == cur.len() {
            cur[pos] = left;
            out.push(cur.clone());
            return;
        }
        for k in 0..=left {
            cur[pos] = k;
            rec(pos + 1, left - k, cur, out);
        }
    }
    rec(0, r, &mut cur, &mut out);
    out
}

/// Best feasible grid point, scanning in lexicographic order.
fn grid_floor(problem: &Problem, resolution: usize, cap: usize) -> Option<(f64, Vec<f64>)> {
    let rows = compositions(resolution, problem.width());
    let total = (rows.len() as f64).powi(problem.nx as i32);
    if total > cap as f64 {
        return None;
    }
    let r = resolution as f64;
    let rows: Vec<Vec<f64>> = rows
        .into_iter()
        .map(|c| c.into_iter().map(|k| k as f64 / r).collect())
        .collect();
    let per_first = rows.len().pow(problem.nx as u32 - 1);
    let best = (0..rows.len())
        .into_par_iter()
        .map(|first| {
            let mut s = Scratch::new();
            let mut idx = vec![0usize; problem.nx];
            idx[0] = first;
            let radix = vec![rows.len(); problem.nx];
            let mut best: Option<(f64, Vec<f64>)> = None;
            let mut cond = Vec::with_capacity(problem.nx * problem.width());
            for _ in 0..per_first {
                cond.clear();
                for &i in &idx {
                    cond.extend_from_slice(&rows[i]);
                }
                let (value, slack) = evaluate(problem, &cond, &mut s);
                if slack >= -FEASIBILITY_TOL && best.as_ref().is_none_or(|(v, _)| value > *v) {
                    best = Some((value, cond.clone()));
                }
                advance(&mut idx[1..], &radix[1..]);
            }
            best
        })
        .collect::<Vec<_>>();
    best.into_iter()
        .flatten()
        .fold(None, |acc: Option<(f64, Vec<f64>)>, cand| match acc {
            Some(a) if a.0 >= cand.0 => Some(a),
            _ => Some(cand),
        })
}

fn better(a: &(f64, Vec<f64>), b: &(f64, Vec<f64>)) -> bool {
    // Ties within 1e-12 go to the lexicographically smaller parameter vector.
    if (a.0 - b.0).abs() > 1e-12 {
        return a.0 > b.0;
    }
    a.1.iter().zip(&b.1).find(|(x, y)| x != y).is_some_and(|(x, y)| x < y)
}

/// Maximizes `E π(X,A,B)` over `p(a,b|x)` in the requested coordination set.
pub fn maximize_reward(
    p0: &Pmf,
    reward: &RewardTable,
    constraint: Constraint,
    config: &OptimizerConfig,
) -> Result<OptimizationResult> {
    if config.restarts == 0 {
        return invalid("optimizer needs at least one restart");
    }
    if config.penalty_schedule.is_empty() || config.iterations == 0 {
        return invalid("optimizer needs a non-empty penalty schedule and iteration budget");
    }
    let problem = Problem::new(p0, reward, constraint)?;
    let dim = problem.nx * problem.width();

    let grid = config
        .grid_resolution
        .and_then(|r| grid_floor(&problem, r, config.grid_cap));

    let mut starts: Vec<Vec<f64>> = (0..config.restarts)
        .map(|r| {
            let mut rng = rng_for(config.seed, ROLE_RESTART, r as u64);
            (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect()
        })
        .collect();
    if let Some((_, cond)) = &grid {
        starts.push(cond.iter().map(|c| c.max(1e-6).ln()).collect());
    }

    let mut finals: Vec<(f64, Vec<f64>)> = starts
        .into_par_iter()
        .map(|logits| {
            let mut s = Scratch::new();
            let cond = ascend(&problem, logits, config, &mut s);
            let cond = repair(&problem, &cond, 1e-9, &mut s);
            let cond = polish(&problem, &cond, &mut s);
            let cond = repair(&problem, &cond, 0.0, &mut s);
            let mut q = Vec::new();
            problem.joint(&cond, &mut q);
            let rows = problem.rows_of(&q, &cond);
            (dot(&q, &problem.reward), rows)
        })
        .collect();
    if let Some((v, cond)) = grid {
        let mut q = Vec::new();
        problem.joint(&cond, &mut q);
        finals.push((v, problem.rows_of(&q, &cond)));
    }

    let mut best = finals[0].clone();
    for cand in &finals[1..] {
        if better(cand, &best) {
            best = cand.clone();
        }
    }
    let agreeing = finals.iter().filter(|(v, _)| (best.0 - v).abs() <= 1e-5).count();

    let axes = reward.axes();
    let rows: Vec<Vec<f64>> = best.1.chunks(problem.width()).map(<[f64]>::to_vec).collect();
    let argmax = ConditionalPmf::new(axes[0].clone(), vec![axes[1].clone(), axes[2].clone()], rows)?;
    let joint = JointPmf::from_source_and_conditional(p0, &argmax)?;
    let slack_at_argmax = constraint_margin(&joint, constraint)?;
    Ok(OptimizationResult {
        value: reward.expected(&joint)?,
        argmax,
        slack_at_argmax,
        restarts_used: config.restarts,
        converged: agreeing >= 2,
    })
}

/// Smallest margin of `constraint` at `joint`, through the coordination module.
pub fn constraint_margin(joint: &JointPmf, constraint: Constraint) -> Result<f64> {
    match constraint {
        Constraint::Theorem1 => slack_noncausal(joint),
        Constraint::Theorem2 => slack_causal(joint),
        Constraint::Cell(delays) => {
            let rule = cell_rule(delays)?;
            rule.conditions
                .iter()
                .map(|c| c.value(joint).map(|v| c.margin(v)))
                .try_fold(f64::INFINITY, |acc, m| m.map(|m| acc.min(m)))
        }
    }
}

/// The optimal average score when the second player sees only past actions.
pub fn game_value(p0: &Pmf, reward: &RewardTable) -> Result<OptimizationResult> {
    maximize_reward(p0, reward, Constraint::Theorem2, &OptimizerConfig::default())
}

/// Mixes `conditional` toward the uniform table until the constraint margin
/// reaches `min_slack`. Used to step a boundary optimum into the interior.
pub fn back_off(
    p0: &Pmf,
    conditional: &ConditionalPmf,
    constraint: Constraint,
    min_slack: f64,
) -> Result<ConditionalPmf> {
    let width = conditional.row(0).len();
    let uniform = 1.0 / width as f64;
    let mix = |t: f64| -> Result<ConditionalPmf> {
        let rows = conditional
            .rows()
            .iter()
            .map(|r| r.iter().map(|c| (1.0 - t) * c + t * uniform).collect())
            .collect();
        ConditionalPmf::new(conditional.from_alphabet().clone(), conditional.to_axes().to_vec(), rows)
    };
    let margin = |c: &ConditionalPmf| -> Result<f64> {
        constraint_margin(&JointPmf::from_source_and_conditional(p0, c)?, constraint)
    };
    if margin(conditional)? >= min_slack {
        return Ok(conditional.clone());
    }
    if margin(&mix(1.0)?)? < min_slack {
        return invalid(format!("no mixture reaches slack {min_slack}"));
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..64 {
        let mid = 0.5 * (lo + hi);
        if margin(&mix(mid)?)? >= min_slack {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    mix(hi)
}

/// Causality pattern of a finite-horizon encoder pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Regime {
    /// `A^n = f(X^n)`, `B^n = g(A^n)`.
    NonCausalBoth,
    /// `A^n = f(X^n)`, `B_i = g_i(A^{i-1})`.
    CausalBob,
    /// `A^n = f(X^n)`, `B_i = g_i(A^{i-1}, X^{i-1})`.
    CausalBobWithSourceFeedback,
}

impl Regime {
    /// The coordination set whose converse applies to this regime.
    pub fn matching_constraint(self) -> Constraint {
        match self {
            Regime::NonCausalBoth => Constraint::Theorem1,
            _ => Constraint::Theorem2,
        }
    }
}

/// Deterministic encoders for horizon `n`.
///
/// `alice[s]` lists `a^n` for the `s`-th source sequence (row-major over
/// `x_1..x_n`). `bob[i][o]` is `b_i` for observation `o`, where `o` indexes
/// `a^n` (non-causal), `a^{i-1}`, or the interleaved pairs `(a_t, x_t)` for `t < i`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncoderPair {
    pub alice: Vec<Vec<usize>>,
    pub bob: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OracleResult {
    pub n: usize,
    pub regime: Regime,
    pub best_value: f64,
    pub best_encoders: EncoderPair,
    pub expected_empirical: JointPmf,
    pub pairs_enumerated: u128,
}

/// Default ceiling on enumerated encoder pairs.
pub const DEFAULT_ORACLE_BUDGET: u128 = 50_000_000;

fn pow_u128(base: u128, exp: u128) -> Option<u128> {
    let mut acc: u128 = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base)?;
    }
    Some(acc)
}

struct Enumeration {
    n: usize,
    nx: usize,
    na: usize,
    nb: usize,
    regime: Regime,
    p_seq: Vec<f64>,
    /// `x^n` symbols per source-sequence index.
    x_seqs: Vec<Vec<usize>>,
    a_seqs: Vec<Vec<usize>>,
    obs_sizes: Vec<usize>,
    f_count: u128,
    g_count: u128,
}

impl Enumeration {
    fn new(p0: &Pmf, na: usize, nb: usize, n: usize, regime: Regime) -> Result<Self> {
        if n == 0 {
            return invalid("oracle horizon must be at least 1");
        }
        let nx = p0.alphabet().size();
        let seqs = |size: usize| -> Vec<Vec<usize>> {
            let total = size.pow(n as u32);
            let mut idx = vec![0; n];
            (0..total)
                .map(|_| {
                    let cur = idx.clone();
                    advance(&mut idx, &vec![size; n]);
                    cur
                })
                .collect()
        };
        let x_seqs = seqs(nx);
        let p_seq = x_seqs.iter().map(|s| s.iter().map(|&x| p0.prob(x)).product()).collect();
        let obs_sizes: Vec<usize> = (0..n)
            .map(|i| match regime {
                Regime::NonCausalBoth => na.pow(n as u32),
                Regime::CausalBob => na.pow(i as u32),
                Regime::CausalBobWithSourceFeedback => (na * nx).pow(i as u32),
            })
            .collect();
        let too_big = u128::MAX;
        let f_count = pow_u128(na.pow(n as u32) as u128, nx.pow(n as u32) as u128).unwrap_or(too_big);
        let g_count = pow_u128(nb as u128, obs_sizes.iter().sum::<usize>() as u128).unwrap_or(too_big);
        Ok(Enumeration {
            n,
            nx,
            na,
            nb,
            regime,
            p_seq,
            a_seqs: seqs(na),
            x_seqs,
            obs_sizes,
            f_count,
            g_count,
        })
    }

    fn total(&self) -> u128 {
        self.f_count.saturating_mul(self.g_count)
    }

    fn check_budget(&self, budget: u128) -> Result<()> {
        if self.total() > budget {
            return Err(CoordError::BudgetExceeded {
                count: self.total(),
                budget,
            });
        }
        Ok(())
    }

    fn observation(&self, i: usize, a: &[usize], x: &[usize]) -> usize {
        match self.regime {
            Regime::NonCausalBoth => a.iter().fold(0, |acc, &s| acc * self.na + s),
            Regime::CausalBob => a[..i].iter().fold(0, |acc, &s| acc * self.na + s),
            Regime::CausalBobWithSourceFeedback => (0..i).fold(0, |acc, t| {
                acc * self.na * self.nx + a[t] * self.nx + x[t]
            }),
        }
    }

    /// Alice's table for counter `f` (digits over source sequences, base `na^n`).
    fn alice(&self, f: u128) -> Vec<usize> {
        let base = self.a_seqs.len() as u128;
        let mut rest = f;
        let mut out = vec![0usize; self.x_seqs.len()];
        for slot in out.iter_mut().rev() {
            *slot = (rest % base) as usize;
            rest /= base;
        }
        out
    }

    fn bob(&self, g: u128) -> Vec<Vec<usize>> {
        let mut digits: Vec<usize> = vec![0; self.obs_sizes.iter().sum()];
        let mut rest = g;
        for d in digits.iter_mut().rev() {
            *d = (rest % self.nb as u128) as usize;
            rest /= self.nb as u128;
        }
        let mut out = Vec::with_capacity(self.n);
        let mut start = 0;
        for &size in &self.obs_sizes {
            out.push(digits[start..start + size].to_vec());
            start += size;
        }
        out
    }

    /// Exact expected empirical distribution, flat over `(x, a, b)`.
    fn expected(&self, alice: &[usize], bob: &[Vec<usize>], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        let inv_n = 1.0 / self.n as f64;
        for (s, xs) in self.x_seqs.iter().enumerate() {
            let a = &self.a_seqs[alice[s]];
            let w = self.p_seq[s] * inv_n;
            for i in 0..self.n {
                let b = bob[i][self.observation(i, a, xs)];
                out[(xs[i] * self.na + a[i]) * self.nb + b] += w;
            }
        }
    }

    fn pair(&self, f: u128, g: u128) -> EncoderPair {
        EncoderPair {
            alice: self.alice(f).iter().map(|&k| self.a_seqs[k].clone()).collect(),
            bob: self.bob(g),
        }
    }
}

fn reward_alphabets(p0: &Pmf, reward: &RewardTable) -> Result<(usize, usize)> {
    if p0.alphabet() != &reward.axes()[AXIS_X] {
        return invalid("source alphabet differs from the reward's X axis");
    }
    Ok((reward.axes()[AXIS_A].size(), reward.axes()[AXIS_B].size()))
}

/// Exhaustive search over deterministic encoder pairs of horizon `n`.
///
/// Pairs are visited with Alice's table as the outer base-`|A|^n` counter and
/// Bob's as the inner counter; the first maximizer is kept.
pub fn finite_n_oracle(
    p0: &Pmf,
    reward: &RewardTable,
    n: usize,
    regime: Regime,
    budget: u128,
) -> Result<OracleResult> {
    let (na, nb) = reward_alphabets(p0, reward)?;
    let en = Enumeration::new(p0, na, nb, n, regime)?;
    en.check_budget(budget)?;
    let cells = en.nx * na * nb;
    let per_f: Vec<(f64, u128)> = (0..en.f_count)
        .into_par_iter()
        .map(|f| {
            let alice = en.alice(f);
            let mut buf = vec![0.0; cells];
            let mut best = (f64::NEG_INFINITY, 0u128);
            for g in 0..en.g_count {
                en.expected(&alice, &en.bob(g), &mut buf);
                let v = dot(&buf, reward.values());
                if v > best.0 {
                    best = (v, g);
                }
            }
            best
        })
        .collect();
    let (mut best_f, mut best) = (0u128, per_f[0]);
    for (f, cand) in per_f.iter().enumerate().skip(1) {
        if cand.0 > best.0 {
            best = *cand;
            best_f = f as u128;
        }
    }
    let encoders = en.pair(best_f, best.1);
    let mut probs = vec![0.0; cells];
    en.expected(&en.alice(best_f), &encoders.bob, &mut probs);
    let expected_empirical = JointPmf::new(reward.axes().to_vec(), probs)?;
    Ok(OracleResult {
        n,
        regime,
        best_value: best.0,
        best_encoders: encoders,
        expected_empirical,
        pairs_enumerated: en.total(),
    })
}

/// Outcome of checking a converse inequality on every encoder pair.
#[derive(Debug, Clone, PartialEq)]
pub struct ConverseCertificate {
    pub regime: Regime,
    pub n: usize,
    pub pairs_checked: u128,
    /// Smallest slack of the matching theorem over all expected empirical joints.
    pub min_slack: f64,
    pub worst_pair: EncoderPair,
}

/// Evaluates the matching theorem's slack at the exact expected empirical
/// distribution of every deterministic encoder pair.
pub fn certify_converse(
    p0: &Pmf,
    a_alphabet: &Alphabet,
    b_alphabet: &Alphabet,
    n: usize,
    regime: Regime,
    budget: u128,
) -> Result<ConverseCertificate> {
    let en = Enumeration::new(p0, a_alphabet.size(), b_alphabet.size(), n, regime)?;
    en.check_budget(budget)?;
    let axes = vec![p0.alphabet().clone(), a_alphabet.clone(), b_alphabet.clone()];
    let cells = en.nx * en.na * en.nb;
    let per_f: Vec<Result<(f64, u128)>> = (0..en.f_count)
        .into_par_iter()
        .map(|f| {
            let alice = en.alice(f);
            let mut worst = (f64::INFINITY, 0u128);
            for g in 0..en.g_count {
                let mut probs = vec![0.0; cells];
                en.expected(&alice, &en.bob(g), &mut probs);
                let joint = JointPmf::new(axes.clone(), probs)?;
                let slack = constraint_margin(&joint, regime.matching_constraint())?;
                if slack < worst.0 {
                    worst = (slack, g);
                }
            }
            Ok(worst)
        })
        .collect();
    let mut worst = (f64::INFINITY, 0u128, 0u128);
    for (f, r) in per_f.into_iter().enumerate() {
        let (s, g) = r?;
        if s < worst.0 {
            worst = (s, f as u128, g);
        }
    }
    Ok(ConverseCertificate {
        regime,
        n,
        pairs_checked: en.total(),
        min_slack: worst.0,
        worst_pair: en.pair(worst.1, worst.2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn penny() -> RewardTable {
        let b = Alphabet::binary();
        RewardTable::from_fn(vec![b.clone(), b.clone(), b], |x, a, b| {
            if x == a && a == b {
                1.0
            } else {
                0.0
            }
        })
        .unwrap()
    }

    fn fair() -> Pmf {
        Pmf::bernoulli(0.5).unwrap()
    }

    fn quick() -> OptimizerConfig {
        OptimizerConfig {
            restarts: 24,
            ..OptimizerConfig::default()
        }
    }

    #[test]
    fn reward_table_validation() {
        let b = Alphabet::binary();
        assert!(RewardTable::new(vec![b.clone(), b.clone()], vec![0.0; 4]).is_err());
        assert!(RewardTable::new(vec![b.clone(), b.clone(), b.clone()], vec![0.0; 7]).is_err());
        assert!(RewardTable::new(vec![b.clone(), b.clone(), b], vec![f64::NAN; 8]).is_err());
        assert_eq!(penny().values().iter().filter(|&&v| v == 1.0).count(), 2);
    }

    #[test]
    fn zero_restarts_rejected() {
        let cfg = OptimizerConfig {
            restarts: 0,
            ..OptimizerConfig::default()
        };
        assert!(matches!(
            maximize_reward(&fair(), &penny(), Constraint::Theorem2, &cfg),
            Err(CoordError::InvalidArguments(_))
        ));
    }

    #[test]
    fn match_source_reward_reaches_one() {
        let b = Alphabet::binary();
        let r = RewardTable::from_fn(vec![b.clone(), b.clone(), b], |x, a, _| (x == a) as u8 as f64).unwrap();
        let res = maximize_reward(&fair(), &r, Constraint::Theorem2, &quick()).unwrap();
        assert_abs_diff_eq!(res.value, 1.0, epsilon = 1e-4);
        assert!(res.slack_at_argmax >= -1e-6);
    }

    #[test]
    fn bob_guessing_source_reaches_one() {
        // B = X with A uniform and independent: H(A|X,B) = 1 = I(X;B).
        let b = Alphabet::binary();
        let r = RewardTable::from_fn(vec![b.clone(), b.clone(), b], |x, _, b| (x == b) as u8 as f64).unwrap();
        let res = maximize_reward(&fair(), &r, Constraint::Theorem2, &quick()).unwrap();
        assert_abs_diff_eq!(res.value, 1.0, epsilon = 1e-3);
        assert!(res.slack_at_argmax >= -1e-6);
    }

    #[test]
    fn constant_and_agreement_rewards() {
        let b = Alphabet::binary();
        let c = RewardTable::from_fn(vec![b.clone(), b.clone(), b.clone()], |_, _, _| 0.37).unwrap();
        assert_abs_diff_eq!(game_value(&fair(), &c).unwrap().value, 0.37, epsilon = 1e-12);
        let agree = RewardTable::from_fn(vec![b.clone(), b.clone(), b], |_, a, b| (a == b) as u8 as f64).unwrap();
        assert_abs_diff_eq!(
            maximize_reward(&fair(), &agree, Constraint::Theorem2, &quick()).unwrap().value,
            1.0,
            epsilon = 1e-4
        );
    }

    #[test]
    fn auxiliary_cells_are_rejected() {
        let d = DelaySpec::new(crate::coordination::Delay::NonCausal, crate::coordination::Delay::Zero).unwrap();
        assert!(maximize_reward(&fair(), &penny(), Constraint::Cell(d), &quick()).is_err());
    }

    #[test]
    fn structural_cells_respect_structure() {
        use crate::coordination::{check_independence, check_markov_chain, Delay};
        let p0 = Pmf::bernoulli(0.3).unwrap();
        let cfg = OptimizerConfig {
            restarts: 8,
            iterations: 150,
            ..OptimizerConfig::default()
        };
        let never_b = DelaySpec::new(Delay::NonCausal, Delay::NeverObserves).unwrap();
        let res = maximize_reward(&p0, &penny(), Constraint::Cell(never_b), &cfg).unwrap();
        let j = JointPmf::from_source_and_conditional(&p0, &res.argmax).unwrap();
        assert!(check_independence(&j, &[0], &[2]).unwrap().holds);
        // B fixed at the likelier source symbol, A copies X.
        assert_abs_diff_eq!(res.value, 0.7, epsilon = 1e-4);

        let zz = DelaySpec::new(Delay::Zero, Delay::Zero).unwrap();
        let res = maximize_reward(&p0, &penny(), Constraint::Cell(zz), &cfg).unwrap();
        let j = JointPmf::from_source_and_conditional(&p0, &res.argmax).unwrap();
        assert!(check_markov_chain(&j, &[0], &[1], &[2]).unwrap().holds);
        // A = X, B = A satisfies X - A - B.
        assert_abs_diff_eq!(res.value, 1.0, epsilon = 1e-4);

        let blind = DelaySpec::new(Delay::Positive(2), Delay::Zero).unwrap();
        let res = maximize_reward(&p0, &penny(), Constraint::Cell(blind), &cfg).unwrap();
        assert_abs_diff_eq!(res.value, 0.7, epsilon = 1e-4);
    }

    /// Root of `h(w) + (1 - w) log2 3 = 1`: the boundary of the symmetric family
    /// where B is uniform and, given B = b, X = A = b with probability w.
    fn penny_root() -> f64 {
        let f = |w: f64| -(w * w.log2() + (1.0 - w) * (1.0 - w).log2()) + (1.0 - w) * 3f64.log2() - 1.0;
        let (mut lo, mut hi) = (0.5, 1.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if f(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    }

    #[test]
    fn penny_game_value_matches_closed_form() {
        let w = penny_root();
        assert_abs_diff_eq!(w, 0.8107103750847635, epsilon = 1e-12);
        let res = game_value(&fair(), &penny()).unwrap();
        assert_abs_diff_eq!(res.value, w, epsilon = 1e-5);
        assert!(res.value <= w + 1e-9);
        assert!(res.slack_at_argmax >= -FEASIBILITY_TOL);
        assert!(res.converged);
        let j = JointPmf::from_source_and_conditional(&fair(), &res.argmax).unwrap();
        assert_abs_diff_eq!(penny().expected(&j).unwrap(), res.value, epsilon = 1e-12);
    }

    #[test]
    fn oracle_penny_values() {
        let r1 = finite_n_oracle(&fair(), &penny(), 1, Regime::CausalBob, DEFAULT_ORACLE_BUDGET).unwrap();
        assert_abs_diff_eq!(r1.best_value, 0.5, epsilon = 1e-15);
        let r2 = finite_n_oracle(&fair(), &penny(), 2, Regime::CausalBob, DEFAULT_ORACLE_BUDGET).unwrap();
        assert_abs_diff_eq!(r2.best_value, 0.625, epsilon = 1e-15);
        assert_eq!(r2.pairs_enumerated, 256 * 8);
        assert_abs_diff_eq!(
            penny().expected(&r2.expected_empirical).unwrap(),
            r2.best_value,
            epsilon = 1e-15
        );
    }

    #[test]
    fn oracle_n1_noncausal_matches_direct_formula() {
        let b = Alphabet::binary();
        let r = RewardTable::new(vec![b.clone(), b.clone(), b], vec![0.3, 0.9, 0.1, 0.4, 0.8, 0.2, 0.6, 0.5]).unwrap();
        let p0 = Pmf::bernoulli(0.35).unwrap();
        let res = finite_n_oracle(&p0, &r, 1, Regime::NonCausalBoth, DEFAULT_ORACLE_BUDGET).unwrap();
        let mut direct = f64::NEG_INFINITY;
        for f in 0..4usize {
            for g in 0..4usize {
                let fa = |x: usize| (f >> x) & 1;
                let gb = |a: usize| (g >> a) & 1;
                let v: f64 = (0..2).map(|x| p0.prob(x) * r.value(x, fa(x), gb(fa(x)))).sum();
                direct = direct.max(v);
            }
        }
        assert_abs_diff_eq!(res.best_value, direct, epsilon = 1e-15);
    }

    #[test]
    fn oracle_budget_exceeded() {
        let err = finite_n_oracle(&fair(), &penny(), 3, Regime::CausalBob, 1_000_000).unwrap_err();
        match err {
            CoordError::BudgetExceeded { count, budget } => {
                assert_eq!(budget, 1_000_000);
                assert_eq!(count, 16_777_216u128 * 128);
            }
            e => panic!("unexpected {e:?}"),
        }
    }

    #[test]
    fn back_off_reaches_requested_slack() {
        let c = ConditionalPmf::new(
            Alphabet::binary(),
            vec![Alphabet::binary(), Alphabet::binary()],
            vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0, 0.0, 0.0, 1.0]],
        )
        .unwrap();
        let out = back_off(&fair(), &c, Constraint::Theorem2, 0.1).unwrap();
        let j = JointPmf::from_source_and_conditional(&fair(), &out).unwrap();
        let s = slack_causal(&j).unwrap();
        assert!((0.1..0.1 + 1e-9).contains(&s));
    }
}
