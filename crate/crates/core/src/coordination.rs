//! Coordination-set membership for every delay regime.
//!
//! Controller 1 emits `A_i = f_i(X^{i-d1})` and controller 2 emits
//! `B_i = g_i(A^{i-d2})`. Each `(d1, d2)` cell of the delay table has its own
//! characterization: an entropy inequality, an independence or Markov
//! requirement, or (for two cells) the existence of an auxiliary variable `U`.
//! Boundary points count as feasible: a condition holds when its margin is at
//! least `-FEASIBILITY_TOL`.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{invalid, Result};
use crate::probability::{
    advance, conditional_entropy, mutual_information, Alphabet, JointPmf, ProbabilityTable,
};
use crate::rng::{rng_for, ROLE_USEARCH};
use crate::target::{AXIS_A, AXIS_B, AXIS_X};

pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Axis of the auxiliary variable in an extended `(X, A, B, U)` joint.
pub const AXIS_U: usize = 3;

/// Delay of one controller. `NonCausal` is the table's `-∞`, `NeverObserves` its `∞`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Delay {
    NonCausal,
    Zero,
    Positive(u32),
    NeverObserves,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum DelayClass {
    NonCausal,
    Zero,
    Positive,
    Never,
}

impl Delay {
    fn class(self) -> Result<DelayClass> {
        Ok(match self {
            Delay::NonCausal => DelayClass::NonCausal,
            Delay::Zero => DelayClass::Zero,
            Delay::Positive(0) => return invalid("positive delay must be at least 1"),
            Delay::Positive(_) => DelayClass::Positive,
            Delay::NeverObserves => DelayClass::Never,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct DelaySpec {
    pub d1: Delay,
    pub d2: Delay,
}

impl DelaySpec {
    pub fn new(d1: Delay, d2: Delay) -> Result<Self> {
        let spec = DelaySpec { d1, d2 };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        self.d1.class()?;
        self.d2.class()?;
        Ok(())
    }

    /// Both controllers non-causal.
    pub fn noncausal() -> Self {
        DelaySpec {
            d1: Delay::NonCausal,
            d2: Delay::NonCausal,
        }
    }

    /// Non-causal first controller, strictly causal second controller.
    pub fn strictly_causal_second() -> Self {
        DelaySpec {
            d1: Delay::NonCausal,
            d2: Delay::Positive(1),
        }
    }
}

/// Entropy inequalities appearing in the delay table, as signed margins in bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntropyCondition {
    /// `H(A) - I(X;A,B)`
    NonCausal,
    /// `H(A|X,B) - I(X;B)`
    Causal,
    /// `H(A) - I(X;A,B) - I(A;B)`
    NonCausalStrict,
    /// `H(A) - I(X;A,U) - I(A;U)` on an extended joint.
    AuxMarkov,
    /// `H(A) - I(X;A,B|U)` on an extended joint.
    AuxConditional,
}

impl EntropyCondition {
    pub fn name(self) -> &'static str {
        match self {
            EntropyCondition::NonCausal => "H(A) - I(X;A,B)",
            EntropyCondition::Causal => "H(A|X,B) - I(X;B)",
            EntropyCondition::NonCausalStrict => "H(A) - I(X;A,B) - I(A;B)",
            EntropyCondition::AuxMarkov => "H(A) - I(X;A,U) - I(A;U)",
            EntropyCondition::AuxConditional => "H(A) - I(X;A,B|U)",
        }
    }

    /// Evaluates the margin through the conditional-entropy and mutual-information routines.
    pub fn evaluate(self, joint: &JointPmf) -> Result<f64> {
        let (x, a, b, u) = (AXIS_X, AXIS_A, AXIS_B, AXIS_U);
        let h_a = || joint.marginal_entropy(&[a]);
        Ok(match self {
            EntropyCondition::NonCausal => h_a()? - mutual_information(joint, &[x], &[a, b], &[])?,
            EntropyCondition::Causal => {
                conditional_entropy(joint, &[a], &[x, b])?
                    - mutual_information(joint, &[x], &[b], &[])?
            }
            EntropyCondition::NonCausalStrict => {
                h_a()?
                    - mutual_information(joint, &[x], &[a, b], &[])?
                    - mutual_information(joint, &[a], &[b], &[])?
            }
            EntropyCondition::AuxMarkov => {
                h_a()?
                    - mutual_information(joint, &[x], &[a, u], &[])?
                    - mutual_information(joint, &[a], &[u], &[])?
            }
            EntropyCondition::AuxConditional => {
                h_a()? - mutual_information(joint, &[x], &[a, b], &[u])?
            }
        })
    }

    /// The same margin as a signed sum of marginal entropies `Σ c·H(axes)`.
    pub fn entropy_terms(self) -> Vec<(f64, Vec<usize>)> {
        let (x, a, b, u) = (AXIS_X, AXIS_A, AXIS_B, AXIS_U);
        match self {
            EntropyCondition::NonCausal => vec![
                (1.0, vec![a]),
                (-1.0, vec![x]),
                (-1.0, vec![a, b]),
                (1.0, vec![x, a, b]),
            ],
            EntropyCondition::Causal | EntropyCondition::NonCausalStrict => {
                vec![(1.0, vec![x, a, b]), (-1.0, vec![x]), (-1.0, vec![b])]
            }
            EntropyCondition::AuxMarkov => {
                vec![(-1.0, vec![x]), (1.0, vec![x, a, u]), (-1.0, vec![u])]
            }
            EntropyCondition::AuxConditional => vec![
                (1.0, vec![a]),
                (-1.0, vec![x, u]),
                (-1.0, vec![a, b, u]),
                (1.0, vec![x, a, b, u]),
                (1.0, vec![u]),
            ],
        }
    }
}

/// One requirement of a delay-table cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Condition {
    /// Margin must be non-negative.
    Entropy(EntropyCondition),
    /// `I(left; right) = 0`.
    Independent { left: Vec<usize>, right: Vec<usize> },
    /// `left - mid - right`, i.e. `I(left; right | mid) = 0`.
    Markov {
        left: Vec<usize>,
        mid: Vec<usize>,
        right: Vec<usize>,
    },
    /// `H(target | given) = 0`.
    Deterministic { target: Vec<usize>, given: Vec<usize> },
}

fn axis_names(axes: &[usize]) -> String {
    axes.iter()
        .map(|&i| ["X", "A", "B", "U"].get(i).copied().unwrap_or("?"))
        .collect::<Vec<_>>()
        .join(",")
}

impl Condition {
    fn independent(left: &[usize], right: &[usize]) -> Self {
        Condition::Independent {
            left: left.to_vec(),
            right: right.to_vec(),
        }
    }

    pub fn name(&self) -> String {
        match self {
            Condition::Entropy(e) => e.name().to_string(),
            Condition::Independent { left, right } => {
                format!("I({};{})", axis_names(left), axis_names(right))
            }
            Condition::Markov { left, mid, right } => format!(
                "I({};{}|{})",
                axis_names(left),
                axis_names(right),
                axis_names(mid)
            ),
            Condition::Deterministic { target, given } => {
                format!("H({}|{})", axis_names(target), axis_names(given))
            }
        }
    }

    /// Raw value: the entropy margin, or the deviation for structural conditions.
    pub fn value(&self, joint: &JointPmf) -> Result<f64> {
        match self {
            Condition::Entropy(e) => e.evaluate(joint),
            Condition::Independent { left, right } => mutual_information(joint, left, right, &[]),
            Condition::Markov { left, mid, right } => mutual_information(joint, left, right, mid),
            Condition::Deterministic { target, given } => conditional_entropy(joint, target, given),
        }
    }

    /// Signed margin: non-negative when the condition holds exactly.
    pub fn margin(&self, value: f64) -> f64 {
        match self {
            Condition::Entropy(_) => value,
            _ => -value,
        }
    }

    pub fn uses_auxiliary(&self) -> bool {
        let has_u = |axes: &[usize]| axes.contains(&AXIS_U);
        match self {
            Condition::Entropy(e) => {
                matches!(e, EntropyCondition::AuxMarkov | EntropyCondition::AuxConditional)
            }
            Condition::Independent { left, right } => has_u(left) || has_u(right),
            Condition::Markov { left, mid, right } => has_u(left) || has_u(mid) || has_u(right),
            Condition::Deterministic { target, given } => has_u(target) || has_u(given),
        }
    }
}

/// The characterization of one delay-table cell.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellRule {
    pub conditions: Vec<Condition>,
    /// Conditions quantify over an auxiliary `U` (extended joint on axes X, A, B, U).
    pub auxiliary: bool,
}

/// Looks up the conditions of cell `(d1, d2)`.
pub fn cell_rule(delays: DelaySpec) -> Result<CellRule> {
    use DelayClass::*;
    let (x, a, b, u) = (AXIS_X, AXIS_A, AXIS_B, AXIS_U);
    let x_indep_ab = || vec![Condition::independent(&[x], &[a, b])];
    let x_indep_b = || vec![Condition::independent(&[x], &[b])];
    let rule = |conditions: Vec<Condition>| CellRule {
        auxiliary: conditions.iter().any(Condition::uses_auxiliary),
        conditions,
    };
    Ok(match (delays.d1.class()?, delays.d2.class()?) {
        (NonCausal, NonCausal) => rule(vec![Condition::Entropy(EntropyCondition::NonCausal)]),
        (NonCausal, Zero) => rule(vec![
            Condition::Markov {
                left: vec![x],
                mid: vec![a, u],
                right: vec![b],
            },
            Condition::Entropy(EntropyCondition::AuxMarkov),
        ]),
        (NonCausal, Positive) => {
            rule(vec![Condition::Entropy(EntropyCondition::NonCausalStrict)])
        }
        (NonCausal, Never) => rule(x_indep_b()),
        (Zero, NonCausal) => rule(vec![
            Condition::independent(&[x], &[u]),
            Condition::Deterministic {
                target: vec![a],
                given: vec![x, u],
            },
            Condition::Entropy(EntropyCondition::AuxConditional),
        ]),
        (Zero, Zero) => rule(vec![Condition::Markov {
            left: vec![x],
            mid: vec![a],
            right: vec![b],
        }]),
        (Zero, Positive) | (Zero, Never) => rule(x_indep_b()),
        (Positive, NonCausal) => rule(vec![
            Condition::independent(&[x], &[a]),
            Condition::Entropy(EntropyCondition::NonCausal),
        ]),
        (Positive, _) | (Never, _) => rule(x_indep_ab()),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeasibilityStatus {
    Feasible,
    Infeasible,
    /// Only for auxiliary-variable cells: no witness within the search bound.
    UnknownWithinSearchBound,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckedCondition {
    pub name: String,
    pub value: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeasibilityVerdict {
    pub status: FeasibilityStatus,
    /// Smallest signed margin over the checked conditions.
    pub slack: Option<f64>,
    /// Extended `(X, A, B, U)` joint certifying an auxiliary-variable cell.
    pub witness: Option<JointPmf>,
    pub checked_conditions: Vec<CheckedCondition>,
}

/// Bounds for the auxiliary-variable search.
#[derive(Debug, Clone, PartialEq)]
pub struct UBoundConfig {
    /// Largest `|U|` tried; sizes run from 1 upward.
    pub max_u: usize,
    /// Kernel entries are snapped to multiples of `1/grid_resolution` after hill climbing.
    pub grid_resolution: usize,
    pub restarts: usize,
    pub iterations: usize,
    pub seed: u64,
}

impl Default for UBoundConfig {
    fn default() -> Self {
        UBoundConfig {
            max_u: 4,
            grid_resolution: 20,
            restarts: 8,
            iterations: 400,
            seed: 0,
        }
    }
}

fn check_joint_xab(joint: &JointPmf) -> Result<()> {
    if joint.num_axes() != 3 {
        return invalid(format!(
            "expected a joint over (X, A, B), got {} axes",
            joint.num_axes()
        ));
    }
    Ok(())
}

/// `H(A) - I(X;A,B)`; non-negative iff the target is achievable with non-causal controllers.
pub fn slack_noncausal(joint: &JointPmf) -> Result<f64> {
    check_joint_xab(joint)?;
    EntropyCondition::NonCausal.evaluate(joint)
}

/// `H(A|X,B) - I(X;B)`; non-negative iff achievable when controller 2 is strictly causal.
pub fn slack_causal(joint: &JointPmf) -> Result<f64> {
    check_joint_xab(joint)?;
    EntropyCondition::Causal.evaluate(joint)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionCheck {
    pub holds: bool,
    pub deviation: f64,
}

/// Tests `left - mid - right` through `I(left; right | mid)`.
pub fn check_markov_chain(
    joint: &JointPmf,
    left: &[usize],
    mid: &[usize],
    right: &[usize],
) -> Result<ConditionCheck> {
    let deviation = mutual_information(joint, left, right, mid)?;
    Ok(ConditionCheck {
        holds: deviation <= FEASIBILITY_TOL,
        deviation,
    })
}

/// Tests `axes1 ⊥ axes2` through `I(axes1; axes2)`.
pub fn check_independence(joint: &JointPmf, axes1: &[usize], axes2: &[usize]) -> Result<ConditionCheck> {
    let deviation = mutual_information(joint, axes1, axes2, &[])?;
    Ok(ConditionCheck {
        holds: deviation <= FEASIBILITY_TOL,
        deviation,
    })
}

fn evaluate_conditions(
    conditions: &[Condition],
    joint: &JointPmf,
) -> Result<(Vec<CheckedCondition>, f64)> {
    let mut checked = Vec::with_capacity(conditions.len());
    let mut worst = f64::INFINITY;
    for c in conditions {
        let value = c.value(joint)?;
        let margin = c.margin(value);
        worst = worst.min(margin);
        checked.push(CheckedCondition {
            name: c.name(),
            value,
            holds: margin >= -FEASIBILITY_TOL,
        });
    }
    Ok((checked, worst))
}

/// Evaluates cell `delays` of the delay table on a `(X, A, B)` joint.
///
/// Cells without an auxiliary variable are decided exactly. For the two
/// auxiliary cells a bounded search over `U` returns a witness when it finds
/// one and `UnknownWithinSearchBound` otherwise; such cells are never
/// declared infeasible.
pub fn feasible_cell(
    joint: &JointPmf,
    delays: DelaySpec,
    search: &UBoundConfig,
) -> Result<FeasibilityVerdict> {
    check_joint_xab(joint)?;
    let rule = cell_rule(delays)?;
    if !rule.auxiliary {
        let (checked, worst) = evaluate_conditions(&rule.conditions, joint)?;
        let status = if worst >= -FEASIBILITY_TOL {
            FeasibilityStatus::Feasible
        } else {
            FeasibilityStatus::Infeasible
        };
        return Ok(FeasibilityVerdict {
            status,
            slack: Some(worst),
            witness: None,
            checked_conditions: checked,
        });
    }
    if search.max_u == 0 {
        return invalid("auxiliary search needs max_u >= 1");
    }
    match search_auxiliary(joint, &rule, search)? {
        Some(witness) => {
            let (checked, worst) = evaluate_conditions(&rule.conditions, &witness)?;
            Ok(FeasibilityVerdict {
                status: FeasibilityStatus::Feasible,
                slack: Some(worst),
                witness: Some(witness),
                checked_conditions: checked,
            })
        }
        None => Ok(FeasibilityVerdict {
            status: FeasibilityStatus::UnknownWithinSearchBound,
            slack: None,
            witness: None,
            checked_conditions: Vec::new(),
        }),
    }
}

/// Extended joint `p(x,a,b) · w(u | x,a,b)`; `kernel` rows follow the flat `(x,a,b)` order.
fn extend(joint: &JointPmf, kernel: &[f64], u_size: usize) -> JointPmf {
    let mut axes = joint.axes().to_vec();
    axes.push(Alphabet::indexed(u_size).expect("u_size >= 1"));
    let probs = joint
        .probs()
        .iter()
        .enumerate()
        .flat_map(|(cell, &p)| kernel[cell * u_size..(cell + 1) * u_size].iter().map(move |w| p * w))
        .collect();
    JointPmf::from_parts_unchecked(axes, probs)
}

fn witness_if_feasible(rule: &CellRule, joint: &JointPmf, kernel: &[f64], u_size: usize) -> Option<JointPmf> {
    let ext = extend(joint, kernel, u_size);
    match evaluate_conditions(&rule.conditions, &ext) {
        Ok((_, worst)) if worst >= -FEASIBILITY_TOL => Some(ext),
        _ => None,
    }
}

/// Penalty driven to zero by the hill climber: total violation over all conditions.
fn violation(rule: &CellRule, ext: &JointPmf) -> f64 {
    rule.conditions
        .iter()
        .map(|c| c.value(ext).map(|v| (-c.margin(v)).max(0.0)).unwrap_or(f64::INFINITY))
        .sum()
}

/// Deterministic kernels `u = g(cell)` where `g` depends only on the listed axes.
fn deterministic_kernels(shape: &[usize], inputs: &[usize], u_size: usize, cap: usize) -> Vec<Vec<f64>> {
    let input_count: usize = inputs.iter().map(|&i| shape[i]).product();
    let total = (u_size as f64).powi(input_count as i32);
    if total > cap as f64 {
        return Vec::new();
    }
    let cells: usize = shape.iter().product();
    let mut out = Vec::new();
    let mut map = vec![0usize; input_count];
    let radix = vec![u_size; input_count];
    for _ in 0..total as usize {
        let mut kernel = vec![0.0; cells * u_size];
        let mut idx = vec![0usize; shape.len()];
        for cell in 0..cells {
            let key = inputs.iter().fold(0, |acc, &i| acc * shape[i] + idx[i]);
            kernel[cell * u_size + map[key]] = 1.0;
            advance(&mut idx, shape);
        }
        out.push(kernel);
        advance(&mut map, &radix);
    }
    out
}

/// Kernels realizing `U` as a random strategy `f: X -> A` independent of `X`,
/// with `A = f(X)` and `B` drawn from `p(b | x, a)`.
fn strategy_kernels(joint: &JointPmf, u_size: usize) -> Vec<Vec<f64>> {
    let shape = joint.shape().to_vec();
    let (nx, na, nb) = (shape[0], shape[1], shape[2]);
    let px: Vec<f64> = (0..nx)
        .map(|x| (0..na * nb).map(|r| joint.probs()[x * na * nb + r]).sum())
        .collect();
    let a_given_x: Vec<Vec<f64>> = (0..nx)
        .map(|x| {
            (0..na)
                .map(|a| {
                    if px[x] > 0.0 {
                        (0..nb).map(|b| joint.prob(&[x, a, b])).sum::<f64>() / px[x]
                    } else {
                        1.0 / na as f64
                    }
                })
                .collect()
        })
        .collect();

    let mut couplings: Vec<Vec<(Vec<usize>, f64)>> = Vec::new();

    // Product coupling over all strategies.
    let mut product = Vec::new();
    let mut f = vec![0usize; nx];
    let radix = vec![na; nx];
    for _ in 0..na.pow(nx as u32) {
        let w: f64 = (0..nx).map(|x| a_given_x[x][f[x]]).product();
        if w > 0.0 {
            product.push((f.clone(), w));
        }
        advance(&mut f, &radix);
    }
    couplings.push(product);

    // Quantile coupling driven by one shared uniform variable.
    let mut cuts: Vec<f64> = a_given_x
        .iter()
        .flat_map(|row| {
            row.iter()
                .scan(0.0, |acc, p| {
                    *acc += p;
                    Some(*acc)
                })
                .collect::<Vec<_>>()
        })
        .filter(|c| *c > 0.0 && *c < 1.0)
        .collect();
    cuts.push(0.0);
    cuts.push(1.0);
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    cuts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    let mut quantile: Vec<(Vec<usize>, f64)> = Vec::new();
    for w in cuts.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let mid = 0.5 * (lo + hi);
        let strat: Vec<usize> = a_given_x
            .iter()
            .map(|row| {
                let mut acc = 0.0;
                row.iter()
                    .position(|p| {
                        acc += p;
                        mid < acc
                    })
                    .unwrap_or(na - 1)
            })
            .collect();
        match quantile.iter_mut().find(|(s, _)| *s == strat) {
            Some(entry) => entry.1 += hi - lo,
            None => quantile.push((strat, hi - lo)),
        }
    }
    couplings.push(quantile);

    let mut kernels = Vec::new();
    for coupling in couplings {
        if coupling.len() > u_size {
            continue;
        }
        // w(u | x, a, b) ∝ q(u) 1{f_u(x) = a}; B given (x, a) is untouched.
        let mut kernel = vec![0.0; nx * na * nb * u_size];
        for x in 0..nx {
            for a in 0..na {
                let mass: f64 = coupling
                    .iter()
                    .filter(|(s, _)| s[x] == a)
                    .map(|(_, w)| w)
                    .sum();
                for b in 0..nb {
                    let cell = (x * na + a) * nb + b;
                    for (u, (s, w)) in coupling.iter().enumerate() {
                        kernel[cell * u_size + u] = if mass > 0.0 && s[x] == a {
                            w / mass
                        } else if mass > 0.0 {
                            0.0
                        } else {
                            1.0 / u_size as f64
                        };
                    }
                }
            }
        }
        kernels.push(kernel);
    }
    kernels
}

fn snap(kernel: &[f64], u_size: usize, resolution: usize) -> Vec<f64> {
    let r = resolution.max(1) as f64;
    kernel
        .chunks(u_size)
        .flat_map(|row| {
            let mut snapped: Vec<f64> = row.iter().map(|w| (w * r).round() / r).collect();
            let total: f64 = snapped.iter().sum();
            if total <= 0.0 {
                snapped = row.to_vec();
            } else {
                snapped.iter_mut().for_each(|w| *w /= total);
            }
            snapped
        })
        .collect()
}

fn hill_climb(
    rule: &CellRule,
    joint: &JointPmf,
    u_size: usize,
    search: &UBoundConfig,
    restart: usize,
) -> Option<JointPmf> {
    let mut rng = rng_for(search.seed, ROLE_USEARCH, (u_size * 1_000_003 + restart) as u64);
    let rows = joint.probs().len();
    let mut kernel: Vec<f64> = (0..rows * u_size).map(|_| rng.gen::<f64>() + 1e-3).collect();
    for row in kernel.chunks_mut(u_size) {
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|w| *w /= s);
    }
    let mut best = violation(rule, &extend(joint, &kernel, u_size));
    let mut step = 0.5;
    for _ in 0..search.iterations {
        if best <= FEASIBILITY_TOL {
            break;
        }
        let row = rng.gen_range(0..rows);
        let mut candidate = kernel.clone();
        let slice = &mut candidate[row * u_size..(row + 1) * u_size];
        for w in slice.iter_mut() {
            *w = (*w + step * (rng.gen::<f64>() - 0.5)).max(0.0);
        }
        let s: f64 = slice.iter().sum();
        if s <= 0.0 {
            continue;
        }
        slice.iter_mut().for_each(|w| *w /= s);
        let v = violation(rule, &extend(joint, &candidate, u_size));
        if v < best {
            best = v;
            kernel = candidate;
        } else {
            step = (step * 0.995).max(1e-4);
        }
    }
    witness_if_feasible(rule, joint, &kernel, u_size)
        .or_else(|| witness_if_feasible(rule, joint, &snap(&kernel, u_size, search.grid_resolution), u_size))
}

/// Structured candidates first (deterministic `U` maps and strategy couplings),
/// then random-restart hill climbing over `w(u | x, a, b)`.
fn search_auxiliary(joint: &JointPmf, rule: &CellRule, search: &UBoundConfig) -> Result<Option<JointPmf>> {
    const GRID_CAP: usize = 4096;
    let shape = joint.shape().to_vec();
    for u_size in 1..=search.max_u {
        let mut candidates = Vec::new();
        candidates.extend(deterministic_kernels(&shape, &[AXIS_A, AXIS_B], u_size, GRID_CAP));
        candidates.extend(deterministic_kernels(&shape, &[AXIS_B], u_size, GRID_CAP));
        candidates.extend(strategy_kernels(joint, u_size));
        if let Some(w) = candidates
            .iter()
            .find_map(|k| witness_if_feasible(rule, joint, k, u_size))
        {
            return Ok(Some(w));
        }
        let found: Vec<Option<JointPmf>> = (0..search.restarts)
            .into_par_iter()
            .map(|r| hill_climb(rule, joint, u_size, search, r))
            .collect();
        if let Some(w) = found.into_iter().flatten().next() {
            return Ok(Some(w));
        }
    }
    Ok(None)
}
