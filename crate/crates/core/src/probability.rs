//! Finite-alphabet probability tables and information measures.
//!
//! Everything is measured in bits. Tables are dense and row-major (the last
//! axis varies fastest); symbols are addressed by their index in the owning
//! [`Alphabet`].

use crate::error::{invalid, CoordError, Result};

/// Tolerance on the total mass of a probability vector.
pub const SUM_TOL: f64 = 1e-12;

/// An ordered set of distinct symbol labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Alphabet {
    symbols: Vec<String>,
}

impl Alphabet {
    pub fn new<I, S>(symbols: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let symbols: Vec<String> = symbols.into_iter().map(Into::into).collect();
        if symbols.is_empty() {
            return invalid("alphabet must contain at least one symbol");
        }
        for (i, s) in symbols.iter().enumerate() {
            if symbols[..i].contains(s) {
                return invalid(format!("duplicate symbol {s:?} in alphabet"));
            }
        }
        Ok(Alphabet { symbols })
    }

    /// Alphabet labelled `"0"`, `"1"`, ..., `size-1`.
    pub fn indexed(size: usize) -> Result<Self> {
        Self::new((0..size).map(|i| i.to_string()))
    }

    pub fn binary() -> Self {
        Alphabet {
            symbols: vec!["0".into(), "1".into()],
        }
    }

    pub fn size(&self) -> usize {
        self.symbols.len()
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn index_of(&self, symbol: &str) -> Option<usize> {
        self.symbols.iter().position(|s| s == symbol)
    }
}

/// Read access to the flat probability vector of a table.
pub trait ProbabilityTable {
    fn probs(&self) -> &[f64];

    /// Shannon entropy in bits.
    fn entropy(&self) -> f64 {
        entropy_bits(self.probs())
    }
}

/// `-Σ p log2 p` with `0 log 0 = 0`.
pub fn entropy_bits(probs: &[f64]) -> f64 {
    let h: f64 = probs
        .iter()
        .filter(|&&p| p > 0.0)
        .map(|&p| -p * p.log2())
        .sum();
    h.max(0.0)
}

/// Entropy of any table, in bits.
pub fn entropy(p: &impl ProbabilityTable) -> f64 {
    p.entropy()
}

/// Validates a probability vector and renormalizes it if the mass is within
/// [`SUM_TOL`] of one.
pub(crate) fn validated_probs(probs: Vec<f64>, what: &str) -> Result<Vec<f64>> {
    if let Some(p) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
        return Err(CoordError::InvalidDistribution(format!(
            "{what}: entry {p} is negative or not finite"
        )));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > SUM_TOL {
        return Err(CoordError::InvalidDistribution(format!(
            "{what}: entries sum to {total}, expected 1"
        )));
    }
    Ok(probs.into_iter().map(|p| p / total).collect())
}

/// A distribution over a single alphabet.
#[derive(Debug, Clone, PartialEq)]
pub struct Pmf {
    alphabet: Alphabet,
    probs: Vec<f64>,
}

impl Pmf {
    pub fn new(alphabet: Alphabet, probs: Vec<f64>) -> Result<Self> {
        if probs.len() != alphabet.size() {
            return invalid(format!(
                "pmf has {} entries for an alphabet of size {}",
                probs.len(),
                alphabet.size()
            ));
        }
        let probs = validated_probs(probs, "pmf")?;
        Ok(Pmf { alphabet, probs })
    }

    pub fn uniform(alphabet: Alphabet) -> Self {
        let n = alphabet.size();
        Pmf {
            probs: vec![1.0 / n as f64; n],
            alphabet,
        }
    }

    /// Binary source with `P(1) = p_one`.
    pub fn bernoulli(p_one: f64) -> Result<Self> {
        Pmf::new(Alphabet::binary(), vec![1.0 - p_one, p_one])
    }

    pub fn alphabet(&self) -> &Alphabet {
        &self.alphabet
    }

    pub fn prob(&self, symbol: usize) -> f64 {
        self.probs[symbol]
    }

    pub fn to_joint(&self) -> JointPmf {
        JointPmf {
            shape: vec![self.alphabet.size()],
            axes: vec![self.alphabet.clone()],
            probs: self.probs.clone(),
        }
    }
}

impl ProbabilityTable for Pmf {
    fn probs(&self) -> &[f64] {
        &self.probs
    }
}

/// Maps every cell of a dense table onto the cell of one of its marginals.
///
/// Kept axes appear in the marginal in the order they were listed.
#[derive(Debug, Clone)]
pub(crate) struct MarginalIndex {
    map: Vec<usize>,
    shape: Vec<usize>,
}

impl MarginalIndex {
    pub(crate) fn new(shape: &[usize], keep: &[usize]) -> Self {
        let kept_shape: Vec<usize> = keep.iter().map(|&k| shape[k]).collect();
        let mut kept_stride = vec![0usize; shape.len()];
        let mut s = 1;
        for (j, &axis) in keep.iter().enumerate().rev() {
            kept_stride[axis] = s;
            s *= kept_shape[j];
        }
        let total: usize = shape.iter().product();
        let mut map = Vec::with_capacity(total);
        let mut idx = vec![0usize; shape.len()];
        for _ in 0..total {
            map.push(idx.iter().zip(&kept_stride).map(|(i, st)| i * st).sum());
            advance(&mut idx, shape);
        }
        MarginalIndex {
            map,
            shape: kept_shape,
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub(crate) fn accumulate(&self, probs: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for (p, &m) in probs.iter().zip(&self.map) {
            out[m] += p;
        }
    }

    pub(crate) fn target(&self, flat: usize) -> usize {
        self.map[flat]
    }
}

/// Advances a row-major multi-index (odometer style).
pub(crate) fn advance(idx: &mut [usize], shape: &[usize]) {
    for d in (0..idx.len()).rev() {
        idx[d] += 1;
        if idx[d] < shape[d] {
            return;
        }
        idx[d] = 0;
    }
}

/// A joint distribution over one or more finite axes.
#[derive(Debug, Clone, PartialEq)]
pub struct JointPmf {
    axes: Vec<Alphabet>,
    shape: Vec<usize>,
    probs: Vec<f64>,
}

impl JointPmf {
    pub fn new(axes: Vec<Alphabet>, probs: Vec<f64>) -> Result<Self> {
        if axes.is_empty() {
            return invalid("joint pmf needs at least one axis");
        }
        let shape: Vec<usize> = axes.iter().map(Alphabet::size).collect();
        let cells: usize = shape.iter().product();
        if probs.len() != cells {
            return invalid(format!(
                "joint table has {} entries, axes require {cells}",
                probs.len()
            ));
        }
        let probs = validated_probs(probs, "joint pmf")?;
        Ok(JointPmf { axes, shape, probs })
    }

    /// Builds a joint from a weight function of the multi-index.
    pub fn from_fn(axes: Vec<Alphabet>, f: impl Fn(&[usize]) -> f64) -> Result<Self> {
        let shape: Vec<usize> = axes.iter().map(Alphabet::size).collect();
        let cells: usize = shape.iter().product();
        let mut idx = vec![0; shape.len()];
        let mut probs = Vec::with_capacity(cells);
        for _ in 0..cells {
            probs.push(f(&idx));
            advance(&mut idx, &shape);
        }
        JointPmf::new(axes, probs)
    }

    /// `p0(x) · p(rest | x)` with the source as axis 0.
    pub fn from_source_and_conditional(source: &Pmf, conditional: &ConditionalPmf) -> Result<Self> {
        if source.alphabet() != conditional.from_alphabet() {
            return invalid("conditional is not indexed by the source alphabet");
        }
        let mut axes = vec![source.alphabet().clone()];
        axes.extend(conditional.to_axes().iter().cloned());
        let probs = (0..source.alphabet().size())
            .flat_map(|x| conditional.row(x).iter().map(move |c| source.prob(x) * c))
            .collect();
        JointPmf::new(axes, probs)
    }

    /// Same table without re-validation; callers guarantee a valid pmf.
    pub(crate) fn from_parts_unchecked(axes: Vec<Alphabet>, probs: Vec<f64>) -> Self {
        let shape = axes.iter().map(Alphabet::size).collect();
        JointPmf { axes, shape, probs }
    }

    pub fn axes(&self) -> &[Alphabet] {
        &self.axes
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn num_axes(&self) -> usize {
        self.axes.len()
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &s)| acc * s + i)
    }

    pub fn prob(&self, idx: &[usize]) -> f64 {
        self.probs[self.flat_index(idx)]
    }

    fn check_axes(&self, axes: &[usize], what: &str) -> Result<()> {
        for (i, &a) in axes.iter().enumerate() {
            if a >= self.num_axes() {
                return invalid(format!("{what}: axis {a} out of range"));
            }
            if axes[..i].contains(&a) {
                return invalid(format!("{what}: axis {a} listed twice"));
            }
        }
        Ok(())
    }

    /// Marginal over `keep`, with axes in the listed order.
    pub fn marginalize(&self, keep: &[usize]) -> Result<JointPmf> {
        if keep.is_empty() {
            return invalid("marginalize: keep_axes must be non-empty");
        }
        self.check_axes(keep, "marginalize")?;
        let index = MarginalIndex::new(&self.shape, keep);
        let mut out = vec![0.0; index.len()];
        index.accumulate(&self.probs, &mut out);
        Ok(JointPmf::from_parts_unchecked(
            keep.iter().map(|&k| self.axes[k].clone()).collect(),
            out,
        ))
    }

    /// Slice at `axis = symbol`, renormalized; the conditioned axis is dropped.
    pub fn condition(&self, axis: usize, symbol: usize) -> Result<JointPmf> {
        if self.num_axes() < 2 {
            return invalid("condition: need at least two axes");
        }
        self.check_axes(&[axis], "condition")?;
        if symbol >= self.shape[axis] {
            return invalid(format!("condition: symbol {symbol} not in axis {axis}"));
        }
        let mut idx = vec![0; self.num_axes()];
        let mut slice = Vec::with_capacity(self.probs.len() / self.shape[axis]);
        for &p in &self.probs {
            if idx[axis] == symbol {
                slice.push(p);
            }
            advance(&mut idx, &self.shape);
        }
        let mass: f64 = slice.iter().sum();
        if mass <= 0.0 {
            return Err(CoordError::ZeroProbabilityEvent { axis, symbol });
        }
        slice.iter_mut().for_each(|p| *p /= mass);
        let axes = self
            .axes
            .iter()
            .enumerate()
            .filter(|&(i, _)| i != axis)
            .map(|(_, a)| a.clone())
            .collect();
        Ok(JointPmf::from_parts_unchecked(axes, slice))
    }

    /// Entropy of the marginal over `axes` (zero for the empty set).
    pub fn marginal_entropy(&self, axes: &[usize]) -> Result<f64> {
        if axes.is_empty() {
            return Ok(0.0);
        }
        Ok(self.marginalize(axes)?.entropy())
    }

    fn marginal_table(&self, axes: &[usize]) -> (MarginalIndex, Vec<f64>) {
        let index = MarginalIndex::new(&self.shape, axes);
        let mut out = vec![0.0; index.len()];
        index.accumulate(&self.probs, &mut out);
        (index, out)
    }
}

impl ProbabilityTable for JointPmf {
    fn probs(&self) -> &[f64] {
        &self.probs
    }
}

fn check_disjoint(groups: &[&[usize]], what: &str) -> Result<()> {
    let mut seen: Vec<usize> = Vec::new();
    for g in groups {
        for &a in g.iter() {
            if seen.contains(&a) {
                return invalid(format!("{what}: axis {a} appears in more than one group"));
            }
            seen.push(a);
        }
    }
    Ok(())
}

/// `H(target | given)`, computed as `-Σ p(t,g) log2 p(t,g)/p(g)`.
pub fn conditional_entropy(joint: &JointPmf, target: &[usize], given: &[usize]) -> Result<f64> {
    if target.is_empty() || given.is_empty() {
        return invalid("conditional_entropy: axis sets must be non-empty");
    }
    check_disjoint(&[target, given], "conditional_entropy")?;
    joint.check_axes(target, "conditional_entropy")?;
    joint.check_axes(given, "conditional_entropy")?;
    let all: Vec<usize> = given.iter().chain(target).copied().collect();
    let (_, tg) = joint.marginal_table(&all);
    let g_size: usize = given.iter().map(|&a| joint.shape[a]).product();
    let t_size = tg.len() / g_size;
    let mut h = 0.0;
    for g in 0..g_size {
        let row = &tg[g * t_size..(g + 1) * t_size];
        let pg: f64 = row.iter().sum();
        for &p in row.iter().filter(|&&p| p > 0.0) {
            h -= p * (p / pg).log2();
        }
    }
    Ok(h.max(0.0))
}

/// `I(axes1; axes2 | given)` as the expected log-likelihood ratio, clamped to be non-negative.
pub fn mutual_information(
    joint: &JointPmf,
    axes1: &[usize],
    axes2: &[usize],
    given: &[usize],
) -> Result<f64> {
    if axes1.is_empty() || axes2.is_empty() {
        return invalid("mutual_information: axis sets must be non-empty");
    }
    check_disjoint(&[axes1, axes2, given], "mutual_information")?;
    for g in [axes1, axes2, given] {
        joint.check_axes(g, "mutual_information")?;
    }
    let all: Vec<usize> = given.iter().chain(axes1).chain(axes2).copied().collect();
    let n_given = given.len();
    let n1 = axes1.len();
    let (index_all, p_all) = joint.marginal_table(&all);
    let sub = |keep: Vec<usize>| MarginalIndex::new(&index_all.shape, &keep);
    let idx_g1 = sub((0..n_given + n1).collect());
    let idx_g2 = sub((0..n_given).chain(n_given + n1..all.len()).collect());
    let idx_g = sub((0..n_given).collect());
    let mut p_g1 = vec![0.0; idx_g1.len()];
    let mut p_g2 = vec![0.0; idx_g2.len()];
    let mut p_g = vec![0.0; idx_g.len().max(1)];
    idx_g1.accumulate(&p_all, &mut p_g1);
    idx_g2.accumulate(&p_all, &mut p_g2);
    if n_given > 0 {
        idx_g.accumulate(&p_all, &mut p_g);
    } else {
        p_g[0] = 1.0;
    }
    let mut mi = 0.0;
    for (cell, &p) in p_all.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        let pg = if n_given > 0 { p_g[idx_g.target(cell)] } else { 1.0 };
        let ratio = p * pg / (p_g1[idx_g1.target(cell)] * p_g2[idx_g2.target(cell)]);
        mi += p * ratio.log2();
    }
    Ok(mi.max(0.0))
}

/// Total variation distance `½ Σ |p - q|` between tables on identical axes.
pub fn total_variation(p: &JointPmf, q: &JointPmf) -> Result<f64> {
    if p.axes != q.axes {
        return invalid("total_variation: axes differ");
    }
    Ok(tv_slices(&p.probs, &q.probs))
}

pub(crate) fn tv_slices(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Marginal over `keep` (free-function form of [`JointPmf::marginalize`]).
pub fn marginalize(joint: &JointPmf, keep: &[usize]) -> Result<JointPmf> {
    joint.marginalize(keep)
}

/// Renormalized slice (free-function form of [`JointPmf::condition`]).
pub fn condition(joint: &JointPmf, axis: usize, symbol: usize) -> Result<JointPmf> {
    joint.condition(axis, symbol)
}

/// A stochastic map from one alphabet to the product of one or more axes.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionalPmf {
    from: Alphabet,
    to_axes: Vec<Alphabet>,
    rows: Vec<Vec<f64>>,
}

impl ConditionalPmf {
    pub fn new(from: Alphabet, to_axes: Vec<Alphabet>, rows: Vec<Vec<f64>>) -> Result<Self> {
        if to_axes.is_empty() {
            return invalid("conditional pmf needs at least one output axis");
        }
        if rows.len() != from.size() {
            return invalid(format!(
                "conditional pmf has {} rows for {} conditioning symbols",
                rows.len(),
                from.size()
            ));
        }
        let width: usize = to_axes.iter().map(Alphabet::size).product();
        let rows = rows
            .into_iter()
            .enumerate()
            .map(|(i, row)| {
                if row.len() != width {
                    return invalid(format!("row {i} has {} entries, expected {width}", row.len()));
                }
                validated_probs(row, &format!("conditional row {i}"))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ConditionalPmf { from, to_axes, rows })
    }

    /// Rows of `joint` (axis 0 conditioning, remaining axes as outputs).
    /// Zero-probability conditioning symbols get a uniform row.
    pub fn from_joint(joint: &JointPmf) -> Result<Self> {
        if joint.num_axes() < 2 {
            return invalid("from_joint: need at least two axes");
        }
        let width = joint.probs.len() / joint.shape[0];
        let rows = joint
            .probs
            .chunks(width)
            .map(|row| {
                let mass: f64 = row.iter().sum();
                if mass > 0.0 {
                    row.iter().map(|p| p / mass).collect()
                } else {
                    vec![1.0 / width as f64; width]
                }
            })
            .collect();
        ConditionalPmf::new(joint.axes[0].clone(), joint.axes[1..].to_vec(), rows)
    }

    pub fn from_alphabet(&self) -> &Alphabet {
        &self.from
    }

    pub fn to_axes(&self) -> &[Alphabet] {
        &self.to_axes
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    pub fn row(&self, symbol: usize) -> &[f64] {
        &self.rows[symbol]
    }
}

/// Occurrence counts of symbol tuples along aligned sequences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EmpiricalCounts {
    axes: Vec<Alphabet>,
    shape: Vec<usize>,
    counts: Vec<u64>,
    n: u64,
}

impl EmpiricalCounts {
    /// Tallies aligned columns, one per axis.
    pub fn tally(axes: Vec<Alphabet>, columns: &[&[usize]]) -> Result<Self> {
        if axes.len() != columns.len() || axes.is_empty() {
            return invalid("empirical: need one sequence per axis");
        }
        let n = columns[0].len();
        if n == 0 {
            return invalid("empirical: sequences must be non-empty");
        }
        if columns.iter().any(|c| c.len() != n) {
            return invalid("empirical: sequences have different lengths");
        }
        let shape: Vec<usize> = axes.iter().map(Alphabet::size).collect();
        let mut counts = vec![0u64; shape.iter().product()];
        for t in 0..n {
            let mut flat = 0;
            for (d, col) in columns.iter().enumerate() {
                let s = col[t];
                if s >= shape[d] {
                    return invalid(format!("empirical: symbol {s} at position {t} not in axis {d}"));
                }
                flat = flat * shape[d] + s;
            }
            counts[flat] += 1;
        }
        Ok(EmpiricalCounts {
            axes,
            shape,
            counts,
            n: n as u64,
        })
    }

    pub fn axes(&self) -> &[Alphabet] {
        &self.axes
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn count(&self, idx: &[usize]) -> u64 {
        let flat = idx
            .iter()
            .zip(&self.shape)
            .fold(0, |acc, (&i, &s)| acc * s + i);
        self.counts[flat]
    }

    pub fn normalized(&self) -> JointPmf {
        let n = self.n as f64;
        JointPmf::from_parts_unchecked(
            self.axes.clone(),
            self.counts.iter().map(|&c| c as f64 / n).collect(),
        )
    }
}

/// Empirical counts of `(X_i, A_i, B_i)` triples.
pub fn empirical(
    axes: [&Alphabet; 3],
    xs: &[usize],
    as_: &[usize],
    bs: &[usize],
) -> Result<EmpiricalCounts> {
    EmpiricalCounts::tally(axes.iter().map(|a| (*a).clone()).collect(), &[xs, as_, bs])
}
