//! The JSON instance format. Tables are nested `[x][a][b]` arrays.

use serde::{Deserialize, Serialize};

use coordlab::coordination::{Delay, DelaySpec};
use coordlab::game::{BobInformation, GameSpec};
use coordlab::optimizer::RewardTable;
use coordlab::probability::{Alphabet, ConditionalPmf, Pmf, ProbabilityTable};
use coordlab::schemes::{Rate, SchemeConfig, DEFAULT_TYPICALITY_EPS};
use coordlab::target::TargetSpec;

use crate::CliError;

pub type Table3 = Vec<Vec<Vec<f64>>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Alphabets {
    pub x: Vec<String>,
    pub a: Vec<String>,
    pub b: Vec<String>,
}

/// `"noncausal"`, `0`, a positive integer, or `"never"`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DelayValue {
    Steps(u32),
    Word(DelayWord),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DelayWord {
    Noncausal,
    Never,
}

impl DelayValue {
    pub fn to_delay(self) -> Delay {
        match self {
            DelayValue::Steps(0) => Delay::Zero,
            DelayValue::Steps(k) => Delay::Positive(k),
            DelayValue::Word(DelayWord::Noncausal) => Delay::NonCausal,
            DelayValue::Word(DelayWord::Never) => Delay::NeverObserves,
        }
    }

    pub fn from_delay(d: Delay) -> Self {
        match d {
            Delay::Zero => DelayValue::Steps(0),
            Delay::Positive(k) => DelayValue::Steps(k),
            Delay::NonCausal => DelayValue::Word(DelayWord::Noncausal),
            Delay::NeverObserves => DelayValue::Word(DelayWord::Never),
        }
    }

    /// Parses the command-line spelling used by `--cell`.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        match text.trim() {
            "noncausal" => Ok(DelayValue::Word(DelayWord::Noncausal)),
            "never" => Ok(DelayValue::Word(DelayWord::Never)),
            other => other
                .parse()
                .map(DelayValue::Steps)
                .map_err(|_| CliError::Usage(format!("bad delay `{other}`: expected noncausal, never or an integer"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Delays {
    pub d1: DelayValue,
    pub d2: DelayValue,
}

impl Delays {
    pub fn to_spec(self) -> Result<DelaySpec, CliError> {
        DelaySpec::new(self.d1.to_delay(), self.d2.to_delay()).map_err(CliError::from)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RateValue {
    Fixed(f64),
    Word(AutoWord),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AutoWord {
    Auto,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SchemeSection {
    /// Block length of the non-causal scheme.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    /// Block length of the block-Markov scheme.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default = "auto_rate")]
    pub rate: RateValue,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_draws: Option<u64>,
    #[serde(default = "default_blocks")]
    pub num_blocks: usize,
}

fn auto_rate() -> RateValue {
    RateValue::Word(AutoWord::Auto)
}

fn default_eps() -> f64 {
    DEFAULT_TYPICALITY_EPS
}

fn default_blocks() -> usize {
    50
}

impl Default for SchemeSection {
    fn default() -> Self {
        SchemeSection {
            n: None,
            k: None,
            rate: auto_rate(),
            eps: default_eps(),
            max_draws: None,
            num_blocks: default_blocks(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SchemeKind {
    NonCausal,
    BlockMarkov,
}

impl SchemeSection {
    /// `n` for the non-causal scheme and `k` for block-Markov, each falling back to
    /// the other and then to the library default.
    pub fn config(&self, kind: SchemeKind, seed: u64) -> Result<SchemeConfig, CliError> {
        let len = match kind {
            SchemeKind::NonCausal => self.n.or(self.k),
            SchemeKind::BlockMarkov => self.k.or(self.n),
        }
        .unwrap_or(SchemeConfig::default().block_length);
        let cfg = SchemeConfig {
            block_length: len,
            rate: match self.rate {
                RateValue::Fixed(r) => Rate::Fixed(r),
                RateValue::Word(AutoWord::Auto) => Rate::Auto,
            },
            typicality_eps: self.eps,
            max_draws: self.max_draws,
            seed,
            num_blocks: self.num_blocks,
        };
        cfg.validate().map_err(|e| CliError::Field {
            field: "scheme".into(),
            message: e.to_string(),
        })?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceFile {
    pub alphabets: Alphabets,
    pub source: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<Table3>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reward: Option<Table3>,
    pub delays: Delays,
    #[serde(default)]
    pub scheme: SchemeSection,
    #[serde(default)]
    pub seed: u64,
}

fn field<T>(name: &str, r: coordlab::Result<T>) -> Result<T, CliError> {
    r.map_err(|e| CliError::Field {
        field: name.to_string(),
        message: e.to_string(),
    })
}

fn alphabet(name: &str, symbols: &[String]) -> Result<Alphabet, CliError> {
    field(name, Alphabet::new(symbols.iter().cloned()))
}

/// Checks a `[x][a][b]` table's shape and flattens it row-major.
fn flatten(name: &str, table: &Table3, shape: [usize; 3]) -> Result<Vec<f64>, CliError> {
    let bad = |path: String, expected: usize, got: usize| CliError::Field {
        field: path,
        message: format!("expected {expected} entries, found {got}"),
    };
    if table.len() != shape[0] {
        return Err(bad(name.to_string(), shape[0], table.len()));
    }
    let mut flat = Vec::with_capacity(shape.iter().product());
    for (x, plane) in table.iter().enumerate() {
        if plane.len() != shape[1] {
            return Err(bad(format!("{name}[{x}]"), shape[1], plane.len()));
        }
        for (a, row) in plane.iter().enumerate() {
            if row.len() != shape[2] {
                return Err(bad(format!("{name}[{x}][{a}]"), shape[2], row.len()));
            }
            flat.extend_from_slice(row);
        }
    }
    Ok(flat)
}

fn nest(flat: &[f64], shape: [usize; 3]) -> Table3 {
    flat.chunks(shape[1] * shape[2])
        .map(|plane| plane.chunks(shape[2]).map(<[f64]>::to_vec).collect())
        .collect()
}

impl InstanceFile {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let inst: InstanceFile = serde_json::from_str(text).map_err(|e| CliError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        if inst.target.is_none() && inst.reward.is_none() {
            return Err(CliError::Field {
                field: "target/reward".into(),
                message: "at least one of `target` and `reward` is required".into(),
            });
        }
        inst.delays.to_spec()?;
        inst.source_pmf()?;
        if inst.target.is_some() {
            inst.target_spec()?;
        }
        if inst.reward.is_some() {
            inst.reward_table()?;
        }
        Ok(inst)
    }

    pub fn read(path: &std::path::Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
        InstanceFile::parse(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("instance serializes")
    }

    pub fn axes(&self) -> Result<[Alphabet; 3], CliError> {
        Ok([
            alphabet("alphabets.x", &self.alphabets.x)?,
            alphabet("alphabets.a", &self.alphabets.a)?,
            alphabet("alphabets.b", &self.alphabets.b)?,
        ])
    }

    fn shape(&self) -> [usize; 3] {
        [self.alphabets.x.len(), self.alphabets.a.len(), self.alphabets.b.len()]
    }

    pub fn source_pmf(&self) -> Result<Pmf, CliError> {
        let [x, _, _] = self.axes()?;
        field("source", Pmf::new(x, self.source.clone()))
    }

    pub fn target_spec(&self) -> Result<TargetSpec, CliError> {
        let table = self
            .target
            .as_ref()
            .ok_or_else(|| CliError::Usage("this command needs a `target` table".into()))?;
        let [x, a, b] = self.axes()?;
        let shape = self.shape();
        let flat = flatten("target", table, shape)?;
        let width = shape[1] * shape[2];
        let rows = flat.chunks(width).map(<[f64]>::to_vec).collect();
        let cond = field("target", ConditionalPmf::new(x, vec![a, b], rows))?;
        field("target", TargetSpec::new(self.source_pmf()?, cond))
    }

    pub fn reward_table(&self) -> Result<RewardTable, CliError> {
        let table = self
            .reward
            .as_ref()
            .ok_or_else(|| CliError::Usage("this command needs a `reward` table".into()))?;
        let [x, a, b] = self.axes()?;
        let flat = flatten("reward", table, self.shape())?;
        field("reward", RewardTable::new(vec![x, a, b], flat))
    }

    /// An instance describing a game; Bob's information is carried by `delays.d2`
    /// only through the game command's flag, so `delays` is (noncausal, 1).
    pub fn from_game_spec(spec: &GameSpec, seed: u64) -> Self {
        let axes = spec.reward.axes();
        let shape = [axes[0].size(), axes[1].size(), axes[2].size()];
        InstanceFile {
            alphabets: Alphabets {
                x: axes[0].symbols().to_vec(),
                a: axes[1].symbols().to_vec(),
                b: axes[2].symbols().to_vec(),
            },
            source: spec.source.probs().to_vec(),
            target: None,
            reward: Some(nest(spec.reward.values(), shape)),
            delays: Delays {
                d1: DelayValue::Word(DelayWord::Noncausal),
                d2: DelayValue::Steps(1),
            },
            scheme: SchemeSection::default(),
            seed,
        }
    }

    pub fn game_spec(&self, info: BobInformation, rounds: usize) -> Result<GameSpec, CliError> {
        field(
            "reward",
            GameSpec::new(self.source_pmf()?, self.reward_table()?, info, rounds),
        )
    }

    pub fn set_target(&mut self, cond: &ConditionalPmf) {
        let flat: Vec<f64> = cond.rows().iter().flatten().copied().collect();
        self.target = Some(nest(&flat, self.shape()));
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use coordlab::game::penny_matching;

    #[test]
    fn penny_spec_round_trips() {
        let spec = penny_matching();
        let inst = InstanceFile::from_game_spec(&spec, 3);
        let back = InstanceFile::parse(&inst.to_json()).unwrap();
        assert_eq!(back, inst);
        let again = back.game_spec(spec.bob_information, spec.rounds).unwrap();
        assert_eq!(again, spec);
    }

    #[test]
    fn delay_spellings() {
        let d: Delays = serde_json::from_str(r#"{"d1": "noncausal", "d2": 3}"#).unwrap();
        assert_eq!(d.to_spec().unwrap(), DelaySpec::new(Delay::NonCausal, Delay::Positive(3)).unwrap());
        let d: Delays = serde_json::from_str(r#"{"d1": 0, "d2": "never"}"#).unwrap();
        assert_eq!(d.to_spec().unwrap(), DelaySpec::new(Delay::Zero, Delay::NeverObserves).unwrap());
        assert!(serde_json::from_str::<Delays>(r#"{"d1": "later", "d2": 0}"#).is_err());
        assert_eq!(DelayValue::parse("never").unwrap(), DelayValue::Word(DelayWord::Never));
        assert!(DelayValue::parse("-1").is_err());
    }

    #[test]
    fn malformed_files_report_position_or_field() {
        match InstanceFile::parse("{\n  \"alphabets\": 3\n}") {
            Err(CliError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("{other:?}"),
        }
        let text = r#"{"alphabets": {"x": ["0","1"], "a": ["0","1"], "b": ["0","1"]},
            "source": [0.5, 0.5], "reward": [[[1,0],[0,0]]], "delays": {"d1": 0, "d2": 0}}"#;
        match InstanceFile::parse(text) {
            Err(CliError::Field { field, .. }) => assert_eq!(field, "reward"),
            other => panic!("{other:?}"),
        }
        let text = r#"{"alphabets": {"x": ["0","1"], "a": ["0","1"], "b": ["0","1"]},
            "source": [0.5, 0.5], "delays": {"d1": 0, "d2": 0}}"#;
        assert!(matches!(InstanceFile::parse(text), Err(CliError::Field { .. })));
    }
}
