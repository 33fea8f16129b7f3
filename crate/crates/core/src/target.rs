//! The coordination goal: a source law together with the desired `p(a,b|x)`.

use crate::error::{invalid, Result};
use crate::probability::{Alphabet, ConditionalPmf, JointPmf, Pmf, ProbabilityTable};

/// Axis positions in every `(X, A, B)` joint.
pub const AXIS_X: usize = 0;
pub const AXIS_A: usize = 1;
pub const AXIS_B: usize = 2;

#[derive(Debug, Clone, PartialEq)]
pub struct TargetSpec {
    source: Pmf,
    conditional: ConditionalPmf,
    joint: JointPmf,
}

impl TargetSpec {
    pub fn new(source: Pmf, conditional: ConditionalPmf) -> Result<Self> {
        if conditional.to_axes().len() != 2 {
            return invalid("target conditional must map X to the pair (A, B)");
        }
        let joint = JointPmf::from_source_and_conditional(&source, &conditional)?;
        Ok(TargetSpec {
            source,
            conditional,
            joint,
        })
    }

    /// Splits a three-axis joint into source marginal and conditional.
    pub fn from_joint(joint: &JointPmf) -> Result<Self> {
        if joint.num_axes() != 3 {
            return invalid("target joint must have exactly three axes (X, A, B)");
        }
        let source = Pmf::new(
            joint.axes()[AXIS_X].clone(),
            joint.marginalize(&[AXIS_X])?.probs().to_vec(),
        )?;
        TargetSpec::new(source, ConditionalPmf::from_joint(joint)?)
    }

    pub fn source(&self) -> &Pmf {
        &self.source
    }

    pub fn conditional(&self) -> &ConditionalPmf {
        &self.conditional
    }

    pub fn joint(&self) -> &JointPmf {
        &self.joint
    }

    pub fn x_alphabet(&self) -> &Alphabet {
        &self.joint.axes()[AXIS_X]
    }

    pub fn a_alphabet(&self) -> &Alphabet {
        &self.joint.axes()[AXIS_A]
    }

    pub fn b_alphabet(&self) -> &Alphabet {
        &self.joint.axes()[AXIS_B]
    }

    /// Flat `(a, b)` marginal, `a` major.
    pub fn ab_marginal(&self) -> Vec<f64> {
        self.joint
            .marginalize(&[AXIS_A, AXIS_B])
            .expect("axes exist")
            .probs()
            .to_vec()
    }

    pub fn b_marginal(&self) -> Vec<f64> {
        self.joint
            .marginalize(&[AXIS_B])
            .expect("axes exist")
            .probs()
            .to_vec()
    }

    /// `p(b | x)` marginal of the target conditional.
    pub fn xb_marginal(&self) -> JointPmf {
        self.joint.marginalize(&[AXIS_X, AXIS_B]).expect("axes exist")
    }

    /// `p(a | x, b)` for every pair; pairs of zero mass get a uniform row.
    pub fn a_given_xb(&self) -> Vec<Vec<f64>> {
        let na = self.a_alphabet().size();
        let nb = self.b_alphabet().size();
        let mut rows = Vec::with_capacity(self.x_alphabet().size() * nb);
        for x in 0..self.x_alphabet().size() {
            for b in 0..nb {
                let col: Vec<f64> = (0..na).map(|a| self.joint.prob(&[x, a, b])).collect();
                let mass: f64 = col.iter().sum();
                rows.push(if mass > 0.0 {
                    col.iter().map(|p| p / mass).collect()
                } else {
                    vec![1.0 / na as f64; na]
                });
            }
        }
        rows
    }
}
