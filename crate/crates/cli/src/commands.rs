use std::path::Path;

use rayon::prelude::*;
use serde_json::{json, Value};

use coordlab::coordination::{
    feasible_cell, slack_causal, slack_noncausal, FeasibilityStatus, UBoundConfig,
};
use coordlab::game::{
    play, scheme_strategy, AliceStrategy, BobInformation, BobStrategy, ConstantBob, CopySource, EchoBob, GameSpec,
    GameTrace, StrategyPair,
};
use coordlab::optimizer::{
    back_off, certify_converse, finite_n_oracle, maximize_reward, Constraint, OptimizerConfig, Regime,
};
use coordlab::probability::{JointPmf, ProbabilityTable};
use coordlab::schemes::{
    average_empirical, simulate_block_markov_trials, simulate_noncausal, trial_seed, SimulationReport,
};
use coordlab::target::TargetSpec;

use crate::instance::{Delays, DelayValue, InstanceFile, SchemeKind};
use crate::report::{conditional_json, joint_json, mean, median, Report};
use crate::{
    BobInfoArg, CliError, Command, Common, ConstraintArg, Outcome, RegimeArg, SchemeArg, StrategyArg, EXIT_INFEASIBLE,
    EXIT_OK,
};

fn load(common: &Common) -> Result<InstanceFile, CliError> {
    let mut inst = InstanceFile::read(&common.instance)?;
    if let Some(seed) = common.seed {
        inst.seed = seed;
    }
    Ok(inst)
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    std::fs::write(path, text).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn emit(common: &Common, report: &Report, code: i32, summary: String) -> Result<Outcome, CliError> {
    let text = report.to_json();
    match &common.out {
        Some(path) => {
            write_file(path, &text)?;
            Ok(Outcome {
                code,
                stdout: String::new(),
                stderr: format!("{summary}; report written to {}\n", path.display()),
            })
        }
        None => Ok(Outcome {
            code,
            stdout: text,
            stderr: format!("{summary}\n"),
        }),
    }
}

pub fn execute(command: &Command) -> Result<Outcome, CliError> {
    match command {
        Command::Feasible { common, cell, max_u } => feasible(common, cell.as_deref(), *max_u),
        Command::Optimize {
            common,
            constraint,
            restarts,
            iterations,
            no_grid,
            back_off,
            emit_instance,
        } => optimize(
            common,
            *constraint,
            OptimizerConfig {
                restarts: *restarts,
                iterations: *iterations,
                grid_resolution: if *no_grid { None } else { OptimizerConfig::default().grid_resolution },
                ..OptimizerConfig::default()
            },
            *back_off,
            emit_instance.as_deref(),
        ),
        Command::Simulate {
            common,
            scheme,
            trials,
            trace,
        } => simulate(common, *scheme, *trials, *trace),
        Command::Oracle {
            common,
            n,
            regime,
            budget,
            certify,
        } => oracle(common, *n, *regime, *budget, *certify),
        Command::Game {
            common,
            rounds,
            strategy,
            bob_info,
            trials,
            back_off,
        } => game(common, *rounds, *strategy, *bob_info, *trials, *back_off),
    }
}

fn parse_cell(text: &str) -> Result<Delays, CliError> {
    let parts: Vec<&str> = text.split(',').collect();
    if parts.len() != 2 {
        return Err(CliError::Usage(format!("--cell expects `d1,d2`, got `{text}`")));
    }
    Ok(Delays {
        d1: DelayValue::parse(parts[0])?,
        d2: DelayValue::parse(parts[1])?,
    })
}

fn status_name(s: FeasibilityStatus) -> &'static str {
    match s {
        FeasibilityStatus::Feasible => "feasible",
        FeasibilityStatus::Infeasible => "infeasible",
        FeasibilityStatus::UnknownWithinSearchBound => "unknown_within_search_bound",
    }
}

fn feasible(common: &Common, cell: Option<&str>, max_u: usize) -> Result<Outcome, CliError> {
    let inst = load(common)?;
    let target = inst.target_spec()?;
    let delays = match cell {
        Some(text) => parse_cell(text)?,
        None => inst.delays,
    };
    let spec = delays.to_spec()?;
    let search = UBoundConfig {
        max_u,
        seed: inst.seed,
        ..UBoundConfig::default()
    };
    let verdict = feasible_cell(target.joint(), spec, &search)?;
    let result = json!({
        "status": status_name(verdict.status),
        "slack": verdict.slack,
        "conditions": verdict.checked_conditions.iter().map(|c| json!({
            "name": c.name,
            "value": c.value,
            "holds": c.holds,
        })).collect::<Vec<_>>(),
        "witness": verdict.witness.as_ref().map(joint_json),
        "slack_noncausal": slack_noncausal(target.joint())?,
        "slack_causal": slack_causal(target.joint())?,
    });
    let options = json!({ "cell": delays, "max_u": max_u });
    let code = if verdict.status == FeasibilityStatus::Infeasible { EXIT_INFEASIBLE } else { EXIT_OK };
    let summary = format!("{} (slack {:?})", status_name(verdict.status), verdict.slack);
    emit(common, &Report::new("feasible", &inst, options, result), code, summary)
}

fn constraint_of(arg: ConstraintArg, inst: &InstanceFile) -> Result<Constraint, CliError> {
    Ok(match arg {
        ConstraintArg::Theorem1 => Constraint::Theorem1,
        ConstraintArg::Theorem2 => Constraint::Theorem2,
        ConstraintArg::Cell => Constraint::Cell(inst.delays.to_spec()?),
    })
}

fn optimize(
    common: &Common,
    arg: ConstraintArg,
    config: OptimizerConfig,
    slack: Option<f64>,
    emit_instance: Option<&Path>,
) -> Result<Outcome, CliError> {
    let inst = load(common)?;
    let p0 = inst.source_pmf()?;
    let reward = inst.reward_table()?;
    let constraint = constraint_of(arg, &inst)?;
    let config = OptimizerConfig { seed: inst.seed, ..config };
    let best = maximize_reward(&p0, &reward, constraint, &config)?;
    let backed = slack
        .map(|s| back_off(&p0, &best.argmax, constraint, s))
        .transpose()?;
    let backed_json = match &backed {
        Some(c) => {
            let j = JointPmf::from_source_and_conditional(&p0, c)?;
            json!({
                "target": conditional_json(c),
                "value": reward.expected(&j)?,
                "slack": coordlab::optimizer::constraint_margin(&j, constraint)?,
            })
        }
        None => Value::Null,
    };
    if let Some(path) = emit_instance {
        let mut out = inst.clone();
        out.set_target(backed.as_ref().unwrap_or(&best.argmax));
        write_file(path, &format!("{}\n", out.to_json()))?;
    }
    let result = json!({
        "value": best.value,
        "argmax": conditional_json(&best.argmax),
        "slack_at_argmax": best.slack_at_argmax,
        "restarts_used": best.restarts_used,
        "converged": best.converged,
        "backed_off": backed_json,
    });
    let options = json!({
        "constraint": format!("{arg:?}").to_lowercase(),
        "restarts": config.restarts,
        "iterations": config.iterations,
        "grid_resolution": config.grid_resolution,
        "back_off": slack,
    });
    let summary = format!("value {:.6} (converged {})", best.value, best.converged);
    emit(common, &Report::new("optimize", &inst, options, result), EXIT_OK, summary)
}

/// Blocks where Controller 2 read a different bin than Controller 1 aimed for.
fn bin_mismatches(r: &SimulationReport) -> usize {
    r.per_block
        .iter()
        .filter(|d| d.chosen_bin.is_some() && !d.bin_failure && d.chosen_bin != d.decoded_bin)
        .count()
}

fn trial_json(r: &SimulationReport, trace: bool) -> Value {
    let mut v = json!({
        "seed": r.seed,
        "rate": r.rate,
        "codebook_size": r.codebook_size,
        "tv_to_target": r.tv_to_target,
        "avg_reward": r.avg_reward,
        "encoder_failures": r.encoder_failures,
        "covering_failures": r.covering_failures,
        "blocks": r.per_block.len(),
        "bin_mismatches": bin_mismatches(r),
        "warnings": r.warnings,
    });
    if trace {
        v["xs"] = json!(r.xs);
        v["as"] = json!(r.as_);
        v["bs"] = json!(r.bs);
    }
    v
}

fn simulate(common: &Common, scheme: SchemeArg, trials: usize, trace: bool) -> Result<Outcome, CliError> {
    let inst = load(common)?;
    let target = inst.target_spec()?;
    let reward = inst.reward.as_ref().map(|_| inst.reward_table()).transpose()?;
    let kind = match scheme {
        SchemeArg::Noncausal => SchemeKind::NonCausal,
        SchemeArg::BlockMarkov => SchemeKind::BlockMarkov,
    };
    let cfg = inst.scheme.config(kind, inst.seed)?;
    let reports = match scheme {
        SchemeArg::Noncausal => simulate_noncausal(&target, &cfg, reward.as_ref(), trials)?,
        SchemeArg::BlockMarkov => simulate_block_markov_trials(&target, &cfg, reward.as_ref(), trials)?,
    };
    let tvs: Vec<f64> = reports.iter().map(|r| r.tv_to_target).collect();
    let rewards: Vec<f64> = reports.iter().filter_map(|r| r.avg_reward).collect();
    let clean = reports.iter().filter(|r| r.encoder_failures == 0).count();
    let averaged = average_empirical(&reports)?;
    let slack_of_average = match scheme {
        SchemeArg::Noncausal => slack_noncausal(&averaged)?,
        SchemeArg::BlockMarkov => slack_causal(&averaged)?,
    };
    let target_slack = match scheme {
        SchemeArg::Noncausal => slack_noncausal(target.joint())?,
        SchemeArg::BlockMarkov => slack_causal(target.joint())?,
    };
    let result = json!({
        "target_slack": target_slack,
        "aggregate": {
            "trials": reports.len(),
            "median_tv": median(&tvs),
            "mean_tv": mean(&tvs),
            "median_reward": median(&rewards),
            "mean_reward": mean(&rewards),
            "trials_without_encoder_failure": clean,
            "encoder_failures": reports.iter().map(|r| r.encoder_failures).sum::<usize>(),
            "covering_failures": reports.iter().map(|r| r.covering_failures).sum::<usize>(),
            "bin_mismatches": reports.iter().map(bin_mismatches).sum::<usize>(),
            "averaged_empirical": joint_json(&averaged),
            "slack_of_averaged_empirical": slack_of_average,
        },
        "trials": reports.iter().map(|r| trial_json(r, trace)).collect::<Vec<_>>(),
    });
    let options = json!({
        "scheme": match scheme { SchemeArg::Noncausal => "noncausal", SchemeArg::BlockMarkov => "block-markov" },
        "trials": trials,
        "trace": trace,
        "block_length": cfg.block_length,
    });
    let summary = format!("median tv {:.4} over {} trials", median(&tvs).unwrap_or(f64::NAN), reports.len());
    emit(common, &Report::new("simulate", &inst, options, result), EXIT_OK, summary)
}

fn regime_of(arg: RegimeArg) -> Regime {
    match arg {
        RegimeArg::NoncausalBoth => Regime::NonCausalBoth,
        RegimeArg::CausalBob => Regime::CausalBob,
        RegimeArg::CausalBobFeedback => Regime::CausalBobWithSourceFeedback,
    }
}

fn oracle(common: &Common, n: usize, arg: RegimeArg, budget: u128, certify: bool) -> Result<Outcome, CliError> {
    let inst = load(common)?;
    let p0 = inst.source_pmf()?;
    let reward = inst.reward_table()?;
    let regime = regime_of(arg);
    let best = finite_n_oracle(&p0, &reward, n, regime, budget)?;
    let certificate = if certify {
        let [_, a, b] = inst.axes()?;
        let c = certify_converse(&p0, &a, &b, n, regime, budget)?;
        json!({
            "pairs_checked": c.pairs_checked.to_string(),
            "min_slack": c.min_slack,
            "worst_pair": { "alice": c.worst_pair.alice, "bob": c.worst_pair.bob },
        })
    } else {
        Value::Null
    };
    let result = json!({
        "best_value": best.best_value,
        "best_encoders": { "alice": best.best_encoders.alice, "bob": best.best_encoders.bob },
        "expected_empirical": joint_json(&best.expected_empirical),
        "pairs_enumerated": best.pairs_enumerated.to_string(),
        "certificate": certificate,
    });
    let options = json!({
        "n": n,
        "regime": format!("{arg:?}"),
        "budget": budget.to_string(),
        "certify": certify,
    });
    let summary = format!("best value {:.6} over {} pairs", best.best_value, best.pairs_enumerated);
    emit(common, &Report::new("oracle", &inst, options, result), EXIT_OK, summary)
}

fn play_all<A, B, F>(spec: &GameSpec, seed: u64, trials: usize, make: F) -> Result<Vec<GameTrace>, CliError>
where
    A: AliceStrategy,
    B: BobStrategy,
    F: Fn(u64) -> Result<StrategyPair<A, B>, CliError> + Sync,
{
    if trials == 0 {
        return Err(CliError::Usage("--trials must be at least 1".into()));
    }
    (0..trials)
        .into_par_iter()
        .map(|t| {
            let s = trial_seed(seed, t);
            Ok(play(spec, &make(s)?, s)?)
        })
        .collect()
}

/// The file's target, or the optimal target backed off to `slack`.
fn game_target(inst: &InstanceFile, spec: &GameSpec, slack: f64) -> Result<(TargetSpec, &'static str), CliError> {
    if inst.target.is_some() {
        return Ok((inst.target_spec()?, "instance"));
    }
    let config = OptimizerConfig {
        seed: inst.seed,
        ..OptimizerConfig::default()
    };
    let best = maximize_reward(&spec.source, &spec.reward, Constraint::Theorem2, &config)?;
    let backed = back_off(&spec.source, &best.argmax, Constraint::Theorem2, slack)?;
    Ok((TargetSpec::new(spec.source.clone(), backed)?, "optimized"))
}

fn game(
    common: &Common,
    rounds: usize,
    strategy: StrategyArg,
    bob_info: BobInfoArg,
    trials: usize,
    slack: f64,
) -> Result<Outcome, CliError> {
    let inst = load(common)?;
    let info = match bob_info {
        BobInfoArg::Actions => BobInformation::ActionsOnly,
        BobInfoArg::ActionsAndSource => BobInformation::ActionsAndSource,
    };
    let spec = inst.game_spec(info, rounds)?;
    let mut target_json = Value::Null;
    let traces = match strategy {
        StrategyArg::CopyConstant => play_all(&spec, inst.seed, trials, |s| {
            Ok(StrategyPair { alice: CopySource, bob: ConstantBob(0), shared_seed: s })
        })?,
        StrategyArg::CopyEcho => play_all(&spec, inst.seed, trials, |s| {
            Ok(StrategyPair { alice: CopySource, bob: EchoBob { first: 0 }, shared_seed: s })
        })?,
        StrategyArg::Scheme => {
            let (target, origin) = game_target(&inst, &spec, slack)?;
            let base = inst.scheme.config(SchemeKind::BlockMarkov, inst.seed)?;
            scheme_strategy(&target, &base)?;
            target_json = json!({
                "origin": origin,
                "table": conditional_json(target.conditional()),
                "slack_causal": slack_causal(target.joint())?,
            });
            play_all(&spec, inst.seed, trials, |s| {
                Ok(scheme_strategy(&target, &coordlab::schemes::SchemeConfig { seed: s, ..base.clone() })?)
            })?
        }
    };
    let scores: Vec<f64> = traces.iter().map(|t| t.average_score).collect();
    let averaged = {
        let axes = spec.reward.axes().to_vec();
        let mut acc = vec![0.0; traces[0].empirical.counts().len()];
        for t in &traces {
            for (a, p) in acc.iter_mut().zip(t.empirical.normalized().probs()) {
                *a += p / traces.len() as f64;
            }
        }
        JointPmf::new(axes, acc)?
    };
    let result = json!({
        "median_score": median(&scores),
        "mean_score": mean(&scores),
        "scores": scores,
        "averaged_empirical": joint_json(&averaged),
        "target": target_json,
    });
    let options = json!({
        "rounds": rounds,
        "strategy": format!("{strategy:?}"),
        "bob_information": format!("{info:?}"),
        "trials": trials,
        "back_off": slack,
    });
    let summary = format!("median score {:.4} over {} trials", median(&scores).unwrap_or(f64::NAN), trials);
    emit(common, &Report::new("game", &inst, options, result), EXIT_OK, summary)
}

