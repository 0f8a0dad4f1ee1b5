//! Hyperparameter sweeps over repeated single-pair runs.

use agentsim::PromptTemplate;
use gcg::{GcgConfig, InitMode, LossChoice};
use microlm::{ModelParams, Scalar};
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::runs::run_twti;
use crate::scenario::TwtiScenario;

/// One run of a sweep: setting, identity, and its measurements.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub param: String,
    pub value: String,
    pub run: usize,
    pub seed: u64,
    pub site: String,
    pub goal: String,
    pub seconds: f64,
    pub iterations: usize,
    pub success: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    SearchWidth,
    TriggerLen,
    TopK,
    LossKind,
    InitMode,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::SearchWidth => "search_width",
            SweepParam::TriggerLen => "trigger_len",
            SweepParam::TopK => "top_k",
            SweepParam::LossKind => "loss_kind",
            SweepParam::InitMode => "init_mode",
        }
    }

    fn apply(self, config: &mut GcgConfig, value: &str) -> Result<(), Error> {
        let bad = || Error::BadScenario(format!("bad value '{value}' for {}", self.name()));
        match self {
            SweepParam::SearchWidth => config.search_width = value.parse().map_err(|_| bad())?,
            SweepParam::TriggerLen => config.trigger_len = value.parse().map_err(|_| bad())?,
            SweepParam::TopK => config.top_k = value.parse().map_err(|_| bad())?,
            SweepParam::LossKind => {
                config.loss_kind = match value {
                    "cross_entropy" => LossChoice::CrossEntropy,
                    "carlini_wagner" => LossChoice::CarliniWagner,
                    _ => return Err(bad()),
                }
            }
            SweepParam::InitMode => {
                config.init_mode = match value {
                    "random" => InitMode::Random,
                    "target_string" => InitMode::TargetString,
                    other => InitMode::Literal(other.to_string()),
                }
            }
        }
        Ok(())
    }
}

/// Repeat single-pair runs per parameter value: run `r` of a value uses
/// goal `goals[r % goals.len()]` and seed `base_seed + r`. Runs execute
/// sequentially so per-iteration wall times are comparable across
/// settings.
pub fn sweep<F: Scalar>(
    params: &ModelParams<F>,
    base: &TwtiScenario,
    goals: &[String],
    parameter: SweepParam,
    values: &[String],
    runs_per_value: usize,
    template: &PromptTemplate,
) -> Result<Vec<SweepRow>, Error> {
    if goals.is_empty() {
        return Err(Error::BadScenario("sweep needs at least one goal".into()));
    }
    if runs_per_value < 1 {
        return Err(Error::BadScenario("runs_per_value must be >= 1".into()));
    }
    let mut rows = Vec::with_capacity(values.len() * runs_per_value);
    for value in values {
        for run in 0..runs_per_value {
            let mut scenario = base.clone();
            scenario.goal = goals[run % goals.len()].clone();
            parameter.apply(&mut scenario.gcg, value)?;
            scenario.gcg.seed = base.gcg.seed + run as u64;
            let outcome = run_twti(params, &scenario, template)?;
            let mut row = outcome.row;
            row.param = parameter.name().to_string();
            row.value = value.clone();
            row.run = run;
            rows.push(row);
        }
    }
    Ok(rows)
}
