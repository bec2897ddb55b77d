//! JSON-lines training log.
//!
//! Every line is one object tagged by `kind`:
//!
//! - `pretrain`: `steps`, `loss_f` (last pretraining batch loss),
//!   `heldout_nll_before`, `heldout_nll_after` (null without a held-out split)
//! - `step`: `step`, `order` (models updated, in order), `loss_pi`, `loss_f`,
//!   `loss_dr`, `loss_do`, `d_r_expert`, `d_r_rollout`, `d_o_expert`,
//!   `d_o_suboptimal`, `d_o_rollout`, `pu_risk`, `rollout_emitted`,
//!   `rollout_truncated`, `rollout_buffer`
//! - `eval`: `step`, `mean`, `std`, `scores`
//!
//! Quantities that do not apply to an algorithm are written as `null`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PretrainRecord {
    pub steps: usize,
    pub loss_f: Option<f64>,
    pub heldout_nll_before: Option<f64>,
    pub heldout_nll_after: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub order: Vec<String>,
    pub loss_pi: Option<f64>,
    pub loss_f: Option<f64>,
    pub loss_dr: Option<f64>,
    pub loss_do: Option<f64>,
    pub d_r_expert: Option<f64>,
    pub d_r_rollout: Option<f64>,
    pub d_o_expert: Option<f64>,
    pub d_o_suboptimal: Option<f64>,
    pub d_o_rollout: Option<f64>,
    pub pu_risk: Option<f64>,
    pub rollout_emitted: usize,
    pub rollout_truncated: usize,
    pub rollout_buffer: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub step: usize,
    pub mean: f64,
    pub std: f64,
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Record {
    Pretrain(PretrainRecord),
    Step(StepRecord),
    Eval(EvalRecord),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainLog {
    pub records: Vec<Record>,
}

impl TrainLog {
    pub fn push(&mut self, r: Record) {
        self.records.push(r);
    }

    pub fn steps(&self) -> impl Iterator<Item = &StepRecord> {
        self.records.iter().filter_map(|r| match r {
            Record::Step(s) => Some(s),
            _ => None,
        })
    }

    pub fn evals(&self) -> impl Iterator<Item = &EvalRecord> {
        self.records.iter().filter_map(|r| match r {
            Record::Eval(e) => Some(e),
            _ => None,
        })
    }

    pub fn pretrain(&self) -> Option<&PretrainRecord> {
        self.records.iter().find_map(|r| match r {
            Record::Pretrain(p) => Some(p),
            _ => None,
        })
    }

    pub fn last_step(&self) -> Option<&StepRecord> {
        self.steps().last()
    }

    pub fn final_eval(&self) -> Option<&EvalRecord> {
        self.evals().last()
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.records {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_jsonl(&self) -> String {
        let mut buf = vec![];
        self.write_jsonl(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn read_jsonl(text: &str) -> Result<Self> {
        let records = text
            .lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect::<std::result::Result<_, _>>()?;
        Ok(Self { records })
    }
}
