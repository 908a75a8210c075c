use std::fs;
use std::path::{Path, PathBuf};

use flowdj::bench::{generate_dataset, TaskSpec};
use flowdj::dataset::Dataset;
use flowdj::train::{fit, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::output::{input_tag, resolve_out_dir, RunDir};

pub const CHECKPOINT_FILE: &str = "checkpoint.txt";
pub const HISTORY_FILE: &str = "history.csv";
pub const DATASET_FILE: &str = "dataset.jsonl";

fn default_episodes() -> usize {
    10
}

/// The single JSON document accepted by `flowdj train`.
///
/// `task` is a preset name or a full task object. With `dataset` set, the
/// demonstrations are read from that file instead of being generated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainRunConfig {
    #[serde(default)]
    pub task: Option<serde_json::Value>,
    #[serde(default = "default_episodes")]
    pub n_episodes: usize,
    #[serde(default)]
    pub data_seed: u64,
    #[serde(default)]
    pub dataset: Option<PathBuf>,
    pub train: TrainConfig,
}

pub fn parse_task(value: &serde_json::Value) -> CliResult<TaskSpec> {
    let spec = match value {
        serde_json::Value::String(name) => TaskSpec::preset(name)?,
        other => TaskSpec::deserialize(other).map_err(|e| CliError::usage(format!("task: {e}")))?,
    };
    spec.validate()
        .map_err(|e| CliError::from(e).context("task"))?;
    Ok(spec)
}

impl TrainRunConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| CliError::usage(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.train
            .validate()
            .map_err(|e| CliError::field("train", e))?;
        match (&self.task, &self.dataset) {
            (None, None) => {
                return Err(CliError::usage(
                    "config: one of `task` or `dataset` is required",
                ))
            }
            (Some(t), _) => {
                parse_task(t)?;
            }
            _ => {}
        }
        if self.dataset.is_none() && self.n_episodes == 0 {
            return Err(CliError::usage("n_episodes must be >= 1"));
        }
        Ok(())
    }

    fn load_dataset(&self, base: &Path) -> CliResult<Dataset> {
        match &self.dataset {
            Some(p) => {
                let p = if p.is_relative() {
                    base.join(p)
                } else {
                    p.clone()
                };
                let ds = Dataset::load(&p).map_err(|e| CliError::from(e).context("dataset"))?;
                if let Some(t) = &self.task {
                    let spec = parse_task(t)?;
                    if spec != ds.provenance.task {
                        return Err(CliError::usage(
                            "dataset was recorded on a different task than `task`",
                        ));
                    }
                }
                Ok(ds)
            }
            None => {
                let spec = parse_task(self.task.as_ref().expect("validated"))?;
                Ok(generate_dataset(&spec, self.n_episodes, self.data_seed)?)
            }
        }
    }
}

/// Generates (or loads) demonstrations, fits a model, and writes the best
/// checkpoint, the loss history and a manifest. Returns the run directory.
pub fn cmd_train(config_path: &Path, out: Option<&Path>) -> CliResult<PathBuf> {
    let text = fs::read_to_string(config_path)
        .map_err(|e| CliError::usage(format!("{}: {e}", config_path.display())))?;
    let cfg = TrainRunConfig::from_json(&text)?;
    let base = config_path.parent().unwrap_or(Path::new("."));
    let dataset = cfg.load_dataset(base)?;

    let target = resolve_out_dir(out, &format!("train-{}", input_tag(&[text.as_bytes()])));
    let mut run = RunDir::create(target, "train")?;
    let (checkpoint, history) = fit(&dataset, &cfg.train)?;
    run.write(DATASET_FILE, dataset.to_jsonl().as_bytes())?;
    run.write(CHECKPOINT_FILE, checkpoint.to_text().as_bytes())?;
    run.write(HISTORY_FILE, history.to_csv().as_bytes())?;
    let echo = serde_json::json!({
        "run": cfg,
        "task": dataset.provenance.task,
        "best_epoch": history.best_epoch,
    });
    run.finish(echo, vec![cfg.train.seed, dataset.provenance.seed])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alpha_out_of_range_names_the_field() {
        let err = TrainRunConfig::from_json(
            r#"{"task": "two_mode_reach", "train": {"epochs": 5, "batch_size": 8, "seed": 0,
                "time_schedule": {"kind": "beta", "alpha": 1.5}}}"#,
        )
        .unwrap_err();
        assert_eq!(err.code, 2);
        assert!(
            err.message.contains("train.time_schedule.alpha"),
            "{}",
            err.message
        );
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = TrainRunConfig::from_json(
            r#"{"task": "two_mode_reach", "episodes": 3, "train": {"epochs": 5, "batch_size": 8, "seed": 0}}"#,
        )
        .unwrap_err();
        assert!(err.message.contains("episodes"), "{}", err.message);
        let err = TrainRunConfig::from_json(
            r#"{"task": {"name": "ring_mixture", "ring_radius": 2.0, "mode_offset": 0.5, "colour": 1},
                "train": {"epochs": 5, "batch_size": 8, "seed": 0}}"#,
        )
        .unwrap_err();
        assert!(err.message.starts_with("task"), "{}", err.message);
    }

    #[test]
    fn task_or_dataset_required() {
        let err =
            TrainRunConfig::from_json(r#"{"train": {"epochs": 5, "batch_size": 8, "seed": 0}}"#)
                .unwrap_err();
        assert_eq!(err.code, 2);
    }
}
