//! Demonstration data: `(obs, action)` rows grouped into episodes.
//!
//! On disk a dataset is line-delimited JSON. The first line is a header with
//! the task provenance, every following line is one step:
//!
//! ```text
//! {"format":"flowdj-dataset","version":1,"obs_dim":2,"action_dim":2,"provenance":{...}}
//! {"episode":0,"step":0,"obs":[0.1,-0.2],"action":[0.05,0.25]}
//! ```

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::bench::TaskSpec;
use crate::error::{Error, Result};

pub const DATASET_FORMAT: &str = "flowdj-dataset";
pub const DATASET_VERSION: u32 = 1;

/// Row-major `(obs, action)` pairs with fixed widths.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    obs_dim: usize,
    action_dim: usize,
    obs: Vec<f64>,
    actions: Vec<f64>,
}

impl Table {
    pub fn new(obs_dim: usize, action_dim: usize) -> Self {
        Self {
            obs_dim,
            action_dim,
            obs: Vec::new(),
            actions: Vec::new(),
        }
    }

    pub fn push(&mut self, obs: &[f64], action: &[f64]) {
        assert_eq!(obs.len(), self.obs_dim, "observation width");
        assert_eq!(action.len(), self.action_dim, "action width");
        self.obs.extend_from_slice(obs);
        self.actions.extend_from_slice(action);
    }

    pub fn len(&self) -> usize {
        self.actions.len().checked_div(self.action_dim).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn obs(&self, i: usize) -> &[f64] {
        &self.obs[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn action(&self, i: usize) -> &[f64] {
        &self.actions[i * self.action_dim..(i + 1) * self.action_dim]
    }

    /// All actions as one row-major matrix.
    pub fn actions(&self) -> &[f64] {
        &self.actions
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub task: TaskSpec,
    pub n_episodes: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub provenance: Provenance,
    episode: Vec<u32>,
    step: Vec<u32>,
    table: Table,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    obs_dim: usize,
    action_dim: usize,
    provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    episode: u32,
    step: u32,
    obs: Vec<f64>,
    action: Vec<f64>,
}

impl Dataset {
    pub fn new(provenance: Provenance, obs_dim: usize, action_dim: usize) -> Self {
        Self {
            provenance,
            episode: Vec::new(),
            step: Vec::new(),
            table: Table::new(obs_dim, action_dim),
        }
    }

    /// Appends a step, enforcing dense ascending episode/step ids and finite values.
    pub fn push(&mut self, episode: u32, step: u32, obs: &[f64], action: &[f64]) -> Result<()> {
        if obs.len() != self.table.obs_dim || action.len() != self.table.action_dim {
            return Err(Error::MalformedDataset(format!(
                "row widths ({}, {}) do not match dataset ({}, {})",
                obs.len(),
                action.len(),
                self.table.obs_dim,
                self.table.action_dim
            )));
        }
        if obs.iter().chain(action).any(|x| !x.is_finite()) {
            return Err(Error::MalformedDataset(format!(
                "non-finite value at episode {episode} step {step}"
            )));
        }
        let ok = match (self.episode.last(), self.step.last()) {
            (None, _) => episode == 0 && step == 0,
            (Some(&e), Some(&s)) => {
                (episode == e && step == s + 1) || (episode == e + 1 && step == 0)
            }
            _ => unreachable!(),
        };
        if !ok {
            return Err(Error::MalformedDataset(format!(
                "episode/step ids must be dense and ascending, got ({episode}, {step})"
            )));
        }
        self.episode.push(episode);
        self.step.push(step);
        self.table.push(obs, action);
        Ok(())
    }

    pub fn table(&self) -> &Table {
        &self.table
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn n_episodes(&self) -> usize {
        self.episode.last().map_or(0, |&e| e as usize + 1)
    }

    pub fn episode_of(&self, row: usize) -> u32 {
        self.episode[row]
    }

    pub fn step_of(&self, row: usize) -> u32 {
        self.step[row]
    }

    /// Tail split by episode: the last `round(fraction * n_episodes)` episodes
    /// are held out, always leaving at least one training episode.
    pub fn split_by_episode(&self, fraction: f64) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&fraction) {
            return Err(Error::invalid(format!(
                "validation fraction must be in [0, 1), got {fraction}"
            )));
        }
        let n_eps = self.n_episodes();
        if n_eps == 0 {
            return Err(Error::invalid("dataset is empty"));
        }
        let n_val = ((fraction * n_eps as f64).round() as usize).min(n_eps - 1);
        let first_val = (n_eps - n_val) as u32;
        let mut train = Dataset::new(
            self.provenance.clone(),
            self.table.obs_dim,
            self.table.action_dim,
        );
        let mut val = train.clone();
        for row in 0..self.len() {
            let (e, s) = (self.episode[row], self.step[row]);
            let (obs, act) = (self.table.obs(row), self.table.action(row));
            if e < first_val {
                train.push(e, s, obs, act)?;
            } else {
                val.push(e - first_val, s, obs, act)?;
            }
        }
        Ok((train, val))
    }

    pub fn to_jsonl(&self) -> String {
        let header = Header {
            format: DATASET_FORMAT.to_string(),
            version: DATASET_VERSION,
            obs_dim: self.table.obs_dim,
            action_dim: self.table.action_dim,
            provenance: self.provenance.clone(),
        };
        let mut out = serde_json::to_string(&header).expect("header serialises");
        out.push('\n');
        for row in 0..self.len() {
            let rec = Record {
                episode: self.episode[row],
                step: self.step[row],
                obs: self.table.obs(row).to_vec(),
                action: self.table.action(row).to_vec(),
            };
            out.push_str(&serde_json::to_string(&rec).expect("record serialises"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_jsonl().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read(BufReader::new(file))
    }

    pub fn read<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = reader.lines().enumerate();
        let (_, first) = lines
            .next()
            .ok_or_else(|| Error::MalformedDataset("missing header line".into()))?;
        let first = first.map_err(|e| Error::MalformedDataset(e.to_string()))?;
        let header: Header = serde_json::from_str(&first)
            .map_err(|e| Error::MalformedDataset(format!("header: {e}")))?;
        if header.format != DATASET_FORMAT || header.version != DATASET_VERSION {
            return Err(Error::MalformedDataset(format!(
                "unsupported dataset format {} v{}",
                header.format, header.version
            )));
        }
        let mut ds = Dataset::new(header.provenance, header.obs_dim, header.action_dim);
        for (lineno, line) in lines {
            let line = line.map_err(|e| Error::MalformedDataset(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line)
                .map_err(|e| Error::MalformedDataset(format!("line {}: {e}", lineno + 1)))?;
            ds.push(rec.episode, rec.step, &rec.obs, &rec.action)?;
        }
        Ok(ds)
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(self.to_jsonl().as_bytes())
    }
}

/// Per-dimension z-score statistics for observations and actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NormStats {
    pub obs_mean: Vec<f64>,
    pub obs_std: Vec<f64>,
    pub action_mean: Vec<f64>,
    pub action_std: Vec<f64>,
}

const MIN_STD: f64 = 1e-8;

fn column_stats(data: &[f64], width: usize) -> (Vec<f64>, Vec<f64>) {
    let n = data.len().checked_div(width).unwrap_or(0);
    let mut mean = vec![0.0; width];
    let mut var = vec![0.0; width];
    if n == 0 {
        return (mean, vec![1.0; width]);
    }
    for row in data.chunks_exact(width) {
        for (m, x) in mean.iter_mut().zip(row) {
            *m += x;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    for row in data.chunks_exact(width) {
        for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let std = var
        .into_iter()
        .map(|v| {
            let s = (v / n as f64).sqrt();
            if s < MIN_STD {
                1.0
            } else {
                s
            }
        })
        .collect();
    (mean, std)
}

impl NormStats {
    pub fn identity(obs_dim: usize, action_dim: usize) -> Self {
        Self {
            obs_mean: vec![0.0; obs_dim],
            obs_std: vec![1.0; obs_dim],
            action_mean: vec![0.0; action_dim],
            action_std: vec![1.0; action_dim],
        }
    }

    /// Population statistics; dimensions with (near) zero spread get std 1.
    pub fn compute(table: &Table) -> Self {
        let (obs_mean, obs_std) = column_stats(&table.obs, table.obs_dim);
        let (action_mean, action_std) = column_stats(&table.actions, table.action_dim);
        Self {
            obs_mean,
            obs_std,
            action_mean,
            action_std,
        }
    }

    pub fn normalise_obs(&self, obs: &[f64]) -> Vec<f64> {
        obs.iter()
            .zip(self.obs_mean.iter().zip(&self.obs_std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    pub fn normalise_action(&self, action: &[f64]) -> Vec<f64> {
        action
            .iter()
            .zip(self.action_mean.iter().zip(&self.action_std))
            .map(|(x, (m, s))| (x - m) / s)
            .collect()
    }

    pub fn denormalise_action(&self, action: &[f64]) -> Vec<f64> {
        action
            .iter()
            .zip(self.action_mean.iter().zip(&self.action_std))
            .map(|(x, (m, s))| x * s + m)
            .collect()
    }

    pub fn normalise_table(&self, table: &Table) -> Table {
        let mut out = Table::new(table.obs_dim, table.action_dim);
        for i in 0..table.len() {
            out.push(
                &self.normalise_obs(table.obs(i)),
                &self.normalise_action(table.action(i)),
            );
        }
        out
    }
}
