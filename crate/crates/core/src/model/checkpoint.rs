//! Portable text checkpoints.
//!
//! ```text
//! flowdj-checkpoint
//! format_version: 1
//! digest: sha256:<hex of everything after the "---" line>
//! ---
//! arch: {...}
//! norm: {...}
//! config: {...}
//! seed: 7
//! adam: {...}
//! adam_step: 1200
//! section params
//! layer 0 weight 128x13
//! <one row per line, 17 significant digits>
//! layer 0 bias 128
//! ...
//! section adam_m
//! ...
//! section adam_v
//! ...
//! end
//! ```

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::dataset::NormStats;
use crate::error::{Error, Result};
use crate::io::{sha256_hex, write_atomic};

use super::network::{ArchMeta, LayerSlot, VelocityModel};
use super::optim::{AdamConfig, OptimiserState};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &str = "flowdj-checkpoint";
const SECTIONS: [&str; 3] = ["params", "adam_m", "adam_v"];

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: VelocityModel,
    pub optimiser: OptimiserState,
    pub norm: NormStats,
    /// Echo of the configuration that produced the weights.
    pub config: serde_json::Value,
    pub seed: u64,
}

fn json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string(value).expect("serialisable")
}

fn corrupt(msg: impl Into<String>) -> Error {
    Error::CorruptCheckpoint(msg.into())
}

fn write_flat(out: &mut String, name: &str, slots: &[LayerSlot], values: &[f64]) {
    let _ = writeln!(out, "section {name}");
    for (l, s) in slots.iter().enumerate() {
        let _ = writeln!(out, "layer {l} weight {}x{}", s.fan_out, s.fan_in);
        for row in values[s.weight_offset..s.weight_offset + s.weight_len()].chunks_exact(s.fan_in)
        {
            write_row(out, row);
        }
        let _ = writeln!(out, "layer {l} bias {}", s.fan_out);
        write_row(out, &values[s.bias_offset..s.bias_offset + s.fan_out]);
    }
}

fn write_row(out: &mut String, row: &[f64]) {
    for (i, x) in row.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{x:.16e}");
    }
    out.push('\n');
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
}

impl<'a> Lines<'a> {
    fn next(&mut self, what: &str) -> Result<&'a str> {
        self.inner
            .next()
            .map(|(_, l)| l)
            .ok_or_else(|| corrupt(format!("truncated before {what}")))
    }

    fn field(&mut self, key: &str) -> Result<&'a str> {
        let line = self.next(key)?;
        line.strip_prefix(key)
            .and_then(|r| r.strip_prefix(": "))
            .ok_or_else(|| corrupt(format!("expected `{key}: ...`, found `{line}`")))
    }

    fn expect(&mut self, exact: &str) -> Result<()> {
        let line = self.next(exact)?;
        if line != exact {
            return Err(corrupt(format!("expected `{exact}`, found `{line}`")));
        }
        Ok(())
    }
}

fn parse_row(line: &str, width: usize) -> Result<Vec<f64>> {
    let row = line
        .split(' ')
        .map(|tok| {
            tok.parse::<f64>()
                .map_err(|_| corrupt(format!("bad number `{tok}`")))
        })
        .collect::<Result<Vec<_>>>()?;
    if row.len() != width {
        return Err(corrupt(format!(
            "expected {width} values, found {}",
            row.len()
        )));
    }
    Ok(row)
}

fn read_flat(
    lines: &mut Lines<'_>,
    name: &str,
    slots: &[LayerSlot],
    total: usize,
) -> Result<Vec<f64>> {
    lines.expect(&format!("section {name}"))?;
    let mut values = Vec::with_capacity(total);
    for (l, s) in slots.iter().enumerate() {
        lines.expect(&format!("layer {l} weight {}x{}", s.fan_out, s.fan_in))?;
        for _ in 0..s.fan_out {
            values.extend(parse_row(lines.next("weight row")?, s.fan_in)?);
        }
        lines.expect(&format!("layer {l} bias {}", s.fan_out))?;
        values.extend(parse_row(lines.next("bias row")?, s.fan_out)?);
    }
    Ok(values)
}

impl Checkpoint {
    pub fn body_text(&self) -> String {
        let mut body = String::new();
        let _ = writeln!(body, "arch: {}", json(self.model.arch()));
        let _ = writeln!(body, "norm: {}", json(&self.norm));
        let _ = writeln!(body, "config: {}", self.config);
        let _ = writeln!(body, "seed: {}", self.seed);
        let _ = writeln!(body, "adam: {}", json(&self.optimiser.config));
        let _ = writeln!(body, "adam_step: {}", self.optimiser.step_count);
        let slots = self.model.slots();
        write_flat(&mut body, SECTIONS[0], slots, self.model.params());
        write_flat(&mut body, SECTIONS[1], slots, &self.optimiser.first_moment);
        write_flat(&mut body, SECTIONS[2], slots, &self.optimiser.second_moment);
        body.push_str("end\n");
        body
    }

    pub fn to_text(&self) -> String {
        let body = self.body_text();
        format!(
            "{MAGIC}\nformat_version: {CHECKPOINT_VERSION}\ndigest: sha256:{}\n---\n{body}",
            sha256_hex(body.as_bytes())
        )
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = Lines {
            inner: text.lines().enumerate(),
        };
        lines.expect(MAGIC)?;
        let version: u32 = lines
            .field("format_version")?
            .parse()
            .map_err(|_| corrupt("unreadable format_version"))?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                supported: CHECKPOINT_VERSION,
            });
        }
        let digest = lines
            .field("digest")?
            .strip_prefix("sha256:")
            .ok_or_else(|| corrupt("digest must be sha256"))?
            .to_string();
        let body_start = text
            .find("\n---\n")
            .ok_or_else(|| corrupt("missing header terminator"))?
            + 5;
        lines.expect("---")?;
        let body = &text[body_start..];
        if sha256_hex(body.as_bytes()) != digest {
            return Err(corrupt("integrity digest mismatch"));
        }

        let arch: ArchMeta = serde_json::from_str(lines.field("arch")?)
            .map_err(|e| corrupt(format!("arch: {e}")))?;
        arch.validate().map_err(|e| corrupt(format!("arch: {e}")))?;
        let norm: NormStats = serde_json::from_str(lines.field("norm")?)
            .map_err(|e| corrupt(format!("norm: {e}")))?;
        let config: serde_json::Value = serde_json::from_str(lines.field("config")?)
            .map_err(|e| corrupt(format!("config: {e}")))?;
        let seed: u64 = lines
            .field("seed")?
            .parse()
            .map_err(|_| corrupt("unreadable seed"))?;
        let adam: AdamConfig = serde_json::from_str(lines.field("adam")?)
            .map_err(|e| corrupt(format!("adam: {e}")))?;
        let step_count: u64 = lines
            .field("adam_step")?
            .parse()
            .map_err(|_| corrupt("unreadable adam_step"))?;

        let total = arch.num_params();
        let template = VelocityModel::from_params(arch.clone(), vec![0.0; total])?;
        let slots = template.slots().to_vec();
        let params = read_flat(&mut lines, SECTIONS[0], &slots, total)?;
        let first_moment = read_flat(&mut lines, SECTIONS[1], &slots, total)?;
        let second_moment = read_flat(&mut lines, SECTIONS[2], &slots, total)?;
        lines.expect("end")?;
        if lines.inner.next().is_some() {
            return Err(corrupt("trailing data after `end`"));
        }
        if norm.action_mean.len() != arch.action_dim || norm.obs_mean.len() != arch.obs_dim {
            return Err(corrupt("normalisation stats do not match architecture"));
        }
        let model = VelocityModel::from_params(arch, params).map_err(|e| corrupt(e.to_string()))?;
        Ok(Self {
            model,
            optimiser: OptimiserState {
                config: adam,
                first_moment,
                second_moment,
                step_count,
            },
            norm,
            config,
            seed,
        })
    }

    /// Atomic write (temp file + rename).
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.to_text().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        let text = String::from_utf8(bytes).map_err(|_| corrupt("not valid UTF-8"))?;
        Self::from_text(&text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sample_checkpoint() -> Checkpoint {
        let model = VelocityModel::init(2, 3, &[5, 4], 21).unwrap();
        let mut optimiser = OptimiserState::new(AdamConfig::default(), model.num_params());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for m in optimiser.first_moment.iter_mut() {
            *m = rng.random_range(-1e-3..1e-3);
        }
        for v in optimiser.second_moment.iter_mut() {
            *v = rng.random_range(0.0..1e-6);
        }
        optimiser.step_count = 42;
        Checkpoint {
            model,
            optimiser,
            norm: NormStats {
                obs_mean: vec![0.1, 0.2, 1.0 / 3.0],
                obs_std: vec![1.0, 2.0, 0.7],
                action_mean: vec![-0.25, 0.5],
                action_std: vec![0.3, 0.9],
            },
            config: serde_json::json!({"epochs": 10, "time_schedule": {"kind": "beta", "alpha": 0.2}}),
            seed: 99,
        }
    }

    #[test]
    fn text_round_trip_is_byte_stable() {
        let ckpt = sample_checkpoint();
        let text = ckpt.to_text();
        let back = Checkpoint::from_text(&text).unwrap();
        assert_eq!(back, ckpt);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn save_and_load_preserve_evaluations() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.ckpt");
        let ckpt = sample_checkpoint();
        ckpt.save(&path).unwrap();
        let back = Checkpoint::load(&path).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut max_diff = 0.0f64;
        for _ in 0..100 {
            let a: Vec<f64> = (0..2).map(|_| rng.random_range(-3.0..3.0)).collect();
            let o: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
            let t = rng.random_range(0.0..=1.0);
            let x = ckpt.model.eval(&a, t, &o).unwrap();
            let y = back.model.eval(&a, t, &o).unwrap();
            for (p, q) in x.iter().zip(&y) {
                max_diff = max_diff.max((p - q).abs());
            }
        }
        assert_eq!(max_diff, 0.0);
    }

    #[test]
    fn unsupported_version() {
        let text =
            sample_checkpoint()
                .to_text()
                .replacen("format_version: 1", "format_version: 999", 1);
        assert!(matches!(
            Checkpoint::from_text(&text),
            Err(Error::UnsupportedVersion { found: 999, .. })
        ));
    }

    #[test]
    fn flipped_byte_is_detected() {
        let text = sample_checkpoint().to_text();
        let mut bytes = text.into_bytes();
        let pos = bytes.len() / 2;
        bytes[pos] = if bytes[pos] == b'1' { b'2' } else { b'1' };
        let text = String::from_utf8(bytes).unwrap();
        assert!(matches!(
            Checkpoint::from_text(&text),
            Err(Error::CorruptCheckpoint(_))
        ));
    }

    #[test]
    fn truncation_is_detected() {
        let text = sample_checkpoint().to_text();
        for cut in [10, 60, text.len() / 3, text.len() - 5] {
            assert!(
                matches!(
                    Checkpoint::from_text(&text[..cut]),
                    Err(Error::CorruptCheckpoint(_))
                ),
                "cut at {cut}"
            );
        }
    }

    #[test]
    fn weights_use_seventeen_significant_digits() {
        let text = sample_checkpoint().to_text();
        let row = text
            .lines()
            .skip_while(|l| !l.starts_with("layer 0 weight"))
            .nth(1)
            .unwrap();
        let tok = row.split(' ').next().unwrap();
        let mantissa = tok.split('e').next().unwrap().trim_start_matches('-');
        assert_eq!(mantissa.chars().filter(|c| c.is_ascii_digit()).count(), 17);
    }
}
