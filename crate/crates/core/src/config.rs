//! `key = value` run configuration files.
//!
//! Keys mirror the field names of [`EnvConfig`] (including its feature and
//! scene settings) and [`TrainConfig`]. Blank lines and `#` comments are
//! ignored; unknown or repeated keys are errors. `preset = complex` selects
//! the complex clutter defaults before any other key is applied, wherever
//! it appears in the file.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::env::EnvConfig;
use crate::harness::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// Everything a CLI run needs.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct RunConfig {
    pub env: EnvConfig,
    pub train: TrainConfig,
}

fn value<T: FromStr>(raw: &str) -> Result<T, String> {
    raw.parse().map_err(|_| format!("cannot parse {raw:?}"))
}

fn list<T: FromStr>(raw: &str) -> Result<Vec<T>, String> {
    raw.split(',').map(|v| value(v.trim())).collect()
}

fn triple(raw: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = list(raw)?;
    v.try_into().map_err(|_| "expected three comma-separated numbers".to_string())
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl RunConfig {
    fn set(&mut self, key: &str, raw: &str) -> Result<(), String> {
        let env = &mut self.env;
        let feat = &mut env.feature_cfg;
        let scene = &mut env.scene_cfg;
        let train = &mut self.train;
        match key {
            "w" => {
                env.w = value(raw)?;
                feat.w = env.w;
            }
            "push_distance" => env.push_distance = value(raw)?,
            "epsilon_offset" => env.epsilon_offset = value(raw)?,
            "d_sing" => env.d_sing = value(raw)?,
            "t_max" => env.t_max = value(raw)?,
            "alpha" => env.alpha = value(raw)?,
            "extra_primitive_enabled" => env.extra_primitive_enabled = value(raw)?,
            "extra_penalty" => env.extra_penalty = value(raw)?,
            "finger_radius" => env.finger_radius = value(raw)?,
            "grid_n" => feat.grid_n = value(raw)?,
            "cell_size" => feat.cell_size = value(raw)?,
            "region_n" => feat.region_n = value(raw)?,
            "cells_per_region" => feat.cells_per_region = value(raw)?,
            "z_max" => feat.z_max = value(raw)?,
            "b_max" => feat.b_max = value(raw)?,
            "sd_max" => feat.sd_max = value(raw)?,
            "n_obstacles_min" => scene.n_obstacles_min = value(raw)?,
            "n_obstacles_max" => scene.n_obstacles_max = value(raw)?,
            "box_min" => scene.box_min = triple(raw)?,
            "box_max" => scene.box_max = triple(raw)?,
            "equal_height_prob" => scene.equal_height_prob = value(raw)?,
            "workspace_half" => scene.workspace_half = value(raw)?,
            "target_spread" => scene.target_spread = value(raw)?,
            "episodes" => train.episodes = value(raw)?,
            "epoch_train_episodes" => train.epoch_train_episodes = value(raw)?,
            "epoch_test_episodes" => train.epoch_test_episodes = value(raw)?,
            "preload" => train.preload = value(raw)?,
            "eval_episodes" => train.eval_episodes = value(raw)?,
            "seed" => {
                train.seed = value(raw)?;
                scene.seed = train.seed;
            }
            "batch_size" => train.agent.batch_size = value(raw)?,
            "gamma" => train.agent.gamma = value(raw)?,
            "lr" => train.agent.lr = value(raw)?,
            "tau" => train.agent.tau = value(raw)?,
            "buffer_capacity" => train.agent.buffer_capacity = value(raw)?,
            "split_hidden" => train.agent.split_hidden = list(raw)?,
            "vanilla_hidden" => train.agent.vanilla_hidden = list(raw)?,
            "eps_start" => train.schedule.start = value(raw)?,
            "eps_end" => train.schedule.end = value(raw)?,
            "eps_horizon" => train.schedule.horizon = value(raw)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Parses a config file body and validates the result.
    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let mut entries = Vec::new();
        let mut cfg = RunConfig::default();
        for (i, raw_line) in text.lines().enumerate() {
            let line = raw_line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| ConfigError::Parse { line: i + 1, message };
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| parse_err("expected key = value".into()))?;
            let (k, v) = (k.trim(), v.trim());
            if entries.iter().any(|(_, key, _): &(usize, &str, &str)| *key == k) {
                return Err(parse_err(format!("duplicate key {k:?}")));
            }
            if k == "preset" {
                cfg.env = match v {
                    "default" => EnvConfig::default(),
                    "complex" => EnvConfig::complex(),
                    other => return Err(parse_err(format!("unknown preset {other:?}"))),
                };
            }
            entries.push((i + 1, k, v));
        }
        for (line, k, v) in entries.into_iter().filter(|e| e.1 != "preset") {
            cfg.set(k, v).map_err(|message| ConfigError::Parse { line, message })?;
        }
        cfg.env.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        cfg.train.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    /// Every key with its current value; [`RunConfig::parse`] reads it back
    /// to an equal config.
    pub fn render(&self) -> String {
        let (e, f, s, t) = (&self.env, &self.env.feature_cfg, &self.env.scene_cfg, &self.train);
        let mut out = String::new();
        let mut kv = |k: &str, v: String| writeln!(out, "{k} = {v}").expect("string write");
        kv("w", e.w.to_string());
        kv("push_distance", e.push_distance.to_string());
        kv("epsilon_offset", e.epsilon_offset.to_string());
        kv("d_sing", e.d_sing.to_string());
        kv("t_max", e.t_max.to_string());
        kv("alpha", e.alpha.to_string());
        kv("extra_primitive_enabled", e.extra_primitive_enabled.to_string());
        kv("extra_penalty", e.extra_penalty.to_string());
        kv("finger_radius", e.finger_radius.to_string());
        kv("grid_n", f.grid_n.to_string());
        kv("cell_size", f.cell_size.to_string());
        kv("region_n", f.region_n.to_string());
        kv("cells_per_region", f.cells_per_region.to_string());
        kv("z_max", f.z_max.to_string());
        kv("b_max", f.b_max.to_string());
        kv("sd_max", f.sd_max.to_string());
        kv("n_obstacles_min", s.n_obstacles_min.to_string());
        kv("n_obstacles_max", s.n_obstacles_max.to_string());
        kv("box_min", join(&s.box_min));
        kv("box_max", join(&s.box_max));
        kv("equal_height_prob", s.equal_height_prob.to_string());
        kv("workspace_half", s.workspace_half.to_string());
        kv("target_spread", s.target_spread.to_string());
        kv("episodes", t.episodes.to_string());
        kv("epoch_train_episodes", t.epoch_train_episodes.to_string());
        kv("epoch_test_episodes", t.epoch_test_episodes.to_string());
        kv("preload", t.preload.to_string());
        kv("eval_episodes", t.eval_episodes.to_string());
        kv("seed", t.seed.to_string());
        kv("batch_size", t.agent.batch_size.to_string());
        kv("gamma", t.agent.gamma.to_string());
        kv("lr", t.agent.lr.to_string());
        kv("tau", t.agent.tau.to_string());
        kv("buffer_capacity", t.agent.buffer_capacity.to_string());
        kv("split_hidden", join(&t.agent.split_hidden));
        kv("vanilla_hidden", join(&t.agent.vanilla_hidden));
        kv("eps_start", t.schedule.start.to_string());
        kv("eps_end", t.schedule.end.to_string());
        kv("eps_horizon", t.schedule.horizon.to_string());
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        assert_eq!(RunConfig::parse("# nothing\n\n").unwrap(), RunConfig::default());
    }

    #[test]
    fn keys_and_comments() {
        let cfg = RunConfig::parse("w = 4 # orientations\nn_obstacles_min = 2\nn_obstacles_max=4\nbox_max = 2, 2, 1.5\nsplit_hidden = 32,16\n").unwrap();
        assert_eq!(cfg.env.w, 4);
        assert_eq!(cfg.env.feature_cfg.w, 4);
        assert_eq!(cfg.env.scene_cfg.n_obstacles_max, 4);
        assert_eq!(cfg.env.scene_cfg.box_max, [2.0, 2.0, 1.5]);
        assert_eq!(cfg.train.agent.split_hidden, vec![32, 16]);
    }

    #[test]
    fn preset_applies_first() {
        let cfg = RunConfig::parse("n_obstacles_max = 10\npreset = complex\n").unwrap();
        assert_eq!(cfg.env.scene_cfg.n_obstacles_max, 10);
        assert_eq!(cfg.env.scene_cfg.equal_height_prob, 0.2);
    }

    #[test]
    fn errors() {
        let line_of = |text: &str| match RunConfig::parse(text) {
            Err(ConfigError::Parse { line, .. }) => line,
            other => panic!("expected parse error, got {other:?}"),
        };
        assert_eq!(line_of("w = 4\nbogus = 1\n"), 2);
        assert_eq!(line_of("w = four\n"), 1);
        assert_eq!(line_of("w\n"), 1);
        assert_eq!(line_of("w = 4\nw = 8\n"), 2);
        assert_eq!(line_of("box_min = 1,2\n"), 1);
        assert!(matches!(RunConfig::parse("t_max = 0\n"), Err(ConfigError::Invalid(_))));
        assert!(matches!(
            RunConfig::load(Path::new("/nonexistent/x.cfg")),
            Err(ConfigError::Io { .. })
        ));
    }

    #[test]
    fn render_round_trips() {
        let mut cfg = RunConfig::parse("preset = complex\nw = 4\nlr = 0.0003\neps_horizon = 1500\n").unwrap();
        cfg.env.scene_cfg.target_spread = 1.0 / 3.0;
        assert_eq!(RunConfig::parse(&cfg.render()).unwrap(), cfg);
    }
}
