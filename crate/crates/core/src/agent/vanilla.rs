use std::path::Path;

use rand::{Rng, RngCore};

use super::{
    read_manifest, write_manifest, AgentConfig, AgentError, EpsilonSchedule, Manifest, QAgent,
    ReplayBuffer, ScheduleState, Transition,
};
use crate::features::{State, FEATURE_LEN};
use crate::nn::{self, AdamState, Gradients, Mlp};

/// Monolithic DQN: the concatenated state in, one Q-value per action out.
#[derive(Clone, Debug)]
pub struct VanillaAgent {
    pub online: Mlp,
    pub target: Mlp,
    pub adam: AdamState,
    pub buffer: ReplayBuffer,
    pub w: usize,
    pub n_actions: usize,
    pub cfg: AgentConfig,
    pub schedule: EpsilonSchedule,
    pub global_step: u64,
}

impl VanillaAgent {
    pub fn new<R: Rng + ?Sized>(n_primitives: usize, w: usize, cfg: AgentConfig, rng: &mut R) -> Self {
        let n_actions = n_primitives * w;
        let mut dims = vec![w * FEATURE_LEN];
        dims.extend(&cfg.vanilla_hidden);
        dims.push(n_actions);
        let online = Mlp::init(&dims, rng);
        Self {
            target: online.clone(),
            adam: AdamState::new(&online, cfg.lr),
            online,
            buffer: ReplayBuffer::new(cfg.buffer_capacity),
            w,
            n_actions,
            cfg,
            schedule: EpsilonSchedule::default(),
            global_step: 0,
        }
    }

    pub fn td_targets(&self, batch: &[&Transition]) -> Vec<f64> {
        assert!(!batch.is_empty(), "empty batch");
        batch
            .iter()
            .map(|t| {
                if t.terminal {
                    t.reward
                } else {
                    let q = self.target.predict(&t.next_state.concatenated());
                    t.reward + self.cfg.gamma * q.into_iter().fold(f64::NEG_INFINITY, f64::max)
                }
            })
            .collect()
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<(), AgentError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let files = vec!["dqn.online.sqn1".to_string(), "dqn.target.sqn1".to_string()];
        for (file, net, adam) in [
            (&files[0], &self.online, self.adam.clone()),
            (&files[1], &self.target, AdamState::new(&self.target, self.adam.lr)),
        ] {
            let path = dir.join(file);
            nn::save_checkpoint(net, &adam, &path).map_err(|source| AgentError::Checkpoint { path, source })?;
        }
        write_manifest(
            dir,
            &Manifest {
                kind: "vanilla".into(),
                w: self.w,
                primitives: vec!["all".into()],
                files,
                config: self.cfg.clone(),
                schedule: ScheduleState {
                    start: self.schedule.start,
                    end: self.schedule.end,
                    horizon: self.schedule.horizon,
                    global_step: self.global_step,
                },
            },
        )
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<VanillaAgent, AgentError> {
        let dir = dir.as_ref();
        let m = read_manifest(dir)?;
        if m.kind != "vanilla" || m.files.len() != 2 {
            return Err(AgentError::Manifest {
                path: dir.join(super::MANIFEST_FILE),
                message: "not a vanilla agent manifest".into(),
            });
        }
        let load = |f: &String| {
            let path = dir.join(f);
            nn::load_checkpoint(&path).map_err(|source| AgentError::Checkpoint { path, source })
        };
        let (online, adam) = load(&m.files[0])?;
        let (target, _) = load(&m.files[1])?;
        if online.input_dim() != m.w * FEATURE_LEN || online.dims() != target.dims() {
            return Err(AgentError::Shape {
                expected: vec![m.w * FEATURE_LEN],
                found: online.dims(),
            });
        }
        Ok(VanillaAgent {
            n_actions: online.output_dim(),
            online,
            target,
            adam,
            buffer: ReplayBuffer::new(m.config.buffer_capacity),
            w: m.w,
            cfg: m.config,
            schedule: EpsilonSchedule {
                start: m.schedule.start,
                end: m.schedule.end,
                horizon: m.schedule.horizon,
            },
            global_step: m.schedule.global_step,
        })
    }
}

impl QAgent for VanillaAgent {
    fn name(&self) -> &str {
        "DQN"
    }

    fn w(&self) -> usize {
        self.w
    }

    fn n_actions(&self) -> usize {
        self.n_actions
    }

    fn q_values(&self, state: &State) -> Vec<f64> {
        self.online.predict(&state.concatenated())
    }

    fn store(&mut self, t: Transition) {
        self.buffer.push(t);
    }

    fn train_step(&mut self, _explored_u: usize, rng: &mut dyn RngCore) -> Option<f64> {
        let k = self.cfg.batch_size;
        if self.buffer.len() < k {
            return None;
        }
        let batch = self.buffer.sample(k, rng);
        let targets = self.td_targets(&batch);
        let mut grads = Gradients::zeros_like(&self.online);
        let mut loss = 0.0;
        let mut d_out = vec![0.0; self.n_actions];
        for (t, &y) in batch.iter().zip(&targets) {
            let (q, cache) = self.online.forward(&t.state.concatenated());
            let err = q[t.action] - y;
            loss += err * err;
            d_out.iter_mut().for_each(|d| *d = 0.0);
            d_out[t.action] = 2.0 * err / k as f64;
            self.online.backward_into(&cache, &d_out, &mut grads);
        }
        nn::adam_step(&mut self.online, &grads, &mut self.adam);
        nn::soft_update(&mut self.target, &self.online, self.cfg.tau);
        Some(loss / k as f64)
    }

    fn buffer_lens(&self) -> Vec<usize> {
        vec![self.buffer.len()]
    }

    fn schedule(&self) -> &EpsilonSchedule {
        &self.schedule
    }

    fn set_schedule(&mut self, schedule: EpsilonSchedule) {
        self.schedule = schedule;
    }

    fn global_step(&self) -> u64 {
        self.global_step
    }

    fn set_global_step(&mut self, t: u64) {
        self.global_step = t;
    }

    fn save(&self, dir: &Path) -> Result<(), AgentError> {
        VanillaAgent::save(self, dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shapes_and_bias_outputs() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut a = VanillaAgent::new(2, 8, AgentConfig::default(), &mut rng);
        assert_eq!(a.online.input_dim(), 2104);
        assert_eq!(a.online.output_dim(), 16);
        assert_eq!(a.online.dims(), vec![2104, 140, 140, 16]);

        a.online = Mlp::zeros(&[2104, 140, 140, 16]);
        for (i, b) in a.online.layers[2].biases.iter_mut().enumerate() {
            *b = i as f64 * 0.5;
        }
        let s = State {
            features: vec![FeatureVector(vec![0.3; FEATURE_LEN]); 8],
        };
        let q = a.q_values(&s);
        assert_eq!(q, (0..16).map(|i| i as f64 * 0.5).collect::<Vec<_>>());
        assert_eq!(a.q_values(&s), q);
        assert_eq!(a.greedy_action(&s), 15);
    }
}
