//! Command-line front end: `train`, `eval`, `gradcheck`, `modularity` and
//! `serve`.
//!
//! Usage errors and unreadable configs exit with status 2, failed runs with
//! status 1.

use std::ffi::OsString;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::agent::{QAgent, SplitAgent, VanillaAgent};
use crate::config::RunConfig;
use crate::env::EnvConfig;
use crate::harness::{self, AgentKind, GreedyPolicy, Policy, RandomPolicy};
use crate::nn;
use crate::server;

#[derive(Debug, Parser)]
#[command(name = "singulate", about = "Push-based target singulation: training, evaluation and live sessions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PolicyName {
    Random,
    Split,
    Dqn,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train an agent, then save it with its curve and a final evaluation.
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "split")]
        policy: PolicyName,
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's episode count.
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Evaluate a policy on freshly seeded scenes.
    Eval {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, value_enum)]
        policy: PolicyName,
        /// Agent directory written by `train`; required for learned policies.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Compare backprop with finite differences on random networks.
    Gradcheck {
        #[arg(long, default_value_t = 100)]
        nets: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train the two-primitive agent, then warm-started and scratch
    /// three-primitive agents on the complex clutter.
    Modularity {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Serve live episodes to the browser console.
    Serve {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 8765)]
        port: u16,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
}

/// A failure with its exit status.
struct Failure {
    code: i32,
    message: String,
}

fn fail(e: impl std::fmt::Display) -> Failure {
    Failure {
        code: 1,
        message: e.to_string(),
    }
}

fn load_config(path: Option<&Path>, seed: Option<u64>, episodes: Option<usize>) -> Result<RunConfig, Failure> {
    let mut cfg = match path {
        Some(p) => RunConfig::load(p).map_err(|e| Failure {
            code: 2,
            message: e.to_string(),
        })?,
        None => RunConfig::default(),
    };
    if let Some(s) = seed {
        cfg.train.seed = s;
        cfg.env.scene_cfg.seed = s;
    }
    if let Some(n) = episodes {
        cfg.train.episodes = n;
    }
    Ok(cfg)
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| fail(format!("{}: {e}", path.display())))
}

fn create_out(out: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(out).map_err(|e| fail(format!("{}: {e}", out.display())))
}

fn load_agent(policy: PolicyName, checkpoint: Option<&Path>) -> Result<Box<dyn QAgent + Send + Sync>, Failure> {
    let dir = checkpoint.ok_or_else(|| Failure {
        code: 2,
        message: "--checkpoint is required for learned policies".into(),
    })?;
    Ok(match policy {
        PolicyName::Split => Box::new(SplitAgent::load(dir).map_err(fail)?),
        PolicyName::Dqn => Box::new(VanillaAgent::load(dir).map_err(fail)?),
        PolicyName::Random => unreachable!("random policy has no checkpoint"),
    })
}

fn check_env(agent: &dyn QAgent, env: &EnvConfig) -> Result<(), Failure> {
    if agent.n_actions() != env.n_actions() || agent.w() != env.w {
        return Err(fail(format!(
            "checkpoint acts over {} actions (w = {}) but the config has {} (w = {})",
            agent.n_actions(),
            agent.w(),
            env.n_actions(),
            env.w
        )));
    }
    Ok(())
}

fn eval_and_record(policy: &dyn Policy, env: &EnvConfig, n: usize, seed: u64, out: &Path) -> Result<(), Failure> {
    let res = harness::evaluate(policy, env, n, seed).map_err(fail)?;
    let trace = out.join(format!("{}_trace.jsonl", res.report.policy));
    let f = File::create(&trace).map_err(|e| fail(format!("{}: {e}", trace.display())))?;
    harness::write_trace(BufWriter::new(f), &res.records).map_err(fail)?;
    harness::upsert_metrics_row(&out.join("metrics.csv"), &res.report).map_err(fail)?;
    let r = &res.report;
    println!(
        "{}: success {:.3} over {} episodes, actions {:.2} ± {:.2}, reward {:.2} ± {:.2}",
        r.policy, r.success_rate, r.n_episodes, r.mean_actions, r.std_actions, r.mean_reward, r.std_reward
    );
    Ok(())
}

fn execute(cmd: Command) -> Result<(), Failure> {
    match cmd {
        Command::Train {
            config,
            policy,
            seed,
            episodes,
            out,
        } => {
            let cfg = load_config(config.as_deref(), seed, episodes)?;
            let kind = match policy {
                PolicyName::Split => AgentKind::Split,
                PolicyName::Dqn => AgentKind::Vanilla,
                PolicyName::Random => {
                    return Err(Failure {
                        code: 2,
                        message: "the random policy has nothing to train".into(),
                    })
                }
            };
            create_out(&out)?;
            write(&out.join("config.cfg"), &cfg.render())?;
            let mut agent = kind.build(&cfg.env, &cfg.train);
            let curve = harness::train(agent.as_mut(), &cfg.env, &cfg.train).map_err(fail)?;
            agent.save(&out.join("agent")).map_err(fail)?;
            write(&out.join("curves.csv"), &harness::curves_csv(&[curve]))?;
            let greedy = GreedyPolicy::new(agent.as_ref());
            eval_and_record(&greedy, &cfg.env, cfg.train.eval_episodes, cfg.train.seed, &out)
        }
        Command::Eval {
            config,
            policy,
            checkpoint,
            episodes,
            seed,
            out,
        } => {
            let cfg = load_config(config.as_deref(), seed, None)?;
            let n = episodes.unwrap_or(cfg.train.eval_episodes);
            create_out(&out)?;
            if policy == PolicyName::Random {
                let p = RandomPolicy {
                    n_actions: cfg.env.n_actions(),
                };
                return eval_and_record(&p, &cfg.env, n, cfg.train.seed, &out);
            }
            let agent = load_agent(policy, checkpoint.as_deref())?;
            check_env(agent.as_ref(), &cfg.env)?;
            eval_and_record(&GreedyPolicy::new(agent.as_ref()), &cfg.env, n, cfg.train.seed, &out)
        }
        Command::Gradcheck { nets, seed } => {
            let r = nn::gradient_check(&[263, 100, 100, 1], nets, seed);
            println!(
                "max relative error {:.3e} over {} parameters of {} networks ({} kink crossings skipped)",
                r.max_rel_error, r.params_checked, r.nets, r.kinks_skipped
            );
            if r.max_rel_error < 1e-4 {
                Ok(())
            } else {
                Err(fail("gradient check failed"))
            }
        }
        Command::Modularity {
            config,
            seed,
            episodes,
            out,
        } => {
            let mut cfg = load_config(config.as_deref(), seed, episodes)?;
            if config.is_none() {
                cfg.env = EnvConfig::complex();
            }
            create_out(&out)?;
            let ckpt = out.join("splitdqn2");
            let base = harness::train_base(&cfg.env, &cfg.train, &ckpt).map_err(fail)?;
            let rep = harness::run_modularity_experiment(&cfg.env, &cfg.train, &ckpt).map_err(fail)?;
            write(
                &out.join("curves.csv"),
                &harness::curves_csv(&[base.curve, rep.warm.curve.clone(), rep.scratch.curve.clone()]),
            )?;
            write(
                &out.join("metrics.csv"),
                &harness::metrics_csv(&[rep.base.clone(), rep.warm.report.clone(), rep.scratch.report.clone()]),
            )?;
            let json = serde_json::to_string_pretty(&rep).map_err(fail)?;
            write(&out.join("modularity.json"), &(json + "\n"))?;
            println!(
                "warm start reproduces base Q-values to {:e}; epochs to reach {:.3}: warm {:?}, scratch {:?}",
                rep.probe_max_abs_diff, rep.level, rep.warm_epochs, rep.scratch_epochs
            );
            Ok(())
        }
        Command::Serve { config, port, seed, out } => {
            let cfg = load_config(config.as_deref(), seed, None)?;
            server::serve_session(port, &cfg.env, cfg.train.seed, &out).map_err(fail)
        }
    }
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match execute(cli.command) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
