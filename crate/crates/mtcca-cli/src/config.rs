//! Run configuration and command-line parsing.

use std::path::PathBuf;

use mtcca::param_select::SelectConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Analyze,
    Graph,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MtFamily {
    Identity,
    Exponential,
    Gaussian,
}

impl MtFamily {
    pub fn name(&self) -> &'static str {
        match self {
            MtFamily::Identity => "identity",
            MtFamily::Exponential => "exponential",
            MtFamily::Gaussian => "gaussian",
        }
    }
}

/// Parsed invocation. Every numeric knob has a reproducible default; all
/// randomness flows from `seed`.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub command: Command,
    pub mt_family: MtFamily,
    /// Positional inputs: model name for `simulate`, CSV paths otherwise.
    pub inputs: Vec<String>,
    pub n_samples: usize,
    pub n_trials: usize,
    pub m_permutations: usize,
    pub alpha: f64,
    pub lambda: f64,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub n_starts: usize,
    pub max_iters: usize,
    pub tol: f64,
    /// Full-scale mode: raises trials and permutations to 1000 each.
    pub full_scale: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            command: Command::Analyze,
            mt_family: MtFamily::Gaussian,
            inputs: Vec::new(),
            n_samples: 1000,
            n_trials: 100,
            m_permutations: 200,
            alpha: 0.01,
            lambda: 0.5,
            seed: 0,
            out: None,
            n_starts: 8,
            max_iters: 200,
            tol: 1e-6,
            full_scale: false,
        }
    }
}

impl RunConfig {
    pub fn select_config(&self) -> SelectConfig {
        SelectConfig {
            n_starts: self.n_starts,
            max_iters: self.max_iters,
            tol: self.tol,
            ..SelectConfig::default()
        }
    }

    /// Effective counts after the `--full-scale` switch.
    pub fn effective_trials(&self) -> usize {
        if self.full_scale {
            1000
        } else {
            self.n_trials
        }
    }

    pub fn effective_permutations(&self) -> usize {
        if self.full_scale {
            1000
        } else {
            self.m_permutations
        }
    }

    fn validate(&self) -> Result<(), String> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(format!("--alpha must lie in (0, 1), got {}", self.alpha));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(format!("--lambda must lie in [0, 1], got {}", self.lambda));
        }
        for (name, v) in [
            ("--samples", self.n_samples),
            ("--trials", self.n_trials),
            ("--perms", self.m_permutations),
            ("--starts", self.n_starts),
            ("--iters", self.max_iters),
        ] {
            if v == 0 {
                return Err(format!("{name} must be positive"));
            }
        }
        if self.tol.is_nan() || self.tol <= 0.0 {
            return Err(format!("--tol must be positive, got {}", self.tol));
        }
        Ok(())
    }
}

pub const USAGE: &str = "\
usage: mtcca <command> [inputs..] [flags]

commands:
  simulate <example1|example2|null>   Monte-Carlo study of a built-in model
  analyze  <x.csv> [y.csv]            fit one dataset and test significance
  graph    <a.csv> <b.csv> [c.csv..]  pairwise first-order dependency graph

flags:
  --mt <identity|exponential|gaussian>   transform family (default gaussian)
  --samples <n>    sample size for simulate (default 1000)
  --trials <n>     Monte-Carlo trials (default 100)
  --perms <n>      permutations per significance test (default 200)
  --alpha <a>      significance level in (0,1) (default 0.01)
  --lambda <l>     graph edge threshold in [0,1] (default 0.5)
  --seed <s>       master seed (default 0)
  --out <path>     write the JSON report here instead of stdout
  --starts <n>     ascent starts (default 8)
  --iters <n>      ascent iteration cap (default 200)
  --tol <t>        ascent step tolerance (default 1e-6)
  --full-scale     large run: 1000 trials, 1000 permutations
";

/// Parses argv (without the program name).
pub fn parse_args(args: &[String]) -> Result<RunConfig, String> {
    let mut config = RunConfig::default();
    let mut it = args.iter().peekable();
    let command = it.next().ok_or_else(|| USAGE.to_string())?;
    config.command = match command.as_str() {
        "simulate" => Command::Simulate,
        "analyze" => Command::Analyze,
        "graph" => Command::Graph,
        other => return Err(format!("unknown command `{other}`\n\n{USAGE}")),
    };

    while let Some(arg) = it.next() {
        let mut take = |flag: &str| -> Result<&String, String> {
            it.next().ok_or(format!("{flag} expects a value"))
        };
        match arg.as_str() {
            "--mt" => {
                config.mt_family = match take("--mt")?.as_str() {
                    "identity" => MtFamily::Identity,
                    "exponential" => MtFamily::Exponential,
                    "gaussian" => MtFamily::Gaussian,
                    other => return Err(format!("unknown MT family `{other}`")),
                }
            }
            "--samples" => config.n_samples = parse_num(take("--samples")?, "--samples")?,
            "--trials" => config.n_trials = parse_num(take("--trials")?, "--trials")?,
            "--perms" => config.m_permutations = parse_num(take("--perms")?, "--perms")?,
            "--alpha" => config.alpha = parse_num(take("--alpha")?, "--alpha")?,
            "--lambda" => config.lambda = parse_num(take("--lambda")?, "--lambda")?,
            "--seed" => config.seed = parse_num(take("--seed")?, "--seed")?,
            "--out" => config.out = Some(PathBuf::from(take("--out")?)),
            "--starts" => config.n_starts = parse_num(take("--starts")?, "--starts")?,
            "--iters" => config.max_iters = parse_num(take("--iters")?, "--iters")?,
            "--tol" => config.tol = parse_num(take("--tol")?, "--tol")?,
            "--full-scale" => config.full_scale = true,
            flag if flag.starts_with("--") => {
                return Err(format!("unknown flag `{flag}`\n\n{USAGE}"))
            }
            positional => config.inputs.push(positional.to_string()),
        }
    }
    config.validate()?;
    Ok(config)
}

fn parse_num<T: std::str::FromStr>(value: &str, flag: &str) -> Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("{flag}: cannot parse `{value}`"))
}
