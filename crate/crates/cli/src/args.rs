use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use rankmerge::{BoostConfig, MergeMethod};

use crate::config::RunConfig;
use crate::CliError;

#[derive(Debug, Parser)]
#[command(name = "rankmerge", version, about = "Task-vector merging with rank diagnostics and Subspace Boosting")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub flags: Flags,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Merge expert checkpoints into one checkpoint.
    Merge,
    /// Rank report of a checkpoint's task vector.
    Diagnose,
    /// HO-GSVD alignment matrices and generalized singular values.
    Align,
    /// Pick the k best-aligned experts.
    Select,
    /// Boost a single expert's task vector.
    Boost,
    /// Write a synthetic base and expert pool.
    Synth,
    /// Grid over α and β.
    Sweep,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Self::Merge => "merge",
            Self::Diagnose => "diagnose",
            Self::Align => "align",
            Self::Select => "select",
            Self::Boost => "boost",
            Self::Synth => "synth",
            Self::Sweep => "sweep",
        }
    }
}

#[derive(Debug, Default, Args)]
pub struct Flags {
    /// JSON run config, or a summary from an earlier run.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub base: Option<PathBuf>,
    /// Expert checkpoint directory; repeat for several.
    #[arg(long, global = true)]
    pub expert: Vec<PathBuf>,
    /// ta, ties, consensus or hogsvd.
    #[arg(long, global = true)]
    pub method: Option<String>,
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Enables Subspace Boosting with this β.
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    /// Enables LiNeS scaling from START at the first layer to END at the last.
    #[arg(long, global = true, value_name = "START,END", value_parser = parse_pair)]
    pub lines: Option<(f64, f64)>,
    #[arg(long, global = true)]
    pub pi: Option<f64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Energy fraction for cumulative energy rank; repeat for several.
    #[arg(long, global = true)]
    pub fraction: Vec<f64>,
    /// TIES / Consensus trim fraction.
    #[arg(long, global = true)]
    pub trim: Option<f64>,
    /// Consensus: tasks that must agree on a coordinate.
    #[arg(long, global = true)]
    pub min_tasks: Option<usize>,
    /// Number of experts to select.
    #[arg(long, global = true)]
    pub k: Option<usize>,
    /// Exact subset search instead of greedy selection.
    #[arg(long, global = true)]
    pub exhaustive: bool,

    #[arg(long, global = true)]
    pub n_experts: Option<usize>,
    #[arg(long, global = true)]
    pub rows: Option<usize>,
    #[arg(long, global = true)]
    pub cols: Option<usize>,
    #[arg(long, global = true)]
    pub layers: Option<usize>,
    #[arg(long, global = true)]
    pub expert_rank: Option<usize>,
    #[arg(long, global = true)]
    pub shared_weight: Option<f64>,
    #[arg(long, global = true)]
    pub noise: Option<f64>,
    /// Add passthrough bias vectors to synthetic checkpoints.
    #[arg(long, global = true)]
    pub bias: bool,

    /// Comma-separated α grid for `sweep`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub alphas: Option<Vec<f64>>,
    /// Comma-separated β grid for `sweep`.
    #[arg(long, global = true, value_delimiter = ',')]
    pub betas: Option<Vec<f64>>,
    /// Scoring command for `sweep`; `{checkpoint}` expands to the cell's directory.
    #[arg(long, global = true)]
    pub eval_command: Option<String>,
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s
        .split_once(',')
        .ok_or_else(|| format!("expected START,END, got `{s}`"))?;
    let parse = |x: &str| x.trim().parse::<f64>().map_err(|e| format!("`{x}`: {e}"));
    Ok((parse(a)?, parse(b)?))
}

impl Flags {
    /// The config file (if any) with every given flag applied on top.
    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(b) = &self.base {
            c.base = Some(b.clone());
        }
        if !self.expert.is_empty() {
            c.experts = self.expert.clone();
        }
        if let Some(o) = &self.out {
            c.out = Some(o.clone());
        }
        if let Some(m) = &self.method {
            if m == "hogsvd" {
                c.hogsvd_merge = true;
            } else {
                c.merge.method = m
                    .parse::<MergeMethod>()
                    .map_err(|e| CliError::Usage(e.to_string()))?;
                c.hogsvd_merge = false;
            }
        }
        if let Some(a) = self.alpha {
            c.merge.alpha = a;
        }
        if let Some(b) = self.beta {
            c.boost.get_or_insert_with(BoostConfig::default).beta = b;
        }
        if let Some((start, end)) = self.lines {
            c.merge.lines_enabled = true;
            c.merge.lines_start = start;
            c.merge.lines_end = end;
        }
        if let Some(p) = self.pi {
            c.hogsvd.pi = p;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        // one seed per run: the top-level value drives generation
        c.synth.seed = c.seed;
        if !self.fraction.is_empty() {
            c.fractions = self.fraction.clone();
        }
        if let Some(t) = self.trim {
            c.merge.ties_trim_fraction = t;
        }
        if let Some(m) = self.min_tasks {
            c.merge.consensus_min_tasks = m;
        }
        if let Some(k) = self.k {
            c.k = Some(k);
        }
        if self.exhaustive {
            c.exhaustive = true;
        }

        let s = &mut c.synth;
        overlay(&mut s.n_experts, self.n_experts);
        overlay(&mut s.rows, self.rows);
        overlay(&mut s.cols, self.cols);
        overlay(&mut s.n_layers, self.layers);
        overlay(&mut s.expert_rank, self.expert_rank);
        overlay(&mut s.shared_direction_weight, self.shared_weight);
        overlay(&mut s.noise_floor, self.noise);
        if self.bias {
            s.with_bias = true;
        }

        if let Some(a) = &self.alphas {
            c.sweep.alphas = a.clone();
        }
        if let Some(b) = &self.betas {
            c.sweep.betas = b.clone();
        }
        if let Some(e) = &self.eval_command {
            c.sweep.eval_command = Some(e.clone());
        }
        c.validate()?;
        Ok(c)
    }
}

fn overlay<T>(slot: &mut T, flag: Option<T>) {
    if let Some(v) = flag {
        *slot = v;
    }
}
