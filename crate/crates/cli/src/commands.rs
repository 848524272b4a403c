use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command as Process;

use log::info;
use rankmerge::boost::{boost_task_vector_with_report, ComponentBoost};
use rankmerge::hogsvd::{decompose_task_vectors, gsv_csv, HogsvdComponentReport};
use rankmerge::{
    alignment_matrix, apply_task_vector, classify_subspaces, hogsvd_boost_merge, lines_scale,
    merge_ta, rank_report, select_experts, select_experts_exhaustive, synth, task_vector,
    BoostConfig, Checkpoint, TaskVector,
};
use serde::Serialize;

use crate::args::Command;
use crate::config::RunConfig;
use crate::CliError;

type Result<T> = std::result::Result<T, CliError>;

pub fn execute(command: Command, c: &RunConfig) -> Result<()> {
    let out = c.out_dir()?.to_path_buf();
    match command {
        Command::Merge => merge(c, &out),
        Command::Diagnose => diagnose(c, &out),
        Command::Align => align(c, &out, false),
        Command::Select => align(c, &out, true),
        Command::Boost => boost(c, &out),
        Command::Synth => synthesize(c, &out),
        Command::Sweep => sweep(c, &out),
    }
}

#[derive(Serialize)]
struct Summary<'a, T> {
    command: &'static str,
    config: &'a RunConfig,
    result: T,
}

fn write_summary<T: Serialize>(out: &Path, command: Command, c: &RunConfig, result: T) -> Result<()> {
    let summary = Summary {
        command: command.name(),
        config: c,
        result,
    };
    let mut text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    text.push('\n');
    write_file(&out.join("summary.json"), text.as_bytes())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|source| CliError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn load(path: &Path) -> Result<Checkpoint> {
    Ok(Checkpoint::load(path)?)
}

fn load_deltas(c: &RunConfig, min: usize) -> Result<(Checkpoint, Vec<TaskVector>)> {
    let base_dir = c.base_dir()?;
    let experts = c.expert_dirs(min)?;
    let base = load(base_dir)?;
    let deltas = experts
        .iter()
        .map(|e| Ok(task_vector(&load(e)?, &base)?))
        .collect::<Result<Vec<_>>>()?;
    Ok((base, deltas))
}

#[derive(Serialize)]
struct ComponentRanks {
    tensor: String,
    layer: usize,
    stable_rank_before: Option<f64>,
    stable_rank_after: Option<f64>,
    cer_before: Option<usize>,
    cer_after: Option<usize>,
    clamp_index: Option<usize>,
}

fn component_ranks(
    before: &TaskVector,
    after: &TaskVector,
    fraction: f64,
    boosts: Option<&[ComponentBoost]>,
) -> Result<Vec<ComponentRanks>> {
    let b = rank_report(before, fraction)?;
    let a = rank_report(after, fraction)?;
    Ok(b.rows
        .into_iter()
        .zip(a.rows)
        .enumerate()
        .map(|(i, (b, a))| ComponentRanks {
            clamp_index: boosts.and_then(|r| r[i].clamp_index),
            tensor: b.tensor,
            layer: b.layer,
            stable_rank_before: b.stable_rank,
            stable_rank_after: a.stable_rank,
            cer_before: b.cer,
            cer_after: a.cer,
        })
        .collect())
}

fn mean(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

struct Merged {
    before_boost: TaskVector,
    delta: TaskVector,
    boosts: Option<Vec<ComponentBoost>>,
    hogsvd: Option<Vec<HogsvdComponentReport>>,
}

fn apply_lines(c: &RunConfig, tv: TaskVector) -> Result<TaskVector> {
    if !c.merge.lines_enabled {
        return Ok(tv);
    }
    let layers = tv.layer_indices();
    Ok(lines_scale(&tv, c.merge.lines_start, c.merge.lines_end, &layers)?)
}

/// merge → LiNeS → boost, with `boost` overriding the configured one.
fn merge_pool(c: &RunConfig, deltas: &[TaskVector], boost: Option<&BoostConfig>) -> Result<Merged> {
    if c.hogsvd_merge {
        let beta = boost.map_or(0.0, |b| b.beta);
        let m = hogsvd_boost_merge(deltas, &c.hogsvd, beta)?;
        let delta = apply_lines(c, m.delta)?;
        return Ok(Merged {
            before_boost: apply_lines(c, merge_ta(deltas)?)?,
            delta,
            boosts: None,
            hogsvd: Some(m.components),
        });
    }
    let merged = apply_lines(c, c.merge.merge(deltas)?)?;
    match boost {
        Some(b) => {
            let (delta, report) = boost_task_vector_with_report(&merged, b)?;
            Ok(Merged {
                before_boost: merged,
                delta,
                boosts: Some(report),
                hogsvd: None,
            })
        }
        None => Ok(Merged {
            before_boost: merged.clone(),
            delta: merged,
            boosts: None,
            hogsvd: None,
        }),
    }
}

#[derive(Serialize)]
struct MergeResult {
    checkpoint: PathBuf,
    experts: usize,
    fraction: f64,
    mean_stable_rank_before: Option<f64>,
    mean_stable_rank_after: Option<f64>,
    components: Vec<ComponentRanks>,
    hogsvd: Option<Vec<HogsvdComponentReport>>,
}

fn merge(c: &RunConfig, out: &Path) -> Result<()> {
    let (base, deltas) = load_deltas(c, 2)?;
    let m = merge_pool(c, &deltas, c.boost.as_ref())?;
    let merged = apply_task_vector(&base, &m.delta, c.merge.alpha)?;
    let ckpt_dir = out.join("checkpoint");
    merged.save(&ckpt_dir)?;
    let fraction = c.fractions[0];
    let components = component_ranks(&m.before_boost, &m.delta, fraction, m.boosts.as_deref())?;
    let result = MergeResult {
        checkpoint: ckpt_dir,
        experts: deltas.len(),
        fraction,
        mean_stable_rank_before: mean(components.iter().map(|r| r.stable_rank_before)),
        mean_stable_rank_after: mean(components.iter().map(|r| r.stable_rank_after)),
        components,
        hogsvd: m.hogsvd,
    };
    info!("merged {} experts into {}", result.experts, result.checkpoint.display());
    write_summary(out, Command::Merge, c, result)
}

#[derive(Serialize)]
struct FractionSummary {
    fraction: f64,
    report: PathBuf,
    mean_stable_rank: Option<f64>,
    degenerate: usize,
}

fn diagnose(c: &RunConfig, out: &Path) -> Result<()> {
    let experts = c.expert_dirs(1)?;
    if experts.len() != 1 {
        return Err(CliError::Usage("diagnose takes exactly one --expert".to_owned()));
    }
    let ckpt = load(&experts[0])?;
    let tv = match &c.base {
        Some(_) => task_vector(&ckpt, &load(c.base_dir()?)?)?,
        None => TaskVector(ckpt.0),
    };
    let mut summaries = Vec::with_capacity(c.fractions.len());
    let mut spectra = None;
    for &f in &c.fractions {
        let report = rank_report(&tv, f)?;
        let path = out.join(format!("rank_{f}.csv"));
        write_file(&path, report.to_csv().as_bytes())?;
        spectra.get_or_insert_with(|| report.spectra_csv());
        summaries.push(FractionSummary {
            fraction: f,
            report: path,
            mean_stable_rank: report.mean_stable_rank(),
            degenerate: report.rows.iter().filter(|r| r.is_degenerate()).count(),
        });
    }
    write_file(&out.join("spectra.csv"), spectra.unwrap_or_default().as_bytes())?;
    write_summary(out, Command::Diagnose, c, summaries)
}

#[derive(Serialize)]
struct Classification {
    tensor: String,
    common: usize,
    unique: Vec<usize>,
    unclassified: usize,
}

#[derive(Serialize)]
struct Selection {
    k: usize,
    strategy: &'static str,
    indices: Vec<usize>,
    experts: Vec<PathBuf>,
    mean_pairwise_score: f64,
}

#[derive(Serialize)]
struct AlignResult {
    alignment: PathBuf,
    gsv: PathBuf,
    scores: Vec<Vec<f64>>,
    classification: Vec<Classification>,
    selection: Option<Selection>,
}

fn align(c: &RunConfig, out: &Path, select: bool) -> Result<()> {
    if select && c.k.is_none() {
        return Err(CliError::Usage("select needs --k".to_owned()));
    }
    let (_, deltas) = load_deltas(c, 2)?;
    let components = decompose_task_vectors(&deltas, &c.hogsvd)?;
    let names: Vec<String> = components.iter().map(|(n, _)| n.clone()).collect();
    let refs: Vec<_> = components.iter().map(|(_, f)| f).collect();
    let al = alignment_matrix(&refs, c.hogsvd.eps)?;

    let alignment_path = out.join("alignment.csv");
    let gsv_path = out.join("gsv.csv");
    write_file(&alignment_path, al.to_csv(&names).as_bytes())?;
    write_file(&gsv_path, gsv_csv(&components).as_bytes())?;

    let classification = components
        .iter()
        .map(|(name, f)| {
            let cl = classify_subspaces(f, c.hogsvd.common_tolerance, c.hogsvd.eps);
            Classification {
                tensor: name.clone(),
                common: cl.common.len(),
                unique: cl.unique.iter().map(Vec::len).collect(),
                unclassified: cl.unclassified(f.dim()).len(),
            }
        })
        .collect();

    let selection = match c.k {
        Some(k) => {
            let (strategy, indices) = if c.exhaustive {
                ("exhaustive", select_experts_exhaustive(&al.scores, k))
            } else {
                ("greedy", select_experts(&al.scores, k))
            };
            let indices = indices.map_err(|e| CliError::Usage(e.to_string()))?;
            let mut total = 0.0;
            for (a, &i) in indices.iter().enumerate() {
                for &j in &indices[a + 1..] {
                    total += al.scores[(i, j)];
                }
            }
            let pairs = (k * (k - 1) / 2) as f64;
            Some(Selection {
                k,
                strategy,
                experts: indices.iter().map(|&i| c.experts[i].clone()).collect(),
                indices,
                mean_pairwise_score: total / pairs,
            })
        }
        None => None,
    };
    if let Some(s) = &selection {
        let mut text = serde_json::to_string_pretty(s).expect("selection serializes");
        text.push('\n');
        write_file(&out.join("selection.json"), text.as_bytes())?;
    }

    let n = al.task_count();
    let result = AlignResult {
        alignment: alignment_path,
        gsv: gsv_path,
        scores: (0..n).map(|i| al.scores.row(i).to_vec()).collect(),
        classification,
        selection,
    };
    let command = if select { Command::Select } else { Command::Align };
    write_summary(out, command, c, result)
}

#[derive(Serialize)]
struct BoostResult {
    checkpoint: PathBuf,
    fraction: f64,
    components: Vec<ComponentRanks>,
}

fn boost(c: &RunConfig, out: &Path) -> Result<()> {
    let (base, deltas) = load_deltas(c, 1)?;
    if deltas.len() != 1 {
        return Err(CliError::Usage("boost takes exactly one --expert".to_owned()));
    }
    let cfg = c.boost.clone().unwrap_or_default();
    let (boosted, report) = boost_task_vector_with_report(&deltas[0], &cfg)?;
    let ckpt_dir = out.join("checkpoint");
    apply_task_vector(&base, &boosted, c.merge.alpha)?.save(&ckpt_dir)?;
    let fraction = c.fractions[0];
    let result = BoostResult {
        checkpoint: ckpt_dir,
        fraction,
        components: component_ranks(&deltas[0], &boosted, fraction, Some(&report))?,
    };
    write_summary(out, Command::Boost, c, result)
}

#[derive(Serialize)]
struct SynthResult {
    base: PathBuf,
    experts: Vec<PathBuf>,
    tensors: Vec<String>,
}

fn synthesize(c: &RunConfig, out: &Path) -> Result<()> {
    let (base, experts) = synth::generate(&c.synth).map_err(|e| match e {
        rankmerge::Error::InvalidArgument(m) => CliError::Usage(m),
        e => e.into(),
    })?;
    let base_dir = out.join("base");
    base.save(&base_dir)?;
    let mut dirs = Vec::with_capacity(experts.len());
    for (i, e) in experts.iter().enumerate() {
        let dir = out.join(format!("expert_{i:03}"));
        e.save(&dir)?;
        dirs.push(dir);
    }
    let result = SynthResult {
        base: base_dir,
        experts: dirs,
        tensors: base.names().map(str::to_owned).collect(),
    };
    write_summary(out, Command::Synth, c, result)
}

#[derive(Serialize)]
struct SweepRow {
    alpha: f64,
    beta: Option<f64>,
    mean_stable_rank: Option<f64>,
    score: Option<f64>,
}

#[derive(Serialize)]
struct SweepResult {
    table: PathBuf,
    rows: Vec<SweepRow>,
    best: Option<usize>,
}

fn evaluate(template: &str, checkpoint: &Path) -> Result<f64> {
    let cmd = template.replace("{checkpoint}", &checkpoint.display().to_string());
    let output = Process::new("sh")
        .arg("-c")
        .arg(&cmd)
        .output()
        .map_err(|e| CliError::Eval(format!("`{cmd}`: {e}")))?;
    if !output.status.success() {
        return Err(CliError::Eval(format!("`{cmd}` exited with {}", output.status)));
    }
    let stdout = String::from_utf8_lossy(&output.stdout);
    let token = stdout
        .split_whitespace()
        .last()
        .ok_or_else(|| CliError::Eval(format!("`{cmd}` printed nothing")))?;
    token
        .parse::<f64>()
        .map_err(|_| CliError::Eval(format!("`{cmd}` printed `{token}`, not a number")))
}

fn sweep(c: &RunConfig, out: &Path) -> Result<()> {
    let (base, deltas) = load_deltas(c, 2)?;
    let mut betas: Vec<Option<f64>> = Vec::new();
    if c.sweep.include_unboosted && !c.hogsvd_merge {
        betas.push(None);
    }
    betas.extend(c.sweep.betas.iter().copied().map(Some));
    let template = c.boost.clone().unwrap_or_default();

    let mut rows = Vec::new();
    for beta in betas {
        let boost = beta.map(|b| BoostConfig {
            beta: b,
            ..template.clone()
        });
        let m = merge_pool(c, &deltas, boost.as_ref())?;
        let srank = rank_report(&m.delta, c.fractions[0])?.mean_stable_rank();
        for &alpha in &c.sweep.alphas {
            let score = match &c.sweep.eval_command {
                Some(cmd) => {
                    let b = beta.map_or("none".to_owned(), |b| b.to_string());
                    let dir = out.join("cells").join(format!("alpha_{alpha}_beta_{b}"));
                    apply_task_vector(&base, &m.delta, alpha)?.save(&dir)?;
                    Some(evaluate(cmd, &dir)?)
                }
                None => None,
            };
            rows.push(SweepRow {
                alpha,
                beta,
                mean_stable_rank: srank,
                score,
            });
        }
    }

    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r).map_err(|e| CliError::Eval(e.to_string()))?;
    }
    let table = out.join("sweep.csv");
    write_file(&table, &w.into_inner().expect("in-memory writer"))?;
    let best = rows
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.score.map(|s| (i, s)))
        .fold(None, |acc: Option<(usize, f64)>, (i, s)| match acc {
            Some((_, t)) if t >= s => acc,
            _ => Some((i, s)),
        })
        .map(|(i, _)| i);
    write_summary(out, Command::Sweep, c, SweepResult { table, rows, best })
}
