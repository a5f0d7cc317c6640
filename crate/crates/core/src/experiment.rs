//! Command implementations shared by the CLI and the acceptance suite. Each
//! command writes its CSVs under an output directory and returns a typed
//! report for printing.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;

use crate::agent::{curves_csv, evaluate, tail_mean, Checkpoint, Trainer};
use crate::config::{ExperimentConfig, SweepAxis};
use crate::csv::{fmt_f64, CsvHeader};
use crate::env::{run_policy, GreedyPolicy, RandomPolicy};
use crate::error::{Error, Result};
use crate::metrics::{self, pnm, ImageBuffer, SsimMode};
use crate::stackelberg::{
    brute_force_equilibrium, closed_form_price, equilibrium, printed_formula_price, probe_deviations,
    best_responses, DeviationReport, GameOutcome,
};

pub const EQUILIBRIUM_CSV: &str = "equilibrium.csv";
pub const EQUILIBRIUM_USERS_CSV: &str = "equilibrium_users.csv";
pub const CURVES_CSV: &str = "curves.csv";
pub const STEPS_CSV: &str = "steps.csv";
pub const TRAIN_SUMMARY_CSV: &str = "train_summary.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const EVALUATE_CSV: &str = "evaluate.csv";
pub const SWEEP_CSV: &str = "sweep.csv";
pub const SWEEP_SUMMARY_CSV: &str = "sweep_summary.csv";
pub const SWEEP_POINTS_DIR: &str = "sweep_points";
pub const METRICS_CSV: &str = "metrics.csv";
pub const EXTRACT_CSV: &str = "extract.csv";

/// Probes per player for the equilibrium check.
pub const DEVIATION_PROBES: usize = 10_000;

/// Columns holding wall-clock measurements; everything else in the CSVs is
/// a pure function of config and seed.
pub const TIMING_COLUMNS: [&str; 1] = ["wall_ms"];

/// Writes via a temporary sibling and a rename so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

fn header(cfg: &ExperimentConfig) -> CsvHeader {
    CsvHeader::new(&cfg.hash(), cfg.train.seed)
}

fn outcome_row(method: &str, o: &GameOutcome) -> String {
    format!(
        "{method},{},{},{}\n",
        fmt_f64(o.price),
        fmt_f64(o.total_demand()),
        fmt_f64(o.leader_utility)
    )
}

#[derive(Debug, Clone)]
pub struct EquilibriumReport {
    pub closed_form_price: f64,
    pub printed_formula_price: f64,
    pub oracle: GameOutcome,
    pub grid_step: f64,
    /// Cap-aware equilibrium; per-user rows refer to this outcome.
    pub equilibrium: GameOutcome,
    pub deviations: DeviationReport,
}

impl EquilibriumReport {
    pub fn within_one_grid_step(&self) -> bool {
        (self.closed_form_price - self.oracle.price).abs() <= self.grid_step
    }
}

pub fn run_equilibrium(cfg: &ExperimentConfig, out: &Path) -> Result<EquilibriumReport> {
    let market = cfg.market()?;
    let eq = equilibrium(&market)?;
    let closed = closed_form_price(&market)?;
    let printed = printed_formula_price(&market);
    let oracle = brute_force_equilibrium(&market, cfg.eval.grid_points)?;
    let grid_step = (market.price_cap - market.unit_cost) / (cfg.eval.grid_points - 1) as f64;
    let deviations = probe_deviations(&market, &eq, DEVIATION_PROBES);

    let h = header(cfg);
    let mut summary = h.render();
    summary.push_str("method,price,total_demand,leader_utility\n");
    let at = |p: f64| GameOutcome::evaluate(&market, p, best_responses(&market, p));
    summary.push_str(&outcome_row("closed_form", &at(closed)));
    summary.push_str(&outcome_row("printed_formula", &at(printed)));
    summary.push_str(&outcome_row("brute_force", &oracle));
    summary.push_str(&outcome_row("equilibrium", &eq));
    write_atomic(&out.join(EQUILIBRIUM_CSV), summary)?;

    let mut users = h.render();
    users.push_str("user,participation_threshold,demand,utility,aosi_s\n");
    for (i, u) in market.users.iter().enumerate() {
        let b = eq.demands[i];
        let aosi = if b > 0.0 { u.aosi(b)? } else { f64::INFINITY };
        users.push_str(&format!(
            "{},{},{},{},{}\n",
            i + 1,
            fmt_f64(u.participation_threshold()),
            fmt_f64(b),
            fmt_f64(eq.follower_utilities[i]),
            fmt_f64(aosi)
        ));
    }
    write_atomic(&out.join(EQUILIBRIUM_USERS_CSV), users)?;

    Ok(EquilibriumReport {
        closed_form_price: closed,
        printed_formula_price: printed,
        oracle,
        grid_step,
        equilibrium: eq,
        deviations,
    })
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub episodes: usize,
    pub final_mean_reward: f64,
    pub oracle_utility: f64,
    pub ratio: f64,
    pub checkpoint: PathBuf,
}

/// Trains from scratch or from `resume`, checkpointing every
/// `checkpoint_every` episodes (0 = only at the end).
pub fn run_train(
    cfg: &ExperimentConfig,
    out: &Path,
    resume: Option<&Path>,
    checkpoint_every: usize,
) -> Result<TrainReport> {
    let market = cfg.market()?;
    let hash = cfg.hash();
    let mut trainer = match resume {
        Some(path) => {
            let ck = Checkpoint::from_json(&fs::read_to_string(path)?)?;
            if ck.log.config_hash != hash {
                return Err(Error::Config(format!(
                    "checkpoint belongs to config {}, not {hash}",
                    ck.log.config_hash
                )));
            }
            Trainer::resume(market.clone(), ck)?
        }
        None => Trainer::new(market.clone(), cfg.env, cfg.train.clone(), &hash)?,
    };
    let ck_path = out.join(CHECKPOINT_FILE);
    let mut io_err = None;
    trainer.run_with(|t, s| {
        if checkpoint_every > 0 && (s.episode + 1) % checkpoint_every == 0 && !t.is_done() {
            if let Err(e) = t.checkpoint().to_json().and_then(|j| write_atomic(&ck_path, j)) {
                io_err.get_or_insert(e);
            }
        }
    })?;
    if let Some(e) = io_err {
        return Err(e);
    }
    write_atomic(&ck_path, trainer.checkpoint().to_json()?)?;
    let h = header(cfg);
    write_atomic(&out.join(CURVES_CSV), curves_csv(trainer.curves(), &h))?;
    write_atomic(&out.join(STEPS_CSV), trainer.log().to_csv())?;

    let rewards: Vec<f64> = trainer.curves().iter().map(|c| c.mean_reward).collect();
    let final_mean = tail_mean(&rewards, cfg.eval.window);
    let oracle = brute_force_equilibrium(&market, cfg.eval.grid_points)?.leader_utility;
    let mut summary = h.render();
    summary.push_str("episodes,window,final_mean_reward,oracle_utility,ratio\n");
    summary.push_str(&format!(
        "{},{},{},{},{}\n",
        rewards.len(),
        cfg.eval.window,
        fmt_f64(final_mean),
        fmt_f64(oracle),
        fmt_f64(final_mean / oracle)
    ));
    write_atomic(&out.join(TRAIN_SUMMARY_CSV), summary)?;
    Ok(TrainReport {
        episodes: rewards.len(),
        final_mean_reward: final_mean,
        oracle_utility: oracle,
        ratio: final_mean / oracle,
        checkpoint: ck_path,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyScore {
    pub policy: String,
    pub mean_reward: f64,
    pub std_reward: f64,
    pub ratio: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

/// Trailing-window means of the two baselines after `train.episodes`
/// episodes of learning: `(greedy, random)` per-episode rewards.
fn baseline_windows(cfg: &ExperimentConfig, market: &crate::stackelberg::MarketConfig, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let t = &cfg.train;
    let window = |v: Vec<f64>| v[v.len().saturating_sub(cfg.eval.window)..].to_vec();
    let mut greedy = GreedyPolicy::new(market, seed);
    let g = run_policy(market, &mut greedy, t.episodes, t.rounds, t.steps, cfg.env.history_len, seed);
    let mut random = RandomPolicy::new(market, seed);
    let r = run_policy(market, &mut random, t.episodes, t.rounds, t.steps, cfg.env.history_len, seed);
    (window(g), window(r))
}

/// Scores a trained checkpoint with noise-free inference next to the
/// converged baselines.
pub fn run_evaluate(cfg: &ExperimentConfig, out: &Path, checkpoint: &Path) -> Result<Vec<PolicyScore>> {
    let market = cfg.market()?;
    let ck = Checkpoint::from_json(&fs::read_to_string(checkpoint)?)?;
    let seed = cfg.train.seed;
    let oracle = brute_force_equilibrium(&market, cfg.eval.grid_points)?.leader_utility;
    let gdm = evaluate(&ck.policy, &market, cfg.env, cfg.eval.episodes, cfg.train.rounds, cfg.eval.draws, seed)?;
    let (greedy, random) = baseline_windows(cfg, &market, seed);
    let scores: Vec<PolicyScore> = [("gdm", gdm), ("greedy", greedy), ("random", random)]
        .into_iter()
        .map(|(name, v)| {
            let (mean, std) = mean_std(&v);
            PolicyScore {
                policy: name.to_string(),
                mean_reward: mean,
                std_reward: std,
                ratio: mean / oracle,
            }
        })
        .collect();
    let mut text = header(cfg).render();
    text.push_str("policy,mean_reward,std_reward,oracle_utility,ratio\n");
    for s in &scores {
        text.push_str(&format!(
            "{},{},{},{},{}\n",
            s.policy,
            fmt_f64(s.mean_reward),
            fmt_f64(s.std_reward),
            fmt_f64(oracle),
            fmt_f64(s.ratio)
        ));
    }
    write_atomic(&out.join(EVALUATE_CSV), text)?;
    Ok(scores)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    pub seed: u64,
    pub oracle_utility: f64,
    pub agent_utility: f64,
    pub greedy_utility: f64,
    pub random_utility: f64,
    /// Wall time of the training run.
    pub wall_ms: f64,
}

impl SweepRow {
    pub fn normalized_reward(&self) -> f64 {
        self.agent_utility / self.oracle_utility
    }
}

const SWEEP_COLUMNS: &str =
    "axis,value,seed,oracle_utility,agent_utility,greedy_utility,random_utility,normalized_reward,wall_ms";

fn sweep_line(axis: SweepAxis, r: &SweepRow) -> String {
    format!(
        "{},{},{},{},{},{},{},{},{}\n",
        axis.name(),
        fmt_f64(r.value),
        r.seed,
        fmt_f64(r.oracle_utility),
        fmt_f64(r.agent_utility),
        fmt_f64(r.greedy_utility),
        fmt_f64(r.random_utility),
        fmt_f64(r.normalized_reward()),
        fmt_f64(r.wall_ms)
    )
}

/// The config for one sweep point.
pub fn sweep_point_config(cfg: &ExperimentConfig, value: f64, seed: u64) -> ExperimentConfig {
    let mut point = match cfg.sweep.axis {
        SweepAxis::UnitCost => {
            let mut c = cfg.clone();
            c.market.unit_cost = value;
            c
        }
        SweepAxis::UserCount => cfg.with_user_count(value as usize),
        SweepAxis::DenoisingSteps => {
            let mut c = cfg.clone();
            c.train.denoising_steps = value as usize;
            c
        }
    };
    point.train.seed = seed;
    if cfg.sweep.episodes > 0 {
        point.train.episodes = cfg.sweep.episodes;
    }
    point
}

fn run_sweep_point(cfg: &ExperimentConfig, value: f64, seed: u64) -> Result<SweepRow> {
    let point = sweep_point_config(cfg, value, seed);
    point.validate()?;
    let market = point.market()?;
    let oracle = brute_force_equilibrium(&market, point.eval.grid_points)?.leader_utility;
    let started = Instant::now();
    let mut trainer = Trainer::new(market.clone(), point.env, point.train.clone(), &point.hash())?;
    trainer.run()?;
    let wall_ms = started.elapsed().as_secs_f64() * 1e3;
    let rewards: Vec<f64> = trainer.curves().iter().map(|c| c.mean_reward).collect();
    let (greedy, random) = baseline_windows(&point, &market, seed);
    Ok(SweepRow {
        value,
        seed,
        oracle_utility: oracle,
        agent_utility: tail_mean(&rewards, point.eval.window),
        greedy_utility: mean_std(&greedy).0,
        random_utility: mean_std(&random).0,
        wall_ms,
    })
}

/// Runs every `(value, seed)` pair on `jobs` threads. Each point is written
/// to its own file as it finishes; the merged tables are written last.
pub fn run_sweep(cfg: &ExperimentConfig, out: &Path, jobs: usize) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let spec = &cfg.sweep;
    let h = header(cfg);
    let jobs_list: Vec<(usize, f64, u64)> = spec
        .values
        .iter()
        .enumerate()
        .flat_map(|(i, &v)| (0..spec.seeds as u64).map(move |k| (i, v, k)))
        .map(|(i, v, k)| (i, v, cfg.train.seed + k))
        .collect();
    let points_dir = out.join(SWEEP_POINTS_DIR);
    let work = |&(i, v, seed): &(usize, f64, u64)| -> Result<SweepRow> {
        let row = run_sweep_point(cfg, v, seed)?;
        let mut text = h.render();
        text.push_str(SWEEP_COLUMNS);
        text.push('\n');
        text.push_str(&sweep_line(spec.axis, &row));
        write_atomic(&points_dir.join(format!("point_{i:03}_seed_{seed}.csv")), text)?;
        Ok(row)
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    let rows: Vec<SweepRow> = pool.install(|| jobs_list.par_iter().map(work).collect::<Result<Vec<_>>>())?;

    let mut all = h.render();
    all.push_str(SWEEP_COLUMNS);
    all.push('\n');
    for r in &rows {
        all.push_str(&sweep_line(spec.axis, r));
    }
    write_atomic(&out.join(SWEEP_CSV), all)?;

    let mut summary = h.render();
    summary.push_str("axis,value,seeds,oracle_utility,agent_mean,agent_std,greedy_mean,random_mean,normalized_mean,wall_ms\n");
    for &v in &spec.values {
        let at: Vec<&SweepRow> = rows.iter().filter(|r| r.value == v).collect();
        let col = |f: &dyn Fn(&SweepRow) -> f64| at.iter().map(|r| f(r)).collect::<Vec<_>>();
        let (am, asd) = mean_std(&col(&|r| r.agent_utility));
        summary.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            spec.axis.name(),
            fmt_f64(v),
            at.len(),
            fmt_f64(at[0].oracle_utility),
            fmt_f64(am),
            fmt_f64(asd),
            fmt_f64(mean_std(&col(&|r| r.greedy_utility)).0),
            fmt_f64(mean_std(&col(&|r| r.random_utility)).0),
            fmt_f64(mean_std(&col(&|r| r.normalized_reward())).0),
            fmt_f64(mean_std(&col(&|r| r.wall_ms)).0)
        ));
    }
    write_atomic(&out.join(SWEEP_SUMMARY_CSV), summary)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub mse: f64,
    /// `None` for identical images.
    pub psnr: Option<f64>,
    pub ssim: f64,
    pub ssim_windowed: f64,
}

fn file_label(p: &Path) -> String {
    p.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

pub fn run_metrics(cfg: &ExperimentConfig, out: &Path, a: &Path, b: &Path) -> Result<MetricsReport> {
    let (x, _) = pnm::read(a)?;
    let (y, _) = pnm::read(b)?;
    let report = compare(&x, &y)?;
    let mut text = header(cfg).render();
    text.push_str("image_a,image_b,mse,psnr_db,ssim,ssim_windowed\n");
    text.push_str(&format!(
        "{},{},{},{},{},{}\n",
        file_label(a),
        file_label(b),
        fmt_f64(report.mse),
        report.psnr.map_or("inf".to_string(), fmt_f64),
        fmt_f64(report.ssim),
        fmt_f64(report.ssim_windowed)
    ));
    write_atomic(&out.join(METRICS_CSV), text)?;
    Ok(report)
}

pub fn compare(x: &ImageBuffer, y: &ImageBuffer) -> Result<MetricsReport> {
    let psnr = match metrics::psnr(x, y) {
        Ok(v) => Some(v),
        Err(Error::IdenticalImages) => None,
        Err(e) => return Err(e),
    };
    Ok(MetricsReport {
        mse: metrics::mse(x, y)?,
        psnr,
        ssim: metrics::ssim(x, y, SsimMode::Global)?,
        ssim_windowed: metrics::ssim(x, y, SsimMode::Windowed)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractReport {
    pub input_dims: (usize, usize),
    pub output_dims: (usize, usize),
    pub output: PathBuf,
}

/// Extracts `input` at `rate` into `output` (default: next to the CSV in
/// `out`, same anymap variant as the input).
pub fn run_extract(
    cfg: &ExperimentConfig,
    out: &Path,
    input: &Path,
    rate: f64,
    output: Option<&Path>,
) -> Result<ExtractReport> {
    let (img, kind) = pnm::read(input)?;
    let small = metrics::extract(&img, rate)?;
    let output = match output {
        Some(p) => p.to_path_buf(),
        None => {
            let stem = input.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "image".into());
            let ext = input.extension().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "pnm".into());
            out.join(format!("{stem}_extract.{ext}"))
        }
    };
    write_atomic(&output, pnm::encode(&small, kind)?)?;
    let mut text = header(cfg).render();
    text.push_str("input,rate,width,height,out_width,out_height\n");
    text.push_str(&format!(
        "{},{},{},{},{},{}\n",
        file_label(input),
        fmt_f64(rate),
        img.width(),
        img.height(),
        small.width(),
        small.height()
    ));
    write_atomic(&out.join(EXTRACT_CSV), text)?;
    Ok(ExtractReport {
        input_dims: (img.width(), img.height()),
        output_dims: (small.width(), small.height()),
        output,
    })
}

/// Replaces the cells of [`TIMING_COLUMNS`] with `*` so that CSVs from two
/// runs can be compared byte for byte.
pub fn mask_timing(csv: &str) -> String {
    let mut masked = Vec::new();
    let mut hidden: Vec<usize> = Vec::new();
    let mut seen_columns = false;
    for line in csv.lines() {
        if line.starts_with('#') {
            masked.push(line.to_string());
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if !seen_columns {
            seen_columns = true;
            hidden = cells
                .iter()
                .enumerate()
                .filter(|(_, c)| TIMING_COLUMNS.contains(c))
                .map(|(i, _)| i)
                .collect();
            masked.push(line.to_string());
            continue;
        }
        let row: Vec<&str> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| if hidden.contains(&i) { "*" } else { c })
            .collect();
        masked.push(row.join(","));
    }
    masked.join("\n") + if csv.ends_with('\n') { "\n" } else { "" }
}
