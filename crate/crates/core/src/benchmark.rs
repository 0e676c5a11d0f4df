//! Tree-size versus reward sweeps over the maximum tree depth.

use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::extraction::{evaluate, extract, ExtractionConfig, Weighting};
use crate::mdp::Environment;
use crate::oracle::Oracle;

pub const DEFAULT_DEPTHS: [usize; 13] = [4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub algo: Weighting,
    pub seed: u64,
    pub depth: usize,
    pub nodes: usize,
    pub mean_reward: f64,
    /// Running maximum of `mean_reward` over depths swept so far for this
    /// algorithm and seed.
    pub best_reward_so_far: f64,
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub depths: Vec<usize>,
    pub algos: Vec<Weighting>,
    pub seeds: Vec<u64>,
    pub eval_rollouts: usize,
    pub eval_seed: u64,
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.depths.is_empty() {
            return Err(Error::invalid("depth list is empty"));
        }
        if self.depths.contains(&0) {
            return Err(Error::invalid("depths must be at least 1"));
        }
        if self.algos.is_empty() || self.seeds.is_empty() {
            return Err(Error::invalid("need at least one algorithm and one seed"));
        }
        if self.eval_rollouts == 0 {
            return Err(Error::invalid("eval_rollouts must be at least 1"));
        }
        Ok(())
    }
}

pub fn algo_name(w: Weighting) -> &'static str {
    match w {
        Weighting::Viper => "viper",
        Weighting::Uniform => "dagger",
    }
}

/// One extraction per (algorithm, seed, depth); each tree is scored on
/// `eval_rollouts` held-out episodes.
pub fn depth_sweep<E: Environment, O: Oracle<E>>(
    env: &E,
    oracle: &O,
    base: &ExtractionConfig,
    sweep: &SweepConfig,
) -> Result<Vec<SweepRow>> {
    sweep.validate()?;
    let mut depths = sweep.depths.clone();
    depths.sort_unstable();
    depths.dedup();
    let mut rows = Vec::new();
    for &algo in &sweep.algos {
        for &seed in &sweep.seeds {
            let mut best = f64::NEG_INFINITY;
            for &depth in &depths {
                let mut config = base.clone();
                config.seed = seed;
                config.tree.max_depth = depth;
                let out = extract(env, oracle, &config, algo)?;
                let mean_reward = evaluate(env, &out.best, sweep.eval_rollouts, sweep.eval_seed)?;
                best = best.max(mean_reward);
                log::info!(
                    "{} seed {seed} depth {depth}: {} nodes, reward {mean_reward}",
                    algo_name(algo),
                    out.best.node_count()
                );
                rows.push(SweepRow {
                    algo,
                    seed,
                    depth,
                    nodes: out.best.node_count(),
                    mean_reward,
                    best_reward_so_far: best,
                });
            }
        }
    }
    Ok(rows)
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Median over seeds of the smallest tree reaching `threshold`; `None`
/// unless every seed reaches it.
pub fn median_min_nodes(rows: &[SweepRow], algo: Weighting, threshold: f64) -> Option<f64> {
    let mut seeds: Vec<u64> = rows.iter().filter(|r| r.algo == algo).map(|r| r.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    if seeds.is_empty() {
        return None;
    }
    let per_seed = seeds
        .iter()
        .map(|&s| {
            rows.iter()
                .filter(|r| r.algo == algo && r.seed == s && r.mean_reward >= threshold)
                .map(|r| r.nodes as f64)
                .min_by(f64::total_cmp)
        })
        .collect::<Option<Vec<f64>>>()?;
    Some(median(per_seed))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThresholdRow {
    pub threshold: f64,
    pub viper_median_nodes: Option<f64>,
    pub dagger_median_nodes: Option<f64>,
}

impl ThresholdRow {
    /// Both algorithms reach the threshold on every seed.
    pub fn is_common(&self) -> bool {
        self.viper_median_nodes.is_some() && self.dagger_median_nodes.is_some()
    }
}

pub fn threshold_table(rows: &[SweepRow], thresholds: &[f64]) -> Vec<ThresholdRow> {
    thresholds
        .iter()
        .map(|&threshold| ThresholdRow {
            threshold,
            viper_median_nodes: median_min_nodes(rows, Weighting::Viper, threshold),
            dagger_median_nodes: median_min_nodes(rows, Weighting::Uniform, threshold),
        })
        .collect()
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| Error::io(path, e))
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from("algo,seed,depth,nodes,mean_reward,best_reward_so_far\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            algo_name(r.algo),
            r.seed,
            r.depth,
            r.nodes,
            r.mean_reward,
            r.best_reward_so_far
        ));
    }
    out
}

pub fn threshold_csv(table: &[ThresholdRow]) -> String {
    let cell = |x: Option<f64>| x.map_or(String::new(), |v| v.to_string());
    let mut out = String::from("threshold,viper_median_nodes,dagger_median_nodes\n");
    for r in table {
        out.push_str(&format!(
            "{},{},{}\n",
            r.threshold,
            cell(r.viper_median_nodes),
            cell(r.dagger_median_nodes)
        ));
    }
    out
}

pub fn write_sweep_csv(rows: &[SweepRow], path: &Path) -> Result<()> {
    write_file(path, &sweep_csv(rows))
}

pub fn write_threshold_csv(table: &[ThresholdRow], path: &Path) -> Result<()> {
    write_file(path, &threshold_csv(table))
}
