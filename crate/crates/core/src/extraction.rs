//! Decision-tree extraction by imitation: VIPER (Q-weighted resampling of
//! the aggregated dataset) and its unweighted DAgger baseline.

use std::io::Write;
use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dtree::{fit_classifier, fit_linear, DecisionTree, LeafKind, TreeConfig};
use crate::error::{Error, Result};
use crate::mdp::{derive_seed, rng_from_seed, Action, ActionSpace, Environment, Policy, StateVector};
use crate::oracle::{ell_tilde_from_q, Oracle};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetEntry {
    pub state: StateVector,
    pub action: Action,
    pub weight: f64,
}

/// States labelled with the oracle action and weighted by `l~(s)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AggregatedDataset {
    entries: Vec<DatasetEntry>,
}

impl AggregatedDataset {
    pub fn new() -> Self {
        AggregatedDataset::default()
    }

    pub fn push(&mut self, entry: DatasetEntry) -> Result<()> {
        if !(entry.weight.is_finite() && entry.weight >= 0.0) {
            return Err(Error::invalid(format!(
                "dataset weight {} is not a nonnegative finite number",
                entry.weight
            )));
        }
        if let Some(first) = self.entries.first() {
            entry.state.check_dim(first.state.dim())?;
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn extend(&mut self, entries: impl IntoIterator<Item = DatasetEntry>) -> Result<()> {
        for e in entries {
            self.push(e)?;
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[DatasetEntry] {
        &self.entries
    }

    pub fn total_weight(&self) -> f64 {
        self.entries.iter().map(|e| e.weight).sum()
    }
}

/// Indices of `size` draws with replacement, each entry chosen with
/// probability proportional to its weight.
///
/// Weights are divided by their maximum first, so any constant weighting
/// reproduces the uniform draws exactly.
pub fn resample_indices(weights: &[f64], size: usize, seed: u64) -> Result<Vec<usize>> {
    if size == 0 {
        return Err(Error::invalid("resample size must be at least 1"));
    }
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::invalid("resample weights must be nonnegative and finite"));
    }
    let max = weights.iter().copied().fold(0.0, f64::max);
    if max <= 0.0 {
        return Err(Error::ZeroWeights);
    }
    let mut cumulative = Vec::with_capacity(weights.len());
    let mut total = 0.0;
    for w in weights {
        total += w / max;
        cumulative.push(total);
    }
    let mut rng = rng_from_seed(seed);
    Ok((0..size)
        .map(|_| {
            let u = rng.gen::<f64>() * total;
            let k = cumulative.partition_point(|&c| c <= u);
            // a zero-weight entry shares its cumulative value with its predecessor
            // and can never be the first index exceeding u
            k.min(weights.len() - 1)
        })
        .collect())
}

/// `size` entries drawn with replacement, proportional to weight.
pub fn resample(dataset: &AggregatedDataset, size: usize, seed: u64) -> Result<Vec<(StateVector, Action)>> {
    let weights: Vec<f64> = dataset.entries.iter().map(|e| e.weight).collect();
    Ok(resample_indices(&weights, size, seed)?
        .into_iter()
        .map(|k| (dataset.entries[k].state.clone(), dataset.entries[k].action))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExtractionConfig {
    pub iterations: usize,
    pub rollouts_per_iteration: usize,
    /// Defaults to the size of the aggregated dataset.
    pub resample_size: Option<usize>,
    pub tree: TreeConfig,
    pub eval_rollouts: usize,
    pub seed: u64,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            iterations: 80,
            rollouts_per_iteration: 10,
            resample_size: None,
            tree: TreeConfig::default(),
            eval_rollouts: 30,
            seed: 0,
        }
    }
}

impl ExtractionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::invalid("iterations must be at least 1"));
        }
        if self.rollouts_per_iteration == 0 {
            return Err(Error::invalid("rollouts_per_iteration must be at least 1"));
        }
        if self.eval_rollouts == 0 {
            return Err(Error::invalid("eval_rollouts must be at least 1"));
        }
        if self.resample_size == Some(0) {
            return Err(Error::invalid("resample_size must be at least 1"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Weighting {
    /// Resample proportionally to `l~(s)`.
    Viper,
    /// Resample uniformly.
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub dataset_size: usize,
    pub nodes: usize,
    pub mean_reward: f64,
}

#[derive(Debug, Clone)]
pub struct Extraction {
    pub best: DecisionTree,
    pub best_iteration: usize,
    pub candidates: Vec<DecisionTree>,
    pub report: Vec<IterationRecord>,
    pub dataset: AggregatedDataset,
}

pub fn write_report_csv(report: &[IterationRecord], path: &Path) -> Result<()> {
    let mut out = String::from("iteration,dataset_size,nodes,mean_reward\n");
    for r in report {
        out.push_str(&format!(
            "{},{},{},{}\n",
            r.iteration, r.dataset_size, r.nodes, r.mean_reward
        ));
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(out.as_bytes()).map_err(|e| Error::io(path, e))
}

/// Mean total reward over `n` rollouts run in parallel; seeds follow
/// [`crate::mdp::mean_reward`].
pub fn evaluate<E: Environment, P: Policy + ?Sized>(env: &E, policy: &P, n: usize, seed: u64) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("need at least one evaluation rollout"));
    }
    let returns: Vec<f64> = (0..n)
        .into_par_iter()
        .map(|i| {
            crate::mdp::rollout(env, policy, env.max_steps(), derive_seed(seed, i as u64))
                .map(|t| t.total_reward())
        })
        .collect::<Result<_>>()?;
    Ok(returns.iter().sum::<f64>() / n as f64)
}

/// Highest mean evaluation reward; ties go to fewer nodes, then the
/// earlier candidate. Returns the chosen index and every mean reward.
pub fn select_best_index<E: Environment>(
    candidates: &[DecisionTree],
    env: &E,
    eval_rollouts: usize,
    seed: u64,
) -> Result<(usize, Vec<f64>)> {
    if candidates.is_empty() {
        return Err(Error::invalid("no candidate trees to select from"));
    }
    let rewards = candidates
        .iter()
        .map(|t| evaluate(env, t, eval_rollouts, seed))
        .collect::<Result<Vec<_>>>()?;
    Ok((pick_best(candidates, &rewards), rewards))
}

fn pick_best(candidates: &[DecisionTree], rewards: &[f64]) -> usize {
    let mut best = 0;
    for k in 1..candidates.len() {
        let better = rewards[k] > rewards[best]
            || (rewards[k] == rewards[best] && candidates[k].node_count() < candidates[best].node_count());
        if better {
            best = k;
        }
    }
    best
}

pub fn select_best<E: Environment>(
    candidates: &[DecisionTree],
    env: &E,
    eval_rollouts: usize,
    seed: u64,
) -> Result<DecisionTree> {
    let (k, _) = select_best_index(candidates, env, eval_rollouts, seed)?;
    Ok(candidates[k].clone())
}

/// Runs one trajectory under `tree` (the oracle when `None`), labelling every visited state
/// (the final one included) with the oracle action and its weight.
fn collect_rollout<E: Environment, O: Oracle<E>>(
    env: &E,
    oracle: &O,
    tree: Option<&DecisionTree>,
    weighting: Weighting,
    seed: u64,
) -> Result<Vec<DatasetEntry>> {
    let mut sim = env.clone();
    let mut rng = rng_from_seed(seed);
    let mut state = sim.reset(&mut rng);
    let discrete = matches!(sim.action_space(), ActionSpace::Discrete { .. });
    let mut entries = Vec::new();
    let mut label = |sim: &E, state: &StateVector, last: bool| -> Result<Action> {
        let action = oracle.act(state)?;
        let weight = match (weighting, discrete, action) {
            // no action is taken after the episode ends, so every Q-value is zero
            (Weighting::Viper, true, _) if last => 0.0,
            (Weighting::Viper, true, Action::Discrete(a)) => {
                ell_tilde_from_q(&oracle.q_values(sim, state)?, a)?
            }
            _ => 1.0,
        };
        entries.push(DatasetEntry {
            state: state.clone(),
            action,
            weight,
        });
        Ok(action)
    };
    for _ in 0..sim.max_steps() {
        let expert = label(&sim, &state, false)?;
        let action = match tree {
            None => expert,
            Some(tree) => tree.predict(&state)?,
        };
        let tr = sim.step(action)?;
        state = tr.state;
        if tr.done {
            break;
        }
    }
    label(&sim, &state, true)?;
    Ok(entries)
}

fn train(dataset: &AggregatedDataset, config: &ExtractionConfig, discrete: bool, seed: u64) -> Result<DecisionTree> {
    let size = config.resample_size.unwrap_or(dataset.len());
    let weights: Vec<f64> = dataset.entries.iter().map(|e| e.weight).collect();
    let indices = match resample_indices(&weights, size, seed) {
        Err(Error::ZeroWeights) => {
            log::warn!("all dataset weights are zero; resampling uniformly");
            resample_indices(&vec![1.0; weights.len()], size, seed)?
        }
        other => other?,
    };
    let xs: Vec<&StateVector> = indices.iter().map(|&k| &dataset.entries[k].state).collect();
    let mut tree_config = config.tree.clone();
    if discrete {
        tree_config.leaf_kind = LeafKind::Discrete;
        let labels = indices
            .iter()
            .map(|&k| {
                dataset.entries[k]
                    .action
                    .index()
                    .ok_or_else(|| Error::invalid("oracle returned a continuous action in a discrete space"))
            })
            .collect::<Result<Vec<_>>>()?;
        fit_classifier(&xs, &labels, None, &tree_config)
    } else {
        tree_config.leaf_kind = LeafKind::Linear;
        let targets = indices
            .iter()
            .map(|&k| {
                dataset.entries[k]
                    .action
                    .value()
                    .ok_or_else(|| Error::invalid("oracle returned a discrete action in a continuous space"))
            })
            .collect::<Result<Vec<_>>>()?;
        fit_linear(&xs, &targets, None, &tree_config)
    }
}

/// The shared imitation loop. Iteration 1 samples under the oracle, later
/// iterations under the previous tree; each iteration aggregates the newly
/// labelled states, resamples and trains a tree.
pub fn extract<E: Environment, O: Oracle<E>>(
    env: &E,
    oracle: &O,
    config: &ExtractionConfig,
    weighting: Weighting,
) -> Result<Extraction> {
    config.validate()?;
    let discrete = matches!(env.action_space(), ActionSpace::Discrete { .. });
    let rollout_seed = derive_seed(config.seed, 1);
    let eval_seed = derive_seed(config.seed, 2);
    let train_seed = derive_seed(config.seed, 3);
    let m = config.rollouts_per_iteration;
    let mut dataset = AggregatedDataset::new();
    let mut candidates: Vec<DecisionTree> = Vec::with_capacity(config.iterations);
    let mut report = Vec::with_capacity(config.iterations);
    for i in 0..config.iterations {
        let sampler = candidates.last();
        let batches: Vec<Vec<DatasetEntry>> = (0..m)
            .into_par_iter()
            .map(|j| {
                collect_rollout(
                    env,
                    oracle,
                    sampler,
                    weighting,
                    derive_seed(rollout_seed, (i * m + j) as u64),
                )
            })
            .collect::<Result<_>>()?;
        for batch in batches {
            dataset.extend(batch)?;
        }
        let tree = train(&dataset, config, discrete, derive_seed(train_seed, i as u64))?;
        let mean_reward = evaluate(env, &tree, config.eval_rollouts, eval_seed)?;
        log::info!(
            "iteration {}: {} states, {} nodes, mean reward {mean_reward}",
            i + 1,
            dataset.len(),
            tree.node_count()
        );
        report.push(IterationRecord {
            iteration: i + 1,
            dataset_size: dataset.len(),
            nodes: tree.node_count(),
            mean_reward,
        });
        candidates.push(tree);
    }
    let rewards: Vec<f64> = report.iter().map(|r| r.mean_reward).collect();
    let best_iteration = pick_best(&candidates, &rewards);
    Ok(Extraction {
        best: candidates[best_iteration].clone(),
        best_iteration: best_iteration + 1,
        candidates,
        report,
        dataset,
    })
}

pub fn viper<E: Environment, O: Oracle<E>>(env: &E, oracle: &O, config: &ExtractionConfig) -> Result<Extraction> {
    extract(env, oracle, config, Weighting::Viper)
}

pub fn dagger_baseline<E: Environment, O: Oracle<E>>(
    env: &E,
    oracle: &O,
    config: &ExtractionConfig,
) -> Result<Extraction> {
    extract(env, oracle, config, Weighting::Uniform)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weight_entries_are_never_drawn() {
        let idx = resample_indices(&[1.0, 0.0, 2.0, 0.0], 10_000, 3).unwrap();
        assert!(idx.iter().all(|&k| k == 0 || k == 2));
        assert!(matches!(resample_indices(&[0.0, 0.0], 5, 0), Err(Error::ZeroWeights)));
        assert!(resample_indices(&[1.0], 0, 0).is_err());
    }

    #[test]
    fn constant_weights_match_uniform_draws() {
        let a = resample_indices(&[0.37; 50], 500, 9).unwrap();
        let b = resample_indices(&[1.0; 50], 500, 9).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ties_prefer_smaller_then_earlier() {
        let big = DecisionTree::from_json(
            r#"{"version":1,"dim":1,"leaf_kind":"discrete","nodes":[
                {"kind":"split","feature":0,"threshold":0.0,"left":1,"right":2},
                {"kind":"action","action":0},{"kind":"action","action":1}]}"#,
        )
        .unwrap();
        let small = DecisionTree::single_action(1, 0);
        let trees = vec![big.clone(), small.clone(), small];
        assert_eq!(pick_best(&trees, &[5.0, 5.0, 5.0]), 1);
        assert_eq!(pick_best(&trees, &[6.0, 5.0, 5.0]), 0);
        assert_eq!(pick_best(&trees[..1], &[0.0]), 0);
    }
}
