use std::path::{Path, PathBuf};
use std::time::Instant;

use serde_json::{json, Value};

use vpk_core::benchmark::{depth_sweep, threshold_table, write_sweep_csv, write_threshold_csv, SweepConfig, DEFAULT_DEPTHS};
use vpk_core::dtree::DecisionTree;
use vpk_core::env::{make_env, AnyEnv, CartPoleParams, ToyPongParams};
use vpk_core::extraction::{evaluate, extract, write_report_csv, ExtractionConfig, Weighting};
use vpk_core::linalg::matrix_from_rows;
use vpk_core::mdp::{Action, Environment, StateVector};
use vpk_core::oracle::{
    duelpong_expert, toypong_expert, IlqrConfig, IlqrOracle, LoadedOracle, LqrOracle, Oracle, ScriptedOracle,
};
use vpk_core::verify::correctness::{
    cartpole_controlled, cartpole_spec, compose_closed_loop, encode_smtlib, reach_check_with_budget,
    replay_counterexample, replay_toypong, run_external_solver, toypong_closed_loop, toypong_spec, SolverAnswer,
    Verdict,
};
use vpk_core::verify::repair::{apply_patch, check_toypong, guard_for_counterexample, repair_toypong, Patch};
use vpk_core::verify::robustness::robustness_report;
use vpk_core::verify::stability::{certify_region, leaf_closed_loop, lyapunov_candidate, tree_roa, RHO_FLOOR};

use crate::config::RunConfig;
use crate::{
    Algo, BenchmarkArgs, Cli, CliError, Command, EvalArgs, ExtractArgs, RepairArgs, VerifyCommand, EXIT_INCONCLUSIVE,
    EXIT_REFUTED,
};

type CmdResult = Result<u8, CliError>;

struct Ctx {
    config: RunConfig,
    seed: u64,
    out: PathBuf,
}

impl Ctx {
    fn env_id(&self, flag: &Option<String>) -> Result<String, CliError> {
        flag.clone()
            .or_else(|| self.config.env.clone())
            .ok_or_else(|| CliError::Usage("--env is required".into()))
    }

    fn env(&self, id: &str) -> Result<AnyEnv, CliError> {
        make_env(id, self.config.env_params.as_ref()).map_err(|e| CliError::Usage(e.to_string()))
    }

    fn params<T: serde::de::DeserializeOwned + Default>(&self) -> Result<T, CliError> {
        match &self.config.env_params {
            None => Ok(T::default()),
            Some(v) => serde_json::from_value(v.clone()).map_err(|e| CliError::Usage(format!("env_params: {e}"))),
        }
    }

    fn file(&self, name: &str) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(&self.out)
            .map_err(|e| CliError::Failure(format!("cannot create {}: {e}", self.out.display())))?;
        Ok(self.out.join(name))
    }

    fn write_json(&self, name: &str, value: &Value) -> Result<PathBuf, CliError> {
        let path = self.file(name)?;
        let text = serde_json::to_string_pretty(value).map_err(|e| CliError::Failure(e.to_string()))?;
        std::fs::write(&path, text + "\n").map_err(|e| CliError::Failure(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

pub fn run(cli: Cli) -> CmdResult {
    let config = RunConfig::load(cli.config.as_deref())?;
    let seed = cli.seed.or(config.seed).unwrap_or(0);
    let out = cli.out.clone().or_else(|| config.out.clone());
    let default_out = |name: String| out.clone().unwrap_or_else(|| PathBuf::from("runs").join(name));
    let out = match &cli.command {
        Command::Extract(a) => {
            let env = a.env.clone().or_else(|| config.env.clone()).unwrap_or_default();
            let algo = match a.algo {
                Algo::Viper => "viper",
                Algo::Dagger => "dagger",
            };
            default_out(format!("{env}-{algo}-seed{seed}"))
        }
        Command::Eval(_) => default_out("eval".into()),
        Command::Verify(_) => default_out("verify".into()),
        Command::Benchmark(_) => default_out("benchmark".into()),
        Command::Repair(_) => default_out("repair".into()),
    };
    let ctx = Ctx { config, seed, out };
    match cli.command {
        Command::Extract(a) => cmd_extract(&ctx, a),
        Command::Eval(a) => cmd_eval(&ctx, a),
        Command::Verify(VerifyCommand::Robust { tree, states }) => cmd_robust(&ctx, &tree, &states),
        Command::Verify(VerifyCommand::Correct {
            env,
            tree,
            tmax,
            budget,
            y0,
        }) => cmd_correct(&ctx, &env, &tree, tmax, budget, y0),
        Command::Verify(VerifyCommand::Stability { env, tree, degree }) => cmd_stability(&ctx, &env, &tree, degree),
        Command::Benchmark(a) => cmd_benchmark(&ctx, a),
        Command::Repair(a) => cmd_repair(&ctx, a),
    }
}

/// Type-erased oracle so every command can share one dispatch path.
struct DynOracle(Box<dyn Oracle<AnyEnv>>);

impl Oracle<AnyEnv> for DynOracle {
    fn act(&self, s: &StateVector) -> vpk_core::Result<Action> {
        self.0.act(s)
    }

    fn q_values(&self, env: &AnyEnv, s: &StateVector) -> vpk_core::Result<Vec<f64>> {
        self.0.q_values(env, s)
    }
}

fn build_oracle(ctx: &Ctx, spec: &Option<String>, env: &AnyEnv) -> Result<DynOracle, CliError> {
    let name = spec.clone().or_else(|| ctx.config.oracle.clone()).unwrap_or_else(|| {
        match env {
            AnyEnv::CartPole(_) => "lqr",
            _ => "scripted",
        }
        .into()
    });
    let wrong_env = |name: &str| CliError::Usage(format!("oracle `{name}` is not available for `{}`", env.id()));
    let oracle: Box<dyn Oracle<AnyEnv>> = match (name.as_str(), env) {
        ("lqr", AnyEnv::CartPole(c)) => Box::new(LqrOracle::standard(c.params.clone())?),
        ("ilqr", AnyEnv::CartPole(c)) => Box::new(IlqrOracle::new(c.params.clone(), IlqrConfig::default(), 0.05)?),
        ("scripted", AnyEnv::ToyPong(t)) => Box::new(ScriptedOracle {
            expert: toypong_expert(t.params.clone(), 1.0),
            num_actions: 3,
            n_rollouts: 1,
            horizon: 60,
            seed: ctx.seed,
        }),
        ("scripted", AnyEnv::DuelPong(_)) => Box::new(ScriptedOracle {
            expert: duelpong_expert(0.5),
            num_actions: 3,
            n_rollouts: 1,
            horizon: 40,
            seed: ctx.seed,
        }),
        ("lqr" | "ilqr" | "scripted", _) => return Err(wrong_env(&name)),
        (path, _) => {
            let path = Path::new(path);
            if !path.is_file() {
                return Err(CliError::Usage(format!("oracle file {} does not exist", path.display())));
            }
            let loaded = LoadedOracle::load(path).map_err(|e| CliError::Usage(e.to_string()))?;
            if loaded.input_dim() != env.dim() {
                return Err(CliError::Usage(format!(
                    "oracle file {} expects {}-dimensional states, `{}` has {}",
                    path.display(),
                    loaded.input_dim(),
                    env.id(),
                    env.dim()
                )));
            }
            Box::new(loaded)
        }
    };
    Ok(DynOracle(oracle))
}

fn load_tree(path: &Path) -> Result<DecisionTree, CliError> {
    if !path.is_file() {
        return Err(CliError::Usage(format!("tree file {} does not exist", path.display())));
    }
    DecisionTree::load(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

fn extraction_config(ctx: &Ctx, iters: Option<usize>, rollouts: Option<usize>, eval: Option<usize>) -> ExtractionConfig {
    let mut config = ctx.config.extraction.clone();
    config.seed = ctx.seed;
    if let Some(n) = iters {
        config.iterations = n;
    }
    if let Some(m) = rollouts {
        config.rollouts_per_iteration = m;
    }
    if let Some(e) = eval {
        config.eval_rollouts = e;
    }
    config
}

fn cmd_extract(ctx: &Ctx, a: ExtractArgs) -> CmdResult {
    let id = ctx.env_id(&a.env)?;
    let env = ctx.env(&id)?;
    let oracle = build_oracle(ctx, &a.oracle, &env)?;
    let mut config = extraction_config(ctx, a.iters, a.rollouts, a.eval_rollouts);
    if let Some(d) = a.depth {
        config.tree.max_depth = d;
    }
    config.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let weighting = match a.algo {
        Algo::Viper => Weighting::Viper,
        Algo::Dagger => Weighting::Uniform,
    };
    let start = Instant::now();
    let result = extract(&env, &oracle, &config, weighting)?;
    log::info!("extraction took {:.2?}", start.elapsed());
    let tree_path = ctx.file("tree.json")?;
    result.best.save(&tree_path)?;
    let report_path = ctx.file("report.csv")?;
    write_report_csv(&result.report, &report_path)?;
    let best = &result.report[result.best_iteration];
    println!(
        "best tree from iteration {}: {} nodes, mean reward {}",
        best.iteration, best.nodes, best.mean_reward
    );
    println!("wrote {} and {}", tree_path.display(), report_path.display());
    Ok(0)
}

fn cmd_eval(ctx: &Ctx, a: EvalArgs) -> CmdResult {
    let id = ctx.env_id(&a.env)?;
    let env = ctx.env(&id)?;
    let tree = load_tree(&a.tree)?;
    if tree.dim != env.dim() {
        return Err(CliError::Usage(format!(
            "tree has dimension {}, `{id}` has {}",
            tree.dim,
            env.dim()
        )));
    }
    if a.rollouts == 0 {
        return Err(CliError::Usage("--rollouts must be at least 1".into()));
    }
    let reward = evaluate(&env, &tree, a.rollouts, ctx.seed)?;
    let path = ctx.write_json(
        "eval.json",
        &json!({
            "env": id,
            "nodes": tree.node_count(),
            "rollouts": a.rollouts,
            "seed": ctx.seed,
            "mean_reward": reward,
        }),
    )?;
    println!("mean reward {reward} over {} rollouts", a.rollouts);
    println!("wrote {}", path.display());
    Ok(0)
}

fn read_states(path: &Path, dim: usize) -> Result<Vec<Vec<f64>>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read states {}: {e}", path.display())))?;
    let mut states = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed: Result<Vec<f64>, _> = line.split(',').map(|x| x.trim().parse::<f64>()).collect();
        match parsed {
            Ok(s) if s.len() == dim && s.iter().all(|x| x.is_finite()) => states.push(s),
            Ok(s) => {
                return Err(CliError::Usage(format!(
                    "{} line {}: expected {dim} finite values, got {}",
                    path.display(),
                    k + 1,
                    s.len()
                )))
            }
            Err(_) if states.is_empty() && k == 0 => continue,
            Err(e) => return Err(CliError::Usage(format!("{} line {}: {e}", path.display(), k + 1))),
        }
    }
    Ok(states)
}

fn cmd_robust(ctx: &Ctx, tree: &Path, states: &Path) -> CmdResult {
    let tree = load_tree(tree)?;
    let states = read_states(states, tree.dim)?;
    let path = ctx.file("robustness.csv")?;
    let summary = robustness_report(&tree, &states, &path)?;
    log::info!("slowest query {} us", summary.max_micros);
    println!("{} states, smallest radius {}", states.len(), summary.min_epsilon);
    println!("wrote {}", path.display());
    Ok(0)
}

fn verdict_code(v: &Verdict) -> u8 {
    match v {
        Verdict::Safe { .. } => 0,
        Verdict::Counterexample { .. } => EXIT_REFUTED,
        Verdict::BudgetExceeded { .. } => EXIT_INCONCLUSIVE,
    }
}

fn cmd_correct(
    ctx: &Ctx,
    env: &Option<String>,
    tree: &Path,
    tmax: Option<usize>,
    budget: Option<usize>,
    y0: Option<f64>,
) -> CmdResult {
    let id = ctx.env_id(env)?;
    let tree = load_tree(tree)?;
    let vc = &ctx.config.verification;
    let budget = budget.unwrap_or(vc.budget);
    let (system, spec, toypong) = match id.as_str() {
        "toypong" => {
            let params: ToyPongParams = ctx.params()?;
            params.validate().map_err(|e| CliError::Usage(e.to_string()))?;
            let t_max = tmax.or(vc.t_max).unwrap_or(params.bounce_horizon());
            let system = toypong_closed_loop(&params, &tree).map_err(|e| CliError::Usage(e.to_string()))?;
            (system, toypong_spec(&params, t_max)?, Some(params))
        }
        "cartpole" => {
            let params: CartPoleParams = ctx.params()?;
            let t_max = tmax.or(vc.t_max).unwrap_or(10);
            let system = compose_closed_loop(&cartpole_controlled(&params)?, &tree)
                .map_err(|e| CliError::Usage(e.to_string()))?;
            let spec = cartpole_spec(y0.unwrap_or(vc.y0), t_max).map_err(|e| CliError::Usage(e.to_string()))?;
            (system, spec, None)
        }
        other => {
            return Err(CliError::Usage(format!(
                "bounded correctness supports toypong and cartpole, not `{other}`"
            )))
        }
    };
    if spec.t_max == 0 {
        return Err(CliError::Usage("--tmax must be at least 1".into()));
    }
    let smt_path = ctx.file("query.smt2")?;
    std::fs::write(&smt_path, encode_smtlib(&system, &spec)?)
        .map_err(|e| CliError::Failure(format!("{}: {e}", smt_path.display())))?;
    let start = Instant::now();
    let verdict = reach_check_with_budget(&system, &spec, budget)?;
    log::info!("reachability took {:.2?}", start.elapsed());
    let mut report = verdict.to_json();
    report["env"] = json!(id);
    report["t_max"] = json!(spec.t_max);
    if let Some(cex) = verdict.counterexample() {
        let replays = match &toypong {
            Some(params) => replay_toypong(params, &tree, &cex.trace[0], &spec)?,
            None => replay_counterexample(
                &cex.trace[0],
                |s| {
                    system
                        .step_f64(s)
                        .ok_or_else(|| vpk_core::Error::invalid("replay left every guard"))
                },
                &spec,
            )?,
        };
        report["counterexample"]["replays"] = json!(replays);
    }
    if let Ok(template) = std::env::var("VPK_SOLVER_CMD") {
        let answer = match run_external_solver(&template, &smt_path, system.dim)? {
            SolverAnswer::Sat { .. } => "sat".to_string(),
            SolverAnswer::Unsat => "unsat".to_string(),
            SolverAnswer::Unknown(s) => format!("unknown: {s}"),
        };
        let agrees = match answer.as_str() {
            "sat" => Some(verdict.counterexample().is_some()),
            "unsat" => Some(verdict.is_safe()),
            _ => None,
        };
        report["external_solver"] = json!({ "answer": answer, "agrees": agrees });
    }
    let path = ctx.write_json("verdict.json", &report)?;
    println!("{}: {} after {} search nodes", id, verdict.name(), verdict.nodes());
    if let Some(cex) = verdict.counterexample() {
        println!("counterexample of {} steps from {:?}", cex.trace.len() - 1, cex.trace[0]);
    }
    println!("wrote {} and {}", path.display(), smt_path.display());
    Ok(verdict_code(&verdict))
}

fn cmd_stability(ctx: &Ctx, env: &Option<String>, tree: &Path, degree: Option<u32>) -> CmdResult {
    let id = ctx.env_id(env)?;
    if id != "cartpole" {
        return Err(CliError::Usage(format!("stability supports cartpole, not `{id}`")));
    }
    let tree = load_tree(tree)?;
    let params: CartPoleParams = ctx.params()?;
    let vc = &ctx.config.verification;
    let f_env = params
        .taylor(degree.unwrap_or(vc.taylor_degree))
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let opts = vc.certify;
    let (closed, _) = leaf_closed_loop(&tree, &f_env).map_err(|e| CliError::Usage(e.to_string()))?;
    let refute = |reason: String, point: Option<Vec<f64>>| -> CmdResult {
        let path = ctx.write_json("refutation.json", &json!({ "reason": reason, "point": point }))?;
        println!("not certified: {reason}");
        if let Some(p) = &point {
            println!("V-dot is not negative at {p:?}");
        }
        println!("wrote {}", path.display());
        Ok(EXIT_REFUTED)
    };
    let p = match lyapunov_candidate(&matrix_from_rows(&closed.linear_part())) {
        Ok(p) => p,
        Err(e) => return refute(e.to_string(), None),
    };
    let start = Instant::now();
    match tree_roa(&tree, &f_env, &opts) {
        Ok(cert) => {
            log::info!("certification took {:.2?}", start.elapsed());
            let path = ctx.file("certificate.json")?;
            std::fs::write(&path, cert.to_json() + "\n")
                .map_err(|e| CliError::Failure(format!("{}: {e}", path.display())))?;
            println!("certified rho {} with {} boxes", cert.rho, cert.stats.boxes);
            println!("wrote {}", path.display());
            Ok(0)
        }
        Err(vpk_core::Error::NotConverged(reason) | vpk_core::Error::InvalidArgument(reason)) => {
            let point = certify_region(&p, &closed, RHO_FLOOR, &opts)?.violation().map(<[f64]>::to_vec);
            refute(reason, point)
        }
        Err(e) => Err(e.into()),
    }
}

fn cmd_benchmark(ctx: &Ctx, a: BenchmarkArgs) -> CmdResult {
    let id = ctx.env_id(&a.env)?;
    let env = ctx.env(&id)?;
    let oracle = build_oracle(ctx, &a.oracle, &env)?;
    let depths = a.depths.unwrap_or_else(|| DEFAULT_DEPTHS.to_vec());
    if depths.is_empty() {
        return Err(CliError::Usage("--depths must list at least one depth".into()));
    }
    let base = extraction_config(ctx, a.iters, a.rollouts, a.eval_rollouts);
    base.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let sweep = SweepConfig {
        depths,
        algos: vec![Weighting::Viper, Weighting::Uniform],
        seeds: a.seeds.unwrap_or_else(|| vec![ctx.seed]),
        eval_rollouts: base.eval_rollouts,
        eval_seed: ctx.seed,
    };
    sweep.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let start = Instant::now();
    let rows = depth_sweep(&env, &oracle, &base, &sweep)?;
    log::info!("sweep took {:.2?}", start.elapsed());
    let path = ctx.file("sweep.csv")?;
    write_sweep_csv(&rows, &path)?;
    println!("{} extractions", rows.len());
    println!("wrote {}", path.display());
    if let Some(thresholds) = a.thresholds {
        let table = threshold_table(&rows, &thresholds);
        let path = ctx.file("thresholds.csv")?;
        write_threshold_csv(&table, &path)?;
        let common = table.iter().filter(|r| r.is_common()).count();
        println!("{common} of {} thresholds reached by both algorithms", table.len());
        println!("wrote {}", path.display());
    }
    Ok(0)
}

fn parse_patches(spec: &str) -> Result<Vec<Patch>, CliError> {
    let text = if spec.trim_start().starts_with(['{', '[']) {
        spec.to_string()
    } else {
        std::fs::read_to_string(spec).map_err(|e| CliError::Usage(format!("cannot read patch {spec}: {e}")))?
    };
    let value: Value = serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("patch: {e}")))?;
    let items = match value {
        Value::Array(items) => items,
        other => vec![other],
    };
    items
        .into_iter()
        .map(|v| {
            let patch: Patch = serde_json::from_value(v).map_err(|e| CliError::Usage(format!("patch: {e}")))?;
            Ok(match patch {
                Patch::Param { name, value } if name == "L" => Patch::Param {
                    name: "paddle_half_length".into(),
                    value,
                },
                other => other,
            })
        })
        .collect()
}

fn cmd_repair(ctx: &Ctx, a: RepairArgs) -> CmdResult {
    let tree = load_tree(&a.tree)?;
    let params: ToyPongParams = ctx.params()?;
    params.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let vc = &ctx.config.verification;
    let t_max = a.tmax.or(vc.t_max).unwrap_or(params.bounce_horizon());
    let budget = a.budget.unwrap_or(vc.budget);
    let mut patches = Vec::new();
    for spec in &a.patch {
        patches.extend(parse_patches(spec)?);
    }
    for patch in &patches {
        apply_patch(&params, &tree, patch).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    if a.guard_counterexample {
        let checked = check_toypong(&params, &tree, t_max, budget)?;
        match checked.verdict.counterexample() {
            Some(cex) => patches.push(guard_for_counterexample(&params, cex)?),
            None => println!("no counterexample to guard against ({})", checked.verdict.name()),
        }
    }
    if patches.is_empty() {
        return Err(CliError::Usage("give at least one --patch or --guard-counterexample".into()));
    }
    let steps = repair_toypong(&params, &tree, &patches, t_max, budget)?;
    for (k, step) in steps.iter().enumerate() {
        let (p, t) = apply_patch(&params, &tree, &step.patch)?;
        match step.patch {
            Patch::RootGuard { .. } => t.save(&ctx.file(&format!("patched-{k}.tree.json"))?)?,
            Patch::Param { .. } => {
                ctx.write_json(&format!("patched-{k}.params.json"), &json!(p))?;
            }
        }
        println!(
            "{}: {} ({} -> {} nodes)",
            step.patch.describe(),
            step.delta(),
            step.nodes_before,
            step.nodes_after
        );
    }
    let path = ctx.write_json(
        "repair.json",
        &json!({
            "env_params": params,
            "t_max": t_max,
            "budget": budget,
            "steps": steps.iter().map(|s| s.to_json()).collect::<Vec<_>>(),
        }),
    )?;
    println!("wrote {}", path.display());
    Ok(0)
}
