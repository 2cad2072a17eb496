//! Implementations of the subcommands. Each returns whether the run met
//! its convergence criteria; errors propagate to the caller.

use std::path::{Path, PathBuf};
use std::time::Instant;

use evoctl_core::field::param_name;
use evoctl_core::levelset::{fit, geometry, predict, sweep};
use evoctl_core::{
    map_scale, multistart, optimize, propagate_forward, ControlParams, Objective, PropagationCounter, ScaleVector,
};

use crate::config::{ConfigError, LoadedConfig, Problem};
use crate::results::{write_atomic, Outputs, PredictOutput, ResultDocument, ARTIFACT_VERSION, RESULT_FORMAT_VERSION};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] evoctl_core::Error),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{path}: not a result document: {source}")]
    Document { path: String, source: serde_json::Error },
    #[error("{0}")]
    Usage(String),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// How a command that ran to completion went.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Converged,
    NotConverged,
}

impl Outcome {
    pub fn exit_code(self) -> i32 {
        match self {
            Outcome::Converged => 0,
            Outcome::NotConverged => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum PlotKind {
    /// ⟨Θ⟩(t) and amplitudes along the optimized trajectory.
    Trajectory,
    /// Cost and gradient norm per accepted iteration.
    Trace,
    /// One row per sweep node.
    Sheet,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

fn load(config: &Path, seed: Option<u64>) -> CliResult<(LoadedConfig, Problem)> {
    let loaded = LoadedConfig::read(config)?;
    let mut problem = loaded.problem()?;
    apply_seed(&mut problem, seed);
    Ok((loaded, problem))
}

fn apply_seed(problem: &mut Problem, seed: Option<u64>) {
    if let Some(seed) = seed {
        problem.optimizer.rng_seed = seed;
        if let Some(plan) = &mut problem.sweep {
            plan.settings.optimizer.rng_seed = seed;
        }
    }
}

pub fn read_document(path: &Path) -> CliResult<ResultDocument> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| CliError::Document {
        path: path.display().to_string(),
        source,
    })
}

fn write_document(path: &Path, doc: &ResultDocument) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(doc).expect("result documents serialize");
    text.push('\n');
    write_atomic(path, text.as_bytes()).map_err(io_err(path))
}

struct Run {
    started: Instant,
    counter: PropagationCounter,
}

impl Run {
    fn start() -> Self {
        Self {
            started: Instant::now(),
            counter: PropagationCounter::new(),
        }
    }

    fn finish(self, command: &str, config_text: String, seed: u64, outputs: Outputs) -> ResultDocument {
        ResultDocument {
            format_version: RESULT_FORMAT_VERSION,
            artifact_version: ARTIFACT_VERSION.to_string(),
            command: command.to_string(),
            config_text,
            seed,
            outputs,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            forward_propagations: self.counter.forward(),
            backward_propagations: self.counter.backward(),
        }
    }
}

pub fn cmd_validate(config: &Path) -> CliResult<Outcome> {
    let (_, problem) = load(config, None)?;
    let nodes = problem.sweep.as_ref().map_or(0, |p| p.grid.node_count());
    println!(
        "ok: {} model, {} control parameters, scales {:?}, unscaled {:?}, {} sweep nodes",
        problem.model.kind().name(),
        problem.b_init.len(),
        problem.s_names,
        problem.c_names,
        nodes
    );
    Ok(Outcome::Converged)
}

pub fn cmd_optimize(config: &Path, out: &Path, seed: Option<u64>) -> CliResult<Outcome> {
    let (loaded, problem) = load(config, seed)?;
    let run = Run::start();
    let params = map_scale(&problem.model, &problem.s, &problem.c)?;
    let objective = Objective::new(&problem.model, params, problem.time_grid, problem.weights).with_counter(run.counter.clone());
    let result = multistart(&objective, &problem.b_init, &problem.optimizer)?;
    let outcome = if result.converged { Outcome::Converged } else { Outcome::NotConverged };
    eprintln!(
        "optimize: total {:.6e} (deviation {:.3e}, intensity {:.3e}), {} iterations, stop {:?}",
        result.cost.total, result.cost.deviation, result.cost.intensity, result.iterations, result.stop_reason
    );
    let outputs = Outputs::Optimize {
        s: problem.s.as_slice().to_vec(),
        c: problem.c.clone(),
        result,
    };
    let doc = run.finish("optimize", loaded.text, problem.optimizer.rng_seed, outputs);
    write_document(out, &doc)?;
    Ok(outcome)
}

pub fn cmd_sweep(config: &Path, out: &Path, seed: Option<u64>) -> CliResult<Outcome> {
    let (loaded, problem) = load(config, seed)?;
    let plan = problem
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Usage("config has no `sweep` section".into()))?;
    let run = Run::start();
    let mut sheet = sweep(&problem.model, &plan.grid, &plan.settings, &run.counter)?;
    sheet.metric_scale = plan.metric_scale.clone();
    let failed_nodes = sheet.failed_nodes();
    let unconverged_nodes = sheet.unconverged_nodes();
    eprintln!(
        "sweep: {} nodes, {} branches, {failed_nodes} failed, {unconverged_nodes} not converged",
        sheet.entries.len(),
        sheet.branch_count()
    );
    let outcome = if failed_nodes + unconverged_nodes == 0 {
        Outcome::Converged
    } else {
        Outcome::NotConverged
    };
    let outputs = Outputs::Sweep {
        sheet,
        failed_nodes,
        unconverged_nodes,
    };
    let doc = run.finish("sweep", loaded.text, plan.settings.optimizer.rng_seed, outputs);
    write_document(out, &doc)?;
    Ok(outcome)
}

pub struct PredictArgs {
    pub sheet: PathBuf,
    pub config: Option<PathBuf>,
    pub s: Vec<f64>,
    pub c: Vec<f64>,
    pub branch: Option<usize>,
    pub extrapolate: bool,
    pub refine: Option<usize>,
    pub out: PathBuf,
    pub seed: Option<u64>,
}

pub fn cmd_predict(args: &PredictArgs) -> CliResult<Outcome> {
    let doc = read_document(&args.sheet)?;
    let Outputs::Sweep { sheet, .. } = doc.outputs else {
        return Err(CliError::Usage(format!(
            "{} holds a `{}` result, not a sweep",
            args.sheet.display(),
            doc.command
        )));
    };
    let loaded = match &args.config {
        Some(path) => LoadedConfig::read(path)?,
        None => LoadedConfig::parse(doc.config_text)?,
    };
    let mut problem = loaded.problem()?;
    apply_seed(&mut problem, args.seed.or(Some(doc.seed)));

    let run = Run::start();
    let interp = fit(&sheet)?;
    let point: Vec<f64> = args.s.iter().chain(&args.c).copied().collect();
    let branch = args
        .branch
        .or_else(|| interp.branch_containing(&point))
        .unwrap_or(0);
    let prediction = predict(&interp, &args.s, &args.c, branch, args.extrapolate)?;
    let front = geometry(&interp, &args.s, &args.c, branch, args.extrapolate)?;

    let params = map_scale(&problem.model, &ScaleVector::new(args.s.clone())?, &args.c)?;
    let objective = Objective::new(&problem.model, params, problem.time_grid, problem.weights).with_counter(run.counter.clone());
    let predicted_cost = objective.cost(&prediction.b)?;
    let refined = match args.refine {
        Some(iters) if iters > 0 => {
            let mut settings = problem.optimizer.clone();
            settings.max_iters = iters;
            settings.restarts = 0;
            Some(optimize(&objective, &prediction.b, &settings)?)
        }
        _ => None,
    };
    eprintln!(
        "predict: branch {branch}, predicted total {:.6e}{}",
        predicted_cost.total,
        refined
            .as_ref()
            .map(|r| format!(", refined {:.6e} after {} iterations", r.cost.total, r.iterations))
            .unwrap_or_default()
    );

    let outputs = Outputs::Predict(Box::new(PredictOutput {
        s: args.s.clone(),
        c: args.c.clone(),
        branch,
        extrapolated: prediction.extrapolated,
        b: prediction.b.to_flat(),
        predicted_cost,
        geometry: front,
        refined,
    }));
    let doc = run.finish("predict", loaded.text, problem.optimizer.rng_seed, outputs);
    write_document(&args.out, &doc)?;
    Ok(Outcome::Converged)
}

pub fn cmd_export_plot(result: &Path, kind: PlotKind, out: &Path) -> CliResult<Outcome> {
    let doc = read_document(result)?;
    let bytes = match kind {
        PlotKind::Trajectory => trajectory_csv(&doc)?,
        PlotKind::Trace => trace_csv(&doc)?,
        PlotKind::Sheet => sheet_csv(&doc)?,
    };
    write_atomic(out, &bytes).map_err(io_err(out))?;
    Ok(Outcome::Converged)
}

fn unsupported(kind: &str, doc: &ResultDocument) -> CliError {
    CliError::Usage(format!("cannot export `{kind}` from a `{}` result", doc.command))
}

fn trajectory_csv(doc: &ResultDocument) -> CliResult<Vec<u8>> {
    let (s, c, b) = match &doc.outputs {
        Outputs::Optimize { s, c, result } => (s, c, result.b_opt.clone()),
        Outputs::Predict(p) => {
            let b = match &p.refined {
                Some(r) => r.b_opt.clone(),
                None => ControlParams::from_flat(&p.b)?,
            };
            (&p.s, &p.c, b)
        }
        Outputs::Sweep { .. } => return Err(unsupported("trajectory", doc)),
    };
    let problem = LoadedConfig::parse(doc.config_text.clone())?.problem()?;
    let params = map_scale(&problem.model, &ScaleVector::new(s.clone())?, c)?;
    let traj = propagate_forward(&problem.model, &params, &b, &problem.time_grid)?;
    let mut buf = Vec::new();
    traj.write_csv(&mut buf, problem.model.observable())
        .map_err(|source| CliError::Io {
            path: "trajectory".into(),
            source,
        })?;
    Ok(buf)
}

fn csv_error(e: csv::Error) -> CliError {
    CliError::Io {
        path: "csv".into(),
        source: e.into(),
    }
}

fn trace_csv(doc: &ResultDocument) -> CliResult<Vec<u8>> {
    let result = match &doc.outputs {
        Outputs::Optimize { result, .. } => result,
        Outputs::Predict(p) => p
            .refined
            .as_ref()
            .ok_or_else(|| CliError::Usage("prediction was not refined; no trace to export".into()))?,
        Outputs::Sweep { .. } => return Err(unsupported("trace", doc)),
    };
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["iter", "cost", "grad"]).map_err(csv_error)?;
    for t in &result.trace {
        w.write_record([t.iter.to_string(), t.total.to_string(), t.grad_inf_norm.to_string()])
            .map_err(csv_error)?;
    }
    w.into_inner().map_err(|e| csv_error(e.into_error().into()))
}

fn sheet_csv(doc: &ResultDocument) -> CliResult<Vec<u8>> {
    let Outputs::Sweep { sheet, .. } = &doc.outputs else {
        return Err(unsupported("sheet", doc));
    };
    let problem = LoadedConfig::parse(doc.config_text.clone())?.problem()?;
    let m = sheet.b_bounds.len();
    let mut header: Vec<String> = problem.s_names.iter().chain(&problem.c_names).cloned().collect();
    header.extend(["branch".to_string(), "converged".to_string()]);
    header.extend((0..m).map(param_name));
    header.extend(["cost", "deviation", "intensity"].map(String::from));

    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(&header).map_err(csv_error)?;
    for e in &sheet.entries {
        let mut row: Vec<String> = e.s.iter().chain(&e.c).map(f64::to_string).collect();
        row.push(e.branch.map(|b| b.to_string()).unwrap_or_default());
        row.push(e.converged.to_string());
        match &e.b {
            Some(b) => row.extend(b.iter().map(f64::to_string)),
            None => row.extend(std::iter::repeat_n(String::new(), m)),
        }
        for v in [e.total, e.deviation, e.intensity] {
            row.push(if v.is_finite() { v.to_string() } else { String::new() });
        }
        w.write_record(&row).map_err(csv_error)?;
    }
    w.into_inner().map_err(|e| csv_error(e.into_error().into()))
}
