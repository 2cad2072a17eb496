use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use evoctl::results::{Outputs, ResultDocument};
use serde_json::{json, Value};

fn small_config() -> Value {
    json!({
        "model": {
            "name": "two_level",
            "scales": [{ "name": "s", "value": 1.0, "min": 0.5, "max": 1.5 }],
            "unscaled": [{ "name": "omega_ref", "value": 1.0, "min": 0.5, "max": 2.0 }],
            "system": [{ "name": "omega0", "factors": ["omega_ref", "s"] }]
        },
        "field": {
            "pulses": 1,
            "b_init": [0.4, 5.0, 2.0, 1.0],
            "b_bounds": [[0.0, 2.0], [0.0, 10.0], [0.5, 10.0], [0.0, 3.0]]
        },
        "grid": { "horizon": 10.0, "steps": 200 },
        "cost": { "k": 100.0, "l": 0.001, "theta0": -1.0, "observable": "sigma_z" },
        "optimizer": { "max_iters": 200, "grad_tol": 1e-3, "restarts": 1 },
        "sweep": { "s_axes": [{ "name": "s", "start": 0.9, "stop": 1.1, "count": 5 }] },
        "seed": 5
    })
}

struct Workspace {
    dir: tempfile::TempDir,
}

impl Workspace {
    fn new() -> Self {
        Self {
            dir: tempfile::tempdir().unwrap(),
        }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn config(&self, name: &str, value: &Value) -> PathBuf {
        let path = self.path(name);
        std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
        path
    }
}

fn evoctl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evoctl"))
        .args(args)
        .env_remove("EVOCTL_THREADS")
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn document(p: &Path) -> ResultDocument {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn optimize_writes_result_and_echoes_config() {
    let ws = Workspace::new();
    let cfg = ws.config("c.json", &small_config());
    let out = ws.path("r.json");
    let o = evoctl(&["optimize", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc = document(&out);
    assert_eq!(doc.config_text, std::fs::read_to_string(&cfg).unwrap());
    assert_eq!(doc.command, "optimize");
    assert_eq!(doc.seed, 5);
    assert!(doc.forward_propagations > 0);
    match doc.outputs {
        Outputs::Optimize { result, .. } => assert!(result.converged),
        other => panic!("unexpected outputs {other:?}"),
    }
}

#[test]
fn seed_flag_overrides_config() {
    let ws = Workspace::new();
    let cfg = ws.config("c.json", &small_config());
    let out = ws.path("r.json");
    let o = evoctl(&["optimize", "--config", s(&cfg), "--out", s(&out), "--seed", "99"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert_eq!(document(&out).seed, 99);
}

#[test]
fn non_convergence_exits_two_and_still_writes() {
    let ws = Workspace::new();
    let mut v = small_config();
    v["optimizer"] = json!({ "max_iters": 1, "grad_tol": 1e-12, "restarts": 0 });
    v["field"]["b_init"] = json!([0.05, 1.0, 0.6, 2.5]);
    let cfg = ws.config("c.json", &v);
    let out = ws.path("r.json");
    let o = evoctl(&["optimize", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(out.exists());
}

#[test]
fn negative_width_bound_names_the_key() {
    let ws = Workspace::new();
    let mut v = small_config();
    v["field"]["b_bounds"][2] = json!([-1.0, 10.0]);
    let cfg = ws.config("c.json", &v);
    for args in [vec!["validate", "--config", s(&cfg)], vec!["optimize", "--config", s(&cfg), "--out", "unused.json"]] {
        let o = evoctl(&args);
        assert_eq!(o.status.code(), Some(1));
        let msg = stderr(&o);
        assert!(msg.contains("field.b_bounds[2]") && msg.contains("line"), "{msg}");
    }
}

#[test]
fn validate_accepts_and_rejects() {
    let ws = Workspace::new();
    let ok = ws.config("ok.json", &small_config());
    assert_eq!(evoctl(&["validate", "--config", s(&ok)]).status.code(), Some(0));

    let mut bad = small_config();
    bad["cost"]["observable"] = json!("sigma_q");
    let p = ws.config("obs.json", &bad);
    let o = evoctl(&["validate", "--config", s(&p)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("cost.observable"));

    let mut dup = small_config();
    dup["model"]["unscaled"][0]["name"] = json!("s");
    let p = ws.config("dup.json", &dup);
    let o = evoctl(&["validate", "--config", s(&p)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("duplicate parameter name"));

    let mut clash = small_config();
    clash["model"]["system"][0]["name"] = json!("width[0]");
    let p = ws.config("clash.json", &clash);
    assert_eq!(evoctl(&["validate", "--config", s(&p)]).status.code(), Some(1));

    let mut unknown = small_config();
    unknown["grid"]["stepz"] = json!(3);
    let p = ws.config("unknown.json", &unknown);
    let o = evoctl(&["validate", "--config", s(&p)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("stepz") && stderr(&o).contains("line"));

    let p = ws.path("broken.json");
    std::fs::write(&p, "{\n  \"model\": {\n    \"name\": \"two_level\",,\n").unwrap();
    let o = evoctl(&["validate", "--config", s(&p)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));
}

#[test]
fn sweep_predict_and_export() {
    let ws = Workspace::new();
    let cfg = ws.config("c.json", &small_config());
    let sheet = ws.path("sheet.json");
    let o = evoctl(&["sweep", "--config", s(&cfg), "--out", s(&sheet)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let doc = document(&sheet);
    let Outputs::Sweep { sheet: data, failed_nodes, .. } = &doc.outputs else {
        panic!("expected a sweep document");
    };
    assert_eq!(data.entries.len(), 5);
    assert_eq!(*failed_nodes, 0);

    // At a node the stored control comes back unchanged.
    let node = &data.entries[2];
    let p = ws.path("p.json");
    let o = evoctl(&["predict", "--sheet", s(&sheet), "--s", "1.0", "--c", "1.0", "--out", s(&p)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let Outputs::Predict(pred) = document(&p).outputs else {
        panic!("expected a prediction");
    };
    for (x, y) in pred.b.iter().zip(node.b.as_ref().unwrap()) {
        assert!((x - y).abs() <= 1e-12);
    }
    assert!(pred.refined.is_none());
    assert!(pred.geometry.orthogonality_residual <= 1e-10);

    // Midpoint with refinement.
    let o = evoctl(&["predict", "--sheet", s(&sheet), "--s", "0.975", "--c", "1.0", "--refine", "--out", s(&p)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let Outputs::Predict(pred) = document(&p).outputs else {
        panic!("expected a prediction");
    };
    let refined = pred.refined.unwrap();
    assert!(refined.iterations <= 5);
    assert!(refined.cost.total <= pred.predicted_cost.total);

    // Outside the sampled range.
    let o = evoctl(&["predict", "--sheet", s(&sheet), "--s", "1.2", "--c", "1.0", "--out", s(&p)]);
    assert_eq!(o.status.code(), Some(1));
    let o = evoctl(&["predict", "--sheet", s(&sheet), "--s", "1.2", "--c", "1.0", "--extrapolate", "--out", s(&p)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let Outputs::Predict(pred) = document(&p).outputs else {
        panic!("expected a prediction");
    };
    assert!(pred.extrapolated);

    let csv = ws.path("sheet.csv");
    let o = evoctl(&["export-plot", "--result", s(&sheet), "--kind", "sheet", "--out", s(&csv)]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "s,omega_ref,branch,converged,amplitude[0],center[0],width[0],carrier[0],cost,deviation,intensity"
    );
    assert_eq!(lines.count(), 5);

    let o = evoctl(&["export-plot", "--result", s(&sheet), "--kind", "trace", "--out", s(&csv)]);
    assert_eq!(o.status.code(), Some(1));
    let o = evoctl(&["export-plot", "--result", s(&sheet), "--kind", "contour", "--out", s(&csv)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn optimize_exports_trace_and_trajectory() {
    let ws = Workspace::new();
    let cfg = ws.config("c.json", &small_config());
    let out = ws.path("r.json");
    assert_eq!(evoctl(&["optimize", "--config", s(&cfg), "--out", s(&out)]).status.code(), Some(0));
    let Outputs::Optimize { result, .. } = document(&out).outputs else {
        panic!("expected an optimize document");
    };

    let trace = ws.path("trace.csv");
    assert_eq!(evoctl(&["export-plot", "--result", s(&out), "--kind", "trace", "--out", s(&trace)]).status.code(), Some(0));
    let text = std::fs::read_to_string(&trace).unwrap();
    assert!(text.starts_with("iter,cost,grad\n"));
    assert_eq!(text.lines().count(), result.trace.len() + 1);

    let traj = ws.path("traj.csv");
    assert_eq!(evoctl(&["export-plot", "--result", s(&out), "--kind", "trajectory", "--out", s(&traj)]).status.code(), Some(0));
    let text = std::fs::read_to_string(&traj).unwrap();
    let header = text.lines().next().unwrap();
    assert!(header.starts_with("t,") && header.ends_with(",expectation"));
    assert_eq!(text.lines().count(), 202);
    let last: f64 = text.lines().last().unwrap().rsplit(',').next().unwrap().parse().unwrap();
    // Final ⟨σ_z⟩ matches the optimized terminal value.
    assert!((last - result.cost.theta_t).abs() < 1e-12);
}

#[test]
fn single_node_sweep_equals_optimize() {
    let ws = Workspace::new();
    let mut v = small_config();
    v["sweep"] = json!({ "s_axes": [{ "name": "s", "nodes": [1.0] }] });
    let cfg = ws.config("c.json", &v);
    let (a, b) = (ws.path("opt.json"), ws.path("sweep.json"));
    assert_eq!(evoctl(&["optimize", "--config", s(&cfg), "--out", s(&a)]).status.code(), Some(0));
    assert_eq!(evoctl(&["sweep", "--config", s(&cfg), "--out", s(&b)]).status.code(), Some(0));
    let Outputs::Optimize { result, .. } = document(&a).outputs else {
        panic!()
    };
    let Outputs::Sweep { sheet, .. } = document(&b).outputs else {
        panic!()
    };
    assert_eq!(sheet.entries.len(), 1);
    assert_eq!(sheet.entries[0].b.as_ref().unwrap(), &result.b_opt.to_flat());
    assert_eq!(sheet.entries[0].total, result.cost.total);
}

#[test]
fn unwritable_output_exits_one() {
    let ws = Workspace::new();
    let cfg = ws.config("c.json", &small_config());
    let out = ws.path("no/such/dir/sheet.json");
    let o = evoctl(&["sweep", "--config", s(&cfg), "--out", s(&out)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(!out.exists());
}

#[test]
fn thread_flag_overrides_environment() {
    let ws = Workspace::new();
    let cfg = ws.config("c.json", &small_config());
    let out = ws.path("r.json");
    let run = |env: &str, extra: &[&str]| {
        let mut args = vec!["optimize", "--config", s(&cfg), "--out", s(&out)];
        args.extend_from_slice(extra);
        Command::new(env!("CARGO_BIN_EXE_evoctl"))
            .args(&args)
            .env("EVOCTL_THREADS", env)
            .output()
            .unwrap()
            .status
            .code()
    };
    assert_eq!(run("0", &[]), Some(1));
    assert_eq!(run("many", &[]), Some(1));
    assert_eq!(run("0", &["--threads", "2"]), Some(0));
    assert_eq!(run("1", &[]), Some(0));
}

#[test]
fn help_exits_zero_and_bad_usage_exits_one() {
    assert_eq!(evoctl(&["--help"]).status.code(), Some(0));
    assert_eq!(evoctl(&["optimize"]).status.code(), Some(1));
    assert_eq!(evoctl(&["frobnicate"]).status.code(), Some(1));
}
