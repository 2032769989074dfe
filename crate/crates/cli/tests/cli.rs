use std::path::Path;
use std::process::{Command, Output};

use gnn_core::experiment::config::ExperimentConfig;
use gnn_core::experiment::{
    node_plan, parse_metrics, parse_trace, run_single, GraphInstance, Model, CELLS_DIR, CHECKPOINT_FILE,
    REPORT_FILE, TRACE_FILE,
};
use gnn_core::nn::load_params;
use gnn_core::GsoVariant;

const TINY: &str = r#"
architecture = "selection"
sampling = "degree"

[graph]
n_nodes = 20
n_communities = 2
p_in = 0.8
p_out = 0.2

[dataset]
n_train = 60
n_validation = 20
n_test = 20
max_diffusion_time = 5

[train]
epochs = 2
batch_size = 20
eval_every = 2
"#;

fn gnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gnn")).args(args).output().expect("spawn gnn")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn tiny_config(dir: &Path) -> String {
    let path = dir.join("tiny.toml");
    std::fs::write(&path, TINY).unwrap();
    path.to_str().unwrap().to_owned()
}

fn run_ok(args: &[&str]) -> String {
    let o = gnn(args);
    assert_eq!(code(&o), 0, "gnn {args:?} failed: {}", stderr(&o));
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn help_and_version_succeed() {
    assert_eq!(code(&gnn(&["--help"])), 0);
    assert_eq!(code(&gnn(&["--version"])), 0);
    assert_eq!(code(&gnn(&["train", "--help"])), 0);
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(code(&gnn(&[])), 1);
    assert_eq!(code(&gnn(&["generate", "--no-such-flag"])), 1);
    assert_eq!(code(&gnn(&["generate", "--arch", "convolutional"])), 1);
}

#[test]
fn bad_configuration_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "[dataset]\nn_train = 0\n").unwrap();
    assert_eq!(code(&gnn(&["generate", "--config", bad.to_str().unwrap()])), 1);
    std::fs::write(&bad, "unknown_key = 3\n").unwrap();
    assert_eq!(code(&gnn(&["generate", "--config", bad.to_str().unwrap()])), 1);
}

#[test]
fn io_failures_exit_3() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.toml");
    assert_eq!(code(&gnn(&["train", "--config", missing.to_str().unwrap()])), 3);
    // training before generating has no datasets to read
    let config = tiny_config(dir.path());
    let out = dir.path().join("empty");
    assert_eq!(code(&gnn(&["train", "--config", &config, "--out", out.to_str().unwrap()])), 3);
}

#[test]
fn generate_train_evaluate_flow() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    for arch in ["selection", "aggregation", "multinode"] {
        let out = dir.path().join(arch);
        let out = out.to_str().unwrap();
        run_ok(&["generate", "--config", &config, "--out", out]);
        let trained = run_ok(&["train", "--config", &config, "--out", out, "--arch", arch]);
        assert!(trained.contains("6 steps"), "{trained}");
        let evaluated = run_ok(&["evaluate", "--config", &config, "--out", out, "--arch", arch]);
        assert!(evaluated.starts_with("test accuracy"), "{evaluated}");

        let report = std::fs::read_to_string(Path::new(out).join(REPORT_FILE)).unwrap();
        let metrics = parse_metrics(&report).unwrap();
        let acc: f64 = metrics["mean_accuracy"].parse().unwrap();
        assert!((0.0..=1.0).contains(&acc));
        assert_eq!(metrics["architecture"], arch);
        let trace = parse_trace(&std::fs::read_to_string(Path::new(out).join(TRACE_FILE)).unwrap()).unwrap();
        assert_eq!(trace.steps(), 6);
        assert_eq!(trace.validation_loss.iter().map(|v| v.0).collect::<Vec<_>>(), vec![0, 2, 4, 6]);
    }
}

#[test]
fn seeds_determine_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_config(dir.path());
    let run = |name: &str, seed_data: &str| {
        let out = dir.path().join(name);
        let out = out.to_str().unwrap().to_owned();
        run_ok(&["generate", "--config", &config, "--out", &out, "--seed-data", seed_data]);
        run_ok(&["train", "--config", &config, "--out", &out, "--seed-data", seed_data]);
        out
    };
    let a = run("a", "11");
    let b = run("b", "11");
    let c = run("c", "12");
    let files = ["graph.edges", "sources.txt", "train.gsd", "validation.gsd", "test.gsd", CHECKPOINT_FILE, TRACE_FILE];
    for f in files {
        let read = |d: &str| std::fs::read(Path::new(d).join(f)).unwrap();
        assert_eq!(read(&a), read(&b), "{f} differs between identical runs");
    }
    let read = |d: &str| std::fs::read(Path::new(d).join("train.gsd")).unwrap();
    assert_ne!(read(&a), read(&c));
}

#[test]
fn zero_epochs_checkpoint_is_the_initialization() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let text = format!("output_dir = {:?}\n{}", out.to_str().unwrap(), TINY.replace("epochs = 2", "epochs = 0"));
    let config_path = dir.path().join("zero.toml");
    std::fs::write(&config_path, &text).unwrap();
    let config_path = config_path.to_str().unwrap();

    run_ok(&["generate", "--config", config_path]);
    run_ok(&["train", "--config", config_path, "--arch", "multinode", "--sampling", "sp"]);

    let mut config = ExperimentConfig::from_toml(&text).unwrap();
    config.architecture = "multinode".parse().unwrap();
    config.sampling = "sp".parse().unwrap();
    let graph = GraphInstance::load(&out).unwrap();
    let gso = graph.model_gso(GsoVariant::ScaledAdjacency).unwrap();
    let plan = node_plan(&config, &gso).unwrap();
    let model = Model::build(&config, gso, plan, 1, graph.n_classes()).unwrap();
    assert_eq!(&load_params(&out.join(CHECKPOINT_FILE)).unwrap(), model.params());
}

#[test]
fn one_cell_benchmark_matches_single_run() {
    let dir = tempfile::tempdir().unwrap();
    let config_path = tiny_config(dir.path());
    let out = dir.path().join("bench");
    run_ok(&[
        "benchmark", "--config", &config_path, "--out", out.to_str().unwrap(), "--arch", "aggregation",
        "--sampling", "eds", "--graphs", "1", "--realizations", "1", "--workers", "1",
    ]);
    let report = parse_metrics(&std::fs::read_to_string(out.join(REPORT_FILE)).unwrap()).unwrap();

    let mut config = ExperimentConfig::from_toml(TINY).unwrap();
    config.architecture = "aggregation".parse().unwrap();
    config.sampling = "eds".parse().unwrap();
    let (trace, evaluation) = run_single(&config.cell_config(0, 0)).unwrap();
    let acc: f64 = report["mean_accuracy"].parse().unwrap();
    assert_eq!(acc, evaluation.accuracy);
    assert_eq!(report["std_accuracy"].parse::<f64>().unwrap(), 0.0);
    let cell_trace = parse_trace(&std::fs::read_to_string(out.join(CELLS_DIR).join("g0_r0.trace")).unwrap()).unwrap();
    assert_eq!(cell_trace, trace);
}

#[test]
fn selftest_reports_every_suite() {
    let o = gnn(&["selftest"]);
    let stdout = String::from_utf8_lossy(&o.stdout);
    let lines: Vec<&str> = stdout.lines().filter(|l| l.starts_with("PASS") || l.starts_with("FAIL")).collect();
    assert_eq!(lines.len(), 5, "{stdout}");
    let any_failed = lines.iter().any(|l| l.starts_with("FAIL"));
    assert_eq!(code(&o), if any_failed { 2 } else { 0 });
}
