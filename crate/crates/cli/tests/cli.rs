use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use rarefail_cli::{execute, EstimateFile, RunConfig};

const SUS_LINEAR: &str = r#"
driver = "sus"
seed = 4

[model]
kind = "linear"
beta0 = 3.0

[sus]
n_per_subset = 2000
n_subsets = 3
"#;

const COUPLED_LINEAR: &str = r#"
driver = "coupled"

[model]
kind = "linear"
beta0 = 3.0

[coupled.subset]
n_per_subset = 1000
n_subsets = 3
seed = 2

[coupled.strategy]
kind = "gp_only"
"#;

fn rarefail(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_rarefail"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn read_estimate(dir: &Path) -> EstimateFile {
    serde_json::from_str(&fs::read_to_string(dir.join("estimate.json")).unwrap()).unwrap()
}

fn csv_header(path: &Path) -> String {
    fs::read_to_string(path).unwrap().lines().next().unwrap().to_string()
}

#[test]
fn sus_run_writes_all_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "sus.toml", SUS_LINEAR);
    let out = tmp.path().join("run");
    let res = rarefail(&["run", &cfg, "--out", out.to_str().unwrap()], tmp.path());
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    let est = read_estimate(&out);
    assert_eq!(est.seed, 4);
    assert!(est.estimate.p_f > 0.0);
    assert_eq!(
        csv_header(&out.join("trace.csv")),
        "subset,sample_index,output,is_seed,accepted"
    );
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("P_f"));
}

#[test]
fn coupled_ledger_has_documented_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", COUPLED_LINEAR);
    let res = rarefail(&["run", &cfg, "--out", "c"], tmp.path());
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    assert_eq!(
        csv_header(&tmp.path().join("c/ledger.csv")),
        "subset,sample_index,source,u_value,output,threshold_estimate,cumulative_hf_calls,simulated_time_s"
    );
    let est = read_estimate(&tmp.path().join("c"));
    assert_eq!(est.strategy.as_deref(), Some("gp_only"));
    assert!(est.budget.is_some());
}

#[test]
fn akmcs_trace_and_non_convergence_exit() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(
        tmp.path(),
        "a.toml",
        r#"
driver = "akmcs"
[model]
kind = "linear"
beta0 = 1.2816
[akmcs]
target_cov = 0.001
max_pool = 2500
"#,
    );
    let res = rarefail(&["run", &cfg, "--out", "a"], tmp.path());
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(
        csv_header(&tmp.path().join("a/trace.csv")),
        "iteration,pool_size,min_U,hf_calls,p_f,cov"
    );
    assert!(!read_estimate(&tmp.path().join("a")).estimate.converged);
}

#[test]
fn invalid_p0_names_the_field_and_evaluates_nothing() {
    let tmp = tempfile::tempdir().unwrap();
    let marker = tmp.path().join("called");
    let cfg = write(
        tmp.path(),
        "bad.toml",
        &format!(
            r#"
driver = "sus"
[model]
kind = "subprocess"
command = ["sh", "-c", "touch {}; while read l; do echo 1; done"]
[[space]]
name = "x"
family = "normal"
params = [0.0, 1.0]
[sus]
p0 = 1.5
"#,
            marker.display()
        ),
    );
    let res = rarefail(&["run", &cfg, "--out", "bad"], tmp.path());
    assert_eq!(res.status.code(), Some(1));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("p0"), "{err}");
    assert!(!marker.exists());
    assert!(!tmp.path().join("bad").exists());
}

#[test]
fn config_errors_are_reported() {
    let bad = |text: &str, needle: &str| {
        let err = RunConfig::parse(text)
            .and_then(|c| execute(c).map(|_| ()))
            .unwrap_err();
        let msg = format!("{err:#}");
        assert!(msg.contains(needle), "{msg}");
    };
    bad("driver = \"sus\"\n[model]\nkind = \"linear\"\nbeta0 = 1.0\nbogus = 2\n", "bogus");
    bad("driver = \"sus\"\n[model]\nkind = \"nope\"\n", "nope");
    bad(
        "driver = \"sus\"\n[model]\nkind = \"subprocess\"\ncommand = [\"cat\"]\n",
        "space",
    );
    bad(
        "driver = \"coupled\"\n[model]\nkind = \"borehole\"\n[coupled.strategy]\nkind = \"physics_lf\"\n",
        "lf_model",
    );
    bad(
        "driver = \"sus\"\n[model]\nkind = \"borehole\"\n[[space]]\nname = \"x\"\nfamily = \"normal\"\nparams = [0.0, 1.0]\n",
        "8 inputs",
    );
    bad(
        "driver = \"akmcs\"\n[model]\nkind = \"linear\"\nbeta0 = 1.0\n[sus]\np0 = 0.2\n",
        "sus",
    );
    bad(
        "driver = \"sus\"\n[model]\nkind = \"linear\"\nbeta0 = 1.0\n[[space]]\nname = \"x\"\nfamily = \"normal\"\nparams = [0.0, -1.0]\n",
        "space",
    );
}

#[test]
fn reruns_are_byte_identical_and_echo_reruns() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "c.toml", COUPLED_LINEAR);
    for dir in ["one", "two"] {
        let res = rarefail(&["run", &cfg, "--out", dir], tmp.path());
        assert_eq!(res.status.code(), Some(0));
    }
    let one = fs::read(tmp.path().join("one/estimate.json")).unwrap();
    let two = fs::read(tmp.path().join("two/estimate.json")).unwrap();
    assert!(one == two, "estimate JSON differs between identical runs");

    // the echoed config alone reproduces the run
    let echo = read_estimate(&tmp.path().join("one")).config;
    let echo_path = write(
        tmp.path(),
        "echo.json",
        &serde_json::to_string_pretty(&echo).unwrap(),
    );
    let res = rarefail(&["run", &echo_path, "--out", "three"], tmp.path());
    assert_eq!(res.status.code(), Some(0));
    let three = read_estimate(&tmp.path().join("three"));
    assert_eq!(three.estimate, read_estimate(&tmp.path().join("one")).estimate);
}

#[test]
fn seed_flag_overrides_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write(tmp.path(), "sus.toml", SUS_LINEAR);
    rarefail(&["run", &cfg, "--out", "s4"], tmp.path());
    rarefail(&["run", &cfg, "--seed", "9", "--out", "s9"], tmp.path());
    let a = read_estimate(&tmp.path().join("s4"));
    let b = read_estimate(&tmp.path().join("s9"));
    assert_eq!(b.seed, 9);
    assert_eq!(b.config.sus.as_ref().unwrap().seed, 9);
    assert_ne!(a.estimate.p_f, b.estimate.p_f);
}

#[test]
fn report_compares_runs_and_exports_curves() {
    let tmp = tempfile::tempdir().unwrap();
    let gp_lf = COUPLED_LINEAR.replace("\"gp_only\"", "\"gp_lf\"");
    let c1 = write(tmp.path(), "c1.toml", COUPLED_LINEAR);
    let c2 = write(tmp.path(), "c2.toml", &gp_lf);
    rarefail(&["run", &c1, "--out", "runs/gp_only"], tmp.path());
    rarefail(&["run", &c2, "--out", "runs/gp_lf"], tmp.path());
    fs::create_dir_all(tmp.path().join("runs/broken")).unwrap();
    fs::write(tmp.path().join("runs/broken/estimate.json"), "{ not json").unwrap();

    let res = rarefail(&["report", "runs", "--curves", "curves.csv"], tmp.path());
    assert_eq!(res.status.code(), Some(0), "{}", String::from_utf8_lossy(&res.stderr));
    assert!(String::from_utf8_lossy(&res.stderr).contains("broken"));
    let table = String::from_utf8_lossy(&res.stdout).into_owned();
    let lines: Vec<&str> = table.lines().collect();
    let header: Vec<&str> = lines[0].split_whitespace().collect();
    assert_eq!(header, ["gp_lf", "gp_only"]);

    // table cells are the JSON values
    let cells = |row: &str| -> Vec<String> {
        let line = lines.iter().find(|l| l.starts_with(row)).unwrap();
        line[row.len()..].split_whitespace().map(str::to_string).collect()
    };
    for (col, dir) in ["gp_lf", "gp_only"].iter().enumerate() {
        let est = read_estimate(&tmp.path().join("runs").join(dir)).estimate;
        assert_eq!(cells("P_f")[col].parse::<f64>().unwrap(), est.p_f);
        assert_eq!(cells("COV")[col].parse::<f64>().unwrap(), est.cov);
        assert_eq!(cells("beta")[col].parse::<f64>().unwrap(), est.beta.unwrap());
        assert_eq!(cells("# HF calls")[col], est.hf_calls.to_string());
        assert_eq!(cells("# samples")[col], est.total_samples.to_string());
    }

    let curves = fs::read_to_string(tmp.path().join("curves.csv")).unwrap();
    let rows: Vec<&str> = curves.lines().collect();
    assert_eq!(rows[0], "sample_index,gp_lf,gp_only");
    assert_eq!(rows.len(), 1 + 1000);
    let last: Vec<u64> = rows[1000].split(',').skip(1).map(|v| v.parse().unwrap()).collect();
    let gp_lf = read_estimate(&tmp.path().join("runs/gp_lf")).estimate.hf_calls;
    // the LF training design is not part of the curve
    assert_eq!(last[0], gp_lf - 12);
}

#[test]
fn report_on_empty_directory_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let res = rarefail(&["report", "."], tmp.path());
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn bundled_configs_parse_and_validate() {
    let preset = RunConfig::preset("borehole_appendix_a").unwrap().resolved();
    preset.validate().unwrap();
    let block = preset.coupled.as_ref().unwrap();
    assert_eq!(block.subset.n_per_subset, 50_000);
    assert_eq!(block.subset.n_subsets, 8);
    assert_eq!(block.subset.p0, 0.1);
    assert_eq!(block.n_initial, 12);
    assert!(block.fresh_gp_per_subset);
    assert_eq!(preset.seed, Some(42));

    let annotated = concat!(env!("CARGO_MANIFEST_DIR"), "/configs/annotated.toml");
    RunConfig::load(annotated).unwrap().resolved().validate().unwrap();

    let tmp = tempfile::tempdir().unwrap();
    let res = rarefail(&["presets"], tmp.path());
    assert!(String::from_utf8_lossy(&res.stdout).contains("borehole_appendix_a"));
}
