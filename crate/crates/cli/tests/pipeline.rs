use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

fn fixtures() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

/// Copies the fixture inputs so tests can modify them.
fn fixture_copy() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let src = fixtures();
    std::fs::create_dir(dir.path().join("corpus")).unwrap();
    for entry in std::fs::read_dir(src.join("corpus")).unwrap() {
        let entry = entry.unwrap();
        std::fs::copy(entry.path(), dir.path().join("corpus").join(entry.file_name())).unwrap();
    }
    for f in ["tmwr.toml", "lexicon.tsv", "stoplist.txt", "names.txt", "metadata.csv"] {
        std::fs::copy(src.join(f), dir.path().join(f)).unwrap();
    }
    dir
}

struct Outcome {
    code: i32,
    stderr: String,
}

fn tmwr(args: &[&str], env: &[(&str, &str)]) -> Outcome {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_tmwr"));
    cmd.args(args).env_remove("TMW_JOBS").env_remove("TMW_OUTPUT");
    for (k, v) in env {
        cmd.env(k, v);
    }
    let out = cmd.output().unwrap();
    Outcome {
        code: out.status.code().unwrap_or(-1),
        stderr: String::from_utf8_lossy(&out.stderr).into_owned(),
    }
}

fn config_arg(dir: &Path) -> String {
    dir.join("tmwr.toml").display().to_string()
}

fn tree_contents(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().display().to_string();
                out.insert(rel, std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn fixture_pipeline_produces_every_output_quickly() {
    let dir = fixture_copy();
    let out = dir.path().join("out");
    let start = Instant::now();
    let r = tmwr(
        &[
            "--config",
            &config_arg(dir.path()),
            "--output",
            out.to_str().unwrap(),
            "--jobs",
            "2",
            "pipeline",
        ],
        &[],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(start.elapsed() < Duration::from_secs(60));
    for rel in [
        "manifest.json",
        "ingest/plays.tsv",
        "ingest/failures.tsv",
        "prepare/segments.tsv",
        "sweep/sweep.tsv",
        "model/model.txt",
        "model/topics.tsv",
        "evaluate/cv.tsv",
        "evaluate/mfw_cv.tsv",
        "analyze/heatmap.tsv",
        "analyze/section_tests.tsv",
        "cluster/linkage.tsv",
        "cluster/clusters.tsv",
        "render/heatmap.svg",
        "render/boxplots.svg",
        "render/sweep.svg",
        "render/pca.svg",
        "render/dendrogram.svg",
        "render/wordcloud_topic000.svg",
    ] {
        assert!(out.join(rel).is_file(), "missing {rel}");
    }
    for entry in std::fs::read_dir(out.join("render")).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "svg") {
            assert!(
                path.with_extension("tsv").is_file(),
                "{} lacks a data table",
                path.display()
            );
        }
    }

    let plays = std::fs::read_to_string(out.join("ingest/plays.tsv")).unwrap();
    assert_eq!(plays.lines().count(), 7, "header plus six plays");
    assert!(!plays.contains("dr01"));
    let failures = std::fs::read_to_string(out.join("ingest/failures.tsv")).unwrap();
    assert!(failures.contains("broken.xml"));
    let excluded = std::fs::read_to_string(out.join("ingest/excluded.tsv")).unwrap();
    assert!(excluded.contains("dr01\t1832"));

    // The fixture separates its genres cleanly at the configured threshold.
    let composition = std::fs::read_to_string(out.join("cluster/composition.tsv")).unwrap();
    assert_eq!(composition.lines().count(), 4, "{composition}");
    for line in composition.lines().skip(1) {
        assert!(line.ends_with("1.000000"), "{composition}");
    }
}

#[test]
fn model_without_prepare_names_the_missing_file() {
    let dir = fixture_copy();
    let out = dir.path().join("out");
    let r = tmwr(
        &[
            "--config",
            &config_arg(dir.path()),
            "--output",
            out.to_str().unwrap(),
            "model",
        ],
        &[],
    );
    assert_eq!(r.code, 2, "{}", r.stderr);
    assert!(r.stderr.contains("prepare/segments.tsv"), "{}", r.stderr);
    assert!(r.stderr.contains("tmwr prepare"), "{}", r.stderr);
}

#[test]
fn rerun_skips_every_stage_and_changes_rerun_only_dependents() {
    let dir = fixture_copy();
    let out = dir.path().join("out");
    let cfg = config_arg(dir.path());
    let args = ["--config", cfg.as_str(), "--output", out.to_str().unwrap(), "pipeline"];
    assert_eq!(tmwr(&args, &[]).code, 0);
    let before = tree_contents(&out);

    let again = tmwr(&args, &[]);
    assert_eq!(again.code, 0);
    assert!(again.stderr.contains("0 stages run, 8 skipped"), "{}", again.stderr);
    assert_eq!(tree_contents(&out), before);

    let top_n = tmwr(
        &[
            "--config",
            &cfg,
            "--output",
            out.to_str().unwrap(),
            "--set",
            "analyze.top_n=3",
            "pipeline",
        ],
        &[],
    );
    assert_eq!(top_n.code, 0, "{}", top_n.stderr);
    assert!(top_n.stderr.contains("2 stages run, 6 skipped"), "{}", top_n.stderr);

    // Editing an input file invalidates everything downstream of it.
    let stoplist = dir.path().join("stoplist.txt");
    let mut text = std::fs::read_to_string(&stoplist).unwrap();
    text.push_str("amour\n");
    std::fs::write(&stoplist, text).unwrap();
    let edited = tmwr(&args, &[]);
    assert_eq!(edited.code, 0, "{}", edited.stderr);
    assert!(edited.stderr.contains("ingest: up to date"), "{}", edited.stderr);
    assert!(edited.stderr.contains("prepare: running"), "{}", edited.stderr);
    let segments = std::fs::read_to_string(out.join("prepare/segments.tsv")).unwrap();
    assert!(!segments.contains("amour"));
}

#[test]
fn outputs_are_byte_identical_across_runs() {
    let dir = fixture_copy();
    let cfg = config_arg(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert_eq!(
        tmwr(
            &[
                "--config",
                &cfg,
                "--output",
                a.to_str().unwrap(),
                "--jobs",
                "1",
                "pipeline"
            ],
            &[]
        )
        .code,
        0
    );
    assert_eq!(
        tmwr(
            &[
                "--config",
                &cfg,
                "--output",
                b.to_str().unwrap(),
                "--jobs",
                "4",
                "pipeline"
            ],
            &[]
        )
        .code,
        0
    );
    let (ta, tb) = (tree_contents(&a), tree_contents(&b));
    assert_eq!(ta.keys().collect::<Vec<_>>(), tb.keys().collect::<Vec<_>>());
    for (k, v) in &ta {
        assert!(v == &tb[k], "{k} differs");
    }
}

#[test]
fn single_stages_chain_through_files() {
    let dir = fixture_copy();
    let out = dir.path().join("out");
    let cfg = config_arg(dir.path());
    for stage in ["ingest", "prepare", "model", "evaluate", "analyze", "cluster"] {
        let r = tmwr(
            &[
                "--config",
                &cfg,
                "--output",
                out.to_str().unwrap(),
                "--set",
                "sweep.enabled=false",
                stage,
            ],
            &[],
        );
        assert_eq!(r.code, 0, "{stage}: {}", r.stderr);
    }
    let render = tmwr(
        &[
            "--config",
            &cfg,
            "--output",
            out.to_str().unwrap(),
            "--set",
            "sweep.enabled=false",
            "render",
        ],
        &[],
    );
    assert_eq!(render.code, 0, "{}", render.stderr);
    assert!(out.join("render/dendrogram.svg").is_file());
    assert!(!out.join("render/sweep.svg").exists());
}

#[test]
fn output_directory_comes_from_env_unless_flag_given() {
    let dir = fixture_copy();
    let cfg = config_arg(dir.path());
    let env_out = dir.path().join("from_env");
    let flag_out = dir.path().join("from_flag");
    let r = tmwr(
        &["--config", &cfg, "ingest"],
        &[("TMW_OUTPUT", env_out.to_str().unwrap()), ("TMW_JOBS", "2")],
    );
    assert_eq!(r.code, 0, "{}", r.stderr);
    assert!(env_out.join("ingest/plays.tsv").is_file());
    let r = tmwr(
        &["--config", &cfg, "--output", flag_out.to_str().unwrap(), "ingest"],
        &[("TMW_OUTPUT", env_out.to_str().unwrap())],
    );
    assert_eq!(r.code, 0);
    assert!(flag_out.join("ingest/plays.tsv").is_file());
}

#[test]
fn config_errors_exit_with_one() {
    let dir = fixture_copy();
    let cfg = config_arg(dir.path());
    let r = tmwr(&["--config", &cfg, "--set", "model.no_such_key=1", "ingest"], &[]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("no_such_key"), "{}", r.stderr);

    let bad = dir.path().join("bad.toml");
    std::fs::write(
        &bad,
        "[paths]\ncorpus_dir = \"corpus\"\n\n[model]\nnum_topics = \"many\"\n",
    )
    .unwrap();
    let r = tmwr(&["--config", bad.to_str().unwrap(), "ingest"], &[]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("line 5"), "{}", r.stderr);

    let r = tmwr(&["--config", &cfg, "--set", "paths.lexicon=absent.tsv", "ingest"], &[]);
    assert_eq!(r.code, 1);
    assert!(r.stderr.contains("absent.tsv"), "{}", r.stderr);

    assert_eq!(tmwr(&["--config", &cfg, "frobnicate"], &[]).code, 1);
}

#[test]
fn empty_filter_result_is_a_data_error() {
    let dir = fixture_copy();
    let cfg = config_arg(dir.path());
    let out = dir.path().join("out");
    let r = tmwr(
        &[
            "--config",
            &cfg,
            "--output",
            out.to_str().unwrap(),
            "--set",
            "filter.year_min=1780",
            "--set",
            "filter.year_max=1789",
            "ingest",
        ],
        &[],
    );
    assert_eq!(r.code, 2, "{}", r.stderr);
    assert!(r.stderr.contains("filter"), "{}", r.stderr);
}

#[test]
fn help_lists_config_keys_with_defaults() {
    let out = Command::new(env!("CARGO_BIN_EXE_tmwr")).arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for needle in [
        "model.num_topics = 60",
        "model.iterations = 6000",
        "prepare.target_len = 1000",
        "evaluate.n_mfw = 3500",
        "cluster.ward_threshold = 1.3",
        "filter.year_min = 1630",
        "run.jobs = 0",
    ] {
        assert!(text.contains(needle), "missing {needle}");
    }
}
