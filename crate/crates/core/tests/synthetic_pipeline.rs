use std::collections::HashMap;

use tmwr_core::analytics::{genre_topic_table, mann_whitney, section_values, segment_info, top_distinctive};
use tmwr_core::cluster::{cluster_genre_composition, cut_tree, ward_linkage};
use tmwr_core::evalml::{play_topic_features, ClassifierKind, CvOptions, FeatureMatrix};
use tmwr_core::lda::{build_vocab, train, train_with_observer, ModelParams};
use tmwr_core::sweep::{run_sweep, select_best, GridSpec, SweepOptions};
use tmwr_core::synth::{synthetic_corpus, SynthSpec};

fn small_grid() -> GridSpec {
    GridSpec {
        topic_counts: vec![3, 5],
        optimize_intervals: vec![None, Some(50)],
        iterations: 200,
        base_seed: 11,
        cv: CvOptions {
            folds: 5,
            ..CvOptions::default()
        },
        ..GridSpec::default()
    }
}

#[test]
fn small_sweep_beats_baseline_and_is_order_independent() {
    let corpus = synthetic_corpus(&SynthSpec::default());
    let vocab = build_vocab(&corpus.segments, 1).unwrap();
    let grid = small_grid();
    let serial = run_sweep(
        &corpus.segments,
        &vocab,
        &grid,
        &corpus.plays,
        &SweepOptions {
            jobs: 1,
            ..SweepOptions::default()
        },
    )
    .unwrap();
    assert_eq!(serial.cells.len(), 4);
    for cell in &serial.cells {
        assert!(!cell.failed(), "{:?}", cell.error);
        let best = cell.scores.iter().map(|s| s.mean_accuracy).fold(0.0, f64::max);
        let baseline = cell.scores[0].runs[0].baseline_accuracy;
        assert!(
            best > baseline,
            "K={} interval={:?}",
            cell.num_topics,
            cell.optimize_interval
        );
    }
    let parallel = run_sweep(
        &corpus.segments,
        &vocab,
        &grid,
        &corpus.plays,
        &SweepOptions {
            jobs: 4,
            ..SweepOptions::default()
        },
    )
    .unwrap();
    assert_eq!(serial, parallel);
    assert_eq!(serial.best, Some(select_best(&serial).unwrap()));
}

#[test]
fn sweep_reuses_checkpoints() {
    let corpus = synthetic_corpus(&SynthSpec {
        plays_per_genre: 5,
        segments_per_play: 5,
        ..SynthSpec::default()
    });
    let vocab = build_vocab(&corpus.segments, 1).unwrap();
    let grid = GridSpec {
        topic_counts: vec![3],
        optimize_intervals: vec![None],
        iterations: 50,
        classifiers: vec![ClassifierKind::Knn.default_spec()],
        ..small_grid()
    };
    let dir = tempfile::tempdir().unwrap();
    let opts = SweepOptions {
        jobs: 1,
        checkpoint_dir: Some(dir.path().to_path_buf()),
        corpus_digest: "abc".into(),
    };
    let first = run_sweep(&corpus.segments, &vocab, &grid, &corpus.plays, &opts).unwrap();
    let path = dir.path().join("cell-k3-inone.json");
    let mut json: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    // Planting a marker value shows whether the next run reads the file.
    json["cell"]["scores"][0]["mean_accuracy"] = serde_json::json!(0.123);
    std::fs::write(&path, json.to_string()).unwrap();
    let second = run_sweep(&corpus.segments, &vocab, &grid, &corpus.plays, &opts).unwrap();
    assert_eq!(second.cells[0].scores[0].mean_accuracy, 0.123);
    let other = SweepOptions {
        corpus_digest: "different".into(),
        ..opts
    };
    let third = run_sweep(&corpus.segments, &vocab, &grid, &corpus.plays, &other).unwrap();
    assert_eq!(
        third.cells[0].scores[0].mean_accuracy,
        first.cells[0].scores[0].mean_accuracy
    );
}

#[test]
fn late_topic_shifts_across_sections_and_clusters_follow_genre() {
    let corpus = synthetic_corpus(&SynthSpec {
        late_topic_share: 0.6,
        segments_per_play: 10,
        ..SynthSpec::default()
    });
    let vocab = build_vocab(&corpus.segments, 1).unwrap();
    let model = train(
        &corpus.segments,
        &vocab,
        &ModelParams {
            num_topics: 4,
            iterations: 300,
            optimize_interval: Some(50),
            seed: 5,
            ..ModelParams::default()
        },
    )
    .unwrap();
    let late_topic = (0..4)
        .max_by_key(|&t| {
            model
                .top_words(t, 10)
                .unwrap()
                .iter()
                .filter(|(w, _)| w.starts_with("late"))
                .count()
        })
        .unwrap();
    let play_genre: HashMap<String, String> = corpus.plays.iter().cloned().collect();
    let info = segment_info(&corpus.segments, &play_genre).unwrap();
    let by_section = section_values(&model.theta, &info, late_topic, "tragedy").unwrap();
    let test = mann_whitney(&by_section[0], &by_section[4]).unwrap();
    assert!(test.p_value < 0.01, "p = {}", test.p_value);

    let table = genre_topic_table(&model.theta, &info, &[]).unwrap();
    let distinctive = top_distinctive(&table, 4);
    assert_ne!(distinctive[0], late_topic);

    let segment_play: HashMap<String, String> = corpus
        .segments
        .iter()
        .map(|s| (s.segment_id.clone(), s.play_id.clone()))
        .collect();
    let features: FeatureMatrix<f64> = play_topic_features(&model, &segment_play, &corpus.plays).unwrap();
    let tree = ward_linkage(&features.values).unwrap();
    let n = tree.merges.len();
    let threshold = (tree.merges[n - 3].height + tree.merges[n - 2].height) / 2.0;
    let ids = cut_tree(&tree, threshold);
    assert_eq!(ids.iter().max(), Some(&2));
    let order = table.genres.clone();
    for c in cluster_genre_composition(&ids, &features.labels, &order) {
        assert!(c.purity >= 0.9, "cluster {} purity {}", c.cluster, c.purity);
    }
}

#[test]
fn log_likelihood_moving_average_rises_early() {
    const WINDOW: usize = 100;
    let corpus = synthetic_corpus(&SynthSpec::default());
    let vocab = build_vocab(&corpus.segments, 1).unwrap();
    for seed in 0..5 {
        let params = ModelParams {
            num_topics: 4,
            iterations: 2000,
            optimize_interval: Some(50),
            seed,
            ..ModelParams::default()
        };
        let mut trace = Vec::new();
        train_with_observer(&corpus.segments, &vocab, &params, |_, s| {
            let ll = s.log_likelihood();
            assert!(ll.is_finite());
            trace.push(ll);
        })
        .unwrap();
        let early = &trace[..params.iterations / 10];
        let averages: Vec<f64> = early
            .windows(WINDOW)
            .map(|w| w.iter().sum::<f64>() / WINDOW as f64)
            .collect();
        for (i, p) in averages.windows(2).enumerate() {
            assert!(
                p[1] >= p[0],
                "seed {seed}: moving average drops at sweep {}",
                i + WINDOW + 1
            );
        }
    }
}
