use std::fs;
use std::path::Path;

use riskclust::cluster::{DmmOptions, GmmOptions, MouOptions};
use riskclust::pipeline::{
    load_tags, read_tags, run_pipeline, run_prepared, sensitivity_sweep, write_artifact, write_sweep, write_tags, OutputLock,
    PreparedCorpus, SweepParam, STAGES,
};
use riskclust::synth::{generate, SynthConfig};
use riskclust::{Label, MethodSpec, PipelineConfig, PipelineError, RunArtifact, TagSet};

fn small_corpus(dir: &Path, n_docs: usize) -> (PipelineConfig, TagSet) {
    let corpus = generate(&SynthConfig {
        n_docs,
        seed: 21,
        ..SynthConfig::default()
    });
    let path = corpus.write_to(dir).unwrap();
    (PipelineConfig::load(path).unwrap(), corpus.tags)
}

fn every_method() -> Vec<MethodSpec> {
    vec![
        MethodSpec::Kmeans { k: 3, restarts: 20 },
        MethodSpec::Skmeans { k: 3, restarts: 20 },
        MethodSpec::GmmSpherical {
            k: 3,
            restarts: 10,
            options: GmmOptions::default(),
        },
        MethodSpec::TrimmedKmeans {
            k: 3,
            alpha: 0.05,
            restarts: 20,
        },
        MethodSpec::Mou {
            k: 3,
            restarts: 5,
            options: MouOptions::default(),
        },
        MethodSpec::Dmm {
            k: 3,
            restarts: 3,
            options: DmmOptions { max_iter: 30, ..DmmOptions::default() },
        },
        MethodSpec::Lda {
            k: 3,
            iterations: 200,
            burn_in: 100,
            alpha: 0.1,
            beta: 0.05,
        },
        MethodSpec::Kmeans { k: 2, restarts: 20 },
    ]
}

#[test]
fn every_method_runs_end_to_end_and_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, tags) = small_corpus(dir.path(), 90);
    let cfg = PipelineConfig {
        methods: every_method(),
        ..cfg
    };
    let art = run_pipeline(&cfg, Some(&tags)).unwrap();

    assert_eq!(art.stages, STAGES);
    assert_eq!(art.documents.len(), 90);
    assert_eq!(art.projection.len(), 90);
    assert_eq!(art.lsa_coords.len(), 90);
    assert!(art.singular_values.windows(2).all(|w| w[0] >= w[1]));
    let ids: Vec<&str> = art.results.iter().map(|o| o.id.as_str()).collect();
    assert_eq!(ids.len(), 8);
    let unique: std::collections::HashSet<&&str> = ids.iter().collect();
    assert_eq!(unique.len(), 8, "ids must be unique: {ids:?}");
    for o in &art.results {
        o.result.check().unwrap();
        assert_eq!(o.result.assignment.len(), 90);
        let report = o.report.as_ref().unwrap_or_else(|| panic!("{}: {:?}", o.id, o.report_error));
        assert!((0.0..=1.0).contains(&report.accuracy));
        assert!((-1.0..=1.0).contains(&report.silhouette_index));
    }
    let trimmed = art.results.iter().find(|o| matches!(o.spec, MethodSpec::TrimmedKmeans { .. })).unwrap();
    assert_eq!(trimmed.result.n_trimmed(), 4);

    let out = dir.path().join("out");
    write_artifact(&art, &out).unwrap();
    for f in ["run.json", "projection.csv", "silhouette.csv"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    assert!(!out.join(OutputLock::FILE).exists(), "lock must be released");
    let back = RunArtifact::load(out.join("run.json")).unwrap();
    assert_eq!(back, art);

    let projection = fs::read_to_string(out.join("projection.csv")).unwrap();
    assert_eq!(projection.lines().next(), Some("doc_id,v1,v2,cluster,tag"));
    assert_eq!(projection.lines().count(), 91);
}

#[test]
fn empty_method_list_still_projects() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, _) = small_corpus(dir.path(), 40);
    let art = run_pipeline(&PipelineConfig { methods: vec![], ..cfg }, None).unwrap();
    assert!(art.results.is_empty());
    assert_eq!(art.projection.len(), 40);
    assert!(art.tags.is_none());
}

#[test]
fn locked_output_directory_is_refused() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, _) = small_corpus(dir.path(), 40);
    let art = run_pipeline(&PipelineConfig { methods: vec![], ..cfg }, None).unwrap();
    let out = dir.path().join("busy");
    let held = OutputLock::acquire(&out).unwrap();
    assert!(matches!(write_artifact(&art, &out), Err(PipelineError::Locked(_))));
    drop(held);
    write_artifact(&art, &out).unwrap();
}

#[test]
fn missing_inputs_are_io_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, _) = small_corpus(dir.path(), 40);
    let broken = PipelineConfig {
        embedding_path: dir.path().join("nowhere.txt"),
        ..cfg
    };
    let err = run_pipeline(&broken, None).unwrap_err();
    assert!(err.to_string().contains("nowhere.txt"), "{err}");
}

#[test]
fn tags_file_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, tags) = small_corpus(dir.path(), 40);
    let prepared = PreparedCorpus::load(&cfg).unwrap();
    let ids = prepared.doc_ids();
    let mut partial = tags.clone();
    partial.set(3, None).unwrap();
    let path = dir.path().join("partial.csv");
    write_tags(fs::File::create(&path).unwrap(), ids, &partial).unwrap();
    let back = load_tags(&path, ids).unwrap();
    assert_eq!(back.labels(), partial.labels());
    assert_eq!(back.n_tagged(), 39);

    let unknown = "event_id,tag\nNOPE,x\n";
    assert!(matches!(read_tags(unknown.as_bytes(), ids), Err(PipelineError::Tags { line: 2, .. })));
}

#[test]
fn sweep_edge_cases() {
    let dir = tempfile::tempdir().unwrap();
    let (cfg, tags) = small_corpus(dir.path(), 60);
    let prepared = PreparedCorpus::load(&cfg).unwrap();
    let one = sensitivity_sweep(&cfg, &prepared, &tags, SweepParam::Threshold, &[0.8]).unwrap();
    assert_eq!(one.len(), 1);
    let direct = run_prepared(&cfg, &prepared, Some(&tags)).unwrap();
    assert_eq!(one[0].accuracy, direct.results[0].report.as_ref().unwrap().accuracy);

    assert!(matches!(
        sensitivity_sweep(&cfg, &prepared, &tags, SweepParam::Threshold, &[]),
        Err(PipelineError::Sweep(_))
    ));
    assert!(matches!(
        sensitivity_sweep(&cfg, &prepared, &tags, SweepParam::Alpha, &[0.02]),
        Err(PipelineError::Sweep(_))
    ));
    let mut csv = Vec::new();
    write_sweep(&mut csv, &one).unwrap();
    assert!(String::from_utf8(csv).unwrap().starts_with("value,accuracy\n0.8,"));
}

#[test]
fn alpha_sweep_peaks_at_contamination_rate() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = generate(&SynthConfig {
        outlier_rate: 0.02,
        ..SynthConfig::default()
    });
    let cfg = PipelineConfig::load(corpus.write_to(dir.path()).unwrap()).unwrap();
    let cfg = PipelineConfig {
        methods: vec![MethodSpec::TrimmedKmeans {
            k: 3,
            alpha: 0.02,
            restarts: 1000,
        }],
        ..cfg
    };
    let prepared = PreparedCorpus::load(&cfg).unwrap();
    let values = [0.01, 0.02, 0.05, 0.1];
    let rows = sensitivity_sweep(&cfg, &prepared, &corpus.tags, SweepParam::Alpha, &values).unwrap();
    let acc: Vec<f64> = rows.iter().map(|r| r.accuracy).collect();
    let at = acc[1];
    assert!(acc.iter().enumerate().all(|(i, &a)| i == 1 || a < at), "{acc:?}");

    // the planted outliers are exactly the trimmed documents at the planted rate
    let art = run_prepared(&cfg, &prepared, Some(&corpus.tags)).unwrap();
    let trimmed: Vec<usize> = (0..300).filter(|&i| art.results[0].result.assignment[i] == Label::Trimmed).collect();
    assert_eq!(trimmed, corpus.outliers);
}
