use std::path::{Path, PathBuf};
use std::process::Command;

use icp::corpus::corpus_stats;
use icp::embed::EmbeddingStore;
use icp::packing::read_contexts;
use icp::pipeline::{
    parse_config, EmbedderMode, Pipeline, PipelineConfig, SearchMode, Stage, StageStatus,
};
use icp::synth::topic_corpus_jsonl;
use icp::Error;

fn small_config() -> PipelineConfig {
    PipelineConfig {
        dim: 64,
        m: 8,
        context_length: 512,
        seed: 3,
        ..PipelineConfig::default()
    }
}

fn write_input(dir: &Path, docs: usize, duplicates: usize) -> PathBuf {
    let input = dir.join("in.jsonl");
    std::fs::write(&input, topic_corpus_jsonl(docs, 6, duplicates, 1)).unwrap();
    input
}

fn statuses(outcome: &[(Stage, StageStatus)]) -> Vec<StageStatus> {
    outcome.iter().map(|s| s.1).collect()
}

#[test]
fn run_writes_artifacts_then_skips() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_input(tmp.path(), 1000, 30);
    let out = tmp.path().join("out");
    let pipeline = Pipeline::new(small_config(), &out).with_input(&input);

    let first = pipeline.run().unwrap();
    assert!(statuses(&first.stages)
        .iter()
        .all(|s| *s == StageStatus::Ran));
    let l = pipeline.layout();
    for artifact in [
        l.embeddings(),
        l.index(),
        l.neighbors(),
        l.keep_set(),
        l.graph(),
        l.path(),
        l.contexts(),
        l.report_json(),
        l.report_csv(),
    ] {
        assert!(artifact.is_file(), "missing {}", artifact.display());
    }
    assert!(!out.join(".icp.lock").exists());

    // Verbatim duplicates collapse to their first occurrence.
    let stats = corpus_stats(&l.dedup_corpus_dir()).unwrap();
    assert!(stats.document_count <= 970, "{stats:?}");
    let (len, contexts) = read_contexts(&l.contexts(), Some(&l.context_spans())).unwrap();
    assert_eq!(len, 512);
    assert!(contexts.iter().all(|c| c.len() == 512));

    let icp = first.report.get(icp::ordering::Strategy::Icp).unwrap();
    let random = first.report.get(icp::ordering::Strategy::Random).unwrap();
    assert!(icp.intra_context_similarity > random.intra_context_similarity);

    let second = pipeline.run().unwrap();
    assert!(statuses(&second.stages)
        .iter()
        .all(|s| *s == StageStatus::Skipped));
    assert_eq!(second.report, first.report);
}

#[test]
fn deleting_an_artifact_resumes_from_its_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_input(tmp.path(), 300, 0);
    let pipeline = Pipeline::new(small_config(), tmp.path().join("out")).with_input(&input);
    pipeline.run().unwrap();
    let graph_bytes = std::fs::read(pipeline.layout().graph()).unwrap();

    std::fs::remove_file(pipeline.layout().graph()).unwrap();
    let rerun = pipeline.run().unwrap();
    let ran: Vec<Stage> = rerun
        .stages
        .iter()
        .filter(|s| s.1 == StageStatus::Ran)
        .map(|s| s.0)
        .collect();
    // The rebuilt graph is byte-identical, so downstream stamps still match.
    assert_eq!(ran, vec![Stage::Graph]);
    assert_eq!(
        std::fs::read(pipeline.layout().graph()).unwrap(),
        graph_bytes
    );

    // A config change only reruns the stages that read the changed key.
    let longer = Pipeline::new(
        PipelineConfig {
            context_length: 256,
            ..small_config()
        },
        tmp.path().join("out"),
    )
    .with_input(&input);
    let ran: Vec<Stage> = longer
        .run()
        .unwrap()
        .stages
        .iter()
        .filter(|s| s.1 == StageStatus::Ran)
        .map(|s| s.0)
        .collect();
    assert_eq!(ran, vec![Stage::Pack, Stage::Stats]);
}

#[test]
fn stages_run_individually() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_input(tmp.path(), 200, 0);
    let config = PipelineConfig {
        search_mode: SearchMode::Exact,
        strategy: icp::ordering::Strategy::Cluster,
        ..small_config()
    };
    let pipeline = Pipeline::new(config, tmp.path().join("out")).with_input(&input);
    // Out of order: the missing input is named.
    let err = pipeline.run_stage(Stage::Graph).unwrap_err();
    assert!(matches!(err, Error::Stage { stage: "graph", .. }), "{err}");
    assert!(err.to_string().contains("neighbors.icpn"), "{err}");

    for stage in Stage::ALL {
        assert_eq!(
            pipeline.run_stage(stage).unwrap(),
            StageStatus::Ran,
            "{stage}"
        );
    }
    assert!(!pipeline.layout().index().exists());
}

#[test]
fn ivfflat_full_probe_matches_exact_mode() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_input(tmp.path(), 300, 0);
    let neighbors = |mode, name: &str| {
        let config = PipelineConfig {
            search_mode: mode,
            nlist: 4,
            nprobe: 4,
            ..small_config()
        };
        let p = Pipeline::new(config, tmp.path().join(name)).with_input(&input);
        for stage in [Stage::Ingest, Stage::Embed, Stage::Index, Stage::Search] {
            p.run_stage(stage).unwrap();
        }
        std::fs::read(p.layout().neighbors()).unwrap()
    };
    assert_eq!(
        neighbors(SearchMode::Ivfflat, "flat"),
        neighbors(SearchMode::Exact, "exact")
    );
}

#[test]
fn external_embeddings_are_checked_and_normalized() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_input(tmp.path(), 100, 0);
    let emb_path = tmp.path().join("ext.icpe");
    let rows: Vec<Vec<f32>> = (0..100)
        .map(|i| {
            (0..16)
                .map(|j| ((i * 7 + j * 3) % 11) as f32 - 4.5)
                .collect()
        })
        .collect();
    EmbeddingStore::from_rows(&rows)
        .unwrap()
        .write(&emb_path)
        .unwrap();

    let config = PipelineConfig {
        dim: 16,
        m: 4,
        embedder: EmbedderMode::ExternalFile,
        embeddings_path: Some(emb_path.clone()),
        search_mode: SearchMode::Exact,
        ..small_config()
    };
    let p = Pipeline::new(config.clone(), tmp.path().join("ok")).with_input(&input);
    p.run_stage(Stage::Ingest).unwrap();
    p.run_stage(Stage::Embed).unwrap();
    let stored = EmbeddingStore::read(&p.layout().embeddings()).unwrap();
    assert!(stored.is_normalized());
    assert!(stored.norms().iter().all(|n| (n - 1.0).abs() < 1e-4));

    let wrong_dim = Pipeline::new(PipelineConfig { dim: 32, ..config }, tmp.path().join("bad"))
        .with_input(&input);
    wrong_dim.run_stage(Stage::Ingest).unwrap();
    let err = wrong_dim.run_stage(Stage::Embed).unwrap_err();
    assert!(err.to_string().contains("embed"), "{err}");
}

#[test]
fn concurrent_run_is_refused() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_input(tmp.path(), 50, 0);
    let out = tmp.path().join("out");
    std::fs::create_dir_all(&out).unwrap();
    std::fs::write(out.join(".icp.lock"), "").unwrap();
    let err = Pipeline::new(small_config(), &out)
        .with_input(&input)
        .run()
        .unwrap_err();
    assert!(err.to_string().contains("another run"), "{err}");
}

#[test]
fn config_files_parse() {
    let tmp = tempfile::tempdir().unwrap();
    let path = tmp.path().join("c.json");
    std::fs::write(&path, r#"{"knn_k": 5, "strategy": "random", "seed": 7}"#).unwrap();
    let cfg = parse_config(&path).unwrap();
    assert_eq!((cfg.knn_k, cfg.seed), (5, 7));

    std::fs::write(&path, r#"{"knn_kk": 5}"#).unwrap();
    let err = parse_config(&path).unwrap_err();
    assert!(matches!(err, Error::Config(_)) && err.to_string().contains("knn_kk"));

    std::fs::write(&path, PipelineConfig::large_scale().to_json()).unwrap();
    assert_eq!(parse_config(&path).unwrap(), PipelineConfig::large_scale());
}

fn icp_cmd() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_icp"));
    cmd.env("RUST_LOG", "warn");
    cmd
}

#[test]
fn cli_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let input = write_input(tmp.path(), 300, 5);
    let out = tmp.path().join("out");
    let run = |extra: &[&str]| {
        icp_cmd()
            .args(["run", "--input"])
            .arg(&input)
            .arg("--out")
            .arg(&out)
            .args(["--dim", "64", "--m", "8", "--context-length", "256"])
            .args(extra)
            .output()
            .unwrap()
    };

    let ok = run(&["--seed", "4", "--strategy", "icp"]);
    assert_eq!(
        ok.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );
    let report: serde_json::Value = {
        let stdout = String::from_utf8(ok.stdout).unwrap();
        serde_json::from_str(&stdout[stdout.find('{').unwrap()..]).unwrap()
    };
    assert!(report["icp"]["intra_context_similarity"].is_number());

    // Only the ordering and its consumers see the step rule.
    let argmin = run(&["--seed", "4", "--strategy", "icp", "--argmin"]);
    assert_eq!(argmin.status.code(), Some(0));
    let stdout = String::from_utf8_lossy(&argmin.stdout);
    assert!(
        stdout.contains("graph   skipped") && stdout.contains("sort    ran"),
        "{stdout}"
    );

    assert_eq!(run(&["--nprobe", "0"]).status.code(), Some(2));
    assert_eq!(run(&["--strategy", "tsp"]).status.code(), Some(2));
    let cfg = tmp.path().join("bad.json");
    std::fs::write(&cfg, r#"{"knn_kk": 3}"#).unwrap();
    let bad = run(&["--config", cfg.to_str().unwrap()]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&bad.stderr).contains("knn_kk"));

    let stats = icp_cmd()
        .args(["stats", "--out"])
        .arg(&out)
        .args(["--dim", "64", "--m", "8", "--context-length", "256"])
        .output()
        .unwrap();
    assert_eq!(
        stats.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&stats.stderr)
    );
    assert!(String::from_utf8_lossy(&stats.stdout).contains("document_count"));

    let garbage = tmp.path().join("garbage.jsonl");
    std::fs::write(&garbage, "{\"text\": \"fine\"}\nnot json\n").unwrap();
    let failed = icp_cmd()
        .args(["ingest", "--input"])
        .arg(&garbage)
        .arg("--out")
        .arg(tmp.path().join("g"))
        .output()
        .unwrap();
    assert_eq!(failed.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&failed.stderr);
    assert!(
        stderr.contains("ingest") && stderr.contains("line 2"),
        "{stderr}"
    );
}
