//! Acceptance gate. Runs each criterion at its frozen tolerance, prints one
//! PASS/FAIL line per criterion and exits non-zero if any failed.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use icp::ann::{
    exact_search, recall, sharded_search, Encoding, IndexParams, IvfPqIndex, NeighborList, Shard,
    ShardBackend, CODEBOOK_SIZE,
};
use icp::corpus::Corpus;
use icp::dedup::{apply_keep_set, find_duplicates};
use icp::embed::{cosine, EmbeddingStore};
use icp::graph::{build_graph, DocumentGraph};
use icp::metrics::{strategy_report, ReportConfig};
use icp::ordering::{
    brute_force_max_path, path_weight, random_order, tsp_path, Strategy, TspOptions,
};
use icp::packing::{pack_contexts, PackOptions};
use icp::pipeline::{run_pipeline, PipelineConfig};
use icp::synth::{gaussian_mixture, random_corpus, random_unit_vectors, topic_corpus_jsonl};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn within(limit: Duration, start: Instant) -> (bool, String) {
    let t = start.elapsed();
    (
        t < limit,
        format!("{:.1}s of {}s", t.as_secs_f64(), limit.as_secs()),
    )
}

/// Random undirected graph: every node links to `k` random others.
fn random_knn_graph(n: usize, k: usize, rng: &mut ChaCha8Rng) -> DocumentGraph {
    let mut edges: BTreeMap<(u32, u32), f32> = BTreeMap::new();
    if n > 1 {
        for a in 0..n as u32 {
            for _ in 0..k.min(n - 1) {
                let mut b = rng.random_range(0..n as u32 - 1);
                if b >= a {
                    b += 1;
                }
                let w = rng.random_range(0.001f32..1.0);
                edges.entry((a.min(b), a.max(b))).or_insert(w);
            }
        }
    }
    let list: Vec<(u32, u32, f32)> = edges.into_iter().map(|((a, b), w)| (a, b, w)).collect();
    DocumentGraph::from_edges(n, &list).expect("valid edges")
}

fn path_cover() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut failures = 0;
    let mut largest = 0;
    for g in 0..200u64 {
        let n = rng.random_range(1..=5000);
        let k = rng.random_range(1..=20);
        largest = largest.max(n);
        let graph = random_knn_graph(n, k, &mut rng);
        let path = tsp_path(&graph, &TspOptions::seeded(g)).expect("traversal");
        let mut sorted = path.order.clone();
        sorted.sort_unstable();
        if sorted != (0..n as u32).collect::<Vec<_>>() {
            failures += 1;
        }
    }
    let (fast, time) = within(Duration::from_secs(60), start);
    outcome(
        failures == 0 && fast,
        format!("200 graphs up to N={largest}, {failures} non-permutations, {time}"),
    )
}

fn greedy_vs_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut violations = 0;
    let mut first = String::new();
    for g in 0..100u64 {
        let n = rng.random_range(2..=8);
        let density = rng.random_range(0.3..=1.0);
        let mut edges = Vec::new();
        for a in 0..n as u32 {
            for b in a + 1..n as u32 {
                if rng.random_bool(density) {
                    edges.push((a, b, rng.random_range(0.01f32..1.0)));
                }
            }
        }
        let graph = DocumentGraph::from_edges(n, &edges).expect("valid edges");
        let (_, best) = brute_force_max_path(&graph).expect("small graph");
        let greedy = tsp_path(&graph, &TspOptions::seeded(g)).expect("traversal");
        let greedy_w = path_weight(&greedy.order, &graph).expect("weight");
        let ids: Vec<u32> = (0..n as u32).collect();
        let mean = (0..100u64)
            .map(|s| {
                let p = random_order(&ids, g * 1000 + s).expect("shuffle");
                path_weight(&p.order, &graph).expect("weight")
            })
            .sum::<f64>()
            / 100.0;
        // Both sides sum the same f32 weights in f64; allow for summation order only.
        if best + 1e-9 < greedy_w || greedy_w + 1e-9 < mean {
            violations += 1;
            if first.is_empty() {
                first = format!(
                    "; first at graph {g} (N={n}): best {best:.3}, greedy {greedy_w:.3} via {:?}, random mean {mean:.3}",
                    greedy.order
                );
            }
        }
    }
    let (fast, time) = within(Duration::from_secs(120), start);
    outcome(
        violations == 0 && fast,
        format!("100 graphs, {violations} violations{first}, {time}"),
    )
}

struct AnnFixture {
    data: EmbeddingStore,
    query_ids: Vec<u32>,
    truth: NeighborList,
    started: Instant,
}

fn ann_fixture() -> AnnFixture {
    let started = Instant::now();
    let n = 100_000;
    let (data, _) = gaussian_mixture(n, 64, 32, 0.1, 7);
    let query_ids: Vec<u32> = (0..1000).map(|i| i * 100).collect();
    let truth =
        exact_search(&data, &data.select(&query_ids), Some(&query_ids), 10).expect("oracle");
    AnnFixture {
        data,
        query_ids,
        truth,
        started,
    }
}

fn recall_curve(f: &AnnFixture, params: IndexParams, probes: &[usize]) -> Vec<f64> {
    let all: Vec<u32> = (0..f.data.len() as u32).collect();
    // Rows are i.i.d., so a prefix is a uniform training sample.
    let sample = f.data.select(&all[..25_000]);
    let mut index = IvfPqIndex::train(&sample, &params).expect("train");
    index.add(&f.data, &all).expect("add");
    let queries = f.data.select(&f.query_ids);
    probes
        .iter()
        .map(|&p| {
            let (found, _) = index
                .search(&queries, Some(&f.query_ids), 10, p)
                .expect("search");
            recall(&found, &f.truth, 10).expect("recall")
        })
        .collect()
}

fn non_decreasing(xs: &[f64]) -> bool {
    xs.windows(2).all(|w| w[1] >= w[0])
}

fn fmt_curve(probes: &[usize], xs: &[f64]) -> String {
    probes
        .iter()
        .zip(xs)
        .map(|(p, r)| format!("{p}:{r:.4}"))
        .collect::<Vec<_>>()
        .join(" ")
}

fn ann_fidelity() -> Vec<(&'static str, Outcome)> {
    let f = ann_fixture();
    let probes = [1, 4, 16, 32, 64, 256];
    let monotone_probes = [1, 4, 16, 64, 256];
    let pq = recall_curve(&f, IndexParams::pq(256, 8, 7), &probes);
    let flat = recall_curve(&f, IndexParams::flat(256, 7), &probes);
    let pick = |xs: &[f64]| -> Vec<f64> {
        monotone_probes
            .iter()
            .map(|p| xs[probes.iter().position(|q| q == p).unwrap()])
            .collect()
    };
    let (fast, time) = within(Duration::from_secs(300), f.started);
    vec![
        (
            "ANN fidelity: PQ (m=8) recall@10 >= 0.9 at nprobe=32",
            outcome(pq[3] >= 0.9, format!("recall {:.4}", pq[3])),
        ),
        (
            "ANN fidelity: PQ recall non-decreasing over nprobe",
            outcome(non_decreasing(&pick(&pq)), fmt_curve(&probes, &pq)),
        ),
        (
            "ANN fidelity: flat recall non-decreasing, exactly 1.0 at nprobe=256",
            outcome(
                non_decreasing(&pick(&flat)) && flat[5] == 1.0,
                fmt_curve(&probes, &flat),
            ),
        ),
        ("ANN fidelity: runtime", outcome(fast, time)),
    ]
}

fn sharded_equivalence() -> Outcome {
    let n = 10_000;
    let data = random_unit_vectors(n, 32, 4);
    let ids: Vec<u32> = (0..n as u32).collect();
    let shards = Shard::split(&data, n / 4);
    let merged =
        sharded_search(&shards, &data, Some(&ids), 10, ShardBackend::Exact).expect("sharded");
    let global = exact_search(&data, &data, Some(&ids), 10).expect("exact");
    let differing = (0..n)
        .filter(|&q| {
            let a: BTreeSet<u32> = merged.row(q).iter().map(|nb| nb.id).collect();
            let b: BTreeSet<u32> = global.row(q).iter().map(|nb| nb.id).collect();
            a != b
        })
        .count();
    outcome(
        differing == 0 && shards.len() == 4,
        format!(
            "{} shards, {n} queries, {differing} differing",
            shards.len()
        ),
    )
}

fn dedup_planted() -> Outcome {
    let base = 950;
    let pairs = 50;
    let dim = 256;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let originals = random_unit_vectors(base, dim, 5);
    let mut rows: Vec<Vec<f32>> = originals.rows().map(<[f32]>::to_vec).collect();
    let mut planted = Vec::new();
    for p in 0..pairs {
        let src = p * (base / pairs);
        let noisy: Vec<f32> = rows[src]
            .iter()
            .map(|x| x + rng.random_range(-0.01f32..0.01))
            .collect();
        planted.push((src as u32, rows.len() as u32));
        rows.push(noisy);
    }
    let embeddings = EmbeddingStore::from_rows(&rows).expect("rows");
    let min_pair_cos = planted
        .iter()
        .map(|&(a, b)| cosine(embeddings.row(a as usize), embeddings.row(b as usize)).unwrap())
        .fold(f32::INFINITY, f32::min);
    let n = rows.len();
    let ids: Vec<u32> = (0..n as u32).collect();
    let neighbors = exact_search(&embeddings, &embeddings, Some(&ids), 10).expect("search");
    let keep = find_duplicates(&neighbors, 0.95).expect("dedup");
    let corpus = random_corpus(n, 5, 20, 5);
    let deduped = apply_keep_set(&corpus, &embeddings, &neighbors, &keep).expect("apply");

    let removed: BTreeSet<u32> = keep.removed.iter().copied().collect();
    let one_survivor = planted
        .iter()
        .filter(|(a, b)| removed.contains(a) != removed.contains(b))
        .count();
    let planted_ids: BTreeSet<u32> = planted.iter().flat_map(|&(a, b)| [a, b]).collect();
    let false_removals = removed
        .iter()
        .filter(|id| !planted_ids.contains(id))
        .count();
    outcome(
        one_survivor == pairs
            && false_removals == 0
            && removed.len() == pairs
            && deduped.corpus.len() == n - pairs
            && min_pair_cos >= 0.99,
        format!(
            "{one_survivor}/{pairs} pairs with one survivor, {false_removals} false removals, min planted cosine {min_pair_cos:.4}"
        ),
    )
}

fn ladder_fixture() -> (Corpus, EmbeddingStore, NeighborList, DocumentGraph) {
    let n = 5000;
    let (embeddings, _) = gaussian_mixture(n, 64, 20, 0.1, 42);
    let corpus = random_corpus(n, 50, 300, 42);
    let ids: Vec<u32> = (0..n as u32).collect();
    let neighbors = exact_search(&embeddings, &embeddings, Some(&ids), 10).expect("search");
    let graph = build_graph(&neighbors).expect("graph");
    (corpus, embeddings, neighbors, graph)
}

fn ladder_and_repetition() -> Vec<(&'static str, Outcome)> {
    let start = Instant::now();
    let (corpus, embeddings, neighbors, graph) = ladder_fixture();
    let config = ReportConfig {
        pack: PackOptions {
            context_length: 1024,
            ..PackOptions::default()
        },
        knn_k: 5,
        n_clusters: 20,
        seed: 42,
        ..ReportConfig::default()
    };
    let report = strategy_report(
        &corpus,
        &embeddings,
        &neighbors,
        &graph,
        &Strategy::ALL,
        &config,
    )
    .expect("report");
    let get = |s| report.get(s).cloned().expect("strategy succeeded");
    let (icp, cluster, random, knn) = (
        get(Strategy::Icp),
        get(Strategy::Cluster),
        get(Strategy::Random),
        get(Strategy::Knn),
    );
    let gap_top = icp.intra_context_similarity - cluster.intra_context_similarity;
    let gap_bottom = cluster.intra_context_similarity - random.intra_context_similarity;
    let (fast, time) = within(Duration::from_secs(120), start);
    vec![
        (
            "Relevance ladder: icp > cluster > random, gaps > 0.02",
            outcome(
                gap_top > 0.02 && gap_bottom > 0.02 && fast,
                format!(
                    "icp {:.4}, cluster {:.4}, random {:.4}; gaps {gap_top:.4}, {gap_bottom:.4}; {time}",
                    icp.intra_context_similarity,
                    cluster.intra_context_similarity,
                    random.intra_context_similarity
                ),
            ),
        ),
        (
            "Repetition: knn(k=5) > 0.5, icp = 0",
            outcome(
                knn.repetition_rate > 0.5 && icp.repetition_rate == 0.0,
                format!("knn {:.4}, icp {}", knn.repetition_rate, icp.repetition_rate),
            ),
        ),
    ]
}

fn packing_conservation() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut failures = Vec::new();
    for trial in 0..50u64 {
        let n = rng.random_range(1..=300);
        let corpus = random_corpus(n, 1, 500, trial);
        let ids: Vec<u32> = (0..n as u32).collect();
        let order = random_order(&ids, trial).expect("shuffle");
        let opts = PackOptions {
            context_length: rng.random_range(2..=2048),
            separator: rng.random_bool(0.5),
            drop_last: rng.random_bool(0.5),
        };
        let (contexts, report) = pack_contexts(&order, &corpus, &opts).expect("pack");
        let doc_tokens: u64 = corpus
            .documents()
            .iter()
            .map(|d| d.tokens.len() as u64)
            .sum();
        let packed: u64 = contexts.iter().map(|c| c.len() as u64).sum();
        let l = opts.context_length;
        let ok = report.total_tokens == doc_tokens + report.separators
            && report.total_tokens == report.packed_tokens + report.dropped_tokens
            && packed == report.packed_tokens
            && contexts.iter().rev().skip(1).all(|c| c.len() == l)
            && contexts
                .last()
                .is_none_or(|c| c.len() <= l && (!opts.drop_last || c.len() == l));
        if !ok {
            failures.push(trial);
        }
    }
    outcome(
        failures.is_empty(),
        format!("50 trials, failing: {failures:?}"),
    )
}

fn read_tree(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).expect("readable dir") {
            let path = entry.expect("entry").path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path
                    .strip_prefix(root)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                out.insert(rel, std::fs::read(&path).expect("readable file"));
            }
        }
    }
    out
}

fn end_to_end_determinism() -> Outcome {
    let tmp = tempfile::tempdir().expect("tempdir");
    let input = tmp.path().join("corpus.jsonl");
    std::fs::write(&input, topic_corpus_jsonl(1000, 8, 20, 9)).expect("write input");
    let config = PipelineConfig {
        dim: 128,
        seed: 9,
        ..PipelineConfig::default()
    };
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    run_pipeline(&config, &input, &a).expect("first run");
    run_pipeline(&config, &input, &b).expect("second run");
    let (ta, tb) = (read_tree(&a), read_tree(&b));
    let differing: Vec<&String> = ta
        .keys()
        .chain(tb.keys())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .filter(|k| ta.get(*k) != tb.get(*k))
        .collect();
    outcome(
        differing.is_empty() && ta.len() >= 8,
        format!("{} files compared, differing: {differing:?}", ta.len()),
    )
}

fn large_scale_parameters() -> Outcome {
    let cfg = PipelineConfig::large_scale();
    let valid = cfg.validate().is_ok();
    let (dim, nlist, m) = (cfg.dim as usize, cfg.nlist as usize, cfg.m as usize);
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let coarse = random_unit_vectors(nlist, dim, 10).as_slice().to_vec();
    let books: Vec<f32> = (0..m * CODEBOOK_SIZE * (dim / m))
        .map(|_| rng.random_range(-0.1f32..0.1))
        .collect();
    let params = IndexParams {
        nlist,
        m,
        encoding: Encoding::Pq,
        seed: cfg.seed,
    };
    let mut index = IvfPqIndex::from_parts(dim, &params, coarse, books).expect("index");
    let data = random_unit_vectors(200, dim, 11);
    index
        .add(&data, &(0..200).collect::<Vec<_>>())
        .expect("add");
    let (_, stats) = index
        .search(
            &data.select(&[0, 1, 2]),
            Some(&[0, 1, 2]),
            10,
            cfg.nprobe as usize,
        )
        .expect("search");
    let percent = 100.0 * stats.probed_fraction();
    outcome(
        valid
            && stats.nprobe == 64
            && stats.nlist == 32_768
            && (percent - 0.195).abs() < 5e-4
            && (cfg.probed_fraction() - stats.probed_fraction()).abs() < 1e-15,
        format!(
            "config valid: {valid}; probed {} of {} lists = {percent:.4}%",
            stats.nprobe, stats.nlist
        ),
    )
}

fn main() {
    let mut results: Vec<(&'static str, Outcome)> = vec![
        ("Path-cover invariant", path_cover()),
        ("Greedy vs oracle", greedy_vs_oracle()),
    ];
    results.extend(ann_fidelity());
    results.push(("Sharded-search equivalence", sharded_equivalence()));
    results.push(("Dedup of planted pairs", dedup_planted()));
    results.extend(ladder_and_repetition());
    results.push(("Packing conservation", packing_conservation()));
    results.push(("End-to-end determinism", end_to_end_determinism()));
    results.push(("Large-scale parameter validation", large_scale_parameters()));

    println!();
    for (name, o) in &results {
        println!(
            "{} {name}: {}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail
        );
    }
    let failed = results.iter().filter(|(_, o)| !o.pass).count();
    println!(
        "\n{} of {} criteria passed",
        results.len() - failed,
        results.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
