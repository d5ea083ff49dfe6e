//! Acceptance criteria, one line per criterion.
//!
//! P6 to P8 need the MovieLens-1M `ratings.dat`; point `HSGCN_ML1M` at it and
//! build with `--release`, otherwise they are reported as skipped.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use hsgcn::corpus::{
    load_interactions, BipartiteGraph, Interaction, InteractionDataset, LoadOptions, SplitConfig, SplitDataset,
};
use hsgcn::eval::{bench_retrieval, evaluate, hit_ratio_at_k, ndcg_at_k, EvalOptions};
use hsgcn::hamming::{hamming_similarity, top_k_scan, CodeMatrix, PackedCodes};
use hsgcn::model::{export_codes, propagate_matrix, propagate_node};
use hsgcn::training::{
    finite_difference_check, random_instance, resample_away_from_kinks, train, GradCheckConfig, LossConfig,
    TrainConfig, TrainReport,
};
use hsgcn::Matrix;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

type Check = fn() -> Outcome;

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn outcome(r: Result<String, String>) -> Outcome {
    match r {
        Ok(s) => Outcome::Pass(s),
        Err(s) => Outcome::Fail(s),
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn random_signs(n: usize, r: &mut ChaCha8Rng) -> Vec<i8> {
    (0..n).map(|_| if r.gen_bool(0.5) { 1 } else { -1 }).collect()
}

fn p1_gradient() -> Outcome {
    outcome((|| {
        let loss = LossConfig::default();
        let cfg = GradCheckConfig::default();
        let (params, graph, batch) = random_instance(8, 8, 8, 2, loss.negatives_per_positive, 1).map_err(|e| e.to_string())?;
        let params = resample_away_from_kinks(&params, &graph, &batch, &loss, &cfg, 1.0, 100, &mut rng(2))
            .map_err(|e| e.to_string())?;
        let rep = finite_difference_check(&params, &graph, &batch, &loss, &cfg).map_err(|e| e.to_string())?;
        let detail = format!("max relative error {:.2e} over {} coordinates", rep.max_rel_error, rep.checked);
        ensure(rep.checked > 0 && rep.passed(1e-4), detail.clone())?;
        Ok(detail)
    })())
}

fn random_graph(users: usize, items: usize, p: f64, r: &mut ChaCha8Rng) -> BipartiteGraph {
    let edges: Vec<(u32, u32)> = (0..users as u32)
        .flat_map(|u| (0..items as u32).map(move |i| (u, i)))
        .filter(|_| r.gen_bool(p))
        .collect();
    BipartiteGraph::from_edges(users, items, edges.iter().copied())
}

fn p2_form_equivalence() -> Outcome {
    outcome((|| {
        let mut r = rng(3);
        let mut isolated = 0;
        let mut worst = 0.0f64;
        for g in 0..50 {
            let users = r.gen_range(1..=100);
            let items = r.gen_range(1..=100);
            let k = [1, 7, 64, 128][g % 4];
            let graph = random_graph(users, items, r.gen_range(0.0..0.2), &mut r);
            isolated += (0..graph.num_nodes()).filter(|&n| graph.node_degree(n) == 0).count();
            let h = CodeMatrix::new(Matrix::<f64>::uniform(users + items, k, 1.0, &mut r)).map_err(|e| e.to_string())?;
            let (next, _) = propagate_matrix(&h, &graph, None).map_err(|e| e.to_string())?;
            for n in 0..graph.num_nodes() {
                let neigh: Vec<&[f64]> = graph.node_neighbors(n).map(|m| h.row(m)).collect();
                let step = propagate_node(h.row(n), &neigh).map_err(|e| e.to_string())?;
                for (a, b) in step.h_next.iter().zip(next.row(n)) {
                    worst = worst.max((a - b).abs());
                }
            }
        }
        ensure(worst <= 1e-12, format!("max difference {worst:e}"))?;
        ensure(isolated > 0, "no graph had an isolated node")?;
        Ok(format!("max difference {worst:e}, {isolated} isolated nodes"))
    })())
}

/// Majority of the node's own sign and its neighbors' signs; ties keep self.
fn majority(h: &Matrix<f64>, graph: &BipartiteGraph, n: usize, b: usize) -> f64 {
    let mut votes = h.get(n, b);
    for m in graph.node_neighbors(n) {
        votes += h.get(m, b);
    }
    if votes > 0.0 {
        1.0
    } else if votes < 0.0 {
        -1.0
    } else {
        h.get(n, b)
    }
}

fn check_majority(graph: &BipartiteGraph, signs: &[i8], k: usize) -> Result<(), String> {
    let h = Matrix::from_vec(graph.num_nodes(), k, signs.iter().map(|&s| s as f64).collect()).map_err(|e| e.to_string())?;
    let codes = CodeMatrix::new(h.clone()).map_err(|e| e.to_string())?;
    let (next, _) = propagate_matrix(&codes, graph, None).map_err(|e| e.to_string())?;
    for n in 0..graph.num_nodes() {
        for b in 0..k {
            let v = next.get(n, b);
            ensure(v == 1.0 || v == -1.0, format!("non-binary output {v}"))?;
            ensure(v == majority(&h, graph, n, b), format!("node {n} bit {b} disagrees with majority"))?;
        }
    }
    Ok(())
}

fn p3_majority() -> Outcome {
    outcome((|| {
        let mut cases = 0usize;
        let mut r = rng(4);
        for users in 1..=4usize {
            for items in 1..=4usize {
                let pairs: Vec<(u32, u32)> = (0..users as u32)
                    .flat_map(|u| (0..items as u32).map(move |i| (u, i)))
                    .collect();
                for subset in 0u32..(1 << pairs.len()) {
                    let edges: Vec<(u32, u32)> =
                        pairs.iter().enumerate().filter(|(e, _)| subset >> e & 1 == 1).map(|(_, &p)| p).collect();
                    let graph = BipartiteGraph::from_edges(users, items, edges.iter().copied());
                    let signs = random_signs((users + items) * 2, &mut r);
                    check_majority(&graph, &signs, 2)?;
                    cases += 1;
                }
            }
        }
        for _ in 0..1000 {
            let users = r.gen_range(1..=30);
            let items = r.gen_range(1..=30);
            let k = r.gen_range(1..=70);
            let graph = random_graph(users, items, r.gen_range(0.0..0.5), &mut r);
            let signs = random_signs((users + items) * k, &mut r);
            check_majority(&graph, &signs, k)?;
            cases += 1;
        }
        Ok(format!("{cases} graphs"))
    })())
}

fn full_sort(scores: &[i32], exclude: &[u32], k: usize) -> Vec<(u32, i32)> {
    let mut all: Vec<(u32, i32)> = scores
        .iter()
        .enumerate()
        .map(|(j, &s)| (j as u32, s))
        .filter(|(j, _)| !exclude.contains(j))
        .collect();
    all.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    all.truncate(k);
    all
}

fn p4_packed_scores() -> Outcome {
    outcome((|| {
        let mut r = rng(5);
        let widths = [1usize, 63, 64, 65, 128, 256];
        for n in 0..10_000 {
            let k = widths[n % widths.len()];
            let a = random_signs(k, &mut r);
            let b = random_signs(k, &mut r);
            let pa = PackedCodes::from_signs(1, k, &a).map_err(|e| e.to_string())?;
            let pb = PackedCodes::from_signs(1, k, &b).map_err(|e| e.to_string())?;
            let dot: i32 = a.iter().zip(&b).map(|(&x, &y)| x as i32 * y as i32).sum();
            let sim = hamming_similarity(pa.row(0), pb.row(0), k).map_err(|e| e.to_string())?;
            ensure(sim == dot, format!("width {k}: {sim} != {dot}"))?;
        }
        let mut ties = 0;
        for n in 0..500 {
            let k = widths[n % widths.len()];
            let m = r.gen_range(1..200);
            let items = random_signs(m * k, &mut r);
            let packed = PackedCodes::from_signs(m, k, &items).map_err(|e| e.to_string())?;
            let q = random_signs(k, &mut r);
            let pq = PackedCodes::from_signs(1, k, &q).map_err(|e| e.to_string())?;
            let scores: Vec<i32> = (0..m)
                .map(|j| (0..k).map(|b| items[j * k + b] as i32 * q[b] as i32).sum())
                .collect();
            let mut exclude: Vec<u32> = (0..m as u32).filter(|_| r.gen_bool(0.1)).collect();
            exclude.sort_unstable();
            let top = r.gen_range(1..=m + 5);
            let got = top_k_scan(packed.view(), pq.row(0), top, &exclude).map_err(|e| e.to_string())?;
            let want = full_sort(&scores, &exclude, top);
            ensure(got == want, format!("top-{top} over {m} items at width {k} differs"))?;
            ties += want.windows(2).filter(|w| w[0].1 == w[1].1).count();
        }
        ensure(ties > 0, "no tied scores exercised")?;
        Ok(format!("10000 pairs, 500 rankings with {ties} adjacent ties"))
    })())
}

fn oracle_hr(ranked: &[u32], relevant: &[u32], k: usize) -> Option<f64> {
    if relevant.is_empty() {
        return None;
    }
    let mut hits = 0;
    for pos in 0..k.min(ranked.len()) {
        if relevant.contains(&ranked[pos]) {
            hits += 1;
        }
    }
    Some(hits as f64 / relevant.len().min(k) as f64)
}

fn oracle_ndcg(ranked: &[u32], relevant: &[u32], k: usize) -> Option<f64> {
    if relevant.is_empty() {
        return None;
    }
    let mut dcg = 0.0;
    for pos in 0..k.min(ranked.len()) {
        if relevant.contains(&ranked[pos]) {
            dcg += 1.0 / ((pos + 2) as f64).log2();
        }
    }
    let mut idcg = 0.0;
    for pos in 0..relevant.len().min(k) {
        idcg += 1.0 / ((pos + 2) as f64).log2();
    }
    Some(dcg / idcg)
}

fn p5_metrics() -> Outcome {
    outcome((|| {
        let mut r = rng(6);
        for _ in 0..1000 {
            let n = r.gen_range(1..60u32);
            let mut ranked: Vec<u32> = (0..n).collect();
            ranked.shuffle(&mut r);
            let mut relevant: Vec<u32> = (0..n + 5).filter(|_| r.gen_bool(0.2)).collect();
            relevant.sort_unstable();
            let k = r.gen_range(1..70);
            ensure(hit_ratio_at_k(&ranked, &relevant, k) == oracle_hr(&ranked, &relevant, k), "hit ratio differs")?;
            ensure(ndcg_at_k(&ranked, &relevant, k) == oracle_ndcg(&ranked, &relevant, k), "ndcg differs")?;
        }
        let second = ndcg_at_k(&[3, 9, 4], &[9], 10).unwrap();
        let want = 1.0 / 3f64.log2();
        ensure((second - want).abs() <= 1e-12, format!("rank-2 ndcg {second}"))?;
        Ok("1000 lists, rank-2 ndcg = 1/log2(3)".into())
    })())
}

fn ml1m_path() -> Option<PathBuf> {
    std::env::var_os("HSGCN_ML1M").map(PathBuf::from)
}

fn ml1m_split(path: &Path, user_fraction: Option<f64>) -> Result<SplitDataset, String> {
    let ds = load_interactions(path, &LoadOptions::default()).map_err(|e| e.to_string())?;
    let ds = match user_fraction {
        None => ds,
        Some(frac) => {
            let mut r = rng(11);
            let keep: Vec<bool> = (0..ds.num_users()).map(|_| r.gen_bool(frac)).collect();
            let kept: Vec<Interaction> =
                ds.interactions().iter().copied().filter(|x| keep[x.user as usize]).collect();
            let pairs: Vec<(u32, u32)> = kept.iter().map(|x| (x.user, x.item)).collect();
            InteractionDataset::from_pairs(ds.num_users(), ds.num_items(), &pairs)
        }
    };
    SplitDataset::new(&ds, SplitConfig::default()).map_err(|e| e.to_string())
}

fn test_hr50(split: &SplitDataset, config: TrainConfig) -> Result<(f64, TrainReport), String> {
    let (params, report) = train::<f32>(split, config).map_err(|e| e.to_string())?;
    let graph = hsgcn::corpus::build_graph(&split.train);
    let file = export_codes(&params, &graph, split.ids()).map_err(|e| e.to_string())?;
    let opts = EvalOptions {
        groups: false,
        ..EvalOptions::with_ks(&[50])
    };
    let metrics = evaluate(&file.codes, split, &opts).map_err(|e| e.to_string())?;
    Ok((metrics.hr(50).unwrap_or(0.0), report))
}

fn best_valid_hr(report: &TrainReport) -> f64 {
    report
        .epochs
        .iter()
        .filter_map(|e| e.valid_hr)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn p6_p7_movielens() -> (Outcome, Outcome) {
    let Some(path) = ml1m_path() else {
        let why = "HSGCN_ML1M not set".to_string();
        return (Outcome::Skip(why.clone()), Outcome::Skip(why));
    };
    let run = || -> Result<(f64, f64), String> {
        let split = ml1m_split(&path, None)?;
        let (hr2, _) = test_hr50(&split, TrainConfig::default())?;
        let (hr1, _) = test_hr50(&split, TrainConfig { layers: 1, ..TrainConfig::default() })?;
        Ok((hr2, hr1))
    };
    match run() {
        Err(e) => (Outcome::Fail(e.clone()), Outcome::Fail(e)),
        Ok((hr2, hr1)) => {
            let p6 = format!("HR@50 {hr2:.4}, accepted range [0.15, 0.26]");
            let p7 = format!("HR@50 L=2 {hr2:.4} vs L=1 {hr1:.4}");
            (
                if (0.15..=0.26).contains(&hr2) { Outcome::Pass(p6) } else { Outcome::Fail(p6) },
                if hr2 >= hr1 { Outcome::Pass(p7) } else { Outcome::Fail(p7) },
            )
        }
    }
}

fn p8_ablation() -> Outcome {
    let Some(path) = ml1m_path() else {
        return Outcome::Skip("HSGCN_ML1M not set".into());
    };
    outcome((|| {
        let split = ml1m_split(&path, Some(0.1))?;
        let (_, intact) = test_hr50(&split, TrainConfig::default())?;
        let mut ablated = TrainConfig::default();
        ablated.loss.use_final_rank = false;
        let (_, without) = test_hr50(&split, ablated)?;
        let (a, b) = (best_valid_hr(&intact), best_valid_hr(&without));
        let detail = format!("validation HR@50 intact {a:.4} vs without final rank {b:.4}");
        ensure(a >= b, detail.clone())?;
        Ok(detail)
    })())
}

fn p9_efficiency() -> Outcome {
    outcome((|| {
        let mut r = rng(9);
        let (m, k, queries) = (50_000, 64, 100);
        let items = PackedCodes::from_signs(m, k, &random_signs(m * k, &mut r)).map_err(|e| e.to_string())?;
        let q = PackedCodes::from_signs(queries, k, &random_signs(queries * k, &mut r)).map_err(|e| e.to_string())?;
        let dense = items.to_dense::<f32>();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().map_err(|e| e.to_string())?;
        let rep = pool
            .install(|| bench_retrieval(&items, &dense, &q, 50))
            .map_err(|e| e.to_string())?;
        let detail = format!(
            "speedup {:.2}x (packed {:.1} us, dense {:.1} us per query), rankings identical",
            rep.speedup, rep.packed_mean_us, rep.dense_mean_us
        );
        ensure(rep.speedup >= 2.0, detail.clone())?;
        Ok(detail)
    })())
}

fn toy_data() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/toy.csv")
}

fn run_cli(out: &Path, args: &[&str]) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_hsgcn"))
        .arg("--out")
        .arg(out)
        .args(["--threads", "1"])
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    ensure(
        status.status.success(),
        format!("hsgcn {:?} failed: {}", args, String::from_utf8_lossy(&status.stderr)),
    )
}

fn p10_determinism() -> Outcome {
    outcome((|| {
        let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
        let data = toy_data();
        let mut reports = Vec::new();
        for run in ["a", "b"] {
            let out = tmp.path().join(run);
            run_cli(&out, &["prepare", "--data", data.to_str().unwrap()])?;
            run_cli(
                &out,
                &[
                    "train", "--width", "16", "--batch-size", "64", "--max-epochs", "15", "--lr", "0.01", "--seed",
                    "42", "--node-dropout", "0.1", "--bit-dropout", "0.1",
                ],
            )?;
            reports.push(std::fs::read(out.join("train_report.tsv")).map_err(|e| e.to_string())?);
        }
        ensure(!reports[0].is_empty(), "empty report")?;
        ensure(reports[0] == reports[1], "reports differ between runs")?;
        Ok(format!("two runs, {} identical report bytes", reports[0].len()))
    })())
}

fn guarded(f: Check) -> Outcome {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Outcome::Fail(format!("panicked: {msg}"))
    })
}

fn report(id: &str, name: &str, o: &Outcome, secs: f64) -> bool {
    let (tag, detail, ok) = match o {
        Outcome::Pass(d) => ("PASS", d, true),
        Outcome::Fail(d) => ("FAIL", d, false),
        Outcome::Skip(d) => ("SKIP", d, true),
    };
    println!("{id:<4} {tag}  {name:<26} {detail} ({secs:.1}s)");
    ok
}

fn main() {
    let checks: [(&str, &str, Check); 7] = [
        ("P1", "gradient oracle", p1_gradient),
        ("P2", "form equivalence", p2_form_equivalence),
        ("P3", "binary majority", p3_majority),
        ("P4", "packed score identity", p4_packed_scores),
        ("P5", "metric oracles", p5_metrics),
        ("P9", "packed retrieval speedup", p9_efficiency),
        ("P10", "training determinism", p10_determinism),
    ];
    let mut ok = true;
    for (id, name, f) in checks {
        let t = Instant::now();
        let o = guarded(f);
        ok &= report(id, name, &o, t.elapsed().as_secs_f64());
        if id == "P5" {
            let t = Instant::now();
            let (p6, p7) = catch_unwind(p6_p7_movielens).unwrap_or_else(|_| {
                (Outcome::Fail("panicked".into()), Outcome::Fail("panicked".into()))
            });
            let secs = t.elapsed().as_secs_f64();
            ok &= report("P6", "MovieLens-1M HR@50", &p6, secs);
            ok &= report("P7", "depth ordering", &p7, secs);
            let t = Instant::now();
            ok &= report("P8", "final-rank ablation", &guarded(p8_ablation), t.elapsed().as_secs_f64());
        }
    }
    if !ok {
        std::process::exit(1);
    }
}
