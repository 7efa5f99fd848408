//! Acceptance suite. Each criterion prints one PASS or FAIL line followed by
//! a summary. With `--strict` (or `SGNE_ACCEPTANCE_STRICT=1`) the process
//! exits nonzero if any criterion fails.
//!
//! `cargo test -p sgne-cli --test acceptance` runs criteria 1-10. Add
//! `-- --include-ignored` for the 300k completion run as well, or
//! `-- --ignored` for that run alone. Other arguments filter criteria by
//! substring of their names.

use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgne_cli::config::{DrMethod, GeMethod, Input, RunConfig};
use sgne_cli::pipeline::{embed, load_graph, reduce, run_pipeline, score, LAYOUT_FILE};
use sgne_core::embed::eigen::{smallest_eigenpairs, DenseSymmetric, EigenOptions};
use sgne_core::embed::{shortest_path_embedding, splee_embedding, splee_kernel, Embedding, SpConfig, SpleeConfig};
use sgne_core::graph::{connected_components, Graph, NodePartition};
use sgne_core::metrics::{aesthetic_quality, cluster_layout, louvain, modularity, nmi, AqConfig};
use sgne_core::sne::{
    calibrate_conditional, kl_divergence, kl_gradient, knn_from_embedding, knn_from_graph, low_dim_affinities,
    symmetrize, ConditionalMatrix, Layout, SneConfig,
};
use sgne_core::synth::{generate_lfr, LfrParams};

type Outcome = Result<String, String>;

struct Criterion {
    name: &'static str,
    run: fn() -> Outcome,
    ignored: bool,
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

fn lfr(n: usize, mu: f64, seed: u64) -> (Graph, NodePartition) {
    generate_lfr(&LfrParams::new(n, 4.0, 4.0, mu, seed)).expect("LFR generation")
}

fn run_config(n: usize, mu: f64, seed: u64, ge: GeMethod, dr: DrMethod) -> RunConfig {
    let mut cfg = RunConfig::default();
    cfg.input = Input::Lfr;
    cfg.lfr.n = n;
    cfg.lfr.mu = mu;
    cfg.lfr.seed = seed;
    cfg.ge = ge;
    cfg.dr = dr;
    cfg.seed = seed;
    cfg.sp.seed = seed;
    cfg.sne.seed = seed;
    cfg
}

/// Least-squares slope of `log t` against `log n`.
fn loglog_slope(ns: &[usize], ts: &[f64]) -> f64 {
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = ts.iter().map(|t| t.ln()).collect();
    let mx = xs.iter().sum::<f64>() / xs.len() as f64;
    let my = ys.iter().sum::<f64>() / ys.len() as f64;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    sxy / sxx
}

fn knn_scaling() -> Outcome {
    let start = Instant::now();
    let sizes = [4000, 8000, 16000, 32000];
    let k = SneConfig::default().k();
    let (mut tg, mut te) = (Vec::new(), Vec::new());
    for &n in &sizes {
        let (g, _) = lfr(n, 0.18, 1);
        let x = shortest_path_embedding(&g, &SpConfig { dim: 128, threshold: None, seed: 1 }).map_err(|e| e.to_string())?;
        let mut best = f64::INFINITY;
        for _ in 0..3 {
            let t = Instant::now();
            knn_from_graph(&g, k, Some(&x)).map_err(|e| e.to_string())?;
            best = best.min(t.elapsed().as_secs_f64());
        }
        tg.push(best);
        let t = Instant::now();
        knn_from_embedding(&x, k).map_err(|e| e.to_string())?;
        te.push(t.elapsed().as_secs_f64());
    }
    let (sg, se) = (loglog_slope(&sizes, &tg), loglog_slope(&sizes, &te));
    let total = start.elapsed().as_secs_f64();
    check(
        sg <= 1.3 && se >= 1.7 && total < 600.0,
        format!(
            "graph slope {sg:.2} (<= 1.3), embedding slope {se:.2} (>= 1.7), graph {:?} s, embedding {:?} s, total {total:.0} s (< 600)",
            tg.iter().map(|t| format!("{t:.3}")).collect::<Vec<_>>(),
            te.iter().map(|t| format!("{t:.1}")).collect::<Vec<_>>(),
        ),
    )
}

fn dr_speed_ratio() -> Outcome {
    let cfg = run_config(30_000, 0.18, 0, GeMethod::ShortestPath, DrMethod::Tsne);
    let (g, _) = load_graph(&cfg).map_err(|e| e.to_string())?;
    let x = embed(&g, &cfg).map_err(|e| e.to_string())?;
    let mut times = Vec::new();
    for dr in [DrMethod::Tsne, DrMethod::Tsgne] {
        let mut c = cfg.clone();
        c.dr = dr;
        let t = Instant::now();
        reduce(&g, &x, &c).map_err(|e| e.to_string())?;
        times.push(t.elapsed().as_secs_f64());
    }
    let ratio = times[1] / times[0];
    check(
        ratio <= 0.5,
        format!("t-SNE DR {:.1} s, t-SGNE DR {:.1} s, ratio {ratio:.3} (<= 0.5)", times[0], times[1]),
    )
}

fn pipeline_nmi(cfg: &RunConfig) -> Result<f64, String> {
    let (g, _) = load_graph(cfg).map_err(|e| e.to_string())?;
    let x = embed(&g, cfg).map_err(|e| e.to_string())?;
    let (y, _) = reduce(&g, &x, cfg).map_err(|e| e.to_string())?;
    Ok(score(&g, &y, &cfg.aq, cfg.seed).map_err(|e| e.to_string())?.0.nmi)
}

fn quality_ordering() -> Outcome {
    let combos = [
        (GeMethod::Splee, DrMethod::Tsne),
        (GeMethod::ShortestPath, DrMethod::Tsne),
        (GeMethod::ShortestPath, DrMethod::Tsgne),
    ];
    let mut med = Vec::new();
    for (ge, dr) in combos {
        let mut v = Vec::new();
        for seed in 0..5 {
            v.push(pipeline_nmi(&run_config(2000, 0.15, seed, ge, dr))?);
        }
        med.push(median(v));
    }
    let (splee_tsne, sp_tsne, sp_tsgne) = (med[0], med[1], med[2]);
    check(
        splee_tsne >= sp_tsne - 0.02 && sp_tsgne >= sp_tsne,
        format!(
            "median NMI: SPLEE+t-SNE {splee_tsne:.4}, ShortestPath+t-SNE {sp_tsne:.4}, ShortestPath+t-SGNE {sp_tsgne:.4}"
        ),
    )
}

fn cluster_recovery() -> Outcome {
    let mut v = Vec::new();
    for seed in 0..5 {
        let cfg = run_config(2000, 0.10, seed, GeMethod::ShortestPath, DrMethod::Tsgne);
        let (g, planted) = load_graph(&cfg).map_err(|e| e.to_string())?;
        let planted = planted.expect("generated graph");
        let x = embed(&g, &cfg).map_err(|e| e.to_string())?;
        let (y, _) = reduce(&g, &x, &cfg).map_err(|e| e.to_string())?;
        let km = cluster_layout(&y, planted.cluster_count(), seed).map_err(|e| e.to_string())?;
        v.push(nmi(&km, &planted).map_err(|e| e.to_string())?);
    }
    let m = median(v.clone());
    check(m >= 0.7, format!("median NMI vs planted {m:.4} (>= 0.7), per seed {v:.3?}"))
}

fn random_affinities(n: usize, rng: &mut ChaCha8Rng) -> sgne_core::sne::AffinityMatrix {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut r: Vec<f64> = (0..n).map(|j| if i == j { 0.0 } else { rng.random::<f64>() + 0.01 }).collect();
            let s: f64 = r.iter().sum();
            r.iter_mut().for_each(|v| *v /= s);
            r
        })
        .collect();
    symmetrize(&ConditionalMatrix::from_dense(&rows).unwrap()).unwrap()
}

fn gradient_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = 1e-5;
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let n = 10;
        let p = random_affinities(n, &mut rng);
        let pts: Vec<[f64; 2]> = (0..n).map(|_| [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)]).collect();
        let kl = |pts: &[[f64; 2]]| {
            let y = Layout::new(pts.to_vec()).unwrap();
            kl_divergence(&p, &low_dim_affinities(&y).unwrap()).unwrap()
        };
        let grad = kl_gradient(&p, &Layout::new(pts.clone()).unwrap()).map_err(|e| e.to_string())?;
        let (mut diff, mut norm) = (0.0, 0.0);
        for i in 0..n {
            for a in 0..2 {
                let mut up = pts.clone();
                up[i][a] += h;
                let mut down = pts.clone();
                down[i][a] -= h;
                let fd = (kl(&up) - kl(&down)) / (2.0 * h);
                diff += (grad[i][a] - fd).powi(2);
                norm += fd * fd;
            }
        }
        worst = worst.max((diff / norm).sqrt());
    }
    check(worst <= 1e-4, format!("worst relative error {worst:.2e} over 20 instances (<= 1e-4)"))
}

fn perplexity_calibration() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    for (n, d) in [(100, 5), (300, 20), (500, 10)] {
        let x = Embedding::new(n, d, (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap();
        for target in [5.0, 30.0, 50.0] {
            let cond = calibrate_conditional(&x, target).map_err(|e| e.to_string())?;
            for i in 0..n {
                let (_, vals) = cond.row(i);
                let h: f64 = vals.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.log2()).sum();
                worst = worst.max((h.exp2() - target).abs() / target);
            }
        }
    }
    check(worst <= 1e-4, format!("worst relative perplexity error {worst:.2e} (<= 1e-4)"))
}

fn path_laplacian(n: usize) -> DenseSymmetric {
    let mut a = vec![0.0; n * n];
    for i in 0..n - 1 {
        a[i * n + i + 1] = -1.0;
        a[(i + 1) * n + i] = -1.0;
        a[i * n + i] += 1.0;
        a[(i + 1) * n + i + 1] += 1.0;
    }
    DenseSymmetric::new(n, a).unwrap()
}

fn random_connected_graph(n: usize, p: f64, rng: &mut ChaCha8Rng) -> Graph {
    loop {
        let mut edges = Vec::new();
        for i in 0..n as u32 {
            for j in (i + 1)..n as u32 {
                if rng.random::<f64>() < p {
                    edges.push((i, j));
                }
            }
        }
        let g = Graph::from_edges(n, &edges).unwrap();
        if connected_components(&g).cluster_count() == 1 {
            return g;
        }
    }
}

fn eigensolver_oracle() -> Outcome {
    let mut path_err = 0.0f64;
    for n in [4usize, 16, 64] {
        let pairs = smallest_eigenpairs(&path_laplacian(n), n, -1.0, &EigenOptions::default()).map_err(|e| e.to_string())?;
        for (k, v) in pairs.values.iter().enumerate() {
            let exact = 2.0 - 2.0 * (k as f64 * std::f64::consts::PI / n as f64).cos();
            path_err = path_err.max((v - exact).abs());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut splee_err = 0.0f64;
    let dim = 8;
    for _ in 0..10 {
        let g = random_connected_graph(50, 0.1, &mut rng);
        let cfg = SpleeConfig { dim, epsilon: 1.0, ..SpleeConfig::default() };
        let e = splee_embedding(&g, &cfg).map_err(|e| e.to_string())?;
        let k = splee_kernel(&g, &cfg).map_err(|e| e.to_string())?;
        let eig = DMatrix::from_row_slice(50, 50, &k.laplacian_dense()).symmetric_eigen();
        let mut order: Vec<usize> = (0..50).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        for j in 0..dim {
            let oracle = eig.eigenvectors.column(order[j + 1]);
            let col = e.column(j);
            let sign = if col.iter().zip(oracle.iter()).map(|(a, b)| a * b).sum::<f64>() < 0.0 { -1.0 } else { 1.0 };
            for (a, b) in col.iter().zip(oracle.iter()) {
                splee_err = splee_err.max((a - sign * b).abs());
            }
        }
    }
    check(
        path_err <= 1e-6 && splee_err <= 1e-5,
        format!("path spectrum error {path_err:.2e} (<= 1e-6), SPLEE vs dense {splee_err:.2e} (<= 1e-5)"),
    )
}

fn metric_closed_forms() -> Outcome {
    let part = |l: &[usize]| NodePartition::from_labels(l);
    let aq = |pts: Vec<[f64; 2]>, labels: &[usize], k: usize, p: f64| {
        let cfg = AqConfig { grid_k: k, dominance_p: p, occupied_denominator: false };
        aesthetic_quality(&Layout::new(pts).unwrap(), &part(labels), &cfg).unwrap()
    };
    let a = part(&[0, 0, 1, 1, 2, 2]);
    let values = [
        nmi(&a, &a).unwrap(),
        nmi(&a, &part(&[5, 5, 3, 3, 9, 9])).unwrap(),
        nmi(&part(&[0, 0, 1, 1]), &part(&[0, 1, 0, 1])).unwrap(),
        aq(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.2, 0.3]], &[0; 5], 2, 0.9),
        aq(vec![[0.0, 0.0], [0.1, 0.0], [1.0, 1.0], [0.9, 1.0]], &[0, 1, 0, 1], 2, 0.6),
        aq(vec![[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]], &[0, 0, 1, 1], 2, 0.6),
    ];
    let expected = [1.0, 1.0, 0.0, 1.0, 0.0, 1.0];
    check(values == expected, format!("got {values:?}, expected {expected:?}"))
}

/// Highest modularity over every set partition of the nodes.
fn brute_force_modularity(g: &Graph) -> f64 {
    fn rec(g: &Graph, v: usize, labels: &mut Vec<usize>, used: usize, best: &mut f64) {
        if v == g.node_count() {
            *best = best.max(modularity(g, &NodePartition::from_labels(labels)).unwrap());
            return;
        }
        for l in 0..=used {
            labels.push(l);
            rec(g, v + 1, labels, used.max(l + 1), best);
            labels.pop();
        }
    }
    let mut best = f64::NEG_INFINITY;
    rec(g, 0, &mut Vec::new(), 0, &mut best);
    best
}

fn louvain_recovery() -> Outcome {
    let mut v = Vec::new();
    for seed in 0..5 {
        let (g, planted) = lfr(1000, 0.1, seed);
        v.push(nmi(&louvain(&g, seed).map_err(|e| e.to_string())?, &planted).map_err(|e| e.to_string())?);
    }
    let m = median(v.clone());

    // Two triangles and K5, every labeled graph on up to 5 nodes, then
    // random graphs on 6 to 8.
    let triangles = Graph::from_edges(6, &[(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)]).unwrap();
    let k5: Vec<(u32, u32)> = (0..5).flat_map(|i| ((i + 1)..5).map(move |j| (i, j))).collect();
    let k5 = Graph::from_edges(5, &k5).unwrap();
    let named_ok = [&triangles, &k5].iter().all(|g| {
        let q = modularity(g, &louvain(g, 0).unwrap()).unwrap();
        q >= brute_force_modularity(g) - 1e-9
    });
    let mut graphs = vec![triangles, k5];
    for n in 2..=5usize {
        let pairs: Vec<(u32, u32)> = (0..n as u32).flat_map(|i| ((i + 1)..n as u32).map(move |j| (i, j))).collect();
        for mask in 1u32..(1 << pairs.len()) {
            let edges: Vec<_> = pairs.iter().enumerate().filter(|(b, _)| mask >> b & 1 == 1).map(|(_, &e)| e).collect();
            graphs.push(Graph::from_edges(n, &edges).unwrap());
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for n in 6..=8usize {
        for _ in 0..300 {
            let p = rng.random_range(0.2..0.8);
            let mut edges = Vec::new();
            for i in 0..n as u32 {
                for j in (i + 1)..n as u32 {
                    if rng.random::<f64>() < p {
                        edges.push((i, j));
                    }
                }
            }
            if !edges.is_empty() {
                graphs.push(Graph::from_edges(n, &edges).unwrap());
            }
        }
    }
    let mut agree = 0;
    let mut worst_gap = 0.0f64;
    for g in &graphs {
        let q = modularity(g, &louvain(g, 0).unwrap()).unwrap();
        let best = brute_force_modularity(g);
        if q >= best - 1e-9 {
            agree += 1;
        }
        worst_gap = worst_gap.max(best - q);
    }
    check(
        m > 0.9 && agree == graphs.len(),
        format!(
            "median NMI vs planted {m:.4} (> 0.9), two triangles and K5 optimal: {named_ok}, brute-force optimum reached on {agree}/{} small graphs (worst gap {worst_gap:.4})",
            graphs.len()
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cases = [
        run_config(1500, 0.18, 3, GeMethod::ShortestPath, DrMethod::Tsgne),
        run_config(1500, 0.18, 3, GeMethod::ShortestPath, DrMethod::Tsne),
        run_config(800, 0.18, 4, GeMethod::Splee, DrMethod::Tsne),
    ];
    let mut same = 0;
    for (i, cfg) in cases.iter().enumerate() {
        let mut bytes = Vec::new();
        for rep in 0..2 {
            let mut c = cfg.clone();
            c.workers = 1;
            c.out = dir.path().join(format!("case{i}-run{rep}"));
            run_pipeline(&c).map_err(|e| e.to_string())?;
            bytes.push(fs::read(c.out.join(LAYOUT_FILE)).map_err(|e| e.to_string())?);
        }
        if bytes[0] == bytes[1] {
            same += 1;
        }
    }
    check(same == cases.len(), format!("{same}/{} configurations produced byte-identical layout CSVs", cases.len()))
}

fn lfr_300k() -> Outcome {
    let mut cfg = run_config(300_000, 0.18, 0, GeMethod::ShortestPath, DrMethod::Tsgne);
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    cfg.out = dir.path().to_path_buf();
    let t = Instant::now();
    let m = run_pipeline(&cfg).map_err(|e| e.to_string())?;
    let secs = t.elapsed().as_secs_f64();
    check(
        secs < 1800.0,
        format!("{} nodes, {} edges in {secs:.0} s (< 1800)", m.graph.nodes, m.graph.edges),
    )
}

fn main() -> ExitCode {
    let criteria = [
        Criterion { name: "c01_knn_scaling", run: knn_scaling, ignored: false },
        Criterion { name: "c02_dr_speed_ratio", run: dr_speed_ratio, ignored: false },
        Criterion { name: "c03_quality_ordering", run: quality_ordering, ignored: false },
        Criterion { name: "c04_cluster_recovery", run: cluster_recovery, ignored: false },
        Criterion { name: "c05_gradient_oracle", run: gradient_oracle, ignored: false },
        Criterion { name: "c06_perplexity_calibration", run: perplexity_calibration, ignored: false },
        Criterion { name: "c07_eigensolver_oracle", run: eigensolver_oracle, ignored: false },
        Criterion { name: "c08_metric_closed_forms", run: metric_closed_forms, ignored: false },
        Criterion { name: "c09_louvain_recovery", run: louvain_recovery, ignored: false },
        Criterion { name: "c10_determinism", run: determinism, ignored: false },
        Criterion { name: "lfr_300k_completes", run: lfr_300k, ignored: true },
    ];
    let args: Vec<String> = std::env::args().skip(1).collect();
    let include_ignored = args.iter().any(|a| a == "--include-ignored");
    let only_ignored = args.iter().any(|a| a == "--ignored");
    let filters: Vec<&String> = args.iter().filter(|a| !a.starts_with('-')).collect();
    if args.iter().any(|a| a == "--list") {
        for c in &criteria {
            println!("{}: test", c.name);
        }
        return ExitCode::SUCCESS;
    }

    let (mut passed, mut failed) = (0, 0);
    for c in &criteria {
        if !filters.is_empty() && !filters.iter().any(|f| c.name.contains(f.as_str())) {
            continue;
        }
        let selected = if only_ignored { c.ignored } else { include_ignored || !c.ignored };
        if !selected {
            if c.ignored {
                println!("SKIP {} (ignored; run with --include-ignored)", c.name);
            } else {
                println!("SKIP {} (not selected)", c.name);
            }
            continue;
        }
        let t = Instant::now();
        let outcome = (c.run)();
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => {
                passed += 1;
                println!("PASS {} [{secs:.1} s]: {detail}", c.name);
            }
            Err(detail) => {
                failed += 1;
                println!("FAIL {} [{secs:.1} s]: {detail}", c.name);
            }
        }
    }
    println!("{passed} passed, {failed} failed");
    let strict = args.iter().any(|a| a == "--strict")
        || std::env::var_os("SGNE_ACCEPTANCE_STRICT").is_some_and(|v| v == "1");
    if failed > 0 && strict {
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
