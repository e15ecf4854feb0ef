//! End-to-end acceptance checks. Each test prints one `criterion N: PASS|FAIL`
//! line. Tests take a shared lock so that wall-clock limits are not skewed by
//! other tests running concurrently.

mod common;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use neural_ricci::curvature::generic::edge_wasserstein;
use neural_ricci::curvature::{
    orc_generic, prop1_asymptotics, ricci_limit_generic, solve_transport, CurvatureConfig, CurvatureEngine,
    WeightedDigraph,
};
use neural_ricci::data::calibration_subset;
use neural_ricci::data::mnist::ingest_mnist;
use neural_ricci::data::Dataset;
use neural_ricci::graph::{layered_shortest_paths, EdgeRef, NeuralGraph};
use neural_ricci::nn::grad::{grad_loss, mean_loss};
use neural_ricci::nn::io::save_model;
use neural_ricci::nn::{accuracy, train_sgd, Activation, LayerKind, ModelSpec, TrainConfig};
use neural_ricci::pruning::{ascending_order, default_fractions, score_snip, sweep, SparsityCurve};
use neural_ricci::ranking::{rank_parameters, RankedEdgeSet};
use petgraph::algo::dijkstra;
use petgraph::graph::{DiGraph, NodeIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

/// Writes straight to stdout so the line survives the test harness's output
/// capture.
fn verdict(n: usize, ok: bool, detail: String) {
    let line = format!("criterion {n}: {} {detail}\n", if ok { "PASS" } else { "FAIL" });
    let _ = std::io::stdout().lock().write_all(line.as_bytes());
    assert!(ok, "criterion {n} failed: {detail}");
}

/// Five-clique n1..n5 (ids 0..4), bridge n5-n6 and a 2x3 grid
/// n6 n7 n8 / n9 n10 n11 (ids 5..10), all unit weights in both directions.
fn bridge_graph() -> WeightedDigraph {
    let mut g = WeightedDigraph::new(11);
    for a in 0..5 {
        for b in a + 1..5 {
            g.add_undirected(a, b, 1.0).unwrap();
        }
    }
    g.add_undirected(4, 5, 1.0).unwrap();
    for (a, b) in GRID_EDGES {
        g.add_undirected(a, b, 1.0).unwrap();
    }
    g
}

const GRID_EDGES: [(usize, usize); 7] = [(5, 6), (6, 7), (8, 9), (9, 10), (5, 8), (6, 9), (7, 10)];

#[test]
fn criterion_01_bridge_example() {
    let _g = serial();
    let t = Instant::now();
    let g = bridge_graph();
    let w = edge_wasserstein(&g, 4, 5, 0.0).unwrap();
    let k = orc_generic(&g, 4, 5, 0.0).unwrap().value;
    let el = t.elapsed();
    let ok = (w - 1.93).abs() <= 0.01 && (k + 0.93).abs() <= 0.01 && el < Duration::from_secs(1);
    verdict(1, ok, format!("W = {w:.6}, kappa = {k:.6}, {el:?}"));
}

#[test]
fn criterion_02_sign_pattern() {
    let _g = serial();
    let t = Instant::now();
    let g = bridge_graph();
    let k = |u, v| orc_generic(&g, u, v, 0.0).unwrap().value;
    let mut clique_min = f64::INFINITY;
    for a in 0..5 {
        for b in 0..5 {
            if a != b {
                clique_min = clique_min.min(k(a, b));
            }
        }
    }
    let bridge = k(4, 5).max(k(5, 4));
    let grid_max = GRID_EDGES
        .iter()
        .flat_map(|&(a, b)| [k(a, b).abs(), k(b, a).abs()])
        .fold(0.0f64, f64::max);
    let el = t.elapsed();
    let ok = clique_min > 0.0 && bridge < 0.0 && grid_max < 1e-9 && el < Duration::from_secs(1);
    verdict(
        2,
        ok,
        format!("min clique {clique_min:.4}, bridge {bridge:.4}, max |grid| {grid_max:e}, {el:?}"),
    );
}

#[test]
fn criterion_03_large_cost_asymptotics() {
    let _g = serial();
    let t = Instant::now();
    let mut m = ModelSpec::mlp(&[3, 4, 4, 4, 2], Activation::Tanh, 11).unwrap();
    // Keep every alternative route short so the whole ladder lies above it.
    for l in m.layers.iter_mut() {
        l.weight.iter_mut().for_each(|w| *w = w.signum() * w.abs().max(0.25));
    }
    let g = NeuralGraph::build(&m).unwrap();
    let engine = CurvatureEngine::new(&g, m.activation);
    let ctx = engine.context(&m, &[0.3, -0.7, 0.5]).unwrap();
    let cfg = CurvatureConfig::default();
    let ladder = [1e2, 1e3, 1e4, 1e6];
    let (mut worst, mut ok, mut checked) = (0.0f64, true, 0);
    for layer in 0..g.depth() {
        let s = engine.sentinel(layer);
        for index in 0..g.layers[layer].edges.len() {
            let pts = prop1_asymptotics(&engine, &ctx, EdgeRef { layer, index }, &ladder, &cfg).unwrap();
            for p in &pts {
                worst = worst.max((p.kappa.value - p.closed_form).abs());
            }
            let gaps: Vec<f64> = pts.iter().map(|p| (s - p.kappa.value).abs()).collect();
            ok &= gaps.windows(2).all(|w| w[1] <= w[0]) && gaps[3] < 1e-4;
            let far = engine
                .curvature_at_cost(&ctx, EdgeRef { layer, index }, 1e12, &cfg)
                .unwrap();
            ok &= (far.value - s).abs() < 1e-6;
            checked += 1;
        }
    }
    let el = t.elapsed();
    ok &= worst < 1e-6 && el < Duration::from_secs(10);
    verdict(
        3,
        ok,
        format!("{checked} edges, max |kappa - closed form| {worst:e}, {el:?}"),
    );
}

#[test]
fn criterion_04_transport_exactness() {
    let _g = serial();
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..500 {
        let (m, n) = (rng.gen_range(1..=6), rng.gen_range(1..=6));
        let (a, b, c) = common::random_ot_problem(&mut rng, m, n);
        let oracle = common::ot_vertex_oracle(&a, &b, &c);
        let plan = solve_transport(&a, &b, &c).unwrap();
        worst = worst.max((plan.cost - oracle).abs());
    }
    let el = t.elapsed();
    let ok = worst <= 1e-9 && el < Duration::from_secs(60);
    verdict(4, ok, format!("500 problems, max |simplex - oracle| {worst:e}, {el:?}"));
}

#[test]
fn criterion_05_layered_paths_vs_dijkstra() {
    let _g = serial();
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let (mut compared, mut mismatches) = (0usize, 0usize);
    for _ in 0..100 {
        let layers = rng.gen_range(2..=8);
        let budget = rng.gen_range(layers * 2..=2000);
        let mut sizes: Vec<usize> = (0..layers).map(|_| 1).collect();
        for _ in layers..budget {
            let k = rng.gen_range(0..layers);
            sizes[k] += 1;
        }
        let avg = budget as f64 / layers as f64;
        let density = (rng.gen_range(1.0..12.0) / avg).min(1.0);
        let stack = common::random_layered(&mut rng, &sizes, density);
        let offsets: Vec<usize> = sizes
            .iter()
            .scan(0, |acc, &s| {
                let o = *acc;
                *acc += s;
                Some(o)
            })
            .collect();
        let mut g: DiGraph<(), f64> = DiGraph::new();
        let nodes: Vec<NodeIndex> = (0..budget).map(|_| g.add_node(())).collect();
        for l in 1..layers {
            let c = stack.c(l);
            for i in 0..c.rows {
                for j in 0..c.cols {
                    let w = c.get(i, j);
                    if w.is_finite() {
                        g.add_edge(nodes[offsets[l - 1] + i], nodes[offsets[l] + j], w);
                    }
                }
            }
        }
        let k = rng.gen_range(0..layers - 1);
        let l = rng.gen_range(k + 1..layers);
        let d = layered_shortest_paths(&stack, k, l, None).unwrap();
        let sources: Vec<usize> = if sizes[k] <= 8 {
            (0..sizes[k]).collect()
        } else {
            (0..8).map(|_| rng.gen_range(0..sizes[k])).collect()
        };
        for s in sources {
            let dist = dijkstra(&g, nodes[offsets[k] + s], None, |e| *e.weight());
            for j in 0..sizes[l] {
                let expect = dist.get(&nodes[offsets[l] + j]).copied().unwrap_or(f64::INFINITY);
                compared += 1;
                if d.get(s, j).to_bits() != expect.to_bits() {
                    mismatches += 1;
                }
            }
        }
    }
    let el = t.elapsed();
    let ok = mismatches == 0 && el < Duration::from_secs(60);
    verdict(5, ok, format!("{compared} distances, {mismatches} mismatches, {el:?}"));
}

fn random_batch(rng: &mut ChaCha8Rng, dims: usize, classes: usize, n: usize) -> Dataset {
    let inputs = (0..n)
        .map(|_| (0..dims).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let labels = (0..n).map(|_| rng.gen_range(0..classes)).collect();
    Dataset::new(inputs, labels, classes).unwrap()
}

/// Largest relative gap between analytic and central-difference gradients
/// over every weight and bias, with relative errors floored at 1e-6.
fn gradient_gap(model: &ModelSpec, batch: &Dataset) -> (f64, usize) {
    let (_, g) = grad_loss(model, batch).unwrap();
    let h = 1e-6;
    let (mut worst, mut count) = (0.0f64, 0);
    for l in 0..model.layers.len() {
        for (is_bias, analytic) in [(false, &g.weights[l]), (true, &g.biases[l])] {
            for (i, &ga) in analytic.iter().enumerate() {
                let eval = |delta: f64| {
                    let mut m = model.clone();
                    let p = if is_bias {
                        &mut m.layers[l].bias[i]
                    } else {
                        &mut m.layers[l].weight[i]
                    };
                    *p += delta;
                    mean_loss(&m, batch).unwrap()
                };
                let fd = (eval(h) - eval(-h)) / (2.0 * h);
                worst = worst.max((ga - fd).abs() / ga.abs().max(fd.abs()).max(1e-6));
                count += 1;
            }
        }
    }
    (worst, count)
}

#[test]
fn criterion_06_gradient_check() {
    let _g = serial();
    let t = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let conv = ModelSpec::init(
        vec![
            LayerKind::Conv2d {
                in_channels: 1,
                in_height: 6,
                in_width: 6,
                out_channels: 2,
                kernel_h: 3,
                kernel_w: 3,
                stride: 1,
            },
            LayerKind::AvgPool2d {
                channels: 2,
                in_height: 4,
                in_width: 4,
            },
            LayerKind::Dense { inputs: 8, outputs: 3 },
        ],
        Activation::Tanh,
        4,
    )
    .unwrap();
    let models = [
        ModelSpec::mlp(&[6, 12, 8, 4], Activation::Tanh, 1).unwrap(),
        ModelSpec::mlp(&[6, 12, 8, 4], Activation::Relu, 2).unwrap(),
        conv,
    ];
    let (mut worst, mut total) = (0.0f64, 0);
    for m in &models {
        let batch = random_batch(&mut rng, m.input_dims, m.output_dims, 5);
        let (gap, count) = gradient_gap(m, &batch);
        worst = worst.max(gap);
        total += count;
    }
    let el = t.elapsed();
    let ok = worst <= 1e-4 && el < Duration::from_secs(30);
    verdict(6, ok, format!("{total} parameters, max relative gap {worst:e}, {el:?}"));
}

#[test]
fn criterion_07_limit_curvature_monotone_in_alpha() {
    let _g = serial();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let alphas = [0.1, 0.3, 0.5, 0.7, 0.9];
    let (mut edges, mut violations, mut worst_drop) = (0usize, 0usize, 0.0f64);
    for _ in 0..50 {
        let layers = rng.gen_range(4..=6);
        let sizes: Vec<usize> = (0..layers).map(|_| rng.gen_range(2..=5)).collect();
        let stack = common::random_layered(&mut rng, &sizes, 0.7);
        let offsets: Vec<usize> = sizes
            .iter()
            .scan(0, |a, &s| Some(std::mem::replace(a, *a + s)))
            .collect();
        let mut g = WeightedDigraph::new(sizes.iter().sum());
        for l in 1..layers {
            let c = stack.c(l);
            for i in 0..c.rows {
                for j in 0..c.cols {
                    if c.get(i, j).is_finite() {
                        g.add_edge(offsets[l - 1] + i, offsets[l] + j, c.get(i, j)).unwrap();
                    }
                }
            }
        }
        let all: Vec<(usize, usize, f64)> = g.edges().collect();
        for (u, v, _) in all {
            if g.in_neighbors(u).is_empty() || g.out_neighbors(v).is_empty() {
                continue;
            }
            let h: Vec<f64> = alphas
                .iter()
                .map(|&a| ricci_limit_generic(&g, u, v, a).unwrap().value)
                .collect();
            edges += 1;
            for w in h.windows(2) {
                let drop = w[0] - w[1];
                worst_drop = worst_drop.max(drop);
                if drop > 1e-12 * w[0].abs().max(1.0) {
                    violations += 1;
                }
            }
        }
    }
    let ok = violations == 0 && edges > 0;
    verdict(
        7,
        ok,
        format!("{edges} edges, {violations} decreases, largest drop {worst_drop:e}"),
    );
}

/// The trained MNIST model and the rankings shared by criteria 8 to 11.
struct Mnist {
    test: Dataset,
    model: ModelSpec,
    accuracy: f64,
    full100: RankedEdgeSet,
    build_time: Duration,
}

fn data_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist-subset")
}

fn mnist() -> &'static Mnist {
    static CELL: OnceLock<Mnist> = OnceLock::new();
    CELL.get_or_init(|| {
        let t = Instant::now();
        let h = ingest_mnist(&data_dir(), 0).unwrap();
        let m0 = ModelSpec::mlp(&[784, 128, 64, 10], Activation::Relu, 1).unwrap();
        let cfg = TrainConfig {
            epochs: 30,
            ..TrainConfig::default()
        };
        let (model, _) = train_sgd(&m0, &h.train, &cfg).unwrap();
        let accuracy = accuracy(&model, &h.test);
        let graph = NeuralGraph::build(&model).unwrap();
        let calib = calibration_subset(&h.train, 100).unwrap();
        let (_, full100) = rank_parameters(&model, &graph, &calib, &CurvatureConfig::default()).unwrap();
        Mnist {
            test: h.test,
            model,
            accuracy,
            full100,
            build_time: t.elapsed(),
        }
    })
}

fn train_split() -> Dataset {
    ingest_mnist(&data_dir(), 0).unwrap().train
}

fn curve(m: &Mnist, order: &[usize], fractions: &[f64]) -> SparsityCurve {
    sweep(&m.model, order, fractions, &m.test, "curvature", "positive-first").unwrap()
}

#[test]
fn criterion_08_pruning_separation() {
    let _g = serial();
    let m = mnist();
    let t = Instant::now();
    let grid = [0.1, 0.2, 0.3, 0.4];
    let pos = curve(m, &m.full100.positive_first(), &grid);
    let neg = curve(m, &m.full100.negative_first(), &[0.1]);
    let calib = calibration_subset(&train_split(), 100).unwrap();
    let snip = score_snip(&m.model, &calib).unwrap();
    let snip_curve = curve(m, &ascending_order(&snip.scores, &m.model), &grid);
    let total = m.build_time + t.elapsed();
    let base = m.accuracy;
    let loss40 = base - pos.accuracy_at(0.4).unwrap();
    let loss10 = base - neg.accuracy_at(0.1).unwrap();
    let vs_snip = grid
        .iter()
        .map(|&f| pos.accuracy_at(f).unwrap() - snip_curve.accuracy_at(f).unwrap())
        .fold(f64::INFINITY, f64::min);
    let ok = base >= 0.95 && loss40 <= 0.03 && loss10 >= 0.30 && vs_snip >= -0.01 && total < Duration::from_secs(1800);
    verdict(
        8,
        ok,
        format!(
            "base {base:.4}, positive-first 40% loss {loss40:.4}, negative-first 10% loss {loss10:.4}, \
             min(curvature - snip) {vs_snip:.4}, {total:?}"
        ),
    );
}

#[test]
fn criterion_09_full_curvature_beats_static_baseline() {
    let _g = serial();
    let m = mnist();
    let graph = NeuralGraph::build(&m.model).unwrap();
    let calib = calibration_subset(&train_split(), 100).unwrap();
    let cfg = CurvatureConfig::static_baseline(CurvatureConfig::default().alpha);
    let (_, stat) = rank_parameters(&m.model, &graph, &calib, &cfg).unwrap();
    let grid = default_fractions();
    let full_auc = curve(m, &m.full100.positive_first(), &grid).auc();
    let static_auc = curve(m, &stat.positive_first(), &grid).auc();
    let ok = full_auc >= static_auc;
    verdict(9, ok, format!("AUC full {full_auc:.4}, static {static_auc:.4}"));
}

#[test]
fn criterion_10_calibration_size() {
    let _g = serial();
    let m = mnist();
    let graph = NeuralGraph::build(&m.model).unwrap();
    let calib = calibration_subset(&train_split(), 10).unwrap();
    let (_, small) = rank_parameters(&m.model, &graph, &calib, &CurvatureConfig::default()).unwrap();
    let grid: Vec<f64> = default_fractions().into_iter().filter(|&f| f <= 0.5 + 1e-12).collect();
    let a = curve(m, &small.positive_first(), &grid);
    let b = curve(m, &m.full100.positive_first(), &grid);
    let (mut gap, mut at) = (0.0f64, 0.0);
    for (&(f, x), &(_, y)) in a.points.iter().zip(&b.points) {
        if (x - y).abs() > gap {
            gap = (x - y).abs();
            at = f;
        }
    }
    let ok = gap <= 0.03;
    verdict(10, ok, format!("max |acc10 - acc100| {gap:.4} at fraction {at:.2}"));
}

fn cli(args: &[&str]) -> i32 {
    let out = Command::new(env!("CARGO_BIN_EXE_neural-ricci"))
        .args(args)
        .output()
        .expect("launch the CLI");
    if !out.status.success() {
        eprintln!("{}", String::from_utf8_lossy(&out.stderr));
    }
    out.status.code().unwrap_or(-1)
}

fn csv_files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| {
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

#[test]
fn criterion_11_analyze_and_sweep_are_deterministic() {
    let _g = serial();
    let m = mnist();
    let data = data_dir();
    let data = data.to_str().unwrap();
    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let mut codes = Vec::new();
    for (dir, jobs) in dirs.iter().zip(["1", "3"]) {
        save_model(&m.model, &dir.path().join("model.bin")).unwrap();
        let out = dir.path().to_str().unwrap();
        let common = ["--out", out, "--data", data, "--jobs", jobs];
        let mut analyze = vec!["analyze", "--calib-per-class", "1", "--dump-edges"];
        analyze.extend(common);
        codes.push(cli(&analyze));
        let mut sweep = vec![
            "sweep",
            "--calib-per-class",
            "1",
            "--fractions",
            "0,0.1,0.2,0.3,0.4,0.5",
        ];
        sweep.extend(common);
        codes.push(cli(&sweep));
    }
    let (a, b) = (csv_files(dirs[0].path()), csv_files(dirs[1].path()));
    let names: Vec<&str> = a.iter().map(|(n, _)| n.as_str()).collect();
    let ok = codes.iter().all(|&c| c == 0) && a.len() >= 3 && a == b;
    verdict(
        11,
        ok,
        format!("exit codes {codes:?}, {} CSVs compared: {}", a.len(), names.join(" ")),
    );
}
