//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use actorgraph::cli::run_cli;
use actorgraph::config::{OptimizerKind, TrainConfig};
use actorgraph::data::{generate_synthetic_dataset, ActorInstance, BoundingBox, ClipSample, Dataset, SynthConfig};
use actorgraph::model::{clip_loss_and_grad, forward, predict, ModelDims, ModelParams};
use actorgraph::numeric::{finite_diff_grad, relative_error, Matrix};
use actorgraph::relation::{
    appearance_ncc, build_relation_graph, sad, GraphOptions, MuRule, RelationMode, RelationParams,
};
use actorgraph::train::{
    decode_checkpoint, encode_checkpoint, evaluate, load_checkpoint, train_stage1, train_stage2,
};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FRAME_W: u32 = 640;
const FRAME_H: u32 = 480;

fn random_clip(rng: &mut ChaCha8Rng, n: usize, d: usize, frames: usize, spread: f64) -> ClipSample {
    let (gx, gy) = (rng.gen_range(100.0..540.0), rng.gen_range(100.0..380.0));
    let actors = (0..n)
        .map(|_| {
            let cx = (gx + rng.gen_range(-spread..spread)).clamp(10.0, 630.0);
            let cy = (gy + rng.gen_range(-spread..spread)).clamp(20.0, 460.0);
            let (hw, hh) = (rng.gen_range(2.0..10.0), rng.gen_range(5.0..20.0));
            ActorInstance {
                frame_index: rng.gen_range(0..frames),
                bbox: BoundingBox::new(cx - hw, cy - hh, cx + hw, cy + hh).unwrap(),
                feature: (0..d).map(|_| rng.gen_range(-2.0..2.0)).collect(),
                action_label: Some(rng.gen_range(0..3)),
            }
        })
        .collect();
    ClipSample {
        clip_id: "clip".into(),
        frame_width: FRAME_W,
        frame_height: FRAME_H,
        frame_count: frames,
        actors,
        activity_label: Some(rng.gen_range(0..2)),
    }
}

fn within_mu(a: &ActorInstance, b: &ActorInstance, mu: f64) -> bool {
    let ((ax, ay), (bx, by)) = (a.bbox.center(), b.bbox.center());
    ((ax - bx).powi(2) + (ay - by).powi(2)).sqrt() <= mu
}

fn shuffled(rng: &mut ChaCha8Rng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    p.shuffle(rng);
    p
}

// 1
fn graph_normalization() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mu = 0.2 * f64::from(FRAME_W);
    let mut worst: f64 = 0.0;
    for k in 0..1000 {
        let mode = RelationMode::ALL[k % 3];
        let n = rng.gen_range(1..=12);
        let clip = random_clip(&mut rng, n, 6, 3, 200.0);
        let p = RelationParams::random(6, 8, MuRule::FractionOfWidth(0.2), &mut rng).unwrap();
        let g = build_relation_graph(&clip, mode, &p).unwrap().g;
        for i in 0..n {
            let s: f64 = g.row(i).iter().sum();
            worst = worst.max((s - 1.0).abs());
            for j in 0..n {
                if !within_mu(&clip.actors[i], &clip.actors[j], mu) {
                    assert_eq!(g.get(i, j), 0.0, "edge outside the mask");
                }
            }
        }
    }
    assert!(worst < 1e-9, "row sum deviation {worst}");
    format!("1000 clips, max |row sum - 1| = {worst:.2e}")
}

fn oracle_graph(clip: &ClipSample, mode: RelationMode, p: &RelationParams) -> Vec<Vec<f64>> {
    let n = clip.actors.len();
    let mu = 0.2 * f64::from(clip.frame_width);
    let x: Vec<&[f64]> = clip.actors.iter().map(|a| a.feature.as_slice()).collect();
    let d = x[0].len();
    let embed = |w: &Matrix, b: &Matrix, v: &[f64]| -> Vec<f64> {
        (0..w.rows()).map(|o| b.get(0, o) + (0..d).map(|k| w.get(o, k) * v[k]).sum::<f64>()).collect()
    };
    let score = |i: usize, j: usize| -> f64 {
        match mode {
            RelationMode::EmbeddedDotProduct => {
                let t = embed(&p.w_theta, &p.b_theta, x[i]);
                let f = embed(&p.w_phi, &p.b_phi, x[j]);
                t.iter().zip(&f).map(|(a, b)| a * b).sum::<f64>() / (p.d_k as f64).sqrt()
            }
            RelationMode::Ncc => {
                let mi = x[i].iter().sum::<f64>() / d as f64;
                let mj = x[j].iter().sum::<f64>() / d as f64;
                let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
                for k in 0..d {
                    let (a, b) = (x[i][k] - mi, x[j][k] - mj);
                    sxy += a * b;
                    sxx += a * a;
                    syy += b * b;
                }
                if sxx == 0.0 || syy == 0.0 {
                    0.0
                } else {
                    sxy / (sxx * syy).sqrt()
                }
            }
            RelationMode::Sad => -(0..d).map(|k| (x[i][k] - x[j][k]).abs()).sum::<f64>() / d as f64,
        }
    };
    (0..n)
        .map(|i| {
            let num: Vec<f64> = (0..n)
                .map(|j| if within_mu(&clip.actors[i], &clip.actors[j], mu) { score(i, j).exp() } else { 0.0 })
                .collect();
            let den: f64 = num.iter().sum();
            num.iter().map(|v| v / den).collect()
        })
        .collect()
}

// 2
fn oracle_equivalence() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for k in 0..3000 {
        let mode = RelationMode::ALL[k % 3];
        let n = rng.gen_range(1..=4);
        let clip = random_clip(&mut rng, n, 5, 2, 250.0);
        let p = RelationParams::random(5, 6, MuRule::FractionOfWidth(0.2), &mut rng).unwrap();
        let g = build_relation_graph(&clip, mode, &p).unwrap().g;
        let want = oracle_graph(&clip, mode, &p);
        for i in 0..n {
            for j in 0..n {
                worst = worst.max((g.get(i, j) - want[i][j]).abs());
            }
        }
        count += 1;
    }
    assert!(worst <= 1e-12, "max deviation {worst}");
    format!("{count} clips with N <= 4, max |G - oracle| = {worst:.2e}")
}

/// Loss of the full model written out with plain loops.
fn oracle_loss(m: &ModelParams, clip: &ClipSample, lambda: f64) -> f64 {
    let lin = |x: &[Vec<f64>], w: &Matrix, b: &Matrix| -> Vec<Vec<f64>> {
        x.iter()
            .map(|v| (0..w.rows()).map(|o| b.get(0, o) + (0..w.cols()).map(|k| w.get(o, k) * v[k]).sum::<f64>()).collect())
            .collect()
    };
    let ce = |logits: &[f64], y: usize| -> f64 {
        let mx = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        mx + logits.iter().map(|v| (v - mx).exp()).sum::<f64>().ln() - logits[y]
    };
    let raw: Vec<Vec<f64>> = clip.actors.iter().map(|a| a.feature.clone()).collect();
    let x = lin(&raw, &m.embedder.weight, &m.embedder.bias);
    let (n, d) = (x.len(), x[0].len());
    let mu = 0.2 * f64::from(clip.frame_width);
    let mut fused = x.clone();
    for b in &m.branches {
        let th = lin(&x, &b.relation.w_theta, &b.relation.b_theta);
        let ph = lin(&x, &b.relation.w_phi, &b.relation.b_phi);
        let scale = 1.0 / (b.relation.d_k as f64).sqrt();
        let mut g = vec![vec![0.0; n]; n];
        for i in 0..n {
            for j in 0..n {
                if within_mu(&clip.actors[i], &clip.actors[j], mu) {
                    g[i][j] = (th[i].iter().zip(&ph[j]).map(|(a, c)| a * c).sum::<f64>() * scale).exp();
                }
            }
            let s: f64 = g[i].iter().sum();
            g[i].iter_mut().for_each(|v| *v /= s);
        }
        let w = &b.gcn[0];
        for i in 0..n {
            let gx: Vec<f64> = (0..d).map(|k| (0..n).map(|j| g[i][j] * x[j][k]).sum()).collect();
            for c in 0..d {
                let z: f64 = (0..d).map(|k| gx[k] * w.get(k, c)).sum();
                fused[i][c] += z.max(0.0);
            }
        }
    }
    let actions = lin(&fused, &m.action_head.weight, &m.action_head.bias);
    let pooled: Vec<f64> = (0..d).map(|c| fused.iter().map(|r| r[c]).fold(f64::NEG_INFINITY, f64::max)).collect();
    let activity = lin(&[pooled], &m.activity_head.weight, &m.activity_head.bias);
    let labeled: Vec<(usize, usize)> =
        clip.actors.iter().enumerate().filter_map(|(i, a)| a.action_label.map(|y| (i, y))).collect();
    let action_ce = labeled.iter().map(|&(i, y)| ce(&actions[i], y)).sum::<f64>() / labeled.len() as f64;
    ce(&activity[0], clip.activity_label.unwrap()) + lambda * action_ce
}

// 3
fn gradient_correctness() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let cfg = TrainConfig {
        relation_modes: vec![RelationMode::EmbeddedDotProduct; 2],
        d_k: 8,
        ..Default::default()
    };
    let dims = ModelDims { input_dim: 8, hidden_dim: 8, num_actions: 3, num_activities: 2 };
    let opts = GraphOptions::default();
    let (mut worst, mut redraws, mut checked, mut params): (f64, usize, usize, usize) = (0.0, 0, 0, 0);
    while checked < 20 {
        let mut m = ModelParams::init(dims, &cfg, &mut rng).unwrap();
        m.relational = true;
        let clip = random_clip(&mut rng, 5, 8, 1, 120.0);
        if forward(&m, &clip, &opts).unwrap().kink_margin < 1e-3 {
            redraws += 1;
            continue;
        }
        let (loss, grads) = clip_loss_and_grad(&m, &clip, &opts, 1.0).unwrap();
        let oracle_value = oracle_loss(&m, &clip, 1.0);
        assert!((loss - oracle_value).abs() < 1e-10, "loss {loss} vs oracle {oracle_value}");
        let analytic: Vec<f64> = grads.iter().flat_map(|g| g.data().to_vec()).collect();
        let numeric = finite_diff_grad(|p| oracle_loss(&m.with_flat(p).unwrap(), &clip, 1.0), &m.flatten(), 1e-4).unwrap();
        params = analytic.len();
        let err = relative_error(&analytic, &numeric, 1e-8);
        assert!(err < 1e-4, "instance {checked}: relative error {err}");
        worst = worst.max(err);
        checked += 1;
    }
    format!("20 instances, {params} parameters each, max relative error {worst:.2e} ({redraws} redrawn near a kink)")
}

// 4
fn kernel_properties() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut affine_worst: f64 = 0.0;
    for _ in 0..10_000 {
        let d = rng.gen_range(2..20);
        let x: Vec<f64> = (0..d).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let y: Vec<f64> = (0..d).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let r = appearance_ncc(&x, &y).unwrap();
        assert!((-1.0..=1.0).contains(&r), "ncc {r}");
        let (a, b) = (rng.gen_range(0.1..10.0), rng.gen_range(-10.0..10.0));
        let (c, e) = (rng.gen_range(0.1..10.0), rng.gen_range(-10.0..10.0));
        let xs: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        let ys: Vec<f64> = y.iter().map(|v| c * v + e).collect();
        affine_worst = affine_worst.max((appearance_ncc(&xs, &ys).unwrap() - r).abs());
    }
    assert!(affine_worst < 1e-7, "affine deviation {affine_worst}");

    for _ in 0..10_000 {
        let d = rng.gen_range(1..20);
        let mut draw = || (0..d).map(|_| rng.gen_range(-5.0..5.0)).collect::<Vec<f64>>();
        let (x, y, z) = (draw(), draw(), draw());
        let (xy, yx, xz, yz) = (sad(&x, &y).unwrap(), sad(&y, &x).unwrap(), sad(&x, &z).unwrap(), sad(&y, &z).unwrap());
        assert!(xy >= 0.0, "non-negativity");
        assert_eq!(sad(&x, &x).unwrap(), 0.0, "identity");
        assert!(x == y || xy > 0.0, "distinct points at distance 0");
        assert_eq!(xy, yx, "symmetry");
        assert!(xz <= xy + yz + 1e-12 * (xy + yz), "triangle inequality");
    }
    format!("10^4 NCC pairs (max affine deviation {affine_worst:.2e}), 10^4 SAD triples")
}

// 5
fn equivariance() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let opts = GraphOptions::default();
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let mode = RelationMode::ALL[k % 3];
        let n = rng.gen_range(2..=12);
        let clip = random_clip(&mut rng, n, 6, 2, 200.0);
        let perm = shuffled(&mut rng, n);
        let permuted = clip.with_actors(&perm);

        let p = RelationParams::random(6, 8, MuRule::FractionOfWidth(0.2), &mut rng).unwrap();
        let g = build_relation_graph(&clip, mode, &p).unwrap().g;
        let gp = build_relation_graph(&permuted, mode, &p).unwrap().g;
        for i in 0..n {
            for j in 0..n {
                assert_eq!(gp.get(i, j).to_bits(), g.get(perm[i], perm[j]).to_bits(), "raw graph, {mode}");
            }
        }

        let cfg = TrainConfig { relation_modes: vec![mode, mode], d_k: 8, ..Default::default() };
        let dims = ModelDims { input_dim: 6, hidden_dim: 6, num_actions: 3, num_activities: 2 };
        let mut m = ModelParams::init(dims, &cfg, &mut rng).unwrap();
        m.relational = true;
        let f = forward(&m, &clip, &opts).unwrap();
        let fp = forward(&m, &permuted, &opts).unwrap();
        for b in 0..2 {
            let (g, gp) = (f.graph(b).unwrap(), fp.graph(b).unwrap());
            for i in 0..n {
                for j in 0..n {
                    assert_eq!(gp.get(i, j).to_bits(), g.get(perm[i], perm[j]).to_bits(), "model graph, {mode}");
                }
            }
        }
        for (a, b) in f.activity_logits().iter().zip(fp.activity_logits()) {
            worst = worst.max((a - b).abs());
        }
    }
    assert!(worst <= 1e-12, "activity logit deviation {worst}");
    format!("100 clips, graphs exactly permuted, max activity logit deviation {worst:.2e}")
}

fn split_synthetic(seed: u64) -> (Dataset, Dataset) {
    let sc = SynthConfig {
        clips: 160,
        actions: 3,
        activities: 3,
        feature_dim: 16,
        sigma_between: 1.0,
        sigma_within: 0.2,
        ..Default::default()
    };
    let all = generate_synthetic_dataset(&sc, seed).unwrap();
    let mut train = all.clone();
    train.clips.truncate(120);
    let mut test = all;
    test.clips.drain(..120);
    (train, test)
}

// 6
fn learnability() -> String {
    let (train, test) = split_synthetic(2024);
    let mut parts = Vec::new();
    for mode in RelationMode::ALL {
        let start = Instant::now();
        let cfg = TrainConfig {
            relation_modes: vec![mode],
            optimizer: OptimizerKind::Adam,
            learning_rate: 1e-3,
            epochs: 100,
            stage: 2,
            ..Default::default()
        };
        let s1 = train_stage1(&train, &cfg).unwrap();
        let s1_test = evaluate(&test, &s1.model, &cfg).unwrap().activity_accuracy;
        let s2 = train_stage2(&train, &s1.model, &cfg).unwrap();
        let s2_train = evaluate(&train, &s2.model, &cfg).unwrap().activity_accuracy;
        let s2_test = evaluate(&test, &s2.model, &cfg).unwrap().activity_accuracy;
        let elapsed = start.elapsed();
        assert!(s2_train >= 0.95, "{mode}: training accuracy {s2_train}");
        assert!(s2_test >= s1_test, "{mode}: held-out {s2_test} below stage-1 {s1_test}");
        assert!(elapsed < Duration::from_secs(120), "{mode}: {elapsed:?}");
        parts.push(format!("{mode} train {s2_train:.3} held-out {s2_test:.3} vs stage-1 {s1_test:.3} ({:.1}s)", elapsed.as_secs_f64()));
    }
    parts.join("; ")
}

fn cli(args: &[&str]) -> (i32, Vec<u8>) {
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run_cli(args.iter().copied(), &mut out, &mut err);
    assert_eq!(code, 0, "{args:?}: {}", String::from_utf8_lossy(&err));
    (code, out)
}

// 7
fn determinism_and_persistence() -> String {
    let dir = tempfile::tempdir().unwrap();
    let path = |name: &str| dir.path().join(name).to_str().unwrap().to_owned();
    cli(&["actorgraph", "synth", "--out", &path("train.txt"), "--set", "clips=30", "--set", "feature_dim=8", "--seed", "7"]);
    cli(&["actorgraph", "synth", "--out", &path("test.txt"), "--set", "clips=10", "--set", "feature_dim=8", "--seed", "8"]);
    let run = |tag: &str| {
        cli(&[
            "actorgraph", "train", "--data", &path("train.txt"), "--eval", &path("test.txt"),
            "--checkpoint", &path(&format!("{tag}.ckpt")), "--report", &path(&format!("{tag}.tsv")),
            "--set", "stage=2", "--set", "epochs=5", "--set", "relation=dot,sad", "--set", "d_k=16",
            "--set", "frame_dropout=0.3", "--set", "optimizer=adam", "--set", "learning_rate=0.01", "--seed", "3",
        ]);
        (std::fs::read(path(&format!("{tag}.tsv"))).unwrap(), std::fs::read(path(&format!("{tag}.ckpt"))).unwrap())
    };
    let (report_a, ckpt_a) = run("a");
    let (report_b, ckpt_b) = run("b");
    assert_eq!(report_a, report_b, "metrics reports differ");
    assert_eq!(ckpt_a, ckpt_b, "checkpoints differ");

    let (m, cfg) = load_checkpoint(std::path::Path::new(&path("a.ckpt"))).unwrap();
    let (m2, cfg2) = decode_checkpoint(&encode_checkpoint(&m, &cfg).unwrap()).unwrap();
    let bits = |m: &ModelParams| m.flatten().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&m), bits(&m2));
    assert_eq!(cfg, cfg2);
    assert_eq!(encode_checkpoint(&m2, &cfg2).unwrap(), ckpt_a);

    let (train, _) = split_synthetic(9);
    let cfg = TrainConfig { stage: 2, epochs: 10, d_k: 16, ..cfg };
    let s1 = train_stage1(&train, &cfg).unwrap();
    let s2 = train_stage2(&train, &s1.model, &cfg).unwrap();
    let emb = |m: &ModelParams| {
        m.embedder.weight.data().iter().chain(m.embedder.bias.data()).map(|v| v.to_bits()).collect::<Vec<_>>()
    };
    assert_eq!(emb(&s1.model), emb(&s2.model), "stage 2 moved the embedder");
    assert_ne!(bits(&s1.model), bits(&s2.model), "stage 2 changed nothing");
    format!("reports and checkpoints byte-identical ({} report bytes), round trip bit-exact, embedder frozen", report_a.len())
}

// 8
fn rendering_contract() -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(808);
    let cfg = TrainConfig { relation_modes: vec![RelationMode::Ncc], ..Default::default() };
    let dims = ModelDims { input_dim: 4, hidden_dim: 4, num_actions: 3, num_activities: 2 };
    let m = ModelParams::init(dims, &cfg, &mut rng).unwrap();
    let actions: Vec<String> = vec!["walk".into(), "wait & talk".into(), "<cross>".into()];
    let activities: Vec<String> = vec!["queue \"q\"".into(), "talk's".into()];
    let mut rects = 0;
    for _ in 0..100 {
        let n = rng.gen_range(1..=12);
        let mut clip = random_clip(&mut rng, n, 4, 2, 300.0);
        clip.frame_width = rng.gen_range(64..1920);
        clip.frame_height = rng.gen_range(64..1080);
        let pred = predict(&clip, &m, &cfg).unwrap();
        let svg = actorgraph::cli::render_svg(&clip, &pred, &actions, &activities).unwrap();
        let doc = roxmltree::Document::parse(&svg).expect("well-formed XML");
        let root = doc.root_element();
        assert_eq!(root.tag_name().name(), "svg");
        assert_eq!(root.attribute("width").unwrap().parse::<u32>().unwrap(), clip.frame_width);
        assert_eq!(root.attribute("height").unwrap().parse::<u32>().unwrap(), clip.frame_height);
        let found: Vec<_> = root.descendants().filter(|e| e.has_tag_name("rect")).collect();
        assert_eq!(found.len(), n);
        let num = |e: &roxmltree::Node, k: &str| e.attribute(k).unwrap().parse::<f64>().unwrap();
        for (e, a) in found.iter().zip(&clip.actors) {
            assert_eq!(num(e, "x"), a.bbox.x_min);
            assert_eq!(num(e, "y"), a.bbox.y_min);
            assert_eq!(num(e, "width"), a.bbox.x_max - a.bbox.x_min);
            assert_eq!(num(e, "height"), a.bbox.y_max - a.bbox.y_min);
        }
        let texts: Vec<String> = root
            .descendants()
            .filter(|e| e.has_tag_name("text"))
            .map(|e| e.text().unwrap_or("").to_owned())
            .collect();
        assert_eq!(texts[0], activities[pred.activity_class]);
        for (t, &k) in texts[1..].iter().zip(&pred.action_classes) {
            assert_eq!(t, &actions[k]);
        }
        rects += found.len();
    }
    format!("100 clips parsed, {rects} rectangles with exact coordinates")
}

fn main() {
    let criteria: [(&str, fn() -> String, u64); 8] = [
        ("graph normalization", graph_normalization, 10),
        ("oracle equivalence", oracle_equivalence, 5),
        ("gradient correctness", gradient_correctness, 30),
        ("kernel properties", kernel_properties, 10),
        ("equivariance", equivariance, 10),
        ("synthetic learnability", learnability, 360),
        ("determinism and persistence", determinism_and_persistence, 60),
        ("rendering contract", rendering_contract, 10),
    ];
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, run, limit)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run));
        let secs = start.elapsed().as_secs_f64();
        let line = match outcome {
            Ok(detail) if secs < *limit as f64 => format!("PASS {}. {name}: {detail} [{secs:.2}s]", i + 1),
            Ok(detail) => format!("FAIL {}. {name}: took {secs:.2}s, limit {limit}s ({detail})", i + 1),
            Err(e) => {
                let msg = e
                    .downcast_ref::<String>()
                    .cloned()
                    .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default();
                format!("FAIL {}. {name}: {msg} [{secs:.2}s]", i + 1)
            }
        };
        if line.starts_with("FAIL") {
            failed += 1;
        }
        println!("{line}");
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
