//! Acceptance suite: one test per criterion, each printing a pass line with
//! the measured values (run with `--nocapture` to see them).

// the oracles below are written as deliberately naive indexed loops
#![allow(clippy::needless_range_loop)]

use pointcil::cil::{
    benchmark_multistep_plan, benchmark_multistep_spec, benchmark_plan, benchmark_scene_spec,
    run_ablation, run_cil, Arm, CilHyper,
};
use pointcil::cloud::{generate_scene, PointCloud, SceneSpec, IGNORE_LABEL};
use pointcil::eval::{miou, overlap_degree, weighted_group_mean, ConfusionMatrix};
use pointcil::knn::KnnIndex;
use pointcil::linalg::{argmax, Matrix};
use pointcil::model::PreparedCloud;
use pointcil::network::Network;
use pointcil::propel::{
    bald_from_configs, bald_uncertainty, propagate_pseudo_labels, sample_configs, BaldConfig,
    LabelSource, SigmaMode, ThresholdMap, UncertaintyMap,
};
use pointcil::protoguard::{
    adaptive_momentum, pg_gradient_check, FusionParams, MomentumParams, PgBatch, PrototypeBank,
    ProtoGuard,
};
use pointcil::rng::Rng;

fn benchmark_data(spec: &SceneSpec, k: usize) -> (Vec<PreparedCloud>, Vec<PreparedCloud>) {
    let mut eval_spec = spec.clone();
    eval_spec.seed = Rng::from_tags(spec.seed, &[0xE7A1]).next_u64();
    (
        vec![PreparedCloud::build(generate_scene(spec).unwrap(), k).unwrap()],
        vec![PreparedCloud::build(generate_scene(&eval_spec).unwrap(), k).unwrap()],
    )
}

/// Criterion 1: the mIoU aggregation reproduces the count-weighted "all"
/// columns from per-group means, within 0.01 mIoU points.
#[test]
fn criterion_1_aggregation_identity() {
    // 13 classes: 8 base at exactly 0.4912, 5 novel at exactly 0.4018.
    // Off-diagonal mass is arranged in pairs/triangles so each class sees
    // equal FP and FN and the per-class IoU comes out exact.
    let mut cm = ConfusionMatrix::new(13);
    for c in 0..8 {
        cm.add(c, c, 4912);
    }
    for c in 8..13 {
        cm.add(c, c, 4018);
    }
    for (a, b) in [(0, 1), (2, 3), (4, 5), (6, 7)] {
        cm.add(a, b, 2544);
        cm.add(b, a, 2544);
    }
    cm.add(8, 9, 2991);
    cm.add(9, 8, 2991);
    cm.add(10, 11, 2991);
    cm.add(11, 12, 2991);
    cm.add(12, 10, 2991);
    let base = miou(&cm, &(0..8).collect::<Vec<_>>()).unwrap();
    let novel = miou(&cm, &(8..13).collect::<Vec<_>>()).unwrap();
    let all = miou(&cm, &(0..13).collect::<Vec<_>>()).unwrap();
    assert!((base.mean - 0.4912).abs() < 1e-12);
    assert!((novel.mean - 0.4018).abs() < 1e-12);
    assert!(
        (all.mean * 100.0 - 45.68).abs() < 0.01,
        "all = {:.4}",
        all.mean * 100.0
    );
    let combined = weighted_group_mean(&[(base.mean, 8), (novel.mean, 5)]);
    assert!((combined - all.mean).abs() < 1e-12);

    // 20 classes: 15 base at 0.3535, 5 novel at 0.1398
    let mut cm = ConfusionMatrix::new(20);
    for c in 0..15 {
        cm.add(c, c, 7070);
    }
    for c in 15..20 {
        cm.add(c, c, 2796);
    }
    for (a, b) in [(0, 1), (2, 3), (4, 5), (6, 7), (8, 9), (10, 11)] {
        cm.add(a, b, 6465);
        cm.add(b, a, 6465);
    }
    cm.add(12, 13, 6465);
    cm.add(13, 14, 6465);
    cm.add(14, 12, 6465);
    cm.add(15, 16, 8602);
    cm.add(16, 15, 8602);
    cm.add(17, 18, 8602);
    cm.add(18, 19, 8602);
    cm.add(19, 17, 8602);
    let base = miou(&cm, &(0..15).collect::<Vec<_>>()).unwrap();
    let novel = miou(&cm, &(15..20).collect::<Vec<_>>()).unwrap();
    let all = miou(&cm, &(0..20).collect::<Vec<_>>()).unwrap();
    assert!((base.mean - 0.3535).abs() < 1e-12, "base {}", base.mean);
    assert!((novel.mean - 0.1398).abs() < 1e-12, "novel {}", novel.mean);
    assert!(
        (all.mean * 100.0 - 30.01).abs() < 0.01,
        "all = {:.4}",
        all.mean * 100.0
    );
    let combined = weighted_group_mean(&[(base.mean, 15), (novel.mean, 5)]);
    assert!((combined - all.mean).abs() < 1e-12);
    println!(
        "criterion 1 (aggregation identity): PASS  45.68 and 30.01 reproduced within 0.01"
    );
}

/// Independent straight-line restatement of the BALD formula used as the
/// re-implementation oracle (plain weights, no stabilization tricks).
fn bald_oracle(
    probs: &Matrix,
    positions: &[[f64; 3]],
    configs: &[Vec<Vec<usize>>],
    sigma: f64,
) -> Vec<f64> {
    let c = probs.cols();
    let mut out = Vec::new();
    for (i, passes) in configs.iter().enumerate() {
        let t = passes.len() as f64;
        let mut mixtures: Vec<Vec<f64>> = Vec::new();
        for members in passes {
            let mut num = vec![0.0; c];
            let mut den = 0.0;
            for &q in members {
                let dx = positions[q][0] - positions[i][0];
                let dy = positions[q][1] - positions[i][1];
                let dz = positions[q][2] - positions[i][2];
                let w = (-(dx * dx + dy * dy + dz * dz) / (2.0 * sigma * sigma)).exp();
                den += w;
                for j in 0..c {
                    num[j] += w * probs.get(q, j);
                }
            }
            mixtures.push(num.iter().map(|v| v / den).collect());
        }
        let mut mean = vec![0.0; c];
        for m in &mixtures {
            for j in 0..c {
                mean[j] += m[j] / t;
            }
        }
        let h_of_mean = -mean
            .iter()
            .filter(|&&p| p > 0.0)
            .map(|&p| p * p.ln())
            .sum::<f64>();
        let mean_of_h = mixtures
            .iter()
            .map(|m| {
                -m.iter()
                    .filter(|&&p| p > 0.0)
                    .map(|&p| p * p.ln())
                    .sum::<f64>()
            })
            .sum::<f64>()
            / t;
        out.push(h_of_mean - mean_of_h);
    }
    out
}

fn random_probs(rng: &mut Rng, n: usize, c: usize) -> Matrix {
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            let mut p: Vec<f64> = (0..c).map(|_| rng.next_f64() + 1e-4).collect();
            let s: f64 = p.iter().sum();
            p.iter_mut().for_each(|v| *v /= s);
            p
        })
        .collect();
    Matrix::from_rows(&rows).unwrap()
}

/// Criterion 2: BALD identities, bounds on 1000 random instances, and
/// agreement with an independent re-implementation below 1e-12.
#[test]
fn criterion_2_bald_identities() {
    // identical predictions -> u = 0 within 1e-12
    let positions: Vec<[f64; 3]> = (0..20).map(|i| [i as f64 * 0.1, 0.0, 0.0]).collect();
    let cloud = PointCloud::new(positions.clone(), None, vec![0; 20], vec!["c".into()]).unwrap();
    let index = KnnIndex::build(&cloud);
    let probs = Matrix::from_rows(&vec![vec![0.3, 0.2, 0.5]; 20]).unwrap();
    let cfg = BaldConfig {
        passes: 6,
        k: 5,
        subsample: 3,
        sigma: SigmaMode::Fixed(0.5),
        seed: 3,
    };
    let u = bald_uncertainty(&probs, &cloud, &index, &cfg).unwrap();
    assert!(u.u.iter().all(|v| v.abs() < 1e-12));

    // constructed two-pass one-hot case -> ln 2 within 1e-9
    let pos = vec![[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0]];
    let p = Matrix::from_rows(&[vec![0.5, 0.5], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
    let configs = vec![vec![vec![1, 2], vec![2]]];
    let u = bald_from_configs(&p, &pos, &configs, 1e-3);
    assert!(
        (u[0] - std::f64::consts::LN_2).abs() < 1e-9,
        "u = {} vs ln 2",
        u[0]
    );

    // bounds and oracle agreement over 1000 random instances
    let mut rng = Rng::new(0xACC2);
    let mut max_diff: f64 = 0.0;
    let mut min_raw: f64 = f64::INFINITY;
    for trial in 0..1000u64 {
        let n = 12;
        let c = 2 + (trial % 4) as usize;
        let positions: Vec<[f64; 3]> = (0..n)
            .map(|_| {
                [
                    rng.range_f64(0.0, 2.0),
                    rng.range_f64(0.0, 2.0),
                    rng.range_f64(0.0, 0.5),
                ]
            })
            .collect();
        let cloud = PointCloud::new(positions.clone(), None, vec![0; n], vec!["c".into()]).unwrap();
        let index = KnnIndex::build(&cloud);
        let probs = random_probs(&mut rng, n, c);
        let sigma = 0.2 + rng.next_f64();
        let cfg = BaldConfig {
            passes: 2 + (trial % 5) as usize,
            k: 5,
            subsample: 1 + (trial % 4) as usize,
            sigma: SigmaMode::Fixed(sigma),
            seed: trial,
        };
        let u = bald_uncertainty(&probs, &cloud, &index, &cfg).unwrap();
        let bound = (c as f64).ln() + 1e-9;
        assert!(u.u.iter().all(|&v| (0.0..=bound).contains(&v)), "trial {trial}");
        let configs = sample_configs(&index, &cfg).unwrap();
        let oracle = bald_oracle(&probs, &positions, &configs, sigma);
        for (a, &b) in u.u.iter().zip(&oracle) {
            max_diff = max_diff.max((a - b.max(0.0)).abs());
            min_raw = min_raw.min(b);
        }
    }
    assert!(max_diff < 1e-12, "max |impl - oracle| = {max_diff}");
    // Jensen residual before clamping never meaningfully negative
    assert!(min_raw > -1e-9, "raw BALD went to {min_raw}");
    println!(
        "criterion 2 (BALD identities): PASS  oracle agreement {max_diff:.2e}, raw min {min_raw:.2e}"
    );
}

/// Criterion 3: analytic gradients match central finite differences to
/// better than 1e-4 relative error over 10 random seeds, including the
/// fusion MLP and attention parameters.
#[test]
fn criterion_3_gradient_correctness() {
    let mut worst_net: f64 = 0.0;
    let mut worst_pipeline: f64 = 0.0;
    for seed in 0..10u64 {
        // bare network
        let mut rng = Rng::new(0x6AD0 + seed);
        let net = Network::init(4, 6, 6, 3, seed);
        let rows: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..4).map(|_| rng.next_gaussian()).collect())
            .collect();
        let feats = Matrix::from_rows(&rows).unwrap();
        let labels: Vec<i32> = (0..20).map(|_| rng.below(3) as i32).collect();
        let err = net.gradient_check(&feats, &labels, 1e-5).unwrap();
        worst_net = worst_net.max(err);

        // full enhanced pipeline: prototypes + attention + fusion MLP + net
        let spec = SceneSpec {
            n_classes: 3,
            points_per_class: vec![10, 10, 10],
            cluster_centers: vec![[0.0, 0.0, 0.0], [2.0, 0.0, 0.5], [0.0, 2.0, 1.0]],
            cluster_stddev: vec![0.4, 0.4, 0.4],
            overlap_shift: vec![],
            color_means: vec![[0.9, 0.1, 0.1], [0.1, 0.9, 0.1], [0.1, 0.1, 0.9]],
            seed: 1000 + seed,
        };
        let cloud = generate_scene(&spec).unwrap();
        let labels = cloud.labels.clone();
        let prep = PreparedCloud::build(cloud, 4).unwrap();
        let mut bank =
            PrototypeBank::new(3, prep.geo.cols(), prep.sem.cols(), MomentumParams::default())
                .unwrap();
        bank.init_prototypes(&prep.geo, &labels).unwrap();
        bank.init_prototypes(&prep.sem, &labels).unwrap();
        let fusion = FusionParams::init(4, 4, 8, prep.edges.width, 10, 8, seed);
        let net = Network::init(8, 10, 8, 3, seed + 77);
        let pg = ProtoGuard {
            bank,
            fusion,
            learnable_momentum: true,
        };
        let idxs: Vec<usize> = (0..prep.len()).collect();
        let batch = PgBatch {
            geo: &prep.geo.values,
            sem: &prep.sem.values,
            edges: &prep.edges,
            idxs: &idxs,
            targets: &labels,
            assignments: &labels,
            weights: None,
        };
        let err = pg_gradient_check(&net, &pg, &batch, seed % 2 == 0, 1e-5).unwrap();
        worst_pipeline = worst_pipeline.max(err);
    }
    assert!(worst_net < 1e-4, "network max rel error {worst_net}");
    assert!(worst_pipeline < 1e-4, "pipeline max rel error {worst_pipeline}");
    println!(
        "criterion 3 (gradient correctness): PASS  net {worst_net:.2e}, pipeline {worst_pipeline:.2e}"
    );
}

/// Independent truth-table oracle for the hierarchical pseudo-label rules.
#[allow(clippy::too_many_arguments)]
fn oracle_decide(
    i: usize,
    positions: &[[f64; 3]],
    annotations: &[i32],
    base_argmax: &[i32],
    u: &[f64],
    tau: &[f64],
    neighbors: &[usize],
    y_bg: i32,
) -> (i32, &'static str) {
    if annotations[i] != y_bg && annotations[i] != IGNORE_LABEL {
        return (annotations[i], "kept_novel");
    }
    if u[i] <= tau[i] && base_argmax[i] != y_bg {
        return (base_argmax[i], "base_confident");
    }
    let mut votes: Vec<(i32, f64)> = Vec::new();
    for &q in neighbors {
        if q == i || base_argmax[q] == y_bg || u[q] > tau[q] {
            continue;
        }
        let d = ((positions[q][0] - positions[i][0]).powi(2)
            + (positions[q][1] - positions[i][1]).powi(2)
            + (positions[q][2] - positions[i][2]).powi(2))
        .sqrt();
        let w = 1.0 / d.max(1e-12);
        match votes.iter_mut().find(|(l, _)| *l == base_argmax[q]) {
            Some((_, acc)) => *acc += w,
            None => votes.push((base_argmax[q], w)),
        }
    }
    if votes.is_empty() {
        return (IGNORE_LABEL, "ignored");
    }
    votes.sort_by_key(|a| a.0);
    let mut best = votes[0];
    for &v in &votes[1..] {
        if v.1 > best.1 {
            best = v;
        }
    }
    (best.0, "neighbor_vote")
}

/// Criterion 4: exhaustive truth-table agreement plus soundness invariants
/// on 1000 randomized instances.
#[test]
fn criterion_4_pseudo_label_truth_table() {
    // three collinear points, k covers the whole cloud
    let positions = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [2.0, 0.0, 0.0]];
    let cloud = PointCloud::new(positions.clone(), None, vec![0; 3], vec!["c".into()]).unwrap();
    let index = KnnIndex::build(&cloud);
    let y_bg = 1i32;
    let c_base = 2usize;
    let novel_label = 3i32;
    // per-point states: annotation in {novel, bg} x uncertainty in {low, high}
    // x base argmax in {non-bg, bg} = 8 states, enumerated over 3 points
    let mut cases = 0usize;
    for state in 0..512usize {
        let mut annotations = vec![0i32; 3];
        let mut u_vals = vec![0.0f64; 3];
        let mut probs_rows = vec![vec![0.0f64; c_base]; 3];
        for p in 0..3 {
            let s = (state >> (3 * p)) & 7;
            annotations[p] = if s & 1 == 1 { novel_label } else { y_bg };
            u_vals[p] = if s & 2 == 2 { 0.9 } else { 0.1 };
            probs_rows[p] = if s & 4 == 4 {
                vec![0.2, 0.8] // argmax = 1 = background
            } else {
                vec![0.8, 0.2] // argmax = 0, non-background
            };
        }
        let probs = Matrix::from_rows(&probs_rows).unwrap();
        let u = UncertaintyMap {
            u: u_vals.clone(),
            passes: 2,
            k_neighbors: 3,
            seed: 0,
        };
        let tau = ThresholdMap {
            tau: vec![0.5; 3],
            tau0: 0.5,
            gamma: 0.0,
            tau_min: 0.5,
            tau_max: 0.5,
        };
        let got = propagate_pseudo_labels(&probs, &annotations, &u, &tau, &index, 3, y_bg).unwrap();
        let base_argmax: Vec<i32> = (0..3).map(|i| argmax(probs.row(i)) as i32).collect();
        for i in 0..3 {
            let neighbors = index.query(i, 3);
            let (want_label, want_source) = oracle_decide(
                i,
                &positions,
                &annotations,
                &base_argmax,
                &u_vals,
                &tau.tau,
                &neighbors,
                y_bg,
            );
            assert_eq!(got.labels[i], want_label, "state {state} point {i}");
            assert_eq!(got.source[i].as_str(), want_source, "state {state} point {i}");
        }
        cases += 1;
    }
    assert_eq!(cases, 512);

    // soundness invariants over 1000 randomized instances
    let mut rng = Rng::new(0x7AB1E);
    for trial in 0..1000u64 {
        let n = 15;
        let c = 4;
        let y_bg = rng.below(c) as i32;
        let positions: Vec<[f64; 3]> = (0..n)
            .map(|_| [rng.range_f64(0.0, 2.0), rng.range_f64(0.0, 2.0), 0.0])
            .collect();
        let cloud = PointCloud::new(positions, None, vec![0; n], vec!["c".into()]).unwrap();
        let index = KnnIndex::build(&cloud);
        let probs = random_probs(&mut rng, n, c);
        let annotations: Vec<i32> = (0..n)
            .map(|_| if rng.next_f64() < 0.25 { c as i32 + 1 } else { y_bg })
            .collect();
        let u = UncertaintyMap {
            u: (0..n).map(|_| rng.range_f64(0.0, 1.4)).collect(),
            passes: 2,
            k_neighbors: 5,
            seed: trial,
        };
        let tau = ThresholdMap {
            tau: (0..n).map(|_| rng.range_f64(0.1, 1.0)).collect(),
            tau0: 0.5,
            gamma: 0.5,
            tau_min: 0.1,
            tau_max: 1.0,
        };
        let pls = propagate_pseudo_labels(&probs, &annotations, &u, &tau, &index, 5, y_bg).unwrap();
        for i in 0..n {
            assert_ne!(pls.labels[i], y_bg, "background emitted");
            if annotations[i] != y_bg {
                assert_eq!(pls.labels[i], annotations[i]);
                assert_eq!(pls.source[i], LabelSource::KeptNovel);
            }
            if pls.source[i] == LabelSource::BaseConfident {
                assert!(u.u[i] <= tau.tau[i]);
                assert_ne!(argmax(probs.row(i)) as i32, y_bg);
            }
            assert_eq!(
                pls.labels[i] == IGNORE_LABEL,
                pls.source[i] == LabelSource::Ignored
            );
        }
    }
    println!("criterion 4 (pseudo-label truth table): PASS  512 exhaustive + 1000 randomized");
}

/// Criterion 5: prototype updates are exact convex combinations, the
/// momentum endpoints reproduce no-op and batch-mean, and initialization
/// matches a group-by-mean oracle exactly.
#[test]
fn criterion_5_prototype_algebra() {
    use pointcil::features::{FeatureKind, FeatureMatrix};
    let mut rng = Rng::new(0x9104);
    let d = 3;
    let c = 4;
    let n = 80;
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.next_gaussian()).collect())
        .collect();
    let labels: Vec<i32> = (0..n).map(|_| rng.below(c) as i32).collect();
    let names: Vec<String> = (0..d).map(|i| format!("f{i}")).collect();
    let geo = FeatureMatrix::new(
        Matrix::from_rows(&rows).unwrap(),
        FeatureKind::Geometric,
        names.clone(),
    )
    .unwrap();

    // init == group-by-mean oracle, exactly
    let mut bank = PrototypeBank::new(c, d, d, MomentumParams::default()).unwrap();
    bank.init_prototypes(&geo, &labels).unwrap();
    for class in 0..c {
        let members: Vec<&Vec<f64>> = rows
            .iter()
            .zip(&labels)
            .filter(|(_, &l)| l == class as i32)
            .map(|(r, _)| r)
            .collect();
        for j in 0..d {
            let want = members.iter().map(|m| m[j]).sum::<f64>() / members.len() as f64;
            assert_eq!(bank.geo.get(class, j), want, "class {class} dim {j}");
        }
    }

    // exact convex combination on a second batch
    let rows2: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| rng.next_gaussian()).collect())
        .collect();
    let labels2: Vec<i32> = (0..n).map(|_| rng.below(c) as i32).collect();
    let geo2 = FeatureMatrix::new(
        Matrix::from_rows(&rows2).unwrap(),
        FeatureKind::Geometric,
        names.clone(),
    )
    .unwrap();
    let sem2 = FeatureMatrix::new(
        Matrix::from_rows(&rows2).unwrap(),
        FeatureKind::Semantic,
        names.clone(),
    )
    .unwrap();
    let mut bank2 = bank.clone();
    bank2.init_prototypes(&sem2, &labels2).unwrap();
    let before = bank2.clone();
    bank2.update_prototypes(&geo2, &sem2, &labels2).unwrap();
    for class in 0..c {
        let members: Vec<&Vec<f64>> = rows2
            .iter()
            .zip(&labels2)
            .filter(|(_, &l)| l == class as i32)
            .map(|(r, _)| r)
            .collect();
        if members.is_empty() {
            continue;
        }
        let mean: Vec<f64> = (0..d)
            .map(|j| members.iter().map(|m| m[j]).sum::<f64>() / members.len() as f64)
            .collect();
        let s = before
            .stream_similarity(
                pointcil::protoguard::Stream::Geo,
                class,
                &geo2.values,
                &labels2,
            )
            .unwrap();
        let m = adaptive_momentum(s, &before.momentum);
        for j in 0..d {
            let want = (1.0 - m) * before.geo.get(class, j) + m * mean[j];
            assert_eq!(bank2.geo.get(class, j), want, "exact blend");
            let lo = before.geo.get(class, j).min(mean[j]) - 1e-12;
            let hi = before.geo.get(class, j).max(mean[j]) + 1e-12;
            let v = bank2.geo.get(class, j);
            assert!(v >= lo && v <= hi, "blend left the bounding box");
        }
    }

    // momentum endpoints
    let near_zero = MomentumParams {
        a: 0.0,
        b: -1e9,
        m_min: 1e-12,
        m_max: 0.5,
    };
    assert!(adaptive_momentum(0.3, &near_zero) <= 1e-12);
    let near_one = MomentumParams {
        a: 0.0,
        b: 1e9,
        m_min: 0.01,
        m_max: 1.0 - 1e-9,
    };
    assert!(adaptive_momentum(-0.7, &near_one) >= 1.0 - 2e-9);
    let mut frozen = bank.clone();
    frozen.momentum = near_zero;
    let snapshot = frozen.geo.clone();
    frozen.update_prototypes(&geo2, &sem2, &labels2).unwrap();
    for class in 0..c {
        for j in 0..d {
            assert!((frozen.geo.get(class, j) - snapshot.get(class, j)).abs() < 1e-9);
        }
    }
    let mut jumping = bank.clone();
    jumping.momentum = near_one;
    jumping.update_prototypes(&geo2, &sem2, &labels2).unwrap();
    for class in 0..c {
        let members: Vec<&Vec<f64>> = rows2
            .iter()
            .zip(&labels2)
            .filter(|(_, &l)| l == class as i32)
            .map(|(r, _)| r)
            .collect();
        if members.is_empty() {
            continue;
        }
        for j in 0..d {
            let mean = members.iter().map(|m| m[j]).sum::<f64>() / members.len() as f64;
            assert!((jumping.geo.get(class, j) - mean).abs() < 1e-6);
        }
    }
    println!("criterion 5 (prototype algebra): PASS");
}

/// Criterion 6: ablation ordering on the fixed seeded benchmark.
#[test]
fn criterion_6_ablation_ordering() {
    let seed = 42;
    let spec = benchmark_scene_spec(seed);
    assert_eq!(spec.points_per_class, vec![400, 400, 400, 300, 40, 40]);
    assert_eq!(spec.overlap_shift.len(), 1);
    let (train, eval) = benchmark_data(&spec, 8);
    let plan = benchmark_plan();
    assert_eq!(plan.n_base, 4);
    assert_eq!(plan.step_sizes, vec![2]);
    let hyper = CilHyper::default_for(seed);
    let reports = run_ablation(&train, &eval, &plan, &hyper).unwrap();
    assert_eq!(reports.len(), 4);
    let base: Vec<f64> = reports.iter().map(|r| r.final_step().base_miou).collect();
    let (ft, ft_pg, ft_pro, ft_pg_pro) = (base[0], base[1], base[2], base[3]);
    // arms without PG share the identical plain base model
    assert_eq!(reports[0].base_model_digest, reports[2].base_model_digest);
    assert_eq!(reports[1].base_model_digest, reports[3].base_model_digest);
    assert!(ft < ft_pro, "FT {ft:.4} !< FT+PRO {ft_pro:.4}");
    assert!(ft < ft_pg, "FT {ft:.4} !< FT+PG {ft_pg:.4}");
    assert!(
        ft_pg_pro >= ft_pg.max(ft_pro) - 0.005,
        "FT+PG+PRO {ft_pg_pro:.4} below max({ft_pg:.4}, {ft_pro:.4}) - 0.5 points"
    );
    assert!(
        ft_pg_pro - ft >= 0.10,
        "FT+PG+PRO {ft_pg_pro:.4} does not exceed FT {ft:.4} by 10 points"
    );
    println!(
        "criterion 6 (ablation ordering): PASS  base mIoU FT {:.1} < FT+PG {:.1}, FT+PRO {:.1}, FT+PG+PRO {:.1}",
        ft * 100.0,
        ft_pg * 100.0,
        ft_pro * 100.0,
        ft_pg_pro * 100.0
    );
}

/// Criterion 7: 3-step forgetting control with bit-identical frozen bases.
#[test]
fn criterion_7_multistep_forgetting_control() {
    let seed = 42;
    let spec = benchmark_multistep_spec(seed);
    let (train, eval) = benchmark_data(&spec, 8);
    let plan = benchmark_multistep_plan();
    assert_eq!(plan.step_sizes, vec![1, 1, 1]);
    let hyper = CilHyper::default_for(seed);
    let ft = run_cil(&train, &eval, &plan, Arm::Ft, &hyper).unwrap();
    let pro = run_cil(&train, &eval, &plan, Arm::FtPro, &hyper).unwrap();
    assert_eq!(pro.steps.len(), 4); // base evaluation + 3 steps
    for step in pro.steps.iter().skip(1) {
        let (before, after) = step
            .base_digest
            .as_ref()
            .expect("PROPEL steps record frozen-base digests");
        assert_eq!(before, after, "step {} mutated its frozen base", step.step);
    }
    let ft_base = ft.final_step().base_miou;
    let pro_base = pro.final_step().base_miou;
    assert!(
        pro_base - ft_base >= 0.10,
        "FT+PRO base {pro_base:.4} vs FT base {ft_base:.4}"
    );
    println!(
        "criterion 7 (multi-step forgetting control): PASS  step-3 base mIoU {:.1} vs {:.1}",
        pro_base * 100.0,
        ft_base * 100.0
    );
}

/// Criterion 8: kNN equals the exhaustive scan, confusion counting matches a
/// naive loop, and the three constructed overlap cases come out exact.
#[test]
fn criterion_8_knn_and_metric_oracles() {
    // kNN vs exhaustive scan at N = 500
    let mut rng = Rng::new(0x8A8A);
    let n = 500;
    let positions: Vec<[f64; 3]> = (0..n)
        .map(|_| {
            [
                rng.range_f64(-1.0, 1.0),
                rng.range_f64(-1.0, 1.0),
                rng.range_f64(-1.0, 1.0),
            ]
        })
        .collect();
    let cloud = PointCloud::new(positions.clone(), None, vec![0; n], vec!["c".into()]).unwrap();
    let index = KnnIndex::build(&cloud);
    for i in 0..n {
        let got = index.query(i, 10);
        // exhaustive reference with the same ordering contract
        let mut all: Vec<(f64, u64, usize)> = positions
            .iter()
            .enumerate()
            .map(|(j, p)| {
                let d2 = (p[0] - positions[i][0]).powi(2)
                    + (p[1] - positions[i][1]).powi(2)
                    + (p[2] - positions[i][2]).powi(2);
                (d2, if j == i { 0 } else { j as u64 + 1 }, j)
            })
            .collect();
        all.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1)));
        let want: Vec<usize> = all.iter().take(10).map(|&(_, _, j)| j).collect();
        assert_eq!(got, want, "point {i}");
    }

    // confusion counting vs naive loop
    let c = 6;
    let preds: Vec<i32> = (0..1000).map(|_| rng.below(c) as i32).collect();
    let gts: Vec<i32> = (0..1000)
        .map(|_| {
            if rng.next_f64() < 0.05 {
                IGNORE_LABEL
            } else {
                rng.below(c) as i32
            }
        })
        .collect();
    let mut cm = ConfusionMatrix::new(c);
    cm.accumulate(&preds, &gts).unwrap();
    let mut want = vec![0u64; c * c];
    let mut ignored = 0u64;
    for (&p, &g) in preds.iter().zip(&gts) {
        if g == IGNORE_LABEL {
            ignored += 1;
        } else {
            want[g as usize * c + p as usize] += 1;
        }
    }
    for g in 0..c {
        for p in 0..c {
            assert_eq!(cm.count(g, p), want[g * c + p]);
        }
    }
    assert_eq!(cm.ignored, ignored);

    // overlap_degree: coincident -> 1.0, distant -> 0.0, constructed -> 0.5
    let coincident = PointCloud::new(
        vec![[0.0; 3], [1.0, 0.0, 0.0], [0.0; 3], [1.0, 0.0, 0.0]],
        None,
        vec![0, 0, 1, 1],
        vec!["a".into(), "b".into()],
    )
    .unwrap();
    assert_eq!(overlap_degree(&coincident, 0, 1, 0.1).unwrap(), 1.0);
    let distant = PointCloud::new(
        vec![[0.0; 3], [10.0, 0.0, 0.0]],
        None,
        vec![0, 1],
        vec!["a".into(), "b".into()],
    )
    .unwrap();
    assert_eq!(overlap_degree(&distant, 0, 1, 0.1).unwrap(), 0.0);
    let half = PointCloud::new(
        vec![
            [0.0, 0.0, 0.0],
            [0.05, 0.0, 0.0],
            [0.5, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [0.0, 0.0, 0.0],
        ],
        None,
        vec![0, 0, 0, 0, 1],
        vec!["a".into(), "b".into()],
    )
    .unwrap();
    assert_eq!(overlap_degree(&half, 0, 1, 0.1).unwrap(), 0.5);
    println!("criterion 8 (kNN and metric oracles): PASS");
}

/// Criterion 9: repeated runs with the same effective config produce
/// byte-identical CSV reports.
#[test]
fn criterion_9_determinism() {
    let config_text = "epochs_base: 12\nepochs_novel: 8\narm: ft-pg-pro\nseed: 42\n";
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("run.cfg");
    std::fs::write(&config_path, config_text).unwrap();
    let run = |out: &str| {
        let out_dir = dir.path().join(out);
        let args: Vec<String> = [
            "run-cil",
            "--config",
            config_path.to_str().unwrap(),
            "--out-dir",
            out_dir.to_str().unwrap(),
        ]
        .iter()
        .map(|s| s.to_string())
        .collect();
        assert_eq!(pointcil::cli::run(&args), 0);
        (
            std::fs::read(out_dir.join("report.csv")).unwrap(),
            std::fs::read(out_dir.join("effective_config")).unwrap(),
        )
    };
    let (csv1, cfg1) = run("a");
    let (csv2, cfg2) = run("b");
    assert_eq!(cfg1, cfg2, "effective configs differ");
    assert_eq!(csv1, csv2, "CSV reports differ between identical runs");
    assert!(!csv1.is_empty());
    println!(
        "criterion 9 (determinism): PASS  byte-identical report.csv over repeated runs"
    );
}

/// Supporting check for the report identity: all-mIoU equals the
/// count-weighted combination of the base and novel means on a real run.
#[test]
fn report_identity_all_equals_weighted_groups() {
    let seed = 9;
    let spec = benchmark_scene_spec(seed);
    let (train, eval) = benchmark_data(&spec, 8);
    let plan = benchmark_plan();
    let mut hyper = CilHyper::default_for(seed);
    hyper.base_train.epochs = 8;
    hyper.novel_train.epochs = 4;
    let report = run_cil(&train, &eval, &plan, Arm::FtPro, &hyper).unwrap();
    for step in &report.steps {
        let base_classes = step
            .per_class_iou
            .iter()
            .filter(|(orig, iou)| plan.base_classes().contains(orig) && iou.is_some())
            .count();
        let novel_classes = step
            .per_class_iou
            .iter()
            .filter(|(orig, iou)| !plan.base_classes().contains(orig) && iou.is_some())
            .count();
        let novel_mean = step.novel_miou.unwrap_or(0.0);
        let combined = weighted_group_mean(&[
            (step.base_miou, base_classes),
            (novel_mean, novel_classes),
        ]);
        assert!(
            (combined - step.all_miou).abs() < 1e-12,
            "step {}: all {} vs combined {}",
            step.step,
            step.all_miou,
            combined
        );
        // and "all" equals the plain mean over present per-class IoUs
        let present: Vec<f64> = step.per_class_iou.iter().filter_map(|&(_, v)| v).collect();
        let mean = present.iter().sum::<f64>() / present.len() as f64;
        assert!((mean - step.all_miou).abs() < 1e-12);
    }
    println!("report identity (all = count-weighted base/novel): PASS");
}
