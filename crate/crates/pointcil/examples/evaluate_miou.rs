//! Evaluation toolkit: confusion matrices, per-class IoU, base/novel/all
//! aggregation, concurrent-merge semantics, and the class-overlap statistic.

use pointcil::cloud::{generate_scene, SceneSpec};
use pointcil::eval::{miou, overlap_degree, weighted_group_mean, ConfusionMatrix};
use pointcil::rng::Rng;

fn main() -> pointcil::Result<()> {
    // a noisy prediction of a three-class labeling
    let mut rng = Rng::new(5);
    let gt: Vec<i32> = (0..3000).map(|_| rng.below(3) as i32).collect();
    let pred: Vec<i32> = gt
        .iter()
        .map(|&g| if rng.next_f64() < 0.15 { rng.below(3) as i32 } else { g })
        .collect();

    // accumulate two halves independently, then merge
    let mut left = ConfusionMatrix::new(3);
    left.accumulate(&pred[..1500], &gt[..1500])?;
    let mut right = ConfusionMatrix::new(3);
    right.accumulate(&pred[1500..], &gt[1500..])?;
    let mut cm = left.clone();
    cm.merge(&right)?;

    println!("confusion matrix (rows = ground truth):");
    for g in 0..3 {
        let row: Vec<String> = (0..3).map(|p| format!("{:>5}", cm.count(g, p))).collect();
        println!("  {}", row.join(" "));
    }

    let result = miou(&cm, &[0, 1, 2])?;
    println!("\nrow,class,iou");
    for (class, iou) in &result.per_class {
        println!("class,{},{:.6}", class, iou.unwrap());
    }
    // base/novel/all aggregation with classes 0-1 as base, class 2 as novel
    let base = miou(&cm, &[0, 1])?;
    let novel = miou(&cm, &[2])?;
    println!("base,,{:.6}", base.mean);
    println!("novel,,{:.6}", novel.mean);
    println!("all,,{:.6}", result.mean);
    let combined = weighted_group_mean(&[(base.mean, 2), (novel.mean, 1)]);
    assert!((combined - result.mean).abs() < 1e-12);
    println!("(all equals the count-weighted base/novel combination)");

    // the overlap statistic is directional
    let spec = SceneSpec {
        n_classes: 2,
        points_per_class: vec![400, 40],
        cluster_centers: vec![[0.0, 0.0, 0.0], [0.5, 0.0, 0.0]],
        cluster_stddev: vec![0.3, 0.1],
        overlap_shift: vec![],
        color_means: vec![[0.5; 3]; 2],
        seed: 8,
    };
    let cloud = generate_scene(&spec)?;
    println!(
        "\noverlap degree at 0.1 m: class0->class1 {:.3}, class1->class0 {:.3}",
        overlap_degree(&cloud, 0, 1, 0.1)?,
        overlap_degree(&cloud, 1, 0, 0.1)?
    );
    Ok(())
}
