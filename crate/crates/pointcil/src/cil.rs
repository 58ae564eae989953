//! Class-incremental experiment harness: class splits, single- and
//! multi-step runs over the baseline and method arms, the ablation grid, and
//! report emission.

use crate::cloud::{SceneSpec, IGNORE_LABEL};
use crate::error::{Error, Result};
use crate::eval::{miou, ConfusionMatrix};
use crate::model::{plain_train_epochs, PreparedCloud, SegModel};
use crate::network::{Network, TrainConfig};
use crate::propel::{train_novel, widen_for_novel, BaldConfig, NovelConfig, ThresholdConfig};
use crate::protoguard::{pg_train_epochs, train_base, MomentumParams, PipelineShape};
use crate::rng::Rng;
use crate::sertext::fnv64;

/// Order in which classes are introduced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClassOrder {
    /// natural order 0..C-1
    S0,
    /// seeded Fisher-Yates shuffle
    S1(u64),
}

/// Which classes arrive when: `class_order[..n_base]` are base classes and
/// each following chunk of `step_sizes` arrives in one incremental step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitPlan {
    pub class_order: Vec<usize>,
    pub n_base: usize,
    pub step_sizes: Vec<usize>,
}

impl SplitPlan {
    pub fn n_classes(&self) -> usize {
        self.class_order.len()
    }

    /// internal id (introduction position) per original class id
    pub fn position_of(&self) -> Vec<usize> {
        let mut pos = vec![0usize; self.class_order.len()];
        for (p, &orig) in self.class_order.iter().enumerate() {
            pos[orig] = p;
        }
        pos
    }

    pub fn base_classes(&self) -> &[usize] {
        &self.class_order[..self.n_base]
    }
}

pub fn make_split(
    n_classes: usize,
    order: ClassOrder,
    n_base: usize,
    step_sizes: Vec<usize>,
) -> Result<SplitPlan> {
    if n_base < 1 {
        return Err(Error::InvalidPlan("n_base must be >= 1".into()));
    }
    if step_sizes.iter().any(|&s| s < 1) {
        return Err(Error::InvalidPlan("step sizes must be >= 1".into()));
    }
    let total: usize = n_base + step_sizes.iter().sum::<usize>();
    if total != n_classes {
        return Err(Error::InvalidPlan(format!(
            "n_base + step sizes = {total} but the scene has {n_classes} classes"
        )));
    }
    let mut class_order: Vec<usize> = (0..n_classes).collect();
    if let ClassOrder::S1(seed) = order {
        let mut rng = Rng::from_tags(seed, &[0x0EDE]);
        rng.shuffle(&mut class_order);
    }
    Ok(SplitPlan {
        class_order,
        n_base,
        step_sizes,
    })
}

/// Experiment arms. FT fine-tunes everything on each step's annotations;
/// F&A freezes the base and trains only new classifier units; the PG arms
/// run the prototype-enhanced pipeline; the PRO arms train on propagated
/// pseudo-labels from the frozen base; JT trains once on all classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    Ft,
    FreezeAdd,
    FtPg,
    FtPro,
    FtPgPro,
    Jt,
}

impl Arm {
    pub fn label(&self) -> &'static str {
        match self {
            Arm::Ft => "FT",
            Arm::FreezeAdd => "F&A",
            Arm::FtPg => "FT+PG",
            Arm::FtPro => "FT+PRO",
            Arm::FtPgPro => "FT+PG+PRO",
            Arm::Jt => "JT",
        }
    }

    pub fn uses_pg(&self) -> bool {
        matches!(self, Arm::FtPg | Arm::FtPgPro)
    }

    pub fn uses_propel(&self) -> bool {
        matches!(self, Arm::FtPro | Arm::FtPgPro)
    }

    pub fn parse(s: &str) -> Result<Arm> {
        match s.to_ascii_lowercase().as_str() {
            "ft" => Ok(Arm::Ft),
            "fa" | "f&a" | "freeze-add" => Ok(Arm::FreezeAdd),
            "ft-pg" | "ft+pg" => Ok(Arm::FtPg),
            "ft-pro" | "ft+pro" => Ok(Arm::FtPro),
            "ft-pg-pro" | "ft+pg+pro" => Ok(Arm::FtPgPro),
            "jt" => Ok(Arm::Jt),
            other => Err(Error::InvalidConfig(format!("unknown arm `{other}`"))),
        }
    }
}

/// All hyperparameters of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct CilHyper {
    pub k: usize,
    pub shape: PipelineShape,
    pub momentum: MomentumParams,
    pub learnable_momentum: bool,
    pub base_train: TrainConfig,
    pub novel_train: TrainConfig,
    pub bald: BaldConfig,
    /// None derives entropy-scaled thresholds from each step's base width
    pub threshold: Option<ThresholdConfig>,
    pub propagate_k: usize,
    pub seed: u64,
}

impl CilHyper {
    pub fn default_for(seed: u64) -> CilHyper {
        CilHyper {
            k: 8,
            shape: PipelineShape::default(),
            momentum: MomentumParams::default(),
            learnable_momentum: true,
            base_train: TrainConfig {
                learning_rate: 0.3,
                epochs: 60,
                batch_points: 0,
                l2: 0.0,
                seed,
            },
            novel_train: TrainConfig {
                learning_rate: 0.2,
                epochs: 40,
                batch_points: 0,
                l2: 0.0,
                seed,
            },
            bald: BaldConfig {
                seed,
                ..BaldConfig::default()
            },
            threshold: None,
            propagate_k: 8,
            seed,
        }
    }
}

/// Metrics after one step, reported by original class id.
#[derive(Debug, Clone, PartialEq)]
pub struct StepReport {
    /// 0 = after base training, 1.. = incremental steps
    pub step: usize,
    pub classes_seen: usize,
    pub per_class_iou: Vec<(usize, Option<f64>)>,
    pub base_miou: f64,
    pub novel_miou: Option<f64>,
    pub all_miou: f64,
    /// frozen-base digests (before, after) for arms that freeze the base
    pub base_digest: Option<(String, String)>,
}

/// Full record of one experiment arm.
#[derive(Debug, Clone, PartialEq)]
pub struct CilReport {
    pub arm: Arm,
    pub seed: u64,
    pub plan: SplitPlan,
    pub steps: Vec<StepReport>,
    /// digest of the base-phase model, for checking arm factorization
    pub base_model_digest: String,
    /// rendering of the hyperparameters the run used
    pub config_echo: String,
}

impl CilReport {
    pub fn final_step(&self) -> &StepReport {
        self.steps.last().expect("report has at least the base step")
    }

    /// Deterministic CSV: per-class rows then base/novel/all summary rows
    /// per step.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("arm,step,row,class,iou\n");
        for st in &self.steps {
            for &(orig, iou) in &st.per_class_iou {
                match iou {
                    Some(v) => s.push_str(&format!(
                        "{},{},class,{},{:.6}\n",
                        self.arm.label(),
                        st.step,
                        orig,
                        v
                    )),
                    None => s.push_str(&format!(
                        "{},{},class,{},absent\n",
                        self.arm.label(),
                        st.step,
                        orig
                    )),
                }
            }
            s.push_str(&format!(
                "{},{},base,,{:.6}\n",
                self.arm.label(),
                st.step,
                st.base_miou
            ));
            match st.novel_miou {
                Some(v) => s.push_str(&format!("{},{},novel,,{:.6}\n", self.arm.label(), st.step, v)),
                None => s.push_str(&format!("{},{},novel,,absent\n", self.arm.label(), st.step)),
            }
            s.push_str(&format!(
                "{},{},all,,{:.6}\n",
                self.arm.label(),
                st.step,
                st.all_miou
            ));
        }
        s
    }

    /// Aligned text table, one block per step.
    pub fn to_table(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!("arm {} (seed {})\n", self.arm.label(), self.seed));
        for st in &self.steps {
            s.push_str(&format!(
                "step {} ({} classes seen)\n",
                st.step, st.classes_seen
            ));
            s.push_str("  class   iou\n");
            for &(orig, iou) in &st.per_class_iou {
                match iou {
                    Some(v) => s.push_str(&format!("  {:<7} {:.4}\n", orig, v)),
                    None => s.push_str(&format!("  {:<7} absent\n", orig)),
                }
            }
            let novel = st
                .novel_miou
                .map(|v| format!("{v:.4}"))
                .unwrap_or_else(|| "-".into());
            s.push_str(&format!(
                "  base {:.4}  novel {}  all {:.4}\n",
                st.base_miou, novel, st.all_miou
            ));
        }
        s
    }
}

/// Original labels remapped to introduction positions.
pub fn internal_labels(labels: &[i32], plan: &SplitPlan) -> Vec<i32> {
    let pos = plan.position_of();
    labels
        .iter()
        .map(|&l| {
            if l == IGNORE_LABEL {
                IGNORE_LABEL
            } else {
                pos[l as usize] as i32
            }
        })
        .collect()
}

/// Base-phase targets: base classes keep their internal id; future-class
/// points are background and never train as a positive class, so they are
/// excluded from the loss.
pub fn base_targets(internal: &[i32], n_base: usize) -> Vec<i32> {
    internal
        .iter()
        .map(|&l| {
            if l != IGNORE_LABEL && (l as usize) < n_base {
                l
            } else {
                IGNORE_LABEL
            }
        })
        .collect()
}

/// Annotations handed to a step: its classes keep their internal id, every
/// other point is marked background.
pub fn step_annotations(internal: &[i32], step_range: std::ops::Range<usize>, y_bg: i32) -> Vec<i32> {
    internal
        .iter()
        .map(|&l| {
            if l != IGNORE_LABEL && step_range.contains(&(l as usize)) {
                l
            } else {
                y_bg
            }
        })
        .collect()
}

/// Fine-tuning targets derived from annotations: background becomes IGNORE.
pub fn ft_targets(annotations: &[i32], y_bg: i32) -> Vec<i32> {
    annotations
        .iter()
        .map(|&a| if a == y_bg { IGNORE_LABEL } else { a })
        .collect()
}

/// Evaluation ground truth after a step: classes seen so far keep their
/// internal id, unseen classes are excluded.
pub fn eval_targets(internal: &[i32], n_seen: usize) -> Vec<i32> {
    internal
        .iter()
        .map(|&l| {
            if l != IGNORE_LABEL && (l as usize) < n_seen {
                l
            } else {
                IGNORE_LABEL
            }
        })
        .collect()
}

/// Evaluate a model over prepared clouds against the classes seen so far.
pub fn evaluate_model(
    model: &SegModel,
    eval_preps: &[PreparedCloud],
    plan: &SplitPlan,
    step: usize,
    n_seen: usize,
) -> Result<StepReport> {
    let eval_internal: Vec<Vec<i32>> = eval_preps
        .iter()
        .map(|p| internal_labels(&p.cloud.labels, plan))
        .collect();
    evaluate_step(model, eval_preps, &eval_internal, plan, step, n_seen, None)
}

fn evaluate_step(
    model: &SegModel,
    eval_preps: &[PreparedCloud],
    eval_internal: &[Vec<i32>],
    plan: &SplitPlan,
    step: usize,
    n_seen: usize,
    base_digest: Option<(String, String)>,
) -> Result<StepReport> {
    let mut cm = ConfusionMatrix::new(n_seen);
    for (prep, internal) in eval_preps.iter().zip(eval_internal) {
        let pred = model.predict_labels(prep)?;
        let gt = eval_targets(internal, n_seen);
        cm.accumulate(&pred, &gt)?;
    }
    let all_ids: Vec<usize> = (0..n_seen).collect();
    let all = miou(&cm, &all_ids)?;
    let base_ids: Vec<usize> = (0..plan.n_base.min(n_seen)).collect();
    let base = miou(&cm, &base_ids)?;
    let novel = if n_seen > plan.n_base {
        let novel_ids: Vec<usize> = (plan.n_base..n_seen).collect();
        Some(miou(&cm, &novel_ids)?)
    } else {
        None
    };
    let per_class_iou = all
        .per_class
        .iter()
        .map(|&(internal, iou)| (plan.class_order[internal], iou))
        .collect();
    Ok(StepReport {
        step,
        classes_seen: n_seen,
        per_class_iou,
        base_miou: base.mean,
        novel_miou: novel.map(|n| n.mean),
        all_miou: all.mean,
        base_digest,
    })
}

fn train_plain_base(
    preps: &[PreparedCloud],
    targets: &[Vec<i32>],
    n_classes: usize,
    hyper: &CilHyper,
) -> Result<SegModel> {
    let mut net = Network::init(
        preps[0].raw.cols(),
        hyper.shape.hidden,
        hyper.shape.d_embed,
        n_classes,
        Rng::from_tags(hyper.seed, &[0xA2]).next_u64(),
    );
    plain_train_epochs(&mut net, preps, targets, &hyper.base_train)?;
    Ok(SegModel { net, pg: None })
}

pub(crate) fn novel_config_for_step(hyper: &CilHyper, step: usize, c_base: usize) -> Result<NovelConfig> {
    let threshold = match &hyper.threshold {
        Some(t) => t.clone(),
        None => ThresholdConfig::entropy_scaled(c_base.max(2))?,
    };
    let mut train = hyper.novel_train.clone();
    train.seed = Rng::from_tags(hyper.novel_train.seed, &[0x57E9, step as u64]).next_u64();
    let mut bald = hyper.bald.clone();
    bald.seed = Rng::from_tags(hyper.bald.seed, &[0x57E9, step as u64]).next_u64();
    Ok(NovelConfig {
        train,
        bald,
        threshold,
        propagate_k: hyper.propagate_k,
    })
}

/// Run one arm end to end, optionally reusing a pre-trained base model
/// (the ablation grid shares bases between arms that train them the same
/// way).
pub fn run_cil_with_base(
    train_preps: &[PreparedCloud],
    eval_preps: &[PreparedCloud],
    plan: &SplitPlan,
    arm: Arm,
    hyper: &CilHyper,
    base: Option<SegModel>,
) -> Result<CilReport> {
    if train_preps.is_empty() || eval_preps.is_empty() {
        return Err(Error::InvalidConfig("need at least one train and eval cloud".into()));
    }
    let c_total = plan.n_classes();
    for prep in train_preps.iter().chain(eval_preps) {
        if let Some(&l) = prep.cloud.labels.iter().max() {
            if l >= c_total as i32 {
                return Err(Error::InvalidPlan(format!(
                    "cloud label {l} outside the plan's {c_total} classes"
                )));
            }
        }
    }
    let y_bg = c_total as i32;
    let train_internal: Vec<Vec<i32>> = train_preps
        .iter()
        .map(|p| internal_labels(&p.cloud.labels, plan))
        .collect();
    let eval_internal: Vec<Vec<i32>> = eval_preps
        .iter()
        .map(|p| internal_labels(&p.cloud.labels, plan))
        .collect();

    if arm == Arm::Jt {
        // joint upper bound: one training run over all classes, full labels
        let model = train_plain_base(train_preps, &train_internal, c_total, hyper)?;
        let digest = format!("{:016x}", fnv64(&model.to_text()));
        let step = evaluate_step(&model, eval_preps, &eval_internal, plan, 1, c_total, None)?;
        return Ok(CilReport {
            arm,
            seed: hyper.seed,
            plan: plan.clone(),
            steps: vec![step],
            base_model_digest: digest,
            config_echo: format!("{hyper:?}"),
        });
    }

    // base phase
    let base_target_lists: Vec<Vec<i32>> = train_internal
        .iter()
        .map(|l| base_targets(l, plan.n_base))
        .collect();
    let mut current = match base {
        Some(m) => m,
        None => {
            if arm.uses_pg() {
                let (model, _) = train_base(
                    train_preps,
                    &base_target_lists,
                    plan.n_base,
                    &hyper.shape,
                    hyper.momentum,
                    hyper.learnable_momentum,
                    &hyper.base_train,
                )?;
                model
            } else {
                train_plain_base(train_preps, &base_target_lists, plan.n_base, hyper)?
            }
        }
    };
    let base_model_digest = format!("{:016x}", fnv64(&current.to_text()));

    let mut n_seen = plan.n_base;
    let mut steps = vec![evaluate_step(
        &current,
        eval_preps,
        &eval_internal,
        plan,
        0,
        n_seen,
        None,
    )?];

    for (s, &size) in plan.step_sizes.iter().enumerate() {
        let start = n_seen;
        let annotations: Vec<Vec<i32>> = train_internal
            .iter()
            .map(|l| step_annotations(l, start..start + size, y_bg))
            .collect();
        let mut base_digest = None;
        current = match arm {
            Arm::Ft | Arm::FtPg => {
                let targets: Vec<Vec<i32>> =
                    annotations.iter().map(|a| ft_targets(a, y_bg)).collect();
                let mut net = current.net.clone_for_novel(size);
                let mut cfg = hyper.novel_train.clone();
                cfg.seed = Rng::from_tags(hyper.novel_train.seed, &[0x57E9, s as u64]).next_u64();
                match &current.pg {
                    Some(pg) => {
                        let mut pg = widen_for_novel(pg, train_preps, &annotations, size, y_bg)?;
                        pg_train_epochs(&mut net, &mut pg, train_preps, &targets, start, &cfg)?;
                        SegModel { net, pg: Some(pg) }
                    }
                    None => {
                        plain_train_epochs(&mut net, train_preps, &targets, &cfg)?;
                        SegModel { net, pg: None }
                    }
                }
            }
            Arm::FreezeAdd => {
                let targets: Vec<Vec<i32>> =
                    annotations.iter().map(|a| ft_targets(a, y_bg)).collect();
                let mut net = current.net.clone_for_novel(size);
                net.frozen_extractor = true;
                net.frozen_classifier_units = start;
                let frozen_before = net.frozen_snapshot(start);
                let mut cfg = hyper.novel_train.clone();
                cfg.seed = Rng::from_tags(hyper.novel_train.seed, &[0x57E9, s as u64]).next_u64();
                plain_train_epochs(&mut net, train_preps, &targets, &cfg)?;
                let frozen_after = net.frozen_snapshot(start);
                if frozen_before != frozen_after {
                    return Err(Error::InvalidConfig(
                        "freeze-and-add mutated frozen parameters".into(),
                    ));
                }
                base_digest = Some((
                    format!("{:016x}", fnv64(&frozen_before)),
                    format!("{:016x}", fnv64(&frozen_after)),
                ));
                SegModel {
                    net,
                    pg: current.pg.clone(),
                }
            }
            Arm::FtPro | Arm::FtPgPro => {
                let mut frozen_base = current.clone();
                frozen_base.freeze();
                let before = frozen_base.to_text();
                let cfg = novel_config_for_step(hyper, s, start)?;
                let novel = train_novel(&frozen_base, train_preps, &annotations, size, y_bg, &cfg)?;
                let after = frozen_base.to_text();
                if before != after {
                    return Err(Error::InvalidConfig(
                        "novel phase mutated the frozen base".into(),
                    ));
                }
                base_digest = Some((
                    format!("{:016x}", fnv64(&before)),
                    format!("{:016x}", fnv64(&after)),
                ));
                novel
            }
            Arm::Jt => unreachable!(),
        };
        n_seen += size;
        steps.push(evaluate_step(
            &current,
            eval_preps,
            &eval_internal,
            plan,
            s + 1,
            n_seen,
            base_digest,
        )?);
    }

    Ok(CilReport {
        arm,
        seed: hyper.seed,
        plan: plan.clone(),
        steps,
        base_model_digest,
        config_echo: format!("{hyper:?}"),
    })
}

pub fn run_cil(
    train_preps: &[PreparedCloud],
    eval_preps: &[PreparedCloud],
    plan: &SplitPlan,
    arm: Arm,
    hyper: &CilHyper,
) -> Result<CilReport> {
    run_cil_with_base(train_preps, eval_preps, plan, arm, hyper, None)
}

/// The ablation grid {FT, FT+PG, FT+PRO, FT+PG+PRO} under identical seeds.
/// Arms that share a base-phase recipe share the identical trained base.
pub fn run_ablation(
    train_preps: &[PreparedCloud],
    eval_preps: &[PreparedCloud],
    plan: &SplitPlan,
    hyper: &CilHyper,
) -> Result<Vec<CilReport>> {
    let base_target_lists: Vec<Vec<i32>> = train_preps
        .iter()
        .map(|p| base_targets(&internal_labels(&p.cloud.labels, plan), plan.n_base))
        .collect();
    let plain_base = train_plain_base(train_preps, &base_target_lists, plan.n_base, hyper)?;
    let (pg_base, _) = train_base(
        train_preps,
        &base_target_lists,
        plan.n_base,
        &hyper.shape,
        hyper.momentum,
        hyper.learnable_momentum,
        &hyper.base_train,
    )?;
    [Arm::Ft, Arm::FtPg, Arm::FtPro, Arm::FtPgPro]
        .into_iter()
        .map(|arm| {
            let base = if arm.uses_pg() {
                pg_base.clone()
            } else {
                plain_base.clone()
            };
            run_cil_with_base(train_preps, eval_preps, plan, arm, hyper, Some(base))
        })
        .collect()
}

/// Side-by-side final-step summary of several reports.
pub fn ablation_table(reports: &[CilReport]) -> String {
    let mut s = String::from("arm         base     novel    all\n");
    for r in reports {
        let st = r.final_step();
        let novel = st
            .novel_miou
            .map(|v| format!("{v:.4}"))
            .unwrap_or_else(|| "-".into());
        s.push_str(&format!(
            "{:<11} {:.4}   {:<8} {:.4}\n",
            r.arm.label(),
            st.base_miou,
            novel,
            st.all_miou
        ));
    }
    s
}

/// The fixed seeded benchmark: six Gaussian classes with a long-tail
/// histogram, one base/novel overlapping pair (class 4 is pulled next to
/// class 3 and shares its color family), four base classes and one step of
/// two novel classes.
pub fn benchmark_scene_spec(seed: u64) -> SceneSpec {
    SceneSpec {
        n_classes: 6,
        points_per_class: vec![400, 400, 400, 300, 40, 40],
        cluster_centers: vec![
            [0.0, 0.0, 0.2],
            [4.0, 0.0, 0.8],
            [0.0, 4.0, 1.4],
            [4.0, 4.0, 0.4],
            [8.0, 2.0, 0.5],
            [0.0, 8.0, 2.0],
        ],
        cluster_stddev: vec![0.35, 0.35, 0.35, 0.35, 0.3, 0.3],
        overlap_shift: vec![(3, 4, 0.8)],
        color_means: vec![
            [0.9, 0.1, 0.1],
            [0.1, 0.9, 0.1],
            [0.1, 0.1, 0.9],
            [0.8, 0.8, 0.1],
            [0.75, 0.75, 0.15],
            [0.1, 0.8, 0.8],
        ],
        seed,
    }
}

/// Benchmark plan: base classes 0..3, one step introducing classes 4 and 5.
pub fn benchmark_plan() -> SplitPlan {
    make_split(6, ClassOrder::S0, 4, vec![2]).expect("static plan is valid")
}

/// Multi-step variant: three base classes, then one novel class per step.
pub fn benchmark_multistep_spec(seed: u64) -> SceneSpec {
    SceneSpec {
        n_classes: 6,
        points_per_class: vec![400, 400, 300, 60, 50, 40],
        cluster_centers: vec![
            [0.0, 0.0, 0.2],
            [4.0, 0.0, 0.8],
            [0.0, 4.0, 1.4],
            [4.0, 4.0, 0.4],
            [8.0, 2.0, 0.5],
            [0.0, 8.0, 2.0],
        ],
        cluster_stddev: vec![0.35, 0.35, 0.35, 0.3, 0.3, 0.3],
        overlap_shift: vec![(2, 3, 0.8)],
        color_means: vec![
            [0.9, 0.1, 0.1],
            [0.1, 0.9, 0.1],
            [0.1, 0.1, 0.9],
            [0.15, 0.15, 0.85],
            [0.75, 0.75, 0.15],
            [0.1, 0.8, 0.8],
        ],
        seed,
    }
}

pub fn benchmark_multistep_plan() -> SplitPlan {
    make_split(6, ClassOrder::S0, 3, vec![1, 1, 1]).expect("static plan is valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_s0_identity() {
        let plan = make_split(13, ClassOrder::S0, 8, vec![5]).unwrap();
        assert_eq!(plan.base_classes(), &[0, 1, 2, 3, 4, 5, 6, 7]);
        assert_eq!(&plan.class_order[8..], &[8, 9, 10, 11, 12]);
    }

    #[test]
    fn split_s0_multistep_one_per_step() {
        let plan = make_split(13, ClassOrder::S0, 8, vec![1, 1, 1, 1, 1]).unwrap();
        assert_eq!(plan.step_sizes.len(), 5);
        // classes 8..12 arrive one per step
        for (s, &c) in plan.class_order[8..].iter().enumerate() {
            assert_eq!(c, 8 + s);
        }
    }

    #[test]
    fn split_s1_deterministic_permutation() {
        let a = make_split(13, ClassOrder::S1(7), 8, vec![5]).unwrap();
        let b = make_split(13, ClassOrder::S1(7), 8, vec![5]).unwrap();
        assert_eq!(a, b);
        let mut sorted = a.class_order.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, (0..13).collect::<Vec<_>>());
        let c = make_split(13, ClassOrder::S1(8), 8, vec![5]).unwrap();
        assert_ne!(a.class_order, c.class_order);
    }

    #[test]
    fn split_rejects_inconsistent_sizes() {
        assert!(matches!(
            make_split(13, ClassOrder::S0, 8, vec![4]),
            Err(Error::InvalidPlan(_))
        ));
        assert!(matches!(
            make_split(13, ClassOrder::S0, 0, vec![13]),
            Err(Error::InvalidPlan(_))
        ));
        assert!(matches!(
            make_split(13, ClassOrder::S0, 8, vec![5, 0]),
            Err(Error::InvalidPlan(_))
        ));
    }

    #[test]
    fn label_hygiene_future_classes_never_positive() {
        let plan = make_split(6, ClassOrder::S0, 3, vec![2, 1]).unwrap();
        let labels: Vec<i32> = vec![0, 1, 2, 3, 4, 5];
        let internal = internal_labels(&labels, &plan);
        let y_bg = 6;
        // base phase: classes >= 3 are excluded
        let bt = base_targets(&internal, 3);
        assert_eq!(bt, vec![0, 1, 2, IGNORE_LABEL, IGNORE_LABEL, IGNORE_LABEL]);
        // step 1 introduces internal 3..5: class 5 (future) must be background
        let ann = step_annotations(&internal, 3..5, y_bg);
        assert_eq!(ann, vec![y_bg, y_bg, y_bg, 3, 4, y_bg]);
        let ft = ft_targets(&ann, y_bg);
        assert_eq!(
            ft,
            vec![IGNORE_LABEL, IGNORE_LABEL, IGNORE_LABEL, 3, 4, IGNORE_LABEL]
        );
        // evaluation after step 1 covers internal 0..5
        let et = eval_targets(&internal, 5);
        assert_eq!(et, vec![0, 1, 2, 3, 4, IGNORE_LABEL]);
    }

    #[test]
    fn internal_labels_follow_shuffled_order() {
        let plan = SplitPlan {
            class_order: vec![2, 0, 1],
            n_base: 2,
            step_sizes: vec![1],
        };
        let internal = internal_labels(&[0, 1, 2, IGNORE_LABEL], &plan);
        assert_eq!(internal, vec![1, 2, 0, IGNORE_LABEL]);
    }
}
