//! Base-phase training with prototype enhancement: adaptive-momentum
//! prototype updates, attention fusion, edge fusion, and the loss trace.

use pointcil::cil::{benchmark_plan, benchmark_scene_spec, base_targets, internal_labels};
use pointcil::cloud::generate_scene;
use pointcil::eval::{miou, ConfusionMatrix};
use pointcil::model::PreparedCloud;
use pointcil::network::TrainConfig;
use pointcil::protoguard::{prototype_attention, train_base, MomentumParams, PipelineShape};

fn main() -> pointcil::Result<()> {
    let spec = benchmark_scene_spec(42);
    let plan = benchmark_plan();
    let prep = PreparedCloud::build(generate_scene(&spec)?, 8)?;
    let targets = vec![base_targets(
        &internal_labels(&prep.cloud.labels, &plan),
        plan.n_base,
    )];
    let preps = vec![prep];

    let cfg = TrainConfig {
        learning_rate: 0.3,
        epochs: 60,
        batch_points: 0,
        l2: 0.0,
        seed: 42,
    };
    let momentum = MomentumParams::default();
    println!(
        "momentum map before training: a={:.3} b={:.3} in [{}, {}]",
        momentum.a, momentum.b, momentum.m_min, momentum.m_max
    );
    let (model, losses) = train_base(
        &preps,
        &targets,
        plan.n_base,
        &PipelineShape::default(),
        momentum,
        true,
        &cfg,
    )?;
    for (e, l) in losses.iter().enumerate().step_by(10) {
        println!("epoch {e:>3}: loss {l:.5}");
    }
    println!("final loss: {:.5}", losses.last().unwrap());

    let pg = model.pg.as_ref().unwrap();
    println!(
        "momentum map after training:  a={:.3} b={:.3} (learned)",
        pg.bank.momentum.a, pg.bank.momentum.b
    );
    println!("prototype update counts: {:?}", pg.bank.update_count);

    // attention weights on the first few points, indexed by true class
    let alphas = prototype_attention(&pg.bank, &preps[0].geo, &preps[0].sem, &pg.fusion, &targets[0])?;
    println!("\nattention (geo, sem) for three points:");
    for i in [0usize, 500, 1100] {
        println!(
            "  point {i} (class {}): ({:.3}, {:.3})",
            targets[0][i], alphas[i][0], alphas[i][1]
        );
    }

    let mut cm = ConfusionMatrix::new(plan.n_base);
    cm.accumulate(&model.predict_labels(&preps[0])?, &targets[0])?;
    let result = miou(&cm, &(0..plan.n_base).collect::<Vec<_>>())?;
    println!("\ntraining mIoU over base classes: {:.4}", result.mean);
    Ok(())
}
