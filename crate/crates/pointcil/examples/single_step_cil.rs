//! One full class-incremental run: base phase on four classes, then a novel
//! step introducing two more, comparing naive fine-tuning against the
//! full prototype + pseudo-label method.

use pointcil::cil::{benchmark_plan, benchmark_scene_spec, run_cil, Arm, CilHyper};
use pointcil::cloud::generate_scene;
use pointcil::model::PreparedCloud;
use pointcil::rng::Rng;

fn main() -> pointcil::Result<()> {
    let seed = 42;
    let spec = benchmark_scene_spec(seed);
    let mut eval_spec = spec.clone();
    eval_spec.seed = Rng::from_tags(spec.seed, &[0xE7A1]).next_u64();
    let train = vec![PreparedCloud::build(generate_scene(&spec)?, 8)?];
    let eval = vec![PreparedCloud::build(generate_scene(&eval_spec)?, 8)?];
    let plan = benchmark_plan();
    let hyper = CilHyper::default_for(seed);

    for arm in [Arm::Ft, Arm::FtPgPro] {
        let report = run_cil(&train, &eval, &plan, arm, &hyper)?;
        println!("{}", report.to_table());
    }
    println!("(novel classes are long-tail: 40 points each vs 300-400 per base class)");
    Ok(())
}
