//! Run the four-arm ablation grid (FT, FT+PG, FT+PRO, FT+PG+PRO) on the
//! fixed synthetic benchmark and print the side-by-side final-step summary.

use pointcil::cil::{ablation_table, benchmark_plan, benchmark_scene_spec, run_ablation, CilHyper};
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

    println!(
        "benchmark: {} train points, {} eval points, {} classes ({} base + one step of {})",
        train[0].len(),
        eval[0].len(),
        plan.n_classes(),
        plan.n_base,
        plan.step_sizes[0]
    );
    let reports = run_ablation(&train, &eval, &plan, &hyper)?;
    println!("\nfinal-step mIoU per arm:");
    print!("{}", ablation_table(&reports));

    println!("\nbase-class mIoU trajectory (step 0 = after base phase):");
    for r in &reports {
        let path: Vec<String> = r
            .steps
            .iter()
            .map(|s| format!("{:.3}", s.base_miou))
            .collect();
        println!("  {:<11} {}", r.arm.label(), path.join(" -> "));
    }
    Ok(())
}
