//! Subcommand dispatch for the `pointcil` binary. Exit codes: 0 success,
//! 1 configuration error, 2 runtime error.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use crate::cil::{self, run_ablation, run_cil, Arm};
use crate::cloud::{load_cloud, save_cloud, CloudFormat};
use crate::config::{parse_scene_file, RunConfig};
use crate::error::{Error, Result};
use crate::eval::{miou, overlap_degree, ConfusionMatrix};
use crate::model::SegModel;
use crate::propel::{pseudo_labels_for_cloud, train_novel};

const USAGE: &str = "usage: pointcil <subcommand> [flags]

subcommands:
  gen-scene    --spec <file> --out <cloud-file> [--format xyzrgbl|xyzl]
  train-base   --config <file> --out-dir <dir>
  train-novel  --config <file> --base-dir <dir> --out-dir <dir>
  run-cil      --config <file> --out-dir <dir>
  run-ablation --config <file> [--out-dir <dir>]
  eval         --pred <file> --gt <file> [--format xyzrgbl|xyzl]
  overlap      --cloud <file> --a <class> --b <class> [--radius 0.1] [--format xyzrgbl|xyzl]
";

struct Flags {
    map: BTreeMap<String, String>,
}

impl Flags {
    fn parse(args: &[String]) -> Result<Flags> {
        let mut map = BTreeMap::new();
        let mut it = args.iter();
        while let Some(flag) = it.next() {
            let key = flag
                .strip_prefix("--")
                .ok_or_else(|| Error::InvalidConfig(format!("expected a --flag, got `{flag}`")))?;
            let value = it
                .next()
                .ok_or_else(|| Error::InvalidConfig(format!("flag --{key} needs a value")))?;
            map.insert(key.to_string(), value.clone());
        }
        Ok(Flags { map })
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.map
            .get(key)
            .map(|s| s.as_str())
            .ok_or_else(|| Error::Missing(format!("--{key}")))
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|s| s.as_str())
    }

    fn format_or(&self, default: CloudFormat) -> Result<CloudFormat> {
        match self.get("format") {
            None => Ok(default),
            Some("xyzrgbl") => Ok(CloudFormat::XyzRgbL),
            Some("xyzl") => Ok(CloudFormat::XyzL),
            Some(other) => Err(Error::InvalidConfig(format!("unknown format `{other}`"))),
        }
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn run(args: &[String]) -> i32 {
    match dispatch(args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn dispatch(args: &[String]) -> Result<()> {
    let Some((cmd, rest)) = args.split_first() else {
        eprint!("{USAGE}");
        return Err(Error::InvalidConfig("missing subcommand".into()));
    };
    let flags = Flags::parse(rest)?;
    match cmd.as_str() {
        "gen-scene" => cmd_gen_scene(&flags),
        "train-base" => cmd_train_base(&flags),
        "train-novel" => cmd_train_novel(&flags),
        "run-cil" => cmd_run_cil(&flags),
        "run-ablation" => cmd_run_ablation(&flags),
        "eval" => cmd_eval(&flags),
        "overlap" => cmd_overlap(&flags),
        other => {
            eprint!("{USAGE}");
            Err(Error::InvalidConfig(format!("unknown subcommand `{other}`")))
        }
    }
}

fn cmd_gen_scene(flags: &Flags) -> Result<()> {
    let spec = parse_scene_file(flags.require("spec")?)?;
    let out = flags.require("out")?;
    let format = flags.format_or(CloudFormat::XyzRgbL)?;
    let cloud = crate::cloud::generate_scene(&spec)?;
    save_cloud(&cloud, out, format)?;
    println!(
        "wrote {} points across {} classes to {}",
        cloud.len(),
        cloud.n_classes(),
        out
    );
    Ok(())
}

fn ensure_dir(dir: &str) -> Result<PathBuf> {
    let p = PathBuf::from(dir);
    std::fs::create_dir_all(&p)?;
    Ok(p)
}

fn write_effective_config(dir: &Path, cfg: &RunConfig) -> Result<()> {
    std::fs::write(dir.join("effective_config"), cfg.to_text())?;
    Ok(())
}

fn cmd_train_base(flags: &Flags) -> Result<()> {
    let cfg = RunConfig::parse_file(flags.require("config")?)?;
    let out_dir = ensure_dir(flags.require("out-dir")?)?;
    let (train, eval) = cfg.load_data()?;
    let plan = cfg.plan(train[0].cloud.n_classes())?;
    let hyper = cfg.hyper();
    let base_targets: Vec<Vec<i32>> = train
        .iter()
        .map(|p| cil::base_targets(&cil::internal_labels(&p.cloud.labels, &plan), plan.n_base))
        .collect();
    let model = if cfg.arm.uses_pg() {
        let (model, losses) = crate::protoguard::train_base(
            &train,
            &base_targets,
            plan.n_base,
            &hyper.shape,
            hyper.momentum,
            hyper.learnable_momentum,
            &hyper.base_train,
        )?;
        println!(
            "base phase: {} epochs, final loss {:.6}",
            losses.len(),
            losses.last().copied().unwrap_or(0.0)
        );
        model
    } else {
        let mut net = crate::network::Network::init(
            train[0].raw.cols(),
            hyper.shape.hidden,
            hyper.shape.d_embed,
            plan.n_base,
            crate::rng::Rng::from_tags(hyper.seed, &[0xA2]).next_u64(),
        );
        let losses = crate::model::plain_train_epochs(&mut net, &train, &base_targets, &hyper.base_train)?;
        println!(
            "base phase: {} epochs, final loss {:.6}",
            losses.len(),
            losses.last().copied().unwrap_or(0.0)
        );
        SegModel { net, pg: None }
    };
    model.save(out_dir.join("model.txt"))?;
    write_effective_config(&out_dir, &cfg)?;
    let report = cil::evaluate_model(&model, &eval, &plan, 0, plan.n_base)?;
    std::fs::write(out_dir.join("report.txt"), step_table(&report))?;
    println!("{}", step_table(&report));
    Ok(())
}

fn step_table(st: &cil::StepReport) -> String {
    let mut s = format!("step {} ({} classes seen)\n", st.step, st.classes_seen);
    for &(orig, iou) in &st.per_class_iou {
        match iou {
            Some(v) => s.push_str(&format!("  class {orig}: iou {v:.4}\n")),
            None => s.push_str(&format!("  class {orig}: absent\n")),
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
    s
}

fn cmd_train_novel(flags: &Flags) -> Result<()> {
    let cfg = RunConfig::parse_file(flags.require("config")?)?;
    let base_dir = PathBuf::from(flags.require("base-dir")?);
    let out_dir = ensure_dir(flags.require("out-dir")?)?;
    let mut base = SegModel::load(base_dir.join("model.txt"))?;
    base.freeze();
    let (train, eval) = cfg.load_data()?;
    let plan = cfg.plan(train[0].cloud.n_classes())?;
    let hyper = cfg.hyper();
    if base.n_classes() != plan.n_base {
        return Err(Error::InvalidConfig(format!(
            "base model has {} classes but the plan expects {} base classes",
            base.n_classes(),
            plan.n_base
        )));
    }
    let size = plan.step_sizes[0];
    let y_bg = plan.n_classes() as i32;
    let annotations: Vec<Vec<i32>> = train
        .iter()
        .map(|p| {
            cil::step_annotations(
                &cil::internal_labels(&p.cloud.labels, &plan),
                plan.n_base..plan.n_base + size,
                y_bg,
            )
        })
        .collect();
    let novel_cfg = cil::novel_config_for_step(&hyper, 0, plan.n_base)?;
    if cfg.debug_dump {
        for (ci, (prep, anns)) in train.iter().zip(&annotations).enumerate() {
            let products = pseudo_labels_for_cloud(&base, prep, anns, y_bg, &novel_cfg, ci as u64)?;
            let path = out_dir.join(format!("pseudo_labels_cloud{ci}.csv"));
            products
                .labels
                .write_debug_csv(&path, &products.uncertainty, &products.thresholds)?;
            println!("wrote {}", path.display());
        }
    }
    let novel = train_novel(&base, &train, &annotations, size, y_bg, &novel_cfg)?;
    novel.save(out_dir.join("model.txt"))?;
    write_effective_config(&out_dir, &cfg)?;
    let report = cil::evaluate_model(&novel, &eval, &plan, 1, plan.n_base + size)?;
    std::fs::write(out_dir.join("report.txt"), step_table(&report))?;
    println!("{}", step_table(&report));
    Ok(())
}

fn cmd_run_cil(flags: &Flags) -> Result<()> {
    let cfg = RunConfig::parse_file(flags.require("config")?)?;
    let out_dir = ensure_dir(flags.require("out-dir")?)?;
    let (train, eval) = cfg.load_data()?;
    let plan = cfg.plan(train[0].cloud.n_classes())?;
    let hyper = cfg.hyper();
    let report = run_cil(&train, &eval, &plan, cfg.arm, &hyper)?;
    std::fs::write(out_dir.join("report.csv"), report.to_csv())?;
    std::fs::write(out_dir.join("report.txt"), report.to_table())?;
    write_effective_config(&out_dir, &cfg)?;
    println!("{}", report.to_table());
    Ok(())
}

fn cmd_run_ablation(flags: &Flags) -> Result<()> {
    let cfg = RunConfig::parse_file(flags.require("config")?)?;
    let (train, eval) = cfg.load_data()?;
    let plan = cfg.plan(train[0].cloud.n_classes())?;
    let hyper = cfg.hyper();
    let reports = run_ablation(&train, &eval, &plan, &hyper)?;
    let table = cil::ablation_table(&reports);
    if let Some(dir) = flags.get("out-dir") {
        let out_dir = ensure_dir(dir)?;
        for r in &reports {
            let name = match r.arm {
                Arm::Ft => "ft",
                Arm::FtPg => "ft_pg",
                Arm::FtPro => "ft_pro",
                Arm::FtPgPro => "ft_pg_pro",
                _ => "arm",
            };
            std::fs::write(out_dir.join(format!("{name}.csv")), r.to_csv())?;
        }
        std::fs::write(out_dir.join("ablation.txt"), &table)?;
        write_effective_config(&out_dir, &cfg)?;
    }
    println!("{table}");
    Ok(())
}

fn cmd_eval(flags: &Flags) -> Result<()> {
    let format = flags.format_or(CloudFormat::XyzL)?;
    let pred = load_cloud(flags.require("pred")?, format)?;
    let gt = load_cloud(flags.require("gt")?, format)?;
    if pred.len() != gt.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions vs {} ground-truth points",
            pred.len(),
            gt.len()
        )));
    }
    let c = pred.n_classes().max(gt.n_classes());
    let mut cm = ConfusionMatrix::new(c);
    cm.accumulate(&pred.labels, &gt.labels)?;
    let subset: Vec<usize> = (0..c).collect();
    let result = miou(&cm, &subset)?;
    println!("row,class,iou");
    for (class, iou) in &result.per_class {
        match iou {
            Some(v) => println!("class,{class},{v:.6}"),
            None => println!("class,{class},absent"),
        }
    }
    println!("mean,,{:.6}", result.mean);
    Ok(())
}

fn cmd_overlap(flags: &Flags) -> Result<()> {
    let format = flags.format_or(CloudFormat::XyzRgbL)?;
    let cloud = load_cloud(flags.require("cloud")?, format)?;
    let a: usize = flags
        .require("a")?
        .parse()
        .map_err(|_| Error::InvalidConfig("--a must be a class index".into()))?;
    let b: usize = flags
        .require("b")?
        .parse()
        .map_err(|_| Error::InvalidConfig("--b must be a class index".into()))?;
    let radius: f64 = match flags.get("radius") {
        None => 0.1,
        Some(r) => r
            .parse()
            .ok()
            .filter(|v: &f64| *v > 0.0)
            .ok_or_else(|| Error::InvalidConfig("--radius must be a positive number".into()))?,
    };
    let ratio = overlap_degree(&cloud, a, b, radius)?;
    println!("{ratio}");
    Ok(())
}
