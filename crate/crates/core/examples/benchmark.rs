//! Runs the synthetic benchmark end to end and prints one line per result.
//!
//! Usage: `cargo run --release -p tue-core --example benchmark -- '<json overrides>'`
//! where the JSON may contain `data`, `generate`, `train` sections and a
//! `stages` list drawn from `clean`, `emn`, `ucl`, `tue`, `sn`, `swap`,
//! `transfer` (to an 8-class and a double-size dataset) and `cleanprobe`
//! (probe a poisoned-data encoder on clean images).

use std::time::Instant;

use serde::Deserialize;
use tue_core::data::{make_synthetic_split, SyntheticConfig};
use tue_core::eval::{
    apply_perturbations, evaluate, separability_probe, swap_eval, transfer_eval, Mode, TrainConfig,
    TransferPlan,
};
use tue_core::generators::{generate, GenConfig, Method};

#[derive(Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
struct Setup {
    data: Option<SyntheticConfig>,
    generate: Option<GenConfig>,
    train: Option<TrainConfig>,
    stages: Option<Vec<String>>,
}

fn main() -> tue_core::Result<()> {
    let arg = std::env::args().nth(1).unwrap_or_else(|| "{}".into());
    let setup: Setup = serde_json::from_str(&arg).expect("valid JSON overrides");
    let data_cfg = setup.data.unwrap_or(SyntheticConfig {
        per_class: 200,
        ..Default::default()
    });
    let gen_base = setup.generate.unwrap_or(GenConfig {
        epsilon: 0.1,
        ..Default::default()
    });
    let train = setup.train.unwrap_or_default();
    let stages = setup.stages.unwrap_or_else(|| {
        ["clean", "emn", "ucl", "tue", "sn"]
            .map(String::from)
            .to_vec()
    });
    let has = |s: &str| stages.iter().any(|x| x == s);

    let (ds, test) = make_synthetic_split(&data_cfg, data_cfg.per_class)?;
    let t = Instant::now();
    if has("clean") {
        for mode in [Mode::Supervised, Mode::Unsupervised] {
            let r = evaluate(&ds, &test, mode, &train)?;
            println!(
                "clean {:<12} acc {:.4} ({:.1}s)",
                mode.as_str(),
                r.accuracy,
                t.elapsed().as_secs_f64()
            );
        }
    }
    for method in Method::ALL {
        if !has(method.as_str()) {
            continue;
        }
        let cfg = GenConfig {
            method,
            ..gen_base.clone()
        };
        let (set, trace) = generate(&ds, &cfg)?;
        let csds: Vec<String> = trace
            .rounds
            .iter()
            .map(|r| {
                format!(
                    "{:.3}/{:.3}/{}",
                    r.model_loss,
                    r.perturbation_loss,
                    r.csd.map_or("-".into(), |c| format!("{c:.3}"))
                )
            })
            .collect();
        println!(
            "{method} gen ({:.1}s) trace {}",
            t.elapsed().as_secs_f64(),
            csds.join(" ")
        );
        let sep = separability_probe(&set, 0.5, &train)?;
        println!(
            "{method} separability train {:.4} held {:.4} csd {:?}",
            sep.train_accuracy, sep.heldout_accuracy, sep.csd
        );
        let poisoned = apply_perturbations(&ds, &set, None)?;
        for mode in [Mode::Supervised, Mode::Unsupervised] {
            let r = evaluate(&poisoned, &test, mode, &train)?;
            println!(
                "{method} {:<12} acc {:.4} ({:.1}s)",
                mode.as_str(),
                r.accuracy,
                t.elapsed().as_secs_f64()
            );
        }
        if has("cleanprobe") {
            let enc = tue_core::eval::pretrain_contrastive(&poisoned, &train)?;
            let r = tue_core::eval::linear_probe(&enc, &ds, &test, &train)?;
            println!("{method} cleanprobe   acc {:.4}", r.accuracy);
        }
        if has("swap") {
            let rep = swap_eval(&ds, &test, &set, &train)?;
            println!(
                "{method} swap orig {:.4} intra {:.4} inter {:.4}",
                rep.original.accuracy, rep.intra.accuracy, rep.inter.accuracy
            );
        }
        if has("transfer") {
            let plan = TransferPlan {
                class_map: None,
                interpolate: true,
            };
            for (classes, per_class) in [
                (8, data_cfg.per_class),
                (data_cfg.num_classes, 2 * data_cfg.per_class),
            ] {
                let target_cfg = SyntheticConfig {
                    num_classes: classes,
                    per_class,
                    seed: 1_000 + classes as u64,
                    ..data_cfg.clone()
                };
                let (target, target_test) = make_synthetic_split(&target_cfg, data_cfg.per_class)?;
                let r = transfer_eval(&set, &target, &target_test, &plan, &train)?;
                println!(
                    "{method} transfer {classes}x{per_class} acc {:.4}",
                    r.accuracy
                );
            }
        }
    }
    Ok(())
}
