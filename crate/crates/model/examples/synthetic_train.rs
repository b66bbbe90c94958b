//! Trains the toy network on the synthetic set and prints progress.
//!
//! `cargo run --release -p sal360-model --example synthetic_train -- steps=2000 seed=0 lr_encoder=1e-4 input=128x64`

use std::time::Instant;

use sal360_model::experiment::{cb_ablation, prepare, run, ExperimentConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut cfg = ExperimentConfig::synthetic_default()?;
    let mut ablate = false;
    for arg in std::env::args().skip(1) {
        let (key, value) = arg.split_once('=').ok_or("expected key=value")?;
        match key {
            "steps" => cfg.train.steps = value.parse()?,
            "seed" => {
                cfg.train.seed = value.parse()?;
                cfg.data.seed = cfg.train.seed;
            }
            "lr_encoder" => cfg.train.lr_encoder = value.parse()?,
            "lr_decoder" => cfg.train.lr_decoder = value.parse()?,
            "sigma" => cfg.sigma_deg = value.parse()?,
            "input" => {
                let (w, h) = value.split_once('x').ok_or("input=WxH")?;
                cfg.model.input_width = w.parse()?;
                cfg.model.input_height = h.parse()?;
            }
            "ablate" => ablate = value.parse()?,
            _ => return Err(format!("unknown key {key}").into()),
        }
    }
    let start = Instant::now();
    let prepared = prepare(&cfg)?;
    println!("prepared in {:.1?}", start.elapsed());
    if ablate {
        for row in cb_ablation(&prepared.splits(), &cfg.model, &cfg.train)? {
            let r = &row.result;
            println!(
                "{:22} cc {:.4} auc {:.4} alpha {:.1} beta {:.4}  {:.1?}",
                row.label,
                r.report.cc,
                r.report.auc_judd,
                r.cb.alpha,
                r.cb.beta,
                start.elapsed()
            );
        }
        return Ok(());
    }
    let mut window = Vec::new();
    let result = run(&prepared.splits(), &cfg.model, &cfg.train, |i, r| {
        window.push(r.loss.total);
        if (i + 1) % 100 == 0 {
            let mean = window.iter().sum::<f64>() / window.len() as f64;
            println!("step {:5}  loss {mean:.4}  {:.1?}", i + 1, start.elapsed());
            window.clear();
        }
    })?;
    let r = &result.report;
    println!(
        "cc {:.4}  auc {:.4}  nss {:.3}  kl {:.3}  alpha {:.2}  beta {:.4}  total {:.1?}",
        r.cc,
        r.auc_judd,
        r.nss,
        r.kl,
        result.cb.alpha,
        result.cb.beta,
        start.elapsed()
    );
    Ok(())
}
