//! Train all three modes on synthetic data and compare held-out metrics.
//!
//! ```text
//! cargo run --release -p logicloss --example benchmark -- [images] [epochs]
//! ```

use std::time::Instant;

use logicloss::entailment::builtin_kb;
use logicloss::metrics::{evaluate, format_table, MetricsReport, Prediction};
use logicloss::trainer::synthetic::generate_synthetic;
use logicloss::trainer::{predict, train, Mode, TrainConfig};

fn main() {
    let mut args = std::env::args().skip(1).map(|a| a.parse::<usize>().expect("numeric argument"));
    let images = args.next().unwrap_or(1000);
    let epochs = args.next().unwrap_or(60);
    let kb = builtin_kb().expect("builtin knowledge base");
    let test = generate_synthetic(300, 7);
    let start = Instant::now();
    let runs: Vec<(Mode, u64, MetricsReport, f64)> = std::thread::scope(|s| {
        let handles: Vec<_> = Mode::ALL
            .iter()
            .flat_map(|&mode| [41u64, 42, 43].map(move |seed| (mode, seed)))
            .map(|(mode, seed)| {
                let kb = &kb;
                let test = &test;
                s.spawn(move || {
                    let records = generate_synthetic(images, seed);
                    let cfg = TrainConfig { mode, seed, epochs, ..TrainConfig::default() };
                    let out = train(&cfg, &records, kb).expect("training");
                    let preds: Vec<Prediction> =
                        predict(&out.model, test, false).expect("predict").into_iter().map(Into::into).collect();
                    let report = evaluate(&preds, test, kb).expect("metrics");
                    (mode, seed, report, out.curves.last().map_or(0.0, |r| r.answer_acc))
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("worker")).collect()
    });
    for (mode, seed, r, train_acc) in &runs {
        println!(
            "{mode:<8} seed {seed}: train acc {train_acc:.4}  acc {:.4}  consistency {:.4}  distribution {:.4}",
            r.accuracy, r.consistency, r.distribution
        );
    }
    let mean = |m: Mode| {
        let rs: Vec<&MetricsReport> = runs.iter().filter(|r| r.0 == m).map(|r| &r.2).collect();
        let mut avg = rs[0].clone();
        let n = rs.len() as f64;
        avg.accuracy = rs.iter().map(|r| r.accuracy).sum::<f64>() / n;
        avg.binary_accuracy = rs.iter().map(|r| r.binary_accuracy).sum::<f64>() / n;
        avg.open_accuracy = rs.iter().map(|r| r.open_accuracy).sum::<f64>() / n;
        avg.consistency = rs.iter().map(|r| r.consistency).sum::<f64>() / n;
        avg.distribution = rs.iter().map(|r| r.distribution).sum::<f64>() / n;
        for (k, v) in avg.per_category.iter_mut() {
            *v = rs.iter().map(|r| r.per_category[k]).sum::<f64>() / n;
        }
        avg
    };
    let (o, h, l) = (mean(Mode::Original), mean(Mode::Hybrid), mean(Mode::Logic));
    print!("{}", format_table(&[("Original", &o), ("Hybrid", &h), ("Logic", &l)]));
    println!("elapsed {:.1}s", start.elapsed().as_secs_f64());
}
