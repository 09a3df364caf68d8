//! Acceptance criteria 1-9, one PASS/FAIL line each.
//!
//! Built without the libtest harness so the lines always reach stdout; the
//! checks themselves are the ones the per-module test files run.

#[allow(dead_code, unused_imports)]
#[path = "gradients.rs"]
mod gradients;

mod common;

use std::io::Write;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use glyphgan::data::Charset;
use glyphgan::train::{evaluate_conditional_fidelity, score_summary, train, verify, TrainConfig};

type Outcome = Result<String, String>;

fn checks(list: &[(&str, fn())]) -> Outcome {
    for (name, f) in list {
        catch_unwind(*f).map_err(|e| format!("{name}: {}", panic_text(&e)))?;
    }
    Ok(format!("{} checks", list.len()))
}

fn panic_text(e: &Box<dyn std::any::Any + Send>) -> String {
    e.downcast_ref::<String>()
        .cloned()
        .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
        .unwrap_or_else(|| "panic".into())
}

fn within(limit: Duration, took: Duration, res: Outcome) -> Outcome {
    let detail = res?;
    if took > limit {
        return Err(format!("{detail}, but took {took:.1?} (limit {limit:?})"));
    }
    Ok(detail)
}

fn criterion_1() -> Outcome {
    use gradients::*;
    let start = Instant::now();
    let res = checks(&[
        ("conv2d", check_conv2d_gradients),
        ("conv2d at network sizes", check_conv_gradients_at_network_sizes),
        ("deconv2d", check_deconv2d_gradients),
        ("batch norm", check_batch_norm_gradients_train_and_eval),
        ("linear", check_linear_gradients),
        ("activations", check_activation_gradients),
        ("embedding", check_embedding_gradients),
        ("bce with logits", check_bce_with_logits_gradient),
        ("constant graph", check_constant_graph_gives_zero_gradients),
        ("double backward", check_backward_twice_is_rejected),
        ("whole model", check_full_model_gradients),
    ]);
    within(Duration::from_secs(60), start.elapsed(), res)
}

fn criterion_2() -> Outcome {
    checks(&[("shape tables, batches 2 and 16", gan::check_shape_tables)])
}

fn criterion_3() -> Outcome {
    checks(&[
        (
            "conv2d vs nested loops (150 cases)",
            nn_oracles::check_conv_matches_nested_loops,
        ),
        (
            "ink_box vs full scan (300 cases)",
            metrics::check_ink_box_matches_full_scan,
        ),
        (
            "spacing vs render-and-scan (200 cases)",
            metrics::check_spacing_matches_render_and_scan,
        ),
        (
            "running vs batch means (100 cases)",
            profile::check_running_means_equal_batch_means,
        ),
    ])
}

fn criterion_4() -> Outcome {
    let train_set = common::mnist_train().take(2000);
    let held_out = common::mnist_test().take(500);
    let digits = Charset::digits();
    let mut passing = 0;
    let mut lines = Vec::new();
    for seed in 1..=3 {
        let start = Instant::now();
        let cfg = TrainConfig {
            seed,
            epochs: 10,
            batch_size: 64,
            ..TrainConfig::new(digits.clone())
        };
        let (ckpt, _) = train(cfg, &train_set).map_err(|e| e.to_string())?;
        let m = &ckpt.model;
        let s = score_summary(m, &held_out, 99).map_err(|e| e.to_string())?;
        let fid = evaluate_conditional_fidelity(m, &held_out, 500, 77).map_err(|e| e.to_string())?;
        // the discriminator as a reader: real '3's claimed as '3' vs as '8'
        let threes: Vec<_> = held_out
            .images()
            .iter()
            .zip(held_out.labels())
            .filter(|(_, &l)| l == 3)
            .collect();
        let mean_verify = |c: char| {
            let code = digits.code_for_char(c).unwrap();
            threes.iter().map(|(img, _)| verify(m, img, code).unwrap()).sum::<f64>() / threes.len() as f64
        };
        let ok = s.ordered() && fid >= 0.30;
        passing += ok as usize;
        lines.push(format!(
            "    seed {seed}: real-matched {:.3} real-mismatched {:.3} fake {:.3} fidelity {fid:.3} | verify '3' as 3: {:.3}, as 8: {:.3} | {:.0}s {}",
            s.real_matched,
            s.real_mismatched,
            s.fake,
            mean_verify('3'),
            mean_verify('8'),
            start.elapsed().as_secs_f64(),
            if ok { "ok" } else { "short" }
        ));
    }
    println!("{}", lines.join("\n"));
    let detail = format!("{passing} of 3 seeds with ordered scores and fidelity >= 0.30");
    if passing >= 2 {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn criterion_5() -> Outcome {
    let worst = catch_unwind(|| training::check_mismatch_sampler(10_000, 2024)).map_err(|e| panic_text(&e))?;
    Ok(format!("10 classes x 10000 draws, worst |z| = {worst:.2}"))
}

fn criterion_6() -> Outcome {
    let start = Instant::now();
    let res = checks(&[
        (
            "eta 0.5 from every start in +-32 px",
            profile::check_stub_convergence_from_any_start,
        ),
        (
            "eta 2.5 reports non-convergence",
            profile::check_large_step_size_does_not_converge,
        ),
    ]);
    within(Duration::from_secs(1), start.elapsed(), res)
}

fn criterion_7() -> Outcome {
    checks(&[
        ("1352 cells per table", profile::check_table_layout),
        (
            "every upper/lower and lower/lower pair has one cell",
            profile::check_letter_pairs_fill_every_cell_once,
        ),
        (
            "52 x 52 pair classification",
            metrics::check_pair_classes_cover_all_letter_pairs,
        ),
    ])
}

fn criterion_8() -> Outcome {
    checks(&[(
        "ramps at -60..60 degrees within 3",
        metrics::check_ramp_angles_are_recovered,
    )])
}

fn criterion_9() -> Outcome {
    checks(&[
        ("train/sample/compose reruns", cli::check_cli_determinism),
        (
            "checkpoint round trip and resume",
            training::check_checkpoint_round_trip,
        ),
        ("profile round trip", profile::check_profile_round_trip),
    ])
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 9] = [
        ("gradient suite", criterion_1),
        ("shape suite", criterion_2),
        ("oracle equivalence", criterion_3),
        ("matching-aware training, desk scale", criterion_4),
        ("mismatch-sampler exactness", criterion_5),
        ("controller convergence", criterion_6),
        ("profile arithmetic", criterion_7),
        ("angle recovery", criterion_8),
        ("determinism and persistence", criterion_9),
    ];
    // criterion 4 takes minutes; GLYPHGAN_ACCEPTANCE=1,2,3 runs a subset
    let only: Option<Vec<usize>> = std::env::var("GLYPHGAN_ACCEPTANCE")
        .ok()
        .map(|v| v.split(',').filter_map(|n| n.trim().parse().ok()).collect());
    let mut failed = 0;
    for (i, (title, f)) in criteria.iter().enumerate() {
        let n = i + 1;
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let start = Instant::now();
        let res = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| Err(panic_text(&e)));
        let secs = start.elapsed().as_secs_f64();
        let (tag, detail) = match &res {
            Ok(d) => ("PASS", d),
            Err(d) => ("FAIL", d),
        };
        failed += res.is_err() as usize;
        println!("criterion {n}: {tag} - {title} ({detail}; {secs:.1}s)");
        std::io::stdout().flush().unwrap();
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
