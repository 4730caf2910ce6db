//! Acceptance suite: one test per criterion, each printing a single
//! `ACCEPTANCE <n> (<name>): PASS|FAIL` line (visible under `--nocapture`,
//! or automatically on failure).

use std::collections::BTreeSet;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Normal;
use voicebio::audio::{AudioSegment, SectionId};
use voicebio::config::PipelineConfig;
use voicebio::dsp::{estimate_f0, F0Config};
use voicebio::eval::{
    chi_square, cohort_table, loocv, t_test, train_test_split, GroupVariable,
};
use voicebio::features::{append_clinical, FeatureMatrix};
use voicebio::glottal::glottal_features;
use voicebio::model::{fit_l2, loss_and_gradient, objective, Hyper};
use voicebio::phonation::{cycle_marks, phonation_features, shimmer};
use voicebio::pipeline::fit_pipeline;
use voicebio::selection::{run_selection, stability_filter, SelectionConfig};
use voicebio::synth::{
    synth_cohort, synth_voice, synth_voice_detailed, ClassSpec, CohortSpec, PulseShape,
    SynthSpec,
};

fn report(n: u32, name: &str, ok: bool, details: &str) {
    println!("ACCEPTANCE {n} ({name}): {}", if ok { "PASS" } else { "FAIL" });
    assert!(ok, "criterion {n} ({name}) failed: {details}");
}

/// Balanced-label gaussian matrix: the first `n_signal` columns are shifted
/// by `effect` in class 1, the rest are pure noise.
fn planted(n: usize, n_signal: usize, n_noise: usize, effect: f64, seed: u64) -> FeatureMatrix {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
    let rows: Vec<Vec<f64>> = labels
        .iter()
        .map(|&l| {
            (0..n_signal + n_noise)
                .map(|j| {
                    let shift = if j < n_signal && l == 1 { effect } else { 0.0 };
                    shift + normal.sample(&mut rng)
                })
                .collect()
        })
        .collect();
    FeatureMatrix {
        names: (0..n_signal + n_noise).map(|j| format!("f{j:04}")).collect(),
        rows,
        labels: labels.clone(),
        patient_ids: (0..n).map(|i| format!("p{i}")).collect(),
    }
}

#[test]
fn criterion_1_split_and_loocv_shape() {
    let start = Instant::now();
    let matrix = planted(29, 8, 12, 2.5, 1);

    let (train, test) = train_test_split(&matrix.labels, 0.35, 7, true).unwrap();
    let split_ok = train.len() == 18 && test.len() == 11;

    let cv = loocv(&matrix, &PipelineConfig::default(), false).unwrap();
    let folds_ok = cv.folds.len() == 29 && cv.pooled_confusion.total() == 29;
    let pooled_preds: usize = cv.folds.iter().map(|f| f.predictions.len()).sum();

    let elapsed = start.elapsed().as_secs_f64();
    report(
        1,
        "split shape and LOOCV fold count",
        split_ok && folds_ok && pooled_preds == 29 && elapsed < 1.0,
        &format!(
            "split {}/{}, folds {}, pooled {}, {:.2}s",
            train.len(),
            test.len(),
            cv.folds.len(),
            pooled_preds,
            elapsed
        ),
    );
}

#[test]
fn criterion_2_dsp_oracles() {
    let start = Instant::now();
    let cfg = F0Config::default();
    let mut details = Vec::new();
    let mut ok = true;
    let check = |name: &str, value: f64, pass: bool, d: &mut Vec<String>| {
        d.push(format!("{name}={value:.3}{}", if pass { "" } else { " <-- FAIL" }));
        pass
    };

    // F0 within +/-2 Hz of the planted 150 Hz.
    let seg = synth_voice(&SynthSpec::vowel(2.0, 11), SectionId::S2VowelA).unwrap();
    let contour = estimate_f0(&seg, &cfg).unwrap();
    let voiced: Vec<f64> = contour.f0_hz.iter().copied().filter(|&f| f > 0.0).collect();
    let f0 = voiced.iter().sum::<f64>() / voiced.len() as f64;
    ok &= check("f0", f0, (f0 - 150.0).abs() <= 2.0, &mut details);

    // 3% planted jitter measured in [2, 4]% by the frame-level extractor.
    let spec = SynthSpec { jitter_pct: 3.0, ..SynthSpec::vowel(2.0, 13) };
    let seg = synth_voice(&spec, SectionId::S2VowelA).unwrap();
    let j = phonation_features(&seg, &cfg).unwrap()["avg jitter"];
    ok &= check("jitter", j, (2.0..=4.0).contains(&j), &mut details);

    // 20% alternating shimmer injected by scaling each glottal cycle of a
    // shimmer-free vowel by 1.1 / 0.9 in turn; mean |delta| over mean
    // amplitude of the 1.1/0.9 alternation is exactly 20%.
    let spec = SynthSpec::vowel(2.0, 17);
    let (seg, truth) = synth_voice_detailed(&spec, SectionId::S2VowelA).unwrap();
    let rate = seg.sample_rate as f64;
    let mut samples = seg.samples.clone();
    for (i, w) in truth.gci_times_s.windows(2).enumerate() {
        let gain = if i % 2 == 0 { 1.1 } else { 0.9 };
        let a = (w[0] * rate).round() as usize;
        let b = ((w[1] * rate).round() as usize).min(samples.len());
        for s in &mut samples[a..b] {
            *s *= gain;
        }
    }
    let seg = AudioSegment::new(samples, seg.sample_rate, seg.section).unwrap();
    let contour = estimate_f0(&seg, &cfg).unwrap();
    let run = cycle_marks(&seg, &contour)
        .into_iter()
        .max_by_key(|r| r.marks.len())
        .unwrap();
    let s = shimmer(&run.amplitudes).unwrap();
    ok &= check("shimmer", s, (s - 20.0).abs() <= 2.0, &mut details);

    // Planted OQ = 0.6 recovered within +/-0.1.
    let seg = synth_voice(&SynthSpec::vowel(2.0, 23), SectionId::S2VowelA).unwrap();
    let feats = glottal_features(&seg, &cfg).unwrap();
    let oq = feats["global avg avg OQ"];
    ok &= check("oq", oq, (oq - 0.6).abs() <= 0.1, &mut details);

    // HRF separates a harmonically rich pulse from a near-sinusoidal one.
    let rich = synth_voice(&SynthSpec::vowel(2.0, 29), SectionId::S2VowelA).unwrap();
    let smooth_spec = SynthSpec {
        pulse_shape: PulseShape::Smooth,
        oq: 0.95,
        ..SynthSpec::vowel(2.0, 29)
    };
    let smooth = synth_voice(&smooth_spec, SectionId::S2VowelA).unwrap();
    let hrf = |s: &AudioSegment| glottal_features(s, &cfg).unwrap()["global avg avg HRF"];
    let gap = hrf(&rich) - hrf(&smooth);
    ok &= check("hrf_gap_db", gap, gap >= 6.0, &mut details);

    let elapsed = start.elapsed().as_secs_f64();
    ok &= check("elapsed_s", elapsed, elapsed < 30.0, &mut details);
    report(2, "DSP oracles", ok, &details.join(", "));
}

#[test]
fn criterion_3_optimization_correctness() {
    let hyper = Hyper::default();
    let mut max_rel = 0.0f64;
    for seed in 0..20u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        let (n, d) = (25, 4);
        let x: Vec<Vec<f64>> =
            (0..n).map(|_| (0..d).map(|_| normal.sample(&mut rng)).collect()).collect();
        let y: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let theta0: f64 = normal.sample(&mut rng);
        let theta: Vec<f64> = (0..d).map(|_| normal.sample(&mut rng)).collect();

        let (_, grad) = loss_and_gradient(theta0, &theta, &x, &y, &hyper);
        let h = 1e-6;
        for k in 0..=d {
            let eval_at = |delta: f64| {
                let mut t0 = theta0;
                let mut t = theta.clone();
                if k == 0 {
                    t0 += delta;
                } else {
                    t[k - 1] += delta;
                }
                objective(t0, &t, &x, &y, &hyper)
            };
            let fd = (eval_at(h) - eval_at(-h)) / (2.0 * h);
            max_rel = max_rel.max((grad[k] - fd).abs() / fd.abs().max(1.0));
        }
    }
    let grad_ok = max_rel <= 1e-5;

    // Convex uniqueness: two fits from very different starting points land
    // on the same optimum.
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let x: Vec<Vec<f64>> =
        (0..30).map(|_| (0..3).map(|_| normal.sample(&mut rng)).collect()).collect();
    let y: Vec<u8> = (0..30).map(|i| (i % 2) as u8).collect();
    let (a0, a, a_conv, trace) = fit_l2(&x, &y, &hyper, 0.0, &[0.0; 3]);
    let init: Vec<f64> = (0..3).map(|_| 5.0 * normal.sample(&mut rng)).collect();
    let (b0, b, b_conv, _) = fit_l2(&x, &y, &hyper, -4.0, &init);
    let mut gap = (a0 - b0).abs();
    for k in 0..3 {
        gap = gap.max((a[k] - b[k]).abs());
    }
    let unique_ok = a_conv && b_conv && gap <= 1e-6;

    let monotone_ok = trace.windows(2).all(|w| w[1] <= w[0] + 1e-12);

    report(
        3,
        "gradient, convex uniqueness, monotone trace",
        grad_ok && unique_ok && monotone_ok,
        &format!("max_rel={max_rel:.2e}, init_gap={gap:.2e}, monotone={monotone_ok}"),
    );
}

#[test]
fn criterion_4_selection_recovery() {
    // Stage 1 keeps at least 10 of the 12 planted columns on every seed.
    let mut min_hits = usize::MAX;
    for seed in 0..5u64 {
        let m = planted(30, 12, 188, 2.0, 100 + seed);
        let cfg = SelectionConfig { seed, ..Default::default() };
        let (_, _, survivors) = stability_filter(&m, &cfg).unwrap();
        min_hits = min_hits.min(survivors.iter().filter(|&&j| j < 12).count());
    }
    let stage1_ok = min_hits >= 10;

    // Full selection lands its top 5 inside the planted set on >= 4/5 seeds.
    let mut recovered = 0;
    for seed in 0..5u64 {
        let m = planted(30, 12, 188, 2.0, 300 + seed);
        let cfg = SelectionConfig { seed, ..Default::default() };
        let sel = run_selection(&m, &cfg).unwrap().selected;
        if sel.iter().all(|n| n.trim_start_matches('f').parse::<usize>().unwrap() < 12) {
            recovered += 1;
        }
    }
    let rfe_ok = recovered >= 4;

    // Survivor sets nest as the threshold rises.
    let m = planted(30, 12, 188, 2.0, 100);
    let mut nested_ok = true;
    let mut prev: Option<BTreeSet<usize>> = None;
    for t in [0.0, 0.05, 0.105, 0.2] {
        let cfg = SelectionConfig { mi_threshold: t, seed: 0, ..Default::default() };
        let (_, _, survivors) = stability_filter(&m, &cfg).unwrap();
        let set: BTreeSet<usize> = survivors.into_iter().collect();
        if let Some(p) = &prev {
            nested_ok &= set.is_subset(p);
        }
        prev = Some(set);
    }

    report(
        4,
        "planted-signal selection recovery",
        stage1_ok && rfe_ok && nested_ok,
        &format!("min stage-1 hits {min_hits}/12, top-5 recovered {recovered}/5, nested={nested_ok}"),
    );
}

#[test]
fn criterion_5_end_to_end_separable_and_null() {
    let start = Instant::now();
    let f0 = F0Config::default();
    let durations = [2.0, 1.0, 1.0, 2.0];

    let mut spec = CohortSpec::new(30, ClassSpec::baseline(), ClassSpec::separated(), 41);
    spec.section_durations_s = durations;
    let cohort = synth_cohort(&spec).unwrap();
    let matrix = voicebio::features::extract_matrix(&cohort, &f0).unwrap();
    let cv = loocv(&matrix, &PipelineConfig::default(), false).unwrap();
    let sep_acc = cv.mean_test.accuracy;
    let sep_ok = sep_acc >= 0.90;

    let mut null_accs = Vec::new();
    for seed in 0..5u64 {
        let mut spec = CohortSpec::new(30, ClassSpec::baseline(), ClassSpec::baseline(), 71 + seed);
        spec.section_durations_s = durations;
        let cohort = synth_cohort(&spec).unwrap();
        let matrix = voicebio::features::extract_matrix(&cohort, &f0).unwrap();
        let cfg = PipelineConfig::default().with_seed(seed);
        let cv = loocv(&matrix, &cfg, false).unwrap();
        null_accs.push(cv.mean_test.accuracy);
    }
    let null_ok = null_accs.iter().all(|&a| (0.2..=0.8).contains(&a));

    let elapsed = start.elapsed().as_secs_f64();
    report(
        5,
        "separable vs null end-to-end LOOCV",
        sep_ok && null_ok && elapsed < 180.0,
        &format!("separable acc {sep_acc:.3}, null accs {null_accs:?}, {elapsed:.0}s"),
    );
}

#[test]
fn criterion_6_clinical_fusion() {
    // A marginal acoustic-like cohort: weak planted signal only.
    let mut matrix = planted(30, 4, 46, 0.8, 5);
    let mut cfg = PipelineConfig::default();
    cfg.selection.mi_threshold = 0.01; // keep stage 1 permissive at n=29
    let base_acc = loocv(&matrix, &cfg, false).unwrap().mean_test.accuracy;

    // Clinical column built to separate the classes with std exactly 9800.
    let clinical: Vec<f64> =
        matrix.labels.iter().map(|&l| if l == 0 { 1200.0 } else { 20800.0 }).collect();
    append_clinical(&mut matrix, "nt_probnp", &clinical).unwrap();
    let fused_acc = loocv(&matrix, &cfg, false).unwrap().mean_test.accuracy;
    let fusion_ok = fused_acc >= base_acc + 0.05;

    // Odds-ratio arithmetic: with a scaled coefficient of 0.39 on a feature
    // whose training std is 9800, the report must state odds x1.477 per
    // 9800 original units (exp(0.39) = 1.47698).
    let rows: Vec<Vec<f64>> = clinical.iter().map(|&v| vec![v]).collect();
    let mut model = voicebio::model::fit(
        &rows,
        &matrix.labels,
        &["clinical/nt_probnp".to_string()],
        &Hyper::default(),
        0,
    )
    .unwrap();
    model.theta[0] = 0.39;
    let rep = model.odds_ratio_report("clinical/nt_probnp").unwrap();
    let or_ok = (rep.odds_ratio_scaled - 1.477).abs() <= 1e-3
        && rep.original_unit_delta_for_or == 9800.0
        && rep.statement.contains("9800");

    report(
        6,
        "clinical fusion and odds-ratio arithmetic",
        fusion_ok && or_ok,
        &format!(
            "acc {base_acc:.3} -> {fused_acc:.3}, OR {:.4} per {} units ({})",
            rep.odds_ratio_scaled, rep.original_unit_delta_for_or, rep.statement
        ),
    );
}

#[test]
fn criterion_7_no_leakage() {
    let matrix = planted(12, 4, 8, 2.0, 13);
    let mut cfg = PipelineConfig::default();
    cfg.selection.mi_threshold = 0.01;

    let mut ok = true;
    for i in 0..matrix.n_rows() {
        let train_idx: Vec<usize> = (0..matrix.n_rows()).filter(|&r| r != i).collect();

        let clean = fit_pipeline(&matrix.subset(&train_idx), &cfg).unwrap();

        // Corrupt every feature of the held-out row, refit the same fold.
        let mut mutated = matrix.clone();
        for v in &mut mutated.rows[i] {
            *v = *v * -7.0 + 999.0;
        }
        let refit = fit_pipeline(&mutated.subset(&train_idx), &cfg).unwrap();

        ok &= serde_json::to_vec(&clean).unwrap() == serde_json::to_vec(&refit).unwrap();
    }
    report(7, "held-out mutation changes no fold model", ok, "fold model bytes differed");
}

#[test]
fn criterion_8_statistics() {
    let same = [1.0, 2.0, 3.0, 4.0];
    let t_same = t_test(&same, &same).unwrap();
    let identical_ok = t_same.t == 0.0 && t_same.p_two_sided == 1.0;

    let low: Vec<f64> = (0..15).map(|i| 0.01 * i as f64).collect();
    let high: Vec<f64> = (0..15).map(|i| 100.0 + 0.01 * i as f64).collect();
    let t_far = t_test(&low, &high).unwrap();
    let extreme_ok = t_far.p_two_sided < 0.001;

    let chi = chi_square([[10.0, 0.0], [0.0, 10.0]]).unwrap();
    let chi_ok = (chi.chi2 - 20.0).abs() <= 1e-12;

    // Planted acoustic-predictor separation shows up in the cohort table.
    let labels: Vec<u8> = (0..30).map(|i| (i % 2) as u8).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let z: Vec<f64> = labels
        .iter()
        .map(|&l| if l == 0 { 0.21 } else { 0.81 } + 0.05 * rng.gen::<f64>())
        .collect();
    let table = cohort_table(
        &labels,
        &[("acoustic predictor".to_string(), GroupVariable::Continuous(z))],
    )
    .unwrap();
    let table_ok = table[0].p < 0.001;

    report(
        8,
        "t-test, chi-square, cohort table",
        identical_ok && extreme_ok && chi_ok && table_ok,
        &format!(
            "identical p={}, extreme p={:.2e}, chi2={}, table p={:.2e}",
            t_same.p_two_sided, t_far.p_two_sided, chi.chi2, table[0].p
        ),
    );
}

#[test]
fn criterion_9_cli_chain_determinism() {
    let bin = env!("CARGO_BIN_EXE_voicebio");
    let tmp = tempfile::tempdir().unwrap();

    let run_chain = |dir: &Path| {
        let d = |name: &str| dir.join(name).to_string_lossy().into_owned();
        let steps: Vec<Vec<String>> = vec![
            vec![
                "synth".into(), "--out".into(), d("cohort"), "--n".into(), "12".into(),
                "--separated".into(),
                "--durations".into(), "2".into(), "1".into(), "1".into(), "2".into(),
            ],
            vec![
                "extract".into(),
                "--manifest".into(), d("cohort/cohort.jsonl"),
                "--out".into(), d("matrix.csv"),
            ],
            vec!["select".into(), "--matrix".into(), d("matrix.csv"), "--out".into(), d("selection.json")],
            vec!["train".into(), "--matrix".into(), d("matrix.csv"), "--out".into(), d("model.json")],
            vec!["loocv".into(), "--matrix".into(), d("matrix.csv"), "--out".into(), d("cv.json")],
        ];
        for step in steps {
            let out = Command::new(bin)
                .arg("--seed")
                .arg("7")
                .args(&step)
                .output()
                .unwrap();
            assert!(
                out.status.success(),
                "step {:?} failed: {}",
                step[0],
                String::from_utf8_lossy(&out.stderr)
            );
        }
    };

    let (dir_a, dir_b) = (tmp.path().join("a"), tmp.path().join("b"));
    run_chain(&dir_a);
    run_chain(&dir_b);

    let mut ok = true;
    let mut diffs = Vec::new();
    for name in [
        "cohort/cohort.jsonl",
        "cohort/synth001_Section2.wav",
        "matrix.csv",
        "selection.json",
        "model.json",
        "cv.json",
    ] {
        let a = std::fs::read(dir_a.join(name)).unwrap();
        let b = std::fs::read(dir_b.join(name)).unwrap();
        if a != b {
            ok = false;
            diffs.push(name);
        }
    }
    report(
        9,
        "repeated CLI chain is byte-identical",
        ok,
        &format!("artifacts differed: {diffs:?}"),
    );
}
