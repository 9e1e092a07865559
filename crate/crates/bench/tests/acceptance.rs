//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::collections::{BTreeSet, HashSet};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use demorph_bench::demorpher::{materialize_outputs, OracleDemorpher};
use demorph_bench::embedder::{embed_manifest, GridEmbedder};
use demorph_bench::pipeline::{run_evaluation, EvaluationConfig, EvaluationRun};
use demorph_bench::sanity::{sanity_suite, SanityConfig};
use demorph_bench::synth::{generate, write_benchmark, SynthConfig};
use demorph_core::biometric::{compute_threshold_at_fmr, restored, BiometricError, ScoreSet};
use demorph_core::dataset::{classify_scenario, MorphRecord, ScenarioSplit};
use demorph_core::image::ImageBuffer;
use demorph_core::iqa::{psnr, ssim, IqaKind, IqaMetric, Psnr, Ssim, SsimParams};
use demorph_core::pairing::{
    bw_iqa, check_demorph_conditions, evaluate, paired_iqa, resolve_pairing, ConditionParams,
    EvalParams, EvaluationInputs, ScoreGrid,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

/// The 100-morph, 40-identity benchmark with trivial outputs, plus its
/// oracle rewrite. Built once and shared by criteria 1, 2 and 9.
struct Benchmark {
    _dir: tempfile::TempDir,
    root: PathBuf,
    trivial: EvaluationRun,
    oracle: EvaluationRun,
    trivial_elapsed: Duration,
}

fn build_benchmark() -> Result<Benchmark, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let root = dir.path().join("synthetic");
    let config = EvaluationConfig {
        dataset_name: "synthetic".into(),
        ..Default::default()
    };
    let embedder = GridEmbedder::new(8);

    let start = Instant::now();
    let bench = generate(&SynthConfig {
        seed: 0,
        identities: 40,
        morphs: 100,
        alpha: 0.5,
        ..Default::default()
    })
    .map_err(|e| e.to_string())?;
    let records = write_benchmark(&bench, &root).map_err(|e| e.to_string())?;
    let store = embed_manifest(&records, &embedder).map_err(|e| e.to_string())?;
    let trivial = run_evaluation(&records, &store, None, &config).map_err(|e| e.to_string())?;
    let trivial_elapsed = start.elapsed();
    store
        .save(root.join("embeddings.bemb"))
        .map_err(|e| e.to_string())?;

    let oracle_records: Vec<MorphRecord> =
        materialize_outputs(&records, &OracleDemorpher, &root.join("oracle"))
            .map_err(|e| e.to_string())?;
    let oracle_store = embed_manifest(&oracle_records, &embedder).map_err(|e| e.to_string())?;
    let oracle =
        run_evaluation(&oracle_records, &oracle_store, None, &config).map_err(|e| e.to_string())?;
    Ok(Benchmark {
        _dir: dir,
        root,
        trivial,
        oracle,
        trivial_elapsed,
    })
}

fn criterion_1(b: &Benchmark) -> Outcome {
    let r = &b.trivial.report;
    ensure!(r.n_morphs == 100, "expected 100 morphs, got {}", r.n_morphs);
    ensure!(r.target_fmr == 0.10, "target FMR {}", r.target_fmr);
    ensure!(r.tmr_at_fmr == 1.0, "trivial TMR@10%FMR = {}", r.tmr_at_fmr);
    ensure!(r.params.tau == 0.4, "tau {}", r.params.tau);
    ensure!(r.ra == 1.0, "trivial RA(0.4) = {}", r.ra);
    ensure!(
        b.trivial_elapsed < Duration::from_secs(10),
        "runtime {:?}",
        b.trivial_elapsed
    );
    Ok(format!(
        "trivial TMR@10%FMR = 100.0%, RA(0.4) = 100.0%, {:.2} s",
        b.trivial_elapsed.as_secs_f64()
    ))
}

fn criterion_2(b: &Benchmark) -> Outcome {
    let oracle_bw = b.oracle.report.bw_ssim;
    let trivial_bw = b.trivial.report.bw_ssim;
    ensure!(
        (oracle_bw - 2.0).abs() <= 1e-9,
        "oracle mean BW(SSIM) = {oracle_bw}"
    );
    let bw = |o: &demorph_bench::RecordOutcome| o.evaluation.iqa[&IqaKind::Ssim].bw;
    ensure!(
        b.oracle.records.len() == b.trivial.records.len(),
        "record count mismatch"
    );
    for (t, o) in b.trivial.records.iter().zip(&b.oracle.records) {
        ensure!(
            t.evaluation.morph_id == o.evaluation.morph_id,
            "record order differs"
        );
        ensure!(
            bw(t) < bw(o),
            "morph {}: trivial BW(SSIM) {} not below oracle {}",
            t.evaluation.morph_id,
            bw(t),
            bw(o)
        );
    }
    let gap = oracle_bw - trivial_bw;
    ensure!(gap >= 0.1, "aggregate gap {gap}");
    Ok(format!(
        "oracle BW(SSIM) = {oracle_bw:.9}, trivial = {trivial_bw:.6} (lower on all {} records), gap {gap:.6}",
        b.trivial.records.len()
    ))
}

/// Direct per-window SSIM: full 2-D Gaussian, two-pass moments.
fn naive_ssim(a: &[u8], b: &[u8], w: usize, h: usize, p: &SsimParams) -> f64 {
    let ws = p.window_size;
    let half = (ws / 2) as f64;
    let mut kernel: Vec<f64> = (0..ws * ws)
        .map(|i| {
            let (dx, dy) = ((i % ws) as f64 - half, (i / ws) as f64 - half);
            (-(dx * dx + dy * dy) / (2.0 * p.gaussian_sigma * p.gaussian_sigma)).exp()
        })
        .collect();
    let norm: f64 = kernel.iter().sum();
    kernel.iter_mut().for_each(|k| *k /= norm);
    let c1 = (p.k1 * p.dynamic_range).powi(2);
    let c2 = (p.k2 * p.dynamic_range).powi(2);
    let (mut total, mut count) = (0.0, 0usize);
    for y0 in 0..=h - ws {
        for x0 in 0..=w - ws {
            let px = |img: &[u8], k: usize| img[(y0 + k / ws) * w + x0 + k % ws] as f64;
            let ma: f64 = (0..ws * ws).map(|k| kernel[k] * px(a, k)).sum();
            let mb: f64 = (0..ws * ws).map(|k| kernel[k] * px(b, k)).sum();
            let (mut va, mut vb, mut cov) = (0.0, 0.0, 0.0);
            for (k, &g) in kernel.iter().enumerate() {
                let (da, db) = (px(a, k) - ma, px(b, k) - mb);
                va += g * da * da;
                vb += g * db * db;
                cov += g * da * db;
            }
            total += ((2.0 * ma * mb + c1) * (2.0 * cov + c2))
                / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            count += 1;
        }
    }
    total / count as f64
}

fn criterion_3() -> Outcome {
    let params = SsimParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    for i in 0..50 {
        let a: Vec<u8> = (0..32 * 32).map(|_| rng.random()).collect();
        let mix: f64 = rng.random_range(0.0..1.0);
        let b: Vec<u8> = a
            .iter()
            .map(|&v| (mix * v as f64 + (1.0 - mix) * rng.random_range(0.0..255.0)).round() as u8)
            .collect();
        let fast = ssim(
            &ImageBuffer::new(32, 32, 1, a.clone()).unwrap(),
            &ImageBuffer::new(32, 32, 1, b.clone()).unwrap(),
            &params,
        )
        .map_err(|e| e.to_string())?;
        let slow = naive_ssim(&a, &b, 32, 32, &params);
        worst = worst.max((fast - slow).abs());
        ensure!(
            (fast - slow).abs() < 1e-6,
            "pair {i}: fast {fast} vs naive {slow}"
        );
    }
    // constant images: structure term is c2/c2, luminance term is closed form
    let c1 = (0.01f64 * 255.0).powi(2);
    let closed = (2.0 * 100.0 * 50.0 + c1) / (100.0f64.powi(2) + 50.0f64.powi(2) + c1);
    let got = ssim(
        &ImageBuffer::filled(32, 32, 1, 100).unwrap(),
        &ImageBuffer::filled(32, 32, 1, 50).unwrap(),
        &params,
    )
    .map_err(|e| e.to_string())?;
    ensure!(
        (got - closed).abs() < 1e-6,
        "constant (100, 50): {got} vs closed form {closed}"
    );
    Ok(format!(
        "50 random 32x32 pairs within {worst:.1e} of the naive oracle; constant (100, 50) = {got:.7} (closed form {closed:.7})"
    ))
}

fn criterion_4() -> Outcome {
    let a = ImageBuffer::from_luma_fn(16, 16, |x, y| (x * 9 + y * 5) as u8).unwrap();
    let b = ImageBuffer::from_luma_fn(16, 16, |x, y| (x * 9 + y * 5) as u8 + 16).unwrap();
    let offset = psnr(&a, &b).map_err(|e| e.to_string())?;
    let expected = 20.0 * (255.0f64 / 16.0).log10();
    ensure!(
        (offset - expected).abs() < 1e-9,
        "offset 16: {offset} vs {expected}"
    );
    let identical = Psnr.score(&a, &a).map_err(|e| e.to_string())?;
    ensure!(identical == 100.0, "identical: {identical}");
    ensure!(
        psnr(&a, &a).map_err(|e| e.to_string())?.is_infinite(),
        "raw identical PSNR must be +inf"
    );
    let extremes = psnr(
        &ImageBuffer::filled(8, 8, 3, 0).unwrap(),
        &ImageBuffer::filled(8, 8, 3, 255).unwrap(),
    )
    .map_err(|e| e.to_string())?;
    ensure!(extremes.abs() < 1e-9, "0 vs 255: {extremes}");
    Ok(format!(
        "offset 16 = {offset:.9} dB, identical = 100 dB (capped), 0 vs 255 = {extremes} dB"
    ))
}

/// Smallest candidate in impostors ∪ {1} whose acceptance rate is within target.
fn brute_force_threshold(impostor: &[f64], target: f64) -> Option<(f64, f64)> {
    let n = impostor.len() as f64;
    impostor
        .iter()
        .copied()
        .chain([1.0])
        .map(|c| (c, impostor.iter().filter(|&&s| s >= c).count() as f64 / n))
        .filter(|&(_, fmr)| fmr <= target)
        .min_by(|a, b| a.0.total_cmp(&b.0))
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let targets = [0.001, 0.01, 0.05, 0.1, 0.2, 0.3, 0.5, 0.9];
    let mut unattainable = 0;
    for case in 0..200 {
        let n = rng.random_range(1..=1000);
        let quantized = rng.random_bool(0.5);
        let impostor: Vec<f64> = (0..n)
            .map(|_| {
                let s: f64 = rng.random_range(-1.0..1.0);
                if quantized {
                    (s * 20.0).round() / 20.0
                } else {
                    s
                }
            })
            .collect();
        let scores = ScoreSet::new(vec![0.5], impostor.clone());
        let mut previous: Option<f64> = None;
        for &t in &targets {
            let got = compute_threshold_at_fmr(&scores, t);
            let Some((value, fmr)) = brute_force_threshold(&impostor, t) else {
                // impostors at exactly +1 exceed the target on their own
                ensure!(
                    matches!(got, Err(BiometricError::UnattainableFmr { .. })),
                    "case {case}, target {t}: oracle finds no threshold but got {got:?}"
                );
                unattainable += 1;
                continue;
            };
            let got = got.map_err(|e| format!("case {case}, target {t}: {e}"))?;
            ensure!(
                got.value == value && got.achieved_fmr == fmr,
                "case {case}, target {t}: got ({}, {}) oracle ({value}, {fmr})",
                got.value,
                got.achieved_fmr
            );
            ensure!(
                got.achieved_fmr <= t,
                "case {case}: achieved {} > {t}",
                got.achieved_fmr
            );
            if let Some(p) = previous {
                ensure!(
                    got.value <= p,
                    "case {case}: threshold rose from {p} to {} as target grew",
                    got.value
                );
            }
            previous = Some(got.value);
        }
    }
    Ok(format!(
        "200 random score sets x {} targets match exhaustive search ({unattainable} unattainable cases agree)",
        targets.len()
    ))
}

fn random_grid(rng: &mut impl Rng, lo: f64, hi: f64) -> ScoreGrid {
    ScoreGrid::new(
        rng.random_range(lo..hi),
        rng.random_range(lo..hi),
        rng.random_range(lo..hi),
        rng.random_range(lo..hi),
    )
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    for i in 0..1000 {
        let b = random_grid(&mut rng, -1.0, 1.0);
        let q = random_grid(&mut rng, 0.0, 100.0);
        let (bs, qs) = (b.swap_outputs(), q.swap_outputs());
        let tau = rng.random_range(-0.5..0.9);
        let cond = ConditionParams {
            theta: rng.random_range(0.0..1.0),
            epsilon: rng.random_range(0.0..1.0),
        };
        let b_o1_o2: f64 = rng.random_range(-1.0..1.0);
        let (m1, m2) = b.matched(resolve_pairing(&b));
        let (s1, s2) = bs.matched(resolve_pairing(&bs));
        ensure!(
            paired_iqa(&q) == paired_iqa(&qs)
                && bw_iqa(&b, &q, false) == bw_iqa(&bs, &qs, false)
                && bw_iqa(&b, &q, true) == bw_iqa(&bs, &qs, true)
                && restored(m1, m2, tau) == restored(s1, s2, tau)
                && (m1.min(m2), m1.max(m2)) == (s1.min(s2), s1.max(s2))
                && check_demorph_conditions(b_o1_o2, &b, cond)
                    == check_demorph_conditions(b_o1_o2, &bs, cond),
            "grid {i}: swapping outputs changed a metric ({b:?}, {q:?})"
        );
    }

    // end to end on images and embeddings
    let metrics: [&dyn IqaMetric; 2] = [&Ssim(SsimParams::default()), &Psnr];
    let params = EvalParams {
        conditions: Some(ConditionParams {
            theta: 0.9,
            epsilon: 0.2,
        }),
        ..Default::default()
    };
    for i in 0..20 {
        let img = |rng: &mut ChaCha8Rng| {
            let px: Vec<u8> = (0..24 * 24).map(|_| rng.random()).collect();
            ImageBuffer::new(24, 24, 1, px).unwrap()
        };
        let emb = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            (0..16).map(|_| rng.random_range(-1.0..1.0)).collect()
        };
        let (g1, g2, o1, o2) = (img(&mut rng), img(&mut rng), img(&mut rng), img(&mut rng));
        let (e1, e2, f1, f2) = (emb(&mut rng), emb(&mut rng), emb(&mut rng), emb(&mut rng));
        let run = |outputs: [&ImageBuffer; 2], out_emb: [&[f64]; 2]| {
            evaluate(
                &EvaluationInputs {
                    morph_id: "m",
                    ground_truth: [&g1, &g2],
                    outputs,
                    ground_truth_embeddings: [&e1, &e2],
                    output_embeddings: out_emb,
                },
                &metrics,
                &params,
            )
        };
        let a = run([&o1, &o2], [&f1, &f2]).map_err(|e| e.to_string())?;
        let s = run([&o2, &o1], [&f2, &f1]).map_err(|e| e.to_string())?;
        let same = a.ra_pass == s.ra_pass
            && a.conditions == s.conditions
            && a.b_o1_o2 == s.b_o1_o2
            && a.iqa
                .iter()
                .all(|(k, v)| v.paired == s.iqa[k].paired && v.bw == s.iqa[k].bw);
        ensure!(same, "evaluation {i}: swapping outputs changed a metric");
    }
    Ok("1000 random score grids and 20 image/embedding sets: swapped outputs give identical metrics".into())
}

fn criterion_7() -> Outcome {
    let universe = ["a", "b", "c"];
    let set = |mask: u8| -> BTreeSet<String> {
        (0..3)
            .filter(|i| mask & (1 << i) != 0)
            .map(|i| universe[i].to_string())
            .collect()
    };
    let mut cases = 0;
    for train in 1u8..8 {
        for test in 1u8..8 {
            let expected = if test & !train == 0 {
                1
            } else if test & train == 0 {
                3
            } else {
                2
            };
            let got = classify_scenario(&ScenarioSplit {
                train_identities: set(train),
                test_identities: set(test),
            })
            .map_err(|e| e.to_string())?
            .number();
            ensure!(
                got == expected,
                "train {:?} test {:?}: got {got}, expected {expected}",
                set(train),
                set(test)
            );
            cases += 1;
        }
    }
    ensure!(cases == 49, "{cases} cases");
    Ok(format!(
        "{cases} (train, test) subset pairs match the set-relation oracle"
    ))
}

/// Crossover levels of the default seed, pinned from the first passing run.
const PINNED_CROSSOVER: [u32; 2] = [50, 60];

fn criterion_8() -> Outcome {
    let report = sanity_suite(&SanityConfig::new(0), None).map_err(|e| e.to_string())?;
    ensure!(report.epsilon == 0.3, "epsilon {}", report.epsilon);
    ensure!(report.passed(), "no crossover level for seed 0");
    ensure!(
        report.crossover_levels == PINNED_CROSSOVER,
        "crossover levels {:?} differ from pinned {PINNED_CROSSOVER:?}",
        report.crossover_levels
    );
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let status = |extra: &[&str]| -> Result<Option<i32>, String> {
        Command::new(env!("CARGO_BIN_EXE_demorph-bench"))
            .args(["sanity", "--seed", "0", "--out"])
            .arg(dir.path())
            .args(extra)
            .output()
            .map(|o| o.status.code())
            .map_err(|e| e.to_string())
    };
    let ok = status(&[])?;
    ensure!(ok == Some(0), "CLI sanity exit {ok:?}");
    ensure!(
        dir.path().join("sanity.json").is_file(),
        "sanity.json not written"
    );
    // epsilon 1 gates every identity weight to zero: no crossover possible
    let broken = status(&["--epsilon", "1.0"])?;
    ensure!(
        broken == Some(3),
        "CLI sanity without crossover exit {broken:?}"
    );
    Ok(format!(
        "crossover at sigma {:?} (epsilon 0.3); CLI exits 0, and 3 when no crossover exists",
        report.crossover_levels
    ))
}

fn evaluate_cli(root: &Path, threads: &str, out: &Path) -> Result<Vec<u8>, String> {
    let o = Command::new(env!("CARGO_BIN_EXE_demorph-bench"))
        .arg("evaluate")
        .arg("--manifest")
        .arg(root.join("manifest.jsonl"))
        .arg("--embeddings")
        .arg(root.join("embeddings.bemb"))
        .args([
            "--fmr",
            "0.10",
            "--tau",
            "0.4",
            "--format",
            "json",
            "--threads",
            threads,
            "--out",
        ])
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    ensure!(
        o.status.success(),
        "evaluate --threads {threads} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    std::fs::read(out).map_err(|e| e.to_string())
}

fn criterion_9(b: &Benchmark) -> Outcome {
    let one = evaluate_cli(&b.root, "1", &b.root.join("report_t1.json"))?;
    let eight = evaluate_cli(&b.root, "8", &b.root.join("report_t8.json"))?;
    ensure!(!one.is_empty(), "empty report");
    ensure!(one == eight, "1-thread and 8-thread reports differ");
    Ok(format!(
        "1-thread and 8-thread JSON reports byte-identical ({} bytes)",
        one.len()
    ))
}

fn main() {
    let bench = build_benchmark();
    let with_bench = |f: fn(&Benchmark) -> Outcome| -> Outcome {
        match &bench {
            Ok(b) => f(b),
            Err(e) => Err(format!("benchmark setup failed: {e}")),
        }
    };
    let results: Vec<(u32, &str, Outcome)> = vec![
        (1, "trivial-solution degeneracy", with_bench(criterion_1)),
        (
            2,
            "BW discriminates where TMR cannot",
            with_bench(criterion_2),
        ),
        (3, "SSIM oracle equivalence", criterion_3()),
        (4, "PSNR closed forms", criterion_4()),
        (5, "threshold calibration oracle", criterion_5()),
        (6, "permutation invariance", criterion_6()),
        (7, "scenario classifier", criterion_7()),
        (8, "sanity crossover", criterion_8()),
        (
            9,
            "determinism across thread counts",
            with_bench(criterion_9),
        ),
    ];
    let mut failed = HashSet::new();
    for (n, name, outcome) in &results {
        match outcome {
            Ok(detail) => println!("PASS criterion {n}: {name}: {detail}"),
            Err(why) => {
                println!("FAIL criterion {n}: {name}: {why}");
                failed.insert(*n);
            }
        }
    }
    println!(
        "acceptance: {} passed, {} failed",
        results.len() - failed.len(),
        failed.len()
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
