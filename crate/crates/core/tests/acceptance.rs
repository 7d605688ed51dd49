//! Acceptance suite: one test per criterion, each printing a `[PASS]`/`[FAIL]` line.
//!
//! Tests hold a shared lock so the timed criteria are not slowed by the long
//! benchmark runs. Criteria 6 to 8 share one training grid on the default benchmark.

mod common;

use std::fs;
use std::io::Write;
use std::path::Path;
use std::process::Command;
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::Instant;

use common::*;
use softcheck::config::RunConfig;
use softcheck::experiment::{run_grid, sweep_checksums, SweepCell};
use softcheck::loss::{loss_checksum, loss_id, loss_ood, loss_prediction, LossConfig};
use softcheck::network::init_params;
use softcheck::rng::SeededRng;
use softcheck::{
    calibrate_threshold, fnr99, sample_shell, synth_generate, train, Activation, ChecksumSpec,
    Hypercube, LabeledDataset, LossVariant, Matrix, ModelFile, NormStat, Partition, ShellSpec,
    SynthSpec, TrainConfig,
};

static SERIAL: Mutex<()> = Mutex::new(());

fn serial() -> MutexGuard<'static, ()> {
    SERIAL.lock().unwrap_or_else(|e| e.into_inner())
}

/// Writes past the test harness capture so every verdict shows in the log.
fn verdict(n: u32, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[{tag}] criterion {n}: {detail}");
}

fn note(line: &str) {
    let _ = writeln!(std::io::stderr(), "    {line}");
}

#[test]
fn criterion_01_gradients_match_finite_differences() {
    let _g = serial();
    let start = Instant::now();
    let specs = [ChecksumSpec::Linear, ChecksumSpec::Sinusoid { w: 1e-4 }, ChecksumSpec::Sinusoid { w: 1.3 }];
    let mut rng = SeededRng::new(2024);
    let mut worst: f64 = 0.0;
    let mut networks = 0;
    while networks < 24 {
        let d = 1 + rng.index(4);
        let k = 1 + rng.index(3);
        let hidden = 1 + rng.index(8);
        let p = random_network(&mut rng, d, hidden, k);
        let m = 2 + rng.index(5);
        let mo = 2 + rng.index(5);
        let x = random_matrix(&mut rng, m, d, 2.0);
        let y = random_matrix(&mut rng, m, k, 1.5);
        let xo = random_matrix(&mut rng, mo, d, 3.0);
        if min_abs_output_sum(&p, &x) < 1e-3 || min_abs_output_sum(&p, &xo) < 1e-3 {
            continue;
        }
        networks += 1;
        for variant in LossVariant::ALL {
            let cfg = LossConfig::for_variant(variant);
            let xo_ref = cfg.use_ood_term.then_some(&xo);
            for spec in &specs {
                let (_, grads) = p.backward(&x, &y, xo_ref, spec, &cfg).unwrap();
                let fd = fd_gradient(&p, &x, &y, xo_ref, spec, &cfg, 1e-5);
                worst = worst.max(max_relative_error(&grads.flatten(), &fd));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst < 1e-4 && secs < 60.0;
    verdict(
        1,
        pass,
        &format!("{networks} networks x 4 variants x 3 checksums, max rel err {worst:.3e} (< 1e-4), {secs:.2}s"),
    );
    assert!(pass);
}

#[test]
fn criterion_02_loss_terms_match_loop_oracle() {
    let _g = serial();
    let mut rng = SeededRng::new(77);
    let mut worst: f64 = 0.0;
    let mut rel = |a: f64, b: f64| worst = worst.max((a - b).abs() / b.abs().max(1.0));
    for trial in 0..500 {
        let m = 1 + rng.index(32);
        let k = 1 + rng.index(10);
        let spec = if trial % 2 == 0 { ChecksumSpec::Linear } else { ChecksumSpec::Sinusoid { w: rng.range(1e-4, 2.0) } };
        let y = random_matrix(&mut rng, m, k, 3.0);
        let yh = random_matrix(&mut rng, m, k, 3.0);
        let ch: Vec<f64> = (0..m).map(|_| rng.range(-5.0, 5.0)).collect();
        let lam = rng.range(1e-3, 1.0);
        rel(loss_prediction(&y, &yh).unwrap(), oracle_prediction(&y, &yh));
        rel(loss_checksum(&y, &ch, &spec).unwrap(), oracle_checksum(&spec, &y, &ch));
        rel(loss_id(&yh, &ch, &spec, lam).unwrap(), oracle_id(&spec, &yh, &ch, lam));
        rel(loss_ood(&yh, &ch, &spec, lam, 1e-8).unwrap(), oracle_ood(&spec, &yh, &ch, lam, 1e-8));
    }
    // The checksum term carries 1/k; the ID term does not.
    let y = Matrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
    let scaled = loss_checksum(&y, &[4.0], &ChecksumSpec::Linear).unwrap() == 4.0 / 3.0;
    let unscaled = loss_id(&y, &[4.0], &ChecksumSpec::Linear, 1.0).unwrap() == 4.0;
    let pass = worst <= 1e-12 && scaled && unscaled;
    verdict(
        2,
        pass,
        &format!("500 random batches, max deviation {worst:.3e} (<= 1e-12); 1/k on checksum term: {scaled}; none on ID term: {unscaled}"),
    );
    assert!(pass);
}

#[test]
fn criterion_03_threshold_calibration() {
    let _g = serial();
    let mut rng = SeededRng::new(31);
    let mut failures = Vec::new();
    for list in 0..1000 {
        let n = 1 + rng.index(400);
        let ties = rng.index(3) == 0;
        let draw = |rng: &mut SeededRng| if ties { rng.index(6) as f64 } else { rng.uniform() * 10.0 };
        let val: Vec<f64> = (0..n).map(|_| draw(&mut rng)).collect();
        let ood: Vec<f64> = (0..1 + rng.index(200)).map(|_| draw(&mut rng)).collect();
        let t = calibrate_threshold(&val, 0.99).unwrap();
        let trusted = val.iter().filter(|&&e| e <= t).count();
        // smallest observed value that keeps at least 99% at or below it
        let brute = val
            .iter()
            .copied()
            .filter(|&c| val.iter().filter(|&&e| e <= c).count() as f64 / n as f64 >= 0.99)
            .fold(f64::INFINITY, f64::min);
        let missed = ood.iter().filter(|&&e| e <= t).count() as f64 / ood.len() as f64;
        if (trusted as f64 / n as f64) < 0.99 || t != brute || fnr99(&ood, t).unwrap() != missed {
            failures.push(list);
        }
    }
    let pass = failures.is_empty();
    verdict(3, pass, &format!("1000 random lists, {} mismatches against brute force", failures.len()));
    assert!(pass, "failing lists: {failures:?}");
}

#[test]
fn criterion_04_shell_sampler() {
    let _g = serial();
    let mut rng = SeededRng::new(404);
    let (mut total, mut bad) = (0, 0);
    let mut max_d = 0;
    while total < 10_000 {
        let d = if total == 0 { 87 } else { 1 + rng.index(87) };
        max_d = max_d.max(d);
        let mins: Vec<f64> = (0..d).map(|_| rng.range(-100.0, 100.0)).collect();
        let maxs: Vec<f64> = mins.iter().map(|m| m + rng.range(1e-2, 50.0)).collect();
        let cube = Hypercube { mins: mins.clone(), maxs: maxs.clone() };
        let pts = sample_shell(&cube, &ShellSpec::new(500, rng.next_u64())).unwrap();
        for p in pts.iter_rows() {
            let mut e: f64 = 0.0;
            let mut outside = false;
            for i in 0..d {
                let r = maxs[i] - mins[i];
                e = e.max((mins[i] - p[i]) / r).max((p[i] - maxs[i]) / r);
                outside |= p[i] < mins[i] || p[i] > maxs[i];
            }
            if !(0.20..=0.25).contains(&e) || !outside {
                bad += 1;
            }
        }
        total += pts.rows();
    }
    let pass = bad == 0;
    verdict(4, pass, &format!("{total} samples over random boxes up to d={max_d}, {bad} outside the 20-25% shell"));
    assert!(pass);
}

#[test]
fn criterion_05_overfits_a_tiny_set() {
    let _g = serial();
    let start = Instant::now();
    let spec = SynthSpec { n_id: 8, n_ood: 1, ..SynthSpec::default() };
    let data = synth_generate(&spec).unwrap().filter(Partition::Unsplit);
    let cfg = TrainConfig {
        epochs: 2000,
        batch_size: 8,
        seed: 5,
        loss: LossConfig::for_variant(LossVariant::Base),
        ..TrainConfig::default()
    };
    let (params, history) = train(&cfg, &data, &data).unwrap();
    let out = params.forward(data.inputs()).unwrap();
    let l_pred = loss_prediction(&params.normalize_targets(data.targets()), &out.y_hat).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let pass = l_pred < 1e-3 && secs < 60.0;
    verdict(
        5,
        pass,
        &format!("8 samples, {} epochs: loss_prediction {l_pred:.3e} (< 1e-3), {secs:.1}s", history.records.len()),
    );
    assert!(pass);
}

const BENCH_SEEDS: usize = 5;

fn benchmark_grid() -> &'static Vec<SweepCell> {
    static GRID: OnceLock<Vec<SweepCell>> = OnceLock::new();
    GRID.get_or_init(|| {
        let cfg = RunConfig::from_toml("seed = 1\n[data.synth]\n", Path::new(".")).unwrap();
        let start = Instant::now();
        let cells = run_grid(
            &cfg,
            &[LossVariant::Base, LossVariant::BaseOod],
            &sweep_checksums(&cfg),
            BENCH_SEEDS,
            |_| {},
        )
        .unwrap();
        note(&format!("benchmark grid: {} training runs in {:.0}s", cells.len(), start.elapsed().as_secs_f64()));
        cells
    })
}

fn cells_for<'a>(variant: LossVariant, checksum: &str) -> Vec<&'a SweepCell> {
    benchmark_grid()
        .iter()
        .filter(|c| c.variant == variant && c.checksum.name() == checksum)
        .collect()
}

fn fnrs(cells: &[&SweepCell]) -> Vec<f64> {
    cells.iter().map(|c| c.fnr99().expect("training run failed")).collect()
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>().join(", ")
}

#[test]
fn criterion_06_base_variant_separates() {
    let _g = serial();
    let mut pass = true;
    let mut parts = Vec::new();
    for cs in ["linear", "sinusoid"] {
        let v = fnrs(&cells_for(LossVariant::Base, cs));
        let m = mean(&v);
        pass &= m < 0.50;
        parts.push(format!("{cs} mean FNR99 {m:.4} [{}]", fmt_list(&v)));
    }
    verdict(6, pass, &format!("base variant, {BENCH_SEEDS} seeds, need < 0.50: {}", parts.join("; ")));
    assert!(pass);
}

#[test]
fn criterion_07_ood_exposure_does_not_hurt() {
    let _g = serial();
    let mut pass = true;
    let mut parts = Vec::new();
    for cs in ["linear", "sinusoid"] {
        let without = fnrs(&cells_for(LossVariant::Base, cs));
        let with = fnrs(&cells_for(LossVariant::BaseOod, cs));
        for (a, b) in cells_for(LossVariant::Base, cs).iter().zip(cells_for(LossVariant::BaseOod, cs)) {
            assert_eq!(a.seed, b.seed, "seeds must be paired");
        }
        pass &= mean(&with) <= mean(&without);
        parts.push(format!("{cs} {:.4} with vs {:.4} without", mean(&with), mean(&without)));
        note(&format!("{cs} base     per seed: {}", fmt_list(&without)));
        note(&format!("{cs} base+ood per seed: {}", fmt_list(&with)));
    }
    verdict(7, pass, &format!("mean FNR99 over {BENCH_SEEDS} paired seeds: {}", parts.join("; ")));
    assert!(pass);
}

#[test]
fn criterion_08_checksum_error_tracks_prediction_error() {
    let _g = serial();
    let mut pass = true;
    let mut parts = Vec::new();
    for cs in ["linear", "sinusoid"] {
        let rs: Vec<f64> = cells_for(LossVariant::BaseOod, cs)
            .iter()
            .map(|c| {
                let report = c.outcome.as_ref().expect("training run failed");
                report.pearson_r.unwrap_or(f64::NAN)
            })
            .collect();
        let ok = rs.iter().all(|&r| r > 0.0) && mean(&rs) > 0.2;
        pass &= ok;
        parts.push(format!("{cs} mean r {:.4} [{}]", mean(&rs), fmt_list(&rs)));
    }
    verdict(8, pass, &format!("base+ood, every r > 0 and mean > 0.2: {}", parts.join("; ")));
    assert!(pass);
}

const DETERMINISM_CONFIG: &str = r#"
seed = 11
loss_variant = "base+ood"

[data.synth]
n_id = 600
n_ood = 300

[checksum]
kind = "sinusoid"

[train]
epochs = 8
hidden = [32, 32]
"#;

fn cli(args: &[&str]) {
    let out = Command::new(env!("CARGO_BIN_EXE_softcheck")).args(args).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn run_pipeline(cfg: &Path, out: &Path) {
    let (c, o) = (cfg.to_str().unwrap(), out.to_str().unwrap());
    cli(&["generate", "--config", c, "--out", o]);
    cli(&["train", "--config", c, "--out", o]);
    cli(&["evaluate", "--config", c, "--out", o]);
}

#[test]
fn criterion_09_pipeline_is_deterministic() {
    let _g = serial();
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.toml");
    fs::write(&cfg, DETERMINISM_CONFIG).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    run_pipeline(&cfg, &a);
    run_pipeline(&cfg, &b);
    let artifacts = ["dataset.csv", "model.json", "history.csv", "dataset_split.csv", "report.json", "scatter.csv"];
    let differing: Vec<&str> = artifacts
        .iter()
        .copied()
        .filter(|f| fs::read(a.join(f)).unwrap() != fs::read(b.join(f)).unwrap())
        .collect();
    let pass = differing.is_empty();
    verdict(9, pass, &format!("generate/train/evaluate rerun: {} artifacts compared, differing: {differing:?}", artifacts.len()));
    assert!(pass);
}

fn random_finite(rng: &mut SeededRng) -> f64 {
    match rng.index(4) {
        0 => loop {
            let v = f64::from_bits(rng.next_u64());
            if v.is_finite() {
                break v;
            }
        },
        1 => rng.normal(),
        2 => [0.0, -0.0, f64::MIN_POSITIVE, 5e-324, f64::MAX, -f64::MAX, 0.1, 1.0 / 3.0][rng.index(8)],
        _ => rng.range(-1e6, 1e6),
    }
}

fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}

fn norm_bits(n: &[NormStat]) -> Vec<(u64, u64)> {
    n.iter().map(|s| (s.mean.to_bits(), s.scale.to_bits())).collect()
}

#[test]
fn criterion_10_round_trips_are_bit_exact() {
    let _g = serial();
    let mut rng = SeededRng::new(1010);
    let dir = tempfile::tempdir().unwrap();
    let tags = [Partition::Train, Partition::Validation, Partition::Ood, Partition::Unsplit];
    let (mut csv_bad, mut model_bad) = (0, 0);
    for trial in 0..100 {
        let (n, d, k) = (1 + rng.index(40), 1 + rng.index(10), 1 + rng.index(10));
        let x: Vec<f64> = (0..n * d).map(|_| random_finite(&mut rng)).collect();
        let y: Vec<f64> = (0..n * k).map(|_| random_finite(&mut rng)).collect();
        let part: Vec<Partition> = (0..n).map(|_| tags[rng.index(4)]).collect();
        let ds = LabeledDataset::new(Matrix::from_vec(n, d, x).unwrap(), Matrix::from_vec(n, k, y).unwrap(), part).unwrap();
        let path = dir.path().join(format!("d{trial}.csv"));
        ds.save_csv(&path).unwrap();
        let back = LabeledDataset::load_csv(&path).unwrap();
        if bits(back.inputs().as_slice()) != bits(ds.inputs().as_slice())
            || bits(back.targets().as_slice()) != bits(ds.targets().as_slice())
            || back.partition() != ds.partition()
        {
            csv_bad += 1;
        }

        let mut dims = vec![1 + rng.index(6)];
        for _ in 0..rng.index(3) {
            dims.push(1 + rng.index(9));
        }
        dims.push(2 + rng.index(5));
        let mut params = init_params(&dims, [Activation::Tanh, Activation::Relu][rng.index(2)], rng.next_u64()).unwrap();
        for i in 0..params.param_count() {
            *params.param_mut(i) = random_finite(&mut rng);
        }
        for s in params.input_norm.iter_mut().chain(params.output_norm.iter_mut()) {
            *s = NormStat { mean: random_finite(&mut rng), scale: rng.range(1e-3, 1e3) };
        }
        let checksum = if rng.index(2) == 0 { ChecksumSpec::Linear } else { ChecksumSpec::Sinusoid { w: rng.range(1e-6, 10.0) } };
        let file = ModelFile::new(params, checksum);
        let mpath = dir.path().join(format!("m{trial}.json"));
        file.save(&mpath).unwrap();
        let loaded = ModelFile::load(&mpath).unwrap();
        let flat = |m: &ModelFile| (0..m.params.param_count()).map(|i| m.params.param(i).to_bits()).collect::<Vec<_>>();
        let w_bits = |c: &ChecksumSpec| match c {
            ChecksumSpec::Linear => None,
            ChecksumSpec::Sinusoid { w } => Some(w.to_bits()),
        };
        if flat(&loaded) != flat(&file)
            || norm_bits(&loaded.params.input_norm) != norm_bits(&file.params.input_norm)
            || norm_bits(&loaded.params.output_norm) != norm_bits(&file.params.output_norm)
            || loaded.params.layer_dims != file.params.layer_dims
            || loaded.params.activation != file.params.activation
            || w_bits(&loaded.checksum) != w_bits(&file.checksum)
        {
            model_bad += 1;
        }
    }
    let pass = csv_bad == 0 && model_bad == 0;
    verdict(10, pass, &format!("100 random datasets ({csv_bad} inexact) and 100 random models ({model_bad} inexact)"));
    assert!(pass);
}
