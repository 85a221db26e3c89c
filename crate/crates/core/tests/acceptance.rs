//! End-to-end acceptance checks. Each test prints one `criterion N: PASS|FAIL`
//! line to stdout (uncaptured) before asserting.

use std::collections::{BTreeMap, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Mutex, MutexGuard, OnceLock};
use std::time::{Duration, Instant};

use rand::Rng;
use roomparam::analysis::{position_rt60, rt60_from_curve, schroeder_from_energy};
use roomparam::eval::report::ABLATION_HEADER;
use roomparam::eval::{evaluate, fuse, group_by_room, predict_split, write_report, EvalReport, ParamGroup, RoomPredictions};
use roomparam::features::FeatureTensor;
use roomparam::geometry::{sabine_rt60_bands, RoomSpec, N_TARGETS, OCTAVE_BANDS};
use roomparam::neural::layers::Act;
use roomparam::neural::model::Input;
use roomparam::neural::train::examples_from_manifest;
use roomparam::neural::{gradient_check, nll_loss, train, ArchConfig, Estimate, Model, TrainConfig, TrainOutcome};
use roomparam::pipeline::dataset::{fit_spectrum, render_room, sample_rooms, simulate_room};
use roomparam::pipeline::noise::{stereo_power, MixtureComponents};
use roomparam::pipeline::{build_dataset, DatasetConfig, DatasetManifest, Split};
use roomparam::rng::{stream, Purpose};
use roomparam::sim::images::enumerate_images;
use roomparam::sim::specular::{delay_samples, specular_rir};
use roomparam::sim::{synthesize_rir, ArrayGeometry, SimConfig};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

const DESK_SEED: u64 = 11;

fn report(n: u32, pass: bool, elapsed: Duration, detail: &str) {
    let mut out = std::io::stdout().lock();
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(out, "criterion {n}: {verdict} [{:.1} s] {detail}", elapsed.as_secs_f64());
    let _ = out.flush();
}

/// Runs criteria one at a time so each runtime is measured without the
/// others competing for cores.
fn serial() -> MutexGuard<'static, ()> {
    static LOCK: Mutex<()> = Mutex::new(());
    LOCK.lock().unwrap_or_else(|e| e.into_inner())
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

#[test]
fn criterion_01_schroeder_rt60_exactness() {
    let _serial = serial();
    let t0 = Instant::now();
    let fs = 48_000.0;
    let mut worst: f64 = 0.0;
    let mut details = Vec::new();
    for t60 in [0.2, 0.5, 1.0, 2.0, 3.2] {
        // Energy falls 60 dB in t60 seconds; 2·t60 of signal keeps the
        // truncation tail 120 dB down.
        let n = (2.0 * t60 * fs) as usize;
        let energy: Vec<f64> = (0..n).map(|i| 10f64.powf(-6.0 * i as f64 / (t60 * fs))).collect();
        let fitted = rt60_from_curve(&schroeder_from_energy(&energy, fs).unwrap()).unwrap();
        let e = rel(fitted, t60);
        worst = worst.max(e);
        details.push(format!("{t60}→{fitted:.4}"));
    }
    let elapsed = t0.elapsed();
    let pass = worst <= 0.01 && elapsed < Duration::from_secs(1);
    report(1, pass, elapsed, &format!("worst relative error {worst:.2e}; {}", details.join(", ")));
    assert!(pass);
}

/// Every image reachable by at most `max_order` mirror reflections, keyed by
/// position rounded to 1 µm, with its smallest reflection count.
fn brute_force_images(dims: [f64; 3], src: [f64; 3], max_order: u32) -> HashMap<[i64; 3], u32> {
    let key = |p: &[f64; 3]| p.map(|v| (v * 1e6).round() as i64);
    let mut seen = HashMap::from([(key(&src), 0u32)]);
    let mut frontier = vec![(src, usize::MAX)];
    for depth in 1..=max_order {
        let mut next = Vec::new();
        for (p, last_wall) in &frontier {
            for wall in 0..6 {
                if wall == *last_wall {
                    continue;
                }
                let axis = wall / 2;
                let plane = if wall % 2 == 0 { 0.0 } else { dims[axis] };
                let mut q = *p;
                q[axis] = 2.0 * plane - q[axis];
                seen.entry(key(&q)).or_insert(depth);
                next.push((q, wall));
            }
        }
        frontier = next;
    }
    seen
}

#[test]
fn criterion_02_image_source_oracle() {
    let _serial = serial();
    let t0 = Instant::now();
    let dims = [4.0, 3.0, 2.5];
    let room = RoomSpec::uniform(dims, 0.2, 0.3);
    let src = [1.1, 0.7, 1.3];
    let mut ok = true;
    let mut counts = Vec::new();
    for order in 0..=3u32 {
        let oracle = brute_force_images(dims, src, order);
        let images = enumerate_images(&room, &src, order as i64).unwrap();
        let got: HashMap<[i64; 3], u32> = images
            .iter()
            .map(|im| (im.position.map(|v| (v * 1e6).round() as i64), im.order))
            .collect();
        ok &= got.len() == images.len() && got == oracle;
        ok &= images.iter().all(|im| im.hits.iter().sum::<u32>() == im.order);
        counts.push(format!("order ≤{order}: {} vs {}", images.len(), oracle.len()));
    }

    let (c, fs) = (343.0, 48_000.0);
    let delay = delay_samples(3.43, c, fs);
    let s = [0.5, 1.5, 1.25];
    let mic = [3.93, 1.5, 1.25];
    let direct = enumerate_images(&room, &s, 0).unwrap();
    let bands = specular_rir(&room, &direct, &mic, c, fs, 1024).unwrap();
    let peak = bands[3]
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .unwrap();
    ok &= (delay - 480.0).abs() < 1e-9 && peak == 480;

    let elapsed = t0.elapsed();
    let pass = ok && elapsed < Duration::from_secs(5);
    report(2, pass, elapsed, &format!("{}; direct delay {delay} samples, impulse peak at {peak}", counts.join(", ")));
    assert!(pass);
}

#[test]
fn criterion_03_hybrid_simulator_matches_sabine() {
    let _serial = serial();
    let t0 = Instant::now();
    let room = RoomSpec::uniform([7.0, 5.5, 3.2], 0.3, 0.9);
    let sabine = sabine_rt60_bands(&room).unwrap();
    let arrays = [
        ArrayGeometry { center: [4.6, 3.1, 1.5], azimuth: 0.3, source: [2.0, 1.8, 1.6] },
        ArrayGeometry { center: [2.4, 3.9, 1.3], azimuth: 2.2, source: [5.5, 1.4, 1.7] },
    ];
    let cfg = SimConfig::default();
    let measured: Vec<[Option<f64>; 6]> = arrays
        .iter()
        .enumerate()
        .map(|(k, a)| position_rt60(&synthesize_rir(&room, a, &cfg, &mut stream(3, Purpose::Diffuse, &[k as u64])).unwrap()))
        .collect();
    let mut ok = true;
    let mut details = Vec::new();
    for b in 2..6 {
        let vals: Vec<f64> = measured.iter().filter_map(|m| m[b]).collect();
        ok &= vals.len() == measured.len();
        let mean = vals.iter().sum::<f64>() / vals.len().max(1) as f64;
        let e = rel(mean, sabine[b]);
        ok &= e <= 0.25;
        details.push(format!("{} Hz {mean:.3}/{:.3} s ({:+.0}%)", OCTAVE_BANDS[b], sabine[b], 100.0 * (mean / sabine[b] - 1.0)));
    }
    let elapsed = t0.elapsed();
    let pass = ok && elapsed < Duration::from_secs(60);
    report(3, pass, elapsed, &format!("measured/Sabine: {}", details.join(", ")));
    assert!(pass);
}

#[test]
fn criterion_04_feature_shape_contract() {
    let _serial = serial();
    let t0 = Instant::now();
    let mut rng = stream(4, Purpose::Noise, &[]);
    let mut sig = || -> Vec<f64> { (0..48_000).map(|_| rng.random_range(-1.0..1.0)).collect() };
    let (l, r) = (sig(), sig());
    let f = FeatureTensor::from_channels(&l, &r).unwrap();
    let shapes = [(f.sc.rows, f.sc.cols), (f.ild.rows, f.ild.cols), (f.ipd.rows, f.ipd.cols)];
    let model = Model::new(ArchConfig::default(), 0).unwrap();
    let x = Input::from_features(&f);
    let emb = model.embedding(&x).unwrap().len();
    let est = model.forward(&x).unwrap();
    let outputs = est.mean.len() + est.var.len();
    let elapsed = t0.elapsed();
    let pass = shapes == [(769, 63), (769, 63), (1538, 63)] && emb == 1248 && outputs == 28 && elapsed < Duration::from_secs(1);
    report(4, pass, elapsed, &format!("SC/ILD/IPD {shapes:?}, embedding {emb}, outputs {outputs}"));
    assert!(pass);
}

/// Per-room fused variance for J = 1..=n, fusing the first J positions.
fn first_j_variances(room: &RoomPredictions) -> Vec<Vec<f64>> {
    (1..=room.positions.len()).map(|j| fuse(&room.positions[..j]).unwrap().variance()).collect()
}

fn strictly_decreasing(var_by_j: &[Vec<f64>]) -> bool {
    var_by_j.windows(2).all(|w| w[0].iter().zip(&w[1]).all(|(a, b)| b < a))
}

#[test]
fn criterion_05_loss_and_fusion_arithmetic() {
    let _serial = serial();
    let t0 = Instant::now();
    let one = |m: f64, v: f64| Estimate { mean: vec![m], var: vec![v] };
    let nll = [
        nll_loss(&one(0.0, 1.0), &[0.0]).unwrap(),
        nll_loss(&one(0.0, 1.0), &[1.0]).unwrap(),
        nll_loss(&one(0.0, 4.0), &[2.0]).unwrap(),
    ];
    let nll_expected = [0.0, 0.5, 0.5 * (4f64.ln() + 1.0)];
    let mut ok = nll.iter().zip(&nll_expected).all(|(a, b)| (a - b).abs() <= 1e-9);

    let f1 = fuse(&[one(1.0, 1.0), one(3.0, 1.0)]).unwrap();
    let f2 = fuse(&[one(0.0, 1.0), one(3.0, 2.0)]).unwrap();
    let single = fuse(&[one(2.5, 0.7)]).unwrap();
    ok &= (f1.mean[0] - 2.0).abs() <= 1e-9 && (f1.variance()[0] - 0.5).abs() <= 1e-9;
    ok &= (f2.mean[0] - 1.0).abs() <= 1e-9 && (f2.variance()[0] - 1.0 / 1.5).abs() <= 1e-9;
    ok &= (single.mean[0] - 2.5).abs() <= 1e-9 && (single.variance()[0] - 0.7).abs() <= 1e-9;

    // Random rooms with five position estimates each.
    let mut rng = stream(5, Purpose::Bootstrap, &[]);
    let rooms: Vec<RoomPredictions> = (0..30)
        .map(|id| RoomPredictions {
            room_id: id,
            truth: vec![1.0; N_TARGETS],
            positions: (0..5)
                .map(|_| Estimate {
                    mean: (0..N_TARGETS).map(|_| rng.random_range(0.0..2.0)).collect(),
                    var: (0..N_TARGETS).map(|_| rng.random_range(0.01..5.0)).collect(),
                })
                .collect(),
        })
        .collect();
    let rep = evaluate(&rooms, 5, &ArchConfig::default(), 5).unwrap();
    let monotone = rooms.iter().all(|r| strictly_decreasing(&first_j_variances(r)))
        && rep.room_variance.iter().all(|rv| strictly_decreasing(&rv.var));
    ok &= monotone;

    let elapsed = t0.elapsed();
    let pass = ok && elapsed < Duration::from_secs(1);
    report(
        5,
        pass,
        elapsed,
        &format!(
            "nll {:?}; fuse (1,3)/(1,1) → {:.4}/{:.4}, (0,3)/(1,2) → {:.4}/{:.4}; variance decreasing in J on {} rooms: {monotone}",
            nll.map(|v| (v * 1e4).round() / 1e4),
            f1.mean[0],
            f1.variance()[0],
            f2.mean[0],
            f2.variance()[0],
            rooms.len()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_06_gradient_correctness() {
    let _serial = serial();
    let t0 = Instant::now();
    let tiny = |use_ic: bool| ArchConfig {
        n_freq: 13,
        kernel: 3,
        sc_channels: 2,
        sc_hidden: 3,
        sc_dilations: vec![1, 2, 4],
        sc_pool: 4,
        ic_channels: 3,
        ic_hidden: 2,
        ic_dilations: vec![1],
        ic_pool: 3,
        dense: vec![5, 4],
        n_targets: 3,
        use_ic,
        ..ArchConfig::default()
    };
    let mut worst: f64 = 0.0;
    for (use_ic, seed) in [(true, 61u64), (false, 62)] {
        let (f, t) = (13, 6);
        let mut rng = stream(seed, Purpose::Noise, &[]);
        let mut plane = || -> Vec<f64> { (0..f * t).map(|_| rng.random_range(-1.0..1.0)).collect() };
        let sc: Vec<f64> = plane().iter().map(|v| 2.0 * v.abs() + 0.1).collect();
        let (a, b, c) = (plane(), plane(), plane());
        let x = Input { sc: Act::from_planes(&[&sc], f, t), ic: Act::from_planes(&[&a, &b, &c], f, t) };
        // Move every parameter off its initial value so norms' affine terms
        // and the variance head carry non-trivial gradients.
        let mut m = Model::new(tiny(use_ic), seed).unwrap();
        let mut p = stream(seed, Purpose::Init, &[9]);
        for tensor in &mut m.tensors {
            tensor.data.iter_mut().for_each(|v| *v += p.random_range(-0.3..0.3));
        }
        worst = worst.max(gradient_check(&m, &x, &[0.3, -0.8, 1.7], seed, 1e-5).unwrap());
    }
    let elapsed = t0.elapsed();
    let pass = worst < 1e-4 && elapsed < Duration::from_secs(60);
    report(6, pass, elapsed, &format!("max relative error {worst:.2e} over every parameter of both variants"));
    assert!(pass);
}

struct DeskData {
    _dir: tempfile::TempDir,
    root: PathBuf,
    manifest: DatasetManifest,
    built_in: Duration,
}

fn desk_data() -> &'static DeskData {
    static DATA: OnceLock<DeskData> = OnceLock::new();
    DATA.get_or_init(|| {
        let t0 = Instant::now();
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let cfg = DatasetConfig { rooms: 200, positions: 5, ..DatasetConfig::default() };
        let manifest = build_dataset(&cfg, DESK_SEED, &root).unwrap();
        DeskData { _dir: dir, root, manifest, built_in: t0.elapsed() }
    })
}

/// Desk training budget and seed for either variant.
fn desk_train(data: &DeskData, arch: ArchConfig) -> TrainOutcome {
    let tr = examples_from_manifest(&data.manifest, &data.root, Split::Train).unwrap();
    let va = examples_from_manifest(&data.manifest, &data.root, Split::Val).unwrap();
    let cfg = TrainConfig { arch, seed: DESK_SEED, ..TrainConfig::desk() };
    train(&tr, &va, &cfg, |_| {}).unwrap()
}

fn test_report(data: &DeskData, model: &Model) -> EvalReport {
    let preds = predict_split(model, &data.manifest, &data.root, Split::Test).unwrap();
    let rooms = group_by_room(&preds, &data.manifest).unwrap();
    evaluate(&rooms, 5, &model.arch, DESK_SEED).unwrap()
}

/// Group MAE of predicting the training-set target mean for every test room.
fn mean_baseline(data: &DeskData) -> [f64; 4] {
    let train: Vec<&Vec<f64>> = data.manifest.rooms.iter().filter(|r| r.split == Split::Train).map(|r| &r.targets).collect();
    let test: Vec<&Vec<f64>> = data.manifest.rooms.iter().filter(|r| r.split == Split::Test).map(|r| &r.targets).collect();
    let mean: Vec<f64> = (0..N_TARGETS).map(|i| train.iter().map(|t| t[i]).sum::<f64>() / train.len() as f64).collect();
    ParamGroup::ALL.map(|g| {
        let idx = g.indices();
        let n = (test.len() * idx.len()) as f64;
        test.iter().map(|t| idx.clone().map(|i| (t[i] - mean[i]).abs()).sum::<f64>()).sum::<f64>() / n
    })
}

fn fmt_groups(v: &[f64; 4]) -> String {
    format!("ᾱ {:.4}, RT60 {:.3} s, S {:.1} m², V {:.1} m³", v[0], v[1], v[2], v[3])
}

#[test]
fn criterion_07_08_desk_training_and_ablation() {
    let _serial = serial();
    let t0 = Instant::now();
    let data = desk_data();
    let outcome = desk_train(data, ArchConfig::desk());
    let full = test_report(data, &outcome.model);
    let trained_in = t0.elapsed();

    let v1 = outcome.log[0].val_nll;
    let best = outcome.log.iter().map(|e| e.val_nll).fold(f64::INFINITY, f64::min);
    let drop = (v1 - best) / v1.abs();
    let (j1, j5) = (full.point(1).unwrap().group_mae, full.point(5).unwrap().group_mae);
    let improved = (0..4).filter(|&g| j5[g] <= j1[g]).count();
    let var_monotone = full.room_variance.iter().all(|rv| strictly_decreasing(&rv.var));
    let pass7 = drop >= 0.20 && improved >= 3 && trained_in <= Duration::from_secs(3600);
    let curve: Vec<String> = outcome.log.iter().map(|e| format!("{:.2}", e.val_nll)).collect();
    report(
        7,
        pass7,
        trained_in,
        &format!(
            "dataset built in {:.0} s; val NLL {} (drop {:.1}% from epoch 1, best epoch {}); J=5 ≤ J=1 in {improved}/4 groups; \
             MAE J=1 [{}], J=5 [{}], training-mean baseline [{}]; fused variance decreasing on all {} test rooms: {var_monotone}",
            data.built_in.as_secs_f64(),
            curve.join(" "),
            100.0 * drop,
            outcome.best_epoch,
            fmt_groups(&j1),
            fmt_groups(&j5),
            fmt_groups(&mean_baseline(data)),
            full.n_rooms,
        ),
    );

    let t1 = Instant::now();
    let sc_only = desk_train(data, ArchConfig { use_ic: false, ..ArchConfig::desk() });
    let single = test_report(data, &sc_only.model);
    let out = tempfile::tempdir().unwrap();
    let written = write_report(out.path(), &[single, full]).unwrap();
    let csv = std::fs::read_to_string(out.path().join("ablation.csv")).unwrap();
    let md = std::fs::read_to_string(out.path().join("report.md")).unwrap();
    let header = format!("| {} |", ABLATION_HEADER.join(" | "));
    let table: Vec<&str> = md.lines().skip_while(|l| *l != header).take(4).collect();
    let rows_ok = table.len() == 4
        && table[2].starts_with("| 1mic, 1sig | SC | ")
        && table[3].starts_with("| 2mic, 1sig | SC+IC | ")
        && table[2..].iter().all(|l| l.matches(" ± ").count() == 4);
    let pass8 = written.len() == 8 && csv.lines().count() == 3 && rows_ok && !md.contains("NaN");
    report(8, pass8, t1.elapsed(), &format!("{} report files; ablation rows {}", written.len(), table.get(2..).unwrap_or_default().join(" ")));
    assert!(pass7, "desk-scale learning signal not reached");
    assert!(pass8, "ablation report malformed");
}

fn files_under(root: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

fn bits(outcome: &TrainOutcome) -> (Vec<[u64; 2]>, Vec<u64>) {
    let log = outcome.log.iter().map(|e| [e.train_nll.to_bits(), e.val_nll.to_bits()]).collect();
    let params = outcome.model.tensors.iter().flat_map(|t| t.data.iter().map(|v| v.to_bits())).collect();
    (log, params)
}

#[test]
fn criterion_09_pipeline_determinism() {
    let _serial = serial();
    let t0 = Instant::now();
    let cfg = DatasetConfig {
        rooms: 10,
        write_rirs: true,
        sim: SimConfig { n_rays: 500, max_order: 6, ..SimConfig::default() },
        ..DatasetConfig::default()
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = build_dataset(&cfg, 99, a.path()).unwrap();
    let mb = build_dataset(&cfg, 99, b.path()).unwrap();
    let (fa, fb) = (files_under(a.path()), files_under(b.path()));
    let n_rirs = fa.keys().filter(|p| p.starts_with("rirs") && p.extension().is_some_and(|e| e == "wav")).count();
    let n_mix = fa.keys().filter(|p| p.starts_with("mixtures")).count();
    let data_ok = ma == mb && fa == fb && n_rirs == 60 && n_mix == 50 && fa.contains_key(Path::new("manifest.jsonl"));

    let tr = examples_from_manifest(&ma, a.path(), Split::Train).unwrap();
    let va = examples_from_manifest(&ma, a.path(), Split::Val).unwrap();
    let tc = TrainConfig { max_epochs: 2, ..TrainConfig::desk() };
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        bits(&pool.install(|| train(&tr, &va, &tc, |_| {}).unwrap()))
    };
    let (r1, r2, r3) = (run(1), run(1), run(3));
    let train_ok = r1 == r2 && r1 == r3;

    let elapsed = t0.elapsed();
    let pass = data_ok && train_ok;
    report(
        9,
        pass,
        elapsed,
        &format!(
            "{} files ({n_rirs} RIR WAVs, {n_mix} mixtures) byte-identical: {}; training curves and weights bit-identical over 2 single-thread runs and a 3-thread run: {train_ok}",
            fa.len(),
            data_ok
        ),
    );
    assert!(pass);
}

/// Least-squares slope of `y` against `x`.
fn slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (mx, my) = (points.iter().map(|p| p.0).sum::<f64>() / n, points.iter().map(|p| p.1).sum::<f64>() / n);
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    sxy / sxx
}

#[test]
fn criterion_10_snr_calibration_closure() {
    let _serial = serial();
    let t0 = Instant::now();
    let cfg = DatasetConfig { rooms: 40, ..DatasetConfig::default() };
    let seed = 10;
    let speech = cfg.speech_source(seed).unwrap();
    let model = fit_spectrum(&speech, cfg.spectrum_clips).unwrap();
    let mut worst_closure: f64 = 0.0;
    let mut negative_slopes = 0;
    let (mut beyond_ref, mut below_ref) = (0, 0);
    let mut noise_fixed = true;
    let rooms = sample_rooms(&cfg, seed);
    for room in &rooms {
        let rirs = simulate_room(room, cfg.positions, &cfg.sim).unwrap();
        let r = render_room(room, Split::Train, &rirs, &speech, &model, &cfg.snr).unwrap();
        worst_closure = worst_closure
            .max((r.reference.snr_static_db() - r.gains.snr_static_db).abs())
            .max((r.reference.snr_diffuse_db() - r.gains.snr_diffuse_db).abs());
        let ref_snr = r.reference.snr_db();
        // SNR against log distance over the 1 m reference and every position.
        let mut pts = vec![(0.0, ref_snr)];
        for m in &r.mixtures {
            pts.push((m.distance_m.log10(), m.components.snr_db()));
            if m.distance_m > 1.0 {
                beyond_ref += 1;
                below_ref += usize::from(m.components.snr_db() < ref_snr);
            }
        }
        negative_slopes += usize::from(slope(&pts) < 0.0);
        let noise_power = |c: &MixtureComponents| stereo_power(&c.static_noise);
        let p0 = noise_power(&r.reference);
        noise_fixed &= r.mixtures.iter().all(|m| rel(noise_power(&m.components), p0) < 0.05);
    }
    let elapsed = t0.elapsed();
    let pass = worst_closure <= 0.1 && negative_slopes == rooms.len() && noise_fixed && elapsed < Duration::from_secs(120);
    report(
        10,
        pass,
        elapsed,
        &format!(
            "worst reference closure error {worst_closure:.2e} dB; SNR falls with log distance in {negative_slopes}/{} rooms; \
             {below_ref}/{beyond_ref} positions beyond 1 m are below the reference SNR",
            rooms.len()
        ),
    );
    assert!(pass);
}
