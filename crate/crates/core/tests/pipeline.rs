use std::collections::{HashMap, HashSet};

use roomparam::dsp::{power, welch_psd};
use roomparam::geometry::RoomSpec;
use roomparam::pipeline::dataset::{build_dataset, render_room, simulate_room, DatasetConfig};
use roomparam::pipeline::noise::{diffuse_babble, speech_shaped_noise, stereo_power, SnrRanges};
use roomparam::pipeline::{Split, SpeechSource, MIX_FS};
use roomparam::rng::{stream, Purpose};
use roomparam::sim::{synthesize_rir, ArrayGeometry, SimConfig};

/// Mean of a one-sided PSD inside third-octave bands from 100 Hz to 7 kHz, dB.
fn third_octave_levels(psd: &[f64], fs: f64) -> Vec<f64> {
    let nfft = 2 * (psd.len() - 1);
    let df = fs / nfft as f64;
    let mut out = Vec::new();
    let mut fc: f64 = 125.0;
    while fc * 2f64.powf(1.0 / 6.0) <= 7000.0 {
        let (lo, hi) = (fc * 2f64.powf(-1.0 / 6.0), fc * 2f64.powf(1.0 / 6.0));
        let bins: Vec<f64> = psd
            .iter()
            .enumerate()
            .filter(|(k, _)| {
                let f = *k as f64 * df;
                f >= lo && f < hi
            })
            .map(|(_, p)| *p)
            .collect();
        if !bins.is_empty() {
            out.push(10.0 * (bins.iter().sum::<f64>() / bins.len() as f64).log10());
        }
        fc *= 2f64.powf(1.0 / 3.0);
    }
    out
}

#[test]
fn speech_shaped_noise_follows_corpus_spectrum() {
    let speech = SpeechSource::Synthetic { seed: 11 };
    let clips = speech.spectrum_clips(32).unwrap();
    let model = roomparam::pipeline::SpeechSpectrumModel::fit(&clips).unwrap();
    let noise = speech_shaped_noise(&model, 20 * MIX_FS as usize, &mut stream(1, Purpose::Noise, &[])).unwrap();
    let corpus = welch_psd(clips.iter().map(|c| c.samples.as_slice()), 512).unwrap();
    let generated = welch_psd([noise.as_slice()], 512).unwrap();
    let a = third_octave_levels(&corpus, 16_000.0);
    let b = third_octave_levels(&generated, 16_000.0);
    // Both signals have unit power; compare shapes after removing the mean offset.
    let offset = a.iter().zip(&b).map(|(x, y)| x - y).sum::<f64>() / a.len() as f64;
    for (i, (x, y)) in a.iter().zip(&b).enumerate() {
        assert!((x - y - offset).abs() <= 3.0, "band {i}: corpus {x:.1} dB, noise {y:.1} dB");
    }
}

#[test]
fn babble_is_balanced_at_a_central_receiver() {
    let room = RoomSpec::uniform([6.0, 5.0, 3.0], 0.25, 0.7);
    let array = ArrayGeometry { center: [3.0, 2.5, 1.5], azimuth: 0.4, source: [1.5, 1.2, 1.4] };
    let cfg = SimConfig { n_rays: 1000, ..SimConfig::default() };
    let rir = synthesize_rir(&room, &array, &cfg, &mut stream(2, Purpose::Diffuse, &[])).unwrap().to_16k().unwrap();
    let speech = SpeechSource::Synthetic { seed: 3 };
    let model = roomparam::pipeline::SpeechSpectrumModel::fit(&speech.spectrum_clips(8).unwrap()).unwrap();
    let noise = speech_shaped_noise(&model, 48_000, &mut stream(4, Purpose::Noise, &[])).unwrap();
    let y = diffuse_babble(&noise, &rir).unwrap();
    let ratio = 10.0 * (power(&y[0]) / power(&y[1])).log10();
    assert!(ratio.abs() < 3.0, "{ratio} dB");
    // Output starts no earlier than 50 ms after the direct path.
    let onset = (rir.direct_delay()[0] + 0.05 * 16_000.0).floor() as usize;
    let peak = y[0].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    assert!(y[0][..onset].iter().all(|v| v.abs() < 1e-9 * peak));
    let corr = y[0].iter().zip(&y[1]).map(|(a, b)| a * b).sum::<f64>() / (48_000.0 * (power(&y[0]) * power(&y[1])).sqrt());
    assert!(corr.abs() > 0.02, "diffuse channels should be correlated, got {corr}");
}

#[test]
fn farther_positions_have_lower_snr() {
    let room = roomparam::geometry::sample_indexed_room(5, 0, &Default::default());
    let cfg = SimConfig { n_rays: 800, ..SimConfig::default() };
    let rirs = simulate_room(&room, 5, &cfg).unwrap();
    let speech = SpeechSource::Synthetic { seed: 5 };
    let model = roomparam::pipeline::SpeechSpectrumModel::fit(&speech.spectrum_clips(8).unwrap()).unwrap();
    let rendered = render_room(&room, Split::Train, &rirs, &speech, &model, &SnrRanges::default()).unwrap();
    let (gains, mixes) = (rendered.gains, rendered.mixtures);
    for m in &mixes {
        assert!(m.distance_m > 1.0 || m.components.snr_diffuse_db() > gains.snr_diffuse_db - 10.0);
        if m.distance_m > 2.0 {
            assert!(m.components.snr_diffuse_db() < gains.snr_diffuse_db, "{} m", m.distance_m);
        }
        assert!(stereo_power(&m.components.mixture()).is_finite());
    }
}

fn small_config() -> DatasetConfig {
    DatasetConfig {
        rooms: 20,
        sim: SimConfig { n_rays: 400, max_order: 6, ..SimConfig::default() },
        spectrum_clips: 8,
        ..DatasetConfig::default()
    }
}

#[test]
fn dataset_is_complete_disjoint_and_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let m = build_dataset(&cfg, 42, a.path()).unwrap();
    assert_eq!(m.mixtures.len(), 100);
    assert_eq!(m.rooms.len(), 20);

    let mut room_split: HashMap<u64, Split> = HashMap::new();
    let mut clip_split: HashMap<String, Split> = HashMap::new();
    for mix in &m.mixtures {
        assert_eq!(*room_split.entry(mix.room_id).or_insert(mix.split), mix.split);
        assert_eq!(*clip_split.entry(mix.clip_id.clone()).or_insert(mix.split), mix.split);
        let x = roomparam::pipeline::dataset::read_mixture(&a.path().join(&mix.wav_path)).unwrap();
        assert_eq!(x[0].len(), 48_000);
        assert!(x.iter().flatten().all(|v| v.is_finite()));
    }
    let rooms_per_split: Vec<usize> = Split::ALL
        .iter()
        .map(|s| room_split.values().filter(|v| *v == s).count())
        .collect();
    assert_eq!(rooms_per_split, vec![16, 2, 2]);
    let ids: HashSet<_> = m.mixtures.iter().map(|x| &x.mix_id).collect();
    assert_eq!(ids.len(), 100);

    build_dataset(&cfg, 42, b.path()).unwrap();
    let read = |d: &std::path::Path| std::fs::read(d.join("manifest.jsonl")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
    let reread = roomparam::pipeline::DatasetManifest::read(&a.path().join("manifest.jsonl")).unwrap();
    assert_eq!(reread, m);
}
