//! Dataset assembly: rooms, responses, annotations, mixtures and manifest.

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::room_rt60;
use crate::error::{Error, Result};
use crate::geometry::{annotate_room, sample_indexed_room, AbsorptionRanges, RoomAnnotation, RoomSpec, N_TARGETS};
use crate::io::{read_json, read_jsonl, read_wav, write_json, write_jsonl, write_wav};
use crate::rng::{stream, Purpose};
use crate::sim::{sample_array, sample_reference_array, synthesize_rir, Rir, RirMeta, SimConfig};

use super::noise::{
    calibrate_noise_gains, diffuse_babble, speech_shaped_noise, static_noise, MixtureComponents, NoiseGains, SnrRanges,
    SpeechSpectrumModel,
};
use super::speech::{wet_speech, CorpusPools, SpeechSource};
use super::{Split, MIX_FS, MIX_LEN};

/// Dataset generation settings, read from TOML.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub rooms: usize,
    pub positions: usize,
    /// Directory of WAV speech; synthetic speech when absent.
    pub corpus_dir: Option<PathBuf>,
    /// Train, validation and test fractions of the rooms.
    pub split_fractions: [f64; 3],
    /// Clips averaged for the speech spectrum model.
    pub spectrum_clips: usize,
    /// Keep the simulated responses next to the mixtures.
    pub write_rirs: bool,
    pub snr: SnrRanges,
    pub absorption: AbsorptionRanges,
    pub sim: SimConfig,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            rooms: 200,
            positions: 5,
            corpus_dir: None,
            split_fractions: [0.8, 0.1, 0.1],
            spectrum_clips: 32,
            write_rirs: false,
            snr: SnrRanges::default(),
            absorption: AbsorptionRanges::default(),
            sim: SimConfig::default(),
        }
    }
}

impl DatasetConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rooms == 0 || self.positions == 0 {
            return Err(Error::Config("rooms and positions must be positive".into()));
        }
        let f = self.split_fractions;
        if f.iter().any(|v| !(*v >= 0.0)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions {f:?} must be non-negative and sum to 1")));
        }
        if self.spectrum_clips == 0 {
            return Err(Error::Config("spectrum_clips must be positive".into()));
        }
        self.snr.validate()?;
        self.absorption.validate()?;
        Ok(())
    }

    /// Speech source for this configuration.
    pub fn speech_source(&self, master_seed: u64) -> Result<SpeechSource> {
        Ok(match &self.corpus_dir {
            Some(dir) => SpeechSource::Corpus(CorpusPools::open(dir, master_seed)?),
            None => SpeechSource::Synthetic { seed: master_seed },
        })
    }
}

/// Split of every room index: a seeded shuffle cut by the configured fractions.
pub fn assign_splits(n_rooms: usize, fractions: [f64; 3], master_seed: u64) -> Vec<Split> {
    let mut order: Vec<usize> = (0..n_rooms).collect();
    order.shuffle(&mut stream(master_seed, Purpose::Split, &[0]));
    let n_train = (fractions[0] * n_rooms as f64).round() as usize;
    let n_val = ((fractions[1] * n_rooms as f64).round() as usize).min(n_rooms - n_train.min(n_rooms));
    let mut out = vec![Split::Test; n_rooms];
    for (rank, &room) in order.iter().enumerate() {
        out[room] = if rank < n_train {
            Split::Train
        } else if rank < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    out
}

/// Responses of one room at 48 kHz.
#[derive(Debug, Clone, PartialEq)]
pub struct RoomRirs {
    pub reference: Rir,
    pub positions: Vec<Rir>,
}

/// Draws the receiver/source placements and simulates every response.
pub fn simulate_room(room: &RoomSpec, positions: usize, sim: &SimConfig) -> Result<RoomRirs> {
    let mut place = stream(room.seed, Purpose::Positions, &[]);
    let arrays = (0..positions).map(|_| sample_array(room, &mut place)).collect::<Result<Vec<_>>>()?;
    let reference_array = sample_reference_array(room, &mut place)?;
    let positions = arrays
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let mut rir = synthesize_rir(room, a, sim, &mut stream(room.seed, Purpose::Diffuse, &[0, k as u64]))?;
            rir.meta.position = Some(k);
            Ok(rir)
        })
        .collect::<Result<Vec<_>>>()?;
    let reference = synthesize_rir(room, &reference_array, sim, &mut stream(room.seed, Purpose::Diffuse, &[1]))?;
    Ok(RoomRirs { reference, positions })
}

/// Geometry targets plus measured RT60 aggregated over the position responses.
pub fn annotate(room: &RoomSpec, rirs: &[Rir]) -> Result<RoomAnnotation> {
    annotate_room(room, &room_rt60(rirs)?.as_options())
}

/// One rendered mixture with its noise calibration.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedMixture {
    pub position: usize,
    pub clip_id: String,
    pub components: MixtureComponents,
    pub distance_m: f64,
}

/// A room's noise calibration, its reference mixture and one mixture per position.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedRoom {
    pub gains: NoiseGains,
    /// Rendered at the reference position the gains were calibrated on.
    pub reference: MixtureComponents,
    pub mixtures: Vec<RenderedMixture>,
}

/// Calibrates the room's noise levels on the reference response and renders
/// one mixture per position.
pub fn render_room(
    room: &RoomSpec,
    split: Split,
    rirs: &RoomRirs,
    speech: &SpeechSource,
    model: &SpeechSpectrumModel,
    snr: &SnrRanges,
) -> Result<RenderedRoom> {
    if rirs.positions.is_empty() {
        return Err(Error::Data(format!("room {} has no responses", room.id)));
    }
    let reference = rirs.reference.to_16k()?;
    let positions = rirs.positions.iter().map(Rir::to_16k).collect::<Result<Vec<_>>>()?;
    let n_pos = positions.len() as u64;

    let mut cal = stream(room.seed, Purpose::Calibration, &[]);
    let babble = &positions[cal.random_range(0..positions.len())];
    let babble_unit = |rng: &mut crate::rng::StreamRng| -> Result<[Vec<f64>; 2]> {
        diffuse_babble(&speech_shaped_noise(model, MIX_LEN, rng)?, babble)
    };

    let ref_clip = speech.clip(split, room.id, n_pos)?;
    let ref_wet = wet_speech(&reference, &ref_clip)?;
    let mut ref_noise = stream(room.seed, Purpose::Noise, &[n_pos]);
    let ref_static = static_noise(MIX_LEN, &mut ref_noise);
    let ref_diffuse = babble_unit(&mut ref_noise)?;
    let gains = calibrate_noise_gains(&ref_wet, &ref_static, &ref_diffuse, snr, &mut cal)?;
    let reference = MixtureComponents::new(ref_wet, ref_static, ref_diffuse, &gains)?;

    let mixtures = positions
        .iter()
        .enumerate()
        .map(|(k, rir)| {
            let clip = speech.clip(split, room.id, k as u64)?;
            let wet = wet_speech(rir, &clip)?;
            let mut rng = stream(room.seed, Purpose::Noise, &[k as u64]);
            let st = static_noise(MIX_LEN, &mut rng);
            let df = babble_unit(&mut rng)?;
            Ok(RenderedMixture {
                position: k,
                clip_id: clip.id,
                components: MixtureComponents::new(wet, st, df, &gains)?,
                distance_m: rir.meta.array.source_distance(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(RenderedRoom { gains, reference, mixtures })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeaderRecord {
    pub master_seed: u64,
    pub rooms: usize,
    pub positions: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoomRecord {
    pub room_id: u64,
    pub split: Split,
    pub targets: Vec<f64>,
}

impl RoomRecord {
    pub fn annotation(&self) -> Result<RoomAnnotation> {
        RoomAnnotation::from_targets(&self.targets)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureRecord {
    pub mix_id: String,
    pub room_id: u64,
    pub position: usize,
    /// Relative to the manifest's directory.
    pub wav_path: String,
    pub split: Split,
    pub clip_id: String,
    pub snr_static_db: f64,
    pub snr_diffuse_db: f64,
    /// Speech against both noises together.
    pub snr_db: f64,
    pub distance_m: f64,
}

/// One manifest line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ManifestRecord {
    Mixture(MixtureRecord),
    Room(RoomRecord),
    Header(HeaderRecord),
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub master_seed: u64,
    pub positions: usize,
    pub rooms: Vec<RoomRecord>,
    pub mixtures: Vec<MixtureRecord>,
}

impl DatasetManifest {
    pub fn write(&self, path: &Path) -> Result<()> {
        let mut lines = vec![ManifestRecord::Header(HeaderRecord {
            master_seed: self.master_seed,
            rooms: self.rooms.len(),
            positions: self.positions,
        })];
        lines.extend(self.rooms.iter().cloned().map(ManifestRecord::Room));
        lines.extend(self.mixtures.iter().cloned().map(ManifestRecord::Mixture));
        write_jsonl(path, &lines)
    }

    pub fn read(path: &Path) -> Result<DatasetManifest> {
        let mut header = None;
        let mut rooms = Vec::new();
        let mut mixtures = Vec::new();
        for r in read_jsonl::<ManifestRecord>(path)? {
            match r {
                ManifestRecord::Header(h) => header = Some(h),
                ManifestRecord::Room(r) => rooms.push(r),
                ManifestRecord::Mixture(m) => mixtures.push(m),
            }
        }
        let h = header.ok_or_else(|| Error::Data(format!("{} has no header line", path.display())))?;
        let m = DatasetManifest {
            master_seed: h.master_seed,
            positions: h.positions,
            rooms,
            mixtures,
        };
        m.validate()?;
        Ok(m)
    }

    /// Every mixture resolves to an annotated room of the same split.
    pub fn validate(&self) -> Result<()> {
        for r in &self.rooms {
            if r.targets.len() != N_TARGETS {
                return Err(Error::Data(format!("room {} has {} targets", r.room_id, r.targets.len())));
            }
        }
        for m in &self.mixtures {
            match self.room(m.room_id) {
                Some(r) if r.split == m.split => {}
                Some(_) => return Err(Error::Data(format!("{} split differs from its room", m.mix_id))),
                None => return Err(Error::Data(format!("{} refers to unknown room {}", m.mix_id, m.room_id))),
            }
        }
        Ok(())
    }

    pub fn room(&self, room_id: u64) -> Option<&RoomRecord> {
        self.rooms.iter().find(|r| r.room_id == room_id)
    }

    pub fn mixtures_in(&self, split: Split) -> impl Iterator<Item = &MixtureRecord> {
        self.mixtures.iter().filter(move |m| m.split == split)
    }
}

/// Two-channel mixture as stored on disk.
pub fn read_mixture(path: &Path) -> Result<[Vec<f64>; 2]> {
    let (fs, ch) = read_wav(path)?;
    if fs != MIX_FS || ch.len() != 2 {
        return Err(Error::Data(format!(
            "{}: expected 2 channels at 16 kHz, found {} at {fs} Hz",
            path.display(),
            ch.len()
        )));
    }
    let mut it = ch.into_iter();
    Ok([it.next().unwrap_or_default(), it.next().unwrap_or_default()])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct RirSidecar {
    fs: u32,
    meta: RirMeta,
}

pub fn rir_path(dir: &Path, room_id: u64, position: Option<usize>) -> PathBuf {
    let name = position.map_or("reference.wav".to_string(), |k| format!("pos_{k}.wav"));
    dir.join(format!("room_{room_id:06}")).join(name)
}

/// Writes a response as WAV with a JSON sidecar of its geometry.
pub fn save_rir(dir: &Path, rir: &Rir) -> Result<PathBuf> {
    let path = rir_path(dir, rir.meta.room_id, rir.meta.position);
    write_wav(&path, rir.fs, &[&rir.channels[0], &rir.channels[1]])?;
    write_json(&path.with_extension("json"), &RirSidecar { fs: rir.fs, meta: rir.meta.clone() })?;
    Ok(path)
}

pub fn load_rir(path: &Path) -> Result<Rir> {
    let side: RirSidecar = read_json(&path.with_extension("json"))?;
    let (fs, ch) = read_wav(path)?;
    if fs != side.fs || ch.len() != 2 {
        return Err(Error::Data(format!("{} does not match its sidecar", path.display())));
    }
    let mut it = ch.into_iter();
    Ok(Rir {
        fs,
        channels: [it.next().unwrap_or_default(), it.next().unwrap_or_default()],
        meta: side.meta,
    })
}

pub fn save_room_rirs(dir: &Path, rirs: &RoomRirs) -> Result<()> {
    save_rir(dir, &rirs.reference)?;
    rirs.positions.iter().try_for_each(|r| save_rir(dir, r).map(|_| ()))
}

pub fn load_room_rirs(dir: &Path, room_id: u64, positions: usize) -> Result<RoomRirs> {
    Ok(RoomRirs {
        reference: load_rir(&rir_path(dir, room_id, None))?,
        positions: (0..positions)
            .map(|k| load_rir(&rir_path(dir, room_id, Some(k))))
            .collect::<Result<Vec<_>>>()?,
    })
}

/// Fits the speech spectrum model on clips of the configured source.
pub fn fit_spectrum(speech: &SpeechSource, clips: usize) -> Result<SpeechSpectrumModel> {
    SpeechSpectrumModel::fit(&speech.spectrum_clips(clips)?)
}

/// Rooms of a dataset, drawn from the master seed.
pub fn sample_rooms(config: &DatasetConfig, master_seed: u64) -> Vec<RoomSpec> {
    (0..config.rooms as u64)
        .map(|i| sample_indexed_room(master_seed, i, &config.absorption))
        .collect()
}

/// Writes one room's mixtures under `out_dir/mixtures` and returns their records.
pub fn write_room_mixtures(
    out_dir: &Path,
    room: &RoomSpec,
    split: Split,
    rendered: &[RenderedMixture],
    gains: &NoiseGains,
) -> Result<Vec<MixtureRecord>> {
    rendered
        .iter()
        .map(|r| {
            let mix_id = format!("room_{:06}_pos_{}", room.id, r.position);
            let wav_path = format!("mixtures/{mix_id}.wav");
            let mix = r.components.mixture();
            write_wav(&out_dir.join(&wav_path), MIX_FS, &[&mix[0], &mix[1]])?;
            Ok(MixtureRecord {
                mix_id,
                room_id: room.id,
                position: r.position,
                wav_path,
                split,
                clip_id: r.clip_id.clone(),
                snr_static_db: gains.snr_static_db,
                snr_diffuse_db: gains.snr_diffuse_db,
                snr_db: r.components.snr_db(),
                distance_m: r.distance_m,
            })
        })
        .collect()
}

/// Renders and writes one room's mixtures and returns its manifest records.
#[allow(clippy::too_many_arguments)]
pub fn mix_room(
    out_dir: &Path,
    room: &RoomSpec,
    split: Split,
    rirs: &RoomRirs,
    annotation: &RoomAnnotation,
    speech: &SpeechSource,
    model: &SpeechSpectrumModel,
    snr: &SnrRanges,
) -> Result<(RoomRecord, Vec<MixtureRecord>)> {
    let r = render_room(room, split, rirs, speech, model, snr)?;
    let records = write_room_mixtures(out_dir, room, split, &r.mixtures, &r.gains)?;
    Ok((RoomRecord { room_id: room.id, split, targets: annotation.to_targets().to_vec() }, records))
}

/// Manifest from per-room records in room order.
pub fn assemble_manifest(master_seed: u64, positions: usize, per_room: Vec<(RoomRecord, Vec<MixtureRecord>)>) -> DatasetManifest {
    let mut manifest = DatasetManifest { master_seed, positions, rooms: Vec::with_capacity(per_room.len()), mixtures: Vec::new() };
    for (room, mixes) in per_room {
        manifest.rooms.push(room);
        manifest.mixtures.extend(mixes);
    }
    manifest
}

/// Full generation: rooms, responses, annotations, mixtures and manifest,
/// written under `out_dir`. Rooms are processed in parallel.
pub fn build_dataset(config: &DatasetConfig, master_seed: u64, out_dir: &Path) -> Result<DatasetManifest> {
    config.validate()?;
    let speech = config.speech_source(master_seed)?;
    let model = fit_spectrum(&speech, config.spectrum_clips)?;
    let rooms = sample_rooms(config, master_seed);
    let splits = assign_splits(rooms.len(), config.split_fractions, master_seed);
    std::fs::create_dir_all(out_dir)?;

    let per_room = rooms
        .par_iter()
        .zip(splits.par_iter())
        .map(|(room, &split)| -> Result<(RoomRecord, Vec<MixtureRecord>)> {
            let rirs = simulate_room(room, config.positions, &config.sim)?;
            if config.write_rirs {
                save_room_rirs(&out_dir.join("rirs"), &rirs)?;
            }
            let annotation = annotate(room, &rirs.positions)?;
            mix_room(out_dir, room, split, &rirs, &annotation, &speech, &model, &config.snr)
        })
        .collect::<Result<Vec<_>>>()?;

    let manifest = assemble_manifest(master_seed, config.positions, per_room);
    write_jsonl(&out_dir.join("rooms.jsonl"), &rooms)?;
    manifest.write(&out_dir.join("manifest.jsonl"))?;
    let toml = toml::to_string(config).map_err(|e| Error::Config(e.to_string()))?;
    std::fs::write(out_dir.join("config.toml"), toml)?;
    Ok(manifest)
}

/// Reads a TOML dataset configuration; missing keys take defaults.
pub fn read_config(path: &Path) -> Result<DatasetConfig> {
    let text = std::fs::read_to_string(path)?;
    let cfg: DatasetConfig = toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    cfg.validate()?;
    Ok(cfg)
}
