//! From simulated responses to calibrated noisy two-channel speech.

pub mod dataset;
pub mod noise;
pub mod speech;

use serde::{Deserialize, Serialize};

pub use dataset::{build_dataset, DatasetConfig, DatasetManifest, ManifestRecord, MixtureRecord, RoomRecord};
pub use noise::{
    calibrate_noise_gains, diffuse_babble, snr_db, speech_shaped_noise, static_noise, MixtureComponents, NoiseGains,
    SnrRanges, SpeechSpectrumModel,
};
pub use speech::{load_clip, synthetic_clip, wet_speech, CorpusPools, SpeechClip, SpeechSource};

/// Sample rate of mixtures.
pub const MIX_FS: u32 = 16_000;
/// Samples per mixture channel (3 s).
pub const MIX_LEN: usize = 48_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn index(self) -> usize {
        self as usize
    }
}
