//! Shared fixtures for the criterion benches.

use padaug_core::synth::{make_speaker, synth_utterance};
use padaug_core::{Rng, Waveform};

/// A deterministic synthetic utterance of `seconds` at 16 kHz.
pub fn utterance(seconds: f64, seed: u64) -> Waveform {
    synth_utterance(&make_speaker(seed), seconds, 16_000, &mut Rng::new(seed)).expect("positive duration")
}
