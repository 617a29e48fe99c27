//! A fully analyzable stand-in for the neural stages: parametric harmonic
//! voices, matching signal-analysis encoders, and in-process backends whose
//! synthesis the encoders can invert. Everything here is deterministic given
//! a seed, which is what makes closed-loop identity and replay tests possible.

pub mod analysis;
pub mod backends;
pub mod corpus;
pub mod voice;

pub use backends::{ToyAsv, ToyEncoder, ToyMelDecoder, ToyTokenGenerator, ToyVocoder};
pub use corpus::make_toy_corpus;
pub use voice::{render_clip, ToyVoice};
