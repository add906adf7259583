pub mod audio;
pub mod augment;
pub mod beats;
pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod features;
pub mod hmm;
pub mod io;
pub mod net;
pub mod pipeline;
pub mod selection;
pub mod synth;
