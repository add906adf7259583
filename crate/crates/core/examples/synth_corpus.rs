//! Writes a synthetic stem corpus with beats known by construction.
//!
//! ```text
//! cargo run --release --example synth_corpus -- <dir> [drummed] [drumless]
//! ```

use std::path::PathBuf;

use beatforge::synth::{write_corpus, SynthConfig};

fn main() -> beatforge::error::Result<()> {
    let mut args = std::env::args().skip(1);
    let root = PathBuf::from(args.next().unwrap_or_else(|| "synth_corpus".into()));
    let drummed = args.next().map_or(40, |s| s.parse().expect("drummed count"));
    let drumless = args.next().map_or(20, |s| s.parse().expect("drumless count"));
    let songs = write_corpus(&root, drummed, drumless, &SynthConfig::default())?;
    for s in &songs {
        println!("{}/{}  meter {}  {:.1} BPM{}", s.dataset, s.song_id, s.meter, s.bpm, if s.drumless { "  (no drums)" } else { "" });
    }
    println!("{} songs under {}", songs.len(), root.display());
    Ok(())
}
