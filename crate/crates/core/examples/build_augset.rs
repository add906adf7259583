//! Prepares a synthetic stem corpus and prints the train/val/test entry counts
//! of every data-type combination.

use beatforge::augment::{build_combination, prepare_corpus, CombinationSpec, Split};
use beatforge::selection::OnsetConfig;
use beatforge::synth::{write_corpus, SynthConfig};

fn main() -> beatforge::error::Result<()> {
    let dir = tempfile::tempdir().map_err(|e| beatforge::error::Error::Input(e.to_string()))?;
    let config = SynthConfig { duration: 4.0, ..Default::default() };
    write_corpus(dir.path(), 10, 10, &config)?;
    let corpus = prepare_corpus(dir.path(), &OnsetConfig::default())?;
    let kept = corpus.decisions.values().filter(|d| d.passed_absm).count();
    println!("{} songs, {kept} drum stems pass ABSM", corpus.songs.len());
    println!("{:<16} {:>5} {:>4} {:>5}  types", "combination", "train", "val", "test");
    for spec in CombinationSpec::table() {
        let m = build_combination(&corpus, &spec, 42)?;
        let n = |s| m.entries_in(s).count();
        let types: Vec<_> = spec.data_types.iter().map(|t| t.name()).collect();
        println!("{:<16} {:>5} {:>4} {:>5}  {}", spec.name, n(Split::Train), n(Split::Val), n(Split::Test), types.join(" + "));
    }
    Ok(())
}
