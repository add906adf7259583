//! Training-corpus construction from mixes and pre-separated stems.
//!
//! Corpus layout, one directory per song (optionally grouped by dataset):
//!
//! ```text
//! <root>/[<dataset>/]<song_id>/mix.wav
//!                              stems/<source>.wav   (drums plus at least one other)
//!                              beats.txt
//! ```
//!
//! The non-drum stem is derived and written to `<song_id>/non_drum.wav`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::audio::AudioClip;
use crate::beats::BeatAnnotation;
use crate::error::{Error, Result};
use crate::io::atomic_write;
use crate::selection::{decide, OnsetConfig, SelectionThresholds, StemDecision, NORMALIZATION};

pub const MANIFEST_VERSION: u32 = 1;
pub const DRUMS: &str = "drums";
pub const MIX_FILE: &str = "mix.wav";
pub const STEM_DIR: &str = "stems";
pub const ANNOTATION_FILE: &str = "beats.txt";
pub const NON_DRUM_FILE: &str = "non_drum.wav";
/// Largest tolerated length difference between stems of one song, in seconds.
pub const MAX_DURATION_MISMATCH: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataType {
    Mix,
    NonDrum,
    OnlyDrumAbsm,
    OnlyDrumOsfq,
}

impl DataType {
    pub const ALL: [DataType; 4] = [Self::Mix, Self::NonDrum, Self::OnlyDrumAbsm, Self::OnlyDrumOsfq];

    pub fn name(self) -> &'static str {
        match self {
            Self::Mix => "mix",
            Self::NonDrum => "non_drum",
            Self::OnlyDrumAbsm => "only_drum_absm",
            Self::OnlyDrumOsfq => "only_drum_osfq",
        }
    }
}

impl fmt::Display for DataType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Self::Train),
            "val" | "validation" => Ok(Self::Val),
            "test" => Ok(Self::Test),
            _ => Err(Error::Config(format!("unknown split `{s}` (train|val|test)"))),
        }
    }
}

/// A named set of training data types.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CombinationSpec {
    pub name: String,
    pub data_types: Vec<DataType>,
}

impl CombinationSpec {
    pub fn new(name: impl Into<String>, mut data_types: Vec<DataType>) -> Result<Self> {
        let name = name.into();
        data_types.sort();
        data_types.dedup();
        if data_types.is_empty() {
            return Err(Error::Config(format!("combination `{name}` has no data types")));
        }
        Ok(Self { name, data_types })
    }

    pub fn includes(&self, t: DataType) -> bool {
        self.data_types.contains(&t)
    }

    /// The nine combinations compared in the experiments.
    pub fn table() -> Vec<CombinationSpec> {
        use DataType::*;
        let rows: [(&str, &[DataType]); 9] = [
            ("Mix", &[Mix]),
            ("noDrum", &[NonDrum]),
            ("onlyDrumABSM", &[OnlyDrumAbsm]),
            ("onlyDrumOSFQ", &[OnlyDrumOsfq]),
            ("mix+noDrum", &[Mix, NonDrum]),
            ("exMix_ABSM", &[NonDrum, OnlyDrumAbsm]),
            ("exMix_OSFQ", &[NonDrum, OnlyDrumOsfq]),
            ("combine3_ABSM", &[Mix, NonDrum, OnlyDrumAbsm]),
            ("combine3_OSFQ", &[Mix, NonDrum, OnlyDrumOsfq]),
        ];
        rows.iter()
            .map(|(n, t)| CombinationSpec::new(*n, t.to_vec()).expect("non-empty row"))
            .collect()
    }

    /// Looks a combination up by name, case-insensitively.
    pub fn by_name(name: &str) -> Result<CombinationSpec> {
        Self::table()
            .into_iter()
            .find(|c| c.name.eq_ignore_ascii_case(name))
            .ok_or_else(|| Error::Config(format!("unknown combination `{name}`")))
    }
}

/// Mix, separated stems and annotation of one song, validated for presence
/// and consistent durations.
#[derive(Debug, Clone, PartialEq)]
pub struct StemSet {
    pub song_id: String,
    pub mix: PathBuf,
    /// Source name to file.
    pub stems: BTreeMap<String, PathBuf>,
    pub annotation: PathBuf,
    /// Mix duration in seconds.
    pub duration: f64,
}

fn wav_duration(path: &Path) -> Result<f64> {
    let reader = hound::WavReader::open(path).map_err(|e| Error::Decode {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })?;
    let spec = reader.spec();
    Ok(reader.duration() as f64 / spec.sample_rate as f64)
}

/// Validates the separation output of one song: stems are the `*.wav` files of
/// `stem_dir`, named by source.
pub fn ingest_separation(song_id: &str, mix: &Path, stem_dir: &Path, annotation: &Path) -> Result<StemSet> {
    let mut stems = BTreeMap::new();
    let entries = std::fs::read_dir(stem_dir).map_err(|e| Error::io(stem_dir, e))?;
    for entry in entries {
        let path = entry.map_err(|e| Error::io(stem_dir, e))?.path();
        if path.extension().is_some_and(|x| x.eq_ignore_ascii_case("wav")) {
            if let Some(name) = path.file_stem() {
                stems.insert(name.to_string_lossy().into_owned(), path);
            }
        }
    }
    if !stems.contains_key(DRUMS) {
        return Err(Error::MissingStem {
            song: song_id.into(),
            stem: DRUMS.into(),
        });
    }
    let duration = wav_duration(mix)?;
    for (name, path) in &stems {
        let d = wav_duration(path)?;
        if (d - duration).abs() > MAX_DURATION_MISMATCH {
            return Err(Error::StemMismatch {
                song: song_id.into(),
                detail: format!("stem `{name}` lasts {d:.3} s, mix {duration:.3} s"),
            });
        }
    }
    let ann = BeatAnnotation::read(annotation)?;
    if let Some(last) = ann.events().last() {
        if last.time > duration {
            return Err(Error::Annotation {
                path: annotation.to_path_buf(),
                reason: format!("event at {:.3} s beyond audio end {duration:.3} s", last.time),
            });
        }
    }
    Ok(StemSet {
        song_id: song_id.into(),
        mix: mix.to_path_buf(),
        stems,
        annotation: annotation.to_path_buf(),
        duration,
    })
}

/// [`ingest_separation`] over the standard song directory layout.
pub fn ingest_song_dir(dir: &Path) -> Result<StemSet> {
    let song_id = dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    ingest_separation(&song_id, &dir.join(MIX_FILE), &dir.join(STEM_DIR), &dir.join(ANNOTATION_FILE))
}

/// Sample-wise sum of every source except drums, hard-clipped to [-1, 1].
/// Shorter sources are zero-padded to the longest one.
pub fn sum_non_drum(song_id: &str, sources: &BTreeMap<String, AudioClip>) -> Result<AudioClip> {
    if !sources.contains_key(DRUMS) {
        return Err(Error::MissingStem {
            song: song_id.into(),
            stem: DRUMS.into(),
        });
    }
    let others: Vec<(&String, &AudioClip)> = sources.iter().filter(|(k, _)| k.as_str() != DRUMS).collect();
    if others.is_empty() {
        return Err(Error::MissingStem {
            song: song_id.into(),
            stem: "non-drum source".into(),
        });
    }
    let sr = others[0].1.sample_rate();
    if let Some((name, _)) = sources.iter().find(|(_, c)| c.sample_rate() != sr) {
        return Err(Error::StemMismatch {
            song: song_id.into(),
            detail: format!("stem `{name}` has a different sample rate"),
        });
    }
    let longest = sources.values().map(|c| c.len()).max().unwrap_or(0);
    let shortest = sources.values().map(|c| c.len()).min().unwrap_or(0);
    let gap = (longest - shortest) as f64 / sr as f64;
    if gap > MAX_DURATION_MISMATCH {
        return Err(Error::StemMismatch {
            song: song_id.into(),
            detail: format!("stem lengths differ by {gap:.3} s"),
        });
    }
    let mut sum = vec![0.0f32; longest];
    for (_, clip) in &others {
        for (s, x) in sum.iter_mut().zip(clip.samples()) {
            *s += x;
        }
    }
    for s in &mut sum {
        *s = s.clamp(-1.0, 1.0);
    }
    AudioClip::new(sum, sr, format!("{song_id}/non_drum"))
}

/// Loads the stems of a song and sums the non-drum sources.
pub fn make_non_drum(stems: &StemSet) -> Result<AudioClip> {
    let mut sources = BTreeMap::new();
    for (name, path) in &stems.stems {
        sources.insert(name.clone(), AudioClip::load(path)?);
    }
    sum_non_drum(&stems.song_id, &sources)
}

/// Stem labels are the mix labels, unchanged.
pub fn propagate_labels(annotation: &BeatAnnotation, _target: DataType) -> BeatAnnotation {
    annotation.propagate()
}

/// Per-dataset split: ids are sorted, shuffled with `seed`, then the first
/// `floor(0.8 n)` go to train, the next `floor(0.1 n)` to validation and the
/// rest to test.
pub fn split_corpus(song_ids: &[String], seed: u64) -> BTreeMap<String, Split> {
    let mut ids: Vec<&String> = song_ids.iter().collect();
    ids.sort();
    ids.dedup();
    ids.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n = ids.len();
    let n_train = n * 8 / 10;
    let n_val = n / 10;
    ids.into_iter()
        .enumerate()
        .map(|(i, id)| {
            let split = if i < n_train {
                Split::Train
            } else if i < n_train + n_val {
                Split::Val
            } else {
                Split::Test
            };
            (id.clone(), split)
        })
        .collect()
}

/// One song of a prepared corpus. Paths are relative to the corpus root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SongRecord {
    pub song_id: String,
    pub dataset: String,
    pub mix: PathBuf,
    pub non_drum: Option<PathBuf>,
    pub drums: Option<PathBuf>,
    pub annotation: PathBuf,
}

/// Song directories under `root`: either `root/<song>` or `root/<dataset>/<song>`.
/// Songs directly under the root belong to dataset `default`.
pub fn discover_songs(root: &Path) -> Result<Vec<(String, PathBuf)>> {
    let list = |dir: &Path| -> Result<Vec<PathBuf>> {
        let mut out = Vec::new();
        for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let p = entry.map_err(|e| Error::io(dir, e))?.path();
            if p.is_dir() {
                out.push(p);
            }
        }
        out.sort();
        Ok(out)
    };
    let mut songs = Vec::new();
    for dir in list(root)? {
        if dir.join(MIX_FILE).is_file() {
            songs.push(("default".to_string(), dir));
            continue;
        }
        let dataset = dir.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
        for sub in list(&dir)? {
            if sub.join(MIX_FILE).is_file() {
                songs.push((dataset.clone(), sub));
            }
        }
    }
    if songs.is_empty() {
        return Err(Error::EmptyInput(format!("no song directories under {}", root.display())));
    }
    let mut seen = std::collections::BTreeSet::new();
    for (_, dir) in &songs {
        let id = dir.file_name().unwrap_or_default().to_string_lossy().into_owned();
        if !seen.insert(id.clone()) {
            return Err(Error::Input(format!("song id `{id}` appears twice in {}", root.display())));
        }
    }
    Ok(songs)
}

/// A validated corpus with derived non-drum stems and drum-stem decisions.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedCorpus {
    pub root: PathBuf,
    pub songs: Vec<SongRecord>,
    pub decisions: BTreeMap<String, StemDecision>,
    pub onset: OnsetConfig,
}

fn relative(root: &Path, path: &Path) -> PathBuf {
    path.strip_prefix(root).map(Path::to_path_buf).unwrap_or_else(|_| path.to_path_buf())
}

/// Ingests every song, writes its non-drum stem and runs both filters on its
/// drum stem. Songs are processed in parallel; results keep discovery order.
pub fn prepare_corpus(root: &Path, onset: &OnsetConfig) -> Result<PreparedCorpus> {
    let songs = discover_songs(root)?;
    let done = songs
        .par_iter()
        .map(|(dataset, dir)| {
            let set = ingest_song_dir(dir)?;
            let non_drum = make_non_drum(&set)?;
            let nd_path = dir.join(NON_DRUM_FILE);
            non_drum.write_wav(&nd_path)?;
            let drums = set.stems[DRUMS].clone();
            let decision = decide(set.song_id.clone(), &AudioClip::load(&drums)?, onset)?;
            log::debug!("{}: drums mean_abs {:.4}, {:.2} onsets/s", set.song_id, decision.mean_abs, decision.onset_rate);
            let record = SongRecord {
                song_id: set.song_id.clone(),
                dataset: dataset.clone(),
                mix: relative(root, &set.mix),
                non_drum: Some(relative(root, &nd_path)),
                drums: Some(relative(root, &drums)),
                annotation: relative(root, &set.annotation),
            };
            Ok((record, decision))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut records = Vec::with_capacity(done.len());
    let mut decisions = BTreeMap::new();
    for (r, d) in done {
        decisions.insert(r.song_id.clone(), d);
        records.push(r);
    }
    Ok(PreparedCorpus {
        root: root.to_path_buf(),
        songs: records,
        decisions,
        onset: *onset,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub song_id: String,
    pub dataset: String,
    pub data_type: DataType,
    /// Relative to the corpus root.
    pub audio: PathBuf,
    pub annotation: PathBuf,
    pub split: Split,
}

/// How a manifest was built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub combination: String,
    pub data_types: Vec<DataType>,
    pub split_seed: u64,
    pub thresholds: SelectionThresholds,
    pub onset: OnsetConfig,
    pub normalization: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub version: u32,
    pub corpus_root: PathBuf,
    pub provenance: Provenance,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn entries_in(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        self.corpus_root.join(path)
    }

    /// Every song must map to exactly one split.
    pub fn check_no_leakage(&self) -> Result<()> {
        let mut seen: BTreeMap<&str, Split> = BTreeMap::new();
        for e in &self.entries {
            if let Some(prev) = seen.insert(&e.song_id, e.split) {
                if prev != e.split {
                    return Err(Error::Input(format!("song `{}` appears in two splits", e.song_id)));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        atomic_write(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Self = serde_json::from_str(&text)?;
        if m.version != MANIFEST_VERSION {
            return Err(Error::Input(format!(
                "manifest version {} not supported (expected {MANIFEST_VERSION})",
                m.version
            )));
        }
        m.check_no_leakage()?;
        Ok(m)
    }
}

/// Training entries for the ticked data types; validation and test hold mixes only.
///
/// Only-drum entries exist only for songs whose drum stem passed the matching
/// filter. Splits are drawn per dataset with `seed`.
pub fn build_combination(corpus: &PreparedCorpus, spec: &CombinationSpec, seed: u64) -> Result<DatasetManifest> {
    for song in &corpus.songs {
        for &t in &spec.data_types {
            let missing = match t {
                DataType::Mix => false,
                DataType::NonDrum => song.non_drum.is_none(),
                DataType::OnlyDrumAbsm | DataType::OnlyDrumOsfq => {
                    song.drums.is_none() || !corpus.decisions.contains_key(&song.song_id)
                }
            };
            if missing {
                return Err(Error::IncompleteCorpus(format!(
                    "song `{}` has no {t} audio for combination `{}`",
                    song.song_id, spec.name
                )));
            }
        }
    }

    let mut by_dataset: BTreeMap<&str, Vec<String>> = BTreeMap::new();
    for s in &corpus.songs {
        by_dataset.entry(&s.dataset).or_default().push(s.song_id.clone());
    }
    let mut splits = BTreeMap::new();
    for ids in by_dataset.values() {
        splits.extend(split_corpus(ids, seed));
    }

    let mut songs: Vec<&SongRecord> = corpus.songs.iter().collect();
    songs.sort_by(|a, b| a.song_id.cmp(&b.song_id));
    let mut entries = Vec::new();
    for song in songs {
        let split = splits[&song.song_id];
        let entry = |data_type, audio: &PathBuf| ManifestEntry {
            song_id: song.song_id.clone(),
            dataset: song.dataset.clone(),
            data_type,
            audio: audio.clone(),
            annotation: song.annotation.clone(),
            split,
        };
        if split != Split::Train {
            entries.push(entry(DataType::Mix, &song.mix));
            continue;
        }
        for &t in &spec.data_types {
            let decision = corpus.decisions.get(&song.song_id);
            match t {
                DataType::Mix => entries.push(entry(t, &song.mix)),
                DataType::NonDrum => entries.push(entry(t, song.non_drum.as_ref().expect("checked"))),
                DataType::OnlyDrumAbsm if decision.is_some_and(|d| d.passed_absm) => {
                    entries.push(entry(t, song.drums.as_ref().expect("checked")))
                }
                DataType::OnlyDrumOsfq if decision.is_some_and(|d| d.passed_osfq) => {
                    entries.push(entry(t, song.drums.as_ref().expect("checked")))
                }
                _ => {}
            }
        }
    }
    Ok(DatasetManifest {
        version: MANIFEST_VERSION,
        corpus_root: corpus.root.clone(),
        provenance: Provenance {
            combination: spec.name.clone(),
            data_types: spec.data_types.clone(),
            split_seed: seed,
            thresholds: SelectionThresholds::default(),
            onset: corpus.onset,
            normalization: NORMALIZATION.into(),
        },
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn ids(n: usize) -> Vec<String> {
        (0..n).map(|i| format!("song{i:03}")).collect()
    }

    fn counts(split: &BTreeMap<String, Split>) -> (usize, usize, usize) {
        let c = |s| split.values().filter(|&&v| v == s).count();
        (c(Split::Train), c(Split::Val), c(Split::Test))
    }

    #[test]
    fn split_sizes() {
        assert_eq!(counts(&split_corpus(&ids(10), 42)), (8, 1, 1));
        assert_eq!(counts(&split_corpus(&ids(54), 42)), (43, 5, 6));
        assert_eq!(counts(&split_corpus(&ids(3), 1)), (2, 0, 1));
        assert_eq!(split_corpus(&ids(30), 7), split_corpus(&ids(30), 7));
        assert_ne!(split_corpus(&ids(30), 7), split_corpus(&ids(30), 8));
    }

    #[test]
    fn split_ignores_input_order() {
        let mut rev = ids(20);
        rev.reverse();
        assert_eq!(split_corpus(&rev, 3), split_corpus(&ids(20), 3));
    }

    fn clip(v: Vec<f32>) -> AudioClip {
        AudioClip::new(v, 100, "x").unwrap()
    }

    #[test]
    fn non_drum_sum_and_clip() {
        let x: Vec<f32> = (0..100).map(|i| (i as f32 / 50.0) - 1.0).collect();
        let mut src = BTreeMap::new();
        src.insert("drums".to_string(), clip(vec![0.9; 100]));
        src.insert("bass".to_string(), clip(x.iter().map(|v| 0.6 * v).collect()));
        src.insert("other".to_string(), clip(x.iter().map(|v| 0.6 * v).collect()));
        let nd = sum_non_drum("s", &src).unwrap();
        for (o, v) in nd.samples().iter().zip(&x) {
            assert!((o - (1.2 * v).clamp(-1.0, 1.0)).abs() < 1e-6);
        }
        assert_eq!(nd.len(), 100);

        let mut silent = BTreeMap::new();
        silent.insert("drums".to_string(), clip(vec![0.5; 100]));
        silent.insert("vocals".to_string(), clip(vec![0.0; 100]));
        assert!(sum_non_drum("s", &silent).unwrap().samples().iter().all(|&s| s == 0.0));
    }

    #[test]
    fn non_drum_errors() {
        let mut src = BTreeMap::new();
        src.insert("bass".to_string(), clip(vec![0.1; 100]));
        assert_eq!(sum_non_drum("s", &src).unwrap_err().kind(), "MissingStem");
        src.insert("drums".to_string(), clip(vec![0.1; 120]));
        assert_eq!(sum_non_drum("s", &src).unwrap_err().kind(), "StemMismatch");
    }

    #[test]
    fn table_rows() {
        use DataType::*;
        let t = CombinationSpec::table();
        assert_eq!(t.len(), 9);
        let names: BTreeSet<&str> = t.iter().map(|c| c.name.as_str()).collect();
        assert_eq!(names.len(), 9);
        assert_eq!(CombinationSpec::by_name("exmix_absm").unwrap().data_types, vec![NonDrum, OnlyDrumAbsm]);
        assert!(CombinationSpec::new("empty", vec![]).is_err());
    }

    fn corpus(n: usize, drumless: &[usize]) -> PreparedCorpus {
        let songs: Vec<SongRecord> = (0..n)
            .map(|i| SongRecord {
                song_id: format!("s{i:02}"),
                dataset: if i % 2 == 0 { "a".into() } else { "b".into() },
                mix: format!("s{i:02}/mix.wav").into(),
                non_drum: Some(format!("s{i:02}/non_drum.wav").into()),
                drums: Some(format!("s{i:02}/stems/drums.wav").into()),
                annotation: format!("s{i:02}/beats.txt").into(),
            })
            .collect();
        let decisions = (0..n)
            .map(|i| {
                let on = !drumless.contains(&i);
                let d = StemDecision {
                    stem_id: format!("s{i:02}"),
                    mean_abs: if on { 0.05 } else { 0.0 },
                    onset_rate: if on { 2.0 } else { 0.0 },
                    passed_absm: on,
                    // every third drummed song has too few onsets
                    passed_osfq: on && i % 3 != 0,
                };
                (d.stem_id.clone(), d)
            })
            .collect();
        PreparedCorpus {
            root: "/corpus".into(),
            songs,
            decisions,
            onset: OnsetConfig::default(),
        }
    }

    #[test]
    fn combinations_respect_protocol() {
        let c = corpus(40, &[1, 4, 7, 10, 13]);
        for spec in CombinationSpec::table() {
            let m = build_combination(&c, &spec, 42).unwrap();
            m.check_no_leakage().unwrap();
            let train_types: BTreeSet<DataType> = m.entries_in(Split::Train).map(|e| e.data_type).collect();
            assert_eq!(train_types, spec.data_types.iter().copied().collect(), "{}", spec.name);
            assert!(m.entries.iter().filter(|e| e.split != Split::Train).all(|e| e.data_type == DataType::Mix));
            for e in &m.entries {
                let d = &c.decisions[&e.song_id];
                match e.data_type {
                    DataType::OnlyDrumAbsm => assert!(d.passed_absm),
                    DataType::OnlyDrumOsfq => assert!(d.passed_osfq),
                    _ => {}
                }
            }
            // conservation
            let train_songs: Vec<&String> = {
                let s: BTreeSet<&String> = m.entries_in(Split::Train).map(|e| &e.song_id).collect();
                s.into_iter().collect()
            };
            let expected: usize = spec
                .data_types
                .iter()
                .map(|&t| {
                    train_songs
                        .iter()
                        .filter(|id| match t {
                            DataType::OnlyDrumAbsm => c.decisions[**id].passed_absm,
                            DataType::OnlyDrumOsfq => c.decisions[**id].passed_osfq,
                            _ => true,
                        })
                        .count()
                })
                .sum();
            assert_eq!(m.entries_in(Split::Train).count(), expected);
            assert_eq!(m.provenance.combination, spec.name);
        }
    }

    #[test]
    fn drumless_songs_have_no_drum_entries() {
        let drumless = [0, 1, 2, 3, 5, 8];
        let c = corpus(12, &drumless);
        let m = build_combination(&c, &CombinationSpec::by_name("combine3_OSFQ").unwrap(), 1).unwrap();
        for e in &m.entries {
            let idx: usize = e.song_id[1..].parse().unwrap();
            if drumless.contains(&idx) {
                assert_ne!(e.data_type, DataType::OnlyDrumOsfq);
            }
        }
    }

    #[test]
    fn missing_audio_is_incomplete_corpus() {
        let mut c = corpus(10, &[]);
        c.songs[3].non_drum = None;
        let err = build_combination(&c, &CombinationSpec::by_name("noDrum").unwrap(), 1).unwrap_err();
        assert_eq!(err.kind(), "IncompleteCorpus");
        assert!(build_combination(&c, &CombinationSpec::by_name("Mix").unwrap(), 1).is_ok());
        c.decisions.remove("s05");
        let err = build_combination(&c, &CombinationSpec::by_name("onlyDrumABSM").unwrap(), 1).unwrap_err();
        assert_eq!(err.kind(), "IncompleteCorpus");
    }

    #[test]
    fn manifest_is_deterministic_and_round_trips() {
        let c = corpus(25, &[2]);
        let spec = CombinationSpec::by_name("combine3_ABSM").unwrap();
        let a = build_combination(&c, &spec, 9).unwrap().to_json().unwrap();
        let b = build_combination(&c, &spec, 9).unwrap().to_json().unwrap();
        assert_eq!(a, b);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        let m = build_combination(&c, &spec, 9).unwrap();
        m.save(&p).unwrap();
        assert_eq!(DatasetManifest::load(&p).unwrap(), m);
    }

    #[test]
    fn labels_are_shared_verbatim() {
        let a = BeatAnnotation::parse("0.500\t1\n1.000\t2\n", Path::new("x")).unwrap();
        for t in DataType::ALL {
            assert_eq!(propagate_labels(&a, t).to_text(), a.to_text());
        }
    }
}
