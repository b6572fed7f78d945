#![allow(dead_code)]

pub mod oracle;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use eigenbehavior::pipeline::{PipelineConfig, SynthConfig, SynthCorpus};

pub fn bundled_corpus() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/synthetic-12x60")
}

pub fn config_for(corpus: &Path, out: &Path) -> PipelineConfig {
    PipelineConfig {
        meters: Some(corpus.join("meters.csv")),
        metadata: Some(corpus.join("metadata.csv")),
        out_dir: out.to_path_buf(),
        ..PipelineConfig::default()
    }
}

pub fn write_corpus(cfg: &SynthConfig, dir: &Path) -> SynthCorpus {
    let corpus = eigenbehavior::pipeline::generate_synthetic(cfg).unwrap();
    corpus.write(dir).unwrap();
    corpus
}

/// Every file under `dir` with its bytes, keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// Fraction of items whose class's majority truth label equals their own.
pub fn majority_agreement<K: Ord + Copy>(classes: &[K], truth: &[usize]) -> f64 {
    let mut table: BTreeMap<K, BTreeMap<usize, usize>> = BTreeMap::new();
    for (&c, &t) in classes.iter().zip(truth) {
        *table.entry(c).or_default().entry(t).or_default() += 1;
    }
    let agree: usize = table.values().map(|m| m.values().max().copied().unwrap_or(0)).sum();
    agree as f64 / classes.len() as f64
}

/// Agreement under the best one-to-one matching of classes to truth labels;
/// items in unmatched classes count as wrong.
pub fn matched_agreement<K: Ord + Copy>(classes: &[K], truth: &[usize]) -> f64 {
    let keys: Vec<K> = classes.iter().copied().collect::<std::collections::BTreeSet<_>>().into_iter().collect();
    let labels = truth.iter().max().map_or(0, |m| m + 1);
    let mut counts = vec![vec![0usize; labels]; keys.len()];
    for (c, &t) in classes.iter().zip(truth) {
        counts[keys.binary_search(c).unwrap()][t] += 1;
    }
    fn best(label: usize, used: &mut Vec<bool>, counts: &[Vec<usize>]) -> usize {
        if label == counts.first().map_or(0, Vec::len) {
            return 0;
        }
        let mut top = best(label + 1, used, counts);
        for c in 0..counts.len() {
            if !used[c] {
                used[c] = true;
                top = top.max(counts[c][label] + best(label + 1, used, counts));
                used[c] = false;
            }
        }
        top
    }
    best(0, &mut vec![false; keys.len()], &counts) as f64 / classes.len() as f64
}
