//! File loading and atomic writes shared by the subcommands.

use std::collections::BTreeSet;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use minpair::generator::MinimalPair;
use minpair::lexicon::Lexicon;
use minpair::template::{Paradigm, PhraseLibrary};

/// Writes `contents` to a sibling temporary file, then renames it over
/// `path`, so readers never observe a partial file.
pub fn write_atomic(path: &Path, contents: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let name = path
        .file_name()
        .with_context(|| format!("{} has no file name", path.display()))?;
    let tmp = dir.join(format!(".{}.tmp-{}", name.to_string_lossy(), std::process::id()));
    {
        let mut f = fs::File::create(&tmp).with_context(|| format!("creating {}", tmp.display()))?;
        f.write_all(contents)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path).with_context(|| format!("renaming onto {}", path.display()))?;
    Ok(())
}

pub fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

pub fn load_lexicon(path: &Path) -> Result<Lexicon> {
    Lexicon::load_str(&read(path)?).with_context(|| format!("loading lexicon {}", path.display()))
}

pub fn load_phrases(path: &Path) -> Result<PhraseLibrary> {
    PhraseLibrary::parse(&read(path)?).with_context(|| format!("loading phrases {}", path.display()))
}

/// Expands each path to itself (a file) or its entries with the given
/// extension (a directory), sorted by file name.
pub fn expand(paths: &[PathBuf], extension: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = fs::read_dir(p)
                .with_context(|| format!("listing {}", p.display()))?
                .map(|e| e.map(|e| e.path()))
                .collect::<std::io::Result<_>>()?;
            files.retain(|f| f.is_file() && f.extension().is_some_and(|e| e == extension));
            files.sort();
            out.extend(files);
        } else if p.is_file() {
            out.push(p.clone());
        } else {
            bail!("{} does not exist", p.display());
        }
    }
    Ok(out)
}

/// Loads paradigm files; ids must be unique across all of them.
pub fn load_paradigms(paths: &[PathBuf]) -> Result<Vec<Paradigm>> {
    let files = expand(paths, "json")?;
    if files.is_empty() {
        bail!("no paradigm files found");
    }
    let mut seen = BTreeSet::new();
    let mut out = Vec::with_capacity(files.len());
    for f in files {
        let p = Paradigm::parse(&read(&f)?).with_context(|| format!("parsing {}", f.display()))?;
        if !seen.insert(p.id.clone()) {
            bail!("duplicate paradigm id {:?} in {}", p.id, f.display());
        }
        out.push(p);
    }
    Ok(out)
}

pub fn parse_pairs(text: &str, origin: &Path) -> Result<Vec<MinimalPair>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l)
                .with_context(|| format!("{}:{}: malformed pair record", origin.display(), i + 1))
        })
        .collect()
}

/// Loads generated pair files, grouped per file (one paradigm each), in
/// file-name order.
pub fn load_pair_files(paths: &[PathBuf]) -> Result<Vec<(PathBuf, Vec<MinimalPair>)>> {
    let files = expand(paths, "jsonl")?;
    if files.is_empty() {
        bail!("no pair files found");
    }
    files
        .into_iter()
        .map(|f| {
            let pairs = parse_pairs(&read(&f)?, &f)?;
            Ok((f, pairs))
        })
        .collect()
}

pub fn to_pretty_json<T: serde::Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("value serializes") + "\n"
}

pub fn to_jsonl<T: serde::Serialize>(values: &[T]) -> String {
    values
        .iter()
        .map(|v| serde_json::to_string(v).expect("value serializes") + "\n")
        .collect()
}
