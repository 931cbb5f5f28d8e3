use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{parse_dat, parse_evtcsv, write_dat, write_evtcsv, EventError, EventStream};

/// Class directory names, indexed by class id.
pub const CLASS_NAMES: [&str; 2] = ["background", "cars"];
const SPLITS: [&str; 2] = ["train", "test"];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub train: Vec<EventStream>,
    pub test: Vec<EventStream>,
    pub class_names: Vec<String>,
}

impl Dataset {
    pub fn new(train: Vec<EventStream>, test: Vec<EventStream>) -> Self {
        Dataset {
            train,
            test,
            class_names: CLASS_NAMES.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.train.is_empty() && self.test.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetFormat {
    Dat,
    EvtCsv,
}

impl DatasetFormat {
    pub fn extension(self) -> &'static str {
        match self {
            DatasetFormat::Dat => ".dat",
            DatasetFormat::EvtCsv => ".evt.csv",
        }
    }

    /// Picks the format whose files appear under `root/train`; DAT wins ties.
    pub fn detect(root: &Path) -> Option<DatasetFormat> {
        [DatasetFormat::Dat, DatasetFormat::EvtCsv]
            .into_iter()
            .find(|f| {
                CLASS_NAMES.iter().any(|class| {
                    list_files(&root.join("train").join(class), *f).is_ok_and(|v| !v.is_empty())
                })
            })
    }

    fn parse(self, bytes: &[u8]) -> Result<EventStream, EventError> {
        match self {
            DatasetFormat::Dat => parse_dat(bytes),
            DatasetFormat::EvtCsv => parse_evtcsv(&String::from_utf8_lossy(bytes)),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EventError + '_ {
    move |source| EventError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn list_files(dir: &Path, format: DatasetFormat) -> Result<Vec<PathBuf>, EventError> {
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        let matches = path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.ends_with(format.extension()));
        if matches && path.is_file() {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

fn load_split(dir: &Path, format: DatasetFormat) -> Result<Vec<EventStream>, EventError> {
    let mut jobs = Vec::new();
    for (label, class) in CLASS_NAMES.iter().enumerate() {
        let class_dir = dir.join(class);
        let files = if class_dir.is_dir() {
            list_files(&class_dir, format)?
        } else {
            Vec::new()
        };
        if files.is_empty() {
            return Err(EventError::EmptyClassDirectory(class_dir));
        }
        jobs.extend(files.into_iter().map(|f| (f, label as u8)));
    }
    // collect() keeps input order, so parallel parsing stays lexicographic.
    jobs.par_iter()
        .map(|(path, label)| {
            let bytes = fs::read(path).map_err(io_err(path))?;
            format
                .parse(&bytes)
                .map(|s| s.with_label(Some(*label)))
                .map_err(|e| EventError::InFile {
                    path: path.clone(),
                    source: Box::new(e),
                })
        })
        .collect()
}

/// Loads `root/{train,test}/{background,cars}/*.{dat,evt.csv}`; labels come
/// from the class directory.
pub fn load_dataset(root: &Path, format: DatasetFormat) -> Result<Dataset, EventError> {
    let mut splits = Vec::with_capacity(2);
    for split in SPLITS {
        let dir = root.join(split);
        if !dir.is_dir() {
            return Err(EventError::MissingSplit(dir));
        }
        splits.push(load_split(&dir, format)?);
    }
    let test = splits.pop().unwrap_or_default();
    let train = splits.pop().unwrap_or_default();
    Ok(Dataset::new(train, test))
}

/// Writes a dataset in the directory layout [`load_dataset`] reads.
pub fn write_dataset(
    root: &Path,
    dataset: &Dataset,
    format: DatasetFormat,
) -> Result<(), EventError> {
    for (split, streams) in SPLITS.iter().zip([&dataset.train, &dataset.test]) {
        let mut counters = [0usize; 2];
        for s in streams {
            let label = s.label().unwrap_or(0).min(1) as usize;
            let dir = root.join(split).join(CLASS_NAMES[label]);
            fs::create_dir_all(&dir).map_err(io_err(&dir))?;
            let path = dir.join(format!(
                "sample_{:06}{}",
                counters[label],
                format.extension()
            ));
            counters[label] += 1;
            let bytes = match format {
                DatasetFormat::Dat => write_dat(s)?,
                DatasetFormat::EvtCsv => write_evtcsv(s).into_bytes(),
            };
            fs::write(&path, bytes).map_err(io_err(&path))?;
        }
    }
    Ok(())
}
