//! Plans on disk: one file per key, named by the key text.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use gridcoop_core::plan_cache::{PlanKey, PlanStore};
use gridcoop_core::planner::{BadStep, Plan, VIEW_CELLS};
use serde::Serialize;
use tempfile::NamedTempFile;

#[derive(Debug)]
pub struct DirStore {
    root: PathBuf,
    readonly: bool,
}

#[derive(Debug, thiserror::Error)]
#[error("saving {key}: {source}")]
pub struct SaveError {
    key: String,
    source: io::Error,
}

impl DirStore {
    /// Opens `root`, creating it unless `readonly`.
    pub fn open(root: impl Into<PathBuf>, readonly: bool) -> io::Result<Self> {
        let root = root.into();
        if readonly {
            if !root.is_dir() {
                return Err(io::Error::new(io::ErrorKind::NotFound, format!("{} is not a directory", root.display())));
            }
        } else {
            fs::create_dir_all(&root)?;
        }
        Ok(DirStore { root, readonly })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path(&self, key: &PlanKey) -> PathBuf {
        self.root.join(key.as_str())
    }

    fn write(&self, key: &PlanKey, text: &str) -> io::Result<()> {
        let mut tmp = NamedTempFile::new_in(&self.root)?;
        tmp.write_all(text.as_bytes())?;
        tmp.persist(self.path(key)).map_err(|e| e.error)?;
        Ok(())
    }
}

impl PlanStore for DirStore {
    type Error = SaveError;

    fn load(&self, key: &PlanKey) -> Option<Result<Plan, BadStep>> {
        match fs::read(self.path(key)) {
            Err(e) if e.kind() == io::ErrorKind::NotFound => None,
            Err(e) => Some(Err(BadStep(e.to_string()))),
            Ok(bytes) => Some(match String::from_utf8(bytes) {
                Ok(text) => Plan::parse(&text),
                Err(_) => Err(BadStep("not utf-8".into())),
            }),
        }
    }

    /// A read-only store drops writes silently; the caller still gets its plan.
    fn save(&mut self, key: &PlanKey, plan: &Plan) -> Result<(), SaveError> {
        if self.readonly {
            return Ok(());
        }
        self.write(key, &plan.to_text()).map_err(|source| SaveError { key: key.as_str().into(), source })
    }

    fn len(&self) -> usize {
        fs::read_dir(&self.root)
            .map(|d| d.flatten().filter(|e| e.file_name().to_str().is_some_and(|n| PlanKey::parse(n).is_ok())).count())
            .unwrap_or(0)
    }
}

/// Key class: clear flag plus attachment prefix, e.g. `n`, `c01`, `n-10`.
pub fn key_class(key: &PlanKey) -> &str {
    let s = key.as_str();
    &s[..s.len() - VIEW_CELLS]
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct CacheSummary {
    pub keys: usize,
    pub classes: BTreeMap<String, usize>,
    /// Bytes held by valid entries.
    pub bytes: u64,
    /// Files that are not a valid key naming a readable plan.
    pub invalid: Vec<String>,
}

pub fn cache_stats(dir: &Path) -> io::Result<CacheSummary> {
    let mut out = CacheSummary::default();
    let mut names: Vec<(String, PathBuf)> = Vec::new();
    for e in fs::read_dir(dir)? {
        let e = e?;
        if e.file_type()?.is_file() {
            names.push((e.file_name().to_string_lossy().into_owned(), e.path()));
        }
    }
    names.sort();
    for (name, path) in names {
        let key = PlanKey::parse(&name);
        let bytes = fs::read(&path)?;
        let plan_ok = std::str::from_utf8(&bytes).ok().is_some_and(|t| Plan::parse(t).is_ok());
        match key {
            Ok(k) if plan_ok => {
                out.keys += 1;
                out.bytes += bytes.len() as u64;
                *out.classes.entry(key_class(&k).into()).or_default() += 1;
            }
            _ => out.invalid.push(name),
        }
    }
    Ok(out)
}
