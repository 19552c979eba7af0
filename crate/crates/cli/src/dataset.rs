use std::path::{Path, PathBuf};

use koopgait::io::{read_manifest, read_sequence, Manifest, Role, SequenceRecord};

use crate::failure::Failure;
use crate::runlog::RunLog;

pub const MANIFEST_FILE: &str = "manifest.txt";

pub struct Entry {
    pub file: String,
    pub role: Role,
    pub record: SequenceRecord,
}

pub struct Dataset {
    pub manifest: Manifest,
    pub entries: Vec<Entry>,
}

impl Dataset {
    pub fn load(dir: &Path) -> Result<Self, Failure> {
        let manifest_path = dir.join(MANIFEST_FILE);
        let manifest = read_manifest(&manifest_path).map_err(|e| Failure::at(&manifest_path, e))?;
        let mut entries = Vec::with_capacity(manifest.entries.len());
        for e in &manifest.entries {
            let path: PathBuf = dir.join(&e.file);
            let record = read_sequence(&path).map_err(|err| Failure::at(&path, err))?;
            if record.label != e.label {
                return Err(Failure::usage(format!(
                    "{}: label {:?} does not match manifest label {:?}",
                    path.display(),
                    record.label,
                    e.label
                )));
            }
            entries.push(Entry { file: e.file.clone(), role: e.role, record });
        }
        if entries.is_empty() {
            return Err(Failure::usage(format!("{}: no sequences listed", manifest_path.display())));
        }
        Ok(Self { manifest, entries })
    }

    pub fn describe(&self, log: &mut RunLog) {
        for (k, v) in &self.manifest.params {
            log.note(&format!("data.{k}"), v);
        }
    }

    pub fn with_role(&self, role: Role) -> impl Iterator<Item = &Entry> {
        self.entries.iter().filter(move |e| e.role == role)
    }
}
