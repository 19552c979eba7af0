use std::path::Path;

use super::{read_text, valid_label, write_atomic};
use crate::error::{Error, Result};

pub const MANIFEST_VERSION: &str = "koopgait-manifest v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Gallery,
    Probe,
}

impl Role {
    pub fn as_str(&self) -> &'static str {
        match self {
            Role::Gallery => "gallery",
            Role::Probe => "probe",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    /// File name relative to the manifest's directory.
    pub file: String,
    pub label: String,
    pub take: usize,
    pub role: Role,
}

/// Dataset index: generation parameters and the gallery/probe split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub params: Vec<(String, String)>,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn param(&self, key: &str) -> Option<&str> {
        self.params.iter().find(|(k, _)| k == key).map(|(_, v)| v.as_str())
    }

    pub fn with_role(&self, role: Role) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.role == role)
    }

    pub fn format(&self) -> Result<String> {
        let mut out = format!("{MANIFEST_VERSION}\n");
        for (k, v) in &self.params {
            if k.is_empty() || k.contains('=') || k.contains('\n') || v.contains('\n') || k == "files" {
                return Err(Error::invalid(format!("unrepresentable manifest parameter {k:?}")));
            }
            out.push_str(&format!("{k}={v}\n"));
        }
        out.push_str("files\n");
        for e in &self.entries {
            if !valid_label(&e.file) || !valid_label(&e.label) || e.file.starts_with('.') {
                return Err(Error::invalid(format!("unrepresentable manifest entry {e:?}")));
            }
            out.push_str(&format!("{},{},{},{}\n", e.file, e.label, e.take, e.role.as_str()));
        }
        Ok(out)
    }
}

pub fn parse_manifest(text: &str) -> Result<Manifest> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    match lines.next() {
        Some((_, v)) if v == MANIFEST_VERSION => {}
        Some((n, v)) => return Err(Error::parse(n, format!("expected {MANIFEST_VERSION:?}, found {v:?}"))),
        None => return Err(Error::parse(1, "empty manifest")),
    }
    let mut params = Vec::new();
    let mut in_files = false;
    let mut entries = Vec::new();
    for (n, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        if !in_files {
            if line == "files" {
                in_files = true;
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::parse(n, format!("expected key=value, found {line:?}")))?;
            if k.is_empty() || k == "files" {
                return Err(Error::parse(n, format!("invalid parameter name {k:?}")));
            }
            params.push((k.to_string(), v.to_string()));
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 {
            return Err(Error::parse(n, format!("expected file,label,take,role; found {} fields", fields.len())));
        }
        let (file, label) = (fields[0], fields[1]);
        if !valid_label(file) || file.starts_with('.') {
            return Err(Error::parse(n, format!("invalid file name {file:?}")));
        }
        if !valid_label(label) {
            return Err(Error::parse(n, format!("invalid label {label:?}")));
        }
        let take = fields[2].parse().map_err(|_| Error::parse(n, format!("bad take index {:?}", fields[2])))?;
        let role = match fields[3] {
            "gallery" => Role::Gallery,
            "probe" => Role::Probe,
            other => return Err(Error::parse(n, format!("role must be gallery or probe, found {other:?}"))),
        };
        entries.push(ManifestEntry { file: file.to_string(), label: label.to_string(), take, role });
    }
    if !in_files {
        return Err(Error::parse(text.lines().count().max(1), "missing files section"));
    }
    Ok(Manifest { params, entries })
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    write_atomic(path, manifest.format()?.as_bytes())
}

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    parse_manifest(&read_text(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let m = Manifest {
            params: vec![("subjects".into(), "2".into()), ("noise".into(), "0.01".into())],
            entries: vec![
                ManifestEntry { file: "a_0.seq".into(), label: "a".into(), take: 0, role: Role::Gallery },
                ManifestEntry { file: "a_1.seq".into(), label: "a".into(), take: 1, role: Role::Probe },
            ],
        };
        let back = parse_manifest(&m.format().unwrap()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.param("noise"), Some("0.01"));
        assert_eq!(back.with_role(Role::Probe).count(), 1);
    }

    #[test]
    fn rejects_bad_rows() {
        assert!(matches!(parse_manifest("koopgait-manifest v1\nfiles\n../x,a,0,probe\n"), Err(Error::Parse { line: 3, .. })));
        assert!(parse_manifest("koopgait-manifest v1\nfiles\nx,a,0,other\n").is_err());
        assert!(parse_manifest("koopgait-manifest v1\nk=v\n").is_err());
        assert!(parse_manifest("nope").is_err());
        assert!(matches!(parse_manifest("koopgait-manifest v1\n=x\nfiles\n"), Err(Error::Parse { line: 2, .. })));
        assert!(parse_manifest("koopgait-manifest v1\nfiles=1\nfiles\n").is_err());
    }
}
