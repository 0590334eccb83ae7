//! Topology registry: one `<code>.json` descriptor plus `<code>.net` netlist per
//! library topology, and the same pair per oracle family.

use std::path::{Path, PathBuf};

use invdes_core::circuit::{TopologyEntry, TopologySpec, LIBRARY_SIZE};

use crate::{io, Error, Result};

/// Environment variable that replaces the bundled registry directory.
pub const REGISTRY_ENV: &str = "FALCON_REGISTRY";

#[derive(Debug, Clone)]
pub struct Registry {
    pub root: PathBuf,
    /// Library topologies ordered by class id.
    pub topologies: Vec<TopologyEntry>,
    pub oracle: Vec<TopologyEntry>,
}

impl Registry {
    pub fn bundled_path() -> PathBuf {
        Path::new(env!("CARGO_MANIFEST_DIR")).join("registry")
    }

    /// `--registry` if given, else `$FALCON_REGISTRY`, else the bundled one.
    pub fn resolve(flag: Option<&Path>) -> PathBuf {
        if let Some(p) = flag {
            return p.to_path_buf();
        }
        match std::env::var_os(REGISTRY_ENV) {
            Some(v) if !v.is_empty() => PathBuf::from(v),
            _ => Self::bundled_path(),
        }
    }

    pub fn bundled() -> Result<Self> {
        Self::load(&Self::bundled_path())
    }

    pub fn load(root: &Path) -> Result<Self> {
        if !root.is_dir() {
            return Err(Error::Usage(format!("registry {} is not a directory", root.display())));
        }
        let mut topologies = load_dir(&root.join("topologies"))?;
        topologies.sort_by_key(|e| e.spec.id);
        let ids: Vec<usize> = topologies.iter().map(|e| e.spec.id).collect();
        if ids != (0..LIBRARY_SIZE).collect::<Vec<_>>() {
            return Err(Error::Invalid(format!(
                "registry {} must hold topology ids 0..{LIBRARY_SIZE} exactly once, found {ids:?}",
                root.display()
            )));
        }
        let mut oracle = load_dir(&root.join("oracle"))?;
        oracle.sort_by_key(|e| e.spec.id);
        Ok(Registry {
            root: root.to_path_buf(),
            topologies,
            oracle,
        })
    }

    /// The 20 classes used for training and design. Classes with an oracle
    /// family are represented by that family, since that is where labeled
    /// data comes from.
    pub fn library(&self) -> Vec<TopologyEntry> {
        self.topologies
            .iter()
            .map(|t| {
                self.oracle
                    .iter()
                    .find(|o| o.spec.id == t.spec.id)
                    .unwrap_or(t)
                    .clone()
            })
            .collect()
    }

    /// Looks up an entry by code (library or oracle, case-insensitive) or
    /// by class id (resolved through [`Registry::library`]).
    pub fn find(&self, key: &str) -> Option<TopologyEntry> {
        if let Ok(id) = key.parse::<usize>() {
            return self.library().into_iter().find(|e| e.spec.id == id);
        }
        self.topologies
            .iter()
            .chain(&self.oracle)
            .find(|e| e.spec.code.eq_ignore_ascii_case(key))
            .cloned()
    }
}

fn load_dir(dir: &Path) -> Result<Vec<TopologyEntry>> {
    let mut out = Vec::new();
    let listing = std::fs::read_dir(dir).map_err(|source| Error::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths: Vec<PathBuf> = listing
        .filter_map(|d| d.ok().map(|d| d.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    paths.sort();
    for path in paths {
        out.push(load_entry(&path)?);
    }
    Ok(out)
}

/// Reads a descriptor and its netlist and checks that they agree and build.
pub fn load_entry(spec_path: &Path) -> Result<TopologyEntry> {
    let spec: TopologySpec = io::read_json(spec_path)?;
    spec.validate()?;
    let net_path = spec_path.with_file_name(&spec.netlist);
    let netlist_text = io::read_text(&net_path)?;
    let entry = TopologyEntry { spec, netlist_text };
    entry.graph().map_err(|e| {
        Error::Invalid(format!("{}: {e}", net_path.display()))
    })?;
    Ok(entry)
}
