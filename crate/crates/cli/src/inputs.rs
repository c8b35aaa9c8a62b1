//! Loading layers, tables and hierarchies named on the command line.

use std::path::Path;

use convblock::model::LayerDoc;
use convblock::{builtin_benchmarks, EnergyMode, EnergyTable, Error, LayerShape, MemoryHierarchy, Result};
use serde::Deserialize;

use crate::{MemoryArgs, ModeArg};

const DIANNAO_JSON: &str = include_str!("../diannao.json");

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub fn energy_table(path: Option<&Path>) -> Result<EnergyTable> {
    match path {
        Some(p) => EnergyTable::from_json(&read(p)?),
        None => Ok(EnergyTable::default()),
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum LayerFile {
    Named(LayerDoc),
    Bare(LayerShape),
    Many(Vec<LayerDoc>),
}

/// A preset name, or a JSON file holding one layer or a list of them.
pub fn layers(source: &str) -> Result<Vec<LayerDoc>> {
    if let Some(shape) = builtin_benchmarks().get(source) {
        return Ok(vec![LayerDoc { name: source.to_string(), shape: *shape }]);
    }
    let path = Path::new(source);
    if !path.exists() {
        return Err(Error::UnknownLayer(source.to_string()));
    }
    let docs = match serde_json::from_str::<LayerFile>(&read(path)?)? {
        LayerFile::Named(d) => vec![d],
        LayerFile::Bare(shape) => {
            let name = path.file_stem().map_or("layer".into(), |s| s.to_string_lossy().into_owned());
            vec![LayerDoc { name, shape }]
        }
        LayerFile::Many(v) => v,
    };
    for d in &docs {
        d.shape.check()?;
    }
    Ok(docs)
}

pub fn layer(source: &str) -> Result<LayerDoc> {
    let mut docs = layers(source)?;
    if docs.len() != 1 {
        return Err(Error::InvalidLayer(format!("`{source}` holds {} layers, expected one", docs.len())));
    }
    Ok(docs.remove(0))
}

pub fn hierarchy(source: &str) -> Result<MemoryHierarchy> {
    if source.eq_ignore_ascii_case("diannao") {
        return MemoryHierarchy::from_json(DIANNAO_JSON);
    }
    MemoryHierarchy::from_json(&read(Path::new(source))?)
}

pub fn mode(m: &MemoryArgs) -> Result<EnergyMode> {
    match m.mode {
        ModeArg::Codesign => {
            if m.hierarchy.is_some() {
                return Err(Error::InvalidHierarchy("--hierarchy needs --mode fixed".into()));
            }
            Ok(EnergyMode::Codesign { budget_bytes: m.budget_kb.map(|kb| kb * 1024) })
        }
        ModeArg::Fixed => {
            if m.budget_kb.is_some() {
                return Err(Error::InvalidHierarchy("--budget-kb applies to codesign mode only".into()));
            }
            Ok(EnergyMode::fixed(hierarchy(m.hierarchy.as_deref().unwrap_or("diannao"))?))
        }
    }
}
