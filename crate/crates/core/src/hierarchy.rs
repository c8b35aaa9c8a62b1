//! Fixed memory hierarchies described as capacity pools.
//!
//! Each level is a pool of a given capacity and word width. A pool may be
//! restricted to some buffer kinds, which is how separate input, kernel and
//! output SRAMs sitting side by side are described. The last level is DRAM.

use serde::{Deserialize, Serialize};

use crate::analysis::BufferKind;
use crate::energy::EnergyTable;
use crate::error::{Error, Result};
use crate::model::{divisors, BlockingString, Dim, LayerShape, Loop};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum MemKind {
    Regfile,
    Sram,
    Dram,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MemLevel {
    pub name: Option<String>,
    /// `None` for DRAM.
    pub capacity_bytes: Option<u64>,
    pub width_bits: u32,
    pub kind: MemKind,
    /// Buffer kinds allowed in this pool; `None` admits all of them.
    pub holds: Option<Vec<BufferKind>>,
}

impl MemLevel {
    pub fn sram(capacity_bytes: u64, width_bits: u32) -> Self {
        MemLevel {
            name: None,
            capacity_bytes: Some(capacity_bytes),
            width_bits,
            kind: MemKind::Sram,
            holds: None,
        }
    }

    pub fn dram() -> Self {
        MemLevel {
            name: Some("DRAM".into()),
            capacity_bytes: None,
            width_bits: 64,
            kind: MemKind::Dram,
            holds: None,
        }
    }

    pub fn named(mut self, name: &str) -> Self {
        self.name = Some(name.to_string());
        self
    }

    pub fn holding(mut self, kinds: &[BufferKind]) -> Self {
        self.holds = Some(kinds.to_vec());
        self
    }

    pub fn accepts(&self, kind: BufferKind) -> bool {
        self.holds.as_ref().is_none_or(|h| h.contains(&kind))
    }

    pub fn is_dram(&self) -> bool {
        self.kind == MemKind::Dram
    }

    pub fn energy(&self, table: &EnergyTable) -> f64 {
        match self.capacity_bytes {
            None => table.dram_pj,
            Some(cap) => table.energy_per_access(cap, self.width_bits),
        }
    }

    pub fn label(&self, index: usize) -> String {
        self.name.clone().unwrap_or_else(|| format!("L{index}"))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MemoryHierarchy {
    levels: Vec<MemLevel>,
}

impl MemoryHierarchy {
    /// Validates: exactly one DRAM level, last; per buffer kind, the
    /// capacities of the pools admitting it strictly increase.
    pub fn new(levels: Vec<MemLevel>) -> Result<Self> {
        let Some(last) = levels.last() else {
            return Err(Error::InvalidHierarchy("no levels".into()));
        };
        if !last.is_dram() || last.capacity_bytes.is_some() {
            return Err(Error::InvalidHierarchy("the last level must be unbounded DRAM".into()));
        }
        for (i, l) in levels[..levels.len() - 1].iter().enumerate() {
            if l.is_dram() {
                return Err(Error::InvalidHierarchy(format!("level {i}: DRAM must be the last level")));
            }
            match l.capacity_bytes {
                Some(c) if c > 0 => {}
                _ => return Err(Error::InvalidHierarchy(format!("level {i}: capacity must be positive"))),
            }
        }
        for kind in BufferKind::ALL {
            let mut prev = 0;
            for l in levels.iter().filter(|l| !l.is_dram() && l.accepts(kind)) {
                let cap = l.capacity_bytes.unwrap();
                if cap <= prev {
                    return Err(Error::InvalidHierarchy(format!(
                        "capacities of pools holding {kind} must strictly increase"
                    )));
                }
                prev = cap;
            }
        }
        Ok(MemoryHierarchy { levels })
    }

    pub fn levels(&self) -> &[MemLevel] {
        &self.levels
    }

    pub fn dram_index(&self) -> usize {
        self.levels.len() - 1
    }

    pub fn onchip_bytes(&self) -> u64 {
        self.levels.iter().filter_map(|l| l.capacity_bytes).sum()
    }

    /// Separate 2 KB input, 32 KB kernel and 2 KB output SRAMs in front of DRAM.
    ///
    /// Widths follow the datapath: 16 inputs and 16 outputs per cycle (256
    /// bits) and 256 kernel values per cycle (capped at the widest column).
    pub fn diannao() -> Self {
        MemoryHierarchy::new(vec![
            MemLevel::sram(2 * 1024, 256).named("NBin").holding(&[BufferKind::Input]),
            MemLevel::sram(32 * 1024, 512).named("SB").holding(&[BufferKind::Kernel]),
            MemLevel::sram(2 * 1024, 256).named("NBout").holding(&[BufferKind::Output]),
            MemLevel::dram(),
        ])
        .expect("preset hierarchy is valid")
    }

    /// DianNao's own loop nest with 16-wide input and output channel blocks,
    /// blocked once more in x: the x block is the largest one whose input
    /// tile, reused across all kernels, fits the 2 KB input buffer.
    ///
    /// Innermost first: `C(ti) K(tn) C Fw Fh X(tx) K X Y`.
    pub fn diannao_baseline(layer: &LayerShape) -> BlockingString {
        let near16 = |n: u64| divisors(n).into_iter().filter(|&d| d <= 16).max().unwrap_or(1);
        let ib_bytes = |tx: u64| (tx + layer.fw - 1) * layer.fh * layer.c * layer.n * layer.bytes_per_element();
        let tx = divisors(layer.x).into_iter().filter(|&d| ib_bytes(d) <= 2 * 1024).max().unwrap_or(1);
        let wanted = [
            (Dim::C, near16(layer.c)),
            (Dim::K, near16(layer.k)),
            (Dim::C, layer.c),
            (Dim::Fw, layer.fw),
            (Dim::Fh, layer.fh),
            (Dim::X, tx),
            (Dim::K, layer.k),
            (Dim::X, layer.x),
            (Dim::Y, layer.y),
            (Dim::N, layer.n),
        ];
        let mut cur = [1u64; 7];
        let mut loops = Vec::new();
        for (d, e) in wanted {
            if e > cur[d.index()] {
                cur[d.index()] = e;
                loops.push(Loop::new(d, e));
            }
        }
        if loops.is_empty() {
            return BlockingString::unblocked(layer);
        }
        BlockingString::new(loops)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: HierarchyDoc = serde_json::from_str(text)?;
        doc.try_into()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&HierarchyDoc::from(self)).expect("hierarchy serializes")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct LevelDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    kb: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    bytes: Option<u64>,
    #[serde(default = "default_width")]
    width: u32,
    kind: MemKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    holds: Option<Vec<BufferKind>>,
}

fn default_width() -> u32 {
    64
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct HierarchyDoc {
    levels: Vec<LevelDoc>,
}

impl TryFrom<HierarchyDoc> for MemoryHierarchy {
    type Error = Error;

    fn try_from(doc: HierarchyDoc) -> Result<Self> {
        let levels = doc
            .levels
            .into_iter()
            .map(|l| {
                let capacity_bytes = match (l.kind, l.bytes, l.kb) {
                    (MemKind::Dram, _, _) => None,
                    (_, Some(b), _) => Some(b),
                    (_, None, Some(kb)) => Some((kb * 1024.0).round() as u64),
                    (_, None, None) => {
                        return Err(Error::InvalidHierarchy("on-chip level needs `kb` or `bytes`".into()))
                    }
                };
                Ok(MemLevel {
                    name: l.name,
                    capacity_bytes,
                    width_bits: l.width,
                    kind: l.kind,
                    holds: l.holds,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        MemoryHierarchy::new(levels)
    }
}

impl From<&MemoryHierarchy> for HierarchyDoc {
    fn from(h: &MemoryHierarchy) -> Self {
        HierarchyDoc {
            levels: h
                .levels
                .iter()
                .map(|l| {
                    let (kb, bytes) = match l.capacity_bytes {
                        Some(b) if b % 1024 == 0 => (Some((b / 1024) as f64), None),
                        Some(b) => (None, Some(b)),
                        None => (None, None),
                    };
                    LevelDoc {
                        name: l.name.clone(),
                        kb,
                        bytes,
                        width: l.width_bits,
                        kind: l.kind,
                        holds: l.holds.clone(),
                    }
                })
                .collect(),
        }
    }
}

impl Serialize for MemoryHierarchy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        HierarchyDoc::from(self).serialize(s)
    }
}

impl<'de> Deserialize<'de> for MemoryHierarchy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        HierarchyDoc::deserialize(d)?.try_into().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use crate::model::{builtin_benchmarks, validate_blocking};

    #[test]
    fn diannao_baseline_is_valid_and_fits_where_possible() {
        for (name, l) in builtin_benchmarks() {
            let bs = MemoryHierarchy::diannao_baseline(&l);
            assert!(validate_blocking(&bs, &l).is_ok(), "{name}: {bs}");
        }
        let l = LayerShape::new(16, 16, 4, 32, 3, 3).unwrap();
        // (tx + 2) * 3 * 4 * 2 bytes <= 2048 allows tx = 16.
        assert_eq!(MemoryHierarchy::diannao_baseline(&l).to_string(), "C(4) K(16) Fw(3) Fh(3) X(16) K(32) Y(16)");
    }

    use super::*;

    #[test]
    fn parses_simple_json() {
        let h = MemoryHierarchy::from_json(
            r#"{"levels":[{"kb":2,"width":64,"kind":"SRAM"},{"kb":256,"width":128,"kind":"SRAM"},{"kind":"DRAM"}]}"#,
        )
        .unwrap();
        assert_eq!(h.levels().len(), 3);
        assert_eq!(h.levels()[1].capacity_bytes, Some(256 * 1024));
        assert_eq!(h.onchip_bytes(), 258 * 1024);
    }

    #[test]
    fn diannao_round_trips() {
        let h = MemoryHierarchy::diannao();
        let back = MemoryHierarchy::from_json(&h.to_json()).unwrap();
        assert_eq!(h, back);
        assert!(h.levels()[0].accepts(BufferKind::Input));
        assert!(!h.levels()[0].accepts(BufferKind::Kernel));
    }

    #[test]
    fn rejects_bad_orderings() {
        let shrinking = vec![MemLevel::sram(4096, 64), MemLevel::sram(2048, 64), MemLevel::dram()];
        assert!(MemoryHierarchy::new(shrinking).is_err());
        assert!(MemoryHierarchy::new(vec![MemLevel::sram(4096, 64)]).is_err());
        let two_dram = vec![MemLevel::dram(), MemLevel::dram()];
        assert!(MemoryHierarchy::new(two_dram).is_err());
    }
}
