//! Per-access SRAM/DRAM energy as a function of memory size and width.
//!
//! The embedded grid holds pJ per 16-bit access for 1 KB .. 1 MB SRAMs at
//! four word widths. Between grid rows the energy is interpolated linearly
//! in log(size)/log(energy). Between the 1 MB row and the 16 MB DRAM
//! threshold the same rule is applied with DRAM energy as the 16 MB anchor.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const WIDTHS: [u32; 4] = [64, 128, 256, 512];
pub const SIZES_KB: [u64; 11] = [1, 2, 4, 8, 16, 32, 64, 128, 256, 512, 1024];

/// Memories this large or larger are priced as DRAM.
pub const DRAM_THRESHOLD_BYTES: u64 = 16 * 1024 * 1024;

const DEFAULT_ROWS: [[f64; 4]; 11] = [
    [1.20, 0.93, 0.69, 0.57],
    [1.54, 1.37, 0.91, 0.68],
    [2.11, 1.68, 1.34, 0.90],
    [3.19, 2.71, 2.21, 1.33],
    [4.36, 3.57, 2.66, 2.19],
    [5.82, 4.80, 3.52, 2.64],
    [8.10, 7.51, 5.79, 4.67],
    [11.66, 11.50, 8.46, 6.15],
    [15.60, 15.51, 13.09, 8.99],
    [23.37, 23.24, 17.93, 15.76],
    [36.32, 32.81, 28.88, 25.22],
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SramRow {
    pub kb: u64,
    /// pJ per 16-bit access at 64, 128, 256 and 512 bit widths.
    pub pj: [f64; 4],
}

fn default_dram_pj() -> f64 {
    320.0
}
fn default_mac_pj() -> f64 {
    1.0
}
fn default_floor() -> f64 {
    0.2
}
fn default_write_multiplier() -> f64 {
    1.0
}
fn default_rows() -> Vec<SramRow> {
    SIZES_KB
        .iter()
        .zip(DEFAULT_ROWS.iter())
        .map(|(&kb, &pj)| SramRow { kb, pj })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyTable {
    #[serde(default = "default_rows")]
    pub sram_rows: Vec<SramRow>,
    #[serde(default = "default_dram_pj")]
    pub dram_pj: f64,
    #[serde(default = "default_mac_pj")]
    pub mac_pj: f64,
    #[serde(default = "default_floor")]
    pub subkb_floor_pj: f64,
    /// Cost of a buffer write relative to a read.
    #[serde(default = "default_write_multiplier")]
    pub write_multiplier: f64,
}

impl Default for EnergyTable {
    fn default() -> Self {
        EnergyTable {
            sram_rows: default_rows(),
            dram_pj: default_dram_pj(),
            mac_pj: default_mac_pj(),
            subkb_floor_pj: default_floor(),
            write_multiplier: default_write_multiplier(),
        }
    }
}

/// Snaps a requested width to the widest column not exceeding it (64 minimum).
pub fn width_column(width_bits: u32) -> usize {
    WIDTHS.iter().rposition(|&w| w <= width_bits).unwrap_or(0)
}

impl EnergyTable {
    pub fn from_json(text: &str) -> Result<Self> {
        let t: EnergyTable = serde_json::from_str(text)?;
        t.check()?;
        Ok(t)
    }

    pub fn check(&self) -> Result<()> {
        if self.sram_rows.is_empty() {
            return Err(Error::InvalidEnergyTable("no SRAM rows".into()));
        }
        for w in self.sram_rows.windows(2) {
            if w[1].kb <= w[0].kb {
                return Err(Error::InvalidEnergyTable("rows must be sorted by size".into()));
            }
        }
        for row in &self.sram_rows {
            if row.kb == 0 || row.pj.iter().any(|&e| !(e > 0.0)) {
                return Err(Error::InvalidEnergyTable(format!("bad row for {} KB", row.kb)));
            }
        }
        let scalars = [self.dram_pj, self.subkb_floor_pj, self.write_multiplier];
        if scalars.iter().any(|&v| !(v > 0.0)) || !(self.mac_pj >= 0.0) {
            return Err(Error::InvalidEnergyTable("non-positive constant".into()));
        }
        Ok(())
    }

    /// pJ per 16-bit access of a memory holding `size_bytes` with the given word width.
    pub fn energy_per_access(&self, size_bytes: u64, width_bits: u32) -> f64 {
        if size_bytes >= DRAM_THRESHOLD_BYTES {
            return self.dram_pj;
        }
        let col = width_column(width_bits);
        let rows = &self.sram_rows;
        let kb = size_bytes.max(1) as f64 / 1024.0;
        let at = |i: usize| (rows[i].kb as f64, rows[i].pj[col]);

        if let Some(i) = rows.iter().position(|r| r.kb as f64 == kb) {
            return rows[i].pj[col];
        }
        let (k0, e0) = at(0);
        if kb < k0 {
            // Extend the first segment's slope downward, floored.
            let e = if rows.len() > 1 {
                let (k1, e1) = at(1);
                loglog(k0, e0, k1, e1, kb)
            } else {
                e0
            };
            return e.max(self.subkb_floor_pj).min(e0);
        }
        for i in 1..rows.len() {
            let (k1, e1) = at(i);
            if kb < k1 {
                let (k0, e0) = at(i - 1);
                return loglog(k0, e0, k1, e1, kb);
            }
        }
        let (kl, el) = at(rows.len() - 1);
        let dram_kb = (DRAM_THRESHOLD_BYTES / 1024) as f64;
        if kl >= dram_kb {
            return el;
        }
        loglog(kl, el, dram_kb, self.dram_pj, kb)
    }

    /// Energy of the widest column, used for broadcast-style transfers.
    pub fn widest_energy(&self, size_bytes: u64) -> f64 {
        self.energy_per_access(size_bytes, *WIDTHS.last().unwrap())
    }
}

fn loglog(k0: f64, e0: f64, k1: f64, e1: f64, k: f64) -> f64 {
    let t = (k / k0).ln() / (k1 / k0).ln();
    (e0.ln() + t * (e1 / e0).ln()).exp()
}
