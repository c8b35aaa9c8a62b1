//! Literal loop-nest interpreter used as an oracle for the analytic counts.
//!
//! Buffer placement (kind and owning loop) comes from the analysis, but
//! everything else is measured: each buffer keeps a stamp per tensor
//! element recording the tile it was last loaded in, so footprints, fills
//! and transfers are observed rather than computed.

use std::collections::{BTreeMap, HashMap};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    access_counts_with, derive_buffers_with, AccessProfile, AnalysisOptions, BufferAlloc, BufferKind, PerKind,
};
use crate::error::{Error, Result};
use crate::model::{validate_blocking, BlockingString, Dim, LayerShape};

pub const DEFAULT_MAC_CAP: u64 = 100_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimOptions {
    pub mac_cap: u64,
    pub analysis: AnalysisOptions,
    /// Also replay the element trace through LRU caches of these capacities
    /// (in elements, innermost first).
    pub lru_capacities: Vec<u64>,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { mac_cap: DEFAULT_MAC_CAP, analysis: AnalysisOptions::default(), lru_capacities: Vec::new() }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimBuffer {
    pub kind: BufferKind,
    pub level: usize,
    pub owner_pos: usize,
    /// Most distinct elements held during any one tile.
    pub peak_tile_elements: u64,
    pub fills: u64,
    pub elements_transferred: u64,
    pub reads_served: u64,
    pub writes_served: u64,
    pub writebacks: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LruLevel {
    pub capacity: u64,
    pub accesses: u64,
    pub misses: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimTrace {
    pub buffers: Vec<SimBuffer>,
    pub dram_reads: PerKind<u64>,
    pub dram_writes: u64,
    pub mac_count: u64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lru: Vec<LruLevel>,
}

struct BufState {
    stamp: Vec<u64>,
    tile: u64,
    shifted: bool,
    tile_elements: u64,
}

/// Runs the loop nest with the buffers the analysis derives for it.
pub fn simulate(bs: &BlockingString, layer: &LayerShape, opts: &SimOptions) -> Result<SimTrace> {
    let allocs = derive_buffers_with(bs, layer, &opts.analysis)?;
    simulate_allocs(&allocs, bs, layer, opts)
}

/// Runs the loop nest with an explicit buffer placement.
pub fn simulate_allocs(
    allocs: &[BufferAlloc],
    bs: &BlockingString,
    layer: &LayerShape,
    opts: &SimOptions,
) -> Result<SimTrace> {
    validate_blocking(bs, layer).into_result()?;
    let macs = layer.total_macs();
    if macs > opts.mac_cap {
        return Err(Error::CapExceeded { macs, cap: opts.mac_cap });
    }
    let loops = bs.loops();
    let n = loops.len();
    let trips = bs.trip_counts();
    let mut step = vec![1u64; n];
    let mut last = [1u64; 7];
    for (j, l) in loops.iter().enumerate() {
        step[j] = last[l.dim.index()];
        last[l.dim.index()] = l.extent;
    }

    let ix = layer.x + layer.fw - 1;
    let iy = layer.y + layer.fh - 1;
    let tensor_len = PerKind {
        input: layer.n * ix * iy * layer.c,
        kernel: layer.fw * layer.fh * layer.c * layer.k,
        output: layer.n * layer.x * layer.y * layer.k,
    };

    let mut chains: [Vec<usize>; 3] = Default::default();
    for (i, a) in allocs.iter().enumerate() {
        chains[a.kind.index()].push(i);
    }
    for c in &mut chains {
        c.sort_by_key(|&i| allocs[i].level);
    }
    let mut out: Vec<SimBuffer> = allocs
        .iter()
        .map(|a| SimBuffer {
            kind: a.kind,
            level: a.level,
            owner_pos: a.owner_pos,
            peak_tile_elements: 0,
            fills: 0,
            elements_transferred: 0,
            reads_served: 0,
            writes_served: 0,
            writebacks: 0,
        })
        .collect();
    let mut state: Vec<BufState> = allocs
        .iter()
        .map(|a| BufState {
            stamp: vec![0; *tensor_len.get(a.kind) as usize],
            tile: 0,
            shifted: false,
            tile_elements: 0,
        })
        .collect();
    let mut dram_reads = PerKind::default();
    let mut dram_writes = 0;
    let mut lru = Lru::new(&opts.lru_capacities);

    let mut idx = vec![0u64; n];
    let mut coord = [0u64; 7];
    let mut carry = n;
    let mut mac_count = 0u64;
    loop {
        for (i, a) in allocs.iter().enumerate() {
            if carry > a.owner_pos {
                let st = &mut state[i];
                let b = &mut out[i];
                b.fills += 1;
                b.peak_tile_elements = b.peak_tile_elements.max(st.tile_elements);
                st.tile += 1;
                st.tile_elements = 0;
                st.shifted = opts.analysis.shift_window
                    && a.kind == BufferKind::Input
                    && a.level == 0
                    && carry < n
                    && loops[carry].dim == Dim::X
                    && (a.owner_pos + 1..carry).all(|j| trips[j] == 1);
            }
        }

        let c = |d: Dim| coord[d.index()];
        let addr = PerKind {
            input: ((c(Dim::N) * ix + c(Dim::X) + c(Dim::Fw)) * iy + c(Dim::Y) + c(Dim::Fh)) * layer.c + c(Dim::C),
            kernel: ((c(Dim::Fw) * layer.fh + c(Dim::Fh)) * layer.c + c(Dim::C)) * layer.k + c(Dim::K),
            output: ((c(Dim::N) * layer.x + c(Dim::X)) * layer.y + c(Dim::Y)) * layer.k + c(Dim::K),
        };
        mac_count += 1;
        for kind in BufferKind::ALL {
            let e = *addr.get(kind) as usize;
            lru.access(kind, e as u64);
            let is_out = kind == BufferKind::Output;
            // Walk up the chain until a buffer already holds the element.
            let mut reached_dram = true;
            for (pos, &i) in chains[kind.index()].iter().enumerate() {
                let b = &mut out[i];
                if pos == 0 {
                    b.reads_served += 1;
                    if is_out {
                        b.writes_served += 1;
                    }
                }
                let st = &mut state[i];
                if st.stamp[e] == st.tile {
                    reached_dram = false;
                    break;
                }
                let retained = st.shifted && st.stamp[e] + 1 == st.tile;
                st.stamp[e] = st.tile;
                st.tile_elements += 1;
                if retained {
                    reached_dram = false;
                    break;
                }
                b.elements_transferred += 1;
                if is_out {
                    // Each loaded partial sum is written back once when its tile retires.
                    b.writebacks += 1;
                }
                if let Some(&parent) = chains[kind.index()].get(pos + 1) {
                    out[parent].reads_served += 1;
                    if is_out {
                        out[parent].writes_served += 1;
                    }
                }
            }
            if reached_dram {
                *dram_reads.get_mut(kind) += 1;
                if is_out {
                    dram_writes += 1;
                }
            }
        }

        // Advance the mixed-radix counter.
        carry = usize::MAX;
        for j in 0..n {
            let d = loops[j].dim.index();
            if idx[j] + 1 < trips[j] {
                idx[j] += 1;
                coord[d] += step[j];
                carry = j;
                break;
            }
            coord[d] -= step[j] * idx[j];
            idx[j] = 0;
        }
        if carry == usize::MAX {
            break;
        }
    }
    for (b, st) in out.iter_mut().zip(&state) {
        b.peak_tile_elements = b.peak_tile_elements.max(st.tile_elements);
    }
    Ok(SimTrace { buffers: out, dram_reads, dram_writes, mac_count, lru: lru.finish() })
}

/// Inclusive LRU caches over a shared element address space.
struct Lru {
    levels: Vec<LruCache>,
}

struct LruCache {
    capacity: u64,
    clock: u64,
    by_addr: HashMap<u64, u64>,
    by_time: BTreeMap<u64, u64>,
    accesses: u64,
    misses: u64,
}

impl Lru {
    fn new(capacities: &[u64]) -> Lru {
        Lru {
            levels: capacities
                .iter()
                .map(|&capacity| LruCache {
                    capacity,
                    clock: 0,
                    by_addr: HashMap::new(),
                    by_time: BTreeMap::new(),
                    accesses: 0,
                    misses: 0,
                })
                .collect(),
        }
    }

    fn access(&mut self, kind: BufferKind, addr: u64) {
        let key = addr * 3 + kind.index() as u64;
        for cache in &mut self.levels {
            cache.accesses += 1;
            cache.clock += 1;
            let hit = match cache.by_addr.insert(key, cache.clock) {
                Some(t) => {
                    cache.by_time.remove(&t);
                    true
                }
                None => false,
            };
            cache.by_time.insert(cache.clock, key);
            if cache.by_addr.len() as u64 > cache.capacity {
                if let Some((_, victim)) = cache.by_time.pop_first() {
                    cache.by_addr.remove(&victim);
                }
            }
            if hit {
                return;
            }
            cache.misses += 1;
        }
    }

    fn finish(self) -> Vec<LruLevel> {
        self.levels
            .into_iter()
            .map(|c| LruLevel { capacity: c.capacity, accesses: c.accesses, misses: c.misses })
            .collect()
    }
}

/// One field on which the analytic model and the simulator disagree.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diff {
    pub field: String,
    pub analytic: String,
    pub simulated: String,
}

pub fn check_equivalence(bs: &BlockingString, layer: &LayerShape) -> Result<Vec<Diff>> {
    check_equivalence_with(bs, layer, &SimOptions::default())
}

pub fn check_equivalence_with(bs: &BlockingString, layer: &LayerShape, opts: &SimOptions) -> Result<Vec<Diff>> {
    let allocs = derive_buffers_with(bs, layer, &opts.analysis)?;
    check_allocs(&allocs, bs, layer, opts)
}

/// Compares the analytic profile computed from `allocs` against a
/// simulation with the same placement. Empty means exact agreement.
pub fn check_allocs(
    allocs: &[BufferAlloc],
    bs: &BlockingString,
    layer: &LayerShape,
    opts: &SimOptions,
) -> Result<Vec<Diff>> {
    let profile = access_counts_with(allocs, bs, layer, &opts.analysis)?;
    let trace = simulate_allocs(allocs, bs, layer, opts)?;
    Ok(diff(allocs, &profile, &trace, &opts.analysis))
}

pub fn diff(allocs: &[BufferAlloc], p: &AccessProfile, t: &SimTrace, opts: &AnalysisOptions) -> Vec<Diff> {
    let mut out = Vec::new();
    let mut cmp = |field: String, a: String, s: String| {
        if a != s {
            out.push(Diff { field, analytic: a, simulated: s });
        }
    };
    cmp("mac_count".into(), p.total_macs.to_string(), t.mac_count.to_string());
    for ((a, c), s) in allocs.iter().zip(&p.buffers).zip(&t.buffers) {
        let name = format!("{}{}", a.kind, a.level);
        if !opts.shift_window || a.kind != BufferKind::Input || a.level != 0 {
            cmp(format!("{name}.size"), a.size_elements.to_string(), s.peak_tile_elements.to_string());
        }
        cmp(format!("{name}.fills"), c.fills.to_string(), s.fills.to_string());
        cmp(
            format!("{name}.elements_read_from_parent"),
            c.elements_read_from_parent.to_string(),
            s.elements_transferred.to_string(),
        );
        cmp(format!("{name}.reads_served"), c.reads_served.to_string(), s.reads_served.to_string());
        cmp(format!("{name}.writes_served"), c.writes_served.to_string(), s.writes_served.to_string());
        cmp(format!("{name}.writebacks"), c.writebacks.to_string(), s.writebacks.to_string());
        let sim_rr = if s.elements_transferred == 0 {
            "undefined".to_string()
        } else {
            Ratio::new(s.reads_served + s.writes_served, s.elements_transferred).to_string()
        };
        cmp(format!("{name}.refetch_rate"), a.refetch_rate.to_string(), sim_rr);
    }
    for kind in BufferKind::ALL {
        cmp(
            format!("dram_reads.{kind}"),
            p.dram_reads.get(kind).to_string(),
            t.dram_reads.get(kind).to_string(),
        );
    }
    cmp("dram_writes".into(), p.dram_writes.to_string(), t.dram_writes.to_string());
    out
}
