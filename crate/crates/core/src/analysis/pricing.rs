use std::fmt;

use serde::{Deserialize, Serialize};

use super::buffers::Layout;
use super::{
    access_counts_with, derive_buffers_with, AccessProfile, AnalysisOptions, BufferAlloc, BufferKind, PerKind,
    OB_UPDATE_FACTOR,
};
use crate::energy::{width_column, EnergyTable, WIDTHS};
use crate::error::{Error, Result};
use crate::hierarchy::MemoryHierarchy;
use crate::model::{BlockingString, LayerShape};

/// Chains longer than this only consider keeping a prefix on chip.
const SUBSET_LIMIT: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum EnergyMode {
    /// Every buffer gets a memory of its own size. With a budget, the total
    /// on-chip bytes are capped and the cheapest buffers to drop live in DRAM.
    Codesign {
        #[serde(default, skip_serializing_if = "Option::is_none")]
        budget_bytes: Option<u64>,
    },
    /// Buffers are packed into the given pools.
    Fixed { hierarchy: MemoryHierarchy },
    /// A fixed set of single-buffer memories. Each holds at most one buffer
    /// of its kind; buffers left without one live in DRAM.
    Memories { memories: Vec<MemorySpec> },
}

/// One memory of a co-designed chip.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MemorySpec {
    pub bytes: u64,
    pub width_bits: u32,
    pub kind: BufferKind,
}

impl MemorySpec {
    /// A memory sized for one buffer, at the widest word that fits.
    pub fn dedicated(kind: BufferKind, bytes: u64) -> Self {
        let bits = bytes.saturating_mul(8).min(u32::MAX as u64) as u32;
        MemorySpec { bytes, width_bits: WIDTHS[width_column(bits)], kind }
    }

    pub fn energy(&self, table: &EnergyTable) -> f64 {
        table.energy_per_access(self.bytes, self.width_bits)
    }
}

impl EnergyMode {
    pub fn codesign() -> Self {
        EnergyMode::Codesign { budget_bytes: None }
    }

    pub fn budget(bytes: u64) -> Self {
        EnergyMode::Codesign { budget_bytes: Some(bytes) }
    }

    pub fn fixed(hierarchy: MemoryHierarchy) -> Self {
        EnergyMode::Fixed { hierarchy }
    }

    pub fn memories(mut memories: Vec<MemorySpec>) -> Self {
        memories.sort();
        EnergyMode::Memories { memories }
    }
}

/// Where a buffer lives once priced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "at", content = "level", rename_all = "snake_case")]
pub enum Placement {
    /// A memory sized for this buffer alone.
    Dedicated,
    /// Index of a hierarchy level, or of a memory in `Memories` mode.
    Pool(usize),
    /// Not kept: consumers are served by the next buffer up or by DRAM.
    Dram,
}

impl Placement {
    pub fn on_chip(self) -> bool {
        self != Placement::Dram
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackingPlan {
    /// Hierarchy level per allocation; the DRAM index means not packed.
    pub assignment: Vec<usize>,
    /// Bytes used per level (DRAM included, last).
    pub occupancy: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BufferEnergy {
    pub kind: BufferKind,
    pub level: usize,
    pub size_bytes: u64,
    pub placement: Placement,
    /// Energy per 16-bit access of the memory holding the buffer.
    pub pj_per_access: f64,
    pub reads: u64,
    pub writes: u64,
    pub pj: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub buffers: Vec<BufferEnergy>,
    pub per_kind_pj: PerKind<f64>,
    pub dram_pj: f64,
    pub dram_pj_by_kind: PerKind<f64>,
    pub dram_reads: PerKind<u64>,
    pub dram_writes: u64,
    /// Fixed mode: on-chip energy per hierarchy level.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_level_pj: Vec<f64>,
    pub onchip_bytes: u64,
    pub total_macs: u64,
    pub mac_pj_total: f64,
    pub total_pj: f64,
    pub pj_per_mac: f64,
}

impl EnergyReport {
    pub fn buffer_pj(&self) -> f64 {
        self.buffers.iter().fold(0.0, |a, b| a + b.pj)
    }
}

pub fn schedule_energy(
    bs: &BlockingString,
    layer: &LayerShape,
    mode: &EnergyMode,
    table: &EnergyTable,
) -> Result<EnergyReport> {
    schedule_energy_with(bs, layer, mode, table, &AnalysisOptions::default())
}

pub fn schedule_energy_with(
    bs: &BlockingString,
    layer: &LayerShape,
    mode: &EnergyMode,
    table: &EnergyTable,
    opts: &AnalysisOptions,
) -> Result<EnergyReport> {
    let allocs = derive_buffers_with(bs, layer, opts)?;
    let profile = access_counts_with(&allocs, bs, layer, opts)?;
    Ok(price(&allocs, &profile, layer, mode, table)?.0)
}

/// Prices counted accesses. Each transfer is charged once, at the memory
/// serving it: a consumer (compute or a buffer being filled) is charged
/// at its nearest kept ancestor, or at DRAM.
pub(crate) fn price(
    allocs: &[BufferAlloc],
    profile: &AccessProfile,
    layer: &LayerShape,
    mode: &EnergyMode,
    table: &EnergyTable,
) -> Result<(EnergyReport, Option<PackingPlan>)> {
    let chains = Chains::from_profile(allocs, profile, layer.bytes_per_element());
    let Decision { placements, energies, plan, total_pj: decided_pj, .. } = decide(&chains, mode, table)?;

    let w = table.write_multiplier;
    let mut buffers: Vec<BufferEnergy> = chains
        .nodes()
        .map(|nd| BufferEnergy {
            kind: nd.kind,
            level: allocs[nd.alloc].level,
            size_bytes: nd.bytes,
            placement: placements[nd.alloc],
            pj_per_access: if placements[nd.alloc].on_chip() { energies[nd.alloc] } else { 0.0 },
            reads: 0,
            writes: 0,
            pj: 0.0,
        })
        .collect();
    let mut per_kind_pj = PerKind::default();
    let mut dram_pj_by_kind = PerKind::default();
    let mut dram_reads = PerKind::default();
    let mut dram_writes = 0;
    for kind in BufferKind::ALL {
        let chain = chains.get(kind);
        let mut server: Option<usize> = None;
        for j in (0..=chain.nodes.len()).rev() {
            if j > 0 && !placements[chain.nodes[j - 1].alloc].on_chip() {
                continue;
            }
            let (r, wr) = chain.demand(j);
            match server {
                Some(s) => {
                    let b = &mut buffers[s];
                    b.reads += r;
                    b.writes += wr;
                    let pj = (r as f64 + w * wr as f64) * b.pj_per_access;
                    b.pj += pj;
                    *per_kind_pj.get_mut(kind) += pj;
                }
                None => {
                    *dram_reads.get_mut(kind) += r;
                    if kind == BufferKind::Output {
                        dram_writes += wr;
                    }
                    *dram_pj_by_kind.get_mut(kind) += (r as f64 + w * wr as f64) * table.dram_pj;
                }
            }
            if j > 0 {
                server = Some(chain.nodes[j - 1].alloc);
            }
        }
    }

    let dram_pj = dram_pj_by_kind.input + dram_pj_by_kind.kernel + dram_pj_by_kind.output;
    let per_level_pj = match (&plan, mode) {
        (Some(plan), EnergyMode::Fixed { hierarchy }) => {
            let mut v = vec![0.0; hierarchy.levels().len()];
            for (b, &l) in buffers.iter().zip(&plan.assignment) {
                v[l] += b.pj;
            }
            v[hierarchy.dram_index()] = dram_pj;
            v
        }
        _ => Vec::new(),
    };
    let onchip_bytes = buffers.iter().filter(|b| b.placement.on_chip()).map(|b| b.size_bytes).sum();
    let mac_pj_total = profile.total_macs as f64 * table.mac_pj;
    let total_pj = buffers.iter().map(|b| b.pj).sum::<f64>() + dram_pj + mac_pj_total;
    debug_assert!((total_pj - decided_pj).abs() <= 1e-9 * total_pj.max(1.0));
    let report = EnergyReport {
        buffers,
        per_kind_pj,
        dram_pj,
        dram_pj_by_kind,
        dram_reads,
        dram_writes,
        per_level_pj,
        onchip_bytes,
        total_macs: profile.total_macs,
        mac_pj_total,
        total_pj,
        pj_per_mac: total_pj / profile.total_macs as f64,
    };
    Ok((report, plan))
}

/// Price of a string without the per-buffer report.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Evaluation {
    pub total_pj: f64,
    pub onchip_bytes: u64,
    /// Kind and bytes of every buffer kept on chip, in allocation order.
    pub kept: Vec<(BufferKind, u64)>,
}

/// Fast path for search. `bs` must already be valid for `layer`.
pub(crate) fn evaluate(
    bs: &BlockingString,
    layer: &LayerShape,
    mode: &EnergyMode,
    table: &EnergyTable,
    opts: &AnalysisOptions,
) -> Result<Evaluation> {
    let layout = Layout::new(bs);
    let chains = Chains::from_layout(&layout, bs, layer.bytes_per_element(), opts);
    let d = decide(&chains, mode, table)?;
    let kept = chains
        .nodes()
        .filter(|n| d.placements[n.alloc].on_chip())
        .map(|n| (n.kind, n.bytes))
        .collect();
    Ok(Evaluation { total_pj: d.total_pj, onchip_bytes: d.onchip_bytes, kept })
}

/// A buffer as seen by pricing.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Node {
    /// Index in the allocation list.
    pub alloc: usize,
    pub kind: BufferKind,
    pub bytes: u64,
    pub loads: u64,
    pub writebacks: u64,
    /// Reads plus writes served to the child or to compute.
    pub served: u64,
}

#[derive(Debug, Clone, Default)]
pub(crate) struct Chain {
    compute: (u64, u64),
    nodes: Vec<Node>,
}

impl Chain {
    /// Demand of consumer `j`: 0 is compute, `i + 1` is buffer `i` filling.
    fn demand(&self, j: usize) -> (u64, u64) {
        if j == 0 {
            self.compute
        } else {
            let n = &self.nodes[j - 1];
            (n.loads, n.writebacks)
        }
    }

    /// Energy of serving the chain with the kept buffers priced at `energy`.
    fn cost(&self, kept: impl Fn(usize) -> bool, energy: impl Fn(usize) -> f64, dram_pj: f64, w: f64) -> f64 {
        let mut server = dram_pj;
        let mut total = 0.0;
        for j in (0..=self.nodes.len()).rev() {
            if j > 0 && !kept(j - 1) {
                continue;
            }
            let (r, wr) = self.demand(j);
            total += (r as f64 + w * wr as f64) * server;
            if j > 0 {
                server = energy(j - 1);
            }
        }
        total
    }
}

/// Per-kind buffer chains, with allocation indices in kind-then-level order.
pub(crate) struct Chains {
    chains: [Chain; 3],
    len: usize,
    total_macs: u64,
}

impl Chains {
    fn build(total_macs: u64, mut nodes: Vec<Node>) -> Chains {
        let mut chains: [Chain; 3] = Default::default();
        for kind in BufferKind::ALL {
            let c = &mut chains[kind.index()];
            c.compute = match kind {
                BufferKind::Output => (total_macs, (OB_UPDATE_FACTOR - 1) * total_macs),
                _ => (total_macs, 0),
            };
        }
        let len = nodes.len();
        nodes.sort_by_key(|n| n.alloc);
        for n in nodes {
            chains[n.kind.index()].nodes.push(n);
        }
        let mut c = Chains { chains, len, total_macs };
        // Served counts follow from the child's loads.
        for chain in &mut c.chains {
            let mut served = chain.compute.0 + chain.compute.1;
            for nd in &mut chain.nodes {
                nd.served = served;
                served = nd.loads + nd.writebacks;
            }
        }
        c
    }

    fn from_profile(allocs: &[BufferAlloc], profile: &AccessProfile, bpe: u64) -> Chains {
        let nodes = allocs
            .iter()
            .zip(&profile.buffers)
            .enumerate()
            .map(|(i, (a, c))| Node {
                alloc: i,
                kind: a.kind,
                bytes: a.size_elements * bpe,
                loads: c.elements_read_from_parent,
                writebacks: c.writebacks,
                served: 0,
            })
            .collect();
        Chains::build(profile.total_macs, nodes)
    }

    pub(crate) fn from_layout(layout: &Layout, bs: &BlockingString, bpe: u64, opts: &AnalysisOptions) -> Chains {
        let nodes = layout
            .slots
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let loads = layout.loads(s, bs, opts);
                Node {
                    alloc: i,
                    kind: s.kind,
                    bytes: s.size * bpe,
                    loads,
                    writebacks: if s.kind == BufferKind::Output { loads } else { 0 },
                    served: 0,
                }
            })
            .collect();
        Chains::build(layout.total_macs, nodes)
    }

    fn get(&self, kind: BufferKind) -> &Chain {
        &self.chains[kind.index()]
    }

    /// All buffers in allocation order.
    fn nodes(&self) -> impl Iterator<Item = &Node> + '_ {
        self.chains.iter().flat_map(|c| c.nodes.iter())
    }
}

/// Placement and pricing chosen for one string.
pub(crate) struct Decision {
    pub placements: Vec<Placement>,
    pub energies: Vec<f64>,
    pub plan: Option<PackingPlan>,
    pub total_pj: f64,
    pub onchip_bytes: u64,
}

pub(crate) fn decide(chains: &Chains, mode: &EnergyMode, table: &EnergyTable) -> Result<Decision> {
    let mac_pj = chains.total_macs as f64 * table.mac_pj;
    match mode {
        EnergyMode::Codesign { budget_bytes } => {
            let (placements, energies, pj, onchip_bytes) = choose_codesign(chains, table, *budget_bytes);
            Ok(Decision { placements, energies, plan: None, total_pj: pj + mac_pj, onchip_bytes })
        }
        EnergyMode::Fixed { hierarchy } => {
            let plan = pack(chains, hierarchy)?;
            let dram = hierarchy.dram_index();
            let placements: Vec<Placement> = plan
                .assignment
                .iter()
                .map(|&l| if l == dram { Placement::Dram } else { Placement::Pool(l) })
                .collect();
            let energies: Vec<f64> = plan.assignment.iter().map(|&l| hierarchy.levels()[l].energy(table)).collect();
            let mut pj = mac_pj;
            for chain in &chains.chains {
                let nodes = &chain.nodes;
                pj += chain.cost(
                    |i| placements[nodes[i].alloc].on_chip(),
                    |i| energies[nodes[i].alloc],
                    table.dram_pj,
                    table.write_multiplier,
                );
            }
            let onchip_bytes = chains.nodes().filter(|n| placements[n.alloc].on_chip()).map(|n| n.bytes).sum();
            Ok(Decision { placements, energies, plan: Some(plan), total_pj: pj, onchip_bytes })
        }
        EnergyMode::Memories { memories } => {
            let (placements, energies, pj, plan) = assign_memories(chains, memories, table);
            let onchip_bytes = chains.nodes().filter(|n| placements[n.alloc].on_chip()).map(|n| n.bytes).sum();
            Ok(Decision { placements, energies, plan: Some(plan), total_pj: pj + mac_pj, onchip_bytes })
        }
    }
}

fn subset_masks(m: usize) -> Vec<u32> {
    if m <= SUBSET_LIMIT {
        (0..1u32 << m).collect()
    } else {
        (0..=m.min(31)).map(|c| (1u32 << c) - 1).collect()
    }
}

/// Per kind, the cheapest set of buffers to keep, each matched to the
/// smallest free memory of its kind that holds it.
fn assign_memories(
    chains: &Chains,
    memories: &[MemorySpec],
    table: &EnergyTable,
) -> (Vec<Placement>, Vec<f64>, f64, PackingPlan) {
    let dram = memories.len();
    let mut placements = vec![Placement::Dram; chains.len];
    let mut energies = vec![0.0; chains.len];
    let mut assignment = vec![dram; chains.len];
    let mut occupancy = vec![0u64; dram + 1];
    let mem_pj: Vec<f64> = memories.iter().map(|m| m.energy(table)).collect();
    let mut total = 0.0;
    for (k, chain) in chains.chains.iter().enumerate() {
        let mut mems: Vec<usize> = (0..dram).filter(|&i| memories[i].kind == BufferKind::ALL[k]).collect();
        mems.sort_by_key(|&i| (memories[i], i));
        let m = chain.nodes.len();
        let mut best: Option<(f64, Vec<Option<usize>>)> = None;
        for mask in subset_masks(m) {
            let kept = |i: usize| i < 32 && mask & (1 << i) != 0;
            let mut matched = vec![None; m];
            let mut next = 0;
            let mut fits = true;
            for i in (0..m).filter(|&i| kept(i)) {
                while next < mems.len() && memories[mems[next]].bytes < chain.nodes[i].bytes {
                    next += 1;
                }
                if next == mems.len() {
                    fits = false;
                    break;
                }
                matched[i] = Some(mems[next]);
                next += 1;
            }
            if !fits {
                continue;
            }
            let e = chain.cost(kept, |i| mem_pj[matched[i].unwrap()], table.dram_pj, table.write_multiplier);
            if best.as_ref().is_none_or(|b| e < b.0) {
                best = Some((e, matched));
            }
        }
        // Keeping nothing always fits.
        let (e, matched) = best.expect("empty set always fits");
        total += e;
        for (nd, mem) in chain.nodes.iter().zip(matched) {
            if let Some(j) = mem {
                placements[nd.alloc] = Placement::Pool(j);
                energies[nd.alloc] = mem_pj[j];
                assignment[nd.alloc] = j;
                occupancy[j] += nd.bytes;
            } else {
                occupancy[dram] += nd.bytes;
            }
        }
    }
    (placements, energies, total, PackingPlan { assignment, occupancy })
}

/// Energy of a dedicated memory: its own size at the widest word that fits.
pub(crate) fn dedicated_energy(bytes: u64, table: &EnergyTable) -> f64 {
    let bits = bytes.saturating_mul(8).min(u32::MAX as u64) as u32;
    table.energy_per_access(bytes, bits)
}

/// Per-kind options as (bytes, energy, kept set), Pareto-pruned.
fn chain_options(chain: &Chain, energies: &[f64], table: &EnergyTable) -> Vec<(u64, f64, u32)> {
    let m = chain.nodes.len();
    let mut opts: Vec<(u64, f64, u32)> = subset_masks(m)
        .into_iter()
        .map(|mask| {
            let kept = |i: usize| i < 32 && mask & (1 << i) != 0;
            let bytes = (0..m).filter(|&i| kept(i)).map(|i| chain.nodes[i].bytes).sum();
            let e = chain.cost(kept, |i| energies[i], table.dram_pj, table.write_multiplier);
            (bytes, e, mask)
        })
        .collect();
    opts.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut pruned: Vec<(u64, f64, u32)> = Vec::new();
    for o in opts {
        if pruned.last().is_none_or(|p| o.1 < p.1) {
            pruned.push(o);
        }
    }
    pruned
}

fn choose_codesign(
    chains: &Chains,
    table: &EnergyTable,
    budget: Option<u64>,
) -> (Vec<Placement>, Vec<f64>, f64, u64) {
    let mut placements = vec![Placement::Dram; chains.len];
    let mut energies = vec![0.0; chains.len];
    let mut options = Vec::with_capacity(3);
    for chain in &chains.chains {
        let e: Vec<f64> = chain.nodes.iter().map(|nd| dedicated_energy(nd.bytes, table)).collect();
        for (nd, &v) in chain.nodes.iter().zip(&e) {
            energies[nd.alloc] = v;
        }
        options.push(chain_options(chain, &e, table));
    }
    let budget = budget.unwrap_or(u64::MAX);
    // Pareto lists are sorted by bytes with strictly falling energy, so the
    // last affordable entry is the best one.
    let best_within = |list: &[(u64, f64, u32)], room: u64| list.iter().rposition(|o| o.0 <= room);
    let mut best: Option<(f64, u64, [usize; 3])> = None;
    for (a, oa) in options[0].iter().enumerate() {
        if oa.0 > budget {
            break;
        }
        for (b, ob) in options[1].iter().enumerate() {
            if oa.0 + ob.0 > budget {
                break;
            }
            let Some(c) = best_within(&options[2], budget - oa.0 - ob.0) else {
                continue;
            };
            let oc = options[2][c];
            let e = oa.1 + ob.1 + oc.1;
            let bytes = oa.0 + ob.0 + oc.0;
            let better = match best {
                None => true,
                Some((be, bb, _)) => e < be || (e == be && bytes < bb),
            };
            if better {
                best = Some((e, bytes, [a, b, c]));
            }
        }
    }
    // The empty set costs zero bytes and is in every list.
    let (pj, bytes, pick) = best.expect("zero-byte option always fits");
    for (k, chain) in chains.chains.iter().enumerate() {
        let mask = options[k][pick[k]].2;
        for (i, nd) in chain.nodes.iter().enumerate() {
            if i < 32 && mask & (1 << i) != 0 {
                placements[nd.alloc] = Placement::Dedicated;
            }
        }
    }
    (placements, energies, pj, bytes)
}

/// Greedy packing: buffers in decreasing order of accesses served go to
/// the lowest pool that admits their kind and still has room. A pool that
/// overflows is closed to all later buffers. DRAM takes the rest.
pub fn pack_buffers(
    allocs: &[BufferAlloc],
    profile: &AccessProfile,
    hierarchy: &MemoryHierarchy,
    layer: &LayerShape,
) -> Result<PackingPlan> {
    pack(&Chains::from_profile(allocs, profile, layer.bytes_per_element()), hierarchy)
}

fn pack(chains: &Chains, hierarchy: &MemoryHierarchy) -> Result<PackingPlan> {
    let levels = hierarchy.levels();
    let dram = hierarchy.dram_index();
    let nodes: Vec<&Node> = chains.nodes().collect();
    let smallest_pool = levels[..dram].iter().filter_map(|l| l.capacity_bytes).min();
    if let (Some(pool), Some(smallest)) = (smallest_pool, nodes.iter().map(|n| n.bytes).min()) {
        if smallest > pool {
            return Err(Error::Unschedulable(format!(
                "smallest buffer ({smallest} B) exceeds the smallest pool ({pool} B)"
            )));
        }
    }

    let mut order: Vec<&Node> = nodes.clone();
    order.sort_by(|a, b| b.served.cmp(&a.served).then(a.bytes.cmp(&b.bytes)).then(a.alloc.cmp(&b.alloc)));

    let mut occupancy = vec![0u64; levels.len()];
    let mut closed = vec![false; levels.len()];
    let mut assignment = vec![dram; nodes.len()];
    for nd in order {
        for (l, level) in levels[..dram].iter().enumerate() {
            if closed[l] || !level.accepts(nd.kind) {
                continue;
            }
            if occupancy[l] + nd.bytes <= level.capacity_bytes.unwrap() {
                assignment[nd.alloc] = l;
                break;
            }
            closed[l] = true;
        }
        occupancy[assignment[nd.alloc]] += nd.bytes;
    }
    Ok(PackingPlan { assignment, occupancy })
}

impl fmt::Display for EnergyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<6} {:>12} {:>10} {:>10} {:>16} {:>16} {:>16}",
            "buffer", "bytes", "placement", "pJ/access", "reads", "writes", "pJ"
        )?;
        for b in &self.buffers {
            let place = match b.placement {
                Placement::Dedicated => "own".to_string(),
                Placement::Pool(l) => format!("L{l}"),
                Placement::Dram => "DRAM".to_string(),
            };
            writeln!(
                f,
                "{:<6} {:>12} {:>10} {:>10.3} {:>16} {:>16} {:>16.1}",
                format!("{}{}", b.kind, b.level),
                b.size_bytes,
                place,
                b.pj_per_access,
                b.reads,
                b.writes,
                b.pj
            )?;
        }
        writeln!(
            f,
            "on-chip pJ  IB {:.1}  KB {:.1}  OB {:.1}",
            self.per_kind_pj.input, self.per_kind_pj.kernel, self.per_kind_pj.output
        )?;
        writeln!(
            f,
            "DRAM pJ     IB {:.1}  KB {:.1}  OB {:.1}  (total {:.1})",
            self.dram_pj_by_kind.input, self.dram_pj_by_kind.kernel, self.dram_pj_by_kind.output, self.dram_pj
        )?;
        writeln!(f, "on-chip bytes {}", self.onchip_bytes)?;
        writeln!(f, "MACs {}  MAC pJ {:.1}", self.total_macs, self.mac_pj_total)?;
        write!(f, "total pJ {:.1}  pJ/MAC {:.4}", self.total_pj, self.pj_per_mac)
    }
}
