//! Multi-core unrolling of one outer loop. Buffers inside the unrolled loop
//! are private to each core; outside it the partitioned kinds are sliced
//! across cores and the remaining kind is shared, with its reads broadcast.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::analysis::{
    access_counts_with, dedicated_energy, derive_buffers_with, pricing_report, AnalysisOptions, BufferKind,
    EnergyMode, Placement,
};
use crate::energy::EnergyTable;
use crate::error::{Error, Result};
use crate::model::{validate_blocking, BlockingString, Dim, LayerShape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    /// Unroll a K loop: kernels and outputs split, inputs broadcast.
    #[serde(rename = "K_PARTITION")]
    KPartition,
    /// Unroll an X or Y loop: inputs and outputs split, kernels broadcast.
    #[serde(rename = "XY_PARTITION")]
    XyPartition,
}

impl Scheme {
    pub const ALL: [Scheme; 2] = [Scheme::KPartition, Scheme::XyPartition];

    pub fn shared_kind(self) -> BufferKind {
        match self {
            Scheme::KPartition => BufferKind::Input,
            Scheme::XyPartition => BufferKind::Kernel,
        }
    }

    pub fn dims(self) -> &'static [Dim] {
        match self {
            Scheme::KPartition => &[Dim::K],
            Scheme::XyPartition => &[Dim::X, Dim::Y],
        }
    }

    /// The scheme whose broadcast kind is `kind`, if any.
    pub fn sharing(kind: BufferKind) -> Option<Scheme> {
        Scheme::ALL.into_iter().find(|s| s.shared_kind() == kind)
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scheme::KPartition => "K_PARTITION",
            Scheme::XyPartition => "XY_PARTITION",
        })
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "K" | "K_PARTITION" => Ok(Scheme::KPartition),
            "XY" | "XY_PARTITION" => Ok(Scheme::XyPartition),
            "C" | "C_PARTITION" => Err(Error::Partition("partitioning over C needs a cross-core reduction".into())),
            _ => Err(Error::Partition(format!("unknown scheme `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    /// Inside the unrolled loop: one full copy per core.
    Private,
    /// Outside the unrolled loop, partitioned kind: one slice per core.
    Sliced,
    /// Outside the unrolled loop, broadcast kind: one global copy.
    Shared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoreBuffer {
    pub kind: BufferKind,
    pub level: usize,
    pub owner_pos: usize,
    pub role: Role,
    /// Bytes of one copy or slice.
    pub size_bytes: u64,
    pub copies: u64,
    pub pj_per_access: f64,
    /// Reads and writes served, summed over cores.
    pub reads: u64,
    pub writes: u64,
    /// Reads replaced by broadcasts (shared buffer at the unrolled loop).
    pub broadcasts: u64,
    pub pj: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticorePlan {
    pub scheme: Scheme,
    pub cores: u64,
    /// Position of the unrolled loop in the blocking string.
    pub position: usize,
    pub buffers: Vec<CoreBuffer>,
    pub broadcast_kind: BufferKind,
    pub broadcast_pj_per_access: f64,
    pub onchip_bytes: u64,
    pub private_pj: f64,
    pub shared_pj: f64,
    pub broadcast_pj: f64,
    pub shuffle_pj: f64,
    pub dram_pj: f64,
    pub dram_traffic: u64,
    pub mac_pj_total: f64,
    pub total_macs: u64,
    pub total_pj: f64,
    pub pj_per_mac: f64,
}

/// Energy of one 16-bit broadcast over a chip with this much memory.
pub fn broadcast_energy(total_onchip_bytes: u64, table: &EnergyTable) -> f64 {
    table.widest_energy(total_onchip_bytes.max(1))
}

/// Restoring the output layout after a K-partitioned layer: one read and
/// one write of every output element through the broadcast fabric.
pub fn shuffle_energy(layer: &LayerShape, plan: &MulticorePlan) -> f64 {
    if plan.scheme != Scheme::KPartition || plan.cores <= 1 {
        return 0.0;
    }
    let outputs = layer.n * layer.x * layer.y * layer.k;
    2.0 * outputs as f64 * plan.broadcast_pj_per_access
}

/// Outermost loop the scheme can unroll `cores` ways.
pub fn unroll_position(bs: &BlockingString, scheme: Scheme, cores: u64) -> Option<usize> {
    let trips = bs.trip_counts();
    (0..bs.len()).rev().find(|&j| scheme.dims().contains(&bs.loops()[j].dim) && trips[j] % cores == 0 && trips[j] > 1)
        .or_else(|| if cores == 1 { Some(bs.len().saturating_sub(1)) } else { None })
}

pub fn apply_partition(
    bs: &BlockingString,
    layer: &LayerShape,
    scheme: Scheme,
    cores: u64,
    position: usize,
    mode: &EnergyMode,
    table: &EnergyTable,
) -> Result<MulticorePlan> {
    apply_partition_with(bs, layer, scheme, cores, position, mode, table, &AnalysisOptions::default())
}

#[allow(clippy::too_many_arguments)]
pub fn apply_partition_with(
    bs: &BlockingString,
    layer: &LayerShape,
    scheme: Scheme,
    cores: u64,
    position: usize,
    mode: &EnergyMode,
    table: &EnergyTable,
    opts: &AnalysisOptions,
) -> Result<MulticorePlan> {
    validate_blocking(bs, layer).into_result()?;
    if cores == 0 {
        return Err(Error::Partition("core count must be positive".into()));
    }
    if cores > 1 {
        let Some(l) = bs.loops().get(position) else {
            return Err(Error::Partition(format!("no loop at position {position}")));
        };
        if l.dim == Dim::C {
            return Err(Error::Partition("partitioning over C needs a cross-core reduction".into()));
        }
        if !scheme.dims().contains(&l.dim) {
            return Err(Error::Partition(format!("{scheme} cannot unroll the {} loop at position {position}", l.dim)));
        }
        let trip = bs.trip_counts()[position];
        if trip % cores != 0 {
            return Err(Error::Partition(format!(
                "loop {l} at position {position} has trip count {trip}, not a multiple of {cores} cores"
            )));
        }
    }

    let allocs = derive_buffers_with(bs, layer, opts)?;
    let profile = access_counts_with(&allocs, bs, layer, opts)?;
    let (report, _) = pricing_report(&allocs, &profile, layer, mode, table)?;
    // Capacity and width of the memory behind a pool placement.
    let pool = |l: usize| match mode {
        EnergyMode::Fixed { hierarchy } => {
            let level = &hierarchy.levels()[l];
            level.capacity_bytes.map(|c| (c, level.width_bits))
        }
        EnergyMode::Memories { memories } => Some((memories[l].bytes, memories[l].width_bits)),
        EnergyMode::Codesign { .. } => None,
    };
    let shared_kind = scheme.shared_kind();
    let parallel = cores > 1;

    // The shared buffer adjacent to the unrolled loop serves every core at once.
    let broadcaster = report
        .buffers
        .iter()
        .enumerate()
        .filter(|(i, b)| b.kind == shared_kind && b.placement.on_chip() && allocs[*i].owner_pos >= position)
        .map(|(i, _)| i)
        .next()
        .filter(|_| parallel);

    let w = table.write_multiplier;
    let mut buffers = Vec::new();
    for (i, b) in report.buffers.iter().enumerate() {
        if !b.placement.on_chip() {
            continue;
        }
        let owner_pos = allocs[i].owner_pos;
        let role = if !parallel || owner_pos < position {
            Role::Private
        } else if b.kind == shared_kind {
            Role::Shared
        } else {
            Role::Sliced
        };
        let (size_bytes, copies, pj_per_access) = match role {
            Role::Private => (b.size_bytes, cores, b.pj_per_access),
            Role::Shared => (b.size_bytes, 1, b.pj_per_access),
            Role::Sliced => {
                let slice = b.size_bytes.div_ceil(cores);
                let e = match b.placement {
                    Placement::Pool(l) => match pool(l) {
                        Some((cap, width)) => table.energy_per_access(cap.div_ceil(cores), width),
                        None => dedicated_energy(slice, table),
                    },
                    _ => dedicated_energy(slice, table),
                };
                (slice, cores, e)
            }
        };
        let broadcasts = if Some(i) == broadcaster { b.reads.div_ceil(cores) } else { 0 };
        let direct_reads = if broadcasts > 0 { 0 } else { b.reads };
        let pj = (direct_reads as f64 + w * b.writes as f64) * pj_per_access;
        buffers.push(CoreBuffer {
            kind: b.kind,
            level: b.level,
            owner_pos,
            role,
            size_bytes,
            copies,
            pj_per_access,
            reads: b.reads,
            writes: b.writes,
            broadcasts,
            pj,
        });
    }

    let onchip_bytes = buffers.iter().map(|b| b.size_bytes * b.copies).sum();
    let broadcast_pj_per_access = broadcast_energy(onchip_bytes, table);
    let broadcast_pj = buffers.iter().fold(0.0, |a, b| a + b.broadcasts as f64) * broadcast_pj_per_access;
    // Folded from +0.0: an empty f64 sum is -0.0.
    let private_pj = buffers.iter().filter(|b| b.role != Role::Shared).fold(0.0, |a, b| a + b.pj);
    let shared_pj = buffers.iter().filter(|b| b.role == Role::Shared).fold(0.0, |a, b| a + b.pj);

    let mut mp = MulticorePlan {
        scheme,
        cores,
        position,
        buffers,
        broadcast_kind: shared_kind,
        broadcast_pj_per_access,
        onchip_bytes,
        private_pj,
        shared_pj,
        broadcast_pj,
        shuffle_pj: 0.0,
        dram_pj: report.dram_pj,
        dram_traffic: profile.dram_traffic(),
        mac_pj_total: report.mac_pj_total,
        total_macs: report.total_macs,
        total_pj: 0.0,
        pj_per_mac: 0.0,
    };
    mp.shuffle_pj = shuffle_energy(layer, &mp);
    mp.total_pj = mp.private_pj + mp.shared_pj + mp.broadcast_pj + mp.shuffle_pj + mp.dram_pj + mp.mac_pj_total;
    mp.pj_per_mac = mp.total_pj / mp.total_macs as f64;
    Ok(mp)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticoreRow {
    /// Index of the schedule in the input list.
    pub schedule: usize,
    pub blocking: BlockingString,
    pub plan: MulticorePlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skipped {
    pub schedule: usize,
    pub scheme: Scheme,
    pub cores: u64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MulticoreReport {
    pub rows: Vec<MulticoreRow>,
    pub skipped: Vec<Skipped>,
    /// Per schedule: the scheme that keeps its largest on-chip buffer shared.
    pub recommended: Vec<Option<Scheme>>,
}

/// Evaluates every schedule under every (scheme, core count) pair, each
/// unrolling the outermost loop that divides evenly.
pub fn multicore_report(
    layer: &LayerShape,
    schedules: &[BlockingString],
    cores: &[u64],
    schemes: &[Scheme],
    mode: &EnergyMode,
    table: &EnergyTable,
) -> Result<MulticoreReport> {
    let mut out = MulticoreReport { rows: Vec::new(), skipped: Vec::new(), recommended: Vec::new() };
    for (si, bs) in schedules.iter().enumerate() {
        let single = crate::analysis::schedule_energy(bs, layer, mode, table)?;
        let largest = single
            .buffers
            .iter()
            .filter(|b| b.placement.on_chip() && b.kind != BufferKind::Output)
            .max_by_key(|b| b.size_bytes)
            .map(|b| b.kind);
        out.recommended.push(largest.and_then(Scheme::sharing));
        for &scheme in schemes {
            for &s in cores {
                let Some(p) = unroll_position(bs, scheme, s) else {
                    out.skipped.push(Skipped {
                        schedule: si,
                        scheme,
                        cores: s,
                        reason: format!("no {scheme} loop with a trip count divisible by {s}"),
                    });
                    continue;
                };
                let plan = apply_partition(bs, layer, scheme, s, p, mode, table)?;
                out.rows.push(MulticoreRow { schedule: si, blocking: bs.clone(), plan });
            }
        }
    }
    Ok(out)
}
