use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use super::buffers::Layout;
use super::{AnalysisOptions, BufferAlloc, BufferKind, PerKind, OB_UPDATE_FACTOR};
use crate::error::{Error, Result};
use crate::model::{validate_blocking, BlockingString, LayerShape};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BufferCounts {
    pub kind: BufferKind,
    pub level: usize,
    /// Times the contents are replaced.
    pub fills: u64,
    pub elements_read_from_parent: u64,
    /// Reads by the child buffer, or by compute for level 0.
    pub reads_served: u64,
    /// Partial sums written into the buffer (output buffers only).
    pub writes_served: u64,
    /// Elements written back to the parent (output buffers only).
    pub writebacks: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AccessProfile {
    /// Aligned with the allocation list.
    pub buffers: Vec<BufferCounts>,
    /// Size of each full tensor in elements.
    pub alpha: PerKind<u64>,
    pub dram_reads: PerKind<u64>,
    /// Output elements written back to DRAM.
    pub dram_writes: u64,
    pub total_macs: u64,
}

pub fn access_counts(allocs: &[BufferAlloc], bs: &BlockingString, layer: &LayerShape) -> Result<AccessProfile> {
    access_counts_with(allocs, bs, layer, &AnalysisOptions::default())
}

/// Counts from the refetch-rate chain: each kind's top buffer loads its
/// footprint once per fill from DRAM, and every buffer below it is served
/// `RR` times what its parent loaded.
pub fn access_counts_with(
    allocs: &[BufferAlloc],
    bs: &BlockingString,
    layer: &LayerShape,
    opts: &AnalysisOptions,
) -> Result<AccessProfile> {
    validate_blocking(bs, layer).into_result()?;
    let layout = Layout::new(bs);
    check_alignment(allocs, &layout)?;

    let mut buffers: Vec<BufferCounts> = layout
        .slots
        .iter()
        .map(|s| BufferCounts {
            kind: s.kind,
            level: s.level,
            fills: layout.fills(s),
            elements_read_from_parent: 0,
            reads_served: 0,
            writes_served: 0,
            writebacks: 0,
        })
        .collect();

    let mut dram_reads = PerKind::default();
    let mut dram_writes = 0;
    for kind in BufferKind::ALL {
        let idx: Vec<usize> = (0..allocs.len()).filter(|&i| allocs[i].kind == kind).collect();
        let Some(&top) = idx.last() else {
            let demand = layout.compute_demand(kind);
            if kind == BufferKind::Output {
                dram_reads.output = demand / OB_UPDATE_FACTOR;
                dram_writes = demand / OB_UPDATE_FACTOR;
            } else {
                *dram_reads.get_mut(kind) = demand;
            }
            continue;
        };
        let mut loads = layout.loads(&layout.slots[top], bs, opts);
        *dram_reads.get_mut(kind) = loads;
        if kind == BufferKind::Output {
            dram_writes = loads;
        }
        for &i in idx.iter().rev() {
            let served = (allocs[i].refetch_rate * loads).to_integer();
            let b = &mut buffers[i];
            b.elements_read_from_parent = loads;
            if kind == BufferKind::Output {
                b.writebacks = loads;
                b.reads_served = served / OB_UPDATE_FACTOR;
                b.writes_served = served - b.reads_served;
                loads = b.reads_served;
            } else {
                b.reads_served = served;
                loads = served;
            }
        }
    }

    Ok(AccessProfile {
        buffers,
        alpha: PerKind {
            input: layer.n * layer.x * layer.y * layer.c,
            kernel: layer.fw * layer.fh * layer.c * layer.k,
            output: layer.n * layer.x * layer.y * layer.k,
        },
        dram_reads,
        dram_writes,
        total_macs: layout.total_macs,
    })
}

fn check_alignment(allocs: &[BufferAlloc], layout: &Layout) -> Result<()> {
    if allocs.len() != layout.slots.len() {
        return Err(Error::Mismatch(format!(
            "{} buffers given, string implies {}",
            allocs.len(),
            layout.slots.len()
        )));
    }
    for (a, s) in allocs.iter().zip(&layout.slots) {
        if (a.kind, a.level, a.owner_pos, a.size_elements) != (s.kind, s.level, s.owner, s.size) {
            return Err(Error::Mismatch(format!("{}{} does not match the string", a.kind, a.level)));
        }
        if a.refetch_rate == Ratio::from_integer(0) {
            return Err(Error::Mismatch(format!("{}{} has a zero refetch rate", a.kind, a.level)));
        }
    }
    Ok(())
}

impl AccessProfile {
    /// Total element traffic out of DRAM and back.
    pub fn dram_traffic(&self) -> u64 {
        self.dram_reads.input + self.dram_reads.kernel + self.dram_reads.output + self.dram_writes
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::derive_buffers;

    fn layer() -> LayerShape {
        LayerShape::new(8, 8, 4, 4, 3, 3).unwrap()
    }

    fn profile(s: &str) -> (Vec<BufferAlloc>, AccessProfile) {
        let bs: BlockingString = s.parse().unwrap();
        let a = derive_buffers(&bs, &layer()).unwrap();
        let p = access_counts(&a, &bs, &layer()).unwrap();
        (a, p)
    }

    #[test]
    fn unblocked_counts() {
        let (a, p) = profile("Fw(3) Fh(3) X(8) Y(8) C(4) K(4)");
        assert_eq!(p.total_macs, 9216);
        assert_eq!(p.alpha.kernel, 144);
        let kb = a.iter().position(|b| b.kind == BufferKind::Kernel).unwrap();
        // Every MAC reads one coefficient; the kernel is loaded once.
        assert_eq!(p.buffers[kb].reads_served, 9216);
        assert_eq!(p.buffers[kb].elements_read_from_parent, 144);
        assert_eq!(p.dram_reads.kernel, 144);
    }

    #[test]
    fn level_zero_serves_compute() {
        for s in [
            "Fw(3) Fh(3) X(8) Y(8) C(4) K(4)",
            "Fw(3) X(2) Fh(3) C(2) X(8) K(4) Y(8) C(4)",
            "K(2) Fw(3) Fh(3) C(4) X(4) K(4) Y(8) X(8)",
        ] {
            let (a, p) = profile(s);
            for (alloc, c) in a.iter().zip(&p.buffers) {
                if alloc.level == 0 {
                    assert_eq!(c.reads_served, p.total_macs, "{s}");
                }
                if alloc.kind == BufferKind::Output {
                    assert_eq!(c.reads_served, c.writes_served);
                }
            }
        }
    }

    #[test]
    fn chain_ratios_match_rr() {
        let (a, p) = profile("Fw(3) X(2) Fh(3) C(2) X(8) K(4) Y(8) C(4)");
        for i in 0..a.len() {
            let c = &p.buffers[i];
            let served = c.reads_served + c.writes_served;
            assert_eq!(Ratio::new(served, c.elements_read_from_parent), a[i].refetch_rate);
            assert_eq!(c.elements_read_from_parent, c.fills * a[i].size_elements);
        }
    }

    #[test]
    fn kernel_and_output_top_loads_equal_alpha() {
        let (_, p) = profile("Fw(3) Fh(3) C(2) X(4) K(2) C(4) Y(8) X(8) K(4)");
        assert_eq!(p.dram_reads.kernel, p.alpha.kernel);
        assert_eq!(p.dram_reads.output, p.alpha.output);
        assert!(p.dram_reads.input >= p.alpha.input);
    }

    #[test]
    fn no_buffers_reads_straight_from_dram() {
        let l = LayerShape::new(1, 1, 1, 1, 1, 1).unwrap();
        let bs: BlockingString = "X(1)".parse().unwrap();
        let a = derive_buffers(&bs, &l).unwrap();
        assert!(a.is_empty());
        let p = access_counts(&a, &bs, &l).unwrap();
        assert_eq!(p.dram_traffic(), 4);
    }

    #[test]
    fn corrupted_allocs_rejected() {
        let bs: BlockingString = "Fw(3) Fh(3) X(8) Y(8) C(4) K(4)".parse().unwrap();
        let mut a = derive_buffers(&bs, &layer()).unwrap();
        a.pop();
        assert!(matches!(access_counts(&a, &bs, &layer()), Err(Error::Mismatch(_))));
    }
}
