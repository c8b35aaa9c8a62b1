use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use super::{AnalysisOptions, BufferKind, OB_UPDATE_FACTOR};
use crate::error::Result;
use crate::model::{validate_blocking, BlockingString, Dim, LayerShape};

/// One buffer implied by a blocking string.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BufferAlloc {
    pub kind: BufferKind,
    /// Position in the chain of buffers of this kind, 0 closest to compute.
    pub level: usize,
    /// Loop whose iterations reuse the buffer's contents.
    pub owner_pos: usize,
    pub size_elements: u64,
    /// (reads + writes served) / elements loaded from the parent.
    #[serde(with = "super::ratio_str")]
    pub refetch_rate: Ratio<u64>,
}

impl BufferAlloc {
    pub fn size_bytes(&self, layer: &LayerShape) -> u64 {
        self.size_elements * layer.bytes_per_element()
    }
}

/// Covered extent of every dimension, indexed by `Dim::index`.
pub(crate) type Extents = [u64; 7];

pub(crate) fn footprint(kind: BufferKind, e: &Extents) -> u64 {
    let g = |d: Dim| e[d.index()];
    match kind {
        BufferKind::Input => {
            (g(Dim::X) + g(Dim::Fw) - 1) * (g(Dim::Y) + g(Dim::Fh) - 1) * g(Dim::C) * g(Dim::N)
        }
        BufferKind::Kernel => g(Dim::Fw) * g(Dim::Fh) * g(Dim::C) * g(Dim::K),
        BufferKind::Output => g(Dim::X) * g(Dim::Y) * g(Dim::K) * g(Dim::N),
    }
}

/// Kinds whose data is reused across iterations of a loop over `dim`.
pub(crate) fn reused_kinds(dim: Dim) -> &'static [BufferKind] {
    match dim {
        Dim::X | Dim::Y | Dim::N => &[BufferKind::Kernel],
        Dim::C => &[BufferKind::Output],
        Dim::K => &[BufferKind::Input],
        Dim::Fw | Dim::Fh => &[BufferKind::Input, BufferKind::Output],
    }
}

/// A buffer before counts are attached.
#[derive(Debug, Clone)]
pub(crate) struct Slot {
    pub kind: BufferKind,
    pub level: usize,
    pub owner: usize,
    pub size: u64,
    /// Extents covered by loops `0..=owner`.
    pub extents: Extents,
}

/// Structural facts about a string shared by the model and its consumers.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub trips: Vec<u64>,
    /// `outer[j]` = product of trip counts of loops strictly outside `j`.
    pub outer: Vec<u64>,
    /// Slots sorted by kind, then level.
    pub slots: Vec<Slot>,
    pub total_macs: u64,
}

impl Layout {
    /// Assumes `bs` is valid for the layer it will be used with.
    pub fn new(bs: &BlockingString) -> Layout {
        let loops = bs.loops();
        let trips = bs.trip_counts();
        let mut outer = vec![1u64; loops.len()];
        for j in (0..loops.len().saturating_sub(1)).rev() {
            outer[j] = outer[j + 1] * trips[j + 1];
        }
        let total_macs = trips.iter().product();

        let mut ext: Extents = [1; 7];
        let mut chains: [Vec<Slot>; 3] = Default::default();
        for (j, l) in loops.iter().enumerate() {
            ext[l.dim.index()] = l.extent;
            if trips[j] <= 1 {
                continue;
            }
            for &kind in reused_kinds(l.dim) {
                let size = footprint(kind, &ext);
                let chain = &mut chains[kind.index()];
                match chain.last_mut() {
                    Some(prev) if prev.size == size => {
                        prev.owner = j;
                        prev.extents = ext;
                    }
                    _ => chain.push(Slot { kind, level: chain.len(), owner: j, size, extents: ext }),
                }
            }
        }
        let slots = chains.into_iter().flatten().collect();
        Layout { trips, outer, slots, total_macs }
    }

    pub fn chain(&self, kind: BufferKind) -> impl Iterator<Item = &Slot> + '_ {
        self.slots.iter().filter(move |s| s.kind == kind)
    }

    /// Number of times the slot's contents are replaced.
    pub fn fills(&self, s: &Slot) -> u64 {
        self.outer[s.owner]
    }

    /// Elements the slot loads from its parent over the whole run.
    pub fn loads(&self, s: &Slot, bs: &BlockingString, opts: &AnalysisOptions) -> u64 {
        let full = self.fills(s) * s.size;
        match self.shift_step(s, bs, opts) {
            Some((q, partial)) => {
                let shifted = self.fills(s) / self.trips[q] * (self.trips[q] - 1);
                full - shifted * (s.size - partial)
            }
            None => full,
        }
    }

    /// For a level-0 input buffer whose first non-trivial enclosing loop
    /// steps along X, that loop's position and the elements a step brings in.
    pub fn shift_step(&self, s: &Slot, bs: &BlockingString, opts: &AnalysisOptions) -> Option<(usize, u64)> {
        if !opts.shift_window || s.kind != BufferKind::Input || s.level != 0 {
            return None;
        }
        let q = (s.owner + 1..self.trips.len()).find(|&j| self.trips[j] > 1)?;
        if bs.loops()[q].dim != Dim::X {
            return None;
        }
        let e = |d: Dim| s.extents[d.index()];
        Some((q, e(Dim::X) * (e(Dim::Y) + e(Dim::Fh) - 1) * e(Dim::C) * e(Dim::N)))
    }

    /// Accesses compute makes to the innermost buffer of a kind.
    pub fn compute_demand(&self, kind: BufferKind) -> u64 {
        match kind {
            BufferKind::Output => OB_UPDATE_FACTOR * self.total_macs,
            _ => self.total_macs,
        }
    }
}

pub fn derive_buffers(bs: &BlockingString, layer: &LayerShape) -> Result<Vec<BufferAlloc>> {
    derive_buffers_with(bs, layer, &AnalysisOptions::default())
}

/// Walks the loops innermost to outermost and emits a buffer wherever a loop
/// reuses data: X/Y/N loops reuse kernels, C loops reuse outputs, K loops
/// reuse inputs and window loops reuse both inputs and outputs.
pub fn derive_buffers_with(
    bs: &BlockingString,
    layer: &LayerShape,
    opts: &AnalysisOptions,
) -> Result<Vec<BufferAlloc>> {
    validate_blocking(bs, layer).into_result()?;
    Ok(allocs_from_layout(&Layout::new(bs), bs, opts))
}

pub(crate) fn allocs_from_layout(layout: &Layout, bs: &BlockingString, opts: &AnalysisOptions) -> Vec<BufferAlloc> {
    let mut out = Vec::with_capacity(layout.slots.len());
    let mut served = 0;
    for s in &layout.slots {
        if s.level == 0 {
            served = layout.compute_demand(s.kind);
        }
        let loads = layout.loads(s, bs, opts);
        out.push(BufferAlloc {
            kind: s.kind,
            level: s.level,
            owner_pos: s.owner,
            size_elements: s.size,
            refetch_rate: Ratio::new(served, loads),
        });
        served = match s.kind {
            BufferKind::Output => OB_UPDATE_FACTOR * loads,
            _ => loads,
        };
    }
    out
}

/// Closed-form refetch rate: the product of the trip counts of the reusing
/// loops merged into the buffer, doubled for output buffers, and for input
/// buffers reused by a K loop scaled by the halo ratio
/// `(X + Fw - 1)(Y + Fh - 1) / (X Y)` with the full window.
///
/// Equals the exact rate for kernel and output buffers, and for input
/// buffers when the window is 1x1.
pub fn nominal_refetch_rate(alloc: &BufferAlloc, bs: &BlockingString, layer: &LayerShape) -> Ratio<u64> {
    let loops = bs.loops();
    let trips = bs.trip_counts();
    let allocs_below = Layout::new(bs);
    let start = allocs_below
        .chain(alloc.kind)
        .find(|s| s.level + 1 == alloc.level)
        .map_or(0, |s| s.owner + 1);
    let mut rr = Ratio::from_integer(1);
    let mut k_reuse = false;
    for j in start..=alloc.owner_pos {
        if trips[j] > 1 && reused_kinds(loops[j].dim).contains(&alloc.kind) {
            rr *= trips[j];
            k_reuse |= loops[j].dim == Dim::K;
        }
    }
    match alloc.kind {
        BufferKind::Output => rr * OB_UPDATE_FACTOR,
        BufferKind::Kernel => rr,
        BufferKind::Input if k_reuse => {
            let x = extent_at(bs, alloc.owner_pos, Dim::X);
            let y = extent_at(bs, alloc.owner_pos, Dim::Y);
            rr * Ratio::new((x + layer.fw - 1) * (y + layer.fh - 1), x * y)
        }
        BufferKind::Input => rr,
    }
}

fn extent_at(bs: &BlockingString, pos: usize, dim: Dim) -> u64 {
    bs.loops()[..=pos].iter().rev().find(|l| l.dim == dim).map_or(1, |l| l.extent)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layer() -> LayerShape {
        LayerShape::new(8, 8, 4, 4, 3, 3).unwrap()
    }

    fn find(allocs: &[BufferAlloc], kind: BufferKind, level: usize) -> &BufferAlloc {
        allocs.iter().find(|a| a.kind == kind && a.level == level).unwrap()
    }

    #[test]
    fn unblocked_buffers() {
        let bs: BlockingString = "Fw(3) Fh(3) X(8) Y(8) C(4) K(4)".parse().unwrap();
        let a = derive_buffers(&bs, &layer()).unwrap();
        // IB at Fw, Fh and K; KB at X/Y merged; OB at Fw/Fh merged then C.
        let kb = find(&a, BufferKind::Kernel, 0);
        assert_eq!((kb.size_elements, kb.owner_pos), (9, 3));
        assert_eq!(kb.refetch_rate, Ratio::from_integer(64));
        let ib = find(&a, BufferKind::Input, 2);
        assert_eq!((ib.size_elements, ib.owner_pos), (400, 5));
        let ob = find(&a, BufferKind::Output, 1);
        assert_eq!((ob.size_elements, ob.owner_pos), (64, 4));
        assert_eq!(ob.refetch_rate, Ratio::from_integer(8));
        assert_eq!(nominal_refetch_rate(ib, &bs, &layer()), Ratio::new(25, 4));
        assert_eq!(nominal_refetch_rate(ob, &bs, &layer()), ob.refetch_rate);
        assert_eq!(nominal_refetch_rate(kb, &bs, &layer()), kb.refetch_rate);
    }

    #[test]
    fn split_k_input_buffer() {
        let bs: BlockingString = "Fw(3) Fh(3) X(4) Y(4) C(4) K(2) X(8) Y(8) K(4)".parse().unwrap();
        let a = derive_buffers(&bs, &layer()).unwrap();
        let ib = a.iter().find(|a| a.kind == BufferKind::Input && a.owner_pos == 5).unwrap();
        assert_eq!(ib.size_elements, 6 * 6 * 4);
        assert_eq!(nominal_refetch_rate(ib, &bs, &layer()), Ratio::new(2 * 36, 16));
    }

    #[test]
    fn sizes_strictly_increase_within_kind() {
        let bs: BlockingString = "Fw(3) X(2) Fh(3) C(2) X(8) K(4) Y(8) C(4)".parse().unwrap();
        let a = derive_buffers(&bs, &layer()).unwrap();
        for w in a.windows(2) {
            if w[0].kind == w[1].kind {
                assert!(w[1].size_elements > w[0].size_elements);
                assert_eq!(w[1].level, w[0].level + 1);
            }
        }
    }

    #[test]
    fn output_rr_at_least_two_for_c_loops() {
        let bs: BlockingString = "Fw(3) Fh(3) C(2) X(8) C(4) Y(8) K(4)".parse().unwrap();
        for a in derive_buffers(&bs, &layer()).unwrap() {
            if a.kind == BufferKind::Output {
                assert!(a.refetch_rate >= Ratio::from_integer(2));
            } else {
                assert!(a.refetch_rate >= Ratio::from_integer(1));
            }
        }
    }

    #[test]
    fn invalid_string_rejected() {
        let bs: BlockingString = "Fw(3) Fh(3) X(4) Y(8) C(4) K(4)".parse().unwrap();
        assert!(derive_buffers(&bs, &layer()).is_err());
    }

    #[test]
    fn rr_round_trips_through_json() {
        let bs: BlockingString = "Fw(3) Fh(3) X(8) Y(8) C(4) K(4)".parse().unwrap();
        for a in derive_buffers(&bs, &layer()).unwrap() {
            let text = serde_json::to_string(&a).unwrap();
            let back: BufferAlloc = serde_json::from_str(&text).unwrap();
            assert_eq!(a, back);
        }
    }
}
