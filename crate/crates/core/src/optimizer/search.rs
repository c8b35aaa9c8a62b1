//! Beam search: grow strings one split at a time from the single-level
//! orders, keeping the best `beam_width` per round plus random variants.

use std::collections::HashSet;
use std::hash::Hash;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::space::{enumerate_orders, occurrence_limits, window_prefix, OrderChains};
use super::{price_candidate, Collector, Explored, KeyFn, Scored, SearchConfig};
use crate::energy::EnergyTable;
use crate::error::Result;
use crate::model::{divisors, BlockingString, Dim, LayerShape, Loop};

pub(super) fn beam<K: Hash + Eq + Clone + Send>(
    layer: &LayerShape,
    cfg: &SearchConfig,
    table: &EnergyTable,
    key: &KeyFn<'_, K>,
) -> Result<Explored<K>> {
    let prefix = window_prefix(layer);
    let limits = occurrence_limits(layer, cfg.levels);
    let mut seen: HashSet<BlockingString> = HashSet::new();
    let mut core = Vec::new();
    for order in enumerate_orders(layer, 1) {
        OrderChains::new(layer, order).for_each(&prefix, |bs| {
            let bs = if bs.is_empty() { BlockingString::unblocked(layer) } else { bs };
            if seen.insert(bs.clone()) {
                core.push(bs);
            }
        });
    }

    let mut collector = Collector::new(cfg.top_k);
    let mut evaluated = 0u64;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut beam = rank(core, layer, cfg, table, key, &mut collector, &mut evaluated);
    let mut round = 0;
    loop {
        let mut candidates = Vec::new();
        for s in &beam {
            for bs in expansions(&s.bs, layer, &limits, prefix.len()) {
                if seen.insert(bs.clone()) {
                    candidates.push(bs);
                }
            }
        }
        if candidates.is_empty() {
            break;
        }
        for _ in 0..cfg.perturbations {
            let parent = &beam[rng.gen_range(0..beam.len())].bs;
            if let Some(bs) = perturb(parent, prefix.len(), cfg.perturb_magnitude.max(1), &mut rng) {
                if seen.insert(bs.clone()) {
                    candidates.push(bs);
                }
            }
        }
        round += 1;
        log::debug!("beam round {round}: {} candidates", candidates.len());
        beam = rank(candidates, layer, cfg, table, key, &mut collector, &mut evaluated);
        if beam.is_empty() {
            break;
        }
    }
    Ok(Explored { best: collector.finish(), evaluated })
}

/// Prices candidates in parallel, records them and returns the best
/// `beam_width` in rank order.
fn rank<K: Hash + Eq + Clone + Send>(
    candidates: Vec<BlockingString>,
    layer: &LayerShape,
    cfg: &SearchConfig,
    table: &EnergyTable,
    key: &KeyFn<'_, K>,
    collector: &mut Collector<K>,
    evaluated: &mut u64,
) -> Vec<Scored> {
    *evaluated += candidates.len() as u64;
    let mut priced: Vec<(K, Scored)> = candidates
        .par_iter()
        .filter_map(|bs| price_candidate(bs, layer, cfg, table).map(|(s, ev)| (key(bs, &ev), s)))
        .collect();
    priced.sort_by(|a, b| a.1.cmp(&b.1));
    let mut beam = Vec::with_capacity(cfg.beam_width.min(priced.len()));
    for (k, s) in priced {
        if beam.len() < cfg.beam_width {
            beam.push(s.clone());
        }
        collector.insert(k, s);
    }
    beam
}

/// Every string obtained by splitting one dimension once more: its current
/// outermost loop takes a smaller extent and a new full-extent loop is
/// inserted further out, never right next to it.
fn expansions(bs: &BlockingString, layer: &LayerShape, limits: &[usize; 7], prefix: usize) -> Vec<BlockingString> {
    let loops = bs.loops();
    let mut out = Vec::new();
    for d in [Dim::X, Dim::Y, Dim::C, Dim::K, Dim::N] {
        let positions: Vec<usize> = (prefix..loops.len()).filter(|&j| loops[j].dim == d).collect();
        let Some(&top) = positions.last() else {
            continue;
        };
        if positions.len() >= limits[d.index()] {
            continue;
        }
        let below = if positions.len() >= 2 { loops[positions[positions.len() - 2]].extent } else { 1 };
        let size = layer.dim(d);
        for v in divisors(size) {
            if v <= below || v >= size || v % below != 0 {
                continue;
            }
            for q in top + 2..=loops.len() {
                let mut next = loops.to_vec();
                next[top].extent = v;
                next.insert(q, Loop::new(d, size));
                out.push(BlockingString::new(next));
            }
        }
    }
    out
}

/// A random neighbour: an inner extent moved along its divisor list, or
/// two adjacent loops of different dimensions exchanged.
fn perturb(bs: &BlockingString, prefix: usize, magnitude: usize, rng: &mut impl Rng) -> Option<BlockingString> {
    let mut loops = bs.loops().to_vec();
    if loops.len() <= prefix + 1 {
        return None;
    }
    if rng.gen_bool(0.5) {
        let inner: Vec<usize> = (prefix..loops.len())
            .filter(|&j| loops[j + 1..].iter().any(|l| l.dim == loops[j].dim))
            .collect();
        if inner.is_empty() {
            return None;
        }
        let j = inner[rng.gen_range(0..inner.len())];
        let d = loops[j].dim;
        let below = loops[..j].iter().rev().find(|l| l.dim == d).map_or(1, |l| l.extent);
        let above = loops[j + 1..].iter().find(|l| l.dim == d).unwrap().extent;
        let options: Vec<u64> =
            divisors(above).into_iter().filter(|&v| v > below && v < above && v % below == 0).collect();
        let cur = options.iter().position(|&v| v == loops[j].extent)? as isize;
        let step = rng.gen_range(1..=magnitude) as isize * if rng.gen_bool(0.5) { 1 } else { -1 };
        let to = (cur + step).clamp(0, options.len() as isize - 1);
        if to == cur {
            return None;
        }
        loops[j].extent = options[to as usize];
    } else {
        let i = rng.gen_range(prefix..loops.len() - 1);
        if loops[i].dim == loops[i + 1].dim {
            return None;
        }
        loops.swap(i, i + 1);
        let clash = |a: usize, b: usize| b < loops.len() && loops[a].dim == loops[b].dim;
        if (i > prefix && clash(i - 1, i)) || clash(i + 1, i + 2) {
            return None;
        }
    }
    Some(BlockingString::new(loops))
}

#[cfg(test)]
mod tests {
    use super::super::{search, SearchKind};
    use super::*;
    use crate::model::validate_blocking;

    fn small() -> LayerShape {
        LayerShape::new(8, 8, 4, 4, 3, 3).unwrap()
    }

    #[test]
    fn unbounded_beam_equals_exhaustive() {
        let t = EnergyTable::default();
        let exhaustive = SearchConfig { top_k: 1, ..SearchConfig::default() };
        let beam = SearchConfig {
            search: SearchKind::Beam,
            beam_width: usize::MAX,
            perturbations: 0,
            ..exhaustive.clone()
        };
        let a = search(&small(), &exhaustive, &t).unwrap();
        let b = search(&small(), &beam, &t).unwrap();
        assert_eq!(a[0].blocking, b[0].blocking);
    }

    #[test]
    fn same_seed_same_result() {
        let t = EnergyTable::default();
        let cfg = SearchConfig { beam_width: 8, ..SearchConfig::beam(11) };
        let a = search(&small(), &cfg, &t).unwrap();
        let b = search(&small(), &cfg, &t).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn expansions_and_perturbations_stay_valid() {
        let l = LayerShape::new(16, 8, 12, 4, 3, 3).unwrap();
        let limits = occurrence_limits(&l, 3);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let start: BlockingString = "Fw(3) Fh(3) C(12) X(16) K(4) Y(8)".parse().unwrap();
        let mut frontier = vec![start];
        for _ in 0..3 {
            let mut next = Vec::new();
            for bs in &frontier {
                for e in expansions(bs, &l, &limits, 2) {
                    assert!(validate_blocking(&e, &l).is_ok(), "{e}");
                    for _ in 0..4 {
                        if let Some(p) = perturb(&e, 2, 2, &mut rng) {
                            assert!(validate_blocking(&p, &l).is_ok(), "{p}");
                            assert!(p.loops().windows(2).all(|w| w[0].dim != w[1].dim), "{p}");
                        }
                    }
                    next.push(e);
                }
            }
            next.truncate(50);
            frontier = next;
        }
    }
}
