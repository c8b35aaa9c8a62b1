//! Memory co-design across layers: per-layer design points under a capacity
//! budget, then one shared hierarchy chosen for the whole network.

use std::collections::BTreeSet;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{BufferKind, EnergyMode, Evaluation, MemorySpec};
use crate::energy::EnergyTable;
use crate::error::{Error, Result};
use crate::hierarchy::{MemLevel, MemoryHierarchy};
use crate::model::{BlockingString, LayerShape};
use crate::optimizer::{explore, schedule_result, search, ScheduleResult, SearchConfig};

/// The memories a design needs, sorted.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize, Default)]
pub struct Signature(pub Vec<MemorySpec>);

impl Signature {
    pub fn from_kept(kept: &[(BufferKind, u64)]) -> Self {
        let mut v: Vec<MemorySpec> = kept.iter().map(|&(kind, bytes)| MemorySpec::dedicated(kind, bytes)).collect();
        v.sort();
        Signature(v)
    }

    pub fn total_bytes(&self) -> u64 {
        self.0.iter().map(|m| m.bytes).sum()
    }

    pub fn mode(&self) -> EnergyMode {
        EnergyMode::memories(self.0.clone())
    }

    /// The memories as kind-restricted pools over DRAM, for fixed-mode use.
    pub fn hierarchy(&self) -> Result<MemoryHierarchy> {
        let mut levels: Vec<MemLevel> =
            self.0.iter().map(|m| MemLevel::sram(m.bytes, m.width_bits).holding(&[m.kind])).collect();
        levels.push(MemLevel::dram());
        MemoryHierarchy::new(levels)
    }
}

impl fmt::Display for Signature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("(none)");
        }
        for (i, m) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(" ")?;
            }
            write!(f, "{}:{}B@{}", m.kind, m.bytes, m.width_bits)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignPoint {
    pub signature: Signature,
    pub schedule: ScheduleResult,
    pub total_bytes: u64,
    pub total_pj: f64,
}

impl DesignPoint {
    /// Area under a linear per-KB model supplied by the caller.
    pub fn area_mm2(&self, mm2_per_kb: f64) -> f64 {
        self.total_bytes as f64 / 1024.0 * mm2_per_kb
    }
}

/// The `top_k` cheapest designs with distinct signatures whose memories
/// total at most `budget_bytes` (unbounded when `None`).
pub fn layer_pareto(
    layer: &LayerShape,
    budget_bytes: Option<u64>,
    top_k: usize,
    cfg: &SearchConfig,
    table: &EnergyTable,
) -> Result<Vec<DesignPoint>> {
    let cfg = SearchConfig { mode: EnergyMode::Codesign { budget_bytes }, top_k, ..cfg.clone() };
    let key = |_: &BlockingString, ev: &Evaluation| Signature::from_kept(&ev.kept);
    let explored = explore(layer, &cfg, table, &key).map_err(|e| match e {
        Error::Unschedulable(m) => Error::Infeasible(m),
        e => e,
    })?;
    explored
        .best
        .into_iter()
        .map(|(signature, s)| {
            let schedule = schedule_result(&s.bs, layer, &cfg.mode, table, &cfg.analysis)?;
            Ok(DesignPoint {
                total_bytes: signature.total_bytes(),
                total_pj: schedule.report.total_pj,
                signature,
                schedule,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointDesign {
    pub signature: Signature,
    pub schedules: Vec<ScheduleResult>,
    pub total_pj: f64,
    /// Candidate signatures tried.
    pub candidates: usize,
}

/// Picks one memory design for all layers: every signature among the
/// layers' design points is tried, each layer is searched again on it, and
/// the cheapest total wins.
pub fn joint_select(
    layers: &[LayerShape],
    budget_bytes: Option<u64>,
    top_k: usize,
    cfg: &SearchConfig,
    table: &EnergyTable,
) -> Result<JointDesign> {
    let points = layers
        .iter()
        .map(|l| layer_pareto(l, budget_bytes, top_k, cfg, table))
        .collect::<Result<Vec<_>>>()?;
    joint_from_points(layers, &points, cfg, table)
}

/// The joint step on design points already computed per layer.
pub fn joint_from_points(
    layers: &[LayerShape],
    points: &[Vec<DesignPoint>],
    cfg: &SearchConfig,
    table: &EnergyTable,
) -> Result<JointDesign> {
    if layers.is_empty() {
        return Err(Error::InvalidLayer("no layers to co-design".into()));
    }
    if points.len() != layers.len() {
        return Err(Error::InvalidLayer(format!("{} layers but {} point sets", layers.len(), points.len())));
    }
    let signatures: BTreeSet<Signature> = points.iter().flatten().map(|p| p.signature.clone()).collect();
    let candidates = signatures.len();
    log::info!("joint selection over {candidates} signatures");

    let tried: Vec<(Signature, Result<(Vec<ScheduleResult>, f64)>)> = signatures
        .into_par_iter()
        .map(|sig| {
            let on_sig = SearchConfig { mode: sig.mode(), top_k: 1, ..cfg.clone() };
            let r = layers
                .iter()
                .zip(points)
                .map(|(l, own)| {
                    // The search is heuristic; the layer's own design points
                    // are replayed too so none is lost on its own signature.
                    let mut best = search(l, &on_sig, table)?.remove(0);
                    for p in own {
                        let r = schedule_result(&p.schedule.blocking, l, &on_sig.mode, table, &cfg.analysis)?;
                        if r.report.total_pj < best.report.total_pj {
                            best = r;
                        }
                    }
                    Ok(best)
                })
                .collect::<Result<Vec<_>>>()
                .map(|schedules| {
                    let total = schedules.iter().map(|s| s.report.total_pj).sum();
                    (schedules, total)
                });
            (sig, r)
        })
        .collect();

    let mut best: Option<JointDesign> = None;
    for (signature, r) in tried {
        match r {
            Ok((schedules, total_pj)) => {
                if best.as_ref().is_none_or(|b| total_pj < b.total_pj) {
                    best = Some(JointDesign { signature, schedules, total_pj, candidates });
                }
            }
            Err(e) if e.is_infeasible() => {
                log::debug!("signature {signature} rejected: {e}");
            }
            Err(e) => return Err(e),
        }
    }
    best.ok_or_else(|| Error::Infeasible("no candidate hierarchy fits every layer".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::optimizer::optimize_exhaustive;

    fn tiny() -> LayerShape {
        LayerShape::new(8, 8, 4, 4, 3, 3).unwrap()
    }

    #[test]
    fn unbounded_first_point_is_the_optimum() {
        let t = EnergyTable::default();
        let cfg = SearchConfig::default();
        let pts = layer_pareto(&tiny(), None, 10, &cfg, &t).unwrap();
        let best = optimize_exhaustive(&tiny(), &cfg, &t).unwrap();
        assert_eq!(pts[0].total_pj, best.report.total_pj);
        let sigs: BTreeSet<_> = pts.iter().map(|p| p.signature.clone()).collect();
        assert_eq!(sigs.len(), pts.len());
        assert!(pts.windows(2).all(|w| w[0].total_pj <= w[1].total_pj));
        assert_eq!(layer_pareto(&tiny(), None, 1, &cfg, &t).unwrap().len(), 1);
    }

    #[test]
    fn budget_bounds_every_point_and_costs_energy() {
        let t = EnergyTable::default();
        let cfg = SearchConfig::default();
        let small = layer_pareto(&tiny(), Some(256), 5, &cfg, &t).unwrap();
        let large = layer_pareto(&tiny(), Some(64 * 1024), 5, &cfg, &t).unwrap();
        assert!(small.iter().all(|p| p.total_bytes <= 256 && p.schedule.report.onchip_bytes <= 256));
        assert!(large[0].total_pj <= small[0].total_pj);
    }

    #[test]
    fn signature_replays_as_a_hierarchy() {
        let t = EnergyTable::default();
        let cfg = SearchConfig::default();
        let p = &layer_pareto(&tiny(), None, 1, &cfg, &t).unwrap()[0];
        let on_h = schedule_result(&p.schedule.blocking, &tiny(), &p.signature.mode(), &t, &cfg.analysis).unwrap();
        assert!(
            (on_h.report.total_pj - p.total_pj).abs() <= 1e-9 * p.total_pj,
            "{}\n{:#?}\n{:#?}\n{:?}",
            p.signature,
            p.schedule.report.buffers,
            on_h.report.buffers,
            on_h.packing
        );
    }

    #[test]
    fn single_layer_joint_equals_its_best_point() {
        let t = EnergyTable::default();
        let cfg = SearchConfig::default();
        let best = layer_pareto(&tiny(), None, 3, &cfg, &t).unwrap()[0].total_pj;
        let j = joint_select(&[tiny()], None, 3, &cfg, &t).unwrap();
        assert!((j.total_pj - best).abs() <= 1e-9 * best);
    }

    #[test]
    fn identical_layers_double_the_energy() {
        let t = EnergyTable::default();
        let cfg = SearchConfig::default();
        let one = joint_select(&[tiny()], Some(4096), 3, &cfg, &t).unwrap();
        let two = joint_select(&[tiny(), tiny()], Some(4096), 3, &cfg, &t).unwrap();
        assert!((two.total_pj - 2.0 * one.total_pj).abs() <= 1e-9 * two.total_pj);
        assert_eq!(one.signature, two.signature);
    }

    #[test]
    fn empty_network_is_rejected() {
        let t = EnergyTable::default();
        assert!(joint_select(&[], None, 3, &SearchConfig::default(), &t).is_err());
    }
}
