//! Schedule search: exhaustive enumeration and beam search, in co-design
//! or fixed-hierarchy pricing.

mod search;
pub mod space;

use std::cmp::Ordering;
use std::collections::HashMap;
use std::hash::Hash;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    access_counts_with, derive_buffers_with, evaluate, pricing_report, AnalysisOptions, BufferAlloc, EnergyMode,
    EnergyReport, Evaluation, PackingPlan,
};
use crate::energy::EnergyTable;
use crate::error::{Error, Result};
use crate::hierarchy::MemoryHierarchy;
use crate::model::{validate_blocking, BlockingString, LayerShape};

pub use space::enumerate_orders;

/// Exhaustive search enumerates at most this many levels.
pub const MAX_EXHAUSTIVE_LEVELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchKind {
    Exhaustive,
    Beam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Maximum occurrences of each dimension.
    pub levels: usize,
    pub search: SearchKind,
    pub beam_width: usize,
    /// Random variants added to each beam round.
    pub perturbations: usize,
    /// Largest divisor-list step of an extent perturbation.
    pub perturb_magnitude: usize,
    pub seed: u64,
    pub mode: EnergyMode,
    /// Exhaustive search refuses spaces larger than this.
    pub max_candidates: u64,
    /// Number of results returned, best first.
    pub top_k: usize,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
    pub analysis: AnalysisOptions,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            levels: 2,
            search: SearchKind::Exhaustive,
            beam_width: 128,
            perturbations: 32,
            perturb_magnitude: 1,
            seed: 0,
            mode: EnergyMode::codesign(),
            max_candidates: 50_000_000,
            top_k: 1,
            threads: None,
            analysis: AnalysisOptions::default(),
        }
    }
}

impl SearchConfig {
    pub fn beam(seed: u64) -> Self {
        SearchConfig { search: SearchKind::Beam, seed, ..SearchConfig::default() }
    }

    fn check(&self) -> Result<()> {
        if self.levels == 0 || self.beam_width == 0 || self.top_k == 0 {
            return Err(Error::InvalidLayer("levels, beam width and top-k must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleResult {
    pub blocking: BlockingString,
    pub report: EnergyReport,
    pub buffers: Vec<BufferAlloc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub packing: Option<PackingPlan>,
}

/// Full analysis of one string under a pricing mode.
pub fn schedule_result(
    bs: &BlockingString,
    layer: &LayerShape,
    mode: &EnergyMode,
    table: &EnergyTable,
    opts: &AnalysisOptions,
) -> Result<ScheduleResult> {
    let buffers = derive_buffers_with(bs, layer, opts)?;
    let profile = access_counts_with(&buffers, bs, layer, opts)?;
    let (report, packing) = pricing_report(&buffers, &profile, layer, mode, table)?;
    Ok(ScheduleResult { blocking: bs.clone(), report, buffers, packing })
}

/// A priced candidate. Ordered by energy, then on-chip bytes, then the
/// loop sequence, so every search is deterministic.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Scored {
    pub energy: f64,
    pub bytes: u64,
    pub bs: BlockingString,
}

impl Scored {
    pub fn cmp(&self, other: &Scored) -> Ordering {
        self.energy
            .total_cmp(&other.energy)
            .then(self.bytes.cmp(&other.bytes))
            .then_with(|| self.bs.cmp(&other.bs))
    }
}

/// Keeps the best candidate per key, bounded to roughly the `k` best keys.
pub(crate) struct Collector<K> {
    k: usize,
    entries: HashMap<K, Scored>,
}

impl<K: Hash + Eq + Clone> Collector<K> {
    pub fn new(k: usize) -> Self {
        Collector { k, entries: HashMap::new() }
    }

    pub fn insert(&mut self, key: K, s: Scored) {
        match self.entries.get_mut(&key) {
            Some(cur) => {
                if s.cmp(cur) == Ordering::Less {
                    *cur = s;
                }
            }
            None => {
                self.entries.insert(key, s);
                if self.entries.len() > 2 * self.k + 16 {
                    self.prune();
                }
            }
        }
    }

    fn prune(&mut self) {
        let mut all: Vec<(K, Scored)> = self.entries.drain().collect();
        all.sort_by(|a, b| a.1.cmp(&b.1));
        all.truncate(self.k);
        self.entries = all.into_iter().collect();
    }

    pub fn merge(mut self, other: Self) -> Self {
        for (k, s) in other.entries {
            self.insert(k, s);
        }
        self
    }

    pub fn finish(self) -> Vec<(K, Scored)> {
        let mut all: Vec<(K, Scored)> = self.entries.into_iter().collect();
        all.sort_by(|a, b| a.1.cmp(&b.1));
        all.truncate(self.k);
        all
    }
}

/// How a search groups candidates: by string, or by some derived key.
pub(crate) type KeyFn<'a, K> = dyn Fn(&BlockingString, &Evaluation) -> K + Sync + 'a;

pub(crate) struct Explored<K> {
    pub best: Vec<(K, Scored)>,
    pub evaluated: u64,
}

/// Runs the configured search and keeps the `top_k` best keys.
pub(crate) fn explore<K: Hash + Eq + Clone + Send>(
    layer: &LayerShape,
    cfg: &SearchConfig,
    table: &EnergyTable,
    key: &KeyFn<'_, K>,
) -> Result<Explored<K>> {
    cfg.check()?;
    layer.check()?;
    let run = || match cfg.search {
        SearchKind::Exhaustive => exhaustive(layer, cfg, table, key),
        SearchKind::Beam => search::beam(layer, cfg, table, key),
    };
    let explored = match cfg.threads {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Infeasible(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    }?;
    if explored.best.is_empty() {
        return Err(Error::Unschedulable("no candidate string fits the memory model".into()));
    }
    Ok(explored)
}

pub(crate) fn price_candidate(
    bs: &BlockingString,
    layer: &LayerShape,
    cfg: &SearchConfig,
    table: &EnergyTable,
) -> Option<(Scored, Evaluation)> {
    let ev = evaluate(bs, layer, &cfg.mode, table, &cfg.analysis).ok()?;
    Some((Scored { energy: ev.total_pj, bytes: ev.onchip_bytes, bs: bs.clone() }, ev))
}

fn exhaustive<K: Hash + Eq + Clone + Send>(
    layer: &LayerShape,
    cfg: &SearchConfig,
    table: &EnergyTable,
    key: &KeyFn<'_, K>,
) -> Result<Explored<K>> {
    if cfg.levels > MAX_EXHAUSTIVE_LEVELS {
        return Err(Error::BudgetExceeded(format!(
            "exhaustive search supports at most {MAX_EXHAUSTIVE_LEVELS} levels; use beam search"
        )));
    }
    let prefix = space::window_prefix(layer);
    let orders: Vec<space::OrderChains> = enumerate_orders(layer, cfg.levels)
        .into_iter()
        .map(|o| space::OrderChains::new(layer, o))
        .collect();
    let total: u64 = orders.iter().map(|o| o.count()).sum();
    if total > cfg.max_candidates {
        return Err(Error::BudgetExceeded(format!(
            "{total} candidate strings exceed the cap of {}",
            cfg.max_candidates
        )));
    }
    log::info!("exhaustive search over {} orders, {total} strings", orders.len());

    let (collector, evaluated) = orders
        .par_iter()
        .fold(
            || (Collector::new(cfg.top_k), 0u64),
            |(mut c, mut n), oc| {
                oc.for_each(&prefix, |bs| {
                    let bs = if bs.is_empty() { BlockingString::unblocked(layer) } else { bs };
                    n += 1;
                    if let Some((s, ev)) = price_candidate(&bs, layer, cfg, table) {
                        c.insert(key(&bs, &ev), s);
                    }
                });
                (c, n)
            },
        )
        .reduce(|| (Collector::new(cfg.top_k), 0), |(a, n), (b, m)| (a.merge(b), n + m));
    Ok(Explored { best: collector.finish(), evaluated })
}

/// Best schedules found by the configured search, best first.
pub fn search(layer: &LayerShape, cfg: &SearchConfig, table: &EnergyTable) -> Result<Vec<ScheduleResult>> {
    let key = |bs: &BlockingString, _: &Evaluation| bs.clone();
    let explored = explore(layer, cfg, table, &key)?;
    log::info!("evaluated {} strings", explored.evaluated);
    explored
        .best
        .into_iter()
        .map(|(_, s)| schedule_result(&s.bs, layer, &cfg.mode, table, &cfg.analysis))
        .collect()
}

fn best_of(layer: &LayerShape, cfg: &SearchConfig, table: &EnergyTable) -> Result<ScheduleResult> {
    let cfg = SearchConfig { top_k: 1, ..cfg.clone() };
    Ok(search(layer, &cfg, table)?.remove(0))
}

pub fn optimize_exhaustive(layer: &LayerShape, cfg: &SearchConfig, table: &EnergyTable) -> Result<ScheduleResult> {
    best_of(layer, &SearchConfig { search: SearchKind::Exhaustive, ..cfg.clone() }, table)
}

pub fn optimize_beam(layer: &LayerShape, cfg: &SearchConfig, table: &EnergyTable) -> Result<ScheduleResult> {
    best_of(layer, &SearchConfig { search: SearchKind::Beam, ..cfg.clone() }, table)
}

/// Searches with every candidate packed into `hierarchy`.
pub fn optimize_fixed(
    layer: &LayerShape,
    hierarchy: &MemoryHierarchy,
    cfg: &SearchConfig,
    table: &EnergyTable,
) -> Result<ScheduleResult> {
    best_of(layer, &SearchConfig { mode: EnergyMode::fixed(hierarchy.clone()), ..cfg.clone() }, table)
}

/// Energy of the unblocked string under the same pricing.
pub fn unblocked_energy(layer: &LayerShape, cfg: &SearchConfig, table: &EnergyTable) -> Result<f64> {
    let bs = BlockingString::unblocked(layer);
    validate_blocking(&bs, layer).into_result()?;
    Ok(evaluate(&bs, layer, &cfg.mode, table, &cfg.analysis)?.total_pj)
}
