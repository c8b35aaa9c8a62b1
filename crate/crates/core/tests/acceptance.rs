//! One test per acceptance criterion. Each prints a single PASS/FAIL line
//! straight to stdout (bypassing the harness capture) before asserting.

use std::io::Write;
use std::time::{Duration, Instant};

use convblock::analysis::AnalysisOptions;
use convblock::model::random_blocking;
use convblock::optimizer::schedule_result;
use convblock::simulator::{check_equivalence_with, simulate, SimOptions};
use convblock::{
    builtin_benchmarks, search, unblocked_energy, BlockingString, EnergyMode, EnergyTable, LayerShape,
    MemoryHierarchy, ScheduleResult, Scheme, SearchConfig, SearchKind,
};
use convblock::parallel::unroll_position;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(criterion: u32, ok: bool, detail: &str) {
    let verdict = if ok { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    writeln!(out, "acceptance {criterion}: {verdict}  {detail}").unwrap();
    out.flush().unwrap();
}

fn beam(mode: EnergyMode, seed: u64) -> SearchConfig {
    SearchConfig { search: SearchKind::Beam, beam_width: 128, seed, mode, top_k: 1, ..SearchConfig::default() }
}

fn best(layer: &LayerShape, cfg: &SearchConfig, table: &EnergyTable) -> ScheduleResult {
    search(layer, cfg, table).unwrap().remove(0)
}

/// N·X·Y·C·K·Fw·Fh from the fields themselves.
fn macs_of(l: &LayerShape) -> u64 {
    l.n * l.x * l.y * l.c * l.k * l.fw * l.fh
}

fn random_layer(rng: &mut ChaCha8Rng) -> LayerShape {
    loop {
        let fw = if rng.gen_bool(0.5) { 1 } else { 3 };
        let fh = if rng.gen_bool(0.5) { 1 } else { 3 };
        let shape = LayerShape::with_batch(
            rng.gen_range(1..=16),
            rng.gen_range(1..=16),
            rng.gen_range(1..=8),
            rng.gen_range(1..=8),
            fw,
            fh,
            rng.gen_range(1..=2),
        );
        if let Ok(l) = shape {
            return l;
        }
    }
}

#[test]
fn c1_analysis_equals_simulation() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xC0FFEE);
    let start = Instant::now();
    let (mut checked, mut mismatched, mut macs_wrong) = (0, Vec::new(), 0);
    while checked < 1000 {
        let layer = random_layer(&mut rng);
        let bs = random_blocking(&layer, 3, &mut rng);
        let opts = SimOptions { analysis: AnalysisOptions { shift_window: rng.gen_bool(0.5) }, ..SimOptions::default() };
        let diff = check_equivalence_with(&bs, &layer, &opts).unwrap();
        if !diff.is_empty() {
            mismatched.push(format!("{bs} on {layer:?}: {diff:?}"));
        }
        if simulate(&bs, &layer, &opts).unwrap().mac_count != macs_of(&layer) {
            macs_wrong += 1;
        }
        checked += 1;
    }
    let took = start.elapsed();
    let ok = mismatched.is_empty() && macs_wrong == 0 && took < Duration::from_secs(120);
    report(
        1,
        ok,
        &format!("{checked} random strings, {} mismatches, {took:.1?} (limit 120s)", mismatched.len()),
    );
    assert!(ok, "{mismatched:#?}");
}

/// pJ per 16-bit access, rows 1KB..1024KB, columns 64/128/256/512 bits.
const TABLE: [(u64, [f64; 4]); 11] = [
    (1, [1.20, 0.93, 0.69, 0.57]),
    (2, [1.54, 1.37, 0.91, 0.68]),
    (4, [2.11, 1.68, 1.34, 0.90]),
    (8, [3.19, 2.71, 2.21, 1.33]),
    (16, [4.36, 3.57, 2.66, 2.19]),
    (32, [5.82, 4.80, 3.52, 2.64]),
    (64, [8.10, 7.51, 5.79, 4.67]),
    (128, [11.66, 11.50, 8.46, 6.15]),
    (256, [15.60, 15.51, 13.09, 8.99]),
    (512, [23.37, 23.24, 17.93, 15.76]),
    (1024, [36.32, 32.81, 28.88, 25.22]),
];

#[test]
fn c2_energy_table_matches() {
    let t = EnergyTable::default();
    let mut wrong = Vec::new();
    let mut entries = 0;
    for (kb, row) in TABLE {
        let stored = t.sram_rows.iter().find(|r| r.kb == kb).map(|r| r.pj);
        if stored != Some(row) {
            wrong.push(format!("row {kb}KB stored as {stored:?}"));
        }
        for (w, &pj) in [64u32, 128, 256, 512].iter().zip(&row) {
            entries += 1;
            let got = t.energy_per_access(kb * 1024, *w);
            if got != pj {
                wrong.push(format!("{kb}KB@{w}: {got} != {pj}"));
            }
        }
    }
    if t.sram_rows.len() != TABLE.len() {
        wrong.push(format!("{} rows stored", t.sram_rows.len()));
    }
    if t.dram_pj != 320.0 {
        wrong.push(format!("dram {}", t.dram_pj));
    }
    let ok = wrong.is_empty() && entries == 44;
    report(2, ok, &format!("{entries} SRAM entries + DRAM 320 pJ exact at grid points"));
    assert!(ok, "{wrong:#?}");
}

#[test]
fn c3_beam_within_ten_percent_of_exhaustive() {
    let t = EnergyTable::default();
    let layer = LayerShape::new(32, 32, 16, 16, 3, 3).unwrap();
    let mode = EnergyMode::Codesign { budget_bytes: None };
    let start = Instant::now();
    let exact = best(&layer, &SearchConfig { search: SearchKind::Exhaustive, levels: 2, ..beam(mode.clone(), 0) }, &t);
    let took = start.elapsed();
    let opt = exact.report.total_pj;
    let gaps: Vec<f64> = (0..5)
        .map(|seed| best(&layer, &SearchConfig { levels: 2, ..beam(mode.clone(), seed) }, &t).report.total_pj / opt - 1.0)
        .collect();
    let worst = gaps.iter().cloned().fold(0.0, f64::max);
    let ok = worst <= 0.10 && took < Duration::from_secs(600);
    report(
        3,
        ok,
        &format!("exhaustive {opt:.4e} pJ in {took:.1?}; worst beam gap over 5 seeds {:.2}% (limit 10%)", worst * 100.0),
    );
    assert!(ok, "gaps {gaps:?}");
}

#[test]
fn c4_macs_are_conserved() {
    let t = EnergyTable::default();
    let diannao = EnergyMode::fixed(MemoryHierarchy::diannao());
    let mut wrong = Vec::new();
    let mut strings = 0;
    for (name, layer) in builtin_benchmarks() {
        let mut candidates = vec![BlockingString::unblocked(&layer), MemoryHierarchy::diannao_baseline(&layer)];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        candidates.extend((0..5).map(|_| random_blocking(&layer, 3, &mut rng)));
        for bs in &candidates {
            strings += 1;
            let r = schedule_result(bs, &layer, &diannao, &t, &AnalysisOptions::default()).unwrap();
            if r.report.total_macs != macs_of(&layer) {
                wrong.push(format!("{name} {bs}: {} != {}", r.report.total_macs, macs_of(&layer)));
            }
        }
    }
    let conv4 = builtin_benchmarks()["conv4"];
    let conv4_macs = schedule_result(&BlockingString::unblocked(&conv4), &conv4, &diannao, &t, &AnalysisOptions::default())
        .unwrap()
        .report
        .total_macs;
    let ok = wrong.is_empty() && conv4_macs == 924_844_032;
    report(4, ok, &format!("{strings} strings over all presets; conv4 = {conv4_macs}"));
    assert!(ok, "{wrong:#?}");
}

#[test]
fn c5_fixed_hierarchy_cuts_kernel_dram_energy() {
    let t = EnergyTable::default();
    let diannao = EnergyMode::fixed(MemoryHierarchy::diannao());
    let cfg = beam(diannao.clone(), 0);
    let mut ratios = Vec::new();
    for name in ["conv3", "conv4", "conv5"] {
        let layer = builtin_benchmarks()[name];
        let base = schedule_result(
            &MemoryHierarchy::diannao_baseline(&layer),
            &layer,
            &diannao,
            &t,
            &AnalysisOptions::default(),
        )
        .unwrap();
        let opt = best(&layer, &cfg, &t);
        ratios.push((name, base.report.dram_pj_by_kind.kernel / opt.report.dram_pj_by_kind.kernel));
    }
    let ok = ratios.iter().all(|&(_, r)| r >= 2.0);
    let detail: Vec<String> = ratios.iter().map(|(n, r)| format!("{n} {r:.1}x")).collect();
    report(5, ok, &format!("KB DRAM energy reduction vs baseline: {} (floor 2x)", detail.join(", ")));
    assert!(ok);
}

#[test]
fn c6_codesign_gain_and_budget_monotonicity() {
    let t = EnergyTable::default();
    let layers: Vec<LayerShape> =
        ["conv1", "conv2", "conv3", "conv4", "conv5"].iter().map(|n| builtin_benchmarks()[n]).collect();
    let total = |mode: EnergyMode| -> f64 {
        let cfg = beam(mode, 0);
        layers.iter().map(|l| best(l, &cfg, &t).report.total_pj).sum()
    };
    let fixed = total(EnergyMode::fixed(MemoryHierarchy::diannao()));
    let budgets_kb = [64u64, 256, 1024, 8192];
    let co: Vec<f64> = budgets_kb.iter().map(|&kb| total(EnergyMode::budget(kb * 1024))).collect();
    let gain = fixed / co[2];
    let monotone = co.windows(2).all(|w| w[1] < w[0]);
    let ok = gain >= 3.0 && monotone;
    let per_budget: Vec<String> = budgets_kb.iter().zip(&co).map(|(kb, e)| format!("{kb}KB {e:.4e}")).collect();
    report(
        6,
        ok,
        &format!("1MB gain {gain:.2}x over DianNao {fixed:.4e} pJ (floor 3x); {}", per_budget.join(", ")),
    );
    assert!(ok);
}

/// The cheapest conv1 schedule whose recommended scheme unrolls the same
/// loop at every core count above one, so the ratio constraint holds for all.
#[test]
fn c7_more_cores_never_cost_more_per_mac() {
    let t = EnergyTable::default();
    let layer = builtin_benchmarks()["conv1"];
    let mode = EnergyMode::budget(1024 * 1024);
    let cores = [1u64, 2, 4, 8];
    let ranked = search(&layer, &SearchConfig { top_k: 64, ..beam(mode.clone(), 0) }, &t).unwrap();
    let unrollable = |bs: &BlockingString, scheme: Scheme| {
        let p: Vec<Option<usize>> = cores[1..].iter().map(|&s| unroll_position(bs, scheme, s)).collect();
        p[0].is_some() && p.windows(2).all(|w| w[0] == w[1])
    };
    let mut chosen = None;
    for (rank, r) in ranked.iter().enumerate() {
        let rep =
            convblock::multicore_report(&layer, std::slice::from_ref(&r.blocking), &cores, &Scheme::ALL, &mode, &t)
                .unwrap();
        if let Some(scheme) = rep.recommended[0] {
            if unrollable(&r.blocking, scheme) {
                chosen = Some((rank, r, scheme, rep));
                break;
            }
        }
    }
    let Some((rank, r, scheme, rep)) = chosen else {
        report(7, false, "no conv1 schedule among the best 64 unrolls evenly for S = 2, 4, 8");
        panic!("no unrollable schedule");
    };
    let mut per_mac: Vec<(u64, f64)> =
        rep.rows.iter().filter(|row| row.plan.scheme == scheme).map(|row| (row.plan.cores, row.plan.pj_per_mac)).collect();
    per_mac.sort_by_key(|&(s, _)| s);
    let covered = per_mac.iter().map(|&(s, _)| s).collect::<Vec<_>>() == cores;
    let ok = covered && per_mac.windows(2).all(|w| w[1].1 <= w[0].1);
    let detail: Vec<String> = per_mac.iter().map(|(s, e)| format!("S={s} {e:.4}")).collect();
    report(
        7,
        ok,
        &format!(
            "conv1 #{} {} ({:.4} pJ/MAC single core) under {scheme}: {}",
            rank + 1,
            r.blocking,
            r.report.pj_per_mac,
            detail.join(", ")
        ),
    );
    assert!(ok, "skipped: {:?}", rep.skipped);
}

#[test]
fn c8_search_is_sound_and_deterministic() {
    let t = EnergyTable::default();
    let layers = [
        LayerShape::new(8, 8, 4, 4, 3, 3).unwrap(),
        LayerShape::new(16, 16, 8, 8, 3, 3).unwrap(),
        LayerShape::new(12, 6, 6, 10, 1, 3).unwrap(),
        LayerShape::with_batch(8, 8, 4, 4, 3, 3, 2).unwrap(),
    ];
    let modes = [
        EnergyMode::Codesign { budget_bytes: None },
        EnergyMode::budget(2048),
        EnergyMode::fixed(MemoryHierarchy::diannao()),
    ];
    let mut violations = Vec::new();
    let mut cases = 0;
    for layer in &layers {
        for mode in &modes {
            cases += 1;
            let cfg = beam(mode.clone(), 3);
            let ex = best(layer, &SearchConfig { search: SearchKind::Exhaustive, ..cfg.clone() }, &t).report.total_pj;
            let bm = best(layer, &cfg, &t).report.total_pj;
            let un = unblocked_energy(layer, &cfg, &t).unwrap();
            if !(ex <= bm && bm <= un) {
                violations.push(format!("{layer:?}: exhaustive {ex} beam {bm} unblocked {un}"));
            }
        }
    }

    let conv3 = builtin_benchmarks()["conv3"];
    let cfg = beam(EnergyMode::fixed(MemoryHierarchy::diannao()), 7);
    let runs: Vec<ScheduleResult> =
        [Some(1), Some(4), None].iter().map(|&threads| best(&conv3, &SearchConfig { threads, ..cfg.clone() }, &t)).collect();
    let deterministic = runs.windows(2).all(|w| w[0] == w[1]);

    let ok = violations.is_empty() && deterministic;
    report(
        8,
        ok,
        &format!("exhaustive <= beam <= unblocked on {cases} cases; thread-count determinism {deterministic}"),
    );
    assert!(ok, "{violations:#?}");
}
