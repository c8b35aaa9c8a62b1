//! One function per subcommand. Each returns the report in all three
//! output formats; `main` picks one.

use std::fmt::Write as _;
use std::path::Path;

use convblock::analysis::{access_counts_with, derive_buffers_with, AnalysisOptions};
use convblock::codesign::{joint_from_points, layer_pareto};
use convblock::model::LayerDoc;
use convblock::optimizer::schedule_result;
use convblock::parallel::multicore_report;
use convblock::simulator::{diff, simulate_allocs, SimOptions, DEFAULT_MAC_CAP};
use convblock::{
    search, validate_blocking, BlockingString, EnergyMode, EnergyTable, MemoryHierarchy, Result, Scheme,
    SearchConfig, SearchKind,
};
use serde::Serialize;
use serde_json::json;

use crate::inputs;
use crate::{MemoryArgs, SearchArg, SearchArgs};

pub struct Context {
    pub table: EnergyTable,
    pub threads: Option<usize>,
}

pub struct Output {
    pub text: String,
    pub json: serde_json::Value,
    pub csv: String,
}

fn csv_of<T: Serialize>(rows: &[T]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| std::io::Error::other(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| std::io::Error::other(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

fn search_config(ctx: &Context, s: &SearchArgs, mode: EnergyMode) -> SearchConfig {
    SearchConfig {
        levels: s.levels,
        search: match s.search {
            SearchArg::Exhaustive => SearchKind::Exhaustive,
            SearchArg::Beam => SearchKind::Beam,
        },
        beam_width: s.beam,
        seed: s.seed,
        mode,
        top_k: s.top_k.max(1),
        threads: ctx.threads,
        ..SearchConfig::default()
    }
}

fn parse_string(doc: &LayerDoc, s: &str) -> Result<BlockingString> {
    let bs: BlockingString = s.parse()?;
    validate_blocking(&bs, &doc.shape).into_result()?;
    Ok(bs)
}

fn layer_line(doc: &LayerDoc) -> String {
    let l = &doc.shape;
    format!(
        "layer {}: X={} Y={} C={} K={} Fw={} Fh={} N={}  ({} MACs)\n",
        doc.name,
        l.x,
        l.y,
        l.c,
        l.k,
        l.fw,
        l.fh,
        l.n,
        l.total_macs()
    )
}

#[derive(Serialize)]
struct BufferRow {
    kind: String,
    level: usize,
    owner_pos: usize,
    size_elements: u64,
    size_bytes: u64,
    refetch_rate: String,
    fills: u64,
    loads: u64,
    reads_served: u64,
    writes_served: u64,
    writebacks: u64,
    placement: String,
    pj_per_access: f64,
    pj: f64,
}

pub fn analyze(ctx: &Context, layer: &str, string: &str, memory: &MemoryArgs, shift_window: bool) -> Result<Output> {
    let doc = inputs::layer(layer)?;
    let bs = parse_string(&doc, string)?;
    let mode = inputs::mode(memory)?;
    let opts = AnalysisOptions { shift_window };
    let result = schedule_result(&bs, &doc.shape, &mode, &ctx.table, &opts)?;
    let profile = access_counts_with(&result.buffers, &bs, &doc.shape, &opts)?;

    let rows: Vec<BufferRow> = result
        .buffers
        .iter()
        .zip(&profile.buffers)
        .zip(&result.report.buffers)
        .map(|((a, c), e)| BufferRow {
            kind: a.kind.to_string(),
            level: a.level,
            owner_pos: a.owner_pos,
            size_elements: a.size_elements,
            size_bytes: a.size_bytes(&doc.shape),
            refetch_rate: a.refetch_rate.to_string(),
            fills: c.fills,
            loads: c.elements_read_from_parent,
            reads_served: c.reads_served,
            writes_served: c.writes_served,
            writebacks: c.writebacks,
            placement: serde_json::to_value(e.placement).map(|v| v.to_string()).unwrap_or_default(),
            pj_per_access: e.pj_per_access,
            pj: e.pj,
        })
        .collect();

    let mut text = layer_line(&doc);
    writeln!(text, "string {bs}").unwrap();
    writeln!(
        text,
        "{:<6} {:>5} {:>12} {:>10} {:>12} {:>16} {:>16} {:>16}",
        "buffer", "owner", "elements", "RR", "fills", "loads", "reads", "writes"
    )
    .unwrap();
    for r in &rows {
        writeln!(
            text,
            "{:<6} {:>5} {:>12} {:>10} {:>12} {:>16} {:>16} {:>16}",
            format!("{}{}", r.kind, r.level),
            r.owner_pos,
            r.size_elements,
            r.refetch_rate,
            r.fills,
            r.loads,
            r.reads_served,
            r.writes_served
        )
        .unwrap();
    }
    writeln!(text, "DRAM reads IB {} KB {} OB {}, DRAM writes {}", profile.dram_reads.input, profile.dram_reads.kernel, profile.dram_reads.output, profile.dram_writes).unwrap();
    writeln!(text, "{}", result.report).unwrap();

    let json = json!({
        "layer": doc,
        "blocking": bs,
        "buffers": result.buffers,
        "profile": profile,
        "report": result.report,
        "packing": result.packing,
    });
    Ok(Output { text, json, csv: csv_of(&rows)? })
}

pub fn simulate(
    layer: &str,
    string: &str,
    check: bool,
    dump_trace: Option<&Path>,
    mac_cap: Option<u64>,
    shift_window: bool,
) -> Result<(Output, u8)> {
    let doc = inputs::layer(layer)?;
    let bs = parse_string(&doc, string)?;
    let opts = SimOptions {
        mac_cap: mac_cap.unwrap_or(DEFAULT_MAC_CAP),
        analysis: AnalysisOptions { shift_window },
        ..SimOptions::default()
    };
    let allocs = derive_buffers_with(&bs, &doc.shape, &opts.analysis)?;
    let profile = access_counts_with(&allocs, &bs, &doc.shape, &opts.analysis)?;
    let trace = simulate_allocs(&allocs, &bs, &doc.shape, &opts)?;
    let diffs = diff(&allocs, &profile, &trace, &opts.analysis);
    if let Some(path) = dump_trace {
        std::fs::write(path, serde_json::to_string_pretty(&trace)? + "\n")?;
    }

    let mut text = layer_line(&doc);
    writeln!(text, "string {bs}").unwrap();
    writeln!(
        text,
        "{:<6} {:>12} {:>12} {:>16} {:>16} {:>16} {:>16}",
        "buffer", "peak", "fills", "loads", "reads", "writes", "writebacks"
    )
    .unwrap();
    for b in &trace.buffers {
        writeln!(
            text,
            "{:<6} {:>12} {:>12} {:>16} {:>16} {:>16} {:>16}",
            format!("{}{}", b.kind, b.level),
            b.peak_tile_elements,
            b.fills,
            b.elements_transferred,
            b.reads_served,
            b.writes_served,
            b.writebacks
        )
        .unwrap();
    }
    writeln!(
        text,
        "DRAM reads IB {} KB {} OB {}, DRAM writes {}, MACs {}",
        trace.dram_reads.input, trace.dram_reads.kernel, trace.dram_reads.output, trace.dram_writes, trace.mac_count
    )
    .unwrap();
    if diffs.is_empty() {
        writeln!(text, "analysis and simulation agree").unwrap();
    } else {
        for d in &diffs {
            writeln!(text, "mismatch {}: analytic {} simulated {}", d.field, d.analytic, d.simulated).unwrap();
        }
    }

    let code = if check && !diffs.is_empty() {
        eprintln!("{} field(s) differ between analysis and simulation", diffs.len());
        1
    } else {
        0
    };
    let json = json!({
        "layer": doc,
        "blocking": bs,
        "trace": trace,
        "equivalent": diffs.is_empty(),
        "diffs": diffs,
    });
    Ok((Output { text, json, csv: csv_of(&trace.buffers)? }, code))
}

#[derive(Serialize)]
struct RankRow {
    rank: usize,
    blocking: String,
    total_pj: f64,
    pj_per_mac: f64,
    onchip_bytes: u64,
    dram_pj: f64,
}

pub fn optimize(ctx: &Context, layer: &str, memory: &MemoryArgs, s: &SearchArgs) -> Result<Output> {
    let doc = inputs::layer(layer)?;
    let cfg = search_config(ctx, s, inputs::mode(memory)?);
    let results = search(&doc.shape, &cfg, &ctx.table)?;
    let rows: Vec<RankRow> = results
        .iter()
        .enumerate()
        .map(|(i, r)| RankRow {
            rank: i + 1,
            blocking: r.blocking.to_string(),
            total_pj: r.report.total_pj,
            pj_per_mac: r.report.pj_per_mac,
            onchip_bytes: r.report.onchip_bytes,
            dram_pj: r.report.dram_pj,
        })
        .collect();

    let mut text = layer_line(&doc);
    for r in &rows {
        writeln!(text, "#{} {}  total pJ {:.1}  pJ/MAC {:.4}", r.rank, r.blocking, r.total_pj, r.pj_per_mac).unwrap();
    }
    writeln!(text, "\nbest schedule\n{}", results[0].report).unwrap();
    let json = json!({ "layer": doc, "results": results });
    Ok(Output { text, json, csv: csv_of(&rows)? })
}

#[derive(Serialize)]
struct CoreRow {
    schedule: usize,
    blocking: String,
    scheme: String,
    #[serde(rename = "S")]
    cores: u64,
    private_pj: f64,
    shared_pj: f64,
    broadcast_pj: f64,
    shuffle_pj: f64,
    dram_pj: f64,
    total_pj: f64,
    pj_per_mac: f64,
}

fn schemes(arg: &str) -> Result<Vec<Scheme>> {
    if arg.eq_ignore_ascii_case("both") {
        return Ok(Scheme::ALL.to_vec());
    }
    arg.split(',').map(|s| s.trim().parse()).collect()
}

pub fn multicore(
    ctx: &Context,
    layer: &str,
    string: Option<&str>,
    cores: &[u64],
    scheme: &str,
    memory: &MemoryArgs,
    s: &SearchArgs,
) -> Result<Output> {
    let doc = inputs::layer(layer)?;
    let mode = inputs::mode(memory)?;
    let schemes = schemes(scheme)?;
    let strings = match string {
        Some(st) => vec![parse_string(&doc, st)?],
        None => {
            let cfg = search_config(ctx, s, mode.clone());
            search(&doc.shape, &cfg, &ctx.table)?.into_iter().map(|r| r.blocking).collect()
        }
    };
    let report = multicore_report(&doc.shape, &strings, cores, &schemes, &mode, &ctx.table)?;
    let rows: Vec<CoreRow> = report
        .rows
        .iter()
        .map(|r| CoreRow {
            schedule: r.schedule,
            blocking: r.blocking.to_string(),
            scheme: r.plan.scheme.to_string(),
            cores: r.plan.cores,
            private_pj: r.plan.private_pj,
            shared_pj: r.plan.shared_pj,
            broadcast_pj: r.plan.broadcast_pj,
            shuffle_pj: r.plan.shuffle_pj,
            dram_pj: r.plan.dram_pj,
            total_pj: r.plan.total_pj,
            pj_per_mac: r.plan.pj_per_mac,
        })
        .collect();

    let mut text = layer_line(&doc);
    for (i, bs) in strings.iter().enumerate() {
        let rec = report.recommended[i].map_or("none".to_string(), |s| s.to_string());
        writeln!(text, "schedule {i}: {bs}  (shares its largest buffer: {rec})").unwrap();
    }
    writeln!(
        text,
        "{:>3} {:<13} {:>2} {:>12} {:>12} {:>12} {:>12} {:>12} {:>12} {:>8}",
        "#", "scheme", "S", "private", "shared", "broadcast", "shuffle", "DRAM", "total", "pJ/MAC"
    )
    .unwrap();
    for r in &rows {
        writeln!(
            text,
            "{:>3} {:<13} {:>2} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>8.4}",
            r.schedule, r.scheme, r.cores, r.private_pj, r.shared_pj, r.broadcast_pj, r.shuffle_pj, r.dram_pj,
            r.total_pj, r.pj_per_mac
        )
        .unwrap();
    }
    for sk in &report.skipped {
        writeln!(text, "skipped schedule {} {} S={}: {}", sk.schedule, sk.scheme, sk.cores, sk.reason).unwrap();
    }
    let json = json!({ "layer": doc, "report": report });
    Ok(Output { text, json, csv: csv_of(&rows)? })
}

#[derive(Serialize)]
struct DesignRow {
    layer: String,
    rank: usize,
    signature: String,
    total_bytes: u64,
    blocking: String,
    total_pj: f64,
}

pub fn codesign(ctx: &Context, sources: &[String], budget_kb: Option<u64>, points: usize, s: &SearchArgs) -> Result<Output> {
    let mut docs = Vec::new();
    for src in sources {
        docs.extend(inputs::layers(src)?);
    }
    let budget = budget_kb.map(|kb| kb * 1024);
    let cfg = search_config(ctx, s, EnergyMode::Codesign { budget_bytes: budget });
    let shapes: Vec<_> = docs.iter().map(|d| d.shape).collect();
    let per_layer = shapes
        .iter()
        .map(|l| layer_pareto(l, budget, points, &cfg, &ctx.table))
        .collect::<Result<Vec<_>>>()?;
    let joint = joint_from_points(&shapes, &per_layer, &cfg, &ctx.table)?;

    let mut rows = Vec::new();
    for (doc, pts) in docs.iter().zip(&per_layer) {
        for (i, p) in pts.iter().enumerate() {
            rows.push(DesignRow {
                layer: doc.name.clone(),
                rank: i + 1,
                signature: p.signature.to_string(),
                total_bytes: p.total_bytes,
                blocking: p.schedule.blocking.to_string(),
                total_pj: p.total_pj,
            });
        }
    }
    for (doc, sched) in docs.iter().zip(&joint.schedules) {
        rows.push(DesignRow {
            layer: doc.name.clone(),
            rank: 0,
            signature: joint.signature.to_string(),
            total_bytes: joint.signature.total_bytes(),
            blocking: sched.blocking.to_string(),
            total_pj: sched.report.total_pj,
        });
    }

    let mut text = String::new();
    match budget {
        Some(b) => writeln!(text, "budget {} KB", b / 1024).unwrap(),
        None => writeln!(text, "no budget").unwrap(),
    }
    for (doc, pts) in docs.iter().zip(&per_layer) {
        writeln!(text, "\n{}", layer_line(doc).trim_end()).unwrap();
        for (i, p) in pts.iter().enumerate() {
            writeln!(text, "  #{:<2} {:>12.4e} pJ {:>10} B  {}  [{}]", i + 1, p.total_pj, p.total_bytes, p.schedule.blocking, p.signature).unwrap();
        }
    }
    writeln!(text, "\nshared design [{}] ({} B, {} candidates)", joint.signature, joint.signature.total_bytes(), joint.candidates).unwrap();
    for (doc, sched) in docs.iter().zip(&joint.schedules) {
        writeln!(text, "  {:<8} {:>12.4e} pJ  {}", doc.name, sched.report.total_pj, sched.blocking).unwrap();
    }
    writeln!(text, "  total    {:>12.4e} pJ", joint.total_pj).unwrap();

    let layers_json: Vec<_> = docs
        .iter()
        .zip(&per_layer)
        .map(|(d, pts)| json!({ "layer": d, "points": pts }))
        .collect();
    let json = json!({ "budget_bytes": budget, "layers": layers_json, "joint": joint });
    Ok(Output { text, json, csv: csv_of(&rows)? })
}

#[derive(Serialize)]
struct BenchRow {
    layer: String,
    macs: u64,
    baseline: String,
    baseline_pj: f64,
    baseline_kb_dram_pj: f64,
    diannao_best: String,
    diannao_pj: f64,
    diannao_kb_dram_pj: f64,
    kb_dram_reduction: f64,
    codesign_best: String,
    codesign_pj: f64,
    codesign_onchip_bytes: u64,
    codesign_gain: f64,
}

pub fn bench(ctx: &Context, budget_kb: u64, s: &SearchArgs) -> Result<Output> {
    let diannao = EnergyMode::fixed(MemoryHierarchy::diannao());
    let fixed_cfg = SearchConfig { top_k: 1, ..search_config(ctx, s, diannao.clone()) };
    let codesign_cfg = SearchConfig { top_k: 1, ..search_config(ctx, s, EnergyMode::budget(budget_kb * 1024)) };
    let mut rows = Vec::new();
    for (name, layer) in convblock::builtin_benchmarks() {
        let base = MemoryHierarchy::diannao_baseline(&layer);
        let base_report = convblock::schedule_energy(&base, &layer, &diannao, &ctx.table)?;
        let fixed = search(&layer, &fixed_cfg, &ctx.table)?.remove(0);
        let co = search(&layer, &codesign_cfg, &ctx.table)?.remove(0);
        rows.push(BenchRow {
            layer: name.to_string(),
            macs: layer.total_macs(),
            baseline: base.to_string(),
            baseline_pj: base_report.total_pj,
            baseline_kb_dram_pj: base_report.dram_pj_by_kind.kernel,
            diannao_best: fixed.blocking.to_string(),
            diannao_pj: fixed.report.total_pj,
            diannao_kb_dram_pj: fixed.report.dram_pj_by_kind.kernel,
            kb_dram_reduction: base_report.dram_pj_by_kind.kernel / fixed.report.dram_pj_by_kind.kernel,
            codesign_best: co.blocking.to_string(),
            codesign_pj: co.report.total_pj,
            codesign_onchip_bytes: co.report.onchip_bytes,
            codesign_gain: fixed.report.total_pj / co.report.total_pj,
        });
    }

    let mut text = format!(
        "{:<6} {:>14} {:>12} {:>12} {:>12} {:>10} {:>12} {:>10}\n",
        "layer", "MACs", "baseline", "DianNao", "codesign", "KB DRAM x", "on-chip B", "gain"
    );
    for r in &rows {
        writeln!(
            text,
            "{:<6} {:>14} {:>12.4e} {:>12.4e} {:>12.4e} {:>10.1} {:>12} {:>10.2}",
            r.layer, r.macs, r.baseline_pj, r.diannao_pj, r.codesign_pj, r.kb_dram_reduction, r.codesign_onchip_bytes,
            r.codesign_gain
        )
        .unwrap();
    }
    let fixed_total: f64 = rows.iter().map(|r| r.diannao_pj).sum();
    let co_total: f64 = rows.iter().map(|r| r.codesign_pj).sum();
    writeln!(text, "total  DianNao {fixed_total:.4e} pJ, codesign ({budget_kb} KB) {co_total:.4e} pJ, gain {:.2}", fixed_total / co_total).unwrap();
    let json = json!({
        "budget_bytes": budget_kb * 1024,
        "layers": rows,
        "diannao_total_pj": fixed_total,
        "codesign_total_pj": co_total,
    });
    Ok(Output { text, json, csv: csv_of(&rows)? })
}
