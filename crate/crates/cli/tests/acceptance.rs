//! End-to-end acceptance checks. Runs without the libtest harness and prints one
//! PASS/FAIL line per criterion.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, ExitCode};
use std::time::Instant;

use dcnet_core::fec::{codeword_error_rate, fec_latency, symbol_error_rate, FecScheme};
use dcnet_core::link_budget::{bdp, fabric_rtt};
use dcnet_core::metrics::RunMetrics;
use dcnet_core::sim::{self, mix64, Scenario};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn dcnet(args: &[&str]) -> Result<String, String> {
    let out = Command::new(env!("CARGO_BIN_EXE_dcnet"))
        .args(args)
        .output()
        .map_err(|e| format!("spawning dcnet: {e}"))?;
    if !out.status.success() {
        return Err(format!(
            "dcnet {} exited with {}: {}",
            args.join(" "),
            out.status,
            String::from_utf8_lossy(&out.stderr).trim()
        ));
    }
    String::from_utf8(out.stdout).map_err(|e| e.to_string())
}

type Row = HashMap<String, String>;

fn rows(csv: &str) -> Vec<Row> {
    let mut lines = csv.lines().filter(|l| !l.starts_with('#'));
    let Some(header) = lines.next() else {
        return Vec::new();
    };
    let names: Vec<&str> = header.split(',').collect();
    lines
        .map(|l| {
            // the free-text note is the last column and may not contain commas
            names
                .iter()
                .zip(l.split(','))
                .map(|(k, v)| (k.to_string(), v.to_string()))
                .collect()
        })
        .collect()
}

fn num(row: &Row, col: &str) -> Result<f64, String> {
    let v = row.get(col).ok_or_else(|| format!("missing column {col}"))?;
    v.parse().map_err(|_| format!("column {col}: not a number: {v:?}"))
}

fn calc(args: &[&str]) -> Result<Vec<Row>, String> {
    let mut full = vec!["calc"];
    full.extend_from_slice(args);
    Ok(rows(&dcnet(&full)?))
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../scenarios")
        .join(format!("{name}.toml"))
}

fn load(name: &str) -> Result<Scenario, String> {
    let text = fs::read_to_string(scenario_path(name)).map_err(|e| format!("{name}: {e}"))?;
    Scenario::from_toml(&text).map_err(|e| format!("{name}: {e}"))
}

fn simulate(name: &str) -> Result<RunMetrics, String> {
    sim::run(&load(name)?).map_err(|e| format!("{name}: {e}"))
}

/// Runs a scenario through the binary and returns the parsed flows.csv.
fn sim_flows(name: &str, extra: &[&str]) -> Result<Vec<Row>, String> {
    let path = scenario_path(name);
    let mut args = vec!["sim", "run", path.to_str().unwrap()];
    args.extend_from_slice(extra);
    Ok(rows(&dcnet(&args)?))
}

fn total(flows: &[Row], col: &str) -> Result<f64, String> {
    flows.iter().map(|r| num(r, col)).sum()
}

/// The quoted figure, either exact or the value cut to two significant figures.
fn reads_as(v: f64, quoted: f64) -> bool {
    if rel(v, quoted) < 1e-9 {
        return true;
    }
    let scale = 10f64.powi(v.abs().log10().floor() as i32 - 1);
    let rounded = (v / scale).round() * scale;
    let truncated = (v / scale).trunc() * scale;
    rel(rounded, quoted) < 1e-9 || rel(truncated, quoted) < 1e-9
}

fn header_budget() -> Outcome {
    let mut seen = Vec::new();
    for (profile, bytes, exact, quoted) in [
        ("none", 0.0, 12.5, 12.5),
        ("ib_local", 20.0, 3.57, 3.5),
        ("rocev2", 66.0, 1.35, 1.4),
    ] {
        let r = &calc(&[
            "headers",
            "--profile",
            profile,
            "--payload-bytes",
            "8",
            "--bandwidth-gbps",
            "800",
        ])?[0];
        check!(
            num(r, "header_bytes")? == bytes,
            "{profile}: header bytes {}",
            num(r, "header_bytes")?
        );
        let gpps = num(r, "rate_pps")? / 1e9;
        check!((gpps - exact).abs() < 5e-3, "{profile}: {gpps} Gpps, expected {exact}");
        check!(
            reads_as(gpps, quoted),
            "{profile}: {gpps} Gpps does not read as {quoted} at 2 s.f."
        );
        seen.push(format!("{profile} {bytes} B {gpps:.3} Gpps"));
    }
    Ok(seen.join(", "))
}

fn gbn_desk_numbers() -> Outcome {
    let table = calc(&["gbn", "--ber", "1e-12", "--frame-bytes", "4096,9216"])?;
    let four_k = table
        .iter()
        .find(|r| r["frame_bits"] == "32768")
        .ok_or("no 4 KiB row")?;
    let p4 = num(four_k, "frame_loss_p")?;
    check!(rel(p4, 3.2768e-8) < 1e-6, "4 KiB loss {p4:e}");
    check!(rel(p4, 3.3e-8) < 0.02, "4 KiB loss {p4:e} not within 2% of 3.3e-8");
    let nine_k = table
        .iter()
        .find(|r| {
            r["frame_bits"] == "73728" && r["frame_loss_p"].parse::<f64>().is_ok_and(|p| rel(p, 7.3728e-8) < 1e-6)
        })
        .ok_or("no 9 KiB row with its own loss")?;
    let mixed = table
        .iter()
        .find(|r| r["frame_bits"] == "73728" && r["note"].contains("own loss is 7.373e-8"))
        .ok_or("no discrepancy note row")?;
    check!(
        rel(num(mixed, "frame_loss_p")?, p4) < 1e-12,
        "mixed row does not carry the 4 KiB loss"
    );
    let waste = num(
        &calc(&[
            "gbn",
            "--frame-loss-p",
            "3.3e-8",
            "--frame-bytes",
            "9216",
            "--bandwidth-gbps",
            "800",
            "--rtt-ns",
            "3600",
        ])?[0],
        "waste_fraction",
    )?;
    check!(rel(waste, 1.29e-6) < 0.005, "waste {waste:e}");
    let percent = format!("{:.1e}", waste * 100.0);
    check!(percent == "1.3e-4", "waste reads as {percent} %, expected 0.00013 %");
    Ok(format!(
        "4 KiB {p4:.3e}, 9 KiB {:.3e}, waste {waste:.4e} ({percent} %)",
        num(nine_k, "frame_loss_p")?
    ))
}

fn enumerate_cer(n: u32, t: u32, ser: f64) -> f64 {
    (0u32..(1 << n))
        .filter(|p| p.count_ones() > t)
        .map(|p| ser.powi(p.count_ones() as i32) * (1.0 - ser).powi((n - p.count_ones()) as i32))
        .sum()
}

fn codeword_error_fidelity() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut cases = 0;
    for n in 1..=12u32 {
        for k in 1..=n {
            for m in 1..=3u32 {
                let scheme = FecScheme::new(n, k, m).map_err(|e| e.to_string())?;
                for ber in [1e-9, 1e-6, 1e-4, 1e-3, 0.01, 0.1, 0.3, 0.5] {
                    let ser = symbol_error_rate(ber, m).map_err(|e| e.to_string())?;
                    let exact = enumerate_cer(n, scheme.correctable_symbols(), ser);
                    let got = codeword_error_rate(&scheme, ser).map_err(|e| e.to_string())?;
                    let err = if exact == 0.0 { got } else { rel(got, exact) };
                    check!(err <= 1e-9, "RS({n},{k}) m={m} ber={ber}: {got:e} vs {exact:e}");
                    worst = worst.max(err);
                    cases += 1;
                }
            }
        }
    }

    // Monte Carlo on RS(15,11) with 4-bit symbols, bit errors drawn independently
    let scheme = FecScheme::new(15, 11, 4).map_err(|e| e.to_string())?;
    let ser: f64 = 0.05;
    let ber = 1.0 - (1.0 - ser).powf(0.25);
    let threshold = (ber * 2f64.powi(64)) as u64;
    let trials = 10_000_000u64;
    let seed = 0x5eed_f00d_u64;
    let mut draw = 0u64;
    let mut failures = 0u64;
    for _ in 0..trials {
        let mut hit_symbols = 0;
        for _ in 0..15 {
            let mut hit = false;
            for _ in 0..4 {
                hit |= mix64(seed ^ draw) < threshold;
                draw += 1;
            }
            hit_symbols += u32::from(hit);
        }
        failures += u64::from(hit_symbols > scheme.correctable_symbols());
    }
    let estimate = failures as f64 / trials as f64;
    let analytic = codeword_error_rate(&scheme, ser).map_err(|e| e.to_string())?;
    let z = (estimate - analytic) / (analytic * (1.0 - analytic) / trials as f64).sqrt();
    check!(
        z.abs() <= 3.0,
        "monte carlo {estimate:e} vs analytic {analytic:e}, z = {z:.2}"
    );
    Ok(format!(
        "{cases} enumerated cases, worst rel {worst:.1e}; monte carlo z = {z:.2}"
    ))
}

fn rs544_constants() -> Outcome {
    let r = &calc(&["fec", "--scheme", "rs544", "--ber", "1e-12", "--frame-bytes", "9216"])?[0];
    check!(num(r, "t")? == 15.0, "t = {}", r["t"]);
    let l = &calc(&["fec-latency", "--bandwidth-gbps", "100"])?[0];
    check!(
        num(l, "codeword_data_bits")? == 5140.0,
        "data bits {}",
        l["codeword_data_bits"]
    );
    let s = FecScheme::rs544();
    check!(
        s.correctable_symbols() == 15 && s.codeword_data_bits() == 5140,
        "library constants"
    );
    Ok("t = 15, data bits = 5140".into())
}

fn fec_latency_shape() -> Outcome {
    let mut state = 0xfec_u64;
    let mut next = || {
        state = mix64(state);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for _ in 0..10_000 {
        let bits = 1 + (next() * 100_000.0) as u64;
        let bps = 1e9 + next() * 4e12;
        let compute = next() * 200.0;
        let a = fec_latency(bits, bps, compute).map_err(|e| e.to_string())?;
        let b = fec_latency(bits, 2.0 * bps, compute).map_err(|e| e.to_string())?;
        check!(
            a.accumulation_ns == 2.0 * b.accumulation_ns,
            "{bits} bits at {bps} b/s does not halve exactly"
        );
        check!(b.total_ns() >= compute, "total below compute");
    }
    let gbps: Vec<String> = (0..24).map(|d| format!("{}", 100u64 << d)).collect();
    let table = calc(&[
        "fec-latency",
        "--bandwidth-gbps",
        &gbps.join(","),
        "--compute-ns",
        "20,100",
    ])?;
    for compute in [20.0, 100.0] {
        let curve: Vec<f64> = table
            .iter()
            .filter(|r| num(r, "compute_ns").is_ok_and(|c| c == compute))
            .map(|r| num(r, "total_ns"))
            .collect::<Result<_, _>>()?;
        check!(
            curve.windows(2).all(|w| w[1] < w[0]),
            "curve for {compute} ns not decreasing"
        );
        let last = *curve.last().unwrap();
        check!(
            last > compute && last - compute < 1e-5,
            "curve for {compute} ns ends at {last}"
        );
    }
    Ok("10000 random halvings exact; curves converge to 20 and 100 ns".into())
}

fn headroom_model() -> Outcome {
    let h = num(
        &calc(&[
            "headroom",
            "--bandwidth-gbps",
            "800",
            "--rtt-ns",
            "1200",
            "--mtu-bytes",
            "9216",
        ])?[0],
        "headroom_bytes",
    )?;
    check!(h == 129_216.0, "headroom {h}");
    let rtt = num(
        &calc(&["rtt", "--fabric-hops", "6", "--per-hop-ns", "600"])?[0],
        "fabric_rtt_ns",
    )?;
    check!(rtt == 3600.0, "fabric rtt {rtt} ns");
    let b = num(
        &calc(&["bdp", "--bandwidth-gbps", "800", "--rtt-us", "10"])?[0],
        "bdp_bytes",
    )?;
    check!(b == 1_000_000.0, "bdp {b}");
    Ok(format!("headroom {h} B, fabric rtt {rtt} ns, bdp {b} B"))
}

fn lossless_soundness() -> Outcome {
    let mut detail = Vec::new();
    for name in ["incast", "obs_all_to_all", "ls_chain"] {
        let flows = sim_flows(name, &[])?;
        check!(!flows.is_empty(), "{name}: no flows");
        check!(
            flows.iter().all(|r| !r["fct_ns"].is_empty()),
            "{name}: incomplete flows"
        );
        let drops = total(&flows, "drops")?;
        check!(drops == 0.0, "{name}: {drops} drops with auto headroom");
        detail.push(format!("{name} {} flows 0 drops", flows.len()));
    }
    let auto = load("incast")?.resolve().map_err(|e| e.to_string())?.headroom_bytes;
    let half = format!("pfc.headroom_bytes={}", auto / 2);
    let drops = total(&sim_flows("incast", &["--set", &half])?, "drops")?;
    check!(drops >= 1.0, "incast with headroom {} B: no drops", auto / 2);
    detail.push(format!("halved headroom {} B: {drops} drops", auto / 2));
    Ok(detail.join(", "))
}

fn victim_flow() -> Outcome {
    let a = |name: &str| -> Result<f64, String> {
        let flows = sim_flows(name, &[])?;
        num(
            flows.iter().find(|r| r["flow_id"] == "0").ok_or("no flow A")?,
            "goodput_gbps",
        )
    };
    let shared = a("victim_shared")?;
    let baseline = a("victim_baseline")?;
    let separate = a("victim_separate")?;
    let reduction = 1.0 - shared / baseline;
    check!(reduction >= 0.2, "shared class costs A only {:.1}%", reduction * 100.0);
    check!(
        rel(separate, baseline) <= 0.05,
        "separate class {separate} vs baseline {baseline}"
    );
    Ok(format!(
        "A alone {baseline:.1} Gb/s, shared {shared:.1} (-{:.0}%), separate {separate:.1}",
        reduction * 100.0
    ))
}

fn transport_comparison() -> Outcome {
    let gbn = simulate("transport_go_back_n")?;
    let sel = simulate("transport_selective")?;
    let (g, s) = (&gbn.flows[0], &sel.flows[0]);
    // losses are keyed by (packet, attempt), so resends draw fresh outcomes
    check!(g.drops > 0 && s.drops > 0, "no losses on the trace");
    check!(
        s.retx_bytes < g.retx_bytes,
        "selective {} B >= go-back-n {} B",
        s.retx_bytes,
        g.retx_bytes
    );
    let (gg, sg) = (
        g.goodput_gbps().ok_or("gbn incomplete")?,
        s.goodput_gbps().ok_or("selective incomplete")?,
    );
    check!(sg >= gg, "selective goodput {sg} < go-back-n {gg}");
    let geometry = load("transport_go_back_n")?
        .resolve()
        .map_err(|e| e.to_string())?
        .geometry;
    let saturated: Vec<_> = gbn.rewinds.iter().filter(|r| r.saturated).collect();
    check!(!saturated.is_empty(), "no saturated rewinds");
    let mut worst = 0u64;
    for r in &saturated {
        let window = geometry.bandwidth.bytes_in(r.measured_rtt);
        let off = r.resent_wire_bytes.abs_diff(window);
        check!(
            off <= geometry.mtu_bytes,
            "rewind at seq {}: resent {} B vs window {window} B",
            r.nack_seq,
            r.resent_wire_bytes
        );
        worst = worst.max(off);
    }
    Ok(format!(
        "retx {} B vs {} B, goodput {sg:.1} vs {gg:.1} Gb/s, {} rewinds within {worst} B of BW*RTT",
        s.retx_bytes,
        g.retx_bytes,
        saturated.len()
    ))
}

fn sub_bdp_incast() -> Outcome {
    let mut detail = Vec::new();
    for (name, small) in [("subbdp_small", true), ("subbdp_large", false)] {
        let scenario = load(name)?;
        let resolved = scenario.resolve().map_err(|e| e.to_string())?;
        let topo = scenario.build_topology().map_err(|e| e.to_string())?;
        let links = topo.max_switch_hops() as u32 + 1;
        let fabric_bdp = bdp(
            resolved.geometry.bandwidth,
            fabric_rtt(links, resolved.geometry.per_hop_latency),
        );
        let m = sim::run(&scenario).map_err(|e| format!("{name}: {e}"))?;
        check!(!m.flows.is_empty(), "{name}: no flows");
        let before = m
            .flows
            .iter()
            .filter(|f| match (f.injection_done, f.first_feedback) {
                (Some(done), Some(fb)) => done < fb,
                (Some(_), None) => true,
                _ => false,
            })
            .count();
        let size = m.flows[0].bytes;
        if small {
            check!(size <= fabric_bdp, "{name}: {size} B exceeds bdp {fabric_bdp} B");
            check!(
                before == m.flows.len(),
                "{name}: {before}/{} finished injection first",
                m.flows.len()
            );
        } else {
            check!(size >= 10 * fabric_bdp, "{name}: {size} B below 10x bdp {fabric_bdp} B");
            check!(
                before == 0,
                "{name}: {before}/{} finished injection first",
                m.flows.len()
            );
        }
        detail.push(format!("{size} B vs bdp {fabric_bdp} B: {before}/{}", m.flows.len()));
    }
    Ok(detail.join(", "))
}

fn determinism() -> Outcome {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios");
    let mut names: Vec<PathBuf> = fs::read_dir(&dir)
        .map_err(|e| e.to_string())?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "toml"))
        .collect();
    names.sort();
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    for path in &names {
        let stem = path.file_stem().unwrap().to_string_lossy();
        let mut outputs = Vec::new();
        for run in 0..2 {
            let out = tmp.path().join(format!("{stem}-{run}"));
            dcnet(&["sim", "run", path.to_str().unwrap(), "--out", out.to_str().unwrap()])?;
            let read = |f: &str| fs::read(out.join(f)).map_err(|e| format!("{stem}/{f}: {e}"));
            outputs.push((read("flows.csv")?, read("ports.csv")?));
        }
        check!(outputs[0].0 == outputs[1].0, "{stem}: flows.csv differs between runs");
        check!(outputs[0].1 == outputs[1].1, "{stem}: ports.csv differs between runs");
    }
    Ok(format!("{} scenarios byte-identical", names.len()))
}

fn main() -> ExitCode {
    let criteria: [Criterion; 11] = [
        ("header budget", header_budget),
        ("go-back-n desk numbers", gbn_desk_numbers),
        ("codeword error fidelity", codeword_error_fidelity),
        ("rs544 constants", rs544_constants),
        ("fec latency shape", fec_latency_shape),
        ("headroom model", headroom_model),
        ("lossless soundness", lossless_soundness),
        ("victim flow", victim_flow),
        ("transport comparison", transport_comparison),
        ("sub-bdp incast", sub_bdp_incast),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {name} ({secs:.1} s): {detail}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name} ({secs:.1} s): {why}");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 11 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
