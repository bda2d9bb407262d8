use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use clap::{Args, Subcommand};

use dcnet_core::experiments::{self, GridAxis};
use dcnet_core::link_budget::LinkGeometry;
use dcnet_core::metrics::{fmt_ns, summarize, RunMetrics};
use dcnet_core::sim::{self, DeadlockReport, Scenario, SimError, Topology};
use dcnet_core::{Bandwidth, SimTime};

use crate::Failure;

#[derive(Debug, Subcommand)]
pub enum SimCommand {
    /// Run one scenario; flows.csv goes to stdout unless --out is given
    Run(RunArgs),
    /// Run the cartesian product of parameter axes in parallel
    Sweep(SweepArgs),
    /// Print the traffic schedule a scenario generates, without simulating
    Gen(GenArgs),
    /// Print the size of a folded-Clos fabric
    Topology(TopologyArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Scenario TOML file
    pub file: PathBuf,
    /// Directory for flows.csv, ports.csv and schedule.csv
    #[arg(long, env = "DCNET_OUT_DIR")]
    pub out: Option<PathBuf>,
    /// Override the scenario seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override a scenario value, e.g. pfc.headroom_bytes=64608 (repeatable)
    #[arg(long = "set", value_name = "PATH=VALUE")]
    pub sets: Vec<String>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    /// Base scenario TOML file
    pub file: PathBuf,
    /// Axis as path=v1,v2,... in the scenario's units (repeatable; none runs the base scenario)
    #[arg(long = "grid", value_name = "PATH=V1,V2")]
    pub grid: Vec<String>,
    /// Output directory
    #[arg(long, env = "DCNET_OUT_DIR")]
    pub out: PathBuf,
    /// Worker threads, a count (default: all cores)
    #[arg(long, env = "DCNET_JOBS")]
    pub jobs: Option<usize>,
}

#[derive(Debug, Args)]
pub struct GenArgs {
    /// Scenario TOML file
    pub file: PathBuf,
    /// Write schedule.csv to this file path instead of stdout
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override the scenario seed
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct TopologyArgs {
    /// Switch tiers, a count from 1 to 3
    #[arg(long, default_value_t = 3)]
    pub tiers: u32,
    /// Ports per switch, an even count
    #[arg(long, default_value_t = 4)]
    pub radix: u32,
}

fn load(path: &Path) -> Result<Scenario, Failure> {
    let text = fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))
        .map_err(Failure::Invalid)?;
    Scenario::from_toml(&text)
        .with_context(|| format!("{}", path.display()))
        .map_err(Failure::Invalid)
}

fn invalid(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Invalid(e.into())
}

fn runtime(e: impl Into<anyhow::Error>) -> Failure {
    Failure::Runtime(e.into())
}

fn create(path: &Path) -> io::Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

impl SimCommand {
    pub fn run(&self) -> Result<(), Failure> {
        match self {
            SimCommand::Run(a) => run(a),
            SimCommand::Sweep(a) => sweep(a),
            SimCommand::Gen(a) => gen(a),
            SimCommand::Topology(a) => topology(a),
        }
    }
}

fn run(a: &RunArgs) -> Result<(), Failure> {
    let mut scenario = load(&a.file)?;
    if !a.sets.is_empty() {
        scenario = experiments::apply_overrides(&scenario, &a.sets).map_err(invalid)?;
    }
    if let Some(seed) = a.seed {
        scenario.seed = seed;
    }
    scenario.resolve().map_err(invalid)?;
    match sim::run(&scenario) {
        Ok(m) => {
            write_run(&scenario, &m, a.out.as_deref()).map_err(runtime)?;
            eprintln!("{}", summary_line(&m));
            Ok(())
        }
        Err(SimError::Deadlock(rep)) => {
            let path = write_deadlock(&scenario, &rep, a.out.as_deref()).map_err(runtime)?;
            Err(Failure::Deadlock(path))
        }
        Err(e @ (SimError::Config(_) | SimError::Topology(_) | SimError::Traffic(_))) => Err(invalid(e)),
    }
}

fn write_run(scenario: &Scenario, m: &RunMetrics, out: Option<&Path>) -> Result<()> {
    match out {
        None => {
            let stdout = io::stdout();
            let mut lock = stdout.lock();
            m.write_flows_csv(&mut lock)?;
            lock.flush()?;
        }
        Some(dir) => {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            let mut f = create(&dir.join("flows.csv"))?;
            m.write_flows_csv(&mut f)?;
            f.flush()?;
            let mut p = create(&dir.join("ports.csv"))?;
            m.write_ports_csv(&mut p)?;
            p.flush()?;
            let topo = scenario.build_topology()?;
            let mut s = create(&dir.join("schedule.csv"))?;
            scenario.schedule(topo.host_count())?.write_csv(&mut s)?;
            s.flush()?;
        }
    }
    Ok(())
}

fn write_deadlock(scenario: &Scenario, rep: &DeadlockReport, out: Option<&Path>) -> Result<PathBuf> {
    let path = match out {
        Some(dir) => {
            fs::create_dir_all(dir)?;
            let mut f = create(&dir.join("flows.csv"))?;
            rep.metrics.write_flows_csv(&mut f)?;
            f.flush()?;
            let mut p = create(&dir.join("ports.csv"))?;
            rep.metrics.write_ports_csv(&mut p)?;
            p.flush()?;
            dir.join("deadlock.txt")
        }
        None => std::env::temp_dir().join(format!("dcnet-deadlock-{}-{}.txt", scenario.name, scenario.seed)),
    };
    fs::write(&path, rep.render()).with_context(|| format!("writing {}", path.display()))?;
    Ok(path)
}

fn summary_line(m: &RunMetrics) -> String {
    let s = summarize(m);
    format!(
        "{}: {}/{} flows complete, p50 fct {} ns, p99 fct {} ns, drops {}, pause frames {}, end {} ns",
        m.scenario_id,
        s.completed,
        s.flows,
        s.p50_fct.map(fmt_ns).unwrap_or_else(|| "-".into()),
        s.p99_fct.map(fmt_ns).unwrap_or_else(|| "-".into()),
        s.total_drops,
        s.pause_frames,
        fmt_ns(m.end_time)
    )
}

fn sweep(a: &SweepArgs) -> Result<(), Failure> {
    let base = load(&a.file)?;
    let grid = a
        .grid
        .iter()
        .map(|g| GridAxis::parse(g))
        .collect::<Result<Vec<_>, _>>()
        .map_err(invalid)?;
    experiments::expand(&base, &grid).map_err(invalid)?;
    let results = experiments::run_sweep(&base, &grid, a.jobs).map_err(runtime)?;
    experiments::write_sweep(&a.out, base.seed, &grid, &results)
        .with_context(|| format!("writing {}", a.out.display()))
        .map_err(Failure::Runtime)?;
    let deadlocked: Vec<usize> = results
        .iter()
        .filter(|r| matches!(r.outcome, Err(SimError::Deadlock(_))))
        .map(|r| r.point.index)
        .collect();
    eprintln!("{} points written to {}", results.len(), a.out.display());
    for r in &results {
        match &r.outcome {
            Err(SimError::Deadlock(_)) | Ok(_) => {}
            Err(e) => return Err(runtime(anyhow::anyhow!("point {}: {e}", r.point.index))),
        }
    }
    if let Some(&first) = deadlocked.first() {
        return Err(Failure::Deadlock(
            a.out.join(format!("point_{first}")).join("deadlock.txt"),
        ));
    }
    Ok(())
}

fn gen(a: &GenArgs) -> Result<(), Failure> {
    let mut scenario = load(&a.file)?;
    if let Some(seed) = a.seed {
        scenario.seed = seed;
    }
    let topo = scenario.build_topology().map_err(invalid)?;
    let schedule = scenario.schedule(topo.host_count()).map_err(invalid)?;
    let res: Result<()> = (|| {
        match &a.out {
            Some(path) => {
                let mut f = create(path).with_context(|| format!("creating {}", path.display()))?;
                schedule.write_csv(&mut f)?;
                f.flush()?;
            }
            None => schedule.write_csv(io::stdout().lock())?,
        }
        Ok(())
    })();
    res.map_err(Failure::Runtime)
}

fn topology(a: &TopologyArgs) -> Result<(), Failure> {
    // link parameters do not change the shape
    let geometry = LinkGeometry {
        bandwidth: Bandwidth::from_gbps(800),
        cable_length_m: 0.0,
        wire_delay_ns_per_m: 5.0,
        per_hop_latency: SimTime::from_ns(600),
        mtu_bytes: 9216,
    };
    let topo = Topology::build_fat_tree(a.tiers, a.radix, geometry).map_err(invalid)?;
    let hops = topo.max_switch_hops();
    let mut out = io::stdout().lock();
    let res: io::Result<()> = (|| {
        writeln!(
            out,
            "tiers,radix,hosts,switches,max_switches_crossed,max_links_traversed"
        )?;
        writeln!(
            out,
            "{},{},{},{},{},{}",
            a.tiers,
            a.radix,
            topo.host_count(),
            topo.switch_count(),
            hops,
            hops + 1
        )
    })();
    res.map_err(runtime)
}
