use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand, ValueEnum};

use dcnet_core::fec::{self, CodewordBasis, ErrorQuery, FecScheme, RetryLinkBudget};
use dcnet_core::headers::{self, HeaderStack};
use dcnet_core::link_budget::{self, FabricShape, LinkGeometry};
use dcnet_core::metrics::fmt_ns;
use dcnet_core::{Bandwidth, SimTime};

use crate::table::{Cell, Table};

#[derive(Debug, Subcommand)]
pub enum CalcCommand {
    /// Post-FEC frame loss along a path (symbol, codeword, frame and path error rates).
    Fec(FecArgs),
    /// Raw frame loss without FEC and the bandwidth go-back-n wastes on it.
    Gbn(GbnArgs),
    /// Time to accumulate one codeword plus the encode/decode cost.
    FecLatency(FecLatencyArgs),
    /// Coding and retry overhead of a block-protected link.
    Retry(RetryArgs),
    /// Link and fabric round-trip times.
    Rtt(RttArgs),
    /// Per-port lossless headroom, optionally aggregated per switch.
    Headroom(HeadroomArgs),
    /// Bandwidth-delay product.
    Bdp(BdpArgs),
    /// Header bytes, packet rate and wire efficiency.
    Headers(HeadersArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BasisArg {
    Wire,
    Data,
}

impl From<BasisArg> for CodewordBasis {
    fn from(b: BasisArg) -> Self {
        match b {
            BasisArg::Wire => CodewordBasis::Wire,
            BasisArg::Data => CodewordBasis::Data,
        }
    }
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("input").required(true).args(["ber", "ser", "cer"])))]
pub struct FecArgs {
    /// rs544, custom:n,k,m (m in bits per symbol), or none for a link without FEC
    #[arg(long, default_value = "rs544")]
    pub scheme: String,
    /// Input bit error rate, probability per bit (comma-separated list allowed)
    #[arg(long, value_delimiter = ',')]
    pub ber: Vec<f64>,
    /// Start the chain from a symbol error rate, probability per symbol
    #[arg(long, value_delimiter = ',')]
    pub ser: Vec<f64>,
    /// Start the chain from a codeword error rate, probability per codeword
    #[arg(long, value_delimiter = ',')]
    pub cer: Vec<f64>,
    /// Frame size in bytes
    #[arg(long, required_unless_present = "frame_bits", conflicts_with = "frame_bits")]
    pub frame_bytes: Option<u64>,
    /// Frame size in bits
    #[arg(long)]
    pub frame_bits: Option<u64>,
    /// Hops after the first link, a count (comma-separated list allowed)
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub hops: Vec<u32>,
    /// Codeword length in bits used to count codewords per frame: wire (n·m) or data (k·m)
    #[arg(long, value_enum, default_value = "wire")]
    pub basis: BasisArg,
}

#[derive(Debug, Args)]
pub struct GbnArgs {
    /// Bit error rate of the link, probability per bit
    #[arg(long, default_value_t = 1e-12)]
    pub ber: f64,
    /// Frame sizes in bytes
    #[arg(long, value_delimiter = ',', default_value = "4096,9216")]
    pub frame_bytes: Vec<u64>,
    /// Use this frame loss probability (per frame) instead of deriving it from --ber
    #[arg(long)]
    pub frame_loss_p: Option<f64>,
    /// Link bandwidth in Gb/s
    #[arg(long, default_value_t = 800.0)]
    pub bandwidth_gbps: f64,
    /// End-to-end round-trip time in nanoseconds
    #[arg(long, default_value_t = 3600.0)]
    pub rtt_ns: f64,
}

#[derive(Debug, Args)]
pub struct FecLatencyArgs {
    /// Data bits gathered per codeword, in bits
    #[arg(long, default_value_t = FecScheme::rs544().codeword_data_bits())]
    pub data_bits: u64,
    /// Link bandwidths in Gb/s
    #[arg(long, value_delimiter = ',', required = true)]
    pub bandwidth_gbps: Vec<f64>,
    /// Encode plus decode time in nanoseconds
    #[arg(long, value_delimiter = ',', default_value = "50")]
    pub compute_ns: Vec<f64>,
}

#[derive(Debug, Args)]
pub struct RetryArgs {
    /// Payload per protected block in bytes
    #[arg(long, default_value_t = 242)]
    pub block_payload_bytes: u64,
    /// FEC parity per block in bytes
    #[arg(long, default_value_t = 6)]
    pub fec_bytes: u64,
    /// CRC per block in bytes
    #[arg(long, default_value_t = 8)]
    pub crc_bytes: u64,
    /// Bit error rate left after FEC correction, probability per bit
    #[arg(long, default_value_t = 0.0)]
    pub post_fec_ber: f64,
    /// Probability per block that it fails its CRC and is resent
    #[arg(long)]
    pub retry_probability: f64,
    /// FEC latency in nanoseconds, reported alongside
    #[arg(long, default_value_t = 0.0)]
    pub fec_latency_ns: f64,
}

#[derive(Debug, Args)]
pub struct RttArgs {
    /// Arbitration, FEC and serialization cost per hop in nanoseconds
    #[arg(long, default_value_t = 600.0)]
    pub per_hop_ns: f64,
    /// Cable lengths in meters
    #[arg(long, value_delimiter = ',', default_value = "0")]
    pub cable_m: Vec<f64>,
    /// Propagation delay in nanoseconds per meter
    #[arg(long, default_value_t = 5.0)]
    pub wire_delay_ns_per_m: f64,
    /// Also report the fabric RTT across this many hops (a count)
    #[arg(long)]
    pub fabric_hops: Option<u32>,
}

/// Where a round-trip time comes from: given directly or derived from link geometry or hop count.
#[derive(Debug, Args)]
pub struct RttSource {
    /// Round-trip times in nanoseconds
    #[arg(long, value_delimiter = ',', conflicts_with_all = ["cable_m", "fabric_hops"])]
    pub rtt_ns: Vec<f64>,
    /// Derive the RTT of a single link from cable lengths in meters
    #[arg(long, value_delimiter = ',', conflicts_with = "fabric_hops")]
    pub cable_m: Vec<f64>,
    /// Derive a fabric RTT from the number of hops (a count)
    #[arg(long)]
    pub fabric_hops: Option<u32>,
    /// Per-hop latency in nanoseconds
    #[arg(long, default_value_t = 600.0)]
    pub per_hop_ns: f64,
    /// Propagation delay in nanoseconds per meter
    #[arg(long, default_value_t = 5.0)]
    pub wire_delay_ns_per_m: f64,
}

#[derive(Debug, Args)]
pub struct HeadroomArgs {
    /// Link bandwidths in Gb/s
    #[arg(long, value_delimiter = ',', required = true)]
    pub bandwidth_gbps: Vec<f64>,
    #[command(flatten)]
    pub rtt: RttSource,
    /// Largest frame in bytes
    #[arg(long, default_value_t = 9216)]
    pub mtu_bytes: u64,
    /// Ports per switch, a count; enables the per-switch columns
    #[arg(long, value_delimiter = ',', requires = "classes")]
    pub ports: Vec<u32>,
    /// Lossless priority classes per port, a count
    #[arg(long, value_delimiter = ',', requires = "ports")]
    pub classes: Vec<u32>,
}

#[derive(Debug, Args)]
pub struct BdpArgs {
    /// Link bandwidths in Gb/s
    #[arg(long, value_delimiter = ',', required = true)]
    pub bandwidth_gbps: Vec<f64>,
    /// Round-trip times in microseconds
    #[arg(long, value_delimiter = ',', conflicts_with = "fabric_hops")]
    pub rtt_us: Vec<f64>,
    /// Derive the RTT from a hop count instead (a count)
    #[arg(long)]
    pub fabric_hops: Option<u32>,
    /// Per-hop latency in nanoseconds
    #[arg(long, default_value_t = 600.0)]
    pub per_hop_ns: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ProfileArg {
    Rocev2,
    #[value(name = "ib_local")]
    IbLocal,
    /// Layers from --layers
    Custom,
    /// No header at all
    None,
}

#[derive(Debug, Args)]
pub struct HeadersArgs {
    /// Header stack: rocev2 (66 bytes), ib_local (20 bytes), custom or none
    #[arg(long, value_enum, default_value = "rocev2")]
    pub profile: ProfileArg,
    /// name:bytes pairs for the custom profile, sizes in bytes, e.g. eth:14,ipv6:40
    #[arg(long, required_if_eq("profile", "custom"))]
    pub layers: Option<String>,
    /// Payload sizes in bytes
    #[arg(long, value_delimiter = ',', required = true)]
    pub payload_bytes: Vec<u64>,
    /// Link bandwidth in Gb/s
    #[arg(long, default_value_t = 800.0)]
    pub bandwidth_gbps: f64,
    /// Count preamble and inter-packet gap (20 bytes) as header bytes
    #[arg(long)]
    pub phy_overhead: bool,
}

impl CalcCommand {
    pub fn run(&self) -> Result<Table> {
        match self {
            CalcCommand::Fec(a) => fec_table(a),
            CalcCommand::Gbn(a) => gbn_table(a),
            CalcCommand::FecLatency(a) => fec_latency_table(a),
            CalcCommand::Retry(a) => retry_table(a),
            CalcCommand::Rtt(a) => rtt_table(a),
            CalcCommand::Headroom(a) => headroom_table(a),
            CalcCommand::Bdp(a) => bdp_table(a),
            CalcCommand::Headers(a) => headers_table(a),
        }
    }
}

fn bandwidth(gbps: f64) -> Result<Bandwidth> {
    if !(gbps.is_finite() && gbps > 0.0) {
        bail!("--bandwidth-gbps must be positive, got {gbps}");
    }
    Ok(Bandwidth::from_gbps_f64(gbps))
}

fn nonneg(flag: &str, v: f64) -> Result<f64> {
    if !(v.is_finite() && v >= 0.0) {
        bail!("--{flag} must be a finite non-negative number, got {v}");
    }
    Ok(v)
}

#[derive(Clone, Copy)]
enum Input {
    Ber(f64),
    Ser(f64),
    Cer(f64),
}

fn fec_table(a: &FecArgs) -> Result<Table> {
    let scheme = match a.scheme.as_str() {
        "none" => None,
        s => Some(s.parse::<FecScheme>()?),
    };
    let frame_bits = match (a.frame_bytes, a.frame_bits) {
        (Some(b), _) => b.checked_mul(8).context("--frame-bytes is too large")?,
        (None, Some(b)) => b,
        (None, None) => unreachable!("clap requires one frame size"),
    };
    let mut t = Table::new(&[
        "scheme",
        "n",
        "k",
        "m",
        "t",
        "ber_in",
        "frame_bits",
        "hops",
        "ser_in",
        "cer",
        "fer",
        "loss_p",
    ]);
    let name = scheme.map_or_else(|| "none".to_string(), |s| s.to_string());
    let (n, k, m, tt) = match &scheme {
        Some(s) => (Some(s.n()), Some(s.k()), Some(s.m()), Some(s.correctable_symbols())),
        None => (None, None, None, None),
    };
    let inputs: Vec<Input> = if !a.ber.is_empty() {
        a.ber.iter().map(|&b| Input::Ber(b)).collect()
    } else if !a.ser.is_empty() {
        a.ser.iter().map(|&s| Input::Ser(s)).collect()
    } else {
        a.cer.iter().map(|&c| Input::Cer(c)).collect()
    };
    for &input in &inputs {
        let ber = match input {
            Input::Ber(b) => Some(b),
            _ => None,
        };
        for &hops in &a.hops {
            let chain = match input {
                Input::Ber(ber_in) => ErrorQuery {
                    ber_in,
                    frame_bits,
                    hops,
                    scheme,
                    basis: a.basis.into(),
                }
                .evaluate()?,
                Input::Ser(ser_in) => {
                    let Some(s) = &scheme else {
                        bail!("--ser needs an FEC scheme");
                    };
                    let cer = fec::codeword_error_rate(s, ser_in)?;
                    let fer = fec::frame_error_rate(cer, frame_bits, s.codeword_bits(a.basis.into()))?;
                    fec::LossChain {
                        ser_in,
                        cer: Some(cer),
                        fer,
                        loss_p: fec::frame_loss_probability(fer, hops)?,
                    }
                }
                Input::Cer(cer) => {
                    let Some(s) = &scheme else {
                        bail!("--cer needs an FEC scheme");
                    };
                    let fer = fec::frame_error_rate(cer, frame_bits, s.codeword_bits(a.basis.into()))?;
                    fec::LossChain {
                        ser_in: f64::NAN,
                        cer: Some(cer),
                        fer,
                        loss_p: fec::frame_loss_probability(fer, hops)?,
                    }
                }
            };
            t.push(vec![
                name.clone().into(),
                n.into(),
                k.into(),
                m.into(),
                tt.into(),
                ber.into(),
                frame_bits.into(),
                hops.into(),
                Some(chain.ser_in).filter(|s| !s.is_nan()).into(),
                chain.cer.into(),
                chain.fer.into(),
                chain.loss_p.into(),
            ]);
        }
    }
    Ok(t)
}

fn gbn_table(a: &GbnArgs) -> Result<Table> {
    if a.frame_bytes.is_empty() {
        bail!("--frame-bytes needs at least one size");
    }
    let bw = bandwidth(a.bandwidth_gbps)?;
    let rtt = SimTime::from_ns_f64(nonneg("rtt-ns", a.rtt_ns)?);
    let bdp_bits = bw.bps() as f64 * rtt.as_secs_f64();
    let mut t = Table::new(&[
        "frame_bits",
        "ber_in",
        "frame_loss_p",
        "bdp_bits",
        "waste_fraction",
        "note",
    ]);
    let loss_of = |bits: u64| -> Result<f64> {
        Ok(match a.frame_loss_p {
            Some(p) => p,
            None => fec::raw_frame_loss(a.ber, bits)?,
        })
    };
    let ber = a.frame_loss_p.is_none().then_some(a.ber);
    for &bytes in &a.frame_bytes {
        let bits = bytes * 8;
        let p = loss_of(bits)?;
        t.push(vec![
            bits.into(),
            ber.into(),
            p.into(),
            bdp_bits.into(),
            fec::goback_n_waste(p, bdp_bits, bits)?.into(),
            format!("{bytes} B frames").into(),
        ]);
    }
    // Loss probability of the smallest frame applied to the largest: mixing the two
    // understates the largest frame's loss by the ratio of their sizes.
    let small = *a.frame_bytes.iter().min().unwrap();
    let large = *a.frame_bytes.iter().max().unwrap();
    if a.frame_loss_p.is_none() && small != large {
        let p = loss_of(small * 8)?;
        t.push(vec![
            (large * 8).into(),
            ber.into(),
            p.into(),
            bdp_bits.into(),
            fec::goback_n_waste(p, bdp_bits, large * 8)?.into(),
            format!(
                "{large} B frames with the {small} B frame loss; own loss is {:.3e}",
                loss_of(large * 8)?
            )
            .into(),
        ]);
    }
    Ok(t)
}

fn fec_latency_table(a: &FecLatencyArgs) -> Result<Table> {
    let mut t = Table::new(&[
        "codeword_data_bits",
        "bandwidth_gbps",
        "compute_ns",
        "accumulation_ns",
        "total_ns",
    ]);
    for &gbps in &a.bandwidth_gbps {
        bandwidth(gbps)?;
        for &compute in &a.compute_ns {
            let l = fec::fec_latency(a.data_bits, gbps * 1e9, compute)?;
            t.push(vec![
                a.data_bits.into(),
                gbps.into(),
                compute.into(),
                l.accumulation_ns.into(),
                l.total_ns().into(),
            ]);
        }
    }
    Ok(t)
}

fn retry_table(a: &RetryArgs) -> Result<Table> {
    let budget = RetryLinkBudget {
        block_payload_bytes: a.block_payload_bytes,
        fec_bytes: a.fec_bytes,
        crc_bytes: a.crc_bytes,
        post_fec_ber: a.post_fec_ber,
        retry_probability: a.retry_probability,
        fec_latency_ns: a.fec_latency_ns,
    };
    let o = fec::link_retry_overhead(&budget)?;
    let mut t = Table::new(&[
        "block_payload_bytes",
        "fec_bytes",
        "crc_bytes",
        "retry_probability",
        "coding_overhead",
        "retry_bandwidth_loss",
    ]);
    t.push(vec![
        a.block_payload_bytes.into(),
        a.fec_bytes.into(),
        a.crc_bytes.into(),
        a.retry_probability.into(),
        o.coding_overhead.into(),
        o.retry_bandwidth_loss.into(),
    ]);
    Ok(t)
}

fn geometry(cable_m: f64, wire_delay: f64, per_hop_ns: f64) -> Result<LinkGeometry> {
    let g = LinkGeometry {
        bandwidth: Bandwidth::from_gbps(1),
        cable_length_m: cable_m,
        wire_delay_ns_per_m: wire_delay,
        per_hop_latency: SimTime::from_ns_f64(nonneg("per-hop-ns", per_hop_ns)?),
        mtu_bytes: 0,
    };
    g.validate()?;
    Ok(g)
}

fn fabric(hops: u32, per_hop_ns: f64) -> Result<SimTime> {
    if hops == 0 {
        bail!("--fabric-hops must be at least 1");
    }
    Ok(link_budget::fabric_rtt(
        hops,
        SimTime::from_ns_f64(nonneg("per-hop-ns", per_hop_ns)?),
    ))
}

fn rtt_table(a: &RttArgs) -> Result<Table> {
    let mut t = Table::new(&[
        "cable_m",
        "wire_delay_ns_per_m",
        "per_hop_ns",
        "link_rtt_ns",
        "fabric_hops",
        "fabric_rtt_ns",
    ]);
    let fabric_rtt = a.fabric_hops.map(|h| fabric(h, a.per_hop_ns)).transpose()?;
    for &cable in &a.cable_m {
        let rtt = link_budget::link_rtt(&geometry(cable, a.wire_delay_ns_per_m, a.per_hop_ns)?);
        t.push(vec![
            cable.into(),
            a.wire_delay_ns_per_m.into(),
            a.per_hop_ns.into(),
            fmt_ns(rtt).into(),
            a.fabric_hops.into(),
            fabric_rtt.map(fmt_ns).into(),
        ]);
    }
    Ok(t)
}

impl RttSource {
    fn resolve(&self) -> Result<Vec<SimTime>> {
        if let Some(h) = self.fabric_hops {
            return Ok(vec![fabric(h, self.per_hop_ns)?]);
        }
        if !self.cable_m.is_empty() {
            return self
                .cable_m
                .iter()
                .map(|&c| {
                    Ok(link_budget::link_rtt(&geometry(
                        c,
                        self.wire_delay_ns_per_m,
                        self.per_hop_ns,
                    )?))
                })
                .collect();
        }
        if !self.rtt_ns.is_empty() {
            return self
                .rtt_ns
                .iter()
                .map(|&r| Ok(SimTime::from_ns_f64(nonneg("rtt-ns", r)?)))
                .collect();
        }
        // a single link with no cable
        Ok(vec![link_budget::link_rtt(&geometry(
            0.0,
            self.wire_delay_ns_per_m,
            self.per_hop_ns,
        )?)])
    }
}

fn headroom_table(a: &HeadroomArgs) -> Result<Table> {
    let rtts = a.rtt.resolve()?;
    let per_switch = !a.ports.is_empty();
    let mut header = vec!["bandwidth_gbps", "rtt_ns", "mtu_bytes", "headroom_bytes"];
    if per_switch {
        header.extend(["ports", "classes", "switch_headroom_bytes"]);
    }
    let mut t = Table::new(&header);
    for &gbps in &a.bandwidth_gbps {
        let bw = bandwidth(gbps)?;
        for &rtt in &rtts {
            let per_port = link_budget::headroom_per_port(bw, rtt, a.mtu_bytes);
            let base: Vec<Cell> = vec![gbps.into(), fmt_ns(rtt).into(), a.mtu_bytes.into(), per_port.into()];
            if !per_switch {
                t.push(base);
                continue;
            }
            for &ports in &a.ports {
                for &classes in &a.classes {
                    let shape = FabricShape::new(ports, classes, 1, 1)?;
                    let mut row = base.clone();
                    row.extend([
                        ports.into(),
                        classes.into(),
                        link_budget::switch_headroom(per_port, &shape).into(),
                    ]);
                    t.push(row);
                }
            }
        }
    }
    Ok(t)
}

fn bdp_table(a: &BdpArgs) -> Result<Table> {
    let rtts: Vec<SimTime> = match a.fabric_hops {
        Some(h) => vec![fabric(h, a.per_hop_ns)?],
        None if a.rtt_us.is_empty() => bail!("give --rtt-us or --fabric-hops"),
        None => a
            .rtt_us
            .iter()
            .map(|&r| Ok(SimTime::from_us_f64(nonneg("rtt-us", r)?)))
            .collect::<Result<_>>()?,
    };
    let mut t = Table::new(&["bandwidth_gbps", "rtt_ns", "bdp_bytes"]);
    for &gbps in &a.bandwidth_gbps {
        let bw = bandwidth(gbps)?;
        for &rtt in &rtts {
            t.push(vec![gbps.into(), fmt_ns(rtt).into(), link_budget::bdp(bw, rtt).into()]);
        }
    }
    Ok(t)
}

fn headers_table(a: &HeadersArgs) -> Result<Table> {
    let mut stack = match a.profile {
        ProfileArg::Rocev2 => HeaderStack::rocev2(),
        ProfileArg::IbLocal => HeaderStack::ib_local(),
        ProfileArg::Custom => HeaderStack::parse_layers(a.layers.as_deref().unwrap_or_default())?,
        ProfileArg::None => HeaderStack::default(),
    };
    if a.layers.is_some() && !matches!(a.profile, ProfileArg::Custom) {
        bail!("--layers only applies to --profile custom");
    }
    if a.phy_overhead {
        stack = stack.with_phy_overhead();
    }
    let name = a.profile.to_possible_value().unwrap().get_name().to_string();
    let header = headers::header_bytes(&stack);
    let bps = bandwidth(a.bandwidth_gbps)?.bps() as f64;
    let mut t = Table::new(&["profile", "payload_bytes", "header_bytes", "rate_pps", "efficiency"]);
    for &payload in &a.payload_bytes {
        t.push(vec![
            name.clone().into(),
            payload.into(),
            header.into(),
            headers::packet_rate(bps, payload, header)?.into(),
            headers::wire_efficiency(payload, header)?.into(),
        ]);
    }
    Ok(t)
}
