//! Packet logs to segmented flows to fixed-length model inputs.
//!
//! Ingestion starts from a packet-log CSV (`ts,src,dst,sport,dport,proto,len,fin`).
//! Flows are keyed by an order-normalised 5-tuple so both directions of a
//! conversation land in the same flow. TCP flows close on the first FIN
//! (inclusive); UDP flows close when the gap to the next packet on the same
//! key exceeds the inactivity timeout.

use std::collections::HashMap;
use std::fmt;
use std::io::{BufRead, Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Floor applied to flow durations so single-packet flows keep a finite bandwidth.
pub const DURATION_EPSILON: f64 = 1e-3;
/// Default UDP inactivity timeout in seconds.
pub const DEFAULT_UDP_TIMEOUT: f64 = 15.0;
/// Normalisation ceiling for packet lengths, in bytes.
pub const DEFAULT_MAX_LEN: f64 = 1434.0;
/// Normalisation ceiling for inter-arrival times, in seconds.
pub const DEFAULT_MAX_IAT: f64 = 1.0;

pub const PACKET_CSV_HEADER: [&str; 8] = ["ts", "src", "dst", "sport", "dport", "proto", "len", "fin"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Protocol {
    Tcp,
    Udp,
}

impl fmt::Display for Protocol {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Protocol::Tcp => "tcp",
            Protocol::Udp => "udp",
        })
    }
}

impl FromStr for Protocol {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "tcp" | "6" => Ok(Protocol::Tcp),
            "udp" | "17" => Ok(Protocol::Udp),
            other => Err(format!("unsupported protocol '{other}'")),
        }
    }
}

/// One observed packet.
#[derive(Debug, Clone, PartialEq)]
pub struct PacketRecord {
    pub timestamp: f64,
    pub src_addr: String,
    pub dst_addr: String,
    pub src_port: u16,
    pub dst_port: u16,
    pub protocol: Protocol,
    pub length: u16,
    pub tcp_fin: bool,
}

/// Canonical 5-tuple: endpoint `a` is the lexicographically smaller of the two.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FlowKey {
    pub a_addr: String,
    pub a_port: u16,
    pub b_addr: String,
    pub b_port: u16,
    pub protocol: Protocol,
}

impl FlowKey {
    pub fn new(src: &str, sport: u16, dst: &str, dport: u16, protocol: Protocol) -> Self {
        let (a, b) = if (src, sport) <= (dst, dport) {
            ((src, sport), (dst, dport))
        } else {
            ((dst, dport), (src, sport))
        };
        FlowKey {
            a_addr: a.0.to_owned(),
            a_port: a.1,
            b_addr: b.0.to_owned(),
            b_port: b.1,
            protocol,
        }
    }

    pub fn of(packet: &PacketRecord) -> Self {
        Self::new(
            &packet.src_addr,
            packet.src_port,
            &packet.dst_addr,
            packet.dst_port,
            packet.protocol,
        )
    }
}

/// A packet inside a flow: time since the flow's first packet and a length
/// whose sign carries direction (positive = same sender as the first packet).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowPacket {
    pub relative_time: f64,
    pub signed_length: i32,
}

/// A segmented flow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "FlowRecord", into = "FlowRecord")]
pub struct FlowSample {
    pub flow_id: u64,
    pub key: FlowKey,
    /// Sender of the first packet; defines the forward direction.
    pub initiator: (String, u16),
    pub packets: Vec<FlowPacket>,
    pub first_packet_time: f64,
    pub last_packet_time: f64,
    pub total_bytes: u64,
    pub duration: f64,
    pub bandwidth: f64,
    pub traffic_label: Option<u32>,
}

impl FlowSample {
    /// Builds a flow from `(absolute timestamp, signed length)` pairs already in
    /// arrival order. The first entry must be positive (forward).
    pub fn from_observations(
        flow_id: u64,
        key: FlowKey,
        initiator: (String, u16),
        observations: &[(f64, i32)],
    ) -> Result<Self> {
        let (&(first, _), &(last, _)) = observations.first().zip(observations.last()).ok_or(Error::EmptyFlow)?;
        let packets: Vec<FlowPacket> = observations
            .iter()
            .map(|&(ts, len)| FlowPacket {
                relative_time: ts - first,
                signed_length: len,
            })
            .collect();
        let total_bytes = packets.iter().map(|p| p.signed_length.unsigned_abs() as u64).sum();
        let mut flow = FlowSample {
            flow_id,
            key,
            initiator,
            packets,
            first_packet_time: first,
            last_packet_time: last,
            total_bytes,
            duration: 0.0,
            bandwidth: 0.0,
            traffic_label: None,
        };
        let (bandwidth, duration) = compute_bandwidth_duration(&flow)?;
        flow.bandwidth = bandwidth;
        flow.duration = duration;
        Ok(flow)
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    /// Reconstructs packet records for this flow (absolute timestamps are
    /// `first_packet_time + relative_time`).
    pub fn to_packet_records(&self) -> Vec<PacketRecord> {
        let (init_addr, init_port) = &self.initiator;
        let (resp_addr, resp_port) = if (&self.key.a_addr, self.key.a_port) == (init_addr, *init_port) {
            (&self.key.b_addr, self.key.b_port)
        } else {
            (&self.key.a_addr, self.key.a_port)
        };
        self.packets
            .iter()
            .map(|p| {
                let forward = p.signed_length >= 0;
                let (src, sport, dst, dport) = if forward {
                    (init_addr, *init_port, resp_addr, resp_port)
                } else {
                    (resp_addr, resp_port, init_addr, *init_port)
                };
                PacketRecord {
                    timestamp: self.first_packet_time + p.relative_time,
                    src_addr: src.clone(),
                    dst_addr: dst.clone(),
                    src_port: sport,
                    dst_port: dport,
                    protocol: self.key.protocol,
                    length: p.signed_length.unsigned_abs() as u16,
                    tcp_fin: false,
                }
            })
            .collect()
    }
}

/// Bandwidth (kbps) and duration (s) of a flow. Duration is floored at
/// [`DURATION_EPSILON`].
pub fn compute_bandwidth_duration(flow: &FlowSample) -> Result<(f64, f64)> {
    if flow.packets.is_empty() {
        return Err(Error::EmptyFlow);
    }
    let (lo, hi) = flow
        .packets
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
            (lo.min(p.relative_time), hi.max(p.relative_time))
        });
    let duration = (hi - lo).max(DURATION_EPSILON);
    let bandwidth = (flow.total_bytes as f64 * 8.0 / 1000.0) / duration;
    Ok((bandwidth, duration))
}

/// Splits a packet log into flows.
///
/// Packets are stably sorted by timestamp first, so ties keep input order.
/// Output flows are ordered by the arrival of their first packet and numbered
/// from zero in that order.
pub fn segment_flows(packets: &[PacketRecord], udp_timeout: f64) -> Result<Vec<FlowSample>> {
    if !(udp_timeout > 0.0) {
        return Err(Error::Config(format!(
            "udp timeout must be positive, got {udp_timeout}"
        )));
    }
    let mut order: Vec<usize> = (0..packets.len()).collect();
    order.sort_by(|&a, &b| packets[a].timestamp.total_cmp(&packets[b].timestamp));

    struct Open {
        seq: usize,
        initiator: (String, u16),
        last_ts: f64,
        obs: Vec<(f64, i32)>,
    }

    let mut open: HashMap<FlowKey, Open> = HashMap::new();
    let mut closed: Vec<(usize, FlowKey, Open)> = Vec::new();
    let mut next_seq = 0usize;

    for idx in order {
        let p = &packets[idx];
        let key = FlowKey::of(p);
        if p.protocol == Protocol::Udp {
            if let Some(current) = open.get(&key) {
                if p.timestamp - current.last_ts > udp_timeout {
                    let finished = open.remove(&key).expect("present");
                    closed.push((finished.seq, key.clone(), finished));
                }
            }
        }
        let flow = open.entry(key.clone()).or_insert_with(|| {
            next_seq += 1;
            Open {
                seq: next_seq - 1,
                initiator: (p.src_addr.clone(), p.src_port),
                last_ts: p.timestamp,
                obs: Vec::new(),
            }
        });
        let forward = (p.src_addr.as_str(), p.src_port) == (flow.initiator.0.as_str(), flow.initiator.1);
        let len = i32::from(p.length);
        flow.obs.push((p.timestamp, if forward { len } else { -len }));
        flow.last_ts = p.timestamp;
        if p.protocol == Protocol::Tcp && p.tcp_fin {
            let finished = open.remove(&key).expect("present");
            closed.push((finished.seq, key, finished));
        }
    }
    closed.extend(open.into_iter().map(|(k, o)| (o.seq, k, o)));
    closed.sort_by_key(|(seq, _, _)| *seq);

    closed
        .into_iter()
        .map(|(seq, key, o)| FlowSample::from_observations(seq as u64, key, o.initiator, &o.obs))
        .collect()
}

/// Drops flows with fewer than `min_packets` packets and renumbers the rest.
pub fn filter_min_packets(flows: Vec<FlowSample>, min_packets: usize) -> Vec<FlowSample> {
    flows
        .into_iter()
        .filter(|f| f.len() >= min_packets)
        .enumerate()
        .map(|(i, mut f)| {
            f.flow_id = i as u64;
            f
        })
        .collect()
}

/// Normalisation settings for [`extract_features`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub k: usize,
    pub max_len: f64,
    pub max_iat: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig {
            k: 60,
            max_len: DEFAULT_MAX_LEN,
            max_iat: DEFAULT_MAX_IAT,
        }
    }
}

/// The k×2 model input: clipped and normalised inter-arrival times and
/// signed lengths of the first k packets, zero padded past `valid_len`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub k: usize,
    pub channel_iat: Vec<f64>,
    pub channel_len: Vec<f64>,
    pub valid_len: usize,
}

impl FeatureMatrix {
    /// Row-major `(k, 2)` layout used by the network: `[iat0, len0, iat1, len1, ...]`.
    pub fn to_input(&self) -> Vec<f64> {
        self.channel_iat
            .iter()
            .zip(&self.channel_len)
            .flat_map(|(&t, &l)| [t, l])
            .collect()
    }
}

pub fn extract_features(flow: &FlowSample, config: &FeatureConfig) -> Result<FeatureMatrix> {
    let FeatureConfig { k, max_len, max_iat } = *config;
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    if !(max_len > 0.0) || !(max_iat > 0.0) {
        return Err(Error::Config("normalisation maxima must be positive".into()));
    }
    if flow.packets.is_empty() {
        return Err(Error::EmptyFlow);
    }
    let valid_len = flow.packets.len().min(k);
    let mut channel_iat = vec![0.0; k];
    let mut channel_len = vec![0.0; k];
    let mut prev = flow.packets[0].relative_time;
    for (i, p) in flow.packets.iter().take(valid_len).enumerate() {
        // non-finite or negative gaps clip to the nearest bound
        let gap = (p.relative_time - prev).max(0.0);
        prev = p.relative_time;
        channel_iat[i] = if i == 0 { 0.0 } else { gap.min(max_iat) / max_iat };
        let magnitude = f64::from(p.signed_length.unsigned_abs()).min(max_len) / max_len;
        channel_len[i] = if p.signed_length < 0 { -magnitude } else { magnitude };
    }
    Ok(FeatureMatrix {
        k,
        channel_iat,
        channel_len,
        valid_len,
    })
}

/// A packet-log row that was skipped during ingestion.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub line: u64,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Reads a packet-log CSV. Rows with an unsupported protocol are skipped and
/// reported; any other malformed row is a hard error.
pub fn read_packet_csv<R: Read>(reader: R) -> Result<(Vec<PacketRecord>, Vec<Diagnostic>)> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::data("packet csv header", e.to_string()))?
        .clone();
    if header.iter().collect::<Vec<_>>() != PACKET_CSV_HEADER {
        return Err(Error::data(
            "packet csv header",
            format!(
                "expected '{}', found '{}'",
                PACKET_CSV_HEADER.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }
    let mut packets = Vec::new();
    let mut diagnostics = Vec::new();
    for row in rdr.records() {
        let row = row.map_err(|e| Error::data("packet csv", e.to_string()))?;
        let line = row.position().map_or(0, |p| p.line());
        let ctx = || format!("packet csv line {line}");
        let protocol = match row[5].parse::<Protocol>() {
            Ok(p) => p,
            Err(message) => {
                diagnostics.push(Diagnostic { line, message });
                continue;
            }
        };
        let timestamp: f64 = row[0]
            .parse()
            .map_err(|_| Error::data(ctx(), format!("bad timestamp '{}'", &row[0])))?;
        if !timestamp.is_finite() || timestamp < 0.0 {
            return Err(Error::data(
                ctx(),
                format!("timestamp must be finite and non-negative, got {timestamp}"),
            ));
        }
        let port = |s: &str| {
            s.parse::<u16>()
                .map_err(|_| Error::data(ctx(), format!("bad port '{s}'")))
        };
        let length = row[6]
            .parse::<u16>()
            .map_err(|_| Error::data(ctx(), format!("bad length '{}' (0..=65535)", &row[6])))?;
        let tcp_fin = match &row[7] {
            "0" => false,
            "1" => true,
            other => return Err(Error::data(ctx(), format!("bad fin flag '{other}'"))),
        };
        packets.push(PacketRecord {
            timestamp,
            src_addr: row[1].to_owned(),
            dst_addr: row[2].to_owned(),
            src_port: port(&row[3])?,
            dst_port: port(&row[4])?,
            protocol,
            length,
            tcp_fin: tcp_fin && protocol == Protocol::Tcp,
        });
    }
    Ok((packets, diagnostics))
}

pub fn write_packet_csv<W: Write>(writer: W, packets: &[PacketRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| Error::data("packet csv output", e.to_string());
    wtr.write_record(PACKET_CSV_HEADER).map_err(err)?;
    for p in packets {
        wtr.write_record([
            p.timestamp.to_string(),
            p.src_addr.clone(),
            p.dst_addr.clone(),
            p.src_port.to_string(),
            p.dst_port.to_string(),
            p.protocol.to_string(),
            p.length.to_string(),
            if p.tcp_fin { "1".into() } else { "0".into() },
        ])
        .map_err(err)?;
    }
    wtr.flush().map_err(|e| Error::io("packet csv output", e))
}

/// Reads a `src,dst,sport,dport,proto,label` sidecar assigning traffic classes
/// to flow keys.
pub fn read_label_map<R: Read>(reader: R) -> Result<HashMap<FlowKey, u32>> {
    #[derive(Deserialize)]
    struct Row {
        src: String,
        dst: String,
        sport: u16,
        dport: u16,
        proto: String,
        label: u32,
    }
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let mut map = HashMap::new();
    for row in rdr.deserialize::<Row>() {
        let row = row.map_err(|e| Error::data("label csv", e.to_string()))?;
        let protocol = row.proto.parse::<Protocol>().map_err(|m| Error::data("label csv", m))?;
        map.insert(
            FlowKey::new(&row.src, row.sport, &row.dst, row.dport, protocol),
            row.label,
        );
    }
    Ok(map)
}

pub fn write_label_map<W: Write>(writer: W, labels: &[(FlowKey, u32)]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let err = |e: csv::Error| Error::data("label csv output", e.to_string());
    wtr.write_record(["src", "dst", "sport", "dport", "proto", "label"])
        .map_err(err)?;
    for (key, label) in labels {
        wtr.write_record([
            key.a_addr.clone(),
            key.b_addr.clone(),
            key.a_port.to_string(),
            key.b_port.to_string(),
            key.protocol.to_string(),
            label.to_string(),
        ])
        .map_err(err)?;
    }
    wtr.flush().map_err(|e| Error::io("label csv output", e))
}

/// Attaches traffic labels by flow key. Returns how many flows were labelled.
pub fn apply_label_map(flows: &mut [FlowSample], labels: &HashMap<FlowKey, u32>) -> usize {
    let mut hits = 0;
    for flow in flows.iter_mut() {
        flow.traffic_label = labels.get(&flow.key).copied();
        hits += usize::from(flow.traffic_label.is_some());
    }
    hits
}

/// Wire form of a flow: packets as parallel arrays.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct FlowRecord {
    flow_id: u64,
    key: FlowKey,
    initiator_addr: String,
    initiator_port: u16,
    relative_times: Vec<f64>,
    signed_lengths: Vec<i32>,
    first_packet_time: f64,
    last_packet_time: f64,
    total_bytes: u64,
    duration: f64,
    bandwidth: f64,
    traffic_label: Option<u32>,
}

impl From<FlowSample> for FlowRecord {
    fn from(f: FlowSample) -> Self {
        let (relative_times, signed_lengths) = f.packets.iter().map(|p| (p.relative_time, p.signed_length)).unzip();
        FlowRecord {
            flow_id: f.flow_id,
            key: f.key,
            initiator_addr: f.initiator.0,
            initiator_port: f.initiator.1,
            relative_times,
            signed_lengths,
            first_packet_time: f.first_packet_time,
            last_packet_time: f.last_packet_time,
            total_bytes: f.total_bytes,
            duration: f.duration,
            bandwidth: f.bandwidth,
            traffic_label: f.traffic_label,
        }
    }
}

impl TryFrom<FlowRecord> for FlowSample {
    type Error = String;

    fn try_from(r: FlowRecord) -> std::result::Result<Self, Self::Error> {
        if r.relative_times.len() != r.signed_lengths.len() {
            return Err(format!(
                "flow {}: {} times but {} lengths",
                r.flow_id,
                r.relative_times.len(),
                r.signed_lengths.len()
            ));
        }
        if r.relative_times.is_empty() {
            return Err(format!("flow {} has no packets", r.flow_id));
        }
        if r.relative_times.windows(2).any(|w| !(w[1] >= w[0])) {
            return Err(format!("flow {}: relative times must be non-decreasing", r.flow_id));
        }
        Ok(FlowSample {
            flow_id: r.flow_id,
            key: r.key,
            initiator: (r.initiator_addr, r.initiator_port),
            packets: r
                .relative_times
                .into_iter()
                .zip(r.signed_lengths)
                .map(|(relative_time, signed_length)| FlowPacket {
                    relative_time,
                    signed_length,
                })
                .collect(),
            first_packet_time: r.first_packet_time,
            last_packet_time: r.last_packet_time,
            total_bytes: r.total_bytes,
            duration: r.duration,
            bandwidth: r.bandwidth,
            traffic_label: r.traffic_label,
        })
    }
}

pub fn write_flows_jsonl<W: Write>(mut writer: W, flows: &[FlowSample]) -> Result<()> {
    for flow in flows {
        let line = serde_json::to_string(flow).map_err(|e| Error::data("flow jsonl output", e.to_string()))?;
        writeln!(writer, "{line}").map_err(|e| Error::io("flow jsonl output", e))?;
    }
    writer.flush().map_err(|e| Error::io("flow jsonl output", e))
}

pub fn read_flows_jsonl<R: BufRead>(reader: R) -> Result<Vec<FlowSample>> {
    let mut flows = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("flow jsonl", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let flow: FlowSample = serde_json::from_str(&line)
            .map_err(|e| Error::data(format!("flow jsonl line {}", i + 1), e.to_string()))?;
        flows.push(flow);
    }
    Ok(flows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pkt(ts: f64, src: &str, dst: &str, proto: Protocol, len: u16, fin: bool) -> PacketRecord {
        PacketRecord {
            timestamp: ts,
            src_addr: src.into(),
            dst_addr: dst.into(),
            src_port: port_of(src),
            dst_port: port_of(dst),
            protocol: proto,
            length: len,
            tcp_fin: fin,
        }
    }

    fn port_of(addr: &str) -> u16 {
        1000 + u16::from(addr.as_bytes()[0])
    }

    fn times(flow: &FlowSample) -> Vec<f64> {
        flow.packets
            .iter()
            .map(|p| flow.first_packet_time + p.relative_time)
            .collect()
    }

    #[test]
    fn udp_gap_splits_flow() {
        let packets: Vec<_> = [0.0, 5.0, 30.0]
            .iter()
            .map(|&t| pkt(t, "a", "b", Protocol::Udp, 100, false))
            .collect();
        let flows = segment_flows(&packets, 15.0).unwrap();
        assert_eq!(flows.len(), 2);
        assert_eq!(times(&flows[0]), vec![0.0, 5.0]);
        assert_eq!(times(&flows[1]), vec![30.0]);
    }

    #[test]
    fn fin_terminates_inclusively() {
        let packets = vec![
            pkt(0.0, "a", "b", Protocol::Tcp, 100, false),
            pkt(1.0, "b", "a", Protocol::Tcp, 100, true),
            pkt(2.0, "a", "b", Protocol::Tcp, 100, false),
        ];
        let flows = segment_flows(&packets, 15.0).unwrap();
        assert_eq!(flows.len(), 2);
        assert_eq!(times(&flows[0]), vec![0.0, 1.0]);
        assert_eq!(times(&flows[1]), vec![2.0]);
        assert_eq!(flows[0].packets[1].signed_length, -100);
    }

    #[test]
    fn first_sender_is_forward() {
        let packets = vec![
            pkt(0.0, "z", "a", Protocol::Udp, 10, false),
            pkt(0.5, "a", "z", Protocol::Udp, 20, false),
        ];
        let flows = segment_flows(&packets, 15.0).unwrap();
        assert_eq!(flows[0].packets[0].signed_length, 10);
        assert_eq!(flows[0].packets[1].signed_length, -20);
        assert_eq!(flows[0].initiator.0, "z");
    }

    #[test]
    fn empty_input_gives_no_flows() {
        assert!(segment_flows(&[], 15.0).unwrap().is_empty());
        assert!(segment_flows(&[], 0.0).is_err());
    }

    #[test]
    fn unsorted_input_is_sorted_stably() {
        let packets = vec![
            pkt(2.0, "a", "b", Protocol::Udp, 3, false),
            pkt(1.0, "a", "b", Protocol::Udp, 1, false),
            pkt(1.0, "a", "b", Protocol::Udp, 2, false),
        ];
        let flows = segment_flows(&packets, 15.0).unwrap();
        let lens: Vec<i32> = flows[0].packets.iter().map(|p| p.signed_length).collect();
        assert_eq!(lens, vec![1, 2, 3]);
    }

    #[test]
    fn bandwidth_and_duration() {
        let packets = vec![
            pkt(0.0, "a", "b", Protocol::Udp, 500, false),
            pkt(1.0, "b", "a", Protocol::Udp, 500, false),
        ];
        let flow = &segment_flows(&packets, 15.0).unwrap()[0];
        assert_eq!(compute_bandwidth_duration(flow).unwrap(), (8.0, 1.0));
        assert_eq!((flow.bandwidth, flow.duration), (8.0, 1.0));
    }

    #[test]
    fn single_packet_flow_uses_epsilon() {
        let flow = &segment_flows(&[pkt(3.0, "a", "b", Protocol::Udp, 1000, false)], 15.0).unwrap()[0];
        assert_eq!(flow.duration, DURATION_EPSILON);
        assert!(flow.bandwidth.is_finite());
        assert_eq!(flow.bandwidth, 8.0 / DURATION_EPSILON);
    }

    #[test]
    fn features_clip_and_sign() {
        let flow = FlowSample::from_observations(
            0,
            FlowKey::new("a", 1, "b", 2, Protocol::Tcp),
            ("a".into(), 1),
            &[(0.0, 1434), (2.0, -717)],
        )
        .unwrap();
        let fm = extract_features(
            &flow,
            &FeatureConfig {
                k: 4,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(fm.channel_len[0], 1.0);
        assert_eq!(fm.channel_iat[0], 0.0);
        assert_eq!((fm.channel_iat[1], fm.channel_len[1]), (1.0, -0.5));
        assert_eq!(fm.valid_len, 2);
        assert_eq!(&fm.channel_iat[2..], &[0.0, 0.0]);
        assert_eq!(&fm.channel_len[2..], &[0.0, 0.0]);
        assert_eq!(fm.to_input()[..4], [0.0, 1.0, 1.0, -0.5]);
    }

    #[test]
    fn empty_flow_has_no_features() {
        let mut flow = FlowSample::from_observations(
            0,
            FlowKey::new("a", 1, "b", 2, Protocol::Tcp),
            ("a".into(), 1),
            &[(0.0, 10)],
        )
        .unwrap();
        flow.packets.clear();
        assert!(matches!(
            extract_features(&flow, &FeatureConfig::default()),
            Err(Error::EmptyFlow)
        ));
        assert!(compute_bandwidth_duration(&flow).is_err());
    }

    #[test]
    fn csv_skips_unknown_protocol() {
        let text = "ts,src,dst,sport,dport,proto,len,fin\n\
                    0.0,a,b,1,2,tcp,100,0\n\
                    0.5,a,b,1,2,icmp,64,0\n\
                    1.0,b,a,2,1,udp,80,0\n";
        let (packets, diags) = read_packet_csv(text.as_bytes()).unwrap();
        assert_eq!(packets.len(), 2);
        assert_eq!(diags.len(), 1);
        assert_eq!(diags[0].line, 3);
    }

    #[test]
    fn csv_rejects_bad_schema() {
        assert!(read_packet_csv("time,src\n1,a\n".as_bytes()).is_err());
        let huge = "ts,src,dst,sport,dport,proto,len,fin\n0.0,a,b,1,2,tcp,70000,0\n";
        assert!(matches!(
            read_packet_csv(huge.as_bytes()),
            Err(Error::DataFormat { .. })
        ));
        let neg = "ts,src,dst,sport,dport,proto,len,fin\n-1.0,a,b,1,2,tcp,7,0\n";
        assert!(read_packet_csv(neg.as_bytes()).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let packets = vec![
            pkt(0.125, "10.0.0.1", "10.0.0.2", Protocol::Tcp, 60, false),
            pkt(0.3, "10.0.0.2", "10.0.0.1", Protocol::Tcp, 1400, true),
        ];
        let mut buf = Vec::new();
        write_packet_csv(&mut buf, &packets).unwrap();
        let (back, diags) = read_packet_csv(buf.as_slice()).unwrap();
        assert!(diags.is_empty());
        assert_eq!(back, packets);
    }

    #[test]
    fn jsonl_round_trip_is_exact() {
        let packets = vec![
            pkt(0.1, "a", "b", Protocol::Udp, 60, false),
            pkt(0.7, "b", "a", Protocol::Udp, 1300, false),
        ];
        let mut flows = segment_flows(&packets, 15.0).unwrap();
        flows[0].traffic_label = Some(3);
        let mut buf = Vec::new();
        write_flows_jsonl(&mut buf, &flows).unwrap();
        let back = read_flows_jsonl(buf.as_slice()).unwrap();
        assert_eq!(back, flows);
    }

    #[test]
    fn label_map_applies_by_key() {
        let packets = vec![pkt(0.0, "a", "b", Protocol::Udp, 60, false)];
        let mut flows = segment_flows(&packets, 15.0).unwrap();
        let mut buf = Vec::new();
        write_label_map(
            &mut buf,
            &[(FlowKey::new("b", port_of("b"), "a", port_of("a"), Protocol::Udp), 4)],
        )
        .unwrap();
        let map = read_label_map(buf.as_slice()).unwrap();
        assert_eq!(apply_label_map(&mut flows, &map), 1);
        assert_eq!(flows[0].traffic_label, Some(4));
    }

    #[test]
    fn min_packet_filter_renumbers() {
        let mut packets = vec![pkt(0.0, "a", "b", Protocol::Tcp, 1, true)];
        for i in 0..3 {
            packets.push(pkt(1.0 + i as f64, "c", "d", Protocol::Tcp, 1, false));
        }
        let flows = filter_min_packets(segment_flows(&packets, 15.0).unwrap(), 2);
        assert_eq!(flows.len(), 1);
        assert_eq!(flows[0].flow_id, 0);
        assert_eq!(flows[0].len(), 3);
    }
}
