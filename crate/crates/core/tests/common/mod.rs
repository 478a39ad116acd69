#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use trafficmtl::flow::{FlowKey, FlowSample, PacketRecord, Protocol};

/// A flow as `(key, relative times, signed lengths)`.
pub type FlowShape = (FlowKey, Vec<f64>, Vec<i32>);

/// Per-key splitter written without any shared state between keys: group,
/// stable-sort each group, then cut on FIN or on a UDP gap above the timeout.
/// Flows come back ordered by the global arrival position of their first packet.
pub fn brute_force_segment(packets: &[PacketRecord], udp_timeout: f64) -> Vec<FlowShape> {
    let mut groups: BTreeMap<FlowKey, Vec<usize>> = BTreeMap::new();
    for (i, p) in packets.iter().enumerate() {
        groups.entry(FlowKey::of(p)).or_default().push(i);
    }
    let mut flows: Vec<((f64, usize), FlowShape)> = Vec::new();
    for (key, mut idx) in groups {
        idx.sort_by(|&a, &b| packets[a].timestamp.total_cmp(&packets[b].timestamp).then(a.cmp(&b)));
        let mut current: Vec<usize> = Vec::new();
        let mut finish = |current: &mut Vec<usize>| {
            if current.is_empty() {
                return;
            }
            let first = &packets[current[0]];
            let times = current
                .iter()
                .map(|&i| packets[i].timestamp - first.timestamp)
                .collect();
            let lens = current
                .iter()
                .map(|&i| {
                    let p = &packets[i];
                    let len = i32::from(p.length);
                    if p.src_addr == first.src_addr && p.src_port == first.src_port {
                        len
                    } else {
                        -len
                    }
                })
                .collect();
            flows.push(((first.timestamp, current[0]), (key.clone(), times, lens)));
            current.clear();
        };
        for i in idx {
            let p = &packets[i];
            if let Some(&last) = current.last() {
                if p.protocol == Protocol::Udp && p.timestamp - packets[last].timestamp > udp_timeout {
                    finish(&mut current);
                }
            }
            current.push(i);
            if p.protocol == Protocol::Tcp && p.tcp_fin {
                finish(&mut current);
            }
        }
        finish(&mut current);
    }
    flows.sort_by(|a, b| a.0 .0.total_cmp(&b.0 .0).then(a.0 .1.cmp(&b.0 .1)));
    flows.into_iter().map(|(_, f)| f).collect()
}

pub fn shape_of(flow: &FlowSample) -> FlowShape {
    (
        flow.key.clone(),
        flow.packets.iter().map(|p| p.relative_time).collect(),
        flow.packets.iter().map(|p| p.signed_length).collect(),
    )
}

/// `n` random packets over `keys` endpoint pairs, both directions, mixed
/// protocols, with occasional FINs, timestamp ties and long UDP gaps.
pub fn random_packets(n: usize, keys: usize, seed: u64) -> Vec<PacketRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let endpoints: Vec<(String, u16, String, u16, Protocol)> = (0..keys)
        .map(|i| {
            let proto = if i % 2 == 0 { Protocol::Tcp } else { Protocol::Udp };
            (
                format!("10.0.0.{i}"),
                1000 + i as u16,
                format!("10.1.0.{}", i % 3),
                443,
                proto,
            )
        })
        .collect();
    let mut t = 0.0;
    (0..n)
        .map(|_| {
            // a quarter of packets share the previous timestamp
            if rng.random_bool(0.75) {
                t += if rng.random_bool(0.02) {
                    rng.random_range(10.0..40.0)
                } else {
                    rng.random_range(0.0..0.5)
                };
            }
            let (a, ap, b, bp, proto) = &endpoints[rng.random_range(0..keys)];
            let forward = rng.random_bool(0.6);
            let (src, sport, dst, dport) = if forward { (a, *ap, b, *bp) } else { (b, *bp, a, *ap) };
            PacketRecord {
                timestamp: t,
                src_addr: src.clone(),
                dst_addr: dst.clone(),
                src_port: sport,
                dst_port: dport,
                protocol: *proto,
                length: rng.random_range(40..1500),
                tcp_fin: *proto == Protocol::Tcp && rng.random_bool(0.03),
            }
        })
        .collect()
}
