//! k-ary fat trees with up/down routing.
//!
//! Every host attaches to one edge switch through port 0. Switch ports are
//! laid out down-links first, then up-links. Routing toward a host uses the
//! down port whose subtree contains it, otherwise any up port; this is
//! cycle-free, so PFC cannot form credit loops.

use std::collections::VecDeque;

use thiserror::Error;

use crate::link_budget::LinkGeometry;

pub type NodeId = usize;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("fat trees support 1 to 3 tiers, got {0}")]
    Tiers(u32),
    #[error("radix must be even and at least 2, got {0}")]
    Radix(u32),
    #[error("no node named '{0}'")]
    UnknownNode(String),
    #[error("no link {0} -> {1}")]
    UnknownLink(String, String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeKind {
    Host,
    Switch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Port {
    pub peer: NodeId,
    pub peer_port: usize,
}

#[derive(Debug, Clone)]
pub struct Node {
    pub id: NodeId,
    pub name: String,
    pub kind: NodeKind,
    /// 0 for hosts, 1 for edge/leaf switches, up to 3 for core.
    pub tier: u32,
    pub ports: Vec<Port>,
}

#[derive(Debug, Clone)]
pub struct Topology {
    pub nodes: Vec<Node>,
    /// Host node ids, indexed by host number.
    pub hosts: Vec<NodeId>,
    pub tiers: u32,
    pub radix: u32,
    pub geometry: LinkGeometry,
    host_index: Vec<Option<usize>>,
    /// `routes[node][host]`: equal-cost egress ports toward that host.
    routes: Vec<Vec<Vec<usize>>>,
}

impl Topology {
    /// Full-bisection fat tree: `radix/2` hosts (1 tier), `radix²/2` (2 tiers) or `radix³/4` (3 tiers).
    pub fn build_fat_tree(tiers: u32, radix: u32, geometry: LinkGeometry) -> Result<Self, TopologyError> {
        if !(1..=3).contains(&tiers) {
            return Err(TopologyError::Tiers(tiers));
        }
        if radix < 2 || !radix.is_multiple_of(2) {
            return Err(TopologyError::Radix(radix));
        }
        let k = radix as usize;
        let half = k / 2;
        let mut b = Builder::default();

        match tiers {
            1 => {
                let s = b.switch("s0".into(), 1);
                for _ in 0..half {
                    let h = b.host();
                    b.connect(s, h);
                }
            }
            2 => {
                let leaves: Vec<_> = (0..k).map(|i| b.switch(format!("leaf{i}"), 1)).collect();
                let spines: Vec<_> = (0..half).map(|i| b.switch(format!("spine{i}"), 2)).collect();
                for &leaf in &leaves {
                    for _ in 0..half {
                        let h = b.host();
                        b.connect(leaf, h);
                    }
                }
                for &leaf in &leaves {
                    for &spine in &spines {
                        b.connect(spine, leaf);
                    }
                }
            }
            _ => {
                let cores: Vec<_> = (0..half * half).map(|i| b.switch(format!("core{i}"), 3)).collect();
                let mut edges = Vec::with_capacity(k);
                let mut aggs = Vec::with_capacity(k);
                for pod in 0..k {
                    edges.push(
                        (0..half)
                            .map(|i| b.switch(format!("edge{pod}.{i}"), 1))
                            .collect::<Vec<_>>(),
                    );
                    aggs.push(
                        (0..half)
                            .map(|i| b.switch(format!("agg{pod}.{i}"), 2))
                            .collect::<Vec<_>>(),
                    );
                }
                for pod_edges in &edges {
                    for &edge in pod_edges {
                        for _ in 0..half {
                            let h = b.host();
                            b.connect(edge, h);
                        }
                    }
                }
                for pod in 0..k {
                    for &agg in &aggs[pod] {
                        for &edge in &edges[pod] {
                            b.connect(agg, edge);
                        }
                    }
                }
                // agg i of every pod reaches cores [i*half, (i+1)*half)
                for &core in &cores {
                    let group = (core - cores[0]) / half;
                    for pod_aggs in &aggs {
                        b.connect(core, pod_aggs[group]);
                    }
                }
            }
        }
        Ok(b.finish(tiers, radix, geometry))
    }

    pub fn host_count(&self) -> usize {
        self.hosts.len()
    }

    pub fn switch_count(&self) -> usize {
        self.nodes.len() - self.hosts.len()
    }

    pub fn host_index(&self, node: NodeId) -> Option<usize> {
        self.host_index[node]
    }

    pub fn is_host(&self, node: NodeId) -> bool {
        self.nodes[node].kind == NodeKind::Host
    }

    pub fn node_by_name(&self, name: &str) -> Result<NodeId, TopologyError> {
        self.nodes
            .iter()
            .find(|n| n.name == name)
            .map(|n| n.id)
            .ok_or_else(|| TopologyError::UnknownNode(name.to_string()))
    }

    /// Egress port on `from` whose peer is `to`.
    pub fn port_towards(&self, from: NodeId, to: NodeId) -> Option<usize> {
        self.nodes[from].ports.iter().position(|p| p.peer == to)
    }

    /// Equal-cost egress ports at `node` toward host number `dst_host`.
    pub fn candidates(&self, node: NodeId, dst_host: usize) -> &[usize] {
        &self.routes[node][dst_host]
    }

    /// Number of links on a shortest path between two host numbers.
    pub fn path_links(&self, src_host: usize, dst_host: usize) -> usize {
        if src_host == dst_host {
            return 0;
        }
        let mut node = self.hosts[src_host];
        let mut links = 0;
        // any candidate works: all are equal cost
        while node != self.hosts[dst_host] {
            let port = self.routes[node][dst_host][0];
            node = self.nodes[node].ports[port].peer;
            links += 1;
        }
        links
    }

    /// Largest number of switches crossed by any host-to-host shortest path.
    pub fn max_switch_hops(&self) -> usize {
        let mut best = 0;
        for (i, &src) in self.hosts.iter().enumerate() {
            let dist = self.bfs(src);
            for (j, &dst) in self.hosts.iter().enumerate() {
                if i != j {
                    best = best.max(dist[dst].saturating_sub(1));
                }
            }
        }
        best
    }

    fn bfs(&self, from: NodeId) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.nodes.len()];
        dist[from] = 0;
        let mut q = VecDeque::from([from]);
        while let Some(n) = q.pop_front() {
            // hosts do not forward
            if n != from && self.nodes[n].kind == NodeKind::Host {
                continue;
            }
            for p in &self.nodes[n].ports {
                if dist[p.peer] == usize::MAX {
                    dist[p.peer] = dist[n] + 1;
                    q.push_back(p.peer);
                }
            }
        }
        dist
    }
}

#[derive(Default)]
struct Builder {
    nodes: Vec<Node>,
    hosts: Vec<NodeId>,
}

impl Builder {
    fn switch(&mut self, name: String, tier: u32) -> NodeId {
        let id = self.nodes.len();
        self.nodes.push(Node {
            id,
            name,
            kind: NodeKind::Switch,
            tier,
            ports: Vec::new(),
        });
        id
    }

    fn host(&mut self) -> NodeId {
        let id = self.nodes.len();
        let name = format!("h{}", self.hosts.len());
        self.nodes.push(Node {
            id,
            name,
            kind: NodeKind::Host,
            tier: 0,
            ports: Vec::new(),
        });
        self.hosts.push(id);
        id
    }

    /// Bidirectional link; geometry is uniform across the fabric.
    fn connect(&mut self, a: NodeId, b: NodeId) {
        let pa = self.nodes[a].ports.len();
        let pb = self.nodes[b].ports.len();
        self.nodes[a].ports.push(Port { peer: b, peer_port: pb });
        self.nodes[b].ports.push(Port { peer: a, peer_port: pa });
    }

    fn finish(self, tiers: u32, radix: u32, geometry: LinkGeometry) -> Topology {
        let n = self.nodes.len();
        let h = self.hosts.len();
        let mut host_index = vec![None; n];
        for (i, &id) in self.hosts.iter().enumerate() {
            host_index[id] = Some(i);
        }

        // below[node][host]: host reachable by only going down from node
        let mut below = vec![vec![false; h]; n];
        for (i, &id) in self.hosts.iter().enumerate() {
            below[id][i] = true;
        }
        for tier in 1..=tiers {
            for node in self.nodes.iter().filter(|x| x.tier == tier) {
                let mut acc = vec![false; h];
                for p in &node.ports {
                    if self.nodes[p.peer].tier < tier {
                        for (j, reach) in below[p.peer].iter().enumerate() {
                            acc[j] |= *reach;
                        }
                    }
                }
                below[node.id] = acc;
            }
        }

        let mut routes = vec![vec![Vec::new(); h]; n];
        for node in &self.nodes {
            for dst in 0..h {
                let ports = &node.ports;
                let down: Vec<usize> = (0..ports.len())
                    .filter(|&i| self.nodes[ports[i].peer].tier < node.tier && below[ports[i].peer][dst])
                    .collect();
                routes[node.id][dst] = if !down.is_empty() {
                    down
                } else {
                    (0..ports.len())
                        .filter(|&i| self.nodes[ports[i].peer].tier > node.tier)
                        .collect()
                };
            }
        }

        Topology {
            nodes: self.nodes,
            hosts: self.hosts,
            tiers,
            radix,
            geometry,
            host_index,
            routes,
        }
    }
}
