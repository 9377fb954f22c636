//! Packet-level model of the tile control network.
//!
//! Every tile has a grid of switch controllers. Controller (0, 0) is the
//! tile's gateway onto the inter-tile network; if it fails the tile is cut
//! off. Packets move one gateway hop per tick. Routing prefers the
//! row-then-column step on the tile's own wall and otherwise detours along a
//! shortest live path, so a packet is delivered exactly when a live path
//! exists.

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::io::Write;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::emfunc::{quantize_function, EmFunction, EmKind, LookupTable, SwitchMatrix, TileFunction};
use crate::error::{Error, Result};
use crate::raytrace::EnvConfiguration;
use crate::scene::{Material, Scene, Surface, Tile};
use crate::vec3::Vec3;

pub const DEFAULT_CONTROLLERS_PER_SIDE: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NodeState {
    Idle,
    Relaying,
    Failed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerNode {
    pub address: (usize, usize),
    pub state: NodeState,
    pub switch_state: u8,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TileGateway {
    pub tile_id: usize,
    pub neighbors: Vec<usize>,
    pub is_entry_point: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PacketKind {
    SetConfig,
    Ack,
    Error,
    MonitorRequest,
    MonitorData,
    FaultNotice,
}

impl fmt::Display for PacketKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            PacketKind::SetConfig => "SetConfig",
            PacketKind::Ack => "Ack",
            PacketKind::Error => "Error",
            PacketKind::MonitorRequest => "MonitorRequest",
            PacketKind::MonitorData => "MonitorData",
            PacketKind::FaultNotice => "FaultNotice",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    None,
    Function(TileFunction),
    Report(MonitorData),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CommandPacket {
    pub kind: PacketKind,
    /// Tile the packet entered the network at.
    pub src: usize,
    pub dest: usize,
    pub payload: Payload,
    pub hop_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorData {
    pub tile: usize,
    pub function: TileFunction,
    /// Addresses of failed controllers.
    pub faults: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLine {
    pub tick: u64,
    pub kind: PacketKind,
    pub src: usize,
    pub dst: usize,
    pub hop: usize,
    /// Gateway the packet reached on this hop.
    pub at: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    /// `Ack`, or `Error` when the tile has failed controllers.
    pub response: PacketKind,
    pub function: TileFunction,
    /// Hops of the command and of its response.
    pub hops: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BroadcastReport {
    pub delivered: usize,
    pub acked: usize,
    /// Tiles that answered with an Ack, ascending.
    pub acked_tiles: Vec<usize>,
    pub errors: usize,
    pub undeliverable: Vec<usize>,
    /// Gateway hops of all commands and responses.
    pub hop_volume: usize,
    pub ticks: u64,
}

pub struct TileNetwork {
    tiles: Vec<Tile>,
    gateways: Vec<TileGateway>,
    controllers: Vec<Vec<ControllerNode>>,
    per_side: usize,
    functions: Vec<TileFunction>,
    lookup: Option<LookupTable>,
    wavelength: f64,
    tick: u64,
    log: Vec<LogLine>,
}

impl TileNetwork {
    /// Network over the tiles of `scene`, wired by tile adjacency.
    pub fn from_scene(scene: &Scene, entry_points: &[usize], per_side: usize) -> Result<Self> {
        let n = scene.tile_count();
        if entry_points.is_empty() {
            return Err(Error::InvalidParameter("at least one entry point is required".into()));
        }
        if let Some(&bad) = entry_points.iter().find(|&&e| e >= n) {
            return Err(Error::UnknownTile(bad));
        }
        if per_side == 0 {
            return Err(Error::InvalidParameter("controller grid must be non-empty".into()));
        }
        let gateways = scene
            .tile_adjacency()
            .into_iter()
            .enumerate()
            .map(|(tile_id, neighbors)| TileGateway {
                tile_id,
                neighbors,
                is_entry_point: entry_points.contains(&tile_id),
            })
            .collect();
        let controllers = (0..n)
            .map(|_| {
                (0..per_side * per_side)
                    .map(|k| ControllerNode {
                        address: (k / per_side, k % per_side),
                        state: NodeState::Idle,
                        switch_state: 0,
                    })
                    .collect()
            })
            .collect();
        Ok(TileNetwork {
            tiles: scene.tiles().to_vec(),
            gateways,
            controllers,
            per_side,
            functions: vec![TileFunction::PLAIN; n],
            lookup: None,
            wavelength: 5e-3,
            tick: 0,
            log: Vec::new(),
        })
    }

    /// A single flat `rows` × `cols` tiled wall with the entry at tile 0.
    pub fn grid(rows: usize, cols: usize) -> Result<Self> {
        let wall = Surface {
            id: 0,
            name: "wall".into(),
            origin: Vec3::ZERO,
            edge_u: Vec3::new(cols as f64, 0.0, 0.0),
            edge_v: Vec3::new(0.0, 0.0, rows as f64),
            material: Material::TiledWall,
            true_normal: Vec3::new(0.0, 1.0, 0.0),
        };
        let scene = Scene::new(vec![wall], Vec::new(), 1.0)?;
        Self::from_scene(&scene, &[0], DEFAULT_CONTROLLERS_PER_SIDE)
    }

    /// Switch patterns written to the controllers come from `table`; its
    /// dimension replaces the controller grid size.
    pub fn with_lookup(mut self, table: LookupTable, wavelength: f64) -> Self {
        let m = table.dim();
        self.per_side = m;
        for ctrls in &mut self.controllers {
            *ctrls = (0..m * m)
                .map(|k| ControllerNode {
                    address: (k / m, k % m),
                    state: NodeState::Idle,
                    switch_state: 0,
                })
                .collect();
        }
        self.lookup = Some(table);
        self.wavelength = wavelength;
        self
    }

    pub fn tile_count(&self) -> usize {
        self.gateways.len()
    }

    pub fn gateways(&self) -> &[TileGateway] {
        &self.gateways
    }

    pub fn controllers(&self, tile: usize) -> &[ControllerNode] {
        &self.controllers[tile]
    }

    pub fn function(&self, tile: usize) -> TileFunction {
        self.functions[tile]
    }

    /// Current tile states as a configuration the tracer accepts.
    pub fn configuration(&self) -> EnvConfiguration {
        EnvConfiguration::from_states(self.functions.iter().map(|f| f.index()).collect()).expect("catalog states")
    }

    pub fn log(&self) -> &[LogLine] {
        &self.log
    }

    /// One line per hop: `tick kind src dst hop at`.
    pub fn write_log(&self, mut w: impl Write) -> std::io::Result<()> {
        for l in &self.log {
            writeln!(w, "{} {} {} {} {} {}", l.tick, l.kind, l.src, l.dst, l.hop, l.at)?;
        }
        Ok(())
    }

    pub fn entry_points(&self) -> Vec<usize> {
        self.gateways.iter().filter(|g| g.is_entry_point).map(|g| g.tile_id).collect()
    }

    pub fn set_entry_point(&mut self, tile: usize, entry: bool) -> Result<()> {
        self.check_tile(tile)?;
        self.gateways[tile].is_entry_point = entry;
        Ok(())
    }

    pub fn fail_controller(&mut self, tile: usize, address: (usize, usize)) -> Result<()> {
        self.check_tile(tile)?;
        let k = self.controller_index(address)?;
        self.controllers[tile][k].state = NodeState::Failed;
        Ok(())
    }

    pub fn repair_controller(&mut self, tile: usize, address: (usize, usize)) -> Result<()> {
        self.check_tile(tile)?;
        let k = self.controller_index(address)?;
        self.controllers[tile][k].state = NodeState::Idle;
        Ok(())
    }

    /// Fails the gateway controller of `tile`, cutting it off.
    pub fn fail_gateway(&mut self, tile: usize) -> Result<()> {
        self.fail_controller(tile, (0, 0))
    }

    /// Fails the gateways of `round(fraction · tiles)` distinct tiles drawn
    /// with `seed`. Returns them sorted.
    pub fn fail_random_gateways(&mut self, fraction: f64, seed: u64) -> Vec<usize> {
        let n = self.tile_count();
        let k = ((fraction * n as f64).round() as usize).min(n);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut picked = sample(&mut rng, n, k).into_vec();
        picked.sort_unstable();
        for &t in &picked {
            self.controllers[t][0].state = NodeState::Failed;
        }
        picked
    }

    pub fn gateway_alive(&self, tile: usize) -> bool {
        self.controllers[tile][0].state != NodeState::Failed
    }

    fn check_tile(&self, tile: usize) -> Result<()> {
        if tile >= self.tile_count() {
            Err(Error::UnknownTile(tile))
        } else {
            Ok(())
        }
    }

    fn controller_index(&self, (i, j): (usize, usize)) -> Result<usize> {
        if i >= self.per_side || j >= self.per_side {
            return Err(Error::InvalidParameter(format!("no controller ({i}, {j})")));
        }
        Ok(i * self.per_side + j)
    }

    fn faults(&self, tile: usize) -> Vec<(usize, usize)> {
        self.controllers[tile]
            .iter()
            .filter(|c| c.state == NodeState::Failed)
            .map(|c| c.address)
            .collect()
    }

    /// Hop counts to `dest` over live gateways; `usize::MAX` when cut off.
    fn distances_to(&self, dest: usize) -> Vec<usize> {
        let mut dist = vec![usize::MAX; self.tile_count()];
        if !self.gateway_alive(dest) {
            return dist;
        }
        dist[dest] = 0;
        let mut queue = VecDeque::from([dest]);
        while let Some(t) = queue.pop_front() {
            for &nb in &self.gateways[t].neighbors {
                if dist[nb] == usize::MAX && self.gateway_alive(nb) {
                    dist[nb] = dist[t] + 1;
                    queue.push_back(nb);
                }
            }
        }
        dist
    }

    /// Next gateway from `at` toward the destination whose distance table is
    /// `dist`. Prefers the row step, then the column step, when `at` and the
    /// destination share a wall.
    fn next_hop(&self, at: usize, dest: usize, dist: &[usize]) -> usize {
        let here = &self.tiles[at];
        let there = &self.tiles[dest];
        let on_path = |nb: usize| dist[nb] != usize::MAX && dist[nb] + 1 == dist[at];
        if here.parent_surface == there.parent_surface {
            let toward = |a: usize, b: usize| -> Option<usize> {
                if a == b {
                    None
                } else if a < b {
                    Some(a + 1)
                } else {
                    Some(a - 1)
                }
            };
            let row_step = toward(here.row, there.row).map(|r| (r, here.col));
            let col_step = toward(here.col, there.col).map(|c| (here.row, c));
            for (r, c) in [row_step, col_step].into_iter().flatten() {
                let hit = self.gateways[at]
                    .neighbors
                    .iter()
                    .copied()
                    .find(|&nb| {
                        let t = &self.tiles[nb];
                        t.parent_surface == here.parent_surface && t.row == r && t.col == c
                    });
                if let Some(nb) = hit.filter(|&nb| on_path(nb)) {
                    return nb;
                }
            }
        }
        self.gateways[at]
            .neighbors
            .iter()
            .copied()
            .find(|&nb| on_path(nb))
            .expect("a live neighbour on a shortest path")
    }

    /// Gateway sequence from `from` to `to`, both included.
    pub fn route(&self, from: usize, to: usize) -> Result<Vec<usize>> {
        self.check_tile(from)?;
        self.check_tile(to)?;
        let dist = self.distances_to(to);
        if !self.gateway_alive(from) || dist[from] == usize::MAX {
            return Err(Error::Undeliverable(to));
        }
        let mut path = vec![from];
        let mut at = from;
        while at != to {
            at = self.next_hop(at, to, &dist);
            path.push(at);
        }
        Ok(path)
    }

    /// Live entry point closest to `tile` (lowest id on ties).
    fn nearest_entry(&self, dist: &[usize]) -> Option<usize> {
        self.gateways
            .iter()
            .filter(|g| g.is_entry_point && self.gateway_alive(g.tile_id) && dist[g.tile_id] != usize::MAX)
            .min_by_key(|g| (dist[g.tile_id], g.tile_id))
            .map(|g| g.tile_id)
    }

    /// Runs packets to completion, one hop per tick. Commands that arrive
    /// are handled and their responses routed back to their entry point.
    /// Returns the delivered responses.
    fn run(&mut self, mut in_flight: Vec<(CommandPacket, usize)>) -> Vec<CommandPacket> {
        let mut tables: HashMap<usize, Vec<usize>> = HashMap::new();
        let mut done = Vec::new();
        // Packets starting at their destination are handled before any hop.
        let mut arrived: Vec<CommandPacket> = Vec::new();
        in_flight.retain(|(p, at)| {
            if *at == p.dest {
                arrived.push(p.clone());
                false
            } else {
                true
            }
        });
        loop {
            for p in arrived.drain(..) {
                match self.handle(&p) {
                    Some(resp) if resp.dest == p.dest => done.push(resp),
                    Some(resp) => in_flight.push((resp, p.dest)),
                    None => done.push(p),
                }
            }
            if in_flight.is_empty() {
                break;
            }
            self.tick += 1;
            let mut still = Vec::with_capacity(in_flight.len());
            for (mut p, at) in in_flight.drain(..) {
                let dist = tables.entry(p.dest).or_insert_with(|| self.distances_to(p.dest));
                let next = self.next_hop(at, p.dest, dist);
                p.hop_count += 1;
                self.controllers[next][0].state = NodeState::Relaying;
                self.log.push(LogLine {
                    tick: self.tick,
                    kind: p.kind,
                    src: p.src,
                    dst: p.dest,
                    hop: p.hop_count,
                    at: next,
                });
                if next == p.dest {
                    arrived.push(p);
                } else {
                    still.push((p, next));
                }
            }
            in_flight = still;
            for ctrls in &mut self.controllers {
                if ctrls[0].state == NodeState::Relaying {
                    ctrls[0].state = NodeState::Idle;
                }
            }
        }
        done
    }

    /// Tile-side handling of an arrived packet; returns the response, or
    /// `None` if the packet is itself a response.
    fn handle(&mut self, p: &CommandPacket) -> Option<CommandPacket> {
        let reply = |kind, payload| CommandPacket {
            kind,
            src: p.dest,
            dest: p.src,
            payload,
            hop_count: 0,
        };
        match (&p.kind, &p.payload) {
            (PacketKind::SetConfig, Payload::Function(f)) => {
                let faults = self.faults(p.dest);
                if faults.is_empty() {
                    self.apply(p.dest, *f);
                    Some(reply(PacketKind::Ack, Payload::Function(*f)))
                } else {
                    let report = MonitorData {
                        tile: p.dest,
                        function: self.functions[p.dest],
                        faults,
                    };
                    Some(reply(PacketKind::Error, Payload::Report(report)))
                }
            }
            (PacketKind::MonitorRequest, _) => {
                let report = MonitorData {
                    tile: p.dest,
                    function: self.functions[p.dest],
                    faults: self.faults(p.dest),
                };
                Some(reply(PacketKind::MonitorData, Payload::Report(report)))
            }
            _ => None,
        }
    }

    fn apply(&mut self, tile: usize, function: TileFunction) {
        self.functions[tile] = function;
        let pattern = self
            .lookup
            .as_ref()
            .and_then(|t| t.get(&EmFunction::for_state(function, self.wavelength)).cloned())
            .unwrap_or_else(|| SwitchMatrix::zeros(self.per_side));
        for c in &mut self.controllers[tile] {
            if c.state != NodeState::Failed {
                c.switch_state = pattern.get(c.address.0, c.address.1);
            }
        }
    }

    /// Sends one command from the nearest entry point and waits for the reply.
    fn exchange(&mut self, kind: PacketKind, tile: usize, payload: Payload) -> Result<(CommandPacket, usize)> {
        self.check_tile(tile)?;
        let dist = self.distances_to(tile);
        let entry = self.nearest_entry(&dist).ok_or(Error::Undeliverable(tile))?;
        let packet = CommandPacket {
            kind,
            src: entry,
            dest: tile,
            payload,
            hop_count: 0,
        };
        let before = self.log.len();
        let mut replies = self.run(vec![(packet, entry)]);
        let reply = replies.pop().expect("one reply per command");
        Ok((reply, self.log.len() - before))
    }

    /// Quantises `function` for the tile, delivers it and returns the reply.
    pub fn deploy(&mut self, tile: usize, action: EmKind, function: &EmFunction) -> Result<Outcome> {
        self.check_tile(tile)?;
        if action != function.kind {
            return Err(Error::InvalidParameter(format!("action {action} with a {} function", function.kind)));
        }
        function.validate()?;
        let state = quantize_function(function, &self.tiles[tile]);
        let (reply, hops) = self.exchange(PacketKind::SetConfig, tile, Payload::Function(state))?;
        Ok(Outcome {
            response: reply.kind,
            function: self.functions[tile],
            hops,
        })
    }

    /// Sets a catalog state directly, without quantisation.
    pub fn deploy_state(&mut self, tile: usize, state: TileFunction) -> Result<Outcome> {
        let (reply, hops) = self.exchange(PacketKind::SetConfig, tile, Payload::Function(state))?;
        Ok(Outcome {
            response: reply.kind,
            function: self.functions[tile],
            hops,
        })
    }

    pub fn monitor(&mut self, tile: usize) -> Result<MonitorData> {
        let (reply, _) = self.exchange(PacketKind::MonitorRequest, tile, Payload::None)?;
        match reply.payload {
            Payload::Report(r) => Ok(r),
            _ => unreachable!("monitor replies carry a report"),
        }
    }

    /// One SetConfig per tile, all injected at once, each from its nearest
    /// entry point.
    pub fn broadcast_config(&mut self, config: &EnvConfiguration) -> Result<BroadcastReport> {
        if config.len() != self.tile_count() {
            return Err(Error::GenomeLength {
                expected: self.tile_count(),
                got: config.len(),
            });
        }
        let start_tick = self.tick;
        let mut report = BroadcastReport::default();
        let mut packets = Vec::new();
        for tile in 0..self.tile_count() {
            let dist = self.distances_to(tile);
            match self.nearest_entry(&dist) {
                Some(entry) => packets.push((
                    CommandPacket {
                        kind: PacketKind::SetConfig,
                        src: entry,
                        dest: tile,
                        payload: Payload::Function(config.function(tile)),
                        hop_count: 0,
                    },
                    entry,
                )),
                None => report.undeliverable.push(tile),
            }
        }
        report.delivered = packets.len();
        let before = self.log.len();
        for reply in self.run(packets) {
            match reply.kind {
                PacketKind::Ack => {
                    report.acked += 1;
                    report.acked_tiles.push(reply.src);
                }
                PacketKind::Error => report.errors += 1,
                _ => {}
            }
        }
        report.acked_tiles.sort_unstable();
        report.hop_volume = self.log.len() - before;
        report.ticks = self.tick - start_tick;
        Ok(report)
    }

    /// Every reachable tile with failed controllers sends a FaultNotice to
    /// its nearest entry point. Returns the reports received.
    pub fn report_faults(&mut self) -> Vec<MonitorData> {
        let mut packets = Vec::new();
        for tile in 0..self.tile_count() {
            let faults = self.faults(tile);
            if faults.is_empty() || !self.gateway_alive(tile) {
                continue;
            }
            // Route toward the entry, so distances are taken from each entry.
            let entry = self
                .entry_points()
                .into_iter()
                .filter(|&e| self.gateway_alive(e))
                .filter_map(|e| {
                    let d = self.distances_to(e)[tile];
                    (d != usize::MAX).then_some((d, e))
                })
                .min();
            if let Some((_, entry)) = entry {
                let report = MonitorData {
                    tile,
                    function: self.functions[tile],
                    faults,
                };
                packets.push((
                    CommandPacket {
                        kind: PacketKind::FaultNotice,
                        src: tile,
                        dest: entry,
                        payload: Payload::Report(report),
                        hop_count: 0,
                    },
                    tile,
                ));
            }
        }
        self.run(packets)
            .into_iter()
            .filter_map(|p| match p.payload {
                Payload::Report(r) => Some(r),
                _ => None,
            })
            .collect()
    }
}
