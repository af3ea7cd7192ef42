//! Discrete-event loop of one replication.

use super::metrics::{PacketDisposition, PacketRecord, ReplicationOutput};
use super::PointContext;
use crate::control_plane::{DciQueue, SrConfig};
use crate::error::{Error, Result};
use crate::latency_engine::{apply_k_repetitions, DlCast, transmit_data, LatencyBreakdown, Retransmission};
use crate::phy_profile::Direction;
use crate::resource_grid::{Placement, SlotGrid};
use crate::scenario::{drop_stale, nearest_neighbours, Disposition, Scenario, VehicleQueue};
use crate::time::Ticks;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use std::cmp::Reverse;
use std::collections::BinaryHeap;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
enum Kind {
    Generate { vehicle: u32, index: u32 },
    DlArrive { packet: u32 },
    DciEnqueue { leg: u32 },
    Pdcch,
    Allocate { leg: u32 },
    AttemptDone { leg: u32 },
}

impl Kind {
    /// Same-tick order: arrivals, then DCIs joining the queue before the
    /// occasion that may carry them, then grid work.
    fn class(&self) -> u8 {
        match self {
            Kind::Generate { .. } => 0,
            Kind::DlArrive { .. } => 1,
            Kind::DciEnqueue { .. } => 2,
            Kind::Pdcch => 3,
            Kind::Allocate { .. } => 4,
            Kind::AttemptDone { .. } => 5,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct Event {
    time: Ticks,
    class: u8,
    seq: u64,
    kind: Kind,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum LegState {
    Active,
    Delivered,
    Failed,
    Dropped,
}

struct Leg {
    packet: u32,
    direction: Direction,
    n_rb: u16,
    breakdown: LatencyBreakdown,
    state: LegState,
    /// Start of the current attempt's scheduling (generation or NACK arrival).
    attempt_start: Ticks,
    /// Decode time of the failed attempt that triggered the current retransmission.
    retx_from: Option<Ticks>,
    retx_done: u8,
    dci_ready: Ticks,
    dci_queued: bool,
    /// Receivers still waiting for a correct copy.
    remaining: u32,
    placements: Vec<Placement>,
    first_tx_end: Option<Ticks>,
}

struct Packet {
    vehicle: u32,
    generated: Ticks,
    ul: Option<LatencyBreakdown>,
    dl: Vec<LatencyBreakdown>,
    dl_legs: Vec<u32>,
    dl_left: u32,
    dl_failed: bool,
    disposition: Option<PacketDisposition>,
    infeasible: bool,
}

struct Engine<'a> {
    ctx: &'a PointContext,
    rng: ChaCha12Rng,
    scenario: Scenario,
    receivers: Vec<Vec<usize>>,
    grids: [SlotGrid; 2],
    queue: DciQueue,
    sr: SrConfig,
    events: BinaryHeap<Reverse<Event>>,
    seq: u64,
    packets: Vec<Packet>,
    legs: Vec<Leg>,
    vehicle_queues: Vec<VehicleQueue>,
    pending_ul: Vec<Option<u32>>,
    last_dl: Vec<Vec<u32>>,
    pdcch_next: Option<Ticks>,
}

fn dir_index(d: Direction) -> usize {
    match d {
        Direction::Uplink => 0,
        Direction::Downlink => 1,
    }
}

/// Seeds of replication `r`: one stream for the world, one for the dynamics.
fn rngs(seed: u64, r: u32) -> (ChaCha12Rng, ChaCha12Rng) {
    let mut world = ChaCha12Rng::seed_from_u64(seed);
    world.set_stream(2 * r as u64);
    let mut dynamics = ChaCha12Rng::seed_from_u64(seed);
    dynamics.set_stream(2 * r as u64 + 1);
    (world, dynamics)
}

/// Builds the world of replication `r` exactly as `run_replication` does.
pub fn replication_scenario(ctx: &PointContext, seed: u64, r: u32) -> Result<Scenario> {
    let (mut world, _) = rngs(seed, r);
    let c = &ctx.config;
    Scenario::generate(c.density, c.lanes, c.cell_radius_m, &ctx.link.cqi_map, &ctx.traffic, ctx.horizon, &mut world)
}

/// Runs replication `r` of a point. `record` keeps per-packet records.
pub fn run_replication(ctx: &PointContext, seed: u64, r: u32, record: bool) -> Result<ReplicationOutput> {
    let scenario = replication_scenario(ctx, seed, r)?;
    let (_, dynamics) = rngs(seed, r);
    run_scenario(ctx, scenario, dynamics, record)
}

/// Runs a given world; the engine's own draws come from `rng`.
pub fn run_scenario(ctx: &PointContext, scenario: Scenario, rng: ChaCha12Rng, record: bool) -> Result<ReplicationOutput> {
    let n = scenario.vehicles.len();
    let need = ctx.dl_receivers();
    if n <= need {
        return Err(Error::InvalidConfig(format!("{n} vehicles cannot serve {need} DL receivers each")));
    }
    let receivers = (0..n).map(|v| nearest_neighbours(&scenario.vehicles, v, need)).collect();
    let mut engine = Engine {
        ctx,
        rng,
        receivers,
        grids: [SlotGrid::new(ctx.timing.ul.clone()), SlotGrid::new(ctx.timing.dl.clone())],
        queue: DciQueue::for_control(&ctx.control)?,
        sr: SrConfig::new(&ctx.control, n)?,
        events: BinaryHeap::new(),
        seq: 0,
        packets: Vec::new(),
        legs: Vec::new(),
        vehicle_queues: vec![VehicleQueue::default(); n],
        pending_ul: vec![None; n],
        last_dl: vec![Vec::new(); n],
        pdcch_next: None,
        scenario,
    };
    for v in 0..n {
        if let Some(&t) = engine.scenario.arrivals[v].first() {
            engine.push(t, Kind::Generate { vehicle: v as u32, index: 0 });
        }
    }
    engine.run()?;
    Ok(engine.output(record))
}

impl Engine<'_> {
    fn push(&mut self, time: Ticks, kind: Kind) {
        self.seq += 1;
        self.events.push(Reverse(Event { time, class: kind.class(), seq: self.seq, kind }));
    }

    fn run(&mut self) -> Result<()> {
        while let Some(Reverse(ev)) = self.events.pop() {
            let now = ev.time;
            for g in &mut self.grids {
                g.release_expired(now);
            }
            match ev.kind {
                Kind::Generate { vehicle, index } => self.on_generate(now, vehicle, index)?,
                Kind::DlArrive { packet } => self.on_dl_arrive(now, packet)?,
                Kind::DciEnqueue { leg } => self.on_dci_enqueue(now, leg),
                Kind::Pdcch => self.on_pdcch(now),
                Kind::Allocate { leg } => self.on_allocate(now, leg)?,
                Kind::AttemptDone { leg } => self.on_attempt_done(now, leg)?,
            }
        }
        Ok(())
    }

    fn new_leg(&mut self, packet: u32, direction: Direction, n_rb: u16, remaining: u32, now: Ticks) -> u32 {
        self.legs.push(Leg {
            packet,
            direction,
            n_rb,
            breakdown: LatencyBreakdown::new(direction),
            state: LegState::Active,
            attempt_start: now,
            retx_from: None,
            retx_done: 0,
            dci_ready: now,
            dci_queued: false,
            remaining,
            placements: Vec::new(),
            first_tx_end: None,
        });
        (self.legs.len() - 1) as u32
    }

    fn on_generate(&mut self, now: Ticks, vehicle: u32, index: u32) -> Result<()> {
        let v = vehicle as usize;
        if let Some(&next) = self.scenario.arrivals[v].get(index as usize + 1) {
            self.push(next, Kind::Generate { vehicle, index: index + 1 });
        }
        let id = self.packets.len() as u32;
        self.packets.push(Packet {
            vehicle,
            generated: now,
            ul: None,
            dl: Vec::new(),
            dl_legs: Vec::new(),
            dl_left: 0,
            dl_failed: false,
            disposition: None,
            infeasible: false,
        });
        if let Disposition::Dropped(old) = drop_stale(&mut self.vehicle_queues[v], id as u64, now) {
            if let Some(leg) = self.pending_ul[v].take() {
                self.drop_leg(now, leg);
            }
            self.finish_packet(old as u32, PacketDisposition::DroppedAtTx);
        }
        let cqi = self.scenario.vehicles[v].cqi as usize;
        let Some(n_rb) = self.ctx.rbs_ul[cqi] else {
            self.packets[id as usize].infeasible = true;
            self.vehicle_queues[v].pending = None;
            self.finish_packet(id, PacketDisposition::DroppedAtTx);
            return Ok(());
        };
        let leg = self.new_leg(id, Direction::Uplink, n_rb, 1, now);
        self.pending_ul[v] = Some(leg);
        self.start_attempt(now, leg, self.ctx.is_dynamic())
    }

    fn on_dl_arrive(&mut self, now: Ticks, packet: u32) -> Result<()> {
        let src = self.packets[packet as usize].vehicle as usize;
        let stale: Vec<u32> = std::mem::take(&mut self.last_dl[src])
            .into_iter()
            .filter(|&l| {
                let leg = &self.legs[l as usize];
                leg.state == LegState::Active && leg.first_tx_end.is_none_or(|t| t > now)
            })
            .collect();
        for l in stale {
            let old = self.legs[l as usize].packet;
            self.drop_leg(now, l);
            self.finish_packet(old, PacketDisposition::DroppedAtTx);
        }
        let group = self.receivers[src].clone();
        let cqi_rbs = |v: usize| self.ctx.rbs_dl[self.scenario.vehicles[v].cqi as usize];
        let legs: Vec<(u16, u32)> = match self.ctx.scheme.dl_cast {
            DlCast::Broadcast => {
                let rbs: Option<Vec<u16>> = group.iter().map(|&v| cqi_rbs(v)).collect();
                rbs.map(|r| vec![(*r.iter().max().expect("non-empty group"), group.len() as u32)])
                    .unwrap_or_default()
            }
            DlCast::Unicast { .. } => {
                let rbs: Option<Vec<u16>> = group.iter().map(|&v| cqi_rbs(v)).collect();
                rbs.map(|r| r.into_iter().map(|n| (n, 1)).collect()).unwrap_or_default()
            }
        };
        if legs.is_empty() {
            self.packets[packet as usize].infeasible = true;
            self.finish_packet(packet, PacketDisposition::DroppedAtTx);
            return Ok(());
        }
        self.packets[packet as usize].dl_left = legs.len() as u32;
        for (n_rb, remaining) in legs {
            let leg = self.new_leg(packet, Direction::Downlink, n_rb, remaining, now);
            self.packets[packet as usize].dl_legs.push(leg);
            self.last_dl[src].push(leg);
            self.start_attempt(now, leg, self.ctx.is_dynamic())?;
        }
        Ok(())
    }

    fn start_attempt(&mut self, now: Ticks, leg: u32, dynamic: bool) -> Result<()> {
        self.legs[leg as usize].attempt_start = now;
        if !dynamic {
            return self.on_allocate(now, leg);
        }
        let timing = &self.ctx.timing;
        let dci_ready = match self.legs[leg as usize].direction {
            Direction::Uplink => {
                let p: f64 = self.rng.random();
                let sr = timing.sr_breakdown(now, &self.sr, p);
                timing.dci_ready(now + sr.total())
            }
            Direction::Downlink => timing.dci_ready(now),
        };
        self.legs[leg as usize].dci_ready = dci_ready;
        self.push(dci_ready, Kind::DciEnqueue { leg });
        Ok(())
    }

    fn on_dci_enqueue(&mut self, now: Ticks, leg: u32) {
        if self.legs[leg as usize].state != LegState::Active {
            return;
        }
        self.queue.enqueue(leg as u64, now);
        self.legs[leg as usize].dci_queued = true;
        if self.pdcch_next.is_none() {
            let occasion = self.ctx.timing.dl.next_control_occasion(now);
            self.pdcch_next = Some(occasion);
            self.push(occasion, Kind::Pdcch);
        }
    }

    fn on_pdcch(&mut self, now: Ticks) {
        self.pdcch_next = None;
        for d in self.queue.serve(now) {
            let leg = &mut self.legs[d.id as usize];
            leg.dci_queued = false;
            let b = self.ctx.timing.dci_breakdown(leg.dci_ready, now);
            let grant = now + b.t_tt + b.t_p_rx;
            self.push(grant, Kind::Allocate { leg: d.id as u32 });
        }
        if !self.queue.is_empty() {
            let next = now + self.ctx.timing.dl.slot_ticks;
            self.pdcch_next = Some(next);
            self.push(next, Kind::Pdcch);
        }
    }

    fn on_allocate(&mut self, now: Ticks, leg_id: u32) -> Result<()> {
        let leg = &self.legs[leg_id as usize];
        if leg.state != LegState::Active {
            return Ok(());
        }
        let copies = self.ctx.scheme.retransmission.copies();
        let slot_type = self.ctx.scheme.slot_type;
        let dir = leg.direction;
        let grid = &mut self.grids[dir_index(dir)];
        let tx = transmit_data(now, leg_id as u64, leg.n_rb, slot_type, copies, grid, &self.ctx.timing.delays)?;
        let g = grid.geometry();
        let last_end = tx.placements.last().expect("at least one copy").end(g);
        let done = last_end + tx.t_p_rx;
        let leg = &mut self.legs[leg_id as usize];
        if leg.retx_from.is_none() {
            let b = &mut leg.breakdown;
            b.t_sch = now - leg.attempt_start;
            b.t_p_tx = tx.t_p_tx;
            b.t_fa = tx.t_fa;
            b.t_w = tx.t_w;
            b.t_tt = tx.t_tt;
            b.t_p_rx = tx.t_p_rx;
            b.n_attempts = 1;
            if copies > 1 {
                *b = apply_k_repetitions(*b, copies, self.ctx.slot());
            }
            debug_assert_eq!(leg.attempt_start + b.total(), done);
        }
        if leg.first_tx_end.is_none() {
            leg.first_tx_end = Some(last_end);
            if dir == Direction::Uplink {
                let v = self.packets[leg.packet as usize].vehicle as usize;
                if let Some(p) = &mut self.vehicle_queues[v].pending {
                    if p.packet_id == leg.packet as u64 {
                        p.transmitted_at = Some(last_end);
                    }
                }
            }
        }
        leg.placements = tx.placements;
        self.push(done, Kind::AttemptDone { leg: leg_id });
        Ok(())
    }

    fn on_attempt_done(&mut self, now: Ticks, leg_id: u32) -> Result<()> {
        if self.legs[leg_id as usize].state != LegState::Active {
            return Ok(());
        }
        let bler = self.ctx.bler();
        let retx = self.ctx.scheme.retransmission;
        let p_fail = bler.powi(retx.copies() as i32);
        let leg = &mut self.legs[leg_id as usize];
        if let Some(from) = leg.retx_from {
            leg.breakdown.t_retx_total += now - from;
            leg.breakdown.n_attempts += 1;
        }
        let remaining = leg.remaining;
        let mut still = 0;
        for _ in 0..remaining {
            if self.rng.random::<f64>() < p_fail {
                still += 1;
            }
        }
        let leg = &mut self.legs[leg_id as usize];
        leg.remaining = still;
        if still == 0 {
            self.finish_leg(now, leg_id, LegState::Delivered);
            return Ok(());
        }
        match retx {
            Retransmission::Harq { max_retx } if leg.retx_done < max_retx => {
                leg.retx_done += 1;
                leg.retx_from = Some(now);
                let nack = self.ctx.timing.nack_breakdown(now, leg.direction);
                self.start_attempt(now + nack.total(), leg_id, true)
            }
            _ => {
                self.finish_leg(now, leg_id, LegState::Failed);
                Ok(())
            }
        }
    }

    fn finish_leg(&mut self, now: Ticks, leg_id: u32, state: LegState) {
        let leg = &mut self.legs[leg_id as usize];
        leg.state = state;
        let (p, dir, b) = (leg.packet, leg.direction, leg.breakdown);
        let packet = &mut self.packets[p as usize];
        match dir {
            Direction::Uplink => {
                packet.ul = Some(b);
                let v = packet.vehicle as usize;
                if self.pending_ul[v] == Some(leg_id) {
                    self.pending_ul[v] = None;
                }
                if state == LegState::Delivered {
                    let jitter = if self.ctx.dl_transit.0 == 0 { 0 } else { self.rng.random_range(0..self.ctx.dl_transit.0) };
                    self.push(now + Ticks(jitter), Kind::DlArrive { packet: p });
                } else {
                    self.finish_packet(p, PacketDisposition::DeliveryFailed);
                }
            }
            Direction::Downlink => {
                packet.dl.push(b);
                packet.dl_left -= 1;
                packet.dl_failed |= state == LegState::Failed;
                if packet.dl_left == 0 {
                    let d = if packet.dl_failed { PacketDisposition::DeliveryFailed } else { PacketDisposition::Delivered };
                    self.finish_packet(p, d);
                }
            }
        }
    }

    /// Withdraws a leg that has not been transmitted: its DCI and future reservations.
    fn drop_leg(&mut self, now: Ticks, leg_id: u32) {
        let leg = &mut self.legs[leg_id as usize];
        if leg.state != LegState::Active {
            return;
        }
        leg.state = LegState::Dropped;
        if leg.dci_queued {
            self.queue.cancel(leg_id as u64);
            leg.dci_queued = false;
        }
        let grid = &mut self.grids[dir_index(leg.direction)];
        for p in std::mem::take(&mut leg.placements) {
            if p.start(grid.geometry()) > now {
                grid.cancel(leg_id as u64, &p);
            }
        }
        let packet = leg.packet as usize;
        let others: Vec<u32> = self.packets[packet].dl_legs.iter().copied().filter(|&l| l != leg_id).collect();
        for l in others {
            let other = &self.legs[l as usize];
            if other.state == LegState::Active && other.first_tx_end.is_none_or(|t| t > now) {
                self.drop_leg(now, l);
            }
        }
    }

    fn finish_packet(&mut self, packet: u32, d: PacketDisposition) {
        let p = &mut self.packets[packet as usize];
        if p.disposition.is_none() {
            p.disposition = Some(d);
        }
    }

    fn output(&self, record: bool) -> ReplicationOutput {
        let (lo, hi) = (self.ctx.warmup, self.ctx.horizon);
        let mut out = ReplicationOutput::default();
        for (id, p) in self.packets.iter().enumerate() {
            if p.generated < lo || p.generated >= hi {
                continue;
            }
            out.generated += 1;
            let d = p.disposition.expect("every packet is resolved once events drain");
            let mut l_radio = None;
            match d {
                PacketDisposition::Delivered => {
                    let ul = p.ul.expect("delivered packet has an UL leg").total();
                    let dl = p.dl.iter().map(LatencyBreakdown::total).max().expect("delivered packet has DL legs");
                    out.delivered += 1;
                    out.ul_total += ul.0;
                    out.dl_total += dl.0;
                    out.latencies.push((ul + dl).0 as u32);
                    l_radio = Some(ul + dl);
                }
                PacketDisposition::DroppedAtTx => out.dropped += 1,
                PacketDisposition::DeliveryFailed => out.failed += 1,
            }
            if p.infeasible {
                out.infeasible += 1;
            }
            if record {
                out.records.push(PacketRecord {
                    vehicle: p.vehicle,
                    packet: id as u64,
                    generated: p.generated,
                    ul: p.ul,
                    dl: p.dl.clone(),
                    l_radio,
                    disposition: d,
                });
            }
        }
        out.utilization_ul = self.grids[0].utilization(lo..hi);
        out.utilization_dl = self.grids[1].utilization(lo..hi);
        out
    }
}
