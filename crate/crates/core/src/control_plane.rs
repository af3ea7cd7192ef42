//! Dynamic-scheduling signalling: SR wait on PUCCH and the shared PDCCH DCI queue.

use crate::error::{Error, Result};
use crate::phy_profile::{Direction, ProcessingDelays};
use crate::resource_grid::{ControlConfig, GridGeometry};
use crate::time::Ticks;
use std::collections::VecDeque;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SrConfig {
    /// SRs carried per PUCCH occasion.
    pub r_sr: u32,
    /// Slots needed to give every UE one SR opportunity.
    pub n_slots_sr: u32,
}

impl SrConfig {
    pub fn new(control: &ControlConfig, n_ue: usize) -> Result<Self> {
        let r_sr = control.sr_capacity();
        if r_sr == 0 {
            return Err(Error::InvalidConfig("PUCCH reservation carries no SR".into()));
        }
        let n_slots_sr = if control.is_ideal() { 1 } else { (n_ue as u32).div_ceil(r_sr).max(1) };
        Ok(SrConfig { r_sr, n_slots_sr })
    }
}

/// SR waiting time for a uniform draw `p` in [0, 1].
pub fn sr_wait(p: f64, sr: &SrConfig, slot: Ticks) -> Ticks {
    if p <= 0.0 {
        return Ticks::ZERO;
    }
    let k = (p.min(1.0) * sr.n_slots_sr as f64).ceil() as u64;
    slot * (k.max(1) - 1)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ServedDci {
    pub id: u64,
    pub ready: Ticks,
    pub occasion: Ticks,
}

/// FIFO of DCIs waiting for PDCCH occasions, shared by UL grants and DL
/// assignments. At most `capacity` DCIs leave per occasion.
#[derive(Clone, Debug)]
pub struct DciQueue {
    capacity: Option<u32>,
    pending: VecDeque<(u64, Ticks)>,
    last_occasion: Option<Ticks>,
    served_at_last: u32,
}

impl DciQueue {
    /// `None` capacity is ideal control: every pending DCI leaves at the next occasion.
    pub fn new(capacity: Option<u32>) -> Result<Self> {
        if capacity == Some(0) {
            return Err(Error::InvalidConfig("PDCCH reservation fits no DCI".into()));
        }
        Ok(DciQueue { capacity, pending: VecDeque::new(), last_occasion: None, served_at_last: 0 })
    }

    pub fn for_control(control: &ControlConfig) -> Result<Self> {
        Self::new(control.dci_capacity())
    }

    pub fn len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pending.is_empty()
    }

    pub fn enqueue(&mut self, id: u64, ready: Ticks) {
        debug_assert!(self.pending.back().is_none_or(|&(_, t)| t <= ready));
        self.pending.push_back((id, ready));
    }

    /// Removes a DCI that no longer needs sending. Returns whether it was queued.
    pub fn cancel(&mut self, id: u64) -> bool {
        match self.pending.iter().position(|&(i, _)| i == id) {
            Some(pos) => {
                self.pending.remove(pos);
                true
            }
            None => false,
        }
    }

    /// Sends the DCIs leaving at PDCCH occasion `occasion`, in FIFO order.
    /// Only DCIs ready by the occasion are eligible.
    pub fn serve(&mut self, occasion: Ticks) -> Vec<ServedDci> {
        let already = if self.last_occasion == Some(occasion) { self.served_at_last } else { 0 };
        let room = self.capacity.map_or(u32::MAX, |c| c.saturating_sub(already));
        let mut out = Vec::new();
        while (out.len() as u32) < room {
            match self.pending.front() {
                Some(&(id, ready)) if ready <= occasion => {
                    self.pending.pop_front();
                    out.push(ServedDci { id, ready, occasion });
                }
                _ => break,
            }
        }
        if self.last_occasion == Some(occasion) {
            self.served_at_last += out.len() as u32;
        } else {
            self.last_occasion = Some(occasion);
            self.served_at_last = out.len() as u32;
        }
        out
    }

    /// Serves occasions from `first` onwards until `id` leaves; returns its occasion.
    /// DCIs ahead of it are served (and discarded) along the way.
    pub fn run_until_served(&mut self, id: u64, first: Ticks, slot: Ticks) -> Ticks {
        let mut occasion = first;
        loop {
            if self.serve(occasion).iter().any(|d| d.id == id) {
                return occasion;
            }
            occasion += slot;
        }
    }

    /// Occasion of every DCI of a sorted arrival trace, served on a fresh queue.
    pub fn drain_trace(capacity: Option<u32>, arrivals: &[Ticks], geometry: &GridGeometry) -> Result<Vec<Ticks>> {
        let mut q = DciQueue::new(capacity)?;
        let mut out = vec![Ticks::ZERO; arrivals.len()];
        let mut next = 0;
        let mut occasion = match arrivals.first() {
            Some(&t) => geometry.next_control_occasion(t),
            None => return Ok(out),
        };
        let mut done = 0;
        while done < arrivals.len() {
            while next < arrivals.len() && arrivals[next] <= occasion {
                q.enqueue(next as u64, arrivals[next]);
                next += 1;
            }
            for d in q.serve(occasion) {
                out[d.id as usize] = occasion;
                done += 1;
            }
            occasion = if q.is_empty() && next < arrivals.len() {
                geometry.next_control_occasion(arrivals[next]).max(occasion + geometry.slot_ticks)
            } else {
                occasion + geometry.slot_ticks
            };
        }
        Ok(out)
    }
}

/// Time from DCI arrival at the queue to the PDCCH occasion that carries it.
pub fn pdcch_queue_delay(dci_arrival: Ticks, id: u64, queue: &mut DciQueue, dl: &GridGeometry) -> Ticks {
    queue.enqueue(id, dci_arrival);
    let first = dl.next_control_occasion(dci_arrival);
    queue.run_until_served(id, first, dl.slot_ticks) - dci_arrival
}

/// One control message exchange: processing, alignment, waiting, air time, processing.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SchedBreakdown {
    pub t_p_tx: Ticks,
    pub t_fa: Ticks,
    /// Queueing (PDCCH) or SR-slot wait (PUCCH).
    pub t_wait: Ticks,
    pub t_tt: Ticks,
    pub t_p_rx: Ticks,
}

impl SchedBreakdown {
    pub fn total(&self) -> Ticks {
        self.t_p_tx + self.t_fa + self.t_wait + self.t_tt + self.t_p_rx
    }
}

/// Geometry and processing constants for control signalling.
#[derive(Clone, Debug)]
pub struct ControlTiming {
    pub ul: GridGeometry,
    pub dl: GridGeometry,
    pub delays: ProcessingDelays,
}

impl ControlTiming {
    pub fn geometry(&self, direction: Direction) -> &GridGeometry {
        match direction {
            Direction::Uplink => &self.ul,
            Direction::Downlink => &self.dl,
        }
    }

    /// Processing before the DCI joins the queue, returning the enqueue time.
    pub fn dci_ready(&self, ready: Ticks) -> Ticks {
        ready + self.delays.ctrl_tx
    }

    /// DCI breakdown once the occasion carrying it is known.
    pub fn dci_breakdown(&self, dci_ready: Ticks, occasion: Ticks) -> SchedBreakdown {
        let first = self.dl.next_control_occasion(dci_ready);
        SchedBreakdown {
            t_p_tx: self.delays.ctrl_tx,
            t_fa: first - dci_ready,
            t_wait: occasion - first,
            t_tt: self.dl.control_duration(),
            t_p_rx: self.delays.ctrl_rx,
        }
    }

    /// SR exchange for a UL packet ready at `ready`.
    pub fn sr_breakdown(&self, ready: Ticks, sr: &SrConfig, p: f64) -> SchedBreakdown {
        let sr_ready = ready + self.delays.ctrl_tx;
        let occasion = self.ul.next_control_occasion(sr_ready);
        SchedBreakdown {
            t_p_tx: self.delays.ctrl_tx,
            t_fa: occasion - sr_ready,
            t_wait: sr_wait(p, sr, self.ul.slot_ticks),
            t_tt: self.ul.control_duration(),
            t_p_rx: self.delays.ctrl_rx,
        }
    }

    /// HARQ feedback for a failed `direction` leg: PUCCH for UL, PDCCH for
    /// DL, with no resource waiting.
    pub fn nack_breakdown(&self, decoded: Ticks, direction: Direction) -> SchedBreakdown {
        let g = self.geometry(direction);
        let ready = decoded + self.delays.ctrl_tx;
        SchedBreakdown {
            t_p_tx: self.delays.ctrl_tx,
            t_fa: g.next_control_occasion(ready) - ready,
            t_wait: Ticks::ZERO,
            t_tt: g.control_duration(),
            t_p_rx: self.delays.ctrl_rx,
        }
    }
}

/// DL scheduling latency (DCI assignment), running the queue forward.
pub fn sched_latency_dl(ready: Ticks, id: u64, timing: &ControlTiming, queue: &mut DciQueue) -> SchedBreakdown {
    let dci_ready = timing.dci_ready(ready);
    queue.enqueue(id, dci_ready);
    let first = timing.dl.next_control_occasion(dci_ready);
    let occasion = queue.run_until_served(id, first, timing.dl.slot_ticks);
    timing.dci_breakdown(dci_ready, occasion)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct UlSchedBreakdown {
    pub sr: SchedBreakdown,
    pub grant: SchedBreakdown,
}

impl UlSchedBreakdown {
    pub fn total(&self) -> Ticks {
        self.sr.total() + self.grant.total()
    }
}

/// UL scheduling latency: SR then grant, running the queue forward.
pub fn sched_latency_ul(
    ready: Ticks,
    id: u64,
    p: f64,
    sr: &SrConfig,
    timing: &ControlTiming,
    queue: &mut DciQueue,
) -> UlSchedBreakdown {
    let sr_part = timing.sr_breakdown(ready, sr, p);
    let grant = sched_latency_dl(ready + sr_part.total(), id, timing, queue);
    UlSchedBreakdown { sr: sr_part, grant }
}
