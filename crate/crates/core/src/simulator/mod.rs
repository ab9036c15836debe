//! Discrete-event simulation of the multi-packet CSMA/CA protocol.
//!
//! Time is integer µs. The channel advances on a shared slot grid: at every
//! slot boundary each contending node whose backoff counter is zero starts a
//! transmission. An idle slot lasts σ; a busy slot lasts the transmission
//! (or collision) time plus DIFS plus one empty slot σ. Every slot, busy or
//! idle, counts as one backoff decrement for the nodes not transmitting in it.
//!
//! Runs of idle slots are skipped in one step, stopping early at the slot
//! boundary where a pending arrival could wake an idle node.
//!
//! Randomness: node `n` owns two ChaCha8 streams of the run seed, one for
//! its arrival process (inter-arrival times, then destination) and one for
//! its MAC (backoff draws, then per-packet error coins in packet order).

mod stats;
mod trace;

pub use stats::{Aggregate, SimStats};
pub use trace::{CsvTrace, TraceEvent, TraceKind, TraceSink, TRACE_HEADER};

use std::cmp::Reverse;
use std::collections::{BinaryHeap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::queue_model::batch_size_policy;
use crate::scenario::Scenario;
use crate::ScenarioConfig;
use stats::bump;

const ARRIVAL_STREAM_BASE: u64 = 1 << 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimOptions {
    pub seed: u64,
    pub sim_time_us: u64,
    pub warmup_us: u64,
    /// Check channel exclusivity on every transmission.
    pub audit: bool,
}

impl SimOptions {
    /// Window with the first 10% of `sim_time_us` discarded as warmup.
    pub fn new(seed: u64, sim_time_us: u64) -> Self {
        SimOptions {
            seed,
            sim_time_us,
            warmup_us: sim_time_us / 10,
            audit: false,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Packet {
    arrival: u64,
    #[allow(dead_code)]
    destination: Option<usize>,
}

#[derive(Debug, Clone)]
struct Batch {
    acked: Vec<bool>,
    start: u64,
    retries: u32,
}

impl Batch {
    fn unacked(&self) -> usize {
        self.acked.iter().filter(|a| !**a).count()
    }
}

struct Node {
    queue: VecDeque<Packet>,
    batch: Option<Batch>,
    backoff: u32,
    mac_rng: ChaCha8Rng,
    arrival_rng: ChaCha8Rng,
    arrival_clock: f64,
    last_change: u64,
}

struct Sim<'a, 't> {
    scn: &'a Scenario,
    opts: SimOptions,
    nodes: Vec<Node>,
    arrivals: BinaryHeap<Reverse<(u64, usize)>>,
    inter_arrival: Exp<f64>,
    stats: SimStats,
    trace: Option<&'t mut dyn TraceSink>,
    busy_until: u64,
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

impl<'a, 't> Sim<'a, 't> {
    fn new(scn: &'a Scenario, opts: SimOptions, trace: Option<&'t mut dyn TraceSink>) -> Result<Self> {
        let cfg = &scn.config;
        let inter_arrival = Exp::new(cfg.arrival_rate * 1e-6)
            .map_err(|e| Error::InvalidConfig(format!("arrival rate: {e}")))?;
        let nodes = (0..cfg.n_nodes as u64)
            .map(|n| Node {
                queue: VecDeque::with_capacity(cfg.buffer_size),
                batch: None,
                backoff: 0,
                mac_rng: stream(opts.seed, n),
                arrival_rng: stream(opts.seed, ARRIVAL_STREAM_BASE + n),
                arrival_clock: 0.0,
                last_change: 0,
            })
            .collect();
        let stats = SimStats {
            seed: opts.seed,
            n_nodes: cfg.n_nodes,
            warmup_us: opts.warmup_us,
            sim_end_us: opts.sim_time_us,
            service_by_size: vec![(0, 0); cfg.s_max + 1],
            ..SimStats::default()
        };
        let mut sim = Sim {
            scn,
            opts,
            nodes,
            arrivals: BinaryHeap::new(),
            inter_arrival,
            stats,
            trace,
            busy_until: 0,
        };
        for n in 0..cfg.n_nodes {
            sim.schedule_arrival(n);
        }
        Ok(sim)
    }

    fn cfg(&self) -> &ScenarioConfig {
        &self.scn.config
    }

    fn in_window(&self, t: u64) -> bool {
        t >= self.opts.warmup_us && t < self.opts.sim_time_us
    }

    fn emit(&mut self, timestamp_us: u64, kind: TraceKind, node: usize, m: usize, outcome: String) -> Result<()> {
        if let Some(sink) = self.trace.as_mut() {
            sink.record(&TraceEvent { timestamp_us, kind, node, m, outcome })?;
        }
        Ok(())
    }

    fn schedule_arrival(&mut self, n: usize) {
        let node = &mut self.nodes[n];
        node.arrival_clock += self.inter_arrival.sample(&mut node.arrival_rng);
        let t = node.arrival_clock.round() as u64;
        self.arrivals.push(Reverse((t, n)));
    }

    fn next_arrival(&self) -> Option<u64> {
        self.arrivals
            .peek()
            .map(|Reverse((t, _))| *t)
            .filter(|t| *t < self.opts.sim_time_us)
    }

    /// Integrates node `n`'s occupancy up to `now`, clipped to the window.
    fn touch(&mut self, n: usize, now: u64) -> Result<()> {
        let s_min = self.cfg().s_min;
        let node = &mut self.nodes[n];
        let lo = node.last_change.max(self.opts.warmup_us);
        let hi = now.min(self.opts.sim_time_us);
        node.last_change = now;
        if hi > lo {
            let q = node.queue.len() as u64;
            bump(&mut self.stats.queue_area_w, q * (hi - lo))?;
            if node.queue.len() >= s_min {
                bump(&mut self.stats.ready_time_w, hi - lo)?;
            }
        }
        Ok(())
    }

    /// Handles every arrival at or before `until` (and before the end of the run).
    fn process_arrivals(&mut self, until: u64) -> Result<()> {
        while let Some(&Reverse((t, n))) = self.arrivals.peek() {
            if t > until || t >= self.opts.sim_time_us {
                break;
            }
            self.arrivals.pop();
            self.arrive(n, t)?;
            self.schedule_arrival(n);
        }
        Ok(())
    }

    fn arrive(&mut self, n: usize, t: u64) -> Result<()> {
        let n_nodes = self.cfg().n_nodes;
        let destination = (n_nodes > 1).then(|| {
            let d = self.nodes[n].arrival_rng.random_range(0..n_nodes - 1);
            if d >= n {
                d + 1
            } else {
                d
            }
        });
        let windowed = self.in_window(t);
        bump(&mut self.stats.total_arrivals, 1)?;
        if windowed {
            bump(&mut self.stats.arrivals_w, 1)?;
        }
        if self.nodes[n].queue.len() >= self.cfg().buffer_size {
            bump(&mut self.stats.blocked, 1)?;
            if windowed {
                bump(&mut self.stats.blocked_w, 1)?;
            }
            return self.emit(t, TraceKind::Block, n, 0, "queue_full".into());
        }
        self.touch(n, t)?;
        self.nodes[n].queue.push_back(Packet { arrival: t, destination });
        if self.nodes[n].batch.is_none() && self.nodes[n].queue.len() >= self.cfg().s_min {
            self.start_batch(n, t);
        }
        Ok(())
    }

    fn draw_backoff(&mut self, n: usize) {
        let cw = self.cfg().cw;
        let node = &mut self.nodes[n];
        node.backoff = node.mac_rng.random_range(0..cw);
    }

    fn start_batch(&mut self, n: usize, now: u64) {
        let cfg = self.cfg();
        let s = batch_size_policy(self.nodes[n].queue.len(), cfg.s_min, cfg.s_max);
        self.nodes[n].batch = Some(Batch {
            acked: vec![false; s],
            start: now,
            retries: 0,
        });
        self.draw_backoff(n);
    }

    /// Removes the batch from the head of the queue. Acknowledged packets
    /// count as delivered, the rest as discarded.
    fn finish_batch(&mut self, n: usize, now: u64) -> Result<()> {
        self.touch(n, now)?;
        let batch = self.nodes[n].batch.take().expect("finishing node has a batch");
        let windowed = self.in_window(now);
        let s = batch.acked.len();
        let mut dropped = 0;
        for acked in &batch.acked {
            let packet = self.nodes[n].queue.pop_front().expect("batch packets are queued");
            if *acked {
                bump(&mut self.stats.delivered, 1)?;
                if windowed {
                    bump(&mut self.stats.delivered_w, 1)?;
                    bump(&mut self.stats.sum_delay_us_w, now - packet.arrival)?;
                }
            } else {
                dropped += 1;
                bump(&mut self.stats.discarded, 1)?;
                if windowed {
                    bump(&mut self.stats.discarded_w, 1)?;
                }
            }
        }
        if dropped == 0 {
            if windowed {
                let service = now - batch.start;
                self.stats.service_samples.push(service);
                let (sum, count) = &mut self.stats.service_by_size[s];
                bump(sum, service)?;
                bump(count, 1)?;
            }
            self.emit(now, TraceKind::Departure, n, s, "acked".into())?;
        } else {
            self.emit(now, TraceKind::Discard, n, dropped, "retry_limit".into())?;
        }
        if self.nodes[n].queue.len() >= self.cfg().s_min {
            self.start_batch(n, now);
        }
        Ok(())
    }

    /// After an unsuccessful attempt: back off again or give up.
    fn retry(&mut self, n: usize, now: u64) -> Result<()> {
        let limit = self.cfg().retry_limit;
        let batch = self.nodes[n].batch.as_mut().expect("retrying node has a batch");
        batch.retries += 1;
        if limit.is_some_and(|l| batch.retries > l) {
            self.finish_batch(n, now)
        } else {
            self.draw_backoff(n);
            Ok(())
        }
    }

    fn run(mut self) -> Result<SimStats> {
        let sigma = self.cfg().slot_sigma;
        let end = self.opts.sim_time_us;
        let mut t = 0u64;
        loop {
            self.process_arrivals(t)?;
            if t >= end {
                break;
            }
            let cmin = self.nodes.iter().filter(|n| n.batch.is_some()).map(|n| n.backoff).min();
            match cmin {
                None => match self.next_arrival() {
                    Some(ta) => t += (ta - t).div_ceil(sigma) * sigma,
                    None => break,
                },
                Some(c) if c > 0 => {
                    let mut k = c as u64;
                    if let Some(ta) = self.next_arrival() {
                        k = k.min((ta - t).div_ceil(sigma));
                    }
                    for node in self.nodes.iter_mut().filter(|n| n.batch.is_some()) {
                        node.backoff -= k as u32;
                    }
                    t += k * sigma;
                }
                Some(_) => match self.busy_slot(t)? {
                    Some(next) => t = next,
                    None => break,
                },
            }
        }
        self.process_arrivals(end - 1)?;
        for n in 0..self.nodes.len() {
            self.touch(n, end)?;
        }
        self.stats.queued_at_end = self.nodes.iter().map(|n| n.queue.len() as u64).sum();
        assert!(
            self.stats.is_conserved(),
            "packet conservation violated: {:?}",
            (
                self.stats.total_arrivals,
                self.stats.delivered,
                self.stats.blocked,
                self.stats.discarded,
                self.stats.queued_at_end
            )
        );
        Ok(self.stats)
    }

    /// Plays out one busy slot starting at `t`. Returns the next slot
    /// boundary, or `None` if the slot would not finish within the run.
    fn busy_slot(&mut self, t: u64) -> Result<Option<u64>> {
        let cfg = &self.scn.config;
        let timing = &self.scn.timing;
        let senders: Vec<usize> = (0..self.nodes.len())
            .filter(|&n| self.nodes[n].batch.is_some() && self.nodes[n].backoff == 0)
            .collect();
        let sizes: Vec<usize> = senders
            .iter()
            .map(|&n| self.nodes[n].batch.as_ref().unwrap().unacked())
            .collect();
        let collision = senders.len() > 1;
        let m_max = *sizes.iter().max().expect("at least one sender");
        let channel = if collision {
            timing.t_data(m_max) + timing.ack_timeout
        } else {
            timing.t_cf(m_max)
        };
        let slot_end = t + channel + cfg.difs + cfg.slot_sigma;
        if slot_end > self.opts.sim_time_us {
            return Ok(None);
        }
        if self.opts.audit {
            if t < self.busy_until {
                return Err(Error::ChannelAudit(format!(
                    "transmission at {t} us overlaps busy period ending at {} us",
                    self.busy_until
                )));
            }
            if senders.iter().zip(&sizes).any(|(&n, &m)| m == 0 || self.nodes[n].queue.len() < m) {
                return Err(Error::ChannelAudit(format!("inconsistent batch at {t} us")));
            }
        }
        self.busy_until = t + channel;

        if self.in_window(t) {
            bump(&mut self.stats.tx_attempts_w, senders.len() as u64)?;
            if collision {
                bump(&mut self.stats.collided_attempts_w, senders.len() as u64)?;
            }
        }
        for (&n, &m) in senders.iter().zip(&sizes) {
            self.emit(t, TraceKind::TxStart, n, m, if collision { "collision" } else { "clear" }.into())?;
            if collision {
                self.emit(t, TraceKind::Collision, n, m, format!("senders={}", senders.len()))?;
            }
        }
        for node in self.nodes.iter_mut().filter(|n| n.batch.is_some() && n.backoff > 0) {
            node.backoff -= 1;
        }

        self.process_arrivals(slot_end - 1)?;

        let tx_end = t + channel;
        for (&n, &m) in senders.iter().zip(&sizes) {
            if collision {
                self.emit(tx_end, TraceKind::TxEnd, n, m, "collided".into())?;
                self.retry(n, slot_end)?;
                continue;
            }
            let per = self.scn.per.get(m);
            let node = &mut self.nodes[n];
            let batch = node.batch.as_mut().unwrap();
            let mut acked_now = 0;
            for flag in batch.acked.iter_mut().filter(|a| !**a) {
                if node.mac_rng.random::<f64>() >= per {
                    *flag = true;
                    acked_now += 1;
                }
            }
            let done = acked_now == m;
            self.emit(tx_end, TraceKind::TxEnd, n, m, format!("acked={acked_now}/{m}"))?;
            if done {
                self.finish_batch(n, slot_end)?;
            } else {
                self.retry(n, slot_end)?;
            }
        }
        Ok(Some(slot_end))
    }
}

/// Simulates `scn` over `[0, opts.sim_time_us)`.
pub fn simulate(scn: &Scenario, opts: &SimOptions, trace: Option<&mut dyn TraceSink>) -> Result<SimStats> {
    if opts.warmup_us >= opts.sim_time_us {
        return Err(Error::InvalidWindow {
            warmup_us: opts.warmup_us,
            sim_time_us: opts.sim_time_us,
        });
    }
    scn.config.validate()?;
    Sim::new(scn, *opts, trace)?.run()
}

pub fn run(cfg: &ScenarioConfig, seed: u64, sim_time_us: u64, warmup_us: u64) -> Result<SimStats> {
    let scn = Scenario::new(cfg.clone())?;
    let opts = SimOptions {
        seed,
        sim_time_us,
        warmup_us,
        audit: false,
    };
    simulate(&scn, &opts, None)
}

/// Per-metric summaries across independent replications.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Replication {
    pub runs: Vec<SimStats>,
    pub throughput: Aggregate,
    pub delay: Aggregate,
    pub blocking: Aggregate,
    pub collision: Aggregate,
    pub rho: Aggregate,
    pub mean_queue: Aggregate,
}

impl Replication {
    pub fn from_runs(runs: Vec<SimStats>) -> Result<Self> {
        let agg = |f: fn(&SimStats) -> f64| Aggregate::from_samples(&runs.iter().map(f).collect::<Vec<_>>());
        Ok(Replication {
            throughput: agg(SimStats::throughput)?,
            delay: agg(SimStats::delay_s)?,
            blocking: agg(SimStats::blocking_prob)?,
            collision: agg(SimStats::collision_prob)?,
            rho: agg(SimStats::rho)?,
            mean_queue: agg(SimStats::mean_queue)?,
            runs,
        })
    }
}

/// Runs one replication per seed in parallel; results keep seed order.
pub fn replicate(scn: &Scenario, seeds: &[u64], sim_time_us: u64, warmup_us: u64) -> Result<Replication> {
    if seeds.len() < 2 {
        return Err(Error::TooFewSeeds(seeds.len()));
    }
    let runs = seeds
        .par_iter()
        .map(|&seed| {
            let opts = SimOptions {
                seed,
                sim_time_us,
                warmup_us,
                audit: false,
            };
            simulate(scn, &opts, None)
        })
        .collect::<Result<Vec<_>>>()?;
    Replication::from_runs(runs)
}
