//! Exact simulation of the labelled branching random walk in a random
//! environment, killed on the boundary of nested boxes.
//!
//! Each particle jumps to each nearest neighbour at rate `n²`, branches at
//! rate `(ξ_e)_+` and dies at rate `(ξ_e)_−` of its current site. The ambient
//! process is absorbed on the boundary of the simulation box; smaller boxes
//! are obtained afterwards from the recorded paths.

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeMap, BinaryHeap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Field, LatticeSpec};

/// Integer lattice point `n·x`.
pub type Point = [i32; 2];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum EventKind {
    Jump = 0,
    Birth = 1,
    Death = 2,
    Killed = 3,
}

impl EventKind {
    pub fn from_code(c: u8) -> Option<Self> {
        match c {
            0 => Some(EventKind::Jump),
            1 => Some(EventKind::Birth),
            2 => Some(EventKind::Death),
            3 => Some(EventKind::Killed),
            _ => None,
        }
    }
}

/// One event: for `Birth` the id is the newborn's.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub id: u64,
    pub kind: EventKind,
    pub site: Point,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EndCause {
    Died,
    /// Absorbed on the boundary of the simulation box.
    Killed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleRecord {
    pub id: u64,
    pub parent: Option<u64>,
    pub birth_time: f64,
    pub birth_site: Point,
    /// `(time, new site)` for every jump, in time order.
    pub jumps: Vec<(f64, Point)>,
    /// `None` while alive at the horizon.
    pub end: Option<(f64, EndCause)>,
}

impl ParticleRecord {
    pub fn end_time(&self) -> f64 {
        self.end.map_or(f64::INFINITY, |(t, _)| t)
    }

    pub fn site_at(&self, t: f64) -> Point {
        let i = self.jumps.partition_point(|(s, _)| *s <= t);
        if i == 0 {
            self.birth_site
        } else {
            self.jumps[i - 1].1
        }
    }

    /// Whether the particle is alive at `t`, i.e. `birth ≤ t < end`.
    pub fn alive_at(&self, t: f64) -> bool {
        self.birth_time <= t && t < self.end_time()
    }

    /// Constant-site pieces `(t0, t1, site)` of the path inside `[birth, min(end, until))`.
    pub fn segments(&self, until: f64) -> impl Iterator<Item = (f64, f64, Point)> + '_ {
        let stop = self.end_time().min(until);
        let starts = std::iter::once((self.birth_time, self.birth_site)).chain(self.jumps.iter().copied());
        let ends = self.jumps.iter().map(|(t, _)| *t).chain(std::iter::once(f64::INFINITY));
        starts
            .zip(ends)
            .map(move |((t0, z), t1)| (t0, t1.min(stop), z))
            .filter(|(t0, t1, _)| t1 > t0)
    }

    /// First time at or after birth that the particle stands at sup-radius ≥ `r`.
    fn first_radius_hit(&self, r: i32) -> f64 {
        if radius(self.birth_site) >= r {
            return self.birth_time;
        }
        self.jumps
            .iter()
            .find(|(_, z)| radius(*z) >= r)
            .map_or(f64::INFINITY, |(t, _)| *t)
    }
}

fn radius(z: Point) -> i32 {
    z[0].abs().max(z[1].abs())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelledState {
    pub positions: Vec<Point>,
    pub clock: f64,
}

/// `⌊n^{d/2}⌋`.
pub fn initial_count(n: usize, d: usize) -> usize {
    match d {
        2 => n,
        _ => {
            let mut r = (n as f64).sqrt() as usize;
            while (r + 1) * (r + 1) <= n {
                r += 1;
            }
            while r * r > n {
                r -= 1;
            }
            r
        }
    }
}

/// `⌊n^{d/2}⌋` particles at the origin at time 0.
pub fn init_state(spec: &LatticeSpec) -> LabelledState {
    LabelledState {
        positions: vec![[0, 0]; initial_count(spec.n(), spec.d())],
        clock: 0.0,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationConfig {
    pub horizon: f64,
    pub seed: u64,
    pub population_cap: usize,
    pub record_events: bool,
}

impl SimulationConfig {
    pub fn new(horizon: f64, seed: u64) -> Self {
        Self {
            horizon,
            seed,
            population_cap: 1_000_000,
            record_events: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationOutcome {
    /// Simulation box; particles are absorbed on its boundary.
    pub spec: LatticeSpec,
    pub horizon: f64,
    pub seed: u64,
    pub records: Vec<ParticleRecord>,
    pub events: Vec<Event>,
    pub exploded: bool,
    pub event_count: u64,
    pub initial_count: usize,
}

impl SimulationOutcome {
    /// Weight `1/⌊n^{d/2}⌋` of one particle in the empirical measure.
    pub fn weight(&self) -> f64 {
        1.0 / self.initial_count as f64
    }

    pub fn live_count(&self, t: f64) -> usize {
        self.records.iter().filter(|r| r.alive_at(t)).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Clock(f64, u64);

impl Eq for Clock {}

impl PartialOrd for Clock {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Clock {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

struct Rates {
    spec: LatticeSpec,
    jump: f64,
    birth: Vec<f64>,
    total: Vec<f64>,
}

impl Rates {
    fn new(potential: &Field) -> Self {
        let spec = *potential.spec();
        let n = spec.n() as f64;
        let jump = 2.0 * spec.d() as f64 * n * n;
        let birth: Vec<f64> = potential.values().iter().map(|v| v.max(0.0)).collect();
        let total = potential.values().iter().map(|v| jump + v.abs()).collect();
        Self {
            spec,
            jump,
            birth,
            total,
        }
    }

    fn point(&self, s: usize) -> Point {
        let z = self.spec.lattice_point(s);
        [z[0] as i32, z[1] as i32]
    }

    /// Neighbour number `k ∈ 0..2d` of an interior site.
    fn neighbor(&self, s: usize, k: usize) -> usize {
        let mut i = self.spec.multi_index(s);
        let axis = k / 2;
        if k % 2 == 0 {
            i[axis] -= 1;
        } else {
            i[axis] += 1;
        }
        self.spec.index(i)
    }
}

/// Runs one replica from `⌊n^{d/2}⌋` particles at the origin. Rates are read
/// from `potential` (`ξ_e` on the simulation box).
pub fn simulate(potential: &Field, cfg: &SimulationConfig) -> Result<SimulationOutcome> {
    let spec = *potential.spec();
    if !spec.centered() {
        return Err(Error::InvalidArgument("simulation box must be centered".into()));
    }
    if !(cfg.horizon >= 0.0) || !cfg.horizon.is_finite() {
        return Err(Error::InvalidArgument(format!("horizon must be nonnegative, got {}", cfg.horizon)));
    }
    let origin = spec
        .origin()
        .ok_or_else(|| Error::InvalidArgument("box does not contain the origin".into()))?;
    let rates = Rates::new(potential);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = init_state(&spec);
    let m = init.positions.len();

    let mut records: Vec<ParticleRecord> = Vec::with_capacity(m);
    let mut site_of: Vec<usize> = Vec::with_capacity(m);
    let mut heap = BinaryHeap::new();
    let mut events = Vec::new();
    let mut live = m;
    let mut exploded = false;
    let mut event_count = 0u64;

    let schedule = |heap: &mut BinaryHeap<Reverse<Clock>>, rng: &mut ChaCha8Rng, now: f64, id: u64, rate: f64| {
        let e: f64 = rng.sample(Exp1);
        heap.push(Reverse(Clock(now + e / rate, id)));
    };

    for id in 0..m as u64 {
        records.push(ParticleRecord {
            id,
            parent: None,
            birth_time: 0.0,
            birth_site: [0, 0],
            jumps: Vec::new(),
            end: None,
        });
        site_of.push(origin);
        schedule(&mut heap, &mut rng, 0.0, id, rates.total[origin]);
    }

    while let Some(Reverse(Clock(t, id))) = heap.pop() {
        if t > cfg.horizon {
            break;
        }
        event_count += 1;
        let i = id as usize;
        let s = site_of[i];
        let u = rng.random::<f64>() * rates.total[s];
        if u < rates.jump {
            let k = rng.random_range(0..2 * spec.d());
            let to = rates.neighbor(s, k);
            let z = rates.point(to);
            site_of[i] = to;
            records[i].jumps.push((t, z));
            if cfg.record_events {
                events.push(Event { time: t, id, kind: EventKind::Jump, site: z });
            }
            if spec.is_boundary(to) {
                records[i].end = Some((t, EndCause::Killed));
                live -= 1;
                if cfg.record_events {
                    events.push(Event { time: t, id, kind: EventKind::Killed, site: z });
                }
            } else {
                schedule(&mut heap, &mut rng, t, id, rates.total[to]);
            }
        } else if u < rates.jump + rates.birth[s] {
            let child = records.len() as u64;
            let z = rates.point(s);
            records.push(ParticleRecord {
                id: child,
                parent: Some(id),
                birth_time: t,
                birth_site: z,
                jumps: Vec::new(),
                end: None,
            });
            site_of.push(s);
            live += 1;
            if cfg.record_events {
                events.push(Event { time: t, id: child, kind: EventKind::Birth, site: z });
            }
            schedule(&mut heap, &mut rng, t, id, rates.total[s]);
            schedule(&mut heap, &mut rng, t, child, rates.total[s]);
            if live > cfg.population_cap {
                exploded = true;
                break;
            }
        } else {
            records[i].end = Some((t, EndCause::Died));
            live -= 1;
            if cfg.record_events {
                events.push(Event { time: t, id, kind: EventKind::Death, site: rates.point(s) });
            }
        }
    }

    Ok(SimulationOutcome {
        spec,
        horizon: cfg.horizon,
        seed: cfg.seed,
        records,
        events,
        exploded,
        event_count,
        initial_count: m,
    })
}

/// Runs one replica per seed in parallel and reduces each with `summarize`;
/// results come back in seed order.
pub fn run_replicas<T, F>(potential: &Field, base: &SimulationConfig, seeds: &[u64], summarize: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(SimulationOutcome) -> Result<T> + Sync,
{
    seeds
        .par_iter()
        .map(|&seed| {
            let cfg = SimulationConfig { seed, ..base.clone() };
            summarize(simulate(potential, &cfg)?)
        })
        .collect()
}

/// First hitting times `τ^L_i` of `∂Λ^L` along the ancestral line, per box
/// side and particle.
#[derive(Debug, Clone, PartialEq)]
pub struct KillSchedule {
    pub ls: Vec<usize>,
    /// `tau[a][i]` for box `ls[a]` and particle `i`; infinite if never hit.
    pub tau: Vec<Vec<f64>>,
}

impl KillSchedule {
    pub fn compute(outcome: &SimulationOutcome, ls: &[usize]) -> Result<Self> {
        let spec = outcome.spec;
        for &l in ls {
            if l == 0 || l % 2 != 0 || l > spec.l() {
                return Err(Error::InvalidArgument(format!(
                    "box side {l} must be even and at most {}",
                    spec.l()
                )));
            }
        }
        let tau = ls
            .iter()
            .map(|&l| {
                let r = (l * spec.n() / 2) as i32;
                let mut out = Vec::with_capacity(outcome.records.len());
                for rec in &outcome.records {
                    let own = rec.first_radius_hit(r);
                    let t = match rec.parent {
                        Some(p) if out[p as usize] <= rec.birth_time => out[p as usize],
                        _ => own,
                    };
                    out.push(t);
                }
                out
            })
            .collect();
        Ok(Self { ls: ls.to_vec(), tau })
    }

    pub fn for_box(&self, l: usize) -> Option<&[f64]> {
        self.ls.iter().position(|&x| x == l).map(|a| self.tau[a].as_slice())
    }
}

/// Atom masses of `μ^{n,L}_t` keyed by lattice point.
pub type Atoms = BTreeMap<Point, f64>;

#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalMeasurePath {
    pub times: Vec<f64>,
    pub ls: Vec<usize>,
    pub weight: f64,
    /// `snapshots[time][box]`.
    pub snapshots: Vec<Vec<Atoms>>,
}

impl EmpiricalMeasurePath {
    pub fn total_mass(&self, time: usize, box_index: usize) -> f64 {
        self.snapshots[time][box_index].values().sum()
    }
}

/// Projects the run onto `μ^{n,L}` for every requested box at the snapshot times.
pub fn kill_and_project(outcome: &SimulationOutcome, ls: &[usize], times: &[f64]) -> Result<EmpiricalMeasurePath> {
    let schedule = KillSchedule::compute(outcome, ls)?;
    project_with_schedule(outcome, &schedule, times)
}

/// Projection with an explicit kill schedule.
pub fn project_with_schedule(
    outcome: &SimulationOutcome,
    schedule: &KillSchedule,
    times: &[f64],
) -> Result<EmpiricalMeasurePath> {
    if let Some(t) = times.iter().find(|t| !(**t >= 0.0 && **t <= outcome.horizon)) {
        return Err(Error::InvalidArgument(format!(
            "snapshot time {t} outside [0, {}]",
            outcome.horizon
        )));
    }
    let w = outcome.weight();
    let snapshots = times
        .iter()
        .map(|&t| {
            schedule
                .tau
                .iter()
                .map(|tau| {
                    let mut atoms = Atoms::new();
                    for (rec, &k) in outcome.records.iter().zip(tau) {
                        if rec.alive_at(t) && t < k {
                            *atoms.entry(rec.site_at(t)).or_insert(0.0) += w;
                        }
                    }
                    atoms
                })
                .collect()
        })
        .collect();
    Ok(EmpiricalMeasurePath {
        times: times.to_vec(),
        ls: schedule.ls.clone(),
        weight: w,
        snapshots,
    })
}
