//! Headway-constrained vehicle kinematics, projection and frame output.

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use xroads_core::model::{ClassId, Detection, FramePacket};
use xroads_core::protocol::FORMAT_VERSION;
use xroads_core::{BBox, Point};

use crate::scenario::{Aspect, Scenario};
use crate::truth::{mean_speed, od_cells, GroundTruthBundle, GtSample, GtTrack, LoopTally};
use crate::{stream_rng, SimError, STREAM_ARRIVALS, STREAM_KINEMATICS};

/// Minimum standstill gap between consecutive vehicles (m).
pub const MIN_GAP_M: f64 = 2.0;
/// Time headway added to the standstill gap (s).
pub const HEADWAY_S: f64 = 1.0;

#[derive(Debug, Clone)]
struct Pending {
    class: usize,
    route: usize,
    v_des: f64,
}

#[derive(Debug, Clone)]
struct Vehicle {
    id: u64,
    class: usize,
    route: usize,
    v_des: f64,
    /// Arc length of the front.
    s: f64,
    v: f64,
    track: usize,
}

/// Vehicle state as rendered in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthBox {
    pub vehicle_id: u64,
    pub class: ClassId,
    pub bbox: BBox,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameOutput {
    /// Noise-free detections.
    pub packet: FramePacket,
    pub truth: Vec<TruthBox>,
}

/// Incremental simulation; [`simulate`] drives it for a whole scenario.
#[derive(Debug, Clone)]
pub struct SimRun {
    sc: Scenario,
    seed: u64,
    class_ids: Vec<ClassId>,
    frame: u64,
    arrivals: ChaCha8Rng,
    kinematics: ChaCha8Rng,
    /// `[approach][class]` base rate, multiplier and next arrival time.
    base_rates: Vec<Vec<f64>>,
    scale: Vec<f64>,
    next_arrival: Vec<Vec<f64>>,
    pending: Vec<VecDeque<Pending>>,
    /// Per approach, leader first.
    active: Vec<Vec<Vehicle>>,
    next_id: u64,
    tracks: Vec<GtTrack>,
    tallies: Vec<LoopTally>,
}

impl SimRun {
    pub fn new(sc: Scenario, seed: u64) -> Result<Self, SimError> {
        sc.validate()?;
        let classes = sc.classes()?;
        let class_ids = sc
            .vehicle_classes
            .iter()
            .map(|vc| classes.id(&vc.name).expect("validated class"))
            .collect();
        let base_rates: Vec<Vec<f64>> = sc
            .approaches
            .iter()
            .map(|a| {
                sc.vehicle_classes
                    .iter()
                    .map(|vc| a.rates.get(&vc.name).copied().unwrap_or(0.0))
                    .collect()
            })
            .collect();
        let n = sc.approaches.len();
        let tallies = sc.scene.loops.iter().cloned().map(LoopTally::new).collect();
        let mut run = Self {
            seed,
            class_ids,
            frame: 0,
            arrivals: stream_rng(seed, STREAM_ARRIVALS),
            kinematics: stream_rng(seed, STREAM_KINEMATICS),
            next_arrival: base_rates.iter().map(|r| vec![f64::INFINITY; r.len()]).collect(),
            base_rates,
            scale: vec![1.0; n],
            pending: vec![VecDeque::new(); n],
            active: vec![Vec::new(); n],
            next_id: 1,
            tracks: Vec::new(),
            tallies,
            sc,
        };
        for a in 0..n {
            run.redraw_arrivals(a, 0.0);
        }
        Ok(run)
    }

    pub fn scenario(&self) -> &Scenario {
        &self.sc
    }

    pub fn frame(&self) -> u64 {
        self.frame
    }

    pub fn is_finished(&self) -> bool {
        self.frame >= self.sc.frame_count()
    }

    fn redraw_arrivals(&mut self, a: usize, t: f64) {
        for c in 0..self.base_rates[a].len() {
            let rate = self.base_rates[a][c] * self.scale[a];
            self.next_arrival[a][c] = if rate > 0.0 {
                t + Exp::new(rate).expect("positive rate").sample(&mut self.arrivals)
            } else {
                f64::INFINITY
            };
        }
    }

    /// Multiplies the scenario arrival rates of one approach (or all) by
    /// `scale`. Zero stops new arrivals and discards vehicles waiting to enter.
    pub fn set_rate_scale(&mut self, approach: Option<&str>, scale: f64) -> Result<(), SimError> {
        if !(scale.is_finite() && scale >= 0.0) {
            return Err(SimError::Config("rate scale must be >= 0".into()));
        }
        let targets: Vec<usize> = match approach {
            None => (0..self.sc.approaches.len()).collect(),
            Some(id) => vec![self
                .sc
                .approaches
                .iter()
                .position(|a| a.id == id)
                .ok_or_else(|| SimError::Config(format!("unknown approach {id}")))?],
        };
        let t = self.frame as f64 / self.sc.fps;
        for a in targets {
            self.scale[a] = scale;
            if scale == 0.0 {
                self.pending[a].clear();
            }
            self.redraw_arrivals(a, t);
        }
        Ok(())
    }

    /// Sets the total arrival rate (vehicles/s) of one approach, or of each
    /// approach, keeping the scenario class mix.
    pub fn set_rate(&mut self, approach: Option<&str>, veh_per_s: f64) -> Result<(), SimError> {
        if !(veh_per_s.is_finite() && veh_per_s >= 0.0) {
            return Err(SimError::Config("rate must be >= 0".into()));
        }
        let targets: Vec<usize> = match approach {
            None => (0..self.sc.approaches.len()).collect(),
            Some(id) => vec![self
                .sc
                .approaches
                .iter()
                .position(|a| a.id == id)
                .ok_or_else(|| SimError::Config(format!("unknown approach {id}")))?],
        };
        for a in targets {
            let base: f64 = self.base_rates[a].iter().sum();
            if base <= 0.0 && veh_per_s > 0.0 {
                return Err(SimError::Config(format!(
                    "approach {} has no base demand to scale",
                    self.sc.approaches[a].id
                )));
            }
            let scale = if veh_per_s == 0.0 { 0.0 } else { veh_per_s / base };
            let id = self.sc.approaches[a].id.clone();
            self.set_rate_scale(Some(&id), scale)?;
        }
        Ok(())
    }

    fn choose_route(&mut self, a: usize) -> usize {
        let routes = &self.sc.approaches[a].routes;
        let total: f64 = routes.iter().map(|r| r.share).sum();
        let u = self.arrivals.random::<f64>() * total;
        let mut acc = 0.0;
        for (i, r) in routes.iter().enumerate() {
            acc += r.share;
            if u < acc {
                return i;
            }
        }
        routes.iter().rposition(|r| r.share > 0.0).unwrap_or(0)
    }

    fn green(&self, a: usize, t: f64) -> bool {
        match &self.sc.signal {
            None => true,
            Some(plan) => plan.aspect(&self.sc.approaches[a].id, t) == Aspect::Green,
        }
    }

    fn footprint(&self, a: usize, v: &Vehicle) -> (Point, Point, [Point; 4]) {
        let vc = &self.sc.vehicle_classes[v.class];
        let path = &self.sc.approaches[a].routes[v.route].path;
        let (front, heading) = path.at(v.s);
        let (rear, _) = path.at(v.s - vc.length_m);
        let chord = front.sub(rear);
        let dir = if chord.norm() > 1e-9 { chord.scale(1.0 / chord.norm()) } else { heading };
        let center = front.add(rear).scale(0.5);
        let normal = Point::new(-dir.y, dir.x);
        let (hl, hw) = (vc.length_m / 2.0, vc.width_m / 2.0);
        let corners = [
            center.add(dir.scale(hl)).add(normal.scale(hw)),
            center.add(dir.scale(hl)).sub(normal.scale(hw)),
            center.sub(dir.scale(hl)).sub(normal.scale(hw)),
            center.sub(dir.scale(hl)).add(normal.scale(hw)),
        ];
        (center, dir, corners)
    }

    fn pixel_box(&self, corners: &[Point; 4]) -> Option<BBox> {
        let h = &self.sc.camera.world_to_pixel;
        let mut px = Vec::with_capacity(4);
        for c in corners {
            px.push(h.project(*c).ok()?);
        }
        let [w, hh] = self.sc.camera.image_size;
        BBox::enclosing(&px)?.clip_to(w as f64, hh as f64)
    }

    /// Largest admissible speed for `v` given where its leader's front will
    /// be after this step.
    fn speed_limit(&self, a: usize, v: &Vehicle, leader: Option<&Vehicle>, t: f64) -> f64 {
        let dt = 1.0 / self.sc.fps;
        let mut lim = v.v_des;
        if let Some(l) = leader {
            let l_len = self.sc.vehicle_classes[l.class].length_m;
            let l_next = l.s + l.v * dt;
            lim = lim.min((l_next - l_len - v.s - MIN_GAP_M) / (dt + HEADWAY_S));
        }
        let stop = self.sc.approaches[a].stop_s;
        if v.s <= stop && !self.green(a, t) {
            lim = lim.min((stop - v.s) / dt);
        }
        lim.max(0.0)
    }

    /// Renders the current frame and advances the world by one tick.
    pub fn step_frame(&mut self) -> FrameOutput {
        let fps = self.sc.fps;
        let t = self.frame as f64 / fps;
        let ts_ms = self.sc.ts_ms(self.frame);

        // Arrivals up to now join the entry queue.
        for a in 0..self.sc.approaches.len() {
            for c in 0..self.base_rates[a].len() {
                while self.next_arrival[a][c] <= t {
                    let route = self.choose_route(a);
                    let [lo, hi] = self.sc.vehicle_classes[c].speed_range;
                    let v_des = if hi > lo { self.kinematics.random_range(lo..=hi) } else { lo };
                    self.pending[a].push_back(Pending { class: c, route, v_des });
                    let rate = self.base_rates[a][c] * self.scale[a];
                    self.next_arrival[a][c] += Exp::new(rate).expect("positive rate").sample(&mut self.arrivals);
                }
            }
        }

        // Spawn the head of each entry queue when the entry is clear.
        for a in 0..self.sc.approaches.len() {
            let Some(p) = self.pending[a].front().cloned() else {
                continue;
            };
            let len = self.sc.vehicle_classes[p.class].length_m;
            let clear = self.active[a].last().map_or(true, |l| {
                l.s - self.sc.vehicle_classes[l.class].length_m - len >= MIN_GAP_M
            });
            if !clear {
                continue;
            }
            self.pending[a].pop_front();
            let id = self.next_id;
            self.next_id += 1;
            let vc = &self.sc.vehicle_classes[p.class];
            let appr = &self.sc.approaches[a];
            self.tracks.push(GtTrack {
                id,
                class: vc.name.clone(),
                approach: appr.id.clone(),
                movement: appr.routes[p.route].movement.clone(),
                length_m: vc.length_m,
                width_m: vc.width_m,
                spawn_frame: self.frame,
                despawn_frame: None,
                stop_line_frame: None,
                mean_speed_mps: None,
                samples: Vec::new(),
            });
            self.active[a].push(Vehicle {
                id,
                class: p.class,
                route: p.route,
                v_des: p.v_des,
                s: len,
                v: 0.0,
                track: self.tracks.len() - 1,
            });
        }

        // Speeds for the coming step, leader first.
        let dt = 1.0 / fps;
        for a in 0..self.sc.approaches.len() {
            for i in 0..self.active[a].len() {
                let (before, rest) = self.active[a].split_at(i);
                let v = self.speed_limit(a, &rest[0], before.last(), t);
                self.active[a][i].v = v;
            }
        }

        // Render at time t.
        let mut truth = Vec::new();
        for a in 0..self.sc.approaches.len() {
            for v in &self.active[a] {
                let (center, dir, corners) = self.footprint(a, v);
                let Some(bbox) = self.pixel_box(&corners) else {
                    continue;
                };
                self.tracks[v.track].samples.push(GtSample {
                    frame: self.frame,
                    ts_ms,
                    bbox,
                    world: [center.x, center.y],
                    heading: dir.y.atan2(dir.x),
                    s_m: v.s,
                    speed: v.v,
                });
                truth.push(TruthBox { vehicle_id: v.id, class: self.class_ids[v.class], bbox });
            }
        }
        truth.sort_by_key(|b| b.vehicle_id);
        let present: Vec<(u64, BBox)> = truth.iter().map(|b| (b.vehicle_id, b.bbox)).collect();
        for tally in &mut self.tallies {
            tally.frame(&present);
        }

        // Advance positions and retire vehicles that reached the end of their route.
        self.frame += 1;
        for a in 0..self.sc.approaches.len() {
            let stop = self.sc.approaches[a].stop_s;
            for v in &mut self.active[a] {
                let s_new = v.s + v.v * dt;
                if v.s <= stop && s_new > stop {
                    self.tracks[v.track].stop_line_frame = Some(self.frame - 1);
                }
                v.s = s_new;
            }
            let routes = &self.sc.approaches[a].routes;
            let frame = self.frame;
            let tracks = &mut self.tracks;
            self.active[a].retain(|v| {
                let done = v.s >= routes[v.route].path.length();
                if done {
                    tracks[v.track].despawn_frame = Some(frame);
                }
                !done
            });
        }

        let packet = FramePacket {
            camera_id: self.sc.camera.camera_id.clone(),
            frame: self.frame - 1,
            ts_ms,
            detections: truth
                .iter()
                .map(|b| Detection { cls: b.class, score: 1.0, bbox: b.bbox })
                .collect(),
        };
        FrameOutput { packet, truth }
    }

    /// Ground truth accumulated so far.
    pub fn ground_truth(&self) -> GroundTruthBundle {
        let fps = self.sc.fps;
        let tracks: Vec<GtTrack> = self
            .tracks
            .iter()
            .filter(|t| !t.samples.is_empty())
            .cloned()
            .map(|mut t| {
                t.mean_speed_mps = mean_speed(&t.samples, fps);
                t
            })
            .collect();
        let od = od_cells(&tracks, &self.sc.scene.gates, &self.sc.scene.movements);
        let loop_counts: BTreeMap<String, u64> =
            self.tallies.iter().map(|t| (t.id().to_string(), t.count)).collect();
        GroundTruthBundle {
            format_version: FORMAT_VERSION,
            scenario: self.sc.name.clone(),
            seed: self.seed,
            fps,
            frames: self.frame,
            tracks,
            loop_counts,
            od,
        }
    }
}

/// Runs a scenario to completion: noise-free detections plus ground truth.
pub fn simulate(sc: &Scenario, seed: u64) -> Result<(Vec<FramePacket>, GroundTruthBundle), SimError> {
    let mut run = SimRun::new(sc.clone(), seed)?;
    let mut packets = Vec::with_capacity(sc.frame_count() as usize);
    while !run.is_finished() {
        packets.push(run.step_frame().packet);
    }
    Ok((packets, run.ground_truth()))
}
