use std::collections::BTreeMap;

use xroads_core::protocol::encode_frame_packet;
use xroads_core::{gate_crossing, Crossing, Point};
use xroads_sim::presets::t_junction;
use xroads_sim::{apply_noise, simulate, Aspect, NoiseParams, Scenario, SimRun};

fn with_rates(mut sc: Scenario, f: impl Fn(&str) -> f64) -> Scenario {
    for a in &mut sc.approaches {
        for (cls, r) in a.rates.iter_mut() {
            *r = f(cls);
        }
    }
    sc
}

#[test]
fn zero_demand_produces_empty_frames() {
    let sc = with_rates(t_junction(), |_| 0.0);
    let (packets, gt) = simulate(&sc, 5).unwrap();
    assert_eq!(packets.len() as u64, sc.frame_count());
    assert!(packets.iter().all(|p| p.detections.is_empty()));
    assert!(gt.tracks.is_empty());
    assert!(gt.od.is_empty());
    assert!(gt.loop_counts.values().all(|c| *c == 0));
}

#[test]
fn same_seed_same_bytes() {
    let sc = t_junction();
    let np = NoiseParams { p_miss: 0.2, jitter_sigma: 2.0, fp_rate: 0.2, ..Default::default() };
    let run = |seed| {
        let (p, gt) = simulate(&sc, seed).unwrap();
        let noisy = apply_noise(&p, &np, 6, sc.camera.image_size, seed).unwrap();
        let classes = sc.classes().unwrap();
        let lines: Vec<String> = noisy.iter().map(|p| encode_frame_packet(p, &classes)).collect();
        (lines.join("\n"), gt.to_json())
    };
    let a = run(11);
    assert_eq!(a, run(11));
    assert_ne!(a.0, run(12).0);
}

#[test]
fn poisson_arrival_count() {
    // One class at 0.1 veh/s on one approach, no signal: spawned count over
    // 1000 s is Poisson(100); accept within three standard deviations.
    let mut sc = with_rates(t_junction(), |c| if c == "Motorcycle" { 0.1 } else { 0.0 });
    sc.approaches.truncate(1);
    sc.approaches[0].routes.truncate(1);
    sc.signal = None;
    sc.duration_s = 1000.0;
    let (_, gt) = simulate(&sc, 99).unwrap();
    let n = gt.tracks.len() as f64;
    assert!((n - 100.0).abs() <= 30.0, "{n}");
}

#[test]
fn route_split_is_binomial() {
    // About 20000 route draws at share 0.4; accept within four standard deviations.
    let mut sc = with_rates(t_junction(), |c| if c == "Motorcycle" { 0.5 } else { 0.0 });
    sc.approaches.truncate(1);
    sc.approaches[0].routes[0].share = 0.4;
    sc.approaches[0].routes[1].share = 0.6;
    sc.signal = None;
    sc.duration_s = 40_000.0;
    sc.fps = 1.0;
    let mut run = SimRun::new(sc, 3).unwrap();
    let mut first_route = 0u64;
    let mut total = 0u64;
    while !run.is_finished() {
        run.step_frame();
    }
    for t in run.ground_truth().tracks {
        total += 1;
        first_route += u64::from(t.movement == "W-E");
    }
    let expect = 0.4 * total as f64;
    assert!(total > 15_000, "{total}");
    assert!((first_route as f64 - expect).abs() <= 4.0 * (total as f64 * 0.24).sqrt(), "{first_route} of {total}");
}

/// Separating-axis test for two oriented rectangles.
fn rects_overlap(a: &[Point; 4], b: &[Point; 4]) -> bool {
    for poly in [a, b] {
        for i in 0..4 {
            let e = poly[(i + 1) % 4].sub(poly[i]);
            let n = Point::new(-e.y, e.x);
            let proj = |r: &[Point; 4]| {
                let v: Vec<f64> = r.iter().map(|p| p.dot(n)).collect();
                (v.iter().cloned().fold(f64::INFINITY, f64::min), v.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
            };
            let (a0, a1) = proj(a);
            let (b0, b1) = proj(b);
            if a1 <= b0 + 1e-9 || b1 <= a0 + 1e-9 {
                return false;
            }
        }
    }
    true
}

fn footprint(world: [f64; 2], heading: f64, len: f64, wid: f64) -> [Point; 4] {
    let (d, n) = (Point::new(heading.cos(), heading.sin()), Point::new(-heading.sin(), heading.cos()));
    let c = Point::new(world[0], world[1]);
    let (hl, hw) = (len / 2.0, wid / 2.0);
    [
        c.add(d.scale(hl)).add(n.scale(hw)),
        c.add(d.scale(hl)).sub(n.scale(hw)),
        c.sub(d.scale(hl)).sub(n.scale(hw)),
        c.sub(d.scale(hl)).add(n.scale(hw)),
    ]
}

#[test]
fn vehicles_on_one_approach_never_overlap() {
    let sc = t_junction();
    for seed in [1, 2, 3] {
        let (_, gt) = simulate(&sc, seed).unwrap();
        let mut by_frame: BTreeMap<(u64, &str), Vec<[Point; 4]>> = BTreeMap::new();
        for t in &gt.tracks {
            for s in &t.samples {
                let stop = sc.approaches.iter().find(|a| a.id == t.approach).unwrap().stop_s;
                // Compare only on the shared entry lane.
                if s.s_m <= stop {
                    by_frame
                        .entry((s.frame, t.approach.as_str()))
                        .or_default()
                        .push(footprint(s.world, s.heading, t.length_m, t.width_m));
                }
            }
        }
        for (k, rects) in by_frame {
            for i in 0..rects.len() {
                for j in i + 1..rects.len() {
                    assert!(!rects_overlap(&rects[i], &rects[j]), "overlap at {k:?}");
                }
            }
        }
    }
}

#[test]
fn nobody_passes_a_red_stop_line() {
    let sc = t_junction();
    let plan = sc.signal.clone().unwrap();
    let (_, gt) = simulate(&sc, 7).unwrap();
    let mut crossed = 0;
    for t in &gt.tracks {
        let stop = sc.approaches.iter().find(|a| a.id == t.approach).unwrap().stop_s;
        for w in t.samples.windows(2) {
            if w[0].s_m <= stop && w[1].s_m > stop {
                crossed += 1;
                let t0 = (w[0].ts_ms - sc.start_ms) as f64 / 1000.0;
                assert_eq!(plan.aspect(&t.approach, t0), Aspect::Green, "track {} at {t0}", t.id);
            }
        }
    }
    assert!(crossed > 10);
}

#[test]
fn ground_truth_od_matches_movements() {
    let sc = t_junction();
    let (_, gt) = simulate(&sc, 4).unwrap();
    assert!(gt.tracks.len() > 30, "{}", gt.tracks.len());
    // Independent recount: bottom-center crosses origin then destination gate.
    let gate = |id: &str| sc.scene.gates.iter().find(|g| g.id == id).unwrap();
    let mut od: BTreeMap<(String, String), u64> = BTreeMap::new();
    for t in &gt.tracks {
        let m = sc.scene.movements.iter().find(|m| m.id == t.movement).unwrap();
        let pts: Vec<Point> = t.samples.iter().map(|s| s.bbox.bottom_center()).collect();
        let fwd = |g: &str| {
            pts.windows(2)
                .position(|w| gate_crossing(w[0], w[1], gate(g)) == Some(Crossing::Forward))
        };
        if let (Some(a), Some(b)) = (fwd(&m.origin_gate), fwd(&m.dest_gate)) {
            if a < b {
                *od.entry((m.origin_gate.clone(), m.dest_gate.clone())).or_default() += 1;
            }
        }
    }
    let cells: BTreeMap<(String, String), u64> =
        gt.od.iter().map(|c| ((c.origin.clone(), c.dest.clone()), c.count)).collect();
    assert_eq!(cells, od);
    assert!(od.values().sum::<u64>() > 20);
    assert!(gt.loop_counts.values().sum::<u64>() > 20, "{:?}", gt.loop_counts);
}

#[test]
fn rate_scale_zero_stops_spawning() {
    let mut run = SimRun::new(t_junction(), 2).unwrap();
    for _ in 0..200 {
        run.step_frame();
    }
    run.set_rate_scale(None, 0.0).unwrap();
    let before = run.ground_truth().tracks.len();
    for _ in 0..800 {
        run.step_frame();
    }
    assert_eq!(run.ground_truth().tracks.len(), before);
    assert!(run.set_rate_scale(Some("X"), 1.0).is_err());
    assert!(run.set_rate_scale(None, -1.0).is_err());
}
