//! Built-in scenarios.

use std::collections::BTreeMap;

use xroads_core::analytics::{LoopSpec, QueueZoneSpec};
use xroads_core::od::Movement;
use xroads_core::protocol::FORMAT_VERSION;
use xroads_core::{gate_crossing, Crossing, Gate, Homography, Point, Polygon, TrackerConfig};

use crate::path::Polyline;
use crate::scenario::{Approach, Camera, Route, Scenario, SceneSpec, SignalPhase, SignalPlan, VehicleClass};

const LANE: f64 = 1.75;
const STOP: f64 = 8.0;
const LEG: f64 = 50.0;
const ARC_STEP: f64 = 0.5;

pub fn names() -> &'static [&'static str] {
    &["t_junction"]
}

pub fn by_name(name: &str) -> Option<Scenario> {
    match name {
        "t_junction" => Some(t_junction()),
        _ => None,
    }
}

fn p(x: f64, y: f64) -> Point {
    Point::new(x, y)
}

fn camera() -> Camera {
    Camera {
        camera_id: "cam-t1".into(),
        image_size: [1920, 1080],
        world_to_pixel: Homography::new([[18.0, 0.0, 960.0], [0.0, -18.0, 110.0], [0.0, -0.002, 1.0]])
            .expect("finite matrix"),
    }
}

fn px(cam: &Camera, q: Point) -> Point {
    cam.world_to_pixel.project(q).expect("scene point projects")
}

fn pixel_poly(cam: &Camera, corners: &[Point]) -> Polygon {
    Polygon::new(corners.iter().map(|c| px(cam, *c)).collect()).expect("convex detector polygon")
}

fn world_rect(cam: &Camera, x0: f64, y0: f64, x1: f64, y1: f64) -> Polygon {
    pixel_poly(cam, &[p(x0, y0), p(x1, y0), p(x1, y1), p(x0, y1)])
}

/// Gate over the world segment `a → b` whose forward direction is the motion
/// `from → to`.
fn gate(cam: &Camera, id: &str, a: Point, b: Point, from: Point, to: Point) -> Gate {
    let g = Gate::new(id, px(cam, a), px(cam, b), 1).expect("distinct gate ends");
    let side = match gate_crossing(px(cam, from), px(cam, to), &g) {
        Some(Crossing::Forward) => 1,
        Some(Crossing::Backward) => -1,
        None => panic!("gate {id} test motion does not cross it"),
    };
    Gate::new(id, g.p0, g.p1, side).expect("valid side")
}

fn route(movement: &str, share: f64, path: Polyline) -> Route {
    Route { movement: movement.into(), share, path }
}

/// Three-legged signalised junction: west and east arms on the x axis, a
/// south arm on the y axis, right-hand traffic, 20 fps for two minutes.
pub fn t_junction() -> Scenario {
    let cam = camera();
    let straight = |a: Point, b: Point| Polyline::new(vec![a, b]).expect("distinct ends");
    let turn = |a: Point, entry: Point, center: Point, sweep: f64, end: Point| {
        Polyline::builder(a)
            .line_to(entry)
            .arc(center, sweep, ARC_STEP)
            .line_to(end)
            .build()
            .expect("route")
    };
    let half_pi = std::f64::consts::FRAC_PI_2;

    let west = Approach {
        id: "W".into(),
        stop_s: LEG - STOP,
        rates: BTreeMap::new(),
        routes: vec![
            route("W-E", 0.7, straight(p(-LEG, -LANE), p(LEG, -LANE))),
            route("W-S", 0.3, turn(p(-LEG, -LANE), p(-STOP, -LANE), p(-STOP, -STOP), -half_pi, p(-LANE, -LEG))),
        ],
    };
    let east = Approach {
        id: "E".into(),
        stop_s: LEG - STOP,
        rates: BTreeMap::new(),
        routes: vec![
            route("E-W", 0.7, straight(p(LEG, LANE), p(-LEG, LANE))),
            route("E-S", 0.3, turn(p(LEG, LANE), p(STOP, LANE), p(STOP, -STOP), half_pi, p(-LANE, -LEG))),
        ],
    };
    let south = Approach {
        id: "S".into(),
        stop_s: LEG - STOP,
        rates: BTreeMap::new(),
        routes: vec![
            route("S-W", 0.5, turn(p(LANE, -LEG), p(LANE, -STOP), p(-STOP, -STOP), half_pi, p(-LEG, LANE))),
            route("S-E", 0.5, turn(p(LANE, -LEG), p(LANE, -STOP), p(STOP, -STOP), -half_pi, p(LEG, -LANE))),
        ],
    };
    let rates: BTreeMap<String, f64> = [
        ("Car", 0.08),
        ("Minibus", 0.015),
        ("Bus", 0.005),
        ("Truck", 0.005),
        ("Motorcycle", 0.015),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v))
    .collect();
    let approaches: Vec<Approach> = [west, east, south]
        .into_iter()
        .map(|mut a| {
            a.rates = rates.clone();
            a
        })
        .collect();

    let vehicle_classes = vec![
        VehicleClass { name: "Car".into(), length_m: 4.5, width_m: 1.8, speed_range: [10.0, 14.0] },
        VehicleClass { name: "Bus".into(), length_m: 12.0, width_m: 2.5, speed_range: [8.0, 11.0] },
        VehicleClass { name: "Minibus".into(), length_m: 6.0, width_m: 2.1, speed_range: [9.0, 13.0] },
        VehicleClass { name: "Motorcycle".into(), length_m: 2.0, width_m: 0.8, speed_range: [10.0, 15.0] },
        VehicleClass { name: "Truck".into(), length_m: 9.0, width_m: 2.5, speed_range: [8.0, 11.0] },
    ];

    let phase = |a: &str| SignalPhase { approaches: vec![a.into()], green_s: 15.0, yellow_s: 3.0, all_red_s: 2.0 };
    let signal = SignalPlan { phases: vec![phase("W"), phase("E"), phase("S")], offset_s: 0.0 };

    let g = 30.0;
    let gates = vec![
        gate(&cam, "W_in", p(-g, -5.0), p(-g, 0.25), p(-g - 1.0, -LANE), p(-g + 1.0, -LANE)),
        gate(&cam, "W_out", p(-g, 0.25), p(-g, 5.0), p(-g + 1.0, LANE), p(-g - 1.0, LANE)),
        gate(&cam, "E_in", p(g, -0.25), p(g, 5.0), p(g + 1.0, LANE), p(g - 1.0, LANE)),
        gate(&cam, "E_out", p(g, -5.0), p(g, -0.25), p(g - 1.0, -LANE), p(g + 1.0, -LANE)),
        gate(&cam, "S_in", p(0.0, -g), p(5.0, -g), p(LANE, -g - 1.0), p(LANE, -g + 1.0)),
        gate(&cam, "S_out", p(-5.0, -g), p(0.0, -g), p(-LANE, -g + 1.0), p(-LANE, -g - 1.0)),
    ];
    let movements = [
        ("W-E", "W_in", "E_out", "through"),
        ("W-S", "W_in", "S_out", "right"),
        ("E-W", "E_in", "W_out", "through"),
        ("E-S", "E_in", "S_out", "left"),
        ("S-W", "S_in", "W_out", "left"),
        ("S-E", "S_in", "E_out", "right"),
    ]
    .into_iter()
    .map(|(id, o, d, label)| Movement { id: id.into(), origin_gate: o.into(), dest_gate: d.into(), label: label.into() })
    .collect();

    let loops = vec![
        LoopSpec::new("L_W_exit", world_rect(&cam, -24.0, 0.0, -18.0, 3.5)),
        LoopSpec::new("L_E_exit", world_rect(&cam, 18.0, -3.5, 24.0, 0.0)),
        LoopSpec::new("L_S_exit", world_rect(&cam, -3.5, -24.0, 0.0, -18.0)),
    ];
    let zone = |id: &str, rect: [f64; 4], a: Point, b: Point| {
        let (pa, pb) = (px(&cam, a), px(&cam, b));
        QueueZoneSpec {
            id: id.into(),
            polygon: world_rect(&cam, rect[0], rect[1], rect[2], rect[3]),
            axis: [[pa.x, pa.y], [pb.x, pb.y]],
            v_stop: 0.5,
        }
    };
    let zones = vec![
        zone("Q_W", [-40.0, -3.5, -STOP, 0.0], p(-STOP - 0.5, -LANE), p(-39.5, -LANE)),
        zone("Q_E", [STOP, 0.0, 40.0, 3.5], p(STOP + 0.5, LANE), p(39.5, LANE)),
        zone("Q_S", [0.0, -40.0, 3.5, -STOP], p(LANE, -STOP - 0.5), p(LANE, -39.5)),
    ];

    Scenario {
        format_version: FORMAT_VERSION,
        name: "t_junction".into(),
        duration_s: 120.0,
        fps: 20.0,
        start_ms: 1_700_000_000_000,
        camera: cam,
        class_set: "six".into(),
        vehicle_classes,
        approaches,
        signal: Some(signal),
        noise: None,
        scene: SceneSpec {
            loops,
            zones,
            gates,
            movements,
            // Motorcycle boxes are small enough that 2 px jitter often drops
            // the predicted-box IoU below the default gate, and coasting
            // through missed frames drifts the prediction further.
            tracker: TrackerConfig { iou_min: 0.05, ..TrackerConfig::default() },
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn preset_is_valid_and_round_trips() {
        let sc = t_junction();
        sc.validate().unwrap();
        let back = Scenario::from_json(&sc.to_json_pretty()).unwrap();
        assert_eq!(back, sc);
        assert!(by_name("nope").is_none());
    }

    #[test]
    fn roads_stay_in_view() {
        let sc = t_junction();
        let [w, h] = sc.camera.image_size;
        for a in &sc.approaches {
            for r in &a.routes {
                for q in r.path.points() {
                    let u = px(&sc.camera, *q);
                    assert!(u.x > 0.0 && u.x < w as f64 && u.y > 0.0 && u.y < h as f64, "{q:?} -> {u:?}");
                }
            }
        }
    }
}
