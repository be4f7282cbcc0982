use nalgebra::{Matrix6, SymmetricEigen};
use proptest::prelude::*;
use xroads_core::{BBox, KalmanModel, TrackState};

fn min_eigenvalue(s: &TrackState) -> f64 {
    let m = Matrix6::from_fn(|r, c| s.p[r][c]);
    SymmetricEigen::new(m).eigenvalues.min()
}

fn asymmetry(s: &TrackState) -> f64 {
    let mut worst: f64 = 0.0;
    for r in 0..6 {
        for c in 0..6 {
            worst = worst.max((s.p[r][c] - s.p[c][r]).abs());
        }
    }
    worst
}

#[derive(Debug, Clone)]
enum Op {
    Predict(f64),
    Update(f64, f64, f64, f64),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0.05..3.0f64).prop_map(Op::Predict),
        (0.0..1000.0f64, 0.0..1000.0f64, 1.0..300.0f64, 1.0..300.0f64)
            .prop_map(|(x, y, w, h)| Op::Update(x, y, w, h)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn covariance_stays_symmetric_psd(ops in prop::collection::vec(op(), 1..200)) {
        let kf = KalmanModel::default();
        let mut s = kf.initiate(&BBox::new(100.0, 100.0, 40.0, 30.0).unwrap());
        for o in ops {
            s = match o {
                Op::Predict(dt) => kf.predict(&s, dt),
                Op::Update(x, y, w, h) => kf.update(&s, &BBox::new(x, y, w, h).unwrap()).unwrap(),
            };
            prop_assert!(asymmetry(&s) == 0.0);
            let scale = (0..6).map(|i| s.p[i][i]).fold(1.0, f64::max);
            prop_assert!(min_eigenvalue(&s) >= -1e-9 * scale, "min eig {}", min_eigenvalue(&s));
            prop_assert!(s.x.iter().all(|v| v.is_finite()));
        }
    }
}

#[test]
fn long_sequence_stays_bounded() {
    let kf = KalmanModel::default();
    let mut s = kf.initiate(&BBox::new(0.0, 0.0, 20.0, 10.0).unwrap());
    for k in 1..=10_000 {
        s = kf.predict(&s, 1.0);
        let z = BBox::new(2.0 * k as f64, 0.5 * k as f64, 20.0, 10.0).unwrap();
        s = kf.update(&s, &z).unwrap();
    }
    assert!(min_eigenvalue(&s) > 0.0);
    let (vx, vy) = s.velocity();
    assert!((vx - 2.0).abs() < 1e-6 && (vy - 0.5).abs() < 1e-6);
}
