use nuotdr::detector::{ApdModel, PersistenceParams};
use nuotdr::engine::{measure_dead_zone, run_acquisition};
use nuotdr::fiber::{FiberLink, FiberSegment, LaserConfig, PointEvent};
use nuotdr::schemes::{GatingScheme, SchemeKind};

/// 5 km of fiber, a −45 dB reflector directly followed by a 17 dB loss, 10 km more.
fn link() -> FiberLink {
    FiberLink::new(
        vec![FiberSegment::standard(5.0), FiberSegment::standard(10.0)],
        vec![PointEvent::reflective(5.0, 17.0, -45.0)],
    )
    .unwrap()
}

fn scheme() -> GatingScheme {
    let mut s = GatingScheme::basic(1e-6, 100e-9, 10e-6);
    s.kind = SchemeKind::Basic { delay_step_s: 1e-6, gates_per_point: Some(20_000) };
    s
}

#[test]
fn default_persistence_leaves_a_two_km_tail() {
    let link = link();
    let laser = LaserConfig::for_link(&link, 0.1, 100e-9);
    let apd = ApdModel::default();
    let t = run_acquisition(&link, &laser, &apd, &scheme(), 1.0, 20.0, 7).unwrap();
    let dz = measure_dead_zone(&t, 5.0, 0.5).unwrap();
    assert!(!dz.unrecovered);
    assert!((dz.length_km - 2.0).abs() <= 0.7, "{dz:?}");
    let decay = dz.tail_decay_db_per_km.expect("tail fit");
    assert!((decay - 3.5).abs() <= 1.0, "{dz:?}");
    assert!(t.causes.persistence > 0);
}

#[test]
fn without_persistence_only_the_pulse_smears_the_edge() {
    let link = link();
    let laser = LaserConfig::for_link(&link, 0.1, 100e-9);
    let apd = ApdModel { persistence: PersistenceParams::disabled(), ..ApdModel::default() };
    let t = run_acquisition(&link, &laser, &apd, &scheme(), 1.0, 20.0, 7).unwrap();
    let dz = measure_dead_zone(&t, 5.0, 0.5).unwrap();
    // One sampling step plus the pulse and gate lengths.
    let limit = 0.1 + laser.pulse_length_km(&link) + 100e-9 * link.group_speed_km_s() / 2.0;
    assert!(dz.length_km <= limit + 1e-9, "{dz:?} vs {limit}");
    assert_eq!(t.causes.persistence, 0);
}
