use nuotdr::detector::ApdModel;
use nuotdr::engine::{gate_mean_power, partial_trace_campaign, CampaignConfig, Coverage};
use nuotdr::error::Error;
use nuotdr::fiber::{FiberLink, LaserConfig};
use nuotdr::schemes::{GatingScheme, SchemeKind};

/// 100 km at 0.5 dB/km, 1 km sampling, 10⁵ gates per point.
fn setup() -> (FiberLink, LaserConfig, ApdModel, GatingScheme) {
    let link = FiberLink::uniform(100.0, 0.5).unwrap();
    let laser = LaserConfig::for_link(&link, 1.0, 1e-6);
    let apd = ApdModel::ideal(0.1, 20.0, 0.0);
    let mut scheme = GatingScheme::basic(10e-6, 1e-6, 0.0);
    scheme.kind = SchemeKind::Basic { delay_step_s: 10e-6, gates_per_point: Some(100_000) };
    (link, laser, apd, scheme)
}

#[test]
fn fifty_db_link_needs_three_partials() {
    let (link, laser, apd, scheme) = setup();
    let cfg = CampaignConfig { overlap_km: 12.0, seed: 3, ..CampaignConfig::default() };
    let r = partial_trace_campaign(&link, &laser, &apd, &scheme, &cfg).unwrap();
    assert_eq!(r.partials.len(), 3);
    assert_eq!(r.coverage, Coverage::Complete);
    for p in &r.partials {
        assert!((p.span_db() - 20.0).abs() <= 3.0, "span {}", p.span_db());
    }
    assert!(r.partials[0].attenuation_db > r.partials[1].attenuation_db);
    assert!(r.partials[1].attenuation_db > r.partials[2].attenuation_db);
    assert!(r.partials[1].overlap_span_km > 5.0);

    // Stitched trace against the noiseless curve, up to one global offset.
    let w = 1e-6;
    let reference = gate_mean_power(&link, &laser, r.stitched.bins[0].delay_s - w / 2.0, w, 0.0);
    let pulls: Vec<(f64, f64)> = r
        .stitched
        .bins
        .iter()
        .filter(|b| b.db_value.is_finite())
        .map(|b| {
            let truth = 5.0 * (gate_mean_power(&link, &laser, b.delay_s - w / 2.0, w, 0.0) / reference).log10();
            (b.db_value - truth, b.db_sigma())
        })
        .collect();
    let weight: f64 = pulls.iter().map(|p| p.1.powi(-2)).sum();
    let offset = pulls.iter().map(|p| p.0 * p.1.powi(-2)).sum::<f64>() / weight;
    let inside = pulls.iter().filter(|p| (p.0 - offset).abs() <= 2.0 * p.1).count() as f64 / pulls.len() as f64;
    assert!(inside >= 0.9, "{inside}");
    let last = r.stitched.bins.last().unwrap();
    assert!(last.distance_km > 98.0);
    assert_eq!(last.provenance, 2);
}

#[test]
fn campaign_rejects_other_schemes_and_runs_out_of_partials() {
    let (link, laser, apd, scheme) = setup();
    let train = GatingScheme::train_of_gates(1e6, 100e-9, 1e-6);
    assert!(partial_trace_campaign(&link, &laser, &apd, &train, &CampaignConfig::default()).is_err());
    let cfg = CampaignConfig { overlap_km: 12.0, max_partials: 2, ..CampaignConfig::default() };
    assert!(matches!(
        partial_trace_campaign(&link, &laser, &apd, &scheme, &cfg),
        Err(Error::Campaign(_))
    ));
}

#[test]
fn weak_laser_ends_with_partial_coverage() {
    let (link, mut laser, apd, scheme) = setup();
    // Only the first ~30 dB of the link can be brought near saturation.
    laser.peak_power_w = 1e-4;
    let cfg = CampaignConfig { overlap_km: 12.0, seed: 1, ..CampaignConfig::default() };
    let r = partial_trace_campaign(&link, &laser, &apd, &scheme, &cfg).unwrap();
    match r.coverage {
        Coverage::Partial { unmeasured_from_km } => assert!(unmeasured_from_km < 100.0),
        Coverage::Complete => panic!("full coverage with a weak laser"),
    }
    assert!(r.partials.last().unwrap().floor_reached);
}
