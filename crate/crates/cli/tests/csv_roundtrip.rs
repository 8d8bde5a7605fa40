use nuotdr::engine::{BinStatus, TraceBin};
use nuotdr_cli::csvio::{read_trace, write_trace, TRACE_HEADER};
use proptest::prelude::*;

fn status() -> impl Strategy<Value = BinStatus> {
    prop_oneof![
        Just(BinStatus::Ok),
        Just(BinStatus::NoData),
        Just(BinStatus::Saturated),
        Just(BinStatus::BelowDark)
    ]
}

fn value() -> impl Strategy<Value = f64> {
    prop_oneof![
        8 => -1e3f64..1e3,
        4 => 1e-18f64..1e-3,
        1 => Just(f64::NAN),
        1 => Just(f64::INFINITY),
        1 => Just(f64::NEG_INFINITY),
    ]
}

prop_compose! {
    fn bin()(
        delay in 0.0f64..1e-3,
        counts in (0u64..1_000_000, 0u64..1_000_000, 0u64..1_000_000),
        floats in proptest::collection::vec(value(), 6),
        status in status(),
        provenance in 0usize..16,
    ) -> TraceBin {
        TraceBin {
            delay_s: delay,
            distance_km: delay * 1e5,
            gates_applied: counts.0,
            gates_activated: counts.1,
            detections: counts.2,
            expected_dark: floats[0],
            estimated_power_w: floats[1],
            power_interval_w: (floats[2], floats[3]),
            db_value: floats[4],
            attenuation_db: delay * 1e4,
            status,
            provenance,
            offset_sigma_db: floats[5].abs(),
        }
    }
}

/// Equal as printed: `{:.10e}` of both sides match.
fn same(a: f64, b: f64) -> bool {
    format!("{a:.10e}") == format!("{b:.10e}")
}

proptest! {
    #[test]
    fn written_traces_read_back_to_the_last_digit(bins in proptest::collection::vec(bin(), 0..40)) {
        let mut first = Vec::new();
        write_trace(&mut first, &bins).unwrap();
        let back = read_trace(first.as_slice()).unwrap();
        prop_assert_eq!(back.len(), bins.len());
        for (a, b) in bins.iter().zip(&back) {
            prop_assert!(same(a.delay_s, b.delay_s) && same(a.distance_km, b.distance_km));
            prop_assert_eq!((a.gates_applied, a.gates_activated, a.detections), (b.gates_applied, b.gates_activated, b.detections));
            prop_assert!(same(a.expected_dark, b.expected_dark));
            prop_assert!(same(a.estimated_power_w, b.estimated_power_w));
            prop_assert!(same(a.power_interval_w.0, b.power_interval_w.0) && same(a.power_interval_w.1, b.power_interval_w.1));
            prop_assert!(same(a.db_value, b.db_value) && same(a.attenuation_db, b.attenuation_db));
            prop_assert!(same(a.offset_sigma_db, b.offset_sigma_db));
            prop_assert_eq!(a.status, b.status);
            prop_assert_eq!(a.provenance, b.provenance);
        }
        // A second pass is byte-identical.
        let mut second = Vec::new();
        write_trace(&mut second, &back).unwrap();
        prop_assert_eq!(first, second);
    }
}

#[test]
fn bad_files_name_the_problem() {
    let header = TRACE_HEADER.join(",");
    let err = read_trace("a,b\n1,2\n".as_bytes()).unwrap_err().to_string();
    assert!(err.contains("unexpected header"), "{err}");
    let row = "1,2,3,4,5,6,7,8,9,10,11,12,ok,x";
    let err = read_trace(format!("{header}\n{row}\n").as_bytes()).unwrap_err().to_string();
    assert!(err.contains("line 2") && err.contains("provenance"), "{err}");
    let row = "1,2,3,4,5,6,7,8,9,10,11,12,fine,0";
    let err = read_trace(format!("{header}\n{row}\n").as_bytes()).unwrap_err().to_string();
    assert!(err.contains("status"), "{err}");
}
