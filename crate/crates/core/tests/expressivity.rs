use pathlink::expressivity::{run_battery, BatteryOptions, Status};
use pathlink::generators::cycle;

#[test]
fn fresh_battery_passes() {
    let claims = run_battery(&BatteryOptions::default()).unwrap();
    for c in &claims {
        println!("{:<4} {} ({})", c.status, c.name, c.detail);
    }
    assert!(claims.iter().all(|c| c.status == Status::Pass));
}

#[test]
fn mean_phi_mutation_is_caught() {
    let opts = BatteryOptions {
        mutate_phi_mean: true,
        ..Default::default()
    };
    let claims = run_battery(&opts).unwrap();
    let failed: Vec<&str> = claims.iter().filter(|c| c.status == Status::Fail).map(|c| c.name.as_str()).collect();
    assert!(failed.iter().any(|n| n.starts_with("C8 sp4lp")), "{failed:?}");
    assert!(failed.iter().all(|n| n.contains("[mutated]")), "{failed:?}");
}

#[test]
fn oversized_input_graph_is_skipped_with_notice() {
    let opts = BatteryOptions {
        extra: Some(cycle(11).with_constant_features(1)),
        ..Default::default()
    };
    let claims = run_battery(&opts).unwrap();
    let skipped: Vec<_> = claims.iter().filter(|c| c.status == Status::Skipped).collect();
    assert_eq!(skipped.len(), 2);
    assert!(skipped[0].detail.contains("skipped"));
}
