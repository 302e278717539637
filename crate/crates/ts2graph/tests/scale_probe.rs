use std::time::Instant;
use ts2graph::events::FeatureConfig;
use ts2graph::eventstore::EventStore;
use ts2graph::pipeline::*;
use ts2graph::series::StlConfig;
use ts2graph::synth::{generate_fleet, FleetConfig, GroupKind};

#[test]
#[ignore]
fn probe_full_scale_validation() {
    let t0 = Instant::now();
    let fleet_cfg = FleetConfig { weeks: 4, ..FleetConfig::default() };
    let dataset = generate_fleet(&fleet_cfg);
    println!("generate: {:?} ({} sensors, {} samples)", t0.elapsed(), dataset.series.len(), dataset.timestamps().len());

    let t1 = Instant::now();
    let fcfg = FeatureConfig::default();
    let features = prepare_features(&dataset.series, &fcfg, &StlConfig::default()).unwrap();
    println!("features (incl STL): {:?}", t1.elapsed());

    let t2 = Instant::now();
    let events = detect_all_events(&features, &fcfg);
    println!("detect: {:?}, {} events total", t2.elapsed(), events.len());
    let per_sensor = events.len() as f64 / dataset.series.len() as f64;
    println!("events per sensor over 4 weeks: {per_sensor:.1}");

    let mut store = EventStore::in_memory();
    store.insert(&events).unwrap();

    let t3 = Instant::now();
    let report = validation_experiment(&dataset, &features, &store, &GraphConfig::default()).unwrap();
    println!("validation: {:?}", t3.elapsed());
    for (name, m) in &report.pairs.rows {
        println!("pairs k={} {name}: m1={:.3} m2={:.3} m3={:.3}", report.pairs.k, m.m1, m.m2, m.m3);
    }
    for (name, m) in &report.rooms.rows {
        println!("rooms k={} {name}: m1={:.3} m2={:.3} m3={:.3}", report.rooms.k, m.m1, m.m2, m.m3);
    }
    for (name, frac) in &report.sparsity {
        println!("sparsity below 0.01: {name}: {frac:.3}");
    }
    println!("TOTAL: {:?}", t0.elapsed());

    // quick within/cross check on event counts for one room
    let rooms = dataset.group_indices(GroupKind::Room);
    let ids = dataset.sensor_ids();
    let (lo, hi) = (features.timestamps[0], *features.timestamps.last().unwrap());
    for &si in rooms[0].iter().take(3) {
        println!("{}: {} events", ids[si], store.event_set(&ids[si], lo, hi).len());
    }
}
