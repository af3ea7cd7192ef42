use nr_latency::link_adaptation::CqiMap;
use nr_latency::scenario::{
    aperiodic_gap, drop_stale, generate_arrivals, nearest_neighbours, place_vehicles, vehicle_count, Disposition,
    PendingPacket, Scenario, TrafficModel, VehicleQueue, LANES,
};
use nr_latency::Ticks;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;

#[test]
fn vehicle_counts() {
    assert_eq!(vehicle_count(10.0, LANES, 866.0), 104);
    assert_eq!(vehicle_count(20.0, LANES, 866.0), 208);
    assert_eq!(vehicle_count(80.0, LANES, 866.0), 831);
}

#[test]
fn placement_covers_the_road_and_maps_cqi() {
    let mut rng = ChaCha12Rng::seed_from_u64(1);
    let map = CqiMap::default();
    let v = place_vehicles(40.0, LANES, 866.0, &map, &mut rng).unwrap();
    assert_eq!(v.len(), 416);
    assert!(v.iter().all(|x| (-866.0..=866.0).contains(&x.position_m) && (1..=LANES).contains(&x.lane)));
    assert!(v.iter().all(|x| x.distance_m == x.position_m.abs() && (5..=15).contains(&x.cqi)));
    assert!(v.iter().any(|x| x.position_m < 0.0) && v.iter().any(|x| x.position_m > 0.0));
    assert!(place_vehicles(0.0, LANES, 866.0, &map, &mut rng).is_err());
    assert!(place_vehicles(10.0, LANES, 1000.0, &map, &mut rng).is_err());
}

#[test]
fn neighbours_are_sorted_by_distance() {
    let mut rng = ChaCha12Rng::seed_from_u64(2);
    let v = place_vehicles(20.0, LANES, 866.0, &CqiMap::default(), &mut rng).unwrap();
    let n = nearest_neighbours(&v, 5, 6);
    assert_eq!(n.len(), 6);
    assert!(!n.contains(&5));
    let d = |i: usize| (v[i].position_m - v[5].position_m).abs();
    assert!(n.windows(2).all(|w| d(w[0]) <= d(w[1])));
    let farthest = d(*n.last().unwrap());
    assert!((0..v.len()).filter(|i| *i != 5 && !n.contains(i)).all(|i| d(i) >= farthest));
}

#[test]
fn periodic_arrivals_are_evenly_spaced() {
    let mut rng = ChaCha12Rng::seed_from_u64(3);
    let horizon = Ticks::from_ms(1000.0);
    let a = generate_arrivals(&TrafficModel::Periodic { period_ms: 100.0 }, horizon, 50, &mut rng).unwrap();
    for per in &a {
        assert_eq!(per.len(), 10);
        assert!(per[0] < Ticks::from_ms(100.0));
        assert!(per.windows(2).all(|w| w[1] - w[0] == Ticks::from_ms(100.0)));
    }
    assert!(generate_arrivals(&TrafficModel::Periodic { period_ms: 0.0 }, horizon, 1, &mut rng).is_err());
}

#[test]
fn aperiodic_gaps_have_the_right_mean_and_floor() {
    let mut rng = ChaCha12Rng::seed_from_u64(4);
    let n = 100_000;
    let gaps: Vec<Ticks> = (0..n).map(|_| aperiodic_gap(20.0, &mut rng)).collect();
    assert!(gaps.iter().all(|g| *g >= Ticks::from_ms(10.0)));
    let mean = gaps.iter().map(|g| g.as_ms()).sum::<f64>() / n as f64;
    // Exp(mean 10 ms) has sd 10 ms, so the sample mean has sd ~0.03 ms
    assert!((mean - 20.0).abs() < 0.15, "{mean}");
}

#[test]
fn drop_rule() {
    let mut q = VehicleQueue::default();
    assert_eq!(drop_stale(&mut q, 1, Ticks(0)), Disposition::NoDrop);
    // packet 1 still untransmitted when packet 2 arrives
    assert_eq!(drop_stale(&mut q, 2, Ticks(100)), Disposition::Dropped(1));
    q.pending = Some(PendingPacket { packet_id: 2, transmitted_at: Some(Ticks(150)) });
    assert_eq!(drop_stale(&mut q, 3, Ticks(150)), Disposition::NoDrop);
    q.pending = Some(PendingPacket { packet_id: 3, transmitted_at: Some(Ticks(300)) });
    assert_eq!(drop_stale(&mut q, 4, Ticks(299)), Disposition::Dropped(3));
    assert_eq!(q.pending.unwrap().packet_id, 4);
}

#[test]
fn scenario_round_trips_through_json() {
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    let s = Scenario::generate(
        10.0,
        LANES,
        866.0,
        &CqiMap::default(),
        &TrafficModel::Aperiodic { mean_ms: 50.0 },
        Ticks::from_ms(500.0),
        &mut rng,
    )
    .unwrap();
    let back = Scenario::from_json(&s.to_json().unwrap()).unwrap();
    assert_eq!(back, s);
    assert_eq!(s.packet_count(), s.arrivals.iter().map(Vec::len).sum::<usize>());
    assert!(Scenario::from_json("{").is_err());
}

#[test]
fn same_seed_same_world() {
    let gen = |seed| {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        Scenario::generate(
            20.0,
            LANES,
            866.0,
            &CqiMap::default(),
            &TrafficModel::Periodic { period_ms: 100.0 },
            Ticks::from_ms(300.0),
            &mut rng,
        )
        .unwrap()
    };
    assert_eq!(gen(9), gen(9));
    assert_ne!(gen(9), gen(10));
}

proptest! {
    #[test]
    fn arrivals_stay_inside_the_horizon(seed in any::<u64>(), mean in 5.0f64..200.0, horizon_ms in 1.0f64..2000.0, aperiodic in any::<bool>()) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let model = if aperiodic { TrafficModel::Aperiodic { mean_ms: mean } } else { TrafficModel::Periodic { period_ms: mean } };
        let horizon = Ticks::from_ms(horizon_ms);
        let a = generate_arrivals(&model, horizon, 5, &mut rng).unwrap();
        for per in a {
            prop_assert!(per.iter().all(|t| *t < horizon));
            prop_assert!(per.windows(2).all(|w| w[1] - w[0] >= Ticks::from_ms(mean / 2.0)));
        }
    }
}
