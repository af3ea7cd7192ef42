use nr_latency::link_adaptation::{
    cqi_from_distance, mcs_from_cqi, mean_rbs_uniform, rbs_for_packet, transport_block_size, CqiMap, LinkProfile,
};
use nr_latency::{Error, McsTable};
use proptest::prelude::*;

const PAYLOAD: u32 = 300 * 8;

fn footprints(table: McsTable, n_sym: u32) -> Vec<u16> {
    (1..=15)
        .map(|cqi| rbs_for_packet(PAYLOAD, &mcs_from_cqi(cqi, table).unwrap(), n_sym, 2, 0, 275).unwrap())
        .collect()
}

#[test]
fn table_shapes() {
    assert_eq!(McsTable::Lep.entries().len(), 28);
    assert_eq!(McsTable::Hep.entries().len(), 29);
    assert_eq!(McsTable::Lep.target_bler(), 0.1);
    assert_eq!(McsTable::Hep.target_bler(), 1e-5);
    let top = McsTable::Lep.entry(27).unwrap();
    assert_eq!((top.modulation_order, top.code_rate_x1024), (8, 948.0));
    assert!(McsTable::Lep.entry(28).is_none());
}

#[test]
fn cqi_bounds() {
    assert_eq!(mcs_from_cqi(0, McsTable::Lep), Err(Error::CqiOutOfRange(0)));
    assert_eq!(mcs_from_cqi(16, McsTable::Hep), Err(Error::CqiOutOfRange(16)));
    // CQI 1 of the 256QAM table is below every MCS; the most robust entry is used
    assert_eq!(mcs_from_cqi(1, McsTable::Lep).unwrap().index, 0);
    assert_eq!(mcs_from_cqi(15, McsTable::Lep).unwrap().index, 27);
}

#[test]
fn cqi_to_mcs_never_exceeds_reported_efficiency() {
    for table in [McsTable::Lep, McsTable::Hep] {
        let mut last = 0.0;
        for cqi in 1..=15 {
            let m = mcs_from_cqi(cqi, table).unwrap();
            assert!(m.spectral_efficiency >= last, "{table} cqi {cqi}");
            last = m.spectral_efficiency;
        }
    }
}

#[test]
fn packet_footprints_per_cqi() {
    assert_eq!(footprints(McsTable::Lep, 13), [32, 20, 9, 6, 4, 4, 3, 3, 2, 2, 2, 2, 2, 2, 1]);
    assert_eq!(footprints(McsTable::Lep, 11), [38, 24, 10, 6, 5, 4, 4, 3, 3, 2, 2, 2, 2, 2, 2]);
    assert_eq!(footprints(McsTable::Lep, 7), [59, 37, 16, 10, 8, 6, 6, 5, 4, 4, 3, 3, 3, 2, 2]);
    assert_eq!(footprints(McsTable::Hep, 13), [127, 76, 49, 32, 20, 13, 9, 7, 6, 4, 4, 3, 3, 2, 2]);
    assert_eq!(footprints(McsTable::Hep, 11), [149, 90, 58, 38, 24, 15, 10, 8, 6, 5, 4, 4, 3, 3, 2]);
    assert_eq!(footprints(McsTable::Hep, 7), [235, 141, 91, 59, 37, 23, 16, 12, 10, 8, 6, 6, 5, 4, 4]);
}

#[test]
fn infeasible_packet_reports_error() {
    let m = mcs_from_cqi(5, McsTable::Hep).unwrap();
    assert_eq!(rbs_for_packet(PAYLOAD, &m, 7, 2, 0, 24), Err(Error::InfeasibleAllocation { payload_bits: PAYLOAD, max_rb: 24 }));
    assert_eq!(rbs_for_packet(PAYLOAD, &m, 11, 2, 0, 24), Ok(24));
}

#[test]
fn default_map_is_linear_over_the_cell() {
    let map = CqiMap::default();
    assert_eq!(map.bins().len(), 11);
    assert_eq!(map.bins()[0].1, 15);
    assert_eq!(map.bins()[10], (866.0, 5));
    let p = LinkProfile::new(McsTable::Lep, map);
    assert_eq!(cqi_from_distance(0.0, &p).unwrap(), 15);
    assert_eq!(cqi_from_distance(866.0 / 11.0 + 0.01, &p).unwrap(), 14);
    assert_eq!(cqi_from_distance(866.0, &p).unwrap(), 5);
    assert_eq!(cqi_from_distance(866.5, &p), Err(Error::OutsideCell(866.5)));
}

#[test]
fn map_validation() {
    assert!(CqiMap::new(vec![]).is_err());
    assert!(CqiMap::new(vec![(100.0, 10), (50.0, 9)]).is_err());
    assert!(CqiMap::new(vec![(100.0, 9), (200.0, 10)]).is_err());
    assert!(CqiMap::new(vec![(100.0, 16)]).is_err());
    assert!(CqiMap::new(vec![(0.0, 10)]).is_err());
    assert!(CqiMap::linear(500.0, 4, 7).is_err());
}

#[test]
fn mean_footprint_weights_bins_by_width() {
    // two bins of unequal width: 1/4 of the cell at CQI 15, 3/4 at CQI 10
    let map = CqiMap::new(vec![(100.0, 15), (400.0, 10)]).unwrap();
    let p = LinkProfile::new(McsTable::Lep, map);
    let (mean, bad) = mean_rbs_uniform(PAYLOAD, &p, 13, 2, 0, 51).unwrap();
    assert!((mean - (0.25 * 1.0 + 0.75 * 2.0)).abs() < 1e-12);
    assert_eq!(bad, 0.0);

    let hep = LinkProfile::new(McsTable::Hep, CqiMap::default());
    let (_, bad) = mean_rbs_uniform(PAYLOAD, &hep, 7, 2, 0, 24).unwrap();
    assert!((bad - 1.0 / 11.0).abs() < 1e-12);
}

fn any_entry() -> impl Strategy<Value = nr_latency::link_adaptation::McsEntry> {
    prop_oneof![(0u8..28).prop_map(|i| McsTable::Lep.entry(i).unwrap()), (0u8..29).prop_map(|i| McsTable::Hep.entry(i).unwrap())]
}

proptest! {
    #[test]
    fn tbs_grows_with_resources(m in any_entry(), n_rb in 1u32..200, n_sym in 1u32..14, layers in 1u32..=2) {
        let t = transport_block_size(&m, n_rb, n_sym, layers, 0);
        prop_assert!(t >= 24);
        prop_assert!(transport_block_size(&m, n_rb + 1, n_sym, layers, 0) >= t);
        prop_assert!(transport_block_size(&m, n_rb, n_sym + 1, layers, 0) >= t);
        prop_assert!(transport_block_size(&m, n_rb, n_sym, 2, 0) >= transport_block_size(&m, n_rb, n_sym, 1, 0));
        prop_assert!(transport_block_size(&m, n_rb, n_sym, layers, 12) <= t);
        prop_assert_eq!((t + 24) % 8, 0);
    }

    #[test]
    fn rbs_for_packet_is_minimal(m in any_entry(), bytes in 1u32..2000, n_sym in 2u32..=14, layers in 1u32..=2) {
        let bits = bytes * 8;
        match rbs_for_packet(bits, &m, n_sym, layers, 0, 275) {
            Ok(n) => {
                prop_assert!(transport_block_size(&m, n as u32, n_sym, layers, 0) >= bits);
                if n > 1 {
                    prop_assert!(transport_block_size(&m, n as u32 - 1, n_sym, layers, 0) < bits);
                }
            }
            Err(e) => {
                prop_assert_eq!(e, Error::InfeasibleAllocation { payload_bits: bits, max_rb: 275 });
                prop_assert!(transport_block_size(&m, 275, n_sym, layers, 0) < bits);
            }
        }
    }

    #[test]
    fn higher_cqi_never_needs_more_rbs(table in prop_oneof![Just(McsTable::Lep), Just(McsTable::Hep)], cqi in 1u8..15, n_sym in 4u32..=13) {
        let lo = rbs_for_packet(PAYLOAD, &mcs_from_cqi(cqi, table).unwrap(), n_sym, 2, 0, 4000).unwrap();
        let hi = rbs_for_packet(PAYLOAD, &mcs_from_cqi(cqi + 1, table).unwrap(), n_sym, 2, 0, 4000).unwrap();
        prop_assert!(hi <= lo);
    }
}
