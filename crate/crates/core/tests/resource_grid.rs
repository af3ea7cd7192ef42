use nr_latency::phy_profile::BandwidthProfile;
use nr_latency::resource_grid::{frame_alignment, GridGeometry, Placement};
use nr_latency::{ControlConfig, Direction, Error, NumerologyProfile, SlotGrid, SlotType, Ticks};
use proptest::prelude::*;

fn geometry(scs: u32, dir: Direction, control: ControlConfig) -> GridGeometry {
    let num = NumerologyProfile::default_for_scs(scs).unwrap();
    let bw = BandwidthProfile::new(20, scs).unwrap();
    GridGeometry::new(&num, &bw, &control, dir).unwrap()
}

fn overlaps(a: &Placement, b: &Placement) -> bool {
    a.slot == b.slot
        && a.first_rb < b.first_rb + b.n_rb
        && b.first_rb < a.first_rb + a.n_rb
        && a.first_symbol < b.first_symbol + b.n_symbols
        && b.first_symbol < a.first_symbol + a.n_symbols
}

#[test]
fn geometry_of_default_carriers() {
    let ul = geometry(30, Direction::Uplink, ControlConfig::conf1());
    assert_eq!((ul.n_rb, ul.data.clone(), ul.control_symbols), (51, 0..13, 1));
    assert_eq!((ul.slot_ticks, ul.symbol_ticks), (Ticks(672), Ticks(48)));
    // PUCCH closes the slot, PDCCH opens it
    assert_eq!(ul.control_start(2), Ticks(2 * 672 + 13 * 48));
    let dl = geometry(30, Direction::Downlink, ControlConfig::conf1());
    assert_eq!(dl.control_start(2), Ticks(2 * 672));
    assert_eq!(dl.next_control_occasion(Ticks(1)), Ticks(672));
    assert_eq!(dl.next_control_occasion(Ticks(672)), Ticks(672));
    let ecp = geometry(60, Direction::Downlink, ControlConfig::conf1());
    assert_eq!((ecp.n_rb, ecp.data.clone(), ecp.symbol_ticks), (24, 1..12, Ticks(28)));
}

#[test]
fn admissible_starts_by_slot_type() {
    let g = geometry(30, Direction::Downlink, ControlConfig::conf1());
    assert_eq!(g.admissible_starts(13).unwrap(), 1..2);
    assert_eq!(g.admissible_starts(7).unwrap(), 1..8);
    assert_eq!(g.admissible_starts(4).unwrap(), 1..11);
    assert!(g.admissible_starts(14).is_err());
    assert!(g.admissible_starts(0).is_err());
}

#[test]
fn frame_alignment_examples() {
    let g = geometry(30, Direction::Uplink, ControlConfig::conf1());
    assert_eq!(frame_alignment(Ticks(0), &g, SlotType::Full).unwrap(), Ticks(0));
    assert_eq!(frame_alignment(Ticks(1), &g, SlotType::Full).unwrap(), Ticks(671));
    assert_eq!(frame_alignment(Ticks(1), &g, SlotType::Mini7).unwrap(), Ticks(47));
    // past the last 7-symbol start (symbol 6) of slot 0: wait for slot 1
    assert_eq!(frame_alignment(Ticks(6 * 48 + 1), &g, SlotType::Mini7).unwrap(), Ticks(672 - 6 * 48 - 1));
    let dl = geometry(30, Direction::Downlink, ControlConfig::conf1());
    assert_eq!(frame_alignment(Ticks(0), &dl, SlotType::Full).unwrap(), Ticks(48));
}

#[test]
fn first_fit_packs_rbs_then_symbols_then_slots() {
    let g = geometry(30, Direction::Uplink, ControlConfig::conf1());
    let mut grid = SlotGrid::new(g.clone());
    let (a, wa) = grid.allocate(1, 30, 13, Ticks(0)).unwrap();
    let (b, wb) = grid.allocate(2, 21, 13, Ticks(0)).unwrap();
    let (c, wc) = grid.allocate(3, 1, 13, Ticks(0)).unwrap();
    assert_eq!((a.slot, a.first_rb, wa), (0, 0, Ticks(0)));
    assert_eq!((b.slot, b.first_rb, wb), (0, 30, Ticks(0)));
    assert_eq!((c.slot, c.first_rb, wc), (1, 0, Ticks(672)));
    assert_eq!(c.start(&g), Ticks(672));
    assert_eq!(c.end(&g), Ticks(672 + 13 * 48));

    let mut mini = SlotGrid::new(g.clone());
    let (p, _) = mini.allocate(1, 51, 4, Ticks(0)).unwrap();
    let (q, w) = mini.allocate(2, 10, 4, Ticks(0)).unwrap();
    assert_eq!((p.first_symbol, q.first_symbol, q.slot), (0, 4, 0));
    assert_eq!(w, Ticks(4 * 48));
}

#[test]
fn request_errors() {
    let g = geometry(30, Direction::Uplink, ControlConfig::conf1());
    let mut grid = SlotGrid::new(g.clone());
    assert!(matches!(grid.allocate(1, 52, 13, Ticks(0)), Err(Error::InvalidConfig(_))));
    assert!(matches!(grid.allocate(1, 0, 13, Ticks(0)), Err(Error::InvalidConfig(_))));
    assert!(grid.allocate(1, 1, 14, Ticks(0)).is_err());
    grid.allocate(1, 10, 13, Ticks(0)).unwrap();
    assert_eq!(grid.release_expired(Ticks(672 * 3)), 1);
    assert_eq!(grid.allocate(1, 1, 13, Ticks(10)), Err(Error::SlotReleased { requested: 0, first_live: 3 }));
    assert!(grid.allocate(1, 1, 13, Ticks(672 * 3)).is_ok());
}

#[test]
fn repetitions_take_the_same_rectangle_in_consecutive_slots() {
    let g = geometry(30, Direction::Uplink, ControlConfig::conf1());
    let mut grid = SlotGrid::new(g.clone());
    // block RBs 0..5 only in slot 1
    grid.allocate(9, 5, 13, Ticks(672)).unwrap();
    let ps = grid.allocate_repeated(1, 4, 13, Ticks(0), 4).unwrap();
    assert_eq!(ps.len(), 4);
    for (i, p) in ps.iter().enumerate() {
        assert_eq!((p.slot, p.first_rb, p.n_rb), (i as u64, 5, 4));
    }
}

#[test]
fn cancel_frees_and_ledger_records() {
    let g = geometry(30, Direction::Uplink, ControlConfig::conf1());
    let mut grid = SlotGrid::new(g.clone()).with_ledger();
    let (p, _) = grid.allocate(7, 51, 13, Ticks(0)).unwrap();
    assert!(!grid.is_free(&p));
    grid.cancel(7, &p);
    assert!(grid.is_free(&p));
    let (again, w) = grid.allocate(8, 51, 13, Ticks(0)).unwrap();
    assert_eq!((again, w), (p, Ticks(0)));
    assert_eq!(grid.ledger().len(), 2);
    assert!(grid.ledger()[0].cancelled && !grid.ledger()[1].cancelled);
    let mut csv = Vec::new();
    grid.write_trace(&mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    assert_eq!(text.lines().next().unwrap(), "slot,first_rb,last_rb,first_symbol,last_symbol,owner,cancelled");
    assert_eq!(text.lines().nth(1).unwrap(), "0,0,50,0,12,7,true");
}

#[test]
fn utilization_counts_data_area_only() {
    let g = geometry(30, Direction::Uplink, ControlConfig::conf1());
    let mut grid = SlotGrid::new(g.clone());
    grid.allocate(1, 51, 13, Ticks(0)).unwrap();
    assert_eq!(grid.utilization(Ticks(0)..Ticks(672)), 1.0);
    assert_eq!(grid.utilization(Ticks(0)..Ticks(1344)), 0.5);
    assert_eq!(grid.capacity_area(Ticks(0)..Ticks(672)), 51 * 13 * 48);
    // released slots keep their counters
    grid.release_expired(Ticks(5000));
    assert_eq!(grid.allocated_area(Ticks(0)..Ticks(672)), 51 * 13 * 48);
    assert_eq!(grid.utilization(Ticks(5)..Ticks(5)), 0.0);
}

#[derive(Clone, Debug)]
enum Op {
    Alloc { n_rb: u16, n_sym: u8, earliest: u64, copies: u8 },
    Cancel(usize),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        4 => (1u16..=51, prop_oneof![Just(4u8), Just(7), Just(13)], 0u64..672 * 6, 1u8..=2)
            .prop_map(|(n_rb, n_sym, earliest, copies)| Op::Alloc { n_rb, n_sym, earliest, copies }),
        1 => (0usize..64).prop_map(Op::Cancel),
    ]
}

proptest! {
    #[test]
    fn live_reservations_never_overlap(ops in prop::collection::vec(op(), 1..60)) {
        let g = geometry(30, Direction::Uplink, ControlConfig::conf1());
        let mut grid = SlotGrid::new(g.clone());
        let mut live: Vec<(u64, Placement)> = Vec::new();
        for (i, op) in ops.into_iter().enumerate() {
            match op {
                Op::Alloc { n_rb, n_sym, earliest, copies } => {
                    let ps = grid.allocate_repeated(i as u64, n_rb, n_sym, Ticks(earliest), copies).unwrap();
                    prop_assert!(ps[0].start(&g) >= Ticks(earliest));
                    for p in ps {
                        prop_assert!(g.data.contains(&p.first_symbol));
                        prop_assert!(p.first_symbol + p.n_symbols <= g.data.end);
                        prop_assert!(p.first_rb + p.n_rb <= g.n_rb);
                        for (_, q) in &live {
                            prop_assert!(!overlaps(&p, q), "{p:?} overlaps {q:?}");
                        }
                        live.push((i as u64, p));
                    }
                }
                Op::Cancel(k) if !live.is_empty() => {
                    let (owner, p) = live.remove(k % live.len());
                    grid.cancel(owner, &p);
                    prop_assert!(grid.is_free(&p));
                }
                Op::Cancel(_) => {}
            }
        }
        // conservation: the grid's allocated area is exactly the live placements
        let horizon = live.iter().map(|(_, p)| p.end(&g)).max().unwrap_or(Ticks(0)) + g.slot_ticks;
        let expected: u128 = live.iter().map(|(_, p)| p.area() as u128 * g.symbol_ticks.0 as u128).sum();
        prop_assert_eq!(grid.allocated_area(Ticks(0)..horizon), expected);
    }

    #[test]
    fn first_fit_start_is_earliest_free(n_rb in 1u16..=51, pre in 0usize..6, earliest in 0u64..2000) {
        let g = geometry(30, Direction::Downlink, ControlConfig::conf1());
        let mut grid = SlotGrid::new(g.clone());
        for i in 0..pre {
            grid.allocate(i as u64, 40, 4, Ticks(0)).unwrap();
        }
        let (p, w) = grid.allocate(99, n_rb, 4, Ticks(earliest)).unwrap();
        prop_assert_eq!(p.start(&g), Ticks(earliest) + w);
        // no admissible start between earliest and the chosen one has room
        let mut t = g.next_admissible(Ticks(earliest), 4).unwrap();
        while t < p.start(&g) {
            let slot = g.slot_of(t);
            let sym = ((t - g.slot_start(slot)).0 / g.symbol_ticks.0) as u8;
            let free = (0..=g.n_rb - n_rb).any(|rb| grid.is_free(&Placement { slot, first_rb: rb, n_rb, first_symbol: sym, n_symbols: 4 })
                && !(rb < p.first_rb + p.n_rb && p.first_rb < rb + n_rb && slot == p.slot && sym < p.first_symbol + 4 && p.first_symbol < sym + 4));
            prop_assert!(!free, "room at {t} before {}", p.start(&g));
            t = g.next_admissible(t + Ticks(1), 4).unwrap();
        }
    }

    #[test]
    fn release_keeps_future_slots(n in 1usize..20, cut in 0u64..672 * 10) {
        let g = geometry(30, Direction::Uplink, ControlConfig::conf1());
        let mut grid = SlotGrid::new(g.clone());
        let mut ps = Vec::new();
        for i in 0..n {
            ps.push(grid.allocate(i as u64, 51, 13, Ticks(0)).unwrap().0);
        }
        grid.release_expired(Ticks(cut));
        for p in ps.iter().filter(|p| p.slot >= cut / 672) {
            prop_assert!(!grid.is_free(p));
        }
    }
}
