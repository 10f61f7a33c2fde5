use mabuchi::geodesic::PathGrid;
use mabuchi::grid::{Field, Grid};
use mabuchi::io;
use mabuchi::npc::random_potential;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn field_records_round_trip(half in 4usize..12, values in prop::collection::vec(any::<f64>(), 24 * 24)) {
        let n = 2 * half;
        let f = Field::from_values(Grid::new(n).unwrap(), values[..n * n].to_vec()).unwrap();
        let back = io::field_from_bytes(&io::field_to_bytes(&f)).unwrap();
        let same = f.values().iter().zip(back.values()).all(|(a, b)| a.to_bits() == b.to_bits());
        prop_assert!(same);
    }

    #[test]
    fn csv_round_trips_finite_values(seed in any::<u64>(), amp in 1e-6f64..10.0) {
        let f = random_potential(Grid::new(16).unwrap(), seed, amp, 4);
        let mut text = Vec::new();
        io::write_field_csv(&mut text, &f).unwrap();
        prop_assert_eq!(io::read_field_csv(&text[..]).unwrap(), f);
    }
}

#[test]
fn path_files_round_trip() {
    let g = Grid::new(8).unwrap();
    let a = random_potential(g, 1, 1e-2, 2);
    let b = random_potential(g, 2, 1e-2, 2);
    let p = PathGrid::linear_guess(&a, &b, 6, 0.25).unwrap();
    let mut bytes = Vec::new();
    io::write_path(&mut bytes, &p).unwrap();
    assert_eq!(bytes.len(), 10 + 4 + 4 + 8 + 7 * (5 + 4 + 8 * 64));
    let q = io::read_path(&bytes[..]).unwrap();
    assert_eq!(q.eps(), 0.25);
    assert_eq!(q.slices(), p.slices());
    assert!(io::read_path(&bytes[..bytes.len() - 1]).is_err());
}
