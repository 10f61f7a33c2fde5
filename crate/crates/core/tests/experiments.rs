use mabuchi::flow::{flow_step, run_flow};
use mabuchi::geodesic::{distance, SolveOptions};
use mabuchi::npc::{cat0_check, random_potential};
use mabuchi::{Field, Grid};

fn grid() -> Grid {
    Grid::new(16).unwrap()
}

fn opts() -> SolveOptions {
    SolveOptions {
        eps_target: 1e-2,
        ..SolveOptions::default()
    }
}

#[test]
fn distance_is_symmetric_and_translation_invariant() {
    let a = random_potential(grid(), 11, 1e-2, 1);
    let b = random_potential(grid(), 12, 1e-2, 1);
    let ab = distance(&a, &b, &opts()).unwrap();
    let ba = distance(&b, &a, &opts()).unwrap();
    assert!((ab.value - ba.value).abs() <= ab.error_bar + ba.error_bar);

    let moved = distance(&a.shifted(3, 5), &b.shifted(3, 5), &opts()).unwrap();
    assert!((moved.value - ab.value).abs() < 1e-8, "{} vs {}", moved.value, ab.value);
}

#[test]
fn distance_between_shifts_is_the_shift() {
    let a = random_potential(grid(), 13, 1e-2, 1);
    let shifted = a.map(|v| v + 0.05);
    let d = distance(&a, &shifted, &opts()).unwrap();
    assert!((d.value - 0.05).abs() <= d.error_bar, "{} ± {}", d.value, d.error_bar);
}

#[test]
fn flow_commutes_with_constant_shifts() {
    let phi = random_potential(grid(), 14, 1e-2, 2);
    let a = flow_step(&phi, 1e-5).unwrap();
    let b = flow_step(&phi.map(|v| v - 0.7), 1e-5).unwrap();
    let diff = a.zip_map(&b, |x, y| x - y - 0.7);
    assert!(diff.max_abs() < 1e-12);
}

#[test]
fn flow_decreases_both_energies() {
    let phi = random_potential(grid(), 15, 1e-2, 2);
    let traj = run_flow(&phi, 1e-5, 100).unwrap();
    assert!(traj.calabi_energy.windows(2).all(|w| w[1] <= w[0]));
    assert!(traj.k_energy.windows(2).all(|w| w[1] <= w[0] + 1e-14));
    assert!(traj.min_rho.iter().all(|&r| r > 0.0));
    assert_eq!(traj.states.len(), 101);
}

#[test]
fn flat_metric_is_a_fixed_point() {
    let phi = Field::constant(grid(), 0.4);
    assert_eq!(flow_step(&phi, 1e-3).unwrap(), phi);
}

#[test]
fn seeded_triangle_satisfies_the_comparison() {
    let [a, b, c] = [21, 22, 23].map(|s| random_potential(grid(), s, 2e-3, 1));
    let r = cat0_check(&a, &b, &c, 0.5, &opts()).unwrap();
    assert!(r.margin >= -r.budget, "margin {} budget {}", r.margin, r.budget);
    assert!(r.budget <= 5e-4);
}
