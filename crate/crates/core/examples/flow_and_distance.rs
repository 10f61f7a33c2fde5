//! Flows a seeded potential and prints its distance to the start.
//!
//! cargo run --release -p mabuchi --example flow_and_distance

use mabuchi::flow::run_flow;
use mabuchi::geodesic::{distance, SolveOptions};
use mabuchi::kahler::calabi_energy;
use mabuchi::npc::random_potential;
use mabuchi::{make_metric, Grid};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let grid = Grid::new(16)?;
    let phi = random_potential(grid, 7, 1e-2, 1);
    let traj = run_flow(&phi, 1e-5, 200)?;
    let end = traj.last();

    println!(
        "calabi energy {:.4e} -> {:.4e}",
        calabi_energy(&make_metric(&phi)?),
        calabi_energy(&make_metric(end)?)
    );
    let d = distance(&phi, end, &SolveOptions::default())?;
    println!("distance travelled {:.6e} ± {:.1e}", d.value, d.error_bar);
    Ok(())
}
