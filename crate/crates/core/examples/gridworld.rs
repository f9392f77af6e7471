//! Laplacian eigenvectors of a 10 × 10 room with a short wall, learned through the identity
//! shift `2I − L` so the smallest Laplacian modes become the top ones.

use omm::eval::eigenvalue_estimates;
use omm::problems::{gridworld_laplacian, GridWorld};
use omm::{fit_full_batch, mode_cosine, reference_eig, NestingConfig, OptimizerConfig};

const MAP: &str = "\
..........
..........
..........
....###...
..........
..........
..........
..........
..........
..........";

fn main() -> omm::Result<()> {
    let world = GridWorld::parse(MAP)?;
    let lap = gridworld_laplacian(&world)?;
    let reference = reference_eig(&lap.shifted_laplacian)?;
    let cfg = OptimizerConfig {
        lr: 0.05,
        max_steps: 100_000,
        trace_every: 1000,
        ..OptimizerConfig::default()
    };
    let (v, trace) = fit_full_batch(
        &lap.shifted_laplacian,
        11,
        &NestingConfig::sequential(),
        &cfg,
        None,
    )?;
    let laplacian_values: Vec<String> = eigenvalue_estimates(&lap.shifted_laplacian, &v)?
        .iter()
        .map(|x| format!("{:.5}", 2.0 - x))
        .collect();
    println!(
        "{} states, {:?} after {} steps",
        world.num_states(),
        trace.status,
        trace.last().map_or(0, |r| r.step)
    );
    println!(
        "smallest Laplacian eigenvalues: {}",
        laplacian_values.join(" ")
    );
    println!("mean |cos| {:.5}", mode_cosine(&v, &reference)?.mean);

    // the first nontrivial mode, drawn on the grid
    let mode = v.column(1);
    for r in 0..world.rows() {
        let row: String = (0..world.cols())
            .map(|c| match world.state_index(r, c) {
                None => '#',
                Some(s) if mode[s] > 0.0 => '+',
                Some(_) => '-',
            })
            .collect();
        println!("  {row}");
    }
    Ok(())
}
