// Step-by-step view of the genealogy a filter keeps: the Eve indices and the
// sliding window of Enoch indices, with the number of distinct ancestors at
// each level.

use pfvar::models::{make_linear_gaussian, simulate, LinearGaussianParams};
use pfvar::{AncestorLevel, Lag, ParticleFilter};

pub fn run_example() -> pfvar::Result<()> {
    let params = LinearGaussianParams::REFERENCE;
    let model = make_linear_gaussian(params)?;
    let ys = simulate(params.into(), 8, 11)?.observations;
    let mut pf = ParticleFilter::new(&model, 8, Lag::Finite(3), 11)?;

    for &y in &ys {
        pf.step(y)?;
        println!("n = {} (window starts at {})", pf.time(), pf.window_start());
        println!("  eve    {:?}  distinct {}", pf.eve(), pf.unique_ancestor_count(AncestorLevel::Eve)?);
        for (m, row) in pf.window_rows() {
            let distinct = pf.unique_ancestor_count(AncestorLevel::Time(m))?;
            println!("  E[{m:>2}]  {row:?}  distinct {distinct}");
        }
        println!("  index slots held: {}", pf.genealogy_slots());
    }
    Ok(())
}

fn main() -> pfvar::Result<()> {
    run_example()
}
