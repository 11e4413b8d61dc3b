// Green function of the killed walk on a box and its logarithmic growth.

use loopsoup::estimators::green::{green_gap, green_log_fit, POTENTIAL_CONSTANT};

pub fn run_example() -> loopsoup::Result<()> {
    for l in [32, 64] {
        let c = l / 2;
        let gap = green_gap(l, (c, c), (c + 1, c))?;
        println!("L = {l}: g(x,x) = {:.4}, neighbour gap = {:.5}", gap.g_xx, gap.gap);
    }
    let fit = green_log_fit(64, &[2, 4, 8, 12])?;
    println!("C = {:.4} (planar constant {POTENTIAL_CONSTANT:.4}), worst residual {:.4}", fit.constant, fit.max_residual);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
