// Weakly self-avoiding walk weights and the inverse-temperature surrogate.

use loopsoup::threshold::{beta_lower_bound, chi_exact, chi_mc};
use loopsoup::weights::WeightFunction;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn run_example() -> loopsoup::Result<()> {
    let d = 2;
    for (name, u) in [("U = 1", WeightFunction::constant()), ("1/n!", WeightFunction::factorial())] {
        let mut series = Vec::new();
        for k in 1..=9 {
            let c = chi_exact(&u, d, k)?;
            series.push((k, c.value));
            println!("{name:>6} chi({k}) = {:.6}  {}", c.value, c.exact.unwrap_or_default());
        }
        let b = beta_lower_bound(&series, d, 4)?;
        println!("{name:>6} rate {:.4}  beta~ {:.4}  conservative {:.4}", b.rate, b.beta_tilde, b.beta_single);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mc = chi_mc(&WeightFunction::pairwise(1.0)?, d, 20, 20_000, &mut rng)?;
    println!("pairwise(1) chi(20) ~ {:.4} +- {:.4}", mc.value, mc.se);
    Ok(())
}

#[allow(dead_code)]
fn main() {
    run_example().unwrap();
}
