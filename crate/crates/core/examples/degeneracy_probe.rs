//! Shows why the generator puts a nonlinearity in front of instance norm.

use monopix::model::{in_degeneracy_probe, NormMode, Nonlinearity};

fn main() {
    println!("{:<10} {:<12} {:>14} {:>11}", "norm", "pre-norm", "max |diff|", "degenerate");
    for norm in [NormMode::Identity, NormMode::Instance, NormMode::Batch] {
        for nl in [Nonlinearity::None, Nonlinearity::LeakyRelu(0.2)] {
            let r = in_degeneracy_probe(norm, nl, 0.2, 0.8, 0);
            println!("{:<10} {:<12} {:>14.3e} {:>11}", format!("{norm:?}"), format!("{nl:?}"), r.max_abs_diff, r.degenerate);
        }
    }
}
