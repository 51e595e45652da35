//! Numerical audit of the reverse-mode gradients: run the full
//! encoder -> projector -> bilinear-similarity -> InfoNCE stack on a
//! tiny model and compare every analytic parameter gradient against
//! central finite differences at two step sizes.
//!
//! The coarse step (h = 1e-3) is the stricter test of scale but can
//! straddle a ReLU kink on unlucky draws, in which case the *numerical*
//! side is the one that is wrong; the fine step (h = 1e-5) stays local.
//!
//! Run with: `cargo run --example gradient_check`

use ausculta::nn::grad_check;

fn main() {
    println!("max relative gradient error over all parameters and both input views\n");
    println!("{:>6} {:>14} {:>14}", "seed", "h = 1e-3", "h = 1e-5");
    for seed in 0u64..8 {
        let coarse = grad_check::full_stack_max_rel_err(seed, 1e-3);
        let fine = grad_check::full_stack_max_rel_err(seed, 1e-5);
        let flag = if coarse > 1e-4 { "  <- kink straddled by the coarse step" } else { "" };
        println!("{seed:>6} {coarse:>14.3e} {fine:>14.3e}{flag}");
    }
    println!("\nrelative error = |analytic - numerical| / max(|analytic|, |numerical|, 1e-2)");
}
