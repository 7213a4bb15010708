//! Fits a precoder so that a random channel imitates a target layer, and
//! shows how the power penalty trades fit for transmit power.
//!
//! cargo run --release --example precoder_fit

use mimo_ota::linalg::{sample_cn, sample_cn_vector, seeded_rng, ComplexMatrix};
use mimo_ota::precoder::{expected_tx_power, naive_precoder, solve_closed_form, solve_gd, PrecoderProblem};

fn main() -> mimo_ota::Result<()> {
    let m = 8;
    let mut rng = seeded_rng(7, &[]);
    let w = sample_cn(m, m, 1.0 / m as f64, &mut rng);
    let h = sample_cn(m, m, 1.0, &mut rng);
    let columns: Vec<_> = (0..200).map(|_| sample_cn_vector(m, 1.0, &mut rng)).collect();
    let samples = ComplexMatrix::from_fn(m, columns.len(), |i, j| columns[j][i]);
    // Sample covariance of the signals the layer will see.
    let s = samples.matmul(&samples.hermitian())?.scale_real(1.0 / columns.len() as f64);

    let naive = naive_precoder(&w, &h)?;
    println!("naive H^-1 W: tx power {:.4}", expected_tx_power(&naive, &s)?);
    println!("{:>8} {:>10} {:>12} {:>10} {:>12}", "lambda1", "iters", "fit error", "tx power", "|gd - exact|");
    for lambda1 in [0.0, 0.01, 0.1, 1.0] {
        let problem = PrecoderProblem::new(w.clone(), h.clone(), s.clone(), lambda1)?;
        let sol = solve_gd(&problem)?;
        let exact = solve_closed_form(&problem)?;
        let fit = h.matmul(&sol.f)?.sub(&w)?.frobenius_norm() / w.frobenius_norm();
        let power = expected_tx_power(&sol.f, &s)?;
        println!(
            "{lambda1:>8} {:>10} {fit:>12.3e} {power:>10.4} {:>12.3e}",
            sol.iterations,
            sol.f.max_abs_diff(&exact)
        );
    }
    Ok(())
}
