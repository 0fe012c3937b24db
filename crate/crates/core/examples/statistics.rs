//! AUC by pair counting and the paired t-test used to compare training sets.
//!
//! cargo run --example statistics

use lesionsynth::evalharness::{auc, mean_std, paired_t_test};

fn main() -> lesionsynth::Result<()> {
    let scores = [0.9, 0.8, 0.8, 0.4, 0.3, 0.1];
    let labels = [true, true, false, true, false, false];
    println!("AUC = {:.4}", auc(&scores, &labels)?);

    let a = [1.0, 2.0, 3.0];
    let b = [1.5, 2.5, 3.6];
    let r = paired_t_test(&a, &b)?;
    println!(
        "t = {:.3}, df = {}, p = {:.6}, significant: {}",
        r.t, r.df, r.p_value, r.significant
    );

    let (m, s) = mean_std(&[0.81, 0.84, 0.83, 0.80]);
    println!("AUC {:.1} ± {:.1} %", 100.0 * m, 100.0 * s);

    match paired_t_test(&[0.8, 0.9], &[0.7, 0.8]) {
        Ok(r) => println!("p = {}", r.p_value),
        Err(e) => println!("constant differences: {e}"),
    }
    Ok(())
}
