//! Tours the evaluation metrics on data with known answers: Fréchet audio
//! distance between synthetic Gaussian clouds, word error rate on hand
//! alignments, and the match-rate pair (MMPMR, FMMPMR) swept across
//! thresholds.

use std::error::Error;

use rand::Rng;
use voxmorph::metrics::fad::{frechet_distance, gaussian_stats};
use voxmorph::metrics::match_rate::{fmmpmr, mmpmr};
use voxmorph::metrics::wer::wer;
use voxmorph::seeding::rng;

fn cloud(center: &[f64], spread: f64, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| {
            center
                .iter()
                .map(|c| c + r.gen_range(-spread..spread))
                .collect()
        })
        .collect()
}

fn main() -> Result<(), Box<dyn Error>> {
    // Identical clouds have distance 0; shifting one by d in one axis adds
    // d^2 to the squared-mean term.
    let a = cloud(&[0.0, 0.0, 0.0], 0.5, 4000, 1);
    let shifted: Vec<Vec<f64>> = a.iter().map(|v| vec![v[0] + 2.0, v[1], v[2]]).collect();
    let sa = gaussian_stats(&a)?;
    let sb = gaussian_stats(&shifted)?;
    println!(
        "FAD of a cloud to itself:      {:.6}",
        frechet_distance(&sa, &sa)?
    );
    println!(
        "FAD after shifting by 2.0:     {:.6} (mean term alone: 4.0)",
        frechet_distance(&sa, &sb)?
    );

    println!("\nword error rate:");
    for (reference, hypothesis) in [
        ("the cat sat on the mat", "the cat sat on the mat"),
        ("the cat sat on the mat", "the cat sat on a mat"),
        ("the cat sat on the mat", "cat sat the mat quickly"),
        ("The cat, sat on the MAT.", "the cat sat on the mat"),
    ] {
        println!(
            "  {:.4}  ref={reference:?} hyp={hypothesis:?}",
            wer(reference, hypothesis)?,
        );
    }

    // Four morphs, each scored against both of its sources. MMPMR counts a
    // morph when its better score clears the threshold; FMMPMR only when
    // both scores do.
    let scores = [(0.91, 0.88), (0.85, 0.80), (0.75, 0.93), (0.66, 0.71)];
    println!("\n{:>10} {:>8} {:>8}", "threshold", "MMPMR", "FMMPMR");
    for tau in [0.60, 0.70, 0.79, 0.87] {
        println!(
            "{tau:>10.2} {:>7.1}% {:>7.1}%",
            mmpmr(&scores, tau)?,
            fmmpmr(&scores, tau)?,
        );
    }
    Ok(())
}
