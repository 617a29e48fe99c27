//! Compares the three fusion methods on a pair of unit embeddings: slerp
//! keeps unit norm and moves at constant angular speed, lerp keeps unit
//! norm but bunches samples near the midpoint, and linear averaging gives
//! up the hypersphere entirely.

use std::error::Error;

use voxmorph::embedding::{angle_between, EmbeddingKind, SpeakerEmbedding};
use voxmorph::interpolation::{lerp, linear_average, slerp};

fn norm(values: &[f64]) -> f64 {
    values.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn main() -> Result<(), Box<dyn Error>> {
    // Two unit vectors 60 degrees apart, padded to a realistic dimension.
    let mut a = vec![0.0; 192];
    let mut b = vec![0.0; 192];
    a[0] = 1.0;
    b[0] = 0.5;
    b[1] = 0.75f64.sqrt();
    let e_a = SpeakerEmbedding::new(EmbeddingKind::Timbre, a)?;
    let e_b = SpeakerEmbedding::new(EmbeddingKind::Timbre, b)?;
    let omega = angle_between(&e_a, &e_b)?;
    println!(
        "source angle: {:.4} rad ({:.1} deg)",
        omega,
        omega.to_degrees()
    );

    println!(
        "\n{:>5} {:>14} {:>14} {:>14}",
        "alpha", "slerp angle", "lerp angle", "avg norm"
    );
    for step in 0..=8 {
        let alpha = step as f64 / 8.0;
        let s = slerp(&e_a, &e_b, alpha)?;
        let l = lerp(&e_a, &e_b, alpha)?;
        let s_angle = stable_angle(e_a.values(), s.values());
        let l_angle = stable_angle(e_a.values(), l.values());
        let avg = linear_average(&e_a, &e_b)?;
        println!(
            "{alpha:>5.3} {:>10.4} rad {:>10.4} rad {:>14.6}",
            s_angle,
            l_angle,
            norm(avg.values()),
        );
    }

    // Constant angular speed means the angle from A grows linearly in alpha.
    let quarter = slerp(&e_a, &e_b, 0.25)?;
    let drift = stable_angle(e_a.values(), quarter.values()) - 0.25 * omega;
    println!("\nslerp angle drift at alpha 0.25: {drift:.2e} rad");

    let mid = slerp(&e_a, &e_b, 0.5)?;
    println!("slerp midpoint norm: {:.17}", norm(mid.values()));
    Ok(())
}

fn stable_angle(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot.clamp(-1.0, 1.0).acos()
}
