use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// Box-Muller off the uniform stream (rand_distr is not a cli dependency)
fn gauss(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(1e-12..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

/// Regenerates `data/synth200.csv`. The committed file was produced by this
/// exact function; rerun with `cargo test -p datacollab-cli --test fixtures
/// -- --ignored` if it ever needs to change.
#[test]
#[ignore]
fn generate_synth200() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let mut out = String::new();
    let names: Vec<String> = (1..=10).map(|k| format!("f{k}")).collect();
    out.push_str(&names.join(","));
    out.push_str(",label\n");
    for i in 0..200 {
        let class = i % 2;
        let center = if class == 0 { 0.8 } else { -0.8 };
        for j in 0..10 {
            let v: f64 = match j {
                0 | 5 => center + 0.5 * gauss(&mut rng),
                _ => rng.random_range(-1.0..1.0),
            };
            out.push_str(&format!("{v:?},"));
        }
        out.push_str(&format!("{}\n", if class == 0 { "pos" } else { "neg" }));
    }
    std::fs::write(
        concat!(env!("CARGO_MANIFEST_DIR"), "/../../data/synth200.csv"),
        out,
    )
    .unwrap();
}
