//! Long-tailed ordinal data: class counts, the stratified split, and a CSV
//! round trip.
//!
//!     cargo run --example synthetic_data -- [imbalance_ratio]

use rankprompt::data::{generate_synthetic, load_csv, DatasetSpec, Split};

fn main() -> rankprompt::Result<()> {
    let rho: f64 = std::env::args().nth(1).and_then(|a| a.parse().ok()).unwrap_or(16.0);
    let spec = DatasetSpec {
        samples: 620,
        imbalance_ratio: rho,
        ..DatasetSpec::default()
    };
    println!("class counts at rho = {rho}: {:?}", spec.class_counts()?);

    let ds = generate_synthetic(&spec)?;
    let (_, train) = ds.split(Split::Train);
    let (_, test) = ds.split(Split::Test);
    println!("train per class: {:?}", train.class_counts());
    println!("test per class:  {:?}", test.class_counts());

    // Class centres sit on the first axis, one class_sep apart.
    for c in 0..spec.classes {
        let idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.labels.get(i) == c).collect();
        let mean = idx.iter().map(|&i| ds.features.get(i, 0)).sum::<f64>() / idx.len() as f64;
        println!("  class {c}: mean f0 = {mean:.3}");
    }

    let path = std::env::temp_dir().join("rankprompt_example_dataset.csv");
    ds.write_csv(&path)?;
    let back = load_csv(&path, spec.classes)?;
    println!("wrote {} and read it back unchanged: {}", path.display(), back == ds);
    Ok(())
}
