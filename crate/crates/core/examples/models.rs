//! The four model variants at their default sizes, each run on a small
//! batch of random windows.

use bridgeflow::nets::{Model, ModelConfig, Variant};
use bridgeflow::tensor::Tensor;
use bridgeflow::WindowSample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> bridgeflow::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let windows: Vec<WindowSample> = (0..3)
        .map(|i| WindowSample {
            start_time: 5.0 * i as f64,
            tensor: Tensor::randn(vec![8, 1, 250], 0.1, &mut rng),
            label: [0.0; 4],
        })
        .collect();
    let batch: Vec<&WindowSample> = windows.iter().collect();

    for variant in Variant::ALL {
        let model = Model::new(ModelConfig::with_variant(variant), 0)?;
        let y = model.predict(&batch)?;
        println!("{variant:8} {:>9} parameters, output {:?}, first row {:.4?}", model.param_count(), y.shape(), y.row(0));
    }
    Ok(())
}
