//! Reverse-mode gradients on the tape, checked against central finite
//! differences.

use bridgeflow::tensor::{GradCheck, Tape, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() -> bridgeflow::tensor::Result<()> {
    let tape = Tape::new();
    let x = tape.param(Tensor::from_parts(vec![2, 3], vec![0.5, -1.0, 2.0, 0.1, 0.3, -0.7]));
    let w = tape.param(Tensor::from_parts(vec![3, 2], vec![1.0, 0.0, -1.0, 2.0, 0.5, 0.5]));
    let loss = x.matmul(w)?.silu()?.square()?.sum_all()?;
    let grads = tape.backward(loss)?;
    println!("loss {:.6}", loss.value().item());
    println!("dL/dx {:?}", grads.get(x).expect("x is a parameter").data());
    println!("dL/dw {:?}", grads.get(w).expect("w is a parameter").data());

    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let inputs = vec![x.value().clone(), w.value().clone()];
    let report = GradCheck::default().run(
        &inputs,
        |_, v| v[0].matmul(v[1])?.silu()?.square()?.sum_all(),
        &mut rng,
    )?;
    println!("finite-difference check: max relative error {:.2e}", report.max_rel_err);
    Ok(())
}
