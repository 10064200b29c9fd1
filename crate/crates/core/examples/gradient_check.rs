//! Record a small graph on the tape and compare its gradients with
//! central differences.
//!
//! cargo run --example gradient_check

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use simrec::numeric::{grad_check, Tape, Tensor};

fn loss(params: &[Tensor<f64>]) -> simrec::Result<(f64, Vec<Tensor<f64>>)> {
    let mut tape = Tape::<f64>::new();
    let x = tape.param(params[0].clone());
    let w = tape.param(params[1].clone());
    let neg = tape.param(params[2].clone());
    let h = tape.matmul(x, w, false, false)?;
    let h = tape.tanh(h);
    let pos = tape.row_dot(h, h)?;
    let scores = tape.matmul(h, neg, false, true)?;
    let out = tape.sampled_softmax_nll(pos, scores)?;
    let mut grads = tape.backward(out)?;
    let value = tape.value(out).data()[0];
    let g = [x, w, neg]
        .iter()
        .zip(params)
        .map(|(&v, p)| grads.take_or_zeros(v, p.shape()))
        .collect();
    Ok((value, g))
}

fn main() -> simrec::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let params = vec![
        Tensor::<f64>::uniform(&[6, 5], 1.0, &mut rng),
        Tensor::<f64>::uniform(&[5, 4], 1.0, &mut rng),
        Tensor::<f64>::uniform(&[9, 4], 1.0, &mut rng),
    ];
    let (value, _) = loss(&params)?;
    let check = grad_check(loss, &params, 1e-5, 200, 0)?;
    println!(
        "loss {value:.6}; {} coordinates, max relative error {:.2e}",
        check.coordinates, check.max_rel_error
    );
    Ok(())
}
