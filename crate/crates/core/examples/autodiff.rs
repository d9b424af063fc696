//! Reverse-mode differentiation on the tape: checks a gradient against
//! central differences, then fits a tiny logistic model with AdamW.
//!
//! Usage:
//!   cargo run --example autodiff

use webcolor::tensor::{AdamW, Init, ParamStore, Tape, Tensor};

fn loss_of(store: &ParamStore, x: &Tensor, y: &Tensor) -> f64 {
    let tape = Tape::inference();
    let w = tape.param(store, store.ids().next().unwrap());
    let out = tape.sigmoid(tape.matmul(tape.constant(x.clone()), w).unwrap());
    let l = tape.mse(out, y, &vec![1.0; y.numel()]).unwrap();
    let v = tape.value(l).item();
    v
}

fn main() -> webcolor::Result<()> {
    let x = Tensor::from_rows(&[vec![0.0, 1.0, 1.0], vec![1.0, 0.0, 1.0], vec![1.0, 1.0, 1.0], vec![0.0, 0.0, 1.0]])?;
    let y = Tensor::from_rows(&[vec![1.0], vec![0.0], vec![1.0], vec![0.0]])?;
    let mut store = ParamStore::new();
    let w = store.add("w", Init::new(7).linear_weight(3, 1));

    // Analytic gradient from one backward pass.
    let tape = Tape::new();
    let out = tape.sigmoid(tape.matmul(tape.constant(x.clone()), tape.param(&store, w))?);
    let loss = tape.mse(out, &y, &[1.0; 4])?;
    let grads = tape.backward(loss)?;
    let analytic = grads.param(w).unwrap().clone();

    // Central differences, h = 1e-5.
    let h = 1e-5;
    for j in 0..3 {
        let mut plus = store.clone();
        plus.value_mut(w).data_mut()[j] += h;
        let mut minus = store.clone();
        minus.value_mut(w).data_mut()[j] -= h;
        let numeric = (loss_of(&plus, &x, &y) - loss_of(&minus, &x, &y)) / (2.0 * h);
        println!("dL/dw{j}: analytic {:+.8}, numeric {:+.8}", analytic.data()[j], numeric);
    }

    let mut opt = AdamW::new(0.1).with_weight_decay(0.0);
    for step in 0..=200 {
        let tape = Tape::new();
        let out = tape.sigmoid(tape.matmul(tape.constant(x.clone()), tape.param(&store, w))?);
        let loss = tape.mse(out, &y, &[1.0; 4])?;
        if step % 50 == 0 {
            println!("step {step:3}: loss {:.5}", tape.value(loss).item());
        }
        let grads = tape.backward(loss)?.into_param_grads(store.len());
        opt.step(&mut store, &grads)?;
    }
    Ok(())
}
