//! Gradient-check cases for every tape primitive, shared with other test
//! targets.

use std::rc::Rc;

use bridgeflow_tensor::{concat, Tape, Tensor, Var};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Inputs for the gradient checks; kept away from the LeakyReLU kink.
pub fn away_from_zero<R: Rng>(shape: Vec<usize>, r: &mut R) -> Tensor {
    Tensor::from_fn(shape, |_| {
        let v: f64 = r.gen_range(0.05..1.5);
        if r.gen_bool(0.5) {
            v
        } else {
            -v
        }
    })
}

pub type Primitive = fn(&mut ChaCha8Rng) -> (Vec<Tensor>, Box<dyn for<'t> Fn(&'t Tape, &[Var<'t>]) -> bridgeflow_tensor::Result<Var<'t>>>);

pub fn weighted_sum<'t>(tape: &'t Tape, v: Var<'t>) -> bridgeflow_tensor::Result<Var<'t>> {
    // Non-uniform weights so every output coordinate matters differently.
    let w = tape.constant(Tensor::from_fn(v.shape(), |i| 0.3 + (i % 7) as f64 * 0.17 - (i % 3) as f64 * 0.2));
    v.mul(w)?.sum_all()
}

pub fn primitives() -> Vec<(&'static str, Primitive)> {
    vec![
        ("add", |r| {
            let (m, n) = (r.gen_range(1..5), r.gen_range(1..5));
            (
                vec![Tensor::randn(vec![m, n], 1.0, r), Tensor::randn(vec![n], 1.0, r)],
                Box::new(|t, v| weighted_sum(t, v[0].add(v[1])?)),
            )
        }),
        ("sub", |r| {
            let (m, n) = (r.gen_range(1..5), r.gen_range(1..5));
            (
                vec![Tensor::randn(vec![m, n], 1.0, r), Tensor::randn(vec![m, n], 1.0, r)],
                Box::new(|t, v| weighted_sum(t, v[0].sub(v[1])?)),
            )
        }),
        ("mul", |r| {
            let (m, n) = (r.gen_range(1..5), r.gen_range(1..5));
            (
                vec![Tensor::randn(vec![m, n], 1.0, r), Tensor::randn(vec![n], 1.0, r)],
                Box::new(|t, v| weighted_sum(t, v[0].mul(v[1])?)),
            )
        }),
        ("matmul", |r| {
            let (m, k, n) = (r.gen_range(1..5), r.gen_range(1..5), r.gen_range(1..5));
            (
                vec![Tensor::randn(vec![m, k], 1.0, r), Tensor::randn(vec![k, n], 1.0, r)],
                Box::new(|t, v| weighted_sum(t, v[0].matmul(v[1])?)),
            )
        }),
        ("conv1d", |r| {
            let (b, ci, co, l) = (r.gen_range(1..3), r.gen_range(1..3), r.gen_range(1..4), r.gen_range(4..12));
            let stride = r.gen_range(1..3);
            (
                vec![
                    Tensor::randn(vec![b, ci, l], 1.0, r),
                    Tensor::randn(vec![co, ci, 3], 1.0, r),
                    Tensor::randn(vec![co], 1.0, r),
                ],
                Box::new(move |t, v| weighted_sum(t, v[0].conv1d(v[1], Some(v[2]), stride, 1)?)),
            )
        }),
        ("leaky_relu", |r| {
            let n = r.gen_range(1..12);
            (
                vec![away_from_zero(vec![n], r)],
                Box::new(|t, v| weighted_sum(t, v[0].leaky_relu(0.2)?)),
            )
        }),
        ("silu", |r| {
            let n = r.gen_range(1..12);
            (vec![Tensor::randn(vec![n], 2.0, r)], Box::new(|t, v| weighted_sum(t, v[0].silu()?)))
        }),
        ("softmax_segmented", |r| {
            let (e, h, s) = (r.gen_range(2..10), r.gen_range(1..3), r.gen_range(1..4));
            let seg: Rc<[usize]> = (0..e).map(|i| i % s).collect::<Vec<_>>().into();
            (
                vec![Tensor::randn(vec![e, h], 1.0, r)],
                Box::new(move |t, v| weighted_sum(t, v[0].softmax_segmented(seg.clone(), s)?)),
            )
        }),
        ("mean_axis", |r| {
            let (a, b, c) = (r.gen_range(1..4), r.gen_range(1..4), r.gen_range(1..4));
            let axis = r.gen_range(0..3);
            (
                vec![Tensor::randn(vec![a, b, c], 1.0, r)],
                Box::new(move |t, v| weighted_sum(t, v[0].mean_axis(axis)?)),
            )
        }),
        ("sum_axis", |r| {
            let (a, b) = (r.gen_range(1..5), r.gen_range(1..5));
            let axis = r.gen_range(0..2);
            (
                vec![Tensor::randn(vec![a, b], 1.0, r)],
                Box::new(move |t, v| weighted_sum(t, v[0].sum_axis(axis)?)),
            )
        }),
        ("concat_axis", |r| {
            let (a, b, c) = (r.gen_range(1..4), r.gen_range(1..4), r.gen_range(1..4));
            (
                vec![Tensor::randn(vec![a, b], 1.0, r), Tensor::randn(vec![a, c], 1.0, r)],
                Box::new(|t, v| weighted_sum(t, concat(&[v[0], v[1]], 1)?)),
            )
        }),
        ("log", |r| {
            let n = r.gen_range(1..8);
            (
                vec![Tensor::from_fn(vec![n], |_| r.gen_range(0.2..3.0))],
                Box::new(|t, v| weighted_sum(t, v[0].log()?)),
            )
        }),
        ("exp", |r| {
            let n = r.gen_range(1..8);
            (vec![Tensor::randn(vec![n], 1.0, r)], Box::new(|t, v| weighted_sum(t, v[0].exp()?)))
        }),
        ("square", |r| {
            let n = r.gen_range(1..8);
            (vec![Tensor::randn(vec![n], 1.0, r)], Box::new(|t, v| weighted_sum(t, v[0].square()?)))
        }),
        ("transpose", |r| {
            let (a, b) = (r.gen_range(1..5), r.gen_range(1..5));
            (
                vec![Tensor::randn(vec![a, b], 1.0, r)],
                Box::new(|t, v| weighted_sum(t, v[0].transpose()?)),
            )
        }),
        ("broadcast", |r| {
            let (a, n) = (r.gen_range(1..5), r.gen_range(1..4));
            (
                vec![Tensor::randn(vec![a], 1.0, r)],
                Box::new(move |t, v| weighted_sum(t, v[0].broadcast(n)?)),
            )
        }),
        ("gather_rows", |r| {
            let (rows, cols, e) = (r.gen_range(1..5), r.gen_range(1..4), r.gen_range(1..8));
            let idx: Rc<[usize]> = (0..e).map(|_| r.gen_range(0..rows)).collect::<Vec<_>>().into();
            (
                vec![Tensor::randn(vec![rows, cols], 1.0, r)],
                Box::new(move |t, v| weighted_sum(t, v[0].gather_rows(idx.clone())?)),
            )
        }),
        ("segment_sum", |r| {
            let (e, cols, s) = (r.gen_range(1..8), r.gen_range(1..4), r.gen_range(1..4));
            let seg: Rc<[usize]> = (0..e).map(|_| r.gen_range(0..s)).collect::<Vec<_>>().into();
            (
                vec![Tensor::randn(vec![e, cols], 1.0, r)],
                Box::new(move |t, v| weighted_sum(t, v[0].segment_sum(seg.clone(), s)?)),
            )
        }),
        ("edge_scores", |r| {
            let (m, e, heads, dim) = (r.gen_range(1..5), r.gen_range(1..9), r.gen_range(1..3), r.gen_range(1..4));
            let src: Rc<[usize]> = (0..e).map(|_| r.gen_range(0..m)).collect::<Vec<_>>().into();
            let dst: Rc<[usize]> = (0..e).map(|_| r.gen_range(0..m)).collect::<Vec<_>>().into();
            (
                vec![
                    Tensor::randn(vec![m, heads * dim], 1.0, r),
                    Tensor::randn(vec![m, heads * dim], 1.0, r),
                    Tensor::randn(vec![heads, dim], 1.0, r),
                ],
                Box::new(move |t, v| weighted_sum(t, v[0].edge_scores(v[1], v[2], src.clone(), dst.clone(), 0.2)?)),
            )
        }),
        ("attend", |r| {
            let (m, e, heads, dim) = (r.gen_range(1..5), r.gen_range(1..9), r.gen_range(1..3), r.gen_range(1..4));
            let src: Rc<[usize]> = (0..e).map(|_| r.gen_range(0..m)).collect::<Vec<_>>().into();
            let dst: Rc<[usize]> = (0..e).map(|_| r.gen_range(0..m)).collect::<Vec<_>>().into();
            (
                vec![Tensor::randn(vec![m, heads * dim], 1.0, r), Tensor::randn(vec![e, heads], 1.0, r)],
                Box::new(move |t, v| weighted_sum(t, v[0].attend(v[1], src.clone(), dst.clone(), m)?)),
            )
        }),
        ("row_scale", |r| {
            let (rows, cols) = (r.gen_range(1..5), r.gen_range(1..4));
            (
                vec![Tensor::randn(vec![rows, cols], 1.0, r), Tensor::randn(vec![rows], 1.0, r)],
                Box::new(|t, v| weighted_sum(t, v[0].row_scale(v[1])?)),
            )
        }),
    ]
}
