use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use specvit_nn::layers::{EncoderBlock, MultiHeadAttention};
use specvit_nn::{ParamStore, Tape};

fn tokens(rng: &mut ChaCha8Rng, b: usize, n: usize, d: usize) -> Vec<f64> {
    (0..b * n * d).map(|_| rng.random_range(-1.0..1.0)).collect()
}

fn permute_tokens(x: &[f64], n: usize, d: usize, perm: &[usize]) -> Vec<f64> {
    let mut out = Vec::with_capacity(x.len());
    for batch in x.chunks(n * d) {
        for &src in perm {
            out.extend_from_slice(&batch[src * d..(src + 1) * d]);
        }
    }
    out
}

#[test]
fn attention_is_permutation_equivariant() {
    let (b, n, d) = (2, 6, 8);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut store = ParamStore::<f64>::new();
    let attn = MultiHeadAttention::new(&mut store, "attn", d, 2, &mut rng);
    let block = EncoderBlock::new(&mut store, "blk", d, 4, 16, &mut rng);
    let x = tokens(&mut rng, b, n, d);
    let perm = [3, 0, 5, 1, 4, 2];

    let run = |input: Vec<f64>| {
        let mut t = Tape::new();
        let p = store.bind(&mut t);
        let x = t.leaf(input, vec![b, n, d]).unwrap();
        let a = attn.forward(&mut t, &p, x).unwrap();
        let y = block.forward(&mut t, &p, a).unwrap();
        t.value(y).to_vec()
    };
    let expected = permute_tokens(&run(x.clone()), n, d, &perm);
    let got = run(permute_tokens(&x, n, d, &perm));
    for (e, g) in expected.iter().zip(&got) {
        assert!((e - g).abs() < 1e-12);
    }
}

#[test]
fn attention_rows_are_convex_mixtures_of_values() {
    // With identity value/output maps each output lies inside the hull of
    // the input tokens, so it cannot exceed their per-feature range.
    let (b, n, d) = (1, 5, 4);
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut store = ParamStore::<f64>::new();
    let attn = MultiHeadAttention::new(&mut store, "attn", d, 1, &mut rng);
    for lin in [&attn.value, &attn.out] {
        let w = store.get_mut(lin.weight).tensor.data_mut();
        w.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..d {
            w[i * d + i] = 1.0;
        }
    }
    let x = tokens(&mut rng, b, n, d);
    let mut t = Tape::new();
    let p = store.bind(&mut t);
    let xv = t.leaf(x.clone(), vec![b, n, d]).unwrap();
    let y = attn.forward(&mut t, &p, xv).unwrap();
    for f in 0..d {
        let col: Vec<f64> = (0..n).map(|i| x[i * d + f]).collect();
        let lo = col.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = col.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        for i in 0..n {
            let v = t.value(y)[i * d + f];
            assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
        }
    }
}
