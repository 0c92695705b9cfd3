use vocabflip_core::TokenTable;
use vocabflip_tinyformer::{ModelConfig, Tape, TransformerModel};

fn loss_and_grads(model: &TransformerModel, pairs: &[(&str, &str)]) -> (f64, Vec<Vec<f64>>) {
    let table = TokenTable::standard();
    let mut grads: Vec<Vec<f64>> = model.params().iter().map(|t| vec![0.0; t.len()]).collect();
    let mut total = 0.0;
    for (src, tgt) in pairs {
        let mut tape = Tape::new(model.params());
        let (l, _) = model
            .loss(
                &mut tape,
                &table.parse(src).unwrap(),
                &table.parse(tgt).unwrap(),
                0.25,
                None,
            )
            .unwrap();
        total += tape.scalar(l);
        tape.backward(l).unwrap();
        tape.accumulate_into(&mut grads);
    }
    (total, grads)
}

/// Central differences on a sample of entries from every parameter block.
#[test]
fn full_model_gradients_match_finite_differences() {
    let config = ModelConfig {
        d_model: 16,
        n_heads: 2,
        d_ff: 32,
        dropout: 0.0,
        ..ModelConfig::default()
    };
    let mut model = TransformerModel::new(config, 11).unwrap();
    for (i, t) in model.params_mut().iter_mut().enumerate() {
        for (j, x) in t.data_mut().iter_mut().enumerate() {
            *x += 0.05 * ((i * 31 + j * 7) as f64).sin();
        }
    }
    let pairs = [("reverse: a b c", "c b a"), ("k l </s> l k", "1")];
    let (_, analytic) = loss_and_grads(&model, &pairs);
    let h = 1e-5;
    let names = model.param_names().to_vec();
    for p in 0..model.params().len() {
        let n = model.params()[p].len();
        let picks: Vec<usize> = (0..6).map(|s| (s * 7919 + p * 13) % n).collect();
        let (mut num, mut den) = (0.0f64, 0.0f64);
        for &j in &picks {
            let orig = model.params()[p].data()[j];
            model.params_mut()[p].data_mut()[j] = orig + h;
            let up = loss_and_grads(&model, &pairs).0;
            model.params_mut()[p].data_mut()[j] = orig - h;
            let down = loss_and_grads(&model, &pairs).0;
            model.params_mut()[p].data_mut()[j] = orig;
            let fd = (up - down) / (2.0 * h);
            let a = analytic[p][j];
            num += (fd - a).powi(2);
            den += fd.powi(2) + a.powi(2);
        }
        if den.sqrt() < 1e-8 {
            // Key biases have an identically zero gradient.
            assert!(num.sqrt() < 1e-8, "{}", names[p]);
            assert!(names[p].ends_with(".bk"), "{} has no gradient", names[p]);
            continue;
        }
        let rel = num.sqrt() / den.sqrt();
        assert!(rel < 1e-4, "{}: relative error {rel}", names[p]);
    }
}
