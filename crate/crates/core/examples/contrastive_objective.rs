//! Evaluate the contrastive and matching losses on a small batch and take
//! one gradient step by hand.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tpas::objective::{in_batch_probabilities, objective, sample_hard_negatives, AdapterParams, Batch};

fn main() -> tpas::Result<()> {
    let images = vec![vec![1.0, 0.1, 0.0], vec![0.0, 1.0, 0.2], vec![0.3, 0.0, 1.0]];
    let texts = vec![vec![0.9, 0.3, 0.1], vec![0.2, 1.0, 0.0], vec![0.1, 0.4, 0.8]];
    let batch = Batch::from_rows(&images, &texts)?;
    let mut params = AdapterParams::identity(3);
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    let (i2t, t2i) = in_batch_probabilities(&batch, &params)?;
    println!("image-to-text probabilities:");
    for row in i2t.chunks(3) {
        println!("  {row:.3?}");
    }
    let negatives = sample_hard_negatives(&i2t, &t2i, batch.len(), &mut rng)?;
    println!("hard negative text per image: {:?}", negatives.text_for_image);

    let (before, grads) = objective(&batch, &negatives, &params, 1.0)?;
    let lr = 0.5;
    for (w, g) in params.w_text.iter_mut().zip(&grads.w_text) {
        *w -= lr * g;
    }
    for (w, g) in params.w_image.iter_mut().zip(&grads.w_image) {
        *w -= lr * g;
    }
    params.match_scale -= lr * grads.match_scale;
    params.match_bias -= lr * grads.match_bias;
    let (after, _) = objective(&batch, &negatives, &params, 1.0)?;
    println!(
        "total {:.5} -> {:.5} (contrastive {:.5} -> {:.5})",
        before.total, after.total, before.contrastive, after.contrastive
    );
    Ok(())
}
