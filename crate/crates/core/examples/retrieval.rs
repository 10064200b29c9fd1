//! Exact top-N retrieval with several interest vectors per user.
//!
//! cargo run --example retrieval

use std::collections::BTreeSet;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use simrec::eval::{metrics, retrieve_topn};
use simrec::model::ItemAtlas;
use simrec::numeric::Tensor;

fn main() -> simrec::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let atlas = ItemAtlas { embeddings: Tensor::<f32>::uniform(&[1001, 16], 1.0, &mut rng) };

    // two interests: copies of items 10 and 500
    let mut interests = atlas.row(10).to_vec();
    interests.extend_from_slice(atlas.row(500));

    let top = retrieve_topn(&interests, &atlas, 20)?;
    println!("top 20: {top:?}");

    let targets: BTreeSet<usize> = [10, 500, 777].into_iter().collect();
    let m = metrics(&top, &targets, 20)?;
    println!("recall {:.3} ndcg {:.3} hit {}", m.recall, m.ndcg, m.hit);
    Ok(())
}
