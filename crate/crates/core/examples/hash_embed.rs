//! Hash embeddings: texts sharing words land close, disjoint texts near
//! orthogonal.

use icp::corpus::{tokenize, TokenizerConfig};
use icp::embed::{dot, hash_embed};

fn main() -> icp::Result<()> {
    let cfg = TokenizerConfig::default();
    let texts = [
        "the river flooded the valley after the spring rain",
        "spring rain flooded the river valley again",
        "compilers lower syntax trees into machine code",
    ];
    let vecs: Vec<Vec<f32>> = texts
        .iter()
        .map(|t| hash_embed(&tokenize(t, &cfg), 256))
        .collect::<icp::Result<_>>()?;
    for i in 0..texts.len() {
        for j in i + 1..texts.len() {
            println!("cos({i}, {j}) = {:.3}", dot(&vecs[i], &vecs[j]));
        }
    }
    Ok(())
}
