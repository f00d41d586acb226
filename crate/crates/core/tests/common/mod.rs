use aligned_xai::model::{backward, bce_l2_loss, forward, ArchitectureDescriptor, ModelParams};
use aligned_xai::Image;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Loss plus the on/off pattern of every ReLU in the batch.
fn loss(p: &ModelParams<f64>, imgs: &[Image], y: &[Vec<bool>], lambda: f64) -> (f64, Vec<bool>) {
    let (probs, cache) = forward(p, imgs).unwrap();
    let pattern = cache
        .samples
        .iter()
        .flat_map(|s| s.blocks.iter().flat_map(|b| b.act.iter().map(|&a| a > 0.0)))
        .collect();
    (bce_l2_loss(&probs, y, p, lambda).unwrap(), pattern)
}

fn central(
    p: &mut ModelParams<f64>,
    bi: usize,
    j: usize,
    h: f64,
    imgs: &[Image],
    y: &[Vec<bool>],
    lambda: f64,
) -> (f64, bool) {
    let orig = p.blocks[bi].data[j];
    p.blocks[bi].data[j] = orig + h;
    let (lp, pp) = loss(p, imgs, y, lambda);
    p.blocks[bi].data[j] = orig - h;
    let (lm, pm) = loss(p, imgs, y, lambda);
    p.blocks[bi].data[j] = orig;
    ((lp - lm) / (2.0 * h), pp == pm)
}

pub struct BlockCheck {
    pub name: String,
    pub checked: usize,
    /// Coordinates whose `±h` interval crosses a ReLU kink; these are
    /// re-checked with a step of `h/100`.
    pub kinked: usize,
    pub failures: usize,
}

/// Central differences at step `h` on `per_block` random coordinates of
/// every parameter block, for a micro-batch of two random images.
pub fn check(seed: u64, size: usize, per_block: usize, h: f64) -> Vec<BlockCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let arch = ArchitectureDescriptor::default_for(size, size, 1, 3);
    let mut p = ModelParams::<f64>::init(&arch, seed).unwrap();
    for b in &mut p.blocks {
        for v in &mut b.data {
            if b.name.starts_with("head") || b.name.ends_with("bias") {
                *v = rng.random_range(-0.5..0.5);
            }
        }
    }
    let imgs: Vec<Image> = (0..2)
        .map(|_| {
            let d = (0..size * size).map(|_| rng.random::<f32>()).collect();
            Image::from_vec(size, size, 1, d).unwrap()
        })
        .collect();
    let y: Vec<Vec<bool>> = (0..2)
        .map(|_| (0..3).map(|_| rng.random()).collect())
        .collect();
    let lambda = 1e-3;
    let (_, cache) = forward(&p, &imgs).unwrap();
    let g = backward(&p, &cache, &y, lambda).unwrap();
    let mut out = Vec::new();
    for bi in 0..p.blocks.len() {
        let n = p.blocks[bi].data.len();
        let (mut kinked, mut failures) = (0, 0);
        let picks: Vec<usize> = (0..per_block.min(n))
            .map(|_| rng.random_range(0..n))
            .collect();
        for &j in &picks {
            let (mut fd, smooth) = central(&mut p, bi, j, h, &imgs, &y, lambda);
            if !smooth {
                kinked += 1;
                fd = central(&mut p, bi, j, h / 100.0, &imgs, &y, lambda).0;
            }
            let an = g.blocks[bi].data[j];
            let abs = (fd - an).abs();
            if abs > 1e-6 && abs > 1e-3 * fd.abs().max(an.abs()) {
                eprintln!("{} [{j}]: fd {fd:e} analytic {an:e}", p.blocks[bi].name);
                failures += 1;
            }
        }
        out.push(BlockCheck {
            name: p.blocks[bi].name.clone(),
            checked: picks.len(),
            kinked,
            failures,
        });
    }
    out
}
