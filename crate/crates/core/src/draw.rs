//! Seeded random smooth fields supported in Ω'.

use rand::Rng;
use rand_xoshiro::rand_core::SeedableRng;
use rand_xoshiro::SplitMix64;

use crate::grid::{Bump, DomainMasks, ScalarField};

/// The generator used for every randomized draw.
pub fn rng(seed: u64) -> SplitMix64 {
    SplitMix64::seed_from_u64(seed)
}

/// Sum of three smooth bumps whose supports lie inside Ω', each with
/// amplitude drawn uniformly from `[-amplitude, amplitude]`.
pub fn smooth_draw(masks: &DomainMasks, rng: &mut SplitMix64, amplitude: f64) -> ScalarField {
    let grid = masks.grid();
    let rect = grid.rect();
    let (mp, _) = masks.margins();
    let bumps: Vec<Bump> = (0..3)
        .map(|_| {
            let r = rng.random_range(0.08..0.12);
            let lo_x = rect.x0 + mp + r;
            let hi_x = rect.x0 + rect.width - mp - r;
            let lo_y = rect.y0 + mp + r;
            let hi_y = rect.y0 + rect.height - mp - r;
            let cx = if hi_x > lo_x { rng.random_range(lo_x..hi_x) } else { 0.5 * (lo_x + hi_x) };
            let cy = if hi_y > lo_y { rng.random_range(lo_y..hi_y) } else { 0.5 * (lo_y + hi_y) };
            Bump::new((cx, cy), r, rng.random_range(-amplitude..amplitude))
        })
        .collect();
    ScalarField::from_real_fn(grid, |x, y| bumps.iter().map(|b| b.eval(x, y)).sum())
}
