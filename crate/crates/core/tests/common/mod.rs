//! Independent oracles shared by the integration tests. Nothing here calls
//! into the sampler's own code paths.
#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

/// Minimal non-negative root of `q = q^2 / (1 + delta) + delta / (1 + delta)`,
/// the extinction probability of the linear birth–death chain started at 1.
pub fn extinction_root(delta: f64) -> f64 {
    // q^2 - (1 + delta) q + delta = 0
    let b = -(1.0 + delta);
    let disc = (b * b - 4.0 * delta).sqrt();
    let roots = [(-b - disc) / 2.0, (-b + disc) / 2.0];
    roots
        .into_iter()
        .filter(|r| *r >= -1e-12)
        .fold(f64::INFINITY, f64::min)
        .clamp(0.0, 1.0)
}

/// `(1/3) (2/3)^k`.
pub fn geometric_two_thirds(k: u32) -> f64 {
    (2.0f64 / 3.0).powi(k as i32) / 3.0
}

/// Scalar power-law potential, summed term by term.
pub fn brute_potential(times: &[f64], t: f64, w: f64, lambda: f64) -> f64 {
    let mut acc = 0.0;
    for &s in times {
        acc += w * (1.0 + (t - s)).powf(-lambda);
    }
    acc
}

pub fn reference_rate(x: f64) -> f64 {
    (3.0 + 2.0 * x) / (1.0 + x)
}

/// Time-averaged fraction of neurons with zero and with exactly one
/// presynaptic spike, from a forward Ogata-thinning run on a ring of
/// nearest-neighbour neurons with the reference parameters.
pub fn ring_forward_fractions(neurons: usize, horizon: f64, burn_in: f64, seed: u64) -> (f64, f64) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let beta_max = 3.0;
    let mut presyn: Vec<Vec<f64>> = vec![Vec::new(); neurons];
    let (mut zeros, mut ones) = (neurons, 0usize);
    let (mut t, mut zero_time, mut one_time) = (0.0, 0.0, 0.0);
    let tally = |len: usize, zeros: &mut usize, ones: &mut usize, sign: isize| {
        let bump = |c: &mut usize| *c = (*c as isize + sign) as usize;
        match len {
            0 => bump(zeros),
            1 => bump(ones),
            _ => {}
        }
    };
    loop {
        let gap = -(1.0 - rng.random::<f64>()).ln() / (neurons as f64 * beta_max);
        if t + gap > horizon {
            break;
        }
        if t > burn_in {
            zero_time += gap * zeros as f64;
            one_time += gap * ones as f64;
        }
        t += gap;
        let i = rng.random_range(0..neurons);
        let x = brute_potential(&presyn[i], t, 1.0, 2.0);
        if rng.random::<f64>() * beta_max < reference_rate(x) {
            tally(presyn[i].len(), &mut zeros, &mut ones, -1);
            presyn[i].clear();
            tally(0, &mut zeros, &mut ones, 1);
            for j in [(i + neurons - 1) % neurons, (i + 1) % neurons] {
                tally(presyn[j].len(), &mut zeros, &mut ones, -1);
                presyn[j].push(t);
                tally(presyn[j].len(), &mut zeros, &mut ones, 1);
            }
        }
    }
    let total = (t - burn_in) * neurons as f64;
    (zero_time / total, one_time / total)
}
