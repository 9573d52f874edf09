use std::sync::Arc;

use rand::seq::index::sample;
use rand::Rng;

use crate::error::Result;
use crate::mdp::{Layout, MdpBuilder, QTable, SamplingDistribution, TabularMdp};
use crate::Scalar;

/// Random MDP without terminals: each row has a random support of
/// 1..=n_states successors with random weights, and each reachable triple
/// gets a reward drawn uniformly from `[-r_bound, r_bound]`.
pub fn random_mdp<T: Scalar, R: Rng + ?Sized>(
    n_states: usize,
    n_actions: usize,
    gamma: T,
    r_bound: f64,
    rng: &mut R,
) -> Result<TabularMdp<T>> {
    let mut b = MdpBuilder::new(n_states, n_actions, gamma);
    for s in 0..n_states {
        for a in 0..n_actions {
            let k = rng.random_range(1..=n_states);
            let support = sample(rng, n_states, k).into_vec();
            let weights: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
            let total: f64 = weights.iter().sum();
            // last entry absorbs rounding so the row sums to one
            let mut acc = T::zero();
            for (j, (&s2, &w)) in support.iter().zip(&weights).enumerate() {
                let p = if j + 1 == k { T::one() - acc } else { T::of(w / total) };
                acc = acc + p;
                let r = T::of(rng.random_range(-r_bound..=r_bound));
                b.add(s, a, s2, p, r);
            }
        }
    }
    b.build()
}

/// Strictly positive random distribution over `n` entries, each weight
/// drawn from `[lo, 1]` before normalisation.
pub fn random_distribution<T: Scalar, R: Rng + ?Sized>(
    n: usize,
    lo: f64,
    rng: &mut R,
) -> Result<SamplingDistribution<T>> {
    let w: Vec<T> = (0..n).map(|_| T::of(rng.random_range(lo..=1.0))).collect();
    SamplingDistribution::from_weights(&w)
}

/// Table with entries uniform in `[lo, hi]`.
pub fn random_q<T: Scalar, R: Rng + ?Sized>(layout: Arc<Layout>, lo: f64, hi: f64, rng: &mut R) -> QTable<T> {
    let values = (0..layout.n_pairs())
        .map(|_| T::of(if lo == hi { lo } else { rng.random_range(lo..=hi) }))
        .collect();
    QTable::from_values(layout, values).expect("finite uniform draws")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Purpose};

    #[test]
    fn random_mdps_are_valid_and_bounded() {
        let mut rng = stream(1, 0, Purpose::MdpGeneration);
        for _ in 0..50 {
            let ns = rng.random_range(1..=6);
            let na = rng.random_range(1..=4);
            let mdp = random_mdp::<f64, _>(ns, na, 0.9, 1.0, &mut rng).unwrap();
            assert!(mdp.r_max() <= 1.0);
            for s in 0..ns {
                for a in 0..na {
                    let sum: f64 = mdp.row(s, a).iter().sum();
                    assert!((sum - 1.0).abs() <= 1e-12);
                }
            }
        }
    }

    #[test]
    fn random_distribution_is_positive() {
        let mut rng = stream(2, 0, Purpose::MdpGeneration);
        let d = random_distribution::<f64, _>(12, 0.2, &mut rng).unwrap();
        assert!(d.d_min() > 0.0);
        assert!((d.probs().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}
