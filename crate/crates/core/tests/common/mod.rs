#![allow(dead_code)]

use std::sync::Arc;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_xorshift::XorShiftRng;
use ridc::problems::IvpSystem;

fn exact(x: f64) -> BigRational {
    BigRational::from_float(x).expect("finite")
}

/// Integral over `[s, e]` of each Lagrange basis polynomial, in exact
/// rational arithmetic on the binary values of the inputs.
pub fn rational_quadrature(nodes: &[f64], s: f64, e: f64) -> Vec<f64> {
    let t: Vec<BigRational> = nodes.iter().map(|&x| exact(x)).collect();
    let (s, e) = (exact(s), exact(e));
    (0..t.len())
        .map(|i| {
            // Ascending monomial coefficients of prod_{j != i} (x - t_j).
            let mut coef = vec![BigRational::one()];
            let mut denom = BigRational::one();
            for (j, tj) in t.iter().enumerate().filter(|(j, _)| *j != i) {
                let mut next = vec![BigRational::zero(); coef.len() + 1];
                for (d, c) in coef.iter().enumerate() {
                    next[d + 1] += c;
                    next[d] -= c * tj;
                }
                coef = next;
                denom *= &t[i] - &t[j];
            }
            let mut integral = BigRational::zero();
            let (mut sp, mut ep) = (s.clone(), e.clone());
            for (d, c) in coef.iter().enumerate() {
                integral += c * (&ep - &sp) / BigRational::from_integer(BigInt::from(d + 1));
                sp *= &s;
                ep *= &e;
            }
            (integral / denom).to_f64().expect("representable")
        })
        .collect()
}

/// `|Σ values - 1|` with the sum taken exactly.
pub fn exact_sum_deviation(values: &[f64]) -> f64 {
    let sum = values.iter().fold(BigRational::zero(), |acc, &v| acc + exact(v));
    (sum - BigRational::one()).to_f64().expect("representable").abs()
}

/// Sorted distinct nodes in `[0, 1]` and an interval inside their span.
pub fn random_stencil(rng: &mut XorShiftRng, k: usize) -> (Vec<f64>, f64, f64) {
    loop {
        let mut nodes: Vec<f64> = (0..k).map(|_| rng.random::<f64>()).collect();
        nodes.sort_by(f64::total_cmp);
        if nodes.windows(2).any(|w| w[1] - w[0] <= 1e-12) {
            continue;
        }
        let (lo, hi) = (nodes[0], nodes[k - 1]);
        let a = lo + (hi - lo) * rng.random::<f64>();
        let b = lo + (hi - lo) * rng.random::<f64>();
        if (a - b).abs() > 1e-9 {
            return (nodes, a.min(b), a.max(b));
        }
    }
}

pub fn rng(seed: u64) -> XorShiftRng {
    XorShiftRng::seed_from_u64(seed)
}

/// `y' = t`, `y(0) = 0` on `[0, 1]`.
pub fn ramp() -> IvpSystem {
    IvpSystem::new("ramp", 0.0, 1.0, vec![0.0], Arc::new(|t, _y, dy| dy[0] = t)).unwrap()
}

/// `y' = y`, `y(0) = 1` on `[0, 1]`.
pub fn growth() -> IvpSystem {
    IvpSystem::new("growth", 0.0, 1.0, vec![1.0], Arc::new(|_t, y, dy| dy[0] = y[0])).unwrap()
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
