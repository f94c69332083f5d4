//! Lagrange quadrature and interpolation weights on non-uniform stencils.
//!
//! All weights are computed in coordinates where the target interval `[s, e]`
//! is mapped to `[0, 1]`; quadrature results are rescaled by `e - s`.

use thiserror::Error;

/// Largest stencil supported.
pub const MAX_STENCIL: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StencilError {
    #[error("stencil must have between 1 and {MAX_STENCIL} nodes, got {0}")]
    Size(usize),
    #[error("stencil nodes must be finite and strictly increasing")]
    NotIncreasing,
    #[error("nodes {0} and {1} coincide")]
    DuplicateNode(f64, f64),
    #[error("quadrature interval [{0}, {1}] must be finite with s < e")]
    BadInterval(f64, f64),
    #[error("previous level finished with {available} nodes, stencil needs {needed}")]
    TooFewNodes { available: usize, needed: usize },
    #[error("interval [{s}, {e}] is not covered by the previous level")]
    Uncovered { s: f64, e: f64 },
}

/// Ordered quadrature/interpolation nodes together with the interval
/// `[start, end]` they integrate over.
#[derive(Debug, Clone, PartialEq)]
pub struct Stencil {
    nodes: Vec<f64>,
    start: f64,
    end: f64,
}

impl Stencil {
    pub fn new(nodes: Vec<f64>, start: f64, end: f64) -> Result<Self, StencilError> {
        if nodes.is_empty() || nodes.len() > MAX_STENCIL {
            return Err(StencilError::Size(nodes.len()));
        }
        if !(start.is_finite() && end.is_finite() && start < end) {
            return Err(StencilError::BadInterval(start, end));
        }
        if nodes.iter().any(|t| !t.is_finite()) || nodes.windows(2).any(|w| w[0] >= w[1]) {
            return Err(StencilError::NotIncreasing);
        }
        let lo = nodes[0].min(start);
        let hi = nodes[nodes.len() - 1].max(end);
        let tol = 1e-14 * (hi - lo);
        if let Some(w) = nodes.windows(2).find(|w| w[1] - w[0] <= tol) {
            return Err(StencilError::DuplicateNode(w[0], w[1]));
        }
        Ok(Self { nodes, start, end })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn end(&self) -> f64 {
        self.end
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn scaled(&self, t: f64) -> f64 {
        (t - self.start) / (self.end - self.start)
    }

    fn scaled_nodes(&self) -> Vec<f64> {
        self.nodes.iter().map(|&t| self.scaled(t)).collect()
    }
}

/// Quadrature and interpolation weights for one stencil.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightSet {
    pub quadrature: Vec<f64>,
    pub interpolation: Vec<f64>,
    pub point: f64,
}

impl WeightSet {
    pub fn new(stencil: &Stencil, point: f64) -> Self {
        Self {
            quadrature: quadrature_weights(stencil),
            interpolation: interpolation_weights(stencil, point),
            point,
        }
    }
}

/// Weights `alpha_i = ∫_s^e L_i(t) dt` of the Lagrange basis on the stencil
/// nodes, so that `Σ alpha_i g(tau_i)` integrates any polynomial of degree
/// below `k` exactly.
pub fn quadrature_weights(stencil: &Stencil) -> Vec<f64> {
    let u = stencil.scaled_nodes();
    let k = u.len();
    let h = stencil.end - stencil.start;
    let mut coeffs = vec![0.0; k];
    (0..k)
        .map(|i| {
            // Monomial coefficients of prod_{j != i} (x - u_j), lowest degree first.
            coeffs.iter_mut().for_each(|c| *c = 0.0);
            coeffs[0] = 1.0;
            let mut deg = 0;
            let mut denom = 1.0;
            for (j, &uj) in u.iter().enumerate() {
                if j == i {
                    continue;
                }
                deg += 1;
                for d in (1..=deg).rev() {
                    coeffs[d] = coeffs[d - 1] - uj * coeffs[d];
                }
                coeffs[0] *= -uj;
                denom *= u[i] - uj;
            }
            // Integrate over [0, 1], highest degree first.
            let integral: f64 = (0..=deg).rev().map(|d| coeffs[d] / (d + 1) as f64).sum();
            h * (integral / denom)
        })
        .collect()
}

/// Weights `gamma_i = prod_{j != i} (x - tau_j) / (tau_i - tau_j)` of the
/// Lagrange interpolant at `point`. Extrapolation is allowed.
///
/// The rounding residual `1 - Σ gamma_i` (summed with compensation) is added
/// to the largest weight not exceeding one in magnitude, where it is
/// representable, so the weights reproduce constants exactly.
pub fn interpolation_weights(stencil: &Stencil, point: f64) -> Vec<f64> {
    let u = stencil.scaled_nodes();
    let x = stencil.scaled(point);
    let mut gamma: Vec<f64> = (0..u.len())
        .map(|i| {
            u.iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .fold(1.0, |acc, (_, &uj)| acc * ((x - uj) / (u[i] - uj)))
        })
        .collect();
    let residual = 1.0 - compensated_sum(&gamma);
    if residual != 0.0 {
        let target = gamma
            .iter()
            .enumerate()
            .filter(|(_, g)| g.abs() <= 1.0)
            .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .or_else(|| gamma.iter().enumerate().min_by(|a, b| a.1.abs().total_cmp(&b.1.abs())))
            .map(|(i, _)| i)
            .expect("non-empty stencil");
        gamma[target] += residual;
    }
    gamma
}

/// Neumaier summation.
fn compensated_sum(values: &[f64]) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for &v in values {
        let t = sum + v;
        comp += if sum.abs() >= v.abs() {
            (sum - t) + v
        } else {
            (v - t) + sum
        };
        sum = t;
    }
    sum + comp
}

/// Continuous extension `Σ gamma_i · value(tau_i)` at `point`. `values[i]`
/// belongs to `stencil.nodes()[i]`.
pub fn eval_extension<V: AsRef<[f64]>>(stencil: &Stencil, values: &[V], point: f64) -> Vec<f64> {
    let gamma = interpolation_weights(stencil, point);
    combine(&gamma, values)
}

/// `Σ w_i · v_i` for equally sized vectors `v_i`.
pub fn combine<V: AsRef<[f64]>>(weights: &[f64], values: &[V]) -> Vec<f64> {
    debug_assert_eq!(weights.len(), values.len());
    let m = values.first().map_or(0, |v| v.as_ref().len());
    let mut out = vec![0.0; m];
    for (w, v) in weights.iter().zip(values) {
        for (o, x) in out.iter_mut().zip(v.as_ref()) {
            *o += w * x;
        }
    }
    out
}

/// Result of looking for a stencil on a previous level.
#[derive(Debug, Clone, PartialEq)]
pub enum Selection {
    /// Indices of `k` consecutive nodes in the slice passed to [`select_stencil`].
    Ready(std::ops::Range<usize>),
    /// More previous-level nodes are needed before this interval can be handled.
    Stall,
    /// The interval contains too many previous-level nodes for any window of
    /// `k` consecutive nodes; it has to be split at those nodes.
    TooWide,
}

/// Picks `k` consecutive nodes of `prev` with `min <= s` and `max >= e`.
///
/// `prev` holds the committed node times of the previous level (sorted, with
/// `prev[0] <= s`); `finished` says whether more nodes can still arrive. Among
/// valid windows the one minimising `|#(nodes < s) - #(nodes > e)|` wins,
/// ties going to the leftmost. The choice only depends on nodes up to the
/// window's right end, so it is the same whether or not later nodes are known.
pub fn select_stencil(prev: &[f64], finished: bool, k: usize, s: f64, e: f64) -> Result<Selection, StencilError> {
    if !(s < e) {
        return Err(StencilError::BadInterval(s, e));
    }
    let n = prev.len();
    if n == 0 || prev[0] > s {
        return Err(StencilError::Uncovered { s, e });
    }
    let p = prev.partition_point(|&t| t <= s) - 1;
    let q = prev.partition_point(|&t| t < e);
    if q == n {
        return if finished {
            Err(StencilError::Uncovered { s, e })
        } else {
            Ok(Selection::Stall)
        };
    }
    if n < k {
        return if finished {
            Err(StencilError::TooFewNodes {
                available: n,
                needed: k,
            })
        } else {
            Ok(Selection::Stall)
        };
    }
    if q - p > k - 1 {
        return Ok(Selection::TooWide);
    }
    let lo = (q + 1).saturating_sub(k);
    let mut hi = p;
    if finished {
        hi = hi.min(n - k);
    }
    let below_s = |i: usize| i < p || (i == p && prev[p] < s);
    let above_e = |i: usize| i > q || (i == q && prev[q] > e);
    let score = |j: usize| {
        let below = (j..j + k).filter(|&i| below_s(i)).count() as i64;
        let above = (j..j + k).filter(|&i| above_e(i)).count() as i64;
        (below - above).abs()
    };
    let best = (lo..=hi)
        .min_by_key(|&j| (score(j), j))
        .expect("window range is non-empty");
    if best + k > n {
        return Ok(Selection::Stall);
    }
    Ok(Selection::Ready(best..best + k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn st(nodes: &[f64], s: f64, e: f64) -> Stencil {
        Stencil::new(nodes.to_vec(), s, e).unwrap()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn trapezoid_weights() {
        assert!(close(
            &quadrature_weights(&st(&[0.0, 1.0], 0.0, 1.0)),
            &[0.5, 0.5],
            1e-16
        ));
    }

    #[test]
    fn three_node_extrapolating_weights() {
        // Exact values from rational integration of the basis polynomials.
        let w = quadrature_weights(&st(&[0.0, 1.0, 2.0], 0.0, 1.0));
        assert!(close(&w, &[5.0 / 12.0, 2.0 / 3.0, -1.0 / 12.0], 1e-15), "{w:?}");
    }

    #[test]
    fn weights_sum_to_interval_length() {
        let w = quadrature_weights(&st(&[0.0, 0.3, 1.7], 0.3, 1.7));
        assert!((w.iter().sum::<f64>() - 1.4).abs() <= 1e-13);
    }

    #[test]
    fn interpolation_examples() {
        let s = st(&[0.0, 1.0, 2.0], 0.0, 1.0);
        assert_eq!(interpolation_weights(&s, 1.0), vec![0.0, 1.0, 0.0]);
        assert!(close(&interpolation_weights(&s, 0.5), &[0.375, 0.75, -0.125], 1e-15));
        let s4 = st(&[0.1, 0.35, 0.8, 1.9], 0.35, 0.8);
        let g = interpolation_weights(&s4, 2.7);
        assert!((g.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn duplicate_nodes_rejected() {
        let err = Stencil::new(vec![0.0, 0.5, 0.5 + 1e-16], 0.0, 1.0).unwrap_err();
        assert!(matches!(err, StencilError::DuplicateNode(..)));
        assert!(matches!(
            Stencil::new(vec![0.5, 0.2], 0.0, 1.0),
            Err(StencilError::NotIncreasing)
        ));
        assert!(matches!(
            Stencil::new(vec![0.0], 1.0, 1.0),
            Err(StencilError::BadInterval(..))
        ));
        assert!(matches!(Stencil::new(vec![], 0.0, 1.0), Err(StencilError::Size(0))));
    }

    #[test]
    fn extension_examples() {
        let s = st(&[0.0, 0.4, 1.1], 0.0, 0.4);
        let values = vec![vec![1.0, -2.0], vec![3.0, 0.5], vec![-1.0, 7.0]];
        assert_eq!(eval_extension(&s, &values, 0.4), vec![3.0, 0.5]);
        let c = vec![vec![2.5]; 3];
        assert!((eval_extension(&s, &c, 0.77)[0] - 2.5).abs() <= 1e-12);
        // Quadratic sampled on the nodes is reproduced exactly.
        let poly = |t: f64| 1.0 - 2.0 * t + 3.5 * t * t;
        let vals: Vec<Vec<f64>> = s.nodes().iter().map(|&t| vec![poly(t)]).collect();
        for x in [0.05, 0.2, 0.9, 1.3] {
            let got = eval_extension(&s, &vals, x)[0];
            assert!((got - poly(x)).abs() <= 1e-11 * poly(x).abs().max(1.0));
        }
    }

    #[test]
    fn selection_examples() {
        let prev = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(
            select_stencil(&prev, false, 2, 1.0, 2.0).unwrap(),
            Selection::Ready(1..3)
        );
        assert_eq!(
            select_stencil(&prev, true, 3, 0.2, 0.8).unwrap(),
            Selection::Ready(0..3)
        );
        assert_eq!(
            select_stencil(&[0.0, 1.0], false, 2, 1.0, 1.8).unwrap(),
            Selection::Stall
        );
    }

    #[test]
    fn selection_centres_and_waits() {
        let prev = [0.0, 1.0, 2.0, 3.0, 4.0];
        // k = 4 on [2, 3]: the centred window {1, 2, 3, 4} needs node 4.
        assert_eq!(
            select_stencil(&prev[..4], false, 4, 2.0, 3.0).unwrap(),
            Selection::Stall
        );
        assert_eq!(
            select_stencil(&prev, false, 4, 2.0, 3.0).unwrap(),
            Selection::Ready(1..5)
        );
        // Once the level is finished the window shifts left instead.
        assert_eq!(
            select_stencil(&prev[..4], true, 4, 2.0, 3.0).unwrap(),
            Selection::Ready(0..4)
        );
        // Tie between {1,2,3} and {2,3,4} on [2,3] goes left.
        assert_eq!(
            select_stencil(&prev, false, 3, 2.0, 3.0).unwrap(),
            Selection::Ready(1..4)
        );
    }

    #[test]
    fn selection_errors() {
        let prev = [0.0, 1.0, 2.0, 3.0];
        assert_eq!(select_stencil(&prev, false, 2, 0.5, 2.5).unwrap(), Selection::TooWide);
        assert!(matches!(
            select_stencil(&prev[..2], true, 3, 0.0, 1.0),
            Err(StencilError::TooFewNodes { .. })
        ));
        assert!(matches!(
            select_stencil(&prev, true, 2, 2.5, 3.5),
            Err(StencilError::Uncovered { .. })
        ));
        assert!(matches!(
            select_stencil(&prev[..2], false, 3, 0.0, 1.0),
            Ok(Selection::Stall)
        ));
    }

    fn sorted_nodes(k: usize) -> impl Strategy<Value = Vec<f64>> {
        proptest::collection::vec(0.0f64..1.0, k).prop_filter_map("distinct", |mut v| {
            v.sort_by(f64::total_cmp);
            v.windows(2).all(|w| w[1] - w[0] > 1e-3).then_some(v)
        })
    }

    fn stencil_case() -> impl Strategy<Value = (Vec<f64>, f64, f64)> {
        (2usize..=8)
            .prop_flat_map(sorted_nodes)
            .prop_flat_map(|nodes| {
                let (lo, hi) = (nodes[0], nodes[nodes.len() - 1]);
                (Just(nodes), lo..hi, lo..hi)
            })
            .prop_filter_map("non-degenerate interval", |(n, a, b)| {
                let (s, e) = if a < b { (a, b) } else { (b, a) };
                (e - s > 1e-6).then_some((n, s, e))
            })
    }

    proptest! {
        #[test]
        fn monomials_integrate_exactly((nodes, s, e) in stencil_case()) {
            let stencil = st(&nodes, s, e);
            let w = quadrature_weights(&stencil);
            for d in 0..nodes.len() as i32 {
                let approx: f64 = w.iter().zip(&nodes).map(|(a, t)| a * t.powi(d)).sum();
                let exact = (e.powi(d + 1) - s.powi(d + 1)) / (d + 1) as f64;
                let scale = w.iter().zip(&nodes).map(|(a, t)| (a * t.powi(d)).abs()).sum::<f64>();
                prop_assert!((approx - exact).abs() <= 1e-10 * scale.max(exact.abs()));
            }
        }

        #[test]
        fn partition_of_unity((nodes, s, e) in stencil_case(), x in -0.5f64..1.5) {
            let stencil = st(&nodes, s, e);
            let g = interpolation_weights(&stencil, x);
            prop_assert!((g.iter().sum::<f64>() - 1.0).abs() <= 1e-12 * g.iter().map(|v| v.abs()).sum::<f64>().max(1.0));
            let a = quadrature_weights(&stencil);
            prop_assert!((a.iter().sum::<f64>() - (e - s)).abs() <= 1e-12 * (e - s) * a.iter().map(|v| v.abs()).sum::<f64>().max(1.0) / (e - s));
        }

        #[test]
        fn shift_invariance((nodes, s, e) in stencil_case(), shift in -5.0f64..5.0, x in 0.0f64..1.0) {
            let a = st(&nodes, s, e);
            let shifted: Vec<f64> = nodes.iter().map(|t| t + shift).collect();
            let b = Stencil::new(shifted, s + shift, e + shift);
            prop_assume!(b.is_ok());
            let b = b.unwrap();
            let (qa, qb) = (quadrature_weights(&a), quadrature_weights(&b));
            let scale = qa.iter().map(|v| v.abs()).fold(0.0, f64::max);
            for (u, v) in qa.iter().zip(&qb) {
                prop_assert!((u - v).abs() <= 1e-9 * scale);
            }
            let (ga, gb) = (interpolation_weights(&a, x), interpolation_weights(&b, x + shift));
            let gscale = ga.iter().map(|v| v.abs()).fold(1.0, f64::max);
            for (u, v) in ga.iter().zip(&gb) {
                prop_assert!((u - v).abs() <= 1e-9 * gscale);
            }
        }

        #[test]
        fn selected_stencils_satisfy_conditions(
            steps in proptest::collection::vec(0.05f64..1.0, 2..30),
            k in 2usize..6,
            a in 0.0f64..1.0,
            len in 0.01f64..1.5,
            finished in any::<bool>(),
        ) {
            let mut prev = vec![0.0];
            for h in &steps {
                prev.push(prev.last().unwrap() + h);
            }
            let last = *prev.last().unwrap();
            let s = a * last * 0.9;
            let e = (s + len).min(last + 1.0);
            if let Ok(Selection::Ready(r)) = select_stencil(&prev, finished, k, s, e) {
                prop_assert_eq!(r.len(), k);
                prop_assert!(prev[r.start] <= s);
                prop_assert!(prev[r.end - 1] >= e);
            }
        }
    }
}
