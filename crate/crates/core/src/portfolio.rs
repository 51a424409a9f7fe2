//! Mean-variance utility maximization over the probability simplex.
//!
//! Solves `max_w  w·mu − (delta/2)·w'Σw` with diagonal Σ, subject to
//! `w >= 0` and `sum(w) = 1`. The weights double as sampling probabilities
//! downstream, which is why the simplex constraint is imposed at solve time.
//!
//! For `delta > 0` the KKT conditions give a water-filling style solution
//! `w_j = max(0, (mu_j − lambda) / (delta·sigma2_j))` with the level `lambda`
//! chosen so the active weights sum to one. Scanning assets in decreasing
//! mean order finds the smallest feasible active set directly, no iteration.
//! `delta = 0` degenerates to a linear program: all weight on the maximum
//! mean, split uniformly among exact ties.
//!
//! [`brute_force_simplex_oracle`] enumerates a grid on the simplex and is the
//! independent check used by the test suites; it must stay free of the KKT
//! path above.

use crate::{Error, Result};

/// Mean vector, diagonal variance vector, risk aversion, and the floor
/// applied to variances before the KKT division.
#[derive(Debug, Clone, PartialEq)]
pub struct PortfolioProblem {
    pub mu: Vec<f64>,
    pub sigma2: Vec<f64>,
    pub delta: f64,
    pub variance_floor: f64,
}

impl PortfolioProblem {
    pub fn new(mu: Vec<f64>, sigma2: Vec<f64>, delta: f64) -> Self {
        Self {
            mu,
            sigma2,
            delta,
            variance_floor: 1e-8,
        }
    }

    pub fn with_variance_floor(mut self, floor: f64) -> Self {
        self.variance_floor = floor;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.mu.is_empty() {
            return Err(Error::EmptyInput("portfolio mu"));
        }
        if self.mu.len() != self.sigma2.len() {
            return Err(Error::DimensionMismatch(format!(
                "mu has {} entries, sigma2 has {}",
                self.mu.len(),
                self.sigma2.len()
            )));
        }
        if self.mu.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("portfolio mu"));
        }
        if self.sigma2.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid(
                "sigma2 entries must be finite and non-negative",
            ));
        }
        if !self.delta.is_finite() || self.delta < 0.0 {
            return Err(Error::invalid(format!(
                "delta must be finite and non-negative, got {}",
                self.delta
            )));
        }
        if !self.variance_floor.is_finite() || self.variance_floor <= 0.0 {
            return Err(Error::invalid(format!(
                "variance_floor must be positive, got {}",
                self.variance_floor
            )));
        }
        Ok(())
    }

    /// Objective value `w·mu − (delta/2)·sum_j w_j²·max(sigma2_j, floor)`.
    pub fn objective(&self, w: &[f64]) -> f64 {
        let ret: f64 = w.iter().zip(&self.mu).map(|(w, m)| w * m).sum();
        let risk: f64 = w
            .iter()
            .zip(&self.sigma2)
            .map(|(w, s)| w * w * s.max(self.variance_floor))
            .sum();
        ret - 0.5 * self.delta * risk
    }
}

/// A point on the probability simplex: non-negative entries summing to one.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    /// Wrap a weight vector, checking the simplex invariants.
    pub fn new(w: Vec<f64>) -> Result<Self> {
        if w.is_empty() {
            return Err(Error::EmptyInput("weights"));
        }
        if w.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid("weights must be finite and non-negative"));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::invalid(format!("weights sum to {sum}, expected 1")));
        }
        Ok(Self(w))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl std::ops::Index<usize> for WeightVector {
    type Output = f64;

    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

/// Maximize `w·mu − (delta/2)·w'Σw` over the simplex.
///
/// Deterministic: ties in the `delta = 0` branch split uniformly, and the
/// KKT scan always selects the smallest feasible active set.
pub fn solve_mean_variance(p: &PortfolioProblem) -> Result<WeightVector> {
    p.validate()?;
    let n = p.mu.len();
    if n == 1 {
        return WeightVector::new(vec![1.0]);
    }
    if p.delta == 0.0 {
        // Linear program: all weight on the largest mean, ties split evenly.
        let best = p.mu.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ties = p.mu.iter().filter(|&&m| m == best).count();
        let w = p
            .mu
            .iter()
            .map(|&m| if m == best { 1.0 / ties as f64 } else { 0.0 })
            .collect();
        return WeightVector::new(w);
    }

    let floored: Vec<f64> = p
        .sigma2
        .iter()
        .map(|&s| s.max(p.variance_floor))
        .collect();
    // Assets sorted by decreasing mean. The optimal active set is a prefix:
    // an asset is active iff mu_j > lambda, and lambda only decreases as more
    // assets join.
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| p.mu[b].partial_cmp(&p.mu[a]).unwrap().then(a.cmp(&b)));

    let mut inv_sum = 0.0; // sum over active of 1/(delta·sigma2)
    let mut mu_inv_sum = 0.0; // sum over active of mu/(delta·sigma2)
    let mut lambda = f64::NEG_INFINITY;
    let mut active = 0;
    for (count, &j) in order.iter().enumerate() {
        inv_sum += 1.0 / (p.delta * floored[j]);
        mu_inv_sum += p.mu[j] / (p.delta * floored[j]);
        let candidate = (mu_inv_sum - 1.0) / inv_sum;
        // Valid once every excluded asset would stay at zero weight.
        let next_mu = order.get(count + 1).map(|&k| p.mu[k]);
        if next_mu.is_none_or(|m| m <= candidate) {
            lambda = candidate;
            active = count + 1;
            break;
        }
    }
    debug_assert!(active > 0, "KKT scan must terminate with a non-empty set");

    let mut w = vec![0.0; n];
    for &j in &order[..active] {
        w[j] = ((p.mu[j] - lambda) / (p.delta * floored[j])).max(0.0);
    }
    // Remove the accumulated rounding from the sum so the simplex invariant
    // holds exactly enough for downstream sampling.
    let sum: f64 = w.iter().sum();
    for v in &mut w {
        *v /= sum;
    }
    WeightVector::new(w)
}

/// Exhaustive grid search over the simplex at the given resolution.
///
/// Enumerates every composition `w = k / K` with `K = round(1/resolution)`
/// and returns the objective maximizer (first encountered on exact ties).
/// Independent of the KKT solver by construction; intended as a test oracle,
/// so it refuses more than five assets or grids above ten million points.
pub fn brute_force_simplex_oracle(
    p: &PortfolioProblem,
    resolution: f64,
) -> Result<WeightVector> {
    p.validate()?;
    if !(0.0..1.0).contains(&resolution) || resolution <= 0.0 {
        return Err(Error::invalid(format!(
            "resolution must lie in (0, 1), got {resolution}"
        )));
    }
    let n = p.mu.len();
    if n > 5 {
        return Err(Error::invalid(format!(
            "oracle supports at most 5 assets, got {n}"
        )));
    }
    let steps = (1.0 / resolution).round() as u64;
    let points = simplex_grid_size(steps, n as u64);
    const LIMIT: u128 = 10_000_000;
    if points > LIMIT {
        return Err(Error::GridTooLarge {
            points,
            limit: LIMIT,
        });
    }

    let mut best_w: Option<Vec<f64>> = None;
    let mut best_obj = f64::NEG_INFINITY;
    let mut counts = vec![0u64; n];
    enumerate_compositions(steps, 0, &mut counts, &mut |counts| {
        let w: Vec<f64> = counts.iter().map(|&k| k as f64 / steps as f64).collect();
        let obj = p.objective(&w);
        if obj > best_obj {
            best_obj = obj;
            best_w = Some(w);
        }
    });
    WeightVector::new(best_w.expect("grid enumeration visits at least one point"))
}

/// Number of grid points: C(steps + n - 1, n - 1).
fn simplex_grid_size(steps: u64, n: u64) -> u128 {
    let mut size: u128 = 1;
    for i in 0..n - 1 {
        size = size * (steps + i + 1) as u128 / (i + 1) as u128;
    }
    size
}

fn enumerate_compositions(
    remaining: u64,
    index: usize,
    counts: &mut Vec<u64>,
    visit: &mut impl FnMut(&[u64]),
) {
    if index == counts.len() - 1 {
        counts[index] = remaining;
        visit(counts);
        return;
    }
    for k in 0..=remaining {
        counts[index] = k;
        enumerate_compositions(remaining - k, index + 1, counts, visit);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    const EPS: f64 = 1e-9;

    fn assert_simplex(w: &WeightVector) {
        assert!(w.as_slice().iter().all(|&v| v >= 0.0));
        let sum: f64 = w.as_slice().iter().sum();
        assert!((sum - 1.0).abs() <= EPS, "weights sum to {sum}");
    }

    #[test]
    fn single_asset_gets_everything() {
        let p = PortfolioProblem::new(vec![3.0], vec![2.0], 1.0);
        let w = solve_mean_variance(&p).unwrap();
        assert_eq!(w.as_slice(), &[1.0]);
    }

    #[test]
    fn identical_assets_split_uniformly() {
        let p = PortfolioProblem::new(vec![1.5; 4], vec![0.7; 4], 2.0);
        let w = solve_mean_variance(&p).unwrap();
        assert_simplex(&w);
        for &v in w.as_slice() {
            assert!((v - 0.25).abs() <= EPS);
        }
    }

    #[test]
    fn hand_kkt_example() {
        // lambda = -1/2, w = [0.75, 0.25].
        let p = PortfolioProblem::new(vec![1.0, 0.0], vec![1.0, 1.0], 2.0);
        let w = solve_mean_variance(&p).unwrap();
        assert!((w[0] - 0.75).abs() <= EPS);
        assert!((w[1] - 0.25).abs() <= EPS);
    }

    #[test]
    fn delta_zero_lp_with_tie_split() {
        let p = PortfolioProblem::new(vec![3.0, 5.0, 5.0], vec![1.0, 1.0, 1.0], 0.0);
        let w = solve_mean_variance(&p).unwrap();
        assert_eq!(w.as_slice(), &[0.0, 0.5, 0.5]);
    }

    #[test]
    fn huge_delta_weights_by_inverse_variance() {
        let p = PortfolioProblem::new(vec![1.0, 1.0], vec![1.0, 4.0], 1e6);
        let w = solve_mean_variance(&p).unwrap();
        assert!((w[0] - 0.8).abs() <= 1e-6);
        assert!((w[1] - 0.2).abs() <= 1e-6);
    }

    #[test]
    fn oracle_matches_hand_example() {
        let p = PortfolioProblem::new(vec![1.0, 0.0], vec![1.0, 1.0], 2.0);
        let w = brute_force_simplex_oracle(&p, 0.01).unwrap();
        assert!((w[0] - 0.75).abs() <= 0.01);
        assert!((w[1] - 0.25).abs() <= 0.01);
    }

    #[test]
    fn solver_dominates_grid() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..40 {
            let n = rng.random_range(1..=4);
            let mu: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let sigma2: Vec<f64> = (0..n).map(|_| rng.random_range(1e-3..10.0)).collect();
            let delta = [0.0, 0.1, 1.0, 10.0][rng.random_range(0..4)];
            let p = PortfolioProblem::new(mu, sigma2, delta);
            let solver = solve_mean_variance(&p).unwrap();
            assert_simplex(&solver);
            let oracle = brute_force_simplex_oracle(&p, 0.02).unwrap();
            assert!(
                p.objective(solver.as_slice()) >= p.objective(oracle.as_slice()) - 1e-6,
                "solver fell below the grid: {p:?}"
            );
        }
    }

    #[test]
    fn tiny_delta_concentrates_on_best_mean() {
        let p = PortfolioProblem::new(vec![0.3, 2.0, -1.0], vec![1.0, 1.0, 1.0], 1e-6);
        let w = solve_mean_variance(&p).unwrap();
        assert!(w[1] >= 0.999);
    }

    #[test]
    fn weight_on_best_mean_grows_as_delta_shrinks() {
        let mut last = 0.0;
        for delta in [8.0, 4.0, 2.0, 1.0, 0.5, 0.25] {
            let p = PortfolioProblem::new(vec![1.0, 0.0], vec![1.0, 1.0], delta);
            let w = solve_mean_variance(&p).unwrap();
            assert!(w[0] >= last, "weight not monotone at delta {delta}");
            last = w[0];
        }
    }

    #[test]
    fn scale_covariance() {
        // Rescaling the underlying returns by c (mu -> c·mu, sigma2 -> c²·sigma2)
        // while dividing delta by c leaves the optimizer unchanged and scales
        // the objective by c.
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..20 {
            let n = rng.random_range(2..=4);
            let mu: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
            let sigma2: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..4.0)).collect();
            let delta = rng.random_range(0.2..4.0);
            let c = rng.random_range(0.5..8.0);
            let base = PortfolioProblem::new(mu.clone(), sigma2.clone(), delta);
            let scaled = PortfolioProblem::new(
                mu.iter().map(|m| m * c).collect(),
                sigma2.iter().map(|s| s * c * c).collect(),
                delta / c,
            )
            .with_variance_floor(base.variance_floor * c * c);
            let w0 = solve_mean_variance(&base).unwrap();
            let w1 = solve_mean_variance(&scaled).unwrap();
            for (a, b) in w0.as_slice().iter().zip(w1.as_slice()) {
                assert!((a - b).abs() <= 1e-9);
            }
            let ratio = scaled.objective(w1.as_slice()) / base.objective(w0.as_slice());
            if base.objective(w0.as_slice()).abs() > 1e-6 {
                assert!((ratio - c).abs() <= 1e-6 * c.max(1.0));
            }
        }
    }

    #[test]
    fn zero_variance_asset_with_top_mean_dominates() {
        let p = PortfolioProblem::new(vec![2.0, 1.0], vec![0.0, 1.0], 5.0);
        let w = solve_mean_variance(&p).unwrap();
        // Floored at 1e-8, the riskless top asset takes essentially all weight.
        assert!(w[0] > 0.999_999);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(solve_mean_variance(&PortfolioProblem::new(vec![], vec![], 1.0)).is_err());
        assert!(
            solve_mean_variance(&PortfolioProblem::new(vec![f64::NAN], vec![1.0], 1.0)).is_err()
        );
        assert!(
            solve_mean_variance(&PortfolioProblem::new(vec![1.0], vec![-1.0], 1.0)).is_err()
        );
        assert!(solve_mean_variance(&PortfolioProblem::new(vec![1.0], vec![1.0], -1.0)).is_err());
        assert!(
            solve_mean_variance(&PortfolioProblem::new(vec![1.0, 2.0], vec![1.0], 1.0)).is_err()
        );
    }

    #[test]
    fn oracle_rejects_oversized_grids() {
        let p = PortfolioProblem::new(vec![0.0; 5], vec![1.0; 5], 1.0);
        assert!(matches!(
            brute_force_simplex_oracle(&p, 0.005),
            Err(Error::GridTooLarge { .. })
        ));
        assert!(brute_force_simplex_oracle(&p, 1.5).is_err());
        let p6 = PortfolioProblem::new(vec![0.0; 6], vec![1.0; 6], 1.0);
        assert!(brute_force_simplex_oracle(&p6, 0.5).is_err());
    }

    #[test]
    fn grid_size_formula() {
        assert_eq!(simplex_grid_size(100, 2), 101);
        assert_eq!(simplex_grid_size(4, 3), 15);
        assert_eq!(simplex_grid_size(100, 4), 176_851);
    }
}
