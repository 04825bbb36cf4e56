//! Markov chain over integer congestion-window states.
//!
//! A flow in state `i` sends `i` packets per round trip, each lost with
//! probability `p_loss`, so it halves to `floor(i/2)` at rate `i*p_loss` per
//! round trip and grows to `i+1` at rate `1/a`. The chain is built as a
//! uniformized column-stochastic matrix whose fixed point satisfies the node
//! balance
//!
//! ```text
//! (1/a)*p[i-1] + 2i*P*p[2i] + (2i+1)*P*p[2i+1] = (i*P + 1/a)*p[i]
//! ```
//!
//! at every interior state (P = p_loss). State 1 cannot halve; the increment
//! out of the top state reflects into itself, which is harmless once the cap
//! is a few times the equilibrium window.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::function::erf::erf;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ChainError {
    #[error("p_loss must lie strictly between 0 and 1, got {0}")]
    BadLossProbability(f64),
    #[error("cwnd_max must be at least 4 to express a halving, got {0}")]
    CapTooSmall(usize),
    #[error("ack_ratio must be at least 1, got {0}")]
    BadAckRatio(f64),
    #[error("matrix is not column-stochastic (column {0} sums to {1})")]
    NotStochastic(usize, f64),
    #[error("power iteration did not converge within {0} iterations")]
    NoConvergence(usize),
    #[error(
        "solver path disagreement: L-inf distance {0} between linear solve and power iteration"
    )]
    SolverMismatch(f64),
}

/// Parameters of the congestion-window chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainParams {
    /// Per-packet loss probability.
    pub p_loss: f64,
    /// Acknowledgement ratio; the window grows by 1/ack_ratio per round trip.
    pub ack_ratio: f64,
    /// Highest window state kept in the chain. Choose at least four times the
    /// equilibrium window so truncation does not distort the center.
    pub cwnd_max: usize,
}

impl ChainParams {
    /// Parameters with the cap placed automatically at 4x the equilibrium
    /// window (minimum 8).
    pub fn auto_cap(p_loss: f64, ack_ratio: f64) -> Result<Self, ChainError> {
        let params = ChainParams {
            p_loss,
            ack_ratio,
            cwnd_max: 8,
        };
        params.validate()?;
        let cap = (4.0 * params.cwnd_eq()).ceil().max(8.0) as usize;
        Ok(ChainParams {
            cwnd_max: cap,
            ..params
        })
    }

    pub fn validate(&self) -> Result<(), ChainError> {
        if !(self.p_loss > 0.0 && self.p_loss < 1.0) {
            return Err(ChainError::BadLossProbability(self.p_loss));
        }
        if self.cwnd_max < 4 {
            return Err(ChainError::CapTooSmall(self.cwnd_max));
        }
        if self.ack_ratio < 1.0 || self.ack_ratio.is_nan() {
            return Err(ChainError::BadAckRatio(self.ack_ratio));
        }
        Ok(())
    }

    /// Loss weight relative to a unit increment weight: a * p_loss.
    pub fn shortcut_p(&self) -> f64 {
        self.ack_ratio * self.p_loss
    }

    /// Equilibrium window sqrt(3/(2a))/sqrt(p_loss).
    pub fn cwnd_eq(&self) -> f64 {
        (3.0 / (2.0 * self.ack_ratio)).sqrt() / self.p_loss.sqrt()
    }
}

/// Column-stochastic transition matrix over states 1..=cwnd_max.
/// Column `i-1` holds the outgoing probabilities of state `i`.
#[derive(Debug, Clone)]
pub struct TransitionMatrix {
    matrix: DMatrix<f64>,
}

impl TransitionMatrix {
    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.dim())
            .map(|c| self.matrix.column(c).sum())
            .collect()
    }

    fn check_stochastic(&self) -> Result<(), ChainError> {
        for (c, s) in self.column_sums().into_iter().enumerate() {
            if (s - 1.0).abs() > 1e-9 {
                return Err(ChainError::NotStochastic(c, s));
            }
        }
        Ok(())
    }
}

/// Builds the uniformized transition matrix for the given parameters.
pub fn build_chain(params: &ChainParams) -> Result<TransitionMatrix, ChainError> {
    params.validate()?;
    let m = params.cwnd_max;
    let inc = 1.0 / params.ack_ratio;
    // uniformization constant: the largest total exit rate, at the top state
    let lambda = inc + m as f64 * params.p_loss;
    let mut a = DMatrix::zeros(m, m);
    for i in 1..=m {
        let col = i - 1;
        let mut out = 0.0;
        if i < m {
            a[(i, col)] += inc / lambda;
        } else {
            a[(col, col)] += inc / lambda; // reflect at the cap
        }
        out += inc;
        if i >= 2 {
            let halve = i as f64 * params.p_loss;
            a[(i / 2 - 1, col)] += halve / lambda;
            out += halve;
        }
        a[(col, col)] += 1.0 - out / lambda; // self loop keeps the column stochastic
    }
    Ok(TransitionMatrix { matrix: a })
}

/// Stationary probabilities over states 1..=cwnd_max plus convenience views.
#[derive(Debug, Clone)]
pub struct StationaryDistribution {
    /// probabilities[i] is the probability of window state i+1.
    pub probabilities: Vec<f64>,
}

impl StationaryDistribution {
    pub fn len(&self) -> usize {
        self.probabilities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probabilities.is_empty()
    }

    /// Cumulative distribution evaluated at each state.
    pub fn cdf(&self) -> Vec<f64> {
        let mut acc = 0.0;
        self.probabilities
            .iter()
            .map(|p| {
                acc += p;
                acc
            })
            .collect()
    }

    /// Smallest state whose cumulative probability reaches one half.
    pub fn median_state(&self) -> usize {
        let mut acc = 0.0;
        for (i, p) in self.probabilities.iter().enumerate() {
            acc += p;
            if acc >= 0.5 {
                return i + 1;
            }
        }
        self.len()
    }

    pub fn mean_cwnd(&self) -> f64 {
        self.probabilities
            .iter()
            .enumerate()
            .map(|(i, p)| (i + 1) as f64 * p)
            .sum()
    }

    /// Probability mass at states strictly above `state`.
    pub fn tail_mass_above(&self, state: usize) -> f64 {
        self.probabilities.iter().skip(state).sum()
    }
}

/// Solves for the stationary distribution by a direct linear solve (one
/// balance row replaced by the normalization) and cross-checks it against
/// power iteration; the two independent paths must agree to 1e-9.
pub fn stationary(matrix: &TransitionMatrix) -> Result<StationaryDistribution, ChainError> {
    matrix.check_stochastic()?;
    let direct = stationary_linear(matrix);
    let iterated = stationary_power(matrix, 1e-14, 5_000_000)?;
    let dist = direct
        .iter()
        .zip(&iterated)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    if dist > 1e-9 {
        return Err(ChainError::SolverMismatch(dist));
    }
    Ok(StationaryDistribution {
        probabilities: direct,
    })
}

/// Direct path: solve (A - I)p = 0 with the last row replaced by sum(p) = 1.
pub fn stationary_linear(matrix: &TransitionMatrix) -> Vec<f64> {
    let m = matrix.dim();
    let mut b = matrix.as_matrix() - DMatrix::<f64>::identity(m, m);
    for c in 0..m {
        b[(m - 1, c)] = 1.0;
    }
    let mut rhs = nalgebra::DVector::zeros(m);
    rhs[m - 1] = 1.0;
    let sol = b
        .lu()
        .solve(&rhs)
        .expect("uniformized chain matrix is nonsingular");
    sol.iter().copied().collect()
}

/// Iterative path: repeated application of the matrix to a uniform start,
/// renormalizing each step, until successive iterates differ by less than
/// `tol` in the max norm.
pub fn stationary_power(
    matrix: &TransitionMatrix,
    tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>, ChainError> {
    let m = matrix.dim();
    let a = matrix.as_matrix();
    let mut p = nalgebra::DVector::from_element(m, 1.0 / m as f64);
    for _ in 0..max_iter {
        let mut q = a * &p;
        let sum = q.sum();
        q /= sum;
        let diff = (&q - &p).amax();
        p = q;
        if diff < tol {
            return Ok(p.iter().copied().collect());
        }
    }
    Err(ChainError::NoConvergence(max_iter))
}

/// Largest absolute node-balance violation of `dist` over the interior
/// states 2..=cwnd_max/2-1 (where both halving parents exist).
pub fn balance_residual(dist: &StationaryDistribution, params: &ChainParams) -> f64 {
    let p = &dist.probabilities;
    let m = p.len();
    let inc = 1.0 / params.ack_ratio;
    let pl = params.p_loss;
    let mut worst = 0.0f64;
    for i in 2..=m / 2 - 1 {
        let mut inflow = inc * p[i - 2] + 2.0 * i as f64 * pl * p[2 * i - 1];
        if 2 * i < m {
            inflow += (2 * i + 1) as f64 * pl * p[2 * i];
        }
        let outflow = (pl * i as f64 + inc) * p[i - 1];
        worst = worst.max((inflow - outflow).abs());
    }
    worst
}

/// The stationary distribution scaled onto bit-rate support points
/// `state * mss / rtt`.
#[derive(Debug, Clone)]
pub struct BitrateDistribution {
    /// (bitrate in bit/s, probability) per window state, in state order.
    pub points: Vec<(f64, f64)>,
}

impl BitrateDistribution {
    pub fn total_mass(&self) -> f64 {
        self.points.iter().map(|(_, p)| p).sum()
    }

    pub fn mean(&self) -> f64 {
        self.points.iter().map(|(b, p)| b * p).sum()
    }

    /// Probability mass carried at rates strictly inside (lo, hi).
    pub fn mass_within(&self, lo: f64, hi: f64) -> f64 {
        self.points
            .iter()
            .filter(|(b, _)| *b > lo && *b < hi)
            .map(|(_, p)| p)
            .sum()
    }
}

/// Scales window states into bit rates; probabilities are untouched.
pub fn bitrate_distribution(
    dist: &StationaryDistribution,
    mss: f64,
    rtt: f64,
) -> BitrateDistribution {
    let points = dist
        .probabilities
        .iter()
        .enumerate()
        .map(|(i, &p)| ((i + 1) as f64 * mss / rtt, p))
        .collect();
    BitrateDistribution { points }
}

/// Log-normal approximation of the window CDF.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogNormalFit {
    /// Location: the log of the equilibrium window.
    pub mu: f64,
    /// Shape; 0.41 fits the chain's center across loss probabilities.
    pub sigma: f64,
}

/// Empirical shape parameter of the window distribution.
pub const LOGNORMAL_SIGMA: f64 = 0.41;

impl LogNormalFit {
    /// Fit centered on the equilibrium window with the standard shape.
    pub fn for_params(params: &ChainParams) -> Self {
        LogNormalFit {
            mu: params.cwnd_eq().ln(),
            sigma: LOGNORMAL_SIGMA,
        }
    }
}

/// Log-normal CDF F(x) = (1 + erf((ln x - mu)/(sigma*sqrt(2))))/2.
pub fn lognormal_cdf(fit: &LogNormalFit, cwnd: f64) -> f64 {
    if cwnd <= 0.0 {
        return 0.0;
    }
    0.5 * (1.0 + erf((cwnd.ln() - fit.mu) / (fit.sigma * std::f64::consts::SQRT_2)))
}

/// CDF gaps between the chain and its log-normal approximation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CdfComparison {
    /// Sup-norm of the CDF difference restricted to states whose cumulative
    /// probability lies in the central 10%..90% band.
    pub central_gap: f64,
    /// Sup-norm over the full support (always at least the central gap).
    pub full_gap: f64,
}

pub fn compare_to_lognormal(dist: &StationaryDistribution, fit: &LogNormalFit) -> CdfComparison {
    let cdf = dist.cdf();
    let mut central: f64 = 0.0;
    let mut full: f64 = 0.0;
    for (i, &c) in cdf.iter().enumerate() {
        let gap = (c - lognormal_cdf(fit, (i + 1) as f64)).abs();
        full = full.max(gap);
        if (0.1..=0.9).contains(&c) {
            central = central.max(gap);
        }
    }
    CdfComparison {
        central_gap: central,
        full_gap: full,
    }
}

/// Independent validation oracle: simulates one flow per round trip. Each of
/// the `cwnd` packets in flight is lost independently with `p_loss`; at least
/// one loss halves the window once (fast recovery collapses multiple losses
/// in a round trip), otherwise the window grows by 1/a. Occupancy is counted
/// at the nearest integer state each round trip.
pub fn monte_carlo_oracle(params: &ChainParams, steps: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = params.cwnd_max;
    let mut cwnd = params.cwnd_eq().min(m as f64);
    let mut hist = vec![0.0f64; m];
    for _ in 0..steps {
        let state = (cwnd.round() as usize).clamp(1, m);
        hist[state - 1] += 1.0;
        let p_halve = 1.0 - (1.0 - params.p_loss).powf(cwnd);
        if rng.random::<f64>() < p_halve {
            cwnd = (cwnd / 2.0).max(1.0);
        } else {
            cwnd = (cwnd + 1.0 / params.ack_ratio).min(m as f64);
        }
    }
    let total: f64 = hist.iter().sum();
    for h in &mut hist {
        *h /= total;
    }
    hist
}

/// Total variation distance between two distributions on the same support.
pub fn tv_distance(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}
