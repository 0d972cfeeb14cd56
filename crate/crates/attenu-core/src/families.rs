//! Constructive model families and samplers.
//!
//! Three kinds of machinery live here:
//!
//! * discretizations of classic measurement families (bivariate normal,
//!   additive log-concave noise, binary regression links, coarsening, and
//!   tabulated one-parameter exponential families), each of which satisfies
//!   likelihood-ratio dependence by construction;
//! * random model samplers, both assumption-satisfying (for sweeps that must
//!   find zero violations) and unconstrained (for counterexample hunting);
//! * reproductions of the counterexample settings of Gabriel, Sachs and
//!   Sjölander (2022), which break one monotonicity ingredient at a time.
//!
//! Continuous families are evaluated at grid midpoints and renormalized per
//! column rather than integrated over cells: likelihood-ratio orderings of a
//! density restrict pointwise to any grid, and per-column normalization
//! leaves within-column ratios untouched.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dependence::{check_mlr, check_tapered, TaperMode};
use crate::model::{CondMatrix, Direction, ModelSpec, Pmf};
use crate::Error;

/// Attempt budget for rejection-sampled kernels.
pub const REJECTION_CAP: u64 = 100_000;

// ── reference densities ──────────────────────────────────────────────────────

/// Continuous density for the latent confounder, used to place quantile
/// grids and to discretize priors.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "density", rename_all = "kebab-case")]
pub enum UPrior {
    Uniform { lo: f64, hi: f64 },
    Normal { mean: f64, sd: f64 },
    Gamma { shape: f64, scale: f64 },
}

impl UPrior {
    pub fn validate(&self) -> Result<(), Error> {
        let ok = match *self {
            UPrior::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo < hi,
            UPrior::Normal { mean, sd } => mean.is_finite() && sd.is_finite() && sd > 0.0,
            UPrior::Gamma { shape, scale } => {
                shape.is_finite() && scale.is_finite() && shape > 0.0 && scale > 0.0
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid density {self:?}")))
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match *self {
            UPrior::Uniform { lo, hi } => {
                if x >= lo && x <= hi {
                    1.0 / (hi - lo)
                } else {
                    0.0
                }
            }
            UPrior::Normal { mean, sd } => {
                let z = (x - mean) / sd;
                (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
            }
            UPrior::Gamma { shape, scale } => {
                if x <= 0.0 {
                    return 0.0;
                }
                let log_pdf = (shape - 1.0) * x.ln() - x / scale
                    - libm::lgamma(shape)
                    - shape * scale.ln();
                log_pdf.exp()
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x == f64::NEG_INFINITY {
            return 0.0;
        }
        if x == f64::INFINITY {
            return 1.0;
        }
        match *self {
            UPrior::Uniform { lo, hi } => ((x - lo) / (hi - lo)).clamp(0.0, 1.0),
            UPrior::Normal { mean, sd } => {
                0.5 * libm::erfc(-(x - mean) / (sd * std::f64::consts::SQRT_2))
            }
            UPrior::Gamma { shape, scale } => {
                if x <= 0.0 {
                    0.0
                } else {
                    reg_lower_gamma(shape, x / scale)
                }
            }
        }
    }

    /// Inverse CDF for `p` in (0, 1), by bisection on the CDF.
    pub fn quantile(&self, p: f64) -> Result<f64, Error> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "quantile level must lie in (0, 1), got {p}"
            )));
        }
        if let UPrior::Uniform { lo, hi } = *self {
            return Ok(lo + p * (hi - lo));
        }
        let (mut lo, mut hi) = match *self {
            UPrior::Uniform { .. } => unreachable!(),
            UPrior::Normal { mean, sd } => (mean - 8.0 * sd, mean + 8.0 * sd),
            UPrior::Gamma { shape, scale } => (0.0, scale * (shape + 8.0 * shape.sqrt() + 8.0)),
        };
        // widen until the bracket straddles p (rare, extreme levels only)
        let mut span = hi - lo;
        for _ in 0..64 {
            if self.cdf(lo) <= p {
                break;
            }
            lo -= span;
            span *= 2.0;
        }
        let mut span = hi - lo;
        for _ in 0..64 {
            if self.cdf(hi) >= p {
                break;
            }
            hi += span;
            span *= 2.0;
        }
        Ok(bisect(|x| self.cdf(x), p, lo, hi))
    }
}

/// Regularized lower incomplete gamma P(a, x): series for small x, Lentz
/// continued fraction for the upper tail otherwise.
fn reg_lower_gamma(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        // series: P(a,x) = x^a e^-x / Γ(a) · Σ x^n / (a(a+1)...(a+n))
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut ap = a;
        for _ in 0..500 {
            ap += 1.0;
            term *= x / ap;
            sum += term;
            if term.abs() < sum.abs() * 1e-16 {
                break;
            }
        }
        sum * (a * x.ln() - x - libm::lgamma(a)).exp()
    } else {
        // continued fraction for Q(a,x), modified Lentz
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        let q = (a * x.ln() - x - libm::lgamma(a)).exp() * h;
        1.0 - q
    }
}

/// Bisection solve of `f(x) = target` for non-decreasing `f` on `[lo, hi]`.
fn bisect(f: impl Fn(f64) -> f64, target: f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

// ── grids ────────────────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridScheme {
    /// Midpoints of `n` equal-width cells over `[lo, hi]`.
    EqualWidth,
    /// Quantiles of a reference density, restricted to `[lo, hi]`.
    Quantile,
}

/// Placement of discretization points for one continuous axis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub scheme: GridScheme,
}

impl GridSpec {
    pub fn equal_width(lo: f64, hi: f64, n: usize) -> Self {
        Self {
            lo,
            hi,
            n,
            scheme: GridScheme::EqualWidth,
        }
    }

    pub fn quantile(lo: f64, hi: f64, n: usize) -> Self {
        Self {
            lo,
            hi,
            n,
            scheme: GridScheme::Quantile,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !(self.lo.is_finite() && self.hi.is_finite() && self.lo < self.hi) {
            return Err(Error::InvalidConfig(format!(
                "grid endpoints must be finite with lo < hi, got [{}, {}]",
                self.lo, self.hi
            )));
        }
        if self.n < 2 {
            return Err(Error::InvalidConfig(format!(
                "grid needs at least 2 points, got {}",
                self.n
            )));
        }
        Ok(())
    }

    /// Resolves the grid to concrete points. Equal-width grids ignore the
    /// reference CDF; quantile grids place points at the CDF levels of cell
    /// midpoints between `cdf(lo)` and `cdf(hi)`.
    pub fn points_from_cdf(&self, cdf: impl Fn(f64) -> f64) -> Result<Vec<f64>, Error> {
        self.validate()?;
        match self.scheme {
            GridScheme::EqualWidth => {
                let w = (self.hi - self.lo) / self.n as f64;
                Ok((0..self.n)
                    .map(|i| self.lo + (i as f64 + 0.5) * w)
                    .collect())
            }
            GridScheme::Quantile => {
                let p_lo = cdf(self.lo);
                let p_hi = cdf(self.hi);
                if !(p_hi - p_lo > 1e-12) {
                    return Err(Error::InvalidConfig(format!(
                        "reference density has no mass on [{}, {}]",
                        self.lo, self.hi
                    )));
                }
                let points: Vec<f64> = (0..self.n)
                    .map(|i| {
                        let level = p_lo + (i as f64 + 0.5) / self.n as f64 * (p_hi - p_lo);
                        bisect(&cdf, level, self.lo, self.hi)
                    })
                    .collect();
                Ok(points)
            }
        }
    }

    pub fn points(&self, reference: &UPrior) -> Result<Vec<f64>, Error> {
        reference.validate()?;
        self.points_from_cdf(|x| reference.cdf(x))
    }
}

/// Discretizes a continuous prior onto grid points by cell mass: cell edges
/// sit halfway between neighboring points, with the outer cells extended to
/// the full support.
pub fn discretize_prior(prior: &UPrior, points: &[f64]) -> Result<Pmf, Error> {
    prior.validate()?;
    require_increasing(points, "grid points")?;
    let n = points.len();
    let mut edges = Vec::with_capacity(n + 1);
    edges.push(f64::NEG_INFINITY);
    for i in 1..n {
        edges.push(0.5 * (points[i - 1] + points[i]));
    }
    edges.push(f64::INFINITY);
    let mut masses: Vec<f64> = (0..n)
        .map(|i| (prior.cdf(edges[i + 1]) - prior.cdf(edges[i])).max(0.0))
        .collect();
    let total: f64 = masses.iter().sum();
    if total <= 0.0 {
        return Err(Error::InvalidConfig(
            "prior has no mass on the grid".into(),
        ));
    }
    for m in &mut masses {
        *m /= total;
    }
    Pmf::new(masses)
}

fn require_increasing(values: &[f64], what: &str) -> Result<(), Error> {
    if values.len() < 2 {
        return Err(Error::InvalidConfig(format!(
            "{what} needs at least 2 entries, got {}",
            values.len()
        )));
    }
    for w in values.windows(2) {
        if !(w[1] > w[0]) {
            return Err(Error::InvalidConfig(format!(
                "{what} must be strictly increasing, got {} then {}",
                w[0], w[1]
            )));
        }
    }
    Ok(())
}

// ── kernel families ──────────────────────────────────────────────────────────

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseKind {
    Gaussian { sigma: f64 },
    Laplace { b: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinkKind {
    Probit,
    Logistic,
}

impl LinkKind {
    fn eval(self, x: f64) -> f64 {
        match self {
            LinkKind::Probit => 0.5 * libm::erfc(-x / std::f64::consts::SQRT_2),
            LinkKind::Logistic => {
                if x >= 0.0 {
                    1.0 / (1.0 + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (1.0 + e)
                }
            }
        }
    }
}

/// One measurement family for the proxy given the confounder.
///
/// Every variant yields a kernel with the likelihood-ratio ordering (or the
/// deterministic monotone special case, for `Coarsening`), so models built
/// from them sit inside the dependence assumptions by construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum FamilyConfig {
    /// `(U, C)` standard bivariate normal with correlation `rho` in (0, 1).
    NormalNormal { rho: f64 },
    /// `C = U + noise` with a log-concave noise density.
    AdditiveNoise { noise: NoiseKind, u_prior: UPrior },
    /// Binary proxy with `P(C = 1 | u)` a monotone link of `tau0 + tau1 u`.
    BinaryRegression {
        link: LinkKind,
        tau0: f64,
        tau1: f64,
    },
    /// Deterministic binning of `U` at the given strictly increasing cuts.
    Coarsening { thresholds: Vec<f64> },
    /// Tabulated one-parameter exponential family
    /// `f(c | u) ∝ h(c) exp(eta(u) t(c))` with `eta` non-decreasing,
    /// `t` strictly increasing, and `h` positive.
    ExponentialFamily {
        eta: Vec<f64>,
        t: Vec<f64>,
        h: Vec<f64>,
    },
}

impl FamilyConfig {
    pub fn validate(&self) -> Result<(), Error> {
        match self {
            FamilyConfig::NormalNormal { rho } => {
                if !(rho.is_finite() && *rho > 0.0 && *rho < 1.0) {
                    return Err(Error::InvalidConfig(format!(
                        "rho must lie in (0, 1), got {rho}"
                    )));
                }
            }
            FamilyConfig::AdditiveNoise { noise, u_prior } => {
                u_prior.validate()?;
                let ok = match *noise {
                    NoiseKind::Gaussian { sigma } => sigma.is_finite() && sigma > 0.0,
                    NoiseKind::Laplace { b } => b.is_finite() && b > 0.0,
                };
                if !ok {
                    return Err(Error::InvalidConfig(format!(
                        "noise scale must be positive, got {noise:?}"
                    )));
                }
            }
            FamilyConfig::BinaryRegression { tau0, tau1, .. } => {
                if !(tau0.is_finite() && tau1.is_finite()) {
                    return Err(Error::InvalidConfig(
                        "regression coefficients must be finite".into(),
                    ));
                }
            }
            FamilyConfig::Coarsening { thresholds } => {
                if thresholds.is_empty() {
                    return Err(Error::InvalidConfig(
                        "coarsening needs at least one threshold".into(),
                    ));
                }
                if thresholds.len() == 1 {
                    if !thresholds[0].is_finite() {
                        return Err(Error::InvalidConfig("threshold must be finite".into()));
                    }
                } else {
                    require_increasing(thresholds, "thresholds")?;
                }
            }
            FamilyConfig::ExponentialFamily { eta, t, h } => {
                if eta.len() < 2 || t.len() < 2 || t.len() != h.len() {
                    return Err(Error::InvalidConfig(format!(
                        "tabulated family needs eta ({}), t ({}) and h ({}) with \
                         matching t/h lengths and at least 2 levels each",
                        eta.len(),
                        t.len(),
                        h.len()
                    )));
                }
                if eta.windows(2).any(|w| !(w[1] >= w[0])) {
                    return Err(Error::InvalidConfig("eta must be non-decreasing".into()));
                }
                require_increasing(t, "t")?;
                if h.iter().any(|&v| !(v > 0.0 && v.is_finite())) {
                    return Err(Error::InvalidConfig("h must be positive".into()));
                }
            }
        }
        Ok(())
    }

    /// Reference density for quantile grid placement, if the family has one.
    fn reference(&self) -> Option<UPrior> {
        match self {
            FamilyConfig::NormalNormal { .. } => Some(UPrior::Normal { mean: 0.0, sd: 1.0 }),
            FamilyConfig::AdditiveNoise { u_prior, .. } => Some(*u_prior),
            _ => None,
        }
    }

    fn resolve_grid(&self, grid: &GridSpec) -> Result<Vec<f64>, Error> {
        match (grid.scheme, self.reference()) {
            (GridScheme::EqualWidth, _) => grid.points_from_cdf(|_| 0.0),
            (GridScheme::Quantile, Some(prior)) => grid.points(&prior),
            (GridScheme::Quantile, None) => Err(Error::InvalidConfig(
                "quantile grids need a family with a continuous reference density".into(),
            )),
        }
    }
}

/// Builds a column-stochastic kernel `P(C = c_i | U = u_j)` by evaluating
/// the family's conditional density on the grids and normalizing columns.
///
/// Tabulated and binary families use the grids only for their sizes; the
/// coarsening family requires `c_grid.n == thresholds.len() + 1`.
pub fn build_family_kernel(
    config: &FamilyConfig,
    u_grid: &GridSpec,
    c_grid: &GridSpec,
) -> Result<CondMatrix, Error> {
    config.validate()?;
    u_grid.validate()?;
    c_grid.validate()?;
    match config {
        FamilyConfig::NormalNormal { rho } => {
            let us = config.resolve_grid(u_grid)?;
            let cs = config.resolve_grid(c_grid)?;
            let var = 1.0 - rho * rho;
            kernel_from_log_density(&cs, &us, |c, u| {
                let d = c - rho * u;
                -d * d / (2.0 * var)
            })
        }
        FamilyConfig::AdditiveNoise { noise, .. } => {
            let us = config.resolve_grid(u_grid)?;
            let cs = config.resolve_grid(c_grid)?;
            match *noise {
                NoiseKind::Gaussian { sigma } => kernel_from_log_density(&cs, &us, |c, u| {
                    let d = c - u;
                    -d * d / (2.0 * sigma * sigma)
                }),
                NoiseKind::Laplace { b } => {
                    kernel_from_log_density(&cs, &us, |c, u| -(c - u).abs() / b)
                }
            }
        }
        FamilyConfig::BinaryRegression { link, tau0, tau1 } => {
            if c_grid.n != 2 {
                return Err(Error::InvalidConfig(format!(
                    "binary regression needs a 2-level proxy grid, got {}",
                    c_grid.n
                )));
            }
            let us = u_grid.points_from_cdf(|_| 0.0)?;
            let columns = us
                .iter()
                .map(|&u| {
                    let p = link.eval(tau0 + tau1 * u);
                    vec![1.0 - p, p]
                })
                .collect();
            CondMatrix::from_columns(columns, Vec::new())
        }
        FamilyConfig::Coarsening { thresholds } => {
            let k_c = thresholds.len() + 1;
            if c_grid.n != k_c {
                return Err(Error::InvalidConfig(format!(
                    "coarsening with {} thresholds needs a {}-level proxy grid, got {}",
                    thresholds.len(),
                    k_c,
                    c_grid.n
                )));
            }
            let us = u_grid.points_from_cdf(|_| 0.0)?;
            let columns = us
                .iter()
                .map(|&u| {
                    let bin = thresholds.partition_point(|&t| t < u);
                    let mut col = vec![0.0; k_c];
                    col[bin] = 1.0;
                    col
                })
                .collect();
            CondMatrix::from_columns(columns, Vec::new())
        }
        FamilyConfig::ExponentialFamily { eta, t, h } => {
            if u_grid.n != eta.len() {
                return Err(Error::DimensionMismatch {
                    context: "eta tabulation vs u grid",
                    got: eta.len(),
                    expected: u_grid.n,
                });
            }
            if c_grid.n != t.len() {
                return Err(Error::DimensionMismatch {
                    context: "t tabulation vs c grid",
                    got: t.len(),
                    expected: c_grid.n,
                });
            }
            let log_h: Vec<f64> = h.iter().map(|v| v.ln()).collect();
            let columns = (0..eta.len())
                .map(|j| {
                    normalize_log_weights(
                        (0..t.len()).map(|i| log_h[i] + eta[j] * t[i]).collect(),
                    )
                })
                .collect::<Result<_, _>>()?;
            CondMatrix::from_columns(columns, Vec::new())
        }
    }
}

fn kernel_from_log_density(
    cs: &[f64],
    us: &[f64],
    log_density: impl Fn(f64, f64) -> f64,
) -> Result<CondMatrix, Error> {
    let columns = us
        .iter()
        .map(|&u| normalize_log_weights(cs.iter().map(|&c| log_density(c, u)).collect()))
        .collect::<Result<_, _>>()?;
    CondMatrix::from_columns(columns, Vec::new())
}

fn normalize_log_weights(logw: Vec<f64>) -> Result<Vec<f64>, Error> {
    let max = logw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(Error::InvalidConfig(
            "density underflows on the whole grid column".into(),
        ));
    }
    let mut w: Vec<f64> = logw.into_iter().map(|l| (l - max).exp()).collect();
    let sum: f64 = w.iter().sum();
    for v in &mut w {
        *v /= sum;
    }
    Ok(w)
}

/// Chains two kernels: `outer` maps the inner child to a coarser child,
/// giving `P(D = d | U = u) = Σ_c outer(d, c) · inner(c, u)`.
pub fn compose_kernels(outer: &CondMatrix, inner: &CondMatrix) -> Result<CondMatrix, Error> {
    if outer.n_cols() != inner.n_rows() {
        return Err(Error::DimensionMismatch {
            context: "kernel composition",
            got: outer.n_cols(),
            expected: inner.n_rows(),
        });
    }
    let columns = (0..inner.n_cols())
        .map(|u| {
            (0..outer.n_rows())
                .map(|d| (0..outer.n_cols()).map(|c| outer.get(d, c) * inner.get(c, u)).sum())
                .collect()
        })
        .collect();
    CondMatrix::from_columns(columns, Vec::new())
}

// ── random model samplers ────────────────────────────────────────────────────

/// How the measurement kernel of a random model is produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelMode {
    /// Random tabulated exponential family; ordered by construction.
    ExpFamily,
    /// Dirichlet columns, rejection-sampled on the likelihood-ratio check.
    RejectionMlr,
    /// Dirichlet columns rearranged unimodal about the diagonal, then
    /// rejection-sampled on the full taper check. Square kernels only.
    RejectionTaper,
}

/// A sampled model plus how many kernel proposals it took.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecSample {
    pub spec: ModelSpec,
    pub attempts: u64,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives an independent per-stream seed; used to make trials reproducible
/// regardless of evaluation order.
pub(crate) fn derive_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed ^ splitmix64(stream))
}

fn dirichlet_flat(rng: &mut ChaCha8Rng, k: usize) -> Vec<f64> {
    // exponential spacings; clamped away from zero so every level has support
    let mut g: Vec<f64> = (0..k)
        .map(|_| (-(1.0 - rng.random::<f64>()).ln()).max(1e-12))
        .collect();
    let total: f64 = g.iter().sum();
    for v in &mut g {
        *v /= total;
    }
    g
}

fn sorted_uniform(rng: &mut ChaCha8Rng, k: usize, lo: f64, hi: f64) -> Vec<f64> {
    let mut v: Vec<f64> = (0..k).map(|_| rng.random_range(lo..hi)).collect();
    v.sort_by(f64::total_cmp);
    v
}

const GENERATOR_EPSILON: f64 = 0.05;

/// Draws a model satisfying every ordering assumption: a dependence-ordered
/// kernel per `mode`, non-decreasing propensity clipped inside
/// `[0.05, 0.95]`, outcome regressions non-decreasing with values in
/// `(0.05, 0.95)` (so all effect scales are in domain), and a full-support
/// prior. Deterministic in `seed`.
pub fn random_assumption_satisfying_spec(
    k_u: usize,
    k_c: usize,
    seed: u64,
    mode: KernelMode,
) -> Result<SpecSample, Error> {
    check_levels(k_u, k_c)?;
    if mode == KernelMode::RejectionTaper && k_u != k_c {
        return Err(Error::InvalidConfig(format!(
            "taper sampling needs a square kernel, got {k_c} x {k_u}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c_given_u, attempts) = match mode {
        KernelMode::ExpFamily => (exp_family_kernel(&mut rng, k_u, k_c)?, 1),
        KernelMode::RejectionMlr => reject_sample(&mut rng, |rng| {
            let cols = (0..k_u).map(|_| dirichlet_flat(rng, k_c)).collect();
            let kernel = CondMatrix::from_columns(cols, Vec::new())?;
            Ok(check_mlr(&kernel, crate::DEFAULT_TOL).holds().then_some(kernel))
        })?,
        KernelMode::RejectionTaper => reject_sample(&mut rng, |rng| {
            let cols = (0..k_u)
                .map(|j| diagonal_unimodal_column(dirichlet_flat(rng, k_c), j))
                .collect();
            let kernel = CondMatrix::from_columns(cols, Vec::new())?;
            let ok = check_tapered(&kernel, TaperMode::Full, crate::DEFAULT_TOL)?.holds();
            Ok(ok.then_some(kernel))
        })?,
    };
    let propensity = sorted_uniform(&mut rng, k_u, GENERATOR_EPSILON, 1.0 - GENERATOR_EPSILON);
    let m0 = sorted_uniform(&mut rng, k_u, 0.05, 0.95);
    let m1 = sorted_uniform(&mut rng, k_u, 0.05, 0.95);
    let pi_u = Pmf::new(dirichlet_flat(&mut rng, k_u))?;
    let spec = ModelSpec {
        pi_u,
        c_given_u,
        propensity,
        m1,
        m0,
        epsilon: GENERATOR_EPSILON,
    };
    Ok(SpecSample { spec, attempts })
}

fn check_levels(k_u: usize, k_c: usize) -> Result<(), Error> {
    for (k, what) in [(k_u, "confounder"), (k_c, "proxy")] {
        if !(2..=6).contains(&k) {
            return Err(Error::InvalidConfig(format!(
                "{what} level count must lie in [2, 6], got {k}"
            )));
        }
    }
    Ok(())
}

fn exp_family_kernel(rng: &mut ChaCha8Rng, k_u: usize, k_c: usize) -> Result<CondMatrix, Error> {
    let eta = sorted_uniform(rng, k_u, 0.0, 2.0);
    let mut t = Vec::with_capacity(k_c);
    let mut acc = rng.random_range(0.0..1.0);
    for _ in 0..k_c {
        t.push(acc);
        acc += rng.random_range(0.05..1.0);
    }
    let h: Vec<f64> = (0..k_c).map(|_| rng.random_range(0.1..1.0)).collect();
    build_family_kernel(
        &FamilyConfig::ExponentialFamily { eta, t, h },
        &GridSpec::equal_width(0.0, 1.0, k_u),
        &GridSpec::equal_width(0.0, 1.0, k_c),
    )
}

/// Reorders a column's mass so its peak sits on the diagonal and it decays
/// outward; vertical taper clauses then hold by construction, leaving only
/// the horizontal clauses to the rejection test.
fn diagonal_unimodal_column(mut values: Vec<f64>, j: usize) -> Vec<f64> {
    values.sort_by(|a, b| f64::total_cmp(b, a));
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by_key(|&i| (i.abs_diff(j), i));
    let mut col = vec![0.0; values.len()];
    for (v, i) in values.into_iter().zip(order) {
        col[i] = v;
    }
    col
}

fn reject_sample(
    rng: &mut ChaCha8Rng,
    mut propose: impl FnMut(&mut ChaCha8Rng) -> Result<Option<CondMatrix>, Error>,
) -> Result<(CondMatrix, u64), Error> {
    for attempt in 1..=REJECTION_CAP {
        if let Some(kernel) = propose(rng)? {
            return Ok((kernel, attempt));
        }
    }
    Err(Error::RejectionBudget {
        attempts: REJECTION_CAP,
    })
}

/// What `sample_spec` draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GeneratorKind {
    ExpFamily,
    RejectionMlr,
    RejectionTaper,
    /// No ordering constraints at all; the counterexample hunting ground.
    Unconstrained,
}

/// Level-count ranges (inclusive) plus the kernel discipline for random
/// model sweeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub kind: GeneratorKind,
    pub k_u: (usize, usize),
    pub k_c: (usize, usize),
}

impl GeneratorConfig {
    /// Default level ranges: rejection modes stay small so acceptance rates
    /// remain practical; the others range over [2, 5].
    pub fn new(kind: GeneratorKind) -> Self {
        let range = match kind {
            GeneratorKind::RejectionMlr | GeneratorKind::RejectionTaper => (2, 3),
            _ => (2, 5),
        };
        Self {
            kind,
            k_u: range,
            k_c: range,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        for (lo, hi) in [self.k_u, self.k_c] {
            if !(2 <= lo && lo <= hi && hi <= 6) {
                return Err(Error::InvalidConfig(format!(
                    "level range must satisfy 2 <= lo <= hi <= 6, got ({lo}, {hi})"
                )));
            }
        }
        Ok(())
    }
}

/// Draws the `trial`-th model of a sweep. Deterministic in
/// `(config, seed, trial)` and independent across trials, so sweeps can be
/// evaluated in any order or in parallel.
pub fn sample_spec(config: &GeneratorConfig, seed: u64, trial: u64) -> Result<SpecSample, Error> {
    config.validate()?;
    let trial_seed = derive_seed(seed, trial);
    let mut dims_rng = ChaCha8Rng::seed_from_u64(splitmix64(trial_seed));
    let k_u = dims_rng.random_range(config.k_u.0..=config.k_u.1);
    let k_c = match config.kind {
        // taper kernels must be square
        GeneratorKind::RejectionTaper => k_u,
        _ => dims_rng.random_range(config.k_c.0..=config.k_c.1),
    };
    match config.kind {
        GeneratorKind::ExpFamily => {
            random_assumption_satisfying_spec(k_u, k_c, trial_seed, KernelMode::ExpFamily)
        }
        GeneratorKind::RejectionMlr => {
            random_assumption_satisfying_spec(k_u, k_c, trial_seed, KernelMode::RejectionMlr)
        }
        GeneratorKind::RejectionTaper => {
            random_assumption_satisfying_spec(k_u, k_c, trial_seed, KernelMode::RejectionTaper)
        }
        GeneratorKind::Unconstrained => unconstrained_spec(k_u, k_c, trial_seed),
    }
}

fn unconstrained_spec(k_u: usize, k_c: usize, seed: u64) -> Result<SpecSample, Error> {
    check_levels(k_u, k_c)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cols = (0..k_u).map(|_| dirichlet_flat(&mut rng, k_c)).collect();
    let c_given_u = CondMatrix::from_columns(cols, Vec::new())?;
    let propensity: Vec<f64> = (0..k_u)
        .map(|_| rng.random_range(GENERATOR_EPSILON..1.0 - GENERATOR_EPSILON))
        .collect();
    let m1: Vec<f64> = (0..k_u).map(|_| rng.random_range(0.05..0.95)).collect();
    let m0: Vec<f64> = (0..k_u).map(|_| rng.random_range(0.05..0.95)).collect();
    let pi_u = Pmf::new(dirichlet_flat(&mut rng, k_u))?;
    let spec = ModelSpec {
        pi_u,
        c_given_u,
        propensity,
        m1,
        m0,
        epsilon: GENERATOR_EPSILON,
    };
    Ok(SpecSample { spec, attempts: 1 })
}

// ── published counterexample settings ────────────────────────────────────────

/// The four counterexample settings of Gabriel, Sachs and Sjölander (2022),
/// each of which breaks exactly one monotonicity ingredient.
///
/// S4 and S5 are outcome-side settings: linear regressions
/// `gamma · u` (control) and `(gamma + delta) · u` (treated) whose slopes
/// disagree in sign. S6 makes the propensity non-monotone by giving the two
/// arms gamma-distributed confounders with crossing densities; S7 stratifies
/// by a binary covariate `x` and uses unit-variance normal confounders with
/// means `mu[a][x]`, which makes the per-stratum propensities monotone in
/// opposite directions. Intercept terms are omitted throughout: slopes and
/// monotonicity classes do not depend on them.
///
/// The S6 treatment share and all S7 parameters are not pinned down in
/// print; the defaults here ([`GabrielConfig::s6`], [`GabrielConfig::s7`])
/// merely exhibit the phenomena and are configurable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "setting")]
pub enum GabrielConfig {
    S4 {
        gamma: f64,
        delta: f64,
    },
    S5 {
        gamma: f64,
        delta: f64,
    },
    S6 {
        shape0: f64,
        scale0: f64,
        shape1: f64,
        scale1: f64,
        p_a1: f64,
    },
    S7 {
        /// P(X = 1).
        d: f64,
        /// P(A = 1 | X = x) for x = 0, 1.
        p_x: [f64; 2],
        /// Confounder means `mu[a][x]`.
        mu: [[f64; 2]; 2],
    },
}

impl GabrielConfig {
    pub fn s4() -> Self {
        GabrielConfig::S4 {
            gamma: 1.0,
            delta: -2.2,
        }
    }

    pub fn s5() -> Self {
        GabrielConfig::S5 {
            gamma: 1.0,
            delta: -1.8,
        }
    }

    pub fn s6() -> Self {
        GabrielConfig::S6 {
            shape0: 1.1,
            scale0: 2.0,
            shape1: 3.0,
            scale1: 0.8,
            p_a1: 0.5,
        }
    }

    pub fn s7() -> Self {
        GabrielConfig::S7 {
            d: 0.5,
            p_x: [0.4, 0.6],
            mu: [[0.0, 1.0], [1.0, 0.0]],
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        let ok = match self {
            GabrielConfig::S4 { gamma, delta } | GabrielConfig::S5 { gamma, delta } => {
                gamma.is_finite() && delta.is_finite()
            }
            GabrielConfig::S6 {
                shape0,
                scale0,
                shape1,
                scale1,
                p_a1,
            } => {
                [shape0, scale0, shape1, scale1].iter().all(|v| **v > 0.0 && v.is_finite())
                    && *p_a1 > 0.0
                    && *p_a1 < 1.0
            }
            GabrielConfig::S7 { d, p_x, mu } => {
                *d > 0.0
                    && *d < 1.0
                    && p_x.iter().all(|p| *p > 0.0 && *p < 1.0)
                    && mu.iter().flatten().all(|v| v.is_finite())
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("invalid parameters: {self:?}")))
        }
    }

    /// Grid the published figures plot over: the gamma setting uses
    /// `[0, 12]`, the normal setting `[-4, 4]`.
    pub fn default_grid(&self) -> GridSpec {
        match self {
            GabrielConfig::S6 { .. } => GridSpec::equal_width(0.0, 12.0, 49),
            _ => GridSpec::equal_width(-4.0, 4.0, 49),
        }
    }
}

impl FromStr for GabrielConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_uppercase().as_str() {
            "S4" => Ok(GabrielConfig::s4()),
            "S5" => Ok(GabrielConfig::s5()),
            "S6" => Ok(GabrielConfig::s6()),
            "S7" => Ok(GabrielConfig::s7()),
            other => Err(Error::InvalidConfig(format!(
                "unknown setting {other:?}, expected one of S4, S5, S6, S7"
            ))),
        }
    }
}

/// One point of a propensity curve; `x` is the stratum for settings that
/// have one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub u: f64,
    pub x: Option<u8>,
    pub p: f64,
}

/// `P(A = 1 | u)` sampled over a grid. `dropped` counts grid points where
/// both arm densities underflowed and no propensity is defined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityCurve {
    pub points: Vec<CurvePoint>,
    pub dropped: usize,
}

impl PropensityCurve {
    /// Propensity values of one stratum in grid order.
    pub fn stratum(&self, x: Option<u8>) -> Vec<f64> {
        self.points.iter().filter(|pt| pt.x == x).map(|pt| pt.p).collect()
    }

    /// CSV with header `u,p`, or `u,x,p` when strata are present.
    pub fn to_csv(&self) -> String {
        let with_x = self.points.iter().any(|pt| pt.x.is_some());
        let mut out = String::from(if with_x { "u,x,p\n" } else { "u,p\n" });
        for pt in &self.points {
            match pt.x {
                Some(x) if with_x => out.push_str(&format!("{},{},{}\n", pt.u, x, pt.p)),
                _ => out.push_str(&format!("{},{}\n", pt.u, pt.p)),
            }
        }
        out
    }
}

/// Propensity induced by arm-specific confounder densities via Bayes:
/// `P(A=1|u) = w1 f1(u) / (w1 f1(u) + w0 f0(u))`. Settings S6 and S7 only.
pub fn gabriel_propensity_curve(
    config: &GabrielConfig,
    u_grid: &GridSpec,
) -> Result<PropensityCurve, Error> {
    config.validate()?;
    match config {
        GabrielConfig::S4 { .. } | GabrielConfig::S5 { .. } => Err(Error::InvalidConfig(
            "outcome-side settings have no propensity curve; use S6 or S7".into(),
        )),
        GabrielConfig::S6 {
            shape0,
            scale0,
            shape1,
            scale1,
            p_a1,
        } => {
            let f0 = UPrior::Gamma {
                shape: *shape0,
                scale: *scale0,
            };
            let f1 = UPrior::Gamma {
                shape: *shape1,
                scale: *scale1,
            };
            // quantile grids follow the confounder marginal, the arm mixture
            let points = u_grid
                .points_from_cdf(|x| (1.0 - p_a1) * f0.cdf(x) + p_a1 * f1.cdf(x))?;
            let mut curve = PropensityCurve {
                points: Vec::with_capacity(points.len()),
                dropped: 0,
            };
            for u in points {
                let w0 = (1.0 - p_a1) * f0.pdf(u);
                let w1 = p_a1 * f1.pdf(u);
                let total = w0 + w1;
                if total > 0.0 && total.is_finite() {
                    curve.points.push(CurvePoint {
                        u,
                        x: None,
                        p: w1 / total,
                    });
                } else {
                    curve.dropped += 1;
                }
            }
            Ok(curve)
        }
        GabrielConfig::S7 { d, p_x, mu } => {
            let mixture_cdf = |u: f64| {
                let mut acc = 0.0;
                for (x, &px) in p_x.iter().enumerate() {
                    let wx = if x == 1 { *d } else { 1.0 - d };
                    for (a, weight) in [(0usize, 1.0 - px), (1usize, px)] {
                        let normal = UPrior::Normal {
                            mean: mu[a][x],
                            sd: 1.0,
                        };
                        acc += wx * weight * normal.cdf(u);
                    }
                }
                acc
            };
            let points = u_grid.points_from_cdf(mixture_cdf)?;
            let mut curve = PropensityCurve {
                points: Vec::with_capacity(2 * points.len()),
                dropped: 0,
            };
            for x in 0..2usize {
                let px = p_x[x];
                for &u in &points {
                    let f = |a: usize| {
                        UPrior::Normal {
                            mean: mu[a][x],
                            sd: 1.0,
                        }
                        .pdf(u)
                    };
                    let w0 = (1.0 - px) * f(0);
                    let w1 = px * f(1);
                    let total = w0 + w1;
                    if total > 0.0 && total.is_finite() {
                        curve.points.push(CurvePoint {
                            u,
                            x: Some(x as u8),
                            p: w1 / total,
                        });
                    } else {
                        curve.dropped += 1;
                    }
                }
            }
            Ok(curve)
        }
    }
}

/// Slopes of the linear outcome regressions in the outcome-side settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSlopes {
    pub slope_a0: f64,
    pub slope_a1: f64,
    pub directions: [Direction; 2],
    /// Whether the two regressions share a weak monotone direction.
    pub shared_direction: bool,
}

/// Outcome regression slopes per arm: `gamma` under control,
/// `gamma + delta` under treatment. Settings S4 and S5 only.
pub fn gabriel_outcome_slopes(config: &GabrielConfig) -> Result<OutcomeSlopes, Error> {
    config.validate()?;
    match *config {
        GabrielConfig::S4 { gamma, delta } | GabrielConfig::S5 { gamma, delta } => {
            let slope_a0 = gamma;
            let slope_a1 = gamma + delta;
            let dir = |slope: f64| {
                if slope > 0.0 {
                    Direction::NonDecreasing
                } else if slope < 0.0 {
                    Direction::NonIncreasing
                } else {
                    Direction::Constant
                }
            };
            Ok(OutcomeSlopes {
                slope_a0,
                slope_a1,
                directions: [dir(slope_a0), dir(slope_a1)],
                shared_direction: slope_a0 * slope_a1 >= 0.0,
            })
        }
        _ => Err(Error::InvalidConfig(
            "propensity-side settings have no outcome slopes; use S4 or S5".into(),
        )),
    }
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            GeneratorKind::ExpFamily => "expfamily",
            GeneratorKind::RejectionMlr => "rejection-mlr",
            GeneratorKind::RejectionTaper => "rejection-taper",
            GeneratorKind::Unconstrained => "unconstrained",
        };
        f.write_str(name)
    }
}

impl FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "expfamily" => Ok(GeneratorKind::ExpFamily),
            "rejection-mlr" => Ok(GeneratorKind::RejectionMlr),
            "rejection-taper" => Ok(GeneratorKind::RejectionTaper),
            "unconstrained" => Ok(GeneratorKind::Unconstrained),
            other => Err(Error::InvalidConfig(format!(
                "unknown generator {other:?}"
            ))),
        }
    }
}
