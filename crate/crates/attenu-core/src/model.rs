//! Discrete confounder / proxy / treatment / outcome models.
//!
//! A [`ModelSpec`] pins down the joint law of `(U, C, A, Y)` through five
//! ingredients: a prior over latent confounder levels, a column-stochastic
//! measurement kernel `P(C | U)`, a propensity per confounder level, and one
//! outcome-mean vector per arm. Levels are 1-based ordinals and their order
//! is meaningful everywhere; nothing in this crate ever reorders them.
//!
//! Construction is deliberately permissive: a malformed spec can be built
//! (or deserialized) and then inspected with [`ModelSpec::validate`], which
//! reports every violated invariant instead of failing on the first.
//! Operations that require a valid spec return [`Error::InvalidModel`] with
//! the full report.

use serde::{Deserialize, Serialize};

use crate::Error;

/// Tolerance for "sums to one" checks on probability vectors.
pub const STOCHASTIC_TOL: f64 = 1e-9;

// ── probability vectors and kernels ─────────────────────────────────────────

/// Probability mass function over 1-based ordinal levels.
///
/// Level `k` has mass `probs()[k - 1]`. [`Pmf::new`] enforces the invariants
/// (entries in `[0, 1]`, total mass one within [`STOCHASTIC_TOL`]);
/// [`Pmf::new_unchecked`] defers them to [`ModelSpec::validate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Pmf(Vec<f64>);

impl Pmf {
    pub fn new(probs: Vec<f64>) -> Result<Self, Error> {
        let pmf = Self(probs);
        let mut report = ValidationReport::default();
        pmf.validate_into("pmf", &mut report);
        if report.is_valid() {
            Ok(pmf)
        } else {
            Err(Error::InvalidModel(report))
        }
    }

    /// Wraps raw masses without checking them. Pair with [`ModelSpec::validate`].
    pub fn new_unchecked(probs: Vec<f64>) -> Self {
        Self(probs)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn probs(&self) -> &[f64] {
        &self.0
    }

    /// Mass at 0-based index `k` (level `k + 1`).
    pub fn get(&self, k: usize) -> f64 {
        self.0[k]
    }

    pub fn total(&self) -> f64 {
        self.0.iter().sum()
    }

    fn validate_into(&self, name: &str, report: &mut ValidationReport) {
        if self.0.is_empty() {
            report.push(format!("{name} is empty"), None);
            return;
        }
        for (k, &p) in self.0.iter().enumerate() {
            if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                report.push(format!("{name} entry at level {} is {p}, outside [0, 1]", k + 1), Some(k + 1));
            }
        }
        let total = self.total();
        if (total - 1.0).abs() > STOCHASTIC_TOL {
            report.push(format!("{name} does not sum to 1 (got {total})"), None);
        }
    }
}

/// Column-stochastic conditional probability matrix.
///
/// Rows index the child variable's levels and columns the parent's; entry
/// `(i, j)` (0-based) is `P(child = i + 1 | parent = j + 1)`. For measurement
/// kernels the child is the proxy `C` and the parent the confounder `U`, so
/// each column describes the proxy distribution at one confounder level and
/// must sum to one.
///
/// Kernels derived by Bayes inversion can have columns that condition on a
/// zero-probability event. Those columns are kept (filled with zeros) and
/// flagged via [`CondMatrix::undefined_cols`]; dependence checks treat a
/// kernel with flagged columns as undefined rather than guessing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct CondMatrix {
    data: Vec<f64>, // row-major
    n_rows: usize,
    n_cols: usize,
    undefined: Vec<usize>, // sorted 0-based column indices
}

impl CondMatrix {
    /// Builds a kernel and checks that every column is a valid pmf.
    pub fn new(rows: Vec<Vec<f64>>) -> Result<Self, Error> {
        let m = Self::from_rows(rows)?;
        let mut report = ValidationReport::default();
        m.validate_into("kernel", &mut report);
        if report.is_valid() {
            Ok(m)
        } else {
            Err(Error::InvalidModel(report))
        }
    }

    /// Builds a kernel checking only the shape, not stochasticity.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self, Error> {
        if rows.is_empty() || rows[0].is_empty() {
            return Err(Error::InvalidConfig("matrix must be non-empty".into()));
        }
        let n_cols = rows[0].len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_cols {
                return Err(Error::RaggedMatrix {
                    row: i + 1,
                    got: row.len(),
                    expected: n_cols,
                });
            }
        }
        let n_rows = rows.len();
        let data = rows.into_iter().flatten().collect();
        Ok(Self {
            data,
            n_rows,
            n_cols,
            undefined: Vec::new(),
        })
    }

    pub(crate) fn from_columns(
        columns: Vec<Vec<f64>>,
        undefined: Vec<usize>,
    ) -> Result<Self, Error> {
        if columns.is_empty() || columns[0].is_empty() {
            return Err(Error::InvalidConfig("matrix must be non-empty".into()));
        }
        let n_rows = columns[0].len();
        let n_cols = columns.len();
        for (j, col) in columns.iter().enumerate() {
            if col.len() != n_rows {
                return Err(Error::RaggedMatrix {
                    row: j + 1,
                    got: col.len(),
                    expected: n_rows,
                });
            }
        }
        let mut data = vec![0.0; n_rows * n_cols];
        for (j, col) in columns.iter().enumerate() {
            for (i, &v) in col.iter().enumerate() {
                data[i * n_cols + j] = v;
            }
        }
        Ok(Self {
            data,
            n_rows,
            n_cols,
            undefined,
        })
    }

    /// Number of child levels (rows).
    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    /// Number of parent levels (columns).
    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn is_square(&self) -> bool {
        self.n_rows == self.n_cols
    }

    /// Entry `(i, j)`, 0-based: `P(child = i + 1 | parent = j + 1)`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n_cols + j]
    }

    pub fn column(&self, j: usize) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_rows).map(move |i| self.get(i, j))
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        (0..self.n_rows).map(|i| self.row(i).to_vec()).collect()
    }

    /// 0-based indices of columns that condition on a zero-probability event.
    pub fn undefined_cols(&self) -> &[usize] {
        &self.undefined
    }

    pub fn col_is_defined(&self, j: usize) -> bool {
        !self.undefined.contains(&j)
    }

    pub fn has_undefined_cols(&self) -> bool {
        !self.undefined.is_empty()
    }

    /// The same kernel with the child level order reversed.
    ///
    /// Negative regression dependence of the child on the parent is exactly
    /// positive regression dependence of the reversed child, so checkers
    /// probe the negative direction by re-running on this matrix.
    pub fn row_reversed(&self) -> Self {
        let mut rows = self.rows();
        rows.reverse();
        let mut out = Self::from_rows(rows).expect("shape preserved");
        out.undefined = self.undefined.clone();
        out
    }

    /// Serializes as one comma-separated line per child level, no header.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n_rows {
            let line: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    /// Parses the CSV form accepted by `to_csv`: one row per child level,
    /// comma-separated, no header. Stochasticity is not checked here; run
    /// the kernel through a [`ModelSpec`] validation or [`CondMatrix::new`]
    /// to enforce it.
    pub fn from_csv(text: &str) -> Result<Self, Error> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut row = Vec::new();
            for field in line.split(',') {
                let field = field.trim();
                let value: f64 = field.parse().map_err(|_| Error::Csv {
                    line: lineno + 1,
                    message: format!("cannot parse {field:?} as a number"),
                })?;
                row.push(value);
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Csv {
                line: 1,
                message: "no rows".into(),
            });
        }
        let expected = rows[0].len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != expected {
                return Err(Error::Csv {
                    line: i + 1,
                    message: format!("expected {expected} fields, got {}", row.len()),
                });
            }
        }
        Self::from_rows(rows)
    }

    fn validate_into(&self, name: &str, report: &mut ValidationReport) {
        for j in 0..self.n_cols {
            let mut sum = 0.0;
            let mut entries_ok = true;
            for i in 0..self.n_rows {
                let p = self.get(i, j);
                if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                    report.push(
                        format!("{name} entry ({}, {}) is {p}, outside [0, 1]", i + 1, j + 1),
                        Some(j + 1),
                    );
                    entries_ok = false;
                }
                sum += p;
            }
            if entries_ok && (sum - 1.0).abs() > STOCHASTIC_TOL {
                report.push(format!("column {} not stochastic (sums to {sum})", j + 1), Some(j + 1));
            }
        }
    }
}

impl TryFrom<Vec<Vec<f64>>> for CondMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self, Error> {
        Self::from_rows(rows)
    }
}

impl From<CondMatrix> for Vec<Vec<f64>> {
    fn from(m: CondMatrix) -> Self {
        m.rows()
    }
}

// ── validation ───────────────────────────────────────────────────────────────

/// One violated invariant; `index` is the offending 1-based level or column
/// when the violation is localized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub invariant: String,
    pub index: Option<usize>,
}

/// Everything wrong with a spec. Empty means valid.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, invariant: String, index: Option<usize>) {
        self.violations.push(Violation { invariant, index });
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.violations.is_empty() {
            return write!(f, "valid");
        }
        let msgs: Vec<&str> = self.violations.iter().map(|v| v.invariant.as_str()).collect();
        write!(f, "{}", msgs.join("; "))
    }
}

// ── treatment arms ───────────────────────────────────────────────────────────

/// Binary treatment arm.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Arm {
    Control,
    Treated,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Control, Arm::Treated];

    /// 0 for control, 1 for treated; used to index per-arm arrays.
    pub fn index(self) -> usize {
        match self {
            Arm::Control => 0,
            Arm::Treated => 1,
        }
    }

    /// `P(A = a | U = u)` given the treated-arm propensity `e(u)`.
    pub fn weight(self, e: f64) -> f64 {
        match self {
            Arm::Control => 1.0 - e,
            Arm::Treated => e,
        }
    }
}

// ── the model ────────────────────────────────────────────────────────────────

/// Fully specified discrete model.
///
/// * `pi_u`: prior over the `K_U` confounder levels.
/// * `c_given_u`: measurement kernel, rows index proxy levels, columns
///   confounder levels. Nondifferential measurement means exactly that this
///   kernel carries all dependence of `C` on the rest of the model.
/// * `propensity`: `e(u) = P(A = 1 | U = u)` per confounder level.
/// * `m1`, `m0`: outcome means `E(Y | A = a, U = u)` per arm and level.
/// * `epsilon`: positivity margin; every `e(u)` must lie in
///   `[epsilon, 1 - epsilon]` with `epsilon` in `(0, 0.5]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub pi_u: Pmf,
    pub c_given_u: CondMatrix,
    pub propensity: Vec<f64>,
    pub m1: Vec<f64>,
    pub m0: Vec<f64>,
    pub epsilon: f64,
}

impl ModelSpec {
    /// Number of confounder levels.
    pub fn k_u(&self) -> usize {
        self.pi_u.len()
    }

    /// Number of proxy levels.
    pub fn k_c(&self) -> usize {
        self.c_given_u.n_rows()
    }

    /// Outcome means for one arm.
    pub fn outcome(&self, arm: Arm) -> &[f64] {
        match arm {
            Arm::Control => &self.m0,
            Arm::Treated => &self.m1,
        }
    }

    /// Checks every model invariant and reports all violations.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        self.pi_u.validate_into("pi_u", &mut report);
        self.c_given_u.validate_into("c_given_u", &mut report);

        let k_u = self.k_u();
        if self.c_given_u.n_cols() != k_u {
            report.push(
                format!(
                    "c_given_u has {} columns, expected one per confounder level ({k_u})",
                    self.c_given_u.n_cols()
                ),
                None,
            );
        }
        for (name, v) in [("propensity", &self.propensity), ("m1", &self.m1), ("m0", &self.m0)] {
            if v.len() != k_u {
                report.push(format!("{name} has length {}, expected {k_u}", v.len()), None);
            }
            for (k, &x) in v.iter().enumerate() {
                if !x.is_finite() {
                    report.push(format!("{name} entry at u={} is not finite", k + 1), Some(k + 1));
                }
            }
        }

        if !self.epsilon.is_finite() || self.epsilon <= 0.0 || self.epsilon > 0.5 {
            report.push(format!("epsilon must lie in (0, 0.5], got {}", self.epsilon), None);
        } else {
            for (k, &e) in self.propensity.iter().enumerate() {
                if !(self.epsilon..=1.0 - self.epsilon).contains(&e) {
                    report.push(format!("positivity at u={}", k + 1), Some(k + 1));
                }
            }
        }
        report
    }

    /// `Ok(())` when valid, otherwise the full report as an error.
    pub fn require_valid(&self) -> Result<(), Error> {
        let report = self.validate();
        if report.is_valid() {
            Ok(())
        } else {
            Err(Error::InvalidModel(report))
        }
    }
}

// ── derived conditionals ─────────────────────────────────────────────────────

/// Proxy marginal `f(c) = sum_u P(C = c | U = u) pi(u)`.
pub fn marginal_c(spec: &ModelSpec) -> Result<Pmf, Error> {
    spec.require_valid()?;
    let k = &spec.c_given_u;
    let masses = (0..k.n_rows())
        .map(|c| (0..k.n_cols()).map(|u| k.get(c, u) * spec.pi_u.get(u)).sum())
        .collect();
    Ok(Pmf::new_unchecked(masses))
}

/// Bayes inversion of the measurement kernel: `P(U = u | C = c)`.
///
/// Rows index confounder levels, columns proxy levels. Columns where
/// `f(c) = 0` are flagged undefined and filled with zeros.
pub fn posterior_u_given_c(spec: &ModelSpec) -> Result<CondMatrix, Error> {
    spec.require_valid()?;
    posterior_with_weights(spec, |_| 1.0)
}

/// Posterior over confounder levels given the proxy within one arm:
/// `P(U = u | C = c, A = a)`.
///
/// Positivity makes the arm weights strictly positive, so exactly the
/// columns with `f(c) = 0` are undefined, as for [`posterior_u_given_c`].
pub fn posterior_u_given_ac(spec: &ModelSpec, arm: Arm) -> Result<CondMatrix, Error> {
    spec.require_valid()?;
    posterior_with_weights(spec, |u| arm.weight(spec.propensity[u]))
}

fn posterior_with_weights(
    spec: &ModelSpec,
    weight: impl Fn(usize) -> f64,
) -> Result<CondMatrix, Error> {
    let k = &spec.c_given_u;
    let (k_c, k_u) = (k.n_rows(), k.n_cols());
    let mut columns = Vec::with_capacity(k_c);
    let mut undefined = Vec::new();
    for c in 0..k_c {
        let joint: Vec<f64> = (0..k_u)
            .map(|u| spec.pi_u.get(u) * k.get(c, u) * weight(u))
            .collect();
        let total: f64 = joint.iter().sum();
        if total == 0.0 {
            undefined.push(c);
            columns.push(vec![0.0; k_u]);
        } else {
            columns.push(joint.iter().map(|&j| j / total).collect());
        }
    }
    CondMatrix::from_columns(columns, undefined)
}

/// Observable propensity by proxy level: `P(A = 1 | C = c)`.
///
/// `None` at levels the proxy never takes (`f(c) = 0`).
pub fn propensity_given_c(spec: &ModelSpec) -> Result<Vec<Option<f64>>, Error> {
    let posterior = posterior_u_given_c(spec)?;
    Ok((0..posterior.n_cols())
        .map(|c| {
            posterior.col_is_defined(c).then(|| {
                (0..posterior.n_rows())
                    .map(|u| spec.propensity[u] * posterior.get(u, c))
                    .sum()
            })
        })
        .collect())
}

/// Observable outcome regression on the proxy: `E(Y | A = a, C = c)`.
///
/// `None` at levels the proxy never takes (`f(c) = 0`).
pub fn outcome_given_ac(spec: &ModelSpec, arm: Arm) -> Result<Vec<Option<f64>>, Error> {
    let posterior = posterior_u_given_ac(spec, arm)?;
    let m = spec.outcome(arm);
    Ok((0..posterior.n_cols())
        .map(|c| {
            posterior.col_is_defined(c).then(|| {
                (0..posterior.n_rows())
                    .map(|u| m[u] * posterior.get(u, c))
                    .sum()
            })
        })
        .collect())
}

// ── monotonicity ─────────────────────────────────────────────────────────────

/// Direction of a finite sequence read along increasing level.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Constant,
    NonDecreasing,
    NonIncreasing,
    NonMonotone,
}

impl Direction {
    /// `+1` / `-1` for strict trends, `0` for constant, `None` if neither
    /// reading fits. Constant sequences are compatible with either sign.
    pub fn sign(self) -> Option<i8> {
        match self {
            Direction::Constant => Some(0),
            Direction::NonDecreasing => Some(1),
            Direction::NonIncreasing => Some(-1),
            Direction::NonMonotone => None,
        }
    }
}

/// Monotonicity verdict for a sequence.
///
/// `witness` is present exactly when the sequence is non-monotone: the first
/// adjacent pair (1-based level indices) where the value strictly drops,
/// i.e. the first counterexample to the non-decreasing reading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonotoneClass {
    pub direction: Direction,
    pub witness: Option<(usize, usize)>,
}

impl MonotoneClass {
    pub fn is_monotone(&self) -> bool {
        self.direction != Direction::NonMonotone
    }

    /// Shorthand for the direction's sign.
    pub fn sign(&self) -> Option<i8> {
        self.direction.sign()
    }
}

/// Classifies a sequence, ignoring moves within `tol` of zero.
pub fn classify_monotone(values: &[f64], tol: f64) -> MonotoneClass {
    let indexed: Vec<(usize, f64)> = values.iter().copied().enumerate().collect();
    classify_indexed(&indexed, tol)
}

/// Classifies a sequence with undefined entries (`None`) excluded.
///
/// Comparisons run over consecutive defined entries; witnesses refer to the
/// original 1-based positions.
pub fn classify_monotone_partial(values: &[Option<f64>], tol: f64) -> MonotoneClass {
    let indexed: Vec<(usize, f64)> = values
        .iter()
        .enumerate()
        .filter_map(|(k, v)| v.map(|x| (k, x)))
        .collect();
    classify_indexed(&indexed, tol)
}

fn classify_indexed(values: &[(usize, f64)], tol: f64) -> MonotoneClass {
    let mut rises = false;
    let mut first_drop = None;
    for pair in values.windows(2) {
        let (i, a) = pair[0];
        let (j, b) = pair[1];
        if b > a + tol {
            rises = true;
        }
        if b < a - tol && first_drop.is_none() {
            first_drop = Some((i + 1, j + 1));
        }
    }
    let direction = match (rises, first_drop.is_some()) {
        (false, false) => Direction::Constant,
        (true, false) => Direction::NonDecreasing,
        (false, true) => Direction::NonIncreasing,
        (true, true) => Direction::NonMonotone,
    };
    MonotoneClass {
        direction,
        witness: if direction == Direction::NonMonotone {
            first_drop
        } else {
            None
        },
    }
}
