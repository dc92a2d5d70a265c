//! Model types for the coupled two-component rating process.
//!
//! A model consists of one shared state space with per-component Up/Down
//! partitions, per-component one-step transition laws conditioned on both
//! components' states, and per-component sojourn-time distributions that
//! depend only on the occupied state. Sojourn distributions are tabulated
//! cumulatively on `0..=kmax` and must be proper at the truncation horizon,
//! which keeps every downstream sum finite.

use std::collections::HashSet;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::real::{real, Real};

/// Row sums of the transition laws must be 1 within this tolerance.
pub const ROW_SUM_TOL: f64 = 1e-9;
/// Sojourn cdfs must reach 1 at the truncation horizon within this tolerance.
pub const CDF_TERMINAL_TOL: f64 = 1e-12;
/// Down states count as absorbing when the self-transition mass is within this
/// tolerance of 1.
pub const ABSORBING_TOL: f64 = 1e-12;

/// One of the two components of the system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Component {
    One,
    Two,
}

impl Component {
    pub const BOTH: [Component; 2] = [Component::One, Component::Two];

    pub fn index(self) -> usize {
        match self {
            Component::One => 0,
            Component::Two => 1,
        }
    }

    pub fn other(self) -> Component {
        match self {
            Component::One => Component::Two,
            Component::Two => Component::One,
        }
    }

    pub fn from_index(idx: usize) -> Option<Component> {
        match idx {
            0 => Some(Component::One),
            1 => Some(Component::Two),
            _ => None,
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.index() + 1)
    }
}

/// Shared state labels plus the per-component Up/Down partitions.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    labels: Vec<String>,
    up: [Vec<usize>; 2],
    down: [Vec<usize>; 2],
    in_up: [Vec<bool>; 2],
}

impl StateSpace {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    /// Indices of the Up (working / non-default) states of a component.
    pub fn up(&self, c: Component) -> &[usize] {
        &self.up[c.index()]
    }

    /// Indices of the Down (failed / default) states of a component.
    pub fn down(&self, c: Component) -> &[usize] {
        &self.down[c.index()]
    }

    pub fn is_up(&self, c: Component, i: usize) -> bool {
        self.in_up[c.index()][i]
    }
}

/// One-step transition law of a component's embedded chain, conditioned on the
/// pair of occupied states. Stored as `[i_own][i_other][j]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MarginalTransitionLaw<T> {
    component: Component,
    d: usize,
    probs: Vec<T>,
}

impl<T: Real> MarginalTransitionLaw<T> {
    pub fn component(&self) -> Component {
        self.component
    }

    pub fn prob(&self, i_own: usize, i_other: usize, j: usize) -> T {
        self.probs[(i_own * self.d + i_other) * self.d + j]
    }

    pub fn row(&self, i_own: usize, i_other: usize) -> &[T] {
        let base = (i_own * self.d + i_other) * self.d;
        &self.probs[base..base + self.d]
    }
}

/// Sojourn-time distribution of a component, cumulative per occupied state.
/// `cdf(i, k)` is `P(sojourn in state i <= k)`, extended with 1 beyond `kmax`.
#[derive(Debug, Clone, PartialEq)]
pub struct SojournLaw<T> {
    component: Component,
    d: usize,
    kmax: usize,
    cdf_table: Vec<T>,
}

impl<T: Real> SojournLaw<T> {
    pub fn component(&self) -> Component {
        self.component
    }

    pub fn kmax(&self) -> usize {
        self.kmax
    }

    pub fn cdf(&self, i: usize, k: usize) -> T {
        if k > self.kmax {
            T::one()
        } else {
            self.cdf_table[i * (self.kmax + 1) + k]
        }
    }

    /// Point mass at exactly `k` periods: `F(k) - F(k-1)`, zero at `k = 0`.
    pub fn mass(&self, i: usize, k: usize) -> T {
        if k == 0 || k > self.kmax {
            T::zero()
        } else {
            self.cdf(i, k) - self.cdf(i, k - 1)
        }
    }

    pub fn survival(&self, i: usize, k: usize) -> T {
        T::one() - self.cdf(i, k)
    }
}

/// Starting point of both components: occupied states and elapsed times since
/// each component's last transition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct InitialCondition {
    pub i1: usize,
    pub i2: usize,
    pub v1: usize,
    pub v2: usize,
}

impl InitialCondition {
    pub fn new(i1: usize, i2: usize, v1: usize, v2: usize) -> Self {
        Self { i1, i2, v1, v2 }
    }

    pub fn fresh(i1: usize, i2: usize) -> Self {
        Self::new(i1, i2, 0, 0)
    }

    pub fn state(&self, c: Component) -> usize {
        match c {
            Component::One => self.i1,
            Component::Two => self.i2,
        }
    }

    pub fn backward(&self, c: Component) -> usize {
        match c {
            Component::One => self.v1,
            Component::Two => self.v2,
        }
    }
}

/// A single broken invariant found by [`BivariateModel::validate`].
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Violation {
    #[error("state space needs at least 2 states, got {0}")]
    TooFewStates(usize),
    #[error("duplicate state label {0:?}")]
    DuplicateLabel(String),
    #[error("component {component}: state {label:?} in both Up and Down")]
    PartitionOverlap { component: Component, label: String },
    #[error("component {component}: state {label:?} in neither Up nor Down")]
    PartitionIncomplete { component: Component, label: String },
    #[error("component {component}: p[{i_own}][{i_other}][{j}] = {value} outside [0, 1]")]
    ProbOutOfRange {
        component: Component,
        i_own: usize,
        i_other: usize,
        j: usize,
        value: f64,
    },
    #[error("component {component}: row sum != 1 at ({i_own},{i_other}): {sum}")]
    RowSumNotOne {
        component: Component,
        i_own: usize,
        i_other: usize,
        sum: f64,
    },
    #[error("component {component}, state {state}: F(0) must be 0, got {value}")]
    CdfStartNotZero {
        component: Component,
        state: usize,
        value: f64,
    },
    #[error("component {component}, state {state}: non-monotone CDF at k = {k}")]
    CdfNotMonotone {
        component: Component,
        state: usize,
        k: usize,
    },
    #[error("component {component}, state {state}: F(kmax) must be 1, got {value}")]
    CdfTerminalNotOne {
        component: Component,
        state: usize,
        value: f64,
    },
}

/// Outcome of validating a model: the list of violations (empty means valid)
/// plus, per component, whether every Down state is absorbing. The absorbing
/// structure is required by reliability and pricing but not by the solver.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub absorbing: [bool; 2],
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.violations.is_empty() {
            write!(f, "valid")?;
        } else {
            for (n, v) in self.violations.iter().enumerate() {
                if n > 0 {
                    writeln!(f)?;
                }
                write!(f, "{v}")?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot read model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("cannot parse model file: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("unknown state label {0:?}")]
    UnknownLabel(String),
    #[error("model violates invariants:\n{0}")]
    Invalid(ValidationReport),
}

/// On-disk representation of a model (JSON). Unknown fields are rejected.
///
/// `p1`/`p2` are `[i_own][i_other][j]` (so `p2` is indexed by component 2's
/// own state first); `f1`/`f2` hold cumulative sojourn probabilities for
/// `k = 0..=kmax`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub states: Vec<String>,
    pub up1: Vec<String>,
    pub down1: Vec<String>,
    pub up2: Vec<String>,
    pub down2: Vec<String>,
    pub kmax: usize,
    pub p1: Vec<Vec<Vec<f64>>>,
    pub p2: Vec<Vec<Vec<f64>>>,
    pub f1: Vec<Vec<f64>>,
    pub f2: Vec<Vec<f64>>,
}

impl ModelFile {
    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model file serializes")
    }

    pub fn write_to(&self, path: impl AsRef<Path>) -> Result<(), ModelError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

/// The validated model: state space, both transition laws, both sojourn laws,
/// and the shared truncation horizon. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct BivariateModel<T> {
    states: StateSpace,
    trans: [MarginalTransitionLaw<T>; 2],
    sojourn: [SojournLaw<T>; 2],
    kmax: usize,
}

impl<T: Real> BivariateModel<T> {
    /// Assembles and validates a model from plain nested tables.
    /// `p1`/`p2` are `[i_own][i_other][j]`, `f1`/`f2` are `[i][k]`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        labels: Vec<String>,
        up1: Vec<usize>,
        up2: Vec<usize>,
        kmax: usize,
        p1: Vec<Vec<Vec<T>>>,
        p2: Vec<Vec<Vec<T>>>,
        f1: Vec<Vec<T>>,
        f2: Vec<Vec<T>>,
    ) -> Result<Self, ModelError> {
        let model = Self::assemble(labels, up1, up2, kmax, p1, p2, f1, f2)?;
        let report = model.validate();
        if report.is_valid() {
            Ok(model)
        } else {
            Err(ModelError::Invalid(report))
        }
    }

    /// Assembles a model without the invariant gate. Dimensions are still
    /// checked; intended for constructing counterexamples to feed `validate`.
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts_unchecked(
        labels: Vec<String>,
        up1: Vec<usize>,
        up2: Vec<usize>,
        kmax: usize,
        p1: Vec<Vec<Vec<T>>>,
        p2: Vec<Vec<Vec<T>>>,
        f1: Vec<Vec<T>>,
        f2: Vec<Vec<T>>,
    ) -> Result<Self, ModelError> {
        Self::assemble(labels, up1, up2, kmax, p1, p2, f1, f2)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        labels: Vec<String>,
        up1: Vec<usize>,
        up2: Vec<usize>,
        kmax: usize,
        p1: Vec<Vec<Vec<T>>>,
        p2: Vec<Vec<Vec<T>>>,
        f1: Vec<Vec<T>>,
        f2: Vec<Vec<T>>,
    ) -> Result<Self, ModelError> {
        let d = labels.len();
        if kmax == 0 {
            return Err(ModelError::Dimension("kmax must be >= 1".into()));
        }
        for (i, up) in [&up1, &up2].into_iter().enumerate() {
            if let Some(&s) = up.iter().find(|&&s| s >= d) {
                return Err(ModelError::Dimension(format!(
                    "up{} contains state index {s} but d = {d}",
                    i + 1
                )));
            }
        }
        let down1 = (0..d).filter(|i| !up1.contains(i)).collect::<Vec<_>>();
        let down2 = (0..d).filter(|i| !up2.contains(i)).collect::<Vec<_>>();
        let in_up1 = (0..d).map(|i| up1.contains(&i)).collect::<Vec<_>>();
        let in_up2 = (0..d).map(|i| up2.contains(&i)).collect::<Vec<_>>();
        let states = StateSpace {
            labels,
            up: [up1, up2],
            down: [down1, down2],
            in_up: [in_up1, in_up2],
        };

        let trans1 = flatten_trans(Component::One, d, p1)?;
        let trans2 = flatten_trans(Component::Two, d, p2)?;
        let soj1 = flatten_sojourn(Component::One, d, kmax, f1)?;
        let soj2 = flatten_sojourn(Component::Two, d, kmax, f2)?;

        Ok(Self {
            states,
            trans: [trans1, trans2],
            sojourn: [soj1, soj2],
            kmax,
        })
    }

    /// Resolves a [`ModelFile`] into a validated model.
    pub fn from_file(file: &ModelFile) -> Result<Self, ModelError> {
        let model = Self::from_file_unchecked(file)?;
        let report = model.validate();
        if report.is_valid() {
            Ok(model)
        } else {
            Err(ModelError::Invalid(report))
        }
    }

    fn from_file_unchecked(file: &ModelFile) -> Result<Self, ModelError> {
        let resolve = |names: &[String]| -> Result<Vec<usize>, ModelError> {
            names
                .iter()
                .map(|n| {
                    file.states
                        .iter()
                        .position(|s| s == n)
                        .ok_or_else(|| ModelError::UnknownLabel(n.clone()))
                })
                .collect()
        };
        let up1 = resolve(&file.up1)?;
        let up2 = resolve(&file.up2)?;
        let down1 = resolve(&file.down1)?;
        let down2 = resolve(&file.down2)?;
        let conv3 = |p: &[Vec<Vec<f64>>]| -> Vec<Vec<Vec<T>>> {
            p.iter()
                .map(|m| m.iter().map(|r| r.iter().map(|&x| real(x)).collect()).collect())
                .collect()
        };
        let conv2 = |f: &[Vec<f64>]| -> Vec<Vec<T>> {
            f.iter()
                .map(|r| r.iter().map(|&x| real(x)).collect())
                .collect()
        };
        let mut model = Self::assemble(
            file.states.clone(),
            up1,
            up2,
            file.kmax,
            conv3(&file.p1),
            conv3(&file.p2),
            conv2(&file.f1),
            conv2(&file.f2),
        )?;
        // Partition violations must be reported against the file's Down sets,
        // not against the complement of Up that `assemble` derives.
        model.states.down = [down1, down2];
        Ok(model)
    }

    /// Loads, parses, and validates a model file.
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ModelError> {
        let file = ModelFile::from_path(path)?;
        Self::from_file(&file)
    }

    /// Checks every probabilistic invariant and reports all violations plus
    /// the per-component absorbing flags.
    pub fn validate(&self) -> ValidationReport {
        let mut violations = Vec::new();
        let d = self.d();

        if d < 2 {
            violations.push(Violation::TooFewStates(d));
        }
        let mut seen = HashSet::new();
        for l in self.states.labels() {
            if !seen.insert(l.clone()) {
                violations.push(Violation::DuplicateLabel(l.clone()));
            }
        }
        for c in Component::BOTH {
            let ci = c.index();
            for i in 0..d {
                let in_up = self.states.up[ci].contains(&i);
                let in_down = self.states.down[ci].contains(&i);
                if in_up && in_down {
                    violations.push(Violation::PartitionOverlap {
                        component: c,
                        label: self.states.label(i).to_string(),
                    });
                }
                if !in_up && !in_down {
                    violations.push(Violation::PartitionIncomplete {
                        component: c,
                        label: self.states.label(i).to_string(),
                    });
                }
            }
        }

        let row_tol: T = real(ROW_SUM_TOL);
        for c in Component::BOTH {
            let law = &self.trans[c.index()];
            for i_own in 0..d {
                for i_other in 0..d {
                    let mut sum = T::zero();
                    for j in 0..d {
                        let p = law.prob(i_own, i_other, j);
                        if p < T::zero() || p > T::one() {
                            violations.push(Violation::ProbOutOfRange {
                                component: c,
                                i_own,
                                i_other,
                                j,
                                value: p.to_f64().unwrap_or(f64::NAN),
                            });
                        }
                        sum += p;
                    }
                    if (sum - T::one()).abs() > row_tol {
                        violations.push(Violation::RowSumNotOne {
                            component: c,
                            i_own,
                            i_other,
                            sum: sum.to_f64().unwrap_or(f64::NAN),
                        });
                    }
                }
            }
        }

        let term_tol: T = real(CDF_TERMINAL_TOL);
        for c in Component::BOTH {
            let law = &self.sojourn[c.index()];
            for i in 0..d {
                let f0 = law.cdf(i, 0);
                if f0 != T::zero() {
                    violations.push(Violation::CdfStartNotZero {
                        component: c,
                        state: i,
                        value: f0.to_f64().unwrap_or(f64::NAN),
                    });
                }
                for k in 1..=self.kmax {
                    if law.cdf(i, k) < law.cdf(i, k - 1) {
                        violations.push(Violation::CdfNotMonotone {
                            component: c,
                            state: i,
                            k,
                        });
                    }
                }
                let terminal = law.cdf(i, self.kmax);
                if (terminal - T::one()).abs() > term_tol {
                    violations.push(Violation::CdfTerminalNotOne {
                        component: c,
                        state: i,
                        value: terminal.to_f64().unwrap_or(f64::NAN),
                    });
                }
            }
        }

        let absorbing = [
            self.is_absorbing(Component::One),
            self.is_absorbing(Component::Two),
        ];
        ValidationReport {
            violations,
            absorbing,
        }
    }

    /// True when every Down state of the component keeps all its one-step
    /// mass on itself, whatever the other component's state.
    pub fn is_absorbing(&self, c: Component) -> bool {
        let tol: T = real(ABSORBING_TOL);
        let law = &self.trans[c.index()];
        self.states.down(c).iter().all(|&i| {
            (0..self.d()).all(|i_other| (law.prob(i, i_other, i) - T::one()).abs() <= tol)
        })
    }

    pub fn d(&self) -> usize {
        self.states.len()
    }

    pub fn kmax(&self) -> usize {
        self.kmax
    }

    pub fn states(&self) -> &StateSpace {
        &self.states
    }

    pub fn trans(&self, c: Component) -> &MarginalTransitionLaw<T> {
        &self.trans[c.index()]
    }

    pub fn sojourn(&self, c: Component) -> &SojournLaw<T> {
        &self.sojourn[c.index()]
    }

    /// Hash of every parameter, used to tie derived tables to their model.
    pub fn fingerprint(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.states.labels.hash(&mut h);
        self.states.up.hash(&mut h);
        self.states.down.hash(&mut h);
        self.kmax.hash(&mut h);
        for law in &self.trans {
            for p in &law.probs {
                p.to_f64().unwrap_or(f64::NAN).to_bits().hash(&mut h);
            }
        }
        for law in &self.sojourn {
            for p in &law.cdf_table {
                p.to_f64().unwrap_or(f64::NAN).to_bits().hash(&mut h);
            }
        }
        h.finish()
    }

    /// Exports back to the file representation (probabilities as `f64`).
    pub fn to_file(&self) -> ModelFile {
        let d = self.d();
        let names = |idx: &[usize]| {
            idx.iter()
                .map(|&i| self.states.label(i).to_string())
                .collect::<Vec<_>>()
        };
        let tensor = |law: &MarginalTransitionLaw<T>| {
            (0..d)
                .map(|i| {
                    (0..d)
                        .map(|io| {
                            (0..d)
                                .map(|j| law.prob(i, io, j).to_f64().unwrap())
                                .collect()
                        })
                        .collect()
                })
                .collect()
        };
        let table = |law: &SojournLaw<T>| {
            (0..d)
                .map(|i| (0..=self.kmax).map(|k| law.cdf(i, k).to_f64().unwrap()).collect())
                .collect()
        };
        ModelFile {
            states: self.states.labels.clone(),
            up1: names(self.states.up(Component::One)),
            down1: names(self.states.down(Component::One)),
            up2: names(self.states.up(Component::Two)),
            down2: names(self.states.down(Component::Two)),
            kmax: self.kmax,
            p1: tensor(&self.trans[0]),
            p2: tensor(&self.trans[1]),
            f1: table(&self.sojourn[0]),
            f2: table(&self.sojourn[1]),
        }
    }
}

fn flatten_trans<T: Real>(
    component: Component,
    d: usize,
    p: Vec<Vec<Vec<T>>>,
) -> Result<MarginalTransitionLaw<T>, ModelError> {
    if p.len() != d || p.iter().any(|m| m.len() != d || m.iter().any(|r| r.len() != d)) {
        return Err(ModelError::Dimension(format!(
            "p{} must be a {d}x{d}x{d} tensor",
            component
        )));
    }
    let probs = p.into_iter().flatten().flatten().collect();
    Ok(MarginalTransitionLaw {
        component,
        d,
        probs,
    })
}

fn flatten_sojourn<T: Real>(
    component: Component,
    d: usize,
    kmax: usize,
    f: Vec<Vec<T>>,
) -> Result<SojournLaw<T>, ModelError> {
    if f.len() != d || f.iter().any(|r| r.len() != kmax + 1) {
        return Err(ModelError::Dimension(format!(
            "f{} must be a {d}x{} table (k = 0..=kmax)",
            component,
            kmax + 1
        )));
    }
    let cdf_table = f.into_iter().flatten().collect();
    Ok(SojournLaw {
        component,
        d,
        kmax,
        cdf_table,
    })
}

/// Loads, parses, and validates a model file (`f64` probabilities).
pub fn load_model(path: impl AsRef<Path>) -> Result<BivariateModel<f64>, ModelError> {
    BivariateModel::load(path)
}
