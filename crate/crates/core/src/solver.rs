//! Coupled transition-probability solver with backward recurrence times.
//!
//! For one component and a joint initial condition, the probability of
//! occupying a target state with a given final backward at horizon `k` splits
//! over the component's first-jump time `tau`:
//!
//!   * no jump up to `k`: survival-ratio mass on the diagonal, final backward
//!     `k + v_own`;
//!   * first jump exactly at `k`: the age-conditioned one-step kernel lands in
//!     the target with final backward 0 (the other component's location at
//!     that instant integrates out to 1);
//!   * first jump at `tau < k`: restart from a fresh initial condition whose
//!     own backward is 0 and whose partner backward `w` is distributed per the
//!     partner's own transition probabilities at `tau`.
//!
//! Every sub-problem reached after the first jump has a backward pair with at
//! least one zero, so the table is organized as four families indexed by
//! (observed component, component that just jumped) over (state pair, partner
//! backward, horizon), plus one pair of root tables per requested initial
//! condition. Rows of horizon `m` only read rows of horizons `< m`, which
//! makes a forward, layer-parallel fill possible.

use std::collections::HashMap;

use rayon::prelude::*;
use thiserror::Error;

use crate::kernel::{ensure_admissible, KernelError, KernelTables};
use crate::model::{BivariateModel, Component, InitialCondition};
use crate::real::{axpy_compensated, NeumaierSum, Real};

/// One point of the transition law: start at `init`, observe `component` in
/// state `target` with backward `final_backward` after `horizon` periods.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TransitionQuery {
    pub component: Component,
    pub init: InitialCondition,
    pub target: usize,
    pub final_backward: usize,
    pub horizon: usize,
}

/// Hard caps on table construction.
#[derive(Debug, Clone, Copy)]
pub struct SolverLimits {
    /// Largest allowed root horizon.
    pub max_horizon: usize,
    /// Largest allowed `horizon + initial backward` extent.
    pub max_span: usize,
    /// Cap on the estimated table allocation.
    pub max_bytes: usize,
}

impl Default for SolverLimits {
    fn default() -> Self {
        Self {
            max_horizon: 512,
            max_span: 576,
            max_bytes: 4 << 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error(transparent)]
    Degenerate(#[from] KernelError),
    #[error("horizon overflow: requested {requested}, table bound {max}")]
    HorizonOverflow { requested: usize, max: usize },
    #[error("table would need ~{bytes} bytes (cap {max})")]
    TableTooLarge { bytes: usize, max: usize },
    #[error("initial condition ({i1},{i2}) with backwards ({v1},{v2}) not covered by this table")]
    InitNotCovered {
        i1: usize,
        i2: usize,
        v1: usize,
        v2: usize,
    },
}

/// Row family: observed component `o`, component `c` whose jump produced the
/// initial condition (backward 0 on `c`, backward `w` on the other).
fn fam_idx(observed: usize, fresh: usize) -> usize {
    observed * 2 + fresh
}

type GroupRows<T> = Vec<Box<[T]>>;

struct FamilyStore<T> {
    /// `groups[(a*d + b)*(span+1) + w]`; `None` marks an impossible
    /// conditioning (the aged state's sojourn cdf is already 1 at `w`).
    groups: Vec<Option<GroupRows<T>>>,
}

struct RootTables<T> {
    init: InitialCondition,
    rows: [GroupRows<T>; 2],
}

/// Memoized transition probabilities of both components up to a fixed
/// horizon: the four post-jump families plus the requested root conditions.
/// Read-only after construction; lookups are `O(1)`.
pub struct TransitionTable<T> {
    model: BivariateModel<T>,
    kernels: [KernelTables<T>; 2],
    d: usize,
    horizon: usize,
    span: usize,
    families: [FamilyStore<T>; 4],
    roots: Vec<RootTables<T>>,
    root_index: HashMap<(usize, usize, usize, usize), usize>,
    fingerprint: u64,
}

/// Fills the transition table forward in the horizon for every requested
/// initial condition; subsequent lookups are table reads.
pub fn solve_grid<T: Real>(
    model: &BivariateModel<T>,
    inits: &[InitialCondition],
    horizon: usize,
) -> Result<TransitionTable<T>, SolveError> {
    TransitionTable::build(model, inits, horizon, SolverLimits::default())
}

/// One-shot evaluation of a single query; builds a minimal table internally.
/// Prefer [`solve_grid`] when issuing many queries against one model.
pub fn transition_prob<T: Real>(
    model: &BivariateModel<T>,
    query: &TransitionQuery,
) -> Result<T, SolveError> {
    let table = TransitionTable::build(
        model,
        std::slice::from_ref(&query.init),
        query.horizon,
        SolverLimits::default(),
    )?;
    table.prob(query)
}

/// One-shot `sum over final backwards` of [`transition_prob`].
pub fn state_prob<T: Real>(
    model: &BivariateModel<T>,
    component: Component,
    init: InitialCondition,
    target: usize,
    horizon: usize,
) -> Result<T, SolveError> {
    let table = TransitionTable::build(
        model,
        std::slice::from_ref(&init),
        horizon,
        SolverLimits::default(),
    )?;
    table.state_prob(component, init, target, horizon)
}

impl<T: Real> TransitionTable<T> {
    pub fn build(
        model: &BivariateModel<T>,
        inits: &[InitialCondition],
        horizon: usize,
        limits: SolverLimits,
    ) -> Result<Self, SolveError> {
        let d = model.d();
        for init in inits {
            debug_assert!(init.i1 < d && init.i2 < d, "state index out of range");
            ensure_admissible(model, init)?;
        }
        let max_v = inits.iter().map(|i| i.v1.max(i.v2)).max().unwrap_or(0);
        let span = horizon + max_v;
        if horizon > limits.max_horizon || span > limits.max_span {
            return Err(SolveError::HorizonOverflow {
                requested: span,
                max: limits.max_span.min(limits.max_horizon),
            });
        }
        let row_width = (span + 1) * d;
        let groups_per_fam = d * d * (span + 1);
        let est_rows = d * d * (span + 1) * (span + 2) / 2;
        let est_bytes = 4 * est_rows * row_width * std::mem::size_of::<T>();
        if est_bytes > limits.max_bytes {
            return Err(SolveError::TableTooLarge {
                bytes: est_bytes,
                max: limits.max_bytes,
            });
        }

        let kernels = [
            KernelTables::build(model, Component::One),
            KernelTables::build(model, Component::Two),
        ];

        // Group (a, b, w) of family (o, c) is computable iff the aged
        // component (the one that did not just jump) can actually have age w.
        let degenerate = |fresh: usize, a: usize, b: usize, w: usize| -> bool {
            let aged = 1 - fresh;
            let state = if aged == 0 { a } else { b };
            kernels[aged].sojourn_cdf(state, w) >= T::one()
        };

        let mut families: [FamilyStore<T>; 4] = std::array::from_fn(|f| {
            let fresh = f % 2;
            let groups = (0..groups_per_fam)
                .map(|g| {
                    let w = g % (span + 1);
                    let ab = g / (span + 1);
                    let (a, b) = (ab / d, ab % d);
                    if degenerate(fresh, a, b, w) {
                        None
                    } else {
                        Some(Vec::with_capacity(span + 1 - w))
                    }
                })
                .collect();
            FamilyStore { groups }
        });

        let mut roots: Vec<RootTables<T>> = Vec::new();
        let mut root_index = HashMap::new();
        for &init in inits {
            let key = (init.i1, init.i2, init.v1, init.v2);
            if root_index.contains_key(&key) {
                continue;
            }
            root_index.insert(key, roots.len());
            roots.push(RootTables {
                init,
                rows: [Vec::with_capacity(horizon + 1), Vec::with_capacity(horizon + 1)],
            });
        }

        for m in 0..=span {
            // Family rows of this layer, in parallel: they only read layers < m.
            let tasks: Vec<(usize, usize)> = (0..4)
                .flat_map(|f| {
                    let fams = &families;
                    (0..groups_per_fam).filter_map(move |g| {
                        let w = g % (span + 1);
                        (w + m <= span && fams[f].groups[g].is_some()).then_some((f, g))
                    })
                })
                .collect();
            let new_rows: Vec<(usize, usize, Box<[T]>)> = tasks
                .into_par_iter()
                .map(|(f, g)| {
                    let row = Self::family_row(d, span, &kernels, &families, f, g, m);
                    (f, g, row)
                })
                .collect();
            for (f, g, row) in new_rows {
                families[f].groups[g].as_mut().expect("valid group").push(row);
            }

            if m <= horizon {
                let kernels_ref = &kernels;
                let families_ref = &families;
                let new_root_rows: Vec<(usize, usize, Box<[T]>)> = roots
                    .par_iter()
                    .enumerate()
                    .flat_map_iter(|(r, root)| {
                        [0usize, 1].into_iter().map(move |o| {
                            let row =
                                Self::root_row(d, span, kernels_ref, families_ref, root, o, m);
                            (r, o, row)
                        })
                    })
                    .collect();
                for (r, o, row) in new_root_rows {
                    roots[r].rows[o].push(row);
                }
            }
        }

        Ok(Self {
            model: model.clone(),
            kernels,
            d,
            horizon,
            span,
            families,
            roots,
            root_index,
            fingerprint: model.fingerprint(),
        })
    }

    fn group_of(d: usize, span: usize, a: usize, b: usize, w: usize) -> usize {
        (a * d + b) * (span + 1) + w
    }

    fn fam_row_ref<'x>(
        families: &'x [FamilyStore<T>; 4],
        f: usize,
        g: usize,
        m: usize,
    ) -> Option<&'x [T]> {
        families[f].groups[g]
            .as_ref()
            .and_then(|rows| rows.get(m))
            .map(|r| &r[..])
    }

    /// Computes one family row: family `f = (o, c)`, group `g = (a, b, w)`,
    /// horizon `m`.
    fn family_row(
        d: usize,
        span: usize,
        kernels: &[KernelTables<T>; 2],
        families: &[FamilyStore<T>; 4],
        f: usize,
        g: usize,
        m: usize,
    ) -> Box<[T]> {
        let (o, c) = (f / 2, f % 2);
        let w = g % (span + 1);
        let ab = g / (span + 1);
        let (a, b) = (ab / d, ab % d);
        let (i_own, i_other) = if o == 0 { (a, b) } else { (b, a) };
        let (v_own, v_other) = if o == c { (0, w) } else { (w, 0) };

        let partner = fam_idx(1 - o, c);
        let sub_family = fam_idx(o, o);
        fill_row(
            d,
            span,
            &kernels[o],
            i_own,
            i_other,
            v_own,
            v_other,
            m,
            |tau| Self::fam_row_ref(families, partner, g, tau),
            |sub_m, l_own, l_other, wp| {
                let (l1, l2) = if o == 0 { (l_own, l_other) } else { (l_other, l_own) };
                Self::fam_row_ref(families, sub_family, Self::group_of(d, span, l1, l2, wp), sub_m)
            },
        )
    }

    fn root_row(
        d: usize,
        span: usize,
        kernels: &[KernelTables<T>; 2],
        families: &[FamilyStore<T>; 4],
        root: &RootTables<T>,
        o: usize,
        m: usize,
    ) -> Box<[T]> {
        let init = root.init;
        let (i_own, i_other, v_own, v_other) = if o == 0 {
            (init.i1, init.i2, init.v1, init.v2)
        } else {
            (init.i2, init.i1, init.v2, init.v1)
        };
        let sub_family = fam_idx(o, o);
        fill_row(
            d,
            span,
            &kernels[o],
            i_own,
            i_other,
            v_own,
            v_other,
            m,
            |tau| root.rows[1 - o].get(tau).map(|r| &r[..]),
            |sub_m, l_own, l_other, wp| {
                let (l1, l2) = if o == 0 { (l_own, l_other) } else { (l_other, l_own) };
                Self::fam_row_ref(families, sub_family, Self::group_of(d, span, l1, l2, wp), sub_m)
            },
        )
    }

    pub fn model(&self) -> &BivariateModel<T> {
        &self.model
    }

    pub fn kernels(&self, c: Component) -> &KernelTables<T> {
        &self.kernels[c.index()]
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// Largest `horizon + backward` extent the table covers.
    pub fn span(&self) -> usize {
        self.span
    }

    /// Hash of the model this table was computed from.
    pub fn fingerprint(&self) -> u64 {
        self.fingerprint
    }

    /// Final backwards that can carry mass at the given horizon: everything
    /// below the horizon plus the no-jump value `horizon + v_own`.
    pub fn feasible_final_backwards(
        component: Component,
        init: InitialCondition,
        horizon: usize,
    ) -> impl Iterator<Item = usize> {
        (0..horizon).chain(std::iter::once(horizon + init.backward(component)))
    }

    /// Locates the value row for (component, init, horizon) together with the
    /// component's own initial backward.
    fn row(
        &self,
        component: Component,
        init: InitialCondition,
        horizon: usize,
    ) -> Result<(&[T], usize), SolveError> {
        let o = component.index();
        let v_own = init.backward(component);
        ensure_admissible(&self.model, &init)?;
        if let Some(&r) = self.root_index.get(&(init.i1, init.i2, init.v1, init.v2)) {
            if horizon > self.horizon {
                return Err(SolveError::HorizonOverflow {
                    requested: horizon,
                    max: self.horizon,
                });
            }
            return Ok((&self.roots[r].rows[o][horizon], v_own));
        }
        let (fresh, w) = if init.v1 == 0 {
            (0, init.v2)
        } else if init.v2 == 0 {
            (1, init.v1)
        } else {
            return Err(SolveError::InitNotCovered {
                i1: init.i1,
                i2: init.i2,
                v1: init.v1,
                v2: init.v2,
            });
        };
        if w + horizon > self.span {
            return Err(SolveError::HorizonOverflow {
                requested: w + horizon,
                max: self.span,
            });
        }
        let g = Self::group_of(self.d, self.span, init.i1, init.i2, w);
        match Self::fam_row_ref(&self.families, fam_idx(o, fresh), g, horizon) {
            Some(row) => Ok((row, v_own)),
            // Admissibility above already rejected degenerate groups.
            None => unreachable!("admissible init maps to a computed group"),
        }
    }

    /// Transition probability of one query. Zero whenever the final backward
    /// is outside the feasible set.
    pub fn prob(&self, query: &TransitionQuery) -> Result<T, SolveError> {
        assert!(query.target < self.d, "target state out of range");
        let (row, v_own) = self.row(query.component, query.init, query.horizon)?;
        let u = query.final_backward;
        let k = query.horizon;
        let feasible = u < k || u == k + v_own;
        if !feasible || u > self.span {
            return Ok(T::zero());
        }
        Ok(row[u * self.d + query.target])
    }

    /// Probability of occupying `target` at `horizon`, summed over the final
    /// backward (the quantity reliabilities are built from).
    pub fn state_prob(
        &self,
        component: Component,
        init: InitialCondition,
        target: usize,
        horizon: usize,
    ) -> Result<T, SolveError> {
        let (row, v_own) = self.row(component, init, horizon)?;
        let mut acc = NeumaierSum::new();
        for u in 0..horizon {
            acc.add(row[u * self.d + target]);
        }
        acc.add(row[(horizon + v_own) * self.d + target]);
        Ok(acc.total())
    }

    /// Full state distribution at `horizon` (summed over final backwards).
    pub fn state_distribution(
        &self,
        component: Component,
        init: InitialCondition,
        horizon: usize,
    ) -> Result<Vec<T>, SolveError> {
        let (row, v_own) = self.row(component, init, horizon)?;
        let mut out = vec![NeumaierSum::new(); self.d];
        for u in (0..horizon).chain(std::iter::once(horizon + v_own)) {
            for (j, acc) in out.iter_mut().enumerate() {
                acc.add(row[u * self.d + j]);
            }
        }
        Ok(out.into_iter().map(|a| a.total()).collect())
    }
}

/// Shared row fill for family and root rows. `factor_row(tau)` returns the
/// partner component's value row at horizon `tau` for the same initial
/// condition; `sub_row(m - tau, l_own, l_other, w')` returns the fresh
/// restart row. Both return `None` only for structurally-zero contributions.
#[allow(clippy::too_many_arguments)]
fn fill_row<'a, T: Real>(
    d: usize,
    span: usize,
    kern: &KernelTables<T>,
    i_own: usize,
    i_other: usize,
    v_own: usize,
    v_other: usize,
    m: usize,
    factor_row: impl Fn(usize) -> Option<&'a [T]>,
    sub_row: impl Fn(usize, usize, usize, usize) -> Option<&'a [T]>,
) -> Box<[T]> {
    let width = (span + 1) * d;
    let mut row = vec![T::zero(); width].into_boxed_slice();
    let denom = T::one() - kern.sojourn_cdf(i_own, v_own);
    debug_assert!(denom > T::zero(), "degenerate groups are never filled");

    // No jump through m: survival mass stays on the diagonal.
    let surv = T::one() - kern.sojourn_cdf(i_own, m + v_own);
    if surv > T::zero() {
        row[(m + v_own) * d + i_own] = surv / denom;
    }
    if m == 0 {
        return row;
    }

    // First jump exactly at m: final backward 0; the partner's location at m
    // integrates out (its transition probabilities sum to one).
    let mass = kern.sojourn_mass(i_own, v_own + m);
    if mass > T::zero() {
        let scale = mass / denom;
        for j in 0..d {
            row[j] += kern.trans_prob(i_own, i_other, j) * scale;
        }
    }
    if m == 1 {
        return row;
    }

    // First jump at tau < m: weight the fresh restart rows by the partner's
    // distribution over (state, age) at tau and the own first-jump law.
    let mut comp = vec![T::zero(); m * d];
    let mut own_jump = vec![T::zero(); d];
    for tau in 1..m {
        let mass = kern.sojourn_mass(i_own, v_own + tau);
        if mass <= T::zero() {
            continue;
        }
        let scale = mass / denom;
        for (l, q) in own_jump.iter_mut().enumerate() {
            *q = kern.trans_prob(i_own, i_other, l) * scale;
        }
        let Some(factor) = factor_row(tau) else {
            continue;
        };
        let sub_len = (m - tau + 1) * d;
        for wp in (0..tau).chain(std::iter::once(tau + v_other)) {
            let base = wp * d;
            for l_other in 0..d {
                let fval = factor[base + l_other];
                if fval == T::zero() {
                    continue;
                }
                for (l_own, &q) in own_jump.iter().enumerate() {
                    let cw = q * fval;
                    if cw == T::zero() {
                        continue;
                    }
                    let Some(sub) = sub_row(m - tau, l_own, l_other, wp) else {
                        continue;
                    };
                    axpy_compensated(
                        &mut row[..sub_len],
                        &mut comp[..sub_len],
                        cw,
                        &sub[..sub_len],
                    );
                }
            }
        }
    }
    row
}
