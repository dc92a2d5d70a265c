//! Per-component semi-Markov kernel machinery.
//!
//! For a component the cumulative kernel factorizes as
//! `Q[i_own][i_other][j](k) = p[i_own][i_other][j] * F[i_own](k)`; the one-step
//! density is its difference in `k`, and the unconditional sojourn cdf `H`
//! coincides with `F` because sojourn times do not depend on the landing
//! state. [`KernelTables::backward_jump_prob`] conditions the density on the
//! elapsed time in the current state:
//!
//! ```text
//! q(v, k) = (F(k+v) - F(k+v-1)) / (1 - H(v)) * p
//! ```
//!
//! which only involves the component's own sojourn law; the other component
//! enters through the state pair indexing `p` alone.

use thiserror::Error;

use crate::model::{BivariateModel, Component, InitialCondition};
use crate::real::Real;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    /// The conditioning event "sojourn exceeds the backward" has zero
    /// probability: `H(v) = 1`.
    #[error("component {component}: backward {backward} in state {state} has H(v) = 1 (impossible initial condition)")]
    DegenerateBackward {
        component: Component,
        state: usize,
        backward: usize,
    },
}

/// Kernel tables of one component: cumulative kernel, one-step jump density,
/// and the (shared) sojourn cdf.
#[derive(Debug, Clone)]
pub struct KernelTables<T> {
    component: Component,
    d: usize,
    kmax: usize,
    /// `p[i_own][i_other][j]`, copied out of the model.
    probs: Vec<T>,
    /// Cumulative kernel, `[i_own][i_other][j][k]` for `k = 0..=kmax`.
    cumulative: Vec<T>,
    /// Point-mass kernel at exactly `k`, same layout; zero at `k = 0`.
    density: Vec<T>,
    /// Sojourn cdf per state, `[i][k]`.
    sojourn: Vec<T>,
}

impl<T: Real> KernelTables<T> {
    pub fn build(model: &BivariateModel<T>, component: Component) -> Self {
        let d = model.d();
        let kmax = model.kmax();
        let trans = model.trans(component);
        let soj = model.sojourn(component);
        let width = kmax + 1;

        let mut probs = Vec::with_capacity(d * d * d);
        let mut cumulative = Vec::with_capacity(d * d * d * width);
        let mut density = Vec::with_capacity(d * d * d * width);
        for i_own in 0..d {
            for i_other in 0..d {
                for j in 0..d {
                    let p = trans.prob(i_own, i_other, j);
                    probs.push(p);
                    for k in 0..width {
                        cumulative.push(p * soj.cdf(i_own, k));
                        density.push(p * soj.mass(i_own, k));
                    }
                }
            }
        }
        let mut sojourn = Vec::with_capacity(d * width);
        for i in 0..d {
            for k in 0..width {
                sojourn.push(soj.cdf(i, k));
            }
        }
        Self {
            component,
            d,
            kmax,
            probs,
            cumulative,
            density,
            sojourn,
        }
    }

    pub fn component(&self) -> Component {
        self.component
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn kmax(&self) -> usize {
        self.kmax
    }

    fn cell(&self, i_own: usize, i_other: usize, j: usize) -> usize {
        ((i_own * self.d + i_other) * self.d + j) * (self.kmax + 1)
    }

    pub fn trans_prob(&self, i_own: usize, i_other: usize, j: usize) -> T {
        self.probs[(i_own * self.d + i_other) * self.d + j]
    }

    /// `Q(k)`: probability of jumping to `j` with sojourn `<= k`.
    pub fn cumulative(&self, i_own: usize, i_other: usize, j: usize, k: usize) -> T {
        if k > self.kmax {
            self.trans_prob(i_own, i_other, j)
        } else {
            self.cumulative[self.cell(i_own, i_other, j) + k]
        }
    }

    /// `q(k) = Q(k) - Q(k-1)`: probability of jumping to `j` exactly at `k`.
    pub fn density(&self, i_own: usize, i_other: usize, j: usize, k: usize) -> T {
        if k == 0 || k > self.kmax {
            T::zero()
        } else {
            self.density[self.cell(i_own, i_other, j) + k]
        }
    }

    /// Unconditional sojourn cdf `H(k)`; equals the model's `F` by the
    /// independence of sojourn times from the landing state.
    pub fn sojourn_cdf(&self, i: usize, k: usize) -> T {
        if k > self.kmax {
            T::one()
        } else {
            self.sojourn[i * (self.kmax + 1) + k]
        }
    }

    /// Sojourn point mass `F(k) - F(k-1)`.
    pub fn sojourn_mass(&self, i: usize, k: usize) -> T {
        if k == 0 || k > self.kmax {
            T::zero()
        } else {
            self.sojourn_cdf(i, k) - self.sojourn_cdf(i, k - 1)
        }
    }

    /// One-step jump probability conditioned on a backward of `v` periods:
    /// the component jumps to `j` exactly `k` periods from now. Zero for
    /// `k = 0` and beyond the truncation horizon.
    pub fn backward_jump_prob(
        &self,
        i_own: usize,
        i_other: usize,
        j: usize,
        backward: usize,
        elapsed: usize,
    ) -> Result<T, KernelError> {
        let denom = T::one() - self.sojourn_cdf(i_own, backward);
        if denom <= T::zero() {
            return Err(KernelError::DegenerateBackward {
                component: self.component,
                state: i_own,
                backward,
            });
        }
        if elapsed == 0 {
            return Ok(T::zero());
        }
        let mass = self.sojourn_mass(i_own, backward + elapsed);
        Ok(self.trans_prob(i_own, i_other, j) * mass / denom)
    }

    /// Probability that the residual sojourn exceeds `k` more periods given a
    /// backward of `v`: `(1 - H(k+v)) / (1 - H(v))`.
    pub fn no_jump_prob(&self, i_own: usize, backward: usize, k: usize) -> Result<T, KernelError> {
        let denom = T::one() - self.sojourn_cdf(i_own, backward);
        if denom <= T::zero() {
            return Err(KernelError::DegenerateBackward {
                component: self.component,
                state: i_own,
                backward,
            });
        }
        let surv = T::one() - self.sojourn_cdf(i_own, backward + k);
        Ok(surv / denom)
    }
}

/// Builds the kernel tables of one component of a validated model.
pub fn build_kernel<T: Real>(model: &BivariateModel<T>, component: Component) -> KernelTables<T> {
    KernelTables::build(model, component)
}

/// Checks that both conditioning events `sojourn > v` have positive
/// probability for the given initial condition.
pub fn ensure_admissible<T: Real>(
    model: &BivariateModel<T>,
    init: &InitialCondition,
) -> Result<(), KernelError> {
    for c in Component::BOTH {
        let state = init.state(c);
        let backward = init.backward(c);
        if model.sojourn(c).cdf(state, backward) >= T::one() {
            return Err(KernelError::DegenerateBackward {
                component: c,
                state,
                backward,
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::BivariateModel;

    fn geometric_cdf(kmax: usize) -> Vec<f64> {
        let mut f: Vec<f64> = (0..=kmax).map(|k| 1.0 - 0.5f64.powi(k as i32)).collect();
        f[kmax] = 1.0;
        f
    }

    /// 2-state model with p-row (1,0) from state 0 and geometric sojourns.
    fn deterministic_target_model() -> BivariateModel<f64> {
        let p = vec![
            vec![vec![1.0, 0.0], vec![1.0, 0.0]],
            vec![vec![0.0, 1.0], vec![0.0, 1.0]],
        ];
        let f = vec![geometric_cdf(20), geometric_cdf(20)];
        BivariateModel::from_parts(
            vec!["a".into(), "b".into()],
            vec![0],
            vec![0],
            20,
            p.clone(),
            p,
            f.clone(),
            f,
        )
        .unwrap()
    }

    #[test]
    fn density_matches_cdf_differences() {
        let model = deterministic_target_model();
        let kern = build_kernel(&model, Component::One);
        // Geometric(1/2): F(1) = 0.5, F(2) = 0.75.
        assert_eq!(kern.density(0, 1, 0, 1), 0.5);
        assert_eq!(kern.density(0, 1, 0, 2), 0.25);
        assert_eq!(kern.density(0, 1, 1, 1), 0.0);
        assert_eq!(kern.density(0, 0, 0, 0), 0.0);
    }

    #[test]
    fn density_total_mass_is_one() {
        let model = crate::model::tests::two_state_model();
        for c in Component::BOTH {
            let kern = build_kernel(&model, c);
            for i_own in 0..2 {
                for i_other in 0..2 {
                    let total: f64 = (0..2)
                        .flat_map(|j| (1..=kern.kmax()).map(move |k| (j, k)))
                        .map(|(j, k)| kern.density(i_own, i_other, j, k))
                        .sum();
                    assert!((total - 1.0).abs() < 1e-9, "total = {total}");
                }
            }
        }
    }

    #[test]
    fn point_mass_sojourn_forces_the_jump() {
        // Absorbing-style state with F(1) = 1: the jump happens at k = 1.
        let mut f = vec![0.0; 6];
        for k in 1..=5 {
            f[k] = 1.0;
        }
        let p = vec![
            vec![vec![1.0, 0.0], vec![1.0, 0.0]],
            vec![vec![0.0, 1.0], vec![0.0, 1.0]],
        ];
        let model = BivariateModel::from_parts(
            vec!["a".into(), "b".into()],
            vec![0],
            vec![0],
            5,
            p.clone(),
            p,
            vec![f.clone(), f.clone()],
            vec![f.clone(), f],
        )
        .unwrap();
        let kern = build_kernel(&model, Component::One);
        assert_eq!(kern.density(0, 0, 0, 1), 1.0);
        assert_eq!(kern.density(0, 0, 0, 2), 0.0);
        assert_eq!(kern.density(1, 0, 1, 1), 1.0);
    }

    #[test]
    fn backward_zero_recovers_the_density() {
        let model = crate::model::tests::two_state_model();
        let kern = build_kernel(&model, Component::Two);
        for i_own in 0..2 {
            for i_other in 0..2 {
                for j in 0..2 {
                    for k in 0..=6 {
                        let with_backward =
                            kern.backward_jump_prob(i_own, i_other, j, 0, k).unwrap();
                        assert_eq!(with_backward, kern.density(i_own, i_other, j, k));
                    }
                }
            }
        }
    }

    #[test]
    fn geometric_backward_is_memoryless() {
        let model = deterministic_target_model();
        let kern = build_kernel(&model, Component::One);
        // Valid while k + v stays strictly below the truncation cell.
        for v in 0..=10 {
            for k in 1..=(19 - v) {
                let aged = kern.backward_jump_prob(0, 1, 0, v, k).unwrap();
                let fresh = kern.backward_jump_prob(0, 1, 0, 0, k).unwrap();
                assert_eq!(aged, fresh, "v = {v}, k = {k}");
            }
        }
        // Example: q(v = 3, 1) = q(1) = 0.5 with p = 1.
        assert_eq!(kern.backward_jump_prob(0, 1, 0, 3, 1).unwrap(), 0.5);
    }

    #[test]
    fn deterministic_sojourn_with_backward() {
        // F = point mass at 2: F(1) = 0, F(2) = 1. With v = 1, k = 1 the jump
        // is forced: (F(2) - F(1)) / (1 - F(1)) = 1.
        let f = vec![vec![0.0, 0.0, 1.0], vec![0.0, 1.0, 1.0]];
        let p = vec![
            vec![vec![1.0, 0.0], vec![1.0, 0.0]],
            vec![vec![0.0, 1.0], vec![0.0, 1.0]],
        ];
        let model = BivariateModel::from_parts(
            vec!["a".into(), "b".into()],
            vec![0],
            vec![0],
            2,
            p.clone(),
            p,
            vec![f[0].clone(), f[1].clone()],
            vec![f[0].clone(), f[1].clone()],
        )
        .unwrap();
        let kern = build_kernel(&model, Component::One);
        assert_eq!(kern.backward_jump_prob(0, 0, 0, 1, 1).unwrap(), 1.0);
    }

    #[test]
    fn conditional_total_probability() {
        let model = crate::model::tests::two_state_model();
        let kern = build_kernel(&model, Component::One);
        for v in 0..5 {
            let mut total = 0.0;
            for j in 0..2 {
                for k in 1..=(kern.kmax() - v) {
                    total += kern.backward_jump_prob(0, 1, j, v, k).unwrap();
                }
            }
            assert!((total - 1.0).abs() < 1e-9, "v = {v}: total = {total}");
        }
    }

    #[test]
    fn saturated_backward_is_degenerate() {
        let model = crate::model::tests::two_state_model();
        let kern = build_kernel(&model, Component::One);
        assert!(matches!(
            kern.backward_jump_prob(0, 0, 0, 20, 1),
            Err(KernelError::DegenerateBackward { backward: 20, .. })
        ));
    }

    #[test]
    fn backward_kernel_ignores_other_components_sojourn_law() {
        // Two models identical except for the other component's F.
        let p = vec![
            vec![vec![0.7, 0.3], vec![0.2, 0.8]],
            vec![vec![0.4, 0.6], vec![0.9, 0.1]],
        ];
        let fa = geometric_cdf(10);
        let mut fb = vec![0.0; 11];
        for k in 1..=10 {
            fb[k] = (k as f64 / 10.0).min(1.0);
        }
        let m1 = BivariateModel::from_parts(
            vec!["x".into(), "y".into()],
            vec![0],
            vec![0],
            10,
            p.clone(),
            p.clone(),
            vec![fa.clone(), fa.clone()],
            vec![fa.clone(), fa.clone()],
        )
        .unwrap();
        let m2 = BivariateModel::from_parts(
            vec!["x".into(), "y".into()],
            vec![0],
            vec![0],
            10,
            p.clone(),
            p,
            vec![fa.clone(), fa],
            vec![fb.clone(), fb],
        )
        .unwrap();
        let k1 = build_kernel(&m1, Component::One);
        let k2 = build_kernel(&m2, Component::One);
        for v in 0..4 {
            for k in 1..=5 {
                assert_eq!(
                    k1.backward_jump_prob(0, 1, 1, v, k).unwrap(),
                    k2.backward_jump_prob(0, 1, 1, v, k).unwrap()
                );
            }
        }
    }
}
