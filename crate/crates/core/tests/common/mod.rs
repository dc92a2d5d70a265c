//! Shared test fixtures: seeded random model generators, the direct
//! (unmemoized) recursive evaluator used as the solver oracle, and raw
//! closed-form helpers computed straight from the model tables.
#![allow(dead_code)]

use bismc::model::{BivariateModel, Component, InitialCondition};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Model64 = BivariateModel<f64>;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random stochastic row (normalized positive draws).
fn random_row(rng: &mut ChaCha8Rng, d: usize) -> Vec<f64> {
    let mut row: Vec<f64> = (0..d).map(|_| -rng.random::<f64>().max(1e-12).ln()).collect();
    let total: f64 = row.iter().sum();
    for x in &mut row {
        *x /= total;
    }
    row
}

/// Random proper cdf on 1..=kmax with strictly positive increments, so every
/// backward below kmax is admissible.
fn random_cdf(rng: &mut ChaCha8Rng, kmax: usize) -> Vec<f64> {
    let incr: Vec<f64> = (0..kmax)
        .map(|_| 0.05 + -rng.random::<f64>().max(1e-12).ln())
        .collect();
    let total: f64 = incr.iter().sum();
    let mut f = vec![0.0; kmax + 1];
    let mut acc = 0.0;
    for k in 1..=kmax {
        acc += incr[k - 1] / total;
        f[k] = acc.min(1.0);
    }
    f[kmax] = 1.0;
    f
}

/// Point-mass-at-1 cdf, the convention for absorbing states.
pub fn unit_sojourn_cdf(kmax: usize) -> Vec<f64> {
    let mut f = vec![1.0; kmax + 1];
    f[0] = 0.0;
    f
}

pub fn geometric_cdf(kmax: usize, p: f64) -> Vec<f64> {
    let mut f: Vec<f64> = (0..=kmax)
        .map(|k| 1.0 - (1.0 - p).powi(k as i32))
        .collect();
    f[kmax] = 1.0;
    f
}

#[derive(Debug, Clone, Copy)]
pub struct GenOpts {
    /// Force every Down state to keep all mass on itself.
    pub absorbing: bool,
    /// Make each component's transition law independent of the other
    /// component's state.
    pub decoupled: bool,
    /// Give absorbing states the point-mass-at-1 sojourn convention.
    pub unit_down_sojourn: bool,
}

impl GenOpts {
    pub fn general() -> Self {
        Self {
            absorbing: false,
            decoupled: false,
            unit_down_sojourn: false,
        }
    }

    pub fn absorbing() -> Self {
        Self {
            absorbing: true,
            decoupled: false,
            unit_down_sojourn: true,
        }
    }

    pub fn decoupled() -> Self {
        Self {
            absorbing: true,
            decoupled: true,
            unit_down_sojourn: true,
        }
    }
}

/// Seeded random valid model. The last state is Down for both components.
pub fn random_model(rng: &mut ChaCha8Rng, d: usize, kmax: usize, opts: GenOpts) -> Model64 {
    let labels: Vec<String> = (0..d).map(|i| format!("S{i}")).collect();
    let up: Vec<usize> = (0..d - 1).collect();

    let mut build_p = |_c: usize| -> Vec<Vec<Vec<f64>>> {
        let mut p = vec![vec![vec![0.0; d]; d]; d];
        for i_own in 0..d {
            let shared = random_row(rng, d);
            for i_other in 0..d {
                let row = if opts.decoupled {
                    shared.clone()
                } else {
                    random_row(rng, d)
                };
                p[i_own][i_other] = if opts.absorbing && i_own == d - 1 {
                    let mut e = vec![0.0; d];
                    e[i_own] = 1.0;
                    e
                } else {
                    row
                };
            }
        }
        p
    };
    let p1 = build_p(0);
    let p2 = build_p(1);

    let mut build_f = || -> Vec<Vec<f64>> {
        (0..d)
            .map(|i| {
                if opts.unit_down_sojourn && i == d - 1 {
                    unit_sojourn_cdf(kmax)
                } else {
                    random_cdf(rng, kmax)
                }
            })
            .collect()
    };
    let f1 = build_f();
    let f2 = build_f();

    BivariateModel::from_parts(labels, up.clone(), up, kmax, p1, p2, f1, f2).expect("valid model")
}

/// Absorbing model where a Down partner raises the own default probability.
pub fn contagion_model(rng: &mut ChaCha8Rng, d: usize, kmax: usize, boost: f64) -> Model64 {
    let base = random_model(rng, d, kmax, GenOpts::absorbing());
    let file = base.to_file();
    let mut p1 = file.p1.clone();
    let mut p2 = file.p2.clone();
    let down = d - 1;
    for p in [&mut p1, &mut p2] {
        for i_own in 0..d - 1 {
            // Partner in Down: shift extra mass toward the own Down state.
            let row = &mut p[i_own][down];
            let shift: f64 = row[..down].iter().map(|x| x * boost).sum();
            for x in row[..down].iter_mut() {
                *x *= 1.0 - boost;
            }
            row[down] += shift;
        }
    }
    BivariateModel::from_parts(
        file.states,
        (0..d - 1).collect(),
        (0..d - 1).collect(),
        kmax,
        p1,
        p2,
        file.f1,
        file.f2,
    )
    .expect("contagion model stays valid")
}

/// Admissible initial conditions with backwards up to `max_v`.
pub fn admissible_inits(model: &Model64, max_v: usize) -> Vec<InitialCondition> {
    let d = model.d();
    let mut out = Vec::new();
    for i1 in 0..d {
        for i2 in 0..d {
            for v1 in 0..=max_v {
                if model.sojourn(Component::One).cdf(i1, v1) >= 1.0 {
                    continue;
                }
                for v2 in 0..=max_v {
                    if model.sojourn(Component::Two).cdf(i2, v2) >= 1.0 {
                        continue;
                    }
                    out.push(InitialCondition::new(i1, i2, v1, v2));
                }
            }
        }
    }
    out
}

/// Age-conditioned one-step jump probability computed raw from the model
/// tables: `(F(v+k) - F(v+k-1)) / (1 - F(v)) * p`.
pub fn raw_backward_jump(
    model: &Model64,
    c: Component,
    i_own: usize,
    i_other: usize,
    j: usize,
    v: usize,
    k: usize,
) -> f64 {
    let f = model.sojourn(c);
    let denom = 1.0 - f.cdf(i_own, v);
    assert!(denom > 0.0, "degenerate backward in oracle");
    if k == 0 {
        return 0.0;
    }
    let mass = f.cdf(i_own, v + k) - f.cdf(i_own, v + k - 1);
    model.trans(c).prob(i_own, i_other, j) * mass / denom
}

/// Residual survival ratio `(1 - F(k+v)) / (1 - F(v))`.
pub fn raw_no_jump(model: &Model64, c: Component, i: usize, v: usize, k: usize) -> f64 {
    let f = model.sojourn(c);
    let denom = 1.0 - f.cdf(i, v);
    assert!(denom > 0.0, "degenerate backward in oracle");
    (1.0 - f.cdf(i, v + k)) / denom
}

/// Direct, unmemoized recursive evaluation of the coupled system. The
/// full-horizon term of the first-jump decomposition is resolved with the
/// total-probability identity (the partner's location integrates out), which
/// is also what makes the recursion terminate.
pub fn naive_prob(
    model: &Model64,
    c: Component,
    init: InitialCondition,
    target: usize,
    u: usize,
    k: usize,
) -> f64 {
    let d = model.d();
    let o = c.index();
    let (i_own, i_other, v_own, v_other) = if o == 0 {
        (init.i1, init.i2, init.v1, init.v2)
    } else {
        (init.i2, init.i1, init.v2, init.v1)
    };
    if k == 0 {
        return if target == i_own && u == v_own { 1.0 } else { 0.0 };
    }
    let mut acc = 0.0;
    if u == k + v_own && target == i_own {
        acc += raw_no_jump(model, c, i_own, v_own, k);
    }
    if u == 0 {
        acc += raw_backward_jump(model, c, i_own, i_other, target, v_own, k);
    }
    for tau in 1..k {
        for l1 in 0..d {
            for l2 in 0..d {
                let (l_own, l_other) = if o == 0 { (l1, l2) } else { (l2, l1) };
                let q = raw_backward_jump(model, c, i_own, i_other, l_own, v_own, tau);
                if q == 0.0 {
                    continue;
                }
                for w in 0..=(tau + v_other) {
                    let factor = naive_prob(model, c.other(), init, l_other, w, tau);
                    if factor == 0.0 {
                        continue;
                    }
                    let sub_init = if o == 0 {
                        InitialCondition::new(l1, l2, 0, w)
                    } else {
                        InitialCondition::new(l1, l2, w, 0)
                    };
                    acc += naive_prob(model, c, sub_init, target, u, k - tau) * factor * q;
                }
            }
        }
    }
    acc
}

/// Marginal of [`naive_prob`] over the feasible final backwards.
pub fn naive_state_prob(
    model: &Model64,
    c: Component,
    init: InitialCondition,
    target: usize,
    k: usize,
) -> f64 {
    let v_own = init.backward(c);
    (0..k)
        .chain(std::iter::once(k + v_own))
        .map(|u| naive_prob(model, c, init, target, u, k))
        .sum()
}
