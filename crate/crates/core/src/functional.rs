//! Increasing convex functionals `φ : Func → R ∪ {+∞}` and probes for their
//! effective domain, interior, directional derivatives and the translation
//! property.

use std::fmt;

use rand::Rng;

use crate::error::{usage, Error, Result};
use crate::ext_real::ExtReal;
use crate::sampling::{random_func, random_probability};
use crate::space::{Func, Measure, SpaceRef};

/// Weights within this distance of mass one count as probability measures
/// in the closed-form conjugates.
pub const MASS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum KindTag {
    Linear,
    Sup,
    Entropic,
    IndicatorP,
    WorstCase,
    Combinator,
}

impl fmt::Display for KindTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KindTag::Linear => "linear",
            KindTag::Sup => "sup",
            KindTag::Entropic => "entropic",
            KindTag::IndicatorP => "indicator_p",
            KindTag::WorstCase => "worst_case",
            KindTag::Combinator => "combinator",
        })
    }
}

#[derive(Debug, Clone)]
enum Repr {
    Linear(Measure),
    Sup,
    Entropic {
        reference: Measure,
        log_ref: Vec<f64>,
    },
    IndicatorP,
    WorstCase(Vec<(Measure, f64)>),
    Sum(Vec<Functional>),
    Max(Vec<Functional>),
    Scaled(f64, Box<Functional>),
}

/// An increasing convex functional on the functions of one [`Space`](crate::space::Space).
///
/// Monotonicity and convexity are properties of the catalog members, not
/// something the type enforces; [`count_monotonicity_violations`] and
/// [`count_convexity_violations`] look for counterexamples.
#[derive(Debug, Clone)]
pub struct Functional {
    space: SpaceRef,
    repr: Repr,
    /// `κ` with `φ(f + m) = φ(f) + κ m` for all `f, m`, when known.
    translation_slope: Option<f64>,
}

impl Functional {
    /// `s(f) = max_i f_i`.
    pub fn sup(space: &SpaceRef) -> Functional {
        Functional {
            space: space.clone(),
            repr: Repr::Sup,
            translation_slope: Some(1.0),
        }
    }

    /// `p(f) = 0` if `max f ≤ 0`, `+∞` otherwise.
    pub fn indicator_p(space: &SpaceRef) -> Functional {
        Functional {
            space: space.clone(),
            repr: Repr::IndicatorP,
            translation_slope: None,
        }
    }

    /// `φ(f) = log Σ p_i e^{f_i}` for a strictly positive probability measure `p`.
    pub fn entropic(reference: &Measure) -> Result<Functional> {
        if reference.weights().iter().any(|&w| w <= 0.0) {
            return Err(usage(
                "entropic reference measure must be strictly positive",
            ));
        }
        if (reference.total_mass() - 1.0).abs() > MASS_TOL {
            return Err(usage("entropic reference measure must have total mass one"));
        }
        let log_ref = reference.weights().iter().map(|w| w.ln()).collect();
        Ok(Functional {
            space: reference.space().clone(),
            repr: Repr::Entropic {
                reference: reference.clone(),
                log_ref,
            },
            translation_slope: Some(1.0),
        })
    }

    /// `φ(f) = ⟨f, ν⟩`.
    pub fn linear(nu: &Measure) -> Functional {
        Functional {
            space: nu.space().clone(),
            translation_slope: Some(nu.total_mass()),
            repr: Repr::Linear(nu.clone()),
        }
    }

    /// `φ(f) = max_j (⟨f, μ_j⟩ - c_j)`.
    pub fn worst_case(scenarios: Vec<(Measure, f64)>) -> Result<Functional> {
        let first = scenarios
            .first()
            .ok_or_else(|| usage("worst-case functional needs at least one measure"))?;
        let space = first.0.space().clone();
        for (mu, c) in &scenarios {
            if mu.space() != &space {
                return Err(Error::SpaceMismatch {
                    left: space.size(),
                    right: mu.space().size(),
                });
            }
            if !c.is_finite() {
                return Err(usage("worst-case penalties must be finite"));
            }
        }
        let mass = first.0.total_mass();
        let slope = scenarios
            .iter()
            .all(|(mu, _)| (mu.total_mass() - mass).abs() <= MASS_TOL)
            .then_some(mass);
        Ok(Functional {
            space,
            repr: Repr::WorstCase(scenarios),
            translation_slope: slope,
        })
    }

    /// Pointwise sum of functionals.
    pub fn sum(parts: Vec<Functional>) -> Result<Functional> {
        let space = common_space(&parts)?;
        let slope = parts
            .iter()
            .map(|p| p.translation_slope)
            .sum::<Option<f64>>();
        Ok(Functional {
            space,
            repr: Repr::Sum(parts),
            translation_slope: slope,
        })
    }

    /// Pointwise maximum of functionals.
    pub fn max(parts: Vec<Functional>) -> Result<Functional> {
        let space = common_space(&parts)?;
        let s0 = parts[0].translation_slope;
        let slope = match s0 {
            Some(a) if parts.iter().all(|p| p.translation_slope == Some(a)) => Some(a),
            _ => None,
        };
        Ok(Functional {
            space,
            repr: Repr::Max(parts),
            translation_slope: slope,
        })
    }

    /// `c · φ` for `c ≥ 0`.
    pub fn scaled(c: f64, inner: Functional) -> Result<Functional> {
        if !(c.is_finite() && c >= 0.0) {
            return Err(usage("scaling factor must be finite and nonnegative"));
        }
        Ok(Functional {
            space: inner.space.clone(),
            translation_slope: inner.translation_slope.map(|s| c * s),
            repr: Repr::Scaled(c, Box::new(inner)),
        })
    }

    /// `Σ_k w_k φ_k` with nonnegative weights.
    pub fn mixture(parts: Vec<(f64, Functional)>) -> Result<Functional> {
        let scaled = parts
            .into_iter()
            .map(|(w, p)| Functional::scaled(w, p))
            .collect::<Result<Vec<_>>>()?;
        Functional::sum(scaled)
    }

    pub fn space(&self) -> &SpaceRef {
        &self.space
    }

    pub fn kind(&self) -> KindTag {
        match self.repr {
            Repr::Linear(_) => KindTag::Linear,
            Repr::Sup => KindTag::Sup,
            Repr::Entropic { .. } => KindTag::Entropic,
            Repr::IndicatorP => KindTag::IndicatorP,
            Repr::WorstCase(_) => KindTag::WorstCase,
            Repr::Sum(_) | Repr::Max(_) | Repr::Scaled(..) => KindTag::Combinator,
        }
    }

    /// Structural metadata: `φ(f + m) = φ(f) + m` by construction.
    /// [`has_translation_property`] checks it on samples.
    /// `a` with `φ(f + c) = φ(f) + a c` for all constants `c`, when known.
    pub fn translation_slope(&self) -> Option<f64> {
        self.translation_slope
    }

    pub fn translation_invariant(&self) -> bool {
        self.translation_slope
            .is_some_and(|s| (s - 1.0).abs() <= 1e-12)
    }

    /// Short human-readable description including parameters.
    pub fn describe(&self) -> String {
        match &self.repr {
            Repr::Linear(nu) => format!("linear(mass={})", nu.total_mass()),
            Repr::Sup => "sup".into(),
            Repr::Entropic { .. } => "entropic".into(),
            Repr::IndicatorP => "indicator_p".into(),
            Repr::WorstCase(s) => format!("worst_case({} scenarios)", s.len()),
            Repr::Sum(p) => format!(
                "sum[{}]",
                p.iter()
                    .map(|x| x.describe())
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
            Repr::Max(p) => format!(
                "max[{}]",
                p.iter()
                    .map(|x| x.describe())
                    .collect::<Vec<_>>()
                    .join(", ")
            ),
            Repr::Scaled(c, inner) => format!("{c}*{}", inner.describe()),
        }
    }

    fn check(&self, f: &Func) -> Result<()> {
        if f.space() != &self.space {
            return Err(Error::SpaceMismatch {
                left: self.space.size(),
                right: f.space().size(),
            });
        }
        Ok(())
    }

    /// `φ(f)`.
    pub fn evaluate(&self, f: &Func) -> Result<ExtReal> {
        self.check(f)?;
        Ok(self.eval(f.values()))
    }

    pub(crate) fn eval(&self, x: &[f64]) -> ExtReal {
        match &self.repr {
            Repr::Linear(nu) => ExtReal::of(dot(x, nu.weights())),
            Repr::Sup => ExtReal::of(x.iter().copied().fold(f64::NEG_INFINITY, f64::max)),
            Repr::Entropic { log_ref, .. } => ExtReal::of(log_sum_exp(x, log_ref)),
            Repr::IndicatorP => {
                if x.iter().all(|&v| v <= 0.0) {
                    ExtReal::ZERO
                } else {
                    ExtReal::PosInf
                }
            }
            Repr::WorstCase(s) => ExtReal::of(
                s.iter()
                    .map(|(mu, c)| dot(x, mu.weights()) - c)
                    .fold(f64::NEG_INFINITY, f64::max),
            ),
            Repr::Sum(parts) => parts.iter().fold(ExtReal::ZERO, |acc, p| acc + p.eval(x)),
            Repr::Max(parts) => parts.iter().map(|p| p.eval(x)).max().expect("nonempty"),
            Repr::Scaled(c, inner) => inner.eval(x).scale(*c),
        }
    }

    /// A subgradient at `x` computed from the structure of the functional, or
    /// `None` where `φ(x) = +∞`. Used as the ascent direction oracle when
    /// conjugates are computed numerically.
    pub fn local_subgradient(&self, f: &Func) -> Result<Option<Vec<f64>>> {
        self.check(f)?;
        Ok(self.subgrad(f.values()))
    }

    pub(crate) fn subgrad(&self, x: &[f64]) -> Option<Vec<f64>> {
        let n = x.len();
        match &self.repr {
            Repr::Linear(nu) => Some(nu.weights().to_vec()),
            Repr::Sup => {
                let mut g = vec![0.0; n];
                g[argmax(x)] = 1.0;
                Some(g)
            }
            Repr::Entropic { log_ref, .. } => Some(gibbs(x, log_ref)),
            Repr::IndicatorP => x.iter().all(|&v| v <= 0.0).then(|| vec![0.0; n]),
            Repr::WorstCase(s) => {
                let vals: Vec<f64> = s.iter().map(|(mu, c)| dot(x, mu.weights()) - c).collect();
                Some(s[argmax(&vals)].0.weights().to_vec())
            }
            Repr::Sum(parts) => {
                let mut acc = vec![0.0; n];
                for p in parts {
                    for (a, g) in acc.iter_mut().zip(p.subgrad(x)?) {
                        *a += g;
                    }
                }
                Some(acc)
            }
            Repr::Max(parts) => {
                let vals: Vec<ExtReal> = parts.iter().map(|p| p.eval(x)).collect();
                let best = vals.iter().max().expect("nonempty");
                if best.is_infinite() {
                    return None;
                }
                let k = vals.iter().position(|v| v == best).expect("present");
                parts[k].subgrad(x)
            }
            Repr::Scaled(c, inner) => {
                if *c == 0.0 {
                    return Some(vec![0.0; n]);
                }
                Some(inner.subgrad(x)?.into_iter().map(|g| c * g).collect())
            }
        }
    }

    /// The conjugate `φ*(μ)` in closed form, where one is known.
    pub fn closed_form_conjugate(&self, mu: &Measure) -> Result<Option<ExtReal>> {
        if mu.space() != &self.space {
            return Err(Error::SpaceMismatch {
                left: self.space.size(),
                right: mu.space().size(),
            });
        }
        Ok(self.closed_conj(mu.weights()))
    }

    fn closed_conj(&self, w: &[f64]) -> Option<ExtReal> {
        let mass: f64 = w.iter().sum();
        let is_prob = (mass - 1.0).abs() <= MASS_TOL;
        match &self.repr {
            Repr::Linear(nu) => {
                let scale = nu.total_mass().max(1.0);
                let close = w
                    .iter()
                    .zip(nu.weights())
                    .all(|(a, b)| (a - b).abs() <= MASS_TOL * scale);
                Some(if close {
                    ExtReal::ZERO
                } else {
                    ExtReal::PosInf
                })
            }
            Repr::Sup => Some(if is_prob {
                ExtReal::ZERO
            } else {
                ExtReal::PosInf
            }),
            Repr::Entropic { log_ref, .. } => Some(if is_prob {
                ExtReal::of(relative_entropy(w, log_ref))
            } else {
                ExtReal::PosInf
            }),
            Repr::IndicatorP => Some(ExtReal::ZERO),
            Repr::Scaled(c, inner) if *c > 0.0 => {
                let inner_w: Vec<f64> = w.iter().map(|x| x / c).collect();
                inner.closed_conj(&inner_w).map(|v| v.scale(*c))
            }
            Repr::Scaled(..) => Some(if w.iter().all(|&x| x == 0.0) {
                ExtReal::ZERO
            } else {
                ExtReal::PosInf
            }),
            Repr::Sum(parts) => entropic_sup_conj(parts, w),
            Repr::WorstCase(_) | Repr::Max(_) => None,
        }
    }

    /// Reference measure of an entropic functional.
    pub fn entropic_reference(&self) -> Option<&Measure> {
        match &self.repr {
            Repr::Entropic { reference, .. } => Some(reference),
            _ => None,
        }
    }
}

fn common_space(parts: &[Functional]) -> Result<SpaceRef> {
    let first = parts
        .first()
        .ok_or_else(|| usage("combinator needs at least one functional"))?;
    for p in parts {
        if p.space != first.space {
            return Err(Error::SpaceMismatch {
                left: first.space.size(),
                right: p.space.size(),
            });
        }
    }
    Ok(first.space.clone())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn argmax(x: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in x.iter().enumerate() {
        if v > x[best] {
            best = i;
        }
    }
    best
}

fn log_sum_exp(x: &[f64], log_ref: &[f64]) -> f64 {
    let m = x
        .iter()
        .zip(log_ref)
        .map(|(a, b)| a + b)
        .fold(f64::NEG_INFINITY, f64::max);
    let s: f64 = x.iter().zip(log_ref).map(|(a, b)| (a + b - m).exp()).sum();
    m + s.ln()
}

fn gibbs(x: &[f64], log_ref: &[f64]) -> Vec<f64> {
    let m = x
        .iter()
        .zip(log_ref)
        .map(|(a, b)| a + b)
        .fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x
        .iter()
        .zip(log_ref)
        .map(|(a, b)| (a + b - m).exp())
        .collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

/// `Σ μ_i log(μ_i / p_i)` with `0 log 0 = 0`.
/// Conjugate of `a·entropic_p + b·sup` as an infimal convolution:
/// `min a KL(ν | p)` over probability vectors `ν ≤ μ / a` with `μ - aν`
/// of mass `b`. The minimizer is `ν_i = min(μ_i / a, λ p_i)`, with `λ` fixed
/// by `Σ ν = 1`.
fn entropic_sup_conj(parts: &[Functional], w: &[f64]) -> Option<ExtReal> {
    let [x, y] = parts else { return None };
    fn pick(f: &Functional) -> Option<(f64, &Repr)> {
        match &f.repr {
            Repr::Scaled(c, inner) if *c > 0.0 => Some((*c, &inner.repr)),
            _ => None,
        }
    }
    let ((a, ent), (b, _)) = match (pick(x)?, pick(y)?) {
        (e @ (_, Repr::Entropic { .. }), s @ (_, Repr::Sup)) => (e, s),
        (s @ (_, Repr::Sup), e @ (_, Repr::Entropic { .. })) => (e, s),
        _ => return None,
    };
    let Repr::Entropic { reference, log_ref } = ent else {
        return None;
    };
    let mass: f64 = w.iter().sum();
    if w.iter().any(|&v| v < 0.0) || (mass - (a + b)).abs() > MASS_TOL * (a + b).max(1.0) {
        return Some(ExtReal::PosInf);
    }
    let p = reference.weights();
    let cap: Vec<f64> = w.iter().map(|v| v / a).collect();
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&i, &j| (cap[i] / p[i]).total_cmp(&(cap[j] / p[j])));
    // Raise λ through the breakpoints cap_i / p_i until the free part fills the gap.
    let mut capped = 0.0;
    let mut free: f64 = p.iter().sum();
    let mut lambda = 0.0;
    for &i in &order {
        let r = cap[i] / p[i];
        if capped + r * free >= 1.0 {
            lambda = (1.0 - capped) / free;
            break;
        }
        capped += cap[i];
        free -= p[i];
        lambda = r;
    }
    let nu: Vec<f64> = cap
        .iter()
        .zip(p)
        .map(|(&c, &q)| c.min(lambda * q))
        .collect();
    Some(ExtReal::of(a * relative_entropy(&nu, log_ref)))
}

fn relative_entropy(w: &[f64], log_ref: &[f64]) -> f64 {
    w.iter()
        .zip(log_ref)
        .filter(|(m, _)| **m > 0.0)
        .map(|(m, lp)| m * (m.ln() - lp))
        .sum()
}

/// The Gibbs measure `p_i e^{f_i} / Σ_j p_j e^{f_j}` of an entropic functional at `f`.
pub fn gibbs_measure(phi: &Functional, f: &Func) -> Result<Measure> {
    phi.check(f)?;
    match &phi.repr {
        Repr::Entropic { log_ref, .. } => {
            Measure::from_rounded(f.space(), gibbs(f.values(), log_ref))
        }
        _ => Err(usage(
            "Gibbs measure is only defined for entropic functionals",
        )),
    }
}

/// Directions and step sizes used to probe the algebraic interior and to
/// approximate directional derivatives.
#[derive(Debug, Clone)]
pub struct DomainProbe {
    directions: Vec<Func>,
    epsilon_grid: Vec<f64>,
}

/// `2^{-j}` for `j = 0..=20`.
pub fn default_epsilon_grid() -> Vec<f64> {
    (0..=20).map(|j| 0.5f64.powi(j)).collect()
}

impl DomainProbe {
    pub fn new(directions: Vec<Func>, epsilon_grid: Vec<f64>) -> Result<DomainProbe> {
        if epsilon_grid.is_empty() || epsilon_grid.iter().any(|&e| !(e > 0.0 && e.is_finite())) {
            return Err(usage("epsilon grid must be nonempty and positive"));
        }
        if epsilon_grid.windows(2).any(|w| w[0] <= w[1]) {
            return Err(usage("epsilon grid must be strictly decreasing"));
        }
        Ok(DomainProbe {
            directions,
            epsilon_grid,
        })
    }

    /// `±e_i`, `±1` and eight random directions in `[-1, 1]^n`, on the default grid.
    pub fn standard(space: &SpaceRef, rng: &mut impl Rng) -> DomainProbe {
        let mut dirs = Vec::with_capacity(2 * space.size() + 10);
        for i in 0..space.size() {
            let e = Func::unit(space, i).expect("in range");
            dirs.push(e.scale(-1.0));
            dirs.push(e);
        }
        dirs.push(Func::constant(space, 1.0));
        dirs.push(Func::constant(space, -1.0));
        for _ in 0..8 {
            dirs.push(random_func(space, rng, -1.0, 1.0));
        }
        DomainProbe::new(dirs, default_epsilon_grid()).expect("valid default grid")
    }

    pub fn directions(&self) -> &[Func] {
        &self.directions
    }

    pub fn epsilon_grid(&self) -> &[f64] {
        &self.epsilon_grid
    }
}

/// True iff `φ(f) < ∞` and every probe direction admits a grid step that keeps `φ` finite.
pub fn in_interior(phi: &Functional, f: &Func, probe: &DomainProbe) -> bool {
    match phi.evaluate(f) {
        Ok(v) if v.is_finite() => {}
        _ => return false,
    }
    probe.directions.iter().all(|g| {
        probe.epsilon_grid.iter().any(|&eps| {
            f.axpy(eps, g)
                .ok()
                .and_then(|h| phi.evaluate(&h).ok())
                .is_some_and(ExtReal::is_finite)
        })
    })
}

/// Difference quotients `(φ(f + εg) - φ(f)) / ε` along the grid, `None` where `φ(f + εg) = ∞`.
pub fn difference_quotients(
    phi: &Functional,
    f: &Func,
    g: &Func,
    grid: &[f64],
) -> Result<Vec<Option<f64>>> {
    let base = phi
        .evaluate(f)?
        .finite()
        .ok_or_else(|| Error::Domain("φ(f) = +∞".into()))?;
    if f.space() != g.space() {
        return Err(Error::SpaceMismatch {
            left: f.len(),
            right: g.len(),
        });
    }
    let x = f.values();
    let d = g.values();
    let mut buf = vec![0.0; x.len()];
    Ok(grid
        .iter()
        .map(|&eps| {
            for ((b, a), e) in buf.iter_mut().zip(x).zip(d) {
                *b = a + eps * e;
            }
            phi.eval(&buf).finite().map(|v| (v - base) / eps)
        })
        .collect())
}

/// One-sided directional derivative `φ'(f; g)`.
///
/// For convex `φ` the quotients are non-increasing as `ε ↓ 0`, so the
/// infimum over the grid is reported rather than an extrapolation; this stays
/// stable at kinks.
pub fn directional_derivative(phi: &Functional, f: &Func, g: &Func, grid: &[f64]) -> Result<f64> {
    difference_quotients(phi, f, g, grid)?
        .into_iter()
        .flatten()
        .reduce(f64::min)
        .ok_or_else(|| Error::Domain("φ(f + εg) = +∞ at every grid step".into()))
}

/// Shifts used by [`has_translation_property`].
pub const TRANSLATION_SHIFTS: [f64; 3] = [-1.0, 0.5, 2.0];

/// Checks `|φ(f + m) - φ(f) - m| ≤ tol` for every sample with finite `φ(f)`
/// and every shift in [`TRANSLATION_SHIFTS`].
pub fn has_translation_property(phi: &Functional, samples: &[Func], tol: f64) -> Result<bool> {
    for f in samples {
        let base = match phi.evaluate(f)?.finite() {
            Some(v) => v,
            None => continue,
        };
        for m in TRANSLATION_SHIFTS {
            match phi.evaluate(&f.shift(m))?.finite() {
                Some(v) if (v - base - m).abs() <= tol => {}
                _ => return Ok(false),
            }
        }
    }
    Ok(true)
}

/// Counts sampled pairs `f ≤ f + |h|` with `φ(f) > φ(f + |h|) + tol`.
pub fn count_monotonicity_violations(
    phi: &Functional,
    rng: &mut impl Rng,
    trials: usize,
    tol: f64,
) -> usize {
    let space = phi.space().clone();
    (0..trials)
        .filter(|_| {
            let f = random_func(&space, rng, -3.0, 1.0);
            let h = random_func(&space, rng, 0.0, 2.0);
            let g = f.add(&h).expect("same space");
            let (a, b) = (phi.eval(f.values()), phi.eval(g.values()));
            a > b + tol
        })
        .count()
}

/// Counts sampled triples with `φ(λf + (1-λ)g) > λφ(f) + (1-λ)φ(g) + tol`.
pub fn count_convexity_violations(
    phi: &Functional,
    rng: &mut impl Rng,
    trials: usize,
    tol: f64,
) -> usize {
    let space = phi.space().clone();
    (0..trials)
        .filter(|_| {
            let f = random_func(&space, rng, -3.0, 1.0);
            let g = random_func(&space, rng, -3.0, 1.0);
            let lam: f64 = rng.random();
            let mid = f.scale(lam).axpy(1.0 - lam, &g).expect("same space");
            let lhs = phi.eval(mid.values());
            let rhs = phi.eval(f.values()).scale(lam) + phi.eval(g.values()).scale(1.0 - lam);
            lhs > rhs + tol
        })
        .count()
}

/// The standard test catalog on one space: linear, sup, entropic (uniform
/// reference), indicator_p, a three-scenario worst case over probability
/// measures, and the mixture `½ entropic + ½ sup`.
pub fn catalog(space: &SpaceRef, rng: &mut impl Rng) -> Vec<Functional> {
    let nu = crate::sampling::random_measure(space, rng, 0.5);
    let uniform = Measure::uniform(space);
    let entropic = Functional::entropic(&uniform).expect("uniform is positive");
    let scenarios = (0..3)
        .map(|_| (random_probability(space, rng), rng.random_range(0.0..0.5)))
        .collect();
    vec![
        Functional::linear(&nu),
        Functional::sup(space),
        entropic.clone(),
        Functional::indicator_p(space),
        Functional::worst_case(scenarios).expect("nonempty"),
        Functional::mixture(vec![(0.5, entropic), (0.5, Functional::sup(space))])
            .expect("same space"),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::rng_for;
    use crate::space::{pairing, Space};

    fn func(s: &SpaceRef, v: &[f64]) -> Func {
        Func::new(s, v.to_vec()).unwrap()
    }

    /// Independent log-sum-exp: plain summation, no max shift.
    fn naive_entropic(f: &[f64], p: &[f64]) -> f64 {
        let mut s = 0.0;
        for i in 0..f.len() {
            s += p[i] * f[i].exp();
        }
        s.ln()
    }

    #[test]
    fn sup_examples() {
        let s = Space::new(3).unwrap();
        let phi = Functional::sup(&s);
        assert_eq!(
            phi.evaluate(&func(&s, &[1.0, 2.0, 3.0])).unwrap(),
            ExtReal::of(3.0)
        );
        assert_eq!(
            phi.evaluate(&Func::constant(&s, -4.5)).unwrap(),
            ExtReal::of(-4.5)
        );
        let mut rng = rng_for(1, "sup");
        for _ in 0..100 {
            let f = random_func(&s, &mut rng, -10.0, 10.0);
            let mut best = f.values()[0];
            for &v in f.values() {
                if v > best {
                    best = v;
                }
            }
            assert_eq!(phi.evaluate(&f).unwrap(), ExtReal::of(best));
        }
        assert_eq!(phi.kind(), KindTag::Sup);
    }

    #[test]
    fn indicator_examples() {
        let s = Space::new(2).unwrap();
        let p = Functional::indicator_p(&s);
        assert_eq!(p.evaluate(&func(&s, &[-1.0, -2.0])).unwrap(), ExtReal::ZERO);
        assert_eq!(p.evaluate(&func(&s, &[0.0, 0.0])).unwrap(), ExtReal::ZERO);
        assert_eq!(
            p.evaluate(&func(&s, &[-1.0, 0.1])).unwrap(),
            ExtReal::PosInf
        );
        assert_eq!(p.evaluate(&func(&s, &[1.0, 1.0])).unwrap(), ExtReal::PosInf);
    }

    #[test]
    fn entropic_examples() {
        let s = Space::new(2).unwrap();
        let phi = Functional::entropic(&Measure::uniform(&s)).unwrap();
        assert!(phi.translation_invariant());
        let v = phi
            .evaluate(&func(&s, &[0.0, 3f64.ln()]))
            .unwrap()
            .finite()
            .unwrap();
        assert!((v - ((1.0 + 3.0) / 2.0f64).ln()).abs() < 1e-15);
        assert!((v - 2f64.ln()).abs() < 1e-15);
        let c = phi
            .evaluate(&Func::constant(&s, 1.7))
            .unwrap()
            .finite()
            .unwrap();
        assert!((c - 1.7).abs() < 1e-15);

        assert!(Functional::entropic(&Measure::new(&s, vec![1.0, 0.0]).unwrap()).is_err());
    }

    #[test]
    fn entropic_matches_naive_formula() {
        let s = Space::new(7).unwrap();
        let mut rng = rng_for(2, "ent");
        let p = random_probability(&s, &mut rng);
        let phi = Functional::entropic(&p).unwrap();
        for _ in 0..200 {
            let f = random_func(&s, &mut rng, -5.0, 5.0);
            let got = phi.evaluate(&f).unwrap().finite().unwrap();
            let want = naive_entropic(f.values(), p.weights());
            assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn linear_and_worst_case() {
        let s = Space::new(2).unwrap();
        let nu = Measure::new(&s, vec![0.3, 1.2]).unwrap();
        let f = func(&s, &[5.0, 7.0]);
        assert_eq!(
            Functional::linear(&nu).evaluate(&f).unwrap(),
            ExtReal::of(pairing(&f, &nu).unwrap())
        );
        let wc = Functional::worst_case(vec![
            (Measure::dirac(&s, 0).unwrap(), 0.0),
            (Measure::dirac(&s, 1).unwrap(), 0.0),
        ])
        .unwrap();
        assert_eq!(wc.evaluate(&f).unwrap(), ExtReal::of(7.0));
        assert!(matches!(
            Functional::worst_case(vec![]),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn evaluate_checks_space() {
        let phi = Functional::sup(&Space::new(2).unwrap());
        assert!(matches!(
            phi.evaluate(&Func::zero(&Space::new(3).unwrap())),
            Err(Error::SpaceMismatch { .. })
        ));
    }

    #[test]
    fn evaluation_is_deterministic() {
        let s = Space::new(6).unwrap();
        let mut rng = rng_for(3, "det");
        for phi in catalog(&s, &mut rng) {
            let f = random_func(&s, &mut rng, -2.0, 0.0);
            assert_eq!(phi.evaluate(&f).unwrap(), phi.evaluate(&f).unwrap());
        }
    }

    #[test]
    fn catalog_monotone_and_convex() {
        let s = Space::new(8).unwrap();
        let mut rng = rng_for(4, "catalog");
        for phi in catalog(&s, &mut rng) {
            assert_eq!(
                count_monotonicity_violations(&phi, &mut rng, 1000, 1e-10),
                0,
                "{}",
                phi.describe()
            );
            assert_eq!(
                count_convexity_violations(&phi, &mut rng, 1000, 1e-10),
                0,
                "{}",
                phi.describe()
            );
        }
    }

    #[test]
    fn directional_derivative_examples() {
        let s = Space::new(2).unwrap();
        let grid = default_epsilon_grid();
        let nu = Measure::new(&s, vec![0.25, 2.0]).unwrap();
        let lin = Functional::linear(&nu);
        let f = func(&s, &[0.4, -1.0]);
        let g = func(&s, &[1.0, -3.0]);
        let d = directional_derivative(&lin, &f, &g, &grid).unwrap();
        assert!((d - pairing(&g, &nu).unwrap()).abs() < 1e-9);

        let sup = Functional::sup(&s);
        let d = directional_derivative(&sup, &func(&s, &[0.0, 1.0]), &func(&s, &[1.0, 0.0]), &grid)
            .unwrap();
        assert_eq!(d, 0.0);
    }

    #[test]
    fn entropic_derivative_matches_gibbs() {
        let s = Space::new(5).unwrap();
        let mut rng = rng_for(5, "dd");
        let p = random_probability(&s, &mut rng);
        let phi = Functional::entropic(&p).unwrap();
        let grid = default_epsilon_grid();
        for _ in 0..20 {
            let f = random_func(&s, &mut rng, -2.0, 2.0);
            let g = random_func(&s, &mut rng, -1.0, 1.0);
            // Gibbs computed independently of the implementation's helper.
            let z: f64 = (0..5).map(|i| p.weights()[i] * f.values()[i].exp()).sum();
            let expect: f64 = (0..5)
                .map(|i| g.values()[i] * p.weights()[i] * f.values()[i].exp() / z)
                .sum();
            let d = directional_derivative(&phi, &f, &g, &grid).unwrap();
            assert!((d - expect).abs() < 1e-6, "{d} vs {expect}");
            // Richardson-style consistency of two central differences.
            let central = |h: f64| {
                let up = phi.evaluate(&f.axpy(h, &g).unwrap()).unwrap().to_f64();
                let dn = phi.evaluate(&f.axpy(-h, &g).unwrap()).unwrap().to_f64();
                (up - dn) / (2.0 * h)
            };
            assert!((central(1e-6) - central(1e-7)).abs() < 1e-6);
            assert!((central(1e-6) - expect).abs() < 1e-8);
        }
    }

    #[test]
    fn quotients_non_increasing() {
        let s = Space::new(6).unwrap();
        let mut rng = rng_for(6, "quot");
        let grid = default_epsilon_grid();
        for phi in catalog(&s, &mut rng) {
            for _ in 0..20 {
                let f = random_func(&s, &mut rng, -3.0, -1.0);
                let g = random_func(&s, &mut rng, -1.0, 1.0);
                let q: Vec<f64> = difference_quotients(&phi, &f, &g, &grid)
                    .unwrap()
                    .into_iter()
                    .flatten()
                    .collect();
                for w in q.windows(2) {
                    assert!(w[1] <= w[0] + 1e-9, "{}: {:?}", phi.describe(), w);
                }
            }
        }
    }

    #[test]
    fn directional_derivative_domain_error() {
        let s = Space::new(2).unwrap();
        let p = Functional::indicator_p(&s);
        let grid = default_epsilon_grid();
        assert!(matches!(
            directional_derivative(&p, &func(&s, &[1.0, 0.0]), &func(&s, &[1.0, 0.0]), &grid),
            Err(Error::Domain(_))
        ));
        // Every step leaves the domain: f on the boundary, pushed up by a large amount.
        let f = func(&s, &[0.0, -1.0]);
        let g = func(&s, &[1.0, 0.0]);
        assert!(matches!(
            directional_derivative(&p, &f, &g, &grid),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn interior_examples() {
        let s = Space::new(2).unwrap();
        let mut rng = rng_for(7, "probe");
        let probe = DomainProbe::standard(&s, &mut rng);
        let p = Functional::indicator_p(&s);
        assert!(in_interior(&p, &func(&s, &[-1.0, -1.0]), &probe));
        assert!(!in_interior(&p, &func(&s, &[0.0, -1.0]), &probe));
        let ent = Functional::entropic(&Measure::uniform(&s)).unwrap();
        for _ in 0..20 {
            let f = random_func(&s, &mut rng, -50.0, 50.0);
            assert!(in_interior(&ent, &f, &probe));
        }
    }

    #[test]
    fn probe_grid_validation() {
        assert!(DomainProbe::new(vec![], vec![1.0, 1.0]).is_err());
        assert!(DomainProbe::new(vec![], vec![1.0, -0.5]).is_err());
        assert!(DomainProbe::new(vec![], vec![1.0, 0.5]).is_ok());
    }

    #[test]
    fn translation_property_examples() {
        let s = Space::new(4).unwrap();
        let mut rng = rng_for(8, "tp");
        let samples: Vec<Func> = (0..50)
            .map(|_| random_func(&s, &mut rng, -3.0, 3.0))
            .collect();
        let ent = Functional::entropic(&random_probability(&s, &mut rng)).unwrap();
        assert!(has_translation_property(&ent, &samples, 1e-10).unwrap());
        assert!(has_translation_property(&Functional::sup(&s), &samples, 1e-10).unwrap());
        let nu = Measure::new(&s, vec![0.5; 4]).unwrap();
        assert!(!has_translation_property(&Functional::linear(&nu), &samples, 1e-10).unwrap());
        let neg: Vec<Func> = samples.iter().map(|f| f.shift(-10.0)).collect();
        assert!(!has_translation_property(&Functional::indicator_p(&s), &neg, 1e-10).unwrap());
    }

    #[test]
    fn translation_metadata() {
        let s = Space::new(3).unwrap();
        let mut rng = rng_for(9, "meta");
        let cat = catalog(&s, &mut rng);
        let flags: Vec<(KindTag, bool)> = cat
            .iter()
            .map(|p| (p.kind(), p.translation_invariant()))
            .collect();
        assert_eq!(
            flags,
            vec![
                (KindTag::Linear, false),
                (KindTag::Sup, true),
                (KindTag::Entropic, true),
                (KindTag::IndicatorP, false),
                (KindTag::WorstCase, true),
                (KindTag::Combinator, true),
            ]
        );
        let samples: Vec<Func> = (0..20)
            .map(|_| random_func(&s, &mut rng, -2.0, 2.0))
            .collect();
        for p in &cat {
            if p.translation_invariant() {
                assert!(
                    has_translation_property(p, &samples, 1e-10).unwrap(),
                    "{}",
                    p.describe()
                );
            }
        }
    }

    #[test]
    fn entropic_sup_mixture_conjugate_matches_grid() {
        let s = Space::new(3).unwrap();
        let mut rng = rng_for(41, "mixconj");
        for _ in 0..10 {
            let p = random_probability(&s, &mut rng);
            let a = rng.random_range(0.2..0.8);
            let phi = Functional::mixture(vec![
                (a, Functional::entropic(&p).unwrap()),
                (1.0 - a, Functional::sup(&s)),
            ])
            .unwrap();
            let mu = random_probability(&s, &mut rng);
            let got = phi.closed_form_conjugate(&mu).unwrap().unwrap().to_f64();
            // Brute force over ν on a simplex grid with ν ≤ μ/a.
            let k = 600;
            let mut best = f64::INFINITY;
            for i in 0..=k {
                for j in 0..=(k - i) {
                    let nu = [
                        i as f64 / k as f64,
                        j as f64 / k as f64,
                        (k - i - j) as f64 / k as f64,
                    ];
                    if (0..3).any(|t| nu[t] > mu.weights()[t] / a) {
                        continue;
                    }
                    let v: f64 = (0..3)
                        .filter(|&t| nu[t] > 0.0)
                        .map(|t| nu[t] * (nu[t] / p.weights()[t]).ln())
                        .sum();
                    best = best.min(a * v);
                }
            }
            assert!(got <= best + 1e-12, "{got} vs {best}");
            assert!(best - got < 5e-3, "{got} vs {best}");
            let heavy = mu.scale(1.2).unwrap();
            assert_eq!(
                phi.closed_form_conjugate(&heavy).unwrap(),
                Some(ExtReal::PosInf)
            );
        }
    }
}
