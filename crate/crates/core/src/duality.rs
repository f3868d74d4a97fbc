//! Convex conjugates, subgradients from directional derivatives, and
//! certification of the max-representation
//!
//! ```text
//! φ(f) = max_μ ⟨f, μ⟩ - φ*(μ),     φ*(μ) = sup_f ⟨f, μ⟩ - φ(f)
//! ```
//!
//! On a finite space every finitely additive measure is a weight vector, so the
//! maximizing measure is an ordinary [`Measure`].

use rand::Rng;
use serde::Serialize;

use crate::error::{usage, Error, Result};
use crate::ext_real::ExtReal;
use crate::functional::{directional_derivative, in_interior, DomainProbe, Functional, MASS_TOL};
use crate::sampling::{random_func, random_measure, random_probability, rng_for, CaseRng};
use crate::space::{pairing, Func, Measure};

/// Coordinates whose one-sided derivatives differ by more than this are kinks.
const KINK_TOL: f64 = 1e-5;

/// Parameters of the box-constrained supergradient ascent behind [`conjugate`].
#[derive(Debug, Clone, Serialize)]
pub struct AscentConfig {
    /// Initial sup-norm box radius `R`.
    pub box_radius: f64,
    /// Relative improvement below which the ascent counts as stalled, and
    /// growth below which a radius doubling counts as saturated.
    pub tol: f64,
    pub max_iter: usize,
    /// Number of radius doublings (`R, 2R, ..., 2^d R`).
    pub doublings: u32,
    /// Divergence is declared when the best value grows by more than this at every doubling.
    pub growth_threshold: f64,
    pub restarts: usize,
    pub seed: u64,
    /// Try exact unboundedness rays before the ascent.
    pub ray_certificates: bool,
}

impl Default for AscentConfig {
    fn default() -> Self {
        AscentConfig {
            box_radius: 8.0,
            tol: 1e-10,
            max_iter: 2_000,
            doublings: 6,
            growth_threshold: 1.0,
            restarts: 2,
            seed: 0,
            ray_certificates: true,
        }
    }
}

impl AscentConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConjugateResult {
    pub value: ExtReal,
    /// Best `f` found; `None` when diverged.
    pub maximizer: Option<Func>,
    pub diverged: bool,
    pub box_radius_used: f64,
    /// Best objective value at each radius tried.
    pub radius_trace: Vec<f64>,
    /// Direction along which the objective provably grows without bound.
    pub unbounded_ray: Option<String>,
}

/// `φ*(μ)` by supergradient ascent of `f ↦ ⟨f, μ⟩ - φ(f)` over growing boxes.
pub fn conjugate(phi: &Functional, mu: &Measure, cfg: &AscentConfig) -> Result<ConjugateResult> {
    if mu.space() != phi.space() {
        return Err(Error::SpaceMismatch {
            left: phi.space().size(),
            right: mu.space().size(),
        });
    }
    conjugate_signed(phi, mu.weights(), cfg)
}

/// Same as [`conjugate`] for an arbitrary (possibly signed) weight vector.
pub fn conjugate_signed(
    phi: &Functional,
    weights: &[f64],
    cfg: &AscentConfig,
) -> Result<ConjugateResult> {
    let n = phi.space().size();
    if weights.len() != n || weights.iter().any(|w| !w.is_finite()) {
        return Err(usage("dual vector must have one finite weight per point"));
    }
    if cfg.box_radius.is_nan() || cfg.box_radius <= 0.0 {
        return Err(usage("box radius must be positive"));
    }
    if cfg.ray_certificates {
        if let Some(ray) = unbounded_ray(phi, weights, cfg.box_radius) {
            return Ok(ConjugateResult {
                value: ExtReal::PosInf,
                maximizer: None,
                diverged: true,
                box_radius_used: cfg.box_radius,
                radius_trace: Vec::new(),
                unbounded_ray: Some(ray),
            });
        }
    }
    let mut rng = rng_for(cfg.seed, "conjugate");
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut trace = Vec::new();
    let mut radius = cfg.box_radius;
    let mut every_doubling_grew = true;

    for level in 0..=cfg.doublings {
        if level > 0 {
            radius *= 2.0;
        }
        let mut starts: Vec<Vec<f64>> = Vec::with_capacity(cfg.restarts);
        starts.push(match &best {
            Some((_, x)) => x.clone(),
            None => vec![0.0; n],
        });
        while starts.len() < cfg.restarts.max(1) {
            starts.push(
                (0..n)
                    .map(|_| rng.random_range(-radius / 2.0..radius / 2.0))
                    .collect(),
            );
        }
        let mut level_best: Option<(f64, Vec<f64>)> = None;
        for start in starts {
            if let Some(x0) = make_feasible(phi, start, radius) {
                let (v, x) = ascend(phi, weights, x0, radius, cfg);
                if level_best.as_ref().is_none_or(|(b, _)| v > *b) {
                    level_best = Some((v, x));
                }
            }
        }
        let Some((v, x)) = level_best else {
            if best.is_none() {
                return Err(Error::Degenerate(
                    "φ = +∞ at every tested point of the box".into(),
                ));
            }
            continue;
        };
        let v = match &best {
            Some((b, _)) if *b > v => *b,
            _ => v,
        };
        if let Some(&prev) = trace.last() {
            let growth = v - prev;
            if growth <= cfg.growth_threshold {
                every_doubling_grew = false;
            }
            if growth <= cfg.tol * (1.0 + f64::abs(prev)) {
                trace.push(v);
                best = Some((v, x));
                break;
            }
        }
        trace.push(v);
        // A maximizer well inside the box is global by concavity.
        let inside = x.iter().all(|c| c.abs() <= radius / 2.0);
        if best.as_ref().is_none_or(|(b, _)| v >= *b) {
            best = Some((v, x));
        }
        if inside {
            every_doubling_grew = false;
            break;
        }
    }

    let (value, x) = best.expect("at least one feasible start");
    let diverged = every_doubling_grew && trace.len() == cfg.doublings as usize + 1;
    Ok(if diverged {
        ConjugateResult {
            value: ExtReal::PosInf,
            maximizer: None,
            diverged: true,
            box_radius_used: radius,
            radius_trace: trace,
            unbounded_ray: None,
        }
    } else {
        ConjugateResult {
            value: ExtReal::of(value),
            maximizer: Some(Func::new(phi.space(), x).expect("finite iterate")),
            diverged: false,
            box_radius_used: radius,
            radius_trace: trace,
            unbounded_ray: None,
        }
    })
}

/// An exact unboundedness certificate for `f ↦ ⟨f, w⟩ - φ(f)`.
///
/// From a point `x0` of the domain, `x0 - t e_i` stays in the domain with
/// `φ ≤ φ(x0)` by monotonicity, so a negative weight gives growth `t |w_i|`.
/// With a known translation slope `a`, the objective along `x0 + t 1` is
/// affine in `t` with slope `Σ w - a`.
fn unbounded_ray(phi: &Functional, w: &[f64], r: f64) -> Option<String> {
    make_feasible(phi, vec![0.0; w.len()], r)?;
    if let Some(i) = w.iter().position(|&v| v < 0.0) {
        return Some(format!("-e_{i}"));
    }
    let a = phi.translation_slope()?;
    let excess = w.iter().sum::<f64>() - a;
    if excess.abs() > MASS_TOL * a.abs().max(1.0) {
        return Some(if excess > 0.0 { "+1" } else { "-1" }.to_string());
    }
    None
}

fn clip(x: &mut [f64], r: f64) {
    for v in x {
        *v = v.clamp(-r, r);
    }
}

/// Pushes a start point down along `-1` until `φ` is finite (monotone `φ`).
fn make_feasible(phi: &Functional, mut x: Vec<f64>, r: f64) -> Option<Vec<f64>> {
    clip(&mut x, r);
    if phi.eval(&x).is_finite() {
        return Some(x);
    }
    let mut t = 1.0;
    for _ in 0..60 {
        let mut y: Vec<f64> = x.iter().map(|v| v - t).collect();
        clip(&mut y, r);
        if phi.eval(&y).is_finite() {
            return Some(y);
        }
        t *= 2.0;
    }
    None
}

fn objective(phi: &Functional, w: &[f64], x: &[f64]) -> f64 {
    match phi.eval(x) {
        ExtReal::Finite(v) => x.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() - v,
        ExtReal::PosInf => f64::NEG_INFINITY,
    }
}

fn direction(phi: &Functional, w: &[f64], x: &[f64]) -> Option<(Vec<f64>, f64)> {
    let g = phi.subgrad(x)?;
    let d: Vec<f64> = w.iter().zip(&g).map(|(a, b)| a - b).collect();
    let norm = d.iter().fold(0.0, |m: f64, v| m.max(v.abs()));
    Some((d, norm))
}

/// Finds the largest of `t, t/2, t/4, ...` keeping the step inside `dom φ`.
/// An infeasible step is first cut back to `min(y, x)`, which stays in the
/// domain by monotonicity.
fn feasible_step(phi: &Functional, x: &[f64], d: &[f64], mut t: f64, r: f64) -> Option<Vec<f64>> {
    for _ in 0..40 {
        let mut y: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + t * b).collect();
        clip(&mut y, r);
        if phi.eval(&y).is_finite() {
            return Some(y);
        }
        let cut: Vec<f64> = y.iter().zip(x).map(|(a, b)| a.min(*b)).collect();
        if cut != x && phi.eval(&cut).is_finite() {
            return Some(cut);
        }
        t *= 0.5;
    }
    None
}

/// Diminishing-step projected supergradient ascent (steps `R / 2k` in
/// sup-norm), best iterate kept, followed by a backtracking polish from the
/// best point.
fn ascend(
    phi: &Functional,
    w: &[f64],
    mut x: Vec<f64>,
    r: f64,
    cfg: &AscentConfig,
) -> (f64, Vec<f64>) {
    let mut best = objective(phi, w, &x);
    let mut best_x = x.clone();
    let mut last_improvement = 0;
    for k in 1..=cfg.max_iter {
        let Some((d, norm)) = direction(phi, w, &x) else {
            break;
        };
        if norm <= 1e-15 {
            break;
        }
        let t = r / (2.0 * k as f64) / norm;
        let Some(y) = feasible_step(phi, &x, &d, t, r) else {
            break;
        };
        x = y;
        let v = objective(phi, w, &x);
        if v > best + cfg.tol * (1.0 + best.abs()) {
            last_improvement = k;
        }
        if v > best {
            best = v;
            best_x.clone_from(&x);
        }
        if k - last_improvement > 200 {
            break;
        }
    }

    // Polish: normalized supergradient steps, accepted only when they improve.
    let mut x = best_x.clone();
    let mut t = r * 1e-3;
    let mut stalled = 0;
    for _ in 0..2_000 {
        if stalled > 50 {
            break;
        }
        let Some((d, norm)) = direction(phi, w, &x) else {
            break;
        };
        if norm <= 1e-15 || t < r * 1e-15 {
            break;
        }
        let mut y: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b / norm).collect();
        clip(&mut y, r);
        let v = objective(phi, w, &y);
        if v > best {
            if v - best <= cfg.tol * (1.0 + best.abs()) {
                stalled += 1;
            } else {
                stalled = 0;
            }
            best = v;
            x = y;
            best_x.clone_from(&x);
            t *= 1.5;
        } else {
            t *= 0.5;
        }
    }
    (best, best_x)
}

/// How a conjugate value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConjugateMethod {
    ClosedForm,
    Numerical,
}

/// `φ*(μ)`: closed form when the functional provides one, numerical ascent otherwise.
pub fn conjugate_value(
    phi: &Functional,
    mu: &Measure,
    cfg: &AscentConfig,
) -> Result<(ExtReal, ConjugateMethod)> {
    match phi.closed_form_conjugate(mu)? {
        Some(v) => Ok((v, ConjugateMethod::ClosedForm)),
        None => Ok((conjugate(phi, mu, cfg)?.value, ConjugateMethod::Numerical)),
    }
}

/// A maximizing measure at `f`, built from one-sided directional derivatives.
///
/// Each weight is placed in `[-φ'(f; -e_i), φ'(f; e_i)]`: the midpoint where
/// the interval is a point up to round-off, otherwise the lower end. The
/// total mass is then brought into `[-φ'(f; -1), φ'(f; 1)]`, first by raising
/// kink coordinates toward their upper ends (steepest upper derivative
/// first, ties by index), then by rescaling. At ties of the sup functional
/// this selects the Dirac measure at the lowest maximizing index.
pub fn subgradient(phi: &Functional, f: &Func) -> Result<Measure> {
    let mut rng = rng_for(0, "subgradient-probe");
    let probe = DomainProbe::standard(f.space(), &mut rng);
    subgradient_with(phi, f, &probe)
}

pub fn subgradient_with(phi: &Functional, f: &Func, probe: &DomainProbe) -> Result<Measure> {
    if !in_interior(phi, f, probe) {
        return Err(Error::Domain(
            "f is not in the algebraic interior of dom φ".into(),
        ));
    }
    let grid = probe.epsilon_grid();
    let space = f.space();
    let n = space.size();
    let mut lo = vec![0.0; n];
    let mut hi = vec![0.0; n];
    for i in 0..n {
        let e = Func::unit(space, i)?;
        hi[i] = directional_derivative(phi, f, &e, grid)?;
        lo[i] = -directional_derivative(phi, f, &e.scale(-1.0), grid)?;
    }
    let one = Func::constant(space, 1.0);
    let total_hi = directional_derivative(phi, f, &one, grid)?;
    let total_lo = -directional_derivative(phi, f, &one.scale(-1.0), grid)?;

    let kink: Vec<bool> = (0..n)
        .map(|i| hi[i] - lo[i] > KINK_TOL * (1.0 + hi[i].abs()))
        .collect();
    let mut w: Vec<f64> = (0..n)
        .map(|i| {
            if kink[i] {
                lo[i]
            } else {
                0.5 * (lo[i] + hi[i])
            }
        })
        .collect();

    // Raise kinks with the steepest upper derivative first, ties by index. Near-ties
    // closer than the ε floor show up as upper derivatives just below the true one.
    let mut order: Vec<usize> = (0..n).filter(|&i| kink[i]).collect();
    order.sort_by(|&a, &b| hi[b].total_cmp(&hi[a]));
    let mut budget = total_lo - w.iter().sum::<f64>();
    for i in order {
        if budget <= 0.0 {
            break;
        }
        let raise = (hi[i] - w[i]).min(budget);
        w[i] += raise;
        budget -= raise;
    }
    let s: f64 = w.iter().sum();
    let target = s.clamp(total_lo.min(total_hi), total_hi.max(total_lo));
    if s > 0.0 && (target - s).abs() > KINK_TOL * target.abs().max(1.0) {
        for v in &mut w {
            *v *= target / s;
        }
    }
    Measure::from_rounded(space, w)
}

#[derive(Debug, Clone, Serialize)]
pub struct RepresentationReport {
    /// `φ(f)`.
    pub lhs: ExtReal,
    /// `⟨f, μ̂⟩ - φ*(μ̂)`.
    pub rhs: ExtReal,
    /// `φ(f) + φ*(μ̂) - ⟨f, μ̂⟩`.
    pub gap: f64,
    pub witness: Measure,
    pub conjugate_at_witness: ExtReal,
    pub conjugate_method: ConjugateMethod,
    pub fenchel_young_violations: usize,
    pub certified: bool,
}

#[derive(Debug, Clone)]
pub struct MaxRepOptions {
    /// Certification threshold on `|gap|`.
    pub tol: f64,
    /// Slack allowed in each Fenchel–Young comparison.
    pub fy_tol: f64,
    /// Random measures (and as many random functions) tested against Fenchel–Young.
    pub fy_samples: usize,
    pub seed: u64,
    pub ascent: AscentConfig,
}

impl Default for MaxRepOptions {
    fn default() -> Self {
        MaxRepOptions {
            tol: 1e-6,
            fy_tol: 1e-9,
            fy_samples: 1000,
            seed: 0,
            ascent: AscentConfig::default(),
        }
    }
}

/// Random dual points: probability measures, small arbitrary measures,
/// rescaled probability measures, and subgradients of `φ` at random points.
pub fn sample_dual_point(phi: &Functional, rng: &mut CaseRng) -> Measure {
    let space = phi.space();
    match rng.random_range(0..4) {
        0 => random_probability(space, rng),
        1 => random_measure(space, rng, 0.5),
        2 => random_probability(space, rng)
            .scale(rng.random_range(0.5..2.0))
            .expect("nonnegative"),
        _ => {
            let g = random_func(space, rng, -3.0, -1.0);
            match phi.subgrad(g.values()) {
                Some(w) => Measure::from_rounded(space, w).expect("finite"),
                None => random_probability(space, rng),
            }
        }
    }
}

/// Certifies `φ(f) = ⟨f, μ̂⟩ - φ*(μ̂)` for the extracted subgradient `μ̂` and
/// counts Fenchel–Young violations `⟨g, μ⟩ > φ(g) + φ*(μ) + fy_tol` over
/// random `(f, μ)` and `(g, μ̂)` pairs.
pub fn verify_maxrep(
    phi: &Functional,
    f: &Func,
    opts: &MaxRepOptions,
) -> Result<RepresentationReport> {
    let witness = subgradient(phi, f)?;
    verify_witness(phi, f, witness, opts)
}

/// [`verify_maxrep`] for a caller-supplied candidate measure.
pub fn verify_witness(
    phi: &Functional,
    f: &Func,
    witness: Measure,
    opts: &MaxRepOptions,
) -> Result<RepresentationReport> {
    let lhs = phi.evaluate(f)?;
    let phi_f = lhs
        .finite()
        .ok_or_else(|| Error::Domain("φ(f) = +∞".into()))?;
    let (conj, method) = conjugate_value(phi, &witness, &opts.ascent)?;
    let Some(conj_v) = conj.finite() else {
        return Err(Error::Certification(format!(
            "conjugate diverges at the witness (mass {})",
            witness.total_mass()
        )));
    };
    let paired = pairing(f, &witness)?;
    // `+ 0.0` turns a signed zero into a plain zero.
    let rhs = paired - conj_v + 0.0;
    let gap = phi_f + conj_v - paired;

    let mut rng = rng_for(opts.seed, "fenchel-young");
    let mut violations = 0;
    for _ in 0..opts.fy_samples {
        let mu = sample_dual_point(phi, &mut rng);
        let (c, _) = conjugate_value(phi, &mu, &opts.ascent)?;
        if ExtReal::of(pairing(f, &mu)?) > lhs + c + opts.fy_tol {
            violations += 1;
        }
        let g = random_func(f.space(), &mut rng, -3.0, 1.0);
        if ExtReal::of(pairing(&g, &witness)?) > phi.evaluate(&g)? + conj + opts.fy_tol {
            violations += 1;
        }
    }
    Ok(RepresentationReport {
        lhs,
        rhs: ExtReal::of(rhs),
        gap,
        witness,
        conjugate_at_witness: conj,
        conjugate_method: method,
        fenchel_young_violations: violations,
        certified: gap.abs() <= opts.tol && violations == 0,
    })
}

/// `max_k ⟨f, μ_k⟩ - φ*(μ_k)` over the samples; a lower bound on `φ(f)`.
/// Returns `-∞` if every sample has `φ*(μ_k) = +∞`.
pub fn dual_value_grid(
    phi: &Functional,
    f: &Func,
    samples: &[Measure],
    cfg: &AscentConfig,
) -> Result<f64> {
    if samples.is_empty() {
        return Err(usage("dual grid needs at least one measure"));
    }
    let mut best = f64::NEG_INFINITY;
    for mu in samples {
        if let (ExtReal::Finite(c), _) = conjugate_value(phi, mu, cfg)? {
            best = best.max(pairing(f, mu)? - c);
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, Serialize)]
pub struct MassCheck {
    pub mass: f64,
    pub passed: bool,
}

/// For translation-invariant `φ`, checks that the maximizing measure at `f`
/// is a probability measure.
pub fn probability_mass_check(phi: &Functional, f: &Func, tol: f64) -> Result<MassCheck> {
    if !phi.translation_invariant() {
        return Err(usage(
            "probability-mass reduction needs a translation-invariant functional",
        ));
    }
    let witness = subgradient(phi, f)?;
    let mass = witness.total_mass();
    Ok(MassCheck {
        mass,
        passed: (mass - 1.0).abs() <= tol,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct WeakDualityStats {
    pub pairs: usize,
    pub violations: usize,
    /// Largest `⟨f, μ⟩ - φ(f) - φ*(μ)` seen (only finite comparisons).
    pub max_excess: f64,
}

/// Checks `⟨f, μ⟩ ≤ φ(f) + φ*(μ)` on `measures × funcs_per_measure` random pairs.
pub fn weak_duality_check(
    phi: &Functional,
    rng: &mut CaseRng,
    measures: usize,
    funcs_per_measure: usize,
    tol: f64,
    cfg: &AscentConfig,
) -> Result<WeakDualityStats> {
    let space = phi.space().clone();
    let mut stats = WeakDualityStats {
        pairs: 0,
        violations: 0,
        max_excess: f64::NEG_INFINITY,
    };
    for _ in 0..measures {
        let mu = sample_dual_point(phi, rng);
        let (conj, _) = conjugate_value(phi, &mu, cfg)?;
        for _ in 0..funcs_per_measure {
            let f = random_func(&space, rng, -3.0, 1.0);
            let val = phi.evaluate(&f)?;
            stats.pairs += 1;
            if let (Some(a), Some(b)) = (val.finite(), conj.finite()) {
                let excess = pairing(&f, &mu)? - a - b;
                stats.max_excess = stats.max_excess.max(excess);
                if excess > tol {
                    stats.violations += 1;
                }
            }
        }
    }
    Ok(stats)
}
