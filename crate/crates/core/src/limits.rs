//! Monotone-continuity conditions, mass escape along truncation ladders,
//! tightness, regularity of measures, and step-function approximation.
//!
//! Everything here is evaluated at a finite rank. A condition "passes" when
//! no counterexample shows up on the sequences that were tried, which is a
//! refutation test, not a proof.

use std::fmt;
use std::sync::Arc;

use rand::Rng;
use serde::Serialize;

use crate::duality::{dual_value_grid, sample_dual_point, verify_maxrep, MaxRepOptions};
use crate::error::{usage, Error, Result};
use crate::ext_real::ExtReal;
use crate::functional::{default_epsilon_grid, in_interior, DomainProbe, Functional};
use crate::sampling::{random_func, random_subset, rng_for, CaseRng};
use crate::space::{pairing, Func, Measure, SpaceRef};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// `f^n ↓ f`: non-increasing, each term `≥ f`.
    Down,
    /// `f^n ↑ f`: non-decreasing, each term `≤ f`.
    Up,
}

type TermFn = dyn Fn(usize) -> Func + Send + Sync;

/// A sequence `f^1, f^2, ...` converging monotonically to `target`.
#[derive(Clone)]
pub struct MonotoneSequence {
    target: Func,
    direction: Direction,
    label: String,
    terms: Arc<TermFn>,
}

impl fmt::Debug for MonotoneSequence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("MonotoneSequence")
            .field("label", &self.label)
            .field("direction", &self.direction)
            .field("target", &self.target.values())
            .finish()
    }
}

/// Scalar rate `r_n ↓ 0` used to build sequences `f ± r_n h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case", tag = "rate")]
pub enum Rate {
    /// `c / n`.
    Harmonic { c: f64 },
    /// `c · q^n`.
    Geometric { c: f64, q: f64 },
    /// `c (rank - n) / rank` for `n < rank`, then exactly zero.
    Truncated { c: f64, rank: usize },
}

impl Rate {
    pub fn at(&self, n: usize) -> f64 {
        let n = n.max(1);
        match *self {
            Rate::Harmonic { c } => c / n as f64,
            Rate::Geometric { c, q } => c * q.powi(n as i32),
            Rate::Truncated { c, rank } => {
                if n >= rank {
                    0.0
                } else {
                    c * (rank - n) as f64 / rank as f64
                }
            }
        }
    }
}

impl MonotoneSequence {
    /// A sequence from an arbitrary term generator (`n ≥ 1`).
    pub fn new(
        target: Func,
        direction: Direction,
        label: impl Into<String>,
        terms: impl Fn(usize) -> Func + Send + Sync + 'static,
    ) -> MonotoneSequence {
        MonotoneSequence {
            target,
            direction,
            label: label.into(),
            terms: Arc::new(terms),
        }
    }

    /// `f^n = target + r_n h` (down) or `target - r_n h` (up), `h ≥ 0`.
    pub fn along(
        target: Func,
        direction: Direction,
        h: Func,
        rate: Rate,
    ) -> Result<MonotoneSequence> {
        if h.values().iter().any(|&v| v < 0.0) {
            return Err(usage("perturbation direction must be nonnegative"));
        }
        if h.space() != target.space() {
            return Err(Error::SpaceMismatch {
                left: target.len(),
                right: h.len(),
            });
        }
        let sign = match direction {
            Direction::Down => 1.0,
            Direction::Up => -1.0,
        };
        let t = target.clone();
        let label = format!("{direction:?} {rate:?}").to_lowercase();
        Ok(MonotoneSequence::new(target, direction, label, move |n| {
            t.axpy(sign * rate.at(n), &h).expect("same space")
        }))
    }

    pub fn target(&self) -> &Func {
        &self.target
    }

    pub fn direction(&self) -> Direction {
        self.direction
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn term(&self, n: usize) -> Func {
        (self.terms)(n)
    }

    /// `f^n - f`, a sequence in `X^+` decreasing to zero for down sequences.
    pub fn increments(&self) -> MonotoneSequence {
        let me = self.clone();
        let zero = Func::zero(self.target.space());
        MonotoneSequence::new(
            zero,
            self.direction,
            format!("{} increments", self.label),
            move |n| me.term(n).sub(&me.target).expect("same space"),
        )
    }

    /// Checks monotonicity and the bound by the target up to `rank`.
    pub fn validate(&self, rank: usize) -> Result<()> {
        let mut prev: Option<Func> = None;
        for n in 1..=rank {
            let f = self.term(n);
            let (bounded, ordered) = match self.direction {
                Direction::Down => (
                    self.target.le(&f)?,
                    prev.as_ref().map_or(Ok(true), |p| f.le(p))?,
                ),
                Direction::Up => (
                    f.le(&self.target)?,
                    prev.as_ref().map_or(Ok(true), |p| p.le(&f))?,
                ),
            };
            if !bounded || !ordered {
                return Err(usage(format!(
                    "sequence '{}' is not monotone toward its target at rank {n}",
                    self.label
                )));
            }
            prev = Some(f);
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionId {
    I,
    Ii,
    Iii,
    V,
    Vi,
    Tightness,
}

impl fmt::Display for ConditionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ConditionId::I => "i",
            ConditionId::Ii => "ii",
            ConditionId::Iii => "iii",
            ConditionId::V => "v",
            ConditionId::Vi => "vi",
            ConditionId::Tightness => "tightness",
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ConditionVerdict {
    pub condition_id: ConditionId,
    pub passed: bool,
    pub witness_epsilon: Option<f64>,
    pub trace: Vec<ExtReal>,
    /// Value the trace should converge to.
    pub limit: ExtReal,
    pub note: String,
}

#[derive(Debug, Clone)]
pub struct ConditionOptions {
    /// Number of sequence terms evaluated.
    pub rank: usize,
    /// Tolerance for monotonicity and convergence.
    pub tol: f64,
    pub epsilon_grid: Vec<f64>,
    /// Interior sample size for condition (i).
    pub interior_samples: usize,
    pub seed: u64,
    /// Options for the (v) check, which goes through the duality module.
    pub maxrep: MaxRepOptions,
    /// Random dual points tried for (v) in addition to the subgradient witness.
    pub dual_samples: usize,
}

impl Default for ConditionOptions {
    fn default() -> Self {
        ConditionOptions {
            rank: 64,
            tol: 1e-8,
            epsilon_grid: default_epsilon_grid(),
            interior_samples: 16,
            seed: 0,
            maxrep: MaxRepOptions {
                fy_samples: 25,
                ..MaxRepOptions::default()
            },
            dual_samples: 64,
        }
    }
}

fn probe(space: &SpaceRef, seed: u64) -> DomainProbe {
    DomainProbe::standard(space, &mut rng_for(seed, "condition-probe"))
}

/// Desk-scale convergence of a trace to `limit` at finite rank.
///
/// The trace must be monotone in the demanded direction (within `tol`) and
/// finite at the last rank, and the remaining gap must fit inside the monotone
/// envelope `[φ(f - d), φ(f + d)]` with `d` the sup-distance of the last term
/// to the target. A trace that is still `+∞` at the last rank fails.
fn converges(
    phi: &Functional,
    target: &Func,
    trace: &[ExtReal],
    limit: f64,
    last_dist: f64,
    direction: Direction,
    tol: f64,
) -> (bool, String) {
    for (n, w) in trace.windows(2).enumerate() {
        let ok = match direction {
            Direction::Down => w[1] <= w[0] + tol,
            Direction::Up => w[1] + tol >= w[0],
        };
        if !ok {
            return (false, format!("trace not monotone at rank {}", n + 2));
        }
    }
    let Some(last) = trace.last().and_then(|v| v.finite()) else {
        return (false, "trace still +inf at the last rank".into());
    };
    let gap = (last - limit).abs();
    if gap <= tol {
        return (true, format!("final gap {gap:.3e}"));
    }
    let upper = phi.eval(target.shift(last_dist).values());
    let lower = phi.eval(target.shift(-last_dist).values());
    let envelope = match (upper.finite(), lower.finite()) {
        (Some(u), Some(l)) => (u - limit).max(limit - l),
        _ => f64::INFINITY,
    };
    if gap <= tol + envelope {
        (
            true,
            format!(
                "final gap {gap:.3e} within envelope {envelope:.3e} at distance {last_dist:.3e}"
            ),
        )
    } else {
        (
            false,
            format!("final gap {gap:.3e} exceeds envelope {envelope:.3e}"),
        )
    }
}

fn trace_along(phi: &Functional, rank: usize, term: impl Fn(usize) -> Func) -> Vec<ExtReal> {
    (1..=rank).map(|n| phi.eval(term(n).values())).collect()
}

/// Checks one of the monotone-continuity conditions along `seq`.
///
/// * (i): some of `opts.interior_samples` interior points `g` satisfies
///   `φ(g + (f^n - f)) ↓ φ(g)`.
/// * (ii), (vi): `φ(f^n) → φ(f)` monotonically, for `f` in the interior.
/// * (iii): `seq` decreases to zero and `base` is interior; the first grid
///   `ε` with `base + ε f^1` interior and `φ(base + ε f^n) ↓ φ(base)` is the witness.
/// * (v): `sup_μ ⟨f, μ⟩ - φ*(μ)` over the subgradient witness and random
///   dual points reaches `φ(f)` within the certification tolerance.
pub fn check_condition(
    phi: &Functional,
    seq: &MonotoneSequence,
    id: ConditionId,
    base: Option<&Func>,
    opts: &ConditionOptions,
) -> Result<ConditionVerdict> {
    let needs = match id {
        ConditionId::I | ConditionId::Ii | ConditionId::Iii => Some(Direction::Down),
        ConditionId::Vi => Some(Direction::Up),
        ConditionId::V => None,
        ConditionId::Tightness => {
            return Err(usage("tightness is checked by tightness_check"));
        }
    };
    if let Some(d) = needs {
        if seq.direction != d {
            return Err(usage(format!("condition ({id}) needs a {d:?} sequence")));
        }
    }
    seq.validate(opts.rank)?;
    let target = seq.target();
    let pr = probe(target.space(), opts.seed);

    let interior_value = |f: &Func| -> Result<f64> {
        let v = phi
            .evaluate(f)?
            .finite()
            .ok_or_else(|| Error::Domain("φ = +∞ at the target".into()))?;
        if !in_interior(phi, f, &pr) {
            return Err(Error::Domain(
                "target is not in the algebraic interior".into(),
            ));
        }
        Ok(v)
    };

    match id {
        ConditionId::Ii | ConditionId::Vi => {
            let limit = interior_value(target)?;
            let trace = trace_along(phi, opts.rank, |n| seq.term(n));
            let dist = seq.term(opts.rank).sup_dist(target)?;
            let (passed, note) =
                converges(phi, target, &trace, limit, dist, seq.direction, opts.tol);
            Ok(ConditionVerdict {
                condition_id: id,
                passed,
                witness_epsilon: None,
                trace,
                limit: ExtReal::of(limit),
                note,
            })
        }
        ConditionId::Iii => {
            let base = base.ok_or_else(|| usage("condition (iii) needs a base point"))?;
            if target.values().iter().any(|&v| v != 0.0) {
                return Err(usage("condition (iii) needs a sequence decreasing to zero"));
            }
            let limit = interior_value(base)?;
            let first = seq.term(1);
            let mut last_trace = Vec::new();
            let mut last_note = "no grid step keeps base + ε f^1 in the interior".to_string();
            for &eps in &opts.epsilon_grid {
                if !in_interior(phi, &base.axpy(eps, &first)?, &pr) {
                    continue;
                }
                let trace = trace_along(phi, opts.rank, |n| {
                    base.axpy(eps, &seq.term(n)).expect("same space")
                });
                let dist = eps * seq.term(opts.rank).max().abs();
                let (passed, note) =
                    converges(phi, base, &trace, limit, dist, Direction::Down, opts.tol);
                if passed {
                    return Ok(ConditionVerdict {
                        condition_id: id,
                        passed,
                        witness_epsilon: Some(eps),
                        trace,
                        limit: ExtReal::of(limit),
                        note,
                    });
                }
                last_trace = trace;
                last_note = note;
            }
            Ok(ConditionVerdict {
                condition_id: id,
                passed: false,
                witness_epsilon: None,
                trace: last_trace,
                limit: ExtReal::of(limit),
                note: last_note,
            })
        }
        ConditionId::I => {
            let mut rng = rng_for(opts.seed, "condition-i");
            let inc = seq.increments();
            let space = target.space();
            let mut candidates = vec![target.clone()];
            while candidates.len() < opts.interior_samples {
                candidates.push(target.add(&random_func(space, &mut rng, -2.0, 0.0))?);
            }
            let mut last = (
                Vec::new(),
                ExtReal::ZERO,
                String::from("no interior sample"),
            );
            for g in candidates {
                let Some(limit) = phi.evaluate(&g)?.finite() else {
                    continue;
                };
                if !in_interior(phi, &g, &pr) {
                    continue;
                }
                let trace =
                    trace_along(phi, opts.rank, |n| g.add(&inc.term(n)).expect("same space"));
                let dist = inc.term(opts.rank).max().abs();
                let (passed, note) =
                    converges(phi, &g, &trace, limit, dist, Direction::Down, opts.tol);
                if passed {
                    return Ok(ConditionVerdict {
                        condition_id: id,
                        passed,
                        witness_epsilon: None,
                        trace,
                        limit: ExtReal::of(limit),
                        note: format!("{note}; base point {:?}", g.values()),
                    });
                }
                last = (trace, ExtReal::of(limit), note);
            }
            Ok(ConditionVerdict {
                condition_id: id,
                passed: false,
                witness_epsilon: None,
                trace: last.0,
                limit: last.1,
                note: last.2,
            })
        }
        ConditionId::V => {
            let limit = interior_value(target)?;
            let maxrep = MaxRepOptions {
                seed: opts.seed,
                ..opts.maxrep.clone()
            };
            let report = verify_maxrep(phi, target, &maxrep)?;
            let mut rng = rng_for(opts.seed, "condition-v");
            let samples: Vec<Measure> = (0..opts.dual_samples)
                .map(|_| sample_dual_point(phi, &mut rng))
                .collect();
            let grid = dual_value_grid(phi, target, &samples, &maxrep.ascent)?;
            let best = report.rhs.to_f64().max(grid);
            let passed = best >= limit - maxrep.tol && best <= limit + maxrep.tol;
            Ok(ConditionVerdict {
                condition_id: id,
                passed,
                witness_epsilon: None,
                trace: ExtReal::from_f64(grid)
                    .into_iter()
                    .chain([report.rhs])
                    .collect(),
                limit: ExtReal::of(limit),
                note: format!("dual sup {best} vs φ(f) {limit}"),
            })
        }
        ConditionId::Tightness => unreachable!(),
    }
}

/// A mixed batch of monotone sequences with interior-friendly targets in `[-3, -1]^n`.
pub fn generate_sequences(
    space: &SpaceRef,
    rng: &mut CaseRng,
    count: usize,
) -> Vec<MonotoneSequence> {
    (0..count)
        .map(|k| {
            let target = random_func(space, rng, -3.0, -1.0);
            let h = random_func(space, rng, 0.0, 1.0);
            let rate = match k % 3 {
                0 => Rate::Harmonic {
                    c: rng.random_range(0.1..1.0),
                },
                1 => Rate::Geometric {
                    c: 1.0,
                    q: rng.random_range(0.3..0.8),
                },
                _ => Rate::Truncated {
                    c: rng.random_range(0.1..1.0),
                    rank: rng.random_range(2..32),
                },
            };
            let dir = if k % 2 == 0 {
                Direction::Down
            } else {
                Direction::Up
            };
            MonotoneSequence::along(target, dir, h, rate).expect("valid")
        })
        .collect()
}

/// The sequence `f ≡ -1/64`, `f^n = f + (2/n) 1`: for the indicator functional
/// every term up to rank 127 lies outside the domain.
pub fn indicator_counterexample(space: &SpaceRef) -> MonotoneSequence {
    let target = Func::constant(space, -1.0 / 64.0);
    MonotoneSequence::along(
        target,
        Direction::Down,
        Func::constant(space, 1.0),
        Rate::Harmonic { c: 2.0 },
    )
    .expect("valid")
}

#[derive(Debug, Clone, Serialize)]
pub struct ImplicationAudit {
    /// Aggregated verdict per condition: passed on every sequence tried.
    pub passed: Vec<(ConditionId, bool)>,
    pub sequences: usize,
    /// Failing `(condition, sequence label)` pairs.
    pub failures: Vec<(ConditionId, String)>,
    /// Chain links `(stronger, weaker)` where the stronger passed and the weaker failed.
    pub violations: Vec<(ConditionId, ConditionId)>,
    /// The first recorded trace on which (ii) failed, if any.
    pub ii_failure_trace: Option<Vec<ExtReal>>,
}

impl ImplicationAudit {
    pub fn passes(&self, id: ConditionId) -> Option<bool> {
        self.passed.iter().find(|(c, _)| *c == id).map(|(_, p)| *p)
    }
}

/// Runs (ii), (iii), (v), (vi) over the given sequences and reports any link
/// of the chain (ii) ⇒ (iii) ⇒ (v) ⇒ (vi) that is contradicted.
///
/// Down sequences feed (ii) at their target and (iii) with their increments
/// and the target as base point; up sequences feed (vi); every target feeds (v).
pub fn audit_implications(
    phi: &Functional,
    sequences: &[MonotoneSequence],
    opts: &ConditionOptions,
) -> Result<ImplicationAudit> {
    let chain = [
        ConditionId::Ii,
        ConditionId::Iii,
        ConditionId::V,
        ConditionId::Vi,
    ];
    let mut ok = [true; 4];
    let mut failures = Vec::new();
    let mut ii_trace = None;
    let mut record = |slot: usize, v: &ConditionVerdict, label: &str, failures: &mut Vec<_>| {
        if !v.passed {
            ok[slot] = false;
            failures.push((chain[slot], label.to_string()));
        }
    };
    for (k, seq) in sequences.iter().enumerate() {
        let mut o = opts.clone();
        o.seed = crate::sampling::derive_seed(opts.seed, &format!("audit-{k}"));
        match seq.direction() {
            Direction::Down => {
                let v = check_condition(phi, seq, ConditionId::Ii, None, &o)?;
                if !v.passed && ii_trace.is_none() {
                    ii_trace = Some(v.trace.clone());
                }
                record(0, &v, seq.label(), &mut failures);
                let v = check_condition(
                    phi,
                    &seq.increments(),
                    ConditionId::Iii,
                    Some(seq.target()),
                    &o,
                )?;
                record(1, &v, seq.label(), &mut failures);
            }
            Direction::Up => {
                let v = check_condition(phi, seq, ConditionId::Vi, None, &o)?;
                record(3, &v, seq.label(), &mut failures);
            }
        }
        // (v) on a subset of targets keeps the audit cheap for numerical conjugates.
        if k % 4 == 0 {
            let v = check_condition(phi, seq, ConditionId::V, None, &o)?;
            record(2, &v, seq.label(), &mut failures);
        }
    }
    let mut violations = Vec::new();
    for a in 0..4 {
        for b in a + 1..4 {
            if ok[a] && !ok[b] {
                violations.push((chain[a], chain[b]));
            }
        }
    }
    Ok(ImplicationAudit {
        passed: chain.iter().copied().zip(ok).collect(),
        sequences: sequences.len(),
        failures,
        violations,
        ii_failure_trace: ii_trace,
    })
}

/// Per-rung maximizers of the sup functional for an increasing profile and
/// the resulting prefix masses `M[k][n] = μ_k({0..n})`.
#[derive(Debug, Clone, Serialize)]
pub struct EscapeDiagnostic {
    pub rung_sizes: Vec<usize>,
    pub per_rung_witness: Vec<Measure>,
    /// Index of the witness Dirac on each rung, `None` if the witness is not a Dirac.
    pub witness_dirac_index: Vec<Option<usize>>,
    /// Whether every rung's witness is the Dirac at the lowest argmax of the profile.
    pub witnesses_at_argmax: bool,
    /// Whether every rung's representation was certified.
    pub certified: bool,
    /// Row `k` has `rung_sizes[k]` entries: `M[k][n-1] = μ_k({0..n})`.
    pub mass_on_prefix: Vec<Vec<f64>>,
    /// `s(f) - ⟨f, uniform⟩` on each rung: the shortfall of the uniform dual point.
    pub uniform_gap: Vec<f64>,
    pub escape_detected: bool,
    pub label: &'static str,
}

fn prefix_masses(mu: &Measure) -> Vec<f64> {
    let mut acc = 0.0;
    mu.weights()
        .iter()
        .map(|w| {
            acc += w;
            acc
        })
        .collect()
}

/// `f(m) = 1 - 1/m`: increasing, bounded, never attains its supremum.
pub fn reciprocal_profile(m: usize) -> f64 {
    1.0 - 1.0 / m as f64
}

/// [`reciprocal_profile`] frozen from `cap` on, so it attains its maximum at `m = cap`.
pub fn capped_profile(cap: usize) -> impl Fn(usize) -> f64 + Copy {
    move |m| reciprocal_profile(m.min(cap))
}

/// Runs the sup-functional max-representation on every rung for the given
/// non-decreasing profile `m ↦ f(m)` and tracks where the maximizing mass sits.
pub fn mass_escape_diagnostic(
    profile: impl Fn(usize) -> f64,
    ladder: &[SpaceRef],
    opts: &MaxRepOptions,
) -> Result<EscapeDiagnostic> {
    let top = ladder.last().ok_or_else(|| usage("empty ladder"))?;
    let top_f = Func::from_profile(top, &profile)?;
    if top_f.values().windows(2).any(|w| w[1] < w[0]) {
        return Err(usage("profile must be non-decreasing"));
    }
    let mut diag = EscapeDiagnostic {
        rung_sizes: Vec::new(),
        per_rung_witness: Vec::new(),
        witness_dirac_index: Vec::new(),
        witnesses_at_argmax: true,
        certified: true,
        mass_on_prefix: Vec::new(),
        uniform_gap: Vec::new(),
        escape_detected: false,
        label: "escape stand-in",
    };
    for rung in ladder {
        let f = Func::from_profile(rung, &profile)?;
        let sup = Functional::sup(rung);
        let report = verify_maxrep(&sup, &f, opts)?;
        let w = report.witness;
        let dirac = {
            let nz: Vec<usize> = (0..w.weights().len())
                .filter(|&i| w.weights()[i] != 0.0)
                .collect();
            (nz.len() == 1 && w.weights()[nz[0]] == 1.0).then(|| nz[0])
        };
        diag.witnesses_at_argmax &= dirac == Some(f.argmax());
        diag.certified &= report.certified;
        let uniform = Measure::uniform(rung);
        diag.uniform_gap.push(f.max() - pairing(&f, &uniform)?);
        diag.rung_sizes.push(rung.size());
        diag.mass_on_prefix.push(prefix_masses(&w));
        diag.witness_dirac_index.push(dirac);
        diag.per_rung_witness.push(w);
    }
    diag.escape_detected = escape_on_top(diag.mass_on_prefix.last().expect("nonempty"), 0.0);
    Ok(diag)
}

/// Mass one on the rung but none of it on any prefix of at most half the rung.
fn escape_on_top(row: &[f64], tol: f64) -> bool {
    let k = row.len();
    let total = row.last().copied().unwrap_or(0.0);
    total > tol && row[..(k / 2).max(1)].iter().all(|&m| m <= tol)
}

/// Result of the ladder-level regularity check.
#[derive(Debug, Clone, Serialize)]
pub struct LadderRegularity {
    /// `M[k][j] = μ_k(K_{n_j})` for the ladder sizes `n_j ≤ rung k`.
    pub prefix_mass: Vec<Vec<f64>>,
    pub escape_detected: bool,
}

/// For one measure per rung, tracks the mass on the fixed prefixes given by
/// the smaller rung sizes. Escape: on the top rung nothing sits on any prefix
/// of at most half its size while the total mass stays positive.
pub fn ladder_regularity(measures: &[Measure], tol: f64) -> Result<LadderRegularity> {
    let top = measures
        .last()
        .ok_or_else(|| usage("empty measure ladder"))?;
    let sizes: Vec<usize> = measures.iter().map(|m| m.space().size()).collect();
    let prefix_mass = measures
        .iter()
        .map(|mu| {
            sizes
                .iter()
                .filter(|&&n| n <= mu.space().size())
                .map(|&n| mu.prefix_mass(n))
                .collect()
        })
        .collect();
    Ok(LadderRegularity {
        prefix_mass,
        escape_detected: escape_on_top(&prefix_masses(top), tol),
    })
}

/// `φ(M 1_{K^c})` along the prefixes given by the ladder sizes smaller than
/// the functional's space; passes iff the trace is non-increasing and ends
/// within `tol` of `φ(0)`.
pub fn tightness_check(
    phi: &Functional,
    level: f64,
    ladder: &[SpaceRef],
    tol: f64,
) -> Result<ConditionVerdict> {
    if level.is_nan() || level < 1.0 {
        return Err(usage("tightness level M must be at least 1"));
    }
    let space = phi.space();
    let at_zero = phi
        .evaluate(&Func::zero(space))?
        .finite()
        .ok_or_else(|| Error::Domain("φ(0) = +∞".into()))?;
    let prefixes: Vec<usize> = ladder
        .iter()
        .map(|s| s.size())
        .filter(|&n| n < space.size())
        .collect();
    if prefixes.is_empty() {
        return Err(usage(
            "no ladder rung is a proper prefix of the functional's space",
        ));
    }
    let trace: Vec<ExtReal> = prefixes
        .iter()
        .map(|&n| phi.eval(Func::off_prefix(space, n, level).values()))
        .collect();
    let monotone = trace.windows(2).all(|w| w[1] <= w[0] + tol);
    let last = *trace.last().expect("nonempty");
    let reached = last.finite().is_some_and(|v| (v - at_zero).abs() <= tol);
    Ok(ConditionVerdict {
        condition_id: ConditionId::Tightness,
        passed: monotone && reached,
        witness_epsilon: None,
        note: format!("M = {level}, prefixes {:?}, φ(0) = {at_zero}", prefixes),
        trace,
        limit: ExtReal::of(at_zero),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct RegularityReport {
    pub regular: bool,
    pub total_mass: f64,
    pub best_prefix_mass: f64,
    /// Inner approximation held for every sampled subset.
    pub inner_ok: bool,
    /// Largest `μ(A) - sup_n μ(A ∩ K_n)` over the sampled subsets.
    pub worst_inner_defect: f64,
    pub subsets_checked: usize,
}

/// Inner regularity through the space's compact family:
/// `sup_n μ(K_n) ≥ μ(Ω) - tol` and, for `subsets` random sets `A`,
/// `sup_n μ(A ∩ K_n) ≥ μ(A) - tol`.
pub fn check_regular(
    mu: &Measure,
    tol: f64,
    subsets: usize,
    rng: &mut impl Rng,
) -> RegularityReport {
    let family = mu.space().compact_family();
    let total = mu.total_mass();
    let best = family
        .iter()
        .map(|&m| mu.prefix_mass(m))
        .fold(0.0, f64::max);
    let n = mu.space().size();
    let mut worst: f64 = 0.0;
    for _ in 0..subsets {
        let a = random_subset(n, rng);
        let mass = mu.mass_of(&a);
        let inner = family
            .iter()
            .map(|&m| {
                let inside: Vec<usize> = a.iter().copied().filter(|&i| i < m).collect();
                mu.mass_of(&inside)
            })
            .fold(0.0, f64::max);
        worst = worst.max(mass - inner);
    }
    RegularityReport {
        regular: best >= total - tol && worst <= tol,
        total_mass: total,
        best_prefix_mass: best,
        inner_ok: worst <= tol,
        worst_inner_defect: worst,
        subsets_checked: subsets,
    }
}

/// A step function `g = Σ a_m 1_{A_m}` with `g ≤ f ≤ g + δ`.
#[derive(Debug, Clone, Serialize)]
pub struct StepApproximation {
    /// Levels of the nonempty cells, increasing.
    pub levels: Vec<f64>,
    /// Cell `A_m` for each level.
    pub partition: Vec<Vec<usize>>,
    pub g: Func,
    /// Number of candidate levels `⌈(max f - min f)/δ⌉ + 1`.
    pub level_bound: usize,
}

/// Partitions the range of `f` into cells `[a_m, a_m + δ)` starting at `min f`.
///
/// Levels are accumulated as `a_{m+1} = a_m + δ` in floating point, so
/// `f_i < a_{m+1} = g_i + δ` holds exactly as computed.
pub fn step_approximation(f: &Func, delta: f64) -> Result<StepApproximation> {
    if !(delta > 0.0 && delta.is_finite()) {
        return Err(usage("delta must be positive"));
    }
    let lo = f.min();
    let hi = f.max();
    let level_bound = ((hi - lo) / delta).ceil() as usize + 1;
    let mut order: Vec<usize> = (0..f.len()).collect();
    order.sort_by(|&a, &b| f.values()[a].total_cmp(&f.values()[b]));

    let mut levels = Vec::new();
    let mut partition: Vec<Vec<usize>> = Vec::new();
    let mut g = vec![0.0; f.len()];
    let mut a = lo;
    let mut next = a + delta;
    let mut k = 0;
    while k < order.len() {
        let v = f.values()[order[k]];
        if v < next {
            if levels.last() != Some(&a) {
                levels.push(a);
                partition.push(Vec::new());
            }
            g[order[k]] = a;
            partition.last_mut().expect("pushed").push(order[k]);
            k += 1;
        } else {
            a = next;
            next = a + delta;
        }
    }
    for cell in &mut partition {
        cell.sort_unstable();
    }
    Ok(StepApproximation {
        levels,
        partition,
        g: Func::new(f.space(), g)?,
        level_bound,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct StepInequalityCheck {
    /// `⟨f, μ⟩`.
    pub lhs: f64,
    /// `⟨h, μ⟩ + δ (⟨1, μ⟩ + 1)`.
    pub rhs: f64,
    pub holds: bool,
}

/// `⟨f, μ⟩ ≤ ⟨h, μ⟩ + δ(⟨1, μ⟩ + 1)` with `h` the step approximation of `f`.
/// Every set of a finite space is closed, so the closed inner cells coincide
/// with the cells themselves.
pub fn step_inequality_check(f: &Func, mu: &Measure, delta: f64) -> Result<StepInequalityCheck> {
    let step = step_approximation(f, delta)?;
    let lhs = pairing(f, mu)?;
    let rhs = pairing(&step.g, mu)? + delta * (mu.total_mass() + 1.0);
    Ok(StepInequalityCheck {
        lhs,
        rhs,
        holds: lhs <= rhs,
    })
}

/// Step approximations of `f` for each `δ`.
pub fn step_family(f: &Func, deltas: &[f64]) -> Result<Vec<Func>> {
    deltas
        .iter()
        .map(|&d| step_approximation(f, d).map(|s| s.g))
        .collect()
}

/// `max { φ(g) : g ∈ family, g ≤ f }`.
pub fn lower_regularization(phi: &Functional, f: &Func, family: &[Func]) -> Result<ExtReal> {
    let mut best: Option<ExtReal> = None;
    for g in family {
        if g.le(f)? {
            let v = phi.evaluate(g)?;
            best = Some(best.map_or(v, |b| b.max(v)));
        }
    }
    best.ok_or_else(|| Error::Degenerate("no test function lies below f".into()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::functional::catalog;
    use crate::sampling::{random_measure, random_probability};
    use crate::space::{geometric_schedule, make_truncation_ladder, Space};

    fn func(s: &SpaceRef, v: &[f64]) -> Func {
        Func::new(s, v.to_vec()).unwrap()
    }

    #[test]
    fn entropic_passes_ii() {
        let s = Space::new(4).unwrap();
        let mut rng = rng_for(21, "ii");
        let phi = Functional::entropic(&random_probability(&s, &mut rng)).unwrap();
        let f = random_func(&s, &mut rng, -1.0, 1.0);
        let seq = MonotoneSequence::along(
            f.clone(),
            Direction::Down,
            Func::constant(&s, 1.0),
            Rate::Harmonic { c: 1.0 },
        )
        .unwrap();
        let v = check_condition(
            &phi,
            &seq,
            ConditionId::Ii,
            None,
            &ConditionOptions::default(),
        )
        .unwrap();
        assert!(v.passed, "{}", v.note);
        let trace: Vec<f64> = v.trace.iter().map(|x| x.to_f64()).collect();
        assert!(trace.windows(2).all(|w| w[1] < w[0]));
        let base = phi.evaluate(&f).unwrap().to_f64();
        assert!((trace[63] - base - 1.0 / 64.0).abs() < 1e-12);
    }

    #[test]
    fn indicator_passes_iii_with_half() {
        let s = Space::new(3).unwrap();
        let p = Functional::indicator_p(&s);
        let zero_seq = MonotoneSequence::along(
            Func::zero(&s),
            Direction::Down,
            Func::constant(&s, 1.0),
            Rate::Harmonic { c: 1.0 },
        )
        .unwrap();
        let base = Func::constant(&s, -1.0);
        let v = check_condition(
            &p,
            &zero_seq,
            ConditionId::Iii,
            Some(&base),
            &ConditionOptions::default(),
        )
        .unwrap();
        assert!(v.passed);
        assert_eq!(v.witness_epsilon, Some(0.5));
        assert!(v.trace.iter().all(|&x| x == ExtReal::ZERO));
    }

    #[test]
    fn indicator_fails_ii_on_counterexample() {
        let s = Space::new(3).unwrap();
        let p = Functional::indicator_p(&s);
        let seq = indicator_counterexample(&s);
        let v = check_condition(
            &p,
            &seq,
            ConditionId::Ii,
            None,
            &ConditionOptions::default(),
        )
        .unwrap();
        assert!(!v.passed);
        // 2/n > 1/64 for every n < 128.
        assert_eq!(v.trace.len(), 64);
        assert!(v.trace.iter().all(|x| x.is_infinite()));
        assert_eq!(v.limit, ExtReal::ZERO);
        // At rank 128 and beyond the terms are back in the domain.
        assert_eq!(p.evaluate(&seq.term(128)).unwrap(), ExtReal::ZERO);
    }

    #[test]
    fn condition_preconditions() {
        let s = Space::new(2).unwrap();
        let p = Functional::indicator_p(&s);
        let up = MonotoneSequence::along(
            Func::constant(&s, -1.0),
            Direction::Up,
            Func::constant(&s, 1.0),
            Rate::Harmonic { c: 1.0 },
        )
        .unwrap();
        let opts = ConditionOptions::default();
        assert!(matches!(
            check_condition(&p, &up, ConditionId::Ii, None, &opts),
            Err(Error::Usage(_))
        ));
        let outside = MonotoneSequence::along(
            Func::constant(&s, 0.5),
            Direction::Down,
            Func::constant(&s, 1.0),
            Rate::Harmonic { c: 1.0 },
        )
        .unwrap();
        assert!(matches!(
            check_condition(&p, &outside, ConditionId::Ii, None, &opts),
            Err(Error::Domain(_))
        ));
        let bogus = MonotoneSequence::new(Func::zero(&s), Direction::Down, "bogus", {
            let s = s.clone();
            move |n| Func::constant(&s, if n % 2 == 0 { 1.0 } else { 0.5 })
        });
        assert!(matches!(
            check_condition(&Functional::sup(&s), &bogus, ConditionId::Ii, None, &opts),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn sup_passes_vi_and_i() {
        let s = Space::new(5).unwrap();
        let sup = Functional::sup(&s);
        let mut rng = rng_for(22, "vi");
        let opts = ConditionOptions::default();
        for seq in generate_sequences(&s, &mut rng, 10) {
            let id = match seq.direction() {
                Direction::Up => ConditionId::Vi,
                Direction::Down => ConditionId::I,
            };
            let v = check_condition(&sup, &seq, id, None, &opts).unwrap();
            assert!(v.passed, "{}: {}", seq.label(), v.note);
        }
    }

    #[test]
    fn implication_audit_catalog() {
        let s = Space::new(4).unwrap();
        let mut rng = rng_for(23, "audit");
        let mut seqs = generate_sequences(&s, &mut rng, 12);
        seqs.push(indicator_counterexample(&s));
        let opts = ConditionOptions::default();
        for phi in catalog(&s, &mut rng) {
            let audit = audit_implications(&phi, &seqs, &opts).unwrap();
            assert!(
                audit.violations.is_empty(),
                "{}: {:?}",
                phi.describe(),
                audit
            );
            if phi.kind() == crate::functional::KindTag::IndicatorP {
                assert_eq!(audit.passes(ConditionId::Ii), Some(false));
                assert_eq!(audit.passes(ConditionId::Iii), Some(true));
                assert!(audit.ii_failure_trace.is_some());
            } else {
                assert_eq!(
                    audit.passes(ConditionId::Vi),
                    Some(true),
                    "{}",
                    phi.describe()
                );
            }
        }
    }

    #[test]
    fn escape_reciprocal_profile() {
        let ladder = make_truncation_ladder(&geometric_schedule(6)).unwrap();
        let opts = MaxRepOptions {
            fy_samples: 10,
            ..MaxRepOptions::default()
        };
        let d = mass_escape_diagnostic(reciprocal_profile, &ladder, &opts).unwrap();
        for (k, rung) in ladder.iter().enumerate() {
            assert_eq!(d.witness_dirac_index[k], Some(rung.size() - 1));
            let row = &d.mass_on_prefix[k];
            assert!(row[..rung.size() - 1].iter().all(|&m| m == 0.0));
            // Uniform dual point: gap (1/k) Σ (f(k) - f(i)).
            let f = |m: usize| reciprocal_profile(m);
            let n = rung.size();
            let expect: f64 = (1..=n).map(|i| f(n) - f(i)).sum::<f64>() / n as f64;
            assert!((d.uniform_gap[k] - expect).abs() < 1e-12);
            assert!(d.uniform_gap[k] > 0.0);
        }
        assert!(d.escape_detected && d.witnesses_at_argmax && d.certified);
    }

    #[test]
    fn escape_capped_profile() {
        let ladder = make_truncation_ladder(&geometric_schedule(5)).unwrap();
        let opts = MaxRepOptions {
            fy_samples: 10,
            ..MaxRepOptions::default()
        };
        let d = mass_escape_diagnostic(capped_profile(3), &ladder, &opts).unwrap();
        assert_eq!(d.witness_dirac_index[0], Some(1));
        assert!(d.witness_dirac_index[1..].iter().all(|&i| i == Some(2)));
        assert!(!d.escape_detected);
        assert!(matches!(
            mass_escape_diagnostic(|m| -(m as f64), &ladder, &opts),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn tightness_examples() {
        let ladder = make_truncation_ladder(&geometric_schedule(10)).unwrap();
        let top = ladder.last().unwrap();
        let p = Measure::geometric(top, 0.5).unwrap();
        let ent = Functional::entropic(&p).unwrap();
        let v = tightness_check(&ent, 2.0, &ladder, 1e-6).unwrap();
        assert!(v.passed, "{v:?}");
        // Closed form log(1 + (e^2 - 1) tail(p, n)) at the first prefixes.
        for (k, &n) in [2usize, 4, 8].iter().enumerate() {
            let tail: f64 = p.weights()[n..].iter().sum();
            let expect = (1.0 + (2f64.exp() - 1.0) * tail).ln();
            assert!((v.trace[k].to_f64() - expect).abs() < 1e-12);
        }
        assert!(v.trace.last().unwrap().to_f64() < 1e-6);

        let sup = Functional::sup(top);
        let v = tightness_check(&sup, 2.0, &ladder, 1e-6).unwrap();
        assert!(!v.passed);
        assert!(v.trace.iter().all(|&x| x == ExtReal::of(2.0)));

        let lin = Functional::linear(&p);
        let v = tightness_check(&lin, 3.0, &ladder, 1e-6).unwrap();
        assert!(v.passed);
        let tail: f64 = p.weights()[4..].iter().sum();
        assert!((v.trace[1].to_f64() - 3.0 * tail).abs() < 1e-12);

        assert!(matches!(
            tightness_check(&Functional::indicator_p(top), 0.5, &ladder, 1e-6),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn tightness_trace_non_increasing_for_catalog() {
        let ladder = make_truncation_ladder(&geometric_schedule(6)).unwrap();
        let top = ladder.last().unwrap();
        let mut rng = rng_for(24, "tight");
        for phi in catalog(top, &mut rng) {
            let v = tightness_check(&phi, 1.5, &ladder, 1e-12).unwrap();
            assert!(
                v.trace.windows(2).all(|w| w[1] <= w[0]),
                "{}",
                phi.describe()
            );
        }
    }

    #[test]
    fn regularity_examples() {
        let top = Space::new(1 << 12).unwrap();
        let mut rng = rng_for(25, "reg");
        let geo = Measure::new(
            &top,
            (1..=top.size()).map(|i| 0.5f64.powi(i as i32)).collect(),
        )
        .unwrap();
        let r = check_regular(&geo, 1e-10, 32, &mut rng);
        assert!(r.regular && r.inner_ok);
        assert!(geo.total_mass() - geo.prefix_mass(10) < 1e-3);

        let d = Measure::dirac(&top, 0).unwrap();
        assert!(check_regular(&d, 1e-10, 32, &mut rng).regular);
        assert_eq!(d.prefix_mass(1), 1.0);

        let ladder = make_truncation_ladder(&geometric_schedule(8)).unwrap();
        let diracs: Vec<Measure> = ladder
            .iter()
            .map(|s| Measure::dirac(s, s.size() - 1).unwrap())
            .collect();
        let lr = ladder_regularity(&diracs, 1e-10).unwrap();
        assert!(lr.escape_detected);
        for (k, row) in lr.prefix_mass.iter().enumerate() {
            for (j, &m) in row.iter().enumerate() {
                assert_eq!(m, if j == k { 1.0 } else { 0.0 });
            }
        }
        let geos: Vec<Measure> = ladder
            .iter()
            .map(|s| Measure::geometric(s, 0.5).unwrap())
            .collect();
        assert!(!ladder_regularity(&geos, 1e-10).unwrap().escape_detected);
    }

    #[test]
    fn regularity_monotone_in_family() {
        let mut rng = rng_for(26, "fam");
        for _ in 0..50 {
            let n = 16;
            let small = Space::with_compact_family(n, vec![2, 5]).unwrap();
            let big = Space::with_compact_family(n, vec![2, 5, 9, 16]).unwrap();
            let w: Vec<f64> = random_measure(&small, &mut rng, 1.0).weights().to_vec();
            let a = Measure::new(&small, w.clone()).unwrap();
            let b = Measure::new(&big, w).unwrap();
            let seed: u64 = rng.random();
            let ra = check_regular(&a, 1e-10, 32, &mut rng_for(seed, "s"));
            let rb = check_regular(&b, 1e-10, 32, &mut rng_for(seed, "s"));
            assert!(!ra.regular || rb.regular);
            assert!(rb.regular);
        }
    }

    #[test]
    fn step_examples() {
        let s = Space::new(3).unwrap();
        let c = step_approximation(&Func::constant(&s, 2.5), 0.1).unwrap();
        assert_eq!(c.levels, vec![2.5]);
        assert_eq!(c.g.values(), &[2.5; 3]);
        assert_eq!(c.level_bound, 1);

        let f = func(&s, &[0.0, 0.3, 0.9]);
        let st = step_approximation(&f, 0.5).unwrap();
        assert_eq!(st.levels, vec![0.0, 0.5]);
        assert_eq!(st.g.values(), &[0.0, 0.0, 0.5]);
        assert_eq!(st.partition, vec![vec![0, 1], vec![2]]);
        let resid = f.sub(&st.g).unwrap();
        assert!((resid.values()[2] - 0.4).abs() < 1e-15);
        assert!(resid.values().iter().all(|&r| r <= 0.5));

        assert!(step_approximation(&f, 0.0).is_err());
        assert!(step_approximation(&f, -1.0).is_err());
    }

    #[test]
    fn step_sandwich_random() {
        let s = Space::new(100).unwrap();
        let mut rng = rng_for(27, "steps");
        for _ in 0..100 {
            let f = random_func(&s, &mut rng, -3.0, 3.0);
            let st = step_approximation(&f, 0.05).unwrap();
            for i in 0..100 {
                let (g, v) = (st.g.values()[i], f.values()[i]);
                assert!(g <= v && v <= g + 0.05);
            }
            assert!(st.levels.len() <= st.level_bound);
            let covered: usize = st.partition.iter().map(|c| c.len()).sum();
            assert_eq!(covered, 100);
        }
    }

    #[test]
    fn step_inequality_examples() {
        let s = Space::new(20).unwrap();
        let mut rng = rng_for(28, "r1");
        for _ in 0..50 {
            let f = random_func(&s, &mut rng, -2.0, 2.0);
            let mu = random_measure(&s, &mut rng, 1.0);
            let r = step_inequality_check(&f, &mu, 0.05).unwrap();
            assert!(r.holds && r.rhs - r.lhs >= 0.05 - 1e-12);
        }
        let st = Func::new(&s, (0..20).map(|i| (i % 4) as f64 * 0.5).collect()).unwrap();
        let mu = random_measure(&s, &mut rng, 1.0);
        let r = step_inequality_check(&st, &mu, 0.5).unwrap();
        let expect = 0.5 * (mu.total_mass() + 1.0);
        assert!((r.rhs - r.lhs - expect).abs() < 1e-12);
        let r = step_inequality_check(&st, &Measure::zero(&s), 0.5).unwrap();
        assert_eq!((r.lhs, r.rhs), (0.0, 0.5));
    }

    #[test]
    fn lower_regularization_examples() {
        let s = Space::new(6).unwrap();
        let mut rng = rng_for(29, "lr");
        let ent = Functional::entropic(&random_probability(&s, &mut rng)).unwrap();
        let f = random_func(&s, &mut rng, -1.0, 1.0);
        assert_eq!(
            lower_regularization(&ent, &f, std::slice::from_ref(&f)).unwrap(),
            ent.evaluate(&f).unwrap()
        );

        let deltas: Vec<f64> = (0..=10).map(|j| 0.5f64.powi(j)).collect();
        let fam = step_family(&f, &deltas).unwrap();
        let v = lower_regularization(&ent, &f, &fam).unwrap().to_f64();
        let exact = ent.evaluate(&f).unwrap().to_f64();
        assert!(v <= exact && exact - v <= 0.5f64.powi(10));
        // Larger family never lowers the value.
        let v_small = lower_regularization(&ent, &f, &fam[..3]).unwrap();
        assert!(v_small <= ExtReal::of(v));

        let p = Functional::indicator_p(&s);
        let mut g = random_func(&s, &mut rng, -1.0, 0.0).values().to_vec();
        g[2] = 0.0;
        let g = Func::new(&s, g).unwrap();
        let fam = step_family(&g, &deltas).unwrap();
        assert_eq!(lower_regularization(&p, &g, &fam).unwrap(), ExtReal::ZERO);

        assert!(matches!(
            lower_regularization(&ent, &f, &[f.shift(1.0)]),
            Err(Error::Degenerate(_))
        ));
    }
}
