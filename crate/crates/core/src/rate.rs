//! Cooperative mixed noisy-network-coding rate for one channel draw.
//!
//! Relays in `V` compress-forward, relays in `V^c` decode-forward. For
//! `S ⊆ T ⊆ V` with `S^c = T − S`:
//!
//! ```text
//! R_T(S)     = I(X X_{V^c} X_S; Ẑ_{S^c} Y | X_{S^c}) − I(Z_S; Ẑ_S | X X_{T∪V^c} Ẑ_{S^c} Y)
//! Q_T(S)     = I(X_S; Ẑ_{S^c} Y | X X_{S^c∪V^c})    − I(Z_S; Ẑ_S | X X_{T∪V^c} Ẑ_{S^c} Y)
//! R^(k)_T(S) = I(X; Ẑ_T Z_k | X_{V^c} X_T) + I(X_S; Z_k | X_{V^c∪S^c})
//!              − I(Ẑ_S; Z_S | X_{V^c∪T} Ẑ_{S^c} Z_k)
//! Q^(k)_T(S) = I(X_S; Z_k | X_{V^c∪S^c}) − I(Ẑ_S; Z_S | X X_{V^c∪T} Ẑ_{S^c} Z_k)
//! ```
//!
//! and the achievable rate is
//!
//! ```text
//! min{ max_{T⊆V} min_{S⊆T} R_T(S),  min_{k∈V^c} max_{T∈Υ_k} min_{S⊆T} R^(k)_T(S) }
//! ```
//!
//! with `Υ_k = {T ⊆ V : Q^(k)_T(S) ≥ 0 for all S ⊆ T}`. Under
//! [`RateMode::Selective`] the relay-side terms condition on all `N`
//! decode-forward codewords instead of `X_{V^c}`.

use std::collections::HashMap;
use std::fmt;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channel::{assemble_cutset_covariance, ChannelRealization, ModelError, NetworkTopology, Node};
use crate::covariance::{CovarianceError, CovarianceMap, IndexSet, VariableId};

/// Largest supported relay count (subset masks are `u16`).
pub const MAX_RELAYS: usize = 16;

/// Set of relays, 1-based. As a strategy it marks the compress-forward
/// relays `V`; the complement decodes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StrategyAssignment(u16);

impl StrategyAssignment {
    pub const EMPTY: StrategyAssignment = StrategyAssignment(0);

    /// All relays `1..=n`.
    pub fn full(n: usize) -> Self {
        assert!(n <= MAX_RELAYS, "at most {MAX_RELAYS} relays are supported");
        Self(((1u32 << n) - 1) as u16)
    }

    pub fn from_relays(relays: &[usize]) -> Self {
        relays.iter().fold(Self::EMPTY, |s, &k| s.with(k))
    }

    pub fn from_bits(bits: u16) -> Self {
        Self(bits)
    }

    pub fn bits(self) -> u16 {
        self.0
    }

    pub fn with(self, k: usize) -> Self {
        assert!((1..=MAX_RELAYS).contains(&k), "relay index {k} out of range");
        Self(self.0 | 1 << (k - 1))
    }

    pub fn contains(self, k: usize) -> bool {
        (1..=MAX_RELAYS).contains(&k) && self.0 >> (k - 1) & 1 == 1
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    /// Complement within `1..=n`.
    pub fn complement(self, n: usize) -> Self {
        Self(Self::full(n).0 & !self.0)
    }

    pub fn union(self, other: Self) -> Self {
        Self(self.0 | other.0)
    }

    pub fn minus(self, other: Self) -> Self {
        Self(self.0 & !other.0)
    }

    pub fn is_subset_of(self, other: Self) -> bool {
        self.0 & !other.0 == 0
    }

    /// Largest relay index, 0 when empty.
    pub fn max_relay(self) -> usize {
        16 - self.0.leading_zeros() as usize
    }

    /// Rank of relay `k` among the members, if present.
    pub fn position(self, k: usize) -> Option<usize> {
        self.contains(k).then(|| (self.0 & ((1u16 << (k - 1)) - 1)).count_ones() as usize)
    }

    /// Members in ascending order.
    pub fn iter(self) -> impl Iterator<Item = usize> {
        (1..=MAX_RELAYS).filter(move |k| self.contains(*k))
    }

    /// All subsets, starting with the empty set, in ascending bitmask order.
    pub fn subsets(self) -> impl Iterator<Item = StrategyAssignment> {
        let full = self.0 as u32;
        (0..=full).filter(move |m| m & !full == 0).map(|m| Self(m as u16))
    }
}

impl fmt::Display for StrategyAssignment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, k) in self.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{k}")?;
        }
        write!(f, "}}")
    }
}

/// Which conditioning the relay-side terms use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum RateMode {
    /// Strategy fixed in advance: relay terms condition on `X_{V^c}`.
    Fixed,
    /// Strategy selected per draw: the source superposes on every relay's
    /// decode-forward codeword, and relay terms condition on all of them.
    Selective,
}

/// One relay-side constraint of [`RateBreakdown`].
#[derive(Debug, Clone, PartialEq)]
pub struct RelayConstraint {
    pub relay: usize,
    pub value: f64,
    /// Maximizing compression set `T_k ∈ Υ_k`.
    pub argmax_t: StrategyAssignment,
    /// Minimizing `S ⊆ T_k`.
    pub argmin_s: StrategyAssignment,
    /// Subsets of `V` excluded by `Υ_k`.
    pub excluded: Vec<StrategyAssignment>,
}

/// Achievable rate with the subsets attaining it.
#[derive(Debug, Clone, PartialEq)]
pub struct RateBreakdown {
    pub rate: f64,
    pub dest_value: f64,
    pub dest_argmax_t: StrategyAssignment,
    pub dest_argmin_s: StrategyAssignment,
    pub relay_constraints: Vec<RelayConstraint>,
}

type Vars = Vec<VariableId>;

fn inputs(set: StrategyAssignment) -> Vars {
    set.iter().map(VariableId::RelayInput).collect()
}

fn outputs(set: StrategyAssignment) -> Vars {
    set.iter().map(VariableId::RelayOutput).collect()
}

fn compressed(set: StrategyAssignment) -> Vars {
    set.iter().map(VariableId::CompressedOutput).collect()
}

fn cat(parts: &[&[VariableId]]) -> Vars {
    parts.concat()
}

/// Decode-forward inputs a relay-side term conditions on.
fn relay_side_df(n: usize, v: StrategyAssignment, mode: RateMode) -> Vars {
    match mode {
        RateMode::Fixed => inputs(v.complement(n)),
        RateMode::Selective => (1..=n)
            .map(|k| if v.contains(k) { VariableId::DfCodeword(k) } else { VariableId::RelayInput(k) })
            .collect(),
    }
}

/// `I(A; B | C)` term as variable lists.
#[derive(Debug, Clone, PartialEq)]
struct MiSpec {
    a: Vars,
    b: Vars,
    c: Vars,
}

impl MiSpec {
    fn new(a: Vars, b: Vars, c: Vars) -> Self {
        Self { a, b, c }
    }

    fn eval(&self, map: &CovarianceMap) -> Result<f64, CovarianceError> {
        if self.a.is_empty() || self.b.is_empty() {
            return Ok(0.0);
        }
        map.conditional_mi(&self.a, &self.b, &self.c)
    }
}

fn check_subsets(n: usize, v: StrategyAssignment, t: StrategyAssignment, s: StrategyAssignment) {
    assert!(v.max_relay() <= n, "V = {v} exceeds {n} relays");
    assert!(t.is_subset_of(v), "T = {t} is not a subset of V = {v}");
    assert!(s.is_subset_of(t), "S = {s} is not a subset of T = {t}");
}

/// Terms `(first, penalty, q_first)` of the destination constraint, so that
/// `R_T(S) = first − penalty` and `Q_T(S) = q_first − penalty`.
fn dest_specs(n: usize, v: StrategyAssignment, t: StrategyAssignment, s: StrategyAssignment) -> [MiSpec; 3] {
    check_subsets(n, v, t, s);
    let vc = v.complement(n);
    let sc = t.minus(s);
    let x = [VariableId::SourceInput];
    let y = [VariableId::DestOutput];
    let first = MiSpec::new(
        cat(&[&x, &inputs(vc), &inputs(s)]),
        cat(&[&compressed(sc), &y]),
        inputs(sc),
    );
    let penalty = MiSpec::new(
        outputs(s),
        compressed(s),
        cat(&[&x, &inputs(t.union(vc)), &compressed(sc), &y]),
    );
    let q_first = MiSpec::new(inputs(s), cat(&[&compressed(sc), &y]), cat(&[&x, &inputs(sc.union(vc))]));
    [first, penalty, q_first]
}

/// Terms `(joint, gain, penalty, q_penalty)` of relay `k`'s constraint, so
/// that `R^(k)_T(S) = joint + gain − penalty` and
/// `Q^(k)_T(S) = gain − q_penalty`.
fn relay_specs(
    n: usize,
    v: StrategyAssignment,
    k: usize,
    t: StrategyAssignment,
    s: StrategyAssignment,
    mode: RateMode,
) -> [MiSpec; 4] {
    check_subsets(n, v, t, s);
    assert!((1..=n).contains(&k) && !v.contains(k), "relay {k} is not a decode-forward relay of V = {v}");
    let df = relay_side_df(n, v, mode);
    let sc = t.minus(s);
    let x = [VariableId::SourceInput];
    let zk = [VariableId::RelayOutput(k)];
    let joint = MiSpec::new(x.to_vec(), cat(&[&compressed(t), &zk]), cat(&[&df, &inputs(t)]));
    let gain = MiSpec::new(inputs(s), zk.to_vec(), cat(&[&df, &inputs(sc)]));
    let penalty = MiSpec::new(compressed(s), outputs(s), cat(&[&df, &inputs(t), &compressed(sc), &zk]));
    let q_penalty = MiSpec::new(compressed(s), outputs(s), cat(&[&x, &df, &inputs(t), &compressed(sc), &zk]));
    [joint, gain, penalty, q_penalty]
}

/// `R_T(S)` on a map assembled for `V`.
pub fn rate_dest_term(
    map: &CovarianceMap,
    n: usize,
    v: StrategyAssignment,
    t: StrategyAssignment,
    s: StrategyAssignment,
) -> Result<f64, CovarianceError> {
    let [first, penalty, _] = dest_specs(n, v, t, s);
    Ok(first.eval(map)? - penalty.eval(map)?)
}

/// `Q_T(S)` on a map assembled for `V`.
pub fn q_dest(
    map: &CovarianceMap,
    n: usize,
    v: StrategyAssignment,
    t: StrategyAssignment,
    s: StrategyAssignment,
) -> Result<f64, CovarianceError> {
    let [_, penalty, q_first] = dest_specs(n, v, t, s);
    Ok(q_first.eval(map)? - penalty.eval(map)?)
}

/// `R^(k)_T(S)` on a map assembled for `(V, mode)`.
pub fn rate_relay_term(
    map: &CovarianceMap,
    n: usize,
    v: StrategyAssignment,
    k: usize,
    t: StrategyAssignment,
    s: StrategyAssignment,
    mode: RateMode,
) -> Result<f64, CovarianceError> {
    let [joint, gain, penalty, _] = relay_specs(n, v, k, t, s, mode);
    Ok(joint.eval(map)? + gain.eval(map)? - penalty.eval(map)?)
}

/// `Q^(k)_T(S)` on a map assembled for `(V, mode)`.
pub fn q_relay(
    map: &CovarianceMap,
    n: usize,
    v: StrategyAssignment,
    k: usize,
    t: StrategyAssignment,
    s: StrategyAssignment,
    mode: RateMode,
) -> Result<f64, CovarianceError> {
    let [_, gain, _, q_penalty] = relay_specs(n, v, k, t, s, mode);
    Ok(gain.eval(map)? - q_penalty.eval(map)?)
}

/// Achievable rate for `(V, mode)` with its breakdown.
pub fn i_cmnnc(map: &CovarianceMap, n: usize, v: StrategyAssignment, mode: RateMode) -> Result<RateBreakdown, CovarianceError> {
    let plan = RatePlan::new(map, n, v, mode)?;
    let values = plan.evaluate(map, TermSide::Both)?;
    Ok(plan.breakdown(&values))
}

/// Which terms of a plan to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TermSide {
    Destination,
    Relay,
    Both,
}

/// Resolved `I(A; B | C)` over map indices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
struct Term {
    a: IndexSet,
    b: IndexSet,
    c: IndexSet,
}

#[derive(Debug, Clone, Copy)]
struct DestEntry {
    s: StrategyAssignment,
    first: Option<usize>,
    penalty: Option<usize>,
    q_first: Option<usize>,
}

#[derive(Debug, Clone, Copy)]
struct RelayEntry {
    s: StrategyAssignment,
    joint: Option<usize>,
    gain: Option<usize>,
    penalty: Option<usize>,
    q_penalty: Option<usize>,
}

/// Every mutual-information term of the rate for a fixed `(N, V, mode)`,
/// resolved to map indices and de-duplicated, with the max-min structure
/// that combines them. Reusable on any map with the same variable layout.
#[derive(Debug, Clone)]
pub struct RatePlan {
    n: usize,
    v: StrategyAssignment,
    vars: Vec<VariableId>,
    terms: Vec<Term>,
    term_is_dest: Vec<bool>,
    term_deps: Vec<StrategyAssignment>,
    dest: Vec<(StrategyAssignment, Vec<DestEntry>)>,
    relays: Vec<(usize, Vec<(StrategyAssignment, Vec<RelayEntry>)>)>,
}

struct PlanBuilder<'a> {
    map: &'a CovarianceMap,
    ids: HashMap<Term, usize>,
    terms: Vec<Term>,
    is_dest: Vec<bool>,
    deps: Vec<StrategyAssignment>,
}

impl PlanBuilder<'_> {
    fn intern(&mut self, spec: &MiSpec, dest: bool) -> Result<Option<usize>, CovarianceError> {
        if spec.a.is_empty() || spec.b.is_empty() {
            return Ok(None);
        }
        let (a, b, c) = (self.map.set_of(&spec.a)?, self.map.set_of(&spec.b)?, self.map.set_of(&spec.c)?);
        if !a.is_disjoint(b) || !a.is_disjoint(c) || !b.is_disjoint(c) {
            return Err(CovarianceError::OverlappingSets);
        }
        let term = Term { a, b, c };
        if let Some(&id) = self.ids.get(&term) {
            self.is_dest[id] |= dest;
            return Ok(Some(id));
        }
        let deps = spec
            .a
            .iter()
            .chain(&spec.b)
            .chain(&spec.c)
            .filter_map(|var| match var {
                VariableId::CompressedOutput(k) => Some(*k),
                _ => None,
            })
            .fold(StrategyAssignment::EMPTY, StrategyAssignment::with);
        let id = self.terms.len();
        self.ids.insert(term, id);
        self.terms.push(term);
        self.is_dest.push(dest);
        self.deps.push(deps);
        Ok(Some(id))
    }
}

fn val(values: &[f64], id: Option<usize>) -> f64 {
    id.map_or(0.0, |i| values[i])
}

impl RatePlan {
    pub fn new(map: &CovarianceMap, n: usize, v: StrategyAssignment, mode: RateMode) -> Result<Self, CovarianceError> {
        assert!(n <= MAX_RELAYS && v.max_relay() <= n, "V = {v} does not fit {n} relays");
        let mut b = PlanBuilder { map, ids: HashMap::new(), terms: Vec::new(), is_dest: Vec::new(), deps: Vec::new() };
        let mut dest = Vec::new();
        for t in v.subsets() {
            let mut entries = Vec::new();
            for s in t.subsets() {
                let [first, penalty, q_first] = dest_specs(n, v, t, s);
                entries.push(DestEntry {
                    s,
                    first: b.intern(&first, true)?,
                    penalty: b.intern(&penalty, true)?,
                    q_first: b.intern(&q_first, true)?,
                });
            }
            dest.push((t, entries));
        }
        let mut relays = Vec::new();
        for k in v.complement(n).iter() {
            let mut per_t = Vec::new();
            for t in v.subsets() {
                let mut entries = Vec::new();
                for s in t.subsets() {
                    let [joint, gain, penalty, q_penalty] = relay_specs(n, v, k, t, s, mode);
                    entries.push(RelayEntry {
                        s,
                        joint: b.intern(&joint, false)?,
                        gain: b.intern(&gain, false)?,
                        penalty: b.intern(&penalty, false)?,
                        q_penalty: b.intern(&q_penalty, false)?,
                    });
                }
                per_t.push((t, entries));
            }
            relays.push((k, per_t));
        }
        Ok(Self {
            n,
            v,
            vars: map.variables().to_vec(),
            terms: b.terms,
            term_is_dest: b.is_dest,
            term_deps: b.deps,
            dest,
            relays,
        })
    }

    pub fn n_relays(&self) -> usize {
        self.n
    }

    pub fn strategy(&self) -> StrategyAssignment {
        self.v
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    /// Whether term `i` feeds the destination constraint (and may involve `Y`).
    pub fn term_is_dest(&self, i: usize) -> bool {
        self.term_is_dest[i]
    }

    /// Relays whose compressed observation appears in term `i`.
    pub fn term_compression_deps(&self, i: usize) -> StrategyAssignment {
        self.term_deps[i]
    }

    /// Value of term `i` on `map`, which must share the plan's layout.
    pub fn eval_term(&self, i: usize, map: &CovarianceMap) -> Result<f64, CovarianceError> {
        debug_assert_eq!(map.variables(), &self.vars[..]);
        let t = self.terms[i];
        map.mi(t.a, t.b, t.c)
    }

    /// Values of the selected terms; unselected entries are NaN.
    pub fn evaluate(&self, map: &CovarianceMap, side: TermSide) -> Result<Vec<f64>, CovarianceError> {
        if map.variables() != &self.vars[..] {
            return Err(CovarianceError::DimensionMismatch { rows: map.dim(), cols: map.dim(), vars: self.vars.len() });
        }
        (0..self.terms.len())
            .map(|i| {
                let wanted = match side {
                    TermSide::Both => true,
                    TermSide::Destination => self.term_is_dest[i],
                    TermSide::Relay => !self.term_is_dest[i],
                };
                if wanted {
                    self.eval_term(i, map)
                } else {
                    Ok(f64::NAN)
                }
            })
            .collect()
    }

    fn dest_best(&self, values: &[f64], feasible_only: bool) -> (f64, StrategyAssignment, StrategyAssignment) {
        let mut best = (f64::NEG_INFINITY, StrategyAssignment::EMPTY, StrategyAssignment::EMPTY);
        for (t, entries) in &self.dest {
            if feasible_only
                && entries.iter().any(|e| val(values, e.q_first) - val(values, e.penalty) < 0.0)
            {
                continue;
            }
            let mut inner = (f64::INFINITY, StrategyAssignment::EMPTY);
            for e in entries {
                let r = val(values, e.first) - val(values, e.penalty);
                if r < inner.0 {
                    inner = (r, e.s);
                }
            }
            if inner.0 > best.0 {
                best = (inner.0, *t, inner.1);
            }
        }
        best
    }

    /// `max_{T⊆V} min_{S⊆T} R_T(S)`, unclamped.
    pub fn dest_value(&self, values: &[f64]) -> f64 {
        self.dest_best(values, false).0
    }

    /// Same max-min restricted to `T ∈ Υ(V)`.
    pub fn dest_value_feasible(&self, values: &[f64]) -> f64 {
        self.dest_best(values, true).0
    }

    fn relay_constraint(&self, values: &[f64], idx: usize) -> RelayConstraint {
        let (k, per_t) = &self.relays[idx];
        let mut out = RelayConstraint {
            relay: *k,
            value: f64::NEG_INFINITY,
            argmax_t: StrategyAssignment::EMPTY,
            argmin_s: StrategyAssignment::EMPTY,
            excluded: Vec::new(),
        };
        for (t, entries) in per_t {
            if entries.iter().any(|e| val(values, e.gain) - val(values, e.q_penalty) < 0.0) {
                out.excluded.push(*t);
                continue;
            }
            let mut inner = (f64::INFINITY, StrategyAssignment::EMPTY);
            for e in entries {
                let r = val(values, e.joint) + val(values, e.gain) - val(values, e.penalty);
                if r < inner.0 {
                    inner = (r, e.s);
                }
            }
            if inner.0 > out.value {
                out.value = inner.0;
                out.argmax_t = *t;
                out.argmin_s = inner.1;
            }
        }
        out
    }

    /// `min_{k∈V^c} max_{T∈Υ_k} min_{S⊆T} R^(k)_T(S)`, unclamped;
    /// `+∞` when every relay compresses.
    pub fn relay_value(&self, values: &[f64]) -> f64 {
        (0..self.relays.len()).map(|i| self.relay_constraint(values, i).value).fold(f64::INFINITY, f64::min)
    }

    /// Relay-side constraint of relay `k` alone.
    pub fn relay_value_of(&self, values: &[f64], k: usize) -> Option<f64> {
        self.relays.iter().position(|(kk, _)| *kk == k).map(|i| self.relay_constraint(values, i).value)
    }

    pub fn breakdown(&self, values: &[f64]) -> RateBreakdown {
        let (dest_value, t, s) = self.dest_best(values, false);
        let relay_constraints: Vec<_> = (0..self.relays.len()).map(|i| self.relay_constraint(values, i)).collect();
        let relay_min = relay_constraints.iter().map(|c| c.value).fold(f64::INFINITY, f64::min);
        RateBreakdown {
            rate: dest_value.min(relay_min).max(0.0),
            dest_value,
            dest_argmax_t: t,
            dest_argmin_s: s,
            relay_constraints,
        }
    }
}

/// Cutset value `min_{S⊆N} I(X X_S; Z_{S^c} Y | X_{S^c})` for one input
/// covariance over `(X, X_1..X_N)`, row-major.
pub fn cutset_for_inputs(
    topology: &NetworkTopology,
    theta: &ChannelRealization,
    k_inputs: &[Complex64],
) -> Result<f64, ModelError> {
    let map = assemble_cutset_covariance(topology, theta, k_inputs)?;
    let n = topology.n_relays();
    let all = StrategyAssignment::full(n);
    let mut best = f64::INFINITY;
    for s in all.subsets() {
        let sc = all.minus(s);
        let a = cat(&[&[VariableId::SourceInput], &inputs(s)]);
        let b = cat(&[&outputs(sc), &[VariableId::DestOutput]]);
        best = best.min(map.conditional_mi(&a, &b, &inputs(sc))?);
    }
    Ok(best)
}

/// Jointly Gaussian input family for the cutset bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CutsetGrid {
    /// Pairwise correlation magnitudes, phases aligned to the destination
    /// links (conjugate beamforming).
    pub magnitudes: Vec<f64>,
    /// Source/relay correlation vectors with mutually independent relay
    /// inputs, the same family the decode-forward relays use.
    pub correlations: Vec<Vec<f64>>,
}

impl CutsetGrid {
    pub fn beamforming_default() -> Self {
        Self { magnitudes: vec![0.0, 0.25, 0.5, 0.75, 0.95], correlations: Vec::new() }
    }

    /// Input covariances for one draw.
    pub fn inputs(&self, topology: &NetworkTopology, theta: &ChannelRealization) -> Vec<Vec<Complex64>> {
        let n = topology.n_relays();
        let m = n + 1;
        let powers: Vec<f64> = std::iter::once(topology.source_power()).chain((1..=n).map(|k| topology.relay_power(k))).collect();
        let phase = |tx: usize| {
            let from = if tx == 0 { Node::Source } else { Node::Relay(tx) };
            let g = theta.gain(from, Node::Destination).unwrap_or_default();
            if g.norm() > 0.0 {
                (g / g.norm()).conj()
            } else {
                Complex64::new(1.0, 0.0)
            }
        };
        let d: Vec<Complex64> = (0..m).map(|i| phase(i) * powers[i].sqrt()).collect();
        let mut out = Vec::new();
        for &c in &self.magnitudes {
            let mut k = vec![Complex64::default(); m * m];
            for i in 0..m {
                for j in 0..m {
                    let corr = if i == j { 1.0 } else { c };
                    k[i * m + j] = d[i] * d[j].conj() * corr;
                }
            }
            out.push(k);
        }
        for rho in &self.correlations {
            let mut k = vec![Complex64::default(); m * m];
            for i in 0..m {
                k[i * m + i] = Complex64::new(powers[i], 0.0);
            }
            for j in 1..m {
                let e = Complex64::new(rho[j - 1] * (powers[0] * powers[j]).sqrt(), 0.0);
                k[j] = e;
                k[j * m] = e;
            }
            out.push(k);
        }
        out
    }
}

/// Cutset bound maximized over `grid` for a full draw.
pub fn rate_cutset(topology: &NetworkTopology, theta: &ChannelRealization, grid: &CutsetGrid) -> Result<f64, ModelError> {
    let mut best = f64::NEG_INFINITY;
    for k in grid.inputs(topology, theta) {
        best = best.max(cutset_for_inputs(topology, theta, &k)?);
    }
    Ok(best.max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{assemble_covariance, sample_realization, CompressionPolicy, GainModel, InputPolicy};
    use crate::rng::{stream, Domain};

    const TOL: f64 = 1e-9;

    fn single_relay(seed: u64) -> (NetworkTopology, ChannelRealization) {
        let topo = NetworkTopology::rayleigh(1, 1.0, vec![10.0], vec![1.0], 1.0, 1.0).unwrap();
        let theta = sample_realization(&topo, &mut stream(seed, Domain::Auxiliary, 0));
        (topo, theta)
    }

    fn map_for(topo: &NetworkTopology, theta: &ChannelRealization, rho: Vec<f64>, v: StrategyAssignment, s2: f64) -> CovarianceMap {
        let comp = CompressionPolicy::uniform(topo.n_relays(), v, s2);
        assemble_covariance(topo, theta, &InputPolicy::new(rho), &comp, v, RateMode::Fixed).unwrap()
    }

    #[test]
    fn strategy_assignment_basics() {
        let v = StrategyAssignment::from_relays(&[1, 3]);
        assert_eq!(v.iter().collect::<Vec<_>>(), vec![1, 3]);
        assert_eq!(v.complement(3), StrategyAssignment::from_relays(&[2]));
        assert_eq!(v.subsets().count(), 4);
        assert_eq!(v.position(3), Some(1));
        assert_eq!(v.max_relay(), 3);
        assert_eq!(v.to_string(), "{1,3}");
        assert_eq!(StrategyAssignment::EMPTY.subsets().collect::<Vec<_>>(), vec![StrategyAssignment::EMPTY]);
    }

    #[test]
    fn empty_t_is_treat_as_noise() {
        let topo = NetworkTopology::two_relay_default();
        let theta = sample_realization(&topo, &mut stream(3, Domain::Auxiliary, 0));
        let v = StrategyAssignment::from_relays(&[2]);
        let map = map_for(&topo, &theta, vec![0.5, 0.0], v, 1.0);
        let e = StrategyAssignment::EMPTY;
        let r = rate_dest_term(&map, 2, v, e, e).unwrap();
        let direct = map.conditional_mi(&[VariableId::SourceInput, VariableId::RelayInput(1)], &[VariableId::DestOutput], &[]).unwrap();
        assert!((r - direct).abs() < TOL);
        assert_eq!(q_dest(&map, 2, v, e, e).unwrap(), 0.0);
    }

    #[test]
    fn relay_term_with_empty_t_is_df_constraint() {
        let topo = NetworkTopology::two_relay_default();
        let theta = sample_realization(&topo, &mut stream(4, Domain::Auxiliary, 0));
        let v = StrategyAssignment::from_relays(&[2]);
        let map = map_for(&topo, &theta, vec![0.5, 0.0], v, 1.0);
        let e = StrategyAssignment::EMPTY;
        let r = rate_relay_term(&map, 2, v, 1, e, e, RateMode::Fixed).unwrap();
        let direct = map
            .conditional_mi(&[VariableId::SourceInput], &[VariableId::RelayOutput(1)], &[VariableId::RelayInput(1)])
            .unwrap();
        assert!((r - direct).abs() < TOL);
    }

    #[test]
    fn single_relay_cf_constraints() {
        let (topo, theta) = single_relay(8);
        let v = StrategyAssignment::full(1);
        let map = map_for(&topo, &theta, vec![0.0], v, 0.5);
        let (h01, h03, h13) = (
            theta.gain(Node::Source, Node::Relay(1)).unwrap(),
            theta.gain(Node::Source, Node::Destination).unwrap(),
            theta.gain(Node::Relay(1), Node::Destination).unwrap(),
        );
        // S = ∅: I(X; Ẑ1 Y | X1) = log2(1 + |h01|²/(1+σ̂²) + |h03|²)
        let s_empty = rate_dest_term(&map, 1, v, v, StrategyAssignment::EMPTY).unwrap();
        let expect = (1.0 + h01.norm_sqr() / 1.5 + h03.norm_sqr()).log2();
        assert!((s_empty - expect).abs() < TOL, "{s_empty} vs {expect}");
        // S = {1}: I(X X1; Y) − I(Z1; Ẑ1 | X X1 Y) = log2(1+|h03|²+10|h13|²) − log2(1 + 1/σ̂²)
        let s_full = rate_dest_term(&map, 1, v, v, v).unwrap();
        let expect = (1.0 + h03.norm_sqr() + 10.0 * h13.norm_sqr()).log2() - (1.0 + 1.0 / 0.5_f64).log2();
        assert!((s_full - expect).abs() < TOL, "{s_full} vs {expect}");
        let b = i_cmnnc(&map, 1, v, RateMode::Fixed).unwrap();
        let treat_as_noise = (1.0 + h03.norm_sqr() / (1.0 + 10.0 * h13.norm_sqr())).log2();
        let cf = s_empty.min(s_full).max(treat_as_noise);
        assert!((b.rate - cf).abs() < TOL);
        assert!(b.relay_constraints.is_empty());
    }

    #[test]
    fn single_relay_df_closed_form() {
        for seed in 0..20 {
            let (topo, theta) = single_relay(seed);
            let rho: f64 = 0.6;
            let map = map_for(&topo, &theta, vec![rho], StrategyAssignment::EMPTY, 1.0);
            let b = i_cmnnc(&map, 1, StrategyAssignment::EMPTY, RateMode::Fixed).unwrap();
            let (h01, h03, h13) = (
                theta.gain(Node::Source, Node::Relay(1)).unwrap(),
                theta.gain(Node::Source, Node::Destination).unwrap(),
                theta.gain(Node::Relay(1), Node::Destination).unwrap(),
            );
            let (p, p1) = (1.0, 10.0_f64);
            let coherent = h03.norm_sqr() * p + h13.norm_sqr() * p1 + 2.0 * (h03 * h13.conj()).re * rho * (p * p1).sqrt();
            let dest = (1.0 + coherent).log2();
            let relay = (1.0 + h01.norm_sqr() * p * (1.0 - rho * rho)).log2();
            assert!((b.rate - dest.min(relay)).abs() < TOL, "seed {seed}");
        }
    }

    #[test]
    fn huge_compression_noise_approaches_treat_as_noise() {
        let topo = NetworkTopology::two_relay_default();
        let theta = sample_realization(&topo, &mut stream(5, Domain::Auxiliary, 0));
        let v = StrategyAssignment::full(2);
        let mut theta = theta;
        // relay transmissions reach nobody, so only Ẑ carries relay information
        theta.set_gain(Node::Relay(1), Node::Destination, Complex64::default()).unwrap();
        theta.set_gain(Node::Relay(2), Node::Destination, Complex64::default()).unwrap();
        let map = map_for(&topo, &theta, vec![0.0, 0.0], v, 1e9);
        let base = rate_dest_term(&map, 2, v, StrategyAssignment::EMPTY, StrategyAssignment::EMPTY).unwrap();
        let full = rate_dest_term(&map, 2, v, v, v).unwrap();
        assert!((full - base).abs() < 1e-3, "{full} vs {base}");
        for s in v.subsets() {
            assert!(q_dest(&map, 2, v, v, s).unwrap() > -1e-6);
        }
    }

    #[test]
    fn rate_is_min_of_breakdown() {
        let topo = NetworkTopology::two_relay_default();
        for seed in 0..10 {
            let theta = sample_realization(&topo, &mut stream(seed, Domain::Auxiliary, 1));
            for bits in 0..4 {
                let v = StrategyAssignment::from_bits(bits);
                let rho = vec![if v.contains(1) { 0.0 } else { 0.5 }, 0.0];
                let map = map_for(&topo, &theta, rho, v, 1.0);
                let b = i_cmnnc(&map, 2, v, RateMode::Fixed).unwrap();
                let m = b.relay_constraints.iter().map(|c| c.value).fold(b.dest_value, f64::min);
                assert_eq!(b.rate, m.max(0.0));
                assert_eq!(b.relay_constraints.len(), 2 - v.len());
                let tan = rate_dest_term(&map, 2, v, StrategyAssignment::EMPTY, StrategyAssignment::EMPTY).unwrap();
                assert!(b.dest_value >= tan - 1e-12);
            }
        }
    }

    #[test]
    fn plan_matches_direct_terms() {
        let topo = NetworkTopology::two_relay_default();
        let theta = sample_realization(&topo, &mut stream(12, Domain::Auxiliary, 0));
        for mode in [RateMode::Fixed, RateMode::Selective] {
            let v = StrategyAssignment::from_relays(&[2]);
            let comp = CompressionPolicy::uniform(2, v, 2.0);
            let map = assemble_covariance(&topo, &theta, &InputPolicy::new(vec![0.5, 0.5]), &comp, v, mode).unwrap();
            let b = i_cmnnc(&map, 2, v, mode).unwrap();
            let c = &b.relay_constraints[0];
            let direct = rate_relay_term(&map, 2, v, 1, c.argmax_t, c.argmin_s, mode).unwrap();
            assert!((c.value - direct).abs() < 1e-12);
            let d = rate_dest_term(&map, 2, v, b.dest_argmax_t, b.dest_argmin_s).unwrap();
            assert!((b.dest_value - d).abs() < 1e-12);
        }
    }

    #[test]
    fn cutset_with_dead_relays_is_point_to_point() {
        let mut topo = NetworkTopology::two_relay_default();
        for (from, to) in topo.links().collect::<Vec<_>>() {
            if from != Node::Source || to != Node::Destination {
                topo.set_link(from, to, GainModel::constant(Complex64::default())).unwrap();
            }
        }
        let theta = sample_realization(&topo, &mut stream(1, Domain::Auxiliary, 0));
        let h = theta.gain(Node::Source, Node::Destination).unwrap();
        let c = rate_cutset(&topo, &theta, &CutsetGrid::beamforming_default()).unwrap();
        assert!((c - (1.0 + h.norm_sqr()).log2()).abs() < TOL);
    }

    #[test]
    fn single_relay_cutset_by_hand() {
        for seed in 0..10 {
            let (topo, theta) = single_relay(seed);
            let rho: f64 = 0.5;
            let (p, p1) = (1.0, 10.0_f64);
            let e = Complex64::new(rho * (p * p1).sqrt(), 0.0);
            let k = vec![Complex64::new(p, 0.0), e, e, Complex64::new(p1, 0.0)];
            let got = cutset_for_inputs(&topo, &theta, &k).unwrap();
            let (h01, h03, h13) = (
                theta.gain(Node::Source, Node::Relay(1)).unwrap(),
                theta.gain(Node::Source, Node::Destination).unwrap(),
                theta.gain(Node::Relay(1), Node::Destination).unwrap(),
            );
            let broadcast = (1.0 + (1.0 - rho * rho) * p * (h01.norm_sqr() + h03.norm_sqr())).log2();
            let coherent = h03.norm_sqr() * p + h13.norm_sqr() * p1 + 2.0 * (h03 * h13.conj()).re * e.re;
            let mac = (1.0 + coherent).log2();
            assert!((got - broadcast.min(mac)).abs() < TOL, "seed {seed}");
        }
    }
}
