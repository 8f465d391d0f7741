//! Per-draw tables: everything the estimators need for one θ_r.
//!
//! For a fixed strategy `V`, correlation vector and compression choice `c`,
//! the achievable rate at inner draw `j` is `max(0, min(D_c[j], R_c))` where
//! `D_c[j]` is the destination max-min (depends on θ_d) and `R_c` the
//! relay-side constraint (θ_r only). The conditional outage at rate `r > 0`
//! is therefore 1 when `r > R_c` and otherwise the fraction of `D_c[j] < r`,
//! which a sorted copy of `D_c` answers for every `r` at once.
//!
//! Destination terms do not see the decode-forward codewords of
//! compressing relays, so they are evaluated once per `(V, ρ restricted to
//! V^c)` on the fixed-strategy layout and shared by both rate modes.

use std::collections::HashMap;

use crate::channel::{
    assemble_covariance, set_compression_noise, ChannelRealization, CompressionPolicy, InputPolicy, ModelError,
    NetworkTopology, RelayView,
};
use crate::rate::{RateMode, RatePlan, StrategyAssignment, TermSide};

/// Grids with at most this many compression combinations are searched
/// exhaustively; larger ones by coordinate descent.
pub const EXHAUSTIVE_LIMIT: usize = 64;

/// Destination terms of one plan with their compression dependencies
/// projected onto the combination index.
struct DestLayout {
    terms: Vec<usize>,
    /// `proj[t][c]`: index of combination `c` within term `t`'s own grid.
    proj: Vec<Vec<usize>>,
    /// `canonical[t][c]`: `c` is the first combination with that projection.
    canonical: Vec<Vec<bool>>,
    sizes: Vec<usize>,
}

pub(crate) struct Engine<'a> {
    pub topology: &'a NetworkTopology,
    n: usize,
    /// Compression-noise multipliers of each relay's receiver noise.
    grid: Vec<f64>,
    fixed: Vec<Option<RatePlan>>,
    selective: Vec<Option<RatePlan>>,
    layouts: Vec<Option<DestLayout>>,
}

fn digits(c: usize, g: usize, m: usize) -> impl Iterator<Item = usize> {
    let mut c = c;
    (0..m).map(move |_| {
        let d = c % g;
        c /= g;
        d
    })
}

fn combo_count(g: usize, v: StrategyAssignment) -> usize {
    g.pow(v.len() as u32)
}

fn plan_for(topology: &NetworkTopology, v: StrategyAssignment, mode: RateMode) -> Result<RatePlan, ModelError> {
    let n = topology.n_relays();
    let theta = crate::channel::sample_realization(topology, &mut crate::rng::stream(0, crate::rng::Domain::Auxiliary, 0));
    let comp = CompressionPolicy::matched_to_noise(topology, v);
    let map = assemble_covariance(topology, &theta, &InputPolicy::independent(n), &comp, v, mode)?;
    Ok(RatePlan::new(&map, n, v, mode)?)
}

impl<'a> Engine<'a> {
    /// Precomputes plans for every strategy in `strategies`.
    pub fn new(
        topology: &'a NetworkTopology,
        grid: Vec<f64>,
        strategies: &[(StrategyAssignment, RateMode)],
    ) -> Result<Self, ModelError> {
        let n = topology.n_relays();
        let count = 1usize << n;
        let mut e = Self {
            topology,
            n,
            grid,
            fixed: (0..count).map(|_| None).collect(),
            selective: (0..count).map(|_| None).collect(),
            layouts: (0..count).map(|_| None).collect(),
        };
        for &(v, mode) in strategies {
            let b = v.bits() as usize;
            // destination tables always use the fixed layout
            if e.fixed[b].is_none() {
                let plan = plan_for(topology, v, RateMode::Fixed)?;
                e.layouts[b] = Some(e.layout(&plan, v));
                e.fixed[b] = Some(plan);
            }
            if mode == RateMode::Selective && e.selective[b].is_none() {
                e.selective[b] = Some(plan_for(topology, v, RateMode::Selective)?);
            }
        }
        Ok(e)
    }

    fn layout(&self, plan: &RatePlan, v: StrategyAssignment) -> DestLayout {
        let g = self.grid.len();
        let members: Vec<usize> = v.iter().collect();
        let n_combo = combo_count(g, v);
        let terms: Vec<usize> = (0..plan.term_count()).filter(|&t| plan.term_is_dest(t)).collect();
        let mut proj = Vec::new();
        let mut canonical = Vec::new();
        let mut sizes = Vec::new();
        for &t in &terms {
            let deps = plan.term_compression_deps(t);
            sizes.push(combo_count(g, deps));
            let mut p = Vec::with_capacity(n_combo);
            let mut can = Vec::with_capacity(n_combo);
            for c in 0..n_combo {
                let (mut idx, mut scale, mut first) = (0, 1, true);
                for (d, k) in digits(c, g, members.len()).zip(&members) {
                    if deps.contains(*k) {
                        idx += d * scale;
                        scale *= g;
                    } else if d != 0 {
                        first = false;
                    }
                }
                p.push(idx);
                can.push(first);
            }
            proj.push(p);
            canonical.push(can);
        }
        DestLayout { terms, proj, canonical, sizes }
    }

    /// Compression policy for combination `c` of strategy `v`.
    pub fn policy(&self, v: StrategyAssignment, c: usize) -> CompressionPolicy {
        let g = self.grid.len();
        let mut p = CompressionPolicy::empty(self.n);
        for (d, k) in digits(c, g, v.len()).zip(v.iter()) {
            p.sigma_hat_sq[k - 1] = Some(self.grid[d] * self.topology.relay_noise(k));
        }
        p
    }

    fn apply_combo(&self, map: &mut crate::covariance::CovarianceMap, v: StrategyAssignment, c: usize, prev: Option<usize>) -> Result<(), ModelError> {
        let g = self.grid.len();
        let m = v.len();
        let old: Vec<Option<usize>> = match prev {
            Some(p) => digits(p, g, m).map(Some).collect(),
            None => vec![None; m],
        };
        for ((d, k), o) in digits(c, g, m).zip(v.iter()).zip(old) {
            if o != Some(d) {
                set_compression_noise(map, k, self.grid[d] * self.topology.relay_noise(k))?;
            }
        }
        Ok(())
    }

    /// Combination with every relay at the grid midpoint.
    pub fn midpoint(&self, v: StrategyAssignment) -> usize {
        let g = self.grid.len();
        let mid = (g - 1) / 2;
        (0..v.len()).fold(0, |acc, _| acc * g + mid)
    }
}

/// `ρ` with the entries of compressing relays zeroed: the correlations a
/// fixed-strategy layout actually uses.
pub(crate) fn restrict(rho: &[f64], v: StrategyAssignment) -> Vec<f64> {
    rho.iter().enumerate().map(|(i, r)| if v.contains(i + 1) { 0.0 } else { *r }).collect()
}

fn key(rho: &[f64]) -> Vec<u64> {
    rho.iter().map(|r| r.to_bits()).collect()
}

struct DestTable {
    /// Per combination, destination values over all inner draws, ascending.
    sorted: Vec<Vec<f64>>,
    /// Same over the first `prefix` inner draws, when a decision sample is used.
    prefix: Vec<Vec<f64>>,
}

/// Which inner sample a conditional outage is read from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Sample {
    Full,
    Prefix,
}

/// Conditional outage `P(r > max(0, min(D, relay)))` from sorted `D`.
pub(crate) fn conditional_outage(sorted: &[f64], relay: f64, r: f64) -> f64 {
    if r <= 0.0 {
        0.0
    } else if r > relay {
        1.0
    } else {
        sorted.partition_point(|d| *d < r) as f64 / sorted.len() as f64
    }
}

/// Tables for one θ_r, filled on demand.
pub(crate) struct DrawWork<'e, 'a> {
    engine: &'e Engine<'a>,
    view: RelayView,
    inner: Vec<ChannelRealization>,
    prefix: usize,
    degenerate: bool,
    dest: HashMap<(u16, Vec<u64>), DestTable>,
    relay: HashMap<(u16, RateMode, Vec<u64>), Vec<f64>>,
    matched_relay: HashMap<(u16, Vec<u64>), Vec<Option<f64>>>,
}

impl<'e, 'a> DrawWork<'e, 'a> {
    /// `inner` are full realizations sharing `view`; `prefix` inner draws
    /// form the decision sample.
    pub fn new(engine: &'e Engine<'a>, view: RelayView, inner: Vec<ChannelRealization>, prefix: usize) -> Self {
        let degenerate = view.is_all_zero();
        let prefix = prefix.clamp(1, inner.len().max(1));
        Self {
            engine,
            view,
            inner,
            prefix,
            degenerate,
            dest: HashMap::new(),
            relay: HashMap::new(),
            matched_relay: HashMap::new(),
        }
    }

    pub fn inner(&self) -> &[ChannelRealization] {
        &self.inner
    }

    fn ensure_dest(&mut self, v: StrategyAssignment, rho: &[f64]) -> Result<(u16, Vec<u64>), ModelError> {
        let rho = restrict(rho, v);
        let k = (v.bits(), key(&rho));
        if self.dest.contains_key(&k) {
            return Ok(k);
        }
        let e = self.engine;
        let plan = e.fixed[v.bits() as usize].as_ref().expect("plan prepared for strategy");
        let layout = e.layouts[v.bits() as usize].as_ref().expect("layout prepared for strategy");
        let n_combo = combo_count(e.grid.len(), v);
        let inputs = InputPolicy::new(rho);
        let base = e.policy(v, 0);
        let mut values = vec![f64::NAN; plan.term_count()];
        let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(self.inner.len()); n_combo];
        let mut term_vals: Vec<Vec<f64>> = layout.sizes.iter().map(|s| vec![0.0; *s]).collect();
        for theta in &self.inner {
            let mut map = assemble_covariance(e.topology, theta, &inputs, &base, v, RateMode::Fixed)?;
            let mut prev = Some(0);
            for c in 0..n_combo {
                let mut applied = false;
                for (ti, &t) in layout.terms.iter().enumerate() {
                    if !layout.canonical[ti][c] {
                        continue;
                    }
                    if !applied {
                        e.apply_combo(&mut map, v, c, prev)?;
                        prev = Some(c);
                        applied = true;
                    }
                    term_vals[ti][layout.proj[ti][c]] = plan.eval_term(t, &map)?;
                }
            }
            for (c, col) in cols.iter_mut().enumerate() {
                for (ti, &t) in layout.terms.iter().enumerate() {
                    values[t] = term_vals[ti][layout.proj[ti][c]];
                }
                col.push(plan.dest_value(&values));
            }
        }
        let prefix = if self.prefix < self.inner.len() {
            cols.iter()
                .map(|c| {
                    let mut p = c[..self.prefix].to_vec();
                    p.sort_by(f64::total_cmp);
                    p
                })
                .collect()
        } else {
            Vec::new()
        };
        for c in cols.iter_mut() {
            c.sort_by(f64::total_cmp);
        }
        self.dest.insert(k.clone(), DestTable { sorted: cols, prefix });
        Ok(k)
    }

    fn ensure_relay(&mut self, v: StrategyAssignment, mode: RateMode, rho: &[f64]) -> Result<(u16, RateMode, Vec<u64>), ModelError> {
        let rho = if mode == RateMode::Fixed { restrict(rho, v) } else { rho.to_vec() };
        let k = (v.bits(), mode, key(&rho));
        if self.relay.contains_key(&k) {
            return Ok(k);
        }
        let e = self.engine;
        let n_combo = combo_count(e.grid.len(), v);
        let out = if v.complement(e.n).is_empty() {
            vec![f64::INFINITY; n_combo]
        } else {
            let plan = match mode {
                RateMode::Fixed => &e.fixed,
                RateMode::Selective => &e.selective,
            }[v.bits() as usize]
                .as_ref()
                .expect("plan prepared for strategy");
            let theta = self.view.with_hidden_zero();
            let mut map = assemble_covariance(e.topology, &theta, &InputPolicy::new(rho), &e.policy(v, 0), v, mode)?;
            let mut out = Vec::with_capacity(n_combo);
            for c in 0..n_combo {
                e.apply_combo(&mut map, v, c, Some(c.saturating_sub(1)))?;
                let vals = plan.evaluate(&map, TermSide::Relay)?;
                out.push(plan.relay_value(&vals));
            }
            out
        };
        self.relay.insert(k.clone(), out);
        Ok(k)
    }

    fn allowed(&self, v: StrategyAssignment) -> Vec<usize> {
        if self.degenerate {
            vec![self.engine.midpoint(v)]
        } else {
            (0..combo_count(self.engine.grid.len(), v)).collect()
        }
    }

    /// Conditional outage of `(v, mode, ρ)` at combination `c`.
    pub fn outage_at(&mut self, v: StrategyAssignment, mode: RateMode, rho: &[f64], c: usize, r: f64, sample: Sample) -> Result<f64, ModelError> {
        let dk = self.ensure_dest(v, rho)?;
        let rk = self.ensure_relay(v, mode, rho)?;
        let table = &self.dest[&dk];
        let col = match sample {
            Sample::Prefix if !table.prefix.is_empty() => &table.prefix[c],
            _ => &table.sorted[c],
        };
        Ok(conditional_outage(col, self.relay[&rk][c], r))
    }

    /// Compression combination minimizing the conditional outage at `r`:
    /// exhaustive for small grids, otherwise coordinate descent from the
    /// midpoint (two sweeps, one relay at a time). Ties keep the earlier
    /// candidate. A degenerate θ_r returns the midpoint.
    pub fn best_combo(&mut self, v: StrategyAssignment, mode: RateMode, rho: &[f64], r: f64, sample: Sample) -> Result<(usize, f64), ModelError> {
        let allowed = self.allowed(v);
        if allowed.len() <= EXHAUSTIVE_LIMIT {
            let mut best = (allowed[0], f64::INFINITY);
            for c in allowed {
                let o = self.outage_at(v, mode, rho, c, r, sample)?;
                if o < best.1 {
                    best = (c, o);
                }
            }
            return Ok(best);
        }
        let g = self.engine.grid.len();
        let m = v.len();
        let mut cur = self.engine.midpoint(v);
        let mut cur_val = self.outage_at(v, mode, rho, cur, r, sample)?;
        for _sweep in 0..2 {
            for pos in 0..m {
                let stride = g.pow(pos as u32);
                let base = cur - (cur / stride % g) * stride;
                for d in 0..g {
                    let c = base + d * stride;
                    let o = self.outage_at(v, mode, rho, c, r, sample)?;
                    if o < cur_val {
                        cur = c;
                        cur_val = o;
                    }
                }
            }
        }
        Ok((cur, cur_val))
    }

    /// Fixed-strategy conditional outage with optimized compression.
    pub fn fixed_outage(&mut self, v: StrategyAssignment, mode: RateMode, rho: &[f64], r: f64) -> Result<f64, ModelError> {
        Ok(self.best_combo(v, mode, rho, r, Sample::Full)?.1)
    }

    /// Strategy and compression minimizing the selective-mode conditional
    /// outage on the decision sample; ties go to smaller `|V|`, then the
    /// smaller bitmask.
    pub fn argmin_choice(&mut self, rho: &[f64], r: f64) -> Result<(StrategyAssignment, usize), ModelError> {
        let mut order: Vec<StrategyAssignment> = StrategyAssignment::full(self.engine.n).subsets().collect();
        order.sort_by_key(|v| (v.len(), v.bits()));
        let mut best: Option<(StrategyAssignment, usize, f64)> = None;
        for v in order {
            let (c, o) = self.best_combo(v, RateMode::Selective, rho, r, Sample::Prefix)?;
            if best.as_ref().is_none_or(|b| o < b.2) {
                best = Some((v, c, o));
            }
        }
        let (v, c, _) = best.expect("at least the empty strategy");
        Ok((v, c))
    }

    /// Selective-mode relay constraints with compression matched to the
    /// receiver noise, per relay (`None` for compressing relays).
    fn matched_constraints(&mut self, v: StrategyAssignment, rho: &[f64]) -> Result<Vec<Option<f64>>, ModelError> {
        let k = (v.bits(), key(rho));
        if let Some(c) = self.matched_relay.get(&k) {
            return Ok(c.clone());
        }
        let e = self.engine;
        let plan = e.selective[v.bits() as usize].as_ref().expect("plan prepared for strategy");
        let theta = self.view.with_hidden_zero();
        let comp = CompressionPolicy::matched_to_noise(e.topology, v);
        let map = assemble_covariance(e.topology, &theta, &InputPolicy::new(rho.to_vec()), &comp, v, RateMode::Selective)?;
        let vals = plan.evaluate(&map, TermSide::Relay)?;
        let out: Vec<Option<f64>> = (1..=e.n).map(|k| plan.relay_value_of(&vals, k)).collect();
        self.matched_relay.insert(k, out.clone());
        Ok(out)
    }

    /// Fixpoint from `V = ∅`: relays whose decode-forward constraint falls
    /// below `r` switch to compression until nothing changes.
    pub fn heuristic_choice(&mut self, rho: &[f64], r: f64) -> Result<StrategyAssignment, ModelError> {
        let n = self.engine.n;
        let mut v = StrategyAssignment::EMPTY;
        for _ in 0..=n {
            let constraints = self.matched_constraints(v, rho)?;
            let mut next = v;
            for k in v.complement(n).iter() {
                if constraints[k - 1].is_some_and(|c| c < r) {
                    next = next.with(k);
                }
            }
            if next == v {
                break;
            }
            v = next;
        }
        Ok(v)
    }
}
