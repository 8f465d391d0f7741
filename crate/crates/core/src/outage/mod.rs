//! Monte Carlo estimation of the outage-type error probability ε̄(r).
//!
//! Outer draws sample the relay-visible parameters θ_r; for each, inner
//! draws sample the destination-only parameters θ_d. Upper estimators
//! average the conditional outage `P(r > rate | θ_r)` over the outer draws
//! and report the smallest average over the input-correlation grid. The
//! lower bound is the fraction of draws whose cutset bound falls below `r`.
//!
//! Randomness is keyed by `(seed, outer index)`, so every estimator sees the
//! same draws and results do not depend on the number of threads. Outcomes
//! are reduced in index order.
//!
//! Compression choices and the empirical-argmin strategy decision are
//! plug-in: they minimize the conditional outage on the same inner sample
//! that estimates it. This biases the upper estimators slightly downward
//! for small `n_inner` and keeps every curve exactly nondecreasing in `r`.

mod draw;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::channel::{
    sample_destination_side, sample_relay_side, CompressionPolicy, InputPolicy, ModelError, NetworkTopology, RelayView,
};
use crate::covariance::CovarianceError;
use crate::rate::{rate_cutset, CutsetGrid, RateMode, StrategyAssignment};
use crate::rng::{stream, Domain};

pub use draw::EXHAUSTIVE_LIMIT;
use draw::{restrict, DrawWork, Engine, Sample};

/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

/// Largest tolerated fraction of outer draws hitting a singular covariance.
pub const MAX_SINGULAR_FRACTION: f64 = 1e-3;

/// Smallest decision sample for [`DecisionRule::EmpiricalArgmin`].
pub const MIN_DECISION_SAMPLE: usize = 100;

#[derive(Debug, Error)]
pub enum OutageError {
    #[error("invalid setup: {0}")]
    InvalidSetup(String),
    #[error("{count} of {n_outer} outer draws hit a singular covariance (limit 0.1%)")]
    TooManySingular { count: usize, n_outer: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// How relays pick decode- or compress-forward from θ_r.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DecisionRule {
    /// Always the same strategy.
    FixedV(StrategyAssignment),
    /// A relay decodes iff its decode-forward constraint (selective rate
    /// mode, compression noise equal to receiver noise) reaches `r`,
    /// iterated from `V = ∅` to a fixpoint.
    FeasibilityHeuristic,
    /// The strategy with the smallest estimated conditional outage over
    /// `n_inner` destination-side draws; ties go to smaller `|V|`, then the
    /// smaller bitmask.
    EmpiricalArgmin { n_inner: usize },
}

impl DecisionRule {
    pub fn validate(&self) -> Result<(), OutageError> {
        match *self {
            Self::EmpiricalArgmin { n_inner } if n_inner < MIN_DECISION_SAMPLE => Err(OutageError::InvalidSetup(format!(
                "empirical argmin needs at least {MIN_DECISION_SAMPLE} inner draws, got {n_inner}"
            ))),
            _ => Ok(()),
        }
    }
}

/// One curve to estimate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Estimator {
    /// Strategy `V` fixed for every draw.
    Fixed(StrategyAssignment),
    /// Strategy selected per θ_r by a rule.
    Selective(DecisionRule),
    /// Cutset-based lower bound.
    CutsetLowerBound,
}

/// Simulation parameters shared by all estimators.
#[derive(Debug, Clone, PartialEq)]
pub struct OutageSetup {
    pub topology: NetworkTopology,
    pub n_outer: usize,
    pub n_inner: usize,
    /// Compression-noise candidates as multiples of each relay's receiver
    /// noise variance.
    pub compression_grid: Vec<f64>,
    /// Candidate source/codeword correlations per decoding relay.
    pub rho_grid: Vec<f64>,
    /// Beamforming correlation magnitudes for the cutset bound.
    pub cutset_magnitudes: Vec<f64>,
    pub seed: u64,
}

impl OutageSetup {
    /// Defaults: 2000 × 500 draws, compression grid `{¼, ½, 1, 2, 4, 8}`,
    /// correlations `{0, 0.5, 0.9}`.
    pub fn new(topology: NetworkTopology) -> Self {
        Self {
            topology,
            n_outer: 2000,
            n_inner: 500,
            compression_grid: vec![0.25, 0.5, 1.0, 2.0, 4.0, 8.0],
            rho_grid: vec![0.0, 0.5, 0.9],
            cutset_magnitudes: CutsetGrid::beamforming_default().magnitudes,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), OutageError> {
        let bad = |m: String| Err(OutageError::InvalidSetup(m));
        self.topology.validate()?;
        if self.n_outer == 0 || self.n_inner == 0 {
            return bad("sample counts must be at least 1".into());
        }
        if self.compression_grid.is_empty() || self.compression_grid.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
            return bad("compression grid must be nonempty and strictly positive".into());
        }
        if self.rho_grid.is_empty() || self.rho_grid.iter().any(|r| !(*r >= 0.0 && *r < 1.0)) {
            return bad("correlation grid must be nonempty with values in [0, 1)".into());
        }
        if self.cutset_magnitudes.iter().any(|c| !(*c >= 0.0 && *c < 1.0)) {
            return bad("cutset correlation magnitudes must lie in [0, 1)".into());
        }
        Ok(())
    }

    /// Correlation vectors over the relays in `decoders` (others 0) with
    /// `Σρ² < 1`, in grid order.
    fn correlations(&self, decoders: StrategyAssignment) -> Vec<Vec<f64>> {
        let n = self.topology.n_relays();
        let mut out: Vec<Vec<f64>> = vec![vec![0.0; n]];
        for k in decoders.iter() {
            out = out
                .into_iter()
                .flat_map(|base| {
                    self.rho_grid.iter().map(move |r| {
                        let mut v = base.clone();
                        v[k - 1] = *r;
                        v
                    })
                })
                .collect();
        }
        let mut seen = Vec::new();
        for v in out {
            if v.iter().map(|r| r * r).sum::<f64>() < 1.0 && !seen.contains(&v) {
                seen.push(v);
            }
        }
        seen
    }

    fn cutset_grid(&self) -> CutsetGrid {
        let n = self.topology.n_relays();
        let mut correlations: Vec<Vec<f64>> = Vec::new();
        for v in StrategyAssignment::full(n).subsets() {
            for c in self.correlations(v.complement(n)) {
                if !correlations.contains(&c) {
                    correlations.push(c);
                }
            }
        }
        CutsetGrid { magnitudes: self.cutset_magnitudes.clone(), correlations }
    }
}

/// Estimate of ε̄(r) with a 95% Wilson interval on the outer mean.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutageEstimate {
    pub r: f64,
    pub epsilon_hat: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub n_outer: usize,
    /// Inner draws per outer draw; 0 for estimators without inner sampling.
    pub n_inner: usize,
    /// Correlation vector attaining the estimate.
    pub rho: Vec<f64>,
    pub singular_draws: usize,
}

impl OutageEstimate {
    pub fn half_width(&self) -> f64 {
        (self.ci_hi - self.ci_lo) / 2.0
    }
}

/// 95% Wilson score interval for a proportion `p` from `n` samples,
/// widened if needed so that it contains `p`.
pub fn wilson_interval(p: f64, n: usize) -> (f64, f64) {
    let n = n as f64;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = Z95 / denom * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).max(0.0).sqrt();
    ((center - half).max(0.0).min(p), (center + half).min(1.0).max(p))
}

fn is_singular(e: &ModelError) -> bool {
    matches!(
        e,
        ModelError::Covariance(CovarianceError::SingularConditioning { .. } | CovarianceError::NonPositiveDeterminant)
    )
}

/// Estimator with its correlation candidates and output slots.
struct Slot {
    estimator: Estimator,
    rhos: Vec<Vec<f64>>,
    offset: usize,
}

struct Plan<'a> {
    setup: &'a OutageSetup,
    engine: Engine<'a>,
    slots: Vec<Slot>,
    rates: Vec<f64>,
    width: usize,
    prefix: usize,
    cutset: Option<CutsetGrid>,
}

impl<'a> Plan<'a> {
    fn new(setup: &'a OutageSetup, estimators: &[Estimator], rates: &[f64]) -> Result<Self, OutageError> {
        setup.validate()?;
        if let Some(r) = rates.iter().find(|r| !(**r >= 0.0) || r.is_nan()) {
            return Err(OutageError::InvalidSetup(format!("rates must be >= 0, got {r}")));
        }
        let n = setup.topology.n_relays();
        let all = StrategyAssignment::full(n);
        let mut strategies = Vec::new();
        let mut prefix = setup.n_inner;
        let mut prefix_set = false;
        let mut slots = Vec::new();
        let mut offset = 0;
        for &estimator in estimators {
            let rhos = match estimator {
                Estimator::Fixed(v) => {
                    if !v.is_subset_of(all) {
                        return Err(OutageError::InvalidSetup(format!("strategy {v} exceeds {n} relays")));
                    }
                    strategies.push((v, RateMode::Fixed));
                    setup.correlations(v.complement(n))
                }
                Estimator::Selective(rule) => {
                    rule.validate()?;
                    match rule {
                        DecisionRule::FixedV(v) => {
                            if !v.is_subset_of(all) {
                                return Err(OutageError::InvalidSetup(format!("strategy {v} exceeds {n} relays")));
                            }
                            strategies.push((v, RateMode::Selective));
                        }
                        DecisionRule::FeasibilityHeuristic => strategies.extend(all.subsets().map(|v| (v, RateMode::Selective))),
                        DecisionRule::EmpiricalArgmin { n_inner } => {
                            let m = n_inner.min(setup.n_inner);
                            if prefix_set && m != prefix {
                                return Err(OutageError::InvalidSetup("empirical argmin rules must share one decision sample size".into()));
                            }
                            prefix = m;
                            prefix_set = true;
                            strategies.extend(all.subsets().map(|v| (v, RateMode::Selective)));
                        }
                    }
                    setup.correlations(all)
                }
                Estimator::CutsetLowerBound => vec![vec![0.0; n]],
            };
            slots.push(Slot { estimator, rhos, offset });
            offset += slots.last().expect("just pushed").rhos.len() * rates.len();
        }
        let engine = Engine::new(&setup.topology, setup.compression_grid.clone(), &strategies)?;
        let cutset = estimators.contains(&Estimator::CutsetLowerBound).then(|| setup.cutset_grid());
        Ok(Self { setup, engine, slots, rates: rates.to_vec(), width: offset, prefix, cutset })
    }

    fn fallback(&self) -> Vec<f64> {
        let mut out = vec![1.0; self.width];
        for s in &self.slots {
            if s.estimator == Estimator::CutsetLowerBound {
                out[s.offset..s.offset + self.rates.len()].fill(0.0);
            }
        }
        out
    }

    fn evaluate(&self, work: &mut DrawWork<'_, '_>) -> Result<Vec<f64>, ModelError> {
        let mut out = vec![0.0; self.width];
        let nr = self.rates.len();
        for s in &self.slots {
            for (p, rho) in s.rhos.iter().enumerate() {
                let row = &mut out[s.offset + p * nr..s.offset + (p + 1) * nr];
                match s.estimator {
                    Estimator::Fixed(v) => {
                        for (o, &r) in row.iter_mut().zip(&self.rates) {
                            *o = work.fixed_outage(v, RateMode::Fixed, rho, r)?;
                        }
                    }
                    Estimator::Selective(DecisionRule::FixedV(v)) => {
                        for (o, &r) in row.iter_mut().zip(&self.rates) {
                            *o = work.fixed_outage(v, RateMode::Selective, rho, r)?;
                        }
                    }
                    Estimator::Selective(DecisionRule::FeasibilityHeuristic) => {
                        for (o, &r) in row.iter_mut().zip(&self.rates) {
                            let v = work.heuristic_choice(rho, r)?;
                            *o = work.fixed_outage(v, RateMode::Selective, rho, r)?;
                        }
                    }
                    Estimator::Selective(DecisionRule::EmpiricalArgmin { .. }) => {
                        for (o, &r) in row.iter_mut().zip(&self.rates) {
                            let (v, c) = work.argmin_choice(rho, r)?;
                            *o = work.outage_at(v, RateMode::Selective, rho, c, r, Sample::Full)?;
                        }
                    }
                    Estimator::CutsetLowerBound => {
                        let grid = self.cutset.as_ref().expect("cutset grid prepared");
                        let cut = rate_cutset(&self.setup.topology, &work.inner()[0], grid)?;
                        for (o, &r) in row.iter_mut().zip(&self.rates) {
                            *o = if cut < r { 1.0 } else { 0.0 };
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    fn draw(&self, i: usize) -> Result<(Vec<f64>, bool), ModelError> {
        let topo = &self.setup.topology;
        let view = sample_relay_side(topo, &mut stream(self.setup.seed, Domain::RelaySide, i as u64));
        let mut rng = stream(self.setup.seed, Domain::DestinationSide, i as u64);
        let inner = (0..self.setup.n_inner).map(|_| view.complete(&sample_destination_side(topo, &mut rng))).collect();
        let mut work = DrawWork::new(&self.engine, view, inner, self.prefix);
        match self.evaluate(&mut work) {
            Ok(v) => Ok((v, false)),
            Err(e) if is_singular(&e) => Ok((self.fallback(), true)),
            Err(e) => Err(e),
        }
    }

    fn run(&self) -> Result<Vec<Vec<OutageEstimate>>, OutageError> {
        let n_outer = self.setup.n_outer;
        let outcomes: Vec<(Vec<f64>, bool)> = (0..n_outer).into_par_iter().map(|i| self.draw(i)).collect::<Result<_, _>>()?;
        let singular = outcomes.iter().filter(|o| o.1).count();
        if singular > 0 && singular as f64 >= MAX_SINGULAR_FRACTION * n_outer as f64 {
            return Err(OutageError::TooManySingular { count: singular, n_outer });
        }
        let mut sums = vec![0.0; self.width];
        for (values, _) in &outcomes {
            for (s, v) in sums.iter_mut().zip(values) {
                *s += v;
            }
        }
        let nr = self.rates.len();
        let curves = self
            .slots
            .iter()
            .map(|s| {
                (0..nr)
                    .map(|q| {
                        let mut best = (f64::INFINITY, 0);
                        for p in 0..s.rhos.len() {
                            let mean = sums[s.offset + p * nr + q] / n_outer as f64;
                            if mean < best.0 {
                                best = (mean, p);
                            }
                        }
                        let (lo, hi) = wilson_interval(best.0, n_outer);
                        OutageEstimate {
                            r: self.rates[q],
                            epsilon_hat: best.0,
                            ci_lo: lo,
                            ci_hi: hi,
                            n_outer,
                            n_inner: if s.estimator == Estimator::CutsetLowerBound { 0 } else { self.setup.n_inner },
                            rho: s.rhos[best.1].clone(),
                            singular_draws: singular,
                        }
                    })
                    .collect()
            })
            .collect();
        Ok(curves)
    }
}

/// Curves for several estimators over a rate grid on coupled draws, one
/// `Vec` per estimator in input order.
pub fn estimate_curves(setup: &OutageSetup, estimators: &[Estimator], rates: &[f64]) -> Result<Vec<Vec<OutageEstimate>>, OutageError> {
    Plan::new(setup, estimators, rates)?.run()
}

fn single(setup: &OutageSetup, estimator: Estimator, r: f64) -> Result<OutageEstimate, OutageError> {
    Ok(estimate_curves(setup, &[estimator], &[r])?.remove(0).remove(0))
}

/// Upper estimate of ε̄(r) for a fixed strategy.
pub fn outage_fixed(setup: &OutageSetup, v: StrategyAssignment, r: f64) -> Result<OutageEstimate, OutageError> {
    single(setup, Estimator::Fixed(v), r)
}

/// Upper estimate of ε̄(r) when relays select their strategy with `rule`.
pub fn outage_scs(setup: &OutageSetup, r: f64, rule: DecisionRule) -> Result<OutageEstimate, OutageError> {
    single(setup, Estimator::Selective(rule), r)
}

/// Lower estimate `P(cutset(θ) < r)`.
pub fn outage_lower_bound(setup: &OutageSetup, r: f64) -> Result<OutageEstimate, OutageError> {
    single(setup, Estimator::CutsetLowerBound, r)
}

fn inner_draws<R: Rng + ?Sized>(topology: &NetworkTopology, view: &RelayView, n: usize, rng: &mut R) -> Vec<crate::channel::ChannelRealization> {
    (0..n).map(|_| view.complete(&sample_destination_side(topology, rng))).collect()
}

/// Compression noise for strategy `v` at θ_r minimizing the conditional
/// outage at `r` over `setup.n_inner` destination-side draws from `rng`.
pub fn optimize_compression<R: Rng + ?Sized>(
    setup: &OutageSetup,
    view: &RelayView,
    v: StrategyAssignment,
    inputs: &InputPolicy,
    r: f64,
    rng: &mut R,
) -> Result<CompressionPolicy, OutageError> {
    setup.validate()?;
    let n = setup.topology.n_relays();
    inputs.validate(n)?;
    if v.is_empty() {
        return Ok(CompressionPolicy::empty(n));
    }
    let engine = Engine::new(&setup.topology, setup.compression_grid.clone(), &[(v, RateMode::Fixed)])?;
    if setup.compression_grid.len() == 1 {
        return Ok(engine.policy(v, 0));
    }
    let inner = inner_draws(&setup.topology, view, setup.n_inner, rng);
    let mut work = DrawWork::new(&engine, view.clone(), inner, setup.n_inner);
    let (c, _) = work.best_combo(v, RateMode::Fixed, &restrict(&inputs.rho, v), r, Sample::Full)?;
    Ok(engine.policy(v, c))
}

/// Strategy chosen at θ_r by `rule` for rate `r`. Reads nothing but θ_r;
/// any destination-side draws the rule needs come from `rng`.
pub fn decide_strategy<R: Rng + ?Sized>(
    setup: &OutageSetup,
    view: &RelayView,
    inputs: &InputPolicy,
    r: f64,
    rule: DecisionRule,
    rng: &mut R,
) -> Result<StrategyAssignment, OutageError> {
    rule.validate()?;
    setup.validate()?;
    let n = setup.topology.n_relays();
    inputs.validate(n)?;
    let all: Vec<_> = StrategyAssignment::full(n).subsets().map(|v| (v, RateMode::Selective)).collect();
    match rule {
        DecisionRule::FixedV(v) => Ok(v),
        DecisionRule::FeasibilityHeuristic => {
            let engine = Engine::new(&setup.topology, setup.compression_grid.clone(), &all)?;
            let mut work = DrawWork::new(&engine, view.clone(), Vec::new(), 1);
            Ok(work.heuristic_choice(&inputs.rho, r)?)
        }
        DecisionRule::EmpiricalArgmin { n_inner } => {
            let engine = Engine::new(&setup.topology, setup.compression_grid.clone(), &all)?;
            let inner = inner_draws(&setup.topology, view, n_inner, rng);
            let mut work = DrawWork::new(&engine, view.clone(), inner, n_inner);
            Ok(work.argmin_choice(&inputs.rho, r)?.0)
        }
    }
}
