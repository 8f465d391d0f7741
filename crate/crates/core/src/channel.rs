//! Composite Gaussian relay network: topology, fading law, channel draws
//! and the joint covariance of all signal variables.
//!
//! Receivers observe
//!
//! ```text
//! Z_k = Σ_{tx ≠ k} g(tx→k) X_tx + N_k          (relay k)
//! Y_1 = g(0→d) X + Σ_k g(k→d) X_k + N_d        (destination)
//! Ẑ_k = Z_k + N̂_k                              (compressing relay k)
//! ```
//!
//! where every `g` is drawn once per realization and folded together with
//! its path loss.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::covariance::{CovarianceError, CovarianceMap, VariableId};
use crate::linalg::cholesky_factor;
use crate::rate::{RateMode, StrategyAssignment};
use crate::rng::{complex_normal, uniform_open_low};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("invalid link {from:?} -> {to:?}")]
    InvalidLink { from: Node, to: Node },
    #[error("input policy: {0}")]
    InvalidInputPolicy(String),
    #[error("compression policy: {0}")]
    InvalidCompression(String),
    #[error("realization has {got} relays, topology has {expected}")]
    RelayCountMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Covariance(#[from] CovarianceError),
}

/// Network node. Relays are numbered from 1.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Node {
    Source,
    Relay(usize),
    Destination,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GainKind {
    /// Zero-mean circularly symmetric complex Gaussian with `E|h|² = variance`.
    Rayleigh { variance: f64 },
    Constant(Complex64),
}

/// Random distance `d ~ U(d_min, d_max)`; the gain is divided by `d^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLoss {
    pub d_min: f64,
    pub d_max: f64,
    pub exponent: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainModel {
    pub kind: GainKind,
    pub path_loss: Option<PathLoss>,
}

impl GainModel {
    pub fn rayleigh(variance: f64) -> Self {
        Self { kind: GainKind::Rayleigh { variance }, path_loss: None }
    }

    pub fn constant(g: Complex64) -> Self {
        Self { kind: GainKind::Constant(g), path_loss: None }
    }

    pub fn with_path_loss(mut self, pl: PathLoss) -> Self {
        self.path_loss = Some(pl);
        self
    }

    fn validate(&self) -> Result<(), String> {
        if let GainKind::Rayleigh { variance } = self.kind {
            if !(variance > 0.0 && variance.is_finite()) {
                return Err(format!("fading variance must be > 0, got {variance}"));
            }
        }
        if let Some(pl) = self.path_loss {
            if !(pl.d_min >= 0.0 && pl.d_min < pl.d_max && pl.d_max.is_finite()) {
                return Err(format!("path-loss distance needs 0 <= lo < hi, got [{}, {}]", pl.d_min, pl.d_max));
            }
            if !(pl.exponent >= 0.0 && pl.exponent.is_finite()) {
                return Err(format!("path-loss exponent must be >= 0, got {}", pl.exponent));
            }
        }
        Ok(())
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Complex64 {
        let h = match self.kind {
            GainKind::Rayleigh { variance } => complex_normal(rng, variance),
            GainKind::Constant(g) => g,
        };
        match self.path_loss {
            Some(pl) => h / uniform_open_low(rng, pl.d_min, pl.d_max).powf(pl.exponent),
            None => h,
        }
    }
}

/// Dense link table: transmitter `0..=N` (source, relays) × receiver
/// `0..=N` (relays, destination last).
fn link_slot(n_relays: usize, from: Node, to: Node) -> Option<usize> {
    let tx = match from {
        Node::Source => 0,
        Node::Relay(k) if (1..=n_relays).contains(&k) => k,
        _ => return None,
    };
    let rx = match to {
        Node::Relay(k) if (1..=n_relays).contains(&k) => k - 1,
        Node::Destination => n_relays,
        _ => return None,
    };
    if let (Node::Relay(a), Node::Relay(b)) = (from, to) {
        if a == b {
            return None;
        }
    }
    Some(tx * (n_relays + 1) + rx)
}

fn is_self_slot(n_relays: usize, slot: usize) -> bool {
    let (tx, rx) = (slot / (n_relays + 1), slot % (n_relays + 1));
    tx >= 1 && rx == tx - 1
}

/// Static description of the composite network.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkTopology {
    n_relays: usize,
    source_power: f64,
    relay_powers: Vec<f64>,
    relay_noise: Vec<f64>,
    destination_noise: f64,
    links: Vec<GainModel>,
    visible: Vec<bool>,
}

impl NetworkTopology {
    /// Every link unit-free Rayleigh with `fading_variance`; every gain except
    /// those into the destination is visible to the relays.
    pub fn rayleigh(
        n_relays: usize,
        source_power: f64,
        relay_powers: Vec<f64>,
        relay_noise: Vec<f64>,
        destination_noise: f64,
        fading_variance: f64,
    ) -> Result<Self, ModelError> {
        let slots = (n_relays + 1) * (n_relays + 1);
        let mut links = vec![GainModel::rayleigh(fading_variance); slots];
        let mut visible = vec![true; slots];
        for slot in 0..slots {
            if is_self_slot(n_relays, slot) {
                links[slot] = GainModel::constant(ZERO);
            }
            if slot % (n_relays + 1) == n_relays {
                visible[slot] = false;
            }
        }
        let topo = Self { n_relays, source_power, relay_powers, relay_noise, destination_noise, links, visible };
        topo.validate()?;
        Ok(topo)
    }

    /// Two relays, `P = 1`, `P1 = P2 = 10`, unit noise and fading variances,
    /// source→relay-1 gain divided by `d^exponent` with `d ~ U(0, 0.1)`.
    pub fn two_relay_default() -> Self {
        let mut t = Self::rayleigh(2, 1.0, vec![10.0, 10.0], vec![1.0, 1.0], 1.0, 1.0).expect("valid defaults");
        t.set_link(
            Node::Source,
            Node::Relay(1),
            GainModel::rayleigh(1.0).with_path_loss(PathLoss { d_min: 0.0, d_max: 0.1, exponent: 1.0 }),
        )
        .expect("valid link");
        t
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let n = self.n_relays;
        let bad = |m: String| Err(ModelError::InvalidTopology(m));
        if !(self.source_power > 0.0 && self.source_power.is_finite()) {
            return bad(format!("source_power must be > 0, got {}", self.source_power));
        }
        if self.relay_powers.len() != n || self.relay_noise.len() != n {
            return bad(format!("expected {n} relay powers and noise variances"));
        }
        if let Some(p) = self.relay_powers.iter().find(|p| !(**p > 0.0 && p.is_finite())) {
            return bad(format!("relay powers must be > 0, got {p}"));
        }
        if let Some(v) = self.relay_noise.iter().chain([&self.destination_noise]).find(|v| !(**v > 0.0 && v.is_finite())) {
            return bad(format!("noise variances must be > 0, got {v}"));
        }
        for (slot, link) in self.links.iter().enumerate() {
            if is_self_slot(n, slot) {
                continue;
            }
            link.validate().map_err(ModelError::InvalidTopology)?;
        }
        Ok(())
    }

    pub fn n_relays(&self) -> usize {
        self.n_relays
    }

    pub fn source_power(&self) -> f64 {
        self.source_power
    }

    pub fn relay_power(&self, k: usize) -> f64 {
        self.relay_powers[k - 1]
    }

    pub fn relay_noise(&self, k: usize) -> f64 {
        self.relay_noise[k - 1]
    }

    pub fn destination_noise(&self) -> f64 {
        self.destination_noise
    }

    pub fn link(&self, from: Node, to: Node) -> Option<&GainModel> {
        link_slot(self.n_relays, from, to).map(|s| &self.links[s])
    }

    pub fn set_link(&mut self, from: Node, to: Node, model: GainModel) -> Result<(), ModelError> {
        let slot = link_slot(self.n_relays, from, to).ok_or(ModelError::InvalidLink { from, to })?;
        model.validate().map_err(ModelError::InvalidTopology)?;
        self.links[slot] = model;
        Ok(())
    }

    /// Whether the gain of `from → to` belongs to the relay-visible part θ_r.
    pub fn is_visible(&self, from: Node, to: Node) -> Option<bool> {
        link_slot(self.n_relays, from, to).map(|s| self.visible[s])
    }

    pub fn set_visibility(&mut self, from: Node, to: Node, visible: bool) -> Result<(), ModelError> {
        let slot = link_slot(self.n_relays, from, to).ok_or(ModelError::InvalidLink { from, to })?;
        self.visible[slot] = visible;
        Ok(())
    }

    pub fn set_powers(&mut self, source_power: f64, relay_powers: Vec<f64>) -> Result<(), ModelError> {
        let old = (self.source_power, std::mem::take(&mut self.relay_powers));
        self.source_power = source_power;
        self.relay_powers = relay_powers;
        if let Err(e) = self.validate() {
            self.source_power = old.0;
            self.relay_powers = old.1;
            return Err(e);
        }
        Ok(())
    }

    /// All links in slot order, skipping self-links.
    pub fn links(&self) -> impl Iterator<Item = (Node, Node)> + '_ {
        let n = self.n_relays;
        (0..self.links.len()).filter(move |s| !is_self_slot(n, *s)).map(move |s| {
            let (tx, rx) = (s / (n + 1), s % (n + 1));
            let from = if tx == 0 { Node::Source } else { Node::Relay(tx) };
            let to = if rx == n { Node::Destination } else { Node::Relay(rx + 1) };
            (from, to)
        })
    }

    fn live_slots(&self, visible: bool) -> impl Iterator<Item = usize> + '_ {
        (0..self.links.len()).filter(move |s| !is_self_slot(self.n_relays, *s) && self.visible[*s] == visible)
    }
}

/// Relay-visible part θ_r of a draw. Hidden gains are not stored at all.
#[derive(Debug, Clone, PartialEq)]
pub struct RelayView {
    n_relays: usize,
    gains: Vec<Option<Complex64>>,
}

impl RelayView {
    pub fn n_relays(&self) -> usize {
        self.n_relays
    }

    /// Gain of a visible link; `None` for hidden or invalid links.
    pub fn gain(&self, from: Node, to: Node) -> Option<Complex64> {
        link_slot(self.n_relays, from, to).and_then(|s| self.gains[s])
    }

    pub fn set_gain(&mut self, from: Node, to: Node, g: Complex64) -> Result<(), ModelError> {
        let slot = link_slot(self.n_relays, from, to).ok_or(ModelError::InvalidLink { from, to })?;
        match &mut self.gains[slot] {
            Some(v) => {
                *v = g;
                Ok(())
            }
            None => Err(ModelError::InvalidLink { from, to }),
        }
    }

    /// Realization with every hidden gain replaced by zero. Anything that
    /// depends only on θ_r evaluates identically on it.
    pub fn with_hidden_zero(&self) -> ChannelRealization {
        ChannelRealization {
            n_relays: self.n_relays,
            gains: self.gains.iter().map(|g| g.unwrap_or(ZERO)).collect(),
            visible: self.gains.iter().map(|g| g.is_some()).collect(),
        }
    }

    /// Joins θ_r with destination-side gains drawn by [`sample_destination_side`].
    pub fn complete(&self, hidden: &DestinationDraw) -> ChannelRealization {
        let mut real = self.with_hidden_zero();
        let mut it = hidden.0.iter();
        for (slot, g) in self.gains.iter().enumerate() {
            if g.is_none() && !is_self_slot(self.n_relays, slot) {
                real.gains[slot] = *it.next().expect("destination draw matches topology");
            }
        }
        real
    }

    /// Whether every visible gain is exactly zero.
    pub fn is_all_zero(&self) -> bool {
        self.gains.iter().flatten().all(|g| g.norm_sqr() == 0.0)
    }
}

/// Destination-only gains θ_d in slot order.
#[derive(Debug, Clone, PartialEq)]
pub struct DestinationDraw(pub Vec<Complex64>);

/// One draw θ = (θ_r, θ_d): complex gain per link with path loss folded in.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    n_relays: usize,
    gains: Vec<Complex64>,
    visible: Vec<bool>,
}

impl ChannelRealization {
    pub fn n_relays(&self) -> usize {
        self.n_relays
    }

    pub fn gain(&self, from: Node, to: Node) -> Option<Complex64> {
        link_slot(self.n_relays, from, to).map(|s| self.gains[s])
    }

    pub fn set_gain(&mut self, from: Node, to: Node, g: Complex64) -> Result<(), ModelError> {
        let slot = link_slot(self.n_relays, from, to).ok_or(ModelError::InvalidLink { from, to })?;
        self.gains[slot] = g;
        Ok(())
    }

    pub fn is_visible(&self, from: Node, to: Node) -> Option<bool> {
        link_slot(self.n_relays, from, to).map(|s| self.visible[s])
    }

    /// Projection onto θ_r.
    pub fn relay_view(&self) -> RelayView {
        RelayView {
            n_relays: self.n_relays,
            gains: self
                .gains
                .iter()
                .zip(&self.visible)
                .enumerate()
                .map(|(s, (g, v))| if *v && !is_self_slot(self.n_relays, s) { Some(*g) } else { None })
                .collect(),
        }
    }

    /// Multiplies every gain by `c`.
    pub fn scaled(&self, c: Complex64) -> Self {
        Self { gains: self.gains.iter().map(|g| g * c).collect(), ..self.clone() }
    }

    #[inline]
    fn slot_gain(&self, tx: usize, rx: usize) -> Complex64 {
        self.gains[tx * (self.n_relays + 1) + rx]
    }
}

/// Draws θ_r only.
pub fn sample_relay_side<R: Rng + ?Sized>(topology: &NetworkTopology, rng: &mut R) -> RelayView {
    let mut gains = vec![None; topology.links.len()];
    for slot in topology.live_slots(true) {
        gains[slot] = Some(topology.links[slot].sample(rng));
    }
    RelayView { n_relays: topology.n_relays, gains }
}

/// Draws θ_d only (independent links, so no conditioning on θ_r is needed).
pub fn sample_destination_side<R: Rng + ?Sized>(topology: &NetworkTopology, rng: &mut R) -> DestinationDraw {
    DestinationDraw(topology.live_slots(false).map(|s| topology.links[s].sample(rng)).collect())
}

/// Draws a full realization θ = (θ_r, θ_d) from one stream.
pub fn sample_realization<R: Rng + ?Sized>(topology: &NetworkTopology, rng: &mut R) -> ChannelRealization {
    let view = sample_relay_side(topology, rng);
    let hidden = sample_destination_side(topology, rng);
    view.complete(&hidden)
}

/// Correlation between the source input and each relay's decode-forward
/// codeword; all inputs transmit at full power.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputPolicy {
    pub rho: Vec<f64>,
}

impl InputPolicy {
    pub fn independent(n_relays: usize) -> Self {
        Self { rho: vec![0.0; n_relays] }
    }

    pub fn new(rho: Vec<f64>) -> Self {
        Self { rho }
    }

    /// Squared correlation mass the source spends on codewords that are
    /// superposed under `mode`.
    fn superposed_mass(&self, v: StrategyAssignment, mode: RateMode) -> f64 {
        self.rho
            .iter()
            .enumerate()
            .filter(|(i, _)| mode == RateMode::Selective || !v.contains(i + 1))
            .map(|(_, r)| r * r)
            .sum()
    }

    pub fn validate(&self, n_relays: usize) -> Result<(), ModelError> {
        if self.rho.len() != n_relays {
            return Err(ModelError::InvalidInputPolicy(format!("expected {n_relays} correlations, got {}", self.rho.len())));
        }
        if let Some(r) = self.rho.iter().find(|r| !(**r >= 0.0 && **r < 1.0)) {
            return Err(ModelError::InvalidInputPolicy(format!("correlation must lie in [0, 1), got {r}")));
        }
        if self.rho.iter().map(|r| r * r).sum::<f64>() >= 1.0 {
            return Err(ModelError::InvalidInputPolicy("sum of squared correlations must be < 1".into()));
        }
        Ok(())
    }
}

/// Compression-noise variance for each compressing relay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionPolicy {
    pub sigma_hat_sq: Vec<Option<f64>>,
}

impl CompressionPolicy {
    pub fn empty(n_relays: usize) -> Self {
        Self { sigma_hat_sq: vec![None; n_relays] }
    }

    /// Every relay in `v` compresses with `sigma_hat_sq`.
    pub fn uniform(n_relays: usize, v: StrategyAssignment, sigma_hat_sq: f64) -> Self {
        Self { sigma_hat_sq: (1..=n_relays).map(|k| v.contains(k).then_some(sigma_hat_sq)).collect() }
    }

    /// Compression noise equal to each relay's receiver noise.
    pub fn matched_to_noise(topology: &NetworkTopology, v: StrategyAssignment) -> Self {
        Self {
            sigma_hat_sq: (1..=topology.n_relays).map(|k| v.contains(k).then(|| topology.relay_noise(k))).collect(),
        }
    }

    pub fn get(&self, k: usize) -> Option<f64> {
        self.sigma_hat_sq.get(k - 1).copied().flatten()
    }

    pub fn validate(&self, n_relays: usize, v: StrategyAssignment) -> Result<(), ModelError> {
        if self.sigma_hat_sq.len() != n_relays {
            return Err(ModelError::InvalidCompression(format!("expected {n_relays} entries")));
        }
        for k in 1..=n_relays {
            match (v.contains(k), self.get(k)) {
                (true, Some(s)) if s > 0.0 && s.is_finite() => {}
                (true, Some(s)) => return Err(ModelError::InvalidCompression(format!("relay {k}: variance must be > 0, got {s}"))),
                (true, None) => return Err(ModelError::InvalidCompression(format!("relay {k} compresses but has no variance"))),
                (false, Some(_)) => return Err(ModelError::InvalidCompression(format!("relay {k} decodes but has a variance"))),
                (false, None) => {}
            }
        }
        Ok(())
    }
}

/// Each signal variable as a linear combination of independent unit-power
/// complex Gaussian latents; the covariance is `A Aᴴ`.
struct LinearModel {
    vars: Vec<VariableId>,
    rows: Vec<Vec<Complex64>>,
    n_latent: usize,
}

impl LinearModel {
    fn push(&mut self, var: VariableId, row: Vec<Complex64>) {
        self.vars.push(var);
        self.rows.push(row);
    }

    fn covariance(self) -> Result<CovarianceMap, ModelError> {
        let n = self.vars.len();
        let mut m = DMatrix::from_element(n, n, ZERO);
        for i in 0..n {
            for j in 0..=i {
                let mut s = ZERO;
                for (a, b) in self.rows[i].iter().zip(&self.rows[j]) {
                    s += a * b.conj();
                }
                if i == j {
                    s.im = 0.0;
                }
                m[(i, j)] = s;
                m[(j, i)] = s.conj();
            }
        }
        Ok(CovarianceMap::from_parts(m, self.vars)?)
    }
}

/// Input rows `(X, X_1..X_N)` plus extra codeword rows, over `n_latent`
/// latents, followed by the received-signal rows.
fn build_outputs(
    topology: &NetworkTopology,
    theta: &ChannelRealization,
    inputs: Vec<Vec<Complex64>>,
    extra: Vec<(VariableId, Vec<Complex64>)>,
    compression: Option<(&CompressionPolicy, StrategyAssignment)>,
    n_input_latent: usize,
) -> Result<CovarianceMap, ModelError> {
    let n = topology.n_relays;
    if theta.n_relays != n {
        return Err(ModelError::RelayCountMismatch { expected: n, got: theta.n_relays });
    }
    let n_comp = compression.map(|(_, v)| v.len()).unwrap_or(0);
    // latents: inputs, receiver noises (relays, destination), compression noises
    let n_latent = n_input_latent + n + 1 + n_comp;
    let pad = |mut r: Vec<Complex64>| {
        r.resize(n_latent, ZERO);
        r
    };
    let mut model = LinearModel { vars: Vec::new(), rows: Vec::new(), n_latent };
    model.push(VariableId::SourceInput, pad(inputs[0].clone()));
    for k in 1..=n {
        model.push(VariableId::RelayInput(k), pad(inputs[k].clone()));
    }
    for (var, row) in extra {
        model.push(var, pad(row));
    }
    let received = |rx: usize, noise_latent: usize, noise_var: f64| {
        let mut row = vec![ZERO; n_latent];
        for (tx, input) in inputs.iter().enumerate() {
            if tx >= 1 && rx == tx - 1 {
                continue;
            }
            let g = theta.slot_gain(tx, rx);
            if g == ZERO {
                continue;
            }
            for (r, a) in row.iter_mut().zip(input) {
                *r += g * a;
            }
        }
        row[noise_latent] = Complex64::new(noise_var.sqrt(), 0.0);
        row
    };
    let mut relay_rows = Vec::with_capacity(n);
    for k in 1..=n {
        let row = received(k - 1, n_input_latent + k - 1, topology.relay_noise(k));
        relay_rows.push(row.clone());
        model.push(VariableId::RelayOutput(k), row);
    }
    if let Some((policy, v)) = compression {
        for (j, k) in v.iter().enumerate() {
            let mut row = relay_rows[k - 1].clone();
            let s = policy.get(k).expect("validated compression policy");
            row[n_input_latent + n + 1 + j] = Complex64::new(s.sqrt(), 0.0);
            model.push(VariableId::CompressedOutput(k), row);
        }
    }
    model.push(VariableId::DestOutput, received(n, n_input_latent + n, topology.destination_noise));
    debug_assert!(model.rows.iter().all(|r| r.len() == model.n_latent));
    model.covariance()
}

/// Joint covariance of `(X, X_1..X_N, [X_k(df), k ∈ V], Z_1..Z_N, Ẑ_k for
/// k ∈ V, Y_1)` for strategy `V` under `mode`.
///
/// Decode-forward codewords are mutually independent and the source input is
/// `X = Σ_k ρ_k √(P/P_k) X_k(df) + X'`. Under [`RateMode::Fixed`] only
/// relays in `V^c` carry a decode-forward codeword, and compressing relays
/// send inputs independent of `X`. Under [`RateMode::Selective`] the source
/// superposes on all `N` codewords, and the codewords of compressing relays
/// appear as `DfCodeword(k)`.
pub fn assemble_covariance(
    topology: &NetworkTopology,
    theta: &ChannelRealization,
    inputs: &InputPolicy,
    compression: &CompressionPolicy,
    v: StrategyAssignment,
    mode: RateMode,
) -> Result<CovarianceMap, ModelError> {
    let n = topology.n_relays;
    inputs.validate(n)?;
    compression.validate(n, v)?;
    if v.max_relay() > n {
        return Err(ModelError::InvalidCompression(format!("strategy {v} exceeds {n} relays")));
    }
    // latents: 0 = fresh source part, 1..=N = df codewords, then one
    // independent compress-forward input per relay in V
    let n_cf = v.len();
    let n_input_latent = 1 + n + n_cf;
    let p = topology.source_power;
    let fresh = 1.0 - inputs.superposed_mass(v, mode);
    let mut rows = vec![vec![ZERO; n_input_latent]; n + 1];
    rows[0][0] = Complex64::new((p * fresh).sqrt(), 0.0);
    let mut extra = Vec::new();
    for k in 1..=n {
        let superposed = mode == RateMode::Selective || !v.contains(k);
        if superposed {
            rows[0][k] = Complex64::new(inputs.rho[k - 1] * p.sqrt(), 0.0);
        }
        let pk = topology.relay_power(k).sqrt();
        if let Some(j) = v.position(k) {
            rows[k][1 + n + j] = Complex64::new(pk, 0.0);
            if mode == RateMode::Selective {
                let mut cw = vec![ZERO; n_input_latent];
                cw[k] = Complex64::new(pk, 0.0);
                extra.push((VariableId::DfCodeword(k), cw));
            }
        } else {
            rows[k][k] = Complex64::new(pk, 0.0);
        }
    }
    // selective mode keeps codeword rows next to the inputs
    build_outputs(topology, theta, rows, extra, Some((compression, v)), n_input_latent)
}

/// Joint covariance of `(X, X_1..X_N, Z_1..Z_N, Y_1)` for an arbitrary
/// input covariance `k_inputs` given row-major over `(X, X_1..X_N)`.
pub fn assemble_cutset_covariance(
    topology: &NetworkTopology,
    theta: &ChannelRealization,
    k_inputs: &[Complex64],
) -> Result<CovarianceMap, ModelError> {
    let m = topology.n_relays + 1;
    if k_inputs.len() != m * m {
        return Err(ModelError::InvalidInputPolicy(format!("input covariance must be {m}x{m}")));
    }
    let l = cholesky_factor(k_inputs, m)
        .map_err(|_| ModelError::InvalidInputPolicy("input covariance is not positive definite".into()))?;
    let rows = (0..m).map(|i| l[i * m..(i + 1) * m].to_vec()).collect();
    build_outputs(topology, theta, rows, Vec::new(), None, m)
}

/// Retunes the compression noise of relay `k` in an assembled map so that
/// `Var(Ẑ_k) = Var(Z_k) + sigma_hat_sq`. Cross terms do not involve N̂_k.
pub fn set_compression_noise(map: &mut CovarianceMap, k: usize, sigma_hat_sq: f64) -> Result<(), ModelError> {
    let zi = map.index_of(VariableId::RelayOutput(k)).ok_or(CovarianceError::UnknownVariable(VariableId::RelayOutput(k)))?;
    let zh = map
        .index_of(VariableId::CompressedOutput(k))
        .ok_or(CovarianceError::UnknownVariable(VariableId::CompressedOutput(k)))?;
    if !(sigma_hat_sq > 0.0) {
        return Err(ModelError::InvalidCompression(format!("relay {k}: variance must be > 0")));
    }
    let target = map.matrix()[(zi, zi)].re + sigma_hat_sq;
    let current = map.matrix()[(zh, zh)].re;
    map.shift_diagonal(zh, target - current);
    Ok(())
}
