//! Independent oracles shared by the integration and acceptance tests.
//!
//! Everything here goes through dense determinants of covariance
//! submatrices, never through the library's elimination kernels.
#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use relaynet::channel::{
    assemble_covariance, sample_destination_side, ChannelRealization, CompressionPolicy, InputPolicy, NetworkTopology, Node,
    GainModel, RelayView,
};
use relaynet::{i_cmnnc, CovarianceMap, RateMode, StrategyAssignment, VariableId};
use VariableId::*;

pub type V = StrategyAssignment;

pub fn zero() -> Complex64 {
    Complex64::new(0.0, 0.0)
}

/// `ln det` of the principal submatrix on `idx`; 0 for the empty set.
pub fn ln_det(m: &DMatrix<Complex64>, idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    let sub = DMatrix::from_fn(idx.len(), idx.len(), |i, j| m[(idx[i], idx[j])]);
    sub.determinant().re.ln()
}

fn indices(map: &CovarianceMap, vars: &[VariableId]) -> Vec<usize> {
    vars.iter().map(|v| map.index_of(*v).expect("variable present")).collect()
}

/// `h(A | C)` in bits, from `det(2πe Σ)`-style determinant ratios.
pub fn entropy_bits(map: &CovarianceMap, a: &[VariableId], c: &[VariableId]) -> f64 {
    let (ia, ic) = (indices(map, a), indices(map, c));
    let ac: Vec<usize> = ia.iter().chain(&ic).copied().collect();
    let ln = ln_det(map.matrix(), &ac) - ln_det(map.matrix(), &ic);
    (a.len() as f64 * (std::f64::consts::PI * std::f64::consts::E).ln() + ln) / std::f64::consts::LN_2
}

/// `I(A; B | C) = h(A|C) − h(A|BC)` in bits.
pub fn mi_bits(map: &CovarianceMap, a: &[VariableId], b: &[VariableId], c: &[VariableId]) -> f64 {
    if a.is_empty() || b.is_empty() {
        return 0.0;
    }
    let bc: Vec<VariableId> = b.iter().chain(c).copied().collect();
    entropy_bits(map, a, c) - entropy_bits(map, a, &bc)
}

fn ins(s: V) -> Vec<VariableId> {
    s.iter().map(RelayInput).collect()
}
fn outs(s: V) -> Vec<VariableId> {
    s.iter().map(RelayOutput).collect()
}
fn comp(s: V) -> Vec<VariableId> {
    s.iter().map(CompressedOutput).collect()
}

/// Noisy network coding with every relay compressing, letting the
/// destination pick which compressions to decode and treat the rest as
/// noise: `max_T min_{S⊆T} I(X X_S; Ẑ_{T∖S} Y | X_{T∖S}) − I(Z_S; Ẑ_S | X X_T Ẑ_{T∖S} Y)`.
pub fn nnc_rate(map: &CovarianceMap, n: usize) -> f64 {
    let mut best = f64::NEG_INFINITY;
    for t in V::full(n).subsets() {
        let mut worst = f64::INFINITY;
        for s in t.subsets() {
            let rest = t.minus(s);
            let a: Vec<_> = [SourceInput].into_iter().chain(ins(s)).collect();
            let b: Vec<_> = comp(rest).into_iter().chain([DestOutput]).collect();
            let gain = mi_bits(map, &a, &b, &ins(rest));
            let cond: Vec<_> = [SourceInput].into_iter().chain(ins(t)).chain(comp(rest)).chain([DestOutput]).collect();
            let cost = mi_bits(map, &outs(s), &comp(s), &cond);
            worst = worst.min(gain - cost);
        }
        best = best.max(worst);
    }
    best.max(0.0)
}

/// Single-relay decode-forward with source/relay correlation `rho`:
/// `min{I(X X1; Y), I(X; Z1 | X1)}` in closed form.
pub fn df_single_relay(topo: &NetworkTopology, theta: &ChannelRealization, rho: f64) -> f64 {
    let (p, p1) = (topo.source_power(), topo.relay_power(1));
    let g = |a, b| theta.gain(a, b).unwrap_or_else(zero);
    let (h01, h03, h13) = (g(Node::Source, Node::Relay(1)), g(Node::Source, Node::Destination), g(Node::Relay(1), Node::Destination));
    let coherent = h03 * (rho * p.sqrt()) + h13 * p1.sqrt();
    let dest = (1.0 + (coherent.norm_sqr() + h03.norm_sqr() * p * (1.0 - rho * rho)) / topo.destination_noise()).log2();
    let relay = (1.0 + h01.norm_sqr() * p * (1.0 - rho * rho) / topo.relay_noise(1)).log2();
    dest.min(relay).max(0.0)
}

/// Topology whose relays hear nothing and reach nobody.
pub fn dead_relay_topology(n: usize) -> NetworkTopology {
    let mut t = NetworkTopology::rayleigh(n, 1.0, vec![10.0; n], vec![1.0; n], 1.0, 1.0).unwrap();
    for k in 1..=n {
        t.set_link(Node::Source, Node::Relay(k), GainModel::constant(zero())).unwrap();
        t.set_link(Node::Relay(k), Node::Destination, GainModel::constant(zero())).unwrap();
        for j in 1..=n {
            if j != k {
                t.set_link(Node::Relay(j), Node::Relay(k), GainModel::constant(zero())).unwrap();
            }
        }
    }
    t
}

/// Compression noise per relay in `v`, as multiples of receiver noise.
pub fn compression(topo: &NetworkTopology, v: V, multipliers: &[f64]) -> CompressionPolicy {
    let n = topo.n_relays();
    let mut it = multipliers.iter();
    CompressionPolicy {
        sigma_hat_sq: (1..=n).map(|k| v.contains(k).then(|| it.next().unwrap() * topo.relay_noise(k))).collect(),
    }
}

/// All per-relay multiplier combinations for `v` over `grid`.
pub fn combos(grid: &[f64], v: V) -> Vec<Vec<f64>> {
    let mut out = vec![vec![]];
    for _ in 0..v.len() {
        out = out.into_iter().flat_map(|b| grid.iter().map(move |g| [b.clone(), vec![*g]].concat())).collect();
    }
    out
}

/// Achievable rate at one realization.
pub fn rate(topo: &NetworkTopology, theta: &ChannelRealization, v: V, mode: RateMode, rho: &[f64], c: &CompressionPolicy) -> f64 {
    let map = assemble_covariance(topo, theta, &InputPolicy::new(rho.to_vec()), c, v, mode).unwrap();
    i_cmnnc(&map, topo.n_relays(), v, mode).unwrap().rate
}

/// Fraction of `draws` with `rate < r`.
pub fn conditional_outage(
    topo: &NetworkTopology,
    draws: &[ChannelRealization],
    v: V,
    mode: RateMode,
    rho: &[f64],
    c: &CompressionPolicy,
    r: f64,
) -> f64 {
    draws.iter().filter(|th| rate(topo, th, v, mode, rho, c) < r).count() as f64 / draws.len() as f64
}

/// `n` completions of `view` from `rng`, in the order the library draws them.
pub fn completions<R: rand::Rng>(topo: &NetworkTopology, view: &RelayView, n: usize, rng: &mut R) -> Vec<ChannelRealization> {
    (0..n).map(|_| view.complete(&sample_destination_side(topo, rng))).collect()
}

/// Random Hermitian PSD matrix `A Aᴴ + δI` of size `dim`.
pub fn random_psd<R: rand::Rng>(rng: &mut R, dim: usize, delta: f64) -> DMatrix<Complex64> {
    let a = DMatrix::from_fn(dim, dim + 1, |_, _| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)));
    let mut m = &a * a.adjoint();
    for i in 0..dim {
        m[(i, i)] += delta;
        m[(i, i)].im = 0.0;
    }
    m
}

/// Distinct labels for generic test matrices.
pub fn labels(dim: usize) -> Vec<VariableId> {
    (1..=dim).map(RelayOutput).collect()
}

/// `1 − exp(−(2^r − 1) / snr)`: outage of a Rayleigh point-to-point link.
pub fn rayleigh_outage(r: f64, snr: f64) -> f64 {
    1.0 - (-(2f64.powf(r) - 1.0) / snr).exp()
}
