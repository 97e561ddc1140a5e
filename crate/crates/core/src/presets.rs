//! Ready-made problems: a time-inconsistent control problem with a bridge-type
//! drift, its dynamic-programming reference under exponential discounting,
//! and a nonzero-sum game between agents with non-exponential discounting.

use serde::{Deserialize, Serialize};

use crate::bsvie::BsvieCoefficients;
use crate::error::{Error, Result};
use crate::field::ProcessField;
use crate::oracle::{TreeSpec, MAX_TREE_STEPS};
use crate::paths::{PathRef, Point};
use crate::system::{Iterate, SystemCoefficients};

/// Discount function `φ(τ)` applied to the lag `τ = t − s`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Discount {
    /// `φ ≡ 1`.
    None,
    /// `φ(τ) = e^{−ρτ}`.
    Exponential { rho: f64 },
    /// `φ(τ) = 1/(1 + βτ)`; needs `βT < 1` so the lag `τ ∈ [−T, T]` stays regular.
    Hyperbolic { beta: f64 },
}

impl Discount {
    pub fn phi(&self, tau: f64) -> f64 {
        match *self {
            Discount::None => 1.0,
            Discount::Exponential { rho } => (-rho * tau).exp(),
            Discount::Hyperbolic { beta } => 1.0 / (1.0 + beta * tau),
        }
    }

    /// `φ'(τ)`.
    pub fn dphi(&self, tau: f64) -> f64 {
        match *self {
            Discount::None => 0.0,
            Discount::Exponential { rho } => -rho * (-rho * tau).exp(),
            Discount::Hyperbolic { beta } => -beta / (1.0 + beta * tau).powi(2),
        }
    }

    fn validate(&self, horizon: f64) -> Result<()> {
        match *self {
            Discount::Hyperbolic { beta } if !(beta >= 0.0 && beta * horizon < 1.0) => Err(Error::Config(format!(
                "hyperbolic discount needs 0 ≤ βT < 1, got β = {beta}, T = {horizon}"
            ))),
            Discount::Exponential { rho } if !rho.is_finite() => Err(Error::Config("ρ must be finite".into())),
            _ => Ok(()),
        }
    }
}

/// Running reward `ℓ(a) = l0 + l1·a − q(a − θ)²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Reward {
    pub l0: f64,
    pub l1: f64,
    #[serde(default)]
    pub q: f64,
    #[serde(default)]
    pub theta: f64,
}

impl Reward {
    pub fn eval(&self, a: f64) -> f64 {
        self.l0 + self.l1 * a - self.q * (a - self.theta).powi(2)
    }
    pub fn is_affine(&self) -> bool {
        self.q == 0.0
    }
}

/// Time-inconsistent control problem with actions in `[a1, a2]`, state drift
/// `σ (X − a)/(t − T)` (pinned towards the action), running reward
/// `k_t(s, a) = φ(t − s) ℓ(a)`, terminal reward `F(s, x) = φ(T − s)·f1·x` and
/// `G(s, n) = g1·n + g2·n²` of `n = E_t[X_T]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TiControl {
    pub a1: f64,
    pub a2: f64,
    pub discount: Discount,
    pub reward: Reward,
    pub f1: f64,
    #[serde(default)]
    pub g1: f64,
    #[serde(default)]
    pub g2: f64,
    /// Distance from `T` at which the drift's time argument is capped; set
    /// to one grid step by [`TiControl::for_grid`].
    pub time_cap: f64,
    pub horizon: f64,
}

impl TiControl {
    /// Caps the drift time at one step `T/N` before the horizon.
    pub fn for_grid(mut self, horizon: f64, n_steps: usize) -> Self {
        self.horizon = horizon;
        self.time_cap = horizon / n_steps as f64;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a1 < self.a2) {
            return Err(Error::Config(format!("need a1 < a2, got [{}, {}]", self.a1, self.a2)));
        }
        if !(self.time_cap > 0.0 && self.time_cap <= self.horizon) {
            return Err(Error::Config(format!("time cap {} outside (0, T]", self.time_cap)));
        }
        if self.reward.q < 0.0 {
            return Err(Error::Config("q must be nonnegative so the Hamiltonian is concave".into()));
        }
        self.discount.validate(self.horizon)?;
        // Second derivative of G against a central difference at a few points.
        for n in [-1.3, 0.0, 0.4, 2.1] {
            let h = 1e-3;
            let fd = (self.big_g(n + h) - 2.0 * self.big_g(n) + self.big_g(n - h)) / (h * h);
            if (fd - self.d2_big_g()).abs() > 1e-4 * (1.0 + fd.abs()) {
                return Err(Error::Config(format!("∂²G inconsistent at n = {n}")));
            }
        }
        Ok(())
    }

    fn big_g(&self, n: f64) -> f64 {
        self.g1 * n + self.g2 * n * n
    }

    fn d2_big_g(&self) -> f64 {
        2.0 * self.g2
    }

    fn capped(&self, t: f64) -> f64 {
        t.min(self.horizon - self.time_cap)
    }

    /// Drift coefficient `b(t, x, a) = (x − a)/(t − T)` with `t` capped.
    pub fn drift(&self, t: f64, x: f64, a: f64) -> f64 {
        (x - a) / (self.capped(t) - self.horizon)
    }

    /// `k_t(s, a)`.
    pub fn running(&self, t: f64, s: f64, a: f64) -> f64 {
        self.discount.phi(t - s) * self.reward.eval(a)
    }

    /// `∂_s k_t(s, a)`.
    pub fn d_running(&self, t: f64, s: f64, a: f64) -> f64 {
        -self.discount.dphi(t - s) * self.reward.eval(a)
    }

    /// Maximizer and maximum of `a ↦ k_t(t, a) + b(t, x, a)·z` over `[a1, a2]`.
    pub fn hamiltonian_max(&self, t: f64, x: f64, z: f64) -> Result<(f64, f64)> {
        let obj = |a: f64| self.running(t, t, a) + self.drift(t, x, a) * z;
        let (v1, v2) = (obj(self.a1), obj(self.a2));
        if !v1.is_finite() || !v2.is_finite() {
            return Err(Error::NonFinite {
                what: format!("Hamiltonian objective at t = {t}, x = {x}, z = {z}"),
                node: 0,
                path: 0,
            });
        }
        if self.reward.is_affine() {
            return Ok(if v2 > v1 { (self.a2, v2) } else { (self.a1, v1) });
        }
        let a = golden_max(obj, self.a1, self.a2, 1e-10);
        let v = obj(a);
        // The interior search cannot beat an endpoint of a concave objective,
        // but it may stop within tolerance of one.
        Ok([(self.a1, v1), (a, v), (self.a2, v2)]
            .into_iter()
            .fold((f64::NAN, f64::NEG_INFINITY), |b, c| if c.1 > b.1 { c } else { b }))
    }

    fn policy(&self, pt: &Point<'_>, z: &[f64]) -> (f64, f64) {
        self.hamiltonian_max(pt.t, pt.x[0], z[0])
            .unwrap_or((f64::NAN, f64::NAN))
    }

    /// Equilibrium action on every node and path of a solved iterate.
    pub fn policy_field(&self, it: &Iterate, ens: &crate::paths::PathEnsemble) -> ProcessField {
        ProcessField::from_fn(ens.n_nodes(), ens.n_paths(), 1, |i, p, o| {
            let pt = ens.point(i, p);
            o[0] = self.policy(&pt, it.cal_z.get(i, p)).0;
        })
    }

    /// The dynamic-programming reference needs a time-consistent problem.
    fn dp_ready(&self) -> Result<f64> {
        if self.g1 != 0.0 || self.g2 != 0.0 || !self.reward.is_affine() {
            return Err(Error::Oracle("dynamic-programming reference needs G ≡ 0 and an affine reward".into()));
        }
        match self.discount {
            Discount::Exponential { rho } => Ok(rho),
            Discount::None => Ok(0.0),
            Discount::Hyperbolic { .. } => Err(Error::Oracle("hyperbolic discounting is time-inconsistent".into())),
        }
    }
}

fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let r = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = hi - r * (hi - lo);
    let mut d = lo + r * (hi - lo);
    let (mut fc, mut fd) = (f(c), f(d));
    while hi - lo > tol {
        if fc >= fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - r * (hi - lo);
            fc = f(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + r * (hi - lo);
            fd = f(d);
        }
    }
    0.5 * (lo + hi)
}

impl SystemCoefficients for TiControl {
    fn d1(&self) -> usize {
        2
    }
    fn d2(&self) -> usize {
        1
    }
    fn xi(&self, path: PathRef<'_>, out: &mut [f64]) {
        let x = path.terminal()[0];
        out[0] = self.f1 * x + self.big_g(x);
        out[1] = x;
    }
    fn eta(&self, s: f64, path: PathRef<'_>, out: &mut [f64]) {
        let x = path.terminal()[0];
        out[0] = self.discount.phi(self.horizon - s) * self.f1 * x + self.big_g(x);
    }
    fn d_eta(&self, s: f64, path: PathRef<'_>, out: &mut [f64]) {
        let x = path.terminal()[0];
        out[0] = -self.discount.dphi(self.horizon - s) * self.f1 * x;
    }
    fn h(&self, pt: &Point<'_>, y: &[f64], z: &[f64], _u: &[f64], _v: &[f64], du: &[f64], out: &mut [f64]) {
        let (a, value) = self.policy(pt, z);
        let zt = z[1];
        // G has no explicit s-dependence, so ∂_s G vanishes.
        out[0] = value - du[0] - 0.5 * zt * zt * self.d2_big_g();
        let _ = y;
        out[1] = self.drift(pt.t, pt.x[0], a) * zt;
    }
    fn g(&self, s: f64, pt: &Point<'_>, _u: &[f64], v: &[f64], _y: &[f64], z: &[f64], out: &mut [f64]) {
        let (a, _) = self.policy(pt, z);
        out[0] = self.running(pt.t, s, a) + self.drift(pt.t, pt.x[0], a) * v[0];
    }
    fn grad_g(
        &self,
        s: f64,
        pt: &Point<'_>,
        _du: &[f64],
        dv: &[f64],
        _u: &[f64],
        _v: &[f64],
        _y: &[f64],
        z: &[f64],
        out: &mut [f64],
    ) {
        let (a, _) = self.policy(pt, z);
        out[0] = self.d_running(pt.t, s, a) + self.drift(pt.t, pt.x[0], a) * dv[0];
    }
}

/// Dynamic-programming solution on the tree: `W` is the optimal reward
/// discounted to time 0 and `policy` its maximizer, both `[node][prefix]`.
#[derive(Clone, Debug, PartialEq)]
pub struct DpSolution {
    pub rho: f64,
    pub times: Vec<f64>,
    pub w: Vec<Vec<f64>>,
    pub policy: Vec<Vec<f64>>,
    /// Smallest gap between the two endpoint values over all nodes.
    pub min_gap: f64,
}

impl DpSolution {
    /// Value seen from time `s`: `e^{ρs} W`.
    pub fn value(&self, s: f64, node: usize, prefix: usize) -> f64 {
        (self.rho * s).exp() * self.w[node][prefix]
    }
}

/// Backward induction `W_i = max_a {Δ e^{−ρt_i} ℓ(a) + E^a[W_{i+1}]}` with the
/// tilted two-point weights `½(1 ± b√Δ)`.
pub fn ti_dp_oracle(ctrl: &TiControl, tree: &TreeSpec) -> Result<DpSolution> {
    let rho = ctrl.dp_ready()?;
    let n = tree.n_steps;
    if n == 0 || n > 2 * MAX_TREE_STEPS + 4 {
        return Err(Error::Oracle(format!("tree depth {n} out of range")));
    }
    let step = tree.horizon / n as f64;
    let times: Vec<f64> = (0..=n).map(|i| if i == n { tree.horizon } else { i as f64 * step }).collect();
    let mut x = vec![vec![tree.x0]];
    for i in 0..n {
        let h = (times[i + 1] - times[i]).sqrt();
        let next = x[i].iter().flat_map(|&v| [v - tree.sigma * h, v + tree.sigma * h]).collect();
        x.push(next);
    }
    let mut w: Vec<Vec<f64>> = vec![Vec::new(); n + 1];
    let mut policy: Vec<Vec<f64>> = vec![Vec::new(); n];
    w[n] = x[n].iter().map(|&xt| (-rho * tree.horizon).exp() * ctrl.f1 * xt).collect();
    let mut min_gap = f64::INFINITY;
    for i in (0..n).rev() {
        let dt = times[i + 1] - times[i];
        let sq = dt.sqrt();
        let disc = (-rho * times[i]).exp();
        let mut wi = Vec::with_capacity(1 << i);
        let mut pi = Vec::with_capacity(1 << i);
        for k in 0..(1 << i) {
            let (lo, hi) = (w[i + 1][2 * k], w[i + 1][2 * k + 1]);
            let val = |a: f64| {
                // The drift enters X as σ b, so the Brownian increment is tilted by b.
                let b = ctrl.drift(times[i], x[i][k], a);
                dt * disc * ctrl.reward.eval(a) + 0.5 * (1.0 + b * sq) * hi + 0.5 * (1.0 - b * sq) * lo
            };
            let (v1, v2) = (val(ctrl.a1), val(ctrl.a2));
            min_gap = min_gap.min((v2 - v1).abs() / dt);
            if v2 > v1 {
                wi.push(v2);
                pi.push(ctrl.a2);
            } else {
                wi.push(v1);
                pi.push(ctrl.a1);
            }
        }
        w[i] = wi;
        policy[i] = pi;
    }
    Ok(DpSolution {
        rho,
        times,
        w,
        policy,
        min_gap,
    })
}

/// `n`-player game: player `i` has generator
/// `f^i = −φ(t − s) k^i(a★) + b(a★) z^i + ½ q (z^i)²` with
/// `k^i(a) = ½ c (a^i)² − θ a^i Σ_{j≠i} a^j`, `b(a) = Σ_j a^j`, and the Nash
/// action `a★` computed from the diagonal `Z_t^t`. Free term
/// `ξ^i(s) = w^i φ(T − s) tanh(X_T)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Game {
    pub players: usize,
    pub c: f64,
    pub theta: f64,
    pub q: f64,
    pub discount: Discount,
    pub a1: f64,
    pub a2: f64,
    /// Terminal weights, one per player.
    pub weights: Vec<f64>,
    pub horizon: f64,
}

impl Game {
    pub fn validate(&self) -> Result<()> {
        if self.players == 0 || self.weights.len() != self.players {
            return Err(Error::Config(format!(
                "need one weight per player, got {} for {}",
                self.weights.len(),
                self.players
            )));
        }
        if !(self.a1 < self.a2) || !(self.c > 0.0) {
            return Err(Error::Config("need a1 < a2 and c > 0".into()));
        }
        if !(self.theta.abs() * (self.players as f64 - 1.0) < self.c) {
            return Err(Error::Config("best-response map must contract: |θ|(n−1) < c".into()));
        }
        self.discount.validate(self.horizon)
    }

    fn k(&self, i: usize, a: &[f64]) -> f64 {
        let others: f64 = a.iter().enumerate().filter(|(j, _)| *j != i).map(|(_, x)| x).sum();
        0.5 * self.c * a[i] * a[i] - self.theta * a[i] * others
    }

    /// Nash equilibrium of the stage game given each player's diagonal `z`,
    /// by simultaneous best responses to 1e-14.
    pub fn nash(&self, v: &[f64]) -> Vec<f64> {
        let n = self.players;
        let mut a = vec![0.0f64.clamp(self.a1, self.a2); n];
        let total = |a: &[f64]| a.iter().sum::<f64>();
        for _ in 0..10_000 {
            let sum = total(&a);
            let next: Vec<f64> = (0..n)
                .map(|i| ((v[i] + self.theta * (sum - a[i])) / self.c).clamp(self.a1, self.a2))
                .collect();
            let gap = next.iter().zip(&a).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
            a = next;
            if gap <= 1e-14 {
                break;
            }
        }
        a
    }
}

impl BsvieCoefficients for Game {
    fn dim(&self) -> usize {
        self.players
    }
    fn xi(&self, s: f64, path: PathRef<'_>, out: &mut [f64]) {
        let base = self.discount.phi(self.horizon - s) * path.terminal()[0].tanh();
        for (o, w) in out.iter_mut().zip(&self.weights) {
            *o = w * base;
        }
    }
    fn d_xi(&self, s: f64, path: PathRef<'_>, out: &mut [f64]) {
        let base = -self.discount.dphi(self.horizon - s) * path.terminal()[0].tanh();
        for (o, w) in out.iter_mut().zip(&self.weights) {
            *o = w * base;
        }
    }
    fn f(&self, s: f64, pt: &Point<'_>, _y: &[f64], z: &[f64], _u: &[f64], v: &[f64], out: &mut [f64]) {
        let a = self.nash(v);
        let b: f64 = a.iter().sum();
        let phi = self.discount.phi(pt.t - s);
        for i in 0..self.players {
            out[i] = -phi * self.k(i, &a) + b * z[i] + 0.5 * self.q * z[i] * z[i];
        }
    }
    fn grad_f(
        &self,
        s: f64,
        pt: &Point<'_>,
        _dy: &[f64],
        dz: &[f64],
        _y: &[f64],
        z: &[f64],
        _u: &[f64],
        v: &[f64],
        out: &mut [f64],
    ) {
        let a = self.nash(v);
        let b: f64 = a.iter().sum();
        let dphi_ds = -self.discount.dphi(pt.t - s);
        for i in 0..self.players {
            out[i] = -dphi_ds * self.k(i, &a) + (b + self.q * z[i]) * dz[i];
        }
    }
}

/// Scalar system with quadratic growth and all growth constants equal to
/// `l`:
///
/// ```text
/// h  = l (sin y + ½z² + tanh u + ½v² + ∂u) + A cos x
/// g  = l (sin u + ½v² + s tanh y + ½z²)
/// ∇g = l (tanh y + cos u · ∂u + v · ∂v)
/// ξ = η(s) = A sin X_T
/// ```
///
/// The amplitude `A` scales the data norms entering `I₀^ε`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmallQuadratic {
    pub l: f64,
    pub amplitude: f64,
}

impl SmallQuadratic {
    pub fn constants(&self) -> crate::certify::GrowthConstants {
        crate::certify::GrowthConstants::uniform(self.l)
    }
}

impl SystemCoefficients for SmallQuadratic {
    fn d1(&self) -> usize {
        1
    }
    fn d2(&self) -> usize {
        1
    }
    fn xi(&self, path: PathRef<'_>, out: &mut [f64]) {
        out[0] = self.amplitude * path.terminal()[0].sin();
    }
    fn eta(&self, _s: f64, path: PathRef<'_>, out: &mut [f64]) {
        out[0] = self.amplitude * path.terminal()[0].sin();
    }
    fn d_eta(&self, _s: f64, _path: PathRef<'_>, out: &mut [f64]) {
        out[0] = 0.0;
    }
    fn h(&self, pt: &Point<'_>, y: &[f64], z: &[f64], u: &[f64], v: &[f64], du: &[f64], out: &mut [f64]) {
        let q = y[0].sin() + 0.5 * z[0] * z[0] + u[0].tanh() + 0.5 * v[0] * v[0] + du[0];
        out[0] = self.l * q + self.amplitude * pt.x[0].cos();
    }
    fn g(&self, s: f64, _pt: &Point<'_>, u: &[f64], v: &[f64], y: &[f64], z: &[f64], out: &mut [f64]) {
        out[0] = self.l * (u[0].sin() + 0.5 * v[0] * v[0] + s * y[0].tanh() + 0.5 * z[0] * z[0]);
    }
    fn grad_g(
        &self,
        _s: f64,
        _pt: &Point<'_>,
        du: &[f64],
        dv: &[f64],
        u: &[f64],
        v: &[f64],
        y: &[f64],
        _z: &[f64],
        out: &mut [f64],
    ) {
        out[0] = self.l * (y[0].tanh() + u[0].cos() * du[0] + v[0] * dv[0]);
    }
}
