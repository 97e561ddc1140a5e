//! Named problems selectable from a configuration file.

use serde::{Deserialize, Serialize};
use voltra::bsvie::{BsvieCoefficients, FnBsvie};
use voltra::certify::GrowthConstants;
use voltra::presets::{Discount, Game, Reward, SmallQuadratic, TiControl};
use voltra::SystemCoefficients;

use crate::config::ConfigError;

/// Game parameters; the horizon comes from the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameParams {
    pub players: usize,
    pub c: f64,
    pub theta: f64,
    #[serde(default)]
    pub q: f64,
    pub discount: Discount,
    pub a1: f64,
    pub a2: f64,
    /// One per player; defaults to all ones.
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
}

/// Control parameters; horizon and drift cap come from the grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControlParams {
    pub a1: f64,
    pub a2: f64,
    pub discount: Discount,
    pub reward: Reward,
    pub f1: f64,
    #[serde(default)]
    pub g1: f64,
    #[serde(default)]
    pub g2: f64,
}

/// The preset registry. Selected by `preset = "<name>"` in `[problem]`,
/// with the parameters as sibling keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Problem {
    /// `ξ(s) = s·X_T`, `f ≡ 0`.
    LinearFreeTerm,
    /// `ξ(s) = 1 + s·X_T`, `f = −rate·y`.
    Decay { rate: f64 },
    /// Scalar BSVIE reading both diagonal slots.
    CoupledScalar,
    /// Two-component BSVIE with cross-coupling through the diagonal.
    CoupledPair,
    /// `n`-player game with non-exponential discounting.
    Game(GameParams),
    /// Quadratic system with uniform growth constant `l`.
    SmallQuadratic { l: f64, amplitude: f64 },
    /// Time-inconsistent control problem.
    TiControl(ControlParams),
}

/// A preset instantiated on a grid.
pub enum Built {
    Bsvie(Box<dyn BsvieCoefficients>),
    System(Box<dyn SystemCoefficients>),
}

impl Problem {
    pub fn name(&self) -> &'static str {
        match self {
            Problem::LinearFreeTerm => "linear-free-term",
            Problem::Decay { .. } => "decay",
            Problem::CoupledScalar => "coupled-scalar",
            Problem::CoupledPair => "coupled-pair",
            Problem::Game(_) => "game",
            Problem::SmallQuadratic { .. } => "small-quadratic",
            Problem::TiControl(_) => "ti-control",
        }
    }

    /// Dimension of the solved family.
    pub fn dim(&self) -> usize {
        match self {
            Problem::CoupledPair => 2,
            Problem::Game(g) => g.players,
            _ => 1,
        }
    }

    pub fn validate(&self, horizon: f64) -> Result<(), ConfigError> {
        let wrap = |e: voltra::Error| ConfigError::new(format!("problem ({}): {e}", self.name()));
        match self {
            Problem::Decay { rate } if !rate.is_finite() => Err(ConfigError::new("decay rate must be finite")),
            Problem::SmallQuadratic { l, amplitude } if !(*l >= 0.0 && amplitude.is_finite()) => {
                Err(ConfigError::new("small-quadratic needs l ≥ 0 and a finite amplitude"))
            }
            Problem::Game(p) => self.game(p, horizon).validate().map_err(wrap),
            // The drift cap depends on N; any N ≥ 1 gives the same checks.
            Problem::TiControl(p) => control(p, horizon, 1).validate().map_err(wrap),
            _ => Ok(()),
        }
    }

    fn game(&self, p: &GameParams, horizon: f64) -> Game {
        Game {
            players: p.players,
            c: p.c,
            theta: p.theta,
            q: p.q,
            discount: p.discount,
            a1: p.a1,
            a2: p.a2,
            weights: p.weights.clone().unwrap_or_else(|| vec![1.0; p.players]),
            horizon,
        }
    }

    /// Closure-backed BSVIE for the presets the tree oracle understands.
    pub fn fn_bsvie(&self) -> Option<FnBsvie> {
        match *self {
            Problem::LinearFreeTerm => Some(FnBsvie::free_term(1, |s, x, o| o[0] = s * x[0], |_, x, o| o[0] = x[0])),
            Problem::Decay { rate } => Some(
                FnBsvie::free_term(1, |s, x, o| o[0] = 1.0 + s * x[0], |_, x, o| o[0] = x[0]).with_generator(
                    move |_, _, _, y, _, _, _, o| o[0] = -rate * y[0],
                    move |_, _, _, dy, _, _, _, _, _, o| o[0] = -rate * dy[0],
                ),
            ),
            Problem::CoupledScalar => Some(coupled_scalar()),
            Problem::CoupledPair => Some(coupled_pair()),
            _ => None,
        }
    }

    /// Instantiates the preset for a grid with `n_steps` steps up to `horizon`.
    pub fn build(&self, horizon: f64, n_steps: usize) -> Built {
        if let Some(f) = self.fn_bsvie() {
            return Built::Bsvie(Box::new(f));
        }
        match self {
            Problem::Game(p) => Built::Bsvie(Box::new(self.game(p, horizon))),
            Problem::SmallQuadratic { l, amplitude } => Built::System(Box::new(SmallQuadratic {
                l: *l,
                amplitude: *amplitude,
            })),
            Problem::TiControl(p) => Built::System(Box::new(control(p, horizon, n_steps))),
            _ => unreachable!("closure-backed presets handled above"),
        }
    }

    /// The control problem, when this preset is one.
    pub fn ti_control(&self, horizon: f64, n_steps: usize) -> Option<TiControl> {
        match self {
            Problem::TiControl(p) => Some(control(p, horizon, n_steps)),
            _ => None,
        }
    }

    pub fn as_game(&self, horizon: f64) -> Option<Game> {
        match self {
            Problem::Game(p) => Some(self.game(p, horizon)),
            _ => None,
        }
    }

    /// Growth constants known in closed form.
    pub fn constants(&self) -> Option<GrowthConstants> {
        match self {
            Problem::LinearFreeTerm => Some(GrowthConstants::default()),
            Problem::SmallQuadratic { l, .. } => Some(GrowthConstants::uniform(*l)),
            _ => None,
        }
    }
}

fn control(p: &ControlParams, horizon: f64, n_steps: usize) -> TiControl {
    TiControl {
        a1: p.a1,
        a2: p.a2,
        discount: p.discount,
        reward: p.reward,
        f1: p.f1,
        g1: p.g1,
        g2: p.g2,
        time_cap: 0.0,
        horizon: 0.0,
    }
    .for_grid(horizon, n_steps)
}

fn coupled_scalar() -> FnBsvie {
    FnBsvie::free_term(
        1,
        |s, x, o| o[0] = s * x[0] + s.cos() * x[0] * x[0],
        |s, x, o| o[0] = x[0] - s.sin() * x[0] * x[0],
    )
    .with_generator(
        |_, s, x, y, z, u, v, o| o[0] = -0.5 * y[0] + 0.3 * s.sin() * z[0] + 0.2 * u[0] - 0.1 * v[0] * v[0] + 0.1 * s * x[0].cos(),
        |_, s, x, dy, dz, _, z, _, _, o| o[0] = 0.3 * s.cos() * z[0] + 0.1 * x[0].cos() - 0.5 * dy[0] + 0.3 * s.sin() * dz[0],
    )
}

fn coupled_pair() -> FnBsvie {
    FnBsvie::free_term(
        2,
        |s, x, o| {
            o[0] = (s * x[0]).tanh();
            o[1] = 1.0 + 0.5 * s * s;
        },
        |s, x, o| {
            let t = (s * x[0]).tanh();
            o[0] = x[0] * (1.0 - t * t);
            o[1] = s;
        },
    )
    .with_generator(
        |_, s, _, y, z, u, v, o| {
            o[0] = -0.3 * y[1] + 0.2 * s * z[0] + 0.1 * u[1] * u[0].sin();
            o[1] = 0.1 * y[0] * y[0] - 0.2 * v[0] + 0.05 * s * z[1];
        },
        |_, s, _, dy, dz, y, z, _, _, o| {
            o[0] = 0.2 * z[0] - 0.3 * dy[1] + 0.2 * s * dz[0];
            o[1] = 0.05 * z[1] + 0.2 * y[0] * dy[0] + 0.05 * s * dz[1];
        },
    )
}
