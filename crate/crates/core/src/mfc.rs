//! Model-free control: the intelligent proportional (iP) law and the two
//! sliding-window estimators of the lumped term `F` in `ẏ = F + α·u`.
//!
//! All quantities are in the caller's time unit. The cluster simulator
//! drives the controller in sampling periods (`h = 1`), the unit tests in
//! seconds.

use std::collections::VecDeque;
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Which `F` estimator runs once the window is full.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EstimatorKind {
    /// Algebraic estimator: `F = -(6/T³)·∫₀ᵀ [(T-2σ)·y(σ) + α·σ·(T-σ)·u(σ)] dσ`.
    Algebraic,
    /// Moving average of `ẏ_d - α·u ∓ K_P·e`, reusing controller quantities.
    #[default]
    Online,
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorKind::Algebraic => "algebraic",
            EstimatorKind::Online => "online",
        })
    }
}

impl FromStr for EstimatorKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "algebraic" => Ok(EstimatorKind::Algebraic),
            "online" => Ok(EstimatorKind::Online),
            other => Err(format!("expected `algebraic` or `online`, got `{other}`")),
        }
    }
}

/// Sign of the `K_P·e` term inside the online estimator's integrand.
///
/// `Literal` integrates `ẏ_d - α·u - K_P·e`; `Rearranged` integrates
/// `ẏ_d - α·u + K_P·e`, which is what solving the iP law for `F` gives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OnlineKpSign {
    #[default]
    Literal,
    Rearranged,
}

impl OnlineKpSign {
    fn factor(self) -> f64 {
        match self {
            OnlineKpSign::Literal => -1.0,
            OnlineKpSign::Rearranged => 1.0,
        }
    }
}

impl fmt::Display for OnlineKpSign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OnlineKpSign::Literal => "literal",
            OnlineKpSign::Rearranged => "rearranged",
        })
    }
}

impl FromStr for OnlineKpSign {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "literal" => Ok(OnlineKpSign::Literal),
            "rearranged" => Ok(OnlineKpSign::Rearranged),
            other => Err(format!("expected `literal` or `rearranged`, got `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControllerConfig {
    /// Input gain of the ultra-local model. Its sign must match the plant's
    /// control direction.
    pub alpha: f64,
    /// Proportional gain, per time unit.
    pub k_p: f64,
    /// Estimator window length.
    pub tau: f64,
    /// Sampling period.
    pub h: f64,
    pub estimator: EstimatorKind,
    pub online_kp_sign: OnlineKpSign,
    pub u_min: f64,
    pub u_max: f64,
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        match self.problems().into_iter().next() {
            Some(e) => Err(e),
            None => Ok(()),
        }
    }

    /// Every violated invariant, in field order.
    pub fn problems(&self) -> Vec<Error> {
        let finite = [
            ("alpha", self.alpha),
            ("k_p", self.k_p),
            ("tau", self.tau),
            ("h", self.h),
            ("u_min", self.u_min),
            ("u_max", self.u_max),
        ];
        let non_finite: Vec<Error> = finite
            .iter()
            .filter(|(_, v)| !v.is_finite())
            .map(|(field, v)| Error::invalid(field, format!("must be finite, got {v}")))
            .collect();
        if !non_finite.is_empty() {
            return non_finite;
        }
        let mut out = Vec::new();
        if self.alpha == 0.0 {
            out.push(Error::invalid("alpha", "must be nonzero"));
        }
        if self.k_p <= 0.0 {
            out.push(Error::invalid(
                "k_p",
                format!("must be > 0, got {}", self.k_p),
            ));
        }
        if self.h <= 0.0 {
            out.push(Error::invalid("h", format!("must be > 0, got {}", self.h)));
        } else if self.tau < 2.0 * self.h * (1.0 - 1e-12) {
            out.push(Error::invalid(
                "tau",
                format!("must be >= 2*h = {}, got {}", 2.0 * self.h, self.tau),
            ));
        }
        if self.u_min >= self.u_max {
            out.push(Error::invalid(
                "u_min",
                format!("must be < u_max ({} >= {})", self.u_min, self.u_max),
            ));
        }
        out
    }

    /// Number of samples held by the estimator window, `ceil(tau/h)`.
    pub fn window_len(&self) -> usize {
        let ratio = self.tau / self.h;
        // absorb representation error such as 1.0/0.01 = 100.00000000000001
        (ratio - 1e-9 * ratio.max(1.0)).ceil().max(2.0) as usize
    }
}

/// One sampling instant as seen by the estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub y: f64,
    pub u: f64,
    pub y_d: f64,
    pub yd_dot: f64,
    pub e: f64,
}

impl Sample {
    pub fn new(t: f64, y: f64, u: f64, y_d: f64, yd_dot: f64) -> Self {
        Sample {
            t,
            y,
            u,
            y_d,
            yd_dot,
            e: y_d - y,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Clamp {
    None,
    Low,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IpOutput {
    /// Command after clamping to `[u_min, u_max]`.
    pub u: f64,
    pub unclamped: f64,
    pub clamp: Clamp,
}

impl IpOutput {
    pub fn is_clamped(&self) -> bool {
        self.clamp != Clamp::None
    }
}

/// iP law `u = -(F_estim - ẏ_d - K_P·e)/α`, clamped to the command range.
pub fn ip_control(f_estim: f64, yd_dot: f64, e: f64, cfg: &ControllerConfig) -> Result<IpOutput> {
    for (field, v) in [("f_estim", f_estim), ("yd_dot", yd_dot), ("e", e)] {
        if !v.is_finite() {
            return Err(Error::invalid(field, format!("must be finite, got {v}")));
        }
    }
    if cfg.alpha == 0.0 || !cfg.alpha.is_finite() {
        return Err(Error::invalid("alpha", "must be finite and nonzero"));
    }
    let unclamped = -(f_estim - yd_dot - cfg.k_p * e) / cfg.alpha;
    let (u, clamp) = if unclamped < cfg.u_min {
        (cfg.u_min, Clamp::Low)
    } else if unclamped > cfg.u_max {
        (cfg.u_max, Clamp::High)
    } else {
        (unclamped, Clamp::None)
    };
    Ok(IpOutput {
        u,
        unclamped,
        clamp,
    })
}

/// Composite trapezoidal rule on a uniform grid.
fn trapezoid<I: ExactSizeIterator<Item = f64>>(values: I, h: f64) -> f64 {
    let n = values.len();
    let mut sum = 0.0;
    for (i, v) in values.enumerate() {
        let w = if i == 0 || i + 1 == n { 0.5 } else { 1.0 };
        sum += w * v;
    }
    sum * h
}

fn full_window<'a>(window: &'a [Sample], cfg: &ControllerConfig) -> Result<&'a [Sample]> {
    let need = cfg.window_len();
    if window.len() < need {
        return Err(Error::WarmingUp {
            have: window.len(),
            need,
        });
    }
    Ok(&window[window.len() - need..])
}

/// Algebraic estimate over the most recent `ceil(tau/h)` samples.
///
/// σ is window-local time in `[0, T]` with `T = (n-1)·h` the span actually
/// covered by the `n` samples.
pub fn estimate_f_algebraic(window: &[Sample], cfg: &ControllerConfig) -> Result<f64> {
    let w = full_window(window, cfg)?;
    let h = cfg.h;
    let span = (w.len() - 1) as f64 * h;
    let integrand = w.iter().enumerate().map(|(i, s)| {
        let sigma = i as f64 * h;
        (span - 2.0 * sigma) * s.y + cfg.alpha * sigma * (span - sigma) * s.u
    });
    let f = -6.0 / span.powi(3) * trapezoid(integrand, h);
    finite(f)
}

/// Online estimate: windowed mean of `ẏ_d - α·u ∓ K_P·e`.
pub fn estimate_f_online(window: &[Sample], cfg: &ControllerConfig) -> Result<f64> {
    let w = full_window(window, cfg)?;
    let span = (w.len() - 1) as f64 * cfg.h;
    let sign = cfg.online_kp_sign.factor();
    let integrand = w
        .iter()
        .map(|s| s.yd_dot - cfg.alpha * s.u + sign * cfg.k_p * s.e);
    finite(trapezoid(integrand, cfg.h) / span)
}

fn finite(f: f64) -> Result<f64> {
    if f.is_finite() {
        Ok(f)
    } else {
        Err(Error::invalid("f_estim", format!("estimator produced {f}")))
    }
}

/// Measurements entering the controller at one sampling instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleInput {
    pub t: f64,
    pub y: f64,
    pub y_d: f64,
    pub yd_dot: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutput {
    pub u: f64,
    pub f_estim: f64,
    pub e: f64,
    /// True while the window has not yet filled for the first time.
    pub warming_up: bool,
    pub clamp: Clamp,
}

/// Mutable controller state: the sample window, the last estimate and the
/// last applied command.
#[derive(Debug, Clone, PartialEq)]
pub struct ControllerState {
    window: VecDeque<Sample>,
    f_estim: f64,
    last_u: f64,
    last_t: Option<f64>,
    last_y_d: Option<f64>,
    filled: bool,
}

impl ControllerState {
    /// Fresh state whose held command is `initial_u`.
    pub fn new(initial_u: f64) -> Self {
        ControllerState {
            window: VecDeque::new(),
            f_estim: 0.0,
            last_u: initial_u,
            last_t: None,
            last_y_d: None,
            filled: false,
        }
    }

    pub fn window(&self) -> &VecDeque<Sample> {
        &self.window
    }

    pub fn f_estim(&self) -> f64 {
        self.f_estim
    }

    pub fn last_u(&self) -> f64 {
        self.last_u
    }
}

/// Advances the controller by one sampling period.
///
/// The new sample enters the window holding the previous command, the
/// estimator runs, the iP law produces the new command and that command is
/// written back into the sample. Before the window first fills the estimate
/// is 0 and the command is held.
pub fn controller_step(
    state: &mut ControllerState,
    input: SampleInput,
    cfg: &ControllerConfig,
) -> Result<StepOutput> {
    for (field, v) in [
        ("t", input.t),
        ("y", input.y),
        ("y_d", input.y_d),
        ("yd_dot", input.yd_dot),
    ] {
        if !v.is_finite() {
            return Err(Error::invalid(field, format!("must be finite, got {v}")));
        }
    }
    if let Some(prev) = state.last_t {
        let expected = prev + cfg.h;
        if (input.t - expected).abs() > 1e-9 * expected.abs().max(1.0) {
            return Err(Error::OutOfOrder {
                expected,
                got: input.t,
            });
        }
    }

    let need = cfg.window_len();
    let sample = Sample::new(input.t, input.y, state.last_u, input.y_d, input.yd_dot);
    state.window.push_back(sample);
    let evicted = if state.window.len() > need {
        state.window.pop_front()
    } else {
        None
    };

    let outcome = if state.window.len() < need {
        Ok(None)
    } else {
        let w = state.window.make_contiguous();
        let f = match cfg.estimator {
            EstimatorKind::Algebraic => estimate_f_algebraic(w, cfg),
            EstimatorKind::Online => estimate_f_online(w, cfg),
        };
        f.and_then(|f| ip_control(f, input.yd_dot, sample.e, cfg).map(|ip| Some((f, ip))))
    };

    let computed = match outcome {
        Ok(c) => c,
        Err(err) => {
            state.window.pop_back();
            if let Some(s) = evicted {
                state.window.push_front(s);
            }
            return Err(err);
        }
    };

    let (f_estim, u, clamp, warming_up) = match computed {
        Some((f, ip)) => {
            state.filled = true;
            (f, ip.u, ip.clamp, false)
        }
        None => (0.0, state.last_u, Clamp::None, !state.filled),
    };
    if let Some(last) = state.window.back_mut() {
        last.u = u;
    }
    state.f_estim = f_estim;
    state.last_u = u;
    state.last_t = Some(input.t);
    state.last_y_d = Some(input.y_d);
    Ok(StepOutput {
        u,
        f_estim,
        e: sample.e,
        warming_up,
        clamp,
    })
}

/// Owns a configuration and its state; derives `ẏ_d` by backward difference.
#[derive(Debug, Clone)]
pub struct Controller {
    cfg: ControllerConfig,
    state: ControllerState,
}

impl Controller {
    /// Validated controller whose held command starts at `u_min`.
    pub fn new(cfg: ControllerConfig) -> Result<Self> {
        let u0 = cfg.u_min;
        Self::with_initial_command(cfg, u0)
    }

    pub fn with_initial_command(cfg: ControllerConfig, initial_u: f64) -> Result<Self> {
        cfg.validate()?;
        if !initial_u.is_finite() {
            return Err(Error::invalid("initial_u", "must be finite"));
        }
        let initial_u = initial_u.clamp(cfg.u_min, cfg.u_max);
        Ok(Controller {
            cfg,
            state: ControllerState::new(initial_u),
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn state(&self) -> &ControllerState {
        &self.state
    }

    pub fn reset(&mut self) {
        self.state = ControllerState::new(self.cfg.u_min);
    }

    pub fn step(&mut self, input: SampleInput) -> Result<StepOutput> {
        controller_step(&mut self.state, input, &self.cfg)
    }

    /// Like [`Controller::step`], with `ẏ_d = (y_d(t) - y_d(t-h))/h` and
    /// `ẏ_d = 0` on the first call.
    pub fn observe(&mut self, t: f64, y: f64, y_d: f64) -> Result<StepOutput> {
        let yd_dot = match self.state.last_y_d {
            Some(prev) => (y_d - prev) / self.cfg.h,
            None => 0.0,
        };
        self.step(SampleInput { t, y, y_d, yd_dot })
    }
}
