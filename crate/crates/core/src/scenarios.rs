//! Benchmark schemes: channel masking and the shared total power budget.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::{generate_channels, ChannelSet, SceneConfig};
use crate::passive::passive_solve;
use crate::pdd::{pdd_solve, Solved, SolverOptions};
use crate::{dbm_to_watts, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "double_active")]
    DoubleActive,
    #[serde(rename = "double_passive")]
    DoublePassive,
    #[serde(rename = "single_active_1")]
    SingleActive1,
    #[serde(rename = "single_active_2")]
    SingleActive2,
    #[serde(rename = "no_ris")]
    NoRis,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::DoubleActive,
        Scheme::DoublePassive,
        Scheme::SingleActive1,
        Scheme::SingleActive2,
        Scheme::NoRis,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::DoubleActive => "double_active",
            Scheme::DoublePassive => "double_passive",
            Scheme::SingleActive1 => "single_active_1",
            Scheme::SingleActive2 => "single_active_2",
            Scheme::NoRis => "no_ris",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|sc| sc.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown scheme `{s}`")))
    }
}

/// Total power consumption model shared by all schemes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeSpec {
    pub scheme: Scheme,
    /// Watts.
    pub q_total: f64,
    /// Fraction of `q_total` given to the radar.
    pub gamma: f64,
    /// Per-element switch and control power, watts.
    pub p_sw: f64,
    /// Per-element bias power of an active element, watts.
    pub p_dc: f64,
}

impl Default for SchemeSpec {
    fn default() -> Self {
        Self {
            scheme: Scheme::DoubleActive,
            q_total: 11.0,
            gamma: 0.9,
            p_sw: dbm_to_watts(-10.0),
            p_dc: dbm_to_watts(-5.0),
        }
    }
}

impl SchemeSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = self.q_total > 0.0
            && self.q_total.is_finite()
            && (0.0..=1.0).contains(&self.gamma)
            && self.p_sw >= 0.0
            && self.p_dc >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "power model needs q_total > 0, gamma in [0, 1] and nonnegative overheads, got {self:?}"
            )))
        }
    }
}

/// Watts assigned to the radar, the transmitter and the two surfaces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBudgets {
    pub p_r: f64,
    pub p_t: f64,
    pub p_1: f64,
    pub p_2: f64,
}

impl PowerBudgets {
    /// Writes the budgets into a copy of `cfg`.
    pub fn apply(&self, cfg: &SceneConfig) -> SceneConfig {
        SceneConfig {
            p_r: self.p_r,
            p_t: self.p_t,
            p_1: self.p_1,
            p_2: self.p_2,
            ..cfg.clone()
        }
    }
}

/// Splits `q_total` between radar, transmitter and surfaces for `spec.scheme`.
pub fn power_allocation(spec: &SchemeSpec, n1: usize, n2: usize) -> Result<PowerBudgets> {
    spec.validate()?;
    let p_r = spec.gamma * spec.q_total;
    let rest = spec.q_total - p_r;
    let per_active = spec.p_sw + spec.p_dc;
    let (residual, share) = match spec.scheme {
        Scheme::DoubleActive => (rest - (n1 + n2) as f64 * per_active, 3.0),
        Scheme::DoublePassive => (rest - (n1 + n2) as f64 * spec.p_sw, 1.0),
        Scheme::SingleActive1 => (rest - n1 as f64 * per_active, 2.0),
        Scheme::SingleActive2 => (rest - n2 as f64 * per_active, 2.0),
        Scheme::NoRis => (rest, 1.0),
    };
    if residual < 0.0 {
        return Err(Error::InfeasibleBudget(format!(
            "{} leaves {residual:.6} W after the radar share and element overheads",
            spec.scheme
        )));
    }
    let p = residual / share;
    let (p_1, p_2) = match spec.scheme {
        Scheme::DoubleActive => (p, p),
        Scheme::SingleActive1 => (p, 0.0),
        Scheme::SingleActive2 => (0.0, p),
        Scheme::DoublePassive | Scheme::NoRis => (0.0, 0.0),
    };
    Ok(PowerBudgets { p_r, p_t: p, p_1, p_2 })
}

/// Power drawn by element circuitry under `scheme`.
pub fn element_overhead(spec: &SchemeSpec, n1: usize, n2: usize) -> f64 {
    let active = spec.p_sw + spec.p_dc;
    match spec.scheme {
        Scheme::DoubleActive => (n1 + n2) as f64 * active,
        Scheme::DoublePassive => (n1 + n2) as f64 * spec.p_sw,
        Scheme::SingleActive1 => n1 as f64 * active,
        Scheme::SingleActive2 => n2 as f64 * active,
        Scheme::NoRis => 0.0,
    }
}

/// Zeroes the links of every surface the scheme does not deploy.
pub fn build_scenario(scheme: Scheme, ch: &ChannelSet) -> ChannelSet {
    let mut out = ch.clone();
    let drop1 = matches!(scheme, Scheme::SingleActive2 | Scheme::NoRis);
    let drop2 = matches!(scheme, Scheme::SingleActive1 | Scheme::NoRis);
    if drop1 || drop2 {
        out.h_12.fill(0.0.into());
    }
    if drop1 {
        out.h_b1.fill(0.0.into());
        out.h_1u.fill(0.0.into());
        out.h_1r.fill(0.0.into());
    }
    if drop2 {
        out.h_b2.fill(0.0.into());
        out.h_2u.fill(0.0.into());
        out.h_2r.fill(0.0.into());
    }
    out
}

/// Element layout for a scheme with `total` elements: the double schemes split
/// them evenly, a single surface receives all of them.
pub fn element_split(scheme: Scheme, total: usize) -> (usize, usize) {
    match scheme {
        Scheme::SingleActive1 => (total, total / 2),
        Scheme::SingleActive2 => (total / 2, total),
        _ => (total / 2, total - total / 2),
    }
}

/// Scene seen by `scheme`: single-surface schemes get every element of the
/// base layout on their surface, and budgets come from `power` when given.
/// Explicit budgets in `base` are kept otherwise, with undeployed surfaces set
/// to zero.
pub fn scheme_config(scheme: Scheme, base: &SceneConfig, power: Option<&SchemeSpec>) -> Result<SceneConfig> {
    let (n1, n2) = match scheme {
        Scheme::SingleActive1 | Scheme::SingleActive2 => element_split(scheme, base.n1 + base.n2),
        _ => (base.n1, base.n2),
    };
    let mut cfg = SceneConfig { n1, n2, ..base.clone() };
    if let Some(spec) = power {
        let spec = SchemeSpec { scheme, ..spec.clone() };
        cfg = power_allocation(&spec, n1, n2)?.apply(&cfg);
    } else {
        match scheme {
            Scheme::SingleActive1 => cfg.p_2 = 0.0,
            Scheme::SingleActive2 => cfg.p_1 = 0.0,
            Scheme::DoublePassive | Scheme::NoRis => {
                cfg.p_1 = 0.0;
                cfg.p_2 = 0.0;
            }
            Scheme::DoubleActive => {}
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Draws the channels of `cfg` for `seed` and masks them for `scheme`.
pub fn scheme_channels(scheme: Scheme, cfg: &SceneConfig, seed: u64) -> Result<ChannelSet> {
    Ok(build_scenario(scheme, &generate_channels(cfg, seed)?))
}

/// Runs the solver belonging to `scheme` on already masked channels.
pub fn solve_scheme(scheme: Scheme, ch: &ChannelSet, cfg: &SceneConfig, opts: &SolverOptions) -> Result<Solved> {
    match scheme {
        Scheme::DoublePassive => passive_solve(ch, cfg, opts),
        _ => pdd_solve(ch, cfg, opts),
    }
}
