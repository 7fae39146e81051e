//! Predicting a delayed job's total LO-mode execution time from its progress
//! at a checkpoint.
//!
//! All models round fractional ticks half-up and never predict less than the
//! profiled `C(LO)`: budgets are only ever extended.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::{MemoryProfile, Time};
use crate::Error;

/// What the job looked like when it reached its checkpoint.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct CheckpointObservation {
    /// Budget consumed so far.
    pub t_spent: Time,
    /// Profiled LO-mode time to reach this checkpoint.
    pub t_ref: Time,
    /// Memory accesses performed up to the checkpoint, when counted.
    pub m_cp: Option<u64>,
}

/// Delay relative to the profiled checkpoint time. Early arrival is zero delay.
#[derive(Copy, Clone, Debug, PartialEq, Serialize)]
pub struct DelayMetric {
    pub x_percent: f64,
    pub y_abs: Time,
}

pub fn observe_delay(obs: &CheckpointObservation) -> DelayMetric {
    assert!(obs.t_ref > 0, "checkpoint reference time must be positive");
    let y_abs = obs.t_spent.saturating_sub(obs.t_ref);
    DelayMetric {
        x_percent: 100.0 * y_abs as f64 / obs.t_ref as f64,
        y_abs,
    }
}

/// Extrapolation gain, stored in thousandths so predictions stay exact.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Gain(u32);

impl Gain {
    pub const ONE: Gain = Gain(1000);

    pub fn from_f64(k: f64) -> Option<Gain> {
        let milli = (k * 1000.0).round();
        (k.is_finite() && milli >= 1.0 && milli <= u32::MAX as f64).then_some(Gain(milli as u32))
    }

    pub fn as_f64(self) -> f64 {
        self.0 as f64 / 1000.0
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum PredictionModel {
    /// `C' = C(LO) + K * C(LO) * X / 100`.
    Linear(Gain),
    /// `C' = C(LO) + Y`.
    Compensatory,
    /// Memory-access progress metric.
    Memory,
}

impl Default for PredictionModel {
    fn default() -> Self {
        PredictionModel::Linear(Gain::ONE)
    }
}

/// Gains swept when comparing linear variants.
pub const GAIN_GRID: [f64; 7] = [0.1, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5];

impl fmt::Display for PredictionModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredictionModel::Linear(k) if *k == Gain::ONE => f.write_str("linear"),
            PredictionModel::Linear(k) => write!(f, "linear:{}", k.as_f64()),
            PredictionModel::Compensatory => f.write_str("compensate"),
            PredictionModel::Memory => f.write_str("mem"),
        }
    }
}

impl FromStr for PredictionModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        let bad = || {
            Error::Config(format!(
                "unknown prediction model `{s}` (linear[:K] | compensate | mem)"
            ))
        };
        match s {
            "linear" => Ok(PredictionModel::Linear(Gain::ONE)),
            "compensate" | "compensatory" => Ok(PredictionModel::Compensatory),
            "mem" | "memory" => Ok(PredictionModel::Memory),
            _ => {
                let k = s.strip_prefix("linear:").ok_or_else(bad)?;
                let k: f64 = k.parse().map_err(|_| bad())?;
                Gain::from_f64(k).map(PredictionModel::Linear).ok_or_else(bad)
            }
        }
    }
}

impl From<PredictionModel> for String {
    fn from(m: PredictionModel) -> String {
        m.to_string()
    }
}

impl TryFrom<String> for PredictionModel {
    type Error = Error;
    fn try_from(s: String) -> Result<Self, Error> {
        s.parse()
    }
}

/// `num / den` rounded half-up.
fn div_round(num: u128, den: u128) -> u128 {
    (2 * num + den) / (2 * den)
}

fn to_time(v: u128) -> Time {
    Time::try_from(v).unwrap_or(Time::MAX)
}

/// Predicted total execution time `C'(LO)`.
pub fn predict_total(
    model: PredictionModel,
    c_lo: Time,
    metric: &DelayMetric,
    obs: &CheckpointObservation,
    memory: Option<&MemoryProfile>,
) -> Result<Time, Error> {
    match model {
        PredictionModel::Linear(k) => {
            // K * C * X / 100 with X = 100 * Y / t_ref, kept in integers.
            let num = k.0 as u128 * c_lo as u128 * metric.y_abs as u128;
            let den = 1000 * obs.t_ref as u128;
            Ok(c_lo.saturating_add(to_time(div_round(num, den))))
        }
        PredictionModel::Compensatory => Ok(c_lo.saturating_add(metric.y_abs)),
        PredictionModel::Memory => {
            let profile = memory.ok_or(Error::MissingMemoryData)?;
            predict_memory(profile, c_lo, obs)
        }
    }
}

/// Memory-progress prediction.
///
/// With `Pr_LO = C(LO)/M(LO)` and `Pr_CP = C_used/M_CP`, a job progressing no
/// slower than profiled keeps `C(LO)`. Otherwise the expected post-checkpoint
/// accesses `M_CP * M_post/M_pre` are each charged the extra `Pr_CP - Pr_LO`.
pub fn predict_memory(profile: &MemoryProfile, c_lo: Time, obs: &CheckpointObservation) -> Result<Time, Error> {
    let m_cp = obs.m_cp.filter(|&m| m > 0).ok_or(Error::MissingMemoryData)?;
    if profile.m_lo == 0 || profile.m_pre_cp_lo == 0 {
        return Err(Error::MissingMemoryData);
    }
    let (m_lo, m_pre, m_post) = (
        profile.m_lo as u128,
        profile.m_pre_cp_lo as u128,
        profile.m_post_cp_lo as u128,
    );
    // Pr_CP > Pr_LO  <=>  C_used * M(LO) > C(LO) * M_CP
    let used_scaled = obs.t_spent as u128 * m_lo;
    let nominal_scaled = c_lo as u128 * m_cp as u128;
    if used_scaled <= nominal_scaled {
        return Ok(c_lo);
    }
    // (M_CP * M_post / M_pre) * (C_used/M_CP - C/M) = M_post * (C_used*M - C*M_CP) / (M_pre * M)
    let increment = div_round(m_post * (used_scaled - nominal_scaled), m_pre * m_lo);
    Ok(c_lo.saturating_add(to_time(increment)))
}

/// Extra LO budget to ask for: how far the prediction exceeds the budget the
/// job already has. With an overestimated budget `C(LO) + o` this is `e - o`.
pub fn effective_extra(c_prime: Time, current_budget: Time) -> Time {
    c_prime.saturating_sub(current_budget)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn obs(t_spent: Time, t_ref: Time) -> CheckpointObservation {
        CheckpointObservation {
            t_spent,
            t_ref,
            m_cp: None,
        }
    }

    #[test]
    fn delay_examples() {
        let m = observe_delay(&obs(600, 500));
        assert_eq!((m.x_percent, m.y_abs), (20.0, 100));
        let m = observe_delay(&obs(500, 500));
        assert_eq!((m.x_percent, m.y_abs), (0.0, 0));
        let m = observe_delay(&obs(450, 500));
        assert_eq!((m.x_percent, m.y_abs), (0.0, 0));
    }

    #[test]
    fn linear_examples() {
        let o = obs(600_000, 500_000);
        let m = observe_delay(&o);
        let one = PredictionModel::Linear(Gain::ONE);
        assert_eq!(predict_total(one, 2_000_000, &m, &o, None).unwrap(), 2_400_000);
        let half = PredictionModel::Linear(Gain::from_f64(0.5).unwrap());
        assert_eq!(predict_total(half, 2_000_000, &m, &o, None).unwrap(), 2_200_000);
    }

    #[test]
    fn half_up_rounding_on_small_budgets() {
        // 3 units delayed 66%: 3 * 0.66 = 1.98 -> 2.
        let o = obs(166, 100);
        let m = observe_delay(&o);
        assert_eq!(predict_total(PredictionModel::default(), 3, &m, &o, None).unwrap(), 5);
        // exact half rounds up: 1 * 50 / 100 = 0.5 -> 1
        let o = obs(150, 100);
        let m = observe_delay(&o);
        assert_eq!(predict_total(PredictionModel::default(), 1, &m, &o, None).unwrap(), 2);
    }

    #[test]
    fn no_delay_is_identity_for_every_model() {
        let mem = MemoryProfile::from_split(1000, 3000);
        let mut o = obs(100, 100);
        o.m_cp = Some(1000);
        let m = observe_delay(&o);
        for model in [
            PredictionModel::default(),
            PredictionModel::Compensatory,
            PredictionModel::Memory,
        ] {
            assert_eq!(predict_total(model, 400, &m, &o, Some(&mem)).unwrap(), 400, "{model}");
        }
    }

    #[test]
    fn memory_worked_example() {
        let mem = MemoryProfile::from_split(1000, 3000);
        let o = CheckpointObservation {
            t_spent: 180,
            t_ref: 100,
            m_cp: Some(1200),
        };
        // Independent float evaluation of the defining formulas.
        let pr_lo = 400.0 / 4000.0;
        let pr_cp = 180.0 / 1200.0;
        let expected_post = 1200.0 * 3000.0 / 1000.0;
        let oracle = 400.0 + expected_post * (pr_cp - pr_lo);
        assert!((oracle - 580.0f64).abs() < 1e-9);
        assert_eq!(predict_memory(&mem, 400, &o).unwrap(), 580);
    }

    #[test]
    fn memory_equal_progress_keeps_budget() {
        let mem = MemoryProfile::from_split(1000, 3000);
        // Pr_CP == Pr_LO exactly: 120 / 1200 == 400 / 4000
        let o = CheckpointObservation {
            t_spent: 120,
            t_ref: 100,
            m_cp: Some(1200),
        };
        assert_eq!(predict_memory(&mem, 400, &o).unwrap(), 400);
        // on-profile: M_CP = M_pre, C_used = C_cp
        let o = CheckpointObservation {
            t_spent: 100,
            t_ref: 100,
            m_cp: Some(1000),
        };
        assert_eq!(predict_memory(&mem, 400, &o).unwrap(), 400);
    }

    #[test]
    fn memory_without_data_is_an_error() {
        let o = obs(180, 100);
        let m = observe_delay(&o);
        assert!(matches!(
            predict_total(PredictionModel::Memory, 400, &m, &o, None),
            Err(Error::MissingMemoryData)
        ));
        let mem = MemoryProfile::from_split(1000, 3000);
        assert!(matches!(predict_memory(&mem, 400, &o), Err(Error::MissingMemoryData)));
    }

    #[test]
    fn effective_extra_examples() {
        assert_eq!(effective_extra(2400, 2000), 400);
        assert_eq!(effective_extra(2400, 2400), 0);
        assert_eq!(effective_extra(2400, 2200), 200);
        assert_eq!(effective_extra(1900, 2000), 0);
    }

    #[test]
    fn model_names_round_trip() {
        for s in ["linear", "linear:0.5", "linear:1.25", "compensate", "mem"] {
            assert_eq!(s.parse::<PredictionModel>().unwrap().to_string(), s);
        }
        assert!("linear:0".parse::<PredictionModel>().is_err());
        assert!("quadratic".parse::<PredictionModel>().is_err());
    }
}
