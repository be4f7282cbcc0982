//! Gap-actuated, single-ring signal-controller mock driven by loop presence.
//!
//! Time is kept in integer milliseconds and each step is split at phase
//! boundaries, so phase durations are exact regardless of the step size.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::presence::PresenceMessage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TscTiming {
    pub min_green_ms: u64,
    pub max_green_ms: u64,
    pub gap_ms: u64,
    pub yellow_ms: u64,
    pub all_red_ms: u64,
}

impl Default for TscTiming {
    fn default() -> Self {
        Self {
            min_green_ms: 5_000,
            max_green_ms: 30_000,
            gap_ms: 3_000,
            yellow_ms: 3_000,
            all_red_ms: 1_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TscApproach {
    pub id: String,
    /// Loops whose presence calls or extends this approach.
    pub loops: Vec<String>,
    #[serde(default)]
    pub timing: TscTiming,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TscPlan {
    pub approaches: Vec<TscApproach>,
}

impl TscPlan {
    pub fn validate(&self) -> Result<(), String> {
        if self.approaches.is_empty() {
            return Err("signal plan has no approaches".into());
        }
        for a in &self.approaches {
            let t = a.timing;
            if t.min_green_ms == 0 || t.min_green_ms > t.max_green_ms {
                return Err(format!("approach {}: need 0 < min_green <= max_green", a.id));
            }
            if t.gap_ms == 0 || t.yellow_ms == 0 {
                return Err(format!("approach {}: gap and yellow must be positive", a.id));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Signal {
    Green,
    Yellow,
    Red,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TscEvent {
    pub at_ms: i64,
    pub approach: String,
    pub signal: Signal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stage {
    Green,
    Yellow,
    AllRed,
}

#[derive(Debug, Clone)]
pub struct TscController {
    plan: TscPlan,
    clock_ms: i64,
    serving: usize,
    stage: Stage,
    elapsed_ms: u64,
    gap_elapsed_ms: u64,
    presence: BTreeMap<String, bool>,
    demand: Vec<bool>,
}

impl TscController {
    /// Starts with the first approach green at `start_ms`.
    pub fn new(plan: TscPlan, start_ms: i64) -> Result<Self, String> {
        plan.validate()?;
        let n = plan.approaches.len();
        Ok(Self {
            plan,
            clock_ms: start_ms,
            serving: 0,
            stage: Stage::Green,
            elapsed_ms: 0,
            gap_elapsed_ms: 0,
            presence: BTreeMap::new(),
            demand: vec![false; n],
        })
    }

    pub fn clock_ms(&self) -> i64 {
        self.clock_ms
    }

    pub fn signal(&self, approach: usize) -> Signal {
        if approach != self.serving {
            return Signal::Red;
        }
        match self.stage {
            Stage::Green => Signal::Green,
            Stage::Yellow => Signal::Yellow,
            Stage::AllRed => Signal::Red,
        }
    }

    pub fn signals(&self) -> Vec<Signal> {
        (0..self.plan.approaches.len()).map(|a| self.signal(a)).collect()
    }

    /// Time spent in the current stage of the serving approach.
    pub fn elapsed_ms(&self) -> u64 {
        self.elapsed_ms
    }

    pub fn demand(&self) -> &[bool] {
        &self.demand
    }

    /// Updates the presence level of one loop (level semantics: the latest
    /// message wins).
    pub fn apply(&mut self, m: &PresenceMessage) {
        self.presence.insert(m.loop_id.clone(), m.state);
        self.register_demand();
    }

    fn approach_present(&self, a: usize) -> bool {
        self.plan.approaches[a]
            .loops
            .iter()
            .any(|l| self.presence.get(l).copied().unwrap_or(false))
    }

    fn register_demand(&mut self) {
        for a in 0..self.demand.len() {
            let served = a == self.serving && self.stage == Stage::Green;
            if !served && self.approach_present(a) {
                self.demand[a] = true;
            }
        }
    }

    fn next_approach(&self) -> usize {
        let n = self.demand.len();
        (1..=n)
            .map(|k| (self.serving + k) % n)
            .find(|&a| self.demand[a])
            .unwrap_or((self.serving + 1) % n)
    }

    fn event(&self, approach: usize, signal: Signal) -> TscEvent {
        TscEvent {
            at_ms: self.clock_ms,
            approach: self.plan.approaches[approach].id.clone(),
            signal,
        }
    }

    /// Advances the controller by `dt_ms` and returns the signal changes in
    /// time order.
    pub fn step(&mut self, dt_ms: u64) -> Vec<TscEvent> {
        let mut events = Vec::new();
        let mut remaining = dt_ms;
        loop {
            self.register_demand();
            let t = self.plan.approaches[self.serving].timing;
            let (end, present) = match self.stage {
                Stage::Green => {
                    let present = self.approach_present(self.serving);
                    let end = if present {
                        t.max_green_ms
                    } else {
                        let gap_out = self.elapsed_ms + t.gap_ms.saturating_sub(self.gap_elapsed_ms);
                        gap_out.max(t.min_green_ms).min(t.max_green_ms)
                    };
                    (end, present)
                }
                Stage::Yellow => (t.yellow_ms, false),
                Stage::AllRed => (t.all_red_ms, false),
            };
            let adv = remaining.min(end - self.elapsed_ms);
            self.elapsed_ms += adv;
            self.clock_ms += adv as i64;
            remaining -= adv;
            if self.stage == Stage::Green {
                self.gap_elapsed_ms = if present { 0 } else { self.gap_elapsed_ms + adv };
            }
            if self.elapsed_ms < end {
                break;
            }
            self.elapsed_ms = 0;
            match self.stage {
                Stage::Green => {
                    self.stage = Stage::Yellow;
                    events.push(self.event(self.serving, Signal::Yellow));
                }
                Stage::Yellow => {
                    self.stage = Stage::AllRed;
                    events.push(self.event(self.serving, Signal::Red));
                }
                Stage::AllRed => {
                    self.serving = self.next_approach();
                    self.demand[self.serving] = false;
                    self.stage = Stage::Green;
                    self.gap_elapsed_ms = 0;
                    events.push(self.event(self.serving, Signal::Green));
                }
            }
            if remaining == 0 && self.stage != Stage::AllRed {
                break;
            }
        }
        events
    }
}
