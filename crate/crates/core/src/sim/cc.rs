//! Two-parameter congestion control: multiplicative decrease on each
//! marked feedback epoch, additive increase after each quiet period.

use serde::{Deserialize, Serialize};

use crate::units::{Bandwidth, SimTime};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CcMode {
    #[default]
    Rate,
    Window,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcParams {
    pub decrease_factor: f64,
    pub increase_period: SimTime,
    pub increase_step: Bandwidth,
    pub min_rate: Bandwidth,
    pub mode: CcMode,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CcEvent {
    Feedback(SimTime),
    Ack(SimTime),
    TimerTick(SimTime),
}

#[derive(Debug, Clone)]
pub struct CcState {
    params: CcParams,
    line_rate: u64,
    rate: u64,
    window: u64,
    max_window: u64,
    min_window: u64,
    window_step: u64,
    last_mark: Option<SimTime>,
}

impl CcState {
    /// `base_rtt` converts rate terms into window terms; `max_window` is the starting window.
    pub fn new(params: CcParams, line_rate: Bandwidth, base_rtt: SimTime, max_window: u64, mtu_bytes: u64) -> Self {
        let min_window = params.min_rate.bytes_in(base_rtt).max(mtu_bytes);
        CcState {
            params,
            line_rate: line_rate.bps(),
            rate: line_rate.bps(),
            window: max_window.max(min_window),
            max_window: max_window.max(min_window),
            min_window,
            window_step: params.increase_step.bytes_in(base_rtt).max(1),
            last_mark: None,
        }
    }

    pub fn rate(&self) -> Bandwidth {
        Bandwidth::from_bps(self.rate)
    }

    pub fn window_bytes(&self) -> u64 {
        self.window
    }

    pub fn mode(&self) -> CcMode {
        self.params.mode
    }

    /// True while an increase is still possible.
    pub fn recovering(&self) -> bool {
        match self.params.mode {
            CcMode::Rate => self.rate < self.line_rate,
            CcMode::Window => self.window < self.max_window,
        }
    }

    pub fn update(&mut self, event: CcEvent) {
        match event {
            CcEvent::Feedback(now) => {
                self.last_mark = Some(now);
                match self.params.mode {
                    CcMode::Rate => {
                        let cut = (self.rate as f64 * self.params.decrease_factor) as u64;
                        self.rate = cut.max(self.params.min_rate.bps());
                    }
                    CcMode::Window => {
                        let cut = (self.window as f64 * self.params.decrease_factor) as u64;
                        self.window = cut.max(self.min_window);
                    }
                }
            }
            CcEvent::Ack(_) => {}
            CcEvent::TimerTick(now) => {
                let quiet = self.last_mark.is_none_or(|t| now >= t + self.params.increase_period);
                if !quiet {
                    return;
                }
                match self.params.mode {
                    CcMode::Rate => {
                        self.rate = (self.rate + self.params.increase_step.bps()).min(self.line_rate);
                    }
                    CcMode::Window => {
                        self.window = (self.window + self.window_step).min(self.max_window);
                    }
                }
            }
        }
    }
}
