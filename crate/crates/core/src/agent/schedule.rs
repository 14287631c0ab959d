/// Exponentially decaying exploration rate, clamped at its floor once the
/// horizon is reached.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub horizon: u64,
}

impl Default for EpsilonSchedule {
    fn default() -> Self {
        Self {
            start: 0.9,
            end: 0.25,
            horizon: 20_000,
        }
    }
}

impl EpsilonSchedule {
    /// `start · (end/start)^(t/horizon)` before the horizon, `end` after.
    pub fn value(&self, t: u64) -> f64 {
        if t >= self.horizon {
            return self.end;
        }
        let frac = t as f64 / self.horizon as f64;
        (self.start * (self.end / self.start).powf(frac)).clamp(self.end, self.start)
    }
}
