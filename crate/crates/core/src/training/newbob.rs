/// What the trainer should do after an epoch.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Action {
    Continue,
    Halve,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Constant rate while the cv metric keeps improving enough.
    Ramp,
    /// Rate halves every epoch.
    Halving,
    Stopped,
}

impl Phase {
    pub fn code(self) -> u8 {
        match self {
            Phase::Ramp => 0,
            Phase::Halving => 1,
            Phase::Stopped => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Phase> {
        match code {
            0 => Some(Phase::Ramp),
            1 => Some(Phase::Halving),
            2 => Some(Phase::Stopped),
            _ => None,
        }
    }
}

/// NewBob-style schedule on a lower-is-better cv metric. Improvement is
/// measured relative to the best value seen so far.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewBob {
    lr: f64,
    ramp_threshold: f64,
    stop_threshold: f64,
    max_epochs: usize,
    phase: Phase,
    best: Option<f64>,
}

impl NewBob {
    pub fn new(lr: f64, ramp_threshold: f64, stop_threshold: f64, max_epochs: usize) -> Self {
        NewBob {
            lr,
            ramp_threshold,
            stop_threshold,
            max_epochs,
            phase: Phase::Ramp,
            best: None,
        }
    }

    /// Rebuilds a schedule mid-run, as stored in a checkpoint.
    pub fn restore(mut self, lr: f64, phase: Phase, best: Option<f64>) -> Self {
        self.lr = lr;
        self.phase = phase;
        self.best = best;
        self
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn best(&self) -> Option<f64> {
        self.best
    }

    /// Feeds the cv metric after `epoch` (1-based) epochs and returns the
    /// rate for the next epoch together with the decision.
    pub fn update(&mut self, cv: f64, epoch: usize) -> (f64, Action) {
        if self.phase == Phase::Stopped {
            return (self.lr, Action::Stop);
        }
        if !cv.is_finite() {
            self.phase = Phase::Stopped;
            return (self.lr, Action::Stop);
        }
        let improvement = self.best.map(|b| (b - cv) / b.abs().max(f64::MIN_POSITIVE));
        self.best = Some(self.best.map_or(cv, |b| b.min(cv)));
        let mut action = match (self.phase, improvement) {
            (_, None) => Action::Continue,
            (Phase::Ramp, Some(i)) if i >= self.ramp_threshold => Action::Continue,
            (Phase::Ramp, Some(_)) => Action::Halve,
            (_, Some(i)) if i < self.stop_threshold => Action::Stop,
            _ => Action::Halve,
        };
        if epoch >= self.max_epochs {
            action = Action::Stop;
        }
        match action {
            Action::Continue => {}
            Action::Halve => {
                self.lr *= 0.5;
                self.phase = Phase::Halving;
            }
            Action::Stop => self.phase = Phase::Stopped,
        }
        (self.lr, action)
    }
}
