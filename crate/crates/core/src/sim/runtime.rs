use std::collections::VecDeque;
use std::time::{Duration, Instant};

use super::bot::Bot;
use crate::clock::{Clock, ManualClock, SystemClock};
use crate::ids::ParticipantId;
use crate::orchestrator::{
    Outbound, Relay, RelayError, RelayOptions, RouteError, RunRecord, SessionLog,
};
use crate::orchestrator::{ConditionSchedule, ExperimentConfig};
use crate::protocol::Envelope;
use crate::orchestrator::ConfigError;
use crate::session::{TemplateError, TemplateSet};

/// Simulated time that passes without any message before a run is declared
/// stuck.
pub const STALL_LIMIT: Duration = Duration::from_secs(10);

/// Virtual time jumps straight to the next event; real time sleeps.
#[derive(Debug, Clone)]
pub enum SimClock {
    Virtual(ManualClock),
    Real(SystemClock),
}

impl SimClock {
    pub fn virtual_clock() -> Self {
        SimClock::Virtual(ManualClock::new())
    }

    pub fn real() -> Self {
        SimClock::Real(SystemClock::new())
    }

    pub fn is_virtual(&self) -> bool {
        matches!(self, SimClock::Virtual(_))
    }

    pub fn wait_until(&self, t: Duration) {
        match self {
            SimClock::Virtual(c) => c.advance_to(t),
            SimClock::Real(c) => {
                let now = c.now();
                if t > now {
                    std::thread::sleep(t - now);
                }
            }
        }
    }
}

impl Clock for SimClock {
    fn now(&self) -> Duration {
        match self {
            SimClock::Virtual(c) => c.now(),
            SimClock::Real(c) => c.now(),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("simulation stalled at {at:?}: no pending events or no progress for {STALL_LIMIT:?}")]
    Stalled { at: Duration },
    #[error(transparent)]
    Route(#[from] RouteError),
    #[error(transparent)]
    Relay(#[from] RelayError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Templates(#[from] TemplateError),
    #[error("bot `{0}` is not part of this pair")]
    UnknownBot(ParticipantId),
}

/// A participant dropping out and coming back.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Dropout {
    pub participant: ParticipantId,
    /// Time since the run started.
    pub at: Duration,
    pub rejoin_after: Duration,
}

#[derive(Debug)]
pub struct SimRun {
    pub record: RunRecord,
    pub log: SessionLog,
    pub bots: Vec<Bot>,
    /// Time on the run's clock from start to finish.
    pub sim_duration: Duration,
    /// Real elapsed time.
    pub wall: Duration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BotEvent {
    Leave,
    Rejoin,
}

/// Runs a relay and its bots until the schedule is finished.
pub struct Harness {
    clock: SimClock,
    relay: Relay<SimClock>,
    bots: Vec<Bot>,
    online: Vec<bool>,
    events: Vec<(Duration, usize, BotEvent)>,
    start: Duration,
    last_progress: Duration,
}

impl Harness {
    pub fn new(
        schedule: ConditionSchedule,
        config: ExperimentConfig,
        templates: TemplateSet,
        bots: Vec<Bot>,
        clock: SimClock,
        options: RelayOptions,
    ) -> Result<Self, SimError> {
        let relay = Relay::new(schedule, config, templates, clock.clone(), options)?;
        let start = clock.now();
        let online = vec![false; bots.len()];
        Ok(Self {
            clock,
            relay,
            bots,
            online,
            events: Vec::new(),
            start,
            last_progress: start,
        })
    }

    pub fn with_dropouts(mut self, dropouts: &[Dropout]) -> Result<Self, SimError> {
        for d in dropouts {
            let i = self
                .bots
                .iter()
                .position(|b| b.id() == &d.participant)
                .ok_or_else(|| SimError::UnknownBot(d.participant.clone()))?;
            self.events.push((self.start + d.at, i, BotEvent::Leave));
            self.events.push((self.start + d.at + d.rejoin_after, i, BotEvent::Rejoin));
        }
        self.events.sort_by_key(|e| e.0);
        Ok(self)
    }

    pub fn relay(&self) -> &Relay<SimClock> {
        &self.relay
    }

    fn submit(&mut self, i: usize, msgs: Vec<Envelope>) -> Result<(), SimError> {
        self.pump(msgs.into_iter().map(|m| (i, m)).collect(), VecDeque::new())
    }

    fn deliver(&mut self, out: Vec<Outbound>) -> Result<(), SimError> {
        self.pump(VecDeque::new(), out.into())
    }

    /// Alternates between relay input and bot input until both are empty.
    /// Envelopes from one bot reach the relay in the order it made them.
    fn pump(
        &mut self,
        mut to_relay: VecDeque<(usize, Envelope)>,
        mut to_bots: VecDeque<Outbound>,
    ) -> Result<(), SimError> {
        loop {
            if let Some((i, env)) = to_relay.pop_front() {
                self.last_progress = self.clock.now();
                let id = self.bots[i].id().clone();
                to_bots.extend(self.relay.ingest(&id, env)?);
            } else if let Some(o) = to_bots.pop_front() {
                let Some(i) = self.bots.iter().position(|b| b.id() == &o.to) else {
                    continue;
                };
                if !self.online[i] {
                    continue;
                }
                let replies = self.bots[i].on_message(&o.envelope, self.clock.now());
                to_relay.extend(replies.into_iter().map(|m| (i, m)));
            } else {
                return Ok(());
            }
        }
    }

    fn join(&mut self, i: usize) -> Result<(), SimError> {
        self.online[i] = true;
        let msgs = self.bots[i].join(self.clock.now());
        self.submit(i, msgs)
    }

    fn next_event(&self) -> Option<Duration> {
        let bots = self
            .bots
            .iter()
            .zip(&self.online)
            .filter(|(_, on)| **on)
            .filter_map(|(b, _)| b.next_wakeup());
        let scripted = self.events.first().map(|e| e.0);
        bots.chain(self.relay.next_due()).chain(scripted).min()
    }

    pub fn run(mut self) -> Result<SimRun, SimError> {
        let wall = Instant::now();
        for i in 0..self.bots.len() {
            self.join(i)?;
        }
        while !self.relay.is_finished() {
            let Some(t) = self.next_event() else {
                return Err(SimError::Stalled { at: self.clock.now() });
            };
            if t > self.last_progress + STALL_LIMIT {
                return Err(SimError::Stalled { at: t });
            }
            self.clock.wait_until(t);
            let now = self.clock.now();

            if self.relay.next_due().is_some_and(|d| d <= now) {
                let out = self.relay.tick();
                self.deliver(out)?;
            }
            for i in 0..self.bots.len() {
                if self.online[i] && self.bots[i].next_wakeup().is_some_and(|w| w <= now) {
                    let msgs = self.bots[i].on_timer(now);
                    if !msgs.is_empty() {
                        self.last_progress = now;
                    }
                    self.submit(i, msgs)?;
                }
            }
            while self.events.first().is_some_and(|e| e.0 <= now) {
                let (_, i, what) = self.events.remove(0);
                self.last_progress = now;
                match what {
                    BotEvent::Leave => {
                        self.online[i] = false;
                        let id = self.bots[i].id().clone();
                        let out = self.relay.disconnect(&id);
                        self.deliver(out)?;
                    }
                    BotEvent::Rejoin => self.join(i)?,
                }
            }
        }
        let sim_duration = self.clock.now() - self.start;
        Ok(SimRun {
            record: self.relay.record(),
            log: self.relay.into_log(),
            bots: self.bots,
            sim_duration,
            wall: wall.elapsed(),
        })
    }
}
