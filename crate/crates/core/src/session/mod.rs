//! Per-session whiteboard state and the two collaboration rule sets.
//!
//! * Sequential (SC): only the turn owner may open a stroke, one stroke is
//!   open at a time, and finishing a slot hands the turn to the partner.
//!   The participant with the lexicographically smaller id starts.
//! * Free (FC): both participants draw at once; each may hold one open
//!   stroke, and the first claim on a slot (in relay arrival order) wins.
//!
//! Slots are claimed explicitly through `BeginStroke.slot`. Ink is not
//! matched against the template geometry.
//!
//! The engine is a pure state machine: the same sequence of
//! `(sender, payload)` inputs always yields the same verdicts and state.

mod condition;
mod template;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use condition::{Condition, Mode, ParseLabelError, Platform};
pub use template::{Slot, Template, TemplateError, TemplateSet};

use crate::ids::{ParticipantId, StrokeId};
use crate::protocol::{RejectReason, SlotRef, StrokePayload, Verdict};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SlotStatus {
    Unclaimed,
    Claimed {
        participant: ParticipantId,
        stroke_id: StrokeId,
    },
    Completed {
        participant: ParticipantId,
        stroke_id: StrokeId,
    },
}

impl SlotStatus {
    pub fn is_unclaimed(&self) -> bool {
        matches!(self, SlotStatus::Unclaimed)
    }

    pub fn is_completed(&self) -> bool {
        matches!(self, SlotStatus::Completed { .. })
    }
}

/// An accepted stroke event, in acceptance order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptedEvent {
    pub sender: ParticipantId,
    pub action: StrokePayload,
}

#[derive(Debug, Clone, PartialEq, Eq)]
struct OpenStroke {
    stroke_id: StrokeId,
    slot: SlotRef,
}

/// What an accepted event changed.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Delta {
    pub slot: Option<(SlotRef, SlotStatus)>,
    /// New SC turn owner, when the turn passed.
    pub turn_passed_to: Option<ParticipantId>,
    pub session_completed: bool,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StrokeVerdict {
    Accepted(Delta),
    Rejected(RejectReason),
}

impl StrokeVerdict {
    pub fn is_accepted(&self) -> bool {
        matches!(self, StrokeVerdict::Accepted(_))
    }

    pub fn to_wire(&self) -> Verdict {
        match self {
            StrokeVerdict::Accepted(_) => Verdict::Accepted,
            StrokeVerdict::Rejected(reason) => Verdict::Rejected { reason: *reason },
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error("participant `{0}` appears twice in the pair")]
    DuplicateParticipant(ParticipantId),
    #[error("invalid template set: {0}")]
    InvalidTemplateSet(#[from] TemplateError),
    #[error("session mode {mode} does not match condition {condition}")]
    ModeMismatch { mode: Mode, condition: Condition },
}

/// A slot finished by a participant.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Completion {
    pub slot: SlotRef,
    pub participant: ParticipantId,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    participants: [ParticipantId; 2],
    mode: Mode,
    condition: Condition,
    slot_order: Vec<SlotRef>,
    slots: BTreeMap<SlotRef, SlotStatus>,
    strokes: Vec<AcceptedEvent>,
    turn_owner: Option<ParticipantId>,
    open: BTreeMap<ParticipantId, OpenStroke>,
    used_stroke_ids: BTreeSet<(ParticipantId, StrokeId)>,
    completions: Vec<Completion>,
    complete: bool,
}

/// Starts a session with every slot unclaimed.
pub fn create_session(
    pair: [ParticipantId; 2],
    mode: Mode,
    templates: &TemplateSet,
    condition: Condition,
) -> Result<SessionState, SessionError> {
    if pair[0] == pair[1] {
        return Err(SessionError::DuplicateParticipant(pair[0].clone()));
    }
    if condition.mode != mode {
        return Err(SessionError::ModeMismatch { mode, condition });
    }
    // TemplateSet values are validated on construction.
    let slot_order: Vec<SlotRef> = templates.slot_refs().collect();
    let slots = slot_order
        .iter()
        .map(|s| (*s, SlotStatus::Unclaimed))
        .collect();
    let turn_owner = match mode {
        Mode::Sc => Some(pair.iter().min().expect("two participants").clone()),
        Mode::Fc => None,
    };
    Ok(SessionState {
        participants: pair,
        mode,
        condition,
        slot_order,
        slots,
        strokes: Vec::new(),
        turn_owner,
        open: BTreeMap::new(),
        used_stroke_ids: BTreeSet::new(),
        completions: Vec::new(),
        complete: false,
    })
}

impl SessionState {
    pub fn participants(&self) -> &[ParticipantId; 2] {
        &self.participants
    }

    pub fn partner_of(&self, p: &ParticipantId) -> Option<&ParticipantId> {
        match &self.participants {
            [a, b] if a == p => Some(b),
            [a, b] if b == p => Some(a),
            _ => None,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn condition(&self) -> Condition {
        self.condition
    }

    pub fn turn_owner(&self) -> Option<&ParticipantId> {
        self.turn_owner.as_ref()
    }

    pub fn slot_status(&self, slot: SlotRef) -> Option<&SlotStatus> {
        self.slots.get(&slot)
    }

    /// Slots in template order with their status.
    pub fn slots(&self) -> impl Iterator<Item = (SlotRef, &SlotStatus)> {
        self.slot_order.iter().map(|s| (*s, &self.slots[s]))
    }

    pub fn strokes(&self) -> &[AcceptedEvent] {
        &self.strokes
    }

    /// Completed slots in completion order.
    pub fn completions(&self) -> &[Completion] {
        &self.completions
    }

    pub fn open_stroke(&self, p: &ParticipantId) -> Option<(&StrokeId, SlotRef)> {
        self.open.get(p).map(|o| (&o.stroke_id, o.slot))
    }

    pub fn open_stroke_count(&self) -> usize {
        self.open.len()
    }

    pub fn is_complete(&self) -> bool {
        self.complete
    }

    /// Applies one stroke action from `sender`.
    pub fn handle_stroke(&mut self, sender: &ParticipantId, payload: &StrokePayload) -> StrokeVerdict {
        match self.evaluate(sender, payload) {
            Ok(delta) => {
                self.strokes.push(AcceptedEvent {
                    sender: sender.clone(),
                    action: payload.clone(),
                });
                StrokeVerdict::Accepted(delta)
            }
            Err(reason) => StrokeVerdict::Rejected(reason),
        }
    }

    fn evaluate(&mut self, sender: &ParticipantId, payload: &StrokePayload) -> Result<Delta, RejectReason> {
        if !self.participants.contains(sender) {
            return Err(RejectReason::NotAParticipant);
        }
        if self.complete {
            return Err(RejectReason::SessionComplete);
        }
        match payload {
            StrokePayload::BeginStroke {
                stroke_id, slot, ..
            } => self.begin(sender, stroke_id, *slot),
            StrokePayload::AppendPoints { stroke_id, .. } => {
                self.own_open(sender, stroke_id)?;
                Ok(Delta::default())
            }
            StrokePayload::EndStroke { stroke_id } => self.end(sender, stroke_id),
            StrokePayload::Erase { stroke_id } => {
                let slot = self.own_open(sender, stroke_id)?;
                self.open.remove(sender);
                self.slots.insert(slot, SlotStatus::Unclaimed);
                Ok(Delta {
                    slot: Some((slot, SlotStatus::Unclaimed)),
                    ..Delta::default()
                })
            }
            StrokePayload::ClearBoard => Err(RejectReason::ClearNotAllowed),
            StrokePayload::SetColor { .. } => Ok(Delta::default()),
        }
    }

    fn begin(&mut self, sender: &ParticipantId, stroke_id: &StrokeId, slot: SlotRef) -> Result<Delta, RejectReason> {
        let status = self.slots.get(&slot).ok_or(RejectReason::UnknownSlot)?;
        match self.mode {
            Mode::Sc => {
                if self.turn_owner.as_ref() != Some(sender) {
                    return Err(RejectReason::NotYourTurn);
                }
                if !self.open.is_empty() {
                    return Err(RejectReason::StrokeAlreadyOpen);
                }
            }
            Mode::Fc => {
                if self.open.contains_key(sender) {
                    return Err(RejectReason::StrokeAlreadyOpen);
                }
            }
        }
        if !status.is_unclaimed() {
            return Err(RejectReason::SlotTaken);
        }
        if !self
            .used_stroke_ids
            .insert((sender.clone(), stroke_id.clone()))
        {
            return Err(RejectReason::DuplicateStrokeId);
        }
        let claimed = SlotStatus::Claimed {
            participant: sender.clone(),
            stroke_id: stroke_id.clone(),
        };
        self.slots.insert(slot, claimed.clone());
        self.open.insert(
            sender.clone(),
            OpenStroke {
                stroke_id: stroke_id.clone(),
                slot,
            },
        );
        Ok(Delta {
            slot: Some((slot, claimed)),
            ..Delta::default()
        })
    }

    fn end(&mut self, sender: &ParticipantId, stroke_id: &StrokeId) -> Result<Delta, RejectReason> {
        let slot = self.own_open(sender, stroke_id)?;
        self.open.remove(sender);
        let done = SlotStatus::Completed {
            participant: sender.clone(),
            stroke_id: stroke_id.clone(),
        };
        self.slots.insert(slot, done.clone());
        self.completions.push(Completion {
            slot,
            participant: sender.clone(),
        });
        let turn_passed_to = if self.mode == Mode::Sc {
            let next = self.partner_of(sender).expect("sender is a participant").clone();
            self.turn_owner = Some(next.clone());
            Some(next)
        } else {
            None
        };
        self.complete = self.slots.values().all(SlotStatus::is_completed);
        Ok(Delta {
            slot: Some((slot, done)),
            turn_passed_to,
            session_completed: self.complete,
        })
    }

    fn own_open(&self, sender: &ParticipantId, stroke_id: &StrokeId) -> Result<SlotRef, RejectReason> {
        match self.open.get(sender) {
            Some(open) if &open.stroke_id == stroke_id => Ok(open.slot),
            _ => Err(RejectReason::NoOpenStroke),
        }
    }

    /// Serializable board view.
    pub fn snapshot(&self) -> BoardSnapshot {
        BoardSnapshot {
            participants: self.participants.clone(),
            mode: self.mode,
            slots: self
                .slots()
                .map(|(slot, status)| SlotEntry {
                    slot,
                    status: status.clone(),
                })
                .collect(),
            strokes: self.strokes.clone(),
            turn_owner: self.turn_owner.clone(),
            complete: self.complete,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlotEntry {
    pub slot: SlotRef,
    pub status: SlotStatus,
}

/// Everything a renderer needs to rebuild the board: slot statuses,
/// accepted strokes and the turn owner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoardSnapshot {
    pub participants: [ParticipantId; 2],
    pub mode: Mode,
    pub slots: Vec<SlotEntry>,
    pub strokes: Vec<AcceptedEvent>,
    pub turn_owner: Option<ParticipantId>,
    pub complete: bool,
}

impl BoardSnapshot {
    /// The board before any stroke was accepted.
    pub fn initial(pair: [ParticipantId; 2], mode: Mode, templates: &TemplateSet) -> Self {
        let turn_owner = (mode == Mode::Sc).then(|| pair.iter().min().expect("pair").clone());
        Self {
            participants: pair,
            mode,
            slots: templates
                .slot_refs()
                .map(|slot| SlotEntry {
                    slot,
                    status: SlotStatus::Unclaimed,
                })
                .collect(),
            strokes: Vec::new(),
            turn_owner,
            complete: false,
        }
    }

    /// Applies an event that the engine already accepted. No rule checking
    /// happens here; this is the renderer's fold.
    pub fn apply(&mut self, event: &AcceptedEvent) {
        fn find<'a>(slots: &'a mut [SlotEntry], owner: &ParticipantId, id: &StrokeId) -> Option<&'a mut SlotEntry> {
            slots.iter_mut().find(|e| {
                matches!(&e.status, SlotStatus::Claimed { participant, stroke_id }
                    if participant == owner && stroke_id == id)
            })
        }
        match &event.action {
            StrokePayload::BeginStroke {
                stroke_id, slot, ..
            } => {
                if let Some(entry) = self.slots.iter_mut().find(|e| e.slot == *slot) {
                    entry.status = SlotStatus::Claimed {
                        participant: event.sender.clone(),
                        stroke_id: stroke_id.clone(),
                    };
                }
            }
            StrokePayload::EndStroke { stroke_id } => {
                if let Some(entry) = find(&mut self.slots, &event.sender, stroke_id) {
                    entry.status = SlotStatus::Completed {
                        participant: event.sender.clone(),
                        stroke_id: stroke_id.clone(),
                    };
                }
                if self.mode == Mode::Sc {
                    self.turn_owner = self
                        .participants
                        .iter()
                        .find(|p| **p != event.sender)
                        .cloned();
                }
                self.complete = self.slots.iter().all(|e| e.status.is_completed());
            }
            StrokePayload::Erase { stroke_id } => {
                if let Some(entry) = find(&mut self.slots, &event.sender, stroke_id) {
                    entry.status = SlotStatus::Unclaimed;
                }
            }
            StrokePayload::AppendPoints { .. }
            | StrokePayload::ClearBoard
            | StrokePayload::SetColor { .. } => {}
        }
        self.strokes.push(event.clone());
    }
}
