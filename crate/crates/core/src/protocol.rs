//! Wire protocol shared by clients, bots and the relay.
//!
//! A frame is a 4-byte big-endian body length followed by a UTF-8 JSON
//! object with exactly the keys `v`, `type`, `seq`, `sender`, `session`,
//! `t_sent` and `payload`. Enumerations are lowercase snake-case strings.
//!
//! ```text
//! 00 00 00 5c {"v":1,"type":"stroke","seq":3,"sender":"a","session":"pair-1",
//!              "t_sent":120,"payload":{"kind":"end_stroke","stroke_id":"a-1"}}
//! ```

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::ids::{ParticipantId, SessionId, StrokeId};
use crate::ratings::RatingRecord;
use crate::session::Condition;

pub const PROTOCOL_VERSION: u8 = 1;
/// Upper bound on a frame body; anything larger is treated as malformed.
pub const MAX_FRAME_BODY: usize = 1 << 20;
pub const MAX_POINTS_PER_APPEND: usize = 64;
pub const MAX_POSE_HINT: usize = 16;
/// Templates per task.
pub const TEMPLATE_COUNT: u8 = 6;

const BODY_KEYS: [&str; 7] = ["v", "type", "seq", "sender", "session", "t_sent", "payload"];

/// Board-normalised coordinate, serialised as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn in_unit_square(&self) -> bool {
        (0.0..=1.0).contains(&self.x) && (0.0..=1.0).contains(&self.y)
    }

    pub fn lerp(self, other: Point, t: f64) -> Point {
        Point::new(
            self.x + (other.x - self.x) * t,
            self.y + (other.y - self.y) * t,
        )
    }

    pub fn distance(self, other: Point) -> f64 {
        (other.x - self.x).hypot(other.y - self.y)
    }
}

impl From<[f64; 2]> for Point {
    fn from([x, y]: [f64; 2]) -> Self {
        Point { x, y }
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PenColor {
    Black,
    Red,
    Blue,
    Green,
}

/// One constituent stroke of one template.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct SlotRef {
    pub template: u8,
    pub slot: u16,
}

impl SlotRef {
    pub fn new(template: u8, slot: u16) -> Self {
        Self { template, slot }
    }
}

impl std::fmt::Display for SlotRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "t{}s{}", self.template, self.slot)
    }
}

/// Whiteboard actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StrokePayload {
    BeginStroke {
        stroke_id: StrokeId,
        slot: SlotRef,
        color: PenColor,
    },
    AppendPoints {
        stroke_id: StrokeId,
        points: Vec<Point>,
    },
    EndStroke {
        stroke_id: StrokeId,
    },
    Erase {
        stroke_id: StrokeId,
    },
    ClearBoard,
    SetColor {
        color: PenColor,
    },
}

impl StrokePayload {
    pub fn stroke_id(&self) -> Option<&StrokeId> {
        match self {
            StrokePayload::BeginStroke { stroke_id, .. }
            | StrokePayload::AppendPoints { stroke_id, .. }
            | StrokePayload::EndStroke { stroke_id }
            | StrokePayload::Erase { stroke_id } => Some(stroke_id),
            StrokePayload::ClearBoard | StrokePayload::SetColor { .. } => None,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            StrokePayload::BeginStroke { .. } => "begin_stroke",
            StrokePayload::AppendPoints { .. } => "append_points",
            StrokePayload::EndStroke { .. } => "end_stroke",
            StrokePayload::Erase { .. } => "erase",
            StrokePayload::ClearBoard => "clear_board",
            StrokePayload::SetColor { .. } => "set_color",
        }
    }
}

/// Partner presence cue (stands in for avatar motion).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PresencePayload {
    pub cursor: Point,
    pub pen_down: bool,
    /// Auxiliary pose scalars, carried opaquely.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pose_hint: Option<Vec<f64>>,
}

/// Why an action was refused.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    NotYourTurn,
    SlotTaken,
    NoOpenStroke,
    StrokeAlreadyOpen,
    SessionComplete,
    UnknownSlot,
    DuplicateStrokeId,
    ClearNotAllowed,
    NotAParticipant,
    NoActiveCondition,
    InvalidRating,
    DuplicateRating,
    UnexpectedMessage,
}

impl RejectReason {
    pub fn as_str(self) -> &'static str {
        match self {
            RejectReason::NotYourTurn => "not_your_turn",
            RejectReason::SlotTaken => "slot_taken",
            RejectReason::NoOpenStroke => "no_open_stroke",
            RejectReason::StrokeAlreadyOpen => "stroke_already_open",
            RejectReason::SessionComplete => "session_complete",
            RejectReason::UnknownSlot => "unknown_slot",
            RejectReason::DuplicateStrokeId => "duplicate_stroke_id",
            RejectReason::ClearNotAllowed => "clear_not_allowed",
            RejectReason::NotAParticipant => "not_a_participant",
            RejectReason::NoActiveCondition => "no_active_condition",
            RejectReason::InvalidRating => "invalid_rating",
            RejectReason::DuplicateRating => "duplicate_rating",
            RejectReason::UnexpectedMessage => "unexpected_message",
        }
    }
}

/// Verdict echoed to the sender of an action.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Verdict {
    Accepted,
    Rejected { reason: RejectReason },
}

impl Verdict {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Verdict::Accepted)
    }
}

/// Session-control messages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ControlPayload {
    JoinSession,
    ConditionStart {
        index: u32,
        condition: Condition,
    },
    ConditionEnd {
        index: u32,
        condition: Condition,
    },
    TurnGrant {
        owner: ParticipantId,
    },
    /// Immediate verdict for the sender's message `ack_seq`.
    ClaimResult {
        ack_seq: u64,
        verdict: Verdict,
    },
    SessionComplete,
    RatingSubmit {
        rating: RatingRecord,
    },
    /// Probe timestamps are microseconds on the prober's clock.
    ClockProbe {
        probe_id: u64,
        t_probe: u64,
    },
    ClockEcho {
        probe_id: u64,
        t_probe: u64,
        t_echo: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Payload {
    Stroke(StrokePayload),
    Presence(PresencePayload),
    Control(ControlPayload),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MsgType {
    Stroke,
    Presence,
    Control,
}

impl MsgType {
    fn parse(s: &str) -> Option<Self> {
        match s {
            "stroke" => Some(MsgType::Stroke),
            "presence" => Some(MsgType::Presence),
            "control" => Some(MsgType::Control),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub version: u8,
    pub seq: u64,
    pub sender: ParticipantId,
    pub session: SessionId,
    /// Milliseconds since the session epoch on the sender's clock.
    pub t_sent: u64,
    pub payload: Payload,
}

impl Envelope {
    pub fn new(
        seq: u64,
        sender: ParticipantId,
        session: SessionId,
        t_sent: u64,
        payload: Payload,
    ) -> Self {
        Self {
            version: PROTOCOL_VERSION,
            seq,
            sender,
            session,
            t_sent,
            payload,
        }
    }

    pub fn msg_type(&self) -> MsgType {
        match self.payload {
            Payload::Stroke(_) => MsgType::Stroke,
            Payload::Presence(_) => MsgType::Presence,
            Payload::Control(_) => MsgType::Control,
        }
    }

    /// Checks the per-message invariants. Stream-level rules (open strokes,
    /// sequence continuity) are enforced by the session engine and
    /// [`check_sequence`].
    pub fn validate(&self) -> Result<(), CodecError> {
        let invalid = |why: &str| Err(CodecError::InvalidEnvelope(why.to_owned()));
        if self.version != PROTOCOL_VERSION {
            return Err(CodecError::UnknownVersion(u64::from(self.version)));
        }
        if self.sender.as_str().is_empty() || self.session.as_str().is_empty() {
            return invalid("empty sender or session id");
        }
        match &self.payload {
            Payload::Stroke(stroke) => {
                if let Some(id) = stroke.stroke_id() {
                    if id.as_str().is_empty() {
                        return invalid("empty stroke id");
                    }
                }
                match stroke {
                    StrokePayload::BeginStroke { slot, .. } if slot.template >= TEMPLATE_COUNT => {
                        return invalid("template index out of range");
                    }
                    StrokePayload::AppendPoints { points, .. } => {
                        if points.is_empty() || points.len() > MAX_POINTS_PER_APPEND {
                            return invalid("append must carry 1-64 points");
                        }
                        if !points.iter().all(Point::in_unit_square) {
                            return invalid("point outside the unit square");
                        }
                    }
                    _ => {}
                }
            }
            Payload::Presence(p) => {
                if !p.cursor.in_unit_square() {
                    return invalid("cursor outside the unit square");
                }
                if let Some(pose) = &p.pose_hint {
                    if pose.len() > MAX_POSE_HINT || !pose.iter().all(|v| v.is_finite()) {
                        return invalid("pose hint too long or not finite");
                    }
                }
            }
            Payload::Control(_) => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CodecError {
    #[error("invalid envelope: {0}")]
    InvalidEnvelope(String),
    #[error("malformed frame: {0}")]
    MalformedFrame(String),
    #[error("unknown protocol version {0}")]
    UnknownVersion(u64),
    #[error("unknown message type `{0}`")]
    UnknownMsgType(String),
}

fn malformed(why: impl Into<String>) -> CodecError {
    CodecError::MalformedFrame(why.into())
}

/// Serialises `env` into a length-prefixed frame.
pub fn encode(env: &Envelope) -> Result<Vec<u8>, CodecError> {
    env.validate()?;
    let mut body = Map::new();
    body.insert("v".into(), Value::from(env.version));
    body.insert(
        "type".into(),
        serde_json::to_value(env.msg_type()).map_err(|e| malformed(e.to_string()))?,
    );
    body.insert("seq".into(), Value::from(env.seq));
    body.insert("sender".into(), Value::from(env.sender.as_str()));
    body.insert("session".into(), Value::from(env.session.as_str()));
    body.insert("t_sent".into(), Value::from(env.t_sent));
    body.insert(
        "payload".into(),
        serde_json::to_value(&env.payload).map_err(|e| malformed(e.to_string()))?,
    );
    // serde_json::Map is ordered by key, which makes the body canonical.
    let text = serde_json::to_vec(&Value::Object(body)).map_err(|e| malformed(e.to_string()))?;
    if text.len() > MAX_FRAME_BODY {
        return Err(CodecError::InvalidEnvelope("frame body too large".into()));
    }
    let mut frame = Vec::with_capacity(4 + text.len());
    frame.extend_from_slice(&(text.len() as u32).to_be_bytes());
    frame.extend_from_slice(&text);
    Ok(frame)
}

/// Decodes exactly one frame; trailing or missing bytes are malformed.
pub fn decode(bytes: &[u8]) -> Result<Envelope, CodecError> {
    match decode_prefix(bytes)? {
        Some((env, used)) if used == bytes.len() => Ok(env),
        Some(_) => Err(malformed("trailing bytes after frame")),
        None => Err(malformed("truncated frame")),
    }
}

/// Decodes a concatenation of complete frames.
pub fn decode_stream(bytes: &[u8]) -> Result<Vec<Envelope>, CodecError> {
    let mut out = Vec::new();
    let mut rest = bytes;
    while !rest.is_empty() {
        let (env, used) = decode_prefix(rest)?.ok_or_else(|| malformed("truncated frame"))?;
        out.push(env);
        rest = &rest[used..];
    }
    Ok(out)
}

/// Decodes the first frame in `bytes`, returning it with the number of bytes
/// consumed, or `None` if the frame is not complete yet.
pub fn decode_prefix(bytes: &[u8]) -> Result<Option<(Envelope, usize)>, CodecError> {
    let Some(header) = bytes.get(..4) else {
        return Ok(None);
    };
    let len = u32::from_be_bytes(header.try_into().expect("4-byte slice")) as usize;
    if len > MAX_FRAME_BODY {
        return Err(malformed(format!("body length {len} exceeds limit")));
    }
    let Some(body) = bytes.get(4..4 + len) else {
        return Ok(None);
    };
    Ok(Some((decode_body(body)?, 4 + len)))
}

fn decode_body(body: &[u8]) -> Result<Envelope, CodecError> {
    let text = std::str::from_utf8(body).map_err(|_| malformed("body is not UTF-8"))?;
    let value: Value = serde_json::from_str(text).map_err(|e| malformed(e.to_string()))?;
    let Value::Object(mut obj) = value else {
        return Err(malformed("body is not an object"));
    };
    if obj.len() != BODY_KEYS.len() || !BODY_KEYS.iter().all(|k| obj.contains_key(*k)) {
        return Err(malformed("body keys must be exactly v,type,seq,sender,session,t_sent,payload"));
    }
    let version = obj["v"].as_u64().ok_or_else(|| malformed("`v` is not an unsigned integer"))?;
    if version != u64::from(PROTOCOL_VERSION) {
        return Err(CodecError::UnknownVersion(version));
    }
    let type_name = obj["type"].as_str().ok_or_else(|| malformed("`type` is not a string"))?;
    let msg_type =
        MsgType::parse(type_name).ok_or_else(|| CodecError::UnknownMsgType(type_name.to_owned()))?;

    let seq = obj["seq"].as_u64().ok_or_else(|| malformed("`seq` is not an unsigned integer"))?;
    let t_sent = obj["t_sent"]
        .as_u64()
        .ok_or_else(|| malformed("`t_sent` is not an unsigned integer"))?;
    let sender = obj["sender"].as_str().ok_or_else(|| malformed("`sender` is not a string"))?;
    let session = obj["session"].as_str().ok_or_else(|| malformed("`session` is not a string"))?;
    let (sender, session) = (ParticipantId::new(sender), SessionId::new(session));

    let raw = obj.remove("payload").expect("checked above");
    let bad_payload = |e: serde_json::Error| malformed(format!("payload: {e}"));
    let payload = match msg_type {
        MsgType::Stroke => Payload::Stroke(serde_json::from_value(raw).map_err(bad_payload)?),
        MsgType::Presence => Payload::Presence(serde_json::from_value(raw).map_err(bad_payload)?),
        MsgType::Control => Payload::Control(serde_json::from_value(raw).map_err(bad_payload)?),
    };
    let env = Envelope {
        version: PROTOCOL_VERSION,
        seq,
        sender,
        session,
        t_sent,
        payload,
    };
    env.validate()?;
    Ok(env)
}

/// Incremental decoder for byte streams that may split frames arbitrarily.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
}

impl FrameDecoder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn extend(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Next complete envelope, if one is buffered.
    pub fn next_envelope(&mut self) -> Result<Option<Envelope>, CodecError> {
        match decode_prefix(&self.buf)? {
            Some((env, used)) => {
                self.buf.drain(..used);
                Ok(Some(env))
            }
            None => Ok(None),
        }
    }

    pub fn buffered(&self) -> usize {
        self.buf.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeqCheck {
    Accept,
    Duplicate,
    Gap,
}

/// Accepts `env` iff its sequence number directly follows `prev_seq`.
/// Streams start after an implicit `prev_seq` of 0.
pub fn check_sequence(prev_seq: u64, env: &Envelope) -> SeqCheck {
    match env.seq.checked_sub(prev_seq) {
        Some(1) => SeqCheck::Accept,
        Some(0) | None => SeqCheck::Duplicate,
        Some(_) => SeqCheck::Gap,
    }
}

/// Last accepted sequence number per (sender, session).
#[derive(Debug, Default, Clone)]
pub struct SequenceTracker {
    last: HashMap<(ParticipantId, SessionId), u64>,
}

impl SequenceTracker {
    pub fn new() -> Self {
        Self::default()
    }

    /// Checks `env` and records it when accepted.
    pub fn observe(&mut self, env: &Envelope) -> SeqCheck {
        let key = (env.sender.clone(), env.session.clone());
        let prev = self.last.get(&key).copied().unwrap_or(0);
        let verdict = check_sequence(prev, env);
        if verdict == SeqCheck::Accept {
            self.last.insert(key, env.seq);
        }
        verdict
    }

    pub fn reset(&mut self, sender: &ParticipantId, session: &SessionId) {
        self.last.remove(&(sender.clone(), session.clone()));
    }

    pub fn last_seq(&self, sender: &ParticipantId, session: &SessionId) -> u64 {
        self.last
            .get(&(sender.clone(), session.clone()))
            .copied()
            .unwrap_or(0)
    }
}
