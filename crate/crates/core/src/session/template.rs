use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::protocol::{Point, SlotRef, TEMPLATE_COUNT};

/// One stroke the pair has to draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Slot {
    pub polyline: Vec<Point>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Template {
    pub name: String,
    pub slots: Vec<Slot>,
}

/// The six line drawings of a task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemplateSet {
    templates: Vec<Template>,
}

#[derive(Debug, thiserror::Error)]
pub enum TemplateError {
    #[error("expected {expected} templates, found {found}")]
    WrongTemplateCount { expected: usize, found: usize },
    #[error("template `{0}` has no slots")]
    EmptyTemplate(String),
    #[error("template set has no slots")]
    NoSlots,
    #[error("slot {0} needs at least two points inside the unit square")]
    BadPolyline(SlotRef),
    #[error("template file: {0}")]
    Io(#[from] std::io::Error),
    #[error("template file: {0}")]
    Parse(#[from] serde_json::Error),
}

impl TemplateSet {
    /// Builds a task set. Requires six templates and at least one slot in
    /// total; a template may be empty here so that reduced tasks (fewer than
    /// six strokes) can be simulated. Template files go through
    /// [`TemplateSet::from_json`], which also requires every template to
    /// carry a slot.
    pub fn new(templates: Vec<Template>) -> Result<Self, TemplateError> {
        if templates.len() != usize::from(TEMPLATE_COUNT) {
            return Err(TemplateError::WrongTemplateCount {
                expected: usize::from(TEMPLATE_COUNT),
                found: templates.len(),
            });
        }
        let set = Self { templates };
        if set.slot_count() == 0 {
            return Err(TemplateError::NoSlots);
        }
        for slot in set.slot_refs() {
            let line = &set.polyline(slot).expect("slot from slot_refs").polyline;
            if line.len() < 2 || !line.iter().all(Point::in_unit_square) {
                return Err(TemplateError::BadPolyline(slot));
            }
        }
        Ok(set)
    }

    pub fn from_json(text: &str) -> Result<Self, TemplateError> {
        let raw: TemplateSet = serde_json::from_str(text)?;
        if let Some(t) = raw.templates.iter().find(|t| t.slots.is_empty()) {
            return Err(TemplateError::EmptyTemplate(t.name.clone()));
        }
        Self::new(raw.templates)
    }

    pub fn load(path: &Path) -> Result<Self, TemplateError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("template set serializes")
    }

    pub fn templates(&self) -> &[Template] {
        &self.templates
    }

    pub fn slot_count(&self) -> usize {
        self.templates.iter().map(|t| t.slots.len()).sum()
    }

    /// Every slot, template by template.
    pub fn slot_refs(&self) -> impl Iterator<Item = SlotRef> + '_ {
        self.templates.iter().enumerate().flat_map(|(ti, t)| {
            (0..t.slots.len()).map(move |si| SlotRef::new(ti as u8, si as u16))
        })
    }

    pub fn polyline(&self, slot: SlotRef) -> Option<&Slot> {
        self.templates
            .get(usize::from(slot.template))?
            .slots
            .get(usize::from(slot.slot))
    }

    /// The shipped task: six simple drawings of four strokes each, laid out
    /// on a 3x2 grid.
    pub fn default_set() -> Self {
        let shapes: [(&str, Vec<Vec<[f64; 2]>>); 6] = [
            (
                "house",
                vec![
                    vec![[0.1, 0.9], [0.1, 0.5], [0.9, 0.5], [0.9, 0.9]],
                    vec![[0.1, 0.9], [0.9, 0.9]],
                    vec![[0.1, 0.5], [0.5, 0.1], [0.9, 0.5]],
                    vec![[0.4, 0.9], [0.4, 0.7], [0.6, 0.7], [0.6, 0.9]],
                ],
            ),
            (
                "star",
                vec![
                    vec![[0.5, 0.05], [0.65, 0.4], [0.95, 0.4]],
                    vec![[0.95, 0.4], [0.7, 0.6], [0.8, 0.95]],
                    vec![[0.8, 0.95], [0.5, 0.75], [0.2, 0.95]],
                    vec![[0.2, 0.95], [0.3, 0.6], [0.05, 0.4], [0.35, 0.4], [0.5, 0.05]],
                ],
            ),
            (
                "arrow",
                vec![
                    vec![[0.1, 0.5], [0.8, 0.5]],
                    vec![[0.6, 0.3], [0.8, 0.5]],
                    vec![[0.6, 0.7], [0.8, 0.5]],
                    vec![[0.1, 0.4], [0.1, 0.6]],
                ],
            ),
            (
                "zigzag",
                vec![
                    vec![[0.05, 0.2], [0.25, 0.4], [0.45, 0.2], [0.65, 0.4], [0.85, 0.2], [0.95, 0.3]],
                    vec![[0.05, 0.5], [0.25, 0.7], [0.45, 0.5], [0.65, 0.7], [0.85, 0.5]],
                    vec![[0.05, 0.8], [0.5, 0.95], [0.95, 0.8]],
                    vec![[0.05, 0.1], [0.95, 0.1]],
                ],
            ),
            (
                "box",
                vec![
                    vec![[0.2, 0.2], [0.8, 0.2]],
                    vec![[0.8, 0.2], [0.8, 0.8]],
                    vec![[0.8, 0.8], [0.2, 0.8]],
                    vec![[0.2, 0.8], [0.2, 0.2]],
                ],
            ),
            (
                "tree",
                vec![
                    vec![[0.5, 0.95], [0.5, 0.6]],
                    vec![[0.2, 0.6], [0.5, 0.1], [0.8, 0.6], [0.2, 0.6]],
                    vec![[0.3, 0.4], [0.7, 0.4]],
                    vec![[0.4, 0.95], [0.6, 0.95]],
                ],
            ),
        ];
        let templates = shapes
            .into_iter()
            .enumerate()
            .map(|(i, (name, slots))| {
                // place template i in cell (i % 3, i / 3) of the board
                let (cx, cy) = ((i % 3) as f64 / 3.0, (i / 3) as f64 / 2.0);
                Template {
                    name: name.to_owned(),
                    slots: slots
                        .into_iter()
                        .map(|line| Slot {
                            polyline: line
                                .into_iter()
                                .map(|[x, y]| Point::new(cx + x / 3.0, cy + y / 2.0))
                                .collect(),
                        })
                        .collect(),
                }
            })
            .collect();
        Self::new(templates).expect("default template set is valid")
    }

    /// A synthetic task with exactly `n` straight-line slots spread
    /// round-robin over the six templates.
    pub fn with_slot_count(n: usize) -> Result<Self, TemplateError> {
        let mut templates: Vec<Template> = (0..usize::from(TEMPLATE_COUNT))
            .map(|i| Template {
                name: format!("lines-{i}"),
                slots: Vec::new(),
            })
            .collect();
        for k in 0..n {
            let t = k % templates.len();
            let row = templates[t].slots.len();
            let y = 0.05 + 0.9 * ((row % 16) as f64 / 16.0);
            let x0 = t as f64 / 6.0;
            templates[t].slots.push(Slot {
                polyline: vec![Point::new(x0 + 0.01, y), Point::new(x0 + 0.15, y)],
            });
        }
        Self::new(templates)
    }
}
