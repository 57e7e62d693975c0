//! Report-style prompt manifests for an external image generator.
//!
//! A template is free text with `«SLOT»` placeholders. Every slot binds one
//! registry label and a list of phrase variants that express it; filling a
//! template records the byte span of each inserted phrase.

use std::collections::BTreeSet;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{read_to_string, write_file, Error, Result};
use crate::registry::{Category, CategoryMap, LabelRegistry};

const OPEN: char = '«';
const CLOSE: char = '»';

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TemplateSlot {
    pub name: String,
    pub label: String,
    pub phrases: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportTemplate {
    pub text: String,
    pub slots: Vec<TemplateSlot>,
}

impl ReportTemplate {
    pub fn new(text: impl Into<String>) -> Self {
        ReportTemplate {
            text: text.into(),
            slots: Vec::new(),
        }
    }

    pub fn slot(mut self, name: &str, label: &str, phrases: &[&str]) -> Self {
        self.slots.push(TemplateSlot {
            name: name.into(),
            label: label.into(),
            phrases: phrases.iter().map(|p| p.to_string()).collect(),
        });
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Piece<'a> {
    Text(&'a str),
    Slot(usize),
}

/// Template checked against the registry, with its text pre-split.
#[derive(Debug)]
struct CompiledTemplate<'a> {
    template: &'a ReportTemplate,
    pieces: Vec<Piece<'a>>,
    slot_labels: Vec<usize>,
    tail_labels: BTreeSet<usize>,
}

fn compile<'a>(
    template: &'a ReportTemplate,
    registry: &LabelRegistry,
    categories: &CategoryMap,
) -> Result<CompiledTemplate<'a>> {
    let bad = |msg: String| Error::Config(format!("template `{}`: {msg}", template.text));
    let mut slot_labels = Vec::with_capacity(template.slots.len());
    for slot in &template.slots {
        let idx = registry
            .index_of(&slot.label)
            .ok_or_else(|| bad(format!("slot `{}` names unknown label `{}`", slot.name, slot.label)))?;
        if slot.phrases.is_empty() {
            return Err(bad(format!("slot `{}` has no phrases", slot.name)));
        }
        slot_labels.push(idx);
    }

    let mut pieces = Vec::new();
    let mut used = BTreeSet::new();
    let mut rest = template.text.as_str();
    while let Some(open) = rest.find(OPEN) {
        if open > 0 {
            pieces.push(Piece::Text(&rest[..open]));
        }
        let after = &rest[open + OPEN.len_utf8()..];
        let close = after.find(CLOSE).ok_or_else(|| bad("unterminated placeholder".into()))?;
        let name = &after[..close];
        let slot = template
            .slots
            .iter()
            .position(|s| s.name == name)
            .ok_or_else(|| bad(format!("placeholder «{name}» has no slot")))?;
        used.insert(slot);
        pieces.push(Piece::Slot(slot));
        rest = &after[close + CLOSE.len_utf8()..];
    }
    if rest.contains(CLOSE) {
        return Err(bad("stray closing placeholder mark".into()));
    }
    if !rest.is_empty() {
        pieces.push(Piece::Text(rest));
    }
    if used.len() != template.slots.len() {
        return Err(bad("declares slots that the text never uses".into()));
    }

    let tail_labels: BTreeSet<usize> = slot_labels
        .iter()
        .copied()
        .filter(|&i| categories.category(i) == Some(Category::Tail))
        .collect();
    if tail_labels.is_empty() {
        return Err(bad("expresses no tail label".into()));
    }
    Ok(CompiledTemplate {
        template,
        pieces,
        slot_labels,
        tail_labels,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PromptEntry {
    pub text: String,
    /// Target label names, in order of first appearance.
    pub labels: Vec<String>,
    /// Byte ranges `[start, end)` of label-bearing phrases within `text`.
    pub spans: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct PromptManifest {
    pub entries: Vec<PromptEntry>,
}

impl PromptManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// One JSON object per line.
    pub fn to_jsonl(&self) -> String {
        self.entries
            .iter()
            .map(|e| serde_json::to_string(e).expect("prompt entry serializes") + "\n")
            .collect()
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let entries = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(n, l)| {
                serde_json::from_str(l).map_err(|e| Error::parse("<prompts>", format!("line {}: {e}", n + 1)))
            })
            .collect::<Result<_>>()?;
        Ok(PromptManifest { entries })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_file(path, self.to_jsonl())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_jsonl(&read_to_string(path)?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptRequest {
    pub count: usize,
    pub seed: u64,
    /// Tail labels to target. `None` means every tail label some template expresses.
    pub labels: Option<Vec<String>>,
}

/// Samples `request.count` prompts: a target tail label uniformly, then a
/// template expressing it uniformly, then a phrase per slot uniformly.
pub fn generate_prompts(
    templates: &[ReportTemplate],
    registry: &LabelRegistry,
    categories: &CategoryMap,
    request: &PromptRequest,
) -> Result<PromptManifest> {
    let compiled = templates
        .iter()
        .map(|t| compile(t, registry, categories))
        .collect::<Result<Vec<_>>>()?;
    let expressible: BTreeSet<usize> = compiled.iter().flat_map(|c| c.tail_labels.iter().copied()).collect();

    let pool: Vec<usize> = match &request.labels {
        None => expressible.iter().copied().collect(),
        Some(names) => {
            let mut pool = Vec::new();
            for name in names {
                let idx = registry
                    .index_of(name)
                    .ok_or_else(|| Error::Lookup(format!("unknown label `{name}`")))?;
                if categories.category(idx) != Some(Category::Tail) {
                    return Err(Error::Config(format!("`{name}` is not a tail label")));
                }
                if !expressible.contains(&idx) {
                    return Err(Error::Coverage(format!("no template expresses tail label `{name}`")));
                }
                if !pool.contains(&idx) {
                    pool.push(idx);
                }
            }
            pool
        }
    };
    if request.count == 0 {
        return Ok(PromptManifest::default());
    }
    if pool.is_empty() {
        return Err(Error::Coverage("no template expresses any tail label".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(request.seed);
    let mut entries = Vec::with_capacity(request.count);
    for _ in 0..request.count {
        let target = *pool.choose(&mut rng).expect("non-empty pool");
        let candidates: Vec<&CompiledTemplate> =
            compiled.iter().filter(|c| c.tail_labels.contains(&target)).collect();
        let chosen = candidates.choose(&mut rng).expect("target is expressible");
        entries.push(fill(chosen, registry, &mut rng));
    }
    Ok(PromptManifest { entries })
}

fn fill(c: &CompiledTemplate, registry: &LabelRegistry, rng: &mut ChaCha8Rng) -> PromptEntry {
    let phrases: Vec<&str> = c
        .template
        .slots
        .iter()
        .map(|s| s.phrases.choose(rng).expect("validated non-empty").as_str())
        .collect();
    let mut text = String::new();
    let mut spans = Vec::new();
    let mut labels: Vec<String> = Vec::new();
    for piece in &c.pieces {
        match *piece {
            Piece::Text(t) => text.push_str(t),
            Piece::Slot(s) => {
                let start = text.len();
                text.push_str(phrases[s]);
                spans.push([start, text.len()]);
                let name = registry.label(c.slot_labels[s]).to_string();
                if !labels.contains(&name) {
                    labels.push(name);
                }
            }
        }
    }
    PromptEntry { text, labels, spans }
}
