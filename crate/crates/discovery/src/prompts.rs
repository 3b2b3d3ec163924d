//! Prompt templates and rendering.
//!
//! Template bodies live in `prompts/*.txt` and are compiled in. Each body is
//! pinned to a sha256 digest so accidental edits are caught by the tests.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use vrpagent_core::io::sha256_hex;
use vrpagent_core::ProblemKind;

#[derive(Debug, Error, PartialEq)]
pub enum PromptError {
    #[error("template `{template}` needs binding `{slot}`")]
    MissingBinding { template: &'static str, slot: String },
    #[error("template `{template}` has no slot `{slot}`")]
    UnknownBinding { template: &'static str, slot: String },
    #[error("unknown template id `{0}`")]
    UnknownTemplate(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TemplateId {
    System,
    Seed,
    Crossover,
    MutationAblation,
    MutationExtend,
    MutationAdjust,
    MutationRefactor,
}

impl TemplateId {
    pub const ALL: [TemplateId; 7] = [
        TemplateId::System,
        TemplateId::Seed,
        TemplateId::Crossover,
        TemplateId::MutationAblation,
        TemplateId::MutationExtend,
        TemplateId::MutationAdjust,
        TemplateId::MutationRefactor,
    ];

    pub const MUTATIONS: [TemplateId; 4] = [
        TemplateId::MutationAblation,
        TemplateId::MutationExtend,
        TemplateId::MutationAdjust,
        TemplateId::MutationRefactor,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::System => "system",
            TemplateId::Seed => "seed",
            TemplateId::Crossover => "crossover",
            TemplateId::MutationAblation => "mutation-ablation",
            TemplateId::MutationExtend => "mutation-extend",
            TemplateId::MutationAdjust => "mutation-adjust",
            TemplateId::MutationRefactor => "mutation-refactor",
        }
    }

    pub fn template(self) -> &'static PromptTemplate {
        match self {
            TemplateId::System => &SYSTEM,
            TemplateId::Seed => &SEED,
            TemplateId::Crossover => &CROSSOVER,
            TemplateId::MutationAblation => &MUTATION_ABLATION,
            TemplateId::MutationExtend => &MUTATION_EXTEND,
            TemplateId::MutationAdjust => &MUTATION_ADJUST,
            TemplateId::MutationRefactor => &MUTATION_REFACTOR,
        }
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateId {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| PromptError::UnknownTemplate(s.to_string()))
    }
}

#[derive(Debug)]
pub struct PromptTemplate {
    pub name: &'static str,
    pub body: &'static str,
    pub digest: &'static str,
}

impl PromptTemplate {
    /// Slot names in order of first appearance.
    pub fn required_bindings(&self) -> Vec<&'static str> {
        let mut out = Vec::new();
        for piece in parse(self.body) {
            if let Piece::Slot(name) = piece {
                if !out.contains(&name) {
                    out.push(name);
                }
            }
        }
        out
    }

    /// Substitutes every `{slot}` in one pass. Bound values are inserted
    /// verbatim and never rescanned, so code containing braces is safe.
    pub fn render(&self, bindings: &BTreeMap<&str, String>) -> Result<String, PromptError> {
        let required = self.required_bindings();
        if let Some(extra) = bindings.keys().find(|k| !required.contains(k)) {
            return Err(PromptError::UnknownBinding {
                template: self.name,
                slot: extra.to_string(),
            });
        }
        let mut out = String::with_capacity(self.body.len() + bindings.values().map(String::len).sum::<usize>());
        for piece in parse(self.body) {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Slot(name) => match bindings.get(name) {
                    Some(value) => out.push_str(value),
                    None => {
                        return Err(PromptError::MissingBinding {
                            template: self.name,
                            slot: name.to_string(),
                        })
                    }
                },
            }
        }
        Ok(out)
    }

    pub fn computed_digest(&self) -> String {
        sha256_hex(self.body.as_bytes())
    }
}

enum Piece<'a> {
    Text(&'a str),
    Slot(&'a str),
}

fn is_slot_name(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn parse(body: &str) -> Vec<Piece<'_>> {
    let mut pieces = Vec::new();
    let mut rest = body;
    while let Some(open) = rest.find('{') {
        let after = &rest[open + 1..];
        match after.find('}') {
            Some(close) if is_slot_name(&after[..close]) => {
                pieces.push(Piece::Text(&rest[..open]));
                pieces.push(Piece::Slot(&after[..close]));
                rest = &after[close + 1..];
            }
            _ => {
                pieces.push(Piece::Text(&rest[..=open]));
                rest = after;
            }
        }
    }
    pieces.push(Piece::Text(rest));
    pieces
}

macro_rules! template {
    ($ident:ident, $name:literal, $file:literal, $digest:literal) => {
        pub static $ident: PromptTemplate = PromptTemplate {
            name: $name,
            body: include_str!(concat!("../prompts/", $file)),
            digest: $digest,
        };
    };
}

template!(SYSTEM, "system", "system.txt", "7f4572d21fd4b45fd6a4280c5cac4516e3a3bf99f030b4d12ee5803481980d8d");
template!(SEED, "seed", "seed.txt", "42c47d6f15dc9eb8f19deca490fb1771484dcea7743f9d6d8ee95e7104b2c506");
template!(CROSSOVER, "crossover", "crossover.txt", "83057e20f36c8e9a6b10e8b0182c3c7e3cd2fedd92348bcb9045d55eeafdc402");
template!(
    CROSSOVER_STANDARD,
    "crossover-standard",
    "crossover_standard.txt",
    "6989a034f34bd93028ddb613b38c8aca5e440e3e22bf87b8d1c829b8705cba73"
);
template!(
    MUTATION_ABLATION,
    "mutation-ablation",
    "mutation_ablation.txt",
    "356df17b4789b9fc7dd16874d59fcd04a035fbaa201fdfd04e1a8120f19577fd"
);
template!(
    MUTATION_EXTEND,
    "mutation-extend",
    "mutation_extend.txt",
    "fd84a0b347e21a8a290572e09e035dfb422f35372ca7123d0db4c99425664907"
);
template!(
    MUTATION_ADJUST,
    "mutation-adjust",
    "mutation_adjust.txt",
    "d1ad4edd9867e1de880257b1e6571566d599d97bd082ff671a5fba1604297e26"
);
template!(
    MUTATION_REFACTOR,
    "mutation-refactor",
    "mutation_refactor.txt",
    "149625628a7d4ecbdc96e5a8979294868fd5b6a4b331671ee35a90300e5115a4"
);
template!(DESC_CVRP, "desc-cvrp", "desc_cvrp.txt", "ff256908433d7d9da92caba3cbc08e4f93d3d837c34a7f09178c9758006abb6e");
template!(DESC_VRPTW, "desc-vrptw", "desc_vrptw.txt", "b3621415b1c7948aeb81db7cd197d664e5c0c1d313166137b3d921e54e74b29a");
template!(DESC_PCVRP, "desc-pcvrp", "desc_pcvrp.txt", "4fd79a8562849c9fe1373d9df6f3de62fd4da2c5eb62ff99f8767ba346c81bee");
template!(
    HEADERS_CVRP,
    "headers-cvrp",
    "headers_cvrp.txt",
    "cee0e4c5218f95cef2f0e63898c1b546096d8b15e0af7082745e8dda6712b881"
);
template!(
    HEADERS_VRPTW,
    "headers-vrptw",
    "headers_vrptw.txt",
    "d4d8346591b9bb98b31a4d8598cb874fe1a29c179bd321b7bb5c54767e8c3b42"
);
template!(
    HEADERS_PCVRP,
    "headers-pcvrp",
    "headers_pcvrp.txt",
    "dc9e343f213bbd1dd7b7c1b2dae732de2bbf0fe3f3d9be3796752042e3a78bed"
);
template!(SEED_CODE, "seed-code", "seed_code.txt", "80534688bfbc9ac5e1f1e7351e0d3a46fcca72bf1c4239580d5363e9539cad5f");

/// Every compiled-in text, templates and problem-specific fragments alike.
pub fn all_texts() -> [&'static PromptTemplate; 15] {
    [
        &SYSTEM,
        &SEED,
        &CROSSOVER,
        &CROSSOVER_STANDARD,
        &MUTATION_ABLATION,
        &MUTATION_EXTEND,
        &MUTATION_ADJUST,
        &MUTATION_REFACTOR,
        &DESC_CVRP,
        &DESC_VRPTW,
        &DESC_PCVRP,
        &HEADERS_CVRP,
        &HEADERS_VRPTW,
        &HEADERS_PCVRP,
        &SEED_CODE,
    ]
}

/// Listing-style C++ seed operator handed to the LLM as the example.
pub fn seed_code() -> &'static str {
    SEED_CODE.body
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossoverMode {
    /// Most ideas from the elite parent, the configured share from the other.
    #[default]
    Biased,
    /// Roughly half from each parent.
    Standard,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

/// Problem-specific fragments spliced into the general templates.
#[derive(Debug, Clone, Copy)]
pub struct ProblemContext {
    pub kind: ProblemKind,
}

impl ProblemContext {
    pub fn new(kind: ProblemKind) -> Self {
        ProblemContext { kind }
    }

    pub fn name_long(&self) -> &'static str {
        match self.kind {
            ProblemKind::Cvrp => "Capacitated Vehicle Routing Problem (CVRP)",
            ProblemKind::Vrptw => "Vehicle Routing Problem with Time Windows (VRPTW)",
            ProblemKind::Pcvrp => "Prize-Collecting Vehicle Routing Problem (PCVRP)",
        }
    }

    pub fn description(&self) -> &'static str {
        match self.kind {
            ProblemKind::Cvrp => DESC_CVRP.body,
            ProblemKind::Vrptw => DESC_VRPTW.body,
            ProblemKind::Pcvrp => DESC_PCVRP.body,
        }
    }

    pub fn headers(&self) -> &'static str {
        match self.kind {
            ProblemKind::Cvrp => HEADERS_CVRP.body,
            ProblemKind::Vrptw => HEADERS_VRPTW.body,
            ProblemKind::Pcvrp => HEADERS_PCVRP.body,
        }
    }

    fn system_message(&self) -> Result<Message, PromptError> {
        let bindings = BTreeMap::from([
            ("problem_name_long", self.name_long().to_string()),
            ("problem_desc", self.description().to_string()),
        ]);
        Ok(Message {
            role: Role::System,
            content: SYSTEM.render(&bindings)?,
        })
    }

    fn with_system(&self, task: &PromptTemplate, bindings: &BTreeMap<&str, String>) -> Result<Vec<Message>, PromptError> {
        Ok(vec![
            self.system_message()?,
            Message {
                role: Role::User,
                content: task.render(bindings)?,
            },
        ])
    }

    /// Renders `id` with caller-supplied bindings. The system template is
    /// always the first message; the task goes in the user message.
    pub fn render(&self, id: TemplateId, bindings: &BTreeMap<&str, String>) -> Result<Vec<Message>, PromptError> {
        if id == TemplateId::System {
            return Ok(vec![self.system_message()?]);
        }
        self.with_system(id.template(), bindings)
    }

    pub fn seed_prompt(&self) -> Result<Vec<Message>, PromptError> {
        let bindings = BTreeMap::from([
            ("seed_code", seed_code().to_string()),
            ("LNS_headers", self.headers().to_string()),
        ]);
        self.with_system(&SEED, &bindings)
    }

    /// `better` is the elite parent. `bias` is the share of ideas taken
    /// from it, rendered as a whole percentage.
    pub fn crossover_prompt(
        &self,
        better: &str,
        worse: &str,
        mode: CrossoverMode,
        bias: f64,
    ) -> Result<Vec<Message>, PromptError> {
        let mut bindings = BTreeMap::from([
            ("code_parent_1", better.to_string()),
            ("code_parent_2", worse.to_string()),
        ]);
        match mode {
            CrossoverMode::Biased => {
                let better_pct = (bias * 100.0).round() as i64;
                bindings.insert("better_pct", better_pct.to_string());
                bindings.insert("worse_pct", (100 - better_pct).to_string());
                self.with_system(&CROSSOVER, &bindings)
            }
            CrossoverMode::Standard => self.with_system(&CROSSOVER_STANDARD, &bindings),
        }
    }

    pub fn mutation_prompt(&self, kind: TemplateId, code: &str) -> Result<Vec<Message>, PromptError> {
        debug_assert!(TemplateId::MUTATIONS.contains(&kind));
        self.with_system(kind.template(), &BTreeMap::from([("code", code.to_string())]))
    }
}
