//! Versioned prompt templates. The text of each template is compiled in and
//! its hash is recorded with every attempt.

use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Template {
    pub name: &'static str,
    pub text: &'static str,
}

impl Template {
    pub fn sha256(&self) -> String {
        hex::encode(Sha256::digest(self.text.as_bytes()))
    }
}

pub const SUMMARY: Template = Template {
    name: "summary.v1",
    text: include_str!("../prompts/summary.v1.txt"),
};

pub const INSTRUCTION: Template = Template {
    name: "instruction.v1",
    text: include_str!("../prompts/instruction.v1.txt"),
};

pub const TRANSCRIPTION: Template = Template {
    name: "transcription.v1",
    text: include_str!("../prompts/transcription.v1.txt"),
};

pub const REPAIR: Template = Template {
    name: "repair.v1",
    text: include_str!("../prompts/repair.v1.txt"),
};

pub const CODEGEN: Template = Template {
    name: "codegen.v1",
    text: include_str!("../prompts/codegen.v1.txt"),
};

pub const JUDGE: Template = Template {
    name: "judge.v1",
    text: include_str!("../prompts/judge.v1.txt"),
};
