use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::materials::MaterialTable;
use crate::placement::PlacementRules;

const INIT_TEMPLATE: &str = include_str!("../../data/prompts/init.txt");
const POS_TEMPLATE: &str = include_str!("../../data/prompts/pos.txt");
const POS_REPAIR_TEMPLATE: &str = include_str!("../../data/prompts/pos_repair.txt");

/// Separates the text parts of a template file.
const PART_BREAK: &str = "\n---\n";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    /// Material identification and `(c, d)` initial guesses.
    Init,
    /// Transmitter/receiver position selection.
    Pos,
    /// Follow-up asking to replace invalid positions.
    PosRepair,
}

impl TemplateId {
    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::Init => "init",
            TemplateId::Pos => "pos",
            TemplateId::PosRepair => "pos_repair",
        }
    }

    pub fn parse(s: &str) -> Option<TemplateId> {
        [TemplateId::Init, TemplateId::Pos, TemplateId::PosRepair].into_iter().find(|t| t.as_str() == s)
    }

    fn body(self) -> &'static str {
        match self {
            TemplateId::Init => INIT_TEMPLATE,
            TemplateId::Pos => POS_TEMPLATE,
            TemplateId::PosRepair => POS_REPAIR_TEMPLATE,
        }
    }
}

/// Everything a template may need; each template checks for its own inputs.
#[derive(Debug, Clone, Default)]
pub struct PromptInputs<'a> {
    pub table: Option<&'a MaterialTable>,
    pub scene_xml: Option<&'a str>,
    pub n: Option<usize>,
    pub m: Option<usize>,
    pub image: Option<&'a Path>,
    /// One line per rejected position, for the repair template.
    pub invalid: Option<&'a str>,
    pub rules: Option<PlacementRules>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RenderedPrompt {
    pub template: TemplateId,
    pub parts: Vec<String>,
    pub image: Option<PathBuf>,
}

impl RenderedPrompt {
    /// Text parts joined the way replay fixtures store them.
    pub fn request_text(&self) -> String {
        self.parts.join("\n\n")
    }

    /// Hex SHA-256 of [`Self::request_text`]; the image is not hashed.
    pub fn content_hash(&self) -> String {
        hash_text(&self.request_text())
    }
}

pub(crate) fn hash_text(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

pub fn render_prompt(template: TemplateId, inputs: &PromptInputs) -> Result<RenderedPrompt> {
    let mut body = template.body().trim_end().to_string();
    match template {
        TemplateId::Init => {
            let table = inputs.table.ok_or(Error::MissingInput("material table"))?;
            body = body.replace("[ITU_TABLE]", &table.render_dict());
        }
        TemplateId::Pos => {
            let xml = inputs.scene_xml.ok_or(Error::MissingInput("scene xml"))?;
            let n = inputs.n.ok_or(Error::MissingInput("N"))?;
            let m = inputs.m.ok_or(Error::MissingInput("M"))?;
            body = body
                .replace("[SCENE_XML]", xml.trim_end())
                .replace("[N_VALUE]", &n.to_string())
                .replace("[M_VALUE]", &m.to_string());
        }
        TemplateId::PosRepair => {
            let invalid = inputs.invalid.ok_or(Error::MissingInput("invalid positions"))?;
            let n = inputs.n.ok_or(Error::MissingInput("N"))?;
            let m = inputs.m.ok_or(Error::MissingInput("M"))?;
            let r = inputs.rules.unwrap_or_default();
            body = body
                .replace("[INVALID_POSITIONS]", invalid.trim_end())
                .replace("[MARGIN]", &r.margin.to_string())
                .replace("[Z_MIN]", &r.z_min.to_string())
                .replace("[Z_MAX]", &r.z_max.to_string())
                .replace("[SEPARATION]", &r.min_separation.to_string())
                .replace("[N_VALUE]", &n.to_string())
                .replace("[M_VALUE]", &m.to_string());
        }
    }
    Ok(RenderedPrompt {
        template,
        parts: body.split(PART_BREAK).map(|p| p.trim().to_string()).collect(),
        image: inputs.image.map(Path::to_path_buf),
    })
}
