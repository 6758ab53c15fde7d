//! Prompt templates shipped with the crate. `{query}` is the only
//! placeholder.

use crate::error::{Error, Result};
use crate::ids::RoleId;
use crate::query::QueryItem;
use crate::routing::{EXPLICIT_3D, IMPLICIT_VISUAL, SCENE_GRAPH};

pub const HEAD: &str = include_str!("../../assets/prompts/head.txt");
pub const IMPLICIT_VISUAL_ROLE: &str = include_str!("../../assets/prompts/implicit_visual.txt");
pub const EXPLICIT_3D_ROLE: &str = include_str!("../../assets/prompts/explicit_3d.txt");
pub const SCENE_GRAPH_ROLE: &str = include_str!("../../assets/prompts/scene_graph.txt");
pub const REASONING: &str = include_str!("../../assets/prompts/reasoning.txt");
pub const EXPLICIT_3D_TOOLS: &str = include_str!("../../assets/prompts/tool_explicit_3d.txt");
pub const SCENE_GRAPH_TOOLS: &str = include_str!("../../assets/prompts/tool_scene_graph.txt");

/// (file name, contents) of every shipped template.
pub const ALL: [(&str, &str); 7] = [
    ("head.txt", HEAD),
    ("implicit_visual.txt", IMPLICIT_VISUAL_ROLE),
    ("explicit_3d.txt", EXPLICIT_3D_ROLE),
    ("scene_graph.txt", SCENE_GRAPH_ROLE),
    ("reasoning.txt", REASONING),
    ("tool_explicit_3d.txt", EXPLICIT_3D_TOOLS),
    ("tool_scene_graph.txt", SCENE_GRAPH_TOOLS),
];

pub fn role_template(role: &RoleId) -> Result<&'static str> {
    match role.as_str() {
        IMPLICIT_VISUAL => Ok(IMPLICIT_VISUAL_ROLE),
        EXPLICIT_3D => Ok(EXPLICIT_3D_ROLE),
        SCENE_GRAPH => Ok(SCENE_GRAPH_ROLE),
        other => Err(Error::Config(format!("no prompt template for role {other:?}"))),
    }
}

pub fn render_role_prompt(role: &RoleId, query: &QueryItem) -> Result<String> {
    Ok(role_template(role)?.replace("{query}", &query.display_text()))
}

pub fn render_head_prompt(query: &QueryItem) -> String {
    HEAD.replace("{query}", &query.text)
}

pub fn render_reasoning_prompt(query: &QueryItem) -> String {
    REASONING.replace("{query}", &query.display_text())
}
