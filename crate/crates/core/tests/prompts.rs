//! Shipped prompt templates and their rendered form are pinned to files
//! under `assets/prompts` and `tests/golden`. Set `UPDATE_GOLDEN=1` to
//! rewrite the rendered files after an intentional template change.

use std::path::PathBuf;

use trustroute::agents::prompts::{render_head_prompt, render_reasoning_prompt, render_role_prompt, ALL};
use trustroute::routing::{EXPLICIT_3D, IMPLICIT_VISUAL, SCENE_GRAPH};
use trustroute::{AnswerKind, Error, QueryItem};

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn fixture() -> QueryItem {
    QueryItem {
        query_id: "golden-1".into(),
        text: "Is the red mug closer to the camera than the laptop?".into(),
        image_ref: Some("images/desk.jpg".into()),
        category_hint: None,
        answer_kind: AnswerKind::Choice,
        options: Some(vec!["yes".into(), "no".into()]),
        ground_truth: None,
    }
}

fn check(name: &str, rendered: &str) {
    let path = root().join("tests/golden").join(name);
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(&path, rendered).unwrap();
    }
    let expected = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(rendered, expected, "{name} drifted from its golden file");
}

#[test]
fn embedded_templates_match_assets() {
    for (name, contents) in ALL {
        let on_disk = std::fs::read(root().join("assets/prompts").join(name)).unwrap();
        assert_eq!(contents.as_bytes(), on_disk.as_slice(), "{name}");
    }
}

#[test]
fn rendered_prompts_match_golden_files() {
    let q = fixture();
    for role in [IMPLICIT_VISUAL, EXPLICIT_3D, SCENE_GRAPH] {
        let text = render_role_prompt(&role.into(), &q).unwrap();
        assert_eq!(text, render_role_prompt(&role.into(), &q).unwrap());
        check(&format!("{role}.txt"), &text);
    }
    check("head.txt", &render_head_prompt(&q));
    check("reasoning.txt", &render_reasoning_prompt(&q));
}

#[test]
fn role_sections() {
    let q = fixture();
    let section = |role: &str| render_role_prompt(&role.into(), &q).unwrap();
    assert!(section(IMPLICIT_VISUAL).contains("PICTORIAL CUES"));
    assert!(section(EXPLICIT_3D).contains("TOOL SUITE"));
    assert!(matches!(render_role_prompt(&"debater".into(), &q), Err(Error::Config(_))));
}
