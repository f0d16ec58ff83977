use super::{SceneError, SceneGraph};

pub const SCENE_FILE_EXTENSION: &str = ".scene.json";

/// Scene document: pretty JSON, reals at 9 significant digits.
pub fn serialize_scene(scene: &SceneGraph) -> String {
    let mut s = serde_json::to_string_pretty(scene).expect("scene serialisation is infallible");
    s.push('\n');
    s
}

pub fn parse_scene(text: &str) -> Result<SceneGraph, SceneError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let scene: SceneGraph = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        SceneError::Schema { path, message: e.into_inner().to_string() }
    })?;
    scene.validate().map_err(|e| SceneError::Schema { path: ".".into(), message: e.to_string() })?;
    Ok(scene)
}
