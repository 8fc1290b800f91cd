//! `grids/default.json` documents the shipped search grids and is accepted by
//! `qsat train --grids`. It must stay equal to `default_grids()`.

use std::path::PathBuf;

use qsat_core::eval::{default_grids, Grids};

#[test]
fn shipped_grid_file_matches_the_defaults() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("grids/default.json");
    if std::env::var_os("QSAT_UPDATE_GOLDEN").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        let mut text = serde_json::to_string_pretty(&default_grids()).unwrap();
        text.push('\n');
        std::fs::write(&path, text).unwrap();
        return;
    }
    let text = std::fs::read_to_string(&path).unwrap();
    let parsed: Grids = serde_json::from_str(&text).unwrap();
    assert_eq!(parsed, default_grids());
}
