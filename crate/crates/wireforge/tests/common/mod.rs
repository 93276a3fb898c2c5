#![allow(dead_code)]

use std::path::{Path, PathBuf};

use wireforge::imageio;
use wireforge_core::glyphs::render_letter;
use wireforge_core::Canvas;

/// Writes `X.png`, `Y.png` and `Z.png` letter targets of `size` into `dir`.
pub fn write_letters(dir: &Path, size: usize) -> [PathBuf; 3] {
    let canvas = Canvas::new(size, size, 3.0, 1.0).unwrap();
    ['X', 'Y', 'Z'].map(|ch| {
        let path = dir.join(format!("{ch}.png"));
        imageio::write_image(&render_letter(ch, &canvas).unwrap().unwrap(), &path).unwrap();
        path
    })
}

/// A small offline letters spec; `extra` is appended to the `[optim]` table.
pub fn letters_spec(dir: &Path, size: usize, iterations: usize, extra: &str) -> PathBuf {
    write_letters(dir, size);
    let text = format!(
        r#"out_dir = "out"

[optim]
canvas_size = {size}
n_wires = 8
segments_per_wire = 3
iterations = {iterations}
log_every = 5
{extra}

[views.x]
target = "X.png"

[views.y]
target = "Y.png"

[views.z]
target = "Z.png"
"#
    );
    let path = dir.join("spec.toml");
    std::fs::write(&path, text).unwrap();
    path
}
