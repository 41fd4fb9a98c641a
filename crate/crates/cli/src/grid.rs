//! Side-by-side panel grids with a text label above each panel.

use dtstyle::Image;

const GLYPH_W: usize = 3;
const GLYPH_H: usize = 5;
const SCALE: usize = 2;
const MARGIN: usize = 6;

/// 3x5 glyphs, one row per entry, most significant bit on the left.
fn glyph(c: char) -> [u8; GLYPH_H] {
    match c.to_ascii_uppercase() {
        '0' => [0b111, 0b101, 0b101, 0b101, 0b111],
        '1' => [0b010, 0b110, 0b010, 0b010, 0b111],
        '2' => [0b111, 0b001, 0b111, 0b100, 0b111],
        '3' => [0b111, 0b001, 0b111, 0b001, 0b111],
        '4' => [0b101, 0b101, 0b111, 0b001, 0b001],
        '5' => [0b111, 0b100, 0b111, 0b001, 0b111],
        '6' => [0b111, 0b100, 0b111, 0b101, 0b111],
        '7' => [0b111, 0b001, 0b010, 0b010, 0b010],
        '8' => [0b111, 0b101, 0b111, 0b101, 0b111],
        '9' => [0b111, 0b101, 0b111, 0b001, 0b111],
        '.' => [0b000, 0b000, 0b000, 0b000, 0b010],
        '-' => [0b000, 0b000, 0b111, 0b000, 0b000],
        '+' => [0b000, 0b010, 0b111, 0b010, 0b000],
        '=' => [0b000, 0b111, 0b000, 0b111, 0b000],
        '/' => [0b001, 0b001, 0b010, 0b100, 0b100],
        'A' => [0b010, 0b101, 0b111, 0b101, 0b101],
        'B' => [0b110, 0b101, 0b110, 0b101, 0b110],
        'E' => [0b111, 0b100, 0b110, 0b100, 0b111],
        'G' => [0b111, 0b100, 0b101, 0b101, 0b111],
        'N' => [0b101, 0b111, 0b111, 0b101, 0b101],
        _ => [0; GLYPH_H],
    }
}

fn label_width(text: &str) -> usize {
    let n = text.chars().count();
    (n * (GLYPH_W + 1)).saturating_sub(1) * SCALE
}

/// True where `text`, drawn at the origin, covers pixel (x, y).
fn label_ink(text: &str, x: usize, y: usize) -> bool {
    let (gx, gy) = (x / SCALE, y / SCALE);
    if gy >= GLYPH_H {
        return false;
    }
    let (slot, col) = (gx / (GLYPH_W + 1), gx % (GLYPH_W + 1));
    if col == GLYPH_W {
        return false;
    }
    text.chars()
        .nth(slot)
        .is_some_and(|c| glyph(c)[gy] >> (GLYPH_W - 1 - col) & 1 == 1)
}

/// Panels in one row on white, each with its label centred above it.
/// Panels of different sizes are top-aligned.
pub fn compose(panels: &[(String, Image)]) -> Image {
    let label_h = GLYPH_H * SCALE;
    let top = MARGIN + label_h + MARGIN;
    let cell_w: Vec<usize> = panels
        .iter()
        .map(|(l, p)| p.width().max(label_width(l)))
        .collect();
    let width = MARGIN + cell_w.iter().map(|w| w + MARGIN).sum::<usize>();
    let height = top + panels.iter().map(|(_, p)| p.height()).max().unwrap_or(0) + MARGIN;

    let mut lookup = Vec::with_capacity(panels.len());
    let mut x0 = MARGIN;
    for ((label, panel), &cw) in panels.iter().zip(&cell_w) {
        lookup.push((x0, cw, label.as_str(), panel));
        x0 += cw + MARGIN;
    }
    Image::from_fn(width, height, |x, y| {
        let Some(&(cx, cw, label, panel)) = lookup.iter().find(|(cx, cw, ..)| x >= *cx && x < cx + cw)
        else {
            return [255; 3];
        };
        let lx = cx + (cw - label_width(label)) / 2;
        if y >= MARGIN && y < MARGIN + label_h && x >= lx {
            return if label_ink(label, x - lx, y - MARGIN) { [0; 3] } else { [255; 3] };
        }
        let px = cx + (cw - panel.width()) / 2;
        if y >= top && y < top + panel.height() && x >= px && x < px + panel.width() {
            return panel.pixel(x - px, y - top);
        }
        [255; 3]
    })
    .expect("grid has positive size")
}
