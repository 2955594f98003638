//! Binary PPM rendering of an annotated frame, for eyeballing runs.

use crate::model::Gender;
use crate::runtime::trace::AnnotatedFrame;

const BACKGROUND: [u8; 3] = [40, 40, 40];
const TEXT: [u8; 3] = [255, 255, 255];
const PALETTE: [[u8; 3]; 6] = [
    [230, 80, 80],
    [80, 200, 90],
    [90, 140, 240],
    [240, 200, 60],
    [200, 90, 220],
    [70, 210, 210],
];

/// 3x5 glyphs, one row per entry, low three bits used.
fn glyph(c: char) -> [u8; 5] {
    match c {
        '0' => [7, 5, 5, 5, 7],
        '1' => [2, 6, 2, 2, 7],
        '2' => [7, 1, 7, 4, 7],
        '3' => [7, 1, 3, 1, 7],
        '4' => [5, 5, 7, 1, 1],
        '5' => [7, 4, 7, 1, 7],
        '6' => [7, 4, 7, 5, 7],
        '7' => [7, 1, 1, 2, 2],
        '8' => [7, 5, 7, 5, 7],
        '9' => [7, 5, 7, 1, 7],
        'A' => [2, 5, 7, 5, 5],
        'D' => [6, 5, 5, 5, 6],
        'E' => [7, 4, 6, 4, 7],
        'F' => [7, 4, 6, 4, 4],
        'G' => [7, 4, 5, 5, 7],
        'H' => [5, 5, 7, 5, 5],
        'I' => [7, 2, 2, 2, 7],
        'M' => [5, 7, 7, 5, 5],
        'N' => [5, 7, 7, 7, 5],
        'P' => [7, 5, 7, 4, 4],
        'R' => [6, 5, 6, 5, 5],
        'S' => [7, 4, 7, 1, 7],
        'U' => [5, 5, 5, 5, 7],
        '#' => [5, 7, 5, 7, 5],
        _ => [0; 5],
    }
}

struct Canvas {
    width: usize,
    height: usize,
    pixels: Vec<u8>,
}

impl Canvas {
    fn new(width: usize, height: usize) -> Self {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for _ in 0..width * height {
            pixels.extend_from_slice(&BACKGROUND);
        }
        Canvas {
            width,
            height,
            pixels,
        }
    }

    fn put(&mut self, x: i64, y: i64, color: [u8; 3]) {
        if x < 0 || y < 0 || x as usize >= self.width || y as usize >= self.height {
            return;
        }
        let i = (y as usize * self.width + x as usize) * 3;
        self.pixels[i..i + 3].copy_from_slice(&color);
    }

    fn rect(&mut self, x0: i64, y0: i64, x1: i64, y1: i64, color: [u8; 3]) {
        for x in x0..=x1 {
            self.put(x, y0, color);
            self.put(x, y1, color);
        }
        for y in y0..=y1 {
            self.put(x0, y, color);
            self.put(x1, y, color);
        }
    }

    fn text(&mut self, x: i64, y: i64, s: &str, color: [u8; 3]) {
        for (n, c) in s.chars().enumerate() {
            let rows = glyph(c.to_ascii_uppercase());
            let ox = x + 4 * n as i64;
            for (dy, bits) in rows.iter().enumerate() {
                for dx in 0..3 {
                    if bits & (4 >> dx) != 0 {
                        self.put(ox + dx, y + dy as i64, color);
                    }
                }
            }
        }
    }
}

/// Render boxes and labels (`#id age G EXP`) over a flat background.
pub fn render_ppm(frame: &AnnotatedFrame, width: u32, height: u32) -> Vec<u8> {
    let mut canvas = Canvas::new(width as usize, height as usize);
    for t in &frame.tracks {
        let color = PALETTE[(t.track_id as usize) % PALETTE.len()];
        let b = t.bbox;
        let (x0, y0) = (b.x.round() as i64, b.y.round() as i64);
        let (x1, y1) = (
            (b.x + b.w).round() as i64 - 1,
            (b.y + b.h).round() as i64 - 1,
        );
        canvas.rect(x0, y0, x1, y1, color);
        let mut label = format!("#{}", t.track_id);
        if let Some(age) = t.age {
            label.push_str(&format!(" {age}"));
        }
        if let Some(g) = t.gender {
            label.push_str(match g {
                Gender::Female => " F",
                Gender::Male => " M",
            });
        }
        if let Some(e) = t.expression {
            label.push(' ');
            label.push_str(e.short_name());
        }
        let ty = if y0 >= 7 { y0 - 7 } else { y1 + 2 };
        canvas.text(x0, ty, &label, TEXT);
    }
    let mut out = format!("P6\n{} {}\n255\n", width, height).into_bytes();
    out.extend_from_slice(&canvas.pixels);
    out
}
