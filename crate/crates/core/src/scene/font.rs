//! 8×8 bitmap font for the description banner, and a decoder that reads the
//! banner back into text.

use std::collections::HashMap;
use std::sync::OnceLock;

use font8x8::{UnicodeFonts, BASIC_FONTS};

pub const GLYPH: u32 = 8;

/// Glyph rows for `c`; bit 0 of each row is the leftmost pixel. Characters
/// outside printable ASCII render as `?`.
pub fn glyph(c: char) -> [u8; 8] {
    let c = if (' '..='~').contains(&c) { c } else { '?' };
    BASIC_FONTS.get(c).expect("printable ASCII is in the basic set")
}

fn reverse_table() -> &'static HashMap<[u8; 8], char> {
    static TABLE: OnceLock<HashMap<[u8; 8], char>> = OnceLock::new();
    TABLE.get_or_init(|| (' '..='~').map(|c| (glyph(c), c)).collect())
}

/// Character whose glyph is exactly `rows`, if any.
pub fn lookup(rows: &[u8; 8]) -> Option<char> {
    reverse_table().get(rows).copied()
}

/// Greedy word wrap to at most `cols` characters per line. Words longer than a
/// line are split across lines.
pub fn wrap(text: &str, cols: usize) -> Vec<String> {
    let cols = cols.max(1);
    let mut lines = Vec::new();
    let mut line = String::new();
    for word in text.split_whitespace() {
        let mut word: Vec<char> = word.chars().collect();
        let len = line.chars().count();
        if len > 0 && len + 1 + word.len() <= cols {
            line.push(' ');
            line.extend(&word);
            continue;
        }
        if len > 0 {
            lines.push(std::mem::take(&mut line));
        }
        while word.len() > cols {
            lines.push(word.drain(..cols).collect());
        }
        line.extend(word);
    }
    if !line.is_empty() {
        lines.push(line);
    }
    lines
}

/// Reads glyph cells from an RGBA buffer. `ink` is the text color; a cell bit is
/// set when the top-left pixel of its `scale`×`scale` block matches it.
pub struct BannerReader<'a> {
    pub rgba: &'a [u8],
    pub width: u32,
    pub ink: [u8; 3],
    pub scale: u32,
}

impl BannerReader<'_> {
    fn cell(&self, x0: u32, y0: u32) -> [u8; 8] {
        let mut rows = [0u8; 8];
        for (r, row) in rows.iter_mut().enumerate() {
            for c in 0..GLYPH {
                let x = x0 + c * self.scale;
                let y = y0 + r as u32 * self.scale;
                let i = ((y * self.width + x) * 4) as usize;
                if self.rgba[i..i + 3] == self.ink {
                    *row |= 1 << c;
                }
            }
        }
        rows
    }

    /// One text line starting at pixel (x0, y0) with `cols` cells, trailing
    /// blanks trimmed. Unknown cells decode as U+FFFD.
    pub fn line(&self, x0: u32, y0: u32, cols: u32) -> String {
        let step = GLYPH * self.scale;
        let s: String = (0..cols).map(|i| lookup(&self.cell(x0 + i * step, y0)).unwrap_or('\u{FFFD}')).collect();
        s.trim_end().to_string()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn printable_glyphs_are_distinct() {
        assert_eq!(reverse_table().len(), 95);
        assert_eq!(lookup(&glyph('Q')), Some('Q'));
        assert_eq!(glyph('\u{e9}'), glyph('?'));
    }

    #[test]
    fn wrap_rules() {
        assert_eq!(wrap("", 10), Vec::<String>::new());
        assert_eq!(wrap("one two three", 7), vec!["one two", "three"]);
        assert_eq!(wrap("abcdefghij xy", 4), vec!["abcd", "efgh", "ij", "xy"]);
        for line in wrap("a fairly long sentence that must wrap several times", 12) {
            assert!(line.chars().count() <= 12);
        }
    }
}
