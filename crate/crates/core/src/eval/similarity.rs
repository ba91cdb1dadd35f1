//! Ratcliff/Obershelp sequence similarity over characters, with the same
//! longest-match tie-breaking as Python's `difflib.SequenceMatcher` (no junk
//! heuristic).

/// Longest common block in `a[alo..ahi]` × `b[blo..bhi]`, earliest in `a`
/// then earliest in `b` among equally long blocks.
fn longest_match(a: &[char], b: &[char], alo: usize, ahi: usize, blo: usize, bhi: usize) -> (usize, usize, usize) {
    let (mut bi, mut bj, mut best) = (alo, blo, 0);
    // run[j + 1] = length of the common suffix ending at (i - 1, j)
    let mut run = vec![0usize; bhi - blo + 1];
    let mut next = vec![0usize; bhi - blo + 1];
    for i in alo..ahi {
        for j in blo..bhi {
            let k = if a[i] == b[j] { run[j - blo] + 1 } else { 0 };
            next[j - blo + 1] = k;
            if k > best {
                bi = i + 1 - k;
                bj = j + 1 - k;
                best = k;
            }
        }
        std::mem::swap(&mut run, &mut next);
    }
    (bi, bj, best)
}

/// Total characters in the recursive matching blocks.
pub fn matched_chars(a: &[char], b: &[char]) -> usize {
    let mut total = 0;
    let mut stack = vec![(0, a.len(), 0, b.len())];
    while let Some((alo, ahi, blo, bhi)) = stack.pop() {
        if alo >= ahi || blo >= bhi {
            continue;
        }
        let (i, j, k) = longest_match(a, b, alo, ahi, blo, bhi);
        if k == 0 {
            continue;
        }
        total += k;
        stack.push((alo, i, blo, j));
        stack.push((i + k, ahi, j + k, bhi));
    }
    total
}

/// `2M / (|a| + |b|)`; 1.0 when both are empty.
pub fn ocr_similarity(a: &str, b: &str) -> f64 {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() && b.is_empty() {
        return 1.0;
    }
    2.0 * matched_chars(&a, &b) as f64 / (a.len() + b.len()) as f64
}
