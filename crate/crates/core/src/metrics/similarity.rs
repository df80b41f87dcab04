//! Pairwise text similarity measures used to quantify candidate diversity.

use std::collections::{BTreeMap, HashMap};
use std::sync::LazyLock;

use regex::Regex;

static WORD: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\w+").unwrap());

/// Edit distance over Unicode scalar values.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    if a.is_empty() {
        return b.len();
    }
    let mut row: Vec<usize> = (0..=b.len()).collect();
    for (i, ca) in a.iter().enumerate() {
        let mut diag = row[0];
        row[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let up = row[j + 1];
            row[j + 1] = if ca == cb { diag } else { 1 + diag.min(up).min(row[j]) };
            diag = up;
        }
    }
    row[b.len()]
}

/// `1 - distance / max(len)`; two empty strings are identical.
pub fn levenshtein_sim(a: &str, b: &str) -> f64 {
    let m = a.chars().count().max(b.chars().count());
    if m == 0 {
        return 1.0;
    }
    1.0 - levenshtein(a, b) as f64 / m as f64
}

/// Matching-block sequence matcher without junk heuristics.
struct Matcher<'a, T> {
    a: &'a [T],
    b: &'a [T],
    b2j: HashMap<&'a T, Vec<usize>>,
}

impl<'a, T: Eq + std::hash::Hash> Matcher<'a, T> {
    fn new(a: &'a [T], b: &'a [T]) -> Self {
        let mut b2j: HashMap<&T, Vec<usize>> = HashMap::new();
        for (j, t) in b.iter().enumerate() {
            b2j.entry(t).or_default().push(j);
        }
        Self { a, b, b2j }
    }

    fn longest(&self, alo: usize, ahi: usize, blo: usize, bhi: usize) -> (usize, usize, usize) {
        let (mut bi, mut bj, mut size) = (alo, blo, 0);
        let mut j2len: HashMap<usize, usize> = HashMap::new();
        for i in alo..ahi {
            let mut next = HashMap::new();
            if let Some(js) = self.b2j.get(&self.a[i]) {
                for &j in js {
                    if j < blo {
                        continue;
                    }
                    if j >= bhi {
                        break;
                    }
                    let k = j.checked_sub(1).and_then(|p| j2len.get(&p)).copied().unwrap_or(0) + 1;
                    next.insert(j, k);
                    if k > size {
                        bi = i + 1 - k;
                        bj = j + 1 - k;
                        size = k;
                    }
                }
            }
            j2len = next;
        }
        while bi > alo && bj > blo && self.a[bi - 1] == self.b[bj - 1] {
            bi -= 1;
            bj -= 1;
            size += 1;
        }
        while bi + size < ahi && bj + size < bhi && self.a[bi + size] == self.b[bj + size] {
            size += 1;
        }
        (bi, bj, size)
    }

    fn matched(&self) -> usize {
        let mut total = 0;
        let mut stack = vec![(0, self.a.len(), 0, self.b.len())];
        while let Some((alo, ahi, blo, bhi)) = stack.pop() {
            let (i, j, k) = self.longest(alo, ahi, blo, bhi);
            if k == 0 {
                continue;
            }
            total += k;
            if alo < i && blo < j {
                stack.push((alo, i, blo, j));
            }
            if i + k < ahi && j + k < bhi {
                stack.push((i + k, ahi, j + k, bhi));
            }
        }
        total
    }
}

/// `2·M / (|a| + |b|)` over whitespace tokens, where `M` counts tokens in
/// recursively found longest matching blocks. Block search depends on
/// argument order, so the lexicographically smaller token list goes first.
pub fn token_seq_sim(a: &str, b: &str) -> f64 {
    let mut ta: Vec<&str> = a.split_whitespace().collect();
    let mut tb: Vec<&str> = b.split_whitespace().collect();
    if tb < ta {
        std::mem::swap(&mut ta, &mut tb);
    }
    let n = ta.len() + tb.len();
    if n == 0 {
        return 1.0;
    }
    2.0 * Matcher::new(&ta, &tb).matched() as f64 / n as f64
}

/// Pairwise tf-idf cosine matrix for `docs`, with the corpus being `docs`
/// itself. Terms are `\w+` runs (case kept), idf is `ln((1+N)/(1+df)) + 1`,
/// rows are L2-normalised. A document without terms has similarity 0 to
/// everything, itself included.
pub fn tfidf_matrix(docs: &[&str]) -> Vec<Vec<f64>> {
    let counts: Vec<BTreeMap<&str, f64>> = docs
        .iter()
        .map(|d| {
            let mut m = BTreeMap::new();
            for w in WORD.find_iter(d) {
                *m.entry(w.as_str()).or_insert(0.0) += 1.0;
            }
            m
        })
        .collect();
    let mut df: BTreeMap<&str, f64> = BTreeMap::new();
    for c in &counts {
        for t in c.keys() {
            *df.entry(t).or_insert(0.0) += 1.0;
        }
    }
    let n = docs.len() as f64;
    let vectors: Vec<BTreeMap<&str, f64>> = counts
        .into_iter()
        .map(|c| {
            let mut v: BTreeMap<&str, f64> = c
                .into_iter()
                .map(|(t, tf)| (t, tf * (((1.0 + n) / (1.0 + df[t])).ln() + 1.0)))
                .collect();
            let norm = v.values().map(|x| x * x).sum::<f64>().sqrt();
            if norm > 0.0 {
                v.values_mut().for_each(|x| *x /= norm);
            }
            v
        })
        .collect();
    vectors
        .iter()
        .map(|a| {
            vectors
                .iter()
                .map(|b| a.iter().filter_map(|(t, x)| b.get(t).map(|y| x * y)).sum::<f64>())
                .collect()
        })
        .collect()
}

/// Cosine similarity of two dense vectors; 0 when either is zero.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Mean of `f` over unordered pairs, which equals the mean over ordered
/// pairs for symmetric measures. `None` with fewer than two items.
pub fn mean_pairwise<T, F: FnMut(&T, &T) -> f64>(items: &[T], mut f: F) -> Option<f64> {
    if items.len() < 2 {
        return None;
    }
    let mut sum = 0.0;
    let mut n = 0usize;
    for i in 0..items.len() {
        for j in i + 1..items.len() {
            sum += f(&items[i], &items[j]);
            n += 1;
        }
    }
    Some(sum / n as f64)
}
