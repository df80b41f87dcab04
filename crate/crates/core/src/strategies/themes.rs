//! Fixed instruction banks used to diversify seed generation.

use crate::types::SeedTheme;

const ROLE: &str = include_str!("../../data/themes/role.txt");
const STYLE: &str = include_str!("../../data/themes/style.txt");
const JABBERWOCKY: &str = include_str!("../../data/themes/jabberwocky.txt");

/// All instructions of a bank, in file order. Empty for [`SeedTheme::None`].
pub fn bank(theme: SeedTheme) -> Vec<&'static str> {
    let text = match theme {
        SeedTheme::None => return Vec::new(),
        SeedTheme::Role => ROLE,
        SeedTheme::Style => STYLE,
        SeedTheme::Jabberwocky => JABBERWOCKY,
    };
    text.lines().map(str::trim).filter(|l| !l.is_empty()).collect()
}

/// One instruction per seed, cycling through the bank. Distinct for any
/// `n` up to the bank size.
pub fn instructions(theme: SeedTheme, n: usize) -> Vec<Option<String>> {
    let b = bank(theme);
    (0..n)
        .map(|i| (!b.is_empty()).then(|| b[i % b.len()].to_string()))
        .collect()
}
