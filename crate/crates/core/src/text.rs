//! Label normalization, tokenization and stable ids.

/// Lowercase with all whitespace runs collapsed to one space and trimmed.
pub fn normalize(label: &str) -> String {
    label
        .split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}

/// Lowercase alphanumeric tokens.
pub fn tokens(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(str::to_lowercase)
        .collect()
}

/// Tokens joined by `-`; falls back to a hash for text without alphanumerics.
pub fn slug(text: &str) -> String {
    let toks = tokens(text);
    if toks.is_empty() {
        format!("x{:08x}", fnv1a(text.as_bytes()) as u32)
    } else {
        toks.join("-")
    }
}

/// 64-bit FNV-1a.
pub fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// True when `needle` occurs as a contiguous token run inside `haystack`.
pub fn contains_phrase(haystack: &[String], needle: &[String]) -> bool {
    if needle.is_empty() {
        return true;
    }
    haystack.windows(needle.len()).any(|w| w == needle)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn normalize_collapses() {
        assert_eq!(normalize("  Pump \t  Failure\n"), "pump failure");
        assert_eq!(normalize("pump  failure"), normalize("Pump Failure"));
    }

    #[test]
    fn tokens_and_slugs() {
        assert_eq!(
            tokens("Tank-temperature, HIGH!"),
            vec!["tank", "temperature", "high"]
        );
        assert_eq!(slug("Turn off heater"), "turn-off-heater");
        assert!(slug("--").starts_with('x'));
    }

    #[test]
    fn fnv_reference_vectors() {
        assert_eq!(fnv1a(b""), 0xcbf29ce484222325);
        assert_eq!(fnv1a(b"a"), 0xaf63dc4c8601ec8c);
    }

    #[test]
    fn phrase_matching() {
        let hay = tokens("high tank temperature deviation");
        assert!(contains_phrase(&hay, &tokens("tank temperature")));
        assert!(!contains_phrase(&hay, &tokens("temperature tank")));
    }
}
