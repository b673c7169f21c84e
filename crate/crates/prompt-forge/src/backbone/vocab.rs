//! Shared token vocabulary: four specials plus 50 single-character content
//! symbols (`a..y`, `A..Y`). Token text is whitespace-separated in all file
//! formats.

pub const PAD: usize = 0;
pub const BOS: usize = 1;
pub const EOS: usize = 2;
pub const MASK: usize = 3;

pub const CONTENT_BASE: usize = 4;
pub const CONTENT_COUNT: usize = 50;

/// Smallest vocab that can hold the specials and the content alphabet.
pub const MIN_VOCAB: usize = CONTENT_BASE + CONTENT_COUNT;

const SPECIAL_STRS: [&str; 4] = ["<pad>", "<bos>", "<eos>", "<mask>"];

/// Printable form of a token id, if it names a real token.
pub fn token_str(id: usize) -> Option<String> {
    if id < CONTENT_BASE {
        return Some(SPECIAL_STRS[id].to_string());
    }
    let k = id - CONTENT_BASE;
    if k < 25 {
        Some(((b'a' + k as u8) as char).to_string())
    } else if k < CONTENT_COUNT {
        Some(((b'A' + (k - 25) as u8) as char).to_string())
    } else {
        None
    }
}

/// Token id for a printable token, if known.
pub fn token_id(s: &str) -> Option<usize> {
    if let Some(pos) = SPECIAL_STRS.iter().position(|t| *t == s) {
        return Some(pos);
    }
    let mut chars = s.chars();
    let c = chars.next()?;
    if chars.next().is_some() {
        return None;
    }
    match c {
        'a'..='y' => Some(CONTENT_BASE + (c as usize - 'a' as usize)),
        'A'..='Y' => Some(CONTENT_BASE + 25 + (c as usize - 'A' as usize)),
        _ => None,
    }
}

/// All content token ids.
pub fn content_ids() -> Vec<usize> {
    (CONTENT_BASE..CONTENT_BASE + CONTENT_COUNT).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ids_and_strings_are_inverse() {
        for id in 0..MIN_VOCAB {
            let s = token_str(id).unwrap();
            assert_eq!(token_id(&s), Some(id), "token {s}");
        }
        assert_eq!(token_str(MIN_VOCAB), None);
        assert_eq!(token_id("zz"), None);
        assert_eq!(token_id("z"), None);
    }
}
