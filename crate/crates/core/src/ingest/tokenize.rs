//! Lowercasing tokenizer that keeps punctuation as separate tokens.

/// Split text into lowercase tokens.
///
/// Runs of alphanumeric characters form words; every other non-whitespace
/// character is its own token. Numbers keep one decimal point (`3.14`) and a
/// leading sign when the sign opens a whitespace-separated chunk (`-2`).
pub fn tokenize(text: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    for chunk in text.split_whitespace() {
        let chars: Vec<char> = chunk.chars().collect();
        let mut i = 0;
        while i < chars.len() {
            let c = chars[i];
            let signed = i == 0
                && (c == '-' || c == '+')
                && chars.get(1).is_some_and(|d| d.is_ascii_digit());
            if c.is_alphanumeric() || signed {
                let start = i;
                i += 1;
                let mut seen_point = false;
                while i < chars.len() {
                    let d = chars[i];
                    if d.is_alphanumeric() {
                        i += 1;
                    } else if d == '.'
                        && !seen_point
                        && is_numeric_run(&chars[start..i])
                        && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit())
                    {
                        seen_point = true;
                        i += 1;
                    } else {
                        break;
                    }
                }
                let word: String = chars[start..i].iter().collect();
                tokens.push(word.to_lowercase());
            } else {
                tokens.push(c.to_lowercase().collect());
                i += 1;
            }
        }
    }
    tokens
}

fn is_numeric_run(chars: &[char]) -> bool {
    let digits = match chars.first() {
        Some('-') | Some('+') => &chars[1..],
        _ => chars,
    };
    !digits.is_empty() && digits.iter().all(|c| c.is_ascii_digit())
}

/// Optional sign, one or more digits, optionally one decimal point followed
/// by digits.
pub fn is_number(token: &str) -> bool {
    let body = token
        .strip_prefix('-')
        .or_else(|| token.strip_prefix('+'))
        .unwrap_or(token);
    let mut parts = body.splitn(2, '.');
    let int = parts.next().unwrap_or("");
    let valid = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    match parts.next() {
        None => valid(int),
        Some(frac) => valid(int) && valid(frac),
    }
}
