/// Multi-word type names that may follow `::`.
const MULTI_WORD_TAILS: [&str; 4] = [" varying", " precision", " without time zone", " with time zone"];

fn skip_cast(chars: &[char], mut i: usize) -> usize {
    // `i` points just past `::`.
    if chars.get(i) == Some(&'"') {
        i += 1;
        while i < chars.len() && chars[i] != '"' {
            i += 1;
        }
        i = (i + 1).min(chars.len());
    } else {
        while i < chars.len() && (chars[i].is_ascii_alphanumeric() || chars[i] == '_' || chars[i] == '.') {
            i += 1;
        }
        loop {
            let rest: String = chars[i..].iter().take(24).collect();
            match MULTI_WORD_TAILS.iter().find(|t| rest.starts_with(*t)) {
                Some(t) => i += t.chars().count(),
                None => break,
            }
        }
    }
    if chars.get(i) == Some(&'(') {
        if let Some(close) = chars[i..].iter().position(|&c| c == ')') {
            let inner = &chars[i + 1..i + close];
            if inner.iter().all(|c| c.is_ascii_digit() || *c == ',' || *c == ' ') {
                i += close + 1;
            }
        }
    }
    while chars.get(i) == Some(&'[') && chars.get(i + 1) == Some(&']') {
        i += 2;
    }
    i
}

/// Removes `::type` casts and collapses whitespace runs to one space, both
/// only outside single-quoted literals, then trims. Idempotent.
pub fn normalize_condition(raw: &str) -> String {
    let chars: Vec<char> = raw.chars().collect();
    let mut out = String::with_capacity(raw.len());
    let mut in_quote = false;
    let mut pending_space = false;
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if in_quote {
            out.push(c);
            if c == '\'' {
                if chars.get(i + 1) == Some(&'\'') {
                    out.push('\'');
                    i += 1;
                } else {
                    in_quote = false;
                }
            }
            i += 1;
            continue;
        }
        if c.is_whitespace() {
            pending_space = true;
            i += 1;
            continue;
        }
        if c == ':' && chars.get(i + 1) == Some(&':') {
            i = skip_cast(&chars, i + 2);
            continue;
        }
        if pending_space && !out.is_empty() {
            out.push(' ');
        }
        pending_space = false;
        if c == '\'' {
            in_quote = true;
        }
        out.push(c);
        i += 1;
    }
    out
}
