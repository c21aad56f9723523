/// Words and numbers as tokens, every other non-space character on its own.
/// A `.` or `,` between two digits stays inside the number.
pub fn bleu_tokens(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut current = String::new();
    for (i, &c) in chars.iter().enumerate() {
        let inside_number = matches!(c, '.' | ',')
            && i > 0
            && chars[i - 1].is_ascii_digit()
            && chars.get(i + 1).is_some_and(|n| n.is_ascii_digit())
            && !current.is_empty();
        if c.is_alphanumeric() || inside_number {
            current.push(c);
            continue;
        }
        if !current.is_empty() {
            tokens.push(std::mem::take(&mut current));
        }
        if !c.is_whitespace() {
            tokens.push(c.to_string());
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

pub fn sari_tokens(text: &str) -> Vec<String> {
    bleu_tokens(&text.to_lowercase())
}

pub use crate::text::lower_tokens as rouge_tokens;
