//! Prose-side cleanup: math segment discovery, tag stripping and spacing.

use std::sync::OnceLock;

use regex::Regex;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Segment<'a> {
    Prose(&'a str),
    Math {
        /// Interior of the formula.
        src: &'a str,
        /// Byte offset of the interior in the scanned text.
        offset: usize,
        /// The formula with its delimiters, as written.
        raw: &'a str,
    },
}

/// Splits text into prose and math. Recognized delimiters are `$...$`, `$$...$$`,
/// `\(...\)` and `\[...\]`; `\$` is a literal dollar. An unclosed opener is prose.
pub fn segments(text: &str) -> Vec<Segment<'_>> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut prose_start = 0;
    let mut i = 0;
    while i < bytes.len() {
        let opener = match bytes[i] {
            b'\\' if i + 1 < bytes.len() => match bytes[i + 1] {
                b'(' => Some(("\\(", "\\)")),
                b'[' => Some(("\\[", "\\]")),
                _ => {
                    // escaped character, including `\$`
                    i += 2;
                    continue;
                }
            },
            b'$' if bytes.get(i + 1) == Some(&b'$') => Some(("$$", "$$")),
            b'$' => Some(("$", "$")),
            _ => None,
        };
        let Some((open, close)) = opener else {
            i += 1;
            continue;
        };
        let start = i + open.len();
        match find_close(bytes, start, close.as_bytes()) {
            Some(end) => {
                if prose_start < i {
                    out.push(Segment::Prose(&text[prose_start..i]));
                }
                out.push(Segment::Math {
                    src: &text[start..end],
                    offset: start,
                    raw: &text[i..end + close.len()],
                });
                i = end + close.len();
                prose_start = i;
            }
            None => i += open.len(),
        }
    }
    if prose_start < text.len() {
        out.push(Segment::Prose(&text[prose_start..]));
    }
    out
}

fn find_close(bytes: &[u8], mut i: usize, close: &[u8]) -> Option<usize> {
    let single_dollar = close == b"$";
    while i < bytes.len() {
        if bytes[i..].starts_with(close) {
            return Some(i);
        }
        if bytes[i] == b'\\' && close[0] == b'$' {
            // inside dollar math a backslash escapes the next character
            i += 2;
            continue;
        }
        if single_dollar && bytes[i] == b'$' {
            return Some(i);
        }
        i += 1;
    }
    None
}

fn tag_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"(?is)<style\b[^>]*>.*?</style\s*>|<script\b[^>]*>.*?</script\s*>|<!--.*?-->|</?[a-z][a-z0-9]*\b[^<>]*>")
            .unwrap()
    })
}

fn br_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?i)<br\s*/?\s*>").unwrap())
}

/// Drops HTML/CSS tags and keeps their inner text; `<br>` becomes a space.
/// Repeats until no tag is left so that stripping is idempotent.
pub fn strip_tags(s: &str) -> String {
    let mut cur = s.replace("&nbsp;", " ");
    loop {
        let next = br_regex().replace_all(&cur, " ");
        let next = tag_regex().replace_all(&next, "").into_owned();
        if next == cur {
            return cur;
        }
        cur = next;
    }
}

const NO_SPACE_BEFORE: &str = ",.;:!?)]}，。；：！？、）】";
const NO_SPACE_AFTER: &str = ",;([{，。；：！？、（【";

/// Collapses whitespace runs to one space and drops spaces that touch
/// punctuation. `trim_start`/`trim_end` drop spaces at the text boundary.
pub fn normalize_spacing(s: &str, trim_start: bool, trim_end: bool) -> String {
    let mut collapsed = String::with_capacity(s.len());
    let mut pending_space = false;
    for c in s.chars() {
        if c.is_whitespace() {
            pending_space = true;
            continue;
        }
        if pending_space {
            let after_punct = collapsed.chars().last().is_some_and(|p| NO_SPACE_AFTER.contains(p));
            if !NO_SPACE_BEFORE.contains(c) && !after_punct {
                collapsed.push(' ');
            }
            pending_space = false;
        }
        collapsed.push(c);
    }
    if pending_space {
        let after_punct = collapsed.chars().last().is_some_and(|p| NO_SPACE_AFTER.contains(p));
        if !after_punct {
            collapsed.push(' ');
        }
    }
    if trim_start && collapsed.starts_with(' ') {
        collapsed.remove(0);
    }
    if trim_end && collapsed.ends_with(' ') {
        collapsed.pop();
    }
    collapsed
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_inline_and_display_math() {
        let segs = segments(r"a $x$ b $$y$$ c \(z\) \[w\]");
        let maths: Vec<&str> = segs
            .iter()
            .filter_map(|s| match s {
                Segment::Math { src, .. } => Some(*src),
                _ => None,
            })
            .collect();
        assert_eq!(maths, ["x", "y", "z", "w"]);
    }

    #[test]
    fn escaped_and_unclosed_dollars_are_prose() {
        assert_eq!(segments(r"costs \$5"), vec![Segment::Prose(r"costs \$5")]);
        assert_eq!(segments("costs $5"), vec![Segment::Prose("costs $5")]);
    }

    #[test]
    fn escaped_dollar_inside_math() {
        let segs = segments(r"$a\$b$ c");
        assert!(matches!(segs[0], Segment::Math { src: r"a\$b", offset: 1, .. }));
    }

    #[test]
    fn adjacent_formulas() {
        let segs = segments("$a$$b$");
        assert_eq!(segs.len(), 2);
    }

    #[test]
    fn strips_tags_and_styles() {
        assert_eq!(strip_tags(r#"<p style="color:red">hi</p>"#), "hi");
        assert_eq!(strip_tags("a<br/>b"), "a b");
        assert_eq!(strip_tags("<style>.x{}</style>ok"), "ok");
        assert_eq!(strip_tags("<<b>i>x"), "x");
        assert_eq!(strip_tags("x < 3 and y > 2"), "x < 3 and y > 2");
    }

    #[test]
    fn spacing() {
        assert_eq!(normalize_spacing("  If   x ,  y ", true, true), "If x,y");
        assert_eq!(normalize_spacing("radicals, find", true, true), "radicals,find");
        assert_eq!(normalize_spacing(" and ", false, false), " and ");
        assert_eq!(normalize_spacing("end. Next", true, true), "end. Next");
    }
}
