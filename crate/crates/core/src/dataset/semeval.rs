//! SemEval-2010 Task 8 text format:
//!
//! ```text
//! 1<TAB>"The system ... an arrayed <e1>configuration</e1> of antenna <e2>elements</e2>."
//! Component-Whole(e2,e1)
//! Comment: Not a whole, just a part.
//!
//! ```
//!
//! Tokenization: split on whitespace, additionally break at every entity
//! marker position, then split one trailing `.`, `!` or `?` off the final
//! token. Marker boundaries always coincide with token boundaries, so entity
//! spans are exact.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use super::{IngestError, RelationInstance, Span, Split};

pub fn load_semeval(path: impl AsRef<Path>, split: Split) -> Result<Vec<RelationInstance>, IngestError> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| IngestError::io(path, e))?;
    parse_semeval(&text, split)
}

pub fn parse_semeval(text: &str, split: Split) -> Result<Vec<RelationInstance>, IngestError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
        .peekable();

    while let Some((lineno, line)) = lines.next() {
        let (id, sentence) = split_sentence_line(line).ok_or_else(|| IngestError::Parse {
            line: lineno,
            message: format!("expected `<number>\\t\"<sentence>\"`, found {line:?}"),
        })?;

        let label = match lines.peek() {
            Some((_, next)) if split_sentence_line(next).is_none() && !is_comment(next) => next.trim().to_string(),
            _ => {
                return Err(IngestError::Parse { line: lineno, message: format!("sentence {id} has no relation line") })
            }
        };
        lines.next();
        while matches!(lines.peek(), Some((_, l)) if is_comment(l)) {
            lines.next();
        }

        let marked = tokenize_marked(sentence)
            .map_err(|message| IngestError::Parse { line: lineno, message: format!("sentence {id}: {message}") })?;
        let inst = RelationInstance {
            id: id.to_string(),
            tokens: marked.tokens,
            head: marked.e1,
            tail: marked.e2,
            head_type: None,
            tail_type: None,
            gold_label: label,
            split,
        };
        inst.validate()?;
        if !seen.insert(inst.id.clone()) {
            return Err(IngestError::DuplicateId { id: inst.id, split: split.to_string() });
        }
        out.push(inst);
    }
    Ok(out)
}

fn is_comment(line: &str) -> bool {
    line.trim_start().starts_with("Comment")
}

fn split_sentence_line(line: &str) -> Option<(&str, &str)> {
    let (num, rest) = line.split_once('\t')?;
    let num = num.trim();
    if num.is_empty() || !num.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    let rest = rest.trim();
    let sentence = rest.strip_prefix('"').and_then(|r| r.strip_suffix('"')).unwrap_or(rest);
    Some((num, sentence))
}

#[derive(Debug, PartialEq, Eq)]
pub(crate) struct MarkedSentence {
    pub tokens: Vec<String>,
    pub e1: Span,
    pub e2: Span,
}

const MARKERS: [(&str, usize); 4] = [("<e1>", 0), ("</e1>", 1), ("<e2>", 2), ("</e2>", 3)];

/// Strips `<e1>..</e1>` / `<e2>..</e2>` and tokenizes the remaining text.
pub(crate) fn tokenize_marked(sentence: &str) -> Result<MarkedSentence, String> {
    let mut plain = String::with_capacity(sentence.len());
    // byte offsets into `plain` for e1 open, e1 close, e2 open, e2 close
    let mut pos: [Option<usize>; 4] = [None; 4];
    let mut rest = sentence;
    'outer: while !rest.is_empty() {
        for (marker, slot) in MARKERS {
            if let Some(after) = rest.strip_prefix(marker) {
                if pos[slot].is_some() {
                    return Err(format!("marker {marker} appears twice"));
                }
                pos[slot] = Some(plain.len());
                rest = after;
                continue 'outer;
            }
        }
        let ch = rest.chars().next().expect("non-empty");
        plain.push(ch);
        rest = &rest[ch.len_utf8()..];
    }

    let [e1_open, e1_close, e2_open, e2_close] = pos;
    let (e1_open, e2_open) = match (e1_open, e2_open) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err("missing opening entity marker".into()),
    };
    let e1_close = e1_close.ok_or("missing closing marker </e1>")?;
    let e2_close = e2_close.ok_or("missing closing marker </e2>")?;
    if e1_close < e1_open || e2_close < e2_open {
        return Err("closing marker precedes its opening marker".into());
    }

    let cuts = [e1_open, e1_close, e2_open, e2_close];
    let mut bounds: Vec<(usize, usize)> = Vec::new();
    let mut start: Option<usize> = None;
    for (i, ch) in plain.char_indices() {
        if cuts.contains(&i) {
            if let Some(s) = start.take() {
                bounds.push((s, i));
            }
        }
        if ch.is_whitespace() {
            if let Some(s) = start.take() {
                bounds.push((s, i));
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        bounds.push((s, plain.len()));
    }

    if let Some(&(s, e)) = bounds.last() {
        let last = &plain[s..e];
        if last.len() > 1 && last.ends_with(['.', '!', '?']) {
            bounds.pop();
            bounds.push((s, e - 1));
            bounds.push((e - 1, e));
        }
    }

    let span_of = |open: usize, close: usize| -> Span {
        let start = bounds.iter().take_while(|(s, _)| *s < open).count();
        let end = bounds.iter().take_while(|(_, e)| *e <= close).count();
        Span::new(start, end)
    };
    let e1 = span_of(e1_open, e1_close);
    let e2 = span_of(e2_open, e2_close);
    let tokens = bounds.iter().map(|&(s, e)| plain[s..e].to_string()).collect();
    Ok(MarkedSentence { tokens, e1, e2 })
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE: &str = "1\t\"The company fabricates <e1>plastic chairs</e1> for the small local <e2>market</e2> here.\"\nProduct-Producer(e1,e2)\nComment:\n\n";

    #[test]
    fn hand_counted_spans() {
        // The(0) company(1) fabricates(2) plastic(3) chairs(4) for(5) the(6)
        // small(7) local(8) market(9) here(10) .(11)
        let out = parse_semeval(ONE, Split::Train).unwrap();
        assert_eq!(out.len(), 1);
        let inst = &out[0];
        assert_eq!(inst.head, Span::new(3, 5));
        assert_eq!(inst.tail, Span::new(9, 10));
        assert_eq!(inst.tokens.len(), 12);
        assert_eq!(inst.tokens[11], ".");
        assert_eq!(inst.head_text(), "plastic chairs");
        assert_eq!(inst.gold_label, "Product-Producer(e1,e2)");
        assert_eq!(inst.id, "1");
        assert!(inst.head_type.is_none());
    }

    #[test]
    fn marker_adjacent_punctuation_becomes_its_own_token() {
        let m = tokenize_marked("an arrayed <e1>configuration</e1>, of <e2>elements</e2>.").unwrap();
        assert_eq!(m.tokens, ["an", "arrayed", "configuration", ",", "of", "elements", "."]);
        assert_eq!(m.e1, Span::new(2, 3));
        assert_eq!(m.e2, Span::new(5, 6));
    }

    #[test]
    fn missing_closing_marker() {
        let text = "7\t\"A <e1>cat</e1> sat on <e2>mats.\"\nOther\n";
        let err = parse_semeval(text, Split::Train).unwrap_err();
        assert!(err.to_string().contains("</e2>"), "{err}");
    }

    #[test]
    fn missing_relation_line() {
        let text = "7\t\"A <e1>cat</e1> sat on <e2>mats</e2>.\"\n\n8\t\"A <e1>b</e1> c <e2>d</e2>.\"\nOther\n";
        let err = parse_semeval(text, Split::Train).unwrap_err();
        assert!(err.to_string().contains("no relation line"), "{err}");
        let eof = "7\t\"A <e1>cat</e1> sat on <e2>mats</e2>.\"\n";
        assert!(parse_semeval(eof, Split::Train).is_err());
    }

    #[test]
    fn multiple_records_and_crlf() {
        let text = "1\t\"<e1>A</e1> b <e2>c</e2>\"\r\nOther\r\nComment: x\r\n\r\n2\t\"<e2>A</e2> b <e1>c</e1>!\"\r\nCause-Effect(e2,e1)\r\n";
        let out = parse_semeval(text, Split::Test).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[1].head, Span::new(2, 3));
        assert_eq!(out[1].tail, Span::new(0, 1));
        assert_eq!(out[1].tokens, ["A", "b", "c", "!"]);
        assert_eq!(out[1].split, Split::Test);
    }

    #[test]
    fn empty_entity_is_invalid() {
        let text = "1\t\"<e1></e1> b <e2>c</e2>\"\nOther\n";
        assert!(matches!(parse_semeval(text, Split::Train), Err(IngestError::InvalidInstance { .. })));
    }
}
