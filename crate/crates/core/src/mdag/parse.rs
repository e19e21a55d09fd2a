//! Line-oriented graph specification format.
//!
//! ```text
//! # comments run to end of line
//! node X kind=context;
//! node A^(1) kind=counterfactual;
//! edge X -> A^(1);
//! edge R -> A [det];
//! ```
//!
//! Node names are any run of non-whitespace characters other than `;` and `#`.
//! Kinds: `counterfactual`, `miss`, `proxy`, `context`, `fixed`.

use super::{GraphSpec, NodeKind};
use crate::error::{Error, Result};

struct Token<'a> {
    text: &'a str,
    column: usize,
}

fn parse_error(line: usize, column: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, column, message: message.into() }
}

pub fn parse_graph_spec(text: &str) -> Result<GraphSpec> {
    let mut spec = GraphSpec::default();
    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let body = raw.split('#').next().unwrap_or("");
        let mut offset = 0;
        for stmt in body.split(';') {
            let tokens = tokenize(stmt, offset);
            offset += stmt.len() + 1;
            if tokens.is_empty() {
                continue;
            }
            parse_statement(&tokens, line, &mut spec)?;
        }
    }
    Ok(spec)
}

fn tokenize(stmt: &str, offset: usize) -> Vec<Token<'_>> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, c) in stmt.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = start.take() {
                out.push(Token { text: &stmt[s..i], column: offset + s + 1 });
            }
        } else if start.is_none() {
            start = Some(i);
        }
    }
    if let Some(s) = start {
        out.push(Token { text: &stmt[s..], column: offset + s + 1 });
    }
    out
}

fn parse_statement(tokens: &[Token<'_>], line: usize, spec: &mut GraphSpec) -> Result<()> {
    let head = &tokens[0];
    match head.text {
        "node" => {
            let [_, name, kind] = tokens else {
                let col = tokens.get(1).map_or(head.column, |t| t.column);
                return Err(parse_error(line, col, "expected `node NAME kind=KIND`"));
            };
            let Some(value) = kind.text.strip_prefix("kind=") else {
                return Err(parse_error(line, kind.column, "expected `kind=KIND`"));
            };
            let kind_parsed = NodeKind::from_keyword(value).ok_or_else(|| {
                parse_error(line, kind.column + 5, format!("unknown node kind `{value}`"))
            })?;
            spec.nodes.push((name.text.to_string(), kind_parsed));
        }
        "edge" => {
            let (from, arrow, to, flag) = match tokens {
                [_, f, a, t] => (f, a, t, None),
                [_, f, a, t, d] => (f, a, t, Some(d)),
                _ => return Err(parse_error(line, head.column, "expected `edge A -> B [det]`")),
            };
            if arrow.text != "->" {
                return Err(parse_error(line, arrow.column, "expected `->`"));
            }
            let det = match flag {
                None => false,
                Some(t) if t.text == "[det]" => true,
                Some(t) => return Err(parse_error(line, t.column, "expected `[det]`")),
            };
            spec.edges.push((from.text.to_string(), to.text.to_string(), det));
        }
        other => {
            return Err(parse_error(line, head.column, format!("unknown statement `{other}`")));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_nodes_and_edges() {
        let text = "# graph\nnode X kind=context;\nnode A^(1) kind=counterfactual; edge X -> A^(1);\n\nnode R kind=miss\n";
        let spec = parse_graph_spec(text).unwrap();
        assert_eq!(spec.nodes.len(), 3);
        assert_eq!(spec.nodes[1], ("A^(1)".to_string(), NodeKind::Counterfactual));
        assert_eq!(spec.edges, vec![("X".to_string(), "A^(1)".to_string(), false)]);
    }

    #[test]
    fn det_flag() {
        let spec = parse_graph_spec("edge R -> A [det];").unwrap();
        assert!(spec.edges[0].2);
    }

    #[test]
    fn reports_line_and_column() {
        let err = parse_graph_spec("node X kind=context;\nnode Y kind=bogus;").unwrap_err();
        assert_eq!(
            err,
            Error::Parse { line: 2, column: 13, message: "unknown node kind `bogus`".into() }
        );
        let err = parse_graph_spec("edge X => Y;").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, column: 8, .. }));
        let err = parse_graph_spec("node X kind=context; vertex Y").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, column: 22, .. }));
    }
}
